use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// `x + δ·σ(Wx + b)`
    ResidualDense,
    /// `x + δ·σ(W ⋆ x + b)` with a same-padded 3×3 convolution.
    ResidualConv2d,
    /// Non-residual input map: dense `σ(Wx + b)`, or conv → σ → 2×2 max-pool
    /// when conv metadata is present.
    Projection,
    /// Affine logits `Wx + b`.
    Classifier,
}

impl LayerKind {
    pub fn is_residual(self) -> bool {
        matches!(self, LayerKind::ResidualDense | LayerKind::ResidualConv2d)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn eval<T: crate::Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// `(σ(z), σ'(z), σ''(z))`
    #[inline]
    pub fn derivs<T: crate::Scalar>(self, z: T) -> (T, T, T) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = T::one() - t * t;
                (t, d1, -T::two() * t * d1)
            }
            Activation::Identity => (z, T::one(), T::zero()),
        }
    }
}

/// Geometry of a convolutional layer. Samples are laid out channel-major
/// (`c × h × w`, row-major within a channel).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Input spatial height.
    pub height: usize,
    /// Input spatial width.
    pub width: usize,
    /// Square kernel side; odd, stride 1, zero padding `kernel / 2`.
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    /// 2×2 max-pool after the activation.
    #[serde(default)]
    pub pool: bool,
}

fn default_kernel() -> usize {
    3
}

impl ConvShape {
    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    /// Length of the pre-activation (before pooling).
    pub fn conv_len(&self) -> usize {
        self.out_channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        if self.pool {
            self.out_channels * (self.height / 2) * (self.width / 2)
        } else {
            self.conv_len()
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Step size; only meaningful for residual kinds.
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<ConvShape>,
}

fn one() -> f64 {
    1.0
}

impl LayerSpec {
    pub fn residual_dense(dim: usize, delta: f64) -> Self {
        Self {
            kind: LayerKind::ResidualDense,
            in_dim: dim,
            out_dim: dim,
            delta,
            activation: Activation::Tanh,
            conv: None,
        }
    }

    pub fn residual_conv2d(channels: usize, height: usize, width: usize, delta: f64) -> Self {
        let shape = ConvShape {
            in_channels: channels,
            out_channels: channels,
            height,
            width,
            kernel: 3,
            pool: false,
        };
        Self {
            kind: LayerKind::ResidualConv2d,
            in_dim: shape.input_len(),
            out_dim: shape.output_len(),
            delta,
            activation: Activation::Tanh,
            conv: Some(shape),
        }
    }

    pub fn dense_projection(in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind: LayerKind::Projection,
            in_dim,
            out_dim,
            delta: 1.0,
            activation: Activation::Tanh,
            conv: None,
        }
    }

    pub fn conv_projection(
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
    ) -> Self {
        let shape = ConvShape {
            in_channels,
            out_channels,
            height,
            width,
            kernel: 3,
            pool: true,
        };
        Self {
            kind: LayerKind::Projection,
            in_dim: shape.input_len(),
            out_dim: shape.output_len(),
            delta: 1.0,
            activation: Activation::Tanh,
            conv: Some(shape),
        }
    }

    pub fn classifier(in_dim: usize, classes: usize) -> Self {
        Self {
            kind: LayerKind::Classifier,
            in_dim,
            out_dim: classes,
            delta: 1.0,
            activation: Activation::Identity,
            conv: None,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// The step size that scales both the residual increment and the
    /// running cost; 1 for non-residual kinds.
    pub fn effective_delta(&self) -> f64 {
        if self.kind.is_residual() {
            self.delta
        } else {
            1.0
        }
    }

    /// Activation actually applied (classifiers are always affine).
    pub fn effective_activation(&self) -> Activation {
        match self.kind {
            LayerKind::Classifier => Activation::Identity,
            _ => self.activation,
        }
    }

    pub fn is_conv(&self) -> bool {
        self.conv.is_some()
    }

    /// Length of the weight block (the bias follows it in the flat vector).
    pub fn weight_len(&self) -> usize {
        match &self.conv {
            Some(c) => c.weight_len(),
            None => self.in_dim * self.out_dim,
        }
    }

    /// Number of bias entries (one per output unit or output channel).
    pub fn bias_len(&self) -> usize {
        match &self.conv {
            Some(c) => c.out_channels,
            None => self.out_dim,
        }
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.bias_len()
    }

    /// Dimension of the pre-activation `z`.
    pub fn preact_len(&self) -> usize {
        match &self.conv {
            Some(c) => c.conv_len(),
            None => self.out_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.in_dim == 0 || self.out_dim == 0 {
            return bad("layer dimensions must be positive".into());
        }
        if self.kind.is_residual() {
            if self.in_dim != self.out_dim {
                return bad(format!(
                    "residual layer needs in_dim == out_dim, got {} -> {}",
                    self.in_dim, self.out_dim
                ));
            }
            if !(self.delta > 0.0 && self.delta.is_finite()) {
                return bad(format!("residual layer needs delta > 0, got {}", self.delta));
            }
        }
        match (self.kind, &self.conv) {
            (LayerKind::ResidualConv2d, None) => {
                return bad("residual_conv2d layer requires conv metadata".into())
            }
            (LayerKind::ResidualDense | LayerKind::Classifier, Some(_)) => {
                return bad(format!("{:?} layer takes no conv metadata", self.kind))
            }
            _ => {}
        }
        if let Some(c) = &self.conv {
            if c.kernel % 2 == 0 || c.kernel == 0 {
                return bad(format!("conv kernel must be odd, got {}", c.kernel));
            }
            if c.in_channels == 0 || c.out_channels == 0 || c.height == 0 || c.width == 0 {
                return bad("conv geometry must be positive".into());
            }
            if self.kind == LayerKind::ResidualConv2d && (c.pool || c.in_channels != c.out_channels)
            {
                return bad("residual conv layers preserve channels and do not pool".into());
            }
            if c.pool && (c.height < 2 || c.width < 2) {
                return bad("max-pool needs spatial size of at least 2".into());
            }
            if c.input_len() != self.in_dim || c.output_len() != self.out_dim {
                return bad(format!(
                    "conv geometry implies {} -> {}, layer declares {} -> {}",
                    c.input_len(),
                    c.output_len(),
                    self.in_dim,
                    self.out_dim
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(Σᵢ xᵢ − y)²` against a scalar target.
    SumSquaredScalarTarget,
    /// Softmax cross-entropy against a class index.
    SoftmaxCrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
    /// Coefficient of the running cost `L(ϑ) = weight·‖ϑ‖²`.
    #[serde(default)]
    pub regularizer_weight: f64,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, loss: LossKind) -> Result<Self> {
        let spec = Self {
            layers,
            loss,
            regularizer_weight: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_regularizer(mut self, weight: f64) -> Result<Self> {
        self.regularizer_weight = weight;
        self.validate()?;
        Ok(self)
    }

    /// Residual tanh stack of `depth` layers on `R^dim`, the sine-regression
    /// architecture.
    pub fn residual_stack(dim: usize, depth: usize, delta: f64, loss: LossKind) -> Result<Self> {
        Self::new(
            (0..depth)
                .map(|_| LayerSpec::residual_dense(dim, delta))
                .collect(),
            loss,
        )
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Empty("network has no layers"));
        }
        if !(self.regularizer_weight >= 0.0 && self.regularizer_weight.is_finite()) {
            return Err(Error::Invalid(format!(
                "regularizer weight must be nonnegative, got {}",
                self.regularizer_weight
            )));
        }
        for (n, l) in self.layers.iter().enumerate() {
            l.validate().map_err(|e| e.at_layer(n))?;
        }
        for (n, w) in self.layers.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Invalid(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    n,
                    w[0].out_dim,
                    n + 1,
                    w[1].in_dim
                )));
            }
        }
        if self.loss == LossKind::SoftmaxCrossEntropy && self.output_dim() < 2 {
            return Err(Error::Invalid(
                "cross-entropy needs at least two output classes".into(),
            ));
        }
        Ok(())
    }
}
