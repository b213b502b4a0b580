use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Wraps an error raised while processing a particular layer.
    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("targets do not match loss: {0}")]
    Target(String),

    #[error("IDX parse error at byte offset {offset}: {reason}")]
    Idx { offset: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_layer(self, layer: usize) -> Self {
        match self {
            e @ Error::Layer { .. } => e,
            e => Error::Layer {
                layer,
                source: Box::new(e),
            },
        }
    }

    /// The layer index carried by this error, if any.
    pub fn layer(&self) -> Option<usize> {
        match self {
            Error::Layer { layer, .. } => Some(*layer),
            _ => None,
        }
    }

    /// True when the root cause is a non-finite number.
    pub fn is_non_finite(&self) -> bool {
        match self {
            Error::NonFinite(_) => true,
            Error::Layer { source, .. } => source.is_non_finite(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            found,
        })
    }
}
