use crate::error::{Error, Result};

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub passed: bool,
    /// Largest `|a − b| / max(|a|, |b|, 1e-8)` over coordinates.
    pub worst_rel_error: f64,
    pub worst_index: Option<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Relative error with the `1e-8` floor used throughout the checks.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp)?;
        xp[i] = orig - h;
        let fm = f(&xp)?;
        xp[i] = orig;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::NonFinite("finite-difference evaluation"));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Checks `analytic` (the gradient claimed at `x`) against central
/// differences of `f`.
pub fn gradient_check(
    f: impl FnMut(&[f64]) -> Result<f64>,
    analytic: &[f64],
    x: &[f64],
    h: f64,
    tol: f64,
) -> Result<GradCheck> {
    if analytic.len() != x.len() {
        return Err(Error::Shape {
            what: "analytic gradient",
            expected: x.len(),
            found: analytic.len(),
        });
    }
    if analytic.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("analytic gradient"));
    }
    let numeric = central_difference(f, x, h)?;
    let mut worst = 0.0;
    let mut worst_index = None;
    for (i, (&a, &b)) in analytic.iter().zip(&numeric).enumerate() {
        let e = rel_error(a, b);
        if e > worst || worst_index.is_none() {
            worst = e.max(worst);
            worst_index = Some(i);
        }
    }
    Ok(GradCheck {
        passed: worst < tol,
        worst_rel_error: worst,
        worst_index,
        analytic: analytic.to_vec(),
        numeric,
    })
}

/// Convenience form: `fg` returns value and gradient together.
pub fn check_value_and_grad(
    mut fg: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    x: &[f64],
    h: f64,
    tol: f64,
) -> Result<GradCheck> {
    let (_, g) = fg(x)?;
    gradient_check(|y| fg(y).map(|(v, _)| v), &g, x, h, tol)
}
