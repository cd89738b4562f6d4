/// Logistic function `1 / (1 + e^-x)`, evaluated on the branch that never
/// exponentiates a positive argument.
#[inline]
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Returns `(log σ(x), log(1 - σ(x)))`.
///
/// Both halves are computed through [`softplus`], so the first output at `x`
/// is bit-identical to the second output at `-x`.
#[inline]
pub fn log_sigmoid_pair(x: f64) -> (f64, f64) {
    (-softplus(-x), -softplus(x))
}
