//! Scalar losses with their derivatives.

use super::tape::sigmoid;

/// `max(0, -y (s1 - s2) + m)`.
pub fn margin_ranking_loss(s1: f64, s2: f64, y: f64, margin: f64) -> f64 {
    (-y * (s1 - s2) + margin).max(0.0)
}

/// Derivatives of [`margin_ranking_loss`] with respect to `(s1, s2)`. The
/// hinge corner counts as inactive.
pub fn margin_ranking_grad(s1: f64, s2: f64, y: f64, margin: f64) -> (f64, f64) {
    if -y * (s1 - s2) + margin > 0.0 {
        (-y, y)
    } else {
        (0.0, 0.0)
    }
}

/// Binary cross-entropy on a logit, `max(z, 0) - z y + ln(1 + e^-|z|)`.
pub fn bce_with_logits(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

pub fn bce_with_logits_grad(logit: f64, label: f64) -> f64 {
    sigmoid(logit) - label
}
