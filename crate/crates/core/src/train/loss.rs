//! Class-balanced focal loss.
//!
//! The weight of class y is the inverse expected number of effective samples
//! `(1 - beta) / (1 - beta^{n_y})`, and the focal term `(1 - p_y)^gamma`
//! down-weights confidently classified examples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::softmax2;
use crate::scalar::Scalar;

/// Floor applied to log-probabilities: `ln p` is clamped at -50.
pub const LOG_FLOOR: f64 = -50.0;

/// Expected number of effective samples `(1 - beta^n) / (1 - beta)`,
/// stabilized through `ln_1p`/`exp_m1` so beta near one stays accurate.
pub fn expected_number(n: usize, beta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Config(format!("beta {beta} must lie in [0, 1)")));
    }
    if n == 1 {
        // Exact by definition; the stabilized path below can be off by an ulp.
        return Ok(1.0);
    }
    // (1 - beta^n) / (1 - beta) = expm1(n ln(1 + (beta-1))) / (beta - 1)
    let d = beta - 1.0;
    Ok((n as f64 * d.ln_1p()).exp_m1() / d)
}

/// Loss hyperparameters plus the training-split class counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta: f64,
    pub gamma: f64,
    /// (normal, anomalous) counts from the training split.
    pub class_counts: (usize, usize),
}

impl LossConfig {
    pub fn new(beta: f64, gamma: f64, class_counts: (usize, usize)) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!("beta {beta} must lie in [0, 1)")));
        }
        if gamma < 0.0 {
            return Err(Error::Config(format!("gamma {gamma} must be non-negative")));
        }
        if class_counts.0 == 0 || class_counts.1 == 0 {
            return Err(Error::Config(format!(
                "both classes need at least one member, got {class_counts:?}"
            )));
        }
        Ok(LossConfig {
            beta,
            gamma,
            class_counts,
        })
    }

    /// `(1 - beta) / (1 - beta^{n_y})`.
    pub fn class_weight(&self, label: u8) -> f64 {
        let n = if label == 0 {
            self.class_counts.0
        } else {
            self.class_counts.1
        };
        1.0 / expected_number(n, self.beta).expect("validated at construction")
    }
}

/// `-w_y (1 - p_y)^gamma ln(p_y)` with the log clamped at -50.
pub fn cb_focal_loss<S: Scalar>(logits: [S; 2], label: u8, cfg: &LossConfig) -> S {
    cb_focal_with_weight(
        logits,
        label,
        S::from_f64_lossy(cfg.class_weight(label)),
        S::from_f64_lossy(cfg.gamma),
    )
    .0
}

/// Loss and its gradient with respect to the two logits.
pub fn cb_focal_grad<S: Scalar>(logits: [S; 2], label: u8, cfg: &LossConfig) -> (S, [S; 2]) {
    cb_focal_with_weight(
        logits,
        label,
        S::from_f64_lossy(cfg.class_weight(label)),
        S::from_f64_lossy(cfg.gamma),
    )
}

/// Shared implementation used by both the plain loss and the gradient tape.
pub fn cb_focal_with_weight<S: Scalar>(
    logits: [S; 2],
    label: u8,
    weight: S,
    gamma: S,
) -> (S, [S; 2]) {
    let p = softmax2(logits);
    let y = label as usize;
    let p_y = p[y];
    let focal = (S::one() - p_y).powf(gamma);
    let floor = S::from_f64_lossy(LOG_FLOOR);
    let clamped = p_y.ln().max(floor);
    let loss = -weight * focal * clamped;

    // d loss / d p_y, honoring the clamp region.
    let dl_dpy = if p_y.ln() > floor {
        let focal_term = if gamma == S::zero() {
            S::zero()
        } else {
            -gamma * (S::one() - p_y).powf(gamma - S::one()) * clamped
        };
        -weight * (focal_term + focal / p_y)
    } else if gamma == S::zero() {
        S::zero()
    } else {
        -weight * gamma * (S::one() - p_y).powf(gamma - S::one()) * (-floor)
    };
    // Softmax Jacobian: d p_y / d logit_i = p_y (delta_{yi} - p_i).
    let mut grad = [S::zero(); 2];
    for (i, g) in grad.iter_mut().enumerate() {
        let delta = if i == y { S::one() } else { S::zero() };
        *g = dl_dpy * p_y * (delta - p[i]);
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_number_of_one_is_one_for_any_beta() {
        for beta in [0.0, 0.3, 0.9, 0.999, 0.999999] {
            assert_eq!(expected_number(1, beta).unwrap(), 1.0);
        }
    }

    #[test]
    fn zero_beta_degenerates_to_one() {
        for n in [1, 2, 10, 1000] {
            assert_eq!(expected_number(n, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn half_beta_two_samples_is_three_halves() {
        assert!((expected_number(2, 0.5).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_recurrence() {
        for beta in [0.0, 0.5, 0.9, 0.999] {
            let mut recurrence = 1.0f64;
            for k in 2..=10_000usize {
                recurrence = 1.0 + beta * recurrence;
                let closed = expected_number(k, beta).unwrap();
                let rel = (closed - recurrence).abs() / recurrence.abs();
                assert!(rel <= 1e-9, "beta {beta} k {k}: {closed} vs {recurrence}");
            }
        }
    }

    #[test]
    fn invalid_beta_or_count_is_rejected() {
        assert!(expected_number(0, 0.5).is_err());
        assert!(expected_number(5, 1.0).is_err());
        assert!(expected_number(5, -0.1).is_err());
        assert!(LossConfig::new(0.9, 1.5, (0, 3)).is_err());
        assert!(LossConfig::new(0.9, -1.0, (3, 3)).is_err());
    }

    #[test]
    fn degenerate_hyperparameters_reduce_to_cross_entropy() {
        let cfg = LossConfig::new(0.0, 0.0, (10, 10)).unwrap();
        let logits = [0.3f64, -0.8];
        for label in [0u8, 1] {
            let p = softmax2(logits)[label as usize];
            let loss = cb_focal_loss(logits, label, &cfg);
            assert!((loss - (-p.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_prediction_has_zero_loss() {
        let cfg = LossConfig::new(0.999, 1.5, (10, 10)).unwrap();
        let loss = cb_focal_loss([-100.0f64, 100.0], 1, &cfg);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn frozen_scalar_oracle_case() {
        // logits (0,0), label 1, beta 0.999, n_1 = 100, gamma 1.5; the value
        // comes from an independent high-precision evaluation.
        let cfg = LossConfig::new(0.999, 1.5, (900, 100)).unwrap();
        let loss = cb_focal_loss([0.0f64, 0.0], 1, &cfg);
        assert!(
            (loss - 2.573_994_985_054_681_5e-3).abs() < 1e-15,
            "loss {loss}"
        );
    }

    #[test]
    fn loss_is_positive_below_certainty_and_monotone_in_confidence() {
        let cfg = LossConfig::new(0.9, 1.5, (50, 5)).unwrap();
        let mut prev = f64::INFINITY;
        for step in 1..40 {
            let margin = -4.0 + 8.0 * step as f64 / 40.0;
            let loss = cb_focal_loss([0.0, margin], 1, &cfg);
            assert!(loss > 0.0);
            assert!(loss < prev, "loss must fall as p_y rises");
            prev = loss;
        }
    }

    #[test]
    fn focal_term_damps_easy_examples() {
        let plain = LossConfig::new(0.9, 0.0, (50, 5)).unwrap();
        let focal = LossConfig::new(0.9, 1.5, (50, 5)).unwrap();
        // p_y > 0.5 for margin > 0.
        let logits = [0.0f64, 1.0];
        assert!(cb_focal_loss(logits, 1, &focal) < cb_focal_loss(logits, 1, &plain));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = LossConfig::new(0.99, 1.5, (30, 3)).unwrap();
        let h = 1e-6;
        for (l0, l1, label) in [(0.4f64, -0.3, 1u8), (-1.2, 0.9, 0u8), (2.0, 2.0, 1u8)] {
            let (_, grad) = cb_focal_grad([l0, l1], label, &cfg);
            for i in 0..2 {
                let mut plus = [l0, l1];
                let mut minus = [l0, l1];
                plus[i] += h;
                minus[i] -= h;
                let fd = (cb_focal_loss(plus, label, &cfg) - cb_focal_loss(minus, label, &cfg))
                    / (2.0 * h);
                assert!(
                    (fd - grad[i]).abs() <= 1e-7 * grad[i].abs().max(1.0),
                    "fd {fd} grad {}",
                    grad[i]
                );
            }
        }
    }
}
