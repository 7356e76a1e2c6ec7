//! Joint two-target loss on standardized values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    /// smooth-L1 on the offset, squared error on the duration
    Mixed,
    /// smooth-L1 on both
    Uniform,
}

impl LossVariant {
    pub const ALL: [LossVariant; 2] = [LossVariant::Mixed, LossVariant::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Mixed => "mixed",
            LossVariant::Uniform => "uniform",
        }
    }
}

/// Huber with unit threshold: quadratic inside, linear outside.
pub fn smooth_l1(e: f64) -> (f64, f64) {
    if e.abs() < 1.0 {
        (0.5 * e * e, e)
    } else {
        (e.abs() - 0.5, e.signum())
    }
}

/// Loss and its gradient with respect to `pred`.
pub fn loss_joint(pred: [f64; 2], target: [f64; 2], variant: LossVariant) -> Result<(f64, [f64; 2])> {
    if pred.iter().chain(&target).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss input"));
    }
    let (e0, e1) = (pred[0] - target[0], pred[1] - target[1]);
    let (l0, g0) = smooth_l1(e0);
    let (l1, g1) = match variant {
        LossVariant::Mixed => (e1 * e1, 2.0 * e1),
        LossVariant::Uniform => smooth_l1(e1),
    };
    Ok((l0 + l1, [g0, g1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_branches() {
        assert_eq!(loss_joint([1.0, 2.0], [1.0, 2.0], LossVariant::Mixed).unwrap(), (0.0, [0.0, 0.0]));
        assert_eq!(smooth_l1(0.5).0, 0.125);
        assert_eq!(smooth_l1(2.0).0, 1.5);
        assert_eq!(smooth_l1(-2.0), (1.5, -1.0));
        let (l, g) = loss_joint([0.0, 3.0], [0.0, 0.0], LossVariant::Mixed).unwrap();
        assert_eq!((l, g), (9.0, [0.0, 6.0]));
        let (l, g) = loss_joint([0.0, 3.0], [0.0, 0.0], LossVariant::Uniform).unwrap();
        assert_eq!((l, g), (2.5, [0.0, 1.0]));
        assert!(loss_joint([f64::NAN, 0.0], [0.0, 0.0], LossVariant::Mixed).is_err());
    }

    #[test]
    fn continuous_at_threshold() {
        let below = smooth_l1(1.0 - 1e-12).0;
        let above = smooth_l1(1.0).0;
        assert!((below - above).abs() < 1e-11);
    }
}
