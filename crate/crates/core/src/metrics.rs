//! Primal gap, relative improvement and marginal cross-entropy.

use log::warn;
use std::fmt;

use crate::downstream::Marginals;
use crate::error::{check_len, FmipError, Result};

/// Smallest probability used inside a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `|obj − bks|`.
pub fn gap(obj: f64, bks: f64) -> f64 {
    (obj - bks).abs()
}

/// Relative improvement of `gap_b` over `gap_a` in percent; undefined when
/// `gap_a` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Improvement {
    Percent(f64),
    Undefined,
}

impl fmt::Display for Improvement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Improvement::Percent(p) => write!(f, "{p:.2}%"),
            Improvement::Undefined => f.write_str("n/a"),
        }
    }
}

pub fn imp(gap_a: f64, gap_b: f64) -> Improvement {
    if gap_a == 0.0 || !gap_a.is_finite() || !gap_b.is_finite() {
        Improvement::Undefined
    } else {
        Improvement::Percent((gap_a - gap_b) / gap_a * 100.0)
    }
}

/// Mean of `−ln p_i(label_i)` over the integer variables.
pub fn cross_entropy(marg: &Marginals, label: &[usize]) -> Result<f64> {
    check_len("label", marg.num_vars(), label.len())?;
    if label.is_empty() {
        return Err(FmipError::Domain("cross-entropy over zero variables".into()));
    }
    let mut total = 0.0;
    for (i, &l) in label.iter().enumerate() {
        let p = *marg.rows[i]
            .get(l)
            .ok_or_else(|| FmipError::Domain(format!("label {l} of variable {i} outside the marginal support")))?;
        if p < PROB_FLOOR {
            warn!("variable {i} puts probability {p} on its label; clamping to {PROB_FLOOR}");
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total / label.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(format!("{:.2}", gap(401.00, 400.70)), "0.30");
        assert_eq!(imp(0.30, 0.10).to_string(), "66.67%");
        assert_eq!(imp(0.0, 0.1).to_string(), "n/a");
        assert_eq!(gap(3.5, 3.5), 0.0);
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = Marginals::new(vec![vec![0.5, 0.5]; 3]).unwrap();
        assert!((cross_entropy(&uniform, &[0, 1, 1]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let mixed = Marginals::new(vec![vec![0.2, 0.8], vec![0.8, 0.2], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!((cross_entropy(&mixed, &[1, 0, 0, 1]).unwrap() - 0.45815).abs() < 1e-5);
        let point = Marginals::point_mass(&[1.0, 0.0], 2);
        assert_eq!(cross_entropy(&point, &[1, 0]).unwrap(), 0.0);
        assert!((cross_entropy(&point, &[0, 0]).unwrap() - (-PROB_FLOOR.ln()) / 2.0).abs() < 1e-9);
        assert!(cross_entropy(&point, &[2, 0]).is_err());
    }
}
