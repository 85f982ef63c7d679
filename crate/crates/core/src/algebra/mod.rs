//! Exact rational matrices indexed by object labels.
//!
//! Every matrix in the pipeline is an `Ω × Ω` (or `Ω × Υ`) array whose rows and
//! columns are addressed by object identifiers, never by position alone. Two
//! matrices over the same object set may store their labels in different
//! orders; arithmetic aligns them first and refuses mismatched sets.
//!
//! Storage is a single common denominator plus integer numerators, so products
//! run on machine integers whenever the entries are small enough and fall back
//! to arbitrary precision otherwise. Results are always reduced, which makes
//! structural equality coincide with mathematical equality.
//!
//! [`float_spectrum`] is deliberately separate: it converts to `f64` and runs
//! cyclic Jacobi rotations, and is only used to cross-check the exact results.

mod kernel;
mod labels;
mod matrix;
mod spectrum;

pub use labels::{LabelSet, Labels};
pub use matrix::LabeledMatrix;
pub use spectrum::{float_spectrum, float_spectrum_of, SpectrumReport};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

/// Exact rational scalar. Always stored in lowest terms with a positive
/// denominator.
pub type Rational = BigRational;

/// Builds `numer / denom` as a [`Rational`].
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Builds the integer `n` as a [`Rational`].
pub fn integer(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Renders `a/b`, or just `a` for integers.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses the output of [`format_rational`].
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (n, d) = match text.split_once('/') {
        Some((n, d)) => (n.trim().parse::<BigInt>().ok()?, d.trim().parse::<BigInt>().ok()?),
        None => (text.parse::<BigInt>().ok()?, BigInt::one()),
    };
    if d.is_zero() {
        return None;
    }
    Some(Rational::new(n, d))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("label mismatch: {left} vs {right}")]
    LabelMismatch { left: String, right: String },
    #[error("matrix is not square: {rows} row labels, {cols} column labels")]
    NotSquare { rows: usize, cols: usize },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("spectrum requested for a non-symmetric matrix")]
    NotSymmetric,
}

/// Exact product `a · b`. The column labels of `a` must be the same set as the
/// row labels of `b`; the order may differ.
pub fn mat_mul(a: &LabeledMatrix, b: &LabeledMatrix) -> Result<LabeledMatrix, AlgebraError> {
    a.mul(b)
}

/// Sum of the diagonal. Requires identical row and column label sets.
pub fn trace(a: &LabeledMatrix) -> Result<Rational, AlgebraError> {
    a.trace()
}

/// True iff `a = aᵀ` and `a·a = a` exactly. Non-square input is reported as
/// `false`; use [`projector_diagnostic`] to see why.
pub fn is_symmetric_idempotent(a: &LabeledMatrix) -> bool {
    projector_diagnostic(a).is_ok()
}

/// Explains why `a` is not a symmetric idempotent, if it is not.
pub fn projector_diagnostic(a: &LabeledMatrix) -> Result<(), String> {
    if !a.row_labels().same_set(a.col_labels()) {
        return Err(format!(
            "not square: {} row labels, {} column labels",
            a.nrows(),
            a.ncols()
        ));
    }
    if !a.is_symmetric() {
        return Err("not symmetric".to_string());
    }
    let sq = a.mul(a).map_err(|e| e.to_string())?;
    if sq != *a {
        let diff = sq.sub(a).map_err(|e| e.to_string())?;
        return Err(format!(
            "not idempotent: max |A² - A| = {}",
            format_rational(&diff.max_abs())
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks_averaging() -> LabeledMatrix {
        // b = 2 blocks of p = 3 plots, levels 11,12,13,21,22,23.
        let labels = LabelSet::from_strs(&["w1", "w2", "w3", "w4", "w5", "w6"]).unwrap();
        LabeledMatrix::from_fn(labels.clone(), labels, |i, j| {
            if i / 3 == j / 3 {
                ratio(1, 3)
            } else {
                integer(0)
            }
        })
    }

    #[test]
    fn identity_times_averaging_is_averaging() {
        let a = blocks_averaging();
        let i = LabeledMatrix::identity(a.row_labels().clone());
        assert_eq!(mat_mul(&i, &a).unwrap(), a);
    }

    #[test]
    fn averaging_is_idempotent_and_complement_annihilates() {
        let a = blocks_averaging();
        assert_eq!(mat_mul(&a, &a).unwrap(), a);
        let i = LabeledMatrix::identity(a.row_labels().clone());
        let p = i.sub(&a).unwrap();
        assert!(mat_mul(&p, &a).unwrap().is_zero());
    }

    #[test]
    fn traces() {
        let a = blocks_averaging();
        assert_eq!(trace(&a).unwrap(), integer(2));
        let i48 = LabeledMatrix::identity(LabelSet::numbered("u", 48));
        assert_eq!(trace(&i48).unwrap(), integer(48));
        let p = LabeledMatrix::identity(a.row_labels().clone()).sub(&a).unwrap();
        assert_eq!(trace(&p).unwrap(), integer(4));
        let spec = float_spectrum(&p, 1e-9).unwrap();
        assert_eq!(spec.multiplicity_near(1.0, 1e-9), 4);
        assert_eq!(spec.multiplicity_near(0.0, 1e-9), 2);
    }

    #[test]
    fn trace_rejects_rectangular() {
        let rows = LabelSet::numbered("r", 2);
        let cols = LabelSet::numbered("c", 3);
        let m = LabeledMatrix::zeros(rows, cols);
        assert!(matches!(trace(&m), Err(AlgebraError::NotSquare { .. })));
    }

    #[test]
    fn symmetric_idempotent_cases() {
        assert!(is_symmetric_idempotent(&blocks_averaging()));
        let labels = LabelSet::numbered("u", 4);
        let half = LabeledMatrix::identity(labels.clone()).scale(&ratio(1, 2));
        assert!(!is_symmetric_idempotent(&half));
        let j = LabeledMatrix::from_fn(labels.clone(), labels, |_, _| ratio(1, 4));
        assert!(is_symmetric_idempotent(&j));
        let rect = LabeledMatrix::zeros(LabelSet::numbered("r", 2), LabelSet::numbered("c", 3));
        assert!(!is_symmetric_idempotent(&rect));
        assert!(projector_diagnostic(&rect).unwrap_err().contains("not square"));
    }

    #[test]
    fn mismatched_labels_are_rejected() {
        let a = LabeledMatrix::identity(LabelSet::numbered("a", 3));
        let b = LabeledMatrix::identity(LabelSet::numbered("b", 3));
        let err = mat_mul(&a, &b).unwrap_err();
        assert!(matches!(err, AlgebraError::LabelMismatch { .. }));
        assert!(err.to_string().contains("a1"));
    }

    #[test]
    fn rational_text_round_trip() {
        for r in [ratio(1, 9), ratio(-26, 27), integer(0), integer(7)] {
            assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
        }
        assert_eq!(format_rational(&ratio(8, 9)), "8/9");
        assert_eq!(format_rational(&ratio(4, 2)), "2");
        assert!(parse_rational("1/0").is_none());
    }
}
