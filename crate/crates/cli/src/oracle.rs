//! Floating-point cross-check of the exact pipeline.
//!
//! For each pair `(P, Q)` with a nonzero efficiency, the spectrum of `PQP`
//! must be `λ` with multiplicity `tr Q` and zero otherwise; every final row
//! projector must have spectrum `{0, 1}` with multiplicity of 1 equal to its
//! d.f. Products here are formed in floating point, independently of the
//! exact kernels.

use nalgebra::DMatrix;
use num_traits::{ToPrimitive, Zero};

use decomptab_core::{
    check_balance, embed, float_spectrum_of, refine, Decomposition, DesignFunction, LabeledMatrix,
    ObjectSet, Rational, Tier,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub label: String,
    pub deviation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn max_deviation(&self) -> f64 {
        self.checks.iter().map(|c| c.deviation).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&OracleCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.deviation.total_cmp(&b.deviation))
    }
}

fn float(m: &LabeledMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), &m.to_f64())
}

/// Largest gap between the sorted spectrum of `m` and `rank` copies of
/// `value` padded with zeros, or the diagonalization residual if larger.
fn spectrum_deviation(m: DMatrix<f64>, value: f64, rank: usize, tol: f64) -> Result<f64, CliError> {
    let n = m.nrows();
    let row_major: Vec<f64> = m.transpose().as_slice().to_vec();
    let s = float_spectrum_of(row_major, n, tol)?;
    let mut expected = vec![0.0; n];
    for e in expected.iter_mut().take(rank) {
        *e = value;
    }
    expected.sort_by(f64::total_cmp);
    let gap = s
        .values
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(gap.max(s.residual))
}

/// Deviation of the spectrum of `PQP` from `λ` (multiplicity `rank`) and 0.
pub fn pair_deviation(
    p: &LabeledMatrix,
    q: &LabeledMatrix,
    lambda: &Rational,
    rank: u64,
    tol: f64,
) -> Result<f64, CliError> {
    let q = q.align_to(p.row_labels(), p.col_labels())?;
    let pf = float(p);
    let pqp = &pf * float(&q) * &pf;
    let l = lambda.to_f64().unwrap_or(f64::NAN);
    spectrum_deviation(pqp, l, rank as usize, tol)
}

/// Deviation of a projector's spectrum from `{0, 1}` with `rank` ones.
pub fn projector_deviation(p: &LabeledMatrix, rank: u64, tol: f64) -> Result<f64, CliError> {
    spectrum_deviation(float(p), 1.0, rank as usize, tol)
}

/// Checks every row projector of a decomposition.
pub fn check_decomposition(d: &Decomposition, tol: f64, out: &mut OracleReport) -> Result<(), CliError> {
    for row in &d.rows {
        let p = row
            .projector
            .as_ref()
            .ok_or_else(|| CliError::Usage("the oracle needs exact projectors".into()))?;
        out.checks.push(OracleCheck {
            label: format!("spectrum of {}", row.key()),
            deviation: projector_deviation(p, row.df(), tol)?,
        });
    }
    Ok(())
}

/// Folds the chain left to right, checking every nonzero pair on the way and
/// every final projector at the end.
pub fn check_chain(tiers: &[Tier], tol: f64) -> Result<OracleReport, CliError> {
    let mut out = OracleReport::default();
    let first = tiers
        .first()
        .ok_or_else(|| CliError::Usage("no tiers".into()))?;
    let mut map = DesignFunction::identity(ObjectSet {
        id: first.structure.tier.clone(),
        labels: first.structure.objects().clone(),
    });
    let mut d = Decomposition::from_structure(&first.structure);
    for t in &tiers[1..] {
        let link = t
            .link
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("tier `{}` has no link", t.structure.tier)))?;
        map = map.compose(link)?;
        let q = embed(&t.structure, &map)?;
        let report = check_balance(&d, &q)?;
        let eff = report
            .efficiency
            .as_ref()
            .ok_or_else(|| CliError::Unbalanced(format!("{} is {}", t.structure.tier, report.verdict)))?;
        for (i, row) in d.rows.iter().enumerate() {
            let Some(p) = row.projector.as_ref() else { continue };
            if row.is_closed() {
                continue;
            }
            for (j, src) in q.sources.iter().enumerate() {
                let l = eff.get(i, j);
                if l.is_zero() {
                    continue;
                }
                out.checks.push(OracleCheck {
                    label: format!("PQP for {} against {}", row.key(), src.name),
                    deviation: pair_deviation(p, &src.projector, l, src.df, tol)?,
                });
            }
        }
        d = refine(&d, &q, &report)?;
    }
    check_decomposition(&d, tol, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use decomptab_core::algebra::{ratio, LabelSet};

    #[test]
    fn detects_a_wrong_eigenvalue() {
        let l = LabelSet::numbered("x", 4);
        let j = LabeledMatrix::from_fn(l.clone(), l.clone(), |_, _| ratio(1, 4));
        assert!(projector_deviation(&j, 1, 1e-9).unwrap() < 1e-12);
        assert!(projector_deviation(&j, 2, 1e-9).unwrap() > 0.5);
        let half = j.scale(&ratio(1, 2));
        assert!((projector_deviation(&half, 1, 1e-9).unwrap() - 0.5).abs() < 1e-12);
        let id = LabeledMatrix::identity(l);
        assert!(pair_deviation(&id, &j, &ratio(1, 1), 1, 1e-9).unwrap() < 1e-12);
        assert!(pair_deviation(&id, &j, &ratio(1, 3), 1, 1e-9).unwrap() > 0.5);
    }
}
