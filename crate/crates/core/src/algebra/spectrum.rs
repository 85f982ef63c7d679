use nalgebra::{DMatrix, SymmetricEigen};

use super::{AlgebraError, LabeledMatrix};

/// Eigenvalues of a symmetric float matrix, grouped into clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// `(value, multiplicity)` in ascending order of value.
    pub eigenvalues: Vec<(f64, usize)>,
    /// Every eigenvalue, ascending.
    pub values: Vec<f64>,
    /// Largest absolute off-diagonal entry left after the final sweep.
    pub residual: f64,
}

impl SpectrumReport {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.iter().map(|&(_, m)| m).sum()
    }

    /// Total multiplicity of clusters within `tol` of `value`.
    pub fn multiplicity_near(&self, value: f64, tol: f64) -> usize {
        self.eigenvalues
            .iter()
            .filter(|(v, _)| (v - value).abs() <= tol)
            .map(|&(_, m)| m)
            .sum()
    }

    /// Clusters farther than `tol` from zero.
    pub fn nonzero(&self, tol: f64) -> Vec<(f64, usize)> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|(v, _)| v.abs() > tol)
            .collect()
    }
}

/// Spectrum of an exact symmetric matrix via a float copy.
pub fn float_spectrum(a: &LabeledMatrix, tol: f64) -> Result<SpectrumReport, AlgebraError> {
    if !a.is_symmetric() {
        return Err(AlgebraError::NotSymmetric);
    }
    let a = a.align_to(a.row_labels(), a.row_labels())?;
    float_spectrum_of(a.to_f64(), a.nrows(), tol)
}

/// Spectrum of a row-major `n×n` float matrix, symmetrized before use.
///
/// Householder tridiagonalization followed by implicit QR; the residual is
/// the largest off-diagonal entry of `VᵀAV` for the computed eigenvectors `V`.
pub fn float_spectrum_of(
    mut m: Vec<f64>,
    n: usize,
    tol: f64,
) -> Result<SpectrumReport, AlgebraError> {
    if m.len() != n * n {
        return Err(AlgebraError::Shape {
            expected: n * n,
            got: m.len(),
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let a = DMatrix::from_row_slice(n, n, &m);
    let eig = SymmetricEigen::new(a.clone());
    let v = &eig.eigenvectors;
    let d = v.transpose() * &a * v;
    let mut residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                residual = residual.max(d[(i, j)].abs());
            }
        }
    }
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(SpectrumReport {
        eigenvalues: cluster(&values, tol),
        values,
        residual,
    })
}

fn cluster(sorted: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for &v in sorted {
        match out.last_mut() {
            Some((sum, count, first)) if (v - *first).abs() <= tol => {
                *sum += v;
                *count += 1;
            }
            _ => out.push((v, 1, v)),
        }
    }
    out.into_iter()
        .map(|(sum, count, _)| (sum / count as f64, count))
        .collect()
}
