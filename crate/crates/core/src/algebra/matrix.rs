use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::kernel::{self, Width};
use super::{AlgebraError, Labels, Rational};

#[derive(Clone)]
enum Numerators {
    Small(Vec<i64>),
    Big(Vec<BigInt>),
}

impl Numerators {
    fn len(&self) -> usize {
        match self {
            Numerators::Small(v) => v.len(),
            Numerators::Big(v) => v.len(),
        }
    }

    fn big_at(&self, i: usize) -> BigInt {
        match self {
            Numerators::Small(v) => BigInt::from(v[i]),
            Numerators::Big(v) => v[i].clone(),
        }
    }

    fn to_big(&self) -> Vec<BigInt> {
        match self {
            Numerators::Small(v) => v.iter().map(|&x| BigInt::from(x)).collect(),
            Numerators::Big(v) => v.clone(),
        }
    }

    fn gather(&self, idx: impl Iterator<Item = usize>) -> Numerators {
        match self {
            Numerators::Small(v) => Numerators::Small(idx.map(|i| v[i]).collect()),
            Numerators::Big(v) => Numerators::Big(idx.map(|i| v[i].clone()).collect()),
        }
    }
}

/// Dense matrix of exact rationals with labeled rows and columns.
///
/// Stored as `numerators / denominator` with a single positive denominator and
/// kept in lowest terms, so two matrices over the same labels are equal exactly
/// when their stored forms agree.
#[derive(Clone)]
pub struct LabeledMatrix {
    rows: Labels,
    cols: Labels,
    denom: BigInt,
    nums: Numerators,
}

impl LabeledMatrix {
    fn from_parts(rows: Labels, cols: Labels, denom: BigInt, nums: Numerators) -> Self {
        debug_assert_eq!(nums.len(), rows.len() * cols.len());
        let mut m = LabeledMatrix {
            rows,
            cols,
            denom,
            nums,
        };
        m.normalize();
        m
    }

    fn normalize(&mut self) {
        if self.denom.is_negative() {
            self.denom = -std::mem::take(&mut self.denom);
            self.nums = match &self.nums {
                Numerators::Small(v) => match v.iter().map(|x| x.checked_neg()).collect() {
                    Some(v) => Numerators::Small(v),
                    None => Numerators::Big(v.iter().map(|&x| -BigInt::from(x)).collect()),
                },
                Numerators::Big(v) => Numerators::Big(v.iter().map(|x| -x).collect()),
            };
        }
        match &mut self.nums {
            Numerators::Small(v) => {
                let mut g: u64 = 0;
                for &x in v.iter() {
                    g = g.gcd(&x.unsigned_abs());
                    if g == 1 {
                        break;
                    }
                }
                if g == 0 {
                    self.denom = BigInt::one();
                    return;
                }
                let g = BigInt::from(g).gcd(&self.denom);
                if !g.is_one() {
                    self.denom /= &g;
                    let g = g.to_i64().expect("gcd of i64 values fits");
                    v.iter_mut().for_each(|x| *x /= g);
                }
            }
            Numerators::Big(v) => {
                let mut g = self.denom.clone();
                let mut any = false;
                for x in v.iter() {
                    if !x.is_zero() {
                        any = true;
                        g = g.gcd(x);
                        if g.is_one() {
                            break;
                        }
                    }
                }
                if !any {
                    self.denom = BigInt::one();
                    self.nums = Numerators::Small(vec![0; v.len()]);
                    return;
                }
                if !g.is_one() {
                    self.denom /= &g;
                    v.iter_mut().for_each(|x| *x /= &g);
                }
                let small: Option<Vec<i64>> = v.iter().map(|x| x.to_i64()).collect();
                if let Some(small) = small {
                    self.nums = Numerators::Small(small);
                }
            }
        }
    }

    /// Builds a matrix entry by entry from positional indices.
    pub fn from_fn(rows: Labels, cols: Labels, f: impl Fn(usize, usize) -> Rational) -> Self {
        let (n, m) = (rows.len(), cols.len());
        let entries: Vec<Rational> = (0..n * m).map(|x| f(x / m, x % m)).collect();
        let mut denom = BigInt::one();
        for e in &entries {
            if !e.denom().is_one() {
                denom = denom.lcm(e.denom());
            }
        }
        let nums = entries
            .iter()
            .map(|e| e.numer() * (&denom / e.denom()))
            .collect();
        Self::from_parts(rows, cols, denom, Numerators::Big(nums))
    }

    /// Builds `nums / denom` from row-major integer numerators.
    pub fn from_integers(
        rows: Labels,
        cols: Labels,
        denom: i64,
        nums: Vec<i64>,
    ) -> Result<Self, AlgebraError> {
        let expected = rows.len() * cols.len();
        if nums.len() != expected {
            return Err(AlgebraError::Shape {
                expected,
                got: nums.len(),
            });
        }
        assert!(denom != 0, "zero denominator");
        Ok(Self::from_parts(rows, cols, BigInt::from(denom), Numerators::Small(nums)))
    }

    pub fn zeros(rows: Labels, cols: Labels) -> Self {
        let len = rows.len() * cols.len();
        LabeledMatrix {
            rows,
            cols,
            denom: BigInt::one(),
            nums: Numerators::Small(vec![0; len]),
        }
    }

    pub fn identity(labels: Labels) -> Self {
        let n = labels.len();
        let mut v = vec![0i64; n * n];
        for i in 0..n {
            v[i * n + i] = 1;
        }
        LabeledMatrix {
            rows: labels.clone(),
            cols: labels,
            denom: BigInt::one(),
            nums: Numerators::Small(v),
        }
    }

    pub fn row_labels(&self) -> &Labels {
        &self.rows
    }

    pub fn col_labels(&self) -> &Labels {
        &self.cols
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    /// Common denominator of the stored form.
    pub fn denominator(&self) -> &BigInt {
        &self.denom
    }

    /// Entry at storage position `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> Rational {
        Rational::new(self.nums.big_at(i * self.ncols() + j), self.denom.clone())
    }

    /// Entry addressed by labels.
    pub fn entry(&self, row: &str, col: &str) -> Option<Rational> {
        Some(self.get(self.rows.position(row)?, self.cols.position(col)?))
    }

    pub fn is_zero(&self) -> bool {
        match &self.nums {
            Numerators::Small(v) => v.iter().all(|&x| x == 0),
            Numerators::Big(v) => v.iter().all(Zero::is_zero),
        }
    }

    pub fn is_identity(&self) -> bool {
        if !self.denom.is_one() || !self.rows.same_set(&self.cols) {
            return false;
        }
        let Ok(pos) = self.rows.positions_in(&self.cols) else {
            return false;
        };
        let m = self.ncols();
        match &self.nums {
            Numerators::Small(v) => (0..self.nrows()).all(|i| {
                let row = &v[i * m..(i + 1) * m];
                row.iter()
                    .enumerate()
                    .all(|(j, &x)| x == if j == pos[i] { 1 } else { 0 })
            }),
            Numerators::Big(_) => false,
        }
    }

    /// The same matrix stored in the given row and column order.
    pub fn align_to(&self, rows: &Labels, cols: &Labels) -> Result<Self, AlgebraError> {
        let same_rows = Arc::ptr_eq(&self.rows, rows) || self.rows.same_order(rows);
        let same_cols = Arc::ptr_eq(&self.cols, cols) || self.cols.same_order(cols);
        if same_rows && same_cols {
            return Ok(LabeledMatrix {
                rows: rows.clone(),
                cols: cols.clone(),
                denom: self.denom.clone(),
                nums: self.nums.clone(),
            });
        }
        let rp = rows.positions_in(&self.rows)?;
        let cp = cols.positions_in(&self.cols)?;
        let m = self.ncols();
        let idx = rp.iter().flat_map(|&r| cp.iter().map(move |&c| r * m + c));
        Ok(LabeledMatrix {
            rows: rows.clone(),
            cols: cols.clone(),
            denom: self.denom.clone(),
            nums: self.nums.gather(idx),
        })
    }

    pub fn transpose(&self) -> Self {
        let (n, m) = (self.nrows(), self.ncols());
        let idx = (0..m).flat_map(|j| (0..n).map(move |i| i * m + j));
        LabeledMatrix {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            denom: self.denom.clone(),
            nums: self.nums.gather(idx),
        }
    }

    /// Square with respect to labels: rows and columns carry the same set.
    pub fn is_square(&self) -> bool {
        self.rows.same_set(&self.cols)
    }

    /// Same matrix with columns stored in row order. Requires squareness.
    fn square_aligned(&self) -> Result<Self, AlgebraError> {
        if !self.is_square() {
            return Err(AlgebraError::NotSquare {
                rows: self.nrows(),
                cols: self.ncols(),
            });
        }
        self.align_to(&self.rows.clone(), &self.rows.clone())
    }

    pub fn is_symmetric(&self) -> bool {
        let Ok(a) = self.square_aligned() else {
            return false;
        };
        let n = a.nrows();
        match &a.nums {
            Numerators::Small(v) => {
                (0..n).all(|i| (i + 1..n).all(|j| v[i * n + j] == v[j * n + i]))
            }
            Numerators::Big(v) => {
                (0..n).all(|i| (i + 1..n).all(|j| v[i * n + j] == v[j * n + i]))
            }
        }
    }

    fn check_same_labels(&self, other: &Self) -> Result<Self, AlgebraError> {
        if !self.rows.same_set(&other.rows) {
            return Err(self.rows.mismatch(&other.rows));
        }
        if !self.cols.same_set(&other.cols) {
            return Err(self.cols.mismatch(&other.cols));
        }
        other.align_to(&self.rows, &self.cols)
    }

    fn combine(&self, other: &Self, sign: i64) -> Result<Self, AlgebraError> {
        let other = self.check_same_labels(other)?;
        let l = self.denom.lcm(&other.denom);
        let ma = &l / &self.denom;
        let mb = &l / &other.denom;
        if let (Numerators::Small(a), Numerators::Small(b), Some(ma), Some(mb)) =
            (&self.nums, &other.nums, ma.to_i64(), mb.to_i64())
        {
            let mb = mb * sign;
            let small: Option<Vec<i64>> = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let v = x as i128 * ma as i128 + y as i128 * mb as i128;
                    i64::try_from(v).ok()
                })
                .collect();
            if let Some(v) = small {
                return Ok(Self::from_parts(
                    self.rows.clone(),
                    self.cols.clone(),
                    l,
                    Numerators::Small(v),
                ));
            }
        }
        let mb = mb * sign;
        let a = self.nums.to_big();
        let b = other.nums.to_big();
        let v = a.iter().zip(&b).map(|(x, y)| x * &ma + y * &mb).collect();
        Ok(Self::from_parts(
            self.rows.clone(),
            self.cols.clone(),
            l,
            Numerators::Big(v),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.combine(other, 1)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.combine(other, -1)
    }

    pub fn scale(&self, s: &Rational) -> Self {
        let (p, q) = (s.numer(), s.denom());
        let denom = &self.denom * q;
        let nums = match (&self.nums, p.to_i64()) {
            (Numerators::Small(v), Some(p)) => {
                match v.iter().map(|&x| x.checked_mul(p)).collect::<Option<Vec<_>>>() {
                    Some(v) => Numerators::Small(v),
                    None => Numerators::Big(v.iter().map(|&x| BigInt::from(x) * p).collect()),
                }
            }
            _ => Numerators::Big(self.nums.to_big().into_iter().map(|x| x * p).collect()),
        };
        Self::from_parts(self.rows.clone(), self.cols.clone(), denom, nums)
    }

    /// Exact product; `other`'s rows are matched to `self`'s columns by label.
    pub fn mul(&self, other: &Self) -> Result<Self, AlgebraError> {
        if !self.cols.same_set(&other.rows) {
            return Err(self.cols.mismatch(&other.rows));
        }
        let b = other.align_to(&self.cols, &other.cols)?;
        let (n, k, m) = (self.nrows(), self.ncols(), b.ncols());
        let denom = &self.denom * &b.denom;
        let nums = match (&self.nums, &b.nums) {
            (Numerators::Small(x), Numerators::Small(y)) => {
                match kernel::width_for(kernel::max_abs_i64(x), kernel::max_abs_i64(y), k) {
                    Width::I64 => Numerators::Small(kernel::mul_i64(x, y, n, k, m)),
                    Width::I128 => narrow(kernel::mul_i128(x, y, n, k, m)),
                    Width::Big => {
                        Numerators::Big(kernel::mul_big(&self.nums.to_big(), &b.nums.to_big(), n, k, m))
                    }
                }
            }
            _ => Numerators::Big(kernel::mul_big(&self.nums.to_big(), &b.nums.to_big(), n, k, m)),
        };
        Ok(Self::from_parts(self.rows.clone(), b.cols.clone(), denom, nums))
    }

    /// `self · selfᵀ`, computed over the upper triangle only.
    pub fn gram(&self) -> Self {
        let (n, k) = (self.nrows(), self.ncols());
        let denom = &self.denom * &self.denom;
        let nums = match &self.nums {
            Numerators::Small(x) => {
                let mx = kernel::max_abs_i64(x);
                match kernel::width_for(mx, mx, k) {
                    Width::I64 => Numerators::Small(kernel::gram_i64(x, n, k)),
                    Width::I128 => narrow(kernel::gram_i128(x, n, k)),
                    Width::Big => Numerators::Big(kernel::gram_big(&self.nums.to_big(), n, k)),
                }
            }
            Numerators::Big(x) => Numerators::Big(kernel::gram_big(x, n, k)),
        };
        Self::from_parts(self.rows.clone(), self.rows.clone(), denom, nums)
    }

    pub fn trace(&self) -> Result<Rational, AlgebraError> {
        if !self.is_square() {
            return Err(AlgebraError::NotSquare {
                rows: self.nrows(),
                cols: self.ncols(),
            });
        }
        let pos = self.rows.positions_in(&self.cols)?;
        let m = self.ncols();
        let sum = match &self.nums {
            Numerators::Small(v) => {
                BigInt::from(pos.iter().enumerate().map(|(i, &j)| v[i * m + j] as i128).sum::<i128>())
            }
            Numerators::Big(v) => pos.iter().enumerate().map(|(i, &j)| &v[i * m + j]).sum(),
        };
        Ok(Rational::new(sum, self.denom.clone()))
    }

    /// `trace(self · other)` in O(n²) without forming the product.
    pub fn trace_of_product(&self, other: &Self) -> Result<Rational, AlgebraError> {
        if !self.cols.same_set(&other.rows) {
            return Err(self.cols.mismatch(&other.rows));
        }
        if !self.rows.same_set(&other.cols) {
            return Err(self.rows.mismatch(&other.cols));
        }
        // tr(AB) = Σ_ij A_ij B_ji = Σ_ij A_ij (Bᵀ)_ij.
        let bt = other.align_to(&self.cols, &self.rows)?.transpose();
        let denom = &self.denom * &bt.denom;
        let sum = match (&self.nums, &bt.nums) {
            (Numerators::Small(a), Numerators::Small(b)) => {
                let mut acc: i128 = 0;
                let mut overflow = false;
                for (&x, &y) in a.iter().zip(b) {
                    match acc.checked_add(x as i128 * y as i128) {
                        Some(v) => acc = v,
                        None => {
                            overflow = true;
                            break;
                        }
                    }
                }
                if overflow {
                    a.iter().zip(b).map(|(&x, &y)| BigInt::from(x) * y).sum()
                } else {
                    BigInt::from(acc)
                }
            }
            _ => {
                let (a, b) = (self.nums.to_big(), bt.nums.to_big());
                a.iter().zip(&b).map(|(x, y)| x * y).sum()
            }
        };
        Ok(Rational::new(sum, denom))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> Rational {
        let num = match &self.nums {
            Numerators::Small(v) => BigInt::from(kernel::max_abs_i64(v)),
            Numerators::Big(v) => v.iter().map(|x| x.abs()).max().unwrap_or_default(),
        };
        Rational::new(num, self.denom.clone())
    }

    /// Row-major float copy in storage order.
    pub fn to_f64(&self) -> Vec<f64> {
        match (&self.nums, self.denom.to_f64()) {
            (Numerators::Small(v), Some(d)) if d.is_finite() => {
                v.iter().map(|&x| x as f64 / d).collect()
            }
            _ => (0..self.nums.len())
                .map(|i| {
                    Rational::new(self.nums.big_at(i), self.denom.clone())
                        .to_f64()
                        .unwrap_or(f64::NAN)
                })
                .collect(),
        }
    }

    /// Square matrix over `labels` with entry `(i, j) = self[index[i], index[j]] / divisor`.
    ///
    /// With `index` the positions of a design function's images, this is
    /// `(1/r)·X·self·Xᵀ` computed entrywise.
    pub fn pull_back(
        &self,
        labels: Labels,
        index: &[usize],
        divisor: u64,
    ) -> Result<Self, AlgebraError> {
        let a = self.square_aligned()?;
        if index.len() != labels.len() {
            return Err(AlgebraError::Shape {
                expected: labels.len(),
                got: index.len(),
            });
        }
        let m = a.ncols();
        let idx = index
            .iter()
            .flat_map(|&r| index.iter().map(move |&c| r * m + c));
        let nums = a.nums.gather(idx);
        Ok(Self::from_parts(
            labels.clone(),
            labels,
            &a.denom * BigInt::from(divisor),
            nums,
        ))
    }

    /// Sum of several matrices over the same labels. Empty input is an error
    /// only through `labels`: the result is the zero matrix over them.
    pub fn sum<'a>(
        labels: &Labels,
        items: impl IntoIterator<Item = &'a LabeledMatrix>,
    ) -> Result<Self, AlgebraError> {
        let mut acc = LabeledMatrix::zeros(labels.clone(), labels.clone());
        for m in items {
            acc = acc.add(m)?;
        }
        Ok(acc)
    }
}

fn narrow(v: Vec<i128>) -> Numerators {
    match v.iter().map(|&x| i64::try_from(x).ok()).collect() {
        Some(s) => Numerators::Small(s),
        None => Numerators::Big(v.into_iter().map(BigInt::from).collect()),
    }
}

impl PartialEq for LabeledMatrix {
    fn eq(&self, other: &Self) -> bool {
        let Ok(other) = self.check_same_labels(other) else {
            return false;
        };
        if self.denom != other.denom {
            return false;
        }
        match (&self.nums, &other.nums) {
            (Numerators::Small(a), Numerators::Small(b)) => a == b,
            (Numerators::Big(a), Numerators::Big(b)) => a == b,
            _ => self.nums.to_big() == other.nums.to_big(),
        }
    }
}

impl Eq for LabeledMatrix {}

impl fmt::Debug for LabeledMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        writeln!(
            f,
            "LabeledMatrix {}x{} / {}",
            self.nrows(),
            self.ncols(),
            self.denom
        )?;
        for i in 0..self.nrows().min(SHOWN) {
            write!(f, "  {:>8}:", self.rows.get(i))?;
            for j in 0..self.ncols().min(SHOWN) {
                write!(f, " {:>6}", self.nums.big_at(i * self.ncols() + j))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{integer, ratio, LabelSet};
    use super::*;

    fn small(n: usize, seed: i64) -> LabeledMatrix {
        let l = LabelSet::numbered("x", n);
        LabeledMatrix::from_fn(l.clone(), l, |i, j| {
            ratio(((i as i64 * 7 + j as i64 * 3 + seed) % 11) - 5, 1 + (i + 2 * j) as i64 % 4)
        })
    }

    #[test]
    fn canonical_form() {
        let l = LabelSet::numbered("x", 2);
        let m = LabeledMatrix::from_integers(l.clone(), l.clone(), 6, vec![2, 4, 0, 6]).unwrap();
        assert_eq!(m.denominator(), &BigInt::from(3));
        assert_eq!(m.get(1, 1), integer(1));
        let z = LabeledMatrix::from_integers(l.clone(), l.clone(), 7, vec![0; 4]).unwrap();
        assert_eq!(z.denominator(), &BigInt::one());
        let neg = LabeledMatrix::from_integers(l.clone(), l, -2, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(neg.get(0, 0), ratio(-1, 2));
    }

    #[test]
    fn equality_is_label_based() {
        let a = small(4, 1);
        let rev = LabelSet::new(a.row_labels().labels().iter().rev().cloned()).unwrap();
        let b = a.align_to(&rev, &rev).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.entry("x1", "x3"), a.entry("x1", "x3"));
        assert_eq!(a.mul(&a).unwrap(), b.mul(&b).unwrap());
    }

    #[test]
    fn overflow_paths_agree_with_rational_arithmetic() {
        let l = LabelSet::numbered("x", 3);
        let huge = i64::MAX / 3;
        let a = LabeledMatrix::from_integers(l.clone(), l.clone(), 1, vec![huge; 9]).unwrap();
        let p = a.mul(&a).unwrap();
        let want = Rational::from_integer(BigInt::from(huge) * BigInt::from(huge) * 3);
        assert_eq!(p.get(1, 2), want);
        let s = a.add(&a).unwrap().add(&a).unwrap().add(&a).unwrap();
        assert_eq!(s.get(0, 0), Rational::from_integer(BigInt::from(huge) * 4));
        let g = a.gram();
        assert_eq!(g, p);
    }

    #[test]
    fn trace_of_product_matches_product() {
        let a = small(5, 2);
        let b = small(5, 9);
        assert_eq!(a.trace_of_product(&b).unwrap(), a.mul(&b).unwrap().trace().unwrap());
    }

    #[test]
    fn gram_matches_transpose_product() {
        let a = small(4, 3);
        assert_eq!(a.gram(), a.mul(&a.transpose()).unwrap());
    }

    #[test]
    fn pull_back_replicates_entries() {
        let l = LabelSet::numbered("t", 2);
        let q = LabeledMatrix::from_integers(l.clone(), l, 2, vec![1, -1, -1, 1]).unwrap();
        let omega = LabelSet::numbered("w", 4);
        let e = q.pull_back(omega, &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(e.get(0, 2), ratio(1, 4));
        assert_eq!(e.get(0, 1), ratio(-1, 4));
        assert_eq!(e.trace().unwrap(), q.trace().unwrap());
    }
}
