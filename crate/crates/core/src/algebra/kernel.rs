//! Integer product kernels over row-major numerator arrays.
//!
//! The caller picks the narrowest accumulator that cannot overflow, using the
//! bound `max|a| · max|b| · k`. Every partial sum is bounded by the same
//! quantity, so the choice is safe for any summation order.

use num_bigint::BigInt;
use num_traits::Zero;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Width {
    I64,
    I128,
    Big,
}

pub(crate) fn max_abs_i64(xs: &[i64]) -> u64 {
    xs.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0)
}

/// Narrowest accumulator for a sum of `k` products with the given bounds.
pub(crate) fn width_for(max_a: u64, max_b: u64, k: usize) -> Width {
    let bound = (max_a as u128)
        .checked_mul(max_b as u128)
        .and_then(|p| p.checked_mul(k.max(1) as u128));
    match bound {
        Some(b) if b <= i64::MAX as u128 => Width::I64,
        Some(b) if b <= i128::MAX as u128 => Width::I128,
        _ => Width::Big,
    }
}

/// `c = a · b` for `a: n×k`, `b: k×m`; skips zero entries of `a`.
pub(crate) fn mul_i64(a: &[i64], b: &[i64], n: usize, k: usize, m: usize) -> Vec<i64> {
    let mut c = vec![0i64; n * m];
    for i in 0..n {
        let row = &mut c[i * m..(i + 1) * m];
        for (kk, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (cj, &y) in row.iter_mut().zip(&b[kk * m..(kk + 1) * m]) {
                *cj += x * y;
            }
        }
    }
    c
}

pub(crate) fn mul_i128(a: &[i64], b: &[i64], n: usize, k: usize, m: usize) -> Vec<i128> {
    let mut c = vec![0i128; n * m];
    for i in 0..n {
        let row = &mut c[i * m..(i + 1) * m];
        for (kk, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x == 0 {
                continue;
            }
            let x = x as i128;
            for (cj, &y) in row.iter_mut().zip(&b[kk * m..(kk + 1) * m]) {
                *cj += x * y as i128;
            }
        }
    }
    c
}

pub(crate) fn mul_big(a: &[BigInt], b: &[BigInt], n: usize, k: usize, m: usize) -> Vec<BigInt> {
    let mut c = vec![BigInt::zero(); n * m];
    for i in 0..n {
        for kk in 0..k {
            let x = &a[i * k + kk];
            if x.is_zero() {
                continue;
            }
            for j in 0..m {
                let y = &b[kk * m + j];
                if !y.is_zero() {
                    c[i * m + j] += x * y;
                }
            }
        }
    }
    c
}

/// `c = a · aᵀ` for `a: n×k`. Only the upper triangle is computed.
pub(crate) fn gram_i64(a: &[i64], n: usize, k: usize) -> Vec<i64> {
    let mut c = vec![0i64; n * n];
    for i in 0..n {
        let ri = &a[i * k..(i + 1) * k];
        for j in i..n {
            let rj = &a[j * k..(j + 1) * k];
            let s: i64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
            c[i * n + j] = s;
            c[j * n + i] = s;
        }
    }
    c
}

pub(crate) fn gram_i128(a: &[i64], n: usize, k: usize) -> Vec<i128> {
    let mut c = vec![0i128; n * n];
    for i in 0..n {
        let ri = &a[i * k..(i + 1) * k];
        for j in i..n {
            let rj = &a[j * k..(j + 1) * k];
            let s: i128 = ri.iter().zip(rj).map(|(&x, &y)| x as i128 * y as i128).sum();
            c[i * n + j] = s;
            c[j * n + i] = s;
        }
    }
    c
}

pub(crate) fn gram_big(a: &[BigInt], n: usize, k: usize) -> Vec<BigInt> {
    let mut c = vec![BigInt::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let mut s = BigInt::zero();
            for kk in 0..k {
                let (x, y) = (&a[i * k + kk], &a[j * k + kk]);
                if !x.is_zero() && !y.is_zero() {
                    s += x * y;
                }
            }
            c[j * n + i] = s.clone();
            c[i * n + j] = s;
        }
    }
    c
}
