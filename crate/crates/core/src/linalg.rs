//! Small dense linear algebra: exact elimination over the rationals and
//! partial-pivoting elimination in `f64`.

#![allow(clippy::needless_range_loop)]

use num_traits::{One, Signed, Zero};

use crate::scalar::Rational;

/// Reduced row echelon form in place; returns the pivot columns.
pub fn rref(m: &mut [Vec<Rational>]) -> Vec<usize> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].recip();
        for v in m[r].iter_mut() {
            *v *= &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let delta = &f * &m[r][j];
                    m[i][j] -= delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(m: &[Vec<Rational>]) -> usize {
    let mut work = m.to_vec();
    rref(&mut work).len()
}

/// Determinant of a square matrix by Gaussian elimination.
pub fn det(m: &[Vec<Rational>]) -> Rational {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = Rational::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_zero()) else {
            return Rational::zero();
        };
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= &a[c][c];
        let inv = a[c][c].recip();
        for i in c + 1..n {
            if a[i][c].is_zero() {
                continue;
            }
            let f = &a[i][c] * &inv;
            for j in c..n {
                let delta = &f * &a[c][j];
                a[i][j] -= delta;
            }
        }
    }
    det
}

/// Basis of the right null space `{v : M v = 0}`.
pub fn null_space(m: &[Vec<Rational>]) -> Vec<Vec<Rational>> {
    let cols = m.first().map_or(0, Vec::len);
    let mut work = m.to_vec();
    let pivots = rref(&mut work);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Rational::zero(); cols];
            v[f] = Rational::one();
            for (r, &p) in pivots.iter().enumerate() {
                v[p] = -work[r][f].clone();
            }
            v
        })
        .collect()
}

/// Solution of `A x = b` with partial pivoting, plus `det A`.
///
/// Returns `None` when a pivot is exactly zero.
pub fn solve_f64(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c] == 0.0 {
            return None;
        }
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        for i in c + 1..n {
            let f = m[i][c] / m[c][c];
            if f != 0.0 {
                for j in c..=n {
                    m[i][j] -= f * m[c][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some((x, det))
}

/// Determinant with partial pivoting (zero when singular).
pub fn det_f64(a: &[Vec<f64>]) -> f64 {
    match a.len() {
        0 => 1.0,
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        n => solve_f64(a, &vec![0.0; n]).map_or(0.0, |(_, d)| d),
    }
}

pub fn inverse_f64(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let e: Vec<f64> = (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        cols.push(solve_f64(a, &e)?.0);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// Scales `v` so that entry `idx` equals one.
pub fn normalize_at(v: &[Rational], idx: usize) -> Option<Vec<Rational>> {
    if v[idx].is_zero() {
        return None;
    }
    let inv = v[idx].recip();
    Some(v.iter().map(|x| x * &inv).collect())
}

/// Index of the entry with the largest absolute value (first on ties).
pub fn largest_entry(v: &[Rational]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        if best.is_none_or(|b| x.abs() > v[b].abs()) {
            best = Some(i);
        }
    }
    best
}
