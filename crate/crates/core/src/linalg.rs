//! Small dense matrix helpers used by the metric/curve machinery.
//!
//! Everything here works on `Vec<Vec<f64>>` square matrices of the modest
//! dimensions that occur in this crate (d <= 2n+2). No external linear
//! algebra dependency is warranted for that.

/// Solve A x = b by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is singular to working precision.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.to_vec()).collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let (pivot, pval) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pval < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let d = m[col][col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = m[r][col] / d;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= factor * m[col][c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

/// Matrix inverse via column-wise solves.
pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a, &e)?);
    }
    let mut out = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            out[i][j] = col[i];
        }
    }
    Some(out)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|r| r.to_vec()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Signature (positive, negative, null) of a symmetric matrix, counting
/// eigenvalues against `tol`.
pub fn signature(a: &[Vec<f64>], tol: f64) -> (usize, usize, usize) {
    let eig = symmetric_eigenvalues(a);
    let pos = eig.iter().filter(|e| **e > tol).count();
    let neg = eig.iter().filter(|e| **e < -tol).count();
    (pos, neg, eig.len() - pos - neg)
}

/// Deterministic low-discrepancy points in a box, via the Halton sequence.
pub fn halton_points(dims: usize, count: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    assert!(dims <= PRIMES.len());
    (0..count)
        .map(|k| {
            (0..dims)
                .map(|d| {
                    let u = halton(k as u64 + 1, PRIMES[d]);
                    lo[d] + (hi[d] - lo[d]) * u
                })
                .collect()
        })
        .collect()
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}
