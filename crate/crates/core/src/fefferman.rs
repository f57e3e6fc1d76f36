//! Metric fields and the explicit Fefferman-type metrics.
//!
//! The representative Fefferman metric of an integrable LC structure on
//! `M x R_s` is assembled from the adapted coframe as
//!
//! ```text
//! g = theta^i . pi_i + sigma . varpi
//! varpi = 1/(n+2) sum_ij ( -1/(n+1) d2f_ij/dp_i dp_j sigma - 2 df_ij/dp_i theta^j ) + 2 ds
//! ```
//!
//! with the symmetric product convention `a . b = a (x) b + b (x) a`. That
//! convention makes `g(d/ds, v) = 2 sigma(v)` and reproduces the dimension-3
//! Kropina closed form without auxiliary factors. The same convention is used
//! for the Patterson-Walker metric `dx^a . dy_a - y_c Gamma^c_ab dx^a . dx^b`
//! and the projective Fefferman metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError, VarSet};
use crate::lc::{LcStructure, SampleBox};
use crate::linalg;
use crate::projective::ChristoffelField;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("coefficient matrix must be {d} x {d}")]
    BadShape { d: usize },
    #[error("coefficient matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("structure is not integrable (max defect {max_defect:e} over the sample box)")]
    NotIntegrable { max_defect: f64 },
    #[error("point has wrong dimension: expected {expected}, got {got}")]
    BadDimension { expected: usize, got: usize },
    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid metric file: {0}")]
    File(String),
}

/// Pseudo-Riemannian metric with exact coefficient expressions over named
/// coordinates.
#[derive(Debug, Clone)]
pub struct MetricField {
    coords: VarSet,
    g: Vec<Vec<Expr>>,
}

#[derive(Serialize, Deserialize)]
struct MetricFile {
    coords: Vec<String>,
    g: Vec<Vec<String>>,
}

impl MetricField {
    pub fn new(coords: VarSet, g: Vec<Vec<Expr>>) -> Result<Self, MetricError> {
        let d = coords.len();
        if g.len() != d || g.iter().any(|r| r.len() != d) {
            return Err(MetricError::BadShape { d });
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if g[i][j] != g[j][i] {
                    return Err(MetricError::NotSymmetric { i, j });
                }
            }
        }
        Ok(MetricField { coords, g })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &VarSet {
        &self.coords
    }

    pub fn coeff(&self, a: usize, b: usize) -> &Expr {
        &self.g[a][b]
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<Vec<f64>>, MetricError> {
        let d = self.dim();
        if point.len() != d {
            return Err(MetricError::BadDimension { expected: d, got: point.len() });
        }
        let mut out = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i..d {
                let v = self.g[i][j].eval(&self.coords, point)?;
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        Ok(out)
    }

    /// g(v, w) at a point.
    pub fn pairing(&self, point: &[f64], v: &[f64], w: &[f64]) -> Result<f64, MetricError> {
        let m = self.eval(point)?;
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += m[i][j] * v[i] * w[j];
            }
        }
        Ok(acc)
    }

    /// Coordinate derivatives of every coefficient, `out[l][a][b] = d g_ab / d x^l`.
    pub fn derivative_exprs(&self) -> Vec<Vec<Vec<Expr>>> {
        let d = self.dim();
        (0..d)
            .map(|l| {
                (0..d)
                    .map(|a| (0..d).map(|b| self.g[a][b].diff(l)).collect())
                    .collect()
            })
            .collect()
    }

    /// Signature (positive, negative, null eigenvalue counts) at a point.
    pub fn signature(&self, point: &[f64], tol: f64) -> Result<(usize, usize, usize), MetricError> {
        let m = self.eval(point)?;
        Ok(linalg::signature(&m, tol))
    }

    /// Max |d g_ab / d coord| at a point. Uses the symbolic derivative; when
    /// all coefficient derivatives simplify to the zero constant the result
    /// is exactly 0. The step `h` feeds a central-difference fallback when
    /// symbolic evaluation fails at the point.
    pub fn coordinate_derivative_max(
        &self,
        direction: &str,
        point: &[f64],
        h: f64,
    ) -> Result<f64, MetricError> {
        let idx = self
            .coords
            .index_of(direction)
            .ok_or_else(|| MetricError::UnknownCoordinate(direction.to_string()))?;
        let d = self.dim();
        let mut all_zero = true;
        let mut derivs = Vec::new();
        for a in 0..d {
            for b in a..d {
                let de = self.g[a][b].diff(idx);
                if !de.is_zero_const() {
                    all_zero = false;
                }
                derivs.push(de);
            }
        }
        if all_zero {
            return Ok(0.0);
        }
        let symbolic: Result<f64, ExprError> = derivs.iter().try_fold(0.0f64, |acc, e| {
            Ok(acc.max(e.eval(&self.coords, point)?.abs()))
        });
        match symbolic {
            Ok(v) => Ok(v),
            Err(_) => {
                let mut fwd = point.to_vec();
                let mut bwd = point.to_vec();
                fwd[idx] += h;
                bwd[idx] -= h;
                let gf = self.eval(&fwd)?;
                let gb = self.eval(&bwd)?;
                let mut worst: f64 = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        worst = worst.max(((gf[a][b] - gb[a][b]) / (2.0 * h)).abs());
                    }
                }
                Ok(worst)
            }
        }
    }

    pub fn to_json(&self) -> String {
        let file = MetricFile {
            coords: self.coords.names().to_vec(),
            g: self
                .g
                .iter()
                .map(|row| row.iter().map(|e| e.print(&self.coords)).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self, MetricError> {
        let file: MetricFile =
            serde_json::from_str(text).map_err(|e| MetricError::File(e.to_string()))?;
        let coords = VarSet::new(file.coords);
        let mut g = Vec::with_capacity(file.g.len());
        for row in &file.g {
            let mut out = Vec::with_capacity(row.len());
            for src in row {
                out.push(Expr::parse(src, &coords)?);
            }
            g.push(out);
        }
        Self::new(coords, g)
    }
}

/// Symbolic covector: one coefficient expression per coordinate.
#[derive(Debug, Clone)]
pub struct Covector(pub Vec<Expr>);

impl Covector {
    fn zero(d: usize) -> Covector {
        Covector(vec![Expr::zero(); d])
    }

    fn single(d: usize, idx: usize) -> Covector {
        let mut c = Covector::zero(d);
        c.0[idx] = Expr::one();
        c
    }

    fn add_scaled(&mut self, other: &Covector, factor: &Expr) {
        for (mine, theirs) in self.0.iter_mut().zip(&other.0) {
            if theirs.is_zero_const() {
                continue;
            }
            let term = Expr::mul(factor.clone(), theirs.clone());
            *mine = Expr::add(mine.clone(), term).simplify();
        }
    }
}

/// Accumulate `a . b = a (x) b + b (x) a` into a coefficient matrix,
/// mirroring identical trees across the diagonal.
fn add_sym_product(g: &mut [Vec<Expr>], a: &Covector, b: &Covector) {
    let d = g.len();
    for i in 0..d {
        for j in i..d {
            let t1 = Expr::mul(a.0[i].clone(), b.0[j].clone());
            let t2 = Expr::mul(b.0[i].clone(), a.0[j].clone());
            let e = Expr::add(g[i][j].clone(), Expr::add(t1, t2)).simplify();
            g[i][j] = e.clone();
            g[j][i] = e;
        }
    }
}

/// Symbolic adapted coframe over the Fefferman coordinates (x, u, p, s).
fn symbolic_coframe(s: &LcStructure) -> (Covector, Vec<Covector>, Vec<Covector>) {
    let n = s.n();
    let d = 2 * n + 2;
    let mut sigma = Covector::zero(d);
    for i in 0..n {
        sigma.0[i] = Expr::neg(Expr::var(s.pi(i))).simplify();
    }
    sigma.0[s.ui()] = Expr::one();
    let theta: Vec<Covector> = (0..n).map(|i| Covector::single(d, i)).collect();
    let mut pi = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Covector::zero(d);
        for j in 0..n {
            row.0[j] = Expr::neg(s.f(i, j).clone()).simplify();
        }
        row.0[s.pi(i)] = Expr::one();
        pi.push(row);
    }
    (sigma, theta, pi)
}

/// The representative Fefferman metric of an LC structure, over the
/// coordinates (x1..xn, u, p1..pn, s). Coefficients are independent of `s`;
/// the fiber enters only through the `sigma . 2 ds` term. The integrability
/// hypothesis is the caller's responsibility here; see
/// [`build_fefferman_guarded`].
pub fn build_fefferman(s: &LcStructure) -> MetricField {
    let n = s.n();
    let d = 2 * n + 2;
    let coords = VarSet::fefferman(n);
    let (sigma, theta, pi) = symbolic_coframe(s);

    // varpi = -S2/((n+1)(n+2)) sigma - 2/(n+2) sum_j T_j theta^j + 2 ds
    // with S2 = sum_ij d2 f_ij / dp_i dp_j and T_j = sum_i d f_ij / dp_i.
    let mut s2 = Expr::zero();
    for i in 0..n {
        for j in 0..n {
            s2 = Expr::add(s2, s.f(i, j).diff(s.pi(i)).diff(s.pi(j)));
        }
    }
    let s2 = s2.simplify();
    let mut varpi = Covector::zero(d);
    let sigma_factor =
        Expr::mul(Expr::Const(-1.0 / (((n + 1) * (n + 2)) as f64)), s2).simplify();
    varpi.add_scaled(&sigma, &sigma_factor);
    for j in 0..n {
        let mut tj = Expr::zero();
        for i in 0..n {
            tj = Expr::add(tj, s.f(i, j).diff(s.pi(i)));
        }
        let factor = Expr::mul(Expr::Const(-2.0 / ((n + 2) as f64)), tj.simplify()).simplify();
        varpi.add_scaled(&theta[j], &factor);
    }
    varpi.0[d - 1] = Expr::Const(2.0);

    let mut g = vec![vec![Expr::zero(); d]; d];
    for i in 0..n {
        add_sym_product(&mut g, &theta[i], &pi[i]);
    }
    add_sym_product(&mut g, &sigma, &varpi);
    MetricField::new(coords, g).expect("construction is symmetric")
}

/// As [`build_fefferman`], re-checking integrability numerically over the
/// sample box first.
pub fn build_fefferman_guarded(
    s: &LcStructure,
    sample_box: &SampleBox,
    tol: f64,
) -> Result<MetricField, MetricError> {
    let max_defect = s.max_defect(sample_box).unwrap_or(f64::INFINITY);
    if max_defect > tol {
        return Err(MetricError::NotIntegrable { max_defect });
    }
    Ok(build_fefferman(s))
}

/// Hand-expanded dimension-3 closed form of the Fefferman metric, assembled
/// coefficient-by-coefficient rather than through the coframe machinery;
/// used to cross-check [`build_fefferman`] for n = 1. Coordinates
/// (x1, u, p1, s), writing f for the single defining function:
///
/// ```text
/// g_xx = -2f + 4/3 p f_p - 1/3 p^2 f_pp     g_xu = 1/3 p f_pp - 2/3 f_p
/// g_uu = -1/3 f_pp                          g_xp = 1
/// g_xs = -2p                                g_us = 2
/// ```
pub fn fefferman_n1_closed_form(s: &LcStructure) -> MetricField {
    assert_eq!(s.n(), 1, "closed form is the 3-dimensional display");
    let coords = VarSet::fefferman(1);
    let f = s.f(0, 0).clone();
    let p = Expr::var(s.pi(0));
    let fp = f.diff(s.pi(0));
    let fpp = fp.diff(s.pi(0));
    let d = 4;
    let mut g = vec![vec![Expr::zero(); d]; d];
    let g_xx = Expr::add(
        Expr::mul(Expr::Const(-2.0), f.clone()),
        Expr::add(
            Expr::mul(Expr::Const(4.0 / 3.0), Expr::mul(p.clone(), fp.clone())),
            Expr::mul(
                Expr::Const(-1.0 / 3.0),
                Expr::mul(Expr::mul(p.clone(), p.clone()), fpp.clone()),
            ),
        ),
    )
    .simplify();
    let g_xu = Expr::add(
        Expr::mul(Expr::Const(1.0 / 3.0), Expr::mul(p.clone(), fpp.clone())),
        Expr::mul(Expr::Const(-2.0 / 3.0), fp),
    )
    .simplify();
    let g_uu = Expr::mul(Expr::Const(-1.0 / 3.0), fpp).simplify();
    g[0][0] = g_xx;
    g[0][1] = g_xu.clone();
    g[1][0] = g_xu;
    g[1][1] = g_uu;
    g[0][2] = Expr::one();
    g[2][0] = Expr::one();
    g[0][3] = Expr::mul(Expr::Const(-2.0), p.clone()).simplify();
    g[3][0] = Expr::mul(Expr::Const(-2.0), p).simplify();
    g[1][3] = Expr::Const(2.0);
    g[3][1] = Expr::Const(2.0);
    MetricField::new(coords, g).expect("symmetric by construction")
}

/// Patterson-Walker metric on the cotangent bundle of an affine manifold:
/// `dx^a . dy_a - y_c Gamma^c_ab dx^a . dx^b` over (x1..xm, y1..ym).
/// The connection must be special (trace-free), which the
/// [`ChristoffelField`] constructor enforces.
pub fn build_patterson_walker(gamma: &ChristoffelField) -> MetricField {
    let m = gamma.m();
    let coords = VarSet::patterson_walker(m);
    let d = 2 * m;
    let mut g = vec![vec![Expr::zero(); d]; d];
    for a in 0..m {
        // dx^a . dy_a
        g[a][m + a] = Expr::one();
        g[m + a][a] = Expr::one();
    }
    for a in 0..m {
        for b in 0..m {
            // -(y_c Gamma^c_ab) dx^a (x) dx^b appears twice via the
            // symmetric product.
            let mut coeff = Expr::zero();
            for c in 0..m {
                coeff = Expr::add(
                    coeff,
                    Expr::mul(Expr::var(m + c), gamma.entry(c, a, b).clone()),
                );
            }
            let coeff = Expr::mul(Expr::Const(-2.0), coeff).simplify();
            g[a][b] = Expr::add(g[a][b].clone(), coeff).simplify();
        }
    }
    MetricField::new(coords, g).expect("symmetric by construction")
}

/// Fefferman metric induced by a projective structure, over (x, u, p, s):
/// `(Gamma^{n+1}_bc - p_k Gamma^k_bc) dx^b . dx^c + dx^i . dp_i
///  + 2 (du - p_i dx^i) . ds` with u = x^{n+1}.
pub fn build_fefferman_projective(gamma: &ChristoffelField) -> MetricField {
    let m = gamma.m();
    let n = m - 1;
    let coords = VarSet::fefferman(n);
    let d = 2 * n + 2;
    let mut g = vec![vec![Expr::zero(); d]; d];
    // base indices b, c run over (x1..xn, u); those are coordinates 0..=n
    for b in 0..m {
        for c in 0..m {
            let mut coeff = gamma.entry(m - 1, b, c).clone();
            for k in 0..n {
                let pk = Expr::var(n + 1 + k);
                coeff = Expr::sub(coeff, Expr::mul(pk, gamma.entry(k, b, c).clone()));
            }
            // the symmetric product doubles each slot
            let coeff = Expr::mul(Expr::Const(2.0), coeff).simplify();
            g[b][c] = Expr::add(g[b][c].clone(), coeff).simplify();
        }
    }
    for i in 0..n {
        g[i][n + 1 + i] = Expr::one();
        g[n + 1 + i][i] = Expr::one();
    }
    // 2 sigma . ds
    let s_idx = d - 1;
    g[n][s_idx] = Expr::Const(2.0);
    g[s_idx][n] = Expr::Const(2.0);
    for i in 0..n {
        let e = Expr::mul(Expr::Const(-2.0), Expr::var(n + 1 + i)).simplify();
        g[i][s_idx] = Expr::add(g[i][s_idx].clone(), e.clone()).simplify();
        g[s_idx][i] = Expr::add(g[s_idx][i].clone(), e).simplify();
    }
    MetricField::new(coords, g).expect("symmetric by construction")
}

/// Conformality experiment for the Patterson-Walker metric under a
/// projective change of connection by `Upsilon = d fscale`: pulling the
/// metric of the changed (raw) connection back along the fiber rescaling
/// `(x, y) -> (x, e^{2 fscale(x)} y)` reproduces `e^{2 fscale} g`. Returns
/// the max absolute deviation over the sample points.
pub fn pw_conformal_experiment(
    gamma: &ChristoffelField,
    fscale: &Expr,
    points: usize,
) -> Result<f64, MetricError> {
    let m = gamma.m();
    let d = 2 * m;
    let base_coords = gamma.coords().clone();
    let g = build_patterson_walker(gamma);
    let changed = crate::projective::projective_change(gamma, fscale);
    // evaluate the PW formula for the raw (non-trace-free) connection
    let changed_at = |x: &[f64], y: &[f64]| -> Result<Vec<Vec<f64>>, MetricError> {
        let mut out = vec![vec![0.0; d]; d];
        for a in 0..m {
            out[a][m + a] = 1.0;
            out[m + a][a] = 1.0;
        }
        for a in 0..m {
            for b in 0..m {
                let mut acc = 0.0;
                for c in 0..m {
                    acc += y[c] * changed[c][a][b].eval(&base_coords, x)?;
                }
                out[a][b] = -2.0 * acc;
            }
        }
        Ok(out)
    };
    let pts = linalg::halton_points(d, points, &vec![-0.7; d], &vec![0.7; d]);
    let mut worst: f64 = 0.0;
    for q in &pts {
        let (x, y) = q.split_at(m);
        let fval = fscale.eval(&base_coords, x)?;
        let e2f = (2.0 * fval).exp();
        // image of the fiber rescaling and its Jacobian
        let y_img: Vec<f64> = y.iter().map(|v| e2f * v).collect();
        let df: Vec<f64> = (0..m)
            .map(|a| fscale.diff(a).eval(&base_coords, x))
            .collect::<Result<_, _>>()?;
        let mut jac = vec![vec![0.0; d]; d];
        for a in 0..m {
            jac[a][a] = 1.0;
        }
        for i in 0..m {
            jac[m + i][m + i] = e2f;
            for a in 0..m {
                jac[m + i][a] = 2.0 * df[a] * e2f * y[i];
            }
        }
        let g_changed = changed_at(x, &y_img)?;
        let mut pulled = vec![vec![0.0; d]; d];
        for b in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for al in 0..d {
                    for de in 0..d {
                        acc += jac[al][b] * g_changed[al][de] * jac[de][c];
                    }
                }
                pulled[b][c] = acc;
            }
        }
        let g0 = g.eval(q)?;
        for a in 0..d {
            for b in 0..d {
                worst = worst.max((pulled[a][b] - e2f * g0[a][b]).abs());
            }
        }
    }
    Ok(worst)
}

/// Branch of the fiber-coordinate transformation to Patterson-Walker
/// coordinates, fixing the sign of `y_{n+1} = (+/-) e^{-2s}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwBranch {
    Plus,
    Minus,
}

impl PwBranch {
    fn sign(self) -> f64 {
        match self {
            PwBranch::Plus => 1.0,
            PwBranch::Minus => -1.0,
        }
    }
}

/// Map a Fefferman point (x1..xn, u, p1..pn, s) to Patterson-Walker
/// coordinates (x1..x^{n+1}, y_1..y_{n+1}): `y_i = -p_i y_{n+1}`,
/// `y_{n+1} = (+/-) e^{-2s}`.
pub fn pw_transform(point: &[f64], branch: PwBranch) -> Vec<f64> {
    let d = point.len();
    assert!(d >= 4 && d % 2 == 0);
    let n = (d - 2) / 2;
    let s = point[d - 1];
    let y_last = branch.sign() * (-2.0 * s).exp();
    let mut out = Vec::with_capacity(d);
    out.extend_from_slice(&point[..n + 1]); // x^1..x^n, x^{n+1} = u
    for i in 0..n {
        out.push(-point[n + 1 + i] * y_last);
    }
    out.push(y_last);
    out
}

/// Inverse of [`pw_transform`]: `p_i = -y_i / y_{n+1}`,
/// `s = -1/2 ln |y_{n+1}|`. The branch is read from the sign of `y_{n+1}`.
pub fn pw_transform_inverse(point: &[f64]) -> (Vec<f64>, PwBranch) {
    let d = point.len();
    assert!(d >= 4 && d % 2 == 0);
    let m = d / 2;
    let n = m - 1;
    let y_last = point[d - 1];
    assert!(y_last != 0.0, "y_{{n+1}} = 0 is outside the chart");
    let branch = if y_last > 0.0 { PwBranch::Plus } else { PwBranch::Minus };
    let mut out = Vec::with_capacity(d);
    out.extend_from_slice(&point[..m]);
    for i in 0..n {
        out.push(-point[m + i] / y_last);
    }
    out.push(-0.5 * y_last.abs().ln());
    (out, branch)
}

/// Numeric pullback of the Patterson-Walker metric under [`pw_transform`],
/// evaluated at a Fefferman point. The Jacobian is closed-form. Returns
/// (raw pullback, conformally normalized pullback, factor) where
/// `raw = factor * normalized` and `factor = -y_{n+1}`; the normalized
/// matrix is the one that matches [`build_fefferman_projective`].
pub fn pullback_patterson_walker(
    g_pw: &MetricField,
    point: &[f64],
    branch: PwBranch,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64), MetricError> {
    let d = point.len();
    let n = (d - 2) / 2;
    let image = pw_transform(point, branch);
    let y_last = image[d - 1];
    let gm = g_pw.eval(&image)?;
    // jac[alpha][beta] = d image^alpha / d point^beta
    let mut jac = vec![vec![0.0; d]; d];
    for a in 0..=n {
        jac[a][a] = 1.0;
    }
    for i in 0..n {
        // y_i = -p_i y_{n+1}(s), dy_{n+1}/ds = -2 y_{n+1}
        jac[n + 1 + i][n + 1 + i] = -y_last;
        jac[n + 1 + i][d - 1] = 2.0 * point[n + 1 + i] * y_last;
    }
    jac[d - 1][d - 1] = -2.0 * y_last;
    let mut raw = vec![vec![0.0; d]; d];
    for b in 0..d {
        for c in 0..d {
            let mut acc = 0.0;
            for al in 0..d {
                for de in 0..d {
                    acc += jac[al][b] * gm[al][de] * jac[de][c];
                }
            }
            raw[b][c] = acc;
        }
    }
    let factor = -y_last;
    let normalized = raw
        .iter()
        .map(|row| row.iter().map(|v| v / factor).collect())
        .collect();
    Ok((raw, normalized, factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::poly;
    use crate::linalg::halton_points;
    use crate::projective::fij_from_christoffels;

    #[test]
    fn flat_fefferman_coefficients() {
        // f = 0: g = dx^i . dp_i + (du - p_i dx^i) . 2 ds
        let s = LcStructure::flat(2);
        let g = build_fefferman(&s);
        let q = vec![0.3, -0.4, 0.7, 0.25, -1.5, 0.0];
        let m = g.eval(&q).unwrap();
        let d = 6;
        let mut expect = vec![vec![0.0; d]; d];
        expect[0][3] = 1.0;
        expect[3][0] = 1.0;
        expect[1][4] = 1.0;
        expect[4][1] = 1.0;
        expect[2][5] = 2.0;
        expect[5][2] = 2.0;
        expect[0][5] = -2.0 * q[3];
        expect[5][0] = -2.0 * q[3];
        expect[1][5] = -2.0 * q[4];
        expect[5][1] = -2.0 * q[4];
        for a in 0..d {
            for b in 0..d {
                assert!(
                    (m[a][b] - expect[a][b]).abs() < 1e-15,
                    "({a},{b}): {} vs {}",
                    m[a][b],
                    expect[a][b]
                );
            }
        }
    }

    #[test]
    fn example_varpi_values() {
        // At (x, u, p, s) = (0, 0, 1, 0): f_p = 2, f_pp = 3, so
        // varpi = -1/2 sigma - 4/3 dx + 2 ds.
        let s = LcStructure::example();
        let g = build_fefferman(&s);
        let q = vec![0.0, 0.0, 1.0, 0.0];
        let m = g.eval(&q).unwrap();
        // g(d/du, d/du) = 2 sigma(du) varpi(du) = 2 * (-1/2) = -1
        assert!((m[1][1] + 1.0).abs() < 1e-14);
        // g(d/du, d/ds) = 2 sigma(du) = 2
        assert!((m[1][3] - 2.0).abs() < 1e-14);
        // g(d/dx, d/ds) = 2 sigma(dx) = -2p = -2
        assert!((m[0][3] + 2.0).abs() < 1e-14);
        // varpi(d/dx) = (-1/2)(-p) - 4/3 = -5/6;
        // g_xu = sigma_x varpi_u + sigma_u varpi_x = (-1)(-1/2) + (-5/6) = -1/3
        assert!((m[0][1] + 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn n1_closed_form_matches_builder() {
        for s in [LcStructure::example(), LcStructure::flat(1)] {
            let full = build_fefferman(&s);
            let closed = fefferman_n1_closed_form(&s);
            let pts = halton_points(4, 200, &[-1.0; 4], &[1.0; 4]);
            for q in &pts {
                let a = full.eval(q).unwrap();
                let b = closed.eval(q).unwrap();
                for i in 0..4 {
                    for j in 0..4 {
                        assert!((a[i][j] - b[i][j]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn coefficients_are_s_free_and_k_is_killing() {
        let s = LcStructure::example();
        let g = build_fefferman(&s);
        let s_idx = g.coords().index_of("s").unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert!(poly::is_zero_symbolic(
                    &g.coeff(a, b).diff(s_idx),
                    g.coords().len()
                ));
            }
        }
        let q = vec![0.2, 0.1, 0.4, 1.7];
        assert_eq!(g.coordinate_derivative_max("s", &q, 1e-6).unwrap(), 0.0);
        // flat metric is also u-independent
        let flat = build_fefferman(&LcStructure::flat(1));
        assert_eq!(flat.coordinate_derivative_max("u", &q, 1e-6).unwrap(), 0.0);
        // but the example metric does depend on x
        assert!(g.coordinate_derivative_max("x1", &q, 1e-6).unwrap() > 1e-3);
    }

    #[test]
    fn fiber_row_has_exact_coefficient_structure() {
        // g(d/ds, .) = 2 sigma as coefficient expressions: the s-row is
        // (-2 p_1 .. -2 p_n, 2, 0 .. 0, 0), so v is orthogonal to the fiber
        // field exactly when sigma(v) = 0
        for n in [1usize, 2, 3] {
            let mut f = vec![vec![Expr::zero(); n]; n];
            let vars = VarSet::adapted(n);
            f[0][0] = Expr::parse("u*p1 + sin(x1)", &vars).unwrap();
            let s = LcStructure::new(n, f).unwrap();
            let g = build_fefferman(&s);
            let d = 2 * n + 2;
            let nv = g.coords().len();
            for i in 0..n {
                let want = Expr::mul(Expr::Const(-2.0), Expr::var(n + 1 + i));
                assert!(poly::equal_symbolic(g.coeff(i, d - 1), &want, nv));
            }
            assert!(poly::equal_symbolic(g.coeff(n, d - 1), &Expr::Const(2.0), nv));
            for i in 0..n {
                assert!(g.coeff(n + 1 + i, d - 1).is_zero_const());
            }
            assert!(g.coeff(d - 1, d - 1).is_zero_const());
        }
    }

    #[test]
    fn split_signature_at_random_points() {
        let s = LcStructure::example();
        let g = build_fefferman(&s);
        let pts = halton_points(4, 100, &[-1.0; 4], &[1.0; 4]);
        for q in &pts {
            assert_eq!(g.signature(q, 1e-10).unwrap(), (2, 2, 0));
        }
        let s2 = LcStructure::flat(2);
        let g2 = build_fefferman(&s2);
        let pts = halton_points(6, 50, &[-1.0; 6], &[1.0; 6]);
        for q in &pts {
            assert_eq!(g2.signature(q, 1e-10).unwrap(), (3, 3, 0));
        }
    }

    #[test]
    fn guarded_builder_rejects_non_integrable() {
        let vars = VarSet::adapted(2);
        let mut f = vec![vec![Expr::zero(); 2]; 2];
        f[0][0] = Expr::parse("u", &vars).unwrap();
        let s = LcStructure::new(2, f).unwrap();
        let sbox = SampleBox::centered(5, 0.8, 32);
        assert!(matches!(
            build_fefferman_guarded(&s, &sbox, 1e-10),
            Err(MetricError::NotIntegrable { .. })
        ));
    }

    #[test]
    fn patterson_walker_examples() {
        // Gamma = 0: g = dx^a . dy_a
        let gamma = ChristoffelField::zero(2);
        let g = build_patterson_walker(&gamma);
        let q = vec![0.1, 0.2, 0.3, 0.4];
        let m = g.eval(&q).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(m[a][b], 0.0);
                assert_eq!(m[2 + a][2 + b], 0.0);
                assert_eq!(m[a][2 + b], if a == b { 1.0 } else { 0.0 });
            }
        }
        // single nonzero Gamma^2_{11} = 3 adds -2 y_2 * 3 on dx^1 (x) dx^1
        let coords = VarSet::base(2);
        let mut raw = ChristoffelField::zero_entries(2);
        raw[1][0][0] = Expr::parse("3", &coords).unwrap();
        let gamma = ChristoffelField::new(2, raw).unwrap();
        let g = build_patterson_walker(&gamma);
        let m = g.eval(&q).unwrap();
        assert!((m[0][0] - (-2.0 * q[3] * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn pw_transform_round_trip() {
        let pts = halton_points(4, 100, &[-1.0; 4], &[1.0; 4]);
        for branch in [PwBranch::Plus, PwBranch::Minus] {
            for q in &pts {
                let y = pw_transform(q, branch);
                let (back, b2) = pw_transform_inverse(&y);
                assert_eq!(b2, branch);
                for i in 0..4 {
                    assert!((back[i] - q[i]).abs() < 1e-12);
                }
            }
        }
        // p = 0, s = 0, plus branch: y = (0, 1)
        let y = pw_transform(&[0.5, 0.7, 0.0, 0.0], PwBranch::Plus);
        assert_eq!(&y[2..], &[0.0, 1.0]);
    }

    #[test]
    fn pw_pullback_matches_projective_fefferman() {
        let coords = VarSet::base(2);
        let mut raw = ChristoffelField::zero_entries(2);
        // a deterministic trace-free connection with x/u dependence
        raw[0][0][0] = Expr::parse("x1", &coords).unwrap();
        raw[1][0][1] = Expr::parse("-x1", &coords).unwrap();
        raw[1][1][0] = Expr::parse("-x1", &coords).unwrap();
        raw[1][0][0] = Expr::parse("u - 1", &coords).unwrap();
        raw[0][1][1] = Expr::parse("2*u", &coords).unwrap();
        raw[1][1][1] = Expr::parse("-2*u", &coords).unwrap();
        raw[0][0][1] = Expr::parse("2*u", &coords).unwrap();
        raw[0][1][0] = Expr::parse("2*u", &coords).unwrap();
        let gamma = ChristoffelField::new(2, raw).unwrap();
        let g_pw = build_patterson_walker(&gamma);
        let g_proj = build_fefferman_projective(&gamma);
        let pts = halton_points(4, 100, &[-0.8; 4], &[0.8; 4]);
        for branch in [PwBranch::Plus, PwBranch::Minus] {
            for q in &pts {
                let (raw_pb, normalized, factor) =
                    pullback_patterson_walker(&g_pw, q, branch).unwrap();
                let want = g_proj.eval(q).unwrap();
                for a in 0..4 {
                    for b in 0..4 {
                        assert!(
                            (normalized[a][b] - want[a][b]).abs() < 1e-10,
                            "branch {branch:?} ({a},{b})"
                        );
                        assert!((raw_pb[a][b] - factor * normalized[a][b]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn projective_flat_equals_flat_fefferman() {
        let gamma = ChristoffelField::zero(3);
        let g1 = build_fefferman_projective(&gamma);
        let g2 = build_fefferman(&LcStructure::flat(2));
        let pts = halton_points(6, 20, &[-1.0; 6], &[1.0; 6]);
        for q in &pts {
            let a = g1.eval(q).unwrap();
            let b = g2.eval(q).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert!((a[i][j] - b[i][j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn projective_agrees_with_integrable_builder_n1() {
        let coords = VarSet::base(2);
        let mut raw = ChristoffelField::zero_entries(2);
        // trace-free: Gamma^1_{11} = -Gamma^2_{21}, Gamma^1_{12} = -Gamma^2_{22}
        raw[0][0][0] = Expr::parse("x1 + u", &coords).unwrap();
        raw[1][0][1] = Expr::parse("-(x1 + u)", &coords).unwrap();
        raw[1][1][0] = Expr::parse("-(x1 + u)", &coords).unwrap();
        raw[0][0][1] = Expr::parse("u^2", &coords).unwrap();
        raw[0][1][0] = Expr::parse("u^2", &coords).unwrap();
        raw[1][1][1] = Expr::parse("-u^2", &coords).unwrap();
        raw[1][0][0] = Expr::parse("3*x1", &coords).unwrap();
        raw[0][1][1] = Expr::parse("1 - u", &coords).unwrap();
        let gamma = ChristoffelField::new(2, raw).unwrap();
        let s = fij_from_christoffels(&gamma);
        let g1 = build_fefferman(&s);
        let g2 = build_fefferman_projective(&gamma);
        let pts = halton_points(4, 100, &[-1.0; 4], &[1.0; 4]);
        for q in &pts {
            let a = g1.eval(q).unwrap();
            let b = g2.eval(q).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((a[i][j] - b[i][j]).abs() < 1e-10, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn pw_conformal_under_projective_change() {
        let gamma = crate::projective::pseudo_random_trace_free(2, 9);
        let fscale = Expr::parse("0.3*x1 - 0.2*u + 0.1*x1*u", &VarSet::base(2)).unwrap();
        let dev = pw_conformal_experiment(&gamma, &fscale, 60).unwrap();
        assert!(dev < 1e-10, "conformality deviation {dev}");
    }

    #[test]
    fn projective_and_integrable_builders_coincide_on_cubic_structures() {
        // For defining functions induced by a trace-free connection the two
        // coordinate formulas are the same tensor: expanding sigma (.) varpi
        // term by term, the trace conditions cancel every mixed block, in
        // any dimension. (For n > 1 such structures are only half-integrable
        // and the induced conformal connection is not normal, but that is a
        // statement about the Cartan normalization, not about these two
        // coefficient tables.)
        for (m, seed) in [(3usize, 12u64), (4, 29)] {
            let gamma = crate::projective::pseudo_random_trace_free(m, seed);
            let s = fij_from_christoffels(&gamma);
            let g1 = build_fefferman(&s);
            let g2 = build_fefferman_projective(&gamma);
            let d = 2 * m;
            let pts = halton_points(d, 40, &vec![-0.8; d], &vec![0.8; d]);
            for q in &pts {
                let a = g1.eval(q).unwrap();
                let b = g2.eval(q).unwrap();
                for i in 0..d {
                    for j in 0..d {
                        assert!((a[i][j] - b[i][j]).abs() < 1e-10, "m={m} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn metric_json_round_trip() {
        let g = build_fefferman(&LcStructure::example());
        let json = g.to_json();
        let back = MetricField::from_json(&json).unwrap();
        let q = vec![0.3, -0.2, 0.9, 0.1];
        let a = g.eval(&q).unwrap();
        let b = back.eval(&q).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((a[i][j] - b[i][j]).abs() < 1e-15);
            }
        }
    }
}
