//! LC structures in adapted coordinates via defining functions.
//!
//! An integrable-or-not LC structure on a `(2n+1)`-manifold is stored as the
//! symmetric matrix of defining functions `f_ij(x, u, p)`. The distribution
//! frame is `E = < d/dx^i + p_i d/du + f_ij d/dp_j >`, `F = < d/dp_i >`; the
//! dual adapted coframe is `sigma = du - p_i dx^i`, `theta^i = dx^i`,
//! `pi_i = dp_i - f_ij dx^j`. Everything downstream (Fefferman metric,
//! Kropina Lagrangian, curve classification) reads these objects.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{poly, Expr, ExprError, VarSet};
use crate::linalg::halton_points;
use crate::model::Rat;
use num_traits::Zero;

#[derive(Debug, Error)]
pub enum LcError {
    #[error("defining matrix must be {n} x {n}")]
    BadShape { n: usize },
    #[error("defining matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("point/vector has wrong dimension: expected {expected}, got {got}")]
    BadDimension { expected: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid structure file: {0}")]
    File(String),
}

/// A point of M in adapted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointM {
    pub x: Vec<f64>,
    pub u: f64,
    pub p: Vec<f64>,
}

impl PointM {
    pub fn new(x: Vec<f64>, u: f64, p: Vec<f64>) -> PointM {
        assert_eq!(x.len(), p.len());
        PointM { x, u, p }
    }

    pub fn from_coords(n: usize, coords: &[f64]) -> Result<PointM, LcError> {
        if coords.len() != 2 * n + 1 {
            return Err(LcError::BadDimension { expected: 2 * n + 1, got: coords.len() });
        }
        Ok(PointM {
            x: coords[..n].to_vec(),
            u: coords[n],
            p: coords[n + 1..].to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Coordinates in (x, u, p) order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.u);
        v.extend_from_slice(&self.p);
        v
    }
}

/// LC structure: dimension parameter `n` and the symmetric matrix of
/// defining functions over the adapted variables (x1..xn, u, p1..pn).
#[derive(Debug, Clone)]
pub struct LcStructure {
    n: usize,
    vars: VarSet,
    f: Vec<Vec<Expr>>,
}

#[derive(Serialize, Deserialize)]
struct StructureFile {
    n: usize,
    f: Vec<Vec<String>>,
}

impl LcStructure {
    /// Build from a full symmetric matrix of expressions. Symmetry of the
    /// stored trees is required, not just semantic symmetry.
    pub fn new(n: usize, f: Vec<Vec<Expr>>) -> Result<Self, LcError> {
        assert!(n >= 1);
        if f.len() != n || f.iter().any(|row| row.len() != n) {
            return Err(LcError::BadShape { n });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if f[i][j] != f[j][i] {
                    return Err(LcError::NotSymmetric { i, j });
                }
            }
        }
        Ok(LcStructure { n, vars: VarSet::adapted(n), f })
    }

    /// Parse a structure from source strings (full symmetric matrix).
    pub fn from_strings(n: usize, sources: &[Vec<String>]) -> Result<Self, LcError> {
        let vars = VarSet::adapted(n);
        if sources.len() != n || sources.iter().any(|r| r.len() != n) {
            return Err(LcError::BadShape { n });
        }
        let mut f = Vec::with_capacity(n);
        for row in sources {
            let mut out = Vec::with_capacity(n);
            for src in row {
                out.push(Expr::parse(src, &vars)?);
            }
            f.push(out);
        }
        Self::new(n, f)
    }

    /// Load the JSON structure file `{ "n": int, "f": [[string]] }`.
    pub fn from_json(text: &str) -> Result<Self, LcError> {
        let file: StructureFile =
            serde_json::from_str(text).map_err(|e| LcError::File(e.to_string()))?;
        Self::from_strings(file.n, &file.f)
    }

    pub fn to_json(&self) -> String {
        let file = StructureFile {
            n: self.n,
            f: self
                .f
                .iter()
                .map(|row| row.iter().map(|e| e.print(&self.vars)).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).unwrap()
    }

    /// The flat structure (all defining functions zero).
    pub fn flat(n: usize) -> Self {
        let f = vec![vec![Expr::zero(); n]; n];
        Self::new(n, f).unwrap()
    }

    /// The dimension-3 worked example `f = (p + e^{-2x} p^3) / 2`.
    pub fn example() -> Self {
        Self::from_strings(
            1,
            &[vec!["0.5*(p1 + exp(-2*x1)*p1^3)".to_string()]],
        )
        .unwrap()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn f(&self, i: usize, j: usize) -> &Expr {
        &self.f[i][j]
    }

    pub fn f_matrix(&self) -> &Vec<Vec<Expr>> {
        &self.f
    }

    /// Variable index of x^i (0-based i).
    pub fn xi(&self, i: usize) -> usize {
        i
    }

    pub fn ui(&self) -> usize {
        self.n
    }

    /// Variable index of p_i (0-based i).
    pub fn pi(&self, i: usize) -> usize {
        self.n + 1 + i
    }

    fn eval_f(&self, i: usize, j: usize, q: &[f64]) -> Result<f64, LcError> {
        Ok(self.f[i][j].eval(&self.vars, q)?)
    }

    /// Frame of E at a point: the vectors `X_i` with components
    /// `(delta^i, p_i, f_i1..f_in)` in (x, u, p) order.
    pub fn frame_e(&self, q: &PointM) -> Result<Vec<Vec<f64>>, LcError> {
        let n = self.n;
        let coords = q.to_vec();
        let mut frame = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = vec![0.0; 2 * n + 1];
            v[i] = 1.0;
            v[n] = q.p[i];
            for j in 0..n {
                v[n + 1 + j] = self.eval_f(i, j, &coords)?;
            }
            frame.push(v);
        }
        Ok(frame)
    }

    /// Adapted coframe at a point, as covector rows in (x, u, p) order.
    pub fn coframe(&self, q: &PointM) -> Result<CoframeValue, LcError> {
        let n = self.n;
        let coords = q.to_vec();
        let mut sigma = vec![0.0; 2 * n + 1];
        for i in 0..n {
            sigma[i] = -q.p[i];
        }
        sigma[n] = 1.0;
        let mut theta = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = vec![0.0; 2 * n + 1];
            row[i] = 1.0;
            theta.push(row);
        }
        let mut pi = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = vec![0.0; 2 * n + 1];
            for j in 0..n {
                row[j] = -self.eval_f(i, j, &coords)?;
            }
            row[n + 1 + i] = 1.0;
            pi.push(row);
        }
        Ok(CoframeValue { sigma, theta, pi })
    }

    /// Frame derivative `X_i(h) = dh/dx^i + p_i dh/du + f_im dh/dp_m` as an
    /// expression.
    pub fn frame_derivative(&self, i: usize, h: &Expr) -> Expr {
        let n = self.n;
        let mut acc = h.diff(self.xi(i));
        acc = Expr::add(
            acc,
            Expr::mul(Expr::var(self.pi(i)), h.diff(self.ui())),
        );
        for m in 0..n {
            let dh = h.diff(self.pi(m));
            if dh.is_zero_const() {
                continue;
            }
            acc = Expr::add(acc, Expr::mul(self.f[i][m].clone(), dh));
        }
        acc.simplify()
    }

    /// Integrability defect expressions `D_ijl = X_i(f_jl) - X_j(f_il)`,
    /// antisymmetric in (i, j). E-integrability on a region is `D = 0`.
    pub fn defect_exprs(&self) -> Vec<Vec<Vec<Expr>>> {
        let n = self.n;
        let mut d = vec![vec![vec![Expr::zero(); n]; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for l in 0..n {
                    d[i][j][l] = Expr::sub(
                        self.frame_derivative(i, &self.f[j][l]),
                        self.frame_derivative(j, &self.f[i][l]),
                    )
                    .simplify();
                }
            }
        }
        d
    }

    /// Integrability defect evaluated at a point.
    pub fn integrability_defect(&self, q: &PointM) -> Result<Vec<Vec<Vec<f64>>>, LcError> {
        let n = self.n;
        let coords = q.to_vec();
        let exprs = self.defect_exprs();
        let mut out = vec![vec![vec![0.0; n]; n]; n];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    out[i][j][l] = exprs[i][j][l].eval(&self.vars, &coords)?;
                }
            }
        }
        Ok(out)
    }

    /// Decide integrability: symbolic simplify-to-zero attempt on the defect
    /// expressions first, then the max |D| over a deterministic
    /// low-discrepancy sample of the box against `tol`.
    pub fn is_integrable(&self, sample_box: &SampleBox, tol: f64) -> bool {
        self.max_defect(sample_box)
            .map(|m| m <= tol)
            .unwrap_or(false)
    }

    /// Max |D| over the sample box; `None` when evaluation fails everywhere.
    /// Returns exactly 0.0 without sampling when the defect vanishes
    /// symbolically.
    pub fn max_defect(&self, sample_box: &SampleBox) -> Option<f64> {
        let n = self.n;
        if n == 1 {
            // single index pair: automatically integrable in dimension 3
            return Some(0.0);
        }
        let exprs = self.defect_exprs();
        let all_zero = exprs.iter().flatten().flatten().all(|e| {
            poly::is_zero_symbolic(e, self.vars.len())
        });
        if all_zero {
            return Some(0.0);
        }
        let pts = sample_box.points(self.dim());
        let mut worst: f64 = 0.0;
        let mut any = false;
        for pt in &pts {
            let mut ok = true;
            let mut local: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        match exprs[i][j][l].eval(&self.vars, pt) {
                            Ok(v) => local = local.max(v.abs()),
                            Err(_) => {
                                ok = false;
                            }
                        }
                    }
                }
            }
            if ok {
                any = true;
                worst = worst.max(local);
            }
        }
        if any {
            Some(worst)
        } else {
            None
        }
    }

    /// Classify a tangent vector at a point by its coframe pairings.
    /// A pairing counts as zero when |value| <= 1e-12 (1 + |v|).
    pub fn classify_vector(&self, q: &PointM, v: &[f64]) -> Result<PointVectorKind, LcError> {
        if v.len() != self.dim() {
            return Err(LcError::BadDimension { expected: self.dim(), got: v.len() });
        }
        let co = self.coframe(q)?;
        let vnorm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let tol = 1e-12 * (1.0 + vnorm);
        let near_zero = |x: f64| x.abs() <= tol;
        if v.iter().all(|c| near_zero(*c)) {
            return Ok(PointVectorKind::Zero);
        }
        let s = pair(&co.sigma, v);
        if !near_zero(s) {
            return Ok(PointVectorKind::Transverse);
        }
        let th: Vec<f64> = co.theta.iter().map(|row| pair(row, v)).collect();
        let pi: Vec<f64> = co.pi.iter().map(|row| pair(row, v)).collect();
        let theta_zero = th.iter().all(|x| near_zero(*x));
        let pi_zero = pi.iter().all(|x| near_zero(*x));
        if pi_zero && !theta_zero {
            return Ok(PointVectorKind::InE);
        }
        if theta_zero && !pi_zero {
            return Ok(PointVectorKind::InF);
        }
        if theta_zero && pi_zero {
            return Ok(PointVectorKind::Zero);
        }
        let levi: f64 = th.iter().zip(&pi).map(|(a, b)| a * b).sum();
        if near_zero(levi) {
            Ok(PointVectorKind::NullGeneric)
        } else {
            Ok(PointVectorKind::ContactNonNull)
        }
    }

    /// Rescaled adapted coframe for a scale function: `sigma_hat = e^{2f}
    /// sigma`, `theta_hat^i = e^f (theta^i - 2 f^i sigma)`, `pi_hat_i =
    /// e^f (pi_i + 2 f_i sigma)`, where `df = f^i pi_i + f_i theta^i +
    /// f_0 sigma` is the coframe expansion of the differential.
    pub fn rescale_coframe(&self, fscale: &Expr) -> RescaledCoframe {
        let n = self.n;
        // df = sum (df/dx^j + p_j df/du + f_ij df/dp_i) theta^j
        //      + sum df/dp_i pi_i + df/du sigma
        let f_upper: Vec<Expr> = (0..n).map(|i| fscale.diff(self.pi(i))).collect();
        let f_lower: Vec<Expr> = (0..n)
            .map(|j| self.frame_derivative(j, fscale))
            .collect();
        RescaledCoframe {
            structure: self.clone(),
            fscale: fscale.clone(),
            f_upper,
            f_lower,
        }
    }

    /// Flat local embedding of a point into `R^{n+1,n+1}`:
    /// `v = (x, u)`, `w = (p, u - x.p)`; valid for the flat structure.
    pub fn flat_embedding(q: &PointM) -> (Vec<f64>, Vec<f64>) {
        let mut v = q.x.clone();
        v.push(q.u);
        let mut w = q.p.clone();
        let xp: f64 = q.x.iter().zip(&q.p).map(|(a, b)| a * b).sum();
        w.push(q.u - xp);
        (v, w)
    }

    /// Exact-rational flat embedding; the hyperquadric residual
    /// `v^j w_j - v^{n+1} + w_{n+1}` of the output is exactly zero.
    pub fn flat_embedding_exact(x: &[Rat], u: &Rat, p: &[Rat]) -> (Vec<Rat>, Vec<Rat>) {
        let mut v = x.to_vec();
        v.push(u.clone());
        let mut w = p.to_vec();
        let xp = x
            .iter()
            .zip(p)
            .map(|(a, b)| a * b)
            .fold(Rat::zero(), |s, t| s + t);
        w.push(u - xp);
        (v, w)
    }

    /// Hyperquadric residual of an embedded pair.
    pub fn hyperquadric_residual_exact(v: &[Rat], w: &[Rat]) -> Rat {
        let m = v.len();
        let mut acc = Rat::zero();
        for j in 0..m - 1 {
            acc += &v[j] * &w[j];
        }
        acc - &v[m - 1] + &w[m - 1]
    }
}

fn pair(row: &[f64], v: &[f64]) -> f64 {
    row.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Values of the adapted coframe at a point (covector rows, (x, u, p) order).
#[derive(Debug, Clone)]
pub struct CoframeValue {
    pub sigma: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
}

impl CoframeValue {
    pub fn sigma_of(&self, v: &[f64]) -> f64 {
        pair(&self.sigma, v)
    }

    pub fn theta_of(&self, i: usize, v: &[f64]) -> f64 {
        pair(&self.theta[i], v)
    }

    pub fn pi_of(&self, i: usize, v: &[f64]) -> f64 {
        pair(&self.pi[i], v)
    }
}

/// Tangent-vector classes on a curved LC manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointVectorKind {
    Zero,
    InE,
    InF,
    NullGeneric,
    ContactNonNull,
    Transverse,
}

impl PointVectorKind {
    pub fn name(self) -> &'static str {
        match self {
            PointVectorKind::Zero => "zero",
            PointVectorKind::InE => "in_E",
            PointVectorKind::InF => "in_F",
            PointVectorKind::NullGeneric => "null_generic",
            PointVectorKind::ContactNonNull => "contact_nonnull",
            PointVectorKind::Transverse => "transverse",
        }
    }
}

/// Deterministic sampling box for numeric integrability checks.
#[derive(Debug, Clone)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub count: usize,
}

impl SampleBox {
    pub fn centered(dim: usize, half_width: f64, count: usize) -> SampleBox {
        SampleBox {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
            count,
        }
    }

    fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        assert_eq!(self.lo.len(), dim);
        halton_points(dim, self.count, &self.lo, &self.hi)
    }
}

/// Symbolic rescaled coframe; evaluates covector rows at points.
pub struct RescaledCoframe {
    structure: LcStructure,
    fscale: Expr,
    f_upper: Vec<Expr>,
    f_lower: Vec<Expr>,
}

impl RescaledCoframe {
    /// Covector rows (sigma_hat, theta_hat^i, pi_hat_i) at a point.
    pub fn eval(&self, q: &PointM) -> Result<CoframeValue, LcError> {
        let s = &self.structure;
        let vars = s.vars();
        let coords = q.to_vec();
        let base = s.coframe(q)?;
        let fval = self.fscale.eval(vars, &coords)?;
        let ef = fval.exp();
        let e2f = (2.0 * fval).exp();
        let dim = s.dim();
        let sigma: Vec<f64> = base.sigma.iter().map(|c| e2f * c).collect();
        let mut theta = Vec::with_capacity(s.n());
        for i in 0..s.n() {
            let fu = self.f_upper[i].eval(vars, &coords)?;
            let mut row = vec![0.0; dim];
            for c in 0..dim {
                row[c] = ef * (base.theta[i][c] - 2.0 * fu * base.sigma[c]);
            }
            theta.push(row);
        }
        let mut pi = Vec::with_capacity(s.n());
        for i in 0..s.n() {
            let fl = self.f_lower[i].eval(vars, &coords)?;
            let mut row = vec![0.0; dim];
            for c in 0..dim {
                row[c] = ef * (base.pi[i][c] + 2.0 * fl * base.sigma[c]);
            }
            pi.push(row);
        }
        Ok(CoframeValue { sigma, theta, pi })
    }
}
