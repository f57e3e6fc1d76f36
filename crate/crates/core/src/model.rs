//! Exact linear algebra in the homogeneous model.
//!
//! The model space is the para-Hermitian vector space `V = R^{n+2,n+2}`,
//! stored through the eigenspace decomposition `V = V_+ (+) V_-` of the
//! para-complex structure `K`. A vector keeps its two eigencomponents as
//! rational `(n+2)`-vectors; the inner product pairs the dual eigenspaces,
//! `<v, w> = plus(v).minus(w) + minus(v).plus(w)`. The model LC manifold is
//! the set of para-complex null-lines `<v_+, v_->` with `v_- . v_+ = 0`.
//!
//! All arithmetic is exact (arbitrary-precision rationals): rank and
//! degeneracy decisions must not depend on floating tolerances. Model chains
//! and null-chains come out as bi-affine line families `<p0 + t p1, m0 + t m1>`
//! whose nullity holds identically in `t`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Exact scalar used throughout the model module.
pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    BigRational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Parse a rational literal: `-3`, `5/7` or a plain decimal like `0.25`.
pub fn parse_rat(s: &str) -> Result<Rat, ModelError> {
    let s = s.trim();
    let bad = || ModelError::BadRational(s.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad())?;
        let d: BigInt = den.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let i: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| bad())?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let f: BigInt = frac.parse().map_err(|_| bad())?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let abs = BigRational::new(i.magnitude().clone().into(), BigInt::one())
            + BigRational::new(f, scale);
        return Ok(if neg { -abs } else { abs });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected n = {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector is not in N_0: {0}")]
    NotInN0(String),
    #[error("not a para-complex null line: {0}")]
    NotNullLine(String),
    #[error("tangent vector is not transverse")]
    NotTransverse,
    #[error("tangent vector is not a generic null direction")]
    NotNullGeneric,
    #[error("the two lines coincide")]
    IdenticalLines,
    #[error("tangent images violate the skew condition")]
    NotSkew,
    #[error("matrix is singular")]
    Singular,
    #[error("invalid rational literal `{0}`")]
    BadRational(String),
}

fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).map(|(x, y)| x * y).fold(Rat::zero(), |s, t| s + t)
}

fn is_zero_vec(v: &[Rat]) -> bool {
    v.iter().all(|x| x.is_zero())
}

fn scaled(v: &[Rat], c: &Rat) -> Vec<Rat> {
    v.iter().map(|x| x * c).collect()
}

fn add_vec(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `b = c a` for some scalar c (a nonzero)?
fn is_multiple(a: &[Rat], b: &[Rat]) -> bool {
    let Some(piv) = a.iter().position(|x| !x.is_zero()) else {
        return is_zero_vec(b);
    };
    let lambda = &b[piv] / &a[piv];
    a.iter().zip(b).all(|(x, y)| *y == x * &lambda)
}

/// Row rank by exact Gaussian elimination.
pub fn rank(rows: &[Vec<Rat>]) -> usize {
    let mut m: Vec<Vec<Rat>> = rows.to_vec();
    let ncols = m.first().map(|r| r.len()).unwrap_or(0);
    let mut r = 0;
    for c in 0..ncols {
        let Some(piv) = (r..m.len()).find(|i| !m[*i][c].is_zero()) else {
            continue;
        };
        m.swap(r, piv);
        let inv = m[r][c].clone();
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let f = &m[i][c] / &inv;
                for j in c..ncols {
                    let sub = &m[r][j] * &f;
                    m[i][j] = &m[i][j] - &sub;
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

/// Exact inverse of a square rational matrix.
pub fn invert(m: &[Vec<Rat>]) -> Result<Vec<Vec<Rat>>, ModelError> {
    let n = m.len();
    let mut a: Vec<Vec<Rat>> = m.to_vec();
    let mut inv: Vec<Vec<Rat>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Rat::one() } else { Rat::zero() }).collect())
        .collect();
    for c in 0..n {
        let piv = (c..n).find(|r| !a[*r][c].is_zero()).ok_or(ModelError::Singular)?;
        a.swap(c, piv);
        inv.swap(c, piv);
        let d = a[c][c].clone();
        for j in 0..n {
            a[c][j] = &a[c][j] / &d;
            inv[c][j] = &inv[c][j] / &d;
        }
        for r in 0..n {
            if r != c && !a[r][c].is_zero() {
                let f = a[r][c].clone();
                for j in 0..n {
                    let s1 = &a[c][j] * &f;
                    a[r][j] = &a[r][j] - &s1;
                    let s2 = &inv[c][j] * &f;
                    inv[r][j] = &inv[r][j] - &s2;
                }
            }
        }
    }
    Ok(inv)
}

fn mat_vec(m: &[Vec<Rat>], v: &[Rat]) -> Vec<Rat> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Element of `V = R^{n+2,n+2}` through its eigencomponents: `plus` in the
/// basis `e_0..e_{n+1}` of `V_+`, `minus` in the dual basis `e^0..e^{n+1}`
/// of `V_-`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcVector {
    pub n: usize,
    pub plus: Vec<Rat>,
    pub minus: Vec<Rat>,
}

impl PcVector {
    pub fn new(n: usize, plus: Vec<Rat>, minus: Vec<Rat>) -> Result<Self, ModelError> {
        if plus.len() != n + 2 || minus.len() != n + 2 {
            return Err(ModelError::DimensionMismatch {
                expected: n + 2,
                got: plus.len().max(minus.len()),
            });
        }
        Ok(PcVector { n, plus, minus })
    }

    /// Standard basis vector `e_k` of `V_+`.
    pub fn basis_plus(n: usize, k: usize) -> Self {
        let mut plus = vec![Rat::zero(); n + 2];
        plus[k] = Rat::one();
        PcVector { n, plus, minus: vec![Rat::zero(); n + 2] }
    }

    /// Dual basis vector `e^k` of `V_-`.
    pub fn basis_minus(n: usize, k: usize) -> Self {
        let mut minus = vec![Rat::zero(); n + 2];
        minus[k] = Rat::one();
        PcVector { n, plus: vec![Rat::zero(); n + 2], minus }
    }

    pub fn add(&self, other: &PcVector) -> PcVector {
        PcVector {
            n: self.n,
            plus: add_vec(&self.plus, &other.plus),
            minus: add_vec(&self.minus, &other.minus),
        }
    }

    /// The para-complex structure `K(v) = (plus, -minus)`.
    pub fn para_complex(&self) -> PcVector {
        PcVector {
            n: self.n,
            plus: self.plus.clone(),
            minus: self.minus.iter().map(|x| -x).collect(),
        }
    }

    pub fn is_null(&self) -> bool {
        dot(&self.plus, &self.minus).is_zero()
    }
}

/// Split-signature pairing of the dual eigenspaces.
pub fn inner_product(v: &PcVector, w: &PcVector) -> Result<Rat, ModelError> {
    if v.n != w.n {
        return Err(ModelError::DimensionMismatch { expected: v.n, got: w.n });
    }
    Ok(dot(&v.plus, &w.minus) + dot(&v.minus, &w.plus))
}

/// Para-complex hull `<v, K(v)> = <v_+, v_->`, defined for `v` in `N_0`
/// (null, with both eigencomponents nonzero). This is the model Fefferman
/// projection of the real null-line spanned by `v`.
pub fn pc_hull(v: &PcVector) -> Result<PcLine, ModelError> {
    if is_zero_vec(&v.plus) || is_zero_vec(&v.minus) {
        return Err(ModelError::NotInN0(
            "an eigencomponent vanishes".to_string(),
        ));
    }
    if !v.is_null() {
        return Err(ModelError::NotInN0("vector is not null".to_string()));
    }
    PcLine::new(v.n, v.plus.clone(), v.minus.clone())
}

/// A para-complex null line `<v_+, v_->`, i.e. a point of the model LC
/// manifold. Representation is unique up to independent rescaling of the
/// two spanning vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcLine {
    pub n: usize,
    pub v_plus: Vec<Rat>,
    pub v_minus: Vec<Rat>,
}

impl PcLine {
    pub fn new(n: usize, v_plus: Vec<Rat>, v_minus: Vec<Rat>) -> Result<Self, ModelError> {
        if v_plus.len() != n + 2 || v_minus.len() != n + 2 {
            return Err(ModelError::DimensionMismatch {
                expected: n + 2,
                got: v_plus.len().max(v_minus.len()),
            });
        }
        if is_zero_vec(&v_plus) || is_zero_vec(&v_minus) {
            return Err(ModelError::NotNullLine("spanning vector is zero".into()));
        }
        if !dot(&v_minus, &v_plus).is_zero() {
            return Err(ModelError::NotNullLine(
                "dual pairing v_- . v_+ does not vanish".into(),
            ));
        }
        Ok(PcLine { n, v_plus, v_minus })
    }

    /// The origin `O = <e_0, e^{n+1}>`.
    pub fn origin(n: usize) -> PcLine {
        let mut v_plus = vec![Rat::zero(); n + 2];
        v_plus[0] = Rat::one();
        let mut v_minus = vec![Rat::zero(); n + 2];
        v_minus[n + 1] = Rat::one();
        PcLine { n, v_plus, v_minus }
    }

    /// Canonical representative: each part rescaled so its first nonzero
    /// coordinate equals one.
    pub fn canonical(&self) -> PcLine {
        let norm = |v: &[Rat]| {
            let piv = v.iter().position(|x| !x.is_zero()).expect("nonzero");
            let inv = v[piv].recip();
            scaled(v, &inv)
        };
        PcLine {
            n: self.n,
            v_plus: norm(&self.v_plus),
            v_minus: norm(&self.v_minus),
        }
    }

    pub fn same_line(&self, other: &PcLine) -> bool {
        self.n == other.n
            && is_multiple(&self.v_plus, &other.v_plus)
            && is_multiple(&self.v_minus, &other.v_minus)
    }
}

/// Types of nonzero model tangent vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentKind {
    Zero,
    InE,
    InF,
    NullGeneric,
    ContactNonNull,
    Transverse,
}

impl TangentKind {
    pub fn name(self) -> &'static str {
        match self {
            TangentKind::Zero => "zero",
            TangentKind::InE => "in_E",
            TangentKind::InF => "in_F",
            TangentKind::NullGeneric => "null_generic",
            TangentKind::ContactNonNull => "contact_nonnull",
            TangentKind::Transverse => "transverse",
        }
    }
}

/// Tangent vector of the model at a base line, stored as the ambient images
/// `w_+ = w(v_+)` in `V_+` and `w_- = w(v_-)` in `V_-` of the spanning pair,
/// subject to the skew condition `v_- . w_+ + w_- . v_+ = 0`.
///
/// In the block description at the origin this realizes
/// `e_0 -> X^i e_i + z e_{n+1}` and `e^{n+1} -> -(Y_j e^j + z e^0)`; the
/// minus-side sign matches the tangent vectors written in the model
/// chain/null-chain parametrizations.
#[derive(Debug, Clone)]
pub struct ModelTangent {
    pub base: PcLine,
    pub w_plus: Vec<Rat>,
    pub w_minus: Vec<Rat>,
}

impl ModelTangent {
    pub fn from_images(
        base: PcLine,
        w_plus: Vec<Rat>,
        w_minus: Vec<Rat>,
    ) -> Result<Self, ModelError> {
        if w_plus.len() != base.n + 2 || w_minus.len() != base.n + 2 {
            return Err(ModelError::DimensionMismatch {
                expected: base.n + 2,
                got: w_plus.len().max(w_minus.len()),
            });
        }
        let skew = dot(&base.v_minus, &w_plus) + dot(&w_minus, &base.v_plus);
        if !skew.is_zero() {
            return Err(ModelError::NotSkew);
        }
        Ok(ModelTangent { base, w_plus, w_minus })
    }

    /// Tangent at the origin from the block entries `(X, Y, z)` of `g_-`.
    pub fn at_origin(n: usize, x: &[Rat], y: &[Rat], z: Rat) -> Result<Self, ModelError> {
        if x.len() != n || y.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: x.len().max(y.len()) });
        }
        let mut w_plus = vec![Rat::zero(); n + 2];
        for i in 0..n {
            w_plus[i + 1] = x[i].clone();
        }
        w_plus[n + 1] = z.clone();
        let mut w_minus = vec![Rat::zero(); n + 2];
        w_minus[0] = -z;
        for j in 0..n {
            w_minus[j + 1] = -y[j].clone();
        }
        Self::from_images(PcLine::origin(n), w_plus, w_minus)
    }

    /// Tangent at an arbitrary base line from block entries, read in the
    /// deterministically completed adapted basis of the base.
    pub fn from_blocks(base: PcLine, x: &[Rat], y: &[Rat], z: Rat) -> Result<Self, ModelError> {
        let n = base.n;
        if x.len() != n || y.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: x.len().max(y.len()) });
        }
        let basis = AdaptedBasis::for_line(&base)?;
        let mut w_plus = vec![Rat::zero(); n + 2];
        for i in 0..n {
            w_plus = add_vec(&w_plus, &scaled(&basis.column(i + 1), &x[i]));
        }
        w_plus = add_vec(&w_plus, &scaled(&basis.column(n + 1), &z));
        let mut w_minus = scaled(&basis.dual_row(0), &-z.clone());
        for j in 0..n {
            w_minus = add_vec(&w_minus, &scaled(&basis.dual_row(j + 1), &-y[j].clone()));
        }
        Self::from_images(base, w_plus, w_minus)
    }

    /// `z` pairing, the transverse component: `v_- . w_+`.
    pub fn z_pairing(&self) -> Rat {
        dot(&self.base.v_minus, &self.w_plus)
    }

    /// `a = X^i Y_i` of the Gram classification, `a = -(w_- . w_+)`.
    pub fn a_pairing(&self) -> Rat {
        -dot(&self.w_minus, &self.w_plus)
    }

    /// Classification per the tangent-space lemma: read off the dimension
    /// and the restricted inner product of `W = im(w) + L` through the
    /// pairings `a` and `z`.
    pub fn classify(&self) -> TangentKind {
        let plus_in_l = is_multiple(&self.base.v_plus, &self.w_plus);
        let minus_in_l = is_multiple(&self.base.v_minus, &self.w_minus);
        if plus_in_l && minus_in_l {
            return TangentKind::Zero;
        }
        if !self.z_pairing().is_zero() {
            return TangentKind::Transverse;
        }
        if !self.a_pairing().is_zero() {
            return TangentKind::ContactNonNull;
        }
        match (plus_in_l, minus_in_l) {
            (false, true) => TangentKind::InE,
            (true, false) => TangentKind::InF,
            (false, false) => TangentKind::NullGeneric,
            (true, true) => unreachable!(),
        }
    }

    /// Gram matrix of the spanning set `(w_+, w_-, v_+, v_-)` of `W`,
    /// used as an independent classification oracle.
    pub fn gram(&self) -> Vec<Vec<Rat>> {
        let vecs: [(&[Rat], &[Rat]); 4] = [
            (&self.w_plus, &[]),
            (&[], &self.w_minus),
            (&self.base.v_plus, &[]),
            (&[], &self.base.v_minus),
        ];
        let zero = vec![Rat::zero(); self.base.n + 2];
        let pair = |a: (&[Rat], &[Rat]), b: (&[Rat], &[Rat])| {
            let ap = if a.0.is_empty() { &zero[..] } else { a.0 };
            let am = if a.1.is_empty() { &zero[..] } else { a.1 };
            let bp = if b.0.is_empty() { &zero[..] } else { b.0 };
            let bm = if b.1.is_empty() { &zero[..] } else { b.1 };
            dot(ap, bm) + dot(am, bp)
        };
        (0..4)
            .map(|i| (0..4).map(|j| pair(vecs[i], vecs[j])).collect())
            .collect()
    }
}

/// Adapted basis completion for a line `L = <v_+, v_->`: an invertible
/// matrix whose column 0 is `v_+` and whose inverse has `v_-` as its last
/// row. Middle columns span `ker(v_-)` complementary to `v_+`.
pub struct AdaptedBasis {
    pub cols: Vec<Vec<Rat>>,
    pub inv: Vec<Vec<Rat>>,
}

impl AdaptedBasis {
    pub fn for_line(line: &PcLine) -> Result<Self, ModelError> {
        let n = line.n;
        let dim = n + 2;
        let vm = &line.v_minus;
        let piv = vm.iter().position(|x| !x.is_zero()).expect("nonzero v_minus");
        // last column pairs to 1 with v_-
        let mut last = vec![Rat::zero(); dim];
        last[piv] = vm[piv].recip();
        // candidates spanning ker(v_-)
        let mut picked: Vec<Vec<Rat>> = vec![line.v_plus.clone()];
        for k in 0..dim {
            if picked.len() == n + 1 {
                break;
            }
            if k == piv {
                continue;
            }
            let mut cand = vec![Rat::zero(); dim];
            cand[k] = Rat::one();
            if !vm[k].is_zero() {
                let f = &vm[k] / &vm[piv];
                cand[piv] = -f;
            }
            let mut trial = picked.clone();
            trial.push(cand.clone());
            if rank(&trial) == trial.len() {
                picked.push(cand);
            }
        }
        if picked.len() != n + 1 {
            return Err(ModelError::Singular);
        }
        picked.push(last);
        // column matrix
        let mut mat = vec![vec![Rat::zero(); dim]; dim];
        for (j, col) in picked.iter().enumerate() {
            for i in 0..dim {
                mat[i][j] = col[i].clone();
            }
        }
        let inv = invert(&mat)?;
        let cols = picked;
        Ok(AdaptedBasis { cols, inv })
    }

    pub fn column(&self, j: usize) -> Vec<Rat> {
        self.cols[j].clone()
    }

    /// Row `k` of the inverse: the dual basis covector.
    pub fn dual_row(&self, k: usize) -> Vec<Rat> {
        self.inv[k].clone()
    }
}

/// Invertible transformation of `V` acting as `A` on `V_+` and `A^{-T}`
/// on `V_-`; preserves the pairing and the para-complex structure.
pub struct GroupElement {
    pub a: Vec<Vec<Rat>>,
    a_inv_t: Vec<Vec<Rat>>,
}

impl GroupElement {
    pub fn new(a: Vec<Vec<Rat>>) -> Result<Self, ModelError> {
        let inv = invert(&a)?;
        let dim = a.len();
        let mut a_inv_t = vec![vec![Rat::zero(); dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                a_inv_t[i][j] = inv[j][i].clone();
            }
        }
        Ok(GroupElement { a, a_inv_t })
    }

    pub fn apply_line(&self, line: &PcLine) -> PcLine {
        PcLine {
            n: line.n,
            v_plus: mat_vec(&self.a, &line.v_plus),
            v_minus: mat_vec(&self.a_inv_t, &line.v_minus),
        }
    }

    pub fn apply_tangent(&self, w: &ModelTangent) -> ModelTangent {
        ModelTangent {
            base: self.apply_line(&w.base),
            w_plus: mat_vec(&self.a, &w.w_plus),
            w_minus: mat_vec(&self.a_inv_t, &w.w_minus),
        }
    }
}

/// Bi-affine family of para-complex null lines `t -> <p0 + t p1, m0 + t m1>`.
/// Construction guarantees the dual pairing vanishes identically in `t`.
#[derive(Debug, Clone)]
pub struct ModelCurve {
    pub n: usize,
    pub p0: Vec<Rat>,
    pub p1: Vec<Rat>,
    pub m0: Vec<Rat>,
    pub m1: Vec<Rat>,
}

impl ModelCurve {
    pub fn at(&self, t: &Rat) -> PcLine {
        let v_plus = add_vec(&self.p0, &scaled(&self.p1, t));
        let v_minus = add_vec(&self.m0, &scaled(&self.m1, t));
        PcLine::new(self.n, v_plus, v_minus).expect("curve construction preserves nullity")
    }

    /// Whether a line belongs to the family (at some finite parameter).
    pub fn contains(&self, line: &PcLine) -> bool {
        self.parameter_of(line).is_some()
    }

    /// Solve `<p0 + t p1> = <line.v_plus>` for `t` and confirm on the minus
    /// side; `None` if the line is not on the (finite chart of the) curve.
    pub fn parameter_of(&self, line: &PcLine) -> Option<Rat> {
        let t = solve_affine_span(&self.p0, &self.p1, &line.v_plus)?;
        let candidate = self.at(&t);
        if candidate.same_line(line) {
            Some(t)
        } else {
            None
        }
    }

    /// Samples (t, v_plus, v_minus) as doubles for CSV/JSON output.
    pub fn sample_f64(&self, t0: f64, t1: f64, steps: usize) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        assert!(steps >= 1);
        (0..=steps)
            .map(|k| {
                let t = t0 + (t1 - t0) * (k as f64) / (steps as f64);
                let tr = approx_rat(t);
                let line = self.at(&tr);
                (
                    t,
                    line.v_plus.iter().map(|x| x.to_f64().unwrap()).collect(),
                    line.v_minus.iter().map(|x| x.to_f64().unwrap()).collect(),
                )
            })
            .collect()
    }
}

fn approx_rat(t: f64) -> Rat {
    // binary fraction with 40-bit fractional precision, exact for grid samples
    let scaled = (t * (1u64 << 40) as f64).round() as i64;
    BigRational::new(BigInt::from(scaled), BigInt::from(1u64 << 40))
}

/// Find `t` with `p0 + t p1` proportional to `target`, if any.
fn solve_affine_span(p0: &[Rat], p1: &[Rat], target: &[Rat]) -> Option<Rat> {
    // want rank [target, p0 + t p1] == 1: cross-ratios target_i (p0_j + t p1_j)
    // = target_j (p0_i + t p1_i) for all i, j. Solve from one nontrivial pair.
    let piv = target.iter().position(|x| !x.is_zero())?;
    // linear equation in t per coordinate i: target_piv (p0_i + t p1_i) = target_i (p0_piv + t p1_piv)
    let mut t_found: Option<Rat> = None;
    for i in 0..target.len() {
        if i == piv {
            continue;
        }
        let a = &target[piv] * &p1[i] - &target[i] * &p1[piv];
        let b = &target[i] * &p0[piv] - &target[piv] * &p0[i];
        if a.is_zero() {
            if !b.is_zero() {
                return None;
            }
            continue;
        }
        let t = b / a;
        match &t_found {
            None => t_found = Some(t),
            Some(prev) if *prev == t => {}
            Some(_) => return None,
        }
    }
    // all equations degenerate: p1 proportional within span; t = 0 works if p0 ~ target
    match t_found {
        Some(t) => Some(t),
        None => {
            if is_multiple(target, p0) {
                Some(Rat::zero())
            } else {
                None
            }
        }
    }
}

/// The model chain through `L` with transverse tangent `w`: the family of
/// para-complex null lines in the non-degenerate plane `U = L + im(w)`.
/// At the origin with the `g_{-2}` generator this is
/// `t -> <e_0 + t e_{n+1}, -t e^0 + e^{n+1}>`.
pub fn model_chain(line: &PcLine, w: &ModelTangent) -> Result<ModelCurve, ModelError> {
    if !line.same_line(&w.base) {
        return Err(ModelError::NotTransverse);
    }
    if w.classify() != TangentKind::Transverse {
        return Err(ModelError::NotTransverse);
    }
    let z = w.z_pairing();
    let a = w.a_pairing();
    let lam = &a / &z;
    let m1 = add_vec(&scaled(&line.v_minus, &lam), &w.w_minus);
    Ok(ModelCurve {
        n: line.n,
        p0: line.v_plus.clone(),
        p1: w.w_plus.clone(),
        m0: line.v_minus.clone(),
        m1,
    })
}

/// The generic model null-chain through `L` tangent to `w`, with the two
/// free parameters `a, b` indexing the family through a fixed direction:
/// at the origin `t -> <(1+at) e_0 + t e_1, -t e^n + (1+bt) e^{n+1}>`.
pub fn model_null_chain(
    line: &PcLine,
    w: &ModelTangent,
    a: &Rat,
    b: &Rat,
) -> Result<ModelCurve, ModelError> {
    if !line.same_line(&w.base) {
        return Err(ModelError::NotNullGeneric);
    }
    if w.classify() != TangentKind::NullGeneric {
        return Err(ModelError::NotNullGeneric);
    }
    let p1 = add_vec(&scaled(&line.v_plus, a), &w.w_plus);
    let m1 = add_vec(&scaled(&line.v_minus, b), &w.w_minus);
    Ok(ModelCurve {
        n: line.n,
        p0: line.v_plus.clone(),
        p1,
        m0: line.v_minus.clone(),
        m1,
    })
}

/// Result of the two-point connectivity decision for distinct model points.
#[derive(Debug, Clone)]
pub enum Connection {
    /// A unique connecting chain; the closed curve splits into two arcs
    /// between the points, both returned with `t` in `[0, 1]`.
    Chain { arcs: [ModelCurve; 2] },
    /// A one-parameter family of connecting generic null-chains;
    /// `family(k)` for nonzero `k` enumerates members, `k = 1` is stored.
    NullChainFamily { representative: ModelCurve },
    /// `L1 + L2` is not a para-complex plane, or the restricted product is
    /// half-degenerate; no canonical connecting curve exists.
    Degenerate { reason: String },
}

/// Decide how two distinct points of the model can be connected, per the
/// non-degenerate/null dichotomy for the plane `U = L1 + L2`.
pub fn connect(l1: &PcLine, l2: &PcLine) -> Result<Connection, ModelError> {
    if l1.n != l2.n {
        return Err(ModelError::DimensionMismatch { expected: l1.n, got: l2.n });
    }
    if l1.same_line(l2) {
        return Err(ModelError::IdenticalLines);
    }
    let plus_indep = !is_multiple(&l1.v_plus, &l2.v_plus);
    let minus_indep = !is_multiple(&l1.v_minus, &l2.v_minus);
    if !plus_indep || !minus_indep {
        return Ok(Connection::Degenerate {
            reason: "L1 + L2 has real dimension 3; not a para-complex plane".into(),
        });
    }
    let alpha = dot(&l2.v_minus, &l1.v_plus);
    let beta = dot(&l1.v_minus, &l2.v_plus);
    if !alpha.is_zero() && !beta.is_zero() {
        // arc A: <(1-t) v1+ + t v2+, (1-t) a v1- - t b v2->
        let arc = |sign_plus: i64, sign_minus: i64| ModelCurve {
            n: l1.n,
            p0: l1.v_plus.clone(),
            p1: add_vec(&scaled(&l2.v_plus, &rat(sign_plus)), &scaled(&l1.v_plus, &rat(-1))),
            m0: scaled(&l1.v_minus, &alpha),
            m1: add_vec(
                &scaled(&l2.v_minus, &(&beta * rat(sign_minus))),
                &scaled(&l1.v_minus, &-alpha.clone()),
            ),
        };
        return Ok(Connection::Chain {
            arcs: [arc(1, -1), arc(-1, 1)],
        });
    }
    if alpha.is_zero() && beta.is_zero() {
        let representative = null_family_member(l1, l2, &Rat::one());
        return Ok(Connection::NullChainFamily { representative });
    }
    Ok(Connection::Degenerate {
        reason: "restricted inner product on L1 + L2 is half-degenerate".into(),
    })
}

/// Member of the connecting null-chain family for `k != 0`; all members run
/// from `L1` at `t = 0` to `L2` at `t = 1`.
pub fn null_family_member(l1: &PcLine, l2: &PcLine, k: &Rat) -> ModelCurve {
    ModelCurve {
        n: l1.n,
        p0: l1.v_plus.clone(),
        p1: add_vec(&l2.v_plus, &scaled(&l1.v_plus, &rat(-1))),
        m0: l1.v_minus.clone(),
        m1: add_vec(&scaled(&l2.v_minus, k), &scaled(&l1.v_minus, &rat(-1))),
    }
}
