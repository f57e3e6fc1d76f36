//! The projective <-> LC dictionary.
//!
//! A projective structure on the (n+1)-dimensional leaf space, represented
//! by the Christoffel symbols of a special (trace-free) torsion-free affine
//! connection, induces an LC structure whose defining functions are the
//! cubic polynomials
//!
//! ```text
//! f_ij = -G^{n+1}_ij + p_k G^k_ij - p_j G^{n+1}_{n+1 i} - p_i G^{n+1}_{n+1 j}
//!        + p_i p_k G^k_{n+1 j} + p_j p_k G^k_{n+1 i}
//!        - p_i p_j G^{n+1}_{n+1 n+1} + p_i p_j p_k G^k_{n+1 n+1}
//! ```
//!
//! with `u = x^{n+1}`. Conversely, the polynomial coefficients of cubic
//! defining functions form a linear system that fixes all Christoffel
//! symbols of the trace-free representative; non-cubic defining functions
//! are rejected. For n = 1 the dictionary specializes to the classical
//! second-order ODE coefficients `A_0..A_3`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{poly, Expr, ExprError, VarSet};
use crate::lc::LcStructure;
use crate::linalg::halton_points;

#[derive(Debug, Error)]
pub enum ProjectiveError {
    #[error("christoffel tensor must be m x m x m with m = {m}")]
    BadShape { m: usize },
    #[error("christoffel tensor is not symmetric in the lower indices at ({c}, {a}, {b})")]
    NotSymmetric { c: usize, a: usize, b: usize },
    #[error("connection is not trace-free in lower index {c}")]
    NotTraceFree { c: usize },
    #[error("structure is not projective: {0}")]
    NotProjective(String),
    #[error("operation requires base dimension {expected}, got {got}")]
    BadDimension { expected: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid christoffel file: {0}")]
    File(String),
}

/// Zero decision for coefficient expressions: exact polynomial expansion
/// when possible, else deterministic sampling.
fn is_zero_expr(e: &Expr, vars: &VarSet) -> bool {
    if poly::is_zero_symbolic(e, vars.len()) {
        return true;
    }
    let d = vars.len();
    let pts = halton_points(d, 48, &vec![-0.9; d], &vec![0.9; d]);
    let mut checked = 0;
    for q in &pts {
        match e.eval(vars, q) {
            Ok(v) => {
                if v.abs() > 1e-10 {
                    return false;
                }
                checked += 1;
            }
            Err(_) => {}
        }
    }
    checked > 0
}

fn exprs_equal(a: &Expr, b: &Expr, vars: &VarSet) -> bool {
    is_zero_expr(&Expr::sub(a.clone(), b.clone()), vars)
}

/// Christoffel symbols `Gamma^c_ab` of a special torsion-free connection on
/// the base, as expressions over (x1..xn, u); symmetric in (a, b) and
/// trace-free: `sum_a Gamma^a_ac = 0`.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    m: usize,
    coords: VarSet,
    gamma: Vec<Vec<Vec<Expr>>>,
}

#[derive(Serialize, Deserialize)]
struct ChristoffelFile {
    m: usize,
    gamma: BTreeMap<String, String>,
}

impl ChristoffelField {
    pub fn new(m: usize, gamma: Vec<Vec<Vec<Expr>>>) -> Result<Self, ProjectiveError> {
        assert!(m >= 2);
        let coords = VarSet::base(m);
        if gamma.len() != m
            || gamma.iter().any(|g| g.len() != m || g.iter().any(|r| r.len() != m))
        {
            return Err(ProjectiveError::BadShape { m });
        }
        for c in 0..m {
            for a in 0..m {
                for b in (a + 1)..m {
                    if gamma[c][a][b] != gamma[c][b][a] {
                        return Err(ProjectiveError::NotSymmetric { c, a, b });
                    }
                }
            }
        }
        let field = ChristoffelField { m, coords, gamma };
        for c in 0..m {
            if !is_zero_expr(&field.trace_expr(c), &field.coords) {
                return Err(ProjectiveError::NotTraceFree { c });
            }
        }
        Ok(field)
    }

    pub fn zero(m: usize) -> Self {
        Self::new(m, Self::zero_entries(m)).unwrap()
    }

    /// Raw all-zero entry tensor, for building connections entry by entry.
    pub fn zero_entries(m: usize) -> Vec<Vec<Vec<Expr>>> {
        vec![vec![vec![Expr::zero(); m]; m]; m]
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coords(&self) -> &VarSet {
        &self.coords
    }

    pub fn entry(&self, c: usize, a: usize, b: usize) -> &Expr {
        &self.gamma[c][a][b]
    }

    pub fn entries(&self) -> &Vec<Vec<Vec<Expr>>> {
        &self.gamma
    }

    /// `sum_a Gamma^a_ac` as an expression.
    pub fn trace_expr(&self, c: usize) -> Expr {
        let mut acc = Expr::zero();
        for a in 0..self.m {
            acc = Expr::add(acc, self.gamma[a][a][c].clone());
        }
        acc.simplify()
    }

    /// Load `{ "m": int, "gamma": { "c,a,b": "expr" } }` with 1-based
    /// indices canonicalized to a <= b; omitted entries are zero.
    pub fn from_json(text: &str) -> Result<Self, ProjectiveError> {
        let file: ChristoffelFile =
            serde_json::from_str(text).map_err(|e| ProjectiveError::File(e.to_string()))?;
        let m = file.m;
        if m < 2 {
            return Err(ProjectiveError::File("m must be at least 2".into()));
        }
        let coords = VarSet::base(m);
        let mut gamma = Self::zero_entries(m);
        for (key, src) in &file.gamma {
            let parts: Vec<&str> = key.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(ProjectiveError::File(format!("bad index key `{key}`")));
            }
            let idx: Vec<usize> = parts
                .iter()
                .map(|p| p.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| ProjectiveError::File(format!("bad index key `{key}`")))?;
            let (c, a, b) = (idx[0], idx[1], idx[2]);
            if c < 1 || c > m || a < 1 || a > m || b < 1 || b > m {
                return Err(ProjectiveError::File(format!("index out of range in `{key}`")));
            }
            if a > b {
                return Err(ProjectiveError::File(format!(
                    "index key `{key}` must be canonicalized with a <= b"
                )));
            }
            let e = Expr::parse(src, &coords)?;
            gamma[c - 1][a - 1][b - 1] = e.clone();
            gamma[c - 1][b - 1][a - 1] = e;
        }
        Self::new(m, gamma)
    }

    pub fn to_json(&self) -> String {
        let mut map = BTreeMap::new();
        for c in 0..self.m {
            for a in 0..self.m {
                for b in a..self.m {
                    let e = &self.gamma[c][a][b];
                    if !e.is_zero_const() {
                        map.insert(
                            format!("{},{},{}", c + 1, a + 1, b + 1),
                            e.print(&self.coords),
                        );
                    }
                }
            }
        }
        serde_json::to_string_pretty(&ChristoffelFile { m: self.m, gamma: map }).unwrap()
    }
}

/// Defining functions of the LC structure induced by a projective structure:
/// the cubic polynomials of the module-level display.
pub fn fij_from_christoffels(gamma: &ChristoffelField) -> LcStructure {
    let m = gamma.m();
    let n = m - 1;
    let nn = m - 1; // index of x^{n+1} = u in 0-based base coordinates
    let pvar = |k: usize| Expr::var(n + 1 + k); // p_{k+1} in adapted coords
    let mut f = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in i..n {
            let mut acc = Expr::neg(gamma.entry(nn, i, j).clone());
            for k in 0..n {
                acc = Expr::add(acc, Expr::mul(pvar(k), gamma.entry(k, i, j).clone()));
            }
            acc = Expr::sub(acc, Expr::mul(pvar(j), gamma.entry(nn, nn, i).clone()));
            acc = Expr::sub(acc, Expr::mul(pvar(i), gamma.entry(nn, nn, j).clone()));
            for k in 0..n {
                acc = Expr::add(
                    acc,
                    Expr::mul(Expr::mul(pvar(i), pvar(k)), gamma.entry(k, nn, j).clone()),
                );
                acc = Expr::add(
                    acc,
                    Expr::mul(Expr::mul(pvar(j), pvar(k)), gamma.entry(k, nn, i).clone()),
                );
            }
            acc = Expr::sub(
                acc,
                Expr::mul(Expr::mul(pvar(i), pvar(j)), gamma.entry(nn, nn, nn).clone()),
            );
            for k in 0..n {
                acc = Expr::add(
                    acc,
                    Expr::mul(
                        Expr::mul(Expr::mul(pvar(i), pvar(j)), pvar(k)),
                        gamma.entry(k, nn, nn).clone(),
                    ),
                );
            }
            let acc = acc.simplify();
            f[i][j] = acc.clone();
            f[j][i] = acc;
        }
    }
    LcStructure::new(n, f).expect("symmetric by construction")
}

/// Recover the trace-free Christoffel representative from cubic defining
/// functions, or reject the structure as non-projective. The recovered
/// connection re-synthesizes the defining functions exactly, which is
/// verified before returning.
pub fn christoffels_from_fij(s: &LcStructure) -> Result<ChristoffelField, ProjectiveError> {
    let n = s.n();
    let m = n + 1;
    let nn = m - 1;
    let vars = s.vars();
    let pvars: Vec<usize> = (0..n).map(|k| s.pi(k)).collect();

    // polynomial expansion of every defining function in the p variables
    let mut expansions = Vec::new();
    for i in 0..n {
        let mut row = Vec::new();
        for j in 0..n {
            let pp = poly::expand_in(s.f(i, j), &pvars).ok_or_else(|| {
                ProjectiveError::NotProjective(format!(
                    "f_{}{} is not polynomial in the fiber variables",
                    i + 1,
                    j + 1
                ))
            })?;
            if pp.degree() > 3 {
                return Err(ProjectiveError::NotProjective(format!(
                    "f_{}{} has degree {} > 3 in p",
                    i + 1,
                    j + 1,
                    pp.degree()
                )));
            }
            row.push(pp);
        }
        expansions.push(row);
    }

    let mono = |entries: &[(usize, u32)]| {
        let mut e = vec![0u32; n];
        for (k, d) in entries {
            e[*k] += d;
        }
        e
    };

    let mut gamma = ChristoffelField::zero_entries(m);

    // constant coefficients: Gamma^{n+1}_{ij} = -c0_ij
    for i in 0..n {
        for j in i..n {
            let c0 = expansions[i][j].coeff(&mono(&[]));
            let e = Expr::neg(c0).simplify();
            gamma[nn][i][j] = e.clone();
            gamma[nn][j][i] = e;
        }
    }

    // cubic coefficients: beta_k = Gamma^k_{n+1,n+1} from f_11's p_1^2 p_k
    for k in 0..n {
        let beta = expansions[0][0].coeff(&mono(&[(0, 2), (k, 1)]));
        gamma[k][nn][nn] = beta;
    }

    // quadratic block: a_kj = Gamma^k_{n+1, j}; off-diagonal from
    // [p_i^2](f_ij), the diagonal and Gamma^{n+1}_{n+1 n+1} from the
    // d_i = [p_i^2](f_ii) system closed by the trace condition.
    let d_coeffs: Vec<Expr> = (0..n)
        .map(|i| expansions[i][i].coeff(&mono(&[(i, 2)])))
        .collect();
    let mut d_sum = Expr::zero();
    for d in &d_coeffs {
        d_sum = Expr::add(d_sum, d.clone());
    }
    let gamma_scalar = Expr::mul(Expr::Const(-1.0 / ((n + 2) as f64)), d_sum).simplify();
    gamma[nn][nn][nn] = gamma_scalar.clone();
    for i in 0..n {
        let a_ii = Expr::mul(
            Expr::Const(0.5),
            Expr::add(d_coeffs[i].clone(), gamma_scalar.clone()),
        )
        .simplify();
        gamma[i][nn][i] = a_ii.clone();
        gamma[i][i][nn] = a_ii;
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a_ij = expansions[i][j].coeff(&mono(&[(i, 2)]));
            gamma[i][nn][j] = a_ij.clone();
            gamma[i][j][nn] = a_ij;
        }
    }

    // linear block: b_j = Gamma^{n+1}_{n+1, j}, then Gamma^k_{ij}
    let mut b = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = Expr::zero();
        for k in 0..n {
            acc = Expr::add(acc, expansions[k][j].coeff(&mono(&[(k, 1)])));
        }
        let bj = Expr::mul(Expr::Const(-1.0 / ((n + 2) as f64)), acc).simplify();
        gamma[nn][nn][j] = bj.clone();
        gamma[nn][j][nn] = bj.clone();
        b.push(bj);
    }
    for i in 0..n {
        for j in i..n {
            for k in 0..n {
                let mut e = expansions[i][j].coeff(&mono(&[(k, 1)]));
                if j == k {
                    e = Expr::add(e, b[i].clone());
                }
                if i == k {
                    e = Expr::add(e, b[j].clone());
                }
                let e = e.simplify();
                gamma[k][i][j] = e.clone();
                gamma[k][j][i] = e;
            }
        }
    }

    let field = ChristoffelField::new(m, gamma).map_err(|err| match err {
        ProjectiveError::NotTraceFree { c } => ProjectiveError::NotProjective(format!(
            "recovered connection fails the trace condition in index {c}; \
             coefficient pattern mismatch"
        )),
        other => other,
    })?;

    // the recovered connection must induce exactly the structure we started
    // from; this subsumes all remaining cross-coefficient consistency checks
    let resynth = fij_from_christoffels(&field);
    for i in 0..n {
        for j in i..n {
            if !exprs_equal(resynth.f(i, j), s.f(i, j), vars) {
                return Err(ProjectiveError::NotProjective(format!(
                    "coefficient pattern of f_{}{} does not match a projective structure",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(field)
}

/// Second-order ODE coefficients of a 2-dimensional projective structure:
/// `A_0 = -G^2_11, A_1 = G^1_11 - 2 G^2_12, A_2 = 2 G^1_12 - G^2_22,
///  A_3 = G^1_22`.
pub fn ode_coeffs_dim2(gamma: &ChristoffelField) -> Result<[Expr; 4], ProjectiveError> {
    if gamma.m() != 2 {
        return Err(ProjectiveError::BadDimension { expected: 2, got: gamma.m() });
    }
    let a0 = Expr::neg(gamma.entry(1, 0, 0).clone()).simplify();
    let a1 = Expr::sub(
        gamma.entry(0, 0, 0).clone(),
        Expr::mul(Expr::Const(2.0), gamma.entry(1, 0, 1).clone()),
    )
    .simplify();
    let a2 = Expr::sub(
        Expr::mul(Expr::Const(2.0), gamma.entry(0, 0, 1).clone()),
        gamma.entry(1, 1, 1).clone(),
    )
    .simplify();
    let a3 = gamma.entry(0, 1, 1).clone();
    Ok([a0, a1, a2, a3])
}

/// Inverse of [`ode_coeffs_dim2`] under the trace-free normalization:
/// `G^2_11 = -A_0, G^1_11 = A_1/3, G^2_12 = -A_1/3, G^1_12 = A_2/3,
///  G^2_22 = -A_2/3, G^1_22 = A_3`.
pub fn christoffels_from_ode_coeffs(a: &[Expr; 4]) -> Result<ChristoffelField, ProjectiveError> {
    let third = |e: &Expr, s: f64| Expr::mul(Expr::Const(s / 3.0), e.clone()).simplify();
    let mut gamma = ChristoffelField::zero_entries(2);
    gamma[1][0][0] = Expr::neg(a[0].clone()).simplify();
    gamma[0][0][0] = third(&a[1], 1.0);
    gamma[1][0][1] = third(&a[1], -1.0);
    gamma[1][1][0] = third(&a[1], -1.0);
    gamma[0][0][1] = third(&a[2], 1.0);
    gamma[0][1][0] = third(&a[2], 1.0);
    gamma[1][1][1] = third(&a[2], -1.0);
    gamma[0][1][1] = a[3].clone();
    ChristoffelField::new(2, gamma)
}

/// Projective change of connection by an exact 1-form `Upsilon = d fscale`:
/// `G^c_ab + delta^c_a Upsilon_b + delta^c_b Upsilon_a`. The result is
/// generally not trace-free and is returned as a raw entry tensor.
pub fn projective_change(gamma: &ChristoffelField, fscale: &Expr) -> Vec<Vec<Vec<Expr>>> {
    let m = gamma.m();
    let upsilon: Vec<Expr> = (0..m).map(|a| fscale.diff(a)).collect();
    let mut out = ChristoffelField::zero_entries(m);
    for c in 0..m {
        for a in 0..m {
            for b in 0..m {
                let mut e = gamma.entry(c, a, b).clone();
                if c == a {
                    e = Expr::add(e, upsilon[b].clone());
                }
                if c == b {
                    e = Expr::add(e, upsilon[a].clone());
                }
                out[c][a][b] = e.simplify();
            }
        }
    }
    out
}

/// Trace-free representative of a raw connection:
/// `G^c_ab - 1/(m+1) (delta^c_a t_b + delta^c_b t_a)` with `t_b = sum_a G^a_ab`.
pub fn trace_free_representative(
    m: usize,
    raw: &[Vec<Vec<Expr>>],
) -> Result<ChristoffelField, ProjectiveError> {
    let mut traces = Vec::with_capacity(m);
    for b in 0..m {
        let mut acc = Expr::zero();
        for a in 0..m {
            acc = Expr::add(acc, raw[a][a][b].clone());
        }
        traces.push(acc.simplify());
    }
    let factor = -1.0 / ((m + 1) as f64);
    let mut out = ChristoffelField::zero_entries(m);
    for c in 0..m {
        for a in 0..m {
            for b in 0..m {
                let mut e = raw[c][a][b].clone();
                if c == a {
                    e = Expr::add(e, Expr::mul(Expr::Const(factor), traces[b].clone()));
                }
                if c == b {
                    e = Expr::add(e, Expr::mul(Expr::Const(factor), traces[a].clone()));
                }
                out[c][a][b] = e.simplify();
            }
        }
    }
    ChristoffelField::new(m, out)
}

/// Deterministic polynomial trace-free connection with small integer
/// coefficients, for exercising the dictionary. Free entries come from a
/// seeded linear-congruential stream; the last diagonal family is solved
/// from the trace condition so the result is exactly trace-free.
pub fn pseudo_random_trace_free(m: usize, seed: u64) -> ChristoffelField {
    let coords = VarSet::base(m);
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let mut next_coeff = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) % 7) as i64 - 3
    };
    let monomials = ["1", "x1", "u", "x1*u"];
    let mut gamma = ChristoffelField::zero_entries(m);
    for c in 0..m {
        for a in 0..m {
            for b in a..m {
                // entries fixed by the trace solve are filled below
                if c == m - 1 && b == m - 1 {
                    continue;
                }
                let mut parts = Vec::new();
                for mn in monomials {
                    let k = next_coeff();
                    if k != 0 {
                        parts.push(format!("{k}*{mn}"));
                    }
                }
                let src = if parts.is_empty() { "0".to_string() } else { parts.join(" + ") };
                let e = Expr::parse(&src, &coords).unwrap();
                gamma[c][a][b] = e.clone();
                gamma[c][b][a] = e;
            }
        }
    }
    // close the trace: Gamma^m_{m c} = -sum_{k<m} Gamma^k_{kc}
    for c in 0..m {
        let mut acc = Expr::zero();
        for k in 0..m - 1 {
            acc = Expr::add(acc, gamma[k][k][c].clone());
        }
        let e = Expr::neg(acc).simplify();
        gamma[m - 1][m - 1][c] = e.clone();
        gamma[m - 1][c][m - 1] = e;
    }
    ChristoffelField::new(m, gamma).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_base(m: usize, src: &str) -> Expr {
        Expr::parse(src, &VarSet::base(m)).unwrap()
    }

    #[test]
    fn zero_connection_gives_flat_structure() {
        let gamma = ChristoffelField::zero(3);
        let s = fij_from_christoffels(&gamma);
        for i in 0..2 {
            for j in 0..2 {
                assert!(s.f(i, j).is_zero_const());
            }
        }
    }

    #[test]
    fn trace_violation_rejected() {
        let mut gamma = ChristoffelField::zero_entries(2);
        gamma[0][0][0] = parse_base(2, "1");
        assert!(matches!(
            ChristoffelField::new(2, gamma),
            Err(ProjectiveError::NotTraceFree { .. })
        ));
    }

    #[test]
    fn asymmetric_tensor_rejected() {
        let mut gamma = ChristoffelField::zero_entries(2);
        gamma[0][0][1] = parse_base(2, "x1");
        assert!(matches!(
            ChristoffelField::new(2, gamma),
            Err(ProjectiveError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn ode_coeff_dictionary_hand_case() {
        // (A0, A1, A2, A3) = (1, 3, 6, 2) -> the hand-solved connection
        let coords = VarSet::base(2);
        let a: [Expr; 4] = [
            Expr::parse("1", &coords).unwrap(),
            Expr::parse("3", &coords).unwrap(),
            Expr::parse("6", &coords).unwrap(),
            Expr::parse("2", &coords).unwrap(),
        ];
        let gamma = christoffels_from_ode_coeffs(&a).unwrap();
        let at = |c: usize, i: usize, j: usize| {
            gamma.entry(c, i, j).eval(gamma.coords(), &[0.0, 0.0]).unwrap()
        };
        assert_eq!(at(0, 0, 0), 1.0); // G^1_11
        assert_eq!(at(0, 0, 1), 2.0); // G^1_12
        assert_eq!(at(1, 0, 0), -1.0); // G^2_11
        assert_eq!(at(0, 1, 1), 2.0); // G^1_22
        assert_eq!(at(1, 0, 1), -1.0); // G^2_12
        assert_eq!(at(1, 1, 1), -2.0); // G^2_22
        // forward map reproduces the coefficients
        let back = ode_coeffs_dim2(&gamma).unwrap();
        for (k, want) in [1.0, 3.0, 6.0, 2.0].iter().enumerate() {
            assert_eq!(back[k].eval(gamma.coords(), &[0.0, 0.0]).unwrap(), *want);
        }
        // and the induced defining function is the cubic in p
        let s = fij_from_christoffels(&gamma);
        let vars = s.vars().clone();
        let f = s.f(0, 0);
        let want = Expr::parse("1 + 3*p1 + 6*p1^2 + 2*p1^3", &vars).unwrap();
        assert!(poly::equal_symbolic(f, &want, vars.len()));
    }

    #[test]
    fn round_trip_exact_for_polynomial_connections() {
        for m in [2usize, 3, 4] {
            for seed in 0..4u64 {
                let gamma = pseudo_random_trace_free(m, seed * 31 + m as u64);
                let s = fij_from_christoffels(&gamma);
                let rec = christoffels_from_fij(&s).unwrap();
                for c in 0..m {
                    for a in 0..m {
                        for b in 0..m {
                            assert!(
                                poly::equal_symbolic(
                                    rec.entry(c, a, b),
                                    gamma.entry(c, a, b),
                                    gamma.coords().len()
                                ),
                                "m={m} seed={seed} ({c},{a},{b})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn example_structure_is_projective() {
        let s = LcStructure::example();
        let gamma = christoffels_from_fij(&s).unwrap();
        // A = (0, 1/2, 0, e^{-2x}/2)
        let a = ode_coeffs_dim2(&gamma).unwrap();
        let vars = gamma.coords().clone();
        let q = [0.3, 0.0];
        assert!((a[0].eval(&vars, &q).unwrap()).abs() < 1e-15);
        assert!((a[1].eval(&vars, &q).unwrap() - 0.5).abs() < 1e-15);
        assert!((a[2].eval(&vars, &q).unwrap()).abs() < 1e-15);
        let want = 0.5 * (-0.6f64).exp();
        assert!((a[3].eval(&vars, &q).unwrap() - want).abs() < 1e-15);
        // round trip through the defining function
        let back = fij_from_christoffels(&gamma);
        let pts = halton_points(3, 32, &[-0.9; 3], &[0.9; 3]);
        for p in &pts {
            let x = back.f(0, 0).eval(back.vars(), p).unwrap();
            let y = s.f(0, 0).eval(s.vars(), p).unwrap();
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn quartic_and_transcendental_rejected() {
        let s = LcStructure::from_strings(1, &[vec!["p1^4".to_string()]]).unwrap();
        assert!(matches!(
            christoffels_from_fij(&s),
            Err(ProjectiveError::NotProjective(_))
        ));
        let s = LcStructure::from_strings(1, &[vec!["sin(p1)".to_string()]]).unwrap();
        assert!(matches!(
            christoffels_from_fij(&s),
            Err(ProjectiveError::NotProjective(_))
        ));
    }

    #[test]
    fn non_cubic_pattern_rejected_n2() {
        // degree <= 3 in p but off-pattern: f_11 = p_2^2 makes the recovered
        // connection inconsistent with the resynthesized structure.
        let vars = VarSet::adapted(2);
        let mut f = vec![vec![Expr::zero(); 2]; 2];
        f[0][0] = Expr::parse("p2^2", &vars).unwrap();
        let s = LcStructure::new(2, f).unwrap();
        assert!(matches!(
            christoffels_from_fij(&s),
            Err(ProjectiveError::NotProjective(_))
        ));
    }

    #[test]
    fn projective_change_and_renormalization() {
        let gamma = pseudo_random_trace_free(3, 17);
        let fscale = parse_base(3, "x1*u - 2*x2");
        let raw = projective_change(&gamma, &fscale);
        // raw change is generally not trace-free
        let mut has_trace = false;
        for b in 0..3 {
            let mut acc = Expr::zero();
            for a in 0..3 {
                acc = Expr::add(acc, raw[a][a][b].clone());
            }
            if !poly::is_zero_symbolic(&acc, 3) {
                has_trace = true;
            }
        }
        assert!(has_trace);
        // renormalizing recovers the original trace-free representative
        let renorm = trace_free_representative(3, &raw).unwrap();
        for c in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    assert!(poly::equal_symbolic(
                        renorm.entry(c, a, b),
                        gamma.entry(c, a, b),
                        3
                    ));
                }
            }
        }
        // upsilon = 0 is the identity
        let id = projective_change(&gamma, &Expr::zero());
        for c in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    assert!(poly::equal_symbolic(&id[c][a][b], gamma.entry(c, a, b), 3));
                }
            }
        }
    }

    #[test]
    fn christoffel_file_round_trip() {
        let gamma = pseudo_random_trace_free(2, 5);
        let json = gamma.to_json();
        let back = ChristoffelField::from_json(&json).unwrap();
        for c in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    assert!(poly::equal_symbolic(
                        back.entry(c, a, b),
                        gamma.entry(c, a, b),
                        2
                    ));
                }
            }
        }
        let bad = r#"{ "m": 2, "gamma": { "1,2,1": "x1" } }"#;
        assert!(matches!(
            ChristoffelField::from_json(bad),
            Err(ProjectiveError::File(_))
        ));
    }
}
