//! Canonical polynomial expansion of expression trees.
//!
//! Two views are provided: a full expansion into a monomial -> f64 coefficient
//! map (for exact zero/equality decisions on polynomial expressions), and a
//! partial expansion in a chosen subset of variables whose coefficients stay
//! symbolic (used to read off the `p`-polynomial structure of defining
//! functions). Both return `None` when the tree is not polynomial in the
//! requested variables.

use std::collections::BTreeMap;

use super::Expr;

/// Monomial exponents, one entry per variable of the owning context.
pub type Monomial = Vec<u32>;

/// Dense-keyed sparse polynomial with f64 coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub nvars: usize,
    pub terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    fn zero(nvars: usize) -> Poly {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    fn constant(nvars: usize, c: f64) -> Poly {
        let mut p = Poly::zero(nvars);
        if c != 0.0 {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    fn var(nvars: usize, idx: usize) -> Poly {
        let mut m = vec![0; nvars];
        m[idx] = 1;
        let mut p = Poly::zero(nvars);
        p.terms.insert(m, 1.0);
        p
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        match self.terms.get_mut(&m) {
            Some(entry) => {
                *entry += c;
                if *entry == 0.0 {
                    self.terms.remove(&m);
                }
            }
            None => {
                if c != 0.0 {
                    self.terms.insert(m, c);
                }
            }
        }
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }

    fn neg(&self) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m: Monomial = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    fn powi(&self, n: u32) -> Poly {
        let mut out = Poly::constant(self.nvars, 1.0);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| *c == 0.0)
    }

    pub fn max_abs_diff(&self, other: &Poly) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, c) in &self.terms {
            let d = c - other.terms.get(m).copied().unwrap_or(0.0);
            worst = worst.max(d.abs());
        }
        for (m, c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }
}

/// Expand into a canonical polynomial over all `nvars` variables, or `None`
/// if the tree contains a call / non-constant division / fractional power of
/// a variable-dependent subtree.
pub fn expand(e: &Expr, nvars: usize) -> Option<Poly> {
    match e {
        Expr::Const(c) => Some(Poly::constant(nvars, *c)),
        Expr::Var(i) => Some(Poly::var(nvars, *i)),
        Expr::Neg(a) => Some(expand(a, nvars)?.neg()),
        Expr::Add(a, b) => Some(expand(a, nvars)?.add(&expand(b, nvars)?)),
        Expr::Sub(a, b) => Some(expand(a, nvars)?.add(&expand(b, nvars)?.neg())),
        Expr::Mul(a, b) => Some(expand(a, nvars)?.mul(&expand(b, nvars)?)),
        Expr::Div(a, b) => {
            let pb = expand(b, nvars)?;
            let c = constant_of(&pb)?;
            if c == 0.0 {
                return None;
            }
            let pa = expand(a, nvars)?;
            Some(pa.mul(&Poly::constant(nvars, 1.0 / c)))
        }
        Expr::Pow(a, r) => {
            if r.is_integer() && r.num >= 0 {
                Some(expand(a, nvars)?.powi(r.num as u32))
            } else {
                let pa = expand(a, nvars)?;
                let c = constant_of(&pa)?;
                let v = super::pow_ratio(c, *r);
                if v.is_finite() {
                    Some(Poly::constant(nvars, v))
                } else {
                    None
                }
            }
        }
        Expr::Call(f, a) => {
            let pa = expand(a, nvars)?;
            let c = constant_of(&pa)?;
            let v = f.apply(c);
            if v.is_finite() {
                Some(Poly::constant(nvars, v))
            } else {
                None
            }
        }
    }
}

fn constant_of(p: &Poly) -> Option<f64> {
    if p.terms.is_empty() {
        return Some(0.0);
    }
    if p.terms.len() == 1 {
        let (m, c) = p.terms.iter().next().unwrap();
        if m.iter().all(|e| *e == 0) {
            return Some(*c);
        }
    }
    None
}

/// Polynomial in the selected variables with symbolic coefficients.
/// Keys are exponent vectors over `pvars` (in the given order).
#[derive(Debug, Clone)]
pub struct PartialPoly {
    pub pvars: Vec<usize>,
    pub terms: BTreeMap<Monomial, Expr>,
}

impl PartialPoly {
    fn zero(pvars: &[usize]) -> PartialPoly {
        PartialPoly {
            pvars: pvars.to_vec(),
            terms: BTreeMap::new(),
        }
    }

    fn constant(pvars: &[usize], e: Expr) -> PartialPoly {
        let mut p = PartialPoly::zero(pvars);
        if !e.is_zero_const() {
            p.terms.insert(vec![0; pvars.len()], e);
        }
        p
    }

    fn add_term(&mut self, m: Monomial, e: Expr) {
        match self.terms.remove(&m) {
            None => {
                self.terms.insert(m, e);
            }
            Some(old) => {
                let combined = Expr::add(old, e).simplify();
                if !combined.is_zero_const() {
                    self.terms.insert(m, combined);
                }
            }
        }
    }

    fn add(mut self, other: PartialPoly) -> PartialPoly {
        for (m, e) in other.terms {
            self.add_term(m, e);
        }
        self
    }

    fn neg(self) -> PartialPoly {
        PartialPoly {
            pvars: self.pvars,
            terms: self
                .terms
                .into_iter()
                .map(|(m, e)| (m, Expr::neg(e).simplify()))
                .collect(),
        }
    }

    fn mul(&self, other: &PartialPoly) -> PartialPoly {
        let mut out = PartialPoly::zero(&self.pvars);
        for (ma, ea) in &self.terms {
            for (mb, eb) in &other.terms {
                let m: Monomial = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                out.add_term(m, Expr::mul(ea.clone(), eb.clone()).simplify());
            }
        }
        out
    }

    fn is_free(&self) -> Option<Expr> {
        if self.terms.is_empty() {
            return Some(Expr::zero());
        }
        if self.terms.len() == 1 {
            let (m, e) = self.terms.iter().next().unwrap();
            if m.iter().all(|x| *x == 0) {
                return Some(e.clone());
            }
        }
        None
    }

    /// Maximum total degree in the selected variables.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn coeff(&self, m: &[u32]) -> Expr {
        self.terms.get(m).cloned().unwrap_or_else(Expr::zero)
    }
}

/// Expand `e` as a polynomial in the variables `pvars`; coefficients are
/// expressions in the remaining variables. `None` when `e` is not polynomial
/// in `pvars` (calls, divisions or fractional powers of `pvars`-dependent
/// subtrees).
pub fn expand_in(e: &Expr, pvars: &[usize]) -> Option<PartialPoly> {
    match e {
        Expr::Const(_) => Some(PartialPoly::constant(pvars, e.clone())),
        Expr::Var(i) => {
            if let Some(k) = pvars.iter().position(|v| v == i) {
                let mut m = vec![0; pvars.len()];
                m[k] = 1;
                let mut p = PartialPoly::zero(pvars);
                p.terms.insert(m, Expr::one());
                Some(p)
            } else {
                Some(PartialPoly::constant(pvars, e.clone()))
            }
        }
        Expr::Neg(a) => Some(expand_in(a, pvars)?.neg()),
        Expr::Add(a, b) => Some(expand_in(a, pvars)?.add(expand_in(b, pvars)?)),
        Expr::Sub(a, b) => Some(expand_in(a, pvars)?.add(expand_in(b, pvars)?.neg())),
        Expr::Mul(a, b) => Some(expand_in(a, pvars)?.mul(&expand_in(b, pvars)?)),
        Expr::Div(a, b) => {
            let pb = expand_in(b, pvars)?;
            let den = pb.is_free()?;
            let pa = expand_in(a, pvars)?;
            Some(PartialPoly {
                pvars: pa.pvars.clone(),
                terms: pa
                    .terms
                    .into_iter()
                    .map(|(m, e)| (m, Expr::div(e, den.clone()).simplify()))
                    .collect(),
            })
        }
        Expr::Pow(a, r) => {
            let pa = expand_in(a, pvars)?;
            if let Some(free) = pa.is_free() {
                return Some(PartialPoly::constant(
                    pvars,
                    Expr::pow(free, *r).simplify(),
                ));
            }
            if r.is_integer() && r.num >= 0 {
                let mut out = PartialPoly::constant(pvars, Expr::one());
                for _ in 0..r.num {
                    out = out.mul(&pa);
                }
                Some(out)
            } else {
                None
            }
        }
        Expr::Call(f, a) => {
            let pa = expand_in(a, pvars)?;
            let free = pa.is_free()?;
            Some(PartialPoly::constant(
                pvars,
                Expr::call(*f, free).simplify(),
            ))
        }
    }
}

/// Decide whether `e` is identically zero: first by simplification to the
/// zero constant, then by exact polynomial expansion.
pub fn is_zero_symbolic(e: &Expr, nvars: usize) -> bool {
    let s = e.simplify();
    if s.is_zero_const() {
        return true;
    }
    match expand(&s, nvars) {
        Some(p) => p.is_zero(),
        None => false,
    }
}

/// Compare two expressions symbolically where possible: exact polynomial
/// canonical forms when both expand, else simplify-to-zero of the difference.
pub fn equal_symbolic(a: &Expr, b: &Expr, nvars: usize) -> bool {
    is_zero_symbolic(&Expr::sub(a.clone(), b.clone()), nvars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarSet;

    #[test]
    fn expand_collects_monomials() {
        let v = VarSet::new(["x", "y"]);
        let e = Expr::parse("(x + y)^2 - x^2 - 2*x*y - y^2", &v).unwrap();
        let p = expand(&e, 2).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn expand_rejects_calls_on_variables() {
        let v = VarSet::new(["x"]);
        let e = Expr::parse("sin(x)", &v).unwrap();
        assert!(expand(&e, 1).is_none());
        let c = Expr::parse("sin(2) * x", &v).unwrap();
        assert!(expand(&c, 1).is_some());
    }

    #[test]
    fn partial_expansion_in_p() {
        // f = 1/2 (p + e^{-2x} p^3) over (x, u, p): cubic in p,
        // coefficient of p^3 is e^{-2x}/2.
        let v = VarSet::adapted(1);
        let e = Expr::parse("0.5*(p1 + exp(-2*x1)*p1^3)", &v).unwrap();
        let pp = expand_in(&e, &[2]).unwrap();
        assert_eq!(pp.degree(), 3);
        let c3 = pp.coeff(&[3]);
        let got = c3.eval(&v, &[0.5, 0.0, 0.0]).unwrap();
        assert!((got - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        let c0 = pp.coeff(&[0]);
        assert!(c0.is_zero_const());
    }

    #[test]
    fn partial_expansion_detects_nonpolynomial() {
        let v = VarSet::adapted(1);
        let e = Expr::parse("sin(p1)", &v).unwrap();
        assert!(expand_in(&e, &[2]).is_none());
        let e = Expr::parse("1/(1 + p1)", &v).unwrap();
        assert!(expand_in(&e, &[2]).is_none());
    }

    #[test]
    fn symbolic_zero_via_expansion() {
        let v = VarSet::new(["x", "y"]);
        let e = Expr::parse("x*y - y*x", &v).unwrap();
        assert!(is_zero_symbolic(&e, v.len()));
        let e = Expr::parse("x*y - y", &v).unwrap();
        assert!(!is_zero_symbolic(&e, v.len()));
    }
}
