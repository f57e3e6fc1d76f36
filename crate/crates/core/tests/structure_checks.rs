//! Structure-level oracle tests: the rescaled coframe against a numeric
//! exterior-derivative oracle, composition of rescalings, and integrability
//! of the potential family.

use lcgeo_core::expr::{Expr, VarSet};
use lcgeo_core::lc::{CoframeValue, LcStructure, PointM, SampleBox};
use lcgeo_core::linalg::{halton_points, solve};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Numeric coframe rescaling: expand the differential row of the scale
/// function in the current coframe basis by solving a linear system, then
/// apply the hat formulas. Independent of the symbolic implementation.
fn rescale_rows(cv: &CoframeValue, n: usize, fval: f64, df_row: &[f64]) -> CoframeValue {
    let dim = 2 * n + 1;
    // basis matrix: rows are (pi_1..pi_n, theta_1..theta_n, sigma)
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for i in 0..n {
        basis.push(cv.pi[i].clone());
    }
    for i in 0..n {
        basis.push(cv.theta[i].clone());
    }
    basis.push(cv.sigma.clone());
    // solve c^T basis = df  <=>  basis^T c = df
    let mut bt = vec![vec![0.0; dim]; dim];
    for r in 0..dim {
        for c in 0..dim {
            bt[r][c] = basis[c][r];
        }
    }
    let coeffs = solve(&bt, df_row).expect("coframe rows form a basis");
    let f_upper = &coeffs[..n];
    let f_lower = &coeffs[n..2 * n];
    let ef = fval.exp();
    let e2f = (2.0 * fval).exp();
    let sigma: Vec<f64> = cv.sigma.iter().map(|c| e2f * c).collect();
    let theta: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..dim)
                .map(|c| ef * (cv.theta[i][c] - 2.0 * f_upper[i] * cv.sigma[c]))
                .collect()
        })
        .collect();
    let pi: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..dim)
                .map(|c| ef * (cv.pi[i][c] + 2.0 * f_lower[i] * cv.sigma[c]))
                .collect()
        })
        .collect();
    CoframeValue { sigma, theta, pi }
}

/// Five-point central derivative, O(h^4).
fn deriv5<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

fn structure_n2() -> LcStructure {
    let vars = VarSet::adapted(2);
    let mut f = vec![vec![Expr::zero(); 2]; 2];
    f[0][0] = Expr::parse("x1*x2 + u", &vars).unwrap();
    let f01 = Expr::parse("p1*p2 - x2^2", &vars).unwrap();
    f[0][1] = f01.clone();
    f[1][0] = f01;
    f[1][1] = Expr::parse("sin(x1)", &vars).unwrap();
    LcStructure::new(2, f).unwrap()
}

#[test]
fn rescaled_coframe_satisfies_structure_equation() {
    // d sigma_hat = theta_hat^i /\ pi_hat_i, checked with a five-point
    // numeric exterior derivative at deterministic sample points.
    for (s, fscale_src) in [
        (LcStructure::example(), "0.2*x1 - 0.3*u + 0.1*p1^2"),
        (structure_n2(), "0.1*x1*u - 0.2*p2"),
    ] {
        let n = s.n();
        let dim = 2 * n + 1;
        let fscale = Expr::parse(fscale_src, s.vars()).unwrap();
        let rescaled = s.rescale_coframe(&fscale);
        let pts = halton_points(dim, 100, &vec![-0.7; dim], &vec![0.7; dim]);
        for q in &pts {
            let sigma_hat_at = |coords: &[f64]| -> Vec<f64> {
                let qq = PointM::from_coords(n, coords).unwrap();
                rescaled.eval(&qq).unwrap().sigma
            };
            let cv = {
                let qq = PointM::from_coords(n, q).unwrap();
                rescaled.eval(&qq).unwrap()
            };
            let h = 1e-3;
            for a in 0..dim {
                for b in (a + 1)..dim {
                    // d sigma_hat(e_a, e_b) = d_a sigma_hat_b - d_b sigma_hat_a
                    let da = deriv5(
                        |t| {
                            let mut qq = q.clone();
                            qq[a] = t;
                            sigma_hat_at(&qq)[b]
                        },
                        q[a],
                        h,
                    );
                    let db = deriv5(
                        |t| {
                            let mut qq = q.clone();
                            qq[b] = t;
                            sigma_hat_at(&qq)[a]
                        },
                        q[b],
                        h,
                    );
                    let dsigma = da - db;
                    let mut wedge = 0.0;
                    for i in 0..n {
                        wedge += cv.theta[i][a] * cv.pi[i][b] - cv.theta[i][b] * cv.pi[i][a];
                    }
                    assert!(
                        (dsigma - wedge).abs() < 1e-9,
                        "structure equation violated at ({a},{b}): {dsigma} vs {wedge}"
                    );
                }
            }
        }
    }
}

#[test]
fn rescale_matches_numeric_expansion_and_composes_to_identity() {
    let s = LcStructure::example();
    let n = s.n();
    let dim = 2 * n + 1;
    let fscale = Expr::parse("0.4*x1 + 0.25*u - 0.3*p1", s.vars()).unwrap();
    let rescaled = s.rescale_coframe(&fscale);
    let pts = halton_points(dim, 50, &vec![-0.8; dim], &vec![0.8; dim]);
    for q in &pts {
        let qq = PointM::from_coords(n, q).unwrap();
        let base = s.coframe(&qq).unwrap();
        let fval = fscale.eval(s.vars(), q).unwrap();
        let df: Vec<f64> = (0..dim)
            .map(|i| fscale.diff(i).eval(s.vars(), q).unwrap())
            .collect();
        // oracle built by numerically expanding df in the coframe
        let oracle = rescale_rows(&base, n, fval, &df);
        let symbolic = rescaled.eval(&qq).unwrap();
        for c in 0..dim {
            assert!((oracle.sigma[c] - symbolic.sigma[c]).abs() < 1e-12);
            assert!((oracle.theta[0][c] - symbolic.theta[0][c]).abs() < 1e-12);
            assert!((oracle.pi[0][c] - symbolic.pi[0][c]).abs() < 1e-12);
        }
        // sigma_hat(v) = e^{2f} sigma(v) for a probe vector
        let probe = vec![0.3, -0.9, 0.7];
        let lhs: f64 = symbolic.sigma.iter().zip(&probe).map(|(a, b)| a * b).sum();
        let rhs: f64 = base.sigma.iter().zip(&probe).map(|(a, b)| a * b).sum();
        assert!((lhs - (2.0 * fval).exp() * rhs).abs() < 1e-12);
        // composing with the opposite scale restores the base coframe;
        // the second expansion must be taken in the hatted basis
        let back = rescale_rows(
            &oracle,
            n,
            -fval,
            &df.iter().map(|x| -x).collect::<Vec<_>>(),
        );
        for c in 0..dim {
            assert!((back.sigma[c] - base.sigma[c]).abs() < 1e-10);
            assert!((back.theta[0][c] - base.theta[0][c]).abs() < 1e-10);
            assert!((back.pi[0][c] - base.pi[0][c]).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_scale_is_identity() {
    let s = structure_n2();
    let rescaled = s.rescale_coframe(&Expr::zero());
    let q = PointM::new(vec![0.2, -0.4], 0.6, vec![0.1, 0.9]);
    let base = s.coframe(&q).unwrap();
    let hat = rescaled.eval(&q).unwrap();
    assert_eq!(base.sigma, hat.sigma);
    for i in 0..2 {
        assert_eq!(base.theta[i], hat.theta[i]);
        assert_eq!(base.pi[i], hat.pi[i]);
    }
}

#[test]
fn flat_embedding_exact_on_random_rational_points() {
    use lcgeo_core::model::{ratio, Rat};
    use num_traits::Zero;
    let mut rng = StdRng::seed_from_u64(0xe3bed);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=3usize);
        let r = |rng: &mut StdRng| ratio(rng.gen_range(-40..=40), rng.gen_range(1..=9));
        let x: Vec<Rat> = (0..n).map(|_| r(&mut rng)).collect();
        let p: Vec<Rat> = (0..n).map(|_| r(&mut rng)).collect();
        let u = r(&mut rng);
        let (v, w) = LcStructure::flat_embedding_exact(&x, &u, &p);
        assert!(LcStructure::hyperquadric_residual_exact(&v, &w).is_zero());
    }
}

#[test]
fn potential_family_structures_are_integrable() {
    // f_ij = d2 phi / dx^i dx^j for 20 random polynomial potentials of
    // degree <= 4: the defect vanishes symbolically.
    let mut rng = StdRng::seed_from_u64(0x00f0_0d5e);
    for trial in 0..20 {
        let n = if trial % 2 == 0 { 2 } else { 3 };
        let vars = VarSet::adapted(n);
        // random polynomial in x1..xn of degree <= 4
        let mut terms = Vec::new();
        for _ in 0..6 {
            let coeff = rng.gen_range(-3i64..=3);
            if coeff == 0 {
                continue;
            }
            let mut mono = String::new();
            let mut total = 0;
            for i in 0..n {
                let e = rng.gen_range(0..=2u32);
                if total + e > 4 {
                    continue;
                }
                total += e;
                for _ in 0..e {
                    if !mono.is_empty() {
                        mono.push('*');
                    }
                    mono.push_str(&format!("x{}", i + 1));
                }
            }
            if mono.is_empty() {
                mono.push('1');
            }
            terms.push(format!("{coeff}*{mono}"));
        }
        if terms.is_empty() {
            terms.push("1".to_string());
        }
        let phi = Expr::parse(&terms.join(" + "), &vars).unwrap();
        let mut f = vec![vec![Expr::zero(); n]; n];
        for i in 0..n {
            for j in i..n {
                let d = phi.diff(i).diff(j);
                f[i][j] = d.clone();
                f[j][i] = d;
            }
        }
        let s = LcStructure::new(n, f).unwrap();
        let sbox = SampleBox::centered(2 * n + 1, 1.0, 16);
        assert_eq!(s.max_defect(&sbox), Some(0.0), "trial {trial}");
        assert!(s.is_integrable(&sbox, 1e-10));
    }
}
