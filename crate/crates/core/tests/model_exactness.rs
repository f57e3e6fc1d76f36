//! Exactness and oracle tests for the para-complex model module: emitted
//! curves are exactly null, connectivity matches an independent Gram-rank
//! oracle, and chain/null-chain connectivity is mutually exclusive.

use lcgeo_core::model::{
    connect, inner_product, model_chain, model_null_chain, rank, rat, Connection, ModelTangent,
    PcLine, PcVector, Rat, TangentKind,
};
use num_traits::Zero;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_line(rng: &mut StdRng, n: usize) -> PcLine {
    loop {
        let dim = n + 2;
        let v_plus: Vec<Rat> = (0..dim).map(|_| rat(rng.gen_range(-4..=4))).collect();
        if v_plus.iter().all(|x| x.is_zero()) {
            continue;
        }
        let piv = v_plus.iter().position(|x| !x.is_zero()).unwrap();
        let mut v_minus: Vec<Rat> = (0..dim).map(|_| rat(rng.gen_range(-4..=4))).collect();
        // solve the pivot coordinate so that v_- . v_+ = 0 exactly
        let mut acc = Rat::zero();
        for j in 0..dim {
            if j != piv {
                acc += &v_minus[j] * &v_plus[j];
            }
        }
        v_minus[piv] = -acc / &v_plus[piv];
        if v_minus.iter().all(|x| x.is_zero()) {
            continue;
        }
        return PcLine::new(n, v_plus, v_minus).unwrap();
    }
}

fn pairing_gram(l1: &PcLine, l2: &PcLine) -> Vec<Vec<Rat>> {
    let n = l1.n;
    let vecs = [
        PcVector::new(n, l1.v_plus.clone(), vec![Rat::zero(); n + 2]).unwrap(),
        PcVector::new(n, l2.v_plus.clone(), vec![Rat::zero(); n + 2]).unwrap(),
        PcVector::new(n, vec![Rat::zero(); n + 2], l1.v_minus.clone()).unwrap(),
        PcVector::new(n, vec![Rat::zero(); n + 2], l2.v_minus.clone()).unwrap(),
    ];
    (0..4)
        .map(|i| (0..4).map(|j| inner_product(&vecs[i], &vecs[j]).unwrap()).collect())
        .collect()
}

#[test]
fn connectivity_matches_gram_rank_oracle_on_random_pairs() {
    let mut rng = StdRng::seed_from_u64(0x9a9a_0001);
    let mut seen_chain = 0;
    let mut seen_null = 0;
    let mut seen_degenerate = 0;
    let mut count = 0;
    while count < 200 {
        let n = rng.gen_range(1..=3);
        let l1 = random_line(&mut rng, n);
        let l2 = random_line(&mut rng, n);
        if l1.same_line(&l2) {
            continue;
        }
        count += 1;
        // force some null pairs into the mix: occasionally build l2 from an
        // origin-style null partner
        let decision = connect(&l1, &l2).unwrap();
        // oracle: dimensions of the eigenspace intersections of U and the
        // rank of the full pairing Gram matrix
        let plus_rank = rank(&[l1.v_plus.clone(), l2.v_plus.clone()]);
        let minus_rank = rank(&[l1.v_minus.clone(), l2.v_minus.clone()]);
        let gram_rank = rank(&pairing_gram(&l1, &l2));
        match decision {
            Connection::Chain { arcs } => {
                seen_chain += 1;
                assert_eq!((plus_rank, minus_rank), (2, 2));
                assert_eq!(gram_rank, 4, "chain requires non-degenerate plane");
                for arc in &arcs {
                    assert!(arc.at(&rat(0)).same_line(&l1));
                    assert!(arc.at(&rat(1)).same_line(&l2));
                }
            }
            Connection::NullChainFamily { representative } => {
                seen_null += 1;
                assert_eq!((plus_rank, minus_rank), (2, 2));
                assert_eq!(gram_rank, 0, "null family requires a null plane");
                assert!(representative.at(&rat(0)).same_line(&l1));
                assert!(representative.at(&rat(1)).same_line(&l2));
            }
            Connection::Degenerate { .. } => {
                seen_degenerate += 1;
                let plane = plus_rank == 2 && minus_rank == 2;
                assert!(
                    !plane || (gram_rank != 4 && gram_rank != 0),
                    "degenerate verdict contradicts oracle: plane={plane} gram_rank={gram_rank}"
                );
            }
        }
    }
    // random integer pairs are overwhelmingly chain-connected; make sure the
    // oracle actually exercised that branch
    assert!(seen_chain > 100, "chain branch undersampled: {seen_chain}");
    assert!(seen_chain + seen_null + seen_degenerate == 200);
}

#[test]
fn forced_null_pairs_classify_as_null_family() {
    // construct pairs with vanishing cross pairings: v2+ in ker(v1-),
    // v2- in ann(v1+), plus the null constraint
    let mut rng = StdRng::seed_from_u64(0xbead_cafe);
    let mut produced = 0;
    while produced < 40 {
        let n = rng.gen_range(2..=3);
        let l1 = random_line(&mut rng, n);
        let dim = n + 2;
        // sample v2+ with v1-(v2+) = 0
        let v2p: Vec<Rat> = (0..dim).map(|_| rat(rng.gen_range(-3..=3))).collect();
        let piv1 = l1.v_minus.iter().position(|x| !x.is_zero()).unwrap();
        let mut v2p = v2p;
        let mut acc = Rat::zero();
        for j in 0..dim {
            if j != piv1 {
                acc += &l1.v_minus[j] * &v2p[j];
            }
        }
        v2p[piv1] = -acc / &l1.v_minus[piv1];
        if v2p.iter().all(|x| x.is_zero()) {
            continue;
        }
        // sample v2- with v2-(v1+) = 0 and v2-(v2+) = 0
        let pivot_a = l1.v_plus.iter().position(|x| !x.is_zero()).unwrap();
        let pivot_b = match v2p
            .iter()
            .enumerate()
            .position(|(i, x)| i != pivot_a && !x.is_zero())
        {
            Some(i) => i,
            None => continue,
        };
        let mut v2m: Vec<Rat> = (0..dim).map(|_| rat(rng.gen_range(-3..=3))).collect();
        v2m[pivot_a] = Rat::zero();
        v2m[pivot_b] = Rat::zero();
        // solve the 2x2 system for the two pivot coordinates
        let mut r1 = Rat::zero();
        let mut r2 = Rat::zero();
        for j in 0..dim {
            if j != pivot_a && j != pivot_b {
                r1 += &v2m[j] * &l1.v_plus[j];
                r2 += &v2m[j] * &v2p[j];
            }
        }
        let det = &l1.v_plus[pivot_a] * &v2p[pivot_b] - &l1.v_plus[pivot_b] * &v2p[pivot_a];
        if det.is_zero() {
            continue;
        }
        let sa = (-&r1 * &v2p[pivot_b] + &r2 * &l1.v_plus[pivot_b]) / &det;
        let sb = (-&l1.v_plus[pivot_a] * &r2 + &v2p[pivot_a] * &r1) / &det;
        v2m[pivot_a] = sa;
        v2m[pivot_b] = sb;
        if v2m.iter().all(|x| x.is_zero()) {
            continue;
        }
        let Ok(l2) = PcLine::new(n, v2p, v2m) else { continue };
        if l1.same_line(&l2) {
            continue;
        }
        // cross pairings vanish by construction; the plane may still be
        // 3-dimensional, which connect() reports as degenerate
        match connect(&l1, &l2).unwrap() {
            Connection::NullChainFamily { representative } => {
                produced += 1;
                assert!(representative.at(&rat(0)).same_line(&l1));
                assert!(representative.at(&rat(1)).same_line(&l2));
                // every emitted line is exactly null
                for t in [-3i64, -1, 2, 5] {
                    let line = representative.at(&rat(t));
                    let pair: Rat = line
                        .v_minus
                        .iter()
                        .zip(&line.v_plus)
                        .map(|(a, b)| a * b)
                        .fold(Rat::zero(), |s, x| s + x);
                    assert!(pair.is_zero());
                }
            }
            Connection::Chain { .. } => panic!("cross-pairing-free pair classified as chain"),
            Connection::Degenerate { .. } => continue,
        }
    }
}

#[test]
fn model_curves_stay_inside_their_plane() {
    let mut rng = StdRng::seed_from_u64(0x0dd_ba11);
    for _ in 0..30 {
        let n = rng.gen_range(1..=3);
        let line = random_line(&mut rng, n);
        let x: Vec<Rat> = (0..n).map(|_| rat(rng.gen_range(-3..=3))).collect();
        let y: Vec<Rat> = (0..n).map(|_| rat(rng.gen_range(-3..=3))).collect();
        let z = rat(rng.gen_range(1..=4));
        let w = ModelTangent::from_blocks(line.clone(), &x, &y, z).unwrap();
        assert_eq!(w.classify(), TangentKind::Transverse);
        let chain = model_chain(&line, &w).unwrap();
        // plane U spanned by (v+, w+ | v-, w-): every sample lies inside
        let plus_span = vec![line.v_plus.clone(), w.w_plus.clone()];
        let minus_span = vec![line.v_minus.clone(), w.w_minus.clone()];
        for t in [-2i64, 1, 3] {
            let at = chain.at(&rat(t));
            let mut with_plus = plus_span.clone();
            with_plus.push(at.v_plus.clone());
            assert_eq!(rank(&with_plus), 2);
            let mut with_minus = minus_span.clone();
            with_minus.push(at.v_minus.clone());
            assert_eq!(rank(&with_minus), 2);
        }
        // the plane's Gram matrix is non-degenerate for transverse tangents
        assert_eq!(rank(&w.gram()), 4);
    }
}

#[test]
fn null_chain_gram_is_null_and_lines_exactly_null() {
    let n = 3;
    let mut rng = StdRng::seed_from_u64(0xdede_0007);
    for _ in 0..20 {
        let line = random_line(&mut rng, n);
        // build a generic null tangent: X, Y nonzero with X . Y = 0
        let mut x: Vec<Rat> = (0..n).map(|_| rat(rng.gen_range(-3..=3))).collect();
        if x.iter().all(|v| v.is_zero()) {
            x[0] = rat(1);
        }
        let pivot = x.iter().position(|v| !v.is_zero()).unwrap();
        let mut y: Vec<Rat> = (0..n).map(|_| rat(rng.gen_range(-3..=3))).collect();
        let mut acc = Rat::zero();
        for j in 0..n {
            if j != pivot {
                acc += &x[j] * &y[j];
            }
        }
        y[pivot] = -acc / &x[pivot];
        if y.iter().all(|v| v.is_zero()) {
            y[(pivot + 1) % n] = rat(1);
            // keep X . Y = 0 by zeroing the matching X slot
            x[(pivot + 1) % n] = rat(0);
        }
        let w = ModelTangent::from_blocks(line.clone(), &x, &y, rat(0)).unwrap();
        if w.classify() != TangentKind::NullGeneric {
            continue;
        }
        let gram = w.gram();
        for row in &gram {
            for entry in row {
                assert!(entry.is_zero(), "null tangent must span a null plane");
            }
        }
        let curve = model_null_chain(&line, &w, &rat(2), &rat(-1)).unwrap();
        for t in [-4i64, 0, 1, 7] {
            let at = curve.at(&rat(t));
            let pair: Rat = at
                .v_minus
                .iter()
                .zip(&at.v_plus)
                .map(|(a, b)| a * b)
                .fold(Rat::zero(), |s, v| s + v);
            assert!(pair.is_zero());
        }
    }
}
