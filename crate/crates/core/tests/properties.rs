//! Property tests for the jet-ring and series invariants.

use proptest::prelude::*;

use whitney_core::jet::{derivative_functional, Jet, JetBasis, JetVector, MultiIndex};
use whitney_core::puiseux::PuiseuxPoly;

/// (a, b, c): three jets sharing a base, n ≤ 3, m ≤ 4.
fn jet_triple() -> impl Strategy<Value = (Jet<f64>, Jet<f64>, Jet<f64>)> {
    (1usize..=3, 0usize..=4).prop_flat_map(|(n, m)| {
        let dim = JetBasis::get(n, m).len();
        (
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-2.0..2.0f64, dim),
            prop::collection::vec(-2.0..2.0f64, dim),
            prop::collection::vec(-2.0..2.0f64, dim),
        )
            .prop_map(move |(base, ca, cb, cc)| {
                (
                    Jet::new(base.clone(), m, ca).unwrap(),
                    Jet::new(base.clone(), m, cb).unwrap(),
                    Jet::new(base, m, cc).unwrap(),
                )
            })
    })
}

fn close(a: &Jet<f64>, b: &Jet<f64>, tol: f64) -> bool {
    a.coeffs
        .iter()
        .zip(&b.coeffs)
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn jet_ring_axioms((a, b, c) in jet_triple()) {
        let ab = a.multiply(&b).unwrap();
        let ba = b.multiply(&a).unwrap();
        prop_assert!(close(&ab, &ba, 1e-9), "commutativity");
        let left = ab.multiply(&c).unwrap();
        let right = a.multiply(&b.multiply(&c).unwrap()).unwrap();
        prop_assert!(close(&left, &right, 1e-9), "associativity");
        let one = Jet::constant(a.base.clone(), a.order, 1.0);
        prop_assert!(close(&one.multiply(&a).unwrap(), &a, 1e-12), "unit");
    }

    #[test]
    fn rebase_is_ring_homomorphism_when_order_holds_the_product(
        (a0, b0, _) in jet_triple(),
        da in 0usize..=2,
        db in 0usize..=2,
        shift in -1.0..1.0f64,
    ) {
        // At order m ≥ deg a + deg b the truncation never fires, so
        // rebase(a ⊙ b) = rebase(a) ⊙ rebase(b).
        let n = a0.vars;
        let m = da + db;
        let basis = JetBasis::get(n, m);
        let shrink = |src: &Jet<f64>, deg: usize| {
            let mut out = Jet::zero(src.base.clone(), m);
            for (i, mi) in basis.indices.iter().enumerate() {
                if (mi.order() as usize) <= deg {
                    out.coeffs[i] = src.coeffs[i % src.coeffs.len()];
                }
            }
            out
        };
        let a = shrink(&a0, da);
        let b = shrink(&b0, db);
        let newbase: Vec<f64> = a.base.iter().map(|v| v + shift).collect();
        let lhs = a.multiply(&b).unwrap().rebase(&newbase).unwrap();
        let rhs = a
            .rebase(&newbase)
            .unwrap()
            .multiply(&b.rebase(&newbase).unwrap())
            .unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-8));
    }

    #[test]
    fn whitney_quotient_matches_definition_unfolding(
        m in 0usize..=3,
        alpha_raw in 0usize..=3,
        coeffs_p in prop::collection::vec(-2.0..2.0f64, 5),
        coeffs_q in prop::collection::vec(-2.0..2.0f64, 5),
        gap in 0.1..1.5f64,
    ) {
        let alpha_ord = alpha_raw.min(m);
        let dim = m + 1;
        let p = Jet::new(vec![0.2], m, coeffs_p[..dim].to_vec()).unwrap();
        let q = Jet::new(vec![0.2 + gap], m, coeffs_q[..dim].to_vec()).unwrap();
        let alpha = MultiIndex(vec![alpha_ord as u32]);
        let pv = JetVector::new(vec![p.clone()]).unwrap();
        let qv = JetVector::new(vec![q.clone()]).unwrap();
        let direct = pv.whitney_quotient(&qv, &alpha).unwrap();
        // definition unfolding: subtract explicitly (after a rebase), then
        // evaluate the derivative functional at p's base
        let q_at_p = q.rebase(&p.base).unwrap();
        let diff = p.sub(&q_at_p).unwrap();
        let w = derivative_functional::<f64>(1, m, &p.base, &alpha, &p.base).unwrap();
        let val: f64 = w.iter().zip(&diff.coeffs).map(|(a, c)| a * c).sum();
        let unfolded = val.abs() / gap.powi((m - alpha_ord) as i32);
        prop_assert!((direct - unfolded).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn puiseux_ring_axioms_float(
        qa in -4i64..8,
        qb in -2i64..6,
        ca in -2.0..2.0f64,
        cb in -2.0..2.0f64,
    ) {
        let a = PuiseuxPoly::new(2, &[(qa, ca), (qa + 3, 0.5)]);
        let b = PuiseuxPoly::new(3, &[(qb, cb)]);
        let ab = a.mul(&b);
        let ba = b.mul(&a);
        prop_assert_eq!(ab.ram, ba.ram);
        for (q, c) in &ab.coeffs {
            let other = ba.coeffs.get(q).copied().unwrap_or(0.0);
            prop_assert!((c - other).abs() < 1e-12);
        }
        // distributivity against a third series
        let c3 = PuiseuxPoly::new(1, &[(1, 1.25)]);
        let lhs = a.mul(&b.add(&c3));
        let rhs = a.mul(&b).add(&a.mul(&c3));
        for (q, c) in &lhs.coeffs {
            let other = rhs.coeffs.get(q).copied().unwrap_or(0.0);
            prop_assert!((c - other).abs() < 1e-9);
        }
    }
}

/// The concurrency contract: values are immutable after construction and
/// transferable between threads; evaluators are callable concurrently.
#[test]
fn values_are_send_and_sync() {
    fn check<T: Send + Sync>() {}
    check::<Jet<f64>>();
    check::<JetVector<f64>>();
    check::<PuiseuxPoly<f64>>();
    check::<whitney_core::AffineFiber>();
    check::<whitney_core::SampledBundle>();
    check::<whitney_core::FieldPiece>();
    check::<whitney_core::SeminormFamily>();
    check::<whitney_core::elim::ParamLinearSystem>();
    check::<whitney_core::WedgeNormalForm>();
}
