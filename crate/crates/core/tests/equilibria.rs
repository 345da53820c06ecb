mod common;

use bivirus::conditions::*;
use bivirus::dynamics::{sample_initial_conditions, Sampling};
use bivirus::equilibria::*;
use bivirus::scenario::{builtin, builtin_model, Builtin};
use bivirus::model::field_residual;
use bivirus::*;
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn assert_structure(records: &[EquilibriumRecord]) {
    for r in records {
        assert!(satisfies_structure(&r.point), "{:?}", r.point);
        assert!(r.residual <= RESIDUAL_TOL, "{} residual {}", r.kind, r.residual);
        assert_eq!(r.kind, EquilibriumKind::of(&r.point));
    }
}

#[test]
fn example1_boundary_from_high_seed() {
    let m = builtin_model(Builtin::Example1);
    for k in 0..2 {
        let out = find_single_virus_equilibrium(m.virus(k), &DVector::from_element(5, 0.99), 20_000, 1e-12).unwrap();
        let SingleVirusOutcome::Endemic(x) = out else { panic!("expected endemic equilibrium") };
        assert!(x.iter().all(|&e| e >= 0.5 - 1e-9), "{x}");
        assert!(m.virus(k).single_field(&x).amax() <= 1e-10);
    }
}

#[test]
fn subcritical_pairwise_virus_dies_out_from_any_seed() {
    let mut r = rng(8);
    for _ in 0..20 {
        let n = r.gen_range(2..=6);
        let mut a = random_irreducible(&mut r, n, 0.3);
        let delta = DVector::from_fn(n, |_, _| r.gen_range(0.5..2.0));
        // Scale so that rho(beta D^-1 A) = 0.8.
        let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / delta[i]);
        a /= bivirus::spectral::spectral_radius(&scaled).unwrap() / 0.8;
        let v = VirusParams::pairwise(delta, 1.0, a);
        let seed = DVector::from_fn(n, |_, _| r.gen_range(0.01..0.99));
        let out = find_single_virus_equilibrium(&v, &seed, 20_000, 1e-12).unwrap();
        assert_eq!(out, SingleVirusOutcome::ConvergedToDfe);
    }
}

#[test]
fn example2_boundary_agrees_with_independent_newton() {
    let m = builtin_model(Builtin::Example2);
    let v = m.virus(0);
    let SingleVirusOutcome::Endemic(x) =
        find_single_virus_equilibrium(v, &DVector::from_element(5, 0.5), 20_000, 1e-12).unwrap()
    else {
        panic!("expected endemic equilibrium")
    };
    assert!(v.single_field(&x).amax() <= 1e-10);
    let mut r = rng(21);
    let mut agreeing = 0;
    for _ in 0..10 {
        let seed = DVector::from_fn(5, |_, _| r.gen_range(0.6..0.99));
        if let Some(y) = single_virus_newton_oracle(v, &seed) {
            assert!((&y - &x).amax() < 1e-8, "{y} vs {x}");
            agreeing += 1;
        }
    }
    assert_eq!(agreeing, 10);
}

#[test]
fn example2_coexistence_is_not_stable() {
    let m = builtin_model(Builtin::Example2);
    let e = enumerate_equilibria(&m, EnumerationBudget::default()).unwrap();
    let b1 = &e.of_kind(EquilibriumKind::BoundaryV1).next().unwrap().point;
    let b2 = &e.of_kind(EquilibriumKind::BoundaryV2).next().unwrap().point;
    let mut seeds: Vec<State> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&l| State::new(&b1.x1 * l, &b2.x2 * (1.0 - l)))
        .collect();
    seeds.extend(sample_initial_conditions(5, 50, 3, Sampling::Cap));
    let found = find_coexistence(&m, &seeds, SOLVE_TOL);
    assert!(!found.is_empty());
    assert_structure(&found);
    assert!(found.iter().any(|r| r.s_jacobian >= 0.0));
    for r in &found {
        assert!(r.nondegenerate);
        // An unstable interior equilibrium of this monotone system sits
        // order-between the two stable boundaries.
        assert!(r.point.x1.iter().zip(b1.x1.iter()).all(|(a, b)| a < b));
        assert!(r.point.x2.iter().zip(b2.x2.iter()).all(|(a, b)| a < b));
    }
}

#[test]
fn identical_classic_viruses_have_the_halved_endemic_state() {
    let mut r = rng(4);
    let n = 4;
    let a = random_irreducible(&mut r, n, 0.5);
    let delta = DVector::from_element(n, 1.0);
    let v = VirusParams::pairwise(delta, 3.0, a);
    let m = BivirusModel::new(v.clone(), v.clone()).unwrap();
    let SingleVirusOutcome::Endemic(x) =
        find_single_virus_equilibrium(&v, &DVector::from_element(n, 0.9), 20_000, 1e-12).unwrap()
    else {
        panic!("expected endemic equilibrium")
    };
    let half = State::new(&x / 2.0, &x / 2.0);
    assert!(field_residual(&m, &half).unwrap() <= 1e-10);
    let found = find_coexistence(&m, &[half.clone()], SOLVE_TOL);
    assert!(found.iter().any(|r| r.point.distance(&half) < 1e-8));
    // The coexistence equilibria form a segment, so none is isolated.
    assert!(found.iter().all(|r| !r.nondegenerate));
}

#[test]
fn subcritical_pair_has_only_the_dfe() {
    let mut r = rng(12);
    for _ in 0..10 {
        let n = r.gen_range(2..=5);
        let mk = |r: &mut rand_chacha::ChaCha8Rng| {
            let a = random_irreducible(r, n, 0.3);
            let rho = bivirus::spectral::spectral_radius(&a).unwrap();
            VirusParams::pairwise(DVector::from_element(n, 1.0), r.gen_range(0.1..0.9) / rho, a)
        };
        let m = BivirusModel::new(mk(&mut r), mk(&mut r)).unwrap();
        assert!(check_dfe_global(&m).unwrap().holds());
        let e = enumerate_equilibria(&m, EnumerationBudget::default()).unwrap();
        assert_eq!(e.records.len(), 1);
        assert_eq!(e.records[0].kind, EquilibriumKind::Dfe);
        assert!(e.records[0].is_stable());
    }
}

#[test]
fn shipped_scenarios_enumerate_as_expected() {
    let e1 = enumerate_equilibria(&builtin_model(Builtin::Example1), EnumerationBudget::default()).unwrap();
    assert_structure(&e1.records);
    for kind in [EquilibriumKind::Dfe, EquilibriumKind::BoundaryV1, EquilibriumKind::BoundaryV2] {
        assert_eq!(e1.of_kind(kind).count(), 1);
        assert!(e1.of_kind(kind).all(|r| r.is_stable() && r.nondegenerate));
    }
    let e2 = enumerate_equilibria(&builtin_model(Builtin::Example2), EnumerationBudget::default()).unwrap();
    assert_structure(&e2.records);
    assert!(!e2.of_kind(EquilibriumKind::Dfe).next().unwrap().is_stable());
    assert!(e2.of_kind(EquilibriumKind::BoundaryV1).all(|r| r.is_stable()));
    assert!(e2.of_kind(EquilibriumKind::BoundaryV2).all(|r| r.is_stable()));
    assert!(e2.of_kind(EquilibriumKind::Coexistence).any(|r| !r.is_stable()));
    assert!(e2.records.iter().all(|r| r.nondegenerate));
    assert!(e1.warnings.is_empty() && e2.warnings.is_empty());
}

/// The tristability hypotheses hold for the first scenario, yet no interior
/// equilibrium exists there: following the unstable interior equilibrium of
/// the second scenario along the straight parameter path towards the first,
/// its Jacobian determinant shrinks to zero and the branch ends in a fold
/// just before the endpoint. Between the two stable boundary equilibria the
/// order interval also contains the stable DFE, and the unstable boundary
/// equilibria between them take the place of an interior one.
#[test]
fn example1_has_no_interior_equilibrium() {
    let m = builtin_model(Builtin::Example1);
    assert!(check_tristability(&m).unwrap().holds());

    let e = enumerate_equilibria(&m, EnumerationBudget::default()).unwrap();
    assert_eq!(e.of_kind(EquilibriumKind::Coexistence).count(), 0);
    let assessment = check_coexistence_hypotheses(&m, &e.records).unwrap();
    assert_eq!(assessment.regime(), Some(CoexistenceRegime::Tristable));
    assert_eq!(assessment.claim_verified, Some(false));

    let mut seeds = sample_initial_conditions(5, 2000, 99, Sampling::RandomLevel);
    seeds.extend(sample_initial_conditions(5, 500, 98, Sampling::Cap));
    assert!(find_coexistence(&m, &seeds, SOLVE_TOL).is_empty());

    // Continuation from the second scenario.
    let start = builtin(Builtin::Example2);
    let m2 = start.to_model().unwrap();
    let e2 = enumerate_equilibria(&m2, EnumerationBudget::default()).unwrap();
    let mut x = e2.of_kind(EquilibriumKind::Coexistence).next().unwrap().point.clone();
    let mut last_det = f64::NEG_INFINITY;
    let mut lost_at = None;
    let steps = 1000;
    for s in 1..=steps {
        let t = s as f64 / steps as f64;
        let mut c = start.clone();
        for (k, hoi) in [(0, 3.0), (1, 2.4)] {
            c.viruses[k].beta_pair = 2.0 + t * (0.2 - 2.0);
            c.viruses[k].beta_hoi = hoi + t * (5.0 - hoi);
        }
        let mt = c.to_model().unwrap();
        match newton_coexistence(&mt, &x, SOLVE_TOL, 100) {
            Some(p) => {
                x = p;
                last_det = EquilibriumRecord::new(&mt, x.clone()).unwrap().det_jacobian;
                assert!(last_det < 0.0);
            }
            None => {
                lost_at = Some(t);
                break;
            }
        }
    }
    let lost_at = lost_at.expect("branch reaches the first scenario");
    assert!(lost_at > 0.98, "{lost_at}");
    // |det J| fell from about 300 to below 1 on the way to the fold.
    assert!(last_det.abs() < 1.0, "{last_det}");

    // With Newton seeds, the unstable single-virus equilibria show up.
    let full = enumerate_equilibria(
        &m,
        EnumerationBudget {
            newton_boundary_seeds: 20,
            ..EnumerationBudget::default()
        },
    )
    .unwrap();
    assert_structure(&full.records);
    for kind in [EquilibriumKind::BoundaryV1, EquilibriumKind::BoundaryV2] {
        let unstable: Vec<_> = full.of_kind(kind).filter(|r| !r.is_stable()).collect();
        assert_eq!(unstable.len(), 1);
        assert!(unstable[0].det_jacobian < 0.0);
        assert!(unstable[0].point.norm_inf() < 0.5);
    }
}

#[test]
fn dedup_merges_close_points() {
    let a = State::uniform(3, 0.2, 0.3);
    let mut b = a.clone();
    b.x1[0] += 5e-7;
    let c = State::uniform(3, 0.2, 0.31);
    assert_eq!(dedup_points(vec![a.clone(), b, c.clone()]).len(), 2);
}

#[test]
fn structure_holds_on_random_models() {
    let mut r = rng(77);
    for _ in 0..15 {
        let m = random_model(&mut r, 5);
        let e = enumerate_equilibria(
            &m,
            EnumerationBudget {
                coexistence_random_seeds: 20,
                ..EnumerationBudget::default()
            },
        )
        .unwrap();
        assert_structure(&e.records);
        assert_eq!(e.records[0].kind, EquilibriumKind::Dfe);
        for rec in &e.records {
            // Boundary saturation decides stability once the own-virus block
            // is Hurwitz (the Jacobian is block triangular there).
            if matches!(rec.kind, EquilibriumKind::BoundaryV1 | EquilibriumKind::BoundaryV2) {
                let n = m.n();
                let j = jacobian(&m, &rec.point).unwrap();
                let own = if rec.kind == EquilibriumKind::BoundaryV1 { 0 } else { n };
                let own_s = bivirus::spectral::spectral_abscissa(&j.view((own, own), (n, n)).into_owned()).unwrap();
                if own_s < -1e-8 && rec.s_jacobian.abs() > 1e-8 {
                    assert_eq!(rec.saturated, rec.is_stable(), "{rec:?}");
                }
            }
        }
    }
}

#[test]
fn tristability_bound_on_boundary_components() {
    let mut r = rng(5);
    let mut checked = 0;
    while checked < 5 {
        let m = random_model(&mut r, 5);
        if !check_tristability(&m).unwrap().holds() {
            continue;
        }
        checked += 1;
        let e = enumerate_equilibria(&m, EnumerationBudget::default()).unwrap();
        assert!(e.of_kind(EquilibriumKind::Dfe).all(|r| r.is_stable()));
        for (k, kind) in [(0, EquilibriumKind::BoundaryV1), (1, EquilibriumKind::BoundaryV2)] {
            let support = hoi_support(m.virus(k)).support();
            for rec in e.of_kind(kind) {
                let x = if k == 0 { &rec.point.x1 } else { &rec.point.x2 };
                assert!(support.iter().all(|&i| x[i] >= 0.5 - 1e-9));
                assert!(rec.is_stable());
            }
        }
    }
}
