use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use so3tp::coupling::closed_form;
use so3tp::lowrank::{build_target, fit_cp, normalized_init_weights, TargetKind};
use so3tp::quadrature::{gauss_product_grid, BasisTable};
use so3tp::tensorprod::{
    effective_dense_weights, mimo_layer_cgtp, mimo_layer_integral, FactorTriple, IntegralMode, MimoWeights,
    MultiIrrepFeature,
};
use so3tp::wigner::CgTable;
use so3tp::Triplet;

const LMAX: u32 = 6;
const RANK: usize = 3;

#[test]
fn combined_layer_with_normalized_weights_matches_cgtp_scale() {
    let scalars = closed_form(LMAX).unwrap();
    let target = build_target(TargetKind::InvGamma, &scalars);
    let (factors, report) = fit_cp(&target, RANK, 5, 0).unwrap();
    assert_eq!(report.frac_within_2x, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cg = CgTable::new(LMAX).unwrap();
    let table = BasisTable::new(gauss_product_grid(3 * LMAX as usize + 2), LMAX as usize).unwrap();
    let (mut within, mut total) = (0usize, 0usize);
    for _ in 0..20 {
        let w = FactorTriple::random(LMAX, LMAX, LMAX, &mut rng);
        let base = MimoWeights::RankR(vec![w.clone(); RANK]);
        let normalized = normalized_init_weights(&factors, &base).unwrap();
        let h1 = MultiIrrepFeature::random(LMAX, &mut rng);
        let h2 = MultiIrrepFeature::random(LMAX, &mut rng);

        let reference = mimo_layer_cgtp(&h1, &h2, &MimoWeights::Factorized(w).expand().unwrap(), &cg).unwrap();
        let got = mimo_layer_integral(&h1, &h2, &normalized, &table, IntegralMode::Combined).unwrap();
        for l3 in 0..=LMAX {
            let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ratio = norm(got.block(l3)) / norm(reference.block(l3));
            total += 1;
            if (0.5..=2.0).contains(&ratio) {
                within += 1;
            }
        }
    }
    assert!(
        within as f64 >= 0.99 * total as f64,
        "{within} of {total} channels within 2x"
    );
}

#[test]
fn all_ones_base_gives_inverse_coupling() {
    let scalars = closed_form(LMAX).unwrap();
    let target = build_target(TargetKind::InvGamma, &scalars);
    let (factors, report) = fit_cp(&target, RANK, 5, 0).unwrap();
    assert_eq!(report.frac_within_2x, 1.0);
    let base = MimoWeights::RankR(vec![FactorTriple::ones(LMAX, LMAX, LMAX); RANK]);
    let weights = normalized_init_weights(&factors, &base).unwrap();
    let dense = weights.expand().unwrap();
    let effective = effective_dense_weights(&weights, &scalars, IntegralMode::Combined).unwrap();
    for t in Triplet::enumerate(LMAX) {
        let w = dense.get(t.l1, t.l2, t.l3);
        assert!((w - factors.reconstruct(t)).abs() < 1e-12 * w.abs());
        let e = effective.get(t.l1, t.l2, t.l3);
        assert!((0.5..=2.0).contains(&e), "{t}: effective weight {e}");
    }
}

#[test]
fn zero_base_gives_zero_weights() {
    let target = build_target(TargetKind::InvGamma, &closed_form(3).unwrap());
    let (factors, _) = fit_cp(&target, 2, 2, 0).unwrap();
    let zero = FactorTriple {
        w_out: vec![0.0; 4],
        w_in1: vec![0.0; 4],
        w_in2: vec![0.0; 4],
    };
    let w = normalized_init_weights(&factors, &MimoWeights::RankR(vec![zero; 2])).unwrap();
    assert!(w.expand().unwrap().values.iter().all(|&x| x == 0.0));
}

#[test]
fn exact_rank_one_target_is_recovered() {
    let a = [1.0, 2.0, 0.5, 3.0];
    let entries = Triplet::enumerate(3)
        .map(|t| so3tp::lowrank::TargetEntry {
            triplet: t,
            y: a[t.l1 as usize] * (1.0 + t.l2 as f64) / a[t.l3 as usize],
        })
        .collect();
    let target = so3tp::lowrank::Target::from_entries(TargetKind::InvGamma, 3, entries).unwrap();
    let (_, report) = fit_cp(&target, 1, 3, 1).unwrap();
    assert!(report.loss < 1e-20, "{report:?}");
    assert!(report.sigma_log < 1e-10);
}
