//! Library results against brute-force references.

mod common;

use nalgebra::{DMatrix, DVector};
use qnc::coding::{
    build_psi_tot, compute_eps_rec, design_coefficients, effective_noise, eps_rec_profile, run_qnc,
    uniform_edge_noise, MeasurementSystem,
};
use qnc::decoder::{l0_oracle, l1_decode, DecodeStatus, DecoderOptions};
use qnc::forwarding::run_pf;
use qnc::linalg::norm2;
use qnc::network::generate_deployment;
use qnc::quantizer::QuantizerSpec;
use qnc::rip::{exhaustive_rip_constant, gram_eigen_range};
use qnc::source::generate_messages;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn psi_tot_matches_product_sum_with_time_varying_coefficients() {
    for seed in 0..12u64 {
        let n = 6 + (seed as usize % 10);
        let d = generate_deployment(n, 4 * n, 50 + seed).unwrap();
        let t = 6;
        let c = common::random_schedule(&d, t, seed);
        let fast = build_psi_tot(&d, &c, t);
        let slow = common::literal_psi_tot(&d, &c, t);
        let rel = (&fast - &slow).norm() / slow.norm();
        assert!(rel < 1e-12, "seed {seed}: relative difference {rel:e}");
    }
}

#[test]
fn psi_tot_prefix_is_earlier_psi_tot() {
    let d = generate_deployment(15, 60, 3).unwrap();
    let c = design_coefficients(&d, 4, 1.0).unwrap();
    let long = build_psi_tot(&d, &c, 7);
    let short = build_psi_tot(&d, &c, 4);
    assert_eq!(long.rows(0, short.nrows()), short.rows(0, short.nrows()));
}

#[test]
fn eps_rec_matches_dense_absolute_products() {
    for seed in 0..6u64 {
        let d = generate_deployment(10, 35, 80 + seed).unwrap();
        let c = common::random_schedule(&d, 6, 100 + seed);
        let q = QuantizerSpec::new(&d, 6 + seed as u32, 10.0).unwrap();
        let profile = eps_rec_profile(&d, &c, &q, 6);
        for t in 2..=6 {
            let oracle = common::literal_eps_rec(&d, &c, &q.steps(), t);
            let got = profile[t - 2];
            assert!((got - oracle).abs() <= 1e-12 * oracle, "t={t}: {got} vs {oracle}");
        }
    }
}

#[test]
fn synthetic_quantization_noise_stays_inside_eps_rec() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for inst in 0..4u64 {
        let n = 8 + 3 * inst as usize;
        let d = generate_deployment(n, 4 * n, 200 + inst).unwrap();
        let c = design_coefficients(&d, 300 + inst, 1.0).unwrap();
        let q = QuantizerSpec::new(&d, 4, 10.0).unwrap();
        let t = 6;
        let eps = compute_eps_rec(&d, &c, &q, t);
        let mut worst: f64 = 0.0;
        for _ in 0..2500 {
            let noise: Vec<Vec<f64>> = (2..=t).map(|_| uniform_edge_noise(&q, &mut rng)).collect();
            worst = worst.max(norm2(&effective_noise(&d, &c, &noise)));
        }
        // extreme corners of the noise cube
        for _ in 0..200 {
            let noise: Vec<Vec<f64>> = (2..=t)
                .map(|_| q.steps().iter().map(|s| if rng.gen_bool(0.5) { s / 2.0 } else { -s / 2.0 }).collect())
                .collect();
            worst = worst.max(norm2(&effective_noise(&d, &c, &noise)));
        }
        assert!(worst <= eps, "instance {inst}: {worst} > {eps}");
        assert!(worst > 0.0);
    }
}

#[test]
fn quantized_run_noise_is_bounded_at_every_horizon() {
    let d = generate_deployment(40, 240, 9).unwrap();
    let c = design_coefficients(&d, 10, 1.0).unwrap();
    let msg = generate_messages(40, 3, 0.02, 10.0, 11).unwrap();
    for l in [2u32, 5, 12] {
        let q = QuantizerSpec::new(&d, l, 10.0).unwrap();
        let run = run_qnc(&d, &c, &q, msg.x.as_slice(), 9, false).unwrap();
        for t in 2..=9 {
            let sys = MeasurementSystem::assemble(&d, &c, &q, &run, t);
            assert!(sys.noise_norm(msg.x.as_slice()) <= sys.eps_rec, "L={l} t={t}");
        }
    }
}

#[test]
fn decoder_matches_l0_on_small_noiseless_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut agree = 0;
    for _ in 0..10 {
        let psi = common::gaussian_matrix(8, 12, &mut rng);
        let s = common::planted_sparse(12, 2, &mut rng);
        let z = &psi * &s;
        let l0 = l0_oracle(&psi, &z, 2).unwrap().unwrap();
        let mut planted: Vec<usize> = (0..12).filter(|&i| s[i] != 0.0).collect();
        planted.sort_unstable();
        assert_eq!(l0.support, planted);
        let r = l1_decode(&psi, &DMatrix::identity(12, 12), &z, 0.0, &DecoderOptions::default()).unwrap();
        assert_eq!(r.status, DecodeStatus::Converged);
        if (&r.s_hat - &s).norm() <= 1e-6 {
            agree += 1;
        } else {
            // l1 may only lose to l0 by finding something with smaller l1 norm
            assert!(r.objective <= s.lp_norm(1) * (1.0 + 1e-6));
        }
    }
    assert!(agree >= 8, "only {agree}/10 agreed");
}

#[test]
fn decoded_objective_never_exceeds_truth() {
    let d = generate_deployment(30, 200, 21).unwrap();
    let c = design_coefficients(&d, 22, 1.0).unwrap();
    let q = QuantizerSpec::new(&d, 8, 10.0).unwrap();
    let opts = DecoderOptions::default();
    for eps in [0.0, 0.02, 0.2] {
        let msg = generate_messages(30, 3, eps, 10.0, 23).unwrap();
        let run = run_qnc(&d, &c, &q, msg.x.as_slice(), 6, false).unwrap();
        for t in 2..=6 {
            let sys = MeasurementSystem::assemble(&d, &c, &q, &run, t);
            let r = l1_decode(&sys.psi_tot, &msg.phi, &sys.z_tot, sys.eps_rec, &opts).unwrap();
            assert_eq!(r.status, DecodeStatus::Converged);
            let truth = msg.s.lp_norm(1);
            assert!(r.objective <= truth * (1.0 + opts.rel_gap), "eps={eps} t={t}");
            assert!(r.residual_norm <= sys.eps_rec * (1.0 + opts.feas_tol));
        }
    }
}

#[test]
fn exhaustive_rip_matches_singular_value_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let theta = common::gaussian_matrix(8, 12, &mut rng);
    let mut oracle: f64 = 0.0;
    for i in 0..12 {
        for j in (i + 1)..12 {
            let cols = DMatrix::from_columns(&[theta.column(i), theta.column(j)]);
            for sv in cols.singular_values().iter() {
                oracle = oracle.max((sv * sv - 1.0).abs());
            }
        }
    }
    let got = exhaustive_rip_constant(&theta, 2).unwrap();
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    let (lo, hi) = gram_eigen_range(&theta, 2).unwrap();
    assert!((got - (hi - 1.0).max(1.0 - lo)).abs() < 1e-15);
}

#[test]
fn forwarding_final_error_within_worst_case_quantization() {
    for seed in 0..5u64 {
        let d = generate_deployment(50, 300, 400 + seed).unwrap();
        let msg = generate_messages(50, 2, 0.0, 10.0, 500 + seed).unwrap();
        let q = QuantizerSpec::new(&d, 10, 10.0).unwrap();
        let t_end = qnc::forwarding::completion_time(&d).unwrap();
        let run = run_pf(&d, msg.x.as_slice(), &q, t_end).unwrap();
        assert_eq!(*run.delivered.last().unwrap(), 50);
        let diff = DVector::from_column_slice(&run.estimates[t_end - 1]) - &msg.x;
        assert!(diff.norm() <= (50f64).sqrt() * q.step(0) / 2.0);
        assert!(run.delivered[t_end - 2] < 50);
    }
}

#[test]
fn message_norm_ensemble_in_expected_range() {
    // the reference sweep combinations at n = 100
    for &(k, eps) in &[(5usize, 0.0), (5, 0.2), (10, 0.02), (20, 0.002)] {
        let mean: f64 = (0..100u64)
            .map(|s| 20.0 * generate_messages(100, k, eps, 10.0, 1000 + s).unwrap().x.norm().log10())
            .sum::<f64>()
            / 100.0;
        assert!((30.0..=44.0).contains(&mean), "k={k} eps={eps}: {mean} dB");
    }
}
