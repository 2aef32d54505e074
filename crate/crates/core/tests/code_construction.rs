//! Statistical checks on random code construction and the decoders.

use mawc::channel::MawcParams;
use mawc::code::{code_for_index, construct, simulate_error_prob, DecoderKind, SimulationConfig};
use mawc::rng::stream;
use mawc::source::doubly_symmetric;
use mawc::Budget;

/// `P[rank B = k]` for a uniform `ell × k` matrix.
fn full_rank_probability(ell: usize, k: usize) -> f64 {
    (0..k)
        .map(|i| 1.0 - 0.5f64.powi((ell - i) as i32))
        .product()
}

#[test]
fn outer_matrix_full_rank_fraction() {
    let (k, ell, seeds) = (4, 5, 200);
    let full = (0..seeds)
        .filter(|&s| {
            construct(k, 8, ell, &mut stream(s, &[0]))
                .unwrap()
                .b()
                .rank()
                == k
        })
        .count();
    let expect = full_rank_probability(ell, k);
    // (31/32)(15/16)(7/8)(3/4)
    assert!((expect - 0.596_008_300_781_25).abs() < 1e-15);
    let frac = full as f64 / seeds as f64;
    let sd = (expect * (1.0 - expect) / seeds as f64).sqrt();
    assert!((frac - expect).abs() < 4.0 * sd, "{frac} vs {expect}");
}

#[test]
fn codes_are_reproducible_per_index() {
    let config = SimulationConfig {
        joint: doubly_symmetric(0.5).unwrap(),
        channel: MawcParams::new(2, 0.05, 0.1).unwrap(),
        k: 4,
        n: 8,
        ell: 5,
        decoder: DecoderKind::TwoStage,
    };
    assert_eq!(
        code_for_index(&config, 3, 7).unwrap(),
        code_for_index(&config, 3, 7).unwrap()
    );
    assert_ne!(
        code_for_index(&config, 3, 7).unwrap(),
        code_for_index(&config, 3, 8).unwrap()
    );
}

#[test]
fn joint_ml_never_clearly_worse_than_two_stage() {
    let budget = Budget::default();
    for (k, n, ell) in [(3, 8, 5), (4, 10, 6), (6, 12, 8)] {
        let base = SimulationConfig {
            joint: doubly_symmetric(0.3).unwrap(),
            channel: MawcParams::new(2, 0.08, 0.2).unwrap(),
            k,
            n,
            ell,
            decoder: DecoderKind::TwoStage,
        };
        let two = simulate_error_prob(&base, 10, 200, 11, &budget).unwrap();
        let joint = simulate_error_prob(
            &SimulationConfig {
                decoder: DecoderKind::JointMl,
                ..base
            },
            10,
            200,
            11,
            &budget,
        )
        .unwrap();
        assert!(
            joint.mean <= two.mean + 2.0 * two.half_width,
            "k={k}: {} > {}",
            joint.mean,
            two.mean
        );
    }
}

#[test]
fn noiseless_full_rank_codes_never_fail() {
    let budget = Budget::default();
    let config = SimulationConfig {
        joint: mawc::source::JointPmf::independent(&[0.5, 0.5, 0.2]).unwrap(),
        channel: MawcParams::new(3, 0.0, 0.3).unwrap(),
        k: 3,
        n: 6,
        ell: 4,
        decoder: DecoderKind::TwoStage,
    };
    let good = (0..)
        .find(|&c| {
            let code = code_for_index(&config, 12, c).unwrap();
            code.a().rank() == 4 && code.b().rank() == 3
        })
        .unwrap();
    let code = code_for_index(&config, 12, good).unwrap();
    for t in 0..300 {
        let (block, _y, est) =
            mawc::code::run_trial(&config, Some(&code), 12, good, t, &budget).unwrap();
        assert_eq!(est, block.function_values());
    }
}
