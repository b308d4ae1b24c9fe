mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spa_control::error::Error;
use spa_control::lti::{StateSpaceModel, C64};
use spa_control::sysid::synthetic::{damping_family, second_order_step_trace, with_output_noise};
use spa_control::sysid::{
    fit_damping_ratio, fit_percent, identify_subspace_with, simulate_discrete, ExperimentTrace, ModelOrder,
    SubspaceOptions,
};

const DT: f64 = 0.01;

/// Stable discrete SISO system of order `n` with poles off the negative
/// real axis, in a random basis.
fn random_discrete(rng: &mut ChaCha8Rng, n: usize) -> (StateSpaceModel, Vec<C64>) {
    let mut modal = DMatrix::zeros(n, n);
    let mut poles = Vec::new();
    let mut k = 0;
    while k < n {
        let r = rng.random_range(0.5..0.95);
        if poles.iter().any(|p: &C64| (p.norm() - r).abs() < 0.08) {
            continue;
        }
        if k + 1 < n && rng.random_bool(0.5) {
            let th: f64 = rng.random_range(0.1..1.2);
            let (c, s) = (r * th.cos(), r * th.sin());
            modal[(k, k)] = c;
            modal[(k, k + 1)] = -s;
            modal[(k + 1, k)] = s;
            modal[(k + 1, k + 1)] = c;
            poles.push(C64::from_polar(r, th));
            poles.push(C64::from_polar(r, -th));
            k += 2;
        } else {
            modal[(k, k)] = r;
            poles.push(C64::new(r, 0.0));
            k += 1;
        }
    }
    let t = loop {
        let t = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.5..0.5));
        if t.clone().svd(false, false).singular_values.min() > 0.2 {
            break t;
        }
    };
    let t_inv = t.clone().try_inverse().unwrap();
    let a = &t * modal * &t_inv;
    // modal-basis input and output weights keep every mode visible
    let b = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let c = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let b = &t * b;
    let c = t_inv.transpose() * c;
    (StateSpaceModel::siso(a, b, c, 0.0).unwrap(), poles)
}

/// Random binary sequence with random hold lengths.
fn excitation(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut u = Vec::with_capacity(len);
    while u.len() < len {
        let level = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let hold = rng.random_range(1..6);
        u.extend(std::iter::repeat_n(level, hold));
    }
    u.truncate(len);
    u
}

fn trace(u: Vec<f64>, y: Vec<f64>) -> ExperimentTrace {
    let t = (0..u.len()).map(|k| k as f64 * DT).collect();
    ExperimentTrace::new(t, u, y).unwrap()
}

#[test]
fn random_systems_are_recovered_from_rich_excitation() {
    let mut rng = common::rng(11);
    let opts = SubspaceOptions {
        feedthrough: false,
        ..SubspaceOptions::new(10)
    };
    for trial in 0..30 {
        let n = 1 + trial % 4;
        let (truth, poles) = random_discrete(&mut rng, n);
        let u = excitation(&mut rng, 1200);
        let y = simulate_discrete(&truth, &u);
        let id = identify_subspace_with(&trace(u, y), ModelOrder::Fixed(n), &opts).unwrap();
        assert!(id.fit_percent >= 99.0, "trial {trial} (n={n}): fit {}", id.fit_percent);

        let u_val = excitation(&mut rng, 800);
        let fit = fit_percent(&simulate_discrete(&truth, &u_val), &simulate_discrete(&id.discrete, &u_val)).unwrap();
        assert!(fit >= 99.0, "trial {trial} (n={n}): validation fit {fit}");

        let mut found = id.model.poles();
        for z in &poles {
            let s = z.ln() / DT;
            let (i, d) = found
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - s).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d < 1e-4 * s.norm().max(1.0), "trial {trial}: pole {s} missed by {d}");
            found.remove(i);
        }
    }
}

#[test]
fn automatic_order_matches_true_order() {
    let mut rng = common::rng(12);
    for n in 1..=4 {
        let (truth, _) = random_discrete(&mut rng, n);
        let u = excitation(&mut rng, 1500);
        let y = simulate_discrete(&truth, &u);
        let opts = SubspaceOptions {
            feedthrough: false,
            ..SubspaceOptions::new(10)
        };
        let id = identify_subspace_with(&trace(u, y), ModelOrder::Auto { max: 6 }, &opts).unwrap();
        assert_eq!(id.order, n, "sv {:?}", id.singular_values);
    }
}

#[test]
fn refinement_never_hurts_the_fit() {
    let base = second_order_step_trace(0.6, 2.0, 1.0, 1.0, 100.0, 10.0).unwrap();
    for seed in 0..3 {
        let noisy = with_output_noise(&base, 0.04, seed).unwrap();
        let plain = SubspaceOptions {
            feedthrough: false,
            ..SubspaceOptions::new(20)
        };
        let refined = SubspaceOptions { refine: true, ..plain };
        let a = identify_subspace_with(&noisy, ModelOrder::Fixed(2), &plain).unwrap();
        let b = identify_subspace_with(&noisy, ModelOrder::Fixed(2), &refined).unwrap();
        assert!(b.fit_percent >= a.fit_percent - 1e-9, "seed {seed}: {} < {}", b.fit_percent, a.fit_percent);
    }
}

#[test]
fn order_beyond_the_data_is_rejected() {
    let mut rng = common::rng(13);
    let (truth, _) = random_discrete(&mut rng, 2);
    let u = excitation(&mut rng, 600);
    let y = simulate_discrete(&truth, &u);
    let r = identify_subspace_with(&trace(u, y), ModelOrder::Fixed(5), &SubspaceOptions::new(10));
    assert!(matches!(r, Err(Error::OrderTooHigh { .. })), "{r:?}");
}

#[test]
fn damping_spread_of_a_family() {
    let fam = damping_family(0.6, 0.1, 2.0, 1.0, 1.0, 7).unwrap();
    let est = fit_damping_ratio(&fam, 2.0, 1.0).unwrap();
    assert!((est.zeta_nominal - 0.6).abs() < 1e-4);
    assert!((est.zeta_delta - 0.1).abs() < 1e-4);
    assert!(!est.has_boundary_warning());

    let single = fit_damping_ratio(&fam[3..4], 2.0, 1.0).unwrap();
    assert_eq!(single.zeta_delta, 0.0);
}

#[test]
fn constant_measurement_has_no_fit() {
    assert!(matches!(fit_percent(&[0.0; 20], &[0.1; 20]), Err(Error::UndefinedFit)));
}
