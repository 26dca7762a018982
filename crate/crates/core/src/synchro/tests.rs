use super::*;
use crate::rng::{Purpose, StreamKey};
use crate::sde::{generate_noise_path, FnDrift, NoiseStream};
use rand::Rng;

fn law(alpha: f64, dim: usize) -> StableLaw {
    StableLaw::new(alpha, dim, 1.0).unwrap()
}

fn linear_pair(a: f64, b: f64, nu: f64) -> CoupledSpec {
    CoupledSpec::from_kinds(
        DriftKind::Linear { rate: a },
        DriftKind::Linear { rate: b },
        1.0,
        0.5,
        nu,
        law(1.5, 1),
    )
    .unwrap()
}

fn tanh_pair(nu: f64, dim: usize) -> CoupledSpec {
    CoupledSpec::from_kinds(
        DriftKind::Tanh { gain: 2.0, center: 0.5 },
        DriftKind::Tanh { gain: 2.0, center: -0.5 },
        1.0,
        0.5,
        nu,
        law(1.5, dim),
    )
    .unwrap()
}

fn zero_pair(nu: f64) -> CoupledSpec {
    let z = DriftKind::Constant { value: 0.0 };
    CoupledSpec::from_kinds(z, z, 1.0, 1.0, nu, law(1.5, 1)).unwrap()
}

#[test]
fn spec_invariants() {
    let z = DriftKind::Constant { value: 0.0 };
    assert!(CoupledSpec::from_kinds(z, z, 0.0, 1.0, 1.0, law(1.5, 1)).is_err());
    assert!(CoupledSpec::from_kinds(z, z, 1.0, 0.0, 1.0, law(1.5, 1)).is_err());
    assert!(CoupledSpec::from_kinds(z, z, 1.0, 1.0, 0.0, law(1.5, 1)).is_err());
    assert!(CoupledSpec::from_kinds(z, z, 1.0, 1.0, -2.0, law(1.5, 1)).is_err());
    let f = z.build(2);
    assert!(matches!(
        CoupledSpec::new(f.clone(), z.build(1), 1.0, 1.0, 1.0, law(1.5, 2)),
        Err(Error::Dimension { .. })
    ));
    let s = CoupledSpec::new(f.clone(), f, 1.0, 1.0, 4.0, law(1.5, 2)).unwrap();
    assert_eq!(s.epsilon(), 0.25);
    assert_eq!(s.with_epsilon(0.5).unwrap().nu(), 2.0);
    assert!(s.with_nu(0.0).is_err());
}

#[test]
fn transform_examples() {
    let s = to_slowfast(&[3.0], &[1.0], 1.0, 1.5).unwrap();
    assert_eq!((s.x_slow[0], s.y_fast[0], s.epsilon), (2.0, 1.0, 1.0));
    let s = to_slowfast(&[0.7, -2.0], &[0.7, -2.0], 37.0, 1.3).unwrap();
    assert_eq!(s.x_slow, vec![0.7, -2.0]);
    assert_eq!(s.y_fast, vec![0.0, 0.0]);
    let s = to_slowfast(&[1.0], &[0.0], 16.0, 2.0).unwrap();
    assert_eq!(s.x_slow[0], 0.5);
    assert!((s.y_fast[0] - 2.0).abs() < 1e-15);
    assert!(to_slowfast(&[1.0], &[0.0], 0.0, 2.0).is_err());
    assert!(to_slowfast(&[1.0], &[0.0, 1.0], 1.0, 2.0).is_err());
}

#[test]
fn inverse_examples() {
    let mk = |x: f64, y: f64, epsilon: f64, alpha: f64| SlowFastState {
        x_slow: vec![x],
        y_fast: vec![y],
        epsilon,
        alpha,
    };
    assert_eq!(from_slowfast(&mk(2.0, 1.0, 1.0, 1.5)), (vec![3.0], vec![1.0]));
    assert_eq!(from_slowfast(&mk(-4.0, 0.0, 0.3, 1.5)), (vec![-4.0], vec![-4.0]));
    let (x, y) = from_slowfast(&mk(0.5, 2.0, 1.0 / 16.0, 2.0));
    assert!((x[0] - 1.0).abs() < 1e-15 && y[0].abs() < 1e-15);
}

#[test]
fn coupled_drift_examples() {
    let (dx, dy) = coupled_drift(&zero_pair(1.0), &[1.0], &[0.0]).unwrap();
    assert_eq!((dx[0], dy[0]), (-1.0, 1.0));
    let s = tanh_pair(5.0, 1);
    let (dx, dy) = coupled_drift(&s, &[0.3], &[0.3]).unwrap();
    assert_eq!(dx[0], -2.0 * (0.3f64 - 0.5).tanh());
    assert_eq!(dy[0], -2.0 * (0.3f64 + 0.5).tanh());
    let (dx, dy) = coupled_drift(&linear_pair(1.0, 2.0, 3.0), &[2.0], &[-1.0]).unwrap();
    assert_eq!((dx[0], dy[0]), (-11.0, 11.0));
}

#[test]
fn slowfast_drift_examples() {
    let s = linear_pair(1.3, 1.3, 4.0);
    let st = SlowFastState {
        x_slow: vec![0.8],
        y_fast: vec![0.0],
        epsilon: 0.25,
        alpha: 1.5,
    };
    let (dx, dy) = slowfast_drift(&s, &st).unwrap();
    assert!((dx[0] + 1.3 * 0.8).abs() < 1e-15);
    assert_eq!(dy[0], 0.0);
    let st = SlowFastState {
        x_slow: vec![0.2],
        y_fast: vec![1.0],
        epsilon: 0.5,
        alpha: 1.5,
    };
    let (dx, dy) = slowfast_drift(&zero_pair(2.0), &st).unwrap();
    assert_eq!((dx[0], dy[0]), (0.0, -4.0));
}

#[test]
fn frozen_fast_examples() {
    let s = tanh_pair(1.0, 1);
    let same = CoupledSpec::new(s.f().clone(), s.f().clone(), 1.0, 0.5, 1.0, law(1.5, 1)).unwrap();
    let d = frozen_fast_drift(&[0.4], &same, &[0.0], 0.1).unwrap();
    assert_eq!(d[0], 0.0);
    let z = DriftKind::Constant { value: 3.0 };
    let c = CoupledSpec::from_kinds(z, z, 1.0, 0.5, 1.0, law(1.5, 1)).unwrap();
    let d = frozen_fast_drift(&[0.4], &c, &[1.5], 0.1).unwrap();
    assert!((d[0] + 30.0).abs() < 1e-12);
    let up = Arc::new(FnDrift::new(1, |x: &[f64], _t, o: &mut [f64]| o[0] = x[0]));
    let down = Arc::new(FnDrift::new(1, |x: &[f64], _t, o: &mut [f64]| o[0] = -x[0]));
    let c = CoupledSpec::new(up, down, 1.0, 0.5, 1.0, law(1.5, 1)).unwrap();
    let d = frozen_fast_drift(&[0.7], &c, &[0.0], 1.0).unwrap();
    assert!((d[0] - 0.7).abs() < 1e-15);
}

#[test]
fn averaged_drift_examples() {
    let d = averaged_drift_exact(&linear_pair(1.0, 2.0, 1.0), &[1.0]).unwrap();
    assert_eq!(d[0], -1.5);
    let s = tanh_pair(1.0, 1);
    let same = CoupledSpec::new(s.f().clone(), s.f().clone(), 1.0, 0.5, 1.0, law(1.5, 1)).unwrap();
    let d = averaged_drift_exact(&same, &[0.9]).unwrap();
    assert_eq!(d[0], -2.0 * (0.9f64 - 0.5).tanh());
}

/// Applies `(x, y) ↦ ((x+y)/2, (x-y)/(2ε^{1/α}))` to a coupled drift pair.
fn push_forward(dx: &[f64], dy: &[f64], epsilon: f64, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let s = fast_scale(epsilon, alpha);
    (
        dx.iter().zip(dy).map(|(a, b)| 0.5 * (a + b)).collect(),
        dx.iter().zip(dy).map(|(a, b)| 0.5 * (a - b) / s).collect(),
    )
}

#[test]
fn drift_and_noise_conjugacy() {
    let mut rng = StreamKey::new(11, 0, Purpose::Custom(1)).rng();
    for trial in 0..2000 {
        let nu = 10f64.powf(rng.random_range(-1.0..2.5));
        let alpha = rng.random_range(1.05..2.0);
        let spec = if trial % 2 == 0 { tanh_pair(nu, 2) } else { linear_pair(0.7, 2.1, nu) };
        let dim = spec.dim();
        let spec = CoupledSpec::new(spec.f().clone(), spec.g().clone(), 1.3, -0.4, nu, law(alpha, dim)).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (dx, dy) = coupled_drift(&spec, &x, &y).unwrap();
        let (ps, pf) = push_forward(&dx, &dy, 1.0 / nu, alpha);
        let (ss, sf) = slowfast_drift(&spec, &to_slowfast(&x, &y, nu, alpha).unwrap()).unwrap();
        let scale = fast_scale(1.0 / nu, alpha);
        for i in 0..dim {
            let ref_slow = 1.0 + dx[i].abs() + dy[i].abs();
            assert!((ps[i] - ss[i]).abs() <= 1e-10 * ref_slow);
            assert!((pf[i] - sf[i]).abs() <= 1e-10 * ref_slow / scale);
        }
        let (s_slow, s_fast) = push_forward(&[spec.sigma1()], &[spec.sigma2()], 1.0 / nu, alpha);
        assert!((s_slow[0] - spec.slow_sigma()).abs() < 1e-15);
        assert!((s_fast[0] - spec.fast_sigma(1.0 / nu)).abs() <= 1e-14 * s_fast[0].abs().max(1.0));
    }
    let same = CoupledSpec::from_kinds(
        DriftKind::Linear { rate: 1.0 },
        DriftKind::Linear { rate: 1.0 },
        0.7,
        0.7,
        3.0,
        law(1.5, 1),
    )
    .unwrap();
    assert_eq!(same.fast_sigma(same.epsilon()), 0.0);
}

#[test]
fn system_wrappers_match_free_functions() {
    let spec = tanh_pair(8.0, 2);
    let (x, y) = ([0.3, -1.1], [2.0, 0.4]);
    let mut out = [0.0; 4];
    CoupledSystem::new(spec.clone()).eval(&[x[0], x[1], y[0], y[1]], 0.0, &mut out);
    let (dx, dy) = coupled_drift(&spec, &x, &y).unwrap();
    assert_eq!(out.to_vec(), [dx, dy].concat());

    let sf = SlowFastSystem::new(spec.clone());
    let st = to_slowfast(&x, &y, 8.0, 1.5).unwrap();
    let z = [st.x_slow.clone(), st.y_fast.clone()].concat();
    sf.eval(&z, 0.0, &mut out);
    let (ds, df) = slowfast_drift(&spec, &st).unwrap();
    assert_eq!(out.to_vec(), [ds, df.clone()].concat());
    assert_eq!(sf.sigma(), vec![0.75, 0.75, spec.fast_sigma(0.125), spec.fast_sigma(0.125)]);

    let ff = FrozenFastSystem::new(spec.clone(), st.x_slow.clone(), 0.125).unwrap();
    let mut o2 = [0.0; 2];
    ff.eval(&st.y_fast, 0.0, &mut o2);
    assert_eq!(o2.to_vec(), df);
    let mut k = [0.0; 2];
    ff.linear_decay(&mut k);
    assert_eq!(k, [16.0, 16.0]);

    let av = AveragedSystem::new(spec.clone());
    av.eval(&x, 0.0, &mut o2);
    assert_eq!(o2.to_vec(), averaged_drift_exact(&spec, &x).unwrap());
    assert_eq!(av.lipschitz(), Some(2.0));
}

#[test]
fn knot_schedule() {
    let k = KnotSchedule::new(0.1, 0.01).unwrap();
    assert_eq!(k.steps_per_knot(), 10);
    assert_eq!(k.knot_step(0), 0);
    assert_eq!(k.knot_step(19), 10);
    assert!(matches!(KnotSchedule::new(0.1, 0.03), Err(Error::GridMismatch(_))));
    assert!(KnotSchedule::new(0.0, 0.01).is_err());
    let n = KnotSchedule::nearest(0.1037, 0.01).unwrap();
    assert_eq!(n.steps_per_knot(), 10);
}

#[test]
fn auxiliary_single_knot_freezes_coefficients() {
    let spec = tanh_pair(10.0, 1);
    let grid = PathGrid::new(0.0, 1.0, 200).unwrap();
    let start = to_slowfast(&[1.0], &[-0.5], 10.0, 1.5).unwrap();
    let key = StreamKey::noise(5, 0);
    let mut noise = NoiseStream::new(*spec.law(), &grid, key);
    let run = auxiliary_paths(&spec, &start, &KnotSchedule::new(1.0, grid.h()).unwrap(), &grid, &mut noise).unwrap();
    assert!(run.diverged_at.is_none());

    // Euler path of the system whose F, G use the initial slow state.
    let frozen_knot = start.x_slow.clone();
    let drift = FnDrift::new(2, move |z: &[f64], _t, out: &mut [f64]| {
        let (s, f) = auxiliary_drift(&tanh_pair(10.0, 1), &frozen_knot, &z[1..], 0.1).unwrap();
        out[0] = s[0];
        out[1] = f[0];
    });
    let np = generate_noise_path(spec.law(), &grid, key);
    let sigma = [spec.slow_sigma(), spec.fast_sigma(0.1)];
    let reference = crate::sde::euler_maruyama(&drift, &sigma, &[start.x_slow[0], start.y_fast[0]], &grid, &np).unwrap();
    for (k, v) in reference.values().enumerate() {
        assert!((run.auxiliary[2 * k] - v[0]).abs() < 1e-12);
        assert!((run.auxiliary[2 * k + 1] - v[1]).abs() < 1e-12);
    }
    assert!(KnotSchedule::new(0.013, grid.h()).is_err());
}

#[test]
fn auxiliary_fast_decays_without_forcing() {
    let push = DriftKind::Constant { value: 0.7 };
    let spec = CoupledSpec::from_kinds(push, push, 0.8, 0.8, 20.0, law(1.5, 1)).unwrap();
    let grid = PathGrid::new(0.0, 0.5, 500).unwrap();
    let start = to_slowfast(&[1.0], &[0.0], 20.0, 1.5).unwrap();
    let mut noise = NoiseStream::new(*spec.law(), &grid, StreamKey::noise(2, 0));
    let sched = KnotSchedule::new(0.01, grid.h()).unwrap();
    let run = auxiliary_paths(&spec, &start, &sched, &grid, &mut noise).unwrap();
    let y0 = start.y_fast[0];
    let factor: f64 = 1.0 - 2.0 * 20.0 * grid.h();
    for k in 0..=grid.n_steps() {
        let expected = y0 * factor.powi(k as i32);
        assert!((run.auxiliary[2 * k + 1] - expected).abs() < 1e-12 * y0.abs());
    }
}

#[test]
fn validator_catches_wrong_sign() {
    let region = ProbeRegion::new(-4.0, 4.0, 0.5).unwrap();
    match validate_hypotheses(&linear_pair(1.0, 2.0, 1.0), &region, 2000, 1) {
        Err(Error::HypothesisViolation { name, witness, .. }) => {
            assert_eq!(name, "H.2");
            assert!(witness[0].abs() >= 0.5);
        }
        other => panic!("expected violation, got {other:?}"),
    }
    let c = validate_hypotheses(&linear_pair(2.0, 1.0, 1.0), &region, 2000, 1).unwrap();
    assert!((c.dissipativity_m2 - 1.0).abs() < 1e-9);
    assert!((c.lipschitz_l - 2.0).abs() < 1e-6);
    assert!(c.warnings.is_empty());
    assert!(c.effective_dissipativity.is_finite());
}

#[test]
fn validator_warns_on_identical_drifts() {
    let tanh = DriftKind::Tanh { gain: 2.0, center: 0.0 };
    let spec = CoupledSpec::from_kinds(tanh, tanh, 1.0, 0.5, 10.0, law(1.5, 2)).unwrap();
    let region = ProbeRegion::new(-3.0, 3.0, 1.0).unwrap();
    let c = validate_hypotheses(&spec, &region, 1000, 3).unwrap();
    assert_eq!(c.dissipativity_m2, 0.0);
    assert!(c.warnings.iter().any(|w| w.contains("M2 = 0")));
    assert!(c.lipschitz_l <= 2.0 + 1e-9 && c.lipschitz_l > 1.5);
    assert!(c.m3 <= 2.0 * 2f64.sqrt() + 1e-12);
    assert!(c.effective_dissipativity >= 20.0 - 1e-9);
    assert!(validate_hypotheses(&spec, &region, 999, 3).is_err());
}

#[test]
fn validator_checks_declared_lipschitz() {
    let liar = Arc::new(FnDrift::new(1, |x: &[f64], _t, o: &mut [f64]| o[0] = -3.0 * x[0]).with_lipschitz(1.0));
    let g = DriftKind::Linear { rate: 1.0 }.build(1);
    let spec = CoupledSpec::new(liar, g, 1.0, 1.0, 1.0, law(1.5, 1)).unwrap();
    let region = ProbeRegion::new(-1.0, 1.0, 0.1).unwrap();
    assert!(matches!(
        validate_hypotheses(&spec, &region, 1000, 0),
        Err(Error::HypothesisViolation { name, .. }) if name == "H.1"
    ));
}

#[test]
fn difference_contracts_under_shared_noise() {
    let spec = CoupledSpec::from_kinds(
        DriftKind::Tanh { gain: 1.0, center: 0.0 },
        DriftKind::Tanh { gain: 1.0, center: 0.0 },
        0.6,
        0.6,
        3.0,
        law(1.5, 1),
    )
    .unwrap();
    let sys = CoupledSystem::new(spec);
    let grid = PathGrid::new(0.0, 2.0, 2000).unwrap();
    let np = generate_noise_path(&StableLaw::new(1.5, 1, 1.0).unwrap(), &grid, StreamKey::noise(9, 0));
    let path = crate::sde::euler_maruyama(&sys, &sys.sigma(), &[2.0, -1.0], &grid, &np).unwrap();
    for (k, v) in path.values().enumerate() {
        let bound = (-(6.0 - 1.0) * grid.time(k)).exp() * 3.0;
        assert!((v[0] - v[1]).abs() <= bound * (1.0 + 1e-9));
    }
}
