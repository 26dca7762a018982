//! Invariant measure of the frozen fast process, averaged drifts and mixing
//! rates.
//!
//! With the slow variable frozen at `x`, the fast component relaxes at rate
//! `2/ε`, so one relaxation time is `ε/2`. Measures are sampled along long
//! stationary chains; all aggregation uses median-of-means.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{check_moment_order, Error, Result};
use crate::rng::{Purpose, StreamKey};
use crate::sde::{integrate, DriftField, NoiseStream, Outcome, PathGrid, Scheme, StackedDrift};
use crate::stats::{linear_fit, lp_norm_mom, median_of_means, Cloud, MomEstimate};
use crate::synchro::{fast_scale, CoupledSpec, FrozenFastSystem};

/// Discretisation of the stationary chains, in units of `ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureSettings {
    /// Step `h = step_fraction · ε`.
    pub step_fraction: f64,
    /// Burn-in, in relaxation times `ε/2`.
    pub burn_in_relaxations: f64,
    /// Spacing of retained samples, in relaxation times.
    pub thinning_relaxations: f64,
    /// Number of independent replica chains.
    pub chains: usize,
    pub scheme: Scheme,
}

impl Default for MeasureSettings {
    fn default() -> Self {
        Self {
            step_fraction: 0.01,
            burn_in_relaxations: 10.0,
            thinning_relaxations: 1.0,
            chains: 16,
            scheme: Scheme::EulerMaruyama,
        }
    }
}

/// Samples of the frozen fast process after relaxation.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    cloud: Cloud,
    thinning: usize,
    burn_in: f64,
    frozen_x: Vec<f64>,
    epsilon: f64,
    alpha: f64,
    h: f64,
    excluded: usize,
}

impl EmpiricalMeasure {
    pub fn cloud(&self) -> &Cloud {
        &self.cloud
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Stride between retained samples, in steps.
    pub fn thinning(&self) -> usize {
        self.thinning
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in
    }

    pub fn frozen_x(&self) -> &[f64] {
        &self.frozen_x
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Samples lost to diverged chains.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    /// One sample per row, columns `y1..y_dim`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.cloud.dim()).map(|i| format!("y{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in self.cloud.points() {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn estimate_invariant_measure(
    spec: &CoupledSpec,
    x: &[f64],
    epsilon: f64,
    n_samples: usize,
    seed_key: StreamKey,
) -> Result<EmpiricalMeasure> {
    estimate_invariant_measure_with(spec, x, epsilon, n_samples, seed_key, &MeasureSettings::default())
}

/// Runs `settings.chains` replica chains of the frozen fast equation from
/// `y = 0` and pools their thinned post-burn-in states.
///
/// Chain `c` draws its noise from `seed_key` with path index
/// `seed_key.path_index · chains + c`.
pub fn estimate_invariant_measure_with(
    spec: &CoupledSpec,
    x: &[f64],
    epsilon: f64,
    n_samples: usize,
    seed_key: StreamKey,
    settings: &MeasureSettings,
) -> Result<EmpiricalMeasure> {
    if n_samples < 1000 {
        return Err(Error::Domain(format!("need at least 1000 samples, got {n_samples}")));
    }
    if settings.burn_in_relaxations < 10.0 {
        return Err(Error::Domain("burn-in must cover at least ten relaxation times".into()));
    }
    if !(settings.step_fraction > 0.0 && settings.step_fraction <= 0.01) {
        return Err(Error::Domain(format!(
            "step fraction {} must lie in (0, 0.01]",
            settings.step_fraction
        )));
    }
    if settings.chains == 0 || !(settings.thinning_relaxations > 0.0) {
        return Err(Error::Domain("chains and thinning must be positive".into()));
    }
    let system = FrozenFastSystem::new(spec.clone(), x.to_vec(), epsilon)?;
    let sigma = system.sigma();
    let n = spec.dim();
    let h = settings.step_fraction * epsilon;
    let relax = 0.5 * epsilon;
    let burn_steps = (settings.burn_in_relaxations * relax / h).ceil() as usize;
    let thin = ((settings.thinning_relaxations * relax / h).round() as usize).max(1);
    let chains = settings.chains;
    let per_chain = n_samples.div_ceil(chains);
    let total_steps = burn_steps + per_chain * thin;
    let grid = PathGrid::new(0.0, total_steps as f64 * h, total_steps)?;
    let y0 = vec![0.0; n];

    let runs: Vec<Result<Vec<f64>>> = (0..chains as u64)
        .into_par_iter()
        .map(|c| {
            let key = seed_key.with_path(seed_key.path_index.wrapping_mul(chains as u64).wrapping_add(c));
            let mut noise = NoiseStream::new(*spec.law(), &grid, key);
            let mut kept = Vec::with_capacity(per_chain * n);
            integrate(&system, &sigma, &y0, &grid, &mut noise, settings.scheme, |k, y| {
                if k > burn_steps && (k - burn_steps).is_multiple_of(thin) {
                    kept.extend_from_slice(y);
                }
            })?;
            Ok(kept)
        })
        .collect();
    let mut data = Vec::with_capacity(per_chain * chains * n);
    let mut excluded = 0;
    for run in runs {
        let kept = run?;
        excluded += per_chain - kept.len() / n;
        data.extend_from_slice(&kept);
    }
    let total = per_chain * chains;
    if excluded * 1000 > total {
        return Err(Error::Divergence { excluded, total });
    }
    Ok(EmpiricalMeasure {
        cloud: Cloud::new(n, data)?,
        thinning: thin,
        burn_in: burn_steps as f64 * h,
        frozen_x: x.to_vec(),
        epsilon,
        alpha: spec.alpha(),
        h,
        excluded,
    })
}

fn check_measure(measure: &EmpiricalMeasure, x: &[f64], epsilon: f64) -> Result<()> {
    if measure.frozen_x != x || measure.epsilon != epsilon {
        return Err(Error::Domain(format!(
            "measure was sampled at x = {:?}, eps = {}, not x = {x:?}, eps = {epsilon}",
            measure.frozen_x, measure.epsilon
        )));
    }
    Ok(())
}

/// Averages of `F(x, ·, ε) = f(x + ε^{1/α} ·)` and `G(x, ·, ε) = g(x - ε^{1/α} ·)`
/// over the measure, one estimate per component.
pub fn averaged_drift_mc(
    spec: &CoupledSpec,
    x: &[f64],
    epsilon: f64,
    measure: &EmpiricalMeasure,
) -> Result<(Vec<MomEstimate>, Vec<MomEstimate>)> {
    check_measure(measure, x, epsilon)?;
    let n = x.len();
    let s = fast_scale(epsilon, spec.alpha());
    let m = measure.len();
    let mut fv = vec![0.0; m * n];
    let mut gv = vec![0.0; m * n];
    let mut arg = vec![0.0; n];
    for (k, y) in measure.cloud.points().enumerate() {
        for i in 0..n {
            arg[i] = x[i] + s * y[i];
        }
        spec.f().eval(&arg, 0.0, &mut fv[k * n..(k + 1) * n]);
        for i in 0..n {
            arg[i] = x[i] - s * y[i];
        }
        spec.g().eval(&arg, 0.0, &mut gv[k * n..(k + 1) * n]);
    }
    let per_component = |vals: &[f64]| -> Result<Vec<MomEstimate>> {
        (0..n)
            .map(|i| {
                let c: Vec<f64> = vals.iter().skip(i).step_by(n).copied().collect();
                median_of_means(&c)
            })
            .collect()
    };
    Ok((per_component(&fv)?, per_component(&gv)?))
}

/// `(∫ |y|^p μ(dy))^{1/p}` by median-of-means.
pub fn stationary_lp_moment(measure: &EmpiricalMeasure, p: f64) -> Result<MomEstimate> {
    check_moment_order(p, measure.alpha)?;
    let norms: Vec<f64> = measure
        .cloud
        .points()
        .map(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    lp_norm_mom(&norms, p)
}

/// Fitted exponential contraction of two fast paths under shared noise.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingEstimate {
    /// Decay rate in 1/time; `+∞` when the two starts coincide.
    pub rate: f64,
    pub prefactor: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub fit_residual: f64,
    /// `(t, (E|Y_t(y1) - Y_t(y2)|^p)^{1/p})` on the mesh used for the fit.
    pub curve: Vec<(f64, MomEstimate)>,
}

const MIXING_MESH: usize = 64;

/// Relative level below which curve points are left out of the fit, so the
/// fit never sees round-off.
const FIT_FLOOR: f64 = 1e-10;

/// Integrates the frozen fast equation from `y1` and `y2` on the same noise
/// for `n_paths` noise realisations, estimates the `L^p` distance on a mesh of
/// at most 64 grid times and fits `log distance = log prefactor - rate · t`.
///
/// Fails with [`Error::Fit`] when the curve increases beyond its bands.
#[allow(clippy::too_many_arguments)]
pub fn mixing_rate(
    spec: &CoupledSpec,
    x: &[f64],
    epsilon: f64,
    y1: &[f64],
    y2: &[f64],
    p: f64,
    n_paths: usize,
    grid: &PathGrid,
    master_seed: u64,
) -> Result<MixingEstimate> {
    check_moment_order(p, spec.alpha())?;
    let n = spec.dim();
    for y in [y1, y2] {
        if y.len() != n {
            return Err(Error::Dimension { expected: n, got: y.len() });
        }
    }
    if n_paths == 0 {
        return Err(Error::EmptySample);
    }
    let mesh: Vec<usize> = {
        let steps = grid.n_steps();
        let count = steps.min(MIXING_MESH);
        let mut m: Vec<usize> = (0..=count).map(|j| j * steps / count).collect();
        m.dedup();
        m
    };
    if y1 == y2 {
        let curve = mesh.iter().map(|&k| (grid.time(k), MomEstimate::exact(0.0, n_paths))).collect();
        return Ok(MixingEstimate {
            rate: f64::INFINITY,
            prefactor: 0.0,
            fit_residual: 0.0,
            curve,
        });
    }
    let system = FrozenFastSystem::new(spec.clone(), x.to_vec(), epsilon)?;
    let pair = StackedDrift::new(vec![&system as &dyn DriftField, &system]);
    let sigma = [system.sigma(), system.sigma()].concat();
    let start = [y1, y2].concat();

    let gaps: Vec<Option<Vec<f64>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut noise = NoiseStream::new(*spec.law(), grid, StreamKey::new(master_seed, i, Purpose::Noise));
            let mut out = Vec::with_capacity(mesh.len());
            let mut next = 0;
            let outcome = integrate(&pair, &sigma, &start, grid, &mut noise, Scheme::EulerMaruyama, |k, z| {
                if next < mesh.len() && mesh[next] == k {
                    let d: f64 = (0..n).map(|j| (z[j] - z[n + j]).powi(2)).sum::<f64>().sqrt();
                    out.push(d);
                    next += 1;
                }
            });
            match outcome {
                Ok(Outcome::Completed) => Some(out),
                _ => None,
            }
        })
        .collect();
    let kept: Vec<&Vec<f64>> = gaps.iter().flatten().collect();
    let excluded = n_paths - kept.len();
    if excluded * 1000 > n_paths {
        return Err(Error::Divergence { excluded, total: n_paths });
    }
    let mut curve = Vec::with_capacity(mesh.len());
    for (j, &k) in mesh.iter().enumerate() {
        let col: Vec<f64> = kept.iter().map(|g| g[j]).collect();
        curve.push((grid.time(k), lp_norm_mom(&col, p)?));
    }
    for w in curve.windows(2) {
        if w[1].1.lo > w[0].1.hi {
            return Err(Error::Fit(format!(
                "contraction curve increases between t = {} and t = {}",
                w[0].0, w[1].0
            )));
        }
    }
    let floor = FIT_FLOOR * curve[0].1.value;
    let (ts, logs): (Vec<f64>, Vec<f64>) = curve
        .iter()
        .filter(|(_, e)| e.value > floor)
        .map(|(t, e)| (*t, e.value.ln()))
        .unzip();
    let fit = linear_fit(&ts, &logs)?;
    Ok(MixingEstimate {
        rate: -fit.slope,
        prefactor: fit.intercept.exp(),
        fit_residual: fit.residual,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable_noise::{empirical_char_function, StableLaw};
    use crate::synchro::{averaged_drift_exact, DriftKind};
    use crate::stats::sample_variance;

    fn spec(f: DriftKind, g: DriftKind, s1: f64, s2: f64, alpha: f64) -> CoupledSpec {
        CoupledSpec::from_kinds(f, g, s1, s2, 10.0, StableLaw::new(alpha, 1, 1.0).unwrap()).unwrap()
    }

    fn constant(c: f64) -> DriftKind {
        DriftKind::Constant { value: c }
    }

    fn key() -> StreamKey {
        StreamKey::new(3, 0, Purpose::Measure)
    }

    #[test]
    fn point_mass_without_fast_noise() {
        let s = spec(constant(0.3), constant(0.3), 0.7, 0.7, 1.5);
        let m = estimate_invariant_measure(&s, &[1.0], 0.1, 1000, key()).unwrap();
        assert!(m.len() >= 1000);
        assert!(m.cloud().as_flat().iter().all(|&v| v == 0.0));
        assert_eq!(stationary_lp_moment(&m, 1.2).unwrap().value, 0.0);
        assert!((m.burn_in() - 0.5).abs() < 1e-12);
        assert_eq!(m.thinning(), 50);
    }

    #[test]
    fn settings_are_checked() {
        let s = spec(constant(0.0), constant(0.0), 1.0, 0.5, 1.5);
        assert!(estimate_invariant_measure(&s, &[0.0], 0.1, 999, key()).is_err());
        let short = MeasureSettings {
            burn_in_relaxations: 5.0,
            ..Default::default()
        };
        assert!(estimate_invariant_measure_with(&s, &[0.0], 0.1, 1000, key(), &short).is_err());
        let coarse = MeasureSettings {
            step_fraction: 0.05,
            ..Default::default()
        };
        assert!(estimate_invariant_measure_with(&s, &[0.0], 0.1, 1000, key(), &coarse).is_err());
        assert!(estimate_invariant_measure(&s, &[0.0], -0.1, 1000, key()).is_err());
    }

    #[test]
    fn gaussian_stationary_variance() {
        let s = spec(constant(0.0), constant(0.0), 1.0, 0.2, 2.0);
        let m = estimate_invariant_measure(&s, &[0.0], 0.1, 64_000, key()).unwrap();
        let v = sample_variance(m.cloud().as_flat());
        // Euler bias on the variance is a factor 1/(1 - λh/2) ≈ 1.01.
        assert!((v - 0.08 * 1.0101).abs() < 0.004, "variance {v}");
        let p = 1.5;
        let exact = (0.08f64.powf(p / 2.0) * 2f64.powf(p / 2.0) * statrs::function::gamma::gamma((p + 1.0) / 2.0)
            / std::f64::consts::PI.sqrt())
        .powf(1.0 / p);
        let est = stationary_lp_moment(&m, p).unwrap();
        assert!((est.value / exact - 1.0).abs() < 0.03, "{} vs {exact}", est.value);
    }

    #[test]
    fn stable_stationary_char_function() {
        let (alpha, eps) = (1.5, 0.1);
        let s = spec(constant(0.4), constant(0.4), 1.0, 0.5, alpha);
        let m = estimate_invariant_measure(&s, &[0.2], eps, 32_000, key()).unwrap();
        let exponent = 0.5f64.powf(alpha) / (2f64.powf(alpha + 1.0) * alpha);
        for u in [1.0, 3.0] {
            let phi = empirical_char_function(m.cloud(), &[u]).unwrap();
            let exact = (-exponent * u.powf(alpha)).exp();
            assert!((phi.re - exact).abs() < 0.03, "u = {u}: {} vs {exact}", phi.re);
        }
    }

    #[test]
    fn averaged_drift_cases() {
        let s = spec(constant(1.7), constant(-0.2), 1.0, 0.3, 1.5);
        let m = estimate_invariant_measure(&s, &[0.5], 0.1, 4000, key()).unwrap();
        let (fb, gb) = averaged_drift_mc(&s, &[0.5], 0.1, &m).unwrap();
        assert_eq!(fb[0].value, 1.7);
        assert_eq!(gb[0].value, -0.2);
        assert!(averaged_drift_mc(&s, &[0.6], 0.1, &m).is_err());

        let lin = spec(DriftKind::Linear { rate: 1.0 }, DriftKind::Linear { rate: 1.0 }, 1.0, 0.3, 1.5);
        let m = estimate_invariant_measure(&lin, &[0.5], 0.1, 16_000, key()).unwrap();
        let (fb, _) = averaged_drift_mc(&lin, &[0.5], 0.1, &m).unwrap();
        assert!(fb[0].lo <= -0.5 && -0.5 <= fb[0].hi, "{:?}", fb[0]);
    }

    #[test]
    fn averaged_drift_approaches_exact() {
        let tanh = DriftKind::Tanh { gain: 1.0, center: 0.0 };
        let s = spec(tanh, tanh, 1.0, 0.3, 1.5);
        let x = [0.4];
        let exact = averaged_drift_exact(&s, &x).unwrap()[0];
        let mut prev = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let m = estimate_invariant_measure(&s, &x, eps, 8000, key()).unwrap();
            let (fb, gb) = averaged_drift_mc(&s, &x, eps, &m).unwrap();
            let gap = (0.5 * (fb[0].value + gb[0].value) - exact).abs();
            let moment = stationary_lp_moment(&m, 1.2).unwrap().hi;
            let envelope = fast_scale(eps, 1.5) * moment + fb[0].half_width() + gb[0].half_width();
            assert!(gap <= envelope, "eps {eps}: gap {gap} above {envelope}");
            assert!(gap <= prev + fb[0].half_width());
            prev = gap;
        }
    }

    #[test]
    fn moment_rejects_order_at_alpha() {
        let s = spec(constant(0.0), constant(0.0), 1.0, 0.5, 1.5);
        let m = estimate_invariant_measure(&s, &[0.0], 0.1, 1000, key()).unwrap();
        assert!(matches!(stationary_lp_moment(&m, 1.5), Err(Error::MomentOrder { .. })));
        assert!(matches!(stationary_lp_moment(&m, 1.0), Err(Error::MomentOrder { .. })));
    }

    #[test]
    fn mixing_for_constant_drift_is_deterministic() {
        let s = spec(constant(0.3), constant(0.3), 1.0, 0.4, 1.5);
        for eps in [0.1, 0.05, 0.02] {
            let grid = PathGrid::new(0.0, 2.0 * eps, 2000).unwrap();
            let est = mixing_rate(&s, &[0.0], eps, &[1.0], &[-1.0], 1.2, 64, &grid, 1).unwrap();
            assert!((est.rate * eps / 2.0 - 1.0).abs() < 0.01, "eps {eps}: rate {}", est.rate);
            assert!((est.prefactor - 2.0).abs() < 0.01);
        }
        let grid = PathGrid::new(0.0, 0.1, 100).unwrap();
        let same = mixing_rate(&s, &[0.0], 0.1, &[1.0], &[1.0], 1.2, 16, &grid, 1).unwrap();
        assert_eq!(same.rate, f64::INFINITY);
        assert!(mixing_rate(&s, &[0.0], 0.1, &[1.0], &[0.0], 1.5, 16, &grid, 1).is_err());
    }

    #[test]
    fn mixing_rate_scales_inversely_with_epsilon() {
        let tanh = DriftKind::Tanh { gain: 1.0, center: 0.0 };
        let s = spec(tanh, tanh, 1.0, 0.4, 1.5);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for eps in [0.1, 0.05, 0.02] {
            let grid = PathGrid::new(0.0, 2.0 * eps, 400).unwrap();
            let est = mixing_rate(&s, &[0.0], eps, &[1.0], &[-1.0], 1.2, 200, &grid, 2).unwrap();
            xs.push(f64::ln(eps));
            ys.push(est.rate.ln());
        }
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.15, "slope {}", fit.slope);
    }
}
