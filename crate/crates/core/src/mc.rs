//! Monte Carlo experiments: averaging convergence, persistence of
//! synchronization, moment bounds, attractor diameters, mixing and Hölder
//! diagnostics.
//!
//! Every experiment is a pure function of its spec, its [`MCConfig`] and the
//! master seed. Path `i` always draws its noise from
//! `StreamKey::noise(master_seed, i)`, and results are reduced in path order,
//! so reruns are bit-identical regardless of the number of worker threads.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{estimate_invariant_measure, mixing_rate, stationary_lp_moment};
use crate::error::{check_moment_order, Error, Result};
use crate::rng::{Purpose, StreamKey};
use crate::sde::{
    holder_increment_estimate, integrate, simulate_paths, DriftField, IncrementSource, NoiseStream, Outcome,
    PathGrid, SamplePath, Scheme, StackedDrift,
};
use crate::stable_noise::{standard_symmetric, StableLaw};
use crate::stats::{ks_two_sample, lp_norm_mom, median_of_means, sample_variance, Cloud, KsResult, MomEstimate};
use crate::synchro::{
    split_drift_into, Separation, AveragedSystem, CoupledSpec, CoupledSystem, FrozenSlowSystem, KnotSchedule,
    SlowFastSystem,
};

/// How the knot spacing `δ` of the auxiliary processes is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaRule {
    /// `δ = ε (-ln ε)^{1/2}`.
    Schedule,
    Fixed(f64),
}

/// Monte Carlo settings shared by all experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MCConfig {
    /// Moment order, `1 < p < α`.
    pub p: f64,
    pub n_paths: usize,
    /// Time horizon `T`.
    pub horizon: f64,
    pub master_seed: u64,
    /// Strictly decreasing, in `(0, 1)`.
    pub epsilon_list: Vec<f64>,
    /// Strictly increasing, positive.
    pub nu_list: Vec<f64>,
    pub delta_rule: DeltaRule,
    /// Step `h = h_factor · min(1, ε)`.
    pub h_factor: f64,
    /// Number of mesh intervals on which time-dependent estimators are read.
    pub mesh_points: usize,
    /// Initial slow (or first) state; a single value is broadcast.
    pub x0: Vec<f64>,
    /// Initial fast (or second) state; a single value is broadcast.
    pub y0: Vec<f64>,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            p: 1.2,
            n_paths: 10_000,
            horizon: 5.0,
            master_seed: 0,
            epsilon_list: vec![0.1, 0.05, 0.02, 0.01],
            nu_list: vec![1.0, 4.0, 16.0, 64.0],
            delta_rule: DeltaRule::Schedule,
            h_factor: 1e-3,
            mesh_points: 20,
            x0: vec![1.0],
            y0: vec![0.0],
        }
    }
}

fn strictly_monotone(values: &[f64], increasing: bool) -> bool {
    values
        .windows(2)
        .all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

impl MCConfig {
    pub fn validate(&self, alpha: f64) -> Result<()> {
        check_moment_order(self.p, alpha)?;
        if self.n_paths < 1000 {
            return Err(Error::Domain(format!("n_paths = {} must be at least 1000", self.n_paths)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon {} must be positive", self.horizon)));
        }
        if self.epsilon_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Domain("every epsilon must lie in (0, 1)".into()));
        }
        if !strictly_monotone(&self.epsilon_list, false) {
            return Err(Error::Domain("epsilon_list must be strictly decreasing".into()));
        }
        if self.nu_list.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("every nu must be positive".into()));
        }
        if !strictly_monotone(&self.nu_list, true) {
            return Err(Error::Domain("nu_list must be strictly increasing".into()));
        }
        if let DeltaRule::Fixed(d) = self.delta_rule {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Domain(format!("fixed delta {d} must be positive")));
            }
        }
        if !(self.h_factor > 0.0 && self.h_factor <= 0.1) {
            return Err(Error::Domain(format!("h_factor {} must lie in (0, 0.1]", self.h_factor)));
        }
        if self.mesh_points < 2 {
            return Err(Error::Domain("mesh_points must be at least 2".into()));
        }
        if self.x0.is_empty() || self.y0.is_empty() {
            return Err(Error::Domain("initial states must not be empty".into()));
        }
        Ok(())
    }

    /// Step for time scale `scale`: `h_factor · min(1, scale)`.
    pub fn step(&self, scale: f64) -> f64 {
        self.h_factor * scale.min(1.0)
    }

    /// Initial states broadcast to dimension `dim`.
    pub fn initial_states(&self, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let widen = |v: &[f64]| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; dim]),
                d if d == dim => Ok(v.to_vec()),
                d => Err(Error::Dimension { expected: dim, got: d }),
            }
        };
        Ok((widen(&self.x0)?, widen(&self.y0)?))
    }

    /// Grid indices `0, N/m, 2N/m, ..., N` for `m = mesh_points`.
    pub fn mesh(&self, grid: &PathGrid) -> Vec<usize> {
        let n = grid.n_steps();
        let m = self.mesh_points.min(n);
        let mut idx: Vec<usize> = (0..=m).map(|j| j * n / m).collect();
        idx.dedup();
        idx
    }

    fn delta(&self, epsilon: f64) -> Result<f64> {
        match self.delta_rule {
            DeltaRule::Schedule => delta_schedule(epsilon),
            DeltaRule::Fixed(d) => Ok(d),
        }
    }
}

/// `δ = ε (-ln ε)^{1/2}`, defined for `0 < ε < 1`.
pub fn delta_schedule(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("delta schedule needs 0 < eps < 1, got {epsilon}")));
    }
    Ok(epsilon * (-epsilon.ln()).sqrt())
}

/// True when `δ/ε = (-ln ε)^{1/2}` falls below 0.1, so knots are far closer
/// together than one fast time scale.
pub fn delta_schedule_degenerate(epsilon: f64) -> bool {
    epsilon > 0.0 && epsilon < 1.0 && (-epsilon.ln()).sqrt() < 0.1
}

/// Seed manifest of a path family: path `i` used
/// `StreamKey::noise(master_seed, first_index + i)` on `grid`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedManifest {
    pub master_seed: u64,
    pub first_index: u64,
    pub count: usize,
    pub grid: PathGridRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathGridRecord {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl From<&PathGrid> for PathGridRecord {
    fn from(g: &PathGrid) -> Self {
        Self {
            t0: g.t0(),
            t_end: g.t_end(),
            n_steps: g.n_steps(),
        }
    }
}

/// Paths generated from one seed manifest.
#[derive(Clone, Debug)]
pub struct PathFamily {
    pub manifest: SeedManifest,
    pub paths: Vec<SamplePath>,
}

impl PathFamily {
    pub fn simulate<D: DriftField + ?Sized>(
        drift: &D,
        sigma: &[f64],
        x0: &[f64],
        law: &StableLaw,
        grid: &PathGrid,
        master_seed: u64,
        count: usize,
    ) -> Result<Self> {
        Ok(Self {
            manifest: SeedManifest {
                master_seed,
                first_index: 0,
                count,
                grid: grid.into(),
            },
            paths: simulate_paths(drift, sigma, x0, law, grid, master_seed, count)?,
        })
    }

    /// Same family restricted to the coordinates in `range`.
    pub fn project(&self, range: Range<usize>) -> Result<Self> {
        Ok(Self {
            manifest: self.manifest.clone(),
            paths: self.paths.iter().map(|q| q.project(range.clone())).collect::<Result<_>>()?,
        })
    }
}

/// `(E|A_t - B_t|^p)^{1/p}` over pairs of paths that share their noise.
///
/// Pairs where either path diverged before `t` are skipped.
pub fn lp_error_at_time(a: &PathFamily, b: &PathFamily, p: f64, alpha: f64, t: f64) -> Result<MomEstimate> {
    check_moment_order(p, alpha)?;
    if a.manifest != b.manifest {
        return Err(Error::UnmatchedSeeds(format!("{:?} vs {:?}", a.manifest, b.manifest)));
    }
    let first = a.paths.first().ok_or(Error::EmptySample)?;
    let k = first.grid().index_of(t)?;
    let mut dist = Vec::with_capacity(a.paths.len());
    for (u, v) in a.paths.iter().zip(&b.paths) {
        if u.dim() != v.dim() {
            return Err(Error::Dimension {
                expected: u.dim(),
                got: v.dim(),
            });
        }
        let d = u
            .value(k)
            .iter()
            .zip(v.value(k))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        if d.is_finite() {
            dist.push(d);
        }
    }
    lp_norm_mom(&dist, p)
}

/// One estimate at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub sweep_value: f64,
    pub estimator: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_effective: usize,
    pub excluded: usize,
}

impl ReportRow {
    pub fn new(sweep_value: f64, estimator: &str, est: MomEstimate, excluded: usize) -> Self {
        Self {
            sweep_value,
            estimator: estimator.to_string(),
            value: est.value,
            lo: est.lo,
            hi: est.hi,
            n_effective: est.n,
            excluded,
        }
    }

    /// At most 0.1% of the paths were excluded.
    pub fn valid(&self) -> bool {
        self.excluded * 1000 <= self.n_effective + self.excluded
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Grid used at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRecord {
    pub sweep_value: f64,
    pub h: f64,
    pub n_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Everything needed to rerun an experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub master_seed: u64,
    pub spec: String,
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub nu: f64,
    pub mc: MCConfig,
    pub grids: Vec<GridRecord>,
    pub version: String,
    /// Free-form entries added by callers, such as the full run configuration.
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    fn new(experiment: &str, spec: &CoupledSpec, mc: &MCConfig) -> Self {
        Self {
            experiment: experiment.to_string(),
            master_seed: mc.master_seed,
            spec: spec.label().to_string(),
            alpha: spec.alpha(),
            sigma1: spec.sigma1(),
            sigma2: spec.sigma2(),
            nu: spec.nu(),
            mc: mc.clone(),
            grids: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub manifest: Manifest,
    pub checks: Vec<CheckOutcome>,
    pub warnings: Vec<String>,
}

pub const CSV_HEADER: &str = "sweep_value,estimator,value,lo,hi,n_effective,excluded";

impl ExperimentReport {
    fn new(manifest: Manifest) -> Self {
        Self {
            rows: Vec::new(),
            manifest,
            checks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn rows_for<'a>(&'a self, estimator: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.estimator == estimator)
    }

    pub fn estimators(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.estimator.as_str()) {
                names.push(&r.estimator);
            }
        }
        names
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// All checks passed and no row exceeded the exclusion limit.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.rows.iter().all(ReportRow::valid)
    }

    /// Adds a check that fails when a row's lower band exceeds the previous
    /// row's upper band, walking the rows of `estimator` in sweep order.
    pub fn check_non_increasing(&mut self, estimator: &str) {
        let rows: Vec<&ReportRow> = self.rows_for(estimator).collect();
        let bad = rows.windows(2).find(|w| w[1].lo > w[0].hi);
        let outcome = CheckOutcome {
            name: format!("non_increasing:{estimator}"),
            passed: bad.is_none() && !rows.is_empty(),
            detail: match bad {
                Some(w) => format!(
                    "increase from {} (hi {}) at {} to {} (lo {}) at {}",
                    w[0].value, w[0].hi, w[0].sweep_value, w[1].value, w[1].lo, w[1].sweep_value
                ),
                None => format!("{} points", rows.len()),
            },
        };
        self.checks.push(outcome);
    }

    fn check_exclusions(&mut self) {
        let bad: Vec<String> = self
            .rows
            .iter()
            .filter(|r| !r.valid())
            .map(|r| format!("{}@{}: {} excluded", r.estimator, r.sweep_value, r.excluded))
            .collect();
        self.checks.push(CheckOutcome {
            name: "excluded_paths".into(),
            passed: bad.is_empty(),
            detail: if bad.is_empty() {
                "all rows within 0.1%".into()
            } else {
                bad.join("; ")
            },
        });
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.sweep_value, r.estimator, r.value, r.lo, r.hi, r.n_effective, r.excluded
            )?;
        }
        Ok(())
    }

    /// JSON lines: the manifest, then one line per check and per warning.
    pub fn write_manifest<W: Write>(&self, mut w: W) -> Result<()> {
        let line = |v: serde_json::Value| serde_json::to_string(&v).map_err(|e| Error::Io(e.to_string()));
        let mut head = serde_json::to_value(&self.manifest).map_err(|e| Error::Io(e.to_string()))?;
        head["kind"] = "manifest".into();
        writeln!(w, "{}", line(head)?)?;
        for c in &self.checks {
            let mut v = serde_json::to_value(c).map_err(|e| Error::Io(e.to_string()))?;
            v["kind"] = "check".into();
            writeln!(w, "{}", line(v)?)?;
        }
        for warning in &self.warnings {
            writeln!(w, "{}", line(serde_json::json!({"kind": "warning", "message": warning}))?)?;
        }
        Ok(())
    }
}

/// Runs `body(i)` for every path index in parallel, keeping results in index
/// order. `None` marks a diverged path.
fn run_paths<T, F>(n: usize, body: F) -> (Vec<T>, usize)
where
    T: Send,
    F: Fn(u64) -> Option<T> + Sync + Send,
{
    let all: Vec<Option<T>> = (0..n as u64).into_par_iter().map(body).collect();
    let kept: Vec<T> = all.into_iter().flatten().collect();
    let excluded = n - kept.len();
    (kept, excluded)
}

fn column(samples: &[Vec<f64>], j: usize) -> Vec<f64> {
    samples.iter().map(|s| s[j]).collect()
}

/// L^p estimates at each mesh point of per-path distance samples.
fn mesh_norms(samples: &[Vec<f64>], width: usize, p: f64) -> Result<Vec<MomEstimate>> {
    (0..width).map(|j| lp_norm_mom(&column(samples, j), p)).collect()
}

/// Supremum over the mesh: the largest estimate, banded by the largest lower
/// and upper bands.
fn sup_estimate(points: &[MomEstimate]) -> Result<MomEstimate> {
    let first = points.first().ok_or(Error::EmptySample)?;
    Ok(points.iter().skip(1).fold(*first, |acc, e| MomEstimate {
        value: acc.value.max(e.value),
        lo: acc.lo.max(e.lo),
        hi: acc.hi.max(e.hi),
        n: acc.n,
    }))
}

/// Trapezoidal time integral of banded estimates.
fn integral_estimate(times: &[f64], points: &[MomEstimate]) -> MomEstimate {
    let mut out = MomEstimate::exact(0.0, points.first().map_or(0, |e| e.n));
    for (t, e) in times.windows(2).zip(points.windows(2)) {
        let dt = t[1] - t[0];
        out.value += 0.5 * dt * (e[0].value + e[1].value);
        out.lo += 0.5 * dt * (e[0].lo + e[1].lo);
        out.hi += 0.5 * dt * (e[0].hi + e[1].hi);
    }
    out
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Slow-fast pair, auxiliary pair and averaged path stepped together on one
/// noise stream. Calls `observe(k, slow_fast, auxiliary, averaged)` at every
/// grid index.
#[allow(clippy::too_many_arguments)]
fn step_averaging<S, O>(
    spec: &CoupledSpec,
    x0: &[f64],
    y0: &[f64],
    epsilon: f64,
    schedule: &KnotSchedule,
    grid: &PathGrid,
    noise: &mut S,
    mut observe: O,
) -> bool
where
    S: IncrementSource + ?Sized,
    O: FnMut(usize, &[f64], &[f64], &[f64]),
{
    let n = x0.len();
    let h = grid.h();
    let (sig_slow, sig_fast) = (spec.slow_sigma(), spec.fast_sigma(epsilon));
    let sep = Separation::new(epsilon, spec.alpha());
    let mut z = [x0, y0].concat();
    let mut w = z.clone();
    let mut a = x0.to_vec();
    let mut knot = x0.to_vec();
    let mut dz = vec![0.0; 2 * n];
    let mut dw = vec![0.0; 2 * n];
    let mut fa = vec![0.0; n];
    let mut ga = vec![0.0; n];
    let mut scratch = vec![0.0; 2 * n];
    let mut dl = vec![0.0; n];
    observe(0, &z, &w, &a);
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        if k % schedule.steps_per_knot() == 0 {
            knot.copy_from_slice(&z[..n]);
        }
        {
            let (slow, fast) = dz.split_at_mut(n);
            split_drift_into(spec, &z[..n], &z[n..], sep, t, &mut scratch, slow, fast);
            let (slow, fast) = dw.split_at_mut(n);
            split_drift_into(spec, &knot, &w[n..], sep, t, &mut scratch, slow, fast);
        }
        spec.f().eval(&a, t, &mut fa);
        spec.g().eval(&a, t, &mut ga);
        noise.next_into(&mut dl);
        for i in 0..n {
            z[i] += dz[i] * h + sig_slow * dl[i];
            z[n + i] += dz[n + i] * h + sig_fast * dl[i];
            w[i] += dw[i] * h + sig_slow * dl[i];
            w[n + i] += dw[n + i] * h + sig_fast * dl[i];
            a[i] += 0.5 * (fa[i] + ga[i]) * h + sig_slow * dl[i];
        }
        if !(z.iter().chain(&w).chain(&a).all(|v| v.is_finite())) {
            return false;
        }
        observe(k + 1, &z, &w, &a);
    }
    true
}

/// For each `ε`, integrates the slow-fast system, its auxiliary processes and
/// the averaged equation on the same noise from `(x0, y0)` in slow-fast
/// coordinates, and reports over the time mesh:
///
/// * `slow_vs_averaged`: sup of `(E|X^ε_t - X̄_t|^p)^{1/p}`,
/// * `slow_vs_auxiliary`: sup of `(E|X^ε_t - X̃^ε_t|^p)^{1/p}`,
/// * `fast_vs_auxiliary_integral`: `∫ (E|Y^ε_t - Ỹ^ε_t|^p)^{1/p} dt`.
///
/// Checks that `slow_vs_averaged` is non-increasing along the sweep.
pub fn averaging_convergence(spec: &CoupledSpec, mc: &MCConfig) -> Result<ExperimentReport> {
    mc.validate(spec.alpha())?;
    let n = spec.dim();
    let (x0, y0) = mc.initial_states(n)?;
    let mut report = ExperimentReport::new(Manifest::new("averaging", spec, mc));
    for &eps in &mc.epsilon_list {
        let s = spec.with_epsilon(eps)?;
        let h = mc.step(eps);
        let grid = PathGrid::with_step(mc.horizon, h)?;
        let delta = mc.delta(eps)?;
        if delta_schedule_degenerate(eps) {
            report.warnings.push(format!("delta schedule degenerate at eps = {eps}"));
        }
        let schedule = KnotSchedule::nearest(delta, h)?;
        report.manifest.grids.push(GridRecord {
            sweep_value: eps,
            h,
            n_steps: grid.n_steps(),
            delta: Some(schedule.delta()),
        });
        let mesh = mc.mesh(&grid);
        let times: Vec<f64> = mesh.iter().map(|&k| grid.time(k)).collect();
        let (samples, excluded) = run_paths(mc.n_paths, |i| {
            let mut noise = NoiseStream::new(*s.law(), &grid, StreamKey::noise(mc.master_seed, i));
            let mut out = (0..3).map(|_| Vec::with_capacity(mesh.len())).collect::<Vec<_>>();
            let mut next = 0;
            let ok = step_averaging(&s, &x0, &y0, eps, &schedule, &grid, &mut noise, |k, z, w, a| {
                if next < mesh.len() && mesh[next] == k {
                    out[0].push(norm_diff(&z[..n], a));
                    out[1].push(norm_diff(&z[..n], &w[..n]));
                    out[2].push(norm_diff(&z[n..], &w[n..]));
                    next += 1;
                }
            });
            ok.then_some(out)
        });
        if samples.is_empty() {
            return Err(Error::Divergence {
                excluded,
                total: mc.n_paths,
            });
        }
        let pick = |c: usize| -> Vec<Vec<f64>> { samples.iter().map(|s| s[c].clone()).collect() };
        let avg = mesh_norms(&pick(0), mesh.len(), mc.p)?;
        let aux = mesh_norms(&pick(1), mesh.len(), mc.p)?;
        let fast = mesh_norms(&pick(2), mesh.len(), mc.p)?;
        report
            .rows
            .push(ReportRow::new(eps, "slow_vs_averaged", sup_estimate(&avg)?, excluded));
        report
            .rows
            .push(ReportRow::new(eps, "slow_vs_auxiliary", sup_estimate(&aux)?, excluded));
        report.rows.push(ReportRow::new(
            eps,
            "fast_vs_auxiliary_integral",
            integral_estimate(&times, &fast),
            excluded,
        ));
    }
    report.check_non_increasing("slow_vs_averaged");
    report.check_exclusions();
    Ok(report)
}

/// For each `ν`, integrates the coupled pair from `(x0, y0)` and the averaged
/// equation from `(x0 + y0)/2` on the same noise, and reports
///
/// * `sync_gap`: `(E[|X_t - X̂_t|^p + |Y_t - X̂_t|^p])^{1/p}` averaged over the
///   mesh times in `[T/2, T]`,
/// * `xy_gap_final`: `(E|X_T - Y_T|^p)^{1/p}`.
///
/// Checks that `sync_gap` is non-increasing in `ν`.
pub fn synchronization_persistence(spec: &CoupledSpec, mc: &MCConfig) -> Result<ExperimentReport> {
    mc.validate(spec.alpha())?;
    let n = spec.dim();
    let (x0, y0) = mc.initial_states(n)?;
    let mut report = ExperimentReport::new(Manifest::new("persistence", spec, mc));
    let start: Vec<f64> = [x0.clone(), y0.clone(), x0.iter().zip(&y0).map(|(a, b)| 0.5 * (a + b)).collect()].concat();
    for &nu in &mc.nu_list {
        let s = spec.with_nu(nu)?;
        let h = mc.step(1.0 / nu);
        let grid = PathGrid::with_step(mc.horizon, h)?;
        report.manifest.grids.push(GridRecord {
            sweep_value: nu,
            h,
            n_steps: grid.n_steps(),
            delta: None,
        });
        let coupled = CoupledSystem::new(s.clone());
        let averaged = AveragedSystem::new(s.clone());
        let joint = StackedDrift::new(vec![&coupled as &dyn DriftField, &averaged]);
        let sigma = [coupled.sigma(), averaged.sigma()].concat();
        let late: Vec<usize> = mc
            .mesh(&grid)
            .into_iter()
            .filter(|&k| grid.time(k) >= 0.5 * mc.horizon - 1e-12)
            .collect();
        let p = mc.p;
        let (samples, excluded) = run_paths(mc.n_paths, |i| {
            let mut noise = NoiseStream::new(*s.law(), &grid, StreamKey::noise(mc.master_seed, i));
            let mut gap = 0.0;
            let mut xy = 0.0;
            let mut next = 0;
            let outcome = integrate(&joint, &sigma, &start, &grid, &mut noise, Scheme::EulerMaruyama, |k, z| {
                if next < late.len() && late[next] == k {
                    let (x, rest) = z.split_at(n);
                    let (y, a) = rest.split_at(n);
                    gap += norm_diff(x, a).powf(p) + norm_diff(y, a).powf(p);
                    xy = norm_diff(x, y);
                    next += 1;
                }
            });
            matches!(outcome, Ok(Outcome::Completed)).then_some(vec![gap / late.len() as f64, xy])
        });
        if samples.is_empty() {
            return Err(Error::Divergence {
                excluded,
                total: mc.n_paths,
            });
        }
        let gap = median_of_means(&column(&samples, 0))?.map_monotone(|v| v.max(0.0).powf(1.0 / p));
        report.rows.push(ReportRow::new(nu, "sync_gap", gap, excluded));
        report
            .rows
            .push(ReportRow::new(nu, "xy_gap_final", lp_norm_mom(&column(&samples, 1), p)?, excluded));
    }
    report.check_non_increasing("sync_gap");
    report.check_exclusions();
    Ok(report)
}

/// `(t, (E|X_t - Y_t|^p)^{1/p})` on the mesh for the coupled pair at
/// coupling `nu`, started from `(x0, y0)`.
pub fn synchronization_gap_curve(spec: &CoupledSpec, mc: &MCConfig, nu: f64) -> Result<Vec<(f64, MomEstimate)>> {
    mc.validate(spec.alpha())?;
    let n = spec.dim();
    let (x0, y0) = mc.initial_states(n)?;
    let s = spec.with_nu(nu)?;
    let grid = PathGrid::with_step(mc.horizon, mc.step(1.0 / nu))?;
    let system = CoupledSystem::new(s.clone());
    let sigma = system.sigma();
    let start = [x0, y0].concat();
    let mesh = mc.mesh(&grid);
    let (samples, excluded) = run_paths(mc.n_paths, |i| {
        let mut noise = NoiseStream::new(*s.law(), &grid, StreamKey::noise(mc.master_seed, i));
        let mut out = Vec::with_capacity(mesh.len());
        let mut next = 0;
        let outcome = integrate(&system, &sigma, &start, &grid, &mut noise, Scheme::EulerMaruyama, |k, z| {
            if next < mesh.len() && mesh[next] == k {
                out.push(norm_diff(&z[..n], &z[n..]));
                next += 1;
            }
        });
        matches!(outcome, Ok(Outcome::Completed)).then_some(out)
    });
    if excluded * 1000 > mc.n_paths {
        return Err(Error::Divergence {
            excluded,
            total: mc.n_paths,
        });
    }
    let norms = mesh_norms(&samples, mesh.len(), mc.p)?;
    Ok(mesh.iter().map(|&k| grid.time(k)).zip(norms).collect())
}

/// For each `ε`, the sup over the mesh of the `L^p` norms of `X^ε_t` and
/// `Y^ε_t` started from `(x0, y0)` in slow-fast coordinates, and the `L^p`
/// norm of the fast invariant measure frozen at `x0`. Checks that each of the
/// three varies by less than a factor 2 across the sweep.
pub fn moment_uniformity(spec: &CoupledSpec, mc: &MCConfig) -> Result<ExperimentReport> {
    mc.validate(spec.alpha())?;
    let n = spec.dim();
    let (x0, y0) = mc.initial_states(n)?;
    let mut report = ExperimentReport::new(Manifest::new("moments", spec, mc));
    let start = [x0.clone(), y0].concat();
    for &eps in &mc.epsilon_list {
        let s = spec.with_epsilon(eps)?;
        let h = mc.step(eps);
        let grid = PathGrid::with_step(mc.horizon, h)?;
        report.manifest.grids.push(GridRecord {
            sweep_value: eps,
            h,
            n_steps: grid.n_steps(),
            delta: None,
        });
        let system = SlowFastSystem::new(s.clone());
        let sigma = system.sigma();
        let mesh = mc.mesh(&grid);
        let (samples, excluded) = run_paths(mc.n_paths, |i| {
            let mut noise = NoiseStream::new(*s.law(), &grid, StreamKey::noise(mc.master_seed, i));
            let mut out = (0..2).map(|_| Vec::with_capacity(mesh.len())).collect::<Vec<_>>();
            let mut next = 0;
            let outcome = integrate(&system, &sigma, &start, &grid, &mut noise, Scheme::EulerMaruyama, |k, z| {
                if next < mesh.len() && mesh[next] == k {
                    out[0].push(norm(&z[..n]));
                    out[1].push(norm(&z[n..]));
                    next += 1;
                }
            });
            matches!(outcome, Ok(Outcome::Completed)).then_some(out)
        });
        if samples.is_empty() {
            return Err(Error::Divergence {
                excluded,
                total: mc.n_paths,
            });
        }
        for (c, name) in [(0, "slow_sup_norm"), (1, "fast_sup_norm")] {
            let part: Vec<Vec<f64>> = samples.iter().map(|s| s[c].clone()).collect();
            let sup = sup_estimate(&mesh_norms(&part, mesh.len(), mc.p)?)?;
            report.rows.push(ReportRow::new(eps, name, sup, excluded));
        }
        let measure = estimate_invariant_measure(
            &s,
            &x0,
            eps,
            mc.n_paths,
            StreamKey::new(mc.master_seed, 0, Purpose::Measure),
        )?;
        report.rows.push(ReportRow::new(
            eps,
            "fast_stationary_norm",
            stationary_lp_moment(&measure, mc.p)?,
            measure.excluded(),
        ));
    }
    for name in ["slow_sup_norm", "fast_sup_norm", "fast_stationary_norm"] {
        let values: Vec<f64> = report.rows_for(name).map(|r| r.value).collect();
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = if hi == lo { 1.0 } else { hi / lo };
        report.checks.push(CheckOutcome {
            name: format!("uniform:{name}"),
            passed: ratio < 2.0,
            detail: format!("max/min = {ratio}"),
        });
    }
    report.check_exclusions();
    Ok(report)
}

/// Largest pairwise distance among `m` stacked states of dimension `n`.
fn diameter(z: &[f64], n: usize) -> f64 {
    let m = z.len() / n;
    let mut best: f64 = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            best = best.max(norm_diff(&z[i * n..(i + 1) * n], &z[j * n..(j + 1) * n]));
        }
    }
    best
}

fn check_initial_set(ics: &[Vec<f64>], n: usize) -> Result<()> {
    if ics.len() < 8 {
        return Err(Error::Domain(format!("need at least 8 initial states, got {}", ics.len())));
    }
    if let Some(bad) = ics.iter().find(|v| v.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            got: bad.len(),
        });
    }
    Ok(())
}

/// Diameter of the set of states evolved from `ics` under the slow equation
/// with the fast variable frozen at `y`, all driven by the noise of `key`.
/// One value per grid index.
pub fn attractor_diameter_path(
    spec: &CoupledSpec,
    ics: &[Vec<f64>],
    y: &[f64],
    grid: &PathGrid,
    key: StreamKey,
) -> Result<Vec<f64>> {
    let n = spec.dim();
    check_initial_set(ics, n)?;
    let system = FrozenSlowSystem::new(spec.clone(), y.to_vec(), spec.epsilon())?;
    let copies: Vec<&dyn DriftField> = ics.iter().map(|_| &system as &dyn DriftField).collect();
    let joint = StackedDrift::new(copies);
    let sigma = system.sigma().repeat(ics.len());
    let start = ics.concat();
    let mut noise = NoiseStream::new(*spec.law(), grid, key);
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    integrate(&joint, &sigma, &start, grid, &mut noise, Scheme::ExponentialEuler, |_, z| {
        out.push(diameter(z, n))
    })?;
    out.resize(grid.n_steps() + 1, f64::NAN);
    Ok(out)
}

/// `L^p` mean over noise realisations of the attractor diameter at each mesh
/// time, for the slow equation with the fast variable frozen at `y0` and
/// step `h_factor`. Rows have the time as sweep value and estimator
/// `diameter`; checks that the curve is non-increasing.
pub fn attractor_diameter(spec: &CoupledSpec, ics: &[Vec<f64>], mc: &MCConfig) -> Result<ExperimentReport> {
    mc.validate(spec.alpha())?;
    let n = spec.dim();
    check_initial_set(ics, n)?;
    let (_, y0) = mc.initial_states(n)?;
    let mut report = ExperimentReport::new(Manifest::new("attractor", spec, mc));
    let grid = PathGrid::with_step(mc.horizon, mc.step(1.0))?;
    report.manifest.grids.push(GridRecord {
        sweep_value: spec.epsilon(),
        h: grid.h(),
        n_steps: grid.n_steps(),
        delta: None,
    });
    let mesh = mc.mesh(&grid);
    let (samples, excluded) = run_paths(mc.n_paths, |i| {
        let d = attractor_diameter_path(spec, ics, &y0, &grid, StreamKey::noise(mc.master_seed, i)).ok()?;
        let out: Vec<f64> = mesh.iter().map(|&k| d[k]).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    });
    if samples.is_empty() {
        return Err(Error::Divergence {
            excluded,
            total: mc.n_paths,
        });
    }
    for (j, &k) in mesh.iter().enumerate() {
        let est = lp_norm_mom(&column(&samples, j), mc.p)?;
        report.rows.push(ReportRow::new(grid.time(k), "diameter", est, excluded));
    }
    report.check_non_increasing("diameter");
    report.check_exclusions();
    Ok(report)
}

/// Which stationary regime a marginal stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StationaryRole {
    SlowStationary,
    AveragedStationary,
    FastStationary,
}

#[derive(Clone, Debug)]
pub struct StationaryEstimate {
    pub role: StationaryRole,
    /// Time at which `cloud` was sampled.
    pub time: f64,
    pub cloud: Cloud,
    /// First-coordinate KS comparison of the marginals at 10 and 20
    /// relaxation times.
    pub ks: KsResult,
}

/// Time-`t` marginal of `n_paths` paths after 20 relaxation times, checked
/// against the marginal after 10 relaxation times with a two-sample KS test
/// at level 1%. The step is `h_factor · min(1, 2 · relaxation_time)`.
#[allow(clippy::too_many_arguments)]
pub fn stationary_marginal<D: DriftField + ?Sized>(
    drift: &D,
    sigma: &[f64],
    x0: &[f64],
    law: &StableLaw,
    relaxation_time: f64,
    role: StationaryRole,
    mc: &MCConfig,
) -> Result<StationaryEstimate> {
    if !(relaxation_time > 0.0 && relaxation_time.is_finite()) {
        return Err(Error::Domain(format!("relaxation time {relaxation_time} must be positive")));
    }
    let h = mc.step(2.0 * relaxation_time);
    let steps_half = (10.0 * relaxation_time / h).ceil() as usize;
    let grid = PathGrid::new(0.0, 2.0 * steps_half as f64 * h, 2 * steps_half)?;
    let d = drift.dim();
    let (samples, excluded) = run_paths(mc.n_paths, |i| {
        let mut noise = NoiseStream::new(*law, &grid, StreamKey::noise(mc.master_seed, i));
        let mut out = Vec::with_capacity(2 * d);
        let outcome = integrate(drift, sigma, x0, &grid, &mut noise, Scheme::EulerMaruyama, |k, z| {
            if k == steps_half || k == 2 * steps_half {
                out.extend_from_slice(z);
            }
        });
        matches!(outcome, Ok(Outcome::Completed)).then_some(out)
    });
    if excluded * 1000 > mc.n_paths {
        return Err(Error::Divergence {
            excluded,
            total: mc.n_paths,
        });
    }
    let early: Vec<f64> = samples.iter().map(|s| s[0]).collect();
    let late: Vec<f64> = samples.iter().map(|s| s[d]).collect();
    let ks = ks_two_sample(&early, &late, 0.01)?;
    if !ks.passed() {
        return Err(Error::NotRelaxed {
            statistic: ks.statistic,
            critical: ks.critical,
        });
    }
    let data: Vec<f64> = samples.iter().flat_map(|s| s[d..].iter().copied()).collect();
    Ok(StationaryEstimate {
        role,
        time: grid.t_end(),
        cloud: Cloud::new(d, data)?,
        ks,
    })
}

/// Frequencies at which [`sampler_check`] compares characteristic functions.
pub const SAMPLER_FREQUENCIES: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

/// Draws `n_samples` unit variates of index `alpha` and compares the
/// empirical characteristic function with `exp(-|u|^α)` within `4/√N` at
/// [`SAMPLER_FREQUENCIES`]. For `α = 2` also checks that the variance is
/// `2 ± 1%`.
pub fn sampler_check(alpha: f64, n_samples: usize, master_seed: u64) -> Result<ExperimentReport> {
    let law = StableLaw::standard(alpha)?;
    if n_samples == 0 {
        return Err(Error::EmptySample);
    }
    let spec_label = format!("standard symmetric stable, alpha = {alpha}");
    let mc = MCConfig {
        n_paths: n_samples,
        master_seed,
        ..MCConfig::default()
    };
    let mut manifest = Manifest {
        experiment: "sampler-check".into(),
        master_seed,
        spec: spec_label,
        alpha,
        sigma1: law.scale(),
        sigma2: law.scale(),
        nu: 0.0,
        mc,
        grids: Vec::new(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        extra: BTreeMap::new(),
    };
    manifest.extra.insert("n_samples".into(), n_samples.into());
    let mut report = ExperimentReport::new(manifest);
    let mut rng = StreamKey::new(master_seed, 0, Purpose::Sampler).rng();
    let samples: Vec<f64> = (0..n_samples).map(|_| standard_symmetric(alpha, &mut rng)).collect();
    let band = 4.0 / (n_samples as f64).sqrt();
    let mut worst: f64 = 0.0;
    for &u in &SAMPLER_FREQUENCIES {
        let re = samples.iter().map(|x| (u * x).cos()).sum::<f64>() / n_samples as f64;
        let exact = (-u.abs().powf(alpha)).exp();
        worst = worst.max((re - exact).abs() / band);
        report.rows.push(ReportRow {
            sweep_value: u,
            estimator: "ecf".into(),
            value: re,
            lo: re - band,
            hi: re + band,
            n_effective: n_samples,
            excluded: 0,
        });
        report.rows.push(ReportRow::new(u, "ecf_exact", MomEstimate::exact(exact, n_samples), 0));
    }
    report.checks.push(CheckOutcome {
        name: "ecf_within_band".into(),
        passed: worst <= 1.0,
        detail: format!("largest deviation is {worst} bands of 4/sqrt(N)"),
    });
    if alpha == 2.0 {
        let v = sample_variance(&samples);
        report.rows.push(ReportRow {
            sweep_value: alpha,
            estimator: "variance".into(),
            value: v,
            lo: 2.0 * 0.99,
            hi: 2.0 * 1.01,
            n_effective: n_samples,
            excluded: 0,
        });
        report.checks.push(CheckOutcome {
            name: "variance_2".into(),
            passed: (v - 2.0).abs() <= 0.02,
            detail: format!("variance {v}"),
        });
    }
    Ok(report)
}

/// Contraction rate bounds `2/ε ∓ ½(L_f + L_g)` for two frozen fast paths
/// under shared noise, when both drifts declare Lipschitz constants.
pub fn mixing_envelope(spec: &CoupledSpec, epsilon: f64) -> Option<(f64, f64)> {
    let l = 0.5 * (spec.f().lipschitz()? + spec.g().lipschitz()?);
    Some((2.0 / epsilon - l, 2.0 / epsilon + l))
}

/// For each `ε`, the fitted contraction rate of two frozen fast paths started
/// at `y0` and `-y0` with the slow variable frozen at `x0`, over four
/// relaxation times. Rows `mixing_rate` and `rate_over_2_per_eps`; checks the
/// rate against [`mixing_envelope`] with 1% slack.
pub fn mixing_experiment(spec: &CoupledSpec, mc: &MCConfig) -> Result<ExperimentReport> {
    mc.validate(spec.alpha())?;
    let n = spec.dim();
    let (x0, y0) = mc.initial_states(n)?;
    let y2: Vec<f64> = y0.iter().map(|v| -v).collect();
    let mut report = ExperimentReport::new(Manifest::new("mixing", spec, mc));
    let mut bad = Vec::new();
    for &eps in &mc.epsilon_list {
        let h = mc.step(eps);
        let steps = (2.0 * eps / h).round().max(1.0) as usize;
        let grid = PathGrid::new(0.0, steps as f64 * h, steps)?;
        report.manifest.grids.push(GridRecord {
            sweep_value: eps,
            h,
            n_steps: steps,
            delta: None,
        });
        let est = mixing_rate(spec, &x0, eps, &y0, &y2, mc.p, mc.n_paths, &grid, mc.master_seed)?;
        let n_eff = mc.n_paths;
        report
            .rows
            .push(ReportRow::new(eps, "mixing_rate", MomEstimate::exact(est.rate, n_eff), 0));
        report.rows.push(ReportRow::new(
            eps,
            "rate_over_2_per_eps",
            MomEstimate::exact(est.rate * eps / 2.0, n_eff),
            0,
        ));
        if let Some((lo, hi)) = mixing_envelope(spec, eps) {
            if !(est.rate >= lo * 0.99 && est.rate <= hi * 1.01) {
                bad.push(format!("eps {eps}: rate {} outside [{lo}, {hi}]", est.rate));
            }
        }
    }
    report.checks.push(CheckOutcome {
        name: "mixing_envelope".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() { "all rates inside".into() } else { bad.join("; ") },
    });
    Ok(report)
}

/// Number of dyadic lags used by [`holder_experiment`].
const HOLDER_LAGS: u32 = 8;

/// For each `ε`, the `L^p` increment norms of the slow component at lags
/// `2h, 4h, ..., 256h` and their fitted log-log slope. The slope must lie in
/// `[0.85 · min(1/α, 1), 1.1]`.
pub fn holder_experiment(spec: &CoupledSpec, mc: &MCConfig) -> Result<ExperimentReport> {
    mc.validate(spec.alpha())?;
    let n = spec.dim();
    let (x0, y0) = mc.initial_states(n)?;
    let mut report = ExperimentReport::new(Manifest::new("holder", spec, mc));
    let lo_bound = 0.85 * (1.0 / spec.alpha()).min(1.0);
    let mut bad = Vec::new();
    for &eps in &mc.epsilon_list {
        let s = spec.with_epsilon(eps)?;
        let h = mc.step(eps);
        let steps = ((mc.horizon / h).round() as usize).clamp(2 << HOLDER_LAGS, 4 << HOLDER_LAGS);
        let grid = PathGrid::new(0.0, steps as f64 * h, steps)?;
        report.manifest.grids.push(GridRecord {
            sweep_value: eps,
            h,
            n_steps: steps,
            delta: None,
        });
        let system = SlowFastSystem::new(s.clone());
        let family = PathFamily::simulate(
            &system,
            &system.sigma(),
            &[x0.clone(), y0.clone()].concat(),
            s.law(),
            &grid,
            mc.master_seed,
            mc.n_paths,
        )?
        .project(0..n)?;
        let excluded = family.paths.iter().filter(|q| q.is_diverged()).count();
        let lags: Vec<f64> = (1..=HOLDER_LAGS).map(|j| h * f64::from(1u32 << j)).collect();
        let est = holder_increment_estimate(&family.paths, mc.p, s.alpha(), &lags)?;
        for (lag, e) in &est.points {
            report.rows.push(ReportRow::new(*lag, &format!("increment_norm:eps={eps}"), *e, excluded));
        }
        let slope = est.slope.unwrap_or(f64::NAN);
        report.rows.push(ReportRow::new(
            eps,
            "holder_slope",
            MomEstimate::exact(slope, mc.n_paths - excluded),
            excluded,
        ));
        if !(slope >= lo_bound && slope <= 1.1) {
            bad.push(format!("eps {eps}: slope {slope}"));
        }
    }
    report.checks.push(CheckOutcome {
        name: "holder_slope".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("all slopes in [{lo_bound}, 1.1]")
        } else {
            bad.join("; ")
        },
    });
    report.check_exclusions();
    Ok(report)
}
