//! Fixed-step integration of SDEs driven by additive α-stable noise.
//!
//! All integrators consume increments from an [`IncrementSource`]. A noise
//! source of dimension `m` may drive a state of dimension `k·m`: state
//! component `i` receives noise coordinate `i % m`. This is how several
//! systems are driven by one shared Lévy path.

use std::io::Write;

use rand::Rng;

use crate::error::{check_moment_order, Error, Result};
use crate::rng::{StreamKey, StreamRng};
use crate::stable_noise::StableLaw;
use crate::stats::{linear_fit, lp_norm_mom, MomEstimate};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl PathGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::Domain(format!("need t_end > t0, got [{t0}, {t_end}]")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    /// Grid on `[0, n·h]` with `n = ceil(horizon / h)` (tolerant to rounding).
    pub fn with_step(horizon: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(horizon > 0.0) {
            return Err(Error::Domain(format!("need h > 0 and horizon > 0, got h={h}, T={horizon}")));
        }
        let n = ((horizon / h) - 1e-9).ceil().max(1.0) as usize;
        Self::new(0.0, n as f64 * h, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn h(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h()
    }

    /// Index of the grid time equal to `t` up to a small relative tolerance.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.h();
        let k = x.round();
        if (x - k).abs() > 1e-6 || k < 0.0 || k as usize > self.n_steps {
            return Err(Error::GridMismatch(format!("t = {t} is not a grid time")));
        }
        Ok(k as usize)
    }

    /// Number of steps in a lag of length `lag`, which must be a multiple of `h`.
    pub fn steps_in(&self, lag: f64) -> Result<usize> {
        let x = lag / self.h();
        let k = x.round();
        if k < 1.0 || (x - k).abs() > 1e-6 {
            return Err(Error::GridMismatch(format!(
                "lag {lag} is not a positive multiple of the step {}",
                self.h()
            )));
        }
        Ok(k as usize)
    }
}

/// A deterministic vector field `(x, t) ↦ b(x, t)`.
pub trait DriftField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]);

    /// Declared global Lipschitz constant, if known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// Per-component rates `κ_i ≥ 0` of a diagonal linear part `-κ_i x_i`
    /// contained in the field. Used only by [`Scheme::ExponentialEuler`].
    fn linear_decay(&self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl<T: DriftField + ?Sized> DriftField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (**self).eval(x, t, out)
    }
    fn lipschitz(&self) -> Option<f64> {
        (**self).lipschitz()
    }
    fn linear_decay(&self, out: &mut [f64]) {
        (**self).linear_decay(out)
    }
}

impl<T: DriftField + ?Sized> DriftField for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (**self).eval(x, t, out)
    }
    fn lipschitz(&self) -> Option<f64> {
        (**self).lipschitz()
    }
    fn linear_decay(&self, out: &mut [f64]) {
        (**self).linear_decay(out)
    }
}

/// Wraps a closure as a drift field.
pub struct FnDrift<F> {
    dim: usize,
    f: F,
    lipschitz: Option<f64>,
}

impl<F> FnDrift<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            f,
            lipschitz: None,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }
}

impl<F> DriftField for FnDrift<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(x, t, out)
    }
    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// Several drift fields evaluated side by side on consecutive state slices.
pub struct StackedDrift<'a> {
    parts: Vec<&'a dyn DriftField>,
}

impl<'a> StackedDrift<'a> {
    pub fn new(parts: Vec<&'a dyn DriftField>) -> Self {
        Self { parts }
    }
}

impl DriftField for StackedDrift<'_> {
    fn dim(&self) -> usize {
        self.parts.iter().map(|p| p.dim()).sum()
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let mut off = 0;
        for p in &self.parts {
            let d = p.dim();
            p.eval(&x[off..off + d], t, &mut out[off..off + d]);
            off += d;
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        self.parts
            .iter()
            .map(|p| p.lipschitz())
            .try_fold(0.0f64, |acc, l| l.map(|l| acc.max(l)))
    }

    fn linear_decay(&self, out: &mut [f64]) {
        let mut off = 0;
        for p in &self.parts {
            let d = p.dim();
            p.linear_decay(&mut out[off..off + d]);
            off += d;
        }
    }
}

/// Supplies one noise increment per step.
pub trait IncrementSource {
    fn noise_dim(&self) -> usize;
    fn next_into(&mut self, out: &mut [f64]);
}

/// Increments of a Lévy process on a uniform grid, drawn on demand from a
/// keyed stream. Identical keys give identical increments.
pub struct NoiseStream {
    law: StableLaw,
    h: f64,
    rng: StreamRng,
}

impl NoiseStream {
    pub fn new(law: StableLaw, grid: &PathGrid, key: StreamKey) -> Self {
        Self {
            law,
            h: grid.h(),
            rng: key.rng(),
        }
    }
}

impl IncrementSource for NoiseStream {
    fn noise_dim(&self) -> usize {
        self.law.dim()
    }

    fn next_into(&mut self, out: &mut [f64]) {
        self.law.increment_into(self.h, &mut self.rng, out);
    }
}

/// Materialised noise path: `n_steps` increments of dimension `law.dim()`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    grid: PathGrid,
    law: StableLaw,
    seed_key: StreamKey,
    increments: Vec<f64>,
}

impl NoisePath {
    pub fn grid(&self) -> &PathGrid {
        &self.grid
    }

    pub fn law(&self) -> &StableLaw {
        &self.law
    }

    pub fn seed_key(&self) -> StreamKey {
        self.seed_key
    }

    pub fn len(&self) -> usize {
        self.grid.n_steps
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        let d = self.law.dim();
        &self.increments[k * d..(k + 1) * d]
    }

    pub fn increments(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.increments.chunks_exact(self.law.dim())
    }

    pub fn cursor(&self) -> NoiseCursor<'_> {
        NoiseCursor { path: self, k: 0 }
    }
}

pub struct NoiseCursor<'a> {
    path: &'a NoisePath,
    k: usize,
}

impl IncrementSource for NoiseCursor<'_> {
    fn noise_dim(&self) -> usize {
        self.path.law.dim()
    }

    fn next_into(&mut self, out: &mut [f64]) {
        out.copy_from_slice(self.path.increment(self.k));
        self.k += 1;
    }
}

pub fn generate_noise_path(law: &StableLaw, grid: &PathGrid, seed_key: StreamKey) -> NoisePath {
    let d = law.dim();
    let mut stream = NoiseStream::new(*law, grid, seed_key);
    let mut increments = vec![0.0; grid.n_steps * d];
    for chunk in increments.chunks_exact_mut(d) {
        stream.next_into(chunk);
    }
    NoisePath {
        grid: *grid,
        law: *law,
        seed_key,
        increments,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    #[default]
    EulerMaruyama,
    /// Euler step followed by exact decay of the declared diagonal linear
    /// part: `x' = e^{-κh} (x + h (b(x) + κx) + σ ΔL)`. Identical to
    /// Euler-Maruyama when `κ = 0`.
    ExponentialEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// The state became non-finite after step `step`.
    Diverged { step: usize },
}

impl Outcome {
    pub fn is_diverged(&self) -> bool {
        matches!(self, Outcome::Diverged { .. })
    }
}

/// Streams a fixed-step solution through `observe(k, x_k)` for
/// `k = 0..=n_steps`, stopping early if the state becomes non-finite.
pub fn integrate<D, S, O>(
    drift: &D,
    sigma: &[f64],
    x0: &[f64],
    grid: &PathGrid,
    noise: &mut S,
    scheme: Scheme,
    mut observe: O,
) -> Result<Outcome>
where
    D: DriftField + ?Sized,
    S: IncrementSource + ?Sized,
    O: FnMut(usize, &[f64]),
{
    let d = drift.dim();
    if x0.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: x0.len(),
        });
    }
    if sigma.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: sigma.len(),
        });
    }
    let nd = noise.noise_dim();
    if nd == 0 || !d.is_multiple_of(nd) {
        return Err(Error::Dimension {
            expected: d,
            got: nd,
        });
    }
    let h = grid.h();
    let mut x = x0.to_vec();
    let mut b = vec![0.0; d];
    let mut dl = vec![0.0; nd];
    let decay = match scheme {
        Scheme::EulerMaruyama => None,
        Scheme::ExponentialEuler => {
            let mut kappa = vec![0.0; d];
            drift.linear_decay(&mut kappa);
            Some((kappa.iter().map(|k| (-k * h).exp()).collect::<Vec<_>>(), kappa))
        }
    };
    observe(0, &x);
    for k in 0..grid.n_steps {
        let t = grid.time(k);
        drift.eval(&x, t, &mut b);
        noise.next_into(&mut dl);
        match &decay {
            None => {
                for i in 0..d {
                    x[i] += b[i] * h + sigma[i] * dl[i % nd];
                }
            }
            Some((factor, kappa)) => {
                for i in 0..d {
                    x[i] = factor[i] * (x[i] + (b[i] + kappa[i] * x[i]) * h + sigma[i] * dl[i % nd]);
                }
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Ok(Outcome::Diverged { step: k + 1 });
        }
        observe(k + 1, &x);
    }
    Ok(Outcome::Completed)
}

/// A discretised trajectory with `n_steps + 1` states.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    grid: PathGrid,
    dim: usize,
    values: Vec<f64>,
    diverged_at: Option<usize>,
}

impl SamplePath {
    pub fn grid(&self) -> &PathGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_value(&self) -> &[f64] {
        self.value(self.grid.n_steps)
    }

    pub fn values(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    /// Step after which the state became non-finite; later states are NaN.
    pub fn diverged_at(&self) -> Option<usize> {
        self.diverged_at
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Path of the coordinates in `range`.
    pub fn project(&self, range: std::ops::Range<usize>) -> Result<SamplePath> {
        if range.start >= range.end || range.end > self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: range.end,
            });
        }
        let values = self.values().flat_map(|v| v[range.clone()].iter().copied()).collect();
        Ok(SamplePath {
            grid: self.grid,
            dim: range.len(),
            values,
            diverged_at: self.diverged_at,
        })
    }

    /// Debug dump with columns `t, x1..x_dim`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (k, v) in self.values().enumerate() {
            write!(w, "{}", self.grid.time(k))?;
            for x in v {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    fn record<D, S>(
        drift: &D,
        sigma: &[f64],
        x0: &[f64],
        grid: &PathGrid,
        noise: &mut S,
        scheme: Scheme,
    ) -> Result<Self>
    where
        D: DriftField + ?Sized,
        S: IncrementSource + ?Sized,
    {
        let dim = x0.len();
        let mut values = Vec::with_capacity((grid.n_steps + 1) * dim);
        let outcome = integrate(drift, sigma, x0, grid, noise, scheme, |_, x| {
            values.extend_from_slice(x)
        })?;
        let diverged_at = match outcome {
            Outcome::Completed => None,
            Outcome::Diverged { step } => Some(step),
        };
        values.resize((grid.n_steps + 1) * dim, f64::NAN);
        Ok(Self {
            grid: *grid,
            dim,
            values,
            diverged_at,
        })
    }
}

/// `x_{k+1} = x_k + b(x_k, t_k) h + σ ⊙ ΔL_k`, `x_0 = x0`.
///
/// Non-finite states do not raise: the path is flagged as diverged.
pub fn euler_maruyama<D: DriftField + ?Sized>(
    drift: &D,
    sigma: &[f64],
    x0: &[f64],
    grid: &PathGrid,
    noise: &NoisePath,
) -> Result<SamplePath> {
    solve(drift, sigma, x0, grid, noise, Scheme::EulerMaruyama)
}

pub fn solve<D: DriftField + ?Sized>(
    drift: &D,
    sigma: &[f64],
    x0: &[f64],
    grid: &PathGrid,
    noise: &NoisePath,
    scheme: Scheme,
) -> Result<SamplePath> {
    if noise.grid != *grid {
        return Err(Error::GridMismatch("noise path was generated on another grid".into()));
    }
    SamplePath::record(drift, sigma, x0, grid, &mut noise.cursor(), scheme)
}

/// Exact-in-law stepping of `dY = -λY dt + σ dL`:
/// `Y_{k+1} = e^{-λh} Y_k + σ ξ_k` where `ξ_k` is the law's increment over an
/// effective time `(1 - e^{-αλh}) / (αλ)`.
///
/// Draws the same standard variates, in the same order, as a [`NoiseStream`]
/// with the same key, so it can be coupled to an Euler path.
pub fn ou_exact_path(
    lambda: f64,
    sigma: f64,
    law: &StableLaw,
    x0: &[f64],
    grid: &PathGrid,
    seed_key: StreamKey,
) -> Result<SamplePath> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("decay rate lambda = {lambda} must be positive")));
    }
    if x0.len() != law.dim() {
        return Err(Error::Dimension {
            expected: law.dim(),
            got: x0.len(),
        });
    }
    let alpha = law.alpha();
    let h = grid.h();
    let decay = (-lambda * h).exp();
    let t_eff = -(-alpha * lambda * h).exp_m1() / (alpha * lambda);
    let mut rng = seed_key.rng();
    let d = law.dim();
    let mut values = Vec::with_capacity((grid.n_steps + 1) * d);
    values.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut xi = vec![0.0; d];
    for _ in 0..grid.n_steps {
        law.increment_into(t_eff, &mut rng, &mut xi);
        for (xv, e) in x.iter_mut().zip(&xi) {
            *xv = decay * *xv + sigma * e;
        }
        values.extend_from_slice(&x);
    }
    Ok(SamplePath {
        grid: *grid,
        dim: d,
        values,
        diverged_at: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolderEstimate {
    /// `(lag, max over start times of the L^p increment norm)`.
    pub points: Vec<(f64, MomEstimate)>,
    /// Fitted log-log slope; `None` when some norm vanishes.
    pub slope: Option<f64>,
}

/// Maximum start-time count used by [`holder_increment_estimate`].
const HOLDER_STARTS: usize = 32;

/// For every lag `h`, the maximum over a common set of start times `t` of the
/// median-of-means estimate of `(E|X_{t+h} - X_t|^p)^{1/p}`, and the log-log
/// slope across lags. Diverged paths are skipped.
pub fn holder_increment_estimate(
    paths: &[SamplePath],
    p: f64,
    alpha: f64,
    lags: &[f64],
) -> Result<HolderEstimate> {
    check_moment_order(p, alpha)?;
    let first = paths.first().ok_or(Error::EmptySample)?;
    let grid = first.grid;
    if paths.iter().any(|q| q.grid != grid || q.dim != first.dim) {
        return Err(Error::GridMismatch("paths do not share one grid".into()));
    }
    if lags.is_empty() {
        return Err(Error::Domain("no lags given".into()));
    }
    let steps: Vec<usize> = lags.iter().map(|&l| grid.steps_in(l)).collect::<Result<_>>()?;
    let max_lag = *steps.iter().max().unwrap();
    if max_lag > grid.n_steps {
        return Err(Error::GridMismatch("lag longer than the path".into()));
    }
    let span = grid.n_steps - max_lag;
    let n_starts = HOLDER_STARTS.min(span + 1);
    let starts: Vec<usize> = (0..n_starts)
        .map(|j| if n_starts == 1 { 0 } else { j * span / (n_starts - 1) })
        .collect();
    let live: Vec<&SamplePath> = paths.iter().filter(|q| !q.is_diverged()).collect();
    if live.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut points = Vec::with_capacity(lags.len());
    let mut diffs = vec![0.0; live.len()];
    for (&lag, &m) in lags.iter().zip(&steps) {
        let mut best: Option<MomEstimate> = None;
        for &k in &starts {
            for (dst, q) in diffs.iter_mut().zip(&live) {
                *dst = q
                    .value(k + m)
                    .iter()
                    .zip(q.value(k))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            }
            let est = lp_norm_mom(&diffs, p)?;
            if best.is_none_or(|b| est.value > b.value) {
                best = Some(est);
            }
        }
        points.push((lag, best.unwrap()));
    }
    let slope = if points.iter().all(|(_, e)| e.value > 0.0) && points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|(l, _)| l.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|(_, e)| e.value.ln()).collect();
        Some(linear_fit(&xs, &ys)?.slope)
    } else {
        None
    };
    Ok(HolderEstimate { points, slope })
}

/// Draws `n` keyed noise paths and integrates them, in parallel over paths.
pub fn simulate_paths<D: DriftField + ?Sized>(
    drift: &D,
    sigma: &[f64],
    x0: &[f64],
    law: &StableLaw,
    grid: &PathGrid,
    master_seed: u64,
    n: usize,
) -> Result<Vec<SamplePath>> {
    use rayon::prelude::*;
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut stream = NoiseStream::new(*law, grid, StreamKey::noise(master_seed, i));
            SamplePath::record(drift, sigma, x0, grid, &mut stream, Scheme::EulerMaruyama)
        })
        .collect()
}

/// Standard uniform draw helper for probe generation.
pub(crate) fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable_noise::empirical_char_function;
    use crate::stats::{sample_variance, Cloud};

    fn decay(rate: f64) -> impl DriftField {
        FnDrift::new(1, move |x: &[f64], _t, out: &mut [f64]| out[0] = -rate * x[0])
            .with_lipschitz(rate)
    }

    #[test]
    fn grid_invariants() {
        assert!(PathGrid::new(0.0, 0.0, 10).is_err());
        assert!(PathGrid::new(0.0, 1.0, 0).is_err());
        let g = PathGrid::new(0.0, 2.0, 4).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.index_of(1.5).unwrap(), 3);
        assert!(g.index_of(1.2).is_err());
        assert_eq!(g.steps_in(1.0).unwrap(), 2);
        assert!(g.steps_in(0.3).is_err());
    }

    #[test]
    fn zero_scale_noise_is_zero() {
        let law = StableLaw::new(1.5, 2, 0.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 50).unwrap();
        let n = generate_noise_path(&law, &g, StreamKey::noise(1, 0));
        assert_eq!(n.len(), 50);
        assert!(n.increments().all(|i| i.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn noise_path_is_reproducible() {
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 100).unwrap();
        let a = generate_noise_path(&law, &g, StreamKey::noise(3, 7));
        let b = generate_noise_path(&law, &g, StreamKey::noise(3, 7));
        assert_eq!(a, b);
        let c = generate_noise_path(&law, &g, StreamKey::noise(3, 8));
        assert_ne!(a, c);
    }

    #[test]
    fn pooled_increments_char_function() {
        // h = 0.01: E exp(iΔL) = exp(-0.01)
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 100).unwrap();
        let mut pool = Vec::with_capacity(100_000);
        for i in 0..1000 {
            let n = generate_noise_path(&law, &g, StreamKey::noise(5, i));
            pool.extend(n.increments().map(|v| v[0]));
        }
        let phi = empirical_char_function(&Cloud::new(1, pool).unwrap(), &[1.0]).unwrap();
        let band = 4.0 / (100_000f64).sqrt();
        assert!((phi.re - (-0.01f64).exp()).abs() < band, "{phi}");
    }

    #[test]
    fn euler_matches_exponential_decay() {
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 100_000).unwrap();
        let noise = generate_noise_path(&law, &g, StreamKey::noise(1, 0));
        let path = euler_maruyama(&decay(1.0), &[0.0], &[1.0], &g, &noise).unwrap();
        assert!((path.final_value()[0] - (-1f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn pure_noise_accumulates_exactly() {
        let law = StableLaw::new(1.3, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 200).unwrap();
        let noise = generate_noise_path(&law, &g, StreamKey::noise(2, 0));
        let zero = FnDrift::new(1, |_: &[f64], _, out: &mut [f64]| out[0] = 0.0);
        let path = euler_maruyama(&zero, &[1.0], &[0.25], &g, &noise).unwrap();
        let mut acc = 0.25;
        for k in 0..200 {
            assert_eq!(path.value(k)[0], acc);
            acc += noise.increment(k)[0];
        }
        assert_eq!(path.final_value()[0], acc);
    }

    #[test]
    fn single_explicit_step() {
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 0.5, 1).unwrap();
        let noise = generate_noise_path(&law, &g, StreamKey::noise(2, 0));
        let two = FnDrift::new(1, |_: &[f64], _, out: &mut [f64]| out[0] = 2.0);
        let path = euler_maruyama(&two, &[0.0], &[0.0], &g, &noise).unwrap();
        assert_eq!(path.final_value()[0], 1.0);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let noise = generate_noise_path(&law, &PathGrid::new(0.0, 1.0, 10).unwrap(), StreamKey::noise(1, 0));
        let g = PathGrid::new(0.0, 1.0, 20).unwrap();
        assert!(euler_maruyama(&decay(1.0), &[1.0], &[0.0], &g, &noise).is_err());
    }

    #[test]
    fn divergence_is_flagged_not_raised() {
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 100).unwrap();
        let noise = generate_noise_path(&law, &g, StreamKey::noise(1, 0));
        let blowup = FnDrift::new(1, |x: &[f64], _, out: &mut [f64]| out[0] = x[0] * x[0] * 1e200);
        let path = euler_maruyama(&blowup, &[0.0], &[1e10], &g, &noise).unwrap();
        assert!(path.is_diverged());
        assert!(path.final_value()[0].is_nan());
        assert_eq!(path.len(), 101);
    }

    #[test]
    fn shared_noise_drives_tiled_channels() {
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 64).unwrap();
        let noise = generate_noise_path(&law, &g, StreamKey::noise(4, 0));
        let zero = FnDrift::new(2, |_: &[f64], _, out: &mut [f64]| out.fill(0.0));
        let path = euler_maruyama(&zero, &[1.0, -2.0], &[0.0, 0.0], &g, &noise).unwrap();
        let fin = path.final_value();
        assert!((fin[1] + 2.0 * fin[0]).abs() < 1e-12 * fin[0].abs().max(1.0));
    }

    #[test]
    fn exponential_euler_is_exact_for_linear_decay() {
        struct Linear;
        impl DriftField for Linear {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, x: &[f64], _t: f64, out: &mut [f64]) {
                out[0] = -3.0 * x[0];
            }
            fn linear_decay(&self, out: &mut [f64]) {
                out[0] = 3.0;
            }
        }
        let law = StableLaw::new(1.5, 1, 0.0).unwrap();
        let g = PathGrid::new(0.0, 2.0, 200).unwrap();
        let noise = generate_noise_path(&law, &g, StreamKey::noise(1, 0));
        let p = solve(&Linear, &[1.0], &[1.0], &g, &noise, Scheme::ExponentialEuler).unwrap();
        for k in [1, 50, 200] {
            let exact = (-3.0 * g.time(k)).exp();
            assert!((p.value(k)[0] / exact - 1.0).abs() < 1e-12);
        }
        // no declared linear part: identical bits to Euler-Maruyama
        let d = decay(3.0);
        let a = solve(&d, &[1.0], &[1.0], &g, &noise, Scheme::ExponentialEuler).unwrap();
        let b = euler_maruyama(&d, &[1.0], &[1.0], &g, &noise).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ou_exact_deterministic_decay() {
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 10).unwrap();
        let p = ou_exact_path(2.0, 0.0, &law, &[1.0], &g, StreamKey::noise(1, 0)).unwrap();
        assert!((p.final_value()[0] - (-2f64).exp()).abs() < 1e-14);
        assert!(ou_exact_path(0.0, 1.0, &law, &[1.0], &g, StreamKey::noise(1, 0)).is_err());
    }

    #[test]
    fn ou_exact_gaussian_stationary_variance() {
        // exp(-t u²) convention: stationary variance 2 σ² / (2 λ) = 0.5 for λ = 2
        let law = StableLaw::new(2.0, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 10.0, 5).unwrap();
        let finals: Vec<f64> = (0..1_000_000)
            .map(|i| {
                ou_exact_path(2.0, 1.0, &law, &[0.0], &g, StreamKey::noise(6, i))
                    .unwrap()
                    .final_value()[0]
            })
            .collect();
        let v = sample_variance(&finals);
        assert!((v - 0.5).abs() < 0.01, "variance {v}");
    }

    #[test]
    fn ou_exact_stable_stationary_char_function() {
        // stationary exponent -|u|^α / (α λ)
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 10).unwrap();
        let finals: Vec<f64> = (0..100_000)
            .map(|i| {
                ou_exact_path(2.0, 1.0, &law, &[0.0], &g, StreamKey::noise(8, i))
                    .unwrap()
                    .final_value()[0]
            })
            .collect();
        // after T = 1 the law has exponent -(1 - e^{-αλT}) |u|^α / (αλ)
        let cloud = Cloud::new(1, finals).unwrap();
        for u in [0.5, 1.0, 2.0] {
            let phi = empirical_char_function(&cloud, &[u]).unwrap();
            let exact = (-(1.0 - (-3.0f64).exp()) * u.powf(1.5) / 3.0).exp();
            assert!((phi.re - exact).abs() < 4.0 / (100_000f64).sqrt(), "u={u}: {phi} vs {exact}");
        }
    }

    #[test]
    fn euler_and_exact_ou_converge_together() {
        // L^1.2 gap between coupled Euler and exact paths at T shrinks with h
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let gap = |n_steps: usize| {
            let g = PathGrid::new(0.0, 1.0, n_steps).unwrap();
            let d: Vec<f64> = (0..2000)
                .map(|i| {
                    let key = StreamKey::noise(21, i);
                    let noise = generate_noise_path(&law, &g, key);
                    let em = euler_maruyama(&decay(2.0), &[1.0], &[1.0], &g, &noise).unwrap();
                    let ex = ou_exact_path(2.0, 1.0, &law, &[1.0], &g, key).unwrap();
                    (em.final_value()[0] - ex.final_value()[0]).abs()
                })
                .collect();
            lp_norm_mom(&d, 1.2).unwrap().value
        };
        let coarse = gap(100);
        let fine = gap(200);
        assert!(coarse < 0.05, "coarse gap {coarse}");
        let ratio = fine / coarse;
        assert!((0.35..0.75).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn holder_constant_paths() {
        let law = StableLaw::new(1.5, 1, 0.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 100).unwrap();
        let zero = FnDrift::new(1, |_: &[f64], _, out: &mut [f64]| out[0] = 0.0);
        let paths = simulate_paths(&zero, &[1.0], &[2.0], &law, &g, 1, 10).unwrap();
        let est = holder_increment_estimate(&paths, 1.2, 1.5, &[0.01, 0.1]).unwrap();
        assert!(est.points.iter().all(|(_, e)| e.value == 0.0));
        assert!(est.slope.is_none());
        assert!(holder_increment_estimate(&paths, 1.5, 1.5, &[0.01]).is_err());
        assert!(holder_increment_estimate(&paths, 1.2, 1.5, &[0.015]).is_err());
    }

    #[test]
    fn holder_slopes() {
        let g = PathGrid::new(0.0, 1.0, 1000).unwrap();
        let lags = [0.002, 0.005, 0.01, 0.02, 0.05, 0.1];
        let zero = FnDrift::new(1, |_: &[f64], _, out: &mut [f64]| out[0] = 0.0);
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        let noisy = simulate_paths(&zero, &[1.0], &[0.0], &law, &g, 3, 2000).unwrap();
        let s = holder_increment_estimate(&noisy, 1.2, 1.5, &lags).unwrap().slope.unwrap();
        assert!((s - 1.0 / 1.5).abs() < 0.1, "noise slope {s}");

        let bounded = FnDrift::new(1, |x: &[f64], _, out: &mut [f64]| out[0] = 1.0 - 0.5 * x[0].tanh());
        let quiet = StableLaw::new(1.5, 1, 0.0).unwrap();
        let smooth = simulate_paths(&bounded, &[0.0], &[0.0], &quiet, &g, 3, 20).unwrap();
        let s = holder_increment_estimate(&smooth, 1.2, 1.5, &lags).unwrap().slope.unwrap();
        assert!((s - 1.0).abs() < 0.1, "drift slope {s}");
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let law = StableLaw::new(1.5, 2, 1.0).unwrap();
        let g = PathGrid::new(0.0, 1.0, 3).unwrap();
        let zero = FnDrift::new(2, |_: &[f64], _, out: &mut [f64]| out.fill(0.0));
        let p = &simulate_paths(&zero, &[1.0, 1.0], &[0.0, 0.0], &law, &g, 1, 1).unwrap()[0];
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0,0"));
    }
}
