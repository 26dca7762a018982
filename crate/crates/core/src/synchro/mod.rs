//! Coupled systems with a shared Lévy driver and their slow-fast rewrite.
//!
//! With `ε = 1/ν`, the change of variables
//! `X^ε = (X + Y)/2`, `Y^ε = (X - Y) / (2 ε^{1/α})` turns the coupled pair
//! into a slow component `X^ε` and a fast component `Y^ε` relaxing at rate
//! `2/ε`. The wrappers in this module expose each system as a [`DriftField`]
//! together with its noise intensities, so they can be fed to the integrators
//! in [`crate::sde`] with a single shared noise path.

mod drifts;
mod hypotheses;

use std::sync::Arc;

pub use drifts::{DriftInfo, DriftKind};
pub use hypotheses::{validate_hypotheses, HypothesisCertificate, ProbeRegion};

use crate::error::{Error, Result};
use crate::sde::{DriftField, IncrementSource, PathGrid};
use crate::stable_noise::StableLaw;

/// Drifts, noise intensities and coupling strength of a coupled pair.
#[derive(Clone)]
pub struct CoupledSpec {
    f: Arc<dyn DriftField>,
    g: Arc<dyn DriftField>,
    sigma1: f64,
    sigma2: f64,
    nu: f64,
    law: StableLaw,
    label: String,
}

impl std::fmt::Debug for CoupledSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoupledSpec")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("sigma1", &self.sigma1)
            .field("sigma2", &self.sigma2)
            .field("nu", &self.nu)
            .field("law", &self.law)
            .finish()
    }
}

impl CoupledSpec {
    pub fn new(
        f: Arc<dyn DriftField>,
        g: Arc<dyn DriftField>,
        sigma1: f64,
        sigma2: f64,
        nu: f64,
        law: StableLaw,
    ) -> Result<Self> {
        if !(sigma1.is_finite() && sigma2.is_finite()) || sigma1 == 0.0 || sigma2 == 0.0 {
            return Err(Error::Domain(format!(
                "noise intensities must be finite and non-zero, got {sigma1} and {sigma2}"
            )));
        }
        check_nu(nu)?;
        if f.dim() != law.dim() {
            return Err(Error::Dimension {
                expected: law.dim(),
                got: f.dim(),
            });
        }
        if g.dim() != law.dim() {
            return Err(Error::Dimension {
                expected: law.dim(),
                got: g.dim(),
            });
        }
        Ok(Self {
            f,
            g,
            sigma1,
            sigma2,
            nu,
            law,
            label: String::new(),
        })
    }

    /// Pair of library drifts acting componentwise in `law.dim()` dimensions.
    pub fn from_kinds(f: DriftKind, g: DriftKind, sigma1: f64, sigma2: f64, nu: f64, law: StableLaw) -> Result<Self> {
        let label = format!("f={f}; g={g}");
        Ok(Self::new(f.build(law.dim()), g.build(law.dim()), sigma1, sigma2, nu, law)?.with_label(label))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(Self { nu, ..self.clone() })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        self.with_nu(1.0 / epsilon)
    }

    pub fn f(&self) -> &Arc<dyn DriftField> {
        &self.f
    }

    pub fn g(&self) -> &Arc<dyn DriftField> {
        &self.g
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.nu
    }

    pub fn law(&self) -> &StableLaw {
        &self.law
    }

    pub fn alpha(&self) -> f64 {
        self.law.alpha()
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Intensity `(σ₁+σ₂)/2` of the slow channel.
    pub fn slow_sigma(&self) -> f64 {
        0.5 * (self.sigma1 + self.sigma2)
    }

    /// Intensity `(σ₁-σ₂)/(2ε^{1/α})` of the fast channel.
    pub fn fast_sigma(&self, epsilon: f64) -> f64 {
        0.5 * (self.sigma1 - self.sigma2) / fast_scale(epsilon, self.alpha())
    }

    fn eval_f(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.f.eval(x, t, out)
    }

    fn eval_g(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.g.eval(x, t, out)
    }

    fn mean_decay(&self, out: &mut [f64]) {
        let n = self.dim();
        let mut kg = vec![0.0; n];
        self.f.linear_decay(out);
        self.g.linear_decay(&mut kg);
        for (o, k) in out.iter_mut().zip(&kg) {
            *o = 0.5 * (*o + k);
        }
    }
}

/// Runs `body` on a zeroed scratch buffer of length `len`, on the stack for
/// small states.
#[inline]
fn with_scratch<R>(len: usize, body: impl FnOnce(&mut [f64]) -> R) -> R {
    const STACK: usize = 24;
    if len <= STACK {
        let mut buf = [0.0; STACK];
        body(&mut buf[..len])
    } else {
        body(&mut vec![0.0; len])
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("coupling strength nu = {nu} must be positive")))
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("epsilon = {epsilon} must be positive")))
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// `ε^{1/α}`, the scale separating the fast variable from `X - Y`.
#[inline]
pub fn fast_scale(epsilon: f64, alpha: f64) -> f64 {
    epsilon.powf(1.0 / alpha)
}

/// Slow and fast coordinates of a coupled state.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowFastState {
    pub x_slow: Vec<f64>,
    pub y_fast: Vec<f64>,
    pub epsilon: f64,
    pub alpha: f64,
}

pub fn to_slowfast(x: &[f64], y: &[f64], nu: f64, alpha: f64) -> Result<SlowFastState> {
    check_nu(nu)?;
    check_dims(x.len(), y.len())?;
    let epsilon = 1.0 / nu;
    let s = fast_scale(epsilon, alpha);
    Ok(SlowFastState {
        x_slow: x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect(),
        y_fast: x.iter().zip(y).map(|(a, b)| 0.5 * (a - b) / s).collect(),
        epsilon,
        alpha,
    })
}

pub fn from_slowfast(s: &SlowFastState) -> (Vec<f64>, Vec<f64>) {
    let scale = fast_scale(s.epsilon, s.alpha);
    let x = s.x_slow.iter().zip(&s.y_fast).map(|(a, b)| a + scale * b).collect();
    let y = s.x_slow.iter().zip(&s.y_fast).map(|(a, b)| a - scale * b).collect();
    (x, y)
}

/// `(f(x) + ν(y-x), g(y) + ν(x-y))`.
pub fn coupled_drift(spec: &CoupledSpec, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(spec.dim(), x.len())?;
    check_dims(spec.dim(), y.len())?;
    let mut dx = vec![0.0; x.len()];
    let mut dy = vec![0.0; y.len()];
    coupled_drift_into(spec, x, y, 0.0, &mut dx, &mut dy);
    Ok((dx, dy))
}

fn coupled_drift_into(spec: &CoupledSpec, x: &[f64], y: &[f64], t: f64, dx: &mut [f64], dy: &mut [f64]) {
    spec.eval_f(x, t, dx);
    spec.eval_g(y, t, dy);
    for i in 0..x.len() {
        let pull = spec.nu * (y[i] - x[i]);
        dx[i] += pull;
        dy[i] -= pull;
    }
}

/// Precomputed `ε^{1/α}` and `2/ε` for a fixed time-scale ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Separation {
    scale: f64,
    relax: f64,
}

impl Separation {
    pub(crate) fn new(epsilon: f64, alpha: f64) -> Self {
        Self {
            scale: fast_scale(epsilon, alpha),
            relax: 2.0 / epsilon,
        }
    }
}

/// Slow and fast drifts with the arguments of `f`, `g` built from `knot` and `y`:
/// `F = f(knot + ε^{1/α} y)`, `G = g(knot - ε^{1/α} y)`,
/// slow `½(F+G)`, fast `½ ε^{-1/α}(F-G) - (2/ε) y`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn split_drift_into(
    spec: &CoupledSpec,
    knot: &[f64],
    y: &[f64],
    sep: Separation,
    t: f64,
    scratch: &mut [f64],
    slow: &mut [f64],
    fast: &mut [f64],
) {
    let n = knot.len();
    let Separation { scale: s, relax } = sep;
    let (arg, fg) = scratch.split_at_mut(n);
    for i in 0..n {
        arg[i] = knot[i] + s * y[i];
    }
    spec.eval_f(arg, t, slow);
    for i in 0..n {
        arg[i] = knot[i] - s * y[i];
    }
    spec.eval_g(arg, t, &mut fg[..n]);
    for i in 0..n {
        let (ff, gg) = (slow[i], fg[i]);
        slow[i] = 0.5 * (ff + gg);
        fast[i] = 0.5 * (ff - gg) / s - relax * y[i];
    }
}

pub fn slowfast_drift(spec: &CoupledSpec, s: &SlowFastState) -> Result<(Vec<f64>, Vec<f64>)> {
    check_epsilon(s.epsilon)?;
    check_dims(spec.dim(), s.x_slow.len())?;
    check_dims(spec.dim(), s.y_fast.len())?;
    auxiliary_drift(spec, &s.x_slow, &s.y_fast, s.epsilon)
}

/// Drift of the auxiliary pair: the slow-fast drift with the slow argument of
/// `F` and `G` held at the most recent knot value.
pub fn auxiliary_drift(spec: &CoupledSpec, knot: &[f64], y: &[f64], epsilon: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_epsilon(epsilon)?;
    check_dims(spec.dim(), knot.len())?;
    check_dims(spec.dim(), y.len())?;
    let n = spec.dim();
    let mut scratch = vec![0.0; 2 * n];
    let mut slow = vec![0.0; n];
    let mut fast = vec![0.0; n];
    split_drift_into(spec, knot, y, Separation::new(epsilon, spec.alpha()), 0.0, &mut scratch, &mut slow, &mut fast);
    Ok((slow, fast))
}

/// Fast drift with the slow variable frozen at `x`.
pub fn frozen_fast_drift(x: &[f64], spec: &CoupledSpec, y: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    Ok(auxiliary_drift(spec, x, y, epsilon)?.1)
}

/// `½(f(x) + g(x))`.
pub fn averaged_drift_exact(spec: &CoupledSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_dims(spec.dim(), x.len())?;
    let mut a = vec![0.0; x.len()];
    let mut b = vec![0.0; x.len()];
    spec.eval_f(x, 0.0, &mut a);
    spec.eval_g(x, 0.0, &mut b);
    Ok(a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect())
}

/// Original pair `(X, Y)` stacked into one `2n` state.
pub struct CoupledSystem {
    spec: CoupledSpec,
}

impl CoupledSystem {
    pub fn new(spec: CoupledSpec) -> Self {
        Self { spec }
    }

    pub fn sigma(&self) -> Vec<f64> {
        let n = self.spec.dim();
        let mut s = vec![self.spec.sigma1; 2 * n];
        s[n..].fill(self.spec.sigma2);
        s
    }
}

impl DriftField for CoupledSystem {
    fn dim(&self) -> usize {
        2 * self.spec.dim()
    }

    fn eval(&self, z: &[f64], t: f64, out: &mut [f64]) {
        let n = self.spec.dim();
        let (x, y) = z.split_at(n);
        let (dx, dy) = out.split_at_mut(n);
        coupled_drift_into(&self.spec, x, y, t, dx, dy);
    }
}

/// Slow-fast pair `(X^ε, Y^ε)` stacked into one `2n` state.
pub struct SlowFastSystem {
    spec: CoupledSpec,
    epsilon: f64,
    sep: Separation,
}

impl SlowFastSystem {
    pub fn new(spec: CoupledSpec) -> Self {
        let epsilon = spec.epsilon();
        let sep = Separation::new(epsilon, spec.alpha());
        Self { spec, epsilon, sep }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma(&self) -> Vec<f64> {
        let n = self.spec.dim();
        let mut s = vec![self.spec.slow_sigma(); 2 * n];
        s[n..].fill(self.spec.fast_sigma(self.epsilon));
        s
    }
}

impl DriftField for SlowFastSystem {
    fn dim(&self) -> usize {
        2 * self.spec.dim()
    }

    fn eval(&self, z: &[f64], t: f64, out: &mut [f64]) {
        let n = self.spec.dim();
        let (x, y) = z.split_at(n);
        let (slow, fast) = out.split_at_mut(n);
        with_scratch(2 * n, |scratch| split_drift_into(&self.spec, x, y, self.sep, t, scratch, slow, fast));
    }

    fn linear_decay(&self, out: &mut [f64]) {
        let n = self.spec.dim();
        let (slow, fast) = out.split_at_mut(n);
        self.spec.mean_decay(slow);
        for (f, s) in fast.iter_mut().zip(slow.iter()) {
            *f = 2.0 / self.epsilon + s;
        }
    }
}

/// Averaged equation `dX̄ = ½(f+g)(X̄) dt + ((σ₁+σ₂)/2) dL`.
pub struct AveragedSystem {
    spec: CoupledSpec,
}

impl AveragedSystem {
    pub fn new(spec: CoupledSpec) -> Self {
        Self { spec }
    }

    pub fn sigma(&self) -> Vec<f64> {
        vec![self.spec.slow_sigma(); self.spec.dim()]
    }
}

impl DriftField for AveragedSystem {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.spec.eval_f(x, t, out);
        with_scratch(x.len(), |b| {
            self.spec.eval_g(x, t, b);
            for (o, v) in out.iter_mut().zip(b.iter()) {
                *o = 0.5 * (*o + v);
            }
        });
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.5 * (self.spec.f.lipschitz()? + self.spec.g.lipschitz()?))
    }

    fn linear_decay(&self, out: &mut [f64]) {
        self.spec.mean_decay(out);
    }
}

/// Fast equation with the slow variable frozen at `x`.
pub struct FrozenFastSystem {
    spec: CoupledSpec,
    frozen: Vec<f64>,
    epsilon: f64,
    sep: Separation,
}

impl FrozenFastSystem {
    pub fn new(spec: CoupledSpec, frozen: Vec<f64>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_dims(spec.dim(), frozen.len())?;
        let sep = Separation::new(epsilon, spec.alpha());
        Ok(Self {
            spec,
            frozen,
            epsilon,
            sep,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn frozen(&self) -> &[f64] {
        &self.frozen
    }

    pub fn spec(&self) -> &CoupledSpec {
        &self.spec
    }

    pub fn sigma(&self) -> Vec<f64> {
        vec![self.spec.fast_sigma(self.epsilon); self.spec.dim()]
    }
}

impl DriftField for FrozenFastSystem {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, y: &[f64], t: f64, out: &mut [f64]) {
        let n = y.len();
        with_scratch(3 * n, |buf| {
            let (scratch, slow) = buf.split_at_mut(2 * n);
            split_drift_into(&self.spec, &self.frozen, y, self.sep, t, scratch, slow, out)
        });
    }

    fn linear_decay(&self, out: &mut [f64]) {
        self.spec.mean_decay(out);
        for o in out.iter_mut() {
            *o += 2.0 / self.epsilon;
        }
    }
}

/// Slow equation with the fast variable frozen at `y`:
/// `dX = ½[f(X + ε^{1/α} y) + g(X - ε^{1/α} y)] dt + ((σ₁+σ₂)/2) dL`.
pub struct FrozenSlowSystem {
    spec: CoupledSpec,
    frozen: Vec<f64>,
    sep: Separation,
}

impl FrozenSlowSystem {
    pub fn new(spec: CoupledSpec, frozen: Vec<f64>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_dims(spec.dim(), frozen.len())?;
        let sep = Separation::new(epsilon, spec.alpha());
        Ok(Self {
            spec,
            frozen,
            sep,
        })
    }

    pub fn sigma(&self) -> Vec<f64> {
        vec![self.spec.slow_sigma(); self.spec.dim()]
    }
}

impl DriftField for FrozenSlowSystem {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let n = x.len();
        with_scratch(3 * n, |buf| {
            let (scratch, fast) = buf.split_at_mut(2 * n);
            split_drift_into(&self.spec, x, &self.frozen, self.sep, t, scratch, out, fast)
        });
    }

    fn lipschitz(&self) -> Option<f64> {
        AveragedSystem::new(self.spec.clone()).lipschitz()
    }

    fn linear_decay(&self, out: &mut [f64]) {
        self.spec.mean_decay(out);
    }
}

/// Time knots `0, δ, 2δ, ...` on a grid whose step divides `δ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnotSchedule {
    delta: f64,
    steps_per_knot: usize,
}

impl KnotSchedule {
    pub fn new(delta: f64, h: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) || !(h > 0.0) {
            return Err(Error::Domain(format!("knot spacing {delta} and step {h} must be positive")));
        }
        let ratio = delta / h;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::GridMismatch(format!("step {h} does not divide knot spacing {delta}")));
        }
        Ok(Self {
            delta,
            steps_per_knot: m as usize,
        })
    }

    /// Schedule whose spacing is the multiple of `h` closest to `delta` (at least `h`).
    pub fn nearest(delta: f64, h: f64) -> Result<Self> {
        let m = (delta / h).round().max(1.0);
        Self::new(m * h, h)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn steps_per_knot(&self) -> usize {
        self.steps_per_knot
    }

    /// Grid index of the latest knot at or before step `k`.
    pub fn knot_step(&self, k: usize) -> usize {
        k - k % self.steps_per_knot
    }
}

/// Slow-fast pair and auxiliary pair integrated on the same noise.
#[derive(Clone, Debug)]
pub struct AuxiliaryRun {
    /// `(X^ε, Y^ε)` per grid point, `2n` values each.
    pub slow_fast: Vec<f64>,
    /// `(X̃^ε, Ỹ^ε)` per grid point.
    pub auxiliary: Vec<f64>,
    pub diverged_at: Option<usize>,
}

/// Euler integration of the slow-fast system together with its auxiliary
/// processes, whose coefficients use the slow state at the latest knot.
/// Both start from the same state and consume the same increments.
pub fn auxiliary_paths<S: IncrementSource + ?Sized>(
    spec: &CoupledSpec,
    start: &SlowFastState,
    schedule: &KnotSchedule,
    grid: &PathGrid,
    noise: &mut S,
) -> Result<AuxiliaryRun> {
    let n = spec.dim();
    check_dims(n, start.x_slow.len())?;
    check_dims(n, start.y_fast.len())?;
    check_dims(n, noise.noise_dim())?;
    KnotSchedule::new(schedule.delta, grid.h())?;
    let eps = start.epsilon;
    check_epsilon(eps)?;
    let h = grid.h();
    let (sigma_slow, sigma_fast) = (spec.slow_sigma(), spec.fast_sigma(eps));
    let sep = Separation::new(eps, spec.alpha());

    let mut z = start.x_slow.clone();
    z.extend_from_slice(&start.y_fast);
    let mut w = z.clone();
    let mut knot = start.x_slow.clone();
    let mut dz = vec![0.0; 2 * n];
    let mut dw = vec![0.0; 2 * n];
    let mut scratch = vec![0.0; 2 * n];
    let mut dl = vec![0.0; n];

    let len = (grid.n_steps() + 1) * 2 * n;
    let mut slow_fast = Vec::with_capacity(len);
    let mut auxiliary = Vec::with_capacity(len);
    slow_fast.extend_from_slice(&z);
    auxiliary.extend_from_slice(&w);
    let mut diverged_at = None;
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        if k % schedule.steps_per_knot == 0 {
            knot.copy_from_slice(&z[..n]);
        }
        {
            let (slow, fast) = dz.split_at_mut(n);
            split_drift_into(spec, &z[..n], &z[n..], sep, t, &mut scratch, slow, fast);
        }
        {
            let (slow, fast) = dw.split_at_mut(n);
            split_drift_into(spec, &knot, &w[n..], sep, t, &mut scratch, slow, fast);
        }
        noise.next_into(&mut dl);
        for i in 0..n {
            z[i] += dz[i] * h + sigma_slow * dl[i];
            z[n + i] += dz[n + i] * h + sigma_fast * dl[i];
            w[i] += dw[i] * h + sigma_slow * dl[i];
            w[n + i] += dw[n + i] * h + sigma_fast * dl[i];
        }
        if !(z.iter().all(|v| v.is_finite()) && w.iter().all(|v| v.is_finite())) {
            diverged_at = Some(k + 1);
            break;
        }
        slow_fast.extend_from_slice(&z);
        auxiliary.extend_from_slice(&w);
    }
    slow_fast.resize(len, f64::NAN);
    auxiliary.resize(len, f64::NAN);
    Ok(AuxiliaryRun {
        slow_fast,
        auxiliary,
        diverged_at,
    })
}

#[cfg(test)]
mod tests;
