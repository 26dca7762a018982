//! Probe-based checks of the Lipschitz, dissipativity and boundedness
//! conditions on a coupled pair.

use serde::Serialize;

use super::{frozen_fast_drift, CoupledSpec};
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};
use crate::sde::{uniform_in, DriftField};

/// Axis-aligned box `[lo, hi]^n` in which probes are drawn. Dissipativity is
/// tested on probes with `|y| ≥ radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeRegion {
    pub lo: f64,
    pub hi: f64,
    pub radius: f64,
}

impl ProbeRegion {
    pub fn new(lo: f64, hi: f64, radius: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!("probe box [{lo}, {hi}] must be bounded and non-empty")));
        }
        if !(radius >= 0.0) {
            return Err(Error::Domain(format!("radius {radius} must be non-negative")));
        }
        Ok(Self { lo, hi, radius })
    }
}

/// Sampled constants of a coupled pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisCertificate {
    /// Largest finite-difference ratio of `f` and `g`.
    pub lipschitz_l: f64,
    /// `max |b(x)| / (1 + |x|)` over `b ∈ {f, g}`.
    pub growth_m1: f64,
    /// Largest `M₂` with `⟨y, f(y) - g(y)⟩ ≤ -M₂|y|²` on the probes beyond the radius.
    pub dissipativity_m2: f64,
    pub radius_r: f64,
    /// `sup |f|` on the probes.
    pub m3: f64,
    /// `sup |g|` on the probes.
    pub m4: f64,
    /// Sampled bound on the gradient of `f`.
    pub m5: f64,
    /// Sampled bound on the gradient of `g`.
    pub m6: f64,
    /// Same quantity as `dissipativity_m2` for the full fast drift at the
    /// spec's `ε`, i.e. including the `-(2/ε) y` relaxation.
    pub effective_dissipativity: f64,
    pub warnings: Vec<String>,
    pub verified_on: String,
}

const TOL: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

struct Ratio {
    value: f64,
    witness: Vec<f64>,
}

impl Ratio {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            witness: Vec::new(),
        }
    }

    fn offer(&mut self, value: f64, at: &[f64]) {
        if value > self.value {
            self.value = value;
            self.witness = at.to_vec();
        }
    }
}

fn eval(d: &dyn DriftField, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    d.eval(x, 0.0, &mut out);
    out
}

fn violation(name: &str, r: Ratio, detail: String) -> Error {
    Error::HypothesisViolation {
        name: name.into(),
        witness: r.witness,
        detail,
    }
}

/// Estimates the constants of the Lipschitz, dissipativity and boundedness
/// conditions from `n_probe` random points in `region`.
///
/// Fails with [`Error::HypothesisViolation`] when a drift exceeds its declared
/// Lipschitz constant or when `⟨y, f(y) - g(y)⟩ > 0` at a probe beyond the
/// radius. When `f - g` vanishes on the probes the certificate carries a
/// warning that dissipativity only holds with `M₂ = 0`.
pub fn validate_hypotheses(
    spec: &CoupledSpec,
    region: &ProbeRegion,
    n_probe: usize,
    seed: u64,
) -> Result<HypothesisCertificate> {
    if n_probe < 1000 {
        return Err(Error::Domain(format!("need at least 1000 probes, got {n_probe}")));
    }
    let n = spec.dim();
    let mut rng = StreamKey::new(seed, 0, Purpose::Probe).rng();
    let step = 1e-4 * (region.hi - region.lo);
    let drifts: [&dyn DriftField; 2] = [spec.f().as_ref(), spec.g().as_ref()];

    let mut lip = [Ratio::new(), Ratio::new()];
    let mut grad = [Ratio::new(), Ratio::new()];
    let mut sup = [Ratio::new(), Ratio::new()];
    let mut growth = Ratio::new();
    let mut diss = Ratio::new();
    let mut eff = Ratio::new();
    let mut outside = 0usize;
    let mut max_gap = 0.0f64;

    let mut x = vec![0.0; n];
    let mut other = vec![0.0; n];
    let mut near = vec![0.0; n];
    let mut dir = vec![0.0; n];
    for _ in 0..n_probe {
        x.iter_mut().for_each(|v| *v = uniform_in(&mut rng, region.lo, region.hi));
        other.iter_mut().for_each(|v| *v = uniform_in(&mut rng, region.lo, region.hi));
        dir.iter_mut().for_each(|v| *v = uniform_in(&mut rng, -1.0, 1.0));
        let dn = norm(&dir).max(f64::MIN_POSITIVE);
        for i in 0..n {
            near[i] = x[i] + step * dir[i] / dn;
        }
        let mut at_x = [Vec::new(), Vec::new()];
        for (j, d) in drifts.iter().enumerate() {
            let bx = eval(*d, &x);
            let far = dist(&bx, &eval(*d, &other)) / dist(&x, &other).max(f64::MIN_POSITIVE);
            let local = dist(&bx, &eval(*d, &near)) / dist(&x, &near);
            lip[j].offer(far.max(local), &x);
            grad[j].offer(local, &x);
            sup[j].offer(norm(&bx), &x);
            growth.offer(norm(&bx) / (1.0 + norm(&x)), &x);
            at_x[j] = bx;
        }
        let r2 = dot(&x, &x);
        if r2.sqrt() >= region.radius && r2 > 0.0 {
            outside += 1;
            let gap: Vec<f64> = at_x[0].iter().zip(&at_x[1]).map(|(a, b)| a - b).collect();
            max_gap = max_gap.max(norm(&gap));
            diss.offer(dot(&x, &gap) / r2, &x);
            let fast = frozen_fast_drift(&other, spec, &x, spec.epsilon())?;
            eff.offer(dot(&x, &fast) / r2, &x);
        }
    }

    let names = ["f", "g"];
    for (j, d) in drifts.iter().enumerate() {
        if let Some(declared) = d.lipschitz() {
            if lip[j].value > declared * (1.0 + 1e-6) + 1e-9 {
                let value = lip[j].value;
                let r = std::mem::replace(&mut lip[j], Ratio::new());
                return Err(violation(
                    "H.1",
                    r,
                    format!("{} has difference ratio {value} above its declared Lipschitz constant {declared}", names[j]),
                ));
            }
        }
    }
    if outside < 10 {
        return Err(Error::Domain(format!(
            "only {outside} probes lie beyond radius {}; enlarge the box or shrink the radius",
            region.radius
        )));
    }
    let mut warnings = Vec::new();
    if diss.value > TOL {
        let value = diss.value;
        return Err(violation(
            "H.2",
            diss,
            format!("<y, f(y) - g(y)> = {value}·|y|^2 > 0 at the witness"),
        ));
    }
    let m2 = (-diss.value).max(0.0);
    if m2 <= TOL {
        warnings.push(if max_gap <= TOL {
            "H.2 holds only with M2 = 0: f - g vanishes on the probes".to_string()
        } else {
            "H.2 holds only with M2 = 0".to_string()
        });
    }
    if drifts.iter().any(|d| d.lipschitz().is_none()) {
        warnings.push("no declared global Lipschitz constant; sampled constants hold on the box only".into());
    }

    Ok(HypothesisCertificate {
        lipschitz_l: lip[0].value.max(lip[1].value),
        growth_m1: growth.value,
        dissipativity_m2: m2,
        radius_r: region.radius,
        m3: sup[0].value,
        m4: sup[1].value,
        m5: grad[0].value,
        m6: grad[1].value,
        effective_dissipativity: -eff.value,
        warnings,
        verified_on: format!(
            "{n_probe} uniform probes in [{}, {}]^{n}, {outside} with |y| >= {}, seed {seed}, epsilon {}",
            region.lo,
            region.hi,
            region.radius,
            spec.epsilon()
        ),
    })
}
