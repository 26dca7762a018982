//! Symmetric α-stable laws: normalising constants, characteristic exponent,
//! Chambers-Mallows-Stuck sampling and self-similar increments.
//!
//! A `dim`-dimensional law here has independent scalar coordinates, each with
//! characteristic function `exp(-t s^α |u_i|^α)` where `s` is the effective
//! per-coordinate scale. No tail truncation is ever applied.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::stats::Cloud;

/// Normalisation of the characteristic exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// `ρ(u) = -scale^α |u|^α`.
    #[default]
    UnitExponent,
    /// `ρ(u) = -C₁(dim, α) scale^α |u|^α`.
    C1Normalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableLaw {
    alpha: f64,
    dim: usize,
    scale: f64,
    convention: Convention,
}

impl StableLaw {
    /// Unit-exponent law. Requires `alpha ∈ (1, 2]`, `dim ≥ 1`, `scale ≥ 0`.
    pub fn new(alpha: f64, dim: usize, scale: f64) -> Result<Self> {
        Self::with_convention(alpha, dim, scale, Convention::UnitExponent)
    }

    pub fn with_convention(
        alpha: f64,
        dim: usize,
        scale: f64,
        convention: Convention,
    ) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::Domain(format!("alpha = {alpha} not in (1, 2]")));
        }
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("scale = {scale} must be finite and >= 0")));
        }
        Ok(Self {
            alpha,
            dim,
            scale,
            convention,
        })
    }

    /// The standard law `exp(-|u|^α)` in one dimension.
    pub fn standard(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn with_dim(self, dim: usize) -> Result<Self> {
        Self::with_convention(self.alpha, dim, self.scale, self.convention)
    }

    pub fn with_scale(self, scale: f64) -> Result<Self> {
        Self::with_convention(self.alpha, self.dim, scale, self.convention)
    }

    /// Per-coordinate scale `s` such that each coordinate has exponent
    /// `-s^α |u|^α`.
    pub fn unit_scale(&self) -> f64 {
        match self.convention {
            Convention::UnitExponent => self.scale,
            Convention::C1Normalized => {
                self.scale * c1_unchecked(self.dim, self.alpha).powf(1.0 / self.alpha)
            }
        }
    }

    /// Fills `out` (length `dim`) with one unit-time variate.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let s = self.unit_scale();
        for o in out.iter_mut() {
            *o = s * standard_symmetric(self.alpha, rng);
        }
    }

    /// Fills `out` with a variate equal in law to `dt^{1/α}` times a
    /// unit-time variate. `dt` is trusted to be positive.
    pub fn increment_into<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        let s = self.unit_scale() * dt.powf(1.0 / self.alpha);
        for o in out.iter_mut() {
            *o = s * standard_symmetric(self.alpha, rng);
        }
    }
}

/// Normalising constants of the isotropic law in `n` dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevyConstants {
    pub c1: f64,
    pub c_levy: f64,
}

impl LevyConstants {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            c1: c1_constant(n, alpha)?,
            c_levy: levy_measure_constant(n, alpha)?,
        })
    }
}

fn check_constant_domain(n: usize, alpha: f64) -> Result<()> {
    if n < 1 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("alpha = {alpha} not in (0, 2)")));
    }
    Ok(())
}

fn c1_unchecked(n: usize, alpha: f64) -> f64 {
    let n = n as f64;
    (ln_gamma((1.0 + alpha) / 2.0) + ln_gamma(n / 2.0)
        - ln_gamma((n + alpha) / 2.0)
        - 0.5 * PI.ln())
    .exp()
}

/// `C₁(n, α) = π^{-1/2} Γ((1+α)/2) Γ(n/2) / Γ((n+α)/2)`.
pub fn c1_constant(n: usize, alpha: f64) -> Result<f64> {
    check_constant_domain(n, alpha)?;
    Ok(c1_unchecked(n, alpha))
}

/// Constant `C(n, α) = α Γ((n+α)/2) / (2^{1-α} π^{n/2} Γ(1-α/2))` of the
/// Lévy measure `C(n, α) |u|^{-n-α} du`.
pub fn levy_measure_constant(n: usize, alpha: f64) -> Result<f64> {
    check_constant_domain(n, alpha)?;
    let nf = n as f64;
    let log = alpha.ln() + ln_gamma((nf + alpha) / 2.0)
        - (1.0 - alpha) * 2f64.ln()
        - 0.5 * nf * PI.ln()
        - ln_gamma(1.0 - alpha / 2.0);
    Ok(log.exp())
}

/// Characteristic exponent at unit time: `-s^α Σ_i |u_i|^α`.
pub fn char_exponent(law: &StableLaw, u: &[f64]) -> f64 {
    let s = law.unit_scale();
    -s.powf(law.alpha) * u.iter().map(|ui| ui.abs().powf(law.alpha)).sum::<f64>()
}

/// One standard symmetric α-stable variate (`E e^{iuX} = e^{-|u|^α}`) by the
/// Chambers-Mallows-Stuck transform. Valid for `α ∈ (0, 2]`.
#[inline]
pub fn standard_symmetric<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.sample::<f64, _>(Open01) - 0.5);
    let w = -rng.sample::<f64, _>(Open01).ln();
    if alpha == 2.0 {
        return 2.0 * v.sin() * w.sqrt();
    }
    if alpha == 1.0 {
        return v.tan();
    }
    // sin(αV) / cos(V)^{1/α} · (cos((1-α)V) / W)^{(1-α)/α}, with one exp.
    let log_tail = (1.0 - alpha) * (((1.0 - alpha) * v).cos() / w).ln() - v.cos().ln();
    (alpha * v).sin() * (log_tail / alpha).exp()
}

/// One unit-time variate of `law`.
pub fn sample_standard<R: Rng + ?Sized>(law: &StableLaw, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; law.dim];
    law.sample_into(rng, &mut out);
    out
}

/// One increment of the Lévy process over a step of length `dt`.
pub fn increment<R: Rng + ?Sized>(law: &StableLaw, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step dt = {dt} must be positive")));
    }
    let mut out = vec![0.0; law.dim];
    law.increment_into(dt, rng, &mut out);
    Ok(out)
}

/// `(1/N) Σ_k exp(i <u, x_k>)`.
pub fn empirical_char_function(samples: &Cloud, u: &[f64]) -> Result<Complex64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if u.len() != samples.dim() {
        return Err(Error::Dimension {
            expected: samples.dim(),
            got: u.len(),
        });
    }
    let (mut re, mut im) = (0.0, 0.0);
    for x in samples.points() {
        let phase: f64 = x.iter().zip(u).map(|(a, b)| a * b).sum();
        let (s, c) = phase.sin_cos();
        re += c;
        im += s;
    }
    let n = samples.len() as f64;
    Ok(Complex64::new(re / n, im / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};
    use crate::stats::{ks_two_sample, median, sample_variance};

    // Reference values from 30-digit Gamma evaluations (mpmath).
    const C1_N2_A1: f64 = std::f64::consts::FRAC_2_PI;
    const C1_N3_A15: f64 = 0.4;
    const CL_N1_A1: f64 = std::f64::consts::FRAC_1_PI;
    const CL_N1_A15: f64 = 0.299_206_710_301_074_5;
    const CL_N3_A05: f64 = 0.047_620_226_950_680_73;

    fn draws(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamKey::new(seed, 0, Purpose::Sampler).rng();
        (0..n).map(|_| standard_symmetric(alpha, &mut rng)).collect()
    }

    #[test]
    fn c1_reference_values() {
        assert!((c1_constant(1, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((c1_constant(1, 2.0 - 1e-9).unwrap() - 1.0).abs() < 1e-8);
        assert!((c1_constant(2, 1.0).unwrap() - C1_N2_A1).abs() < 1e-12);
        assert!((c1_constant(3, 1.5).unwrap() - C1_N3_A15).abs() < 1e-12);
    }

    #[test]
    fn levy_constant_reference_values() {
        assert!((levy_measure_constant(1, 1.0).unwrap() - CL_N1_A1).abs() < 1e-12);
        assert!((levy_measure_constant(1, 1.5).unwrap() - CL_N1_A15).abs() < 1e-12);
        assert!((levy_measure_constant(3, 0.5).unwrap() - CL_N3_A05).abs() < 1e-12);
    }

    #[test]
    fn constant_domain_errors() {
        assert!(c1_constant(0, 1.0).is_err());
        assert!(c1_constant(1, 2.0).is_err());
        assert!(levy_measure_constant(1, 0.0).is_err());
        assert!(StableLaw::new(1.0, 1, 1.0).is_err());
        assert!(StableLaw::new(1.5, 0, 1.0).is_err());
        assert!(StableLaw::new(1.5, 1, -1.0).is_err());
    }

    #[test]
    fn char_exponent_examples() {
        let law = StableLaw::new(1.5, 1, 1.0).unwrap();
        assert_eq!(char_exponent(&law, &[0.0]), 0.0);
        let law = StableLaw::new(2.0, 1, 1.0).unwrap();
        assert!((char_exponent(&law, &[3.0]) + 9.0).abs() < 1e-12);
        // StableLaw excludes alpha = 1; with C₁(1,1) = 1 the exponent at u = 2 is -2
        let rho = -c1_constant(1, 1.0).unwrap() * 2f64.powf(1.0);
        assert!((rho + 2.0).abs() < 1e-12);
        let law =
            StableLaw::with_convention(1.5, 1, 1.0, Convention::C1Normalized).unwrap();
        assert!((char_exponent(&law, &[2.0]) + 2f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn c1_convention_rescales() {
        let law = StableLaw::with_convention(1.5, 3, 2.0, Convention::C1Normalized).unwrap();
        let expected = 2.0 * C1_N3_A15.powf(1.0 / 1.5);
        assert!((law.unit_scale() - expected).abs() < 1e-12);
    }

    #[test]
    fn gaussian_limit_variance() {
        let x = draws(2.0, 1_000_000, 1);
        let v = sample_variance(&x);
        assert!((v - 2.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn char_function_at_one() {
        let x = draws(1.5, 1_000_000, 2);
        let cloud = Cloud::new(1, x).unwrap();
        let phi = empirical_char_function(&cloud, &[1.0]).unwrap();
        assert!((phi.re - (-1f64).exp()).abs() < 0.005, "{phi}");
        assert!(phi.im.abs() < 0.005);
    }

    #[test]
    fn char_function_alpha_1_2() {
        let x = draws(1.2, 1_000_000, 3);
        let cloud = Cloud::new(1, x).unwrap();
        let phi = empirical_char_function(&cloud, &[2.0]).unwrap();
        let exact = (-(2f64.powf(1.2))).exp();
        assert!((phi.norm() - exact).abs() < 0.005, "{phi} vs {exact}");
    }

    #[test]
    fn symmetric_median() {
        for alpha in [1.2, 1.5, 1.8, 2.0] {
            let mut x = draws(alpha, 1_000_000, 4);
            assert!(median(&mut x).abs() < 0.01);
        }
    }

    #[test]
    fn increment_self_similarity() {
        let law = StableLaw::standard(1.5).unwrap();
        for (i, dt) in [0.5, 0.1, 0.01].into_iter().enumerate() {
            let mut rng = StreamKey::new(9, i as u64, Purpose::Sampler).rng();
            let inc: Vec<f64> = (0..100_000)
                .map(|_| increment(&law, dt, &mut rng).unwrap()[0])
                .collect();
            let factor = dt.powf(1.0 / 1.5);
            let scaled: Vec<f64> = draws(1.5, 100_000, 100 + i as u64)
                .into_iter()
                .map(|x| factor * x)
                .collect();
            let ks = ks_two_sample(&inc, &scaled, 0.01).unwrap();
            assert!(ks.passed(), "dt={dt}: {ks:?}");
        }
    }

    #[test]
    fn increment_scale_factor_and_errors() {
        let law = StableLaw::standard(2.0).unwrap();
        let mut a = StreamKey::noise(1, 1).rng();
        let mut b = StreamKey::noise(1, 1).rng();
        let inc = increment(&law, 1e-4, &mut a).unwrap()[0];
        let unit = sample_standard(&law, &mut b)[0];
        assert!((inc - 0.01 * unit).abs() <= 1e-15 * unit.abs().max(1.0));
        assert!(increment(&law, 0.0, &mut a).is_err());
        assert!(increment(&law, -1.0, &mut a).is_err());
    }

    #[test]
    fn ecf_trivial_cases() {
        let zeros = Cloud::new(1, vec![0.0; 3]).unwrap();
        let phi = empirical_char_function(&zeros, &[4.2]).unwrap();
        assert_eq!(phi, Complex64::new(1.0, 0.0));
        let pm = Cloud::new(2, vec![0.3, -1.1, -0.3, 1.1]).unwrap();
        let u = [0.7, 2.0];
        let phi = empirical_char_function(&pm, &u).unwrap();
        assert!(phi.im.abs() < 1e-15);
        assert!((phi.re - (0.3f64 * 0.7 - 1.1 * 2.0).cos()).abs() < 1e-15);
        assert!(empirical_char_function(&Cloud::new(1, vec![]).unwrap(), &[1.0]).is_err());
    }

    #[test]
    fn deterministic_streams() {
        let law = StableLaw::new(1.7, 3, 0.5).unwrap();
        let mut a = StreamKey::noise(42, 0).rng();
        let mut b = StreamKey::noise(42, 0).rng();
        for _ in 0..100 {
            let x = sample_standard(&law, &mut a);
            let y = sample_standard(&law, &mut b);
            assert_eq!(
                x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
