//! Oscillator-bath kernels, thermal data and discretized influence phases.
//!
//! Temperatures are energies (`k_B = 1`). Paths live on uniform grids of
//! `N + 1` knots over `[0, tau]`, and every single or double time integral is
//! a trapezoid rule on that grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_gauss_kronrod, nested_trapezoid, square_trapezoid, trapezoid};

/// `|sin(omega tau)|` at or below this is a resonant horizon.
pub const RESONANCE_GUARD: f64 = 1e-9;
/// Ohmic frequency integrals stop at this multiple of the cutoff.
pub const OHMIC_CUTOFF_MULTIPLE: f64 = 40.0;
/// Relative tolerance of the ohmic noise-kernel quadrature.
pub const OHMIC_REL_TOL: f64 = 1e-8;
const OHMIC_MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathMode {
    pub mass: f64,
    pub omega: f64,
    pub coupling: f64,
}

impl BathMode {
    pub fn new(mass: f64, omega: f64, coupling: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid(format!("mode mass must be positive, got {mass}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::invalid(format!("mode frequency must be positive, got {omega}")));
        }
        if !coupling.is_finite() {
            return Err(Error::invalid("mode coupling must be finite"));
        }
        Ok(Self { mass, omega, coupling })
    }

    /// `c^2 / (2 m omega)`.
    pub fn strength(&self) -> f64 {
        self.coupling * self.coupling / (2.0 * self.mass * self.omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorBath {
    pub modes: Vec<BathMode>,
    pub temperature: f64,
    pub hbar: f64,
}

impl OscillatorBath {
    pub fn new(modes: Vec<BathMode>, temperature: f64, hbar: f64) -> Result<Self> {
        check_temperature(temperature)?;
        check_hbar(hbar)?;
        for m in &modes {
            BathMode::new(m.mass, m.omega, m.coupling)?;
        }
        Ok(Self {
            modes,
            temperature,
            hbar,
        })
    }

    pub fn single(mode: BathMode, temperature: f64, hbar: f64) -> Result<Self> {
        Self::new(vec![mode], temperature, hbar)
    }

    /// `coth(hbar omega / 2T)` for one of the modes.
    pub fn half_coth(&self, mode: &BathMode) -> f64 {
        half_coth(mode.omega, self.temperature, self.hbar)
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("temperature must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn check_hbar(hbar: f64) -> Result<()> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::invalid(format!("hbar must be positive, got {hbar}")));
    }
    Ok(())
}

/// `coth(x)` with `coth(inf) = 1`.
pub fn coth(x: f64) -> f64 {
    if x.is_infinite() {
        return x.signum();
    }
    if x.abs() > 20.0 {
        // 1 + 2 / (e^{2x} - 1) without overflow
        return x.signum() * (1.0 + 2.0 / (2.0 * x.abs()).exp_m1());
    }
    1.0 / x.tanh()
}

/// `1 / sinh(x)` with `csch(inf) = 0`.
pub fn csch(x: f64) -> f64 {
    if x.is_infinite() || x.abs() > 700.0 {
        return 0.0;
    }
    1.0 / x.sinh()
}

/// `hbar omega / T`, infinite at `T = 0`.
pub fn thermal_ratio(omega: f64, temperature: f64, hbar: f64) -> f64 {
    if temperature == 0.0 {
        f64::INFINITY
    } else {
        hbar * omega / temperature
    }
}

/// `coth(hbar omega / 2T)`, equal to 1 at `T = 0`.
pub fn half_coth(omega: f64, temperature: f64, hbar: f64) -> f64 {
    coth(0.5 * thermal_ratio(omega, temperature, hbar))
}

/// `eta(s) = - sum c^2/(2 m omega) sin(omega s)`.
pub fn eta_kernel(s: f64, bath: &OscillatorBath) -> f64 {
    -bath.modes.iter().map(|m| m.strength() * (m.omega * s).sin()).sum::<f64>()
}

/// `nu(s) = sum c^2/(2 m omega) coth(hbar omega / 2T) cos(omega s)`.
pub fn nu_kernel(s: f64, bath: &OscillatorBath) -> f64 {
    bath.modes
        .iter()
        .map(|m| m.strength() * bath.half_coth(m) * (m.omega * s).cos())
        .sum()
}

/// `gamma(s) = sum c^2/(2 m omega^2) cos(omega s)`, whose derivative is `eta`.
pub fn gamma_kernel(s: f64, bath: &OscillatorBath) -> f64 {
    bath.modes
        .iter()
        .map(|m| m.strength() / m.omega * (m.omega * s).cos())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// Delta peaks at the mode frequencies of a finite bath.
    Discrete(OscillatorBath),
    /// `I(omega) = M gamma omega exp(-omega^2 / Lambda^2)`.
    Ohmic {
        m_gamma: f64,
        cutoff: f64,
        temperature: f64,
        hbar: f64,
    },
}

impl SpectralDensity {
    pub fn ohmic(m_gamma: f64, cutoff: f64, temperature: f64, hbar: f64) -> Result<Self> {
        if !(m_gamma >= 0.0 && m_gamma.is_finite()) {
            return Err(Error::invalid(format!("M gamma must be >= 0, got {m_gamma}")));
        }
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::invalid(format!("cutoff must be positive, got {cutoff}")));
        }
        check_temperature(temperature)?;
        check_hbar(hbar)?;
        Ok(SpectralDensity::Ohmic {
            m_gamma,
            cutoff,
            temperature,
            hbar,
        })
    }

    /// `I(omega)` for the ohmic kind; the discrete kind has no pointwise value.
    pub fn value(&self, omega: f64) -> Option<f64> {
        match self {
            SpectralDensity::Discrete(_) => None,
            SpectralDensity::Ohmic { m_gamma, cutoff, .. } => Some(m_gamma * omega * (-(omega / cutoff).powi(2)).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValues {
    pub s: f64,
    pub eta: f64,
    pub nu: f64,
    pub gamma: f64,
}

/// `omega coth(hbar omega / 2T)`, finite as `omega -> 0` for `T > 0`.
fn omega_coth(omega: f64, temperature: f64, hbar: f64) -> f64 {
    if temperature == 0.0 {
        return omega;
    }
    let y = hbar * omega / (2.0 * temperature);
    if y < 1e-6 {
        2.0 * temperature / hbar * (1.0 + y * y / 3.0)
    } else {
        omega * coth(y)
    }
}

/// `nu`, `gamma` and `eta = gamma'` at lag `s`.
pub fn spectral_kernels(density: &SpectralDensity, s: f64) -> Result<KernelValues> {
    match density {
        SpectralDensity::Discrete(bath) => Ok(KernelValues {
            s,
            eta: eta_kernel(s, bath),
            nu: nu_kernel(s, bath),
            gamma: gamma_kernel(s, bath),
        }),
        &SpectralDensity::Ohmic {
            m_gamma,
            cutoff,
            temperature,
            hbar,
        } => {
            let gauss = (-0.25 * cutoff * cutoff * s * s).exp();
            let gamma = m_gamma * cutoff / (2.0 * PI.sqrt()) * gauss;
            let eta = -0.5 * cutoff * cutoff * s * gamma;
            let integrand =
                |w: f64| m_gamma / PI * (-(w / cutoff).powi(2)).exp() * omega_coth(w, temperature, hbar) * (w * s).cos();
            // upper bound on int |integrand| from omega coth(y) <= omega + 2T/hbar
            let scale = m_gamma / PI * (0.5 * cutoff * cutoff + 2.0 * temperature / hbar * 0.5 * PI.sqrt() * cutoff);
            let nu = if m_gamma == 0.0 {
                0.0
            } else {
                adaptive_gauss_kronrod(
                    integrand,
                    0.0,
                    OHMIC_CUTOFF_MULTIPLE * cutoff,
                    OHMIC_REL_TOL,
                    OHMIC_REL_TOL * scale,
                    OHMIC_MAX_INTERVALS,
                )?
                .value
            };
            Ok(KernelValues { s, eta, nu, gamma })
        }
    }
}

/// Kernel dump rows for a list of lags.
pub fn kernel_table(density: &SpectralDensity, lags: &[f64]) -> Result<Vec<KernelValues>> {
    lags.iter().map(|&s| spectral_kernels(density, s)).collect()
}

/// Samples `x(t_k)`, `t_k = k tau / N`, `k = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedPath {
    horizon: f64,
    samples: Vec<f64>,
}

impl DiscretizedPath {
    pub fn new(horizon: f64, samples: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if samples.len() < 3 {
            return Err(Error::invalid(format!(
                "a path needs N >= 2 intervals, got {} samples",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path samples must be finite"));
        }
        Ok(Self { horizon, samples })
    }

    /// Samples `f` at the `intervals + 1` knots.
    pub fn from_fn(horizon: f64, intervals: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = horizon / intervals as f64;
        Self::new(horizon, (0..=intervals).map(|k| f(k as f64 * h)).collect())
    }

    pub fn constant(horizon: f64, intervals: usize, value: f64) -> Result<Self> {
        Self::from_fn(horizon, intervals, |_| value)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn knots(&self) -> usize {
        self.samples.len()
    }

    pub fn intervals(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }

    pub fn same_grid(&self, other: &DiscretizedPath) -> bool {
        self.samples.len() == other.samples.len() && self.horizon == other.horizon
    }

    fn check_grid(&self, other: &DiscretizedPath) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::DimensionMismatch(format!(
                "paths on different grids ({} knots over {} vs {} knots over {})",
                self.knots(),
                self.horizon,
                other.knots(),
                other.horizon
            )));
        }
        Ok(())
    }

    pub fn combine(&self, other: &DiscretizedPath, f: impl Fn(f64, f64) -> f64) -> Result<DiscretizedPath> {
        self.check_grid(other)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect();
        Ok(DiscretizedPath {
            horizon: self.horizon,
            samples,
        })
    }

    /// Trapezoid of `x(t) g(t)`.
    pub fn integrate_against(&self, g: impl Fn(f64) -> f64) -> f64 {
        let h = self.step();
        let vals: Vec<f64> = self.samples.iter().enumerate().map(|(k, x)| x * g(k as f64 * h)).collect();
        trapezoid(&vals, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalCoefficients {
    pub a: f64,
    pub b: f64,
    /// `2A + B`, evaluated as `(m omega / hbar) coth(x / 2)`.
    pub sum: f64,
    /// `2A - B`, evaluated as `(m omega / hbar) tanh(x / 2)` to avoid cancellation at high T.
    pub diff: f64,
}

impl ThermalCoefficients {
    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn diff(&self) -> f64 {
        self.diff
    }

    /// Constant making `N exp(-A(q^2 + r^2) + B q r)` unit trace.
    pub fn normalization(&self) -> f64 {
        (self.diff() / PI).sqrt()
    }

    /// Normalized thermal density matrix in the position basis.
    pub fn density(&self, q: f64, r: f64) -> f64 {
        self.normalization() * (-self.a * (q * q + r * r) + self.b * q * r).exp()
    }
}

/// `A = (m omega / 2 hbar) coth(hbar omega / T)`, `B = m omega / (hbar sinh(hbar omega / T))`.
pub fn thermal_coefficients(mode: &BathMode, temperature: f64, hbar: f64) -> Result<ThermalCoefficients> {
    check_temperature(temperature)?;
    check_hbar(hbar)?;
    let x = thermal_ratio(mode.omega, temperature, hbar);
    let k = mode.mass * mode.omega / hbar;
    let half_tanh = if x.is_infinite() { 1.0 } else { (0.5 * x).tanh() };
    Ok(ThermalCoefficients {
        a: 0.5 * k * coth(x),
        b: k * csch(x),
        sum: k * coth(0.5 * x),
        diff: k * half_tanh,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagatorCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub f: f64,
}

/// Coefficients of the forced-oscillator propagator over the path horizon.
pub fn propagator_coefficients(x: &DiscretizedPath, mode: &BathMode) -> Result<PropagatorCoefficients> {
    let tau = x.horizon();
    let w = mode.omega;
    let sin_wt = (w * tau).sin();
    if sin_wt.abs() <= RESONANCE_GUARD {
        return Err(Error::ResonantHorizon { sin: sin_wt.abs() });
    }
    let m = mode.mass;
    let cn = mode.coupling;
    let h = x.step();
    let xs = x.samples();
    let a = m * w * (w * tau).cos() / (2.0 * sin_wt);
    let b = -m * w / sin_wt;
    let c = cn / sin_wt * x.integrate_against(|t| (w * t).sin());
    let d = cn / sin_wt * x.integrate_against(|t| (w * (tau - t)).sin());
    let g: Vec<f64> = (0..xs.len()).map(|k| xs[k] * (w * (tau - k as f64 * h)).sin()).collect();
    let s: Vec<f64> = (0..xs.len()).map(|k| xs[k] * (w * k as f64 * h).sin()).collect();
    let nested = nested_trapezoid(xs.len(), h, |i, j| g[i] * s[j]);
    let f = cn * cn / (m * w * sin_wt) * nested;
    Ok(PropagatorCoefficients { a, b, c, d, f })
}

/// Lag kernels sampled on the grid lags `k h`, `k = 0..N`.
fn lag_table(knots: usize, h: f64, kernel: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    (0..knots).map(|k| kernel(k as f64 * h)).collect()
}

fn phase_from_tables(x: &DiscretizedPath, y: &DiscretizedPath, eta: &[f64], nu: &[f64]) -> Complex64 {
    let n = x.knots();
    let h = x.step();
    let diff: Vec<f64> = x.samples().iter().zip(y.samples()).map(|(a, b)| a - b).collect();
    let sum: Vec<f64> = x.samples().iter().zip(y.samples()).map(|(a, b)| a + b).collect();
    let re = -nested_trapezoid(n, h, |i, j| diff[i] * eta[i - j] * sum[j]);
    let im = 0.5 * square_trapezoid(n, h, |i, j| diff[i] * nu[i.abs_diff(j)] * diff[j]);
    Complex64::new(re, im)
}

/// Influence phase `W[x, y]` for a discrete bath.
pub fn influence_phase(x: &DiscretizedPath, y: &DiscretizedPath, bath: &OscillatorBath) -> Result<Complex64> {
    x.check_grid(y)?;
    let h = x.step();
    let eta = lag_table(x.knots(), h, |s| Ok(eta_kernel(s, bath)))?;
    let nu = lag_table(x.knots(), h, |s| Ok(nu_kernel(s, bath)))?;
    Ok(phase_from_tables(x, y, &eta, &nu))
}

/// Influence phase for any spectral density (ohmic noise kernel by quadrature).
pub fn influence_phase_spectral(x: &DiscretizedPath, y: &DiscretizedPath, density: &SpectralDensity) -> Result<Complex64> {
    x.check_grid(y)?;
    let h = x.step();
    let values = lag_table(x.knots(), h, Ok)?
        .into_iter()
        .map(|s| spectral_kernels(density, s))
        .collect::<Result<Vec<_>>>()?;
    let eta: Vec<f64> = values.iter().map(|v| v.eta).collect();
    let nu: Vec<f64> = values.iter().map(|v| v.nu).collect();
    Ok(phase_from_tables(x, y, &eta, &nu))
}

/// `Im W` for a local noise kernel `nu(s) = strength * delta(s)`: `(strength / 2) int (x - y)^2`.
pub fn im_w_local(x: &DiscretizedPath, y: &DiscretizedPath, strength: f64) -> Result<f64> {
    let d = x.combine(y, |a, b| (a - b) * (a - b))?;
    Ok(0.5 * strength * trapezoid(d.samples(), d.step()))
}

/// Strength `2 M gamma T / hbar` of the high-temperature local noise kernel.
pub fn fokker_planck_strength(m_gamma: f64, temperature: f64, hbar: f64) -> f64 {
    2.0 * m_gamma * temperature / hbar
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bath3(t: f64) -> OscillatorBath {
        OscillatorBath::new(
            vec![
                BathMode::new(1.0, 1.3, 0.4).unwrap(),
                BathMode::new(0.5, 2.1, 0.2).unwrap(),
                BathMode::new(2.0, 0.7, 0.9).unwrap(),
            ],
            t,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn eta_basic() {
        let bath = bath3(0.5);
        assert_eq!(eta_kernel(0.0, &bath), 0.0);
        let m = BathMode::new(1.5, 2.0, 0.3).unwrap();
        let one = OscillatorBath::single(m, 0.0, 1.0).unwrap();
        let want = -(0.09 / (2.0 * 1.5 * 2.0)) * (2.0f64 * 0.7).sin();
        assert!((eta_kernel(0.7, &one) - want).abs() <= 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = rng.random_range(-10.0..10.0);
            assert!((eta_kernel(-s, &bath) + eta_kernel(s, &bath)).abs() <= 1e-14);
            assert!((nu_kernel(-s, &bath) - nu_kernel(s, &bath)).abs() <= 1e-14);
        }
    }

    #[test]
    fn nu_limits() {
        let bath = bath3(0.8);
        let want: f64 = bath.modes.iter().map(|m| m.strength() * coth(m.omega / 1.6)).sum();
        assert!((nu_kernel(0.0, &bath) - want).abs() <= 1e-14);

        let m = BathMode::new(1.0, 2.0, 0.5).unwrap();
        let cold = OscillatorBath::single(m, 0.0, 1.0).unwrap();
        assert!((nu_kernel(0.4, &cold) - m.strength() * (0.8f64).cos()).abs() <= 1e-15);

        // hbar omega / T = 1e-3
        let hot = OscillatorBath::single(m, 2000.0, 1.0).unwrap();
        let series = m.coupling.powi(2) * 2000.0 / (m.mass * m.omega * m.omega);
        assert!((nu_kernel(0.0, &hot) / series - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn thermal_limits_and_identities() {
        let m = BathMode::new(1.3, 0.8, 0.2).unwrap();
        let cold = thermal_coefficients(&m, 0.0, 1.0).unwrap();
        assert!((cold.a - 1.3 * 0.8 / 2.0).abs() <= 1e-15);
        assert_eq!(cold.b, 0.0);
        let warm = thermal_coefficients(&m, 0.5, 1.0).unwrap();
        let x: f64 = 0.8 / 0.5;
        assert!((warm.a - 1.3 * 0.8 / 2.0 / x.tanh()).abs() <= 1e-14);
        assert!((warm.b - 1.3 * 0.8 / x.sinh()).abs() <= 1e-14);

        let k = 1.3 * 0.8;
        for i in 0..=60 {
            // x from 1e-3 to 50, log-spaced
            let x = 1e-3 * (50.0f64 / 1e-3).powf(i as f64 / 60.0);
            let t = 0.8 / x;
            let c = thermal_coefficients(&m, t, 1.0).unwrap();
            let e = (-x).exp();
            let coth_half = (1.0 + e) / (1.0 - e);
            let tanh_half = (1.0 - e) / (1.0 + e);
            assert!((c.sum() / (k * coth_half) - 1.0).abs() <= 1e-12, "x = {x}");
            assert!((c.diff() / (k * tanh_half) - 1.0).abs() <= 1e-12, "x = {x}");
            assert!((2.0 * c.a + c.b - c.sum()).abs() <= 1e-12 * c.sum());
            assert!((2.0 * c.a - c.b - c.diff()).abs() <= 1e-12 * c.sum());
        }
    }

    #[test]
    fn thermal_density_is_normalized_and_positive() {
        let m = BathMode::new(1.0, 1.0, 0.1).unwrap();
        for t in [0.0, 0.3, 5.0] {
            let c = thermal_coefficients(&m, t, 1.0).unwrap();
            assert!(c.a > 0.0 && c.diff() > 0.0 && c.sum() > 0.0);
            let tr = adaptive_gauss_kronrod(|q| c.density(q, q), -30.0, 30.0, 1e-12, 0.0, 500).unwrap();
            assert!((tr.value - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn ohmic_gamma_and_eta() {
        let d = SpectralDensity::ohmic(0.7, 30.0, 0.0, 1.0).unwrap();
        let k0 = spectral_kernels(&d, 0.0).unwrap();
        assert!((k0.gamma - 0.7 * 30.0 / (2.0 * PI.sqrt())).abs() <= 1e-13);
        let integral = adaptive_gauss_kronrod(
            |s| spectral_kernels(&d, s).unwrap().gamma,
            -2.0,
            2.0,
            1e-12,
            0.0,
            500,
        )
        .unwrap();
        assert!((integral.value - 0.7).abs() <= 1e-8);
        let s = 0.031;
        let h = 1e-5;
        let fd = (spectral_kernels(&d, s + h).unwrap().gamma - spectral_kernels(&d, s - h).unwrap().gamma) / (2.0 * h);
        assert!((fd - spectral_kernels(&d, s).unwrap().eta).abs() <= 1e-6 * fd.abs());
    }

    #[test]
    fn ohmic_nu_limits() {
        let (mg, lam) = (0.5, 10.0);
        let cold = SpectralDensity::ohmic(mg, lam, 0.0, 1.0).unwrap();
        let nu0 = spectral_kernels(&cold, 0.0).unwrap().nu;
        assert!((nu0 / (mg * lam * lam / (2.0 * PI)) - 1.0).abs() <= 1e-8);

        // T >> hbar Lambda: nu -> (2T/hbar) gamma
        let hot = SpectralDensity::ohmic(mg, lam, 1e4, 1.0).unwrap();
        for s in [0.0, 0.05, 0.1] {
            let k = spectral_kernels(&hot, s).unwrap();
            assert!((k.nu / (2e4 * k.gamma) - 1.0).abs() <= 1e-3, "s = {s}");
        }
    }

    #[test]
    fn discrete_spectral_kernels_match_mode_sums() {
        let bath = bath3(0.4);
        let d = SpectralDensity::Discrete(bath.clone());
        for s in [0.0, 0.3, -1.7, 4.0] {
            let k = spectral_kernels(&d, s).unwrap();
            assert_eq!(k.eta, eta_kernel(s, &bath));
            assert_eq!(k.nu, nu_kernel(s, &bath));
            let oracle: f64 = bath
                .modes
                .iter()
                .map(|m| m.coupling.powi(2) / (2.0 * m.mass * m.omega.powi(2)) * (m.omega * s).cos())
                .sum();
            assert!((k.gamma - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn propagator_cases() {
        let m = BathMode::new(1.2, 1.0, 0.3).unwrap();
        let zero = DiscretizedPath::constant(PI / 2.0, 64, 0.0).unwrap();
        let p = propagator_coefficients(&zero, &m).unwrap();
        assert_eq!((p.c, p.d, p.f), (0.0, 0.0, 0.0));
        assert!(p.a.abs() <= 1e-15);
        assert!((p.b + 1.2).abs() <= 1e-15);

        let resonant = DiscretizedPath::constant(PI, 64, 1.0).unwrap();
        assert!(matches!(propagator_coefficients(&resonant, &m), Err(Error::ResonantHorizon { .. })));
    }

    #[test]
    fn propagator_constant_path_converges() {
        let m = BathMode::new(1.0, 1.7, 0.6).unwrap();
        let (tau, x0): (f64, f64) = (1.3, 0.8);
        let exact = 0.6 * x0 * (1.0 - (1.7 * tau).cos()) / (1.7 * (1.7 * tau).sin());
        let err = |n: usize| {
            let x = DiscretizedPath::constant(tau, n, x0).unwrap();
            (propagator_coefficients(&x, &m).unwrap().d - exact).abs()
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 <= 1e-3);
        assert!(((e1 / e2).log2() - 2.0).abs() <= 0.1);
    }

    #[test]
    fn influence_phase_vanishes_on_diagonal() {
        let bath = bath3(0.3);
        let x = DiscretizedPath::from_fn(2.0, 50, |t| (1.3 * t).sin()).unwrap();
        assert_eq!(influence_phase(&x, &x, &bath).unwrap(), Complex64::new(0.0, 0.0));
        let y = DiscretizedPath::from_fn(2.0, 40, |t| t).unwrap();
        assert!(influence_phase(&x, &y, &bath).is_err());
    }

    #[test]
    fn noise_form_is_positive() {
        let bath = bath3(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = DiscretizedPath::new(3.0, (0..=40).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let y = DiscretizedPath::new(3.0, (0..=40).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            assert!(influence_phase(&x, &y, &bath).unwrap().im >= -1e-12);
        }
    }

    #[test]
    fn influence_phase_is_second_order() {
        let bath = bath3(0.6);
        let w = |n: usize| {
            let x = DiscretizedPath::from_fn(2.5, n, |t| (0.9 * t).sin() + 0.2 * t).unwrap();
            let y = DiscretizedPath::from_fn(2.5, n, |t| (1.4 * t).cos() * 0.5).unwrap();
            influence_phase(&x, &y, &bath).unwrap()
        };
        let (w1, w2, w3) = (w(32), w(64), w(128));
        let order_re = ((w1.re - w2.re) / (w2.re - w3.re)).log2();
        let order_im = ((w1.im - w2.im) / (w2.im - w3.im)).log2();
        assert!((order_re - 2.0).abs() <= 0.1, "re order {order_re}");
        assert!((order_im - 2.0).abs() <= 0.1, "im order {order_im}");
    }

    #[test]
    fn local_noise_matches_one_dimensional_trapezoid() {
        let x = DiscretizedPath::from_fn(1.0, 200, |t| t * t).unwrap();
        let y = DiscretizedPath::from_fn(1.0, 200, |t| 0.5 * t).unwrap();
        let kappa = fokker_planck_strength(0.3, 40.0, 1.0);
        let h = x.step();
        let oracle: f64 = (0..=200)
            .map(|k| {
                let t = k as f64 * h;
                let w = if k == 0 || k == 200 { 0.5 * h } else { h };
                w * (t * t - 0.5 * t).powi(2)
            })
            .sum();
        assert!((im_w_local(&x, &y, kappa).unwrap() - 0.3 * 40.0 * oracle).abs() <= 1e-10);
    }

    #[test]
    fn resonance_free_coth_helpers() {
        assert_eq!(coth(f64::INFINITY), 1.0);
        assert_eq!(csch(f64::INFINITY), 0.0);
        assert!((coth(30.0) - 1.0).abs() <= 1e-15);
        assert!((coth(0.5) - 1.0 / 0.5f64.tanh()).abs() <= 1e-15);
        assert_eq!(half_coth(1.0, 0.0, 1.0), 1.0);
    }
}
