//! Fourier-mode functionals of a trajectory and the environment records they leave.
//!
//! For a mode of frequency `omega` over the horizon `tau`,
//! `X_s = int x(t) sin(omega (tau - t)) dt` and `X_c` likewise with cosine.
//! The mode's final position and momentum are displaced by `-(c / m omega) X_s`
//! and `-c X_c`, which is what a record projector onto that mode can resolve.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::kernels::{
    half_coth, propagator_coefficients, thermal_coefficients, thermal_ratio, BathMode, DiscretizedPath,
    OscillatorBath, PropagatorCoefficients, ThermalCoefficients,
};
use crate::quadrature::trapezoid;

/// Default value of the suppression exponent regarded as "much larger than one".
pub const DEFAULT_DECOHERENCE_THRESHOLD: f64 = 10.0;

/// Explanation attached to width reports: the closed forms printed next to the
/// `2A +- B` derivation drop the `(hbar / m omega)^{1/2}` prefactor and swap
/// `tanh` and `coth` exponents.
pub const WIDTH_DISCREPANCY_NOTE: &str = "widths follow (2A+B)^(-1/2) and (2A-B)^(-1/2); the printed closed forms \
     tanh^(-1/2) and coth^(-1/2) omit the (hbar/m omega)^(1/2) prefactor and invert the exponent";

/// Explanation attached to information counts at high temperature.
pub const HIGH_T_NOTE: &str = "coth(hbar omega/2T) tends to 2T/(hbar omega); the entropy estimate exp(S) tends to \
     e T/(hbar omega), so the order-of-magnitude statement kT/(hbar omega) holds up to a factor of 2 (or e/2)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourierModes {
    pub x_s: f64,
    pub x_c: f64,
}

impl FourierModes {
    pub fn sub(&self, other: &FourierModes) -> FourierModes {
        FourierModes {
            x_s: self.x_s - other.x_s,
            x_c: self.x_c - other.x_c,
        }
    }
}

/// `(X_s, X_c)` by trapezoid on the path grid.
pub fn fourier_modes(x: &DiscretizedPath, mode: &BathMode) -> FourierModes {
    let tau = x.horizon();
    let w = mode.omega;
    FourierModes {
        x_s: x.integrate_against(|t| (w * (tau - t)).sin()),
        x_c: x.integrate_against(|t| (w * (tau - t)).cos()),
    }
}

pub fn fourier_modes_all(x: &DiscretizedPath, bath: &OscillatorBath) -> Vec<FourierModes> {
    bath.modes.iter().map(|m| fourier_modes(x, m)).collect()
}

/// `Im W = sum c^2/(4 m omega) coth(hbar omega / 2T) [(X_s - Y_s)^2 + (X_c - Y_c)^2]`.
pub fn im_w_fourier(modes_x: &[FourierModes], modes_y: &[FourierModes], bath: &OscillatorBath) -> Result<f64> {
    if modes_x.len() != bath.modes.len() || modes_y.len() != bath.modes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} and {} mode entries for a {}-mode bath",
            modes_x.len(),
            modes_y.len(),
            bath.modes.len()
        )));
    }
    Ok(bath
        .modes
        .iter()
        .zip(modes_x.iter().zip(modes_y))
        .map(|(m, (a, b))| {
            let d = a.sub(b);
            0.5 * m.strength() * bath.half_coth(m) * (d.x_s * d.x_s + d.x_c * d.x_c)
        })
        .sum())
}

/// Cell widths and centers of a Fourier-mode coarse graining, one entry per mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseGraining {
    pub widths: Vec<f64>,
    pub centers_s: Vec<f64>,
    pub centers_c: Vec<f64>,
}

impl CoarseGraining {
    pub fn new(widths: Vec<f64>, centers_s: Vec<f64>, centers_c: Vec<f64>) -> Result<Self> {
        if widths.len() != centers_s.len() || widths.len() != centers_c.len() {
            return Err(Error::invalid("widths and cell centers need one entry per mode"));
        }
        if let Some(w) = widths.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!("coarse-graining widths must be positive, got {w}")));
        }
        Ok(Self {
            widths,
            centers_s,
            centers_c,
        })
    }

    /// Cells centered on zero.
    pub fn centered(widths: Vec<f64>) -> Result<Self> {
        let n = widths.len();
        Self::new(widths, vec![0.0; n], vec![0.0; n])
    }

    /// Integer cell indices `(k_s, k_c)` of each mode, cells being `[center + (k - 1/2) w, center + (k + 1/2) w)`.
    pub fn cell_of(&self, modes: &[FourierModes]) -> Vec<(i64, i64)> {
        modes
            .iter()
            .enumerate()
            .map(|(n, m)| {
                let w = self.widths[n];
                let ks = ((m.x_s - self.centers_s[n]) / w + 0.5).floor() as i64;
                let kc = ((m.x_c - self.centers_c[n]) / w + 0.5).floor() as i64;
                (ks, kc)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoherenceCondition {
    pub exponent: f64,
    pub threshold: f64,
    pub satisfied: bool,
    /// `exp(-exponent / 4)`: `exp(-Im W / hbar)` between neighbouring cells.
    pub adjacent_suppression: f64,
}

/// `Delta^2 (c^2 / m hbar omega) coth(hbar omega / 2T)` against a threshold.
pub fn decoherence_condition(mode: &BathMode, temperature: f64, delta: f64, hbar: f64, threshold: f64) -> Result<DecoherenceCondition> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("width must be nonnegative, got {delta}")));
    }
    thermal_coefficients(mode, temperature, hbar)?;
    let exponent = delta * delta * mode.coupling * mode.coupling / (mode.mass * hbar * mode.omega)
        * half_coth(mode.omega, temperature, hbar);
    Ok(DecoherenceCondition {
        exponent,
        threshold,
        satisfied: exponent >= threshold,
        adjacent_suppression: (-0.25 * exponent).exp(),
    })
}

/// Final `(q, p)` of a mode driven by the path, from `(q0, p0)`.
pub fn classical_response(x: &DiscretizedPath, mode: &BathMode, q0: f64, p0: f64) -> (f64, f64) {
    let fm = fourier_modes(x, mode);
    let (m, w, c) = (mode.mass, mode.omega, mode.coupling);
    let wt = w * x.horizon();
    (
        q0 * wt.cos() + p0 / (m * w) * wt.sin() - c / (m * w) * fm.x_s,
        p0 * wt.cos() - m * w * q0 * wt.sin() - c * fm.x_c,
    )
}

/// `(q, p)` at every knot, each from a trapezoid over the elapsed part of the grid.
pub fn classical_trajectory(x: &DiscretizedPath, mode: &BathMode, q0: f64, p0: f64) -> Vec<(f64, f64)> {
    let (m, w, c) = (mode.mass, mode.omega, mode.coupling);
    let h = x.step();
    let xs = x.samples();
    (0..xs.len())
        .map(|k| {
            let t = k as f64 * h;
            let sin_part: Vec<f64> = (0..=k).map(|j| xs[j] * (w * (t - j as f64 * h)).sin()).collect();
            let cos_part: Vec<f64> = (0..=k).map(|j| xs[j] * (w * (t - j as f64 * h)).cos()).collect();
            let (xs_k, xc_k) = (trapezoid(&sin_part, h), trapezoid(&cos_part, h));
            (
                q0 * (w * t).cos() + p0 / (m * w) * (w * t).sin() - c / (m * w) * xs_k,
                p0 * (w * t).cos() - m * w * q0 * (w * t).sin() - c * xc_k,
            )
        })
        .collect()
}

/// Max over interior knots of `|m q'' + m omega^2 q + c x|` with a central second difference.
pub fn equation_of_motion_residual(x: &DiscretizedPath, mode: &BathMode, q0: f64, p0: f64) -> f64 {
    let traj = classical_trajectory(x, mode, q0, p0);
    let h = x.step();
    let (m, w, c) = (mode.mass, mode.omega, mode.coupling);
    (1..traj.len() - 1)
        .map(|k| {
            let acc = (traj[k + 1].0 - 2.0 * traj[k].0 + traj[k - 1].0) / (h * h);
            (m * acc + m * w * w * traj[k].0 + c * x.samples()[k]).abs()
        })
        .fold(0.0, f64::max)
}

/// Generalized influence functional of one mode with open final ends `(q'', r'')`.
///
/// Built once per path pair; [`GeneralizedInfluence::value`] then evaluates
/// the normalized thermal Gaussian, the momentum phase and the path phase.
#[derive(Debug, Clone, Copy)]
pub struct GeneralizedInfluence {
    pub thermal: ThermalCoefficients,
    pub modes_x: FourierModes,
    pub modes_y: FourierModes,
    pub coeff_x: PropagatorCoefficients,
    pub coeff_y: PropagatorCoefficients,
    mode: BathMode,
    hbar: f64,
    horizon: f64,
}

impl GeneralizedInfluence {
    pub fn new(x: &DiscretizedPath, y: &DiscretizedPath, mode: &BathMode, temperature: f64, hbar: f64) -> Result<Self> {
        if !x.same_grid(y) {
            return Err(Error::DimensionMismatch("paths on different grids".into()));
        }
        let coeff_x = propagator_coefficients(x, mode)?;
        let coeff_y = propagator_coefficients(y, mode)?;
        Ok(Self {
            thermal: thermal_coefficients(mode, temperature, hbar)?,
            modes_x: fourier_modes(x, mode),
            modes_y: fourier_modes(y, mode),
            coeff_x,
            coeff_y,
            mode: *mode,
            hbar,
            horizon: x.horizon(),
        })
    }

    /// `X~_s = (c / m omega) X_s` for the two paths.
    pub fn shifted(&self) -> (f64, f64) {
        let k = self.mode.coupling / (self.mode.mass * self.mode.omega);
        (k * self.modes_x.x_s, k * self.modes_y.x_s)
    }

    /// Path-dependent phase `-(sin cos / 2 hbar m omega)(d_x^2 - d_y^2) - (f_x - f_y) / hbar`.
    pub fn path_phase(&self) -> f64 {
        let wt = self.mode.omega * self.horizon;
        let (dx, dy) = (self.coeff_x.d, self.coeff_y.d);
        -(wt.sin() * wt.cos()) / (2.0 * self.hbar * self.mode.mass * self.mode.omega) * (dx * dx - dy * dy)
            - (self.coeff_x.f - self.coeff_y.f) / self.hbar
    }

    pub fn value(&self, q: f64, r: f64) -> Complex64 {
        let (xt, yt) = self.shifted();
        let ThermalCoefficients { a, b, .. } = self.thermal;
        let (u, v) = (q + xt, r + yt);
        let gauss = -a * u * u - a * v * v + b * u * v;
        let c = self.mode.coupling;
        let phase = -c * (q * self.modes_x.x_c - r * self.modes_y.x_c) / self.hbar + self.path_phase();
        Complex64::from_polar(self.thermal.normalization() * gauss.exp(), phase)
    }

    /// `int dq F(q, q)` in closed form.
    pub fn diagonal_integral(&self) -> Complex64 {
        let (xt, yt) = self.shifted();
        let center = 0.5 * (xt + yt);
        let delta = xt - yt;
        let k = self.mode.coupling * (self.modes_x.x_c - self.modes_y.x_c) / self.hbar;
        let decay = -0.25 * self.thermal.sum() * delta * delta - k * k / (4.0 * self.thermal.diff());
        Complex64::from_polar(decay.exp(), k * center + self.path_phase())
    }

    /// Diagonal Gaussian in center/difference form:
    /// `-(2A - B)(q + (X~ + Y~)/2)^2 - (2A + B)(X~ - Y~)^2 / 4`.
    pub fn diagonal_exponent_split(&self, q: f64) -> f64 {
        let (xt, yt) = self.shifted();
        let center = q + 0.5 * (xt + yt);
        -self.thermal.diff() * center * center - 0.25 * self.thermal.sum() * (xt - yt).powi(2)
    }
}

/// Convenience form of [`GeneralizedInfluence::value`].
pub fn generalized_influence(
    x: &DiscretizedPath,
    y: &DiscretizedPath,
    mode: &BathMode,
    temperature: f64,
    hbar: f64,
    q_pp: f64,
    r_pp: f64,
) -> Result<Complex64> {
    Ok(GeneralizedInfluence::new(x, y, mode, temperature, hbar)?.value(q_pp, r_pp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianWidths {
    /// `(2A + B)^{-1/2}`.
    pub history_width: f64,
    /// `(2A - B)^{-1/2}`.
    pub record_width: f64,
    /// `tanh(hbar omega / 2T)^{-1/2}` as printed.
    pub printed_history_width: f64,
    /// `coth(hbar omega / 2T)^{-1/2}` as printed.
    pub printed_record_width: f64,
}

pub fn gaussian_widths(mode: &BathMode, temperature: f64, hbar: f64) -> Result<GaussianWidths> {
    let th = thermal_coefficients(mode, temperature, hbar)?;
    let ch = half_coth(mode.omega, temperature, hbar);
    Ok(GaussianWidths {
        history_width: th.sum().powf(-0.5),
        record_width: th.diff().powf(-0.5),
        printed_history_width: ch.sqrt(),
        printed_record_width: ch.powf(-0.5),
    })
}

/// Final-time record projector on one environment mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RecordWindow {
    Position { lo: f64, hi: f64 },
    Momentum { lo: f64, hi: f64 },
    /// Rectangle in phase space, weighed with the Wigner function.
    PhaseSpace { q_lo: f64, q_hi: f64, p_lo: f64, p_hi: f64 },
}

/// Mass of `N(mean, sd^2)` inside `[lo, hi]`, using `erfc` on the tail side.
pub fn gaussian_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let s = std::f64::consts::SQRT_2 * sd;
    let (a, b) = ((lo - mean) / s, (hi - mean) / s);
    if a >= 0.0 {
        0.5 * (erfc(a) - erfc(b))
    } else if b <= 0.0 {
        0.5 * (erfc(-b) - erfc(-a))
    } else {
        0.5 * (erf(b) - erf(a))
    }
}

/// Marginal mean and standard deviation of the displaced thermal state, `((mu_q, sd_q), (mu_p, sd_p))`.
pub fn displaced_marginals(mode: &BathMode, temperature: f64, hbar: f64, x_s: f64, x_c: f64) -> ((f64, f64), (f64, f64)) {
    let (m, w, c) = (mode.mass, mode.omega, mode.coupling);
    let ch = half_coth(w, temperature, hbar);
    let sd_q = (hbar / (2.0 * m * w) * ch).sqrt();
    let sd_p = (m * hbar * w / 2.0 * ch).sqrt();
    ((-c / (m * w) * x_s, sd_q), (-c * x_c, sd_p))
}

/// `Tr(R U rho U^dag)` for the thermal state displaced by `(-X~_s, -c X_c)`.
pub fn record_trace_factor(window: &RecordWindow, mode: &BathMode, temperature: f64, hbar: f64, x_s: f64, x_c: f64) -> Result<f64> {
    thermal_coefficients(mode, temperature, hbar)?;
    let ((mq, sq), (mp, sp)) = displaced_marginals(mode, temperature, hbar, x_s, x_c);
    let value = match *window {
        RecordWindow::Position { lo, hi } => gaussian_mass(mq, sq, lo, hi),
        RecordWindow::Momentum { lo, hi } => gaussian_mass(mp, sp, lo, hi),
        RecordWindow::PhaseSpace { q_lo, q_hi, p_lo, p_hi } => {
            gaussian_mass(mq, sq, q_lo, q_hi) * gaussian_mass(mp, sp, p_lo, p_hi)
        }
    };
    Ok(value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoCount {
    /// Upper bound on the number of decoherent histories, `N_env coth(hbar omega / 2T)`.
    pub n_d_max: f64,
    /// Distinct environment states `c^2 L^2 tau^2 / (m hbar omega)`.
    pub n_env: f64,
    /// `N_d_max / N_env = coth(hbar omega / 2T)`.
    pub ratio: f64,
    /// Von Neumann entropy of the thermal mode.
    pub entropy: f64,
    pub exp_entropy: f64,
    /// `2T / (hbar omega)`, the high-temperature limit of the ratio (infinite-free: 0 at T = 0).
    pub high_t_ratio: f64,
}

/// Thermal oscillator entropy `x/(e^x - 1) - ln(1 - e^{-x})` with `x = hbar omega / T`.
pub fn thermal_entropy(x: f64) -> f64 {
    if x.is_infinite() || x > 700.0 {
        return 0.0;
    }
    x / x.exp_m1() - (-(-x).exp_m1()).ln()
}

pub fn info_counts(mode: &BathMode, temperature: f64, box_length: f64, tau: f64, hbar: f64) -> Result<InfoCount> {
    if !(box_length > 0.0 && tau > 0.0) {
        return Err(Error::invalid(format!("L and tau must be positive, got {box_length} and {tau}")));
    }
    thermal_coefficients(mode, temperature, hbar)?;
    let (m, w, c) = (mode.mass, mode.omega, mode.coupling);
    let n_env = c * c * box_length * box_length * tau * tau / (m * hbar * w);
    let ratio = half_coth(w, temperature, hbar);
    let entropy = thermal_entropy(thermal_ratio(w, temperature, hbar));
    Ok(InfoCount {
        n_d_max: ratio * n_env,
        n_env,
        ratio,
        entropy,
        exp_entropy: entropy.exp(),
        high_t_ratio: 2.0 * temperature / (hbar * w),
    })
}

/// `(L tau / Delta)^2` histories per mode for cells of width `Delta` in both `X_s` and `X_c`.
pub fn history_count(box_length: f64, tau: f64, delta: f64) -> f64 {
    (box_length * tau / delta).powi(2)
}

/// `sum M/2 ((x_{k+1} - x_k)/h)^2 h - trapezoid(V(x))`.
pub fn system_action(x: &DiscretizedPath, mass: f64, potential: impl Fn(f64) -> f64) -> f64 {
    let h = x.step();
    let xs = x.samples();
    let kinetic: f64 = xs.windows(2).map(|p| 0.5 * mass * (p[1] - p[0]).powi(2) / h).sum();
    let v: Vec<f64> = xs.iter().map(|&q| potential(q)).collect();
    kinetic - trapezoid(&v, h)
}

/// Bath modes on the ladder `omega_n = n pi / tau`, where `{sin, cos}` span paths on `[0, tau]`.
///
/// Every ladder frequency is resonant for the propagator over `tau` itself.
pub fn frequency_ladder(tau: f64, count: usize, mass: f64, coupling: f64) -> Result<Vec<BathMode>> {
    (1..=count).map(|n| BathMode::new(mass, n as f64 * PI / tau, coupling)).collect()
}

/// Smooth random path: an offset, a linear drift and four damped Fourier terms.
pub fn random_smooth_path<R: Rng + ?Sized>(rng: &mut R, horizon: f64, intervals: usize, amplitude: f64) -> Result<DiscretizedPath> {
    let offset = amplitude * rng.random_range(-1.0..1.0);
    let drift = amplitude * rng.random_range(-1.0..1.0);
    let terms: Vec<(f64, f64, f64)> = (1..=4)
        .map(|k| {
            (
                k as f64,
                amplitude * rng.random_range(-1.0..1.0) / k as f64,
                amplitude * rng.random_range(-1.0..1.0) / k as f64,
            )
        })
        .collect();
    DiscretizedPath::from_fn(horizon, intervals, |t| {
        let u = t / horizon;
        offset
            + drift * u
            + terms
                .iter()
                .map(|&(k, s, c)| s * (k * PI * u).sin() + c * (k * PI * u).cos())
                .sum::<f64>()
    })
}
