#![allow(dead_code)]

use histlab::hilbert::{hermitian_eigen, CMatrix, ComplexOperator, DensityOperator, Ket, ProjectorFamily, PureState};
use histlab::kernels::BathMode;
use num_complex::Complex64;
use rand::Rng;

pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn hermitian(n: usize, raw: &[f64]) -> ComplexOperator {
    let m = CMatrix::from_fn(n, n, |i, j| cx(raw[2 * (i * n + j)], raw[2 * (i * n + j) + 1]));
    ComplexOperator::new(m).unwrap().hermitian_part()
}

pub fn density(n: usize, raw: &[f64]) -> DensityOperator {
    let a = CMatrix::from_fn(n, n, |i, j| cx(raw[2 * (i * n + j)], raw[2 * (i * n + j) + 1]));
    let m = &a * a.adjoint() + CMatrix::identity(n, n) * cx(1e-3, 0.0);
    let tr = m.trace();
    DensityOperator::new(ComplexOperator::new(m / tr).unwrap().hermitian_part()).unwrap()
}

pub fn ket(n: usize, raw: &[f64]) -> PureState {
    PureState::normalized(Ket::from_fn(n, |i, _| cx(raw[2 * i], raw[2 * i + 1]))).unwrap()
}

pub fn raw_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Eigenprojector groups of a random Hermitian matrix.
pub fn eigen_family(h: &ComplexOperator, groups: &[Vec<usize>]) -> ProjectorFamily {
    let (_, vecs) = hermitian_eigen(h).unwrap();
    let labels = (0..groups.len()).map(|k| format!("g{k}")).collect();
    ProjectorFamily::from_basis_groups(&vecs, groups, labels).unwrap()
}

/// Oscillator eigenfunctions `phi_0..phi_{n-1}` at `q` by the three-term recursion.
pub fn hermite_functions(n: usize, mass: f64, omega: f64, hbar: f64, q: f64) -> Vec<f64> {
    let k = mass * omega / hbar;
    let xi = q * k.sqrt();
    let mut out = Vec::with_capacity(n);
    out.push((k / std::f64::consts::PI).powf(0.25) * (-0.5 * xi * xi).exp());
    if n > 1 {
        out.push(2f64.sqrt() * xi * out[0]);
    }
    for j in 1..n.saturating_sub(1) {
        let next = (2.0 / (j as f64 + 1.0)).sqrt() * xi * out[j] - (j as f64 / (j as f64 + 1.0)).sqrt() * out[j - 1];
        out.push(next);
    }
    out
}

/// `<q| D(q_x, p_x) rho_T D(q_y, p_y)^dag |r>` summed over `states` Fock levels,
/// with `<q|D(q0, p0)|n> = exp(i p0 q / hbar - i p0 q0 / 2 hbar) phi_n(q - q0)`.
#[allow(clippy::too_many_arguments)]
pub fn displaced_thermal_element(
    mode: &BathMode,
    temperature: f64,
    hbar: f64,
    states: usize,
    left: (f64, f64),
    right: (f64, f64),
    q: f64,
    r: f64,
) -> Complex64 {
    let x = hbar * mode.omega / temperature;
    let z = -(-x).exp_m1();
    let fq = hermite_functions(states, mode.mass, mode.omega, hbar, q - left.0);
    let fr = hermite_functions(states, mode.mass, mode.omega, hbar, r - right.0);
    let sum: f64 = (0..states).map(|n| z * (-(n as f64) * x).exp() * fq[n] * fr[n]).sum();
    let phase = left.1 * q / hbar - 0.5 * left.1 * left.0 / hbar - right.1 * r / hbar + 0.5 * right.1 * right.0 / hbar;
    Complex64::from_polar(sum, phase)
}
