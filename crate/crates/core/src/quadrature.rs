//! Uniform-grid trapezoid rules and adaptive Gauss-Kronrod integration.

use crate::error::{Error, Result};

/// Trapezoid weights for `n + 1` knots spaced by `h`.
pub fn trapezoid_weights(knots: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; knots];
    if let Some(first) = w.first_mut() {
        *first = 0.5 * h;
    }
    if knots > 1 {
        w[knots - 1] = 0.5 * h;
    }
    w
}

/// `sum_k w_k f_k`.
pub fn trapezoid(samples: &[f64], h: f64) -> f64 {
    match samples {
        [] | [_] => 0.0,
        [first, inner @ .., last] => h * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Ordered double integral over `0 <= s' <= s <= t` of `f(i, j)`.
///
/// Off-diagonal knots carry `w_i w_j`, diagonal knots `w_i^2 / 2`, so that
/// `nested(f) + nested(f^T)` equals the full-square trapezoid exactly.
pub fn nested_trapezoid(knots: usize, h: f64, f: impl Fn(usize, usize) -> f64) -> f64 {
    let w = trapezoid_weights(knots, h);
    let mut total = 0.0;
    for i in 0..knots {
        let mut row = 0.5 * w[i] * f(i, i);
        for (wj, j) in w[..i].iter().zip(0..) {
            row += wj * f(i, j);
        }
        total += w[i] * row;
    }
    total
}

/// Full-square double trapezoid of `f(i, j)` over `[0, t]^2`.
pub fn square_trapezoid(knots: usize, h: f64, f: impl Fn(usize, usize) -> f64) -> f64 {
    let w = trapezoid_weights(knots, h);
    let mut total = 0.0;
    for i in 0..knots {
        let mut row = 0.0;
        for (wj, j) in w[..knots].iter().zip(0..) {
            row += wj * f(i, j);
        }
        total += w[i] * row;
    }
    total
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive G7-K15 on `[a, b]`, bisecting the worst interval.
pub fn adaptive_gauss_kronrod(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("integration limits must be finite"));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut intervals = vec![{
        let (v, e) = gk15(&f, a, b);
        (a, b, v, e)
    }];
    let mut evaluations = 15;
    loop {
        let value: f64 = intervals.iter().map(|s| s.2).sum();
        let error: f64 = intervals.iter().map(|s| s.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral {
                value,
                error,
                evaluations,
            });
        }
        if intervals.len() >= max_intervals {
            return Err(Error::QuadratureNonConvergence {
                residual: error,
                evaluations,
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("at least one interval");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        evaluations += 30;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}
