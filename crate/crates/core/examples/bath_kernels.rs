//! Noise and dissipation kernels of an ohmic bath and of a few discrete modes,
//! and the influence phase W[x, y] of two paths.

use histlab::kernels::{
    fokker_planck_strength, im_w_local, influence_phase_spectral, kernel_table, BathMode, DiscretizedPath,
    OscillatorBath, SpectralDensity,
};

fn main() -> histlab::Result<()> {
    let ohmic = SpectralDensity::ohmic(1.0, 20.0, 5.0, 1.0)?;
    let lags: Vec<f64> = (0..6).map(|k| 0.05 * k as f64).collect();
    println!("{:>6} {:>12} {:>12} {:>12}", "s", "eta", "nu", "gamma");
    for k in kernel_table(&ohmic, &lags)? {
        println!("{:>6.2} {:>12.5} {:>12.5} {:>12.5}", k.s, k.eta, k.nu, k.gamma);
    }

    let bath = OscillatorBath::new(
        vec![BathMode::new(1.0, 0.8, 0.3)?, BathMode::new(1.0, 1.9, 0.5)?, BathMode::new(2.0, 3.3, 0.4)?],
        0.5,
        1.0,
    )?;
    let x = DiscretizedPath::from_fn(2.0, 200, |t| (1.2 * t).sin())?;
    let y = DiscretizedPath::from_fn(2.0, 200, |t| 0.4 * t)?;
    let w = influence_phase_spectral(&x, &y, &SpectralDensity::Discrete(bath))?;
    println!("\ndiscrete bath: Re W = {:.6}, Im W = {:.6}", w.re, w.im);

    let w_ohmic = influence_phase_spectral(&x, &y, &ohmic)?;
    let local = im_w_local(&x, &y, fokker_planck_strength(1.0, 5.0, 1.0))?;
    println!("ohmic bath:    Im W = {:.6}  (local white-noise form {:.6})", w_ohmic.im, local);
    Ok(())
}
