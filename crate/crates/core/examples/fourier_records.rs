//! What an oscillator bath records about a path: the Fourier modes X_s, X_c,
//! the noise functional as a mode sum, and when a single oscillator suffices.

use histlab::kernels::{influence_phase, BathMode, OscillatorBath};
use histlab::records::{
    classical_response, decoherence_condition, fourier_modes_all, frequency_ladder, im_w_fourier, random_smooth_path,
    DEFAULT_DECOHERENCE_THRESHOLD,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> histlab::Result<()> {
    let tau = 2.0;
    let bath = OscillatorBath::new(frequency_ladder(tau, 6, 1.0, 0.8)?, 0.4, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_smooth_path(&mut rng, tau, 256, 1.0)?;
    let y = random_smooth_path(&mut rng, tau, 256, 1.0)?;

    let (fx, fy) = (fourier_modes_all(&x, &bath), fourier_modes_all(&y, &bath));
    println!("{:>4} {:>8} {:>10} {:>10} {:>10} {:>10}", "n", "omega", "X_s", "X_c", "q(tau)", "p(tau)");
    for (n, (m, f)) in bath.modes.iter().zip(&fx).enumerate() {
        let (q, p) = classical_response(&x, m, 0.0, 0.0);
        println!("{:>4} {:>8.4} {:>10.5} {:>10.5} {:>10.5} {:>10.5}", n + 1, m.omega, f.x_s, f.x_c, q, p);
    }
    let direct = influence_phase(&x, &y, &bath)?.im;
    let modes = im_w_fourier(&fx, &fy, &bath)?;
    println!("\nIm W double integral {direct:.12}\nIm W mode sum        {modes:.12}");

    let single = BathMode::new(1.0, 1.5, 0.5)?;
    for delta in [1.0, 5.0, 7.75, 10.0] {
        let c = decoherence_condition(&single, 0.0, delta, 1.0, DEFAULT_DECOHERENCE_THRESHOLD)?;
        println!(
            "one oscillator, T = 0, width {delta:>5}: exponent {:>7.3} suppression {:.3e} decoherent {}",
            c.exponent, c.adjacent_suppression, c.satisfied
        );
    }
    Ok(())
}
