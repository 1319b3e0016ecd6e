//! Generalized influence functional with open final environment ends,
//! record widths and the probability that a position record reads correctly.

use histlab::kernels::{influence_phase, BathMode, OscillatorBath};
use histlab::records::{
    displaced_marginals, gaussian_widths, random_smooth_path, record_trace_factor, GeneralizedInfluence, RecordWindow,
    WIDTH_DISCREPANCY_NOTE,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> histlab::Result<()> {
    let mode = BathMode::new(1.0, 1.3, 2.0)?;
    let tau = 1.7;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_smooth_path(&mut rng, tau, 400, 1.0)?;
    let y = random_smooth_path(&mut rng, tau, 400, 1.0)?;

    for t in [0.0, 0.5, 5.0] {
        let g = GeneralizedInfluence::new(&x, &y, &mode, t, 1.0)?;
        let w = influence_phase(&x, &y, &OscillatorBath::single(mode, t, 1.0)?)?;
        let standard = (Complex64::i() * w).exp();
        let widths = gaussian_widths(&mode, t, 1.0)?;
        let ((mq, _), _) = displaced_marginals(&mode, t, 1.0, g.modes_x.x_s, g.modes_x.x_c);
        let window = RecordWindow::Position {
            lo: mq - 2.0 * widths.record_width,
            hi: mq + 2.0 * widths.record_width,
        };
        let own = record_trace_factor(&window, &mode, t, 1.0, g.modes_x.x_s, g.modes_x.x_c)?;
        let other = record_trace_factor(&window, &mode, t, 1.0, g.modes_y.x_s, g.modes_y.x_c)?;
        println!("T = {t}");
        println!("  |int F(q,q) dq - exp(iW)| = {:.2e}", (g.diagonal_integral() - standard).norm());
        println!("  widths: history {:.4} record {:.4}", widths.history_width, widths.record_width);
        println!("  record window around x's record: Tr = {own:.6} for x, {other:.6} for y");
    }
    println!("\nnote: {WIDTH_DISCREPANCY_NOTE}");
    Ok(())
}
