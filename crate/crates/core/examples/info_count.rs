//! Number of distinguishable histories against number of environment states.

use histlab::kernels::BathMode;
use histlab::records::{history_count, info_counts, HIGH_T_NOTE};

fn main() -> histlab::Result<()> {
    let mode = BathMode::new(1.0, 2.0, 0.7)?;
    let (l, tau) = (1.0, 3.0);
    println!("{:>8} {:>12} {:>12} {:>10} {:>10} {:>10}", "T", "N_d_max", "N_env", "ratio", "exp(S)", "2T/hw");
    for t in [0.0, 0.2, 1.0, 5.0, 50.0, 2000.0] {
        let c = info_counts(&mode, t, l, tau, 1.0)?;
        println!(
            "{t:>8} {:>12.4} {:>12.4} {:>10.4} {:>10.4} {:>10.4}",
            c.n_d_max, c.n_env, c.ratio, c.exp_entropy, c.high_t_ratio
        );
    }
    println!("\nhistories per mode with cell width 0.1: {}", history_count(l, tau, 0.1));
    println!("{HIGH_T_NOTE}");
    Ok(())
}
