//! Particle on a 64-point ring kicked by a two-state detector.
//!
//! Prints the decoherence defect, the joint table p(alpha1, alpha2, beta) and
//! how the record quality drops when the detector starts out mixed.

use histlab::histories::decoherence_defect;
use histlab::two_state::{
    build_model, detection_probability, gaussian_packet, joint_prob_mixed, model_decoherence, record_conditionals,
    TwoStateModelConfig,
};

fn main() -> histlab::Result<()> {
    let cfg = TwoStateModelConfig::default();
    let psi = gaussian_packet(&cfg, 0.5, 0.125, 0.0)?;
    let model = build_model(&cfg)?;

    let d = model_decoherence(&model, &psi)?;
    println!("decoherence defect: {:.3e}", decoherence_defect(&d));
    println!("p(detector fired):  {:.12}", detection_probability(&psi, &cfg)?);

    println!("\nalpha1 alpha2 beta probability");
    for e in joint_prob_mixed(&model, &psi)? {
        println!("{:>6} {:>6} {:>4} {:.6}", e.alpha1, e.alpha2, e.beta, e.probability);
    }

    for a in [1.0, 0.9, 0.7, 0.5] {
        let mixed = TwoStateModelConfig {
            weights: [a, 1.0 - a],
            ..cfg.clone()
        };
        let model = build_model(&mixed)?;
        let table = joint_prob_mixed(&model, &psi)?;
        let defect = decoherence_defect(&model_decoherence(&model, &psi)?);
        let best: Vec<String> = record_conditionals(&table)
            .iter()
            .map(|(label, [p0, p1])| format!("{label}: {:.3}", p0.max(*p1)))
            .collect();
        println!("weights ({a:.1}, {:.1}) defect {defect:.1e}  best record {}", 1.0 - a, best.join(", "));
    }
    Ok(())
}
