//! A mixed state and its purification give the same decoherence matrix.

use histlab::hilbert::{partial_trace, purify, ComplexOperator, DensityOperator, ProjectorFamily};
use histlab::histories::{decoherence_matrix, HistorySpec};

fn main() -> histlab::Result<()> {
    let rho = DensityOperator::diagonal(&[0.5, 0.3, 0.2])?;
    let pure = purify(&rho);
    let back = partial_trace(DensityOperator::from_pure(&pure).operator(), &[3, 3], &[0])?;
    println!("|Tr_2 |psi><psi| - rho| = {:.2e}", back.max_deviation(rho.operator()));

    let h = ComplexOperator::from_rows(
        3,
        &[0.0, 1.0, 0.0, 1.0, 0.5, 0.3, 0.0, 0.3, -0.4].map(|v| num_complex::Complex64::new(v, 0.0)),
    )?;
    let fam = ProjectorFamily::from_index_groups(3, &[vec![0], vec![1, 2]], vec!["a".into(), "b".into()])?;
    let spec = HistorySpec::new(h, vec![0.0, 0.8, 1.9], vec![fam.clone(), fam.clone(), fam], 1.0)?;

    let d = decoherence_matrix(&spec, &rho)?;
    let big = decoherence_matrix(&spec.extend_with_identity(3), &DensityOperator::from_pure(&pure))?;
    let diff = (d.entries() - big.entries()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    println!("{} histories, max |D - D_purified| = {diff:.2e}", d.len());
    println!("decoherent at {:.0e}: {}", d.tolerance(), d.is_decoherent());
    Ok(())
}
