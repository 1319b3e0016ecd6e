//! Histories of a conserved quantity decohere; a non-commuting family does not.

use histlab::hilbert::{hermitian_eigen, ComplexOperator, ProjectorFamily};
use histlab::histories::{decoherence_defect, decoherence_matrix_pure, find_records, probabilities, HistorySpec};
use histlab::hilbert::PureState;
use num_complex::Complex64;

fn main() -> histlab::Result<()> {
    let n = 4;
    let rows: Vec<Complex64> = [2.0, 0.4, 0.0, 0.1, 0.4, 1.0, 0.3, 0.0, 0.0, 0.3, -0.5, 0.6, 0.1, 0.0, 0.6, -1.2]
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let h = ComplexOperator::from_rows(n, &rows)?;
    let (energies, basis) = hermitian_eigen(&h)?;
    println!("energies {energies:.3?}");

    let psi = PureState::normalized(histlab::histories::real_ket(&[1.0, 0.5, -0.3, 0.8]))?;
    let groups = [vec![0, 1], vec![2, 3]];
    let labels = vec!["low".to_string(), "high".to_string()];
    let times = vec![0.0, 0.7, 1.5];

    let conserved = ProjectorFamily::from_basis_groups(&basis, &groups, labels.clone())?;
    let spec = HistorySpec::new(h.clone(), times.clone(), vec![conserved; 3], 1.0)?;
    let d = decoherence_matrix_pure(&spec, &psi)?;
    println!("energy histories: defect {:.2e}", decoherence_defect(&d));
    for (alpha, p) in probabilities(&d).values {
        println!("  {} p = {p:.6}", spec.label_of(&alpha));
    }
    let records = find_records(&spec, &psi, 1e-10)?;
    println!("  {} record projectors found", records.len());

    let position = ProjectorFamily::from_index_groups(n, &groups, labels)?;
    let spec = HistorySpec::new(h, times, vec![position; 3], 1.0)?;
    let d = decoherence_matrix_pure(&spec, &psi)?;
    println!("site histories: defect {:.2e}", decoherence_defect(&d));
    Ok(())
}
