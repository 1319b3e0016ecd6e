use histlab::hilbert::{
    partial_trace, purify, tensor, CMatrix, ComplexOperator, DensityOperator, Ket, ProjectorFamily, PureState,
};
use histlab::histories::{
    decoherence_defect, decoherence_matrix, decoherence_matrix_pure, evolved_state, find_records,
    joint_probability, conditional_record_probability, probabilities, record_residual, DecoherenceMatrix,
    HistorySpec,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn hermitian(n: usize, raw: &[f64]) -> ComplexOperator {
    let m = CMatrix::from_fn(n, n, |i, j| cx(raw[2 * (i * n + j)], raw[2 * (i * n + j) + 1]));
    ComplexOperator::new(m).unwrap().hermitian_part()
}

fn density(n: usize, raw: &[f64]) -> DensityOperator {
    let a = CMatrix::from_fn(n, n, |i, j| cx(raw[2 * (i * n + j)], raw[2 * (i * n + j) + 1]));
    let m = &a * a.adjoint() + CMatrix::identity(n, n) * cx(1e-3, 0.0);
    let tr = m.trace();
    DensityOperator::new(ComplexOperator::new(m / tr).unwrap().hermitian_part()).unwrap()
}

fn ket(n: usize, raw: &[f64]) -> PureState {
    PureState::normalized(Ket::from_fn(n, |i, _| cx(raw[2 * i], raw[2 * i + 1]))).unwrap()
}

/// Projectors onto the eigenvectors of a random Hermitian matrix, grouped in two blocks.
fn random_family(n: usize, raw: &[f64], split: usize) -> ProjectorFamily {
    let h = hermitian(n, raw);
    let (_, vecs) = histlab::hilbert::hermitian_eigen(&h).unwrap();
    let split = split.clamp(1, n - 1);
    let groups = vec![(0..split).collect::<Vec<_>>(), (split..n).collect()];
    ProjectorFamily::from_basis_groups(&vecs, &groups, vec!["lo".into(), "hi".into()]).unwrap()
}

fn raw(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0..1.0f64, len)
}

fn cnot() -> ComplexOperator {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = cx(1.0, 0.0);
    m[(1, 1)] = cx(1.0, 0.0);
    m[(2, 3)] = cx(1.0, 0.0);
    m[(3, 2)] = cx(1.0, 0.0);
    ComplexOperator::new(m).unwrap()
}

/// System qubit measured in z, copied into an environment qubit, then evolved and measured again.
fn recorded_spec(h_raw: &[f64], f_raw: &[f64]) -> HistorySpec {
    let z = ProjectorFamily::from_index_groups(2, &[vec![0], vec![1]], vec!["0".into(), "1".into()]).unwrap();
    let second = random_family(2, f_raw, 1);
    let h = tensor(&hermitian(2, h_raw), &ComplexOperator::identity(2));
    HistorySpec::new(
        h,
        vec![0.0, 0.9],
        vec![z.extend_with_identity(2), second.extend_with_identity(2)],
        1.0,
    )
    .unwrap()
    .with_impulse(0, cnot())
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decoherence_matrix_invariants(h in raw(18), r in raw(18), f1 in raw(18), f2 in raw(18), t in 0.1..3.0f64) {
        let spec = HistorySpec::new(
            hermitian(3, &h),
            vec![0.0, t, 2.0 * t],
            vec![random_family(3, &f1, 1), random_family(3, &f2, 2), random_family(3, &f1, 2)],
            1.0,
        ).unwrap();
        let d = decoherence_matrix(&spec, &density(3, &r)).unwrap();
        prop_assert!(d.hermiticity_defect() <= 1e-12);
        prop_assert!(d.final_label_leak() <= 1e-12);
        prop_assert!((d.total() - cx(1.0, 0.0)).norm() <= 1e-10);
        for i in 0..d.len() {
            prop_assert!(d.entries()[(i, i)].im.abs() <= 1e-12);
            prop_assert!(d.entries()[(i, i)].re >= -1e-12);
        }
    }

    #[test]
    fn conserved_histories_decohere(diag in proptest::collection::vec(-2.0..2.0f64, 4), r in raw(32), t in 0.1..5.0f64) {
        // H diagonal in a block basis shared by every family
        let h = ComplexOperator::from_real_diagonal(&diag);
        let fam = ProjectorFamily::from_index_groups(4, &[vec![0, 1], vec![2], vec![3]], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let fine = ProjectorFamily::from_index_groups(4, &[vec![0], vec![1], vec![2, 3]], vec!["x".into(), "y".into(), "z".into()]).unwrap();
        let spec = HistorySpec::new(h, vec![0.0, t, 1.7 * t], vec![fam.clone(), fine, fam], 1.0).unwrap();
        let d = decoherence_matrix(&spec, &density(4, &r)).unwrap();
        prop_assert!(decoherence_defect(&d) <= 1e-10);
    }

    #[test]
    fn purification_equivalence(h in raw(8), r in raw(8), f in raw(8), t in 0.1..3.0f64) {
        let spec = HistorySpec::new(hermitian(2, &h), vec![0.0, t], vec![random_family(2, &f, 1), random_family(2, &h, 1)], 1.0).unwrap();
        let rho = density(2, &r);
        let psi = purify(&rho);
        let back = partial_trace(&DensityOperator::from_pure(&psi).operator().clone(), &[2, 2], &[0]).unwrap();
        prop_assert!(back.max_deviation(rho.operator()) <= 1e-10);
        let d = decoherence_matrix(&spec, &rho).unwrap();
        let d_pure = decoherence_matrix_pure(&spec.extend_with_identity(2), &psi).unwrap();
        let diff = (d.entries() - d_pure.entries()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-10);
    }

    #[test]
    fn records_round_trip(h in raw(8), f in raw(8), s in raw(4)) {
        let spec = recorded_spec(&h, &f);
        let psi = ket(2, &s).tensor(&PureState::basis(2, 0).unwrap());
        let d = decoherence_matrix_pure(&spec, &psi).unwrap();
        prop_assert!(decoherence_defect(&d) <= 1e-10);
        let records = find_records(&spec, &psi, 1e-10).unwrap();
        records.projectors.validate().unwrap();
        prop_assert!(record_residual(&spec, &psi, &records).unwrap() <= 1e-8);

        let rho = DensityOperator::from_pure(&psi);
        let final_state = evolved_state(&spec, &rho).unwrap();
        let p = probabilities(&d);
        for (alpha, pa) in &p.values {
            let b = records.record_of(alpha).unwrap();
            if Some(b) == records.complement() {
                prop_assert!(*pa <= 1e-10);
                continue;
            }
            let r = &records.projectors.members()[b];
            let tr = (r.matrix() * final_state.matrix()).trace().re;
            prop_assert!((tr - pa).abs() <= 1e-8);
        }

        let joint = joint_probability(&spec, &rho, &records).unwrap();
        for (alpha, pa) in &p.values {
            prop_assert!((joint.marginal(alpha) - pa).abs() <= 1e-10);
        }
        let cond = conditional_record_probability(&joint);
        for &(_, best) in cond.best.values() {
            prop_assert!((best - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn coarse_graining_keeps_exact_decoherence(h in raw(8), f in raw(8), s in raw(4), w in 0.0..1.0f64) {
        // diagonal environment mixtures keep the copied record orthogonal
        let spec = recorded_spec(&h, &f);
        let rho = DensityOperator::from_pure(&ket(2, &s)).tensor(&DensityOperator::diagonal(&[w, 1.0 - w]).unwrap());
        let d = decoherence_matrix(&spec, &rho).unwrap();
        prop_assume!(decoherence_defect(&d) <= 1e-12);
        for groups in [
            vec![vec![vec![0, 1]], vec![vec![0], vec![1]]],
            vec![vec![vec![0], vec![1]], vec![vec![0, 1]]],
        ] {
            let coarse = d.coarse_grain(&groups).unwrap();
            prop_assert!(decoherence_defect(&coarse) <= 1e-10);
            prop_assert!((coarse.total() - d.total()).norm() <= 1e-12);
        }
    }
}

#[test]
fn merging_can_raise_a_small_nonzero_defect() {
    // Gram matrix of a = e1, b = e2, c = (d, d, sqrt(1 - 2 d^2)): fine defect d, merged a+b gives sqrt(2) d
    let d: f64 = 1e-3;
    let vs = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [d, d, (1.0 - 2.0 * d * d).sqrt()],
    ];
    // histories (0),(1),(2) with weights 1/3 each
    let gram = DMatrix::from_fn(3, 3, |i, j| {
        cx((0..3).map(|k| vs[i][k] * vs[j][k]).sum::<f64>() / 3.0, 0.0)
    });
    let fine = DecoherenceMatrix::from_entries(vec![3], gram, 1e-8).unwrap();
    let coarse = fine.coarse_grain(&[vec![vec![0, 1], vec![2]]]).unwrap();
    let (fd, cd) = (decoherence_defect(&fine), decoherence_defect(&coarse));
    assert!((fd - d).abs() <= 1e-12);
    assert!((cd - 2f64.sqrt() * d).abs() <= 1e-9);
}
