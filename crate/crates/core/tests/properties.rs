use std::sync::OnceLock;

use proptest::prelude::*;
use trimode::linalg::C64;
use trimode::qec::{
    apply_loss, correction_circuit, correction_circuit_unchecked, correction_input, encode, error_state,
    recovered_fidelity, CodeState, DensityMatrix, IdealGates, LossChannel, ModeKet,
};
use trimode::{Cavity, FockState, Segment, StateVector};

fn ideal() -> &'static IdealGates {
    static GATES: OnceLock<IdealGates> = OnceLock::new();
    GATES.get_or_init(|| IdealGates::new().unwrap())
}

fn cavity() -> &'static Cavity {
    static CAV: OnceLock<Cavity> = OnceLock::new();
    CAV.get_or_init(|| Cavity::new(6))
}

fn segment() -> impl Strategy<Value = Segment> {
    (0.0..2.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(d, re, im)| Segment { duration: d, amplitude: C64::new(re, im) })
}

fn code_state() -> impl Strategy<Value = CodeState> {
    (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(theta, phi)| {
        CodeState::new(C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)).unwrap()
    })
}

/// Random normalized state on two modes with at most four photons.
fn two_mode_state() -> impl Strategy<Value = ModeKet> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 15).prop_filter_map("non-zero", |amps| {
        let mut occ = Vec::new();
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                occ.push(vec![a, b]);
            }
        }
        let ket = ModeKet::from_terms(2, occ.into_iter().zip(amps).map(|(o, (re, im))| (o, C64::new(re, im)))).ok()?;
        ket.normalized().ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pulse_blocks_stay_unitary(segs in proptest::collection::vec(segment(), 1..8)) {
        let u = cavity().pulse_unitary(&segs, &[0, 1, 2, 3, 4, 5, 6]).unwrap();
        prop_assert!(u.max_unitarity_error() < 1e-10);
        for k in 0..=6 {
            let det = u.block(k).unwrap().determinant();
            prop_assert!((det - C64::new(1.0, 0.0)).norm() < 1e-9, "K={} det={}", k, det);
        }
    }

    #[test]
    fn propagation_conserves_charge_and_norm(
        segs in proptest::collection::vec(segment(), 1..6),
        start in (0u32..2, 0u32..3, 0u32..3),
    ) {
        let initial = StateVector::from_fock(FockState::new(start.0, start.1, start.2));
        let (end, traj) = cavity().propagate(&segs, &initial, Some(0.3)).unwrap();
        prop_assert!(traj.charge_drift() < 1e-9);
        prop_assert!((end.norm() - 1.0).abs() < 1e-10);
        let k = (2 * start.0 + start.1 + start.2) as usize;
        prop_assert_eq!(end.sectors.keys().copied().collect::<Vec<_>>(), vec![k]);
    }

    #[test]
    fn loss_keeps_density_matrices_physical(ket in two_mode_state(), eta_idx in 0usize..4, mode in 0usize..2) {
        let eta = [0.0, 0.3, 0.9, 1.0][eta_idx];
        let rho = DensityMatrix::pure(&ket, 4).unwrap();
        let out = apply_loss(&rho, mode, eta).unwrap();
        prop_assert!((out.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!(out.hermiticity_error() < 1e-12);
        prop_assert!(out.min_eigenvalue() > -1e-9);
        prop_assert!(LossChannel::new(mode, eta, 4).unwrap().completeness_error(&rho).unwrap() < 1e-12);
        if eta == 1.0 {
            prop_assert!((out.fidelity(&ket).unwrap() - 1.0).abs() < 1e-12);
        }
        if eta == 0.0 {
            prop_assert!((out.occupation_probability(mode, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_composes_multiplicatively(ket in two_mode_state(), e1 in 0.0..1.0f64, e2 in 0.0..1.0f64) {
        let rho = DensityMatrix::pure(&ket, 4).unwrap();
        let twice = apply_loss(&apply_loss(&rho, 0, e1).unwrap(), 0, e2).unwrap();
        let once = apply_loss(&rho, 0, e1 * e2).unwrap();
        let diff = (&twice.rho - &once.rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-12, "diff {}", diff);
    }

    #[test]
    fn correction_preserves_inner_products(a in code_state(), b in code_state(), ma in 0usize..2, mb in 0usize..2) {
        let ia = correction_input(&error_state(&a, ma).unwrap()).unwrap();
        let ib = correction_input(&error_state(&b, mb).unwrap()).unwrap();
        let oa = correction_circuit(&ia, ideal()).unwrap();
        let ob = correction_circuit(&ib, ideal()).unwrap();
        prop_assert!((ia.inner(&ib) - oa.inner(&ob)).norm() < 1e-9);
    }

    #[test]
    fn uncorrupted_code_passes_through(c in code_state()) {
        let out = correction_circuit(&correction_input(&encode(&c).unwrap()).unwrap(), ideal()).unwrap();
        prop_assert!((recovered_fidelity(&out, &c).unwrap() - 1.0).abs() < 1e-9);
    }
}

/// A correctable error would give average fidelity 1 over the cardinal
/// states; two losses never do better than a coin flip.
#[test]
fn double_loss_is_not_corrected() {
    for (m1, m2) in [(0, 0), (0, 1), (1, 1)] {
        let mut total = 0.0;
        for c in CodeState::cardinal() {
            let lost = encode(&c).unwrap().annihilate(m1).unwrap().annihilate(m2).unwrap();
            if lost.norm() < 1e-12 {
                continue;
            }
            let input = correction_input(&lost.normalized().unwrap()).unwrap();
            let out = correction_circuit_unchecked(&input, ideal()).unwrap();
            total += recovered_fidelity(&out, &c).unwrap();
        }
        let mean = total / 6.0;
        assert!(mean <= 0.5 + 1e-9, "losses on modes {m1},{m2}: mean fidelity {mean}");
    }
}

#[test]
fn double_loss_is_rejected_by_the_domain_check() {
    let c = CodeState::cardinal()[2];
    let lost = encode(&c).unwrap().annihilate(0).unwrap().annihilate(1).unwrap().normalized().unwrap();
    assert!(correction_circuit(&correction_input(&lost).unwrap(), ideal()).is_err());
}
