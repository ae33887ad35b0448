//! Registry of the named gate truth tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockState;
use crate::linalg::{orthonormal_complement, CMat, CVec, C64};
use crate::optimizer::SynthesisConfig;
use crate::propagator::BlockUnitary;
use crate::spec::{GateSpec, Ket};

pub const GATE_NAMES: [&str; 7] = [
    "toffoli_phase",
    "routing",
    "loss_correction",
    "entangler",
    "partial_encoder",
    "cphase_core",
    "binary_decomposition",
];

const fn fs(a: u32, b: u32, c: u32) -> FockState {
    FockState::new(a, b, c)
}

/// Which two photon numbers of each mode stand for the qubit values 0 and
/// 1 in the Toffoli-phase gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitEmbedding {
    pub levels: [[u32; 2]; 3],
}

impl Default for QubitEmbedding {
    fn default() -> Self {
        Self { levels: [[0, 1]; 3] }
    }
}

/// Toffoli-phase on the default embedding: every three-qubit basis state
/// maps to itself except `|111⟩ → −|111⟩`.
pub fn gate_toffoli_phase() -> GateSpec {
    gate_toffoli_phase_with(QubitEmbedding::default()).expect("default embedding is valid")
}

pub fn gate_toffoli_phase_with(embedding: QubitEmbedding) -> Result<GateSpec> {
    if embedding.levels.iter().any(|l| l[0] == l[1]) {
        return Err(Error::InvalidArgument("qubit levels of a mode must differ".into()));
    }
    let mut pairs = Vec::with_capacity(8);
    for q in 0..8u32 {
        let bits = [(q >> 2) & 1, (q >> 1) & 1, q & 1];
        let n = |m: usize| embedding.levels[m][bits[m] as usize];
        let state = fs(n(0), n(1), n(2));
        let sign = if q == 7 { -1.0 } else { 1.0 };
        pairs.push((state, sign, state));
    }
    Ok(GateSpec::from_basis_pairs(
        "toffoli_phase",
        "three qubits as occupations of modes a, b, c; pi phase on |111>",
        &pairs,
    ))
}

/// Moves two or four `b` photons into `a` when the control `c` is empty.
pub fn gate_routing() -> GateSpec {
    GateSpec::from_basis_pairs(
        "routing",
        "c is the control; |040>->|200>, |020>->|100>, identity when c holds a photon",
        &[
            (fs(0, 4, 0), 1.0, fs(2, 0, 0)),
            (fs(0, 2, 0), 1.0, fs(1, 0, 0)),
            (fs(0, 4, 1), 1.0, fs(0, 4, 1)),
            (fs(0, 2, 1), 1.0, fs(0, 2, 1)),
            (fs(0, 0, 1), 1.0, fs(0, 0, 1)),
        ],
    )
}

pub fn gate_loss_correction() -> GateSpec {
    GateSpec::from_basis_pairs(
        "loss_correction",
        "restores a lost b photon from the c ancilla",
        &[
            (fs(0, 3, 1), 1.0, fs(0, 4, 0)),
            (fs(0, 1, 1), 1.0, fs(0, 2, 0)),
            (fs(0, 0, 1), 1.0, fs(0, 0, 1)),
            (fs(0, 2, 1), 1.0, fs(0, 2, 1)),
            (fs(0, 4, 1), 1.0, fs(0, 4, 1)),
        ],
    )
}

pub fn gate_entangler() -> GateSpec {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    GateSpec::new(
        "entangler",
        "symmetrizes |020> over modes b and c",
        vec![
            (Ket::basis(fs(0, 1, 1)), Ket::basis(fs(0, 1, 1))),
            (
                Ket::basis(fs(0, 2, 0)),
                Ket::from_terms([(fs(0, 2, 0), C64::new(h, 0.0)), (fs(0, 0, 2), C64::new(h, 0.0))]),
            ),
        ],
    )
}

pub fn gate_partial_encoder() -> GateSpec {
    GateSpec::from_basis_pairs(
        "partial_encoder",
        "first step of encoding a qubit held in c",
        &[(fs(1, 1, 1), 1.0, fs(2, 0, 0)), (fs(1, 1, 0), 1.0, fs(1, 1, 0))],
    )
}

pub fn gate_cphase_core() -> GateSpec {
    let mut pairs = vec![(fs(0, 2, 2), -1.0, fs(0, 2, 2))];
    for s in [fs(0, 0, 0), fs(0, 0, 2), fs(0, 2, 0), fs(0, 0, 4), fs(0, 4, 0), fs(0, 2, 4), fs(0, 4, 2), fs(0, 4, 4)] {
        pairs.push((s, 1.0, s));
    }
    GateSpec::from_basis_pairs("cphase_core", "pi phase on |022>, identity on the other code-mode pairs", &pairs)
}

pub fn gate_binary_decomposition() -> GateSpec {
    GateSpec::from_basis_pairs(
        "binary_decomposition",
        "writes the c photon number in binary onto (a, b, c)",
        &[
            (fs(0, 0, 0), 1.0, fs(0, 0, 0)),
            (fs(0, 0, 1), 1.0, fs(0, 0, 1)),
            (fs(0, 0, 2), 1.0, fs(0, 1, 1)),
            (fs(0, 0, 3), 1.0, fs(1, 0, 1)),
            (fs(0, 0, 4), 1.0, fs(1, 1, 1)),
        ],
    )
}

pub fn gate_by_name(name: &str) -> Result<GateSpec> {
    Ok(match name {
        "toffoli_phase" => gate_toffoli_phase(),
        "routing" => gate_routing(),
        "loss_correction" => gate_loss_correction(),
        "entangler" => gate_entangler(),
        "partial_encoder" => gate_partial_encoder(),
        "cphase_core" => gate_cphase_core(),
        "binary_decomposition" => gate_binary_decomposition(),
        other => return Err(Error::UnknownGate(other.to_string())),
    })
}

pub fn registry() -> Vec<GateSpec> {
    GATE_NAMES.iter().map(|n| gate_by_name(n).expect("registry names resolve")).collect()
}

/// Default synthesis settings for a registry gate. The CPHASE core acts on
/// sectors up to charge 8 and needs a much longer pulse than the others.
pub fn synthesis_defaults(name: &str) -> SynthesisConfig {
    let delta_tau = match name {
        "cphase_core" => 2.0,
        _ => 0.5,
    };
    SynthesisConfig { delta_tau, ..SynthesisConfig::default() }
}

/// A full unitary realizing `spec`: on each sector the listed inputs map to
/// their targets and the orthogonal complements are matched up in the
/// order produced by Gram-Schmidt over the standard basis.
pub fn ideal_unitary(spec: &GateSpec, sectors: &[usize]) -> Result<BlockUnitary> {
    spec.ensure_valid()?;
    let mut u = BlockUnitary::identity(sectors);
    for (&k, block) in u.blocks.iter_mut() {
        let sec = crate::fock::enumerate_sector(k as i64)?;
        let d = sec.dim();
        let embed = |ket: &Ket| {
            let mut v = CVec::zeros(d);
            for (s, &a) in ket.terms() {
                if let Some(i) = sec.index_of(s) {
                    v[i] += a;
                }
            }
            v
        };
        let mut ins: Vec<CVec> = Vec::new();
        let mut outs: Vec<CVec> = Vec::new();
        for p in &spec.pairs {
            let (mut s, mut t) = (embed(&p.input), embed(&p.target));
            for (a, b) in ins.iter().zip(&outs) {
                let c = a.dotc(&s);
                s -= a * c;
                t -= b * c;
            }
            let n = s.norm();
            if n > 1e-9 {
                ins.push(s / C64::from(n));
                outs.push(t / C64::from(n));
            }
        }
        if ins.is_empty() {
            continue;
        }
        let ins_c = orthonormal_complement(&ins, d);
        let outs_c = orthonormal_complement(&outs, d);
        let mut m = CMat::zeros(d, d);
        for (a, b) in ins.iter().chain(&ins_c).zip(outs.iter().chain(&outs_c)) {
            m += b * a.adjoint();
        }
        *block = m;
    }
    Ok(u)
}
