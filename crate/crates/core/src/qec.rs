//! Two-mode bosonic code, photon loss, and the measurement-free
//! correction, encoding and logical CPHASE circuits.
//!
//! Code words live on two cavity modes:
//! `|0_L⟩ = (|40⟩ + |04⟩)/√2`, `|1_L⟩ = |22⟩`. Circuits are written as
//! [`CircuitPlan`]s over a register of named modes, and run either with
//! the spec-completing ideal unitaries ([`IdealGates`]) or with the
//! propagators of synthesized pulses ([`PulseGates`]).

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, SectorSpace};
use crate::gates::{gate_by_name, ideal_unitary, GATE_NAMES};
use crate::linalg::{CMat, HermitianEigen, C64, ONE, ZERO};
use crate::optimizer::fidelity;
use crate::par::{map_slice, ExecMode};
use crate::propagator::{BlockUnitary, Cavity};
use crate::pulse::Segment;

/// Largest charge any circuit in this module presents to a gate.
pub const CIRCUIT_K_MAX: usize = 8;

const NORM_TOL: f64 = 1e-12;
const DOMAIN_TOL: f64 = 1e-9;

/// Logical amplitudes `α|0_L⟩ + β|1_L⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeState {
    pub alpha: C64,
    pub beta: C64,
}

impl CodeState {
    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("|alpha|^2 + |beta|^2 = {n}, expected 1")));
        }
        Ok(Self { alpha, beta })
    }

    /// Uniform on the Bloch sphere.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let theta = (1.0 - 2.0 * rng.gen::<f64>()).acos();
        let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
        Self { alpha: C64::new((theta / 2.0).cos(), 0.0), beta: C64::from_polar((theta / 2.0).sin(), phi) }
    }

    /// The six eigenstates of the Pauli operators.
    pub fn cardinal() -> [CodeState; 6] {
        let h = FRAC_1_SQRT_2;
        let c = |a: (f64, f64), b: (f64, f64)| CodeState { alpha: C64::new(a.0, a.1), beta: C64::new(b.0, b.1) };
        [
            c((1.0, 0.0), (0.0, 0.0)),
            c((0.0, 0.0), (1.0, 0.0)),
            c((h, 0.0), (h, 0.0)),
            c((h, 0.0), (-h, 0.0)),
            c((h, 0.0), (0.0, h)),
            c((h, 0.0), (0.0, -h)),
        ]
    }
}

/// Sparse state of a register of bosonic modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeKet {
    n_modes: usize,
    terms: BTreeMap<Vec<u32>, C64>,
}

impl ModeKet {
    pub fn zero(n_modes: usize) -> Self {
        Self { n_modes, terms: BTreeMap::new() }
    }

    pub fn basis(occupations: &[u32]) -> Self {
        let mut k = Self::zero(occupations.len());
        k.terms.insert(occupations.to_vec(), ONE);
        k
    }

    pub fn from_terms<I: IntoIterator<Item = (Vec<u32>, C64)>>(n_modes: usize, terms: I) -> Result<Self> {
        let mut k = Self::zero(n_modes);
        for (occ, a) in terms {
            if occ.len() != n_modes {
                return Err(Error::InvalidArgument(format!(
                    "occupation {occ:?} does not have {n_modes} modes"
                )));
            }
            k.add_term(occ, a);
        }
        Ok(k)
    }

    fn add_term(&mut self, occ: Vec<u32>, a: C64) {
        *self.terms.entry(occ).or_insert(ZERO) += a;
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &C64)> {
        self.terms.iter()
    }

    pub fn amplitude(&self, occ: &[u32]) -> C64 {
        self.terms.get(occ).copied().unwrap_or(ZERO)
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { n_modes: self.n_modes, terms: self.terms.iter().map(|(o, a)| (o.clone(), a * c)).collect() }
    }

    pub fn plus(&self, other: &ModeKet) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (o, a) in &other.terms {
            out.add_term(o.clone(), *a);
        }
        Ok(out)
    }

    fn check_same(&self, other: &ModeKet) -> Result<()> {
        if self.n_modes == other.n_modes {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "registers differ: {} vs {} modes",
                self.n_modes, other.n_modes
            )))
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &ModeKet) -> C64 {
        let (small, large, flip) =
            if self.terms.len() <= other.terms.len() { (self, other, false) } else { (other, self, true) };
        let s: C64 = small.terms.iter().map(|(o, a)| a.conj() * large.amplitude(o)).sum();
        if flip {
            s.conj()
        } else {
            s
        }
    }

    pub fn norm(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    /// Drops amplitudes at or below `tol` in magnitude.
    pub fn pruned(&self, tol: f64) -> Self {
        Self {
            n_modes: self.n_modes,
            terms: self.terms.iter().filter(|(_, a)| a.norm() > tol).map(|(o, a)| (o.clone(), *a)).collect(),
        }
    }

    /// `⟨n_m⟩` for a normalized state.
    pub fn mean_photons(&self, mode: usize) -> f64 {
        self.terms.iter().map(|(o, a)| a.norm_sqr() * o[mode] as f64).sum()
    }

    /// `Σ_m ⟨n_m⟩`.
    pub fn mean_total_photons(&self) -> f64 {
        self.terms.iter().map(|(o, a)| a.norm_sqr() * o.iter().sum::<u32>() as f64).sum()
    }

    /// Largest occupation of `mode` carrying any amplitude.
    pub fn max_occupation(&self, mode: usize) -> u32 {
        self.terms.keys().map(|o| o[mode]).max().unwrap_or(0)
    }

    /// Unnormalized `a_m |ψ⟩`.
    pub fn annihilate(&self, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let mut out = Self::zero(self.n_modes);
        for (o, a) in &self.terms {
            if o[mode] > 0 {
                let mut t = o.clone();
                t[mode] -= 1;
                out.add_term(t, a * (o[mode] as f64).sqrt());
            }
        }
        Ok(out)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.n_modes {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("mode {mode} outside a {}-mode register", self.n_modes)))
        }
    }

    /// `self ⊗ other`, with `other`'s modes appended.
    pub fn tensor(&self, other: &ModeKet) -> Self {
        let mut out = Self::zero(self.n_modes + other.n_modes);
        for (o1, a1) in &self.terms {
            for (o2, a2) in &other.terms {
                let mut o = o1.clone();
                o.extend_from_slice(o2);
                out.add_term(o, a1 * a2);
            }
        }
        out
    }

    /// Places this register's modes at `positions` of an `n_modes`
    /// register whose other modes hold `rest` (listed in ascending
    /// position order).
    pub fn embed(&self, n_modes: usize, positions: &[usize], rest: &[u32]) -> Result<Self> {
        if positions.len() != self.n_modes || positions.len() + rest.len() != n_modes {
            return Err(Error::InvalidArgument("embedding does not cover the register".into()));
        }
        let mut out = Self::zero(n_modes);
        for (o, a) in &self.terms {
            let mut full = vec![u32::MAX; n_modes];
            for (&p, &n) in positions.iter().zip(o) {
                if p >= n_modes || full[p] != u32::MAX {
                    return Err(Error::InvalidArgument(format!("bad embedding position {p}")));
                }
                full[p] = n;
            }
            let mut r = rest.iter();
            for slot in full.iter_mut().filter(|s| **s == u32::MAX) {
                *slot = *r.next().expect("sizes checked above");
            }
            out.add_term(full, *a);
        }
        Ok(out)
    }

    /// Splits `Σ |g⟩ ⊗ |ψ_g⟩` by the occupations `g` of every mode not in
    /// `keep`, returning each unnormalized `|ψ_g⟩` on the kept modes.
    pub fn branches(&self, keep: &[usize]) -> BTreeMap<Vec<u32>, ModeKet> {
        let mut out: BTreeMap<Vec<u32>, ModeKet> = BTreeMap::new();
        for (o, a) in &self.terms {
            let kept: Vec<u32> = keep.iter().map(|&m| o[m]).collect();
            let rest: Vec<u32> = (0..self.n_modes).filter(|m| !keep.contains(m)).map(|m| o[m]).collect();
            out.entry(rest).or_insert_with(|| ModeKet::zero(keep.len())).add_term(kept, *a);
        }
        out
    }

    /// Fidelity `⟨φ|ρ_keep|φ⟩` of the reduced state on `keep` with `phi`.
    pub fn reduced_fidelity(&self, keep: &[usize], phi: &ModeKet) -> f64 {
        self.branches(keep).values().map(|b| phi.inner(b).norm_sqr()).sum()
    }

    /// Applies a three-mode charge-conserving unitary to modes
    /// `(a, b, c) = modes`.
    pub fn apply_gate(&self, u: &BlockUnitary, modes: [usize; 3], space: &SectorSpace) -> Result<Self> {
        for &m in &modes {
            self.check_mode(m)?;
        }
        if modes[0] == modes[1] || modes[1] == modes[2] || modes[0] == modes[2] {
            return Err(Error::InvalidArgument(format!("gate modes {modes:?} must be distinct")));
        }
        let mut out = Self::zero(self.n_modes);
        for (o, a) in &self.terms {
            let s = FockState::new(o[modes[0]], o[modes[1]], o[modes[2]]);
            let (k, col) = space.locate(&s)?;
            let block = u.block(k).ok_or(Error::SectorOutOfRange { charge: k, k_max: space.k_max })?;
            let sec = space.sector(k)?;
            for (row, t) in sec.basis.iter().enumerate() {
                let c = block[(row, col)];
                if c != ZERO {
                    let mut occ = o.clone();
                    occ[modes[0]] = t.n_a;
                    occ[modes[1]] = t.n_b;
                    occ[modes[2]] = t.n_c;
                    out.add_term(occ, a * c);
                }
            }
        }
        Ok(out)
    }

    pub fn swap(&self, i: usize, j: usize) -> Result<Self> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        let mut out = Self::zero(self.n_modes);
        for (o, a) in &self.terms {
            let mut t = o.clone();
            t.swap(i, j);
            out.add_term(t, *a);
        }
        Ok(out)
    }

    /// 50/50 beam splitter `a† → (a† + b†)/√2`, `b† → (a† − b†)/√2` on
    /// modes `(i, j)`.
    pub fn beam_splitter(&self, i: usize, j: usize) -> Result<Self> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        if i == j {
            return Err(Error::InvalidArgument("beam splitter needs two distinct modes".into()));
        }
        let mut out = Self::zero(self.n_modes);
        for (o, a) in &self.terms {
            let (n, m) = (o[i], o[j]);
            let norm = (2f64.powi((n + m) as i32) * factorial(n) * factorial(m)).sqrt();
            for k in 0..=n {
                for l in 0..=m {
                    let sign = if (m - l) % 2 == 1 { -1.0 } else { 1.0 };
                    let (p, q) = (k + l, n + m - k - l);
                    let c = binomial(n, k) * binomial(m, l) * sign * (factorial(p) * factorial(q)).sqrt() / norm;
                    let mut t = o.clone();
                    t[i] = p;
                    t[j] = q;
                    out.add_term(t, a * c);
                }
            }
        }
        Ok(out.pruned(0.0))
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn two_mode(terms: &[((u32, u32), C64)]) -> ModeKet {
    ModeKet::from_terms(2, terms.iter().map(|&((a, b), c)| (vec![a, b], c))).expect("two modes")
}

pub fn logical_zero() -> ModeKet {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    two_mode(&[((4, 0), h), ((0, 4), h)])
}

pub fn logical_one() -> ModeKet {
    two_mode(&[((2, 2), ONE)])
}

/// `α (|40⟩ + |04⟩)/√2 + β |22⟩` on two modes.
pub fn encode(code: &CodeState) -> Result<ModeKet> {
    let code = CodeState::new(code.alpha, code.beta)?;
    Ok(logical_zero().scaled(code.alpha).plus(&logical_one().scaled(code.beta))?.pruned(0.0))
}

/// Normalized state after losing one photon from code mode `mode`
/// (0 or 1): `α|30⟩ + β|12⟩` for mode 0, `α|03⟩ + β|21⟩` for mode 1.
pub fn error_state(code: &CodeState, mode: usize) -> Result<ModeKet> {
    if mode > 1 {
        return Err(Error::InvalidArgument(format!("code modes are 0 and 1, got {mode}")));
    }
    encode(code)?.annihilate(mode)?.normalized()
}

/// One operation of a circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    /// Registry gate with its `(a, b, c)` modes bound to register modes.
    Gate {
        gate: String,
        #[serde(default)]
        inverse: bool,
        modes: [usize; 3],
    },
    Swap { modes: [usize; 2] },
    BeamSplitter { modes: [usize; 2] },
}

/// Gate unitaries a circuit can draw on.
pub trait GateProvider: Sync {
    /// The unitary of `gate` (or its inverse) on every charge up to
    /// [`CIRCUIT_K_MAX`].
    fn unitary(&self, gate: &str, inverse: bool) -> Result<&BlockUnitary>;

    /// Spec fidelity of the realization of `gate`.
    fn fidelity(&self, gate: &str) -> Result<f64>;
}

#[derive(Debug, Clone)]
struct GatePair {
    forward: BlockUnitary,
    inverse: BlockUnitary,
    fidelity: f64,
}

fn lookup<'a>(map: &'a BTreeMap<String, GatePair>, gate: &str) -> Result<&'a GatePair> {
    map.get(gate).ok_or_else(|| Error::UnknownGate(gate.to_string()))
}

/// Spec-completing unitaries for every registry gate.
#[derive(Debug, Clone)]
pub struct IdealGates {
    gates: BTreeMap<String, GatePair>,
}

impl IdealGates {
    pub fn new() -> Result<Self> {
        let sectors: Vec<usize> = (0..=CIRCUIT_K_MAX).collect();
        let mut gates = BTreeMap::new();
        for name in GATE_NAMES {
            let u = ideal_unitary(&gate_by_name(name)?, &sectors)?;
            gates.insert(name.to_string(), GatePair { inverse: u.adjoint(), forward: u, fidelity: 1.0 });
        }
        Ok(Self { gates })
    }
}

impl GateProvider for IdealGates {
    fn unitary(&self, gate: &str, inverse: bool) -> Result<&BlockUnitary> {
        let p = lookup(&self.gates, gate)?;
        Ok(if inverse { &p.inverse } else { &p.forward })
    }

    fn fidelity(&self, gate: &str) -> Result<f64> {
        Ok(lookup(&self.gates, gate)?.fidelity)
    }
}

/// Propagators of synthesized pulses, one per registry gate.
#[derive(Debug, Clone)]
pub struct PulseGates {
    gates: BTreeMap<String, GatePair>,
}

impl PulseGates {
    pub fn new(pulses: &[(String, Vec<Segment>)]) -> Result<Self> {
        let cavity = Cavity::new(CIRCUIT_K_MAX);
        let sectors: Vec<usize> = (0..=CIRCUIT_K_MAX).collect();
        let mut gates = BTreeMap::new();
        for (name, segs) in pulses {
            let spec = gate_by_name(name)?;
            let u = cavity.pulse_unitary(segs, &sectors)?;
            let f = fidelity(&u, &spec)?;
            gates.insert(name.clone(), GatePair { inverse: u.adjoint(), forward: u, fidelity: f });
        }
        Ok(Self { gates })
    }
}

impl GateProvider for PulseGates {
    fn unitary(&self, gate: &str, inverse: bool) -> Result<&BlockUnitary> {
        let p = lookup(&self.gates, gate)?;
        Ok(if inverse { &p.inverse } else { &p.forward })
    }

    fn fidelity(&self, gate: &str) -> Result<f64> {
        Ok(lookup(&self.gates, gate)?.fidelity)
    }
}

/// Ordered circuit over a register of named modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitPlan {
    pub name: String,
    pub modes: Vec<String>,
    pub steps: Vec<Step>,
}

impl CircuitPlan {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, name: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| Error::InvalidArgument(format!("plan `{}` has no mode `{name}`", self.name)))
    }

    /// Mode indices in range and distinct within each step, and every
    /// gate name resolvable.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_modes();
        let check = |ms: &[usize]| -> Result<()> {
            for (i, &m) in ms.iter().enumerate() {
                if m >= n {
                    return Err(Error::InvalidArgument(format!("plan `{}`: mode {m} out of range", self.name)));
                }
                if ms[..i].contains(&m) {
                    return Err(Error::InvalidArgument(format!("plan `{}`: mode {m} bound twice", self.name)));
                }
            }
            Ok(())
        };
        for step in &self.steps {
            match step {
                Step::Gate { gate, modes, .. } => {
                    let spec = gate_by_name(gate)?;
                    if spec.max_charge() > CIRCUIT_K_MAX {
                        return Err(Error::InvalidArgument(format!("gate `{gate}` exceeds charge {CIRCUIT_K_MAX}")));
                    }
                    check(modes)?
                }
                Step::Swap { modes } | Step::BeamSplitter { modes } => check(modes)?,
            }
        }
        Ok(())
    }

    /// The gate name of every gate step, in order.
    pub fn gate_applications(&self) -> Vec<&str> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Gate { gate, .. } => Some(gate.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Product of the fidelities of every gate application.
    pub fn fidelity_product(&self, gates: &dyn GateProvider) -> Result<f64> {
        self.gate_applications().into_iter().map(|g| gates.fidelity(g)).product()
    }

    pub fn run(&self, input: &ModeKet, gates: &dyn GateProvider) -> Result<ModeKet> {
        self.validate()?;
        if input.n_modes() != self.n_modes() {
            return Err(Error::InvalidArgument(format!(
                "plan `{}` has {} modes, state has {}",
                self.name,
                self.n_modes(),
                input.n_modes()
            )));
        }
        let space = SectorSpace::new(CIRCUIT_K_MAX);
        let mut state = input.clone();
        for step in &self.steps {
            state = match step {
                Step::Gate { gate, inverse, modes } => state.apply_gate(gates.unitary(gate, *inverse)?, *modes, &space)?,
                Step::Swap { modes } => state.swap(modes[0], modes[1])?,
                Step::BeamSplitter { modes } => state.beam_splitter(modes[0], modes[1])?,
            }
            .pruned(1e-15);
        }
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }
}

fn gate(name: &str, inverse: bool, modes: [usize; 3]) -> Step {
    Step::Gate { gate: name.to_string(), inverse, modes }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Mode layout of [`correction_plan`]: code modes `m1, m2`, flag ancillas
/// `r1, r2` (one photon each on entry), and empty work modes.
pub const CORRECTION_MODES: [&str; 9] = ["m1", "m2", "r1", "r2", "h1", "h2", "x1", "x2", "v"];

/// Measurement-free single-loss correction over two processors.
///
/// 1. `loss_correction` on `(h1, m1, r1)` and `(h2, m2, r2)` refills the
///    damaged mode from its ancilla and clears that ancilla.
/// 2. `routing` on `(h1, m1, r1)` and `(h2, m2, r2)` halves the repaired
///    mode into `h` when its ancilla is empty.
/// 3. `routing` on `(x2, m2, r1)` and `(x1, m1, r2)` does the same for the
///    partner mode, controlled by the other ancilla.
/// 4. `entangler` on `(v, h1, x2)` and `(v, h2, x1)` turns the flagged
///    `|20⟩` into `(|20⟩ + |02⟩)/√2`, restoring the `|0_L⟩` symmetry.
/// 5. Inverse routings double the halves back into `m1, m2`.
///
/// With no loss both ancillas stay full and every gate acts trivially.
pub fn correction_plan() -> CircuitPlan {
    let [m1, m2, r1, r2, h1, h2, x1, x2, v] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
    CircuitPlan {
        name: "correction".into(),
        modes: names(&CORRECTION_MODES),
        steps: vec![
            gate("loss_correction", false, [h1, m1, r1]),
            gate("loss_correction", false, [h2, m2, r2]),
            gate("routing", false, [h1, m1, r1]),
            gate("routing", false, [h2, m2, r2]),
            gate("routing", false, [x2, m2, r1]),
            gate("routing", false, [x1, m1, r2]),
            gate("entangler", false, [v, h1, x2]),
            gate("entangler", false, [v, h2, x1]),
            gate("routing", true, [x2, m2, r1]),
            gate("routing", true, [x1, m1, r2]),
            gate("routing", true, [h1, m1, r1]),
            gate("routing", true, [h2, m2, r2]),
        ],
    }
}

const CODE_MODES: [usize; 2] = [0, 1];

/// Code modes loaded with `code` (two modes), both ancillas holding one
/// photon, every work mode empty.
pub fn correction_input(code: &ModeKet) -> Result<ModeKet> {
    if code.n_modes() != 2 {
        return Err(Error::InvalidArgument("correction input needs a two-mode code state".into()));
    }
    code.embed(CORRECTION_MODES.len(), &CODE_MODES, &[1, 1, 0, 0, 0, 0, 0])
}

/// Orthonormal basis of the correctable code-mode span:
/// `|0_L⟩, |1_L⟩` and the four single-loss components.
fn correctable_span() -> Vec<ModeKet> {
    let b = |a, c| two_mode(&[((a, c), ONE)]);
    vec![logical_zero(), logical_one(), b(3, 0), b(1, 2), b(0, 3), b(2, 1)]
}

/// Weight of `state` outside `|11⟩_r ⊗ span{C, E₁, E₂}` with empty work
/// modes, relative to its norm².
pub fn correction_domain_leakage(state: &ModeKet) -> Result<f64> {
    if state.n_modes() != CORRECTION_MODES.len() {
        return Err(Error::InvalidArgument("state is not on the correction register".into()));
    }
    let n2 = state.norm().powi(2);
    if n2 == 0.0 {
        return Err(Error::InvalidArgument("zero state".into()));
    }
    let inside: f64 = correctable_span()
        .iter()
        .map(|d| correction_input(d).map(|e| e.inner(state).norm_sqr()))
        .sum::<Result<f64>>()?;
    Ok((1.0 - inside / n2).max(0.0))
}

/// Runs [`correction_plan`], refusing inputs that leak more than `1e-9`
/// out of the correctable domain.
pub fn correction_circuit(state: &ModeKet, gates: &dyn GateProvider) -> Result<ModeKet> {
    let leak = correction_domain_leakage(state)?;
    if leak > DOMAIN_TOL {
        return Err(Error::ContractViolation(format!(
            "correction input has weight {leak:.3e} outside the correctable span"
        )));
    }
    correction_circuit_unchecked(state, gates)
}

/// [`correction_circuit`] without the domain check, for studying inputs
/// the code cannot correct.
pub fn correction_circuit_unchecked(state: &ModeKet, gates: &dyn GateProvider) -> Result<ModeKet> {
    correction_plan().run(state, gates)
}

/// Fidelity of the code modes of a correction output with `encode(code)`.
pub fn recovered_fidelity(output: &ModeKet, code: &CodeState) -> Result<f64> {
    Ok(output.reduced_fidelity(&CODE_MODES, &encode(code)?))
}

/// Lose one photon from code mode `mode`, correct, and return the
/// fidelity with the original code state.
pub fn single_loss_roundtrip(code: &CodeState, mode: usize, gates: &dyn GateProvider) -> Result<f64> {
    let out = correction_circuit(&correction_input(&error_state(code, mode)?)?, gates)?;
    recovered_fidelity(&out, code)
}

/// Mode layout of [`encoding_plan`]: output code modes `w1, w2`, the
/// processor modes `e1, e2` (one photon each on entry) and `q` holding
/// the qubit, and empty helpers.
pub const ENCODING_MODES: [&str; 8] = ["w1", "w2", "e1", "e2", "q", "v", "z1", "z2"];

/// `partial_encoder` takes `α|1⟩ + β|0⟩` in `q` to `α|20⟩ + β|11⟩` on
/// `(e1, e2)`; `entangler` symmetrizes `|20⟩`; inverse routings double
/// each photon number into `w1, w2`.
pub fn encoding_plan() -> CircuitPlan {
    let [w1, w2, e1, e2, q, v, z1, z2] = [0, 1, 2, 3, 4, 5, 6, 7];
    CircuitPlan {
        name: "encoding".into(),
        modes: names(&ENCODING_MODES),
        steps: vec![
            gate("partial_encoder", false, [e1, e2, q]),
            gate("entangler", false, [v, e1, e2]),
            gate("routing", true, [e1, w1, z1]),
            gate("routing", true, [e2, w2, z2]),
        ],
    }
}

/// Output of [`encoding_circuit`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingOutput {
    /// The full register after the circuit.
    pub register: ModeKet,
    /// `(e1, e2)` after `partial_encoder`.
    pub intermediate: ModeKet,
    /// Fidelity of the `w1, w2` modes with `encode(α, β)`.
    pub fidelity: f64,
}

/// Encodes the qubit `α|1⟩ + β|0⟩` held in one mode.
pub fn encoding_circuit(code: &CodeState, gates: &dyn GateProvider) -> Result<EncodingOutput> {
    let code = CodeState::new(code.alpha, code.beta)?;
    let plan = encoding_plan();
    let qubit = ModeKet::from_terms(1, [(vec![1], code.alpha), (vec![0], code.beta)])?;
    let input = qubit.embed(plan.n_modes(), &[4], &[0, 0, 1, 1, 0, 0, 0])?;
    let first = CircuitPlan { steps: plan.steps[..1].to_vec(), ..plan.clone() }.run(&input, gates)?;
    let intermediate = {
        let br = first.branches(&[2, 3]);
        let rest = vec![0u32; 6];
        br.get(&rest).cloned().unwrap_or_else(|| ModeKet::zero(2))
    };
    let register = plan.run(&input, gates)?;
    let fidelity = register.reduced_fidelity(&[0, 1], &encode(&code)?);
    Ok(EncodingOutput { register, intermediate, fidelity })
}

pub const CPHASE_MODES: [&str; 5] = ["m1", "m2", "m3", "m4", "v"];

/// Two code registers `(m1, m2)` and `(m3, m4)`; the CPHASE core acts on
/// the inner pair `(m2, m3)` with an empty `a` mode.
pub fn cphase_plan() -> CircuitPlan {
    CircuitPlan {
        name: "logical_cphase".into(),
        modes: names(&CPHASE_MODES),
        steps: vec![gate("cphase_core", false, [4, 1, 2])],
    }
}

/// Applies [`cphase_plan`] to `encode(first) ⊗ encode(second)`.
pub fn logical_cphase(first: &CodeState, second: &CodeState, gates: &dyn GateProvider) -> Result<ModeKet> {
    let input = encode(first)?.tensor(&encode(second)?).tensor(&ModeKet::basis(&[0]));
    cphase_plan().run(&input, gates)
}

/// `⟨i_L j_L| CPHASE |k_L l_L⟩` with rows and columns ordered
/// `00, 01, 10, 11`.
pub fn logical_cphase_table(gates: &dyn GateProvider) -> Result<[[C64; 4]; 4]> {
    let words = [logical_zero(), logical_one()];
    let pair = |i: usize| words[i >> 1].tensor(&words[i & 1]).tensor(&ModeKet::basis(&[0]));
    let plan = cphase_plan();
    let mut table = [[ZERO; 4]; 4];
    for col in 0..4 {
        let out = plan.run(&pair(col), gates)?;
        for (row, slot) in table.iter_mut().enumerate() {
            slot[col] = pair(row).inner(&out);
        }
    }
    Ok(table)
}

/// Density matrix on every occupation of `n_modes` modes with at most
/// `n_max` photons in total. Loss never leaves this space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_modes: usize,
    n_max: u32,
    basis: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    pub rho: CMat,
}

fn occupations(n_modes: usize, n_max: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n_modes {
        let mut next = Vec::new();
        for o in &out {
            let used: u32 = o.iter().sum();
            for n in 0..=(n_max - used) {
                let mut t = o.clone();
                t.push(n);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

impl DensityMatrix {
    fn empty(n_modes: usize, n_max: u32) -> Self {
        let basis = occupations(n_modes, n_max);
        let index = basis.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        let d = basis.len();
        Self { n_modes, n_max, basis, index, rho: CMat::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }

    /// Column vector of `ket` in this basis.
    pub fn vector(&self, ket: &ModeKet) -> Result<nalgebra::DVector<C64>> {
        if ket.n_modes() != self.n_modes {
            return Err(Error::InvalidArgument("ket and density matrix registers differ".into()));
        }
        let mut v = nalgebra::DVector::zeros(self.dim());
        for (o, a) in ket.terms() {
            let &i = self.index.get(o).ok_or_else(|| {
                Error::InvalidArgument(format!("occupation {o:?} exceeds {} photons", self.n_max))
            })?;
            v[i] += a;
        }
        Ok(v)
    }

    /// `|ψ⟩⟨ψ|` for normalized `ψ`.
    pub fn pure(ket: &ModeKet, n_max: u32) -> Result<Self> {
        let mut dm = Self::empty(ket.n_modes(), n_max);
        let v = dm.vector(ket)?;
        if (v.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("state norm {} is not 1", v.norm())));
        }
        dm.rho = &v * v.adjoint();
        Ok(dm)
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        crate::linalg::hermiticity_error(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        HermitianEigen::new(&h).values.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Trace 1 within `1e-9`, Hermitian within `1e-10`, eigenvalues above
    /// `−1e-9`.
    pub fn check(&self) -> Result<()> {
        let t = self.trace();
        if (t - ONE).norm() > 1e-9 {
            return Err(Error::ContractViolation(format!("trace {t} differs from 1")));
        }
        let h = self.hermiticity_error();
        if h > 1e-10 {
            return Err(Error::ContractViolation(format!("hermiticity error {h:e}")));
        }
        let m = self.min_eigenvalue();
        if m < -1e-9 {
            return Err(Error::ContractViolation(format!("negative eigenvalue {m:e}")));
        }
        Ok(())
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity(&self, ket: &ModeKet) -> Result<f64> {
        let v = self.vector(ket)?;
        Ok((v.adjoint() * &self.rho * &v)[(0, 0)].re)
    }

    /// Probability that `mode` holds `n` photons.
    pub fn occupation_probability(&self, mode: usize, n: u32) -> f64 {
        self.basis.iter().enumerate().filter(|(_, o)| o[mode] == n).map(|(i, _)| self.rho[(i, i)].re).sum()
    }

    fn max_occupied(&self, mode: usize) -> u32 {
        self.basis
            .iter()
            .enumerate()
            .filter(|(i, _)| self.rho[(*i, *i)].re.abs() > 1e-15)
            .map(|(_, o)| o[mode])
            .max()
            .unwrap_or(0)
    }

    /// `Σ_k K_k ρ K_k†` for operators on this basis.
    pub fn apply_kraus(&self, ops: &[CMat]) -> Result<Self> {
        let d = self.dim();
        if ops.iter().any(|k| k.nrows() != d || k.ncols() != d) {
            return Err(Error::InvalidArgument("Kraus operator has the wrong shape".into()));
        }
        let mut out = self.clone();
        out.rho = ops.iter().fold(CMat::zeros(d, d), |acc, k| acc + k * &self.rho * k.adjoint());
        Ok(out)
    }
}

/// Photon loss on one mode with transmissivity `eta`, truncated to
/// `cutoff + 1` Kraus operators `E_0 … E_cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChannel {
    pub mode: usize,
    pub eta: f64,
    pub cutoff: u32,
}

impl LossChannel {
    pub fn new(mode: usize, eta: f64, cutoff: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidArgument(format!("transmissivity must lie in [0, 1], got {eta}")));
        }
        Ok(Self { mode, eta, cutoff })
    }

    /// `√(C(n,k) η^(n−k) (1−η)^k)`.
    fn coefficient(&self, n: u32, k: u32) -> f64 {
        (binomial(n, k) * self.eta.powi((n - k) as i32) * (1.0 - self.eta).powi(k as i32)).sqrt()
    }

    /// Dense `E_k` on the basis of `rho`.
    pub fn kraus_operators(&self, rho: &DensityMatrix) -> Result<Vec<CMat>> {
        if self.mode >= rho.n_modes() {
            return Err(Error::InvalidArgument(format!("mode {} outside the register", self.mode)));
        }
        let d = rho.dim();
        Ok((0..=self.cutoff)
            .map(|k| {
                let mut e = CMat::zeros(d, d);
                for (j, o) in rho.basis.iter().enumerate() {
                    let n = o[self.mode];
                    if n >= k {
                        let mut t = o.clone();
                        t[self.mode] -= k;
                        e[(rho.index[&t], j)] = C64::new(self.coefficient(n, k), 0.0);
                    }
                }
                e
            })
            .collect())
    }

    /// `max |Σ E_k† E_k − I|` on the basis of `rho`.
    pub fn completeness_error(&self, rho: &DensityMatrix) -> Result<f64> {
        let d = rho.dim();
        let s = self.kraus_operators(rho)?.iter().fold(CMat::zeros(d, d), |acc, e| acc + e.adjoint() * e);
        Ok(crate::linalg::max_abs_diff(&s, &CMat::identity(d, d)))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if self.mode >= rho.n_modes() {
            return Err(Error::InvalidArgument(format!("mode {} outside the register", self.mode)));
        }
        let occ = rho.max_occupied(self.mode);
        if self.cutoff < occ {
            return Err(Error::InvalidArgument(format!(
                "Kraus cutoff {} is below the occupation {occ} of mode {}",
                self.cutoff, self.mode
            )));
        }
        let mut out = rho.clone();
        out.rho.fill(ZERO);
        for (i, oi) in rho.basis.iter().enumerate() {
            let ni = oi[self.mode];
            for (j, oj) in rho.basis.iter().enumerate() {
                let r = rho.rho[(i, j)];
                if r == ZERO {
                    continue;
                }
                let nj = oj[self.mode];
                for k in 0..=ni.min(nj).min(self.cutoff) {
                    let (mut ti, mut tj) = (oi.clone(), oj.clone());
                    ti[self.mode] -= k;
                    tj[self.mode] -= k;
                    out.rho[(rho.index[&ti], rho.index[&tj])] += r * (self.coefficient(ni, k) * self.coefficient(nj, k));
                }
            }
        }
        Ok(out)
    }
}

/// Loss on `mode` with the cutoff set to the register's photon limit.
pub fn apply_loss(rho: &DensityMatrix, mode: usize, eta: f64) -> Result<DensityMatrix> {
    LossChannel::new(mode, eta, rho.n_max())?.apply(rho)
}

/// `(no loss, one loss, two losses)` for two code modes that each lose
/// their photon content independently with probability `p`.
pub fn channel_outcome_probs(p: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(((1.0 - p) * (1.0 - p), 2.0 * p * (1.0 - p), p * p))
}

/// The correction circuit as a channel on the two code modes (at most 4
/// photons): one Kraus operator per ancilla/work-mode outcome, plus the
/// identity on everything outside the correctable span.
#[derive(Debug, Clone)]
pub struct RecoveryChannel {
    pub kraus: Vec<CMat>,
}

impl RecoveryChannel {
    pub fn from_circuit(gates: &dyn GateProvider) -> Result<Self> {
        let template = DensityMatrix::empty(2, 4);
        let d = template.dim();
        let span = correctable_span();
        let mut ops: BTreeMap<Vec<u32>, CMat> = BTreeMap::new();
        let mut projector = CMat::zeros(d, d);
        for v in &span {
            let col = template.vector(v)?;
            projector += &col * col.adjoint();
            let out = correction_circuit(&correction_input(v)?, gates)?;
            for (flag, branch) in out.branches(&CODE_MODES) {
                let row = template.vector(&branch.pruned(1e-14))?;
                *ops.entry(flag).or_insert_with(|| CMat::zeros(d, d)) += row * col.adjoint();
            }
        }
        let mut kraus: Vec<CMat> = ops.into_values().collect();
        kraus.push(CMat::identity(d, d) - projector);
        Ok(Self { kraus })
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.n_modes() != 2 || rho.n_max() != 4 {
            return Err(Error::InvalidArgument("recovery acts on two modes with at most 4 photons".into()));
        }
        rho.apply_kraus(&self.kraus)
    }
}

/// Loss model and schedule of the lifetime experiment. Every photon is
/// lost at rate `1/N` per unit of χ-time in every mode, including while
/// the correction circuit runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifetimeConfig {
    /// Idle time between corrections.
    pub correction_period: f64,
    /// Duration of the correction circuit itself.
    pub circuit_duration: f64,
    /// Simulated time in units of `N`.
    pub horizon_lifetimes: f64,
    /// Output samples per correction cycle.
    pub samples_per_cycle: usize,
}

impl Default for LifetimeConfig {
    fn default() -> Self {
        Self { correction_period: 40.0, circuit_duration: 40.0, horizon_lifetimes: 1.0, samples_per_cycle: 4 }
    }
}

impl LifetimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.correction_period > 0.0 && self.correction_period.is_finite()) {
            return Err(Error::InvalidArgument("correction_period must be positive".into()));
        }
        if !(self.circuit_duration >= 0.0 && self.circuit_duration.is_finite()) {
            return Err(Error::InvalidArgument("circuit_duration must be non-negative".into()));
        }
        if !(self.horizon_lifetimes > 0.0 && self.horizon_lifetimes.is_finite()) {
            return Err(Error::InvalidArgument("horizon_lifetimes must be positive".into()));
        }
        if self.samples_per_cycle == 0 {
            return Err(Error::InvalidArgument("samples_per_cycle must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cycle(&self) -> f64 {
        self.correction_period + self.circuit_duration
    }
}

pub const LIFETIME_MODEL: &str = "assumed model: every photon in every mode is lost at rate 1/N per chi-time, \
     also during the correction circuit; the ideal correction map acts at the end of each cycle; \
     fidelities are averaged over the six Pauli eigenstates";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRow {
    pub t: f64,
    pub f_unprotected: f64,
    pub f_uncorrected: f64,
    pub f_corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeCurves {
    pub figure_of_merit: f64,
    pub config: LifetimeConfig,
    pub model: String,
    pub rows: Vec<LifetimeRow>,
}

impl LifetimeCurves {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,f_unprotected,f_uncorrected,f_corrected\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.t, r.f_unprotected, r.f_uncorrected, r.f_corrected));
        }
        out
    }
}

/// Average fidelity of a single-photon qubit `α|1⟩ + β|0⟩` after loss
/// with transmissivity `eta`.
pub fn unprotected_fidelity(eta: f64) -> Result<f64> {
    let mut total = 0.0;
    for c in CodeState::cardinal() {
        let ket = ModeKet::from_terms(1, [(vec![1], c.alpha), (vec![0], c.beta)])?;
        let rho = apply_loss(&DensityMatrix::pure(&ket, 1)?, 0, eta)?;
        total += rho.fidelity(&ket)?;
    }
    Ok(total / 6.0)
}

fn code_loss(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    apply_loss(&apply_loss(rho, 0, eta)?, 1, eta)
}

struct CodeEnsemble {
    kets: Vec<ModeKet>,
    states: Vec<DensityMatrix>,
}

impl CodeEnsemble {
    fn new() -> Result<Self> {
        let kets: Vec<ModeKet> = CodeState::cardinal().iter().map(encode).collect::<Result<_>>()?;
        let states = kets.iter().map(|k| DensityMatrix::pure(k, 4)).collect::<Result<_>>()?;
        Ok(Self { kets, states })
    }

    /// Average fidelity after a further loss of `eta` (not stored).
    fn fidelity_after(&self, eta: f64) -> Result<f64> {
        let mut total = 0.0;
        for (k, s) in self.kets.iter().zip(&self.states) {
            total += code_loss(s, eta)?.fidelity(k)?;
        }
        Ok(total / self.kets.len() as f64)
    }

    fn cycle(&mut self, eta: f64, recovery: &RecoveryChannel) -> Result<()> {
        for s in &mut self.states {
            *s = recovery.apply(&code_loss(s, eta)?)?;
        }
        Ok(())
    }
}

/// Decay curves of an unprotected photon, the uncorrected code and the
/// periodically corrected code at figure of merit `n`.
pub fn lifetime_experiment(n: f64, cfg: &LifetimeConfig, recovery: &RecoveryChannel) -> Result<LifetimeCurves> {
    cfg.validate()?;
    if !(n > 0.0) {
        return Err(Error::InvalidArgument(format!("figure of merit must be positive, got {n}")));
    }
    let gamma = if n.is_infinite() { 0.0 } else { 1.0 / n };
    let cycle = cfg.cycle();
    let horizon = if n.is_infinite() { cycle } else { cfg.horizon_lifetimes * n };
    let cycles = (horizon / cycle).ceil() as usize;
    let step = cycle / cfg.samples_per_cycle as f64;
    let fresh = CodeEnsemble::new()?;
    let mut corrected = CodeEnsemble::new()?;
    let mut rows = Vec::new();
    for c in 0..cycles {
        for s in 0..cfg.samples_per_cycle {
            let into = s as f64 * step;
            let t = c as f64 * cycle + into;
            rows.push(LifetimeRow {
                t,
                f_unprotected: unprotected_fidelity((-gamma * t).exp())?,
                f_uncorrected: fresh.fidelity_after((-gamma * t).exp())?,
                f_corrected: corrected.fidelity_after((-gamma * into).exp())?,
            });
        }
        corrected.cycle((-gamma * cycle).exp(), recovery)?;
    }
    let t = cycles as f64 * cycle;
    rows.push(LifetimeRow {
        t,
        f_unprotected: unprotected_fidelity((-gamma * t).exp())?,
        f_uncorrected: fresh.fidelity_after((-gamma * t).exp())?,
        f_corrected: corrected.fidelity_after(1.0)?,
    });
    Ok(LifetimeCurves { figure_of_merit: n, config: cfg.clone(), model: LIFETIME_MODEL.into(), rows })
}

/// Corrected and unprotected fidelity after the whole number of cycles
/// that first reaches one single-photon lifetime `t = N`.
pub fn lifetime_comparison(n: f64, cfg: &LifetimeConfig, recovery: &RecoveryChannel) -> Result<(f64, f64)> {
    cfg.validate()?;
    let cycle = cfg.cycle();
    let cycles = (n / cycle).ceil().max(1.0) as usize;
    let eta = (-cycle / n).exp();
    let mut ens = CodeEnsemble::new()?;
    for _ in 0..cycles {
        ens.cycle(eta, recovery)?;
    }
    Ok((ens.fidelity_after(1.0)?, unprotected_fidelity((-(cycles as f64) * cycle / n).exp())?))
}

/// Smallest `N` in `[lo, hi]` at which the corrected code matches the
/// unprotected photon after one lifetime, found by bisection in `log N`.
pub fn break_even(cfg: &LifetimeConfig, recovery: &RecoveryChannel, lo: f64, hi: f64) -> Result<f64> {
    let gain = |n: f64| lifetime_comparison(n, cfg, recovery).map(|(c, u)| c - u);
    if gain(lo)? >= 0.0 || gain(hi)? < 0.0 {
        return Err(Error::InvalidArgument(format!("break-even is not bracketed by [{lo}, {hi}]")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi / lo > 1.0 + 1e-4 {
        let mid = (lo * hi).sqrt();
        if gain(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// [`lifetime_experiment`] over a grid of `N`, one task per point.
pub fn lifetime_sweep(
    ns: &[f64],
    cfg: &LifetimeConfig,
    recovery: &RecoveryChannel,
    exec: ExecMode,
) -> Result<Vec<LifetimeCurves>> {
    map_slice(exec, ns, |&n| lifetime_experiment(n, cfg, recovery)).into_iter().collect()
}

/// Summary of a batch of single-loss recovery trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub trials: usize,
    pub min_fidelity: f64,
    pub mean_fidelity: f64,
    /// Product of the gate fidelities of one pass through the circuit.
    pub gate_fidelity_product: f64,
}

/// Random code states, each losing one photon from a random code mode.
pub fn roundtrip_trials<R: Rng + ?Sized>(
    trials: usize,
    rng: &mut R,
    gates: &dyn GateProvider,
    exec: ExecMode,
) -> Result<RoundtripReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let draws: Vec<(CodeState, usize)> = (0..trials).map(|_| (CodeState::random(rng), rng.gen_range(0..2))).collect();
    let fids: Vec<f64> =
        map_slice(exec, &draws, |(c, m)| single_loss_roundtrip(c, *m, gates)).into_iter().collect::<Result<_>>()?;
    Ok(RoundtripReport {
        trials,
        min_fidelity: fids.iter().copied().fold(f64::INFINITY, f64::min),
        mean_fidelity: fids.iter().sum::<f64>() / trials as f64,
        gate_fidelity_product: correction_plan().fidelity_product(gates)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ideal() -> IdealGates {
        IdealGates::new().unwrap()
    }

    #[test]
    fn code_words_and_error_states() {
        let one = encode(&CodeState::new(ZERO, ONE).unwrap()).unwrap();
        assert_eq!(one, logical_one());
        let zero = encode(&CodeState::new(ONE, ZERO).unwrap()).unwrap();
        assert!((zero.amplitude(&[4, 0]).re - FRAC_1_SQRT_2).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let c = CodeState::random(&mut rng);
            assert!((encode(&c).unwrap().mean_total_photons() - 4.0).abs() < 1e-12);
            let e1 = error_state(&c, 0).unwrap();
            assert!((e1.amplitude(&[3, 0]) - c.alpha).norm() < 1e-12);
            assert!((e1.amplitude(&[1, 2]) - c.beta).norm() < 1e-12);
            let e2 = error_state(&c, 1).unwrap();
            assert!((e2.amplitude(&[0, 3]) - c.alpha).norm() < 1e-12);
            assert!((e2.amplitude(&[2, 1]) - c.beta).norm() < 1e-12);
        }
        assert!(CodeState::new(ONE, ONE).is_err());
    }

    #[test]
    fn beam_splitter_bunches_two_photons() {
        let out = ModeKet::basis(&[1, 1]).beam_splitter(0, 1).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!((out.amplitude(&[2, 0]).re - h).abs() < 1e-15);
        assert!((out.amplitude(&[0, 2]).re + h).abs() < 1e-15);
        assert_eq!(out.amplitude(&[1, 1]), ZERO);
        let back = out.beam_splitter(0, 1).unwrap();
        assert!((back.amplitude(&[1, 1]).re - 1.0).abs() < 1e-14);
        let s = ModeKet::basis(&[3, 0, 1]).swap(0, 2).unwrap();
        assert_eq!(s, ModeKet::basis(&[1, 0, 3]));
    }

    #[test]
    fn beam_splitter_preserves_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rand_ket = || {
            let terms: Vec<(Vec<u32>, C64)> = (0..6)
                .map(|_| (vec![rng.gen_range(0..4), rng.gen_range(0..4), rng.gen_range(0..2)], C64::new(rng.gen(), rng.gen())))
                .collect();
            ModeKet::from_terms(3, terms).unwrap()
        };
        let (a, b) = (rand_ket(), rand_ket());
        let (ta, tb) = (a.beam_splitter(0, 1).unwrap(), b.beam_splitter(0, 1).unwrap());
        assert!((a.inner(&b) - ta.inner(&tb)).norm() < 1e-12);
    }

    #[test]
    fn no_error_passes_through() {
        let gates = ideal();
        let c = CodeState::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        let input = correction_input(&encode(&c).unwrap()).unwrap();
        let out = correction_circuit(&input, &gates).unwrap();
        assert!((out.inner(&input).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_losses_are_corrected_and_flagged() {
        let gates = ideal();
        let c = CodeState::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        for (mode, flag) in [(0usize, [0u32, 1]), (1, [1, 0])] {
            let out = correction_circuit(&correction_input(&error_state(&c, mode).unwrap()).unwrap(), &gates).unwrap();
            assert!((recovered_fidelity(&out, &c).unwrap() - 1.0).abs() < 1e-12);
            let br = out.pruned(1e-12).branches(&CODE_MODES);
            assert_eq!(br.len(), 1);
            let rest = br.keys().next().unwrap();
            assert_eq!(&rest[..2], &flag);
            assert!(rest[2..].iter().all(|&n| n == 0));
        }
        let one = CodeState::new(ONE, ZERO).unwrap();
        let out = correction_circuit(&correction_input(&ModeKet::basis(&[3, 0])).unwrap(), &gates).unwrap();
        assert!((recovered_fidelity(&out, &one).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain_input_is_refused() {
        let gates = ideal();
        let bad = correction_input(&ModeKet::basis(&[4, 0])).unwrap();
        let leak = correction_domain_leakage(&bad).unwrap();
        assert!((leak - 0.5).abs() < 1e-12);
        assert!(matches!(correction_circuit(&bad, &gates), Err(Error::ContractViolation(_))));
        assert!(correction_circuit_unchecked(&bad, &gates).is_ok());
    }

    #[test]
    fn encoding_reaches_the_code() {
        let gates = ideal();
        for (a, b) in [(1.0, 0.0), (0.0, 1.0), (0.6, 0.8)] {
            let c = CodeState::new(C64::new(a, 0.0), C64::new(b, 0.0)).unwrap();
            let out = encoding_circuit(&c, &gates).unwrap();
            assert!((out.fidelity - 1.0).abs() < 1e-12);
            assert!((out.intermediate.amplitude(&[2, 0]).re - a).abs() < 1e-12);
            assert!((out.intermediate.amplitude(&[1, 1]).re - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cphase_table_is_diagonal() {
        let t = logical_cphase_table(&ideal()).unwrap();
        for (i, row) in t.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let expect = if i != j { 0.0 } else if i == 3 { -1.0 } else { 1.0 };
                assert!((v - C64::new(expect, 0.0)).norm() < 1e-12, "{i}{j}: {v}");
            }
        }
    }

    #[test]
    fn plan_json_round_trip_and_validation() {
        let plan = correction_plan();
        assert_eq!(CircuitPlan::from_json(&plan.to_json().unwrap()).unwrap(), plan);
        assert_eq!(plan.gate_applications().len(), 12);
        let mut bad = plan.clone();
        bad.steps.push(Step::Gate { gate: "routing".into(), inverse: false, modes: [0, 0, 1] });
        assert!(bad.validate().is_err());
        let mut unknown = plan;
        unknown.steps.push(Step::Gate { gate: "nope".into(), inverse: false, modes: [0, 1, 2] });
        assert!(unknown.validate().is_err());
        let text = r#"{"name":"x","modes":["a","b"],"steps":[{"op":"beam_splitter","modes":[0,1]}]}"#;
        assert_eq!(CircuitPlan::from_json(text).unwrap().steps.len(), 1);
    }

    #[test]
    fn loss_of_two_photons_is_binomial() {
        let rho = DensityMatrix::pure(&logical_one(), 4).unwrap();
        let eta = 0.7;
        let out = apply_loss(&rho, 0, eta).unwrap();
        out.check().unwrap();
        assert!((out.occupation_probability(0, 2) - eta * eta).abs() < 1e-15);
        assert!((out.occupation_probability(0, 1) - 2.0 * eta * (1.0 - eta)).abs() < 1e-15);
        assert!((out.occupation_probability(0, 0) - (1.0 - eta).powi(2)).abs() < 1e-15);
        let photon = DensityMatrix::pure(&ModeKet::basis(&[1]), 1).unwrap();
        assert!((apply_loss(&photon, 0, 0.9).unwrap().occupation_probability(0, 1) - 0.9).abs() < 1e-15);
        assert_eq!(apply_loss(&rho, 1, 1.0).unwrap(), rho);
    }

    #[test]
    fn cutoff_and_eta_are_checked() {
        let rho = DensityMatrix::pure(&logical_one(), 4).unwrap();
        assert!(LossChannel::new(0, 0.5, 1).unwrap().apply(&rho).is_err());
        assert!(LossChannel::new(0, 1.5, 4).is_err());
        let ch = LossChannel::new(1, 0.3, 4).unwrap();
        assert!(ch.completeness_error(&rho).unwrap() < 1e-12);
        let dense = rho.apply_kraus(&ch.kraus_operators(&rho).unwrap()).unwrap();
        assert!(crate::linalg::max_abs_diff(&dense.rho, &ch.apply(&rho).unwrap().rho) < 1e-15);
    }

    #[test]
    fn channel_statistics() {
        let (a, b, c) = channel_outcome_probs(0.1).unwrap();
        assert!((a - 0.81).abs() < 1e-15 && (b - 0.18).abs() < 1e-15 && (c - 0.01).abs() < 1e-15);
        assert_eq!(channel_outcome_probs(0.0).unwrap(), (1.0, 0.0, 0.0));
        assert!(channel_outcome_probs(-0.1).is_err());
    }

    #[test]
    fn recovery_channel_is_trace_preserving() {
        let rec = RecoveryChannel::from_circuit(&ideal()).unwrap();
        let d = DensityMatrix::empty(2, 4).dim();
        let s = rec.kraus.iter().fold(CMat::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        assert!(crate::linalg::max_abs_diff(&s, &CMat::identity(d, d)) < 1e-12);
    }

    #[test]
    fn unprotected_closed_form() {
        for eta in [0.0f64, 0.3, 0.9, 1.0] {
            let expect = 0.5 + eta / 6.0 + eta.sqrt() / 3.0;
            assert!((unprotected_fidelity(eta).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn lossless_curves_are_flat() {
        let rec = RecoveryChannel::from_circuit(&ideal()).unwrap();
        let curves = lifetime_experiment(f64::INFINITY, &LifetimeConfig::default(), &rec).unwrap();
        for r in &curves.rows {
            for f in [r.f_unprotected, r.f_uncorrected, r.f_corrected] {
                assert!((f - 1.0).abs() < 1e-12);
            }
        }
        assert!(curves.to_csv().starts_with("t,f_unprotected,f_uncorrected,f_corrected\n"));
    }
}
