//! Exact piecewise-constant time evolution, one charge sector at a time.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fock::{build_hamiltonian_terms, FockState, SectorSpace, DEFAULT_K_MAX};
use crate::linalg::{unitarity_error, CMat, CVec, HermitianEigen, C64, ZERO};
use crate::par::{self, ExecMode};
use crate::pulse::Segment;
use crate::spec::Ket;

/// Dense Hamiltonian pieces of one sector, plus the sparse nonzeros of the
/// drive terms (used by the gradient).
#[derive(Debug, Clone)]
pub struct SectorTerms {
    pub charge: usize,
    pub basis: Vec<FockState>,
    pub shg: CMat,
    pub x: CMat,
    pub y: CMat,
    pub x_nonzeros: Vec<(usize, usize, C64)>,
    pub y_nonzeros: Vec<(usize, usize, C64)>,
}

fn nonzeros(m: &CMat) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != ZERO {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

impl SectorTerms {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn hamiltonian(&self, p: C64) -> CMat {
        let mut h = self.shg.clone();
        for &(i, j, v) in &self.x_nonzeros {
            h[(i, j)] += v * p.re;
        }
        for &(i, j, v) in &self.y_nonzeros {
            h[(i, j)] += v * p.im;
        }
        h
    }
}

/// The driven cavity restricted to charges `0..=k_max`. Immutable once
/// built and cheap to share between threads.
#[derive(Debug, Clone)]
pub struct Cavity {
    k_max: usize,
    sectors: Vec<SectorTerms>,
    exec: ExecMode,
}

impl Default for Cavity {
    fn default() -> Self {
        Self::new(DEFAULT_K_MAX)
    }
}

pub(crate) fn check_segments(segments: &[Segment]) -> Result<()> {
    for (l, s) in segments.iter().enumerate() {
        if !s.duration.is_finite() || s.duration < 0.0 {
            return Err(Error::InvalidArgument(format!("segment {l}: bad duration {}", s.duration)));
        }
        if !s.amplitude.re.is_finite() || !s.amplitude.im.is_finite() {
            return Err(Error::InvalidArgument(format!("segment {l}: non-finite amplitude")));
        }
    }
    Ok(())
}

impl Cavity {
    pub fn new(k_max: usize) -> Self {
        let space = SectorSpace::new(k_max);
        let terms = build_hamiltonian_terms(k_max);
        let sectors = space
            .sectors
            .iter()
            .map(|sec| {
                let k = sec.charge;
                let get = |op: &crate::fock::BlockOperator| op.diagonal_block(k).expect("charge conserving").clone();
                let (shg, x, y) = (get(&terms.shg), get(&terms.x), get(&terms.y));
                SectorTerms {
                    charge: k,
                    basis: sec.basis.clone(),
                    x_nonzeros: nonzeros(&x),
                    y_nonzeros: nonzeros(&y),
                    shg,
                    x,
                    y,
                }
            })
            .collect();
        Self { k_max, sectors, exec: ExecMode::default() }
    }

    pub fn with_exec_mode(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec_mode(&self) -> ExecMode {
        self.exec
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn sector(&self, k: usize) -> Result<&SectorTerms> {
        self.sectors.get(k).ok_or(Error::SectorOutOfRange { charge: k, k_max: self.k_max })
    }

    /// `exp(-i H(p) dt)` on sector `k`.
    pub fn segment_propagator(&self, k: usize, amplitude: C64, dt: f64) -> Result<CMat> {
        check_segments(&[Segment { duration: dt, amplitude }])?;
        let sec = self.sector(k)?;
        if dt == 0.0 {
            return Ok(CMat::identity(sec.dim(), sec.dim()));
        }
        Ok(HermitianEigen::new(&sec.hamiltonian(amplitude)).propagator(dt))
    }

    /// Ordered product `U_s ⋯ U_1` on sector `k`.
    pub fn sector_unitary(&self, k: usize, segments: &[Segment]) -> Result<CMat> {
        check_segments(segments)?;
        let sec = self.sector(k)?;
        let mut u = CMat::identity(sec.dim(), sec.dim());
        for s in segments {
            if s.duration == 0.0 {
                continue;
            }
            u = HermitianEigen::new(&sec.hamiltonian(s.amplitude)).propagator(s.duration) * u;
        }
        Ok(u)
    }

    /// Pulse unitary on the listed sectors. Sectors are independent and are
    /// evaluated in parallel when the execution mode allows it.
    pub fn pulse_unitary(&self, segments: &[Segment], sectors: &[usize]) -> Result<BlockUnitary> {
        check_segments(segments)?;
        for &k in sectors {
            self.sector(k)?;
        }
        let mats = par::map_slice(self.exec, sectors, |&k| self.sector_unitary(k, segments));
        let mut blocks = BTreeMap::new();
        for (&k, m) in sectors.iter().zip(mats) {
            blocks.insert(k, m?);
        }
        Ok(BlockUnitary { blocks })
    }

    /// Pulse unitary on every built sector.
    pub fn full_unitary(&self, segments: &[Segment]) -> Result<BlockUnitary> {
        let all: Vec<usize> = (0..=self.k_max).collect();
        self.pulse_unitary(segments, &all)
    }

    /// Evolve `initial` through `segments`, recording populations on a
    /// grid of step `record_every` plus every segment boundary. `None`
    /// records ten evenly spaced samples per segment.
    pub fn propagate(
        &self,
        segments: &[Segment],
        initial: &StateVector,
        record_every: Option<f64>,
    ) -> Result<(StateVector, Trajectory)> {
        check_segments(segments)?;
        if let Some(r) = record_every {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!("record interval must be positive, got {r}")));
            }
        }
        for &k in initial.sectors.keys() {
            self.sector(k)?;
        }
        let mut state = initial.clone();
        let mut traj = Trajectory::default();
        traj.push(0.0, &state);
        let mut t0 = 0.0;
        for s in segments {
            if s.duration == 0.0 {
                continue;
            }
            let t1 = t0 + s.duration;
            let mut times = Vec::new();
            match record_every {
                Some(r) => {
                    let mut n = (t0 / r).floor() as u64 + 1;
                    while (n as f64) * r < t1 - 1e-12 {
                        let t = n as f64 * r;
                        if t > t0 + 1e-12 {
                            times.push(t);
                        }
                        n += 1;
                    }
                }
                None => times.extend((1..10).map(|j| t0 + s.duration * j as f64 / 10.0)),
            }
            times.push(t1);

            let mut eig = BTreeMap::new();
            let mut coeffs = BTreeMap::new();
            for (&k, v) in &state.sectors {
                let e = HermitianEigen::new(&self.sector(k)?.hamiltonian(s.amplitude));
                coeffs.insert(k, e.vectors.adjoint() * v);
                eig.insert(k, e);
            }
            for &t in &times {
                let dt = t - t0;
                let mut next = BTreeMap::new();
                for (&k, e) in &eig {
                    let c = &coeffs[&k];
                    let phased = CVec::from_iterator(
                        c.len(),
                        c.iter().zip(&e.values).map(|(ci, &lam)| ci * C64::from_polar(1.0, -lam * dt)),
                    );
                    next.insert(k, &e.vectors * phased);
                }
                let snap = StateVector { sectors: next };
                traj.push(t, &snap);
                if t == t1 {
                    state = snap;
                }
            }
            t0 = t1;
        }
        Ok((state, traj))
    }
}

/// Charge-conserving unitary stored as one dense block per sector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockUnitary {
    pub blocks: BTreeMap<usize, CMat>,
}

impl BlockUnitary {
    pub fn identity(sectors: &[usize]) -> Self {
        let blocks = sectors
            .iter()
            .map(|&k| {
                let d = crate::fock::enumerate_sector(k as i64).expect("non-negative").dim();
                (k, CMat::identity(d, d))
            })
            .collect();
        Self { blocks }
    }

    pub fn block(&self, k: usize) -> Option<&CMat> {
        self.blocks.get(&k)
    }

    pub fn sectors(&self) -> Vec<usize> {
        self.blocks.keys().copied().collect()
    }

    /// Inverse, which for a unitary is the adjoint.
    pub fn adjoint(&self) -> Self {
        Self { blocks: self.blocks.iter().map(|(&k, m)| (k, m.adjoint())).collect() }
    }

    /// `later · self` on the sectors of `self`.
    pub fn then(&self, later: &BlockUnitary) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        for (&k, m) in &self.blocks {
            let l = later
                .blocks
                .get(&k)
                .ok_or_else(|| Error::InvalidArgument(format!("sector {k} missing from composed unitary")))?;
            blocks.insert(k, l * m);
        }
        Ok(Self { blocks })
    }

    pub fn max_unitarity_error(&self) -> f64 {
        self.blocks.values().map(unitarity_error).fold(0.0, f64::max)
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let mut sectors = BTreeMap::new();
        for (&k, v) in &state.sectors {
            let m = self
                .blocks
                .get(&k)
                .ok_or_else(|| Error::InvalidArgument(format!("unitary has no block for sector {k}")))?;
            sectors.insert(k, m * v);
        }
        Ok(StateVector { sectors })
    }

    pub fn apply_ket(&self, ket: &Ket) -> Result<Ket> {
        Ok(self.apply(&StateVector::from_ket(ket)?)?.to_ket())
    }
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    charge: usize,
    dim: usize,
    /// Row-major `[re, im]` entries.
    data: Vec<[f64; 2]>,
}

impl Serialize for BlockUnitary {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<BlockJson> = self
            .blocks
            .iter()
            .map(|(&k, m)| BlockJson {
                charge: k,
                dim: m.nrows(),
                data: (0..m.nrows())
                    .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                    .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
                    .collect(),
            })
            .collect();
        v.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for BlockUnitary {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<BlockJson>::deserialize(de)?;
        let mut blocks = BTreeMap::new();
        for b in v {
            if b.data.len() != b.dim * b.dim {
                return Err(serde::de::Error::custom(format!("sector {} block has wrong size", b.charge)));
            }
            let m = CMat::from_row_iterator(b.dim, b.dim, b.data.iter().map(|z| C64::new(z[0], z[1])));
            blocks.insert(b.charge, m);
        }
        Ok(Self { blocks })
    }
}

/// Pure state as a direct sum over charge sectors; each vector is aligned
/// with that sector's basis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateVector {
    pub sectors: BTreeMap<usize, CVec>,
}

impl StateVector {
    pub fn from_fock(state: FockState) -> Self {
        Self::from_ket(&Ket::basis(state)).expect("basis states always embed")
    }

    pub fn from_ket(ket: &Ket) -> Result<Self> {
        let mut sectors: BTreeMap<usize, CVec> = BTreeMap::new();
        for (s, &a) in ket.terms() {
            let sec = crate::fock::enumerate_sector(s.charge() as i64)?;
            let v = sectors.entry(sec.charge).or_insert_with(|| CVec::zeros(sec.dim()));
            v[sec.index_of(s).expect("complete basis")] += a;
        }
        Ok(Self { sectors })
    }

    pub fn to_ket(&self) -> Ket {
        let mut terms = Vec::new();
        for (&k, v) in &self.sectors {
            let sec = crate::fock::enumerate_sector(k as i64).expect("non-negative");
            for (s, &a) in sec.basis.iter().zip(v.iter()) {
                if a != ZERO {
                    terms.push((*s, a));
                }
            }
        }
        Ket::from_terms(terms)
    }

    pub fn norm(&self) -> f64 {
        self.sectors.values().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.sectors
            .iter()
            .filter_map(|(k, v)| other.sectors.get(k).map(|w| v.dotc(w)))
            .sum()
    }

    /// `⟨n_a⟩, ⟨n_b⟩, ⟨n_c⟩`.
    pub fn populations(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (&k, v) in &self.sectors {
            let sec = crate::fock::enumerate_sector(k as i64).expect("non-negative");
            for (s, a) in sec.basis.iter().zip(v.iter()) {
                let p = a.norm_sqr();
                out[0] += p * s.n_a as f64;
                out[1] += p * s.n_b as f64;
                out[2] += p * s.n_c as f64;
            }
        }
        out
    }
}

impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_ket().serialize(ser)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let ket = Ket::deserialize(de)?;
        StateVector::from_ket(&ket).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub populations: [f64; 3],
    pub state: StateVector,
}

/// Mode populations (and state snapshots) sampled along a propagation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    fn push(&mut self, t: f64, state: &StateVector) {
        self.samples.push(TrajectorySample { t, populations: state.populations(), state: state.clone() });
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Largest deviation of `2⟨n_a⟩+⟨n_b⟩+⟨n_c⟩` from its initial value.
    pub fn charge_drift(&self) -> f64 {
        let q = |p: &[f64; 3]| 2.0 * p[0] + p[1] + p[2];
        let Some(first) = self.samples.first() else { return 0.0 };
        let q0 = q(&first.populations);
        self.samples.iter().map(|s| (q(&s.populations) - q0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,n_a,n_b,n_c,charge\n");
        for s in &self.samples {
            let [a, b, c] = s.populations;
            writeln!(out, "{},{},{},{},{}", s.t, a, b, c, 2.0 * a + b + c).expect("writing to a String");
        }
        out
    }
}
