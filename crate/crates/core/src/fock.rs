//! Charge-sector bases of the three-mode Fock space and the operators that
//! act on them.
//!
//! Every Fock state `|n_a n_b n_c⟩` carries the charge `2 n_a + n_b + n_c`.
//! A [`ChargeSector`] lists all states of one charge in lexicographic order
//! of `(n_a, n_b, n_c)`; operators are stored as [`BlockOperator`]s holding
//! one dense matrix per source sector.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, I, ZERO};

/// Default highest charge built by a [`SectorSpace`]. Covers every gate in
/// the registry (charges up to 8 for the CPHASE core).
pub const DEFAULT_K_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    A,
    B,
    C,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::A, Mode::B, Mode::C];

    /// Charge carried by one photon of this mode.
    pub fn charge_weight(self) -> usize {
        match self {
            Mode::A => 2,
            Mode::B | Mode::C => 1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Mode::A => 0,
            Mode::B => 1,
            Mode::C => 2,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Mode::A),
            "b" | "B" => Ok(Mode::B),
            "c" | "C" => Ok(Mode::C),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// Occupation numbers of the three cavity modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct FockState {
    pub n_a: u32,
    pub n_b: u32,
    pub n_c: u32,
}

impl FockState {
    pub const VACUUM: FockState = FockState { n_a: 0, n_b: 0, n_c: 0 };

    pub const fn new(n_a: u32, n_b: u32, n_c: u32) -> Self {
        Self { n_a, n_b, n_c }
    }

    pub fn charge(&self) -> usize {
        2 * self.n_a as usize + self.n_b as usize + self.n_c as usize
    }

    pub fn get(&self, mode: Mode) -> u32 {
        match mode {
            Mode::A => self.n_a,
            Mode::B => self.n_b,
            Mode::C => self.n_c,
        }
    }

    fn with(mut self, mode: Mode, n: u32) -> Self {
        match mode {
            Mode::A => self.n_a = n,
            Mode::B => self.n_b = n,
            Mode::C => self.n_c = n,
        }
        self
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.n_a, self.n_b, self.n_c]
    }
}

impl From<[u32; 3]> for FockState {
    fn from(v: [u32; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<FockState> for [u32; 3] {
    fn from(s: FockState) -> Self {
        s.as_array()
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{},{}>", self.n_a, self.n_b, self.n_c)
    }
}

/// Complete, ordered basis of one charge sector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeSector {
    pub charge: usize,
    pub basis: Vec<FockState>,
}

impl ChargeSector {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, state: &FockState) -> Option<usize> {
        self.basis.binary_search(state).ok()
    }
}

/// All Fock states of charge `k`, lexicographically ascending in
/// `(n_a, n_b, n_c)`.
pub fn enumerate_sector(k: i64) -> Result<ChargeSector> {
    if k < 0 {
        return Err(Error::InvalidArgument(format!("charge must be non-negative, got {k}")));
    }
    let k = k as usize;
    let mut basis = Vec::new();
    for n_a in 0..=k / 2 {
        let rest = k - 2 * n_a;
        for n_b in 0..=rest {
            basis.push(FockState::new(n_a as u32, n_b as u32, (rest - n_b) as u32));
        }
    }
    Ok(ChargeSector { charge: k, basis })
}

/// The sectors `0..=k_max`, built once and shared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorSpace {
    pub k_max: usize,
    pub sectors: Vec<ChargeSector>,
}

impl SectorSpace {
    pub fn new(k_max: usize) -> Self {
        let sectors = (0..=k_max)
            .map(|k| enumerate_sector(k as i64).expect("non-negative charge"))
            .collect();
        Self { k_max, sectors }
    }

    pub fn sector(&self, k: usize) -> Result<&ChargeSector> {
        self.sectors
            .get(k)
            .ok_or(Error::SectorOutOfRange { charge: k, k_max: self.k_max })
    }

    pub fn dim(&self, k: usize) -> Result<usize> {
        Ok(self.sector(k)?.dim())
    }

    /// Sector charge and in-sector index of a Fock state.
    pub fn locate(&self, state: &FockState) -> Result<(usize, usize)> {
        let k = state.charge();
        let idx = self.sector(k)?.index_of(state).expect("complete sector basis");
        Ok((k, idx))
    }
}

/// One dense block of a [`BlockOperator`], mapping sector `source` into
/// sector `target`. Rows index the target basis, columns the source basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub source: usize,
    pub target: usize,
    pub matrix: CMat,
}

/// Operator stored per source sector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockOperator {
    pub blocks: BTreeMap<usize, Block>,
}

impl BlockOperator {
    pub fn block(&self, source: usize) -> Option<&Block> {
        self.blocks.get(&source)
    }

    /// Dense matrix of a charge-conserving operator on sector `k`.
    pub fn diagonal_block(&self, k: usize) -> Option<&CMat> {
        self.blocks.get(&k).filter(|b| b.target == k).map(|b| &b.matrix)
    }

    pub fn is_charge_conserving(&self) -> bool {
        self.blocks.values().all(|b| b.source == b.target)
    }

    pub fn adjoint(&self) -> BlockOperator {
        let blocks = self
            .blocks
            .values()
            .map(|b| {
                (b.target, Block { source: b.target, target: b.source, matrix: b.matrix.adjoint() })
            })
            .collect();
        BlockOperator { blocks }
    }

    /// `self ∘ rhs` (apply `rhs` first). Blocks whose intermediate sector is
    /// missing from `self` are dropped.
    pub fn compose(&self, rhs: &BlockOperator) -> BlockOperator {
        let blocks = rhs
            .blocks
            .values()
            .filter_map(|r| {
                self.blocks.get(&r.target).map(|l| {
                    (r.source, Block { source: r.source, target: l.target, matrix: &l.matrix * &r.matrix })
                })
            })
            .collect();
        BlockOperator { blocks }
    }
}

/// A product of ladder operators, applied right to left.
#[derive(Debug, Clone, Copy)]
enum Ladder {
    Create(Mode),
    Annihilate(Mode),
}

fn apply_ladders(ops: &[Ladder], state: FockState) -> Option<(f64, FockState)> {
    let mut amp = 1.0;
    let mut s = state;
    for op in ops.iter().rev() {
        match *op {
            Ladder::Create(m) => {
                let n = s.get(m);
                amp *= ((n + 1) as f64).sqrt();
                s = s.with(m, n + 1);
            }
            Ladder::Annihilate(m) => {
                let n = s.get(m);
                if n == 0 {
                    return None;
                }
                amp *= (n as f64).sqrt();
                s = s.with(m, n - 1);
            }
        }
    }
    Some((amp, s))
}

/// Sum of `coefficient × monomial` terms as a block operator over sectors
/// `0..=k_max`. All monomials must share the same charge shift.
fn build_from_monomials(space: &SectorSpace, terms: &[(C64, &[Ladder])], shift: i64) -> BlockOperator {
    let mut blocks = BTreeMap::new();
    for src in &space.sectors {
        let tgt_k = src.charge as i64 + shift;
        if tgt_k < 0 {
            continue;
        }
        let tgt = enumerate_sector(tgt_k).expect("non-negative");
        let mut m = CMat::zeros(tgt.dim(), src.dim());
        for (j, &st) in src.basis.iter().enumerate() {
            for (coef, ops) in terms {
                if let Some((amp, out)) = apply_ladders(ops, st) {
                    let i = tgt.index_of(&out).expect("charge shift is consistent");
                    m[(i, j)] += coef * amp;
                }
            }
        }
        blocks.insert(src.charge, Block { source: src.charge, target: tgt.charge, matrix: m });
    }
    BlockOperator { blocks }
}

/// The three Hermitian pieces of the cavity Hamiltonian (units of `ħχ`):
/// `H(t) = shg + Re(p)·x + Im(p)·y`.
#[derive(Debug, Clone)]
pub struct HamiltonianTerms {
    /// `a b†² + a† b²`
    pub shg: BlockOperator,
    /// `b† c + b c†`
    pub x: BlockOperator,
    /// `i (b† c − b c†)`
    pub y: BlockOperator,
}

pub fn build_hamiltonian_terms(k_max: usize) -> HamiltonianTerms {
    use Ladder::*;
    use Mode::*;
    let space = SectorSpace::new(k_max);
    let one = C64::new(1.0, 0.0);
    let shg = build_from_monomials(
        &space,
        &[(one, &[Annihilate(A), Create(B), Create(B)]), (one, &[Create(A), Annihilate(B), Annihilate(B)])],
        0,
    );
    let x = build_from_monomials(&space, &[(one, &[Create(B), Annihilate(C)]), (one, &[Annihilate(B), Create(C)])], 0);
    let y = build_from_monomials(&space, &[(I, &[Create(B), Annihilate(C)]), (-I, &[Annihilate(B), Create(C)])], 0);
    HamiltonianTerms { shg, x, y }
}

/// Annihilation operator of `mode` on sectors `0..=k_max`. Sectors whose
/// charge is below the mode's charge weight are omitted.
pub fn build_annihilator(mode: Mode, k_max: usize) -> BlockOperator {
    let space = SectorSpace::new(k_max);
    let shift = -(mode.charge_weight() as i64);
    build_from_monomials(&space, &[(C64::new(1.0, 0.0), &[Ladder::Annihilate(mode)])], shift)
}

/// Diagonal number operator of `mode`.
pub fn number_operator(mode: Mode, k_max: usize) -> BlockOperator {
    let space = SectorSpace::new(k_max);
    let mut blocks = BTreeMap::new();
    for sec in &space.sectors {
        let mut m = CMat::zeros(sec.dim(), sec.dim());
        for (i, s) in sec.basis.iter().enumerate() {
            m[(i, i)] = C64::new(s.get(mode) as f64, 0.0);
        }
        blocks.insert(sec.charge, Block { source: sec.charge, target: sec.charge, matrix: m });
    }
    BlockOperator { blocks }
}

// --- JSON forms -------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BlockJson {
    pub source: usize,
    pub target: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `[re, im]` pairs.
    pub data: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BlockOperatorJson {
    pub blocks: Vec<BlockJson>,
}

impl From<&BlockOperator> for BlockOperatorJson {
    fn from(op: &BlockOperator) -> Self {
        let blocks = op
            .blocks
            .values()
            .map(|b| {
                let (rows, cols) = b.matrix.shape();
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for j in 0..cols {
                        let z = b.matrix[(i, j)];
                        data.push([z.re, z.im]);
                    }
                }
                BlockJson { source: b.source, target: b.target, rows, cols, data }
            })
            .collect();
        BlockOperatorJson { blocks }
    }
}

impl TryFrom<BlockOperatorJson> for BlockOperator {
    type Error = Error;

    fn try_from(j: BlockOperatorJson) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        for b in j.blocks {
            if b.data.len() != b.rows * b.cols {
                return Err(Error::Parse(format!(
                    "block {}->{}: expected {} entries, found {}",
                    b.source,
                    b.target,
                    b.rows * b.cols,
                    b.data.len()
                )));
            }
            let matrix = CMat::from_row_iterator(b.rows, b.cols, b.data.iter().map(|z| C64::new(z[0], z[1])));
            blocks.insert(b.source, Block { source: b.source, target: b.target, matrix });
        }
        Ok(BlockOperator { blocks })
    }
}

/// Matrix element `⟨bra| op |ket⟩`.
pub fn matrix_element(op: &BlockOperator, bra: FockState, ket: FockState) -> C64 {
    let Some(block) = op.block(ket.charge()) else { return ZERO };
    if block.target != bra.charge() {
        return ZERO;
    }
    let src = enumerate_sector(block.source as i64).expect("valid");
    let tgt = enumerate_sector(block.target as i64).expect("valid");
    match (tgt.index_of(&bra), src.index_of(&ket)) {
        (Some(i), Some(j)) => block.matrix[(i, j)],
        _ => ZERO,
    }
}
