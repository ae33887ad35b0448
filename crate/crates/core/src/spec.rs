//! Gate specifications: partial isometries given as input → target pairs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fock::FockState;
use crate::linalg::{C64, ZERO};

/// Sparse superposition of three-mode Fock states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ket {
    terms: BTreeMap<FockState, C64>,
}

impl Ket {
    pub fn basis(state: FockState) -> Self {
        Self::from_terms([(state, C64::new(1.0, 0.0))])
    }

    pub fn from_terms<I: IntoIterator<Item = (FockState, C64)>>(terms: I) -> Self {
        let mut k = Ket::default();
        for (s, a) in terms {
            *k.terms.entry(s).or_insert(ZERO) += a;
        }
        k
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FockState, &C64)> {
        self.terms.iter()
    }

    pub fn amplitude(&self, state: &FockState) -> C64 {
        self.terms.get(state).copied().unwrap_or(ZERO)
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { terms: self.terms.iter().map(|(s, a)| (*s, a * c)).collect() }
    }

    pub fn inner(&self, other: &Ket) -> C64 {
        self.terms.iter().map(|(s, a)| a.conj() * other.amplitude(s)).sum()
    }

    /// Inner product restricted to one charge sector.
    pub fn inner_in_sector(&self, other: &Ket, k: usize) -> C64 {
        self.terms
            .iter()
            .filter(|(s, _)| s.charge() == k)
            .map(|(s, a)| a.conj() * other.amplitude(s))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.sqrt()
    }

    /// Charges carrying amplitude above `tol`.
    pub fn charges(&self, tol: f64) -> BTreeSet<usize> {
        self.terms.iter().filter(|(_, a)| a.norm() > tol).map(|(s, _)| s.charge()).collect()
    }

    pub fn max_charge(&self) -> usize {
        self.terms.keys().map(FockState::charge).max().unwrap_or(0)
    }
}

fn triple_key(s: &FockState) -> String {
    format!("{},{},{}", s.n_a, s.n_b, s.n_c)
}

pub fn parse_triple_key(key: &str) -> Result<FockState> {
    let parts: Vec<&str> = key.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("basis key `{key}` must be `n_a,n_b,n_c`")));
    }
    let mut v = [0u32; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| Error::Parse(format!("bad occupation `{p}` in `{key}`")))?;
    }
    Ok(FockState::from(v))
}

impl Serialize for Ket {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let m: BTreeMap<String, [f64; 2]> = self.terms.iter().map(|(s, a)| (triple_key(s), [a.re, a.im])).collect();
        m.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Ket {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let m = BTreeMap::<String, [f64; 2]>::deserialize(de)?;
        let mut terms = Vec::with_capacity(m.len());
        for (k, v) in m {
            let s = parse_triple_key(&k).map_err(serde::de::Error::custom)?;
            terms.push((s, C64::new(v[0], v[1])));
        }
        Ok(Ket::from_terms(terms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecPair {
    pub input: Ket,
    pub target: Ket,
}

/// A gate given only on the listed inputs; everything else is free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub name: String,
    #[serde(default)]
    pub notes: String,
    pub pairs: Vec<SpecPair>,
}

impl GateSpec {
    pub fn new(name: impl Into<String>, notes: impl Into<String>, pairs: Vec<(Ket, Ket)>) -> Self {
        Self {
            name: name.into(),
            notes: notes.into(),
            pairs: pairs.into_iter().map(|(input, target)| SpecPair { input, target }).collect(),
        }
    }

    /// Spec built from basis-state pairs with real amplitudes.
    pub fn from_basis_pairs(name: &str, notes: &str, pairs: &[(FockState, f64, FockState)]) -> Self {
        Self::new(
            name,
            notes,
            pairs
                .iter()
                .map(|&(i, c, t)| (Ket::basis(i), Ket::basis(t).scaled(C64::new(c, 0.0))))
                .collect(),
        )
    }

    /// The same map run backwards (targets become inputs).
    pub fn reversed(&self) -> Self {
        Self {
            name: format!("{}_reverse", self.name),
            notes: self.notes.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| SpecPair { input: p.target.clone(), target: p.input.clone() })
                .collect(),
        }
    }

    /// Every charge touched by any input or target.
    pub fn sectors(&self) -> BTreeSet<usize> {
        self.pairs
            .iter()
            .flat_map(|p| p.input.charges(0.0).into_iter().chain(p.target.charges(0.0)))
            .collect()
    }

    pub fn max_charge(&self) -> usize {
        self.sectors().into_iter().max().unwrap_or(0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Error unless the spec passes [`validate_spec`].
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_spec(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("{}: {}", self.name, report)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    /// Input and target of one pair live in different charge sectors.
    ChargeMismatch { pair: usize, input: Vec<usize>, target: Vec<usize> },
    /// Inputs are not orthonormal: `⟨s_i|s_j⟩ ≠ δ_ij`.
    InputGram { i: usize, j: usize, overlap: [f64; 2] },
    /// Target overlaps disagree with input overlaps within one sector, so
    /// no charge-conserving unitary can realize the map.
    TargetGram { i: usize, j: usize, sector: usize, input: [f64; 2], target: [f64; 2] },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_charge_violation(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::ChargeMismatch { .. }))
    }

    pub fn has_gram_violation(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::InputGram { .. } | Violation::TargetGram { .. }))
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| format!("{v:?}")).collect();
        write!(f, "{}", parts.join("; "))
    }
}

const GRAM_TOL: f64 = 1e-9;

/// Charge conservation per pair, orthonormal inputs, and per-sector Gram
/// consistency between inputs and targets.
pub fn validate_spec(spec: &GateSpec) -> ValidationReport {
    let mut violations = Vec::new();
    if spec.pairs.is_empty() {
        violations.push(Violation::Empty);
    }
    for (n, p) in spec.pairs.iter().enumerate() {
        let ci = p.input.charges(GRAM_TOL);
        let ct = p.target.charges(GRAM_TOL);
        if ci != ct {
            violations.push(Violation::ChargeMismatch {
                pair: n,
                input: ci.into_iter().collect(),
                target: ct.into_iter().collect(),
            });
        }
    }
    let sectors = spec.sectors();
    for i in 0..spec.pairs.len() {
        for j in i..spec.pairs.len() {
            let (a, b) = (&spec.pairs[i], &spec.pairs[j]);
            let overlap = a.input.inner(&b.input);
            let expect = if i == j { 1.0 } else { 0.0 };
            if (overlap - C64::new(expect, 0.0)).norm() > GRAM_TOL {
                violations.push(Violation::InputGram { i, j, overlap: [overlap.re, overlap.im] });
            }
            for &k in &sectors {
                let gi = a.input.inner_in_sector(&b.input, k);
                let gt = a.target.inner_in_sector(&b.target, k);
                if (gi - gt).norm() > GRAM_TOL {
                    violations.push(Violation::TargetGram {
                        i,
                        j,
                        sector: k,
                        input: [gi.re, gi.im],
                        target: [gt.re, gt.im],
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}
