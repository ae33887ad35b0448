//! Exact charge-sector simulator and two-stage pulse compiler for a driven,
//! triply-resonant χ⁽²⁾ cavity.
//!
//! The cavity couples three bosonic modes `a`, `b`, `c` through the
//! frequency-doubling term `a b†² + h.c.` and a pump-controlled linear
//! term `p(t) b† c + h.c.`. Both conserve the charge `2 n_a + n_b + n_c`,
//! so every operator in this crate is stored block-diagonally, one dense
//! block per charge sector.
//!
//! Time is measured in units of `1/χ` throughout.

pub mod error;
pub mod fock;
pub mod gates;
pub mod hardware;
pub mod io;
pub mod lie;
pub mod linalg;
pub mod optimizer;
pub mod par;
pub mod propagator;
pub mod pulse;
pub mod qec;
pub mod spec;

pub use error::{Error, Result};
pub use fock::{
    build_annihilator, build_hamiltonian_terms, enumerate_sector, BlockOperator, ChargeSector,
    FockState, HamiltonianTerms, Mode, SectorSpace,
};
pub use propagator::{BlockUnitary, Cavity, StateVector, Trajectory};
pub use pulse::{PulseParams, SampledPulse, Segment};
pub use spec::{validate_spec, GateSpec, Ket, ValidationReport};

/// Convention string embedded in every artifact that carries a pulse.
pub const DRIVE_CONVENTION: &str =
    "H(t) = H_shg + Re(p) H_x + Im(p) H_y; H_shg = a b'^2 + h.c.; H_x = b' c + b c'; \
     H_y = i (b' c - b c'); segment propagator exp(-i H dt); time in units of 1/chi";
