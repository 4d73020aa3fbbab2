//! Arithmetic in the residue rings of unramified extensions of `Q_p`.

mod field;
mod padic;
mod phase;
mod ring;
mod symbols;

pub use field::FieldSpec;
pub use padic::{CoeffJson, InfTag, PadicApprox, ValJson};
pub use phase::Phase;
pub use ring::{enumerate_ring, trace_vector, RingElem, RingElemJson};
pub use symbols::{
    epi_phase, eta_char, eta_of_ring, legendre_symbol, phase_of_scaled, residue_field, teichmuller_digits,
    teichmuller_lift, teichmuller_units,
};
