//! Rauzy-Veech induction on zippered rectangles, thermodynamic formalism on
//! finite full shifts, suspension flows, and large-deviation experiments.
//!
//! * [`rauzy`] - irreducible permutations, the a/b operations and their
//!   unimodular matrices, Rauzy classes.
//! * [`zippered`] - zippered rectangles, the scaling flow, the induction
//!   step, the renormalization roof, itineraries, and the log-ratio metric.
//! * [`shift`] - full-shift configurations, observables, variation moduli,
//!   Birkhoff sums, periodic points, and the coboundary test.
//! * [`thermo`] - transfer matrices, pressure, Gibbs equilibrium measures,
//!   pressure curves, rate functions, deviation bounds, exact enumeration.
//! * [`suspension`] - lap numbers, flow evolution, fiber integrals and the
//!   time decomposition, induced-measure sampling, roof-tail certificates.
//! * [`ldlab`] - deviation experiments (exact / tilted Monte Carlo), slope
//!   fits, composite bounds, and the renormalized-induction demonstration.

pub mod error;
pub mod ldlab;
pub mod rauzy;
pub mod shift;
pub mod suspension;
pub mod thermo;
pub mod zippered;

pub use error::{Error, Result};
pub use rauzy::{Permutation, RauzyClass};
pub use shift::{Configuration, Observable, TableObservable};
pub use suspension::{FlowObservable, Roof, SuspensionPoint};
pub use thermo::{MarkovGibbsMeasure, Potential};
pub use zippered::ZipperedRectangle;
