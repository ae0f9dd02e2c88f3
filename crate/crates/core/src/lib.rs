//! Weighted K-stability data for toric Kähler manifolds given by labelled polytopes.
//!
//! The crate works entirely in momentum coordinates on a labelled polytope
//! `△ = {L_i >= 0}` with a positive affine weight `f`:
//!
//! - [`polytope`]: labels, vertex/facet enumeration, the facet measure `dσ`.
//! - [`quadrature`]: graded simplex quadrature against `dμ/f^k` and `dσ/f^k`.
//! - [`potentials`]: symplectic potentials (Guillemin part plus polynomial
//!   perturbation) with derivative jets, PL convex functions, normalization.
//! - [`curvature`]: weighted Abreu operator, boundary-condition and
//!   integration-by-parts checks.
//! - [`stability`]: extremal affine function, Donaldson–Futaki invariant,
//!   boundary norm, stability scans.
//! - [`energy`]: weighted relative K-energy, its gradient, and descent.
//! - [`io`]: JSON spec files and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod curvature;
pub mod energy;
pub mod error;
pub mod io;
pub mod polytope;
pub mod potentials;
pub mod quadrature;
pub mod stability;

pub use energy::{EnergyContext, EnergyValue, MinimizeOptions, MinimizeResult};
pub use error::{Error, Result};
pub use polytope::{
    build_polytope, facet_measure, validate_weight, AffineFunction, CheckedWeight, FacetMeasure,
    LabelledPolytope,
};
pub use potentials::{PLConvexFunction, Polynomial, PotentialJet, SymplecticPotential};
pub use quadrature::{Quadrature, QuadratureScheme};
pub use stability::{ExtremalAffineSolution, ScanConfig, StabilityReport};
