//! Simulation and verification toolkit for one-dimensional SDEs perturbed
//! by their running maximum, running minimum and/or local time at zero.
//!
//! Four equation families are supported:
//!
//! * max-perturbed: `X_t = ∫σ dW + ∫b ds + α·max X`
//! * reflected max-perturbed: the same plus a reflecting local-time term
//!   `L_t^0` keeping `X ≥ 0`
//! * max-in-drift: `X_t = x + W_t + ∫ b(X_s, max X) ds`
//! * doubly perturbed: `X_t = ξ + ∫σ dW + ∫b ds + α·max X + β·min X`
//!
//! The crate splits into a pure path-transform kernel ([`paths`]), problem
//! definitions ([`models`]), per-step implicit solvers ([`stepper`]), a
//! whole-path Picard fixed-point solver ([`picard`]), closed-form oracles and
//! measure-level tools ([`measure`]), statistical verification studies
//! ([`verify`]) and a batch CLI front end ([`cli`]).

// parameter guards are written as negated range checks on purpose: the
// negation also rejects NaN, which `partial_cmp`-style rewrites would let
// through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod measure;
pub mod models;
pub mod paths;
pub mod picard;
pub mod stepper;
pub mod verify;
