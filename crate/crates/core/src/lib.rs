//! Hybrid reduced-order modeling of pulsatile channel flow.
//!
//! The offline stage runs a staggered-grid Navier–Stokes solver with
//! three-element Windkessel outlets, lifts the boundary data out of the
//! snapshots, compresses them with POD and projects the equations onto the
//! modes. A small feedforward network learns the outlet pressure as a
//! function of time, and the online stage integrates the reduced system and
//! reconstructs full fields.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod affine;
pub mod error;
pub mod fom;
pub mod grid;
pub mod io;
pub mod lifting;
pub mod linalg;
pub mod nn;
pub mod ops;
pub mod pipeline;
pub mod pod;
pub mod rom;
pub mod windkessel;

pub use error::{Result, RomError};
pub use grid::{build_grid, inner_product, l2_norm, Field, FieldKind, Grid, SnapshotSet};
