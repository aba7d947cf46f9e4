//! State reconstruction from sparse point sensors.
//!
//! A POD basis `Phi` is extracted from training snapshots, `n` sensors are
//! placed by column-pivoted QR of `Phi^T`, and states are recovered as
//! `Phi (S^T Phi)^+ y + Phi z` for a kernel vector `z` in `N[S^T Phi]`. With
//! fewer sensors than modes the kernel coordinates are evolved by
//! `xi' = Z^T Phi^T f(u~(xi))`, driven by the measured time series.

pub mod assimilation;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod matrix;
pub mod pod;
pub mod properties;
pub mod reconstruction;
pub mod sensing;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use pod::{BasisMatrix, SnapshotSet};
pub use sensing::{DeimCore, SensorSelection};
