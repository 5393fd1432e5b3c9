//! Numerical toolkit for the metric gap characteristic of discrete real
//! sequences: logarithmic energies, short partitions, interior and
//! Beurling–Malliavin densities, point spreading, Fekete points, Gram-matrix
//! spectral-gap probes and Krein-shift residue weights.

mod error;
mod fit;

pub mod clarknum;
pub mod density;
pub mod energy;
pub mod fekete;
pub mod gapnum;
pub mod partitions;
pub mod regularize;
pub mod seqcore;

pub use error::{GapError, Result};
pub use seqcore::{AtomicMeasure, Interval, Partition, PointSequence, SequenceLaw};
