//! Set-based translation registration of time-separated images.
//!
//! A whole image set is registered jointly: every image gets an integer
//! pixel offset (the first image is the fixed reference), chosen to maximize
//! a fitness function that sums normalized cross-correlations of
//! quasi-illumination-invariant representations over the edges of a
//! constraints graph.
//!
//! Pipeline:
//! 1. [`graph`] builds the constraints graph from pairwise Euclidean image
//!    distances (nearest/furthest-neighbour and threshold schemes).
//! 2. [`representation`] computes the ABS-HP representation, the absolute
//!    value of the Gaussian high-pass filtered image, at a given bandwidth.
//! 3. [`correlation`] precomputes, per edge, the full cross-correlation
//!    table in the Fourier domain and integral-image denominators, serving
//!    O(1) coefficient lookups over integer shifts.
//! 4. [`optimizer`] maximizes the set fitness by discrete steepest ascent,
//!    coarse-to-fine over a decreasing bandwidth schedule.
//!
//! [`dataset`] generates synthetic sets with exact ground truth and loads
//! real sets from disk; [`io`] handles PNG/PGM ingestion.

pub mod correlation;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod grid;
pub mod io;
pub mod optimizer;
pub mod representation;

pub use correlation::{build_table, build_tables, CorrelationParams, CorrelationTable, EdgeTables};
pub use error::{Result, SetRegError};
pub use graph::{build_graph, distance_matrix, ConstraintsGraph, GraphConfig, GraphScheme};
pub use grid::{euclidean_distance, integral_image, ImageGrid, ImageSet, Shift, ZERO_SHIFT};
pub use optimizer::{
    ascend_level, fitness, register_set, register_set_with_diagnostics, OptimizerConfig,
    RegistrationSolution,
};
pub use representation::{abs_highpass, gaussian_blur, GaussianKernel, PyramidSchedule, Representation};
