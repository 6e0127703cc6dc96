//! Benchmark harness: problem generators, experiment drivers, Matrix
//! Market I/O and CSV/JSON reporting for the solver kit.

pub mod experiment;
pub mod gen;
pub mod mm;
pub mod report;
