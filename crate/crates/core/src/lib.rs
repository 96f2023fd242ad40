//! Age-gap biomarker pipeline: volumetric preprocessing, slice-level age
//! regression, per-patient gap aggregation and epidemiological evaluation.

pub mod cohort;
pub mod imaging;
pub mod pag;
pub mod regressor;
pub mod report;
pub mod stats;
pub mod synth;
