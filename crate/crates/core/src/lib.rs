//! Estimation of a finite-population mean when part of the sample does not
//! respond at the first attempt (Hansen–Hurwitz subsampling of non-respondents)
//! and both the study variable `y` and the auxiliary variable `x` are observed
//! with additive measurement error.
//!
//! The crate pairs two independent routes to the same quantities:
//!
//! * [`theory`]: closed-form first-order bias and MSE for the mean-per-unit
//!   estimator `t1`, the ratio estimator `t_r`, the regression estimator `t_lr`
//!   and the two-weight class `t_p = m1·ȳ* + m2·(ȳ*/x̄*)·X̄`;
//! * [`montecarlo`]: a seeded, worker-count-independent simulator that draws
//!   two-phase samples from a synthetic [`FinitePopulation`] built by
//!   [`popgen`] and measures the same MSEs empirically.
//!
//! [`ingest`] turns a paired true/measured dataset into a [`ParameterSet`],
//! and [`report`] renders the tables the `hhme` CLI prints.

pub mod accum;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod model;
pub mod montecarlo;
pub mod popgen;
pub mod reference;
pub mod report;
pub mod sampling;
pub mod theory;

pub use error::{Error, Result};
pub use model::{
    DerivedMoments, ErrorModel, EstimateSet, FinitePopulation, HhMeans, MseDecomposition,
    ParameterSet, SampleRealization, Stratum, ValidatedParameterSet,
};
pub use montecarlo::{Coefficients, MonteCarloReport, RunConfig};
pub use popgen::PopulationSpec;
