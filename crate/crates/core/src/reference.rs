//! Published reference values for the consumption/income example.

use serde::Serialize;

use crate::model::{ErrorModel, ParameterSet};

/// Parameter values as published (k, N and the non-response error variances
/// are not part of the published table; `k` is set to 2 and the stratum-2
/// error variances to the stratum-1 values).
pub fn published_moments() -> ParameterSet {
    ParameterSet {
        n: 70,
        population_size: None,
        w2: 0.25,
        k: ASSUMED_K,
        mu_y: 981.29,
        mu_x: 1755.53,
        s_y: 613.66,
        s_x: 1406.13,
        rho: 0.778,
        s_y2: 244.11,
        s_x2: 631.51,
        rho2: 0.445,
        mu_y2: Some(597.29),
        mu_x2: Some(1100.24),
        errors: ErrorModel::uniform(36.0, 36.0),
    }
}

/// Published ratio `R`, printed to four decimals.
pub const PRINTED_RATIO: f64 = 0.5589;

pub const ASSUMED_K: f64 = 2.0;
pub const ASSUMED_SIGMA_U2_SQ: f64 = 36.0;
pub const ASSUMED_SIGMA_V2_SQ: f64 = 36.0;
pub const REFERENCE_POPULATION: usize = 7000;

/// Default simulation design: the published moments with N = 7000, k = 2
/// and σu2² = σv2² = 36.
pub fn reference_design() -> ParameterSet {
    ParameterSet {
        population_size: Some(REFERENCE_POPULATION),
        ..published_moments()
    }
}

/// One row of the published MSE table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrintedRow {
    pub estimator: &'static str,
    pub without_error: f64,
    pub me_contribution: f64,
    pub nr_contribution: f64,
    pub total: f64,
}

impl PrintedRow {
    pub fn column_sum(&self) -> f64 {
        self.without_error + self.me_contribution + self.nr_contribution
    }
}

pub const PRINTED_TABLE: [PrintedRow; 4] = [
    PrintedRow {
        estimator: "t1",
        without_error: 10759.39,
        me_contribution: 1.03,
        nr_contribution: 2553.840,
        total: 13313.58,
    },
    PrintedRow {
        estimator: "t_r",
        without_error: 6967.135,
        me_contribution: 1.35,
        nr_contribution: 4607.335,
        total: 11574.92,
    },
    PrintedRow {
        estimator: "t_lr",
        without_error: 4246.903,
        me_contribution: 0.86,
        nr_contribution: 2527.751,
        total: 6775.036,
    },
    PrintedRow {
        estimator: "t_p",
        without_error: 4246.903,
        me_contribution: 0.86,
        nr_contribution: 2527.751,
        total: 6775.036,
    },
];
