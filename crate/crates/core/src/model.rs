//! Shared domain types and their validation.

use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variances of the additive measurement errors `u = y − Y` and `v = x − X`,
/// separately for the response and the non-response stratum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorModel {
    pub sigma_u_sq: f64,
    pub sigma_v_sq: f64,
    pub sigma_u2_sq: f64,
    pub sigma_v2_sq: f64,
}

impl ErrorModel {
    pub const NONE: ErrorModel = ErrorModel {
        sigma_u_sq: 0.0,
        sigma_v_sq: 0.0,
        sigma_u2_sq: 0.0,
        sigma_v2_sq: 0.0,
    };

    /// Same variances in both strata.
    pub fn uniform(sigma_u_sq: f64, sigma_v_sq: f64) -> Self {
        ErrorModel {
            sigma_u_sq,
            sigma_v_sq,
            sigma_u2_sq: sigma_u_sq,
            sigma_v2_sq: sigma_v_sq,
        }
    }

    /// Error variances `(σu², σv²)` that apply to a unit of `stratum`.
    pub fn for_stratum(&self, stratum: Stratum) -> (f64, f64) {
        match stratum {
            Stratum::Respondent => (self.sigma_u_sq, self.sigma_v_sq),
            Stratum::NonRespondent => (self.sigma_u2_sq, self.sigma_v2_sq),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma_u_sq", self.sigma_u_sq),
            ("sigma_v_sq", self.sigma_v_sq),
            ("sigma_u2_sq", self.sigma_u2_sq),
            ("sigma_v2_sq", self.sigma_v2_sq),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::param(field, format!("error variance must be >= 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// Population and design parameters.
///
/// Serialized as a flat TOML table whose keys are the conventional symbols
/// (`n`, `N`, `W2`, `k`, `mu_y`, ..., `sigma_v2_sq`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FlatParameters", into = "FlatParameters")]
pub struct ParameterSet {
    /// First-phase sample size.
    pub n: usize,
    /// Population size; `None` means infinite (finite-population correction ignored).
    pub population_size: Option<usize>,
    /// Weight of the non-response stratum.
    pub w2: f64,
    /// Inverse subsampling fraction for non-respondents.
    pub k: f64,
    pub mu_y: f64,
    pub mu_x: f64,
    pub s_y: f64,
    pub s_x: f64,
    pub rho: f64,
    pub s_y2: f64,
    pub s_x2: f64,
    pub rho2: f64,
    /// Non-response stratum means; only needed to build a synthetic population.
    pub mu_y2: Option<f64>,
    pub mu_x2: Option<f64>,
    pub errors: ErrorModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct FlatParameters {
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    N: Option<usize>,
    W2: f64,
    k: f64,
    mu_y: f64,
    mu_x: f64,
    S_y: f64,
    S_x: f64,
    rho: f64,
    S_y2: f64,
    S_x2: f64,
    rho2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_y2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_x2: Option<f64>,
    sigma_u_sq: f64,
    sigma_v_sq: f64,
    sigma_u2_sq: f64,
    sigma_v2_sq: f64,
}

impl From<FlatParameters> for ParameterSet {
    fn from(f: FlatParameters) -> Self {
        ParameterSet {
            n: f.n,
            population_size: f.N,
            w2: f.W2,
            k: f.k,
            mu_y: f.mu_y,
            mu_x: f.mu_x,
            s_y: f.S_y,
            s_x: f.S_x,
            rho: f.rho,
            s_y2: f.S_y2,
            s_x2: f.S_x2,
            rho2: f.rho2,
            mu_y2: f.mu_y2,
            mu_x2: f.mu_x2,
            errors: ErrorModel {
                sigma_u_sq: f.sigma_u_sq,
                sigma_v_sq: f.sigma_v_sq,
                sigma_u2_sq: f.sigma_u2_sq,
                sigma_v2_sq: f.sigma_v2_sq,
            },
        }
    }
}

impl From<ParameterSet> for FlatParameters {
    fn from(p: ParameterSet) -> Self {
        FlatParameters {
            n: p.n,
            N: p.population_size,
            W2: p.w2,
            k: p.k,
            mu_y: p.mu_y,
            mu_x: p.mu_x,
            S_y: p.s_y,
            S_x: p.s_x,
            rho: p.rho,
            S_y2: p.s_y2,
            S_x2: p.s_x2,
            rho2: p.rho2,
            mu_y2: p.mu_y2,
            mu_x2: p.mu_x2,
            sigma_u_sq: p.errors.sigma_u_sq,
            sigma_v_sq: p.errors.sigma_v_sq,
            sigma_u2_sq: p.errors.sigma_u2_sq,
            sigma_v2_sq: p.errors.sigma_v2_sq,
        }
    }
}

impl ParameterSet {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()?).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    /// Checks every invariant and attaches `R = μy/μx`.
    pub fn validate(self) -> Result<ValidatedParameterSet> {
        let finite = [
            ("W2", self.w2),
            ("k", self.k),
            ("mu_y", self.mu_y),
            ("mu_x", self.mu_x),
            ("S_y", self.s_y),
            ("S_x", self.s_x),
            ("rho", self.rho),
            ("S_y2", self.s_y2),
            ("S_x2", self.s_x2),
            ("rho2", self.rho2),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(Error::param(field, "must be finite"));
            }
        }
        for (field, value) in [("mu_y2", self.mu_y2), ("mu_x2", self.mu_x2)] {
            if value.is_some_and(|v| !v.is_finite()) {
                return Err(Error::param(field, "must be finite"));
            }
        }
        if self.n < 2 {
            return Err(Error::param("n", format!("sample size must be >= 2, got {}", self.n)));
        }
        if !(0.0..=1.0).contains(&self.w2) {
            return Err(Error::param("W2", format!("W2 out of range [0, 1]: {}", self.w2)));
        }
        if self.k < 1.0 {
            return Err(Error::param("k", format!("k must be >= 1, got {}", self.k)));
        }
        if self.s_y <= 0.0 {
            return Err(Error::param("S_y", "S_y must be > 0"));
        }
        if self.s_x <= 0.0 {
            return Err(Error::param("S_x", "S_x must be > 0"));
        }
        if self.s_y2 < 0.0 {
            return Err(Error::param("S_y2", "S_y2 must be >= 0"));
        }
        if self.s_x2 < 0.0 {
            return Err(Error::param("S_x2", "S_x2 must be >= 0"));
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::param("rho", format!("rho out of range [-1, 1]: {}", self.rho)));
        }
        if self.rho2.abs() > 1.0 {
            return Err(Error::param("rho2", format!("rho2 out of range [-1, 1]: {}", self.rho2)));
        }
        if self.mu_x == 0.0 {
            return Err(Error::param("mu_x", "mu_x must be nonzero for ratio estimation"));
        }
        self.errors.validate()?;
        if let Some(pop) = self.population_size {
            if pop < self.n {
                return Err(Error::param("N", format!("N = {pop} is smaller than n = {}", self.n)));
            }
            let n2 = self.w2 * pop as f64;
            if (n2 - n2.round()).abs() > 1e-9 * pop as f64 {
                return Err(Error::param("W2", format!("W2·N = {n2} is not an integer")));
            }
        }
        let ratio = self.mu_y / self.mu_x;
        Ok(ValidatedParameterSet { params: self, ratio })
    }
}

/// A [`ParameterSet`] whose invariants have been checked, with `R = μy/μx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedParameterSet {
    params: ParameterSet,
    ratio: f64,
}

impl ValidatedParameterSet {
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn into_inner(self) -> ParameterSet {
        self.params
    }

    /// Non-response stratum size `W2·N`, when N is finite.
    pub fn nonrespondent_count(&self) -> Option<usize> {
        self.population_size
            .map(|pop| (self.w2 * pop as f64).round() as usize)
    }

    /// The same design with all four error variances set to zero.
    pub fn without_measurement_error(&self) -> ValidatedParameterSet {
        let mut p = self.params.clone();
        p.errors = ErrorModel::NONE;
        ValidatedParameterSet { params: p, ratio: self.ratio }
    }

    /// The same design with no non-response (`W2 = 0`).
    pub fn without_nonresponse(&self) -> ValidatedParameterSet {
        let mut p = self.params.clone();
        p.w2 = 0.0;
        ValidatedParameterSet { params: p, ratio: self.ratio }
    }
}

impl Deref for ValidatedParameterSet {
    type Target = ParameterSet;

    fn deref(&self) -> &ParameterSet {
        &self.params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stratum {
    Respondent,
    NonRespondent,
}

impl Stratum {
    /// Numeric label used in CSV files: 1 = respondent, 2 = non-respondent.
    pub fn label(self) -> u8 {
        match self {
            Stratum::Respondent => 1,
            Stratum::NonRespondent => 2,
        }
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1 => Some(Stratum::Respondent),
            2 => Some(Stratum::NonRespondent),
            _ => None,
        }
    }
}

/// `N` units with true values and a fixed response-stratum label.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    x_true: Vec<f64>,
    y_true: Vec<f64>,
    stratum: Vec<Stratum>,
    n1: usize,
    n2: usize,
}

impl FinitePopulation {
    pub fn new(x_true: Vec<f64>, y_true: Vec<f64>, stratum: Vec<Stratum>) -> Result<Self> {
        if x_true.len() != y_true.len() || x_true.len() != stratum.len() {
            return Err(Error::InvalidSpec(format!(
                "column lengths differ: x {}, y {}, stratum {}",
                x_true.len(),
                y_true.len(),
                stratum.len()
            )));
        }
        if x_true.is_empty() {
            return Err(Error::InvalidSpec("population is empty".into()));
        }
        let n2 = stratum.iter().filter(|s| **s == Stratum::NonRespondent).count();
        let n1 = stratum.len() - n2;
        Ok(FinitePopulation { x_true, y_true, stratum, n1, n2 })
    }

    pub fn size(&self) -> usize {
        self.x_true.len()
    }

    pub fn respondent_count(&self) -> usize {
        self.n1
    }

    pub fn nonrespondent_count(&self) -> usize {
        self.n2
    }

    pub fn w1(&self) -> f64 {
        self.n1 as f64 / self.size() as f64
    }

    pub fn w2(&self) -> f64 {
        self.n2 as f64 / self.size() as f64
    }

    pub fn x_true(&self) -> &[f64] {
        &self.x_true
    }

    pub fn y_true(&self) -> &[f64] {
        &self.y_true
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.stratum
    }

    pub fn stratum(&self, unit: usize) -> Stratum {
        self.stratum[unit]
    }

    pub fn mean_y(&self) -> f64 {
        mean(&self.y_true)
    }

    pub fn mean_x(&self) -> f64 {
        mean(&self.x_true)
    }

    /// Writes the `x_true,y_true,stratum` CSV dump.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x_true", "y_true", "stratum"])?;
        for i in 0..self.size() {
            w.write_record([
                self.x_true[i].to_string(),
                self.y_true[i].to_string(),
                self.stratum[i].label().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// One realization of the two-phase design.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRealization {
    pub sample_idx: Vec<usize>,
    pub respondent_idx: Vec<usize>,
    pub nonrespondent_idx: Vec<usize>,
    pub subsample_idx: Vec<usize>,
    pub x_obs_resp: Vec<f64>,
    pub y_obs_resp: Vec<f64>,
    pub x_obs_sub: Vec<f64>,
    pub y_obs_sub: Vec<f64>,
}

impl SampleRealization {
    pub fn n(&self) -> usize {
        self.sample_idx.len()
    }

    pub fn n1(&self) -> usize {
        self.respondent_idx.len()
    }

    pub fn n2(&self) -> usize {
        self.nonrespondent_idx.len()
    }

    pub fn r(&self) -> usize {
        self.subsample_idx.len()
    }

    pub fn w1(&self) -> f64 {
        self.n1() as f64 / self.n() as f64
    }

    pub fn w2(&self) -> f64 {
        self.n2() as f64 / self.n() as f64
    }
}

/// Hansen–Hurwitz means `ȳ* = w1·ȳ1 + w2·ȳ2r` and `x̄*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HhMeans {
    pub y_star: f64,
    pub x_star: f64,
}

/// Point estimates from one sample. Ratio-type estimates are `None` when
/// `x̄*` is too close to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub t1: f64,
    pub t_r: Option<f64>,
    pub t_lr: f64,
    pub t_p: Option<f64>,
    pub b_used: f64,
    pub m1_used: f64,
    pub m2_used: f64,
}

/// Scalars driving every first-order MSE formula.
///
/// `nq` is the auxiliary quadratic term (named to avoid a clash with the
/// population size `N`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMoments {
    pub a: f64,
    pub m: f64,
    pub nq: f64,
    pub o: f64,
    pub r: f64,
    pub e0_sq: f64,
    pub e1_sq: f64,
    pub e0e1: f64,
    pub c_y: f64,
    pub c_x: f64,
    pub c_y2: f64,
    pub c_x2: f64,
}

/// An MSE split into the columns of a "with/without error, with/without
/// non-response" table.
///
/// `total = baseline + me_contribution + nr_contribution`, where `baseline`
/// has no measurement error and no non-response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseDecomposition {
    pub without_error: f64,
    pub me_contribution: f64,
    pub nr_contribution: f64,
    pub total: f64,
    pub baseline: f64,
}

impl MseDecomposition {
    /// Builds the decomposition from the three evaluations of one MSE formula.
    pub fn from_scenarios(total: f64, without_error: f64, baseline: f64) -> Self {
        MseDecomposition {
            without_error,
            me_contribution: total - without_error,
            nr_contribution: without_error - baseline,
            total,
            baseline,
        }
    }
}
