//! Synthetic finite populations with exactly prescribed stratum moments.
//!
//! Each stratum starts from independent standard normal pairs, which are then
//! de-meaned, orthonormalized (two-variable Gram–Schmidt, divisor `size − 1`),
//! re-correlated, re-scaled and re-centred. The realized stratum means, SDs and
//! correlation therefore equal the requested ones up to rounding.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ErrorModel, FinitePopulation, ParameterSet, Stratum};
use crate::montecarlo::child_rng;

/// Stream index reserved for population generation.
const POPULATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratumMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSpec {
    pub size: usize,
    pub w2: f64,
    pub respondents: StratumMoments,
    pub nonrespondents: StratumMoments,
}

impl PopulationSpec {
    pub fn nonrespondent_count(&self) -> usize {
        (self.w2 * self.size as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w2) {
            return Err(Error::InvalidSpec(format!("W2 out of range: {}", self.w2)));
        }
        let n2 = self.w2 * self.size as f64;
        if (n2 - n2.round()).abs() > 1e-9 * self.size as f64 {
            return Err(Error::InvalidSpec(format!("N·W2 = {n2} is not an integer")));
        }
        let n2 = self.nonrespondent_count();
        for (name, size, m) in [
            ("respondent", self.size - n2, &self.respondents),
            ("non-respondent", n2, &self.nonrespondents),
        ] {
            // an empty stratum is allowed (W2 = 0 or 1); otherwise exact
            // matching needs at least three units
            if size > 0 && size < 3 {
                return Err(Error::InvalidSpec(format!(
                    "{name} stratum has {size} units; at least 3 are needed"
                )));
            }
            let values = [m.mean_x, m.mean_y, m.sd_x, m.sd_y, m.rho];
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} stratum moments must be finite")));
            }
            if m.sd_x < 0.0 || m.sd_y < 0.0 {
                return Err(Error::InvalidSpec(format!("{name} stratum SDs must be >= 0")));
            }
            if m.rho.abs() > 1.0 {
                return Err(Error::InvalidSpec(format!("{name} stratum rho out of range: {}", m.rho)));
            }
        }
        if self.size == 0 {
            return Err(Error::InvalidSpec("population size must be positive".into()));
        }
        Ok(())
    }

    /// Solves for the respondent-stratum moments that, combined with the
    /// non-respondent moments in `params`, reproduce the overall `μ`, `S` and
    /// `ρ` of `params` exactly (total sum-of-squares decomposition with
    /// divisor `size − 1`).
    pub fn from_parameters(params: &ParameterSet) -> Result<Self> {
        let size = params.population_size.ok_or(Error::RequiresFinitePopulation)?;
        let n2 = (params.w2 * size as f64).round() as usize;
        let n1 = size - n2;
        let nonrespondents = if n2 == 0 {
            StratumMoments { mean_x: 0.0, mean_y: 0.0, sd_x: 0.0, sd_y: 0.0, rho: 0.0 }
        } else {
            StratumMoments {
                mean_x: params.mu_x2.ok_or_else(|| Error::param("mu_x2", "required to build a population"))?,
                mean_y: params.mu_y2.ok_or_else(|| Error::param("mu_y2", "required to build a population"))?,
                sd_x: params.s_x2,
                sd_y: params.s_y2,
                rho: params.rho2,
            }
        };
        if n1 < 3 {
            return Err(Error::InvalidSpec(format!("respondent stratum has {n1} units; at least 3 are needed")));
        }
        let (n, n1f, n2f) = (size as f64, n1 as f64, n2 as f64);
        let mean_x = (n * params.mu_x - n2f * nonrespondents.mean_x) / n1f;
        let mean_y = (n * params.mu_y - n2f * nonrespondents.mean_y) / n1f;
        let between = |a1: f64, a2: f64, a: f64, b1: f64, b2: f64, b: f64| {
            n1f * (a1 - a) * (b1 - b) + n2f * (a2 - a) * (b2 - b)
        };
        let within2 = (n2f - 1.0).max(0.0);
        let nr = &nonrespondents;
        let var_x = ((n - 1.0) * params.s_x * params.s_x
            - within2 * nr.sd_x * nr.sd_x
            - between(mean_x, nr.mean_x, params.mu_x, mean_x, nr.mean_x, params.mu_x))
            / (n1f - 1.0);
        let var_y = ((n - 1.0) * params.s_y * params.s_y
            - within2 * nr.sd_y * nr.sd_y
            - between(mean_y, nr.mean_y, params.mu_y, mean_y, nr.mean_y, params.mu_y))
            / (n1f - 1.0);
        let cov = ((n - 1.0) * params.rho * params.s_x * params.s_y
            - within2 * nr.rho * nr.sd_x * nr.sd_y
            - between(mean_x, nr.mean_x, params.mu_x, mean_y, nr.mean_y, params.mu_y))
            / (n1f - 1.0);
        if var_x < 0.0 || var_y < 0.0 {
            return Err(Error::InvalidSpec(
                "overall variance is smaller than the between-stratum and non-respondent parts".into(),
            ));
        }
        let rho = if var_x > 0.0 && var_y > 0.0 { cov / (var_x * var_y).sqrt() } else { 0.0 };
        if rho.abs() > 1.0 + 1e-12 {
            return Err(Error::InvalidSpec(format!("implied respondent correlation {rho} is out of range")));
        }
        let spec = PopulationSpec {
            size,
            w2: params.w2,
            respondents: StratumMoments {
                mean_x,
                mean_y,
                sd_x: var_x.sqrt(),
                sd_y: var_y.sqrt(),
                rho: rho.clamp(-1.0, 1.0),
            },
            nonrespondents,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Builds the population deterministically from `(spec, seed)`. Respondents
/// occupy the first `N1` unit indices.
pub fn generate_population(spec: &PopulationSpec, seed: u64) -> Result<FinitePopulation> {
    spec.validate()?;
    let n2 = spec.nonrespondent_count();
    let n1 = spec.size - n2;
    let mut rng = child_rng(seed, POPULATION_STREAM);
    let mut x = Vec::with_capacity(spec.size);
    let mut y = Vec::with_capacity(spec.size);
    let mut strata = Vec::with_capacity(spec.size);
    for (count, moments, label) in [
        (n1, &spec.respondents, Stratum::Respondent),
        (n2, &spec.nonrespondents, Stratum::NonRespondent),
    ] {
        if count == 0 {
            continue;
        }
        let (sx, sy) = matched_stratum(count, moments, &mut rng)?;
        x.extend(sx);
        y.extend(sy);
        strata.extend(std::iter::repeat_n(label, count));
    }
    FinitePopulation::new(x, y, strata)
}

fn matched_stratum<R: Rng>(size: usize, m: &StratumMoments, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    // A draw with |corr(z1, z2)| ≈ 1 cannot be orthonormalized; redraw.
    for _ in 0..16 {
        let mut a: Vec<f64> = (0..size).map(|_| rng.sample(StandardNormal)).collect();
        let mut b: Vec<f64> = (0..size).map(|_| rng.sample(StandardNormal)).collect();
        center(&mut a);
        center(&mut b);
        let denom = (size - 1) as f64;
        let na = (dot(&a, &a) / denom).sqrt();
        a.iter_mut().for_each(|v| *v /= na);
        let proj = dot(&a, &b) / denom;
        b.iter_mut().zip(&a).for_each(|(bv, av)| *bv -= proj * av);
        let nb = (dot(&b, &b) / denom).sqrt();
        if nb.is_nan() || nb <= 1e-8 {
            continue;
        }
        b.iter_mut().for_each(|v| *v /= nb);
        let resid = (1.0 - m.rho * m.rho).max(0.0).sqrt();
        let x = a.iter().map(|av| m.mean_x + m.sd_x * av).collect();
        let y = a
            .iter()
            .zip(&b)
            .map(|(av, bv)| m.mean_y + m.sd_y * (m.rho * av + resid * bv))
            .collect();
        return Ok((x, y));
    }
    Err(Error::InvalidSpec("could not draw a non-degenerate stratum".into()))
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    // second pass removes the rounding residue of the first
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Means, SDs (divisor `size − 1`) and correlation of a set of units.
/// `rho` is `None` when either SD is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub size: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
    pub rho: Option<f64>,
}

impl Moments {
    pub fn of(x: &[f64], y: &[f64]) -> Moments {
        let size = x.len();
        if size == 0 {
            return Moments { size, mean_x: 0.0, mean_y: 0.0, sd_x: 0.0, sd_y: 0.0, rho: None };
        }
        let nf = size as f64;
        let mean_x = x.iter().sum::<f64>() / nf;
        let mean_y = y.iter().sum::<f64>() / nf;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            let (dx, dy) = (a - mean_x, b - mean_y);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        // constant columns have exactly zero spread, whatever the rounding of the mean
        if x.iter().all(|&v| v == x[0]) {
            sxx = 0.0;
            sxy = 0.0;
        }
        if y.iter().all(|&v| v == y[0]) {
            syy = 0.0;
            sxy = 0.0;
        }
        let denom = (nf - 1.0).max(1.0);
        let rho = (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0));
        Moments {
            size,
            mean_x,
            mean_y,
            sd_x: (sxx / denom).sqrt(),
            sd_y: (syy / denom).sqrt(),
            rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationMoments {
    pub size: usize,
    pub w1: f64,
    pub w2: f64,
    pub overall: Moments,
    pub respondents: Moments,
    pub nonrespondents: Moments,
}

pub fn population_moments(pop: &FinitePopulation) -> PopulationMoments {
    let split = |s: Stratum| -> (Vec<f64>, Vec<f64>) {
        (0..pop.size())
            .filter(|&i| pop.stratum(i) == s)
            .map(|i| (pop.x_true()[i], pop.y_true()[i]))
            .unzip()
    };
    let (x1, y1) = split(Stratum::Respondent);
    let (x2, y2) = split(Stratum::NonRespondent);
    PopulationMoments {
        size: pop.size(),
        w1: pop.w1(),
        w2: pop.w2(),
        overall: Moments::of(pop.x_true(), pop.y_true()),
        respondents: Moments::of(&x1, &y1),
        nonrespondents: Moments::of(&x2, &y2),
    }
}

/// The [`ParameterSet`] that describes `pop` exactly, for sample size `n`.
pub fn parameters_from_population(pop: &FinitePopulation, n: usize, k: f64, errors: ErrorModel) -> ParameterSet {
    let m = population_moments(pop);
    let nr = &m.nonrespondents;
    ParameterSet {
        n,
        population_size: Some(m.size),
        w2: m.w2,
        k,
        mu_y: m.overall.mean_y,
        mu_x: m.overall.mean_x,
        s_y: m.overall.sd_y,
        s_x: m.overall.sd_x,
        rho: m.overall.rho.unwrap_or(0.0),
        s_y2: nr.sd_y,
        s_x2: nr.sd_x,
        rho2: nr.rho.unwrap_or(0.0),
        mu_y2: (nr.size > 0).then_some(nr.mean_y),
        mu_x2: (nr.size > 0).then_some(nr.mean_x),
        errors,
    }
}
