//! Replication engine.
//!
//! Replication `i` draws all of its randomness from its own ChaCha stream
//! `(seed, i)`, and per-estimator sums are accumulated exactly
//! ([`ExactSum`]). Together these make a report a pure function of
//! `(population, params, config)`: the worker count and the scheduling of
//! replications cannot change a single bit of the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::accum::{ExactSum, MomentSums};
use crate::error::{Error, Result};
use crate::estimators;
use crate::model::{FinitePopulation, HhMeans, ParameterSet, ValidatedParameterSet};
use crate::popgen::population_moments;
use crate::sampling::{draw_realization, hh_means};
use crate::theory::derive_moments;

/// Largest number of rows written by a per-replication dump.
pub const MAX_DUMP_ROWS: u64 = 100_000;

/// Fraction of ratio-undefined replications above which a run is aborted.
pub const MAX_UNDEFINED_FRACTION: f64 = 0.01;

/// Relative tolerance for the config-versus-population consistency check.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-6;

pub const ESTIMATOR_NAMES: [&str; 4] = ["t1", "t_r", "t_lr", "t_p"];

/// RNG for stream `stream` of master seed `seed`.
pub fn child_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficients {
    /// `b*` and `m2*` from the closed-form optimum for the design.
    Optimal,
    /// Fixed slope and class weight; `m1 = 1 − m2`.
    Explicit { b: f64, m2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub reps: u64,
    pub seed: u64,
    pub coefficients: Coefficients,
    /// Worker threads; 0 picks the number of available cores.
    pub workers: usize,
}

impl RunConfig {
    pub fn new(reps: u64, seed: u64) -> Self {
        RunConfig { reps, seed, coefficients: Coefficients::Optimal, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRecord {
    pub name: String,
    /// Replications that produced an estimate.
    pub count: u64,
    pub ratio_undefined: u64,
    pub empirical_mean: f64,
    pub empirical_bias: f64,
    pub empirical_mse: f64,
    /// Monte Carlo standard error of `empirical_mse`.
    pub mse_se: f64,
    pub theoretical_mse: f64,
    pub rel_deviation: f64,
}

impl EstimatorRecord {
    /// `rel_deviation` expressed in Monte Carlo standard errors.
    pub fn deviation_in_se(&self) -> f64 {
        (self.empirical_mse - self.theoretical_mse) / self.mse_se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub reps: u64,
    pub seed: u64,
    pub y_bar_true: f64,
    pub x_bar_true: f64,
    pub b: f64,
    pub m1: f64,
    pub m2: f64,
    pub estimators: Vec<EstimatorRecord>,
    pub design: ParameterSet,
}

impl MonteCarloReport {
    pub fn record(&self, name: &str) -> Option<&EstimatorRecord> {
        self.estimators.iter().find(|r| r.name == name)
    }

    pub fn max_abs_rel_deviation(&self) -> f64 {
        self.estimators.iter().map(|r| r.rel_deviation.abs()).fold(0.0, f64::max)
    }
}

/// Everything a replication needs, fixed for the whole run.
struct Context<'a> {
    pop: &'a FinitePopulation,
    params: &'a ValidatedParameterSet,
    seed: u64,
    y_bar: f64,
    x_bar: f64,
    b: f64,
    m1: f64,
    m2: f64,
}

impl<'a> Context<'a> {
    fn new(pop: &'a FinitePopulation, params: &'a ValidatedParameterSet, cfg: &RunConfig) -> Result<Self> {
        if cfg.reps == 0 {
            return Err(Error::param("reps", "must be >= 1"));
        }
        check_consistency(pop, params)?;
        let (b, m1, m2) = match cfg.coefficients {
            Coefficients::Optimal => {
                let d = derive_moments(params);
                let (m1, m2) = d.m_opt()?;
                (d.b_opt()?, m1, m2)
            }
            Coefficients::Explicit { b, m2 } => (b, 1.0 - m2, m2),
        };
        Ok(Context {
            pop,
            params,
            seed: cfg.seed,
            y_bar: pop.mean_y(),
            x_bar: pop.mean_x(),
            b,
            m1,
            m2,
        })
    }

    fn means(&self, index: u64) -> Result<(HhMeans, [usize; 3])> {
        let mut rng = child_rng(self.seed, index);
        let s = draw_realization(self.pop, self.params.n, self.params.k, &self.params.errors, &mut rng)?;
        Ok((hh_means(&s)?, [s.n1(), s.n2(), s.r()]))
    }
}

/// Fails when `params` does not describe `pop` (to 1e-6 relative).
pub fn check_consistency(pop: &FinitePopulation, params: &ParameterSet) -> Result<()> {
    let m = population_moments(pop);
    if let Some(size) = params.population_size {
        if size != pop.size() {
            return Err(Error::PopulationMismatch { field: "N", expected: size as f64, actual: pop.size() as f64 });
        }
    }
    if params.n > pop.size() {
        return Err(Error::SampleTooLarge { n: params.n, population: pop.size() });
    }
    let nr = &m.nonrespondents;
    let mut checks = vec![
        ("W2", params.w2, m.w2),
        ("mu_y", params.mu_y, m.overall.mean_y),
        ("mu_x", params.mu_x, m.overall.mean_x),
        ("S_y", params.s_y, m.overall.sd_y),
        ("S_x", params.s_x, m.overall.sd_x),
        ("S_y2", params.s_y2, nr.sd_y),
        ("S_x2", params.s_x2, nr.sd_x),
    ];
    if let Some(rho) = m.overall.rho {
        checks.push(("rho", params.rho, rho));
    }
    if let Some(rho2) = nr.rho {
        checks.push(("rho2", params.rho2, rho2));
    }
    for (field, expected, actual) in checks {
        let scale = expected.abs().max(actual.abs());
        if (expected - actual).abs() > CONSISTENCY_TOLERANCE * scale.max(1e-12) {
            return Err(Error::PopulationMismatch { field, expected, actual });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    errors: [MomentSums; 4],
    undefined: [u64; 4],
}

impl Accumulator {
    fn push(&mut self, ctx: &Context<'_>, hh: &HhMeans) {
        let est = estimators::estimate_all(hh, ctx.x_bar, ctx.b, ctx.m1, ctx.m2);
        for (slot, value) in [Some(est.t1), est.t_r, Some(est.t_lr), est.t_p].into_iter().enumerate() {
            match value {
                Some(v) => self.errors[slot].push(v - ctx.y_bar),
                None => self.undefined[slot] += 1,
            }
        }
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        for i in 0..4 {
            self.errors[i].merge(&other.errors[i]);
            self.undefined[i] += other.undefined[i];
        }
        self
    }
}

/// Maps every replication index through `f` and merges the results with
/// `merge`, in parallel when enabled. `merge` must be exact for the result to
/// be independent of `workers`.
fn fold_replications<T, F, M>(reps: u64, workers: usize, init: impl Fn() -> T + Sync + Send, f: F, merge: M) -> Result<T>
where
    T: Send,
    F: Fn(T, u64) -> Result<T> + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
        return pool.install(|| {
            (0..reps)
                .into_par_iter()
                .try_fold(&init, &f)
                .try_reduce(&init, |a, b| Ok(merge(a, b)))
        });
    }
    let _ = (workers, &merge);
    (0..reps).try_fold(init(), f)
}

pub fn run(pop: &FinitePopulation, params: &ValidatedParameterSet, cfg: &RunConfig) -> Result<MonteCarloReport> {
    let ctx = Context::new(pop, params, cfg)?;
    let acc = fold_replications(
        cfg.reps,
        cfg.workers,
        Accumulator::default,
        |mut acc, i| {
            let (hh, _) = ctx.means(i)?;
            acc.push(&ctx, &hh);
            Ok(acc)
        },
        Accumulator::merge,
    )?;

    let flagged = acc.undefined.iter().copied().max().unwrap_or(0);
    if flagged as f64 > MAX_UNDEFINED_FRACTION * cfg.reps as f64 {
        return Err(Error::TooManyRatioUndefined { flagged, reps: cfg.reps });
    }

    let d = derive_moments(params);
    let theory = [d.m, d.mse_ratio(), d.mse_regression(ctx.b), d.mse_class(ctx.m2)];
    let estimators = ESTIMATOR_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let s = &acc.errors[i];
            let mse = s.mean_sq();
            let bias = s.mean();
            EstimatorRecord {
                name: name.to_string(),
                count: s.count,
                ratio_undefined: acc.undefined[i],
                empirical_mean: ctx.y_bar + bias,
                empirical_bias: bias,
                empirical_mse: mse,
                mse_se: s.mean_sq_se(),
                theoretical_mse: theory[i],
                rel_deviation: mse / theory[i] - 1.0,
            }
        })
        .collect();
    Ok(MonteCarloReport {
        reps: cfg.reps,
        seed: cfg.seed,
        y_bar_true: ctx.y_bar,
        x_bar_true: ctx.x_bar,
        b: ctx.b,
        m1: ctx.m1,
        m2: ctx.m2,
        estimators,
        design: params.params().clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub m2: f64,
    pub empirical_mse: f64,
    pub mse_se: f64,
    pub theoretical_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearch {
    pub reps: u64,
    pub seed: u64,
    pub m2_hat: f64,
    pub m2_opt: f64,
    /// Leading coefficient of a least-squares quadratic through the empirical curve.
    pub curvature: f64,
    pub ratio_undefined: u64,
    pub curve: Vec<GridPoint>,
}

/// Evenly spaced grid `center ± half_width` with the given step.
pub fn grid_around(center: f64, half_width: f64, step: f64) -> Vec<f64> {
    let steps = (2.0 * half_width / step).round() as i64;
    (0..=steps).map(|i| center - half_width + step * i as f64).collect()
}

/// Empirical MSE of `t_p` (with `m1 = 1 − m2`) at every grid point. Every
/// grid point sees the same samples (common random numbers).
pub fn grid_search_m2(
    pop: &FinitePopulation,
    params: &ValidatedParameterSet,
    cfg: &RunConfig,
    grid: &[f64],
) -> Result<GridSearch> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let ctx = Context::new(pop, params, cfg)?;
    let init = || (vec![MomentSums::default(); grid.len()], 0u64);
    let (sums, undefined) = fold_replications(
        cfg.reps,
        cfg.workers,
        init,
        |(mut sums, mut undefined), i| {
            let (hh, _) = ctx.means(i)?;
            match estimators::t_ratio(&hh, ctx.x_bar) {
                Ok(ratio) => {
                    for (s, &m2) in sums.iter_mut().zip(grid) {
                        s.push((1.0 - m2) * hh.y_star + m2 * ratio - ctx.y_bar);
                    }
                }
                Err(_) => undefined += 1,
            }
            Ok((sums, undefined))
        },
        |(mut a, ua), (b, ub)| {
            a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y));
            (a, ua + ub)
        },
    )?;
    if undefined as f64 > MAX_UNDEFINED_FRACTION * cfg.reps as f64 {
        return Err(Error::TooManyRatioUndefined { flagged: undefined, reps: cfg.reps });
    }
    let d = derive_moments(params);
    let curve: Vec<GridPoint> = grid
        .iter()
        .zip(&sums)
        .map(|(&m2, s)| GridPoint {
            m2,
            empirical_mse: s.mean_sq(),
            mse_se: s.mean_sq_se(),
            theoretical_mse: d.mse_class(m2),
        })
        .collect();
    let m2_hat = curve
        .iter()
        .min_by(|a, b| a.empirical_mse.total_cmp(&b.empirical_mse))
        .map(|p| p.m2)
        .expect("grid is non-empty");
    let curvature = quadratic_leading_coefficient(
        &curve.iter().map(|p| p.m2).collect::<Vec<_>>(),
        &curve.iter().map(|p| p.empirical_mse).collect::<Vec<_>>(),
    );
    Ok(GridSearch {
        reps: cfg.reps,
        seed: cfg.seed,
        m2_hat,
        m2_opt: d.m_opt()?.1,
        curvature,
        ratio_undefined: undefined,
        curve,
    })
}

/// Least-squares fit `y ≈ c0 + c1·t + c2·t²`; returns `c2` (NaN with < 3 points).
fn quadratic_leading_coefficient(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 3 {
        return f64::NAN;
    }
    let nf = x.len() as f64;
    let mid = x.iter().sum::<f64>() / nf;
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let d = xi - mid;
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                t[k] += p * yi;
            }
            p *= d;
        }
    }
    // normal equations, solved by Cramer's rule for the last unknown
    let a = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let mut a2 = a;
    for row in 0..3 {
        a2[row][2] = t[row];
    }
    det3(a2) / det3(a)
}

/// One row of the per-replication dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub rep: u64,
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub y_star: f64,
    pub x_star: f64,
    pub t1: f64,
    pub t_r: Option<f64>,
    pub t_lr: f64,
    pub t_p: Option<f64>,
}

/// Recomputes the first `min(reps, MAX_DUMP_ROWS)` replications of a run.
pub fn replication_rows(
    pop: &FinitePopulation,
    params: &ValidatedParameterSet,
    cfg: &RunConfig,
) -> Result<Vec<ReplicationRow>> {
    let ctx = Context::new(pop, params, cfg)?;
    (0..cfg.reps.min(MAX_DUMP_ROWS))
        .map(|i| {
            let (hh, [n1, n2, r]) = ctx.means(i)?;
            let e = estimators::estimate_all(&hh, ctx.x_bar, ctx.b, ctx.m1, ctx.m2);
            Ok(ReplicationRow {
                rep: i,
                n1,
                n2,
                r,
                y_star: hh.y_star,
                x_star: hh.x_star,
                t1: e.t1,
                t_r: e.t_r,
                t_lr: e.t_lr,
                t_p: e.t_p,
            })
        })
        .collect()
}

pub fn write_replications_csv<W: std::io::Write>(rows: &[ReplicationRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Empirical variance of `ȳ*` over `reps` replications, from exact sums.
pub fn hh_mean_variance(pop: &FinitePopulation, params: &ValidatedParameterSet, cfg: &RunConfig) -> Result<f64> {
    let ctx = Context::new(pop, params, cfg)?;
    let (s, ss) = fold_replications(
        cfg.reps,
        cfg.workers,
        || (ExactSum::new(), ExactSum::new()),
        |(mut s, mut ss), i| {
            let d = ctx.means(i)?.0.y_star - ctx.y_bar;
            s.add(d);
            ss.add(d * d);
            Ok((s, ss))
        },
        |(mut a, mut aa), (b, bb)| {
            a.merge(&b);
            aa.merge(&bb);
            (a, aa)
        },
    )?;
    let n = cfg.reps as f64;
    let mean = s.value() / n;
    Ok((ss.value() - n * mean * mean) / (n - 1.0))
}
