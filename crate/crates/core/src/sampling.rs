//! One replication of the two-phase design: SRSWOR of `n` units, split by
//! the units' fixed response stratum, SRSWOR re-interview of `r ≈ n2/k`
//! non-respondents, and error-contaminated observation of everyone measured.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{ErrorModel, FinitePopulation, HhMeans, SampleRealization, Stratum};

pub fn draw_srswor<R: Rng + ?Sized>(population: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n > population {
        return Err(Error::SampleTooLarge { n, population });
    }
    Ok(index::sample(rng, population, n).into_vec())
}

pub fn split_response(sample_idx: &[usize], pop: &FinitePopulation) -> (Vec<usize>, Vec<usize>) {
    sample_idx
        .iter()
        .partition(|&&i| pop.stratum(i) == Stratum::Respondent)
}

/// Re-interview subsample size: `max(1, round_half_up(n2/k))`, or 0 when `n2 = 0`.
pub fn subsample_size(n2: usize, k: f64) -> usize {
    if n2 == 0 {
        return 0;
    }
    let r = (n2 as f64 / k + 0.5).floor() as usize;
    r.clamp(1, n2)
}

pub fn subsample_nonrespondents<R: Rng + ?Sized>(nonrespondent_idx: &[usize], k: f64, rng: &mut R) -> Vec<usize> {
    let r = subsample_size(nonrespondent_idx.len(), k);
    index::sample(rng, nonrespondent_idx.len(), r)
        .into_iter()
        .map(|j| nonrespondent_idx[j])
        .collect()
}

/// Measured `(x, y)` for `units`, each with fresh Gaussian errors whose
/// variances depend on the unit's stratum.
pub fn observe<R: Rng + ?Sized>(
    units: &[usize],
    pop: &FinitePopulation,
    errors: &ErrorModel,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let sd = |s: Stratum| {
        let (u, v) = errors.for_stratum(s);
        (u.sqrt(), v.sqrt())
    };
    let sd1 = sd(Stratum::Respondent);
    let sd2 = sd(Stratum::NonRespondent);
    units
        .iter()
        .map(|&i| {
            let (sd_u, sd_v) = match pop.stratum(i) {
                Stratum::Respondent => sd1,
                Stratum::NonRespondent => sd2,
            };
            let v: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            (pop.x_true()[i] + sd_v * v, pop.y_true()[i] + sd_u * u)
        })
        .unzip()
}

/// Runs draw → split → subsample → observe.
pub fn draw_realization<R: Rng + ?Sized>(
    pop: &FinitePopulation,
    n: usize,
    k: f64,
    errors: &ErrorModel,
    rng: &mut R,
) -> Result<SampleRealization> {
    let sample_idx = draw_srswor(pop.size(), n, rng)?;
    let (respondent_idx, nonrespondent_idx) = split_response(&sample_idx, pop);
    let subsample_idx = subsample_nonrespondents(&nonrespondent_idx, k, rng);
    let (x_obs_resp, y_obs_resp) = observe(&respondent_idx, pop, errors, rng);
    let (x_obs_sub, y_obs_sub) = observe(&subsample_idx, pop, errors, rng);
    Ok(SampleRealization {
        sample_idx,
        respondent_idx,
        nonrespondent_idx,
        subsample_idx,
        x_obs_resp,
        y_obs_resp,
        x_obs_sub,
        y_obs_sub,
    })
}

/// `ȳ* = w1·ȳ1 + w2·ȳ2r` and the same for `x`.
pub fn hh_means(sample: &SampleRealization) -> Result<HhMeans> {
    let (n1, n2, r) = (sample.n1(), sample.n2(), sample.r());
    if n1 + n2 == 0 || (n1 == 0 && r == 0) {
        return Err(Error::EmptySample);
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if n2 == 0 {
        return Ok(HhMeans { y_star: avg(&sample.y_obs_resp), x_star: avg(&sample.x_obs_resp) });
    }
    if n1 == 0 {
        return Ok(HhMeans { y_star: avg(&sample.y_obs_sub), x_star: avg(&sample.x_obs_sub) });
    }
    let (w1, w2) = (sample.w1(), sample.w2());
    Ok(HhMeans {
        y_star: w1 * avg(&sample.y_obs_resp) + w2 * avg(&sample.y_obs_sub),
        x_star: w1 * avg(&sample.x_obs_resp) + w2 * avg(&sample.x_obs_sub),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::child_rng;
    use crate::popgen::{generate_population, PopulationSpec, StratumMoments};

    fn population(size: usize, w2: f64) -> FinitePopulation {
        let m = StratumMoments { mean_x: 50.0, mean_y: 20.0, sd_x: 10.0, sd_y: 5.0, rho: 0.7 };
        let spec = PopulationSpec {
            size,
            w2,
            respondents: m,
            nonrespondents: StratumMoments { mean_y: 10.0, ..m },
        };
        generate_population(&spec, 1).unwrap()
    }

    #[test]
    fn census_and_oversize() {
        let mut rng = child_rng(1, 0);
        let mut all = draw_srswor(10, 10, &mut rng).unwrap();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(matches!(draw_srswor(5, 6, &mut rng), Err(Error::SampleTooLarge { .. })));
    }

    #[test]
    fn srswor_is_deterministic_and_distinct() {
        let a = draw_srswor(1000, 50, &mut child_rng(7, 3)).unwrap();
        let b = draw_srswor(1000, 50, &mut child_rng(7, 3)).unwrap();
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 50);
    }

    #[test]
    fn srswor_frequency() {
        // each of two units is picked with probability 1/2; s.e. = 0.5/√10⁵
        let mut rng = child_rng(5, 0);
        let reps = 100_000;
        let hits = (0..reps)
            .filter(|_| draw_srswor(2, 1, &mut rng).unwrap()[0] == 0)
            .count();
        assert!((hits as f64 / reps as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn inclusion_probability_is_n_over_n() {
        let (size, n, reps) = (50usize, 10usize, 100_000usize);
        let mut counts = vec![0usize; size];
        let mut rng = child_rng(8, 0);
        for _ in 0..reps {
            for i in draw_srswor(size, n, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let p = n as f64 / size as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        for c in counts {
            assert!((c as f64 / reps as f64 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn split_edge_cases() {
        let pop = population(100, 0.0);
        let (r, nr) = split_response(&[1, 5, 9], &pop);
        assert_eq!((r.len(), nr.len()), (3, 0));
        let all_nr = FinitePopulation::new(vec![1.0; 4], vec![1.0; 4], vec![Stratum::NonRespondent; 4]).unwrap();
        let (r, nr) = split_response(&[0, 2], &all_nr);
        assert_eq!((r.len(), nr.len()), (0, 2));
    }

    #[test]
    fn expected_nonrespondent_count() {
        let pop = population(10_000, 0.25);
        let mut rng = child_rng(2, 0);
        let reps = 100_000;
        let total: usize = (0..reps)
            .map(|_| split_response(&draw_srswor(10_000, 100, &mut rng).unwrap(), &pop).1.len())
            .sum();
        assert!((total as f64 / reps as f64 - 25.0).abs() < 0.5);
    }

    #[test]
    fn subsample_sizes() {
        assert_eq!(subsample_size(0, 3.0), 0);
        assert_eq!(subsample_size(10, 1.0), 10);
        assert_eq!(subsample_size(10, 3.0), 3);
        assert_eq!(subsample_size(5, 2.0), 3);
        assert_eq!(subsample_size(1, 10.0), 1);
        let mut rng = child_rng(1, 1);
        assert!(subsample_nonrespondents(&[], 2.0, &mut rng).is_empty());
        let nr = [4, 8, 15, 16, 23, 42];
        let sub = subsample_nonrespondents(&nr, 2.0, &mut rng);
        assert_eq!(sub.len(), 3);
        assert!(sub.iter().all(|i| nr.contains(i)));
    }

    #[test]
    fn error_free_observation_is_exact() {
        let pop = population(100, 0.2);
        let units: Vec<usize> = (0..100).collect();
        let (x, y) = observe(&units, &pop, &ErrorModel::NONE, &mut child_rng(0, 0));
        assert_eq!(x, pop.x_true());
        assert_eq!(y, pop.y_true());
    }

    #[test]
    fn error_moments() {
        let pop = population(1000, 0.0);
        let errors = ErrorModel::uniform(36.0, 36.0);
        let mut rng = child_rng(9, 0);
        let units: Vec<usize> = (0..1000).collect();
        let (mut su, mut suu, mut sv, mut svv, mut suv) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut count = 0.0;
        for _ in 0..1000 {
            let (x, y) = observe(&units, &pop, &errors, &mut rng);
            for i in 0..1000 {
                let u = y[i] - pop.y_true()[i];
                let v = x[i] - pop.x_true()[i];
                su += u;
                suu += u * u;
                sv += v;
                svv += v * v;
                suv += u * v;
                count += 1.0;
            }
        }
        let var_u = suu / count - (su / count).powi(2);
        let var_v = svv / count - (sv / count).powi(2);
        let corr = (suv / count - su * sv / count / count) / (var_u * var_v).sqrt();
        assert!((var_u - 36.0).abs() < 0.5, "{var_u}");
        assert!(corr.abs() < 0.005, "{corr}");
    }

    #[test]
    fn stratum_specific_error_variance() {
        let pop = population(1000, 0.5);
        let errors = ErrorModel { sigma_u_sq: 0.0, sigma_v_sq: 0.0, sigma_u2_sq: 4.0, sigma_v2_sq: 0.0 };
        let units: Vec<usize> = (0..1000).collect();
        let (_, y) = observe(&units, &pop, &errors, &mut child_rng(4, 0));
        for (i, (&obs, &truth)) in y.iter().zip(pop.y_true()).enumerate() {
            assert_eq!(obs == truth, pop.stratum(i) == Stratum::Respondent);
        }
    }

    fn realization(y_resp: Vec<f64>, y_sub: Vec<f64>, n1: usize, n2: usize) -> SampleRealization {
        let r = y_sub.len();
        SampleRealization {
            sample_idx: (0..n1 + n2).collect(),
            respondent_idx: (0..n1).collect(),
            nonrespondent_idx: (n1..n1 + n2).collect(),
            subsample_idx: (n1..n1 + r).collect(),
            x_obs_resp: y_resp.clone(),
            y_obs_resp: y_resp,
            x_obs_sub: y_sub.clone(),
            y_obs_sub: y_sub,
        }
    }

    #[test]
    fn hh_mean_arithmetic() {
        let s = realization(vec![10.0; 4], vec![20.0, 20.0], 4, 4);
        assert_eq!(hh_means(&s).unwrap().y_star, 15.0);
        let s = realization(vec![1.0, 2.0, 3.0], vec![], 3, 0);
        assert_eq!(hh_means(&s).unwrap().y_star, 2.0);
        let s = realization(vec![], vec![7.0], 0, 3);
        assert_eq!(hh_means(&s).unwrap().x_star, 7.0);
        let s = realization(vec![], vec![], 0, 0);
        assert!(matches!(hh_means(&s), Err(Error::EmptySample)));
    }

    #[test]
    fn realization_invariants() {
        let pop = population(2000, 0.3);
        let mut rng = child_rng(3, 0);
        for _ in 0..200 {
            let s = draw_realization(&pop, 60, 2.5, &ErrorModel::uniform(1.0, 1.0), &mut rng).unwrap();
            assert_eq!(s.n1() + s.n2(), s.n());
            assert_eq!(s.w1() + s.w2(), 1.0);
            assert!(s.r() <= s.n2() && (s.n2() == 0 || s.r() >= 1));
            assert!(s.subsample_idx.iter().all(|i| s.nonrespondent_idx.contains(i)));
            assert_eq!(s.y_obs_sub.len(), s.r());
        }
    }

    #[test]
    fn hh_mean_is_unbiased() {
        let pop = population(5000, 0.25);
        let truth = pop.mean_y();
        let reps = 200_000;
        let (mut s, mut ss) = (0.0, 0.0);
        for i in 0..reps {
            let mut rng = child_rng(21, i);
            let r = draw_realization(&pop, 50, 2.0, &ErrorModel::NONE, &mut rng).unwrap();
            let y = hh_means(&r).unwrap().y_star - truth;
            s += y;
            ss += y * y;
        }
        let mean = s / reps as f64;
        let se = ((ss / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "bias {mean}, se {se}");
    }
}
