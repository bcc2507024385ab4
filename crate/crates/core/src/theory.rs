//! Closed-form first-order bias and MSE of the four estimators.
//!
//! All formulas are expressed through the moments `A, M, Nq, O, R`:
//!
//! ```text
//! A  = (k − 1)·W2 / n
//! M  = (S_y² + σu²)/n + A·(S_y2² + σu2²)
//! Nq = (S_x² + σv²)/n + A·(S_x2² + σv2²)
//! O  = ρ·S_x·S_y/n + A·ρ2·S_x2·S_y2
//! R  = μy / μx
//! ```
//!
//! so that `Ȳ²E(e0²) = M`, `Ȳ²E(e1²) = R²·Nq` and `Ȳ²E(e0e1) = R·O`.
//! The finite-population correction is ignored everywhere except
//! [`variance_hh`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DerivedMoments, MseDecomposition, ValidatedParameterSet};

pub fn derive_moments(p: &ValidatedParameterSet) -> DerivedMoments {
    let n = p.n as f64;
    let e = &p.errors;
    let a = (p.k - 1.0) * p.w2 / n;
    // (S² + σ²) is the limit form of S²(1 + σ²/S²), defined at S = 0.
    let m = (p.s_y * p.s_y + e.sigma_u_sq) / n + a * (p.s_y2 * p.s_y2 + e.sigma_u2_sq);
    let nq = (p.s_x * p.s_x + e.sigma_v_sq) / n + a * (p.s_x2 * p.s_x2 + e.sigma_v2_sq);
    let o = p.rho * p.s_x * p.s_y / n + a * p.rho2 * p.s_x2 * p.s_y2;
    let r = p.ratio();
    let mu_y_sq = p.mu_y * p.mu_y;
    DerivedMoments {
        a,
        m,
        nq,
        o,
        r,
        e0_sq: m / mu_y_sq,
        e1_sq: r * r * nq / mu_y_sq,
        e0e1: r * o / mu_y_sq,
        c_y: p.s_y / p.mu_y,
        c_x: p.s_x / p.mu_x,
        c_y2: p.s_y2 / p.mu_y,
        c_x2: p.s_x2 / p.mu_x,
    }
}

impl DerivedMoments {
    /// Optimal regression slope `O/Nq`.
    pub fn b_opt(&self) -> Result<f64> {
        self.check_aux()?;
        Ok(self.o / self.nq)
    }

    /// Optimal class weights `(1 − m2*, m2*)` with `m2* = O/(R·Nq)`.
    pub fn m_opt(&self) -> Result<(f64, f64)> {
        self.check_aux()?;
        let m2 = self.o / (self.r * self.nq);
        Ok((1.0 - m2, m2))
    }

    pub fn mse_ratio(&self) -> f64 {
        self.m + self.r * self.r * self.nq - 2.0 * self.r * self.o
    }

    pub fn mse_regression(&self, b: f64) -> f64 {
        self.m + b * b * self.nq - 2.0 * b * self.o
    }

    /// `M·(1 − O²/(M·Nq))`, evaluated in that factored form.
    pub fn mse_regression_min(&self) -> Result<f64> {
        self.check_aux()?;
        Ok(self.m * (1.0 - self.o * self.o / (self.m * self.nq)))
    }

    pub fn mse_class(&self, m2: f64) -> f64 {
        self.m + m2 * m2 * self.r * self.r * self.nq - 2.0 * m2 * self.r * self.o
    }

    /// `M − O²/Nq`.
    pub fn mse_class_min(&self) -> Result<f64> {
        self.check_aux()?;
        Ok(self.m - self.o * self.o / self.nq)
    }

    fn check_aux(&self) -> Result<()> {
        if self.nq > 0.0 {
            Ok(())
        } else {
            Err(Error::NoAuxiliaryVariation { nq: self.nq })
        }
    }
}

/// Evaluates `f` on the full design, with errors removed, and with both
/// errors and non-response removed.
fn decompose(
    p: &ValidatedParameterSet,
    f: impl Fn(&DerivedMoments) -> Result<f64>,
) -> Result<MseDecomposition> {
    let clean = p.without_measurement_error();
    let baseline = clean.without_nonresponse();
    Ok(MseDecomposition::from_scenarios(
        f(&derive_moments(p))?,
        f(&derive_moments(&clean))?,
        f(&derive_moments(&baseline))?,
    ))
}

/// MSE of the Hansen–Hurwitz mean `t1 = ȳ*` (which is unbiased).
pub fn mse_t1(p: &ValidatedParameterSet) -> MseDecomposition {
    decompose(p, |d| Ok(d.m)).expect("t1 needs no auxiliary variation")
}

/// First-order bias of the ratio estimator, `(R·Nq − O)/μx`.
pub fn bias_tr(p: &ValidatedParameterSet) -> f64 {
    let d = derive_moments(p);
    (d.r * d.nq - d.o) / p.mu_x
}

pub fn mse_tr(p: &ValidatedParameterSet) -> MseDecomposition {
    decompose(p, |d| Ok(d.mse_ratio())).expect("ratio MSE is always defined")
}

pub fn b_opt(p: &ValidatedParameterSet) -> Result<f64> {
    derive_moments(p).b_opt()
}

/// MSE of `ȳ* + b(X̄ − x̄*)` for a fixed slope `b`.
pub fn mse_tlr(p: &ValidatedParameterSet, b: f64) -> f64 {
    derive_moments(p).mse_regression(b)
}

pub fn mse_tlr_min(p: &ValidatedParameterSet) -> Result<f64> {
    derive_moments(p).mse_regression_min()
}

/// Decomposition of the minimum regression MSE; the slope is re-optimized
/// in each scenario.
pub fn mse_tlr_min_decomposition(p: &ValidatedParameterSet) -> Result<MseDecomposition> {
    decompose(p, DerivedMoments::mse_regression_min)
}

/// Regression MSE with measurement error removed and slope `b` kept fixed:
/// `S_y²(1 − ρ²)/n + A·(S_y2² + b²S_x2² − 2bρ2·S_x2·S_y2)`.
///
/// The first term is the SRS part at its own optimum, the second is the
/// non-response part at slope `b`.
pub fn mse_tlr_no_error(p: &ValidatedParameterSet, b: f64) -> f64 {
    let n = p.n as f64;
    let a = (p.k - 1.0) * p.w2 / n;
    p.s_y * p.s_y * (1.0 - p.rho * p.rho) / n
        + a * (p.s_y2 * p.s_y2 + b * b * p.s_x2 * p.s_x2 - 2.0 * b * p.rho2 * p.s_x2 * p.s_y2)
}

/// MSE of `t_p` with `m1 = 1 − m2`.
pub fn mse_tp(p: &ValidatedParameterSet, m2: f64) -> f64 {
    derive_moments(p).mse_class(m2)
}

pub fn m2_opt(p: &ValidatedParameterSet) -> Result<(f64, f64)> {
    derive_moments(p).m_opt()
}

pub fn mse_tp_min(p: &ValidatedParameterSet) -> Result<f64> {
    derive_moments(p).mse_class_min()
}

pub fn mse_tp_min_decomposition(p: &ValidatedParameterSet) -> Result<MseDecomposition> {
    decompose(p, DerivedMoments::mse_class_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyReport {
    /// `MSE(t1) − MSE(t_p)_min = O²/Nq`.
    pub gain_vs_t1: f64,
    /// `MSE(t_r) − MSE(t_p)_min = (R·Nq − O)²/Nq`.
    pub gain_vs_tr: f64,
    pub beats_t1: bool,
    pub beats_tr: bool,
}

pub fn efficiency_report(p: &ValidatedParameterSet) -> Result<EfficiencyReport> {
    let d = derive_moments(p);
    d.check_aux()?;
    let gain_vs_t1 = d.o * d.o / d.nq;
    let gap = d.r * d.nq - d.o;
    let gain_vs_tr = gap * gap / d.nq;
    Ok(EfficiencyReport {
        gain_vs_t1,
        gain_vs_tr,
        beats_t1: gain_vs_t1 >= 0.0,
        beats_tr: gain_vs_tr >= 0.0,
    })
}

/// Classical Hansen–Hurwitz variance of `ȳ*` without measurement error,
/// including the finite-population correction:
/// `(1 − f)·S_y²/n + W2(k − 1)·S_y2²/n`, `f = n/N`.
pub fn variance_hh(p: &ValidatedParameterSet) -> Result<f64> {
    let pop = p.population_size.ok_or(Error::RequiresFinitePopulation)?;
    let n = p.n as f64;
    let f = n / pop as f64;
    Ok((1.0 - f) * p.s_y * p.s_y / n + p.w2 * (p.k - 1.0) * p.s_y2 * p.s_y2 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ErrorModel, ParameterSet};
    use crate::reference;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn simple(n: usize, s_x: f64, s_y: f64, rho: f64) -> ParameterSet {
        ParameterSet {
            n,
            population_size: None,
            w2: 0.0,
            k: 1.0,
            mu_y: 1.0,
            mu_x: 1.0,
            s_y,
            s_x,
            rho,
            s_y2: 0.0,
            s_x2: 0.0,
            rho2: 0.0,
            mu_y2: None,
            mu_x2: None,
            errors: ErrorModel::NONE,
        }
    }

    fn table(k: f64) -> ValidatedParameterSet {
        ParameterSet { k, ..reference::published_moments() }.validate().unwrap()
    }

    // Frozen from an exact rational-arithmetic evaluation of the three
    // moment formulas (Python `fractions`), independent of this module.
    const ORACLE_K3: [f64; 5] = [
        0.007142857142857143,
        5806.106309285714,
        31095.114527857142,
        10080.360522280715,
        0.5589707951444863,
    ];
    const ORACLE_K3_MSE_TR: f64 = 4252.469258152568;
    const ORACLE_K3_MSE_MIN: f64 = 2538.2724452836055;
    const ORACLE_K3_B_OPT: f64 = 0.32417827286823575;
    const ORACLE_K3_M2_OPT: f64 = 0.5799556536481304;
    const ORACLE_K3_BIAS_TR: f64 = 4.15880125686514;

    #[test]
    fn table_moments_match_arithmetic_oracle() {
        let d = derive_moments(&table(3.0));
        for (got, want) in [d.a, d.m, d.nq, d.o, d.r].into_iter().zip(ORACLE_K3) {
            assert!(rel(got, want) < 1e-13, "{got} vs {want}");
        }
        let p = table(3.0);
        assert!(rel(mse_tr(&p).total, ORACLE_K3_MSE_TR) < 1e-12);
        assert!(rel(mse_tlr_min(&p).unwrap(), ORACLE_K3_MSE_MIN) < 1e-12);
        assert!(rel(b_opt(&p).unwrap(), ORACLE_K3_B_OPT) < 1e-12);
        assert!(rel(m2_opt(&p).unwrap().1, ORACLE_K3_M2_OPT) < 1e-12);
        assert!(rel(bias_tr(&p), ORACLE_K3_BIAS_TR) < 1e-12);
    }

    #[test]
    fn inflation_factor() {
        assert_eq!(derive_moments(&table(1.0)).a, 0.0);
        let d = derive_moments(&table(1.0));
        assert!(rel(d.m, (613.66f64.powi(2) + 36.0) / 70.0) < 1e-15);
        assert!(rel(derive_moments(&table(3.0)).a, 1.0 / 140.0) < 1e-15);
    }

    #[test]
    fn relative_moments_are_consistent() {
        let p = table(2.0);
        let d = derive_moments(&p);
        let mu2 = p.mu_y * p.mu_y;
        assert!(rel(mu2 * d.e0_sq, d.m) < 1e-12);
        assert!(rel(mu2 * d.e1_sq, d.r * d.r * d.nq) < 1e-12);
        assert!(rel(mu2 * d.e0e1, d.r * d.o) < 1e-12);
        assert!(rel(d.c_y, 613.66 / 981.29) < 1e-15);
    }

    #[test]
    fn zero_stratum_sd_uses_limit_form() {
        let mut p = reference::published_moments();
        p.s_y2 = 0.0;
        p.s_x2 = 0.0;
        let d = derive_moments(&p.validate().unwrap());
        assert!(d.m.is_finite() && d.nq.is_finite());
        assert!(rel(d.m, (613.66f64.powi(2) + 36.0) / 70.0 + 36.0 / 280.0) < 1e-14);
    }

    #[test]
    fn t1_reductions_and_columns() {
        let p = simple(100, 1.0, 1.0, 0.0).validate().unwrap();
        assert!(rel(mse_t1(&p).total, 0.01) < 1e-15);

        let p = ParameterSet {
            errors: ErrorModel::uniform(1.0, 0.0),
            ..simple(100, 1.0, 1.0, 0.0)
        }
        .validate()
        .unwrap();
        assert!(rel(mse_t1(&p).total, 0.02) < 1e-15);

        let p = table(2.0);
        let dec = mse_t1(&p);
        let a = 0.25 / 70.0;
        assert!(rel(dec.without_error, 613.66f64.powi(2) / 70.0 + a * 244.11f64.powi(2)) < 1e-13);
        assert!(rel(dec.me_contribution, 36.0 / 70.0 + a * 36.0) < 1e-9);
        assert!(rel(dec.nr_contribution, a * 244.11f64.powi(2)) < 1e-12);
        assert!(rel(dec.baseline, 613.66f64.powi(2) / 70.0) < 1e-15);
    }

    #[test]
    fn ratio_bias_cases() {
        let p = simple(100, 1.0, 1.0, 0.0).validate().unwrap();
        assert!(rel(bias_tr(&p), 0.01) < 1e-14);
        // O = R·Nq when ρ·S_y = R·S_x with no error or non-response
        let mut q = simple(50, 2.0, 1.0, 1.0);
        q.mu_x = 2.0;
        assert!(bias_tr(&q.validate().unwrap()).abs() < 1e-15);
    }

    #[test]
    fn ratio_reduces_to_classical_srs() {
        let mut p = simple(40, 3.0, 2.0, 0.6);
        p.mu_y = 5.0;
        p.mu_x = 7.0;
        let v = p.validate().unwrap();
        let r = 5.0 / 7.0;
        let classical = (4.0 + r * r * 9.0 - 2.0 * r * 0.6 * 3.0 * 2.0) / 40.0;
        assert!(rel(mse_tr(&v).total, classical) < 1e-13);
        assert_eq!(mse_tr(&v).total, mse_tp(&v, 1.0));
    }

    #[test]
    fn slope_reductions() {
        let v = simple(40, 3.0, 2.0, 0.6).validate().unwrap();
        assert!(rel(b_opt(&v).unwrap(), 0.6 * 2.0 / 3.0) < 1e-14);
        let v = simple(40, 3.0, 2.0, 0.0).validate().unwrap();
        assert_eq!(b_opt(&v).unwrap(), 0.0);
        let d = DerivedMoments { nq: 0.0, ..derive_moments(&v) };
        assert!(matches!(d.b_opt(), Err(Error::NoAuxiliaryVariation { .. })));
        assert!(d.m_opt().is_err());
        assert!(d.mse_class_min().is_err());
    }

    #[test]
    fn regression_at_zero_and_optimal_slope() {
        let p = table(2.0);
        assert_eq!(mse_tlr(&p, 0.0), mse_t1(&p).total);
        let b = b_opt(&p).unwrap();
        assert!(rel(mse_tlr(&p, b), mse_tlr_min(&p).unwrap()) < 1e-12);
    }

    #[test]
    fn no_error_regression_reduction() {
        let v = simple(40, 3.0, 2.0, 0.6).validate().unwrap();
        // without non-response, the b-dependent part vanishes
        assert!(rel(mse_tlr_no_error(&v, 1.7), 4.0 * 0.64 / 40.0) < 1e-14);
        let p = table(2.0).without_measurement_error();
        let a = 0.25 / 70.0;
        let expected = 613.66f64.powi(2) * (1.0 - 0.778f64.powi(2)) / 70.0 + a * 244.11f64.powi(2);
        assert!(rel(mse_tlr_no_error(&p, 0.0), expected) < 1e-13);
    }

    #[test]
    fn class_members() {
        let p = table(2.0);
        assert_eq!(mse_tp(&p, 0.0), mse_t1(&p).total);
        assert_eq!(mse_tp(&p, 1.0), mse_tr(&p).total);
        let (m1, m2) = m2_opt(&p).unwrap();
        assert_eq!(m1 + m2, 1.0);
    }

    #[test]
    fn class_grid_search_finds_optimum() {
        // grid oracle: brute-force evaluation around the closed-form optimum
        let p = table(2.0);
        let (_, m2) = m2_opt(&p).unwrap();
        let grid: Vec<f64> = (0..=100).map(|i| m2 - 0.5 + 0.01 * i as f64).collect();
        let best = grid
            .iter()
            .copied()
            .min_by(|a, b| mse_tp(&p, *a).total_cmp(&mse_tp(&p, *b)))
            .unwrap();
        assert!((best - m2).abs() <= 0.01);
    }

    #[test]
    fn efficiency_edge_cases() {
        let v = simple(40, 3.0, 2.0, 0.0).validate().unwrap();
        assert_eq!(efficiency_report(&v).unwrap().gain_vs_t1, 0.0);
        let mut q = simple(50, 2.0, 1.0, 1.0);
        q.mu_x = 2.0;
        assert!(efficiency_report(&q.validate().unwrap()).unwrap().gain_vs_tr < 1e-18);
    }

    #[test]
    fn hh_variance() {
        let mut p = reference::reference_design();
        assert!(matches!(
            variance_hh(&reference::published_moments().validate().unwrap()),
            Err(Error::RequiresFinitePopulation)
        ));
        p.k = 1.0;
        p.n = 7000;
        assert_eq!(variance_hh(&p.clone().validate().unwrap()).unwrap(), 0.0);
        p.n = 70;
        p.w2 = 0.0;
        let v = variance_hh(&p.validate().unwrap()).unwrap();
        assert!(rel(v, 0.99 * 613.66f64.powi(2) / 70.0) < 1e-14);
    }

    pub(crate) fn random_params() -> impl Strategy<Value = ParameterSet> {
        (
            (2usize..500, 0.0f64..1.0, 1.0f64..6.0),
            (1.0f64..1e4, 1.0f64..1e4, 0.1f64..1e3, 0.1f64..1e3, -0.95f64..0.95),
            (0.0f64..1e3, 0.0f64..1e3, -0.95f64..0.95),
            (0.0f64..50.0, 0.0f64..50.0, 0.0f64..50.0, 0.0f64..50.0),
        )
            .prop_map(|((n, w2, k), (mu_y, mu_x, s_y, s_x, rho), (s_y2, s_x2, rho2), e)| {
                ParameterSet {
                    n,
                    population_size: None,
                    w2,
                    k,
                    mu_y,
                    mu_x,
                    s_y,
                    s_x,
                    rho,
                    s_y2,
                    s_x2,
                    rho2,
                    mu_y2: None,
                    mu_x2: None,
                    errors: ErrorModel {
                        sigma_u_sq: e.0,
                        sigma_v_sq: e.1,
                        sigma_u2_sq: e.2,
                        sigma_v2_sq: e.3,
                    },
                }
            })
    }

    fn all_mses(p: &ParameterSet) -> [f64; 4] {
        let v = p.clone().validate().unwrap();
        [
            mse_t1(&v).total,
            mse_tr(&v).total,
            mse_tlr_min(&v).unwrap(),
            mse_tp_min(&v).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn decompositions_are_additive(p in random_params()) {
            let v = p.validate().unwrap();
            for dec in [
                mse_t1(&v),
                mse_tr(&v),
                mse_tlr_min_decomposition(&v).unwrap(),
                mse_tp_min_decomposition(&v).unwrap(),
            ] {
                let sum = dec.baseline + dec.me_contribution + dec.nr_contribution;
                prop_assert!(rel(sum, dec.total) < 1e-9);
                prop_assert!(dec.me_contribution >= -1e-9 * dec.total);
                prop_assert!(dec.nr_contribution >= -1e-9 * dec.total);
            }
        }

        #[test]
        fn damage_is_monotone(p in random_params(), which in 0usize..6, bump in 0.01f64..10.0) {
            let mut q = p.clone();
            match which {
                0 => q.errors.sigma_u_sq += bump,
                1 => q.errors.sigma_v_sq += bump,
                2 => q.errors.sigma_u2_sq += bump,
                3 => q.errors.sigma_v2_sq += bump,
                4 => q.k += bump,
                _ => q.w2 = (q.w2 + bump / 10.0).min(1.0),
            }
            for (before, after) in all_mses(&p).into_iter().zip(all_mses(&q)) {
                prop_assert!(after >= before * (1.0 - 1e-12), "{before} -> {after}");
            }
        }

        #[test]
        fn y_scaling_multiplies_mse(p in random_params(), c in 0.01f64..100.0) {
            let mut q = p.clone();
            q.mu_y *= c;
            q.s_y *= c;
            q.s_y2 *= c;
            q.errors.sigma_u_sq *= c * c;
            q.errors.sigma_u2_sq *= c * c;
            for (a, b) in all_mses(&p).into_iter().zip(all_mses(&q)) {
                prop_assert!(rel(b, c * c * a) < 1e-10);
            }
        }

        #[test]
        fn x_scaling_leaves_mse_invariant(p in random_params(), c in 0.01f64..100.0) {
            let mut q = p.clone();
            q.mu_x *= c;
            q.s_x *= c;
            q.s_x2 *= c;
            q.errors.sigma_v_sq *= c * c;
            q.errors.sigma_v2_sq *= c * c;
            for (a, b) in all_mses(&p).into_iter().zip(all_mses(&q)) {
                prop_assert!(rel(b, a) < 1e-10);
            }
            let (vp, vq) = (p.validate().unwrap(), q.validate().unwrap());
            prop_assert!(rel(b_opt(&vq).unwrap() * c, b_opt(&vp).unwrap()) < 1e-10);
            prop_assert!(rel(m2_opt(&vq).unwrap().1, m2_opt(&vp).unwrap().1) < 1e-10);
        }
    }
}
