//! Finite counting statistics of a dip measurement.
//!
//! Each pulse pair is one Bernoulli trial with the closed-form coincidence
//! probability, so a setting with `n` pulse pairs yields a binomial count.
//! Counts from a matched setting (overlap `T`) and an unmatched reference
//! (`T = 0`) give a visibility estimate, which the correction factor turns
//! into an overlap estimate.
//!
//! Randomness is ChaCha8 seeded per cell and replica through
//! [`derive_seed`], so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{coincidence_rate, correction_factor, EffectiveParams, SetupParams};
use crate::error::{Error, Result};
use crate::output::sig9;

/// Fewest replicas [`uncertainty_scan`] accepts.
pub const MIN_SCAN_REPLICAS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPlan {
    pub n_pulses: u64,
    pub seed: u64,
}

impl TrialPlan {
    pub fn new(n_pulses: u64, seed: u64) -> Result<Self> {
        if n_pulses == 0 {
            return Err(Error::param("n_pulses", 0.0, "must be >= 1"));
        }
        Ok(TrialPlan { n_pulses, seed })
    }

    fn with_seed(&self, seed: u64) -> Self {
        TrialPlan { seed, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Matched,
    Unmatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRecord {
    pub setting: Setting,
    pub overlap: f64,
    pub coincidences: u64,
    pub n_pulses: u64,
}

impl CountRecord {
    pub fn rate(&self) -> f64 {
        self.coincidences as f64 / self.n_pulses as f64
    }
}

/// SplitMix64 finalizer over `master ⊕ index·γ`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Binomial coincidence count for `plan.n_pulses` pulse pairs at overlap `t`.
pub fn simulate_counts(s: &SetupParams, t: f64, plan: &TrialPlan) -> Result<CountRecord> {
    let rate = coincidence_rate(s, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let coincidences = Binomial::new(plan.n_pulses, rate)
        .map_err(|e| Error::Numerical(format!("binomial({}, {rate}): {e}", plan.n_pulses)))?
        .sample(&mut rng);
    Ok(CountRecord {
        setting: if t == 0.0 {
            Setting::Unmatched
        } else {
            Setting::Matched
        },
        overlap: t,
        coincidences,
        n_pulses: plan.n_pulses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// `V̂ = 1 − (k_T/n_T)/(k_0/n_0)` with first-order binomial error propagation.
pub fn estimate_visibility(matched: &CountRecord, unmatched: &CountRecord) -> Result<Estimate> {
    if unmatched.coincidences == 0 {
        return Err(Error::CannotNormalize);
    }
    let r_t = matched.rate();
    let r_0 = unmatched.rate();
    let var_t = r_t * (1.0 - r_t) / matched.n_pulses as f64;
    let var_0 = r_0 * (1.0 - r_0) / unmatched.n_pulses as f64;
    let value = 1.0 - r_t / r_0;
    let stderr = (var_t / (r_0 * r_0) + var_0 * r_t * r_t / r_0.powi(4)).sqrt();
    Ok(Estimate { value, stderr })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapEstimate {
    pub value: f64,
    pub stderr: f64,
    /// False when the estimate falls outside `[0, 1]`.
    pub physical: bool,
}

/// `T̂ = V̂/c_f`, `ΔT̂ = stderr/c_f`, reported without clamping.
pub fn estimate_overlap(v: f64, stderr: f64, s: &SetupParams) -> Result<OverlapEstimate> {
    let cf = correction_factor(s)?;
    if cf <= 0.0 {
        return Err(Error::Numerical(format!(
            "correction factor {cf} cannot be inverted"
        )));
    }
    let value = v / cf;
    Ok(OverlapEstimate {
        value,
        stderr: stderr / cf,
        physical: (0.0..=1.0).contains(&value),
    })
}

/// One simulated dip measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub replica: u64,
    pub seed: u64,
    #[serde(serialize_with = "sig9")]
    pub p: f64,
    #[serde(serialize_with = "sig9")]
    pub eta: f64,
    #[serde(serialize_with = "sig9")]
    pub xi: f64,
    #[serde(serialize_with = "sig9")]
    pub beta_sq: f64,
    #[serde(serialize_with = "sig9")]
    pub overlap: f64,
    pub n_pulses: u64,
    pub k_matched: u64,
    pub k_unmatched: u64,
    #[serde(serialize_with = "sig9")]
    pub v_hat: f64,
    #[serde(serialize_with = "sig9")]
    pub v_stderr: f64,
    #[serde(serialize_with = "sig9")]
    pub t_hat: f64,
    #[serde(serialize_with = "sig9")]
    pub t_stderr: f64,
    pub physical: bool,
}

/// Matched and unmatched counts plus estimates for one replica seed.
pub fn run_replica(s: &SetupParams, t: f64, plan: &TrialPlan, replica: u64) -> Result<ReplicaRow> {
    let seed = derive_seed(plan.seed, replica);
    let matched = simulate_counts(s, t, &plan.with_seed(derive_seed(seed, 0)))?;
    let unmatched = simulate_counts(s, 0.0, &plan.with_seed(derive_seed(seed, 1)))?;
    let v = estimate_visibility(&matched, &unmatched)?;
    let est = estimate_overlap(v.value, v.stderr, s)?;
    Ok(ReplicaRow {
        replica,
        seed,
        p: s.p,
        eta: s.eta,
        xi: s.xi,
        beta_sq: s.beta_sq,
        overlap: t,
        n_pulses: plan.n_pulses,
        k_matched: matched.coincidences,
        k_unmatched: unmatched.coincidences,
        v_hat: v.value,
        v_stderr: v.stderr,
        t_hat: est.value,
        t_stderr: est.stderr,
        physical: est.physical,
    })
}

/// `replicas` independent dip measurements, in replica order.
pub fn run_replicas(s: &SetupParams, t: f64, plan: &TrialPlan, replicas: usize) -> Result<Vec<ReplicaRow>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(s, t, plan, r))
        .collect()
}

/// Empirical spread of `T̂` for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(serialize_with = "sig9")]
    pub p: f64,
    #[serde(serialize_with = "sig9")]
    pub eta: f64,
    #[serde(serialize_with = "sig9")]
    pub xi: f64,
    #[serde(serialize_with = "sig9")]
    pub beta_sq: f64,
    #[serde(serialize_with = "sig9")]
    pub eta_p: f64,
    #[serde(serialize_with = "sig9")]
    pub eta_beta_sq: f64,
    pub replicas: usize,
    #[serde(serialize_with = "sig9")]
    pub mean_t_hat: f64,
    /// Sample standard deviation of `T̂` across replicas.
    #[serde(serialize_with = "sig9")]
    pub empirical_dt: f64,
    /// `1/(c_f √(n R_C(0)))`, the scaling law up to an overall constant.
    #[serde(serialize_with = "sig9")]
    pub scaling_dt: f64,
}

/// Replicated overlap estimates over a family of setups, one row per setup.
///
/// Cell `i` draws from `derive_seed(plan.seed, i)`, so adding or reordering
/// cells never changes the numbers of the others.
pub fn uncertainty_scan(
    family: &[SetupParams],
    t: f64,
    plan: &TrialPlan,
    replicas: usize,
) -> Result<Vec<ScanRow>> {
    if replicas < MIN_SCAN_REPLICAS {
        return Err(Error::param(
            "replicas",
            replicas as f64,
            "uncertainty scan needs at least 30 replicas",
        ));
    }
    family
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let cell = plan.with_seed(derive_seed(plan.seed, i as u64));
            let rows = run_replicas(s, t, &cell, replicas)?;
            let estimates: Vec<f64> = rows.iter().map(|r| r.t_hat).collect();
            let (mean, sd) = mean_and_sd(&estimates);
            let e: EffectiveParams = s.effective();
            let scaling = 1.0
                / (e.correction_factor()? * (plan.n_pulses as f64 * e.coincidence_rate(0.0)?).sqrt());
            Ok(ScanRow {
                p: s.p,
                eta: s.eta,
                xi: s.xi,
                beta_sq: s.beta_sq,
                eta_p: e.eta_p,
                eta_beta_sq: e.eta_beta_sq,
                replicas,
                mean_t_hat: mean,
                empirical_dt: sd,
                scaling_dt: scaling,
            })
        })
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
