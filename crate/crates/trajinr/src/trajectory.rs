//! Brain-age-deviation ODE: dBA/dt = 1 + alpha*(sigmoid(r(t-t_start)) - 2*sigmoid(r(t-t_end))) + eps(t),
//! with BA(t0) = t0. Healthy and AD-like parameter priors, RK4 integration with
//! optional Euler-Maruyama noise, and acquisition-age schedules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{normal_with, Prng};
use rand::SeedableRng;

/// Trajectory class.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Healthy,
    AdLike,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Healthy => "healthy",
            Label::AdLike => "ad_like",
        }
    }
}

/// Parameters of the deviation ODE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationParams {
    pub alpha: f64,
    /// Transition rate, 1/years. Must be positive.
    pub r: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Euler-Maruyama noise scale; 0 disables noise.
    pub noise_std: f64,
    pub label: Label,
}

impl DeviationParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_start >= self.t_end {
            return Err(Error::Input(format!(
                "deviation params need t_start < t_end, got {} >= {}",
                self.t_start, self.t_end
            )));
        }
        if self.r <= 0.0 {
            return Err(Error::Input(format!("deviation rate r must be > 0, got {}", self.r)));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Input("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// Mean AD-like parameters with noise disabled.
    pub fn ad_like_mean(t_end_offset: f64) -> Self {
        DeviationParams {
            alpha: 1.10,
            r: 0.25,
            t_start: 55.0,
            t_end: 55.0 + t_end_offset,
            noise_std: 0.0,
            label: Label::AdLike,
        }
    }

    /// Mean healthy parameters with noise disabled.
    pub fn healthy_mean(t_end_offset: f64) -> Self {
        DeviationParams {
            alpha: 0.0,
            r: 0.25,
            t_start: 55.0,
            t_end: 55.0 + t_end_offset,
            noise_std: 0.0,
            label: Label::Healthy,
        }
    }
}

/// Dampening onset relative to t_start. Chosen so the mean AD-like deviation at
/// age 80 lands in the 5-10 year range while BA(t) stays >= t through age 90.
pub const DEFAULT_T_END_OFFSET: f64 = 18.5;

/// Default RK4 step in years.
pub const DEFAULT_STEP: f64 = 0.05;

/// An integrated biological-age curve sampled at query ages.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrainAgeCurve {
    pub chronological: Vec<f64>,
    pub biological: Vec<f64>,
    pub params: DeviationParams,
    pub seed: u64,
}

impl BrainAgeCurve {
    /// Biological age at a chronological query age (must be one of the sampled ages).
    pub fn bio_at(&self, chron: f64) -> Option<f64> {
        self.chronological
            .iter()
            .position(|&t| (t - chron).abs() < 1e-9)
            .map(|i| self.biological[i])
    }
}

/// Temporal sampling scheme.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Regular,
    Irregular,
}

/// Fixed ages of the regular sampling scheme.
pub const REGULAR_AGES: [f64; 4] = [50.0, 58.0, 67.0, 75.0];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcquisitionSchedule {
    pub scheme: Scheme,
    pub ages: Vec<f64>,
    pub seed: u64,
}

/// Deterministic part of dBA/dt. The noise term is added only during integration.
pub fn brain_age_rate(t: f64, p: &DeviationParams) -> f64 {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    1.0 + p.alpha * (sig(p.r * (t - p.t_start)) - 2.0 * sig(p.r * (t - p.t_end)))
}

/// Integrates the deviation ODE from `t0` and reports BA at each query age.
///
/// Fixed-step RK4 on the deterministic rate plus an Euler-Maruyama increment
/// sqrt(h)*eta per step when noise is enabled. Deterministic given `seed`.
pub fn integrate_brain_age(
    t0: f64,
    query_ages: &[f64],
    p: &DeviationParams,
    step: f64,
    seed: u64,
) -> Result<BrainAgeCurve> {
    p.validate()?;
    if step <= 0.0 {
        return Err(Error::Input(format!("integration step must be > 0, got {step}")));
    }
    if query_ages.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Input("query ages must be sorted ascending".into()));
    }
    if let Some(&first) = query_ages.first() {
        if first < t0 {
            return Err(Error::Input(format!(
                "first query age {first} precedes initial age {t0}"
            )));
        }
    }
    let mut rng = Prng::seed_from_u64(seed);
    let mut t = t0;
    let mut ba = t0;
    let mut biological = Vec::with_capacity(query_ages.len());
    for &q in query_ages {
        while t < q - 1e-12 {
            let h = step.min(q - t);
            let k1 = brain_age_rate(t, p);
            let k2 = brain_age_rate(t + h / 2.0, p);
            let k3 = k2;
            let k4 = brain_age_rate(t + h, p);
            ba += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if p.noise_std > 0.0 {
                ba += h.sqrt() * normal_with(&mut rng, 0.0, p.noise_std);
            }
            t += h;
        }
        biological.push(ba);
    }
    Ok(BrainAgeCurve {
        chronological: query_ages.to_vec(),
        biological,
        params: p.clone(),
        seed,
    })
}

/// Draws ODE parameters from the label-specific priors. `r` is clamped to 0.01.
pub fn sample_deviation_params(
    label: Label,
    t_end_offset: f64,
    noise_std: f64,
    rng: &mut impl Rng,
) -> DeviationParams {
    let (alpha_mean, alpha_std, t_start_std) = match label {
        Label::AdLike => (1.10, 0.05, 2.5),
        Label::Healthy => (0.00, 0.10, 1.0),
    };
    let alpha = normal_with(rng, alpha_mean, alpha_std);
    let r = normal_with(rng, 0.25, 0.05).max(0.01);
    let t_start = normal_with(rng, 55.0, t_start_std);
    DeviationParams {
        alpha,
        r,
        t_start,
        t_end: t_start + t_end_offset,
        noise_std,
        label,
    }
}

/// Regular scheme: fixed ages {50, 58, 67, 75}. Irregular: 3-5 distinct integer
/// ages drawn without replacement from [50, 75], sorted.
pub fn generate_acquisition_ages(scheme: Scheme, seed: u64) -> AcquisitionSchedule {
    let mut rng = Prng::seed_from_u64(seed);
    let ages = match scheme {
        Scheme::Regular => REGULAR_AGES.to_vec(),
        Scheme::Irregular => {
            let count = rng.gen_range(3..=5usize);
            let mut pool: Vec<i64> = (50..=75).collect();
            let mut picked = Vec::with_capacity(count);
            for _ in 0..count {
                let i = rng.gen_range(0..pool.len());
                picked.push(pool.swap_remove(i) as f64);
            }
            picked.sort_by(|a, b| a.partial_cmp(b).unwrap());
            picked
        }
    };
    AcquisitionSchedule { scheme, ages, seed }
}
