use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::trajectory::{
    generate_acquisition_ages, integrate_brain_age, sample_deviation_params, DeviationParams,
    Label, Scheme, DEFAULT_STEP,
};

use super::generate::{generate_phantom, sample_morphology, Morphology, PhantomParams};
use super::volume::{write_volume, GridSpec};

/// Yearly evaluation grid of chronological ages.
pub fn yearly_ages() -> Vec<f64> {
    (50..=90).map(|a| a as f64).collect()
}

/// Inclusive yearly age range covered by the simulation.
pub const YEARLY_AGES: (u32, u32) = (50, 90);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CohortConfig {
    /// Total simulated subjects; must be divisible by 3 for the 2:1 split.
    pub subjects: usize,
    pub scheme: Scheme,
    pub grid: GridSpec,
    pub phantom: PhantomParams,
    /// ODE integration noise (0 = deterministic trajectories).
    pub ode_noise_std: f64,
    pub t_end_offset: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanRef {
    pub path: PathBuf,
    pub chron_age: f64,
    pub bio_age: f64,
}

/// One trajectory of one subject: the paper's D = {(I_i, t_i)} with a label.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LongitudinalRecord {
    pub subject_id: String,
    pub subject_index: usize,
    pub label: Label,
    pub morphology: Morphology,
    pub params: DeviationParams,
    /// Seed of the record's ODE integration (for re-deriving the full BA curve).
    pub ode_seed: u64,
    pub scans: Vec<ScanRef>,
}

impl LongitudinalRecord {
    pub fn record_id(&self) -> String {
        format!("{}-{}", self.subject_id, self.label.as_str())
    }

    /// Chronological ages of the record's scans.
    pub fn scan_ages(&self) -> Vec<f64> {
        self.scans.iter().map(|s| s.chron_age).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CohortManifest {
    pub config: CohortConfig,
    pub config_digest: String,
    pub seed: u64,
    pub scheme: Scheme,
    pub train: Vec<LongitudinalRecord>,
    pub test: Vec<LongitudinalRecord>,
}

impl CohortManifest {
    pub fn all_records(&self) -> impl Iterator<Item = &LongitudinalRecord> {
        self.train.iter().chain(self.test.iter())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&json)?)
    }
}

fn config_digest(config: &CohortConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Observation-noise seed for one rendered scan. Derived from subject and
/// chronological age only, so a counterfactual pair gets identical noise
/// wherever its acquisition ages coincide.
pub fn scan_noise_seed(master: u64, subject: usize, chron_age: f64) -> u64 {
    let milli_years = (chron_age * 1000.0).round() as u64;
    let s = rng_for(master, "imgnoise", (subject as u64) << 20 | milli_years);
    use rand::RngCore;
    let mut s = s;
    s.next_u64()
}

/// Integrates the record's BA curve over the yearly grid (plus nothing else:
/// all acquisition ages are integer years, so they are read off the grid).
pub fn record_curve(record: &LongitudinalRecord) -> Result<crate::trajectory::BrainAgeCurve> {
    integrate_brain_age(50.0, &yearly_ages(), &record.params, DEFAULT_STEP, record.ode_seed)
}

fn build_record(
    config: &CohortConfig,
    subject: usize,
    label: Label,
    morphology: &Morphology,
    ages: &[f64],
    volumes_dir: &Path,
) -> Result<LongitudinalRecord> {
    let label_bit = match label {
        Label::Healthy => 0u64,
        Label::AdLike => 1u64,
    };
    let mut param_rng = rng_for(config.seed, "devparams", (subject as u64) * 2 + label_bit);
    let params = sample_deviation_params(label, config.t_end_offset, config.ode_noise_std, &mut param_rng);
    use rand::RngCore;
    let ode_seed = rng_for(config.seed, "ode", (subject as u64) * 2 + label_bit).next_u64();

    let curve = integrate_brain_age(50.0, &yearly_ages(), &params, DEFAULT_STEP, ode_seed)?;
    let subject_id = format!("sub-{subject:03}");
    let mut scans = Vec::with_capacity(ages.len());
    for &age in ages {
        let bio = curve.bio_at(age).ok_or_else(|| {
            Error::Input(format!("acquisition age {age} not on the yearly grid"))
        })?;
        let vol = generate_phantom(
            morphology,
            bio,
            &config.grid,
            &config.phantom,
            Some(scan_noise_seed(config.seed, subject, age)),
        )?;
        let vol = crate::phantom::Volume { age, ..vol };
        let path = volumes_dir.join(format!(
            "{subject_id}-{}-t{age:05.1}.vol",
            label.as_str()
        ));
        write_volume(&vol, &path)?;
        scans.push(ScanRef {
            path,
            chron_age: age,
            bio_age: bio,
        });
    }
    Ok(LongitudinalRecord {
        subject_id,
        subject_index: subject,
        label,
        morphology: morphology.clone(),
        params,
        ode_seed,
        scans,
    })
}

/// Builds the full cohort: 2:1 train/test subject split, coin-flip labels for
/// train subjects, counterfactual healthy+AD pairs (shared morphology and
/// acquisition schedule) for test subjects. Volumes are written under
/// `out_dir/volumes`, the manifest under `out_dir/manifest.json`.
pub fn build_cohort(config: &CohortConfig, out_dir: &Path) -> Result<CohortManifest> {
    if config.subjects == 0 || config.subjects % 3 != 0 {
        return Err(Error::Config(format!(
            "subject count must be a positive multiple of 3 for the 2:1 split, got {}",
            config.subjects
        )));
    }
    let volumes_dir = out_dir.join("volumes");
    fs::create_dir_all(&volumes_dir)
        .map_err(|e| Error::io(volumes_dir.display().to_string(), e))?;

    let n_train = config.subjects * 2 / 3;
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity((config.subjects - n_train) * 2);
    for subject in 0..config.subjects {
        use rand::RngCore;
        let morph_seed = rng_for(config.seed, "morphology", subject as u64).next_u64();
        let morphology = sample_morphology(morph_seed, &config.phantom);
        let sched_seed = rng_for(config.seed, "schedule", subject as u64).next_u64();
        let schedule = generate_acquisition_ages(config.scheme, sched_seed);

        if subject < n_train {
            let mut label_rng = rng_for(config.seed, "label", subject as u64);
            use rand::Rng;
            let label = if label_rng.gen::<bool>() {
                Label::AdLike
            } else {
                Label::Healthy
            };
            train.push(build_record(
                config,
                subject,
                label,
                &morphology,
                &schedule.ages,
                &volumes_dir,
            )?);
        } else {
            for label in [Label::Healthy, Label::AdLike] {
                test.push(build_record(
                    config,
                    subject,
                    label,
                    &morphology,
                    &schedule.ages,
                    &volumes_dir,
                )?);
            }
        }
    }
    let manifest = CohortManifest {
        config_digest: config_digest(config)?,
        seed: config.seed,
        scheme: config.scheme,
        config: config.clone(),
        train,
        test,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
