//! End-to-end orchestration: seeded config, cohort simulation, INR fitting,
//! weight-space classification, and reconstruction evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    classify_matrix, history_csv, stack_stream_params, stacked_entry_count, train_classifier,
    write_classifier, ClassifierConfig, StreamMatrix, StreamSelection,
};
use crate::error::{Error, Result};
use crate::inr::{
    finetune_subject, pretrain_init, read_inr_expecting, write_inr, FitConfig, InrArchitecture,
    InrParams,
};
use crate::metrics::{
    accuracy, reconstruction_report, ClassificationReport, ClassificationRow,
    ReconstructionReport,
};
use crate::phantom::{
    build_cohort, CohortConfig, CohortManifest, GridSpec, LongitudinalRecord, PhantomParams,
};
use crate::rng::rng_for;
use crate::trajectory::{Label, Scheme, DEFAULT_T_END_OFFSET};

/// Full pipeline configuration. Loaded from TOML; the master seed must be
/// given explicitly (runs are never seeded from the clock).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scheme: Scheme,
    pub subjects: usize,
    pub grid: GridSpec,
    pub arch: InrArchitecture,
    pub fit: FitConfig,
    pub classifier: ClassifierConfig,
    pub selections: Vec<StreamSelection>,
    pub phantom: PhantomParams,
    pub ode_noise_std: f64,
    pub t_end_offset: f64,
    /// Finetune worker pool size; 0 means all logical cores.
    pub workers: usize,
}

impl PipelineConfig {
    /// Desk-scale preset: 30 subjects, 32^3 grids, H=64. The default.
    pub fn desk(seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            seed,
            out_dir: out_dir.into(),
            scheme: Scheme::Irregular,
            subjects: 30,
            grid: GridSpec::cube(32),
            arch: InrArchitecture::desk(),
            fit: FitConfig {
                pretrain_iters: 250,
                pretrain_voxel_frac: 0.01,
                batch_subjects: 3,
                finetune_iters: 400,
                finetune_voxel_frac: 0.05,
                learning_rate: 1e-3,
            },
            classifier: ClassifierConfig::desk(),
            selections: StreamSelection::evaluation_set().to_vec(),
            phantom: PhantomParams::default(),
            ode_noise_std: 0.0,
            t_end_offset: DEFAULT_T_END_OFFSET,
            workers: 0,
        }
    }

    /// Published-scale preset (450 subjects, 147x183x169, H=512). Recorded
    /// for reference; far beyond desk runtimes and not exercised by tests.
    pub fn paper(seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            scheme: Scheme::Regular,
            subjects: 450,
            grid: GridSpec {
                dims: [147, 183, 169],
                spacing: [1.0, 1.0, 1.0],
            },
            arch: InrArchitecture::paper(),
            fit: FitConfig::default(),
            classifier: ClassifierConfig::paper(),
            ..Self::desk(seed, out_dir)
        }
    }

    pub fn preset(name: &str, seed: u64, out_dir: impl Into<PathBuf>) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(seed, out_dir)),
            "paper" => Ok(Self::paper(seed, out_dir)),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected \"desk\" or \"paper\""
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.subjects % 3 != 0 {
            return Err(Error::Config(format!(
                "subject count must be a positive multiple of 3, got {}",
                self.subjects
            )));
        }
        if self.grid.dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("grid dims must be positive".into()));
        }
        if self.selections.is_empty() {
            return Err(Error::Config("at least one stream selection required".into()));
        }
        for s in &self.selections {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.arch.validate()?;
        self.classifier.validate()?;
        Ok(())
    }

    /// Cohort sub-config with its derived child seed.
    pub fn cohort_config(&self) -> CohortConfig {
        CohortConfig {
            subjects: self.subjects,
            scheme: self.scheme,
            grid: self.grid.clone(),
            phantom: self.phantom.clone(),
            ode_noise_std: self.ode_noise_std,
            t_end_offset: self.t_end_offset,
            seed: child_seed(self.seed, "cohort", 0),
        }
    }

    pub fn cohort_dir(&self) -> PathBuf {
        self.out_dir.join("cohort")
    }

    pub fn fit_dir(&self) -> PathBuf {
        self.out_dir.join("fit")
    }

    pub fn classify_dir(&self) -> PathBuf {
        self.out_dir.join("classify")
    }

    pub fn evaluate_dir(&self) -> PathBuf {
        self.out_dir.join("evaluate")
    }
}

/// Fans the master seed out to a labeled 64-bit child seed.
pub fn child_seed(master: u64, role: &str, index: u64) -> u64 {
    rng_for(master, role, index).next_u64()
}

/// Optional TOML fields merged over a preset base.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    seed: Option<u64>,
    preset: Option<String>,
    out_dir: Option<PathBuf>,
    scheme: Option<Scheme>,
    subjects: Option<usize>,
    grid: Option<GridSpec>,
    arch: Option<InrArchitecture>,
    fit: Option<FitConfig>,
    classifier: Option<ClassifierConfig>,
    selections: Option<Vec<StreamSelection>>,
    phantom: Option<PhantomParams>,
    ode_noise_std: Option<f64>,
    t_end_offset: Option<f64>,
    workers: Option<usize>,
}

/// Loads a TOML config. The file chooses a preset (default "desk") and may
/// override any field; `preset_override` (e.g. from a CLI flag) wins over the
/// file's choice. A master seed is mandatory.
pub fn load_config(path: &Path, preset_override: Option<&str>) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let partial: PartialConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    let seed = partial.seed.ok_or_else(|| {
        Error::Config("config must set an explicit master seed (no wall-clock seeding)".into())
    })?;
    let preset = preset_override
        .map(str::to_owned)
        .or(partial.preset.clone())
        .unwrap_or_else(|| "desk".into());
    let out_dir = partial.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut config = PipelineConfig::preset(&preset, seed, out_dir)?;
    if let Some(v) = partial.scheme {
        config.scheme = v;
    }
    if let Some(v) = partial.subjects {
        config.subjects = v;
    }
    if let Some(v) = partial.grid {
        config.grid = v;
    }
    if let Some(v) = partial.arch {
        config.arch = v;
    }
    if let Some(v) = partial.fit {
        config.fit = v;
    }
    if let Some(v) = partial.classifier {
        config.classifier = v;
    }
    if let Some(v) = partial.selections {
        config.selections = v;
    }
    if let Some(v) = partial.phantom {
        config.phantom = v;
    }
    if let Some(v) = partial.ode_noise_std {
        config.ode_noise_std = v;
    }
    if let Some(v) = partial.t_end_offset {
        config.t_end_offset = v;
    }
    if let Some(v) = partial.workers {
        config.workers = v;
    }
    config.validate()?;
    Ok(config)
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("iter,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{:.6e}\n", i + 1, l));
    }
    out
}

fn load_manifest(config: &PipelineConfig) -> Result<CohortManifest> {
    let path = config.cohort_dir().join("manifest.json");
    if !path.exists() {
        return Err(Error::MissingCohort(path.display().to_string()));
    }
    CohortManifest::load(&path)
}

fn record_inr_path(config: &PipelineConfig, record: &LongitudinalRecord) -> PathBuf {
    config.fit_dir().join(format!("{}.inr", record.record_id()))
}

fn load_record_inr(config: &PipelineConfig, record: &LongitudinalRecord) -> Result<InrParams> {
    let path = record_inr_path(config, record);
    if !path.exists() {
        return Err(Error::MissingInr(path.display().to_string()));
    }
    read_inr_expecting(&path, &config.arch)
}

/// Per-subject (not per-record) seed index: the two records of a
/// counterfactual test pair share one fit seed, so they see identical voxel
/// sampling sequences and their weight difference isolates the trajectory
/// effect (common random numbers).
fn finetune_seed_index(record: &LongitudinalRecord) -> u64 {
    record.subject_index as u64
}

/// Runs a closure inside a worker pool of the configured size (0 = rayon's
/// default, all logical cores).
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Simulates the cohort into `out/cohort` and prints a one-line summary.
pub fn cmd_simulate(config: &PipelineConfig) -> Result<CohortManifest> {
    config.validate()?;
    let manifest = build_cohort(&config.cohort_config(), &config.cohort_dir())?;
    println!(
        "simulated {} subjects ({} records: {} train, {} test) under the {:?} scheme -> {}",
        config.subjects,
        manifest.train.len() + manifest.test.len(),
        manifest.train.len(),
        manifest.test.len(),
        manifest.scheme,
        config.cohort_dir().display()
    );
    Ok(manifest)
}

/// Pretrains the shared initialization on the train split, then finetunes
/// every record (train and test) from it in a worker pool. Writes the
/// initialization, per-record INRs, and loss CSVs under `out/fit`.
pub fn cmd_fit(config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    let manifest = load_manifest(config)?;
    let fit_dir = config.fit_dir();
    fs::create_dir_all(&fit_dir).map_err(|e| Error::io(fit_dir.display().to_string(), e))?;

    let (theta_star, pre_losses) = pretrain_init(
        &manifest.train,
        &config.arch,
        &config.fit,
        child_seed(config.seed, "pretrain", 0),
    )?;
    write_inr(&theta_star, &fit_dir.join("theta_star.inr"))?;
    write_string(&fit_dir.join("pretrain_loss.csv"), &loss_csv(&pre_losses))?;

    let records: Vec<&LongitudinalRecord> = manifest.all_records().collect();
    with_pool(config.workers, || {
        records
            .par_iter()
            .map(|record| {
                let seed = child_seed(config.seed, "finetune", finetune_seed_index(record));
                let (theta, losses) = finetune_subject(&theta_star, record, &config.fit, seed)?;
                write_inr(&theta, &record_inr_path(config, record))?;
                write_string(
                    &fit_dir.join(format!("{}_loss.csv", record.record_id())),
                    &loss_csv(&losses),
                )?;
                Ok(())
            })
            .collect::<Result<Vec<()>>>()
    })??;
    println!(
        "fitted initialization + {} subject INRs -> {}",
        records.len(),
        fit_dir.display()
    );
    Ok(())
}

/// Trains one classifier per configured stream selection on the train-split
/// INRs and evaluates on the counterfactual test pairs. Writes model files,
/// training histories, and the report under `out/classify`.
pub fn cmd_classify(config: &PipelineConfig) -> Result<ClassificationReport> {
    config.validate()?;
    let manifest = load_manifest(config)?;
    let dir = config.classify_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let train_params: Vec<(InrParams, Label)> = manifest
        .train
        .iter()
        .map(|r| Ok((load_record_inr(config, r)?, r.label)))
        .collect::<Result<_>>()?;
    let test_params: Vec<(InrParams, Label, String)> = manifest
        .test
        .iter()
        .map(|r| Ok((load_record_inr(config, r)?, r.label, r.record_id())))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(config.selections.len());
    for &sel in &config.selections {
        let tag = sel.label();
        let train_mats: Vec<(StreamMatrix, Label)> = train_params
            .iter()
            .map(|(p, l)| Ok((stack_stream_params(p, sel, "train")?, *l)))
            .collect::<Result<_>>()?;
        let items: Vec<(&StreamMatrix, Label)> =
            train_mats.iter().map(|(m, l)| (m, *l)).collect();
        let (model, history) = train_classifier(
            &items,
            &config.classifier,
            child_seed(config.seed, "classifier", sel.bits() as u64),
        )?;
        write_classifier(&model, &dir.join(format!("model_{tag}.cls")))?;
        write_string(&dir.join(format!("history_{tag}.csv")), &history_csv(&history))?;

        let mut preds = Vec::with_capacity(test_params.len());
        let mut labels = Vec::with_capacity(test_params.len());
        for (p, l, id) in &test_params {
            let m = stack_stream_params(p, sel, id.clone())?;
            preds.push(classify_matrix(&model, &m)?.1);
            labels.push(*l);
        }
        let acc = accuracy(&preds, &labels)?;
        println!("selection {tag}: test accuracy {acc:.1}%");
        rows.push(ClassificationRow {
            selection: tag,
            input_entries: stacked_entry_count(&config.arch, sel)?,
            accuracy: acc,
        });
    }
    let report = ClassificationReport {
        scheme: config.scheme,
        rows,
    };
    report.validate()?;
    write_string(&dir.join("classification_report.csv"), &report.to_csv())?;
    write_string(&dir.join("classification_report.md"), &report.to_markdown())?;
    Ok(report)
}

/// Reconstructs the test-split INRs over the yearly grid, compares against
/// matched ground-truth phantoms, and writes the grouped quality report
/// under `out/evaluate`.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<ReconstructionReport> {
    config.validate()?;
    let manifest = load_manifest(config)?;
    let dir = config.evaluate_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let params: Vec<InrParams> = manifest
        .test
        .iter()
        .map(|r| load_record_inr(config, r))
        .collect::<Result<_>>()?;
    let fitted: Vec<(&LongitudinalRecord, &InrParams)> =
        manifest.test.iter().zip(params.iter()).collect();
    let report = with_pool(config.workers, || {
        reconstruction_report(&config.cohort_config(), &fitted)
    })??;
    write_string(&dir.join("reconstruction_report.csv"), &report.to_csv())?;
    write_string(&dir.join("reconstruction_report.md"), &report.to_markdown())?;
    println!("{}", report.to_markdown());
    Ok(report)
}

/// Process exit code for an error: 2 config, 3 I/O or malformed data,
/// 4 missing cohort, 5 missing INRs, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Format { .. } | Error::Json(_) => 3,
        Error::MissingCohort(_) => 4,
        Error::MissingInr(_) => 5,
        _ => 1,
    }
}
