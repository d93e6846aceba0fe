use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{AdamState, Tape};
use crate::error::{Error, Result};
use crate::phantom::{read_volume, LongitudinalRecord, Volume};
use crate::rng::Prng;

use super::forward::{dedup_times, forward_tape_gathered, insert_params, normalize_age};
use super::{InrArchitecture, InrParams};

/// INR fitting schedule. Defaults follow the paper-scale protocol: 250
/// pretraining iterations at 0.1% of voxels over batches of three subjects,
/// then 100 finetuning iterations per subject at 1% of voxels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub pretrain_iters: usize,
    pub pretrain_voxel_frac: f64,
    pub batch_subjects: usize,
    pub finetune_iters: usize,
    pub finetune_voxel_frac: f64,
    pub learning_rate: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            pretrain_iters: 250,
            pretrain_voxel_frac: 0.001,
            batch_subjects: 3,
            finetune_iters: 100,
            finetune_voxel_frac: 0.01,
            learning_rate: 5e-4,
        }
    }
}

struct LoadedRecord {
    times_norm: Vec<f64>,
    volumes: Vec<Volume>,
}

fn load_record(record: &LongitudinalRecord) -> Result<LoadedRecord> {
    let mut times_norm = Vec::with_capacity(record.scans.len());
    let mut volumes = Vec::with_capacity(record.scans.len());
    for scan in &record.scans {
        times_norm.push(normalize_age(scan.chron_age));
        volumes.push(read_volume(&scan.path)?);
    }
    Ok(LoadedRecord {
        times_norm,
        volumes,
    })
}

fn voxel_coord(v: &Volume, idx: usize) -> [f64; 3] {
    let [nx, ny, _] = v.grid.dims;
    let x = idx % nx;
    let y = (idx / nx) % ny;
    let z = idx / (nx * ny);
    [v.grid.coord(0, x), v.grid.coord(1, y), v.grid.coord(2, z)]
}

/// One minibatch of sampled training points.
#[derive(Default)]
struct PointBatch {
    coords: Vec<f64>,
    times: Vec<f64>,
    targets: Vec<f64>,
}

impl PointBatch {
    fn sample_scan(&mut self, v: &Volume, t_norm: f64, frac: f64, rng: &mut Prng) {
        let n = v.intensities.len();
        let j = ((n as f64 * frac).ceil() as usize).clamp(1, n);
        for idx in rand::seq::index::sample(rng, n, j) {
            let c = voxel_coord(v, idx);
            self.coords.extend_from_slice(&c);
            self.times.push(t_norm);
            self.targets.push(v.intensities[idx] as f64);
        }
    }

    fn len(&self) -> usize {
        self.times.len()
    }
}

/// One taped forward + backward + Adam update. Returns the batch loss.
fn fit_step(
    params: &mut InrParams,
    arch: &InrArchitecture,
    flat: &mut Vec<f64>,
    adam: &mut AdamState,
    batch: &PointBatch,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = insert_params(&mut tape, params)?;
    let n = batch.len();
    let c = tape.input(vec![n, 3], batch.coords.clone())?;
    let (t_uniq, t_idx) = dedup_times(&batch.times);
    let t = tape.input(vec![t_uniq.len(), 1], t_uniq)?;
    let out = forward_tape_gathered(&mut tape, arch, &vars, c, t, Some(&t_idx))?;
    let target = tape.input(vec![n, 1], batch.targets.clone())?;
    let loss = tape.mse_loss(out, target)?;
    tape.backward(loss)?;
    let mut grads = Vec::with_capacity(flat.len());
    for v in vars.all() {
        grads.extend_from_slice(tape.grad(v));
    }
    adam.step(flat, &grads)?;
    params.load_flat(flat)?;
    Ok(tape.scalar(loss))
}

/// Shared data-driven initialization theta*: per iteration, draws
/// `batch_subjects` train records, one scan each, samples `pretrain_voxel_frac`
/// of its voxels without replacement, and takes one Adam step on the MSE.
pub fn pretrain_init(
    records: &[LongitudinalRecord],
    arch: &InrArchitecture,
    config: &FitConfig,
    seed: u64,
) -> Result<(InrParams, Vec<f64>)> {
    if records.is_empty() {
        return Err(Error::Input("pretraining needs a non-empty train split".into()));
    }
    if records.len() < config.batch_subjects {
        return Err(Error::Input(format!(
            "pretraining needs at least {} train records, got {}",
            config.batch_subjects,
            records.len()
        )));
    }
    let loaded: Vec<LoadedRecord> = records.iter().map(load_record).collect::<Result<_>>()?;
    let mut rng = Prng::seed_from_u64(seed);
    let mut params = super::build_inr(arch, seed)?;
    let mut flat = params.flatten();
    let mut adam = AdamState::new(flat.len(), config.learning_rate);
    let mut history = Vec::with_capacity(config.pretrain_iters);
    for _ in 0..config.pretrain_iters {
        let mut batch = PointBatch::default();
        for ri in rand::seq::index::sample(&mut rng, loaded.len(), config.batch_subjects) {
            let rec = &loaded[ri];
            let si = rand::seq::index::sample(&mut rng, rec.volumes.len(), 1).index(0);
            batch.sample_scan(
                &rec.volumes[si],
                rec.times_norm[si],
                config.pretrain_voxel_frac,
                &mut rng,
            );
        }
        history.push(fit_step(&mut params, arch, &mut flat, &mut adam, &batch)?);
    }
    Ok((params, history))
}

/// Finetunes theta* into a subject-specific theta_m: every iteration samples
/// `finetune_voxel_frac` of the voxels of EVERY scan of the record.
pub fn finetune_subject(
    theta_star: &InrParams,
    record: &LongitudinalRecord,
    config: &FitConfig,
    seed: u64,
) -> Result<(InrParams, Vec<f64>)> {
    if record.scans.is_empty() {
        return Err(Error::Input(format!(
            "record {} has no scans to finetune on",
            record.record_id()
        )));
    }
    let loaded = load_record(record)?;
    let mut rng = Prng::seed_from_u64(seed);
    let mut params = theta_star.clone();
    let arch = params.arch.clone();
    let mut flat = params.flatten();
    let mut adam = AdamState::new(flat.len(), config.learning_rate);
    let mut history = Vec::with_capacity(config.finetune_iters);
    for _ in 0..config.finetune_iters {
        let mut batch = PointBatch::default();
        for (v, &t) in loaded.volumes.iter().zip(&loaded.times_norm) {
            batch.sample_scan(v, t, config.finetune_voxel_frac, &mut rng);
        }
        history.push(fit_step(&mut params, &arch, &mut flat, &mut adam, &batch)?);
    }
    Ok((params, history))
}

/// Full-volume training MSE of an INR against every scan of a record.
pub fn subject_mse(params: &InrParams, record: &LongitudinalRecord) -> Result<f64> {
    let loaded = load_record(record)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (v, &t) in loaded.volumes.iter().zip(&loaded.times_norm) {
        let recon = super::reconstruct_volume(params, v.age, &v.grid)?;
        debug_assert_eq!(normalize_age(v.age), t);
        for (a, b) in recon.intensities.iter().zip(&v.intensities) {
            let d = *a as f64 - *b as f64;
            total += d * d;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{build_cohort, CohortConfig, GridSpec, PhantomParams};
    use crate::trajectory::{Scheme, DEFAULT_T_END_OFFSET};

    fn small_cohort(dir: &std::path::Path) -> crate::phantom::CohortManifest {
        build_cohort(
            &CohortConfig {
                subjects: 6,
                scheme: Scheme::Regular,
                grid: GridSpec::cube(8),
                phantom: PhantomParams::default(),
                ode_noise_std: 0.0,
                t_end_offset: DEFAULT_T_END_OFFSET,
                seed: 77,
            },
            dir,
        )
        .unwrap()
    }

    fn quick_config() -> FitConfig {
        FitConfig {
            pretrain_iters: 20,
            pretrain_voxel_frac: 0.05,
            batch_subjects: 3,
            finetune_iters: 30,
            finetune_voxel_frac: 0.05,
            learning_rate: 1e-3,
        }
    }

    fn tiny_arch() -> InrArchitecture {
        InrArchitecture {
            hidden: 16,
            ..InrArchitecture::desk()
        }
    }

    #[test]
    fn pretrain_reduces_loss_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_cohort(dir.path());
        let cfg = quick_config();
        let (theta, hist) = pretrain_init(&m.train, &tiny_arch(), &cfg, 5).unwrap();
        assert_eq!(hist.len(), cfg.pretrain_iters);
        let head = hist[..10].iter().sum::<f64>() / 10.0;
        let tail = hist[hist.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "smoothed loss did not fall: {head} -> {tail}");

        let (theta2, _) = pretrain_init(&m.train, &tiny_arch(), &cfg, 5).unwrap();
        assert_eq!(theta, theta2);
    }

    #[test]
    fn pretrain_rejects_too_few_records() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_cohort(dir.path());
        let err = pretrain_init(&m.train[..2], &tiny_arch(), &quick_config(), 1);
        assert!(err.is_err());
        assert!(pretrain_init(&[], &tiny_arch(), &quick_config(), 1).is_err());
    }

    #[test]
    fn finetune_improves_on_theta_star_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_cohort(dir.path());
        let cfg = quick_config();
        let (theta_star, _) = pretrain_init(&m.train, &tiny_arch(), &cfg, 5).unwrap();
        let record = &m.train[0];
        let (theta_m, hist) = finetune_subject(&theta_star, record, &cfg, 9).unwrap();
        assert_eq!(hist.len(), cfg.finetune_iters);
        let before = subject_mse(&theta_star, record).unwrap();
        let after = subject_mse(&theta_m, record).unwrap();
        assert!(after < before, "finetuning did not improve: {before} -> {after}");

        let (theta_m2, _) = finetune_subject(&theta_star, record, &cfg, 9).unwrap();
        assert_eq!(theta_m, theta_m2);
    }

    #[test]
    fn parameter_count_is_independent_of_scan_count() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_cohort(
            &CohortConfig {
                subjects: 6,
                scheme: Scheme::Irregular,
                grid: GridSpec::cube(8),
                phantom: PhantomParams::default(),
                ode_noise_std: 0.0,
                t_end_offset: DEFAULT_T_END_OFFSET,
                seed: 3,
            },
            dir.path(),
        )
        .unwrap();
        let cfg = quick_config();
        let (theta_star, _) = pretrain_init(&m.train, &tiny_arch(), &cfg, 5).unwrap();
        let counts: Vec<usize> = m
            .all_records()
            .map(|r| {
                finetune_subject(&theta_star, r, &cfg, 1)
                    .unwrap()
                    .0
                    .param_count()
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[0] == w[1]));
    }
}
