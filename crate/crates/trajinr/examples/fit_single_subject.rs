//! Fits one subject's longitudinal scan series end to end: builds a small
//! synthetic cohort, pretrains a shared initialization over the train split,
//! finetunes it into a subject-specific INR, and reports reconstruction
//! quality on that subject's own scans.
//!
//!     cargo run --release --example fit_single_subject

use trajinr::inr::{
    finetune_subject, pretrain_init, reconstruct_volume, subject_mse, FitConfig, InrArchitecture,
};
use trajinr::metrics::{mse, psnr, ssim3d_default, INTENSITY_RANGE};
use trajinr::phantom::{build_cohort, read_volume, CohortConfig, GridSpec, PhantomParams};
use trajinr::trajectory::{Scheme, DEFAULT_T_END_OFFSET};

fn main() -> trajinr::Result<()> {
    let dir = tempfile::tempdir().expect("failed to create a temp dir");
    let cohort = CohortConfig {
        subjects: 6,
        scheme: Scheme::Regular,
        grid: GridSpec::cube(16),
        phantom: PhantomParams::default(),
        ode_noise_std: 0.0,
        t_end_offset: DEFAULT_T_END_OFFSET,
        seed: 2024,
    };
    let manifest = build_cohort(&cohort, dir.path())?;
    println!(
        "cohort: {} train / {} test records on a {:?} grid",
        manifest.train.len(),
        manifest.test.len(),
        cohort.grid.dims
    );

    let arch = InrArchitecture {
        hidden: 24,
        ..InrArchitecture::desk()
    };
    let fit = FitConfig {
        pretrain_iters: 60,
        pretrain_voxel_frac: 0.05,
        batch_subjects: 3,
        finetune_iters: 150,
        finetune_voxel_frac: 0.05,
        learning_rate: 1e-3,
    };

    let (theta_star, pre_hist) = pretrain_init(&manifest.train, &arch, &fit, 1)?;
    println!(
        "pretraining: loss {:.4} -> {:.4} over {} iters ({} params)",
        pre_hist[0],
        pre_hist.last().unwrap(),
        pre_hist.len(),
        theta_star.param_count()
    );

    let record = &manifest.train[0];
    let before = subject_mse(&theta_star, record)?;
    let (theta_m, _) = finetune_subject(&theta_star, record, &fit, 1)?;
    let after = subject_mse(&theta_m, record)?;
    println!(
        "subject {}: full-volume train MSE {before:.4} (theta*) -> {after:.4} (theta_m)",
        record.record_id()
    );

    println!("\n{:>8} {:>10} {:>10} {:>8}", "age", "mse", "psnr dB", "ssim");
    for scan in &record.scans {
        let truth = read_volume(&scan.path)?;
        let recon = reconstruct_volume(&theta_m, scan.chron_age, &truth.grid)?;
        let e = mse(&truth, &recon)?;
        println!(
            "{:>8.1} {:>10.5} {:>10.2} {:>8.4}",
            scan.chron_age,
            e,
            psnr(e, INTENSITY_RANGE)?,
            ssim3d_default(&truth, &recon)?
        );
    }
    assert!(after < before, "finetuning should improve the subject fit");
    Ok(())
}
