//! Runs the whole pipeline programmatically on a miniature configuration:
//! simulate a cohort, fit per-subject INRs, classify trajectories from the
//! INR weights, and evaluate reconstruction quality by age group. The same
//! four stages are available from the command line via the `trajinr` binary.
//!
//!     cargo run --release --example pipeline_end_to_end

use trajinr::classifier::{ClassifierConfig, StreamSelection};
use trajinr::inr::{FitConfig, InrArchitecture};
use trajinr::phantom::GridSpec;
use trajinr::pipeline::{cmd_classify, cmd_evaluate, cmd_fit, cmd_simulate, PipelineConfig};

fn main() -> trajinr::Result<()> {
    let dir = tempfile::tempdir().expect("failed to create a temp dir");

    // a desk-preset config shrunk until every stage takes seconds
    let mut config = PipelineConfig::desk(7, dir.path());
    config.subjects = 6;
    config.grid = GridSpec::cube(8);
    config.arch = InrArchitecture {
        hidden: 16,
        ..InrArchitecture::desk()
    };
    config.fit = FitConfig {
        pretrain_iters: 30,
        pretrain_voxel_frac: 0.05,
        batch_subjects: 3,
        finetune_iters: 40,
        finetune_voxel_frac: 0.05,
        learning_rate: 1e-3,
    };
    config.classifier = ClassifierConfig {
        block_widths: [8, 16, 32],
        head_hidden: 8,
        epochs: 10,
        batch_size: 4,
        ..ClassifierConfig::desk()
    };
    config.selections = vec![StreamSelection::new(false, true, false)?];
    config.validate()?;

    let manifest = cmd_simulate(&config)?;
    println!(
        "simulate: {} train / {} test records -> {}",
        manifest.train.len(),
        manifest.test.len(),
        config.cohort_dir().display()
    );

    cmd_fit(&config)?;
    let n_inrs = std::fs::read_dir(config.fit_dir())
        .expect("fit dir exists")
        .filter(|e| {
            e.as_ref()
                .is_ok_and(|e| e.path().extension().is_some_and(|x| x == "inr"))
        })
        .count();
    println!("fit: wrote {n_inrs} INR files (shared init + one per record)");

    let report = cmd_classify(&config)?;
    for row in &report.rows {
        println!(
            "classify[{}]: {} stacked entries, test accuracy {:.1}%",
            row.selection,
            row.input_entries,
            row.accuracy
        );
    }

    let recon = cmd_evaluate(&config)?;
    println!("\nevaluate:\n{}", recon.to_markdown());
    Ok(())
}
