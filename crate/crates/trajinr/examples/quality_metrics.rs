//! Demonstrates the reconstruction-quality metrics (MSE, PSNR, SSIM), the
//! compression ratio of an INR against raw voxel storage, and how evaluation
//! ages are split into training / interpolation / extrapolation groups.
//!
//!     cargo run --release --example quality_metrics

use trajinr::inr::InrArchitecture;
use trajinr::metrics::{
    classify_age, compression_ratio, mse, psnr, ssim3d_default, AgeGroup, INTENSITY_RANGE,
};
use trajinr::phantom::{generate_phantom, sample_morphology, GridSpec, PhantomParams};

fn main() -> trajinr::Result<()> {
    let params = PhantomParams::default();
    let morph = sample_morphology(3, &params);
    let grid = GridSpec::cube(24);

    // reference volume vs the same anatomy with a different noise draw
    let clean = generate_phantom(&morph, 70.0, &grid, &params, None)?;
    let noisy = generate_phantom(&morph, 70.0, &grid, &params, Some(9))?;
    let drifted = generate_phantom(&morph, 74.0, &grid, &params, Some(9))?;

    for (name, v) in [("noise only", &noisy), ("noise + 4y age drift", &drifted)] {
        let e = mse(&clean, v)?;
        let p = psnr(e, INTENSITY_RANGE)?;
        let s = ssim3d_default(&clean, v)?;
        println!("{name:22}  mse {e:.5}  psnr {p:6.2} dB  ssim {s:.4}");
    }
    let self_mse = mse(&clean, &clean)?;
    println!(
        "identical volumes       mse {self_mse:.5}  psnr {:?} dB",
        psnr(self_mse, INTENSITY_RANGE)?
    );

    // one INR replaces all scans of a subject regardless of how many there are
    let arch = InrArchitecture::paper();
    let scans = 4;
    let voxels = 147 * 183 * 169 * scans;
    println!(
        "\npaper-scale INR: {} params vs {voxels} voxels ({scans} scans) -> ratio {:.3}",
        arch.total_param_count(),
        compression_ratio(arch.total_param_count(), voxels)
    );

    // age grouping relative to a subject's acquisition ages
    let train_ages = [50.0, 58.0, 67.0, 75.0];
    for age in [50.0, 62.0, 75.0, 83.0] {
        let g = classify_age(&train_ages, age);
        println!("age {age:>4}: {g:?}");
    }
    assert_eq!(classify_age(&train_ages, 62.0), AgeGroup::Interpolation);
    assert_eq!(classify_age(&train_ages, 83.0), AgeGroup::Extrapolation);
    Ok(())
}
