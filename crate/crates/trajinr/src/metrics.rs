//! Image-quality and classification metrics, plus the yearly-grid
//! reconstruction report and the stream-wise classification report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inr::{reconstruct_volume, InrParams};
use crate::phantom::{
    generate_phantom, record_curve, scan_noise_seed, yearly_ages, CohortConfig,
    LongitudinalRecord, Volume,
};
use crate::trajectory::{Label, Scheme};

/// Mean squared intensity difference between two volumes of equal dims.
pub fn mse(a: &Volume, b: &Volume) -> Result<f64> {
    if a.grid.dims != b.grid.dims {
        return Err(Error::dimension("mse volume dims", &a.grid.dims, &b.grid.dims));
    }
    let n = a.intensities.len();
    let sum: f64 = a
        .intensities
        .iter()
        .zip(&b.intensities)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// Peak signal-to-noise ratio in dB for a signal of the given dynamic range.
/// A zero MSE is reported as positive infinity.
pub fn psnr(mse: f64, range: f64) -> Result<f64> {
    if mse < 0.0 || !mse.is_finite() {
        return Err(Error::Input(format!(
            "psnr requires a finite non-negative mse, got {mse}"
        )));
    }
    if range <= 0.0 {
        return Err(Error::Input(format!(
            "psnr requires a positive range, got {range}"
        )));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / mse).log10())
}

/// Dynamic range of intensities clamped to [-1, 1].
pub const INTENSITY_RANGE: f64 = 2.0;

/// Structural similarity over a uniform cubic window, averaged over all
/// positions where the window fits entirely inside the volume. Moments are
/// biased (plain means over the window).
pub fn ssim3d(a: &Volume, b: &Volume, window: usize, k1: f64, k2: f64, range: f64) -> Result<f64> {
    if a.grid.dims != b.grid.dims {
        return Err(Error::dimension("ssim3d volume dims", &a.grid.dims, &b.grid.dims));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::Input(format!(
            "ssim3d window must be a positive odd size, got {window}"
        )));
    }
    let [nx, ny, nz] = a.grid.dims;
    if nx < window || ny < window || nz < window {
        return Err(Error::Input(format!(
            "ssim3d window {window} exceeds volume dims {nx}x{ny}x{nz}"
        )));
    }
    let c1 = (k1 * range) * (k1 * range);
    let c2 = (k2 * range) * (k2 * range);
    let wn = (window * window * window) as f64;
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);

    let mut total = 0.0;
    let mut positions = 0usize;
    for z0 in 0..=(nz - window) {
        for y0 in 0..=(ny - window) {
            for x0 in 0..=(nx - window) {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for z in z0..z0 + window {
                    for y in y0..y0 + window {
                        for x in x0..x0 + window {
                            let va = a.intensities[idx(x, y, z)] as f64;
                            let vb = b.intensities[idx(x, y, z)] as f64;
                            sa += va;
                            sb += vb;
                            saa += va * va;
                            sbb += vb * vb;
                            sab += va * vb;
                        }
                    }
                }
                let mu_a = sa / wn;
                let mu_b = sb / wn;
                let var_a = saa / wn - mu_a * mu_a;
                let var_b = sbb / wn - mu_b * mu_b;
                let cov = sab / wn - mu_a * mu_b;
                total += (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                positions += 1;
            }
        }
    }
    Ok(total / positions as f64)
}

/// SSIM with the default settings: 7^3 uniform window, K1=0.01, K2=0.03,
/// dynamic range 2.
pub fn ssim3d_default(a: &Volume, b: &Volume) -> Result<f64> {
    ssim3d(a, b, 7, 0.01, 0.03, INTENSITY_RANGE)
}

/// Classification accuracy as a percentage.
pub fn accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Input("accuracy over an empty set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::dimension(
            "accuracy lengths",
            &[predictions.len()],
            &[labels.len()],
        ));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

/// INR parameter count divided by the raw voxel count it stands in for.
pub fn compression_ratio(param_count: usize, total_voxels: usize) -> f64 {
    param_count as f64 / total_voxels as f64
}

/// Which reconstruction group a (subject, age) cell belongs to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Training,
    Interpolation,
    Extrapolation,
}

impl AgeGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgeGroup::Training => "training",
            AgeGroup::Interpolation => "interpolation",
            AgeGroup::Extrapolation => "extrapolation",
        }
    }

    pub const ALL: [AgeGroup; 3] = [
        AgeGroup::Training,
        AgeGroup::Interpolation,
        AgeGroup::Extrapolation,
    ];
}

/// Classifies an evaluation age against a record's training (acquisition)
/// ages: an exact training age, strictly between the first and last training
/// age, or outside their span.
pub fn classify_age(training_ages: &[f64], age: f64) -> AgeGroup {
    const EPS: f64 = 1e-9;
    if training_ages.iter().any(|&t| (t - age).abs() <= EPS) {
        return AgeGroup::Training;
    }
    let lo = training_ages.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = training_ages
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if age > lo && age < hi {
        AgeGroup::Interpolation
    } else {
        AgeGroup::Extrapolation
    }
}

/// Aggregated quality metrics of one (group, label) cell population.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean_mse: f64,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Yearly-grid reconstruction quality grouped by age class and label.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// Rows indexed by [group][label] with group order training,
    /// interpolation, extrapolation and label order healthy, ad_like.
    pub groups: [[GroupStats; 2]; 3],
}

fn group_index(g: AgeGroup) -> usize {
    match g {
        AgeGroup::Training => 0,
        AgeGroup::Interpolation => 1,
        AgeGroup::Extrapolation => 2,
    }
}

fn label_index(l: Label) -> usize {
    match l {
        Label::Healthy => 0,
        Label::AdLike => 1,
    }
}

const LABELS: [Label; 2] = [Label::Healthy, Label::AdLike];

impl ReconstructionReport {
    pub fn stats(&self, group: AgeGroup, label: Label) -> &GroupStats {
        &self.groups[group_index(group)][label_index(label)]
    }

    /// Mean over both labels, weighted by cell counts.
    pub fn group_mean_mse(&self, group: AgeGroup) -> f64 {
        let row = &self.groups[group_index(group)];
        let n = row[0].count + row[1].count;
        if n == 0 {
            return f64::NAN;
        }
        (row[0].mean_mse * row[0].count as f64 + row[1].mean_mse * row[1].count as f64) / n as f64
    }

    pub fn total_cells(&self) -> usize {
        self.groups
            .iter()
            .flat_map(|row| row.iter())
            .map(|s| s.count)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,label,count,mean_mse,mean_psnr,mean_ssim\n");
        for g in AgeGroup::ALL {
            for l in LABELS {
                let s = self.stats(g, l);
                out.push_str(&format!(
                    "{},{},{},{:.6e},{:.4},{:.6}\n",
                    g.as_str(),
                    l.as_str(),
                    s.count,
                    s.mean_mse,
                    s.mean_psnr,
                    s.mean_ssim
                ));
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut rows = vec![[
            "Group".to_string(),
            "Label".to_string(),
            "Cells".to_string(),
            "MSE".to_string(),
            "PSNR (dB)".to_string(),
            "SSIM".to_string(),
        ]];
        for g in AgeGroup::ALL {
            for l in LABELS {
                let s = self.stats(g, l);
                rows.push([
                    g.as_str().to_string(),
                    l.as_str().to_string(),
                    s.count.to_string(),
                    format!("{:.3e}", s.mean_mse),
                    format!("{:.2}", s.mean_psnr),
                    format!("{:.4}", s.mean_ssim),
                ]);
            }
        }
        markdown_table(&rows)
    }
}

fn markdown_table<const C: usize>(rows: &[[String; C]]) -> String {
    let mut widths = [0usize; C];
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        out.push('|');
        for (cell, w) in row.iter().zip(&widths) {
            out.push_str(&format!(" {cell:<w$} |"));
        }
        out.push('\n');
        if i == 0 {
            out.push('|');
            for w in &widths {
                out.push_str(&format!("{}|", "-".repeat(w + 2)));
            }
            out.push('\n');
        }
    }
    out
}

/// Reconstructs every fitted record at every yearly age, compares against the
/// ground-truth phantom rendered at the record's biological age with matched
/// observation noise, and aggregates per (age group, label).
pub fn reconstruction_report(
    config: &CohortConfig,
    fitted: &[(&LongitudinalRecord, &InrParams)],
) -> Result<ReconstructionReport> {
    if fitted.is_empty() {
        return Err(Error::Input(
            "reconstruction report needs at least one fitted record".into(),
        ));
    }
    let ages = yearly_ages();
    let mut cells: Vec<(usize, f64)> = Vec::with_capacity(fitted.len() * ages.len());
    for (ri, _) in fitted.iter().enumerate() {
        for &a in &ages {
            cells.push((ri, a));
        }
    }
    // (sort key, group, label, mse, psnr, ssim) per cell; keyed by subject,
    // label, and age so aggregation order is independent of input order.
    let results: Vec<Result<((usize, usize, u64), AgeGroup, Label, f64, f64, f64)>> = cells
        .par_iter()
        .map(|&(ri, age)| {
            let (record, params) = fitted[ri];
            let curve = record_curve(record)?;
            let bio = curve
                .bio_at(age)
                .ok_or_else(|| Error::Input(format!("age {age} off the yearly grid")))?;
            let truth = generate_phantom(
                &record.morphology,
                bio,
                &config.grid,
                &config.phantom,
                Some(scan_noise_seed(config.seed, record.subject_index, age)),
            )?;
            let recon = reconstruct_volume(params, age, &config.grid)?;
            let m = mse(&truth, &recon)?;
            let p = psnr(m, INTENSITY_RANGE)?;
            let s = ssim3d_default(&truth, &recon)?;
            let key = (record.subject_index, label_index(record.label), age.to_bits());
            let group = classify_age(&record.scan_ages(), age);
            Ok((key, group, record.label, m, p, s))
        })
        .collect();
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|cell| cell.0);

    let mut sums = [[(0usize, 0.0f64, 0.0f64, 0.0f64); 2]; 3];
    for (_, g, l, m, p, s) in results {
        let cell = &mut sums[group_index(g)][label_index(l)];
        cell.0 += 1;
        cell.1 += m;
        cell.2 += p;
        cell.3 += s;
    }
    let mut groups: [[GroupStats; 2]; 3] = Default::default();
    for gi in 0..3 {
        for li in 0..2 {
            let (n, m, p, s) = sums[gi][li];
            groups[gi][li] = if n == 0 {
                GroupStats::default()
            } else {
                GroupStats {
                    count: n,
                    mean_mse: m / n as f64,
                    mean_psnr: p / n as f64,
                    mean_ssim: s / n as f64,
                }
            };
        }
    }
    Ok(ReconstructionReport { groups })
}

/// One row of the stream-wise classification table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationRow {
    /// Human-readable stream selection, e.g. "time" or "space+combined".
    pub selection: String,
    /// Entries of the stacked input matrix fed to the encoder.
    pub input_entries: usize,
    /// Test-set accuracy in percent.
    pub accuracy: f64,
}

/// Stream-selection accuracy table over one acquisition scheme.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub scheme: Scheme,
    pub rows: Vec<ClassificationRow>,
}

impl ClassificationReport {
    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            if !(0.0..=100.0).contains(&row.accuracy) {
                return Err(Error::Input(format!(
                    "accuracy {} for selection {} out of [0, 100]",
                    row.accuracy, row.selection
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,selection,input_entries,accuracy\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{:?},{},{},{:.2}\n",
                self.scheme, row.selection, row.input_entries, row.accuracy
            ));
        }
        out.to_lowercase()
    }

    pub fn to_markdown(&self) -> String {
        let mut rows = vec![[
            "Streams".to_string(),
            "Input entries".to_string(),
            "Accuracy (%)".to_string(),
        ]];
        for row in &self.rows {
            rows.push([
                row.selection.clone(),
                row.input_entries.to_string(),
                format!("{:.2}", row.accuracy),
            ]);
        }
        markdown_table(&rows)
    }
}
