use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{normal_with, Prng};

use super::volume::{GridSpec, Volume};

/// Subject-specific anatomy shared by counterfactual trajectory pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    pub subject_seed: u64,
    /// Head ellipsoid semi-axes in normalized [-1,1] units.
    pub head_semi_axes: [f64; 3],
    /// Ventricle semi-axes at biological age 50.
    pub ventricle_base_semi_axes: [f64; 3],
    pub texture_phase: [f64; 3],
    pub texture_freq: f64,
}

/// Ventricle centers, mirrored about the midline.
const VENTRICLE_CENTERS: [[f64; 3]; 2] = [[-0.22, 0.05, 0.0], [0.22, 0.05, 0.0]];

/// Rendering parameters for BA-dependent aging effects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    /// Cortical shell thickness in voxels at biological age 50.
    pub tau0: f64,
    /// Shell thinning, voxels per year of biological age.
    pub k_tau: f64,
    pub tau_min: f64,
    /// Ventricle growth per year of biological age.
    pub k_v: f64,
    /// Additive Gaussian observation noise.
    pub sigma_img: f64,
    pub tissue_intensity: f64,
    pub shell_intensity: f64,
    pub ventricle_intensity: f64,
    pub texture_amplitude: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            tau0: 4.0,
            k_tau: 0.06,
            tau_min: 1.0,
            k_v: 0.008,
            sigma_img: 0.02,
            tissue_intensity: 0.2,
            shell_intensity: 0.7,
            ventricle_intensity: -0.6,
            texture_amplitude: 0.15,
        }
    }
}

impl Morphology {
    /// Both ventricles must stay strictly inside the head ellipsoid up to `max_ba`.
    pub fn fits_until(&self, max_ba: f64, k_v: f64) -> bool {
        let scale = 1.0 + k_v * (max_ba - 50.0);
        VENTRICLE_CENTERS.iter().all(|center| {
            let mut reach = 0.0f64;
            for a in 0..3 {
                let extent = (center[a].abs() + scale * self.ventricle_base_semi_axes[a])
                    / self.head_semi_axes[a];
                reach = reach.max(extent);
            }
            reach < 0.9
        })
    }
}

/// Samples a morphology, rejecting any whose ventricles would ever touch the head.
pub fn sample_morphology(subject_seed: u64, params: &PhantomParams) -> Morphology {
    let mut rng = Prng::seed_from_u64(subject_seed);
    loop {
        let m = Morphology {
            subject_seed,
            head_semi_axes: [
                rng.gen_range(0.78..0.92),
                rng.gen_range(0.78..0.92),
                rng.gen_range(0.78..0.92),
            ],
            ventricle_base_semi_axes: [
                rng.gen_range(0.09..0.15),
                rng.gen_range(0.12..0.20),
                rng.gen_range(0.09..0.15),
            ],
            texture_phase: [
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ],
            texture_freq: rng.gen_range(9.0..14.0),
        };
        if m.fits_until(100.0, params.k_v) {
            return m;
        }
    }
}

/// Renders one deterministic volume of the subject at biological age `ba`.
///
/// Background -1; textured tissue inside the head ellipsoid; cortical shell at
/// the head boundary with thickness shrinking in `ba`; two ventricles growing
/// in `ba`; optional seeded Gaussian observation noise; all clamped to [-1,1].
pub fn generate_phantom(
    m: &Morphology,
    ba: f64,
    grid: &GridSpec,
    params: &PhantomParams,
    noise_seed: Option<u64>,
) -> Result<Volume> {
    if !(45.0..=100.0).contains(&ba) {
        return Err(Error::Input(format!(
            "biological age {ba} outside supported range [45, 100]"
        )));
    }
    if !m.fits_until(ba, params.k_v) {
        return Err(Error::Input(format!(
            "morphology error: ventricles exceed head ellipsoid at BA {ba}"
        )));
    }
    let tau_vox = (params.tau0 - params.k_tau * (ba - 50.0)).max(params.tau_min);
    // normalized thickness measured in units of the largest-axis voxel pitch
    let voxel_norm = 2.0 / grid.dims[0].max(1) as f64;
    let tau_norm = tau_vox * voxel_norm;
    let vent_scale = 1.0 + params.k_v * (ba - 50.0);

    let [nx, ny, nz] = grid.dims;
    let mut intensities = vec![0f32; grid.voxel_count()];
    let mut rng = noise_seed.map(Prng::seed_from_u64);
    let mut idx = 0;
    for z in 0..nz {
        let pz = grid.coord(2, z);
        for y in 0..ny {
            let py = grid.coord(1, y);
            for x in 0..nx {
                let px = grid.coord(0, x);
                let rho_head = ((px / m.head_semi_axes[0]).powi(2)
                    + (py / m.head_semi_axes[1]).powi(2)
                    + (pz / m.head_semi_axes[2]).powi(2))
                .sqrt();
                let mut v = if rho_head > 1.0 {
                    -1.0
                } else if rho_head > 1.0 - tau_norm {
                    params.shell_intensity
                } else {
                    let mut t = params.tissue_intensity
                        + params.texture_amplitude
                            * (m.texture_freq * px + m.texture_phase[0]).sin()
                            * (m.texture_freq * py + m.texture_phase[1]).sin()
                            * (m.texture_freq * pz + m.texture_phase[2]).sin();
                    for center in &VENTRICLE_CENTERS {
                        let rho_v = (((px - center[0]) / (vent_scale * m.ventricle_base_semi_axes[0]))
                            .powi(2)
                            + ((py - center[1]) / (vent_scale * m.ventricle_base_semi_axes[1]))
                                .powi(2)
                            + ((pz - center[2]) / (vent_scale * m.ventricle_base_semi_axes[2]))
                                .powi(2))
                        .sqrt();
                        if rho_v <= 1.0 {
                            t = params.ventricle_intensity;
                            break;
                        }
                    }
                    t
                };
                if let Some(rng) = rng.as_mut() {
                    if params.sigma_img > 0.0 {
                        v += normal_with(rng, 0.0, params.sigma_img);
                    }
                }
                intensities[idx] = v.clamp(-1.0, 1.0) as f32;
                idx += 1;
            }
        }
    }
    Volume::new(*grid, ba, intensities)
}
