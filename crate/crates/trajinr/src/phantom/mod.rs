//! Procedural longitudinal phantom generator, cohort assembly with
//! counterfactual test pairs, and volume persistence.

mod cohort;
mod generate;
mod volume;

pub use cohort::{
    build_cohort, record_curve, scan_noise_seed, yearly_ages, CohortConfig, CohortManifest,
    LongitudinalRecord,
    ScanRef, YEARLY_AGES,
};
pub use generate::{generate_phantom, sample_morphology, Morphology, PhantomParams};
pub use volume::{read_volume, write_volume, GridSpec, Volume, VOLUME_MAGIC};
