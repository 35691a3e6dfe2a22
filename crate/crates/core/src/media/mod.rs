//! The entangled staple medium: constitutive law, spatial field, pellets.

mod constitutive;
mod field;
mod pellet;

pub use constitutive::{
    mean_tensile_force, sample_tensile_force, ConstitutiveParams, YieldWalk, COMPRESSION_LIMIT,
    STRAIN_LIMIT,
};
pub use field::{
    Engagement, MediaCell, MediaConfig, MediaField, PrepMode, StapleSpec, TearMode, TearOutcome,
};
pub use pellet::{recompact, Pellet};
