//! Scalar abstraction for the math kernel.
//!
//! The constitutive law, the rig, the fitter and the statistics routines are
//! generic over [`Real`] so they can run in `f32` or `f64`. The simulation
//! stack (field, world, agent, harness) is concrete `f64`; see the type
//! aliases at the crate root.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; panics only for values a float type
    /// cannot represent at all, which no code path here produces.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("value representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
