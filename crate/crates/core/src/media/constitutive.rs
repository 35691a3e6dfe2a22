//! Tensile response of the entangled staple medium.
//!
//! Pulling a clump out of the bulk costs force; the bulk resists more when
//! it has been compressed. The mean response is
//!
//! ```text
//! F(e, c) = (a0 + a1 c) e + (b0 + b1 c) e^p
//! ```
//!
//! with strain `e`, compression history `c`, a linear term for elastic
//! loading of engaged staples and a stiffening power term for the extra
//! interlocks recruited as the clump stretches. Individual pulls stick and
//! slip: yield events arrive as a Poisson process in strain, each knocking
//! the force down by a fraction that heals over a recovery strain scale.
//! The sampled response is compensated so its expectation equals the mean
//! law exactly, not just asymptotically.

use crate::error::{Result, SimError};
use crate::real::Real;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

/// Largest strain any operation accepts.
pub const STRAIN_LIMIT: f64 = 0.5;
/// Largest compression history any operation accepts.
pub const COMPRESSION_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstitutiveParams<T> {
    /// Linear stiffness at zero compression (N per unit strain), `a0`.
    pub linear: T,
    /// Extra linear stiffness per unit compression history, `a1`.
    pub linear_compression: T,
    /// Stiffening coefficient at zero compression, `b0`.
    pub stiffening: T,
    /// Extra stiffening per unit compression history, `b1`.
    pub stiffening_compression: T,
    /// Stiffening exponent `p`, dimensionless, > 1.
    pub exponent: T,
    /// Yield events per unit strain.
    pub yield_rate: T,
    /// Fractional force drop per yield event, in (0, 1).
    pub yield_drop: T,
    /// Strain scale over which a drop heals.
    pub yield_recovery: T,
}

impl<T: Real> ConstitutiveParams<T> {
    /// Coefficients produced by [`crate::rig::fit_constitutive`] against the
    /// built-in calibration targets, frozen here so the simulator works
    /// without re-running the fit. `tests` cross-checks the freeze.
    pub fn default_calibrated() -> Self {
        ConstitutiveParams {
            linear: T::of(53.875),
            linear_compression: T::of(140.06410256410257),
            stiffening: T::of(12.499999999999996),
            stiffening_compression: T::of(993.5897435897436),
            exponent: T::of(3.0),
            yield_rate: T::of(25.0),
            yield_drop: T::of(0.15),
            yield_recovery: T::of(0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let chk = |name: &str, v: T, ok: bool| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::domain(format!("{name} = {v} out of range")))
            }
        };
        chk("exponent", self.exponent, self.exponent > T::one())?;
        chk("yield_rate", self.yield_rate, self.yield_rate >= T::zero())?;
        chk(
            "yield_drop",
            self.yield_drop,
            self.yield_drop > T::zero() && self.yield_drop < T::one(),
        )?;
        chk(
            "yield_recovery",
            self.yield_recovery,
            self.yield_recovery > T::zero(),
        )?;
        for k in 0..=20 {
            for j in 0..=20 {
                let e = T::of(0.34 * k as f64 / 20.0);
                let c = T::of(0.30 * j as f64 / 20.0);
                if mean_tensile_force(e, c, self)? < T::zero() {
                    return Err(SimError::domain(format!(
                        "negative predicted force at strain {e}, compression {c}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_domain<T: Real>(strain: T, compression: T) -> Result<()> {
    if !strain.is_finite() || strain < T::zero() || strain > T::of(STRAIN_LIMIT) {
        return Err(SimError::domain(format!(
            "strain {strain} outside [0, {STRAIN_LIMIT}]"
        )));
    }
    if !compression.is_finite() || compression < T::zero() || compression > T::of(COMPRESSION_LIMIT)
    {
        return Err(SimError::domain(format!(
            "compression {compression} outside [0, {COMPRESSION_LIMIT}]"
        )));
    }
    Ok(())
}

/// Mean pull-out force in newtons at the given strain and compression history.
pub fn mean_tensile_force<T: Real>(
    strain: T,
    compression: T,
    params: &ConstitutiveParams<T>,
) -> Result<T> {
    check_domain(strain, compression)?;
    let lin = params.linear + params.linear_compression * compression;
    let stiff = params.stiffening + params.stiffening_compression * compression;
    Ok(lin * strain + stiff * strain.powf(params.exponent))
}

/// One stochastic realization of the pull-out force.
///
/// Yield event positions are drawn on `[0, strain]` with rate `yield_rate`;
/// each event at `s` multiplies the force by `1 - yield_drop *
/// exp(-(strain - s) / yield_recovery)`. The closed-form compensation factor
/// restores the mean, so averaging samples over seeds converges on
/// [`mean_tensile_force`] with no bias at any strain.
pub fn sample_tensile_force<T: Real, R: Rng + ?Sized>(
    strain: T,
    compression: T,
    params: &ConstitutiveParams<T>,
    rng: &mut R,
) -> Result<T> {
    let mean = mean_tensile_force(strain, compression, params)?;
    let walk = YieldWalk::draw(strain, params, rng)?;
    Ok(mean * walk.modulation_at(strain, params))
}

/// Yield event positions for one realization, shared by every strain sample
/// of a single rig pull so the trace is internally consistent.
#[derive(Debug, Clone)]
pub struct YieldWalk<T> {
    events: Vec<T>,
}

impl<T: Real> YieldWalk<T> {
    pub fn draw<R: Rng + ?Sized>(
        max_strain: T,
        params: &ConstitutiveParams<T>,
        rng: &mut R,
    ) -> Result<Self> {
        check_domain(max_strain, T::zero())?;
        let mut events = Vec::new();
        if params.yield_rate > T::zero() {
            let gap = Exp::new(params.yield_rate.as_f64())
                .map_err(|e| SimError::domain(format!("yield_rate: {e}")))?;
            let mut s = T::zero();
            loop {
                s += T::of(gap.sample(rng));
                if s >= max_strain {
                    break;
                }
                events.push(s);
            }
        }
        Ok(YieldWalk { events })
    }

    pub fn events(&self) -> &[T] {
        &self.events
    }

    /// Multiplicative stick-slip factor at `strain`, including the
    /// mean-preserving compensation.
    pub fn modulation_at(&self, strain: T, params: &ConstitutiveParams<T>) -> T {
        let rec = params.yield_recovery;
        let mut m = T::one();
        for &s in &self.events {
            if s < strain {
                m *= T::one() - params.yield_drop * (-(strain - s) / rec).exp();
            }
        }
        let bias = params.yield_rate
            * params.yield_drop
            * rec
            * (T::one() - (-strain / rec).exp());
        m * bias.exp()
    }
}
