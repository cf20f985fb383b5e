//! The attractive inverse-square potential in momentum space.
//!
//! Units throughout the crate are natural units with the particle mass and
//! Planck's constant set to one, so energies are squared momenta.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{positive, Result};

/// Strength of the potential `c / r^2` with `c = -1/4 - nu^2`.
///
/// `c` is derived from `nu` on construction and cannot be set independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct PotentialParams {
    nu: f64,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    nu: f64,
}

impl TryFrom<RawParams> for PotentialParams {
    type Error = crate::Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        Self::new(raw.nu)
    }
}

impl From<PotentialParams> for RawParams {
    fn from(p: PotentialParams) -> Self {
        RawParams { nu: p.nu }
    }
}

impl PotentialParams {
    pub fn new(nu: f64) -> Result<Self> {
        let nu = positive("nu", nu)?;
        Ok(Self {
            nu,
            c: -0.25 - nu * nu,
        })
    }

    #[inline]
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Dimensionless coupling `c = -1/4 - nu^2`, always below `-1/4`.
    #[inline]
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Oscillation period `pi / nu` of threshold solutions in `ln q`.
    #[inline]
    pub fn log_period(&self) -> f64 {
        PI / self.nu
    }
}

/// `V(q) = 2 pi^2 c / q`.
pub fn potential_momentum(q: f64, params: &PotentialParams) -> Result<f64> {
    let q = positive("momentum transfer q", q)?;
    Ok(2.0 * PI * PI * params.c() / q)
}

/// S-wave projected kernel `f(p, q) = 1 / max(p, q)`.
pub fn swave_kernel_f(p: f64, q: f64) -> Result<f64> {
    let p = positive("momentum p", p)?;
    let q = positive("momentum q", q)?;
    Ok(kernel_f(p, q))
}

/// Unchecked `1 / max(p, q)` for the assembly loops.
#[inline]
pub(crate) fn kernel_f(p: f64, q: f64) -> f64 {
    1.0 / p.max(q)
}

/// Contact counterterm `2 pi^2 c h / cutoff` added to every kernel entry.
pub fn counterterm_value(cutoff: f64, h: f64, params: &PotentialParams) -> Result<f64> {
    let cutoff = positive("cutoff", cutoff)?;
    Ok(2.0 * PI * PI * params.c() * h / cutoff)
}
