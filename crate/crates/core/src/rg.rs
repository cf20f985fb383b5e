//! Analytic running of the counterterm coupling `H(Λ)` and its β-function.
//!
//! `H` is periodic in `ν ln(Λ/Λ*)` with period `π`, i.e. it returns to itself
//! whenever the cutoff grows by `λ₀ = exp(π/ν)`. It has one pole and one zero
//! per period; there is no real fixed point.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{KernelAssembler, KernelRule, MeshSpec};
use crate::error::{positive, Error, Result};
use crate::potential::PotentialParams;

/// Full width, in `ν ln(Λ/Λ*)`, of the window around each pole that sweeps skip.
pub const POLE_WINDOW: f64 = 1e-6;

/// Value of the running coupling at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Coupling {
    Finite(f64),
    /// Within [`POLE_WINDOW`] of a pole of `H`.
    Pole,
}

impl Coupling {
    pub fn finite(self) -> Option<f64> {
        match self {
            Coupling::Finite(h) => Some(h),
            Coupling::Pole => None,
        }
    }

    pub fn is_pole(self) -> bool {
        matches!(self, Coupling::Pole)
    }
}

/// The limit-cycle schedule fixed by the scale `Λ*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountertermSchedule {
    lambda_star: f64,
    params: PotentialParams,
}

impl CountertermSchedule {
    pub fn new(lambda_star: f64, params: PotentialParams) -> Result<Self> {
        let lambda_star = positive("lambda_star", lambda_star)?;
        Ok(Self {
            lambda_star,
            params,
        })
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    pub fn params(&self) -> &PotentialParams {
        &self.params
    }

    /// `ν ln(Λ/Λ*)`, the phase the coupling depends on.
    pub fn phase(&self, cutoff: f64) -> f64 {
        self.params.nu() * (cutoff / self.lambda_star).ln()
    }

    /// Threshold phase `α = −ν ln Λ*` reduced to `[0, π)`.
    pub fn alpha(&self) -> f64 {
        (-self.params.nu() * self.lambda_star.ln()).rem_euclid(PI)
    }

    /// Phase of the pole within each period, in `(−π/2, 0)`.
    pub fn pole_phase(&self) -> f64 {
        -(0.5 / self.params.nu()).atan()
    }

    /// Phase of the zero within each period, in `(0, π/2)`.
    pub fn zero_phase(&self) -> f64 {
        (0.5 / self.params.nu()).atan()
    }

    /// Distance in phase from `cutoff` to the nearest pole.
    pub fn pole_distance(&self, cutoff: f64) -> f64 {
        let d = (self.phase(cutoff) - self.pole_phase()).rem_euclid(PI);
        d.min(PI - d)
    }

    pub fn coupling(&self, cutoff: f64) -> Result<Coupling> {
        coupling_h(cutoff, self)
    }
}

/// Closed-form running coupling
/// `H(Λ) = (1 − 2ν tan θ) / (1 + 2ν tan θ)` with `θ = ν ln(Λ/Λ*)`.
pub fn coupling_h(cutoff: f64, schedule: &CountertermSchedule) -> Result<Coupling> {
    let cutoff = positive("cutoff", cutoff)?;
    if schedule.pole_distance(cutoff) < 0.5 * POLE_WINDOW {
        return Ok(Coupling::Pole);
    }
    Ok(Coupling::Finite(h_of_phase(
        schedule.phase(cutoff),
        schedule.params.nu(),
    )))
}

/// Evaluated through sin/cos so that `tan θ = ±∞` needs no special case.
#[inline]
pub(crate) fn h_of_phase(theta: f64, nu: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    (c - 2.0 * nu * s) / (c + 2.0 * nu * s)
}

/// Inverse of the schedule: the phase in `[0, π)` at which the coupling equals `h`.
pub fn phase_of_h(h: f64, params: &PotentialParams) -> f64 {
    // tan θ = (1 − H) / (2ν (1 + H))
    (1.0 - h)
        .atan2(2.0 * params.nu() * (1.0 + h))
        .rem_euclid(PI)
}

/// `β(H) = −(1/4)(1 − H)² − ν²(1 + H)²`.
pub fn beta_function(h: f64, params: &PotentialParams) -> f64 {
    let nu2 = params.nu() * params.nu();
    -0.25 * (1.0 - h).powi(2) - nu2 * (1.0 + h).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFunctionPoint {
    pub h: f64,
    pub beta: f64,
}

impl BetaFunctionPoint {
    pub fn at(h: f64, params: &PotentialParams) -> Self {
        Self {
            h,
            beta: beta_function(h, params),
        }
    }
}

/// Location and value of the maximum of `β`.
pub fn beta_extremum(params: &PotentialParams) -> BetaFunctionPoint {
    let nu2 = params.nu() * params.nu();
    BetaFunctionPoint {
        h: -(nu2 - 0.25) / (nu2 + 0.25),
        beta: -nu2 / (nu2 + 0.25),
    }
}

/// The two complex roots `H± = −(2ν ± i)/(2ν ∓ i)` of `β`.
pub fn beta_roots(params: &PotentialParams) -> (Complex64, Complex64) {
    let two_nu = 2.0 * params.nu();
    let i = Complex64::i();
    (-(two_nu + i) / (two_nu - i), -(two_nu - i) / (two_nu + i))
}

/// Discriminant of `β(H) = 0` viewed as a quadratic in `H`; equals `−4ν²`.
pub fn beta_discriminant(params: &PotentialParams) -> f64 {
    let nu2 = params.nu() * params.nu();
    let a = -(0.25 + nu2);
    let b = 0.5 - 2.0 * nu2;
    let c = -(0.25 + nu2);
    b * b - 4.0 * a * c
}

/// Preferred scaling factor `λ₀ = exp(π/ν)`.
pub fn preferred_scaling_factor(params: &PotentialParams) -> f64 {
    (PI / params.nu()).exp()
}

/// Cutoffs in periods `n_lo..=n_hi` at which `H` vanishes.
///
/// Period `n` covers phases `[nπ, nπ + π/2]`, where the numerator
/// `cos θ − 2ν sin θ` changes sign exactly once; the root is bracketed and
/// bisected there rather than taken from a formula.
pub fn vanishing_cutoffs(schedule: &CountertermSchedule, n_lo: i32, n_hi: i32) -> Vec<f64> {
    let nu = schedule.params.nu();
    let numerator = |theta: f64| {
        let (s, c) = theta.sin_cos();
        c - 2.0 * nu * s
    };
    (n_lo..=n_hi)
        .map(|n| {
            let base = n as f64 * PI;
            let (mut lo, mut hi) = (0.0, FRAC_PI_2);
            let sign_lo = numerator(base + lo).signum();
            while hi - lo > 1e-16 * (1.0 + base.abs()) {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                if numerator(base + mid).signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            schedule.lambda_star * ((base + 0.5 * (lo + hi)) / nu).exp()
        })
        .collect()
}

/// `Λ* exp(nπ/ν)`: the period anchors, where `H = 1`.
pub fn period_anchor_cutoffs(schedule: &CountertermSchedule, n_lo: i32, n_hi: i32) -> Vec<f64> {
    let nu = schedule.params.nu();
    (n_lo..=n_hi)
        .map(|n| schedule.lambda_star * (n as f64 * PI / nu).exp())
        .collect()
}

/// Counterterm strength for which `E = −b_ref` is a bound state at this cutoff.
///
/// The kernel is affine in `h` with a rank-one `h` part,
/// `K(h) = K₀ + (h/Λ) 1 vᵀ`, so by the matrix determinant lemma
/// `det(I − K(h)) = det(I − K₀) (1 − (h/Λ) vᵀ (I − K₀)⁻¹ 1)` vanishes at exactly one
/// real `h`.
pub fn calibrate_h_from_bound_state(
    cutoff: f64,
    b_ref: f64,
    params: &PotentialParams,
    mesh_spec: &MeshSpec,
) -> Result<f64> {
    let cutoff = positive("cutoff", cutoff)?;
    let b_ref = positive("b_ref", b_ref)?;
    let mesh = mesh_spec.build(cutoff, params)?;
    let k_min = mesh.k_min();
    if b_ref <= k_min * k_min || b_ref >= cutoff * cutoff {
        return Err(Error::Config(format!(
            "b_ref = {b_ref} must lie inside (k_min², Λ²) = ({:.3e}, {:.3e})",
            k_min * k_min,
            cutoff * cutoff
        )));
    }
    let asm = KernelAssembler::new(&mesh, params, KernelRule::default());
    let k0 = asm.kernel(-b_ref, 0.0)?;
    let n = mesh.len();
    let v = DVector::from_iterator(
        n,
        asm.propagator(-b_ref)
            .iter()
            .zip(mesh.weights())
            .map(|(d, w)| d * w),
    );
    let a = DMatrix::identity(n, n) - k0.entries;
    let lu = a.lu();
    let Some(x) = lu.solve(&DVector::from_element(n, 1.0)) else {
        // det(I − K₀) = 0: the state already exists without a counterterm.
        return Ok(0.0);
    };
    let s = v.dot(&x);
    if !s.is_finite() || s == 0.0 {
        return Err(Error::NotFound(format!(
            "no finite counterterm binds B = {b_ref} at cutoff {cutoff}"
        )));
    }
    Ok(cutoff / s)
}
