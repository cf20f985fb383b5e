//! On-shell scattering at `E = k² > 0`.
//!
//! The pole of the propagator at `q = k` is removed by subtracting the
//! integrand at `q = k` and adding back the closed-form integral
//! `J(a, b) = ∫_a^b dq / (k² − q² + i0)`. The on-shell amplitude `t(k, k)` is an
//! extra unknown appended to the node values. Every row splits its integral
//! at its own momentum so that the kink of `1/max(p, q)` is integrated exactly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::MomentumMesh;
use crate::error::{positive, Error, Result};
use crate::fit::fit_line;
use crate::potential::PotentialParams;

/// Largest accepted `|Im(1/T) + k| / k`.
pub const UNITARITY_TOLERANCE: f64 = 1e-3;

/// Geometric grading of the mesh toward the on-shell momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnshellRefinement {
    pub levels: usize,
    pub ratio: f64,
    pub max_order: usize,
}

impl Default for OnshellRefinement {
    fn default() -> Self {
        Self {
            levels: 8,
            ratio: 0.15,
            max_order: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub k: f64,
    /// `t(k, k)` of the regulated equation.
    pub t_onshell: Complex64,
    /// `T = −t(k, k) / (4π)`.
    pub big_t: Complex64,
    pub delta_mod_pi: f64,
    pub cot_delta: f64,
    pub sigma_tot: f64,
}

impl PhasePoint {
    /// Builds the point from `t(k, k)`, checking unitarity.
    pub fn from_onshell(k: f64, t_onshell: Complex64) -> Result<Self> {
        let big_t = -t_onshell / (4.0 * PI);
        let (delta_mod_pi, cot_delta) = phase_from_amplitude(big_t, k)?;
        Ok(Self {
            k,
            t_onshell,
            big_t,
            delta_mod_pi,
            cot_delta,
            sigma_tot: cross_section(k, cot_delta),
        })
    }

    /// `σ_tot / (4π/k²) = sin²δ`.
    pub fn sigma_over_unitarity(&self) -> f64 {
        self.sigma_tot * self.k * self.k / (4.0 * PI)
    }

    /// `|Im(1/T) + k| / k`.
    pub fn unitarity_deviation(&self) -> f64 {
        unitarity_deviation(self.big_t, self.k)
    }
}

fn unitarity_deviation(big_t: Complex64, k: f64) -> f64 {
    ((1.0 / big_t).im + k).abs() / k
}

/// Inverts `T = 1/(k cot δ − ik)`; returns `(δ mod π, cot δ)`.
pub fn phase_from_amplitude(big_t: Complex64, k: f64) -> Result<(f64, f64)> {
    let k = positive("momentum k", k)?;
    if big_t == Complex64::new(0.0, 0.0) || !big_t.is_finite() {
        return Err(Error::Domain {
            what: "amplitude |T|",
            requirement: "nonzero and finite",
            value: big_t.norm(),
        });
    }
    let deviation = unitarity_deviation(big_t, k);
    if !(deviation <= UNITARITY_TOLERANCE) {
        return Err(Error::Unitarity {
            deviation,
            tolerance: UNITARITY_TOLERANCE,
        });
    }
    let k_cot = (1.0 / big_t).re;
    // atan2 with positive first argument lands in (0, π); at k cot δ = 0 it is exactly π/2.
    let delta = k.atan2(k_cot);
    Ok((delta, k_cot / k))
}

fn cross_section(k: f64, cot_delta: f64) -> f64 {
    if cot_delta.is_infinite() {
        return 0.0;
    }
    4.0 * PI / ((k * cot_delta).powi(2) + k * k)
}

/// `σ_tot = 4π / ((k cot δ)² + k²)`.
pub fn total_cross_section(point: &PhasePoint) -> f64 {
    cross_section(point.k, point.cot_delta)
}

/// `J(a, b) = ∫_a^b dq / (k² − q² + i0)`.
fn pole_integral(k: f64, a: f64, b: f64) -> Complex64 {
    let f = |q: f64| ((k + q) / (k - q)).abs().ln() / (2.0 * k);
    let im = if a < k && k < b { -PI / (2.0 * k) } else { 0.0 };
    Complex64::new(f(b) - f(a), im)
}

/// Open interval of momenta accepted by [`solve_onshell`].
pub fn validity_band(mesh: &MomentumMesh) -> (f64, f64) {
    (10.0 * mesh.k_min(), 0.5 * mesh.cutoff())
}

/// On-shell amplitude at momentum `k` with counterterm strength `h`.
pub fn solve_onshell(
    k: f64,
    h: f64,
    mesh: &MomentumMesh,
    params: &PotentialParams,
) -> Result<PhasePoint> {
    solve_onshell_with(k, h, mesh, params, &OnshellRefinement::default())
}

pub fn solve_onshell_with(
    k: f64,
    h: f64,
    mesh: &MomentumMesh,
    params: &PotentialParams,
    refinement: &OnshellRefinement,
) -> Result<PhasePoint> {
    let (lo, hi) = validity_band(mesh);
    if !(k > lo && k < hi) {
        return Err(Error::Domain {
            what: "on-shell momentum k",
            requirement: "inside the validity band (10·k_min, Λ/2)",
            value: k,
        });
    }
    if !h.is_finite() {
        return Err(Error::Config(format!("h must be finite, got {h}")));
    }
    let fine = mesh.refined_at(k, refinement.levels, refinement.ratio, refinement.max_order)?;
    let t = solve_system(k, h, &fine, params)?;
    PhasePoint::from_onshell(k, t)
}

fn solve_system(
    k: f64,
    h: f64,
    mesh: &MomentumMesh,
    params: &PotentialParams,
) -> Result<Complex64> {
    let n = mesh.len();
    let q = mesh.nodes();
    let w = mesh.weights();
    let (k_min, cutoff) = (mesh.k_min(), mesh.cutoff());
    let c = params.c();
    let ct = h / cutoff;
    let k2 = k * k;

    let den: Vec<f64> = q.iter().map(|&qj| k2 - qj * qj).collect();
    let sum_w_den: f64 = w.iter().zip(&den).map(|(a, d)| a / d).sum();
    let j_total = pole_integral(k, k_min, cutoff);

    // Cumulative weights in dq measure, one row per node plus the on-shell row.
    let mut cq = mesh.cumulative_matrix();
    cq = cq.insert_row(n, 0.0);
    let onshell_row = mesh.cumulative_log_weights(k);
    for j in 0..n {
        cq[(n, j)] = onshell_row[j];
    }
    for (j, &qj) in q.iter().enumerate() {
        cq.column_mut(j).scale_mut(qj);
    }

    let mut a = DMatrix::<Complex64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<Complex64>::zeros(n + 1);
    for i in 0..=n {
        let p = if i < n { q[i] } else { k };
        let mut row0 = Complex64::new(0.0, 0.0);
        let (mut s_low, mut s_high) = (0.0, 0.0);
        for j in 0..n {
            let cij = cq[(i, j)];
            let entry = cij * q[j] * q[j] / den[j] / p
                + (w[j] - cij) * q[j] / den[j]
                + ct * w[j] * q[j] * q[j] / den[j];
            a[(i, j)] = Complex64::new(-c * entry, 0.0);
            s_low += cij / den[j];
            s_high += (w[j] - cij) / den[j];
        }
        row0 -= Complex64::new(k2 * s_low / p + k * s_high + ct * k2 * sum_w_den, 0.0);
        row0 += if i < n {
            k2 * pole_integral(k, k_min, p) / p + k * pole_integral(k, p, cutoff)
        } else {
            k * j_total
        };
        row0 += ct * k2 * j_total;
        a[(i, n)] = -c * row0;
        a[(i, i)] += 1.0;
        rhs[i] = Complex64::new(2.0 * PI * PI * c * (1.0 / p.max(k) + ct), 0.0);
    }

    let lu = a.lu();
    let diag = lu.u().diagonal().map(|z| z.norm());
    let (dmin, dmax) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
        (lo.min(d), hi.max(d))
    });
    let condition = dmax / dmin;
    let solution = lu
        .solve(&rhs)
        .filter(|s| s.iter().all(|z| z.is_finite()))
        .ok_or(Error::Singular { condition })?;
    if !(condition < 1e14) {
        return Err(Error::Singular { condition });
    }
    Ok(solution[n])
}

/// Continuous branch of a sequence of `δ mod π` values: each step takes the
/// multiple of `π` that minimizes the jump from its predecessor.
pub fn unwrap_phases(deltas: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let next = match out.last() {
            None => d,
            Some(&prev) => d + PI * ((prev - d) / PI).round(),
        };
        out.push(next);
    }
    out
}

/// `δ(k) ≈ β − ν ln(k/Λ*)` fitted to an unwrapped phase sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLawFit {
    /// Offset, reduced to `[0, π)`.
    pub beta_angle: f64,
    pub slope: f64,
    pub residual: f64,
    pub n_points: usize,
}

/// Least-squares fit of the unwrapped phase against `ln(k/Λ*)`.
///
/// Points are sorted by `k`; at least 10 spanning 1.5 periods `π/ν` in `ln k` are required.
pub fn fit_phase_law(
    points: &[PhasePoint],
    lambda_star: f64,
    params: &PotentialParams,
) -> Result<PhaseLawFit> {
    let lambda_star = positive("lambda_star", lambda_star)?;
    if points.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "phase-law fit needs at least 10 points, got {}",
            points.len()
        )));
    }
    let mut sorted: Vec<&PhasePoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.k.total_cmp(&b.k));
    let xs: Vec<f64> = sorted.iter().map(|p| (p.k / lambda_star).ln()).collect();
    let span = xs[xs.len() - 1] - xs[0];
    let needed = 1.5 * params.log_period();
    if span < needed {
        return Err(Error::InsufficientData(format!(
            "points span {span:.3} in ln k, at least {needed:.3} (1.5 periods) needed"
        )));
    }
    let ys = unwrap_phases(&sorted.iter().map(|p| p.delta_mod_pi).collect::<Vec<_>>());
    let line =
        fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate momenta".into()))?;
    Ok(PhaseLawFit {
        beta_angle: line.intercept.rem_euclid(PI),
        slope: line.slope,
        residual: line.rms,
        n_points: xs.len(),
    })
}

/// Momenta in `(k_lo, k_hi)` where `cot δ` changes sign through zero, i.e. where
/// the cross section touches the unitarity limit.
///
/// Scans `samples` log-spaced momenta and refines each sign change to
/// relative width `1e-8` by bisection in `ln k`. Sign changes through a pole of
/// `cot δ` (where `δ` passes 0 mod π) are skipped.
pub fn unitarity_peaks(
    (k_lo, k_hi): (f64, f64),
    samples: usize,
    h: f64,
    mesh: &MomentumMesh,
    params: &PotentialParams,
) -> Result<Vec<PhasePoint>> {
    if samples < 2 || !(k_lo < k_hi) {
        return Err(Error::Config(format!(
            "peak search needs k_lo < k_hi and at least 2 samples, got ({k_lo}, {k_hi}), {samples}"
        )));
    }
    let (a, b) = (k_lo.ln(), k_hi.ln());
    let grid = (0..samples)
        .map(|i| {
            let x = a + (b - a) * i as f64 / (samples - 1) as f64;
            solve_onshell(x.exp(), h, mesh, params)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut peaks = Vec::new();
    for pair in grid.windows(2) {
        let (p0, p1) = (&pair[0], &pair[1]);
        // Through zero δ crosses π/2; through a pole it wraps past 0.
        let crosses_zero = (p0.delta_mod_pi - 0.5 * PI) * (p1.delta_mod_pi - 0.5 * PI) <= 0.0
            && (p0.delta_mod_pi - p1.delta_mod_pi).abs() < 0.5 * PI;
        if !crosses_zero {
            continue;
        }
        let (mut lo, mut hi) = (p0.k.ln(), p1.k.ln());
        let mut lo_point = *p0;
        let mut best = if p0.cot_delta.abs() < p1.cot_delta.abs() {
            *p0
        } else {
            *p1
        };
        while hi - lo > 1e-8 {
            let mid = 0.5 * (lo + hi);
            let pm = solve_onshell(mid.exp(), h, mesh, params)?;
            if pm.cot_delta.abs() < best.cot_delta.abs() {
                best = pm;
            }
            if pm.cot_delta == 0.0 {
                break;
            }
            if (pm.cot_delta > 0.0) == (lo_point.cot_delta > 0.0) {
                lo = mid;
                lo_point = pm;
            } else {
                hi = mid;
            }
        }
        peaks.push(best);
    }
    Ok(peaks)
}
