//! Threshold (`E = 0`) solution and its phase `α`.
//!
//! Below the infrared floor the solution is continued by its exact asymptotic
//! form `q^{−1/2}(a cos ν ln q + b sin ν ln q)`. Matching the tail to the mesh
//! turns the homogeneous equation into `N + 1` linear conditions on `N + 2`
//! unknowns, whose one-dimensional null space is the threshold solution.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::MomentumMesh;
use crate::error::{Error, Result};
use crate::potential::PotentialParams;

/// Largest accepted relative rms deviation from the asymptotic form.
pub const FIT_TOLERANCE: f64 = 0.05;

/// Roots `s± = −1/2 ± iν` of `s² + s − c = 0`.
pub fn critical_exponents(params: &PotentialParams) -> (Complex64, Complex64) {
    (
        Complex64::new(-0.5, params.nu()),
        Complex64::new(-0.5, -params.nu()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSolution {
    pub nodes: Vec<f64>,
    /// `φ₀` at the nodes, unit Euclidean norm.
    pub values: Vec<f64>,
    /// Phase in `[0, π)` of `φ₀ ∝ p^{−1/2} cos(ν ln p + α)`.
    pub alpha: f64,
    /// Amplitude `N` of the fitted envelope, positive, in the normalization of `values`.
    pub amplitude: f64,
    /// Relative rms deviation from the fitted form over the window.
    pub fit_residual: f64,
    /// `[p_lo, p_hi]` used for the fit.
    pub window: (f64, f64),
    /// Phase of the infrared tail, an independent estimate of `α`.
    pub tail_alpha: f64,
    pub nu: f64,
}

impl ThresholdSolution {
    /// `N cos(ν ln p + α)`, the fitted form of `φ₀ p^{1/2}`.
    pub fn envelope(&self, p: f64) -> f64 {
        self.amplitude * (self.nu * p.ln() + self.alpha).cos()
    }

    /// `φ₀(p_i) p_i^{1/2}`.
    pub fn scaled_values(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.values)
            .map(|(p, v)| v * p.sqrt())
            .collect()
    }

    /// Zeros of `φ₀ p^{1/2}` inside the fit window, by linear interpolation in `ln p`.
    pub fn zero_crossings(&self) -> Vec<f64> {
        let scaled = self.scaled_values();
        let (lo, hi) = self.window;
        let mut out = Vec::new();
        for i in 1..self.nodes.len() {
            let (p0, p1) = (self.nodes[i - 1], self.nodes[i]);
            if p0 < lo || p1 > hi {
                continue;
            }
            let (y0, y1) = (scaled[i - 1], scaled[i]);
            if y0 == 0.0 {
                out.push(p0);
            } else if y0 * y1 < 0.0 {
                let (u0, u1) = (p0.ln(), p1.ln());
                out.push((u0 - y0 * (u1 - u0) / (y1 - y0)).exp());
            }
        }
        out
    }
}

/// Circular distance between two angles defined mod `π`.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Threshold solution with counterterm strength `h`, fitted over `[10·k_min, Λ/10]`.
pub fn threshold_solution(
    h: f64,
    mesh: &MomentumMesh,
    params: &PotentialParams,
) -> Result<ThresholdSolution> {
    if !h.is_finite() {
        return Err(Error::Config(format!("h must be finite, got {h}")));
    }
    let n = mesh.len();
    let q = mesh.nodes();
    let w = mesh.weights();
    let (k_min, cutoff) = (mesh.k_min(), mesh.cutoff());
    let c = params.c();
    let ct = h / cutoff;
    let (s, _) = critical_exponents(params);

    // Tail contributions are linear in (a, b): Re[(a − ib) Z] = a Re Z + b Im Z.
    let head = Complex64::new(k_min, 0.0).powc(s + 1.0) / (s + 1.0);
    let beyond = Complex64::new(k_min, 0.0).powc(s) / s;

    let mut cq = mesh.cumulative_matrix();
    for (j, &qj) in q.iter().enumerate() {
        cq.column_mut(j).scale_mut(qj);
    }

    let cols = n + 2;
    let mut m = DMatrix::<f64>::zeros(cols, cols);
    for i in 0..n {
        let p = q[i];
        for j in 0..n {
            let cij = cq[(i, j)];
            m[(i, j)] = c * (cij / p + (w[j] - cij) / q[j] + ct * w[j]);
        }
        m[(i, i)] += 1.0;
        m[(i, n)] = c * (1.0 / p + ct) * head.re;
        m[(i, n + 1)] = c * (1.0 / p + ct) * head.im;
    }
    for j in 0..n {
        m[(n, j)] = w[j] / q[j] + ct * w[j];
    }
    m[(n, n)] = beyond.re + ct * head.re;
    m[(n, n + 1)] = beyond.im + ct * head.im;
    // Row n + 1 stays zero so the matrix is square.

    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Eigen("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    let sigma_max = svd.singular_values[order[cols - 1]];
    let second = svd.singular_values[order[1]];
    if !(second > 1e-10 * sigma_max) {
        return Err(Error::NoThresholdSolution(format!(
            "null space is not one-dimensional (second singular value {second:.3e}, largest {sigma_max:.3e})"
        )));
    }
    let null: DVector<f64> = v_t.row(order[0]).transpose();

    let values_raw = null.rows(0, n);
    let norm = values_raw.norm();
    if !(norm > 0.0) {
        return Err(Error::NoThresholdSolution(
            "null vector vanishes on the mesh".into(),
        ));
    }
    let mut values: Vec<f64> = values_raw.iter().map(|v| v / norm).collect();
    let (tail_a, tail_b) = (null[n], null[n + 1]);
    // φ_t ∝ cos(ν ln q) a + sin(ν ln q) b, so α = atan2(−b, a).
    let tail_alpha = (-tail_b).atan2(tail_a).rem_euclid(PI);

    let window = (10.0 * k_min, 0.1 * cutoff);
    let nu = params.nu();
    let fit = fit_envelope(q, &values, window, nu)?;
    let mut amplitude = fit.amplitude;
    if amplitude < 0.0 {
        values.iter_mut().for_each(|v| *v = -*v);
        amplitude = -amplitude;
    }
    if !(fit.residual <= FIT_TOLERANCE) {
        return Err(Error::NoThresholdSolution(format!(
            "relative rms deviation {:.3e} from p^(-1/2) cos(ν ln p + α) exceeds {FIT_TOLERANCE}",
            fit.residual
        )));
    }
    Ok(ThresholdSolution {
        nodes: q.to_vec(),
        values,
        alpha: fit.alpha,
        amplitude,
        fit_residual: fit.residual,
        window,
        tail_alpha,
        nu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    /// In `[0, π)`.
    pub alpha: f64,
    /// Signed, so that `φ √p ≈ amplitude·cos(ν ln p + alpha)`.
    pub amplitude: f64,
    /// Relative rms deviation.
    pub residual: f64,
}

/// Fits `φ √p = X cos(ν ln p) + Y sin(ν ln p)`, the linear form of
/// `N cos(ν ln p + α)` with `X = N cos α`, `Y = −N sin α`.
pub fn fit_envelope(
    nodes: &[f64],
    values: &[f64],
    window: (f64, f64),
    nu: f64,
) -> Result<EnvelopeFit> {
    let (mut scc, mut scs, mut sss, mut syc, mut sys, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    for (&p, &v) in nodes.iter().zip(values) {
        if p < window.0 || p > window.1 {
            continue;
        }
        let y = v * p.sqrt();
        let (sn, cs) = (nu * p.ln()).sin_cos();
        scc += cs * cs;
        scs += cs * sn;
        sss += sn * sn;
        syc += y * cs;
        sys += y * sn;
        syy += y * y;
        count += 1;
    }
    let det = scc * sss - scs * scs;
    if count < 3 || !(det > 0.0) {
        return Err(Error::InsufficientData(format!(
            "{count} nodes in the threshold fit window [{:.3e}, {:.3e}]",
            window.0, window.1
        )));
    }
    let x = (syc * sss - sys * scs) / det;
    let y = (sys * scc - syc * scs) / det;
    let ss_res: f64 = nodes
        .iter()
        .zip(values)
        .filter(|(&p, _)| p >= window.0 && p <= window.1)
        .map(|(&p, &v)| {
            let (sn, cs) = (nu * p.ln()).sin_cos();
            (v * p.sqrt() - x * cs - y * sn).powi(2)
        })
        .sum();
    let residual = if syy > 0.0 {
        (ss_res / syy).sqrt()
    } else {
        f64::INFINITY
    };
    let raw = (-y).atan2(x);
    let alpha = raw.rem_euclid(PI);
    let magnitude = x.hypot(y);
    // Reducing α by π flips the sign of the amplitude.
    let amplitude = if (alpha - raw).abs() < 0.5 * PI {
        magnitude
    } else {
        -magnitude
    };
    Ok(EnvelopeFit {
        alpha,
        amplitude,
        residual,
    })
}
