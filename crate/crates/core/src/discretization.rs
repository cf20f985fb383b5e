//! Logarithmic composite Gauss–Legendre meshes and the Nyström kernel of the
//! cutoff-regulated S-wave equation.
//!
//! Nodes are uniform in `u = ln q`: the log interval `[ln k_min, ln cutoff]` is
//! split into equal panels no wider than `pi / (4 nu)`, each carrying the same
//! Gauss–Legendre rule. Weights include the Jacobian `dq = q du`.
//!
//! The kernel `1/max(p, q)` has a derivative jump at `q = p`. With
//! [`KernelRule::ProductKink`] the row for node `p_i` integrates the panel
//! interpolant exactly on both sides of `p_i`, which restores spectral
//! convergence; [`KernelRule::Plain`] is the textbook Nyström rule.

use std::io;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::potential::{kernel_f, PotentialParams};
use crate::quadrature::GaussRule;

/// Minimum nodes per oscillation period `pi / nu` in `ln q`.
pub const NODES_PER_PERIOD: usize = 8;
/// Panels are at most a quarter period wide.
pub const PANELS_PER_PERIOD: usize = 4;
pub const MIN_POINTS: usize = 16;
const MAX_DEFAULT_ORDER: usize = 48;

/// User-facing mesh configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub n_points: usize,
    /// Infrared floor as a fraction of the cutoff.
    pub k_min_ratio: f64,
    /// Gauss–Legendre order per panel; derived from `n_points` when absent.
    #[serde(default)]
    pub panel_order: Option<usize>,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            n_points: 256,
            k_min_ratio: 1e-6,
            panel_order: None,
        }
    }
}

impl MeshSpec {
    pub fn with_points(mut self, n_points: usize) -> Self {
        self.n_points = n_points;
        self
    }

    pub fn build(&self, cutoff: f64, params: &PotentialParams) -> Result<MomentumMesh> {
        let cutoff = positive("cutoff", cutoff)?;
        let k_min = positive("k_min_ratio", self.k_min_ratio)? * cutoff;
        build_mesh_with_order(cutoff, self.n_points, k_min, self.panel_order, params)
    }
}

/// One Gauss–Legendre panel `[lo, hi]` in `u = ln q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub lo: f64,
    pub hi: f64,
    /// Index of the first node of this panel.
    pub start: usize,
    rule: usize,
}

#[derive(Debug, Clone)]
pub struct MomentumMesh {
    cutoff: f64,
    k_min: f64,
    panels: Vec<Panel>,
    rules: Vec<GaussRule>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    panel_of: Vec<usize>,
}

/// Composite log-mapped Gauss–Legendre mesh on `(k_min, cutoff)`.
pub fn build_mesh(
    cutoff: f64,
    n_points: usize,
    k_min: f64,
    params: &PotentialParams,
) -> Result<MomentumMesh> {
    build_mesh_with_order(cutoff, n_points, k_min, None, params)
}

fn build_mesh_with_order(
    cutoff: f64,
    n_points: usize,
    k_min: f64,
    panel_order: Option<usize>,
    params: &PotentialParams,
) -> Result<MomentumMesh> {
    let cutoff = positive("cutoff", cutoff)?;
    let k_min = positive("k_min", k_min)?;
    if k_min >= cutoff {
        return Err(Error::Config(format!(
            "k_min ({k_min}) must lie below the cutoff ({cutoff})"
        )));
    }
    let span = (cutoff / k_min).ln();
    let periods = span / params.log_period();
    let required = ((NODES_PER_PERIOD as f64 * periods).ceil() as usize).max(MIN_POINTS);
    if n_points < required {
        return Err(Error::Resolution {
            n_points,
            periods,
            required,
        });
    }

    let min_panels = ((periods * PANELS_PER_PERIOD as f64).ceil() as usize).max(1);
    let order = match panel_order {
        Some(m) if m < 2 => {
            return Err(Error::Config(format!("panel_order must be >= 2, got {m}")));
        }
        Some(m) => m,
        None => n_points.div_ceil(min_panels).clamp(2, MAX_DEFAULT_ORDER),
    };
    let n_panels = min_panels.max(n_points.div_ceil(order));

    let (a, b) = (k_min.ln(), cutoff.ln());
    let width = (b - a) / n_panels as f64;
    let edges = (0..n_panels).map(|p| {
        let lo = a + width * p as f64;
        let hi = if p + 1 == n_panels {
            b
        } else {
            a + width * (p + 1) as f64
        };
        (lo, hi, order)
    });
    MomentumMesh::from_panels(cutoff, k_min, edges)
}

impl MomentumMesh {
    fn from_panels(
        cutoff: f64,
        k_min: f64,
        edges: impl IntoIterator<Item = (f64, f64, usize)>,
    ) -> Result<Self> {
        let mut rules: Vec<GaussRule> = Vec::new();
        let mut mesh = Self {
            cutoff,
            k_min,
            panels: Vec::new(),
            rules: Vec::new(),
            nodes: Vec::new(),
            weights: Vec::new(),
            log_weights: Vec::new(),
            panel_of: Vec::new(),
        };
        for (lo, hi, order) in edges {
            let rule = match rules.iter().position(|r| r.order() == order) {
                Some(i) => i,
                None => {
                    rules.push(GaussRule::new(order)?);
                    rules.len() - 1
                }
            };
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            let start = mesh.nodes.len();
            for (&x, &w) in rules[rule].nodes().iter().zip(rules[rule].weights()) {
                let q = (mid + half * x).exp();
                mesh.nodes.push(q);
                mesh.log_weights.push(half * w);
                mesh.weights.push(half * w * q);
                mesh.panel_of.push(mesh.panels.len());
            }
            mesh.panels.push(Panel {
                lo,
                hi,
                start,
                rule,
            });
        }
        mesh.rules = rules;
        Ok(mesh)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn k_min(&self) -> f64 {
        self.k_min
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights in the `dq` measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights in the `du = dq / q` measure.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn panel_of(&self, node: usize) -> usize {
        self.panel_of[node]
    }

    fn rule(&self, panel: &Panel) -> &GaussRule {
        &self.rules[panel.rule]
    }

    /// `Σ w_i g(q_i) ≈ ∫_{k_min}^{cutoff} g(q) dq`
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&q, &w)| w * g(q))
            .sum()
    }

    /// Weights `C_j(x)` such that `Σ_j C_j(x) g(q_j) ≈ ∫_{ln k_min}^{ln x} g(e^u) du`,
    /// integrating the panel interpolant exactly up to `x`.
    pub fn cumulative_log_weights(&self, x: f64) -> Vec<f64> {
        let ux = x.ln();
        let mut out = vec![0.0; self.len()];
        for panel in &self.panels {
            let range = panel.start..panel.start + self.rule(panel).order();
            if panel.hi <= ux {
                out[range.clone()].copy_from_slice(&self.log_weights[range]);
            } else if panel.lo < ux {
                let half = 0.5 * (panel.hi - panel.lo);
                let t = (ux - 0.5 * (panel.hi + panel.lo)) / half;
                let part = self.rule(panel).partial_integrals(t.min(1.0));
                for (o, v) in out[range].iter_mut().zip(part) {
                    *o = half * v;
                }
            }
        }
        out
    }

    /// [`Self::cumulative_log_weights`] evaluated at every node, as rows.
    pub fn cumulative_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut c = DMatrix::zeros(n, n);
        for (pi, panel) in self.panels.iter().enumerate() {
            let rule = self.rule(panel);
            let half = 0.5 * (panel.hi - panel.lo);
            for r in 0..rule.order() {
                let i = panel.start + r;
                for j in 0..panel.start {
                    c[(i, j)] = self.log_weights[j];
                }
                for (l, v) in rule.partial_at_node(r).iter().enumerate() {
                    c[(i, panel.start + l)] = half * v;
                }
                debug_assert_eq!(self.panel_of[i], pi);
            }
        }
        c
    }

    /// Copy of the mesh with `k` inserted as a panel edge and the two
    /// adjacent panels graded geometrically toward it.
    ///
    /// `levels` sub-panels per side shrink by `ratio` each step; graded
    /// panels use at most `max_order` nodes.
    pub fn refined_at(&self, k: f64, levels: usize, ratio: f64, max_order: usize) -> Result<Self> {
        if !(k > self.k_min && k < self.cutoff) {
            return Err(Error::Domain {
                what: "refinement point",
                requirement: "inside (k_min, cutoff)",
                value: k,
            });
        }
        let mut uk = k.ln();
        let mut edges: Vec<(f64, f64, usize)> = Vec::with_capacity(self.panels.len() + 2 * levels);
        for panel in &self.panels {
            let tol = 1e-9 * (panel.hi - panel.lo);
            if (panel.lo - uk).abs() < tol {
                uk = panel.lo;
                break;
            } else if (panel.hi - uk).abs() < tol {
                uk = panel.hi;
                break;
            }
        }
        for panel in &self.panels {
            let order = self.rule(panel).order();
            if panel.lo < uk && uk < panel.hi {
                edges.push((panel.lo, uk, order));
                edges.push((uk, panel.hi, order));
            } else {
                edges.push((panel.lo, panel.hi, order));
            }
        }
        let mut graded = Vec::with_capacity(edges.len() + 2 * levels);
        for (lo, hi, order) in edges {
            let g_order = order.min(max_order).max(2);
            if hi == uk {
                let d = hi - lo;
                let mut pts = vec![lo];
                pts.extend((1..=levels).map(|l| uk - d * ratio.powi(l as i32)));
                pts.push(uk);
                graded.push((pts[0], pts[1], order));
                graded.extend(pts[1..].windows(2).map(|w| (w[0], w[1], g_order)));
            } else if lo == uk {
                let d = hi - lo;
                let mut pts = vec![uk];
                pts.extend((1..=levels).rev().map(|l| uk + d * ratio.powi(l as i32)));
                pts.push(hi);
                let last = pts.len() - 2;
                for (idx, w) in pts.windows(2).enumerate() {
                    graded.push((w[0], w[1], if idx == last { order } else { g_order }));
                }
            } else {
                graded.push((lo, hi, order));
            }
        }
        Self::from_panels(self.cutoff, self.k_min, graded)
    }

    /// CSV dump with columns `index,node,weight`.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "index,node,weight")?;
        for (i, (q, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            writeln!(out, "{i},{q:.17e},{w:.17e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelRule {
    /// Product integration across the kink at `q = p`.
    #[default]
    ProductKink,
    /// `w_j f(p_i, q_j)` everywhere.
    Plain,
}

/// Real Nyström matrix of the regulated equation at `E <= 0`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub energy: f64,
    pub h: f64,
}

/// Energy-independent part of the kernel: the quadrature of `f(p_i, ·)`.
///
/// Row `i` of `f_weights` satisfies `Σ_j A_ij g(q_j) ≈ ∫ f(p_i, q) g(q) dq`.
#[derive(Debug, Clone)]
pub struct KernelAssembler<'m> {
    mesh: &'m MomentumMesh,
    params: PotentialParams,
    f_weights: DMatrix<f64>,
}

impl<'m> KernelAssembler<'m> {
    pub fn new(mesh: &'m MomentumMesh, params: &PotentialParams, rule: KernelRule) -> Self {
        let n = mesh.len();
        let q = mesh.nodes();
        let f_weights = match rule {
            KernelRule::Plain => {
                DMatrix::from_fn(n, n, |i, j| mesh.weights()[j] * kernel_f(q[i], q[j]))
            }
            KernelRule::ProductKink => {
                // (1/p) ∫_{k_min}^{p} g dq + ∫_{p}^{Λ} g/q dq, both smooth.
                let c = mesh.cumulative_matrix();
                let wu = mesh.log_weights();
                DMatrix::from_fn(n, n, |i, j| c[(i, j)] * q[j] / q[i] + (wu[j] - c[(i, j)]))
            }
        };
        Self {
            mesh,
            params: *params,
            f_weights,
        }
    }

    pub fn mesh(&self) -> &MomentumMesh {
        self.mesh
    }

    pub fn params(&self) -> &PotentialParams {
        &self.params
    }

    pub fn f_weights(&self) -> &DMatrix<f64> {
        &self.f_weights
    }

    /// `c q_j² / (E − q_j²)`, the column scaling of the kernel.
    pub fn propagator(&self, energy: f64) -> Vec<f64> {
        let c = self.params.c();
        self.mesh
            .nodes()
            .iter()
            .map(|&q| {
                if energy == 0.0 {
                    -c
                } else {
                    c * q * q / (energy - q * q)
                }
            })
            .collect()
    }

    pub fn kernel(&self, energy: f64, h: f64) -> Result<KernelMatrix> {
        if energy > 0.0 {
            return Err(Error::PositiveEnergy { energy });
        }
        if !energy.is_finite() || !h.is_finite() {
            return Err(Error::Config(format!(
                "kernel needs finite energy and h, got E = {energy}, h = {h}"
            )));
        }
        let n = self.mesh.len();
        let prop = self.propagator(energy);
        let w = self.mesh.weights();
        let ct = h / self.mesh.cutoff();
        let entries = DMatrix::from_fn(n, n, |i, j| prop[j] * (self.f_weights[(i, j)] + ct * w[j]));
        Ok(KernelMatrix { entries, energy, h })
    }
}

/// Kernel of the regulated equation at `E <= 0` with the default rule.
pub fn assemble_kernel(
    energy: f64,
    h: f64,
    mesh: &MomentumMesh,
    params: &PotentialParams,
) -> Result<KernelMatrix> {
    KernelAssembler::new(mesh, params, KernelRule::default()).kernel(energy, h)
}
