//! Binding energies of the regulated problem and the geometric tower they form.
//!
//! A bound state at `E = −B` exists where the kernel `K(E)` has eigenvalue 1.
//! The kernel eigenvalues grow monotonically as `E → 0⁻`, so the number of
//! eigenvalues above 1 counts the states deeper than `B`. Crossings are
//! bracketed by that count on a log grid and then bisected in `ln B` on the
//! sign of `det(I − K)`, which flips exactly once inside a one-state bracket.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discretization::{KernelAssembler, KernelRule, MomentumMesh};
use crate::error::{positive, Error, Result};
use crate::fit::fit_line;
use crate::potential::PotentialParams;
use crate::rg::{CountertermSchedule, Coupling};

/// Scan points per tower period `2π/ν` in `ln B`.
pub const SCAN_POINTS_PER_PERIOD: usize = 8;
/// Refinement stops once the bracket is this narrow in `ln B`.
pub const LOG_WIDTH_TOLERANCE: f64 = 1e-10;
const MAX_SUBDIVISIONS: usize = 16;
/// States with `B` above this fraction of `Λ²` are regulator-dominated.
pub const UV_FRACTION: f64 = 1e-2;
/// States with `B` below this multiple of `k_min²` are regulator-dominated.
pub const IR_FACTOR: f64 = 1e3;

/// How the counterterm strength is chosen at each cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counterterm {
    /// `h = H(Λ)` from the limit-cycle schedule.
    Schedule(CountertermSchedule),
    /// The same `h` at every cutoff; `Fixed(0.0)` is the unrenormalized problem.
    Fixed(f64),
}

impl Counterterm {
    pub fn h_at(&self, cutoff: f64) -> Result<f64> {
        match self {
            Counterterm::Fixed(h) if h.is_finite() => Ok(*h),
            Counterterm::Fixed(h) => Err(Error::Config(format!("fixed h must be finite, got {h}"))),
            Counterterm::Schedule(s) => match s.coupling(cutoff)? {
                Coupling::Finite(h) => Ok(h),
                Coupling::Pole => Err(Error::Config(format!(
                    "cutoff {cutoff} sits on a pole of the running coupling"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    /// `N`, counting from the deepest located state.
    pub label: usize,
    pub binding: f64,
    pub regulator_dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Deepest first.
    pub states: Vec<BoundState>,
    pub cutoff: f64,
    pub k_min: f64,
    pub h_used: f64,
    pub counterterm: Counterterm,
    pub params: PotentialParams,
    pub window: (f64, f64),
}

impl Spectrum {
    pub fn binding_energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.binding).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `B_N / B_{N+1}` for each state that has a shallower neighbour.
    pub fn ratios(&self) -> Vec<f64> {
        self.states
            .windows(2)
            .map(|w| w[0].binding / w[1].binding)
            .collect()
    }

    /// States outside the regulator-dominated margins.
    pub fn physical(&self) -> impl Iterator<Item = &BoundState> {
        self.states.iter().filter(|s| !s.regulator_dominated)
    }

    /// Located binding energy closest to `b` on a log scale.
    pub fn nearest(&self, b: f64) -> Option<f64> {
        self.states
            .iter()
            .map(|s| s.binding)
            .min_by(|x, y| (x / b).ln().abs().total_cmp(&(y / b).ln().abs()))
    }
}

/// Bounds `[IR_FACTOR·k_min², UV_FRACTION·Λ²]` of the renormalized regime.
pub fn physical_window(mesh: &MomentumMesh) -> (f64, f64) {
    (
        IR_FACTOR * mesh.k_min().powi(2),
        UV_FRACTION * mesh.cutoff().powi(2),
    )
}

/// Scan window `[10·k_min², 10·Λ²]`, wide enough to hold every state the mesh supports.
pub fn default_window(mesh: &MomentumMesh) -> (f64, f64) {
    (10.0 * mesh.k_min().powi(2), 10.0 * mesh.cutoff().powi(2))
}

/// Line fit of `ln B_N − 2 ln Λ` against `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerFit {
    pub c1: f64,
    pub slope: f64,
    pub residual: f64,
    pub n_states: usize,
}

/// Reusable workspace for one mesh: kernel quadrature is built once.
#[derive(Debug, Clone)]
pub struct BoundStateSolver<'m> {
    assembler: KernelAssembler<'m>,
}

impl<'m> BoundStateSolver<'m> {
    pub fn new(mesh: &'m MomentumMesh, params: &PotentialParams) -> Self {
        Self {
            assembler: KernelAssembler::new(mesh, params, KernelRule::default()),
        }
    }

    pub fn mesh(&self) -> &MomentumMesh {
        self.assembler.mesh()
    }

    fn identity_minus_kernel(&self, energy: f64, h: f64) -> Result<DMatrix<f64>> {
        let k = self.assembler.kernel(energy, h)?.entries;
        let n = k.nrows();
        Ok(DMatrix::identity(n, n) - k)
    }

    /// Real kernel eigenvalue nearest to 1.
    pub fn eigenvalue_at(&self, energy: f64, h: f64) -> Result<f64> {
        check_negative(energy)?;
        let k = self.assembler.kernel(energy, h)?.entries;
        let eig = k.complex_eigenvalues();
        eig.iter()
            .filter(|z| z.re.is_finite() && z.im.abs() <= 1e-8 * z.norm().max(1.0))
            .map(|z| z.re)
            .min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))
            .ok_or_else(|| {
                Error::Eigen(format!(
                    "no real eigenvalue at E = {energy} (h = {h}); {} complex eigenvalues",
                    eig.len()
                ))
            })
    }

    /// Number of kernel eigenvalues with real part above 1, i.e. states deeper than `b`.
    pub fn count_deeper(&self, b: f64, h: f64) -> Result<usize> {
        let k = self.assembler.kernel(-b, h)?.entries;
        let eig = k.complex_eigenvalues();
        if eig.iter().any(|z| !z.re.is_finite()) {
            return Err(Error::Eigen(format!("non-finite eigenvalue at B = {b}")));
        }
        Ok(eig.iter().filter(|z| z.re > 1.0).count())
    }

    /// Sign of `det(I − K(−b))`: `(−1)^(number of real eigenvalues above 1)`.
    pub fn determinant_sign(&self, b: f64, h: f64) -> Result<f64> {
        let lu = self.identity_minus_kernel(-b, h)?.lu();
        let u = lu.u();
        let mut sign: f64 = lu.p().determinant();
        for d in u.diagonal().iter() {
            if *d == 0.0 || !d.is_finite() {
                return Ok(0.0);
            }
            sign *= d.signum();
        }
        Ok(sign)
    }

    pub fn find_spectrum(&self, window: (f64, f64), counterterm: Counterterm) -> Result<Spectrum> {
        let mesh = self.mesh();
        let (b_min, b_max) = window;
        let b_min = positive("window lower end", b_min)?;
        let b_max = positive("window upper end", b_max)?;
        if b_min >= b_max {
            return Err(Error::Config(format!(
                "energy window must be increasing, got [{b_min}, {b_max}]"
            )));
        }
        let (k_min, cutoff) = (mesh.k_min(), mesh.cutoff());
        if b_min < k_min * k_min || b_max > 1e2 * cutoff * cutoff {
            return Err(Error::Config(format!(
                "energy window [{b_min:.3e}, {b_max:.3e}] exceeds the mesh range \
                 [k_min², 100·Λ²] = [{:.3e}, {:.3e}]",
                k_min * k_min,
                1e2 * cutoff * cutoff
            )));
        }
        let h = counterterm.h_at(cutoff)?;
        let nu = self.assembler.params().nu();

        let (lo, hi) = (b_min.ln(), b_max.ln());
        let period = 2.0 * PI / nu;
        let intervals =
            ((SCAN_POINTS_PER_PERIOD as f64 * (hi - lo) / period).ceil() as usize).max(1);
        let grid: Vec<f64> = (0..=intervals)
            .map(|i| {
                if i == intervals {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / intervals as f64
                }
            })
            .collect();
        let counts = grid
            .iter()
            .map(|&x| self.count_deeper(x.exp(), h))
            .collect::<Result<Vec<_>>>()?;

        let mut found = Vec::new();
        for i in 0..intervals {
            self.resolve(
                (grid[i], counts[i]),
                (grid[i + 1], counts[i + 1]),
                h,
                0,
                &mut found,
            )?;
        }
        found.sort_by(|a: &f64, b| b.total_cmp(a));

        let (phys_lo, phys_hi) = physical_window(mesh);
        let states = found
            .into_iter()
            .enumerate()
            .map(|(label, binding)| BoundState {
                label,
                binding,
                regulator_dominated: binding < phys_lo || binding > phys_hi,
            })
            .collect();
        Ok(Spectrum {
            states,
            cutoff,
            k_min,
            h_used: h,
            counterterm,
            params: *self.assembler.params(),
            window: (b_min, b_max),
        })
    }

    /// Locate every crossing between two scan points `(ln B, count)`.
    fn resolve(
        &self,
        a: (f64, usize),
        b: (f64, usize),
        h: f64,
        depth: usize,
        found: &mut Vec<f64>,
    ) -> Result<()> {
        let jumps = a.1.abs_diff(b.1);
        if jumps == 0 {
            return Ok(());
        }
        if jumps == 1 {
            found.push(self.bisect(a.0, b.0, h)?);
            return Ok(());
        }
        if depth >= MAX_SUBDIVISIONS {
            return Err(Error::Eigen(format!(
                "{jumps} crossings between B = {:.6e} and {:.6e} could not be separated",
                a.0.exp(),
                b.0.exp()
            )));
        }
        let mid = 0.5 * (a.0 + b.0);
        let m = (mid, self.count_deeper(mid.exp(), h)?);
        self.resolve(a, m, h, depth + 1, found)?;
        self.resolve(m, b, h, depth + 1, found)
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, h: f64) -> Result<f64> {
        let sign_lo = self.determinant_sign(lo.exp(), h)?;
        let sign_hi = self.determinant_sign(hi.exp(), h)?;
        if sign_lo == 0.0 {
            return Ok(lo.exp());
        }
        if sign_hi == 0.0 {
            return Ok(hi.exp());
        }
        if sign_lo == sign_hi {
            return Err(Error::Eigen(format!(
                "eigenvalue count changes between B = {:.6e} and {:.6e} but det(I − K) keeps its sign; \
                 a complex pair crossed",
                lo.exp(),
                hi.exp()
            )));
        }
        while hi - lo > LOG_WIDTH_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            let s = self.determinant_sign(mid.exp(), h)?;
            if s == 0.0 {
                return Ok(mid.exp());
            }
            if s == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }
}

fn check_negative(energy: f64) -> Result<()> {
    if energy < 0.0 && energy.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "bound-state energy",
            requirement: "negative and finite",
            value: energy,
        })
    }
}

/// Real eigenvalue of `assemble_kernel(energy, h)` nearest to 1.
pub fn eigenvalue_at(
    energy: f64,
    h: f64,
    mesh: &MomentumMesh,
    params: &PotentialParams,
) -> Result<f64> {
    BoundStateSolver::new(mesh, params).eigenvalue_at(energy, h)
}

/// All bound states with `B` in `window`.
pub fn find_spectrum(
    window: (f64, f64),
    counterterm: Counterterm,
    mesh: &MomentumMesh,
    params: &PotentialParams,
) -> Result<Spectrum> {
    BoundStateSolver::new(mesh, params).find_spectrum(window, counterterm)
}

/// Least-squares line through `(N, ln B_N − 2 ln Λ)` over all listed states.
pub fn fit_tower(spectrum: &Spectrum) -> Result<TowerFit> {
    if spectrum.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "tower fit needs at least 3 states, got {}",
            spectrum.len()
        )));
    }
    let shift = 2.0 * spectrum.cutoff.ln();
    let xs: Vec<f64> = spectrum.states.iter().map(|s| s.label as f64).collect();
    let ys: Vec<f64> = spectrum
        .states
        .iter()
        .map(|s| s.binding.ln() - shift)
        .collect();
    let line = fit_line(&xs, &ys)
        .ok_or_else(|| Error::InsufficientData("state labels are degenerate".into()))?;
    Ok(TowerFit {
        c1: line.intercept,
        slope: line.slope,
        residual: line.rms,
        n_states: xs.len(),
    })
}
