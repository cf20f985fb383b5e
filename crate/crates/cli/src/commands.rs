//! One function per subcommand, each turning a validated config into tables.

use std::f64::consts::PI;

use limitcycle::bound_states::{default_window, Counterterm, Spectrum};
use limitcycle::rg::{period_anchor_cutoffs, vanishing_cutoffs};
use limitcycle::scattering::{fit_phase_law, solve_onshell, validity_band, PhasePoint};
use limitcycle::zero_energy::threshold_solution;
use limitcycle::{
    beta_extremum, beta_function, find_spectrum, fit_tower, CountertermSchedule, Coupling,
    MomentumMesh, PotentialParams,
};
use rayon::prelude::*;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::Table;

pub fn run(command: Command, cfg: &RunConfig) -> CliResult<Vec<Table>> {
    match command {
        Command::Rgflow => rgflow(cfg),
        Command::Beta => beta(cfg),
        Command::Spectrum => spectrum(cfg),
        Command::Phase => phase(cfg),
        Command::Xsec => xsec(cfg),
        Command::Zeroenergy => zeroenergy(cfg),
    }
}

/// Evaluates every unit on the pool, keeping sweep order. On failure the
/// earliest failing unit wins, so errors are as deterministic as results.
fn sweep<U: Sync, T: Send>(
    units: &[U],
    f: impl Fn(&U) -> CliResult<T> + Sync + Send,
) -> CliResult<Vec<T>> {
    let results: Vec<CliResult<T>> = units.par_iter().map(f).collect();
    results.into_iter().collect()
}

fn schedule(cfg: &RunConfig, nu: f64) -> CliResult<CountertermSchedule> {
    let params = PotentialParams::new(nu).map_err(|e| CliError::config(e.to_string()))?;
    CountertermSchedule::new(cfg.lambda_star, params).map_err(|e| CliError::config(e.to_string()))
}

/// One `(ν, Λ)` point of a sweep with its mesh already built.
struct Case {
    nu: f64,
    cutoff: f64,
    params: PotentialParams,
    mesh: MomentumMesh,
    /// `H(Λ)`; `None` only when the schedule is unused and `Λ` sits on a pole.
    scheduled: Option<f64>,
}

impl Case {
    fn label(&self) -> String {
        format!("nu={}, cutoff={}", self.nu, self.cutoff)
    }

    fn h(&self, cfg: &RunConfig) -> f64 {
        if cfg.unrenormalized {
            0.0
        } else {
            self.scheduled.expect("validated")
        }
    }
}

/// Builds every mesh and checks every counterterm before any solve starts.
fn cases(cfg: &RunConfig, need_schedule: bool) -> CliResult<Vec<Case>> {
    let mut out = Vec::new();
    for &nu in &cfg.nu {
        let sched = schedule(cfg, nu)?;
        for cutoff in cfg.cutoffs() {
            let params = *sched.params();
            let mesh = cfg
                .mesh_spec(cutoff)
                .build(cutoff, &params)
                .map_err(|e| CliError::config(format!("mesh at nu={nu}, cutoff={cutoff}: {e}")))?;
            let scheduled = sched
                .coupling(cutoff)
                .map_err(|e| CliError::config(e.to_string()))?
                .finite();
            if need_schedule && scheduled.is_none() {
                return Err(CliError::config(format!(
                    "cutoff {cutoff} sits inside the pole window of H at nu={nu}, lambda_star={}; \
                     shift the cutoff or pass --unrenormalized",
                    cfg.lambda_star
                )));
            }
            out.push(Case {
                nu,
                cutoff,
                params,
                mesh,
                scheduled,
            });
        }
    }
    Ok(out)
}

fn rgflow(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let mut flow = Table::new(
        "rgflow",
        &["nu", "cutoff", "phase_mod_pi", "h", "is_pole_adjacent"],
    );
    let mut zeros = Table::new(
        "zeros",
        &["nu", "period", "vanishing_cutoff", "period_anchor_cutoff"],
    );
    let cutoffs = cfg.cutoffs();
    for &nu in &cfg.nu {
        let sched = schedule(cfg, nu)?;
        let mut last_branch = None;
        for &cutoff in &cutoffs {
            let coupling = sched
                .coupling(cutoff)
                .map_err(|e| CliError::solver(format!("nu={nu}, cutoff={cutoff}"), e))?;
            let Coupling::Finite(h) = coupling else {
                continue;
            };
            // Rows on either side of a pole carry different branch indices.
            let branch = ((sched.phase(cutoff) - sched.pole_phase()) / PI).floor();
            let adjacent = last_branch.is_some_and(|b| b != branch);
            last_branch = Some(branch);
            flow.push(vec![
                nu.into(),
                cutoff.into(),
                sched.phase(cutoff).rem_euclid(PI).into(),
                h.into(),
                adjacent.into(),
            ]);
        }
        let lo = cutoffs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cutoffs.iter().copied().fold(0.0, f64::max);
        let n_lo = (sched.phase(lo) / PI).floor() as i32;
        let n_hi = (sched.phase(hi) / PI).floor() as i32;
        let vanishing = vanishing_cutoffs(&sched, n_lo, n_hi);
        let anchors = period_anchor_cutoffs(&sched, n_lo, n_hi);
        for (i, n) in (n_lo..=n_hi).enumerate() {
            zeros.push(vec![
                nu.into(),
                n.into(),
                vanishing[i].into(),
                anchors[i].into(),
            ]);
        }
    }
    Ok(vec![flow, zeros])
}

fn beta(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let mut table = Table::new("beta", &["nu", "h", "beta", "is_extremum"]);
    for &nu in &cfg.nu {
        let params = *schedule(cfg, nu)?.params();
        let ext = beta_extremum(&params);
        let mut hs: Vec<(f64, bool)> = cfg
            .h_range
            .linear_points()
            .into_iter()
            .filter(|&h| h != ext.h)
            .map(|h| (h, false))
            .collect();
        hs.push((ext.h, true));
        hs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (h, is_ext) in hs {
            let b = if is_ext {
                ext.beta
            } else {
                beta_function(h, &params)
            };
            table.push(vec![nu.into(), h.into(), b.into(), is_ext.into()]);
        }
    }
    Ok(vec![table])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tower {
    Schedule,
    Unrenormalized,
}

impl Tower {
    fn name(self) -> &'static str {
        match self {
            Tower::Schedule => "schedule",
            Tower::Unrenormalized => "unrenormalized",
        }
    }
}

fn spectrum(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let towers: &[Tower] = match (cfg.unrenormalized, cfg.compare) {
        (_, true) => &[Tower::Schedule, Tower::Unrenormalized],
        (true, false) => &[Tower::Unrenormalized],
        (false, false) => &[Tower::Schedule],
    };
    let cases = cases(cfg, towers.contains(&Tower::Schedule))?;
    let mut units = Vec::new();
    for case in &cases {
        let window = match cfg.energy_window {
            Some([lo, hi]) => (lo, hi),
            None => default_window(&case.mesh),
        };
        let (floor, ceiling) = (case.mesh.k_min().powi(2), 100.0 * case.cutoff.powi(2));
        if !(floor <= window.0 && window.1 <= ceiling) {
            return Err(CliError::config(format!(
                "energy_window [{}, {}] at {} must lie within [k_min², 100 Λ²] = [{floor}, {ceiling}]",
                window.0,
                window.1,
                case.label()
            )));
        }
        for &tower in towers {
            units.push((case, tower, window));
        }
    }
    let spectra: Vec<Spectrum> = sweep(&units, |&(case, tower, window)| {
        let h = match tower {
            Tower::Schedule => case.scheduled.expect("validated"),
            Tower::Unrenormalized => 0.0,
        };
        find_spectrum(window, Counterterm::Fixed(h), &case.mesh, &case.params)
            .map_err(|e| CliError::solver(format!("{}, tower={}", case.label(), tower.name()), e))
    })?;

    let mut states = Table::new(
        "spectrum",
        &[
            "nu",
            "cutoff",
            "tower",
            "n",
            "binding",
            "ln_binding",
            "ratio_to_next",
            "regulator_dominated",
        ],
    );
    let mut fits = Table::new(
        "fit",
        &[
            "nu", "cutoff", "tower", "h", "n_states", "c1", "slope", "residual",
        ],
    );
    for ((case, tower, _), spec) in units.iter().zip(&spectra) {
        let ratios = spec.ratios();
        for (i, s) in spec.states.iter().enumerate() {
            states.push(vec![
                case.nu.into(),
                case.cutoff.into(),
                tower.name().into(),
                s.label.into(),
                s.binding.into(),
                s.binding.ln().into(),
                ratios.get(i).copied().into(),
                s.regulator_dominated.into(),
            ]);
        }
        // Fewer than three states is a legitimate outcome; the fit columns stay empty.
        let fit = fit_tower(spec).ok();
        fits.push(vec![
            case.nu.into(),
            case.cutoff.into(),
            tower.name().into(),
            spec.h_used.into(),
            spec.len().into(),
            fit.map(|f| f.c1).into(),
            fit.map(|f| f.slope).into(),
            fit.map(|f| f.residual).into(),
        ]);
    }
    Ok(vec![states, fits])
}

/// Solves every `(case, k)` pair of a momentum sweep.
fn onshell_sweep(cfg: &RunConfig) -> CliResult<(Vec<Case>, Vec<Vec<PhasePoint>>)> {
    let cases = cases(cfg, !cfg.unrenormalized)?;
    let ks = cfg.k_points();
    for case in &cases {
        let (lo, hi) = validity_band(&case.mesh);
        if let Some(&k) = ks.iter().find(|&&k| !(lo < k && k < hi)) {
            return Err(CliError::config(format!(
                "k = {k} lies outside the validity band ({lo}, {hi}) at {}",
                case.label()
            )));
        }
    }
    let units: Vec<(usize, f64)> = (0..cases.len())
        .flat_map(|c| ks.iter().map(move |&k| (c, k)))
        .collect();
    let points = sweep(&units, |&(c, k)| {
        let case = &cases[c];
        solve_onshell(k, case.h(cfg), &case.mesh, &case.params)
            .map_err(|e| CliError::solver(format!("{}, k={k}", case.label()), e))
    })?;
    let per_case = points.chunks(ks.len().max(1)).map(<[_]>::to_vec).collect();
    Ok((cases, per_case))
}

fn phase(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let (cases, points) = onshell_sweep(cfg)?;
    let mut table = Table::new(
        "phase",
        &[
            "nu",
            "cutoff",
            "k",
            "re_t",
            "im_t",
            "delta_mod_pi",
            "cot_delta",
            "sigma_tot",
            "sigma_over_unitarity",
        ],
    );
    let mut fits = Table::new(
        "fit",
        &[
            "nu",
            "cutoff",
            "lambda_star",
            "beta_angle",
            "slope",
            "residual",
            "n_points",
        ],
    );
    for (case, pts) in cases.iter().zip(&points) {
        for p in pts {
            table.push(vec![
                case.nu.into(),
                case.cutoff.into(),
                p.k.into(),
                p.big_t.re.into(),
                p.big_t.im.into(),
                p.delta_mod_pi.into(),
                p.cot_delta.into(),
                p.sigma_tot.into(),
                p.sigma_over_unitarity().into(),
            ]);
        }
        // Too short a sweep for the law fit is not an error; its columns stay empty.
        let fit = fit_phase_law(pts, cfg.lambda_star, &case.params).ok();
        fits.push(vec![
            case.nu.into(),
            case.cutoff.into(),
            cfg.lambda_star.into(),
            fit.map(|f| f.beta_angle).into(),
            fit.map(|f| f.slope).into(),
            fit.map(|f| f.residual).into(),
            fit.map(|f| f.n_points).into(),
        ]);
    }
    Ok(vec![table, fits])
}

fn xsec(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let (cases, points) = onshell_sweep(cfg)?;
    let mut table = Table::new(
        "xsec",
        &[
            "nu",
            "cutoff",
            "k",
            "sigma_tot",
            "sigma_unitarity",
            "sigma_over_unitarity",
            "cot_delta",
        ],
    );
    let mut summary = Table::new(
        "summary",
        &["nu", "cutoff", "max_sigma_over_unitarity", "k_at_max"],
    );
    for (case, pts) in cases.iter().zip(&points) {
        for p in pts {
            table.push(vec![
                case.nu.into(),
                case.cutoff.into(),
                p.k.into(),
                p.sigma_tot.into(),
                (4.0 * PI / (p.k * p.k)).into(),
                p.sigma_over_unitarity().into(),
                p.cot_delta.into(),
            ]);
        }
        let best = pts.iter().max_by(|a, b| {
            a.sigma_over_unitarity()
                .total_cmp(&b.sigma_over_unitarity())
        });
        summary.push(vec![
            case.nu.into(),
            case.cutoff.into(),
            best.map(|p| p.sigma_over_unitarity()).into(),
            best.map(|p| p.k).into(),
        ]);
    }
    Ok(vec![table, summary])
}

fn zeroenergy(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let cases = cases(cfg, !cfg.unrenormalized)?;
    let solutions = sweep(&cases, |case| {
        threshold_solution(case.h(cfg), &case.mesh, &case.params)
            .map_err(|e| CliError::solver(case.label(), e))
    })?;
    let mut nodes = Table::new(
        "zeroenergy",
        &[
            "nu",
            "cutoff",
            "p",
            "phi0",
            "phi0_sqrt_p",
            "fitted_envelope",
            "in_window",
        ],
    );
    let mut summary = Table::new(
        "summary",
        &[
            "nu",
            "cutoff",
            "h",
            "alpha",
            "alpha_schedule",
            "tail_alpha",
            "amplitude",
            "fit_residual",
            "window_lo",
            "window_hi",
            "n_crossings",
            "mean_crossing_spacing",
        ],
    );
    for (case, sol) in cases.iter().zip(&solutions) {
        let (lo, hi) = sol.window;
        for ((&p, &v), s) in sol.nodes.iter().zip(&sol.values).zip(sol.scaled_values()) {
            nodes.push(vec![
                case.nu.into(),
                case.cutoff.into(),
                p.into(),
                v.into(),
                s.into(),
                sol.envelope(p).into(),
                (lo <= p && p <= hi).into(),
            ]);
        }
        let crossings = sol.zero_crossings();
        // Spacing in ln p; a pure cos(ν ln p + α) gives π/ν.
        let spacing = (crossings.len() >= 2).then(|| {
            (crossings[crossings.len() - 1] / crossings[0]).ln() / (crossings.len() - 1) as f64
        });
        let alpha_schedule = (!cfg.unrenormalized)
            .then(|| schedule(cfg, case.nu).map(|s| s.alpha()))
            .transpose()?;
        summary.push(vec![
            case.nu.into(),
            case.cutoff.into(),
            case.h(cfg).into(),
            sol.alpha.into(),
            alpha_schedule.into(),
            sol.tail_alpha.into(),
            sol.amplitude.into(),
            sol.fit_residual.into(),
            lo.into(),
            hi.into(),
            crossings.len().into(),
            spacing.into(),
        ]);
    }
    Ok(vec![nodes, summary])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, CommonArgs, Range};
    use crate::output::Cell;

    fn args() -> CommonArgs {
        CommonArgs::default()
    }

    #[test]
    fn beta_table_holds_the_extremum_and_stays_negative() {
        let cfg = resolve(Command::Beta, &args()).unwrap();
        let t = &beta(&cfg).unwrap()[0];
        assert_eq!(t.rows.len(), 402);
        let ext: Vec<_> = t.rows.iter().filter(|r| r[3] == Cell::Bool(true)).collect();
        assert_eq!(ext.len(), 1);
        let (Cell::Float(h), Cell::Float(b)) = (&ext[0][1], &ext[0][2]) else {
            panic!("numeric cells expected");
        };
        assert!((h + 0.6).abs() < 1e-15 && (b + 0.8).abs() < 1e-15);
        assert!(t
            .rows
            .iter()
            .all(|r| matches!(r[2], Cell::Float(b) if b < 0.0)));
    }

    #[test]
    fn rgflow_skips_only_pole_samples() {
        let sched = schedule(&resolve(Command::Rgflow, &args()).unwrap(), 1.0).unwrap();
        // Put one sample exactly on a pole.
        let pole = (sched.pole_phase() + PI).exp();
        let a = CommonArgs {
            cutoff_range: Some(Range {
                lo: pole / 2.0,
                hi: pole * 2.0,
                n: 3,
            }),
            ..args()
        };
        let cfg = resolve(Command::Rgflow, &a).unwrap();
        let t = &rgflow(&cfg).unwrap()[0];
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1][4], Cell::Bool(true));
    }

    #[test]
    fn pole_cutoff_is_a_config_error_for_solvers() {
        let sched = schedule(&resolve(Command::Rgflow, &args()).unwrap(), 1.0).unwrap();
        let pole = (sched.pole_phase() + 5.0 * PI).exp();
        let a = CommonArgs {
            cutoff: Some(pole),
            ..args()
        };
        let cfg = resolve(Command::Zeroenergy, &a).unwrap();
        assert_eq!(zeroenergy(&cfg).unwrap_err().exit_code(), 2);
    }
}
