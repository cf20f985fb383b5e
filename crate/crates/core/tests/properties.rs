use std::f64::consts::PI;

use limitcycle::bound_states::{default_window, BoundStateSolver, Counterterm};
use limitcycle::rg::{preferred_scaling_factor, CountertermSchedule};
use limitcycle::scattering::{fit_phase_law, solve_onshell, unwrap_phases, validity_band};
use limitcycle::zero_energy::{fit_envelope, phase_distance, threshold_solution};
use limitcycle::{assemble_kernel, build_mesh, find_spectrum, MeshSpec, PotentialParams};

fn params(nu: f64) -> PotentialParams {
    PotentialParams::new(nu).unwrap()
}

fn scheduled_h(nu: f64, lambda_star: f64, cutoff: f64) -> f64 {
    CountertermSchedule::new(lambda_star, params(nu))
        .unwrap()
        .coupling(cutoff)
        .unwrap()
        .finite()
        .unwrap()
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        (fa, fm, fb): (f64, f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, (fa, flm, fm), left, 0.5 * tol, depth - 1)
            + step(f, m, b, (fm, frm, fb), right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, (fa, fm, fb), whole, tol, 60)
}

#[test]
fn mesh_integrates_threshold_oscillation() {
    let p = params(1.0);
    let mesh = build_mesh(100.0, 256, 1e-4, &p).unwrap();
    let g = |q: f64| q.powf(-0.5) * q.ln().cos();
    let got = mesh.integrate(g);
    // Self-consistent oracle: split at decades, refine until two tolerances agree to 1e-10.
    let decades: Vec<f64> = (-4..=2).map(|e| 10f64.powi(e)).collect();
    let oracle_at = |tol: f64| -> f64 {
        decades
            .windows(2)
            .map(|w| adaptive_simpson(&g, w[0], w[1], tol))
            .sum()
    };
    let (o1, o2) = (oracle_at(1e-11), oracle_at(1e-13));
    assert!((o1 - o2).abs() < 1e-10 * o2.abs().max(1.0));
    assert!((got - o2).abs() < 1e-6 * o2.abs(), "{got} vs {o2}");
}

#[test]
fn largest_eigenvalue_converges_under_doubling() {
    let p = params(1.0);
    let largest = |n: usize| {
        let mesh = MeshSpec::default().with_points(n).build(100.0, &p).unwrap();
        let k = assemble_kernel(-1.0, 0.0, &mesh, &p).unwrap();
        k.entries
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (a, b) = (largest(256), largest(512));
    assert!((a - b).abs() < 1e-6 * b.abs(), "{a} vs {b}");
}

#[test]
fn crossings_accumulate_toward_threshold() {
    let nu = 1.0;
    let p = params(nu);
    let cutoff = 100.0;
    let mesh = MeshSpec::default().build(cutoff, &p).unwrap();
    let solver = BoundStateSolver::new(&mesh, &p);
    let h = scheduled_h(nu, 1.0, cutoff);
    let tower = (2.0 * PI / nu).exp();
    // Shallow anchor between states; each factor e^{2π/ν} closer to threshold adds one state.
    let anchor = 10.0;
    let counts: Vec<usize> = (0..4)
        .map(|n| solver.count_deeper(anchor / tower.powi(n), h).unwrap())
        .collect();
    for w in counts.windows(2) {
        assert_eq!(w[1], w[0] + 1, "{counts:?}");
    }
}

#[test]
fn state_count_grows_by_one_per_cycle() {
    let nu = 1.0;
    let p = params(nu);
    let lam0 = preferred_scaling_factor(&p);
    let sched = CountertermSchedule::new(1.0, p).unwrap();
    let count = |cutoff: f64| {
        let mesh = MeshSpec::default().build(cutoff, &p).unwrap();
        find_spectrum(
            (1e-4, cutoff * cutoff),
            Counterterm::Schedule(sched),
            &mesh,
            &p,
        )
        .unwrap()
        .len()
    };
    let (a, b) = (count(100.0), count(100.0 * lam0));
    assert_eq!(b, a + 1);
}

#[test]
fn spectrum_is_mesh_converged_and_deterministic() {
    let p = params(1.0);
    let ct = Counterterm::Fixed(0.0);
    let run = |n: usize| {
        let mesh = MeshSpec::default().with_points(n).build(100.0, &p).unwrap();
        find_spectrum(default_window(&mesh), ct, &mesh, &p).unwrap()
    };
    let a = run(256);
    let again = run(256);
    assert_eq!(a, again);
    let b = run(512);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!(
            (x.binding / y.binding - 1.0).abs() < 1e-6,
            "{} vs {}",
            x.binding,
            y.binding
        );
    }
}

#[test]
fn renormalization_changes_deep_states_but_keeps_the_tower() {
    let p = params(1.0);
    let mesh = MeshSpec::default().build(100.0, &p).unwrap();
    let h = scheduled_h(1.0, 1.0, 100.0);
    let with = find_spectrum(default_window(&mesh), Counterterm::Fixed(h), &mesh, &p).unwrap();
    let without = find_spectrum(default_window(&mesh), Counterterm::Fixed(0.0), &mesh, &p).unwrap();
    assert!((with.states[0].binding / without.states[0].binding - 1.0).abs() > 0.05);
    let tower = (2.0 * PI).exp();
    for s in [&with, &without] {
        let mid: Vec<f64> = s
            .states
            .windows(2)
            .filter(|w| !w[0].regulator_dominated && !w[1].regulator_dominated)
            .map(|w| w[0].binding / w[1].binding)
            .collect();
        assert!(!mid.is_empty());
        assert!(
            mid.iter().all(|r| (r / tower - 1.0).abs() < 0.01),
            "{mid:?}"
        );
    }
}

#[test]
fn phase_shift_runs_away_in_the_infrared() {
    let nu = 1.0;
    let p = params(nu);
    let mesh = MeshSpec::default().build(100.0, &p).unwrap();
    let h = scheduled_h(nu, 1.0, 100.0);
    let (k_lo, _) = validity_band(&mesh);
    let ks: Vec<f64> = (0..40)
        .map(|i| (k_lo * 1.0001f64).ln() + (1.0 / (k_lo * 1.0001)).ln() * i as f64 / 39.0)
        .map(f64::exp)
        .collect();
    let deltas: Vec<f64> = ks
        .iter()
        .map(|&k| solve_onshell(k, h, &mesh, &p).unwrap().delta_mod_pi)
        .collect();
    let un = unwrap_phases(&deltas);
    let branches = ((un[0] - un[un.len() - 1]) / PI).floor() as i64;
    let expect = (nu * (1.0 / k_lo).ln() / PI).floor() as i64;
    assert!((branches - expect).abs() <= 1, "{branches} vs {expect}");
}

#[test]
fn unitarity_ratio_is_scale_invariant() {
    let nu = 1.0;
    let p = params(nu);
    let lam0 = preferred_scaling_factor(&p);
    let spec = MeshSpec {
        k_min_ratio: 1e-8,
        ..MeshSpec::default()
    };
    let mesh = spec.build(1e4, &p).unwrap();
    let h = scheduled_h(nu, 1.0, 1e4);
    for k in [2e-3, 5e-3, 1.3e-2, 3e-2] {
        let a = solve_onshell(k, h, &mesh, &p)
            .unwrap()
            .sigma_over_unitarity();
        let b = solve_onshell(k * lam0, h, &mesh, &p)
            .unwrap()
            .sigma_over_unitarity();
        assert!((a - b).abs() < 0.01 * a.max(b), "k = {k}: {a} vs {b}");
    }
}

#[test]
fn phase_law_offset_and_onshell_phase_are_cutoff_independent() {
    let nu = 1.0;
    let p = params(nu);
    let ks: Vec<f64> = (0..30).map(|i| (-6.5 + 0.25 * i as f64).exp()).collect();
    let mut offsets = Vec::new();
    let mut at_one = Vec::new();
    for cutoff in [50.0, 100.0] {
        let mesh = MeshSpec::default().build(cutoff, &p).unwrap();
        let h = scheduled_h(nu, 1.0, cutoff);
        let pts: Vec<_> = ks
            .iter()
            .map(|&k| solve_onshell(k, h, &mesh, &p).unwrap())
            .collect();
        offsets.push(fit_phase_law(&pts, 1.0, &p).unwrap().beta_angle);
        at_one.push(solve_onshell(1.0, h, &mesh, &p).unwrap().delta_mod_pi);
    }
    assert!(phase_distance(offsets[0], offsets[1]) < 0.01 * offsets[1]);
    assert!(phase_distance(at_one[0], at_one[1]) < 1.0 / 50.0);
}

#[test]
fn threshold_envelope_has_no_secular_growth() {
    let p = params(1.0);
    let mesh = MeshSpec::default().build(100.0, &p).unwrap();
    let sol = threshold_solution(scheduled_h(1.0, 2.0, 100.0), &mesh, &p).unwrap();
    let (lo, hi) = sol.window;
    let scaled = sol.scaled_values();
    let inside: Vec<(f64, f64)> = sol
        .nodes
        .iter()
        .zip(&scaled)
        .filter(|(q, _)| **q >= lo && **q <= hi)
        .map(|(q, v)| (*q, *v))
        .collect();
    let half = inside.len() / 2;
    let peak = |s: &[(f64, f64)]| s.iter().map(|(_, v)| v.abs()).fold(0.0f64, f64::max);
    let (a, b) = (peak(&inside[..half]), peak(&inside[half..]));
    assert!((a / b - 1.0).abs() < 0.02, "{a} vs {b}");
    for (q, v) in inside {
        assert!((v - sol.envelope(q)).abs() < 1e-3 * sol.amplitude);
    }
}

#[test]
fn threshold_phase_ignores_vector_sign() {
    let p = params(2.0);
    let mesh = MeshSpec::default().build(100.0, &p).unwrap();
    let sol = threshold_solution(0.7, &mesh, &p).unwrap();
    assert!(phase_distance(sol.alpha, sol.tail_alpha) < 1e-6);
    let flipped: Vec<f64> = sol.values.iter().map(|v| -v).collect();
    let a = fit_envelope(&sol.nodes, &sol.values, sol.window, 2.0).unwrap();
    let b = fit_envelope(&sol.nodes, &flipped, sol.window, 2.0).unwrap();
    assert!(
        phase_distance(a.alpha, sol.alpha) < 1e-14,
        "{} vs {}",
        a.alpha,
        sol.alpha
    );
    assert!(a.amplitude > 0.0);
    assert!(phase_distance(a.alpha, b.alpha) < 1e-14);
    assert!((a.amplitude + b.amplitude).abs() < 1e-14);
}
