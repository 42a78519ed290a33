//! One function per subcommand. Each writes its artifacts and returns a
//! JSON summary for the manifest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use weakkam::characteristics::{classical_patch, initial_fan, integrate, point_fan, CharState, CharTrajectory};
use weakkam::convergence::{limsup_from_report, run_to_stationary, ConvergenceOptions, ConvergenceReport};
use weakkam::fd_oracle::{lf_evolve, LFConfig};
use weakkam::hamiltonian::{calibrate_alpha, critical_value, finite_diff_check, validate_hypotheses, SampleSpec};
use weakkam::legendre::LagrangianView;
use weakkam::semigroup::{evolve, evolve_with, EvolveOptions, SemigroupState};
use weakkam::{Error, Execution, GridFn};

use crate::config::{FanSource, Format, RunConfig};
use crate::output::Output;
use crate::CliError;

/// Largest tolerated error of the Legendre involution and of the analytic
/// partials in `validate`.
const VALIDATE_TOL: f64 = 1e-6;
const VALIDATE_POINTS: usize = 100;

pub struct Outcome {
    pub summary: Value,
    /// Set when a check failed; the run itself completed.
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, failure: None }
    }
}

pub fn validate(cfg: &RunConfig, out: &mut Output) -> Result<Outcome, CliError> {
    let h = cfg.model()?;
    let spec = SampleSpec {
        period: cfg.grid.period,
        ..Default::default()
    };
    let report = validate_hypotheses(&h, &spec)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let pts: Vec<(f64, f64, f64)> = (0..VALIDATE_POINTS)
        .map(|_| {
            (
                rng.random_range(0.0..cfg.grid.period),
                rng.random_range(-2.0..2.0),
                rng.random_range(-3.0..3.0),
            )
        })
        .collect();
    let involution = LagrangianView::numeric(&h).verify_involution(&pts)?;
    let partials = finite_diff_check(&h, &pts)?;

    let mut failed: Vec<String> = report.failures().iter().map(|c| c.name.clone()).collect();
    if involution > VALIDATE_TOL {
        failed.push(format!("legendre involution {involution:e}"));
    }
    if partials > VALIDATE_TOL {
        failed.push(format!("finite differences {partials:e}"));
    }
    let summary = json!({
        "model": h.label(),
        "lambda": h.lambda(),
        "hypotheses": report,
        "involution_error": involution,
        "finite_diff_error": partials,
        "tolerance": VALIDATE_TOL,
        "passed": failed.is_empty(),
    });
    out.write_json("validation.json", &summary)?;
    for c in report.checks() {
        println!("{} {}: worst {:e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.worst);
    }
    println!("{} involution: {involution:e}", verdict(involution <= VALIDATE_TOL));
    println!("{} finite differences: {partials:e}", verdict(partials <= VALIDATE_TOL));
    Ok(Outcome {
        failure: (!failed.is_empty()).then(|| failed.join(", ")),
        summary,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn evolve_cmd(cfg: &RunConfig, exec: Execution, out: &mut Output) -> Result<Outcome, CliError> {
    let h = cfg.model()?;
    let phi = cfg.phi()?;
    let dt = cfg.scheme.dt;
    let every = if cfg.run.snapshot_every > 0.0 {
        ((cfg.run.snapshot_every / dt).round() as usize).max(1)
    } else {
        usize::MAX
    };
    let mut slices: Vec<(f64, GridFn)> = vec![(0.0, phi.clone())];
    let opts = EvolveOptions {
        step: cfg.step_options(exec),
        record_history: false,
    };
    let mut k = 0;
    let state = evolve_with(&phi, cfg.run.t_end, dt, &h, &opts, |s| {
        k += 1;
        if k % every == 0 {
            slices.push((s.t, s.u.clone()));
        }
        Ok(())
    })?;
    if slices.last().is_none_or(|(t, _)| *t != state.t) {
        slices.push((state.t, state.u.clone()));
    }

    if cfg.wants(Format::Csv) {
        out.write_with("final.csv", |w| state.u.write_csv(w))?;
        out.write_with("diagnostics.csv", |w| state.write_diagnostics_csv(w))?;
        let grid = *phi.grid();
        let rows: Vec<(f64, f64, f64)> = slices
            .iter()
            .flat_map(|(t, u)| grid.nodes().zip(u.values()).map(move |(x, v)| (*t, x, *v)))
            .collect();
        out.write_rows("slices.csv", &["t", "x", "u"], &rows)?;
    }
    if cfg.wants(Format::Json) {
        out.write_json("state.json", &state)?;
    }
    let max_picard = state.diagnostics.iter().map(|d| d.picard_iters).max().unwrap_or(0);
    println!(
        "t = {}: min {:.6e}, max {:.6e}, sup norm {:.6e}",
        state.t,
        state.u.min(),
        state.u.max(),
        state.u.sup_norm()
    );
    Ok(Outcome::ok(json!({
        "t": state.t,
        "steps": state.diagnostics.len(),
        "min": state.u.min(),
        "max": state.u.max(),
        "sup_norm": state.u.sup_norm(),
        "max_picard_iters": max_picard,
        "v_bound": state.v_bound,
    })))
}

fn write_report(cfg: &RunConfig, report: &ConvergenceReport, out: &mut Output) -> Result<(), CliError> {
    if cfg.wants(Format::Csv) {
        out.write_with("u_infty.csv", |w| report.write_csv(w))?;
        let tail: Vec<(f64, f64)> = report.tail_history.iter().map(|e| (e.t, e.sup_dist_to_final)).collect();
        out.write_rows("tail.csv", &["t", "sup_dist_to_final"], &tail)?;
    }
    if cfg.wants(Format::Json) {
        out.write_json("report.json", report)?;
    }
    Ok(())
}

pub fn stationary(cfg: &RunConfig, exec: Execution, out: &mut Output) -> Result<Outcome, CliError> {
    let h = cfg.model()?;
    let phi = cfg.phi()?;
    let opts = ConvergenceOptions {
        dt: cfg.scheme.dt,
        check_every: cfg.run.check_every,
        stat_tol: cfg.run.stat_tol,
        t_max: cfg.run.t_max,
        step: cfg.step_options(exec),
    };
    let report = match run_to_stationary(&phi, &h, &opts) {
        Ok(r) => r,
        Err(Error::NotStationary { t_max, last_rate, partial }) => {
            write_report(cfg, &partial, out)?;
            return Err(CliError::Runtime(format!(
                "not stationary by t = {t_max} (last rate {last_rate:e}); partial report written"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_report(cfg, &report, out)?;
    let limsup = limsup_from_report(&report, &h, &opts)?;
    let gap = limsup.limit.sup_dist(&report.u_infty)?;
    if cfg.wants(Format::Csv) {
        let grid = *phi.grid();
        let rows: Vec<(f64, f64, f64)> = grid
            .nodes()
            .zip(limsup.u_bar.values().iter().zip(limsup.limit.values()))
            .map(|(x, (a, b))| (x, *a, *b))
            .collect();
        out.write_rows("limsup.csv", &["x", "u_bar", "limit"], &rows)?;
    }
    if cfg.wants(Format::Json) {
        out.write_json("limsup.json", &limsup)?;
    }
    println!(
        "stationary at t = {}: sup norm {:.6e}, median residual {:.3e}, max residual {:.3e}",
        report.t_star,
        report.u_infty.sup_norm(),
        report.median_residual(),
        report.max_residual()
    );
    println!("limsup limit within {gap:.3e} of u_infty");
    Ok(Outcome::ok(json!({
        "t_star": report.t_star,
        "sup_norm": report.u_infty.sup_norm(),
        "median_residual": report.median_residual(),
        "max_residual": report.max_residual(),
        "monotone_envelope_ok": report.monotone_envelope_ok,
        "sup_norm_ceiling": report.sup_norm_ceiling,
        "limsup_max_rise": limsup.max_rise,
        "limsup_max_ascent": limsup.max_ascent,
        "limsup_gap": gap,
    })))
}

fn fan(cfg: &RunConfig) -> Result<Vec<CharState>, CliError> {
    let c = &cfg.characteristics;
    match c.source {
        FanSource::Point => {
            let ps: Vec<f64> = if c.p_count == 1 {
                vec![c.p_min]
            } else {
                (0..c.p_count)
                    .map(|k| c.p_min + (c.p_max - c.p_min) * k as f64 / (c.p_count - 1) as f64)
                    .collect()
            };
            Ok(point_fan(c.x0, c.u0, &ps))
        }
        FanSource::Initial => {
            let grid = cfg.grid()?;
            match cfg.closed_form() {
                Some((f, df)) => Ok(initial_fan(&grid, f, df)),
                None => {
                    // centred differences of the nodal data
                    let phi = cfg.phi()?;
                    let slopes: Vec<f64> = (0..grid.n())
                        .map(|i| {
                            let (pm, pp) = phi.one_sided_slopes(i);
                            0.5 * (pm + pp)
                        })
                        .collect();
                    Ok(grid
                        .nodes()
                        .enumerate()
                        .map(|(i, x)| CharState::new(x, slopes[i], phi.values()[i]))
                        .collect())
                }
            }
        }
    }
}

pub fn characteristics(cfg: &RunConfig, exec: Execution, out: &mut Output) -> Result<Outcome, CliError> {
    let c = &cfg.characteristics;
    if c.compare && c.source == FanSource::Point {
        return Err(CliError::Config("characteristics.compare needs source = \"initial\"".into()));
    }
    let h = cfg.model()?;
    let starts = fan(cfg)?;
    let mut summary = json!({ "trajectories": starts.len(), "t_end": c.t_end });
    let trajectories: Vec<CharTrajectory> = if c.compare {
        let patch = match classical_patch(&h, &starts, c.t_end, c.dt, Some(cfg.grid.period), exec) {
            Ok(p) => p,
            Err(Error::Caustic { t }) => {
                return Err(CliError::Runtime(format!("characteristics cross at t = {t}; no classical patch")));
            }
            Err(e) => return Err(e.into()),
        };
        let phi = cfg.phi()?;
        let opts = EvolveOptions {
            step: cfg.step_options(exec),
            record_history: false,
        };
        let u = evolve(&phi, c.t_end, cfg.scheme.dt, &h, &opts)?.u;
        let gap = patch.max_gap(&u);
        println!("classical patch vs semigroup at t = {}: max gap {gap:.3e}", c.t_end);
        summary["max_gap"] = json!(gap);
        if cfg.wants(Format::Json) {
            out.write_json("patch.json", &json!({ "t_end": c.t_end, "max_gap": gap }))?;
        }
        patch.trajectories
    } else {
        starts
            .iter()
            .map(|s| integrate(&h, *s, c.t_end, c.dt))
            .collect::<weakkam::Result<Vec<_>>>()?
    };

    if cfg.wants(Format::Csv) {
        let grid = cfg.grid()?;
        let rows: Vec<(usize, f64, f64, f64, f64, f64)> = trajectories
            .iter()
            .enumerate()
            .flat_map(|(id, tr)| {
                let tr = tr.wrapped(&grid);
                tr.times
                    .iter()
                    .zip(&tr.states)
                    .zip(&tr.energies)
                    .map(|((t, s), e)| (id, *t, s.x, s.p, s.u, *e))
                    .collect::<Vec<_>>()
            })
            .collect();
        out.write_rows("trajectories.csv", &["id", "t", "x", "p", "u", "H"], &rows)?;
    }
    println!("integrated {} characteristics to t = {}", trajectories.len(), c.t_end);
    Ok(Outcome::ok(summary))
}

pub fn critical(cfg: &RunConfig, out: &mut Output) -> Result<Outcome, CliError> {
    let mut model = cfg.clone();
    model.model.calibrate = false;
    let mut h = model.model()?;
    let grid = cfg.grid()?;
    let alpha = calibrate_alpha(&mut h, &grid, cfg.model.calib_tol)?;
    let c = critical_value(&h, alpha, &grid)?;
    let summary = json!({
        "model": h.label(),
        "alpha": alpha,
        "critical_value_at_alpha": c,
        "tolerance": cfg.model.calib_tol,
        "grid_n": grid.n(),
    });
    out.write_json("critical.json", &summary)?;
    println!("alpha = {alpha:.12} (critical value there {c:e})");
    Ok(Outcome::ok(summary))
}

pub fn oracle_compare(cfg: &RunConfig, exec: Execution, out: &mut Output) -> Result<Outcome, CliError> {
    let h = cfg.model()?;
    let phi = cfg.phi()?;
    let dt = cfg.scheme.dt;
    let mut lf_cfg = LFConfig::auto(&phi, &h, cfg.oracle.cfl)?;
    lf_cfg.execution = exec;
    let step = cfg.step_options(exec);

    let mut state = SemigroupState::new(phi.clone());
    let mut lf = phi.clone();
    let mut t_lf = 0.0;
    let mut rows = Vec::new();
    for &t in &cfg.oracle.times {
        while state.t < t - 0.5 * dt {
            state.step(&h, dt, &step)?;
        }
        lf = lf_evolve(&lf, t - t_lf, &h, &lf_cfg)?;
        t_lf = t;
        let d = state.u.sup_dist(&lf)?;
        println!("t = {t}: sup distance {d:.3e}");
        rows.push((t, d));
    }
    if cfg.wants(Format::Csv) {
        out.write_rows("oracle.csv", &["t", "sup_dist"], &rows)?;
    }
    let summary = json!({
        "theta": lf_cfg.theta(),
        "lf_dt": lf_cfg.dt(),
        "distances": rows,
    });
    if cfg.wants(Format::Json) {
        out.write_json("oracle.json", &summary)?;
    }
    Ok(Outcome::ok(summary))
}
