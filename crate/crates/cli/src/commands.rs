//! The subcommands. Each one computes everything first and returns the
//! artifacts as bytes, so a failed run leaves nothing behind.

use std::fs::File;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use mfg_kinetic::mc::{
    empirical_error_rate_fit, mc_cost_estimate, simulate_coupled_with, write_stats_csv, SimOptions,
};
use mfg_kinetic::mfg::{self, check_monotonicity, compute_tstar};
use mfg_kinetic::nplayer::{cost_under_symmetric_feedback, nash_gap_table};
use mfg_kinetic::{evaluate_cost, fmt_f64, FeedbackPolicy, MeasureFlow, MfgError, ValueFunction};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::Loaded;
use crate::{CliError, Diag, Outcome};

type Res<T> = Result<T, CliError>;

/// Equilibrium flow and feedback used by the downstream commands.
struct Solution {
    m: MeasureFlow,
    value: ValueFunction,
    policy: FeedbackPolicy,
    converged: bool,
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable artifact");
    out.push(b'\n');
    out
}

fn csv_bytes<F>(write: F) -> Res<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> mfg_kinetic::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn tstar_entry(loaded: &Loaded) -> Value {
    match compute_tstar(&loaded.model) {
        Ok(r) => json!({
            "available": true,
            "report": r,
            "horizon": loaded.model.horizon(),
            "horizon_below_t_star": loaded.model.horizon() < r.t_star,
        }),
        Err(e) => json!({ "available": false, "reason": e.to_string() }),
    }
}

/// Runs the Picard solver and adds `m.csv`, `value.csv`, `policy.csv` and
/// `meta.json` to `outcome`.
fn solve_into(loaded: &Loaded, diag: &Diag, command: &str, outcome: &mut Outcome) -> Res<Solution> {
    let opts = loaded.solve_options();
    let sol = mfg::solve_mfg(&loaded.model, &opts)?;
    diag.say(format!(
        "picard: {} iterations, residual {:e}, converged {}",
        sol.iterations, sol.residual, sol.converged
    ));
    outcome.files.push(("m.csv", csv_bytes(|b| sol.m.write_csv(b))?));
    outcome.files.push(("value.csv", csv_bytes(|b| sol.value.write_csv(b))?));
    outcome.files.push(("policy.csv", csv_bytes(|b| sol.policy.write_csv(b))?));
    let meta = json!({
        "command": command,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "residuals": sol.residuals,
        "damping": opts.damping,
        "tol": opts.tol,
        "max_iter": opts.max_iter,
        "d": loaded.model.d(),
        "horizon": loaded.model.horizon(),
        "n_steps": loaded.model.grid.n_steps,
        "tstar": tstar_entry(loaded),
        "model": loaded.model.spec,
        "created_unix": unix_time(),
    });
    outcome.files.push(("meta.json", to_json(&meta)));
    outcome.converged &= sol.converged;
    outcome.summary.insert("iterations".into(), sol.iterations.into());
    outcome.summary.insert("residual".into(), sol.residual.into());
    Ok(Solution {
        m: sol.m,
        value: sol.value,
        policy: sol.policy,
        converged: sol.converged,
    })
}

fn open(dir: &Path, name: &str) -> Res<File> {
    let path = dir.join(name);
    File::open(&path).map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))
}

/// Reads the artifacts of an earlier `solve-mfg` run.
fn load_solution(loaded: &Loaded, dir: &Path) -> Res<Solution> {
    let model = &loaded.model;
    let m = MeasureFlow::read_csv(open(dir, "m.csv")?)?;
    if *m.grid() != model.grid || m.dim() != model.d() {
        return Err(CliError::Validation(format!(
            "{}/m.csv does not match the model grid",
            dir.display()
        )));
    }
    let value = ValueFunction::read_csv(open(dir, "value.csv")?, model.grid)?;
    let policy = FeedbackPolicy::read_csv(open(dir, "policy.csv")?, &model.spec, model.grid)?;
    let converged = match open(dir, "meta.json") {
        Ok(f) => {
            let meta: Value = serde_json::from_reader(f).map_err(MfgError::from)?;
            meta.get("converged").and_then(Value::as_bool).unwrap_or(false)
        }
        Err(_) => true,
    };
    Ok(Solution {
        m,
        value,
        policy,
        converged,
    })
}

pub fn solve_mfg(loaded: &Loaded, diag: &Diag) -> Res<Outcome> {
    let mut outcome = Outcome::default();
    let sol = solve_into(loaded, diag, "solve-mfg", &mut outcome)?;
    outcome.summary.insert("W0".into(), json!(sol.value.initial()));
    outcome.summary.insert("m_T".into(), json!(sol.m.terminal().as_slice()));
    Ok(outcome)
}

pub fn nash_gap(loaded: &Loaded, solution: Option<&Path>, diag: &Diag) -> Res<Outcome> {
    let mut outcome = Outcome::default();
    let sol = match solution {
        Some(dir) => {
            let s = load_solution(loaded, dir)?;
            outcome.converged &= s.converged;
            s
        }
        None => solve_into(loaded, diag, "nash-gap", &mut outcome)?,
    };
    let table = nash_gap_table(&loaded.model, &sol.policy, &loaded.run.n_list)?;
    for r in &table.rows {
        diag.say(format!("N = {:>4}: epsilon = {:e}", r.n, r.epsilon));
    }
    outcome.files.push(("nash_gap.csv", csv_bytes(|b| table.write_csv(b))?));
    outcome.summary.insert("slope".into(), json!(table.slope));
    outcome.summary.insert("rows".into(), json!(table.rows));
    Ok(outcome)
}

pub fn mc_converge(loaded: &Loaded, seed: u64, event_log: bool, diag: &Diag) -> Res<Outcome> {
    let mut outcome = Outcome::default();
    let sol = solve_into(loaded, diag, "mc-converge", &mut outcome)?;
    let checkpoints = loaded.checkpoints();
    let opts = SimOptions {
        stream_permutation: None,
        record_events: event_log,
    };
    let mut runs = Vec::new();
    for &n in &loaded.run.mc_n_list {
        let run = simulate_coupled_with(
            &loaded.model,
            &sol.policy,
            &sol.m,
            n,
            loaded.run.replications,
            seed,
            &checkpoints,
            &opts,
        )?;
        diag.say(format!(
            "N = {n:>5}: max E|mu - m| = {:e}, max E|X - Y| = {:e}",
            run.max_mu_err(),
            run.max_x_err()
        ));
        if event_log {
            let mut buf = Vec::new();
            run.write_event_log(&mut buf)?;
            outcome.extra_files.push((format!("events_N{n}.jsonl"), buf));
        }
        runs.push(run);
    }
    outcome.files.push(("mc_stats.csv", csv_bytes(|b| write_stats_csv(&runs, b))?));
    let fit = match empirical_error_rate_fit(&runs) {
        Ok(fit) => {
            outcome.files.push(("mc_fit.json", to_json(&fit)));
            json!(fit)
        }
        Err(e) => {
            diag.say(format!("no rate fit: {e}"));
            Value::Null
        }
    };
    outcome.summary.insert("seed".into(), seed.into());
    outcome.summary.insert("fit".into(), fit);
    Ok(outcome)
}

pub fn check_mono(loaded: &Loaded, seed: u64) -> Res<Outcome> {
    let mut outcome = Outcome::default();
    let report = check_monotonicity(&loaded.model, loaded.run.mono_pairs, seed)?;
    outcome.files.push(("monotonicity.json", to_json(&report)));
    outcome.summary.insert("monotonicity".into(), json!(report));
    Ok(outcome)
}

pub fn tstar(loaded: &Loaded) -> Res<Outcome> {
    let mut outcome = Outcome::default();
    let report = compute_tstar(&loaded.model)?;
    let horizon = loaded.model.horizon();
    let doc = json!({
        "report": report,
        "horizon": horizon,
        "horizon_below_t_star": horizon < report.t_star,
    });
    outcome.files.push(("tstar.json", to_json(&doc)));
    outcome.summary.insert("t_star".into(), report.t_star.into());
    outcome.summary.insert("horizon_below_t_star".into(), (horizon < report.t_star).into());
    Ok(outcome)
}

#[derive(Serialize)]
struct CostRow {
    n: usize,
    cost_exact: f64,
    cost_mc: f64,
    se_mc: f64,
    ci_mc: f64,
    z: f64,
}

pub fn eval_cost(loaded: &Loaded, seed: u64, diag: &Diag) -> Res<Outcome> {
    let mut outcome = Outcome::default();
    let sol = solve_into(loaded, diag, "eval-cost", &mut outcome)?;
    let model = &loaded.model;
    let reps = loaded.run.replications;
    let rows: Vec<CostRow> = loaded
        .run
        .n_list
        .par_iter()
        .map(|&n| -> mfg_kinetic::Result<CostRow> {
            let exact = cost_under_symmetric_feedback(model, &sol.policy, n)?;
            let mc = mc_cost_estimate(model, &sol.policy, n, reps, seed)?;
            Ok(CostRow {
                n,
                cost_exact: exact,
                cost_mc: mc.mean,
                se_mc: mc.std_error,
                ci_mc: mc.ci_half_width,
                z: (mc.mean - exact) / mc.std_error,
            })
        })
        .collect::<mfg_kinetic::Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Solver(MfgError::from(e));
    w.write_record(["N", "cost_exact", "cost_mc", "se_mc", "ci_mc", "z"]).map_err(io)?;
    for r in &rows {
        w.write_record([
            r.n.to_string(),
            fmt_f64(r.cost_exact),
            fmt_f64(r.cost_mc),
            fmt_f64(r.se_mc),
            fmt_f64(r.ci_mc),
            fmt_f64(r.z),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Solver(MfgError::Io(e.into_error())))?;
    outcome.files.push(("eval_cost.csv", bytes));
    let mean_field = evaluate_cost(model, &sol.m, &sol.policy)?;
    outcome.summary.insert("seed".into(), seed.into());
    outcome.summary.insert("cost_mean_field".into(), mean_field.into());
    outcome.summary.insert("rows".into(), json!(rows));
    Ok(outcome)
}
