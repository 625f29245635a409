//! Command-line entry points: feeder validation, single power flows,
//! baseline tuning, sensitivity dumps, coordinated and zoned dispatch, and
//! hosting-capacity sweeps. Every command is reproducible bit-for-bit given
//! the same inputs and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use voltq_core::coordinator::{self, DispatchStatus, VoltageLimits};
use voltq_core::harness::{self, BaselineSettings};
use voltq_core::model::io::load_feeder;
use voltq_core::powerflow::{self, count_violations};
use voltq_core::report;
use voltq_core::scenario::{self, ScenarioContext, ScenarioMode};

#[derive(Parser)]
#[command(
    name = "voltq",
    about = "Feeder simulation, coordinated VAr dispatch, and PV hosting-capacity sweeps",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalOpts,
}

#[derive(Args)]
struct GlobalOpts {
    /// Override the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for generated files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Override the dispatch iteration budget.
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    /// Override the violation thresholds as "vmin,vmax"; LP targets keep a
    /// 0.005 p.u. guard band inside them.
    #[arg(long, global = true, value_parser = parse_limits)]
    limits: Option<VoltageLimits>,
    /// Also emit machine-readable JSON errors on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
}

fn parse_limits(s: &str) -> Result<VoltageLimits, String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| "expected \"vmin,vmax\"".to_string())?;
    let v_min: f64 = lo.trim().parse().map_err(|e| format!("vmin: {e}"))?;
    let v_max: f64 = hi.trim().parse().map_err(|e| format!("vmax: {e}"))?;
    let limits = VoltageLimits::with_guard_band(v_min, v_max, 0.005);
    limits.validate()?;
    Ok(limits)
}

#[derive(Subcommand)]
enum Command {
    /// Check a feeder file against every model invariant.
    Validate { feeder: PathBuf },
    /// One base power flow for a scenario; writes voltages.csv.
    Solve { scenario: PathBuf },
    /// Tune regulator taps and capacitor states over a 24-hour day.
    Baseline {
        feeder: PathBuf,
        /// JSON file: {"seed", "month", "count_load", "count_pv"}.
        month_profiles: PathBuf,
    },
    /// Sensitivity matrix at the scenario operating point; writes
    /// sensitivity.csv.
    Sensitivity { scenario: PathBuf },
    /// Coordinated dispatch loop; writes dispatch_trace.csv, dispatch_q.csv,
    /// voltages.csv and summary.json.
    Coordinate { scenario: PathBuf },
    /// Per-phase zoned dispatch plus the full run it diverges from; writes
    /// traces, the validation voltages, and zoned_divergence.csv.
    Zoned { scenario: PathBuf },
    /// Full hosting-capacity protocol; writes hc_sweep.csv and
    /// hc_report.json.
    HcSweep {
        scenario: PathBuf,
        /// Override the scenario's control mode
        /// (upf|volt_var|coordinated|zoned).
        #[arg(long)]
        mode: Option<String>,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_UNMITIGATED: u8 = 3;

struct Failure {
    exit: u8,
    message: String,
    kind: &'static str,
}

impl Failure {
    fn validation(message: String) -> Failure {
        Failure {
            exit: EXIT_VALIDATION,
            message,
            kind: "validation",
        }
    }

    fn unmitigated(message: String) -> Failure {
        Failure {
            exit: EXIT_UNMITIGATED,
            message,
            kind: "unmitigated",
        }
    }

    fn io(message: String) -> Failure {
        Failure {
            exit: EXIT_VALIDATION,
            message,
            kind: "io",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            if cli.global.json_errors {
                let json = serde_json::json!({
                    "error": { "kind": f.kind, "message": f.message, "exit": f.exit }
                });
                eprintln!("{json}");
            }
            ExitCode::from(f.exit)
        }
    }
}

fn load_context(path: &Path, global: &GlobalOpts) -> Result<ScenarioContext, Failure> {
    let mut ctx = scenario::load_scenario(path).map_err(|e| Failure::validation(e.to_string()))?;
    if let Some(seed) = global.seed {
        ctx.scenario.seed = seed;
    }
    if let Some(iters) = global.max_iterations {
        ctx.scenario.dispatch.max_iterations = iters;
    }
    if let Some(limits) = global.limits {
        ctx.scenario.limits = limits;
    }
    Ok(ctx)
}

fn write_out(global: &GlobalOpts, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(&global.out_dir)
        .map_err(|e| Failure::io(format!("cannot create {}: {e}", global.out_dir.display())))?;
    let path = global.out_dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let global = &cli.global;
    match &cli.command {
        Command::Validate { feeder } => {
            let model = load_feeder(feeder).map_err(|e| Failure::validation(e.to_string()))?;
            let violations = model.validate();
            if violations.is_empty() {
                println!(
                    "ok: {} buses, {} phase nodes, {} loads, {} pvs",
                    model.buses().len(),
                    model.node_count(),
                    model.loads().len(),
                    model.pv_count()
                );
                Ok(())
            } else {
                for v in &violations {
                    println!("{v}");
                }
                Err(Failure::validation(format!(
                    "{} violation(s) in {}",
                    violations.len(),
                    feeder.display()
                )))
            }
        }

        Command::Solve { scenario: path } => {
            let ctx = load_context(path, global)?;
            let sc = &ctx.scenario;
            let cap_on = vec![true; ctx.model.capacitors().len()];
            let inj = scenario::injection_at(&ctx.model, sc, sc.month, sc.hour, &cap_on);
            let sol = powerflow::solve(&ctx.model, &inj, &sc.solver_options())
                .map_err(|e| Failure::unmitigated(e.to_string()))?;
            let path = write_out(global, "voltages.csv", &report::voltage_csv(&ctx.model, &sol))?;
            let summary = count_violations(&sol, sc.limits.threshold_band());
            println!(
                "solved in {} iterations: {} over, {} under, max {:.5} pu, min {:.5} pu -> {}",
                sol.iterations,
                summary.over,
                summary.under,
                summary.worst_hi,
                summary.worst_lo,
                path.display()
            );
            Ok(())
        }

        Command::Baseline {
            feeder,
            month_profiles,
        } => {
            let model = load_feeder(feeder).map_err(|e| Failure::validation(e.to_string()))?;
            if !model.is_valid() {
                return Err(Failure::validation(format!(
                    "feeder has {} violation(s); run `voltq validate` for details",
                    model.validate().len()
                )));
            }
            let input = BaselineInput::load(month_profiles)?;
            let sc = input.as_scenario(feeder, global.seed);
            let limits = global.limits.unwrap_or(sc.limits);
            let settings =
                harness::tune_baseline(&model, &sc, sc.month, &limits, &sc.solver_options());

            let json = serde_json::json!({
                "month": sc.month,
                "regulators": model
                    .regulators()
                    .iter()
                    .zip(&settings.taps)
                    .map(|(r, &tap)| serde_json::json!({ "id": r.id, "tap_ratio": tap }))
                    .collect::<Vec<_>>(),
                "capacitors": model
                    .capacitors()
                    .iter()
                    .zip(&settings.cap_on)
                    .map(|(c, &on)| serde_json::json!({ "id": c.id, "on": on }))
                    .collect::<Vec<_>>(),
                "residual_violations": settings.residual_violations,
            });
            let text = serde_json::to_string_pretty(&json).unwrap();
            let path = write_out(global, "baseline_settings.json", &(text + "\n"))?;
            println!(
                "baseline tuned: residual violations {} -> {}",
                settings.residual_violations,
                path.display()
            );
            Ok(())
        }

        Command::Sensitivity { scenario: path } => {
            let ctx = load_context(path, global)?;
            let sc = &ctx.scenario;
            let cap_on = vec![true; ctx.model.capacitors().len()];
            let inj = scenario::injection_at(&ctx.model, sc, sc.month, sc.hour, &cap_on);
            let sm = voltq_core::sensitivity::build(
                &ctx.model,
                &inj,
                sc.dispatch.delta_q_kvar,
                &sc.solver_options(),
            )
            .map_err(|e| Failure::unmitigated(e.to_string()))?;
            let path =
                write_out(global, "sensitivity.csv", &report::sensitivity_csv(&ctx.model, &sm))?;
            println!(
                "sensitivity matrix {}x{} -> {}",
                sm.num_nodes(),
                sm.num_pvs(),
                path.display()
            );
            Ok(())
        }

        Command::Coordinate { scenario: path } => {
            let ctx = load_context(path, global)?;
            let sc = &ctx.scenario;
            let cap_on = vec![true; ctx.model.capacitors().len()];
            let inj = scenario::injection_at(&ctx.model, sc, sc.month, sc.hour, &cap_on);
            let result =
                coordinator::dispatch(&ctx.model, &inj, &sc.limits, &sc.dispatch_options())
                    .map_err(|e| Failure::unmitigated(e.to_string()))?;

            write_out(global, "dispatch_trace.csv", &report::trace_csv(&result))?;
            write_out(global, "dispatch_q.csv", &report::dispatch_csv(&ctx.model, &result))?;
            write_out(
                global,
                "voltages.csv",
                &report::voltage_csv(&ctx.model, &result.final_solution),
            )?;
            write_out(global, "summary.json", &dispatch_summary(&ctx, &result))?;

            let last = result.final_state.history.last().unwrap();
            println!(
                "dispatch {:?} after {} iteration(s): violations {}, max {:.5} pu, total |Q| {:.2} kVAr",
                result.status,
                result.final_state.iteration,
                last.violations,
                last.max_vpu,
                last.total_abs_q_kvar
            );
            if result.status == DispatchStatus::Mitigated {
                Ok(())
            } else {
                Err(Failure::unmitigated(format!(
                    "dispatch ended {:?} with {} violation(s)",
                    result.status, last.violations
                )))
            }
        }

        Command::Zoned { scenario: path } => {
            let ctx = load_context(path, global)?;
            let sc = &ctx.scenario;
            let cap_on = vec![true; ctx.model.capacitors().len()];
            let inj = scenario::injection_at(&ctx.model, sc, sc.month, sc.hour, &cap_on);
            let opts = sc.dispatch_options();

            let zoned = coordinator::dispatch_zoned(&ctx.model, &inj, &sc.limits, &opts)
                .map_err(|e| Failure::unmitigated(e.to_string()))?;
            let full = coordinator::dispatch(&ctx.model, &inj, &sc.limits, &opts)
                .map_err(|e| Failure::unmitigated(e.to_string()))?;

            for (result, name) in zoned.per_phase.iter().zip([
                "zoned_trace_a.csv",
                "zoned_trace_b.csv",
                "zoned_trace_c.csv",
            ]) {
                write_out(global, name, &report::trace_csv(result))?;
            }
            write_out(
                global,
                "zoned_validation.csv",
                &report::voltage_csv(&ctx.model, &zoned.validation),
            )?;
            write_out(
                global,
                "zoned_divergence.csv",
                &report::zoned_divergence_csv(&ctx.model, &zoned, &full),
            )?;

            println!(
                "zoned: per-phase statuses {:?}/{:?}/{:?}, validation flow leaves {} violation(s); full dispatch: {:?}",
                zoned.per_phase[0].status,
                zoned.per_phase[1].status,
                zoned.per_phase[2].status,
                zoned.residual_violations,
                full.status
            );
            if zoned.residual_violations == 0 {
                Ok(())
            } else {
                Err(Failure::unmitigated(format!(
                    "zoned validation flow leaves {} violation(s)",
                    zoned.residual_violations
                )))
            }
        }

        Command::HcSweep {
            scenario: path,
            mode,
        } => {
            let ctx = load_context(path, global)?;
            let mut sc = ctx.scenario.clone();
            if let Some(m) = mode {
                sc.mode = match m.as_str() {
                    "upf" => ScenarioMode::Upf,
                    "volt_var" => ScenarioMode::VoltVar,
                    "coordinated" => ScenarioMode::Coordinated,
                    "zoned" => ScenarioMode::Zoned,
                    other => {
                        return Err(Failure::validation(format!(
                            "unknown mode '{other}' (expected upf|volt_var|coordinated|zoned)"
                        )))
                    }
                };
            }

            let mut settings: BTreeMap<u8, BaselineSettings> = BTreeMap::new();
            for &month in &sc.grid.months {
                settings.insert(
                    month,
                    harness::tune_baseline(
                        &ctx.base_model,
                        &sc,
                        month,
                        &sc.limits,
                        &sc.solver_options(),
                    ),
                );
            }

            let report = harness::hc_sweep(
                &ctx.base_model,
                &sc,
                &sc.placement,
                &sc.mode,
                &settings,
                &sc.limits,
                &sc.dispatch_options(),
            );

            let mut csv = String::from("level_kw,mode,month,hour,violations,max_vpu,total_q_kvar\n");
            for row in &report.levels {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    report::fmt_sig(row.level_kw, 9),
                    mode_name(&sc.mode),
                    row.month,
                    row.hour,
                    row.violations,
                    report::fmt_sig(row.max_vpu, 9),
                    report::fmt_sig(row.total_q_kvar, 9),
                )
                .unwrap();
            }
            write_out(global, "hc_sweep.csv", &csv)?;
            let json =
                serde_json::to_string_pretty(&report).map_err(|e| Failure::io(e.to_string()))?;
            write_out(global, "hc_report.json", &(json + "\n"))?;

            println!(
                "hc ({}, {:?} placement): {} kW added before first violation, hc {} kW = {:.1}% of peak",
                mode_name(&sc.mode),
                report.placement,
                report.added_kw_at_first_violation,
                report.hc_kw,
                report.hc_percent * 100.0
            );
            Ok(())
        }
    }
}

fn mode_name(mode: &ScenarioMode) -> &'static str {
    match mode {
        ScenarioMode::Upf => "upf",
        ScenarioMode::VoltVar => "volt_var",
        ScenarioMode::FixedPf { .. } => "fixed_pf",
        ScenarioMode::Coordinated => "coordinated",
        ScenarioMode::Zoned => "zoned",
    }
}

/// Input for `voltq baseline`: the synthetic-profile parameters of one month.
#[derive(serde::Deserialize)]
struct BaselineInput {
    seed: u64,
    month: u8,
    #[serde(default = "default_count_load")]
    count_load: usize,
    #[serde(default = "default_count_pv")]
    count_pv: usize,
}

fn default_count_load() -> usize {
    5
}
fn default_count_pv() -> usize {
    6
}

impl BaselineInput {
    fn load(path: &Path) -> Result<BaselineInput, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::validation(format!("cannot parse {}: {e}", path.display())))
    }

    fn as_scenario(&self, feeder: &Path, seed_override: Option<u64>) -> scenario::Scenario {
        let mut sc: scenario::Scenario = serde_json::from_str(&format!(
            r#"{{ "feeder": "{}", "seed": {} }}"#,
            feeder.display(),
            seed_override.unwrap_or(self.seed)
        ))
        .expect("scenario template is valid");
        sc.month = self.month;
        sc.profiles.count_load = self.count_load;
        sc.profiles.count_pv = self.count_pv;
        sc
    }
}

fn dispatch_summary(ctx: &ScenarioContext, result: &coordinator::DispatchResult) -> String {
    let last = result.final_state.history.last().unwrap();
    let json = serde_json::json!({
        "status": result.status,
        "iterations": result.final_state.iteration,
        "violations": last.violations,
        "max_vpu": last.max_vpu,
        "min_vpu": last.min_vpu,
        "total_abs_q_kvar": last.total_abs_q_kvar,
        "pv_count": ctx.model.pv_count(),
        "active_pv_count": result
            .final_state
            .q
            .iter()
            .filter(|q| q.abs() > 1e-6)
            .count(),
    });
    serde_json::to_string_pretty(&json).unwrap() + "\n"
}
