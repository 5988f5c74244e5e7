//! Command-line front end. Every subcommand resolves its parameters from
//! flags layered over an optional flat config file, runs the corresponding
//! library operation, and emits CSV (to --out or stdout) plus an optional
//! JSON summary. Physical units live here only: σ and packet lengths in
//! ms, powers in mW, energy in mW·ms; the library sees slot-normalized
//! values.
//!
//! Exit codes: 0 success, 1 validation/parse error, 2 infeasible
//! optimization, 3 simulator horizon exceeded.

mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{ConfigEcho, ConfigFile};
use ealoha_core::cb;
use ealoha_core::compare::{self, CaseStudyParams, MapParams};
use ealoha_core::lambertw;
use ealoha_core::model::{CbParams, CouplingParams, EnergyBudget, EnergyProfile, PbParams};
use ealoha_core::optimizer::{self, OptResult, Thresholds};
use ealoha_core::report::float;
use ealoha_core::sim::{self, SimConfig};
use ealoha_core::Regime;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_INVALID: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_HORIZON: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ealoha",
    version,
    about = "Lifetime-throughput analysis, optimization, comparison and simulation \
             of connection-based and packet-based slotted Aloha"
)]
struct Cli {
    /// Flat key = value config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the CSV output to this path instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print a JSON summary (with a meta block) to stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Residual tolerance for Lambert W evaluation.
    #[arg(long, global = true)]
    wtol: Option<f64>,
    /// |Δp| tolerance for critical-probability bisection.
    #[arg(long, global = true)]
    roottol: Option<f64>,
    /// Default grid granularity for sweeps.
    #[arg(long, global = true)]
    gridstep: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Cb,
    Pb,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Auto,
    Saturated,
    Unsaturated,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepVar {
    Q,
    T0,
}

/// Model parameters shared by the analytic and simulation subcommands.
#[derive(Args, Clone)]
struct ParamArgs {
    /// Scheme: cb (connection-based) or pb (packet-based).
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Number of nodes n.
    #[arg(long)]
    n: Option<u32>,
    /// CB data span M in slots.
    #[arg(long)]
    m: Option<f64>,
    /// CB signaling overhead δ in slots.
    #[arg(long)]
    delta: Option<f64>,
    /// Packets per CB connection K.
    #[arg(long)]
    k: Option<u32>,
    /// PB packet length L_P (ms).
    #[arg(long)]
    lp: Option<f64>,
    /// CB slot length σ_N (ms).
    #[arg(long = "sigma-n")]
    sigma_n: Option<f64>,
    /// PB per-packet overhead Δ_S,P (ms).
    #[arg(long = "delta-sp")]
    delta_sp: Option<f64>,
    /// Per-node arrival rate λ (per slot of the chosen scheme).
    #[arg(long)]
    lambda: Option<f64>,
    /// Transmission probability q.
    #[arg(long)]
    q: Option<f64>,
    /// Battery budget E (mW·ms; E/σ at the default σ = 1).
    #[arg(long)]
    energy: Option<f64>,
    /// Transmission power P_T (mW).
    #[arg(long)]
    pt: Option<f64>,
    /// Waiting/idle power P_W (mW).
    #[arg(long)]
    pw: Option<f64>,
    /// Lifetime target T_0 (slots).
    #[arg(long)]
    t0: Option<f64>,
    /// Simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Independent simulation runs.
    #[arg(long)]
    runs: Option<u32>,
    /// Simulation horizon in slots.
    #[arg(long = "slot-cap")]
    slot_cap: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a Lambert W branch at a point.
    Lambertw {
        /// Branch: 0 (principal) or -1 (lower).
        #[arg(long, allow_hyphen_values = true)]
        branch: Option<i32>,
        /// Argument x.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
    },
    /// Success probability, throughput, lifetime, lifetime throughput and
    /// state counts at one operating point.
    Eval {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Maximize lifetime throughput subject to a lifetime target.
    Optimize {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Sweep q or t0 and emit one row per grid point.
    Sweep {
        #[command(flatten)]
        params: ParamArgs,
        /// Swept variable.
        #[arg(long, value_enum)]
        var: Option<SweepVar>,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        /// Number of grid points (default: span/gridstep, capped).
        #[arg(long)]
        points: Option<u32>,
        /// Logarithmic spacing.
        #[arg(long)]
        log: bool,
    },
    /// Compare the schemes' optimal lifetime throughput under coupled
    /// parameters.
    Compare {
        #[command(flatten)]
        params: ParamArgs,
        /// Required matched regime, or auto-detect.
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
    },
    /// Winner map over a (K, L_P) grid.
    Map {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long = "k-max")]
        k_max: Option<u32>,
        #[arg(long = "lp-from")]
        lp_from: Option<f64>,
        #[arg(long = "lp-to")]
        lp_to: Option<f64>,
        #[arg(long = "lp-points")]
        lp_points: Option<u32>,
    },
    /// Monte-Carlo simulation at one operating point.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Simulate across a q grid and compare against the closed forms.
    Validate {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated q values.
        #[arg(long = "q-grid")]
        q_grid: Option<String>,
    },
    /// Data-length threshold below which the 2-step (packet-based) scheme
    /// beats the 4-step (connection-based) one, per packet length.
    Casestudy {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long = "lp-from")]
        lp_from: Option<f64>,
        #[arg(long = "lp-to")]
        lp_to: Option<f64>,
        #[arg(long = "lp-points")]
        lp_points: Option<u32>,
    },
}

struct CliError {
    msg: String,
    code: u8,
}

impl CliError {
    fn invalid(msg: impl Into<String>) -> Self {
        CliError {
            msg: msg.into(),
            code: EXIT_INVALID,
        }
    }
}

impl From<String> for CliError {
    fn from(msg: String) -> Self {
        CliError::invalid(msg)
    }
}

/// Tabular output with a fixed column order.
struct Output {
    columns: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Output {
    fn new(columns: &'static [&'static str]) -> Self {
        Output {
            columns,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv(&self) -> String {
        let mut text = self.columns.join(",");
        text.push('\n');
        for row in &self.rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        text
    }

    fn json(&self, meta: serde_json::Value) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (col, val) in self.columns.iter().zip(row) {
                    obj.insert(col.to_string(), serde_json::Value::String(val.clone()));
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::json!({
            "meta": meta,
            "columns": self.columns,
            "rows": rows,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(EXIT_INVALID);
        }
        Err(e) => {
            // --help / --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::empty(),
    };
    let wtol = file.resolve(cli.wtol, "wtol")?.unwrap_or(1e-12);
    let roottol = file.resolve(cli.roottol, "roottol")?.unwrap_or(1e-12);
    let gridstep = file.resolve(cli.gridstep, "gridstep")?.unwrap_or(1e-5);
    let mut echo = ConfigEcho::default();
    echo.put("wtol", float(wtol));
    echo.put("roottol", float(roottol));

    let (output, seed, warn): (Output, Option<u64>, Option<(String, u8)>) = match &cli.command {
        Command::Lambertw { branch, x } => {
            let branch = file.resolve(*branch, "branch")?.unwrap_or(0);
            let x = file
                .resolve(*x, "x")?
                .ok_or_else(|| CliError::invalid("lambertw requires --x"))?;
            echo.put("branch", branch);
            echo.put("x", float(x));
            let w = match branch {
                0 => lambertw::lambert_w0_tol(x, wtol),
                -1 => lambertw::lambert_wm1_tol(x, wtol),
                other => {
                    return Err(CliError::invalid(format!(
                        "branch must be 0 or -1, got {other}"
                    )))
                }
            }
            .map_err(|e| CliError::invalid(e.to_string()))?;
            let mut out = Output::new(&["branch", "x", "w", "residual"]);
            out.push(vec![
                branch.to_string(),
                float(x),
                float(w),
                float(w * w.exp() - x),
            ]);
            (out, None, None)
        }
        Command::Eval { params } => {
            let r = Resolved::build(params, &file, &mut echo)?;
            let (params, energy) = r.scheme_setup(true)?;
            let eval = cb::evaluate(&params, &energy);
            let region = cb::steady_interval(&params);
            let counts = cb::expected_state_counts(&params, &energy);
            let mut out = Output::new(&[
                "scheme",
                "q",
                "regime",
                "p_success",
                "lambda_out",
                "lifetime",
                "lifetime_throughput",
                "region_defined",
                "q_lo",
                "q_hi",
                "p_large",
                "p_small",
                "n_idle",
                "n_waiting",
                "n_failed",
                "n_successes",
                "mu_r",
                "rho",
            ]);
            out.push(vec![
                r.scheme_name().into(),
                float(params.tx_prob),
                eval.regime.to_string(),
                float(eval.p_success),
                float(eval.lambda_out),
                float(eval.lifetime),
                float(eval.lifetime_throughput),
                region.defined.to_string(),
                float(region.q_lo),
                float(region.q_hi),
                float(region.p_large),
                float(region.p_small),
                float(counts.idle),
                float(counts.waiting),
                float(counts.failed),
                float(counts.successes),
                float(counts.service_rate),
                float(counts.offered_load),
            ]);
            (out, None, None)
        }
        Command::Optimize { params } => {
            let r = Resolved::build(params, &file, &mut echo)?;
            let (opt, thresholds) = r.optimize(roottol)?;
            let mut out = Output::new(&[
                "scheme",
                "t0",
                "feasible",
                "case",
                "regime",
                "u_max",
                "q_lo",
                "q_hi",
                "q_opt",
                "p_opt",
                "p_m",
                "lambda_m",
                "t0_star",
                "p_c",
            ]);
            let (q_lo, q_hi) = opt.q_opt.bounds();
            out.push(vec![
                r.scheme_name().into(),
                float(r.t0),
                opt.feasible.to_string(),
                opt.case.to_string(),
                opt.regime.to_string(),
                float(opt.u_max),
                float(q_lo),
                float(q_hi),
                float(opt.q_opt.representative()),
                float(opt.p_opt),
                float(thresholds.peak_p),
                float(thresholds.saturation_rate),
                float(thresholds.lifetime_knee),
                float(thresholds.critical_p.unwrap_or(f64::NAN)),
            ]);
            let warn = (!opt.feasible).then(|| {
                (
                    format!(
                        "infeasible: t0 = {} exceeds the maximum lifetime {}",
                        float(r.t0),
                        float(r.energy_profile(r.scheme_slot_len())
                            .map(|e| e.max_lifetime())
                            .unwrap_or(f64::NAN))
                    ),
                    EXIT_INFEASIBLE,
                )
            });
            (out, None, warn)
        }
        Command::Sweep {
            params,
            var,
            from,
            to,
            points,
            log,
        } => {
            let r = Resolved::build(params, &file, &mut echo)?;
            let var = match file.resolve_string(None, "var") {
                Some(ref s) if var.is_none() => match s.as_str() {
                    "q" => SweepVar::Q,
                    "t0" => SweepVar::T0,
                    other => {
                        return Err(CliError::invalid(format!("unknown sweep var `{other}`")))
                    }
                },
                _ => var.unwrap_or(SweepVar::Q),
            };
            let from = file.resolve(*from, "from")?.unwrap_or(0.0);
            let default_to = match var {
                SweepVar::Q => 1.0,
                SweepVar::T0 => r
                    .energy_profile(r.scheme_slot_len())
                    .map(|e| e.max_lifetime())
                    .unwrap_or(1.0),
            };
            let to = file.resolve(*to, "to")?.unwrap_or(default_to);
            let log = *log || file.resolve_string(None, "log").as_deref() == Some("true");
            let default_points = (((to - from).abs() / gridstep).ceil() as u32).clamp(2, 201);
            let points = file.resolve(*points, "points")?.unwrap_or(default_points);
            echo.put("var", if var == SweepVar::Q { "q" } else { "t0" });
            echo.put("from", float(from));
            echo.put("to", float(to));
            echo.put("points", points);
            let grid = make_grid(from, to, points, log)?;
            let out = match var {
                SweepVar::Q => r.sweep_q(&grid)?,
                SweepVar::T0 => r.sweep_t0(&grid, roottol)?,
            };
            (out, None, None)
        }
        Command::Compare { params, regime } => {
            let r = Resolved::build(params, &file, &mut echo)?;
            let regime = match file.resolve_string(None, "regime") {
                Some(ref s) if regime.is_none() => match s.as_str() {
                    "auto" => RegimeArg::Auto,
                    "saturated" => RegimeArg::Saturated,
                    "unsaturated" => RegimeArg::Unsaturated,
                    other => {
                        return Err(CliError::invalid(format!("unknown regime `{other}`")))
                    }
                },
                _ => regime.unwrap_or(RegimeArg::Auto),
            };
            let out = r.compare(regime)?;
            (out, None, None)
        }
        Command::Map {
            params,
            k_max,
            lp_from,
            lp_to,
            lp_points,
        } => {
            let r = Resolved::build(params, &file, &mut echo)?;
            let k_max = file.resolve(*k_max, "k-max")?.unwrap_or(16);
            let lp_from = file.resolve(*lp_from, "lp-from")?.unwrap_or(0.25);
            let lp_to = file.resolve(*lp_to, "lp-to")?.unwrap_or(10.0);
            let lp_points = file.resolve(*lp_points, "lp-points")?.unwrap_or(40);
            echo.put("k-max", k_max);
            echo.put("lp-from", float(lp_from));
            echo.put("lp-to", float(lp_to));
            echo.put("lp-points", lp_points);
            let out = r.map(k_max, lp_from, lp_to, lp_points)?;
            (out, None, None)
        }
        Command::Simulate { params } => {
            let r = Resolved::build(params, &file, &mut echo)?;
            let cfg = r.sim_config(true)?;
            let stats = sim::simulate(&cfg);
            let mut out = Output::new(&[
                "scheme",
                "q",
                "mean_lifetime",
                "mean_delivered",
                "idle_slots",
                "waiting_slots",
                "failed_slots",
                "success_slots",
                "successes",
                "collisions",
                "ci_lifetime",
                "ci_delivered",
            ]);
            out.push(
                stats
                    .csv_row()
                    .split(',')
                    .map(|s| s.to_string())
                    .collect(),
            );
            let warn = stats.horizon_hit.then(|| {
                (
                    format!("horizon: some node still alive at slot cap {}", cfg.slot_cap),
                    EXIT_HORIZON,
                )
            });
            (out, Some(r.seed), warn)
        }
        Command::Validate { params, q_grid } => {
            let r = Resolved::build(params, &file, &mut echo)?;
            let raw = file
                .resolve_string(q_grid.clone(), "q-grid")
                .ok_or_else(|| CliError::invalid("validate requires --q-grid"))?;
            let grid: Vec<f64> = raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::invalid(format!("q-grid value `{s}`: {e}")))
                })
                .collect::<Result<_, _>>()?;
            if grid.is_empty() {
                return Err(CliError::invalid("q-grid must be nonempty"));
            }
            echo.put("q-grid", raw);
            let cfg = r.sim_config(false)?;
            let report = sim::validate_against_analytic(&cfg, &grid);
            let mut out = Output::new(&[
                "scheme",
                "q",
                "regime",
                "sim_lifetime",
                "analytic_lifetime",
                "lifetime_rel_err",
                "sim_throughput",
                "analytic_throughput",
                "throughput_rel_err",
                "ci_lifetime",
                "ci_delivered",
                "empirical_ratio",
                "analytic_ratio",
                "ratio_ci_lo",
                "ratio_ci_hi",
                "ratio_within_ci",
                "max_energy_residual",
                "energy_residual_ok",
            ]);
            for line in report.to_csv(cfg.scheme).lines().skip(1) {
                out.push(line.split(',').map(|s| s.to_string()).collect());
            }
            echo.put("max_lifetime_rel_err", float(report.max_lifetime_rel_err));
            echo.put(
                "max_throughput_rel_err",
                float(report.max_throughput_rel_err),
            );
            let warn = report.horizon_hit.then(|| {
                (
                    format!("horizon: some node still alive at slot cap {}", cfg.slot_cap),
                    EXIT_HORIZON,
                )
            });
            (out, Some(r.seed), warn)
        }
        Command::Casestudy {
            params,
            lp_from,
            lp_to,
            lp_points,
        } => {
            let cs = CaseStudyParams::rasdt();
            let r = Resolved::build_with_defaults(
                params,
                &file,
                &mut echo,
                &Defaults {
                    sigma_n: cs.slot_len,
                    delta: cs.overhead_slots,
                    delta_sp: cs.pb_overhead,
                    pt: Some(cs.p_tx),
                    pw: Some(cs.p_wait),
                },
            )?;
            let study = CaseStudyParams {
                nodes: r.nodes,
                slot_len: r.slot_len,
                overhead_slots: r.overhead_slots,
                pb_overhead: r.pb_overhead,
                p_tx: r.p_tx.unwrap_or(cs.p_tx),
                p_wait: r.p_wait.unwrap_or(cs.p_wait),
            };
            let lps: Vec<f64> = if let Some(lp) = r.packet_len {
                vec![lp]
            } else {
                let from = file.resolve(*lp_from, "lp-from")?.unwrap_or(0.25);
                let to = file.resolve(*lp_to, "lp-to")?.unwrap_or(10.0);
                let pts = file.resolve(*lp_points, "lp-points")?.unwrap_or(40);
                make_grid(from, to, pts, false)?
            };
            let mut out = Output::new(&["l_p", "ln_threshold", "k_star"]);
            for lp in lps {
                let threshold = compare::pb_win_data_len_threshold(&study, lp);
                out.push(vec![float(lp), float(threshold), float(threshold / lp)]);
            }
            (out, None, None)
        }
    };

    let meta = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": echo.to_json(),
    });
    let csv = output.csv();
    match &cli.out {
        Some(path) => std::fs::write(path, &csv)
            .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))?,
        None if !cli.json => print!("{csv}"),
        None => {}
    }
    if cli.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&output.json(meta)).expect("serializable")
        );
    }
    if let Some((msg, code)) = warn {
        eprintln!("error: {msg}");
        return Ok(code);
    }
    Ok(0)
}

/// Per-subcommand fallback defaults applied below flags and config file.
struct Defaults {
    sigma_n: f64,
    delta: f64,
    delta_sp: f64,
    pt: Option<f64>,
    pw: Option<f64>,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            sigma_n: 1.0,
            delta: 0.0,
            delta_sp: 0.0,
            pt: None,
            pw: None,
        }
    }
}

/// Fully resolved parameter set after flag/file/default layering.
struct Resolved {
    scheme: SchemeArg,
    nodes: u32,
    data_slots: f64,
    overhead_slots: f64,
    slot_len: f64,
    packet_len: Option<f64>,
    pb_overhead: f64,
    packets_per_conn: u32,
    lambda: f64,
    q: Option<f64>,
    energy: Option<f64>,
    p_tx: Option<f64>,
    p_wait: Option<f64>,
    t0: f64,
    seed: u64,
    runs: u32,
    slot_cap: Option<u64>,
}

impl Resolved {
    fn build(
        params: &ParamArgs,
        file: &ConfigFile,
        echo: &mut ConfigEcho,
    ) -> Result<Self, CliError> {
        Self::build_with_defaults(params, file, echo, &Defaults::default())
    }

    fn build_with_defaults(
        params: &ParamArgs,
        file: &ConfigFile,
        echo: &mut ConfigEcho,
        defaults: &Defaults,
    ) -> Result<Self, CliError> {
        let scheme = match file.resolve_string(None, "scheme") {
            Some(ref s) if params.scheme.is_none() => match s.as_str() {
                "cb" => SchemeArg::Cb,
                "pb" => SchemeArg::Pb,
                other => return Err(CliError::invalid(format!("unknown scheme `{other}`"))),
            },
            _ => params.scheme.unwrap_or(SchemeArg::Cb),
        };
        let r = Resolved {
            scheme,
            nodes: file.resolve(params.n, "n")?.unwrap_or(100),
            data_slots: file.resolve(params.m, "m")?.unwrap_or(1.0),
            overhead_slots: file.resolve(params.delta, "delta")?.unwrap_or(defaults.delta),
            slot_len: file
                .resolve(params.sigma_n, "sigma-n")?
                .unwrap_or(defaults.sigma_n),
            packet_len: file.resolve(params.lp, "lp")?,
            pb_overhead: file
                .resolve(params.delta_sp, "delta-sp")?
                .unwrap_or(defaults.delta_sp),
            packets_per_conn: file.resolve(params.k, "k")?.unwrap_or(1),
            lambda: file.resolve(params.lambda, "lambda")?.unwrap_or(0.0),
            q: file.resolve(params.q, "q")?,
            energy: file.resolve(params.energy, "energy")?,
            p_tx: file.resolve(params.pt, "pt")?.or(defaults.pt),
            p_wait: file.resolve(params.pw, "pw")?.or(defaults.pw),
            t0: file.resolve(params.t0, "t0")?.unwrap_or(0.0),
            seed: file.resolve(params.seed, "seed")?.unwrap_or(1),
            runs: file.resolve(params.runs, "runs")?.unwrap_or(10),
            slot_cap: file.resolve(params.slot_cap, "slot-cap")?,
        };
        echo.put("scheme", r.scheme_name());
        echo.put("n", r.nodes);
        echo.put("m", float(r.data_slots));
        echo.put("delta", float(r.overhead_slots));
        echo.put("sigma-n", float(r.slot_len));
        if let Some(lp) = r.packet_len {
            echo.put("lp", float(lp));
        }
        echo.put("delta-sp", float(r.pb_overhead));
        echo.put("k", r.packets_per_conn);
        echo.put("lambda", float(r.lambda));
        if let Some(q) = r.q {
            echo.put("q", float(q));
        }
        if let Some(e) = r.energy {
            echo.put("energy", float(e));
        }
        if let Some(pt) = r.p_tx {
            echo.put("pt", float(pt));
        }
        if let Some(pw) = r.p_wait {
            echo.put("pw", float(pw));
        }
        echo.put("t0", float(r.t0));
        Ok(r)
    }

    fn scheme_name(&self) -> &'static str {
        match self.scheme {
            SchemeArg::Cb => "cb",
            SchemeArg::Pb => "pb",
        }
    }

    /// Slot length of the selected scheme; the packet-based slot is
    /// L_P + Δ_S,P when a packet length is given, 1 otherwise.
    fn scheme_slot_len(&self) -> f64 {
        match self.scheme {
            SchemeArg::Cb => self.slot_len,
            SchemeArg::Pb => self
                .packet_len
                .map(|lp| lp + self.pb_overhead)
                .unwrap_or(1.0),
        }
    }

    fn energy_profile(&self, slot_len: f64) -> Result<EnergyProfile, CliError> {
        let energy = self
            .energy
            .ok_or_else(|| CliError::invalid("missing --energy"))?;
        let p_tx = self.p_tx.ok_or_else(|| CliError::invalid("missing --pt"))?;
        let p_wait = self.p_wait.ok_or_else(|| CliError::invalid("missing --pw"))?;
        EnergyProfile::new(energy / slot_len, p_tx, p_wait)
            .map_err(|e| CliError::invalid(e.to_string()))
    }

    fn require_q(&self) -> Result<f64, CliError> {
        self.q.ok_or_else(|| CliError::invalid("missing --q"))
    }

    /// Canonical (CB-form) parameters and slot-normalized energy for the
    /// selected scheme.
    fn scheme_setup(&self, need_q: bool) -> Result<(CbParams, EnergyProfile), CliError> {
        let q = if need_q { self.require_q()? } else { 0.0 };
        let slot = self.scheme_slot_len();
        let params = match self.scheme {
            SchemeArg::Cb => CbParams::new(
                self.nodes,
                self.data_slots,
                self.overhead_slots,
                slot,
                self.lambda,
                q,
            ),
            SchemeArg::Pb => {
                PbParams::new(self.nodes, slot, self.lambda, q).map(|p| p.as_cb())
            }
        }
        .map_err(|e| CliError::invalid(e.to_string()))?;
        Ok((params, self.energy_profile(slot)?))
    }

    fn optimize(&self, roottol: f64) -> Result<(OptResult, Thresholds), CliError> {
        let slot = self.scheme_slot_len();
        let energy = self.energy_profile(slot)?;
        match self.scheme {
            SchemeArg::Cb => {
                let p = CbParams::new(
                    self.nodes,
                    self.data_slots,
                    self.overhead_slots,
                    slot,
                    self.lambda,
                    0.0,
                )
                .map_err(|e| CliError::invalid(e.to_string()))?;
                Ok((
                    optimizer::optimize_cb_tol(&p, &energy, self.t0, roottol),
                    optimizer::cb_thresholds(&p, &energy, self.t0),
                ))
            }
            SchemeArg::Pb => {
                let p = PbParams::new(self.nodes, slot, self.lambda, 0.0)
                    .map_err(|e| CliError::invalid(e.to_string()))?;
                Ok((
                    optimizer::optimize_pb(&p, &energy, self.t0),
                    optimizer::pb_thresholds(&p, &energy, self.t0),
                ))
            }
        }
    }

    fn sweep_q(&self, grid: &[f64]) -> Result<Output, CliError> {
        let (base, energy) = self.scheme_setup(false)?;
        let mut out = Output::new(&[
            "scheme",
            "q",
            "regime",
            "p_success",
            "lambda_out",
            "lifetime",
            "lifetime_throughput",
        ]);
        for &q in grid {
            if !(0.0..=1.0).contains(&q) {
                return Err(CliError::invalid(format!("swept q = {q} outside [0, 1]")));
            }
            let eval = cb::evaluate(&base.with_tx_prob(q), &energy);
            out.push(vec![
                self.scheme_name().into(),
                float(q),
                eval.regime.to_string(),
                float(eval.p_success),
                float(eval.lambda_out),
                float(eval.lifetime),
                float(eval.lifetime_throughput),
            ]);
        }
        Ok(out)
    }

    fn sweep_t0(&self, grid: &[f64], roottol: f64) -> Result<Output, CliError> {
        let mut out = Output::new(&[
            "scheme", "t0", "feasible", "case", "regime", "u_max", "q_opt", "p_opt",
        ]);
        let mut this = Resolved { t0: 0.0, ..self.clone_shallow() };
        for &t0 in grid {
            this.t0 = t0;
            let (opt, _) = this.optimize(roottol)?;
            out.push(vec![
                self.scheme_name().into(),
                float(t0),
                opt.feasible.to_string(),
                opt.case.to_string(),
                opt.regime.to_string(),
                float(opt.u_max),
                float(opt.q_opt.representative()),
                float(opt.p_opt),
            ]);
        }
        Ok(out)
    }

    fn clone_shallow(&self) -> Resolved {
        Resolved {
            scheme: self.scheme,
            nodes: self.nodes,
            data_slots: self.data_slots,
            overhead_slots: self.overhead_slots,
            slot_len: self.slot_len,
            packet_len: self.packet_len,
            pb_overhead: self.pb_overhead,
            packets_per_conn: self.packets_per_conn,
            lambda: self.lambda,
            q: self.q,
            energy: self.energy,
            p_tx: self.p_tx,
            p_wait: self.p_wait,
            t0: self.t0,
            seed: self.seed,
            runs: self.runs,
            slot_cap: self.slot_cap,
        }
    }

    fn coupling(&self) -> Result<CouplingParams, CliError> {
        let lp = self
            .packet_len
            .ok_or_else(|| CliError::invalid("missing --lp"))?;
        CouplingParams::new(
            self.packets_per_conn,
            lp,
            self.pb_overhead,
            self.slot_len,
            self.overhead_slots,
            self.lambda,
        )
        .map_err(|e| CliError::invalid(e.to_string()))
    }

    fn budget(&self) -> Result<EnergyBudget, CliError> {
        EnergyBudget::new(
            self.energy.unwrap_or(1.0),
            self.p_tx.ok_or_else(|| CliError::invalid("missing --pt"))?,
            self.p_wait
                .ok_or_else(|| CliError::invalid("missing --pw"))?,
        )
        .map_err(|e| CliError::invalid(e.to_string()))
    }

    fn compare(&self, regime: RegimeArg) -> Result<Output, CliError> {
        let coupling = self.coupling()?;
        let budget = self.budget()?;
        let (cb_regime, pb_regime) =
            compare::scheme_regimes(&coupling, self.nodes, &budget)
                .map_err(|e| CliError::invalid(e.to_string()))?;
        let declared = match regime {
            RegimeArg::Saturated => Regime::Saturated,
            RegimeArg::Unsaturated => Regime::Unsaturated,
            RegimeArg::Auto => {
                if cb_regime != pb_regime {
                    return Err(CliError::invalid(format!(
                        "schemes operate in different regimes (cb {cb_regime}, pb {pb_regime})"
                    )));
                }
                cb_regime
            }
        };
        let verdict = compare::pb_beats_cb(&coupling, self.nodes, &budget, declared)
            .map_err(|e| CliError::invalid(e.to_string()))?;
        let coupled = ealoha_core::model::couple(&coupling)
            .map_err(|e| CliError::invalid(e.to_string()))?;
        let mut out = Output::new(&[
            "k", "l_p", "m", "winner", "u_pb", "u_cb", "lhs", "rhs", "regime",
        ]);
        out.push(vec![
            self.packets_per_conn.to_string(),
            float(coupling.packet_len),
            float(coupled.data_slots),
            verdict.winner.to_string(),
            float(verdict.u_pb),
            float(verdict.u_cb),
            float(verdict.inequality_lhs),
            float(verdict.inequality_rhs),
            verdict.regime.to_string(),
        ]);
        Ok(out)
    }

    fn map(&self, k_max: u32, lp_from: f64, lp_to: f64, lp_points: u32) -> Result<Output, CliError> {
        let budget = self.budget()?;
        let mp = MapParams {
            nodes: self.nodes,
            overhead_slots: self.overhead_slots,
            slot_len: self.slot_len,
            pb_overhead: self.pb_overhead,
            arrival_rate: self.lambda,
            budget,
        };
        let ks: Vec<u32> = (1..=k_max.max(1)).collect();
        let lps = make_grid(lp_from, lp_to, lp_points, false)?;
        let cells = compare::regime_map(&ks, &lps, &mp);
        let mut out = Output::new(&[
            "k", "l_p", "m", "winner", "u_pb", "u_cb", "lhs", "rhs", "regime",
        ]);
        for line in compare::map_to_csv(&cells).lines().skip(1) {
            out.push(line.split(',').map(|s| s.to_string()).collect());
        }
        Ok(out)
    }

    fn sim_config(&self, need_q: bool) -> Result<SimConfig, CliError> {
        let q = if need_q { self.require_q()? } else { 0.0 };
        let slot = self.scheme_slot_len();
        let energy = self.energy_profile(slot)?;
        let cfg = match self.scheme {
            SchemeArg::Cb => {
                let p = CbParams::new(
                    self.nodes,
                    self.data_slots,
                    self.overhead_slots,
                    slot,
                    self.lambda,
                    q,
                )
                .map_err(|e| CliError::invalid(e.to_string()))?;
                SimConfig::cb(p, energy, self.seed, self.runs, self.slot_cap)
            }
            SchemeArg::Pb => {
                let p = PbParams::new(self.nodes, slot, self.lambda, q)
                    .map_err(|e| CliError::invalid(e.to_string()))?;
                SimConfig::pb(p, energy, self.seed, self.runs, self.slot_cap)
            }
        };
        cfg.map_err(|e| CliError::invalid(e.to_string()))
    }
}

fn make_grid(from: f64, to: f64, points: u32, log: bool) -> Result<Vec<f64>, CliError> {
    if points < 1 {
        return Err(CliError::invalid("grid needs at least one point"));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    if log && (from <= 0.0 || to <= 0.0) {
        return Err(CliError::invalid("log spacing requires positive bounds"));
    }
    let n = points as usize;
    let mut grid = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        grid.push(if log {
            (from.ln() + t * (to.ln() - from.ln())).exp()
        } else {
            from + t * (to - from)
        });
    }
    Ok(grid)
}
