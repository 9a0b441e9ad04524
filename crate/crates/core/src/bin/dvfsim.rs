use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dvfsim::experiments::{self, acceptance, PAYLOAD_GRID};
use dvfsim::freqopt::{select_optimal, sweep, Metric, TaskProfile};
use dvfsim::mac::IdtxConfig;
use dvfsim::netstack::Method;
use dvfsim::powermodel::{CalibrationProfile, ClockConfig, RadioState};
use dvfsim::sim::{self, export_trace, Scenario, SpreadPattern};
use dvfsim::Error;

#[derive(Parser)]
#[command(name = "dvfsim", version, about = "DVFS energy experiments for 802.15.4 IoT nodes")]
struct Cli {
    /// Calibration profile JSON; the shipped default when omitted.
    #[arg(long, global = true)]
    profile: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Frequency levels, e.g. `all`, `24,80` or `rc:24,pll:80`.
    #[arg(long, global = true, default_value = "all")]
    levels: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sleep, listen and IDTX poll baselines per level.
    Baseline,
    /// DSME GTS count x direction x level.
    Dsme {
        #[arg(long, value_delimiter = ',', default_value = "0,8,16,32,64")]
        gts: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "tx,rx,alternate")]
        pattern: Vec<PatternArg>,
    },
    /// CoAP(S) request bursts per method, payload, security and MAC.
    Coap {
        #[arg(long, value_delimiter = ',', default_value = "idtx,dsme")]
        mac: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "GET,POST")]
        method: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        payload: Vec<usize>,
        #[arg(long, value_enum, default_value_t = SecureArg::Both)]
        secure: SecureArg,
    },
    /// Run one scenario and export its power trace.
    Trace(ScenarioArgs),
    /// Offline frequency sweep of a task profile.
    Optimize {
        #[arg(long, value_enum, default_value_t = TaskArg::Fft)]
        task: TaskArg,
        #[arg(long, value_enum, default_value_t = MetricArg::Energy)]
        metric: MetricArg,
    },
    /// Check every acceptance criterion.
    Selftest,
    /// List the scenario presets.
    Presets,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "fft_switch")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Tx,
    Rx,
    Alternate,
}

impl From<PatternArg> for SpreadPattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Tx => SpreadPattern::Tx,
            PatternArg::Rx => SpreadPattern::Rx,
            PatternArg::Alternate => SpreadPattern::Alternate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SecureArg {
    Yes,
    No,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Fft,
    Idtx,
    Wait,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Energy,
    Edp,
    Time,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Energy => Metric::Energy,
            MetricArg::Edp => Metric::Edp,
            MetricArg::Time => Metric::Time,
        }
    }
}

enum Failure {
    Config(Error),
    Io(Error),
    Acceptance(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Io(e),
            other => Failure::Config(other),
        }
    }
}

fn emit<T: Serialize>(cli: &Cli, stem: &str, rows: &[T]) -> Result<PathBuf, Error> {
    let path = match cli.format {
        Format::Csv => cli.out.join(format!("{stem}.csv")),
        Format::Json => cli.out.join(format!("{stem}.json")),
    };
    match cli.format {
        Format::Csv => experiments::write_csv(&path, rows)?,
        Format::Json => experiments::write_json(&path, rows)?,
    }
    Ok(path)
}

fn report<T: Serialize + ?Sized>(cli: &Cli, value: &T) -> Result<PathBuf, Error> {
    let path = cli.out.join("report.json");
    experiments::write_json(&path, value)?;
    Ok(path)
}

fn load_scenario(a: &ScenarioArgs) -> Result<Scenario, Error> {
    let mut sc = match &a.scenario {
        Some(p) => Scenario::load(p)?,
        None => experiments::preset(&a.preset)?,
    };
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    Ok(sc)
}

#[derive(Serialize)]
struct DsmeRelative<'a> {
    gts: usize,
    pattern: SpreadPattern,
    config: &'a ClockConfig,
    relative: Option<f64>,
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    task: &'a str,
    metric: Metric,
    optimum: Option<ClockConfig>,
    reference: ClockConfig,
}

fn show(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let profile = match &cli.profile {
        Some(p) => CalibrationProfile::load(p)?,
        None => CalibrationProfile::default(),
    };
    let levels = experiments::parse_levels(&cli.levels, &profile)?;
    let mkdir = |dir: &Path| std::fs::create_dir_all(dir).map_err(Error::from);
    match &cli.cmd {
        Cmd::Presets => {
            for name in experiments::preset_names() {
                println!("{name}");
            }
        }
        Cmd::Baseline => {
            mkdir(&cli.out)?;
            let base = experiments::baseline_grid(&profile, &levels)?;
            let idtx = experiments::idtx_poll_grid(&profile, &levels)?;
            for r in base.iter().chain(&idtx) {
                println!(
                    "{:<6} lpm={:<5} {:<7} {:>9.4} mA  rel {}",
                    r.radio,
                    r.lpm,
                    r.config.label(),
                    r.average_current_ma,
                    r.relative.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
                );
            }
            show(&[
                emit(cli, "baseline", &base)?,
                emit(cli, "idtx_poll", &idtx)?,
                report(cli, &serde_json::json!({ "baseline": base, "idtx_poll": idtx }))?,
            ]);
        }
        Cmd::Dsme { gts, pattern } => {
            mkdir(&cli.out)?;
            let patterns: Vec<SpreadPattern> = pattern.iter().map(|&p| p.into()).collect();
            let rows = experiments::dsme_grid(&profile, gts, &patterns, &levels)?;
            let rel: Vec<DsmeRelative> = rows
                .iter()
                .map(|r| DsmeRelative {
                    gts: r.gts,
                    pattern: r.pattern,
                    config: &r.config,
                    relative: r.relative,
                })
                .collect();
            show(&[
                emit(cli, "dsme_absolute", &rows)?,
                emit(cli, "dsme_relative", &rel)?,
                report(cli, &rows)?,
            ]);
        }
        Cmd::Coap {
            mac,
            method,
            payload,
            secure,
        } => {
            mkdir(&cli.out)?;
            let methods = method.iter().map(|m| Method::parse(m)).collect::<Result<Vec<_>, _>>()?;
            let payloads = if payload.is_empty() {
                PAYLOAD_GRID.to_vec()
            } else {
                payload.clone()
            };
            let secure = match secure {
                SecureArg::Yes => vec![true],
                SecureArg::No => vec![false],
                SecureArg::Both => vec![false, true],
            };
            let macs: Vec<&str> = mac.iter().map(String::as_str).collect();
            let rows = experiments::coap_grid(&profile, &macs, &methods, &payloads, &secure, &levels)?;
            show(&[emit(cli, "coap", &rows)?, report(cli, &rows)?]);
        }
        Cmd::Trace(args) => {
            mkdir(&cli.out)?;
            let sc = load_scenario(args)?;
            let (trace, rep) = sim::run(&sc, &profile)?;
            let path = cli.out.join("trace.csv");
            export_trace(&trace, &path, &profile)?;
            for j in &rep.jobs {
                println!(
                    "{:<6} {:>10.6} s  {:>9.3} uJ",
                    j.task,
                    j.start_s,
                    j.energy_with_transition_j * 1e6
                );
            }
            println!(
                "total {:.3} uJ, {:.5} mA average, {} deadline misses",
                rep.energy.energy_j * 1e6,
                rep.average_current_ma,
                rep.deadline_misses.len()
            );
            show(&[path, report(cli, &rep)?]);
        }
        Cmd::Optimize { task, metric } => {
            mkdir(&cli.out)?;
            let (name, t) = match task {
                TaskArg::Fft => ("fft", TaskProfile::fft(&profile)),
                TaskArg::Idtx => ("idtx", TaskProfile::idtx_request(&profile, &IdtxConfig::default())?),
                TaskArg::Wait => ("wait", TaskProfile::wait("wait", 1.0, RadioState::Off)),
            };
            let s = sweep(&t, &levels, &profile)?;
            let metric: Metric = (*metric).into();
            let optimum = select_optimal(&s.rows, metric);
            println!(
                "{name}: {metric:?} optimum {}",
                optimum.map(|c| c.label()).unwrap_or_else(|| "-".into())
            );
            show(&[
                emit(cli, "sweep", &s.rows)?,
                emit(cli, "sweep_normalized", &s.normalized)?,
                report(
                    cli,
                    &OptimizeReport {
                        task: name,
                        metric,
                        optimum,
                        reference: s.reference,
                    },
                )?,
            ]);
        }
        Cmd::Selftest => {
            let results = acceptance::run_all(&profile);
            for r in &results {
                println!("{r}");
            }
            if mkdir(&cli.out).is_ok() {
                show(&[report(cli, &results)?]);
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Failure::Acceptance(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
        Err(Failure::Acceptance(n)) => {
            eprintln!("{n} acceptance criteria failed");
            ExitCode::from(3)
        }
    }
}
