use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evogen::models::{CustomTable, MODELS};
use evogen::scan::{
    fidelity_scan, fit_divergence, parse_param, read_csv, read_json, scan, verify, write_fidelity_csv,
    write_fidelity_json, write_records, FitQuantity, OutputFormat, ScanConfig, ScanError, ScanGauge, Sweep,
};

/// Evolution generators along a Hamiltonian parameter.
#[derive(Parser)]
#[command(name = "evogen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in models and their parameters.
    Models {
        #[arg(long, default_value = "text", value_parser = ["text", "json"])]
        format: String,
    },
    /// Sweep a parameter and write one record per grid point.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check the defining equation (and the brute-force oracle) for a gauge.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a power law to a divergence in a scan output file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<OutputFormat>,
        #[arg(long, allow_hyphen_values = true)]
        q_star: f64,
        /// lo:hi
        #[arg(long, allow_hyphen_values = true, value_parser = parse_window)]
        window: (f64, f64),
        #[arg(long, default_value = "knorm", value_parser = parse_quantity)]
        quantity: FitQuantity,
    },
    /// Eigenstate fidelity and its small-ε quotient next to χ.
    Fidelity {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4], allow_hyphen_values = true)]
        eps: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "ep2x2")]
    model: String,
    /// name=value, repeatable
    #[arg(long = "param", value_parser = parse_kv, allow_hyphen_values = true)]
    params: Vec<(String, f64)>,
    /// name:start:stop:step
    #[arg(long, value_parser = parse_sweep, allow_hyphen_values = true)]
    sweep: Option<Sweep>,
    #[arg(long, default_value = "adiabatic", value_parser = parse_gauge)]
    gauge: ScanGauge,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    t_ref: f64,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Finite-difference step for residuals.
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    /// Eigenvalue index (ascending order) for susceptibility and fidelity.
    #[arg(long, default_value_t = 0)]
    level: usize,
    /// Worker threads (default: EVOGEN_WORKERS, else all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// JSON table of H (and optionally dH) samples; implies --model custom.
    #[arg(long)]
    model_file: Option<PathBuf>,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: OutputFormat,
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    parse_param(s).map_err(|e| e.to_string())
}

fn parse_sweep(s: &str) -> Result<Sweep, String> {
    s.parse().map_err(|e: ScanError| e.to_string())
}

fn parse_gauge(s: &str) -> Result<ScanGauge, String> {
    s.parse().map_err(|e: ScanError| e.to_string())
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: ScanError| e.to_string())
}

fn parse_quantity(s: &str) -> Result<FitQuantity, String> {
    s.parse().map_err(|e: ScanError| e.to_string())
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
    Ok((num(a)?, num(b)?))
}

enum Failure {
    Usage(String),
    Verification,
}

impl From<ScanError> for Failure {
    fn from(e: ScanError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn config(m: &ModelArgs) -> Result<ScanConfig, Failure> {
    let mut name = m.model.clone();
    let mut custom = None;
    if let Some(path) = &m.model_file {
        let table: CustomTable = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        custom = Some(table);
        name = "custom".into();
    }
    let mut cfg = ScanConfig::new(&name, m.gauge);
    for (k, v) in &m.params {
        cfg.params.insert(k.clone(), *v);
    }
    cfg.sweep = m.sweep.clone();
    cfg.t_ref = m.t_ref;
    cfg.residual_tol = m.tol;
    cfg.h = m.h;
    cfg.level = m.level;
    cfg.custom = custom;
    cfg.workers = match m.workers {
        Some(w) => Some(w),
        None => match std::env::var("EVOGEN_WORKERS") {
            Ok(v) => Some(v.parse().map_err(|_| Failure::Usage(format!("EVOGEN_WORKERS=`{v}` is not a count")))?),
            Err(_) => None,
        },
    };
    Ok(cfg)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn guess_format(path: &Path) -> OutputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => OutputFormat::Json,
        _ => OutputFormat::Csv,
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Models { format } => {
            let mut w = sink(&None)?;
            if format == "json" {
                let v: Vec<_> = MODELS
                    .iter()
                    .map(|m| {
                        serde_json::json!({
                            "name": m.name,
                            "about": m.about,
                            "evolution_param": m.evolution_param,
                            "params": m.params.iter().map(|p| serde_json::json!({
                                "name": p.name, "default": p.default, "about": p.about,
                            })).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut w, &v).map_err(|e| Failure::Usage(e.to_string()))?;
                writeln!(w)?;
            } else {
                for m in MODELS {
                    writeln!(w, "{:<10} {}", m.name, m.about)?;
                    for p in m.params {
                        let mark = if p.name == m.evolution_param { "*" } else { " " };
                        writeln!(w, "  {mark}{:<8} default {:<8} {}", p.name, p.default, p.about)?;
                    }
                }
            }
            w.flush()?;
        }
        Command::Scan { model, out } => {
            let cfg = config(&model)?;
            if cfg.sweep.is_none() {
                return Err(Failure::Usage("scan needs --sweep".into()));
            }
            let records = scan(&cfg)?;
            let mut w = sink(&out.out)?;
            write_records(&cfg, &records, out.format, &mut w)?;
            w.flush()?;
        }
        Command::Verify { model, out } => {
            let cfg = config(&model)?;
            let report = verify(&cfg)?;
            let mut w = sink(&out)?;
            serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Usage(e.to_string()))?;
            writeln!(w)?;
            w.flush()?;
            if !report.pass {
                return Err(Failure::Verification);
            }
        }
        Command::Fit { input, format, q_star, window, quantity } => {
            let rd = BufReader::new(File::open(&input)?);
            let records = match format.unwrap_or_else(|| guess_format(&input)) {
                OutputFormat::Csv => read_csv(rd)?,
                OutputFormat::Json => read_json(rd)?,
            };
            let fit = fit_divergence(&records, q_star, window, quantity)?;
            let mut w = sink(&None)?;
            serde_json::to_writer_pretty(&mut w, &fit).map_err(|e| Failure::Usage(e.to_string()))?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Fidelity { model, eps, out } => {
            let cfg = config(&model)?;
            let rows = fidelity_scan(&cfg, &eps)?;
            let mut w = sink(&out.out)?;
            match out.format {
                OutputFormat::Csv => write_fidelity_csv(&rows, &mut w)?,
                OutputFormat::Json => write_fidelity_json(&rows, &mut w)?,
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
