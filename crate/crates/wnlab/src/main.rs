//! Command-line entry point: configuration-driven experiments, the fast
//! verification suite, rate-profile tables and test-function export.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wnlab::runner::{run_config_text, verify, RunError};
use wnlab_core::nikolskii::ClassSpec;
use wnlab_core::rates;

/// Output root: --out beats WNLAB_OUT beats ./wnlab-out.
fn output_root() -> PathBuf {
    std::env::var_os("WNLAB_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("wnlab-out"))
}

#[derive(Parser)]
#[command(name = "wnlab", version, about = "kernel-estimation laboratory for the white noise model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON configuration.
    Run {
        /// Path to the configuration file.
        config: PathBuf,
        /// Output directory (default: <output root>/<config stem>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the fast property suite and print one line per check.
    Verify {
        /// Optional JSON file with a C2(r) override table.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the rate profile of a smoothness class.
    Rates(RatesArgs),
    /// Build and export lower-bound test-function families.
    ExportTestbed {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RatesArgs {
    /// Per-axis smoothness, comma separated (e.g. 2,1).
    #[arg(long, value_delimiter = ',', required = true)]
    beta: Vec<f64>,
    /// Per-axis norm indices; "inf" allowed.
    #[arg(long, value_delimiter = ',', required = true)]
    r: Vec<String>,
    /// Per-axis radii.
    #[arg(long, value_delimiter = ',', required = true)]
    radius: Vec<f64>,
    /// Risk norm index; "inf" allowed.
    #[arg(long, default_value = "2")]
    p: String,
    /// Optional noise levels for the rate normalizations.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
}

fn parse_index(text: &str) -> Result<f64, String> {
    match text {
        "inf" | "Inf" | "infinity" => Ok(f64::INFINITY),
        _ => text
            .parse::<f64>()
            .map_err(|_| format!("not a number: {text}")),
    }
}

fn cmd_rates(args: &RatesArgs) -> Result<(), String> {
    let r: Result<Vec<f64>, String> = args.r.iter().map(|t| parse_index(t)).collect();
    let spec = ClassSpec::new(args.beta.clone(), r?, args.radius.clone())
        .map_err(|e| e.to_string())?;
    let p = parse_index(&args.p)?;
    let profile = rates::aggregates(&spec, p);
    println!("zone:        {:?}", profile.zone);
    println!("exponent:    {}", profile.exponent);
    println!("beta:        {}", profile.beta);
    println!("omega:       {}", profile.omega);
    println!("l_beta:      {}", profile.l_beta);
    println!("p*:          {}", profile.p_star);
    println!("tau(2):      {}", spec.tau(2.0));
    println!("tau(p*):     {}", spec.tau(profile.p_star));
    println!("kappa(p):    {}", spec.kappa(p));
    println!("consistent:  {}", profile.consistent);
    println!(
        "boundaries:  kappa_zero={} r_j_one={}",
        profile.boundary_kappa_zero, profile.boundary_rj_one
    );
    for &eps in &args.eps {
        let lower = rates::lower_rate(&spec, p, eps).map_err(|e| e.to_string())?;
        match rates::upper_rate(&spec, p, eps) {
            Ok(upper) => println!("eps={eps}: lower={lower} upper={upper}"),
            Err(_) => println!("eps={eps}: lower={lower} upper=n/a (no consistency)"),
        }
    }
    Ok(())
}

fn run_from_file(config: &PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let text = match std::fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let out_dir = out.unwrap_or_else(|| {
        let stem = config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        output_root().join(stem)
    });
    match run_config_text(&text, &out_dir, seed) {
        Ok(artifacts) => {
            println!("wrote {}", artifacts.out_dir.display());
            println!("manifest sha256 {}", artifacts.manifest_hash);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => run_from_file(&config, out, seed),
        Command::Verify { config } => {
            let table: Option<BTreeMap<u32, f64>> = match config {
                Some(path) => {
                    let text = match std::fs::read_to_string(&path) {
                        Ok(t) => t,
                        Err(e) => {
                            eprintln!("error: cannot read {}: {e}", path.display());
                            return ExitCode::from(2);
                        }
                    };
                    match serde_json::from_str(&text) {
                        Ok(t) => Some(t),
                        Err(e) => {
                            eprintln!("error: bad C2 table: {e}");
                            return ExitCode::from(2);
                        }
                    }
                }
                None => None,
            };
            match verify(table.as_ref()) {
                Ok(lines) => {
                    let mut all = true;
                    for line in &lines {
                        if line.pass {
                            println!("PASS {}", line.name);
                        } else {
                            println!("FAIL {} ({})", line.name, line.detail);
                            all = false;
                        }
                    }
                    if all {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e @ RunError::Validation(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Command::Rates(args) => match cmd_rates(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::ExportTestbed { config, out, seed } => run_from_file(&config, out, seed),
    }
}
