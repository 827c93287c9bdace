use std::path::{Path, PathBuf};
use std::process::ExitCode;

use addmimo::diffusion::DriftSign;
use addmimo::experiment::{run_experiment, ExperimentSpec, Preset, SpecFormat};
use addmimo::selftest::{run_selftest, SelftestOptions};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Desk-scale MIMO detection experiments: BER sweeps, runtime scaling and
/// self-checks.
#[derive(Debug, Parser)]
#[command(name = "addmimo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a BER sweep and write `<stem>.csv` plus `<stem>.manifest.json`.
    Ber(RunArgs),
    /// Run a single-trajectory timing benchmark.
    Timing(RunArgs),
    /// Run the built-in invariant suite.
    Selftest(SelftestArgs),
    /// Print a built-in experiment spec.
    Preset {
        #[arg(value_enum)]
        name: PresetName,
        #[arg(long, value_enum, default_value_t = Format::Toml)]
        format: Format,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment file (.toml or .json).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in experiment.
    #[arg(long, value_enum)]
    preset: Option<PresetName>,
    /// Output directory. Overrides the spec's `output.dir`.
    #[arg(long, env = "ADDMIMO_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Master seed. Overrides the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for BER sweeps (0 = all cores). Overrides the spec.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0.01)]
    sigma_min: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_max: f64,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = Drift::TowardDenoised)]
    drift: Drift,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetName {
    #[value(name = "fig3-desk")]
    Fig3Desk,
    #[value(name = "fig4-desk")]
    Fig4Desk,
}

impl From<PresetName> for Preset {
    fn from(p: PresetName) -> Self {
        match p {
            PresetName::Fig3Desk => Preset::Fig3Desk,
            PresetName::Fig4Desk => Preset::Fig4Desk,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Toml,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Drift {
    #[value(name = "toward_denoised")]
    TowardDenoised,
    #[value(name = "literal_alg2")]
    LiteralAlg2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Ber,
    Timing,
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ExperimentSpec::parse(&text, SpecFormat::detect(path, &text)).map_err(|e| match e.line {
        Some(line) => anyhow!("{}:{line}: {}", path.display(), e.message),
        None => anyhow!("{}: {}", path.display(), e.message),
    })
}

fn run(kind: Kind, args: RunArgs) -> Result<()> {
    let mut spec = match (&args.spec, args.preset) {
        (Some(path), _) => load_spec(path)?,
        (None, Some(p)) => Preset::from(p).spec(),
        (None, None) => bail!("one of --spec or --preset is required"),
    };
    match kind {
        Kind::Ber if spec.ber.is_none() => bail!("spec {:?} has no [ber] section; use `addmimo timing`", spec.name),
        Kind::Timing if spec.timing.is_none() => bail!("spec {:?} has no [timing] section; use `addmimo ber`", spec.name),
        _ => {}
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(threads) = args.threads {
        spec.threads = threads;
    }
    let out_dir = args
        .out_dir
        .or_else(|| spec.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let outputs = run_experiment(&spec, &out_dir)?;
    if let Some(report) = &outputs.ber {
        for p in &report.points {
            let flags: Vec<&str> = p.flags.iter().map(|f| f.as_str()).collect();
            println!(
                "{:<12} {:>7} dB  ber {:.3e}  ({} / {} bits)  {}",
                p.detector,
                p.snr_db,
                p.ber,
                p.errors,
                p.bits,
                flags.join(";")
            );
        }
        for s in &report.skipped {
            println!("{s:<12} skipped at K = {}", spec.ber.as_ref().map_or(0, |b| b.k));
        }
    }
    if let Some(report) = &outputs.timing {
        for r in &report.rows {
            println!(
                "{:<12} N=K={:<4} median {:>10.1} us  (setup {:.1}, trajectory {:.1})",
                r.detector, r.n, r.median_us, r.setup_median_us, r.trajectory_median_us
            );
        }
        for f in &report.fits {
            println!("{:<12} log-log exponent {:.2}", f.detector, f.exponent);
        }
    }
    println!("wrote {}", outputs.csv_path.display());
    println!("wrote {}", outputs.manifest_path.display());
    Ok(())
}

fn selftest(args: SelftestArgs) -> Result<()> {
    let opts = SelftestOptions {
        sigma_min: args.sigma_min,
        sigma_max: args.sigma_max,
        steps: args.steps,
        epsilon: args.epsilon,
        drift: match args.drift {
            Drift::TowardDenoised => DriftSign::TowardDenoised,
            Drift::LiteralAlg2 => DriftSign::LiteralAlg2,
        },
    };
    let report = run_selftest(&opts);
    print!("{}", report.table());
    if !report.passed() {
        bail!("selftest failed: {}", report.failures().join(", "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ber(args) => run(Kind::Ber, args),
        Command::Timing(args) => run(Kind::Timing, args),
        Command::Selftest(args) => selftest(args),
        Command::Preset { name, format } => {
            let spec = Preset::from(name).spec();
            match format {
                Format::Toml => spec.to_toml_string(),
                Format::Json => spec.to_json_string().map(|s| s + "\n"),
            }
            .map(|s| print!("{s}"))
            .map_err(Into::into)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
