use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hqsteer_core::criteria::{hierarchy_clauses, identity_clauses, s_cm, s_hz, s_lr, sample_feasible_cm, HzFrame, SteeringDirection};
use hqsteer_core::runner::{
    emit, fidelity_csv, find_threshold, run_cat, run_sweep, wigner_csv, write_text, Format, SweepConfig, WitnessId,
};
use hqsteer_core::Error;

#[derive(Parser)]
#[command(name = "hqsteer", version, about = "High-order quadrature EPR steering witnesses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    cutoff_a: Option<usize>,
    #[arg(long)]
    cutoff_b: Option<usize>,
    /// Output file (directory for `cat`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate all witnesses over the configured parameter range.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Locate the sign change of one witness.
    Threshold {
        config: PathBuf,
        #[arg(long)]
        witness: String,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Conditional cat states: Wigner grids and fidelities.
    Cat {
        config: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Check the witness hierarchy on randomly sampled standard forms.
    CheckHierarchy {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) => 4,
        _ => 3,
    }
}

fn load(path: &Path, opts: &Overrides) -> Result<(SweepConfig, Format), Error> {
    let mut cfg = SweepConfig::load(path)?;
    if let Some(a) = opts.cutoff_a {
        cfg.cutoffs.a = a;
    }
    if let Some(b) = opts.cutoff_b {
        cfg.cutoffs.b = b;
    }
    if let Some(out) = &opts.out {
        cfg.output.path = Some(out.clone());
    }
    let format = match &opts.format {
        Some(f) => f.parse()?,
        None => cfg.output.format,
    };
    cfg.validate()?;
    Ok((cfg, format))
}

fn sweep(path: &Path, opts: &Overrides) -> Result<(), Error> {
    let (cfg, format) = load(path, opts)?;
    let result = run_sweep(&cfg, opts.workers)?;
    for t in &result.thresholds {
        info!("{} changes sign at {} = {:.4}", t.witness, result.provenance.parameter, t.value);
    }
    match &cfg.output.path {
        Some(p) => {
            emit(&result, format, p)?;
            info!("wrote {} rows to {}", result.rows.len(), p.display());
        }
        None => print!(
            "{}",
            match format {
                Format::Csv => hqsteer_core::runner::to_csv(&result)?,
                Format::Json => hqsteer_core::runner::to_json(&result)?,
            }
        ),
    }
    Ok(())
}

fn threshold(path: &Path, witness: &str, opts: &Overrides) -> Result<(), Error> {
    let (cfg, _) = load(path, opts)?;
    let id: WitnessId = witness.parse()?;
    let x = find_threshold(&cfg, id, opts.workers)?;
    println!("{},{x}", witness.to_ascii_lowercase());
    Ok(())
}

fn cat(path: &Path, opts: &Overrides) -> Result<(), Error> {
    let (cfg, format) = load(path, opts)?;
    let (report, grids) = run_cat(&cfg)?;
    let dir = cfg.output.path.clone().unwrap_or_else(|| PathBuf::from("."));
    for (c, g) in report.cats.iter().zip(&grids) {
        write_text(&dir.join(format!("{}_wigner.csv", c.name)), &wigner_csv(g))?;
    }
    let summary = match format {
        Format::Csv => fidelity_csv(&report),
        Format::Json => serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?,
    };
    let ext = if format == Format::Csv { "csv" } else { "json" };
    write_text(&dir.join(format!("fidelity.{ext}")), &summary)?;
    print!("{}", fidelity_csv(&report));
    Ok(())
}

fn check_hierarchy(samples: usize, seed: u64) -> Result<bool, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = SteeringDirection::a_to_b(1, 1);
    let mut failures = 0;
    for i in 0..samples {
        let s = sample_feasible_cm(&mut rng);
        let cm = s.cm();
        let mut clauses = identity_clauses(&s.sf);
        clauses.extend(hierarchy_clauses(
            s_cm(&cm, &dir)?,
            s_hz(&cm, &dir, HzFrame::StandardForm)?,
            s_lr(&cm, &dir)?.value,
            None,
            s.sf.c1 + s.sf.c2,
        ));
        for c in clauses.iter().filter(|c| !c.passed) {
            failures += 1;
            warn!("sample {i}: {} failed ({})", c.name, c.detail);
        }
    }
    println!("samples={samples} seed={seed} failures={failures}");
    Ok(failures == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sweep { config, opts } => sweep(config, opts),
        Command::Threshold { config, witness, opts } => threshold(config, witness, opts),
        Command::Cat { config, opts } => cat(config, opts),
        Command::CheckHierarchy { samples, seed } => match check_hierarchy(*samples, *seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
