use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lesionbench_core::harness::readers::by_lesion;
use lesionbench_core::harness::report::{write_csv, write_json};
use lesionbench_core::harness::{
    emit_report, inter_operator_variability, run_all, simulate_readers, CaseManifest, JitterConfig, Mode, ReaderMode,
    RunConfig, RunSummary, Variability,
};
use lesionbench_core::phantom::suite::{self, SuiteCase, SuiteSpec};
use lesionbench_core::phantom::{emit_manifest, PhantomCase};
use lesionbench_core::segment::SegmenterChoice;
use lesionbench_core::{io, metrics};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "lesionbench", version, about = "Lesion segmentation and measurement benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic phantom data.
    Phantom {
        #[command(subcommand)]
        command: PhantomCommand,
    },
    /// Evaluate one prompting mode over a case manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// point, bbox or point-edit.
        #[arg(long)]
        mode: String,
        /// `builtin` or `external:<command>`.
        #[arg(long, default_value = "builtin")]
        segmenter: String,
        /// Recorded in the summary.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Fill the wall_time_s column (makes the CSV run-dependent).
        #[arg(long)]
        record_timing: bool,
    },
    /// Simulated manual and assisted readers plus their inter-operator variability.
    Readers {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// JSON jitter configuration; defaults apply to missing fields.
        #[arg(long)]
        jitter: Option<PathBuf>,
        /// Overrides the jitter seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "builtin")]
        segmenter: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the morphology report of a binary mask as JSON.
    Measure {
        #[arg(long)]
        mask: PathBuf,
    },
    /// Run the HTTP service over a data directory holding manifest.json.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Subcommand)]
enum PhantomCommand {
    /// Write volumes, masks, truth files and manifest.json.
    Gen {
        /// A suite spec `{"kind", "count", "seed", "noise_sigma"}` or a list of cases.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Suite(SuiteSpec),
    Cases(Vec<SuiteCase>),
}

#[derive(Serialize)]
struct VariabilityReport {
    n_readers: usize,
    jitter: JitterConfig,
    manual: Variability,
    assisted: Variability,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<(CaseManifest, PathBuf)> {
    let manifest = CaseManifest::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, base))
}

fn phantom_gen(spec: &Path, out: &Path) -> Result<()> {
    let cases = match read_json::<SpecFile>(spec)? {
        SpecFile::Suite(s) => suite::build(&s),
        SpecFile::Cases(c) => c,
    };
    if cases.is_empty() {
        bail!("{} describes no cases", spec.display());
    }
    let generated: Vec<PhantomCase> =
        cases.iter().map(|c| c.generate().with_context(|| format!("phantom {}", c.id))).collect::<Result<_>>()?;
    let manifest = emit_manifest(&generated, out)?;
    println!("wrote {} phantoms, manifest {}", generated.len(), manifest.display());
    Ok(())
}

fn eval(manifest: &Path, mode: &str, segmenter: &str, seed: u64, out: &Path, record_timing: bool) -> Result<()> {
    let mode = Mode::parse(mode)?;
    let choice = SegmenterChoice::parse(segmenter)?;
    let (manifest, base) = load_manifest(manifest)?;
    let cfg = RunConfig { record_timing, ..RunConfig::default() };
    let rows = run_all(&manifest.sorted(), &base, mode, &choice, &cfg);
    let summary = RunSummary::new(&rows, mode.as_str(), segmenter, seed);
    let summary_path = emit_report(&rows, &summary, out)?;
    for r in rows.iter().filter(|r| !r.is_ok()) {
        log::warn!("case {} failed: {}", r.id, r.error.as_deref().unwrap_or("unknown error"));
    }
    println!(
        "{} cases ({} failed), mode {mode}; wrote {} and {}",
        summary.n_cases,
        summary.n_failed,
        out.display(),
        summary_path.display()
    );
    Ok(())
}

fn variability_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("readers");
    csv.with_file_name(format!("{stem}_variability.json"))
}

fn readers(
    manifest: &Path,
    n: usize,
    jitter: Option<&Path>,
    seed: Option<u64>,
    segmenter: &str,
    out: &Path,
) -> Result<()> {
    let mut jitter: JitterConfig = match jitter {
        Some(p) => read_json(p)?,
        None => JitterConfig::default(),
    };
    if let Some(s) = seed {
        jitter.seed = s;
    }
    let choice = SegmenterChoice::parse(segmenter)?;
    let (manifest, base) = load_manifest(manifest)?;
    let entries = manifest.sorted();
    let cfg = RunConfig::default();
    let mut table = Vec::new();
    let mut variability = BTreeMap::new();
    for mode in [ReaderMode::Manual, ReaderMode::Assisted] {
        let rows = simulate_readers(&entries, &base, n, &jitter, mode, &choice, &cfg)?;
        variability.insert(mode, inter_operator_variability(&by_lesion(&rows)));
        table.extend(rows);
    }
    write_csv(&table, out)?;
    let report = VariabilityReport {
        n_readers: n,
        jitter,
        manual: variability.remove(&ReaderMode::Manual).expect("manual run"),
        assisted: variability.remove(&ReaderMode::Assisted).expect("assisted run"),
    };
    let json = variability_path(out);
    write_json(&report, &json)?;
    println!(
        "variability manual {:.3} mm, assisted {:.3} mm; wrote {} and {}",
        report.manual.overall,
        report.assisted.overall,
        out.display(),
        json.display()
    );
    Ok(())
}

fn measure(mask: &Path) -> Result<()> {
    let mask = io::load_mask(mask)?;
    let report = metrics::morphology(&mask)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn serve(host: IpAddr, port: u16, data: &Path) -> Result<()> {
    let cfg = lesionbench_service::ServiceConfig::from_env(data)?;
    let state = lesionbench_service::AppState::load(cfg)?;
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(lesionbench_service::serve(SocketAddr::new(host, port), state))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom { command: PhantomCommand::Gen { spec, out } } => phantom_gen(&spec, &out),
        Command::Eval { manifest, mode, segmenter, seed, out, record_timing } => {
            eval(&manifest, &mode, &segmenter, seed, &out, record_timing)
        }
        Command::Readers { manifest, n, jitter, seed, segmenter, out } => {
            readers(&manifest, n, jitter.as_deref(), seed, &segmenter, &out)
        }
        Command::Measure { mask } => measure(&mask),
        Command::Serve { port, data, host } => serve(host, port, &data),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
