//! Command-line front end: `voxdet phantom | eval | compare`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::candidates::DuplicatePolicy;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_manifest, Report, RunConfig};
use crate::metrics::{compare, DEFAULT_COMPARISONS, PERMUTATION_ITERATIONS};
use crate::morphology::Connectivity;
use crate::phantom::{gen_cohort, DetectorParams, Manifest, PhantomParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "voxdet", version, about = "Volumetric lesion detection and FROC/ROC evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort with simulated detector outputs.
    Phantom(PhantomArgs),
    /// Run the pipeline over a manifest and write the report.
    Eval(EvalArgs),
    /// Permutation test between the per-model metrics of two reports.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[arg(long)]
    pdac: usize,
    #[arg(long)]
    normal: usize,
    #[arg(long, default_value_t = 1)]
    models: usize,
    #[arg(long, env = "VOXDET_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON file with phantom parameters; flags below override it.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Perfect detector: always detects, no noise, no false blobs.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    detect_prob: Option<f64>,
    #[arg(long)]
    blur_sigma_mm: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    fp_blob_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Ignore,
    CountFp,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    subgroup_max_mm: Option<f64>,
    #[arg(long)]
    dice_min: Option<f64>,
    #[arg(long)]
    duplicate_policy: Option<PolicyArg>,
    #[arg(long)]
    dilate_radius_mm: Option<f64>,
    #[arg(long)]
    margin_mm: Option<f64>,
    #[arg(long)]
    rel_threshold: Option<f64>,
    #[arg(long)]
    max_lesions: Option<usize>,
    #[arg(long)]
    peak_floor: Option<f64>,
    #[arg(long, value_parser = ["6", "26"])]
    connectivity: Option<String>,
    #[arg(long)]
    fp_lo: Option<f64>,
    #[arg(long)]
    fp_hi: Option<f64>,
    #[arg(long, env = "VOXDET_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Auc,
    Pauc,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_enum, default_value = "auc")]
    metric: MetricArg,
    #[arg(long, default_value_t = PERMUTATION_ITERATIONS)]
    iterations: usize,
    #[arg(long, env = "VOXDET_SEED", default_value_t = 0)]
    seed: u64,
    /// Number of comparisons for the Bonferroni adjustment.
    #[arg(long, default_value_t = DEFAULT_COMPARISONS)]
    m: usize,
    /// Also write the JSON result to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::EmptyInput(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(pool.install(f))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn cmd_phantom(a: PhantomArgs) -> Result<()> {
    let mut params: PhantomParams = match &a.params {
        Some(p) => read_json(p)?,
        None => PhantomParams::default(),
    };
    params.seed = a.seed;
    if a.oracle {
        params.detector = DetectorParams {
            blur_sigma_mm: params.detector.blur_sigma_mm,
            ..DetectorParams::oracle()
        };
    }
    let d = &mut params.detector;
    if let Some(v) = a.detect_prob {
        d.detect_prob = v;
    }
    if let Some(v) = a.blur_sigma_mm {
        d.blur_sigma_mm = v;
    }
    if let Some(v) = a.noise_sigma {
        d.noise_sigma = v;
    }
    if let Some(v) = a.fp_blob_rate {
        d.fp_blob_rate = v;
    }
    if a.pdac + a.normal == 0 {
        return Err(Error::InvalidParameter("cohort needs at least one case".into()));
    }
    let manifest = with_pool(a.jobs, || gen_cohort(a.pdac, a.normal, a.models, &params, &a.out))??;
    println!(
        "wrote {} cases to {}",
        manifest.cases.len(),
        a.out.join("manifest.json").display()
    );
    Ok(())
}

fn run_config(a: &EvalArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &a.config {
        Some(p) => read_json(p).map_err(|e| match e {
            Error::Json(e) => Error::InvalidParameter(format!("config {}: {e}", p.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    let (p, e) = (&mut cfg.pipeline, &mut cfg.evaluation);
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(a.dilate_radius_mm => p.dilate_radius_mm);
    set!(a.margin_mm => p.margin_mm);
    set!(a.rel_threshold => p.rel_threshold);
    set!(a.max_lesions => p.max_lesions);
    set!(a.peak_floor => p.peak_floor);
    set!(a.dice_min => e.dice_min);
    set!(a.fp_lo => e.fp_lo);
    set!(a.fp_hi => e.fp_hi);
    set!(a.seed => e.seed);
    if let Some(c) = &a.connectivity {
        p.connectivity = if c == "6" { Connectivity::Six } else { Connectivity::TwentySix };
    }
    if let Some(d) = a.duplicate_policy {
        e.duplicate_policy = match d {
            PolicyArg::Ignore => DuplicatePolicy::Ignore,
            PolicyArg::CountFp => DuplicatePolicy::CountFp,
        };
    }
    if a.subgroup_max_mm.is_some() {
        e.subgroup_max_mm = a.subgroup_max_mm;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = run_config(&a)?;
    let manifest = Manifest::load(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let ev = with_pool(a.jobs, || evaluate_manifest(&manifest, base, &cfg))??;
    ev.write(&a.out)?;
    let r = &ev.report;
    println!(
        "{} cases, {} models: ensemble AUC {:.4}, pAUC {:.4}",
        ev.cases.len(),
        r.metrics.auc.len(),
        r.roc.auc,
        r.froc.pauc
    );
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let metric = match a.metric {
        MetricArg::Auc => "auc",
        MetricArg::Pauc => "pauc",
    };
    let ra = Report::load(&a.a)?;
    let rb = Report::load(&a.b)?;
    let values = |r: &Report, path: &Path| -> Result<Vec<f64>> {
        r.metrics
            .get(metric)
            .filter(|v| v.len() >= 2)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "{} has fewer than two per-model {metric} values",
                    path.display()
                ))
            })
    };
    let (va, vb) = (values(&ra, &a.a)?, values(&rb, &a.b)?);
    let report = compare(metric, &va, &vb, a.iterations, a.seed, a.m)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    if let Some(out) = &a.out {
        std::fs::write(out, &text).map_err(|e| Error::io_at(out, e))?;
    }
    print!("{text}");
    Ok(())
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
