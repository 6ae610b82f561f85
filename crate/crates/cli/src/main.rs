use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use probembed::label_shift::build_superclass_map;
use probembed::metrics::format_table;
use probembed::pipeline::{
    self, BuildDictOptions, DiagnoseOptions, EvaluateOptions, SyntheticKind, TemperatureMode,
};
use probembed::projector::DEFAULT_PCA_DIM;
use probembed::scorer::DEFAULT_LOGIT_SCALE;
use probembed::{CovarianceKind, EmbeddingMatrix, SpaceTag};

#[derive(Parser)]
#[command(name = "probembed", version, about = "Post-hoc error detection for vision-language classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the PCA basis and per-class Gaussians on the train split.
    BuildDict(BuildDictArgs),
    /// Score the test split with every method and write reports.
    Evaluate(EvaluateArgs),
    /// Per-class covariance condition numbers before and after projection.
    Diagnose(DiagnoseArgs),
    /// F1 against the rejection threshold for each method.
    SweepThreshold(SweepArgs),
    /// Write a synthetic dataset fixture.
    GenSynthetic(GenArgs),
    /// Map each query class to its K nearest dictionary classes by text similarity.
    ShiftMap(ShiftMapArgs),
}

#[derive(Args)]
struct BuildDictArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PCA_DIM)]
    pca_dim: usize,
    #[arg(long, default_value = "full")]
    cov: CovarianceKind,
    /// Randomly subsample larger classes to this many rows.
    #[arg(long)]
    max_per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Superclass map from `shift-map`; builds one Gaussian per query class.
    #[arg(long)]
    shift_map: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoringArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    text_bank: PathBuf,
    /// Directory with `pca.vlmp` and dictionary files [default: --out]
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LOGIT_SCALE)]
    logit_scale: f64,
    /// `fit` on a slice of the train split, or a fixed positive value.
    #[arg(long, default_value = "fit")]
    temp: TemperatureMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recorded in the reports; the dictionary must have been built with it.
    #[arg(long)]
    shift_map: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Also write retain/reject decisions at this threshold.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.5")]
    tau: Option<f64>,
    /// Number of evenly spaced thresholds in [0, 1].
    #[arg(long, default_value_t = 101)]
    tau_grid: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PCA_DIM)]
    pca_dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Scores CSV from `evaluate`; without it, scoring runs first.
    #[arg(long, conflicts_with_all = ["manifest", "text_bank"])]
    scores: Option<PathBuf>,
    #[arg(long, requires = "text_bank")]
    manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    text_bank: Option<PathBuf>,
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LOGIT_SCALE)]
    logit_scale: f64,
    #[arg(long, default_value = "fit")]
    temp: TemperatureMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 101)]
    tau_grid: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "separable")]
    kind: SyntheticKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of classes [default: 5 separable, 20 anisotropic]
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ShiftMapArgs {
    /// Text embeddings of the classes the dictionary is built on.
    #[arg(long)]
    text_bank: PathBuf,
    /// Text embeddings of the test-time label set.
    #[arg(long)]
    query_text: PathBuf,
    /// Retrieved classes per query [default: round(dictionary / query classes)]
    #[arg(long)]
    k: Option<usize>,
    /// Output JSON file.
    #[arg(long)]
    out: PathBuf,
}

fn grid_steps(points: usize) -> Result<usize> {
    if points < 2 {
        bail!("--tau-grid needs at least 2 points, got {points}");
    }
    Ok(points - 1)
}

fn check_scale(logit_scale: f64) -> Result<()> {
    if !(logit_scale > 0.0 && logit_scale.is_finite()) {
        bail!("--logit-scale must be positive, got {logit_scale}");
    }
    Ok(())
}

fn create_dir(path: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn build_dict(a: BuildDictArgs) -> Result<()> {
    if a.pca_dim == 0 {
        bail!("--pca-dim must be at least 1");
    }
    create_dir(&a.out)?;
    let out = pipeline::build_dict(&BuildDictOptions {
        manifest: a.manifest,
        pca_dim: a.pca_dim,
        kind: a.cov,
        max_per_class: a.max_per_class,
        seed: a.seed,
        shift_map: a.shift_map,
        out: a.out,
    })?;
    let excluded = &out.dictionary.provenance.excluded;
    println!(
        "{} Gaussians ({}, k = {}) -> {}",
        out.dictionary.len(),
        out.dictionary.kind().as_str(),
        out.pca.output_dim(),
        out.dictionary_path.display()
    );
    if !excluded.is_empty() {
        eprintln!("warning: classes with fewer than 2 training rows left out: {excluded:?}");
    }
    Ok(())
}

fn evaluate_options(s: ScoringArgs, tau: Option<f64>, tau_steps: usize, out: PathBuf) -> Result<EvaluateOptions> {
    check_scale(s.logit_scale)?;
    Ok(EvaluateOptions {
        manifest: s.manifest,
        text_bank: s.text_bank,
        dict_dir: s.dict.unwrap_or_else(|| out.clone()),
        logit_scale: s.logit_scale,
        temperature: s.temp,
        tau,
        tau_steps,
        seed: s.seed,
        shift_map: s.shift_map,
        out,
    })
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    if let Some(tau) = a.tau {
        if !(0.0..=1.0).contains(&tau) {
            bail!("--tau must lie in [0, 1], got {tau}");
        }
    }
    create_dir(&a.out)?;
    let opts = evaluate_options(a.scoring, a.tau, grid_steps(a.tau_grid)?, a.out)?;
    let out = pipeline::evaluate(&opts)?;
    print!("{}", format_table(&out.reports));
    println!("temperature {}, {} test rows -> {}", out.temperature, out.samples.len(), opts.out.display());
    Ok(())
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    create_dir(&a.out)?;
    let report = pipeline::diagnose(&DiagnoseOptions {
        manifest: a.manifest,
        pca_dim: a.pca_dim,
        out: a.out.clone(),
    })?;
    for space in [SpaceTag::Raw, SpaceTag::Projected] {
        match report.median(space) {
            Some(m) => println!("median log10 condition ({}): {m:.3}", space.as_str()),
            None => println!("median log10 condition ({}): n/a", space.as_str()),
        }
    }
    let thin: Vec<usize> = report
        .rows
        .iter()
        .filter(|(_, s, st)| *s == SpaceTag::Raw && matches!(st, pipeline::ConditionStatus::Insufficient { .. }))
        .map(|(c, _, _)| *c)
        .collect();
    if !thin.is_empty() {
        eprintln!("warning: classes with fewer than 2 samples: {thin:?}");
    }
    println!("-> {}", a.out.join(pipeline::CONDITION_FILE).display());
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let steps = grid_steps(a.tau_grid)?;
    create_dir(&a.out)?;
    let scored = match (a.scores, a.manifest, a.text_bank) {
        (Some(path), _, _) => pipeline::read_scores_csv(&path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(manifest), Some(text_bank)) => {
            let scoring = ScoringArgs {
                manifest,
                text_bank,
                dict: a.dict,
                logit_scale: a.logit_scale,
                temp: a.temp,
                seed: a.seed,
                shift_map: None,
            };
            let out = pipeline::evaluate(&evaluate_options(scoring, None, steps, a.out.clone())?)?;
            pipeline::scored_by_method(&out.samples)
        }
        _ => bail!("pass --scores, or --manifest and --text-bank to score first"),
    };
    let curves = pipeline::sweep_threshold(&scored, steps, &a.out)?;
    for (method, curve) in &curves {
        let best = curve.iter().fold((0.0, f64::NEG_INFINITY), |b, &(t, f)| if f > b.1 { (t, f) } else { b });
        println!("{method:<12} best F1 {:.4} at tau {:.2}", best.1, best.0);
    }
    println!("-> {}", a.out.join(pipeline::SWEEP_FILE).display());
    Ok(())
}

fn gen_synthetic(a: GenArgs) -> Result<()> {
    create_dir(&a.out)?;
    let ds = pipeline::gen_synthetic(a.kind, a.seed, a.classes, &a.out)?;
    println!(
        "{} rows x {} dims, {} classes -> {}",
        ds.rows(),
        ds.dims(),
        ds.num_classes(),
        a.out.join(pipeline::SYNTHETIC_MANIFEST).display()
    );
    Ok(())
}

fn shift_map(a: ShiftMapArgs) -> Result<()> {
    let dict = EmbeddingMatrix::read(&a.text_bank)?.cast::<f64>();
    let query = EmbeddingMatrix::read(&a.query_text)?.cast::<f64>();
    let map = build_superclass_map(&query, &dict, a.k)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(&parent.to_path_buf())?;
    }
    map.write(&a.out)?;
    println!("K = {}, {} query classes -> {}", map.k, map.n_test(), a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildDict(a) => build_dict(a).context("build-dict"),
        Command::Evaluate(a) => evaluate(a).context("evaluate"),
        Command::Diagnose(a) => diagnose(a).context("diagnose"),
        Command::SweepThreshold(a) => sweep(a).context("sweep-threshold"),
        Command::GenSynthetic(a) => gen_synthetic(a).context("gen-synthetic"),
        Command::ShiftMap(a) => shift_map(a).context("shift-map"),
    }
}

fn main() -> ExitCode {
    pipeline::configure_threads_from_env();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
