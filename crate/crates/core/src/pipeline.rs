//! End-to-end commands: dictionary build, evaluation, diagnostics, threshold
//! sweeps and synthetic fixtures. Every output is a pure function of the input
//! bytes and options, and is written atomically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::embedding_store::{
    encode_labels, load_dataset, partition_by_class, save_dataset, EmbeddingMatrix, LabeledDataset,
    TRAIN_SPLIT,
};
use crate::error::{Error, Result};
use crate::format::{self, write_atomic};
use crate::gaussian_dict::{build_dictionary, CovarianceKind, GaussianDictionary};
use crate::label_shift::{build_superclass_dictionary, SuperclassMap};
use crate::metrics::{f1_sweep, format_table, tau_grid, EvaluationReport, ScoredSample};
use crate::projector::{class_condition, fit_pca, ClassCondition, PcaModel, SpaceTag};
use crate::scorer::{
    calibrate_temperature, profiles_for_rows, score_dataset, Method, SampleScores, ScoringConfig,
    TextBank, MIN_CALIBRATION_SAMPLES,
};
use crate::synthetic::{self, AnisotropicConfig, SeparableConfig};

pub const PCA_FILE: &str = "pca.vlmp";
pub const SCORES_FILE: &str = "scores.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const METADATA_FILE: &str = "metadata.json";
pub const CONDITION_FILE: &str = "condition.csv";
pub const SWEEP_FILE: &str = "f1_sweep.csv";

/// Share of the train split used to fit the temperature baseline.
pub const CALIBRATION_FRACTION: f64 = 0.2;

pub fn dictionary_file(kind: CovarianceKind) -> String {
    format!("dictionary-{}.vlmd", kind.as_str())
}

pub fn provenance_file(kind: CovarianceKind) -> String {
    format!("build-dict-{}.json", kind.as_str())
}

/// Caps rayon's global pool at `VLME_THREADS` when set.
pub fn configure_threads_from_env() {
    if let Some(n) = std::env::var("VLME_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // fails only if the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&format::read_file(path)?))
}

/// Hash of the dataset content, independent of file names.
fn dataset_sha256(ds: &LabeledDataset) -> String {
    let mut h = Sha256::new();
    h.update(ds.embeddings.to_bytes());
    h.update(encode_labels(&ds.labels));
    for name in &ds.class_names {
        h.update(name.as_bytes());
        h.update([0]);
    }
    for (split, rows) in &ds.splits {
        h.update(split.as_bytes());
        for r in rows {
            h.update((*r as u64).to_le_bytes());
        }
    }
    h.update([ds.normalize as u8]);
    hex::encode(h.finalize())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn train_features(ds: &LabeledDataset) -> Result<EmbeddingMatrix<f64>> {
    let train = ds.split(TRAIN_SPLIT)?;
    if train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    Ok(ds.features::<f64>()?.select_rows(train))
}

#[derive(Debug, Clone)]
pub struct BuildDictOptions {
    pub manifest: PathBuf,
    pub pca_dim: usize,
    pub kind: CovarianceKind,
    pub max_per_class: Option<usize>,
    pub seed: u64,
    /// Build superclass Gaussians keyed by query class instead.
    pub shift_map: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BuildDictOutput {
    pub pca: PcaModel<f64>,
    pub dictionary: GaussianDictionary<f64>,
    pub pca_path: PathBuf,
    pub dictionary_path: PathBuf,
    pub provenance_path: PathBuf,
}

/// Fits PCA on the train split and one Gaussian per class (or superclass).
pub fn build_dict(opts: &BuildDictOptions) -> Result<BuildDictOutput> {
    let ds = load_dataset(&opts.manifest)?;
    let pca = fit_pca(&train_features(&ds)?, opts.pca_dim)?;

    let (dictionary, shift) = match &opts.shift_map {
        Some(path) => {
            let map = SuperclassMap::read(path)?;
            let dict = build_superclass_dictionary(&map, &ds, &pca, opts.kind)?;
            let info = json!({ "k": map.k, "queries": map.n_test(), "map_sha256": file_sha256(path)? });
            (dict, Some(info))
        }
        None => (
            build_dictionary(&ds, &pca, opts.kind, opts.max_per_class, opts.seed)?,
            None,
        ),
    };

    let pca_path = opts.out.join(PCA_FILE);
    let dictionary_path = opts.out.join(dictionary_file(opts.kind));
    let provenance_path = opts.out.join(provenance_file(opts.kind));
    let pca_bytes = pca.to_bytes();
    let dict_bytes = dictionary.to_bytes();
    write_atomic(&pca_path, &pca_bytes)?;
    write_atomic(&dictionary_path, &dict_bytes)?;
    // read back what landed on disk
    if PcaModel::<f64>::read(&pca_path)? != pca || GaussianDictionary::<f64>::read(&dictionary_path)?.to_bytes() != dict_bytes {
        return Err(Error::Malformed {
            what: "written model",
            detail: "read-back does not match".into(),
        });
    }

    let provenance = json!({
        "command": "build-dict",
        "inputs": {
            "manifest_sha256": file_sha256(&opts.manifest)?,
            "dataset_sha256": dataset_sha256(&ds),
        },
        "parameters": {
            "pca_dim": opts.pca_dim,
            "covariance": opts.kind,
            "max_per_class": opts.max_per_class,
            "seed": opts.seed,
            "ridge_scale": crate::gaussian_dict::RIDGE_SCALE,
            "variance_floor": crate::gaussian_dict::VARIANCE_FLOOR,
        },
        "label_shift": shift,
        "dictionary": {
            "classes": dictionary.len(),
            "regularized": dictionary.provenance.regularized.iter()
                .map(|(c, r)| (c.to_string(), *r)).collect::<BTreeMap<_, _>>(),
            "excluded": dictionary.provenance.excluded,
        },
        "outputs": {
            "pca_sha256": sha256_hex(&pca_bytes),
            "dictionary_sha256": sha256_hex(&dict_bytes),
        },
    });
    write_json(&provenance_path, &provenance)?;

    Ok(BuildDictOutput {
        pca,
        dictionary,
        pca_path,
        dictionary_path,
        provenance_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemperatureMode {
    Fixed(f64),
    /// Fit by NLL on a seeded slice of the train split.
    Fit,
}

impl std::str::FromStr for TemperatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "fit" {
            return Ok(TemperatureMode::Fit);
        }
        match s.parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(TemperatureMode::Fixed(t)),
            _ => Err(Error::InvalidArgument(format!(
                "temperature must be `fit` or a positive number, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub manifest: PathBuf,
    pub text_bank: PathBuf,
    /// Directory holding `pca.vlmp` and one or both dictionary files.
    pub dict_dir: PathBuf,
    pub logit_scale: f64,
    pub temperature: TemperatureMode,
    pub tau: Option<f64>,
    pub tau_steps: usize,
    pub seed: u64,
    /// Recorded in the report; the dictionary itself must already be keyed by query class.
    pub shift_map: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EvaluateOutput {
    pub samples: Vec<SampleScores<f64>>,
    pub reports: Vec<EvaluationReport>,
    pub temperature: f64,
    pub accuracy: f64,
}

fn calibration_rows(train: &[usize], seed: u64) -> Vec<usize> {
    let want = ((train.len() as f64 * CALIBRATION_FRACTION).round() as usize)
        .max(MIN_CALIBRATION_SAMPLES)
        .min(train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = rand::seq::index::sample(&mut rng, train.len(), want)
        .into_iter()
        .map(|i| train[i])
        .collect();
    rows.sort_unstable();
    rows
}

fn resolve_temperature(
    mode: TemperatureMode,
    ds: &LabeledDataset,
    features: &EmbeddingMatrix<f64>,
    bank: &TextBank<f64>,
    logit_scale: f64,
    seed: u64,
) -> Result<f64> {
    match mode {
        TemperatureMode::Fixed(t) => Ok(t),
        TemperatureMode::Fit => {
            let train = ds.split(TRAIN_SPLIT).map_err(|_| {
                Error::InvalidArgument(
                    "fitting the temperature needs a train split; pass a fixed value instead".into(),
                )
            })?;
            let rows = calibration_rows(train, seed);
            let profiles = profiles_for_rows(features, &rows, bank, logit_scale)?;
            calibrate_temperature(&profiles, &ds.labels_of(&rows))
        }
    }
}

fn load_dictionaries(dir: &Path) -> Result<Vec<GaussianDictionary<f64>>> {
    let mut dicts = Vec::new();
    for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
        let path = dir.join(dictionary_file(kind));
        if path.exists() {
            dicts.push(GaussianDictionary::read(&path)?);
        }
    }
    if dicts.is_empty() {
        return Err(Error::MissingFile(dir.join(dictionary_file(CovarianceKind::Full))));
    }
    Ok(dicts)
}

/// Per-method scored samples, in [`Method::ALL`] order, skipping methods
/// that were not computed.
pub fn scored_by_method(samples: &[SampleScores<f64>]) -> Vec<(Method, Vec<ScoredSample<f64>>)> {
    let mut by: BTreeMap<Method, Vec<ScoredSample<f64>>> = BTreeMap::new();
    for s in samples {
        for (m, confidence) in s.confidences() {
            by.entry(m).or_default().push(ScoredSample {
                confidence,
                correct: s.correct,
            });
        }
    }
    Method::ALL
        .into_iter()
        .filter_map(|m| by.remove(&m).map(|v| (m, v)))
        .collect()
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn scores_csv(samples: &[SampleScores<f64>]) -> String {
    let mut out = String::from(
        "sample_index,true_class,predicted_class,correct,method,confidence,p_max,s_d,log_likelihood,s_unc\n",
    );
    for s in samples {
        let head = format!(
            "{},{},{},{}",
            s.sample_index, s.true_class, s.predicted_class, s.correct as u8
        );
        for &(m, c) in &s.baselines {
            let _ = writeln!(out, "{head},{m},{},{},,,", fmt_f64(c), fmt_f64(s.p_max));
        }
        for u in &s.fused {
            let _ = writeln!(
                out,
                "{head},{},{},{},{},{},{}",
                u.method,
                fmt_f64(u.confidence()),
                fmt_f64(u.p_max),
                fmt_f64(u.s_d),
                fmt_f64(u.log_likelihood),
                fmt_f64(u.s_unc)
            );
        }
    }
    out
}

/// Scores the test split with every available method and writes the CSV,
/// reports and run metadata.
pub fn evaluate(opts: &EvaluateOptions) -> Result<EvaluateOutput> {
    if !(opts.logit_scale > 0.0) {
        return Err(Error::InvalidArgument("logit scale must be positive".into()));
    }
    let ds = load_dataset(&opts.manifest)?;
    let text = EmbeddingMatrix::read(&opts.text_bank)?;
    if text.dims() != ds.dims() {
        return Err(Error::DimensionMismatch {
            expected: ds.dims(),
            found: text.dims(),
        });
    }
    let bank = TextBank::new(&text.cast::<f64>())?;
    let pca = PcaModel::<f64>::read(&opts.dict_dir.join(PCA_FILE))?;
    let dicts = load_dictionaries(&opts.dict_dir)?;
    let shift = opts.shift_map.as_deref().map(SuperclassMap::read).transpose()?;
    if let Some(map) = &shift {
        if map.n_test() != bank.classes() {
            return Err(Error::InvalidArgument(format!(
                "label-shift map covers {} query classes but the text bank has {}",
                map.n_test(),
                bank.classes()
            )));
        }
    }

    let features = ds.features::<f64>()?;
    let temperature = resolve_temperature(
        opts.temperature,
        &ds,
        &features,
        &bank,
        opts.logit_scale,
        opts.seed,
    )?;
    let config = ScoringConfig {
        logit_scale: opts.logit_scale,
        temperature: Some(temperature),
    };
    let dict_refs: Vec<&GaussianDictionary<f64>> = dicts.iter().collect();
    let samples = score_dataset(&ds, &bank, &pca, &dict_refs, &config)?;

    let accuracy = samples.iter().filter(|s| s.correct).count() as f64 / samples.len() as f64;
    let taus = tau_grid(opts.tau_steps);
    let suffix = if shift.is_some() { "-LS" } else { "" };
    let reports: Vec<EvaluationReport> = scored_by_method(&samples)
        .iter()
        .map(|(m, scored)| {
            EvaluationReport::compute(&format!("{m}{suffix}"), scored, accuracy, &taus)
        })
        .collect();

    write_atomic(&opts.out.join(SCORES_FILE), scores_csv(&samples).as_bytes())?;
    write_json(&opts.out.join(REPORT_JSON), &reports)?;
    let mut table = String::new();
    if let Some(map) = &shift {
        let _ = writeln!(table, "label shift: K = {}, {} query classes", map.k, map.n_test());
    }
    let _ = writeln!(table, "logit scale = {}, temperature = {temperature}", opts.logit_scale);
    table.push_str(&format_table(&reports));
    write_atomic(&opts.out.join(REPORT_TABLE), table.as_bytes())?;

    if let Some(tau) = opts.tau {
        let mut out = String::from("sample_index,method,s_unc,decision\n");
        for s in &samples {
            for u in &s.fused {
                let decision = if u.rejects(tau) { "reject" } else { "retain" };
                let _ = writeln!(out, "{},{},{},{decision}", s.sample_index, u.method, fmt_f64(u.s_unc));
            }
        }
        write_atomic(&opts.out.join(DECISIONS_FILE), out.as_bytes())?;
    }

    let metadata = json!({
        "command": "evaluate",
        "logit_scale": opts.logit_scale,
        "temperature": temperature,
        "temperature_mode": match opts.temperature {
            TemperatureMode::Fit => "fit".to_owned(),
            TemperatureMode::Fixed(t) => t.to_string(),
        },
        "pca_dim": pca.output_dim(),
        "covariance": dicts.iter().map(|d| d.kind()).collect::<Vec<_>>(),
        "seed": opts.seed,
        "tau": opts.tau,
        "label_shift_k": shift.as_ref().map(|m| m.k),
        "test_samples": samples.len(),
        "accuracy": accuracy,
        "inputs": {
            "manifest_sha256": file_sha256(&opts.manifest)?,
            "dataset_sha256": dataset_sha256(&ds),
            "text_bank_sha256": file_sha256(&opts.text_bank)?,
            "pca_sha256": file_sha256(&opts.dict_dir.join(PCA_FILE))?,
            "dictionaries_sha256": dicts.iter()
                .map(|d| (d.kind().as_str(), sha256_hex(&d.to_bytes())))
                .collect::<BTreeMap<_, _>>(),
        },
    });
    write_json(&opts.out.join(METADATA_FILE), &metadata)?;

    Ok(EvaluateOutput {
        samples,
        reports,
        temperature,
        accuracy,
    })
}

#[derive(Debug, Clone)]
pub struct DiagnoseOptions {
    pub manifest: PathBuf,
    pub pca_dim: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionStatus {
    Ok(ClassCondition<f64>),
    RankDeficient(ClassCondition<f64>),
    Insufficient { samples: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOutput {
    /// `(class, space, status)` rows in CSV order.
    pub rows: Vec<(usize, SpaceTag, ConditionStatus)>,
}

impl DiagnoseOutput {
    pub fn median(&self, space: SpaceTag) -> Option<f64> {
        let mut v: Vec<f64> = self
            .rows
            .iter()
            .filter(|(_, s, _)| *s == space)
            .filter_map(|(_, _, st)| match st {
                ConditionStatus::Ok(c) | ConditionStatus::RankDeficient(c) => Some(c.log10_condition),
                ConditionStatus::Insufficient { .. } => None,
            })
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
    }
}

fn condition_status(rows: &EmbeddingMatrix<f64>) -> Result<ConditionStatus> {
    if rows.rows() < 2 {
        return Ok(ConditionStatus::Insufficient {
            samples: rows.rows(),
        });
    }
    let c = class_condition(rows)?;
    Ok(if c.rank_deficient {
        ConditionStatus::RankDeficient(c)
    } else {
        ConditionStatus::Ok(c)
    })
}

/// Per-class log10 condition numbers before and after projection.
pub fn diagnose(opts: &DiagnoseOptions) -> Result<DiagnoseOutput> {
    let ds = load_dataset(&opts.manifest)?;
    let features = ds.features::<f64>()?;
    let train = ds.split(TRAIN_SPLIT)?;
    let pca = fit_pca(&features.select_rows(train), opts.pca_dim)?;
    let partitions = partition_by_class(&ds, TRAIN_SPLIT)?;

    let mut rows = Vec::new();
    let mut csv = String::from(
        "class_index,class_name,space,samples,lambda_max,lambda_min,log10_condition,status\n",
    );
    for p in &partitions.partitions {
        let raw = features.select_rows(&p.row_indices);
        let projected = pca.project(&raw)?;
        for (space, m) in [(SpaceTag::Raw, &raw), (SpaceTag::Projected, &projected)] {
            let status = condition_status(m)?;
            let name = ds.class_names[p.class_index].replace(['"', ','], " ");
            let line = match &status {
                ConditionStatus::Ok(c) | ConditionStatus::RankDeficient(c) => format!(
                    "{},{},{},{},{},{},{},{}",
                    p.class_index,
                    name,
                    space.as_str(),
                    c.samples,
                    fmt_f64(c.lambda_max),
                    fmt_f64(c.lambda_min),
                    fmt_f64(c.log10_condition),
                    if c.rank_deficient { "rank_deficient" } else { "ok" }
                ),
                ConditionStatus::Insufficient { samples } => format!(
                    "{},{},{},{samples},,,,insufficient",
                    p.class_index,
                    name,
                    space.as_str()
                ),
            };
            csv.push_str(&line);
            csv.push('\n');
            rows.push((p.class_index, space, status));
        }
    }
    write_atomic(&opts.out.join(CONDITION_FILE), csv.as_bytes())?;
    Ok(DiagnoseOutput { rows })
}

/// Reads `(method, scored sample)` rows back from a scores CSV.
pub fn read_scores_csv(path: &Path) -> Result<Vec<(Method, Vec<ScoredSample<f64>>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::InvalidArgument(format!("scores file lacks column `{name}`")))
    };
    let (mc, cc, kc) = (col("method")?, col("confidence")?, col("correct")?);
    let mut by: BTreeMap<Method, Vec<ScoredSample<f64>>> = BTreeMap::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::InvalidArgument(format!("scores file line {}: `{line}`", i + 2));
        let method: Method = f.get(mc).ok_or_else(bad)?.parse()?;
        let confidence: f64 = f.get(cc).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let correct = match *f.get(kc).ok_or_else(bad)? {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad()),
        };
        by.entry(method).or_default().push(ScoredSample { confidence, correct });
    }
    Ok(Method::ALL
        .into_iter()
        .filter_map(|m| by.remove(&m).map(|v| (m, v)))
        .collect())
}

pub fn sweep_csv(curves: &[(Method, Vec<(f64, f64)>)]) -> String {
    let mut out = String::from("method,tau,f1\n");
    for (m, curve) in curves {
        for (tau, f1) in curve {
            let _ = writeln!(out, "{m},{},{}", fmt_f64(*tau), fmt_f64(*f1));
        }
    }
    out
}

/// F1 against the rejection threshold for each method. Uncertainty is
/// `1 - confidence`, so the sweep is meaningful for confidences in `[0, 1]`.
pub fn sweep_threshold(
    scored: &[(Method, Vec<ScoredSample<f64>>)],
    tau_steps: usize,
    out: &Path,
) -> Result<Vec<(Method, Vec<(f64, f64)>)>> {
    if scored.iter().all(|(_, v)| v.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let taus = tau_grid(tau_steps);
    let curves: Vec<_> = scored
        .iter()
        .map(|(m, v)| (*m, f1_sweep(v, &taus)))
        .collect();
    write_atomic(&out.join(SWEEP_FILE), sweep_csv(&curves).as_bytes())?;
    Ok(curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Separable,
    Anisotropic,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(SyntheticKind::Separable),
            "anisotropic" => Ok(SyntheticKind::Anisotropic),
            other => Err(Error::InvalidArgument(format!(
                "synthetic kind must be `separable` or `anisotropic`, got `{other}`"
            ))),
        }
    }
}

pub const SYNTHETIC_MANIFEST: &str = "dataset.json";
pub const SYNTHETIC_TEXT_BANK: &str = "text_bank.vlme";

/// Writes `dataset.json` (plus sidecars) and, for the separable kind,
/// `text_bank.vlme` into `out`. `classes` overrides the generator default.
pub fn gen_synthetic(
    kind: SyntheticKind,
    seed: u64,
    classes: Option<usize>,
    out: &Path,
) -> Result<LabeledDataset> {
    if classes.is_some_and(|c| c < 2) {
        return Err(Error::InvalidArgument("synthetic data needs at least 2 classes".into()));
    }
    match kind {
        SyntheticKind::Separable => {
            let defaults = SeparableConfig::default();
            let bundle = synthetic::separable(&SeparableConfig {
                seed,
                classes: classes.unwrap_or(defaults.classes),
                ..defaults
            })?;
            save_dataset(&bundle.dataset, &out.join(SYNTHETIC_MANIFEST))?;
            bundle.text_bank.write(&out.join(SYNTHETIC_TEXT_BANK))?;
            Ok(bundle.dataset)
        }
        SyntheticKind::Anisotropic => {
            let defaults = AnisotropicConfig::default();
            let ds = synthetic::anisotropic(&AnisotropicConfig {
                seed,
                classes: classes.unwrap_or(defaults.classes),
                ..defaults
            })?;
            save_dataset(&ds, &out.join(SYNTHETIC_MANIFEST))?;
            Ok(ds)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_mode_parsing() {
        assert_eq!("fit".parse::<TemperatureMode>().unwrap(), TemperatureMode::Fit);
        assert_eq!("1.5".parse::<TemperatureMode>().unwrap(), TemperatureMode::Fixed(1.5));
        assert!("-1".parse::<TemperatureMode>().is_err());
        assert!("warm".parse::<TemperatureMode>().is_err());
    }

    #[test]
    fn calibration_slice_is_seeded_and_bounded() {
        let train: Vec<usize> = (0..30).collect();
        let a = calibration_rows(&train, 1);
        assert_eq!(a.len(), MIN_CALIBRATION_SAMPLES);
        assert_eq!(a, calibration_rows(&train, 1));
        let big: Vec<usize> = (0..1000).collect();
        assert_eq!(calibration_rows(&big, 0).len(), 200);
        assert_eq!(calibration_rows(&train[..4], 0).len(), 4);
    }
}
