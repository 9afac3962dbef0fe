//! Pipeline steps. Each step validates all of its inputs before it creates
//! the output directory or writes a file.

use std::fs;
use std::path::{Path, PathBuf};

use anomman_core::io::{load_network, read_ground_truth, write_ground_truth, write_network};
use anomman_core::lab::{accuracy_at_k, auc_roc, inject as plant, rank_descending, synthetic, Roc};
use anomman_core::model::anomaly_scores;
use anomman_core::spectral::{signal_spectrum, spectrum};
use anomman_core::train::train as fit;
use anomman_core::{Checkpoint, Error, GroundTruth, HyperParams, MultiViewNetwork, Prepared, Result, SpectrumReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{
    ANOMALIES_FILE, CHECKPOINT_FILE, DATASET_DIR, METRICS_FILE, REPORT_FILE, ROC_FILE, SCORES_FILE, SWEEP_FILE,
    SWEEP_JSON_FILE,
};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

/// Fails early when the output location is taken by a regular file.
fn check_output_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(Error::Invalid(format!(
            "output path {} is not a directory",
            dir.display()
        )));
    }
    Ok(())
}

/// Plants anomalies into the configured dataset. Returns the manifest of the
/// perturbed copy and the ground truth.
pub fn inject(cfg: &RunConfig) -> Result<(PathBuf, GroundTruth)> {
    let network = load_network(cfg.dataset()?)?;
    let out = cfg.output_dir()?;
    check_output_dir(out)?;
    let spec = cfg.injection_spec();
    spec.validate(&network)?;
    let (perturbed, truth) = plant(&network, &spec)?;

    create_dir(out)?;
    let manifest = write_network(&perturbed, &out.join(DATASET_DIR))?;
    write_ground_truth(&truth.anomalous_ids(), &cfg.ground_truth_path()?)?;
    let mut table = String::from("node_id\tmechanism\n");
    for id in truth.anomalous_ids() {
        table.push_str(&format!("{id}\t{}\n", mechanism_name(truth.mechanism[id])));
    }
    write(&out.join(ANOMALIES_FILE), &table)?;
    log::info!("planted {} anomalies into {}", truth.count(), manifest.display());
    Ok((manifest, truth))
}

fn mechanism_name(m: anomman_core::Mechanism) -> &'static str {
    use anomman_core::Mechanism::*;
    match m {
        None => "none",
        Structural => "structural",
        Attribute => "attribute",
        Unknown => "unknown",
    }
}

fn train_checked(network: &MultiViewNetwork, hp: &HyperParams) -> Result<()> {
    hp.validate()?;
    if hp.epochs == 0 {
        return Err(Error::Invalid("epochs must be at least 1".into()));
    }
    // catches shape problems such as an empty attribute matrix up front
    Prepared::new(network, hp).map(|_| ())
}

/// Trains on the configured dataset and writes the checkpoint and the
/// per-epoch report. A diverged run still leaves its partial report behind.
pub fn train(cfg: &RunConfig) -> Result<Checkpoint> {
    let network = load_network(cfg.dataset()?)?;
    let out = cfg.output_dir()?;
    check_output_dir(out)?;
    let hp = cfg.hyper();
    train_checked(&network, &hp)?;

    match fit(&network, &hp) {
        Ok((params, report)) => {
            create_dir(out)?;
            let checkpoint = Checkpoint::new(&network, hp, params);
            checkpoint.save(&out.join(CHECKPOINT_FILE))?;
            write(&out.join(REPORT_FILE), &report.to_tsv())?;
            Ok(checkpoint)
        }
        Err(Error::Divergence { epoch, report }) => {
            create_dir(out)?;
            write(&out.join(REPORT_FILE), &report.to_tsv())?;
            log::error!(
                "partial report for {epoch} epochs written to {}",
                out.join(REPORT_FILE).display()
            );
            Err(Error::Divergence { epoch, report })
        }
        Err(e) => Err(e),
    }
}

/// One row of the scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub node_id: usize,
    pub score: f64,
    pub rank: usize,
}

pub fn scores_csv(scores: &[f64]) -> String {
    let mut out = String::from("node_id,score,rank\n");
    for (r, i) in rank_descending(scores).into_iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", scores[i], r + 1));
    }
    out
}

/// Reads a scores file back into per-node scores, in node order.
pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let format = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => format(1, format!("{other:?}")),
    })?;
    let header = reader.headers().map_err(|e| format(1, e.to_string()))?;
    if header != vec!["node_id", "score", "rank"] {
        return Err(format(1, "expected header node_id,score,rank".into()));
    }
    let mut rows: Vec<ScoreRow> = Vec::new();
    for (idx, row) in reader.deserialize().enumerate() {
        rows.push(row.map_err(|e: csv::Error| format(idx + 2, e.to_string()))?);
    }
    let n = rows.len();
    let mut scores = vec![None; n];
    for (idx, row) in rows.iter().enumerate() {
        if row.node_id >= n || scores[row.node_id].is_some() {
            return Err(format(
                idx + 2,
                format!("node ids must be a permutation of 0..{n}; got {}", row.node_id),
            ));
        }
        if !row.score.is_finite() {
            return Err(format(idx + 2, "score is not finite".into()));
        }
        scores[row.node_id] = Some(row.score);
    }
    Ok(scores.into_iter().map(|s| s.expect("every id seen")).collect())
}

/// Scores every node with a trained checkpoint.
pub fn score(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Vec<f64>> {
    let network = load_network(cfg.dataset()?)?;
    let out = cfg.output_dir()?;
    check_output_dir(out)?;
    let cp_path = checkpoint.map_or_else(|| out.join(CHECKPOINT_FILE), Path::to_path_buf);
    let checkpoint = Checkpoint::load(&cp_path)?;
    checkpoint.check_compatible(&network)?;
    let prepared = Prepared::new(&network, &checkpoint.hyper)?;
    let scores = anomaly_scores(&prepared, &checkpoint.params, &checkpoint.hyper)?;

    create_dir(out)?;
    write(&out.join(SCORES_FILE), &scores_csv(&scores))?;
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyAtK {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub anomalies: usize,
    pub auc: f64,
    pub accuracy_at_k: Vec<AccuracyAtK>,
}

/// Accuracy@K for every configured K plus the ROC curve.
pub fn metrics(scores: &[f64], labels: &[bool], k_list: &[usize]) -> Result<(Metrics, Roc)> {
    let roc = auc_roc(scores, labels)?;
    let accuracy_at_k = k_list
        .iter()
        .map(|&k| {
            Ok(AccuracyAtK {
                k,
                accuracy: accuracy_at_k(scores, labels, k)?,
            })
        })
        .collect::<Result<_>>()?;
    let m = Metrics {
        n: scores.len(),
        anomalies: labels.iter().filter(|&&l| l).count(),
        auc: roc.auc,
        accuracy_at_k,
    };
    Ok((m, roc))
}

fn load_truth(cfg: &RunConfig, n: usize) -> Result<GroundTruth> {
    let path = cfg.ground_truth_path()?;
    GroundTruth::from_ids(n, &read_ground_truth(&path, n)?)
}

/// Evaluates a scores file against the ground truth.
pub fn eval(cfg: &RunConfig, scores_path: Option<&Path>) -> Result<Metrics> {
    let out = cfg.output_dir()?;
    check_output_dir(out)?;
    let path = scores_path.map_or_else(|| out.join(SCORES_FILE), Path::to_path_buf);
    let scores = read_scores(&path)?;
    let n = scores.len();
    cfg.validate_k_list(n)?;
    let truth = load_truth(cfg, n)?;
    let (m, roc) = metrics(&scores, &truth.labels(), &cfg.k_list)?;

    create_dir(out)?;
    write(&out.join(METRICS_FILE), &to_json(&m))?;
    write(&out.join(ROC_FILE), &roc.to_tsv())?;
    Ok(m)
}

fn file_stem(view: &str) -> String {
    view.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Spectrum of each requested view (all views when `views` is empty),
/// written as `spectrum_<view>.tsv`. With `signal_column`, that attribute
/// column is analysed as a graph signal.
pub fn spectral(
    cfg: &RunConfig,
    views: &[String],
    num_top: Option<usize>,
    signal_column: Option<usize>,
) -> Result<Vec<(String, SpectrumReport)>> {
    let network = load_network(cfg.dataset()?)?;
    let out = cfg.output_dir()?;
    check_output_dir(out)?;
    let names: Vec<String> = if views.is_empty() {
        network.views().iter().map(|v| v.name().to_string()).collect()
    } else {
        views.to_vec()
    };
    for name in &names {
        if network.view_by_name(name).is_none() {
            return Err(Error::Invalid(format!("unknown view '{name}'")));
        }
    }
    if let Some(c) = signal_column {
        if c >= network.d() {
            return Err(Error::Invalid(format!(
                "signal column {c} out of range for {} attributes",
                network.d()
            )));
        }
    }
    if num_top == Some(0) {
        return Err(Error::Invalid("--top must be positive".into()));
    }
    let order = cfg.hyper().filter_order;

    let mut reports = Vec::with_capacity(names.len());
    for name in names {
        let view = network.view_by_name(&name).expect("checked above");
        let report = match signal_column {
            Some(c) => {
                let signal: Vec<f64> = network.attributes().rows().map(|r| r[c]).collect();
                signal_spectrum(view, &signal, order)?
            }
            None => spectrum(view, num_top, order)?,
        };
        reports.push((name, report));
    }
    create_dir(out)?;
    for (name, report) in &reports {
        write(&out.join(format!("spectrum_{}.tsv", file_stem(name))), &report.to_tsv())?;
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub metrics: Metrics,
}

/// Trains and evaluates once per structure weight.
pub fn sweep_epsilon(cfg: &RunConfig) -> Result<Vec<SweepRecord>> {
    let network = load_network(cfg.dataset()?)?;
    let out = cfg.output_dir()?;
    check_output_dir(out)?;
    cfg.validate_sweep()?;
    cfg.validate_k_list(network.n())?;
    let truth = load_truth(cfg, network.n())?;
    let labels = truth.labels();
    let base = cfg.hyper();
    train_checked(&network, &base)?;

    let mut records = Vec::new();
    for epsilon in cfg.epsilons() {
        let hp = HyperParams {
            epsilon,
            ..base.clone()
        };
        let (params, _) = fit(&network, &hp)?;
        let prepared = Prepared::new(&network, &hp)?;
        let scores = anomaly_scores(&prepared, &params, &hp)?;
        let (m, _) = metrics(&scores, &labels, &cfg.k_list)?;
        log::info!("epsilon {epsilon}: auc {}", m.auc);
        records.push(SweepRecord { epsilon, metrics: m });
    }

    create_dir(out)?;
    let mut tsv = String::from("epsilon\tauc");
    for k in &cfg.k_list {
        tsv.push_str(&format!("\taccuracy@{k}"));
    }
    tsv.push('\n');
    for r in &records {
        tsv.push_str(&format!("{}\t{}", r.epsilon, r.metrics.auc));
        for a in &r.metrics.accuracy_at_k {
            tsv.push_str(&format!("\t{}", a.accuracy));
        }
        tsv.push('\n');
    }
    write(&out.join(SWEEP_FILE), &tsv)?;
    write(&out.join(SWEEP_JSON_FILE), &to_json(&records))?;
    Ok(records)
}

/// Writes the clean synthetic benchmark network and returns its manifest.
pub fn synth(out: &Path, seed: u64) -> Result<PathBuf> {
    check_output_dir(out)?;
    let network = synthetic::generate(&synthetic::SyntheticSpec::benchmark(seed))?;
    write_network(&network, out)
}
