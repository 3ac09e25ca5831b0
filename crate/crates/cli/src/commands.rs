use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use spectran_core::adapter::{weight_totals, Checkpoint, SpectralWeightReport};
use spectran_core::dataio::{
    chronological_split, load_embedding_matrix, load_interactions, synth_generate, write_emb1, write_interactions,
    DatasetStats, Partition, SplitDataset,
};
use spectran_core::evalkit::MetricsRow;
use spectran_core::model::Transform;
use spectran_core::spectral::cumulative_spectrum;
use spectran_core::train::{evaluate_model, train_model, EfficiencyReport, EpochLog};
use spectran_core::{Error, Matrix, Model, Result};

use crate::config::{require_file, RunConfig, CONFIG_ECHO};

pub const SPLITS_FILE: &str = "splits.bin";
pub const STATS_FILE: &str = "stats.json";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EFFICIENCY_FILE: &str = "efficiency.json";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const PROJECTED_SPECTRUM_FILE: &str = "spectrum_projected.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.emb1";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const ABORT_FILE: &str = "numerical_abort.json";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.run.out.clone();
    fs::create_dir_all(&out).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    write(&out.join(CONFIG_ECHO), cfg.to_toml())?;
    Ok(out)
}

/// Synthetic benchmark files: EMB1 embeddings and a TSV interaction log.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let synth = cfg.synth_config();
    synth.validate()?;
    let out = prepare_out(cfg)?;
    let data = synth_generate(&synth)?;
    write_emb1(out.join(EMBEDDINGS_FILE), &data.embeddings.cast::<f32>())?;
    write_interactions(out.join(INTERACTIONS_FILE), &data.log)?;
    eprintln!(
        "synth: {} items x {} dims, {} users, {} interactions",
        data.embeddings.rows(),
        data.embeddings.cols(),
        data.log.num_users(),
        data.log.len()
    );
    Ok(())
}

/// Filters and splits the interaction log; writes the split file and its statistics.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<DatasetStats> {
    let input = require_file(cfg.run.interactions.as_deref(), "run.interactions")?;
    let out = prepare_out(cfg)?;
    let log = load_interactions(&input, cfg.run.min_count)?;
    let split = chronological_split(&log, cfg.split_ratios(), cfg.model.max_len)?;
    split.save(cfg.splits_path())?;
    let stats = split.stats();
    write_json(&out.join(STATS_FILE), &stats)?;
    eprintln!(
        "preprocess: {} users ({} / {} / {}), {} items, {} interactions",
        stats.users,
        split.partition_len(Partition::Train),
        split.partition_len(Partition::Valid),
        split.partition_len(Partition::Test),
        stats.items,
        stats.interactions
    );
    Ok(stats)
}

fn load_split(cfg: &RunConfig) -> Result<SplitDataset> {
    let path = require_file(Some(&cfg.splits_path()), "run.splits (run preprocess first)")?;
    let split = SplitDataset::load(path)?;
    if split.max_len() != cfg.model.max_len {
        return Err(Error::Config(format!(
            "split was built with max_len {} but model.max_len is {}",
            split.max_len(),
            cfg.model.max_len
        )));
    }
    Ok(split)
}

/// Semantic embeddings aligned with the split's dense item ids. Row `r` of
/// the file belongs to raw item id `r`.
fn load_aligned_embeddings(cfg: &RunConfig, split: &SplitDataset) -> Result<Option<Matrix>> {
    if !cfg.needs_embeddings()? {
        return Ok(None);
    }
    let path = require_file(cfg.run.embeddings.as_deref(), "run.embeddings")?;
    let e: Matrix = load_embedding_matrix(&path)?;
    let rows: Vec<usize> = split
        .item_ids()
        .iter()
        .map(|&raw| {
            usize::try_from(raw)
                .ok()
                .filter(|&r| r < e.rows())
                .ok_or_else(|| Error::Data(format!("item id {raw} has no row in {} ({} rows)", path.display(), e.rows())))
        })
        .collect::<Result<_>>()?;
    if rows.iter().enumerate().all(|(i, &r)| i == r) && rows.len() == e.rows() {
        Ok(Some(e))
    } else {
        e.select_rows(&rows).map(Some)
    }
}

fn build_model(cfg: &RunConfig, split: &SplitDataset) -> Result<Model> {
    let e = load_aligned_embeddings(cfg, split)?;
    Model::new(cfg.model_config()?, e.as_ref(), split.num_items(), cfg.run.seed)
}

fn load_model(cfg: &RunConfig, split: &SplitDataset, checkpoint: &Path) -> Result<Model> {
    let ck = Checkpoint::<f64>::load(checkpoint)?;
    let mut model = build_model(cfg, split)?;
    model.load_checkpoint(&ck)?;
    Ok(model)
}

fn write_metrics(out: &Path, row: &MetricsRow) -> Result<()> {
    write(&out.join(METRICS_CSV), row.to_csv())?;
    write_json(&out.join(METRICS_JSON), row)
}

/// Everything `train` reports.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub test: MetricsRow,
    pub efficiency: EfficiencyReport,
}

fn parameter_dump(model: &Model) -> serde_json::Value {
    let store = model.store();
    let tensors: Vec<serde_json::Value> = store
        .ids()
        .map(|id| {
            let v = store.value(id);
            serde_json::json!({
                "name": store.name(id),
                "shape": [v.rows(), v.cols()],
                "finite": v.is_finite(),
                "max_abs": if v.is_finite() { v.max_abs() } else { f64::NAN },
            })
        })
        .collect();
    serde_json::Value::Array(tensors)
}

/// Trains, writes the best checkpoint and reports test metrics of the reloaded checkpoint.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let split = load_split(cfg)?;
    let mut model = build_model(cfg, &split)?;
    let out = prepare_out(cfg)?;
    let log_path = out.join(TRAIN_LOG);
    let mut log = fs::File::create(&log_path).map_err(|source| Error::Io {
        path: log_path.clone(),
        source,
    })?;
    let mut seen: Vec<EpochLog> = Vec::new();
    let result = train_model(&mut model, &split, &cfg.train_config(), cfg.run.seed, |entry| {
        let line = serde_json::to_string(entry).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(log, "{line}").map_err(|source| Error::Io {
            path: log_path.clone(),
            source,
        })?;
        eprintln!(
            "epoch {:>3}  loss {:.5}  valid ndcg@20 {:.5}  {:.1}s",
            entry.epoch, entry.train_loss, entry.valid_ndcg20, entry.wall_clock_s
        );
        seen.push(entry.clone());
        Ok(())
    });
    let report = match result {
        Ok(r) => r,
        Err(e @ Error::Numerical(_)) => {
            let dump = serde_json::json!({
                "error": e.to_string(),
                "epochs": seen,
                "parameters": parameter_dump(&model),
            });
            write_json(&out.join(ABORT_FILE), &dump)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let ck_path = cfg.checkpoint_path();
    model.checkpoint().save(&ck_path)?;
    write_json(&out.join(EFFICIENCY_FILE), &report.efficiency)?;

    let reloaded = load_model(cfg, &split, &ck_path)?;
    let test = evaluate_model(&reloaded, &split, Partition::Test, &cfg.train_config().eval)?;
    write_metrics(&out, &test)?;
    eprintln!(
        "train: best epoch {} of {}, test ndcg@20 {:.5}, {} trainable parameters ({} in the adapter)",
        report.best_epoch, report.epochs_run, test.ndcg20, report.efficiency.trainable_params, report.efficiency.adapter_params
    );
    Ok(TrainOutcome {
        best_epoch: report.best_epoch,
        epochs_run: report.epochs_run,
        test,
        efficiency: report.efficiency,
    })
}

/// Test-partition metrics of a checkpoint.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<MetricsRow> {
    let ck = checkpoint.map_or_else(|| cfg.checkpoint_path(), Path::to_path_buf);
    let ck = require_file(Some(&ck), "checkpoint")?;
    let split = load_split(cfg)?;
    let model = load_model(cfg, &split, &ck)?;
    let out = prepare_out(cfg)?;
    let row = evaluate_model(&model, &split, Partition::Test, &cfg.train_config().eval)?;
    write_metrics(&out, &row)?;
    println!("{}", MetricsRow::CSV_HEADER);
    println!("{}", row.csv_row());
    Ok(row)
}

#[derive(Clone, Debug, Default)]
pub struct DiagnoseOptions {
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Fail unless the checkpoint carries a spectral transform.
    pub require_weights: bool,
    pub top_k: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnosis {
    pub raw_top10: Option<f64>,
    pub projected_top10: Option<f64>,
    pub weights: Option<SpectralWeightReport>,
}

fn spectrum_csv(e: &Matrix, top_k: Option<usize>, path: &Path) -> Result<f64> {
    let k = top_k.unwrap_or(e.cols()).min(e.cols());
    let report = cumulative_spectrum(e, k)?;
    write(path, report.to_csv())?;
    Ok(report.fraction_at(10))
}

/// Cumulative covariance spectra of raw and projected embeddings, and the
/// principal/subordinate weight totals of a spectral checkpoint.
pub fn cmd_diagnose(cfg: &RunConfig, opts: &DiagnoseOptions) -> Result<Diagnosis> {
    let mut cfg = cfg.clone();
    if let Some(e) = &opts.embeddings {
        cfg.run.embeddings = Some(e.clone());
    }
    let explicit_ck = opts.checkpoint.clone().or_else(|| cfg.run.checkpoint.clone());
    let checkpoint = match explicit_ck {
        Some(p) => Some(require_file(Some(&p), "checkpoint")?),
        None => Some(cfg.checkpoint_path()).filter(|p| p.is_file()),
    };
    if cfg.run.embeddings.is_none() && checkpoint.is_none() {
        return Err(Error::Config("diagnose needs run.embeddings or a checkpoint".into()));
    }
    if opts.require_weights && checkpoint.is_none() {
        return Err(Error::Config("the weight report needs a checkpoint".into()));
    }
    let out = prepare_out(&cfg)?;
    let mut diag = Diagnosis::default();
    if let Some(p) = &cfg.run.embeddings {
        let path = require_file(Some(p), "run.embeddings")?;
        let e: Matrix = load_embedding_matrix(&path)?;
        diag.raw_top10 = Some(spectrum_csv(&e, opts.top_k, &out.join(SPECTRUM_FILE))?);
    }
    if let Some(ck) = checkpoint {
        let split = load_split(&cfg)?;
        let model = load_model(&cfg, &split, &ck)?;
        let projected = match model.semantic_embeddings()? {
            Some(e) => e,
            None => model.item_table_value()?,
        };
        diag.projected_top10 = Some(spectrum_csv(&projected, opts.top_k, &out.join(PROJECTED_SPECTRUM_FILE))?);
        match (model.spectran_params(), model.spectral_sigma()) {
            (Some(p), Some(sigma)) => {
                let w = p.weight_matrix(model.store(), sigma)?;
                let report = weight_totals(&w, p.d());
                let text = format!(
                    "{}\n{}\n",
                    SpectralWeightReport::CSV_HEADER,
                    report.csv_row(&cfg.run.dataset)
                );
                write(&out.join(WEIGHTS_FILE), text)?;
                diag.weights = Some(report);
            }
            _ if opts.require_weights => {
                return Err(Error::Unsupported(format!(
                    "weight report needs a spectran checkpoint, this one uses transform {}",
                    model.config().transform
                )))
            }
            _ => {}
        }
        if model.config().transform == Transform::None {
            eprintln!("diagnose: checkpoint has no semantic transform; projected spectrum is of the ID table");
        }
    }
    if let Some(f) = diag.raw_top10 {
        eprintln!("diagnose: raw embeddings, top-10 covariance fraction {f:.4}");
    }
    if let Some(f) = diag.projected_top10 {
        eprintln!("diagnose: projected embeddings, top-10 covariance fraction {f:.4}");
    }
    Ok(diag)
}
