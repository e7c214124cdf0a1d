//! Staged batch pipeline: ingest → label → featurize → balance → tune →
//! train → vote → evaluate, with resumable on-disk artifacts and a hashed
//! manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cart::{Criterion, TreeParams};
use crate::dataio::{
    label_pairs, parse_transactions, split_windows, train_valid_split, ColumnMap, ParseMode,
    WindowConfig,
};
use crate::ensemble::{Member, VotingEnsemble};
use crate::features::{
    compute_rfmst, fit_standardizer, read_feature_csv, write_feature_csv, FeatureRow,
    NUM_FEATURES,
};
use crate::forest::{fit_forest, ForestParams};
use crate::gbdt::{fit_boosted, BoostParams, GossParams, Growth};
use crate::metrics::{confusion, prf1, repeated_eval};
use crate::model::{load_model, save_model, Model};
use crate::resample::{smote_enn, EnnParams, SmoteParams};
use crate::tpe::{
    grid_search, random_search, tune, Dim, ParamValue, SearchSpace, TpeParams, Trial, TrialStatus,
};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage '{stage}' failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("bad config: {0}")]
    Config(String),
}

fn stage_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Forest,
    GbdtDepthwise,
    GbdtGoss,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::GbdtDepthwise => "gbdt_depthwise",
            ModelKind::GbdtGoss => "gbdt_goss",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Falls back to the built-in space for the kind.
    #[serde(default)]
    pub space: Option<SearchSpace>,
    /// Per-dimension point counts when the tuner is `grid`.
    #[serde(default)]
    pub grid_counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunerChoice {
    Tpe,
    Random,
    Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunerConfig {
    pub choice: TunerChoice,
    /// Trial count for tpe/random; ignored by grid.
    pub budget: usize,
    pub seed: u64,
    #[serde(default = "default_grid_cap")]
    pub grid_cap: usize,
}

fn default_grid_cap() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Transaction CSV produced by an export or the `gen` subcommand.
    pub input: PathBuf,
    pub window: WindowConfig,
    #[serde(default)]
    pub columns: ColumnMap,
    #[serde(default = "default_parse_mode")]
    pub parse_mode: ParseMode,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub smote: SmoteParams,
    pub enn: EnnParams,
    pub models: Vec<ModelSpec>,
    pub tuner: TunerConfig,
    #[serde(default = "default_threshold")]
    pub voting_threshold: f64,
    pub train_seed: u64,
    #[serde(default = "default_eval_rounds")]
    pub eval_rounds: usize,
    pub eval_seed: u64,
    pub out_dir: PathBuf,
}

fn default_parse_mode() -> ParseMode {
    ParseMode::FailFast
}

fn default_threshold() -> f64 {
    0.5
}

fn default_eval_rounds() -> usize {
    10
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.window.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.models.is_empty() {
            return Err(PipelineError::Config("at least one model required".into()));
        }
        if !(0.0 < self.voting_threshold && self.voting_threshold < 1.0) {
            return Err(PipelineError::Config("voting_threshold must be in (0,1)".into()));
        }
        if self.eval_rounds == 0 {
            return Err(PipelineError::Config("eval_rounds must be >= 1".into()));
        }
        for m in &self.models {
            if let Some(space) = &m.space {
                space
                    .validate()
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Search spaces

/// Compact default spaces sized for interactive runs.
pub fn default_space(kind: ModelKind) -> SearchSpace {
    match kind {
        ModelKind::Forest => SearchSpace::new(vec![
            ("n_trees", Dim::IntUniform { lo: 5, hi: 60 }),
            ("max_depth", Dim::IntUniform { lo: 2, hi: 12 }),
            (
                "criterion",
                Dim::Categorical { choices: vec!["gini".into(), "entropy".into()] },
            ),
            ("max_features", Dim::IntUniform { lo: 1, hi: 5 }),
        ]),
        ModelKind::GbdtDepthwise => SearchSpace::new(vec![
            ("n_trees", Dim::IntUniform { lo: 10, hi: 120 }),
            ("learning_rate", Dim::LogUniform { lo: 0.02, hi: 0.3 }),
            ("max_depth", Dim::IntUniform { lo: 2, hi: 6 }),
            ("lambda", Dim::LogUniform { lo: 0.1, hi: 10.0 }),
        ]),
        ModelKind::GbdtGoss => SearchSpace::new(vec![
            ("n_trees", Dim::IntUniform { lo: 10, hi: 120 }),
            ("learning_rate", Dim::LogUniform { lo: 0.02, hi: 0.3 }),
            ("max_leaves", Dim::IntUniform { lo: 4, hi: 32 }),
            ("lambda", Dim::LogUniform { lo: 0.1, hi: 10.0 }),
        ]),
    }
}

/// The benchmark forest space: size (0,500], depth (10,30], criterion
/// {gini, entropy}, features per split (1,5].
pub fn benchmark_forest_space() -> SearchSpace {
    SearchSpace::new(vec![
        ("n_trees", Dim::IntUniform { lo: 0, hi: 500 }),
        ("max_depth", Dim::IntUniform { lo: 10, hi: 30 }),
        (
            "criterion",
            Dim::Categorical { choices: vec!["gini".into(), "entropy".into()] },
        ),
        ("max_features", Dim::IntUniform { lo: 1, hi: 5 }),
    ])
}

/// Grid counts that discretize `benchmark_forest_space` into 10·20·2·4 =
/// 1,600 configurations.
pub const BENCHMARK_FOREST_GRID: [usize; 4] = [10, 20, 2, 4];

fn lookup<'a>(space: &SearchSpace, config: &'a [ParamValue], name: &str) -> Option<&'a ParamValue> {
    space
        .dims
        .iter()
        .position(|d| d.name == name)
        .map(|i| &config[i])
}

fn get_usize(space: &SearchSpace, config: &[ParamValue], name: &str, default: usize) -> usize {
    lookup(space, config, name)
        .and_then(|v| v.as_i64())
        .map(|v| v.max(0) as usize)
        .unwrap_or(default)
}

fn get_f64(space: &SearchSpace, config: &[ParamValue], name: &str, default: f64) -> f64 {
    lookup(space, config, name)
        .and_then(|v| v.as_f64())
        .unwrap_or(default)
}

/// Instantiate and fit one ensemble member from a tuner configuration.
pub fn fit_member(
    kind: ModelKind,
    space: &SearchSpace,
    config: &[ParamValue],
    seed: u64,
    x: &[Vec<f64>],
    y: &[u8],
) -> Result<Member, String> {
    match kind {
        ModelKind::Forest => {
            let criterion = match lookup(space, config, "criterion").and_then(|v| v.as_str()) {
                Some("entropy") => Criterion::Entropy,
                _ => Criterion::Gini,
            };
            let params = ForestParams {
                n_trees: get_usize(space, config, "n_trees", 100),
                tree: TreeParams {
                    max_depth: get_usize(space, config, "max_depth", 10),
                    criterion,
                    max_features: get_usize(space, config, "max_features", NUM_FEATURES),
                    min_samples_leaf: 1,
                    seed: 0,
                },
                seed,
                bootstrap: true,
            };
            fit_forest(x, y, &params)
                .map(Member::Forest)
                .map_err(|e| e.to_string())
        }
        ModelKind::GbdtDepthwise | ModelKind::GbdtGoss => {
            let (growth, goss) = if kind == ModelKind::GbdtGoss {
                (
                    Growth::LeafWise { max_leaves: get_usize(space, config, "max_leaves", 31) },
                    Some(GossParams::default()),
                )
            } else {
                (
                    Growth::DepthWise { max_depth: get_usize(space, config, "max_depth", 6) },
                    None,
                )
            };
            let params = BoostParams {
                n_trees: get_usize(space, config, "n_trees", 100),
                learning_rate: get_f64(space, config, "learning_rate", 0.1),
                growth,
                lambda: get_f64(space, config, "lambda", 1.0),
                gamma: get_f64(space, config, "gamma", 0.0),
                subsample: 1.0,
                goss,
                seed,
            };
            fit_boosted(x, y, &params)
                .map(Member::Boosted)
                .map_err(|e| e.to_string())
        }
    }
}

// ---------------------------------------------------------------------------
// Tuning objective

/// 1 − F1 on the validation split at threshold 0.5; the tuners minimize it.
pub fn validation_objective(
    kind: ModelKind,
    space: &SearchSpace,
    config: &[ParamValue],
    seed: u64,
    train_x: &[Vec<f64>],
    train_y: &[u8],
    valid_x: &[Vec<f64>],
    valid_y: &[u8],
) -> Result<f64, String> {
    let member = fit_member(kind, space, config, seed, train_x, train_y)?;
    let preds: Vec<u8> = valid_x
        .iter()
        .map(|x| member.predict_proba(x).map(|p| u8::from(p >= 0.5)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let report = prf1(&confusion(valid_y, &preds).map_err(|e| e.to_string())?);
    Ok(1.0 - report.f1)
}

// ---------------------------------------------------------------------------
// Artifacts

pub const FEATURES_FILE: &str = "features.csv";
pub const BALANCED_FILE: &str = "balanced.csv";
pub const TUNING_FILE: &str = "tuning_history.jsonl";
pub const MODEL_FILE: &str = "ensemble.json";
pub const REPORT_FILE: &str = "eval_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Featurize,
    Balance,
    Tune,
    Train,
    Evaluate,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    /// Artifact files present after the run, relative to out_dir.
    pub artifacts: Vec<String>,
}

fn rows_to_xy(rows: &[FeatureRow]) -> (Vec<Vec<f64>>, Vec<u8>) {
    let x = rows.iter().map(|r| r.values.to_vec()).collect();
    let y = rows.iter().map(|r| r.label).collect();
    (x, y)
}

fn stage_featurize(cfg: &PipelineConfig, path: &Path) -> Result<Vec<FeatureRow>, PipelineError> {
    const STAGE: &str = "featurize";
    if path.exists() {
        let file = fs::File::open(path).map_err(stage_err(STAGE))?;
        return read_feature_csv(file).map_err(stage_err(STAGE));
    }
    let file = fs::File::open(&cfg.input).map_err(stage_err(STAGE))?;
    let outcome =
        parse_transactions(file, &cfg.columns, cfg.parse_mode).map_err(stage_err(STAGE))?;
    let (observation, forecast) = split_windows(&outcome.transactions, &cfg.window);
    let pairs = label_pairs(&observation, &forecast);
    let rows: Vec<FeatureRow> = pairs
        .iter()
        .map(|p| compute_rfmst(p, &cfg.window))
        .collect::<Result<_, _>>()
        .map_err(stage_err(STAGE))?;
    if rows.is_empty() {
        return Err(PipelineError::Stage {
            stage: STAGE,
            message: "no <user, item> pairs in the observation window".into(),
        });
    }
    let out = fs::File::create(path).map_err(stage_err(STAGE))?;
    write_feature_csv(out, &rows).map_err(stage_err(STAGE))?;
    // reload so fresh runs and resumed runs train on identical (file
    // precision) values
    let file = fs::File::open(path).map_err(stage_err(STAGE))?;
    read_feature_csv(file).map_err(stage_err(STAGE))
}

fn stage_balance(
    cfg: &PipelineConfig,
    train: &[FeatureRow],
    path: &Path,
) -> Result<Vec<FeatureRow>, PipelineError> {
    const STAGE: &str = "balance";
    if path.exists() {
        let file = fs::File::open(path).map_err(stage_err(STAGE))?;
        return read_feature_csv(file).map_err(stage_err(STAGE));
    }
    // Balance in standardized space so SMOTE distances weigh features
    // equally, then map the result back to raw feature units.
    let standardizer = fit_standardizer(train).map_err(stage_err(STAGE))?;
    let mut points = Vec::with_capacity(train.len());
    let mut labels = Vec::with_capacity(train.len());
    for row in train {
        points.push(standardizer.transform(&row.values).map_err(stage_err(STAGE))?);
        labels.push(row.label);
    }
    let balanced = smote_enn(&points, &labels, &cfg.smote, &cfg.enn).map_err(stage_err(STAGE))?;
    // resampling decouples rows from customers, so ids only record provenance
    let mut rows = Vec::with_capacity(balanced.points.len());
    for (i, (point, (&label, &synthetic))) in balanced
        .points
        .iter()
        .zip(balanced.labels.iter().zip(&balanced.synthetic))
        .enumerate()
    {
        let raw = standardizer.inverse(point).map_err(stage_err(STAGE))?;
        let mut values = [0.0; NUM_FEATURES];
        values.copy_from_slice(&raw);
        rows.push(FeatureRow {
            user_id: if synthetic { "synthetic" } else { "original" }.to_string(),
            item_id: i.to_string(),
            values,
            label,
        });
    }
    let out = fs::File::create(path).map_err(stage_err(STAGE))?;
    write_feature_csv(out, &rows).map_err(stage_err(STAGE))?;
    let file = fs::File::open(path).map_err(stage_err(STAGE))?;
    read_feature_csv(file).map_err(stage_err(STAGE))
}

#[derive(Debug, Serialize, Deserialize)]
struct HistoryLine {
    model: String,
    index: usize,
    config: serde_json::Map<String, serde_json::Value>,
    objective: serde_json::Value,
    wall_time_s: f64,
    status: TrialStatus,
}

fn trial_to_line(model: &str, space: &SearchSpace, t: &Trial) -> HistoryLine {
    HistoryLine {
        model: model.to_string(),
        index: t.index,
        config: space
            .dims
            .iter()
            .zip(&t.config)
            .map(|(d, v)| (d.name.clone(), serde_json::to_value(v).unwrap()))
            .collect(),
        objective: if t.objective.is_finite() {
            serde_json::json!(t.objective)
        } else {
            serde_json::json!("inf")
        },
        wall_time_s: t.wall_time_s,
        status: t.status,
    }
}

fn line_to_trial(line: &HistoryLine, space: &SearchSpace) -> Result<Trial, String> {
    let config: Vec<ParamValue> = space
        .dims
        .iter()
        .map(|d| {
            line.config
                .get(&d.name)
                .ok_or_else(|| format!("history line missing dimension '{}'", d.name))
                .and_then(|v| {
                    serde_json::from_value(v.clone()).map_err(|e| format!("{}: {e}", d.name))
                })
        })
        .collect::<Result<_, _>>()?;
    let objective = match &line.objective {
        serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::INFINITY),
        _ => f64::INFINITY,
    };
    Ok(Trial {
        index: line.index,
        config,
        objective,
        wall_time_s: line.wall_time_s,
        status: line.status,
    })
}

/// Best configuration per model, in config order.
type TunedConfigs = Vec<(ModelKind, SearchSpace, Vec<ParamValue>)>;

fn stage_tune(
    cfg: &PipelineConfig,
    train: &[FeatureRow],
    valid: &[FeatureRow],
    path: &Path,
) -> Result<TunedConfigs, PipelineError> {
    const STAGE: &str = "tune";
    let spaces: Vec<(ModelKind, SearchSpace)> = cfg
        .models
        .iter()
        .map(|m| (m.kind, m.space.clone().unwrap_or_else(|| default_space(m.kind))))
        .collect();

    if path.exists() {
        let text = fs::read_to_string(path).map_err(stage_err(STAGE))?;
        let mut lines = Vec::new();
        for raw in text.lines() {
            let line: HistoryLine = serde_json::from_str(raw).map_err(stage_err(STAGE))?;
            lines.push(line);
        }
        let mut out = Vec::new();
        for (kind, space) in &spaces {
            let trials: Vec<Trial> = lines
                .iter()
                .filter(|l| l.model == kind.name())
                .map(|l| line_to_trial(l, space))
                .collect::<Result<_, _>>()
                .map_err(stage_err(STAGE))?;
            let best = trials
                .iter()
                .filter(|t| t.status == TrialStatus::Ok)
                .min_by(|a, b| {
                    a.objective
                        .partial_cmp(&b.objective)
                        .unwrap()
                        .then(a.index.cmp(&b.index))
                })
                .ok_or_else(|| PipelineError::Stage {
                    stage: STAGE,
                    message: format!("no successful trials recorded for {}", kind.name()),
                })?;
            out.push((*kind, space.clone(), best.config.clone()));
        }
        return Ok(out);
    }

    let (train_x, train_y) = rows_to_xy(train);
    let (valid_x, valid_y) = rows_to_xy(valid);
    let mut text = String::new();
    let mut out = Vec::new();
    for (model_idx, (kind, space)) in spaces.iter().enumerate() {
        let fit_seed = derive_seed(cfg.train_seed, model_idx as u64);
        let mut objective = |c: &[ParamValue]| {
            validation_objective(*kind, space, c, fit_seed, &train_x, &train_y, &valid_x, &valid_y)
        };
        let tuner_seed = derive_seed(cfg.tuner.seed, model_idx as u64);
        let (best, history) = match cfg.tuner.choice {
            TunerChoice::Tpe => {
                let p = TpeParams {
                    max_trials: cfg.tuner.budget,
                    seed: tuner_seed,
                    ..Default::default()
                };
                tune(&mut objective, space, &p).map_err(stage_err(STAGE))?
            }
            TunerChoice::Random => {
                random_search(&mut objective, space, cfg.tuner.budget, tuner_seed)
                    .map_err(stage_err(STAGE))?
            }
            TunerChoice::Grid => {
                let counts = cfg.models[model_idx].grid_counts.clone().unwrap_or_else(|| {
                    space
                        .dims
                        .iter()
                        .map(|d| if matches!(d.dim, Dim::Categorical { .. }) { 2 } else { 3 })
                        .collect()
                });
                grid_search(&mut objective, space, &counts, cfg.tuner.grid_cap)
                    .map_err(stage_err(STAGE))?
            }
        };
        if best.status != TrialStatus::Ok {
            return Err(PipelineError::Stage {
                stage: STAGE,
                message: format!("all trials failed for {}", kind.name()),
            });
        }
        for t in &history {
            let line = trial_to_line(kind.name(), space, t);
            text.push_str(&serde_json::to_string(&line).unwrap());
            text.push('\n');
        }
        out.push((*kind, space.clone(), best.config));
    }
    fs::write(path, text).map_err(stage_err(STAGE))?;
    Ok(out)
}

fn stage_train(
    cfg: &PipelineConfig,
    tuned: &TunedConfigs,
    train: &[FeatureRow],
    path: &Path,
) -> Result<Model, PipelineError> {
    const STAGE: &str = "train";
    if path.exists() {
        return load_model(path).map_err(stage_err(STAGE));
    }
    let (train_x, train_y) = rows_to_xy(train);
    let mut members = Vec::with_capacity(tuned.len());
    for (model_idx, (kind, space, config)) in tuned.iter().enumerate() {
        let fit_seed = derive_seed(cfg.train_seed, model_idx as u64);
        let member = fit_member(*kind, space, config, fit_seed, &train_x, &train_y)
            .map_err(stage_err(STAGE))?;
        members.push(member);
    }
    let ensemble =
        VotingEnsemble::new(members, cfg.voting_threshold).map_err(stage_err(STAGE))?;
    let model = Model::SoftVoting(ensemble);
    save_model(&model, path).map_err(stage_err(STAGE))?;
    Ok(model)
}

fn stage_evaluate(
    cfg: &PipelineConfig,
    model: &Model,
    valid: &[FeatureRow],
    path: &Path,
) -> Result<(), PipelineError> {
    const STAGE: &str = "evaluate";
    if path.exists() {
        return Ok(());
    }
    let positives: Vec<Vec<f64>> = valid
        .iter()
        .filter(|r| r.label == 1)
        .map(|r| r.values.to_vec())
        .collect();
    let negatives: Vec<Vec<f64>> = valid
        .iter()
        .filter(|r| r.label == 0)
        .map(|r| r.values.to_vec())
        .collect();
    // fail early (with a useful message) instead of inside the closure
    for r in valid.iter().take(1) {
        model
            .classify(&r.values, cfg.voting_threshold)
            .map_err(stage_err(STAGE))?;
    }
    let mut predict = |x: &[f64]| {
        model
            .classify(x, cfg.voting_threshold)
            .expect("prediction validated above")
    };
    let result = repeated_eval(&mut predict, &positives, &negatives, cfg.eval_rounds, cfg.eval_seed)
        .map_err(stage_err(STAGE))?;
    let text = serde_json::to_string_pretty(&result.to_json()).unwrap();
    fs::write(path, text).map_err(stage_err(STAGE))?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_manifest(cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<String>, PipelineError> {
    const STAGE: &str = "manifest";
    let config_hash = sha256_hex(serde_json::to_string(cfg).unwrap().as_bytes());
    let names = [
        FEATURES_FILE,
        BALANCED_FILE,
        TUNING_FILE,
        MODEL_FILE,
        REPORT_FILE,
    ];
    let mut artifacts = Vec::new();
    let mut listed = Vec::new();
    for name in names {
        let p = out_dir.join(name);
        if p.exists() {
            let bytes = fs::read(&p).map_err(stage_err(STAGE))?;
            artifacts.push(serde_json::json!({"name": name, "sha256": sha256_hex(&bytes)}));
            listed.push(name.to_string());
        }
    }
    // evaluation counts per model, straight from the tuning history
    let mut counts: std::collections::BTreeMap<String, u64> = Default::default();
    let tuning = out_dir.join(TUNING_FILE);
    if tuning.exists() {
        let text = fs::read_to_string(&tuning).map_err(stage_err(STAGE))?;
        for raw in text.lines() {
            if let Ok(line) = serde_json::from_str::<HistoryLine>(raw) {
                *counts.entry(line.model).or_insert(0) += 1;
            }
        }
    }
    let evaluations: serde_json::Map<String, serde_json::Value> = counts
        .into_iter()
        .map(|(k, v)| (k, serde_json::json!(v)))
        .collect();
    let manifest = serde_json::json!({
        "config_sha256": config_hash,
        "artifacts": artifacts,
        "evaluations": evaluations,
    });
    fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(stage_err(STAGE))?;
    listed.push(MANIFEST_FILE.to_string());
    Ok(listed)
}

/// Run stages up to and including `until`. Existing artifacts are reused, so
/// deleting downstream files resumes from the last valid stage.
pub fn run_until(cfg: &PipelineConfig, until: Stage) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(stage_err("setup"))?;
    let out = |name: &str| cfg.out_dir.join(name);

    let rows = stage_featurize(cfg, &out(FEATURES_FILE))?;
    let (train, valid) = train_valid_split(&rows, cfg.split_ratio, cfg.split_seed)
        .map_err(stage_err("featurize"))?;
    if until == Stage::Featurize {
        return finish(cfg);
    }

    let balanced = stage_balance(cfg, &train, &out(BALANCED_FILE))?;
    if until == Stage::Balance {
        return finish(cfg);
    }

    let tuned = stage_tune(cfg, &balanced, &valid, &out(TUNING_FILE))?;
    if until == Stage::Tune {
        return finish(cfg);
    }

    let model = stage_train(cfg, &tuned, &balanced, &out(MODEL_FILE))?;
    if until == Stage::Train {
        return finish(cfg);
    }

    stage_evaluate(cfg, &model, &valid, &out(REPORT_FILE))?;
    finish(cfg)
}

fn finish(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    let artifacts = write_manifest(cfg, &cfg.out_dir)?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        artifacts,
    })
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    run_until(cfg, Stage::Evaluate)
}
