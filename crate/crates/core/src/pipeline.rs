//! Configuration-driven orchestration of the cascade: strong-pixel
//! selection, rule labeling, opening, sampling, weakening, mixture
//! synthesis, forest training, map prediction, one-class overlays,
//! and evaluation.
//!
//! Each stage reads its inputs from the output directory and persists
//! its outputs there, so stages compose through files: a full run and
//! a stage-by-stage rerun produce identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band::Sensor;
use crate::error::{CoreError, Result};
use crate::features::{extract_feature_matrix, FeatureConfig};
use crate::forest::pul::{pul_predict, pul_train, PulParams};
use crate::forest::sweep::{sweep_tree_count, SweepReport};
use crate::forest::{overlay, predict_map, scene_feature_rows, train_forest, ForestParams};
use crate::io;
use crate::label::{label_pixels, open_labels, select_strong_pixels, StrongMode};
use crate::mixture::MixturePolicy;
use crate::morphology::StructuringElement;
use crate::rules::Rule;
use crate::sample::{
    inject_truth_samples, sample_by_quota, sample_other_stratified, Provenance, Sample, SampleSet,
};
use crate::scene::{SceneStack, NO_LABEL};
use crate::stats::derive_seed;
use crate::weaken::{weaken_to_histogram, TargetHistogram, WeakenReport};

pub const CONFIG_VERSION: u32 = 1;

/// A pipeline failure, split by exit-code class: configuration
/// problems versus stage failures during the run.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(#[source] CoreError),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: CoreError,
    },
}

fn stage<T>(name: &str, result: Result<T>) -> std::result::Result<T, PipelineError> {
    result.map_err(|source| PipelineError::Stage {
        stage: name.to_string(),
        source,
    })
}

fn default_sensor() -> Sensor {
    Sensor::Optical
}

fn default_train_ratio() -> f64 {
    0.7
}

/// Strong-pixel selection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongConfig {
    #[serde(default = "default_sensor")]
    pub sensor: Sensor,
    #[serde(default)]
    pub mode: StrongMode,
    #[serde(default)]
    pub window: Option<(i32, i32)>,
}

impl Default for StrongConfig {
    fn default() -> StrongConfig {
        StrongConfig {
            sensor: Sensor::Optical,
            mode: StrongMode::default(),
            window: None,
        }
    }
}

/// Where the weakening target histogram comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeakenTarget {
    /// The scene's own valid-count histogram.
    Scene,
    /// Explicit per-bin weights over `0..=steps`, normalized on load.
    Weights { weights: Vec<f64> },
}

/// Weakening stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakenConfig {
    #[serde(default = "default_sensor")]
    pub sensor: Sensor,
    pub target: WeakenTarget,
}

/// One mixture-synthesis stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureStage {
    pub first_class: String,
    pub second_class: String,
    pub mixture_class: String,
    pub policy: MixturePolicy,
    pub count: usize,
    #[serde(default)]
    pub noise_sd: f64,
}

/// Tree-count sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Vec<usize>,
    #[serde(default = "default_train_ratio")]
    pub train_ratio: f64,
}

/// One single-class stage: train a one-class ensemble on this class's
/// samples and overlay its positive mask onto the map. Stages apply
/// in list order, later overlays winning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulStage {
    pub class: String,
    #[serde(default)]
    pub params: PulParams,
}

/// Background-class sampling from the scene's stratum raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtherConfig {
    pub class: String,
    pub total: usize,
}

/// Binds one rule file to the class it labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBinding {
    pub class: String,
    pub file: PathBuf,
}

/// The full run configuration. Paths are resolved relative to the
/// config file's directory; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub scene: PathBuf,
    #[serde(default)]
    pub prior_scene: Option<PathBuf>,
    pub classes: Vec<String>,
    pub rules: Vec<RuleBinding>,
    #[serde(default)]
    pub strong: StrongConfig,
    #[serde(default)]
    pub opening: StructuringElement,
    #[serde(default)]
    pub quotas: BTreeMap<String, usize>,
    #[serde(default)]
    pub other: Option<OtherConfig>,
    /// Ground-truth samples injected per class, when set.
    #[serde(default)]
    pub inject_truth: Option<usize>,
    pub weaken: WeakenConfig,
    #[serde(default)]
    pub mixtures: Vec<MixtureStage>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub pul: Vec<PulStage>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    /// Parses a config file and validates it against the filesystem.
    /// Returns the config and the directory relative paths resolve
    /// against.
    pub fn from_file(path: &Path) -> Result<(PipelineConfig, PathBuf)> {
        let json = fs::read_to_string(path).map_err(|e| {
            CoreError::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: PipelineConfig = serde_json::from_str(&json)?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        config.validate(&base)?;
        Ok((config, base))
    }

    pub fn class_id(&self, name: &str) -> Result<u16> {
        self.classes
            .iter()
            .position(|c| c == name)
            .map(|i| i as u16)
            .ok_or_else(|| CoreError::UnknownClass(name.to_string()))
    }

    /// Checks version, class references, and that every referenced
    /// file exists.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(CoreError::Version {
                what: "pipeline config".to_string(),
                found: self.version,
                expected: CONFIG_VERSION,
            });
        }
        if self.classes.is_empty() {
            return Err(CoreError::InvalidConfig("class table is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for class in &self.classes {
            if !seen.insert(class) {
                return Err(CoreError::InvalidConfig(format!(
                    "class '{class}' appears twice in the class table"
                )));
            }
        }
        let scene_meta = io::resolve_path(base, &self.scene).join("scene.json");
        if !scene_meta.is_file() {
            return Err(CoreError::InvalidConfig(format!(
                "scene bundle not found: {}",
                scene_meta.display()
            )));
        }
        if let Some(prior) = &self.prior_scene {
            let prior_meta = io::resolve_path(base, prior).join("scene.json");
            if !prior_meta.is_file() {
                return Err(CoreError::InvalidConfig(format!(
                    "prior-year scene bundle not found: {}",
                    prior_meta.display()
                )));
            }
        }
        let mut bound = BTreeSet::new();
        for binding in &self.rules {
            self.class_id(&binding.class)?;
            if !bound.insert(&binding.class) {
                return Err(CoreError::InvalidConfig(format!(
                    "class '{}' is bound to more than one rule file",
                    binding.class
                )));
            }
            let file = io::resolve_path(base, &binding.file);
            if !file.is_file() {
                return Err(CoreError::InvalidConfig(format!(
                    "rule file not found: {}",
                    file.display()
                )));
            }
        }
        for class in self.quotas.keys() {
            self.class_id(class)?;
        }
        if let Some(other) = &self.other {
            self.class_id(&other.class)?;
        }
        if let WeakenTarget::Weights { weights } = &self.weaken.target {
            TargetHistogram::from_weights(weights)?;
        }
        for mix in &self.mixtures {
            self.class_id(&mix.first_class)?;
            self.class_id(&mix.second_class)?;
            self.class_id(&mix.mixture_class)?;
            if !(mix.noise_sd >= 0.0) {
                return Err(CoreError::InvalidConfig(
                    "mixture noise sd must be non-negative".into(),
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() {
                return Err(CoreError::InvalidConfig("sweep grid is empty".into()));
            }
            if !(sweep.train_ratio > 0.0 && sweep.train_ratio < 1.0) {
                return Err(CoreError::InvalidConfig(
                    "sweep train ratio must lie strictly between 0 and 1".into(),
                ));
            }
        }
        let mut pul_seen = BTreeSet::new();
        for stage in &self.pul {
            self.class_id(&stage.class)?;
            if !pul_seen.insert(&stage.class) {
                return Err(CoreError::InvalidConfig(format!(
                    "class '{}' appears in more than one one-class stage",
                    stage.class
                )));
            }
            if stage.params.rounds == 0 {
                return Err(CoreError::InvalidConfig(
                    "one-class stage needs at least one round".into(),
                ));
            }
        }
        Ok(())
    }

    fn out_dir(&self, base: &Path) -> PathBuf {
        io::resolve_path(base, &self.output_dir)
    }
}

/// Per-class evaluation metrics. Ratios with an empty denominator are
/// reported as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Truth pixels of the class among the evaluated pairs.
    pub support: usize,
}

/// Confusion matrix and summary metrics of a classified map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classes: Vec<String>,
    /// `confusion[t][p]` counts pixels of truth class `t` predicted
    /// as class `p`.
    pub confusion: Vec<Vec<usize>>,
    pub overall_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Truth pixels carrying a label.
    pub truth_pixels: usize,
    /// Pixels where both rasters carry a label; the matrix sums to
    /// this.
    pub evaluated_pixels: usize,
}

/// Builds the confusion matrix of a prediction against ground truth.
/// Pixels unlabeled in either raster are excluded.
pub fn evaluate(prediction: &[u16], truth: &[u16], classes: &[String]) -> Result<EvaluationReport> {
    if prediction.len() != truth.len() {
        return Err(CoreError::DimensionMismatch {
            context: "prediction raster vs truth raster".into(),
            expected: truth.len(),
            got: prediction.len(),
        });
    }
    let n = classes.len();
    let mut confusion = vec![vec![0usize; n]; n];
    let mut truth_pixels = 0usize;
    let mut evaluated = 0usize;
    for (&p, &t) in prediction.iter().zip(truth) {
        if t == NO_LABEL {
            continue;
        }
        if t as usize >= n {
            return Err(CoreError::UnknownClass(format!("truth label id {t}")));
        }
        truth_pixels += 1;
        if p == NO_LABEL {
            continue;
        }
        if p as usize >= n {
            return Err(CoreError::UnknownClass(format!("predicted label id {p}")));
        }
        confusion[t as usize][p as usize] += 1;
        evaluated += 1;
    }
    let trace: usize = (0..n).map(|c| confusion[c][c]).sum();
    let overall_accuracy = if evaluated > 0 {
        trace as f64 / evaluated as f64
    } else {
        0.0
    };
    let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
    let per_class = (0..n)
        .map(|c| {
            let row: usize = confusion[c].iter().sum();
            let col: usize = (0..n).map(|t| confusion[t][c]).sum();
            let precision = ratio(confusion[c][c], col);
            let recall = ratio(confusion[c][c], row);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: classes[c].clone(),
                precision,
                recall,
                f1,
                support: row,
            }
        })
        .collect();
    Ok(EvaluationReport {
        classes: classes.to_vec(),
        confusion,
        overall_accuracy,
        per_class,
        truth_pixels,
        evaluated_pixels: evaluated,
    })
}

/// Deterministic palette: evenly spaced hues at fixed saturation and
/// value.
pub fn default_palette(n: usize) -> Vec<[u8; 3]> {
    (0..n)
        .map(|i| {
            let h = 360.0 * i as f64 / n.max(1) as f64;
            hsv_to_rgb(h, 0.65, 0.95)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Renders a class raster as a binary PPM (P6). Unlabeled pixels are
/// black; a label outside the palette is an error.
pub fn render_class_map(
    labels: &[u16],
    width: usize,
    height: usize,
    palette: &[[u8; 3]],
) -> Result<Vec<u8>> {
    if labels.len() != width * height {
        return Err(CoreError::DimensionMismatch {
            context: "class raster vs image dimensions".into(),
            expected: width * height,
            got: labels.len(),
        });
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for &label in labels {
        let rgb = if label == NO_LABEL {
            [0, 0, 0]
        } else {
            *palette.get(label as usize).ok_or_else(|| {
                CoreError::UnknownClass(format!("class id {label} has no palette entry"))
            })?
        };
        out.extend_from_slice(&rgb);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StrongReport {
    mode: StrongMode,
    threshold: f64,
    selected: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleMatchReport {
    rule: String,
    class: String,
    matches: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelReport {
    rules: Vec<RuleMatchReport>,
    multi_class_discards: usize,
    evaluated: usize,
    labeled_raw: usize,
    labeled_opened: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleReport {
    counts: BTreeMap<String, usize>,
    shortfalls: Vec<(String, usize, usize)>,
    other_added: usize,
    injected: usize,
}

/// What the labeling stage produced.
#[derive(Debug, Clone, Copy)]
pub struct LabelOutcome {
    pub strong_selected: usize,
    pub labeled_pixels: usize,
    pub samples: usize,
}

/// What a run produced, echoed into `report.json` and `report.txt`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub strong_selected: usize,
    pub labeled_pixels: usize,
    pub train_samples: usize,
    pub n_trees: usize,
    pub evaluation: Option<EvaluationReport>,
}

fn load_scene_checked(config: &PipelineConfig, base: &Path) -> Result<SceneStack> {
    let scene = io::load_scene(&io::resolve_path(base, &config.scene))?;
    if scene.classes != config.classes {
        return Err(CoreError::RejectedInput(format!(
            "scene class table {:?} differs from the configured classes {:?}",
            scene.classes, config.classes
        )));
    }
    Ok(scene)
}

fn load_rules(config: &PipelineConfig, base: &Path) -> Result<Vec<Rule>> {
    config
        .rules
        .iter()
        .map(|binding| Rule::from_file(&io::resolve_path(base, &binding.file), &binding.class))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::Format {
        path: path.display().to_string(),
        detail: format!("cannot read intermediate ({e}); run the earlier stages first"),
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn intermediate<T>(path: &Path, result: Result<T>) -> Result<T> {
    result.map_err(|e| CoreError::Format {
        path: path.display().to_string(),
        detail: format!("cannot read intermediate ({e}); run the earlier stages first"),
    })
}

/// Ensures the output directory exists and persists the resolved
/// config, recording the seeds the run will use.
pub fn stage_setup(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<(), PipelineError> {
    let out = config.out_dir(base);
    stage("setup", fs::create_dir_all(&out).map_err(CoreError::from))?;
    stage(
        "setup",
        io::save_versioned(
            &out.join("config_resolved.json"),
            "pipeline-config",
            CONFIG_VERSION,
            config,
        ),
    )
}

/// Selects strong pixels, applies the rules, opens the label raster,
/// and draws the strong training samples.
pub fn stage_label(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<LabelOutcome, PipelineError> {
    let out = config.out_dir(base);
    let scene = stage("load-scene", load_scene_checked(config, base))?;
    let prior = match &config.prior_scene {
        Some(path) => {
            let prior = stage("load-scene", io::load_scene(&io::resolve_path(base, path)))?;
            stage(
                "load-scene",
                if prior.width == scene.width && prior.height == scene.height {
                    Ok(())
                } else {
                    Err(CoreError::DimensionMismatch {
                        context: "prior-year scene vs scene".into(),
                        expected: scene.n_pixels(),
                        got: prior.n_pixels(),
                    })
                },
            )?;
            Some(prior)
        }
        None => None,
    };

    let selection = stage(
        "select-strong",
        select_strong_pixels(
            &scene,
            config.strong.sensor,
            config.strong.window,
            config.strong.mode,
        ),
    )?;
    let mask_bytes: Vec<u8> = selection.mask.data.iter().map(|&b| b as u8).collect();
    stage(
        "select-strong",
        io::write_u8_file(&out.join("strong_mask.u8"), &mask_bytes),
    )?;
    stage(
        "select-strong",
        write_json(
            &out.join("strong.json"),
            &StrongReport {
                mode: selection.mode,
                threshold: selection.threshold,
                selected: selection.selected,
            },
        ),
    )?;

    let rules = stage("label", load_rules(config, base))?;
    let label_map = stage(
        "label",
        label_pixels(
            &scene,
            prior.as_ref(),
            &rules,
            &config.classes,
            &selection.mask,
            &config.features.index_params,
        ),
    )?;
    stage(
        "label",
        io::write_u16_file(&out.join("labels_raw.u16"), &label_map.labels),
    )?;

    let opened = open_labels(
        &label_map.labels,
        scene.width,
        scene.height,
        config.classes.len(),
        config.opening,
    );
    stage("open", io::write_u16_file(&out.join("labels_opened.u16"), &opened))?;
    let labeled_opened = opened.iter().filter(|&&l| l != NO_LABEL).count();
    stage(
        "open",
        write_json(
            &out.join("label_report.json"),
            &LabelReport {
                rules: rules
                    .iter()
                    .zip(&label_map.matches_per_rule)
                    .map(|(r, &m)| RuleMatchReport {
                        rule: r.name.clone(),
                        class: r.class.clone(),
                        matches: m,
                    })
                    .collect(),
                multi_class_discards: label_map.multi_class_discards,
                evaluated: label_map.evaluated,
                labeled_raw: label_map.labels.iter().filter(|&&l| l != NO_LABEL).count(),
                labeled_opened,
            },
        ),
    )?;

    let quota_list: Vec<(String, usize)> = config
        .classes
        .iter()
        .map(|c| (c.clone(), config.quotas.get(c).copied().unwrap_or(0)))
        .collect();
    let (mut samples, quota_report) = stage(
        "sample",
        sample_by_quota(&scene, &opened, &quota_list, derive_seed(config.seed, 1)),
    )?;
    let mut other_added = 0usize;
    if let Some(other) = &config.other {
        let class_id = stage("sample", samples.class_id(&other.class))?;
        let coords = stage(
            "sample",
            sample_other_stratified(
                &scene,
                &selection.mask,
                class_id,
                other.total,
                derive_seed(config.seed, 2),
            ),
        )?;
        other_added = coords.len();
        for (x, y) in coords {
            samples.samples.push(Sample {
                location: Some((x, y)),
                class_id,
                provenance: Provenance::Rule,
                series: scene.pixel_series(x as usize, y as usize),
            });
        }
    }
    let mut injected = 0usize;
    if let Some(per_class) = config.inject_truth {
        let before = samples.len();
        stage(
            "sample",
            inject_truth_samples(&scene, &mut samples, per_class, derive_seed(config.seed, 3))
                .map(|_| ()),
        )?;
        injected = samples.len() - before;
    }
    stage("sample", io::save_samples(&samples, &out.join("samples_strong")))?;
    stage(
        "sample",
        write_json(
            &out.join("sample_report.json"),
            &SampleReport {
                counts: config
                    .classes
                    .iter()
                    .zip(samples.class_counts())
                    .map(|(c, n)| (c.clone(), n))
                    .collect(),
                shortfalls: quota_report.shortfalls.clone(),
                other_added,
                injected,
            },
        ),
    )?;
    Ok(LabelOutcome {
        strong_selected: selection.selected,
        labeled_pixels: labeled_opened,
        samples: samples.len(),
    })
}

/// Destroys observations in the strong samples until their valid
/// counts follow the target histogram.
pub fn stage_weaken(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<WeakenReport, PipelineError> {
    let out = config.out_dir(base);
    let mut samples = stage("weaken", io::load_samples(&out.join("samples_strong")))?;
    let target = stage(
        "weaken",
        match &config.weaken.target {
            WeakenTarget::Scene => load_scene_checked(config, base)
                .and_then(|scene| TargetHistogram::from_scene(&scene, config.weaken.sensor)),
            WeakenTarget::Weights { weights } => TargetHistogram::from_weights(weights),
        },
    )?;
    let report = stage(
        "weaken",
        weaken_to_histogram(
            &mut samples,
            config.weaken.sensor,
            &target,
            derive_seed(config.seed, 4),
        ),
    )?;
    stage("weaken", io::save_samples(&samples, &out.join("samples_weak")))?;
    stage("weaken", write_json(&out.join("weaken_report.json"), &report))?;
    Ok(report)
}

/// Appends synthetic mixed samples to the weakened set, producing the
/// final training set.
pub fn stage_mixtures(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<usize, PipelineError> {
    let out = config.out_dir(base);
    let mut samples = stage("synth-mix", io::load_samples(&out.join("samples_weak")))?;
    for (i, mix) in config.mixtures.iter().enumerate() {
        let synthesized = stage(
            "synth-mix",
            crate::mixture::synthesize_mixture_samples(
                &samples,
                &mix.first_class,
                &mix.second_class,
                &mix.mixture_class,
                &mix.policy,
                mix.count,
                mix.noise_sd,
                derive_seed(config.seed, 0x4000 + i as u64),
            ),
        )?;
        samples.samples.extend(synthesized);
    }
    stage("synth-mix", io::save_samples(&samples, &out.join("samples_train")))?;
    Ok(samples.len())
}

fn multiclass_table(config: &PipelineConfig) -> Vec<String> {
    let pul_classes: BTreeSet<&String> = config.pul.iter().map(|s| &s.class).collect();
    config
        .classes
        .iter()
        .filter(|c| !pul_classes.contains(c))
        .cloned()
        .collect()
}

fn multiclass_set(config: &PipelineConfig, samples: &SampleSet) -> SampleSet {
    let multi_classes = multiclass_table(config);
    let mut local_of_global: Vec<Option<u16>> = vec![None; config.classes.len()];
    for (local, name) in multi_classes.iter().enumerate() {
        let global = config.class_id(name).expect("subset of the class table");
        local_of_global[global as usize] = Some(local as u16);
    }
    SampleSet {
        classes: multi_classes,
        optical_grid: samples.optical_grid,
        radar_grid: samples.radar_grid,
        samples: samples
            .samples
            .iter()
            .filter_map(|s| {
                local_of_global[s.class_id as usize].map(|local| Sample {
                    class_id: local,
                    ..s.clone()
                })
            })
            .collect(),
    }
}

/// Sweeps the tree-count grid on a holdout split of the training set.
/// Returns `None` when the config has no sweep.
pub fn stage_sweep(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<Option<SweepReport>, PipelineError> {
    let Some(sweep) = &config.sweep else {
        return Ok(None);
    };
    let out = config.out_dir(base);
    let samples = stage("sweep", io::load_samples(&out.join("samples_train")))?;
    let multi = multiclass_set(config, &samples);
    let report = stage(
        "sweep",
        sweep_tree_count(
            &multi,
            &config.features,
            &config.forest,
            &sweep.grid,
            sweep.train_ratio,
            derive_seed(config.seed, 5),
        ),
    )?;
    stage("sweep", write_json(&out.join("sweep.json"), &report))?;
    Ok(Some(report))
}

/// Trains the multiclass forest on the training set, at the swept
/// tree count when a sweep is configured.
pub fn stage_train(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<usize, PipelineError> {
    let out = config.out_dir(base);
    let samples = stage("train", io::load_samples(&out.join("samples_train")))?;
    let multi = multiclass_set(config, &samples);
    let mut params = config.forest;
    if config.sweep.is_some() {
        let report: SweepReport = stage("train", read_json(&out.join("sweep.json")))?;
        params.n_trees = report.chosen_n_trees;
    }
    let model = stage(
        "train",
        train_forest(&multi, &config.features, &params, derive_seed(config.seed, 6)),
    )?;
    stage("train", io::save_forest_model(&model, &out.join("model.json")))?;
    Ok(params.n_trees)
}

/// Predicts the class map and per-class vote shares for the scene.
pub fn stage_classify(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<(), PipelineError> {
    let out = config.out_dir(base);
    let scene = stage("classify", load_scene_checked(config, base))?;
    let model_path = out.join("model.json");
    let model = stage(
        "classify",
        intermediate(&model_path, io::load_forest_model(&model_path)),
    )?;
    let prediction = stage("classify", predict_map(&model, &scene))?;
    let map: Vec<u16> = stage(
        "classify",
        prediction
            .labels
            .iter()
            .map(|&local| config.class_id(&model.classes[local as usize]))
            .collect(),
    )?;
    stage("classify", io::write_u16_file(&out.join("prediction.u16"), &map))?;
    for (local, class) in model.classes.iter().enumerate() {
        let probs: Vec<f32> = prediction.probabilities[local]
            .iter()
            .map(|&p| p as f32)
            .collect();
        stage(
            "classify",
            io::write_f32_file(&out.join(format!("prob_{class}.f32")), &probs),
        )?;
    }
    Ok(())
}

/// Trains the one-class ensembles and writes their positive masks.
/// Returns how many stages ran.
pub fn stage_pul(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<usize, PipelineError> {
    if config.pul.is_empty() {
        return Ok(0);
    }
    let out = config.out_dir(base);
    let scene = stage("pul", load_scene_checked(config, base))?;
    let model_path = out.join("model.json");
    let model = stage("pul", intermediate(&model_path, io::load_forest_model(&model_path)))?;
    let samples = stage("pul", io::load_samples(&out.join("samples_train")))?;
    let pool = stage("pul", scene_feature_rows(&scene, &model.features, model.n_features))?;
    for (i, pul_stage) in config.pul.iter().enumerate() {
        let global = config.class_id(&pul_stage.class).expect("validated");
        let positives: Vec<Sample> = samples
            .samples
            .iter()
            .filter(|s| s.class_id == global)
            .cloned()
            .collect();
        let rows = stage("pul", extract_feature_matrix(&positives, &model.features))?;
        let ensemble = stage(
            "pul",
            pul_train(
                &rows,
                &pool,
                &pul_stage.params,
                derive_seed(config.seed, 0x7000 + i as u64),
            ),
        )?;
        stage(
            "pul",
            io::save_pul_model(
                &ensemble,
                &out.join(format!("pul_{}_model.json", pul_stage.class)),
            ),
        )?;
        let mask = pul_predict(&ensemble, &pool);
        let mask_bytes: Vec<u8> = mask.iter().map(|&m| m as u8).collect();
        stage(
            "pul",
            io::write_u8_file(&out.join(format!("pul_{}.u8", pul_stage.class)), &mask_bytes),
        )?;
    }
    Ok(config.pul.len())
}

/// Applies the one-class masks onto the prediction in stage order and
/// renders the final map.
pub fn stage_overlay(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<(), PipelineError> {
    let out = config.out_dir(base);
    let scene = stage("overlay", load_scene_checked(config, base))?;
    let prediction_path = out.join("prediction.u16");
    let mut map = stage(
        "overlay",
        intermediate(
            &prediction_path,
            io::read_u16_file(&prediction_path, scene.n_pixels()),
        ),
    )?;
    for pul_stage in &config.pul {
        let global = config.class_id(&pul_stage.class).expect("validated");
        let mask_path = out.join(format!("pul_{}.u8", pul_stage.class));
        let mask_bytes = stage(
            "overlay",
            intermediate(&mask_path, io::read_u8_file(&mask_path, scene.n_pixels())),
        )?;
        let mask: Vec<bool> = mask_bytes.iter().map(|&b| b != 0).collect();
        map = stage("overlay", overlay(&map, &mask, global))?;
    }
    stage("overlay", io::write_u16_file(&out.join("final_map.u16"), &map))?;
    let palette = default_palette(config.classes.len());
    let image = stage(
        "render",
        render_class_map(&map, scene.width, scene.height, &palette),
    )?;
    stage(
        "render",
        fs::write(out.join("final_map.ppm"), image).map_err(CoreError::from),
    )?;
    Ok(())
}

/// Scores the final map against the scene's ground truth when present
/// and writes the run report.
pub fn stage_evaluate(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<RunSummary, PipelineError> {
    let out = config.out_dir(base);
    let scene = stage("evaluate", load_scene_checked(config, base))?;
    let map_path = out.join("final_map.u16");
    let map = stage(
        "evaluate",
        intermediate(&map_path, io::read_u16_file(&map_path, scene.n_pixels())),
    )?;
    let strong: StrongReport = stage("evaluate", read_json(&out.join("strong.json")))?;
    let labels: LabelReport = stage("evaluate", read_json(&out.join("label_report.json")))?;
    let train = stage("evaluate", io::load_samples(&out.join("samples_train")))?;
    let model_path = out.join("model.json");
    let model = stage(
        "evaluate",
        intermediate(&model_path, io::load_forest_model(&model_path)),
    )?;

    let evaluation = match &scene.labels {
        Some(truth) => {
            let report = stage("evaluate", evaluate(&map, truth, &config.classes))?;
            stage(
                "evaluate",
                fs::write(out.join("confusion.csv"), confusion_csv(&report))
                    .map_err(CoreError::from),
            )?;
            Some(report)
        }
        None => None,
    };
    let summary = RunSummary {
        seed: config.seed,
        strong_selected: strong.selected,
        labeled_pixels: labels.labeled_opened,
        train_samples: train.len(),
        n_trees: model.forest.trees.len(),
        evaluation,
    };
    stage("report", write_json(&out.join("report.json"), &summary))?;
    stage(
        "report",
        fs::write(out.join("report.txt"), summary_text(&summary)).map_err(CoreError::from),
    )?;
    Ok(summary)
}

/// Runs the cascade end to end, persisting every intermediate into
/// the config's output directory.
pub fn run_pipeline(
    config: &PipelineConfig,
    base: &Path,
) -> std::result::Result<RunSummary, PipelineError> {
    stage_setup(config, base)?;
    stage_label(config, base)?;
    stage_weaken(config, base)?;
    stage_mixtures(config, base)?;
    stage_sweep(config, base)?;
    stage_train(config, base)?;
    stage_classify(config, base)?;
    stage_pul(config, base)?;
    stage_overlay(config, base)?;
    stage_evaluate(config, base)
}

fn confusion_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("truth\\predicted");
    for class in &report.classes {
        out.push(',');
        out.push_str(class);
    }
    out.push('\n');
    for (t, row) in report.confusion.iter().enumerate() {
        out.push_str(&report.classes[t]);
        for &count in row {
            out.push_str(&format!(",{count}"));
        }
        out.push('\n');
    }
    out
}

fn summary_text(summary: &RunSummary) -> String {
    let mut out = String::new();
    out.push_str("cascade run\n");
    out.push_str(&format!("seed: {}\n", summary.seed));
    out.push_str(&format!("strong pixels: {}\n", summary.strong_selected));
    out.push_str(&format!("labeled pixels: {}\n", summary.labeled_pixels));
    out.push_str(&format!("training samples: {}\n", summary.train_samples));
    out.push_str(&format!("trees: {}\n", summary.n_trees));
    match &summary.evaluation {
        Some(eval) => {
            out.push_str(&format!("overall accuracy: {:.4}\n", eval.overall_accuracy));
            out.push_str(&format!(
                "evaluated pixels: {} of {} labeled\n",
                eval.evaluated_pixels, eval.truth_pixels
            ));
            out.push_str("class, precision, recall, f1, support\n");
            for m in &eval.per_class {
                out.push_str(&format!(
                    "{}, {:.4}, {:.4}, {:.4}, {}\n",
                    m.class, m.precision, m.recall, m.f1, m.support
                ));
            }
        }
        None => out.push_str("ground truth absent; accuracy not computed\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::scenegen::{
        default_gap_histogram, generate_scene, huantai_profiles, CloudModel, RegionSpec, SceneSpec,
    };
    use tempfile::tempdir;

    fn write_rule(dir: &Path, name: &str) -> PathBuf {
        let source = crate::rules::BUILTIN_RULES
            .iter()
            .find(|b| b.name == name)
            .unwrap()
            .source;
        let path = dir.join(format!("{name}.rule"));
        fs::write(&path, source).unwrap();
        path
    }

    fn e2e_scene_spec(size: usize, seed: u64) -> SceneSpec {
        SceneSpec {
            width: size,
            height: size,
            optical_grid: TimeGrid::new(65, 10, 23),
            radar_grid: TimeGrid::new(65, 12, 19),
            regions: vec![
                RegionSpec::new("maize", "maize"),
                RegionSpec::new("soybean", "soybean"),
                RegionSpec::new("vegetables", "vegetables"),
                RegionSpec::new("grass", "other"),
                RegionSpec::new("water", "other"),
            ],
            block_size: 8,
            noise_sd: 0.01,
            cloud: Some(CloudModel {
                target: default_gap_histogram(23),
                correlation_px: 6,
                radar_dropout: 0.0,
            }),
            seed,
        }
    }

    fn e2e_config(dir: &Path, size: usize) -> PathBuf {
        let scene = generate_scene(&e2e_scene_spec(size, 40), &huantai_profiles()).unwrap();
        io::save_scene(&scene, &dir.join("scene")).unwrap();
        write_rule(dir, "summer_maize_huantai");
        write_rule(dir, "soybean_huantai");
        write_rule(dir, "vegetables_huantai");
        let config = serde_json::json!({
            "version": 1,
            "scene": "scene",
            "classes": ["maize", "soybean", "vegetables", "other"],
            "rules": [
                {"class": "maize", "file": "summer_maize_huantai.rule"},
                {"class": "soybean", "file": "soybean_huantai.rule"},
                {"class": "vegetables", "file": "vegetables_huantai.rule"}
            ],
            "quotas": {"maize": 80, "soybean": 80, "vegetables": 80},
            "other": {"class": "other", "total": 80},
            "weaken": {"target": {"source": "scene"}},
            "features": {"indices": ["ndvi", "lswi"]},
            "forest": {"n_trees": 30},
            "seed": 99,
            "output_dir": "out"
        });
        let path = dir.join("pipeline.json");
        fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        path
    }

    #[test]
    fn full_run_classifies_a_small_scene() {
        let dir = tempdir().unwrap();
        let path = e2e_config(dir.path(), 48);
        let (config, base) = PipelineConfig::from_file(&path).unwrap();
        let summary = run_pipeline(&config, &base).unwrap();
        let eval = summary.evaluation.as_ref().unwrap();
        assert!(
            eval.overall_accuracy >= 0.8,
            "overall accuracy {}",
            eval.overall_accuracy
        );
        for file in [
            "config_resolved.json",
            "strong_mask.u8",
            "strong.json",
            "labels_raw.u16",
            "labels_opened.u16",
            "label_report.json",
            "samples_strong.csv",
            "samples_weak.csv",
            "samples_train.csv",
            "model.json",
            "prediction.u16",
            "prob_maize.f32",
            "final_map.u16",
            "final_map.ppm",
            "report.json",
            "report.txt",
            "confusion.csv",
        ] {
            assert!(dir.path().join("out").join(file).is_file(), "missing {file}");
        }
    }

    #[test]
    fn two_runs_emit_identical_bytes() {
        let dir = tempdir().unwrap();
        let path = e2e_config(dir.path(), 48);
        let (mut config, base) = PipelineConfig::from_file(&path).unwrap();
        let summary_a = run_pipeline(&config, &base).unwrap();
        config.output_dir = PathBuf::from("out_b");
        let summary_b = run_pipeline(&config, &base).unwrap();
        assert_eq!(summary_a.evaluation, summary_b.evaluation);
        let out_a = dir.path().join("out");
        let out_b = dir.path().join("out_b");
        let mut names: Vec<String> = fs::read_dir(&out_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(names.contains(&"final_map.u16".to_string()));
        for name in names {
            if name == "config_resolved.json" {
                continue;
            }
            let a = fs::read(out_a.join(&name)).unwrap();
            let b = fs::read(out_b.join(&name)).unwrap();
            assert_eq!(a, b, "outputs differ in {name}");
        }
    }

    #[test]
    fn rerunning_stages_from_intermediates_reproduces_the_outputs() {
        let dir = tempdir().unwrap();
        let path = e2e_config(dir.path(), 48);
        let (config, base) = PipelineConfig::from_file(&path).unwrap();
        run_pipeline(&config, &base).unwrap();
        let out = dir.path().join("out");
        let snapshot = |name: &str| fs::read(out.join(name)).unwrap();
        let before: Vec<(String, Vec<u8>)> = [
            "samples_weak.f32",
            "samples_train.csv",
            "model.json",
            "prediction.u16",
            "final_map.u16",
            "report.json",
        ]
        .iter()
        .map(|n| (n.to_string(), snapshot(n)))
        .collect();
        stage_weaken(&config, &base).unwrap();
        stage_mixtures(&config, &base).unwrap();
        stage_train(&config, &base).unwrap();
        stage_classify(&config, &base).unwrap();
        stage_overlay(&config, &base).unwrap();
        stage_evaluate(&config, &base).unwrap();
        for (name, bytes) in before {
            assert_eq!(snapshot(&name), bytes, "stage rerun changed {name}");
        }
    }

    #[test]
    fn missing_rule_file_is_a_load_time_error_naming_the_path() {
        let dir = tempdir().unwrap();
        let path = e2e_config(dir.path(), 16);
        fs::remove_file(dir.path().join("soybean_huantai.rule")).unwrap();
        let err = PipelineConfig::from_file(&path).unwrap_err();
        assert!(err.to_string().contains("soybean_huantai.rule"), "{err}");
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempdir().unwrap();
        let path = e2e_config(dir.path(), 16);
        let json = fs::read_to_string(&path).unwrap();
        let json = json.replace("\"version\": 1,", "\"version\": 1, \"tpyo\": true,");
        fs::write(&path, json).unwrap();
        assert!(PipelineConfig::from_file(&path).is_err());
    }

    #[test]
    fn absent_truth_omits_accuracy_but_completes() {
        let dir = tempdir().unwrap();
        let path = e2e_config(dir.path(), 48);
        let mut scene = io::load_scene(&dir.path().join("scene")).unwrap();
        scene.labels = None;
        io::save_scene(&scene, &dir.path().join("scene")).unwrap();
        let (config, base) = PipelineConfig::from_file(&path).unwrap();
        let summary = run_pipeline(&config, &base).unwrap();
        assert!(summary.evaluation.is_none());
        let text = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
        assert!(text.contains("ground truth absent"));
        assert!(!dir.path().join("out/confusion.csv").exists());
    }

    #[test]
    fn duplicate_rule_binding_is_rejected() {
        let dir = tempdir().unwrap();
        let path = e2e_config(dir.path(), 16);
        let mut value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        value["rules"][1]["class"] = serde_json::json!("maize");
        fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        let err = PipelineConfig::from_file(&path).unwrap_err();
        assert!(err.to_string().contains("more than one rule file"), "{err}");
    }

    #[test]
    fn evaluation_matches_a_direct_tally() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let classes: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let truth: Vec<u16> = (0..500)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    NO_LABEL
                } else {
                    rng.gen_range(0..4)
                }
            })
            .collect();
        let prediction: Vec<u16> = (0..500).map(|_| rng.gen_range(0..4)).collect();
        let report = evaluate(&prediction, &truth, &classes).unwrap();
        let mut expected = vec![vec![0usize; 4]; 4];
        for (&p, &t) in prediction.iter().zip(&truth) {
            if t != NO_LABEL {
                expected[t as usize][p as usize] += 1;
            }
        }
        assert_eq!(report.confusion, expected);
        let trace: usize = (0..4).map(|c| expected[c][c]).sum();
        let total: usize = expected.iter().flatten().sum();
        assert!((report.overall_accuracy - trace as f64 / total as f64).abs() < 1e-15);
        for (t, row) in expected.iter().enumerate() {
            assert_eq!(report.per_class[t].support, row.iter().sum::<usize>());
        }
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let truth = vec![0u16, 1, 0, 1, NO_LABEL];
        let report = evaluate(&truth, &truth, &classes).unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
        assert_eq!(report.evaluated_pixels, 4);
        assert_eq!(report.confusion, vec![vec![2, 0], vec![0, 2]]);
        for m in &report.per_class {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn constant_prediction_on_balanced_truth_scores_the_base_rate() {
        let classes: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let truth: Vec<u16> = (0..400).map(|i| (i % 4) as u16).collect();
        let prediction = vec![2u16; 400];
        let report = evaluate(&prediction, &truth, &classes).unwrap();
        assert!((report.overall_accuracy - 0.25).abs() < 1e-15);
    }

    #[test]
    fn render_is_deterministic_and_counts_match() {
        let labels = vec![0u16, 1, 1, NO_LABEL, 2, 0];
        let palette = default_palette(3);
        let a = render_class_map(&labels, 3, 2, &palette).unwrap();
        let b = render_class_map(&labels, 3, 2, &palette).unwrap();
        assert_eq!(a, b);
        let header_len = "P6\n3 2\n255\n".len();
        let pixels: Vec<&[u8]> = a[header_len..].chunks(3).collect();
        assert_eq!(pixels.len(), 6);
        let count_of = |rgb: [u8; 3]| pixels.iter().filter(|p| ***p == rgb).count();
        assert_eq!(count_of(palette[0]), 2);
        assert_eq!(count_of(palette[1]), 2);
        assert_eq!(count_of(palette[2]), 1);
        assert_eq!(count_of([0, 0, 0]), 1);

        let err = render_class_map(&[7u16], 1, 1, &palette).unwrap_err();
        assert!(err.to_string().contains("palette"));
    }

    #[test]
    fn one_class_overlay_stage_runs_and_overlays() {
        let dir = tempdir().unwrap();
        let scene = generate_scene(
            &SceneSpec {
                width: 40,
                height: 40,
                optical_grid: TimeGrid::new(65, 10, 23),
                radar_grid: TimeGrid::new(65, 12, 19),
                regions: vec![
                    RegionSpec::new("maize", "maize"),
                    RegionSpec::new("soybean", "soybean"),
                    RegionSpec::new("vegetables", "vegetables"),
                ],
                block_size: 8,
                noise_sd: 0.005,
                cloud: None,
                seed: 17,
            },
            &huantai_profiles(),
        )
        .unwrap();
        io::save_scene(&scene, &dir.path().join("scene")).unwrap();
        write_rule(dir.path(), "summer_maize_huantai");
        write_rule(dir.path(), "soybean_huantai");
        write_rule(dir.path(), "vegetables_huantai");
        let config = serde_json::json!({
            "version": 1,
            "scene": "scene",
            "classes": ["maize", "soybean", "vegetables"],
            "rules": [
                {"class": "maize", "file": "summer_maize_huantai.rule"},
                {"class": "soybean", "file": "soybean_huantai.rule"},
                {"class": "vegetables", "file": "vegetables_huantai.rule"}
            ],
            "quotas": {"maize": 60, "soybean": 60, "vegetables": 60},
            "strong": {"mode": {"fraction": {"min_fraction": 0.5}}},
            "weaken": {"target": {"source": "scene"}},
            "features": {"indices": ["ndvi"]},
            "forest": {"n_trees": 15},
            "pul": [{"class": "vegetables", "params": {"rounds": 5, "forest": {"n_trees": 15}}}],
            "seed": 3,
            "output_dir": "out"
        });
        let path = dir.path().join("pipeline.json");
        fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();
        let (config, base) = PipelineConfig::from_file(&path).unwrap();
        let summary = run_pipeline(&config, &base).unwrap();
        assert!(dir.path().join("out/pul_vegetables.u8").is_file());
        assert!(dir.path().join("out/pul_vegetables_model.json").is_file());
        let eval = summary.evaluation.unwrap();
        assert!(eval.overall_accuracy >= 0.8, "accuracy {}", eval.overall_accuracy);
        let recall = eval
            .per_class
            .iter()
            .find(|m| m.class == "vegetables")
            .unwrap()
            .recall;
        assert!(recall >= 0.5, "vegetables recall {recall}");
    }
}
