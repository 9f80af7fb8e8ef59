//! Subcommands of the `gancd` driver. Each one reads a [`RunConfig`] and
//! writes into the run directory:
//!
//! ```text
//! config.json  checkpoints/  maps/  metrics/  logs/  data/
//! ```

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use gancd::eval::{
    best_f1, curves_csv, downsample_features, frechet_feature_distance, roc_auc, sweep_curves, uniform_thresholds,
    Metrics,
};
use gancd::expand::Expander;
use gancd::image::tile_grid;
use gancd::infer::{binarize, change_map, sample_generated};
use gancd::nets::{load_networks, GeneratorParams};
use gancd::synth::generate_scene_pair;
use gancd::train::{TrainMonitor, Trainer};
use gancd::{load_image, save_image, BinaryChangeMap, ChangeIntensityMap, Error, Image, Result};
use serde::{Deserialize, Serialize};

pub use config::RunConfig;

const GRID_SAMPLES: usize = 16;
const GRID_COLS: usize = 4;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: e }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        mkdir(parent)?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn save_png(img: &Image, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        mkdir(parent)?;
    }
    save_image(img, path)
}

/// Resolved run directory with the standard layout.
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(cfg: &RunConfig) -> Result<Self> {
        let root = cfg.io.run_dir.clone();
        for sub in ["checkpoints", "maps", "metrics", "logs"] {
            mkdir(&root.join(sub))?;
        }
        write_json(&root.join("config.json"), cfg)?;
        Ok(Self { root })
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn maps(&self) -> PathBuf {
        self.root.join("maps")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }
}

/// The two input images and, when known, the true change map.
pub struct Pair {
    pub a: Image,
    pub b: Image,
    pub truth: Option<BinaryChangeMap>,
}

/// Loads `pair` if given, else the configured images, else a synthetic scene.
pub fn load_pair(cfg: &RunConfig, pair: Option<(&Path, &Path)>) -> Result<Pair> {
    let truth = match &cfg.io.truth {
        Some(p) => Some(BinaryChangeMap::from_image(&load_image::<f32>(p)?)?),
        None => None,
    };
    let paths = pair
        .map(|(a, b)| (a.to_path_buf(), b.to_path_buf()))
        .or_else(|| cfg.io.image_a.clone().zip(cfg.io.image_b.clone()));
    match paths {
        Some((pa, pb)) => {
            let (a, b) = (load_image::<f32>(&pa)?, load_image::<f32>(&pb)?);
            if !a.same_shape(&b) {
                return Err(Error::ShapeMismatch(format!("pair images {:?} and {:?}", a.shape(), b.shape())));
            }
            Ok(Pair { a, b, truth })
        }
        None => {
            let s = generate_scene_pair::<f32>(&cfg.scene)?;
            Ok(Pair { a: s.a, b: s.b, truth: Some(truth.unwrap_or(s.truth)) })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub height: usize,
    pub width: usize,
    pub changed_pixels: usize,
    pub primitives: usize,
}

/// Writes `data/A.png`, `data/B.png`, `data/truth.png` and `data/manifest.json`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let run = RunDir::create(cfg)?;
    let scene = generate_scene_pair::<f32>(&cfg.scene)?;
    let data = run.root.join("data");
    save_png(&scene.a, &data.join("A.png"))?;
    save_png(&scene.b, &data.join("B.png"))?;
    save_png(&scene.truth.to_image(), &data.join("truth.png"))?;
    write_json(
        &data.join("manifest.json"),
        &serde_json::json!({ "scene": cfg.scene, "primitives": scene.primitives }),
    )?;
    Ok(SynthSummary {
        height: scene.a.height(),
        width: scene.a.width(),
        changed_pixels: scene.truth.count(),
        primitives: scene.primitives.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpandSummary {
    pub set_size: usize,
    pub written: usize,
}

/// Writes a grid of the first epoch-0 expanded images to `data/expansion.png`.
pub fn cmd_expand(cfg: &RunConfig, pair: Option<(&Path, &Path)>) -> Result<ExpandSummary> {
    let run = RunDir::create(cfg)?;
    let p = load_pair(cfg, pair)?;
    let ex = Expander::new(&p.a, &p.b, &cfg.expansion)?;
    let k = ex.len().min(GRID_SAMPLES);
    let imgs = (0..k).map(|i| ex.image(0, i)).collect::<Result<Vec<_>>>()?;
    save_png(&tile_grid(&imgs, GRID_COLS)?, &run.root.join("data").join("expansion.png"))?;
    Ok(ExpandSummary { set_size: ex.len(), written: k })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub steps: u64,
    pub epochs: usize,
    pub final_loss_d: f64,
    pub final_loss_g: f64,
}

fn write_monitor(run: &RunDir, monitor: &TrainMonitor) -> Result<()> {
    write_text(&run.logs().join("train.jsonl"), &monitor.to_jsonl()?)
}

/// Trains on the pair, checkpointing into `checkpoints/`. With `resume`,
/// continues from the checkpoint there up to `train.epochs`.
pub fn cmd_train(cfg: &RunConfig, pair: Option<(&Path, &Path)>, resume: bool) -> Result<TrainSummary> {
    let run = RunDir::create(cfg)?;
    let p = load_pair(cfg, pair)?;
    let ckpt = run.checkpoints();
    let mut trainer = if resume {
        let mut t = Trainer::resume(&p.a, &p.b, &ckpt)?;
        t.set_epochs(cfg.train.epochs);
        t
    } else {
        Trainer::new(&p.a, &p.b, &cfg.expansion, &cfg.arch, &cfg.train)?
    };
    trainer.run(Some(&ckpt), |_| {})?;
    if !ckpt.join("state.json").exists() {
        trainer.save_checkpoint(&ckpt)?;
    }
    write_monitor(&run, &trainer.monitor)?;
    let last = trainer.monitor.records().last().cloned();
    Ok(TrainSummary {
        checkpoint: ckpt,
        steps: trainer.state.step,
        epochs: trainer.epoch,
        final_loss_d: last.as_ref().map_or(0.0, |r| r.loss_d),
        final_loss_g: last.as_ref().map_or(0.0, |r| r.loss_g),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferSummary {
    pub intensity: PathBuf,
    pub binary: PathBuf,
    pub samples: PathBuf,
    pub threshold: f64,
    pub changed_pixels: usize,
    pub max_intensity: f64,
}

/// Writes the change intensity map, its binarization and a sample grid.
pub fn infer_with(
    generator: &GeneratorParams<f32>,
    cfg: &RunConfig,
    out: &Path,
) -> Result<(ChangeIntensityMap<f32>, InferSummary)> {
    let map = change_map(generator, &cfg.compare)?;
    let samples = sample_generated(generator, cfg.compare.n.min(GRID_SAMPLES), cfg.compare.seed)?;
    let binary = binarize(&map, cfg.eval.threshold as f32);
    let summary = InferSummary {
        intensity: out.join("intensity.png"),
        binary: out.join("binary.png"),
        samples: out.join("samples.png"),
        threshold: cfg.eval.threshold,
        changed_pixels: binary.count(),
        max_intensity: map.max_value() as f64,
    };
    save_png(&map.to_image(), &summary.intensity)?;
    save_png(&binary.to_image(), &summary.binary)?;
    save_png(&tile_grid(&samples, GRID_COLS)?, &summary.samples)?;
    Ok((map, summary))
}

pub fn cmd_infer(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<InferSummary> {
    let run = RunDir::create(cfg)?;
    let dir = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| run.checkpoints());
    let (g, _) = load_networks::<f32>(&dir)?;
    Ok(infer_with(&g, cfg, &run.maps())?.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub roc_auc: f64,
    pub best_f1: OperatingPoint,
    pub at_threshold: OperatingPoint,
    pub thresholds: usize,
}

/// Metrics for an in-memory map.
pub fn evaluate(
    map: &ChangeIntensityMap<f32>,
    truth: &BinaryChangeMap,
    cfg: &RunConfig,
) -> Result<(EvalReport, String)> {
    let grid = uniform_thresholds(cfg.eval.thresholds);
    let curves = sweep_curves(map, truth, &grid)?;
    let (t, m) = best_f1(map, truth, &grid)?;
    let fixed = gancd::eval::metrics(&gancd::eval::confusion(&binarize(map, cfg.eval.threshold as f32), truth)?)?;
    let report = EvalReport {
        roc_auc: roc_auc(map, truth)?,
        best_f1: OperatingPoint { threshold: t, metrics: m },
        at_threshold: OperatingPoint { threshold: cfg.eval.threshold, metrics: fixed },
        thresholds: grid.len(),
    };
    Ok((report, curves_csv(&curves.points)))
}

/// Reads a grayscale intensity PNG and a truth PNG; writes
/// `metrics/metrics.json` and `metrics/curves.csv`.
pub fn cmd_eval(cfg: &RunConfig, map: &Path, truth: &Path) -> Result<EvalReport> {
    let run = RunDir::create(cfg)?;
    let m = ChangeIntensityMap::from_image(&load_image::<f32>(map)?)?;
    let t = BinaryChangeMap::from_image(&load_image::<f32>(truth)?)?;
    let (report, csv) = evaluate(&m, &t, cfg)?;
    write_json(&run.metrics().join("metrics.json"), &report)?;
    write_text(&run.metrics().join("curves.csv"), &csv)?;
    Ok(report)
}

/// Writes `metrics/divlab.json`.
pub fn cmd_divlab(cfg: &RunConfig, count: Option<usize>) -> Result<gancd::divlab::DivlabReport> {
    let run = RunDir::create(cfg)?;
    let report = gancd::divlab::run_suite(count.unwrap_or(cfg.divlab.count), cfg.divlab.seed)?;
    write_json(&run.metrics().join("divlab.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub clip_size: usize,
    pub frechet: f64,
    pub roc_auc: f64,
    pub best_f1: OperatingPoint,
    pub at_threshold: OperatingPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisStudyReport {
    pub variants: Vec<VariantReport>,
}

/// Trains one variant per clip size (full, half and quarter image side)
/// and scores each against the truth map.
pub fn cmd_dis_study(cfg: &RunConfig, pair: Option<(&Path, &Path)>) -> Result<DisStudyReport> {
    let run = RunDir::create(cfg)?;
    let p = load_pair(cfg, pair)?;
    let truth = p.truth.clone().ok_or_else(|| Error::InvalidConfig("dis-study needs a truth map".into()))?;
    let size = cfg.arch.image_size;
    let mut variants = Vec::new();
    for clip in [size, size / 2, size / 4] {
        let name = format!("DIS-{clip}");
        let mut v = cfg.clone();
        v.arch.clip_size = clip;
        v.train.clip_size = clip;
        v.validate()?;
        let dir = run.root.join("dis-study").join(&name);
        let ckpt = dir.join("checkpoints");
        mkdir(&ckpt)?;
        let mut trainer = Trainer::new(&p.a, &p.b, &v.expansion, &v.arch, &v.train)?;
        trainer.run(Some(&ckpt), |_| {})?;
        write_text(&dir.join("train.jsonl"), &trainer.monitor.to_jsonl()?)?;
        let g = trainer.finish().generator;
        let (map, _) = infer_with(&g, &v, &dir)?;
        let (eval, csv) = evaluate(&map, &truth, &v)?;
        write_text(&dir.join("curves.csv"), &csv)?;
        let fake = sample_generated(&g, v.compare.n, v.compare.seed)?;
        let ex = Expander::new(&p.a, &p.b, &v.expansion)?;
        let real = (0..v.compare.n.min(ex.len())).map(|k| ex.image(0, k)).collect::<Result<Vec<_>>>()?;
        let frechet = frechet_feature_distance(&real, &fake, &|i: &Image| downsample_features(i))?;
        variants.push(VariantReport {
            name,
            clip_size: clip,
            frechet,
            roc_auc: eval.roc_auc,
            best_f1: eval.best_f1,
            at_threshold: eval.at_threshold,
        });
    }
    let report = DisStudyReport { variants };
    write_json(&run.metrics().join("dis_study.json"), &report)?;
    Ok(report)
}
