//! Pixel-level scoring of change maps and a Fréchet distance between image
//! sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{bilinear_resize, BinaryChangeMap, ChangeIntensityMap, ImageTensor};
use crate::infer::binarize;
use crate::scalar::Scalar;

/// Counts with "changed" as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(pred: &BinaryChangeMap, truth: &BinaryChangeMap) -> Result<ConfusionCounts> {
    pred.ensure_same_shape(truth)?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub oa: f64,
    pub precision: f64,
    pub recall: f64,
    pub kappa: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// OA, precision, recall, Cohen's kappa and F1; undefined ratios are 0.
pub fn metrics(c: &ConfusionCounts) -> Result<Metrics> {
    let n = c.total() as f64;
    if n == 0.0 {
        return Err(Error::InvalidArgument("metrics of an empty map".into()));
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let oa = (tp + tn) / n;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    let pe = ((tp + fp) * (tp + fn_) + (tn + fn_) * (tn + fp)) / (n * n);
    let kappa = ratio(oa - pe, 1.0 - pe);
    Ok(Metrics { oa, precision, recall, kappa, f1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub points: Vec<CurvePoint>,
    pub counts: Vec<ConfusionCounts>,
    /// Trapezoid area under `(fpr, tpr)` with the corners `(0,0)` and `(1,1)` added.
    pub roc_auc: f64,
}

fn point(threshold: f64, c: &ConfusionCounts) -> CurvePoint {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let recall = ratio(tp, tp + fn_);
    CurvePoint { threshold, precision: ratio(tp, tp + fp), recall, tpr: recall, fpr: ratio(fp, fp + tn) }
}

fn trapezoid(points: &[CurvePoint]) -> f64 {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    xy.push((0.0, 0.0));
    xy.push((1.0, 1.0));
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// One point per threshold (binarized with `value ≥ t`) plus the ROC area.
pub fn sweep_curves<T: Scalar>(
    map: &ChangeIntensityMap<T>,
    truth: &BinaryChangeMap,
    thresholds: &[f64],
) -> Result<Curves> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside [0,1]")));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("thresholds must be sorted".into()));
    }
    let mut points = Vec::with_capacity(thresholds.len());
    let mut counts = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let c = confusion(&binarize(map, T::from_f64_lossy(t)), truth)?;
        points.push(point(t, &c));
        counts.push(c);
    }
    let roc_auc = trapezoid(&points);
    Ok(Curves { points, counts, roc_auc })
}

/// `n + 1` evenly spaced thresholds covering `[0, 1]`.
pub fn uniform_thresholds(n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Exact ROC area using every distinct map value as a threshold.
pub fn roc_auc<T: Scalar>(map: &ChangeIntensityMap<T>, truth: &BinaryChangeMap) -> Result<f64> {
    let mut ts: Vec<f64> = map.data().iter().map(|v| v.as_f64()).collect();
    ts.push(0.0);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    Ok(sweep_curves(map, truth, &ts)?.roc_auc)
}

/// Operating point with the highest F1 (lowest threshold on ties).
pub fn best_f1<T: Scalar>(
    map: &ChangeIntensityMap<T>,
    truth: &BinaryChangeMap,
    thresholds: &[f64],
) -> Result<(f64, Metrics)> {
    let curves = sweep_curves(map, truth, thresholds)?;
    let mut best: Option<(f64, Metrics)> = None;
    for (p, c) in curves.points.iter().zip(&curves.counts) {
        let m = metrics(c)?;
        if best.is_none_or(|(_, b)| m.f1 > b.f1) {
            best = Some((p.threshold, m));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty threshold grid".into()))
}

pub fn curves_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("threshold,precision,recall,tpr,fpr\n");
    for p in points {
        s.push_str(&format!("{},{},{},{},{}\n", p.threshold, p.precision, p.recall, p.tpr, p.fpr));
    }
    s
}

/// Bilinear 8×8 downsample, flattened.
pub fn downsample_features<T: Scalar>(img: &ImageTensor<T>) -> Vec<f64> {
    bilinear_resize(img, 8, 8).expect("8x8 is a valid size").data().iter().map(|v| v.as_f64()).collect()
}

fn gaussian_fit(features: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = features.len();
    let d = features[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

/// Symmetric square root with negative eigenvalues clamped to zero.
///
/// Eigenvalues within rounding noise of zero are also zeroed; their square
/// roots would otherwise dominate the trace of rank-deficient covariances.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = top * m.nrows() as f64 * f64::EPSILON;
    let root = eig.eigenvalues.map(|v| if v > floor { v.sqrt() } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// `|μA−μB|² + tr(ΣA + ΣB − 2(ΣA ΣB)^{1/2})` between Gaussian fits of features.
pub fn frechet_feature_distance<T: Scalar>(
    set_a: &[ImageTensor<T>],
    set_b: &[ImageTensor<T>],
    extractor: &dyn Fn(&ImageTensor<T>) -> Vec<f64>,
) -> Result<f64> {
    if set_a.len() < 2 || set_b.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Fréchet distance needs at least 2 images per set, got {} and {}",
            set_a.len(),
            set_b.len()
        )));
    }
    let fa: Vec<Vec<f64>> = set_a.iter().map(extractor).collect();
    let fb: Vec<Vec<f64>> = set_b.iter().map(extractor).collect();
    let d = fa[0].len();
    if d == 0 || fa.iter().chain(&fb).any(|f| f.len() != d) {
        return Err(Error::ShapeMismatch("feature vectors differ in length".into()));
    }
    let (ma, ca) = gaussian_fit(&fa);
    let (mb, cb) = gaussian_fit(&fb);
    let sa = sqrt_psd(&ca);
    let cross = sqrt_psd(&(&sa * &cb * &sa));
    Ok((ma - mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross.trace())
}
