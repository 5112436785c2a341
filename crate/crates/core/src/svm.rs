//! Soft-margin binary SVM with a Gaussian kernel, trained from scratch with
//! sequential minimal optimization (SMO).
//!
//! Labels follow the association convention: `+1` means MBS-served
//! (`mu = 1`), `-1` means offloaded. Features are z-scored before training
//! (they span many orders of magnitude) and the same scaling is applied at
//! prediction time. The trained model satisfies the dual box constraint
//! `0 <= alpha_i <= c` and the equality `sum alpha_i y_i = 0`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::FeatureVector;

pub const N_FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    /// true = MBS-served (mu = 1, label +1).
    pub mbs_served: bool,
}

impl LabeledSample {
    pub fn label(&self) -> f64 {
        if self.mbs_served {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    pub rows: Vec<LabeledSample>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `x,d_th,r_th,delta_d,delta_r,snr,mu`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,d_th,r_th,delta_d,delta_r,snr,mu\n");
        for row in &self.rows {
            let f = row.features;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                f.x,
                f.d_th,
                f.r_th,
                f.delta_d,
                f.delta_r,
                f.snr,
                u8::from(row.mbs_served)
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SvmError> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != N_FEATURES + 1 {
                return Err(SvmError::Parse {
                    line: lineno + 1,
                    msg: format!("expected {} fields, got {}", N_FEATURES + 1, fields.len()),
                });
            }
            let mut vals = [0.0; N_FEATURES];
            for (k, field) in fields[..N_FEATURES].iter().enumerate() {
                vals[k] = field.trim().parse::<f64>().map_err(|e| SvmError::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                })?;
            }
            let mu: u8 =
                fields[N_FEATURES]
                    .trim()
                    .parse()
                    .map_err(|e: std::num::ParseIntError| SvmError::Parse {
                        line: lineno + 1,
                        msg: e.to_string(),
                    })?;
            rows.push(LabeledSample {
                features: FeatureVector::from_array(vals),
                mbs_served: mu == 1,
            });
        }
        Ok(Self { rows })
    }
}

/// Per-feature z-score parameters, applied identically at train and predict
/// time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl ScalingParams {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; N_FEATURES],
            std: [1.0; N_FEATURES],
        }
    }

    pub fn fit(rows: &[LabeledSample]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; N_FEATURES];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row.features.to_array()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = [0.0; N_FEATURES];
        for row in rows {
            for (k, v) in row.features.to_array().iter().enumerate() {
                var[k] += (v - mean[k]) * (v - mean[k]);
            }
        }
        let mut std = [0.0; N_FEATURES];
        for (s, v) in std.iter_mut().zip(var) {
            *s = (v / n).sqrt().max(1e-12);
        }
        Self { mean, std }
    }

    pub fn apply(&self, fv: &FeatureVector) -> [f64; N_FEATURES] {
        let mut out = fv.to_array();
        for (k, v) in out.iter_mut().enumerate() {
            *v = (*v - self.mean[k]) / self.std[k];
        }
        out
    }
}

/// Gaussian kernel `exp(-gamma * ||u - v||^2)` on already-scaled features.
pub fn kernel(u: &[f64; N_FEATURES], v: &[f64; N_FEATURES], kernel_gamma: f64) -> f64 {
    let mut sq = 0.0;
    for (a, b) in u.iter().zip(v) {
        sq += (a - b) * (a - b);
    }
    (-kernel_gamma * sq).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel_gamma: f64,
    pub tol: f64,
    pub max_passes: usize,
    /// Seed of the random second-index fallback in SMO.
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            kernel_gamma: 0.1,
            tol: 1e-3,
            max_passes: 50,
            seed: 0,
        }
    }
}

/// Trained classifier; prediction follows `mu = 1 iff f(u) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Scaled feature vectors of the support vectors.
    pub support_vectors: Vec<FeatureVector>,
    /// Dual coefficients signed by label: `alpha_i * y_i`.
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub kernel_gamma: f64,
    pub c: f64,
    pub scaling: ScalingParams,
}

impl SvmModel {
    /// Decision value `f(u) = sum_i alpha_i * K(sv_i, scaled(u)) + b`.
    pub fn decision_value(&self, fv: &FeatureVector) -> f64 {
        let u = self.scaling.apply(fv);
        let mut f = self.bias;
        for (sv, a) in self.support_vectors.iter().zip(&self.alphas) {
            f += a * kernel(&sv.to_array(), &u, self.kernel_gamma);
        }
        f
    }

    /// Predicted association: true (MBS-served) iff the decision value is
    /// non-negative.
    pub fn predict_mu(&self, fv: &FeatureVector) -> bool {
        self.decision_value(fv) >= 0.0
    }

    /// Dual objective `sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`
    /// evaluated over the stored support vectors.
    pub fn dual_objective(&self) -> f64 {
        let arrays: Vec<[f64; N_FEATURES]> = self
            .support_vectors
            .iter()
            .map(|sv| sv.to_array())
            .collect();
        let linear: f64 = self.alphas.iter().map(|a| a.abs()).sum();
        let mut quad = 0.0;
        for i in 0..arrays.len() {
            for j in 0..arrays.len() {
                quad += self.alphas[i]
                    * self.alphas[j]
                    * kernel(&arrays[i], &arrays[j], self.kernel_gamma);
            }
        }
        linear - 0.5 * quad
    }

    /// Signed sum of the dual coefficients; zero (within 1e-8) for a valid
    /// model.
    pub fn equality_residual(&self) -> f64 {
        self.alphas.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("all training labels are identical")]
    Degenerate,
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("dataset parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

struct Smo<'a> {
    y: &'a [f64],
    gram: Vec<f64>,
    n: usize,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    bias: f64,
    errors: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'a> Smo<'a> {
    fn new(x: &'a [[f64; N_FEATURES]], y: &'a [f64], params: &SvmParams) -> Self {
        let n = x.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = kernel(&x[i], &x[j], params.kernel_gamma);
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
        }
        Self {
            y,
            gram,
            n,
            c: params.c,
            tol: params.tol,
            alpha: vec![0.0; n],
            bias: 0.0,
            errors: y.iter().map(|yi| -yi).collect(),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        }
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.n + j]
    }

    fn non_bound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            (
                (a2_old - a1_old).max(0.0),
                (self.c + a2_old - a1_old).min(self.c),
            )
        } else {
            (
                (a1_old + a2_old - self.c).max(0.0),
                (a1_old + a2_old).min(self.c),
            )
        };
        if hi - lo < 1e-12 {
            return false;
        }
        let (k11, k12, k22) = (self.k(i1, i1), self.k(i1, i2), self.k(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;
        if eta <= 0.0 {
            // only happens for duplicate points, where the objective is flat
            // along this pair
            return false;
        }
        let mut a2 = (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi);
        if (a2 - a2_old).abs() < 1e-12 * (a2 + a2_old + 1e-12) {
            return false;
        }
        let mut a1 = a1_old + s * (a2_old - a2);
        // keep the pair sum exact under clipping noise
        if a1 < 0.0 {
            a2 += s * a1;
            a1 = 0.0;
        } else if a1 > self.c {
            a2 += s * (a1 - self.c);
            a1 = self.c;
        }
        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let b_new = if a1 > 0.0 && a1 < self.c {
            b1
        } else if a2 > 0.0 && a2 < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.bias;
        for k in 0..self.n {
            self.errors[k] += d1 * self.k(i1, k) + d2 * self.k(i2, k) + db;
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.bias = b_new;
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        let violates = (r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }
        // best heuristic: maximize |E1 - E2| among non-bound multipliers
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.n {
            if self.non_bound(i) {
                let gap = (self.errors[i] - e2).abs();
                if best.is_none_or(|(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        // fall back to scanning, starting at a random position
        let start = self.rng.random_range(0..self.n);
        for off in 0..self.n {
            let i1 = (start + off) % self.n;
            if self.non_bound(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        let start = self.rng.random_range(0..self.n);
        for off in 0..self.n {
            let i1 = (start + off) % self.n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    fn run(&mut self, max_passes: usize) {
        let mut examine_all = true;
        let mut passes = 0;
        loop {
            let mut changed = 0usize;
            if examine_all {
                for i in 0..self.n {
                    changed += usize::from(self.examine(i));
                }
            } else {
                for i in 0..self.n {
                    if self.non_bound(i) {
                        changed += usize::from(self.examine(i));
                    }
                }
            }
            passes += 1;
            if passes >= max_passes {
                break;
            }
            if examine_all {
                if changed == 0 {
                    break;
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
        }
    }
}

/// Train by SMO. Deterministic for a fixed `params.seed`.
pub fn train(data: &TrainingSet, params: &SvmParams) -> Result<SvmModel, SvmError> {
    if params.c <= 0.0 {
        return Err(SvmError::BadParam("c must be positive".into()));
    }
    if params.kernel_gamma <= 0.0 {
        return Err(SvmError::BadParam(
            "kernel_gamma must be strictly positive (a zero width makes the kernel constant)"
                .into(),
        ));
    }
    let n_pos = data.rows.iter().filter(|r| r.mbs_served).count();
    if data.rows.len() < 2 || n_pos == 0 || n_pos == data.rows.len() {
        return Err(SvmError::Degenerate);
    }

    let scaling = ScalingParams::fit(&data.rows);
    let x: Vec<[f64; N_FEATURES]> = data
        .rows
        .iter()
        .map(|r| scaling.apply(&r.features))
        .collect();
    let y: Vec<f64> = data.rows.iter().map(|r| r.label()).collect();

    let mut smo = Smo::new(&x, &y, params);
    smo.run(params.max_passes);

    // recompute the bias from margin support vectors when any exist
    let margin: Vec<usize> = (0..smo.n).filter(|&i| smo.non_bound(i)).collect();
    let bias = if margin.is_empty() {
        smo.bias
    } else {
        margin
            .iter()
            .map(|&i| {
                let f_no_b: f64 = (0..smo.n).map(|j| smo.alpha[j] * y[j] * smo.k(j, i)).sum();
                y[i] - f_no_b
            })
            .sum::<f64>()
            / margin.len() as f64
    };

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    for i in 0..smo.n {
        if smo.alpha[i] > 1e-14 * params.c {
            support_vectors.push(FeatureVector::from_array(x[i]));
            alphas.push(smo.alpha[i] * y[i]);
        }
    }
    Ok(SvmModel {
        support_vectors,
        alphas,
        bias,
        kernel_gamma: params.kernel_gamma,
        c: params.c,
        scaling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub c: f64,
    pub kernel_gamma: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_c: f64,
    pub best_kernel_gamma: f64,
    pub table: Vec<CvRow>,
}

/// Fraction of `rows` that `model` classifies correctly.
pub fn accuracy(model: &SvmModel, rows: &[LabeledSample]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows
        .iter()
        .filter(|r| model.predict_mu(&r.features) == r.mbs_served)
        .count();
    hits as f64 / rows.len() as f64
}

/// Deterministic k-fold cross validation over a `(c, kernel_gamma)` grid.
///
/// Ties on mean validation accuracy go to the smaller `c`, then the smaller
/// `kernel_gamma`.
pub fn cross_validate(
    data: &TrainingSet,
    grid: &[(f64, f64)],
    folds: usize,
    base: &SvmParams,
    seed: u64,
) -> Result<CvResult, SvmError> {
    if folds < 2 {
        return Err(SvmError::BadParam("folds must be at least 2".into()));
    }
    if grid.is_empty() {
        return Err(SvmError::BadParam("empty hyperparameter grid".into()));
    }
    if data.rows.len() < folds {
        return Err(SvmError::BadParam("fewer rows than folds".into()));
    }
    let mut order: Vec<usize> = (0..data.rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let fold_of = |k: usize| -> (Vec<usize>, Vec<usize>) {
        let lo = k * order.len() / folds;
        let hi = (k + 1) * order.len() / folds;
        (
            order[lo..hi].to_vec(),
            [&order[..lo], &order[hi..]].concat(),
        )
    };

    let table: Vec<CvRow> = grid
        .par_iter()
        .map(|&(c, kernel_gamma)| {
            let params = SvmParams {
                c,
                kernel_gamma,
                ..*base
            };
            let mut acc_sum = 0.0;
            for k in 0..folds {
                let (val, tr) = fold_of(k);
                let train_set = TrainingSet {
                    rows: tr.iter().map(|&i| data.rows[i]).collect(),
                };
                let val_rows: Vec<LabeledSample> = val.iter().map(|&i| data.rows[i]).collect();
                if let Ok(model) = train(&train_set, &params) {
                    acc_sum += accuracy(&model, &val_rows);
                }
            }
            CvRow {
                c,
                kernel_gamma,
                mean_accuracy: acc_sum / folds as f64,
            }
        })
        .collect();

    let mut best = table[0];
    for row in &table[1..] {
        let is_better = row.mean_accuracy > best.mean_accuracy
            || (row.mean_accuracy == best.mean_accuracy
                && (row.c < best.c || (row.c == best.c && row.kernel_gamma < best.kernel_gamma)));
        if is_better {
            best = *row;
        }
    }
    Ok(CvResult {
        best_c: best.c,
        best_kernel_gamma: best.kernel_gamma,
        table,
    })
}
