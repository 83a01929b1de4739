use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{
    class_discrepancy_grad, coral_grad, cross_entropy_grad, heuristic_bandwidths, mmd_grad, DEFAULT_BANDWIDTH_SCALES,
};
use crate::error::{Error, Result};
use crate::numerics::{softmax, Matrix, ParamSet, SgdConfig, TensorFile, Tensors};
use crate::recurrent::Dense;

/// Coefficients of the four loss terms; all 1 reproduces the plain sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mmd: f64,
    pub coral: f64,
    pub class_discrepancy: f64,
    pub classification: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mmd: 1.0,
            coral: 1.0,
            class_discrepancy: 1.0,
            classification: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub trunk_hidden: Vec<usize>,
    /// Per-source layers; the last one is the feature layer the losses see.
    pub branch_hidden: Vec<usize>,
    pub num_classes: usize,
    pub bandwidth_scales: Vec<f64>,
    pub weights: LossWeights,
    /// `epochs` counts passes over the largest source domain.
    pub sgd: SgdConfig,
}

impl AdaptConfig {
    /// 2048-unit shared layer and 256-unit branches.
    pub fn paper() -> Self {
        Self {
            trunk_hidden: vec![2048],
            branch_hidden: vec![256],
            num_classes: 2,
            bandwidth_scales: DEFAULT_BANDWIDTH_SCALES.to_vec(),
            weights: LossWeights::default(),
            sgd: SgdConfig {
                learning_rate: 0.01,
                batch_size: 32,
                epochs: 100,
                seed: 0,
                clip_norm: Some(5.0),
            },
        }
    }

    pub fn desk() -> Self {
        Self {
            trunk_hidden: vec![32],
            branch_hidden: vec![16],
            sgd: SgdConfig {
                learning_rate: 0.2,
                epochs: 150,
                ..Self::paper().sgd
            },
            ..Self::paper()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sgd.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.sgd.batch_size < 2 {
            return Err(Error::invalid("adaptation needs batches of at least two samples"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.branch_hidden.is_empty() || self.branch_hidden.contains(&0) || self.trunk_hidden.contains(&0) {
            return Err(Error::invalid("layer sizes must be nonzero and branches nonempty"));
        }
        if self.bandwidth_scales.is_empty() || self.bandwidth_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("bandwidth scales must be positive"));
        }
        let w = &self.weights;
        if [w.mmd, w.coral, w.class_discrepancy, w.classification]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::invalid("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Per-step loss terms. `feature_discrepancy = mmd + coral` and
/// `total = feature_discrepancy + class_discrepancy + classification`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptLossReport {
    pub mmd: f64,
    pub coral: f64,
    pub feature_discrepancy: f64,
    pub class_discrepancy: f64,
    pub classification: f64,
    pub total: f64,
}

impl AdaptLossReport {
    pub fn new(mmd: f64, coral: f64, class_discrepancy: f64, classification: f64) -> Self {
        let feature_discrepancy = mmd + coral;
        Self {
            mmd,
            coral,
            feature_discrepancy,
            class_discrepancy,
            classification,
            total: feature_discrepancy + class_discrepancy + classification,
        }
    }

    /// Objective actually minimised under `w`.
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.mmd * self.mmd
            + w.coral * self.coral
            + w.class_discrepancy * self.class_discrepancy
            + w.classification * self.classification
    }
}

/// Labelled batches from every source domain plus an unlabelled target batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBatch {
    pub sources: Vec<(Matrix, Vec<usize>)>,
    pub target: Matrix,
}

/// Kernel bandwidths for the MMD term: recomputed per batch from the
/// median heuristic, or held fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidths {
    Heuristic(Vec<f64>),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub layers: Vec<Dense>,
    pub classifier: Dense,
}

/// Shared ReLU trunk, one ReLU branch and softmax classifier per source.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptModel {
    pub params: ParamSet,
    pub trunk: Vec<Dense>,
    pub branches: Vec<Branch>,
    pub input_size: usize,
    pub num_classes: usize,
}

/// Activations of a ReLU chain; `acts[0]` is the input.
fn chain_forward(layers: &[Dense], p: &Tensors, x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    for layer in layers {
        let mut y = layer.forward_vec(p, acts.last().expect("nonempty"));
        y.iter_mut().for_each(|v| *v = v.max(0.0));
        acts.push(y);
    }
    acts
}

/// Backpropagates `d_out` through a ReLU chain; returns the input gradient.
fn chain_backward(layers: &[Dense], p: &Tensors, g: &mut Tensors, acts: &[Vec<f64>], d_out: Vec<f64>) -> Vec<f64> {
    let mut delta = d_out;
    for k in (0..layers.len()).rev() {
        for (d, y) in delta.iter_mut().zip(&acts[k + 1]) {
            if *y <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dx = vec![0.0; layers[k].input];
        layers[k].backward(p, g, &acts[k], &delta, Some(&mut dx));
        delta = dx;
    }
    delta
}

fn rows_matrix(rows: &[&[f64]]) -> Matrix {
    let cols = rows.first().map_or(0, |r| r.len());
    Matrix::from_vec(rows.len(), cols, rows.iter().flat_map(|r| r.iter().copied()).collect())
        .expect("rows share a width")
}

struct BranchPass {
    source_acts: Vec<Vec<Vec<f64>>>,
    target_acts: Vec<Vec<Vec<f64>>>,
    source_features: Matrix,
    target_features: Matrix,
    source_logits: Matrix,
    target_logits: Matrix,
}

impl AdaptModel {
    pub fn new(input_size: usize, num_sources: usize, config: &AdaptConfig) -> Result<Self> {
        config.validate()?;
        if input_size == 0 || num_sources == 0 {
            return Err(Error::invalid("need a nonzero input size and at least one source"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.sgd.seed);
        let mut params = ParamSet::new();
        let mut width = input_size;
        let mut trunk = Vec::new();
        for (k, &h) in config.trunk_hidden.iter().enumerate() {
            trunk.push(Dense::new(&mut params, &format!("trunk.d{k}"), width, h, &mut rng));
            width = h;
        }
        let trunk_width = width;
        let mut branches = Vec::with_capacity(num_sources);
        for s in 0..num_sources {
            let mut width = trunk_width;
            let mut layers = Vec::new();
            for (k, &h) in config.branch_hidden.iter().enumerate() {
                layers.push(Dense::new(&mut params, &format!("branch{s}.d{k}"), width, h, &mut rng));
                width = h;
            }
            let classifier = Dense::new(
                &mut params,
                &format!("branch{s}.classifier"),
                width,
                config.num_classes,
                &mut rng,
            );
            branches.push(Branch { layers, classifier });
        }
        Ok(AdaptModel {
            params,
            trunk,
            branches,
            input_size,
            num_classes: config.num_classes,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.branches.len()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_size {
            return Err(Error::shape(format!(
                "features have {} columns, model expects {}",
                x.cols(),
                self.input_size
            )));
        }
        Ok(())
    }

    /// Feature-layer activations of branch `branch` (the input of its
    /// classifier), one row per sample.
    pub fn latent(&self, x: &Matrix, branch: usize) -> Result<Matrix> {
        self.check_input(x)?;
        let b = self
            .branches
            .get(branch)
            .ok_or_else(|| Error::invalid(format!("no branch {branch}")))?;
        let p = self.params.values();
        let rows: Vec<Vec<f64>> = x
            .iter_rows()
            .map(|row| {
                let trunk = chain_forward(&self.trunk, p, row);
                chain_forward(&b.layers, p, trunk.last().expect("nonempty"))
                    .pop()
                    .expect("nonempty")
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        Ok(rows_matrix(&refs))
    }

    /// Softmax output of every classifier, `[branch]` of `n x classes`.
    pub fn branch_probabilities(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        self.check_input(x)?;
        let p = self.params.values();
        let trunks: Vec<Vec<f64>> = x
            .iter_rows()
            .map(|row| chain_forward(&self.trunk, p, row).pop().expect("nonempty"))
            .collect();
        Ok(self
            .branches
            .iter()
            .map(|b| {
                let mut out = Matrix::zeros(x.rows(), self.num_classes);
                for (r, t) in trunks.iter().enumerate() {
                    let feat = chain_forward(&b.layers, p, t).pop().expect("nonempty");
                    out.row_mut(r)
                        .copy_from_slice(&softmax(&b.classifier.forward_vec(p, &feat)));
                }
                out
            })
            .collect())
    }

    /// Mean of the classifiers' probabilities.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let per_branch = self.branch_probabilities(x)?;
        let mut mean = Matrix::zeros(x.rows(), self.num_classes);
        for p in &per_branch {
            mean.add_scaled(p, 1.0 / per_branch.len() as f64);
        }
        Ok(mean)
    }

    /// Argmax of the averaged probabilities, lowest class on ties.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let proba = self.predict_proba(x)?;
        Ok(proba
            .iter_rows()
            .map(|row| {
                let mut best = 0;
                for (c, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        if labels.len() != x.rows() || labels.is_empty() {
            return Err(Error::shape("one label per row expected"));
        }
        let hits = self.predict(x)?.iter().zip(labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    fn branch_pass(
        &self,
        p: &Tensors,
        branch: &Branch,
        source_trunk: &[Vec<f64>],
        target_trunk: &[Vec<f64>],
    ) -> BranchPass {
        let run = |inputs: &[Vec<f64>]| {
            let acts: Vec<Vec<Vec<f64>>> = inputs.iter().map(|t| chain_forward(&branch.layers, p, t)).collect();
            let feats: Vec<&[f64]> = acts.iter().map(|a| a.last().expect("nonempty").as_slice()).collect();
            let features = rows_matrix(&feats);
            let logit_rows: Vec<Vec<f64>> = feats.iter().map(|f| branch.classifier.forward_vec(p, f)).collect();
            let refs: Vec<&[f64]> = logit_rows.iter().map(Vec::as_slice).collect();
            (acts, features, rows_matrix(&refs))
        };
        let (source_acts, source_features, source_logits) = run(source_trunk);
        let (target_acts, target_features, target_logits) = run(target_trunk);
        BranchPass {
            source_acts,
            target_acts,
            source_features,
            target_features,
            source_logits,
            target_logits,
        }
    }

    /// Loss terms on one batch, with the weighted objective's gradient added
    /// into `g`. `sources[k]` feeds branch `k`.
    pub fn accumulate(
        &self,
        p: &Tensors,
        g: &mut Tensors,
        batch: &DomainBatch,
        bandwidths: &Bandwidths,
        weights: &LossWeights,
    ) -> Result<AdaptLossReport> {
        let k = self.branches.len();
        if batch.sources.len() != k {
            return Err(Error::shape(format!(
                "batch has {} source domains, model has {k} branches",
                batch.sources.len()
            )));
        }
        self.check_input(&batch.target)?;
        for (x, y) in &batch.sources {
            self.check_input(x)?;
            if y.len() != x.rows() {
                return Err(Error::shape("one label per source row expected"));
            }
            if let Some(bad) = y.iter().find(|&&c| c >= self.num_classes) {
                return Err(Error::invalid(format!(
                    "label {bad} outside {} classes",
                    self.num_classes
                )));
            }
        }
        let target_trunk: Vec<Vec<Vec<f64>>> = batch
            .target
            .iter_rows()
            .map(|r| chain_forward(&self.trunk, p, r))
            .collect();
        let target_tops: Vec<Vec<f64>> = target_trunk
            .iter()
            .map(|a| a.last().expect("nonempty").clone())
            .collect();
        let mut d_target_top = vec![vec![0.0; target_tops.first().map_or(0, Vec::len)]; target_tops.len()];

        let inv_k = 1.0 / k as f64;
        let (mut mmd_sum, mut coral_sum, mut cl_sum) = (0.0, 0.0, 0.0);
        let mut target_probs = Vec::with_capacity(k);
        let mut passes = Vec::with_capacity(k);
        let mut source_trunks = Vec::with_capacity(k);
        for (branch, (x, _)) in self.branches.iter().zip(&batch.sources) {
            let acts: Vec<Vec<Vec<f64>>> = x.iter_rows().map(|r| chain_forward(&self.trunk, p, r)).collect();
            let tops: Vec<Vec<f64>> = acts.iter().map(|a| a.last().expect("nonempty").clone()).collect();
            let pass = self.branch_pass(p, branch, &tops, &target_tops);
            let probs = {
                let mut m = pass.target_logits.clone();
                for r in 0..m.rows() {
                    let s = softmax(m.row(r));
                    m.row_mut(r).copy_from_slice(&s);
                }
                m
            };
            target_probs.push(probs);
            passes.push(pass);
            source_trunks.push(acts);
        }
        let (cd, d_probs) = class_discrepancy_grad(&target_probs);

        for (j, ((branch, (_, labels)), pass)) in self.branches.iter().zip(&batch.sources).zip(&passes).enumerate() {
            let bw = match bandwidths {
                Bandwidths::Fixed(b) => b.clone(),
                Bandwidths::Heuristic(scales) => {
                    heuristic_bandwidths(&pass.source_features, &pass.target_features, scales)
                }
            };
            let (mmd, mut d_fs, mut d_ft, _) = mmd_grad(&pass.source_features, &pass.target_features, &bw)?;
            let (coral, d_fs_c, d_ft_c) = coral_grad(&pass.source_features, &pass.target_features)?;
            let (cl, mut d_logit_s) = cross_entropy_grad(&pass.source_logits, labels);
            mmd_sum += mmd;
            coral_sum += coral;
            cl_sum += cl;

            d_fs.scale(weights.mmd * inv_k);
            d_fs.add_scaled(&d_fs_c, weights.coral * inv_k);
            d_ft.scale(weights.mmd * inv_k);
            d_ft.add_scaled(&d_ft_c, weights.coral * inv_k);
            d_logit_s.scale(weights.classification * inv_k);

            // Softmax Jacobian for the discrepancy term on target outputs.
            let mut d_logit_t = Matrix::zeros(pass.target_logits.rows(), self.num_classes);
            for r in 0..d_logit_t.rows() {
                let pr = target_probs[j].row(r);
                let dp = d_probs[j].row(r);
                let inner: f64 = pr.iter().zip(dp).map(|(a, b)| a * b).sum();
                for (c, out) in d_logit_t.row_mut(r).iter_mut().enumerate() {
                    *out = weights.class_discrepancy * pr[c] * (dp[c] - inner);
                }
            }

            for (r, acts) in pass.source_acts.iter().enumerate() {
                let feat = acts.last().expect("nonempty");
                let mut d_feat = d_fs.row(r).to_vec();
                branch
                    .classifier
                    .backward(p, g, feat, d_logit_s.row(r), Some(&mut d_feat));
                let d_top = chain_backward(&branch.layers, p, g, acts, d_feat);
                chain_backward(&self.trunk, p, g, &source_trunks[j][r], d_top);
            }
            for (r, acts) in pass.target_acts.iter().enumerate() {
                let feat = acts.last().expect("nonempty");
                let mut d_feat = d_ft.row(r).to_vec();
                branch
                    .classifier
                    .backward(p, g, feat, d_logit_t.row(r), Some(&mut d_feat));
                let d_top = chain_backward(&branch.layers, p, g, acts, d_feat);
                for (a, b) in d_target_top[r].iter_mut().zip(&d_top) {
                    *a += b;
                }
            }
        }
        for (acts, d_top) in target_trunk.iter().zip(d_target_top) {
            chain_backward(&self.trunk, p, g, acts, d_top);
        }
        Ok(AdaptLossReport::new(
            mmd_sum * inv_k,
            coral_sum * inv_k,
            cd,
            cl_sum * inv_k,
        ))
    }

    /// Loss terms on `batch` without touching the model's gradients.
    pub fn evaluate(&self, batch: &DomainBatch, bandwidths: &Bandwidths) -> Result<AdaptLossReport> {
        let mut scratch = self.params.clone();
        let (p, g) = scratch.split_mut();
        self.accumulate(p, g, batch, bandwidths, &LossWeights::default())
    }

    pub fn to_tensor_file(&self, config: &AdaptConfig) -> Result<TensorFile> {
        let mut file = self.params.to_tensor_file();
        file.push_meta("kind", "adapt-model");
        file.push_meta("config", serde_json::to_string(config)?);
        file.push_meta("input_size", self.input_size);
        file.push_meta("num_sources", self.num_sources());
        Ok(file)
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<(Self, AdaptConfig)> {
        if file.meta("kind") != Some("adapt-model") {
            return Err(Error::invalid("checkpoint does not hold an adaptation model"));
        }
        let missing = |key: &str| Error::invalid(format!("checkpoint lacks `{key}` metadata"));
        let config: AdaptConfig = serde_json::from_str(file.meta("config").ok_or_else(|| missing("config"))?)?;
        let parse = |key: &str| -> Result<usize> {
            file.meta(key)
                .ok_or_else(|| missing(key))?
                .parse()
                .map_err(|_| Error::invalid(format!("bad `{key}` metadata")))
        };
        let mut model = Self::new(parse("input_size")?, parse("num_sources")?, &config)?;
        model.params.load_values(file)?;
        Ok((model, config))
    }
}
