use std::fmt::Write as _;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{AdaptConfig, AdaptLossReport, AdaptModel, Bandwidths, DomainBatch};
use crate::error::{Error, Result};
use crate::latent::{feature_matrix, LatentVector};
use crate::numerics::{sgd_step, Matrix};

/// Features and labels of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDomain {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledDomain {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape("one label per feature row expected"));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn from_vectors(name: impl Into<String>, vectors: &[LatentVector]) -> Result<Self> {
        Self::new(
            name,
            feature_matrix(vectors)?,
            vectors.iter().map(|v| v.label).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Concatenation of several domains under one name.
    pub fn pooled(name: impl Into<String>, domains: &[LabeledDomain]) -> Result<Self> {
        let cols = domains
            .first()
            .ok_or_else(|| Error::InsufficientData("nothing to pool".into()))?
            .features
            .cols();
        if domains.iter().any(|d| d.features.cols() != cols) {
            return Err(Error::shape("domains differ in feature dimension"));
        }
        let data = domains.iter().flat_map(|d| d.features.data().iter().copied()).collect();
        let rows = domains.iter().map(LabeledDomain::len).sum();
        Self::new(
            name,
            Matrix::from_vec(rows, cols, data)?,
            domains.iter().flat_map(|d| d.labels.iter().copied()).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub model: AdaptModel,
    /// One report per optimisation step.
    pub curve: Vec<AdaptLossReport>,
    /// Accuracy of the averaged classifiers on the target, when labels were
    /// supplied for evaluation.
    pub target_accuracy: Option<f64>,
}

/// `step,mmd,coral,feature_discrepancy,class_discrepancy,classification,total`
pub fn loss_curve_csv(curve: &[AdaptLossReport]) -> String {
    let mut out = String::from("step,mmd,coral,feature_discrepancy,class_discrepancy,classification,total\n");
    for (i, r) in curve.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            r.mmd, r.coral, r.feature_discrepancy, r.class_discrepancy, r.classification, r.total
        );
    }
    out
}

/// Endless reshuffled passes over `0..n`.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Cycler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Cycler { order, pos: 0, rng }
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        (0..k)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

fn gather(x: &Matrix, idx: &[usize]) -> Matrix {
    let data = idx.iter().flat_map(|&i| x.row(i).iter().copied()).collect();
    Matrix::from_vec(idx.len(), x.cols(), data).expect("shape by construction")
}

/// Trains one branch per source domain against an unlabelled target.
///
/// Every step draws a batch from each source and from the target, cycling
/// the smaller domains. An epoch is one pass over the largest source.
/// `target_labels` are only used to report the final accuracy.
pub fn train_multisource(
    sources: &[LabeledDomain],
    target: &Matrix,
    target_labels: Option<&[usize]>,
    config: &AdaptConfig,
) -> Result<AdaptOutcome> {
    config.validate()?;
    if sources.is_empty() {
        return Err(Error::InsufficientData("need at least one source domain".into()));
    }
    let input = target.cols();
    for s in sources {
        if s.features.cols() != input {
            return Err(Error::shape(format!(
                "source `{}` has {} features, target {input}",
                s.name,
                s.features.cols()
            )));
        }
        if s.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "source `{}` has fewer than two rows",
                s.name
            )));
        }
        if let Some(bad) = s.labels.iter().find(|&&c| c >= config.num_classes) {
            return Err(Error::invalid(format!("source `{}` has label {bad}", s.name)));
        }
    }
    if target.rows() < 2 {
        return Err(Error::InsufficientData("target has fewer than two rows".into()));
    }
    let mut model = AdaptModel::new(input, sources.len(), config)?;
    let seed = config.sgd.seed;
    let mut source_cyclers: Vec<Cycler> = sources
        .iter()
        .enumerate()
        .map(|(k, s)| Cycler::new(s.len(), seed.wrapping_add(1 + k as u64)))
        .collect();
    let mut target_cycler = Cycler::new(target.rows(), seed.wrapping_add(1_000));
    let largest = sources.iter().map(LabeledDomain::len).max().expect("nonempty");
    let batch = config.sgd.batch_size;
    let steps = config.sgd.epochs * largest.div_ceil(batch);
    let bandwidths = Bandwidths::Heuristic(config.bandwidth_scales.clone());

    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let domain_batch = DomainBatch {
            sources: sources
                .iter()
                .zip(source_cyclers.iter_mut())
                .map(|(s, c)| {
                    let idx = c.take(batch.min(s.len()));
                    (gather(&s.features, &idx), idx.iter().map(|&i| s.labels[i]).collect())
                })
                .collect(),
            target: gather(target, &target_cycler.take(batch.min(target.rows()))),
        };
        let mut params = std::mem::take(&mut model.params);
        let report = {
            let (p, g) = params.split_mut();
            model.accumulate(p, g, &domain_batch, &bandwidths, &config.weights)
        };
        model.params = params;
        let report = report?;
        if !report.total.is_finite() {
            return Err(Error::Diverged {
                stage: "adaptation",
                unit: "step",
                index: step,
            });
        }
        match sgd_step(&mut model.params, &config.sgd) {
            Ok(()) => {}
            Err(Error::NonFiniteGradient { .. }) => {
                return Err(Error::Diverged {
                    stage: "adaptation",
                    unit: "step",
                    index: step,
                })
            }
            Err(e) => return Err(e),
        }
        if step % 100 == 0 {
            debug!("step {step}: total {:.5}", report.total);
        }
        curve.push(report);
    }
    let target_accuracy = target_labels.map(|y| model.accuracy(target, y)).transpose()?;
    Ok(AdaptOutcome {
        model,
        curve,
        target_accuracy,
    })
}

/// Target accuracy under the three training regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingAccuracies {
    /// One adaptation run per source on its own.
    pub single: Vec<f64>,
    /// All sources pooled into one domain.
    pub combined: f64,
    /// One branch per source.
    pub multi_source: f64,
}

impl SettingAccuracies {
    pub fn single_mean(&self) -> f64 {
        self.single.iter().sum::<f64>() / self.single.len() as f64
    }
}

/// Runs single-source, source-combined and multi-source adaptation with the
/// same configuration and seed.
pub fn compare_settings(
    sources: &[LabeledDomain],
    target: &LabeledDomain,
    config: &AdaptConfig,
) -> Result<SettingAccuracies> {
    let run = |domains: &[LabeledDomain]| -> Result<f64> {
        let out = train_multisource(domains, &target.features, Some(&target.labels), config)?;
        Ok(out.target_accuracy.expect("labels supplied"))
    };
    let single = sources
        .iter()
        .map(|s| run(std::slice::from_ref(s)))
        .collect::<Result<Vec<_>>>()?;
    let combined = run(&[LabeledDomain::pooled("combined", sources)?])?;
    let multi_source = run(sources)?;
    Ok(SettingAccuracies {
        single,
        combined,
        multi_source,
    })
}
