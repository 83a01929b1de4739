use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vectors::{common_dimension, LatentVector};
use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix, TensorFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub values: Vec<f64>,
    pub label: usize,
    pub origin: String,
}

/// Labelled centroids used as a nearest-neighbour classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    centroids: Vec<Centroid>,
}

impl CentroidSet {
    pub fn new(centroids: Vec<Centroid>) -> Result<Self> {
        let first = centroids
            .first()
            .ok_or_else(|| Error::invalid("a centroid set needs at least one centroid"))?;
        let d = first.values.len();
        if d == 0 {
            return Err(Error::shape("zero-dimensional centroids"));
        }
        if centroids.iter().any(|c| c.values.len() != d) {
            return Err(Error::shape("centroids differ in dimension"));
        }
        Ok(CentroidSet { centroids })
    }

    /// Concatenates sets, keeping their order.
    pub fn merge(sets: &[CentroidSet]) -> Result<Self> {
        Self::new(sets.iter().flat_map(|s| s.centroids.iter().cloned()).collect())
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.centroids[0].values.len()
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn get(&self, i: usize) -> &Centroid {
        &self.centroids[i]
    }

    /// Distinct labels, ascending.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels: Vec<usize> = self.centroids.iter().map(|c| c.label).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    ///
    /// # Panics
    /// If `query` does not have the centroids' dimension.
    pub fn nearest(&self, query: &[f64]) -> usize {
        assert_eq!(query.len(), self.dimension(), "query dimension mismatch");
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = squared_distance(query, &c.values);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Fraction of `vectors` whose nearest centroid carries their label.
    pub fn accuracy(&self, vectors: &[LatentVector]) -> Result<f64> {
        let d = common_dimension(vectors)?;
        if d != self.dimension() {
            return Err(Error::shape(format!(
                "vectors have dimension {d}, centroids {}",
                self.dimension()
            )));
        }
        let hits = vectors
            .iter()
            .filter(|v| classify_nearest(&v.values, self) == v.label)
            .count();
        Ok(hits as f64 / vectors.len() as f64)
    }

    /// Tensors `centroids` (L x d) and `labels` (L x 1); origins go into the
    /// metadata as a JSON list.
    pub fn to_tensor_file(&self) -> TensorFile {
        let mut file = TensorFile::default();
        file.push_meta("kind", "centroids");
        let origins: Vec<&str> = self.centroids.iter().map(|c| c.origin.as_str()).collect();
        file.push_meta("origins", serde_json::to_string(&origins).expect("strings serialise"));
        let data = self.centroids.iter().flat_map(|c| c.values.iter().copied()).collect();
        let values = Matrix::from_vec(self.len(), self.dimension(), data).expect("shape by construction");
        let labels = Matrix::column(self.centroids.iter().map(|c| c.label as f64).collect());
        file.tensors.push(("centroids".into(), values));
        file.tensors.push(("labels".into(), labels));
        file
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let values = file
            .tensor("centroids")
            .ok_or_else(|| Error::invalid("tensor file has no `centroids`"))?;
        let labels = file
            .tensor("labels")
            .ok_or_else(|| Error::invalid("tensor file has no `labels`"))?;
        if labels.shape() != (values.rows(), 1) {
            return Err(Error::shape("one label per centroid expected"));
        }
        let origins: Vec<String> = match file.meta("origins") {
            Some(raw) => serde_json::from_str(raw)?,
            None => vec![String::new(); values.rows()],
        };
        if origins.len() != values.rows() {
            return Err(Error::shape("one origin per centroid expected"));
        }
        let centroids = values
            .iter_rows()
            .zip(labels.data())
            .zip(origins)
            .map(|((row, &label), origin)| {
                if label < 0.0 || label.fract() != 0.0 {
                    return Err(Error::invalid(format!("bad centroid label {label}")));
                }
                Ok(Centroid {
                    values: row.to_vec(),
                    label: label as usize,
                    origin,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(centroids)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}

/// Label of the Euclidean-nearest centroid, lowest index on ties.
pub fn classify_nearest(query: &[f64], centroids: &CentroidSet) -> usize {
    centroids.get(centroids.nearest(query)).label
}
