//! Latent-vector clustering: k-means++ with Lloyd iterations, nearest-centroid
//! classification and greedy centroid pruning with adaptation.

mod centroids;
mod kmeans;
mod prune;
mod vectors;

pub use centroids::{classify_nearest, Centroid, CentroidSet};
pub use kmeans::{
    kmeans_fit, kmeans_objective, kmeans_plus_plus, lloyd, KMeansFit, LloydOutcome, MAX_LLOYD_ITERATIONS,
};
pub use prune::{prune_adapt, AdaptedCentroid, PruneStep, PruneTrace};
pub use vectors::{
    common_dimension, feature_matrix, group_by_origin, labeled_from_reader, read_labeled_csv, write_labeled_csv,
    LatentVector,
};
