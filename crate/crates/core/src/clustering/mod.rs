//! k-means on the embedding, silhouette statistics, and the SSD-curve
//! inflection estimator used as a baseline for the cluster count.

mod elbow;
mod kmeans;
mod metrics;
mod silhouette;

pub use elbow::{inflection_k, ssd_sweep, sweep_subsample, InflectionMode, SsdCurve, DEFAULT_K_MAX, DEFAULT_SSD_SUBSAMPLE, DEFAULT_TOLERANCE};
pub use kmeans::{assign_nearest, kmeans, ClusterResult, KMeansOptions};
pub use metrics::adjusted_rand_index;
pub use silhouette::{silhouette, silhouette_values, SilhouetteStats, DEFAULT_SILHOUETTE_SUBSAMPLE};
