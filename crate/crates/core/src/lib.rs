//! Resolution-invariant clustering of functional data.
//!
//! Each observation is a set of `(coordinate, value)` pairs. A set encoder
//! with a mean over points feeds a hypernetwork that predicts the weights of a
//! small SIREN fitting the observation; those weight vectors are then
//! clustered with ordinary algorithms. Because the encoder averages over
//! points, the predicted weights barely move when the same function is
//! sampled on a different grid.
//!
//! ```
//! use hypercluster::{init_hypernet, HyperConfig, PointSet, SirenSpec};
//!
//! let spec = SirenSpec::new(1, 1, 4, 5).unwrap();
//! let net = init_hypernet::<f32>(spec, HyperConfig::default(), 0).unwrap();
//! let coords = vec![0.0, 0.5, 1.0];
//! let ps = PointSet::new("s", None, 1, 1, coords, vec![0.0, 1.0, 0.0]).unwrap();
//! let w = net.predict_weights(&ps).unwrap();
//! assert_eq!(w.flat.len(), spec.param_count());
//! ```

pub mod cluster;
pub mod encoder;
pub mod error;
pub mod hypernet;
pub mod metrics;
pub mod ndiff;
pub mod pointset;
pub mod scalar;
pub mod siren;
pub mod trainer;

pub use cluster::{gmm_fit, kmeans, pca2, Algorithm, GmmModel, Partition};
pub use encoder::EncoderConfig;
pub use error::{Error, Result};
pub use hypernet::{embed_dataset, init_hypernet, HyperConfig, HyperNet};
pub use metrics::{ami, ari, Contingency};
pub use pointset::{Dataset, PointSet, ResolutionSet};
pub use scalar::Scalar;
pub use siren::{param_count, SirenSpec, SirenWeights};
pub use trainer::{load_checkpoint, save_checkpoint, train, TrainConfig};

pub type Tensor32 = ndiff::Tensor<f32>;
pub type Tensor64 = ndiff::Tensor<f64>;
pub type HyperNet32 = HyperNet<f32>;
pub type HyperNet64 = HyperNet<f64>;
pub type SirenWeights32 = SirenWeights<f32>;
pub type SirenWeights64 = SirenWeights<f64>;
