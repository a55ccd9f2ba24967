//! Comparison methods: principal components, random projections with
//! Lasso, model-based CoSaMP and direct Haar-domain adaptive sensing.

pub mod cosamp;
pub mod haar;
pub mod lasso;
pub mod pca;

pub use cosamp::{model_cosamp, CosampFit, CosampOptions};
pub use haar::{haar2d_forward, haar2d_inverse, wavelet_sense, HaarQuadtree, WaveletSensing};
pub use lasso::{lambda_max, lasso, lasso_reconstruct, LassoFit, LassoOptions, RandomProjectionEnsemble};
pub use pca::{pca_fit, pca_reconstruct, PcaModel, PcaReconstruction};
