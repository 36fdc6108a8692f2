//! Tensor-train tools for data-driven approximation of Koopman and transfer
//! operator spectra.

pub mod amuset;
pub mod basis;
pub mod dynamics;
pub mod data;
mod error;
pub mod hocur;
pub mod linalg;
pub mod tensor;
pub mod tt;

pub use error::{Error, Result};
pub use faer::c64;
pub use tensor::{multi_to_single, single_to_multi, subspace_distance, DenseTensor, MultiIndex, OrthonormalBasis};
pub use tt::{global_svd, left_orthonormalize, tt_entry, tt_from_dense, tt_to_dense, GlobalSvd, TensorTrain};
pub use basis::{BasisDimension, BasisFunction, BasisSpec, StreamedBuild};
pub use data::Snapshots;
pub use hocur::{hocur_transform, maxvol, HocurConfig, IndexSet};
pub use amuset::{
    amuse_dense, amuset_cca, amuset_edmd, cca_dense, implied_timescales, CcaOptions, EdmdOptions, Method,
    SpectralKind, SpectralResult, Timescale, TrajectoryPair,
};
