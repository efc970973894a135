//! Dense complex linear algebra shared by every solver.

pub mod cgls;
pub mod linear_map;
pub mod matrix;
pub mod qr;
pub mod row_dft;
pub mod subspace;
pub mod svd;

pub use cgls::{cgls_solve, CglsResult};
pub use linear_map::{
    adjoint_mismatch, materialize, operator_norm, DenseMap, IdentityMap, LinearMap, OpRef,
};
pub use matrix::{ComplexMatrix, C64};
pub use qr::{householder_qr, qr_orthonormalize, ThinQr};
pub use row_dft::{row_dft, row_idft};
pub use subspace::{soft_threshold, soft_threshold_scalar, subspace_distance};
pub use svd::{full_svd, spectral_norm, truncated_svd, TruncatedSvd};
