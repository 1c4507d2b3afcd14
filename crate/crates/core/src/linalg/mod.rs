//! Small dense and banded linear algebra used by the solvers.

pub mod banded;
pub mod dense;
pub mod jacobi;
pub mod sparse;

pub use banded::{BandLu, BandMatrix, SymBandCholesky, SymBandMatrix};
pub use dense::{dot, norm2, DenseMatrix, Lu};
pub use jacobi::{jacobi_eigen, SymmetricEigen};
pub use sparse::Csr;
