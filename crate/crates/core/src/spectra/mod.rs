//! Scalar laws and the operator-valued Cauchy transforms of single
//! summands `b ⊗ x`.

mod leaf;
mod measure;
pub mod quadrature;

pub use leaf::{LeafMethod, OpVarLeaf};
pub use measure::{SpectralMeasure, Tabulated};
pub use quadrature::QuadOptions;
