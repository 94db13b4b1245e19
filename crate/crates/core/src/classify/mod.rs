//! Classification of evolutionary singularities by reachability.

mod dim1;
mod dimd;
mod scale;

pub use dim1::{classify_dim1, classify_dim1_with, Dim1Case, Dim1Options, Dim1Verdict};
pub use dimd::{classify_dimd, DimDCase, DimDVerdict, ENVELOPE_DELTA};
pub use scale::{scale_functions, EndpointFit, Finiteness, ScaleVerdicts, INCONCLUSIVE_BAND};
