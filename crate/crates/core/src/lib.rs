pub mod approx;
pub mod error;
pub mod exact_series;
pub mod inversion;
pub mod linalg;
pub mod oracle;
pub mod quadrature;
pub mod ratio;
pub mod reduction;
pub mod result;
pub mod select;
pub mod special;
pub mod transforms;

pub use error::{Error, Result};
pub use reduction::{EffectiveForm, FormClass, RawComplexForm, RawForm, ReducedForm};
pub use result::{BoundKind, Method, MethodResult};
