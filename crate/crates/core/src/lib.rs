//! Gaussian-deformed Riemann Ξ functions: theta sums, Mellin quadrature,
//! multidimensional variants and checks of their functional equations.

pub mod error;
pub mod funceq;
pub mod gaussmat;
pub mod multi;
pub mod ode;
pub mod quadrature;
pub mod theta;
pub mod xi;

pub use error::{Result, XiError};
pub use num_complex::Complex64;
