pub mod aliasing;
pub mod bench;
pub mod cli;
pub mod decay;
pub mod error;
pub mod gridize;
pub mod io;
pub mod kriging;
pub mod models;
pub mod quadrature;
pub mod simulate;
pub mod special;
pub mod spline_spectral;

pub use error::{Error, Result};
