//! Min-max statistics of Gaussian and Gaussian-subordinated random matrices:
//! closed-form comparison bounds, the smooth min-max surrogate behind them,
//! and Monte Carlo machinery that certifies each inequality numerically.

pub mod bounds;
pub mod chaos2;
pub mod cli;
pub mod covlab;
pub mod error;
pub mod leadlag;
pub mod montecarlo;
pub mod softminmax;

pub use error::{Error, Result};
