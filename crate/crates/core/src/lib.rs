//! Win, loss and draw probabilities for two-player bond-percolation games on
//! edge-weighted Galton-Watson trees.
//!
//! * [`offspring`]: offspring laws, their pgfs and samplers.
//! * [`fixpoint`]: the matrix operator, monotone iteration and fixed-point search.
//! * [`criteria`]: closed-form tests for zero draws and finite duration.
//! * [`oracle`]: exact game solving on sampled trees for Monte-Carlo checks.
//! * [`cli`]: command-line front end.
//!
//! ```
//! use percgame::fixpoint::{solve, EdgeWeightLaw, GameSpec, SolveOptions};
//! use percgame::offspring::OffspringDistribution;
//!
//! let spec = GameSpec::new(
//!     3,
//!     OffspringDistribution::dirac(2).unwrap(),
//!     EdgeWeightLaw::from_p0_p1(0.9, 0.05).unwrap(),
//! )
//! .unwrap();
//! let r = solve(&spec, &SolveOptions::default()).unwrap();
//! assert!((r.d.get(0, 0) - 0.985522).abs() < 1e-5);
//! ```

pub mod cli;
pub mod criteria;
pub mod error;
pub mod fixpoint;
pub mod offspring;
pub mod oracle;

pub use error::{Error, Result};
