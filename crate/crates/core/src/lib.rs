//! Mean-field equilibria for two-sided singular control of Lévy processes.
//!
//! A representative agent keeps a Lévy process inside `[a, b]` by pushing it
//! up (control `U`) and down (control `D`), paying a running cost
//! `c(x, p) = g(x) h(p)` plus proportional costs `q_u dU + q_d dD`. The
//! population enters only through `p = E f(X^{a,b}_∞)`, the mean-field value
//! of the stationary law of the reflected process. An equilibrium is a pair
//! of barriers that is a best response to the `p` it induces.
//!
//! This crate is `no_std` (with `alloc`) and holds everything that does not
//! need threads or IO:
//!
//! - [`levy`]: model families, characteristic exponents, increment samplers.
//! - [`path`]: path simulation and the two-sided Skorokhod map.
//! - [`stationary`]: stationary laws of reflected processes, mean-field values.
//! - [`dynkin`]: the adjoint stopping game and its closed-form thresholds.
//! - [`mfg`]: best-response map and discounted equilibria.
//! - [`ergodic`]: long-run average problem and the stable closed form.
//! - [`nplayer`]: finite-population bounds.
//!
//! Monte Carlo kernels here work on one path at a time and feed mergeable
//! accumulators from [`stats`]; the `levy-mfg` crate fans them out over
//! seeded worker streams.

#![no_std]

extern crate alloc;

pub mod cost;
pub mod dynkin;
pub mod ergodic;
mod error;
pub mod levy;
pub mod math;
pub mod mfg;
pub mod nplayer;
pub mod path;
pub mod stationary;
pub mod stats;

pub use cost::{CostSpec, GFunction, HFunction, MeanFieldFn};
pub use dynkin::{DynkinSolution, GameSpec, ThresholdConstants};
pub use error::{Error, Result};
pub use levy::{LevyModel, RootQuadratic};
pub use mfg::{Conventions, EquilibriumResult, EquilibriumStatus, SolverMethod, ThresholdOrientation};
pub use path::{Barriers, ReflectedPath, SamplePath};
pub use stationary::{MeanFieldLaw, MeanFieldValue, StationaryLaw};
pub use stationary::LossRate;
pub use ergodic::{ErgodicEquilibrium, RegenerativeEstimate};
pub use nplayer::{GapMode, HoeffdingExponent};
