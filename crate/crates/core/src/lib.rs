//! Randomly perturbed gradient flows `dY = -grad F(Y) dt + eps * sigma(Y) dW` over
//! Morse landscapes with strong saddles.
//!
//! The crate covers test landscapes with known critical structure ([`landscape`]),
//! deterministic flow integration and exit-time geometry ([`flow`]), Euler–Maruyama
//! simulation with event detection ([`sde`]), linear-saddle oracles ([`saddle_analysis`]),
//! Monte Carlo scaling campaigns ([`experiments`]) and a config-driven front end ([`cli`]).
//!
//! ```
//! use saddle_escape::landscape::builtin_quadratic_saddle;
//! use saddle_escape::flow::{deterministic_exit_time, DomainSpec, ExitTime};
//!
//! let land = builtin_quadratic_saddle(&[2.0], &[2.0]).unwrap();
//! let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0);
//! match deterministic_exit_time(&land, &[0.1, 0.0], &ball, 1e-3, 20.0).unwrap() {
//!     ExitTime::Finite(t) => assert!((t - 10f64.ln() / 2.0).abs() < 1e-3),
//!     other => panic!("unexpected {other:?}"),
//! }
//! ```

pub mod cli;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod landscape;
pub mod rng;
pub mod saddle_analysis;
pub mod sde;

pub use error::{Error, Result};
