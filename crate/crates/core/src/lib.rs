//! Momentum-modified optimizers and the accelerated-SGD view that unifies them.
//!
//! The crate is organised around a single general update,
//!
//! ```text
//! m_t     = beta_t * m_{t-1} + g_t
//! w_{t+1} = w_t - eta_t * m_t - alpha_t * g_t
//! ```
//!
//! and a collection of optimizers (Schedule-Free SGD/AdamW, Lion, MARS-Approx,
//! AdEMAMix, Simplified-AdEMAMix, Adam with accelerated momentum and weight
//! averaging, plus several accelerated SGD methods from the optimization
//! literature) that either instantiate it exactly or wrap it in a
//! preconditioner.
//!
//! - [`problems`]: gradient oracles with analytic gradients.
//! - [`schedules`]: learning-rate, momentum, alpha and averaging coefficients.
//! - [`optimizers`]: every step rule behind one stepping interface.
//! - [`equivalence`]: coefficient mappings and trajectory comparison.
//! - [`harness`]: seeded runs, sweeps, batch-size studies and CSV persistence.
//! - [`config`]: the key-value configuration format shared by the CLI.
//! - [`plot`]: deterministic SVG loss curves.

pub mod config;
pub mod equivalence;
pub mod error;
pub mod harness;
pub mod optimizers;
pub mod plot;
pub mod problems;
pub mod rng;
pub mod schedules;
pub mod vector;

pub use error::{Error, Result};
pub use vector::ParamVector;
