//! Sliced backhaul simulator where an online SARSA agent allocates link
//! resource blocks and its own training traffic competes with user data.
//!
//! The crate is layered bottom-up:
//!
//! - [`traffic`]: per-user packet generation (constant bitrate and on-off).
//! - [`env`]: slice buffers, resource allocation, delay utility and the
//!   agent's state encoding.
//! - [`nn`]: the small feed-forward action-value network with Adam.
//! - [`agent`]: SARSA learner, softmax exploration and the replay memory.
//! - [`scheduler`]: the exploitation/update episode split, channel
//!   accounting and the constant, adaptive and ideal strategies.
//! - [`config`] and [`harness`]: experiment configuration, multi-seed runs,
//!   CSV records and percentile aggregation.

pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod link;
pub mod nn;
pub mod scheduler;
pub mod traffic;
pub mod validate;

pub use error::{Error, Result};
pub use link::LinkParams;
