//! Stair-climbing reinforcement learning for a planar wheeled biped.
#![allow(
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::neg_cmp_op_on_partial_ord
)]

pub mod config;
pub mod harness;
pub mod net;
pub mod ppo;
pub mod sim;
pub mod task;
pub mod terrain;
pub mod util;
