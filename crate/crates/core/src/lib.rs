//! Multi-agent online planning on a grid world.
//!
//! A Monte Carlo tree search over joint actions whose expansion is pruned to
//! a few candidates drawn by iterated conditional resampling from a graph
//! convolutional policy network, trained by self-play on visit counts and
//! returns.

pub mod env;
pub mod experiment;
pub mod model;
pub mod numcore;
pub mod obsgraph;
pub mod pruner;
pub mod replay;
pub mod scenario;
pub mod search;
pub mod trainer;
