//! Laser-wall space layout planning: a deterministic grid simulator framed
//! as a Markov decision process, plus a PPO trainer for it.

pub mod grid;
pub mod laser;
pub mod scenario;
pub mod palette;
pub mod env;
pub mod multi;
pub mod nn;
pub mod ppo;
pub mod render;
pub mod serve;
