//! Tabular reinforcement-learning laboratory for studying train/test shifts in
//! the transition function of small grid games.
//!
//! The crate builds exact finite MDPs for PacMan, Pong and Breakout style
//! grids ([`games`], [`mdp`]), derives Gaussian-perturbed variants of their
//! transition tables ([`noise`]), trains tabular Q-learning / SARSA agent
//! populations on them ([`agents`], [`harness`]) and compares the resulting
//! reward curves and exploration patterns ([`analysis`]).

pub mod agents;
pub mod analysis;
pub mod bitset;
pub mod cli;
pub mod config;
pub mod games;
pub mod harness;
pub mod mdp;
pub mod noise;
pub mod seed;

pub use agents::{AgentConfig, Algorithm, Exploration, QTable};
pub use bitset::PairSet;
pub use games::{Action, Configuration, ElementPolicy, GameKind, GameSpec, LayoutSpec, Status};
pub use harness::{EnvDescriptor, ExperimentSpec, Protocol, RunResult};
pub use mdp::{Mdp, RewardSpec, StateIndex, TransitionTable};
pub use noise::{DeltaEnvironment, NoiseSpec};
