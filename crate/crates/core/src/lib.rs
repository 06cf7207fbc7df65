//! Distillation train synthesis as a tree-structured reinforcement
//! learning task: an environment that grows a tree of distillation
//! columns over a multicomponent feed, an internal equilibrium-stage
//! column simulator with an economic reward, and a soft actor-critic
//! agent adapted to the two-branch decision structure.

pub mod agent;
pub mod cli;
pub mod column;
pub mod economics;
pub mod env;
pub mod flowsheet;
pub mod nn;
pub mod thermo;

pub use column::{solve_column, ColumnResult, ColumnSpec};
pub use env::{DistillEnv, Observation, ProblemSpec, StepOutcome, TreeEnv};
pub use thermo::{Component, Stream};
