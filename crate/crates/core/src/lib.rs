//! Bandit-learning schedulers for a single server with many queues.
//!
//! The crate is `no_std` with `alloc`. It holds the EXP3.S+ learner
//! ([`mab`]), arrival and service generators with the capacity LP ([`env`]),
//! the scheduling policies ([`sched`]), the simulation loop ([`sim`]) and
//! sample-path checkers with brute-force oracles ([`verify`]).

#![no_std]
// NaN must fail range checks, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod env;
pub mod mab;
pub mod rng;
pub mod sched;
pub mod sim;
pub mod verify;

pub use env::{Environment, EnvironmentSpec, Process, RatePair, ReferencePolicy};
pub use mab::{LearnerState, MixedAction, StepParams};
pub use sched::{Policy, PolicyDescriptor, PolicyKind, QueueVector};
pub use sim::{run_once, PolicyResult, RecordOptions, RunRecord};
pub use verify::CheckReport;
