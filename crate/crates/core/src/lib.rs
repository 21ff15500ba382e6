//! Query-waiting policies that maximize the mean binary freshness of a
//! remotely monitored continuous-time Markov chain.
//!
//! The monitor queries the chain, the query travels for a random time `Y`,
//! the reply travels back for a random time `D`, and after each reply the
//! monitor idles for `W(i, d)` before the next query, where `i` is the
//! reported state and `d` its age on arrival. This crate evaluates the
//! resulting freshness analytically and by simulation, and synthesizes the
//! waiting functions that maximize it.

pub mod ctmc;
pub mod delay;
pub mod estimator;
pub mod experiments;
pub mod freshness;
pub mod numeric;
pub mod policy;
pub mod sim;
pub mod smdp;
pub mod waiting;
