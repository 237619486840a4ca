//! Traffic abstraction, scheduler synthesis and closed-loop simulation for
//! periodic event-triggered control (PETC) loops sharing one network.
//!
//! Pipeline: [`lti`] builds the hold-transition and triggering tables,
//! [`regions`] turns them into quotient states, [`sdp`] decides the quotient
//! transitions, [`traffic`] assembles the per-loop timed game, [`game`]
//! composes loops with the network, [`synth`] solves the safety game and
//! [`sim`] replays the synthesized scheduler on the continuous plants.

pub mod config;
pub mod error;
pub mod game;
pub mod lti;
pub mod pipeline;
pub mod regions;
pub mod sdp;
pub mod sim;
pub mod synth;
pub mod traffic;
pub mod uppaal;

pub use error::{Error, Result};
