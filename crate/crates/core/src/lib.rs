//! Synthesis and verification of discrete-time control barrier functions
//! for polynomial control-affine systems via sum-of-squares programming.

pub mod cli;
pub mod poly;
pub mod sdp;
pub mod sosir;
pub mod synth;
pub mod verify;
