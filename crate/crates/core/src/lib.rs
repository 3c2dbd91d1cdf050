//! Dynamic, frame-coherent EM ray tracing for mmWave channels.

pub mod bvh;
pub mod em;
pub mod geometry;
pub mod scene;
pub mod sim;
pub mod tracer;
