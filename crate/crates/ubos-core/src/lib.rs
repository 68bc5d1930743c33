pub mod circuit;
pub mod dense;
pub mod effective;
pub mod engine;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod optimize;
pub mod pauli;
pub mod rng;
pub mod state;
