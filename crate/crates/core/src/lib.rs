pub mod covering;
pub mod obstruction;
pub mod operator_sim;
pub mod rational;
pub mod sequences;
pub mod cli;

pub use rational::Q;
