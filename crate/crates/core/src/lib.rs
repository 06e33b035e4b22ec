pub mod env;
pub mod qlearn;
pub mod rng;
pub mod anyplay;
pub mod xplay;
