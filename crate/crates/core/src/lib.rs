pub mod geometry;
pub mod grid;
pub mod rng;
pub mod oracle;
pub mod jump;
pub mod walk;
pub mod stats;
pub mod estimates;
pub mod dla;
pub mod config;
pub mod store;
pub mod runner;
