pub mod bounds;
pub mod carrier;
pub mod chain;
pub mod distance;
pub mod error;
pub mod experiment;
pub mod fitting;
pub mod models;
pub mod process;
pub mod stats;
