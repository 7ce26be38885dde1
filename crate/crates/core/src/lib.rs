pub mod analysis;
pub mod api;
pub mod clock;
pub mod config;
pub mod fixtures;
pub mod connectors;
pub mod index;
pub mod ledger;
pub mod normalize;
pub mod oracles;
pub mod orchestrator;
pub mod platform;
pub mod raw_store;
pub mod seeds;
pub mod stats;
