//! Storage, validation sandbox, provider access, parallel workers, campaigns
//! and site export around the `skillforge-core` library model.

pub mod campaign;
pub mod catalog;
pub mod config;
pub mod export;
pub mod fsutil;
pub mod harness;
pub mod layout;
pub mod package;
pub mod pipeline;
pub mod provider;
pub mod store;
pub mod workers;
