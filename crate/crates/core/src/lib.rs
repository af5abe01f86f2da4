//! Core model of the skillforge engine.
//!
//! Everything here is allocation-only and free of IO: the domain tree, the
//! registry state machine, skill contracts, stage schemas and prompts, the
//! novelty ladder, path ownership and timing summaries. The `skillforge` crate
//! adds storage, processes, providers and the CLI on top.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod contract;
pub mod digest;
pub mod library;
pub mod novelty;
pub mod ownership;
pub mod path;
pub mod priority;
pub mod registry;
pub mod stage;
pub mod taxonomy;
pub mod timing;
pub mod tree;

pub use library::{Library, LibraryError};
pub use path::NodePath;
pub use registry::Registry;
pub use tree::DomainTree;
