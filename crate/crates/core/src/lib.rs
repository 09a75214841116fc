//! Executable specifications and testing tools for a TCP swap server.
//!
//! The crate is organized bottom-up:
//!
//! - [`itree`]: interaction trees, trace semantics, bounded equivalence.
//! - [`swap_spec`]: the one-client-at-a-time specification of the server.
//! - [`impl_model`]: a buffer-level model of the event-driven server loop.
//! - [`network_model`]: the byte-level network and the reordering relation.
//! - [`refinement`]: trace membership and bounded network refinement.
//! - [`server`]: the real nonblocking TCP server, with injectable mutants.
//! - [`tester`]: randomized client scenarios, shrinking, mutation campaigns.
//! - [`trace_file`] and [`cli`]: the on-disk trace format and commands.

pub mod cli;
pub mod fixtures;
pub mod impl_model;
pub mod itree;
pub mod network_model;
pub mod refinement;
pub mod server;
pub mod swap_spec;
pub mod tester;
pub mod trace_file;
