//! Client-side subcommands of the `ami` executable, kept in a library so they
//! can be driven from tests.

pub mod chat;
pub mod simulate;
