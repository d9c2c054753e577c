//! Self-expressive subspace clustering with autoencoder embeddings, plus the
//! closed-form optima and degeneracy checks used to diagnose it.

mod error;

pub mod autoenc;
pub mod cluster;
pub mod numlin;
pub mod oracles;
pub mod sedsc;
pub mod selfexpress;
pub mod synthdata;

pub use error::{Error, ErrorClass, Result};
