//! Graphs, linear and GCN node classifiers, surrogate-gradient targeted
//! attacks and the universal anchor-node defense.

pub mod attack;
pub mod defense;
pub mod error;
pub mod graph;
pub mod models;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
