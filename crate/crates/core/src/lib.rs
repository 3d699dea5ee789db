//! Hierarchical AND-OR templates for photographs.
//!
//! Object templates are learned from annotated windows by information
//! projection and EM-type block pursuit; scene templates are learned by the
//! same pursuit over object-template responses. Learned templates score new
//! images, expose their parse trees and drive rule-based guidance.

pub mod error;
pub mod features;
pub mod guidance;
pub mod inference;
pub mod infoproj;
pub mod model;
pub mod pipeline;
pub mod pursuit;
pub mod render;
pub mod scene;
pub mod serial;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
