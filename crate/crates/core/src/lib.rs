pub mod channel;
pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod precoding;
pub mod air;
pub mod evaluation;
pub mod selector;
pub mod experiments;
