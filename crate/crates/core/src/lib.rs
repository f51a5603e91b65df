pub mod bench;
pub mod cli;
pub mod decoder;
pub mod error;
pub mod fusion;
pub mod image;
pub mod numerics;
pub mod pipeline;
pub mod seqtok;
pub mod textenc;
pub mod visenc;

pub use error::{Error, Result};
