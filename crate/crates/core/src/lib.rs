pub mod certification;
pub mod configurations;
pub mod construction;
mod error;
pub mod state_io;
pub mod witness_search;
pub mod tensor;

pub use error::{CoreError, Result};
