pub mod error;
pub mod lti;
mod optim;
pub mod lqr;
pub mod plant;
pub mod sim;
pub mod sysid;
pub mod uncertainty;
pub mod cli;

pub use error::{Error, Result};
