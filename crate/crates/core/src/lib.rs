pub mod cli;
pub mod consistency;
pub mod density;
pub mod error;
pub mod io;
pub mod jobs;
pub mod nn;
pub mod perturb;
pub mod rng;
pub mod synthseg;
pub mod tensor;
pub mod toy2d;

pub use error::{Error, Result};
pub use tensor::Tensor;
