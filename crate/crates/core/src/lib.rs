pub mod diffcore;
pub mod harness;
pub mod nn;
pub mod losses;
pub mod realness;
pub mod synthetic;
pub mod theory;
