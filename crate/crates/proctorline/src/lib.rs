//! File formats, parallel drivers and the command-line tool around
//! [`proctorline_core`].

pub mod canonical;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod evalset;
pub mod evidence;
pub mod modelfile;
pub mod netpbm;
pub mod parallel;
pub mod pcm;
pub mod sessionlog;

pub use proctorline_core as core;
