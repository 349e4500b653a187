//! Data handling, experiments and the command-line front end for multi-view
//! metric learning.

pub mod baseline;
pub mod cli;
pub mod cv;
pub mod dataset;
pub mod experiment;
pub mod method;
pub mod plot;
pub mod toy;
