//! Front end for training, sampling and evaluating adversarial belief
//! networks from `key = value` configuration files.

pub mod commands;
pub mod config;
pub mod pgm;
