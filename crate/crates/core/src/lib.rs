//! Middleware node runtime with hot-pluggable network functions
//! (redirection, compression tunnel) and an autonomic manager that deploys
//! them when application round-trip times degrade.

pub mod anf;
pub mod codec;
pub mod manager;
pub mod message;
pub mod node;
