//! Library surface of the pipeline CLI, exposed so integration tests can
//! drive the stages in-process.

pub mod pipeline;
