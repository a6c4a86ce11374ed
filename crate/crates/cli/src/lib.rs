//! Fixture and report models of the `whitney` batch front end, exposed for
//! integration tests.

pub mod fixture;
pub mod report;
