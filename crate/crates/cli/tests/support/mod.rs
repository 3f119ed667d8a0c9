#![allow(dead_code)]

#[path = "../../../core/tests/support/scenarios.rs"]
pub mod scenarios;

#[path = "../../../core/tests/support/graphs.rs"]
pub mod graphs;

#[path = "../../../core/tests/support/retrieval.rs"]
pub mod retrieval;

pub mod bench;
