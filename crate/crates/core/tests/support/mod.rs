#![allow(dead_code)]

pub mod graphs;
pub mod retrieval;
pub mod scenarios;
