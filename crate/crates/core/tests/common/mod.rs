//! Shared support for the integration tests: independent oracles, planted
//! fixtures, seeded instances and scripted chat models.
#![allow(dead_code)]

pub mod fixtures;
pub mod instances;
pub mod mock;
pub mod oracles;
