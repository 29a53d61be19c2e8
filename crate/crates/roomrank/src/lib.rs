//! File formats, parallel corpus scans and the `roomrank` command line on
//! top of `roomrank-core`.

pub mod cli;
pub mod corpus;
pub mod files;
pub mod report;
pub mod scan;
pub mod training;
pub mod wav;
