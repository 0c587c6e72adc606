#![allow(clippy::needless_range_loop)]

pub mod fd_oracle;
pub mod graphs;
