#![allow(dead_code)]

pub mod closure_oracle;
pub mod criteria;
pub mod fixtures;
pub mod oracles;
pub mod toy_kb;
