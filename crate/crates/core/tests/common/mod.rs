#![allow(dead_code)]

pub mod fit;
pub mod fixtures;
pub mod gradcheck;
pub mod oracles;
