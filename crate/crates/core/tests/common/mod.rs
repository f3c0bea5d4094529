#![allow(dead_code)]

pub mod codec;
pub mod gen;
pub mod pdb;
