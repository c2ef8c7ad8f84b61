extern crate openblas_src;

pub mod algebra;
pub mod bianchi;
pub mod cli;
pub mod geometry;
pub mod numerics;
pub mod roots;
