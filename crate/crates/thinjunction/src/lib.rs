//! Matched asymptotic expansions for the Poisson equation in a thin domain
//! made of three cylinders joined through a small box-shaped junction.

pub mod assembler;
pub mod bessel;
pub mod cheb;
pub mod commands;
pub mod config;
pub mod corrector;
pub mod cutoff;
pub mod disk;
pub mod fem;
pub mod graph;
pub mod jet;
pub mod junction;
pub mod layer;
pub mod mesh;
pub mod poly;
pub mod quad;
pub mod reference;
pub mod sparse;
pub mod spectrum;
pub mod study;
pub mod vtk;
