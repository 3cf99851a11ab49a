pub mod branches;
pub mod error;
pub mod family;
pub mod point;
pub mod quadrature;
pub mod roots;
pub mod stats;
pub mod symbolic;
pub mod scaling;
pub mod metric;
pub mod geometry;
pub mod dimension;
pub mod cli;
