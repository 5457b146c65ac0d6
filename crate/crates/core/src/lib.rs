//! Finite-difference solver and boundary-flux optimal control for
//! multiphase Stefan-type problems.

pub mod beta;
pub mod control;
pub mod expr;
pub mod field;
pub mod grid;
pub mod quadrature;
pub mod forward;
pub mod objective;
pub mod problem;
pub mod analysis;
