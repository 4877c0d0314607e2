//! Task-based synthesis of minimal-DoF serial manipulators and their mapping
//! onto a modular H/L joint library.
//!
//! The pipeline: [`synthesis`] runs a binary search over candidate DoF, each
//! probe solving a collision-constrained DH-parameter fit ([`solver`]) built
//! on [`kinematics`] and [`geometry`]; [`modlib`] turns the winning table
//! into a modular composition; [`planner`] checks motion between the task
//! locations; [`io`] handles scenario files, result bundles and URDF.

pub mod error;
mod float_serde;
pub mod geometry;
pub mod io;
pub mod kinematics;
pub mod modlib;
pub mod planner;
pub mod solver;
pub mod synthesis;

pub use error::{Error, Result};
