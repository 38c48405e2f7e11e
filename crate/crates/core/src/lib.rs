pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod model;
pub mod noether;
pub mod ops;
pub mod verify;
