pub mod analysis;
pub mod config;
pub mod element;
pub mod error;
pub mod exec;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod optimizer;
pub mod quadrature;
pub mod sensitivity;
pub mod smoothing;
pub mod stokes;
