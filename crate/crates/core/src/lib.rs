pub mod audit;
pub mod coeffs;
pub mod error;
pub mod field;
pub mod fracalc;
pub mod geometry;
pub mod hodge;
pub mod lab;
pub mod linalg;
pub mod maximal;
pub mod measure;
pub mod pde_solver;
pub mod resolvent;
pub mod setf_sawtooth;
pub mod squares;

pub use coeffs::{builtin_families, make_coefficients, Blocks, CoefficientField, Family};
pub use error::LabError;
pub use field::{Field2, InteriorField, LayerStack};
pub use geometry::{Grid, ParabolicCube, Point2, Point3};
pub use hodge::{Side, Torus};
pub use lab::{run_lab, BoundaryLab, LabConfig};
