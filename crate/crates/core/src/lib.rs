//! Neural displacement solver for small-strain J2 elastoplasticity.
//!
//! A multilayer perceptron maps reference coordinates to nodal
//! displacements; finite element gradient operators turn those into
//! element strains; a radial-return update gives the plastic state; and
//! L-BFGS minimizes the incremental free energy one load step at a time.

pub mod bc;
pub mod cli;
pub mod energy;
pub mod error;
pub mod material;
pub mod mesh;
pub mod network;
pub mod optim;
pub mod oracle;
pub mod post;
pub mod scalar;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SymTensorF64 = tensor::SymTensor2<f64>;
pub type MaterialF64 = material::Material<f64>;
pub type PlasticStateF64 = material::PlasticState<f64>;
pub type MeshF64 = mesh::Mesh<f64>;
pub type NetworkF64 = network::Network<f64>;
pub type EnergyWorkspaceF64 = energy::EnergyWorkspace<f64>;
pub type LbfgsF64 = optim::Lbfgs<f64>;
pub type ProblemF64 = solver::Problem<f64>;
pub type SolverF64 = solver::Solver<f64>;
pub type StepRecordF64 = solver::StepRecord<f64>;
