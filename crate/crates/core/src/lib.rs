//! Time-periodic solutions of the two-dimensional free-surface Euler
//! equations and their harmonic Floquet stability.
//!
//! The solver pipeline is: evaluate the Dirichlet–Neumann operator by a
//! boundary integral method ([`dno`]), evolve the surface equations and
//! their linearization ([`dynamics`], [`timestep`]), find periodic orbits
//! by overdetermined shooting ([`shooting`]), assemble and diagonalize the
//! monodromy operator ([`floquet`]), and track multipliers across a
//! family ([`matching`]).
//!
//! All numerical kernels are generic over [`Real`]; the `f64` aliases at
//! the crate root are what the command-line driver uses.

pub mod dno;
pub mod dynamics;
pub mod error;
pub mod floquet;
pub mod linalg;
pub mod matching;
pub mod num;
pub mod shooting;
pub mod spectral;
pub mod timestep;

pub use error::{Error, Result};
pub use num::Real;

pub type MeshMap = spectral::MeshMap<f64>;
pub type MeshSchedule = spectral::MeshSchedule<f64>;
pub type Segment = spectral::Segment<f64>;
pub type Fourier = spectral::Fourier<f64>;
pub type Depth = dno::Depth<f64>;
pub type SurfaceGeometry = dno::SurfaceGeometry<f64>;
pub type PhysParams = dynamics::PhysParams<f64>;
pub type SurfaceState = dynamics::SurfaceState<f64>;
pub type Trajectory = timestep::Trajectory<f64>;
pub type ParamVector = shooting::ParamVector<f64>;
pub type ShootingResult = shooting::ShootingResult<f64>;
pub type MonodromyBlock = floquet::MonodromyBlock<f64>;

pub type MeshMap32 = spectral::MeshMap<f32>;
pub type PhysParams32 = dynamics::PhysParams<f32>;
pub type SurfaceState32 = dynamics::SurfaceState<f32>;
