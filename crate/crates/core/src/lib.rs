//! Numerical model of a multimode-waveguide optical PUF.
//!
//! LP modes of a step-index fiber ([`modes`]) carry a random coupled-mode
//! device ([`device`]) to a speckle image, hashed into 256-bit keys
//! ([`keys`]) whose randomness is measured in [`analysis`]. The same device
//! inside a feedback cavity acts as a reservoir computer ([`reservoir`]).
//! [`pipeline`] ties these into reproducible runs driven by a JSON
//! [`config`].
//!
//! Physics types are generic over the scalar; the aliases below fix it to
//! `f64` (default) or `f32`.

pub mod analysis;
pub mod config;
pub mod device;
pub mod error;
pub mod io;
pub mod keys;
pub mod modes;
pub mod pipeline;
pub mod reservoir;
pub mod rng;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::{Complex, Real};

pub type FiberSpec = modes::FiberSpec<f64>;
pub type Grid = modes::Grid<f64>;
pub type ModeBasis = modes::ModeBasis<f64>;
pub type ModeFamily = modes::ModeFamily<f64>;
pub type DeviceParams = device::DeviceParams<f64>;
pub type PufDevice = device::PufDevice<f64>;
pub type Challenge = device::Challenge<f64>;
pub type SpeckleImage = device::SpeckleImage<f64>;
pub type Reservoir = reservoir::Reservoir<f64>;

pub type FiberSpecF32 = modes::FiberSpec<f32>;
pub type GridF32 = modes::Grid<f32>;
pub type ModeBasisF32 = modes::ModeBasis<f32>;
pub type ModeFamilyF32 = modes::ModeFamily<f32>;
pub type DeviceParamsF32 = device::DeviceParams<f32>;
pub type PufDeviceF32 = device::PufDevice<f32>;
pub type ChallengeF32 = device::Challenge<f32>;
pub type SpeckleImageF32 = device::SpeckleImage<f32>;
pub type ReservoirF32 = reservoir::Reservoir<f32>;
