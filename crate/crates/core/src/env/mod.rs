//! Experiment domains.

pub mod fourrooms;
pub mod pinball;
pub mod tabular;

pub use fourrooms::{FourRooms, GridMap, FOUR_ROOMS_MAP};
pub use pinball::{Pinball, PinballConfig, PinballState, DEFAULT_MAZE};
pub use tabular::MdpEnv;
