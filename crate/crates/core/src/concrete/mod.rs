//! The concrete tower: CEK, CESK, CESK* and time-stamped CESK*.
//!
//! All four compute the same function and run in lock-step; see
//! [`equiv`] for the maps that relate their states.

mod cek;
mod cesk;
pub mod equiv;
mod star;
mod timed;

pub use cek::{Cek, CekClosure, CekEnv, CekKont, CekState};
pub use cesk::{Cesk, CeskKont, CeskState};
pub use star::{CeskStar, Kont, StarState, Storable};
pub use timed::{CeskStarT, TimedState};
