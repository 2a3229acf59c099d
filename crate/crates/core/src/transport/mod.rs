//! Wire codecs, the twin-bound throttler and emulated links.

mod codec;
mod link;
mod throttle;

pub use codec::*;
pub use link::{ms_to_ns, DatagramLink, DelayModel, Delivery, LinkConfig, LinkError, StreamLink};
pub use throttle::{throttle, tick_time_ns, Emission, Throttle, ThrottleError, TWIN_RATE_HZ};
