//! Keep-latest downsampling onto a fixed-rate tick grid.

use thiserror::Error;

pub const TWIN_RATE_HZ: u32 = 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ThrottleError {
    #[error("sample time {time_ns} ns precedes previous sample at {last_ns} ns")]
    NonMonotone { time_ns: u64, last_ns: u64 },
    #[error("target rate must be positive")]
    ZeroRate,
}

/// Start of tick `index` on a `rate_hz` grid anchored at zero.
pub fn tick_time_ns(index: u64, rate_hz: u32) -> u64 {
    ((index as u128 * 1_000_000_000u128) / rate_hz as u128) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emission<T> {
    /// Grid time of the tick that released the sample.
    pub tick_ns: u64,
    pub sample_ns: u64,
    pub sample: T,
}

/// Emits, at each tick, the most recent sample received at or before the
/// tick, unless that sample was already emitted.
///
/// A tick at time `t` is only resolved once a sample later than `t` arrives
/// (or [`Throttle::flush`] is called), so samples stamped exactly on a tick
/// belong to that tick.
#[derive(Debug, Clone)]
pub struct Throttle<T> {
    rate_hz: u32,
    next_tick: u64,
    latest: Option<(u64, T)>,
    fresh: bool,
    last_time: Option<u64>,
}

impl<T: Clone> Throttle<T> {
    pub fn new(rate_hz: u32) -> Result<Self, ThrottleError> {
        if rate_hz == 0 {
            return Err(ThrottleError::ZeroRate);
        }
        Ok(Self {
            rate_hz,
            next_tick: 0,
            latest: None,
            fresh: false,
            last_time: None,
        })
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    /// Offers a sample; returns the emission of a tick that this sample
    /// closed, if any.
    pub fn push(&mut self, time_ns: u64, sample: T) -> Result<Option<Emission<T>>, ThrottleError> {
        if let Some(last_ns) = self.last_time {
            if time_ns < last_ns {
                return Err(ThrottleError::NonMonotone { time_ns, last_ns });
            }
        }
        self.last_time = Some(time_ns);
        let emitted = self.resolve_ticks_before(time_ns);
        self.latest = Some((time_ns, sample));
        self.fresh = true;
        Ok(emitted)
    }

    /// Resolves every tick at or before `until_ns` (end of stream).
    pub fn flush(&mut self, until_ns: u64) -> Option<Emission<T>> {
        self.resolve_ticks_before(until_ns.saturating_add(1))
    }

    fn resolve_ticks_before(&mut self, time_ns: u64) -> Option<Emission<T>> {
        let tick_ns = tick_time_ns(self.next_tick, self.rate_hz);
        if tick_ns >= time_ns {
            return None;
        }
        // The first pending tick takes the latest sample (which is never
        // newer than that tick); every later tick before `time_ns` has no
        // news, so jump over them.
        let emitted = match (&self.latest, self.fresh) {
            (Some((sample_ns, sample)), true) => Some(Emission {
                tick_ns,
                sample_ns: *sample_ns,
                sample: sample.clone(),
            }),
            _ => None,
        };
        self.fresh = false;
        self.next_tick = first_tick_at_or_after(time_ns, self.rate_hz);
        emitted
    }
}

fn first_tick_at_or_after(time_ns: u64, rate_hz: u32) -> u64 {
    let num = time_ns as u128 * rate_hz as u128;
    num.div_ceil(1_000_000_000u128) as u64
}

/// Batch form: throttles a full, time-ordered stream ending at `end_ns`
/// (exclusive).
pub fn throttle<T: Clone>(
    samples: impl IntoIterator<Item = (u64, T)>,
    rate_hz: u32,
    end_ns: u64,
) -> Result<Vec<Emission<T>>, ThrottleError> {
    let mut t = Throttle::new(rate_hz)?;
    let mut out = Vec::new();
    for (time_ns, s) in samples {
        if time_ns >= end_ns {
            break;
        }
        out.extend(t.push(time_ns, s)?);
    }
    if end_ns > 0 {
        out.extend(t.flush(end_ns - 1));
    }
    Ok(out)
}
