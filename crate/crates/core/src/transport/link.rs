//! Discrete-event link emulation driven by an external simulated clock.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("delay parameters must be finite and non-negative: {0}")]
    NegativeDelay(String),
    #[error("uniform delay bounds inverted: lo {lo} > hi {hi}")]
    InvertedBounds { lo: f64, hi: f64 },
    #[error("empirical delay model needs at least one sample")]
    EmptyEmpirical,
    #[error("loss probability {0} outside [0, 1]")]
    LossRange(f64),
    #[error("stream links are lossless; remove the loss parameter")]
    LossOnStream,
}

/// Per-message delay distribution, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DelayModel {
    Constant {
        ms: f64,
    },
    Uniform {
        lo_ms: f64,
        hi_ms: f64,
    },
    /// Normal draw clamped at zero.
    TruncatedNormal {
        mean_ms: f64,
        std_ms: f64,
    },
    /// Uniform draw from a recorded sample list.
    Empirical {
        samples_ms: Vec<f64>,
    },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Constant { ms: 0.0 }
    }
}

fn non_negative(v: f64, what: &str) -> Result<(), LinkError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(LinkError::NegativeDelay(format!("{what} = {v}")))
    }
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), LinkError> {
        match self {
            DelayModel::Constant { ms } => non_negative(*ms, "ms"),
            DelayModel::Uniform { lo_ms, hi_ms } => {
                non_negative(*lo_ms, "lo_ms")?;
                non_negative(*hi_ms, "hi_ms")?;
                if lo_ms > hi_ms {
                    return Err(LinkError::InvertedBounds { lo: *lo_ms, hi: *hi_ms });
                }
                Ok(())
            }
            DelayModel::TruncatedNormal { mean_ms, std_ms } => {
                if !mean_ms.is_finite() {
                    return Err(LinkError::NegativeDelay(format!("mean_ms = {mean_ms}")));
                }
                non_negative(*std_ms, "std_ms")
            }
            DelayModel::Empirical { samples_ms } => {
                if samples_ms.is_empty() {
                    return Err(LinkError::EmptyEmpirical);
                }
                samples_ms.iter().try_for_each(|&s| non_negative(s, "sample"))
            }
        }
    }

    /// Draws one delay in whole nanoseconds.
    pub fn sample_ns(&self, rng: &mut impl Rng) -> u64 {
        let ms = match self {
            DelayModel::Constant { ms } => *ms,
            DelayModel::Uniform { lo_ms, hi_ms } => {
                if lo_ms == hi_ms {
                    *lo_ms
                } else {
                    rng.random_range(*lo_ms..*hi_ms)
                }
            }
            DelayModel::TruncatedNormal { mean_ms, std_ms } => {
                let normal = Normal::new(*mean_ms, *std_ms).expect("validated std");
                normal.sample(rng).max(0.0)
            }
            DelayModel::Empirical { samples_ms } => samples_ms[rng.random_range(0..samples_ms.len())],
        };
        ms_to_ns(ms)
    }
}

pub fn ms_to_ns(ms: f64) -> u64 {
    (ms * 1e6).round() as u64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    #[serde(default)]
    pub delay: DelayModel,
    /// Drop probability; datagram links only.
    #[serde(default)]
    pub loss: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl LinkConfig {
    pub fn constant(ms: f64) -> Self {
        Self {
            delay: DelayModel::Constant { ms },
            ..Self::default()
        }
    }

    pub fn validate_datagram(&self) -> Result<(), LinkError> {
        self.delay.validate()?;
        match self.loss {
            Some(p) if !(0.0..=1.0).contains(&p) => Err(LinkError::LossRange(p)),
            _ => Ok(()),
        }
    }

    pub fn validate_stream(&self) -> Result<(), LinkError> {
        self.delay.validate()?;
        if self.loss.is_some() {
            return Err(LinkError::LossOnStream);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery<T> {
    pub sent_ns: u64,
    pub deliver_ns: u64,
    pub message: T,
}

#[derive(Debug)]
struct Scheduled<T> {
    deliver_ns: u64,
    order: u64,
    sent_ns: u64,
    message: T,
}

impl<T> PartialEq for Scheduled<T> {
    fn eq(&self, other: &Self) -> bool {
        (self.deliver_ns, self.order) == (other.deliver_ns, other.order)
    }
}
impl<T> Eq for Scheduled<T> {}
impl<T> PartialOrd for Scheduled<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Scheduled<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_ns, self.order).cmp(&(other.deliver_ns, other.order))
    }
}

/// Unreliable, unordered link: each message is delivered once after a
/// sampled delay or dropped.
#[derive(Debug)]
pub struct DatagramLink<T> {
    config: LinkConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<Scheduled<T>>>,
    next_order: u64,
    dropped: u64,
}

impl<T> DatagramLink<T> {
    pub fn new(config: LinkConfig) -> Result<Self, LinkError> {
        config.validate_datagram()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            queue: BinaryHeap::new(),
            next_order: 0,
            dropped: 0,
        })
    }

    /// Schedules a message. Returns the delivery time, or `None` if dropped.
    pub fn send(&mut self, now_ns: u64, message: T) -> Option<u64> {
        // Loss is drawn before the delay so that the delay sequence of
        // delivered packets does not depend on the loss rate being zero.
        if let Some(p) = self.config.loss {
            if p > 0.0 && self.rng.random::<f64>() < p {
                self.dropped += 1;
                return None;
            }
        }
        let deliver_ns = now_ns + self.config.delay.sample_ns(&mut self.rng);
        self.queue.push(Reverse(Scheduled {
            deliver_ns,
            order: self.next_order,
            sent_ns: now_ns,
            message,
        }));
        self.next_order += 1;
        Some(deliver_ns)
    }

    /// Removes and returns every message due at or before `now_ns`, in
    /// delivery-time order.
    pub fn poll(&mut self, now_ns: u64) -> Vec<Delivery<T>> {
        let mut out = Vec::new();
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.deliver_ns > now_ns {
                break;
            }
            let Reverse(s) = self.queue.pop().expect("peeked");
            out.push(Delivery {
                sent_ns: s.sent_ns,
                deliver_ns: s.deliver_ns,
                message: s.message,
            });
        }
        out
    }

    pub fn next_delivery_ns(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse(s)| s.deliver_ns)
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

/// Lossless in-order link with head-of-line blocking: a message is
/// delivered at `max(send + delay, previous delivery)`.
#[derive(Debug)]
pub struct StreamLink<T> {
    config: LinkConfig,
    rng: ChaCha8Rng,
    queue: std::collections::VecDeque<Delivery<T>>,
    last_delivery_ns: u64,
}

impl<T> StreamLink<T> {
    pub fn new(config: LinkConfig) -> Result<Self, LinkError> {
        config.validate_stream()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            queue: Default::default(),
            last_delivery_ns: 0,
        })
    }

    pub fn send(&mut self, now_ns: u64, message: T) -> u64 {
        let ready = now_ns + self.config.delay.sample_ns(&mut self.rng);
        let deliver_ns = ready.max(self.last_delivery_ns);
        self.last_delivery_ns = deliver_ns;
        self.queue.push_back(Delivery {
            sent_ns: now_ns,
            deliver_ns,
            message,
        });
        deliver_ns
    }

    pub fn poll(&mut self, now_ns: u64) -> Vec<Delivery<T>> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|d| d.deliver_ns <= now_ns) {
            out.push(self.queue.pop_front().expect("checked front"));
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
