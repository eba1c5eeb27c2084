//! Monte Carlo simulation of the sensor, collision channel, jammer and
//! estimator pipeline.
//!
//! Draw `i` belongs to block `i / STREAM_BLOCK`, and each block has its own
//! random stream, so results are identical however blocks are scheduled.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{stream_rng, STREAM_BLOCK};
use crate::error::{Error, Result};
use crate::nonsensing::{GameInstance, NonSensingEquilibrium};
use crate::quad;
use crate::reactive::{transmit_region, ReactivePoint, TransmitRegion};

/// Deterministic transmission rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransmitRule {
    Never,
    Always,
    /// Transmit iff `|x - center| > radius`.
    Band { center: f64, radius: f64 },
    /// Best response to a reactive jammer.
    Region { region: TransmitRegion },
}

impl TransmitRule {
    pub fn transmits(&self, x: f64) -> bool {
        match self {
            TransmitRule::Never => false,
            TransmitRule::Always => true,
            TransmitRule::Band { center, radius } => (x - center).abs() > *radius,
            TransmitRule::Region { region } => region.transmits(x),
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            TransmitRule::Band { center, radius } => vec![center - radius, center + radius],
            TransmitRule::Region { region } => region.roots.clone(),
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JamMode {
    /// Blocks with probability `phi` regardless of the sensor.
    NonSensing { phi: f64 },
    /// Blocks with probability `alpha` if the sensor is silent, `beta` if it
    /// transmits.
    Reactive { alpha: f64, beta: f64 },
}

impl JamMode {
    pub fn probability(&self, transmitting: bool) -> f64 {
        match *self {
            JamMode::NonSensing { phi } => phi,
            JamMode::Reactive { alpha, beta } => {
                if transmitting {
                    beta
                } else {
                    alpha
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub transmit: TransmitRule,
    pub jam: JamMode,
    pub xhat0: f64,
    pub xhat1: f64,
}

impl PolicyBundle {
    pub fn validate(&self) -> Result<()> {
        let probs: &[f64] = match &self.jam {
            JamMode::NonSensing { phi } => &[*phi],
            JamMode::Reactive { alpha, beta } => &[*alpha, *beta],
        };
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(format!(
                "jamming probabilities must lie in [0, 1], got {probs:?}"
            )));
        }
        if !(self.xhat0.is_finite() && self.xhat1.is_finite()) {
            return Err(Error::Domain("representation symbols must be finite".into()));
        }
        if let TransmitRule::Band { center, radius } = self.transmit {
            if !(center.is_finite() && radius >= 0.0) {
                return Err(Error::Domain(format!(
                    "band needs a finite center and radius >= 0, got ({center}, {radius})"
                )));
            }
        }
        Ok(())
    }
}

/// Saddle-point policies against the non-sensing jammer.
pub fn bundle_from_nonsensing(eq: &NonSensingEquilibrium) -> PolicyBundle {
    PolicyBundle {
        transmit: TransmitRule::Band {
            center: eq.xhat0,
            radius: eq.threshold,
        },
        jam: JamMode::NonSensing { phi: eq.phi_star },
        xhat0: eq.xhat0,
        xhat1: eq.xhat1,
    }
}

/// The sensor's best response to `p` together with the jammer and estimator
/// it encodes.
pub fn bundle_from_reactive(p: &ReactivePoint, inst: &GameInstance) -> PolicyBundle {
    PolicyBundle {
        transmit: TransmitRule::Region {
            region: transmit_region(p.xhat(), p.theta(), inst.c, inst.d),
        },
        jam: JamMode::Reactive {
            alpha: p.alpha,
            beta: p.beta,
        },
        xhat0: p.xhat0,
        xhat1: p.xhat1,
    }
}

/// Expected per-draw cost of a bundle, by quadrature.
pub fn expected_cost(inst: &GameInstance, b: &PolicyBundle) -> Result<f64> {
    b.validate()?;
    let (c, d) = (inst.c, inst.d);
    let blocked = |x: f64| (x - b.xhat1).powi(2) - d;
    quad::expectation(
        &inst.dist,
        |x| {
            let u = b.transmit.transmits(x);
            let pj = b.jam.probability(u);
            if u {
                c + pj * blocked(x)
            } else {
                (1.0 - pj) * (x - b.xhat0).powi(2) + pj * blocked(x)
            }
        },
        &b.transmit.kinks(),
    )
}

/// What the receiver sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelOutput {
    /// The source value itself.
    Received,
    /// Idle channel.
    Idle,
    /// Jammed channel.
    Blocked,
}

impl ChannelOutput {
    pub fn tag(&self) -> &'static str {
        match self {
            ChannelOutput::Received => "x",
            ChannelOutput::Idle => "idle",
            ChannelOutput::Blocked => "blocked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: usize,
    pub x: f64,
    pub u: bool,
    pub j: bool,
    pub y: ChannelOutput,
    pub xhat: f64,
    pub cost: f64,
}

fn one_draw<R: Rng>(inst: &GameInstance, b: &PolicyBundle, rng: &mut R, index: usize) -> Event {
    let x = inst.dist.draw(rng);
    let u = b.transmit.transmits(x);
    let j = rng.random::<f64>() < b.jam.probability(u);
    let (y, xhat) = if j {
        (ChannelOutput::Blocked, b.xhat1)
    } else if u {
        (ChannelOutput::Received, x)
    } else {
        (ChannelOutput::Idle, b.xhat0)
    };
    let cost = (x - xhat).powi(2) + if u { inst.c } else { 0.0 } - if j { inst.d } else { 0.0 };
    Event {
        index,
        x,
        u,
        j,
        y,
        xhat,
        cost,
    }
}

/// Running statistics of one block, merged pairwise in block order.
#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
    /// Indexed by `2 u + j`.
    counts: [u64; 4],
}

impl Accumulator {
    fn push(&mut self, e: &Event) {
        self.n += 1;
        let delta = e.cost - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (e.cost - self.mean);
        self.counts[2 * e.u as usize + e.j as usize] += 1;
    }

    fn merge(self, o: Self) -> Self {
        if self.n == 0 {
            return o;
        }
        let n = self.n + o.n;
        let delta = o.mean - self.mean;
        let mut counts = self.counts;
        for (a, b) in counts.iter_mut().zip(o.counts) {
            *a += b;
        }
        Self {
            n,
            mean: self.mean + delta * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + delta * delta * (self.n as f64 * o.n as f64) / n as f64,
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub n: u64,
    pub empirical_cost: f64,
    pub std_error: f64,
    pub p_transmit: f64,
    pub p_jam: f64,
    /// Keys `u{U}_j{J}`.
    pub event_counts: BTreeMap<String, u64>,
    /// Empirical `P(J = 1 | U = 0)`, if any silent draws occurred.
    pub jam_given_silent: Option<f64>,
    /// Empirical `P(J = 1 | U = 1)`, if any transmitting draws occurred.
    pub jam_given_transmit: Option<f64>,
}

impl SimResult {
    pub fn count(&self, u: bool, j: bool) -> u64 {
        self.event_counts
            .get(&event_key(u, j))
            .copied()
            .unwrap_or(0)
    }

    /// Draws with `U = u`.
    pub fn count_u(&self, u: bool) -> u64 {
        self.count(u, false) + self.count(u, true)
    }
}

fn event_key(u: bool, j: bool) -> String {
    format!("u{}_j{}", u as u8, j as u8)
}

/// Runs `n` independent draws. Returns the aggregate and the first
/// `trace_limit` events.
pub fn simulate_with_trace(
    inst: &GameInstance,
    b: &PolicyBundle,
    n: usize,
    seed: u64,
    trace_limit: usize,
) -> Result<(SimResult, Vec<Event>)> {
    if n == 0 {
        return Err(Error::Domain("need at least one draw".into()));
    }
    b.validate()?;
    let blocks = n.div_ceil(STREAM_BLOCK);
    let per_block: Vec<(Accumulator, Vec<Event>)> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = stream_rng(seed, blk);
            let start = blk * STREAM_BLOCK;
            let end = n.min(start + STREAM_BLOCK);
            let mut acc = Accumulator::default();
            let mut events = Vec::new();
            for i in start..end {
                let e = one_draw(inst, b, &mut rng, i);
                acc.push(&e);
                if i < trace_limit {
                    events.push(e);
                }
            }
            (acc, events)
        })
        .collect();

    let mut acc = Accumulator::default();
    let mut trace = Vec::with_capacity(trace_limit.min(n));
    for (a, ev) in per_block {
        acc = acc.merge(a);
        trace.extend(ev);
    }

    let nf = acc.n as f64;
    let variance = if acc.n > 1 { acc.m2 / (nf - 1.0) } else { 0.0 };
    let [s0, j0, s1, j1] = acc.counts;
    let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
    let mut event_counts = BTreeMap::new();
    for (u, j) in [(false, false), (false, true), (true, false), (true, true)] {
        event_counts.insert(event_key(u, j), acc.counts[2 * u as usize + j as usize]);
    }
    Ok((
        SimResult {
            n: acc.n,
            empirical_cost: acc.mean,
            std_error: (variance / nf).sqrt(),
            p_transmit: (s1 + j1) as f64 / nf,
            p_jam: (j0 + j1) as f64 / nf,
            event_counts,
            jam_given_silent: ratio(j0, s0 + j0),
            jam_given_transmit: ratio(j1, s1 + j1),
        },
        trace,
    ))
}

pub fn simulate(inst: &GameInstance, b: &PolicyBundle, n: usize, seed: u64) -> Result<SimResult> {
    simulate_with_trace(inst, b, n, seed, 0).map(|(r, _)| r)
}

/// Per-event CSV: `index,x,u,j,y,xhat,cost`.
pub fn write_events_csv<W: std::io::Write>(events: &[Event], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "x", "u", "j", "y", "xhat", "cost"])?;
    for e in events {
        out.write_record(&[
            e.index.to_string(),
            format!("{:.17e}", e.x),
            (e.u as u8).to_string(),
            (e.j as u8).to_string(),
            e.y.tag().to_string(),
            format!("{:.17e}", e.xhat),
            format!("{:.17e}", e.cost),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Binomial standard error of a frequency estimated from `n` trials.
pub fn binomial_std_error(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
