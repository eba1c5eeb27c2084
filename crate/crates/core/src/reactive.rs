//! Minimax machinery against a channel-sensing (reactive) jammer.
//!
//! The jammer blocks with probability `alpha` when the sensor is silent and
//! `beta` when it transmits. Once the sensor best-responds, the coordinator is
//! left with
//!
//! ```text
//! J(xhat, theta) = E[min{ beta (X - xhat1)^2 + c - d beta,
//!                         alpha (X - xhat1)^2 + (1 - alpha)(X - xhat0)^2 - d alpha }]
//! ```
//!
//! which is concave in `theta` and nonconvex in `xhat`. It splits as `F - G`
//! with `F` a closed-form quadratic and `G = E[max{..}]` convex, which is what
//! the convex-concave step exploits. Solutions are first-order Nash
//! equilibria, certified by a gradient norm for the coordinator and a box
//! linear-program gap for the jammer.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::stream_rng;
use crate::error::{Error, Result};
use crate::nonsensing::GameInstance;
use crate::quad;

/// Candidate equilibrium: representation symbols for an idle (`xhat0`) and a
/// blocked (`xhat1`) channel, and the jammer's conditional probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactivePoint {
    pub xhat0: f64,
    pub xhat1: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ReactivePoint {
    pub fn new(xhat: [f64; 2], theta: [f64; 2]) -> Result<Self> {
        let p = Self {
            xhat0: xhat[0],
            xhat1: xhat[1],
            alpha: theta[0],
            beta: theta[1],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xhat0.is_finite() && self.xhat1.is_finite()) {
            return Err(Error::Domain(format!(
                "representation symbols must be finite, got ({}, {})",
                self.xhat0, self.xhat1
            )));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn xhat(&self) -> [f64; 2] {
        [self.xhat0, self.xhat1]
    }

    pub fn theta(&self) -> [f64; 2] {
        [self.alpha, self.beta]
    }

    /// The point with both symbols negated. For a symmetric source it has the
    /// same cost and certificate.
    pub fn mirrored(&self) -> Self {
        Self {
            xhat0: -self.xhat0,
            xhat1: -self.xhat1,
            ..*self
        }
    }

    /// Representative of the mirror pair with `xhat0 > 0` (or `xhat0 = 0`
    /// and `xhat1 <= 0`).
    pub fn canonical(&self) -> Self {
        if self.xhat0 < 0.0 || (self.xhat0 == 0.0 && self.xhat1 > 0.0) {
            self.mirrored()
        } else {
            *self
        }
    }

    /// Transmit-branch cost `beta (x - xhat1)^2 + c - d beta`.
    fn transmit_cost(&self, x: f64, c: f64, d: f64) -> f64 {
        self.beta * (x - self.xhat1).powi(2) + c - d * self.beta
    }

    /// Silent-branch cost `alpha (x - xhat1)^2 + (1 - alpha)(x - xhat0)^2 - d alpha`.
    fn silent_cost(&self, x: f64, d: f64) -> f64 {
        self.alpha * (x - self.xhat1).powi(2) + (1.0 - self.alpha) * (x - self.xhat0).powi(2)
            - d * self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    AlwaysTransmit,
    NeverTransmit,
    /// Transmit iff `x <= roots[0]` or `x >= roots[1]`.
    OutsideInterval,
    /// `beta = 1`: transmit on one side of `roots[0]`.
    HalfLine,
}

/// Where the best-responding sensor transmits: `D(x) >= 0` with
/// `D(x) = a2 x^2 + a1 x + a0` the silent cost minus the transmit cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitRegion {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    pub roots: Vec<f64>,
    pub shape: RegionShape,
}

impl TransmitRegion {
    pub fn margin(&self, x: f64) -> f64 {
        (self.a2 * x + self.a1) * x + self.a0
    }

    /// Ties go to transmitting.
    pub fn transmits(&self, x: f64) -> bool {
        match self.shape {
            RegionShape::AlwaysTransmit => true,
            RegionShape::NeverTransmit => false,
            RegionShape::OutsideInterval => x <= self.roots[0] || x >= self.roots[1],
            RegionShape::HalfLine => {
                if self.a1 > 0.0 {
                    x >= self.roots[0]
                } else {
                    x <= self.roots[0]
                }
            }
        }
    }

    /// `P(U = 1)` under `dist`.
    pub fn transmit_probability(&self, dist: &crate::dist::SourceDistribution) -> f64 {
        match self.shape {
            RegionShape::AlwaysTransmit => 1.0,
            RegionShape::NeverTransmit => 0.0,
            RegionShape::OutsideInterval => {
                1.0 - (dist.cdf(self.roots[1]) - dist.cdf(self.roots[0]))
            }
            RegionShape::HalfLine => {
                let f = dist.cdf(self.roots[0]);
                if self.a1 > 0.0 {
                    1.0 - f
                } else {
                    f
                }
            }
        }
    }
}

/// Classifies the sensor's best response to `(xhat, theta)`.
pub fn transmit_region(xhat: [f64; 2], theta: [f64; 2], c: f64, d: f64) -> TransmitRegion {
    let [x0, x1] = xhat;
    let [alpha, beta] = theta;
    let a2 = 1.0 - beta;
    let a1 = 2.0 * (beta - alpha) * x1 - 2.0 * (1.0 - alpha) * x0;
    let a0 = (alpha - beta) * x1 * x1 + (1.0 - alpha) * x0 * x0 - d * alpha - c + d * beta;

    let (roots, shape) = if a2 > 0.0 {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc > 0.0 {
            // Stable form: avoid cancellation between -a1 and sqrt(disc).
            // With a1 = 0 the roots are exact negatives of each other.
            let q = -0.5 * (a1 + a1.signum() * disc.sqrt());
            let (r1, r2) = if a1 != 0.0 && q != 0.0 {
                (q / a2, a0 / q)
            } else {
                let r = (-a0 / a2).sqrt();
                (-r, r)
            };
            (vec![r1.min(r2), r1.max(r2)], RegionShape::OutsideInterval)
        } else {
            (vec![], RegionShape::AlwaysTransmit)
        }
    } else if a1 != 0.0 {
        (vec![-a0 / a1], RegionShape::HalfLine)
    } else if a0 >= 0.0 {
        (vec![], RegionShape::AlwaysTransmit)
    } else {
        (vec![], RegionShape::NeverTransmit)
    };
    TransmitRegion {
        a2,
        a1,
        a0,
        roots,
        shape,
    }
}

fn region_of(inst: &GameInstance, p: &ReactivePoint) -> Result<TransmitRegion> {
    p.validate()?;
    Ok(transmit_region(p.xhat(), p.theta(), inst.c, inst.d))
}

/// The reduced cost `J(xhat, theta)` after the sensor best-responds.
pub fn objective_jtilde(inst: &GameInstance, p: &ReactivePoint) -> Result<f64> {
    let region = region_of(inst, p)?;
    let (c, d) = (inst.c, inst.d);
    quad::expectation(
        &inst.dist,
        |x| p.transmit_cost(x, c, d).min(p.silent_cost(x, d)),
        &region.roots,
    )
}

/// Expectation of a two-component integrand whose formula depends on which
/// branch the sensor takes.
fn branch_expectation<T, S>(
    inst: &GameInstance,
    region: &TransmitRegion,
    on_transmit: T,
    on_silent: S,
) -> Result<[f64; 2]>
where
    T: Fn(f64) -> [f64; 2],
    S: Fn(f64) -> [f64; 2],
{
    let component = |i: usize| {
        quad::expectation(
            &inst.dist,
            |x| {
                if region.transmits(x) {
                    on_transmit(x)[i]
                } else {
                    on_silent(x)[i]
                }
            },
            &region.roots,
        )
    };
    Ok([component(0)?, component(1)?])
}

/// `∇_xhat J`.
pub fn grad_xhat(inst: &GameInstance, p: &ReactivePoint) -> Result<[f64; 2]> {
    let region = region_of(inst, p)?;
    let (a, b) = (p.alpha, p.beta);
    branch_expectation(
        inst,
        &region,
        |x| [0.0, -2.0 * b * (x - p.xhat1)],
        |x| [-2.0 * (1.0 - a) * (x - p.xhat0), -2.0 * a * (x - p.xhat1)],
    )
}

/// `∇_theta J`, ordered `(d/d alpha, d/d beta)`.
pub fn grad_theta(inst: &GameInstance, p: &ReactivePoint) -> Result<[f64; 2]> {
    let region = region_of(inst, p)?;
    let d = inst.d;
    branch_expectation(
        inst,
        &region,
        |x| [0.0, (x - p.xhat1).powi(2) - d],
        |x| [(x - p.xhat1).powi(2) - (x - p.xhat0).powi(2) - d, 0.0],
    )
}

/// Convex-minus-convex split `J = F - G`. Returns `(F, G)`.
pub fn dc_parts(inst: &GameInstance, p: &ReactivePoint) -> Result<(f64, f64)> {
    let region = region_of(inst, p)?;
    let (a, b) = (p.alpha, p.beta);
    let f = (1.0 - a) * p.xhat0 * p.xhat0
        + (a + b) * p.xhat1 * p.xhat1
        + (1.0 + b) * inst.dist.variance()
        + inst.c
        - inst.d * (a + b);
    let (c, d) = (inst.c, inst.d);
    let g = quad::expectation(
        &inst.dist,
        |x| p.transmit_cost(x, c, d).max(p.silent_cost(x, d)),
        &region.roots,
    )?;
    Ok((f, g))
}

/// `∇_xhat F = (2(1 - alpha) xhat0, 2(alpha + beta) xhat1)`.
pub fn grad_f(p: &ReactivePoint) -> [f64; 2] {
    [
        2.0 * (1.0 - p.alpha) * p.xhat0,
        2.0 * (p.alpha + p.beta) * p.xhat1,
    ]
}

/// `∇_xhat G`: the max picks the branch the min rejects.
pub fn grad_g(inst: &GameInstance, p: &ReactivePoint) -> Result<[f64; 2]> {
    let region = region_of(inst, p)?;
    let (a, b) = (p.alpha, p.beta);
    branch_expectation(
        inst,
        &region,
        |x| [-2.0 * (1.0 - a) * (x - p.xhat0), -2.0 * a * (x - p.xhat1)],
        |x| [0.0, -2.0 * b * (x - p.xhat1)],
    )
}

/// Projected ascent step on the jammer's box `[0, 1]^2`.
pub fn pga_step(theta: [f64; 2], grad: [f64; 2], lambda: f64) -> Result<[f64; 2]> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {lambda}")));
    }
    Ok([
        (theta[0] + lambda * grad[0]).clamp(0.0, 1.0),
        (theta[1] + lambda * grad[1]).clamp(0.0, 1.0),
    ])
}

/// Convex-concave step: minimizes `F` minus the linearization of `G` at
/// `xhat`, i.e. `xhat' = A(theta)^+ g(xhat, theta)` with
/// `A = diag(2(1 - alpha), 2(alpha + beta))`. Directions where `A` is singular
/// do not affect the cost and are set to zero.
pub fn ccp_step(inst: &GameInstance, xhat: [f64; 2], theta: [f64; 2]) -> Result<[f64; 2]> {
    let p = ReactivePoint::new(xhat, theta)?;
    let g = grad_g(inst, &p)?;
    let a0 = 2.0 * (1.0 - p.alpha);
    let a1 = 2.0 * (p.alpha + p.beta);
    Ok([
        if a0 > 0.0 { g[0] / a0 } else { 0.0 },
        if a1 > 0.0 { g[1] / a1 } else { 0.0 },
    ])
}

/// Evidence that a point is an approximate first-order Nash equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FneCertificate {
    /// `‖∇_xhat J‖₂`.
    pub grad_norm: f64,
    /// `max over theta' in [0,1]^2 of <∇_theta J, theta' - theta>`.
    pub lp_gap: f64,
    pub epsilon: f64,
    pub certified: bool,
    pub grad_xhat: [f64; 2],
    pub grad_theta: [f64; 2],
}

/// Box-LP gap, solved coordinate-wise: each term picks whichever bound the
/// gradient points toward.
pub fn lp_gap(grad_theta: [f64; 2], theta: [f64; 2]) -> f64 {
    grad_theta
        .iter()
        .zip(theta)
        .map(|(&q, t)| (q * (0.0 - t)).max(q * (1.0 - t)))
        .sum()
}

pub fn certify_fne(inst: &GameInstance, p: &ReactivePoint, epsilon: f64) -> Result<FneCertificate> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let gx = grad_xhat(inst, p)?;
    let gt = grad_theta(inst, p)?;
    let grad_norm = gx[0].hypot(gx[1]);
    let gap = lp_gap(gt, p.theta());
    Ok(FneCertificate {
        grad_norm,
        lp_gap: gap,
        epsilon,
        certified: grad_norm <= epsilon && gap <= epsilon,
        grad_xhat: gx,
        grad_theta: gt,
    })
}

/// Step-size sequence for the jammer's ascent, indexed from `k = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant(f64),
    /// `lambda / sqrt(k)`.
    InverseSqrt(f64),
}

impl StepSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant(l) => l,
            StepSchedule::InverseSqrt(l) => l / (k.max(1) as f64).sqrt(),
        }
    }

    fn base(&self) -> f64 {
        match *self {
            StepSchedule::Constant(l) | StepSchedule::InverseSqrt(l) => l,
        }
    }
}

/// Stop as stalled after this many consecutive near-zero moves.
pub const STALL_WINDOW: usize = 50;
pub const STALL_DISPLACEMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgaCcpOptions {
    pub schedule: StepSchedule,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for PgaCcpOptions {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::Constant(0.1),
            epsilon: 1e-5,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdaOptions {
    pub lambda_ga: f64,
    pub lambda_gd: f64,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for GdaOptions {
    fn default() -> Self {
        Self {
            lambda_ga: 0.1,
            lambda_gd: 0.01,
            epsilon: 1e-5,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EpsilonFne,
    MaxIters,
    Stalled,
}

/// One row of a solver trace. Row `k = 0` is the initial point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub xhat0: f64,
    pub xhat1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
    /// `J(xhat^(k-1), theta^(k))`: cost after the jammer moved, before the
    /// coordinator did. `None` on the initial row.
    pub objective_before_descent: Option<f64>,
    pub grad_xhat_norm: f64,
    pub lp_gap: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub iterations: Vec<TraceRecord>,
    pub terminated_by: Termination,
}

impl SolverTrace {
    /// Number of update steps taken.
    pub fn steps(&self) -> usize {
        self.iterations.last().map(|r| r.k).unwrap_or(0)
    }

    /// CSV with columns `k,xhat0,xhat1,alpha,beta,objective,grad_xhat_norm,lp_gap`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "k", "xhat0", "xhat1", "alpha", "beta", "objective", "grad_xhat_norm", "lp_gap",
        ])?;
        for r in &self.iterations {
            out.write_record(&[
                r.k.to_string(),
                format!("{:.17e}", r.xhat0),
                format!("{:.17e}", r.xhat1),
                format!("{:.17e}", r.alpha),
                format!("{:.17e}", r.beta),
                format!("{:.17e}", r.objective),
                format!("{:.17e}", r.grad_xhat_norm),
                format!("{:.17e}", r.lp_gap),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Final point (canonical mirror representative), its trace and certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub point: ReactivePoint,
    pub certificate: FneCertificate,
    pub trace: SolverTrace,
}

/// Default start: `xhat = (sigma, -sigma)`, `theta = (1/2, 1/2)`. The
/// symmetric point `xhat = 0` has zero coordinator gradient for any `theta`,
/// so solvers started there never leave the symmetric family.
pub fn default_init(inst: &GameInstance) -> ReactivePoint {
    let s = inst.dist.std_dev();
    ReactivePoint {
        xhat0: s,
        xhat1: -s,
        alpha: 0.5,
        beta: 0.5,
    }
}

fn record(
    inst: &GameInstance,
    k: usize,
    p: &ReactivePoint,
    cert: &FneCertificate,
    before: Option<f64>,
    step: f64,
) -> Result<TraceRecord> {
    Ok(TraceRecord {
        k,
        xhat0: p.xhat0,
        xhat1: p.xhat1,
        alpha: p.alpha,
        beta: p.beta,
        objective: objective_jtilde(inst, p)?,
        objective_before_descent: before,
        grad_xhat_norm: cert.grad_norm,
        lp_gap: cert.lp_gap,
        step_size: step,
    })
}

/// Drives an alternating jammer-ascent / coordinator-descent iteration until
/// the point is an epsilon-FNE, stalls, or runs out of iterations.
fn run<U>(
    inst: &GameInstance,
    init: &ReactivePoint,
    epsilon: f64,
    max_iters: usize,
    mut update: U,
) -> Result<SolveOutcome>
where
    U: FnMut(usize, &ReactivePoint, &FneCertificate) -> Result<(ReactivePoint, f64, f64)>,
{
    init.validate()?;
    let mut p = *init;
    let mut cert = certify_fne(inst, &p, epsilon)?;
    let mut iterations = vec![record(inst, 0, &p, &cert, None, 0.0)?];
    let mut quiet = 0;
    let mut terminated_by = Termination::MaxIters;

    for k in 1..=max_iters {
        let (next, before, step) = update(k, &p, &cert)?;
        let moved = (next.xhat0 - p.xhat0)
            .hypot(next.xhat1 - p.xhat1)
            .hypot((next.alpha - p.alpha).hypot(next.beta - p.beta));
        p = next;
        cert = certify_fne(inst, &p, epsilon)?;
        iterations.push(record(inst, k, &p, &cert, Some(before), step)?);
        if cert.certified {
            terminated_by = Termination::EpsilonFne;
            break;
        }
        quiet = if moved < STALL_DISPLACEMENT { quiet + 1 } else { 0 };
        if quiet >= STALL_WINDOW {
            terminated_by = Termination::Stalled;
            break;
        }
    }

    let point = p.canonical();
    let certificate = if point == p {
        cert
    } else {
        certify_fne(inst, &point, epsilon)?
    };
    Ok(SolveOutcome {
        point,
        certificate,
        trace: SolverTrace {
            iterations,
            terminated_by,
        },
    })
}

/// Projected gradient ascent for the jammer alternated with the
/// convex-concave procedure for the coordinator.
pub fn solve_pga_ccp(
    inst: &GameInstance,
    init: &ReactivePoint,
    opts: &PgaCcpOptions,
) -> Result<SolveOutcome> {
    if !(opts.schedule.base() > 0.0) {
        return Err(Error::Domain("step size must be positive".into()));
    }
    run(inst, init, opts.epsilon, opts.max_iters, |k, p, cert| {
        let step = opts.schedule.at(k);
        let theta = pga_step(p.theta(), cert.grad_theta, step)?;
        let jammed = ReactivePoint::new(p.xhat(), theta)?;
        let before = objective_jtilde(inst, &jammed)?;
        let xhat = ccp_step(inst, p.xhat(), theta)?;
        Ok((ReactivePoint::new(xhat, theta)?, before, step))
    })
}

/// Gradient descent ascent baseline: projected ascent for the jammer (step
/// `lambda_ga`), then a plain gradient step for the coordinator (`lambda_gd`).
pub fn solve_gda(inst: &GameInstance, init: &ReactivePoint, opts: &GdaOptions) -> Result<SolveOutcome> {
    if !(opts.lambda_gd > 0.0) {
        return Err(Error::Domain(format!(
            "descent step must be positive, got {}",
            opts.lambda_gd
        )));
    }
    run(inst, init, opts.epsilon, opts.max_iters, |_, p, cert| {
        let theta = pga_step(p.theta(), cert.grad_theta, opts.lambda_ga)?;
        let jammed = ReactivePoint::new(p.xhat(), theta)?;
        let before = objective_jtilde(inst, &jammed)?;
        let g = grad_xhat(inst, &jammed)?;
        let xhat = [p.xhat0 - opts.lambda_gd * g[0], p.xhat1 - opts.lambda_gd * g[1]];
        Ok((ReactivePoint::new(xhat, theta)?, before, opts.lambda_ga))
    })
}

/// Random starting points: symbols uniform on `[-2 sigma, 2 sigma]`, jamming
/// probabilities uniform on `[0, 1]`. Start `i` uses stream `i` of `seed`.
pub fn random_inits(inst: &GameInstance, starts: usize, seed: u64) -> Vec<ReactivePoint> {
    let s = inst.dist.std_dev();
    (0..starts)
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            ReactivePoint {
                xhat0: rng.random_range(-2.0 * s..=2.0 * s),
                xhat1: rng.random_range(-2.0 * s..=2.0 * s),
                alpha: rng.random_range(0.0..=1.0),
                beta: rng.random_range(0.0..=1.0),
            }
        })
        .collect()
}

/// Runs PGA-CCP from several random starts in parallel. Results are in start
/// order.
pub fn solve_pga_ccp_multistart(
    inst: &GameInstance,
    starts: usize,
    seed: u64,
    opts: &PgaCcpOptions,
) -> Result<Vec<SolveOutcome>> {
    random_inits(inst, starts, seed)
        .par_iter()
        .map(|init| solve_pga_ccp(inst, init, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonsensing;

    fn inst(var: f64) -> GameInstance {
        GameInstance::gaussian(var, 1.0, 1.0).unwrap()
    }

    const TABLE_ROW_1: ReactivePoint = ReactivePoint {
        xhat0: 0.5169,
        xhat1: -0.4831,
        alpha: 0.0760,
        beta: 0.3172,
    };

    #[test]
    fn diagonal_region_is_symmetric_band() {
        let r = transmit_region([0.0, 0.0], [0.3, 0.3], 1.0, 1.0);
        assert_eq!(r.shape, RegionShape::OutsideInterval);
        let tau = (1.0f64 / 0.7).sqrt();
        assert!((r.roots[0] + tau).abs() < 1e-14 && (r.roots[1] - tau).abs() < 1e-14);
    }

    #[test]
    fn table_row_region_is_asymmetric() {
        let r = transmit_region(TABLE_ROW_1.xhat(), TABLE_ROW_1.theta(), 1.0, 1.0);
        assert_eq!(r.shape, RegionShape::OutsideInterval);
        // Quadratic-formula oracle.
        let disc = r.a1 * r.a1 - 4.0 * r.a2 * r.a0;
        let lo = (-r.a1 - disc.sqrt()) / (2.0 * r.a2);
        let hi = (-r.a1 + disc.sqrt()) / (2.0 * r.a2);
        assert!((r.roots[0] - lo).abs() < 1e-12 && (r.roots[1] - hi).abs() < 1e-12);
        assert!((r.roots[0] + r.roots[1]).abs() > 0.5);
        for &t in &r.roots {
            let p = TABLE_ROW_1;
            assert!((p.silent_cost(t, 1.0) - p.transmit_cost(t, 1.0, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_beta_one() {
        // alpha = 0, beta = 1, xhat = 0: D(x) = x^2 - x^2 - c + d = d - c.
        let r = transmit_region([0.0, 0.0], [0.0, 1.0], 1.0, 2.0);
        assert_eq!(r.shape, RegionShape::AlwaysTransmit);
        let r = transmit_region([0.0, 0.0], [0.0, 1.0], 2.0, 1.0);
        assert_eq!(r.shape, RegionShape::NeverTransmit);
        // xhat0 = 1: D(x) = -2x + 1 + d - c; transmit iff x <= (1 + d - c)/2.
        let r = transmit_region([1.0, 0.0], [0.0, 1.0], 1.0, 1.0);
        assert_eq!(r.shape, RegionShape::HalfLine);
        assert!((r.roots[0] - 0.5).abs() < 1e-15);
        assert!(r.transmits(0.4) && !r.transmits(0.6));
    }

    #[test]
    fn region_agrees_with_branch_costs() {
        let p = ReactivePoint::new([0.3, -0.9], [0.2, 0.6]).unwrap();
        let r = transmit_region(p.xhat(), p.theta(), 1.0, 1.0);
        for i in -50..=50 {
            let x = i as f64 * 0.1 + 0.013;
            let want = p.transmit_cost(x, 1.0, 1.0) <= p.silent_cost(x, 1.0);
            assert_eq!(r.transmits(x), want, "x = {x}");
        }
    }

    #[test]
    fn objective_examples() {
        let i = inst(2.0);
        let phi = 0.7887;
        let p = ReactivePoint::new([0.0, 0.0], [phi, phi]).unwrap();
        let a = objective_jtilde(&i, &p).unwrap();
        let b = nonsensing::objective(&i, phi, [0.0, 0.0]).unwrap();
        assert!((a - b).abs() < 1e-8);

        let p = ReactivePoint::new([0.0, 0.0], [0.0, 0.0]).unwrap();
        assert!((objective_jtilde(&inst(1.0), &p).unwrap() - 0.5160).abs() < 1e-3);

        let i = inst(1.0);
        let a = objective_jtilde(&i, &TABLE_ROW_1).unwrap();
        let b = objective_jtilde(&i, &TABLE_ROW_1.mirrored()).unwrap();
        assert!(a.is_finite() && (a - b).abs() < 1e-10);
    }

    #[test]
    fn symmetric_point_has_zero_coordinator_gradient() {
        let i = inst(1.3);
        for theta in [[0.1, 0.2], [0.5, 0.9], [0.0, 1.0]] {
            let p = ReactivePoint::new([0.0, 0.0], theta).unwrap();
            let g = grad_xhat(&i, &p).unwrap();
            assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10, "{g:?}");
            let g = grad_g(&i, &p).unwrap();
            assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10, "{g:?}");
        }
    }

    #[test]
    fn grad_theta_at_origin() {
        let p = ReactivePoint::new([0.0, 0.0], [0.0, 0.0]).unwrap();
        let g = grad_theta(&inst(1.0), &p).unwrap();
        assert!((g[0] + 0.6827).abs() < 1e-3 && (g[1] - 0.4840).abs() < 1e-3, "{g:?}");
    }

    #[test]
    fn diagonal_gradient_sums_to_jam_marginal() {
        let i = inst(2.0);
        for phi in [0.0, 0.3, 0.7887] {
            let p = ReactivePoint::new([0.0, 0.0], [phi, phi]).unwrap();
            let g = grad_theta(&i, &p).unwrap();
            let m = nonsensing::jam_marginal(&i, phi).unwrap();
            assert!((g[0] + g[1] - m).abs() < 1e-8);
        }
    }

    #[test]
    fn dc_examples() {
        let i = inst(1.0);
        let p = ReactivePoint::new([0.0, 0.0], [0.0, 0.0]).unwrap();
        let (f, g) = dc_parts(&i, &p).unwrap();
        assert!((f - 2.0).abs() < 1e-15);
        let emax = quad::expectation(&i.dist, |x| (x * x).max(1.0), &[-1.0, 1.0]).unwrap();
        assert!((g - emax).abs() < 1e-10);

        let p = ReactivePoint::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert!((dc_parts(&i, &p).unwrap().0 - (2.0 + 1.0 - 2.0)).abs() < 1e-15);

        let i2 = inst(2.0);
        let row2 = ReactivePoint::new([0.7030, -0.4338], [0.0350, 0.1572]).unwrap();
        let (f, g) = dc_parts(&i2, &row2).unwrap();
        assert!((f - g - objective_jtilde(&i2, &row2).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn pga_examples() {
        assert_eq!(pga_step([0.9, 0.5], [2.0, 0.0], 0.1).unwrap(), [1.0, 0.5]);
        assert_eq!(pga_step([0.5, 0.5], [0.0, 0.0], 0.1).unwrap(), [0.5, 0.5]);
        let t = pga_step([0.05, 0.2], [-1.0, 1.0], 0.1).unwrap();
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 0.3).abs() < 1e-15);
        assert!(pga_step([0.5, 0.5], [1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn ccp_null_directions() {
        let i = inst(1.0);
        let x = ccp_step(&i, [0.4, -0.7], [0.0, 0.0]).unwrap();
        assert_eq!(x[1], 0.0);
        let x = ccp_step(&i, [0.4, -0.7], [1.0, 0.3]).unwrap();
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn ccp_descends_from_default_start() {
        let i = inst(1.0);
        let theta = TABLE_ROW_1.theta();
        let start = ReactivePoint::new([1.0, -1.0], theta).unwrap();
        let next = ReactivePoint::new(ccp_step(&i, start.xhat(), theta).unwrap(), theta).unwrap();
        assert!(objective_jtilde(&i, &next).unwrap() < objective_jtilde(&i, &start).unwrap());
    }

    #[test]
    fn lp_gap_matches_vertex_enumeration() {
        let cases = [([0.3, -0.2], [0.1, 0.7]), ([-1.0, 2.0], [0.0, 1.0]), ([0.0, 0.0], [0.4, 0.4])];
        for (q, t) in cases {
            let vertices = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
            let best = vertices
                .iter()
                .map(|v| q[0] * (v[0] - t[0]) + q[1] * (v[1] - t[1]))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((lp_gap(q, t) - best).abs() < 1e-15);
        }
    }

    #[test]
    fn certify_examples() {
        let i = inst(1.0);
        let p = ReactivePoint::new([0.0, 0.0], [0.5, 0.5]).unwrap();
        let c = certify_fne(&i, &p, 1e-5).unwrap();
        assert!(c.grad_norm < 1e-10);
        let bumped = ReactivePoint {
            xhat0: TABLE_ROW_1.xhat0 + 0.1,
            ..TABLE_ROW_1
        };
        let c = certify_fne(&i, &bumped, 1e-5).unwrap();
        assert!(!c.certified && c.grad_norm > 1e-5);
        assert!(certify_fne(&i, &p, 0.0).is_err());
    }

    #[test]
    fn rejects_out_of_box_theta() {
        assert!(ReactivePoint::new([0.0, 0.0], [1.1, 0.0]).is_err());
        assert!(ReactivePoint::new([f64::NAN, 0.0], [0.1, 0.0]).is_err());
    }

    #[test]
    fn schedules() {
        assert_eq!(StepSchedule::Constant(0.1).at(7), 0.1);
        assert!((StepSchedule::InverseSqrt(0.1).at(4) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn canonical_mirror() {
        let p = ReactivePoint::new([-0.5, 0.4], [0.1, 0.2]).unwrap();
        assert_eq!(p.canonical(), ReactivePoint::new([0.5, -0.4], [0.1, 0.2]).unwrap());
        assert_eq!(p.canonical().canonical(), p.canonical());
    }
}
