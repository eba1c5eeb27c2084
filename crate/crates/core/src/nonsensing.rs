//! Saddle points against a jammer that cannot sense the channel.
//!
//! The jammer blocks with a fixed probability `phi`, independently of the
//! sensor's decision. The coordinator's best response is a symmetric threshold
//! policy and, for symmetric unimodal sources, both representation symbols sit
//! at the mean. What remains is a scalar concave problem in `phi`, solved by
//! locating the root of its derivative.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::SourceDistribution;
use crate::error::{Error, Result};
use crate::quad;

/// A source together with the per-transmission cost `c` and per-jam cost `d`.
#[derive(Debug, Clone)]
pub struct GameInstance {
    pub dist: SourceDistribution,
    pub c: f64,
    pub d: f64,
}

impl GameInstance {
    pub fn new(dist: SourceDistribution, c: f64, d: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("communication cost must be >= 0, got {c}")));
        }
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::Domain(format!("jamming cost must be >= 0, got {d}")));
        }
        Ok(Self { dist, c, d })
    }

    /// Gaussian source with the given variance.
    pub fn gaussian(variance: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(SourceDistribution::gaussian(variance)?, c, d)
    }

    /// `E[(X - a)^2]` for the zero-mean source.
    pub(crate) fn mse_about(&self, a: f64) -> f64 {
        self.dist.variance() + a * a
    }
}

/// Transmission rule of the form "transmit iff `|x - center| >= radius`".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Band { center: f64, radius: f64 },
    NeverTransmit,
}

impl ThresholdPolicy {
    pub fn transmits(&self, x: f64) -> bool {
        match *self {
            ThresholdPolicy::Band { center, radius } => (x - center).abs() >= radius,
            ThresholdPolicy::NeverTransmit => false,
        }
    }

    /// The open interval on which the sensor stays silent, if bounded.
    pub fn silent_interval(&self) -> Option<(f64, f64)> {
        match *self {
            ThresholdPolicy::Band { center, radius } => Some((center - radius, center + radius)),
            ThresholdPolicy::NeverTransmit => None,
        }
    }

    fn kinks(&self) -> Vec<f64> {
        self.silent_interval().map(|(a, b)| vec![a, b]).unwrap_or_default()
    }
}

fn check_phi(phi: f64, allow_one: bool) -> Result<()> {
    let ok = if allow_one {
        (0.0..=1.0).contains(&phi)
    } else {
        (0.0..1.0).contains(&phi)
    };
    if ok {
        Ok(())
    } else {
        let range = if allow_one { "[0, 1]" } else { "[0, 1)" };
        Err(Error::Domain(format!("jamming probability must lie in {range}, got {phi}")))
    }
}

/// Best transmission rule against jamming probability `phi` when the receiver
/// uses `xhat0` on an idle channel: transmit iff `(1 - phi)(x - xhat0)^2 >= c`.
/// At `phi = 1` every transmission is blocked and the rule degenerates to
/// never transmitting.
pub fn threshold_policy(c: f64, phi: f64, xhat0: f64) -> Result<ThresholdPolicy> {
    check_phi(phi, true)?;
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("communication cost must be >= 0, got {c}")));
    }
    if phi == 1.0 {
        return Ok(ThresholdPolicy::NeverTransmit);
    }
    Ok(ThresholdPolicy::Band {
        center: xhat0,
        radius: (c / (1.0 - phi)).sqrt(),
    })
}

/// Cost when the coordinator best-responds in its transmission rule:
/// `E[min{(1 - phi)(X - xhat0)^2, c}] + phi (E[(X - xhat1)^2] - d)`.
pub fn objective(inst: &GameInstance, phi: f64, xhat: [f64; 2]) -> Result<f64> {
    check_phi(phi, true)?;
    let policy = threshold_policy(inst.c, phi, xhat[0])?;
    let silent_part = if phi == 1.0 {
        0.0
    } else {
        let (a, c) = (1.0 - phi, inst.c);
        quad::expectation(
            &inst.dist,
            |x| (a * (x - xhat[0]).powi(2)).min(c),
            &policy.kinks(),
        )?
    };
    Ok(silent_part + phi * (inst.mse_about(xhat[1]) - inst.d))
}

/// Cost of an arbitrary (not necessarily best-responding) threshold rule:
/// `E[(X - Xhat)^2] + c P(U = 1) - d phi`.
pub fn objective_with_policy(
    inst: &GameInstance,
    policy: &ThresholdPolicy,
    xhat: [f64; 2],
    phi: f64,
) -> Result<f64> {
    check_phi(phi, true)?;
    let (a, c) = (1.0 - phi, inst.c);
    let coordinator = quad::expectation(
        &inst.dist,
        |x| {
            if policy.transmits(x) {
                c
            } else {
                a * (x - xhat[0]).powi(2)
            }
        },
        &policy.kinks(),
    )?;
    Ok(coordinator + phi * (inst.mse_about(xhat[1]) - inst.d))
}

/// Derivative of the jammer's objective in `phi`:
/// `M(sqrt(c / (1 - phi))) - d`, with `M` the tail second moment.
pub fn jam_marginal(inst: &GameInstance, phi: f64) -> Result<f64> {
    check_phi(phi, false)?;
    let t = (inst.c / (1.0 - phi)).sqrt();
    Ok(inst.dist.tail_second_moment(t)? - inst.d)
}

/// Derivative of [`jam_marginal`] in `phi`, by the chain rule.
pub fn jam_marginal_slope(inst: &GameInstance, phi: f64) -> Result<f64> {
    check_phi(phi, false)?;
    let t = (inst.c / (1.0 - phi)).sqrt();
    Ok(inst.dist.tail_second_moment_derivative(t) * t / (2.0 * (1.0 - phi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NoJam,
    InteriorJam,
}

/// Saddle point of the game against the non-sensing jammer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonSensingEquilibrium {
    pub phi_star: f64,
    pub xhat0: f64,
    pub xhat1: f64,
    /// Transmit iff `|x| > threshold`.
    pub threshold: f64,
    pub value: f64,
    pub regime: Regime,
}

impl NonSensingEquilibrium {
    pub fn xhat(&self) -> [f64; 2] {
        [self.xhat0, self.xhat1]
    }

    pub fn policy(&self) -> ThresholdPolicy {
        ThresholdPolicy::Band {
            center: self.xhat0,
            radius: self.threshold,
        }
    }
}

const BISECTION_WIDTH: f64 = 1e-10;
const MIN_GAP_TO_ONE: f64 = 1e-12;

/// Computes the saddle point. Refuses sources that are not symmetric and
/// unimodal, since the closed form relies on both.
pub fn solve_equilibrium(inst: &GameInstance) -> Result<NonSensingEquilibrium> {
    let report = inst.dist.check_symmetric_unimodal();
    if !report.is_admissible() {
        return Err(Error::InvalidDistribution(format!(
            "source is not symmetric and unimodal:\n{report}"
        )));
    }
    solve_admissible(inst)
}

/// [`solve_equilibrium`] without the admissibility check, for callers that
/// already validated the source (sweeps).
pub fn solve_admissible(inst: &GameInstance) -> Result<NonSensingEquilibrium> {
    let g0 = jam_marginal(inst, 0.0)?;
    let (phi_star, regime) = if g0 < 0.0 {
        (0.0, Regime::NoJam)
    } else if g0 == 0.0 {
        (0.0, Regime::InteriorJam)
    } else {
        (find_root(inst)?, Regime::InteriorJam)
    };
    Ok(NonSensingEquilibrium {
        phi_star,
        xhat0: 0.0,
        xhat1: 0.0,
        threshold: (inst.c / (1.0 - phi_star)).sqrt(),
        value: objective(inst, phi_star, [0.0, 0.0])?,
        regime,
    })
}

fn find_root(inst: &GameInstance) -> Result<f64> {
    let mut gap = 0.5;
    let mut hi = 1.0 - gap;
    let mut g_hi = jam_marginal(inst, hi)?;
    while g_hi >= 0.0 {
        gap *= 0.5;
        if gap < MIN_GAP_TO_ONE {
            return Err(Error::RegimeBoundary {
                phi: hi,
                marginal: g_hi,
            });
        }
        hi = 1.0 - gap;
        g_hi = jam_marginal(inst, hi)?;
    }
    let mut lo = if gap < 0.5 { 1.0 - 2.0 * gap } else { 0.0 };

    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if jam_marginal(inst, mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mid = 0.5 * (lo + hi);
    let slope = jam_marginal_slope(inst, mid)?;
    if slope < 0.0 {
        let polished = mid - jam_marginal(inst, mid)? / slope;
        if (lo..=hi).contains(&polished) {
            return Ok(polished);
        }
    }
    Ok(mid)
}

/// Grid used to probe unilateral deviations from a candidate saddle point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationGrid {
    pub points: usize,
    /// Representation-symbol deviations span `[-span, span]` standard deviations.
    pub span_sd: f64,
    pub tol: f64,
}

impl Default for DeviationGrid {
    fn default() -> Self {
        Self {
            points: 101,
            span_sd: 3.0,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deviation {
    /// Jammer moves `phi`; coordinator keeps its policies.
    JamProbability,
    /// Coordinator moves `xhat0` and re-optimizes its threshold.
    IdleSymbol,
    /// Coordinator moves `xhat1` and re-optimizes its threshold.
    BlockedSymbol,
    /// Coordinator moves its threshold radius with symbols fixed.
    ThresholdRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleViolation {
    pub deviation: Deviation,
    pub at: f64,
    /// How far the deviation improves on the reference value for the deviator.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport {
    /// `J((gamma*, eta*), phi*)` recomputed from the candidate's policies.
    pub reference_value: f64,
    pub tol: f64,
    /// Best jammer gain over the grid (negative when every deviation loses).
    pub jammer_worst_excess: f64,
    /// `phi` on the grid that maximizes the jammer's payoff.
    pub jammer_argmax: f64,
    /// Best coordinator gain over the grid.
    pub coordinator_worst_excess: f64,
    pub violations: Vec<SaddleViolation>,
}

impl SaddleReport {
    pub fn is_saddle(&self) -> bool {
        self.violations.is_empty()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Brute-force check of both saddle inequalities on deviation grids.
pub fn verify_saddle(
    inst: &GameInstance,
    eq: &NonSensingEquilibrium,
    grid: &DeviationGrid,
) -> Result<SaddleReport> {
    let policy = threshold_policy(inst.c, eq.phi_star, eq.xhat0)?;
    let reference = objective_with_policy(inst, &policy, eq.xhat(), eq.phi_star)?;
    let sd = inst.dist.std_dev();

    let jam_grid = linspace(0.0, 1.0, grid.points);
    let jammer: Vec<(f64, f64)> = jam_grid
        .par_iter()
        .map(|&phi| Ok((phi, objective_with_policy(inst, &policy, eq.xhat(), phi)? - reference)))
        .collect::<Result<_>>()?;

    let sym_grid = linspace(-grid.span_sd * sd, grid.span_sd * sd, grid.points);
    let radius_hi = 3.0 * eq.threshold.max(sd);
    let radius_grid = linspace(0.0, radius_hi, grid.points);
    let mut coordinator_cases: Vec<(Deviation, f64)> = Vec::new();
    coordinator_cases.extend(sym_grid.iter().map(|&v| (Deviation::IdleSymbol, v)));
    coordinator_cases.extend(sym_grid.iter().map(|&v| (Deviation::BlockedSymbol, v)));
    coordinator_cases.extend(radius_grid.iter().map(|&v| (Deviation::ThresholdRadius, v)));
    let coordinator: Vec<(Deviation, f64, f64)> = coordinator_cases
        .par_iter()
        .map(|&(dev, v)| {
            let cost = match dev {
                Deviation::IdleSymbol => objective(inst, eq.phi_star, [v, eq.xhat1])?,
                Deviation::BlockedSymbol => objective(inst, eq.phi_star, [eq.xhat0, v])?,
                _ => {
                    let p = ThresholdPolicy::Band {
                        center: eq.xhat0,
                        radius: v,
                    };
                    objective_with_policy(inst, &p, eq.xhat(), eq.phi_star)?
                }
            };
            Ok((dev, v, reference - cost))
        })
        .collect::<Result<_>>()?;

    let mut violations = Vec::new();
    let (mut jammer_worst, mut jammer_argmax) = (f64::NEG_INFINITY, 0.0);
    for &(phi, gain) in &jammer {
        if gain > jammer_worst {
            jammer_worst = gain;
            jammer_argmax = phi;
        }
        if gain > grid.tol {
            violations.push(SaddleViolation {
                deviation: Deviation::JamProbability,
                at: phi,
                excess: gain,
            });
        }
    }
    let mut coordinator_worst = f64::NEG_INFINITY;
    for &(dev, v, gain) in &coordinator {
        coordinator_worst = coordinator_worst.max(gain);
        if gain > grid.tol {
            violations.push(SaddleViolation {
                deviation: dev,
                at: v,
                excess: gain,
            });
        }
    }

    Ok(SaddleReport {
        reference_value: reference,
        tol: grid.tol,
        jammer_worst_excess: jammer_worst,
        jammer_argmax,
        coordinator_worst_excess: coordinator_worst,
        violations,
    })
}

/// Grid argmin over `xhat0 in [-span, span]` (step `step`) of the
/// best-response silent-branch cost `E[min{(1 - phi)(X - xhat0)^2, c}]`.
pub fn idle_symbol_grid_argmin(inst: &GameInstance, phi: f64, span: f64, step: f64) -> Result<f64> {
    let n = (2.0 * span / step).round() as i64;
    let values: Vec<(f64, f64)> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let x0 = -span + i as f64 * step;
            // The blocked-symbol term does not depend on xhat0.
            Ok((x0, objective(inst, phi, [x0, 0.0])?))
        })
        .collect::<Result<_>>()?;
    Ok(values
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(x, _)| x)
        .unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(var: f64) -> GameInstance {
        GameInstance::gaussian(var, 1.0, 1.0).unwrap()
    }

    #[test]
    fn threshold_examples() {
        let p = threshold_policy(1.0, 0.0, 0.0).unwrap();
        assert!(p.transmits(2.0));
        let p = threshold_policy(1.0, 0.7887, 0.0).unwrap();
        // radius = sqrt(1 / 0.2113) = 2.1755
        assert!(!p.transmits(2.0));
        assert!(p.transmits(2.2) && p.transmits(-2.2));
        let p = threshold_policy(0.0, 0.4, 0.3).unwrap();
        assert!(p.transmits(0.31) && p.transmits(-5.0) && p.transmits(0.3));
        assert_eq!(threshold_policy(1.0, 1.0, 0.0).unwrap(), ThresholdPolicy::NeverTransmit);
        assert!(threshold_policy(1.0, 1.2, 0.0).is_err());
    }

    #[test]
    fn objective_examples() {
        let v = objective(&inst(1.0), 0.0, [0.0, 0.0]).unwrap();
        assert!((v - 0.5160).abs() < 1e-3, "{v}");
        for var in [1.0, 2.0, 3.5] {
            let i = inst(var);
            assert_eq!(objective(&i, 1.0, [0.7, 0.0]).unwrap(), var - 1.0);
        }
    }

    #[test]
    fn best_response_objective_matches_policy_objective() {
        let i = inst(2.0);
        for phi in [0.0, 0.3, 0.9] {
            let x0 = 0.4;
            let p = threshold_policy(i.c, phi, x0).unwrap();
            let a = objective(&i, phi, [x0, -0.2]).unwrap();
            let b = objective_with_policy(&i, &p, [x0, -0.2], phi).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn jam_marginal_examples() {
        assert!((jam_marginal(&inst(1.0), 0.0).unwrap() + 0.1988).abs() < 1e-3);
        assert!((jam_marginal(&inst(2.0), 0.0).unwrap() - 0.8378).abs() < 1e-3);
        assert!(jam_marginal(&inst(2.0), 0.7887).unwrap().abs() < 1e-3);
        assert!(jam_marginal(&inst(2.0), 1.0).is_err());
        assert!((jam_marginal(&inst(2.0), 1.0 - 1e-9).unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn jam_marginal_slope_matches_difference() {
        let i = inst(2.0);
        let h = 1e-6;
        for phi in [0.1, 0.5, 0.8] {
            let fd = (jam_marginal(&i, phi + h).unwrap() - jam_marginal(&i, phi - h).unwrap()) / (2.0 * h);
            assert!((fd - jam_marginal_slope(&i, phi).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn solver_examples() {
        let e = solve_equilibrium(&inst(1.0)).unwrap();
        assert_eq!(e.phi_star, 0.0);
        assert_eq!(e.regime, Regime::NoJam);
        let e = solve_equilibrium(&inst(2.0)).unwrap();
        assert!((e.phi_star - 0.7887).abs() < 1e-3, "{}", e.phi_star);
        assert_eq!(e.regime, Regime::InteriorJam);
        assert!(jam_marginal(&inst(2.0), e.phi_star).unwrap().abs() < 1e-8);
        assert!((e.threshold - (1.0 / (1.0 - e.phi_star)).sqrt()).abs() < 1e-15);
        let v = objective(&inst(2.0), 0.7887, [0.0, 0.0]).unwrap();
        assert!((v - e.value).abs() < 1e-6 + 1e-3 * 0.0, "{v} vs {}", e.value);
        let e = solve_equilibrium(&GameInstance::gaussian(1.0, 1.0, 100.0).unwrap()).unwrap();
        assert_eq!(e.phi_star, 0.0);
    }

    #[test]
    fn zero_cost_regimes() {
        // c = 0 and d <= variance: the jammer wants phi -> 1.
        let i = GameInstance::gaussian(1.0, 0.0, 0.5).unwrap();
        assert!(matches!(solve_equilibrium(&i), Err(Error::RegimeBoundary { .. })));
        // c = 0 and d > variance: never worth jamming.
        let i = GameInstance::gaussian(1.0, 0.0, 1.5).unwrap();
        assert_eq!(solve_equilibrium(&i).unwrap().regime, Regime::NoJam);
    }

    #[test]
    fn tie_is_interior() {
        let m = SourceDistribution::gaussian(1.0).unwrap().tail_second_moment(1.0).unwrap();
        let e = solve_equilibrium(&GameInstance::gaussian(1.0, 1.0, m).unwrap()).unwrap();
        assert_eq!(e.regime, Regime::InteriorJam);
        assert_eq!(e.phi_star, 0.0);
    }

    #[test]
    fn regime_boundary_is_continuous() {
        let m = SourceDistribution::gaussian(1.0).unwrap().tail_second_moment(1.0).unwrap();
        let e = solve_equilibrium(&GameInstance::gaussian(1.0, 1.0, m * (1.0 + 1e-3)).unwrap()).unwrap();
        assert!(e.phi_star.abs() <= 1e-3, "{}", e.phi_star);
        // Just below the boundary phi* grows linearly: dG/dphi(0) = -t^2 f(t) at t = 1.
        let f1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        for eps in [1e-4, 1e-3] {
            let e = solve_equilibrium(&GameInstance::gaussian(1.0, 1.0, m * (1.0 - eps)).unwrap()).unwrap();
            let lin = m * eps / f1;
            assert!((e.phi_star - lin).abs() <= 0.05 * lin, "{} vs {lin}", e.phi_star);
        }
    }

    #[test]
    fn refuses_bimodal_source() {
        let xs: Vec<f64> = (0..=1200).map(|i| -6.0 + i as f64 * 0.01).collect();
        let n = |x: f64| (-0.5 * x * x).exp();
        let ys = xs.iter().map(|&x| n(x - 2.5) + n(x + 2.5)).collect();
        let dist = SourceDistribution::tabulated(xs, ys).unwrap();
        let i = GameInstance::new(dist, 1.0, 1.0).unwrap();
        assert!(matches!(solve_equilibrium(&i), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn saddle_holds_and_perturbation_is_caught() {
        let i = inst(2.0);
        let e = solve_equilibrium(&i).unwrap();
        let r = verify_saddle(&i, &e, &DeviationGrid::default()).unwrap();
        assert!(r.is_saddle(), "{:?}", r.violations.first());

        let bad = NonSensingEquilibrium {
            phi_star: e.phi_star + 0.1,
            threshold: (1.0 / (1.0 - e.phi_star - 0.1)).sqrt(),
            ..e
        };
        let r = verify_saddle(&i, &bad, &DeviationGrid::default()).unwrap();
        assert!(r.violations.iter().any(|v| v.deviation == Deviation::JamProbability));
    }

    #[test]
    fn no_jam_curve_peaks_at_zero() {
        let i = inst(1.0);
        let e = solve_equilibrium(&i).unwrap();
        let r = verify_saddle(&i, &e, &DeviationGrid::default()).unwrap();
        assert!(r.is_saddle());
        assert_eq!(r.jammer_argmax, 0.0);
    }

    #[test]
    fn rejects_negative_costs() {
        assert!(GameInstance::gaussian(1.0, -1.0, 1.0).is_err());
        assert!(GameInstance::gaussian(1.0, 1.0, f64::NAN).is_err());
    }
}
