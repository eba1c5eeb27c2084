//! Kink-aware adaptive Gauss–Kronrod quadrature.
//!
//! Every expectation in the game integrates a pointwise min or max of
//! quadratics against the source density. Those integrands are smooth except
//! at a handful of breakpoints that are known in closed form, so the domain is
//! split at the breakpoints first and each piece is refined adaptively with the
//! 7-point Gauss / 15-point Kronrod pair.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dist::SourceDistribution;
use crate::error::{Error, Result};

/// Default absolute tolerance for every expectation in the crate.
pub const DEFAULT_TOL: f64 = 1e-10;

const MAX_SUBDIVISIONS: usize = 5000;

// Kronrod abscissae on [0, 1]; odd entries are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// An integrand together with the points where it may fail to be smooth.
#[derive(Clone)]
pub struct PiecewiseIntegrand<F> {
    evaluator: F,
    kinks: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl<F: Fn(f64) -> f64> PiecewiseIntegrand<F> {
    /// Builds an integrand on `[lower, upper]`. Kinks are sorted, deduplicated
    /// and clipped to the open domain; those outside carry no mass.
    pub fn new(evaluator: F, kinks: &[f64], lower: f64, upper: f64) -> Self {
        let mut kinks: Vec<f64> = kinks
            .iter()
            .copied()
            .filter(|k| k.is_finite() && *k > lower && *k < upper)
            .collect();
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        Self {
            evaluator,
            kinks,
            lower,
            upper,
        }
    }

    /// Symmetric domain `[-radius, radius]`.
    pub fn symmetric(evaluator: F, kinks: &[f64], radius: f64) -> Self {
        Self::new(evaluator, kinks, -radius, radius)
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Largest jump of the evaluator across any kink, probed at a relative
    /// offset of `1e-9`.
    pub fn max_kink_jump(&self) -> f64 {
        self.kinks
            .iter()
            .map(|&k| {
                let h = 1e-9 * k.abs().max(1.0);
                ((self.evaluator)(k - h) - (self.evaluator)(k + h)).abs()
            })
            .fold(0.0, f64::max)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::with_capacity(self.kinks.len() + 2);
        pts.push(self.lower);
        pts.extend_from_slice(&self.kinks);
        pts.push(self.upper);
        pts
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    /// False when the subdivision budget ran out before the error estimate
    /// fell below the requested tolerance.
    pub converged: bool,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn finite(x: f64, y: f64) -> Result<f64> {
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::NonFiniteIntegrand { abscissa: x })
    }
}

/// One application of the 15-point Kronrod rule. Returns `(value, error)`.
pub(crate) fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();

    let f_center = finite(center, f(center))?;
    let mut res_k = f_center * WGK[7];
    let mut res_g = f_center * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];

    for j in 0..7 {
        let dx = half * XGK[j];
        let (xl, xr) = (center - dx, center + dx);
        let fl = finite(xl, f(xl))?;
        let fr = finite(xr, f(xr))?;
        fv1[j] = fl;
        fv2[j] = fr;
        res_k += WGK[j] * (fl + fr);
        res_abs += WGK[j] * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (fl + fr);
        }
    }

    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let value = res_k * half;
    let err = rescale_error((res_k - res_g) * half, res_abs * abs_half, res_asc * abs_half);
    Ok((value, err))
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, breakpoints: &[f64], tol: f64) -> Result<Integral> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breakpoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (value, error) = gauss_kronrod_15(f, a, b)?;
        evaluations += 15;
        heap.push(Segment { a, b, value, error });
    }

    let mut subdivisions = 0;
    loop {
        let total_err: f64 = heap.iter().map(|s| s.error).sum();
        if total_err <= tol {
            break;
        }
        if subdivisions >= MAX_SUBDIVISIONS {
            return Ok(summarize(&heap, evaluations, false));
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            heap.push(worst);
            return Ok(summarize(&heap, evaluations, false));
        }
        let (v1, e1) = gauss_kronrod_15(f, worst.a, mid)?;
        let (v2, e2) = gauss_kronrod_15(f, mid, worst.b)?;
        evaluations += 30;
        subdivisions += 1;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
    Ok(summarize(&heap, evaluations, true))
}

fn summarize(heap: &BinaryHeap<Segment>, evaluations: usize, converged: bool) -> Integral {
    // Sum in domain order so the result does not depend on heap layout.
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    Integral {
        value: segs.iter().map(|s| s.value).sum(),
        error_estimate: segs.iter().map(|s| s.error).sum(),
        evaluations,
        converged,
    }
}

/// Integrates `g` over its domain, splitting at every kink before refining.
pub fn integrate<F: Fn(f64) -> f64>(g: &PiecewiseIntegrand<F>, tol: f64) -> Result<Integral> {
    adaptive(&g.evaluator, &g.breakpoints(), tol)
}

/// Same adaptive scheme but ignoring the kinks. Used to measure what the
/// split buys.
pub fn integrate_unsplit<F: Fn(f64) -> f64>(
    g: &PiecewiseIntegrand<F>,
    tol: f64,
) -> Result<Integral> {
    adaptive(&g.evaluator, &[g.lower, g.upper], tol)
}

/// `E[g(X)]` over the truncated support of `dist`.
pub fn expectation<G: Fn(f64) -> f64>(
    dist: &SourceDistribution,
    g: G,
    kinks: &[f64],
) -> Result<f64> {
    expectation_with_tol(dist, g, kinks, DEFAULT_TOL)
}

pub fn expectation_with_tol<G: Fn(f64) -> f64>(
    dist: &SourceDistribution,
    g: G,
    kinks: &[f64],
    tol: f64,
) -> Result<f64> {
    let (lo, hi) = dist.support();
    if lo == -hi {
        // Fold onto [0, R]. Exact for any density, and an odd integrand
        // against an even density cancels pointwise instead of to round-off.
        let folded: Vec<f64> = kinks.iter().map(|k| k.abs()).collect();
        let integrand = PiecewiseIntegrand::new(
            |x| g(x) * dist.density(x) + g(-x) * dist.density(-x),
            &folded,
            0.0,
            hi,
        );
        return integrate(&integrand, tol).map(|r| r.value);
    }
    let integrand = PiecewiseIntegrand::new(|x| g(x) * dist.density(x), kinks, lo, hi);
    integrate(&integrand, tol).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * f(a) + inner + 0.5 * f(b))
    }

    #[test]
    fn normal_density_integrates_to_one() {
        let g = PiecewiseIntegrand::symmetric(std_normal, &[], 10.0);
        let r = integrate(&g, DEFAULT_TOL).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "{}", r.value);
        assert!(r.converged);
        assert!(r.error_estimate <= DEFAULT_TOL);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let g = PiecewiseIntegrand::symmetric(|x| x * std_normal(x), &[], 10.0);
        assert!(integrate(&g, DEFAULT_TOL).unwrap().value.abs() < 1e-10);
    }

    #[test]
    fn capped_square_matches_trapezoid_oracle() {
        let h = |x: f64| (x * x).min(1.0) * std_normal(x);
        // Trapezoid on each smooth piece, 2000 panels total.
        let oracle = trapezoid(h, -10.0, -1.0, 600)
            + trapezoid(h, -1.0, 1.0, 800)
            + trapezoid(h, 1.0, 10.0, 600);
        let g = PiecewiseIntegrand::symmetric(h, &[-1.0, 1.0], 10.0);
        let v = integrate(&g, DEFAULT_TOL).unwrap().value;
        assert!((v - oracle).abs() < 1e-3);
        assert!((v - 0.5160).abs() < 1e-3, "{v}");
        assert!(g.max_kink_jump() < 1e-8);
    }

    #[test]
    fn splitting_saves_evaluations() {
        let h = |x: f64| (x * x).min(1.0) * std_normal(x);
        let g = PiecewiseIntegrand::symmetric(h, &[-1.0, 1.0], 10.0);
        let split = integrate(&g, DEFAULT_TOL).unwrap();
        let unsplit = integrate_unsplit(&g, DEFAULT_TOL).unwrap();
        assert!((split.value - unsplit.value).abs() < 1e-6);
        assert!(split.evaluations < unsplit.evaluations);
    }

    #[test]
    fn duplicate_and_outside_kinks_are_harmless() {
        let h = |x: f64| (x * x).min(2.0) * std_normal(x);
        let r2 = 2f64.sqrt();
        let a = integrate(&PiecewiseIntegrand::symmetric(h, &[-r2, r2], 10.0), 1e-10).unwrap();
        let b = integrate(
            &PiecewiseIntegrand::symmetric(h, &[r2, -r2, r2, 50.0, -11.0], 10.0),
            1e-10,
        )
        .unwrap();
        assert!((a.value - b.value).abs() <= 1e-12);
    }

    #[test]
    fn non_finite_integrand_reports_abscissa() {
        let g = PiecewiseIntegrand::new(|x: f64| 1.0 / x, &[], -1.0, 1.0);
        match integrate(&g, 1e-8) {
            Err(Error::NonFiniteIntegrand { abscissa }) => assert_eq!(abscissa, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let g = PiecewiseIntegrand::new(|x: f64| x, &[], 0.0, 1.0);
        assert!(integrate(&g, 0.0).is_err());
    }

    #[test]
    fn linearity() {
        let g1 = |x: f64| (x * x).min(1.0) * std_normal(x);
        let g2 = |x: f64| (1.0 - x * x).max(0.0) * std_normal(x);
        let k = [-1.0, 1.0];
        let i1 = integrate(&PiecewiseIntegrand::symmetric(g1, &k, 10.0), 1e-12).unwrap().value;
        let i2 = integrate(&PiecewiseIntegrand::symmetric(g2, &k, 10.0), 1e-12).unwrap().value;
        let both = PiecewiseIntegrand::symmetric(|x| 2.5 * g1(x) - 0.7 * g2(x), &k, 10.0);
        let i12 = integrate(&both, 1e-12).unwrap().value;
        assert!((i12 - 2.5 * i1 + 0.7 * i2).abs() <= 1e-9);
    }
}
