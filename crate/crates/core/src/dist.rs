//! Symmetric, unimodal, zero-mean source densities.

use std::f64::consts::{PI, SQRT_2};
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::quad::{self, PiecewiseIntegrand};

/// Draws per random stream. Sampling and simulation key one ChaCha stream to
/// each block of this many consecutive draw indices, so output does not depend
/// on how blocks are scheduled across threads.
pub const STREAM_BLOCK: usize = 4096;

pub(crate) fn stream_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

/// Effective Gaussian support half-width, in standard deviations.
pub const GAUSSIAN_TRUNCATION_SCALES: f64 = 10.0;
/// Effective Laplace support half-width, in units of `b`. The Laplace tail
/// decays like `exp(-x/b)`, so `10 b` would leave 4.5e-5 of the mass outside.
pub const LAPLACE_TRUNCATION_SCALES: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Laplace,
    CustomTabulated,
}

/// Monotone cubic (Fritsch–Carlson) interpolant of the log-density.
#[derive(Debug)]
struct Table {
    xs: Vec<f64>,
    logs: Vec<f64>,
    slopes: Vec<f64>,
    log_norm: f64,
    /// Normalized cumulative mass at each node.
    cum: Vec<f64>,
}

impl Table {
    fn build(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidDistribution("x and f(x) columns differ in length".into()));
        }
        if xs.len() < 3 {
            return Err(Error::InvalidDistribution(
                "tabulated density needs at least 3 points".into(),
            ));
        }
        if let Some(w) = xs.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDistribution(format!(
                "x column must be strictly increasing (at x = {})",
                w[1]
            )));
        }
        if let Some((x, y)) = xs.iter().zip(&ys).find(|(x, y)| !(x.is_finite() && **y > 0.0 && y.is_finite())) {
            return Err(Error::InvalidDistribution(format!(
                "density must be finite and positive on the grid (f({x}) = {y})"
            )));
        }
        let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        let slopes = pchip_slopes(&xs, &logs);
        let mut table = Table {
            xs,
            logs,
            slopes,
            log_norm: 0.0,
            cum: Vec::new(),
        };

        let mut cum = Vec::with_capacity(table.xs.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in table.xs.windows(2) {
            let g = PiecewiseIntegrand::new(|x| table.eval(x), &[], w[0], w[1]);
            acc += quad::integrate(&g, 1e-15)?.value;
            cum.push(acc);
        }
        table.log_norm = acc.ln();
        for c in cum.iter_mut() {
            *c /= acc;
        }
        table.cum = cum;
        Ok(table)
    }

    fn cell(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&v| v <= x);
        i.clamp(1, self.xs.len() - 1) - 1
    }

    /// Unnormalized density.
    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.cell(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        (h00 * self.logs[i]
            + h10 * h * self.slopes[i]
            + h01 * self.logs[i + 1]
            + h11 * h * self.slopes[i + 1])
            .exp()
    }

    fn density(&self, x: f64) -> f64 {
        let v = self.eval(x);
        if v == 0.0 {
            0.0
        } else {
            (v.ln() - self.log_norm).exp()
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let i = self.cell(x);
        let (v, _) = quad::gauss_kronrod_15(&|s| self.density(s), self.xs[i], x)
            .expect("interpolated density is finite");
        (self.cum[i] + v).clamp(0.0, 1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c <= u).clamp(1, self.xs.len() - 1) - 1;
        let (mut lo, mut hi) = (self.xs[i], self.xs[i + 1]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

fn pchip_end(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// A zero-mean source density `f` of the sensor observation `X`.
#[derive(Debug, Clone)]
pub struct SourceDistribution {
    family: Family,
    scale: f64,
    variance: f64,
    truncation_radius: f64,
    table: Option<Arc<Table>>,
}

impl SourceDistribution {
    /// Gaussian with mean zero and the given variance.
    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "Gaussian variance must be positive, got {variance}"
            )));
        }
        let scale = variance.sqrt();
        Ok(Self {
            family: Family::Gaussian,
            scale,
            variance,
            truncation_radius: GAUSSIAN_TRUNCATION_SCALES * scale,
            table: None,
        })
    }

    /// Laplace with mean zero and scale `b` (variance `2 b^2`).
    pub fn laplace(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "Laplace scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            family: Family::Laplace,
            scale,
            variance: 2.0 * scale * scale,
            truncation_radius: LAPLACE_TRUNCATION_SCALES * scale,
            table: None,
        })
    }

    /// Laplace with mean zero and the given variance.
    pub fn laplace_with_variance(variance: f64) -> Result<Self> {
        Self::laplace((variance / 2.0).sqrt())
    }

    /// Density tabulated on a strictly increasing grid, interpolated with a
    /// monotone cubic in log-density and renormalized to unit mass. The grid
    /// ends define the support.
    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let table = Table::build(xs, ys)?;
        let lo = table.xs[0];
        let hi = *table.xs.last().unwrap();
        let mut dist = Self {
            family: Family::CustomTabulated,
            scale: 1.0,
            variance: 1.0,
            truncation_radius: lo.abs().max(hi.abs()),
            table: Some(Arc::new(table)),
        };
        let mean = quad::expectation(&dist, |x| x, &[])?;
        let second = quad::expectation(&dist, |x| x * x, &[])?;
        let sd = second.sqrt();
        if mean.abs() > 1e-6 * sd.max(1.0) {
            return Err(Error::InvalidDistribution(format!(
                "tabulated density has mean {mean:e}; only zero-mean sources are supported"
            )));
        }
        dist.variance = second;
        dist.scale = sd;
        Ok(dist)
    }

    /// Reads a two-column `x,f(x)` CSV with an optional header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidDistribution(format!("csv: {e}")))?;
            if rec.len() < 2 {
                return Err(Error::InvalidDistribution(format!(
                    "csv row {} has {} column(s), expected 2",
                    line + 1,
                    rec.len()
                )));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::InvalidDistribution(format!(
                        "csv row {} is not numeric: {:?}",
                        line + 1,
                        rec
                    )))
                }
            }
        }
        Self::tabulated(xs, ys)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::InvalidDistribution(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::from_csv_reader(file)
    }

    /// Overrides the half-width used for numerical integration. Has no effect
    /// on the support of a tabulated density.
    pub fn with_truncation_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("truncation radius must be positive, got {radius}")));
        }
        if self.table.is_none() {
            self.truncation_radius = radius;
        }
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// `sigma` for Gaussian, `b` for Laplace, the standard deviation for a table.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    /// Integration domain.
    pub fn support(&self) -> (f64, f64) {
        match &self.table {
            Some(t) => (t.xs[0], *t.xs.last().unwrap()),
            None => (-self.truncation_radius, self.truncation_radius),
        }
    }

    /// Density without argument checking.
    pub fn density(&self, x: f64) -> f64 {
        match self.family {
            Family::Gaussian => {
                let z = x / self.scale;
                (-0.5 * z * z).exp() / (self.scale * (2.0 * PI).sqrt())
            }
            Family::Laplace => (-x.abs() / self.scale).exp() / (2.0 * self.scale),
            Family::CustomTabulated => self.table.as_ref().unwrap().density(x),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("pdf argument must be finite, got {x}")));
        }
        Ok(self.density(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            Family::Gaussian => 0.5 * erfc(-x / (self.scale * SQRT_2)),
            Family::Laplace => {
                if x < 0.0 {
                    0.5 * (x / self.scale).exp()
                } else {
                    1.0 - 0.5 * (-x / self.scale).exp()
                }
            }
            Family::CustomTabulated => self.table.as_ref().unwrap().cdf(x),
        }
    }

    /// `M(t) = 2 ∫_t^∞ x² f(x) dx`, the second moment carried by `|X| > t`.
    pub fn tail_second_moment(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("tail threshold must be nonnegative, got {t}")));
        }
        Ok(match self.family {
            Family::Gaussian => {
                let z = t / self.scale;
                let phi = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
                let q = 0.5 * erfc(z / SQRT_2);
                2.0 * self.variance * (z * phi + q)
            }
            Family::Laplace => {
                let b = self.scale;
                (-t / b).exp() * (t * t + 2.0 * b * t + 2.0 * b * b)
            }
            Family::CustomTabulated => self.tail_second_moment_quadrature(t)?,
        })
    }

    /// `M(t)` by direct quadrature, for any family.
    pub fn tail_second_moment_quadrature(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("tail threshold must be nonnegative, got {t}")));
        }
        let (_, hi) = self.support();
        if t >= hi {
            return Ok(0.0);
        }
        let g = PiecewiseIntegrand::new(|x| x * x * self.density(x), &[], t, hi);
        Ok(2.0 * quad::integrate(&g, 1e-13)?.value)
    }

    /// `dM/dt = -2 t² f(t)`.
    pub fn tail_second_moment_derivative(&self, t: f64) -> f64 {
        -2.0 * t * t * self.density(t)
    }

    /// One draw using the caller's generator.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Gaussian => self.scale * rng.sample::<f64, _>(StandardNormal),
            Family::Laplace => loop {
                let u: f64 = rng.random::<f64>() - 0.5;
                let r = 1.0 - 2.0 * u.abs();
                if r > 0.0 {
                    break -self.scale * u.signum() * r.ln();
                }
            },
            Family::CustomTabulated => {
                let u: f64 = rng.random();
                self.table.as_ref().unwrap().quantile(u)
            }
        }
    }

    /// `n` i.i.d. draws, reproducible for a fixed seed.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        let blocks = n.div_ceil(STREAM_BLOCK);
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed, b);
                let len = STREAM_BLOCK.min(n - b * STREAM_BLOCK);
                (0..len).map(|_| self.draw(&mut rng)).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .concat()
    }

    /// Checks symmetry, unimodality, positivity and normalization on a grid
    /// over the truncated support.
    pub fn check_symmetric_unimodal(&self) -> ValidationReport {
        const GRID: usize = 2001;
        let r = self.truncation_radius;
        let mut report = ValidationReport::default();
        let grid: Vec<f64> = (0..GRID).map(|i| r * i as f64 / (GRID - 1) as f64).collect();

        for &t in &grid {
            let (p, m) = (self.density(t), self.density(-t));
            let gap = (p - m).abs();
            if gap > 1e-12 {
                report.record(InvariantKind::Symmetry, t, gap);
            }
            if t < r && (p <= 0.0 || m <= 0.0) {
                report.record(InvariantKind::Positivity, t, p.min(m));
            }
        }
        for w in grid.windows(2) {
            let (a, b) = (self.density(w[0]), self.density(w[1]));
            let rise = b - a;
            if rise > 1e-14 * a.max(1e-300) {
                report.record(InvariantKind::Unimodality, w[0], rise);
            }
        }
        let (lo, hi) = self.support();
        let g = PiecewiseIntegrand::new(|x| self.density(x), &[], lo.max(-r), hi.min(r));
        match quad::integrate(&g, 1e-13) {
            Ok(mass) if mass.value >= 1.0 - 1e-8 && mass.value <= 1.0 + 1e-10 => {}
            Ok(mass) => report.record(InvariantKind::Normalization, r, mass.value),
            Err(_) => report.record(InvariantKind::Normalization, r, f64::NAN),
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantKind {
    Symmetry,
    Unimodality,
    Positivity,
    Normalization,
}

/// One violated invariant: where it first shows up on the grid, where it is
/// worst, and how many grid points fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: InvariantKind,
    pub first_location: f64,
    pub worst_location: f64,
    pub worst_magnitude: f64,
    pub count: usize,
}

/// Output of [`SourceDistribution::check_symmetric_unimodal`]. Empty means
/// admissible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn record(&mut self, kind: InvariantKind, at: f64, magnitude: f64) {
        if let Some(v) = self.violations.iter_mut().find(|v| v.kind == kind) {
            v.count += 1;
            if magnitude.abs() > v.worst_magnitude.abs() {
                v.worst_magnitude = magnitude;
                v.worst_location = at;
            }
        } else {
            self.violations.push(Violation {
                kind,
                first_location: at,
                worst_location: at,
                worst_magnitude: magnitude,
                count: 1,
            });
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: InvariantKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "admissible");
        }
        for v in &self.violations {
            writeln!(
                f,
                "{:?} violated at {} grid point(s); first at x = {:.4}, worst {:.3e} at x = {:.4}",
                v.kind, v.count, v.first_location, v.worst_magnitude, v.worst_location
            )?;
        }
        Ok(())
    }
}
