//! Empirical quantitative non-integrability scans.
//!
//! For a fixed anchor `x`, points `y = Φ³(s)` are drawn from `W^{3,k₂}` and
//! points `z = Φ¹(t)` from `W^{1,k₁}` on uniform midpoint grids, and the
//! distance between `W¹(y)` and `W³(z)` is measured for every pair. The
//! strong unstable leaves through the stable axis are read off the invariant
//! brush; the strong stable leaves through the unstable axis are transported
//! along the forward orbit.

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::Chart;
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::models::{DynMap, Point};
use crate::nform::{invariant_brush, stationary_leaf, transported_leaf, Bundle, InvariantBrush};
use crate::splitting::SplittingFrame;

pub const GRID_POINTS: usize = 33;
pub const REFINE_TOL: f64 = 1e-12;
pub const MIN_SAMPLES: usize = 16;
/// Normalized quantile distance below which a scale counts as collapsed.
pub const COLLAPSE_FLOOR: f64 = 1e-9;

/// A parametrized curve given by univariate jets, restricted to `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledCurve {
    jets: Vec<Jet>,
    first: Vec<Jet>,
    second: Vec<Jet>,
    pub lo: f64,
    pub hi: f64,
}

impl SampledCurve {
    pub fn new(jets: Vec<Jet>, lo: f64, hi: f64) -> Result<SampledCurve> {
        if jets.len() != 3 || jets.iter().any(|j| j.arity() != 1) {
            return Err(Error::Precondition("a sampled curve needs three univariate jets".into()));
        }
        if !(lo < hi) {
            return Err(Error::Precondition(format!("empty parameter range [{lo}, {hi}]")));
        }
        let first: Vec<Jet> = jets.iter().map(|j| j.derivative(0)).collect();
        let second = first.iter().map(|j| j.derivative(0)).collect();
        Ok(SampledCurve { jets, first, second, lo, hi })
    }

    pub fn point(&self, p: f64) -> Vector3<f64> {
        Vector3::new(self.jets[0].eval(&[p]), self.jets[1].eval(&[p]), self.jets[2].eval(&[p]))
    }

    fn velocity(&self, p: f64) -> Vector3<f64> {
        Vector3::new(self.first[0].eval(&[p]), self.first[1].eval(&[p]), self.first[2].eval(&[p]))
    }

    fn acceleration(&self, p: f64) -> Vector3<f64> {
        Vector3::new(self.second[0].eval(&[p]), self.second[1].eval(&[p]), self.second[2].eval(&[p]))
    }

    fn grid(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> {
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        (0..GRID_POINTS).map(move |i| lo + step * i as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafDistance {
    pub distance: f64,
    pub first_param: f64,
    pub second_param: f64,
    /// False when Newton refinement failed and the grid minimum was kept.
    pub refined: bool,
}

fn coarse_min(a: &SampledCurve, b: &SampledCurve, ra: (f64, f64), rb: (f64, f64)) -> (f64, f64, f64) {
    let pts_b: Vec<(f64, Vector3<f64>)> = b.grid(rb.0, rb.1).map(|q| (q, b.point(q))).collect();
    let mut best = (f64::INFINITY, ra.0, rb.0);
    for p in a.grid(ra.0, ra.1) {
        let pa = a.point(p);
        for (q, pb) in &pts_b {
            let d = (pa - pb).norm_squared();
            if d < best.0 {
                best = (d, p, *q);
            }
        }
    }
    best
}

/// Newton on `|A(p) − B(q)|²` with the iterate kept inside the parameter box.
fn newton(a: &SampledCurve, b: &SampledCurve, p0: f64, q0: f64) -> Option<(f64, f64)> {
    let (mut p, mut q) = (p0, q0);
    let mut value = (a.point(p) - b.point(q)).norm_squared();
    for _ in 0..60 {
        let r = a.point(p) - b.point(q);
        let (va, vb) = (a.velocity(p), b.velocity(q));
        let grad = Vector2::new(r.dot(&va), -r.dot(&vb));
        let hess = Matrix2::new(
            va.dot(&va) + r.dot(&a.acceleration(p)),
            -va.dot(&vb),
            -va.dot(&vb),
            vb.dot(&vb) - r.dot(&b.acceleration(q)),
        );
        let det = hess.determinant();
        let step = if det.abs() > 1e-12 * hess.trace().powi(2) {
            hess.lu().solve(&grad)?
        } else if hess[(1, 1)] > 0.0 {
            // parallel tangents: slide along the second curve only
            Vector2::new(0.0, grad[1] / hess[(1, 1)])
        } else {
            return None;
        };
        let (np, nq) = ((p - step[0]).clamp(a.lo, a.hi), (q - step[1]).clamp(b.lo, b.hi));
        let next = (a.point(np) - b.point(nq)).norm_squared();
        if !next.is_finite() || next > value * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            return None;
        }
        let moved = (np - p).abs().max((nq - q).abs());
        (p, q, value) = (np, nq, next);
        if moved <= REFINE_TOL {
            return Some((p, q));
        }
    }
    Some((p, q))
}

/// Minimum distance between two curves: a coarse grid, a finer grid around
/// its best cell, then Newton.
pub fn leaf_distance(a: &SampledCurve, b: &SampledCurve) -> LeafDistance {
    let (_, p, q) = coarse_min(a, b, (a.lo, a.hi), (b.lo, b.hi));
    let ha = 2.0 * (a.hi - a.lo) / (GRID_POINTS - 1) as f64;
    let hb = 2.0 * (b.hi - b.lo) / (GRID_POINTS - 1) as f64;
    let (d2, p, q) =
        coarse_min(a, b, ((p - ha).max(a.lo), (p + ha).min(a.hi)), ((q - hb).max(b.lo), (q + hb).min(b.hi)));
    match newton(a, b, p, q) {
        Some((np, nq)) => {
            let d = (a.point(np) - b.point(nq)).norm();
            if d * d <= d2 {
                LeafDistance { distance: d, first_param: np, second_param: nq, refined: true }
            } else {
                LeafDistance { distance: d2.sqrt(), first_param: p, second_param: q, refined: false }
            }
        }
        None => LeafDistance { distance: d2.sqrt(), first_param: p, second_param: q, refined: false },
    }
}

/// The strong leaves through the two axes of an anchor.
pub struct LeafSources<'a> {
    map: &'a dyn DynMap,
    frame: &'a SplittingFrame,
    pub brush: InvariantBrush,
    order: usize,
    radius: f64,
}

impl<'a> LeafSources<'a> {
    pub fn new(map: &'a dyn DynMap, frame: &'a SplittingFrame, order: usize, radius: f64) -> Result<LeafSources<'a>> {
        let unstable = stationary_leaf(map, frame, Bundle::Unstable, order)?;
        let stable = stationary_leaf(map, frame, Bundle::Stable, order)?;
        let brush = invariant_brush(map, frame, &unstable, &stable, order)?;
        Ok(LeafSources { map, frame, brush, order, radius })
    }

    /// `Φ³(s)`.
    pub fn stable_point(&self, s: f64) -> Point {
        self.brush.eval(0.0, s)
    }

    /// `Φ¹(t)`.
    pub fn unstable_point(&self, t: f64) -> Point {
        self.brush.eval(t, 0.0)
    }

    /// `W¹` through `Φ³(s)`.
    pub fn unstable_leaf(&self, s: f64) -> Result<SampledCurve> {
        SampledCurve::new(self.brush.leaf_at_s(s), -self.radius, self.radius)
    }

    /// `W³` through `Φ¹(t)`.
    pub fn stable_leaf(&self, t: f64) -> Result<SampledCurve> {
        let (leaf, _) = transported_leaf(self.map, self.frame, self.unstable_point(t), Bundle::Stable, self.order)?;
        SampledCurve::new(leaf.curve, -self.radius, self.radius)
    }

    /// Coordinate of `p − x` along `e3` in the anchor frame.
    fn stable_coordinate(&self, p: Vector3<f64>) -> f64 {
        let x = Vector3::from(self.frame.x);
        match self.frame.basis().try_inverse() {
            Some(inv) => (inv * (p - x))[2],
            None => f64::NAN,
        }
    }
}

/// Which side of the lower-bound case split a sample falls on: whether the
/// height of the unstable leaf at the closest point stays comparable to `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Comparable,
    Small,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QniSample {
    pub k1: usize,
    pub k2: usize,
    pub s: f64,
    pub t: f64,
    pub distance: f64,
    pub branch: Branch,
    pub refined: bool,
}

/// Which family supplies the outer sample: `y ∈ W³` for `f`, `z ∈ W¹` for `f⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QniVerdict {
    Positive,
    Negative,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QniConfig {
    pub v: f64,
    pub nu: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub samples: usize,
    /// Seed for jittering grid points within a quarter cell; `None` keeps uniform midpoints.
    #[serde(default)]
    pub jitter: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleStat {
    pub k1: usize,
    pub k2: usize,
    /// `ν`-quantile over outer samples of the per-sample `ν`-quantile over inner ones.
    pub quantile: f64,
    /// `quantile / (|λ₃|^{k₂} |λ₁|^{−k₁})`.
    pub normalized: f64,
    pub threshold: f64,
    /// Fraction of pairs at or above the threshold.
    pub pair_fraction: f64,
    /// Fraction of outer samples with at least `1 − ν` of inner samples passing.
    pub outer_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QniReport {
    pub direction: Direction,
    pub config: QniConfig,
    pub scales: Vec<ScaleStat>,
    /// Decay rate of the quantile frontier in `k₁`; `None` when a quantile vanishes.
    pub alpha_hat: Option<f64>,
    pub c_hat: Option<f64>,
    pub fit_residual: f64,
    pub verdict: QniVerdict,
    pub samples: Vec<QniSample>,
}

/// Scale pairs `(k₁, round(V k₁))` with `k₂/k₁` inside `(2V/3, 3V/2)`.
pub fn scale_window(v: f64, k_min: usize, k_max: usize) -> Vec<(usize, usize)> {
    (k_min.max(1)..=k_max)
        .filter_map(|k1| {
            let k2 = (v * k1 as f64).round() as usize;
            let ratio = k2 as f64 / k1 as f64;
            (k2 >= 1 && ratio > 2.0 * v / 3.0 && ratio < 1.5 * v).then_some((k1, k2))
        })
        .collect()
}

fn midpoints(n: usize, half_width: f64) -> Vec<f64> {
    (0..n).map(|i| half_width * (-1.0 + (2 * i + 1) as f64 / n as f64)).collect()
}

/// Midpoint grid, optionally jittered. The stream depends only on the seed,
/// the scale pair and the axis, so both scan directions see the same points.
fn sample_grid(n: usize, half_width: f64, jitter: Option<u64>, k1: usize, k2: usize, axis: u64) -> Vec<f64> {
    let mut grid = midpoints(n, half_width);
    if let Some(seed) = jitter {
        let stream = ((k1 as u64) << 32) ^ ((k2 as u64) << 8) ^ axis;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let cell = 2.0 * half_width / n as f64;
        for g in &mut grid {
            *g += cell * rng.gen_range(-0.25..0.25);
        }
    }
    grid
}

/// Nearest-rank `ν`-quantile.
pub fn quantile(values: &[f64], nu: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((nu * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    (slope, intercept, residual)
}

/// Distances for every pair at one scale, row-major over `(outer, inner)`.
fn scale_samples(
    src: &LeafSources,
    dir: Direction,
    k1: usize,
    k2: usize,
    config: &QniConfig,
) -> Result<Vec<QniSample>> {
    let n = config.samples;
    let [l1, _, l3] = src.frame.lams().map(f64::abs);
    let ss = sample_grid(n, l3.powi(k2 as i32), config.jitter, k1, k2, 0);
    let ts = sample_grid(n, l1.powi(-(k1 as i32)), config.jitter, k1, k2, 1);
    let stable: Vec<SampledCurve> = ts.par_iter().map(|&t| src.stable_leaf(t)).collect::<Result<_>>()?;
    let unstable: Vec<SampledCurve> = ss.iter().map(|&s| src.unstable_leaf(s)).collect::<Result<_>>()?;
    let pair = |i: usize, j: usize| {
        let hit = leaf_distance(&unstable[i], &stable[j]);
        let height = src.stable_coordinate(unstable[i].point(hit.first_param));
        let branch = if height.abs() >= 0.5 * ss[i].abs() { Branch::Comparable } else { Branch::Small };
        QniSample { k1, k2, s: ss[i], t: ts[j], distance: hit.distance, branch, refined: hit.refined }
    };
    let rows: Vec<Vec<QniSample>> = (0..n)
        .into_par_iter()
        .map(|o| {
            (0..n)
                .map(|i| match dir {
                    Direction::Forward => pair(o, i),
                    Direction::Inverse => pair(i, o),
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Scan the scale window and summarize the quantile frontier.
pub fn qni_scan(src: &LeafSources, dir: Direction, config: &QniConfig) -> Result<QniReport> {
    if config.samples < MIN_SAMPLES {
        return Err(Error::Precondition(format!(
            "{} samples per scale, at least {MIN_SAMPLES} needed",
            config.samples
        )));
    }
    if !(config.nu > 0.0 && config.nu < 1.0) {
        return Err(Error::Precondition(format!("nu = {} must lie in (0, 1)", config.nu)));
    }
    let window = scale_window(config.v, config.k_min, config.k_max);
    if window.len() < 2 {
        return Err(Error::Precondition("the scale window needs at least two admissible (k1, k2) pairs".into()));
    }
    let n = config.samples;
    let [l1, _, l3] = src.frame.lams().map(f64::abs);
    let mut samples = Vec::with_capacity(window.len() * n * n);
    let mut quantiles = Vec::new();
    for &(k1, k2) in &window {
        let block = scale_samples(src, dir, k1, k2, config)?;
        let inner: Vec<f64> = block
            .chunks(n)
            .map(|row| quantile(&row.iter().map(|p| p.distance).collect::<Vec<_>>(), config.nu))
            .collect();
        quantiles.push(quantile(&inner, config.nu));
        samples.extend(block);
    }

    let normalized: Vec<f64> =
        window.iter().zip(&quantiles).map(|(&(k1, k2), q)| q / (l3.powi(k2 as i32) * l1.powi(-(k1 as i32)))).collect();
    let collapsed = normalized.iter().all(|&v| v < COLLAPSE_FLOOR);

    let (alpha_hat, c_hat, fit_residual) = if quantiles.iter().all(|&q| q > 0.0) {
        let ks: Vec<f64> = window.iter().map(|&(k1, _)| k1 as f64).collect();
        let logs: Vec<f64> = quantiles.iter().map(|q| q.ln()).collect();
        let (slope, _, residual) = least_squares_line(&ks, &logs);
        let alpha = -slope;
        let c = ks.iter().zip(&quantiles).map(|(k, q)| q * (alpha * k).exp()).fold(f64::INFINITY, f64::min);
        (Some(alpha), Some(c), residual)
    } else {
        (None, None, f64::INFINITY)
    };

    let mut scales = Vec::new();
    for (idx, &(k1, k2)) in window.iter().enumerate() {
        let threshold = match (alpha_hat, c_hat) {
            (Some(a), Some(c)) => c * (-a * k1 as f64).exp(),
            _ => 0.0,
        };
        let block = &samples[idx * n * n..(idx + 1) * n * n];
        let pass = |p: &QniSample| p.distance >= threshold && p.distance > 0.0;
        let pair_fraction = block.iter().filter(|p| pass(p)).count() as f64 / block.len() as f64;
        let outer_fraction = block
            .chunks(n)
            .filter(|row| row.iter().filter(|p| pass(p)).count() as f64 >= (1.0 - config.nu) * n as f64)
            .count() as f64
            / n as f64;
        scales.push(ScaleStat {
            k1,
            k2,
            quantile: quantiles[idx],
            normalized: normalized[idx],
            threshold,
            pair_fraction,
            outer_fraction,
        });
    }

    let stable_fractions = scales.iter().all(|s| s.outer_fraction >= 1.0 - config.nu);
    let verdict = if collapsed {
        QniVerdict::Negative
    } else if matches!(alpha_hat, Some(a) if a.is_finite() && a > 0.0) && stable_fractions {
        QniVerdict::Positive
    } else {
        QniVerdict::Inconclusive
    };
    Ok(QniReport { direction: dir, config: config.clone(), scales, alpha_hat, c_hat, fit_residual, verdict, samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FubiniCount {
    pub pair_fraction: f64,
    /// Whether the pair fraction reaches `(1 − ν)²`.
    pub premise: bool,
    /// Fraction of columns whose own pass fraction reaches `1 − 2√ν`.
    pub transposed_fraction: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Count the transposed pass fraction of a row-major pass matrix.
pub fn fubini_count(pass: &[Vec<bool>], nu: f64) -> FubiniCount {
    let rows = pass.len();
    let cols = pass.first().map_or(0, Vec::len);
    let total = (rows * cols).max(1) as f64;
    let pair_fraction = pass.iter().flatten().filter(|&&b| b).count() as f64 / total;
    let premise = pair_fraction >= (1.0 - nu).powi(2);
    let rho = 2.0 * nu.sqrt();
    let bound = 1.0 - rho;
    let good_cols = (0..cols)
        .filter(|&j| {
            let col = pass.iter().filter(|row| row[j]).count() as f64;
            col >= bound * rows as f64
        })
        .count();
    let transposed_fraction = good_cols as f64 / cols.max(1) as f64;
    FubiniCount { pair_fraction, premise, transposed_fraction, bound, holds: !premise || transposed_fraction >= bound }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCheck {
    pub per_scale: Vec<FubiniCount>,
    pub holds: bool,
}

/// Check, scale by scale, that the forward pass counts transfer to the
/// inverse report with `ρ(ν) = 2√ν`. The pass matrix uses the forward
/// threshold; the transposed counts are read from the inverse samples.
pub fn qni_symmetry_check(forward: &QniReport, inverse: &QniReport, nu: f64) -> SymmetryCheck {
    let n = forward.config.samples;
    let aligned = forward.direction == Direction::Forward
        && inverse.direction == Direction::Inverse
        && forward.config == inverse.config
        && forward.scales.len() == inverse.scales.len();
    if !aligned {
        return SymmetryCheck { per_scale: Vec::new(), holds: false };
    }
    let mut per_scale = Vec::new();
    let mut holds = true;
    for (idx, stat) in forward.scales.iter().enumerate() {
        let range = idx * n * n..(idx + 1) * n * n;
        let pass = |p: &QniSample| p.distance >= stat.threshold && p.distance > 0.0;
        let fwd: Vec<Vec<bool>> =
            forward.samples[range.clone()].chunks(n).map(|row| row.iter().map(pass).collect()).collect();
        // the inverse report stores rows by z; its transpose is indexed like `fwd`
        let inv = &inverse.samples[range];
        let transposed: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|o| pass(&inv[o * n + i])).collect()).collect();
        let same = fwd == transposed;
        let count = fubini_count(&transposed, nu);
        holds &= same && count.holds;
        per_scale.push(count);
    }
    SymmetryCheck { per_scale, holds }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub gamma_upper: f64,
    pub c_upper: f64,
    pub residual_upper: f64,
    pub gamma_lower: f64,
    pub c_lower: f64,
    pub residual_lower: f64,
}

/// Fit `c₂|s|^{γ₂} ≤ |P̂| + |Q̂| ≤ c₁|s|^{γ₁}` for the unstable leaves through
/// `Φ³(s)` written in `chart` as `t' ↦ (t', Q̂(t'), P̂(t'))`.
pub fn estimate_holonomy_holder(
    src: &LeafSources,
    chart: &Chart,
    s_range: (f64, f64),
    t_range: (f64, f64),
    points: usize,
) -> Result<HolderFit> {
    let (s_lo, s_hi) = s_range;
    if !(s_lo >= 1e-6 && s_hi >= 2.0 * s_lo) || points < 3 {
        return Err(Error::Precondition(format!(
            "s-range [{s_lo:e}, {s_hi:e}] with {points} points is too narrow for a fit"
        )));
    }
    let ts = midpoints(GRID_POINTS, 1.0).into_iter().map(|u| {
        let (a, b) = t_range;
        a + (b - a) * (u + 1.0) / 2.0
    });
    let ts: Vec<f64> = ts.collect();
    let mut log_s = Vec::new();
    let mut log_hi = Vec::new();
    let mut log_lo = Vec::new();
    for i in 0..points {
        let s = s_lo * (s_hi / s_lo).powf(i as f64 / (points - 1) as f64);
        let c = chart.pull_curve(&src.brush.leaf_at_s(s), [0.0, 0.0, s])?;
        let size: Vec<f64> = ts.iter().map(|&t| c[1].eval(&[t]).abs() + c[2].eval(&[t]).abs()).collect();
        let hi = size.iter().copied().fold(0.0, f64::max);
        let lo = size.iter().copied().fold(f64::INFINITY, f64::min);
        if !(lo > 0.0) {
            return Err(Error::Precondition(format!("the leaf through s = {s:e} meets the unstable axis")));
        }
        log_s.push(s.ln());
        log_hi.push(hi.ln());
        log_lo.push(lo.ln());
    }
    let (g1, a1, r1) = least_squares_line(&log_s, &log_hi);
    let (g2, a2, r2) = least_squares_line(&log_s, &log_lo);
    Ok(HolderFit {
        gamma_upper: g1,
        c_upper: a1.exp(),
        residual_upper: r1,
        gamma_lower: g2,
        c_lower: a2.exp(),
        residual_lower: r2,
    })
}
