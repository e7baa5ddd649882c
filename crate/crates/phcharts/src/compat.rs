//! Compatibility of stable and unstable charts and joint integrability.
//!
//! A stable chart is built as an unstable chart of the reversed map and
//! swapped back, so that in both charts the first variable runs along `W¹`
//! and the third along `W³`. The transition `ψ = ι′⁻¹∘ι` restricted to the
//! plane `t₂ = 0` measures how far the two charts' planes disagree.

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{axis_coefficient, build_unstable_chart, improve_chart, Chart};
use crate::error::{Error, Result};
use crate::jets::{compose_maps, factorial, invert_map, Jet};
use crate::models::{swap_jets, swap_point, DynMap, Reversed};
use crate::qni::SampledCurve;
use crate::splitting::{compute_frame, MAX_POWER};

/// Relative size below which a mixed derivative of `h₂` counts as zero.
pub const INDEX_TOL: f64 = 1e-7;
pub const CONTAINMENT_TOL: f64 = 1e-8;
/// Distances below this are treated as exact containment by the tangency fit.
pub const CONTACT_FLOOR: f64 = 1e-12;

/// Polynomial solution of `T(λ₁t)β^{ℓ+1} = αT(t) + R(t)` for the chart's
/// current top transverse coefficient `R`. Resonant coefficients with
/// vanishing right-hand side are set to zero.
pub fn law_template(chart: &Chart) -> Result<Vec<f64>> {
    let level = chart.level;
    let r = axis_coefficient(&chart.fmap[1], 0, level + 1);
    let [l1, l2, l3] = chart.lams;
    let beta = l3.powi(level as i32 + 1);
    let scale = r.max_abs().max(1.0);
    (0..=r.order())
        .map(|k| {
            let den = beta * l1.powi(k as i32) - l2;
            let rk = r.c(k);
            if den.abs() <= 1e-9 * l2.abs() {
                if rk.abs() > 1e-10 * scale {
                    return Err(Error::Resonance { what: format!("template degree {k}"), rhs: rk });
                }
                return Ok(0.0);
            }
            Ok(rk / den)
        })
        .collect()
}

/// A stable chart: an unstable chart of the reversed map, read back in the
/// original coordinates with variables ordered `(t₁, t₂, t₃)` along `(W¹, ·, W³)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableChart {
    pub reversed: Chart,
    pub iota: Vec<Jet>,
}

impl StableChart {
    pub fn level(&self) -> usize {
        self.reversed.level
    }
}

fn swap_variables(j: &[Jet]) -> Result<Vec<Jet>> {
    let order = j[0].order();
    let inner: Vec<Jet> = [2, 1, 0].iter().map(|&v| Jet::variable(3, order, v, 0.0)).collect();
    Ok(swap_jets(&compose_maps(j, &inner)?))
}

/// Stable chart at a fixed point, raised to `level` with law templates.
pub fn build_stable_chart(
    map: &dyn DynMap,
    x: [f64; 3],
    order: usize,
    radius: f64,
    level: usize,
) -> Result<StableChart> {
    if level + 2 > order {
        return Err(Error::Precondition(format!("level {level} needs jet order at least {}", level + 2)));
    }
    let rev = Reversed(map);
    let frame = compute_frame(&rev, swap_point(x), MAX_POWER)?;
    let mut chart = build_unstable_chart(&rev, &frame, order, radius)?;
    while chart.level < level {
        let template = law_template(&chart)?;
        chart = improve_chart(&chart, &template)?;
    }
    let iota = swap_variables(&chart.iota)?;
    Ok(StableChart { reversed: chart, iota })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedDerivative {
    pub a: usize,
    pub b: usize,
    /// `∂₁^a ∂₃^b h₂(0, 0)`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatJets {
    pub order: usize,
    /// `ψ = ι′⁻¹∘ι` in deviation variables.
    pub psi: Vec<Jet>,
    /// `(h₁, h₂, h₃)(t₁, t₃) = ψ(t₁, 0, t₃)`.
    pub h: Vec<Jet>,
    pub table: Vec<MixedDerivative>,
    pub tolerance: f64,
    pub index_set: Vec<(usize, usize)>,
    /// Largest `m` with every mixed derivative of total degree below `m` negligible.
    pub compatibility_order: usize,
}

impl CompatJets {
    /// Minimal `a + bV` over the index set, with its minimizer.
    pub fn minimal_index(&self, v: f64) -> Option<((usize, usize), f64)> {
        self.index_set.iter().map(|&(a, b)| ((a, b), a as f64 + b as f64 * v)).min_by(|p, q| p.1.total_cmp(&q.1))
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    /// Largest deviation of `h₁(t₁, 0)` from `t₁` and of `h₃(0, t₃)` from `t₃`.
    pub fn axis_defect(&self) -> f64 {
        let order = self.order;
        let mut worst: f64 = 0.0;
        for k in 0..=order {
            let want = if k == 1 { 1.0 } else { 0.0 };
            worst = worst.max((self.h[0].get(&[k as u8, 0]) - want).abs());
            worst = worst.max((self.h[2].get(&[0, k as u8]) - want).abs());
        }
        worst
    }
}

/// Transition jets between a stable chart `ι` and an unstable chart `ι′`
/// sharing a base point.
pub fn compat_jets(stable: &[Jet], unstable: &[Jet], order: usize) -> Result<CompatJets> {
    if stable.len() != 3 || unstable.len() != 3 {
        return Err(Error::JetContract("charts must have three components".into()));
    }
    let order = order.min(stable[0].order()).min(unstable[0].order());
    let stable: Vec<Jet> = stable.iter().map(|j| j.with_order(order)).collect();
    let unstable: Vec<Jet> = unstable.iter().map(|j| j.with_order(order)).collect();
    let drift = stable.iter().zip(&unstable).map(|(a, b)| (a.value() - b.value()).abs()).fold(0.0, f64::max);
    if drift > 1e-12 {
        return Err(Error::Precondition("charts are centred at different points".into()));
    }
    let inverse = invert_map(&unstable, &[0.0; 3])?;
    let centred: Vec<Jet> = stable.iter().map(Jet::centred).collect();
    let psi = compose_maps(&inverse, &centred)?;
    let plane = [Jet::variable(2, order, 0, 0.0), Jet::zero(2, order), Jet::variable(2, order, 1, 0.0)];
    let h = compose_maps(&psi, &plane)?;

    let mut table = Vec::new();
    for n in 0..=order {
        for a in 0..=n {
            let b = n - a;
            let value = h[1].get(&[a as u8, b as u8]) * factorial(a) * factorial(b);
            table.push(MixedDerivative { a, b, value });
        }
    }
    let scale = h.iter().flat_map(|j| j.coeffs().iter()).fold(1.0f64, |m, c| m.max(c.abs()));
    let tolerance = INDEX_TOL * scale;
    let index_set: Vec<(usize, usize)> =
        table.iter().filter(|m| m.value.abs() > tolerance).map(|m| (m.a, m.b)).collect();
    let compatibility_order = index_set.iter().map(|&(a, b)| a + b).min().unwrap_or(order + 1);
    Ok(CompatJets { order, psi, h, table, tolerance, index_set, compatibility_order })
}

/// Derivatives of `h₂` along the two axes: `∂₁^i h₂(0, t₃)` and `∂₃^j h₂(t₁, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossData {
    pub level: usize,
    pub rho: f64,
    /// Univariate jets in `t₃`, one per `i = 0..=level`.
    pub along_third: Vec<Jet>,
    /// Univariate jets in `t₁`, one per `j = 0..=level`.
    pub along_first: Vec<Jet>,
}

impl CrossData {
    pub fn from_h2(h2: &Jet, level: usize, rho: f64) -> Result<CrossData> {
        if h2.arity() != 2 {
            return Err(Error::JetContract("h2 must be bivariate".into()));
        }
        let order = h2.order();
        let slice = |var: usize, k: usize| -> Jet {
            let mut d = h2.clone();
            for _ in 0..k {
                d = d.derivative(var);
            }
            let keep = 1 - var;
            let coeffs: Vec<f64> = (0..=d.order())
                .map(|m| {
                    let mut e = [0u8; 2];
                    e[keep] = m as u8;
                    d.get(&e)
                })
                .collect();
            Jet::univariate(order, &coeffs)
        };
        Ok(CrossData {
            level,
            rho,
            along_third: (0..=level).map(|i| slice(0, i)).collect(),
            along_first: (0..=level).map(|j| slice(1, j)).collect(),
        })
    }
}

fn step(y: f64) -> f64 {
    let e = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
    e(y) / (e(y) + e(1.0 - y))
}

/// Smooth cutoff: 1 on `|x| ≤ 1/2`, 0 on `|x| ≥ 1`.
pub fn cutoff(x: f64) -> f64 {
    step(2.0 - 2.0 * x.abs())
}

/// `φ = χ₁ P_A + χ₃ P_B − χ₁χ₃ P_AB`, where `P_A` and `P_B` are the Taylor
/// sums of the cross data off each axis and `P_AB` their common part at the
/// origin. On `[−ρ/2, ρ/2]²` both cutoffs equal 1 and `φ` is the polynomial `poly`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    pub level: usize,
    pub rho: f64,
    pub along_third: Jet,
    pub along_first: Jet,
    pub common: Jet,
    pub poly: Jet,
}

impl Extension {
    pub fn eval(&self, t1: f64, t3: f64) -> f64 {
        let (c1, c3) = (cutoff(t1 / self.rho), cutoff(t3 / self.rho));
        let p = [t1, t3];
        c1 * self.along_third.eval(&p) + c3 * self.along_first.eval(&p) - c1 * c3 * self.common.eval(&p)
    }
}

fn mixed(j: &Jet, a: usize, b: usize) -> Jet {
    let mut d = j.clone();
    for _ in 0..a {
        d = d.derivative(0);
    }
    for _ in 0..b {
        d = d.derivative(1);
    }
    d
}

fn nth_derivative(j: &Jet, k: usize) -> Jet {
    (0..k).fold(j.clone(), |d, _| d.derivative(0))
}

/// Extend the cross data to a function on the square whose mixed derivatives
/// up to order `ℓ` match the data on both axes.
pub fn whitney_cross_extend(data: &CrossData, tol: f64) -> Result<Extension> {
    let l = data.level;
    if data.along_third.len() != l + 1 || data.along_first.len() != l + 1 {
        return Err(Error::Precondition("cross data must list derivatives 0..=level".into()));
    }
    if !(data.rho > 0.0) {
        return Err(Error::Precondition("rho must be positive".into()));
    }
    // Taylor data at the origin, read from each axis
    let from_third = |i: usize, j: usize| nth_derivative(&data.along_third[i], j).value();
    let from_first = |i: usize, j: usize| nth_derivative(&data.along_first[j], i).value();
    for i in 0..=l {
        for j in 0..=l {
            let (a, b) = (from_third(i, j), from_first(i, j));
            if (a - b).abs() > tol * (1.0 + a.abs()) {
                return Err(Error::Precondition(format!(
                    "cross data disagree at the origin for derivative ({i}, {j}): {a:.3e} vs {b:.3e}"
                )));
            }
            if i + j <= l && a.abs() > tol {
                return Err(Error::Precondition(format!(
                    "cross data not order-{} flat: derivative ({i}, {j}) at the origin is {a:.3e}",
                    l + 1
                )));
            }
        }
    }
    let data_order = data.along_third.iter().chain(&data.along_first).map(Jet::order).max().unwrap_or(0);
    let order = data_order + l;
    let t1 = Jet::variable(2, order, 0, 0.0);
    let t3 = Jet::variable(2, order, 1, 0.0);
    let lift = |j: &Jet, v: &Jet| j.with_order(order).compose(std::slice::from_ref(v)).expect("univariate");
    let mut along_third = Jet::zero(2, order);
    let mut along_first = Jet::zero(2, order);
    let mut common = Jet::zero(2, order);
    for k in 0..=l {
        along_third = &along_third + &(&t1.powi(k) * &lift(&data.along_third[k], &t3)).scale(1.0 / factorial(k));
        along_first = &along_first + &(&t3.powi(k) * &lift(&data.along_first[k], &t1)).scale(1.0 / factorial(k));
        for j in 0..=l {
            let c = from_third(k, j) / (factorial(k) * factorial(j));
            common = &common + &(&t1.powi(k) * &t3.powi(j)).scale(c);
        }
    }
    let poly = &(&along_third + &along_first) - &common;

    // jet matching on the cross inside the region where both cutoffs equal 1
    let half = data.rho / 2.0;
    for i in 0..=l {
        for j in 0..=l - i {
            let d = mixed(&poly, i, j);
            let on_third = nth_derivative(&data.along_third[i], j);
            let on_first = nth_derivative(&data.along_first[j], i);
            for n in 0..=16 {
                let u = half * (-1.0 + n as f64 / 8.0);
                let r3 = (d.eval(&[0.0, u]) - on_third.eval(&[u])).abs();
                let r1 = (d.eval(&[u, 0.0]) - on_first.eval(&[u])).abs();
                if r3.max(r1) > 1e-6 {
                    return Err(Error::Residual { t: u, residual: r3.max(r1) });
                }
            }
        }
    }
    Ok(Extension { level: l, rho: data.rho, along_third, along_first, common, poly })
}

pub trait SurfaceDistance {
    fn distance(&self, p: Vector3<f64>) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl SurfaceDistance for Plane {
    fn distance(&self, p: Vector3<f64>) -> f64 {
        ((p - self.point).dot(&self.normal) / self.normal.norm()).abs()
    }
}

/// The surface `(t₁, t₃) ↦ ι′(t₁, φ(t₁, t₃), t₃)` on `[−ρ/2, ρ/2]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSurface {
    pub base: [f64; 3],
    pub rho: f64,
    pub extension: Extension,
    /// Bivariate jets of the three coordinates.
    pub param: Vec<Jet>,
    /// Largest distance from the sampled axes to the surface.
    pub containment: f64,
}

impl JointSurface {
    pub fn eval(&self, t1: f64, t3: f64) -> Vector3<f64> {
        Vector3::new(self.param[0].eval(&[t1, t3]), self.param[1].eval(&[t1, t3]), self.param[2].eval(&[t1, t3]))
    }

    fn jacobian(&self, t1: f64, t3: f64) -> (Vector3<f64>, Vector3<f64>) {
        let d = |v: usize| Vector3::from_fn(|i, _| self.param[i].derivative(v).eval(&[t1, t3]));
        (d(0), d(1))
    }

    /// Closest parameters to `p`, by Gauss-Newton from the linearized guess.
    pub fn project(&self, p: Vector3<f64>) -> (f64, f64) {
        let half = self.rho / 2.0;
        let (a0, b0) = self.jacobian(0.0, 0.0);
        let m = Matrix2::new(a0.dot(&a0), a0.dot(&b0), a0.dot(&b0), b0.dot(&b0));
        let r0 = p - self.eval(0.0, 0.0);
        let guess = m.lu().solve(&Vector2::new(a0.dot(&r0), b0.dot(&r0))).unwrap_or_default();
        let (mut u, mut v) = (guess[0].clamp(-half, half), guess[1].clamp(-half, half));
        for _ in 0..50 {
            let (a, b) = self.jacobian(u, v);
            let r = p - self.eval(u, v);
            let m = Matrix2::new(a.dot(&a), a.dot(&b), a.dot(&b), b.dot(&b));
            let Some(step) = m.lu().solve(&Vector2::new(a.dot(&r), b.dot(&r))) else { break };
            let (nu, nv) = ((u + step[0]).clamp(-half, half), (v + step[1]).clamp(-half, half));
            let moved = (nu - u).abs().max((nv - v).abs());
            (u, v) = (nu, nv);
            if moved <= 1e-15 {
                break;
            }
        }
        (u, v)
    }
}

impl SurfaceDistance for JointSurface {
    fn distance(&self, p: Vector3<f64>) -> f64 {
        let (u, v) = self.project(p);
        (p - self.eval(u, v)).norm()
    }
}

/// Surface through both axes of the unstable chart, with containment checked
/// on a grid of the chart's normal-form leaves.
pub fn build_joint_surface(unstable: &Chart, extension: Extension, rho: f64) -> Result<JointSurface> {
    if !(rho > 0.0 && rho <= extension.rho) {
        return Err(Error::Precondition(format!("rho = {rho} must lie in (0, {}]", extension.rho)));
    }
    let order = extension.poly.order();
    let inner = [Jet::variable(2, order, 0, 0.0), extension.poly.clone(), Jet::variable(2, order, 1, 0.0)];
    let iota: Vec<Jet> = unstable.iota.iter().map(|j| j.with_order(order)).collect();
    let param = compose_maps(&iota, &inner)?;
    let mut surface = JointSurface { base: unstable.base, rho, extension, param, containment: 0.0 };
    let half = rho / 2.0;
    let mut worst: f64 = 0.0;
    for n in 0..=20 {
        let t = half * (-1.0 + n as f64 / 10.0);
        for leaf in [&unstable.unstable, &unstable.stable] {
            worst = worst.max(surface.distance(Vector3::from(leaf.eval(t))));
        }
    }
    if worst > CONTAINMENT_TOL {
        return Err(Error::Residual { t: half, residual: worst });
    }
    surface.containment = worst;
    Ok(surface)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Tangency {
    /// Fitted slope of log-distance against log-arc-length, with `C = e^{intercept}`.
    Measured { order: f64, constant: f64, residual: f64 },
    /// Every sampled distance sits below the contact floor.
    Contained { ceiling: usize },
}

impl Tangency {
    pub fn order(&self) -> f64 {
        match *self {
            Tangency::Measured { order, .. } => order,
            Tangency::Contained { ceiling } => ceiling as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub tangency: Tangency,
    pub arcs: Vec<f64>,
    pub distances: Vec<f64>,
    /// Set when the requested range ran past the end of the curve.
    pub truncated: bool,
}

fn arc_length(curve: &SampledCurve, p: f64) -> f64 {
    // composite Simpson on 64 panels
    let n = 64;
    let h = p / n as f64;
    let speed = |x: f64| {
        let dx = 1e-7 * (1.0 + x.abs());
        ((curve.point(x + dx) - curve.point(x - dx)) / (2.0 * dx)).norm()
    };
    let inner: f64 = (1..n).map(|k| speed(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (speed(0.0) + inner + speed(p))
}

/// Fit the order of contact between `curve` at parameter 0 and `surface`
/// over two decades of arc length ending at parameter `reach`.
pub fn tangency_order(
    surface: &dyn SurfaceDistance,
    curve: &SampledCurve,
    reach: f64,
    ceiling: usize,
) -> Result<TangencyReport> {
    let start = surface.distance(curve.point(0.0));
    if start > CONTAINMENT_TOL {
        return Err(Error::Precondition(format!("base point lies {start:.3e} away from the surface")));
    }
    let truncated = reach > curve.hi;
    let reach = reach.min(curve.hi);
    if !(reach > 0.0) {
        return Err(Error::Precondition("the curve has no forward range".into()));
    }
    let points = 21;
    let params: Vec<f64> =
        (0..points).map(|k| reach * 10f64.powf(-2.0 + 2.0 * k as f64 / (points - 1) as f64)).collect();
    let arcs: Vec<f64> = params.iter().map(|&p| arc_length(curve, p)).collect();
    let distances: Vec<f64> = params.iter().map(|&p| surface.distance(curve.point(p))).collect();
    if distances.iter().all(|&d| d <= CONTACT_FLOOR) {
        return Ok(TangencyReport { tangency: Tangency::Contained { ceiling }, arcs, distances, truncated });
    }
    let usable: Vec<(f64, f64)> =
        arcs.iter().zip(&distances).filter(|(_, &d)| d > CONTACT_FLOOR).map(|(a, d)| (a.ln(), d.ln())).collect();
    if usable.len() < 3 {
        return Ok(TangencyReport { tangency: Tangency::Contained { ceiling }, arcs, distances, truncated });
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let residual = usable.iter().map(|p| (p.1 - intercept - order * p.0).abs()).fold(0.0, f64::max);
    Ok(TangencyReport {
        tangency: Tangency::Measured { order, constant: intercept.exp(), residual },
        arcs,
        distances,
        truncated,
    })
}

/// Tangency reports for several leaves through points of the surface, in input order.
pub fn tangency_table(
    surface: &JointSurface,
    leaves: &[SampledCurve],
    reach: f64,
    ceiling: usize,
) -> Result<Vec<TangencyReport>> {
    leaves.par_iter().map(|leaf| tangency_order(surface, leaf, reach, ceiling)).collect()
}

/// Chart pushed forward along the map, `f∘ι∘D⁻¹`, with `D` the diagonal of rates.
pub fn push_forward_chart(map_jet: &[Jet], iota: &[Jet], lams: [f64; 3]) -> Result<Vec<Jet>> {
    let order = iota[0].order();
    let centred: Vec<Jet> = iota.iter().map(Jet::centred).collect();
    let moved = compose_maps(map_jet, &centred)?;
    let unscale: Vec<Jet> = (0..3).map(|v| Jet::variable(3, order, v, 0.0).scale(1.0 / lams[v])).collect();
    compose_maps(&moved, &unscale)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyRow {
    pub family: String,
    pub anchor: f64,
    pub tangency: Tangency,
}

/// Serializable summary of a compatibility run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    pub scenario_hash: String,
    pub order: usize,
    pub table: Vec<MixedDerivative>,
    pub tolerance: f64,
    pub index_set: Vec<(usize, usize)>,
    pub compatibility_order: usize,
    pub minimal_index: Option<((usize, usize), f64)>,
    /// Monomial coefficients `(a, b, value)` of the extension polynomial, when one exists.
    pub surface: Vec<(usize, usize, f64)>,
    /// Order `ℓ` of the cross data handed to the extension.
    pub level: usize,
    pub containment: Option<f64>,
    pub refusal: Option<String>,
    pub tangency: Vec<TangencyRow>,
}

impl CompatReport {
    pub fn min_tangency(&self) -> Option<f64> {
        self.tangency.iter().map(|r| r.tangency.order()).min_by(f64::total_cmp)
    }

    /// Every tested leaf is tangent to the surface to order at least `level`.
    pub fn jointly_integrable(&self) -> bool {
        self.containment.is_some() && self.min_tangency().is_some_and(|m| m >= self.level as f64 - 1e-6)
    }
}

/// Monomials of a bivariate jet with `|c| > floor`.
pub fn monomials(j: &Jet, floor: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for n in 0..=j.order() {
        for a in (0..=n).rev() {
            let c = j.get(&[a as u8, (n - a) as u8]);
            if c.abs() > floor {
                out.push((a, n - a, c));
            }
        }
    }
    out
}
