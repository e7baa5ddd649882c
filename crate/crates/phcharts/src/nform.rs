//! One-dimensional normal-form parametrizations of strong leaves.
//!
//! A [`LeafParam`] is a unit-speed jet `Φ` of a strong stable or unstable leaf
//! satisfying `f(Φ_x(t)) = Φ_{f(x)}(λ_x t)`. At a fixed point this is solved
//! degree by degree; elsewhere the leaf is transported along the orbit from a
//! linear seed placed deep enough that the seed error has contracted away.
//!
//! [`InvariantBrush`] is a two-variable parametrization `Ψ(t, s)` of the
//! invariant surface through the anchor that contains both axes, satisfying
//! `f(Ψ(t, s)) = Ψ(λ₁t, λ₃s)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::models::{DynMap, Inverted, Point};
use crate::splitting::SplittingFrame;

pub const SEED_TOL: f64 = 1e-13;
pub const MAX_SEED_DEPTH: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bundle {
    Unstable,
    Stable,
}

impl Bundle {
    /// Position of the bundle in the frame: 0 for `E¹`, 2 for `E³`.
    pub fn slot(self) -> usize {
        match self {
            Bundle::Unstable => 0,
            Bundle::Stable => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    /// Orbit steps between the base point and the linear seed (0 for stationary solves).
    pub depth: usize,
    pub contraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafParam {
    pub base: Point,
    pub bundle: Bundle,
    /// Univariate jets of the three coordinates of `Φ`.
    pub curve: Vec<Jet>,
    /// Multiplier `λ_{i,x}` of the bundle at the base point.
    pub lambda: f64,
    pub radius: f64,
    pub seed: SeedInfo,
}

impl LeafParam {
    pub fn order(&self) -> usize {
        self.curve[0].order()
    }

    pub fn eval(&self, t: f64) -> Point {
        [self.curve[0].eval(&[t]), self.curve[1].eval(&[t]), self.curve[2].eval(&[t])]
    }

    pub fn tangent(&self) -> Vector3<f64> {
        Vector3::new(self.curve[0].c(1), self.curve[1].c(1), self.curve[2].c(1))
    }

    /// Curve `t ↦ Φ(factor · t)`.
    pub fn rescaled(&self, factor: f64) -> Vec<Jet> {
        self.curve.iter().map(|j| rescale(j, factor)).collect()
    }
}

/// Univariate `j(factor · t)`.
pub fn rescale(j: &Jet, factor: f64) -> Jet {
    let mut out = j.clone();
    let mut p = 1.0;
    for c in out.coeffs_mut().iter_mut() {
        *c *= p;
        p *= factor;
    }
    out
}

/// Solve `(A − μ I) c = rhs` in the eigenbasis `basis` of `A` with eigenvalues
/// `lams`, treating near-zero factors as resonances.
fn solve_homological(
    basis: &Matrix3<f64>,
    basis_inv: &Matrix3<f64>,
    lams: [f64; 3],
    mu: f64,
    rhs: Vector3<f64>,
    what: &str,
    resonances: &mut Vec<String>,
) -> Result<Vector3<f64>> {
    let w = basis_inv * rhs;
    let scale = rhs.norm().max(1.0);
    let mut sol = Vector3::zeros();
    for k in 0..3 {
        let gap = lams[k] - mu;
        if gap.abs() <= 1e-9 * mu.abs().max(1.0) {
            if w[k].abs() > 1e-10 * scale {
                return Err(Error::Resonance { what: format!("{what}, bundle {}", k + 1), rhs: w[k] });
            }
            resonances.push(format!("{what}, bundle {}", k + 1));
            continue;
        }
        sol[k] = w[k] / gap;
    }
    Ok(basis * sol)
}

/// Normal-form leaf at a fixed point, solved degree by degree.
pub fn stationary_leaf(map: &dyn DynMap, frame: &SplittingFrame, bundle: Bundle, order: usize) -> Result<LeafParam> {
    let x = frame.x;
    let image = map.forward(x);
    let drift = (0..3).map(|i| (image[i] - x[i]).abs()).fold(0.0, f64::max);
    if drift > 1e-12 {
        return Err(Error::Precondition(format!("{x:?} is not a fixed point")));
    }
    let slot = bundle.slot();
    let lam = frame.lams()[slot];
    let e = frame.vectors()[slot];
    let basis = frame.basis();
    let basis_inv = basis.try_inverse().ok_or_else(|| Error::Precondition("degenerate frame".into()))?;
    let mut curve: Vec<Jet> = (0..3).map(|i| Jet::univariate(order, &[x[i], e[i]])).collect();
    let mut notes = Vec::new();
    for k in 2..=order {
        let fc = map.forward_on(&curve);
        let rhs = Vector3::new(-fc[0].c(k), -fc[1].c(k), -fc[2].c(k));
        let ck = solve_homological(&basis, &basis_inv, frame.lams(), lam.powi(k as i32), rhs, "leaf", &mut notes)?;
        for i in 0..3 {
            curve[i].coeffs_mut()[k] = ck[i];
        }
    }
    Ok(LeafParam { base: x, bundle, curve, lambda: lam, radius: 0.5, seed: SeedInfo { depth: 0, contraction: 0.0 } })
}

/// Number of orbit steps for a seed error to contract below [`SEED_TOL`].
pub fn seed_depth(contraction: f64) -> Result<usize> {
    if !(contraction > 0.0 && contraction < 1.0) {
        return Err(Error::Divergent { what: "leaf transport".into(), ratio: contraction });
    }
    let n = (SEED_TOL.ln() / contraction.ln()).ceil() as usize;
    if n > MAX_SEED_DEPTH {
        return Err(Error::Divergent { what: "leaf transport (seed depth exceeds cap)".into(), ratio: contraction });
    }
    Ok(n.max(1))
}

/// Pull a linear seed placed `depth` steps along the forward orbit of `y`
/// back to `y`. Returns the curves at `y` and `f(y)` and the multiplier at `y`.
fn pull_back(map: &dyn DynMap, y: Point, dir: Vector3<f64>, depth: usize, order: usize) -> (Vec<Jet>, Vec<Jet>, f64) {
    let mut orbit = vec![y];
    for j in 0..depth {
        orbit.push(map.forward(orbit[j]));
    }
    let far = orbit[depth];
    let mut curve: Vec<Jet> = (0..3).map(|i| Jet::univariate(order, &[far[i], dir[i]])).collect();
    let mut next = curve.clone();
    let mut lam = f64::NAN;
    for j in (0..depth).rev() {
        let tangent = Vector3::new(curve[0].c(1), curve[1].c(1), curve[2].c(1));
        lam = 1.0 / (map.inverse_jacobian(orbit[j + 1]) * tangent).norm();
        let pulled = map.inverse_on(&curve.iter().map(|c| rescale(c, lam)).collect::<Vec<_>>());
        next = std::mem::replace(&mut curve, pulled);
    }
    (curve, next, lam)
}

fn curve_gap(a: &[Jet], b: &[Jet]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max)
}

/// Leaves at `y` and `f(y)` for the strongest contracting direction of `map`,
/// deepening the seed until the result stops changing. The nominal depth
/// comes from `contraction`; shear growth along the orbit can slow the
/// effective rate, which the convergence loop absorbs.
fn transport_contracting(
    map: &dyn DynMap,
    y: Point,
    seed_dir: Vector3<f64>,
    contraction: f64,
    order: usize,
    bundle: Bundle,
) -> Result<(LeafParam, LeafParam)> {
    let mut depth = seed_depth(contraction)?;
    let dir = seed_dir.normalize();
    let mut prev = pull_back(map, y, dir, depth, order);
    let mut gap = f64::INFINITY;
    while depth + 8 <= MAX_SEED_DEPTH {
        depth += 8;
        let cur = pull_back(map, y, dir, depth, order);
        gap = curve_gap(&cur.0, &prev.0);
        prev = cur;
        if gap <= 1e-13 {
            break;
        }
    }
    if !(gap <= 1e-11) {
        return Err(Error::NoConvergence { what: "leaf transport".into(), residual: gap });
    }
    let (here, next, lam) = prev;
    let seed = SeedInfo { depth, contraction };
    let there_base = [next[0].value(), next[1].value(), next[2].value()];
    Ok((
        LeafParam { base: y, bundle, curve: here, lambda: lam, radius: 0.5, seed: seed.clone() },
        LeafParam { base: there_base, bundle, curve: next, lambda: f64::NAN, radius: 0.5, seed },
    ))
}

/// Leaf through `y` by transport along its orbit, seeded with the anchor frame.
///
/// Stable leaves use the forward orbit and contract seed errors at the rate
/// `λ₃/λ₂`; unstable leaves use the backward orbit with rate `λ₂/λ₁`.
/// Returns the leaf at `y` (with its multiplier) and the leaf at `f(y)`.
pub fn transported_leaf(
    map: &dyn DynMap,
    anchor: &SplittingFrame,
    y: Point,
    bundle: Bundle,
    order: usize,
) -> Result<(LeafParam, LeafParam)> {
    let [l1, l2, l3] = anchor.lams().map(f64::abs);
    match bundle {
        Bundle::Stable => transport_contracting(map, y, anchor.vectors()[2], l3 / l2, order, bundle),
        Bundle::Unstable => {
            // For f⁻¹ started at f(y): the pair is (leaf at f(y), leaf at y) with
            // f⁻¹(Φ_{f(y)}(t)) = Φ_y(μ t), so the f-multiplier at y is 1/μ.
            let inv = Inverted(map);
            let (there, mut here, mu) = {
                let (a, b) = transport_contracting(&inv, map.forward(y), anchor.vectors()[0], l2 / l1, order, bundle)?;
                let mu = a.lambda;
                (a, b, mu)
            };
            here.lambda = 1.0 / mu;
            here.base = y;
            let mut there = there;
            there.lambda = f64::NAN;
            Ok((here, there))
        }
    }
}

/// Sup over a 41-point grid on `[-radius, radius]` of `|f(Φ_x(t)) − Φ_{f(x)}(λ t)|`.
pub fn conjugacy_residual(map: &dyn DynMap, leaf: &LeafParam, image: &LeafParam, radius: f64) -> f64 {
    (0..41)
        .map(|i| {
            let t = radius * (-1.0 + 2.0 * i as f64 / 40.0);
            let lhs = map.forward(leaf.eval(t));
            let rhs = image.eval(leaf.lambda * t);
            (0..3).map(|k| (lhs[k] - rhs[k]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Halve the validity radius until the conjugacy residual meets `tol`.
pub fn fit_radius(map: &dyn DynMap, leaf: &mut LeafParam, image: &LeafParam, tol: f64) -> Result<f64> {
    let mut radius = leaf.radius;
    for _ in 0..30 {
        let r = conjugacy_residual(map, leaf, image, radius);
        if r <= tol {
            leaf.radius = radius;
            return Ok(r);
        }
        radius *= 0.5;
    }
    Err(Error::NoConvergence {
        what: "validity radius search".into(),
        residual: conjugacy_residual(map, leaf, image, radius),
    })
}

/// Leaf parameters at every point of a segment of the anchor's fixed orbit.
pub fn build_leaf_param(
    map: &dyn DynMap,
    segment: &crate::splitting::OrbitSegment,
    bundle: Bundle,
    order: usize,
    tol: f64,
) -> Result<Vec<LeafParam>> {
    let anchor = segment.anchor();
    segment
        .frames
        .iter()
        .map(|frame| {
            let fixed = {
                let y = map.forward(frame.x);
                (0..3).all(|i| (y[i] - frame.x[i]).abs() <= 1e-12)
            };
            let mut leaf = if fixed {
                stationary_leaf(map, frame, bundle, order)?
            } else {
                transported_leaf(map, anchor, frame.x, bundle, order)?.0
            };
            let image = if fixed { leaf.clone() } else { transported_leaf(map, anchor, frame.x, bundle, order)?.1 };
            fit_radius(map, &mut leaf, &image, tol)?;
            Ok(leaf)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledLeaf {
    pub base: Point,
    pub bundle: Bundle,
    pub k: usize,
    /// Half-length of the parameter interval.
    pub half_length: f64,
    pub params: Vec<f64>,
    pub points: Vec<Point>,
}

/// `W^{1,k}_ρ(x)` or `W^{3,k}_ρ(x)` at a fixed point, sampled uniformly in
/// the normal-form parameter with endpoints included.
pub fn scaled_leaf(leaf: &LeafParam, k: usize, rho: f64, samples: usize) -> Result<ScaledLeaf> {
    let factor = match leaf.bundle {
        Bundle::Unstable => leaf.lambda.abs().powi(-(k as i32)),
        Bundle::Stable => leaf.lambda.abs().powi(k as i32),
    };
    let half = rho * factor;
    if !(half.is_finite() && half > 1e-300) || samples < 2 {
        return Err(Error::Domain(half, k as f64, rho));
    }
    if half > leaf.radius * 1.000001 && k > 0 {
        return Err(Error::Domain(half, k as f64, leaf.radius));
    }
    let params: Vec<f64> = (0..samples).map(|i| half * (-1.0 + 2.0 * i as f64 / (samples - 1) as f64)).collect();
    let points = params.iter().map(|&t| leaf.eval(t)).collect();
    Ok(ScaledLeaf { base: leaf.base, bundle: leaf.bundle, k, half_length: half, params, points })
}

/// Largest distance between `f^{±k}` of the scaled-leaf endpoints and the
/// corresponding radius-ρ points of the leaf.
pub fn scaled_endpoint_error(map: &dyn DynMap, leaf: &LeafParam, scaled: &ScaledLeaf, rho: f64) -> f64 {
    let ends = [(scaled.points[0], -rho), (*scaled.points.last().expect("non-empty"), rho)];
    ends.iter()
        .map(|&(mut p, t)| {
            for _ in 0..scaled.k {
                p = match leaf.bundle {
                    Bundle::Unstable => map.forward(p),
                    Bundle::Stable => map.inverse(p),
                };
            }
            let q = leaf.eval(t);
            (0..3).map(|i| (p[i] - q[i]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Two-variable parametrization of the invariant surface tangent to `E¹ ⊕ E³`
/// at a fixed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantBrush {
    pub base: Point,
    pub jets: Vec<Jet>,
    pub lam1: f64,
    pub lam3: f64,
    /// Resonant coefficients whose free value was set to zero.
    pub resonances: Vec<String>,
}

impl InvariantBrush {
    /// Curve `t ↦ Ψ(t, s)`: the leaf through `Ψ(0, s)` along the first variable.
    pub fn leaf_at_s(&self, s: f64) -> Vec<Jet> {
        let order = self.jets[0].order();
        let inner = [Jet::univariate(order, &[0.0, 1.0]), Jet::constant(1, order, s)];
        self.jets.iter().map(|j| j.compose(&inner).expect("arity 2")).collect()
    }

    /// Curve `s ↦ Ψ(t, s)`.
    pub fn leaf_at_t(&self, t: f64) -> Vec<Jet> {
        let order = self.jets[0].order();
        let inner = [Jet::constant(1, order, t), Jet::univariate(order, &[0.0, 1.0])];
        self.jets.iter().map(|j| j.compose(&inner).expect("arity 2")).collect()
    }

    pub fn eval(&self, t: f64, s: f64) -> Point {
        [self.jets[0].eval(&[t, s]), self.jets[1].eval(&[t, s]), self.jets[2].eval(&[t, s])]
    }

    /// Largest coefficient of `f(Ψ(t, s)) − Ψ(λ₁t, λ₃s)`.
    pub fn invariance_defect(&self, map: &dyn DynMap) -> f64 {
        let lhs = map.forward_on(&self.jets);
        let order = self.jets[0].order();
        let inner =
            [Jet::variable(2, order, 0, 0.0).scale(self.lam1), Jet::variable(2, order, 1, 0.0).scale(self.lam3)];
        lhs.iter()
            .zip(&self.jets)
            .map(|(l, j)| {
                let shifted = j.centred().compose(&inner).expect("arity 2").add_constant(j.value());
                l.max_abs_diff(&shifted)
            })
            .fold(0.0, f64::max)
    }
}

/// Solve `f(Ψ(t, s)) = Ψ(λ₁t, λ₃s)` with `Ψ(t, 0) = Φ¹(t)` and `Ψ(0, s) = Φ³(s)`.
///
/// Mixed coefficients follow from `(Df − λ₁^i λ₃^j) Ψ_{ij} = −N_{ij}`. A
/// resonant coefficient with vanishing right-hand side is set to zero and
/// recorded; a non-vanishing one is an error.
pub fn invariant_brush(
    map: &dyn DynMap,
    frame: &SplittingFrame,
    unstable: &LeafParam,
    stable: &LeafParam,
    order: usize,
) -> Result<InvariantBrush> {
    let basis: Matrix3<f64> = frame.basis();
    let basis_inv = basis.try_inverse().ok_or_else(|| Error::Precondition("degenerate frame".into()))?;
    let (l1, l3) = (unstable.lambda, stable.lambda);
    let t = Jet::variable(2, order, 0, 0.0);
    let s = Jet::variable(2, order, 1, 0.0);
    let mut jets: Vec<Jet> = (0..3)
        .map(|i| {
            let a =
                unstable.curve[i].with_order(order).centred().compose(std::slice::from_ref(&t)).expect("univariate");
            let b = stable.curve[i].with_order(order).centred().compose(std::slice::from_ref(&s)).expect("univariate");
            (&a + &b).add_constant(frame.x[i])
        })
        .collect();
    let mut resonances = Vec::new();
    for n in 2..=order {
        let image = map.forward_on(&jets);
        for i in 1..n {
            let e = [i as u8, (n - i) as u8];
            let rhs = Vector3::new(-image[0].get(&e), -image[1].get(&e), -image[2].get(&e));
            let mu = l1.powi(i as i32) * l3.powi((n - i) as i32);
            let what = format!("t^{i} s^{}", n - i);
            let c = solve_homological(&basis, &basis_inv, frame.lams(), mu, rhs, &what, &mut resonances)?;
            for k in 0..3 {
                jets[k].set(&e, c[k]);
            }
        }
    }
    Ok(InvariantBrush { base: frame.x, jets, lam1: l1, lam3: l3, resonances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, ModelMap};
    use crate::splitting::{compute_frame, OrbitSegment, MAX_POWER};
    use approx::assert_abs_diff_eq;

    fn setup(kind: ModelKind) -> (ModelMap, SplittingFrame) {
        let m = ModelMap::with_defaults(kind);
        let f = compute_frame(&m, [0.0; 3], MAX_POWER).unwrap();
        (m, f)
    }

    #[test]
    fn linear_model_leaves_are_axes() {
        for kind in [ModelKind::A, ModelKind::B] {
            let (m, f) = setup(kind);
            let u = stationary_leaf(&m, &f, Bundle::Unstable, 8).unwrap();
            let s = stationary_leaf(&m, &f, Bundle::Stable, 8).unwrap();
            for k in 0..=8 {
                let want_u = [if k == 1 { 1.0 } else { 0.0 }, 0.0, 0.0];
                let want_s = [0.0, 0.0, if k == 1 { 1.0 } else { 0.0 }];
                for i in 0..3 {
                    assert_abs_diff_eq!(u.curve[i].c(k), want_u[i], epsilon = 1e-12);
                    assert_abs_diff_eq!(s.curve[i].c(k), want_s[i], epsilon = 1e-12);
                }
            }
        }
    }

    /// Graph-transform oracle: iterate candidate graphs `x₂ = g·x₃` over the
    /// vertical line `x₁ = a` under `f⁻¹` from far along the forward orbit.
    fn graph_transform_slope(m: &ModelMap, a: f64) -> f64 {
        let n = 40;
        let mut slope = 0.0;
        for j in (0..n).rev() {
            let x1 = a * m.params.l1.powi(j);
            // a graph x₂ = g x₃ over x₁ = λ₁ x₁' pulls back to x₂ = g' x₃ with
            // λ₂ g' + ε x₁' = g λ₃
            slope = (slope * m.params.l3 - m.params.eps * x1) / m.params.l2;
        }
        slope
    }

    #[test]
    fn shear_stable_leaf_off_axis() {
        let (m, f) = setup(ModelKind::B);
        let (leaf, image) = transported_leaf(&m, &f, [0.3, 0.0, 0.0], Bundle::Stable, 8).unwrap();
        let c = 0.1 / (0.6 - 1.2);
        assert_abs_diff_eq!(c, -1.0 / 6.0, epsilon = 1e-15);
        // the leaf is {(0.3, c·0.3·u, u)}; reparametrize by height
        let speed = leaf.curve[2].c(1);
        assert_abs_diff_eq!(leaf.curve[0].c(1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(leaf.curve[1].c(1) / speed, c * 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(graph_transform_slope(&m, 0.3), c * 0.3, epsilon = 1e-10);
        for k in 2..=8 {
            for i in 0..3 {
                assert!(leaf.curve[i].c(k).abs() < 1e-10);
            }
        }
        assert!(conjugacy_residual(&m, &leaf, &image, 0.5) < 1e-9);
    }

    #[test]
    fn conjugacy_at_fixed_point_for_all_models() {
        for kind in [ModelKind::A, ModelKind::B, ModelKind::C] {
            let (m, f) = setup(kind);
            let seg = OrbitSegment::build(&m, [0.0; 3], 1, MAX_POWER).unwrap();
            for bundle in [Bundle::Unstable, Bundle::Stable] {
                let leaves = build_leaf_param(&m, &seg, bundle, 8, 1e-7).unwrap();
                for leaf in &leaves {
                    assert!(conjugacy_residual(&m, leaf, leaf, leaf.radius) <= 1e-7);
                    assert_abs_diff_eq!(leaf.tangent().norm(), 1.0, epsilon = 1e-14);
                }
            }
            let _ = f;
        }
    }

    #[test]
    fn unstable_transport_on_unstable_axis() {
        let (m, f) = setup(ModelKind::C);
        let y = [0.2, 0.0, 0.0];
        let (leaf, image) = transported_leaf(&m, &f, y, Bundle::Unstable, 8).unwrap();
        assert_abs_diff_eq!(leaf.lambda, 2.0, epsilon = 1e-10);
        assert!(conjugacy_residual(&m, &leaf, &image, 0.3) < 1e-9);
        assert_abs_diff_eq!(leaf.eval(0.1)[0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn scaled_unstable_pieces() {
        let (m, f) = setup(ModelKind::A);
        let mut leaf = stationary_leaf(&m, &f, Bundle::Unstable, 8).unwrap();
        leaf.radius = 1.0;
        let w = scaled_leaf(&leaf, 3, 1.0, 5).unwrap();
        assert_abs_diff_eq!(w.half_length, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(w.points[0][0], -0.125, epsilon = 1e-15);
        let w0 = scaled_leaf(&leaf, 0, 0.5, 5).unwrap();
        assert_abs_diff_eq!(w0.half_length, 0.5, epsilon = 1e-15);

        let (m, f) = setup(ModelKind::C);
        let mut leaf = stationary_leaf(&m, &f, Bundle::Unstable, 8).unwrap();
        leaf.radius = 1.0;
        let w = scaled_leaf(&leaf, 5, 1.0, 9).unwrap();
        assert_abs_diff_eq!(w.half_length, 1.0 / 32.0, epsilon = 1e-15);
        assert!(scaled_endpoint_error(&m, &leaf, &w, 1.0) < 1e-8);
    }

    #[test]
    fn brush_of_skew_models() {
        for (kind, h1) in [(ModelKind::B, -1.0 / 6.0), (ModelKind::C, -1.0 / 6.0)] {
            let (m, f) = setup(kind);
            let u = stationary_leaf(&m, &f, Bundle::Unstable, 10).unwrap();
            let s = stationary_leaf(&m, &f, Bundle::Stable, 10).unwrap();
            let brush = invariant_brush(&m, &f, &u, &s, 10).unwrap();
            assert!(brush.invariance_defect(&m) < 1e-12);
            assert_abs_diff_eq!(brush.jets[1].get(&[1, 1]), h1, epsilon = 1e-12);
            // resonance λ₁²λ₃ = λ₂ at t²s is recorded and left at zero
            assert!(brush.resonances.iter().any(|r| r.starts_with("t^2 s^1")));
            assert!(brush.jets[1].get(&[2, 1]).abs() < 1e-15);
        }
        // model C: second component is s·H(t) with H_m = ε σ_m / (λ₃ λ₁^m − λ₂)
        let (m, f) = setup(ModelKind::C);
        let u = stationary_leaf(&m, &f, Bundle::Unstable, 10).unwrap();
        let s = stationary_leaf(&m, &f, Bundle::Stable, 10).unwrap();
        let brush = invariant_brush(&m, &f, &u, &s, 10).unwrap();
        for mpow in [3u8, 5, 7, 9] {
            let sigma = if (mpow / 2) % 2 == 0 { 1.0 } else { -1.0 } / crate::jets::factorial(mpow as usize);
            let want = 0.1 * sigma / (0.3 * 2f64.powi(mpow as i32) - 1.2);
            assert_abs_diff_eq!(brush.jets[1].get(&[mpow, 1]), want, epsilon = 1e-14);
        }
    }
}
