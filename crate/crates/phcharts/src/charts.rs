//! Unstable charts and the normal form of their transverse cocycle.
//!
//! A chart `ι_x` is a trivariate jet whose first and third axes are the
//! normal-form leaves through `x`. The conjugated map `F = ι⁻¹∘f∘ι` acts on
//! the transverse plane over the unstable axis by a 2×2 linear cocycle over
//! `t ↦ λ₁t`; the reductions below make that cocycle upper triangular with
//! constant diagonal and polynomial off-diagonal entry. All anchors are fixed
//! points, so the cocycle is stationary and every object is a power series in
//! `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{compose_maps, invert_map, Jet};
use crate::models::{DynMap, Point};
use crate::nform::{rescale, stationary_leaf, Bundle, LeafParam};
use crate::splitting::SplittingFrame;

pub const SERIES_TOL: f64 = 1e-14;
pub const MAX_TERMS: usize = 500;
/// Tolerance for the chart invariants, checked on a 41-point grid.
pub const CHART_TOL: f64 = 1e-8;
pub const POLY_TAIL_TOL: f64 = 1e-8;

/// 2×2 matrix of univariate jets.
pub type JetMatrix = [[Jet; 2]; 2];

fn jet_matrix_mul(a: &JetMatrix, b: &JetMatrix) -> JetMatrix {
    let entry = |i: usize, j: usize| &(&a[i][0] * &b[0][j]) + &(&a[i][1] * &b[1][j]);
    [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]]
}

fn jet_matrix_inverse(m: &JetMatrix) -> Result<JetMatrix> {
    let det = &(&m[0][0] * &m[1][1]) - &(&m[0][1] * &m[1][0]);
    let inv = det.recip()?;
    Ok([[&m[1][1] * &inv, -&(&m[0][1] * &inv)], [-&(&m[1][0] * &inv), &m[0][0] * &inv]])
}

fn identity_matrix(order: usize) -> JetMatrix {
    let one = Jet::constant(1, order, 1.0);
    let zero = Jet::zero(1, order);
    [[one.clone(), zero.clone()], [zero, one]]
}

/// Univariate jet `t ↦ coefficient of y₂^{j2} y₃^{j3}` of a trivariate jet.
pub fn axis_coefficient(j: &Jet, j2: usize, j3: usize) -> Jet {
    let order = j.order() - (j2 + j3).min(j.order());
    let coeffs: Vec<f64> = (0..=order).map(|k| j.get(&[k as u8, j2 as u8, j3 as u8])).collect();
    Jet::univariate(order, &coeffs)
}

fn grid(radius: f64) -> impl Iterator<Item = f64> {
    (0..41).map(move |i| radius * (-1.0 + 2.0 * i as f64 / 40.0))
}

fn sup_on_grid(j: &Jet, radius: f64) -> f64 {
    grid(radius).map(|t| j.eval(&[t]).abs()).fold(0.0, f64::max)
}

/// A stationary 2×2 cocycle `A(t)` over `t ↦ rate·t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cocycle2 {
    pub rate: f64,
    pub radius: f64,
    pub matrix: JetMatrix,
}

/// Upper triangular form together with the accumulated basis change `B(t)`,
/// so that the input cocycle `A` satisfies `B(rate·t)⁻¹ A(t) B(t) = [[α, p], [q, β]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangularCocycle {
    pub rate: f64,
    pub radius: f64,
    pub alpha: Jet,
    pub beta: Jet,
    pub upper: Jet,
    /// Residual lower-left entry.
    pub lower: Jet,
    pub basis: JetMatrix,
    pub degree: Option<usize>,
}

impl TriangularCocycle {
    pub fn lower_sup(&self) -> f64 {
        sup_on_grid(&self.lower, self.radius)
    }

    /// Largest deviation of either diagonal entry from its value at 0 on the grid.
    pub fn diagonal_variation(&self) -> f64 {
        [&self.alpha, &self.beta].iter().map(|j| sup_on_grid(&j.centred(), self.radius)).fold(0.0, f64::max)
    }

    /// Largest off-diagonal coefficient beyond `degree`.
    pub fn tail(&self, degree: usize) -> f64 {
        (degree + 1..=self.upper.order()).map(|k| self.upper.c(k).abs()).fold(0.0, f64::max)
    }

    pub fn as_matrix(&self) -> JetMatrix {
        [[self.alpha.clone(), self.upper.clone()], [self.lower.clone(), self.beta.clone()]]
    }
}

/// `B(rate·t)⁻¹ A(t) B(t)`.
pub fn conjugate_cocycle(a: &JetMatrix, b: &JetMatrix, rate: f64) -> Result<JetMatrix> {
    let b_next = b.clone().map(|row| row.map(|j| rescale(&j, rate)));
    Ok(jet_matrix_mul(&jet_matrix_inverse(&b_next)?, &jet_matrix_mul(a, b)))
}

/// Transverse derivative of `F` along the unstable axis.
pub fn quotient_cocycle(fmap: &[Jet], rate: f64, radius: f64) -> Cocycle2 {
    Cocycle2 {
        rate,
        radius,
        matrix: [
            [axis_coefficient(&fmap[1], 1, 0), axis_coefficient(&fmap[1], 0, 1)],
            [axis_coefficient(&fmap[2], 1, 0), axis_coefficient(&fmap[2], 0, 1)],
        ],
    }
}

/// Kill the lower-left entry with a shear `[[1, 0], [p, 1]]`, where `p` solves
/// `p(rate·t)(α + r p) = q + β p`.
pub fn triangularize(c: &Cocycle2) -> Result<TriangularCocycle> {
    let [[alpha, r], [q, beta]] = &c.matrix;
    let order = alpha.order();
    let ratio = (beta.value() / alpha.value()).abs();
    if !(ratio < 1.0) {
        return Err(Error::Divergent { what: "triangularization (domination)".into(), ratio });
    }
    if q.value().abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "lower-left entry {:.3e} at the base point; the frame is not adapted",
            q.value()
        )));
    }
    let mut p = Jet::zero(1, order);
    let mut converged = q.max_abs() == 0.0;
    for _ in 0..MAX_TERMS {
        if converged {
            break;
        }
        let num = q + &(beta * &p);
        let den = (alpha + &(r * &p)).recip()?;
        let next = rescale(&(&num * &den), 1.0 / c.rate);
        let change = next.max_abs_diff(&p);
        p = next;
        converged = change <= SERIES_TOL * p.max_abs().max(1.0);
    }
    if !converged {
        return Err(Error::NoConvergence { what: "triangularization series".into(), residual: f64::NAN });
    }
    let one = Jet::constant(1, order, 1.0);
    let basis = [[one.clone(), Jet::zero(1, order)], [p.clone(), one]];
    let m = conjugate_cocycle(&c.matrix, &basis, c.rate)?;
    let [[a, u], [l, b]] = m;
    Ok(TriangularCocycle { rate: c.rate, radius: c.radius, alpha: a, beta: b, upper: u, lower: l, basis, degree: None })
}

/// Rescale the basis by `diag(e^c, e^{c⊥})` so both diagonal entries become
/// their values at the base point.
pub fn constant_diagonal(tc: &TriangularCocycle) -> Result<TriangularCocycle> {
    let log_drift = |d: &Jet, name: &str| -> Result<Jet> {
        let d0 = d.value();
        if d0 == 0.0 || grid(tc.radius).any(|t| d.eval(&[t]) * d0 <= 0.0) {
            return Err(Error::Precondition(format!("{name} diagonal changes sign on the grid")));
        }
        let b = d.scale(1.0 / d0).ln()?;
        let mut c = b.clone();
        c.coeffs_mut()[0] = 0.0;
        for k in 1..=c.order() {
            c.coeffs_mut()[k] = b.c(k) / (tc.rate.powi(k as i32) - 1.0);
        }
        Ok(c)
    };
    let c = log_drift(&tc.alpha, "first")?;
    let c_perp = log_drift(&tc.beta, "second")?;
    let order = c.order();
    let b2 = [[c.exp(), Jet::zero(1, order)], [Jet::zero(1, order), c_perp.exp()]];
    let basis = jet_matrix_mul(&tc.basis, &b2);
    let [[a, u], [l, b]] = conjugate_cocycle(&tc.as_matrix(), &b2, tc.rate)?;
    Ok(TriangularCocycle { alpha: a, beta: b, upper: u, lower: l, basis, ..tc.clone() })
}

/// `⌊(α − β)/χ₁⌋ + 1`, treating quotients within 1e−9 of an integer as that integer.
pub fn offdiag_degree(log_alpha: f64, log_beta: f64, chi1: f64) -> usize {
    let q = (log_alpha - log_beta) / chi1;
    let n = q.round();
    let fl = if (q - n).abs() <= 1e-9 { n } else { q.floor() };
    (fl.max(-1.0) + 1.0) as usize
}

/// Coefficients of `u` solving `α u(t) + r(t) − β u(rate·t) = head(r)`,
/// where `head` keeps degrees `≤ degree`.
pub fn polynomial_shear(r: &Jet, alpha: f64, beta: f64, rate: f64, degree: usize) -> Result<Jet> {
    let mut u = Jet::zero(1, r.order());
    for k in degree + 1..=r.order() {
        let ratio = (alpha / (beta * rate.powi(k as i32))).abs();
        if !(ratio < 1.0) {
            return Err(Error::Divergent { what: format!("off-diagonal series at degree {k}"), ratio });
        }
        u.coeffs_mut()[k] = r.c(k) / (beta * rate.powi(k as i32) - alpha);
    }
    Ok(u)
}

/// Shear the basis by `[[1, u], [0, 1]]` so the off-diagonal entry becomes a
/// polynomial of degree `⌊(log α − log β)/χ₁⌋ + 1`.
pub fn polynomialize_offdiagonal(tc: &TriangularCocycle, chi1: f64) -> Result<TriangularCocycle> {
    if tc.diagonal_variation() > 1e-9 {
        return Err(Error::Precondition("diagonal entries are not constant".into()));
    }
    let (alpha, beta) = (tc.alpha.value(), tc.beta.value());
    let degree = offdiag_degree(alpha.abs().ln(), beta.abs().ln(), chi1);
    let u = polynomial_shear(&tc.upper, alpha, beta, tc.rate, degree)?;
    let order = u.order();
    let one = Jet::constant(1, order, 1.0);
    let b3 = [[one.clone(), u], [Jet::zero(1, order), one]];
    let basis = jet_matrix_mul(&tc.basis, &b3);
    let [[a, p], [l, b]] = conjugate_cocycle(&tc.as_matrix(), &b3, tc.rate)?;
    Ok(TriangularCocycle { alpha: a, beta: b, upper: p, lower: l, basis, degree: Some(degree), ..tc.clone() })
}

/// Off-diagonal polynomial recorded for one goodness level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelData {
    pub level: usize,
    pub degree: usize,
    /// Taylor coefficients of the `y₃^{level+1}` coefficient of `F₂` along the axis.
    pub off_diagonal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub base: Point,
    pub order: usize,
    pub level: usize,
    /// False for the leaf-adapted chart before the cocycle reductions.
    pub good: bool,
    pub radius: f64,
    /// `(λ₁, λ₂, λ₃)` at the base point.
    pub lams: [f64; 3],
    /// `ι`, in deviation variables, with constant terms `x`.
    pub iota: Vec<Jet>,
    /// `F = ι⁻¹∘f∘ι`, deviation in and out.
    pub fmap: Vec<Jet>,
    pub unstable: LeafParam,
    pub stable: LeafParam,
    pub cocycle: TriangularCocycle,
    pub levels: Vec<LevelData>,
}

impl Chart {
    pub fn eval(&self, y: [f64; 3]) -> Point {
        [self.iota[0].eval(&y), self.iota[1].eval(&y), self.iota[2].eval(&y)]
    }

    /// Coefficient jet of `y₂^{j2} y₃^{j3}` in component `i` of `F`.
    pub fn f_axis(&self, i: usize, j2: usize, j3: usize) -> Jet {
        axis_coefficient(&self.fmap[i], j2, j3)
    }

    /// Solve `ι(c(σ)) = target(σ)` for univariate jets `c` with `c(0)` near `start`.
    pub fn pull_curve(&self, target: &[Jet], start: [f64; 3]) -> Result<Vec<Jet>> {
        let order = target[0].order();
        let base = start;
        let jac = {
            let lin = Jet::identity_map(&base, 1);
            let d = compose_maps(&self.iota, &lin)?;
            nalgebra::Matrix3::from_fn(|r, c| {
                let mut e = [0u8; 3];
                e[c] = 1;
                d[r].get(&e)
            })
        };
        let jinv = jac.try_inverse().ok_or_else(|| Error::Precondition("singular chart".into()))?;
        let mut c: Vec<Jet> = (0..3).map(|i| Jet::constant(1, order, base[i])).collect();
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let img = compose_maps(&self.iota, &c)?;
            let res: Vec<Jet> = img.iter().zip(target).map(|(a, b)| a - b).collect();
            let size = res.iter().map(Jet::max_abs).fold(0.0, f64::max);
            if size <= 1e-15 || (size >= last && size < 1e-12) {
                return Ok(c);
            }
            last = size;
            c = (0..3)
                .map(|r| {
                    let mut acc = c[r].clone();
                    for k in 0..3 {
                        acc = &acc - &res[k].scale(jinv[(r, k)]);
                    }
                    acc
                })
                .collect();
        }
        Err(Error::NoConvergence { what: "chart pullback".into(), residual: last })
    }
}

fn lift_univariate(j: &Jet, var: usize, order: usize) -> Jet {
    let v = Jet::variable(3, order, var, 0.0);
    j.with_order(order).compose(std::slice::from_ref(&v)).expect("univariate")
}

/// Chart whose axes are the normal-form leaves and whose middle direction is `e₂`.
pub fn leaf_adapted_chart(unstable: &LeafParam, stable: &LeafParam, frame: &SplittingFrame, order: usize) -> Vec<Jet> {
    (0..3)
        .map(|i| {
            let a = lift_univariate(&unstable.curve[i], 0, order);
            let b = lift_univariate(&stable.curve[i].centred(), 2, order);
            let m = Jet::variable(3, order, 1, 0.0).scale(frame.e2[i]);
            &(&a + &b) + &m
        })
        .collect()
}

/// `ι⁻¹∘f∘ι` for a chart centred at the fixed point `x`.
pub fn conjugated_map(map: &dyn DynMap, iota: &[Jet], x: Point) -> Result<Vec<Jet>> {
    let image: Vec<Jet> = map.forward_on(iota).into_iter().zip(x).map(|(j, xi)| j.add_constant(-xi)).collect();
    let inverse = invert_map(iota, &[0.0; 3])?;
    compose_maps(&inverse, &image)
}

/// Fibre change `(t, y) ↦ (t, B(t) y)` as a trivariate map.
fn fibre_map(b: &JetMatrix, order: usize) -> Vec<Jet> {
    let t = Jet::variable(3, order, 0, 0.0);
    let y2 = Jet::variable(3, order, 1, 0.0);
    let y3 = Jet::variable(3, order, 2, 0.0);
    let lift = |j: &Jet| lift_univariate(j, 0, order);
    vec![t, &(&lift(&b[0][0]) * &y2) + &(&lift(&b[0][1]) * &y3), &(&lift(&b[1][0]) * &y2) + &(&lift(&b[1][1]) * &y3)]
}

/// Degree bound for the `y₃^{m}` coefficient of `F₂`.
pub fn level_degree(lams: [f64; 3], m: usize) -> usize {
    let [l1, l2, l3] = lams.map(f64::abs);
    offdiag_degree(l2.ln(), m as f64 * l3.ln(), l1.ln())
}

/// 0-good unstable chart at a fixed point.
pub fn build_unstable_chart(map: &dyn DynMap, frame: &SplittingFrame, order: usize, radius: f64) -> Result<Chart> {
    if order < 2 {
        return Err(Error::Precondition("chart order must be at least 2".into()));
    }
    let unstable = stationary_leaf(map, frame, Bundle::Unstable, order)?;
    let stable = stationary_leaf(map, frame, Bundle::Stable, order)?;
    let iota0 = leaf_adapted_chart(&unstable, &stable, frame, order);
    let f0 = conjugated_map(map, &iota0, frame.x)?;
    let rate = unstable.lambda;
    let tri = triangularize(&quotient_cocycle(&f0, rate, radius))?;
    let diag = constant_diagonal(&tri)?;
    let cocycle = polynomialize_offdiagonal(&diag, rate.abs().ln())?;
    let g = fibre_map(&cocycle.basis, order);
    let g_inv = fibre_map(&jet_matrix_inverse(&cocycle.basis)?, order);
    let iota = compose_maps(&iota0, &g)?;
    let fmap = compose_maps(&g_inv, &compose_maps(&f0, &g)?)?;
    let degree = cocycle.degree.expect("set by polynomialization");
    let chart = Chart {
        base: frame.x,
        order,
        level: 0,
        good: true,
        radius,
        lams: [rate, cocycle.alpha.value(), cocycle.beta.value()],
        levels: vec![LevelData { level: 0, degree, off_diagonal: axis_coefficient(&fmap[1], 0, 1).coeffs().to_vec() }],
        iota,
        fmap,
        unstable,
        stable,
        cocycle,
    };
    check_chart(&chart)?;
    Ok(chart)
}

/// The leaf-adapted chart itself, without the cocycle reductions. Its
/// transverse cocycle is recorded but its off-diagonal entry need not be
/// polynomial.
pub fn build_adapted_chart(map: &dyn DynMap, frame: &SplittingFrame, order: usize, radius: f64) -> Result<Chart> {
    let unstable = stationary_leaf(map, frame, Bundle::Unstable, order)?;
    let stable = stationary_leaf(map, frame, Bundle::Stable, order)?;
    let iota = leaf_adapted_chart(&unstable, &stable, frame, order);
    let fmap = conjugated_map(map, &iota, frame.x)?;
    let cocycle = triangularize(&quotient_cocycle(&fmap, unstable.lambda, radius))?;
    Ok(Chart {
        base: frame.x,
        order,
        level: 0,
        good: false,
        radius,
        lams: [unstable.lambda, cocycle.alpha.value(), cocycle.beta.value()],
        levels: Vec::new(),
        iota,
        fmap,
        unstable,
        stable,
        cocycle,
    })
}

/// Verify the axis, triangularity and goodness conditions of a chart.
pub fn check_chart(chart: &Chart) -> Result<()> {
    let r = chart.radius;
    let fail = |what: &str, v: f64| -> Result<()> {
        if v > CHART_TOL {
            return Err(Error::Precondition(format!("{what}: residual {v:.3e}")));
        }
        Ok(())
    };
    for i in 0..3 {
        let axis1 = axis_coefficient(&chart.iota[i], 0, 0);
        fail("first axis", sup_on_grid(&(&axis1 - &chart.unstable.curve[i].with_order(chart.order)), r))?;
        let coeffs: Vec<f64> = (0..=chart.order).map(|k| chart.iota[i].get(&[0, 0, k as u8])).collect();
        let axis3 = Jet::univariate(chart.order, &coeffs);
        fail("third axis", sup_on_grid(&(&axis3 - &chart.stable.curve[i].with_order(chart.order)), r))?;
    }
    let [_, l2, l3] = chart.lams;
    fail("d2 F2", sup_on_grid(&chart.f_axis(1, 1, 0).add_constant(-l2), r))?;
    fail("d3 F3", sup_on_grid(&chart.f_axis(2, 0, 1).add_constant(-l3), r))?;
    fail("d2 F3", sup_on_grid(&chart.f_axis(2, 1, 0), r))?;
    for i in 0..=chart.level {
        fail("vanishing transverse coefficient", sup_on_grid(&chart.f_axis(1, 0, i), r))?;
    }
    let Some(level) = chart.levels.last() else {
        return Err(Error::Precondition("chart has no goodness data".into()));
    };
    let top = chart.f_axis(1, 0, chart.level + 1);
    let lead = (0..=level.degree.min(top.order())).map(|k| top.c(k).abs()).fold(1.0, f64::max);
    let tail = (level.degree + 1..=top.order()).map(|k| top.c(k).abs()).fold(0.0, f64::max);
    if tail > POLY_TAIL_TOL * lead {
        return Err(Error::Precondition(format!("off-diagonal tail {tail:.3e} beyond degree {}", level.degree)));
    }
    Ok(())
}

/// The cocycle `[[λ₂, R(t)], [0, λ₃^{ℓ+1}]]` on `(b, c^{ℓ+1})`, with `R` the
/// Taylor coefficient of `y₃^{ℓ+1}` in `F₂` along the axis.
pub fn elljet_cocycle(chart: &Chart, level: usize) -> Result<TriangularCocycle> {
    for i in 0..=level {
        let v = sup_on_grid(&chart.f_axis(1, 0, i), chart.radius);
        if i > 0 && v > 1e-7 {
            return Err(Error::Precondition(format!(
                "chart not {}-good on this leaf (order-{i} coefficient {v:.3e})",
                level as isize - 1
            )));
        }
    }
    let upper = chart.f_axis(1, 0, level + 1);
    let order = upper.order();
    let [_, l2, l3] = chart.lams;
    Ok(TriangularCocycle {
        rate: chart.lams[0],
        radius: chart.radius,
        alpha: Jet::constant(1, order, l2),
        beta: Jet::constant(1, order, l3.powi(level as i32 + 1)),
        lower: Jet::zero(1, order),
        upper,
        basis: identity_matrix(order),
        degree: Some(level_degree(chart.lams, level + 1)),
    })
}

/// Raise the goodness level with `ψ(t, u, s) = (t, u + T(t) s^{ℓ+1}, s)`,
/// where `T` has Taylor coefficients `template`, then polynomialize the next
/// transverse coefficient.
pub fn improve_chart(chart: &Chart, template: &[f64]) -> Result<Chart> {
    if !chart.good {
        return Err(Error::Precondition("only good charts can be improved".into()));
    }
    let order = chart.order;
    let m = chart.level + 1;
    let shear = |w: &Jet, power: usize, sign: f64| -> Vec<Jet> {
        let t = Jet::variable(3, order, 0, 0.0);
        let s = Jet::variable(3, order, 2, 0.0);
        let bump = &lift_univariate(w, 0, order) * &s.powi(power);
        vec![t, &Jet::variable(3, order, 1, 0.0) + &bump.scale(sign), s]
    };
    let tmpl = Jet::univariate(order, &template.iter().copied().take(order + 1).collect::<Vec<_>>());
    let iota1 = compose_maps(&chart.iota, &shear(&tmpl, m, 1.0))?;
    let f1 = compose_maps(&shear(&tmpl, m, -1.0), &compose_maps(&chart.fmap, &shear(&tmpl, m, 1.0))?)?;
    let left = axis_coefficient(&f1[1], 0, m);
    if let Some((t, v)) = grid(chart.radius).map(|t| (t, left.eval(&[t]).abs())).max_by(|a, b| a.1.total_cmp(&b.1)) {
        if v > 1e-7 {
            return Err(Error::Residual { t, residual: v });
        }
    }
    let [l1, l2, l3] = chart.lams;
    let next = m + 1;
    let degree = level_degree(chart.lams, next);
    let w = polynomial_shear(&axis_coefficient(&f1[1], 0, next), l2, l3.powi(next as i32), l1, degree)?;
    let iota = compose_maps(&iota1, &shear(&w, next, 1.0))?;
    let fmap = compose_maps(&shear(&w, next, -1.0), &compose_maps(&f1, &shear(&w, next, 1.0))?)?;
    let mut levels = chart.levels.clone();
    levels.push(LevelData { level: m, degree, off_diagonal: axis_coefficient(&fmap[1], 0, next).coeffs().to_vec() });
    let out = Chart { level: m, iota, fmap, levels, ..chart.clone() };
    check_chart(&out)?;
    Ok(out)
}

/// Transverse jet `s ↦ ι⁻¹(f(ι(t, 0, s)))` at a single `t`, exact in `t`.
pub fn transverse_jet(map: &dyn DynMap, chart: &Chart, t: f64, order: usize) -> Result<Vec<Jet>> {
    let curve = [Jet::constant(1, order, t), Jet::zero(1, order), Jet::univariate(order, &[0.0, 1.0])];
    let image = map.forward_on(&compose_maps(&chart.iota, &curve)?);
    chart.pull_curve(&image, [chart.lams[0] * t, 0.0, 0.0])
}
