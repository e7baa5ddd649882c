//! Spread sets and polynomial / rational approximation diagnostics on `[-1, 1]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite set `E ⊂ [−1, 1]` with spread parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadSet {
    pub points: Vec<f64>,
    pub k: usize,
    pub sigma: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpreadWitness {
    /// `k+1` points, pairwise more than `σ` apart, that no admissible family removes.
    Survivors(Vec<f64>),
    /// An interval family of total length `< η` leaving at most `k` separated points.
    Cover(Vec<(f64, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadVerdict {
    pub spread: bool,
    pub witness: SpreadWitness,
}

fn sorted_distinct(points: &[f64]) -> Vec<f64> {
    let mut e = points.to_vec();
    e.sort_by(f64::total_cmp);
    e.dedup();
    e
}

/// Greedy maximal subset with pairwise gaps `> sigma` (optimal on the line).
fn separated(points: impl IntoIterator<Item = f64>, sigma: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for p in points {
        if out.last().is_none_or(|&q| p - q > sigma) {
            out.push(p);
        }
    }
    out
}

/// Decide whether `E` is `(k, σ, η)`-spread.
///
/// A point `e` is removed by an interval family when one interval contains
/// `[e − σ, e + σ]`, so removing a consecutive group `e_a ≤ … ≤ e_b` with one
/// interval costs `e_b − e_a + 2σ`. The adversary's cheapest way to bring the
/// number of separated survivors down to `k` is found by dynamic programming
/// over the sorted points.
pub fn spread_check(set: &SpreadSet) -> SpreadVerdict {
    let e = sorted_distinct(&set.points);
    let n = e.len();
    let cap = set.k + 1;
    let sigma = set.sigma;
    // state: (last kept pick + 1 or 0, picks capped at k+1, previous point removed)
    let idx = |last: usize, cnt: usize, rem: usize| (last * (cap + 1) + cnt) * 2 + rem;
    let size = (n + 1) * (cap + 1) * 2;
    let mut cost = vec![f64::INFINITY; size];
    let mut parents: Vec<Vec<Option<usize>>> = Vec::with_capacity(n);
    cost[idx(0, 0, 0)] = 0.0;
    for i in 0..n {
        let mut next = vec![f64::INFINITY; size];
        let mut parent = vec![None; size];
        for last in 0..=n {
            for cnt in 0..=cap {
                for rem in 0..2 {
                    let c = cost[idx(last, cnt, rem)];
                    if !c.is_finite() {
                        continue;
                    }
                    let from = idx(last, cnt, rem);
                    // keep point i
                    let (nl, nc) =
                        if last == 0 || e[i] - e[last - 1] > sigma { (i + 1, (cnt + 1).min(cap)) } else { (last, cnt) };
                    let to = idx(nl, nc, 0);
                    if c < next[to] {
                        next[to] = c;
                        parent[to] = Some(from);
                    }
                    // remove point i
                    let step = if rem == 1 { (e[i] - e[i - 1]).min(2.0 * sigma) } else { 2.0 * sigma };
                    let to = idx(last, cnt, 1);
                    if c + step < next[to] {
                        next[to] = c + step;
                        parent[to] = Some(from);
                    }
                }
            }
        }
        cost = next;
        parents.push(parent);
    }
    let best = (0..=n)
        .flat_map(|last| (0..cap).flat_map(move |cnt| (0..2).map(move |rem| idx(last, cnt, rem))))
        .filter(|&s| cost[s] < set.eta)
        .min_by(|&a, &b| cost[a].total_cmp(&cost[b]));
    match best {
        None => {
            let survivors = separated(e.iter().copied(), sigma).into_iter().take(cap).collect();
            SpreadVerdict { spread: true, witness: SpreadWitness::Survivors(survivors) }
        }
        Some(mut state) => {
            let mut removed = vec![false; n];
            for i in (0..n).rev() {
                removed[i] = state % 2 == 1;
                state = parents[i][state].expect("reachable state has a parent");
            }
            let mut cover: Vec<(f64, f64)> = Vec::new();
            for i in 0..n {
                if !removed[i] {
                    continue;
                }
                match cover.last_mut() {
                    Some(last) if removed[i - 1] && e[i] - e[i - 1] <= 2.0 * sigma => last.1 = e[i] + sigma,
                    _ => cover.push((e[i] - sigma, e[i] + sigma)),
                }
            }
            SpreadVerdict { spread: false, witness: SpreadWitness::Cover(cover) }
        }
    }
}

/// Chebyshev polynomials `T_0..T_d` at `x`.
fn cheb_row(x: f64, d: usize) -> Vec<f64> {
    let mut row = vec![1.0; d + 1];
    if d >= 1 {
        row[1] = x;
    }
    for k in 2..=d {
        row[k] = 2.0 * x * row[k - 1] - row[k - 2];
    }
    row
}

pub fn cheb_eval(coeffs: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = c + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// Monomial coefficients of a Chebyshev series.
pub fn cheb_to_monomial(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut out = vec![0.0; n.max(1)];
    let mut prev = vec![1.0];
    let mut cur = vec![0.0, 1.0];
    for (k, &c) in coeffs.iter().enumerate() {
        let basis = match k {
            0 => prev.clone(),
            1 => cur.clone(),
            _ => {
                let mut next = vec![0.0; k + 1];
                for (i, &v) in cur.iter().enumerate() {
                    next[i + 1] += 2.0 * v;
                }
                for (i, &v) in prev.iter().enumerate() {
                    next[i] -= v;
                }
                prev = std::mem::replace(&mut cur, next);
                cur.clone()
            }
        };
        for (i, &b) in basis.iter().enumerate() {
            out[i] += c * b;
        }
    }
    out
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn lstsq(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::NoConvergence { what: format!("least squares ({e})"), residual: f64::NAN })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub degree: usize,
    /// Chebyshev coefficients on `[-1, 1]`.
    pub cheb: Vec<f64>,
    pub distance: f64,
    pub iterations: usize,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        cheb_eval(&self.cheb, x)
    }

    pub fn monomial(&self) -> Vec<f64> {
        cheb_to_monomial(&self.cheb)
    }
}

fn check_samples(xs: &[f64], vs: &[f64], need: usize) -> Result<()> {
    if xs.len() != vs.len() {
        return Err(Error::Precondition("sample abscissae and values differ in length".into()));
    }
    if xs.iter().any(|x| !(-1.0..=1.0).contains(x)) || vs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("samples must be finite and lie in [-1, 1]".into()));
    }
    let distinct = sorted_distinct(xs).len();
    if distinct < need {
        return Err(Error::Precondition(format!("{distinct} distinct sample points, {need} needed")));
    }
    Ok(())
}

/// Least-squares fit in the Chebyshev basis.
pub fn least_squares_poly(xs: &[f64], vs: &[f64], d: usize) -> Result<Vec<f64>> {
    check_samples(xs, vs, d + 1)?;
    let a = DMatrix::from_fn(xs.len(), d + 1, |i, j| cheb_row(xs[i], d)[j]);
    Ok(lstsq(a, DVector::from_column_slice(vs))?.iter().copied().collect())
}

fn levelled_fit(xs: &[f64], vs: &[f64], reference: &[usize], d: usize) -> Result<(Vec<f64>, f64)> {
    let m = d + 2;
    let a = DMatrix::from_fn(m, m, |r, c| {
        if c <= d {
            cheb_row(xs[reference[r]], d)[c]
        } else if r % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    });
    let b = DVector::from_iterator(m, reference.iter().map(|&i| vs[i]));
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NoConvergence { what: "exchange reference is singular".into(), residual: f64::NAN })?;
    Ok((sol.iter().take(d + 1).copied().collect(), sol[d + 1]))
}

/// Discrete minimax distance from the samples to polynomials of degree `≤ d`,
/// by single-point exchange seeded from the least-squares residual.
pub fn poly_distance(xs: &[f64], vs: &[f64], d: usize) -> Result<PolyFit> {
    check_samples(xs, vs, d + 2)?;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    order.dedup_by(|a, b| xs[*a] == xs[*b]);
    let x: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let v: Vec<f64> = order.iter().map(|&i| vs[i]).collect();
    let n = x.len();
    let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300);

    let ls = least_squares_poly(&x, &v, d)?;
    let resid: Vec<f64> = (0..n).map(|i| v[i] - cheb_eval(&ls, x[i])).collect();
    let ls_err = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if ls_err <= 1e-14 * scale {
        return Ok(PolyFit { degree: d, cheb: ls, distance: ls_err, iterations: 0 });
    }
    let mut reference = initial_reference(&resid, d + 2);
    let mut last_defect = f64::INFINITY;
    for it in 1..=100 {
        let (coeffs, h) = levelled_fit(&x, &v, &reference, d)?;
        let err: Vec<f64> = (0..n).map(|i| v[i] - cheb_eval(&coeffs, x[i])).collect();
        let (imax, emax) =
            err.iter().enumerate().map(|(i, e)| (i, e.abs())).max_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
        last_defect = (emax - h.abs()) / emax.max(1e-300);
        if last_defect < 1e-10 || reference.contains(&imax) {
            return Ok(PolyFit { degree: d, cheb: coeffs, distance: emax, iterations: it });
        }
        exchange(&mut reference, imax, &err);
    }
    Err(Error::NoConvergence { what: "minimax exchange".into(), residual: last_defect })
}

fn initial_reference(resid: &[f64], m: usize) -> Vec<usize> {
    let mut runs: Vec<usize> = Vec::new();
    for (i, &r) in resid.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        match runs.last_mut() {
            Some(j) if resid[*j].signum() == r.signum() => {
                if r.abs() > resid[*j].abs() {
                    *j = i;
                }
            }
            _ => runs.push(i),
        }
    }
    if runs.len() >= m {
        let g = (0..runs.len()).max_by(|&a, &b| resid[runs[a]].abs().total_cmp(&resid[runs[b]].abs())).unwrap_or(0);
        let start = g.saturating_sub(m / 2).min(runs.len() - m);
        return runs[start..start + m].to_vec();
    }
    let n = resid.len();
    let mut idx: Vec<usize> = (0..m)
        .map(|j| {
            let c = -(std::f64::consts::PI * j as f64 / (m - 1) as f64).cos();
            (((c + 1.0) / 2.0) * (n - 1) as f64).round() as usize
        })
        .collect();
    for j in 1..m {
        if idx[j] <= idx[j - 1] {
            idx[j] = idx[j - 1] + 1;
        }
    }
    for j in (0..m - 1).rev() {
        if idx[j] >= idx[j + 1] || idx[j + 1] >= n {
            idx[j + 1] = idx[j + 1].min(n - 1 - (m - 2 - j));
            idx[j] = idx[j].min(idx[j + 1] - 1);
        }
    }
    idx
}

fn exchange(reference: &mut Vec<usize>, new: usize, err: &[f64]) {
    let sign = |i: usize| err[i].signum();
    let pos = reference.partition_point(|&r| r < new);
    let m = reference.len();
    if pos == 0 {
        if sign(reference[0]) == sign(new) {
            reference[0] = new;
        } else {
            reference.pop();
            reference.insert(0, new);
        }
    } else if pos == m {
        if sign(reference[m - 1]) == sign(new) {
            reference[m - 1] = new;
        } else {
            reference.remove(0);
            reference.push(new);
        }
    } else if sign(reference[pos - 1]) == sign(new) {
        reference[pos - 1] = new;
    } else {
        reference[pos] = new;
    }
}

/// `Q/P` with monomial coefficients on `[-1, 1]` and a denominator margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalFn {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub margin: f64,
}

impl RationalFn {
    pub fn new(num: Vec<f64>, den: Vec<f64>, margin: f64) -> Result<RationalFn> {
        let r = RationalFn { num, den, margin };
        let m = r.denominator_minimum();
        if !(margin > 0.0) || m < margin {
            return Err(Error::Precondition(format!("denominator minimum {m:.3e} below margin {margin:.3e}")));
        }
        Ok(r)
    }

    pub fn eval(&self, x: f64) -> f64 {
        horner(&self.num, x) / horner(&self.den, x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (q, p) = (horner(&self.num, x), horner(&self.den, x));
        let (dq, dp) = (horner(&poly_derivative(&self.num), x), horner(&poly_derivative(&self.den), x));
        (dq * p - q * dp) / (p * p)
    }

    /// Signed minimum of the denominator over a 1001-point grid.
    pub fn denominator_minimum(&self) -> f64 {
        let s = horner(&self.den, 0.0).signum();
        (0..1001).map(|i| s * horner(&self.den, -1.0 + i as f64 / 500.0)).fold(f64::INFINITY, f64::min)
    }

    pub fn degree(&self) -> usize {
        self.num.len().max(self.den.len()).saturating_sub(1)
    }
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalFit {
    pub rational: Option<RationalFn>,
    /// Upper bound on the discrete distance to rationals of degree `≤ d`.
    pub distance: f64,
    /// Always set: the value comes from a local search.
    pub heuristic: bool,
    /// Set when no iterate had a positive denominator and the polynomial fit was used.
    pub polynomial_fallback: bool,
}

/// Upper bound on the distance from the samples to `R^d` by reweighted
/// linearization (Sanathanan–Koerner, then Lawson weights).
pub fn rational_distance(xs: &[f64], vs: &[f64], d: usize, margin: f64) -> Result<RationalFit> {
    check_samples(xs, vs, 2 * d + 2)?;
    let n = xs.len();
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| cheb_row(x, d)).collect();
    let mut den = vec![0.0; d + 1];
    den[0] = 1.0;
    let mut lawson = vec![1.0f64; n];
    let mut best: Option<(f64, RationalFn)> = None;
    for it in 0..60 {
        let w: Vec<f64> = (0..n).map(|i| lawson[i].sqrt() / cheb_eval(&den, xs[i]).abs().max(1e-300)).collect();
        let a = DMatrix::from_fn(
            n,
            2 * d + 1,
            |i, j| {
                if j <= d {
                    w[i] * rows[i][j]
                } else {
                    -w[i] * vs[i] * rows[i][j - d]
                }
            },
        );
        let b = DVector::from_iterator(n, (0..n).map(|i| w[i] * vs[i]));
        let sol = lstsq(a, b)?;
        let num: Vec<f64> = sol.iter().take(d + 1).copied().collect();
        den = std::iter::once(1.0).chain(sol.iter().skip(d + 1).copied()).collect();
        let candidate = RationalFn { num: cheb_to_monomial(&num), den: cheb_to_monomial(&den), margin };
        let err: Vec<f64> = (0..n).map(|i| (vs[i] - candidate.eval(xs[i])).abs()).collect();
        let dist = err.iter().fold(0.0f64, |m, &e| m.max(e));
        let dmin = candidate.denominator_minimum();
        if dmin >= margin && dist.is_finite() && best.as_ref().is_none_or(|(b, _)| dist < *b) {
            best = Some((dist, candidate));
        }
        if best.as_ref().is_some_and(|(b, _)| *b <= 1e-14) {
            break;
        }
        if it >= 20 {
            let total: f64 = (0..n).map(|i| lawson[i] * err[i]).sum();
            if total > 0.0 {
                for i in 0..n {
                    lawson[i] *= err[i] / total;
                }
            }
        }
    }
    match best {
        Some((distance, r)) => {
            Ok(RationalFit { rational: Some(r), distance, heuristic: true, polynomial_fallback: false })
        }
        None => {
            let p = poly_distance(xs, vs, d)?;
            Ok(RationalFit { rational: None, distance: p.distance, heuristic: true, polynomial_fallback: true })
        }
    }
}

fn real_parts_of_roots(c: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut c = c.to_vec();
    while c.len() > 1 && c.last().is_some_and(|v| v.abs() <= 1e-300) {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = c[deg];
    let companion = DMatrix::from_fn(deg, deg, |r, col| {
        if col == deg - 1 {
            -c[r] / lead
        } else if r == col + 1 {
            1.0
        } else {
            0.0
        }
    });
    let roots = companion.complex_eigenvalues();
    if roots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NoConvergence { what: "polynomial root finding".into(), residual: f64::NAN });
    }
    Ok(roots.iter().map(|z| (z.re, z.im)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalBounds {
    /// Sup of `|R|` over `E`, used for normalization.
    pub scale: f64,
    /// Intervals around real parts of denominator roots.
    pub i_intervals: Vec<(f64, f64)>,
    /// Intervals around real parts of all roots.
    pub j_intervals: Vec<(f64, f64)>,
    /// `|R'/scale| ≤ derivative_bound` on `[−1, 1]` outside the I-intervals.
    pub derivative_bound: f64,
    /// `|R/scale| ≥ value_lower` on `[−1, 1]` outside the J-intervals.
    pub value_lower: f64,
}

impl RationalBounds {
    pub fn outside(intervals: &[(f64, f64)], t: f64) -> bool {
        intervals.iter().all(|&(a, b)| t < a || t > b)
    }

    /// Bounds for `R∘ξ⁻¹` with `ξ` the increasing affine map of `[−1, 1]` onto `[a, b]`,
    /// without normalization: `(derivative bound, value lower bound)`.
    pub fn unscaled_on(&self, a: f64, b: f64) -> (f64, f64) {
        (self.derivative_bound * self.scale * 2.0 / (b - a), self.value_lower * self.scale)
    }
}

/// Distance from `t` to the point `re + i·im`, minimized over `t` outside the
/// interval of half-width `half` around `re`.
fn distance_outside(re: f64, im: f64, half: f64, inside_domain: bool) -> f64 {
    let dx = if inside_domain { half } else { (re.abs() - 1.0).max(0.0) };
    (dx * dx + im * im).sqrt()
}

/// Interval families and constants for a rational function on a spread set.
pub fn rational_bounds_constants(set: &SpreadSet, r: &RationalFn) -> Result<RationalBounds> {
    let scale = set.points.iter().map(|&t| r.eval(t).abs()).fold(0.0, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Precondition("R vanishes on E or is not finite there".into()));
    }
    let d = r.degree().max(1);
    let i_half = set.eta / (2.0 * (d + 2) as f64);
    let j_half = set.eta / (2.0 * (2 * d + 2) as f64);
    let den_roots = real_parts_of_roots(&r.den)?;
    let num_roots = real_parts_of_roots(&r.num)?;
    let near = |re: f64, half: f64| re.abs() <= 1.0 + half;
    let intervals = |roots: &[(f64, f64)], half: f64| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> =
            roots.iter().filter(|z| near(z.0, half)).map(|z| (z.0 - half, z.0 + half)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v.dedup();
        v
    };
    let i_intervals = intervals(&den_roots, i_half);
    let all: Vec<(f64, f64)> = den_roots.iter().chain(&num_roots).copied().collect();
    let j_intervals = intervals(&all, j_half);

    let abs_sum = |c: &[f64]| c.iter().map(|v| v.abs()).sum::<f64>();
    let lead = |c: &[f64]| c.iter().rev().find(|v| v.abs() > 1e-300).copied().unwrap_or(0.0).abs();
    let den_lower = |half: f64| {
        lead(&r.den) * den_roots.iter().map(|z| distance_outside(z.0, z.1, half, near(z.0, half))).product::<f64>()
    };
    let pden = den_lower(i_half);
    let cross = {
        let a = poly_mul(&poly_derivative(&r.num).iter().copied().chain([0.0]).collect::<Vec<_>>(), &r.den);
        let b = poly_mul(&r.num, &poly_derivative(&r.den).iter().copied().chain([0.0]).collect::<Vec<_>>());
        let len = a.len().max(b.len());
        (0..len).map(|k| a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).collect::<Vec<_>>()
    };
    let derivative_bound = abs_sum(&cross) / (pden * pden) / scale;
    let qnum =
        lead(&r.num) * num_roots.iter().map(|z| distance_outside(z.0, z.1, j_half, near(z.0, j_half))).product::<f64>();
    let value_lower = qnum / abs_sum(&r.den) / scale;
    Ok(RationalBounds { scale, i_intervals, j_intervals, derivative_bound, value_lower })
}

/// Weighted fraction of samples with `|v − Q/P| ≤ c`.
pub fn near_rational_measure(xs: &[f64], vs: &[f64], weights: &[f64], r: &RationalFn, c: f64) -> Result<f64> {
    if xs.len() != vs.len() || xs.len() != weights.len() || xs.is_empty() {
        return Err(Error::Precondition("samples and weights differ in length".into()));
    }
    if r.denominator_minimum() < r.margin {
        return Err(Error::Precondition("denominator margin violated".into()));
    }
    let total: f64 = weights.iter().sum();
    let inside: f64 = (0..xs.len()).filter(|&i| (vs[i] - r.eval(xs[i])).abs() <= c).map(|i| weights[i]).sum();
    Ok(inside / total)
}

pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: every removable subset, every grouping into intervals,
    /// every surviving subset.
    fn spread_brute(points: &[f64], k: usize, sigma: f64, eta: f64) -> bool {
        let e = sorted_distinct(points);
        let n = e.len();
        let max_separated = |mask: u32| -> usize {
            let mut best = 0;
            for sub in 0u32..(1 << n) {
                if sub & !mask != 0 {
                    continue;
                }
                let pts: Vec<f64> = (0..n).filter(|&i| sub >> i & 1 == 1).map(|i| e[i]).collect();
                if pts.windows(2).all(|w| w[1] - w[0] > sigma) {
                    best = best.max(pts.len());
                }
            }
            best
        };
        for removed in 0u32..(1 << n) {
            // runs of consecutive removed indices; each run may be split into groups
            let mut runs: Vec<Vec<usize>> = Vec::new();
            for i in 0..n {
                if removed >> i & 1 == 1 {
                    if i > 0 && removed >> (i - 1) & 1 == 1 {
                        runs.last_mut().unwrap().push(i);
                    } else {
                        runs.push(vec![i]);
                    }
                }
            }
            let mut cost = 0.0;
            for run in &runs {
                let gaps = run.len() - 1;
                let mut best = f64::INFINITY;
                for split in 0u32..(1 << gaps) {
                    let mut c = 2.0 * sigma;
                    for g in 0..gaps {
                        c += if split >> g & 1 == 1 { 2.0 * sigma } else { e[run[g + 1]] - e[run[g]] };
                    }
                    best = best.min(c);
                }
                cost += best;
            }
            if cost < eta && max_separated(!removed & ((1 << n) - 1)) <= k {
                return false;
            }
        }
        true
    }

    #[test]
    fn spread_examples() {
        let e = SpreadSet { points: vec![-0.8, -0.4, 0.0, 0.4, 0.8], k: 3, sigma: 0.3, eta: 0.1 };
        let v = spread_check(&e);
        assert!(v.spread);
        assert!(matches!(v.witness, SpreadWitness::Survivors(ref s) if s.len() == 4));
        let tight = SpreadSet { points: (0..5).map(|i| 0.3 + 0.01 * i as f64).collect(), k: 1, sigma: 0.05, eta: 0.1 };
        assert!(!spread_check(&tight).spread);
        let single = SpreadSet { points: vec![0.0], k: 1, sigma: 0.1, eta: 0.5 };
        assert!(!spread_check(&single).spread);
    }

    #[test]
    fn spread_cover_is_admissible() {
        let e = SpreadSet { points: vec![-0.9, -0.85, -0.2, 0.1, 0.15, 0.9], k: 2, sigma: 0.1, eta: 0.75 };
        let v = spread_check(&e);
        assert_eq!(v.spread, spread_brute(&e.points, e.k, e.sigma, e.eta));
        if let SpreadWitness::Cover(c) = v.witness {
            let total: f64 = c.iter().map(|(a, b)| b - a).sum();
            assert!(total < e.eta);
            let left: Vec<f64> = e
                .points
                .iter()
                .copied()
                .filter(|&p| !c.iter().any(|&(a, b)| a <= p - e.sigma && p + e.sigma <= b))
                .collect();
            assert!(separated(left, e.sigma).len() <= e.k);
        } else {
            panic!("expected a cover");
        }
    }

    proptest! {
        #[test]
        fn spread_matches_brute_force(
            pts in proptest::collection::vec(-1.0f64..1.0, 1..8),
            k in 0usize..4,
            sigma in 0.01f64..0.4,
            eta in 0.01f64..1.5,
        ) {
            let set = SpreadSet { points: pts.clone(), k, sigma, eta };
            prop_assert_eq!(spread_check(&set).spread, spread_brute(&pts, k, sigma, eta));
        }

        #[test]
        fn poly_distance_decreases_with_degree(vals in proptest::collection::vec(-1.0f64..1.0, 12)) {
            let xs = uniform_grid(12);
            let mut last = f64::INFINITY;
            for d in 0..6 {
                let fit = poly_distance(&xs, &vals, d).unwrap();
                prop_assert!(fit.distance <= last * (1.0 + 1e-9) + 1e-14);
                last = fit.distance;
            }
        }
    }

    #[test]
    fn exact_polynomial_has_zero_distance() {
        let xs = uniform_grid(21);
        let vs: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let fit = poly_distance(&xs, &vs, 2).unwrap();
        assert!(fit.distance <= 1e-12);
        let m = fit.monomial();
        assert_abs_diff_eq!(m[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[0], 0.0, epsilon = 1e-12);
    }

    /// Discrete minimax = max over (d+2)-subsets of the levelled error.
    fn minimax_brute(xs: &[f64], vs: &[f64], d: usize) -> f64 {
        assert_eq!(d, 1);
        let n = xs.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (_, h) = levelled_fit(xs, vs, &[i, j, k], d).unwrap();
                    best = best.max(h.abs());
                }
            }
        }
        best
    }

    #[test]
    fn absolute_value_line() {
        let xs = uniform_grid(41);
        let vs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        let fit = poly_distance(&xs, &vs, 1).unwrap();
        assert_abs_diff_eq!(fit.distance, minimax_brute(&xs, &vs, 1), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.distance, 0.5, epsilon = 1e-12);
    }

    /// model C template at defaults on the unit interval, by direct summation.
    fn series_template(t: f64) -> f64 {
        -(0.1 / 1.2) * (0..60).map(|k| 0.25f64.powi(k) * (2f64.powi(k) * t).sin()).sum::<f64>()
    }

    #[test]
    fn series_template_is_far_from_cubics() {
        let xs = uniform_grid(64);
        let vs: Vec<f64> = xs.iter().map(|&x| series_template(x)).collect();
        let fit = poly_distance(&xs, &vs, 3).unwrap();
        assert!(fit.distance > 1e-3, "{}", fit.distance);
        let high = poly_distance(&xs, &vs, 12).unwrap();
        assert!(high.distance < fit.distance);

        // a third of the minimax distance: not every sample is that close
        let r = RationalFn::new(fit.monomial(), vec![1.0], 0.5).unwrap();
        let w = vec![1.0; xs.len()];
        let m = near_rational_measure(&xs, &vs, &w, &r, fit.distance / 2.0).unwrap();
        assert!(m < 1.0);
    }

    #[test]
    fn rational_targets_are_recovered() {
        let xs = uniform_grid(41);
        let vs: Vec<f64> = xs.iter().map(|x| 1.0 / (1.0 + x * x)).collect();
        let fit = rational_distance(&xs, &vs, 2, 1e-3).unwrap();
        assert!(fit.distance <= 1e-8, "{}", fit.distance);
        assert!(!fit.polynomial_fallback);
        let line: Vec<f64> = xs.clone();
        for d in 1..=3 {
            assert!(rational_distance(&xs, &line, d, 1e-3).unwrap().distance <= 1e-12);
        }
    }

    #[test]
    fn near_rational_measure_of_linear_template() {
        let xs = uniform_grid(257);
        let vs: Vec<f64> = xs.iter().map(|x| -x / 6.0).collect();
        let zero = RationalFn::new(vec![0.0], vec![1.0], 0.5).unwrap();
        let m = near_rational_measure(&xs, &vs, &vec![1.0; 257], &zero, 0.05).unwrap();
        assert_abs_diff_eq!(m, 0.30, epsilon = 0.005);
        let exact = RationalFn::new(vec![0.0, -1.0 / 6.0], vec![1.0], 0.5).unwrap();
        assert_eq!(near_rational_measure(&xs, &vs, &vec![1.0; 257], &exact, 1e-9).unwrap(), 1.0);
    }

    fn dense() -> impl Iterator<Item = f64> {
        (0..10_001).map(|i| -1.0 + i as f64 / 5000.0)
    }

    fn spread_grid() -> SpreadSet {
        SpreadSet { points: uniform_grid(9), k: 3, sigma: 0.1, eta: 0.1 }
    }

    #[test]
    fn bounds_of_identity() {
        let r = RationalFn::new(vec![0.0, 1.0], vec![1.0], 0.5).unwrap();
        let b = rational_bounds_constants(&spread_grid(), &r).unwrap();
        assert_abs_diff_eq!(b.derivative_bound, 1.0, epsilon = 1e-12);
        assert!(b.i_intervals.is_empty());
    }

    #[test]
    fn bounds_near_complex_poles() {
        let r = RationalFn::new(vec![1.0], vec![0.01, 0.0, 1.0], 1e-3).unwrap();
        let b = rational_bounds_constants(&spread_grid(), &r).unwrap();
        assert_eq!(b.i_intervals.len(), 1);
        assert!(b.i_intervals[0].0 < 0.0 && b.i_intervals[0].1 > 0.0);
        for t in dense().filter(|&t| RationalBounds::outside(&b.i_intervals, t)) {
            assert!(r.derivative(t).abs() / b.scale <= b.derivative_bound);
        }
    }

    #[test]
    fn bounds_of_mobius_map() {
        let r = RationalFn::new(vec![-0.5, 1.0], vec![2.0, 1.0], 0.5).unwrap();
        let b = rational_bounds_constants(&spread_grid(), &r).unwrap();
        assert_eq!(b.j_intervals.len(), 1);
        let (lo, hi) = b.j_intervals[0];
        assert!(lo < 0.5 && hi > 0.5);
        let grid_min = dense()
            .filter(|&t| RationalBounds::outside(&b.j_intervals, t))
            .map(|t| r.eval(t).abs() / b.scale)
            .fold(f64::INFINITY, f64::min);
        assert!(b.value_lower <= grid_min && b.value_lower >= 0.5 * grid_min);
    }

    #[test]
    fn derivative_bound_holds_for_random_rationals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = spread_grid();
        let mut checked = 0;
        while checked < 20 {
            let num: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let den: Vec<f64> = vec![rng.gen_range(1.5..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)];
            let Ok(r) = RationalFn::new(num, den, 1e-2) else { continue };
            let b = rational_bounds_constants(&set, &r).unwrap();
            for t in dense().filter(|&t| RationalBounds::outside(&b.i_intervals, t)) {
                assert!(r.derivative(t).abs() / b.scale <= b.derivative_bound);
            }
            checked += 1;
        }
    }

    #[test]
    fn rescaling_multiplies_the_derivative_bound() {
        let r = RationalFn::new(vec![0.2, 1.0, -0.3], vec![2.0, 0.5], 0.1).unwrap();
        let b = rational_bounds_constants(&spread_grid(), &r).unwrap();
        let (d1, v1) = b.unscaled_on(-1.0, 1.0);
        let (d2, v2) = b.unscaled_on(0.0, 0.5);
        assert_abs_diff_eq!(d2 / d1, 4.0, epsilon = 1e-14);
        assert_eq!(v1, v2);
    }
}
