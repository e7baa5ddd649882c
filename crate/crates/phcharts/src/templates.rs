//! Stable templates: the `s^{ℓ+1}` bending of stable leaves read in a chart.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::poly_distance;
use crate::charts::{improve_chart, transverse_jet, Chart};
use crate::error::{Error, Result};
use crate::jets::{revert_series, Jet};
use crate::models::DynMap;
use crate::nform::{transported_leaf, Bundle};
use crate::splitting::SplittingFrame;

/// Coefficients of the stable leaf through `ι(t, 0, 0)` written as a graph
/// over the third chart coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafPullback {
    pub t: f64,
    /// First chart coordinate as a series in `s`.
    pub first: Jet,
    /// Second chart coordinate as a series in `s`.
    pub second: Jet,
}

/// Pull the stable leaf through `ι(t, 0, 0)` into the chart.
pub fn leaf_pullback(map: &dyn DynMap, chart: &Chart, anchor: &SplittingFrame, t: f64) -> Result<LeafPullback> {
    let y = chart.eval([t, 0.0, 0.0]);
    let (leaf, _) = transported_leaf(map, anchor, y, Bundle::Stable, chart.order)?;
    let c = chart.pull_curve(&leaf.curve, [t, 0.0, 0.0])?;
    if c[2].value().abs() > 1e-10 {
        return Err(Error::NoConvergence { what: "leaf pullback base point".into(), residual: c[2].value() });
    }
    let sigma = revert_series(&c[2].centred())?;
    let first = c[0].compose(std::slice::from_ref(&sigma))?;
    let second = c[1].compose(std::slice::from_ref(&sigma))?;
    Ok(LeafPullback { t, first, second })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub base: [f64; 3],
    pub level: usize,
    pub t_max: f64,
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    /// `a(t, s_ref)` with `first = t + a·s`.
    pub a: Vec<f64>,
    /// `b(t, s_ref)` with `second = T·s^{ℓ+1} + b·s^{ℓ+2}`.
    pub b: Vec<f64>,
    /// Largest `|a|`, `|b|` over the s-grid at each t.
    pub bound: Vec<f64>,
    pub s_ref: f64,
}

impl Template {
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct Sample {
    value: f64,
    a: f64,
    b: f64,
    bound: f64,
}

fn template_sample(
    map: &dyn DynMap,
    chart: &Chart,
    anchor: &SplittingFrame,
    level: usize,
    t: f64,
    ss: &[f64],
) -> Result<Sample> {
    let p = leaf_pullback(map, chart, anchor, t)?;
    for j in 1..=level {
        let v = p.second.c(j);
        if v.abs() > 1e-7 {
            return Err(Error::Precondition(format!(
                "leaf pullback at t = {t} has s^{j} coefficient {v:.3e}; the chart is not {level}-good"
            )));
        }
    }
    let value = p.second.c(level + 1);
    let ab = |s: f64| {
        let a = (p.first.eval(&[s]) - t) / s;
        let b = (p.second.eval(&[s]) - value * s.powi(level as i32 + 1)) / s.powi(level as i32 + 2);
        (a, b)
    };
    let bound = ss.iter().map(|&s| ab(s)).fold(0.0f64, |m, (a, b)| m.max(a.abs()).max(b.abs()));
    let s_ref = ss.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let (a, b) = ab(s_ref);
    Ok(Sample { value, a, b, bound })
}

/// `T^ℓ` on a t-grid, with companion samples of the leaf remainders.
pub fn extract_template(
    map: &dyn DynMap,
    chart: &Chart,
    anchor: &SplittingFrame,
    level: usize,
    ts: &[f64],
    ss: &[f64],
) -> Result<Template> {
    if ss.is_empty() || ss.contains(&0.0) {
        return Err(Error::Precondition("the s-grid must be non-empty and avoid 0".into()));
    }
    let samples: Vec<Sample> =
        ts.par_iter().map(|&t| template_sample(map, chart, anchor, level, t, ss)).collect::<Result<_>>()?;
    Ok(Template {
        base: chart.base,
        level,
        t_max: ts.iter().fold(0.0, |m: f64, t| m.max(t.abs())),
        ts: ts.to_vec(),
        values: samples.iter().map(|s| s.value).collect(),
        a: samples.iter().map(|s| s.a).collect(),
        b: samples.iter().map(|s| s.b).collect(),
        bound: samples.iter().map(|s| s.bound).collect(),
        s_ref: ss.iter().fold(0.0, |m: f64, s| m.max(s.abs())),
    })
}

/// Template values at arbitrary `t`, memoized.
pub struct TemplateSampler<'a> {
    pub map: &'a dyn DynMap,
    pub chart: &'a Chart,
    pub anchor: &'a SplittingFrame,
    pub level: usize,
    cache: Mutex<HashMap<u64, f64>>,
}

impl<'a> TemplateSampler<'a> {
    pub fn new(map: &'a dyn DynMap, chart: &'a Chart, anchor: &'a SplittingFrame, level: usize) -> Self {
        TemplateSampler { map, chart, anchor, level, cache: Mutex::new(HashMap::new()) }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&t.to_bits()) {
            return Ok(*v);
        }
        let v = leaf_pullback(self.map, self.chart, self.anchor, t)?.second.c(self.level + 1);
        self.cache.lock().expect("cache lock").insert(t.to_bits(), v);
        Ok(v)
    }
}

/// Sup over `t` of `(λ₂/λ₃^{ℓ+1})T(t) + R(t)/λ₃^{ℓ+1} − T(λ₁t)`, where `R` is the
/// `s^{ℓ+1}` coefficient of `F₂(t, 0, s)`. Only grid points with `λ₁t` inside
/// the grid range are used.
pub fn template_law_residual(map: &dyn DynMap, chart: &Chart, sampler: &TemplateSampler, ts: &[f64]) -> Result<f64> {
    let level = sampler.level;
    let [l1, l2, l3] = chart.lams;
    let t_max = ts.iter().fold(0.0, |m: f64, t| m.max(t.abs()));
    let denom = l3.powi(level as i32 + 1);
    let usable: Vec<f64> = ts.iter().copied().filter(|t| (l1 * t).abs() <= t_max * (1.0 + 1e-12)).collect();
    let residuals: Vec<f64> = usable
        .par_iter()
        .map(|&t| {
            let r = transverse_jet(map, chart, t, level + 2)?[1].c(level + 1);
            Ok((l2 / denom * sampler.value(t)? + r / denom - sampler.value(l1 * t)?).abs())
        })
        .collect::<Result<_>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// `T(t) = gain·T(contraction·t) + Q(t)`, with `Q` given by Taylor coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pullback {
    pub steps: usize,
    pub gain: f64,
    pub contraction: f64,
    pub q: Vec<f64>,
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * t + v)
}

impl Pullback {
    pub fn apply(&self, template: impl Fn(f64) -> f64, t: f64) -> f64 {
        self.gain * template(self.contraction * t) + poly_eval(&self.q, t)
    }

    /// `self` after `inner`: first pull back by `self`, then rewrite its
    /// shifted template with `inner`.
    pub fn then(&self, inner: &Pullback) -> Pullback {
        let len = self.q.len().max(inner.q.len());
        let q = (0..len)
            .map(|k| {
                self.q.get(k).unwrap_or(&0.0)
                    + self.gain * inner.q.get(k).unwrap_or(&0.0) * self.contraction.powi(k as i32)
            })
            .collect();
        Pullback {
            steps: self.steps + inner.steps,
            gain: self.gain * inner.gain,
            contraction: self.contraction * inner.contraction,
            q,
        }
    }
}

/// `n`-step pullback of the template law at a fixed point, with forcing `R`
/// given by its Taylor coefficients in `t`.
pub fn template_pullback(lams: [f64; 3], level: usize, forcing: &[f64], n: usize) -> Pullback {
    let [l1, l2, l3] = lams;
    let denom = l3.powi(level as i32 + 1);
    let gain = l2 / denom;
    let q = forcing
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let p = r / denom;
            (1..=n).map(|j| gain.powi(j as i32 - 1) * l1.powi(-(j as i32) * k as i32)).sum::<f64>() * p
        })
        .collect();
    Pullback { steps: n, gain: gain.powi(n as i32), contraction: l1.powi(-(n as i32)), q }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeBound {
    pub ratio: f64,
    pub degree: usize,
}

/// Smallest integer `d > (χ₂ − (ℓ+1)χ₃ + (ℓ+2)ε)/(χ₁ − ε)`.
pub fn degree_bound(chi: [f64; 3], level: usize, eps_dev: f64) -> Result<DegreeBound> {
    let [c1, c2, c3] = chi;
    if !(eps_dev >= 0.0 && c1 - eps_dev > 0.0) {
        return Err(Error::Precondition(format!("deviation {eps_dev} must lie in [0, χ₁)")));
    }
    let l = level as f64;
    let ratio = (c2 - (l + 1.0) * c3 + (l + 2.0) * eps_dev) / (c1 - eps_dev);
    Ok(DegreeBound { ratio, degree: (ratio.floor() + 1.0).max(0.0) as usize })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Polynomial { degree: usize },
    NonPolynomial,
}

/// Growth of `m`-th order divided differences across dyadic scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DividedDifferences {
    pub order: usize,
    pub scales: Vec<f64>,
    /// Mean square of the divided differences over the base points at each scale.
    pub mean_square: Vec<f64>,
    /// Slope of `log RMS` against `log(1/h)`.
    pub exponent: f64,
    /// Slope of the mean square against `log₂(1/h)`; constant increments mark
    /// logarithmic divergence.
    pub increment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyProbe {
    pub second_order: DividedDifferences,
    pub high_order: DividedDifferences,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyVerdict {
    pub degree: usize,
    pub fit_residual: f64,
    pub threshold: f64,
    /// Taylor coefficients in `t` of the minimax fit.
    pub fit: Vec<f64>,
    pub verdict: Verdict,
    pub probe: Option<WhitneyProbe>,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Divided differences of `sample` of order `order` at scales `t_max/2^j`,
/// `j ∈ dyadic`, averaged over `bases` base points in `[−t_max/2, t_max/2]`.
pub fn divided_differences(
    sample: &(dyn Fn(f64) -> Result<f64> + Sync),
    t_max: f64,
    order: usize,
    dyadic: std::ops::RangeInclusive<u32>,
    bases: usize,
) -> Result<DividedDifferences> {
    let base_points: Vec<f64> = (0..bases).map(|i| t_max * (-0.5 + i as f64 / (bases - 1) as f64)).collect();
    let mut scales = Vec::new();
    let mut mean_square = Vec::new();
    for j in dyadic {
        let h = t_max / 2f64.powi(j as i32);
        if order as f64 * h / 2.0 > t_max / 2.0 {
            continue;
        }
        let dd: Vec<f64> = base_points
            .par_iter()
            .map(|&t0| {
                let mut acc = 0.0;
                for i in 0..=order {
                    let sign = if (order - i).is_multiple_of(2) { 1.0 } else { -1.0 };
                    acc += sign * binomial(order, i) * sample(t0 + (i as f64 - order as f64 / 2.0) * h)?;
                }
                Ok(acc / h.powi(order as i32))
            })
            .collect::<Result<_>>()?;
        scales.push(h);
        mean_square.push(dd.iter().map(|v| v * v).sum::<f64>() / dd.len() as f64);
    }
    if scales.len() < 2 {
        return Err(Error::Precondition("divided-difference probe needs at least two scales".into()));
    }
    let log_inv: Vec<f64> = scales.iter().map(|h| (1.0 / h).ln()).collect();
    let log_rms: Vec<f64> = mean_square.iter().map(|m| 0.5 * m.max(1e-300).ln()).collect();
    let halvings: Vec<f64> = log_inv.iter().map(|l| l / std::f64::consts::LN_2).collect();
    Ok(DividedDifferences {
        order,
        exponent: slope(&log_inv, &log_rms),
        increment: slope(&halvings, &mean_square),
        scales,
        mean_square,
    })
}

/// Minimax polynomial test of degree `d` on the grid; on failure, the
/// divided-difference probe runs on `sample` when given.
pub fn classify_template(
    template: &Template,
    d: usize,
    sample: Option<&(dyn Fn(f64) -> Result<f64> + Sync)>,
) -> Result<DichotomyVerdict> {
    let mut distinct = template.ts.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 * (d + 1) || template.t_max <= 0.0 {
        return Err(Error::Precondition(format!(
            "{} distinct grid points cannot support a degree-{d} test (need {}); the grid is not spread enough",
            distinct.len(),
            4 * (d + 1)
        )));
    }
    let xs: Vec<f64> = template.ts.iter().map(|t| t / template.t_max).collect();
    let fit = poly_distance(&xs, &template.values, d)?;
    let coeffs: Vec<f64> = fit.monomial().iter().enumerate().map(|(k, c)| c / template.t_max.powi(k as i32)).collect();
    let threshold = 1e-6 * (1.0 + template.sup());
    let polynomial = fit.distance <= threshold;
    let probe = match (polynomial, sample) {
        (false, Some(f)) => Some(WhitneyProbe {
            second_order: divided_differences(f, template.t_max, 2, 3..=8, 33)?,
            high_order: divided_differences(f, template.t_max, d + 2, 3..=6, 9)?,
        }),
        _ => None,
    };
    Ok(DichotomyVerdict {
        degree: d,
        fit_residual: fit.distance,
        threshold,
        fit: coeffs,
        verdict: if polynomial { Verdict::Polynomial { degree: d } } else { Verdict::NonPolynomial },
        probe,
    })
}

/// Improve a chart with a template that passed the polynomial test.
pub fn improve_from_verdict(chart: &Chart, verdict: &DichotomyVerdict) -> Result<Chart> {
    match verdict.verdict {
        Verdict::Polynomial { .. } => improve_chart(chart, &verdict.fit),
        Verdict::NonPolynomial => {
            Err(Error::Precondition("template failed the polynomial test, so the chart cannot be improved".into()))
        }
    }
}

/// Symmetric grid of `n` points on `[−t_max, t_max]`.
pub fn symmetric_grid(n: usize, t_max: f64) -> Vec<f64> {
    (0..n).map(|i| t_max * (-1.0 + 2.0 * i as f64 / (n - 1) as f64)).collect()
}

/// Positive grid of `n` points on `(0, s_max]`.
pub fn s_grid(n: usize, s_max: f64) -> Vec<f64> {
    (1..=n).map(|i| s_max * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{build_adapted_chart, build_unstable_chart};
    use crate::models::{ModelKind, ModelMap};
    use crate::splitting::{compute_frame, MAX_POWER};
    use approx::assert_abs_diff_eq;

    fn setup(kind: ModelKind) -> (ModelMap, SplittingFrame, Chart) {
        let m = ModelMap::with_defaults(kind);
        let f = compute_frame(&m, [0.0; 3], MAX_POWER).unwrap();
        let c = build_unstable_chart(&m, &f, 8, 0.5).unwrap();
        (m, f, c)
    }

    #[test]
    fn linear_model_has_zero_template() {
        let (m, f, c) = setup(ModelKind::A);
        let t = extract_template(&m, &c, &f, 0, &symmetric_grid(9, 0.5), &s_grid(3, 0.05)).unwrap();
        assert!(t.sup() < 1e-12);
        let v = classify_template(
            &extract_template(&m, &c, &f, 0, &symmetric_grid(17, 0.5), &s_grid(3, 0.05)).unwrap(),
            3,
            None,
        )
        .unwrap();
        assert_eq!(v.verdict, Verdict::Polynomial { degree: 3 });
    }

    #[test]
    fn shear_model_template_is_linear() {
        let (m, f, c) = setup(ModelKind::B);
        let ts = symmetric_grid(17, 0.5);
        let t = extract_template(&m, &c, &f, 0, &ts, &s_grid(3, 0.05)).unwrap();
        for (x, v) in t.ts.iter().zip(&t.values) {
            assert_abs_diff_eq!(*v, -x / 6.0, epsilon = 1e-8);
        }
        assert!(t.bound.iter().all(|b| b.is_finite()));
        let sampler = TemplateSampler::new(&m, &c, &f, 0);
        assert!(template_law_residual(&m, &c, &sampler, &ts).unwrap() <= 1e-9);
        let verdict = classify_template(&t, 1, None).unwrap();
        assert_eq!(verdict.verdict, Verdict::Polynomial { degree: 1 });
        assert!(verdict.fit_residual <= 1e-8);
        assert_abs_diff_eq!(verdict.fit[1], -1.0 / 6.0, epsilon = 1e-8);
    }

    #[test]
    fn improved_shear_chart_has_flat_leaves() {
        let (m, f, c) = setup(ModelKind::B);
        let ts = symmetric_grid(17, 0.5);
        let t0 = extract_template(&m, &c, &f, 0, &ts, &s_grid(3, 0.05)).unwrap();
        let verdict = classify_template(&t0, 3, None).unwrap();
        let c1 = improve_from_verdict(&c, &verdict).unwrap();
        let t1 = extract_template(&m, &c1, &f, 1, &ts, &s_grid(3, 0.05)).unwrap();
        assert!(t1.sup() <= 1e-7, "{}", t1.sup());
    }

    /// Direct summation of the model C template series at defaults.
    fn series_template(t: f64) -> f64 {
        -(0.1 / 1.2) * (0..80).map(|k| 0.25f64.powi(k) * (2f64.powi(k) * t).sin()).sum::<f64>()
    }

    #[test]
    fn sine_model_template_matches_series() {
        let m = ModelMap::with_defaults(ModelKind::C);
        let f = compute_frame(&m, [0.0; 3], MAX_POWER).unwrap();
        let c = build_adapted_chart(&m, &f, 8, 0.5).unwrap();
        let ts = symmetric_grid(21, 0.5);
        let t = extract_template(&m, &c, &f, 0, &ts, &s_grid(3, 0.05)).unwrap();
        for (x, v) in t.ts.iter().zip(&t.values) {
            assert_abs_diff_eq!(*v, series_template(*x), epsilon = 1e-6);
        }
        let sampler = TemplateSampler::new(&m, &c, &f, 0);
        assert!(template_law_residual(&m, &c, &sampler, &ts).unwrap() <= 1e-6);
        let verdict = classify_template(&t, 3, None).unwrap();
        assert_eq!(verdict.verdict, Verdict::NonPolynomial);
        assert!(improve_from_verdict(&c, &verdict).is_err());
    }

    #[test]
    fn probe_sees_logarithmic_second_derivative() {
        let f = |t: f64| Ok(series_template(t));
        let dd = divided_differences(&f, 0.5, 2, 3..=8, 33).unwrap();
        assert!(dd.exponent.abs() < 0.2, "{}", dd.exponent);
        let predicted = (0.1f64 / 1.2).powi(2) / 2.0;
        assert!(dd.increment > 0.7 * predicted && dd.increment < 1.5 * predicted, "{}", dd.increment);
        let smooth = |t: f64| Ok(t.sin());
        let dd = divided_differences(&smooth, 0.5, 2, 3..=8, 33).unwrap();
        assert!(dd.increment.abs() < 1e-3 * predicted);
    }

    #[test]
    fn degree_bound_at_defaults() {
        let chi = [2f64.ln(), 1.2f64.ln(), 0.3f64.ln()];
        let b = degree_bound(chi, 0, 0.01).unwrap();
        assert_abs_diff_eq!(b.ratio, 1.40631 / 0.68315, epsilon = 1e-4);
        assert_eq!(b.degree, 3);
        assert!(degree_bound(chi, 0, 0.7).is_err());
    }

    #[test]
    fn pullback_composes_stepwise() {
        let lams = [2.0, 1.2, 0.3];
        let forcing = [0.0, 0.1, 0.0, -0.02];
        let one = template_pullback(lams, 0, &forcing, 1);
        let mut acc = one.clone();
        for n in 2..=6 {
            acc = one.then(&acc);
            let direct = template_pullback(lams, 0, &forcing, n);
            assert_abs_diff_eq!(acc.gain, direct.gain, epsilon = 1e-12);
            for (a, b) in acc.q.iter().zip(&direct.q) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
            }
        }
        let id = template_pullback(lams, 0, &forcing, 0);
        assert_eq!(id.gain, 1.0);
        assert!(id.q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shear_model_pullback_reproduces_template() {
        let (m, f, c) = setup(ModelKind::B);
        let forcing = &c.levels[0].off_diagonal;
        let pb = template_pullback(c.lams, 0, forcing, 4);
        assert_abs_diff_eq!(pb.q[1], 15.0 / 6.0, epsilon = 1e-12);
        assert!(pb.q.iter().enumerate().all(|(k, v)| k == 1 || v.abs() < 1e-10));
        let sampler = TemplateSampler::new(&m, &c, &f, 0);
        for t in [-0.4, 0.25, 0.5] {
            let lhs = sampler.value(t).unwrap();
            let rhs = pb.apply(|x| sampler.value(x).unwrap(), t);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
        }
    }
}
