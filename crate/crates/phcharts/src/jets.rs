//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] stores every coefficient of a polynomial of total degree at most
//! `order` in `arity` variables. Coefficients are kept densely in graded
//! lexicographic order: monomials are sorted by total degree, and within one
//! degree by decreasing exponent of the first variable, then the second, and
//! so on. For three variables and degree 2 that is
//! `x², xy, xz, y², yz, z²`.
//!
//! Products are truncated at `order`, so every operation is exact on the
//! truncated ring.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug)]
struct Basis {
    arity: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    degrees: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    /// For monomial `m > 0`: a monomial `p` and variable `v` with `m = p * x_v`.
    parent: Vec<(usize, usize)>,
    mul_table: OnceLock<Vec<(u32, u32, u32)>>,
}

fn monomials_of_degree(arity: usize, degree: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(prefix: &mut Vec<u8>, left: usize, vars: usize, out: &mut Vec<Vec<u8>>) {
        if vars == 1 {
            prefix.push(left as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e as u8);
            rec(prefix, left - e, vars - 1, out);
            prefix.pop();
        }
    }
    if arity == 0 {
        if degree == 0 {
            out.push(Vec::new());
        }
        return;
    }
    rec(&mut Vec::with_capacity(arity), degree, arity, out);
}

impl Basis {
    fn build(arity: usize, order: usize) -> Basis {
        let mut exps = Vec::new();
        for d in 0..=order {
            monomials_of_degree(arity, d, &mut exps);
        }
        let degrees: Vec<usize> = exps.iter().map(|e| e.iter().map(|&x| x as usize).sum()).collect();
        let index: HashMap<Vec<u8>, usize> = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let mut parent = vec![(0, 0); exps.len()];
        for (m, e) in exps.iter().enumerate().skip(1) {
            let v = e.iter().position(|&x| x > 0).expect("non-constant monomial");
            let mut p = e.clone();
            p[v] -= 1;
            parent[m] = (index[&p], v);
        }
        Basis { arity, order, exps, degrees, index, parent, mul_table: OnceLock::new() }
    }

    fn len(&self) -> usize {
        self.exps.len()
    }

    fn mul_table(&self) -> &[(u32, u32, u32)] {
        self.mul_table.get_or_init(|| {
            let mut table = Vec::new();
            let mut buf = vec![0u8; self.arity];
            for i in 0..self.len() {
                for j in 0..self.len() {
                    if self.degrees[i] + self.degrees[j] > self.order {
                        continue;
                    }
                    for v in 0..self.arity {
                        buf[v] = self.exps[i][v] + self.exps[j][v];
                    }
                    table.push((i as u32, j as u32, self.index[&buf] as u32));
                }
            }
            table
        })
    }
}

fn basis(arity: usize, order: usize) -> Arc<Basis> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Basis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("jet basis cache poisoned");
    guard.entry((arity, order)).or_insert_with(|| Arc::new(Basis::build(arity, order))).clone()
}

/// Number of coefficients of a degree-`order` polynomial in `arity` variables.
pub fn coefficient_count(arity: usize, order: usize) -> usize {
    let mut n: usize = 1;
    for i in 1..=arity {
        n = n * (order + i) / i;
    }
    n
}

/// Truncated Taylor polynomial in a fixed number of variables.
#[derive(Clone)]
pub struct Jet {
    basis: Arc<Basis>,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JetRecord {
    arity: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl Serialize for Jet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JetRecord { arity: self.arity(), order: self.order(), coeffs: self.coeffs.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Jet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = JetRecord::deserialize(d)?;
        Jet::from_coeffs(rec.arity, rec.order, rec.coeffs).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet[{}; {}](", self.arity(), self.order())?;
        let mut first = true;
        for (e, c) in self.terms() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c:.6e}{e:?}")?;
        }
        write!(f, ")")
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.arity() == other.arity() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn zero(arity: usize, order: usize) -> Jet {
        let basis = basis(arity, order);
        let coeffs = vec![0.0; basis.len()];
        Jet { basis, coeffs }
    }

    pub fn constant(arity: usize, order: usize, value: f64) -> Jet {
        let mut j = Jet::zero(arity, order);
        j.coeffs[0] = value;
        j
    }

    /// The jet of `value + x_var`.
    pub fn variable(arity: usize, order: usize, var: usize, value: f64) -> Jet {
        let mut j = Jet::constant(arity, order, value);
        if order >= 1 {
            let mut e = vec![0u8; arity];
            e[var] = 1;
            j.set(&e, 1.0);
        }
        j
    }

    /// Identity map `(x_1, ..., x_n)` shifted by `at`.
    pub fn identity_map(at: &[f64], order: usize) -> Vec<Jet> {
        (0..at.len()).map(|v| Jet::variable(at.len(), order, v, at[v])).collect()
    }

    pub fn from_coeffs(arity: usize, order: usize, coeffs: Vec<f64>) -> Result<Jet> {
        let basis = basis(arity, order);
        if coeffs.len() != basis.len() {
            return Err(Error::JetContract(format!(
                "expected {} coefficients for arity {arity} order {order}, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        Ok(Jet { basis, coeffs })
    }

    /// Univariate jet from its coefficients `c_0, c_1, ...`, zero-padded to `order`.
    pub fn univariate(order: usize, coeffs: &[f64]) -> Jet {
        let mut j = Jet::zero(1, order);
        for (k, c) in coeffs.iter().enumerate().take(order + 1) {
            j.coeffs[k] = *c;
        }
        j
    }

    pub fn arity(&self) -> usize {
        self.basis.arity
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Exponent tuples in storage order.
    pub fn exponents(&self) -> impl Iterator<Item = &[u8]> {
        self.basis.exps.iter().map(|e| e.as_slice())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.basis.exps.iter().map(|e| e.as_slice()).zip(self.coeffs.iter().copied())
    }

    pub fn degree_of(&self, index: usize) -> usize {
        self.basis.degrees[index]
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn get(&self, exps: &[u8]) -> f64 {
        self.basis.index.get(exps).map_or(0.0, |&i| self.coeffs[i])
    }

    pub fn set(&mut self, exps: &[u8], value: f64) {
        let i = *self
            .basis
            .index
            .get(exps)
            .unwrap_or_else(|| panic!("monomial {exps:?} outside jet of order {}", self.order()));
        self.coeffs[i] = value;
    }

    /// Univariate coefficient of `t^k` (zero beyond the order).
    pub fn c(&self, k: usize) -> f64 {
        debug_assert_eq!(self.arity(), 1);
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Mixed partial derivative at the expansion point.
    pub fn partial(&self, exps: &[u8]) -> f64 {
        let fact: f64 = exps.iter().map(|&e| factorial(e as usize)).product();
        self.get(exps) * fact
    }

    fn check_same(&self, other: &Jet) {
        assert!(
            self.arity() == other.arity() && self.order() == other.order(),
            "jet shape mismatch: ({}, {}) vs ({}, {})",
            self.arity(),
            self.order(),
            other.arity(),
            other.order()
        );
    }

    pub fn scale(&self, k: f64) -> Jet {
        Jet { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|c| c * k).collect() }
    }

    pub fn add_constant(&self, k: f64) -> Jet {
        let mut j = self.clone();
        j.coeffs[0] += k;
        j
    }

    /// Copy with the constant term removed.
    pub fn centred(&self) -> Jet {
        let mut j = self.clone();
        j.coeffs[0] = 0.0;
        j
    }

    /// Keep only the homogeneous parts of degree `lo..=hi`.
    pub fn degree_range(&self, lo: usize, hi: usize) -> Jet {
        let mut j = self.clone();
        for (i, c) in j.coeffs.iter_mut().enumerate() {
            let d = self.basis.degrees[i];
            if d < lo || d > hi {
                *c = 0.0;
            }
        }
        j
    }

    /// Truncate or zero-extend to another order.
    pub fn with_order(&self, order: usize) -> Jet {
        let mut j = Jet::zero(self.arity(), order);
        for (e, c) in self.terms() {
            if e.iter().map(|&x| x as usize).sum::<usize>() <= order {
                j.set(e, c);
            }
        }
        j
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn max_abs_diff(&self, other: &Jet) -> f64 {
        self.check_same(other);
        self.coeffs.iter().zip(&other.coeffs).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.arity(), "evaluation point has wrong dimension");
        let mut mono = vec![0.0; self.coeffs.len()];
        mono[0] = 1.0;
        let mut acc = self.coeffs[0];
        for m in 1..mono.len() {
            let (p, v) = self.basis.parent[m];
            mono[m] = mono[p] * point[v];
            acc += self.coeffs[m] * mono[m];
        }
        acc
    }

    /// Derivative with respect to variable `var`, as a jet of order `order - 1`.
    pub fn derivative(&self, var: usize) -> Jet {
        let order = self.order().saturating_sub(1);
        let mut out = Jet::zero(self.arity(), order);
        for (e, c) in self.terms() {
            if e[var] == 0 || c == 0.0 {
                continue;
            }
            let mut f = e.to_vec();
            f[var] -= 1;
            out.set(&f, c * e[var] as f64);
        }
        out
    }

    /// Substitute `inner` into this polynomial: `self(inner_1, ..., inner_m)`.
    ///
    /// The result has the arity and order of the inner jets. Constant terms of
    /// the inner jets are substituted as they are, so a non-zero constant
    /// re-expands the outer polynomial.
    pub fn compose(&self, inner: &[Jet]) -> Result<Jet> {
        if inner.len() != self.arity() {
            return Err(Error::JetContract(format!(
                "outer jet has {} variables but {} inner jets were given",
                self.arity(),
                inner.len()
            )));
        }
        let (arity, order) = match inner.first() {
            Some(j) => (j.arity(), j.order()),
            None => return Ok(Jet::constant(0, 0, self.value())),
        };
        if inner.iter().any(|j| j.arity() != arity || j.order() != order) {
            return Err(Error::JetContract("inner jets differ in arity or order".into()));
        }
        let n = self.coeffs.len();
        let mut out = Jet::constant(arity, order, self.coeffs[0]);
        let mut prods: Vec<Option<Jet>> = vec![None; n];
        prods[0] = Some(Jet::constant(arity, order, 1.0));
        for m in 1..n {
            let (p, v) = self.basis.parent[m];
            let prod = prods[p].as_ref().expect("parent computed first") * &inner[v];
            let c = self.coeffs[m];
            if c != 0.0 {
                for (o, x) in out.coeffs.iter_mut().zip(&prod.coeffs) {
                    *o += c * x;
                }
            }
            prods[m] = Some(prod);
        }
        Ok(out)
    }

    /// Taylor re-expansion of the polynomial around `point`.
    pub fn shift(&self, point: &[f64]) -> Jet {
        let inner = Jet::identity_map(point, self.order());
        self.compose(&inner).expect("shapes agree by construction")
    }

    fn nilpotent_powers(&self) -> Vec<Jet> {
        let n = self.centred();
        let mut pows = vec![Jet::constant(self.arity(), self.order(), 1.0)];
        for k in 1..=self.order() {
            let next = &pows[k - 1] * &n;
            pows.push(next);
        }
        pows
    }

    pub fn exp(&self) -> Jet {
        let pows = self.nilpotent_powers();
        let mut out = Jet::zero(self.arity(), self.order());
        for (k, p) in pows.iter().enumerate() {
            out = &out + &p.scale(1.0 / factorial(k));
        }
        out.scale(self.value().exp())
    }

    fn sin_cos(&self) -> (Jet, Jet) {
        let pows = self.nilpotent_powers();
        let mut sn = Jet::zero(self.arity(), self.order());
        let mut cs = Jet::zero(self.arity(), self.order());
        for (k, p) in pows.iter().enumerate() {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let term = p.scale(sign / factorial(k));
            if k % 2 == 0 {
                cs = &cs + &term;
            } else {
                sn = &sn + &term;
            }
        }
        let (s0, c0) = self.value().sin_cos();
        let sin = &sn.scale(c0) + &cs.scale(s0);
        let cos = &cs.scale(c0) - &sn.scale(s0);
        (sin, cos)
    }

    pub fn sin(&self) -> Jet {
        self.sin_cos().0
    }

    pub fn cos(&self) -> Jet {
        self.sin_cos().1
    }

    pub fn recip(&self) -> Result<Jet> {
        let a0 = self.value();
        if a0 == 0.0 {
            return Err(Error::JetContract("reciprocal of a jet with zero constant term".into()));
        }
        let n = self.centred().scale(-1.0 / a0);
        let mut out = Jet::constant(self.arity(), self.order(), 1.0);
        let mut p = out.clone();
        for _ in 1..=self.order() {
            p = &p * &n;
            out = &out + &p;
        }
        Ok(out.scale(1.0 / a0))
    }

    pub fn ln(&self) -> Result<Jet> {
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(Error::JetContract("logarithm of a jet with non-positive constant".into()));
        }
        let n = self.centred().scale(1.0 / a0);
        let mut out = Jet::constant(self.arity(), self.order(), a0.ln());
        let mut p = Jet::constant(self.arity(), self.order(), 1.0);
        for k in 1..=self.order() {
            p = &p * &n;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            out = &out + &p.scale(sign / k as f64);
        }
        Ok(out)
    }

    pub fn powi(&self, k: usize) -> Jet {
        let mut out = Jet::constant(self.arity(), self.order(), 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }
}

fn mul_into(a: &Jet, b: &Jet) -> Jet {
    a.check_same(b);
    let mut out = vec![0.0; a.coeffs.len()];
    for &(i, j, k) in a.basis.mul_table() {
        let x = a.coeffs[i as usize];
        if x == 0.0 {
            continue;
        }
        out[k as usize] += x * b.coeffs[j as usize];
    }
    Jet { basis: a.basis.clone(), coeffs: out }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &'a Jet) -> Jet {
        mul_into(self, rhs)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        mul_into(&self, &rhs)
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &'a Jet) -> Jet {
        self.check_same(rhs);
        Jet { basis: self.basis.clone(), coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect() }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &'a Jet) -> Jet {
        self.check_same(rhs);
        Jet { basis: self.basis.clone(), coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect() }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

/// Compose two vector-valued jets: `outer(inner)`.
pub fn compose_maps(outer: &[Jet], inner: &[Jet]) -> Result<Vec<Jet>> {
    outer.iter().map(|o| o.compose(inner)).collect()
}

/// Linear part of a map jet as a matrix (rows = components).
pub fn linear_part(map: &[Jet]) -> DMatrix<f64> {
    let n = map.first().map_or(0, Jet::arity);
    let mut m = DMatrix::zeros(map.len(), n);
    for (r, j) in map.iter().enumerate() {
        for c in 0..n {
            let mut e = vec![0u8; n];
            e[c] = 1;
            m[(r, c)] = j.get(&e);
        }
    }
    m
}

/// Local inverse of a square map jet.
///
/// `map` is expanded in deviation variables `h` around some point `p`, with
/// constant terms `map(p)`. The result `g` is expanded in deviation variables
/// `d` around `map(p)` and satisfies `map(g(d) - p) = map(p) + d`; its constant
/// terms are `p`, supplied as `base`.
pub fn invert_map(map: &[Jet], base: &[f64]) -> Result<Vec<Jet>> {
    let n = map.len();
    if n == 0 || map.iter().any(|j| j.arity() != n) || base.len() != n {
        return Err(Error::JetContract("map inversion needs a square map jet".into()));
    }
    let order = map[0].order();
    let lin = linear_part(map);
    let svd = lin.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax.max(1.0) {
        return Err(Error::NoConvergence {
            what: format!("map inversion (condition estimate {:.3e})", smax / smin.max(f64::MIN_POSITIVE)),
            residual: smin,
        });
    }
    let linv = lin.try_inverse().ok_or_else(|| Error::JetContract("singular linear part".into()))?;
    let nonlinear: Vec<Jet> = map.iter().map(|j| j.degree_range(2, order)).collect();
    let ids = Jet::identity_map(&vec![0.0; n], order);
    let mut g: Vec<Jet> = (0..n)
        .map(|r| {
            let mut acc = Jet::zero(n, order);
            for (c, id) in ids.iter().enumerate() {
                acc = &acc + &id.scale(linv[(r, c)]);
            }
            acc
        })
        .collect();
    for _ in 1..order {
        let ng = compose_maps(&nonlinear, &g)?;
        let rhs: Vec<Jet> = ids.iter().zip(&ng).map(|(d, q)| d - q).collect();
        g = (0..n)
            .map(|r| {
                let mut acc = Jet::zero(n, order);
                for (c, v) in rhs.iter().enumerate() {
                    acc = &acc + &v.scale(linv[(r, c)]);
                }
                acc
            })
            .collect();
    }
    Ok(g.into_iter().zip(base).map(|(j, b)| j.add_constant(*b)).collect())
}

/// Compositional inverse of a univariate series with zero constant term.
pub fn revert_series(series: &Jet) -> Result<Jet> {
    if series.arity() != 1 || series.value().abs() > 0.0 {
        return Err(Error::JetContract("series reversion needs a univariate jet vanishing at 0".into()));
    }
    invert_map(std::slice::from_ref(series), &[0.0]).map(|mut v| v.remove(0))
}
