//! Model diffeomorphisms of R³ and scenario files.
//!
//! Every model fixes the origin and is a skew product over the linear map
//! `(x₁, x₃) ↦ (λ₁x₁, λ₃x₃)`:
//!
//! * `A`: `(λ₁x₁, λ₂x₂, λ₃x₃)`
//! * `B`: `(λ₁x₁, λ₂x₂ + ε x₁x₃, λ₃x₃)`
//! * `C`: `(λ₁x₁, λ₂x₂ + ε sin(x₁) x₃, λ₃x₃)`

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jets::Jet;

pub type Point = [f64; 3];

/// A smooth invertible map of R³ that can be evaluated on points and on jets.
pub trait DynMap: Send + Sync {
    fn label(&self) -> String;
    fn forward(&self, x: Point) -> Point;
    fn inverse(&self, x: Point) -> Point;
    /// `f(inner)` for a triple of jets sharing arity and order.
    fn forward_on(&self, inner: &[Jet]) -> Vec<Jet>;
    fn inverse_on(&self, inner: &[Jet]) -> Vec<Jet>;

    fn jacobian(&self, x: Point) -> Matrix3<f64> {
        jacobian_of(&self.forward_on(&Jet::identity_map(&x, 1)))
    }

    fn inverse_jacobian(&self, x: Point) -> Matrix3<f64> {
        jacobian_of(&self.inverse_on(&Jet::identity_map(&x, 1)))
    }

    /// Jet of the map at `x`, in deviation variables.
    fn jet_at(&self, x: Point, order: usize) -> Vec<Jet> {
        self.forward_on(&Jet::identity_map(&x, order))
    }

    fn inverse_jet_at(&self, x: Point, order: usize) -> Vec<Jet> {
        self.inverse_on(&Jet::identity_map(&x, order))
    }
}

fn jacobian_of(jets: &[Jet]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            let mut e = [0u8; 3];
            e[c] = 1;
            m[(r, c)] = jets[r].get(&e);
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    A,
    B,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "defaults::l1")]
    pub l1: f64,
    #[serde(default = "defaults::l2")]
    pub l2: f64,
    #[serde(default = "defaults::l3")]
    pub l3: f64,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
}

mod defaults {
    pub fn l1() -> f64 {
        2.0
    }
    pub fn l2() -> f64 {
        1.2
    }
    pub fn l3() -> f64 {
        0.3
    }
    pub fn eps() -> f64 {
        0.1
    }
}

impl Default for Params {
    fn default() -> Self {
        Params { l1: 2.0, l2: 1.2, l3: 0.3, eps: 0.1 }
    }
}

impl Params {
    pub fn check_partial_hyperbolicity(&self) -> Result<()> {
        let (a, b, c) = (self.l1.abs(), self.l2.abs(), self.l3.abs());
        if !(a > 1.0f64.max(b)) || !(c < 1.0f64.min(b)) {
            return Err(Error::Scenario {
                field: "params".into(),
                reason: format!(
                    "partial hyperbolicity requires |l1| > max(1, |l2|) and |l3| < min(1, |l2|); got l1={}, l2={}, l3={}",
                    self.l1, self.l2, self.l3
                ),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMap {
    pub kind: ModelKind,
    pub params: Params,
}

/// Half-width of the working box.
pub const BOX: f64 = 1.0;

pub fn in_box(x: Point) -> bool {
    x.iter().all(|c| c.abs() <= BOX)
}

impl ModelMap {
    pub fn new(kind: ModelKind, params: Params) -> Result<ModelMap> {
        params.check_partial_hyperbolicity()?;
        Ok(ModelMap { kind, params })
    }

    pub fn with_defaults(kind: ModelKind) -> ModelMap {
        ModelMap { kind, params: Params::default() }
    }

    /// Stable hash of model kind and parameters.
    pub fn hash_hex(&self) -> String {
        let text = serde_json::to_string(self).expect("model serializes");
        hex_digest(text.as_bytes())
    }

    fn shear(&self, x1: f64, x3: f64) -> f64 {
        let eps = self.params.eps;
        match self.kind {
            ModelKind::A => 0.0,
            ModelKind::B => eps * x1 * x3,
            ModelKind::C => eps * x1.sin() * x3,
        }
    }

    fn shear_jet(&self, x1: &Jet, x3: &Jet) -> Jet {
        let eps = self.params.eps;
        match self.kind {
            ModelKind::A => Jet::zero(x1.arity(), x1.order()),
            ModelKind::B => (x1 * x3).scale(eps),
            ModelKind::C => (&x1.sin() * x3).scale(eps),
        }
    }
}

/// Jet of the model at a point of the working box.
pub fn model_eval(model: &ModelMap, x: Point, order: usize) -> Result<Vec<Jet>> {
    if !in_box(x) {
        return Err(Error::Domain(x[0], x[1], x[2]));
    }
    Ok(model.jet_at(x, order))
}

pub fn model_eval_inverse(model: &ModelMap, x: Point, order: usize) -> Result<Vec<Jet>> {
    if !in_box(x) {
        return Err(Error::Domain(x[0], x[1], x[2]));
    }
    Ok(model.inverse_jet_at(x, order))
}

impl DynMap for ModelMap {
    fn label(&self) -> String {
        format!("model {:?}", self.kind)
    }

    fn forward(&self, x: Point) -> Point {
        let p = self.params;
        [p.l1 * x[0], p.l2 * x[1] + self.shear(x[0], x[2]), p.l3 * x[2]]
    }

    fn inverse(&self, x: Point) -> Point {
        let p = self.params;
        let x1 = x[0] / p.l1;
        let x3 = x[2] / p.l3;
        [x1, (x[1] - self.shear(x1, x3)) / p.l2, x3]
    }

    fn forward_on(&self, inner: &[Jet]) -> Vec<Jet> {
        let p = self.params;
        vec![inner[0].scale(p.l1), &inner[1].scale(p.l2) + &self.shear_jet(&inner[0], &inner[2]), inner[2].scale(p.l3)]
    }

    fn inverse_on(&self, inner: &[Jet]) -> Vec<Jet> {
        let p = self.params;
        let x1 = inner[0].scale(1.0 / p.l1);
        let x3 = inner[2].scale(1.0 / p.l3);
        let x2 = (&inner[1] - &self.shear_jet(&x1, &x3)).scale(1.0 / p.l2);
        vec![x1, x2, x3]
    }
}

/// `S ∘ f⁻¹ ∘ S` where `S` swaps the first and third coordinates.
///
/// Stable objects of `f` become unstable objects of the reversed map with the
/// axis order kept as (unstable, centre, stable).
pub struct Reversed<'a, M: DynMap + ?Sized>(pub &'a M);

fn swap<T: Clone>(v: &[T]) -> Vec<T> {
    vec![v[2].clone(), v[1].clone(), v[0].clone()]
}

pub fn swap_point(x: Point) -> Point {
    [x[2], x[1], x[0]]
}

impl<M: DynMap + ?Sized> DynMap for Reversed<'_, M> {
    fn label(&self) -> String {
        format!("reversed {}", self.0.label())
    }

    fn forward(&self, x: Point) -> Point {
        swap_point(self.0.inverse(swap_point(x)))
    }

    fn inverse(&self, x: Point) -> Point {
        swap_point(self.0.forward(swap_point(x)))
    }

    fn forward_on(&self, inner: &[Jet]) -> Vec<Jet> {
        swap(&self.0.inverse_on(&swap(inner)))
    }

    fn inverse_on(&self, inner: &[Jet]) -> Vec<Jet> {
        swap(&self.0.forward_on(&swap(inner)))
    }
}

/// `f⁻¹` viewed as a map in its own right.
pub struct Inverted<'a, M: DynMap + ?Sized>(pub &'a M);

impl<M: DynMap + ?Sized> DynMap for Inverted<'_, M> {
    fn label(&self) -> String {
        format!("inverse of {}", self.0.label())
    }

    fn forward(&self, x: Point) -> Point {
        self.0.inverse(x)
    }

    fn inverse(&self, x: Point) -> Point {
        self.0.forward(x)
    }

    fn forward_on(&self, inner: &[Jet]) -> Vec<Jet> {
        self.0.inverse_on(inner)
    }

    fn inverse_on(&self, inner: &[Jet]) -> Vec<Jet> {
        self.0.forward_on(inner)
    }
}

pub fn swap_jets(v: &[Jet]) -> Vec<Jet> {
    swap(v)
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Number of template sample points on `[-t_max, t_max]`.
    #[serde(default = "Grids::d_t_points")]
    pub t_points: usize,
    #[serde(default = "Grids::d_t_max")]
    pub t_max: f64,
    /// Heights used to check leaf reconstruction.
    #[serde(default = "Grids::d_s_points")]
    pub s_points: usize,
    #[serde(default = "Grids::d_s_max")]
    pub s_max: f64,
    #[serde(default = "Grids::d_k_min")]
    pub k_min: usize,
    #[serde(default = "Grids::d_k_max")]
    pub k_max: usize,
    #[serde(default = "Grids::d_samples")]
    pub samples_per_scale: usize,
    /// Ratio `k₂/k₁` of the scale window.
    #[serde(default = "Grids::d_v")]
    pub v: f64,
    #[serde(default = "Grids::d_nu")]
    pub nu: f64,
    /// Points of the uniform approximation grid on (-1, 1).
    #[serde(default = "Grids::d_approx_points")]
    pub approx_points: usize,
}

impl Grids {
    fn d_t_points() -> usize {
        41
    }
    fn d_t_max() -> f64 {
        0.5
    }
    fn d_s_points() -> usize {
        9
    }
    fn d_s_max() -> f64 {
        0.05
    }
    fn d_k_min() -> usize {
        2
    }
    fn d_k_max() -> usize {
        7
    }
    fn d_samples() -> usize {
        16
    }
    fn d_v() -> f64 {
        1.0
    }
    fn d_nu() -> f64 {
        0.1
    }
    fn d_approx_points() -> usize {
        257
    }
}

impl Default for Grids {
    fn default() -> Self {
        toml::from_str("").expect("all grid fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "Tolerances::d_conjugacy")]
    pub conjugacy: f64,
    #[serde(default = "Tolerances::d_template")]
    pub template: f64,
    #[serde(default = "Tolerances::d_poly_tail")]
    pub poly_tail: f64,
    #[serde(default = "Tolerances::d_fit")]
    pub fit: f64,
    /// Deviation band standing in for the Lyapunov-norm slack.
    #[serde(default = "Tolerances::d_eps_dev")]
    pub eps_dev: f64,
}

impl Tolerances {
    fn d_conjugacy() -> f64 {
        1e-7
    }
    fn d_template() -> f64 {
        1e-7
    }
    fn d_poly_tail() -> f64 {
        1e-8
    }
    fn d_fit() -> f64 {
        1e-6
    }
    fn d_eps_dev() -> f64 {
        0.01
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        toml::from_str("").expect("all tolerance fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelKind,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "Scenario::d_anchor")]
    pub anchor: Point,
    #[serde(default = "Scenario::d_order")]
    pub order: usize,
    #[serde(default = "Scenario::d_radius")]
    pub radius: f64,
    /// Highest template level requested.
    #[serde(default)]
    pub level: usize,
    /// Orbit half-length for the splitting stage.
    #[serde(default = "Scenario::d_orbit")]
    pub orbit: usize,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "Scenario::d_out")]
    pub out_dir: String,
}

impl Scenario {
    fn d_anchor() -> Point {
        [0.0; 3]
    }
    fn d_order() -> usize {
        8
    }
    fn d_radius() -> f64 {
        0.5
    }
    fn d_orbit() -> usize {
        8
    }
    fn d_out() -> String {
        "out".into()
    }

    pub fn defaults_for(model: ModelKind) -> Scenario {
        let text = format!("model = \"{model:?}\"");
        parse_scenario(&text).expect("defaults are valid")
    }

    pub fn model_map(&self) -> ModelMap {
        ModelMap { kind: self.model, params: self.params }
    }

    /// SHA-256 of the canonical JSON form, with the output directory left out.
    pub fn hash_hex(&self) -> String {
        let keyed = Scenario { out_dir: String::new(), ..self.clone() };
        hex_digest(serde_json::to_string(&keyed).expect("scenario serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.check_partial_hyperbolicity()?;
        let bad = |field: &str, reason: String| Err(Error::Scenario { field: field.into(), reason });
        if !(self.radius > 0.0 && self.radius <= 1.0) {
            return bad("radius", format!("must lie in (0, 1], got {}", self.radius));
        }
        if self.order < self.level + 2 {
            return bad("order", format!("K >= l+2 required (K = {}, l = {})", self.order, self.level));
        }
        if self.order < 2 || self.order > 16 {
            return bad("order", format!("must lie in 2..=16, got {}", self.order));
        }
        let g = &self.grids;
        if g.t_points < 2 || g.s_points < 1 || g.samples_per_scale < 1 || g.approx_points < 2 {
            return bad("grids", "grids must be non-empty".into());
        }
        if !(g.t_max > 0.0 && g.t_max <= 1.0) {
            return bad("grids.t_max", format!("must lie in (0, 1], got {}", g.t_max));
        }
        if !(g.s_max > 0.0 && g.s_max <= 1.0) {
            return bad("grids.s_max", format!("must lie in (0, 1], got {}", g.s_max));
        }
        if g.k_min > g.k_max {
            return bad("grids.k_min", "k_min exceeds k_max".into());
        }
        if !(g.nu > 0.0 && g.nu < 1.0) {
            return bad("grids.nu", format!("must lie in (0, 1), got {}", g.nu));
        }
        if !(g.v > 0.0) {
            return bad("grids.v", "must be positive".into());
        }
        for (name, v) in [
            ("tolerances.conjugacy", self.tolerances.conjugacy),
            ("tolerances.template", self.tolerances.template),
            ("tolerances.poly_tail", self.tolerances.poly_tail),
            ("tolerances.fit", self.tolerances.fit),
            ("tolerances.eps_dev", self.tolerances.eps_dev),
        ] {
            if !(v > 0.0) {
                return bad(name, "must be positive".into());
            }
        }
        let map = self.model_map();
        let image = map.forward(self.anchor);
        let drift = (0..3).map(|i| (image[i] - self.anchor[i]).abs()).fold(0.0, f64::max);
        if drift > 1e-12 || !in_box(self.anchor) {
            return bad("anchor", "anchor must be a fixed point inside the working box".into());
        }
        Ok(())
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}
