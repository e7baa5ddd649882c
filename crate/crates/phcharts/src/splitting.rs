//! Invariant line fields `E¹ ⊕ E² ⊕ E³` and their per-step multipliers.
//!
//! `e1` comes from pushing a vector forward along the backward orbit, `e3`
//! from pulling a vector back along the forward orbit. `e2` is the
//! intersection of the centre-unstable and centre-stable planes, each found
//! by two-dimensional subspace iteration.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DynMap, Point};

pub const FRAME_TOL: f64 = 1e-9;
pub const MAX_POWER: usize = 200;
const CHANGE_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingFrame {
    pub x: Point,
    pub e1: [f64; 3],
    pub e2: [f64; 3],
    pub e3: [f64; 3],
    pub lam1: f64,
    pub lam2: f64,
    pub lam3: f64,
}

impl SplittingFrame {
    pub fn vectors(&self) -> [Vector3<f64>; 3] {
        [Vector3::from(self.e1), Vector3::from(self.e2), Vector3::from(self.e3)]
    }

    pub fn lams(&self) -> [f64; 3] {
        [self.lam1, self.lam2, self.lam3]
    }

    /// Matrix with columns `e1, e2, e3`.
    pub fn basis(&self) -> Matrix3<f64> {
        let [a, b, c] = self.vectors();
        Matrix3::from_columns(&[a, b, c])
    }
}

fn orient(v: Vector3<f64>, axis: usize) -> Vector3<f64> {
    let v = v.normalize();
    if v[axis] < 0.0 {
        -v
    } else {
        v
    }
}

/// Direction of the most expanded line at `x`, by forward iteration from the past.
fn fast_line(map: &dyn DynMap, x: Point, n_power: usize, inverse: bool) -> Result<Vector3<f64>> {
    let seed = Vector3::new(0.8, 0.5, 0.33).normalize();
    let seed = if inverse { Vector3::new(seed[2], seed[1], seed[0]) } else { seed };
    let step_back = |p: Point| if inverse { map.forward(p) } else { map.inverse(p) };
    let push = |p: Point| {
        if inverse {
            map.inverse_jacobian(p)
        } else {
            map.jacobian(p)
        }
    };
    let mut past = vec![x];
    let mut prev: Option<Vector3<f64>> = None;
    let mut last_change = f64::INFINITY;
    for n in 1..=n_power {
        past.push(step_back(past[n - 1]));
        let mut v = seed;
        for k in (1..=n).rev() {
            v = (push(past[k]) * v).normalize();
        }
        if let Some(p) = prev {
            let v_aligned = if v.dot(&p) < 0.0 { -v } else { v };
            last_change = (v_aligned - p).norm();
            if last_change < CHANGE_TOL {
                return Ok(v_aligned);
            }
            prev = Some(v_aligned);
        } else {
            prev = Some(v);
        }
    }
    Err(Error::NoConvergence {
        what: format!("power iteration for the {} line", if inverse { "stable" } else { "unstable" }),
        residual: last_change,
    })
}

/// Normal of the most expanded plane at `x`.
fn fast_plane_normal(map: &dyn DynMap, x: Point, n_power: usize, inverse: bool) -> Result<Vector3<f64>> {
    let step_back = |p: Point| if inverse { map.forward(p) } else { map.inverse(p) };
    let push = |p: Point| {
        if inverse {
            map.inverse_jacobian(p)
        } else {
            map.jacobian(p)
        }
    };
    let seed = Matrix3x2::new(0.9, 0.2, 0.3, 0.8, 0.25, 0.4);
    let mut past = vec![x];
    let mut prev: Option<Vector3<f64>> = None;
    let mut last_change = f64::INFINITY;
    for n in 1..=n_power {
        past.push(step_back(past[n - 1]));
        let mut q = seed.qr().q();
        for k in (1..=n).rev() {
            q = (push(past[k]) * q).qr().q();
        }
        let normal = q.column(0).cross(&q.column(1)).normalize();
        if let Some(p) = prev {
            let aligned = if normal.dot(&p) < 0.0 { -normal } else { normal };
            last_change = (aligned - p).norm();
            if last_change < CHANGE_TOL {
                return Ok(aligned);
            }
            prev = Some(aligned);
        } else {
            prev = Some(normal);
        }
    }
    Err(Error::NoConvergence { what: "subspace iteration for a centre plane".into(), residual: last_change })
}

fn raw_frame(map: &dyn DynMap, x: Point, n_power: usize) -> Result<[Vector3<f64>; 3]> {
    let e1 = orient(fast_line(map, x, n_power, false)?, 0);
    let e3 = orient(fast_line(map, x, n_power, true)?, 2);
    let n_cu = fast_plane_normal(map, x, n_power, false)?;
    let n_cs = fast_plane_normal(map, x, n_power, true)?;
    let e2 = orient(n_cu.cross(&n_cs), 1);
    Ok([e1, e2, e3])
}

/// Invariant frame at `x` with multipliers measured against the frame at `f(x)`.
pub fn compute_frame(map: &dyn DynMap, x: Point, n_power: usize) -> Result<SplittingFrame> {
    let here = raw_frame(map, x, n_power)?;
    let fx = map.forward(x);
    let there = raw_frame(map, fx, n_power)?;
    frame_with_multipliers(map, x, here, &there)
}

fn frame_with_multipliers(
    map: &dyn DynMap,
    x: Point,
    here: [Vector3<f64>; 3],
    there: &[Vector3<f64>; 3],
) -> Result<SplittingFrame> {
    let jac = map.jacobian(x);
    let mut lams = [0.0; 3];
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        let image = jac * here[i];
        lams[i] = image.dot(&there[i]);
        worst = worst.max((image - there[i] * lams[i]).norm());
    }
    if worst > FRAME_TOL {
        return Err(Error::NoConvergence { what: format!("invariant frame at {x:?}"), residual: worst });
    }
    let [l1, l2, l3] = lams.map(f64::abs);
    if !(l1 > l2 && l2 > l3 && l1 > 1.0 && l3 < 1.0) {
        return Err(Error::Precondition(format!("multipliers {lams:?} at {x:?} are not dominated")));
    }
    Ok(SplittingFrame {
        x,
        e1: here[0].into(),
        e2: here[1].into(),
        e3: here[2].into(),
        lam1: lams[0],
        lam2: lams[1],
        lam3: lams[2],
    })
}

/// Orbit `f^{-N}(x), ..., f^{N}(x)` with frames and per-step multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    /// Index of the anchor within `frames`.
    pub centre: usize,
    pub frames: Vec<SplittingFrame>,
}

impl OrbitSegment {
    pub fn build(map: &dyn DynMap, x: Point, half_len: usize, n_power: usize) -> Result<OrbitSegment> {
        let mut points = vec![x];
        for _ in 0..half_len {
            let p = map.inverse(points[0]);
            points.insert(0, p);
        }
        for _ in 0..=half_len {
            let p = map.forward(*points.last().expect("non-empty"));
            points.push(p);
        }
        let raws = points.iter().map(|&p| raw_frame(map, p, n_power)).collect::<Result<Vec<_>>>()?;
        let mut aligned: Vec<[Vector3<f64>; 3]> = vec![raws[0]];
        for k in 1..raws.len() {
            let jac = map.jacobian(points[k - 1]);
            let mut f = raws[k];
            for i in 0..3 {
                if (jac * aligned[k - 1][i]).dot(&f[i]) < 0.0 {
                    f[i] = -f[i];
                }
            }
            aligned.push(f);
        }
        let frames = (0..points.len() - 1)
            .map(|k| frame_with_multipliers(map, points[k], aligned[k], &aligned[k + 1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(OrbitSegment { centre: half_len, frames })
    }

    /// Segment `x, f(x), ..., f^{n-1}(x)` whose frames are the orthonormal
    /// Gram-Schmidt flags of the forward derivative product, started from the
    /// coordinate axes. The multipliers are the diagonal of the successive R
    /// factors.
    ///
    /// Use this where the invariant splitting cannot be computed, e.g. when the
    /// backward orbit leaves every bounded set; the frames then only satisfy
    /// the flag version of the invariance identity.
    pub fn from_qr(map: &dyn DynMap, x: Point, n: usize) -> OrbitSegment {
        let mut q = Matrix3::<f64>::identity();
        let mut p = x;
        let mut frames = Vec::with_capacity(n);
        for _ in 0..n {
            let qr = (map.jacobian(p) * q).qr();
            let (mut qn, mut r) = (qr.q(), qr.r());
            for i in 0..3 {
                if r[(i, i)] < 0.0 {
                    qn.column_mut(i).neg_mut();
                    r.row_mut(i).neg_mut();
                }
            }
            let col = |m: &Matrix3<f64>, i: usize| [m[(0, i)], m[(1, i)], m[(2, i)]];
            frames.push(SplittingFrame {
                x: p,
                e1: col(&q, 0),
                e2: col(&q, 1),
                e3: col(&q, 2),
                lam1: r[(0, 0)],
                lam2: r[(1, 1)],
                lam3: r[(2, 2)],
            });
            q = qn;
            p = map.forward(p);
        }
        OrbitSegment { centre: 0, frames }
    }

    pub fn anchor(&self) -> &SplittingFrame {
        &self.frames[self.centre]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `λ^{(n)}_{i}` starting at frame `start`: the product of `n` per-step multipliers.
    pub fn product(&self, bundle: usize, start: usize, n: usize) -> f64 {
        self.frames[start..start + n].iter().map(|f| f.lams()[bundle]).product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub chi: [f64; 3],
    /// Largest deviation of a single-step log-multiplier from the mean.
    pub band: [f64; 3],
}

pub fn lyapunov_exponents(segment: &OrbitSegment) -> Exponents {
    let n = segment.len() as f64;
    let mut chi = [0.0; 3];
    let mut band = [0.0f64; 3];
    for i in 0..3 {
        chi[i] = segment.frames.iter().map(|f| f.lams()[i].abs().ln()).sum::<f64>() / n;
        band[i] = segment.frames.iter().map(|f| (f.lams()[i].abs().ln() - chi[i]).abs()).fold(0.0, f64::max);
    }
    Exponents { chi, band }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    scenario_hash: String,
    model_hash: String,
    anchor: Point,
    half_len: usize,
    centre: usize,
}

pub fn cache_file_name(model_hash: &str, half_len: usize) -> String {
    format!("orbit-{}-n{half_len}.jsonl", &model_hash[..16])
}

/// Write the segment as JSON lines: a header record, then one frame per line.
pub fn write_orbit_cache(path: &Path, segment: &OrbitSegment, scenario_hash: &str, model_hash: &str) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = CacheHeader {
        scenario_hash: scenario_hash.into(),
        model_hash: model_hash.into(),
        anchor: segment.anchor().x,
        half_len: segment.centre,
        centre: segment.centre,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for f in &segment.frames {
        writeln!(out, "{}", serde_json::to_string(f)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_orbit_cache(path: &Path, model_hash: &str) -> Result<OrbitSegment> {
    let file = std::fs::File::open(path).map_err(|_| Error::MissingCache(format!("orbit cache {}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header: CacheHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::MissingCache(format!("empty orbit cache {}", path.display()))),
    };
    if header.model_hash != model_hash {
        return Err(Error::MissingCache(format!("orbit cache {} belongs to another model", path.display())));
    }
    let frames = lines.map(|l| Ok(serde_json::from_str::<SplittingFrame>(&l?)?)).collect::<Result<Vec<_>>>()?;
    Ok(OrbitSegment { centre: header.centre, frames })
}
