//! The canonical complementary split `G = W · V`, intrinsic graph maps, graph
//! translation, and cone-condition estimators.
//!
//! `V` is the first horizontal axis and `W = {x_1 = 0}`. A point of `W` is
//! identified with `(x_2..x_m, y_1..y_n)` and a graph function `φ: W → V` is a
//! [`ScalarField`] on that box.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Axis, Grid, Interp, ScalarField};
use crate::group::{GroupSpec, Point};

/// A point of the canonical complement `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WPoint {
    pub xw: Vec<f64>,
    pub y: Vec<f64>,
}

impl WPoint {
    pub fn from_slice(spec: &GroupSpec, w: &[f64]) -> Result<Self> {
        let d = spec.m() + spec.n() - 1;
        if w.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: w.len() });
        }
        Ok(WPoint { xw: w[..spec.m() - 1].to_vec(), y: w[spec.m() - 1..].to_vec() })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.xw.clone();
        v.extend_from_slice(&self.y);
        v
    }

    /// The natural inclusion `i(a) = (0, x_2..x_m, y)`.
    pub fn include(&self) -> Point {
        let mut x = vec![0.0];
        x.extend_from_slice(&self.xw);
        Point::new(&x, &self.y)
    }
}

/// The element `(v, 0, …, 0)` of `V`.
pub fn v_element(spec: &GroupSpec, v: f64) -> Point {
    let mut x = vec![0.0; spec.m()];
    x[0] = v;
    Point::new(&x, &vec![0.0; spec.n()])
}

/// Unique decomposition `p = i(a) · (v, 0, …, 0)`.
pub fn project_canonical(spec: &GroupSpec, p: &Point) -> Result<(WPoint, f64)> {
    let v = p.x()[0];
    let w_elem = spec.multiply(p, &spec.inverse(&v_element(spec, v)))?;
    let mut xw = w_elem.x()[1..].to_vec();
    for c in xw.iter_mut() {
        if c.abs() < 1e-300 {
            *c = 0.0;
        }
    }
    Ok((WPoint { xw, y: w_elem.y().to_vec() }, v))
}

/// The graph map `Φ(a) = i(a) · (φ(a), 0, …, 0)`.
pub fn graph_point(spec: &GroupSpec, field: &ScalarField, a: &WPoint) -> Result<Point> {
    let phi = field.eval(&a.to_vec())?;
    spec.multiply(&a.include(), &v_element(spec, phi))
}

/// The conjugated shift `‖φ(a)^{−1} · i(a)^{−1} · i(b) · φ(a)‖`, the quantity
/// controlling the intrinsic Lipschitz cone condition.
pub fn shift_quantity(spec: &GroupSpec, field: &ScalarField, a: &WPoint, b: &WPoint) -> Result<f64> {
    let phi = v_element(spec, field.eval(&a.to_vec())?);
    field.eval(&b.to_vec())?;
    let mut g = spec.multiply(&spec.inverse(&phi), &spec.inverse(&a.include()))?;
    g = spec.multiply(&g, &b.include())?;
    g = spec.multiply(&g, &phi)?;
    Ok(spec.hnorm(&g))
}

const DEGENERATE_SHIFT: f64 = 1e-12;
const DEGENERATE_DPHI: f64 = 1e-9;

fn sample_pairs(len: usize, max_pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = len * (len - 1) / 2;
    if total <= max_pairs {
        let mut pairs = Vec::with_capacity(total);
        for i in 0..len {
            for j in i + 1..len {
                pairs.push((i, j));
            }
        }
        pairs
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..max_pairs)
            .map(|_| {
                let i = rng.gen_range(0..len);
                let mut j = rng.gen_range(0..len - 1);
                if j >= i {
                    j += 1;
                }
                (i.min(j), i.max(j))
            })
            .collect()
    }
}

/// Sup over sampled lattice pairs of `|φ(b) − φ(a)| / shift_quantity(a, b)`.
///
/// Pairs are exhaustive up to `max_pairs`, then seeded-random. A vanishing
/// shift with a non-vanishing increment means `φ` is not a graph function over
/// `W` and is reported as an error.
pub fn estimate_lipschitz(
    spec: &GroupSpec,
    field: &ScalarField,
    max_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let grid = field.grid();
    let mut sup = 0.0f64;
    for (i, j) in sample_pairs(grid.len(), max_pairs, seed) {
        let a = WPoint::from_slice(spec, &grid.point(i))?;
        let b = WPoint::from_slice(spec, &grid.point(j))?;
        let dphi = (field.values()[j] - field.values()[i]).abs();
        let shift = shift_quantity(spec, field, &a, &b)?;
        if shift < DEGENERATE_SHIFT {
            if dphi > DEGENERATE_DPHI {
                return Err(Error::DegeneratePair { dphi });
            }
            continue;
        }
        sup = sup.max(dphi / shift);
    }
    Ok(sup)
}

/// Sup over sampled pairs differing only in `y` of
/// `|φ(a) − φ(b)| / |y_a − y_b|^{1/2}`.
pub fn estimate_vertical_holder(
    spec: &GroupSpec,
    field: &ScalarField,
    max_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let grid = field.grid();
    let nx = spec.m() - 1;
    let mut sup = 0.0f64;
    for (i, j) in sample_pairs(grid.len(), max_pairs, seed) {
        let mi = grid.multi_index(i);
        let mj = grid.multi_index(j);
        if mi[..nx] != mj[..nx] {
            continue;
        }
        let pi = grid.point(i);
        let pj = grid.point(j);
        let dy: f64 = pi[nx..]
            .iter()
            .zip(&pj[nx..])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dy > 0.0 {
            sup = sup.max((field.values()[i] - field.values()[j]).abs() / dy.sqrt());
        }
    }
    Ok(sup)
}

/// Left translation of a graph: returns `φ_q` with
/// `graph(φ_q) = q · graph(φ)`.
///
/// The map `a ↦ (ā, v)` given by decomposing `q^{−1} · i(a)` is affine in `a`;
/// the output grid is the bounding box of the preimage of the input domain,
/// with the same per-axis counts. Lattice points whose image falls outside the
/// input domain take clamped values.
pub fn translate_graph(spec: &GroupSpec, field: &ScalarField, q: &Point) -> Result<ScalarField> {
    let d = spec.m() + spec.n() - 1;
    let q_inv = spec.inverse(q);
    // ā(a) = A·a + c, v(a) = −q_1 (constant: the V part of q^{−1}·i(a)).
    let image_of = |a: &[f64]| -> Result<(Vec<f64>, f64)> {
        let w = WPoint::from_slice(spec, a)?;
        let (abar, v) = project_canonical(spec, &spec.multiply(&q_inv, &w.include())?)?;
        Ok((abar.to_vec(), v))
    };
    let (c, v_shift) = image_of(&vec![0.0; d])?;
    let c = DVector::from_vec(c);
    let mut a_mat = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        let (col, _) = image_of(&e)?;
        for r in 0..d {
            a_mat[(r, k)] = col[r] - c[r];
        }
    }
    let a_inv = a_mat.clone().try_inverse().ok_or(Error::SingularMatrix)?;
    // Bounding box of the preimage of the input box corners.
    let axes_in = field.grid().axes();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for corner in 0..(1usize << d) {
        let pt: Vec<f64> = (0..d)
            .map(|k| if corner >> k & 1 == 1 { axes_in[k].max } else { axes_in[k].min })
            .collect();
        let pre = &a_inv * (DVector::from_vec(pt) - &c);
        for k in 0..d {
            lo[k] = lo[k].min(pre[k]);
            hi[k] = hi[k].max(pre[k]);
        }
    }
    let axes_out: Result<Vec<Axis>> =
        (0..d).map(|k| Axis::new(lo[k], hi[k], axes_in[k].count)).collect();
    let grid_out = Grid::new(axes_out?)?;
    let mut any_inside = false;
    let mut values = Vec::with_capacity(grid_out.len());
    for i in 0..grid_out.len() {
        let a = grid_out.point(i);
        let abar = &a_mat * DVector::from_vec(a) + &c;
        let abar: Vec<f64> = abar.iter().copied().collect();
        if field.grid().contains(&abar) {
            any_inside = true;
        }
        // (P_V)^{−1}·φ means subtracting the V component, which is −q_1.
        values.push(field.eval_clamped(&abar) - v_shift);
    }
    if !any_inside {
        return Err(Error::EmptyTranslatedDomain);
    }
    ScalarField::new(grid_out, values, Interp::Multilinear)
}
