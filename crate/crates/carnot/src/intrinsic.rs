//! Intrinsic derivative operators `D^φ_j`, distributional-residual evaluation,
//! and the level-set intrinsic gradient.
//!
//! On the complement `W` with coordinates `(x_2..x_m, y_1..y_n)`,
//!
//! ```text
//! D^φ_j = ∂_{x_j} + Σ_s (φ·b^(s)_{j1} + ½ Σ_{l≥2} x_l b^(s)_{jl}) ∂_{y_s}
//! ```
//!
//! splits into a divergence-free linear part and a Burgers-type nonlinear
//! part, which is what the weak form integrates by parts.

use crate::error::{Error, Result};
use crate::field::{MaskedField, ScalarField};
use crate::group::{GroupSpec, Point};

/// Coefficients of `D^φ_j` at `a` with `φ(a) = phi_a`, over the basis
/// `(∂_{x_2}..∂_{x_m}, ∂_{y_1}..∂_{y_n})`.
pub fn dphi_coefficients(spec: &GroupSpec, j: usize, xw: &[f64], phi_a: f64) -> Result<Vec<f64>> {
    let m = spec.m();
    let n = spec.n();
    if j < 2 || j > m {
        return Err(Error::IndexOutOfRange(format!("j = {j}, need 2 <= j <= {m}")));
    }
    if xw.len() != m - 1 {
        return Err(Error::DimensionMismatch { expected: m - 1, got: xw.len() });
    }
    let mut coeff = vec![0.0; m - 1 + n];
    coeff[j - 2] = 1.0;
    for s in 1..=n {
        let mut c = phi_a * spec.b_entry(s, j, 1);
        for l in 2..=m {
            c += 0.5 * xw[l - 2] * spec.b_entry(s, j, l);
        }
        coeff[m - 1 + s - 1] = c;
    }
    Ok(coeff)
}

/// `D^φ_j φ` by centered differences, using the field's own values as the `φ`
/// coefficient. The one-cell boundary layer is marked invalid.
pub fn apply_dphi(spec: &GroupSpec, field: &ScalarField, j: usize) -> Result<MaskedField> {
    let m = spec.m();
    let n = spec.n();
    if j < 2 || j > m {
        return Err(Error::IndexOutOfRange(format!("j = {j}, need 2 <= j <= {m}")));
    }
    let grid = field.grid();
    let needed: Vec<usize> = std::iter::once(j - 2).chain(m - 1..m - 1 + n).collect();
    for &ax in &needed {
        if grid.axes()[ax].count < 3 {
            return Err(Error::GridTooCoarse(format!("axis {ax} has < 3 points")));
        }
    }
    let len = grid.len();
    let mut values = vec![0.0; len];
    let mut valid = vec![true; len];
    for i in 0..len {
        let multi = grid.multi_index(i);
        if needed.iter().any(|&ax| multi[ax] == 0 || multi[ax] + 1 == grid.axes()[ax].count) {
            valid[i] = false;
            continue;
        }
        let p = grid.point(i);
        let coeff = dphi_coefficients(spec, j, &p[..m - 1], field.values()[i])?;
        let mut acc = 0.0;
        for &ax in &needed {
            let c = coeff[ax];
            if c == 0.0 {
                continue;
            }
            let mut up = multi.clone();
            let mut dn = multi.clone();
            up[ax] += 1;
            dn[ax] -= 1;
            let h = grid.axes()[ax].step();
            acc += c * (field.value_at(&up) - field.value_at(&dn)) / (2.0 * h);
        }
        values[i] = acc;
    }
    let out = ScalarField::new(grid.clone(), values, field.interp())?;
    Ok(MaskedField { field: out, valid })
}

/// A separable `C¹` bump: product over axes of `(1 − u²)²` with
/// `u = (t − center) / radius`, supported on the box `center ± radii`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radii: Vec<f64>) -> Result<Self> {
        if center.len() != radii.len() {
            return Err(Error::DimensionMismatch { expected: center.len(), got: radii.len() });
        }
        if radii.iter().any(|r| !(r > &0.0)) {
            return Err(Error::BadParams("test-function radii must be positive".into()));
        }
        Ok(TestFunction { center, radii })
    }

    fn bump(u: f64) -> f64 {
        if u.abs() >= 1.0 {
            0.0
        } else {
            let v = 1.0 - u * u;
            v * v
        }
    }

    fn bump_prime(u: f64) -> f64 {
        if u.abs() >= 1.0 {
            0.0
        } else {
            -4.0 * u * (1.0 - u * u)
        }
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        self.center
            .iter()
            .zip(&self.radii)
            .zip(p)
            .map(|((c, r), t)| Self::bump((t - c) / r))
            .product()
    }

    /// Partial derivative along axis `k` (0-based), in closed form.
    pub fn partial(&self, p: &[f64], k: usize) -> f64 {
        let mut acc = 1.0;
        for (i, ((c, r), t)) in self.center.iter().zip(&self.radii).zip(p).enumerate() {
            let u = (t - c) / r;
            acc *= if i == k { Self::bump_prime(u) / r } else { Self::bump(u) };
        }
        acc
    }
}

/// A possibly rough right-hand-side datum `w = (w_2..w_m)` with an `L^∞`
/// bound.
#[derive(Debug, Clone)]
pub struct Datum {
    w: Vec<ScalarField>,
    bound: f64,
}

impl Datum {
    pub fn new(w: Vec<ScalarField>, bound: f64) -> Result<Self> {
        for field in &w {
            if field.max_abs() > bound + 1e-12 {
                return Err(Error::BadParams(format!(
                    "datum exceeds declared bound {bound}"
                )));
            }
        }
        Ok(Datum { w, bound })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// The component `w_j`, `j` in `2..=m`.
    pub fn w(&self, j: usize) -> &ScalarField {
        &self.w[j - 2]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.w
    }
}

/// The weak residual
///
/// ```text
/// R_j = ∫ [φ·X_jζ + Σ_s b^(s)_{j1}·(φ²/2)·∂_{y_s}ζ] + ∫ w_j·ζ
/// ```
///
/// over the support of `ζ` by composite midpoint quadrature with
/// `quad_per_axis` points per axis. `R_j = 0` (to quadrature accuracy)
/// characterizes distributional solutions of `D^φ_j φ = w_j`.
pub fn distributional_residual(
    spec: &GroupSpec,
    field: &ScalarField,
    datum: &Datum,
    zeta: &TestFunction,
    j: usize,
    quad_per_axis: usize,
) -> Result<f64> {
    let m = spec.m();
    let n = spec.n();
    let d = m - 1 + n;
    if zeta.center.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: zeta.center.len() });
    }
    let axes = field.grid().axes();
    for k in 0..d {
        if zeta.center[k] - zeta.radii[k] < axes[k].min - 1e-12
            || zeta.center[k] + zeta.radii[k] > axes[k].max + 1e-12
        {
            return Err(Error::SupportNotContained);
        }
    }
    let wj = datum.w(j);
    let steps: Vec<f64> = zeta.radii.iter().map(|r| 2.0 * r / quad_per_axis as f64).collect();
    let cell: f64 = steps.iter().product();
    let total = quad_per_axis.pow(d as u32);
    let mut acc = 0.0;
    let mut p = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        for k in (0..d).rev() {
            let i = rem % quad_per_axis;
            rem /= quad_per_axis;
            p[k] = zeta.center[k] - zeta.radii[k] + (i as f64 + 0.5) * steps[k];
        }
        let phi = field.eval_clamped(&p);
        // Linear part X_j = ∂_{x_j} + ½ Σ_s Σ_{l≥2} x_l b^(s)_{jl} ∂_{y_s}.
        let mut xj_zeta = zeta.partial(&p, j - 2);
        for s in 1..=n {
            let mut c = 0.0;
            for l in 2..=m {
                c += 0.5 * p[l - 2] * spec.b_entry(s, j, l);
            }
            xj_zeta += c * zeta.partial(&p, m - 1 + s - 1);
        }
        let mut flux = 0.0;
        for s in 1..=n {
            flux += spec.b_entry(s, j, 1) * zeta.partial(&p, m - 1 + s - 1);
        }
        acc += phi * xj_zeta + 0.5 * phi * phi * flux + wj.eval_clamped(&p) * zeta.value(&p);
    }
    Ok(acc * cell)
}

/// A level set `{f = 0}` given by a closed-form Euclidean gradient over the
/// full coordinates `(x_1..x_m, y_1..y_n)`.
pub struct LevelSet<'a> {
    pub grad: &'a dyn Fn(&[f64]) -> Vec<f64>,
}

const X1F_TOL: f64 = 1e-12;

/// The intrinsic gradient `−(X_2f/X_1f, …, X_mf/X_1f)` of the graph function
/// implicitly defined by `{f = 0}`, evaluated at the graph point `p`.
pub fn gradient_from_levelset(spec: &GroupSpec, f: &LevelSet, p: &Point) -> Result<Vec<f64>> {
    let grad = (f.grad)(p.coords());
    let dim = spec.dim();
    if grad.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: grad.len() });
    }
    let frame = spec.frame_at(p);
    let xf = |j: usize| -> f64 { (0..dim).map(|k| frame[(j - 1, k)] * grad[k]).sum() };
    let x1f = xf(1);
    if x1f.abs() < X1F_TOL {
        return Err(Error::VanishingX1f);
    }
    Ok((2..=spec.m()).map(|j| -xf(j) / x1f).collect())
}
