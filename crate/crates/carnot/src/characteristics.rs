//! Characteristic curves of the intrinsic derivative `D^φ_j`, with
//! minimal/maximal solution selection for merely-continuous fields.
//!
//! For fixed `j` and frozen horizontal coordinates `x̂_j`, the vertical
//! components of an integral curve satisfy
//!
//! ```text
//! γ̇_{js}(t) = b^(s)_{j1}·φ(t, x̂_j, γ(t)) + ½ Σ_{l≥2} b^(s)_{jl} x_l
//! ```
//!
//! which is a Burgers-type scalar equation for the coupled component and an
//! exact line for every uncoupled one.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::group::GroupSpec;

/// Which solution of the (possibly non-unique) funnel a curve represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Plain,
    Minimal,
    Maximal,
    MinForwardMaxBackward,
}

/// A discretized characteristic of `D^φ_j`.
#[derive(Debug, Clone)]
pub struct Characteristic {
    pub j: usize,
    /// Frozen horizontal coordinates `(x_l)` for `l ≠ j`, in increasing `l`.
    pub xhat: Vec<f64>,
    pub t_samples: Vec<f64>,
    /// One `n`-vector per time sample.
    pub gamma: Vec<Vec<f64>>,
    pub flavor: Flavor,
    /// Whether integration stopped at the domain boundary.
    pub truncated: bool,
}

impl Characteristic {
    /// The component `γ_{js}` as a sample vector, `s` 1-based.
    pub fn component(&self, s: usize) -> Vec<f64> {
        self.gamma.iter().map(|g| g[s - 1]).collect()
    }

    /// Value of `γ` at `t` by linear interpolation in the sample grid.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let ts = &self.t_samples;
        if t <= ts[0] {
            return self.gamma[0].clone();
        }
        if t >= ts[ts.len() - 1] {
            return self.gamma[ts.len() - 1].clone();
        }
        let k = ts.partition_point(|&u| u <= t) - 1;
        let frac = (t - ts[k]) / (ts[k + 1] - ts[k]);
        self.gamma[k]
            .iter()
            .zip(&self.gamma[k + 1])
            .map(|(a, b)| a + frac * (b - a))
            .collect()
    }
}

/// Full `W`-coordinates `(x_2..x_m, y)` of the curve point at parameter `t`.
pub fn curve_point(spec: &GroupSpec, j: usize, t: f64, xhat: &[f64], gamma: &[f64]) -> Vec<f64> {
    let m = spec.m();
    let mut w = Vec::with_capacity(m - 1 + spec.n());
    let mut it = xhat.iter();
    for l in 2..=m {
        if l == j {
            w.push(t);
        } else {
            w.push(*it.next().expect("xhat has m−2 entries"));
        }
    }
    w.extend_from_slice(gamma);
    w
}

/// Right-hand side of the component equation for `γ_{js}`.
pub fn rhs(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    s: usize,
    t: f64,
    xhat: &[f64],
    gamma: &[f64],
) -> Result<f64> {
    let w = curve_point(spec, j, t, xhat, gamma);
    if !field.grid().contains(&w) {
        return Err(Error::OutOfDomain(format!("{w:?}")));
    }
    Ok(rhs_clamped(spec, field, j, s, t, xhat, gamma))
}

/// Same as [`rhs`], evaluating `φ` clamped to the domain closure.
pub fn rhs_clamped(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    s: usize,
    t: f64,
    xhat: &[f64],
    gamma: &[f64],
) -> f64 {
    let b_j1 = spec.b_entry(s, j, 1);
    let phi = if b_j1 == 0.0 {
        0.0
    } else {
        field.eval_clamped(&curve_point(spec, j, t, xhat, gamma))
    };
    b_j1 * phi + 0.5 * line_slope(spec, j, s, xhat)
}

/// The drift `Σ_{l≥2} b^(s)_{jl} x_l` of the affine part.
pub fn line_slope(spec: &GroupSpec, j: usize, s: usize, xhat: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut it = xhat.iter();
    for l in 2..=spec.m() {
        let x_l = if l == j { 0.0 } else { *it.next().expect("xhat has m−2 entries") };
        acc += spec.b_entry(s, j, l) * x_l;
    }
    acc
}

/// The first coupled vertical component (`b^(s)_{j1} ≠ 0`), if any.
pub fn reference_component(spec: &GroupSpec, j: usize) -> Option<usize> {
    (1..=spec.n()).find(|&s| spec.b_entry(s, j, 1) != 0.0)
}

fn domain_holds(spec: &GroupSpec, field: &ScalarField, j: usize, t: f64, xhat: &[f64], g: &[f64]) -> bool {
    field.grid().contains(&curve_point(spec, j, t, xhat, g))
}

/// Classical RK4 integration of the full `n`-dimensional system, forward from
/// `interval.0`. Stops with `truncated = true` at the domain boundary.
pub fn integrate(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    xhat: &[f64],
    y0: &[f64],
    interval: (f64, f64),
    step: f64,
) -> Result<Characteristic> {
    if !(step > 0.0) || !(interval.1 > interval.0) {
        return Err(Error::BadParams("need step > 0 and a nonempty interval".into()));
    }
    if !domain_holds(spec, field, j, interval.0, xhat, y0) {
        return Err(Error::ImmediateExit);
    }
    let n = spec.n();
    let steps = ((interval.1 - interval.0) / step).round() as usize;
    let h = (interval.1 - interval.0) / steps.max(1) as f64;
    let mut t = interval.0;
    let mut g = y0.to_vec();
    let mut t_samples = vec![t];
    let mut gamma = vec![g.clone()];
    let mut truncated = false;
    let f = |t: f64, g: &[f64]| -> Vec<f64> {
        (1..=n).map(|s| rhs_clamped(spec, field, j, s, t, xhat, g)).collect()
    };
    for _ in 0..steps {
        let k1 = f(t, &g);
        let g2: Vec<f64> = g.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = f(t + 0.5 * h, &g2);
        let g3: Vec<f64> = g.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = f(t + 0.5 * h, &g3);
        let g4: Vec<f64> = g.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        let k4 = f(t + h, &g4);
        let next: Vec<f64> = (0..n)
            .map(|i| g[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let t_next = t + h;
        if !domain_holds(spec, field, j, t_next, xhat, &next) {
            truncated = true;
            break;
        }
        t = t_next;
        g = next;
        t_samples.push(t);
        gamma.push(g.clone());
    }
    if t_samples.len() == 1 {
        return Err(Error::ImmediateExit);
    }
    Ok(Characteristic { j, xhat: xhat.to_vec(), t_samples, gamma, flavor: Flavor::Plain, truncated })
}

/// Closed-form reduction of the vertical components to the reference one.
///
/// Given samples of the coupled reference component `γ_{js*}` (or `None` when
/// every component is uncoupled), returns all `n` components: coupled ones by
/// the affine identity
///
/// ```text
/// γ_{js} = α·γ_{js*} + ½(t − t₀)·Σ_l x_l (b^(s)_{jl} − α·b^(s*)_{jl}) + (y_s − α·y_{s*})
/// ```
///
/// with `α = b^(s)_{j1}/b^(s*)_{j1}`, and uncoupled ones as exact lines.
/// `init_y` holds the values at `t_samples[0]`.
pub fn reduce_vertical(
    spec: &GroupSpec,
    j: usize,
    gamma_ref: Option<&[f64]>,
    init_y: &[f64],
    xhat: &[f64],
    t_samples: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = spec.n();
    if init_y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init_y.len() });
    }
    let s_ref = reference_component(spec, j);
    if s_ref.is_some() && gamma_ref.is_none() {
        return Err(Error::NoReferenceComponent);
    }
    let t0 = t_samples[0];
    let mut out = Vec::with_capacity(n);
    for s in 1..=n {
        let b_s = spec.b_entry(s, j, 1);
        if b_s == 0.0 {
            let slope = 0.5 * line_slope(spec, j, s, xhat);
            out.push(t_samples.iter().map(|&t| init_y[s - 1] + slope * (t - t0)).collect());
        } else {
            let sr = s_ref.expect("coupled component implies a reference");
            let gref = gamma_ref.expect("checked above");
            if gref.len() != t_samples.len() {
                return Err(Error::DimensionMismatch {
                    expected: t_samples.len(),
                    got: gref.len(),
                });
            }
            let alpha = b_s / spec.b_entry(sr, j, 1);
            let slope = 0.5 * (line_slope(spec, j, s, xhat) - alpha * line_slope(spec, j, sr, xhat));
            let offset = init_y[s - 1] - alpha * init_y[sr - 1];
            out.push(
                t_samples
                    .iter()
                    .zip(gref)
                    .map(|(&t, &g)| alpha * g + slope * (t - t0) + offset)
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Default perturbation sequence `2^{−k}`, `k = 3..=12`.
pub fn default_eps_seq() -> Vec<f64> {
    (3..=12).map(|k| 0.5f64.powi(k)).collect()
}

/// Integrates the scalar reduced equation for the reference component with a
/// perturbed right-hand side, forward on `[t̄, t1]` with `rhs + fwd_shift` and
/// backward on `[t0, t̄]` with `rhs + bwd_shift`, then rebuilds all components.
fn perturbed_curve(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    s_ref: usize,
    xhat: &[f64],
    y_bar: &[f64],
    t_bar: f64,
    interval: (f64, f64),
    step: f64,
    fwd_shift: f64,
    bwd_shift: f64,
    flavor: Flavor,
) -> Result<Characteristic> {
    // The scalar state is γ_{js*}; the other components follow from it via
    // the closed-form reduction, which is what φ must be evaluated on.
    let full_gamma = |t: f64, g: f64| -> Vec<f64> {
        let n = spec.n();
        let mut out = vec![0.0; n];
        for s in 1..=n {
            let b_s = spec.b_entry(s, j, 1);
            if s == s_ref {
                out[s - 1] = g;
            } else if b_s == 0.0 {
                out[s - 1] = y_bar[s - 1] + 0.5 * line_slope(spec, j, s, xhat) * (t - t_bar);
            } else {
                let alpha = b_s / spec.b_entry(s_ref, j, 1);
                let slope =
                    0.5 * (line_slope(spec, j, s, xhat) - alpha * line_slope(spec, j, s_ref, xhat));
                out[s - 1] = alpha * g + slope * (t - t_bar) + y_bar[s - 1] - alpha * y_bar[s_ref - 1];
            }
        }
        out
    };
    let scalar_rhs = |t: f64, g: f64, shift: f64| -> f64 {
        let gamma = full_gamma(t, g);
        rhs_clamped(spec, field, j, s_ref, t, xhat, &gamma) + shift
    };
    let rk4 = |t: f64, g: f64, h: f64, shift: f64| -> f64 {
        let k1 = scalar_rhs(t, g, shift);
        let k2 = scalar_rhs(t + 0.5 * h, g + 0.5 * h * k1, shift);
        let k3 = scalar_rhs(t + 0.5 * h, g + 0.5 * h * k2, shift);
        let k4 = scalar_rhs(t + h, g + h * k3, shift);
        g + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let steps_of = |len: f64| ((len / step).round() as usize).max(1);
    // Backward sweep, collected in reverse then flipped.
    let mut ts = Vec::new();
    let mut gs = Vec::new();
    if t_bar > interval.0 {
        let len = t_bar - interval.0;
        let k = steps_of(len);
        let h = len / k as f64;
        let mut t = t_bar;
        let mut g = y_bar[s_ref - 1];
        for _ in 0..k {
            g = rk4(t, g, -h, bwd_shift);
            t -= h;
            ts.push(t);
            gs.push(g);
        }
        ts.reverse();
        gs.reverse();
    }
    ts.push(t_bar);
    gs.push(y_bar[s_ref - 1]);
    if t_bar < interval.1 {
        let len = interval.1 - t_bar;
        let k = steps_of(len);
        let h = len / k as f64;
        let mut t = t_bar;
        let mut g = y_bar[s_ref - 1];
        for _ in 0..k {
            g = rk4(t, g, h, fwd_shift);
            t += h;
            ts.push(t);
            gs.push(g);
        }
    }
    let gamma: Vec<Vec<f64>> = ts.iter().zip(&gs).map(|(&t, &g)| full_gamma(t, g)).collect();
    Ok(Characteristic {
        j,
        xhat: xhat.to_vec(),
        t_samples: ts,
        gamma,
        flavor,
        truncated: false,
    })
}

/// Report of one extremal-curve approximation: the curve for the smallest
/// perturbation, plus the sup gap between the last two perturbation levels.
#[derive(Debug, Clone)]
pub struct Extremal {
    pub curve: Characteristic,
    pub gap: f64,
}

fn extremal(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    s_ref: usize,
    xhat: &[f64],
    y_bar: &[f64],
    t_bar: f64,
    interval: (f64, f64),
    step: f64,
    eps_seq: &[f64],
    minimal: bool,
    gap_tol: f64,
) -> Result<Extremal> {
    let flavor = if minimal { Flavor::Minimal } else { Flavor::Maximal };
    let mut last: Option<Characteristic> = None;
    let mut gap = f64::INFINITY;
    for &eps in eps_seq {
        let (fwd, bwd) = if minimal { (-eps, eps) } else { (eps, -eps) };
        let cur = perturbed_curve(
            spec, field, j, s_ref, xhat, y_bar, t_bar, interval, step, fwd, bwd, flavor,
        )?;
        if let Some(prev) = &last {
            gap = prev
                .gamma
                .iter()
                .zip(&cur.gamma)
                .map(|(a, b)| (a[s_ref - 1] - b[s_ref - 1]).abs())
                .fold(0.0, f64::max);
        }
        last = Some(cur);
    }
    if gap > gap_tol {
        return Err(Error::NonConvergent { gap, tol: gap_tol });
    }
    Ok(Extremal { curve: last.expect("eps_seq is nonempty"), gap })
}

/// Approximates the minimal and maximal solutions of the scalar reduced
/// equation through `(t̄, ȳ)` as limits of `ε`-perturbed integrations.
#[allow(clippy::too_many_arguments)]
pub fn min_max_through(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    xhat: &[f64],
    y_bar: &[f64],
    t_bar: f64,
    interval: (f64, f64),
    step: f64,
    eps_seq: &[f64],
    gap_tol: f64,
) -> Result<(Extremal, Extremal)> {
    let s_ref = reference_component(spec, j).ok_or(Error::NoReferenceComponent)?;
    if eps_seq.is_empty() || eps_seq.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::BadParams("eps_seq must be strictly decreasing".into()));
    }
    let min = extremal(
        spec, field, j, s_ref, xhat, y_bar, t_bar, interval, step, eps_seq, true, gap_tol,
    )?;
    let max = extremal(
        spec, field, j, s_ref, xhat, y_bar, t_bar, interval, step, eps_seq, false, gap_tol,
    )?;
    Ok((min, max))
}

/// The glued curve equal to the minimal solution for `t ≥ t̄` and the maximal
/// one for `t < t̄`, the selection used by the full parameterization.
#[allow(clippy::too_many_arguments)]
pub fn min_forward_max_backward(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    xhat: &[f64],
    y_bar: &[f64],
    t_bar: f64,
    interval: (f64, f64),
    step: f64,
    eps_seq: &[f64],
    gap_tol: f64,
) -> Result<Characteristic> {
    let (min, max) = min_max_through(
        spec, field, j, xhat, y_bar, t_bar, interval, step, eps_seq, gap_tol,
    )?;
    let mut ts = Vec::new();
    let mut gamma = Vec::new();
    for (t, g) in max.curve.t_samples.iter().zip(&max.curve.gamma) {
        if *t < t_bar {
            ts.push(*t);
            gamma.push(g.clone());
        }
    }
    for (t, g) in min.curve.t_samples.iter().zip(&min.curve.gamma) {
        if *t >= t_bar {
            ts.push(*t);
            gamma.push(g.clone());
        }
    }
    Ok(Characteristic {
        j,
        xhat: xhat.to_vec(),
        t_samples: ts,
        gamma,
        flavor: Flavor::MinForwardMaxBackward,
        truncated: false,
    })
}
