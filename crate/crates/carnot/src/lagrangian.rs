//! Full Lagrangian-type parameterizations: ordered families of extremal
//! characteristics labeled by a rational-sampling order map, extraction of the
//! ODE-side datum from curve curvature, verification of the Lagrangian
//! solution conditions, and the label-variable mollification pipeline.

use crate::characteristics::{line_slope, min_forward_max_backward, reference_component, rhs_clamped};
use crate::error::{Error, Result};
use crate::field::{Axis, Grid, Interp, MaskedField, ScalarField};
use crate::group::GroupSpec;
use crate::report::{CheckRecord, Provenance, VerificationReport};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A scalar curve as piecewise-linear samples over a time lattice.
#[derive(Debug, Clone)]
pub struct ScalarCurve {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

impl ScalarCurve {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() || t.len() < 2 {
            return Err(Error::BadParams("curve needs matching t/v samples, at least 2".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadParams("curve times must increase".into()));
        }
        Ok(ScalarCurve { t, v })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t[0] {
            return self.v[0];
        }
        let last = self.t.len() - 1;
        if t >= self.t[last] {
            return self.v[last];
        }
        let k = self.t.partition_point(|&u| u <= t) - 1;
        let frac = (t - self.t[k]) / (self.t[k + 1] - self.t[k]);
        self.v[k] + frac * (self.v[k + 1] - self.v[k])
    }
}

/// The fixed breadth-first mediant enumeration of `ℚ ∩ [0,1]`: `0, 1, 1/2,
/// 1/3, 2/3, 1/4, 2/5, 3/5, 3/4, …`.
pub fn rational_enumeration(len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if len > 0 {
        out.push(0.0);
    }
    if len > 1 {
        out.push(1.0);
    }
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(((0u64, 1u64), (1u64, 1u64)));
    while out.len() < len {
        let ((a, b), (c, d)) = queue.pop_front().expect("mediant tree is infinite");
        let med = (a + c, b + d);
        out.push(med.0 as f64 / med.1 as f64);
        queue.push_back(((a, b), med));
        queue.push_back((med, (c, d)));
    }
    out
}

/// The order map `θ(γ) = Σ_{l=0}^{L−1} 2^{−l} γ(r_l)` over the fixed rational
/// enumeration. Strictly order-preserving on ordered curve families up to
/// truncation resolution.
pub fn theta(curve: &ScalarCurve, depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(Error::BadParams("theta depth must be >= 1".into()));
    }
    let last = curve.t.len() - 1;
    if curve.t[0] > 1e-9 || curve.t[last] < 1.0 - 1e-9 {
        return Err(Error::CurveNotOnUnitInterval);
    }
    let mut acc = 0.0;
    for (l, r) in rational_enumeration(depth).into_iter().enumerate() {
        acc += 0.5f64.powi(l as i32) * curve.eval(r);
    }
    Ok(acc)
}

/// Resolution settings for the family construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    /// Time samples over the `x_j` axis.
    pub t_count: usize,
    /// Initial-data lattice size, also the label-axis sample count.
    pub y_count: usize,
    /// ODE integration step.
    pub step: f64,
    /// Perturbation sequence for the extremal selection.
    pub eps_seq: Vec<f64>,
    /// Cauchy tolerance between the last two perturbation levels.
    pub gap_tol: f64,
    /// Truncation depth of the order map.
    pub depth: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            t_count: 101,
            y_count: 101,
            step: 1e-3,
            eps_seq: crate::characteristics::default_eps_seq(),
            gap_tol: 5e-3,
            depth: 24,
        }
    }
}

/// Fraction of the label interval kept clear of the extreme curves.
const LABEL_MARGIN: f64 = 0.05;
/// Crossing tolerance when checking the family order.
const CROSSING_TOL: f64 = 1e-6;
/// Second differences must be Cauchy across a step doubling to this tolerance.
const CAUCHY_TOL: f64 = 1e-2;

/// A full Lagrangian-type parameterization for one derivative index `j`:
/// sampled maps `χ_{js}(t, y_s)` at frozen `x̂_j`, label bounds, and the
/// extracted datum.
#[derive(Debug, Clone)]
pub struct LagrangianParam {
    pub j: usize,
    /// Frozen horizontal coordinates `(x_l)`, `l ≠ j`, increasing `l`.
    pub xhat: Vec<f64>,
    /// The coupled reference component, if any.
    pub s_ref: Option<usize>,
    /// Label bound `B_s` per vertical component.
    pub bounds: Vec<f64>,
    /// One sampled map per component, each on a `(t, y_s)` grid.
    pub chi: Vec<ScalarField>,
    /// The extracted datum on the image lattice, once computed.
    pub wbar: Option<MaskedField>,
    pub depth: usize,
    pub eps_seq: Vec<f64>,
    pub step: f64,
}

impl LagrangianParam {
    /// The sampled map for component `s` (1-based).
    pub fn chi(&self, s: usize) -> &ScalarField {
        &self.chi[s - 1]
    }

    /// `W`-coordinates of `Υ_j(t, labels)`.
    pub fn upsilon(&self, spec: &GroupSpec, t: f64, labels: &[f64]) -> Vec<f64> {
        let m = spec.m();
        let mut w = Vec::with_capacity(m - 1 + spec.n());
        let mut it = self.xhat.iter();
        for l in 2..=m {
            if l == self.j {
                w.push(t);
            } else {
                w.push(*it.next().expect("xhat has m−2 entries"));
            }
        }
        for s in 1..=spec.n() {
            w.push(self.chi[s - 1].eval_clamped(&[t, labels[s - 1]]));
        }
        w
    }
}

fn y_axis_index(spec: &GroupSpec, s: usize) -> usize {
    spec.m() - 1 + s - 1
}

/// Builds a full Lagrangian-type parameterization of `field` for direction
/// `j` at the midpoint slice `x̂_j`: the coupled component by the ordered
/// family of extremal characteristics through an extended initial lattice,
/// labeled by the truncated order map; every uncoupled component as exact
/// lines. Label intervals are `(0, B_s)` with `B_s = (m−1)·B_max + 3` for the
/// coupled component and `(m−1)·B_max + 1` otherwise.
pub fn build_full_param(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    gs: &GridSpec,
) -> Result<LagrangianParam> {
    let m = spec.m();
    let n = spec.n();
    if j < 2 || j > m {
        return Err(Error::IndexOutOfRange(format!("j = {j}, need 2 <= j <= {m}")));
    }
    if field.grid().dim() != m - 1 + n {
        return Err(Error::DimensionMismatch { expected: m - 1 + n, got: field.grid().dim() });
    }
    if n > 1 && !spec.setting_ok() {
        return Err(Error::SettingViolated);
    }
    let coupled: Vec<usize> = (1..=n).filter(|&s| spec.b_entry(s, j, 1) != 0.0).collect();
    if coupled.len() > 1 {
        return Err(Error::SettingViolated);
    }
    let s_ref = coupled.first().copied();

    let axes = field.grid().axes();
    let xhat: Vec<f64> = (2..=m)
        .filter(|&l| l != j)
        .map(|l| {
            let a = &axes[l - 2];
            0.5 * (a.min + a.max)
        })
        .collect();
    let t_ax = &axes[j - 2];
    let (t_lo, t_hi) = (t_ax.min, t_ax.max);
    let span = t_hi - t_lo;
    let t_axis = Axis::new(t_lo, t_hi, gs.t_count)?;

    let b_max = (1..=n)
        .flat_map(|s| (1..=m).map(move |l| (s, l)))
        .map(|(s, l)| spec.b_entry(s, j, l).abs())
        .fold(0.0, f64::max);
    let bounds: Vec<f64> = (1..=n)
        .map(|s| (m - 1) as f64 * b_max + if Some(s) == s_ref { 3.0 } else { 1.0 })
        .collect();

    let mut chi: Vec<ScalarField> = Vec::with_capacity(n);
    for s in 1..=n {
        let y_ax = &axes[y_axis_index(spec, s)];
        let b_s = bounds[s - 1];
        let label_axis = Axis::new(0.0, b_s, gs.y_count)?;
        if Some(s) == s_ref {
            chi.push(build_coupled_component(
                spec, field, j, s, &xhat, &t_axis, y_ax, b_s, gs,
            )?);
        } else {
            // Exact line family: offset monotone in the label, drift margin so
            // the image covers the target interval at every time.
            let slope = 0.5 * line_slope(spec, j, s, &xhat);
            let drift = slope.abs() * span;
            let lo = y_ax.min - drift;
            let width = y_ax.max - y_ax.min + 2.0 * drift;
            let grid = Grid::new(vec![t_axis.clone(), label_axis])?;
            chi.push(ScalarField::from_fn(grid, Interp::Multilinear, |p| {
                lo + p[1] / b_s * width + slope * (p[0] - t_lo)
            })?);
        }
    }

    Ok(LagrangianParam {
        j,
        xhat,
        s_ref,
        bounds,
        chi,
        wbar: None,
        depth: gs.depth,
        eps_seq: gs.eps_seq.clone(),
        step: gs.step,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_coupled_component(
    spec: &GroupSpec,
    field: &ScalarField,
    j: usize,
    s: usize,
    xhat: &[f64],
    t_axis: &Axis,
    y_ax: &Axis,
    b_s: f64,
    gs: &GridSpec,
) -> Result<ScalarField> {
    let n = spec.n();
    let (t_lo, t_hi) = (t_axis.min, t_axis.max);
    let span = t_hi - t_lo;
    let drift =
        (spec.b_entry(s, j, 1).abs() * field.max_abs() + 0.5 * line_slope(spec, j, s, xhat).abs())
            * span;
    let init_axis = Axis::new(y_ax.min - drift, y_ax.max + drift, gs.y_count)?;
    // Other components start from their own axis midpoints; they only matter
    // through the clamped field evaluation along the curve.
    let mut y_bar: Vec<f64> = (1..=n)
        .map(|r| {
            let a = &field.grid().axes()[y_axis_index(spec, r)];
            0.5 * (a.min + a.max)
        })
        .collect();
    let t_lattice: Vec<f64> = (0..gs.t_count).map(|i| t_axis.coord(i)).collect();

    // Extremal curve through each initial datum, resampled on the t lattice.
    let mut family: Vec<Vec<f64>> = Vec::with_capacity(gs.y_count);
    for k in 0..gs.y_count {
        y_bar[s - 1] = init_axis.coord(k);
        let curve = min_forward_max_backward(
            spec,
            field,
            j,
            xhat,
            &y_bar,
            t_lo,
            (t_lo, t_hi),
            gs.step,
            &gs.eps_seq,
            gs.gap_tol,
        )?;
        family.push(t_lattice.iter().map(|&t| curve.at(t)[s - 1]).collect());
    }

    // (L.2): the family must be ordered at every sampled time.
    for pair in family.windows(2) {
        for i in 0..gs.t_count {
            if pair[0][i] > pair[1][i] + CROSSING_TOL {
                return Err(Error::NonMonotoneFamily);
            }
        }
    }

    // Order-map labels, rescaled into (0, B_s) with a margin.
    let t_norm: Vec<f64> = t_lattice.iter().map(|&t| (t - t_lo) / span).collect();
    let mut labels = Vec::with_capacity(gs.y_count);
    for vals in &family {
        let curve = ScalarCurve::new(t_norm.clone(), vals.clone())?;
        labels.push(theta(&curve, gs.depth)?);
    }
    let (th0, th1) = (labels[0], labels[gs.y_count - 1]);
    if !(th1 > th0 + 1e-12) {
        return Err(Error::NonMonotoneFamily);
    }
    let margin = LABEL_MARGIN * b_s;
    for l in &mut labels {
        *l = margin + (*l - th0) / (th1 - th0) * (b_s - 2.0 * margin);
    }

    // Sample by monotone interpolation in the label; the margin band beyond
    // the extreme curves extends the edge segments linearly, which keeps the
    // map strictly increasing in the label (the regularization step inverts
    // it).
    let label_axis = Axis::new(0.0, b_s, gs.y_count)?;
    let grid = Grid::new(vec![t_axis.clone(), label_axis.clone()])?;
    let mut values = vec![0.0; grid.len()];
    for q in 0..gs.y_count {
        let lab = label_axis.coord(q);
        let k = if lab <= labels[0] {
            0
        } else if lab >= labels[gs.y_count - 1] {
            gs.y_count - 2
        } else {
            labels.partition_point(|&u| u <= lab) - 1
        };
        let denom = labels[k + 1] - labels[k];
        let frac = if denom > 1e-15 { (lab - labels[k]) / denom } else { 0.0 };
        for i in 0..gs.t_count {
            values[grid.flat_index(&[i, q])] =
                family[k][i] + frac * (family[k + 1][i] - family[k][i]);
        }
    }
    ScalarField::new(grid, values, Interp::Multilinear)
}

/// Extracts the datum `w̄_j = (1/b^(s*)_{j1})·∂²_t χ_{js*}` by second centered
/// differences and pushes it to the image lattice `(t, y_{s*})`, taking the
/// smallest label among those mapping to the same cell. Cells whose second
/// difference is not Cauchy across a step doubling are flagged invalid, as are
/// cells never hit and the stencil boundary.
pub fn extract_wbar(
    spec: &GroupSpec,
    field: &ScalarField,
    param: &LagrangianParam,
) -> Result<MaskedField> {
    let s = param.s_ref.ok_or(Error::NoReferenceComponent)?;
    let b = spec.b_entry(s, param.j, 1);
    let chi = param.chi(s);
    let t_count = chi.grid().axes()[0].count;
    let k_count = chi.grid().axes()[1].count;
    let h = chi.grid().axes()[0].step();
    if t_count < 5 {
        return Err(Error::GridTooCoarse("need at least 5 time samples".into()));
    }
    let y_ax = field.grid().axes()[y_axis_index(spec, s)].clone();
    let target = Grid::new(vec![chi.grid().axes()[0].clone(), y_ax.clone()])?;
    let mut values = vec![0.0; target.len()];
    let mut valid = vec![false; target.len()];
    let mut hit = vec![false; target.len()];
    for q in 0..k_count {
        for i in 2..t_count - 2 {
            let at = |di: i64| chi.value_at(&[(i as i64 + di) as usize, q]);
            let d2_h = (at(1) - 2.0 * at(0) + at(-1)) / (h * h);
            let d2_2h = (at(2) - 2.0 * at(0) + at(-2)) / (4.0 * h * h);
            let y_star = at(0);
            let pos = (y_star - y_ax.min) / y_ax.step();
            let yi = pos.round();
            if yi < 0.0 || yi >= y_ax.count as f64 {
                continue;
            }
            let cell = target.flat_index(&[i, yi as usize]);
            if hit[cell] {
                continue;
            }
            hit[cell] = true;
            values[cell] = d2_h / b;
            valid[cell] = (d2_h - d2_2h).abs() <= CAUCHY_TOL;
        }
    }
    let out = ScalarField::new(target, values, Interp::NearestCell)?;
    Ok(MaskedField { field: out, valid })
}

/// Fraction of interior image cells excluded from the datum (never hit or
/// non-Cauchy), ignoring the two-row stencil boundary.
pub fn wbar_excluded_fraction(wbar: &MaskedField) -> f64 {
    let t_count = wbar.field.grid().axes()[0].count;
    let mut total = 0usize;
    let mut bad = 0usize;
    for flat in 0..wbar.field.grid().len() {
        let i = wbar.field.grid().multi_index(flat)[0];
        if i < 2 || i >= t_count - 2 {
            continue;
        }
        total += 1;
        if !wbar.valid[flat] {
            bad += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        bad as f64 / total as f64
    }
}

const LS1_TOL: f64 = 1e-2;
const LS2_TOL: f64 = 1e-2;
const LS3_TOL: f64 = 5e-2;
const EXCLUDED_TOL: f64 = 2e-2;
/// Two-sided derivatives count as stabilized when a step halving moves them
/// by less than this.
const LS2_STABLE_TOL: f64 = 1e-3;

/// Checks the Lagrangian-type solution conditions for `field` along `param`
/// against the supplied datum. Failures are report entries, never errors.
pub fn verify_lagrangian(
    spec: &GroupSpec,
    field: &ScalarField,
    param: &LagrangianParam,
    datum: &crate::intrinsic::Datum,
) -> VerificationReport {
    let mut report = VerificationReport::new(Provenance::new("lagrangian", 0));
    let wbar = match param.wbar.clone().map(Ok).unwrap_or_else(|| extract_wbar(spec, field, param))
    {
        Ok(w) => w,
        Err(e) => {
            report.push(CheckRecord::boolean(
                "wbar_extracted",
                false,
                format!("error: {e}"),
            ));
            return report;
        }
    };
    let s = param.s_ref.expect("extraction succeeded, so a reference exists");
    let chi = param.chi(s);
    let t_axis = &chi.grid().axes()[0];
    let (t_count, k_count) = (t_axis.count, chi.grid().axes()[1].count);
    let h = t_axis.step();
    let res = format!("t-step {:.1e}, {} labels", h, k_count);

    let curve_stride = (k_count / 32).max(1);
    let mid_labels: Vec<f64> = param
        .bounds
        .iter()
        .map(|b| 0.5 * b)
        .collect();
    let wbar_at = |i: usize, y: f64| -> Option<f64> {
        let y_ax = &wbar.field.grid().axes()[1];
        let yi = ((y - y_ax.min) / y_ax.step()).round();
        if yi < 0.0 || yi >= y_ax.count as f64 {
            return None;
        }
        let cell = wbar.field.grid().flat_index(&[i, yi as usize]);
        wbar.valid[cell].then(|| wbar.field.values()[cell])
    };
    let phi_on_curve = |i: usize, q: usize| -> f64 {
        let mut labels = mid_labels.clone();
        labels[s - 1] = chi.grid().axes()[1].coord(q);
        let w = param.upsilon(spec, t_axis.coord(i), &labels);
        field.eval_clamped(&w)
    };

    // (LS1): difference quotients of φ∘Υ match w̄ in L¹ along sampled curves.
    let mut l1_sum = 0.0;
    let mut l1_len = 0.0;
    // (LS2): where two-sided derivatives stabilize under step halving, they
    // equal w̄ at the base point.
    let mut ls2_sum = 0.0;
    let mut ls2_hits = 0usize;
    let mut ls2_candidates = 0usize;
    for q in (0..k_count).step_by(curve_stride) {
        for i in 2..t_count - 2 {
            let d_h = (phi_on_curve(i + 1, q) - phi_on_curve(i - 1, q)) / (2.0 * h);
            let Some(wv) = wbar_at(i, chi.value_at(&[i, q])) else { continue };
            l1_sum += (d_h - wv).abs() * h;
            l1_len += h;
            ls2_candidates += 1;
            let d_2h = (phi_on_curve(i + 2, q) - phi_on_curve(i - 2, q)) / (4.0 * h);
            if (d_h - d_2h).abs() <= LS2_STABLE_TOL * d_h.abs().max(1.0) {
                ls2_sum += (d_h - wv).abs();
                ls2_hits += 1;
            }
        }
    }
    let ls1 = if l1_len > 0.0 { l1_sum / l1_len } else { f64::INFINITY };
    report.push(CheckRecord::new("ls1_quotients_l1", ls1, LS1_TOL, res.clone()));
    let ls2 = if ls2_hits > 0 { ls2_sum / ls2_hits as f64 } else { f64::INFINITY };
    report.push(CheckRecord::new(
        "ls2_stable_derivatives",
        ls2,
        LS2_TOL,
        format!("{res}, coverage {ls2_hits}/{ls2_candidates}"),
    ));

    // (LS3): lattice L¹ distance between w̄ and the supplied datum over valid
    // cells, relative to their volume.
    let wj = datum.w(param.j);
    let target = wbar.field.grid();
    let mut l1 = 0.0;
    let mut vol = 0.0;
    let cell_vol: f64 = target.axes().iter().map(|a| a.step()).product();
    for flat in 0..target.len() {
        if !wbar.valid[flat] {
            continue;
        }
        let p = target.point(flat);
        let mut labels = mid_labels.clone();
        labels[s - 1] = 0.5 * param.bounds[s - 1];
        let mut w = param.upsilon(spec, p[0], &labels);
        w[y_axis_index(spec, s)] = p[1];
        l1 += (wbar.field.values()[flat] - wj.eval_clamped(&w)).abs() * cell_vol;
        vol += cell_vol;
    }
    let ls3 = if vol > 0.0 { l1 / vol } else { f64::INFINITY };
    report.push(CheckRecord::new("ls3_datum_identification", ls3, LS3_TOL, res.clone()));
    report.push(CheckRecord::new(
        "wbar_excluded_fraction",
        wbar_excluded_fraction(&wbar),
        EXCLUDED_TOL,
        res,
    ));
    report
}

/// Maximum lattice gap between the discrete time derivative of `χ_{js}` and
/// the characteristic right-hand side along `Υ_j` (the (L.3) consistency
/// quantity).
pub fn characteristic_consistency(
    spec: &GroupSpec,
    field: &ScalarField,
    param: &LagrangianParam,
) -> f64 {
    let n = spec.n();
    let mut worst = 0.0f64;
    for s in 1..=n {
        let chi = param.chi(s);
        let t_axis = &chi.grid().axes()[0];
        let h = t_axis.step();
        let k_count = chi.grid().axes()[1].count;
        for q in 0..k_count {
            let lab = chi.grid().axes()[1].coord(q);
            for i in 1..t_axis.count - 1 {
                let d = (chi.value_at(&[i + 1, q]) - chi.value_at(&[i - 1, q])) / (2.0 * h);
                let t = t_axis.coord(i);
                let mut labels: Vec<f64> =
                    param.bounds.iter().map(|b| 0.5 * b).collect();
                labels[s - 1] = lab;
                let w = param.upsilon(spec, t, &labels);
                let gamma = &w[spec.m() - 1..];
                let r = rhs_clamped(spec, field, param.j, s, t, &param.xhat, gamma);
                worst = worst.max((d - r).abs());
            }
        }
    }
    worst
}

/// Unit-mass polynomial bump kernel `c·(1 − u²)⁴` on `[−1, 1]`.
fn kernel(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let v = 1.0 - u * u;
        315.0 / 256.0 * v * v * v * v
    }
}

/// The label-variable regularization `χ^ε(t,y) = (1 + εy)·(χ(t,·) ∗ ρ_ε)(y)`
/// of the coupled component, with constant extension beyond the label ends.
/// Strictly increasing in the label for the normalized construction.
pub fn mollify_chi(param: &LagrangianParam, eps: f64) -> Result<ScalarField> {
    let s = param.s_ref.ok_or(Error::NoReferenceComponent)?;
    if !(eps > 0.0) {
        return Err(Error::BadParams("mollification eps must be positive".into()));
    }
    let chi = param.chi(s);
    let lab_axis = &chi.grid().axes()[1];
    if 2.0 * eps >= lab_axis.max - lab_axis.min {
        return Err(Error::KernelTooWide);
    }
    let hl = lab_axis.step();
    let reach = (eps / hl).floor() as i64;
    let weights: Vec<f64> = (-reach..=reach).map(|d| kernel(d as f64 * hl / eps)).collect();
    let mass: f64 = weights.iter().sum();
    let t_count = chi.grid().axes()[0].count;
    let k_count = lab_axis.count;
    let mut values = vec![0.0; chi.grid().len()];
    for i in 0..t_count {
        for q in 0..k_count {
            let mut acc = 0.0;
            for (w, d) in weights.iter().zip(-reach..=reach) {
                let idx = (q as i64 + d).clamp(0, k_count as i64 - 1) as usize;
                acc += w * chi.value_at(&[i, idx]);
            }
            let lab = lab_axis.coord(q);
            values[chi.grid().flat_index(&[i, q])] = (1.0 + eps * lab) * acc / mass;
        }
    }
    ScalarField::new(chi.grid().clone(), values, Interp::Multilinear)
}

/// Solves the regularized pipeline for `(φ^ε, w^ε)` on the image lattice:
/// `b·φ^ε(t, χ^ε(t,y)) = ∂_t χ^ε − ½Σ_l b_{jl}x_l` and `w^ε = (1/b)·∂²_t χ^ε`,
/// pushed to `(t, y_{s*})` by monotone inversion of `χ^ε` in the label.
pub fn mollified_phi_and_w(
    spec: &GroupSpec,
    field: &ScalarField,
    param: &LagrangianParam,
    eps: f64,
) -> Result<(ScalarField, ScalarField)> {
    let s = param.s_ref.ok_or(Error::NoReferenceComponent)?;
    let b = spec.b_entry(s, param.j, 1);
    let line = 0.5 * line_slope(spec, param.j, s, &param.xhat);
    let chi_eps = mollify_chi(param, eps)?;
    let t_axis = chi_eps.grid().axes()[0].clone();
    let (t_count, k_count) = (t_axis.count, chi_eps.grid().axes()[1].count);
    let h = t_axis.step();
    let at = |i: usize, q: usize| chi_eps.value_at(&[i, q]);
    for i in 0..t_count {
        for q in 1..k_count {
            if at(i, q) - at(i, q - 1) <= 1e-12 {
                return Err(Error::InversionFailure);
            }
        }
    }
    // Per-label derivative samples; one-sided differences at the time ends.
    let dt = |i: usize, q: usize| -> f64 {
        if i == 0 {
            (at(1, q) - at(0, q)) / h
        } else if i == t_count - 1 {
            (at(i, q) - at(i - 1, q)) / h
        } else {
            (at(i + 1, q) - at(i - 1, q)) / (2.0 * h)
        }
    };
    let d2t = |i: usize, q: usize| -> f64 {
        let i = i.clamp(1, t_count - 2);
        (at(i + 1, q) - 2.0 * at(i, q) + at(i - 1, q)) / (h * h)
    };
    let y_ax = field.grid().axes()[y_axis_index(spec, s)].clone();
    let target = Grid::new(vec![t_axis, y_ax.clone()])?;
    let mut phi_vals = vec![0.0; target.len()];
    let mut w_vals = vec![0.0; target.len()];
    for i in 0..t_count {
        for yq in 0..y_ax.count {
            let y = y_ax.coord(yq);
            // Monotone inversion of the label column.
            let (q, frac) = if y <= at(i, 0) {
                (0, 0.0)
            } else if y >= at(i, k_count - 1) {
                (k_count - 2, 1.0)
            } else {
                let mut lo = 0;
                let mut hi = k_count - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if at(i, mid) <= y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (lo, (y - at(i, lo)) / (at(i, lo + 1) - at(i, lo)))
            };
            let lerp = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
                f(i, q) + frac * (f(i, q + 1) - f(i, q))
            };
            let cell = target.flat_index(&[i, yq]);
            phi_vals[cell] = (lerp(&|i, q| dt(i, q)) - line) / b;
            w_vals[cell] = lerp(&|i, q| d2t(i, q)) / b;
        }
    }
    Ok((
        ScalarField::new(target.clone(), phi_vals, Interp::Multilinear)?,
        ScalarField::new(target, w_vals, Interp::Multilinear)?,
    ))
}

/// Serializes a parameterization as a directory: `chi_<s>.csv` per component,
/// `wbar.csv` plus its 0/1 validity mask `wbar_valid.csv`, and `meta.toml`.
pub fn save_param(param: &LagrangianParam, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (s0, chi) in param.chi.iter().enumerate() {
        let names = vec!["t".to_string(), format!("y{}", s0 + 1)];
        chi.write_csv(&dir.join(format!("chi_{}.csv", s0 + 1)), &names, "chi")?;
    }
    if let Some(wbar) = &param.wbar {
        let names = vec!["t".to_string(), "y_image".to_string()];
        wbar.field.write_csv(&dir.join("wbar.csv"), &names, "wbar")?;
        let mask = ScalarField::new(
            wbar.field.grid().clone(),
            wbar.valid.iter().map(|&ok| if ok { 1.0 } else { 0.0 }).collect(),
            Interp::NearestCell,
        )?;
        mask.write_csv(&dir.join("wbar_valid.csv"), &names, "valid")?;
    }
    let meta = ParamMeta {
        j: param.j,
        xhat: param.xhat.clone(),
        s_ref: param.s_ref,
        bounds: param.bounds.clone(),
        depth: param.depth,
        eps_seq: param.eps_seq.clone(),
        step: param.step,
    };
    std::fs::write(dir.join("meta.toml"), toml::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_param(dir: &Path) -> Result<LagrangianParam> {
    let meta: ParamMeta = toml::from_str(&std::fs::read_to_string(dir.join("meta.toml"))?)?;
    let mut chi = Vec::with_capacity(meta.bounds.len());
    for s0 in 0..meta.bounds.len() {
        let (field, _) = ScalarField::read_csv(&dir.join(format!("chi_{}.csv", s0 + 1)))?;
        chi.push(field);
    }
    let wbar_path = dir.join("wbar.csv");
    let wbar = if wbar_path.exists() {
        let (field, _) = ScalarField::read_csv(&wbar_path)?;
        let (mask, _) = ScalarField::read_csv(&dir.join("wbar_valid.csv"))?;
        let valid = mask.values().iter().map(|&v| v > 0.5).collect();
        Some(MaskedField { field, valid })
    } else {
        None
    };
    Ok(LagrangianParam {
        j: meta.j,
        xhat: meta.xhat,
        s_ref: meta.s_ref,
        bounds: meta.bounds,
        chi,
        wbar,
        depth: meta.depth,
        eps_seq: meta.eps_seq,
        step: meta.step,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamMeta {
    j: usize,
    xhat: Vec<f64>,
    s_ref: Option<usize>,
    bounds: Vec<f64>,
    depth: usize,
    eps_seq: Vec<f64>,
    step: f64,
}

/// Convenience: the reference component exists iff some `b^(s)_{j1} ≠ 0`.
pub fn has_reference(spec: &GroupSpec, j: usize) -> bool {
    reference_component(spec, j).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Builtin;
    use crate::intrinsic::Datum;

    fn h1() -> GroupSpec {
        GroupSpec::builtin(Builtin::Heisenberg(1)).unwrap()
    }

    fn h1_field(f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let grid = Grid::new(vec![
            Axis::new(0.0, 1.0, 41).unwrap(),
            Axis::new(0.0, 1.0, 41).unwrap(),
        ])
        .unwrap();
        ScalarField::from_fn(grid, Interp::Multilinear, f).unwrap()
    }

    fn quick_gs() -> GridSpec {
        GridSpec { t_count: 51, y_count: 41, step: 5e-3, ..GridSpec::default() }
    }

    /// Enough labels that adjacent curves land in adjacent image cells, so the
    /// pushed datum covers the lattice.
    fn fine_gs() -> GridSpec {
        GridSpec { t_count: 51, y_count: 161, step: 5e-3, ..GridSpec::default() }
    }

    #[test]
    fn rational_enumeration_prefix() {
        let r = rational_enumeration(9);
        let expect = [0.0, 1.0, 0.5, 1.0 / 3.0, 2.0 / 3.0, 0.25, 0.4, 0.6, 0.75];
        for (a, b) in r.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{r:?}");
        }
    }

    #[test]
    fn theta_frozen_values() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let zero = ScalarCurve::new(t.clone(), vec![0.0; 11]).unwrap();
        assert_eq!(theta(&zero, 24).unwrap(), 0.0);
        let one = ScalarCurve::new(t.clone(), vec![1.0; 11]).unwrap();
        let th = theta(&one, 20).unwrap();
        assert_eq!(th, 2.0 - 0.5f64.powi(19));
        let short = ScalarCurve::new(vec![0.0, 0.5], vec![0.0, 0.0]).unwrap();
        assert!(matches!(theta(&short, 8), Err(Error::CurveNotOnUnitInterval)));
    }

    #[test]
    fn theta_preserves_order() {
        let t: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let lower: Vec<f64> = t.iter().map(|u| u * u).collect();
        let upper: Vec<f64> = t.iter().map(|u| u * u + 0.3 * (1.0 - u)).collect();
        let a = theta(&ScalarCurve::new(t.clone(), lower).unwrap(), 24).unwrap();
        let b = theta(&ScalarCurve::new(t, upper).unwrap(), 24).unwrap();
        assert!(a < b);
    }

    #[test]
    fn build_constant_field_is_affine() {
        let g = h1();
        let f = h1_field(|_| 0.0);
        let p = build_full_param(&g, &f, 2, &quick_gs()).unwrap();
        assert_eq!(p.s_ref, Some(1));
        // b_max = 1, m = 2: coupled bound 1·1 + 3 = 4.
        assert_eq!(p.bounds, vec![4.0]);
        let chi = p.chi(1);
        // All characteristics of φ ≡ 0 are constant in t up to the residual
        // bias of the last perturbation level (2⁻¹²·t), and affine in the
        // label.
        let k_count = chi.grid().axes()[1].count;
        for q in 0..k_count {
            let v0 = chi.value_at(&[0, q]);
            for i in 0..chi.grid().axes()[0].count {
                assert!((chi.value_at(&[i, q]) - v0).abs() < 1e-3);
            }
        }
        let v: Vec<f64> = (0..k_count).map(|q| chi.value_at(&[0, q])).collect();
        let dv: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
        for d in &dv {
            assert!((d - dv[0]).abs() < 1e-9, "not affine in label: {dv:?}");
        }
        // Surjective onto the target interval.
        assert!(v[0] <= 0.0 + 1e-9 && v[k_count - 1] >= 1.0 - 1e-9);
    }

    #[test]
    fn build_linear_field_has_parabolic_curves() {
        let g = h1();
        let f = h1_field(|p| p[0]);
        let gs = quick_gs();
        let p = build_full_param(&g, &f, 2, &gs).unwrap();
        let chi = p.chi(1);
        let t_axis = &chi.grid().axes()[0];
        let h = t_axis.step();
        let b = g.b_entry(1, 2, 1);
        // Discrete t-curvature equals b everywhere.
        for q in 0..chi.grid().axes()[1].count {
            for i in 1..t_axis.count - 1 {
                let d2 = (chi.value_at(&[i + 1, q]) - 2.0 * chi.value_at(&[i, q])
                    + chi.value_at(&[i - 1, q]))
                    / (h * h);
                assert!((d2 - b).abs() < 1e-6, "d2 = {d2}");
            }
        }
        // Monotone in the label at every time.
        for i in 0..t_axis.count {
            for q in 1..chi.grid().axes()[1].count {
                assert!(chi.value_at(&[i, q]) >= chi.value_at(&[i, q - 1]) - 1e-9);
            }
        }
        // Characteristic consistency within 10·step.
        let gap = characteristic_consistency(&g, &f, &p);
        assert!(gap <= 10.0 * gs.step, "gap = {gap}");
    }

    #[test]
    fn label_bounds_complexified() {
        let g = GroupSpec::builtin(Builtin::ComplexifiedHeisenberg).unwrap();
        let grid = Grid::new(vec![
            Axis::new(0.0, 1.0, 9).unwrap(),
            Axis::new(0.0, 1.0, 9).unwrap(),
            Axis::new(0.0, 1.0, 9).unwrap(),
            Axis::new(0.0, 1.0, 9).unwrap(),
            Axis::new(0.0, 1.0, 9).unwrap(),
        ])
        .unwrap();
        let f = ScalarField::from_fn(grid, Interp::Multilinear, |_| 0.0).unwrap();
        let gs = GridSpec { t_count: 21, y_count: 15, step: 5e-3, ..GridSpec::default() };
        // j = 2 couples to s = 1 (b^(1)_{21} = 1): bound (m−1)·B + 3 = 6,
        // uncoupled bound (m−1)·B + 1 = 4.
        let p = build_full_param(&g, &f, 2, &gs).unwrap();
        assert_eq!(p.s_ref, Some(1));
        assert_eq!(p.bounds, vec![6.0, 4.0]);
    }

    #[test]
    fn setting_violation_detected() {
        use nalgebra::DMatrix;
        let b1 = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        let b2 = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0],
        );
        let g = GroupSpec::validate(4, 2, vec![b1, b2], 1.0).unwrap();
        assert!(!g.setting_ok());
        let grid = Grid::new(vec![Axis::new(0.0, 1.0, 3).unwrap(); 5]).unwrap();
        let f = ScalarField::from_fn(grid, Interp::Multilinear, |_| 0.0).unwrap();
        assert!(matches!(
            build_full_param(&g, &f, 2, &quick_gs()),
            Err(Error::SettingViolated)
        ));
    }

    #[test]
    fn wbar_for_linear_field_is_one() {
        let g = h1();
        let f = h1_field(|p| p[0]);
        let p = build_full_param(&g, &f, 2, &fine_gs()).unwrap();
        let wbar = extract_wbar(&g, &f, &p).unwrap();
        let mut worst = 0.0f64;
        let mut valid_cells = 0;
        for flat in 0..wbar.field.grid().len() {
            if wbar.valid[flat] {
                worst = worst.max((wbar.field.values()[flat] - 1.0).abs());
                valid_cells += 1;
            }
        }
        assert!(valid_cells > 100);
        assert!(worst <= 1e-2, "worst = {worst}");
        assert!(wbar_excluded_fraction(&wbar) < 0.02);
    }

    #[test]
    fn wbar_for_constant_field_is_zero() {
        let g = h1();
        let f = h1_field(|_| 0.3);
        let p = build_full_param(&g, &f, 2, &fine_gs()).unwrap();
        let wbar = extract_wbar(&g, &f, &p).unwrap();
        for flat in 0..wbar.field.grid().len() {
            if wbar.valid[flat] {
                assert!(wbar.field.values()[flat].abs() < 1e-6);
            }
        }
    }

    fn constant_datum(value: f64) -> Datum {
        let grid = Grid::new(vec![
            Axis::new(0.0, 1.0, 3).unwrap(),
            Axis::new(0.0, 1.0, 3).unwrap(),
        ])
        .unwrap();
        let f = ScalarField::from_fn(grid, Interp::NearestCell, |_| value).unwrap();
        Datum::new(vec![f], value.abs().max(1.0)).unwrap()
    }

    #[test]
    fn verify_linear_solution_passes() {
        let g = h1();
        let f = h1_field(|p| p[0]);
        let p = build_full_param(&g, &f, 2, &fine_gs()).unwrap();
        let report = verify_lagrangian(&g, &f, &p, &constant_datum(1.0));
        assert!(report.all_pass(), "{}", report.text_table());
    }

    #[test]
    fn verify_wrong_datum_fails_ls3_only() {
        let g = h1();
        let f = h1_field(|p| p[0]);
        let p = build_full_param(&g, &f, 2, &fine_gs()).unwrap();
        let report = verify_lagrangian(&g, &f, &p, &constant_datum(0.0));
        let ls3 = report.check("ls3_datum_identification").unwrap();
        assert!(!ls3.pass);
        assert!((ls3.measured - 1.0).abs() < 0.05, "gap = {}", ls3.measured);
        assert!(report.check("ls1_quotients_l1").unwrap().pass);
    }

    #[test]
    fn verify_constant_zero_passes() {
        let g = h1();
        let f = h1_field(|_| 0.7);
        let p = build_full_param(&g, &f, 2, &fine_gs()).unwrap();
        let report = verify_lagrangian(&g, &f, &p, &constant_datum(0.0));
        assert!(report.all_pass(), "{}", report.text_table());
    }

    fn manual_param(chi: ScalarField) -> LagrangianParam {
        LagrangianParam {
            j: 2,
            xhat: vec![],
            s_ref: Some(1),
            bounds: vec![chi.grid().axes()[1].max],
            chi: vec![chi],
            wbar: None,
            depth: 24,
            eps_seq: crate::characteristics::default_eps_seq(),
            step: 1e-3,
        }
    }

    #[test]
    fn mollify_examples() {
        let grid = Grid::new(vec![
            Axis::new(0.0, 1.0, 11).unwrap(),
            Axis::new(0.0, 2.0, 401).unwrap(),
        ])
        .unwrap();
        let ones = ScalarField::from_fn(grid.clone(), Interp::Multilinear, |_| 1.0).unwrap();
        let p = manual_param(ones);
        let out = mollify_chi(&p, 0.1).unwrap();
        // Unit-mass kernel fixes constants; the (1+εy) factor remains.
        let v = out.eval_clamped(&[0.5, 0.5]);
        assert!((v - 1.05).abs() < 1e-12, "v = {v}");

        let ident = ScalarField::from_fn(grid, Interp::Multilinear, |p| p[1]).unwrap();
        let p = manual_param(ident);
        let out = mollify_chi(&p, 0.1).unwrap();
        // χ = y → χ^ε = y + εy² away from the constant-extension ends.
        for q in 40..360 {
            let y = out.grid().axes()[1].coord(q);
            let expect = y + 0.1 * y * y;
            assert!((out.value_at(&[3, q]) - expect).abs() < 1e-10);
        }

        assert!(matches!(mollify_chi(&p, 1.5), Err(Error::KernelTooWide)));
    }

    #[test]
    fn mollify_sup_distance_shrinks_with_eps() {
        let g = h1();
        let f = h1_field(|p| p[0]);
        let p = build_full_param(&g, &f, 2, &quick_gs()).unwrap();
        let chi = p.chi(1);
        let mut last = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let out = mollify_chi(&p, eps).unwrap();
            let sup = out
                .values()
                .iter()
                .zip(chi.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(sup < last, "sup = {sup} at eps = {eps}");
            last = sup;
        }
    }

    #[test]
    fn mollified_chi_strictly_increasing() {
        let g = h1();
        let f = h1_field(|p| p[0]);
        let p = build_full_param(&g, &f, 2, &quick_gs()).unwrap();
        for eps in [0.2, 0.1, 0.05] {
            let out = mollify_chi(&p, eps).unwrap();
            let (t_count, k_count) =
                (out.grid().axes()[0].count, out.grid().axes()[1].count);
            for i in 0..t_count {
                for q in 1..k_count {
                    assert!(out.value_at(&[i, q]) > out.value_at(&[i, q - 1]));
                }
            }
        }
    }

    #[test]
    fn mollified_pipeline_zero_field() {
        let g = h1();
        let f = h1_field(|_| 0.0);
        let p = build_full_param(&g, &f, 2, &quick_gs()).unwrap();
        let (phi_eps, w_eps) = mollified_phi_and_w(&g, &f, &p, 0.1).unwrap();
        // The perturbed extremal curves carry a residual slope of at most
        // 2⁻¹², which is the floor for φ^ε here.
        assert!(phi_eps.max_abs() < 1e-3, "phi = {}", phi_eps.max_abs());
        assert!(w_eps.max_abs() < 1e-6, "w = {}", w_eps.max_abs());
    }

    #[test]
    fn mollified_l1_decreases_and_w_bounded() {
        let g = h1();
        let f = h1_field(|p| p[0]);
        let p = build_full_param(&g, &f, 2, &quick_gs()).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let (phi_eps, w_eps) = mollified_phi_and_w(&g, &f, &p, eps).unwrap();
            let grid = phi_eps.grid();
            let mut l1 = 0.0;
            for flat in 0..grid.len() {
                let pt = grid.point(flat);
                l1 += (phi_eps.values()[flat] - f.eval_clamped(&pt)).abs();
            }
            l1 /= grid.len() as f64;
            assert!(l1 < last, "l1 = {l1} at eps = {eps}");
            last = l1;
            let y_max = p.chi(1).grid().axes()[1].max;
            let bound = (1.0 + eps * y_max) * 1.0 + 0.05;
            assert!(w_eps.max_abs() <= bound, "w = {}", w_eps.max_abs());
        }
    }

    #[test]
    fn param_round_trip() {
        let g = h1();
        let f = h1_field(|p| p[0]);
        let mut p = build_full_param(&g, &f, 2, &quick_gs()).unwrap();
        p.wbar = Some(extract_wbar(&g, &f, &p).unwrap());
        let dir = tempfile::tempdir().unwrap();
        save_param(&p, dir.path()).unwrap();
        let q = load_param(dir.path()).unwrap();
        assert_eq!(q.j, p.j);
        assert_eq!(q.bounds, p.bounds);
        assert_eq!(q.s_ref, p.s_ref);
        assert_eq!(q.chi(1).values(), p.chi(1).values());
        let (a, b) = (p.wbar.unwrap(), q.wbar.unwrap());
        assert_eq!(a.valid, b.valid);
        assert_eq!(a.field.values().len(), b.field.values().len());
    }
}
