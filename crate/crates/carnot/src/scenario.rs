//! Scenario orchestration: manufacture a test field from a small analytic
//! catalog, run the three solution-notion verifications in order, and emit a
//! consolidated report with an equivalence verdict.

use crate::error::{Error, Result};
use crate::field::{Axis, Grid, Interp, ScalarField};
use crate::graph::{estimate_lipschitz, estimate_vertical_holder};
use crate::group::{Builtin, GroupSpec};
use crate::intrinsic::{distributional_residual, Datum, TestFunction};
use crate::lagrangian::{build_full_param, extract_wbar, verify_lagrangian, GridSpec, LagrangianParam};
use crate::report::{CheckRecord, Provenance, VerificationReport};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupConfig {
    /// One of `heisenberg`, `free2`, `complexified`, `corank1`, `custom`.
    pub kind: String,
    /// Heisenberg `k` or free-group rank `m`.
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    /// Vertical matrices, row-major, one `m×m` block per component.
    pub b: Option<Vec<Vec<Vec<f64>>>>,
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldConfig {
    /// One of `constant`, `linear_x2`, `abs_y_pow`, `sqrt_burgers`,
    /// `levelset`, `csv`.
    pub kind: String,
    pub value: Option<f64>,
    /// Exponent for `abs_y_pow`.
    pub p: Option<f64>,
    /// Plane coefficients for `levelset`: `φ = Σ c_l·x_l` over the horizontal
    /// `W`-coordinates (the level set `x_1 − Σ c_l x_l = 0` solved for `x_1`).
    pub coeffs: Option<Vec<f64>>,
    pub path: Option<PathBuf>,
    /// Per-axis domain, three parallel arrays.
    pub mins: Option<Vec<f64>>,
    pub maxs: Option<Vec<f64>>,
    pub counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatumConfig {
    /// One of `constant`, `csv`, `extracted`.
    pub kind: String,
    pub value: Option<f64>,
    pub paths: Option<Vec<PathBuf>>,
}

/// Resolution and tolerance settings, all overridable per scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Resolutions {
    pub quad_per_axis: usize,
    /// Test-function radius as a fraction of each axis span.
    pub zeta_radius: f64,
    pub residual_tol: f64,
    pub t_count: usize,
    pub y_count: usize,
    pub step: f64,
    pub gap_tol: f64,
    pub depth: usize,
    /// Pair budget for the sup estimators on the main field.
    pub max_pairs: usize,
    /// Halvings of the estimator grid used for the divergence flag.
    pub refine: usize,
    /// Estimator growth across all refinements above which the quantity is
    /// flagged divergent.
    pub divergence_ratio: f64,
    pub eps_values: Vec<f64>,
}

impl Default for Resolutions {
    fn default() -> Self {
        Resolutions {
            quad_per_axis: 256,
            zeta_radius: 0.1,
            residual_tol: 1e-6,
            t_count: 51,
            y_count: 161,
            step: 5e-3,
            gap_tol: 5e-3,
            depth: 24,
            max_pairs: 1_000_000,
            refine: 2,
            divergence_ratio: 1.25,
            eps_values: vec![0.2, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub group: GroupConfig,
    pub field: FieldConfig,
    pub datum: DatumConfig,
    pub j_list: Vec<usize>,
    #[serde(default)]
    pub resolutions: Resolutions,
    #[serde(default)]
    pub seed: u64,
    /// Raw config text, kept for the provenance hash.
    #[serde(skip)]
    pub raw: String,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut sc: Scenario = toml::from_str(text)?;
        sc.raw = text.to_string();
        sc.base_dir = base_dir.to_path_buf();
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_toml(&text, &base)
    }

    fn validate(&self) -> Result<()> {
        if self.j_list.is_empty() {
            return Err(Error::ConfigError("j_list must be nonempty".into()));
        }
        let spec = build_group(&self.group)?;
        for &j in &self.j_list {
            if j < 2 || j > spec.m() {
                return Err(Error::ConfigError(format!(
                    "j = {j} outside 2..={}",
                    spec.m()
                )));
            }
        }
        if let Some(p) = &self.field.path {
            if !self.base_dir.join(p).exists() {
                return Err(Error::ConfigError(format!("missing field file {p:?}")));
            }
        }
        if let Some(paths) = &self.datum.paths {
            for p in paths {
                if !self.base_dir.join(p).exists() {
                    return Err(Error::ConfigError(format!("missing datum file {p:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            t_count: self.resolutions.t_count,
            y_count: self.resolutions.y_count,
            step: self.resolutions.step,
            eps_seq: crate::characteristics::default_eps_seq(),
            gap_tol: self.resolutions.gap_tol,
            depth: self.resolutions.depth,
        }
    }
}

pub fn build_group(cfg: &GroupConfig) -> Result<GroupSpec> {
    let matrix = |rows: &Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::ConfigError("vertical matrix must be square".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(DMatrix::from_row_slice(m, m, &flat))
    };
    let spec = match cfg.kind.as_str() {
        "heisenberg" => GroupSpec::builtin(Builtin::Heisenberg(
            cfg.k.ok_or(Error::ConfigError("heisenberg needs k".into()))?,
        ))?,
        "free2" => GroupSpec::builtin(Builtin::Free2(
            cfg.m.ok_or(Error::ConfigError("free2 needs m".into()))?,
        ))?,
        "complexified" => GroupSpec::builtin(Builtin::ComplexifiedHeisenberg)?,
        "corank1" => {
            let b = cfg.b.as_ref().ok_or(Error::ConfigError("corank1 needs b".into()))?;
            if b.len() != 1 {
                return Err(Error::ConfigError("corank1 takes exactly one matrix".into()));
            }
            GroupSpec::builtin(Builtin::Corank1(matrix(&b[0])?))?
        }
        "custom" => {
            let m = cfg.m.ok_or(Error::ConfigError("custom needs m".into()))?;
            let n = cfg.n.ok_or(Error::ConfigError("custom needs n".into()))?;
            let b = cfg.b.as_ref().ok_or(Error::ConfigError("custom needs b".into()))?;
            let mats = b.iter().map(matrix).collect::<Result<Vec<_>>>()?;
            GroupSpec::validate(m, n, mats, cfg.eps.unwrap_or(1.0))?
        }
        other => return Err(Error::ConfigError(format!("unknown group kind {other}"))),
    };
    Ok(match cfg.eps {
        Some(eps) if cfg.kind != "custom" => spec.with_eps(eps)?,
        _ => spec,
    })
}

/// The analytic field catalog; every entry has a closed-form oracle.
fn catalog_value(cfg: &FieldConfig, m: usize, p: &[f64]) -> Result<f64> {
    Ok(match cfg.kind.as_str() {
        "constant" => cfg.value.unwrap_or(0.0),
        "linear_x2" => p[0],
        "abs_y_pow" => p[m - 1]
            .abs()
            .powf(cfg.p.ok_or(Error::ConfigError("abs_y_pow needs p".into()))?),
        "sqrt_burgers" => 2.0 * p[m - 1].signum() * p[m - 1].abs().sqrt(),
        "levelset" => {
            let c = cfg
                .coeffs
                .as_ref()
                .ok_or(Error::ConfigError("levelset needs coeffs".into()))?;
            c.iter().zip(p).map(|(ci, xi)| ci * xi).sum()
        }
        other => return Err(Error::ConfigError(format!("unknown field kind {other}"))),
    })
}

fn domain_axes(cfg: &FieldConfig) -> Result<Vec<Axis>> {
    let (mins, maxs, counts) = match (&cfg.mins, &cfg.maxs, &cfg.counts) {
        (Some(a), Some(b), Some(c)) if a.len() == b.len() && b.len() == c.len() => (a, b, c),
        _ => {
            return Err(Error::ConfigError(
                "analytic fields need matching mins/maxs/counts".into(),
            ))
        }
    };
    mins.iter()
        .zip(maxs)
        .zip(counts)
        .map(|((&lo, &hi), &ct)| Axis::new(lo, hi, ct))
        .collect()
}

pub fn build_field(sc: &Scenario, spec: &GroupSpec) -> Result<ScalarField> {
    if sc.field.kind == "csv" {
        let p = sc.field.path.as_ref().ok_or(Error::ConfigError("csv needs path".into()))?;
        let (field, _) = ScalarField::read_csv(&sc.base_dir.join(p))?;
        return Ok(field);
    }
    let axes = domain_axes(&sc.field)?;
    if axes.len() != spec.m() - 1 + spec.n() {
        return Err(Error::ConfigError(format!(
            "field domain has {} axes, group needs {}",
            axes.len(),
            spec.m() - 1 + spec.n()
        )));
    }
    let grid = Grid::new(axes)?;
    let m = spec.m();
    // Surface catalog/parameter problems before sampling the whole lattice.
    catalog_value(&sc.field, m, &grid.point(0))?;
    ScalarField::from_fn(grid, Interp::Multilinear, |p| {
        catalog_value(&sc.field, m, p).expect("catalog entry validated above")
    })
}

/// A rough (piecewise-constant) datum with `w_j ≡ value` for every `j`.
fn constant_datum(spec: &GroupSpec, field: &ScalarField, value: f64) -> Result<Datum> {
    let axes: Vec<Axis> = field
        .grid()
        .axes()
        .iter()
        .map(|a| Axis::new(a.min, a.max, 3))
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(axes)?;
    let one = ScalarField::from_fn(grid, Interp::NearestCell, |_| value)?;
    Datum::new(vec![one; spec.m() - 1], value.abs().max(1e-12))
}

/// Datum with the extracted `w̄` in slot `j` and zeros elsewhere, for
/// `datum.kind = "extracted"` scenarios.
fn extracted_datum(spec: &GroupSpec, param: &LagrangianParam, j: usize) -> Result<Datum> {
    let wbar = param.wbar.as_ref().ok_or(Error::NoReferenceComponent)?;
    let values: Vec<f64> = wbar
        .field
        .values()
        .iter()
        .zip(&wbar.valid)
        .map(|(v, ok)| if *ok { *v } else { 0.0 })
        .collect();
    let wj = ScalarField::new(wbar.field.grid().clone(), values, Interp::NearestCell)?;
    let zero = wj.map(|_| 0.0)?;
    let bound = wj.max_abs() + 1e-9;
    let mut w = vec![zero; spec.m() - 1];
    w[j - 2] = wj;
    Datum::new(w, bound)
}

fn resolve_datum(
    sc: &Scenario,
    spec: &GroupSpec,
    field: &ScalarField,
    param: &LagrangianParam,
    j: usize,
) -> Result<Datum> {
    match sc.datum.kind.as_str() {
        "constant" => constant_datum(spec, field, sc.datum.value.unwrap_or(0.0)),
        "extracted" => extracted_datum(spec, param, j),
        "csv" => {
            let paths = sc
                .datum
                .paths
                .as_ref()
                .ok_or(Error::ConfigError("csv datum needs paths".into()))?;
            if paths.len() != spec.m() - 1 {
                return Err(Error::ConfigError("need one datum file per j".into()));
            }
            let mut w = Vec::with_capacity(paths.len());
            for p in paths {
                let (f, _) = ScalarField::read_csv(&sc.base_dir.join(p))?;
                w.push(f);
            }
            let bound = w.iter().map(|f| f.max_abs()).fold(0.0, f64::max) + 1e-9;
            Datum::new(w, bound)
        }
        other => Err(Error::ConfigError(format!("unknown datum kind {other}"))),
    }
}

/// Thin-in-x estimator grid at refinement level `k` (the y axes halve their
/// step per level). Only used for the sup estimators, where exhaustive pair
/// coverage matters more than x resolution.
fn estimator_field(
    sc: &Scenario,
    spec: &GroupSpec,
    field: &ScalarField,
    level: usize,
) -> Result<ScalarField> {
    let nx = spec.m() - 1;
    let axes: Vec<Axis> = field
        .grid()
        .axes()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let count = if i < nx { 5 } else { 40 * (1 << level) + 1 };
            Axis::new(a.min, a.max, count)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(axes)?;
    if sc.field.kind == "csv" {
        ScalarField::from_fn(grid, Interp::Multilinear, |p| field.eval_clamped(p))
    } else {
        let m = spec.m();
        ScalarField::from_fn(grid, Interp::Multilinear, |p| {
            catalog_value(&sc.field, m, p).unwrap_or(0.0)
        })
    }
}

/// Sup estimate across refinement levels with a divergence flag.
fn refined_estimate(
    sc: &Scenario,
    spec: &GroupSpec,
    field: &ScalarField,
    est: impl Fn(&ScalarField) -> Result<f64>,
) -> Result<(Vec<f64>, bool)> {
    let mut values = Vec::new();
    for level in 0..=sc.resolutions.refine {
        values.push(est(&estimator_field(sc, spec, field, level)?)?);
    }
    let base = values[0];
    let last = values[values.len() - 1];
    let divergent =
        !last.is_finite() || (base > 1e-9 && last / base > sc.resolutions.divergence_ratio);
    Ok((values, divergent))
}

/// Battery of C¹ bump test functions: one at the domain center and one shifted
/// along each axis in each direction.
fn zeta_battery(field: &ScalarField, radius_frac: f64) -> Vec<TestFunction> {
    let axes = field.grid().axes();
    let center: Vec<f64> = axes.iter().map(|a| 0.5 * (a.min + a.max)).collect();
    let radii: Vec<f64> = axes.iter().map(|a| radius_frac * (a.max - a.min)).collect();
    let mut out = vec![TestFunction::new(center.clone(), radii.clone()).expect("radii positive")];
    for (k, a) in axes.iter().enumerate() {
        for sign in [-1.0, 1.0] {
            let mut c = center.clone();
            c[k] += sign * 0.15 * (a.max - a.min);
            out.push(TestFunction::new(c, radii.clone()).expect("radii positive"));
        }
    }
    out
}

/// Executes, in order: the vertical ½-Hölder hypothesis gate, condition (1)
/// via the intrinsic Lipschitz estimator, condition (2) via the weak residual
/// over a test-function battery, and condition (3) via the full Lagrangian
/// pipeline. Pipeline failures become failing report records; only
/// configuration problems are errors.
pub fn run_scenario(sc: &Scenario) -> Result<VerificationReport> {
    let spec = build_group(&sc.group)?;
    let field = build_field(sc, &spec)?;
    let res = &sc.resolutions;
    let mut report = VerificationReport::new(Provenance::new(&sc.raw, sc.seed));

    // Hypothesis gate: φ must be locally ½-Hölder along the vertical.
    let (hvals, hdiv) = refined_estimate(sc, &spec, &field, |f| {
        estimate_vertical_holder(&spec, f, res.max_pairs, sc.seed)
    })?;
    report.push(CheckRecord::boolean(
        "hypothesis_half_holder_gate",
        !hdiv,
        format!("estimates {:?} over {} refinements", hvals, res.refine),
    ));
    if hdiv {
        // Divergence flag: equivalence is not asserted, no verdict record.
        return Ok(report);
    }

    // Condition (1): finite, refinement-stable intrinsic Lipschitz estimate.
    let (lvals, ldiv) = refined_estimate(sc, &spec, &field, |f| {
        estimate_lipschitz(&spec, f, res.max_pairs, sc.seed)
    })?;
    let cond1 = !ldiv;
    report.push(CheckRecord::boolean(
        "condition1_intrinsic_lipschitz",
        cond1,
        format!("estimates {lvals:?}"),
    ));

    let gs = sc.grid_spec();
    let mut cond2 = true;
    let mut cond3 = true;
    for &j in &sc.j_list {
        let mut param = match build_full_param(&spec, &field, j, &gs) {
            Ok(p) => p,
            Err(e) => {
                report.push(CheckRecord::boolean(
                    format!("condition3_build_j{j}"),
                    false,
                    format!("error: {e}"),
                ));
                cond2 = false;
                cond3 = false;
                continue;
            }
        };
        match extract_wbar(&spec, &field, &param) {
            Ok(w) => param.wbar = Some(w),
            Err(e) => {
                report.push(CheckRecord::boolean(
                    format!("wbar_extracted_j{j}"),
                    false,
                    format!("error: {e}"),
                ));
            }
        }
        let datum = resolve_datum(sc, &spec, &field, &param, j)?;

        // Condition (2): weak residual over the battery.
        let mut worst = 0.0f64;
        let mut batt_err = None;
        for zeta in zeta_battery(&field, res.zeta_radius) {
            match distributional_residual(&spec, &field, &datum, &zeta, j, res.quad_per_axis) {
                Ok(r) => worst = worst.max(r.abs()),
                Err(e) => batt_err = Some(e),
            }
        }
        let rec = match batt_err {
            None => CheckRecord::new(
                format!("condition2_residual_j{j}"),
                worst,
                res.residual_tol,
                format!("{0}^d midpoint, {1} test functions", res.quad_per_axis, 2 * field.grid().dim() + 1),
            ),
            Some(e) => CheckRecord::boolean(
                format!("condition2_residual_j{j}"),
                false,
                format!("error: {e}"),
            ),
        };
        cond2 &= rec.pass;
        report.push(rec);

        // Condition (3): Lagrangian-type solution checks.
        let sub = verify_lagrangian(&spec, &field, &param, &datum);
        let sub_pass = sub.all_pass();
        for mut rec in sub.checks {
            rec.name = format!("j{j}_{}", rec.name);
            report.push(rec);
        }
        report.push(CheckRecord::boolean(
            format!("condition3_lagrangian_j{j}"),
            sub_pass,
            format!("t-step {:.1e}, {} labels", gs.step, gs.y_count),
        ));
        cond3 &= sub_pass;
    }

    report.push(CheckRecord::boolean("condition2_distributional", cond2, "aggregate"));
    report.push(CheckRecord::boolean("condition3_lagrangian", cond3, "aggregate"));
    // The theorem binds (2) and (3) to the same datum: they must agree with
    // each other whatever the supplied w is.
    report.push(CheckRecord::boolean(
        "verdict_datum_bound_agreement",
        cond2 == cond3,
        format!("(1) {cond1}, (2) {cond2}, (3) {cond3}"),
    ));
    Ok(report)
}
