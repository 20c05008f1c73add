//! Sampled scalar fields on rectangular lattices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One axis of a rectangular lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(max > min) || count < 2 {
            return Err(Error::BadParams(format!(
                "axis [{min}, {max}] with {count} points; need max > min and count >= 2"
            )));
        }
        Ok(Axis { min, max, count })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }
}

/// A rectangular lattice, row-major in axis order (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::BadParams("grid needs at least one axis".into()));
        }
        Ok(Grid { axes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &i) in self.axes.iter().zip(multi) {
            idx = idx * a.count + i;
        }
        idx
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            multi[k] = flat % a.count;
            flat /= a.count;
        }
        multi
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.coord(i))
            .collect()
    }

    /// Whether `p` lies in the closed box, with a small relative margin.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().zip(&self.axes).all(|(&v, a)| {
                let slack = 1e-12 * (1.0 + a.max.abs().max(a.min.abs()));
                v >= a.min - slack && v <= a.max + slack
            })
    }
}

/// Interpolation rule for off-lattice evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    /// Multilinear: exact on lattice points, monotone along axes.
    Multilinear,
    /// Piecewise constant on cells centered at lattice points.
    NearestCell,
}

/// A sampled real function on a rectangular lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    interp: Interp,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, interp: Interp) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadParams("field values must be finite".into()));
        }
        Ok(ScalarField { grid, values, interp })
    }

    pub fn from_fn(grid: Grid, interp: Interp, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values, interp)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn value_at(&self, multi: &[usize]) -> f64 {
        self.values[self.grid.flat_index(multi)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Evaluates at `p`, failing outside the closed box.
    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        if !self.grid.contains(p) {
            return Err(Error::OutOfDomain(format!("{p:?}")));
        }
        Ok(self.eval_clamped(p))
    }

    /// Evaluates at `p` clamped to the closed box.
    pub fn eval_clamped(&self, p: &[f64]) -> f64 {
        let d = self.grid.dim();
        let mut lo = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for (k, a) in self.grid.axes.iter().enumerate() {
            let v = p[k].clamp(a.min, a.max);
            let t = (v - a.min) / a.step();
            let i = (t.floor() as usize).min(a.count - 2);
            lo[k] = i;
            frac[k] = (t - i as f64).clamp(0.0, 1.0);
        }
        match self.interp {
            Interp::NearestCell => {
                let multi: Vec<usize> = lo
                    .iter()
                    .zip(&frac)
                    .map(|(&i, &f)| if f < 0.5 { i } else { i + 1 })
                    .collect();
                self.value_at(&multi)
            }
            Interp::Multilinear => {
                let mut acc = 0.0;
                let corners = 1usize << d;
                let mut multi = vec![0usize; d];
                for c in 0..corners {
                    let mut w = 1.0;
                    for k in 0..d {
                        if c >> k & 1 == 1 {
                            multi[k] = lo[k] + 1;
                            w *= frac[k];
                        } else {
                            multi[k] = lo[k];
                            w *= 1.0 - frac[k];
                        }
                    }
                    if w != 0.0 {
                        acc += w * self.value_at(&multi);
                    }
                }
                acc
            }
        }
    }

    /// Pointwise transform, keeping grid and interpolation rule.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect(), self.interp)
    }

    /// Writes one lattice point per row as CSV with the given axis names, plus
    /// a TOML sidecar (`<path>.meta.toml`) describing the grid.
    pub fn write_csv(&self, path: &Path, axis_names: &[String], value_name: &str) -> Result<()> {
        if axis_names.len() != self.grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.dim(),
                got: axis_names.len(),
            });
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = axis_names.to_vec();
        header.push(value_name.to_string());
        w.write_record(&header)?;
        for i in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.point(i).iter().map(|v| v.to_string()).collect();
            row.push(self.values[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        let meta = FieldMeta {
            axes: self.grid.axes.clone(),
            axis_names: axis_names.to_vec(),
            interp: self.interp,
        };
        std::fs::write(sidecar_path(path), toml::to_string(&meta)?)?;
        Ok(())
    }

    /// Reads a field written by [`write_csv`](Self::write_csv).
    pub fn read_csv(path: &Path) -> Result<(Self, Vec<String>)> {
        let meta: FieldMeta = toml::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let grid = Grid::new(meta.axes)?;
        let mut r = csv::Reader::from_path(path)?;
        let mut values = Vec::with_capacity(grid.len());
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec
                .get(grid.dim())
                .ok_or_else(|| Error::ConfigError("missing value column".into()))?
                .parse()
                .map_err(|e| Error::ConfigError(format!("bad value: {e}")))?;
            values.push(v);
        }
        Ok((Self::new(grid, values, meta.interp)?, meta.axis_names))
    }
}

#[derive(Serialize, Deserialize)]
struct FieldMeta {
    axes: Vec<Axis>,
    axis_names: Vec<String>,
    interp: Interp,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.toml");
    s.into()
}

/// A field with a per-point validity mask (invalid cells are excluded from
/// norms and comparisons).
#[derive(Debug, Clone)]
pub struct MaskedField {
    pub field: ScalarField,
    pub valid: Vec<bool>,
}

impl MaskedField {
    pub fn all_valid(field: ScalarField) -> Self {
        let valid = vec![true; field.values().len()];
        MaskedField { field, valid }
    }

    pub fn invalid_fraction(&self) -> f64 {
        let bad = self.valid.iter().filter(|v| !**v).count();
        bad as f64 / self.valid.len() as f64
    }

    /// Max over valid lattice points of `|self − other|` evaluated pointwise.
    pub fn max_abs_diff(&self, other: impl Fn(&[f64]) -> f64) -> f64 {
        let grid = self.field.grid();
        let mut worst = 0.0f64;
        for i in 0..grid.len() {
            if self.valid[i] {
                worst = worst.max((self.field.values()[i] - other(&grid.point(i))).abs());
            }
        }
        worst
    }
}

/// Axis names for the canonical complement `W`: `x2..xm` then `y1..yn`.
pub fn w_axis_names(m: usize, n: usize) -> Vec<String> {
    let mut names: Vec<String> = (2..=m).map(|j| format!("x{j}")).collect();
    names.extend((1..=n).map(|s| format!("y{s}")));
    names
}
