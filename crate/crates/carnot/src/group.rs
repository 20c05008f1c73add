//! Step-2 Carnot group arithmetic in exponential coordinates.
//!
//! A group element is `(x, y)` with `x` in the horizontal layer `R^m` and `y`
//! in the vertical layer `R^n`. The product is
//!
//! ```text
//! (x, y) · (x', y') = (x + x', y + y' − ½⟨Bx, x'⟩)
//! ```
//!
//! where `⟨Bx, x'⟩_s = (B^(s) x) · x'` for skew-symmetric matrices `B^(s)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SKEW_TOL: f64 = 1e-10;

/// A validated step-2 Carnot group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    m: usize,
    n: usize,
    b: Vec<DMatrix<f64>>,
    eps: f64,
    setting_ok: bool,
}

/// A group element, stored as one contiguous vector with the `m` horizontal
/// coordinates first.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
    m: usize,
}

impl Point {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(x.len() + y.len());
        coords.extend_from_slice(x);
        coords.extend_from_slice(y);
        Point { coords, m: x.len() }
    }

    pub fn from_coords(coords: Vec<f64>, m: usize) -> Self {
        assert!(m <= coords.len());
        Point { coords, m }
    }

    pub fn x(&self) -> &[f64] {
        &self.coords[..self.m]
    }

    pub fn y(&self) -> &[f64] {
        &self.coords[self.m..]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}

/// Built-in group families.
#[derive(Debug, Clone)]
pub enum Builtin {
    /// Heisenberg group `H^k`: `m = 2k`, `n = 1`.
    Heisenberg(usize),
    /// Corank-1 group with a caller-supplied skew-symmetric matrix.
    Corank1(DMatrix<f64>),
    /// Free step-2 group on `m` generators: `n = m(m−1)/2`.
    Free2(usize),
    /// Complexified Heisenberg group: `m = 4`, `n = 2`.
    ComplexifiedHeisenberg,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    m: usize,
    n: usize,
    eps: f64,
    b: Vec<Vec<Vec<f64>>>,
}

impl GroupSpec {
    /// Validates dimensions, skew-symmetry and linear independence of the
    /// vertical matrices, and computes the one-coupled-component flag.
    pub fn validate(m: usize, n: usize, b: Vec<DMatrix<f64>>, eps: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::DimensionOutOfRange(format!("m = {m}, need m >= 2")));
        }
        if n < 1 || n > m * (m - 1) / 2 {
            return Err(Error::DimensionOutOfRange(format!(
                "n = {n}, need 1 <= n <= m(m-1)/2 = {}",
                m * (m - 1) / 2
            )));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::BadParams(format!("eps = {eps}, need eps in (0,1]")));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        for (s, mat) in b.iter().enumerate() {
            if mat.nrows() != m || mat.ncols() != m {
                return Err(Error::DimensionMismatch { expected: m, got: mat.nrows() });
            }
            for i in 0..m {
                for j in 0..m {
                    if (mat[(i, j)] + mat[(j, i)]).abs() > SKEW_TOL {
                        return Err(Error::NotSkewSymmetric { s: s + 1, i: i + 1, j: j + 1 });
                    }
                }
            }
        }
        let mut stacked = DMatrix::zeros(n, m * m);
        for (s, mat) in b.iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    stacked[(s, i * m + j)] = mat[(i, j)];
                }
            }
        }
        if stacked.rank(SKEW_TOL) != n {
            return Err(Error::LinearlyDependent);
        }
        let setting_ok = compute_setting_ok(m, n, &b);
        Ok(GroupSpec { m, n, b, eps, setting_ok })
    }

    /// Constructs one of the built-in families, with `eps = 1`.
    pub fn builtin(kind: Builtin) -> Result<Self> {
        match kind {
            Builtin::Heisenberg(k) => {
                if k < 1 {
                    return Err(Error::BadParams(format!("heisenberg k = {k}, need k >= 1")));
                }
                let m = 2 * k;
                let mut b1 = DMatrix::zeros(m, m);
                for j in 0..k {
                    b1[(j, k + j)] = 1.0;
                    b1[(k + j, j)] = -1.0;
                }
                Self::validate(m, 1, vec![b1], 1.0)
            }
            Builtin::Corank1(b1) => {
                let m = b1.nrows();
                Self::validate(m, 1, vec![b1], 1.0)
            }
            Builtin::Free2(m) => {
                if m < 2 {
                    return Err(Error::BadParams(format!("free2 m = {m}, need m >= 2")));
                }
                let n = m * (m - 1) / 2;
                let mut mats = Vec::with_capacity(n);
                // Vertical coordinates ordered (2,1), (3,1), (3,2), (4,1), ...
                for l in 1..m {
                    for s in 0..l {
                        let mut mat = DMatrix::zeros(m, m);
                        mat[(l, s)] = 1.0;
                        mat[(s, l)] = -1.0;
                        mats.push(mat);
                    }
                }
                Self::validate(m, n, mats, 1.0)
            }
            Builtin::ComplexifiedHeisenberg => {
                let b1 = DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        0.0, -1.0, 0.0, 0.0, //
                        1.0, 0.0, 0.0, 0.0, //
                        0.0, 0.0, 0.0, 1.0, //
                        0.0, 0.0, -1.0, 0.0,
                    ],
                );
                let b2 = DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        0.0, 0.0, 0.0, -1.0, //
                        0.0, 0.0, 1.0, 0.0, //
                        0.0, -1.0, 0.0, 0.0, //
                        1.0, 0.0, 0.0, 0.0,
                    ],
                );
                Self::validate(4, 2, vec![b1, b2], 1.0)
            }
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn setting_ok(&self) -> bool {
        self.setting_ok
    }

    /// The vertical matrix `B^(s)`, 1-based.
    pub fn b(&self, s: usize) -> &DMatrix<f64> {
        &self.b[s - 1]
    }

    /// Entry `b^(s)_{jl}`, all indices 1-based.
    pub fn b_entry(&self, s: usize, j: usize, l: usize) -> f64 {
        self.b[s - 1][(j - 1, l - 1)]
    }

    /// Returns a copy with the given norm parameter.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::validate(self.m, self.n, self.b.clone(), eps)
    }

    pub fn identity(&self) -> Point {
        Point::from_coords(vec![0.0; self.m + self.n], self.m)
    }

    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if p.m != self.m || p.coords.len() != self.m + self.n {
            return Err(Error::DimensionMismatch {
                expected: self.m + self.n,
                got: p.coords.len(),
            });
        }
        Ok(())
    }

    /// Group product `p · q`.
    pub fn multiply(&self, p: &Point, q: &Point) -> Result<Point> {
        self.check_point(p)?;
        self.check_point(q)?;
        let mut coords = vec![0.0; self.m + self.n];
        for i in 0..self.m {
            coords[i] = p.coords[i] + q.coords[i];
        }
        for s in 0..self.n {
            let mut bil = 0.0;
            let mat = &self.b[s];
            for i in 0..self.m {
                let mut row = 0.0;
                for l in 0..self.m {
                    row += mat[(i, l)] * p.coords[l];
                }
                bil += row * q.coords[i];
            }
            coords[self.m + s] = p.coords[self.m + s] + q.coords[self.m + s] - 0.5 * bil;
        }
        Ok(Point::from_coords(coords, self.m))
    }

    /// Group inverse `(−x, −y)`.
    pub fn inverse(&self, p: &Point) -> Point {
        Point::from_coords(p.coords.iter().map(|v| -v).collect(), p.m)
    }

    /// Anisotropic dilation `δ_λ(x, y) = (λx, λ²y)`.
    pub fn dilate(&self, lambda: f64, p: &Point) -> Result<Point> {
        if !(lambda > 0.0) {
            return Err(Error::NonpositiveLambda(lambda));
        }
        let mut coords = p.coords.clone();
        for i in 0..p.m {
            coords[i] *= lambda;
        }
        for v in coords[p.m..].iter_mut() {
            *v *= lambda * lambda;
        }
        Ok(Point::from_coords(coords, p.m))
    }

    /// Homogeneous norm `max{|x|, eps·|y|^{1/2}}`.
    pub fn hnorm(&self, p: &Point) -> f64 {
        let xn = p.x().iter().map(|v| v * v).sum::<f64>().sqrt();
        let yn = p.y().iter().map(|v| v * v).sum::<f64>().sqrt();
        xn.max(self.eps * yn.sqrt())
    }

    /// Left-invariant distance `d(p, q) = ‖p^{−1} · q‖`.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        Ok(self.hnorm(&self.multiply(&self.inverse(p), q)?))
    }

    /// Coefficients of the left-invariant frame `X_1..X_m, Y_1..Y_n` at `p`,
    /// one row per field, in the coordinate basis `∂_{x_1}..∂_{y_n}`.
    pub fn frame_at(&self, p: &Point) -> DMatrix<f64> {
        let d = self.m + self.n;
        let mut frame = DMatrix::zeros(d, d);
        for j in 0..self.m {
            frame[(j, j)] = 1.0;
            for s in 0..self.n {
                let mut c = 0.0;
                for l in 0..self.m {
                    c += self.b[s][(j, l)] * p.coords[l];
                }
                frame[(j, self.m + s)] = -0.5 * c;
            }
        }
        for s in 0..self.n {
            frame[(self.m + s, self.m + s)] = 1.0;
        }
        frame
    }

    /// Coordinates of `[X_j, X_l]` in the `Y` basis: `(b^(1)_{jl}, …, b^(n)_{jl})`.
    pub fn structure_constants(&self, j: usize, l: usize) -> Result<Vec<f64>> {
        if j < 1 || j > self.m || l < 1 || l > self.m {
            return Err(Error::IndexOutOfRange(format!("(j, l) = ({j}, {l}), m = {}", self.m)));
        }
        Ok((1..=self.n).map(|s| self.b_entry(s, j, l)).collect())
    }

    /// Linear change of coordinates `x = M1 x̃`, `y = M2 ỹ`: the new vertical
    /// matrices are `B̃^(s) = (M1^{−1})^T (Σ_k c_{sk} B^(k)) M1^{−1}` with `c`
    /// the entries of `M2`.
    pub fn change_coordinates(&self, m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> Result<Self> {
        if m1.nrows() != self.m || m1.ncols() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: m1.nrows() });
        }
        if m2.nrows() != self.n || m2.ncols() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: m2.nrows() });
        }
        let m1_inv = m1.clone().try_inverse().ok_or(Error::SingularMatrix)?;
        if m2.clone().try_inverse().is_none() {
            return Err(Error::SingularMatrix);
        }
        let mut new_b = Vec::with_capacity(self.n);
        for s in 0..self.n {
            let mut combo = DMatrix::zeros(self.m, self.m);
            for k in 0..self.n {
                combo += &self.b[k] * m2[(s, k)];
            }
            new_b.push(m1_inv.transpose() * combo * &m1_inv);
        }
        Self::validate(self.m, self.n, new_b, self.eps)
    }

    /// Calibrates the norm parameter: starting from `eps = 1`, tests the
    /// triangle inequality on seeded random pairs in `[−2, 2]^{m+n}` and
    /// halves `eps` on failure, at most 20 times.
    pub fn calibrate_eps(&self, pairs: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.m + self.n;
        let samples: Vec<(Point, Point)> = (0..pairs)
            .map(|_| {
                let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                (Point::from_coords(a, self.m), Point::from_coords(b, self.m))
            })
            .collect();
        let mut eps = 1.0;
        for _ in 0..=20 {
            let trial = self.with_eps(eps)?;
            let ok = samples.iter().all(|(p, q)| {
                let pq = trial.multiply(p, q).expect("dimension checked");
                trial.hnorm(&pq) <= trial.hnorm(p) + trial.hnorm(q) + 1e-12
            });
            if ok {
                return trial.with_eps(eps);
            }
            eps *= 0.5;
        }
        Err(Error::BadParams("eps calibration failed after 20 halvings".into()))
    }

    /// Writes the group spec as TOML (fields `m`, `n`, `eps`, and `b` as row-major
    /// arrays).
    pub fn to_toml(&self) -> Result<String> {
        let file = SpecFile {
            m: self.m,
            n: self.n,
            eps: self.eps,
            b: self
                .b
                .iter()
                .map(|mat| {
                    (0..self.m)
                        .map(|i| (0..self.m).map(|j| mat[(i, j)]).collect())
                        .collect()
                })
                .collect(),
        };
        Ok(toml::to_string(&file)?)
    }

    /// Parses and validates a spec from its TOML form.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text)?;
        let b = file
            .b
            .iter()
            .map(|rows| {
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                DMatrix::from_row_slice(file.m, file.m, &flat)
            })
            .collect();
        Self::validate(file.m, file.n, b, file.eps)
    }
}

fn compute_setting_ok(m: usize, n: usize, b: &[DMatrix<f64>]) -> bool {
    if n == 1 {
        return true;
    }
    for j in 0..m {
        for s in 0..n {
            for k in 0..n {
                if s != k && b[s][(j, 0)] * b[k][(j, 0)] != 0.0 {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h1() -> GroupSpec {
        GroupSpec::builtin(Builtin::Heisenberg(1)).unwrap()
    }

    #[test]
    fn heisenberg_matrix() {
        let g = h1();
        assert_eq!(g.m(), 2);
        assert_eq!(g.n(), 1);
        assert_eq!(g.b_entry(1, 1, 2), 1.0);
        assert_eq!(g.b_entry(1, 2, 1), -1.0);
        assert!(g.setting_ok());
    }

    #[test]
    fn free2_dimensions_and_setting() {
        let g = GroupSpec::builtin(Builtin::Free2(3)).unwrap();
        assert_eq!(g.m(), 3);
        assert_eq!(g.n(), 3);
        assert!(g.setting_ok());
    }

    #[test]
    fn complexified_heisenberg_first_row() {
        let g = GroupSpec::builtin(Builtin::ComplexifiedHeisenberg).unwrap();
        assert_eq!(g.m(), 4);
        assert_eq!(g.n(), 2);
        let row: Vec<f64> = (1..=4).map(|l| g.b_entry(1, 1, l)).collect();
        assert_eq!(row, vec![0.0, -1.0, 0.0, 0.0]);
        assert!(g.setting_ok());
    }

    #[test]
    fn rejects_non_skew() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let err = GroupSpec::validate(2, 1, vec![bad], 1.0).unwrap_err();
        assert!(matches!(err, Error::NotSkewSymmetric { .. }));
    }

    #[test]
    fn rejects_dependent_matrices() {
        let b1 = DMatrix::from_row_slice(4, 4, &[
            0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        let b2 = &b1 * 2.0;
        let err = GroupSpec::validate(4, 2, vec![b1, b2], 1.0).unwrap_err();
        assert!(matches!(err, Error::LinearlyDependent));
    }

    #[test]
    fn detects_setting_violation() {
        // Two independent skew matrices sharing a nonzero (2,1) entry.
        let b1 = DMatrix::from_row_slice(4, 4, &[
            0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        let b2 = DMatrix::from_row_slice(4, 4, &[
            0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
        ]);
        let g = GroupSpec::validate(4, 2, vec![b1, b2], 1.0).unwrap();
        assert!(!g.setting_ok());
    }

    #[test]
    fn multiply_h1_example() {
        let g = h1();
        let p = Point::new(&[1.0, 0.0], &[0.0]);
        let q = Point::new(&[0.0, 1.0], &[0.0]);
        let pq = g.multiply(&p, &q).unwrap();
        assert_eq!(pq.coords(), &[1.0, 1.0, 0.5]);
    }

    #[test]
    fn multiply_identity_and_inverse() {
        let g = h1();
        let p = Point::new(&[1.3, -0.7], &[2.1]);
        let e = g.identity();
        assert_eq!(g.multiply(&p, &e).unwrap(), p);
        let pinv = g.inverse(&p);
        let prod = g.multiply(&p, &pinv).unwrap();
        for v in prod.coords() {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn inverse_is_negation() {
        let g = h1();
        let p = Point::new(&[1.0, 2.0], &[3.0]);
        assert_eq!(g.inverse(&p).coords(), &[-1.0, -2.0, -3.0]);
        assert_eq!(g.inverse(&g.inverse(&p)), p);
    }

    #[test]
    fn dilation_examples() {
        let g = h1();
        let p = Point::new(&[1.0, 1.0], &[0.5]);
        assert_eq!(g.dilate(2.0, &p).unwrap().coords(), &[2.0, 2.0, 2.0]);
        assert_eq!(g.dilate(1.0, &p).unwrap(), p);
        let q = Point::new(&[1.0, 0.0], &[1.0]);
        let lhs = g.dilate(3.0, &g.dilate(0.5, &q).unwrap()).unwrap();
        let rhs = g.dilate(1.5, &q).unwrap();
        for (a, b) in lhs.coords().iter().zip(rhs.coords()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hnorm_examples() {
        let g = h1();
        assert_eq!(g.hnorm(&Point::new(&[3.0, 0.0], &[4.0])), 3.0);
        assert_eq!(g.hnorm(&g.identity()), 0.0);
        let p = Point::new(&[1.0, 0.0], &[1.0]);
        let d2 = g.dilate(2.0, &p).unwrap();
        assert!((g.hnorm(&d2) - 2.0 * g.hnorm(&p)).abs() < 1e-14);
    }

    #[test]
    fn frame_at_h1() {
        let g = h1();
        let p = Point::new(&[0.0, 1.0], &[0.0]);
        let f = g.frame_at(&p);
        // X_1 = ∂_{x_1} − ½·b_{12}·x_2·∂_y = ∂_{x_1} − 0.5·∂_y.
        assert_eq!(f[(0, 2)], -0.5);
        assert_eq!(f[(0, 0)], 1.0);
        // Y is the unit vertical vector everywhere.
        assert_eq!(f[(2, 2)], 1.0);
        let at_origin = g.frame_at(&g.identity());
        assert_eq!(at_origin, DMatrix::identity(3, 3));
    }

    #[test]
    fn structure_constants_examples() {
        let g = h1();
        assert_eq!(g.structure_constants(1, 2).unwrap(), vec![1.0]);
        assert_eq!(g.structure_constants(1, 1).unwrap(), vec![0.0]);
        let free = GroupSpec::builtin(Builtin::Free2(3)).unwrap();
        // [X_2, X_1] = Y_{21}, the first vertical coordinate.
        assert_eq!(free.structure_constants(2, 1).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(g.structure_constants(0, 1).is_err());
    }

    #[test]
    fn change_coordinates_scaling() {
        let g = h1();
        let m1 = DMatrix::identity(2, 2) * 2.0;
        let m2 = DMatrix::identity(1, 1);
        let scaled = g.change_coordinates(&m1, &m2).unwrap();
        assert!((scaled.b_entry(1, 1, 2) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn change_coordinates_identity_and_swap() {
        let g = h1();
        let id2 = DMatrix::identity(2, 2);
        let id1 = DMatrix::identity(1, 1);
        let same = g.change_coordinates(&id2, &id1).unwrap();
        assert_eq!(same.b(1), g.b(1));
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let flipped = g.change_coordinates(&swap, &id1).unwrap();
        assert_eq!(flipped.b_entry(1, 1, 2), -1.0);
    }

    #[test]
    fn change_coordinates_round_trip() {
        let g = GroupSpec::builtin(Builtin::ComplexifiedHeisenberg).unwrap();
        let m1 = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        ]);
        let m2 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let fwd = g.change_coordinates(&m1, &m2).unwrap();
        let back = fwd
            .change_coordinates(&m1.clone().try_inverse().unwrap(), &m2.clone().try_inverse().unwrap())
            .unwrap();
        for s in 1..=2 {
            for j in 1..=4 {
                for l in 1..=4 {
                    assert!((back.b_entry(s, j, l) - g.b_entry(s, j, l)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn toml_round_trip() {
        let g = GroupSpec::builtin(Builtin::Free2(3)).unwrap();
        let text = g.to_toml().unwrap();
        let back = GroupSpec::from_toml(&text).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn eps_calibration_runs() {
        let g = h1();
        let cal = g.calibrate_eps(1000, 7).unwrap();
        assert!(cal.eps() > 0.0 && cal.eps() <= 1.0);
    }
}
