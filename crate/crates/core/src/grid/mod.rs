//! Uniform space grids, space-time fields, balls and intrinsic cylinders.
//!
//! Cells are indexed in row-major order with the first axis slowest. The
//! centre of cell `i` is `origin + h * i`; grids built from a box put the
//! first centre half a cell inside the corner, so a symmetric box never has a
//! centre at the coordinate origin.

mod io;

pub use io::{decode, encode, read_field, write_field};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for half-open time windows and divisibility checks.
const TIME_EPS: f64 = 1e-12;

/// Axis-aligned spatial box `[lo_1, hi_1] x ... x [lo_N, hi_N]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SpatialBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 3 {
            return Err(Error::InvalidInput(format!(
                "box needs matching corners of dimension 1..=3, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for k in 0..lo.len() {
            if !(lo[k].is_finite() && hi[k].is_finite() && hi[k] > lo[k]) {
                return Err(Error::InvalidInput(format!(
                    "box axis {k}: [{}, {}] is empty or non-finite",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[a, b]^dim`.
    pub fn cube(dim: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a; dim], vec![b; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Uniform grid: `dim` axes, equal spacing, cell-centre origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    shape: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
}

impl Grid {
    pub fn new(shape: Vec<usize>, spacing: f64, origin: Vec<f64>) -> Result<Self> {
        let dim = shape.len();
        if !(1..=3).contains(&dim) || origin.len() != dim {
            return Err(Error::InvalidInput(format!(
                "grid dimension must be 1..=3 with matching origin, got shape {shape:?}, origin {origin:?}"
            )));
        }
        if let Some(k) = shape.iter().position(|&n| n < 2) {
            return Err(Error::InvalidInput(format!("grid axis {k} has fewer than 2 cells")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidInput(format!("spacing must be positive, got {spacing}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidInput("origin must be finite".into()));
        }
        Ok(Self { shape, spacing, origin })
    }

    /// Grid covering `bx` with step `h`; the box extents must be multiples of `h`.
    pub fn from_box(bx: &SpatialBox, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("spacing must be positive, got {h}")));
        }
        let mut shape = Vec::with_capacity(bx.dim());
        let mut origin = Vec::with_capacity(bx.dim());
        for k in 0..bx.dim() {
            let ratio = (bx.hi[k] - bx.lo[k]) / h;
            let n = ratio.round();
            if (ratio - n).abs() > TIME_EPS * ratio.max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "box axis {k} of length {} is not a multiple of h = {h}",
                    bx.hi[k] - bx.lo[k]
                )));
            }
            shape.push(n as usize);
            origin.push(bx.lo[k] + 0.5 * h);
        }
        Self::new(shape, h, origin)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn cells(&self) -> usize {
        self.shape.iter().product()
    }

    /// `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    /// Linear stride of each axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.shape[k + 1];
        }
        s
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.shape[k];
            idx /= self.shape[k];
        }
        out
    }

    pub fn linear_index(&self, mi: &[usize]) -> usize {
        mi.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Writes the centre of cell `idx` into `x` (length `dim`).
    pub fn center_into(&self, idx: usize, x: &mut [f64]) {
        let mi = self.multi_index(idx);
        for k in 0..self.dim() {
            x[k] = self.origin[k] + self.spacing * mi[k] as f64;
        }
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.center_into(idx, &mut x);
        x
    }

    /// Spatial box spanned by the cells (corners, not centres).
    pub fn bounding_box(&self) -> SpatialBox {
        let h = self.spacing;
        SpatialBox {
            lo: self.origin.iter().map(|o| o - 0.5 * h).collect(),
            hi: self
                .origin
                .iter()
                .zip(&self.shape)
                .map(|(o, &n)| o + (n as f64 - 0.5) * h)
                .collect(),
        }
    }

    /// Index of the cell whose centre is nearest to `x`, if `x` lies in the grid box.
    pub fn nearest_cell(&self, x: &[f64]) -> Option<usize> {
        let mut mi = [0usize; 3];
        for k in 0..self.dim() {
            let r = ((x[k] - self.origin[k]) / self.spacing).round();
            if r < 0.0 || r >= self.shape[k] as f64 {
                return None;
            }
            mi[k] = r as usize;
        }
        Some(self.linear_index(&mi[..self.dim()]))
    }

    /// Cells whose centre lies in the closed ball, in row-major order.
    ///
    /// Fails if some lattice point of the ball is missing from the grid or lies
    /// within `margin` cells of the grid boundary.
    pub fn ball_cells(&self, ball: &Ball, margin: usize) -> Result<Vec<usize>> {
        let dim = self.dim();
        if ball.center.len() != dim {
            return Err(Error::Geometry(format!(
                "ball centre has dimension {}, grid has {dim}",
                ball.center.len()
            )));
        }
        let h = self.spacing;
        let r2 = ball.radius * ball.radius * (1.0 + 1e-12);
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for k in 0..dim {
            let c = (ball.center[k] - self.origin[k]) / h;
            let r = ball.radius / h;
            lo[k] = (c - r - 1e-9).ceil() as i64;
            hi[k] = (c + r + 1e-9).floor() as i64;
        }
        let mut out = Vec::new();
        let mut mi = [0i64; 3];
        let total: i64 = (0..dim).map(|k| (hi[k] - lo[k] + 1).max(0)).product();
        for flat in 0..total {
            let mut rest = flat;
            for k in (0..dim).rev() {
                let len = hi[k] - lo[k] + 1;
                mi[k] = lo[k] + rest % len;
                rest /= len;
            }
            let mut d2 = 0.0;
            for k in 0..dim {
                let dx = self.origin[k] + h * mi[k] as f64 - ball.center[k];
                d2 += dx * dx;
            }
            if d2 > r2 {
                continue;
            }
            for k in 0..dim {
                let m = margin as i64;
                if mi[k] < m || mi[k] > self.shape[k] as i64 - 1 - m {
                    return Err(Error::Geometry(format!(
                        "ball {:?} radius {} needs {margin}-cell margin inside the grid box {:?}",
                        ball.center,
                        ball.radius,
                        self.bounding_box()
                    )));
                }
            }
            let idx = (0..dim).fold(0usize, |acc, k| acc * self.shape[k] + mi[k] as usize);
            out.push(idx);
        }
        Ok(out)
    }

    /// Cells of the ball that exist in the grid, without a containment requirement.
    pub fn ball_cells_clipped(&self, ball: &Ball) -> Vec<usize> {
        let dim = self.dim();
        let h = self.spacing;
        let r2 = ball.radius * ball.radius * (1.0 + 1e-12);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for k in 0..dim {
            let c = (ball.center[k] - self.origin[k]) / h;
            let r = ball.radius / h;
            let l = (c - r - 1e-9).ceil().max(0.0);
            let u = (c + r + 1e-9).floor().min(self.shape[k] as f64 - 1.0);
            if u < l {
                return Vec::new();
            }
            lo[k] = l as usize;
            hi[k] = u as usize;
        }
        let mut out = Vec::new();
        let total: usize = (0..dim).map(|k| hi[k] - lo[k] + 1).product();
        let mut mi = [0usize; 3];
        for flat in 0..total {
            let mut rest = flat;
            for k in (0..dim).rev() {
                let len = hi[k] - lo[k] + 1;
                mi[k] = lo[k] + rest % len;
                rest /= len;
            }
            let mut d2 = 0.0;
            for k in 0..dim {
                let dx = self.origin[k] + h * mi[k] as f64 - ball.center[k];
                d2 += dx * dx;
            }
            if d2 <= r2 {
                out.push(self.linear_index(&mi[..dim]));
            }
        }
        out
    }
}

/// Closed ball `B_rho(center)`; membership is decided on cell centres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Geometry(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Lebesgue measure of the continuum ball.
    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) * self.radius.powi(self.dim() as i32)
    }
}

/// Volume of the unit ball in `R^N`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 / 3.0 * std::f64::consts::PI,
        _ => panic!("dimension {n} unsupported"),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `(t0 - theta*rho, t0]`.
    #[default]
    Backward,
    /// `(t0, t0 + theta*rho]`.
    Forward,
}

/// Space-time cylinder `B_rho(x0) x (t0 - theta*rho, t0]` or its forward twin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Vec<f64>,
    pub t0: f64,
    pub radius: f64,
    pub theta: f64,
    pub orientation: Orientation,
}

impl Cylinder {
    pub fn backward(center: Vec<f64>, t0: f64, radius: f64, theta: f64) -> Result<Self> {
        Self::build(center, t0, radius, theta, Orientation::Backward)
    }

    pub fn forward(center: Vec<f64>, s: f64, radius: f64, theta: f64) -> Result<Self> {
        Self::build(center, s, radius, theta, Orientation::Forward)
    }

    fn build(center: Vec<f64>, t0: f64, radius: f64, theta: f64, orientation: Orientation) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0 && theta.is_finite() && theta > 0.0 && t0.is_finite()) {
            return Err(Error::Geometry(format!(
                "cylinder needs positive radius and theta, got rho = {radius}, theta = {theta}"
            )));
        }
        Ok(Self {
            center,
            t0,
            radius,
            theta,
            orientation,
        })
    }

    pub fn ball(&self) -> Ball {
        Ball {
            center: self.center.clone(),
            radius: self.radius,
        }
    }

    /// Time extent `theta * rho`.
    pub fn height(&self) -> f64 {
        self.theta * self.radius
    }

    /// Endpoints `(a, b)` of the half-open window `(a, b]`.
    pub fn interval(&self) -> (f64, f64) {
        match self.orientation {
            Orientation::Backward => (self.t0 - self.height(), self.t0),
            Orientation::Forward => (self.t0, self.t0 + self.height()),
        }
    }
}

/// `mu_plus >= sup u`, `mu_minus <= inf u`, `omega >= mu_plus - mu_minus`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationData {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub omega: f64,
}

impl OscillationData {
    pub fn new(mu_plus: f64, mu_minus: f64, omega: f64) -> Result<Self> {
        if !(mu_plus >= mu_minus && omega >= mu_plus - mu_minus) {
            return Err(Error::InvalidInput(format!(
                "oscillation data inconsistent: mu+ = {mu_plus}, mu- = {mu_minus}, omega = {omega}"
            )));
        }
        Ok(Self {
            mu_plus,
            mu_minus,
            omega,
        })
    }
}

/// Scalar samples on a grid at explicit, strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    times: Vec<f64>,
    data: Vec<f64>,
}

impl SpaceTimeField {
    /// Validates sizes, finiteness and time ordering.
    pub fn new(grid: Grid, times: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        check_times(&times)?;
        let n = grid.cells();
        if data.len() != n * times.len() {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match {} cells x {} times",
                data.len(),
                n,
                times.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                x: grid.center(pos % n),
                t: times[pos / n],
                value: data[pos],
            });
        }
        Ok(Self { grid, times, data })
    }

    /// Stacks equally sized slices.
    pub fn from_slices(grid: Grid, times: Vec<f64>, slices: Vec<Vec<f64>>) -> Result<Self> {
        let data = slices.concat();
        Self::new(grid, times, data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        let n = self.grid.cells();
        &self.data[m * n..(m + 1) * n]
    }

    pub fn slice_count(&self) -> usize {
        self.times.len()
    }

    /// Applies `f` sample-wise, keeping the geometry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.times.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Sample-wise combination with a field on the same geometry.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_geometry(other)?;
        Self::new(
            self.grid.clone(),
            self.times.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn check_same_geometry(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.times != other.times {
            return Err(Error::Mismatch("fields differ in grid or time stamps".into()));
        }
        Ok(())
    }

    /// Indices of time stamps in the half-open window `(a, b]`.
    pub fn times_in(&self, a: f64, b: f64) -> Vec<usize> {
        times_in(&self.times, a, b)
    }

    /// Index of the stamp equal to `t` up to rounding.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let tol = TIME_EPS * t.abs().max(1.0) * 16.0;
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Exact backward-difference time derivative; the first slice repeats the second.
    pub fn backward_time_derivative(&self) -> Result<Self> {
        let n = self.grid.cells();
        let nt = self.times.len();
        if nt < 2 {
            return Err(Error::InvalidInput("time derivative needs at least two slices".into()));
        }
        let mut out = vec![0.0; n * nt];
        for m in 1..nt {
            let dt = self.times[m] - self.times[m - 1];
            for i in 0..n {
                out[m * n + i] = (self.data[m * n + i] - self.data[(m - 1) * n + i]) / dt;
            }
        }
        let (first, rest) = out.split_at_mut(n);
        first.copy_from_slice(&rest[..n]);
        Self::new(self.grid.clone(), self.times.clone(), out)
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("at least one time stamp required".into()));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite time stamp {t}")));
    }
    for m in 1..times.len() {
        if times[m] <= times[m - 1] {
            return Err(Error::NonIncreasingTimes { index: m });
        }
    }
    Ok(())
}

/// Indices `m` with `a < times[m] <= b`, with a rounding allowance at both ends.
pub(crate) fn times_in(times: &[f64], a: f64, b: f64) -> Vec<usize> {
    let tol = TIME_EPS * a.abs().max(b.abs()).max(1.0) * 16.0;
    (0..times.len())
        .filter(|&m| times[m] > a + tol && times[m] <= b + tol)
        .collect()
}

/// Point samples `f(centre, t)` on the grid of `bx` with step `h`.
pub fn sample_analytic(
    f: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    bx: &SpatialBox,
    h: f64,
    times: &[f64],
) -> Result<SpaceTimeField> {
    let grid = Grid::from_box(bx, h)?;
    sample_on_grid(f, &grid, times)
}

/// Point samples on an existing grid.
pub fn sample_on_grid(f: &(dyn Fn(&[f64], f64) -> f64 + Sync), grid: &Grid, times: &[f64]) -> Result<SpaceTimeField> {
    check_times(times)?;
    let n = grid.cells();
    let mut data = Vec::with_capacity(n * times.len());
    let mut x = vec![0.0; grid.dim()];
    for &t in times {
        for i in 0..n {
            grid.center_into(i, &mut x);
            let v = f(&x, t);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    x: x.clone(),
                    t,
                    value: v,
                });
            }
            data.push(v);
        }
    }
    SpaceTimeField::new(grid.clone(), times.to_vec(), data)
}

/// Cell averages approximated by the midpoint rule on `sub^N` subcells.
///
/// This is the natural grid representative of a discontinuous function such
/// as an indicator: a cell cut by the interface receives its volume fraction.
pub fn sample_cell_average(
    f: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    bx: &SpatialBox,
    h: f64,
    times: &[f64],
    sub: usize,
) -> Result<SpaceTimeField> {
    if sub == 0 {
        return Err(Error::InvalidInput("subsampling factor must be positive".into()));
    }
    let grid = Grid::from_box(bx, h)?;
    check_times(times)?;
    let dim = grid.dim();
    let n = grid.cells();
    let q = sub.pow(dim as u32);
    let w = 1.0 / q as f64;
    let mut data = Vec::with_capacity(n * times.len());
    let mut c = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    for &t in times {
        for i in 0..n {
            grid.center_into(i, &mut c);
            let mut acc = 0.0;
            for s in 0..q {
                let mut rest = s;
                for k in (0..dim).rev() {
                    let j = rest % sub;
                    rest /= sub;
                    x[k] = c[k] + h * ((j as f64 + 0.5) / sub as f64 - 0.5);
                }
                let v = f(&x, t);
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        x: x.clone(),
                        t,
                        value: v,
                    });
                }
                acc += v;
            }
            data.push(acc * w);
        }
    }
    SpaceTimeField::new(grid, times.to_vec(), data)
}

/// Exact max/min over the samples of the cylinder.
pub fn ess_osc(field: &SpaceTimeField, cyl: &Cylinder) -> Result<OscillationData> {
    let cells = field.grid().ball_cells_clipped(&cyl.ball());
    let (a, b) = cyl.interval();
    let ms = field.times_in(a, b);
    if cells.is_empty() || ms.is_empty() {
        return Err(Error::Geometry(format!(
            "cylinder at {:?}, t0 = {}, rho = {}, theta = {} contains no samples",
            cyl.center, cyl.t0, cyl.radius, cyl.theta
        )));
    }
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &m in &ms {
        let s = field.slice(m);
        for &i in &cells {
            hi = hi.max(s[i]);
            lo = lo.min(s[i]);
        }
    }
    Ok(OscillationData {
        mu_plus: hi,
        mu_minus: lo,
        omega: hi - lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sampling_on_coarse_grid() {
        let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
        let f = sample_analytic(&|x: &[f64], _| x[0], &bx, 0.5, &[0.0]).unwrap();
        assert_eq!(f.grid().shape(), &[4, 4]);
        let col: Vec<f64> = (0..4).map(|i| f.slice(0)[i * 4]).collect();
        assert_eq!(col, vec![-0.75, -0.25, 0.25, 0.75]);
        assert!((0..4).all(|j| f.slice(0)[4 + j] == -0.25));
    }

    #[test]
    fn zero_function_gives_zero_field() {
        let bx = SpatialBox::cube(3, 0.0, 1.0).unwrap();
        let f = sample_analytic(&|_: &[f64], _| 0.0, &bx, 0.25, &[0.0, 1.0]).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indivisible_box_is_rejected() {
        let bx = SpatialBox::cube(1, 0.0, 1.0).unwrap();
        assert!(sample_analytic(&|_: &[f64], _| 0.0, &bx, 0.3, &[0.0]).is_err());
    }

    #[test]
    fn singular_sample_reports_coordinate() {
        let bx = SpatialBox::cube(1, 0.0, 1.0).unwrap();
        let err = sample_analytic(&|x: &[f64], _| 1.0 / (x[0] - 0.25), &bx, 0.5, &[0.0]).unwrap_err();
        match err {
            Error::NonFinite { x, .. } => assert_eq!(x, vec![0.25]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn no_centre_at_origin() {
        let bx = SpatialBox::cube(3, -1.0, 1.0).unwrap();
        let g = Grid::from_box(&bx, 1.0 / 16.0).unwrap();
        let min = (0..g.cells())
            .map(|i| g.center(i).iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!((min - 3f64.sqrt() / 32.0).abs() < 1e-15);
    }

    #[test]
    fn oscillation_of_constant_is_zero() {
        let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
        let f = sample_analytic(&|_: &[f64], _| 3.5, &bx, 0.125, &[0.0, 0.5, 1.0]).unwrap();
        let cyl = Cylinder::backward(vec![0.0, 0.0], 1.0, 0.5, 1.0).unwrap();
        let o = ess_osc(&f, &cyl).unwrap();
        assert_eq!((o.mu_plus, o.mu_minus, o.omega), (3.5, 3.5, 0.0));
    }

    #[test]
    fn oscillation_of_linear_function_on_unit_ball() {
        let h = 1.0 / 32.0;
        let bx = SpatialBox::cube(2, -1.5, 1.5).unwrap();
        let f = sample_analytic(&|x: &[f64], _| x[0], &bx, h, &[0.0, 1.0]).unwrap();
        let cyl = Cylinder::backward(vec![0.0, 0.0], 1.0, 1.0, 1.0).unwrap();
        let o = ess_osc(&f, &cyl).unwrap();
        assert!((o.mu_plus - (1.0 - h / 2.0)).abs() < 1e-12);
        assert!((o.mu_minus + (1.0 - h / 2.0)).abs() < 1e-12);
        assert!((o.omega - (2.0 - h)).abs() < 1e-12);
    }

    #[test]
    fn empty_cylinder_is_an_error() {
        let bx = SpatialBox::cube(1, -1.0, 1.0).unwrap();
        let f = sample_analytic(&|_: &[f64], _| 0.0, &bx, 0.5, &[0.0]).unwrap();
        let cyl = Cylinder::backward(vec![0.0], 5.0, 0.5, 1.0).unwrap();
        assert!(matches!(ess_osc(&f, &cyl), Err(Error::Geometry(_))));
    }

    #[test]
    fn half_open_window_excludes_left_end() {
        let t = [0.0, 0.5, 1.0];
        assert_eq!(times_in(&t, 0.0, 1.0), vec![1, 2]);
        assert_eq!(times_in(&t, -0.1, 0.5), vec![0, 1]);
    }

    #[test]
    fn ball_margin_is_enforced() {
        let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
        let g = Grid::from_box(&bx, 0.125).unwrap();
        let near_edge = Ball::new(vec![0.0, 0.0], 0.95).unwrap();
        assert!(g.ball_cells(&near_edge, 0).is_ok());
        assert!(g.ball_cells(&near_edge, 1).is_err());
        let inside = Ball::new(vec![0.0, 0.0], 0.5).unwrap();
        let cells = g.ball_cells(&inside, 1).unwrap();
        assert_eq!(cells, g.ball_cells_clipped(&inside));
    }

    #[test]
    fn backward_derivative_of_linear_in_time() {
        let bx = SpatialBox::cube(1, 0.0, 1.0).unwrap();
        let f = sample_analytic(&|x: &[f64], t| x[0] + 3.0 * t, &bx, 0.25, &[0.0, 0.5, 0.75]).unwrap();
        let d = f.backward_time_derivative().unwrap();
        assert!(d.data().iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }
}
