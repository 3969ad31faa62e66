//! Certifiers for the minimizer inequality, the DeGiorgi energy inequality
//! and the 1-Laplacian entropy inequality on truncations.
//!
//! Signs follow the variational structure of the flow. A solution satisfies
//! `TV(u) <= TV(u + phi) + int u_t phi` at a.e. time, and for a truncation
//! `p` with primitive `P` and a cutoff `zeta`
//! `int P zeta(t2) + int int zeta d|Dp| <= int P zeta(t1) + int int P zeta_t - int int p z.Dzeta`,
//! which holds with equality for smooth solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::DualField;
use crate::grid::{ess_osc, Ball, Cylinder, Grid, SpaceTimeField};
use crate::quadrature::Window;
use crate::tvmeasure::tv_cells;
use crate::upwind::Stencil;

/// Independent random stream for draw `index` of a suite seeded by `seed`.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Non-decreasing piecewise-linear profile with values in `[0, 1]`,
/// constant before the first and after the last knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeProfile {
    knots: Vec<(f64, f64)>,
}

impl TimeProfile {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidInput("time profile needs at least one knot".into()));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                return Err(Error::InvalidInput(format!(
                    "time profile must have increasing knots and non-decreasing values: {knots:?}"
                )));
            }
        }
        if knots.iter().any(|&(t, v)| !t.is_finite() || !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(format!(
                "time profile values must lie in [0, 1]: {knots:?}"
            )));
        }
        Ok(Self { knots })
    }

    pub fn constant(v: f64) -> Result<Self> {
        Self::new(vec![(0.0, v)])
    }

    /// 0 up to `t0`, linear to 1 at `t1`, then 1.
    pub fn ramp(t0: f64, t1: f64) -> Result<Self> {
        Self::new(vec![(t0, 0.0), (t1, 1.0)])
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            if t <= w[1].0 {
                let s = (t - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + s * (w[1].1 - w[0].1);
            }
        }
        k[k.len() - 1].1
    }

    /// Slope on the open segment containing `t` (0 outside the knots).
    pub fn slope(&self, t: f64) -> f64 {
        for w in self.knots.windows(2) {
            if t > w[0].0 && t < w[1].0 {
                return (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            }
        }
        0.0
    }

    pub fn lipschitz(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }

    pub fn breaks(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k.0).collect()
    }
}

/// Product cutoff `zeta(x, t) = zeta_1(x) zeta_2(t)` sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Cutoff {
    grid: Grid,
    ball: Ball,
    spatial: Vec<f64>,
    lip_space: f64,
    temporal: TimeProfile,
}

impl Cutoff {
    /// Samples `zeta_1` at cell centres and checks the recorded Lipschitz
    /// bound on every forward difference, the range `[0, 1]`, and the support.
    pub fn new(
        grid: &Grid,
        ball: Ball,
        zeta1: &dyn Fn(&[f64]) -> f64,
        lip_space: f64,
        temporal: TimeProfile,
    ) -> Result<Self> {
        let n = grid.cells();
        let mut spatial = vec![0.0; n];
        let mut x = vec![0.0; grid.dim()];
        for (i, s) in spatial.iter_mut().enumerate() {
            grid.center_into(i, &mut x);
            *s = zeta1(&x);
        }
        let inside = grid.ball_cells_clipped(&ball);
        let mut member = vec![false; n];
        inside.iter().for_each(|&i| member[i] = true);
        for i in 0..n {
            let v = spatial[i];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "cutoff value {v} outside [0, 1] at {:?}",
                    grid.center(i)
                )));
            }
            if v != 0.0 && !member[i] {
                return Err(Error::Support(format!(
                    "cutoff is non-zero outside its ball at {:?}",
                    grid.center(i)
                )));
            }
        }
        if lip_space.is_finite() {
            let st = Stencil::new(grid);
            let slack = lip_space * (1.0 + 1e-9) + 1e-12;
            for i in 0..n {
                for k in 0..grid.dim() {
                    let d = st.forward_diff(&spatial, i, k).abs();
                    if d > slack {
                        return Err(Error::InvalidInput(format!(
                            "cutoff difference {d} exceeds the recorded bound {lip_space}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            ball,
            spatial,
            lip_space,
            temporal,
        })
    }

    /// `zeta_1 = 1` on `B_{inner*rho}`, linear down to 0 on the sphere of radius `rho`.
    pub fn radial(grid: &Grid, ball: Ball, inner: f64, temporal: TimeProfile) -> Result<Self> {
        if !(0.0..1.0).contains(&inner) {
            return Err(Error::InvalidInput(format!(
                "inner fraction must be in [0, 1), got {inner}"
            )));
        }
        let (c, r) = (ball.center.clone(), ball.radius);
        let r0 = inner * r;
        let f = move |x: &[f64]| {
            let d = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            ((r - d) / (r - r0)).clamp(0.0, 1.0)
        };
        let lip = 1.0 / (r - r0);
        Self::new(grid, ball, &f, lip, temporal)
    }

    /// `zeta_1` = indicator of the ball's cells; the spatial bound is infinite.
    pub fn indicator(grid: &Grid, ball: Ball, temporal: TimeProfile) -> Result<Self> {
        let (c, r2) = (ball.center.clone(), ball.radius * ball.radius * (1.0 + 1e-12));
        let f = move |x: &[f64]| {
            let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= r2 {
                1.0
            } else {
                0.0
            }
        };
        Self::new(grid, ball, &f, f64::INFINITY, temporal)
    }

    pub fn ball(&self) -> &Ball {
        &self.ball
    }

    pub fn spatial(&self) -> &[f64] {
        &self.spatial
    }

    pub fn temporal(&self) -> &TimeProfile {
        &self.temporal
    }

    pub fn lip_space(&self) -> f64 {
        self.lip_space
    }

    pub fn lip_time(&self) -> f64 {
        self.temporal.lipschitz()
    }

    pub fn temporal_value(&self, t: f64) -> f64 {
        self.temporal.value(t)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if &self.grid != grid {
            return Err(Error::Mismatch("cutoff was built on a different grid".into()));
        }
        Ok(())
    }

    /// Euclidean norm of the forward-difference gradient of `zeta_1` at each cell.
    fn gradient_norms(&self) -> Vec<f64> {
        let st = Stencil::new(&self.grid);
        (0..self.grid.cells())
            .map(|i| {
                (0..self.grid.dim())
                    .map(|k| st.forward_diff(&self.spatial, i, k).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

/// Truncation `(u - k)_+` or `(u - k)_- = (k - u)_+`, with an offset `l` used
/// by the 1-Laplacian certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub level: f64,
    pub sign: Sign,
    pub offset: f64,
}

impl TruncationSpec {
    pub fn new(level: f64, sign: Sign) -> Self {
        Self {
            level,
            sign,
            offset: 0.0,
        }
    }

    /// Non-negative truncation `(u - k)_±`.
    #[inline]
    pub fn part(&self, u: f64) -> f64 {
        match self.sign {
            Sign::Plus => (u - self.level).max(0.0),
            Sign::Minus => (self.level - u).max(0.0),
        }
    }

    /// `p_±(u - l)`: `(u - l - k)_+` or `-(k - u + l)_+`.
    #[inline]
    pub fn p(&self, u: f64) -> f64 {
        let s = u - self.offset;
        match self.sign {
            Sign::Plus => (s - self.level).max(0.0),
            Sign::Minus => -(self.level - s).max(0.0),
        }
    }

    /// Primitive `P(s) = int_0^s p` evaluated at `s = u - l`.
    #[inline]
    pub fn primitive(&self, u: f64) -> f64 {
        let s = u - self.offset;
        let k = self.level;
        match self.sign {
            Sign::Plus => 0.5 * ((s - k).max(0.0).powi(2) - (-k).max(0.0).powi(2)),
            Sign::Minus => 0.5 * ((k - s).max(0.0).powi(2) - k.max(0.0).powi(2)),
        }
    }
}

/// The five terms of the energy inequality. The gradient and time terms are
/// stored without the factor `gamma`; `slack` includes it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub lhs_sup_term: f64,
    pub lhs_tv_term: f64,
    pub rhs_gradient_term: f64,
    pub rhs_time_term: f64,
    pub rhs_initial_term: f64,
    pub gamma: f64,
    pub slack: f64,
}

impl EnergyBudget {
    pub fn lhs(&self) -> f64 {
        self.lhs_sup_term + self.lhs_tv_term
    }

    pub fn rhs(&self) -> f64 {
        self.gamma * (self.rhs_gradient_term + self.rhs_time_term) + self.rhs_initial_term
    }

    /// Smallest `gamma` for which this draw satisfies the inequality.
    pub fn minimal_gamma(&self) -> f64 {
        let need = self.lhs() - self.rhs_initial_term;
        let base = self.rhs_gradient_term + self.rhs_time_term;
        if need <= 0.0 {
            0.0
        } else if base > 0.0 {
            need / base
        } else {
            f64::INFINITY
        }
    }
}

fn check_cutoff_in(cutoff: &Cutoff, grid: &Grid, ball: &Ball) -> Result<Vec<usize>> {
    cutoff.check_grid(grid)?;
    let cells = grid.ball_cells(ball, 1)?;
    let mut member = vec![false; grid.cells()];
    cells.iter().for_each(|&i| member[i] = true);
    if let Some(i) = (0..grid.cells()).find(|&i| cutoff.spatial[i] != 0.0 && !member[i]) {
        return Err(Error::Support(format!(
            "cutoff is non-zero at {:?}, outside the cylinder ball",
            grid.center(i)
        )));
    }
    Ok(cells)
}

/// Evaluates each term of the energy inequality on the cylinder.
pub fn dg_energy_report(
    field: &SpaceTimeField,
    cyl: &Cylinder,
    trunc: &TruncationSpec,
    cutoff: &Cutoff,
    gamma: f64,
) -> Result<EnergyBudget> {
    let grid = field.grid();
    let cells = check_cutoff_in(cutoff, grid, &cyl.ball())?;
    let (a, b) = cyl.interval();
    let win = Window::cover(field.times(), a, b)?;
    let st = Stencil::new(grid);
    let vol = grid.cell_volume();
    let dz = cutoff.gradient_norms();
    let z1 = cutoff.spatial();
    let times = field.times();
    let mut l2 = Vec::new();
    let mut tv = Vec::new();
    let mut grad = Vec::new();
    let mut w = vec![0.0; grid.cells()];
    for m in win.indices() {
        let u = field.slice(m);
        let (mut s2, mut sg) = (0.0, 0.0);
        for &i in &cells {
            let v = trunc.part(u[i]);
            w[i] = v * z1[i];
            s2 += v * v * z1[i];
            sg += v * dz[i];
        }
        l2.push(s2 * vol);
        grad.push(sg * vol);
        tv.push(tv_cells(&st, &w, &cells));
    }
    let prof = cutoff.temporal();
    let breaks = prof.breaks();
    let z2 = |t: f64| prof.value(t);
    let mut sup = f64::max(
        win.interpolate(times, &l2, a) * z2(a),
        win.interpolate(times, &l2, b) * z2(b),
    );
    for (j, m) in win.indices().enumerate() {
        if times[m] >= a && times[m] <= b {
            sup = sup.max(l2[j] * z2(times[m]));
        }
    }
    let lhs_tv_term = win.integrate_weighted(times, &tv, z2, &breaks);
    let rhs_gradient_term = win.integrate_weighted(times, &grad, z2, &breaks);
    let rhs_time_term = win.integrate_weighted(times, &l2, |t| prof.slope(t).abs(), &breaks);
    let rhs_initial_term = win.interpolate(times, &l2, a) * z2(a);
    let mut out = EnergyBudget {
        lhs_sup_term: sup,
        lhs_tv_term,
        rhs_gradient_term,
        rhs_time_term,
        rhs_initial_term,
        gamma,
        slack: 0.0,
    };
    out.slack = out.rhs() - out.lhs();
    Ok(out)
}

/// Terms of the 1-Laplacian inequality; `slack = rhs - lhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneLaplacianReport {
    pub lhs_final: f64,
    pub lhs_measure: f64,
    pub rhs_initial: f64,
    pub rhs_time: f64,
    pub rhs_flux: f64,
    pub slack: f64,
    /// `int zeta_2 int zeta_1 d|Du| dt`, the untruncated variation; it bounds
    /// `lhs_measure` and sets the scale for relative slacks.
    pub variation_scale: f64,
}

/// Both sides of the entropy inequality for the truncation `p_±` on `[t1, t2]`.
///
/// Time is discretized the way implicit Euler pairs its unknowns: the
/// interval is snapped inward to the stamps `t_a <= ... <= t_b`, the step
/// `(t_{m-1}, t_m]` carries `u^m` and `z^m`, and `zeta_2` is taken at the left
/// stamp. With this pairing, convexity of `P` turns the discrete chain rule
/// into an inequality of the right sign, so the slack measures only the
/// spatial pairing of `z` with the upwind variation.
pub fn one_laplacian_certificate(
    field: &SpaceTimeField,
    z: &DualField,
    trunc: &TruncationSpec,
    cutoff: &Cutoff,
    interval: (f64, f64),
) -> Result<OneLaplacianReport> {
    z.check_matches(field)?;
    z.check_admissible()?;
    let grid = field.grid();
    let cells = check_cutoff_in(cutoff, grid, cutoff.ball())?;
    let (t1, t2) = interval;
    if !(t2 > t1) {
        return Err(Error::InvalidInput(format!("need t1 < t2, got [{t1}, {t2}]")));
    }
    let times = field.times();
    let eps = 1e-12 * (1.0 + t1.abs().max(t2.abs()));
    let first = times.iter().position(|&t| t >= t1 - eps);
    let last = times.iter().rposition(|&t| t <= t2 + eps);
    let (ma, mb) = match (first, last) {
        (Some(a), Some(b)) if b > a => (a, b),
        _ => {
            return Err(Error::InvalidInput(format!(
                "[{t1}, {t2}] contains fewer than two time stamps of the field"
            )))
        }
    };
    let st = Stencil::new(grid);
    let vol = grid.cell_volume();
    let d = grid.dim();
    let z1 = cutoff.spatial();
    let prof = cutoff.temporal();
    let z2 = |m: usize| prof.value(times[m]);
    let mut pv = vec![0.0; grid.cells()];
    let mut touched: Vec<usize> = Vec::new();
    for &i in &cells {
        let x = grid.multi_index(i);
        touched.push(i);
        for k in 0..d {
            if x[k] + 1 < grid.shape()[k] {
                touched.push(i + st.stride[k]);
            }
            if x[k] > 0 {
                touched.push(i - st.stride[k]);
            }
        }
    }
    let primitive = |m: usize| -> f64 {
        let u = field.slice(m);
        cells.iter().map(|&i| trunc.primitive(u[i]) * z1[i]).sum::<f64>() * vol
    };
    let mut prev = primitive(ma);
    let rhs_initial = prev * z2(ma);
    let (mut rhs_time, mut lhs_measure, mut rhs_flux, mut variation_scale) = (0.0, 0.0, 0.0, 0.0);
    for m in ma + 1..=mb {
        let dt = times[m] - times[m - 1];
        let w = z2(m - 1);
        let cur = primitive(m);
        rhs_time += cur * (z2(m) - w);
        prev = cur;
        if w == 0.0 {
            continue;
        }
        let u = field.slice(m);
        let zm = z.slice(m);
        for &i in &touched {
            pv[i] = trunc.p(u[i]);
        }
        let (mut sm, mut sf, mut sv) = (0.0, 0.0, 0.0);
        for &i in &cells {
            sm += z1[i] * st.density(&pv, i);
            sv += z1[i] * st.density(u, i);
            // sum_i zeta p div z = -sum_i z . D+(zeta p), and
            // D+(zeta p)(i) = zeta(i) D+p(i) + p(i + e_k) D+zeta(i).
            for k in 0..d {
                let up = if grid.multi_index(i)[k] + 1 < grid.shape()[k] {
                    pv[i + st.stride[k]]
                } else {
                    pv[i]
                };
                sf += zm[i * d + k] * st.forward_diff(z1, i, k) * up;
            }
        }
        lhs_measure += w * dt * sm * vol;
        rhs_flux -= w * dt * sf * vol;
        variation_scale += w * dt * sv * vol;
    }
    let lhs_final = prev * z2(mb);
    let slack = rhs_initial + rhs_time + rhs_flux - lhs_final - lhs_measure;
    Ok(OneLaplacianReport {
        lhs_final,
        lhs_measure,
        rhs_initial,
        rhs_time,
        rhs_flux,
        slack,
        variation_scale,
    })
}

/// `int_window [TV(u + phi) - TV(u) + int u_t phi dx] dt` over `ball`.
pub fn minimizer_gap(
    field: &SpaceTimeField,
    u_t: &SpaceTimeField,
    phi: &SpaceTimeField,
    window: (f64, f64),
    ball: &Ball,
) -> Result<f64> {
    field.check_same_geometry(u_t)?;
    field.check_same_geometry(phi)?;
    let grid = field.grid();
    let cells = grid.ball_cells(ball, 1)?;
    let (a, b) = window;
    let h = grid.spacing();
    let inner2 = (ball.radius - 2.0 * h).max(0.0).powi(2);
    let n = grid.cells();
    let mut x = vec![0.0; grid.dim()];
    for m in 0..phi.slice_count() {
        let t = field.times()[m];
        let s = phi.slice(m);
        let in_window = t > a && t < b;
        for i in 0..n {
            if s[i] == 0.0 {
                continue;
            }
            grid.center_into(i, &mut x);
            let d2: f64 = x.iter().zip(&ball.center).map(|(p, q)| (p - q) * (p - q)).sum();
            if !in_window || d2 > inner2 * (1.0 + 1e-12) {
                return Err(Error::Support(format!(
                    "perturbation is non-zero at x = {x:?}, t = {t}, outside the ball interior or the open window"
                )));
            }
        }
    }
    let win = Window::cover(field.times(), a, b)?;
    let st = Stencil::new(grid);
    let vol = grid.cell_volume();
    let mut vals = Vec::new();
    let mut sum = vec![0.0; n];
    for m in win.indices() {
        let (u, p, ut) = (field.slice(m), phi.slice(m), u_t.slice(m));
        if p.iter().all(|&v| v == 0.0) {
            vals.push(0.0);
            continue;
        }
        for i in 0..n {
            sum[i] = u[i] + p[i];
        }
        let mut work = 0.0;
        for &i in &cells {
            work += ut[i] * p[i];
        }
        vals.push(tv_cells(&st, &sum, &cells) - tv_cells(&st, u, &cells) + work * vol);
    }
    Ok(win.integrate(field.times(), &vals))
}

/// Tolerance model `C (h + dt)` for consistency errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTolerance {
    pub c: f64,
}

impl ConsistencyTolerance {
    /// Constant calibrated on the exact shrinking-disc solution; see the
    /// `calibration` integration test, which re-derives it.
    pub const CALIBRATED: Self = Self { c: 0.05 };

    pub fn value(&self, h: f64, dt: f64) -> f64 {
        self.c * (h + dt)
    }
}

/// How perturbations in a corpus are built.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    /// `A psi((x - c)/w) chi(t)` with a smooth compactly supported `psi`.
    Bump,
    /// `lambda psi chi (S u - u)` with `S` a local box average: pulls `u`
    /// towards its local mean and lowers the variation of non-minimizers.
    Smoothing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
    /// Half-width of the averaging box in cells (smoothing only).
    pub radius_cells: usize,
}

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

/// Time profile vanishing at both ends of `(a, b)`.
fn time_bump(t: f64, a: f64, b: f64) -> f64 {
    if t <= a || t >= b {
        0.0
    } else {
        let s = (t - a) / (b - a);
        (std::f64::consts::PI * s).sin().powi(2)
    }
}

impl PerturbationSpec {
    /// Random spec inside the ball interior (margin `2h` plus the bump width).
    pub fn random(rng: &mut ChaCha8Rng, ball: &Ball, h: f64, amplitude_scale: f64) -> Self {
        let kind = if rng.gen_bool(0.6) {
            PerturbationKind::Bump
        } else {
            PerturbationKind::Smoothing
        };
        let room = ball.radius - 3.0 * h;
        let width = rng.gen_range((4.0 * h).min(0.5 * room)..=(0.5 * room).max(4.0 * h + 1e-12));
        let reach = (room - width).max(0.0);
        let d = ball.dim();
        let center = loop {
            let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break c
                    .iter()
                    .zip(&ball.center)
                    .map(|(v, o)| o + reach * v)
                    .collect::<Vec<_>>();
            }
        };
        let amplitude = match kind {
            PerturbationKind::Bump => {
                let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                s * rng.gen_range(0.05..=0.5) * amplitude_scale
            }
            PerturbationKind::Smoothing => rng.gen_range(0.25..=1.0),
        };
        let radius_cells = rng.gen_range(1..=4);
        Self {
            kind,
            center,
            width,
            amplitude,
            radius_cells,
        }
    }

    /// Materialises the perturbation on the field's grid and time stamps.
    pub fn build(&self, field: &SpaceTimeField, window: (f64, f64)) -> Result<SpaceTimeField> {
        let grid = field.grid();
        let st = Stencil::new(grid);
        let n = grid.cells();
        let mut x = vec![0.0; grid.dim()];
        let mut psi = vec![0.0; n];
        for (i, p) in psi.iter_mut().enumerate() {
            grid.center_into(i, &mut x);
            let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / self.width.powi(2);
            *p = bump(r2);
        }
        let mut data = vec![0.0; n * field.slice_count()];
        for m in 0..field.slice_count() {
            let chi = time_bump(field.times()[m], window.0, window.1);
            if chi == 0.0 {
                continue;
            }
            let out = &mut data[m * n..(m + 1) * n];
            match self.kind {
                PerturbationKind::Bump => {
                    for i in 0..n {
                        out[i] = self.amplitude * chi * psi[i];
                    }
                }
                PerturbationKind::Smoothing => {
                    let u = field.slice(m);
                    for i in 0..n {
                        if psi[i] == 0.0 {
                            continue;
                        }
                        let mean = box_mean(&st, u, i, self.radius_cells);
                        out[i] = self.amplitude * chi * psi[i] * (mean - u[i]);
                    }
                }
            }
        }
        SpaceTimeField::new(grid.clone(), field.times().to_vec(), data)
    }
}

fn box_mean(st: &Stencil, u: &[f64], i: usize, r: usize) -> f64 {
    let x = [i / st.stride[0], (i / st.stride[1]) % st.n[1], i % st.n[2]];
    let r = r as i64;
    let mut acc = 0.0;
    let mut cnt = 0usize;
    let span = |k: usize| if k < st.dim { -r..=r } else { 0..=0 };
    for a in span(0) {
        for b in span(1) {
            for c in span(2) {
                let y = [x[0] as i64 + a, x[1] as i64 + b, x[2] as i64 + c];
                if (0..3).all(|k| y[k] >= 0 && y[k] < st.n[k] as i64) {
                    let j = y[0] as usize * st.stride[0] + y[1] as usize * st.stride[1] + y[2] as usize;
                    acc += u[j];
                    cnt += 1;
                }
            }
        }
    }
    acc / cnt as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerDraw {
    pub spec: PerturbationSpec,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerSuite {
    pub seed: u64,
    pub tolerance: f64,
    pub draws: Vec<MinimizerDraw>,
    pub min_gap: f64,
    pub violations: usize,
    /// `min over draws of gap(phi) + gap(-phi)`; the time term cancels.
    pub min_symmetric_gap: f64,
}

impl MinimizerSuite {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Seeded corpus of perturbations; draws run in parallel and are collected in order.
pub fn minimizer_suite(
    field: &SpaceTimeField,
    u_t: &SpaceTimeField,
    ball: &Ball,
    window: (f64, f64),
    seed: u64,
    count: usize,
    tolerance: f64,
) -> Result<MinimizerSuite> {
    let h = field.grid().spacing();
    let cells = field.grid().ball_cells(ball, 1)?;
    let (a, b) = window;
    let osc = {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for m in field.times_in(a, b) {
            for &i in &cells {
                lo = lo.min(field.slice(m)[i]);
                hi = hi.max(field.slice(m)[i]);
            }
        }
        if hi > lo {
            hi - lo
        } else {
            1.0
        }
    };
    let results: Vec<Result<(MinimizerDraw, f64)>> = (0..count)
        .into_par_iter()
        .map(|d| {
            let mut rng = draw_rng(seed, d as u64);
            let spec = PerturbationSpec::random(&mut rng, ball, h, osc);
            let phi = spec.build(field, window)?;
            let gap = minimizer_gap(field, u_t, &phi, window, ball)?;
            let neg = phi.map(|v| -v)?;
            let gap_neg = minimizer_gap(field, u_t, &neg, window, ball)?;
            Ok((MinimizerDraw { spec, gap }, gap + gap_neg))
        })
        .collect();
    let mut draws = Vec::with_capacity(count);
    let mut min_sym = f64::INFINITY;
    for r in results {
        let (d, s) = r?;
        min_sym = min_sym.min(s);
        draws.push(d);
    }
    let min_gap = draws.iter().map(|d| d.gap).fold(f64::INFINITY, f64::min);
    let violations = draws.iter().filter(|d| d.gap < -tolerance).count();
    Ok(MinimizerSuite {
        seed,
        tolerance,
        draws,
        min_gap,
        violations,
        min_symmetric_gap: min_sym,
    })
}

/// Sampling ranges for randomized energy and entropy draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawRanges {
    /// Points farther than this from the grid boundary (plus rho) are eligible.
    pub boundary_margin: f64,
    pub rho: (f64, f64),
    pub theta: (f64, f64),
    /// Fraction of the ball where `zeta_1 = 1`.
    pub inner: (f64, f64),
    /// Fraction of the time window over which `zeta_2` rises from 0 to 1.
    pub ramp: (f64, f64),
    /// Starting value of `zeta_2`; 0 matches the cutoffs used in the proofs.
    pub initial_weight: (f64, f64),
}

impl DrawRanges {
    pub fn for_field(field: &SpaceTimeField) -> Self {
        let bx = field.grid().bounding_box();
        let half = (0..field.dim())
            .map(|k| 0.5 * (bx.hi[k] - bx.lo[k]))
            .fold(f64::INFINITY, f64::min);
        let h = field.grid().spacing();
        Self {
            boundary_margin: 4.0 * h,
            rho: (8.0 * h, (0.45 * half).max(8.0 * h)),
            theta: (0.5, 2.0),
            inner: (0.25, 0.75),
            ramp: (0.2, 1.0),
            initial_weight: (0.0, 0.0),
        }
    }
}

/// One randomized cylinder, truncation and cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderDraw {
    pub cylinder: Cylinder,
    pub trunc: TruncationSpec,
    pub inner: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
    pub initial_weight: f64,
}

impl CylinderDraw {
    pub fn random(rng: &mut ChaCha8Rng, field: &SpaceTimeField, r: &DrawRanges) -> Result<Self> {
        let bx = field.grid().bounding_box();
        let times = field.times();
        let (t_first, t_last) = (times[0], times[times.len() - 1]);
        let span = t_last - t_first;
        for _ in 0..1000 {
            let rho = rng.gen_range(r.rho.0..=r.rho.1);
            let theta = rng.gen_range(r.theta.0..=r.theta.1);
            if theta * rho > span {
                continue;
            }
            let mut center = Vec::with_capacity(field.dim());
            let mut ok = true;
            for k in 0..field.dim() {
                let lo = bx.lo[k] + r.boundary_margin + rho;
                let hi = bx.hi[k] - r.boundary_margin - rho;
                if lo > hi {
                    ok = false;
                    break;
                }
                center.push(rng.gen_range(lo..=hi));
            }
            if !ok {
                continue;
            }
            let t0 = rng.gen_range(t_first + theta * rho..=t_last);
            let cylinder = Cylinder::backward(center, t0, rho, theta)?;
            let osc = match ess_osc(field, &cylinder) {
                Ok(o) => o,
                Err(_) => continue,
            };
            let sign = if rng.gen_bool(0.5) { Sign::Plus } else { Sign::Minus };
            let level = if osc.omega > 0.0 {
                rng.gen_range(osc.mu_minus..=osc.mu_plus)
            } else {
                osc.mu_minus
            };
            let inner = rng.gen_range(r.inner.0..=r.inner.1);
            let (a, b) = cylinder.interval();
            let frac = rng.gen_range(r.ramp.0..=r.ramp.1);
            let initial_weight = if r.initial_weight.1 > r.initial_weight.0 {
                rng.gen_range(r.initial_weight.0..=r.initial_weight.1)
            } else {
                r.initial_weight.0
            };
            return Ok(Self {
                cylinder,
                trunc: TruncationSpec::new(level, sign),
                inner,
                ramp_start: a,
                ramp_end: a + frac * (b - a),
                initial_weight,
            });
        }
        Err(Error::Geometry("no admissible cylinder fits the field".into()))
    }

    pub fn cutoff(&self, grid: &Grid) -> Result<Cutoff> {
        let prof = if self.initial_weight >= 1.0 {
            TimeProfile::constant(1.0)?
        } else {
            TimeProfile::new(vec![(self.ramp_start, self.initial_weight), (self.ramp_end, 1.0)])?
        };
        Cutoff::radial(grid, self.cylinder.ball(), self.inner, prof)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyDraw {
    pub draw: CylinderDraw,
    pub budget: EnergyBudget,
    /// Slack divided by the left-hand side (0 when both vanish).
    pub relative_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySuite {
    pub seed: u64,
    pub gamma: f64,
    pub tolerance: f64,
    pub draws: Vec<EnergyDraw>,
    pub min_relative_slack: f64,
    pub violations: usize,
    /// Smallest gamma satisfying every draw.
    pub fitted_gamma: f64,
}

impl EnergySuite {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn relative(slack: f64, lhs: f64) -> f64 {
    if lhs > 0.0 {
        slack / lhs
    } else if slack >= 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Randomized energy-inequality suite; a draw violates when
/// `slack < -tolerance * lhs`.
pub fn energy_suite(
    field: &SpaceTimeField,
    ranges: &DrawRanges,
    gamma: f64,
    tolerance: f64,
    seed: u64,
    count: usize,
) -> Result<EnergySuite> {
    let results: Vec<Result<EnergyDraw>> = (0..count)
        .into_par_iter()
        .map(|d| {
            let mut rng = draw_rng(seed, d as u64);
            let draw = CylinderDraw::random(&mut rng, field, ranges)?;
            let cutoff = draw.cutoff(field.grid())?;
            let budget = dg_energy_report(field, &draw.cylinder, &draw.trunc, &cutoff, gamma)?;
            let relative_slack = relative(budget.slack, budget.lhs());
            Ok(EnergyDraw {
                draw,
                budget,
                relative_slack,
            })
        })
        .collect();
    let draws = results.into_iter().collect::<Result<Vec<_>>>()?;
    let min_relative_slack = draws.iter().map(|d| d.relative_slack).fold(f64::INFINITY, f64::min);
    let violations = draws.iter().filter(|d| d.relative_slack < -tolerance).count();
    let fitted_gamma = draws.iter().map(|d| d.budget.minimal_gamma()).fold(0.0, f64::max);
    Ok(EnergySuite {
        seed,
        gamma,
        tolerance,
        draws,
        min_relative_slack,
        violations,
        fitted_gamma,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneLaplacianDraw {
    pub draw: CylinderDraw,
    pub report: OneLaplacianReport,
    pub relative_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneLaplacianSuite {
    pub seed: u64,
    pub tolerance: f64,
    pub draws: Vec<OneLaplacianDraw>,
    pub min_relative_slack: f64,
    pub violations: usize,
}

impl OneLaplacianSuite {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Randomized entropy-inequality suite on `(u, z)`; slacks are measured
/// relative to `|lhs_final| + |rhs_initial| + variation_scale`.
pub fn one_laplacian_suite(
    field: &SpaceTimeField,
    z: &DualField,
    ranges: &DrawRanges,
    tolerance: f64,
    seed: u64,
    count: usize,
) -> Result<OneLaplacianSuite> {
    z.check_matches(field)?;
    z.check_admissible()?;
    let results: Vec<Result<OneLaplacianDraw>> = (0..count)
        .into_par_iter()
        .map(|d| {
            let mut rng = draw_rng(seed, d as u64);
            let mut draw = CylinderDraw::random(&mut rng, field, ranges)?;
            draw.trunc.offset = 0.0;
            let cutoff = draw.cutoff(field.grid())?;
            let (a, b) = draw.cylinder.interval();
            let report = one_laplacian_certificate(field, z, &draw.trunc, &cutoff, (a, b))?;
            let scale = report.lhs_final.abs() + report.rhs_initial.abs() + report.variation_scale;
            let relative_slack = relative(report.slack, scale);
            Ok(OneLaplacianDraw {
                draw,
                report,
                relative_slack,
            })
        })
        .collect();
    let draws = results.into_iter().collect::<Result<Vec<_>>>()?;
    let min_relative_slack = draws.iter().map(|d| d.relative_slack).fold(f64::INFINITY, f64::min);
    let violations = draws.iter().filter(|d| d.relative_slack < -tolerance).count();
    Ok(OneLaplacianSuite {
        seed,
        tolerance,
        draws,
        min_relative_slack,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_analytic, SpatialBox};

    fn ramp_field() -> SpaceTimeField {
        let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
        sample_analytic(&|x: &[f64], _| x[0], &bx, 1.0 / 32.0, &[0.0, 0.25, 0.5]).unwrap()
    }

    #[test]
    fn time_profile_ramp() {
        let p = TimeProfile::ramp(1.0, 3.0).unwrap();
        assert_eq!(p.value(0.0), 0.0);
        assert_eq!(p.value(2.0), 0.5);
        assert_eq!(p.value(4.0), 1.0);
        assert_eq!(p.slope(2.0), 0.5);
        assert_eq!(p.lipschitz(), 0.5);
        assert!(TimeProfile::new(vec![(0.0, 1.0), (1.0, 0.5)]).is_err());
    }

    #[test]
    fn cutoff_checks_support_and_bound() {
        let f = ramp_field();
        let ball = Ball::new(vec![0.0, 0.0], 0.5).unwrap();
        let c = Cutoff::radial(f.grid(), ball.clone(), 0.5, TimeProfile::constant(1.0).unwrap()).unwrap();
        assert_eq!(c.lip_space(), 4.0);
        let wide = |x: &[f64]| if x[0].abs() < 0.9 { 1.0 } else { 0.0 };
        assert!(Cutoff::new(
            f.grid(),
            ball.clone(),
            &wide,
            f64::INFINITY,
            TimeProfile::constant(1.0).unwrap()
        )
        .is_err());
        let steep = |x: &[f64]| (1.0 - 2.0 * x[0].hypot(x[1])).clamp(0.0, 1.0);
        assert!(Cutoff::new(f.grid(), ball, &steep, 1.0, TimeProfile::constant(1.0).unwrap()).is_err());
    }

    #[test]
    fn empty_truncation_has_zero_budget() {
        let f = ramp_field();
        let cyl = Cylinder::backward(vec![0.0, 0.0], 0.5, 0.5, 1.0).unwrap();
        let c = Cutoff::radial(f.grid(), cyl.ball(), 0.5, TimeProfile::ramp(0.0, 0.5).unwrap()).unwrap();
        let b = dg_energy_report(&f, &cyl, &TruncationSpec::new(10.0, Sign::Plus), &c, 2.0).unwrap();
        assert_eq!(b.lhs(), 0.0);
        assert_eq!(b.rhs(), 0.0);
        assert_eq!(b.slack, 0.0);
    }

    #[test]
    fn zero_perturbation_has_zero_gap() {
        let f = ramp_field();
        let ut = f.map(|_| 0.0).unwrap();
        let phi = f.map(|_| 0.0).unwrap();
        let ball = Ball::new(vec![0.0, 0.0], 0.5).unwrap();
        assert_eq!(minimizer_gap(&f, &ut, &phi, (0.0, 0.5), &ball).unwrap(), 0.0);
    }

    #[test]
    fn perturbation_outside_support_is_rejected() {
        let f = ramp_field();
        let ut = f.map(|_| 0.0).unwrap();
        let ball = Ball::new(vec![0.0, 0.0], 0.5).unwrap();
        let phi = f.map(|_| 1.0).unwrap();
        assert!(matches!(
            minimizer_gap(&f, &ut, &phi, (0.0, 0.5), &ball),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn truncation_primitive_matches_quadrature() {
        for sign in [Sign::Plus, Sign::Minus] {
            for k in [-0.3, 0.0, 0.4] {
                let t = TruncationSpec {
                    level: k,
                    sign,
                    offset: 0.1,
                };
                for u in [-1.0, -0.2, 0.3, 0.9] {
                    let s = u - 0.1;
                    let q = crate::quadrature::gauss_legendre(|x| t.p(x + 0.1), 0.0, s, 2000);
                    assert!((t.primitive(u) - q).abs() < 1e-9, "{sign:?} k={k} u={u}");
                }
            }
        }
    }

    #[test]
    fn empty_p_gives_zero_certificate() {
        let f = ramp_field();
        let z = DualField::new(f.grid().clone(), f.times().to_vec(), vec![0.0; f.data().len() * 2]).unwrap();
        let ball = Ball::new(vec![0.0, 0.0], 0.5).unwrap();
        let c = Cutoff::radial(f.grid(), ball, 0.5, TimeProfile::ramp(0.0, 0.5).unwrap()).unwrap();
        let r = one_laplacian_certificate(&f, &z, &TruncationSpec::new(5.0, Sign::Plus), &c, (0.0, 0.5)).unwrap();
        assert_eq!(r.slack, 0.0);
        assert_eq!(r.lhs_final + r.lhs_measure, 0.0);
    }
}

#[cfg(test)]
mod f_checks {
    use super::*;
    use crate::examples::make_example;
    use crate::grid::{sample_analytic, SpatialBox};

    fn f_slack(h: f64, level: f64, sign: Sign) -> (f64, f64) {
        let ex = make_example("F").unwrap();
        let bx = SpatialBox::cube(3, 0.0, 0.5).unwrap();
        let dt = h / 4.0;
        let times: Vec<f64> = (0..=((0.25 / dt).round() as usize)).map(|m| m as f64 * dt).collect();
        let f = sample_analytic(&|x: &[f64], t| ex.eval(x, t), &bx, h, &times).unwrap();
        let zf = ex.dual.clone().unwrap();
        let z = DualField::sample(f.grid(), &times, &|x: &[f64], t, k| zf(x, t, k), true).unwrap();
        let ball = Ball::new(vec![0.25, 0.25, 0.25], 0.2).unwrap();
        let c = Cutoff::radial(f.grid(), ball, 0.5, TimeProfile::ramp(0.05, 0.15).unwrap()).unwrap();
        let r = one_laplacian_certificate(&f, &z, &TruncationSpec::new(level, sign), &c, (0.0, 0.25)).unwrap();
        (r.slack, r.lhs_final.abs() + r.rhs_initial.abs() + r.variation_scale)
    }

    #[test]
    fn f_defect_shrinks_under_refinement() {
        for (k, sign) in [(4.0, Sign::Plus), (3.0, Sign::Plus)] {
            let (a, sa) = f_slack(1.0 / 16.0, k, sign);
            let (b, sb) = f_slack(1.0 / 32.0, k, sign);
            assert!(a < 0.0 && b < 0.0);
            assert!(a / sa < 1.5 * (b / sb), "k = {k}: {} then {}", a / sa, b / sb);
        }
        let (m, sm) = f_slack(1.0 / 32.0, 4.0, Sign::Minus);
        assert!(m >= 0.0 && m / sm < 0.01);
    }
}
