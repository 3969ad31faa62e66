//! Implicit Euler for the total variation flow `u_t = div(Du/|Du|)`.
//!
//! Each step solves `min_v TV(v) + |v - u_prev|^2 / (2 dt)` with the
//! Chambolle–Pock primal–dual method (accelerated by the strong convexity
//! `1/dt` of the fidelity term). The returned primal is read off the dual
//! iterate, `u_next = u_prev + dt div z`, so the discrete equation holds up to
//! the final projection of `z` onto the unit ball. Boundaries are no-flux.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{decode, encode, Grid, SpaceTimeField};
use crate::upwind::Stencil;

pub const DUAL_MAGIC: &[u8; 4] = b"TVZ1";

/// Admissibility slack for `|z| <= 1`.
pub const ADMISSIBLE: f64 = 1.0 + 1e-6;

/// Vector field with `N` components per cell and time. Component `k` of cell
/// `i` lives on the face between `i` and `i + e_k`; its norm is taken over the
/// `N` faces owned by the cell.
#[derive(Clone, Debug, PartialEq)]
pub struct DualField {
    grid: Grid,
    times: Vec<f64>,
    data: Vec<f64>,
    sup_norm: f64,
}

impl DualField {
    pub fn new(grid: Grid, times: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        crate::grid::check_times(&times)?;
        let n = grid.dim();
        if data.len() != grid.cells() * n * times.len() {
            return Err(Error::InvalidInput(format!(
                "dual data length {} does not match {} cells x {n} components x {} times",
                data.len(),
                grid.cells(),
                times.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dual field has non-finite entries".into()));
        }
        let sup_norm = data
            .chunks(n)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(Self {
            grid,
            times,
            data,
            sup_norm,
        })
    }

    /// Samples component `k` at the face centre `x_i + (h/2) e_k`; optionally
    /// projects every cell vector onto the closed unit ball.
    pub fn sample(
        grid: &Grid,
        times: &[f64],
        z: &(dyn Fn(&[f64], f64, usize) -> f64 + Sync),
        project: bool,
    ) -> Result<Self> {
        let n = grid.dim();
        let h = grid.spacing();
        let mut data = Vec::with_capacity(grid.cells() * n * times.len());
        let mut x = vec![0.0; n];
        for &t in times {
            for i in 0..grid.cells() {
                let start = data.len();
                for k in 0..n {
                    grid.center_into(i, &mut x);
                    x[k] += 0.5 * h;
                    data.push(z(&x, t, k));
                }
                if project {
                    let c = &mut data[start..];
                    let s = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if s > 1.0 {
                        c.iter_mut().for_each(|v| *v /= s);
                    }
                }
            }
        }
        Self::new(grid.clone(), times.to_vec(), data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        let len = self.grid.cells() * self.grid.dim();
        &self.data[m * len..(m + 1) * len]
    }

    pub fn check_admissible(&self) -> Result<()> {
        if self.sup_norm > ADMISSIBLE {
            return Err(Error::Inadmissible(self.sup_norm));
        }
        Ok(())
    }

    pub fn check_matches(&self, field: &SpaceTimeField) -> Result<()> {
        if &self.grid != field.grid() || self.times != field.times() {
            return Err(Error::Mismatch(
                "dual field and scalar field differ in grid or time stamps".into(),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(DUAL_MAGIC, &self.grid, &self.times, &self.data)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (grid, times, data) = decode(DUAL_MAGIC, bytes, |d| d)?;
        Self::new(grid, times, data)
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub inner_iters: usize,
    pub primal_step: f64,
    pub dual_step: f64,
    /// Target for the relative primal–dual gap.
    pub tolerance: f64,
    /// Regularisation of the cross-check scheme.
    pub epsilon: f64,
}

impl SolverConfig {
    /// `dt = h/4` and balanced steps with `tau * sigma * ||K||^2 = 1`.
    pub fn for_grid(grid: &Grid) -> Self {
        let l = Stencil::new(grid).norm_sq_bound().sqrt();
        Self {
            dt: grid.spacing() / 4.0,
            inner_iters: 5000,
            primal_step: 1.0 / l,
            dual_step: 1.0 / l,
            tolerance: 1e-5,
            epsilon: 1e-3,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("solver.dt must be positive");
        }
        if self.inner_iters == 0 {
            return bad("solver.inner_iters must be positive");
        }
        if !(self.primal_step > 0.0 && self.dual_step > 0.0) {
            return bad("solver.primal_step and solver.dual_step must be positive");
        }
        let l2 = Stencil::new(grid).norm_sq_bound();
        if self.primal_step * self.dual_step * l2 > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "solver steps violate tau*sigma*||K||^2 <= 1: {} * {} * {l2}",
                self.primal_step, self.dual_step
            )));
        }
        if !(self.tolerance > 0.0) {
            return bad("solver.tolerance must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("solver.epsilon must be positive");
        }
        Ok(())
    }
}

/// Per-step optimality record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub iterations: usize,
    pub converged: bool,
    pub relative_gap: f64,
    /// `TV(u_prev)` over the box.
    pub energy_prev: f64,
    /// `TV(u_next) + |u_next - u_prev|^2/(2 dt)` over the box.
    pub energy_next: f64,
    /// `sup |z|` before the final projection.
    pub raw_sup_norm: f64,
}

impl StepReport {
    /// Functional descent, non-negative up to the solver tolerance.
    pub fn descent(&self) -> f64 {
        self.energy_prev - self.energy_next
    }

    /// `energy_next <= energy_prev + tolerance`, the tolerance taken relative
    /// to the energy when that exceeds one.
    pub fn descent_certified(&self, tolerance: f64) -> bool {
        self.descent() >= -tolerance * self.energy_prev.abs().max(1.0)
    }
}

/// Reusable solver state; the dual variable warm-starts the next step.
pub struct RofSolver {
    st: Stencil,
    cfg: SolverConfig,
    p: Vec<f64>,
    ktp: Vec<f64>,
    v: Vec<f64>,
    v_old: Vec<f64>,
    v_bar: Vec<f64>,
    /// `f - dt K^T p`, the primal point paired with the dual iterate.
    v_dual: Vec<f64>,
}

impl RofSolver {
    pub fn new(grid: &Grid, cfg: SolverConfig) -> Result<Self> {
        cfg.validate(grid)?;
        let st = Stencil::new(grid);
        let n = st.cells;
        let c = st.comps();
        Ok(Self {
            cfg,
            p: vec![0.0; n * c],
            ktp: vec![0.0; n],
            v: vec![0.0; n],
            v_old: vec![0.0; n],
            v_bar: vec![0.0; n],
            v_dual: vec![0.0; n],
            st,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn primal_value(&self, v: &[f64], f: &[f64]) -> f64 {
        let tv = self.st.density_sum(v);
        let mut fid = 0.0;
        for i in 0..self.st.cells {
            let d = v[i] - f[i];
            fid += d * d;
        }
        tv + fid / (2.0 * self.cfg.dt)
    }

    fn dual_value(&self, f: &[f64]) -> f64 {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..self.st.cells {
            a += f[i] * self.ktp[i];
            b += self.ktp[i] * self.ktp[i];
        }
        a - 0.5 * self.cfg.dt * b
    }

    /// One implicit Euler step from `f`; returns `(u_next, z, report)`.
    pub fn step(&mut self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>, StepReport)> {
        let n = self.st.cells;
        if f.len() != n {
            return Err(Error::Mismatch(format!(
                "slice has {} values, grid has {n} cells",
                f.len()
            )));
        }
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("u_prev is not finite at cell {i}")));
        }
        let dt = self.cfg.dt;
        let mu = 1.0 / dt;
        let mut tau = self.cfg.primal_step;
        let mut sigma = self.cfg.dual_step;
        self.v.copy_from_slice(f);
        self.v_bar.copy_from_slice(f);
        // The warm start is kept only when it beats p = 0, whose dual value is 0.
        self.st.apply_adjoint(&self.p, &mut self.ktp);
        if self.dual_value(f) < 0.0 {
            self.p.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut iterations = 0;
        let mut converged = false;
        let mut rel = f64::INFINITY;
        let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        while iterations < self.cfg.inner_iters {
            iterations += 1;
            self.st.ascend_project(&self.v_bar, &mut self.p, sigma);
            self.st.apply_adjoint(&self.p, &mut self.ktp);
            self.v_old.copy_from_slice(&self.v);
            let denom = 1.0 + tau * mu;
            for i in 0..n {
                self.v[i] = (self.v[i] - tau * self.ktp[i] + tau * mu * f[i]) / denom;
            }
            let theta = 1.0 / (1.0 + 2.0 * mu * tau).sqrt();
            tau *= theta;
            sigma /= theta;
            for i in 0..n {
                self.v_bar[i] = self.v[i] + theta * (self.v[i] - self.v_old[i]);
            }
            if iterations % 10 == 0 || iterations == self.cfg.inner_iters {
                if self.v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Divergence { iteration: iterations });
                }
                for i in 0..n {
                    self.v_dual[i] = f[i] - dt * self.ktp[i];
                }
                let primal = self.primal_value(&self.v_dual, f);
                let dual = self.dual_value(f);
                // Near-constant data has a vanishing functional; below this
                // floor the gap is judged in absolute terms.
                let floor = 1e-8 * n as f64 * scale.max(1.0);
                rel = (primal - dual) / primal.abs().max(floor);
                if rel <= self.cfg.tolerance {
                    converged = true;
                    break;
                }
            }
        }
        let vol = self.st.h.powi(self.st.dim as i32);
        let energy_prev = crate::tvmeasure::tv_box_stencil(&self.st, f) * vol;
        for i in 0..n {
            self.v_dual[i] = f[i] - dt * self.ktp[i];
        }
        let energy_next = self.primal_value(&self.v_dual, f) * vol;
        let mut z = self.st.flux(&self.p);
        let mut raw_sup = 0.0f64;
        for zc in z.chunks_mut(self.st.dim) {
            let s = zc.iter().map(|v| v * v).sum::<f64>().sqrt();
            raw_sup = raw_sup.max(s);
            if s > 1.0 {
                zc.iter_mut().for_each(|v| *v /= s);
            }
        }
        let report = StepReport {
            iterations,
            converged,
            relative_gap: rel,
            energy_prev,
            energy_next,
            raw_sup_norm: raw_sup,
        };
        Ok((self.v_dual.clone(), z, report))
    }
}

/// Result of one cold-started step.
#[derive(Clone, Debug)]
pub struct RofOutcome {
    pub u_next: Vec<f64>,
    pub z: Vec<f64>,
    pub report: StepReport,
}

pub fn rof_step(grid: &Grid, u_prev: &[f64], cfg: &SolverConfig) -> Result<RofOutcome> {
    let mut s = RofSolver::new(grid, cfg.clone())?;
    let (u_next, z, report) = s.step(u_prev)?;
    Ok(RofOutcome { u_next, z, report })
}

/// Trajectory of repeated steps with time stamps `0, dt, ..., steps*dt`.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub field: SpaceTimeField,
    /// The slice at time 0 is zero: no step produced it.
    pub dual: DualField,
    pub reports: Vec<StepReport>,
}

pub fn evolve(grid: &Grid, initial: &[f64], steps: usize, cfg: &SolverConfig) -> Result<Evolution> {
    if steps == 0 {
        return Err(Error::InvalidInput("steps must be at least 1".into()));
    }
    let mut solver = RofSolver::new(grid, cfg.clone())?;
    let n = grid.cells();
    let d = grid.dim();
    let mut data = Vec::with_capacity(n * (steps + 1));
    let mut zdata = vec![0.0; n * d];
    zdata.reserve(n * d * steps);
    data.extend_from_slice(initial);
    let mut reports = Vec::with_capacity(steps);
    let mut u = initial.to_vec();
    for _ in 0..steps {
        let (next, z, rep) = solver.step(&u)?;
        data.extend_from_slice(&next);
        zdata.extend_from_slice(&z);
        reports.push(rep);
        u = next;
    }
    let times: Vec<f64> = (0..=steps).map(|m| m as f64 * cfg.dt).collect();
    Ok(Evolution {
        field: SpaceTimeField::new(grid.clone(), times.clone(), data)?,
        dual: DualField::new(grid.clone(), times, zdata)?,
        reports,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizedScheme {
    /// Lagged diffusivity, one linear solve per step; unconditionally stable.
    SemiImplicit,
    /// Forward Euler; requires `dt <= eps h^2 / (2N)`.
    Explicit,
}

/// One step of the gradient flow of the regularised total variation
/// `sum_i sqrt(|(K u)_i^+|^2 + eps^2)`.
pub fn regularized_step(
    grid: &Grid,
    u_prev: &[f64],
    dt: f64,
    epsilon: f64,
    scheme: RegularizedScheme,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need dt > 0 and epsilon > 0, got {dt}, {epsilon}"
        )));
    }
    let st = Stencil::new(grid);
    if u_prev.len() != st.cells {
        return Err(Error::Mismatch("slice length differs from grid".into()));
    }
    let n = st.cells;
    let h2 = st.h * st.h;
    // Face weights: w[i*dim + k] couples cell i with i + e_k.
    let mut w = vec![0.0; n * st.dim];
    let mut d = [0.0; 6];
    for i in 0..n {
        st.diffs(u_prev, i, &mut d);
        let s: f64 = d[..st.comps()].iter().map(|&v| if v > 0.0 { v * v } else { 0.0 }).sum();
        let ci = 1.0 / (s + epsilon * epsilon).sqrt();
        for k in 0..st.dim {
            if d[2 * k] > 0.0 {
                w[i * st.dim + k] += ci / h2;
            }
            if d[2 * k + 1] > 0.0 {
                w[(i - st.stride[k]) * st.dim + k] += ci / h2;
            }
        }
    }
    let apply_l = |x: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            for k in 0..st.dim {
                let wf = w[i * st.dim + k];
                if wf != 0.0 {
                    let j = i + st.stride[k];
                    let flux = wf * (x[i] - x[j]);
                    out[i] += flux;
                    out[j] -= flux;
                }
            }
        }
    };
    match scheme {
        RegularizedScheme::Explicit => {
            let bound = epsilon * h2 / (2.0 * st.dim as f64);
            if dt > bound {
                return Err(Error::Stability { dt, bound });
            }
            let mut lu = vec![0.0; n];
            apply_l(u_prev, &mut lu);
            Ok(u_prev.iter().zip(&lu).map(|(u, l)| u - dt * l).collect())
        }
        RegularizedScheme::SemiImplicit => {
            let mut diag = vec![1.0; n];
            for i in 0..n {
                for k in 0..st.dim {
                    let wf = w[i * st.dim + k];
                    if wf != 0.0 {
                        diag[i] += dt * wf;
                        diag[i + st.stride[k]] += dt * wf;
                    }
                }
            }
            let op = |x: &[f64], out: &mut [f64]| {
                apply_l(x, out);
                for i in 0..n {
                    out[i] = x[i] + dt * out[i];
                }
            };
            conjugate_gradient(op, &diag, u_prev, 1e-12, 20 * n + 1000)
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
fn conjugate_gradient(
    op: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = b.to_vec();
    let mut ax = vec![0.0; n];
    op(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut zv: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = zv.clone();
    let mut rz: f64 = r.iter().zip(&zv).map(|(a, b)| a * b).sum();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= tol * bnorm {
            return Ok(x);
        }
        op(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Divergence { iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            zv[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&zv).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = zv[i] + beta * p[i];
        }
    }
    Ok(x)
}

/// `r = (u^m - u^{m-1})/dt - div z^m` on interior cells and times `m >= 1`.
#[derive(Clone, Debug)]
pub struct Residual {
    pub grid: Grid,
    /// Stamps of the slices `m >= 1`.
    pub times: Vec<f64>,
    /// One value per cell and listed time; zero off the interior.
    pub values: Vec<f64>,
    interior: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub median_abs: f64,
    pub count: usize,
}

impl Residual {
    /// Norms over interior cells whose centre satisfies `keep`.
    pub fn summary_where(&self, keep: impl Fn(&[f64]) -> bool) -> ResidualSummary {
        let n = self.grid.cells();
        let mask: Vec<bool> = (0..n).map(|i| self.interior[i] && keep(&self.grid.center(i))).collect();
        let mut vals: Vec<f64> = Vec::new();
        for m in 0..self.times.len() {
            for i in 0..n {
                if mask[i] {
                    vals.push(self.values[m * n + i].abs());
                }
            }
        }
        if vals.is_empty() {
            return ResidualSummary {
                max_abs: 0.0,
                mean_abs: 0.0,
                median_abs: 0.0,
                count: 0,
            };
        }
        let max_abs = vals.iter().copied().fold(0.0, f64::max);
        let mean_abs = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.sort_by(f64::total_cmp);
        let median_abs = vals[vals.len() / 2];
        ResidualSummary {
            max_abs,
            mean_abs,
            median_abs,
            count: vals.len(),
        }
    }

    pub fn summary(&self) -> ResidualSummary {
        self.summary_where(|_| true)
    }
}

pub fn residual_div_z(field: &SpaceTimeField, z: &DualField) -> Result<Residual> {
    z.check_matches(field)?;
    let grid = field.grid();
    let st = Stencil::new(grid);
    let n = grid.cells();
    let interior: Vec<bool> = (0..n).map(|i| st.interior(i, 1)).collect();
    let nt = field.slice_count();
    let mut values = Vec::with_capacity(n * nt.saturating_sub(1));
    let mut div = vec![0.0; n];
    for m in 1..nt {
        let dt = field.times()[m] - field.times()[m - 1];
        st.divergence(z.slice(m), &mut div);
        let (u1, u0) = (field.slice(m), field.slice(m - 1));
        for i in 0..n {
            values.push(if interior[i] {
                (u1[i] - u0[i]) / dt - div[i]
            } else {
                0.0
            });
        }
    }
    Ok(Residual {
        grid: grid.clone(),
        times: field.times()[1..].to_vec(),
        values,
        interior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_analytic, SpatialBox};

    fn disc(h: f64, r: f64) -> (Grid, Vec<f64>) {
        let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
        let f = sample_analytic(
            &|x: &[f64], _| if x[0].hypot(x[1]) <= r { 1.0 } else { 0.0 },
            &bx,
            h,
            &[0.0],
        )
        .unwrap();
        (f.grid().clone(), f.slice(0).to_vec())
    }

    #[test]
    fn constants_are_stationary() {
        let g = Grid::new(vec![16, 16], 1.0 / 16.0, vec![0.0, 0.0]).unwrap();
        let u = vec![0.7; g.cells()];
        let out = rof_step(&g, &u, &SolverConfig::for_grid(&g)).unwrap();
        assert!(out.u_next.iter().all(|&v| (v - 0.7).abs() < 1e-12));
        assert!(out.z.iter().all(|&v| v == 0.0));
        assert!(out.report.converged);
    }

    #[test]
    fn disc_step_conserves_mass_and_descends() {
        let (g, u) = disc(1.0 / 32.0, 0.5);
        let cfg = SolverConfig::for_grid(&g);
        let out = rof_step(&g, &u, &cfg).unwrap();
        let m0: f64 = u.iter().sum();
        let m1: f64 = out.u_next.iter().sum();
        assert!((m0 - m1).abs() < 1e-9 * m0);
        assert!(out.report.descent() >= -cfg.tolerance * out.report.energy_prev);
        assert!(out.report.converged, "{:?}", out.report);
        let lo = out.u_next.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = out.u_next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo > -1e-4 && hi < 1.0 + 1e-4);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let g = Grid::new(vec![8, 8], 0.125, vec![0.0, 0.0]).unwrap();
        let mut cfg = SolverConfig::for_grid(&g);
        cfg.primal_step *= 2.0;
        assert!(cfg.validate(&g).is_err());
        let cfg = SolverConfig::for_grid(&g).with_dt(0.0);
        assert!(cfg.validate(&g).is_err());
    }

    #[test]
    fn explicit_regularized_step_checks_stability() {
        let g = Grid::new(vec![8], 0.125, vec![0.0]).unwrap();
        let u: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let r = regularized_step(&g, &u, 1.0, 1e-3, RegularizedScheme::Explicit);
        assert!(matches!(r, Err(Error::Stability { .. })));
    }

    #[test]
    fn regularized_keeps_constants_and_ramp_interior() {
        let g = Grid::new(vec![32], 1.0 / 32.0, vec![0.0]).unwrap();
        let c = vec![0.3; 32];
        let v = regularized_step(&g, &c, 0.01, 1e-3, RegularizedScheme::SemiImplicit).unwrap();
        assert!(v.iter().all(|&x| (x - 0.3).abs() < 1e-12));
        let ramp: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
        // The no-flux ends move; the disturbance decays geometrically inwards.
        let v = regularized_step(&g, &ramp, 1e-4, 1e-3, RegularizedScheme::SemiImplicit).unwrap();
        assert!(v[0] > ramp[0]);
        for i in 8..24 {
            assert!((v[i] - ramp[i]).abs() < 1e-8, "{i}: {}", v[i] - ramp[i]);
        }
    }

    #[test]
    fn dual_file_round_trip() {
        let g = Grid::new(vec![3, 2], 0.5, vec![0.0, 0.0]).unwrap();
        let data: Vec<f64> = (0..24).map(|i| (i as f64 - 12.0) / 20.0).collect();
        let z = DualField::new(g, vec![0.0, 1.0], data).unwrap();
        let bytes = z.to_bytes();
        assert_eq!(&bytes[..4], b"TVZ1");
        assert_eq!(DualField::from_bytes(&bytes).unwrap(), z);
        assert!(crate::grid::SpaceTimeField::from_bytes(&bytes).is_err());
    }
}
