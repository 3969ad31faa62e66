//! Discrete total variation of slices over balls, its time integral, level
//! sets, and the embedding and isoperimetric ratios.
//!
//! The cell density is the upwind isotropic gradient norm
//! `sqrt(sum_k (u_i - u_{i+e_k})_+^2 + (u_i - u_{i-e_k})_+^2) / h`. Unlike the
//! plain forward-difference norm it measures jumps of every orientation with
//! a small bias, so the total variation of a digitised disc converges to its
//! perimeter. Balls must keep a one-cell margin to the grid boundary so every
//! in-ball cell has all of its neighbours.

use serde::{Deserialize, Serialize};

use crate::certify::Cutoff;
use crate::error::{Error, Result};
use crate::grid::{Ball, Cylinder, Grid, SpaceTimeField};
use crate::quadrature::Window;
use crate::upwind::{project_cell, Stencil};

/// Projected-ascent iterations for the dual lower bound.
pub const DUAL_ITERATIONS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TVSlice {
    pub primal: f64,
    pub dual_lower: f64,
    pub gap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Below,
    Above,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub level: f64,
    pub direction: Direction,
    pub measure: f64,
}

/// `h^N * sum_{i in cells} density_i(u)`.
pub(crate) fn tv_cells(st: &Stencil, u: &[f64], cells: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &i in cells {
        acc += st.density(u, i);
    }
    acc * st.h.powi(st.dim as i32)
}

fn slice_index(field: &SpaceTimeField, m: usize) -> Result<()> {
    if m >= field.slice_count() {
        return Err(Error::InvalidInput(format!(
            "time index {m} out of range (field has {} slices)",
            field.slice_count()
        )));
    }
    Ok(())
}

/// Primal total variation of slice `m` over `ball`.
pub fn tv_primal(field: &SpaceTimeField, m: usize, ball: &Ball) -> Result<f64> {
    slice_index(field, m)?;
    let cells = field.grid().ball_cells(ball, 1)?;
    Ok(tv_cells(&Stencil::new(field.grid()), field.slice(m), &cells))
}

/// Primal value and a certified dual lower bound for slice `m` over `ball`.
///
/// The dual field lives on the in-ball cells, satisfies the cellwise dual
/// constraint, and is obtained by projected ascent with step
/// `0.9 h / (2 sqrt N)`. Its value is evaluated through the adjoint, i.e. as
/// `h^N sum_j u_j (K^T p)_j`, the discrete `-int u div phi`.
pub fn tv_slice(field: &SpaceTimeField, m: usize, ball: &Ball) -> Result<TVSlice> {
    slice_index(field, m)?;
    let grid = field.grid();
    let cells = grid.ball_cells(ball, 1)?;
    let st = Stencil::new(grid);
    let u = field.slice(m);
    let primal = tv_cells(&st, u, &cells);
    let dual_lower = dual_bound(&st, u, &cells);
    Ok(TVSlice {
        primal,
        dual_lower,
        gap: primal - dual_lower,
    })
}

fn dual_bound(st: &Stencil, u: &[f64], cells: &[usize]) -> f64 {
    let c = st.comps();
    let step = 0.9 * st.h / (2.0 * (st.dim as f64).sqrt());
    let mut grad = vec![0.0; cells.len() * c];
    for (j, &i) in cells.iter().enumerate() {
        st.diffs(u, i, &mut grad[j * c..(j + 1) * c]);
    }
    let mut q = vec![0.0; cells.len() * c];
    for _ in 0..DUAL_ITERATIONS {
        for (qc, gc) in q.chunks_mut(c).zip(grad.chunks(c)) {
            for (a, b) in qc.iter_mut().zip(gc) {
                *a += step * b;
            }
            project_cell(qc);
        }
    }
    let mut p = vec![0.0; st.cells * c];
    for (j, &i) in cells.iter().enumerate() {
        p[i * c..(i + 1) * c].copy_from_slice(&q[j * c..(j + 1) * c]);
    }
    let mut ktp = vec![0.0; st.cells];
    st.apply_adjoint(&p, &mut ktp);
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(&ktp) {
        acc += a * b;
    }
    acc * st.h.powi(st.dim as i32)
}

/// Trapezoidal integral of the slice total variation over the cylinder's
/// time window, using the linear interpolant between stamps.
pub fn tv_time_integral(field: &SpaceTimeField, cyl: &Cylinder) -> Result<f64> {
    let (a, b) = cyl.interval();
    let win = Window::cover(field.times(), a, b)?;
    let cells = field.grid().ball_cells(&cyl.ball(), 1)?;
    let st = Stencil::new(field.grid());
    let vals: Vec<f64> = win.indices().map(|m| tv_cells(&st, field.slice(m), &cells)).collect();
    Ok(win.integrate(field.times(), &vals))
}

/// `h^N` times the number of in-ball cells strictly below or above `k`.
pub fn level_set_measure(
    field: &SpaceTimeField,
    m: usize,
    ball: &Ball,
    k: f64,
    direction: Direction,
) -> Result<LevelSet> {
    slice_index(field, m)?;
    let cells = field.grid().ball_cells(ball, 1)?;
    let u = field.slice(m);
    let count = cells
        .iter()
        .filter(|&&i| match direction {
            Direction::Below => u[i] < k,
            Direction::Above => u[i] > k,
        })
        .count();
    Ok(LevelSet {
        level: k,
        direction,
        measure: count as f64 * field.grid().cell_volume(),
    })
}

/// `int int (u zeta)^{(N+2)/N} / [ int TV(u zeta) dt * (sup_t int (u zeta)^2)^{1/N} ]`.
pub fn embedding_ratio(field: &SpaceTimeField, cutoff: &Cutoff, cyl: &Cylinder) -> Result<f64> {
    let grid = field.grid();
    cutoff.check_grid(grid)?;
    let (a, b) = cyl.interval();
    let win = Window::cover(field.times(), a, b)?;
    let cells = grid.ball_cells(&cyl.ball(), 1)?;
    let st = Stencil::new(grid);
    let n = grid.dim() as f64;
    let q = (n + 2.0) / n;
    let vol = grid.cell_volume();
    let times = field.times();
    let mut pow_int = Vec::new();
    let mut tv = Vec::new();
    let mut sup_l2 = 0.0f64;
    let mut w = vec![0.0; grid.cells()];
    for m in win.indices() {
        let u = field.slice(m);
        let z2 = cutoff.temporal_value(times[m]);
        w.iter_mut().for_each(|v| *v = 0.0);
        let (mut p, mut l2) = (0.0, 0.0);
        for &i in &cells {
            if u[i] < 0.0 {
                return Err(Error::Precondition(format!(
                    "embedding ratio needs a non-negative field; found {} at x = {:?}, t = {}",
                    u[i],
                    grid.center(i),
                    times[m]
                )));
            }
            let v = u[i] * cutoff.spatial()[i] * z2;
            w[i] = v;
            p += v.powf(q);
            l2 += v * v;
        }
        pow_int.push(p * vol);
        tv.push(tv_cells(&st, &w, &cells));
        if times[m] >= a - 1e-12 && times[m] <= b + 1e-12 {
            sup_l2 = sup_l2.max(l2 * vol);
        }
    }
    let num = win.integrate(times, &pow_int);
    let den = win.integrate(times, &tv) * sup_l2.powf(1.0 / n);
    if num == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// `(l - k) |[u < k] ∩ B| / (rho * TV(u; band ∩ B))`, where a cell belongs to
/// the transition band when the range of `u` over its stencil meets `(k, l)`.
pub fn isoperimetric_ratio(field: &SpaceTimeField, m: usize, ball: &Ball, k: f64, l: f64) -> Result<f64> {
    slice_index(field, m)?;
    if !(l > k) {
        return Err(Error::Precondition(format!("need l > k, got k = {k}, l = {l}")));
    }
    let grid = field.grid();
    let cells = grid.ball_cells(ball, 1)?;
    let u = field.slice(m);
    let above = cells.iter().filter(|&&i| u[i] > l).count();
    if 4 * above < cells.len() {
        return Err(Error::Precondition(format!(
            "upper set [u > {l}] covers {above} of {} ball cells, less than a quarter",
            cells.len()
        )));
    }
    let below = cells.iter().filter(|&&i| u[i] < k).count();
    if below == 0 {
        return Ok(0.0);
    }
    let st = Stencil::new(grid);
    let band: Vec<usize> = cells
        .iter()
        .copied()
        .filter(|&i| {
            let (lo, hi) = st.local_range(u, i);
            lo < l && hi > k
        })
        .collect();
    let tv = tv_cells(&st, u, &band);
    let vol = grid.cell_volume();
    Ok((l - k) * below as f64 * vol / (ball.radius * tv))
}

/// Total variation of one slice over the whole grid.
pub fn tv_box(grid: &Grid, u: &[f64]) -> f64 {
    tv_box_stencil(&Stencil::new(grid), u) * grid.cell_volume()
}

/// `sum_i density_i(u)` over every cell, without the volume factor.
pub(crate) fn tv_box_stencil(st: &Stencil, u: &[f64]) -> f64 {
    st.density_sum(u)
}
