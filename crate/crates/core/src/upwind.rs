//! Upwind difference operator behind the discrete total variation.
//!
//! For each cell `i` and axis `k` the operator `K` returns the pair
//! `((u_i - u_{i+e_k})/h, (u_i - u_{i-e_k})/h)`; differences across the grid
//! boundary are omitted, which is the no-flux convention. The cell density of
//! the total variation is the Euclidean norm of the positive parts of these
//! `2N` numbers, and its dual ball is `{p >= 0, |p| <= 1}` cellwise.
//!
//! Flux form: with `z_k(i) = p_b,k(i+e_k) - p_f,k(i)` on the face between
//! cells `i` and `i+e_k`, one has `K^T p = -div z`, where `div` is the backward
//! divergence with zero flux through the box boundary.

use rayon::prelude::*;

use crate::grid::Grid;

/// Cell count below which sweeps run sequentially.
const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub dim: usize,
    pub n: [usize; 3],
    pub stride: [usize; 3],
    pub h: f64,
    pub cells: usize,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        let dim = grid.dim();
        let mut n = [1; 3];
        n[..dim].copy_from_slice(grid.shape());
        let stride = [n[1] * n[2], n[2], 1];
        Self {
            dim,
            n,
            stride,
            h: grid.spacing(),
            cells: grid.cells(),
        }
    }

    /// Components of `K u` per cell.
    pub fn comps(&self) -> usize {
        2 * self.dim
    }

    /// Upper bound for `||K||^2`.
    pub fn norm_sq_bound(&self) -> f64 {
        8.0 * self.dim as f64 / (self.h * self.h)
    }

    #[inline]
    fn coords(&self, i: usize) -> [usize; 3] {
        [i / self.stride[0], (i / self.stride[1]) % self.n[1], i % self.n[2]]
    }

    /// The `2N` upwind differences of cell `i` (already divided by `h`).
    #[inline]
    pub fn diffs(&self, u: &[f64], i: usize, out: &mut [f64]) {
        let c = self.coords(i);
        let inv = 1.0 / self.h;
        for k in 0..self.dim {
            let s = self.stride[k];
            out[2 * k] = if c[k] + 1 < self.n[k] {
                (u[i] - u[i + s]) * inv
            } else {
                0.0
            };
            out[2 * k + 1] = if c[k] > 0 { (u[i] - u[i - s]) * inv } else { 0.0 };
        }
    }

    /// Range `[min, max]` of `u` over cell `i` and its axis neighbours.
    #[inline]
    pub fn local_range(&self, u: &[f64], i: usize) -> (f64, f64) {
        let c = self.coords(i);
        let (mut lo, mut hi) = (u[i], u[i]);
        for k in 0..self.dim {
            let s = self.stride[k];
            if c[k] + 1 < self.n[k] {
                lo = lo.min(u[i + s]);
                hi = hi.max(u[i + s]);
            }
            if c[k] > 0 {
                lo = lo.min(u[i - s]);
                hi = hi.max(u[i - s]);
            }
        }
        (lo, hi)
    }

    /// Total-variation density `|(K u)_i^+|` of cell `i`.
    #[inline]
    pub fn density(&self, u: &[f64], i: usize) -> f64 {
        let mut d = [0.0; 6];
        self.diffs(u, i, &mut d);
        d[..self.comps()]
            .iter()
            .map(|&v| if v > 0.0 { v * v } else { 0.0 })
            .sum::<f64>()
            .sqrt()
    }

    /// `out = K u`, `2N` values per cell.
    #[cfg(test)]
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let c = self.comps();
        let plane = self.stride[0];
        let body = |(a, o): (usize, &mut [f64])| {
            let mut i = a * plane;
            for b in 0..self.n[1] {
                for cc in 0..self.n[2] {
                    self.diffs_at(u, i, [a, b, cc], &mut o[(i - a * plane) * c..(i - a * plane + 1) * c]);
                    i += 1;
                }
            }
        };
        if self.cells >= PAR_THRESHOLD {
            out.par_chunks_mut(plane * c).enumerate().for_each(body);
        } else {
            out.chunks_mut(plane * c).enumerate().for_each(body);
        }
    }

    #[inline(always)]
    fn diffs_at(&self, u: &[f64], i: usize, x: [usize; 3], out: &mut [f64]) {
        let inv = 1.0 / self.h;
        let ui = u[i];
        for k in 0..self.dim {
            let s = self.stride[k];
            out[2 * k] = if x[k] + 1 < self.n[k] {
                (ui - u[i + s]) * inv
            } else {
                0.0
            };
            out[2 * k + 1] = if x[k] > 0 { (ui - u[i - s]) * inv } else { 0.0 };
        }
    }

    /// `p <- project(p + sigma K v)` cell by cell.
    pub fn ascend_project(&self, v: &[f64], p: &mut [f64], sigma: f64) {
        match self.dim {
            1 => self.ascend_d::<1>(v, p, sigma),
            2 => self.ascend_d::<2>(v, p, sigma),
            _ => self.ascend_d::<3>(v, p, sigma),
        }
    }

    fn ascend_d<const D: usize>(&self, v: &[f64], p: &mut [f64], sigma: f64) {
        let plane = self.stride[0];
        let (n, stride) = (self.n, self.stride);
        let scale = sigma / self.h;
        let body = |(a, pa): (usize, &mut [f64])| {
            let mut i = a * plane;
            let mut j = 0;
            for b in 0..n[1] {
                for cc in 0..n[2] {
                    let x = [a, b, cc];
                    let vi = v[i];
                    let q = &mut pa[j..j + 2 * D];
                    let mut ss = 0.0;
                    for k in 0..D {
                        let s = stride[k];
                        let f = if x[k] + 1 < n[k] {
                            q[2 * k] + scale * (vi - v[i + s])
                        } else {
                            0.0
                        };
                        let g = if x[k] > 0 {
                            q[2 * k + 1] + scale * (vi - v[i - s])
                        } else {
                            0.0
                        };
                        let (f, g) = (f.max(0.0), g.max(0.0));
                        q[2 * k] = f;
                        q[2 * k + 1] = g;
                        ss += f * f + g * g;
                    }
                    if ss > 1.0 {
                        let r = 1.0 / ss.sqrt();
                        q.iter_mut().for_each(|t| *t *= r);
                    }
                    i += 1;
                    j += 2 * D;
                }
            }
        };
        if self.cells >= PAR_THRESHOLD {
            p.par_chunks_mut(plane * 2 * D).enumerate().for_each(body);
        } else {
            p.chunks_mut(plane * 2 * D).enumerate().for_each(body);
        }
    }

    /// `out = K^T p`.
    pub fn apply_adjoint(&self, p: &[f64], out: &mut [f64]) {
        match self.dim {
            1 => self.adjoint_d::<1>(p, out),
            2 => self.adjoint_d::<2>(p, out),
            _ => self.adjoint_d::<3>(p, out),
        }
    }

    fn adjoint_d<const D: usize>(&self, p: &[f64], out: &mut [f64]) {
        let c = 2 * D;
        let inv = 1.0 / self.h;
        let plane = self.stride[0];
        let (n, stride) = (self.n, self.stride);
        let body = |(a, o): (usize, &mut [f64])| {
            let mut i = a * plane;
            let mut j = 0;
            for b in 0..n[1] {
                for cc in 0..n[2] {
                    let x = [a, b, cc];
                    let pi = &p[i * c..i * c + c];
                    let mut acc = 0.0;
                    for k in 0..D {
                        let s = stride[k];
                        if x[k] + 1 < n[k] {
                            acc += pi[2 * k] - p[(i + s) * c + 2 * k + 1];
                        }
                        if x[k] > 0 {
                            acc -= p[(i - s) * c + 2 * k] - pi[2 * k + 1];
                        }
                    }
                    o[j] = acc * inv;
                    i += 1;
                    j += 1;
                }
            }
        };
        if self.cells >= PAR_THRESHOLD {
            out.par_chunks_mut(plane).enumerate().for_each(body);
        } else {
            out.chunks_mut(plane).enumerate().for_each(body);
        }
    }

    /// `sum_i |(K u)_i^+|` over every cell.
    pub fn density_sum(&self, u: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut d = [0.0; 6];
        let c = self.comps();
        let mut i = 0;
        for a in 0..self.n[0] {
            for b in 0..self.n[1] {
                for cc in 0..self.n[2] {
                    self.diffs_at(u, i, [a, b, cc], &mut d[..c]);
                    acc += d[..c]
                        .iter()
                        .map(|&v| if v > 0.0 { v * v } else { 0.0 })
                        .sum::<f64>()
                        .sqrt();
                    i += 1;
                }
            }
        }
        acc
    }

    /// Face fluxes `z` (N per cell) of a cellwise dual `p`.
    pub fn flux(&self, p: &[f64]) -> Vec<f64> {
        let c = self.comps();
        let mut z = vec![0.0; self.cells * self.dim];
        for i in 0..self.cells {
            let x = self.coords(i);
            for k in 0..self.dim {
                if x[k] + 1 < self.n[k] {
                    let s = self.stride[k];
                    z[i * self.dim + k] = p[(i + s) * c + 2 * k + 1] - p[i * c + 2 * k];
                }
            }
        }
        z
    }

    /// Backward divergence of a face flux, zero flux through the lower boundary.
    pub fn divergence(&self, z: &[f64], out: &mut [f64]) {
        let inv = 1.0 / self.h;
        for (i, o) in out.iter_mut().enumerate() {
            let x = self.coords(i);
            let mut acc = 0.0;
            for k in 0..self.dim {
                acc += z[i * self.dim + k];
                if x[k] > 0 {
                    acc -= z[(i - self.stride[k]) * self.dim + k];
                }
            }
            *o = acc * inv;
        }
    }

    /// Whether cell `i` is at least `m` cells away from every grid face.
    pub fn interior(&self, i: usize, m: usize) -> bool {
        let x = self.coords(i);
        (0..self.dim).all(|k| x[k] >= m && x[k] + m < self.n[k])
    }

    /// Forward difference `(v_{i+e_k} - v_i)/h`, zero at the upper face.
    #[inline]
    pub fn forward_diff(&self, v: &[f64], i: usize, k: usize) -> f64 {
        let x = self.coords(i);
        if x[k] + 1 < self.n[k] {
            (v[i + self.stride[k]] - v[i]) / self.h
        } else {
            0.0
        }
    }
}

/// Projection onto `{p >= 0, |p| <= 1}` of one cell's dual vector.
#[inline]
pub(crate) fn project_cell(p: &mut [f64]) {
    let mut s = 0.0;
    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
        s += *v * *v;
    }
    if s > 1.0 {
        let r = 1.0 / s.sqrt();
        p.iter_mut().for_each(|v| *v *= r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    #[test]
    fn adjoint_identity_and_flux_form() {
        for shape in [vec![7], vec![5, 6], vec![3, 4, 5]] {
            let g = Grid::new(shape.clone(), 0.3, vec![0.0; shape.len()]).unwrap();
            let st = Stencil::new(&g);
            let mut seed = 11;
            let u: Vec<f64> = (0..st.cells).map(|_| lcg(&mut seed)).collect();
            let p: Vec<f64> = (0..st.cells * st.comps()).map(|_| lcg(&mut seed)).collect();
            let mut ku = vec![0.0; p.len()];
            st.apply(&u, &mut ku);
            let mut ktp = vec![0.0; u.len()];
            st.apply_adjoint(&p, &mut ktp);
            let lhs: f64 = ku.iter().zip(&p).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(&ktp).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12, "{shape:?}");
            let z = st.flux(&p);
            let mut div = vec![0.0; u.len()];
            st.divergence(&z, &mut div);
            for i in 0..u.len() {
                assert!((div[i] + ktp[i]).abs() < 1e-12);
            }
            let sq: f64 = ku.iter().map(|v| v * v).sum();
            let un: f64 = u.iter().map(|v| v * v).sum();
            assert!(sq <= st.norm_sq_bound() * un);
        }
    }

    #[test]
    fn projection_lands_in_dual_ball() {
        let mut p = [3.0, -1.0, 4.0, 0.0];
        project_cell(&mut p);
        assert_eq!(p[1], 0.0);
        assert!((p.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] - 0.6).abs() < 1e-15);
    }
}
