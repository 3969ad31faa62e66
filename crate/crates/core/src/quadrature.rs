//! Time quadrature on the piecewise-linear interpolant of slice samples.

use crate::error::{Error, Result};

/// Slices `lo..=hi` whose span covers the closed window `[a, b]`.
#[derive(Clone, Copy, Debug)]
pub struct Window {
    pub lo: usize,
    pub hi: usize,
    pub a: f64,
    pub b: f64,
}

impl Window {
    /// Smallest run of stamps with `times[lo] <= a` and `times[hi] >= b`.
    pub fn cover(times: &[f64], a: f64, b: f64) -> Result<Self> {
        let tol = 1e-10 * a.abs().max(b.abs()).max(1.0);
        let lo = times.iter().rposition(|&t| t <= a + tol);
        let hi = times.iter().position(|&t| t >= b - tol);
        match (lo, hi) {
            (Some(lo), Some(hi)) if lo <= hi => Ok(Self { lo, hi, a, b }),
            (Some(lo), Some(hi)) if lo == hi + 1 && times[lo] - times[hi] <= tol => Ok(Self { lo: hi, hi: lo, a, b }),
            _ => {
                let mut missing = Vec::new();
                if lo.is_none() {
                    missing.push(format!("t <= {a}"));
                }
                if hi.is_none() {
                    missing.push(format!("t >= {b}"));
                }
                Err(Error::MissingTimes(format!(
                    "window [{a}, {b}] not covered by stamps [{}, {}]; need {}",
                    times.first().copied().unwrap_or(f64::NAN),
                    times.last().copied().unwrap_or(f64::NAN),
                    missing.join(" and ")
                )))
            }
        }
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }

    /// `int_a^b g(t) s(t) dt` where `s` interpolates `vals` (one per slice of
    /// the window) linearly and `g` is smooth between the listed breakpoints.
    /// Two-point Gauss on each piece is exact when `g` is piecewise linear.
    pub fn integrate_weighted(&self, times: &[f64], vals: &[f64], g: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
        debug_assert_eq!(vals.len(), self.hi - self.lo + 1);
        if self.b <= self.a {
            return 0.0;
        }
        let mut cuts: Vec<f64> = vec![self.a, self.b];
        cuts.extend(
            times[self.lo..=self.hi]
                .iter()
                .copied()
                .filter(|&t| t > self.a && t < self.b),
        );
        cuts.extend(breaks.iter().copied().filter(|&t| t > self.a && t < self.b));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let off = 0.5 / 3f64.sqrt();
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let (l, r) = (w[0], w[1]);
            let len = r - l;
            if len <= 0.0 {
                continue;
            }
            let mid = 0.5 * (l + r);
            for t in [mid - off * len, mid + off * len] {
                acc += 0.5 * len * g(t) * self.interpolate(times, vals, t);
            }
        }
        acc
    }

    pub fn integrate(&self, times: &[f64], vals: &[f64]) -> f64 {
        self.integrate_weighted(times, vals, |_| 1.0, &[])
    }

    /// Linear interpolation of the window samples at `t`.
    pub fn interpolate(&self, times: &[f64], vals: &[f64], t: f64) -> f64 {
        if self.lo == self.hi {
            return vals[0];
        }
        let ts = &times[self.lo..=self.hi];
        let j = match ts.iter().position(|&s| s >= t) {
            Some(0) => 1,
            Some(j) => j,
            None => ts.len() - 1,
        };
        let (t0, t1) = (ts[j - 1], ts[j]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        vals[j - 1] * (1.0 - w) + vals[j] * w
    }
}

/// Composite Gauss–Legendre rule (5 nodes per panel) on `[a, b]`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
        0.236_926_885_056_189_08,
    ];
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for q in 0..5 {
            acc += W[q] * f(c + 0.5 * h * X[q]);
        }
    }
    acc * 0.5 * h
}
