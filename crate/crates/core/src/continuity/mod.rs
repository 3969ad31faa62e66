//! Continuity diagnostics: the scaled space-time variation indicator, the
//! necessary-direction estimate, the oscillation cascade and the sup bound.

mod degiorgi;

pub use degiorgi::{
    degiorgi_lemma_check, degiorgi_nu, expansion_check, expansion_constants, iterate_yn, DeGiorgiConstants,
    ExpansionConstants, ExpansionReport, LemmaReport, Verdict, YnVerdict,
};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{draw_rng, Sign};
use crate::error::{Error, Result};
use crate::grid::{ess_osc, unit_ball_volume, Ball, Cylinder, SpaceTimeField};
use crate::quadrature::Window;
use crate::tvmeasure::{tv_cells, tv_time_integral};
use crate::upwind::Stencil;

/// `I(rho) = rho/|Q_rho| int_{t0-rho}^{t0} ||Du||(B_rho) dt` with `|Q_rho| = |B_rho| rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCurve {
    pub point: Vec<f64>,
    pub t0: f64,
    /// `(rho, I(rho))`, rho strictly decreasing.
    pub values: Vec<(f64, f64)>,
    /// Least-squares fit of `log I = slope log rho + intercept` over positive entries.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

impl IndicatorCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,indicator,log_rho,log_indicator\n");
        for &(r, i) in &self.values {
            let li = if i > 0.0 { format!("{}", i.ln()) } else { String::new() };
            s.push_str(&format!("{r},{i},{},{li}\n", r.ln()));
        }
        s
    }

    /// Whether the values decrease along the ladder (largest rho first).
    pub fn decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1].1 < w[0].1)
    }

    /// Refits the slope over `rho in [lo, hi]`.
    pub fn fit_range(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let pts: Vec<(f64, f64)> = self
            .values
            .iter()
            .filter(|&&(r, i)| i > 0.0 && r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12))
            .map(|&(r, i)| (r.ln(), i.ln()))
            .collect();
        least_squares(&pts)
    }
}

fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Default ladder `rho0 2^{-j}` down to the floor `rho >= 8h`.
pub fn rho_ladder(rho0: f64, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = rho0;
    while r >= 8.0 * h * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

pub fn indicator(field: &SpaceTimeField, point: &[f64], t0: f64, rhos: &[f64]) -> Result<IndicatorCurve> {
    if rhos.is_empty() {
        return Err(Error::InvalidInput("indicator needs at least one radius".into()));
    }
    if rhos.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput(format!(
            "radii must be strictly decreasing: {rhos:?}"
        )));
    }
    let n = field.dim();
    let values = rhos
        .par_iter()
        .map(|&rho| {
            let cyl = Cylinder::backward(point.to_vec(), t0, rho, 1.0)?;
            let integral = tv_time_integral(field, &cyl)?;
            Ok((rho, integral / (unit_ball_volume(n) * rho.powi(n as i32))))
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = values
        .iter()
        .filter(|v| v.1 > 0.0)
        .map(|&(r, i)| (r.ln(), i.ln()))
        .collect();
    let fit = least_squares(&pts);
    Ok(IndicatorCurve {
        point: point.to_vec(),
        t0,
        values,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NecessaryBound {
    pub lhs: f64,
    pub rhs: f64,
    /// Value subtracted so that the sample at the point vanishes.
    pub offset: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl NecessaryBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Compares `rho/|Q_rho| int_{t0-2rho}^{t0} ||D(u zeta)||(B_{2rho}) dt` with
/// `2^{N+1} gamma` times the mean of `|u| + u^2` over `Q_{2rho}`, after
/// subtracting the sampled value at `(point, t0)`.
///
/// The cutoff is `zeta = min(zeta_1(x), zeta_2(t))`, each piece rising from 0
/// to 1 over a quarter of the cylinder with slope `2/rho`, so
/// `|D zeta| + zeta_t <= 2/rho` everywhere.
pub fn necessary_bound_check(
    field: &SpaceTimeField,
    point: &[f64],
    t0: f64,
    rho: f64,
    gamma: f64,
) -> Result<NecessaryBound> {
    let grid = field.grid();
    let n = grid.dim();
    let m0 = field
        .time_index(t0)
        .ok_or_else(|| Error::MissingTimes(format!("need a stamp at t0 = {t0}")))?;
    let c0 = grid
        .nearest_cell(point)
        .ok_or_else(|| Error::Geometry(format!("point {point:?} is outside the grid")))?;
    let offset = field.slice(m0)[c0];
    let big = Ball::new(point.to_vec(), 2.0 * rho)?;
    let cells = grid.ball_cells(&big, 1)?;
    let (a, b) = (t0 - 2.0 * rho, t0);
    let win = Window::cover(field.times(), a, b)?;
    let st = Stencil::new(grid);
    let vol = grid.cell_volume();
    let times = field.times();
    let mut x = vec![0.0; n];
    let zeta1: Vec<(usize, f64)> = cells
        .iter()
        .map(|&i| {
            grid.center_into(i, &mut x);
            let d = x.iter().zip(point).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            (i, ((2.0 * rho - d) / (0.5 * rho)).clamp(0.0, 1.0))
        })
        .collect();
    let zeta2 = |t: f64| ((t - a) / (0.5 * rho)).clamp(0.0, 1.0);
    let mut w = vec![0.0; grid.cells()];
    let mut tv = Vec::new();
    let mut mass = Vec::new();
    for m in win.indices() {
        let u = field.slice(m);
        let z2 = zeta2(times[m]);
        let mut acc = 0.0;
        for &(i, z1) in &zeta1 {
            let v = u[i] - offset;
            w[i] = v * z1.min(z2);
            acc += v.abs() + v * v;
        }
        tv.push(tv_cells(&st, &w, &cells));
        mass.push(acc * vol);
    }
    let q_rho = unit_ball_volume(n) * rho.powi(n as i32) * rho;
    let q_2rho = unit_ball_volume(n) * (2.0 * rho).powi(n as i32) * 2.0 * rho;
    let lhs = rho / q_rho * win.integrate(times, &tv);
    let rhs = (n as f64 + 1.0).exp2() * gamma * win.integrate(times, &mass) / q_2rho;
    Ok(NecessaryBound {
        lhs,
        rhs,
        offset,
        rho,
        gamma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantsMode {
    Paper,
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeStage {
    pub rho: f64,
    pub omega: f64,
    /// `omega_n <= eta^n omega_0`.
    pub decayed: bool,
}

/// Radii `rho_{n+1} = xi omega_n rho_n / 2` with the oscillation over
/// `Q_{rho_n} = B_{rho_n} x (t0 - rho_n, t0]` measured at each stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeState {
    pub mode: ConstantsMode,
    pub xi: f64,
    pub eta: f64,
    /// `u` was divided by this factor so that `omega_0 <= 1`.
    pub scale: f64,
    pub stages: Vec<CascadeStage>,
    /// First stage whose oscillation exceeded `eta^n omega_0`.
    pub failed_stage: Option<usize>,
    /// Why the cascade stopped.
    pub stop: String,
}

impl CascadeState {
    /// Stages after the first that passed the decay test before any failure.
    pub fn passed_stages(&self) -> usize {
        match self.failed_stage {
            Some(s) => s - 1,
            None => self.stages.len().saturating_sub(1),
        }
    }

    pub fn passed(&self) -> bool {
        self.failed_stage.is_none()
    }
}

/// `Paper` mode derives `xi` from `delta` (`2 xi = delta / 64`); `Empirical` mode uses `xi`.
pub fn oscillation_cascade(
    field: &SpaceTimeField,
    point: &[f64],
    t0: f64,
    rho0: f64,
    mode: ConstantsMode,
    xi: f64,
    constants: &ExpansionConstants,
) -> Result<CascadeState> {
    let xi = match mode {
        ConstantsMode::Paper => constants.cascade_xi(),
        ConstantsMode::Empirical => xi,
    };
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidInput(format!("xi must lie in (0, 1), got {xi}")));
    }
    let eta = 1.0 - 0.5 * xi;
    let grid = field.grid();
    let h = grid.spacing();
    grid.ball_cells(&Ball::new(point.to_vec(), rho0)?, 1)?;
    if t0 - rho0 < field.times()[0] - 1e-12 * t0.abs().max(1.0) {
        return Err(Error::Geometry(format!(
            "cylinder Q_rho0 starts at {} before the first stamp {}",
            t0 - rho0,
            field.times()[0]
        )));
    }
    let osc = |rho: f64| ess_osc(field, &Cylinder::backward(point.to_vec(), t0, rho, 1.0)?);
    let omega0 = osc(rho0)?.omega;
    let scale = omega0.max(1.0);
    let mut stages = vec![CascadeStage {
        rho: rho0,
        omega: omega0 / scale,
        decayed: true,
    }];
    let mut failed_stage = None;
    let mut rho = rho0;
    let stop;
    loop {
        let prev = stages.last().expect("cascade has a first stage").omega;
        let next = 0.5 * xi * prev * rho;
        if prev == 0.0 {
            stop = "oscillation vanished".to_string();
            break;
        }
        if next < 4.0 * h {
            stop = format!("next radius {next:e} is below 4h = {:e}", 4.0 * h);
            break;
        }
        rho = next;
        let n = stages.len();
        let omega = osc(rho)?.omega / scale;
        let decayed = omega <= eta.powi(n as i32) * stages[0].omega * (1.0 + 1e-12);
        stages.push(CascadeStage { rho, omega, decayed });
        if !decayed {
            failed_stage = Some(n);
            stop = format!("stage {n}: omega {omega} exceeds eta^n omega_0");
            break;
        }
    }
    Ok(CascadeState {
        mode,
        xi,
        eta,
        scale,
        stages,
        failed_stage,
        stop,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupBound {
    pub measured_sup: f64,
    pub bound_shape: f64,
    pub ratio: f64,
}

/// `sup_{B_rho x [s,t]} u_±` against
/// `(rho/(t-s))^{N/(r-N)} [ (rho^N (t-s))^{-1} int_{2s-t}^t int_{B_{4rho}} u_±^r ]^{1/(r-N)} + (t-s)/rho`.
pub fn sup_bound_check(
    field: &SpaceTimeField,
    y: &[f64],
    s: f64,
    t: f64,
    rho: f64,
    r: f64,
    sign: Sign,
) -> Result<SupBound> {
    let n = field.dim() as f64;
    if !(r > n) {
        return Err(Error::InvalidInput(format!("r must exceed N = {n}, got {r}")));
    }
    if !(t > s) {
        return Err(Error::InvalidInput(format!("need s < t, got s = {s}, t = {t}")));
    }
    let grid = field.grid();
    let part = |v: f64| match sign {
        Sign::Plus => v.max(0.0),
        Sign::Minus => (-v).max(0.0),
    };
    let span = t - s;
    let big = grid.ball_cells(&Ball::new(y.to_vec(), 4.0 * rho)?, 1)?;
    let times = field.times();
    let first = times[0];
    let last = times[times.len() - 1];
    let tol = 1e-12 * t.abs().max(1.0);
    if s - span < first - tol || s + span > last + tol {
        return Err(Error::Geometry(format!(
            "time window [{}, {}] leaves the stamps [{first}, {last}]",
            s - span,
            s + span
        )));
    }
    let small = grid.ball_cells(&Ball::new(y.to_vec(), rho)?, 1)?;
    let mut measured_sup = 0.0f64;
    for m in 0..field.slice_count() {
        if times[m] >= s - tol && times[m] <= t + tol {
            let u = field.slice(m);
            for &i in &small {
                measured_sup = measured_sup.max(part(u[i]));
            }
        }
    }
    let win = Window::cover(times, s - span, t)?;
    let vol = grid.cell_volume();
    let vals: Vec<f64> = win
        .indices()
        .map(|m| {
            let u = field.slice(m);
            big.iter().map(|&i| part(u[i]).powf(r)).sum::<f64>() * vol
        })
        .collect();
    let integral = win.integrate(times, &vals);
    let e = 1.0 / (r - n);
    let bound_shape = (rho / span).powf(n * e) * (integral / (rho.powf(n) * span)).powf(e) + span / rho;
    Ok(SupBound {
        measured_sup,
        bound_shape,
        ratio: measured_sup / bound_shape,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupBoundDraw {
    pub y: Vec<f64>,
    pub s: f64,
    pub t: f64,
    pub rho: f64,
    pub sign: Sign,
    pub result: SupBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupBoundSuite {
    pub seed: u64,
    pub r: f64,
    pub draws: Vec<SupBoundDraw>,
    /// Largest ratio over the corpus: the empirical constant.
    pub gamma_fit: f64,
}

/// Seeded corpus of cylinders with radius in `rho_range` (physical units, so
/// the same seed gives the same cylinders on refined grids).
pub fn sup_bound_suite(
    field: &SpaceTimeField,
    r: f64,
    rho_range: (f64, f64),
    seed: u64,
    count: usize,
) -> Result<SupBoundSuite> {
    let bx = field.grid().bounding_box();
    let times = field.times().to_vec();
    let (first, last) = (times[0], times[times.len() - 1]);
    let h = field.grid().spacing();
    let draws = (0..count)
        .into_par_iter()
        .map(|d| {
            let mut rng = draw_rng(seed, d as u64);
            let rho = rng.gen_range(rho_range.0..=rho_range.1);
            let y: Vec<f64> = (0..field.dim())
                .map(|k| {
                    let lo = bx.lo[k] + 4.0 * rho + 2.0 * h;
                    let hi = bx.hi[k] - 4.0 * rho - 2.0 * h;
                    if lo < hi {
                        Ok(rng.gen_range(lo..=hi))
                    } else {
                        Err(Error::Geometry(format!("B_4rho with rho = {rho} does not fit the box")))
                    }
                })
                .collect::<Result<_>>()?;
            let total = last - first;
            let span = rng.gen_range(0.1 * total..=0.5 * total);
            let s = rng.gen_range(first + span..=last - span);
            let sign = if rng.gen_bool(0.5) { Sign::Plus } else { Sign::Minus };
            let result = sup_bound_check(field, &y, s, s + span, rho, r, sign)?;
            Ok(SupBoundDraw {
                y,
                s,
                t: s + span,
                rho,
                sign,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gamma_fit = draws.iter().map(|d| d.result.ratio).fold(0.0, f64::max);
    Ok(SupBoundSuite {
        seed,
        r,
        draws,
        gamma_fit,
    })
}
