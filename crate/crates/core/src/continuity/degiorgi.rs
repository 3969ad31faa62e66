//! Critical-mass constants, the fast geometric recursion, and the measure-to-
//! pointwise and expansion-of-positivity checks.

use serde::{Deserialize, Serialize};

use crate::certify::Sign;
use crate::error::{Error, Result};
use crate::grid::{Ball, OscillationData, SpaceTimeField};
use crate::tvmeasure::{level_set_measure, Direction};

fn check_dim_gamma(n: usize, gamma: f64) -> Result<()> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidInput(format!("N must be 1, 2 or 3, got {n}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// `b = 2^{(3N+4)/N}`, `nu = gamma^{-N} b^{-N^2}`, `alpha = 1/N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiConstants {
    pub n: usize,
    pub gamma: f64,
    pub b: f64,
    pub nu: f64,
    pub alpha: f64,
    pub sign: Sign,
}

/// The same `nu` serves both truncation signs; `sign` is echoed in reports.
pub fn degiorgi_nu(n: usize, gamma: f64, sign: Sign) -> Result<DeGiorgiConstants> {
    check_dim_gamma(n, gamma)?;
    let nf = n as f64;
    let b = (((3 * n + 4) as f64) / nf).exp2();
    // b^{-N^2} = 2^{-N(3N+4)} is exact.
    let nu = gamma.powi(-(n as i32)) * (-((n * (3 * n + 4)) as f64)).exp2();
    Ok(DeGiorgiConstants {
        n,
        gamma,
        b,
        nu,
        alpha: 1.0 / nf,
        sign,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum YnVerdict {
    Converged { step: usize },
    Diverged { step: usize },
    Undecided,
}

/// Iterates `Y_{n+1} = gamma b^n Y_n^{1+1/N}` as an equality for `steps` steps.
/// Converged once `Y_n < 1e-12`, diverged once `Y_n > 1e6` or not finite;
/// the sequence stops at divergence.
pub fn iterate_yn(y0: f64, c: &DeGiorgiConstants, steps: usize) -> Result<(Vec<f64>, YnVerdict)> {
    if !(y0 >= 0.0) || !y0.is_finite() {
        return Err(Error::InvalidInput(format!(
            "Y0 must be finite and non-negative, got {y0}"
        )));
    }
    let p = 1.0 + 1.0 / c.n as f64;
    let mut seq = vec![y0];
    let mut verdict = YnVerdict::Undecided;
    let mut y = y0;
    let mut bn = 1.0;
    let check = |n: usize, y: f64, v: &mut YnVerdict| {
        if !y.is_finite() || y > 1e6 {
            *v = YnVerdict::Diverged { step: n };
            true
        } else {
            if y < 1e-12 && *v == YnVerdict::Undecided {
                *v = YnVerdict::Converged { step: n };
            }
            false
        }
    };
    if check(0, y, &mut verdict) {
        return Ok((seq, verdict));
    }
    for n in 0..steps {
        y = c.gamma * bn * y.powf(p);
        bn *= c.b;
        seq.push(y);
        if check(n + 1, y, &mut verdict) {
            break;
        }
    }
    Ok((seq, verdict))
}

/// `sigma = 1/(16N)`, `epsilon = 1/32`, `delta = 1/(2^8 gamma N)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConstants {
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl ExpansionConstants {
    pub fn paper(n: usize, gamma: f64) -> Result<Self> {
        check_dim_gamma(n, gamma)?;
        let nf = n as f64;
        Ok(Self {
            sigma: 1.0 / (16.0 * nf),
            epsilon: 1.0 / 32.0,
            delta: 1.0 / (256.0 * gamma * nf),
        })
    }

    pub fn custom(sigma: f64, epsilon: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("sigma", sigma), ("epsilon", epsilon), ("delta", delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(Self { sigma, epsilon, delta })
    }

    /// Cascade ratio with `2 xi = delta / 64`.
    pub fn cascade_xi(&self) -> f64 {
        self.delta / 128.0
    }
}

pub fn expansion_constants(n: usize, gamma: f64) -> Result<ExpansionConstants> {
    ExpansionConstants::paper(n, gamma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// Outcome of the measure-to-pointwise lemma on one intrinsic cylinder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub verdict: Verdict,
    pub reason: Option<String>,
    pub center: Vec<f64>,
    pub t0: f64,
    pub rho: f64,
    pub theta: f64,
    pub xi: f64,
    pub nu: f64,
    pub sign: Sign,
    /// Fraction of sampled points of `Q_{2rho}(theta)` in the sub/super-level set.
    pub density: f64,
    /// The pointwise bound asserted on `Q_rho(theta)`.
    pub bound: f64,
    pub checked: usize,
    pub violations: usize,
    /// Most negative `u - bound` (Minus) or `bound - u` (Plus) over violations.
    pub worst: f64,
}

fn cylinder_samples(
    field: &SpaceTimeField,
    center: &[f64],
    t0: f64,
    rho: f64,
    height: f64,
) -> Result<Vec<(usize, Vec<usize>)>> {
    let ball = Ball::new(center.to_vec(), rho)?;
    let cells = field.grid().ball_cells(&ball, 0)?;
    let ms = field.times_in(t0 - height, t0);
    if ms.is_empty() || cells.is_empty() {
        return Err(Error::Geometry(format!(
            "cylinder at {center:?}, t0 = {t0}, rho = {rho}, height = {height} holds no samples"
        )));
    }
    Ok(ms.into_iter().map(|m| (m, cells.clone())).collect())
}

/// Checks the lemma on `Q_{2rho}(theta)` with `theta = 2 xi omega` and vertex
/// `(center, t0)`. The hypothesis is measured as the fraction of sampled
/// points in `[u <= mu_- + xi omega]` (or `[u >= mu_+ - xi omega]`); when it is
/// at most `nu`, every sample of `Q_rho(theta)` must satisfy the half-way bound.
pub fn degiorgi_lemma_check(
    field: &SpaceTimeField,
    center: &[f64],
    t0: f64,
    rho: f64,
    xi: f64,
    osc: &OscillationData,
    sign: Sign,
    nu: f64,
) -> Result<LemmaReport> {
    if !(xi > 0.0 && xi <= 0.5) {
        return Err(Error::InvalidInput(format!("xi must lie in (0, 1/2], got {xi}")));
    }
    let omega = osc.omega;
    let theta = 2.0 * xi * omega;
    let mut report = LemmaReport {
        verdict: Verdict::NotApplicable,
        reason: None,
        center: center.to_vec(),
        t0,
        rho,
        theta,
        xi,
        nu,
        sign,
        density: f64::NAN,
        bound: f64::NAN,
        checked: 0,
        violations: 0,
        worst: 0.0,
    };
    if !(omega > 0.0) {
        report.reason = Some("omega = 0: no intrinsic cylinder".into());
        return Ok(report);
    }
    let outer = cylinder_samples(field, center, t0, 2.0 * rho, theta * 2.0 * rho)?;
    let first = field.times()[0];
    if t0 - theta * 2.0 * rho < first - 1e-12 {
        return Err(Error::Geometry(format!(
            "intrinsic cylinder starts at {} before the first stamp {first}",
            t0 - theta * 2.0 * rho
        )));
    }
    let (level, bound) = match sign {
        Sign::Minus => (osc.mu_minus + xi * omega, osc.mu_minus + 0.5 * xi * omega),
        Sign::Plus => (osc.mu_plus - xi * omega, osc.mu_plus - 0.5 * xi * omega),
    };
    let (mut hit, mut total) = (0usize, 0usize);
    for (m, cells) in &outer {
        let u = field.slice(*m);
        for &i in cells {
            total += 1;
            let inside = match sign {
                Sign::Minus => u[i] <= level,
                Sign::Plus => u[i] >= level,
            };
            hit += inside as usize;
        }
    }
    report.density = hit as f64 / total as f64;
    report.bound = bound;
    if report.density > nu {
        report.reason = Some(format!("hypothesis fails: density {} > nu {nu}", report.density));
        return Ok(report);
    }
    let inner = cylinder_samples(field, center, t0, rho, theta * rho)?;
    let mut worst = 0.0f64;
    for (m, cells) in &inner {
        let u = field.slice(*m);
        for &i in cells {
            report.checked += 1;
            let margin = match sign {
                Sign::Minus => u[i] - bound,
                Sign::Plus => bound - u[i],
            };
            if margin < 0.0 {
                report.violations += 1;
                worst = worst.min(margin);
            }
        }
    }
    report.worst = worst;
    report.verdict = if report.violations == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub verdict: Verdict,
    pub reason: Option<String>,
    /// Measure of `[u(., s) >= mu_- + xi omega] ∩ B_rho` over `|B_rho|`.
    pub initial_fraction: f64,
    pub window: (f64, f64),
    /// `(t, fraction of B_rho where u > mu_- + eps xi omega)` per stamp.
    pub fractions: Vec<(f64, f64)>,
    pub first_failure: Option<f64>,
}

/// Forward propagation of a measure lower bound from the slice at `s` over
/// `(s, s + delta xi omega rho]`. Ball measures are counted in cells.
pub fn expansion_check(
    field: &SpaceTimeField,
    y: &[f64],
    s: f64,
    rho: f64,
    xi: f64,
    osc: &OscillationData,
    constants: &ExpansionConstants,
) -> Result<ExpansionReport> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidInput(format!("xi must lie in (0, 1), got {xi}")));
    }
    let m0 = field
        .time_index(s)
        .ok_or_else(|| Error::MissingTimes(format!("expansion check needs a stamp at s = {s}")))?;
    let ball = Ball::new(y.to_vec(), rho)?;
    let grid = field.grid();
    let total = grid.ball_cells(&ball, 1)?.len() as f64 * grid.cell_volume();
    let omega = osc.omega;
    let lo = osc.mu_minus + xi * omega;
    // The hypothesis uses `>=`; strict `>` on a level nudged down one ulp.
    let start = level_set_measure(
        field,
        m0,
        &ball,
        lo - lo.abs() * f64::EPSILON - f64::MIN_POSITIVE,
        Direction::Above,
    )?;
    let end = s + constants.delta * xi * omega * rho;
    let mut report = ExpansionReport {
        verdict: Verdict::NotApplicable,
        reason: None,
        initial_fraction: start.measure / total,
        window: (s, end),
        fractions: Vec::new(),
        first_failure: None,
    };
    if report.initial_fraction < 0.5 {
        report.reason = Some(format!(
            "hypothesis fails: initial fraction {} < 1/2",
            report.initial_fraction
        ));
        return Ok(report);
    }
    let stamps: Vec<usize> = field.times_in(s, end);
    if stamps.is_empty() {
        report.reason = Some(format!("no time stamps in ({s}, {end}]"));
        return Ok(report);
    }
    let level = osc.mu_minus + constants.epsilon * xi * omega;
    for m in stamps {
        let t = field.times()[m];
        let f = level_set_measure(field, m, &ball, level, Direction::Above)?.measure / total;
        report.fractions.push((t, f));
        if f < 0.25 && report.first_failure.is_none() {
            report.first_failure = Some(t);
        }
    }
    report.verdict = if report.first_failure.is_none() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_analytic, SpatialBox};

    #[test]
    fn nu_arithmetic_is_exact() {
        let c = degiorgi_nu(2, 2.0, Sign::Minus).unwrap();
        assert_eq!(c.b, 32.0);
        assert_eq!(c.nu, (-22f64).exp2());
        let c = degiorgi_nu(1, 1.0, Sign::Plus).unwrap();
        assert_eq!((c.b, c.nu), (128.0, 1.0 / 128.0));
        let c = degiorgi_nu(3, 2.0, Sign::Minus).unwrap();
        assert_eq!(c.nu, (-42f64).exp2());
        assert!((c.b - (13.0f64 / 3.0).exp2()).abs() < 1e-12);
    }

    #[test]
    fn critical_sequence_is_geometric() {
        let c = degiorgi_nu(2, 2.0, Sign::Minus).unwrap();
        let (seq, _) = iterate_yn(c.nu, &c, 20).unwrap();
        for n in 0..20 {
            let r = seq[n + 1] / seq[n];
            assert!((r / (-10f64).exp2() - 1.0).abs() < 1e-12, "step {n}: {r}");
        }
        let (_, v) = iterate_yn(2.0 * c.nu, &c, 200).unwrap();
        assert!(matches!(v, YnVerdict::Diverged { .. }));
        let (z, v) = iterate_yn(0.0, &c, 5).unwrap();
        assert!(z.iter().all(|&y| y == 0.0));
        assert_eq!(v, YnVerdict::Converged { step: 0 });
    }

    #[test]
    fn expansion_constants_exact_values() {
        let e = expansion_constants(2, 2.0).unwrap();
        assert_eq!((e.sigma, e.epsilon, e.delta), (1.0 / 32.0, 1.0 / 32.0, 1.0 / 1024.0));
        assert_eq!(e.cascade_xi(), 1.0 / 131072.0);
        assert!(ExpansionConstants::custom(0.5, 1.5, 0.1).is_err());
    }

    #[test]
    fn lemma_vacuous_when_level_set_empty() {
        let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
        let times: Vec<f64> = (0..=8).map(|m| m as f64 / 8.0).collect();
        let f = sample_analytic(&|_: &[f64], _| 3.0, &bx, 1.0 / 16.0, &times).unwrap();
        let osc = OscillationData::new(3.0, 2.0, 1.0).unwrap();
        let r = degiorgi_lemma_check(&f, &[0.0, 0.0], 1.0, 0.25, 0.5, &osc, Sign::Minus, 1e-3).unwrap();
        assert_eq!(r.density, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
        let zero = OscillationData::new(3.0, 3.0, 0.0).unwrap();
        let r = degiorgi_lemma_check(&f, &[0.0, 0.0], 1.0, 0.25, 0.5, &zero, Sign::Minus, 1e-3).unwrap();
        assert_eq!(r.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn lemma_catches_isolated_dip() {
        // One low cell keeps the density tiny yet breaks the pointwise bound.
        let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
        let times: Vec<f64> = (0..=8).map(|m| m as f64 / 8.0).collect();
        let h = 1.0 / 16.0;
        let f = sample_analytic(
            &|x: &[f64], _| {
                if (x[0] - 0.5 * h).abs() < 1e-9 && (x[1] - 0.5 * h).abs() < 1e-9 {
                    0.0
                } else {
                    1.0
                }
            },
            &bx,
            h,
            &times,
        )
        .unwrap();
        let osc = OscillationData::new(1.0, 0.0, 1.0).unwrap();
        let r = degiorgi_lemma_check(&f, &[0.0, 0.0], 1.0, 0.25, 0.5, &osc, Sign::Minus, 0.05).unwrap();
        assert!(r.density > 0.0 && r.density <= 0.05);
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.violations > 0 && r.worst < 0.0);
    }

    #[test]
    fn expansion_on_time_constant_field() {
        let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
        let times: Vec<f64> = (0..=8).map(|m| m as f64 / 8.0).collect();
        let f = sample_analytic(&|x: &[f64], _| x[0] + 0.5, &bx, 1.0 / 16.0, &times).unwrap();
        let osc = OscillationData::new(1.0, 0.0, 1.0).unwrap();
        let c = ExpansionConstants::custom(0.1, 0.1, 0.9).unwrap();
        let r = expansion_check(&f, &[0.0, 0.0], 0.0, 0.5, 0.5, &osc, &c).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(!r.fractions.is_empty());
    }
}
