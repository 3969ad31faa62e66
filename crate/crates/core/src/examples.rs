//! Closed-form fields with analytic companions, used as oracles.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

pub type ValueFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// `z_k(x, t)` for component `k`.
pub type DualFn = Arc<dyn Fn(&[f64], f64, usize) -> f64 + Send + Sync>;
/// `(rho, t) -> ||Du(., t)||(B_rho(test point))`.
pub type TvFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Continuity {
    Continuous,
    Discontinuous,
    Unbounded,
}

pub const EXAMPLE_NAMES: [&str; 5] = ["F", "u1", "u2", "step", "disc_solution"];

#[derive(Clone)]
pub struct AnalyticExample {
    pub name: String,
    pub dim: usize,
    pub value: ValueFn,
    pub time_derivative: Option<ValueFn>,
    pub dual: Option<DualFn>,
    pub tv: Option<TvFn>,
    pub test_point: Vec<f64>,
    pub continuity: Continuity,
}

impl fmt::Debug for AnalyticExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticExample")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("has_time_derivative", &self.time_derivative.is_some())
            .field("has_dual", &self.dual.is_some())
            .field("has_tv", &self.tv.is_some())
            .field("test_point", &self.test_point)
            .field("continuity", &self.continuity)
            .finish()
    }
}

impl AnalyticExample {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        (self.value)(x, t)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `sign(x_1) sqrt|x_1|`.
pub fn u2_value(x1: f64) -> f64 {
    x1.signum() * x1.abs().sqrt()
}

/// `1/ln x_1` for `x_1 > 0`, `-1/ln(-x_1)` for `x_1 < 0`, 0 at `x_1 = 0`.
pub fn u1_value(x1: f64) -> f64 {
    if x1 > 0.0 {
        1.0 / x1.ln()
    } else if x1 < 0.0 {
        -1.0 / (-x1).ln()
    } else {
        0.0
    }
}

/// `B(1/4, 3/2)`, the constant in `||Du_2||(B_rho) = B(1/4, 3/2) rho^{3/2}`.
pub fn u2_tv_constant() -> f64 {
    gamma(0.25) * gamma(1.5) / gamma(1.75)
}

/// `||Du_1||(B_rho) = 4 rho int_0^{pi/2} sin(phi) / |ln(rho sin(phi))| dphi`, for `rho < 1`.
pub fn u1_tv(rho: f64) -> f64 {
    4.0 * rho * gauss_legendre(|p| p.sin() / (rho * p.sin()).ln().abs(), 0.0, PI / 2.0, 128)
}

/// Shrinking disc `(c - (N/R) t)_+` on `B_R`, 0 outside, with its dual field.
pub fn disc_solution(dim: usize, radius: f64, height: f64) -> Result<AnalyticExample> {
    if !(1..=3).contains(&dim) || !(radius > 0.0) || !(height > 0.0) {
        return Err(Error::InvalidInput(format!(
            "disc solution needs N in 1..=3 and positive R, c; got N = {dim}, R = {radius}, c = {height}"
        )));
    }
    let n = dim as f64;
    let rate = n / radius;
    let alive = move |t: f64| height - rate * t > 0.0;
    let value: ValueFn = Arc::new(move |x, t| {
        if norm(x) < radius {
            (height - rate * t).max(0.0)
        } else {
            0.0
        }
    });
    let time_derivative: ValueFn = Arc::new(move |x, t| if norm(x) < radius && alive(t) { -rate } else { 0.0 });
    let dual: DualFn = Arc::new(move |x, t, k| {
        if !alive(t) {
            return 0.0;
        }
        let r = norm(x);
        if r <= radius {
            -x[k] / radius
        } else {
            -x[k] / radius * (radius / r).powi(dim as i32)
        }
    });
    let perimeter = n * crate::grid::unit_ball_volume(dim) * radius.powi(dim as i32 - 1);
    let tv: TvFn = Arc::new(move |rho, t| {
        if rho >= radius {
            perimeter * (height - rate * t).max(0.0)
        } else {
            0.0
        }
    });
    Ok(AnalyticExample {
        name: "disc_solution".into(),
        dim,
        value,
        time_derivative: Some(time_derivative),
        dual: Some(dual),
        tv: Some(tv),
        test_point: vec![0.0; dim],
        continuity: Continuity::Continuous,
    })
}

pub fn make_example(name: &str) -> Result<AnalyticExample> {
    let zero: ValueFn = Arc::new(|_, _| 0.0);
    match name {
        "F" => Ok(AnalyticExample {
            name: name.into(),
            dim: 3,
            value: Arc::new(|x, t| (1.0 - t) * 2.0 / norm(x)),
            time_derivative: Some(Arc::new(|x, _| -2.0 / norm(x))),
            dual: Some(Arc::new(|x, _, k| -x[k] / norm(x))),
            tv: None,
            test_point: vec![0.0; 3],
            continuity: Continuity::Unbounded,
        }),
        "u1" => Ok(AnalyticExample {
            name: name.into(),
            dim: 2,
            value: Arc::new(|x, _| u1_value(x[0])),
            time_derivative: Some(zero),
            dual: Some(Arc::new(|_, _, k| if k == 0 { -1.0 } else { 0.0 })),
            tv: Some(Arc::new(|rho, _| u1_tv(rho))),
            test_point: vec![0.0; 2],
            continuity: Continuity::Continuous,
        }),
        "u2" => {
            let c = u2_tv_constant();
            Ok(AnalyticExample {
                name: name.into(),
                dim: 2,
                value: Arc::new(|x, _| u2_value(x[0])),
                time_derivative: Some(zero),
                dual: Some(Arc::new(|_, _, k| if k == 0 { 1.0 } else { 0.0 })),
                tv: Some(Arc::new(move |rho, _| c * rho.powf(1.5))),
                test_point: vec![0.0; 2],
                continuity: Continuity::Continuous,
            })
        }
        "step" => Ok(AnalyticExample {
            name: name.into(),
            dim: 2,
            value: Arc::new(|x, _| {
                if x[0] > 0.0 {
                    0.5
                } else if x[0] < 0.0 {
                    -0.5
                } else {
                    0.0
                }
            }),
            time_derivative: Some(zero),
            dual: Some(Arc::new(|_, _, k| if k == 0 { 1.0 } else { 0.0 })),
            tv: Some(Arc::new(|rho, _| 2.0 * rho)),
            test_point: vec![0.0; 2],
            continuity: Continuity::Discontinuous,
        }),
        "disc_solution" => disc_solution(2, 0.5, 1.0),
        other => Err(Error::UnknownExample(format!(
            "{other}; known: {}",
            EXAMPLE_NAMES.join(", ")
        ))),
    }
}

/// Closed-form `||Du(., t)||(B_rho)` around the example's test point, when known.
pub fn analytic_tv(example: &AnalyticExample, rho: f64, t: f64) -> Option<f64> {
    example.tv.as_ref().map(|f| f(rho, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_values() {
        let u2 = make_example("u2").unwrap();
        assert_eq!(u2.eval(&[0.25, 0.0], 0.0), 0.5);
        let f = make_example("F").unwrap();
        assert!((f.eval(&[0.5, 0.0, 0.0], 0.5) - 2.0).abs() < 1e-15);
        let u1 = make_example("u1").unwrap();
        assert!((u1.eval(&[(-2.0f64).exp(), 0.0], 0.0) + 0.5).abs() < 1e-15);
        assert!(matches!(make_example("nope"), Err(Error::UnknownExample(_))));
    }

    #[test]
    fn closed_form_tv() {
        let step = make_example("step").unwrap();
        assert_eq!(analytic_tv(&step, 0.25, 0.0), Some(0.5));
        let disc = make_example("disc_solution").unwrap();
        assert!((analytic_tv(&disc, 1.0, 0.0).unwrap() - PI).abs() < 1e-14);
        let u2 = make_example("u2").unwrap();
        assert!((analytic_tv(&u2, 0.25, 0.0).unwrap() - 0.43701).abs() < 1e-4);
        assert!(analytic_tv(&make_example("F").unwrap(), 0.25, 0.0).is_none());
    }

    #[test]
    fn beta_constant_matches_direct_quadrature() {
        // 2 int_0^1 sqrt(1 - s^2)/sqrt(s) ds with s = w^2.
        let q = 2.0 * gauss_legendre(|w| 2.0 * (1.0 - w.powi(4)).sqrt(), 0.0, 1.0, 400);
        assert!((u2_tv_constant() - q).abs() < 1e-6, "{} vs {q}", u2_tv_constant());
        assert!((u2_tv_constant() - 3.4961).abs() < 1e-4);
    }

    #[test]
    fn u1_tv_matches_antiderivative_bound() {
        // TV over the strip (-rho, rho) x (-rho, rho) is 2 rho * 2/|ln rho|; the ball sees less.
        let rho: f64 = 0.25;
        let strip = 4.0 * rho / rho.ln().abs();
        let tv = u1_tv(rho);
        assert!(tv < strip && tv > 0.5 * strip, "{tv} {strip}");
    }

    #[test]
    fn disc_dual_is_continuous_and_admissible() {
        let d = make_example("disc_solution").unwrap();
        let z = d.dual.unwrap();
        for r in [0.1, 0.4999, 0.5, 0.5001, 0.9] {
            let v = z(&[r, 0.0], 0.1, 0);
            assert!(v.abs() <= 1.0 + 1e-12);
        }
        assert!((z(&[0.4999999, 0.0], 0.0, 0) - z(&[0.5000001, 0.0], 0.0, 0)).abs() < 1e-5);
    }
}
