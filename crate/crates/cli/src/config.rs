//! JSON run configuration. Unknown keys are rejected and every error names
//! the offending field path.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tvlab_core::continuity::ConstantsMode;
use tvlab_core::flow::SolverConfig;
use tvlab_core::grid::{Grid, SpatialBox};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridBlock,
    #[serde(default)]
    pub initial: Option<Initial>,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub io: IoBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    pub h: f64,
    /// One `[lo, hi]` pair per axis.
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
}

/// Initial data for `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum Initial {
    /// A named closed-form example evaluated at `t`, optionally by cell averages.
    Example {
        name: String,
        #[serde(default)]
        t: f64,
        #[serde(default = "one")]
        cell_average: usize,
    },
    /// `height` on the ball of `radius` about `center` (origin when omitted).
    Disc {
        radius: f64,
        #[serde(default = "unit")]
        height: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "four")]
        cell_average: usize,
    },
    /// Slice `slice` of an existing field file on the same grid.
    Field {
        path: PathBuf,
        #[serde(default)]
        slice: usize,
    },
}

fn one() -> usize {
    1
}

fn four() -> usize {
    4
}

fn unit() -> f64 {
    1.0
}

/// Solver parameters; omitted entries take the grid defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub inner_iters: Option<usize>,
    pub primal_step: Option<f64>,
    pub dual_step: Option<f64>,
    pub tolerance: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    /// Evaluation points `(x, t)`, the time last.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub rhos: Vec<f64>,
    #[serde(default = "suite_default")]
    pub suite_size: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "mode_default")]
    pub mode: ConstantsMode,
    #[serde(default = "gamma_default")]
    pub gamma: f64,
}

fn suite_default() -> usize {
    50
}

fn mode_default() -> ConstantsMode {
    ConstantsMode::Empirical
}

fn gamma_default() -> f64 {
    2.0
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            points: Vec::new(),
            rhos: Vec::new(),
            suite_size: suite_default(),
            seed: None,
            mode: mode_default(),
            gamma: gamma_default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoBlock {
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "formats_default")]
    pub formats: Vec<Format>,
}

impl Default for IoBlock {
    fn default() -> Self {
        Self {
            out_dir: None,
            formats: formats_default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

fn formats_default() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

/// Parsed configuration together with the raw bytes it came from.
pub struct Loaded {
    pub config: RunConfig,
    pub bytes: Vec<u8>,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let config = parse(&bytes).with_context(|| format!("config {}", path.display()))?;
    Ok(Loaded { config, bytes })
}

pub fn parse(bytes: &[u8]) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("at `{path}`: {}", e.into_inner())
    })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(1..=3).contains(&g.dim) {
            bail!("grid.dim: must be 1, 2 or 3, got {}", g.dim);
        }
        if !(g.h.is_finite() && g.h > 0.0) {
            bail!("grid.h: must be positive, got {}", g.h);
        }
        if g.bounds.len() != g.dim {
            bail!("grid.box: expected {} [lo, hi] pairs, got {}", g.dim, g.bounds.len());
        }
        for (k, b) in g.bounds.iter().enumerate() {
            if !(b[0] < b[1]) {
                bail!("grid.box[{k}]: lo must be below hi, got {b:?}");
            }
        }
        let grid = self.build_grid().context("grid")?;
        if self.solver.steps == Some(0) {
            bail!("solver.steps: must be at least 1");
        }
        self.solver_config(&grid)?
            .validate(&grid)
            .map_err(|e| anyhow::anyhow!("solver: {e}"))?;
        match &self.initial {
            Some(Initial::Example { cell_average: 0, .. }) | Some(Initial::Disc { cell_average: 0, .. }) => {
                bail!("initial.cell_average: must be positive")
            }
            Some(Initial::Disc { radius, center, .. }) => {
                if !(*radius > 0.0) {
                    bail!("initial.disc.radius: must be positive, got {radius}");
                }
                if let Some(c) = center {
                    if c.len() != g.dim {
                        bail!("initial.disc.center: expected {} coordinates, got {}", g.dim, c.len());
                    }
                }
            }
            _ => {}
        }
        let d = &self.diagnostics;
        for (j, p) in d.points.iter().enumerate() {
            if p.len() != g.dim + 1 {
                bail!(
                    "diagnostics.points[{j}]: expected {} coordinates and a time, got {} values",
                    g.dim,
                    p.len()
                );
            }
        }
        if d.rhos.iter().any(|r| !(*r > 0.0)) {
            bail!("diagnostics.rhos: radii must be positive");
        }
        if d.rhos.windows(2).any(|w| !(w[1] < w[0])) {
            bail!("diagnostics.rhos: radii must be strictly decreasing");
        }
        if d.suite_size == 0 {
            bail!("diagnostics.suite_size: must be positive");
        }
        if !(d.gamma > 0.0) {
            bail!("diagnostics.gamma: must be positive, got {}", d.gamma);
        }
        Ok(())
    }

    pub fn spatial_box(&self) -> Result<SpatialBox> {
        let lo = self.grid.bounds.iter().map(|b| b[0]).collect();
        let hi = self.grid.bounds.iter().map(|b| b[1]).collect();
        Ok(SpatialBox::new(lo, hi)?)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Ok(Grid::from_box(&self.spatial_box()?, self.grid.h)?)
    }

    pub fn solver_config(&self, grid: &Grid) -> Result<SolverConfig> {
        let s = &self.solver;
        let mut c = SolverConfig::for_grid(grid);
        if let Some(v) = s.dt {
            c.dt = v;
        }
        if let Some(v) = s.inner_iters {
            c.inner_iters = v;
        }
        if let Some(v) = s.primal_step {
            c.primal_step = v;
        }
        if let Some(v) = s.dual_step {
            c.dual_step = v;
        }
        if let Some(v) = s.tolerance {
            c.tolerance = v;
        }
        if let Some(v) = s.epsilon {
            c.epsilon = v;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"grid": {"dim": 2, "h": 0.125, "box": [[-1, 1], [-1, 1]]}}"#;

    #[test]
    fn minimal_config_parses() {
        let c = parse(BASE.as_bytes()).unwrap();
        assert_eq!(c.diagnostics.suite_size, 50);
        assert_eq!(c.io.formats, vec![Format::Json, Format::Csv]);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let bad = r#"{"grid": {"dim": 2, "h": 0.125, "box": [[-1, 1], [-1, 1]], "spacing": 1}}"#;
        let e = format!("{:#}", parse(bad.as_bytes()).unwrap_err());
        assert!(e.contains("grid"), "{e}");
        assert!(e.contains("spacing"), "{e}");
    }

    #[test]
    fn zero_steps_is_rejected() {
        let bad = r#"{"grid": {"dim": 2, "h": 0.125, "box": [[-1, 1], [-1, 1]]}, "solver": {"steps": 0}}"#;
        let e = format!("{:#}", parse(bad.as_bytes()).unwrap_err());
        assert!(e.contains("solver.steps"), "{e}");
    }

    #[test]
    fn wrong_type_names_its_path() {
        let bad = r#"{"grid": {"dim": 2, "h": 0.125, "box": [[-1, 1], [-1, 1]]}, "diagnostics": {"seed": "x"}}"#;
        let e = format!("{:#}", parse(bad.as_bytes()).unwrap_err());
        assert!(e.contains("diagnostics.seed"), "{e}");
    }
}
