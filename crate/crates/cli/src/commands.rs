use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use tvlab_core::certify::{
    energy_suite, minimizer_suite, one_laplacian_suite, ConsistencyTolerance, DrawRanges, EnergySuite, MinimizerSuite,
    OneLaplacianSuite, Sign,
};
use tvlab_core::continuity::{
    degiorgi_lemma_check, degiorgi_nu, expansion_check, indicator, iterate_yn, oscillation_cascade, rho_ladder,
    sup_bound_suite, CascadeState, ConstantsMode, DeGiorgiConstants, ExpansionConstants, ExpansionReport,
    IndicatorCurve, LemmaReport, SupBoundSuite, Verdict as CoreVerdict, YnVerdict,
};
use tvlab_core::examples::{analytic_tv, make_example, Continuity};
use tvlab_core::flow::{evolve, residual_div_z, ResidualSummary, SolverConfig, StepReport};
use tvlab_core::grid::{
    ess_osc, read_field, sample_cell_average, sample_on_grid, write_field, Ball, Cylinder, Grid, SpaceTimeField,
};
use tvlab_core::tvmeasure::{tv_slice, TVSlice};
use tvlab_core::DualField;

use crate::config::{self, Format, Initial, RunConfig};
use crate::output::{emit, sha256_file, sha256_hex, Verdict};
use crate::{CertifyCmd, Command, Common, DegiorgiCmd, Mode, SignArg};

pub fn run(cmd: Command) -> Result<Verdict> {
    match cmd {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::Indicator { common, rho0, fit } => cmd_indicator(common, rho0, fit),
        Command::Certify { which } => match which {
            CertifyCmd::Minimizer {
                common,
                ut,
                radius,
                window,
                count,
                c,
            } => cmd_minimizer(common, ut, radius, &window, count, c),
            CertifyCmd::Energy {
                common,
                gamma,
                count,
                tolerance,
            } => cmd_energy(common, gamma, count, tolerance),
            CertifyCmd::Onelap {
                common,
                dual,
                count,
                tolerance,
            } => cmd_onelap(common, &dual, count, tolerance),
        },
        Command::Degiorgi { which } => match which {
            DegiorgiCmd::Iterate {
                n,
                gamma,
                y0,
                steps,
                out,
            } => cmd_iterate(n, gamma, &y0, steps, out),
            DegiorgiCmd::Lemma {
                common,
                rho,
                xi,
                sign,
                gamma,
            } => cmd_lemma(common, rho, xi, sign, gamma),
            DegiorgiCmd::Expansion {
                common,
                rho,
                xi,
                gamma,
                sigma,
                epsilon,
                delta,
            } => cmd_expansion(common, rho, xi, gamma, [sigma, epsilon, delta]),
        },
        Command::Cascade { common, rho, xi, gamma } => cmd_cascade(common, rho, xi, gamma),
        Command::Tv { common, radius } => cmd_tv(common, radius),
        Command::Example {
            name,
            config,
            times,
            rho,
            t,
            cell_average,
            out,
        } => cmd_example(&name, config, times, rho, t, cell_average, out),
        Command::Supbound {
            common,
            r,
            rho_range,
            count,
        } => cmd_supbound(common, r, &rho_range, count),
    }
}

pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            parse_number(p).with_context(|| format!("{what}: cannot parse {p:?}"))
        })
        .collect()
}

/// Accepts decimals and simple fractions such as `1/64`.
fn parse_number(s: &str) -> Result<f64> {
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
        return Ok(a / b);
    }
    Ok(s.parse()?)
}

fn pair(s: &str, what: &str) -> Result<(f64, f64)> {
    match parse_list(s, what)?.as_slice() {
        &[a, b] => Ok((a, b)),
        v => bail!("{what}: expected two values, got {}", v.len()),
    }
}

fn sign_of(s: SignArg) -> Sign {
    match s {
        SignArg::Plus => Sign::Plus,
        SignArg::Minus => Sign::Minus,
    }
}

/// Common flags resolved against the optional config file.
struct Resolved {
    cfg: Option<RunConfig>,
    field_path: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    point: Option<Vec<f64>>,
    rhos: Option<Vec<f64>>,
    mode: ConstantsMode,
}

impl Resolved {
    fn new(c: Common) -> Result<Self> {
        let cfg = match &c.config {
            Some(p) => Some(config::load(p)?.config),
            None => None,
        };
        let diag = cfg.as_ref().map(|c| c.diagnostics.clone()).unwrap_or_default();
        let point = match &c.point {
            Some(p) => Some(parse_list(p, "--point")?),
            None => diag.points.first().cloned(),
        };
        let rhos = match &c.rhos {
            Some(r) => Some(parse_list(r, "--rhos")?),
            None if !diag.rhos.is_empty() => Some(diag.rhos.clone()),
            None => None,
        };
        let mode = match c.mode {
            Some(Mode::Paper) => ConstantsMode::Paper,
            Some(Mode::Empirical) => ConstantsMode::Empirical,
            None => diag.mode,
        };
        let out = c
            .out
            .clone()
            .or_else(|| cfg.as_ref().and_then(|c| c.io.out_dir.clone()));
        Ok(Self {
            seed: c.seed.or(diag.seed),
            cfg,
            field_path: c.field,
            out,
            point,
            rhos,
            mode,
        })
    }

    fn field(&self) -> Result<(SpaceTimeField, FileRef)> {
        let path = self.field_path.as_ref().ok_or_else(|| anyhow!("--field is required"))?;
        let field = read_field(path).with_context(|| format!("reading field {}", path.display()))?;
        Ok((field, FileRef::new(path)?))
    }

    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| anyhow!("randomized suites need a seed: pass --seed or set diagnostics.seed"))
    }

    fn count(&self, flag: Option<usize>) -> usize {
        flag.or(self.cfg.as_ref().map(|c| c.diagnostics.suite_size))
            .unwrap_or(50)
    }

    /// Splits `--point` into the spatial part and the time.
    fn point(&self, dim: usize) -> Result<(Vec<f64>, f64)> {
        let p = self
            .point
            .as_ref()
            .ok_or_else(|| anyhow!("--point x,y[,z],t is required"))?;
        if p.len() != dim + 1 {
            bail!("--point: expected {dim} coordinates and a time, got {} values", p.len());
        }
        Ok((p[..dim].to_vec(), p[dim]))
    }

    fn csv_wanted(&self) -> bool {
        self.cfg
            .as_ref()
            .map(|c| c.io.formats.contains(&Format::Csv))
            .unwrap_or(true)
    }
}

#[derive(Serialize)]
struct FileRef {
    path: String,
    sha256: String,
}

impl FileRef {
    fn new(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }

    /// Records the file name only, so manifests do not depend on the output directory.
    fn named(path: &Path) -> Result<Self> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            path: name,
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    inputs: Vec<FileRef>,
    seed: Option<u64>,
    verdict: Verdict,
    result: T,
}

fn finish<T: Serialize>(
    name: &str,
    inputs: Vec<FileRef>,
    seed: Option<u64>,
    verdict: Verdict,
    result: T,
    csv: Option<String>,
    out: Option<&Path>,
) -> Result<Verdict> {
    let report = Report {
        command: name,
        inputs,
        seed,
        verdict,
        result,
    };
    emit(name, &report, csv, out)?;
    Ok(verdict)
}

fn field_dt(field: &SpaceTimeField) -> f64 {
    let t = field.times();
    if t.len() > 1 {
        t[1] - t[0]
    } else {
        0.0
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct StepRecord {
    step: usize,
    t: f64,
    #[serde(flatten)]
    report: StepReport,
    descent: f64,
    /// Functional at `u_next` is at most its value at `u_prev` plus the tolerance.
    descent_certified: bool,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    config_sha256: String,
    config: RunConfig,
    grid: GridInfo,
    solver: SolverConfig,
    steps: usize,
    outputs: Vec<FileRef>,
    residual: ResidualSummary,
    all_descent_certified: bool,
    all_converged: bool,
    step_reports: Vec<StepRecord>,
}

#[derive(Serialize)]
struct GridInfo {
    shape: Vec<usize>,
    h: f64,
    origin: Vec<f64>,
}

impl GridInfo {
    fn of(g: &Grid) -> Self {
        Self {
            shape: g.shape().to_vec(),
            h: g.spacing(),
            origin: g.origin().to_vec(),
        }
    }
}

fn initial_slice(cfg: &RunConfig, grid: &Grid) -> Result<Vec<f64>> {
    let init = cfg
        .initial
        .as_ref()
        .ok_or_else(|| anyhow!("initial: simulate needs an initial block"))?;
    let bx = cfg.spatial_box()?;
    let h = cfg.grid.h;
    let field = match init {
        Initial::Example { name, t, cell_average } => {
            let ex = make_example(name).context("initial.example.name")?;
            if ex.dim != grid.dim() {
                bail!(
                    "initial.example: {name} lives in {} dimensions, grid.dim is {}",
                    ex.dim,
                    grid.dim()
                );
            }
            sample_cell_average(&|x: &[f64], s| ex.eval(x, s), &bx, h, &[*t], *cell_average)?
        }
        Initial::Disc {
            radius,
            height,
            center,
            cell_average,
        } => {
            let c = center.clone().unwrap_or_else(|| vec![0.0; grid.dim()]);
            let (r, v) = (*radius, *height);
            let f = move |x: &[f64], _: f64| {
                let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 <= r * r {
                    v
                } else {
                    0.0
                }
            };
            sample_cell_average(&f, &bx, h, &[0.0], *cell_average)?
        }
        Initial::Field { path, slice } => {
            let f = read_field(path).with_context(|| format!("initial.field.path {}", path.display()))?;
            if f.grid() != grid {
                bail!(
                    "initial.field: grid of {} differs from the configured grid",
                    path.display()
                );
            }
            if *slice >= f.slice_count() {
                bail!(
                    "initial.field.slice: {slice} out of range, file has {} slices",
                    f.slice_count()
                );
            }
            return Ok(f.slice(*slice).to_vec());
        }
    };
    Ok(field.slice(0).to_vec())
}

fn simulate(config_path: &Path, out: Option<PathBuf>) -> Result<Verdict> {
    let loaded = config::load(config_path)?;
    let cfg = loaded.config;
    let out = out
        .or_else(|| cfg.io.out_dir.clone())
        .ok_or_else(|| anyhow!("simulate needs --out or io.out_dir"))?;
    let grid = cfg.build_grid()?;
    let solver = cfg.solver_config(&grid)?;
    let steps = cfg
        .solver
        .steps
        .ok_or_else(|| anyhow!("solver.steps: required by simulate"))?;
    let u0 = initial_slice(&cfg, &grid)?;
    let ev = evolve(&grid, &u0, steps, &solver)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let field_path = out.join("field.tvf");
    let dual_path = out.join("dual.tvz");
    write_field(&ev.field, &field_path)?;
    ev.dual.write(&dual_path)?;
    let residual = residual_div_z(&ev.field, &ev.dual)?.summary();
    let step_reports: Vec<StepRecord> = ev
        .reports
        .iter()
        .enumerate()
        .map(|(m, r)| StepRecord {
            step: m + 1,
            t: ev.field.times()[m + 1],
            descent: r.descent(),
            descent_certified: r.descent_certified(solver.tolerance),
            report: r.clone(),
        })
        .collect();
    let all_descent_certified = step_reports.iter().all(|s| s.descent_certified);
    let all_converged = step_reports.iter().all(|s| s.report.converged);
    if cfg.io.formats.contains(&Format::Csv) {
        let mut csv = String::from(
            "step,t,iterations,converged,relative_gap,energy_prev,energy_next,descent,descent_certified\n",
        );
        for s in &step_reports {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.step,
                s.t,
                s.report.iterations,
                s.report.converged,
                s.report.relative_gap,
                s.report.energy_prev,
                s.report.energy_next,
                s.descent,
                s.descent_certified
            ));
        }
        std::fs::write(out.join("steps.csv"), csv)?;
    }
    let manifest = Manifest {
        tool: "tvlab",
        version: env!("CARGO_PKG_VERSION"),
        core_version: tvlab_core::VERSION,
        config_sha256: sha256_hex(&loaded.bytes),
        config: cfg,
        grid: GridInfo::of(&grid),
        solver,
        steps,
        outputs: vec![FileRef::named(&field_path)?, FileRef::named(&dual_path)?],
        residual,
        all_descent_certified,
        all_converged,
        step_reports,
    };
    let json = crate::output::to_json(&manifest)?;
    std::fs::write(out.join("manifest.json"), &json)?;
    println!(
        "{}",
        serde_json::json!({
            "command": "simulate",
            "out": out.display().to_string(),
            "steps": steps,
            "all_descent_certified": all_descent_certified,
            "all_converged": all_converged,
        })
    );
    Ok(Verdict::from_bool(all_descent_certified))
}

// ---------------------------------------------------------------- indicator

#[derive(Serialize)]
struct IndicatorResult {
    curve: IndicatorCurve,
    fit_range: Option<(f64, f64)>,
    fit: Option<(f64, f64)>,
    decreasing: bool,
}

fn cmd_indicator(common: Common, rho0: Option<f64>, fit: Option<String>) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let (x, t0) = r.point(field.dim())?;
    let rhos = match (&r.rhos, rho0) {
        (Some(v), _) => v.clone(),
        (None, Some(r0)) => rho_ladder(r0, field.grid().spacing()),
        (None, None) => bail!("indicator needs --rhos or --rho0"),
    };
    let curve = indicator(&field, &x, t0, &rhos)?;
    let fit_range = fit.map(|f| pair(&f, "--fit")).transpose()?;
    let fitted = fit_range.and_then(|(lo, hi)| curve.fit_range(lo, hi));
    let csv = r.csv_wanted().then(|| curve.to_csv());
    let decreasing = curve.decreasing();
    let result = IndicatorResult {
        curve,
        fit_range,
        fit: fitted,
        decreasing,
    };
    finish(
        "indicator",
        vec![fref],
        None,
        Verdict::Pass,
        result,
        csv,
        r.out.as_deref(),
    )
}

// ---------------------------------------------------------------- certify

fn draw_csv(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn cmd_minimizer(
    common: Common,
    ut: Option<PathBuf>,
    radius: f64,
    window: &str,
    count: Option<usize>,
    c: Option<f64>,
) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let seed = r.seed()?;
    let center = match &r.point {
        Some(p) if p.len() == field.dim() || p.len() == field.dim() + 1 => p[..field.dim()].to_vec(),
        Some(p) => bail!("--point: expected {} coordinates, got {}", field.dim(), p.len()),
        None => bail!("--point is required"),
    };
    let window = pair(window, "--window")?;
    let mut inputs = vec![fref];
    let u_t = match ut {
        Some(p) => {
            let f = read_field(&p).with_context(|| format!("reading {}", p.display()))?;
            inputs.push(FileRef::new(&p)?);
            f
        }
        None => field.backward_time_derivative()?,
    };
    let c = ConsistencyTolerance {
        c: c.unwrap_or(ConsistencyTolerance::CALIBRATED.c),
    };
    let tol = c.value(field.grid().spacing(), field_dt(&field));
    let ball = Ball::new(center, radius)?;
    let suite: MinimizerSuite = minimizer_suite(&field, &u_t, &ball, window, seed, r.count(count), tol)?;
    let csv = r.csv_wanted().then(|| {
        draw_csv(
            "draw,kind,amplitude,width,gap",
            suite.draws.iter().enumerate().map(|(i, d)| {
                format!("{i},{:?},{},{},{}", d.spec.kind, d.spec.amplitude, d.spec.width, d.gap).to_lowercase()
            }),
        )
    });
    #[derive(Serialize)]
    struct Out {
        consistency_constant: f64,
        suite: MinimizerSuite,
    }
    let verdict = Verdict::from_bool(suite.passed());
    finish(
        "certify_minimizer",
        inputs,
        Some(seed),
        verdict,
        Out {
            consistency_constant: c.c,
            suite,
        },
        csv,
        r.out.as_deref(),
    )
}

fn cmd_energy(common: Common, gamma: Option<f64>, count: Option<usize>, tolerance: f64) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let seed = r.seed()?;
    let gamma = gamma.or(r.cfg.as_ref().map(|c| c.diagnostics.gamma)).unwrap_or(2.0);
    let ranges = DrawRanges::for_field(&field);
    let suite: EnergySuite = energy_suite(&field, &ranges, gamma, tolerance, seed, r.count(count))?;
    let csv = r.csv_wanted().then(|| {
        draw_csv(
            "draw,level,sign,slack,relative_slack,minimal_gamma",
            suite.draws.iter().enumerate().map(|(i, d)| {
                format!(
                    "{i},{},{:?},{},{},{}",
                    d.draw.trunc.level,
                    d.draw.trunc.sign,
                    d.budget.slack,
                    d.relative_slack,
                    d.budget.minimal_gamma()
                )
                .to_lowercase()
            }),
        )
    });
    let verdict = Verdict::from_bool(suite.passed());
    finish(
        "certify_energy",
        vec![fref],
        Some(seed),
        verdict,
        suite,
        csv,
        r.out.as_deref(),
    )
}

fn cmd_onelap(common: Common, dual: &Path, count: Option<usize>, tolerance: f64) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let seed = r.seed()?;
    let z = DualField::read(dual).with_context(|| format!("reading dual {}", dual.display()))?;
    let ranges = DrawRanges::for_field(&field);
    let suite: OneLaplacianSuite = one_laplacian_suite(&field, &z, &ranges, tolerance, seed, r.count(count))?;
    let csv = r.csv_wanted().then(|| {
        draw_csv(
            "draw,level,sign,slack,relative_slack",
            suite.draws.iter().enumerate().map(|(i, d)| {
                format!(
                    "{i},{},{:?},{},{}",
                    d.draw.trunc.level, d.draw.trunc.sign, d.report.slack, d.relative_slack
                )
                .to_lowercase()
            }),
        )
    });
    let verdict = Verdict::from_bool(suite.passed());
    finish(
        "certify_onelap",
        vec![fref, FileRef::new(dual)?],
        Some(seed),
        verdict,
        suite,
        csv,
        r.out.as_deref(),
    )
}

// ---------------------------------------------------------------- degiorgi

#[derive(Serialize)]
struct IterateResult {
    constants: DeGiorgiConstants,
    y0: f64,
    sequence: Vec<f64>,
    /// `Y_{n+1} / Y_n` while both are positive.
    ratios: Vec<f64>,
    outcome: YnVerdict,
}

fn cmd_iterate(n: usize, gamma: f64, y0: &str, steps: usize, out: Option<PathBuf>) -> Result<Verdict> {
    let c = degiorgi_nu(n, gamma, Sign::Minus)?;
    let y0 = match y0.trim() {
        "at-critical" | "critical" => c.nu,
        other => parse_number(other).with_context(|| format!("--Y0: cannot parse {other:?}"))?,
    };
    let (sequence, outcome) = iterate_yn(y0, &c, steps)?;
    let ratios = sequence
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let csv = draw_csv("n,y", sequence.iter().enumerate().map(|(i, y)| format!("{i},{y}")));
    let verdict = Verdict::from_bool(!matches!(outcome, YnVerdict::Diverged { .. }));
    let result = IterateResult {
        constants: c,
        y0,
        sequence,
        ratios,
        outcome,
    };
    finish(
        "degiorgi_iterate",
        vec![],
        None,
        verdict,
        result,
        Some(csv),
        out.as_deref(),
    )
}

fn cmd_lemma(common: Common, rho: f64, xi: f64, sign: SignArg, gamma: f64) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let (x, t0) = r.point(field.dim())?;
    let sign = sign_of(sign);
    let c = degiorgi_nu(field.dim(), gamma, sign)?;
    // Oscillation over a cylinder that contains Q_{2 rho}(theta) for theta <= 2.
    let osc = ess_osc(&field, &Cylinder::backward(x.clone(), t0, 2.0 * rho, 2.0)?)?;
    let report: LemmaReport = degiorgi_lemma_check(&field, &x, t0, rho, xi, &osc, sign, c.nu)?;
    let verdict = Verdict::from_bool(report.verdict != CoreVerdict::Fail);
    finish(
        "degiorgi_lemma",
        vec![fref],
        None,
        verdict,
        report,
        None,
        r.out.as_deref(),
    )
}

fn cmd_expansion(common: Common, rho: f64, xi: f64, gamma: f64, custom: [Option<f64>; 3]) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let (y, s) = r.point(field.dim())?;
    let nominal = ExpansionConstants::paper(field.dim(), gamma)?;
    let constants = match r.mode {
        ConstantsMode::Paper => {
            if custom.iter().any(Option::is_some) {
                bail!("--sigma/--epsilon/--delta apply in empirical mode only");
            }
            nominal
        }
        ConstantsMode::Empirical => ExpansionConstants::custom(
            custom[0].unwrap_or(nominal.sigma),
            custom[1].unwrap_or(nominal.epsilon),
            custom[2].unwrap_or(nominal.delta),
        )?,
    };
    let t_end = field.times()[field.slice_count() - 1];
    let osc = ess_osc(
        &field,
        &Cylinder::forward(y.clone(), s, rho, ((t_end - s) / rho).max(f64::MIN_POSITIVE))?,
    )?;
    let report: ExpansionReport = expansion_check(&field, &y, s, rho, xi, &osc, &constants)?;
    #[derive(Serialize)]
    struct Out {
        constants: ExpansionConstants,
        report: ExpansionReport,
    }
    let verdict = Verdict::from_bool(report.verdict != CoreVerdict::Fail);
    finish(
        "degiorgi_expansion",
        vec![fref],
        None,
        verdict,
        Out { constants, report },
        None,
        r.out.as_deref(),
    )
}

// ---------------------------------------------------------------- cascade, tv, supbound

fn cmd_cascade(common: Common, rho: f64, xi: f64, gamma: f64) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let (x, t0) = r.point(field.dim())?;
    let constants = ExpansionConstants::paper(field.dim(), gamma)?;
    let state: CascadeState = oscillation_cascade(&field, &x, t0, rho, r.mode, xi, &constants)?;
    let csv = draw_csv(
        "stage,rho,omega,decayed",
        state
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{i},{},{},{}", s.rho, s.omega, s.decayed)),
    );
    let verdict = Verdict::from_bool(state.passed());
    finish(
        "cascade",
        vec![fref],
        None,
        verdict,
        state,
        r.csv_wanted().then_some(csv),
        r.out.as_deref(),
    )
}

fn cmd_tv(common: Common, radius: f64) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let (x, t) = r.point(field.dim())?;
    let m = field
        .time_index(t)
        .ok_or_else(|| anyhow!("--point: no slice at t = {t}"))?;
    let s: TVSlice = tv_slice(&field, m, &Ball::new(x, radius)?)?;
    finish("tv", vec![fref], None, Verdict::Pass, s, None, r.out.as_deref())
}

fn cmd_supbound(common: Common, r_exp: Option<f64>, rho_range: &str, count: Option<usize>) -> Result<Verdict> {
    let r = Resolved::new(common)?;
    let (field, fref) = r.field()?;
    let seed = r.seed()?;
    let exponent = r_exp.unwrap_or(field.dim() as f64 + 1.0);
    let range = pair(rho_range, "--rho-range")?;
    let suite: SupBoundSuite = sup_bound_suite(&field, exponent, range, seed, r.count(count))?;
    let csv = draw_csv(
        "draw,rho,s,t,sign,measured_sup,bound_shape,ratio",
        suite.draws.iter().enumerate().map(|(i, d)| {
            format!(
                "{i},{},{},{},{:?},{},{},{}",
                d.rho, d.s, d.t, d.sign, d.result.measured_sup, d.result.bound_shape, d.result.ratio
            )
            .to_lowercase()
        }),
    );
    let verdict = Verdict::from_bool(suite.gamma_fit.is_finite());
    finish(
        "supbound",
        vec![fref],
        Some(seed),
        verdict,
        suite,
        r.csv_wanted().then_some(csv),
        r.out.as_deref(),
    )
}

// ---------------------------------------------------------------- example

#[derive(Serialize)]
struct ExampleInfo {
    name: String,
    dim: usize,
    continuity: Continuity,
    test_point: Vec<f64>,
    has_time_derivative: bool,
    has_dual: bool,
    rho: Option<f64>,
    t: f64,
    analytic_tv: Option<f64>,
    value_at_test_point: Option<f64>,
    written: Vec<FileRef>,
}

fn cmd_example(
    name: &str,
    config: Option<PathBuf>,
    times: Option<String>,
    rho: Option<f64>,
    t: f64,
    cell_average: usize,
    out: Option<PathBuf>,
) -> Result<Verdict> {
    let ex = make_example(name)?;
    let analytic = rho.and_then(|r| analytic_tv(&ex, r, t));
    let v = ex.eval(&ex.test_point, t);
    let mut written = Vec::new();
    if let Some(cpath) = config {
        let cfg = config::load(&cpath)?.config;
        if cfg.grid.dim != ex.dim {
            bail!(
                "example {name} lives in {} dimensions, grid.dim is {}",
                ex.dim,
                cfg.grid.dim
            );
        }
        let times = parse_list(
            times.as_deref().ok_or_else(|| anyhow!("sampling needs --times"))?,
            "--times",
        )?;
        let out = out
            .clone()
            .or(cfg.io.out_dir.clone())
            .ok_or_else(|| anyhow!("sampling needs --out"))?;
        std::fs::create_dir_all(&out)?;
        let bx = cfg.spatial_box()?;
        let h = cfg.grid.h;
        let sample = |f: &(dyn Fn(&[f64], f64) -> f64 + Sync)| -> Result<SpaceTimeField> {
            if cell_average > 1 {
                Ok(sample_cell_average(f, &bx, h, &times, cell_average)?)
            } else {
                Ok(sample_on_grid(f, &cfg.build_grid()?, &times)?)
            }
        };
        let field = sample(&|x, s| ex.eval(x, s))?;
        let p = out.join(format!("{name}.tvf"));
        write_field(&field, &p)?;
        written.push(FileRef::named(&p)?);
        if let Some(ut) = &ex.time_derivative {
            let f = sample(&|x, s| ut(x, s))?;
            let p = out.join(format!("{name}_ut.tvf"));
            write_field(&f, &p)?;
            written.push(FileRef::named(&p)?);
        }
        if let Some(z) = &ex.dual {
            let d = DualField::sample(field.grid(), &times, &|x, s, k| z(x, s, k), true)?;
            let p = out.join(format!("{name}.tvz"));
            d.write(&p)?;
            written.push(FileRef::named(&p)?);
        }
    }
    let info = ExampleInfo {
        name: ex.name.clone(),
        dim: ex.dim,
        continuity: ex.continuity,
        test_point: ex.test_point.clone(),
        has_time_derivative: ex.time_derivative.is_some(),
        has_dual: ex.dual.is_some(),
        rho,
        t,
        analytic_tv: analytic,
        value_at_test_point: v.is_finite().then_some(v),
        written,
    };
    finish("example", vec![], None, Verdict::Pass, info, None, out.as_deref())
}
