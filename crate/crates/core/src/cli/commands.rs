use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::diagnostics::{
    l1_partial_sums, residual_decay_report, seidman_gamma_sweep, seidman_input_model, semiconvergence_curves,
    strong_condition_check, ubar_bounds_check, CurveMethod, ErrorCurve,
};
use crate::dual::{choose_n_dual, fit_dual, DualModel};
use crate::error::{Error, Result};
use crate::linalg::GridSignal;
use crate::operators::{LinearOperator, OperatorConfig};
use crate::persist::{load_dual, load_input, load_projection, save_dual, save_input, save_projection};
use crate::projection::{choose_n, ChoiceRule, ProjectionModel};
use crate::training::io::{read_csv, save_dataset, write_csv, write_pgm_autoscale, ImageFormat};
use crate::training::{add_noise, make_adjoint_pairs, make_pairs, TrainingSet};
use crate::variational::{choose_alpha, data_residual_proxy, fit_input_side, InputModel, Penalty, VariationalProblem};

use super::config::{ExperimentConfig, Method};
use super::Flags;

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(super) struct Context {
    pub config: ExperimentConfig,
    pub flags: Flags,
    pub out: PathBuf,
    pub hash: String,
    pub op: Box<dyn LinearOperator>,
}

impl Context {
    pub fn new(flags: &Flags) -> Result<Self> {
        let mut config = match &flags.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = flags.seed {
            config.dataset.set_seed(seed);
            config.noise.seed = seed;
        }
        if let Some(d) = flags.delta {
            config.noise.levels = vec![d];
        }
        if let Some(m) = &flags.method {
            config.methods.list = vec![m.parse()?];
        }
        if let Some(o) = &flags.out {
            config.output.dir = o.clone();
        }
        if let Some(a) = flags.alpha {
            if !(a > 0.0) {
                return Err(Error::Config(format!("--alpha must be positive, got {a}")));
            }
        }
        config.validate()?;
        let op = config.build_operator()?;
        let hash = config.hash();
        Ok(Self { out: config.output.dir.clone(), config, flags: flags.clone(), hash, op })
    }

    fn seed(&self) -> u64 {
        self.config.dataset.seed().unwrap_or(0)
    }

    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.out.join(name);
        fs::create_dir_all(&d)?;
        Ok(d)
    }

    fn model_path(&self, kind: &str) -> PathBuf {
        self.out.join("models").join(format!("{kind}.bin"))
    }

    /// Path of a model written by `fit`, checked for existence.
    fn fitted_model(&self, kind: &str) -> Result<PathBuf> {
        let path = self.model_path(kind);
        if !path.is_file() {
            let msg = format!("no {kind} model at {}; run `projreg fit` with the same --out first", path.display());
            return Err(std::io::Error::new(std::io::ErrorKind::NotFound, msg).into());
        }
        Ok(path)
    }

    fn training_set(&self) -> Result<TrainingSet> {
        let images = self.config.dataset.images(self.op.as_ref(), &self.config.operator)?;
        make_pairs(self.op.as_ref(), &images, self.config.training.normalise)
    }

    fn validation(&self) -> Result<(Vec<GridSignal>, Vec<GridSignal>)> {
        let truths = self.config.validation.images(self.op.as_ref(), &self.config.operator)?;
        let clean = truths.iter().map(|u| self.op.apply(u)).collect::<Result<_>>()?;
        Ok((truths, clean))
    }

    /// Data for the single-reconstruction commands: `--data` if given,
    /// otherwise the first validation sample with noise at the first level.
    /// Returns `(y^δ, truth, absolute noise level)`.
    fn observation(&self) -> Result<(GridSignal, Option<GridSignal>, f64)> {
        let level = self.config.noise.levels[0];
        if let Some(p) = &self.flags.data {
            let y = read_csv(p)?;
            if y.len() != self.op.range_dim() {
                return Err(Error::DimensionMismatch { expected: self.op.range_dim(), got: y.len() });
            }
            let y = match self.op.range_shape() {
                Some(s) => y.with_shape_of(Some(s))?,
                None => y,
            };
            let abs = self.flags.delta.map_or(0.0, |d| self.config.noise.spec(d, 0).absolute_level(&y));
            return Ok((y, None, abs));
        }
        let (truths, clean) = self.validation()?;
        let spec = self.config.noise.spec(level, 0);
        let y = add_noise(&clean[0], &spec)?;
        Ok((y, Some(truths[0].clone()), spec.absolute_level(&clean[0])))
    }

    fn provenance_csv(&self, rows: impl IntoIterator<Item = (usize, f64)>) -> String {
        let mut s = String::from("n,value,config_hash,seed,version\n");
        for (n, v) in rows {
            s.push_str(&format!("{n},{v},{},{},{VERSION}\n", self.hash, self.seed()));
        }
        s
    }

    fn write_json(&self, path: &Path, value: &Value) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }
}

fn write_image(dir: &Path, stem: &str, u: &GridSignal) -> Result<()> {
    write_csv(&dir.join(format!("{stem}.csv")), u)?;
    if u.shape().is_some() {
        write_pgm_autoscale(&dir.join(format!("{stem}.pgm")), u)?;
    }
    Ok(())
}

fn as_grid(u: &GridSignal) -> Result<GridSignal> {
    match u.shape() {
        Some(_) => Ok(u.clone()),
        None => u.clone().with_shape_of(Some((1, u.len()))),
    }
}

/// Images as exact CSV plus autoscaled PGM previews, with a manifest.
fn save_images(dir: &Path, images: &[GridSignal], provenance: &str) -> Result<()> {
    let shaped: Vec<GridSignal> = images.iter().map(as_grid).collect::<Result<_>>()?;
    save_dataset(dir, &shaped, ImageFormat::Csv, provenance)?;
    for (i, img) in shaped.iter().enumerate() {
        write_pgm_autoscale(&dir.join(format!("img_{i:05}.pgm")), img)?;
    }
    Ok(())
}

fn check_n(n: usize, len: usize) -> Result<usize> {
    if n == 0 || n > len {
        return Err(Error::InvalidArgument(format!("n = {n} outside 1..={len} retained pairs")));
    }
    Ok(n)
}

fn relative_error(u: &GridSignal, truth: &Option<GridSignal>) -> Result<Option<f64>> {
    truth.as_ref().map(|t| u.relative_error(t)).transpose()
}

pub(super) fn gen(ctx: &Context) -> Result<Value> {
    let images = ctx.config.dataset.images(ctx.op.as_ref(), &ctx.config.operator)?;
    let outputs: Vec<GridSignal> = images.iter().map(|u| ctx.op.apply(u)).collect::<Result<_>>()?;
    let tag = format!("config {} seed {}", ctx.hash, ctx.seed());
    save_images(&ctx.out.join("inputs"), &images, &tag)?;
    save_images(&ctx.out.join("outputs"), &outputs, &tag)?;
    let summary = json!({
        "command": "gen",
        "count": images.len(),
        "input_shape": as_grid(&images[0])?.shape(),
        "output_shape": as_grid(&outputs[0])?.shape(),
        "operator": ctx.config.operator,
        "config_hash": ctx.hash,
        "seed": ctx.seed(),
        "version": VERSION,
    });
    ctx.write_json(&ctx.out.join("manifest.json"), &summary)?;
    Ok(summary)
}

fn wanted(ctx: &Context) -> (bool, bool, bool) {
    let l = &ctx.config.methods.list;
    if ctx.flags.method.is_none() {
        return (true, true, true);
    }
    (
        l.contains(&Method::Projection),
        l.contains(&Method::Dual),
        l.contains(&Method::Tikhonov) || l.contains(&Method::Tv),
    )
}

fn fit_dual_model(ctx: &Context, set: &TrainingSet) -> Result<DualModel> {
    let pairs = make_adjoint_pairs(ctx.op.as_ref(), set.outputs())?;
    fit_dual(&pairs, ctx.config.training.deptol)
}

pub(super) fn fit(ctx: &Context) -> Result<Value> {
    let set = ctx.training_set()?;
    let (p, d, i) = wanted(ctx);
    let mut models = serde_json::Map::new();
    if p {
        let m = ProjectionModel::fit(&set, ctx.config.training.deptol)?;
        models.insert("projection".into(), serde_json::to_value(save_projection(&m, &ctx.model_path("projection"))?)?);
    }
    if d {
        let m = fit_dual_model(ctx, &set)?;
        models.insert("dual".into(), serde_json::to_value(save_dual(&m, &ctx.model_path("dual"))?)?);
    }
    if i {
        let m = fit_input_side(&set, ctx.config.training.deptol)?;
        models.insert("input".into(), serde_json::to_value(save_input(&m, &ctx.model_path("input"))?)?);
    }
    let summary = json!({ "command": "fit", "pairs": set.len(), "models": models, "config_hash": ctx.hash });
    ctx.write_json(&ctx.out.join("models").join("fit.json"), &summary)?;
    Ok(summary)
}

fn finish(ctx: &Context, name: &str, u: &GridSignal, report: Value) -> Result<Value> {
    let dir = ctx.dir(name)?;
    write_image(&dir, "reconstruction", u)?;
    ctx.write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

pub(super) fn reconstruct(ctx: &Context) -> Result<Value> {
    let model = load_projection(&ctx.fitted_model("projection")?)?;
    let (y, truth, noise) = ctx.observation()?;
    let (n, admissible) = match ctx.flags.n {
        Some(n) => (check_n(n, model.len())?, true),
        None => {
            let c = choose_n(&ChoiceRule::with_tau(ctx.config.methods.tau), &model, noise)?;
            (c.n, c.admissible)
        }
    };
    let u = model.reconstruct(&y, n)?.with_shape_of(ctx.op.domain_shape())?;
    let report = json!({
        "command": "reconstruct", "method": "projection", "n": n, "admissible": admissible,
        "noise_level": noise, "relative_error": relative_error(&u, &truth)?, "config_hash": ctx.hash,
    });
    finish(ctx, "reconstruct", &u, report)
}

pub(super) fn dual(ctx: &Context) -> Result<Value> {
    let model = load_dual(&ctx.fitted_model("dual")?)?;
    let (y, truth, noise) = ctx.observation()?;
    let (n, admissible) = match ctx.flags.n {
        Some(n) => (check_n(n, model.len())?, true),
        None => {
            let c = choose_n_dual(&model, noise, ctx.config.methods.tau)?;
            (c.n, c.admissible)
        }
    };
    let u = model.reconstruct_dual(&y, n)?.with_shape_of(ctx.op.domain_shape())?;
    let report = json!({
        "command": "dual", "method": "dual", "n": n, "admissible": admissible,
        "smallest_singular_value": model.smallest_singular(n)?,
        "noise_level": noise, "relative_error": relative_error(&u, &truth)?, "config_hash": ctx.hash,
    });
    finish(ctx, "dual", &u, report)
}

pub(super) fn var(ctx: &Context) -> Result<Value> {
    let model = load_input(&ctx.fitted_model("input")?)?;
    let (y, truth, noise) = ctx.observation()?;
    let penalty = match ctx.flags.method.as_deref().map(str::parse::<Method>).transpose()? {
        None | Some(Method::Tikhonov) => Penalty::Tikhonov,
        Some(Method::Tv) => Penalty::Tv,
        Some(m) => return Err(Error::Config(format!("var supports tikhonov and tv, not {}", m.name()))),
    };
    let n = check_n(ctx.flags.n.unwrap_or(model.len()), model.len())?;
    let rho = data_residual_proxy(&model.output_basis(n)?, &y, n)?;
    let alpha = match ctx.flags.alpha {
        Some(a) => a,
        None => choose_alpha(noise, rho, ctx.config.methods.alpha_constant)?,
    };
    let operator = model.operator(n)?;
    if penalty == Penalty::Tv && operator.domain_shape().is_none() {
        return Err(Error::Config("tv needs an operator with a 2-D image domain".into()));
    }
    let problem = VariationalProblem { operator, data: y, alpha, penalty, controls: ctx.config.solver.clone() };
    let sol = problem.solve()?;
    let (iterations, converged, gap) = match &sol.report {
        Some(r) => (Some(r.iterations), r.converged, Some(r.gap)),
        None => (None, true, None),
    };
    if let Some(r) = sol.report.as_ref().filter(|r| !r.trace.is_empty()) {
        let mut s = String::from("iteration,objective,gap\n");
        for t in &r.trace {
            s.push_str(&format!("{},{},{}\n", t.iteration, t.objective, t.gap));
        }
        fs::write(ctx.dir("var")?.join("trace.csv"), s)?;
    }
    let u = sol.solution.with_shape_of(ctx.op.domain_shape())?;
    let report = json!({
        "command": "var", "penalty": penalty, "n": n, "alpha": alpha, "residual_proxy": rho,
        "objective": sol.objective, "iterations": iterations, "gap": gap, "converged": converged,
        "noise_level": noise, "relative_error": relative_error(&u, &truth)?, "config_hash": ctx.hash,
    });
    let report = finish(ctx, "var", &u, report)?;
    if !converged {
        let msg = format!("TV solver stopped after {} iterations with residual {:e}", iterations.unwrap_or(0), gap.unwrap_or(f64::NAN));
        if ctx.flags.strict {
            return Err(Error::NotConverged(msg));
        }
        log::warn!("{msg}");
    }
    Ok(report)
}

pub(super) fn diagnose(ctx: &Context) -> Result<Value> {
    let dir = ctx.dir("diagnose")?;
    let mut summary = serde_json::Map::new();
    summary.insert("command".into(), json!("diagnose"));
    summary.insert("config_hash".into(), json!(ctx.hash));

    if let OperatorConfig::Seidman { truncation } = ctx.config.operator {
        let d = &ctx.config.diagnose;
        let nmax = d.gamma_ns.iter().max().copied().unwrap_or(0);
        let model = seidman_input_model(truncation, (nmax + d.gamma_width).min(truncation))?;
        let mut entries = Vec::new();
        for &n in &d.gamma_ns {
            let idx: Vec<usize> = (n + 1..=(n + d.gamma_width).min(model.len())).collect();
            if !idx.is_empty() {
                entries.extend(seidman_gamma_sweep(&model, n, &idx)?);
            }
        }
        let max_dev = entries.iter().map(|g| g.max_deviation).fold(0.0, f64::max);
        let lo = 1.0 / (1.0 + std::f64::consts::PI.powi(2) / 6.0);
        let report = json!({
            "truncation": truncation,
            "max_deviation": max_dev,
            "max_gamma1_deviation": entries.iter().map(|g| g.gamma1_deviation).fold(0.0, f64::max),
            "tail_constants_in_bounds": entries.iter().all(|g| g.tail_constant >= lo && g.tail_constant <= 1.0),
            "sum_squares_at_most_one": entries.iter().all(|g| g.sum_squares <= 1.0),
            "signs_alternate": entries.iter().all(|g| g.signs_alternate()),
            "entries": entries.iter().map(|g| json!({
                "n": g.n, "i": g.i, "gamma1_numeric": g.numeric[0], "gamma1_analytic": g.analytic[0],
                "tail_constant": g.tail_constant, "max_deviation": g.max_deviation,
                "sum_squares": g.sum_squares, "condition": g.condition,
            })).collect::<Vec<_>>(),
        });
        ctx.write_json(&dir.join("gamma_oracle.json"), &report)?;
        summary.insert("gamma_max_deviation".into(), json!(max_dev));
    }

    let set = ctx.training_set()?;
    let pm = ProjectionModel::fit(&set, ctx.config.training.deptol)?;
    let im = fit_input_side(&set, ctx.config.training.deptol)?;
    let (truths, clean) = ctx.validation()?;

    let decay = residual_decay_report(&pm)?;
    fs::write(dir.join("residual_decay.csv"), ctx.provenance_csv(decay.grid.iter().copied().zip(decay.values.iter().copied())))?;
    ctx.write_json(&dir.join("residual_decay.json"), &serde_json::to_value(&decay)?)?;
    summary.insert("residual_decay".into(), json!(decay.verdict));

    let grid: Vec<usize> = (1..=im.len()).collect();
    let l1 = l1_partial_sums(&im, &truths[0], &grid)?;
    fs::write(dir.join("l1_partial_sums.csv"), ctx.provenance_csv(l1.grid.iter().copied().zip(l1.values.iter().copied())))?;
    ctx.write_json(&dir.join("l1_partial_sums.json"), &serde_json::to_value(&l1)?)?;
    summary.insert("l1_coefficients".into(), json!(l1.verdict));

    match strong_condition_check(&pm, &im, &clean[0]) {
        Ok(r) => {
            ctx.write_json(&dir.join("strong_condition.json"), &serde_json::to_value(&r)?)?;
            summary.insert("strong_condition".into(), json!(r.verdict()));
        }
        Err(Error::ModelMismatch(m)) => {
            summary.insert("strong_condition".into(), json!({ "skipped": m }));
        }
        Err(e) => return Err(e),
    }
    match ubar_bounds_check(&pm, &im) {
        Ok(b) => {
            let holds = b.all_hold(1e-8);
            ctx.write_json(&dir.join("ubar_bounds.json"), &serde_json::to_value(&b)?)?;
            summary.insert("ubar_bounds_hold".into(), json!(holds));
        }
        Err(Error::ModelMismatch(m)) => {
            summary.insert("ubar_bounds_hold".into(), json!({ "skipped": m }));
        }
        Err(e) => return Err(e),
    }
    let summary = Value::Object(summary);
    ctx.write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn curve_file(method: Method, delta: f64) -> String {
    format!("{}_delta_{delta:e}.csv", method.name())
}

pub(super) fn experiment(ctx: &Context) -> Result<Value> {
    let set = ctx.training_set()?;
    let (truths, clean) = ctx.validation()?;
    let deltas = &ctx.config.noise.levels;
    let dir = ctx.dir("curves")?;
    let methods = &ctx.config.methods.list;
    let need_input = methods.iter().any(|m| matches!(m, Method::Tikhonov | Method::Tv));
    let pm = if methods.contains(&Method::Projection) { Some(ProjectionModel::fit(&set, ctx.config.training.deptol)?) } else { None };
    let dm = if methods.contains(&Method::Dual) { Some(fit_dual_model(ctx, &set)?) } else { None };
    let im: Option<InputModel> = if need_input { Some(fit_input_side(&set, ctx.config.training.deptol)?) } else { None };
    let basis = im.as_ref().map(|m| m.output_basis(m.len())).transpose()?;

    let mut curves_out = Vec::new();
    for &method in methods {
        let (cm, len) = match method {
            Method::Projection => {
                let m = pm.as_ref().unwrap();
                (CurveMethod::Projection(m), m.len())
            }
            Method::Dual => {
                let m = dm.as_ref().unwrap();
                (CurveMethod::Dual(m), m.len())
            }
            Method::Tikhonov | Method::Tv => {
                let m = im.as_ref().unwrap();
                let penalty = if method == Method::Tv { Penalty::Tv } else { Penalty::Tikhonov };
                let cm = CurveMethod::Variational {
                    model: m,
                    penalty,
                    alpha_constant: ctx.config.methods.alpha_constant,
                    output_basis: basis.as_ref(),
                    controls: &ctx.config.solver,
                };
                (cm, m.len())
            }
        };
        let grid: Vec<usize> = ctx.config.training.grid.iter().copied().filter(|&n| n <= len).collect();
        if grid.is_empty() {
            return Err(Error::Config(format!("no grid point fits the {len} retained pairs of the {} model", method.name())));
        }
        if grid.len() < ctx.config.training.grid.len() {
            log::warn!("{} model retains {len} pairs; grid truncated", method.name());
        }
        let curves: Vec<ErrorCurve> = semiconvergence_curves(&cm, &truths, &clean, deltas, &grid, ctx.config.noise.seed)?;
        for c in curves {
            let file = curve_file(method, c.delta);
            fs::write(dir.join(&file), ctx.provenance_csv(c.grid.iter().copied().zip(c.errors.iter().copied())))?;
            curves_out.push(json!({
                "method": method, "delta": c.delta, "file": file, "argmin": c.argmin,
                "min_error": c.min_error(), "interior_argmin": c.has_interior_argmin(), "retained": len,
            }));
        }
    }
    let summary = json!({ "command": "experiment", "curves": curves_out, "config_hash": ctx.hash, "seed": ctx.seed(), "version": VERSION });
    ctx.write_json(&ctx.dir("experiment")?.join("summary.json"), &summary)?;
    Ok(summary)
}
