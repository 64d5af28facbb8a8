//! Experiment configuration: TOML schema, defaults, overrides and
//! line-referenced validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use skilldyn_core::geometry::LossKind;
use skilldyn_core::mlp::Composition;
use skilldyn_core::resource::Gate;
use skilldyn_core::{Algo, OptimizerSpec, Variant, VectorMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    TwoTask,
    #[default]
    Geometry,
    DimSweep,
    StepScaling,
    Resource,
    N0Response,
    Domino,
    Quadratic,
    Collapse,
    Compositional,
    Grokking,
    Modularity,
    ParityScaling,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::TwoTask => "two_task",
            Kind::Geometry => "geometry",
            Kind::DimSweep => "dim_sweep",
            Kind::StepScaling => "step_scaling",
            Kind::Resource => "resource",
            Kind::N0Response => "n0_response",
            Kind::Domino => "domino",
            Kind::Quadratic => "quadratic",
            Kind::Collapse => "collapse",
            Kind::Compositional => "compositional",
            Kind::Grokking => "grokking",
            Kind::Modularity => "modularity",
            Kind::ParityScaling => "parity_scaling",
        }
    }

    /// Sweep axes that make sense for this experiment.
    pub fn sweep_axes(self) -> &'static [&'static str] {
        match self {
            Kind::TwoTask => &["p1", "n_dim", "batch_size", "lr", "optimizers"],
            Kind::Geometry => &["n_dim", "alpha", "lr", "batch_size", "noise_sigma", "mode", "optimizers"],
            Kind::DimSweep => &["n_dim", "alpha", "optimizers"],
            Kind::StepScaling => &["alpha", "n_dim", "lr", "mode", "optimizers"],
            Kind::Resource => &["alpha", "n0"],
            Kind::N0Response => &["lr", "noise_sigma", "batch_size"],
            Kind::Domino => &["alpha"],
            Kind::Quadratic => &["lr", "optimizers"],
            Kind::Collapse => &["alpha", "lr", "optimizers"],
            Kind::Grokking => &["lr", "optimizers"],
            Kind::Compositional | Kind::Modularity | Kind::ParityScaling => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Kind,
    pub seeds: Vec<u64>,
    /// Output directory; empty means `runs/<experiment>`.
    pub out: String,
    /// Record every this many steps; 0 picks about 1000 records per run.
    pub record_every: usize,
    /// Worker threads; 0 = all available cores.
    pub jobs: usize,
    pub optimizer: OptimizerSection,
    pub geometry: GeometrySection,
    pub resource: ResourceSection,
    pub domino: DominoSection,
    pub quadratic: QuadraticSection,
    pub mlplab: MlplabSection,
    pub fit: FitSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Kind::default(),
            seeds: vec![0],
            out: String::new(),
            record_every: 0,
            jobs: 0,
            optimizer: OptimizerSection::default(),
            geometry: GeometrySection::default(),
            resource: ResourceSection::default(),
            domino: DominoSection::default(),
            quadratic: QuadraticSection::default(),
            mlplab: MlplabSection::default(),
            fit: FitSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub algo: Algo,
    pub lr: f64,
    /// Unset picks the algorithm's default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    pub beta3: f64,
    pub mix_alpha: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerSpec::signgd(3e-4);
        Self {
            algo: d.algo,
            lr: d.lr,
            beta1: None,
            beta2: None,
            beta3: d.beta3,
            mix_alpha: d.mix_alpha,
            eps: d.eps,
            weight_decay: d.weight_decay,
        }
    }
}

impl OptimizerSection {
    pub fn spec(&self) -> OptimizerSpec {
        let base = OptimizerSpec::new(self.algo, self.lr);
        OptimizerSpec {
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            beta3: self.beta3,
            mix_alpha: self.mix_alpha,
            eps: self.eps,
            weight_decay: self.weight_decay,
            ..base
        }
    }

    fn resolve(&mut self) {
        let s = self.spec();
        self.beta1 = Some(s.beta1);
        self.beta2 = Some(s.beta2);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub n_task: usize,
    pub n_dim: usize,
    pub alpha: f64,
    pub loss: LossKind,
    pub mode: VectorMode,
    pub n_steps: usize,
    /// 0 = exact gradient.
    pub batch_size: usize,
    pub noise_sigma: f64,
    /// Record per-task aligned-coordinate counts.
    pub align: bool,
    /// Stop once the last `plateau_records` totals vary by less than
    /// `plateau_rtol`; 0 disables.
    pub plateau_records: usize,
    pub plateau_rtol: f64,
    /// Frequency of the first task in two-task runs.
    pub p1: f64,
    /// Two-task convergence level on each task's loss.
    pub threshold: f64,
    /// Two-task step budget.
    pub max_steps: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            n_task: 10,
            n_dim: 1000,
            alpha: 2.0,
            loss: LossKind::Mse,
            mode: VectorMode::Random,
            n_steps: 3000,
            batch_size: 0,
            noise_sigma: 0.0,
            align: false,
            plateau_records: 0,
            plateau_rtol: 1e-6,
            p1: 0.8,
            threshold: 0.01,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistChoice {
    #[default]
    PowerLaw,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceSection {
    pub n_task: usize,
    pub alpha: f64,
    pub dist: DistChoice,
    /// Explicit frequencies; overrides `n_task`, `alpha` and `dist`.
    pub p: Vec<f64>,
    pub variant: Variant,
    /// Dimension of the random task vectors behind the correlated variants.
    pub n_dim: usize,
    pub n0: f64,
    pub eta_eff: f64,
    pub t_end: f64,
    pub dt_max: f64,
    pub n_points: usize,
    /// Completion level on each task's unskill.
    pub threshold: f64,
    /// Fit window for `N0` calibration, as fractions of the run.
    pub calib_window: [f64; 2],
    pub gates: Vec<Gate>,
}

impl Default for ResourceSection {
    fn default() -> Self {
        Self {
            n_task: 5,
            alpha: 2.0,
            dist: DistChoice::PowerLaw,
            p: Vec::new(),
            variant: Variant::IndependentMse,
            n_dim: 1000,
            n0: 0.01,
            eta_eff: 1.0,
            t_end: 100.0,
            dt_max: 0.01,
            n_points: 1001,
            threshold: 0.01,
            calib_window: [0.0, 1.0],
            gates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominoSection {
    pub n_task: usize,
    pub t0: f64,
    /// 0 = all tasks learnable.
    pub n_learnable: usize,
    pub alpha: f64,
    /// 0 = until the last learnable task completes.
    pub t_end: f64,
    pub n_points: usize,
}

impl Default for DominoSection {
    fn default() -> Self {
        Self {
            n_task: 10,
            t0: 1.0,
            n_learnable: 0,
            alpha: 2.0,
            t_end: 0.0,
            n_points: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticSection {
    pub rotated: bool,
    /// Empty = built-in hierarchical weights.
    pub weights: Vec<f64>,
    /// Starting point in the eigenbasis.
    pub x0: Vec<f64>,
    pub n_steps: usize,
    /// Drop times are measured at this fraction of each component's start.
    pub level: f64,
}

impl Default for QuadraticSection {
    fn default() -> Self {
        Self {
            rotated: true,
            weights: Vec::new(),
            x0: vec![1.0; 4],
            n_steps: 5000,
            level: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlplabSection {
    pub compositional: CompositionalSection,
    pub grokking: GrokkingSection,
    pub modularity: ModularitySection,
    pub parity: ParitySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositionalSection {
    pub variants: Vec<Composition>,
    pub n_bits: usize,
    pub hidden: usize,
    pub n_samples: usize,
    pub n_eval: usize,
    pub lr: f64,
    pub n_steps: usize,
    pub eval_every: usize,
    pub threshold: f64,
}

impl Default for CompositionalSection {
    fn default() -> Self {
        let d = skilldyn_core::mlp::CompositionalConfig::new(Composition::Dependent, 0);
        Self {
            variants: vec![Composition::Dependent, Composition::Ablation],
            n_bits: d.n_bits,
            hidden: d.hidden,
            n_samples: d.n_samples,
            n_eval: d.n_eval,
            lr: d.lr,
            n_steps: d.n_steps,
            eval_every: d.eval_every,
            threshold: d.threshold,
        }
    }
}

/// Optimizer, learning rate and weight decay come from the optimizer
/// section or the optimizer sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrokkingSection {
    pub p: usize,
    pub embed_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub train_frac: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub embed_scale: f64,
}

impl Default for GrokkingSection {
    fn default() -> Self {
        let d = skilldyn_core::mlp::GrokkingConfig::new(Algo::Adam, 0.0, 0);
        Self {
            p: d.p,
            embed_dim: d.embed_dim,
            width: d.width,
            depth: d.depth,
            train_frac: d.train_frac,
            n_steps: d.n_steps,
            batch_size: d.batch_size,
            eval_every: d.eval_every,
            embed_scale: d.embed_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModularitySection {
    pub n_points: usize,
    pub n_eval: usize,
    pub y_zero_prob: f64,
    pub width: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub threshold: f64,
    pub eval_every: usize,
}

impl Default for ModularitySection {
    fn default() -> Self {
        let d = skilldyn_core::mlp::ModularityConfig::new(false, 0);
        Self {
            n_points: d.n_points,
            n_eval: d.n_eval,
            y_zero_prob: d.y_zero_prob,
            width: d.width,
            lr: d.lr,
            batch_size: d.batch_size,
            max_steps: d.max_steps,
            threshold: d.threshold,
            eval_every: d.eval_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParitySection {
    pub betas: Vec<[f64; 2]>,
    pub widths: Vec<usize>,
    pub alphas: Vec<f64>,
    pub n_tasks: usize,
    pub n: usize,
    pub k: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub n_steps: usize,
    pub eval_every: usize,
    pub eval_per_task: usize,
}

impl Default for ParitySection {
    fn default() -> Self {
        let d = skilldyn_core::mlp::ParityScalingConfig::desk();
        Self {
            betas: d.betas.iter().map(|&(a, b)| [a, b]).collect(),
            widths: d.widths,
            alphas: d.alphas,
            n_tasks: d.n_tasks,
            n: d.n,
            k: d.k,
            batch_size: d.batch_size,
            lr: d.lr,
            n_steps: d.n_steps,
            eval_every: d.eval_every,
            eval_per_task: d.eval_per_task,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Abscissa window for power-law fits.
    pub lo: f64,
    pub hi: f64,
    /// Share of each run averaged into its final loss.
    pub tail_fraction: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
            tail_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub p1: Vec<f64>,
    pub n_dim: Vec<usize>,
    pub alpha: Vec<f64>,
    pub lr: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub noise_sigma: Vec<f64>,
    pub n0: Vec<f64>,
    pub mode: Vec<VectorMode>,
    pub optimizers: Vec<OptimizerSection>,
}

impl SweepSection {
    fn axis_len(&self, name: &str) -> usize {
        match name {
            "p1" => self.p1.len(),
            "n_dim" => self.n_dim.len(),
            "alpha" => self.alpha.len(),
            "lr" => self.lr.len(),
            "batch_size" => self.batch_size.len(),
            "noise_sigma" => self.noise_sigma.len(),
            "n0" => self.n0.len(),
            "mode" => self.mode.len(),
            "optimizers" => self.optimizers.len(),
            _ => 0,
        }
    }

    const AXES: [&'static str; 9] = [
        "p1",
        "n_dim",
        "alpha",
        "lr",
        "batch_size",
        "noise_sigma",
        "n0",
        "mode",
        "optimizers",
    ];
}

/// One validation problem, located by key path and (when known) line.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.path.is_empty()) {
            (Some(l), false) => write!(f, "line {l}: `{}`: {}", self.path, self.message),
            (Some(l), true) => write!(f, "line {l}: {}", self.message),
            (None, false) => write!(f, "`{}`: {}", self.path, self.message),
            (None, true) => write!(f, "{}", self.message),
        }
    }
}

/// Aggregated validation failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_name: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {} error(s)", self.source_name, self.diagnostics.len())?;
        for d in &self.diagnostics {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    /// Parses, applies `overrides` (`dotted.key=toml-value`), checks the
    /// schema and ranges, and fills every derived default.
    pub fn load(text: &str, source_name: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let fail = |diagnostics: Vec<Diagnostic>| ConfigError {
            source_name: source_name.to_string(),
            diagnostics,
        };
        let (lines, syntax) = key_lines(text);
        if !syntax.is_empty() {
            return Err(fail(syntax));
        }
        let mut table: toml::Table = toml::from_str(text).map_err(|e| fail(vec![toml_diag(text, &e)]))?;
        let schema = schema_table();
        let mut diags = Vec::new();
        unknown_keys(&table, &schema, "", &lines, &mut diags);
        if !diags.is_empty() {
            return Err(fail(diags));
        }
        // Type errors in the file itself carry a span.
        if let Err(e) = toml::from_str::<ExperimentConfig>(text) {
            return Err(fail(vec![toml_diag(text, &e)]));
        }
        for o in overrides {
            if let Err(msg) = apply_override(&mut table, o) {
                diags.push(Diagnostic {
                    line: None,
                    path: String::new(),
                    message: format!("--override {o}: {msg}"),
                });
            }
        }
        unknown_keys(&table, &schema, "", &lines, &mut diags);
        if !diags.is_empty() {
            return Err(fail(diags));
        }
        let mut cfg = ExperimentConfig::deserialize(toml::Value::Table(table)).map_err(|e| {
            fail(vec![Diagnostic {
                line: None,
                path: String::new(),
                message: format!("after overrides: {}", e.message().trim()),
            }])
        })?;
        let mut diags: Vec<Diagnostic> = cfg
            .range_errors()
            .into_iter()
            .map(|(path, message)| Diagnostic {
                line: find_line(&lines, &path),
                path,
                message,
            })
            .collect();
        diags.sort_by_key(|d| (d.line.unwrap_or(usize::MAX), d.path.clone()));
        if !diags.is_empty() {
            return Err(fail(diags));
        }
        cfg.resolve();
        Ok(cfg)
    }

    /// Fills defaults that depend on other keys.
    pub fn resolve(&mut self) {
        self.optimizer.resolve();
        self.sweep.optimizers.iter_mut().for_each(OptimizerSection::resolve);
        if self.record_every == 0 {
            self.record_every = (self.geometry.n_steps / 1000).max(1);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every out-of-range value as `(key path, message)`.
    pub fn range_errors(&self) -> Vec<(String, String)> {
        let mut e = Vec::new();
        let mut check = |ok: bool, path: &str, msg: &str| {
            if !ok {
                e.push((path.to_string(), msg.to_string()));
            }
        };
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        let frac = |x: f64| x > 0.0 && x < 1.0;

        check(!self.seeds.is_empty(), "seeds", "must list at least one seed");
        check_optimizer(&self.optimizer, "optimizer", &mut check);
        for (i, o) in self.sweep.optimizers.iter().enumerate() {
            check_optimizer(o, &format!("sweep.optimizers[{i}]"), &mut check);
        }

        let g = &self.geometry;
        check(g.n_task > 0, "geometry.n_task", "must be > 0");
        check(g.n_dim > 0, "geometry.n_dim", "must be > 0");
        check(nonneg(g.alpha), "geometry.alpha", "must be >= 0");
        check(g.n_steps > 0, "geometry.n_steps", "must be > 0");
        check(nonneg(g.noise_sigma), "geometry.noise_sigma", "must be >= 0");
        check(pos(g.plateau_rtol), "geometry.plateau_rtol", "must be > 0");
        check(frac(g.p1), "geometry.p1", "must lie in (0, 1)");
        check(pos(g.threshold), "geometry.threshold", "must be > 0");
        check(g.max_steps > 0, "geometry.max_steps", "must be > 0");

        let r = &self.resource;
        check(r.n_task > 0 || !r.p.is_empty(), "resource.n_task", "must be > 0");
        check(nonneg(r.alpha), "resource.alpha", "must be >= 0");
        check(r.p.iter().all(|&x| pos(x)), "resource.p", "frequencies must be > 0");
        check(nonneg(r.n0), "resource.n0", "must be >= 0");
        check(pos(r.eta_eff), "resource.eta_eff", "must be > 0");
        check(pos(r.t_end), "resource.t_end", "must be > 0");
        check(pos(r.dt_max), "resource.dt_max", "must be > 0");
        check(r.n_points >= 2, "resource.n_points", "must be >= 2");
        check(pos(r.threshold), "resource.threshold", "must be > 0");
        check(
            r.calib_window[0] >= 0.0 && r.calib_window[0] < r.calib_window[1] && r.calib_window[1] <= 1.0,
            "resource.calib_window",
            "must satisfy 0 <= lo < hi <= 1",
        );
        check(
            r.variant == Variant::IndependentMse || r.n_dim > 0,
            "resource.n_dim",
            "correlated variants need n_dim > 0",
        );
        let n_res = if r.p.is_empty() { r.n_task } else { r.p.len() };
        for (i, gate) in r.gates.iter().enumerate() {
            check(
                gate.task < n_res && gate.parents.iter().all(|&p| p < n_res),
                &format!("resource.gates[{i}]"),
                "task indices must be below the number of tasks",
            );
            check(nonneg(gate.gamma), &format!("resource.gates[{i}].gamma"), "must be >= 0");
        }

        let d = &self.domino;
        check(d.n_task > 0, "domino.n_task", "must be > 0");
        check(pos(d.t0), "domino.t0", "must be > 0");
        check(d.n_learnable <= d.n_task, "domino.n_learnable", "must not exceed n_task");
        check(nonneg(d.alpha), "domino.alpha", "must be >= 0");
        check(nonneg(d.t_end), "domino.t_end", "must be >= 0");
        check(d.n_points >= 2, "domino.n_points", "must be >= 2");

        let q = &self.quadratic;
        let dim = if q.weights.is_empty() { 4 } else { q.weights.len() };
        check(q.weights.iter().all(|&w| pos(w)), "quadratic.weights", "must be > 0");
        check(!q.rotated || dim == 4, "quadratic.rotated", "the Hadamard rotation needs 4 weights");
        check(q.x0.len() == dim, "quadratic.x0", "length must match the weights");
        check(q.n_steps > 0, "quadratic.n_steps", "must be > 0");
        check(frac(q.level), "quadratic.level", "must lie in (0, 1)");

        let c = &self.mlplab.compositional;
        check(!c.variants.is_empty(), "mlplab.compositional.variants", "must be non-empty");
        check(c.n_bits >= 8, "mlplab.compositional.n_bits", "must be >= 8");
        check(c.hidden > 0, "mlplab.compositional.hidden", "must be > 0");
        check(c.n_samples > 0 && c.n_eval > 0, "mlplab.compositional.n_samples", "must be > 0");
        check(pos(c.lr), "mlplab.compositional.lr", "must be > 0");
        check(c.eval_every > 0, "mlplab.compositional.eval_every", "must be > 0");
        check(c.threshold > 0.0 && c.threshold <= 1.0, "mlplab.compositional.threshold", "must lie in (0, 1]");

        let k = &self.mlplab.grokking;
        check(k.p >= 2, "mlplab.grokking.p", "must be >= 2");
        check(k.embed_dim > 0 && k.width > 0, "mlplab.grokking.width", "must be > 0");
        check(frac(k.train_frac), "mlplab.grokking.train_frac", "must lie in (0, 1)");
        check(k.eval_every > 0, "mlplab.grokking.eval_every", "must be > 0");
        check(pos(k.embed_scale), "mlplab.grokking.embed_scale", "must be > 0");

        let m = &self.mlplab.modularity;
        check(m.n_points > 0 && m.n_eval > 0, "mlplab.modularity.n_points", "must be > 0");
        check(
            (0.0..1.0).contains(&m.y_zero_prob),
            "mlplab.modularity.y_zero_prob",
            "must lie in [0, 1)",
        );
        check(m.width >= 2, "mlplab.modularity.width", "must be >= 2");
        check(pos(m.lr), "mlplab.modularity.lr", "must be > 0");
        check(pos(m.threshold), "mlplab.modularity.threshold", "must be > 0");
        check(m.eval_every > 0, "mlplab.modularity.eval_every", "must be > 0");

        let p = &self.mlplab.parity;
        check(!p.betas.is_empty(), "mlplab.parity.betas", "must be non-empty");
        check(
            p.betas.iter().flatten().all(|b| (0.0..1.0).contains(b)),
            "mlplab.parity.betas",
            "must lie in [0, 1)",
        );
        check(!p.widths.is_empty() && !p.widths.contains(&0), "mlplab.parity.widths", "must be non-empty and > 0");
        check(!p.alphas.is_empty(), "mlplab.parity.alphas", "must be non-empty");
        check(p.alphas.iter().all(|&a| nonneg(a)), "mlplab.parity.alphas", "must be >= 0");
        check(p.k > 0 && p.k <= p.n, "mlplab.parity.k", "must lie in 1..=n");
        check(pos(p.lr), "mlplab.parity.lr", "must be > 0");
        check(p.eval_every > 0, "mlplab.parity.eval_every", "must be > 0");

        let f = &self.fit;
        check(!f.lo.is_nan() && !f.hi.is_nan() && f.lo < f.hi, "fit.lo", "window must satisfy lo < hi");
        check(f.tail_fraction > 0.0 && f.tail_fraction <= 1.0, "fit.tail_fraction", "must lie in (0, 1]");

        let s = &self.sweep;
        check(s.p1.iter().all(|&x| frac(x)), "sweep.p1", "values must lie in (0, 1)");
        check(!s.n_dim.contains(&0), "sweep.n_dim", "values must be > 0");
        check(s.alpha.iter().all(|&x| nonneg(x)), "sweep.alpha", "values must be >= 0");
        check(s.lr.iter().all(|&x| pos(x)), "sweep.lr", "values must be > 0");
        check(s.noise_sigma.iter().all(|&x| nonneg(x)), "sweep.noise_sigma", "values must be >= 0");
        check(s.n0.iter().all(|&x| nonneg(x)), "sweep.n0", "values must be >= 0");
        let allowed = self.experiment.sweep_axes();
        for axis in SweepSection::AXES {
            if s.axis_len(axis) > 0 && !allowed.contains(&axis) {
                check(
                    false,
                    &format!("sweep.{axis}"),
                    &format!("does not apply to experiment `{}`", self.experiment.name()),
                );
            }
        }
        if self.experiment == Kind::DimSweep {
            check(!s.n_dim.is_empty(), "sweep.n_dim", "a dimension sweep needs at least one n_dim");
        }
        if self.experiment == Kind::N0Response {
            check(
                !(s.lr.is_empty() && s.noise_sigma.is_empty() && s.batch_size.is_empty()),
                "sweep",
                "an N0 response needs a grid in sweep.lr, sweep.noise_sigma or sweep.batch_size",
            );
        }
        e
    }
}

fn check_optimizer(o: &OptimizerSection, path: &str, check: &mut impl FnMut(bool, &str, &str)) {
    check(o.lr > 0.0 && o.lr.is_finite(), &format!("{path}.lr"), "must be > 0");
    for (name, b) in [("beta1", o.beta1), ("beta2", o.beta2)] {
        if let Some(b) = b {
            check((0.0..1.0).contains(&b), &format!("{path}.{name}"), "must lie in [0, 1)");
        }
    }
    check((0.0..1.0).contains(&o.beta3), &format!("{path}.beta3"), "must lie in [0, 1)");
    check(o.eps > 0.0, &format!("{path}.eps"), "must be > 0");
    check(o.weight_decay >= 0.0, &format!("{path}.weight_decay"), "must be >= 0");
    check(o.mix_alpha >= 0.0, &format!("{path}.mix_alpha"), "must be >= 0");
}

/// The resolved default config as a table, with one template element in
/// each array of tables.
fn schema_table() -> toml::Table {
    let mut cfg = ExperimentConfig::default();
    cfg.sweep.optimizers.push(OptimizerSection::default());
    cfg.resource.gates.push(Gate::and(0, vec![], 0.0));
    cfg.resolve();
    toml::Table::try_from(&cfg).expect("config serializes")
}

fn unknown_keys(
    table: &toml::Table,
    schema: &toml::Table,
    prefix: &str,
    lines: &BTreeMap<String, usize>,
    diags: &mut Vec<Diagnostic>,
) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let Some(expected) = schema.get(k) else {
            let mut known: Vec<&str> = schema.keys().map(String::as_str).collect();
            known.sort_unstable();
            diags.push(Diagnostic {
                line: find_line(lines, &path),
                path,
                message: format!("unknown key; expected one of: {}", known.join(", ")),
            });
            continue;
        };
        match (v, expected) {
            (toml::Value::Table(t), toml::Value::Table(s)) => unknown_keys(t, s, &path, lines, diags),
            (toml::Value::Array(items), toml::Value::Array(tmpl)) => {
                if let Some(toml::Value::Table(s)) = tmpl.first() {
                    for (i, item) in items.iter().enumerate() {
                        if let toml::Value::Table(t) = item {
                            unknown_keys(t, s, &format!("{path}[{i}]"), lines, diags);
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

/// Line (1-based) of every key path in the document, plus syntax errors.
fn key_lines(text: &str) -> (BTreeMap<String, usize>, Vec<Diagnostic>) {
    let (doc, errors) = toml::de::DeTable::parse_recoverable(text);
    let diags = errors.iter().map(|e| toml_diag(text, e)).collect();
    let mut out = BTreeMap::new();
    walk_spans(doc.get_ref(), "", text, &mut out);
    (out, diags)
}

fn walk_spans(table: &toml::de::DeTable<'_>, prefix: &str, text: &str, out: &mut BTreeMap<String, usize>) {
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.get_ref().to_string()
        } else {
            format!("{prefix}.{}", k.get_ref())
        };
        out.entry(path.clone()).or_insert_with(|| line_of(text, k.span().start));
        match v.get_ref() {
            toml::de::DeValue::Table(t) => walk_spans(t, &path, text, out),
            toml::de::DeValue::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    let ipath = format!("{path}[{i}]");
                    out.entry(ipath.clone()).or_insert_with(|| line_of(text, item.span().start));
                    if let toml::de::DeValue::Table(t) = item.get_ref() {
                        walk_spans(t, &ipath, text, out);
                    }
                }
            }
            _ => {}
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `path` or of its nearest listed ancestor.
fn find_line(lines: &BTreeMap<String, usize>, path: &str) -> Option<usize> {
    let mut p = path;
    loop {
        if let Some(&l) = lines.get(p) {
            return Some(l);
        }
        p = &p[..p.rfind(['.', '['])?];
    }
}

fn toml_diag(text: &str, e: &toml::de::Error) -> Diagnostic {
    Diagnostic {
        line: e.span().map(|s| line_of(text, s.start)),
        path: String::new(),
        message: e.message().trim().to_string(),
    }
}

/// Sets `dotted.path = value`, parsing the value as TOML and falling back to
/// a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), String> {
    let (path, raw) = spec.split_once('=').ok_or("expected key=value")?;
    let path = path.trim();
    if path.is_empty() {
        return Err("empty key".into());
    }
    let value = parse_value(raw.trim());
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().expect("split yields one item");
    let mut cur = table;
    for k in keys {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("`{k}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
