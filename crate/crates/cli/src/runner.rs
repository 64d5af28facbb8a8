//! Executes validated configs: expands sweep cells, runs them on a bounded
//! pool, writes per-cell artifacts atomically and a manifest at the end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use skilldyn_core::domino::{self, DominoConfig};
use skilldyn_core::geometry::{
    self, tail_mean_loss, two_task_times, Plateau, RunOptions, ScalingRunConfig, TwoTaskConfig,
};
use skilldyn_core::mlp::{
    experiment_compositional_parity, experiment_grokking, experiment_modularity, experiment_parity_scaling,
    final_loss_vs_params, CompositionalConfig, GrokkingConfig, ModularityConfig, ModularityPoint,
    ParityScalingConfig, RunResult,
};
use skilldyn_core::quadratic::{self, hadamard4, run_quadratic, QuadraticLoss};
use skilldyn_core::resource::{
    self, collapse_curves, completion_times, fit_geometry_run, GateSet, ResponseAxis, ResponseConfig,
};
use skilldyn_core::domino::scaling_exponents;
use skilldyn_core::scaling::{exponent_report, fit_powerlaw, Axis, Source, Window};
use skilldyn_core::{
    OptimizerSpec, ResourceSystem, TaskDistribution, TaskVectorSet, Trajectory, Variant, VectorMode,
};

use crate::config::{DistChoice, ExperimentConfig, Kind, OptimizerSection};

/// One named configuration inside a run; presets may bundle several.
#[derive(Debug, Clone)]
pub struct Subrun {
    /// Subdirectory; empty writes into the run directory itself.
    pub name: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedCell {
    pub subrun: String,
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub cells: usize,
    pub failed: Vec<FailedCell>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    /// 0 success, 2 nothing succeeded, 3 some cells failed.
    pub fn exit_code(&self) -> i32 {
        match self.failed.len() {
            0 => 0,
            n if n >= self.cells => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_hashes: Vec<(String, String)>,
    cells: usize,
    failed: &'a [FailedCell],
    files: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Runs every subrun into `out`. Output directories must be empty or hold a
/// previous run (identified by its manifest), whose files are replaced.
pub fn run(subruns: &[Subrun], out: &Path) -> Result<RunReport> {
    prepare_dir(out)?;
    let mut report = RunReport::default();
    let mut hashes = Vec::new();
    for sub in subruns {
        let dir = if sub.name.is_empty() { out.to_path_buf() } else { out.join(&sub.name) };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let toml_text = sub.config.to_toml();
        write_atomic(&dir.join("config.toml"), toml_text.as_bytes())?;
        hashes.push((sub.name.clone(), sha256_hex(toml_text.as_bytes())));
        let ctx = Ctx {
            dir,
            subrun: sub.name.clone(),
            failed: Mutex::new(Vec::new()),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(sub.config.jobs)
            .build()
            .context("building worker pool")?;
        let cells = pool.install(|| execute(&sub.config, &ctx))?;
        report.cells += cells;
        report.failed.extend(ctx.failed.into_inner().expect("no poisoned lock"));
    }
    let mut files = Vec::new();
    collect_files(out, &mut files)?;
    files.retain(|p| p != &out.join(MANIFEST));
    files.sort();
    let entries = files
        .iter()
        .map(|p| {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ManifestEntry {
                path: rel_path(out, p),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        config_hashes: hashes,
        cells: report.cells,
        failed: &report.failed,
        files: entries,
    };
    write_atomic(&out.join(MANIFEST), &serde_json::to_vec_pretty(&manifest)?)?;
    report.files = files;
    Ok(report)
}

fn prepare_dir(out: &Path) -> Result<()> {
    if !out.exists() {
        return fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()));
    }
    let mut existing = Vec::new();
    collect_files(out, &mut existing)?;
    if existing.is_empty() {
        return Ok(());
    }
    let manifest = out.join(MANIFEST);
    if !manifest.exists() {
        bail!("{} is not empty and holds no previous run; pick another --out", out.display());
    }
    let old: serde_json::Value = serde_json::from_slice(&fs::read(&manifest)?)
        .with_context(|| format!("reading {}", manifest.display()))?;
    let listed: Vec<PathBuf> = old["files"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|e| e["path"].as_str())
        .map(|p| out.join(p))
        .collect();
    if let Some(stray) = existing.iter().find(|p| **p != manifest && !listed.contains(p)) {
        bail!("{} holds {} which the previous manifest does not list", out.display(), stray.display());
    }
    for p in listed.iter().chain(std::iter::once(&manifest)) {
        if p.exists() {
            fs::remove_file(p).with_context(|| format!("removing {}", p.display()))?;
        }
    }
    Ok(())
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn rel_path(base: &Path, p: &Path) -> String {
    p.strip_prefix(base)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| anyhow!("no file name in {}", path.display()))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

struct Ctx {
    dir: PathBuf,
    subrun: String,
    failed: Mutex<Vec<FailedCell>>,
}

impl Ctx {
    fn fail(&self, cell: &str, err: &anyhow::Error) {
        self.failed.lock().expect("no poisoned lock").push(FailedCell {
            subrun: self.subrun.clone(),
            cell: cell.to_string(),
            error: format!("{err:#}"),
        });
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, &serde_json::to_vec_pretty(value)?)
    }

    fn write_table(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        self.write(name, &w.into_inner().map_err(|e| anyhow!("{e}"))?)
    }

    fn write_traj(&self, name: &str, traj: &Trajectory) -> Result<()> {
        self.write(name, traj.to_csv_string()?.as_bytes())
    }

    fn write_run(&self, name: &str, run: &RunResult) -> Result<()> {
        let mut buf = Vec::new();
        run.write_csv(&mut buf)?;
        self.write(name, &buf)
    }

    /// Runs `f` on every cell in parallel; failures are recorded and
    /// dropped, successes come back in cell order.
    fn par_cells<'c, T: Send>(&self, cells: &'c [Cell], f: impl Fn(&Cell) -> Result<T> + Sync) -> Vec<(&'c Cell, T)> {
        let results: Vec<Result<T>> = cells.par_iter().map(&f).collect();
        cells
            .iter()
            .zip(results)
            .filter_map(|(c, r)| match r {
                Ok(v) => Some((c, v)),
                Err(e) => {
                    self.fail(&c.name, &e);
                    None
                }
            })
            .collect()
    }
}

/// Concrete values for one point of the sweep grid.
#[derive(Debug, Clone)]
pub struct Cell {
    pub name: String,
    /// Name without the `n_dim` and seed parts (dimension sweeps).
    pub group: String,
    pub seed: u64,
    pub p1: f64,
    pub n_dim: usize,
    pub alpha: f64,
    pub batch_size: usize,
    pub noise_sigma: f64,
    pub n0: f64,
    pub mode: VectorMode,
    pub optimizer: OptimizerSpec,
    pub axis: Option<(ResponseAxis, f64)>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt_labels(opts: &[OptimizerSection]) -> Vec<String> {
    opts.iter()
        .enumerate()
        .map(|(i, o)| {
            let name = o.algo.name();
            if opts.iter().filter(|p| p.algo == o.algo).count() > 1 {
                format!("{name}{}", i + 1)
            } else {
                name.to_string()
            }
        })
        .collect()
}

/// Cartesian product of the non-empty sweep axes (and seeds, where the
/// experiment is stochastic).
pub fn expand_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let s = &cfg.sweep;
    let alpha = match cfg.experiment {
        Kind::Resource => cfg.resource.alpha,
        Kind::Domino => cfg.domino.alpha,
        _ => cfg.geometry.alpha,
    };
    let base = Cell {
        name: String::new(),
        group: String::new(),
        seed: cfg.seeds[0],
        p1: cfg.geometry.p1,
        n_dim: cfg.geometry.n_dim,
        alpha,
        batch_size: cfg.geometry.batch_size,
        noise_sigma: cfg.geometry.noise_sigma,
        n0: cfg.resource.n0,
        mode: cfg.geometry.mode,
        optimizer: cfg.optimizer.spec(),
        axis: None,
    };
    type Setter = Box<dyn Fn(&mut Cell)>;
    let mut axes: Vec<(bool, Vec<(String, Setter)>)> = Vec::new();
    let mut push = |grouped: bool, items: Vec<(String, Setter)>| {
        if !items.is_empty() {
            axes.push((grouped, items));
        }
    };
    if cfg.experiment == Kind::N0Response {
        let mut items: Vec<(String, Setter)> = Vec::new();
        for (axis, label, grid) in [
            (ResponseAxis::Lr, "lr", s.lr.clone()),
            (ResponseAxis::Noise, "noise_sigma", s.noise_sigma.clone()),
            (ResponseAxis::Batch, "batch_size", s.batch_size.iter().map(|&b| b as f64).collect()),
        ] {
            for v in grid {
                items.push((format!("{label}-{}", num(v)), Box::new(move |c: &mut Cell| c.axis = Some((axis, v)))));
            }
        }
        push(true, items);
    } else {
        let labels = opt_labels(&s.optimizers);
        push(
            true,
            s.optimizers
                .iter()
                .zip(labels)
                .map(|(o, l)| {
                    let spec = o.spec();
                    (l, Box::new(move |c: &mut Cell| c.optimizer = spec) as Setter)
                })
                .collect(),
        );
        push(
            true,
            s.lr.iter()
                .map(|&v| (format!("lr-{}", num(v)), Box::new(move |c: &mut Cell| c.optimizer.lr = v) as Setter))
                .collect(),
        );
        push(
            true,
            s.p1.iter()
                .map(|&v| (format!("p1-{}", num(v)), Box::new(move |c: &mut Cell| c.p1 = v) as Setter))
                .collect(),
        );
        push(
            cfg.experiment != Kind::DimSweep,
            s.n_dim
                .iter()
                .map(|&v| (format!("n_dim-{v}"), Box::new(move |c: &mut Cell| c.n_dim = v) as Setter))
                .collect(),
        );
        push(
            true,
            s.alpha
                .iter()
                .map(|&v| (format!("alpha-{}", num(v)), Box::new(move |c: &mut Cell| c.alpha = v) as Setter))
                .collect(),
        );
        push(
            true,
            s.batch_size
                .iter()
                .map(|&v| (format!("batch-{v}"), Box::new(move |c: &mut Cell| c.batch_size = v) as Setter))
                .collect(),
        );
        push(
            true,
            s.noise_sigma
                .iter()
                .map(|&v| (format!("noise-{}", num(v)), Box::new(move |c: &mut Cell| c.noise_sigma = v) as Setter))
                .collect(),
        );
        push(
            true,
            s.n0.iter()
                .map(|&v| (format!("n0-{}", num(v)), Box::new(move |c: &mut Cell| c.n0 = v) as Setter))
                .collect(),
        );
        push(
            true,
            s.mode
                .iter()
                .map(|&v| (format!("mode-{}", mode_name(v)), Box::new(move |c: &mut Cell| c.mode = v) as Setter))
                .collect(),
        );
    }
    if !matches!(cfg.experiment, Kind::Quadratic | Kind::Domino) {
        push(
            false,
            cfg.seeds
                .iter()
                .map(|&v| (format!("seed-{v}"), Box::new(move |c: &mut Cell| c.seed = v) as Setter))
                .collect(),
        );
    }

    let mut cells = vec![(base, Vec::<String>::new(), Vec::<String>::new())];
    for (grouped, items) in &axes {
        let mut next = Vec::with_capacity(cells.len() * items.len());
        for (cell, names, groups) in &cells {
            for (label, set) in items {
                let mut c = cell.clone();
                set(&mut c);
                let mut n = names.clone();
                n.push(label.clone());
                let mut g = groups.clone();
                if *grouped {
                    g.push(label.clone());
                }
                next.push((c, n, g));
            }
        }
        cells = next;
    }
    cells
        .into_iter()
        .map(|(mut c, names, groups)| {
            c.name = if names.is_empty() { "run".into() } else { names.join("_") };
            c.group = if groups.is_empty() { "all".into() } else { groups.join("_") };
            c
        })
        .collect()
}

fn mode_name(m: VectorMode) -> &'static str {
    match m {
        VectorMode::Random => "random",
        VectorMode::Orthogonalized => "orthogonalized",
        VectorMode::Onehot => "onehot",
    }
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs one config in the current pool and returns its cell count.
fn execute(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<usize> {
    let cells = expand_cells(cfg);
    let n = match cfg.experiment {
        Kind::TwoTask => two_task(cfg, ctx, &cells)?,
        Kind::Geometry => geometry_runs(cfg, ctx, &cells)?,
        Kind::DimSweep => dim_sweep(cfg, ctx, &cells)?,
        Kind::StepScaling => step_scaling(cfg, ctx, &cells)?,
        Kind::Resource => resource_runs(cfg, ctx, &cells)?,
        Kind::N0Response => n0_response(cfg, ctx, &cells)?,
        Kind::Domino => domino_runs(cfg, ctx, &cells)?,
        Kind::Quadratic => quadratic_runs(cfg, ctx, &cells)?,
        Kind::Collapse => collapse(cfg, ctx, &cells)?,
        Kind::Compositional => compositional(cfg, ctx)?,
        Kind::Grokking => grokking(cfg, ctx, &cells)?,
        Kind::Modularity => modularity(cfg, ctx)?,
        Kind::ParityScaling => parity_scaling(cfg, ctx)?,
    };
    Ok(n)
}

fn scaling_config(cfg: &ExperimentConfig, c: &Cell) -> ScalingRunConfig {
    let g = &cfg.geometry;
    ScalingRunConfig {
        n_task: g.n_task,
        n_dim: c.n_dim,
        alpha: c.alpha,
        loss: g.loss,
        mode: c.mode,
        optimizer: c.optimizer,
        n_steps: g.n_steps,
        batch_size: c.batch_size,
        noise_sigma: c.noise_sigma,
        record_every: cfg.record_every,
        seed: c.seed,
        plateau: (g.plateau_records > 0).then_some(Plateau {
            records: g.plateau_records,
            rtol: g.plateau_rtol,
        }),
    }
}

fn geometry_trajectory(cfg: &ExperimentConfig, c: &Cell) -> Result<Trajectory> {
    let sc = scaling_config(cfg, c);
    let mut sys = sc.system()?;
    let mut opts = RunOptions::new(sc.n_steps, sc.record_every, sc.seed);
    opts.plateau = sc.plateau;
    if cfg.geometry.align {
        opts = opts.with_align();
    }
    Ok(geometry::run(&mut sys, &sc.optimizer, &opts)?)
}

/// `step,total_loss` only; full trajectories of 1000-task runs are large.
fn total_loss_csv(traj: &Trajectory) -> Vec<u8> {
    let mut s = String::from("step,total_loss\n");
    for (t, l) in traj.steps.iter().zip(&traj.total_loss) {
        let _ = writeln!(s, "{t},{l}");
    }
    s.into_bytes()
}

fn two_task(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let done = ctx.par_cells(cells, |c| {
        let g = &cfg.geometry;
        Ok(two_task_times(&TwoTaskConfig {
            p1: c.p1,
            n_dim: c.n_dim,
            batch_size: c.batch_size,
            optimizer: c.optimizer,
            max_steps: g.max_steps,
            threshold: g.threshold,
            seed: c.seed,
        })?)
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(c, r)| {
            vec![
                c.name.clone(),
                c.optimizer.algo.name().to_string(),
                c.seed.to_string(),
                num(r.p1),
                num(r.p2),
                num(r.p1 / r.p2),
                opt_str(r.t1),
                opt_str(r.t2),
                opt_str(r.ratio()),
            ]
        })
        .collect();
    ctx.write_table(
        "ratios.csv",
        &["cell", "optimizer", "seed", "p1", "p2", "p_ratio", "t1", "t2", "t_ratio"],
        &rows,
    )?;
    Ok(cells.len())
}

fn geometry_runs(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let done = ctx.par_cells(cells, |c| {
        let traj = geometry_trajectory(cfg, c)?;
        ctx.write_traj(&format!("traj_{}.csv", c.name), &traj)?;
        Ok(traj)
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(c, t)| {
            vec![
                c.name.clone(),
                c.seed.to_string(),
                num(t.steps.last().copied().unwrap_or(0.0)),
                num(t.total_loss.last().copied().unwrap_or(f64::NAN)),
                num(tail_mean_loss(t, cfg.fit.tail_fraction)),
            ]
        })
        .collect();
    ctx.write_table("summary.csv", &["cell", "seed", "last_step", "final_loss", "tail_loss"], &rows)?;
    Ok(cells.len())
}

fn window(cfg: &ExperimentConfig) -> Result<Window> {
    Ok(Window::new(cfg.fit.lo, cfg.fit.hi)?)
}

fn dim_sweep(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let done = ctx.par_cells(cells, |c| {
        let traj = geometry_trajectory(cfg, c)?;
        ctx.write(&format!("loss_{}.csv", c.name), &total_loss_csv(&traj))?;
        Ok(tail_mean_loss(&traj, cfg.fit.tail_fraction))
    });
    let mut groups: Vec<(String, f64)> = Vec::new();
    for c in cells {
        if !groups.iter().any(|(g, _)| *g == c.group) {
            groups.push((c.group.clone(), c.alpha));
        }
    }
    let mut rows = Vec::new();
    let mut failures = 0;
    for (group, alpha) in &groups {
        let mut points = Vec::new();
        for &d in &cfg.sweep.n_dim {
            let losses: Vec<f64> = done
                .iter()
                .filter(|(c, _)| c.group == *group && c.n_dim == d)
                .map(|(_, l)| *l)
                .collect();
            if losses.is_empty() {
                continue;
            }
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            rows.push(vec![group.clone(), d.to_string(), num(mean), losses.len().to_string()]);
            points.push((d as f64, mean));
        }
        match exponent_report(Source::Points(&points), Axis::Dims, window(cfg)?, Some(*alpha)) {
            Ok(rep) => ctx.write_json(&format!("fit_{group}.json"), &rep)?,
            Err(e) => {
                failures += 1;
                ctx.fail(&format!("fit_{group}"), &e.into());
            }
        }
    }
    ctx.write_table("sweep.csv", &["group", "n_dim", "final_loss", "n_seeds"], &rows)?;
    Ok(cells.len() + failures)
}

fn step_scaling(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let done = ctx.par_cells(cells, |c| {
        let traj = geometry_trajectory(cfg, c)?;
        ctx.write(&format!("loss_{}.csv", c.name), &total_loss_csv(&traj))?;
        let rep = exponent_report(Source::Trajectory(&traj), Axis::Steps, window(cfg)?, Some(c.alpha))?;
        ctx.write_json(&format!("fit_{}.json", c.name), &rep)?;
        Ok(rep)
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(c, r)| {
            let (q, d) = r.references().map_or((String::new(), String::new()), |(q, d)| (num(q), num(d)));
            vec![
                c.name.clone(),
                num(c.alpha),
                c.seed.to_string(),
                num(r.fit.exponent),
                q,
                d,
                opt_str(r.closer_to_domino()),
            ]
        })
        .collect();
    ctx.write_table(
        "fits.csv",
        &["cell", "alpha", "seed", "exponent", "quanta", "domino", "closer_to_domino"],
        &rows,
    )?;
    Ok(cells.len())
}

fn resource_system(cfg: &ExperimentConfig, c: &Cell) -> Result<ResourceSystem> {
    let r = &cfg.resource;
    let dist = if !r.p.is_empty() {
        TaskDistribution::explicit(r.p.clone())?
    } else {
        match r.dist {
            DistChoice::PowerLaw => TaskDistribution::power_law(r.n_task, c.alpha, true)?,
            DistChoice::Exponential => TaskDistribution::exponential(r.n_task, c.alpha)?,
        }
    };
    let n = dist.len();
    let mut sys = ResourceSystem::new(dist, r.variant).with_n0(c.n0).with_eta_eff(r.eta_eff);
    if r.variant != Variant::IndependentMse {
        let tv = TaskVectorSet::new(n, r.n_dim, VectorMode::Random, c.seed)?;
        sys = sys.with_corr(tv.correlation_matrix());
    }
    if !r.gates.is_empty() {
        sys = sys.with_gates(GateSet::new(n, r.gates.clone())?);
    }
    Ok(sys)
}

fn resource_runs(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let r = &cfg.resource;
    let done = ctx.par_cells(cells, |c| {
        let sys = resource_system(cfg, c)?;
        let traj = resource::integrate(&sys, r.t_end, r.dt_max, r.n_points)?;
        ctx.write_traj(&format!("traj_{}.csv", c.name), &traj)?;
        Ok(completion_times(&traj, r.threshold))
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .flat_map(|(c, times)| {
            times
                .iter()
                .enumerate()
                .map(|(i, t)| vec![c.name.clone(), (i + 1).to_string(), opt_str(*t)])
        })
        .collect();
    ctx.write_table("completion.csv", &["cell", "task", "time"], &rows)?;
    Ok(cells.len())
}

fn n0_response(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let w = cfg.resource.calib_window;
    let done = ctx.par_cells(cells, |c| {
        let rc = ResponseConfig {
            base: scaling_config(cfg, c),
            window: (w[0], w[1]),
            scale_steps_with_lr: true,
        };
        let (axis, value) = c.axis.expect("response cells carry an axis");
        let (traj, fit) = fit_geometry_run(&rc.run_config(axis, value)?, rc.window)?;
        ctx.write_traj(&format!("traj_{}.csv", c.name), &traj)?;
        Ok(fit)
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(c, f)| {
            let (axis, value) = c.axis.expect("response cells carry an axis");
            let axis = match axis {
                ResponseAxis::Lr => "lr",
                ResponseAxis::Noise => "noise_sigma",
                ResponseAxis::Batch => "batch_size",
            };
            vec![axis.to_string(), num(value), c.seed.to_string(), num(f.n0), num(f.residual)]
        })
        .collect();
    ctx.write_table("n0.csv", &["axis", "value", "seed", "n0", "residual"], &rows)?;
    Ok(cells.len())
}

fn domino_runs(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let d = &cfg.domino;
    ctx.par_cells(cells, |c| {
        let learnable = if d.n_learnable == 0 { d.n_task } else { d.n_learnable };
        let dc = DominoConfig::with_capacity(d.n_task, d.t0, learnable)?;
        let dist = TaskDistribution::power_law(d.n_task, c.alpha, true)?;
        let t_end = if d.t_end > 0.0 { d.t_end } else { domino::total_time(&dc) };
        let ts: Vec<f64> = (0..d.n_points)
            .map(|k| t_end * k as f64 / (d.n_points - 1) as f64)
            .collect();
        let traj = domino::trajectory(&dc, &dist, &ts)?;
        ctx.write_traj(&format!("traj_{}.csv", c.name), &traj)?;
        ctx.write_json(
            &format!("exponents_{}.json", c.name),
            &serde_json::json!({
                "alpha": c.alpha,
                "total_time": domino::total_time(&dc),
                "prediction": scaling_exponents(c.alpha),
            }),
        )?;
        Ok(())
    });
    Ok(cells.len())
}

fn quadratic_runs(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let q = &cfg.quadratic;
    let done = ctx.par_cells(cells, |c| {
        let loss = if q.weights.is_empty() {
            QuadraticLoss::standard(q.rotated)
        } else {
            let n = q.weights.len();
            let rot = if q.rotated { hadamard4() } else { ndarray::Array2::eye(n) };
            QuadraticLoss::new(q.weights.clone(), rot)?
        };
        let run = run_quadratic(&loss, &c.optimizer, &loss.theta_for(&q.x0)?, q.n_steps)?;
        let mut buf = Vec::new();
        run.write_csv(&mut buf)?;
        ctx.write(&format!("quad_{}.csv", c.name), &buf)?;
        Ok((quadratic::drop_times(&run, q.level), quadratic::sequential_drift(&run, q.level)))
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .flat_map(|(c, (drops, drift))| {
            drops.iter().enumerate().map(move |(i, t)| {
                let before = if i == 0 { String::new() } else { num(drift[i - 1]) };
                vec![c.name.clone(), (i + 1).to_string(), opt_str(*t), before]
            })
        })
        .collect();
    ctx.write_table("drops.csv", &["cell", "component", "drop_step", "drift_before_previous_drop"], &rows)?;
    Ok(cells.len())
}

fn collapse(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let w = cfg.resource.calib_window;
    ctx.par_cells(cells, |c| {
        let sc = scaling_config(cfg, c);
        let (geo, fit) = fit_geometry_run(&sc, (w[0], w[1]))?;
        let dist = TaskDistribution::power_law(sc.n_task, sc.alpha, true)?;
        let sys = ResourceSystem::from_geometry(dist.clone(), Variant::IndependentMse, sc.n_dim, sc.optimizer.lr)
            .with_n0(fit.n0);
        let res = resource::integrate_at(&sys, &geo.steps, cfg.resource.dt_max)?;
        let cg = collapse_curves(&geo, dist.p());
        let cr = collapse_curves(&res, dist.p());
        let n = dist.len();
        let mut header = vec!["step".to_string()];
        header.extend((1..=n).map(|i| format!("geometry_{i}")));
        header.extend((1..=n).map(|i| format!("resource_{i}")));
        let mut s = header.join(",") + "\n";
        for (k, t) in geo.steps.iter().enumerate() {
            let vals: Vec<String> = std::iter::once(num(*t))
                .chain(cg[k].iter().map(|&v| num(v)))
                .chain(cr[k].iter().map(|&v| num(v)))
                .collect();
            s += &vals.join(",");
            s.push('\n');
        }
        ctx.write(&format!("collapse_{}.csv", c.name), s.as_bytes())?;
        ctx.write_traj(&format!("traj_geometry_{}.csv", c.name), &geo)?;
        ctx.write_traj(&format!("traj_resource_{}.csv", c.name), &res)?;
        ctx.write_json(&format!("calibration_{}.json", c.name), &fit)?;
        Ok(())
    });
    Ok(cells.len())
}

fn success_cells(r: &RunResult) -> Vec<String> {
    r.success.iter().map(|t| opt_str(*t)).collect()
}

fn compositional(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<usize> {
    let s = &cfg.mlplab.compositional;
    let cells: Vec<Cell> = s
        .variants
        .iter()
        .flat_map(|&v| {
            cfg.seeds.iter().map(move |&seed| (v, seed))
        })
        .map(|(v, seed)| {
            let label = serde_json::to_value(v).expect("enum serializes");
            let mut c = expand_cells(&ExperimentConfig { seeds: vec![seed], ..cfg.clone() }).remove(0);
            c.name = format!("{}_seed-{seed}", label.as_str().unwrap_or("variant"));
            c.group = label.as_str().unwrap_or_default().to_string();
            c
        })
        .collect();
    let variant_of = |c: &Cell| serde_json::from_value(serde_json::Value::String(c.group.clone()));
    let done = ctx.par_cells(&cells, |c| {
        let cc = CompositionalConfig {
            variant: variant_of(c)?,
            n_bits: s.n_bits,
            hidden: s.hidden,
            n_samples: s.n_samples,
            n_eval: s.n_eval,
            lr: s.lr,
            n_steps: s.n_steps,
            eval_every: s.eval_every,
            threshold: s.threshold,
            seed: c.seed,
        };
        let r = experiment_compositional_parity(&cc)?;
        ctx.write_run(&format!("run_{}.csv", c.name), &r)?;
        Ok(r)
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(c, r)| {
            let mut row = vec![c.group.clone(), c.seed.to_string()];
            row.extend(success_cells(r));
            row
        })
        .collect();
    ctx.write_table("success.csv", &["variant", "seed", "t1", "t2", "t3"], &rows)?;
    Ok(cells.len())
}

fn grokking(cfg: &ExperimentConfig, ctx: &Ctx, cells: &[Cell]) -> Result<usize> {
    let s = &cfg.mlplab.grokking;
    let done = ctx.par_cells(cells, |c| {
        let gc = GrokkingConfig {
            algo: c.optimizer.algo,
            weight_decay: c.optimizer.weight_decay,
            p: s.p,
            embed_dim: s.embed_dim,
            width: s.width,
            depth: s.depth,
            train_frac: s.train_frac,
            lr: c.optimizer.lr,
            n_steps: s.n_steps,
            batch_size: s.batch_size,
            eval_every: s.eval_every,
            embed_scale: s.embed_scale,
            seed: c.seed,
        };
        let r = experiment_grokking(&gc)?;
        ctx.write_run(&format!("run_{}.csv", c.name), &r)?;
        Ok(r)
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(c, r)| {
            vec![
                c.name.clone(),
                c.optimizer.algo.name().to_string(),
                c.seed.to_string(),
                opt_str(r.final_train_acc()),
                opt_str(r.final_test_acc()),
            ]
        })
        .collect();
    ctx.write_table("summary.csv", &["cell", "optimizer", "seed", "train_acc", "test_acc"], &rows)?;
    Ok(cells.len())
}

fn modularity(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<usize> {
    let s = &cfg.mlplab.modularity;
    let base = expand_cells(&ExperimentConfig { seeds: vec![0], ..cfg.clone() }).remove(0);
    let cells: Vec<Cell> = [false, true]
        .into_iter()
        .flat_map(|m| cfg.seeds.iter().map(move |&seed| (m, seed)))
        .map(|(m, seed)| Cell {
            name: format!("{}_seed-{seed}", if m { "modular" } else { "shared" }),
            group: if m { "modular" } else { "shared" }.into(),
            seed,
            ..base.clone()
        })
        .collect();
    let done = ctx.par_cells(&cells, |c| {
        Ok(experiment_modularity(&ModularityConfig {
            modular: c.group == "modular",
            n_points: s.n_points,
            n_eval: s.n_eval,
            y_zero_prob: s.y_zero_prob,
            width: s.width,
            lr: s.lr,
            batch_size: s.batch_size,
            max_steps: s.max_steps,
            threshold: s.threshold,
            eval_every: s.eval_every,
            seed: c.seed,
        })?)
    });
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(c, p)| {
            vec![
                c.group.clone(),
                c.seed.to_string(),
                opt_str(p.t1),
                opt_str(p.t2),
                opt_str(p.ratio()),
            ]
        })
        .collect();
    ctx.write_table("scatter.csv", &["network", "seed", "t1", "t2", "ratio"], &rows)?;
    let med = |group: &str| {
        let pts: Vec<ModularityPoint> = done.iter().filter(|(c, _)| c.group == group).map(|(_, p)| *p).collect();
        skilldyn_core::mlp::median_ratio(&pts)
    };
    ctx.write_json(
        "summary.json",
        &serde_json::json!({
            "median_ratio_shared": med("shared").map(json_num),
            "median_ratio_modular": med("modular").map(json_num),
            "n_seeds": cfg.seeds.len(),
        }),
    )?;
    Ok(cells.len())
}

/// JSON has no infinity; unbounded ratios become the string "inf".
fn json_num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::json!(x.to_string())
    }
}

fn parity_scaling(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<usize> {
    let s = &cfg.mlplab.parity;
    let pc = ParityScalingConfig {
        betas: s.betas.iter().map(|b| (b[0], b[1])).collect(),
        widths: s.widths.clone(),
        alphas: s.alphas.clone(),
        seeds: cfg.seeds.clone(),
        n_tasks: s.n_tasks,
        n: s.n,
        k: s.k,
        batch_size: s.batch_size,
        lr: s.lr,
        n_steps: s.n_steps,
        eval_every: s.eval_every,
        eval_per_task: s.eval_per_task,
    };
    let curves = match experiment_parity_scaling(&pc) {
        Ok(c) => c,
        Err(e) => {
            ctx.fail("parity_scaling", &e.into());
            return Ok(1);
        }
    };
    let mut rows = Vec::new();
    let mut finals = Vec::new();
    for c in &curves {
        for (step, loss) in c.steps.iter().zip(&c.loss) {
            rows.push(vec![
                num(c.beta1),
                num(c.beta2),
                c.width.to_string(),
                num(c.alpha),
                c.seed.to_string(),
                c.n_params.to_string(),
                step.to_string(),
                num(*loss),
            ]);
        }
        finals.push(vec![
            num(c.beta1),
            num(c.beta2),
            c.width.to_string(),
            num(c.alpha),
            c.seed.to_string(),
            c.n_params.to_string(),
            num(c.final_loss()),
        ]);
    }
    ctx.write_table(
        "curves.csv",
        &["beta1", "beta2", "width", "alpha", "seed", "n_params", "step", "loss"],
        &rows,
    )?;
    ctx.write_table(
        "final.csv",
        &["beta1", "beta2", "width", "alpha", "seed", "n_params", "final_loss"],
        &finals,
    )?;
    let mut cells = 1;
    for &beta in &pc.betas {
        for &alpha in &pc.alphas {
            cells += 1;
            let pts = final_loss_vs_params(&curves, beta, alpha);
            let name = format!("fit_beta-{}-{}_alpha-{}", num(beta.0), num(beta.1), num(alpha));
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            match fit_powerlaw(&xs, &ys, window(cfg)?) {
                Ok(fit) => ctx.write_json(
                    &format!("{name}.json"),
                    &serde_json::json!({
                        "axis": "params",
                        "fit": fit,
                        "alpha": alpha,
                        "prediction": scaling_exponents(alpha),
                    }),
                )?,
                Err(e) => ctx.fail(&name, &e.into()),
            }
        }
    }
    Ok(cells)
}
