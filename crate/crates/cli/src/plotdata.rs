//! Long-format `(series, x, y)` tables from run artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

pub const KINDS: &[(&str, &str)] = &[
    ("trajectory", "skill s_i against step, one series per task and run"),
    ("loss", "per-task and total loss against step"),
    ("sweep", "final loss against n_dim per sweep group"),
    ("fit", "fitted power law with alpha-1 and (alpha-1)/alpha reference lines"),
    ("ratio", "t2/t1 against p1/p2 per optimizer"),
    ("collapse", "u^(1/p) curves for Geometry and Resource"),
    ("n0", "fitted N0 against the swept value per axis"),
    ("scatter", "success times (t1, t2) per network"),
    ("quadratic", "quadratic loss components against step"),
    ("accuracy", "train and test accuracy against step"),
    ("params", "final loss against parameter count per beta pair"),
];

pub type Row = (String, f64, f64);

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>>>()
            .with_context(|| format!("parsing {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("schema error: {} has no column `{name}`", self.path.display()))
    }

    fn cols_with_prefix(&self, prefix: &str) -> Vec<(usize, String)> {
        self.headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix))
            .map(|(i, h)| (i, h.clone()))
            .collect()
    }

    /// `(x, y)` pairs from two columns, skipping empty cells.
    fn pairs(&self, x: usize, y: usize) -> Result<Vec<(f64, f64)>> {
        self.rows
            .iter()
            .filter(|r| !r[x].is_empty() && !r[y].is_empty())
            .map(|r| Ok((parse(&r[x], &self.path)?, parse(&r[y], &self.path)?)))
            .collect()
    }
}

fn parse(s: &str, path: &Path) -> Result<f64> {
    s.parse().map_err(|_| anyhow!("schema error: {}: `{s}` is not a number", path.display()))
}

/// Files below `dir` whose name starts with `prefix` and ends with `ext`,
/// sorted by path.
fn find(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    walk(dir, &mut |p| {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with(prefix) && name.ends_with(ext) {
            out.push(p.to_path_buf());
        }
    })?;
    out.sort();
    if out.is_empty() {
        bail!("schema error: no {prefix}*{ext} files under {}", dir.display());
    }
    Ok(out)
}

fn walk(dir: &Path, f: &mut impl FnMut(&Path)) -> Result<()> {
    for e in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        if p.is_dir() {
            walk(&p, f)?;
        } else {
            f(&p);
        }
    }
    Ok(())
}

/// Series label: path below the run directory without the extension and
/// the given file-name prefix.
fn label(root: &Path, p: &Path, prefix: &str) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p).with_extension("");
    let parts: Vec<String> = rel.iter().map(|c| c.to_string_lossy().into_owned()).collect();
    let (last, dirs) = parts.split_last().expect("file path has a name");
    let last = last.strip_prefix(prefix).unwrap_or(last);
    dirs.iter().cloned().chain(std::iter::once(last.to_string())).collect::<Vec<_>>().join("/")
}

fn columns(root: &Path, prefix: &str, col_prefixes: &[&str], x_col: &str) -> Result<Vec<Row>> {
    let mut out = Vec::new();
    for p in find(root, prefix, ".csv")? {
        let t = Table::read(&p)?;
        let x = t.col(x_col)?;
        let name = label(root, &p, prefix);
        let mut any = false;
        for cp in col_prefixes {
            for (i, h) in t.cols_with_prefix(cp) {
                any = true;
                out.extend(t.pairs(x, i)?.into_iter().map(|(a, b)| (format!("{name}:{h}"), a, b)));
            }
        }
        if !any {
            bail!("schema error: {} has no `{}` columns", p.display(), col_prefixes.join("`/`"));
        }
    }
    Ok(out)
}

fn keyed(root: &Path, file: &str, series: &[&str], x: &str, y: &str) -> Result<Vec<Row>> {
    let mut out = Vec::new();
    for p in find(root, file, "")? {
        if p.file_name().and_then(|n| n.to_str()) != Some(file) {
            continue;
        }
        let t = Table::read(&p)?;
        let (xi, yi) = (t.col(x)?, t.col(y)?);
        let si: Vec<usize> = series.iter().map(|s| t.col(s)).collect::<Result<_>>()?;
        let dir = p
            .parent()
            .and_then(|d| d.strip_prefix(root).ok())
            .map(|d| d.iter().map(|c| c.to_string_lossy()).collect::<Vec<_>>().join("/"))
            .unwrap_or_default();
        for r in &t.rows {
            if r[xi].is_empty() || r[yi].is_empty() {
                continue;
            }
            let key = si.iter().map(|&i| r[i].as_str()).collect::<Vec<_>>().join("-");
            let key = if dir.is_empty() { key } else { format!("{dir}/{key}") };
            out.push((key, parse(&r[xi], &p)?, parse(&r[yi], &p)?));
        }
    }
    Ok(out)
}

fn fits(root: &Path) -> Result<Vec<Row>> {
    let mut out = Vec::new();
    for p in find(root, "fit_", ".json")? {
        let v: serde_json::Value =
            serde_json::from_slice(&fs::read(&p)?).with_context(|| format!("parsing {}", p.display()))?;
        let field = |path: &[&str]| -> Result<f64> {
            let mut cur = &v;
            for k in path {
                cur = &cur[*k];
            }
            cur.as_f64()
                .ok_or_else(|| anyhow!("schema error: {} has no numeric `{}`", p.display(), path.join(".")))
        };
        let e = field(&["fit", "exponent"])?;
        let c = field(&["fit", "prefactor"])?;
        let lo = v["fit"]["fit_window"][0].as_f64();
        let hi = v["fit"]["fit_window"][1].as_f64();
        let (Some(lo), Some(hi)) = (lo, hi) else {
            bail!("schema error: {} has no `fit.fit_window`", p.display());
        };
        let name = label(root, &p, "fit_");
        let xs: Vec<f64> = (0..=20).map(|k| lo * (hi / lo).powf(k as f64 / 20.0)).collect();
        let y0 = c * lo.powf(-e);
        out.extend(xs.iter().map(|&x| (format!("{name}:fit"), x, c * x.powf(-e))));
        if let Some(alpha) = v["alpha"].as_f64() {
            for (tag, slope) in [("alpha-1", alpha - 1.0), ("(alpha-1)/alpha", (alpha - 1.0) / alpha)] {
                out.extend(xs.iter().map(|&x| (format!("{name}:{tag}"), x, y0 * (x / lo).powf(-slope))));
            }
        }
    }
    Ok(out)
}

pub fn emit(root: &Path, kind: &str) -> Result<Vec<Row>> {
    if !root.is_dir() {
        bail!("{} is not a run directory", root.display());
    }
    match kind {
        "trajectory" => columns(root, "traj_", &["s_"], "step"),
        "loss" => {
            let mut rows = columns(root, "traj_", &["loss_", "total_loss"], "step").unwrap_or_default();
            if let Ok(more) = columns(root, "loss_", &["total_loss"], "step") {
                rows.extend(more);
            }
            if rows.is_empty() {
                bail!("schema error: no trajectory or loss files under {}", root.display());
            }
            Ok(rows)
        }
        "sweep" => keyed(root, "sweep.csv", &["group"], "n_dim", "final_loss"),
        "fit" => fits(root),
        "ratio" => keyed(root, "ratios.csv", &["optimizer"], "p_ratio", "t_ratio"),
        "collapse" => columns(root, "collapse_", &["geometry_", "resource_"], "step"),
        "n0" => keyed(root, "n0.csv", &["axis"], "value", "n0"),
        "scatter" => keyed(root, "scatter.csv", &["network"], "t1", "t2"),
        "quadratic" => columns(root, "quad_", &["loss_", "total"], "step"),
        "accuracy" => columns(root, "run_", &["train_acc", "test_acc"], "step"),
        "params" => keyed(root, "final.csv", &["beta1", "beta2", "alpha"], "n_params", "final_loss"),
        other => bail!(
            "unknown plot kind `{other}`; expected one of: {}",
            KINDS.iter().map(|k| k.0).collect::<Vec<_>>().join(", ")
        ),
    }
}

pub fn to_csv(rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "x", "y"])?;
    for (s, x, y) in rows {
        w.write_record([s.as_str(), &x.to_string(), &y.to_string()])?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_with(files: &[(&str, &str)]) -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        for (name, body) in files {
            let p = d.path().join(name);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, body).unwrap();
        }
        d
    }

    #[test]
    fn trajectory_rows_per_task() {
        let d = dir_with(&[("traj_run.csv", "step,s_1,s_2,loss_1,loss_2,total_loss\n0,0,0,1,1,1\n5,0.5,0.1,0.25,0.81,0.6\n")]);
        let rows = emit(d.path(), "trajectory").unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1], ("run:s_1".to_string(), 5.0, 0.5));
        assert_eq!(rows[3].0, "run:s_2");
    }

    #[test]
    fn sweep_rows_keep_groups_and_subdirectories() {
        let d = dir_with(&[("dims/sweep.csv", "group,n_dim,final_loss,n_seeds\nall,16,0.5,5\nall,32,0.25,5\n")]);
        let rows = emit(d.path(), "sweep").unwrap();
        assert_eq!(rows, vec![("dims/all".to_string(), 16.0, 0.5), ("dims/all".to_string(), 32.0, 0.25)]);
    }

    #[test]
    fn fit_includes_reference_lines() {
        let fit = r#"{"axis":"dims","fit":{"exponent":1.0,"prefactor":2.0,"fit_window":[1.0,100.0],"residual":0.0,"jackknife_std":null,"n_points":5},"alpha":2.0}"#;
        let d = dir_with(&[("fit_all.json", fit)]);
        let rows = emit(d.path(), "fit").unwrap();
        let series: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
        assert!(series.contains(&"all:alpha-1") && series.contains(&"all:(alpha-1)/alpha"));
        let half: Vec<&Row> = rows.iter().filter(|r| r.0 == "all:(alpha-1)/alpha").collect();
        let last = half.last().unwrap();
        assert!((last.1 - 100.0).abs() < 1e-9 && (last.2 - 2.0 * 100f64.powf(-0.5)).abs() < 1e-12);
        let fit_end = rows.iter().filter(|r| r.0 == "all:fit").last().unwrap();
        assert!((fit_end.2 - 0.02).abs() < 1e-12);
    }

    #[test]
    fn missing_columns_are_schema_errors() {
        let d = dir_with(&[("ratios.csv", "optimizer,p_ratio\nsgd,4\n")]);
        let err = emit(d.path(), "ratio").unwrap_err().to_string();
        assert!(err.contains("schema error") && err.contains("t_ratio"), "{err}");
        let d = dir_with(&[("traj_a.csv", "t,s_1\n0,0\n")]);
        assert!(emit(d.path(), "trajectory").unwrap_err().to_string().contains("`step`"));
        assert!(emit(d.path(), "sweep").unwrap_err().to_string().contains("schema error"));
        assert!(emit(d.path(), "bogus").is_err());
    }

    #[test]
    fn empty_cells_are_skipped() {
        let d = dir_with(&[("scatter.csv", "network,seed,t1,t2,ratio\nshared,0,100,,\nmodular,0,100,120,1.2\n")]);
        assert_eq!(emit(d.path(), "scatter").unwrap(), vec![("modular".to_string(), 100.0, 120.0)]);
    }
}
