//! Time-indexed records of skill levels and losses.
//!
//! CSV layout: `step, s_1..s_n, loss_1..loss_n, total_loss[, align_1..align_n]`.
//! JSON layout: the serialized struct, `meta` first.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub meta: serde_json::Value,
    /// Step index (Geometry) or continuous time (Resource, Domino).
    pub steps: Vec<f64>,
    pub skills: Vec<Vec<f64>>,
    pub task_losses: Vec<Vec<f64>>,
    pub total_loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_align: Option<Vec<Vec<i64>>>,
}

impl Trajectory {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            ..Default::default()
        }
    }

    pub fn push(&mut self, step: f64, skills: Vec<f64>, task_losses: Vec<f64>, total: f64) {
        self.steps.push(step);
        self.skills.push(skills);
        self.task_losses.push(task_losses);
        self.total_loss.push(total);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_task(&self) -> usize {
        self.skills.first().map_or(0, Vec::len)
    }

    /// Column `i` of the skill matrix.
    pub fn skill_series(&self, task: usize) -> Vec<f64> {
        self.skills.iter().map(|row| row[task]).collect()
    }

    pub fn loss_series(&self, task: usize) -> Vec<f64> {
        self.task_losses.iter().map(|row| row[task]).collect()
    }

    /// First recorded step at which `pred` holds for task `task`.
    pub fn first_step_where(&self, task: usize, pred: impl Fn(f64, f64) -> bool) -> Option<f64> {
        self.steps
            .iter()
            .zip(self.skills.iter().zip(&self.task_losses))
            .find(|(_, (s, l))| pred(s[task], l[task]))
            .map(|(t, _)| *t)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.n_task();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string()];
        header.extend((1..=n).map(|i| format!("s_{i}")));
        header.extend((1..=n).map(|i| format!("loss_{i}")));
        header.push("total_loss".into());
        if self.n_align.is_some() {
            header.extend((1..=n).map(|i| format!("align_{i}")));
        }
        out.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            rec.push(fmt_num(self.steps[r]));
            rec.extend(self.skills[r].iter().map(|&x| fmt_num(x)));
            rec.extend(self.task_losses[r].iter().map(|&x| fmt_num(x)));
            rec.push(fmt_num(self.total_loss[r]));
            if let Some(al) = &self.n_align {
                rec.extend(al[r].iter().map(i64::to_string));
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Parses the CSV layout written by [`Trajectory::write_csv`]. `meta` is
    /// left as null.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let n = header.iter().filter(|h| h.starts_with("s_")).count();
        let step_col = col("step").ok_or_else(|| Error::Data("missing column `step`".into()))?;
        let total_col =
            col("total_loss").ok_or_else(|| Error::Data("missing column `total_loss`".into()))?;
        let s_cols: Vec<usize> = (1..=n)
            .map(|i| col(&format!("s_{i}")).ok_or_else(|| Error::Data(format!("missing s_{i}"))))
            .collect::<Result<_>>()?;
        let l_cols: Vec<usize> = (1..=n)
            .map(|i| col(&format!("loss_{i}")).ok_or_else(|| Error::Data(format!("missing loss_{i}"))))
            .collect::<Result<_>>()?;
        let a_cols: Option<Vec<usize>> = (1..=n).map(|i| col(&format!("align_{i}"))).collect();
        let has_align = n > 0 && a_cols.is_some();

        let mut traj = Trajectory::default();
        if has_align {
            traj.n_align = Some(Vec::new());
        }
        for rec in rdr.records() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec[c]
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("bad number `{}`: {e}", &rec[c])))
            };
            let skills = s_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
            let losses = l_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
            traj.push(num(step_col)?, skills, losses, num(total_col)?);
            if let (Some(cols), Some(al)) = (&a_cols, traj.n_align.as_mut()) {
                let row = cols
                    .iter()
                    .map(|&c| {
                        rec[c]
                            .parse::<i64>()
                            .map_err(|e| Error::Data(format!("bad integer `{}`: {e}", &rec[c])))
                    })
                    .collect::<Result<Vec<_>>>()?;
                al.push(row);
            }
        }
        Ok(traj)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_num(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new(serde_json::json!({"model": "test"}));
        t.push(0.0, vec![0.0, 0.0], vec![1.0, 1.0], 1.0);
        t.push(10.0, vec![0.5, 0.125], vec![0.25, 0.765625], 0.4);
        t.n_align = Some(vec![vec![3, -1], vec![0, 2]]);
        t
    }

    #[test]
    fn csv_header_layout() {
        let csv = sample().to_csv_string().unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "step,s_1,s_2,loss_1,loss_2,total_loss,align_1,align_2");
    }

    #[test]
    fn csv_missing_column_is_an_error() {
        let err = Trajectory::read_csv("step,s_1,loss_1\n0,0,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("total_loss"));
    }

    #[test]
    fn json_keeps_meta() {
        let t = sample();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.starts_with("{\"meta\""));
        let back: Trajectory = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(
            (prop::collection::vec(-1e3f64..1e3, 3), prop::collection::vec(-50i64..50, 3)), 1..8)) {
            let mut t = Trajectory::default();
            let mut al = Vec::new();
            for (k, (s, a)) in rows.iter().enumerate() {
                let l: Vec<f64> = s.iter().map(|x| (1.0 - x) * (1.0 - x)).collect();
                t.push(k as f64, s.clone(), l.clone(), l.iter().sum());
                al.push(a.clone());
            }
            t.n_align = Some(al);
            let back = Trajectory::read_csv(t.to_csv_string().unwrap().as_bytes()).unwrap();
            prop_assert_eq!(back.steps, t.steps);
            prop_assert_eq!(back.skills, t.skills);
            prop_assert_eq!(back.task_losses, t.task_losses);
            prop_assert_eq!(back.total_loss, t.total_loss);
            prop_assert_eq!(back.n_align, t.n_align);
        }
    }
}
