//! Result files: sweep CSV/JSON, iteration-history JSON lines and model
//! documents. Every document carries a `format_version`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::predictor::{LinearModel, RandomizedPredictor};
use crate::sp_solver::IterationRecord;

use super::sweep::{SweepRun, TradeoffPoint};

pub const FORMAT_VERSION: u32 = 1;

/// CSV with columns
/// `eps,train_loss,test_loss,train_disp,test_disp,iters,converged,status`.
pub fn write_points_csv<W: Write>(out: W, points: &[TradeoffPoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["eps", "train_loss", "test_loss", "train_disp", "test_disp", "iters", "converged", "status"])?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv<R: std::io::Read>(input: R) -> Result<Vec<TradeoffPoint>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|p| p.map_err(FairError::from)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport<C> {
    pub format_version: u32,
    pub config: C,
    pub points: Vec<TradeoffPoint>,
    pub pareto: Vec<TradeoffPoint>,
}

impl<C: Serialize> SweepReport<C> {
    pub fn new(config: C, points: Vec<TradeoffPoint>) -> Self {
        let pareto = super::sweep::pareto_front(&points);
        SweepReport { format_version: FORMAT_VERSION, config, points, pareto }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Serialize)]
struct HistoryLine<'a> {
    run: usize,
    eps: f64,
    #[serde(flatten)]
    record: &'a IterationRecord,
}

/// One JSON object per iteration per run, tagged with the run index and slack.
pub fn write_history_jsonl<W: Write>(out: W, runs: &[SweepRun]) -> Result<()> {
    let mut out = BufWriter::new(out);
    for (run, r) in runs.iter().enumerate() {
        write_history_lines(&mut out, run, r.point.eps, &r.history)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_history_lines<W: Write>(out: &mut W, run: usize, eps: f64, history: &[IterationRecord]) -> Result<()> {
    for record in history {
        serde_json::to_writer(&mut *out, &HistoryLine { run, eps, record })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_history_jsonl<R: std::io::Read>(input: R) -> Result<Vec<IterationRecord>> {
    BufReader::new(input)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAtom {
    pub weight: f64,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub atoms: Vec<ModelAtom>,
}

impl ModelDocument {
    pub fn from_predictor(q: &RandomizedPredictor) -> Self {
        ModelDocument {
            format_version: FORMAT_VERSION,
            atoms: q
                .atoms()
                .iter()
                .map(|(w, m)| ModelAtom { weight: *w, weights: m.weights.clone(), intercept: m.intercept })
                .collect(),
        }
    }

    pub fn to_predictor(&self) -> Result<RandomizedPredictor> {
        if self.format_version != FORMAT_VERSION {
            return Err(FairError::InvalidArgument(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        RandomizedPredictor::new(
            self.atoms.iter().map(|a| (a.weight, LinearModel::new(a.weights.clone(), a.intercept))).collect(),
        )
    }
}

pub fn save_model(path: &Path, q: &RandomizedPredictor) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, &ModelDocument::from_predictor(q))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<RandomizedPredictor> {
    let doc: ModelDocument = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    doc.to_predictor()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(eps: f64) -> TradeoffPoint {
        TradeoffPoint {
            eps,
            train_loss: 0.125,
            test_loss: 0.13,
            train_disp: 0.3,
            test_disp: 1.0 / 3.0,
            iters: 17,
            converged: eps > 0.1,
            status: "ok".into(),
        }
    }

    #[test]
    fn csv_round_trip() {
        let pts = vec![pt(0.5), pt(0.05)];
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &pts).unwrap();
        assert_eq!(read_points_csv(buf.as_slice()).unwrap(), pts);
    }

    #[test]
    fn empty_outputs_are_valid() {
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "eps,train_loss,test_loss,train_disp,test_disp,iters,converged,status");
        let mut buf = Vec::new();
        SweepReport::new(serde_json::json!({}), vec![]).write_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 0);
        let mut buf = Vec::new();
        write_history_jsonl(&mut buf, &[]).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn json_echoes_config() {
        let cfg = serde_json::json!({"eps": [0.1], "bound": 10.0, "nu": 0.001, "grid_size": 40, "seed": 3});
        let mut buf = Vec::new();
        SweepReport::new(cfg, vec![pt(0.1)]).write_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["config"]["seed"], 3);
        assert_eq!(v["config"]["grid_size"], 40);
    }

    #[test]
    fn history_round_trip() {
        let h = vec![IterationRecord { iteration: 1, lagrangian: 0.2, max_violation: 0.1, nu_upper: 0.3, nu_lower: -0.01 }];
        let run = SweepRun { point: pt(0.1), history: h.clone(), model: None };
        let mut buf = Vec::new();
        write_history_jsonl(&mut buf, &[run]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"run\":0"));
        assert_eq!(read_history_jsonl(buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn model_round_trip() {
        let q = RandomizedPredictor::new(vec![
            (0.25, LinearModel::new(vec![0.1, -0.2], 0.3)),
            (0.75, LinearModel::new(vec![0.0, 0.5], 0.1)),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &q).unwrap();
        assert_eq!(load_model(&path).unwrap(), q);
    }
}
