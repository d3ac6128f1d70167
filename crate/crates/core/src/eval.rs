//! Translation metrics and the four-task evaluation report.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{Signal, Vocab};
use crate::model::Pgae;
use crate::numerics::Scalar;
use crate::synth::grammar::word_meaning;
use crate::synth::Viewpoint;
use crate::task::{build_task_io, Episode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescribeScore {
    pub n: usize,
    /// Percentage of sequences matching token for token, EOS included.
    pub exact: f64,
    /// Same, after mapping each word to its synonym class.
    pub semantic: f64,
}

fn meaning_class(token: &str) -> String {
    match word_meaning(token) {
        Some((slot, m)) => format!("{slot}:{m}"),
        None => token.to_string(),
    }
}

fn semantic_eq(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| meaning_class(x) == meaning_class(y))
}

pub fn describe_accuracy(pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<DescribeScore> {
    if pred.len() != truth.len() {
        return Err(Error::shape("describe_accuracy sequences", truth.len(), pred.len()));
    }
    let n = pred.len();
    let exact = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let semantic = pred.iter().zip(truth).filter(|(p, t)| semantic_eq(p, t)).count();
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    Ok(DescribeScore {
        n,
        exact: pct(exact),
        semantic: pct(semantic),
    })
}

/// Pooled squared joint error over any number of sequences.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorPool {
    sum_sq: f64,
    count: usize,
}

impl ErrorPool {
    pub fn add(&mut self, pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::shape("nrmse steps", truth.len(), pred.len()));
        }
        for (p, t) in pred.iter().zip(truth) {
            if p.len() != t.len() {
                return Err(Error::shape("nrmse joints", t.len(), p.len()));
            }
            for (a, b) in p.iter().zip(t) {
                self.sum_sq += (a - b) * (a - b);
                self.count += 1;
            }
        }
        Ok(())
    }

    pub fn nrmse(&self, range: f64) -> Result<f64> {
        if !(range > 0.0) {
            return Err(Error::ZeroRange(range));
        }
        if self.count == 0 {
            return Ok(0.0);
        }
        Ok(100.0 * (self.sum_sq / self.count as f64).sqrt() / range)
    }
}

/// `100 · sqrt(mean squared error per joint value) / range`.
pub fn nrmse(pred: &[Vec<f64>], truth: &[Vec<f64>], range: f64) -> Result<f64> {
    let mut pool = ErrorPool::default();
    pool.add(pred, truth)?;
    pool.nrmse(range)
}

/// Global `max − min` over every joint value of the episodes.
pub fn joint_range(episodes: &[Episode]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in episodes.iter().flat_map(|e| e.joints.iter().flatten()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if lo > hi {
        0.0
    } else {
        hi - lo
    }
}

/// Reference accuracy and nRMSE for one task and viewpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub accuracy: f64,
    pub nrmse: f64,
}

/// Reference test-set results for comparison: the single-viewpoint model,
/// then the mixed-viewpoint model by viewpoint.
pub fn reference_result(task: Signal, view: Option<Viewpoint>) -> Option<Reference> {
    let r = |accuracy, nrmse| Some(Reference { accuracy, nrmse });
    match (task, view) {
        (Signal::Describe, None) => r(93.05, 0.23),
        (Signal::RepeatLanguage, None) => r(96.30, 0.37),
        (Signal::Execute, None) => r(100.0, 0.44),
        (Signal::RepeatAction, None) => r(100.0, 0.44),
        (Signal::Describe, Some(Viewpoint::Own)) => r(80.56, 0.58),
        (Signal::Describe, Some(Viewpoint::Opposite)) => r(65.28, 2.40),
        (Signal::RepeatLanguage, Some(_)) => r(93.98, 0.73),
        (Signal::Execute, Some(_)) => r(100.0, 0.79),
        (Signal::RepeatAction, Some(Viewpoint::Own)) => r(100.0, 0.89),
        (Signal::RepeatAction, Some(Viewpoint::Opposite)) => r(100.0, 0.80),
        (Signal::RepeatBoth, _) => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task: Signal,
    /// `None` pools every available viewpoint.
    pub view: Option<Viewpoint>,
    pub samples: usize,
    pub accuracy: DescribeScore,
    pub nrmse: f64,
    pub reference_single_view: Option<Reference>,
    pub reference_mixed_view: Option<Reference>,
}

impl EvalRow {
    pub fn view_name(&self) -> &'static str {
        self.view.map_or("all", Viewpoint::name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub joint_range: f64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, task: Signal, view: Option<Viewpoint>) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.task == task && r.view == view)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:<9} {:>5} {:>9} {:>9} {:>8}   {:>15} {:>15}",
            "task", "view", "n", "exact%", "semantic%", "nRMSE%", "ref(single)", "ref(mixed)"
        );
        let fmt_ref = |r: Option<Reference>| match r {
            Some(r) => format!("{:.2}/{:.2}", r.accuracy, r.nrmse),
            None => "-".into(),
        };
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:<9} {:>5} {:>9.2} {:>9.2} {:>8.3}   {:>15} {:>15}",
                r.task.name(),
                r.view_name(),
                r.samples,
                r.accuracy.exact,
                r.accuracy.semantic,
                r.nrmse,
                fmt_ref(r.reference_single_view),
                fmt_ref(r.reference_mixed_view)
            );
        }
        let _ = writeln!(out, "joint range {:.6} over {} samples", self.joint_range, self.samples);
        out
    }
}

struct Cell {
    pred: Vec<Vec<String>>,
    truth: Vec<Vec<String>>,
    pool: ErrorPool,
}

impl Cell {
    fn new() -> Self {
        Cell {
            pred: Vec::new(),
            truth: Vec::new(),
            pool: ErrorPool::default(),
        }
    }
}

fn to_f64<F: Scalar>(rows: &[Vec<F>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
}

/// Runs every episode through the four inference signals with greedy
/// decoding. Describe and repeat-action are also scored per viewpoint when
/// opposite-view features are present; the language-input tasks always use
/// the robot's own view.
pub fn eval_all_tasks<F: Scalar>(model: &Pgae<F>, episodes: &[Episode], vocab: &Vocab) -> Result<EvalReport> {
    let range = joint_range(episodes);
    let mut rows = Vec::new();
    for task in Signal::INFERENCE {
        let views: &[Viewpoint] = match task {
            Signal::Describe | Signal::RepeatAction => &[Viewpoint::Own, Viewpoint::Opposite],
            _ => &[Viewpoint::Own],
        };
        let mut pooled = Cell::new();
        let mut per_view = Vec::new();
        for &view in views {
            let mut cell = Cell::new();
            for ep in episodes {
                if view == Viewpoint::Opposite && ep.vis_opposite.is_none() {
                    continue;
                }
                let io = build_task_io::<F>(vocab, ep, task, view)?;
                let out = model.translate(&io, vocab.eos())?;
                let words = |seq: &crate::lang::TokenSeq| -> Vec<String> {
                    seq.tokens.iter().map(|&t| vocab.token(t).to_string()).collect()
                };
                cell.pred.push(words(&out.tokens));
                cell.truth.push(words(&io.lang_target));
                let (p, t) = (to_f64(out.rollout.predicted()), to_f64(&io.act_target));
                cell.pool.add(&p, &t)?;
                pooled.pool.add(&p, &t)?;
            }
            pooled.pred.extend(cell.pred.iter().cloned());
            pooled.truth.extend(cell.truth.iter().cloned());
            per_view.push((view, cell));
        }
        let mut push = |view: Option<Viewpoint>, cell: &Cell| -> Result<()> {
            rows.push(EvalRow {
                task,
                view,
                samples: cell.pred.len(),
                accuracy: describe_accuracy(&cell.pred, &cell.truth)?,
                nrmse: cell.pool.nrmse(range)?,
                reference_single_view: reference_result(task, None),
                reference_mixed_view: reference_result(task, Some(view.unwrap_or(Viewpoint::Own))),
            });
            Ok(())
        };
        let has_opposite = per_view.iter().any(|(v, c)| *v == Viewpoint::Opposite && !c.pred.is_empty());
        if has_opposite {
            push(None, &pooled)?;
            for (view, cell) in &per_view {
                push(Some(*view), cell)?;
            }
        } else {
            push(Some(Viewpoint::Own), &per_view[0].1)?;
        }
    }
    Ok(EvalReport {
        samples: episodes.len(),
        joint_range: range,
        rows,
    })
}
