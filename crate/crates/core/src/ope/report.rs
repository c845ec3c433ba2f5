//! Evaluation results as CSV and text.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::schema::CONT_ACTIONS;
use crate::error::{Error, Result};

use super::coverage::CoverageScore;
use super::recon::ReconStudy;
use super::select::Selection;
use super::stats::Effectiveness;

/// Policy label of the dataset (clinician) policy.
pub const BEHAVIOR_LABEL: &str = "clinician (behavior)";
/// Policy label of the uniform-random reference policy.
pub const UNIFORM_LABEL: &str = "uniform";

/// Metrics of one evaluated policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEval {
    /// Algorithm label, or a reference policy name.
    pub policy: String,
    pub seed: u64,
    pub checkpoint: String,
    pub step: u64,
    pub v_pi: f64,
    /// Mean over quantiles from the distributional evaluator, if fitted.
    pub v_pi_dist: Option<f64>,
    pub coverage: CoverageScore,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub seed: u64,
    pub rows: Vec<PolicyEval>,
    /// Selected checkpoint per policy label.
    pub selections: Vec<(String, Selection)>,
    /// Reward effectiveness per `(policy, checkpoint)`.
    pub effectiveness: Vec<(String, String, Effectiveness)>,
    pub reconstruction: Option<(String, ReconStudy)>,
    /// `(checkpoint, error)` for checkpoints whose evaluation failed.
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    pub fn csv_header() -> String {
        let mut h = String::from("seed,policy,checkpoint,step,v_pi,v_pi_dist,d_pi,d_state");
        for a in &CONT_ACTIONS {
            write!(h, ",d_{}", a.name).unwrap();
        }
        h.push_str(",d_mode,selected");
        h
    }

    pub fn is_selected(&self, row: &PolicyEval) -> bool {
        self.selections.iter().any(|(p, s)| *p == row.policy && s.id == row.checkpoint)
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        for r in &self.rows {
            let dist = r.v_pi_dist.map_or(String::new(), |v| format!("{v:.6}"));
            write!(
                out,
                "{},{},{},{},{:.6},{},{:.6},{:.6}",
                r.seed, r.policy, r.checkpoint, r.step, r.v_pi, dist, r.coverage.d_pi, r.coverage.state
            )
            .unwrap();
            for c in r.coverage.cont {
                write!(out, ",{c:.6}").unwrap();
            }
            writeln!(out, ",{:.6},{}", r.coverage.disc, u8::from(self.is_selected(r))).unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("evaluation seed {}\n\n", self.seed);
        writeln!(out, "{:<20} {:<22} {:>8} {:>10} {:>10} {:>10}", "policy", "checkpoint", "step", "V", "V_dist", "d_pi")
            .unwrap();
        for r in &self.rows {
            let dist = r.v_pi_dist.map_or("-".to_string(), |v| format!("{v:.3}"));
            let mark = if self.is_selected(r) { " *" } else { "" };
            writeln!(
                out,
                "{:<20} {:<22} {:>8} {:>10.3} {:>10} {:>10.3}{mark}",
                r.policy, r.checkpoint, r.step, r.v_pi, dist, r.coverage.d_pi
            )
            .unwrap();
        }
        for (policy, s) in &self.selections {
            let note = if s.fallback { " (fewer than 10 checkpoints, coverage only)" } else { "" };
            writeln!(out, "\nselected {policy}: {} at step {} from {} candidates{note}", s.id, s.step, s.candidates)
                .unwrap();
        }
        for (policy, ck, e) in &self.effectiveness {
            let flag = |u: bool| if u { " (undefined)" } else { "" };
            writeln!(
                out,
                "\nreward effectiveness {policy} {ck}: rho_range {:.3}{} rho_length {:.3}{} over {} episodes",
                e.range.rho,
                flag(e.range.undefined),
                e.length.rho,
                flag(e.length.undefined),
                e.episodes
            )
            .unwrap();
        }
        for (ck, err) in &self.failures {
            writeln!(out, "\nfailed {ck}: {err}").unwrap();
        }
        if let Some((ck, study)) = &self.reconstruction {
            writeln!(out, "\nreconstruction study for {ck} over {} states", study.states).unwrap();
            out.push_str(&study.to_text());
        }
        out
    }

    /// Writes `eval.csv` and `eval.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("eval.csv", self.to_csv()), ("eval.txt", self.to_text())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_one_line_per_row_and_marks_selection() {
        let row = |ck: &str, step| PolicyEval {
            policy: "hybrid-iql".into(),
            seed: 3,
            checkpoint: ck.into(),
            step,
            v_pi: 1.5,
            v_pi_dist: Some(1.4),
            coverage: CoverageScore::default(),
        };
        let report = EvalReport {
            seed: 3,
            rows: vec![row("a", 1), row("b", 2)],
            selections: vec![(
                "hybrid-iql".into(),
                Selection { index: 1, id: "b".into(), step: 2, candidates: 1, fallback: true },
            )],
            ..Default::default()
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let width = lines[0].split(',').count();
        assert!(lines.iter().all(|l| l.split(',').count() == width));
        assert!(lines[1].ends_with(",0") && lines[2].ends_with(",1"));
        assert!(report.to_text().contains("selected hybrid-iql: b"));
    }
}
