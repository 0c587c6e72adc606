use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One oracle evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based.
    pub step: usize,
    pub digest: String,
    /// Predictor output for the chosen cell; absent for random search.
    pub predicted: Option<f64>,
    pub actual: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub step: usize,
    pub digest: String,
    pub score: f64,
}

/// A predictor re-fit after `step` evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refit {
    pub step: usize,
    pub support: usize,
    /// `None` when the support was degenerate and the previous fit was kept.
    pub chosen_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHistory {
    pub method: String,
    pub oracle: String,
    pub steps: Vec<StepRecord>,
    pub incumbent: Option<Incumbent>,
    pub refits: Vec<Refit>,
    pub oracle_calls: u64,
    pub early_stop: Option<String>,
    /// Fraction of the oracle's universe strictly better than the incumbent.
    pub final_percentile: Option<f64>,
}

impl SearchHistory {
    pub(crate) fn new(method: &str, oracle: &str) -> Self {
        SearchHistory {
            method: method.to_string(),
            oracle: oracle.to_string(),
            steps: Vec::new(),
            incumbent: None,
            refits: Vec::new(),
            oracle_calls: 0,
            early_stop: None,
            final_percentile: None,
        }
    }

    pub(crate) fn record(&mut self, digest: String, predicted: Option<f64>, actual: f64) {
        let step = self.steps.len() + 1;
        if self.incumbent.as_ref().is_none_or(|i| actual > i.score) {
            self.incumbent = Some(Incumbent {
                step,
                digest: digest.clone(),
                score: actual,
            });
        }
        let best_so_far = self.incumbent.as_ref().map_or(actual, |i| i.score);
        self.steps.push(StepRecord {
            step,
            digest,
            predicted,
            actual,
            best_so_far,
        });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,digest,predicted,actual,best_so_far\n");
        for s in &self.steps {
            let predicted = s.predicted.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{predicted},{},{}",
                s.step, s.digest, s.actual, s.best_so_far
            );
        }
        out
    }
}
