use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Mean score and support for one (context length, absolute step) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCell {
    pub context_len: usize,
    /// 1-based absolute step index.
    pub step: usize,
    pub mean: f64,
    pub support: usize,
}

/// Per-step score curves, one per observed context length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    pub metric: String,
    /// Sorted by `(context_len, step)`.
    pub cells: Vec<CurveCell>,
}

impl StepCurve {
    /// Aggregates `(context_len, step, score)` observations.
    pub fn from_observations(metric: impl Into<String>, obs: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for (c, s, v) in obs {
            let e = acc.entry((c, s)).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        Self::from_sums(metric.into(), acc)
    }

    fn from_sums(metric: String, acc: BTreeMap<(usize, usize), (f64, usize)>) -> Self {
        let cells = acc
            .into_iter()
            .map(|((context_len, step), (sum, support))| CurveCell {
                context_len,
                step,
                mean: if support == 0 { 0.0 } else { sum / support as f64 },
                support,
            })
            .collect();
        StepCurve { metric, cells }
    }

    pub fn cell(&self, context_len: usize, step: usize) -> Option<&CurveCell> {
        self.cells
            .binary_search_by(|c| (c.context_len, c.step).cmp(&(context_len, step)))
            .ok()
            .map(|i| &self.cells[i])
    }

    /// Combines two curves over disjoint recipe sets.
    pub fn merge(&self, other: &StepCurve) -> StepCurve {
        let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for c in self.cells.iter().chain(&other.cells) {
            let e = acc.entry((c.context_len, c.step)).or_insert((0.0, 0));
            e.0 += c.mean * c.support as f64;
            e.1 += c.support;
        }
        Self::from_sums(self.metric.clone(), acc)
    }

    /// Support-weighted mean over cells `horizon` steps past their context.
    pub fn mean_at_horizon(&self, horizon: usize) -> Option<f64> {
        let (sum, n) = self
            .cells
            .iter()
            .filter(|c| c.step == c.context_len + horizon)
            .fold((0.0, 0usize), |(s, n), c| (s + c.mean * c.support as f64, n + c.support));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn total_support(&self) -> usize {
        self.cells.iter().map(|c| c.support).sum()
    }
}
