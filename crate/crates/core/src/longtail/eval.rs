use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::longtail::dataset::Split;
use crate::longtail::train::Model;

/// Class buckets by training count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyGroup {
    Many,
    Medium,
    Few,
}

/// Many-shot is strictly above `many`, few-shot strictly below `few`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub many: usize,
    pub few: usize,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        Self { many: 100, few: 20 }
    }
}

impl GroupThresholds {
    pub fn group(&self, count: usize) -> FrequencyGroup {
        if count > self.many {
            FrequencyGroup::Many
        } else if count < self.few {
            FrequencyGroup::Few
        } else {
            FrequencyGroup::Medium
        }
    }

    pub fn groups(&self, counts: &[usize]) -> Vec<FrequencyGroup> {
        counts.iter().map(|&c| self.group(c)).collect()
    }
}

/// Top-1 accuracy overall, per frequency group, and per class. A group with
/// no classes has no accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub all: f64,
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
    pub per_class: Vec<Option<f64>>,
}

impl Accuracy {
    pub fn group(&self, g: FrequencyGroup) -> Option<f64> {
        match g {
            FrequencyGroup::Many => self.many,
            FrequencyGroup::Medium => self.medium,
            FrequencyGroup::Few => self.few,
        }
    }
}

/// Scores predictions against labels; `class_counts` are training counts used
/// for grouping.
pub fn score(predictions: &[usize], labels: &[usize], class_counts: &[usize], thresholds: GroupThresholds) -> Accuracy {
    let c = class_counts.len();
    let mut hit = vec![0usize; c];
    let mut seen = vec![0usize; c];
    for (&p, &y) in predictions.iter().zip(labels) {
        seen[y] += 1;
        if p == y {
            hit[y] += 1;
        }
    }
    let groups = thresholds.groups(class_counts);
    let group_acc = |g: FrequencyGroup| {
        let (h, n) = (0..c)
            .filter(|&j| groups[j] == g)
            .fold((0, 0), |(h, n), j| (h + hit[j], n + seen[j]));
        (n > 0).then(|| h as f64 / n as f64)
    };
    let total_hit: usize = hit.iter().sum();
    Accuracy {
        all: if labels.is_empty() {
            0.0
        } else {
            total_hit as f64 / labels.len() as f64
        },
        many: group_acc(FrequencyGroup::Many),
        medium: group_acc(FrequencyGroup::Medium),
        few: group_acc(FrequencyGroup::Few),
        per_class: (0..c)
            .map(|j| (seen[j] > 0).then(|| hit[j] as f64 / seen[j] as f64))
            .collect(),
    }
}

/// Argmax accuracy of `model` on `split`.
pub fn evaluate(model: &Model, split: &Split, class_counts: &[usize], thresholds: GroupThresholds) -> Result<Accuracy> {
    let preds = model.predict(split.features.view())?;
    Ok(score(&preds, &split.labels, class_counts, thresholds))
}
