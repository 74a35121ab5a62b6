//! Selection quality (TPR, FDR, CFSR), AUROC and MSE.
//!
//! Selection rates are micro-averaged: counts are pooled over instances
//! before dividing. An instance that selects nothing adds nothing to the FDR
//! numerator or denominator, so an all-empty selection has FDR 0.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mask::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    /// Percent.
    pub tpr: f64,
    /// Percent.
    pub fdr: f64,
    /// Percent of instances that select the control feature.
    pub cfsr: Option<f64>,
}

pub fn selection_metrics(
    selected: &[Mask],
    relevant: &[BTreeSet<usize>],
    control: Option<usize>,
) -> Result<SelectionMetrics> {
    check_dim(selected.len(), relevant.len())?;
    if selected.is_empty() {
        return Err(Error::validation("no instances to score"));
    }
    let (mut hits, mut n_relevant, mut false_pos, mut n_selected, mut control_hits) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (h, r) in selected.iter().zip(relevant) {
        if r.is_empty() {
            return Err(Error::validation("an instance has an empty relevant set"));
        }
        if let Some(&j) = r.iter().find(|&&j| j >= h.len()) {
            return Err(Error::validation(format!("relevant index {j} outside dimension {}", h.len())));
        }
        for j in h.selected() {
            if r.contains(&j) {
                hits += 1;
            } else {
                false_pos += 1;
            }
        }
        n_relevant += r.len();
        n_selected += h.count();
        if let Some(c) = control {
            if h.get(c) {
                control_hits += 1;
            }
        }
    }
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    Ok(SelectionMetrics {
        tpr: pct(hits, n_relevant),
        fdr: pct(false_pos, n_selected),
        cfsr: control.map(|_| pct(control_hits, selected.len())),
    })
}

/// Mann–Whitney AUROC; tied scores get their average rank.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_dim(scores.len(), labels.len())?;
    if let Some(v) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::validation(format!("labels must be 0 or 1, got {v}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::validation("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_dim(targets.len(), preds.len())?;
    if preds.is_empty() {
        return Err(Error::validation("no predictions"));
    }
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: String,
    pub n: usize,
    pub mse: Option<f64>,
    pub auroc: Option<f64>,
    pub tpr: Option<f64>,
    pub fdr: Option<f64>,
    pub cfsr: Option<f64>,
    /// Mean `‖h‖ / d`.
    pub sparsity_ratio: f64,
    /// Mean `‖h‖`.
    pub sparsity_count: f64,
    pub averaging: String,
    /// Free-form provenance (config, seeds) of the evaluated artifacts.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "kind,cfsr,tpr,fdr,auroc,mse,sparsity_ratio,sparsity_count,n";

    pub fn new(kind: impl Into<String>, masks: &[Mask]) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::validation("no instances evaluated"));
        }
        let count = masks.iter().map(Mask::count).sum::<usize>() as f64 / masks.len() as f64;
        let ratio = masks.iter().map(Mask::sparsity_ratio).sum::<f64>() / masks.len() as f64;
        Ok(EvalReport {
            kind: kind.into(),
            n: masks.len(),
            mse: None,
            auroc: None,
            tpr: None,
            fdr: None,
            cfsr: None,
            sparsity_ratio: ratio,
            sparsity_count: count,
            averaging: "micro".into(),
            config: serde_json::Value::Null,
        })
    }

    pub fn with_selection(mut self, m: SelectionMetrics) -> Self {
        self.tpr = Some(m.tpr);
        self.fdr = Some(m.fdr);
        self.cfsr = m.cfsr;
        self
    }

    /// Header plus one row, selection columns in benchmark-table order.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{}\n{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.kind,
            f(self.cfsr),
            f(self.tpr),
            f(self.fdr),
            f(self.auroc),
            f(self.mse),
            self.sparsity_ratio,
            self.sparsity_count,
            self.n
        )
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
