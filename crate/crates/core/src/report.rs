//! Before/after fairness reports and their JSON/CSV renderings.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embedset::{ConceptVector, EmbeddingSet};
use crate::metrics::{
    delta_sigma_pct, group_mean_similarity, jsd_reduction_pct, normalized_jsd, top_k_retrieval, GroupSimilarityTable,
    TopKHistogram,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotRow {
    pub base_acc: f64,
    pub debiased_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub model_tag: String,
    pub prompt: String,
    pub groups_before: GroupSimilarityTable,
    pub groups_after: Option<GroupSimilarityTable>,
    pub sigma_before: f64,
    pub sigma_after: Option<f64>,
    pub delta_sigma_pct: Option<f64>,
    pub jsd_before: f64,
    pub jsd_after: Option<f64>,
    pub jsd_reduction_pct: Option<f64>,
    pub top_k_before: TopKHistogram,
    pub top_k_after: Option<TopKHistogram>,
    pub zero_shot: BTreeMap<String, ZeroShotRow>,
    /// Downstream benchmark scores; filled by external harnesses.
    #[serde(default)]
    pub benchmarks: BTreeMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FairnessReport {
    /// Audit of a single set: similarity table, top-k histogram and JSD
    /// against `reference`.
    pub fn audit(
        model_tag: &str,
        set: &EmbeddingSet,
        concept: &ConceptVector,
        k: usize,
        reference: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let groups = group_mean_similarity(set, concept)?;
        let top_k = top_k_retrieval(set, concept, k)?;
        let jsd = normalized_jsd(&top_k.counts, reference)?;
        Ok(Self {
            model_tag: model_tag.to_string(),
            prompt: concept.text.clone(),
            sigma_before: groups.overall_sigma,
            groups_before: groups,
            groups_after: None,
            sigma_after: None,
            delta_sigma_pct: None,
            jsd_before: jsd,
            jsd_after: None,
            jsd_reduction_pct: None,
            top_k_before: top_k,
            top_k_after: None,
            zero_shot: BTreeMap::new(),
            benchmarks: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    /// Adds the debiased side of the audit and the derived reductions.
    pub fn with_after(mut self, set: &EmbeddingSet, concept: &ConceptVector, reference: &BTreeMap<String, f64>) -> Result<Self> {
        let groups = group_mean_similarity(set, concept)?;
        let top_k = top_k_retrieval(set, concept, self.top_k_before.k)?;
        let jsd = normalized_jsd(&top_k.counts, reference)?;
        self.set_after(groups.overall_sigma, jsd);
        self.groups_after = Some(groups);
        self.top_k_after = Some(top_k);
        Ok(self)
    }

    fn set_after(&mut self, sigma_after: f64, jsd_after: f64) {
        self.sigma_after = Some(sigma_after);
        self.jsd_after = Some(jsd_after);
        self.delta_sigma_pct = self.reduction("delta_sigma_pct", delta_sigma_pct(self.sigma_before, sigma_after));
        self.jsd_reduction_pct = self.reduction("jsd_reduction_pct", jsd_reduction_pct(self.jsd_before, jsd_after));
    }

    fn reduction(&mut self, name: &str, r: Result<f64>) -> Option<f64> {
        match r {
            Ok(x) => {
                if !(0.0..=100.0).contains(&x) {
                    self.warnings.push(format!("{name} = {x:.3} lies outside [0, 100]"));
                }
                Some(x)
            }
            Err(_) => {
                self.warnings.push(format!("{name} undefined: zero baseline"));
                None
            }
        }
    }

    /// Per-group zero-shot accuracies; `debiased` may cover fewer groups.
    pub fn with_zero_shot(mut self, base: &BTreeMap<String, f64>, debiased: Option<&BTreeMap<String, f64>>) -> Self {
        self.zero_shot = base
            .iter()
            .map(|(g, &a)| {
                let row = ZeroShotRow {
                    base_acc: a,
                    debiased_acc: debiased.and_then(|d| d.get(g).copied()),
                };
                (g.clone(), row)
            })
            .collect();
        self
    }

    pub fn table3_row(&self) -> Table3Row {
        Table3Row {
            model: self.model_tag.clone(),
            prompt: self.prompt.clone(),
            delta_sigma_pct: self.delta_sigma_pct,
            jsd_reduction_pct: self.jsd_reduction_pct,
        }
    }
}

/// One row in the model/prompt summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table3Row {
    pub model: String,
    pub prompt: String,
    pub delta_sigma_pct: Option<f64>,
    pub jsd_reduction_pct: Option<f64>,
}

impl Table3Row {
    /// Reduction from raw dispersions; JSD left blank.
    pub fn from_sigmas(model: &str, prompt: &str, sigma_before: f64, sigma_after: f64) -> Result<Self> {
        Ok(Self {
            model: model.to_string(),
            prompt: prompt.to_string(),
            delta_sigma_pct: Some(delta_sigma_pct(sigma_before, sigma_after)?),
            jsd_reduction_pct: None,
        })
    }
}

/// Three decimals, the summary-table cell format. Empty for missing values.
pub fn format_cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_default()
}

fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x, 6))) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with sorted keys and floats cut to 6 significant digits.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn reports_to_json(reports: &[FairnessReport]) -> Result<String> {
    to_canonical_json(&reports)
}

pub fn reports_from_json(s: &str) -> Result<Vec<FairnessReport>> {
    let v: Value = serde_json::from_str(s)?;
    Ok(match v {
        Value::Array(_) => serde_json::from_value(v)?,
        other => vec![serde_json::from_value(other)?],
    })
}

fn csv_err(e: std::io::Error) -> Error {
    Error::io("<csv output>", e)
}

/// `model,prompt,delta_sigma_pct,jsd_reduction_pct`.
pub fn write_table3_csv<W: Write>(w: W, rows: &[Table3Row]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "prompt", "delta_sigma_pct", "jsd_reduction_pct"])?;
    for r in rows {
        out.write_record([
            r.model.clone(),
            r.prompt.clone(),
            format_cell(r.delta_sigma_pct),
            format_cell(r.jsd_reduction_pct),
        ])?;
    }
    out.flush().map_err(csv_err)
}

/// `prompt,group,count_before,count_after`, one row per group and prompt,
/// for bar charts of the retrieval histograms.
pub fn write_top_k_csv<W: Write>(w: W, reports: &[FairnessReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["prompt", "group", "count_before", "count_after"])?;
    for r in reports {
        for (g, c) in &r.top_k_before.counts {
            let after = r
                .top_k_after
                .as_ref()
                .map(|a| a.counts.get(g).copied().unwrap_or(0).to_string())
                .unwrap_or_default();
            out.write_record([r.prompt.clone(), g.clone(), c.to_string(), after])?;
        }
    }
    out.flush().map_err(csv_err)
}

/// `group,base_acc,debiased_acc` with three decimals.
pub fn write_zero_shot_csv<W: Write>(w: W, report: &FairnessReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "base_acc", "debiased_acc"])?;
    for (g, row) in &report.zero_shot {
        out.write_record([g.clone(), format_cell(Some(row.base_acc)), format_cell(row.debiased_acc)])?;
    }
    out.flush().map_err(csv_err)
}
