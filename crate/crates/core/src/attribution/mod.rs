//! Feature attribution: recursive elimination, Shapley values, Sobol
//! sensitivity indices, and rank agreement between them.

mod compare;
mod export;
mod gsa;
mod rfe;
mod shap;
mod sobol;
mod sobol_seq;
mod sobol_table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::average_ranks;

pub use compare::{rank_compare, RankComparison};
pub use export::{bar_chart_svg, grouped_bar_chart_svg, sobol_csv};
pub use gsa::{gsa_over_model, GsaOutput, GsaSampling};
pub use rfe::{rfe, RfeAbort, RfeStep, RfeTrace};
pub use shap::{
    shap_exact, shap_kernel, shap_summary, Background, ShapExplanation, ShapMode, DEFAULT_BACKGROUND_SIZE,
    MAX_EXACT_FEATURES,
};
pub use sobol::{sobol_design, sobol_indices, SaltelliDesign, SobolIndices, CONSTANT_VARIANCE_TOL};
pub use sobol_seq::SobolSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "rfe")]
    Rfe,
    #[serde(rename = "shap")]
    Shap,
    #[serde(rename = "gsa-s1")]
    GsaS1,
    #[serde(rename = "gsa-st")]
    GsaSt,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rfe => "rfe",
            Method::Shap => "shap",
            Method::GsaS1 => "gsa-s1",
            Method::GsaSt => "gsa-st",
        }
    }
}

/// Per-feature scores from one method, higher = more important.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub method: Method,
    pub feature_names: Vec<String>,
    pub scores: Vec<f64>,
    /// 1 = most important; ties share their average rank.
    pub ranks: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl AttributionResult {
    pub fn from_scores(
        method: Method,
        feature_names: Vec<String>,
        scores: Vec<f64>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if feature_names.len() != scores.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} scores",
                feature_names.len(),
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParam(format!("{} scores must be finite", method.as_str())));
        }
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let ranks = average_ranks(&negated);
        Ok(Self {
            method,
            feature_names,
            scores,
            ranks,
            metadata,
        })
    }

    /// Feature names ordered from most to least important (stable on ties).
    pub fn ordered(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.ranks[a].total_cmp(&self.ranks[b]));
        idx.into_iter().map(|i| self.feature_names[i].as_str()).collect()
    }

    pub fn top(&self, k: usize) -> Vec<&str> {
        self.ordered().into_iter().take(k).collect()
    }

    pub fn rank_of(&self, name: &str) -> Option<f64> {
        self.feature_names.iter().position(|n| n == name).map(|i| self.ranks[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,feature,score,rank\n");
        for ((n, s), r) in self.feature_names.iter().zip(&self.scores).zip(&self.ranks) {
            out.push_str(&format!("{},{n},{s},{r}\n", self.method.as_str()));
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output; ranks are recomputed from the scores.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut method = None;
        let (mut names, mut scores) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let m: Method = serde_json::from_value(serde_json::Value::String(rec.get(0).unwrap_or("").to_string()))
                .map_err(|_| Error::InvalidParam(format!("unknown attribution method `{}`", rec.get(0).unwrap_or(""))))?;
            if method.is_some_and(|prev| prev != m) {
                return Err(Error::InvalidParam("attribution CSV mixes methods".into()));
            }
            method = Some(m);
            names.push(rec.get(1).unwrap_or("").to_string());
            let score = rec.get(2).and_then(|s| s.parse::<f64>().ok());
            scores.push(score.ok_or_else(|| Error::InvalidParam(format!("bad score for `{}`", names.last().unwrap())))?);
        }
        let method = method.ok_or(Error::EmptyDataset)?;
        Self::from_scores(method, names, scores, BTreeMap::new())
    }
}
