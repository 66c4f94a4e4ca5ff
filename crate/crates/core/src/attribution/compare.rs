use serde::{Deserialize, Serialize};

use super::AttributionResult;
use crate::error::{Error, Result};
use crate::metrics::spearman;

/// Pairwise Spearman correlation of attribution scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    pub methods: Vec<String>,
    pub features: Vec<String>,
    /// `rho[i][j]`; `None` when a score vector is constant off the diagonal.
    pub rho: Vec<Vec<Option<f64>>>,
}

impl RankComparison {
    pub fn to_markdown(&self, title: &str) -> String {
        let mut out = format!("| {title} | {} |\n", self.methods.join(" | "));
        out.push_str(&format!("|---|{}\n", "---|".repeat(self.methods.len())));
        for (m, row) in self.methods.iter().zip(&self.rho) {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map_or_else(|| "n/a".to_string(), |r| format!("{r:.2}")))
                .collect();
            out.push_str(&format!("| {m} | {} |\n", cells.join(" | ")));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Aligns every result to the first one's feature order and correlates the
/// score vectors pairwise. The diagonal is 1 by definition.
pub fn rank_compare(results: &[AttributionResult]) -> Result<RankComparison> {
    let Some(first) = results.first() else {
        return Err(Error::InvalidParam("rank_compare needs at least one result".into()));
    };
    let features = first.feature_names.clone();
    let mut aligned = Vec::with_capacity(results.len());
    for r in results {
        let mut missing: Vec<String> = features.iter().filter(|f| !r.feature_names.contains(f)).cloned().collect();
        missing.extend(r.feature_names.iter().filter(|f| !features.contains(f)).cloned());
        if !missing.is_empty() {
            return Err(Error::Alignment(missing));
        }
        let scores: Vec<f64> = features
            .iter()
            .map(|f| r.scores[r.feature_names.iter().position(|n| n == f).unwrap()])
            .collect();
        aligned.push(scores);
    }
    let k = results.len();
    let mut rho = vec![vec![Some(1.0); k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let r = spearman(&aligned[i], &aligned[j])?;
            rho[i][j] = r;
            rho[j][i] = r;
        }
    }
    Ok(RankComparison {
        methods: results.iter().map(|r| r.method.as_str().to_string()).collect(),
        features,
        rho,
    })
}
