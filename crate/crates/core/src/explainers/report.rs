//! Global coefficient report: every visible (attribute, level) row of the
//! observed-concept coefficients, contrasted against a baseline class.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MccModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub attribute: String,
    pub level: String,
    /// `beta[level, class] - beta[level, baseline]` for every class.
    pub contrasts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub baseline_class: usize,
    pub n_classes: usize,
    pub rows: Vec<CoefficientRow>,
}

pub fn global_report(model: &MccModel, baseline_class: usize) -> Result<CoefficientReport> {
    let beta = &model.coefficients.beta_ob;
    let q = beta.ncols();
    if baseline_class >= q {
        return Err(Error::InvalidArgument(format!(
            "baseline class {baseline_class} out of range for {q} classes"
        )));
    }
    let mut rows = Vec::new();
    if q > 1 {
        for (attr, block) in model.schema.visible_blocks(&model.hidden) {
            for (level, row) in attr.levels.iter().zip(block) {
                let base = beta[(row, baseline_class)];
                rows.push(CoefficientRow {
                    attribute: attr.name.clone(),
                    level: level.clone(),
                    contrasts: (0..q)
                        .map(|c| if c == baseline_class { 0.0 } else { beta[(row, c)] - base })
                        .collect(),
                });
            }
        }
    }
    Ok(CoefficientReport {
        baseline_class,
        n_classes: q,
        rows,
    })
}

impl CoefficientReport {
    /// `attribute,level,class_0,...` with one row per visible level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute,level");
        for c in 0..self.n_classes {
            let _ = write!(out, ",class_{c}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.attribute, row.level);
            for v in &row.contrasts {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}
