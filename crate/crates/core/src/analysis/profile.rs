//! Performance profiles over a solvers × cases metric table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    BestObjective,
    ConvergedIteration,
    ThresholdedCompliance,
}

/// Rows are solvers, columns are cases. Failed runs are `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub kind: MetricKind,
    pub solvers: Vec<String>,
    pub cases: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl MetricTable {
    pub fn new(
        kind: MetricKind,
        solvers: Vec<String>,
        cases: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let t = MetricTable {
            kind,
            solvers,
            cases,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.solvers.len()
            || self.values.iter().any(|r| r.len() != self.cases.len())
        {
            return Err(Error::param("metric table shape does not match its labels"));
        }
        if self.values.iter().flatten().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::param(
                "metric entries must be >= 0 (use +inf for failures)",
            ));
        }
        Ok(())
    }
}

/// `p_i(τ)` for each solver (rows) at each `τ` in `taus`.
pub fn performance_profile(table: &MetricTable, taus: &[f64]) -> Result<Vec<Vec<f64>>> {
    table.validate()?;
    let ns = table.solvers.len();
    let nc = table.cases.len();
    if nc == 0 || ns == 0 {
        return Err(Error::param("metric table is empty"));
    }
    let mut ratios = vec![vec![0.0; nc]; ns];
    for j in 0..nc {
        let best = (0..ns)
            .map(|i| table.values[i][j])
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(Error::param(format!(
                "case '{}' has no finite entry",
                table.cases[j]
            )));
        }
        for i in 0..ns {
            let m = table.values[i][j];
            ratios[i][j] = if best == 0.0 {
                if m == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                m / best
            };
        }
    }
    Ok(ratios
        .iter()
        .map(|row| {
            taus.iter()
                .map(|&t| row.iter().filter(|&&r| r <= t).count() as f64 / nc as f64)
                .collect()
        })
        .collect())
}

pub fn profile_to_csv(table: &MetricTable, taus: &[f64], curves: &[Vec<f64>]) -> String {
    let mut out = String::from("tau");
    for s in &table.solvers {
        out.push(',');
        out.push_str(&format!("p_{s}"));
    }
    out.push('\n');
    for (k, t) in taus.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for c in curves {
            out.push_str(&format!(",{}", c[k]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: Vec<Vec<f64>>) -> MetricTable {
        let ns = values.len();
        let nc = values[0].len();
        MetricTable::new(
            MetricKind::BestObjective,
            (0..ns).map(|i| format!("s{i}")).collect(),
            (0..nc).map(|j| format!("c{j}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn two_by_two() {
        let p = performance_profile(
            &table(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            &[1.0, 1.5, 2.0],
        )
        .unwrap();
        assert_eq!(p, vec![vec![0.5, 0.5, 1.0], vec![0.5, 0.5, 1.0]]);
    }

    #[test]
    fn ties_and_failures() {
        let p = performance_profile(
            &table(vec![vec![1.0, f64::INFINITY], vec![1.0, 3.0]]),
            &[1.0, 1e9],
        )
        .unwrap();
        assert_eq!(p, vec![vec![0.5, 0.5], vec![1.0, 1.0]]);
        let bad = table(vec![vec![f64::INFINITY], vec![f64::INFINITY]]);
        assert!(performance_profile(&bad, &[1.0]).is_err());
    }

    #[test]
    fn single_solver() {
        let p = performance_profile(&table(vec![vec![4.0, 0.5, 7.0]]), &[1.0, 3.0]).unwrap();
        assert_eq!(p, vec![vec![1.0, 1.0]]);
    }
}
