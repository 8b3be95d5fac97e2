//! Per-iteration estimation records and their CSV form.

/// One iteration of an estimator: objective value, derived estimate, step
/// size when a step was taken, and the cumulative oracle sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub rho: f64,
    pub estimate: f64,
    pub alpha: Option<f64>,
    pub samples: u64,
    /// Cone center, present for conic traces only.
    pub c: Option<f64>,
    /// Cone radius, present for conic traces only.
    pub r: Option<f64>,
}

impl TraceRow {
    pub fn new(k: usize, rho: f64, estimate: f64, alpha: Option<f64>, samples: u64) -> Self {
        Self {
            k,
            rho,
            estimate,
            alpha,
            samples,
            c: None,
            r: None,
        }
    }

    pub fn with_cone(mut self, c: f64, r: f64) -> Self {
        self.c = Some(c);
        self.r = Some(r);
        self
    }
}

/// Ordered iteration records with strictly increasing cumulative samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateTrace {
    rows: Vec<TraceRow>,
}

impl EstimateTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; cumulative samples must strictly increase.
    pub fn push(&mut self, row: TraceRow) {
        if let Some(last) = self.rows.last() {
            assert!(
                row.samples > last.samples,
                "cumulative sample count must strictly increase ({} -> {})",
                last.samples,
                row.samples
            );
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with columns `k, rho, estimate, alpha, samples`, plus `c, r`
    /// when any row carries cone data. Floats use the shortest
    /// round-trip decimal form; absent alphas are left empty.
    pub fn to_csv(&self) -> String {
        let cone = self.rows.iter().any(|r| r.c.is_some());
        let mut out = String::new();
        out.push_str(if cone {
            "k,rho,estimate,alpha,samples,c,r\n"
        } else {
            "k,rho,estimate,alpha,samples\n"
        });
        for row in &self.rows {
            let alpha = row.alpha.map(|a| a.to_string()).unwrap_or_default();
            if cone {
                let c = row.c.map(|v| v.to_string()).unwrap_or_default();
                let r = row.r.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.k, row.rho, row.estimate, alpha, row.samples, c, r
                ));
            } else {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.k, row.rho, row.estimate, alpha, row.samples
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_adds_cone_columns_only_when_present() {
        let mut t = EstimateTrace::new();
        t.push(TraceRow::new(0, 1.5, 1.224, None, 2));
        t.push(TraceRow::new(1, 1.75, 1.322, Some(0.01), 4));
        let csv = t.to_csv();
        assert!(csv.starts_with("k,rho,estimate,alpha,samples\n"));
        assert!(csv.contains("0,1.5,1.224,,2\n"));
        assert!(csv.contains("1,1.75,1.322,0.01,4\n"));

        let mut t = EstimateTrace::new();
        t.push(TraceRow::new(0, 1.0, 1.0, None, 3).with_cone(0.5, 1.0));
        assert!(t.to_csv().starts_with("k,rho,estimate,alpha,samples,c,r\n"));
    }

    #[test]
    #[should_panic(expected = "strictly increase")]
    fn sample_counts_must_increase() {
        let mut t = EstimateTrace::new();
        t.push(TraceRow::new(0, 1.0, 1.0, None, 2));
        t.push(TraceRow::new(1, 1.0, 1.0, None, 2));
    }
}
