//! Evaluation report records, run-level aggregation and text tables.

use std::fmt::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SubsetName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Detection threshold on the global score; `"-inf"`/`"inf"` on the wire
    /// when the best predictor is constant.
    #[serde(serialize_with = "serialize_threshold", deserialize_with = "deserialize_threshold")]
    pub tau: f64,
    pub f1: f64,
    pub auroc: Option<f64>,
    pub baseline_hr: f64,
    pub bon_hr: f64,
    pub delta_hr: f64,
    pub n_questions: usize,
    pub split_seed: u64,
    pub seed: u64,
    pub subset: SubsetName,
}

pub fn serialize_threshold<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn deserialize_threshold<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Num(f64),
        Text(String),
    }
    match Wire::deserialize(d)? {
        Wire::Num(v) => Ok(v),
        Wire::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Wire::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
        Wire::Text(t) => Err(serde::de::Error::custom(format!("invalid threshold '{t}'"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// Mean and spread over runs with different seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_runs: usize,
    pub f1: MeanStd,
    pub auroc: Option<MeanStd>,
    pub baseline_hr: MeanStd,
    pub bon_hr: MeanStd,
    pub delta_hr: MeanStd,
}

pub fn aggregate(reports: &[EvalReport]) -> Option<Aggregate> {
    let pick = |f: fn(&EvalReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    let aurocs: Vec<f64> = reports.iter().filter_map(|r| r.auroc).collect();
    Some(Aggregate {
        n_runs: reports.len(),
        f1: pick(|r| r.f1)?,
        auroc: MeanStd::of(&aurocs),
        baseline_hr: pick(|r| r.baseline_hr)?,
        bon_hr: pick(|r| r.bon_hr)?,
        delta_hr: pick(|r| r.delta_hr)?,
    })
}

/// Detection quality per method: F1 and AUROC.
pub fn format_detection_table(rows: &[(String, Aggregate)]) -> String {
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("Method".len());
    let mut out = format!("{:width$}  {:>15}  {:>15}\n", "Method", "F1", "AUROC");
    for (method, agg) in rows {
        let auroc = agg.auroc.map_or_else(|| "-".to_string(), |a| a.to_string());
        let _ = writeln!(out, "{method:width$}  {:>15}  {auroc:>15}", agg.f1.to_string());
    }
    out
}

/// Hallucination rates before and after Best-of-N selection per subset.
pub fn format_subset_table(rows: &[(SubsetName, Aggregate)]) -> String {
    let mut out = format!("{:10}  {:>15}  {:>15}  {:>15}\n", "Subset", "Baseline HR", "BoN HR", "Delta HR");
    for (subset, agg) in rows {
        let _ = writeln!(
            out,
            "{:10}  {:>15}  {:>15}  {:>15}",
            subset.as_str(),
            agg.baseline_hr.to_string(),
            agg.bon_hr.to_string(),
            agg.delta_hr.to_string()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(tau: f64, delta: f64) -> EvalReport {
        EvalReport {
            tau,
            f1: 0.5,
            auroc: Some(0.7),
            baseline_hr: 0.5,
            bon_hr: 0.5 - delta,
            delta_hr: delta,
            n_questions: 10,
            split_seed: 1,
            seed: 1,
            subset: SubsetName::AllValid,
        }
    }

    #[test]
    fn infinite_threshold_round_trips_as_text() {
        let r = report(f64::NEG_INFINITY, 0.1);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"tau\":\"-inf\""));
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
        let r = report(-3.25, 0.1);
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let agg = aggregate(&[report(0.0, 0.1), report(0.0, 0.3)]).unwrap();
        assert!((agg.delta_hr.mean - 0.2).abs() < 1e-15);
        assert!((agg.delta_hr.std - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(aggregate(&[]).is_none());
        let text = format_subset_table(&[(SubsetName::MidValid, agg)]);
        assert!(text.contains("mid_valid"));
    }
}
