//! RFMST behaviour features and the standardizer used before
//! distance-based resampling.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{LabeledPair, WindowConfig};

pub const NUM_FEATURES: usize = 5;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["R", "F", "M", "S", "T"];

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("pair {user_id}/{item_id} has no observation transactions")]
    EmptyPair { user_id: String, item_id: String },
    #[error("standardizer needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature csv: {0}")]
    Csv(String),
}

/// One labeled <user, item> observation: recency R, frequency F, monetary M,
/// relationship span S and mean inter-purchase interval T = S / F.
/// Durations are in fractional days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub user_id: String,
    pub item_id: String,
    pub values: [f64; NUM_FEATURES],
    pub label: u8,
}

impl FeatureRow {
    pub fn r(&self) -> f64 {
        self.values[0]
    }
    pub fn f(&self) -> f64 {
        self.values[1]
    }
    pub fn m(&self) -> f64 {
        self.values[2]
    }
    pub fn s(&self) -> f64 {
        self.values[3]
    }
    pub fn t(&self) -> f64 {
        self.values[4]
    }
}

/// R = observation_end - last purchase; F = purchase count; M = total amount;
/// S = last - first purchase; T = S / F.
pub fn compute_rfmst(pair: &LabeledPair, w: &WindowConfig) -> Result<FeatureRow, FeatureError> {
    let txs = &pair.transactions_in_observation;
    if txs.is_empty() {
        return Err(FeatureError::EmptyPair {
            user_id: pair.user_id.clone(),
            item_id: pair.item_id.clone(),
        });
    }
    let first = txs.first().unwrap().timestamp;
    let last = txs.last().unwrap().timestamp;
    let days = |d: chrono::Duration| d.num_milliseconds() as f64 / 1_000.0 / SECONDS_PER_DAY;
    let r = days(w.observation_end - last);
    let f = txs.len() as f64;
    let m: f64 = txs.iter().map(|t| t.amount).sum();
    let s = days(last - first);
    let t = s / f;
    Ok(FeatureRow {
        user_id: pair.user_id.clone(),
        item_id: pair.item_id.clone(),
        values: [r, f, m, s, t],
        label: pair.label,
    })
}

/// Per-feature mean and sample standard deviation, fitted on training rows
/// only. Constant features carry sd = 0 and standardize to 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; NUM_FEATURES],
    pub sd: [f64; NUM_FEATURES],
}

pub fn fit_standardizer(rows: &[FeatureRow]) -> Result<Standardizer, FeatureError> {
    if rows.len() < 2 {
        return Err(FeatureError::TooFewRows(rows.len()));
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; NUM_FEATURES];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut sd = [0.0; NUM_FEATURES];
    for row in rows {
        for ((acc, v), m) in sd.iter_mut().zip(row.values).zip(mean) {
            *acc += (v - m) * (v - m);
        }
    }
    for acc in &mut sd {
        *acc = (*acc / (n - 1.0)).sqrt();
    }
    Ok(Standardizer { mean, sd })
}

impl Standardizer {
    /// x' = (x - mean) / sd; sd = 0 features map to 0.
    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if values.len() != NUM_FEATURES {
            return Err(FeatureError::DimensionMismatch {
                expected: NUM_FEATURES,
                got: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(self.mean)
            .zip(self.sd)
            .map(|((&v, m), s)| if s == 0.0 { 0.0 } else { (v - m) / s })
            .collect())
    }

    /// Inverse of [`Standardizer::transform`]; sd = 0 features recover the mean.
    pub fn inverse(&self, values: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if values.len() != NUM_FEATURES {
            return Err(FeatureError::DimensionMismatch {
                expected: NUM_FEATURES,
                got: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(self.mean)
            .zip(self.sd)
            .map(|((&v, m), s)| if s == 0.0 { m } else { v * s + m })
            .collect())
    }
}

/// Write the feature matrix as CSV: user_id,item_id,R,F,M,S,T,label.
pub fn write_feature_csv<W: Write>(out: W, rows: &[FeatureRow]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["user_id", "item_id"];
    header.extend(FEATURE_NAMES);
    header.push("label");
    w.write_record(&header).map_err(|e| FeatureError::Csv(e.to_string()))?;
    for row in rows {
        let mut rec = vec![row.user_id.clone(), row.item_id.clone()];
        rec.extend(row.values.iter().map(|v| format!("{v:.9}")));
        rec.push(row.label.to_string());
        w.write_record(&rec).map_err(|e| FeatureError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| FeatureError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(input: R) -> Result<Vec<FeatureRow>, FeatureError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| FeatureError::Csv(e.to_string()))?;
        if record.len() < 2 + NUM_FEATURES + 1 {
            return Err(FeatureError::Csv(format!("short record: {record:?}")));
        }
        let mut values = [0.0; NUM_FEATURES];
        for (i, v) in values.iter_mut().enumerate() {
            *v = record[2 + i]
                .parse()
                .map_err(|e| FeatureError::Csv(format!("bad number: {e}")))?;
        }
        rows.push(FeatureRow {
            user_id: record[0].to_string(),
            item_id: record[1].to_string(),
            values,
            label: record[2 + NUM_FEATURES]
                .parse()
                .map_err(|e| FeatureError::Csv(format!("bad label: {e}")))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Transaction;
    use approx::assert_abs_diff_eq;
    use chrono::{DateTime, Utc};

    fn ts(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn window() -> WindowConfig {
        WindowConfig {
            observation_start: ts("2020-01-01T00:00:00Z"),
            observation_end: ts("2020-01-11T00:00:00Z"), // day 10 relative to day 1
            forecast_end: ts("2020-02-11T00:00:00Z"),
        }
    }

    fn pair(days_amounts: &[(f64, f64)]) -> LabeledPair {
        let start = ts("2020-01-01T00:00:00Z");
        let txs = days_amounts
            .iter()
            .map(|&(d, a)| Transaction {
                user_id: "u".into(),
                item_id: "i".into(),
                timestamp: start + chrono::Duration::milliseconds((d * 86_400_000.0) as i64),
                quantity: 1,
                amount: a,
                payment_method: "card".into(),
            })
            .collect();
        LabeledPair {
            user_id: "u".into(),
            item_id: "i".into(),
            transactions_in_observation: txs,
            label: 1,
        }
    }

    #[test]
    fn single_purchase_at_window_end() {
        let row = compute_rfmst(&pair(&[(10.0, 12.5)]), &window()).unwrap();
        assert_eq!(row.values, [0.0, 1.0, 12.5, 0.0, 0.0]);
    }

    #[test]
    fn two_purchases_hand_computed() {
        // purchases day 1 (10.0) and day 4 (20.0), observation_end day 10
        let row = compute_rfmst(&pair(&[(1.0, 10.0), (4.0, 20.0)]), &window()).unwrap();
        assert_abs_diff_eq!(row.r(), 6.0, epsilon = 1e-9);
        assert_eq!(row.f(), 2.0);
        assert_abs_diff_eq!(row.m(), 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(row.s(), 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(row.t(), 1.5, epsilon = 1e-9);
    }

    #[test]
    fn three_purchases_hand_computed() {
        let row = compute_rfmst(&pair(&[(0.0, 1.0), (5.0, 1.0), (10.0, 1.0)]), &window()).unwrap();
        assert_abs_diff_eq!(row.r(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(row.s(), 10.0, epsilon = 1e-9);
        assert_eq!(row.f(), 3.0);
        assert_abs_diff_eq!(row.t(), 10.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_pair_errors() {
        let mut p = pair(&[(1.0, 1.0)]);
        p.transactions_in_observation.clear();
        assert!(compute_rfmst(&p, &window()).is_err());
    }

    #[test]
    fn t_times_f_equals_s() {
        for spec in [&[(0.5, 1.0), (3.25, 2.0), (7.75, 3.0)][..], &[(2.0, 5.0)][..]] {
            let row = compute_rfmst(&pair(spec), &window()).unwrap();
            assert_abs_diff_eq!(row.t() * row.f(), row.s(), epsilon = 1e-9);
            assert!(row.r() + row.s() <= 10.0 + 1e-9);
        }
    }

    fn fr(values: [f64; NUM_FEATURES]) -> FeatureRow {
        FeatureRow {
            user_id: "u".into(),
            item_id: "i".into(),
            values,
            label: 0,
        }
    }

    #[test]
    fn standardizer_mean_and_sd() {
        let rows = vec![fr([1.0; 5]), fr([3.0; 5])];
        let s = fit_standardizer(&rows).unwrap();
        for i in 0..NUM_FEATURES {
            assert_abs_diff_eq!(s.mean[i], 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.sd[i], 2.0_f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn standardizer_degenerate_cases() {
        let rows = vec![fr([4.0; 5]), fr([4.0; 5])];
        let s = fit_standardizer(&rows).unwrap();
        assert_eq!(s.sd, [0.0; 5]);
        assert_eq!(s.transform(&[4.0; 5]).unwrap(), vec![0.0; 5]);
        assert!(fit_standardizer(&[fr([1.0; 5])]).is_err());
    }

    #[test]
    fn transform_identities_and_roundtrip() {
        let rows = vec![fr([1.0, 2.0, 3.0, 4.0, 5.0]), fr([3.0, 6.0, 9.0, 12.0, 15.0])];
        let s = fit_standardizer(&rows).unwrap();
        let at_mean = s.transform(&s.mean.to_vec()).unwrap();
        for v in at_mean {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
        let plus_sd: Vec<f64> = s.mean.iter().zip(s.sd).map(|(m, sd)| m + sd).collect();
        for v in s.transform(&plus_sd).unwrap() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        let x = vec![0.3, 7.0, 2.0, 11.0, 4.5];
        let back = s.inverse(&s.transform(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(back) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
        assert!(s.transform(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn standardized_training_matrix_is_centered() {
        let rows: Vec<FeatureRow> = (0..50)
            .map(|i| {
                let v = i as f64;
                fr([v, v * 2.0, (v - 25.0).powi(2), 3.0, v.sin()])
            })
            .collect();
        let s = fit_standardizer(&rows).unwrap();
        let transformed: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| s.transform(&r.values).unwrap())
            .collect();
        for d in 0..NUM_FEATURES {
            let n = transformed.len() as f64;
            let mean: f64 = transformed.iter().map(|t| t[d]).sum::<f64>() / n;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
            if s.sd[d] > 0.0 {
                let var: f64 =
                    transformed.iter().map(|t| (t[d] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![
            FeatureRow {
                user_id: "u1".into(),
                item_id: "i1".into(),
                values: [1.0, 2.0, 3.5, 4.0, 2.0],
                label: 1,
            },
            FeatureRow {
                user_id: "u2".into(),
                item_id: "i2".into(),
                values: [0.0, 1.0, 9.25, 0.0, 0.0],
                label: 0,
            },
        ];
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &rows).unwrap();
        let back = read_feature_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].user_id, "u1");
        assert_eq!(back[1].label, 0);
        for (a, b) in rows[0].values.iter().zip(back[0].values) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
    }
}
