//! Transaction ingestion, observation/forecast windowing and pair labeling.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::rng_from_seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv read failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("invalid window: require observation_start < observation_end < forecast_end")]
    BadWindow,
    #[error("train/valid split needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("split ratio must lie in (0,1), got {0}")]
    BadRatio(f64),
}

/// One purchase record. `payment_method` is carried through but unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: DateTime<Utc>,
    pub quantity: u64,
    pub amount: f64,
    pub payment_method: String,
}

/// Observation/forecast period boundaries.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowConfig {
    pub observation_start: DateTime<Utc>,
    pub observation_end: DateTime<Utc>,
    pub forecast_end: DateTime<Utc>,
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.observation_start < self.observation_end && self.observation_end < self.forecast_end
        {
            Ok(())
        } else {
            Err(DataError::BadWindow)
        }
    }
}

/// A <user, item> pair with its observation-window purchases and the
/// repurchase label (1 = the pair also appears in the forecast window).
#[derive(Debug, Clone)]
pub struct LabeledPair {
    pub user_id: String,
    pub item_id: String,
    pub transactions_in_observation: Vec<Transaction>,
    pub label: u8,
}

/// Maps logical fields to CSV column names so non-default logs can be ingested.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: String,
    pub quantity: String,
    pub amount: String,
    pub payment_method: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            user_id: "user_id".into(),
            item_id: "item_id".into(),
            timestamp: "timestamp".into(),
            quantity: "quantity".into(),
            amount: "amount".into(),
            payment_method: "payment_method".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// First malformed row aborts the parse.
    FailFast,
    /// Malformed rows are skipped and reported with their line numbers.
    Skip,
}

#[derive(Debug)]
pub struct ParseOutcome {
    pub transactions: Vec<Transaction>,
    /// (1-based line number, reason) for every skipped row.
    pub skipped: Vec<(usize, String)>,
}

fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp '{s}': {e}"))
}

/// Parse a CSV byte stream (header row required) into transactions, in file
/// order.
pub fn parse_transactions<R: Read>(
    source: R,
    schema: &ColumnMap,
    mode: ParseMode,
) -> Result<ParseOutcome, DataError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let iu = col(&schema.user_id)?;
    let ii = col(&schema.item_id)?;
    let it = col(&schema.timestamp)?;
    let iq = col(&schema.quantity)?;
    let ia = col(&schema.amount)?;
    let ip = col(&schema.payment_method)?;

    let mut transactions = Vec::new();
    let mut skipped = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2; // header is line 1
        let record = record?;
        let parse_row = || -> Result<Transaction, String> {
            let get = |i: usize| record.get(i).ok_or_else(|| format!("missing field {i}"));
            let timestamp = parse_timestamp(get(it)?)?;
            let quantity: u64 = get(iq)?
                .trim()
                .parse()
                .map_err(|e| format!("bad quantity: {e}"))?;
            let amount: f64 = get(ia)?
                .trim()
                .parse()
                .map_err(|e| format!("bad amount: {e}"))?;
            if amount < 0.0 {
                return Err(format!("negative amount {amount}"));
            }
            Ok(Transaction {
                user_id: get(iu)?.to_string(),
                item_id: get(ii)?.to_string(),
                timestamp,
                quantity,
                amount,
                payment_method: get(ip)?.to_string(),
            })
        };
        match parse_row() {
            Ok(tx) => transactions.push(tx),
            Err(message) => match mode {
                ParseMode::FailFast => return Err(DataError::BadRow { line, message }),
                ParseMode::Skip => skipped.push((line, message)),
            },
        }
    }
    Ok(ParseOutcome {
        transactions,
        skipped,
    })
}

/// Partition transactions into the observation window
/// `[observation_start, observation_end]` and the forecast window
/// `(observation_end, forecast_end]`; everything else is dropped.
pub fn split_windows(
    txs: &[Transaction],
    w: &WindowConfig,
) -> (Vec<Transaction>, Vec<Transaction>) {
    let mut observation = Vec::new();
    let mut forecast = Vec::new();
    for tx in txs {
        if tx.timestamp >= w.observation_start && tx.timestamp <= w.observation_end {
            observation.push(tx.clone());
        } else if tx.timestamp > w.observation_end && tx.timestamp <= w.forecast_end {
            forecast.push(tx.clone());
        }
    }
    (observation, forecast)
}

/// One labeled pair per distinct <user, item> seen in the observation window.
/// Pairs first seen in the forecast window produce no row.
pub fn label_pairs(observation: &[Transaction], forecast: &[Transaction]) -> Vec<LabeledPair> {
    let mut by_pair: BTreeMap<(String, String), Vec<Transaction>> = BTreeMap::new();
    for tx in observation {
        by_pair
            .entry((tx.user_id.clone(), tx.item_id.clone()))
            .or_default()
            .push(tx.clone());
    }
    let mut repurchased: std::collections::BTreeSet<(&str, &str)> = Default::default();
    for tx in forecast {
        repurchased.insert((tx.user_id.as_str(), tx.item_id.as_str()));
    }
    by_pair
        .into_iter()
        .map(|((user_id, item_id), mut txs)| {
            txs.sort_by_key(|t| t.timestamp);
            let label = u8::from(repurchased.contains(&(user_id.as_str(), item_id.as_str())));
            LabeledPair {
                user_id,
                item_id,
                transactions_in_observation: txs,
                label,
            }
        })
        .collect()
}

/// Shuffle under `seed` and put the first ceil(ratio * n) rows in train.
pub fn train_valid_split<T: Clone>(
    rows: &[T],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DataError> {
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(DataError::BadRatio(ratio));
    }
    if rows.len() < 2 {
        return Err(DataError::TooFewRows(rows.len()));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_train = (ratio * rows.len() as f64).ceil() as usize;
    let train = order[..n_train].iter().map(|&i| rows[i].clone()).collect();
    let valid = order[n_train..].iter().map(|&i| rows[i].clone()).collect();
    Ok((train, valid))
}
