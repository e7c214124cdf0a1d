//! Synthetic data: a transaction-log generator standing in for the private
//! production dataset, plus a feature-space blob generator for benchmarks.

use chrono::{DateTime, TimeZone, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::Transaction;
use crate::util::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    BadConfig(String),
}

/// Generator knobs. Users buy items over a horizon; a latent per-pair
/// loyalty raises repeat intensity so a small fraction of pairs repurchase
/// late in the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub horizon_days: f64,
    /// Expected number of repeat purchases for a fully loyal pair.
    pub intensity: f64,
    /// Scales how strongly latent loyalty drives repurchase.
    pub repurchase_propensity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 800,
            n_items: 120,
            horizon_days: 300.0,
            intensity: 4.0,
            repurchase_propensity: 0.35,
            seed: 0,
        }
    }
}

fn poisson(rng: &mut impl Rng, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    // Knuth's method; lambdas here are small
    let limit = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

const PAYMENT_METHODS: [&str; 3] = ["card", "cash", "wallet"];

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
}

/// Generate a transaction log with the same schema the ingest stage reads.
/// Output is sorted by timestamp and deterministic under the seed.
pub fn gen_synthetic(s: &SynthConfig) -> Result<Vec<Transaction>, SynthError> {
    if s.n_users < 1 || s.n_items < 1 {
        return Err(SynthError::BadConfig("n_users and n_items must be >= 1".into()));
    }
    if s.horizon_days <= 0.0 {
        return Err(SynthError::BadConfig("horizon_days must be > 0".into()));
    }
    let start = epoch();
    let mut txs = Vec::new();
    for user in 0..s.n_users {
        let mut rng = rng_from_seed(derive_seed(s.seed, user as u64));
        let n_pairs = 1 + poisson(&mut rng, 1.5);
        for _ in 0..n_pairs {
            let item = rng.gen_range(0..s.n_items);
            // squared uniform skews loyalty low: most pairs are one-off buyers
            let loyalty: f64 = rng.gen::<f64>().powi(2);
            let price = 2.0 + rng.gen::<f64>() * 48.0;
            let first_day = rng.gen::<f64>() * s.horizon_days;
            let repeats = poisson(&mut rng, s.intensity * s.repurchase_propensity * loyalty);
            let mut days = vec![first_day];
            for _ in 0..repeats {
                days.push(first_day + rng.gen::<f64>() * (s.horizon_days - first_day));
            }
            for day in days {
                let secs = (day * 86_400.0) as i64;
                txs.push(Transaction {
                    user_id: format!("u{user:05}"),
                    item_id: format!("i{item:05}"),
                    timestamp: start + chrono::Duration::seconds(secs),
                    quantity: 1 + poisson(&mut rng, 0.4) as u64,
                    amount: (price * (0.8 + 0.4 * rng.gen::<f64>()) * 100.0).round() / 100.0,
                    payment_method: PAYMENT_METHODS[rng.gen_range(0..3)].to_string(),
                });
            }
        }
    }
    txs.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.user_id.cmp(&b.user_id))
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    Ok(txs)
}

pub fn write_transactions_csv<W: std::io::Write>(
    out: W,
    txs: &[Transaction],
) -> Result<(), std::io::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "item_id", "timestamp", "quantity", "amount", "payment_method"])?;
    for t in txs {
        w.write_record([
            t.user_id.as_str(),
            t.item_id.as_str(),
            &t.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            &t.quantity.to_string(),
            &format!("{:.2}", t.amount),
            t.payment_method.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Two Gaussian classes in feature space: negatives at the origin, positives
/// shifted by `separation` along every axis. Used by benchmarks and tests.
pub fn gaussian_blobs(
    n_neg: usize,
    n_pos: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = rng_from_seed(seed);
    let normal = move |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut points = Vec::with_capacity(n_neg + n_pos);
    let mut labels = Vec::with_capacity(n_neg + n_pos);
    for _ in 0..n_neg {
        points.push((0..dim).map(|_| normal(&mut rng)).collect());
        labels.push(0);
    }
    for _ in 0..n_pos {
        points.push((0..dim).map(|_| separation + normal(&mut rng)).collect());
        labels.push(1);
    }
    (points, labels)
}
