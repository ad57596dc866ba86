//! Shapley-value attribution for any prediction oracle.
//!
//! The payout of a feature subset F' is interventional: features in F'
//! are fixed from the explained instance and the rest are drawn from a
//! background sample of encoded rows, averaging the oracle's prediction.
//! The base value is the payout of the empty set (the average prediction
//! over the background) and the payout of the full set is exactly the
//! oracle's prediction for the instance.
//!
//! [`exact_shapley`] evaluates the subset-sum definition verbatim and is
//! limited to small feature counts; [`sampled_shapley`] estimates the same
//! quantity over random feature permutations and redistributes the
//! efficiency residual so the attributions always sum to
//! `prediction - base_value`.

mod discretize;
mod explain;

pub use discretize::{fit_discretizer, Discretizer};
pub use explain::{
    aggregate_global, fmt_num, label_explanations, Explanation, GlobalExplanation, SortKey,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::RowProvenance;
use crate::error::{Error, Result};
use crate::gbdt::{GbdtModel, Objective};

/// A prediction oracle: a pure function from feature rows to KPI values.
pub trait Oracle {
    fn value(&self, row: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Oracle for F {
    fn value(&self, row: &[f64]) -> f64 {
        self(row)
    }
}

impl Oracle for GbdtModel {
    fn value(&self, row: &[f64]) -> f64 {
        self.predict(row)
    }
}

/// Background sample and exact-computation limit for the payout.
#[derive(Debug, Clone)]
pub struct PayoutConfig {
    /// Encoded rows the payout marginalizes over. Must be non-empty.
    pub background: Vec<Vec<f64>>,
    /// Largest feature count [`exact_shapley`] accepts (2^m subsets).
    pub exact_threshold: usize,
}

pub const DEFAULT_EXACT_THRESHOLD: usize = 12;
pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

impl PayoutConfig {
    pub fn new(background: Vec<Vec<f64>>) -> Self {
        PayoutConfig {
            background,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
        }
    }

    /// Seeded uniform sample without replacement of up to `size` rows,
    /// kept in dataset order.
    pub fn sample_from(rows: &[Vec<f64>], size: usize, seed: u64) -> Self {
        let background = if rows.len() <= size {
            rows.to_vec()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut indices = rand::seq::index::sample(&mut rng, rows.len(), size).into_vec();
            indices.sort_unstable();
            indices.into_iter().map(|i| rows[i].clone()).collect()
        };
        PayoutConfig::new(background)
    }
}

/// Per-feature attributions for one explained instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyVector {
    /// One attribution per feature, in column order.
    pub values: Vec<f64>,
    /// Payout of the empty set: average prediction over the background.
    pub base_value: f64,
    /// The oracle's prediction for the explained instance.
    pub prediction: f64,
    /// Which trace prefix this explains, when known.
    pub provenance: Option<RowProvenance>,
}

impl ShapleyVector {
    /// Efficiency gap `prediction - base_value - sum(values)`.
    pub fn efficiency_residual(&self) -> f64 {
        self.prediction - self.base_value - self.values.iter().sum::<f64>()
    }
}

/// Mean oracle output over composite rows: features flagged in `active`
/// come from `instance`, the rest from each background row in turn.
fn payout(oracle: &dyn Oracle, instance: &[f64], background: &[Vec<f64>], active: &[bool]) -> f64 {
    let mut buf = vec![0.0; instance.len()];
    let mut acc = 0.0;
    for row in background {
        buf.copy_from_slice(row);
        for (i, on) in active.iter().enumerate() {
            if *on {
                buf[i] = instance[i];
            }
        }
        acc += oracle.value(&buf);
    }
    acc / background.len() as f64
}

fn check_background(cfg: &PayoutConfig, width: usize) -> Result<()> {
    if cfg.background.is_empty() {
        return Err(Error::Contract("payout background is empty".to_string()));
    }
    if let Some(bad) = cfg.background.iter().find(|b| b.len() != width) {
        return Err(Error::Contract(format!(
            "background row width {} does not match instance width {width}",
            bad.len()
        )));
    }
    Ok(())
}

/// Exact Shapley values by full subset enumeration.
///
/// Refuses instances wider than `cfg.exact_threshold`; use
/// [`sampled_shapley`] beyond that.
pub fn exact_shapley(
    oracle: &dyn Oracle,
    instance: &[f64],
    cfg: &PayoutConfig,
) -> Result<ShapleyVector> {
    let m = instance.len();
    check_background(cfg, m)?;
    if m > cfg.exact_threshold {
        return Err(Error::Contract(format!(
            "{m} features exceed the exact threshold {}; use sampled_shapley",
            cfg.exact_threshold
        )));
    }

    let n_masks = 1usize << m;
    let full = n_masks - 1;
    let mut val = vec![0.0; n_masks];
    let mut buf = vec![0.0; m];
    let bg_len = cfg.background.len() as f64;
    for (mask, slot) in val.iter_mut().enumerate() {
        if mask == full && m > 0 {
            // The full-set composite is the instance itself for every
            // background row, so the payout is the prediction exactly.
            *slot = oracle.value(instance);
            continue;
        }
        let mut acc = 0.0;
        for row in &cfg.background {
            buf.copy_from_slice(row);
            let mut bits = mask;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                buf[i] = instance[i];
                bits &= bits - 1;
            }
            acc += oracle.value(&buf);
        }
        *slot = acc / bg_len;
    }

    // Subset weights |F'|! (m-|F'|-1)! / m!, exact in f64 for m <= 12.
    let mut factorial = vec![1.0; m + 1];
    for i in 1..=m {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..m.max(1))
        .map(|s| factorial[s] * factorial[m.saturating_sub(s + 1)] / factorial[m])
        .collect();

    let mut values = vec![0.0; m];
    for (i, value) in values.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..n_masks {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            *value += weight[s] * (val[mask | bit] - val[mask]);
        }
    }

    Ok(ShapleyVector {
        values,
        base_value: val[0],
        prediction: val[full],
        provenance: None,
    })
}

fn enumerate_permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..m).collect();
    heap_permute(&mut current, m, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// Monte-Carlo Shapley estimate over feature permutations.
///
/// When every permutation fits in the budget (m! <= n_permutations) the
/// permutations are enumerated exactly once each, which reproduces the
/// exact values. Otherwise permutations are drawn uniformly under the
/// seed. The efficiency residual is redistributed proportionally to the
/// attribution magnitudes so `sum(values) = prediction - base_value`
/// holds exactly.
pub fn sampled_shapley(
    oracle: &dyn Oracle,
    instance: &[f64],
    cfg: &PayoutConfig,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyVector> {
    let m = instance.len();
    check_background(cfg, m)?;
    if n_permutations == 0 {
        return Err(Error::Contract("n_permutations must be >= 1".to_string()));
    }

    let base_value = payout(oracle, instance, &cfg.background, &vec![false; m]);
    let prediction = if m == 0 {
        base_value
    } else {
        oracle.value(instance)
    };

    let exhaustive = {
        let mut fact = 1usize;
        let mut fits = true;
        for i in 1..=m {
            fact = match fact.checked_mul(i) {
                Some(f) if f <= n_permutations => f,
                _ => {
                    fits = false;
                    break;
                }
            };
        }
        fits.then(|| enumerate_permutations(m))
    };

    let mut acc = vec![0.0; m];
    let mut active = vec![false; m];
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_done = match &exhaustive {
        Some(perms) => {
            for order in perms {
                walk_permutation(
                    oracle, instance, cfg, order, base_value, prediction, &mut active, &mut acc,
                );
            }
            perms.len()
        }
        None => {
            for _ in 0..n_permutations {
                order.shuffle(&mut rng);
                walk_permutation(
                    oracle, instance, cfg, &order, base_value, prediction, &mut active, &mut acc,
                );
            }
            n_permutations
        }
    };

    let mut values: Vec<f64> = acc.iter().map(|a| a / n_done as f64).collect();

    // Force efficiency exactly; the bias is spread by magnitude.
    let residual = prediction - base_value - values.iter().sum::<f64>();
    let magnitude: f64 = values.iter().map(|v| v.abs()).sum();
    if magnitude > 0.0 {
        for v in values.iter_mut() {
            *v += residual * v.abs() / magnitude;
        }
    }

    Ok(ShapleyVector {
        values,
        base_value,
        prediction,
        provenance: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn walk_permutation(
    oracle: &dyn Oracle,
    instance: &[f64],
    cfg: &PayoutConfig,
    order: &[usize],
    base_value: f64,
    prediction: f64,
    active: &mut [bool],
    acc: &mut [f64],
) {
    let m = order.len();
    active.iter_mut().for_each(|a| *a = false);
    let mut val_prev = base_value;
    for (step, &feature) in order.iter().enumerate() {
        active[feature] = true;
        let val_new = if step == m - 1 {
            prediction
        } else {
            payout(oracle, instance, &cfg.background, active)
        };
        acc[feature] += val_new - val_prev;
        val_prev = val_new;
    }
}

/// Map a probability-scale vector onto the [-1, 1] display scale used for
/// boolean KPIs: p -> 2p - 1 for base value and prediction, attributions
/// doubled. Rankings by |value| are unchanged and efficiency is preserved
/// on the rescaled scale.
pub fn rescale_boolean(vector: &ShapleyVector, objective: Objective) -> Result<ShapleyVector> {
    if objective != Objective::Logistic {
        return Err(Error::Contract(
            "rescale_boolean applies only to probability-scale (logistic) vectors".to_string(),
        ));
    }
    Ok(ShapleyVector {
        values: vector.values.iter().map(|v| v * 2.0).collect(),
        base_value: 2.0 * vector.base_value - 1.0,
        prediction: 2.0 * vector.prediction - 1.0,
        provenance: vector.provenance.clone(),
    })
}
