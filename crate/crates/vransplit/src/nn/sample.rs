//! Temperature-controlled categorical sampling and seed derivation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::{Error, Result};

/// Which distribution the returned log-probability refers to.
///
/// Training uses the temperature-1 policy distribution regardless of the
/// sampling temperature; inference reports the tempered distribution it
/// actually sampled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogProbMode {
    Train,
    Inference,
}

pub fn softmax_probs(logits: &[f64], temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be positive");
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    super::tape::stable_softmax(&scaled)
}

pub fn log_softmax_slice(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    scaled.iter().map(|v| v - log_z).collect()
}

/// Index of the largest logit; first index wins ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate().skip(1) {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}

/// Draw an index from softmax(logits / temperature).
///
/// Returns the index and its log-probability under the distribution selected
/// by `mode` (see [`LogProbMode`]).
pub fn softmax_sample(
    logits: &[f64],
    temperature: f64,
    mode: LogProbMode,
    rng: &mut impl Rng,
) -> Result<(usize, f64)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits in softmax_sample".into()));
    }
    if temperature <= 0.0 {
        return Err(Error::Parameter("temperature must be positive".into()));
    }
    let probs = softmax_probs(logits, temperature);
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut chosen = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = i;
            break;
        }
    }
    let logp = match mode {
        LogProbMode::Train => log_softmax_slice(logits, 1.0)[chosen],
        LogProbMode::Inference => log_softmax_slice(logits, temperature)[chosen],
    };
    Ok((chosen, logp))
}

/// SplitMix64 finalizer; stateless seed derivation for nested streams.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for a derived stream.
pub fn derived_rng(base: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(base, a, b))
}
