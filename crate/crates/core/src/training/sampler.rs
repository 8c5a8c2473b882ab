use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use super::TrainError;

/// Language sampling proportional to `f^a` for training fractions `f`.
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    fractions: Vec<f64>,
    exponent: f64,
    dist: WeightedIndex<f64>,
}

impl SamplerConfig {
    pub fn new(fractions: Vec<f64>, exponent: f64) -> Result<Self, TrainError> {
        if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(TrainError::InvalidSampler("fractions must be positive".into()));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(TrainError::InvalidSampler(format!("fractions sum to {total}, not 1")));
        }
        if !(exponent >= 0.0) || !exponent.is_finite() {
            return Err(TrainError::InvalidSampler(format!("exponent {exponent} must be >= 0")));
        }
        let probs = probabilities(&fractions, exponent);
        let dist = WeightedIndex::new(&probs).map_err(|e| TrainError::InvalidSampler(e.to_string()))?;
        Ok(SamplerConfig {
            fractions,
            exponent,
            dist,
        })
    }

    /// Fractions proportional to treebank sizes.
    pub fn from_sizes(sizes: &[usize], exponent: f64) -> Result<Self, TrainError> {
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Err(TrainError::InvalidSampler("all treebanks are empty".into()));
        }
        Self::new(sizes.iter().map(|&s| s as f64 / total as f64).collect(), exponent)
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `P(i) = f_i^a / sum_j f_j^a`.
    pub fn probabilities(&self) -> Vec<f64> {
        probabilities(&self.fractions, self.exponent)
    }

    pub fn sample_language(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }
}

fn probabilities(fractions: &[f64], a: f64) -> Vec<f64> {
    if a == 1.0 {
        // f is already on the simplex
        return fractions.to_vec();
    }
    let w: Vec<f64> = fractions.iter().map(|f| f.powf(a)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Shuffled pass over `0..len`, reshuffled whenever it runs out.
#[derive(Clone, Debug)]
struct Cursor {
    order: Vec<usize>,
    pos: usize,
}

impl Cursor {
    fn next(&mut self, rng: &mut impl Rng) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Draws `(language, sentence)` pairs: the language from a [`SamplerConfig`],
/// the sentence without replacement within that language's current pass.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    sampler: SamplerConfig,
    cursors: Vec<Cursor>,
}

impl BatchSampler {
    pub fn new(sampler: SamplerConfig, sizes: &[usize], languages: &[String]) -> Result<Self, TrainError> {
        assert_eq!(sizes.len(), sampler.fractions.len());
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(TrainError::EmptyTreebank(languages[k].clone()));
        }
        let cursors = sizes
            .iter()
            .map(|&s| Cursor {
                order: (0..s).collect(),
                pos: s,
            })
            .collect();
        Ok(BatchSampler { sampler, cursors })
    }

    pub fn sampler(&self) -> &SamplerConfig {
        &self.sampler
    }

    pub fn next_batch(&mut self, batch_size: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
        (0..batch_size)
            .map(|_| {
                let lang = self.sampler.sample_language(rng);
                (lang, self.cursors[lang].next(rng))
            })
            .collect()
    }
}
