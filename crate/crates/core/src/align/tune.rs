//! Seeded random search over training hyperparameters and thresholds.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{train, AlignmentData, TrainConfig};
use crate::cohort::MORPHOMETRY_COLUMNS;
use crate::error::{Error, Result};
use crate::gacl::{quantile_thresholds, similarity, z_normalize, SimilaritySource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl Range {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Range {
            lo,
            hi,
            scale: Scale::Linear,
        }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        Range {
            lo,
            hi,
            scale: Scale::Log,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo <= self.hi
            && (self.scale == Scale::Linear || self.lo > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid search range for {name}: {self:?}")))
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self.scale {
            Scale::Linear => self.lo + u * (self.hi - self.lo),
            Scale::Log => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: Range,
    pub eps: Range,
    pub weight_decay: Range,
    pub beta: Range,
    pub tau_f: Range,
    pub tau_t: Range,
}

impl SearchSpace {
    /// Default ranges with threshold ranges supplied by the caller,
    /// usually from [`dev_threshold_ranges`].
    pub fn with_thresholds(tau_f: (f64, f64), tau_t: (f64, f64)) -> Self {
        SearchSpace {
            learning_rate: Range::log(1e-6, 5e-4),
            eps: Range::log(1e-9, 1e-6),
            weight_decay: Range::log(1e-6, 1e-1),
            beta: Range::linear(-5.0, 0.0),
            tau_f: Range::linear(tau_f.0, tau_f.1),
            tau_t: Range::linear(tau_t.0, tau_t.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learning_rate.validate("learning_rate")?;
        self.eps.validate("eps")?;
        self.weight_decay.validate("weight_decay")?;
        self.beta.validate("beta")?;
        self.tau_f.validate("tau_f")?;
        self.tau_t.validate("tau_t")
    }

    pub fn sample<R: Rng>(&self, base: &TrainConfig, rng: &mut R) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate.sample(rng),
            eps: self.eps.sample(rng),
            weight_decay: self.weight_decay.sample(rng),
            beta: self.beta.sample(rng),
            tau_f: self.tau_f.sample(rng),
            tau_t: self.tau_t.sample(rng),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

/// Draws `n_trials` candidates from one seeded stream, scores them in
/// parallel, and returns the index of the best score together with every
/// score. Ties and non-finite scores resolve to the earliest trial.
pub fn random_search<P, S, F>(
    n_trials: usize,
    seed: u64,
    mut sample: S,
    objective: F,
    direction: Direction,
) -> Result<(usize, Vec<(P, f64)>)>
where
    P: Send + Sync,
    S: FnMut(&mut ChaCha8Rng) -> P,
    F: Fn(&P) -> Result<f64> + Sync,
{
    if n_trials < 1 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<P> = (0..n_trials).map(|_| sample(&mut rng)).collect();
    #[allow(clippy::redundant_closure)] // the closure only needs `F: Sync`, not `F: Send`
    let scores: Vec<f64> = candidates.par_iter().map(|p| objective(p)).collect::<Result<_>>()?;
    let better = |a: f64, b: f64| match direction {
        Direction::Minimize => a < b,
        Direction::Maximize => a > b,
    };
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s.is_finite() && (!scores[best].is_finite() || better(s, scores[best])) {
            best = i;
        }
    }
    Ok((best, candidates.into_iter().zip(scores).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_index: usize,
    pub best: TrainConfig,
    pub trials: Vec<Trial>,
}

impl TuneResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "trial",
            "learning_rate",
            "eps",
            "weight_decay",
            "beta",
            "tau_f",
            "tau_t",
            "score",
            "best",
        ])?;
        for t in &self.trials {
            let c = &t.config;
            wr.write_record([
                t.index.to_string(),
                c.learning_rate.to_string(),
                c.eps.to_string(),
                c.weight_decay.to_string(),
                c.beta.to_string(),
                c.tau_f.to_string(),
                c.tau_t.to_string(),
                t.score.to_string(),
                (t.index == self.best_index).to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<trial writer>", e))?;
        Ok(())
    }
}

pub fn tune<F>(
    space: &SearchSpace,
    n_trials: usize,
    base: &TrainConfig,
    seed: u64,
    objective: F,
    direction: Direction,
) -> Result<TuneResult>
where
    F: Fn(&TrainConfig) -> Result<f64> + Sync,
{
    space.validate()?;
    let (best_index, scored) = random_search(n_trials, seed, |rng| space.sample(base, rng), objective, direction)?;
    let trials: Vec<Trial> = scored
        .into_iter()
        .enumerate()
        .map(|(index, (config, score))| Trial { index, config, score })
        .collect();
    Ok(TuneResult {
        best_index,
        best: trials[best_index].config.clone(),
        trials,
    })
}

/// Final-epoch validation loss of a model trained with `config`.
pub fn val_loss_objective<'a>(
    train_data: &'a AlignmentData,
    val_data: &'a AlignmentData,
) -> impl Fn(&TrainConfig) -> Result<f64> + Sync + 'a {
    move |config| match train(train_data, Some(val_data), config) {
        Ok((_, log)) => Ok(log.records.last().and_then(|r| r.val_loss).unwrap_or(f64::INFINITY)),
        Err(Error::Diverged { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Seeded subset of `fraction` of the rows, in ascending order.
pub fn development_subset(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(((n as f64) * fraction).round() as usize);
    idx.sort_unstable();
    idx
}

/// `(Q3, max)` of the morphometry and text similarity distributions over
/// the development rows.
pub fn dev_threshold_ranges(dev: &AlignmentData) -> Result<((f64, f64), (f64, f64))> {
    let z = z_normalize(dev.morphometry.view(), &MORPHOMETRY_COLUMNS)?;
    let s_f = similarity(z.view(), SimilaritySource::Morphometry, true)?;
    let s_t = similarity(dev.text.view(), SimilaritySource::Text, true)?;
    Ok((quantile_thresholds(&s_f)?, quantile_thresholds(&s_t)?))
}
