//! Minibatch training loops for the scorer (pairwise ranking) and the
//! classifier (binary cross-entropy).
//!
//! Within a batch every distinct graph is traced once, per-graph gradients
//! are computed in parallel, and the sum is taken in graph order so results
//! do not depend on the thread count.

use std::collections::BTreeMap;

use log::debug;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{bce_with_logits, bce_with_logits_grad, margin_ranking_grad, margin_ranking_loss};
use super::model::{Gradients, HyperParams, ModelParams};
use super::optim::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::seed::{self, derive_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hyper: HyperParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            hyper: HyperParams::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for the accept/decline classifier. BCE on a few dozen
    /// graphs needs a smaller step and many more epochs than ranking.
    pub fn classifier() -> Self {
        Self {
            learning_rate: 3e-4,
            epochs: 400,
            batch_size: 8,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig(format!("margin {} must be positive", self.margin)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
        }
        self.hyper.check()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Two graphs and the ranking label: `y = -1` when the first is faster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub first: usize,
    pub second: usize,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledGraph {
    pub graph: usize,
    /// 0 or 1.
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch loss, measured before each step.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
}

/// Forward pass over every graph, in parallel.
pub fn score_all(params: &ModelParams, graphs: &[BipartiteGraph]) -> Result<Vec<f64>> {
    graphs.par_iter().map(|g| params.forward(g)).collect()
}

/// Fraction of pairs ordered as labeled: `y (s1 - s2) > 0`.
pub fn ranking_accuracy(params: &ModelParams, graphs: &[BipartiteGraph], pairs: &[PairExample]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("ranking pairs"));
    }
    let scores = score_all(params, graphs)?;
    let correct = pairs
        .iter()
        .filter(|p| p.y * (scores[p.first] - scores[p.second]) > 0.0)
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Fraction of examples where `logit > 0` agrees with the label.
pub fn classification_accuracy(
    params: &ModelParams,
    graphs: &[BipartiteGraph],
    examples: &[LabeledGraph],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("classifier examples"));
    }
    let scores = score_all(params, graphs)?;
    let correct = examples
        .iter()
        .filter(|e| (scores[e.graph] > 0.0) == (e.label > 0.5))
        .count();
    Ok(correct as f64 / examples.len() as f64)
}

pub fn train_scorer(graphs: &[BipartiteGraph], pairs: &[PairExample], config: &TrainConfig) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("ranking pairs"));
    }
    if let Some(p) = pairs.iter().find(|p| p.first >= graphs.len() || p.second >= graphs.len()) {
        return Err(Error::ShapeMismatch(format!("pair ({}, {}) outside graph list", p.first, p.second)));
    }
    let margin = config.margin;
    run(config, graphs, pairs, |batch: &[PairExample], slot: &dyn Fn(usize) -> usize, scores: &[f64], d: &mut [f64]| {
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for p in batch {
            let (a, b) = (slot(p.first), slot(p.second));
            loss += margin_ranking_loss(scores[a], scores[b], p.y, margin) * scale;
            let (ga, gb) = margin_ranking_grad(scores[a], scores[b], p.y, margin);
            d[a] += ga * scale;
            d[b] += gb * scale;
        }
        loss
    })
}

pub fn train_classifier(
    graphs: &[BipartiteGraph],
    examples: &[LabeledGraph],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("classifier examples"));
    }
    if let Some(e) = examples.iter().find(|e| e.graph >= graphs.len()) {
        return Err(Error::ShapeMismatch(format!("example graph {} outside graph list", e.graph)));
    }
    run(config, graphs, examples, |batch: &[LabeledGraph], slot: &dyn Fn(usize) -> usize, scores: &[f64], d: &mut [f64]| {
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for e in batch {
            let s = slot(e.graph);
            loss += bce_with_logits(scores[s], e.label) * scale;
            d[s] += bce_with_logits_grad(scores[s], e.label) * scale;
        }
        loss
    })
}

trait GraphRefs {
    fn graphs(&self) -> impl Iterator<Item = usize>;
}

impl GraphRefs for PairExample {
    fn graphs(&self) -> impl Iterator<Item = usize> {
        [self.first, self.second].into_iter()
    }
}

impl GraphRefs for LabeledGraph {
    fn graphs(&self) -> impl Iterator<Item = usize> {
        std::iter::once(self.graph)
    }
}

/// Shared epoch/batch loop. `batch_loss` fills per-graph score derivatives
/// and returns the batch loss.
fn run<T, F>(config: &TrainConfig, graphs: &[BipartiteGraph], items: &[T], batch_loss: F) -> Result<TrainOutcome>
where
    T: GraphRefs + Copy,
    F: Fn(&[T], &dyn Fn(usize) -> usize, &[f64], &mut [f64]) -> f64,
{
    config.check()?;
    let mut params = ModelParams::init(config.hyper, derive_seed(config.seed, Stream::Init, 0))?;
    let mut adam = Adam::new(config.adam(), &params);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut seed::rng(derive_seed(config.seed, Stream::Shuffle, epoch as u64)));
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<T> = chunk.iter().map(|&i| items[i]).collect();
            let mut slots = BTreeMap::new();
            for g in batch.iter().flat_map(|t| t.graphs()) {
                let next = slots.len();
                slots.entry(g).or_insert(next);
            }
            let mut unique = vec![0; slots.len()];
            for (&g, &s) in &slots {
                unique[s] = g;
            }
            let traces = unique
                .par_iter()
                .map(|&g| params.trace(&graphs[g]))
                .collect::<Result<Vec<_>>>()?;
            let scores: Vec<f64> = traces.iter().map(|t| t.score()).collect();
            let mut dscore = vec![0.0; scores.len()];
            let slot = |g: usize| slots[&g];
            let loss = batch_loss(&batch, &slot, &scores, &mut dscore);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "epoch {epoch}, batch {b}: loss {loss}, scores {scores:?}"
                )));
            }
            let parts: Vec<Option<Gradients>> = traces
                .par_iter()
                .zip(&dscore)
                .map(|(t, &d)| (d != 0.0).then(|| t.gradient(d)))
                .collect();
            let mut grads = Gradients::zeros_like(&params);
            for g in parts.iter().flatten() {
                grads.add_assign(g);
            }
            if !grads.is_finite() {
                return Err(Error::NonFiniteLoss(format!("epoch {epoch}, batch {b}: non-finite gradient")));
            }
            adam.step(&mut params, &grads);
            total += loss;
            batches += 1;
        }
        let loss = total / batches as f64;
        debug!("epoch {epoch}: loss {loss:.6}");
        history.push(EpochStats { epoch, loss });
    }
    Ok(TrainOutcome { params, history })
}
