//! EM training with negative sampling.
//!
//! Each sweep walks every review; for every word occurrence it samples
//! negatives, evaluates both the domain-common and the domain-specific
//! branch on the same samples, computes the posterior responsibility of the
//! common branch, applies one stochastic gradient-ascent step weighted by
//! that responsibility, and accumulates it for the per-sweep commonality
//! update. A plain skip-gram trainer reusing the same machinery provides the
//! baseline embeddings.
//!
//! The functions operating on a plain [`DseModel`] (`log_context_likelihood`,
//! `posterior`, `event_gradients`, `sgd_step`, ...) are the reference
//! semantics; the sweep loop is a fused implementation of the same math over
//! shared parameter cells and is pinned to the reference by tests.

mod params;
pub mod exact;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use crate::corpus::DomainPair;
use crate::error::{DseError, Result};
use crate::model::{DseModel, Matrix, SkipgramModel};
use crate::vocab::{context_window, NegativeSampler, Review, UnigramTable, Vocabulary, WordId};
use params::{CellMatrix, DseParams};

pub const PRIOR_CLAMP: f64 = 1e-6;
const LR_FLOOR_FRACTION: f64 = 1e-4;
const SIGMOID_INPUT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Dse,
    Skipgram,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mode: TrainMode,
    pub threads: usize,
    pub deterministic: bool,
    /// Frequent-word subsampling threshold; off by default.
    pub subsample: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 200,
            window: 3,
            negatives: 5,
            iterations: 100,
            learning_rate: 1.0,
            seed: 1,
            mode: TrainMode::Dse,
            threads: 1,
            deterministic: true,
            subsample: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(DseError::InvalidConfig("dim must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(DseError::InvalidConfig("window must be >= 1".into()));
        }
        if self.negatives == 0 {
            return Err(DseError::InvalidConfig("negatives must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(DseError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DseError::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if self.threads == 0 {
            return Err(DseError::InvalidConfig("threads must be >= 1".into()));
        }
        if self.deterministic && self.threads > 1 {
            return Err(DseError::InvalidConfig(
                "deterministic mode requires threads = 1".into(),
            ));
        }
        Ok(())
    }
}

/// Which input vector a computation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Common,
    Specific,
}

/// One training occurrence: a target word with its review sentiment, context
/// words and the negatives drawn for each context word. The same negatives
/// evaluate both branches so the posterior compares them on equal evidence.
#[derive(Debug, Clone)]
pub struct TrainingEvent {
    pub word: WordId,
    pub domain: usize,
    pub label: u8,
    pub context: Vec<WordId>,
    /// negatives[i] holds the samples drawn for context[i].
    pub negatives: Vec<Vec<WordId>>,
}

impl TrainingEvent {
    /// Build the event for `review[position]`, drawing fresh negatives per
    /// (target, context word) pair from `sampler`.
    pub fn build(
        review: &Review,
        position: usize,
        window: usize,
        n_negatives: usize,
        sampler: &mut NegativeSampler,
    ) -> Result<TrainingEvent> {
        let context = context_window(&review.tokens, position, window);
        let mut negatives = Vec::with_capacity(context.len());
        for &target in &context {
            let mut draws = Vec::with_capacity(n_negatives);
            for _ in 0..n_negatives {
                draws.push(sampler.sample_negative(target)?);
            }
            negatives.push(draws);
        }
        Ok(TrainingEvent {
            word: review.tokens[position],
            domain: review.domain,
            label: review.label,
            context,
            negatives,
        })
    }
}

/// Running per-word sums of posterior responsibilities within one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorAccumulator {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl PosteriorAccumulator {
    pub fn new(vocab_size: usize) -> PosteriorAccumulator {
        PosteriorAccumulator {
            sums: vec![0.0; vocab_size],
            counts: vec![0; vocab_size],
        }
    }

    pub fn add(&mut self, word: WordId, gamma: f64) {
        self.sums[word] += gamma;
        self.counts[word] += 1;
    }

    /// Exact merge of per-worker partial sums.
    pub fn merge(&mut self, other: &PosteriorAccumulator) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn count(&self, word: WordId) -> u64 {
        self.counts[word]
    }

    pub fn sum(&self, word: WordId) -> f64 {
        self.sums[word]
    }
}

/// The mean posterior responsibility per word; words never seen this sweep
/// keep their previous value. This is the exact arithmetic mean, without any
/// clamping.
pub fn update_prior(acc: &PosteriorAccumulator, previous: &[f64]) -> Vec<f64> {
    previous
        .iter()
        .enumerate()
        .map(|(w, &prev)| {
            if acc.counts[w] > 0 {
                acc.sums[w] / acc.counts[w] as f64
            } else {
                prev
            }
        })
        .collect()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_INPUT_CLAMP, SIGMOID_INPUT_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable log(sigmoid(x)).
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Posterior of the common branch from the two branch scores, in log space
/// with max subtraction. Degenerate priors short-circuit.
pub(crate) fn combine_posterior(prior: f64, score_common: f64, score_specific: f64) -> f64 {
    combine_posterior_with_objective(prior, score_common, score_specific).0
}

/// Same combination, also returning the event's mixture log-likelihood
/// estimate log(prior*exp(sc) + (1-prior)*exp(ss)).
pub(crate) fn combine_posterior_with_objective(
    prior: f64,
    score_common: f64,
    score_specific: f64,
) -> (f64, f64) {
    if prior <= 0.0 {
        return (0.0, score_specific);
    }
    if prior >= 1.0 {
        return (1.0, score_common);
    }
    let a = prior.ln() + score_common;
    let b = (1.0 - prior).ln() + score_specific;
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    (ea / (ea + eb), m + (ea + eb).ln())
}

fn branch_vector<'a>(model: &'a DseModel, w: WordId, domain: usize, branch: Branch) -> &'a [f64] {
    match branch {
        Branch::Common => model.common.row(w),
        Branch::Specific => model.specific[domain].row(w),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampled estimate of the log probability of the event's context
/// under one branch: sum over context words of log sigma(u.v_t) plus the
/// log sigma(-u.v_i) of that pair's negatives. Empty context gives 0.
pub fn log_context_likelihood(model: &DseModel, event: &TrainingEvent, branch: Branch) -> f64 {
    let u = branch_vector(model, event.word, event.domain, branch);
    let mut total = 0.0;
    for (t, &target) in event.context.iter().enumerate() {
        total += log_sigmoid(dot(u, model.output.row(target)));
        for &neg in &event.negatives[t] {
            total += log_sigmoid(-dot(u, model.output.row(neg)));
        }
    }
    total
}

/// Probability of observing sentiment `y` for the word under one branch.
pub fn sentiment_probability(
    model: &DseModel,
    w: WordId,
    domain: usize,
    y: u8,
    branch: Branch,
) -> f64 {
    let u = branch_vector(model, w, domain, branch);
    let p_positive = sigmoid(dot(u, &model.boundary));
    if y == 1 {
        p_positive
    } else {
        1.0 - p_positive
    }
}

fn log_sentiment_probability(
    model: &DseModel,
    w: WordId,
    domain: usize,
    y: u8,
    branch: Branch,
) -> f64 {
    let u = branch_vector(model, w, domain, branch);
    let d = dot(u, &model.boundary);
    if y == 1 {
        log_sigmoid(d)
    } else {
        log_sigmoid(-d)
    }
}

fn branch_score(model: &DseModel, event: &TrainingEvent, branch: Branch) -> f64 {
    log_context_likelihood(model, event, branch)
        + log_sentiment_probability(model, event.word, event.domain, event.label, branch)
}

/// Posterior responsibility of the common branch for one event, using the
/// negative-sampled context likelihoods.
pub fn posterior(model: &DseModel, event: &TrainingEvent) -> f64 {
    let prior = model.commonality[event.word];
    if prior <= 0.0 {
        return 0.0;
    }
    if prior >= 1.0 {
        return 1.0;
    }
    combine_posterior(
        prior,
        branch_score(model, event, Branch::Common),
        branch_score(model, event, Branch::Specific),
    )
}

/// The per-event objective ascended by [`sgd_step`] with fixed weights:
/// gamma * (context + sentiment score of the common branch) plus
/// (1 - gamma) * (the same for the specific branch).
pub fn event_objective(model: &DseModel, event: &TrainingEvent, gamma: f64) -> f64 {
    gamma * branch_score(model, event, Branch::Common)
        + (1.0 - gamma) * branch_score(model, event, Branch::Specific)
}

/// Analytic gradients of [`event_objective`] with respect to every touched
/// parameter block.
#[derive(Debug, Clone)]
pub struct EventGradients {
    pub u_common: Vec<f64>,
    pub u_specific: Vec<f64>,
    /// Accumulated gradient per distinct output row (context and negatives).
    pub outputs: Vec<(WordId, Vec<f64>)>,
    pub boundary: Vec<f64>,
}

pub fn event_gradients(model: &DseModel, event: &TrainingEvent, gamma: f64) -> EventGradients {
    let d = model.dim;
    let u_c = model.common.row(event.word);
    let u_s = model.specific[event.domain].row(event.word);
    let s = &model.boundary;
    let y = event.label as f64;

    let mut grad_uc = vec![0.0; d];
    let mut grad_us = vec![0.0; d];
    let mut grad_s = vec![0.0; d];
    let mut grad_out: Vec<(WordId, Vec<f64>)> = Vec::new();

    let mut pair = |grad_out: &mut Vec<(WordId, Vec<f64>)>,
                    grad_uc: &mut [f64],
                    grad_us: &mut [f64],
                    row: WordId,
                    positive: bool| {
        let v = model.output.row(row);
        let (cc, cs) = if positive {
            (
                gamma * (1.0 - sigmoid(dot(u_c, v))),
                (1.0 - gamma) * (1.0 - sigmoid(dot(u_s, v))),
            )
        } else {
            (
                -gamma * sigmoid(dot(u_c, v)),
                -(1.0 - gamma) * sigmoid(dot(u_s, v)),
            )
        };
        for i in 0..d {
            grad_uc[i] += cc * v[i];
            grad_us[i] += cs * v[i];
        }
        let idx = match grad_out.iter().position(|(r, _)| *r == row) {
            Some(i) => i,
            None => {
                grad_out.push((row, vec![0.0; d]));
                grad_out.len() - 1
            }
        };
        let entry = &mut grad_out[idx].1;
        for i in 0..d {
            entry[i] += cc * u_c[i] + cs * u_s[i];
        }
    };

    for (t, &target) in event.context.iter().enumerate() {
        pair(&mut grad_out, &mut grad_uc, &mut grad_us, target, true);
        for &neg in &event.negatives[t] {
            pair(&mut grad_out, &mut grad_uc, &mut grad_us, neg, false);
        }
    }

    let sent_c = gamma * (y - sigmoid(dot(u_c, s)));
    let sent_s = (1.0 - gamma) * (y - sigmoid(dot(u_s, s)));
    for i in 0..d {
        grad_uc[i] += sent_c * s[i];
        grad_us[i] += sent_s * s[i];
        grad_s[i] = sent_c * u_c[i] + sent_s * u_s[i];
    }

    EventGradients {
        u_common: grad_uc,
        u_specific: grad_us,
        outputs: grad_out,
        boundary: grad_s,
    }
}

/// One gradient-ascent step on the event objective, applied in place.
/// Only the specific matrix of the event's domain is touched.
pub fn sgd_step(model: &mut DseModel, event: &TrainingEvent, gamma: f64, lr: f64) -> Result<()> {
    if !gamma.is_finite() || !(0.0..=1.0).contains(&gamma) {
        return Err(DseError::NonFiniteGradient {
            context: format!("posterior weight {gamma}"),
        });
    }
    let grads = event_gradients(model, event, gamma);
    let finite = grads
        .u_common
        .iter()
        .chain(&grads.u_specific)
        .chain(&grads.boundary)
        .chain(grads.outputs.iter().flat_map(|(_, g)| g))
        .all(|g| g.is_finite());
    if !finite {
        return Err(DseError::NonFiniteGradient {
            context: format!("event for word {}", event.word),
        });
    }
    let d = model.dim;
    {
        let row = model.common.row_mut(event.word);
        for i in 0..d {
            row[i] += lr * grads.u_common[i];
        }
    }
    {
        let row = model.specific[event.domain].row_mut(event.word);
        for i in 0..d {
            row[i] += lr * grads.u_specific[i];
        }
    }
    for (r, g) in &grads.outputs {
        let row = model.output.row_mut(*r);
        for i in 0..d {
            row[i] += lr * g[i];
        }
    }
    for i in 0..d {
        model.boundary[i] += lr * grads.boundary[i];
    }
    Ok(())
}

/// One line of the per-sweep progress log.
#[derive(Debug, Clone)]
pub struct SweepStats {
    pub sweep: usize,
    pub events: u64,
    pub mean_objective: f64,
    pub mean_commonality: f64,
    pub wall_secs: f64,
}

impl SweepStats {
    /// Tab-separated form used by the training log.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.3}",
            self.sweep, self.mean_objective, self.mean_commonality, self.wall_secs
        )
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

pub(crate) fn review_stream_seed(seed: u64, sweep: usize, review_idx: usize) -> u64 {
    splitmix64(
        splitmix64(seed ^ splitmix64(sweep as u64))
            ^ splitmix64(review_idx as u64 ^ 0xD6E8FEB86659FD93),
    )
}

pub(crate) fn learning_rate_at(base: f64, processed: u64, total: u64) -> f64 {
    let fraction = 1.0 - processed as f64 / total.max(1) as f64;
    base * fraction.max(LR_FLOOR_FRACTION)
}

/// Per-worker reusable buffers for the fused sweep loop.
struct Scratch {
    u_c: Vec<f64>,
    u_s: Vec<f64>,
    s: Vec<f64>,
    grad_uc: Vec<f64>,
    grad_us: Vec<f64>,
    row: Vec<f64>,
    pair_rows: Vec<WordId>,
    pair_positive: Vec<bool>,
    dots_c: Vec<f64>,
    dots_s: Vec<f64>,
    coeff_c: Vec<f64>,
    coeff_s: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Scratch {
        Scratch {
            u_c: vec![0.0; d],
            u_s: vec![0.0; d],
            s: vec![0.0; d],
            grad_uc: vec![0.0; d],
            grad_us: vec![0.0; d],
            row: vec![0.0; d],
            pair_rows: Vec::new(),
            pair_positive: Vec::new(),
            dots_c: Vec::new(),
            dots_s: Vec::new(),
            coeff_c: Vec::new(),
            coeff_s: Vec::new(),
        }
    }
}

struct SweepContext<'a> {
    params: &'a DseParams,
    priors: &'a [f64],
    table: &'a UnigramTable,
    vocab: &'a Vocabulary,
    cfg: &'a TrainConfig,
    counter: &'a AtomicU64,
    total_events: u64,
    sweep: usize,
}

/// Word2vec-style frequent-word subsampling for one review; `None` when the
/// review is used as-is. Uses a stream distinct from negative sampling so
/// enabling it does not perturb negative draws.
fn subsample_review(ctx: &SweepContext, review: &Review, review_idx: usize) -> Option<Vec<WordId>> {
    let threshold = ctx.cfg.subsample?;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
        review_stream_seed(ctx.cfg.seed, ctx.sweep, review_idx) ^ 0xA5A5_A5A5_A5A5_A5A5,
    );
    let total = ctx.vocab.total_tokens() as f64;
    Some(
        review
            .tokens
            .iter()
            .copied()
            .filter(|&w| {
                let freq = ctx.vocab.count(w) as f64 / total;
                let keep = ((threshold / freq).sqrt() + threshold / freq).min(1.0);
                rng.gen::<f64>() < keep
            })
            .collect(),
    )
}

/// Process one review: E-step responsibility, accumulator update and one SGD
/// step per word occurrence. Returns (summed event objective, event count).
fn process_review_dse(
    ctx: &SweepContext,
    review: &Review,
    review_idx: usize,
    acc: &mut PosteriorAccumulator,
    scratch: &mut Scratch,
) -> Result<(f64, u64)> {
    let d = ctx.cfg.dim;
    let mut sampler = NegativeSampler::new(
        ctx.table,
        review_stream_seed(ctx.cfg.seed, ctx.sweep, review_idx),
    );
    let subsampled = subsample_review(ctx, review, review_idx);
    let tokens: &[WordId] = subsampled.as_deref().unwrap_or(&review.tokens);
    if tokens.is_empty() {
        return Ok((0.0, 0));
    }

    let mut objective_sum = 0.0;
    let mut events = 0u64;
    for position in 0..tokens.len() {
        let w = tokens[position];
        let y = review.label as f64;
        let dom = review.domain;

        // Snapshot the input vectors and the boundary for this event.
        ctx.params.common.read_row(w, &mut scratch.u_c);
        ctx.params.specific[dom].read_row(w, &mut scratch.u_s);
        ctx.params.boundary.read_into(&mut scratch.s);

        // Build (output row, is-positive) pairs: each context word followed
        // by its freshly drawn negatives.
        scratch.pair_rows.clear();
        scratch.pair_positive.clear();
        let lo = position.saturating_sub(ctx.cfg.window);
        let hi = (position + ctx.cfg.window).min(tokens.len() - 1);
        for t in lo..=hi {
            if t == position {
                continue;
            }
            let target = tokens[t];
            scratch.pair_rows.push(target);
            scratch.pair_positive.push(true);
            for _ in 0..ctx.cfg.negatives {
                scratch.pair_rows.push(sampler.sample_negative(target)?);
                scratch.pair_positive.push(false);
            }
        }

        // Branch scores on shared evidence.
        let sent_dot_c = dot(&scratch.u_c, &scratch.s);
        let sent_dot_s = dot(&scratch.u_s, &scratch.s);
        let mut score_c = if review.label == 1 {
            log_sigmoid(sent_dot_c)
        } else {
            log_sigmoid(-sent_dot_c)
        };
        let mut score_s = if review.label == 1 {
            log_sigmoid(sent_dot_s)
        } else {
            log_sigmoid(-sent_dot_s)
        };
        scratch.dots_c.clear();
        scratch.dots_s.clear();
        let npairs = scratch.pair_rows.len();
        for j in 0..npairs {
            let row = scratch.pair_rows[j];
            let dc = ctx.params.output.dot_row(row, &scratch.u_c);
            let ds = ctx.params.output.dot_row(row, &scratch.u_s);
            scratch.dots_c.push(dc);
            scratch.dots_s.push(ds);
            if scratch.pair_positive[j] {
                score_c += log_sigmoid(dc);
                score_s += log_sigmoid(ds);
            } else {
                score_c += log_sigmoid(-dc);
                score_s += log_sigmoid(-ds);
            }
        }

        let prior = ctx.priors[w];
        let (gamma, objective) = combine_posterior_with_objective(prior, score_c, score_s);
        if !gamma.is_finite() || !objective.is_finite() {
            return Err(DseError::NonFiniteGradient {
                context: format!("sweep {} word {}", ctx.sweep, ctx.vocab.word(w)),
            });
        }
        objective_sum += objective;
        events += 1;
        acc.add(w, gamma);

        // M-step: one ascent step at the learning rate for this event.
        let processed = ctx.counter.fetch_add(1, Ordering::Relaxed);
        let lr = learning_rate_at(ctx.cfg.learning_rate, processed, ctx.total_events);

        scratch.coeff_c.clear();
        scratch.coeff_s.clear();
        for j in 0..npairs {
            let (cc, cs) = if scratch.pair_positive[j] {
                (
                    gamma * (1.0 - sigmoid(scratch.dots_c[j])),
                    (1.0 - gamma) * (1.0 - sigmoid(scratch.dots_s[j])),
                )
            } else {
                (
                    -gamma * sigmoid(scratch.dots_c[j]),
                    -(1.0 - gamma) * sigmoid(scratch.dots_s[j]),
                )
            };
            scratch.coeff_c.push(cc);
            scratch.coeff_s.push(cs);
        }
        let sent_c = gamma * (y - sigmoid(sent_dot_c));
        let sent_s = (1.0 - gamma) * (y - sigmoid(sent_dot_s));

        // Gradients of the input vectors read old output rows; output rows
        // are updated in the same pass from the snapshotted inputs.
        for i in 0..d {
            scratch.grad_uc[i] = sent_c * scratch.s[i];
            scratch.grad_us[i] = sent_s * scratch.s[i];
        }
        for j in 0..npairs {
            let row = scratch.pair_rows[j];
            ctx.params.output.read_row(row, &mut scratch.row);
            let (cc, cs) = (scratch.coeff_c[j], scratch.coeff_s[j]);
            for i in 0..d {
                scratch.grad_uc[i] += cc * scratch.row[i];
                scratch.grad_us[i] += cs * scratch.row[i];
            }
            ctx.params.output.add_to_row(row, &scratch.u_c, lr * cc);
            ctx.params.output.add_to_row(row, &scratch.u_s, lr * cs);
        }
        ctx.params.boundary.add_scaled(&scratch.u_c, lr * sent_c);
        ctx.params.boundary.add_scaled(&scratch.u_s, lr * sent_s);
        ctx.params.common.add_to_row(w, &scratch.grad_uc, lr);
        ctx.params.specific[dom].add_to_row(w, &scratch.grad_us, lr);
    }
    Ok((objective_sum, events))
}

fn run_dse_range(
    ctx: &SweepContext,
    reviews: &[Review],
    range: std::ops::Range<usize>,
) -> Result<(PosteriorAccumulator, f64, u64)> {
    let mut acc = PosteriorAccumulator::new(ctx.vocab.len());
    let mut scratch = Scratch::new(ctx.cfg.dim);
    let mut objective = 0.0;
    let mut events = 0u64;
    for idx in range {
        let (obj, ev) = process_review_dse(ctx, &reviews[idx], idx, &mut acc, &mut scratch)?;
        objective += obj;
        events += ev;
    }
    Ok((acc, objective, events))
}

fn chunk_ranges(len: usize, workers: usize) -> Vec<std::ops::Range<usize>> {
    let chunk = (len / (workers * 8)).max(1);
    (0..len)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(len))
        .collect()
}

fn run_dse_sweep(
    ctx: &SweepContext,
    reviews: &[Review],
) -> Result<(PosteriorAccumulator, f64, u64)> {
    #[cfg(feature = "parallel")]
    if ctx.cfg.threads > 1 {
        use rayon::prelude::*;
        let partials: Vec<(PosteriorAccumulator, f64, u64)> =
            chunk_ranges(reviews.len(), ctx.cfg.threads)
                .into_par_iter()
                .map(|range| run_dse_range(ctx, reviews, range))
                .collect::<Result<_>>()?;
        let mut acc = PosteriorAccumulator::new(ctx.vocab.len());
        let mut objective = 0.0;
        let mut events = 0u64;
        for (partial, obj, ev) in &partials {
            acc.merge(partial);
            objective += obj;
            events += ev;
        }
        return Ok((acc, objective, events));
    }
    run_dse_range(ctx, reviews, 0..reviews.len())
}

fn check_two_domains(reviews: &[Review]) -> Result<()> {
    if reviews.is_empty() {
        return Err(DseError::EmptyCorpus);
    }
    let has_p = reviews.iter().any(|r| r.domain == 0);
    let has_q = reviews.iter().any(|r| r.domain == 1);
    if !(has_p && has_q) {
        return Err(DseError::InvalidConfig(
            "training needs reviews from both domains".into(),
        ));
    }
    Ok(())
}

enum WorkerPool {
    Sequential,
    #[cfg(feature = "parallel")]
    Pool(rayon::ThreadPool),
}

impl WorkerPool {
    fn new(threads: usize) -> Result<WorkerPool> {
        #[cfg(feature = "parallel")]
        if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| DseError::InvalidConfig(format!("thread pool: {e}")))?;
            return Ok(WorkerPool::Pool(pool));
        }
        let _ = threads;
        Ok(WorkerPool::Sequential)
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        match self {
            WorkerPool::Sequential => f(),
            #[cfg(feature = "parallel")]
            WorkerPool::Pool(pool) => pool.install(f),
        }
    }
}

/// Run the full EM training loop and return the trained model. `on_sweep`
/// receives one [`SweepStats`] per sweep.
pub fn train(
    reviews: &[Review],
    vocab: &Vocabulary,
    domains: &DomainPair,
    cfg: &TrainConfig,
    mut on_sweep: impl FnMut(&SweepStats),
) -> Result<DseModel> {
    cfg.validate()?;
    check_two_domains(reviews)?;
    if vocab.len() < 2 {
        return Err(DseError::VocabularyTooSmall);
    }

    let mut model = DseModel::init(vocab, domains, cfg.dim, cfg.seed)?;
    let table = UnigramTable::new(vocab);
    let params = DseParams::from_model(&model);
    let tokens_per_sweep: u64 = reviews.iter().map(|r| r.tokens.len() as u64).sum();
    let total_events = tokens_per_sweep * cfg.iterations as u64;
    let counter = AtomicU64::new(0);
    let pool = WorkerPool::new(cfg.threads)?;

    for sweep in 0..cfg.iterations {
        let started = Instant::now();
        let ctx = SweepContext {
            params: &params,
            priors: &model.commonality,
            table: &table,
            vocab,
            cfg,
            counter: &counter,
            total_events,
            sweep,
        };
        let (acc, objective_sum, events) = pool.run(|| run_dse_sweep(&ctx, reviews))?;

        let mut new_priors = update_prior(&acc, &model.commonality);
        for p in &mut new_priors {
            *p = p.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
        }
        model.commonality = new_priors;

        let stats = SweepStats {
            sweep,
            events,
            mean_objective: objective_sum / events.max(1) as f64,
            mean_commonality: model.commonality.iter().sum::<f64>()
                / model.commonality.len() as f64,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        on_sweep(&stats);
    }

    params.write_back(&mut model);
    Ok(model)
}

/// Plain skip-gram with negative sampling over the given reviews (any domain
/// mix); the baseline embedding trainer.
pub fn train_skipgram(
    reviews: &[Review],
    vocab: &Vocabulary,
    domains: &DomainPair,
    cfg: &TrainConfig,
    mut on_sweep: impl FnMut(&SweepStats),
) -> Result<SkipgramModel> {
    cfg.validate()?;
    if reviews.is_empty() {
        return Err(DseError::EmptyCorpus);
    }
    if vocab.len() < 2 {
        return Err(DseError::VocabularyTooSmall);
    }

    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 0.5 / cfg.dim as f64;
    let mut input = Matrix::uniform(vocab.len(), cfg.dim, bound, &mut rng);
    let input_cells = CellMatrix::from_matrix(&input);
    let output_cells = CellMatrix::from_matrix(&Matrix::zeros(vocab.len(), cfg.dim));

    let table = UnigramTable::new(vocab);
    let tokens_per_sweep: u64 = reviews.iter().map(|r| r.tokens.len() as u64).sum();
    let total_events = tokens_per_sweep * cfg.iterations as u64;
    let counter = AtomicU64::new(0);
    let pool = WorkerPool::new(cfg.threads)?;

    let process_range = |range: std::ops::Range<usize>, sweep: usize| -> Result<(f64, u64)> {
        let d = cfg.dim;
        let mut u = vec![0.0; d];
        let mut grad_u = vec![0.0; d];
        let mut row = vec![0.0; d];
        let mut objective = 0.0;
        let mut events = 0u64;
        for idx in range {
            let review = &reviews[idx];
            let mut sampler =
                NegativeSampler::new(&table, review_stream_seed(cfg.seed, sweep, idx));
            for position in 0..review.tokens.len() {
                let w = review.tokens[position];
                input_cells.read_row(w, &mut u);
                grad_u.fill(0.0);
                let processed = counter.fetch_add(1, Ordering::Relaxed);
                let lr = learning_rate_at(cfg.learning_rate, processed, total_events);

                let lo = position.saturating_sub(cfg.window);
                let hi = (position + cfg.window).min(review.tokens.len() - 1);
                for t in lo..=hi {
                    if t == position {
                        continue;
                    }
                    let target = review.tokens[t];
                    for k in 0..=cfg.negatives {
                        let (row_id, positive) = if k == 0 {
                            (target, true)
                        } else {
                            (sampler.sample_negative(target)?, false)
                        };
                        let dot_val = output_cells.dot_row(row_id, &u);
                        let (obj, coeff) = if positive {
                            (log_sigmoid(dot_val), 1.0 - sigmoid(dot_val))
                        } else {
                            (log_sigmoid(-dot_val), -sigmoid(dot_val))
                        };
                        objective += obj;
                        output_cells.read_row(row_id, &mut row);
                        for i in 0..d {
                            grad_u[i] += coeff * row[i];
                        }
                        output_cells.add_to_row(row_id, &u, lr * coeff);
                    }
                }
                input_cells.add_to_row(w, &grad_u, lr);
                events += 1;
            }
        }
        Ok((objective, events))
    };

    for sweep in 0..cfg.iterations {
        let started = Instant::now();
        let (objective, events) = pool.run(|| -> Result<(f64, u64)> {
            #[cfg(feature = "parallel")]
            if cfg.threads > 1 {
                use rayon::prelude::*;
                let partials: Vec<(f64, u64)> = chunk_ranges(reviews.len(), cfg.threads)
                    .into_par_iter()
                    .map(|r| process_range(r, sweep))
                    .collect::<Result<_>>()?;
                return Ok((
                    partials.iter().map(|p| p.0).sum(),
                    partials.iter().map(|p| p.1).sum(),
                ));
            }
            process_range(0..reviews.len(), sweep)
        })?;
        on_sweep(&SweepStats {
            sweep,
            events,
            mean_objective: objective / events.max(1) as f64,
            mean_commonality: f64::NAN,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }

    input_cells.write_back(&mut input);
    Ok(SkipgramModel {
        dim: cfg.dim,
        domains: domains.clone(),
        vocab: vocab.clone(),
        input,
    })
}
