//! Full-softmax reference path for small instances.
//!
//! The production trainer estimates context likelihoods with negative
//! sampling; this module evaluates them exactly with a softmax over the
//! whole vocabulary. It exists for verification on tiny models: posterior
//! values against brute-force enumeration, and batch EM iterations whose
//! corpus log-likelihood must be non-decreasing.

use crate::error::Result;
use crate::model::DseModel;
use crate::trainer::{
    combine_posterior, log_sigmoid, sigmoid, update_prior, Branch, PosteriorAccumulator,
    PRIOR_CLAMP,
};
use crate::vocab::{context_window, Review, WordId};

fn branch_vector<'a>(model: &'a DseModel, w: WordId, domain: usize, branch: Branch) -> &'a [f64] {
    match branch {
        Branch::Common => model.common.row(w),
        Branch::Specific => model.specific[domain].row(w),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All output-dot scores of one input vector, i.e. the softmax logits.
fn logits(model: &DseModel, u: &[f64]) -> Vec<f64> {
    (0..model.vocab.len())
        .map(|w| dot(u, model.output.row(w)))
        .collect()
}

fn log_softmax(logits: &[f64], index: WordId) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    logits[index] - lse
}

/// Exact log p(target | w, branch) under the full softmax.
pub fn log_context_probability(
    model: &DseModel,
    w: WordId,
    domain: usize,
    branch: Branch,
    target: WordId,
) -> f64 {
    let u = branch_vector(model, w, domain, branch);
    log_softmax(&logits(model, u), target)
}

/// Exact p(target | w, branch).
pub fn context_probability(
    model: &DseModel,
    w: WordId,
    domain: usize,
    branch: Branch,
    target: WordId,
) -> f64 {
    log_context_probability(model, w, domain, branch, target).exp()
}

pub fn log_sentiment_probability(
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

fn branch_score(model: &DseModel, w: WordId, domain: usize, y: u8, context: &[WordId], branch: Branch) -> f64 {
    let u = branch_vector(model, w, domain, branch);
    let lg = logits(model, u);
    let mut score = log_sentiment_probability(model, w, domain, y, branch);
    for &t in context {
        score += log_softmax(&lg, t);
    }
    score
}

/// Posterior responsibility of the common branch with exact full-softmax
/// context probabilities, evaluated in log space.
pub fn posterior(model: &DseModel, w: WordId, domain: usize, y: u8, context: &[WordId]) -> f64 {
    let prior = model.commonality[w];
    if prior <= 0.0 {
        return 0.0;
    }
    if prior >= 1.0 {
        return 1.0;
    }
    combine_posterior(
        prior,
        branch_score(model, w, domain, y, context, Branch::Common),
        branch_score(model, w, domain, y, context, Branch::Specific),
    )
}

/// Exact corpus log-likelihood: for every occurrence, the log of the
/// prior-weighted mixture of branch context probabilities plus the log of
/// the mixture sentiment probability.
pub fn corpus_log_likelihood(model: &DseModel, reviews: &[Review], window: usize) -> f64 {
    let mut total = 0.0;
    for review in reviews {
        for position in 0..review.tokens.len() {
            let w = review.tokens[position];
            let context = context_window(&review.tokens, position, window);
            let prior = model.commonality[w];
            let lg_c = logits(model, w_vec(model, w, review.domain, Branch::Common));
            let lg_s = logits(model, w_vec(model, w, review.domain, Branch::Specific));
            for &t in &context {
                total += log_mix(
                    prior,
                    log_softmax(&lg_c, t),
                    log_softmax(&lg_s, t),
                );
            }
            total += log_mix(
                prior,
                log_sentiment_probability(model, w, review.domain, review.label, Branch::Common),
                log_sentiment_probability(model, w, review.domain, review.label, Branch::Specific),
            );
        }
    }
    total
}

fn w_vec<'a>(model: &'a DseModel, w: WordId, domain: usize, branch: Branch) -> &'a [f64] {
    branch_vector(model, w, domain, branch)
}

/// log(prior * exp(la) + (1 - prior) * exp(lb)), stably.
fn log_mix(prior: f64, la: f64, lb: f64) -> f64 {
    if prior <= 0.0 {
        return lb;
    }
    if prior >= 1.0 {
        return la;
    }
    let a = prior.ln() + la;
    let b = (1.0 - prior).ln() + lb;
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Expected-complete-data objective for fixed responsibilities, embeddings
/// part only (the prior part is maximized in closed form).
fn q_embeddings(model: &DseModel, reviews: &[Review], window: usize, gammas: &[f64]) -> f64 {
    let mut q = 0.0;
    let mut event = 0usize;
    for review in reviews {
        for position in 0..review.tokens.len() {
            let w = review.tokens[position];
            let context = context_window(&review.tokens, position, window);
            let gamma = gammas[event];
            event += 1;
            q += gamma * branch_score(model, w, review.domain, review.label, &context, Branch::Common)
                + (1.0 - gamma)
                    * branch_score(model, w, review.domain, review.label, &context, Branch::Specific);
        }
    }
    q
}

/// Batch gradient of `q_embeddings` over all parameter blocks.
struct BatchGradient {
    common: Vec<f64>,
    specific: [Vec<f64>; 2],
    output: Vec<f64>,
    boundary: Vec<f64>,
}

fn batch_gradient(
    model: &DseModel,
    reviews: &[Review],
    window: usize,
    gammas: &[f64],
) -> BatchGradient {
    let n = model.vocab.len();
    let d = model.dim;
    let mut grad = BatchGradient {
        common: vec![0.0; n * d],
        specific: [vec![0.0; n * d], vec![0.0; n * d]],
        output: vec![0.0; n * d],
        boundary: vec![0.0; d],
    };
    let mut event = 0usize;
    for review in reviews {
        for position in 0..review.tokens.len() {
            let w = review.tokens[position];
            let context = context_window(&review.tokens, position, window);
            let gamma = gammas[event];
            event += 1;
            let y = review.label as f64;
            for (branch, weight) in [(Branch::Common, gamma), (Branch::Specific, 1.0 - gamma)] {
                if weight == 0.0 {
                    continue;
                }
                let u = branch_vector(model, w, review.domain, branch).to_vec();
                let lg = logits(model, &u);
                let m = lg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = lg.iter().map(|&x| (x - m).exp()).collect();
                let z: f64 = exps.iter().sum();
                let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();

                let u_grad_slot = match branch {
                    Branch::Common => &mut grad.common[w * d..(w + 1) * d],
                    Branch::Specific => {
                        &mut grad.specific[review.domain][w * d..(w + 1) * d]
                    }
                };
                // Context part: sum_t (V_t - E_p[V]) for u; (1[w'=t] - p(w'))u
                // for every output row.
                let ctx_len = context.len() as f64;
                for &t in &context {
                    let v = model.output.row(t);
                    for i in 0..d {
                        u_grad_slot[i] += weight * v[i];
                    }
                }
                let mut expected = vec![0.0; d];
                for w2 in 0..n {
                    let v = model.output.row(w2);
                    for i in 0..d {
                        expected[i] += probs[w2] * v[i];
                    }
                }
                for i in 0..d {
                    u_grad_slot[i] -= weight * ctx_len * expected[i];
                }
                // Sentiment part.
                let sent = y - sigmoid(dot(&u, &model.boundary));
                for i in 0..d {
                    u_grad_slot[i] += weight * sent * model.boundary[i];
                    grad.boundary[i] += weight * sent * u[i];
                }
                // Output rows.
                let mut counts = vec![0.0f64; n];
                for &t in &context {
                    counts[t] += 1.0;
                }
                for w2 in 0..n {
                    let coeff = weight * (counts[w2] - ctx_len * probs[w2]);
                    if coeff != 0.0 {
                        let slot = &mut grad.output[w2 * d..(w2 + 1) * d];
                        for i in 0..d {
                            slot[i] += coeff * u[i];
                        }
                    }
                }
            }
        }
    }
    grad
}

fn apply_gradient(model: &mut DseModel, grad: &BatchGradient, step: f64) {
    for (x, g) in model.common.data_mut().iter_mut().zip(&grad.common) {
        *x += step * g;
    }
    for dom in 0..2 {
        for (x, g) in model.specific[dom]
            .data_mut()
            .iter_mut()
            .zip(&grad.specific[dom])
        {
            *x += step * g;
        }
    }
    for (x, g) in model.output.data_mut().iter_mut().zip(&grad.output) {
        *x += step * g;
    }
    for (x, g) in model.boundary.iter_mut().zip(&grad.boundary) {
        *x += step * g;
    }
}

#[derive(Debug, Clone)]
pub struct MStepOptions {
    pub max_steps: usize,
    pub initial_step: f64,
    pub tolerance: f64,
}

impl Default for MStepOptions {
    fn default() -> Self {
        MStepOptions {
            max_steps: 200,
            initial_step: 0.25,
            tolerance: 1e-12,
        }
    }
}

/// One full EM iteration with exact likelihoods.
///
/// E-step: responsibilities for every occurrence. Prior update: per-word mean
/// responsibility (clamped like the production trainer). M-step: batch
/// gradient ascent on the embeddings part of the expected objective with a
/// halving line search, so the objective never decreases. Returns the corpus
/// log-likelihood after the update.
pub fn em_iteration(
    model: &mut DseModel,
    reviews: &[Review],
    window: usize,
    opts: &MStepOptions,
) -> Result<f64> {
    // E-step.
    let mut gammas = Vec::new();
    let mut acc = PosteriorAccumulator::new(model.vocab.len());
    for review in reviews {
        for position in 0..review.tokens.len() {
            let w = review.tokens[position];
            let context = context_window(&review.tokens, position, window);
            let gamma = posterior(model, w, review.domain, review.label, &context);
            acc.add(w, gamma);
            gammas.push(gamma);
        }
    }

    // Closed-form prior update.
    let mut new_priors = update_prior(&acc, &model.commonality);
    for p in &mut new_priors {
        *p = p.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
    }
    model.commonality = new_priors;

    // M-step: monotone ascent on the embeddings objective.
    let mut q = q_embeddings(model, reviews, window, &gammas);
    let mut step = opts.initial_step;
    for _ in 0..opts.max_steps {
        let grad = batch_gradient(model, reviews, window, &gammas);
        let mut improved = false;
        while step > 1e-14 {
            apply_gradient(model, &grad, step);
            let q_new = q_embeddings(model, reviews, window, &gammas);
            if q_new >= q {
                let gain = q_new - q;
                q = q_new;
                improved = true;
                if gain < opts.tolerance * (1.0 + q.abs()) {
                    // Near-converged.
                    return Ok(corpus_log_likelihood(model, reviews, window));
                }
                step *= 1.2;
                break;
            }
            // Undo and shrink.
            apply_gradient(model, &grad, -step);
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(corpus_log_likelihood(model, reviews, window))
}
