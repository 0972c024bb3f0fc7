//! CTC loss, analytic gradients, the collapse map, and decoders.
//!
//! The loss marginalizes over all frame-level alignment paths whose collapse
//! (merge adjacent duplicates, then drop blanks) equals the reference. All
//! dynamic programming runs in log space. Label 0 is the blank everywhere.

use ndarray::{Array2, ArrayView2};
use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CtcError {
    #[error("instance too large to enumerate: n={n}, labels={labels} (bounds n<=8, labels<=4)")]
    TooLarge { n: usize, labels: usize },
    #[error("label {label} out of range for {columns} logit columns")]
    LabelOutOfRange { label: usize, columns: usize },
}

const NEG_INF: f64 = f64::NEG_INFINITY;

fn lse2(a: f64, b: f64) -> f64 {
    if a == NEG_INF && b == NEG_INF {
        return NEG_INF;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn lse3(a: f64, b: f64, c: f64) -> f64 {
    lse2(lse2(a, b), c)
}

/// Row-wise log-softmax of unnormalized scores.
pub fn log_softmax(logits: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(NEG_INF, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Collapse an alignment path: merge adjacent duplicates, then drop blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for &y in path {
        if Some(y) != prev {
            if y != 0 {
                out.push(y);
            }
            prev = Some(y);
        }
    }
    out
}

/// Shortest input length that can align to `labels`: one frame per label
/// plus a separating blank per adjacent equal pair.
pub fn min_frames(labels: &[usize]) -> usize {
    let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
    labels.len() + repeats
}

/// CTC loss and gradient for one utterance.
#[derive(Debug, Clone)]
pub struct CtcOutcome {
    /// Negative log probability of the reference; `+inf` when unalignable.
    pub loss: f64,
    /// d loss / d logits, zero when unalignable.
    pub grad: Array2<f64>,
    /// False when the reference cannot align into the available frames.
    pub feasible: bool,
}

/// Forward-backward CTC loss with the analytic gradient with respect to the
/// unnormalized logits.
///
/// Unalignable references (too few frames) yield `loss = +inf` with a zero
/// gradient rather than an error, so training can skip them.
pub fn ctc_loss_grad(logits: &ArrayView2<f64>, labels: &[usize]) -> Result<CtcOutcome, CtcError> {
    let (n, k) = (logits.nrows(), logits.ncols());
    for &l in labels {
        if l == 0 || l >= k {
            return Err(CtcError::LabelOutOfRange { label: l, columns: k });
        }
    }
    let infeasible = CtcOutcome {
        loss: f64::INFINITY,
        grad: Array2::zeros((n, k)),
        feasible: false,
    };
    if n < min_frames(labels) {
        return Ok(infeasible);
    }

    let lp = log_softmax(logits);
    let m = labels.len();
    let s_len = 2 * m + 1;
    let ext = |s: usize| -> usize {
        if s % 2 == 0 {
            0
        } else {
            labels[s / 2]
        }
    };
    let skip_allowed = |s: usize| s >= 2 && ext(s) != 0 && ext(s) != ext(s - 2);

    let mut alpha = Array2::from_elem((n, s_len), NEG_INF);
    alpha[[0, 0]] = lp[[0, 0]];
    if s_len > 1 {
        alpha[[0, 1]] = lp[[0, ext(1)]];
    }
    for t in 1..n {
        for s in 0..s_len {
            let stay = alpha[[t - 1, s]];
            let step = if s >= 1 { alpha[[t - 1, s - 1]] } else { NEG_INF };
            let skip = if skip_allowed(s) {
                alpha[[t - 1, s - 2]]
            } else {
                NEG_INF
            };
            let sum = lse3(stay, step, skip);
            if sum != NEG_INF {
                alpha[[t, s]] = sum + lp[[t, ext(s)]];
            }
        }
    }
    let log_z = if s_len > 1 {
        lse2(alpha[[n - 1, s_len - 1]], alpha[[n - 1, s_len - 2]])
    } else {
        alpha[[n - 1, 0]]
    };
    if log_z == NEG_INF {
        return Ok(infeasible);
    }

    // Backward pass with the frame emission included, so the state posterior
    // is alpha + beta - emission - log_z.
    let mut beta = Array2::from_elem((n, s_len), NEG_INF);
    beta[[n - 1, s_len - 1]] = lp[[n - 1, ext(s_len - 1)]];
    if s_len > 1 {
        beta[[n - 1, s_len - 2]] = lp[[n - 1, ext(s_len - 2)]];
    }
    for t in (0..n.saturating_sub(1)).rev() {
        for s in 0..s_len {
            let stay = beta[[t + 1, s]];
            let step = if s + 1 < s_len {
                beta[[t + 1, s + 1]]
            } else {
                NEG_INF
            };
            let skip = if s + 2 < s_len && skip_allowed(s + 2) {
                beta[[t + 1, s + 2]]
            } else {
                NEG_INF
            };
            let sum = lse3(stay, step, skip);
            if sum != NEG_INF {
                beta[[t, s]] = sum + lp[[t, ext(s)]];
            }
        }
    }

    let mut grad = Array2::zeros((n, k));
    for t in 0..n {
        let mut posterior = vec![NEG_INF; k];
        for s in 0..s_len {
            let joint = alpha[[t, s]] + beta[[t, s]] - lp[[t, ext(s)]];
            if joint != NEG_INF {
                posterior[ext(s)] = lse2(posterior[ext(s)], joint);
            }
        }
        for c in 0..k {
            let q = if posterior[c] == NEG_INF {
                0.0
            } else {
                (posterior[c] - log_z).exp()
            };
            grad[[t, c]] = lp[[t, c]].exp() - q;
        }
    }
    Ok(CtcOutcome {
        loss: -log_z,
        grad,
        feasible: true,
    })
}

/// Loss only; see [`ctc_loss_grad`].
pub fn ctc_loss(logits: &ArrayView2<f64>, labels: &[usize]) -> Result<f64, CtcError> {
    ctc_loss_grad(logits, labels).map(|o| o.loss)
}

/// Exact CTC loss by enumerating every alignment path. The independent
/// oracle for [`ctc_loss_grad`]; bounded to keep enumeration tractable.
pub fn brute_force_ctc(logits: &ArrayView2<f64>, labels: &[usize]) -> Result<f64, CtcError> {
    let (n, k) = (logits.nrows(), logits.ncols());
    if n > 8 || k - 1 > 4 {
        return Err(CtcError::TooLarge { n, labels: k - 1 });
    }
    for &l in labels {
        if l == 0 || l >= k {
            return Err(CtcError::LabelOutOfRange { label: l, columns: k });
        }
    }
    let lp = log_softmax(logits);
    let mut total = NEG_INF;
    let mut path = vec![0usize; n];
    loop {
        if collapse(&path) == labels {
            let logp: f64 = path.iter().enumerate().map(|(t, &y)| lp[[t, y]]).sum();
            total = lse2(total, logp);
        }
        // Next path in base-k counting order.
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(-total);
            }
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Per-frame argmax (lowest index on ties), then collapse.
pub fn greedy_decode(logits: &ArrayView2<f64>) -> Vec<usize> {
    let path: Vec<usize> = logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}

/// Symbol-level language model for shallow fusion during beam search.
/// `prev = 0` denotes the sequence start; symbols are label indices.
pub trait LanguageModel {
    fn log_prob(&self, prev: usize, next: usize) -> f64;
}

/// Bigram model with add-one smoothing over the non-blank label set.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLm {
    num_labels: usize,
    counts: HashMap<(usize, usize), u64>,
    totals: HashMap<usize, u64>,
}

impl BigramLm {
    pub fn train(sequences: &[Vec<usize>], num_labels: usize) -> Self {
        let mut counts = HashMap::new();
        let mut totals = HashMap::new();
        for seq in sequences {
            let mut prev = 0usize;
            for &sym in seq {
                *counts.entry((prev, sym)).or_insert(0) += 1;
                *totals.entry(prev).or_insert(0) += 1;
                prev = sym;
            }
        }
        Self {
            num_labels,
            counts,
            totals,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Sorted (prev, next, count) triples, for serialization.
    pub fn to_counts(&self) -> Vec<(u32, u32, u64)> {
        let mut rows: Vec<(u32, u32, u64)> = self
            .counts
            .iter()
            .map(|(&(p, n), &c)| (p as u32, n as u32, c))
            .collect();
        rows.sort();
        rows
    }

    pub fn from_counts(rows: &[(u32, u32, u64)], num_labels: usize) -> Self {
        let mut counts = HashMap::new();
        let mut totals = HashMap::new();
        for &(p, n, c) in rows {
            counts.insert((p as usize, n as usize), c);
            *totals.entry(p as usize).or_insert(0) += c;
        }
        Self {
            num_labels,
            counts,
            totals,
        }
    }
}

impl LanguageModel for BigramLm {
    fn log_prob(&self, prev: usize, next: usize) -> f64 {
        let c = self.counts.get(&(prev, next)).copied().unwrap_or(0);
        let total = self.totals.get(&prev).copied().unwrap_or(0);
        (((c + 1) as f64) / ((total as f64) + self.num_labels as f64)).ln()
    }
}

#[derive(Debug, Clone)]
struct Prefix {
    labels: Vec<usize>,
    /// Log probability of the prefix with the path ending in a blank.
    p_blank: f64,
    /// Log probability of the prefix with the path ending in its last label.
    p_label: f64,
    /// Accumulated shallow-fusion score of the label sequence.
    lm_score: f64,
}

impl Prefix {
    fn score(&self, lm_weight: f64) -> f64 {
        let acoustic = lse2(self.p_blank, self.p_label);
        if lm_weight == 0.0 {
            acoustic
        } else {
            acoustic + lm_weight * self.lm_score
        }
    }
}

/// CTC prefix beam search with optional shallow LM fusion.
///
/// The LM contributes `lm_weight * log P(symbol | previous symbol)` once per
/// emitted symbol. Ties in pruning break on the label sequence, so decoding
/// is deterministic.
pub fn beam_decode(
    logits: &ArrayView2<f64>,
    lm: Option<&dyn LanguageModel>,
    beam_width: usize,
    lm_weight: f64,
) -> Vec<usize> {
    let beam_width = beam_width.max(1);
    let lp = log_softmax(logits);
    let (n, k) = (lp.nrows(), lp.ncols());

    let mut beam: Vec<Prefix> = vec![Prefix {
        labels: Vec::new(),
        p_blank: 0.0,
        p_label: NEG_INF,
        lm_score: 0.0,
    }];

    for t in 0..n {
        let mut next: HashMap<Vec<usize>, Prefix> = HashMap::new();
        for prefix in &beam {
            let total = lse2(prefix.p_blank, prefix.p_label);
            // Extend with blank: same prefix, now blank-terminated.
            {
                let entry = next.entry(prefix.labels.clone()).or_insert_with(|| Prefix {
                    labels: prefix.labels.clone(),
                    p_blank: NEG_INF,
                    p_label: NEG_INF,
                    lm_score: prefix.lm_score,
                });
                entry.p_blank = lse2(entry.p_blank, total + lp[[t, 0]]);
            }
            let last = prefix.labels.last().copied();
            for sym in 1..k {
                let p_sym = lp[[t, sym]];
                if Some(sym) == last {
                    // Repeating the frame label extends the same prefix.
                    let entry =
                        next.entry(prefix.labels.clone()).or_insert_with(|| Prefix {
                            labels: prefix.labels.clone(),
                            p_blank: NEG_INF,
                            p_label: NEG_INF,
                            lm_score: prefix.lm_score,
                        });
                    entry.p_label = lse2(entry.p_label, prefix.p_label + p_sym);
                    // Emitting the same symbol again needs a blank gap.
                    let mut labels = prefix.labels.clone();
                    labels.push(sym);
                    let lm_score = prefix.lm_score
                        + lm.map_or(0.0, |m| m.log_prob(last.unwrap_or(0), sym));
                    let entry = next.entry(labels.clone()).or_insert_with(|| Prefix {
                        labels,
                        p_blank: NEG_INF,
                        p_label: NEG_INF,
                        lm_score,
                    });
                    entry.p_label = lse2(entry.p_label, prefix.p_blank + p_sym);
                } else {
                    let mut labels = prefix.labels.clone();
                    labels.push(sym);
                    let lm_score = prefix.lm_score
                        + lm.map_or(0.0, |m| m.log_prob(last.unwrap_or(0), sym));
                    let entry = next.entry(labels.clone()).or_insert_with(|| Prefix {
                        labels,
                        p_blank: NEG_INF,
                        p_label: NEG_INF,
                        lm_score,
                    });
                    entry.p_label = lse2(entry.p_label, total + p_sym);
                }
            }
        }
        let mut candidates: Vec<Prefix> = next.into_values().collect();
        candidates.sort_by(|a, b| {
            b.score(lm_weight)
                .total_cmp(&a.score(lm_weight))
                .then_with(|| a.labels.cmp(&b.labels))
        });
        candidates.truncate(beam_width);
        beam = candidates;
    }
    beam.into_iter()
        .max_by(|a, b| {
            a.score(lm_weight)
                .total_cmp(&b.score(lm_weight))
                .then_with(|| b.labels.cmp(&a.labels))
        })
        .map(|p| p.labels)
        .unwrap_or_default()
}
