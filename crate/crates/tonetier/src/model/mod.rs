//! Language-independent pyramidal recurrent encoder with per-language,
//! per-tier softmax heads, trained with a multi-task CTC loss (equal tier
//! weights) under Adadelta with early stopping.

pub mod checkpoint;
pub mod encoder;
pub mod params;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ctc::{beam_decode, ctc_loss_grad, BigramLm, CtcError, LanguageModel};
use crate::kv::{KvError, KvFile};
use crate::parallel;
use crate::tiers::{AlphabetSet, ModelVariant, TierId};

pub use encoder::EncoderConfig;
pub use params::{Adadelta, GradBuffer, ParamLayout, ParamStore};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input too short: {frames} frames (need at least 4)")]
    InputTooShort { frames: usize },
    #[error("feature width mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("no softmax head for language `{lang}` on tier {tier}")]
    MissingHead { lang: String, tier: TierId },
    #[error("no alphabet for tier {tier}, language `{lang}`")]
    MissingAlphabet { tier: TierId, lang: String },
    #[error("utterance `{utt_id}` has no transcript for tier {tier}")]
    MissingTier { utt_id: String, tier: TierId },
    #[error("no training data")]
    DataEmpty,
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Training hyperparameters. Defaults follow the toolkit's desk-scale
/// configuration; every field can come from a `key = value` config file.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub hidden: usize,
    pub fc_dim: usize,
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub beam_width: usize,
    pub lm_weight: f64,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            fc_dim: 64,
            lr: 0.004,
            rho: 0.95,
            eps: 1e-6,
            patience: 10,
            max_epochs: 100,
            batch_size: 8,
            beam_width: 25,
            lm_weight: 0.1,
            seed: 0,
        }
    }
}

impl Hyper {
    pub fn from_kv(kv: &KvFile) -> Result<Self, KvError> {
        let mut h = Self::default();
        if let Some(v) = kv.get_usize("hidden")? {
            h.hidden = v;
        }
        if let Some(v) = kv.get_usize("fc_dim")? {
            h.fc_dim = v;
        }
        if let Some(v) = kv.get_f64("lr")? {
            h.lr = v;
        }
        if let Some(v) = kv.get_f64("rho")? {
            h.rho = v;
        }
        if let Some(v) = kv.get_f64("eps")? {
            h.eps = v;
        }
        if let Some(v) = kv.get_usize("patience")? {
            h.patience = v;
        }
        if let Some(v) = kv.get_usize("max_epochs")? {
            h.max_epochs = v;
        }
        if let Some(v) = kv.get_usize("batch_size")? {
            h.batch_size = v;
        }
        if let Some(v) = kv.get_usize("beam_width")? {
            h.beam_width = v;
        }
        if let Some(v) = kv.get_f64("lm_weight")? {
            h.lm_weight = v;
        }
        if let Some(v) = kv.get_u64("seed")? {
            h.seed = v;
        }
        Ok(h)
    }
}

/// One training utterance: features plus encoded labels per active tier.
#[derive(Debug, Clone)]
pub struct TrainUtt {
    pub utt_id: String,
    pub lang: String,
    pub features: Array2<f64>,
    pub labels: BTreeMap<TierId, Vec<usize>>,
}

/// One utterance to decode.
#[derive(Debug, Clone)]
pub struct EvalUtt {
    pub utt_id: String,
    pub lang: String,
    pub features: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeOptions {
    pub beam_width: usize,
    pub lm_weight: f64,
    pub use_lm: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam_width: 25,
            lm_weight: 0.1,
            use_lm: true,
        }
    }
}

fn head_name(tier: TierId, lang: &str) -> String {
    format!("head.{}.{}", tier.name(), lang)
}

/// The trainable acoustic model: encoder parameters, per-(tier, language)
/// softmax heads, alphabets, per-head bigram LMs, and optimizer state.
#[derive(Debug, Clone)]
pub struct AcousticModel {
    pub variant: ModelVariant,
    pub encoder: EncoderConfig,
    pub params: ParamStore,
    pub alphabets: AlphabetSet,
    pub langs: Vec<String>,
    pub lms: BTreeMap<(TierId, String), BigramLm>,
    pub opt: Adadelta,
    pub epoch: usize,
    pub best_dev: Option<f64>,
    pub seed: u64,
}

fn layout_for(
    variant: ModelVariant,
    encoder: &EncoderConfig,
    alphabets: &AlphabetSet,
    langs: &[String],
) -> Result<ParamLayout, ModelError> {
    let mut shapes = encoder.param_shapes();
    for &tier in variant.tiers() {
        for lang in langs {
            let alphabet =
                alphabets
                    .get(tier, lang)
                    .ok_or_else(|| ModelError::MissingAlphabet {
                        tier,
                        lang: lang.clone(),
                    })?;
            let name = head_name(tier, lang);
            shapes.push((format!("{name}.w"), alphabet.len(), encoder.fc_dim));
            shapes.push((format!("{name}.b"), 1, alphabet.len()));
        }
    }
    Ok(ParamLayout::new(shapes))
}

impl AcousticModel {
    pub fn new(
        variant: ModelVariant,
        encoder: EncoderConfig,
        alphabets: AlphabetSet,
        mut langs: Vec<String>,
        hyper: &Hyper,
    ) -> Result<Self, ModelError> {
        langs.sort();
        langs.dedup();
        let layout = layout_for(variant, &encoder, &alphabets, &langs)?;
        let params = ParamStore::seeded_init(layout, hyper.seed);
        let opt = Adadelta::new(params.layout.len(), hyper.lr, hyper.rho, hyper.eps);
        Ok(Self {
            variant,
            encoder,
            params,
            alphabets,
            langs,
            lms: BTreeMap::new(),
            opt,
            epoch: 0,
            best_dev: None,
            seed: hyper.seed,
        })
    }

    pub fn has_head(&self, tier: TierId, lang: &str) -> bool {
        self.params
            .layout
            .entry(&format!("{}.w", head_name(tier, lang)))
            .is_some()
    }

    /// Per-frame unnormalized scores of one head: `hidden . W^T + bias`.
    pub fn head_logits(
        &self,
        hidden: &Array2<f64>,
        tier: TierId,
        lang: &str,
    ) -> Result<Array2<f64>, ModelError> {
        if !self.has_head(tier, lang) {
            return Err(ModelError::MissingHead {
                lang: lang.to_string(),
                tier,
            });
        }
        let name = head_name(tier, lang);
        let w = self.params.view(&format!("{name}.w"));
        if hidden.ncols() != w.ncols() {
            return Err(ModelError::DimMismatch {
                expected: w.ncols(),
                got: hidden.ncols(),
            });
        }
        let b = self.params.view(&format!("{name}.b"));
        let mut logits = hidden.dot(&w.t());
        for mut row in logits.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += b[[0, j]];
            }
        }
        Ok(logits)
    }

    /// Grow the model with softmax heads for a new language. Existing
    /// parameter values and optimizer accumulators carry over by name; the
    /// new heads start zeroed (the transfer stage overwrites them).
    pub fn add_language(
        &mut self,
        lang: &str,
        lang_alphabets: &AlphabetSet,
    ) -> Result<(), ModelError> {
        for alphabet in lang_alphabets.iter() {
            self.alphabets.insert(alphabet.clone());
        }
        if !self.langs.iter().any(|l| l == lang) {
            self.langs.push(lang.to_string());
            self.langs.sort();
        }
        let layout = layout_for(self.variant, &self.encoder, &self.alphabets, &self.langs)?;
        let mut data = vec![0.0; layout.len()];
        for entry in layout.entries() {
            if let Some(old) = self.params.layout.entry(&entry.name) {
                data[entry.offset..entry.offset + entry.len()]
                    .copy_from_slice(&self.params.data[old.offset..old.offset + old.len()]);
            }
        }
        self.opt = self.opt.remap(&self.params.layout, &layout);
        self.params = ParamStore { layout, data };
        Ok(())
    }

    fn lm_for(&self, tier: TierId, lang: &str) -> Option<&BigramLm> {
        self.lms.get(&(tier, lang.to_string()))
    }
}

/// Per-utterance multi-task forward/backward.
///
/// Returns per-tier losses and the flat gradient. Tiers whose reference
/// cannot align (CTC infeasible) are skipped: they contribute no loss and no
/// gradient, and are counted in `skipped`.
pub fn forward_backward(
    model: &AcousticModel,
    utt: &TrainUtt,
    heads_only: bool,
) -> Result<(BTreeMap<TierId, f64>, GradBuffer, usize), ModelError> {
    let cache = encoder::encode(&model.encoder, &model.params, &utt.features.view())?;
    let mut grads = GradBuffer::zeros(&model.params.layout);
    let mut d_hidden = Array2::<f64>::zeros(cache.output.dim());
    let mut losses = BTreeMap::new();
    let mut skipped = 0usize;
    for &tier in model.variant.tiers() {
        let labels = utt.labels.get(&tier).ok_or_else(|| ModelError::MissingTier {
            utt_id: utt.utt_id.clone(),
            tier,
        })?;
        let logits = model.head_logits(&cache.output, tier, &utt.lang)?;
        let outcome = ctc_loss_grad(&logits.view(), labels)?;
        if !outcome.feasible {
            skipped += 1;
            continue;
        }
        losses.insert(tier, outcome.loss);
        let name = head_name(tier, &utt.lang);
        let w_name = format!("{name}.w");
        {
            let mut dw = grads.view_mut(&model.params.layout, &w_name);
            dw += &outcome.grad.t().dot(&cache.output);
        }
        {
            let mut db = grads.view_mut(&model.params.layout, &format!("{name}.b"));
            for t in 0..outcome.grad.nrows() {
                for j in 0..outcome.grad.ncols() {
                    db[[0, j]] += outcome.grad[[t, j]];
                }
            }
        }
        let w = model.params.view(&w_name);
        d_hidden += &outcome.grad.dot(&w);
    }
    if !heads_only {
        encoder::encode_backward(&model.params, &mut grads, &cache, &d_hidden);
    }
    Ok((losses, grads, skipped))
}

/// Loss bookkeeping for one epoch. `total_loss` is always the exact sum of
/// the per-tier entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub tier_loss: BTreeMap<TierId, f64>,
    pub total_loss: f64,
    pub dev_loss: Option<f64>,
    pub skipped: usize,
}

fn mean_losses(
    model: &AcousticModel,
    utts: &[TrainUtt],
) -> Result<(BTreeMap<TierId, f64>, f64, usize), ModelError> {
    if utts.is_empty() {
        return Ok((BTreeMap::new(), 0.0, 0));
    }
    let results = parallel::map(utts, |utt| {
        let cache = encoder::encode(&model.encoder, &model.params, &utt.features.view())?;
        let mut losses = BTreeMap::new();
        let mut skipped = 0usize;
        for &tier in model.variant.tiers() {
            let labels = utt.labels.get(&tier).ok_or_else(|| ModelError::MissingTier {
                utt_id: utt.utt_id.clone(),
                tier,
            })?;
            let logits = model.head_logits(&cache.output, tier, &utt.lang)?;
            let outcome = ctc_loss_grad(&logits.view(), labels)?;
            if outcome.feasible {
                losses.insert(tier, outcome.loss);
            } else {
                skipped += 1;
            }
        }
        Ok::<_, ModelError>((losses, skipped))
    });
    let mut tier_sums: BTreeMap<TierId, f64> = BTreeMap::new();
    let mut skipped = 0usize;
    for r in results {
        let (losses, s) = r?;
        skipped += s;
        for (tier, loss) in losses {
            *tier_sums.entry(tier).or_insert(0.0) += loss;
        }
    }
    let n = utts.len() as f64;
    for v in tier_sums.values_mut() {
        *v /= n;
    }
    let total = tier_sums.values().sum();
    Ok((tier_sums, total, skipped))
}

/// Train `model` in place. Batches are language-homogeneous and shuffled
/// deterministically from the hyperparameter seed; gradients reduce in
/// utterance order, so the loss trajectory is reproducible for a given seed
/// regardless of worker count. Early stopping tracks dev loss (train loss
/// when no dev set is given) and restores the best parameters.
pub fn train_loop(
    model: &mut AcousticModel,
    train: &[TrainUtt],
    dev: &[TrainUtt],
    hyper: &Hyper,
    freeze_encoder: bool,
) -> Result<Vec<EpochStats>, ModelError> {
    if train.is_empty() {
        return Err(ModelError::DataEmpty);
    }
    model.opt.lr = hyper.lr;
    model.opt.rho = hyper.rho;
    model.opt.eps = hyper.eps;

    let frozen_mask: Option<Vec<bool>> = if freeze_encoder {
        let mut mask = vec![false; model.params.layout.len()];
        for entry in model.params.layout.entries() {
            if entry.name.starts_with("enc.") {
                mask[entry.offset..entry.offset + entry.len()]
                    .iter_mut()
                    .for_each(|m| *m = true);
            }
        }
        Some(mask)
    } else {
        None
    };

    let mut by_lang: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, utt) in train.iter().enumerate() {
        by_lang.entry(utt.lang.as_str()).or_default().push(i);
    }

    let mut log = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_params = model.params.data.clone();
    let mut patience_left = hyper.patience;
    for epoch in 1..=hyper.max_epochs {
        model.epoch += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(params::derived_seed(
            hyper.seed,
            "epoch",
            &model.epoch.to_string(),
        ));
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for indices in by_lang.values() {
            let mut shuffled = indices.clone();
            shuffled.shuffle(&mut rng);
            for chunk in shuffled.chunks(hyper.batch_size.max(1)) {
                batches.push(chunk.to_vec());
            }
        }
        batches.shuffle(&mut rng);

        let mut tier_sums: BTreeMap<TierId, f64> = BTreeMap::new();
        let mut skipped = 0usize;
        for batch in &batches {
            let utts: Vec<&TrainUtt> = batch.iter().map(|&i| &train[i]).collect();
            let results = parallel::map(&utts, |utt| {
                forward_backward(model, utt, freeze_encoder)
            });
            let mut grad = GradBuffer::zeros(&model.params.layout);
            for r in results {
                let (losses, g, s) = r?;
                skipped += s;
                grad.add_assign(&g);
                for (tier, loss) in losses {
                    *tier_sums.entry(tier).or_insert(0.0) += loss;
                }
            }
            grad.scale(1.0 / batch.len() as f64);
            model
                .opt
                .step(&mut model.params.data, &grad.data, frozen_mask.as_deref());
        }
        let n = train.len() as f64;
        let tier_loss: BTreeMap<TierId, f64> =
            tier_sums.iter().map(|(&t, &v)| (t, v / n)).collect();
        let total_loss: f64 = tier_loss.values().sum();

        let dev_loss = if dev.is_empty() {
            None
        } else {
            let (_, total, _) = mean_losses(model, dev)?;
            Some(total)
        };
        let monitored = dev_loss.unwrap_or(total_loss);
        log.push(EpochStats {
            epoch: model.epoch,
            tier_loss,
            total_loss,
            dev_loss,
            skipped,
        });
        if monitored < best_loss {
            best_loss = monitored;
            best_params.copy_from_slice(&model.params.data);
            patience_left = hyper.patience;
        } else {
            if patience_left == 0 {
                break;
            }
            patience_left -= 1;
        }
        let _ = epoch;
    }
    model.params.data.copy_from_slice(&best_params);
    model.best_dev = Some(best_loss);
    Ok(log)
}

/// Build and train a fresh model, including its per-head bigram LMs.
pub fn train_new(
    variant: ModelVariant,
    alphabets: AlphabetSet,
    train: &[TrainUtt],
    dev: &[TrainUtt],
    hyper: &Hyper,
) -> Result<(AcousticModel, Vec<EpochStats>), ModelError> {
    if train.is_empty() {
        return Err(ModelError::DataEmpty);
    }
    let input_dim = train[0].features.ncols();
    let encoder = EncoderConfig {
        input_dim,
        hidden: hyper.hidden,
        fc_dim: hyper.fc_dim,
    };
    let mut langs: Vec<String> = train.iter().map(|u| u.lang.clone()).collect();
    langs.sort();
    langs.dedup();
    let mut model = AcousticModel::new(variant, encoder, alphabets, langs, hyper)?;
    train_lms(&mut model, train);
    let log = train_loop(&mut model, train, dev, hyper, false)?;
    Ok((model, log))
}

/// (Re)estimate the per-(tier, language) bigram LMs from label sequences.
pub fn train_lms(model: &mut AcousticModel, utts: &[TrainUtt]) {
    let mut grouped: BTreeMap<(TierId, String), Vec<Vec<usize>>> = BTreeMap::new();
    for utt in utts {
        for (&tier, labels) in &utt.labels {
            grouped
                .entry((tier, utt.lang.clone()))
                .or_default()
                .push(labels.clone());
        }
    }
    for ((tier, lang), seqs) in grouped {
        if let Some(alphabet) = model.alphabets.get(tier, &lang) {
            let lm = BigramLm::train(&seqs, alphabet.num_labels());
            model.lms.insert((tier, lang), lm);
        }
    }
}

/// Decode every utterance on every active tier with its language's head.
/// Returns rendered symbol sequences per tier, in input utterance order.
pub fn evaluate(
    model: &AcousticModel,
    utts: &[EvalUtt],
    opts: &DecodeOptions,
) -> Result<BTreeMap<TierId, Vec<(String, String, Vec<String>)>>, ModelError> {
    for utt in utts {
        for &tier in model.variant.tiers() {
            if !model.has_head(tier, &utt.lang) {
                return Err(ModelError::MissingHead {
                    lang: utt.lang.clone(),
                    tier,
                });
            }
        }
    }
    let decoded = parallel::map(utts, |utt| {
        let cache = encoder::encode(&model.encoder, &model.params, &utt.features.view())?;
        let mut per_tier = Vec::new();
        for &tier in model.variant.tiers() {
            let logits = model.head_logits(&cache.output, tier, &utt.lang)?;
            let lm = if opts.use_lm && opts.lm_weight != 0.0 {
                model.lm_for(tier, &utt.lang)
            } else {
                None
            };
            let labels = beam_decode(
                &logits.view(),
                lm.map(|l| l as &dyn LanguageModel),
                opts.beam_width,
                if lm.is_some() { opts.lm_weight } else { 0.0 },
            );
            let alphabet =
                model
                    .alphabets
                    .get(tier, &utt.lang)
                    .ok_or_else(|| ModelError::MissingAlphabet {
                        tier,
                        lang: utt.lang.clone(),
                    })?;
            per_tier.push((tier, alphabet.decode(&labels)));
        }
        Ok::<_, ModelError>(per_tier)
    });
    let mut out: BTreeMap<TierId, Vec<(String, String, Vec<String>)>> = BTreeMap::new();
    for (utt, result) in utts.iter().zip(decoded) {
        for (tier, syms) in result? {
            out.entry(tier)
                .or_default()
                .push((utt.utt_id.clone(), utt.lang.clone(), syms));
        }
    }
    Ok(out)
}
