//! Multi-tier CTC acoustic modeling of phones and tones.
//!
//! The crate covers the full desk-scale pipeline for tonal-language phone
//! recognition: IPA tokenization and phone similarity ([`ipa`]), per-tier
//! transcript and alphabet construction ([`tiers`]), acoustic features
//! ([`features`]), CTC losses and decoders ([`ctc`]), a pyramidal
//! bidirectional recurrent acoustic model with per-language softmax heads
//! ([`model`]), cross-lingual softmax transfer ([`transfer`]), error-rate
//! scoring ([`metrics`]), and synthetic-corpus experiment orchestration
//! ([`corpus`], [`experiment`]).
//!
//! Batch-level work (losses over a corpus, feature synthesis, decoding) runs
//! data-parallel on rayon when the default `parallel` feature is enabled and
//! falls back to sequential iteration otherwise; results are identical either
//! way because every reduction happens in a fixed order.

pub mod ctc;
pub mod features;
pub mod ipa;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod tiers;
pub mod transfer;
