//! Cross-lingual initialization of a new language's softmax heads, and the
//! two-stage adaptation schedule (heads only with the encoder frozen, then
//! a full fine-tune).
//!
//! Every target symbol resolves against the training languages through a
//! strict cascade: exact presence, then a single-diacritic step, then the
//! feature-space nearest phone. Joint-tier symbols that miss exactly locate
//! the closest phone first and then the tone-marked variant of that phone
//! with the closest tone. The resolved rows of the training languages'
//! weight matrices are averaged; the blank row averages all languages'
//! blank rows.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ndarray::Array1;
use thiserror::Error;

use crate::ipa::{
    nearest_phone_detailed, DistanceWeights, FeatureTable, IpaError, IpaSymbol, MatchStage,
    ToneEvent,
};
use crate::model::{train_loop, AcousticModel, EpochStats, Hyper, ModelError};
use crate::tiers::{AlphabetSet, TierId, BLANK, UNIVERSAL};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("cannot resolve `{symbol}` on tier {tier}: no same-category phone in any training language")]
    Unresolvable { tier: TierId, symbol: String },
    #[error("no alphabet for tier {tier}, language `{lang}`")]
    MissingAlphabet { tier: TierId, lang: String },
    #[error(transparent)]
    Ipa(#[from] IpaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Which cascade branch produced a mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Exact,
    Diacritic,
    FeatureNearest,
    JointTwoStage,
    Blank,
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Resolution::Exact => "exact",
            Resolution::Diacritic => "diacritic",
            Resolution::FeatureNearest => "feature-nearest",
            Resolution::JointTwoStage => "joint-two-stage",
            Resolution::Blank => "blank",
        };
        f.write_str(s)
    }
}

/// Audit record: how one target symbol was initialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolMapping {
    pub tier: TierId,
    pub symbol: String,
    pub resolution: Resolution,
    pub source: String,
    pub contributors: Vec<String>,
}

/// Pitch-shape distance between two tone annotations: levels compared
/// pointwise with the shorter sequence padded by repeating its last level;
/// an empty annotation counts as a single level-0 point. Voice marks do not
/// participate.
pub fn tone_distance(a: &[ToneEvent], b: &[ToneEvent]) -> f64 {
    let levels = |events: &[ToneEvent]| -> Vec<i32> {
        let ls: Vec<i32> = events
            .iter()
            .filter_map(|e| e.level().map(|l| l.value() as i32))
            .collect();
        if ls.is_empty() {
            vec![0]
        } else {
            ls
        }
    };
    let la = levels(a);
    let lb = levels(b);
    let n = la.len().max(lb.len());
    let get = |ls: &[i32], i: usize| ls[i.min(ls.len() - 1)];
    (0..n)
        .map(|i| (get(&la, i) - get(&lb, i)).abs() as f64)
        .sum()
}

fn parse_phone(rendered: &str, table: &FeatureTable) -> Result<IpaSymbol, IpaError> {
    let probe = IpaSymbol::phone(rendered, crate::ipa::SymbolCategory::Consonant);
    let category = table
        .category_of(probe.base())
        .ok_or_else(|| IpaError::MissingFeatures {
            base: probe.base().to_string(),
        })?;
    Ok(IpaSymbol::phone(rendered, category))
}

/// Training-language occurrences of tier symbols: rendered symbol -> langs.
fn symbol_occurrences(
    model: &AcousticModel,
    tier: TierId,
    training_langs: &[String],
) -> Result<BTreeMap<String, Vec<String>>, TransferError> {
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for lang in training_langs {
        let alphabet =
            model
                .alphabets
                .get(tier, lang)
                .ok_or_else(|| TransferError::MissingAlphabet {
                    tier,
                    lang: lang.clone(),
                })?;
        for sym in &alphabet.symbols()[1..] {
            map.entry(sym.clone()).or_default().push(lang.clone());
        }
    }
    Ok(map)
}

fn resolve_phone_symbol(
    tier: TierId,
    symbol: &str,
    occurrences: &BTreeMap<String, Vec<String>>,
    table: &FeatureTable,
    weights: &DistanceWeights,
) -> Result<SymbolMapping, TransferError> {
    if let Some(langs) = occurrences.get(symbol) {
        return Ok(SymbolMapping {
            tier,
            symbol: symbol.to_string(),
            resolution: Resolution::Exact,
            source: symbol.to_string(),
            contributors: langs.clone(),
        });
    }
    let target = parse_phone(symbol, table)?;
    let candidates: Vec<IpaSymbol> = occurrences
        .keys()
        .filter_map(|s| parse_phone(s, table).ok())
        .filter(|c| c.category() == target.category())
        .collect();
    if candidates.is_empty() {
        return Err(TransferError::Unresolvable {
            tier,
            symbol: symbol.to_string(),
        });
    }
    let (hit, stage) = nearest_phone_detailed(&target, &candidates, table, weights)?;
    let source = hit.render();
    let resolution = match stage {
        MatchStage::Exact => Resolution::Exact,
        MatchStage::Diacritic => Resolution::Diacritic,
        MatchStage::FeatureNearest => Resolution::FeatureNearest,
    };
    let contributors = occurrences[&source].clone();
    Ok(SymbolMapping {
        tier,
        symbol: symbol.to_string(),
        resolution,
        source,
        contributors,
    })
}

fn resolve_joint_symbol(
    symbol: &str,
    occurrences: &BTreeMap<String, Vec<String>>,
    table: &FeatureTable,
    weights: &DistanceWeights,
) -> Result<SymbolMapping, TransferError> {
    let tier = TierId::Joint;
    if let Some(langs) = occurrences.get(symbol) {
        return Ok(SymbolMapping {
            tier,
            symbol: symbol.to_string(),
            resolution: Resolution::Exact,
            source: symbol.to_string(),
            contributors: langs.clone(),
        });
    }
    let (phone_str, events) = crate::tiers::parse_joint(symbol);
    let target_phone = parse_phone(&phone_str, table)?;
    // Group training joint symbols by their phone part.
    let mut by_phone: BTreeMap<String, Vec<&String>> = BTreeMap::new();
    for sym in occurrences.keys() {
        let (p, _) = crate::tiers::parse_joint(sym);
        by_phone.entry(p).or_default().push(sym);
    }
    let phone_candidates: Vec<IpaSymbol> = by_phone
        .keys()
        .filter_map(|p| parse_phone(p, table).ok())
        .filter(|c| c.category() == target_phone.category())
        .collect();
    if phone_candidates.is_empty() {
        return Err(TransferError::Unresolvable {
            tier,
            symbol: symbol.to_string(),
        });
    }
    let (phone_hit, _) = nearest_phone_detailed(&target_phone, &phone_candidates, table, weights)?;
    let phone_key = phone_hit.rendered_phone();
    let variants = &by_phone[&phone_key];
    let mut best: Option<(f64, &String)> = None;
    for &variant in variants {
        let (_, v_events) = crate::tiers::parse_joint(variant);
        let d = tone_distance(&events, &v_events);
        let better = match best {
            None => true,
            Some((bd, bs)) => d < bd || (d == bd && variant < bs),
        };
        if better {
            best = Some((d, variant));
        }
    }
    let source = best.expect("variants nonempty").1.clone();
    let contributors = occurrences[&source].clone();
    Ok(SymbolMapping {
        tier,
        symbol: symbol.to_string(),
        resolution: Resolution::JointTwoStage,
        source,
        contributors,
    })
}

/// Resolve one target symbol against the training languages.
pub fn resolve_symbol(
    model: &AcousticModel,
    tier: TierId,
    symbol: &str,
    training_langs: &[String],
    table: &FeatureTable,
    weights: &DistanceWeights,
) -> Result<SymbolMapping, TransferError> {
    if tier.is_universal() {
        // Tone and voice alphabets are shared, so presence is guaranteed.
        return Ok(SymbolMapping {
            tier,
            symbol: symbol.to_string(),
            resolution: Resolution::Exact,
            source: symbol.to_string(),
            contributors: training_langs.to_vec(),
        });
    }
    let occurrences = symbol_occurrences(model, tier, training_langs)?;
    match tier {
        TierId::Joint => resolve_joint_symbol(symbol, &occurrences, table, weights),
        _ => resolve_phone_symbol(tier, symbol, &occurrences, table, weights),
    }
}

/// Add heads for `adapt_lang` and initialize them from the training
/// languages' heads. Returns the audit trail, one mapping per target symbol
/// (the blank row is audited as `blank`).
pub fn transfer_init(
    model: &mut AcousticModel,
    adapt_lang: &str,
    adapt_alphabets: &AlphabetSet,
    table: &FeatureTable,
    weights: &DistanceWeights,
) -> Result<Vec<SymbolMapping>, TransferError> {
    let training_langs: Vec<String> = model
        .langs
        .iter()
        .filter(|l| l.as_str() != adapt_lang)
        .cloned()
        .collect();

    let mut mappings = Vec::new();
    for &tier in model.variant.tiers() {
        let target_alphabet = if tier.is_universal() {
            model
                .alphabets
                .get(tier, UNIVERSAL)
                .or_else(|| adapt_alphabets.get(tier, UNIVERSAL))
                .ok_or_else(|| TransferError::MissingAlphabet {
                    tier,
                    lang: UNIVERSAL.to_string(),
                })?
        } else {
            adapt_alphabets.get(tier, adapt_lang).ok_or_else(|| {
                TransferError::MissingAlphabet {
                    tier,
                    lang: adapt_lang.to_string(),
                }
            })?
        };
        mappings.push(SymbolMapping {
            tier,
            symbol: BLANK.to_string(),
            resolution: Resolution::Blank,
            source: BLANK.to_string(),
            contributors: training_langs.clone(),
        });
        for symbol in &target_alphabet.symbols()[1..] {
            mappings.push(resolve_symbol(
                model,
                tier,
                symbol,
                &training_langs,
                table,
                weights,
            )?);
        }
    }

    model.add_language(adapt_lang, adapt_alphabets)?;

    for mapping in &mappings {
        let tier = mapping.tier;
        let target_alphabet = model
            .alphabets
            .get(tier, adapt_lang)
            .expect("alphabet just added");
        let row_idx = target_alphabet
            .index_of(&mapping.symbol)
            .expect("mapping symbol in target alphabet");
        let d = model.encoder.fc_dim;
        let mut w_mean = Array1::<f64>::zeros(d);
        let mut b_mean = 0.0;
        for lang in &mapping.contributors {
            let src_alphabet = model
                .alphabets
                .get(tier, lang)
                .expect("training alphabet exists");
            let src_idx = if mapping.resolution == Resolution::Blank {
                0
            } else {
                src_alphabet
                    .index_of(&mapping.source)
                    .expect("source symbol in contributor alphabet")
            };
            let w = model.params.view(&format!("head.{}.{}.w", tier.name(), lang));
            for j in 0..d {
                w_mean[j] += w[[src_idx, j]];
            }
            let b = model.params.view(&format!("head.{}.{}.b", tier.name(), lang));
            b_mean += b[[0, src_idx]];
        }
        let count = mapping.contributors.len().max(1) as f64;
        w_mean /= count;
        b_mean /= count;
        {
            let mut w = model
                .params
                .view_mut(&format!("head.{}.{}.w", tier.name(), adapt_lang));
            for j in 0..d {
                w[[row_idx, j]] = w_mean[j];
            }
        }
        {
            let mut b = model
                .params
                .view_mut(&format!("head.{}.{}.b", tier.name(), adapt_lang));
            b[[0, row_idx]] = b_mean;
        }
    }
    Ok(mappings)
}

/// Write the mapping audit file: per target symbol,
/// `symbol<TAB>resolution<TAB>source<TAB>langs`, one section per tier.
pub fn write_audit(path: &Path, mappings: &[SymbolMapping]) -> Result<(), TransferError> {
    let mut out = String::new();
    let mut current: Option<TierId> = None;
    for m in mappings {
        if current != Some(m.tier) {
            out.push_str(&format!("# tier: {}\n", m.tier));
            current = Some(m.tier);
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            m.symbol,
            m.resolution,
            m.source,
            m.contributors.join(",")
        ));
    }
    std::fs::write(path, out).map_err(|source| TransferError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Two-stage adaptation log.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub heads_only: Vec<EpochStats>,
    pub fine_tune: Vec<EpochStats>,
}

/// Adapt an initialized model on the adaptation corpus: first train with
/// the encoder frozen (only head parameters move), then fine-tune
/// everything, both stages with early stopping.
pub fn adapt(
    model: &mut AcousticModel,
    train: &[crate::model::TrainUtt],
    dev: &[crate::model::TrainUtt],
    hyper: &Hyper,
) -> Result<AdaptOutcome, ModelError> {
    if hyper.max_epochs == 0 {
        return Ok(AdaptOutcome {
            heads_only: Vec::new(),
            fine_tune: Vec::new(),
        });
    }
    let heads_only = train_loop(model, train, dev, hyper, true)?;
    let fine_tune = train_loop(model, train, dev, hyper, false)?;
    Ok(AdaptOutcome {
        heads_only,
        fine_tune,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipa::ToneLevel;
    use crate::model::EncoderConfig;
    use crate::tiers::{TierAlphabet, ToneMode};
    use ndarray::Array2;

    fn lv(n: u8) -> ToneEvent {
        ToneEvent::Target(ToneLevel::new(n).unwrap())
    }

    #[test]
    fn tone_distance_pads_with_last_level() {
        // Rising 13 vs rising 35: |1-3| + |3-5| = 4.
        assert_eq!(tone_distance(&[lv(1), lv(3)], &[lv(3), lv(5)]), 4.0);
        // 13 vs flat 3 (padded to 33): |1-3| + |3-3| = 2.
        assert_eq!(tone_distance(&[lv(1), lv(3)], &[lv(3)]), 2.0);
        // Voice marks are ignored.
        assert_eq!(
            tone_distance(&[lv(3), ToneEvent::Glottal, lv(5)], &[lv(3), lv(5)]),
            0.0
        );
        assert_eq!(tone_distance(&[], &[]), 0.0);
    }

    /// Three training languages with controlled alphabets. The joint tier
    /// carries the two-stage fixtures, the phone tier the plain cascade.
    fn fixture_model() -> AcousticModel {
        let variant = crate::tiers::ModelVariant::M3;
        let mut alphabets = AlphabetSet::default();
        alphabets.insert(TierAlphabet::new(
            TierId::Phone,
            "lang1",
            vec!["a".into(), "m".into(), "o".into()],
        ));
        alphabets.insert(TierAlphabet::new(
            TierId::Phone,
            "lang2",
            vec!["a".into(), "aː".into(), "m".into()],
        ));
        alphabets.insert(TierAlphabet::new(
            TierId::Phone,
            "lang3",
            vec!["a".into(), "i".into(), "uː".into()],
        ));
        alphabets.insert(TierAlphabet::new(
            TierId::Joint,
            "lang1",
            vec!["m".into(), "uː35".into(), "ɑʊ15".into()],
        ));
        alphabets.insert(TierAlphabet::new(
            TierId::Joint,
            "lang2",
            vec!["m".into(), "uː35".into(), "uː5".into()],
        ));
        alphabets.insert(TierAlphabet::new(
            TierId::Joint,
            "lang3",
            vec!["m".into(), "a5".into()],
        ));
        alphabets.insert(TierAlphabet::universal_tone(ToneMode::Models23));
        let hyper = Hyper {
            hidden: 2,
            fc_dim: 3,
            seed: 3,
            ..Hyper::default()
        };
        let mut model = AcousticModel::new(
            variant,
            EncoderConfig {
                input_dim: 4,
                hidden: 2,
                fc_dim: 3,
            },
            alphabets,
            vec!["lang1".into(), "lang2".into(), "lang3".into()],
            &hyper,
        )
        .unwrap();
        // Known rows: head.<tier>.<lang>.w row r = constant (lang_index*100 + r).
        for (li, lang) in ["lang1", "lang2", "lang3"].iter().enumerate() {
            for tier in ["phone", "joint", "tone"] {
                let name = format!("head.{tier}.{lang}.w");
                if model.params.layout.entry(&name).is_some() {
                    let rows = model.params.view(&name).nrows();
                    let dim = model.params.view(&name).ncols();
                    let mut w = model.params.view_mut(&name);
                    w.assign(&Array2::from_shape_fn((rows, dim), |(r, _)| {
                        (li * 100 + r) as f64
                    }));
                    let mut b = model
                        .params
                        .view_mut(&format!("head.{tier}.{lang}.b"));
                    for r in 0..rows {
                        b[[0, r]] = (li * 1000 + r) as f64;
                    }
                }
            }
        }
        model
    }

    fn adapt_alphabets() -> AlphabetSet {
        let mut set = AlphabetSet::default();
        set.insert(TierAlphabet::new(
            TierId::Phone,
            "newlang",
            vec!["a".into(), "iː".into(), "m".into(), "ɤ".into()],
        ));
        set.insert(TierAlphabet::new(
            TierId::Joint,
            "newlang",
            vec!["m".into(), "uː13".into(), "ɑo13".into()],
        ));
        set
    }

    #[test]
    fn cascade_branches_fire_and_rows_average_exactly() {
        let mut model = fixture_model();
        let table = FeatureTable::builtin();
        let weights = DistanceWeights::default();
        let mappings =
            transfer_init(&mut model, "newlang", &adapt_alphabets(), &table, &weights).unwrap();

        let find = |tier: TierId, sym: &str| -> &SymbolMapping {
            mappings
                .iter()
                .find(|m| m.tier == tier && m.symbol == sym)
                .unwrap_or_else(|| panic!("no mapping for {sym}"))
        };

        // Exact: `a` is in all three phone alphabets.
        let a = find(TierId::Phone, "a");
        assert_eq!(a.resolution, Resolution::Exact);
        assert_eq!(a.contributors, vec!["lang1", "lang2", "lang3"]);

        // Diacritic: `iː` is absent but lang3 has `i`.
        let i_long = find(TierId::Phone, "iː");
        assert_eq!(i_long.resolution, Resolution::Diacritic);
        assert_eq!(i_long.source, "i");
        assert_eq!(i_long.contributors, vec!["lang3"]);

        // Feature-nearest: `ɤ` resolves to `o` (lang1).
        let schwa_like = find(TierId::Phone, "ɤ");
        assert_eq!(schwa_like.resolution, Resolution::FeatureNearest);
        assert_eq!(schwa_like.source, "o");

        // Joint two-stage: rising uː13 picks uː35 over flat uː5.
        let u_rise = find(TierId::Joint, "uː13");
        assert_eq!(u_rise.resolution, Resolution::JointTwoStage);
        assert_eq!(u_rise.source, "uː35");
        assert_eq!(u_rise.contributors, vec!["lang1", "lang2"]);

        // Joint two-stage with phone matching: ɑo13 lands on ɑʊ15.
        let diph = find(TierId::Joint, "ɑo13");
        assert_eq!(diph.resolution, Resolution::JointTwoStage);
        assert_eq!(diph.source, "ɑʊ15");

        // Eq-2 row averaging at machine precision. `a` sits at index 1 in
        // every phone alphabet; contributor rows are 1, 101, 201.
        let w = model.params.view("head.phone.newlang.w");
        let target_alphabet = model.alphabets.get(TierId::Phone, "newlang").unwrap();
        let a_idx = target_alphabet.index_of("a").unwrap();
        let expected = (1.0 + 101.0 + 201.0) / 3.0;
        for j in 0..3 {
            assert_eq!(w[[a_idx, j]], expected);
        }
        // Single contributor: row copied unchanged (lang3 `i` at index 2).
        let i_idx = target_alphabet.index_of("iː").unwrap();
        let src_idx = model
            .alphabets
            .get(TierId::Phone, "lang3")
            .unwrap()
            .index_of("i")
            .unwrap();
        for j in 0..3 {
            assert_eq!(w[[i_idx, j]], (200 + src_idx) as f64);
        }
        // Blank row: mean of the three blank rows (0, 100, 200).
        assert_eq!(w[[0, 0]], 100.0);
        // uː13 row: mean of lang1/lang2 uː35 rows.
        let wj = model.params.view("head.joint.newlang.w");
        let j_alpha = model.alphabets.get(TierId::Joint, "newlang").unwrap();
        let u_idx = j_alpha.index_of("uː13").unwrap();
        let l1_idx = model
            .alphabets
            .get(TierId::Joint, "lang1")
            .unwrap()
            .index_of("uː35")
            .unwrap();
        let l2_idx = model
            .alphabets
            .get(TierId::Joint, "lang2")
            .unwrap()
            .index_of("uː35")
            .unwrap();
        let expected = ((l1_idx as f64) + (100 + l2_idx) as f64) / 2.0;
        for j in 0..3 {
            assert_eq!(wj[[u_idx, j]], expected);
        }
        // Universal tone tier: every row averages all three languages.
        let tone_mapping = find(TierId::Tone, "˥");
        assert_eq!(tone_mapping.resolution, Resolution::Exact);
        assert_eq!(tone_mapping.contributors.len(), 3);
        let wt = model.params.view("head.tone.newlang.w");
        let tone_alpha = model.alphabets.get(TierId::Tone, "newlang").unwrap();
        let top_idx = tone_alpha.index_of("˥").unwrap();
        assert_eq!(wt[[top_idx, 0]], (top_idx as f64 + (100 + top_idx) as f64 + (200 + top_idx) as f64) / 3.0);
    }

    #[test]
    fn unresolvable_when_no_same_category_candidates() {
        let variant = crate::tiers::ModelVariant::M2;
        let mut alphabets = AlphabetSet::default();
        // Training language has only consonants on the phone tier.
        alphabets.insert(TierAlphabet::new(TierId::Phone, "lang1", vec!["m".into()]));
        alphabets.insert(TierAlphabet::universal_tone(ToneMode::Models23));
        let hyper = Hyper {
            hidden: 2,
            fc_dim: 3,
            ..Hyper::default()
        };
        let mut model = AcousticModel::new(
            variant,
            EncoderConfig {
                input_dim: 4,
                hidden: 2,
                fc_dim: 3,
            },
            alphabets,
            vec!["lang1".into()],
            &hyper,
        )
        .unwrap();
        let mut adapt = AlphabetSet::default();
        adapt.insert(TierAlphabet::new(TierId::Phone, "new", vec!["a".into()]));
        let err = transfer_init(
            &mut model,
            "new",
            &adapt,
            &FeatureTable::builtin(),
            &DistanceWeights::default(),
        );
        assert!(matches!(err, Err(TransferError::Unresolvable { .. })));
    }

    #[test]
    fn audit_file_lists_every_mapping() {
        let mut model = fixture_model();
        let table = FeatureTable::builtin();
        let weights = DistanceWeights::default();
        let mappings =
            transfer_init(&mut model, "newlang", &adapt_alphabets(), &table, &weights).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.tsv");
        write_audit(&path, &mappings).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("# tier: joint"));
        assert!(text.contains("uː13\tjoint-two-stage\tuː35\tlang1,lang2"));
        assert!(text.contains("iː\tdiacritic\ti\tlang3"));
        let body_lines = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(body_lines, mappings.len());
    }
}
