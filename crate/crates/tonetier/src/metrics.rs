//! Edit-distance error rates and class-filtered breakdowns.
//!
//! The substitution/deletion/insertion decomposition is canonical: among all
//! minimal-edit alignments the one with the fewest insert+delete operations
//! is reported (substitutions preferred), which also makes the counts
//! symmetric under swapping reference and hypothesis (with D and I
//! exchanged). Rates are `(S+D+I)/N` in percent with `N` the (possibly
//! filtered) reference length; an empty filtered reference yields an
//! undefined rate rather than a zero.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ipa::{FeatureTable, IpaSymbol, SymbolCategory, ToneEvent};
use crate::tiers::{parse_joint, ModelVariant, TierId, BOUNDARY, NEUTRAL};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no {tier} hypothesis for utterance `{utt_id}`")]
    MissingHypothesis { tier: TierId, utt_id: String },
    #[error("no {tier} reference for utterance `{utt_id}`")]
    MissingReference { tier: TierId, utt_id: String },
    #[error("tier {tier} missing from outputs for {metric}")]
    MissingTier { tier: TierId, metric: MetricKind },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Substitution / deletion / insertion counts of one comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub substitutions: u64,
    pub deletions: u64,
    pub insertions: u64,
}

impl EditCounts {
    pub fn total(&self) -> u64 {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn add(&mut self, other: &EditCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
    }
}

/// Levenshtein-minimal edit counts between two symbol sequences.
///
/// Ties between minimal alignments resolve toward substitutions (fewest
/// insert+delete pairs among minimal-edit paths).
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let n = reference.len();
    let m = hypothesis.len();
    // DP over (total edits, insertions + deletions), lexicographic minimum.
    let mut dp = vec![vec![(0usize, 0usize); m + 1]; n + 1];
    for i in 0..=n {
        dp[i][0] = (i, i);
    }
    for j in 0..=m {
        dp[0][j] = (j, j);
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let diag = (dp[i - 1][j - 1].0 + sub_cost, dp[i - 1][j - 1].1);
            let del = (dp[i - 1][j].0 + 1, dp[i - 1][j].1 + 1);
            let ins = (dp[i][j - 1].0 + 1, dp[i][j - 1].1 + 1);
            dp[i][j] = diag.min(del).min(ins);
        }
    }
    let (total, d_plus_i) = dp[n][m];
    // D - I equals the length difference on every alignment.
    let diff = n as isize - m as isize;
    let deletions = ((d_plus_i as isize + diff) / 2) as u64;
    let insertions = ((d_plus_i as isize - diff) / 2) as u64;
    EditCounts {
        substitutions: (total - d_plus_i) as u64,
        deletions,
        insertions,
    }
}

/// Counts plus the reference length they were scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScoredPair {
    pub counts: EditCounts,
    pub ref_len: u64,
}

impl ScoredPair {
    /// Error rate in percent; undefined when the reference is empty.
    pub fn rate(&self) -> Option<f64> {
        if self.ref_len == 0 {
            None
        } else {
            Some(self.counts.total() as f64 * 100.0 / self.ref_len as f64)
        }
    }

    pub fn add(&mut self, other: &ScoredPair) {
        self.counts.add(&other.counts);
        self.ref_len += other.ref_len;
    }
}

pub fn score_pair<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> ScoredPair {
    ScoredPair {
        counts: edit_distance(reference, hypothesis),
        ref_len: reference.len() as u64,
    }
}

/// Delete out-of-class symbols from both sides, then score.
pub fn filtered_pair<T: PartialEq + Clone>(
    reference: &[T],
    hypothesis: &[T],
    keep: impl Fn(&T) -> bool,
) -> ScoredPair {
    let r: Vec<T> = reference.iter().filter(|s| keep(s)).cloned().collect();
    let h: Vec<T> = hypothesis.iter().filter(|s| keep(s)).cloned().collect();
    score_pair(&r, &h)
}

/// Classifies rendered tier symbols via the universal feature table.
pub struct SymbolClassifier<'a> {
    table: &'a FeatureTable,
}

impl<'a> SymbolClassifier<'a> {
    pub fn new(table: &'a FeatureTable) -> Self {
        Self { table }
    }

    /// Category of the phone underlying a joint/phone tier symbol; markers
    /// and unknown bases yield None.
    pub fn category(&self, symbol: &str) -> Option<SymbolCategory> {
        if symbol.starts_with('<') {
            return None;
        }
        let (phone, _) = parse_joint(symbol);
        let probe = IpaSymbol::phone(&phone, SymbolCategory::Consonant);
        self.table.category_of(probe.base())
    }

    pub fn is_consonant(&self, symbol: &str) -> bool {
        self.category(symbol) == Some(SymbolCategory::Consonant)
    }

    pub fn is_vowel(&self, symbol: &str) -> bool {
        self.category(symbol) == Some(SymbolCategory::Vowel)
    }
}

/// Bare phone sequence extracted from joint-tier symbols.
pub fn phones_from_joint(symbols: &[String]) -> Vec<String> {
    symbols.iter().map(|s| parse_joint(s).0).collect()
}

/// Tone sequence extracted from joint-tier symbols: each vowel contributes
/// its targets (neutral placeholder when bare) then a syllable boundary;
/// consonants contribute nothing.
pub fn tones_from_joint(symbols: &[String], classifier: &SymbolClassifier) -> Vec<String> {
    let mut out = Vec::new();
    for sym in symbols {
        if !classifier.is_vowel(sym) {
            continue;
        }
        let (_, events) = parse_joint(sym);
        if events.is_empty() {
            out.push(NEUTRAL.to_string());
        } else {
            for ev in events {
                out.push(match ev {
                    ToneEvent::Target(l) => l.chao_letter().to_string(),
                    ToneEvent::Glottal => "ʔ".to_string(),
                    ToneEvent::Breathy => "h".to_string(),
                });
            }
        }
        out.push(BOUNDARY.to_string());
    }
    out
}

/// The error metrics of the report tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    Jer,
    Per,
    Ter,
    Ver,
    CoEr,
    VoEr,
    PerFromJoint,
    TerFromJoint,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Jer,
        MetricKind::Per,
        MetricKind::Ter,
        MetricKind::Ver,
        MetricKind::CoEr,
        MetricKind::VoEr,
        MetricKind::PerFromJoint,
        MetricKind::TerFromJoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Jer => "JER",
            MetricKind::Per => "PER",
            MetricKind::Ter => "TER",
            MetricKind::Ver => "VER",
            MetricKind::CoEr => "CoER",
            MetricKind::VoEr => "VoER",
            MetricKind::PerFromJoint => "PER-joint",
            MetricKind::TerFromJoint => "TER-joint",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Tier the metric reads for the given variant, if the variant
    /// produces it at all. Class-filtered and extracted breakdowns come
    /// from the joint tier where one exists, otherwise the phone tier.
    pub fn source_tier(self, variant: ModelVariant) -> Option<TierId> {
        let has_joint = variant.has_tier(TierId::Joint);
        match self {
            MetricKind::Jer => has_joint.then_some(TierId::Joint),
            MetricKind::Per => variant.has_tier(TierId::Phone).then_some(TierId::Phone),
            MetricKind::Ter => variant.has_tier(TierId::Tone).then_some(TierId::Tone),
            MetricKind::Ver => variant.has_tier(TierId::Voice).then_some(TierId::Voice),
            MetricKind::CoEr | MetricKind::VoEr => {
                if has_joint {
                    Some(TierId::Joint)
                } else if variant.has_tier(TierId::Phone) {
                    Some(TierId::Phone)
                } else {
                    None
                }
            }
            MetricKind::PerFromJoint | MetricKind::TerFromJoint => {
                has_joint.then_some(TierId::Joint)
            }
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One line of the error report.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub metric: MetricKind,
    pub model: u8,
    pub lang: String,
    pub scored: ScoredPair,
}

impl RateRow {
    pub fn rate(&self) -> Option<f64> {
        self.scored.rate()
    }
}

/// Transcripts for one tier: utterance id -> (language, symbols).
pub type TierTexts = BTreeMap<String, (String, Vec<String>)>;

/// All tier transcripts of one system or reference set.
pub type TranscriptSet = BTreeMap<TierId, TierTexts>;

pub const POOLED: &str = "pooled";

/// Score a system against references, producing every metric the variant
/// supports, per language plus a pooled row.
pub fn report(
    references: &TranscriptSet,
    hypotheses: &TranscriptSet,
    variant: ModelVariant,
    classifier: &SymbolClassifier,
) -> Result<Vec<RateRow>, MetricsError> {
    let mut rows = Vec::new();
    for metric in MetricKind::ALL {
        let Some(tier) = metric.source_tier(variant) else {
            continue;
        };
        let refs = references
            .get(&tier)
            .ok_or(MetricsError::MissingTier { tier, metric })?;
        let hyps = hypotheses
            .get(&tier)
            .ok_or(MetricsError::MissingTier { tier, metric })?;
        let mut per_lang: BTreeMap<String, ScoredPair> = BTreeMap::new();
        for (utt_id, (lang, ref_syms)) in refs {
            let (_, hyp_syms) = hyps.get(utt_id).ok_or_else(|| {
                MetricsError::MissingHypothesis {
                    tier,
                    utt_id: utt_id.clone(),
                }
            })?;
            let scored = match metric {
                MetricKind::Jer | MetricKind::Per | MetricKind::Ter | MetricKind::Ver => {
                    score_pair(ref_syms, hyp_syms)
                }
                MetricKind::CoEr => {
                    filtered_pair(ref_syms, hyp_syms, |s| classifier.is_consonant(s))
                }
                MetricKind::VoEr => {
                    filtered_pair(ref_syms, hyp_syms, |s| classifier.is_vowel(s))
                }
                MetricKind::PerFromJoint => {
                    score_pair(&phones_from_joint(ref_syms), &phones_from_joint(hyp_syms))
                }
                MetricKind::TerFromJoint => score_pair(
                    &tones_from_joint(ref_syms, classifier),
                    &tones_from_joint(hyp_syms, classifier),
                ),
            };
            per_lang.entry(lang.clone()).or_default().add(&scored);
        }
        let mut pooled = ScoredPair::default();
        for (lang, scored) in &per_lang {
            pooled.add(scored);
            rows.push(RateRow {
                metric,
                model: variant.id(),
                lang: lang.clone(),
                scored: *scored,
            });
        }
        rows.push(RateRow {
            metric,
            model: variant.id(),
            lang: POOLED.to_string(),
            scored: pooled,
        });
    }
    Ok(rows)
}

fn format_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r:.2}"),
        None => "undefined".to_string(),
    }
}

/// Emit rows as CSV: `metric,model,language,S,D,I,N,rate`.
pub fn to_csv(rows: &[RateRow]) -> String {
    let mut out = String::from("metric,model,language,S,D,I,N,rate\n");
    for row in rows {
        out.push_str(&format!(
            "{},model{},{},{},{},{},{},{}\n",
            row.metric,
            row.model,
            row.lang,
            row.scored.counts.substitutions,
            row.scored.counts.deletions,
            row.scored.counts.insertions,
            row.scored.ref_len,
            format_rate(row.rate()),
        ));
    }
    out
}

/// Parse CSV produced by [`to_csv`].
pub fn from_csv(text: &str) -> Vec<RateRow> {
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            continue;
        }
        let (Some(metric), Some(model)) = (
            MetricKind::from_name(cols[0]),
            cols[1].strip_prefix("model").and_then(|m| m.parse().ok()),
        ) else {
            continue;
        };
        let parse = |s: &str| s.parse::<u64>().unwrap_or(0);
        rows.push(RateRow {
            metric,
            model,
            lang: cols[2].to_string(),
            scored: ScoredPair {
                counts: EditCounts {
                    substitutions: parse(cols[3]),
                    deletions: parse(cols[4]),
                    insertions: parse(cols[5]),
                },
                ref_len: parse(cols[6]),
            },
        });
    }
    rows
}

/// Aligned plain-text table: one block per metric, models as rows,
/// languages as columns (pooled last).
pub fn to_table(rows: &[RateRow]) -> String {
    let mut langs: Vec<String> = rows
        .iter()
        .map(|r| r.lang.clone())
        .filter(|l| l != POOLED)
        .collect();
    langs.sort();
    langs.dedup();
    langs.push(POOLED.to_string());

    let mut out = String::new();
    let width = 12usize;
    out.push_str(&format!("{:<10}{:<8}", "metric", "model"));
    for lang in &langs {
        out.push_str(&format!("{lang:>width$}"));
    }
    out.push('\n');
    for metric in MetricKind::ALL {
        let mut models: Vec<u8> = rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| r.model)
            .collect();
        models.sort();
        models.dedup();
        for model in models {
            out.push_str(&format!("{:<10}{:<8}", metric.name(), format!("model{model}")));
            for lang in &langs {
                let cell = rows
                    .iter()
                    .find(|r| r.metric == metric && r.model == model && &r.lang == lang)
                    .map(|r| format_rate(r.rate()))
                    .unwrap_or_else(|| "-".to_string());
                out.push_str(&format!("{cell:>width$}"));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn syms(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn edit_distance_basics() {
        let counts = edit_distance(&["a", "b", "c"], &["a", "b", "c"]);
        assert_eq!(counts, EditCounts::default());

        let counts = edit_distance(&["a", "b", "c"], &["a", "c"]);
        assert_eq!(
            counts,
            EditCounts {
                substitutions: 0,
                deletions: 1,
                insertions: 0
            }
        );
        let pair = ScoredPair {
            counts,
            ref_len: 3,
        };
        assert!((pair.rate().unwrap() - 33.333333).abs() < 1e-4);

        let counts = edit_distance::<&str>(&[], &["a"]);
        assert_eq!(
            counts,
            EditCounts {
                substitutions: 0,
                deletions: 0,
                insertions: 1
            }
        );
        assert_eq!(score_pair::<&str>(&[], &["a"]).rate(), None);
    }

    #[test]
    fn substitution_preferred_over_insert_delete() {
        let counts = edit_distance(&["a", "b"], &["b", "a"]);
        assert_eq!(
            counts,
            EditCounts {
                substitutions: 2,
                deletions: 0,
                insertions: 0
            }
        );
    }

    proptest! {
        #[test]
        fn swap_exchanges_deletions_and_insertions(
            a in proptest::collection::vec(0u8..4, 0..12),
            b in proptest::collection::vec(0u8..4, 0..12),
        ) {
            let fwd = edit_distance(&a, &b);
            let rev = edit_distance(&b, &a);
            prop_assert_eq!(fwd.substitutions, rev.substitutions);
            prop_assert_eq!(fwd.deletions, rev.insertions);
            prop_assert_eq!(fwd.insertions, rev.deletions);
        }

        #[test]
        fn triangle_inequality_holds(
            a in proptest::collection::vec(0u8..3, 0..10),
            b in proptest::collection::vec(0u8..3, 0..10),
            c in proptest::collection::vec(0u8..3, 0..10),
        ) {
            let ab = edit_distance(&a, &b).total();
            let bc = edit_distance(&b, &c).total();
            let ac = edit_distance(&a, &c).total();
            prop_assert!(ac <= ab + bc);
        }

        #[test]
        fn identity_has_no_edits(a in proptest::collection::vec(0u8..5, 0..15)) {
            prop_assert_eq!(edit_distance(&a, &a), EditCounts::default());
        }
    }

    #[test]
    fn all_pass_filter_equals_plain_rate() {
        let r = syms(&["m", "a5", "t", "a3"]);
        let h = syms(&["m", "a3", "k"]);
        let plain = score_pair(&r, &h);
        let filtered = filtered_pair(&r, &h, |_| true);
        assert_eq!(plain, filtered);
    }

    #[test]
    fn consonant_filter_matches_hand_computation() {
        let table = FeatureTable::builtin();
        let classifier = SymbolClassifier::new(&table);
        // Joint tier: ref [m a5 t a3], hyp [m a3 k a3]; consonants [m t] vs
        // [m k]: one substitution in two symbols.
        let r = syms(&["m", "a5", "t", "a3"]);
        let h = syms(&["m", "a3", "k", "a3"]);
        let scored = filtered_pair(&r, &h, |s| classifier.is_consonant(s));
        assert_eq!(scored.ref_len, 2);
        assert_eq!(scored.counts.substitutions, 1);
        assert_eq!(scored.rate(), Some(50.0));
    }

    #[test]
    fn joint_extractions() {
        let table = FeatureTable::builtin();
        let classifier = SymbolClassifier::new(&table);
        let joint = syms(&["m", "a35", "ʔ", "a", "t", "a3ʔ5"]);
        assert_eq!(
            phones_from_joint(&joint),
            syms(&["m", "a", "ʔ", "a", "t", "a"])
        );
        assert_eq!(
            tones_from_joint(&joint, &classifier),
            syms(&["˧", "˥", BOUNDARY, NEUTRAL, BOUNDARY, "˧", "ʔ", "˥", BOUNDARY])
        );
    }

    fn one_tier_set(
        tier: TierId,
        utts: &[(&str, &str, Vec<String>)],
    ) -> TranscriptSet {
        let mut texts = TierTexts::new();
        for (utt, lang, syms) in utts {
            texts.insert(utt.to_string(), (lang.to_string(), syms.clone()));
        }
        let mut set = TranscriptSet::new();
        set.insert(tier, texts);
        set
    }

    #[test]
    fn report_layout_follows_variant() {
        let table = FeatureTable::builtin();
        let classifier = SymbolClassifier::new(&table);

        // Two-tier variant: no JER rows, PER/TER present, CoER from phone tier.
        let mut refs = one_tier_set(
            TierId::Phone,
            &[("u1", "l1", syms(&["m", "a"]))],
        );
        refs.insert(
            TierId::Tone,
            one_tier_set(TierId::Tone, &[("u1", "l1", syms(&["˥", BOUNDARY]))])
                .remove(&TierId::Tone)
                .unwrap(),
        );
        let hyps = refs.clone();
        let rows = report(&refs, &hyps, ModelVariant::M2, &classifier).unwrap();
        assert!(rows.iter().all(|r| r.metric != MetricKind::Jer));
        assert!(rows.iter().any(|r| r.metric == MetricKind::Per));
        assert!(rows.iter().any(|r| r.metric == MetricKind::CoEr));
        assert!(rows.iter().all(|r| r.metric != MetricKind::Ver));
        assert!(rows.iter().all(|r| r.rate() == Some(0.0) || r.rate().is_none()));

        // Identical ref/hyp on the joint tier: extraction metrics are zero.
        let refs = {
            let mut set = one_tier_set(
                TierId::Joint,
                &[("u1", "l1", syms(&["m", "a35", "t", "a3"]))],
            );
            set.insert(
                TierId::Phone,
                one_tier_set(TierId::Phone, &[("u1", "l1", syms(&["m", "a", "t", "a"]))])
                    .remove(&TierId::Phone)
                    .unwrap(),
            );
            set.insert(
                TierId::Tone,
                one_tier_set(TierId::Tone, &[("u1", "l1", syms(&["˧", "˥", BOUNDARY]))])
                    .remove(&TierId::Tone)
                    .unwrap(),
            );
            set.insert(
                TierId::Voice,
                one_tier_set(
                    TierId::Voice,
                    &[("u1", "l1", syms(&["<modal>", BOUNDARY]))],
                )
                .remove(&TierId::Voice)
                .unwrap(),
            );
            set
        };
        let rows = report(&refs, &refs.clone(), ModelVariant::M4, &classifier).unwrap();
        assert!(rows.iter().any(|r| r.metric == MetricKind::Ver));
        for metric in [MetricKind::PerFromJoint, MetricKind::TerFromJoint] {
            let row = rows.iter().find(|r| r.metric == metric).unwrap();
            assert_eq!(row.rate(), Some(0.0));
        }
    }

    #[test]
    fn csv_round_trip_and_table_render() {
        let rows = vec![
            RateRow {
                metric: MetricKind::Jer,
                model: 1,
                lang: "l1".into(),
                scored: ScoredPair {
                    counts: EditCounts {
                        substitutions: 3,
                        deletions: 1,
                        insertions: 2,
                    },
                    ref_len: 10,
                },
            },
            RateRow {
                metric: MetricKind::CoEr,
                model: 1,
                lang: POOLED.into(),
                scored: ScoredPair::default(),
            },
        ];
        let csv = to_csv(&rows);
        assert!(csv.starts_with("metric,model,language,S,D,I,N,rate\n"));
        assert!(csv.contains("JER,model1,l1,3,1,2,10,60.00"));
        assert!(csv.contains("CoER,model1,pooled,0,0,0,0,undefined"));
        let parsed = from_csv(&csv);
        assert_eq!(parsed, rows);
        let table = to_table(&rows);
        assert!(table.contains("JER"));
        assert!(table.contains("60.00"));
    }
}
