//! Tier transcripts and tier alphabets for the four model variants.
//!
//! Every utterance yields up to four label streams: a joint tier (consonants
//! plus tone-marked vowels), a phone tier (bare segments), a tone tier
//! (pitch targets with syllable boundaries), and, in the four-tier variant,
//! a voice-quality tier. Tier symbols are plain rendered strings so they can
//! go straight into alphabet and transcript files; markers are spelled
//! `<blank>`, `<neutral>`, `<boundary>`, `<modal>`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::ipa::{IpaSymbol, Language, ToneEvent, ToneLevel};

pub const BLANK: &str = "<blank>";
pub const NEUTRAL: &str = "<neutral>";
pub const BOUNDARY: &str = "<boundary>";
pub const MODAL: &str = "<modal>";

/// Language code under which the universal tone/voice alphabets are filed.
pub const UNIVERSAL: &str = "universal";

#[derive(Debug, Error)]
pub enum TierError {
    #[error("syllable {syllable} carries more than one voice-quality mark")]
    MoreThanOneVoiceMark { syllable: usize },
    #[error("symbol `{symbol}` is not in the {tier} alphabet of `{lang}`")]
    UnknownTierSymbol {
        tier: TierId,
        lang: String,
        symbol: String,
    },
    #[error("{path}:{line}: malformed transcript line")]
    BadTranscriptLine { path: String, line: usize },
    #[error("alphabet file {path}: first line must be `{BLANK}`")]
    BadAlphabetFile { path: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Output tier identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TierId {
    Joint,
    Phone,
    Tone,
    Voice,
}

impl TierId {
    pub const ALL: [TierId; 4] = [TierId::Joint, TierId::Phone, TierId::Tone, TierId::Voice];

    pub fn name(self) -> &'static str {
        match self {
            TierId::Joint => "joint",
            TierId::Phone => "phone",
            TierId::Tone => "tone",
            TierId::Voice => "voice",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Tone and voice alphabets are language-independent.
    pub fn is_universal(self) -> bool {
        matches!(self, TierId::Tone | TierId::Voice)
    }
}

impl fmt::Display for TierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The four model variants, differing only in their active output tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelVariant {
    M1,
    M2,
    M3,
    M4,
}

impl ModelVariant {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(ModelVariant::M1),
            2 => Some(ModelVariant::M2),
            3 => Some(ModelVariant::M3),
            4 => Some(ModelVariant::M4),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        match self {
            ModelVariant::M1 => 1,
            ModelVariant::M2 => 2,
            ModelVariant::M3 => 3,
            ModelVariant::M4 => 4,
        }
    }

    pub fn tiers(self) -> &'static [TierId] {
        match self {
            ModelVariant::M1 => &[TierId::Joint],
            ModelVariant::M2 => &[TierId::Phone, TierId::Tone],
            ModelVariant::M3 => &[TierId::Joint, TierId::Phone, TierId::Tone],
            ModelVariant::M4 => &[
                TierId::Joint,
                TierId::Phone,
                TierId::Tone,
                TierId::Voice,
            ],
        }
    }

    pub fn has_tier(self, tier: TierId) -> bool {
        self.tiers().contains(&tier)
    }

    pub fn tone_mode(self) -> ToneMode {
        if self == ModelVariant::M4 {
            ToneMode::Model4
        } else {
            ToneMode::Models23
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model{}", self.id())
    }
}

/// Tone-tier construction mode: verbatim targets, or the normalized
/// two-target form with voice marks split out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToneMode {
    Models23,
    Model4,
}

/// A normalized tone target: pitch level or neutral placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TonePoint {
    Level(ToneLevel),
    Neutral,
}

impl TonePoint {
    pub fn render(self) -> String {
        match self {
            TonePoint::Level(l) => l.chao_letter().to_string(),
            TonePoint::Neutral => NEUTRAL.to_string(),
        }
    }
}

/// Voice-quality mark for one syllable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoiceMark {
    Glottal,
    Breathy,
    Modal,
}

impl VoiceMark {
    pub fn render(self) -> &'static str {
        match self {
            VoiceMark::Glottal => "ʔ",
            VoiceMark::Breathy => "h",
            VoiceMark::Modal => MODAL,
        }
    }
}

/// Render a joint-tier symbol: phone, then tone targets as digits 1-5 with
/// embedded voice marks (`a214`, `a3ʔ5`). A toneless vowel stays bare.
pub fn render_joint(sym: &IpaSymbol) -> String {
    let mut s = sym.rendered_phone();
    for ev in sym.tone_targets() {
        match ev {
            ToneEvent::Target(l) => s.push(l.digit()),
            ToneEvent::Glottal => s.push('ʔ'),
            ToneEvent::Breathy => s.push('h'),
        }
    }
    s
}

/// Split a rendered joint symbol back into its phone and tone annotation.
/// The annotation starts at the first ASCII digit; symbols without digits
/// are bare phones (this includes segmental `ʔ` and `h`).
pub fn parse_joint(rendered: &str) -> (String, Vec<ToneEvent>) {
    let split = rendered
        .char_indices()
        .find(|(_, c)| c.is_ascii_digit())
        .map(|(i, _)| i);
    let Some(at) = split else {
        return (rendered.to_string(), Vec::new());
    };
    let phone = rendered[..at].to_string();
    let mut events = Vec::new();
    for c in rendered[at..].chars() {
        match c {
            'ʔ' => events.push(ToneEvent::Glottal),
            'h' => events.push(ToneEvent::Breathy),
            d => {
                if let Some(level) = ToneLevel::from_digit(d) {
                    events.push(ToneEvent::Target(level));
                }
            }
        }
    }
    (phone, events)
}

/// Joint tier: consonants bare, vowels fused with their tone annotation.
pub fn joint_symbols(utt: &[Vec<IpaSymbol>]) -> Vec<String> {
    utt.iter()
        .flat_map(|syl| syl.iter().map(render_joint))
        .collect()
}

/// Phone tier: all segments bare. With `strip_glottals` (four-tier variant,
/// languages whose segmental glottals move to the voice tier), segmental
/// `ʔ`/`h` are dropped.
pub fn phone_symbols(utt: &[Vec<IpaSymbol>], strip_glottals: bool) -> Vec<String> {
    utt.iter()
        .flat_map(|syl| {
            syl.iter().filter_map(move |sym| {
                let phone = sym.rendered_phone();
                if strip_glottals && sym.is_consonant() && (phone == "ʔ" || phone == "h") {
                    None
                } else {
                    Some(phone)
                }
            })
        })
        .collect()
}

/// All tone events of one syllable, in order across its vowels.
fn syllable_tone_events(syl: &[IpaSymbol]) -> Vec<ToneEvent> {
    syl.iter()
        .flat_map(|sym| sym.tone_targets().iter().copied())
        .collect()
}

/// Normalize one syllable's tone events to exactly two targets plus a voice
/// mark: voice events split off (at most one), three targets truncate to the
/// first two, single targets reduplicate, and empty annotations become a
/// reduplicated neutral.
pub fn normalize_tone_m4(
    events: &[ToneEvent],
) -> Result<([TonePoint; 2], VoiceMark), TierError> {
    let mut voice = VoiceMark::Modal;
    let mut seen_voice = false;
    let mut levels: Vec<ToneLevel> = Vec::new();
    for ev in events {
        match ev {
            ToneEvent::Target(l) => levels.push(*l),
            ToneEvent::Glottal | ToneEvent::Breathy => {
                if seen_voice {
                    return Err(TierError::MoreThanOneVoiceMark { syllable: 0 });
                }
                seen_voice = true;
                voice = if matches!(ev, ToneEvent::Glottal) {
                    VoiceMark::Glottal
                } else {
                    VoiceMark::Breathy
                };
            }
        }
    }
    let targets = match levels.len() {
        0 => [TonePoint::Neutral, TonePoint::Neutral],
        1 => [TonePoint::Level(levels[0]), TonePoint::Level(levels[0])],
        _ => [TonePoint::Level(levels[0]), TonePoint::Level(levels[1])],
    };
    Ok((targets, voice))
}

/// Tone tier. In [`ToneMode::Models23`] each syllable emits its annotation
/// verbatim (neutral placeholder when toneless) then a boundary; in
/// [`ToneMode::Model4`] each syllable emits exactly two normalized targets
/// then a boundary.
pub fn tone_symbols(
    utt: &[Vec<IpaSymbol>],
    mode: ToneMode,
) -> Result<Vec<String>, TierError> {
    let mut out = Vec::new();
    for (idx, syl) in utt.iter().enumerate() {
        let events = syllable_tone_events(syl);
        match mode {
            ToneMode::Models23 => {
                if events.is_empty() {
                    out.push(NEUTRAL.to_string());
                } else {
                    for ev in &events {
                        out.push(match ev {
                            ToneEvent::Target(l) => l.chao_letter().to_string(),
                            ToneEvent::Glottal => "ʔ".to_string(),
                            ToneEvent::Breathy => "h".to_string(),
                        });
                    }
                }
            }
            ToneMode::Model4 => {
                let (targets, _) = normalize_tone_m4(&events)
                    .map_err(|_| TierError::MoreThanOneVoiceMark { syllable: idx })?;
                out.push(targets[0].render());
                out.push(targets[1].render());
            }
        }
        out.push(BOUNDARY.to_string());
    }
    Ok(out)
}

/// Voice-quality tier (four-tier variant): one mark per syllable, from the
/// tone annotation or, for glottal-moving languages, from a segmental
/// `ʔ`/`h`, then a boundary. Syllables without a mark are modal.
pub fn voice_symbols(
    utt: &[Vec<IpaSymbol>],
    glottal_to_voice: bool,
) -> Result<Vec<String>, TierError> {
    let mut out = Vec::new();
    for (idx, syl) in utt.iter().enumerate() {
        let events = syllable_tone_events(syl);
        let (_, mut mark) =
            normalize_tone_m4(&events).map_err(|_| TierError::MoreThanOneVoiceMark {
                syllable: idx,
            })?;
        if glottal_to_voice {
            for sym in syl {
                if sym.is_consonant() {
                    let phone = sym.rendered_phone();
                    if phone == "ʔ" || phone == "h" {
                        if mark != VoiceMark::Modal {
                            return Err(TierError::MoreThanOneVoiceMark { syllable: idx });
                        }
                        mark = if phone == "ʔ" {
                            VoiceMark::Glottal
                        } else {
                            VoiceMark::Breathy
                        };
                    }
                }
            }
        }
        out.push(mark.render().to_string());
        out.push(BOUNDARY.to_string());
    }
    Ok(out)
}

/// Build all active tier symbol streams of one tokenized utterance.
pub fn tier_symbols(
    utt: &[Vec<IpaSymbol>],
    variant: ModelVariant,
    lang: &Language,
) -> Result<BTreeMap<TierId, Vec<String>>, TierError> {
    let mut map = BTreeMap::new();
    for &tier in variant.tiers() {
        let syms = match tier {
            TierId::Joint => joint_symbols(utt),
            TierId::Phone => phone_symbols(
                utt,
                variant == ModelVariant::M4 && lang.glottal_to_voice(),
            ),
            TierId::Tone => tone_symbols(utt, variant.tone_mode())?,
            TierId::Voice => voice_symbols(utt, lang.glottal_to_voice())?,
        };
        map.insert(tier, syms);
    }
    Ok(map)
}

/// Ordered symbol inventory for one tier of one language, blank at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TierAlphabet {
    pub tier: TierId,
    pub lang: String,
    symbols: Vec<String>,
}

impl TierAlphabet {
    /// Wrap an ordered non-blank symbol list; the blank is prepended.
    pub fn new(tier: TierId, lang: &str, non_blank: Vec<String>) -> Self {
        let mut symbols = Vec::with_capacity(non_blank.len() + 1);
        symbols.push(BLANK.to_string());
        symbols.extend(non_blank);
        Self {
            tier,
            lang: lang.to_string(),
            symbols,
        }
    }

    /// Alphabet from observed symbol streams: unique symbols, sorted.
    pub fn from_observed(tier: TierId, lang: &str, streams: &[Vec<String>]) -> Self {
        let mut set: Vec<String> = streams
            .iter()
            .flat_map(|s| s.iter().cloned())
            .collect();
        set.sort();
        set.dedup();
        Self::new(tier, lang, set)
    }

    /// Fixed universal tone alphabet for the given mode.
    pub fn universal_tone(mode: ToneMode) -> Self {
        let symbols: Vec<String> = match mode {
            ToneMode::Models23 => vec![
                "˩".into(),
                "˨".into(),
                "˧".into(),
                "˦".into(),
                "˥".into(),
                NEUTRAL.into(),
                BOUNDARY.into(),
                "ʔ".into(),
                "h".into(),
            ],
            ToneMode::Model4 => vec![
                "˩".into(),
                "˨".into(),
                "˧".into(),
                "˥".into(),
                NEUTRAL.into(),
                BOUNDARY.into(),
            ],
        };
        Self::new(TierId::Tone, UNIVERSAL, symbols)
    }

    /// Fixed universal voice-quality alphabet.
    pub fn universal_voice() -> Self {
        Self::new(
            TierId::Voice,
            UNIVERSAL,
            vec!["ʔ".into(), "h".into(), BOUNDARY.into(), MODAL.into()],
        )
    }

    /// All symbols including the blank at index 0.
    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Number of entries including the blank.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Non-blank symbol count.
    pub fn num_labels(&self) -> usize {
        self.symbols.len() - 1
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    /// Encode rendered symbols to label indices (never the blank).
    pub fn encode(&self, symbols: &[String]) -> Result<Vec<usize>, TierError> {
        symbols
            .iter()
            .map(|s| {
                self.index_of(s)
                    .filter(|&i| i != 0)
                    .ok_or_else(|| TierError::UnknownTierSymbol {
                        tier: self.tier,
                        lang: self.lang.clone(),
                        symbol: s.clone(),
                    })
            })
            .collect()
    }

    pub fn decode(&self, labels: &[usize]) -> Vec<String> {
        labels.iter().map(|&i| self.symbols[i].clone()).collect()
    }

    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn from_file_text(
        tier: TierId,
        lang: &str,
        text: &str,
        path: &str,
    ) -> Result<Self, TierError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&BLANK) {
            return Err(TierError::BadAlphabetFile {
                path: path.to_string(),
            });
        }
        Ok(Self::new(
            tier,
            lang,
            lines[1..].iter().map(|s| s.to_string()).collect(),
        ))
    }
}

/// Reference label sequence for one utterance on one tier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TierTranscript {
    pub tier: TierId,
    pub lang: String,
    pub labels: Vec<usize>,
}

impl TierTranscript {
    pub fn encode(
        alphabet: &TierAlphabet,
        lang: &str,
        symbols: &[String],
    ) -> Result<Self, TierError> {
        Ok(Self {
            tier: alphabet.tier,
            lang: lang.to_string(),
            labels: alphabet.encode(symbols)?,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The full alphabet set of a prepared corpus, keyed by tier and language
/// (universal tiers under [`UNIVERSAL`]).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlphabetSet {
    map: BTreeMap<(TierId, String), TierAlphabet>,
}

impl AlphabetSet {
    pub fn insert(&mut self, alphabet: TierAlphabet) {
        self.map
            .insert((alphabet.tier, alphabet.lang.clone()), alphabet);
    }

    /// Alphabet for a tier/language pair; universal tiers resolve to the
    /// shared entry.
    pub fn get(&self, tier: TierId, lang: &str) -> Option<&TierAlphabet> {
        let key_lang = if tier.is_universal() { UNIVERSAL } else { lang };
        self.map.get(&(tier, key_lang.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &TierAlphabet> {
        self.map.values()
    }

    /// Languages with a non-universal alphabet on the given tier.
    pub fn languages(&self, tier: TierId) -> Vec<String> {
        self.map
            .keys()
            .filter(|(t, l)| *t == tier && l != UNIVERSAL)
            .map(|(_, l)| l.clone())
            .collect()
    }
}

/// Build per-language alphabets for a variant from tokenized utterances
/// grouped by language. Tone and voice alphabets are the fixed universal
/// sets regardless of occurrence.
pub fn build_alphabets(
    corpus: &[(String, Vec<Vec<Vec<IpaSymbol>>>)],
    variant: ModelVariant,
    languages: &BTreeMap<String, Language>,
) -> Result<AlphabetSet, TierError> {
    let mut set = AlphabetSet::default();
    for &tier in variant.tiers() {
        match tier {
            TierId::Tone => set.insert(TierAlphabet::universal_tone(variant.tone_mode())),
            TierId::Voice => set.insert(TierAlphabet::universal_voice()),
            TierId::Joint | TierId::Phone => {
                for (lang_code, utts) in corpus {
                    let lang = &languages[lang_code];
                    let mut streams = Vec::with_capacity(utts.len());
                    for utt in utts {
                        let syms = match tier {
                            TierId::Joint => joint_symbols(utt),
                            TierId::Phone => phone_symbols(
                                utt,
                                variant == ModelVariant::M4 && lang.glottal_to_voice(),
                            ),
                            _ => unreachable!(),
                        };
                        streams.push(syms);
                    }
                    set.insert(TierAlphabet::from_observed(tier, lang_code, &streams));
                }
            }
        }
    }
    Ok(set)
}

/// Write a tier transcript file: `utt_id<TAB>sym sym sym` per line.
pub fn write_transcript_file(
    path: &Path,
    rows: &[(String, Vec<String>)],
) -> Result<(), TierError> {
    let mut out = String::new();
    for (utt_id, syms) in rows {
        out.push_str(utt_id);
        out.push('\t');
        out.push_str(&syms.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| TierError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Read a tier transcript file written by [`write_transcript_file`].
pub fn read_transcript_file(path: &Path) -> Result<Vec<(String, Vec<String>)>, TierError> {
    let text = std::fs::read_to_string(path).map_err(|source| TierError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (utt_id, rest) = line.split_once('\t').ok_or_else(|| {
            TierError::BadTranscriptLine {
                path: path.display().to_string(),
                line: idx + 1,
            }
        })?;
        let syms: Vec<String> = rest
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| s.to_string())
            .collect();
        rows.push((utt_id.to_string(), syms));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipa::{data, FeatureTable};

    fn lang(code: &str) -> Language {
        Language::builtin(code, &FeatureTable::builtin()).unwrap()
    }

    fn toks(code: &str, text: &str) -> Vec<Vec<IpaSymbol>> {
        lang(code).tokenize(text).unwrap()
    }

    #[test]
    fn joint_tier_fuses_vowels_with_tones() {
        let utt = toks("mandarin", "ma˨˩˦");
        assert_eq!(joint_symbols(&utt), vec!["m", "a214"]);
        let utt = toks("mandarin", "ma");
        assert_eq!(joint_symbols(&utt), vec!["m", "a"]);
        let utt = toks("vietnamese", "ma˧ʔ˥");
        assert_eq!(joint_symbols(&utt), vec!["m", "a3ʔ5"]);
    }

    #[test]
    fn joint_render_parses_back() {
        for (code, text) in [
            ("mandarin", "ma˨˩˦.tɕʰi˥"),
            ("vietnamese", "ma˧ʔ˥.ŋa˨˩h"),
            ("lao", "haː˧.ʔa˩˧"),
        ] {
            let utt = toks(code, text);
            for syl in &utt {
                for sym in syl {
                    let rendered = render_joint(sym);
                    let (phone, events) = parse_joint(&rendered);
                    assert_eq!(phone, sym.rendered_phone());
                    assert_eq!(events, sym.tone_targets());
                }
            }
        }
    }

    #[test]
    fn phone_tier_strips_tones() {
        let utt = toks("mandarin", "ma˨˩˦");
        assert_eq!(phone_symbols(&utt, false), vec!["m", "a"]);
        assert!(phone_symbols(&[], false).is_empty());
        let utt = toks("vietnamese", "ma˨˩h.ta˧");
        assert_eq!(phone_symbols(&utt, false), vec!["m", "a", "t", "a"]);
    }

    #[test]
    fn phone_tier_glottal_stripping_is_lang_scoped() {
        let utt = toks("lao", "haː˧");
        assert_eq!(phone_symbols(&utt, true), vec!["aː"]);
        assert_eq!(phone_symbols(&utt, false), vec!["h", "aː"]);
    }

    #[test]
    fn tone_tier_models23() {
        let utt = toks("mandarin", "ma˥.ma˧˥");
        assert_eq!(
            tone_symbols(&utt, ToneMode::Models23).unwrap(),
            vec!["˥", BOUNDARY, "˧", "˥", BOUNDARY]
        );
        let utt = toks("vietnamese", "ma˧ʔ˥");
        assert_eq!(
            tone_symbols(&utt, ToneMode::Models23).unwrap(),
            vec!["˧", "ʔ", "˥", BOUNDARY]
        );
        let utt = toks("mandarin", "ma");
        assert_eq!(
            tone_symbols(&utt, ToneMode::Models23).unwrap(),
            vec![NEUTRAL, BOUNDARY]
        );
    }

    #[test]
    fn tone_tier_model4_reduplicates_and_truncates() {
        let utt = toks("mandarin", "ma˥");
        assert_eq!(
            tone_symbols(&utt, ToneMode::Model4).unwrap(),
            vec!["˥", "˥", BOUNDARY]
        );
        let utt = toks("mandarin", "ma˨˩˦");
        assert_eq!(
            tone_symbols(&utt, ToneMode::Model4).unwrap(),
            vec!["˨", "˩", BOUNDARY]
        );
        let utt = toks("vietnamese", "ma˧ʔ˥");
        assert_eq!(
            tone_symbols(&utt, ToneMode::Model4).unwrap(),
            vec!["˧", "˥", BOUNDARY]
        );
    }

    #[test]
    fn normalize_matches_fixture_cases() {
        let lv = |n: u8| ToneEvent::Target(ToneLevel::new(n).unwrap());
        let (targets, voice) = normalize_tone_m4(&[lv(2), lv(1), lv(4)]).unwrap();
        assert_eq!(targets.map(|t| t.render()).join(""), "˨˩");
        assert_eq!(voice, VoiceMark::Modal);

        let (targets, voice) = normalize_tone_m4(&[lv(5)]).unwrap();
        assert_eq!(targets.map(|t| t.render()).join(""), "˥˥");
        assert_eq!(voice, VoiceMark::Modal);

        let (targets, voice) =
            normalize_tone_m4(&[lv(3), ToneEvent::Glottal, lv(5)]).unwrap();
        assert_eq!(targets.map(|t| t.render()).join(""), "˧˥");
        assert_eq!(voice, VoiceMark::Glottal);

        let (targets, voice) = normalize_tone_m4(&[]).unwrap();
        assert_eq!(targets, [TonePoint::Neutral, TonePoint::Neutral]);
        assert_eq!(voice, VoiceMark::Modal);

        assert!(matches!(
            normalize_tone_m4(&[lv(3), ToneEvent::Glottal, ToneEvent::Breathy]),
            Err(TierError::MoreThanOneVoiceMark { .. })
        ));
    }

    #[test]
    fn voice_tier_marks_and_boundaries() {
        let utt = toks("vietnamese", "ma˧ʔ˥");
        assert_eq!(voice_symbols(&utt, false).unwrap(), vec!["ʔ", BOUNDARY]);
        let utt = toks("mandarin", "ma˥");
        assert_eq!(voice_symbols(&utt, false).unwrap(), vec![MODAL, BOUNDARY]);
        let utt = toks("lao", "haː˧");
        assert_eq!(voice_symbols(&utt, true).unwrap(), vec!["h", BOUNDARY]);
        assert_eq!(voice_symbols(&utt, false).unwrap(), vec![MODAL, BOUNDARY]);
    }

    #[test]
    fn universal_alphabets_have_fixed_sizes() {
        let m23 = TierAlphabet::universal_tone(ToneMode::Models23);
        assert_eq!(m23.num_labels(), 9);
        let m4 = TierAlphabet::universal_tone(ToneMode::Model4);
        assert_eq!(m4.num_labels(), 6);
        assert!(m4.index_of("˦").is_none());
        let voice = TierAlphabet::universal_voice();
        assert_eq!(voice.num_labels(), 4);
        assert_eq!(voice.index_of(BLANK), Some(0));
    }

    #[test]
    fn observed_alphabet_contains_mandarin_joint_variants() {
        let streams: Vec<Vec<String>> = data::builtin_tones("mandarin")
            .unwrap()
            .iter()
            .map(|tone| joint_symbols(&toks("mandarin", &format!("ma{tone}"))))
            .chain(std::iter::once(joint_symbols(&toks("mandarin", "ma"))))
            .collect();
        let alphabet = TierAlphabet::from_observed(TierId::Joint, "mandarin", &streams);
        for sym in ["a", "a5", "a35", "a214", "a51", "m"] {
            assert!(alphabet.index_of(sym).is_some(), "missing {sym}");
        }
        assert_eq!(alphabet.num_labels(), 6);
    }

    #[test]
    fn encode_rejects_unknown_and_round_trips() {
        let alphabet = TierAlphabet::universal_voice();
        let syms = vec!["ʔ".to_string(), BOUNDARY.to_string()];
        let t = TierTranscript::encode(&alphabet, "vietnamese", &syms).unwrap();
        assert!(t.labels.iter().all(|&l| l != 0));
        assert_eq!(alphabet.decode(&t.labels), syms);
        assert!(TierTranscript::encode(&alphabet, "x", &["zz".to_string()]).is_err());
    }

    #[test]
    fn transcript_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.universal.txt");
        let rows = vec![
            (
                "utt1".to_string(),
                vec!["˥".to_string(), BOUNDARY.to_string()],
            ),
            (
                "utt2".to_string(),
                vec![NEUTRAL.to_string(), BOUNDARY.to_string()],
            ),
        ];
        write_transcript_file(&path, &rows).unwrap();
        assert_eq!(read_transcript_file(&path).unwrap(), rows);
    }

    #[test]
    fn alphabet_file_round_trip() {
        let alphabet = TierAlphabet::universal_tone(ToneMode::Model4);
        let text = alphabet.to_file_text();
        assert!(text.starts_with("<blank>\n"));
        let back =
            TierAlphabet::from_file_text(TierId::Tone, UNIVERSAL, &text, "mem").unwrap();
        assert_eq!(back, alphabet);
    }

    #[test]
    fn variant_tier_sets() {
        assert_eq!(ModelVariant::M1.tiers(), &[TierId::Joint]);
        assert_eq!(ModelVariant::M2.tiers(), &[TierId::Phone, TierId::Tone]);
        assert_eq!(
            ModelVariant::M3.tiers(),
            &[TierId::Joint, TierId::Phone, TierId::Tone]
        );
        assert_eq!(ModelVariant::M4.tiers().len(), 4);
    }

    #[test]
    fn phone_tier_equals_joint_with_tones_stripped() {
        for tone in data::builtin_tones("vietnamese").unwrap() {
            let utt = toks("vietnamese", &format!("ma{tone}.ta˧"));
            let joint = joint_symbols(&utt);
            let stripped: Vec<String> = joint.iter().map(|s| parse_joint(s).0).collect();
            assert_eq!(stripped, phone_symbols(&utt, false));
        }
    }
}
