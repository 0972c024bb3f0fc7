//! IPA symbol tokenization, classification, and knowledge-based phone
//! similarity.
//!
//! Transcripts are syllabified IPA strings (`.` between syllables). The
//! tokenizer is a longest-match scanner over a declared per-language phone
//! inventory, so multi-glyph phones (`tɕ`, `aː`, diphthongs) are declared
//! explicitly rather than guessed from Unicode segmentation. Chao tone
//! letters after a vowel fold into that vowel's tone annotation, as do
//! glottal/breathy marks appearing inside a tone annotation.

pub mod data;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::kv::KvFile;

/// Chao tone letters, extra low (index 0) to extra high (index 4).
pub const CHAO_LETTERS: [char; 5] = ['˩', '˨', '˧', '˦', '˥'];

/// Diacritics the toolkit understands: length and aspiration.
pub const DIACRITICS: [char; 2] = ['ː', 'ʰ'];

#[derive(Debug, Error, PartialEq)]
pub enum IpaError {
    #[error("unknown symbol `{glyph}` at char {position}")]
    UnknownSymbol { position: usize, glyph: String },
    #[error("empty syllable at index {index}")]
    EmptySyllable { index: usize },
    #[error("tone mark at char {position} does not follow a vowel")]
    StrayToneMark { position: usize },
    #[error("category mismatch: `{a}` is {a_cat}, `{b}` is {b_cat}")]
    CategoryMismatch {
        a: String,
        a_cat: SymbolCategory,
        b: String,
        b_cat: SymbolCategory,
    },
    #[error("no candidate phone for `{symbol}`")]
    NoCandidate { symbol: String },
    #[error("no feature row for base `{base}`")]
    MissingFeatures { base: String },
    #[error("feature table line {line}: {message}")]
    BadFeatureTable { line: usize, message: String },
    #[error("inventory `{lang}` line {line}: {message}")]
    BadInventory {
        lang: String,
        line: usize,
        message: String,
    },
}

/// Broad symbol classes used across tiers and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymbolCategory {
    Consonant,
    Vowel,
    ToneLetter,
    VoiceQuality,
    Marker,
}

impl fmt::Display for SymbolCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymbolCategory::Consonant => "consonant",
            SymbolCategory::Vowel => "vowel",
            SymbolCategory::ToneLetter => "tone-letter",
            SymbolCategory::VoiceQuality => "voice-quality",
            SymbolCategory::Marker => "marker",
        };
        f.write_str(s)
    }
}

/// Pitch level on the five-level scale, 1 = extra low .. 5 = extra high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ToneLevel(u8);

impl ToneLevel {
    pub fn new(level: u8) -> Option<Self> {
        (1..=5).contains(&level).then_some(Self(level))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn chao_letter(self) -> char {
        CHAO_LETTERS[self.0 as usize - 1]
    }

    pub fn from_chao(c: char) -> Option<Self> {
        CHAO_LETTERS
            .iter()
            .position(|&l| l == c)
            .map(|i| Self(i as u8 + 1))
    }

    pub fn digit(self) -> char {
        (b'0' + self.0) as char
    }

    pub fn from_digit(c: char) -> Option<Self> {
        c.to_digit(10).and_then(|d| Self::new(d as u8))
    }
}

/// One element of a vowel's tone annotation as transcribed: a pitch target,
/// or a voice-quality mark embedded in the tone description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToneEvent {
    Target(ToneLevel),
    Glottal,
    Breathy,
}

impl ToneEvent {
    pub fn level(self) -> Option<ToneLevel> {
        match self {
            ToneEvent::Target(l) => Some(l),
            _ => None,
        }
    }

    fn render_to(self, out: &mut String) {
        match self {
            ToneEvent::Target(l) => out.push(l.chao_letter()),
            ToneEvent::Glottal => out.push('ʔ'),
            ToneEvent::Breathy => out.push('h'),
        }
    }
}

/// One tokenized IPA unit: base glyphs, diacritics, attached tone annotation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IpaSymbol {
    base: String,
    diacritics: Vec<char>,
    tone_targets: Vec<ToneEvent>,
    category: SymbolCategory,
}

impl IpaSymbol {
    /// Build a bare phone (no tone annotation) from its rendered form.
    /// Trailing length/aspiration characters split off as diacritics.
    pub fn phone(rendered: &str, category: SymbolCategory) -> Self {
        let mut base: Vec<char> = rendered.chars().collect();
        let mut diacritics = Vec::new();
        while let Some(&c) = base.last() {
            if DIACRITICS.contains(&c) {
                diacritics.insert(0, c);
                base.pop();
            } else {
                break;
            }
        }
        IpaSymbol {
            base: base.into_iter().collect(),
            diacritics,
            tone_targets: Vec::new(),
            category,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn diacritics(&self) -> &[char] {
        &self.diacritics
    }

    pub fn tone_targets(&self) -> &[ToneEvent] {
        &self.tone_targets
    }

    pub fn category(&self) -> SymbolCategory {
        self.category
    }

    pub fn is_vowel(&self) -> bool {
        self.category == SymbolCategory::Vowel
    }

    pub fn is_consonant(&self) -> bool {
        self.category == SymbolCategory::Consonant
    }

    /// Pitch levels of the annotation, voice marks skipped.
    pub fn pitch_levels(&self) -> Vec<ToneLevel> {
        self.tone_targets.iter().filter_map(|e| e.level()).collect()
    }

    /// Same phone with the tone annotation removed.
    pub fn bare(&self) -> IpaSymbol {
        IpaSymbol {
            base: self.base.clone(),
            diacritics: self.diacritics.clone(),
            tone_targets: Vec::new(),
            category: self.category,
        }
    }

    pub fn with_tone(mut self, tone: Vec<ToneEvent>) -> IpaSymbol {
        self.tone_targets = tone;
        self
    }

    /// Rendered phone without the tone annotation (`aː`, `tɕʰ`).
    pub fn rendered_phone(&self) -> String {
        let mut s = self.base.clone();
        s.extend(self.diacritics.iter());
        s
    }

    /// Fully rendered form, tone annotation in Chao letters. Round-trips
    /// through the tokenizer.
    pub fn render(&self) -> String {
        let mut s = self.rendered_phone();
        for ev in &self.tone_targets {
            ev.render_to(&mut s);
        }
        s
    }

    /// True when base and diacritics match, ignoring tone annotation.
    pub fn same_phone(&self, other: &IpaSymbol) -> bool {
        self.base == other.base && self.diacritics == other.diacritics
    }
}

/// Per-symbol articulatory features, one row of the universal table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhoneFeatures {
    Consonant { place: f64, manner: f64, voiced: f64 },
    Vowel { height: f64, backness: f64, rounded: f64 },
}

impl PhoneFeatures {
    pub fn category(&self) -> SymbolCategory {
        match self {
            PhoneFeatures::Consonant { .. } => SymbolCategory::Consonant,
            PhoneFeatures::Vowel { .. } => SymbolCategory::Vowel,
        }
    }
}

/// Universal base-glyph -> feature row table.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    rows: BTreeMap<String, PhoneFeatures>,
}

impl FeatureTable {
    pub fn parse(text: &str) -> Result<Self, IpaError> {
        let mut rows = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let err = |message: String| IpaError::BadFeatureTable {
                line: idx + 1,
                message,
            };
            if cols.len() != 5 {
                return Err(err(format!("expected 5 columns, got {}", cols.len())));
            }
            let parse_f = |s: &str| -> Result<f64, IpaError> {
                s.parse::<f64>()
                    .map_err(|_| err(format!("bad number `{s}`")))
            };
            let features = match cols[1] {
                "C" => PhoneFeatures::Consonant {
                    place: parse_f(cols[2])?,
                    manner: parse_f(cols[3])?,
                    voiced: parse_f(cols[4])?,
                },
                "V" => PhoneFeatures::Vowel {
                    height: parse_f(cols[2])?,
                    backness: parse_f(cols[3])?,
                    rounded: parse_f(cols[4])?,
                },
                other => return Err(err(format!("bad category `{other}`"))),
            };
            rows.insert(cols[0].to_string(), features);
        }
        Ok(Self { rows })
    }

    pub fn builtin() -> Self {
        Self::parse(data::FEATURE_TABLE).expect("built-in feature table parses")
    }

    pub fn get(&self, base: &str) -> Option<&PhoneFeatures> {
        self.rows.get(base)
    }

    pub fn lookup(&self, sym: &IpaSymbol) -> Result<&PhoneFeatures, IpaError> {
        self.rows
            .get(sym.base())
            .ok_or_else(|| IpaError::MissingFeatures {
                base: sym.base().to_string(),
            })
    }

    pub fn category_of(&self, base: &str) -> Option<SymbolCategory> {
        self.rows.get(base).map(|f| f.category())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &PhoneFeatures)> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# symbol\tcategory\tf1\tf2\tf3\n");
        for (sym, feats) in &self.rows {
            match feats {
                PhoneFeatures::Consonant {
                    place,
                    manner,
                    voiced,
                } => out.push_str(&format!("{sym}\tC\t{place}\t{manner}\t{voiced}\n")),
                PhoneFeatures::Vowel {
                    height,
                    backness,
                    rounded,
                } => out.push_str(&format!("{sym}\tV\t{height}\t{backness}\t{rounded}\n")),
            }
        }
        out
    }
}

/// Weights for the feature-space L1 distance. `length` prices a `ː`
/// difference, `diacritic` any other diacritic difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceWeights {
    pub place: f64,
    pub manner: f64,
    pub voicing: f64,
    pub height: f64,
    pub backness: f64,
    pub rounding: f64,
    pub length: f64,
    pub diacritic: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        Self {
            place: 2.0,
            manner: 2.0,
            voicing: 1.0,
            height: 2.0,
            backness: 2.0,
            rounding: 1.0,
            length: 1.0,
            diacritic: 1.0,
        }
    }
}

impl DistanceWeights {
    /// Override defaults from a `key = value` file.
    pub fn from_kv(kv: &KvFile) -> Result<Self, crate::kv::KvError> {
        let mut w = Self::default();
        if let Some(v) = kv.get_f64("place")? {
            w.place = v;
        }
        if let Some(v) = kv.get_f64("manner")? {
            w.manner = v;
        }
        if let Some(v) = kv.get_f64("voicing")? {
            w.voicing = v;
        }
        if let Some(v) = kv.get_f64("height")? {
            w.height = v;
        }
        if let Some(v) = kv.get_f64("backness")? {
            w.backness = v;
        }
        if let Some(v) = kv.get_f64("rounding")? {
            w.rounding = v;
        }
        if let Some(v) = kv.get_f64("length")? {
            w.length = v;
        }
        if let Some(v) = kv.get_f64("diacritic")? {
            w.diacritic = v;
        }
        Ok(w)
    }
}

/// Weighted L1 distance between two phones of the same category.
///
/// Zero exactly when base and diacritics coincide (the built-in table has no
/// duplicate feature rows). Symmetric by construction; the triangle
/// inequality is not promised.
pub fn phone_distance(
    a: &IpaSymbol,
    b: &IpaSymbol,
    table: &FeatureTable,
    weights: &DistanceWeights,
) -> Result<f64, IpaError> {
    let fa = table.lookup(a)?;
    let fb = table.lookup(b)?;
    let feat = match (fa, fb) {
        (
            PhoneFeatures::Consonant {
                place: pa,
                manner: ma,
                voiced: va,
            },
            PhoneFeatures::Consonant {
                place: pb,
                manner: mb,
                voiced: vb,
            },
        ) => {
            weights.place * (pa - pb).abs()
                + weights.manner * (ma - mb).abs()
                + weights.voicing * (va - vb).abs()
        }
        (
            PhoneFeatures::Vowel {
                height: ha,
                backness: ba,
                rounded: ra,
            },
            PhoneFeatures::Vowel {
                height: hb,
                backness: bb,
                rounded: rb,
            },
        ) => {
            weights.height * (ha - hb).abs()
                + weights.backness * (ba - bb).abs()
                + weights.rounding * (ra - rb).abs()
        }
        _ => {
            return Err(IpaError::CategoryMismatch {
                a: a.render(),
                a_cat: fa.category(),
                b: b.render(),
                b_cat: fb.category(),
            })
        }
    };
    let mut diac = 0.0;
    for &d in DIACRITICS.iter() {
        let in_a = a.diacritics().contains(&d);
        let in_b = b.diacritics().contains(&d);
        if in_a != in_b {
            diac += if d == 'ː' {
                weights.length
            } else {
                weights.diacritic
            };
        }
    }
    Ok(feat + diac)
}

/// How a nearest-phone lookup resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStage {
    Exact,
    Diacritic,
    FeatureNearest,
}

impl fmt::Display for MatchStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MatchStage::Exact => "exact",
            MatchStage::Diacritic => "diacritic",
            MatchStage::FeatureNearest => "feature-nearest",
        };
        f.write_str(s)
    }
}

/// Closest same-category phone from `candidates`, with the stage that fired.
///
/// The cascade is exact match, then a candidate that differs from `k` by a
/// single added or removed diacritic, then the feature-space argmin. Ties
/// break on distance first, rendered form second, so the result is
/// deterministic.
pub fn nearest_phone_detailed(
    k: &IpaSymbol,
    candidates: &[IpaSymbol],
    table: &FeatureTable,
    weights: &DistanceWeights,
) -> Result<(IpaSymbol, MatchStage), IpaError> {
    let same_cat: Vec<&IpaSymbol> = candidates
        .iter()
        .filter(|c| c.category() == k.category())
        .collect();
    if same_cat.is_empty() {
        return Err(IpaError::NoCandidate { symbol: k.render() });
    }
    if let Some(exact) = same_cat.iter().find(|c| c.same_phone(k)) {
        return Ok(((*exact).clone(), MatchStage::Exact));
    }
    let diacritic_steps: Vec<&IpaSymbol> = same_cat
        .iter()
        .copied()
        .filter(|c| c.base() == k.base() && diacritic_delta(k, c) == 1)
        .collect();
    let pool = if diacritic_steps.is_empty() {
        &same_cat
    } else {
        &diacritic_steps
    };
    let stage = if diacritic_steps.is_empty() {
        MatchStage::FeatureNearest
    } else {
        MatchStage::Diacritic
    };
    let mut best: Option<(f64, String, &IpaSymbol)> = None;
    for c in pool {
        let d = phone_distance(k, c, table, weights)?;
        let rendered = c.render();
        let better = match &best {
            None => true,
            Some((bd, br, _)) => d < *bd || (d == *bd && rendered < *br),
        };
        if better {
            best = Some((d, rendered, c));
        }
    }
    let (_, _, chosen) = best.expect("pool nonempty");
    Ok((chosen.clone(), stage))
}

/// Closest same-category phone; see [`nearest_phone_detailed`].
pub fn nearest_phone(
    k: &IpaSymbol,
    candidates: &[IpaSymbol],
    table: &FeatureTable,
    weights: &DistanceWeights,
) -> Result<IpaSymbol, IpaError> {
    nearest_phone_detailed(k, candidates, table, weights).map(|(s, _)| s)
}

fn diacritic_delta(a: &IpaSymbol, b: &IpaSymbol) -> usize {
    let mut delta = 0;
    for &d in DIACRITICS.iter() {
        if a.diacritics().contains(&d) != b.diacritics().contains(&d) {
            delta += 1;
        }
    }
    delta
}

#[derive(Debug, Clone)]
struct PhoneEntry {
    rendered: String,
    symbol: IpaSymbol,
}

/// A language's declared phone inventory plus tokenizer state.
#[derive(Debug, Clone)]
pub struct Language {
    code: String,
    glottal_to_voice: bool,
    /// Longest-match order: sorted by rendered char count, descending.
    entries: Vec<PhoneEntry>,
}

impl Language {
    /// Parse an inventory file (one rendered phone per line, `#` comments).
    /// Every entry must have a feature row so its category is known.
    pub fn from_inventory(
        code: &str,
        inventory_text: &str,
        table: &FeatureTable,
        glottal_to_voice: bool,
    ) -> Result<Self, IpaError> {
        let mut entries: Vec<PhoneEntry> = Vec::new();
        for (idx, raw) in inventory_text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let probe = IpaSymbol::phone(line, SymbolCategory::Consonant);
            let category = table.category_of(probe.base()).ok_or_else(|| {
                IpaError::BadInventory {
                    lang: code.to_string(),
                    line: idx + 1,
                    message: format!("`{line}` has no feature row (base `{}`)", probe.base()),
                }
            })?;
            if entries.iter().any(|e| e.rendered == line) {
                return Err(IpaError::BadInventory {
                    lang: code.to_string(),
                    line: idx + 1,
                    message: format!("duplicate symbol `{line}`"),
                });
            }
            entries.push(PhoneEntry {
                rendered: line.to_string(),
                symbol: IpaSymbol::phone(line, category),
            });
        }
        entries.sort_by(|a, b| {
            b.rendered
                .chars()
                .count()
                .cmp(&a.rendered.chars().count())
                .then_with(|| a.rendered.cmp(&b.rendered))
        });
        Ok(Self {
            code: code.to_string(),
            glottal_to_voice,
            entries,
        })
    }

    /// Built-in language by code, if one exists.
    pub fn builtin(code: &str, table: &FeatureTable) -> Option<Self> {
        data::builtin_inventory(code).map(|inv| {
            Self::from_inventory(code, inv, table, data::builtin_glottal_to_voice(code))
                .expect("built-in inventory parses")
        })
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    /// Whether segmental glottal phones move to the voice-quality tier in
    /// the four-tier variant.
    pub fn glottal_to_voice(&self) -> bool {
        self.glottal_to_voice
    }

    /// Bare phones of the inventory.
    pub fn phones(&self) -> impl Iterator<Item = &IpaSymbol> {
        self.entries.iter().map(|e| &e.symbol)
    }

    pub fn inventory_text(&self) -> String {
        let mut lines: Vec<&str> = self.entries.iter().map(|e| e.rendered.as_str()).collect();
        lines.sort();
        let mut out = format!("# inventory: {}\n", self.code);
        for l in lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }

    /// Tokenize a syllabified IPA string into one symbol list per syllable.
    ///
    /// Tone letters fold into the preceding vowel; `ʔ`/`h` fold in as well
    /// while a tone annotation is open (at least one tone letter seen since
    /// the vowel), otherwise they scan as segmental phones.
    pub fn tokenize(&self, text: &str) -> Result<Vec<Vec<IpaSymbol>>, IpaError> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        let mut syllables = Vec::new();
        let mut char_offset = 0usize;
        for (idx, piece) in text.split('.').enumerate() {
            if piece.is_empty() {
                return Err(IpaError::EmptySyllable { index: idx });
            }
            syllables.push(self.tokenize_syllable(piece, char_offset)?);
            char_offset += piece.chars().count() + 1;
        }
        Ok(syllables)
    }

    fn tokenize_syllable(
        &self,
        piece: &str,
        offset: usize,
    ) -> Result<Vec<IpaSymbol>, IpaError> {
        let chars: Vec<char> = piece.chars().collect();
        let mut symbols: Vec<IpaSymbol> = Vec::new();
        let mut pos = 0usize;
        // Index of the vowel whose tone annotation is open, if any.
        let mut open_tone: Option<usize> = None;
        while pos < chars.len() {
            let c = chars[pos];
            if let Some(level) = ToneLevel::from_chao(c) {
                let vowel_idx = match symbols.last() {
                    Some(s) if s.is_vowel() => symbols.len() - 1,
                    _ => return Err(IpaError::StrayToneMark {
                        position: offset + pos,
                    }),
                };
                symbols[vowel_idx]
                    .tone_targets
                    .push(ToneEvent::Target(level));
                open_tone = Some(vowel_idx);
                pos += 1;
                continue;
            }
            if (c == 'ʔ' || c == 'h') && open_tone == Some(symbols.len().wrapping_sub(1)) {
                let ev = if c == 'ʔ' {
                    ToneEvent::Glottal
                } else {
                    ToneEvent::Breathy
                };
                let idx = symbols.len() - 1;
                symbols[idx].tone_targets.push(ev);
                pos += 1;
                continue;
            }
            let entry = self
                .entries
                .iter()
                .find(|e| chars[pos..].starts_with(&e.rendered.chars().collect::<Vec<_>>()))
                .ok_or_else(|| IpaError::UnknownSymbol {
                    position: offset + pos,
                    glyph: c.to_string(),
                })?;
            pos += entry.rendered.chars().count();
            symbols.push(entry.symbol.clone());
            open_tone = None;
        }
        Ok(symbols)
    }
}

/// Inverse of [`Language::tokenize`]: rendered syllables joined with `.`.
pub fn render(syllables: &[Vec<IpaSymbol>]) -> String {
    syllables
        .iter()
        .map(|syl| syl.iter().map(IpaSymbol::render).collect::<String>())
        .collect::<Vec<_>>()
        .join(".")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mandarin() -> Language {
        Language::builtin("mandarin", &FeatureTable::builtin()).unwrap()
    }

    fn vietnamese() -> Language {
        Language::builtin("vietnamese", &FeatureTable::builtin()).unwrap()
    }

    fn vowel(s: &str) -> IpaSymbol {
        IpaSymbol::phone(s, SymbolCategory::Vowel)
    }

    fn consonant(s: &str) -> IpaSymbol {
        IpaSymbol::phone(s, SymbolCategory::Consonant)
    }

    #[test]
    fn tokenizes_single_tone_syllable() {
        let syls = mandarin().tokenize("ma˥").unwrap();
        assert_eq!(syls.len(), 1);
        assert_eq!(syls[0].len(), 2);
        assert_eq!(syls[0][0].render(), "m");
        assert_eq!(syls[0][1].base(), "a");
        assert_eq!(
            syls[0][1].tone_targets(),
            &[ToneEvent::Target(ToneLevel::new(5).unwrap())]
        );
    }

    #[test]
    fn tokenizes_empty_input() {
        assert!(mandarin().tokenize("").unwrap().is_empty());
    }

    #[test]
    fn tokenizes_breathy_tone_and_second_syllable() {
        let syls = vietnamese().tokenize("ma˨˩h.ta˧").unwrap();
        assert_eq!(syls.len(), 2);
        let a = &syls[0][1];
        assert_eq!(
            a.tone_targets(),
            &[
                ToneEvent::Target(ToneLevel::new(2).unwrap()),
                ToneEvent::Target(ToneLevel::new(1).unwrap()),
                ToneEvent::Breathy,
            ]
        );
        assert_eq!(syls[1][0].render(), "t");
        assert_eq!(syls[1][1].render(), "a˧");
    }

    #[test]
    fn glottal_between_tone_letters_is_in_tone() {
        let syls = vietnamese().tokenize("ma˧ʔ˥").unwrap();
        let a = &syls[0][1];
        assert_eq!(
            a.tone_targets(),
            &[
                ToneEvent::Target(ToneLevel::new(3).unwrap()),
                ToneEvent::Glottal,
                ToneEvent::Target(ToneLevel::new(5).unwrap()),
            ]
        );
    }

    #[test]
    fn glottal_without_open_tone_is_segmental() {
        let syls = vietnamese().tokenize("maʔ").unwrap();
        assert_eq!(syls[0].len(), 3);
        assert!(syls[0][2].is_consonant());
        assert_eq!(syls[0][2].base(), "ʔ");
    }

    #[test]
    fn rejects_empty_syllable_and_unknown_glyph() {
        assert_eq!(
            mandarin().tokenize("ma..ta"),
            Err(IpaError::EmptySyllable { index: 1 })
        );
        assert!(matches!(
            mandarin().tokenize("mQ"),
            Err(IpaError::UnknownSymbol { position: 1, .. })
        ));
    }

    #[test]
    fn rejects_stray_tone_mark() {
        assert_eq!(
            mandarin().tokenize("˥ma"),
            Err(IpaError::StrayToneMark { position: 0 })
        );
        assert_eq!(
            mandarin().tokenize("m˥a"),
            Err(IpaError::StrayToneMark { position: 1 })
        );
    }

    #[test]
    fn longest_match_prefers_multiglyph() {
        let syls = mandarin().tokenize("tɕʰa").unwrap();
        assert_eq!(syls[0].len(), 2);
        assert_eq!(syls[0][0].rendered_phone(), "tɕʰ");
        assert_eq!(syls[0][0].base(), "tɕ");
        assert_eq!(syls[0][0].diacritics(), &['ʰ']);
    }

    #[test]
    fn round_trip_on_fixture_transcripts() {
        let lang = vietnamese();
        for s in ["ma˧ʔ˥", "ma˨˩h.ta˧", "ŋa˨˩˨.la˧˥", "ʔa˧"] {
            assert_eq!(render(&lang.tokenize(s).unwrap()), s);
        }
    }

    #[test]
    fn distance_identity_and_symmetry() {
        let t = FeatureTable::builtin();
        let w = DistanceWeights::default();
        let a = vowel("a");
        assert_eq!(phone_distance(&a, &a, &t, &w).unwrap(), 0.0);
        let o = vowel("o");
        let d_ao = phone_distance(&a, &o, &t, &w).unwrap();
        let d_oa = phone_distance(&o, &a, &t, &w).unwrap();
        assert_eq!(d_ao, d_oa);
        assert!(d_ao > 0.0);
    }

    #[test]
    fn distance_orders_paper_style_neighbors() {
        let t = FeatureTable::builtin();
        let w = DistanceWeights::default();
        let gamma = vowel("ɤ");
        let d_o = phone_distance(&gamma, &vowel("o"), &t, &w).unwrap();
        let d_i = phone_distance(&gamma, &vowel("i"), &t, &w).unwrap();
        assert!(d_o < d_i);
    }

    #[test]
    fn voicing_only_gap_between_p_and_b() {
        let t = FeatureTable::builtin();
        let w = DistanceWeights::default();
        let d = phone_distance(&consonant("p"), &consonant("b"), &t, &w).unwrap();
        assert_eq!(d, w.voicing);
    }

    #[test]
    fn length_prices_one_unit() {
        let t = FeatureTable::builtin();
        let w = DistanceWeights::default();
        let d = phone_distance(&vowel("a"), &vowel("aː"), &t, &w).unwrap();
        assert_eq!(d, w.length);
        let d = phone_distance(&consonant("p"), &consonant("pʰ"), &t, &w).unwrap();
        assert_eq!(d, w.diacritic);
    }

    #[test]
    fn category_mismatch_is_an_error() {
        let t = FeatureTable::builtin();
        let w = DistanceWeights::default();
        assert!(matches!(
            phone_distance(&vowel("a"), &consonant("m"), &t, &w),
            Err(IpaError::CategoryMismatch { .. })
        ));
    }

    #[test]
    fn nearest_prefers_exact_then_diacritic_then_features() {
        let t = FeatureTable::builtin();
        let w = DistanceWeights::default();
        let (hit, stage) = nearest_phone_detailed(
            &vowel("o"),
            &[vowel("o"), vowel("u")],
            &t,
            &w,
        )
        .unwrap();
        assert_eq!(hit.render(), "o");
        assert_eq!(stage, MatchStage::Exact);

        let (hit, stage) = nearest_phone_detailed(
            &vowel("a"),
            &[vowel("aː"), vowel("e")],
            &t,
            &w,
        )
        .unwrap();
        assert_eq!(hit.render(), "aː");
        assert_eq!(stage, MatchStage::Diacritic);

        let (hit, stage) = nearest_phone_detailed(
            &vowel("ɤ"),
            &[vowel("o"), vowel("i"), vowel("a")],
            &t,
            &w,
        )
        .unwrap();
        assert_eq!(hit.render(), "o");
        assert_eq!(stage, MatchStage::FeatureNearest);
    }

    #[test]
    fn nearest_requires_same_category_candidates() {
        let t = FeatureTable::builtin();
        let w = DistanceWeights::default();
        assert!(matches!(
            nearest_phone(&vowel("a"), &[consonant("m")], &t, &w),
            Err(IpaError::NoCandidate { .. })
        ));
    }

    #[test]
    fn builtin_feature_rows_are_unique_per_category() {
        let t = FeatureTable::builtin();
        let rows: Vec<_> = t.rows().collect();
        for (i, (sa, fa)) in rows.iter().enumerate() {
            for (sb, fb) in rows.iter().skip(i + 1) {
                assert!(
                    fa != fb,
                    "feature rows for `{sa}` and `{sb}` collide"
                );
            }
        }
    }

    #[test]
    fn builtin_inventories_tokenize_their_tones() {
        let table = FeatureTable::builtin();
        for code in data::BUILTIN_LANGS {
            let lang = Language::builtin(code, &table).unwrap();
            let vowel = lang
                .phones()
                .find(|p| p.is_vowel())
                .expect("has a vowel")
                .clone();
            for tone in data::builtin_tones(code).unwrap() {
                let text = format!("m{}{}", vowel.render(), tone);
                let syls = lang.tokenize(&text).unwrap_or_else(|e| {
                    panic!("{code}: `{text}` failed: {e}");
                });
                assert_eq!(render(&syls), text);
            }
        }
    }

    #[test]
    fn weights_load_from_kv() {
        let kv = crate::kv::KvFile::parse("place = 3\nlength = 0.5\n").unwrap();
        let w = DistanceWeights::from_kv(&kv).unwrap();
        assert_eq!(w.place, 3.0);
        assert_eq!(w.length, 0.5);
        assert_eq!(w.manner, 2.0);
    }
}
