//! Corpus plumbing: JSON-lines manifests, per-corpus language registries,
//! feature loading, and synthetic corpus generation.
//!
//! A corpus directory holds `languages.json` (profiles pointing at inventory
//! files), `feature_table.tsv` (optional override of the built-in table),
//! `inventories/`, `features/`, and one or more manifest files. The four
//! built-in languages are always available even without a profile.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, tpf, wav, FeatureError, FeatureMatrix};
use crate::ipa::{data, DistanceWeights, FeatureTable, IpaError, Language};
use crate::parallel;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: bad manifest record: {message}")]
    BadManifest {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate utterance id `{utt_id}`")]
    DuplicateUtt { utt_id: String },
    #[error("utterance `{utt_id}` references missing file {path}")]
    MissingFile { utt_id: String, path: String },
    #[error("no language profile or built-in inventory for `{lang}`")]
    UnknownLanguage { lang: String },
    #[error("invalid synthesis spec: {message}")]
    SpecInvalid { message: String },
    #[error(transparent)]
    Ipa(#[from] IpaError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Where an utterance's acoustic input lives.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(untagged)]
pub enum Source {
    Audio { audio: String },
    Features { features: String },
}

/// One manifest record: utterance id, language, speaker, source file, and
/// the syllabified IPA transcript.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestRecord {
    pub utt_id: String,
    pub lang: String,
    pub speaker_id: String,
    pub source: Source,
    pub ipa: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Load a JSON-lines manifest. Utterance ids must be unique; referenced
    /// source files must exist under `corpus_dir` when `check_files` is set.
    pub fn load(path: &Path, corpus_dir: &Path, check_files: bool) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut records = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(line).map_err(|e| CorpusError::BadManifest {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if !seen.insert(record.utt_id.clone()) {
                return Err(CorpusError::DuplicateUtt {
                    utt_id: record.utt_id,
                });
            }
            if check_files {
                let rel = match &record.source {
                    Source::Audio { audio } => audio,
                    Source::Features { features } => features,
                };
                let full = corpus_dir.join(rel);
                if !full.is_file() {
                    return Err(CorpusError::MissingFile {
                        utt_id: record.utt_id,
                        path: full.display().to_string(),
                    });
                }
            }
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| io_err(path, e))
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.lang.clone()).collect()
    }

    pub fn utt_ids(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.utt_id.clone()).collect()
    }
}

/// Entry of `languages.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub code: String,
    pub inventory: String,
    #[serde(default)]
    pub glottal_to_voice: bool,
}

/// Languages and phone-feature data of one corpus: built-ins plus any
/// profiles declared in the corpus directory.
pub struct LanguageRegistry {
    pub table: FeatureTable,
    pub weights: DistanceWeights,
    languages: BTreeMap<String, Language>,
}

impl LanguageRegistry {
    /// Built-in languages only.
    pub fn builtin() -> Self {
        let table = FeatureTable::builtin();
        let mut languages = BTreeMap::new();
        for code in data::BUILTIN_LANGS {
            languages.insert(
                code.to_string(),
                Language::builtin(code, &table).expect("built-in language"),
            );
        }
        Self {
            table,
            weights: DistanceWeights::default(),
            languages,
        }
    }

    /// Built-ins plus the corpus directory's `languages.json` (profiles
    /// override built-ins of the same code) and `feature_table.tsv`.
    pub fn load(corpus_dir: &Path) -> Result<Self, CorpusError> {
        let table_path = corpus_dir.join("feature_table.tsv");
        let table = if table_path.is_file() {
            let text = std::fs::read_to_string(&table_path).map_err(|e| io_err(&table_path, e))?;
            FeatureTable::parse(&text)?
        } else {
            FeatureTable::builtin()
        };
        let mut languages = BTreeMap::new();
        for code in data::BUILTIN_LANGS {
            if let Some(lang) = Language::builtin(code, &table) {
                languages.insert(code.to_string(), lang);
            }
        }
        let profiles_path = corpus_dir.join("languages.json");
        if profiles_path.is_file() {
            let text =
                std::fs::read_to_string(&profiles_path).map_err(|e| io_err(&profiles_path, e))?;
            let profiles: Vec<LanguageProfile> =
                serde_json::from_str(&text).map_err(|e| CorpusError::BadManifest {
                    path: profiles_path.display().to_string(),
                    line: 0,
                    message: e.to_string(),
                })?;
            for profile in profiles {
                let inv_path = corpus_dir.join(&profile.inventory);
                let inv_text =
                    std::fs::read_to_string(&inv_path).map_err(|e| io_err(&inv_path, e))?;
                let lang = Language::from_inventory(
                    &profile.code,
                    &inv_text,
                    &table,
                    profile.glottal_to_voice,
                )?;
                languages.insert(profile.code.clone(), lang);
            }
        }
        Ok(Self {
            table,
            weights: DistanceWeights::default(),
            languages,
        })
    }

    pub fn get(&self, code: &str) -> Result<&Language, CorpusError> {
        self.languages
            .get(code)
            .ok_or_else(|| CorpusError::UnknownLanguage {
                lang: code.to_string(),
            })
    }

    pub fn languages(&self) -> &BTreeMap<String, Language> {
        &self.languages
    }
}

/// Load one utterance's feature matrix (feature files only).
pub fn load_features(
    corpus_dir: &Path,
    record: &ManifestRecord,
) -> Result<FeatureMatrix, CorpusError> {
    match &record.source {
        Source::Features { features } => {
            let frames = tpf::read_file(&corpus_dir.join(features))?;
            Ok(FeatureMatrix {
                utt_id: record.utt_id.clone(),
                speaker_id: record.speaker_id.clone(),
                frames,
            })
        }
        Source::Audio { audio } => Err(CorpusError::MissingFile {
            utt_id: record.utt_id.clone(),
            path: format!("{audio} (run featurize first: audio sources are not decodable here)"),
        }),
    }
}

/// Feature-extract every audio-sourced record: log-Mel (optionally with the
/// Mel-scaled F0 channel), then per-speaker Z-normalization over the whole
/// manifest. Writes feature files under `features/` and returns a manifest
/// pointing at them.
pub fn featurize_manifest(
    corpus_dir: &Path,
    manifest: &Manifest,
    with_f0: bool,
    znorm: bool,
) -> Result<Manifest, CorpusError> {
    let features_dir = corpus_dir.join("features");
    std::fs::create_dir_all(&features_dir).map_err(|e| io_err(&features_dir, e))?;
    let extracted = parallel::map(&manifest.records, |record| {
        let Source::Audio { audio } = &record.source else {
            // Already features; pass through untouched.
            return Ok((record.clone(), None));
        };
        let wave = wav::read_wav(&corpus_dir.join(audio))?;
        let mut mel = features::log_mel(&wave.samples, wave.sample_rate)?;
        if with_f0 {
            let f0 = features::extract_f0(&wave.samples, wave.sample_rate)?;
            mel = features::append_f0(&mel, &f0)?;
        }
        let matrix = FeatureMatrix {
            utt_id: record.utt_id.clone(),
            speaker_id: record.speaker_id.clone(),
            frames: mel,
        };
        Ok::<_, CorpusError>((record.clone(), Some(matrix)))
    });
    let mut matrices = Vec::new();
    let mut out_records = Vec::new();
    for item in extracted {
        let (record, matrix) = item?;
        if let Some(matrix) = matrix {
            let rel = format!("features/{}.tpf", record.utt_id);
            out_records.push(ManifestRecord {
                source: Source::Features {
                    features: rel.clone(),
                },
                ..record
            });
            matrices.push((rel, matrix));
        } else {
            out_records.push(record);
        }
    }
    if znorm {
        let mut mats: Vec<FeatureMatrix> = matrices.iter().map(|(_, m)| m.clone()).collect();
        features::znorm_per_speaker(&mut mats);
        for ((_, slot), normed) in matrices.iter_mut().zip(mats) {
            *slot = normed;
        }
    }
    for (rel, matrix) in &matrices {
        tpf::write_file(&corpus_dir.join(rel), &matrix.frames)?;
    }
    Ok(Manifest {
        records: out_records,
    })
}

/// Convenience: absolute manifest path inside a corpus directory.
pub fn manifest_path(corpus_dir: &Path, name: &str) -> PathBuf {
    corpus_dir.join(name)
}
