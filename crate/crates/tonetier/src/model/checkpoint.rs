//! Checkpoint file: versioned header, JSON manifest of shapes/alphabets/LMs,
//! then one float block per named matrix (same block layout as feature
//! files). Saving is deterministic, so save -> load -> save reproduces the
//! file byte for byte.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{AcousticModel, Adadelta, EncoderConfig, Hyper, ModelError, ParamStore};
use crate::ctc::BigramLm;
use crate::features::tpf;
use crate::tiers::{AlphabetSet, ModelVariant, TierAlphabet, TierId};

const MAGIC: &[u8; 4] = b"TTCK";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MetaAlphabet {
    tier: String,
    lang: String,
    symbols: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaLm {
    tier: String,
    lang: String,
    num_labels: usize,
    counts: Vec<(u32, u32, u64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    variant: u8,
    input_dim: usize,
    hidden: usize,
    fc_dim: usize,
    langs: Vec<String>,
    alphabets: Vec<MetaAlphabet>,
    lms: Vec<MetaLm>,
    epoch: usize,
    best_dev: Option<f64>,
    seed: u64,
    lr: f64,
    rho: f64,
    eps: f64,
}

fn err(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn save(model: &AcousticModel, path: &Path) -> Result<(), ModelError> {
    let meta = Meta {
        variant: model.variant.id(),
        input_dim: model.encoder.input_dim,
        hidden: model.encoder.hidden,
        fc_dim: model.encoder.fc_dim,
        langs: model.langs.clone(),
        alphabets: model
            .alphabets
            .iter()
            .map(|a| MetaAlphabet {
                tier: a.tier.name().to_string(),
                lang: a.lang.clone(),
                symbols: a.symbols()[1..].to_vec(),
            })
            .collect(),
        lms: model
            .lms
            .iter()
            .map(|((tier, lang), lm)| MetaLm {
                tier: tier.name().to_string(),
                lang: lang.clone(),
                num_labels: lm.num_labels(),
                counts: lm.to_counts(),
            })
            .collect(),
        epoch: model.epoch,
        best_dev: model.best_dev.filter(|v| v.is_finite()),
        seed: model.seed,
        lr: model.opt.lr,
        rho: model.opt.rho,
        eps: model.opt.eps,
    };
    let meta_bytes = serde_json::to_vec(&meta).map_err(|e| err(path, e.to_string()))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_bytes);

    let mut blocks: Vec<(String, Array2<f64>)> = Vec::new();
    for entry in model.params.layout.entries() {
        let view = model.params.view(&entry.name);
        blocks.push((entry.name.clone(), view.to_owned()));
    }
    let len = model.opt.acc_grad.len();
    blocks.push((
        "opt.acc_grad".to_string(),
        Array2::from_shape_vec((1, len), model.opt.acc_grad.clone()).expect("shape"),
    ));
    blocks.push((
        "opt.acc_update".to_string(),
        Array2::from_shape_vec((1, len), model.opt.acc_update.clone()).expect("shape"),
    ));

    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, matrix) in &blocks {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&tpf::encode(matrix));
    }
    std::fs::write(path, out).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<AcousticModel, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cursor = std::io::Cursor::new(&bytes[..]);
    let mut magic = [0u8; 4];
    cursor
        .read_exact(&mut magic)
        .map_err(|_| err(path, "truncated header"))?;
    if &magic != MAGIC {
        return Err(err(path, "bad magic"));
    }
    let mut word = [0u8; 4];
    cursor
        .read_exact(&mut word)
        .map_err(|_| err(path, "truncated version"))?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(err(path, format!("unsupported version {version}")));
    }
    cursor
        .read_exact(&mut word)
        .map_err(|_| err(path, "truncated meta length"))?;
    let meta_len = u32::from_le_bytes(word) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    cursor
        .read_exact(&mut meta_bytes)
        .map_err(|_| err(path, "truncated meta"))?;
    let meta: Meta =
        serde_json::from_slice(&meta_bytes).map_err(|e| err(path, e.to_string()))?;

    let variant = ModelVariant::from_id(meta.variant)
        .ok_or_else(|| err(path, format!("bad variant {}", meta.variant)))?;
    let mut alphabets = AlphabetSet::default();
    for a in &meta.alphabets {
        let tier = TierId::from_name(&a.tier)
            .ok_or_else(|| err(path, format!("bad tier `{}`", a.tier)))?;
        alphabets.insert(TierAlphabet::new(tier, &a.lang, a.symbols.clone()));
    }
    let encoder = EncoderConfig {
        input_dim: meta.input_dim,
        hidden: meta.hidden,
        fc_dim: meta.fc_dim,
    };
    let hyper = Hyper {
        hidden: meta.hidden,
        fc_dim: meta.fc_dim,
        lr: meta.lr,
        rho: meta.rho,
        eps: meta.eps,
        seed: meta.seed,
        ..Hyper::default()
    };
    let mut model = AcousticModel::new(
        variant,
        encoder,
        alphabets,
        meta.langs.clone(),
        &hyper,
    )?;
    model.epoch = meta.epoch;
    model.best_dev = meta.best_dev;

    cursor
        .read_exact(&mut word)
        .map_err(|_| err(path, "truncated block count"))?;
    let n_blocks = u32::from_le_bytes(word) as usize;
    let mut seen: BTreeMap<String, Array2<f64>> = BTreeMap::new();
    for _ in 0..n_blocks {
        cursor
            .read_exact(&mut word)
            .map_err(|_| err(path, "truncated block name length"))?;
        let name_len = u32::from_le_bytes(word) as usize;
        let mut name_bytes = vec![0u8; name_len];
        cursor
            .read_exact(&mut name_bytes)
            .map_err(|_| err(path, "truncated block name"))?;
        let name =
            String::from_utf8(name_bytes).map_err(|_| err(path, "block name not utf-8"))?;
        let matrix = tpf::decode(&mut cursor, &path.display().to_string())
            .map_err(|e| err(path, e.to_string()))?;
        seen.insert(name, matrix);
    }

    let mut params = ParamStore::zeros(model.params.layout.clone());
    for entry in params.layout.entries().to_vec() {
        let matrix = seen
            .remove(&entry.name)
            .ok_or_else(|| err(path, format!("missing block `{}`", entry.name)))?;
        if matrix.dim() != (entry.rows, entry.cols) {
            return Err(err(path, format!("shape mismatch for `{}`", entry.name)));
        }
        params.data[entry.offset..entry.offset + entry.len()]
            .copy_from_slice(matrix.as_slice().expect("contiguous"));
    }
    let mut opt = Adadelta::new(params.layout.len(), meta.lr, meta.rho, meta.eps);
    let acc_grad = seen
        .remove("opt.acc_grad")
        .ok_or_else(|| err(path, "missing block `opt.acc_grad`"))?;
    let acc_update = seen
        .remove("opt.acc_update")
        .ok_or_else(|| err(path, "missing block `opt.acc_update`"))?;
    if acc_grad.len() != opt.acc_grad.len() || acc_update.len() != opt.acc_update.len() {
        return Err(err(path, "optimizer state length mismatch"));
    }
    opt.acc_grad.copy_from_slice(acc_grad.as_slice().expect("contiguous"));
    opt.acc_update
        .copy_from_slice(acc_update.as_slice().expect("contiguous"));
    model.params = params;
    model.opt = opt;
    for lm_meta in &meta.lms {
        let tier = TierId::from_name(&lm_meta.tier)
            .ok_or_else(|| err(path, format!("bad tier `{}`", lm_meta.tier)))?;
        model.lms.insert(
            (tier, lm_meta.lang.clone()),
            BigramLm::from_counts(&lm_meta.counts, lm_meta.num_labels),
        );
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiers::TierAlphabet;

    fn sample_model() -> AcousticModel {
        let variant = ModelVariant::M2;
        let mut alphabets = AlphabetSet::default();
        alphabets.insert(TierAlphabet::new(
            TierId::Phone,
            "l1",
            vec!["p".into(), "q".into()],
        ));
        alphabets.insert(TierAlphabet::universal_tone(variant.tone_mode()));
        let hyper = Hyper {
            hidden: 3,
            fc_dim: 4,
            seed: 17,
            ..Hyper::default()
        };
        let mut model = AcousticModel::new(
            variant,
            EncoderConfig {
                input_dim: 5,
                hidden: 3,
                fc_dim: 4,
            },
            alphabets,
            vec!["l1".into()],
            &hyper,
        )
        .unwrap();
        model.epoch = 12;
        model.best_dev = Some(3.125);
        model.lms.insert(
            (TierId::Phone, "l1".into()),
            BigramLm::train(&[vec![1, 2, 1]], 2),
        );
        // A couple of optimizer entries to confirm persistence.
        model.opt.acc_grad[0] = 0.5;
        model.opt.acc_update[3] = 0.25;
        model
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ttck");
        let model = sample_model();
        save(&model, &path).unwrap();
        let first = std::fs::read(&path).unwrap();

        let loaded = load(&path).unwrap();
        assert_eq!(loaded.variant, model.variant);
        assert_eq!(loaded.encoder, model.encoder);
        assert_eq!(loaded.langs, model.langs);
        assert_eq!(loaded.epoch, 12);
        assert_eq!(loaded.best_dev, Some(3.125));
        assert_eq!(loaded.lms.len(), 1);
        assert_eq!(
            loaded.alphabets.get(TierId::Phone, "l1").unwrap().symbols(),
            model.alphabets.get(TierId::Phone, "l1").unwrap().symbols()
        );

        let path2 = dir.path().join("model2.ttck");
        save(&loaded, &path2).unwrap();
        let second = std::fs::read(&path2).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn load_rejects_corrupted_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ttck");
        let model = sample_model();
        save(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load(&path),
            Err(ModelError::Checkpoint { .. })
        ));
    }
}
