//! Checkpoint file: magic `RUMCKPT1`, JSON header with the config,
//! vocabulary, author ids and tensor layout, then every tensor's values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binfmt::{self, Decoder};
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ParamId, Params};
use crate::tensor::{SeededRng, Tensor};
use crate::users::UserTable;

const MAGIC: &[u8; 8] = b"RUMCKPT1";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    user_ids: Vec<String>,
    users_trainable: bool,
    tensors: Vec<TensorEntry>,
}

pub fn checkpoint_bytes(model: &Model) -> Result<Vec<u8>> {
    let header = Header {
        version: VERSION,
        config: model.config.clone(),
        vocab: model.vocab.corpus_tokens().to_vec(),
        user_ids: model.users.user_ids().to_vec(),
        users_trainable: model.users.trainable,
        tensors: ParamId::ALL
            .iter()
            .map(|&id| TensorEntry {
                name: id.name().to_string(),
                shape: model.tensor(id).shape().to_vec(),
            })
            .collect(),
    };
    let payload: Vec<&[f64]> = ParamId::ALL.iter().map(|&id| model.tensor(id).data()).collect();
    binfmt::encode(MAGIC, &header, &payload)
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &Path) -> Result<Model> {
    let mut dec = Decoder::open(bytes, path, MAGIC, "checkpoint")?;
    let header: Header = dec.header()?;
    if header.version != VERSION {
        return Err(dec.err(format!(
            "unsupported checkpoint version {} (expected {VERSION})",
            header.version
        )));
    }
    header
        .config
        .validate()
        .map_err(|e| dec.err(format!("invalid config: {e}")))?;
    let vocab = Vocabulary::from_tokens(header.vocab)?;

    // A template model fixes the expected shapes; its values are replaced.
    let mut users = UserTable::init(&header.user_ids, header.config.user_dim, &mut SeededRng::new(0))?;
    users.trainable = header.users_trainable;
    let params = Params::init(&header.config, vocab.len(), &mut SeededRng::new(0));
    let mut model = Model {
        config: header.config,
        vocab,
        params,
        users,
    };
    if header.tensors.len() != ParamId::ALL.len() {
        return Err(dec.err(format!(
            "expected {} tensors, found {}",
            ParamId::ALL.len(),
            header.tensors.len()
        )));
    }
    for (entry, id) in header.tensors.iter().zip(ParamId::ALL) {
        let expected = model.tensor(id).shape().to_vec();
        if entry.name != id.name() || entry.shape != expected {
            return Err(dec.err(format!(
                "tensor {} {:?} does not match {} {:?} implied by the config",
                entry.name,
                entry.shape,
                id.name(),
                expected
            )));
        }
    }
    for id in ParamId::ALL {
        let target = model.tensor_mut(id);
        let data = dec.floats(target.len())?;
        *target = Tensor::new(&target.shape().to_vec(), data)?.with_grad();
    }
    dec.finish()?;
    if model.users.matrix().row(crate::users::NULL_ROW).iter().any(|&x| x != 0.0) {
        return Err(Error::format(path, "null author row is not zero"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), checkpoint_bytes(model)?).map_err(Error::at(path.as_ref()))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let bytes = std::fs::read(path.as_ref()).map_err(Error::at(path.as_ref()))?;
    checkpoint_from_bytes(&bytes, path.as_ref())
}
