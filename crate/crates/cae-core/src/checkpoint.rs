//! Checkpoint serialization for trained models.
//!
//! Single self-describing binary format:
//!
//! ```text
//! bytes 0..4    magic "CAE1"
//! bytes 4..8    format version, u32 little-endian
//! bytes 8..16   header length, u64 little-endian
//! ...           header JSON
//! ...           tensor payload: f32 little-endian, concatenated in header order
//! ```
//!
//! The header carries each network's architecture and named tensor list plus
//! free-form metadata (training config, seeds, data checksums), so a loaded
//! model is rebuilt exactly and refuses to load into a mismatched
//! architecture.

use crate::error::{CaeError, Result};
use crate::masks::MaskBank;
use crate::model::CaeModel;
use crate::nn::{LayerSpec, Net};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CAE1";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetEntry {
    name: String,
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    #[serde(default)]
    mask: Option<MaskEntry>,
    meta: serde_json::Value,
    nets: Vec<NetEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskEntry {
    max_label: usize,
    block_len: usize,
}

const KIND_AUTOENCODER: &str = "autoencoder";
const KIND_CLASSIFIER: &str = "classifier";

fn net_entry(name: &str, net: &Net<f32>) -> NetEntry {
    NetEntry {
        name: name.to_string(),
        input_shape: net.input_shape().to_vec(),
        specs: net.specs(),
        tensors: net
            .named_tensors()
            .into_iter()
            .map(|(name, t)| TensorEntry {
                name,
                shape: t.shape().to_vec(),
            })
            .collect(),
    }
}

fn write_file(path: &Path, header: &Header, nets: &[&Net<f32>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header_bytes = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for net in nets {
        for (_, t) in net.named_tensors() {
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CaeError::Checkpoint(format!(
            "bad magic {magic:?}, not a checkpoint file"
        )));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CaeError::Checkpoint(format!(
            "unsupported format version {version} (supported: {VERSION})"
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let header_len = u64::from_le_bytes(len) as usize;
    if header_len > 1 << 24 {
        return Err(CaeError::Checkpoint(format!(
            "unreasonable header length {header_len}"
        )));
    }
    let mut buf = vec![0u8; header_len];
    r.read_exact(&mut buf)?;
    Ok(serde_json::from_slice(&buf)?)
}

fn read_net(r: &mut impl Read, entry: &NetEntry) -> Result<Net<f32>> {
    // Architecture first (seed irrelevant: every tensor is overwritten, and
    // construction validates shape flow).
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = Net::<f32>::new(&mut rng, &entry.input_shape, &entry.specs)?;
    let expected: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
    let stored: Vec<&str> = entry.tensors.iter().map(|t| t.name.as_str()).collect();
    if expected != stored {
        return Err(CaeError::Checkpoint(format!(
            "net {:?}: stored tensor list does not match architecture \
             (stored {} tensors, architecture has {})",
            entry.name,
            stored.len(),
            expected.len()
        )));
    }
    for t in &entry.tensors {
        let n: usize = t.shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let tensor = Tensor::from_vec(&t.shape, data)?;
        net.set_named_tensor(&t.name, tensor)?;
    }
    Ok(net)
}

/// Saves an encoder/decoder pair with its mask geometry and metadata.
pub fn save_cae(path: impl AsRef<Path>, model: &CaeModel, meta: serde_json::Value) -> Result<()> {
    let header = Header {
        kind: KIND_AUTOENCODER.into(),
        mask: Some(MaskEntry {
            max_label: model.bank.max_label(),
            block_len: model.bank.block_len(),
        }),
        meta,
        nets: vec![
            net_entry("encoder", &model.encoder),
            net_entry("decoder", &model.decoder),
        ],
    };
    write_file(path.as_ref(), &header, &[&model.encoder, &model.decoder])
}

/// Loads an encoder/decoder pair saved by [`save_cae`]; returns the model
/// and the stored metadata.
pub fn load_cae(path: impl AsRef<Path>) -> Result<(CaeModel, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let header = read_header(&mut r)?;
    if header.kind != KIND_AUTOENCODER {
        return Err(CaeError::Checkpoint(format!(
            "expected an autoencoder checkpoint, found kind {:?}",
            header.kind
        )));
    }
    let mask = header
        .mask
        .as_ref()
        .ok_or_else(|| CaeError::Checkpoint("autoencoder checkpoint lacks mask geometry".into()))?;
    if header.nets.len() != 2 || header.nets[0].name != "encoder" || header.nets[1].name != "decoder"
    {
        return Err(CaeError::Checkpoint(
            "autoencoder checkpoint must hold nets [encoder, decoder]".into(),
        ));
    }
    let encoder = read_net(&mut r, &header.nets[0])?;
    let decoder = read_net(&mut r, &header.nets[1])?;
    let bank = MaskBank::new(mask.max_label, mask.block_len)?;
    if encoder.output_shape() != [bank.code_len()] {
        return Err(CaeError::Checkpoint(format!(
            "encoder output {:?} does not match mask code length {}",
            encoder.output_shape(),
            bank.code_len()
        )));
    }
    Ok((
        CaeModel {
            encoder,
            decoder,
            bank,
        },
        header.meta,
    ))
}

/// Saves a single classifier network with metadata.
pub fn save_classifier(
    path: impl AsRef<Path>,
    net: &Net<f32>,
    meta: serde_json::Value,
) -> Result<()> {
    let header = Header {
        kind: KIND_CLASSIFIER.into(),
        mask: None,
        meta,
        nets: vec![net_entry("classifier", net)],
    };
    write_file(path.as_ref(), &header, &[net])
}

/// Loads a classifier network saved by [`save_classifier`].
pub fn load_classifier(path: impl AsRef<Path>) -> Result<(Net<f32>, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let header = read_header(&mut r)?;
    if header.kind != KIND_CLASSIFIER {
        return Err(CaeError::Checkpoint(format!(
            "expected a classifier checkpoint, found kind {:?}",
            header.kind
        )));
    }
    if header.nets.len() != 1 {
        return Err(CaeError::Checkpoint(
            "classifier checkpoint must hold exactly one net".into(),
        ));
    }
    let net = read_net(&mut r, &header.nets[0])?;
    Ok((net, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::baseline_cnn_specs;
    use crate::nn::Mode;
    use rand::Rng;

    fn small_input(rng: &mut ChaCha8Rng, n: usize) -> Tensor<f32> {
        Tensor::from_vec(
            &[n, 1, 28, 28],
            (0..n * 784).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn autoencoder_round_trip_preserves_behavior() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
        let x = small_input(&mut rng, 2);
        // Move running stats off init so the round trip covers them.
        let _ = model.encoder.forward(&x, Mode::Train).unwrap();

        let before = model.encode(&x).unwrap();
        let meta = serde_json::json!({"note": "round trip", "seed": 10});
        save_cae(&path, &model, meta.clone()).unwrap();
        let (mut loaded, loaded_meta) = load_cae(&path).unwrap();
        assert_eq!(loaded_meta, meta);
        assert_eq!(loaded.bank, model.bank);
        let after = loaded.encode(&x).unwrap();
        assert_eq!(before, after, "bit-identical codes after reload");
    }

    #[test]
    fn classifier_round_trip_preserves_logits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cnn.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Net::<f32>::new(&mut rng, &[1, 28, 28], &baseline_cnn_specs(11)).unwrap();
        let x = small_input(&mut rng, 3);
        let before = net.forward(&x, Mode::Eval).unwrap();
        save_classifier(&path, &net, serde_json::json!({})).unwrap();
        let (mut loaded, _) = load_classifier(&path).unwrap();
        assert_eq!(loaded.forward(&x, Mode::Eval).unwrap(), before);
    }

    #[test]
    fn rejects_wrong_kind_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = Net::<f32>::new(&mut rng, &[1, 28, 28], &baseline_cnn_specs(10)).unwrap();
        save_classifier(&path, &net, serde_json::json!({})).unwrap();
        assert!(matches!(load_cae(&path), Err(CaeError::Checkpoint(_))));

        let garbage = dir.path().join("garbage.ckpt");
        std::fs::write(&garbage, b"not a checkpoint at all").unwrap();
        assert!(load_classifier(&garbage).is_err());

        // Truncated payload fails the tensor read, not silently.
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 128]).unwrap();
        assert!(load_classifier(&cut).is_err());
    }
}
