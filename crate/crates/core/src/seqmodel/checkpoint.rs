//! Parameter snapshot files.
//!
//! Layout: one line of JSON header (terminated by `\n`) naming the model
//! config and layer segments, followed by the parameters as little-endian
//! `f64`, in layout order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{LayerSegment, ModelConfig, PolicyParams};
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "duet-params";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    model: ModelConfig,
    segments: Vec<LayerSegment>,
    count: usize,
}

pub fn encode(params: &PolicyParams) -> Vec<u8> {
    let header = Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        model: params.config.clone(),
        segments: params.layout().segments,
        count: params.data.len(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(params.data.len() * 8);
    for x in &params.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode<R: Read>(reader: R) -> Result<PolicyParams> {
    let mut reader = BufReader::new(reader);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(&line)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    if header.segments != header.model.layout().segments {
        return Err(Error::Checkpoint(
            "segment table does not match the model config".into(),
        ));
    }
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    if body.len() != header.count * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            header.count * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    PolicyParams::from_parts(header.model, data)
}

pub fn save(params: &PolicyParams, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PolicyParams> {
    decode(fs::File::open(path)?)
}

/// Hex SHA-256 of the encoded snapshot.
pub fn content_hash(params: &PolicyParams) -> String {
    let digest = Sha256::digest(encode(params));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn roundtrip_is_bit_exact(seed in any::<u64>(), scale in 0.0f64..10.0) {
            let cfg = ModelConfig { init_seed: seed, text_vocab: 4, speech_vocab: 5, hidden: 6, ..ModelConfig::default() };
            let mut rng = crate::rng::stream_rng(seed, crate::rng::Stream::Init, &[9]);
            let p = PolicyParams::init(&cfg).unwrap().perturbed(scale.max(1e-9), &mut rng);
            let back = decode(&encode(&p)[..]).unwrap();
            prop_assert_eq!(&back.config, &p.config);
            prop_assert!(back.data.iter().zip(&p.data).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(content_hash(&back), content_hash(&p));
        }
    }

    #[test]
    fn truncated_body_is_rejected() {
        let p = PolicyParams::init(&ModelConfig::default()).unwrap();
        let mut bytes = encode(&p);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode(&bytes[..]), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn header_names_segments() {
        let p = PolicyParams::init(&ModelConfig::default()).unwrap();
        let bytes = encode(&p);
        let end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..end]).unwrap();
        let names: Vec<_> = header["segments"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["name"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(names, ["embedding", "hidden", "output"]);
    }
}
