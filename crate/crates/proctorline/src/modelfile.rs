//! Binary voice-model container.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "PLVOICE\0" | container version | model version (len + UTF-8)
//! frame_len | hop | input frames | input bins | tensor count
//! per tensor: name (len + UTF-8) | rank | dims... | f32 LE data
//! ```

use std::io::{Read, Write};

use proctorline_core::audio::{AudioError, FrontEnd, VoiceModel};
use proctorline_core::pipeline::VoiceDetector;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"PLVOICE\0";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a voice model file")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("tensor {index} is named {got:?}, expected {expected:?}")]
    UnexpectedTensor { index: usize, expected: &'static str, got: String },
    #[error("model file is truncated or has trailing bytes")]
    Truncated,
    #[error(transparent)]
    Model(#[from] AudioError),
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for ModelFileError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ModelFileError::Truncated
        } else {
            ModelFileError::Io(e)
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_model(d: &VoiceDetector) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CONTAINER_VERSION as usize);
    put_str(&mut out, &d.model.version);
    put_u32(&mut out, d.front_end.frame_len);
    put_u32(&mut out, d.front_end.hop);
    let (h, w) = d.model.input_shape();
    put_u32(&mut out, h);
    put_u32(&mut out, w);
    let tensors: Vec<_> = d.model.tensors().collect();
    put_u32(&mut out, tensors.len());
    for (name, shape, data) in tensors {
        put_str(&mut out, name);
        put_u32(&mut out, shape.len());
        shape.iter().for_each(|&s| put_u32(&mut out, s));
        data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> Result<usize, ModelFileError> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b) as usize)
    }

    fn string(&mut self) -> Result<String, ModelFileError> {
        let len = self.u32()?;
        if len > 1 << 16 {
            return Err(ModelFileError::Truncated);
        }
        let mut b = vec![0u8; len];
        self.0.read_exact(&mut b)?;
        String::from_utf8(b).map_err(|_| ModelFileError::BadMagic)
    }
}

pub fn decode_model<R: Read>(input: R) -> Result<VoiceDetector, ModelFileError> {
    let mut r = Reader(input);
    let mut magic = [0u8; 8];
    r.0.read_exact(&mut magic).map_err(|_| ModelFileError::BadMagic)?;
    if &magic != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let container = r.u32()? as u32;
    if container != CONTAINER_VERSION {
        return Err(ModelFileError::UnsupportedVersion(container));
    }
    let version = r.string()?;
    let front_end = FrontEnd { frame_len: r.u32()?, hop: r.u32()? };
    let input = (r.u32()?, r.u32()?);
    let count = r.u32()?;
    if count != proctorline_core::audio::model::PARAM_NAMES.len() {
        return Err(AudioError::InvalidParameter("model must hold exactly 8 tensors").into());
    }
    let mut tensors = Vec::with_capacity(count);
    for (index, expected) in proctorline_core::audio::model::PARAM_NAMES.iter().enumerate() {
        let name = r.string()?;
        if name != *expected {
            return Err(ModelFileError::UnexpectedTensor { index, expected, got: name });
        }
        let rank = r.u32()?;
        if rank > 4 {
            return Err(ModelFileError::Truncated);
        }
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.0.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        tensors.push((shape, data));
    }
    let mut rest = [0u8; 1];
    if r.0.read(&mut rest)? != 0 {
        return Err(ModelFileError::Truncated);
    }
    let model = VoiceModel::from_tensors(version, input, tensors)?;
    Ok(VoiceDetector { front_end, model })
}

pub fn write_model(path: &std::path::Path, d: &VoiceDetector) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_model(d))?;
    f.flush()
}

pub fn read_model(path: &std::path::Path) -> Result<VoiceDetector, ModelFileError> {
    let f = std::fs::File::open(path).map_err(ModelFileError::Io)?;
    decode_model(std::io::BufReader::new(f))
}
