//! GSV1 binary volume frames.
//!
//! Layout: 8-byte magic `GSVOL1\0\0`, a little-endian `u32` header length,
//! a JSON header `{"dims":[N,D,H,W,C],"dtype":"f32"|"f64"}` and then the raw
//! little-endian buffer in the library element order. Frames may be
//! concatenated; checkpoints add optional `"name"` and `"meta"` header
//! fields.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape5, VolumeTensor};

pub const MAGIC: &[u8; 8] = b"GSVOL1\0\0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub dims: [usize; 5],
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

pub fn write_volume<T: Scalar, W: Write>(out: &mut W, v: &VolumeTensor<T>) -> Result<()> {
    write_frame(out, v, None)
}

/// Writes one frame; `name` is stored in the header when present.
pub fn write_frame<T: Scalar, W: Write>(
    out: &mut W,
    v: &VolumeTensor<T>,
    name: Option<&str>,
) -> Result<()> {
    write_frame_with_meta(out, v, name, None)
}

/// Like [`write_frame`], with an arbitrary JSON value under `"meta"`.
pub fn write_frame_with_meta<T: Scalar, W: Write>(
    out: &mut W,
    v: &VolumeTensor<T>,
    name: Option<&str>,
    meta: Option<serde_json::Value>,
) -> Result<()> {
    let header = FrameHeader {
        dims: v.shape().to_array(),
        dtype: T::DTYPE.to_string(),
        name: name.map(str::to_string),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(12 + json.len() + v.data().len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for &x in v.data() {
        x.write_le(&mut buf);
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads one frame, converting to `T` regardless of the stored dtype.
/// Returns `Ok(None)` on a clean end of stream.
pub fn read_frame<T: Scalar, R: Read>(input: &mut R) -> Result<Option<(FrameHeader, VolumeTensor<T>)>> {
    let mut magic = [0u8; 8];
    match read_exact_or_eof(input, &mut magic)? {
        false => return Ok(None),
        true => {}
    }
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a GSV1 frame".into()));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: FrameHeader = serde_json::from_slice(&json)?;
    let shape = Shape5::from_slice(&header.dims)?;
    let count = shape.len();
    let data: Vec<T> = match header.dtype.as_str() {
        "f64" => {
            let mut raw = vec![0u8; count * 8];
            input.read_exact(&mut raw)?;
            raw.chunks_exact(8)
                .map(|b| T::from_f64_lossy(f64::from_le_bytes(b.try_into().unwrap())))
                .collect()
        }
        "f32" => {
            let mut raw = vec![0u8; count * 4];
            input.read_exact(&mut raw)?;
            raw.chunks_exact(4)
                .map(|b| T::from_f64_lossy(f32::from_le_bytes(b.try_into().unwrap()) as f64))
                .collect()
        }
        other => return Err(Error::Format(format!("unsupported dtype `{other}`"))),
    };
    Ok(Some((header, VolumeTensor::from_vec(shape, data)?)))
}

pub fn read_volume<T: Scalar, R: Read>(input: &mut R) -> Result<VolumeTensor<T>> {
    read_frame(input)?
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Format("empty stream, expected a GSV1 frame".into()))
}

pub fn save_volume<T: Scalar>(path: impl AsRef<std::path::Path>, v: &VolumeTensor<T>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_volume(&mut f, v)?;
    f.flush()?;
    Ok(())
}

pub fn load_volume<T: Scalar>(path: impl AsRef<std::path::Path>) -> Result<VolumeTensor<T>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_volume(&mut f)
}

fn read_exact_or_eof<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::Format("truncated GSV1 frame".into())),
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}
