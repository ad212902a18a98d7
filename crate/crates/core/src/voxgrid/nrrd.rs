//! Strict NRRD0004 subset: a fixed nine-line text header followed by a raw
//! little-endian payload.
//!
//! ```text
//! NRRD0004
//! type: float | uint8
//! dimension: 3
//! sizes: <nx> <ny> <nz>
//! space dimension: 3
//! space directions: (sx,0,0) (0,sy,0) (0,0,sz)
//! space origin: (ox,oy,oz)
//! endian: little
//! encoding: raw
//!
//! <payload>
//! ```

use std::fs;
use std::path::Path;

use super::{Geometry, LabelVolume, ScalarVolume, Volume};
use crate::error::{Error, Result};

/// Sample types that can be stored in the NRRD subset.
pub trait NrrdSample: Copy + Sized {
    const TYPE_NAME: &'static str;
    const SIZE: usize;
    fn decode(bytes: &[u8]) -> Self;
    fn encode(self, out: &mut Vec<u8>);
    fn build(geometry: Geometry, data: Vec<Self>) -> Result<Volume<Self>>;
}

impl NrrdSample for f32 {
    const TYPE_NAME: &'static str = "float";
    const SIZE: usize = 4;

    fn decode(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }

    fn encode(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn build(geometry: Geometry, data: Vec<Self>) -> Result<Volume<Self>> {
        ScalarVolume::new(geometry, data)
    }
}

impl NrrdSample for u8 {
    const TYPE_NAME: &'static str = "uint8";
    const SIZE: usize = 1;

    fn decode(bytes: &[u8]) -> Self {
        bytes[0]
    }

    fn encode(self, out: &mut Vec<u8>) {
        out.push(self);
    }

    fn build(geometry: Geometry, data: Vec<Self>) -> Result<Volume<Self>> {
        LabelVolume::new(geometry, data)
    }
}

/// A volume read from disk whose sample type is decided by the header.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Scalar(ScalarVolume),
    Label(LabelVolume),
}

impl AnyVolume {
    pub fn geometry(&self) -> &Geometry {
        match self {
            AnyVolume::Scalar(v) => v.geometry(),
            AnyVolume::Label(v) => v.geometry(),
        }
    }
}

/// Serializes a volume to the bytes of an NRRD file.
pub fn encode_nrrd<T: NrrdSample>(vol: &Volume<T>) -> Vec<u8> {
    let g = vol.geometry();
    let [nx, ny, nz] = g.dims;
    let [sx, sy, sz] = g.spacing;
    let [ox, oy, oz] = g.origin;
    let header = format!(
        "NRRD0004\n\
         type: {}\n\
         dimension: 3\n\
         sizes: {nx} {ny} {nz}\n\
         space dimension: 3\n\
         space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})\n\
         space origin: ({ox},{oy},{oz})\n\
         endian: little\n\
         encoding: raw\n\n",
        T::TYPE_NAME
    );
    let mut out = Vec::with_capacity(header.len() + vol.len() * T::SIZE);
    out.extend_from_slice(header.as_bytes());
    for &v in vol.data() {
        v.encode(&mut out);
    }
    out
}

pub fn write_nrrd<T: NrrdSample>(vol: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_nrrd(vol)).map_err(|e| Error::io_at(path, e))
}

struct Header {
    type_name: String,
    geometry: Geometry,
}

const FIELDS: [&str; 8] = [
    "type",
    "dimension",
    "sizes",
    "space dimension",
    "space directions",
    "space origin",
    "endian",
    "encoding",
];

fn bad(msg: impl Into<String>) -> Error {
    Error::Nrrd(msg.into())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| bad(format!("invalid number '{s}'")))
}

fn parse_tuple(s: &str) -> Result<[f64; 3]> {
    let inner = s
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| bad(format!("malformed vector '{s}'")))?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 3 {
        return Err(bad(format!("vector '{s}' must have 3 components")));
    }
    Ok([parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?])
}

fn parse_header(text: &str) -> Result<Header> {
    let mut lines = text.split('\n');
    if lines.next() != Some("NRRD0004") {
        return Err(bad("missing NRRD0004 magic line"));
    }
    let mut values = Vec::with_capacity(FIELDS.len());
    for (expected, line) in FIELDS.iter().zip(lines.by_ref()) {
        let (key, value) = line
            .split_once(": ")
            .ok_or_else(|| bad(format!("malformed header line '{line}'")))?;
        if key != *expected {
            if FIELDS.contains(&key) {
                return Err(bad(format!("field '{key}' out of order, expected '{expected}'")));
            }
            return Err(bad(format!("unsupported field '{key}'")));
        }
        values.push(value);
    }
    if values.len() != FIELDS.len() {
        return Err(bad("truncated header"));
    }
    if let Some(extra) = lines.next() {
        let key = extra.split_once(':').map_or(extra, |(k, _)| k);
        return Err(bad(format!("unsupported field '{key}'")));
    }

    let type_name = values[0];
    if type_name != "float" && type_name != "uint8" {
        return Err(bad(format!("unsupported type '{type_name}'")));
    }
    if values[1] != "3" {
        return Err(bad(format!("dimension must be 3, got '{}'", values[1])));
    }
    let sizes: Vec<&str> = values[2].split(' ').collect();
    if sizes.len() != 3 {
        return Err(bad(format!("sizes must list 3 values, got '{}'", values[2])));
    }
    let mut dims = [0usize; 3];
    for (d, s) in dims.iter_mut().zip(&sizes) {
        *d = s
            .parse::<usize>()
            .map_err(|_| bad(format!("invalid size '{s}'")))?;
    }
    if values[3] != "3" {
        return Err(bad(format!("space dimension must be 3, got '{}'", values[3])));
    }
    let dirs: Vec<&str> = values[4].split(' ').collect();
    if dirs.len() != 3 {
        return Err(bad("space directions must list 3 vectors"));
    }
    let mut spacing = [0.0; 3];
    for axis in 0..3 {
        let v = parse_tuple(dirs[axis])?;
        for (k, &c) in v.iter().enumerate() {
            if k != axis && c != 0.0 {
                return Err(bad("only axis-aligned space directions are supported"));
            }
        }
        if !(v[axis] > 0.0 && v[axis].is_finite()) {
            return Err(bad(format!("non-positive spacing {} on axis {axis}", v[axis])));
        }
        spacing[axis] = v[axis];
    }
    let origin = parse_tuple(values[5])?;
    if values[6] != "little" {
        return Err(bad(format!("unsupported endian '{}'", values[6])));
    }
    if values[7] != "raw" {
        return Err(bad(format!("unsupported encoding '{}'", values[7])));
    }
    let geometry = Geometry::new(dims, spacing, origin)?;
    Ok(Header {
        type_name: type_name.to_string(),
        geometry,
    })
}

fn split_file(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("header is not terminated by a blank line"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not valid UTF-8"))?;
    let header = parse_header(text)?;
    Ok((header, &bytes[end + 2..]))
}

fn decode_payload<T: NrrdSample>(geometry: Geometry, payload: &[u8]) -> Result<Volume<T>> {
    let expected = geometry.len() * T::SIZE;
    if payload.len() != expected {
        return Err(Error::PayloadLength {
            expected,
            actual: payload.len(),
        });
    }
    let data = payload.chunks_exact(T::SIZE).map(T::decode).collect();
    T::build(geometry, data)
}

/// Parses NRRD bytes into whichever volume type the header declares.
pub fn decode_nrrd(bytes: &[u8]) -> Result<AnyVolume> {
    let (header, payload) = split_file(bytes)?;
    match header.type_name.as_str() {
        "float" => Ok(AnyVolume::Scalar(decode_payload(header.geometry, payload)?)),
        _ => Ok(AnyVolume::Label(decode_payload(header.geometry, payload)?)),
    }
}

pub fn read_nrrd(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io_at(path, e))?;
    decode_nrrd(&bytes)
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    match read_nrrd(path)? {
        AnyVolume::Scalar(v) => Ok(v),
        AnyVolume::Label(_) => Err(bad("expected type 'float', found 'uint8'")),
    }
}

/// Reads a scalar volume and checks every voxel lies in `[0, 1]`.
pub fn read_likelihood(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    let v = read_scalar(path)?;
    v.check_likelihood()?;
    Ok(v)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    match read_nrrd(path)? {
        AnyVolume::Label(v) => Ok(v),
        AnyVolume::Scalar(_) => Err(bad("expected type 'uint8', found 'float'")),
    }
}
