//! The `DPT1` dense-map container.
//!
//! Layout: the ASCII magic `DPT1`, little-endian `u32` height, width and
//! channel count, a `u8` kind tag, then `H·W·C` little-endian `f32` values in
//! row-major, channel-last order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DPT1";
pub const HEADER_LEN: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapKind {
    Quaternion = 1,
    Direction = 2,
    Depth = 3,
    Scores = 4,
}

impl MapKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(MapKind::Quaternion),
            2 => Some(MapKind::Direction),
            3 => Some(MapKind::Depth),
            4 => Some(MapKind::Scores),
            _ => None,
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Quaternion => "quat",
            MapKind::Direction => "direction",
            MapKind::Depth => "depth",
            MapKind::Scores => "scores",
        }
    }

    /// Fixed channel count, or `None` for score maps (one per class plus background).
    pub fn channels(self) -> Option<u32> {
        match self {
            MapKind::Quaternion => Some(4),
            MapKind::Direction => Some(2),
            MapKind::Depth => Some(1),
            MapKind::Scores => None,
        }
    }
}

/// One decoded map.
#[derive(Clone, Debug, PartialEq)]
pub struct DptMap {
    pub kind: MapKind,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl DptMap {
    pub fn new(
        kind: MapKind,
        height: u32,
        width: u32,
        channels: u32,
        data: Vec<f32>,
    ) -> Result<Self> {
        let m = Self {
            kind,
            height,
            width,
            channels,
            data,
        };
        m.check_channels(Path::new("<memory>"))?;
        let want = m.value_count();
        if m.data.len() as u64 != want {
            return Err(Error::invalid(format!(
                "{} map {}x{}x{} needs {want} values, got {}",
                kind.name(),
                height,
                width,
                channels,
                m.data.len()
            )));
        }
        Ok(m)
    }

    fn value_count(&self) -> u64 {
        self.height as u64 * self.width as u64 * self.channels as u64
    }

    fn check_channels(&self, path: &Path) -> Result<()> {
        let ok = match self.kind.channels() {
            Some(c) => self.channels == c,
            None => self.channels >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ChannelMismatch {
                path: path.to_path_buf(),
                kind: self.kind.name(),
                expected: self.kind.channels().unwrap_or(1),
                found: self.channels,
            })
        }
    }
}

pub fn encode(map: &DptMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + map.data.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&map.height.to_le_bytes());
    out.extend_from_slice(&map.width.to_le_bytes());
    out.extend_from_slice(&map.channels.to_le_bytes());
    out.push(map.kind.tag());
    for v in &map.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a container; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<DptMap> {
    let truncated = |expected: u64| Error::Truncated {
        path: path.to_path_buf(),
        offset: bytes.len() as u64,
        expected,
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN as u64));
    }
    if bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN as u64));
    }
    let u32_at =
        |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let (height, width, channels) = (u32_at(4), u32_at(8), u32_at(12));
    let tag = bytes[16];
    let kind = MapKind::from_tag(tag).ok_or(Error::UnknownKind {
        path: path.to_path_buf(),
        tag,
    })?;
    let mut map = DptMap {
        kind,
        height,
        width,
        channels,
        data: Vec::new(),
    };
    map.check_channels(path)?;
    let expected = HEADER_LEN as u64 + map.value_count() * 4;
    let have = bytes.len() as u64;
    if have < expected {
        return Err(truncated(expected));
    }
    if have > expected {
        return Err(Error::TrailingData {
            path: path.to_path_buf(),
            extra: have - expected,
        });
    }
    map.data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(map)
}

pub fn write_dpt(path: &Path, map: &DptMap) -> Result<()> {
    fs::write(path, encode(map)).map_err(|e| Error::io(path, e))
}

pub fn read_dpt(path: &Path) -> Result<DptMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Reads a map and checks that it carries `kind`.
pub fn read_dpt_kind(path: &Path, kind: MapKind) -> Result<DptMap> {
    let map = read_dpt(path)?;
    if map.kind != kind {
        return Err(Error::KindMismatch {
            path: path.to_path_buf(),
            expected: kind.name(),
            found: map.kind.name(),
        });
    }
    Ok(map)
}
