//! Weight archive: a flat named-array container.
//!
//! Layout (all little-endian):
//!   magic "MVGW", format version u16,
//!   architecture u8 (0 = resnet18, 1 = squeezenet),
//!   squeezenet version u8 (0 = n/a, 1 = v1.0, 2 = v1.1),
//!   flags u8 (bit 0 = pretrained), num_classes u32, entry count u32,
//!   then per entry: name_len u16, name bytes, dtype u8 (0 = f32),
//!   ndim u8, dims u32 each, raw f32 data.
//!
//! Entries are written in parameter-visitation order, so save -> load -> save
//! is byte-identical.

use super::{ArchitectureKind, ModelError, SqueezeNetVersion};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MVGW";
const FORMAT_VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone)]
pub struct ArchiveHeader {
    pub kind: ArchitectureKind,
    pub squeezenet_version: SqueezeNetVersion,
    pub pretrained: bool,
    pub num_classes: usize,
}

#[derive(Debug, Clone)]
pub struct ArchiveEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub struct Archive {
    pub header: ArchiveHeader,
    pub entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub fn by_name(&self) -> HashMap<&str, &ArchiveEntry> {
        self.entries.iter().map(|e| (e.name.as_str(), e)).collect()
    }
}

fn arch_code(kind: ArchitectureKind) -> u8 {
    match kind {
        ArchitectureKind::ResNet18 => 0,
        ArchitectureKind::SqueezeNet => 1,
    }
}

fn squeeze_code(kind: ArchitectureKind, v: SqueezeNetVersion) -> u8 {
    match (kind, v) {
        (ArchitectureKind::ResNet18, _) => 0,
        (ArchitectureKind::SqueezeNet, SqueezeNetVersion::V1_0) => 1,
        (ArchitectureKind::SqueezeNet, SqueezeNetVersion::V1_1) => 2,
    }
}

pub fn write_archive(
    path: &Path,
    header: &ArchiveHeader,
    entries: &[(String, Vec<usize>, Vec<f32>)],
) -> Result<(), ModelError> {
    let file = File::create(path).map_err(|e| ModelError::Io(path.to_path_buf(), e.to_string()))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| ModelError::Io(path.to_path_buf(), e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    w.write_u16::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
    w.write_u8(arch_code(header.kind)).map_err(io)?;
    w.write_u8(squeeze_code(header.kind, header.squeezenet_version)).map_err(io)?;
    w.write_u8(u8::from(header.pretrained)).map_err(io)?;
    w.write_u32::<LittleEndian>(header.num_classes as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(entries.len() as u32).map_err(io)?;
    for (name, shape, data) in entries {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "entry {name} shape/data mismatch");
        w.write_u16::<LittleEndian>(name.len() as u16).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_u8(DTYPE_F32).map_err(io)?;
        w.write_u8(shape.len() as u8).map_err(io)?;
        for &d in shape {
            w.write_u32::<LittleEndian>(d as u32).map_err(io)?;
        }
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for &v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_archive(path: &Path) -> Result<Archive, ModelError> {
    if !path.is_file() {
        return Err(ModelError::WeightsFileMissing(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| ModelError::Io(path.to_path_buf(), e.to_string()))?;
    let mut r = BufReader::new(file);
    let corrupt = |msg: &str| ModelError::ArchiveCorrupt(msg.to_string());
    let io = |e: std::io::Error| ModelError::ArchiveCorrupt(format!("truncated archive: {e}"));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if r.read_u16::<LittleEndian>().map_err(io)? != FORMAT_VERSION {
        return Err(corrupt("unsupported format version"));
    }
    let kind = match r.read_u8().map_err(io)? {
        0 => ArchitectureKind::ResNet18,
        1 => ArchitectureKind::SqueezeNet,
        _ => return Err(corrupt("unknown architecture code")),
    };
    let squeezenet_version = match r.read_u8().map_err(io)? {
        0 | 2 => SqueezeNetVersion::V1_1,
        1 => SqueezeNetVersion::V1_0,
        _ => return Err(corrupt("unknown squeezenet version code")),
    };
    let pretrained = r.read_u8().map_err(io)? & 1 == 1;
    let num_classes = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let entry_count = r.read_u32::<LittleEndian>().map_err(io)? as usize;

    let mut entries = Vec::with_capacity(entry_count);
    for _ in 0..entry_count {
        let name_len = r.read_u16::<LittleEndian>().map_err(io)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io)?;
        let name = String::from_utf8(name_bytes).map_err(|_| corrupt("non-utf8 entry name"))?;
        if r.read_u8().map_err(io)? != DTYPE_F32 {
            return Err(corrupt("unsupported dtype"));
        }
        let ndim = r.read_u8().map_err(io)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u32::<LittleEndian>().map_err(io)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 4];
        r.read_exact(&mut bytes).map_err(io)?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        entries.push(ArchiveEntry { name, shape, data });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(corrupt("trailing bytes after last entry"));
    }
    Ok(Archive {
        header: ArchiveHeader { kind, squeezenet_version, pretrained, num_classes },
        entries,
    })
}
