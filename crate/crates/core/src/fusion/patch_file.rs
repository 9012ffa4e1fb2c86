//! Binary interchange format for window scores.
//!
//! Little-endian layout:
//!
//! ```text
//! header   magic "VSBP" | version u32 | classes u32 | patch size u32 | window count u32
//! record   origin x u32 | origin y u32 | origin z u32 | classes * size^3 f32
//! ```
//!
//! Score blocks are class-major, x-fastest within a class, matching
//! [`ScorePatch::scores`].

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::ScorePatch;
use crate::error::{Error, Result};

pub const PATCH_MAGIC: &[u8; 4] = b"VSBP";
pub const PATCH_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchFile {
    pub classes: usize,
    pub size: usize,
    pub patches: Vec<ScorePatch>,
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::argument(format!("{what} {v} does not fit in u32")))
}

pub fn write_to(mut w: impl Write, file: &PatchFile) -> std::io::Result<()> {
    w.write_all(PATCH_MAGIC)?;
    w.write_u32::<LittleEndian>(PATCH_VERSION)?;
    w.write_u32::<LittleEndian>(file.classes as u32)?;
    w.write_u32::<LittleEndian>(file.size as u32)?;
    w.write_u32::<LittleEndian>(file.patches.len() as u32)?;
    for p in &file.patches {
        for o in p.origin {
            w.write_u32::<LittleEndian>(o as u32)?;
        }
        for &s in &p.scores {
            w.write_f32::<LittleEndian>(s)?;
        }
    }
    w.flush()
}

pub fn read_from(mut r: impl Read) -> Result<PatchFile> {
    let fmt = |what: &str, e: std::io::Error| Error::format(format!("score patch file: {what}: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| fmt("magic", e))?;
    if &magic != PATCH_MAGIC {
        return Err(Error::format("score patch file: bad magic"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| fmt("version", e))?;
    if version != PATCH_VERSION {
        return Err(Error::Capability(format!("score patch file version {version}")));
    }
    let classes = r.read_u32::<LittleEndian>().map_err(|e| fmt("classes", e))? as usize;
    let size = r.read_u32::<LittleEndian>().map_err(|e| fmt("size", e))? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(|e| fmt("count", e))? as usize;
    if classes == 0 || size == 0 {
        return Err(Error::format("score patch file: zero classes or patch size"));
    }
    let block = classes
        .checked_mul(size.pow(3))
        .ok_or_else(|| Error::format("score patch file: block size overflow"))?;
    let mut patches = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let mut origin = [0usize; 3];
        for o in origin.iter_mut() {
            *o = r
                .read_u32::<LittleEndian>()
                .map_err(|e| fmt(&format!("record {i} origin"), e))? as usize;
        }
        let mut scores = vec![0f32; block];
        r.read_f32_into::<LittleEndian>(&mut scores)
            .map_err(|e| fmt(&format!("record {i} scores"), e))?;
        patches.push(ScorePatch::new(origin, classes, size, scores)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| fmt("trailer", e))? != 0 {
        return Err(Error::format("score patch file: trailing bytes after last record"));
    }
    Ok(PatchFile { classes, size, patches })
}

pub fn read_patches(path: impl AsRef<Path>) -> Result<PatchFile> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(BufReader::new(f))
}

/// Write patches sharing one class count and patch size.
pub fn write_patches(path: impl AsRef<Path>, classes: usize, size: usize, patches: &[ScorePatch]) -> Result<()> {
    let path = path.as_ref();
    to_u32(classes, "class count")?;
    to_u32(size, "patch size")?;
    to_u32(patches.len(), "window count")?;
    for p in patches {
        if p.classes != classes || p.size != size {
            return Err(Error::argument(format!(
                "window at {:?} has a different shape",
                p.origin
            )));
        }
        for o in p.origin {
            to_u32(o, "origin")?;
        }
    }
    let file = PatchFile {
        classes,
        size,
        patches: patches.to_vec(),
    };
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(BufWriter::new(f), &file).map_err(|e| Error::io(path, e))
}
