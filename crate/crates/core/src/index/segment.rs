//! On-disk index segments.
//!
//! `lexical.seg`: a header line `MEO-LEXICAL <version> <doc count>` then one
//! JSON [`DocRecord`] per line. Postings are derived data and are rebuilt on
//! load.
//!
//! `vectors.seg`: magic `MEOVEC\0\0`, u32 version, u32 dimension, u64 count,
//! then per record a u32 id length, the id bytes and `dim` little-endian f32.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DocMeta;

pub const VERSION: u32 = 1;
const VEC_MAGIC: &[u8; 8] = b"MEOVEC\0\0";
const LEX_MAGIC: &str = "MEO-LEXICAL";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRecord {
    pub meta: DocMeta,
    pub text: String,
    pub native_fields: BTreeMap<String, String>,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(tmp, path)
}

pub fn write(dir: &Path, dim: usize, docs: &[DocRecord], vectors: &[(&String, &Vec<f32>)]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("lexical.seg"), |w| {
        writeln!(w, "{LEX_MAGIC} {VERSION} {}", docs.len())?;
        for d in docs {
            serde_json::to_writer(&mut *w, d)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    write_atomic(&dir.join("vectors.seg"), |w| {
        w.write_all(VEC_MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(dim as u32).to_le_bytes())?;
        w.write_all(&(vectors.len() as u64).to_le_bytes())?;
        for (id, v) in vectors {
            if v.len() != dim {
                return Err(bad(format!("vector for {id} has dimension {}", v.len())));
            }
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for x in v.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

#[allow(clippy::type_complexity)]
pub fn read(dir: &Path) -> io::Result<(usize, Vec<DocRecord>, Vec<(String, Vec<f32>)>)> {
    let mut lines = BufReader::new(File::open(dir.join("lexical.seg"))?).lines();
    let header = lines.next().ok_or_else(|| bad("empty lexical segment"))??;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 3 || parts[0] != LEX_MAGIC {
        return Err(bad("bad lexical segment header"));
    }
    if parts[1] != VERSION.to_string() {
        return Err(bad(format!("unsupported lexical segment version {}", parts[1])));
    }
    let count: usize = parts[2].parse().map_err(|_| bad("bad doc count"))?;
    let mut docs = Vec::with_capacity(count);
    for line in lines {
        let line = line?;
        if !line.is_empty() {
            docs.push(serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?);
        }
    }
    if docs.len() != count {
        return Err(bad(format!("lexical segment holds {} docs, header says {count}", docs.len())));
    }

    let mut r = BufReader::new(File::open(dir.join("vectors.seg"))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != VEC_MAGIC {
        return Err(bad("bad vector segment magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != VERSION {
        return Err(bad("unsupported vector segment version"));
    }
    r.read_exact(&mut u32buf)?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u64buf)?;
    let n = u64::from_le_bytes(u64buf) as usize;
    let mut vectors = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut u32buf)?;
        let mut id = vec![0u8; u32::from_le_bytes(u32buf) as usize];
        r.read_exact(&mut id)?;
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut u32buf)?;
            v.push(f32::from_le_bytes(u32buf));
        }
        vectors.push((String::from_utf8(id).map_err(|_| bad("non-utf8 post id"))?, v));
    }
    Ok((dim, docs, vectors))
}
