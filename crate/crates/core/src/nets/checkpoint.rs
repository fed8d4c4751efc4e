use super::{Adam, Mat, NetError, NetSpec, Param, ParamStore};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QBALCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters, auxiliary arrays (optimizer moments) and free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetSpec,
    pub params: ParamStore,
    pub extra: Vec<Param>,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec: NetSpec,
    params: Vec<Entry>,
    extra: Vec<Entry>,
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
}

fn entries(params: &[Param]) -> Vec<Entry> {
    params.iter().map(|p| Entry { name: p.name.clone(), rows: p.value.rows, cols: p.value.cols }).collect()
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut w: W) -> Result<(), NetError> {
    let header = Header {
        spec: ck.spec.clone(),
        params: entries(&ck.params.params),
        extra: entries(&ck.extra),
        meta: ck.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::new();
    for p in ck.params.params.iter().chain(&ck.extra) {
        buf.clear();
        for v in &p.value.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, NetError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NetError::Checkpoint("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(NetError::Incompatible(format!("format version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 26 {
        return Err(NetError::Checkpoint(format!("header of {len} bytes")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| NetError::Checkpoint(e.to_string()))?;

    let mut read_arrays = |list: &[Entry]| -> Result<Vec<Param>, NetError> {
        let mut out = Vec::with_capacity(list.len());
        for e in list {
            let n = e.rows.checked_mul(e.cols).filter(|n| *n < 1 << 28).ok_or_else(|| {
                NetError::Checkpoint(format!("array {} has implausible shape", e.name))
            })?;
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            out.push(Param { name: e.name.clone(), value: Mat { rows: e.rows, cols: e.cols, data } });
        }
        Ok(out)
    };
    let params = read_arrays(&header.params)?;
    let extra = read_arrays(&header.extra)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NetError::Checkpoint("trailing bytes".into()));
    }
    let mut store = ParamStore::new();
    for p in params {
        store.add(&p.name, p.value)?;
    }
    Ok(Checkpoint { spec: header.spec, params: store, extra, meta: header.meta })
}

/// Writes atomically through a sibling temporary file.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), NetError> {
    let tmp = path.with_extension("tmp");
    {
        let f = std::fs::File::create(&tmp)?;
        write_checkpoint(ck, std::io::BufWriter::new(f))?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NetError> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}

impl Adam {
    /// Moments as named arrays, plus a 1x1 step counter and learning rate.
    pub fn export(&self, prefix: &str, store: &ParamStore) -> Vec<Param> {
        let mut out = vec![
            Param { name: format!("{prefix}.t"), value: Mat::scalar(self.t as f64) },
            Param { name: format!("{prefix}.lr"), value: Mat::scalar(self.lr) },
        ];
        for (i, p) in store.params.iter().enumerate() {
            if let (Some(m), Some(v)) = (&self.m[i], &self.v[i]) {
                out.push(Param { name: format!("{prefix}.m.{}", p.name), value: m.clone() });
                out.push(Param { name: format!("{prefix}.v.{}", p.name), value: v.clone() });
            }
        }
        out
    }

    pub fn import(prefix: &str, store: &ParamStore, extra: &[Param]) -> Result<Self, NetError> {
        let find = |name: &str| extra.iter().find(|p| p.name == name).map(|p| &p.value);
        let scalar = |name: &str| {
            find(name).filter(|m| m.data.len() == 1).map(|m| m.data[0]).ok_or_else(|| NetError::Checkpoint(format!("missing {name}")))
        };
        let mut adam = Adam::new(scalar(&format!("{prefix}.lr"))?, store);
        adam.t = scalar(&format!("{prefix}.t"))? as u64;
        for (i, p) in store.params.iter().enumerate() {
            let m = find(&format!("{prefix}.m.{}", p.name));
            let v = find(&format!("{prefix}.v.{}", p.name));
            for mat in [m, v].into_iter().flatten() {
                p.value.same_shape(mat)?;
            }
            adam.m[i] = m.cloned();
            adam.v[i] = v.cloned();
        }
        Ok(adam)
    }
}
