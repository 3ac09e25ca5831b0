use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::dataio::{read_emb1_record, write_emb1_record};
use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, ParamStore};
use crate::Scalar;

pub const CHECKPOINT_HEADER: &str = "SPECTRAN-CHECKPOINT 1";

/// Named tensors plus string metadata.
///
/// On disk: a text manifest (`meta key value`, `tensor name rows cols
/// offset`, terminated by `end`) followed by the tensors as concatenated
/// EMB1 records; offsets are relative to the first record.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, DenseMatrix<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Snapshot of every parameter in `store`, in registration order.
    pub fn from_store(store: &ParamStore<T>, meta: BTreeMap<String, String>) -> Self {
        let tensors = store
            .ids()
            .map(|id| (store.name(id).to_string(), store.value(id).clone()))
            .collect();
        Self { meta, tensors }
    }

    /// Copies tensors into same-named parameters; every parameter must be present.
    pub fn apply_to(&self, store: &mut ParamStore<T>) -> Result<()> {
        let by_name: BTreeMap<&str, &DenseMatrix<T>> = self.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let t = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))?;
            if t.shape() != store.value(id).shape() {
                return Err(Error::Config(format!(
                    "checkpoint {name} is {:?}, model expects {:?}",
                    t.shape(),
                    store.value(id).shape()
                )));
            }
            store.set(id, (*t).clone())?;
        }
        if self.tensors.len() != store.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, model has {} parameters",
                self.tensors.len(),
                store.len()
            )));
        }
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn tensor(&self, name: &str) -> Option<&DenseMatrix<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blobs = Vec::new();
        let mut manifest = format!("{CHECKPOINT_HEADER}\n");
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::Format(format!("unrepresentable meta entry {k:?}")));
            }
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::Format(format!("unrepresentable tensor name {name:?}")));
            }
            manifest.push_str(&format!("tensor {name} {} {} {}\n", t.rows(), t.cols(), blobs.len()));
            write_emb1_record(&mut blobs, t)?;
        }
        manifest.push_str("end\n");
        let mut out = manifest.into_bytes();
        out.extend_from_slice(&blobs);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let len = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Format("checkpoint manifest not terminated".into()))?;
            pos += len + 1;
            std::str::from_utf8(&rest[..len]).map_err(|_| Error::Format("manifest is not UTF-8".into()))
        };
        if next_line()? != CHECKPOINT_HEADER {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let mut meta = BTreeMap::new();
        let mut entries = Vec::new();
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            let mut parts = line.splitn(2, ' ');
            let kind = parts.next().unwrap_or("");
            let rest = parts.next().unwrap_or("");
            match kind {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad manifest line {line:?}")));
                    if f.len() != 4 {
                        return Err(Error::Format(format!("bad manifest line {line:?}")));
                    }
                    entries.push((f[0].to_string(), num(f[1])?, num(f[2])?, num(f[3])?));
                }
                _ => return Err(Error::Format(format!("unknown manifest entry {line:?}"))),
            }
        }
        let blobs = &bytes[pos..];
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, rows, cols, offset) in entries {
            let slice = blobs
                .get(offset..)
                .ok_or_else(|| Error::Format(format!("offset of {name} past end of file")))?;
            let (t, _) = read_emb1_record::<T>(slice)?;
            if t.shape() != (rows, cols) {
                return Err(Error::Format(format!(
                    "{name} manifest says {rows}x{cols}, payload is {:?}",
                    t.shape()
                )));
            }
            tensors.push((name, t));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
