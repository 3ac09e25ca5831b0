use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Users with fewer retained interactions than this are dropped: one
/// history item, one training target and the held-out target.
pub const MIN_SEQUENCE_LEN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
}

/// Densely indexed interaction log. Dense ids follow ascending raw ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionLog {
    records: Vec<Interaction>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
}

impl InteractionLog {
    /// Builds a log from raw `(user, item, timestamp)` triples.
    ///
    /// Users and items with fewer than `min_count` interactions in the raw
    /// log are removed in a single pass; afterwards users left with fewer
    /// than [`MIN_SEQUENCE_LEN`] interactions are removed too.
    pub fn from_raw(raw: &[(u64, u64, i64)], min_count: usize) -> Result<Self> {
        let mut user_count: HashMap<u64, usize> = HashMap::new();
        let mut item_count: HashMap<u64, usize> = HashMap::new();
        for &(u, i, _) in raw {
            *user_count.entry(u).or_default() += 1;
            *item_count.entry(i).or_default() += 1;
        }
        let kept: Vec<&(u64, u64, i64)> = raw
            .iter()
            .filter(|(u, i, _)| user_count[u] >= min_count && item_count[i] >= min_count)
            .collect();
        let mut per_user: BTreeMap<u64, usize> = BTreeMap::new();
        for (u, _, _) in &kept {
            *per_user.entry(*u).or_default() += 1;
        }
        let kept: Vec<&(u64, u64, i64)> = kept
            .into_iter()
            .filter(|(u, _, _)| per_user[u] >= MIN_SEQUENCE_LEN)
            .collect();
        if kept.is_empty() {
            return Err(Error::Data("no interactions survive filtering".into()));
        }

        let user_ids: Vec<u64> = {
            let mut v: Vec<u64> = kept.iter().map(|r| r.0).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let item_ids: Vec<u64> = {
            let mut v: Vec<u64> = kept.iter().map(|r| r.1).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let user_index: HashMap<u64, usize> = user_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let item_index: HashMap<u64, usize> = item_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let records = kept
            .into_iter()
            .map(|&(u, i, t)| Interaction {
                user: user_index[&u],
                item: item_index[&i],
                timestamp: t,
            })
            .collect();
        Ok(Self {
            records,
            user_ids,
            item_ids,
        })
    }

    /// Builds a log whose ids are already dense, without filtering.
    pub fn from_dense(records: Vec<Interaction>, num_users: usize, num_items: usize) -> Result<Self> {
        for r in &records {
            if r.user >= num_users {
                return Err(Error::Index { index: r.user, len: num_users });
            }
            if r.item >= num_items {
                return Err(Error::Index { index: r.item, len: num_items });
            }
        }
        Ok(Self {
            records,
            user_ids: (0..num_users as u64).collect(),
            item_ids: (0..num_items as u64).collect(),
        })
    }

    /// Records in file order.
    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Raw id of each dense user id.
    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    /// Raw id of each dense item id.
    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    /// Per-user `(item, timestamp)` lists sorted by timestamp; equal
    /// timestamps keep file order.
    pub fn sequences(&self) -> Vec<Vec<(usize, i64)>> {
        let mut seqs = vec![Vec::new(); self.num_users()];
        for r in &self.records {
            seqs[r.user].push((r.item, r.timestamp));
        }
        for s in &mut seqs {
            s.sort_by_key(|&(_, t)| t);
        }
        seqs
    }
}

/// Parses `user<TAB>item<TAB>timestamp` lines.
pub fn parse_interactions(text: &str, min_count: usize) -> Result<InteractionLog> {
    let mut raw = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let field = |k: usize, what: &str| {
            fields[k].trim().parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad {what} {:?}", fields[k]),
            })
        };
        let user = field(0, "user id")?;
        let item = field(1, "item id")?;
        let ts = field(2, "timestamp")?;
        if user < 0 || item < 0 {
            return Err(Error::Parse {
                line: line_no,
                msg: "ids must be non-negative".into(),
            });
        }
        raw.push((user as u64, item as u64, ts));
    }
    InteractionLog::from_raw(&raw, min_count)
}

pub fn load_interactions(path: impl AsRef<Path>, min_count: usize) -> Result<InteractionLog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, min_count)
}

/// Writes the log as TSV using raw ids.
pub fn write_interactions(path: impl AsRef<Path>, log: &InteractionLog) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(log.len() * 24);
    for r in log.records() {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            log.user_ids[r.user], log.item_ids[r.item], r.timestamp
        ));
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
