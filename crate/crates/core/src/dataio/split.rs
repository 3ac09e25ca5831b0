use std::fs;
use std::path::Path;

use serde::Serialize;

use super::interactions::InteractionLog;
use crate::error::{Error, Result};

const SPLIT_MAGIC: &[u8; 4] = b"SPL1";
const MIN_USERS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Valid,
    Test,
}

impl Partition {
    fn tag(self) -> u8 {
        match self {
            Partition::Train => 0,
            Partition::Valid => 1,
            Partition::Test => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Partition::Train),
            1 => Ok(Partition::Valid),
            2 => Ok(Partition::Test),
            _ => Err(Error::Format(format!("unknown partition tag {t}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|&p| !(p > 0.0 && p.is_finite())) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be positive and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Users per partition for `m` users; the test partition absorbs rounding.
    pub fn counts(&self, m: usize) -> (usize, usize, usize) {
        let train = ((self.train * m as f64).round() as usize).min(m);
        let valid = ((self.valid * m as f64).round() as usize).min(m - train);
        (train, valid, m - train - valid)
    }
}

/// One user's chronologically ordered items.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserSequence {
    pub user: usize,
    pub items: Vec<usize>,
    pub partition: Partition,
}

impl UserSequence {
    /// The held-out final item.
    pub fn target(&self) -> usize {
        *self.items.last().expect("sequences are non-empty")
    }

    /// The latest `max_len` items before the target.
    pub fn history(&self, max_len: usize) -> &[usize] {
        let end = self.items.len() - 1;
        &self.items[end.saturating_sub(max_len)..end]
    }

    /// Next-item examples over every prefix: `(history, target)` with
    /// non-empty history of at most `max_len` items.
    pub fn prefix_examples(&self, max_len: usize) -> impl Iterator<Item = (&[usize], usize)> + '_ {
        (1..self.items.len()).map(move |t| (&self.items[t.saturating_sub(max_len)..t], self.items[t]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
}

/// Users in ascending order of their final timestamp, each tagged with a partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitDataset {
    num_items: usize,
    max_len: usize,
    users: Vec<UserSequence>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
}

/// Orders users by final timestamp (ties by dense user id) and assigns the
/// leading, middle and trailing blocks to train, valid and test.
pub fn chronological_split(log: &InteractionLog, ratios: SplitRatios, max_len: usize) -> Result<SplitDataset> {
    ratios.validate()?;
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let m = log.num_users();
    if m < MIN_USERS {
        return Err(Error::Split(format!("need at least {MIN_USERS} users, have {m}")));
    }
    let seqs = log.sequences();
    let mut order: Vec<usize> = (0..m).filter(|&u| !seqs[u].is_empty()).collect();
    if order.len() < MIN_USERS {
        return Err(Error::Split(format!("need at least {MIN_USERS} users with interactions")));
    }
    order.sort_by_key(|&u| (seqs[u].last().unwrap().1, u));
    let (n_train, n_valid, _) = ratios.counts(order.len());
    let users = order
        .iter()
        .enumerate()
        .map(|(pos, &u)| UserSequence {
            user: u,
            items: seqs[u].iter().map(|p| p.0).collect(),
            partition: if pos < n_train {
                Partition::Train
            } else if pos < n_train + n_valid {
                Partition::Valid
            } else {
                Partition::Test
            },
        })
        .collect();
    Ok(SplitDataset {
        num_items: log.num_items(),
        max_len,
        users,
        user_ids: log.user_ids().to_vec(),
        item_ids: log.item_ids().to_vec(),
    })
}

impl SplitDataset {
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn users(&self) -> &[UserSequence] {
        &self.users
    }

    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &UserSequence> + '_ {
        self.users.iter().filter(move |u| u.partition == p)
    }

    pub fn partition_len(&self, p: Partition) -> usize {
        self.partition(p).count()
    }

    /// Raw item id for each dense item id.
    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    /// All next-item examples drawn from training users, in user order.
    pub fn train_examples(&self) -> Vec<(Vec<usize>, usize)> {
        self.partition(Partition::Train)
            .flat_map(|u| u.prefix_examples(self.max_len).map(|(h, t)| (h.to_vec(), t)))
            .collect()
    }

    pub fn stats(&self) -> DatasetStats {
        let users = self.users.len();
        let interactions: usize = self.users.iter().map(|u| u.items.len()).sum();
        let density = if users == 0 || self.num_items == 0 {
            0.0
        } else {
            interactions as f64 / (users as f64 * self.num_items as f64)
        };
        DatasetStats {
            users,
            items: self.num_items,
            interactions,
            density,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SPLIT_MAGIC);
        for v in [self.num_items, self.max_len, self.users.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.user_ids.len() as u32).to_le_bytes());
        for &id in &self.item_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for &id in &self.user_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for u in &self.users {
            out.extend_from_slice(&(u.user as u32).to_le_bytes());
            out.push(u.partition.tag());
            out.extend_from_slice(&(u.items.len() as u32).to_le_bytes());
            for &i in &u.items {
                out.extend_from_slice(&(i as u32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != SPLIT_MAGIC {
            return Err(Error::Format("missing SPL1 magic".into()));
        }
        let num_items = r.u32()? as usize;
        let max_len = r.u32()? as usize;
        let n_users = r.u32()? as usize;
        let n_user_ids = r.u32()? as usize;
        let item_ids = (0..num_items).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let user_ids = (0..n_user_ids).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let mut users = Vec::with_capacity(n_users);
        for _ in 0..n_users {
            let user = r.u32()? as usize;
            let partition = Partition::from_tag(r.take(1)?[0])?;
            let len = r.u32()? as usize;
            let items = (0..len)
                .map(|_| {
                    let i = r.u32()? as usize;
                    if i >= num_items {
                        return Err(Error::Format(format!("item {i} outside catalog of {num_items}")));
                    }
                    Ok(i)
                })
                .collect::<Result<Vec<_>>>()?;
            if items.is_empty() || user >= n_user_ids {
                return Err(Error::Format("malformed user record".into()));
            }
            users.push(UserSequence { user, items, partition });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after split data".into()));
        }
        Ok(Self {
            num_items,
            max_len,
            users,
            user_ids,
            item_ids,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("split file truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
