//! User-item rating matrix and the data preparation around it.
//!
//! [`InteractionMatrix`] keeps the same entry set in two compressed layouts:
//! user rows for scoring and item columns for the trainers. A missing entry
//! means "not rated" and reads as 0.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evaluation::metrics::gain;
use crate::{Error, ItemSet, Result, SparseView};

/// Sparse `m x n` rating matrix with row and column access.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    num_users: usize,
    num_items: usize,
    row_ptr: Vec<usize>,
    row_items: Vec<usize>,
    row_values: Vec<f64>,
    col_ptr: Vec<usize>,
    col_users: Vec<usize>,
    col_values: Vec<f64>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
}

impl InteractionMatrix {
    /// Builds a matrix over internal indices. Duplicate `(user, item)` pairs
    /// keep the last occurrence. External ids default to the internal index.
    pub fn from_triplets(
        num_users: usize,
        num_items: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let user_ids = (0..num_users as u64).collect();
        let item_ids = (0..num_items as u64).collect();
        Self::with_ids(user_ids, item_ids, triplets)
    }

    /// Like [`InteractionMatrix::from_triplets`] with explicit external ids.
    pub fn with_ids(
        user_ids: Vec<u64>,
        item_ids: Vec<u64>,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let (num_users, num_items) = (user_ids.len(), item_ids.len());
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (u, i, r) in triplets {
            if u >= num_users || i >= num_items {
                return Err(Error::Dimension(format!(
                    "entry ({u}, {i}) outside {num_users}x{num_items}"
                )));
            }
            if !(r > 0.0 && r <= 5.0) {
                return Err(Error::InvalidArgument(format!(
                    "rating {r} at ({u}, {i}) outside (0, 5]"
                )));
            }
            entries.push((u, i, r));
        }
        // stable: the last duplicate stays last within its key
        entries.sort_by_key(|&(u, i, _)| (u, i));
        let mut dedup: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match dedup.last_mut() {
                Some(last) if (last.0, last.1) == (e.0, e.1) => *last = e,
                _ => dedup.push(e),
            }
        }

        let mut row_ptr = vec![0usize; num_users + 1];
        let mut col_ptr = vec![0usize; num_items + 1];
        for &(u, i, _) in &dedup {
            row_ptr[u + 1] += 1;
            col_ptr[i + 1] += 1;
        }
        for k in 0..num_users {
            row_ptr[k + 1] += row_ptr[k];
        }
        for k in 0..num_items {
            col_ptr[k + 1] += col_ptr[k];
        }
        let row_items = dedup.iter().map(|e| e.1).collect();
        let row_values = dedup.iter().map(|e| e.2).collect();

        let nnz = dedup.len();
        let mut col_users = vec![0usize; nnz];
        let mut col_values = vec![0.0; nnz];
        let mut next = col_ptr.clone();
        // rows are visited in ascending user order, so columns come out sorted
        for &(u, i, r) in &dedup {
            let slot = next[i];
            col_users[slot] = u;
            col_values[slot] = r;
            next[i] += 1;
        }

        Ok(InteractionMatrix {
            num_users,
            num_items,
            row_ptr,
            row_items,
            row_values,
            col_ptr,
            col_users,
            col_values,
            user_ids,
            item_ids,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.row_items.len()
    }

    /// Ratings of `user`, ascending by item.
    pub fn row(&self, user: usize) -> SparseView<'_> {
        let span = self.row_ptr[user]..self.row_ptr[user + 1];
        SparseView::new(&self.row_items[span.clone()], &self.row_values[span])
    }

    /// Ratings of `item`, ascending by user.
    pub fn col(&self, item: usize) -> SparseView<'_> {
        let span = self.col_ptr[item]..self.col_ptr[item + 1];
        SparseView::new(&self.col_users[span.clone()], &self.col_values[span])
    }

    pub fn get(&self, user: usize, item: usize) -> f64 {
        self.row(user).get(item)
    }

    pub fn item_count(&self, item: usize) -> usize {
        self.col_ptr[item + 1] - self.col_ptr[item]
    }

    /// `sum_u x_ui^2` for every item.
    pub fn col_sq_norms(&self) -> Vec<f64> {
        (0..self.num_items).map(|i| self.col(i).sq_norm()).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.row_values.iter().map(|v| v * v).sum()
    }

    /// All `(user, item, rating)` entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_users).flat_map(move |u| self.row(u).iter().map(move |(i, r)| (u, i, r)))
    }

    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn item_index(&self, external: u64) -> Option<usize> {
        self.item_ids.binary_search(&external).ok().or_else(|| {
            // ids are sorted when loaded from files, but not for hand-built matrices
            self.item_ids.iter().position(|&id| id == external)
        })
    }

    /// Restricts the matrix to `users` (in the given order); the item space
    /// and item indices are unchanged.
    pub fn select_users(&self, users: &[usize]) -> InteractionMatrix {
        let user_ids = users.iter().map(|&u| self.user_ids[u]).collect();
        let triplets = users
            .iter()
            .enumerate()
            .flat_map(|(new, &old)| self.row(old).iter().map(move |(i, r)| (new, i, r)));
        InteractionMatrix::with_ids(user_ids, self.item_ids.clone(), triplets)
            .expect("a row subset of a valid matrix is valid")
    }

    /// SHA-256 over dimensions, ids and entries; stable across platforms.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_users as u64).to_le_bytes());
        h.update((self.num_items as u64).to_le_bytes());
        for id in self.user_ids.iter().chain(&self.item_ids) {
            h.update(id.to_le_bytes());
        }
        for (u, i, r) in self.triplets() {
            h.update((u as u64).to_le_bytes());
            h.update((i as u64).to_le_bytes());
            h.update(r.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Layout of a ratings file: `userId,itemId,rating[,timestamp]` per line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingFormat {
    CsvHeader,
    CsvPlain,
}

impl RatingFormat {
    /// Guesses the format from the first line of a file.
    pub fn sniff(first_line: &str) -> RatingFormat {
        let first = first_line.split(',').next().unwrap_or("").trim();
        if first.parse::<u64>().is_ok() {
            RatingFormat::CsvPlain
        } else {
            RatingFormat::CsvHeader
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub duplicates: usize,
}

/// Parses a ratings stream into a matrix. Internal indices follow ascending
/// external ids. Blank lines and lines starting with `#` are skipped.
pub fn load_ratings<R: BufRead>(
    source: R,
    format: RatingFormat,
) -> Result<(InteractionMatrix, LoadStats)> {
    let mut raw: Vec<(u64, u64, f64)> = Vec::new();
    let mut stats = LoadStats::default();
    let mut skip_header = format == RatingFormat::CsvHeader;
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if skip_header {
            skip_header = false;
            continue;
        }
        stats.lines += 1;
        raw.push(parse_line(line, line_no)?);
    }

    let mut user_ids: Vec<u64> = raw.iter().map(|r| r.0).collect();
    let mut item_ids: Vec<u64> = raw.iter().map(|r| r.1).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    item_ids.sort_unstable();
    item_ids.dedup();
    let user_index: HashMap<u64, usize> = user_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let item_index: HashMap<u64, usize> = item_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();

    let total = raw.len();
    let matrix = InteractionMatrix::with_ids(
        user_ids,
        item_ids,
        raw.into_iter()
            .map(|(u, i, r)| (user_index[&u], item_index[&i], r)),
    )?;
    stats.duplicates = total - matrix.nnz();
    if stats.duplicates > 0 {
        log::info!("{} duplicate ratings replaced by later lines", stats.duplicates);
    }
    Ok((matrix, stats))
}

fn parse_line(line: &str, line_no: usize) -> Result<(u64, u64, f64)> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 3 || fields.len() > 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected 3 or 4 fields, found {}", fields.len()),
        });
    }
    let parse_id = |s: &str, what: &str| {
        s.parse::<u64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad {what} {s:?}"),
        })
    };
    let user = parse_id(fields[0], "user id")?;
    let item = parse_id(fields[1], "item id")?;
    let rating: f64 = fields[2].parse().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("bad rating {:?}", fields[2]),
    })?;
    if rating.is_nan() {
        return Err(Error::Parse {
            line: line_no,
            message: "rating is NaN".into(),
        });
    }
    if !(rating > 0.0 && rating <= 5.0) {
        return Err(Error::InvalidRating { line: line_no, rating });
    }
    Ok((user, item, rating))
}

/// Writes `internal_index,external_id` lines.
pub fn write_id_map<W: Write>(mut out: W, ids: &[u64]) -> Result<()> {
    writeln!(out, "internal_index,external_id")?;
    for (k, id) in ids.iter().enumerate() {
        writeln!(out, "{k},{id}")?;
    }
    Ok(())
}

/// Disjoint train/test partition of the users.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    /// Indices into the source matrix, ascending.
    pub train_users: Vec<usize>,
    pub test_users: Vec<usize>,
    /// Row `k` is source user `train_users[k]`.
    pub train: InteractionMatrix,
    /// Row `k` is source user `test_users[k]`.
    pub test: InteractionMatrix,
}

/// Number of test users for `m` users: `round_half_up(fraction * m)`.
pub fn test_user_count(num_users: usize, test_fraction: f64) -> usize {
    (test_fraction * num_users as f64 + 0.5).floor() as usize
}

/// Uniformly random user partition, reproducible from `seed`.
pub fn split_users(x: &InteractionMatrix, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let m = x.num_users();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {m} users")));
    }
    let n_test = test_user_count(m, test_fraction);
    if n_test == 0 || n_test >= m {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} of {m} users gives {n_test} test users"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_users = order[..n_test].to_vec();
    let mut train_users = order[n_test..].to_vec();
    test_users.sort_unstable();
    train_users.sort_unstable();
    Ok(DatasetSplit {
        train: x.select_users(&train_users),
        test: x.select_users(&test_users),
        train_users,
        test_users,
    })
}

/// Popular items covering a share of all ratings, and the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularitySplit {
    /// Most popular first.
    pub short_head: Vec<usize>,
    /// Ascending item index.
    pub long_tail: Vec<usize>,
    /// Fraction of all ratings that fall on short-head items.
    pub coverage: f64,
}

impl PopularitySplit {
    pub fn long_tail_set(&self, num_items: usize) -> ItemSet {
        ItemSet::from_items(num_items, self.long_tail.iter().copied())
    }
}

/// Item indices by rating count, descending; ties by ascending index.
pub fn popularity_order(x: &InteractionMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.num_items()).collect();
    order.sort_by(|&a, &b| x.item_count(b).cmp(&x.item_count(a)).then(a.cmp(&b)));
    order
}

/// Shortest popularity prefix whose rating count reaches `coverage` of all ratings.
pub fn short_head_split(x: &InteractionMatrix, coverage: f64) -> Result<PopularitySplit> {
    if x.nnz() == 0 {
        return Err(Error::InvalidArgument("no ratings".into()));
    }
    if !(0.0..=1.0).contains(&coverage) {
        return Err(Error::InvalidArgument(format!("coverage {coverage} not in [0, 1]")));
    }
    let total = x.nnz() as f64;
    let threshold = coverage * total;
    let order = popularity_order(x);
    let mut cumulative = 0usize;
    let mut head_len = 0;
    while head_len < order.len() && (cumulative as f64) < threshold {
        cumulative += x.item_count(order[head_len]);
        head_len += 1;
    }
    let short_head = order[..head_len].to_vec();
    let mut long_tail = order[head_len..].to_vec();
    long_tail.sort_unstable();
    Ok(PopularitySplit {
        short_head,
        long_tail,
        coverage: cumulative as f64 / total,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub count: usize,
    pub gain_sum: f64,
    /// Base-2 entropy of the item's rating-value histogram.
    pub entropy: f64,
}

pub fn item_stats(x: &InteractionMatrix) -> Vec<ItemStats> {
    (0..x.num_items())
        .map(|i| {
            let col = x.col(i);
            let count = col.nnz();
            let gain_sum = col.values().iter().map(|&r| gain(r)).sum();
            let mut histogram: Vec<(u64, usize)> = Vec::new();
            for &r in col.values() {
                match histogram.iter_mut().find(|(bits, _)| *bits == r.to_bits()) {
                    Some((_, c)) => *c += 1,
                    None => histogram.push((r.to_bits(), 1)),
                }
            }
            let entropy = histogram
                .iter()
                .map(|&(_, c)| {
                    let p = c as f64 / count as f64;
                    -p * p.log2()
                })
                .sum::<f64>()
                .max(0.0);
            ItemStats {
                count,
                gain_sum,
                entropy,
            }
        })
        .collect()
}
