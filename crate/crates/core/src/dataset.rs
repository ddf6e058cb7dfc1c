//! Rating ingestion and the sparse dual index over observed entries.
//!
//! Observed entries are stored twice in CSR form: user-major (the canonical
//! order, sorted by user then item) and item-major. Each item-major entry
//! also records its canonical position so per-entry buffers computed in
//! user-major order can be read back from the item side.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One observed `(user, item, rating)` entry with raw (uncompacted) ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
}

impl RatingTriple {
    pub fn new(user: u64, item: u64, rating: f64) -> Self {
        Self { user, item, rating }
    }
}

/// Field separator of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Separator {
    /// Detect from the first non-empty line: `::`, then tab, then comma.
    #[default]
    Auto,
    DoubleColon,
    Tab,
    Comma,
}

impl Separator {
    fn detect(line: &str) -> Separator {
        if line.contains("::") {
            Separator::DoubleColon
        } else if line.contains('\t') {
            Separator::Tab
        } else {
            Separator::Comma
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Separator::Auto => "auto",
            Separator::DoubleColon => "::",
            Separator::Tab => "\t",
            Separator::Comma => ",",
        }
    }
}

impl FromStr for Separator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Separator::Auto),
            "::" | "colons" | "dat" => Ok(Separator::DoubleColon),
            "\t" | "tab" | "tsv" => Ok(Separator::Tab),
            "," | "comma" | "csv" => Ok(Separator::Comma),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

impl fmt::Display for Separator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Separator::Auto => "auto",
            Separator::DoubleColon => "colons",
            Separator::Tab => "tab",
            Separator::Comma => "comma",
        };
        f.write_str(name)
    }
}

/// Parse separator-delimited ratings, one `user, item, rating[, ...]` per line.
///
/// Blank lines are skipped; line numbers in errors are 1-based over the raw
/// input. Fields past the third (timestamps) are ignored.
pub fn parse_ratings<R: Read>(source: R, sep: Separator) -> Result<Vec<RatingTriple>> {
    let reader = BufReader::new(source);
    let mut sep = sep;
    let mut triples = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::MalformedLine {
                line: line_no,
                reason: "not valid UTF-8".into(),
            },
            _ => Error::Io(e),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if sep == Separator::Auto {
            sep = Separator::detect(line);
        }
        triples.push(parse_line(line, sep, line_no)?);
    }

    if triples.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(triples)
}

fn parse_line(line: &str, sep: Separator, line_no: usize) -> Result<RatingTriple> {
    let mut fields = line.split(sep.as_str()).map(str::trim);
    let mut next_field = |name: &str| {
        fields.next().ok_or_else(|| Error::MalformedLine {
            line: line_no,
            reason: format!("missing {name} field"),
        })
    };
    let user = next_field("user")?;
    let item = next_field("item")?;
    let rating = next_field("rating")?;

    let parse_id = |s: &str, name: &str| {
        s.parse::<u64>().map_err(|_| Error::MalformedLine {
            line: line_no,
            reason: format!("{name} id '{s}' is not a non-negative integer"),
        })
    };
    let user = parse_id(user, "user")?;
    let item = parse_id(item, "item")?;
    let rating = rating
        .parse::<f64>()
        .ok()
        .filter(|r| r.is_finite())
        .ok_or(Error::InvalidRating { line: line_no })?;

    Ok(RatingTriple { user, item, rating })
}

/// Read and parse a ratings file from disk.
pub fn load_ratings(path: impl AsRef<Path>, sep: Separator) -> Result<Vec<RatingTriple>> {
    let file = File::open(path.as_ref())?;
    parse_ratings(file, sep)
}

/// Dense 0-based ids assigned in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    raw: Vec<u64>,
    lookup: HashMap<u64, usize>,
}

impl IdMap {
    fn intern(&mut self, raw: u64) -> usize {
        let next = self.raw.len();
        *self.lookup.entry(raw).or_insert_with(|| {
            self.raw.push(raw);
            next
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn dense(&self, raw: u64) -> Option<usize> {
        self.lookup.get(&raw).copied()
    }

    pub fn raw(&self, dense: usize) -> Option<u64> {
        self.raw.get(dense).copied()
    }
}

/// Dual user-major / item-major adjacency over observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionIndex {
    n_users: usize,
    n_items: usize,
    user_ptr: Vec<usize>,
    user_items: Vec<usize>,
    user_ratings: Vec<f64>,
    item_ptr: Vec<usize>,
    item_users: Vec<usize>,
    item_ratings: Vec<f64>,
    item_pos: Vec<usize>,
}

impl InteractionIndex {
    /// Build an index over `(user, item, rating)` entries in any order.
    ///
    /// Fails on out-of-range ids or a repeated `(user, item)` pair.
    pub fn from_entries(
        n_users: usize,
        n_items: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(u, i, _) in &entries {
            if u >= n_users {
                return Err(Error::IndexOutOfRange {
                    kind: "user",
                    index: u,
                    len: n_users,
                });
            }
            if i >= n_items {
                return Err(Error::IndexOutOfRange {
                    kind: "item",
                    index: i,
                    len: n_items,
                });
            }
        }
        entries.sort_unstable_by_key(|&(u, i, _)| (u, i));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::DuplicateEntry {
                user: w[0].0,
                item: w[0].1,
            });
        }

        let nnz = entries.len();
        let mut user_ptr = vec![0usize; n_users + 1];
        let mut item_ptr = vec![0usize; n_items + 1];
        for &(u, i, _) in &entries {
            user_ptr[u + 1] += 1;
            item_ptr[i + 1] += 1;
        }
        for u in 0..n_users {
            user_ptr[u + 1] += user_ptr[u];
        }
        for i in 0..n_items {
            item_ptr[i + 1] += item_ptr[i];
        }

        let user_items = entries.iter().map(|e| e.1).collect();
        let user_ratings = entries.iter().map(|e| e.2).collect();

        // Stable counting sort by item keeps users ascending within each item.
        let mut cursor = item_ptr[..n_items].to_vec();
        let mut item_users = vec![0usize; nnz];
        let mut item_ratings = vec![0.0f64; nnz];
        let mut item_pos = vec![0usize; nnz];
        for (pos, &(u, i, r)) in entries.iter().enumerate() {
            let slot = cursor[i];
            cursor[i] += 1;
            item_users[slot] = u;
            item_ratings[slot] = r;
            item_pos[slot] = pos;
        }

        Ok(Self {
            n_users,
            n_items,
            user_ptr,
            user_items,
            user_ratings,
            item_ptr,
            item_users,
            item_ratings,
            item_pos,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of observed entries, |K|.
    pub fn len(&self) -> usize {
        self.user_items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_items.is_empty()
    }

    /// Canonical positions of user `u`'s entries.
    pub fn user_range(&self, u: usize) -> std::ops::Range<usize> {
        self.user_ptr[u]..self.user_ptr[u + 1]
    }

    /// Items rated by `u` (ascending) and their ratings.
    pub fn user_row(&self, u: usize) -> (&[usize], &[f64]) {
        let r = self.user_range(u);
        (&self.user_items[r.clone()], &self.user_ratings[r])
    }

    /// Users who rated `i` (ascending), their ratings, and the canonical
    /// position of each entry.
    pub fn item_col(&self, i: usize) -> (&[usize], &[f64], &[usize]) {
        let r = self.item_ptr[i]..self.item_ptr[i + 1];
        (
            &self.item_users[r.clone()],
            &self.item_ratings[r.clone()],
            &self.item_pos[r],
        )
    }

    /// |K_u|
    pub fn user_degree(&self, u: usize) -> usize {
        self.user_ptr[u + 1] - self.user_ptr[u]
    }

    /// |K_i|
    pub fn item_degree(&self, i: usize) -> usize {
        self.item_ptr[i + 1] - self.item_ptr[i]
    }

    /// All entries in canonical (user-major) order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_users).flat_map(move |u| {
            let (items, ratings) = self.user_row(u);
            items.iter().zip(ratings).map(move |(&i, &r)| (u, i, r))
        })
    }

    /// All entries in item-major order.
    pub fn entries_by_item(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_items).flat_map(move |i| {
            let (users, ratings, _) = self.item_col(i);
            users.iter().zip(ratings).map(move |(&u, &r)| (u, i, r))
        })
    }
}

/// Output of [`compact_ids`].
#[derive(Debug, Clone)]
pub struct CompactedRatings {
    pub index: InteractionIndex,
    pub users: IdMap,
    pub items: IdMap,
    /// Number of `(user, item)` repeats collapsed (last occurrence kept).
    pub duplicate_count: usize,
}

/// Remap raw ids to dense indices (first-appearance order) and build the index.
pub fn compact_ids(triples: &[RatingTriple]) -> Result<CompactedRatings> {
    if triples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut slot_of: HashMap<(usize, usize), usize> = HashMap::with_capacity(triples.len());
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triples.len());
    let mut duplicate_count = 0;

    for t in triples {
        let u = users.intern(t.user);
        let i = items.intern(t.item);
        match slot_of.get(&(u, i)) {
            Some(&slot) => {
                entries[slot].2 = t.rating;
                duplicate_count += 1;
            }
            None => {
                slot_of.insert((u, i), entries.len());
                entries.push((u, i, t.rating));
            }
        }
    }
    if duplicate_count > 0 {
        log::warn!("collapsed {duplicate_count} duplicate (user, item) ratings, keeping the last");
    }

    let index = InteractionIndex::from_entries(users.len(), items.len(), entries)?;
    Ok(CompactedRatings {
        index,
        users,
        items,
        duplicate_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = Self {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|&x| !(x > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadRatios {
                train: self.train,
                validation: self.validation,
                test: self.test,
            });
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// Parses `"0.8,0.1,0.1"` or `"0.8/0.1/0.1"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split([',', '/'])
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad split ratios '{s}'")))?;
        match parts[..] {
            [t, v, e] => SplitRatios::new(t, v, e),
            _ => Err(Error::Config(format!(
                "split needs three ratios, got '{s}'"
            ))),
        }
    }
}

impl fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.train, self.validation, self.test)
    }
}

/// Train / validation / test partitions sharing one id space.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: InteractionIndex,
    pub validation: InteractionIndex,
    pub test: InteractionIndex,
    pub seed: u64,
}

impl DatasetSplit {
    /// Assemble a split from prebuilt partitions.
    pub fn from_parts(
        train: InteractionIndex,
        validation: InteractionIndex,
        test: InteractionIndex,
        seed: u64,
    ) -> Result<Self> {
        for part in [&validation, &test] {
            if part.n_users() != train.n_users() {
                return Err(Error::DimensionMismatch {
                    expected: train.n_users(),
                    found: part.n_users(),
                });
            }
            if part.n_items() != train.n_items() {
                return Err(Error::DimensionMismatch {
                    expected: train.n_items(),
                    found: part.n_items(),
                });
            }
        }
        Ok(Self {
            train,
            validation,
            test,
            seed,
        })
    }

    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }
}

/// Assign each observed entry to a partition by a seeded uniform draw.
///
/// Entries are visited in canonical order, so the assignment depends only on
/// the index contents, the ratios, and the seed.
pub fn split(index: &InteractionIndex, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_cut = ratios.train;
    let val_cut = ratios.train + ratios.validation;

    let mut parts: [Vec<(usize, usize, f64)>; 3] = Default::default();
    for entry in index.entries() {
        let x: f64 = rng.gen();
        let which = if x < train_cut {
            0
        } else if x < val_cut {
            1
        } else {
            2
        };
        parts[which].push(entry);
    }
    let [train, validation, test] = parts;
    let build = |e| InteractionIndex::from_entries(index.n_users(), index.n_items(), e);
    Ok(DatasetSplit {
        train: build(train)?,
        validation: build(validation)?,
        test: build(test)?,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Vec<RatingTriple>> {
        parse_ratings(s.as_bytes(), Separator::Auto)
    }

    #[test]
    fn parses_double_colon_lines() {
        let t = parse("1::10::5.0\n2::10::3.0").unwrap();
        assert_eq!(
            t,
            vec![RatingTriple::new(1, 10, 5.0), RatingTriple::new(2, 10, 3.0)]
        );
    }

    #[test]
    fn parses_tab_and_comma_with_timestamp() {
        let t = parse("196\t242\t3\t881250949\n186\t302\t3\t891717742\n").unwrap();
        assert_eq!(t[1], RatingTriple::new(186, 302, 3.0));
        let t = parse("1,2,4.5,99\n").unwrap();
        assert_eq!(t, vec![RatingTriple::new(1, 2, 4.5)]);
    }

    #[test]
    fn forced_separator_overrides_detection() {
        let err = parse_ratings("1::2::3".as_bytes(), Separator::Comma).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_distinguished() {
        assert!(matches!(parse(""), Err(Error::EmptyInput)));
        assert!(matches!(parse("\n  \n"), Err(Error::EmptyInput)));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        assert!(matches!(
            parse("1::x::5.0"),
            Err(Error::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse("1::2::3\n\n4::5"),
            Err(Error::MalformedLine { line: 3, .. })
        ));
    }

    #[test]
    fn non_numeric_rating_is_rejected() {
        assert!(matches!(
            parse("1::2::3\n1::3::good"),
            Err(Error::InvalidRating { line: 2 })
        ));
        assert!(matches!(
            parse("1::2::NaN"),
            Err(Error::InvalidRating { line: 1 })
        ));
    }

    #[test]
    fn compact_single_entry() {
        let c = compact_ids(&[RatingTriple::new(7, 9, 4.0)]).unwrap();
        assert_eq!(c.index.n_users(), 1);
        assert_eq!(c.index.n_items(), 1);
        assert_eq!(c.index.len(), 1);
        let (items, ratings) = c.index.user_row(0);
        assert_eq!(items, &[0]);
        assert_eq!(ratings, &[4.0]);
        assert_eq!(c.users.raw(0), Some(7));
        assert_eq!(c.items.dense(9), Some(0));
    }

    #[test]
    fn compact_keeps_last_duplicate() {
        let c = compact_ids(&[RatingTriple::new(7, 9, 4.0), RatingTriple::new(7, 9, 2.0)]).unwrap();
        assert_eq!(c.index.len(), 1);
        assert_eq!(c.index.user_row(0).1, &[2.0]);
        assert_eq!(c.duplicate_count, 1);
    }

    #[test]
    fn compact_builds_item_major_view() {
        let c = compact_ids(&[RatingTriple::new(3, 5, 1.0), RatingTriple::new(8, 5, 2.0)]).unwrap();
        let (users, ratings, pos) = c.index.item_col(0);
        assert_eq!(users, &[0, 1]);
        assert_eq!(ratings, &[1.0, 2.0]);
        assert_eq!(pos, &[0, 1]);
    }

    #[test]
    fn compact_uses_first_appearance_order() {
        let c = compact_ids(&[
            RatingTriple::new(50, 1, 1.0),
            RatingTriple::new(10, 2, 1.0),
            RatingTriple::new(50, 2, 1.0),
        ])
        .unwrap();
        assert_eq!(c.users.dense(50), Some(0));
        assert_eq!(c.users.dense(10), Some(1));
        assert_eq!(c.index.user_degree(0), 2);
        assert_eq!(c.index.item_degree(1), 2);
    }

    #[test]
    fn compact_rejects_empty() {
        assert!(matches!(compact_ids(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn from_entries_rejects_duplicates_and_range() {
        assert!(matches!(
            InteractionIndex::from_entries(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0)]),
            Err(Error::DuplicateEntry { user: 0, item: 1 })
        ));
        assert!(matches!(
            InteractionIndex::from_entries(2, 2, vec![(0, 2, 1.0)]),
            Err(Error::IndexOutOfRange { kind: "item", .. })
        ));
    }

    fn ten_entries() -> InteractionIndex {
        let entries = (0..10).map(|k| (k % 4, k / 4, k as f64)).collect();
        InteractionIndex::from_entries(4, 3, entries).unwrap()
    }

    #[test]
    fn split_conserves_entries() {
        let idx = ten_entries();
        let s = split(&idx, SplitRatios::default(), 42).unwrap();
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), 10);
    }

    #[test]
    fn split_is_deterministic() {
        let idx = ten_entries();
        let a = split(&idx, SplitRatios::default(), 42).unwrap();
        let b = split(&idx, SplitRatios::default(), 42).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let idx = ten_entries();
        let bad = SplitRatios {
            train: 0.5,
            validation: 0.5,
            test: 0.5,
        };
        assert!(matches!(split(&idx, bad, 1), Err(Error::BadRatios { .. })));
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
        assert!("0.8,0.1".parse::<SplitRatios>().is_err());
        assert_eq!(
            "0.7/0.2/0.1".parse::<SplitRatios>().unwrap(),
            SplitRatios::new(0.7, 0.2, 0.1).unwrap()
        );
    }
}
