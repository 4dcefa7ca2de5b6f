//! Rating and trust files, holdout splits, per-entity means, and the
//! decentralized interaction tables.
//!
//! Each rating is stored next to a discretized deviation index: on the user
//! side the index is `⌈|r − E(v)|⌉` (deviation from the item's mean), on the
//! item side `⌈|r − E(u)|⌉` (deviation from the user's mean).

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{source_name}:{line}: rating out of range: {rating} not in [{min}, {max}]")]
    RatingOutOfRange {
        source_name: String,
        line: usize,
        rating: f64,
        min: f64,
        max: f64,
    },
    #[error("{source_name}:{line}: duplicate rating for user {user:?} item {item:?}")]
    DuplicatePair {
        source_name: String,
        line: usize,
        user: String,
        item: String,
    },
    #[error("invalid rating scale [{0}, {1}]")]
    InvalidScale(f64, f64),
    #[error("fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("need at least {needed} ratings, got {found}")]
    TooFewRatings { needed: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrain,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingRecord {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrustPair {
    pub source: usize,
    pub target: usize,
}

/// Closed rating interval `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 1.0, max: 5.0 }
    }
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self, DataError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(DataError::InvalidScale(min, max));
        }
        Ok(RatingScale { min, max })
    }

    /// Number of distinct deviation indices, `⌈max − min⌉ + 1`.
    pub fn levels(&self) -> usize {
        (self.max - self.min).ceil() as usize + 1
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.min && r <= self.max
    }
}

/// First-seen dense remapping of raw identifiers.
#[derive(Clone, Debug, Default)]
pub struct IdMap {
    dense: HashMap<String, usize>,
    raw: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, raw: &str) -> usize {
        if let Some(&id) = self.dense.get(raw) {
            return id;
        }
        let id = self.raw.len();
        self.dense.insert(raw.to_owned(), id);
        self.raw.push(raw.to_owned());
        id
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.dense.get(raw).copied()
    }

    pub fn raw(&self, id: usize) -> Option<&str> {
        self.raw.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct LoadedRatings {
    pub records: Vec<RatingRecord>,
    pub users: IdMap,
    pub items: IdMap,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedTrust {
    pub pairs: Vec<TrustPair>,
    pub self_loops: usize,
    pub unknown_users: usize,
    pub duplicates: usize,
}

/// Ratings, trust edges and entity counts of one dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub ratings: Vec<RatingRecord>,
    pub trust: Vec<TrustPair>,
    pub num_users: usize,
    pub num_items: usize,
    pub scale: RatingScale,
}

impl Dataset {
    pub fn scale_levels(&self) -> usize {
        self.scale.levels()
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split_whitespace().collect()))
        }
    })
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses `<user> <item> <rating>` lines.
pub fn parse_ratings(
    text: &str,
    scale: RatingScale,
    source_name: &str,
) -> Result<LoadedRatings, DataError> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (line, fields) in data_lines(text) {
        let parse_err = |message: String| DataError::Parse {
            source_name: source_name.to_owned(),
            line,
            message,
        };
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected `<user> <item> <rating>`, found {} fields",
                fields.len()
            )));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("invalid rating {:?}", fields[2])))?;
        if !scale.contains(rating) {
            return Err(DataError::RatingOutOfRange {
                source_name: source_name.to_owned(),
                line,
                rating,
                min: scale.min,
                max: scale.max,
            });
        }
        let user = users.intern(fields[0]);
        let item = items.intern(fields[1]);
        if !seen.insert((user, item)) {
            return Err(DataError::DuplicatePair {
                source_name: source_name.to_owned(),
                line,
                user: fields[0].to_owned(),
                item: fields[1].to_owned(),
            });
        }
        records.push(RatingRecord { user, item, rating });
    }
    Ok(LoadedRatings {
        records,
        users,
        items,
    })
}

pub fn load_ratings(path: &Path, scale: RatingScale) -> Result<LoadedRatings, DataError> {
    parse_ratings(&read_text(path)?, scale, &path.display().to_string())
}

/// Parses `<user> <user>` lines against the users known from the ratings.
///
/// Self-loops, pairs naming unknown users, and repeated pairs are dropped and
/// counted.
pub fn parse_trust(text: &str, users: &IdMap, source_name: &str) -> Result<LoadedTrust, DataError> {
    let mut out = LoadedTrust::default();
    let mut seen = HashSet::new();
    for (line, fields) in data_lines(text) {
        if fields.len() != 2 {
            return Err(DataError::Parse {
                source_name: source_name.to_owned(),
                line,
                message: format!(
                    "expected `<user> <user>`, found {} fields",
                    fields.len()
                ),
            });
        }
        if fields[0] == fields[1] {
            out.self_loops += 1;
            continue;
        }
        let (Some(source), Some(target)) = (users.get(fields[0]), users.get(fields[1])) else {
            out.unknown_users += 1;
            continue;
        };
        let pair = TrustPair { source, target };
        if seen.insert(pair) {
            out.pairs.push(pair);
        } else {
            out.duplicates += 1;
        }
    }
    if out.self_loops + out.unknown_users > 0 {
        log::warn!(
            "{source_name}: dropped {} self-loops and {} pairs with unknown users",
            out.self_loops,
            out.unknown_users
        );
    }
    Ok(out)
}

pub fn load_trust(path: &Path, users: &IdMap) -> Result<LoadedTrust, DataError> {
    parse_trust(&read_text(path)?, users, &path.display().to_string())
}

/// Uniform random holdout: `round(fraction · n)` records go to the second
/// part. Both parts keep the input order.
pub fn split(
    ratings: &[RatingRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<RatingRecord>, Vec<RatingRecord>), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    if ratings.len() < 2 {
        return Err(DataError::TooFewRatings {
            needed: 2,
            found: ratings.len(),
        });
    }
    let n_test = (test_fraction * ratings.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut is_test = vec![false; ratings.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, t) in ratings.iter().zip(is_test) {
        if t {
            test.push(*r);
        } else {
            train.push(*r);
        }
    }
    Ok((train, test))
}

/// Per-user, per-item and global mean training ratings.
///
/// Entities without training ratings have no entry and resolve to the global
/// mean on lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct Statistics {
    user_mean: Vec<Option<f64>>,
    item_mean: Vec<Option<f64>>,
    global_mean: f64,
}

// Sorting before summation makes the means independent of input order.
fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn grouped_means(keys_values: impl Iterator<Item = (usize, f64)>, n: usize) -> Vec<Option<f64>> {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (k, v) in keys_values {
        groups[k].push(v);
    }
    groups
        .into_iter()
        .map(|mut g| (!g.is_empty()).then(|| sorted_mean(&mut g)))
        .collect()
}

impl Statistics {
    pub fn compute(
        train: &[RatingRecord],
        num_users: usize,
        num_items: usize,
    ) -> Result<Self, DataError> {
        if train.is_empty() {
            return Err(DataError::EmptyTrain);
        }
        let num_users = num_users.max(train.iter().map(|r| r.user + 1).max().unwrap_or(0));
        let num_items = num_items.max(train.iter().map(|r| r.item + 1).max().unwrap_or(0));
        let mut all: Vec<f64> = train.iter().map(|r| r.rating).collect();
        Ok(Statistics {
            user_mean: grouped_means(train.iter().map(|r| (r.user, r.rating)), num_users),
            item_mean: grouped_means(train.iter().map(|r| (r.item, r.rating)), num_items),
            global_mean: sorted_mean(&mut all),
        })
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// `E(u)`, or the global mean for users without training ratings.
    pub fn user_mean(&self, user: usize) -> f64 {
        self.observed_user_mean(user).unwrap_or(self.global_mean)
    }

    pub fn item_mean(&self, item: usize) -> f64 {
        self.observed_item_mean(item).unwrap_or(self.global_mean)
    }

    pub fn observed_user_mean(&self, user: usize) -> Option<f64> {
        self.user_mean.get(user).copied().flatten()
    }

    pub fn observed_item_mean(&self, item: usize) -> Option<f64> {
        self.item_mean.get(item).copied().flatten()
    }

    pub fn is_cold_user(&self, user: usize) -> bool {
        self.observed_user_mean(user).is_none()
    }

    pub fn is_cold_item(&self, item: usize) -> bool {
        self.observed_item_mean(item).is_none()
    }
}

pub fn compute_statistics(train: &[RatingRecord]) -> Result<Statistics, DataError> {
    Statistics::compute(train, 0, 0)
}

/// `⌈|r − mean|⌉` clamped to `[0, levels − 1]`.
pub fn diff_index(rating: f64, mean: f64, levels: usize) -> usize {
    let d = (rating - mean).abs().ceil();
    // NaN casts to 0
    (d as usize).min(levels.saturating_sub(1))
}

/// User-side index: deviation of the rating from the item's mean.
pub fn user_diff_index(rating: f64, item_mean: f64, levels: usize) -> usize {
    diff_index(rating, item_mean, levels)
}

/// Item-side index: deviation of the rating from the user's mean.
pub fn item_diff_index(rating: f64, user_mean: f64, levels: usize) -> usize {
    diff_index(rating, user_mean, levels)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserInteraction {
    pub item: usize,
    pub diff: usize,
    pub rating: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItemInteraction {
    pub user: usize,
    pub diff: usize,
    pub rating: f64,
}

/// Adjacency of the decentralized user–item graph.
#[derive(Clone, Debug, Default)]
pub struct InteractionTables {
    by_user: Vec<Vec<UserInteraction>>,
    by_item: Vec<Vec<ItemInteraction>>,
    levels: usize,
}

impl InteractionTables {
    pub fn build(
        train: &[RatingRecord],
        stats: &Statistics,
        num_users: usize,
        num_items: usize,
        levels: usize,
    ) -> Self {
        let num_users = num_users.max(train.iter().map(|r| r.user + 1).max().unwrap_or(0));
        let num_items = num_items.max(train.iter().map(|r| r.item + 1).max().unwrap_or(0));
        let mut by_user = vec![Vec::new(); num_users];
        let mut by_item = vec![Vec::new(); num_items];
        for r in train {
            by_user[r.user].push(UserInteraction {
                item: r.item,
                diff: user_diff_index(r.rating, stats.item_mean(r.item), levels),
                rating: r.rating,
            });
            by_item[r.item].push(ItemInteraction {
                user: r.user,
                diff: item_diff_index(r.rating, stats.user_mean(r.user), levels),
                rating: r.rating,
            });
        }
        InteractionTables {
            by_user,
            by_item,
            levels,
        }
    }

    pub fn user(&self, user: usize) -> &[UserInteraction] {
        self.by_user.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn item(&self, item: usize) -> &[ItemInteraction] {
        self.by_item.get(item).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn num_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn num_items(&self) -> usize {
        self.by_item.len()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// The user's training ratings keyed by item.
    pub fn user_ratings(&self, user: usize) -> HashMap<usize, f64> {
        self.user(user).iter().map(|e| (e.item, e.rating)).collect()
    }
}

pub fn build_interaction_tables(
    train: &[RatingRecord],
    stats: &Statistics,
    levels: usize,
) -> InteractionTables {
    InteractionTables::build(train, stats, 0, 0, levels)
}
