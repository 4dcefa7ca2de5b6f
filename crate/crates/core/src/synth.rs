//! Planted-community synthetic data.
//!
//! Every user belongs to one of `communities` groups. A rating is
//! `round(μ + b_u + b_v + a[c(u)][v] + noise)` clamped to the 1–5 scale,
//! where `a` is a per-community item affinity. Which pairs get rated is not
//! uniform: a cell is drawn with weight `exp(selection_strength · a[c(u)][v])`,
//! so users mostly rate what their community is drawn to. Trust edges only
//! connect members of the same community, so a user's neighbors share the
//! affinity that per-user and per-item means cannot explain.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const RATINGS_FILE: &str = "ratings.txt";
pub const TRUST_FILE: &str = "trust.txt";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub n_trust: usize,
    pub seed: u64,
    pub communities: usize,
    pub user_bias_std: f64,
    pub item_bias_std: f64,
    pub affinity_std: f64,
    pub noise_std: f64,
    /// 0 samples rated cells uniformly.
    pub selection_strength: f64,
}

impl SynthConfig {
    pub fn new(n_users: usize, n_items: usize, n_ratings: usize, n_trust: usize, seed: u64) -> Self {
        SynthConfig {
            n_users,
            n_items,
            n_ratings,
            n_trust,
            seed,
            communities: 4,
            user_bias_std: 0.4,
            item_bias_std: 0.4,
            affinity_std: 1.0,
            noise_std: 0.25,
            selection_strength: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    /// `(user, item, rating)` with integer ratings in 1..=5.
    pub ratings: Vec<(usize, usize, f64)>,
    /// Directed `(source, target)` trust edges.
    pub trust: Vec<(usize, usize)>,
    pub community: Vec<usize>,
}

const MEAN_RATING: f64 = 3.0;

pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    if !cfg.selection_strength.is_finite() {
        return Err(SynthError::Invalid("selection_strength must be finite".into()));
    }
    if cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_ratings == 0 || cfg.communities == 0 {
        return Err(SynthError::Invalid(
            "users, items, ratings and communities must be positive".into(),
        ));
    }
    let cells = cfg.n_users.checked_mul(cfg.n_items).unwrap_or(usize::MAX);
    if cfg.n_ratings > cells {
        return Err(SynthError::Invalid(format!(
            "{} ratings do not fit in a {}×{} matrix",
            cfg.n_ratings, cfg.n_users, cfg.n_items
        )));
    }
    let community: Vec<usize> = (0..cfg.n_users).map(|u| u % cfg.communities).collect();
    let mut members = vec![Vec::new(); cfg.communities];
    for (u, &c) in community.iter().enumerate() {
        members[c].push(u);
    }
    let trust_capacity: usize = members.iter().map(|m| m.len() * m.len().saturating_sub(1)).sum();
    if cfg.n_trust > trust_capacity {
        return Err(SynthError::Invalid(format!(
            "{} trust edges exceed the {trust_capacity} possible within communities",
            cfg.n_trust
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = |std: f64| Normal::new(0.0, std).map_err(|e| SynthError::Invalid(e.to_string()));
    let (ub, ib, aff, noise) = (
        normal(cfg.user_bias_std)?,
        normal(cfg.item_bias_std)?,
        normal(cfg.affinity_std)?,
        normal(cfg.noise_std)?,
    );
    let user_bias: Vec<f64> = (0..cfg.n_users).map(|_| ub.sample(&mut rng)).collect();
    let item_bias: Vec<f64> = (0..cfg.n_items).map(|_| ib.sample(&mut rng)).collect();
    let affinity: Vec<Vec<f64>> = (0..cfg.communities)
        .map(|_| (0..cfg.n_items).map(|_| aff.sample(&mut rng)).collect())
        .collect();

    let beta = cfg.selection_strength;
    let weight = |cell: usize| (beta * affinity[community[cell / cfg.n_items]][cell % cfg.n_items]).exp();
    let mut cells_picked = index::sample_weighted(&mut rng, cells, weight, cfg.n_ratings)
        .map_err(|e| SynthError::Invalid(e.to_string()))?
        .into_vec();
    cells_picked.sort_unstable();
    let ratings = cells_picked
        .into_iter()
        .map(|cell| {
            let (u, v) = (cell / cfg.n_items, cell % cfg.n_items);
            let raw = MEAN_RATING
                + user_bias[u]
                + item_bias[v]
                + affinity[community[u]][v]
                + noise.sample(&mut rng);
            (u, v, raw.round().clamp(1.0, 5.0))
        })
        .collect();

    let mut trust = Vec::with_capacity(cfg.n_trust);
    let mut seen = HashSet::new();
    let eligible: Vec<usize> = (0..cfg.n_users)
        .filter(|&u| members[community[u]].len() > 1)
        .collect();
    while trust.len() < cfg.n_trust {
        let u = eligible[rng.random_range(0..eligible.len())];
        let group = &members[community[u]];
        let v = group[rng.random_range(0..group.len())];
        if u != v && seen.insert((u, v)) {
            trust.push((u, v));
        }
    }
    Ok(SynthData {
        ratings,
        trust,
        community,
    })
}

/// Writes `ratings.txt` and `trust.txt` into `dir`.
pub fn write(data: &SynthData, dir: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(dir)?;
    let mut out = io::BufWriter::new(fs::File::create(dir.join(RATINGS_FILE))?);
    for (u, v, r) in &data.ratings {
        writeln!(out, "{u} {v} {r}")?;
    }
    out.flush()?;
    let mut out = io::BufWriter::new(fs::File::create(dir.join(TRUST_FILE))?);
    for (a, b) in &data.trust {
        writeln!(out, "{a} {b}")?;
    }
    out.flush()?;
    Ok(())
}
