//! Shared preprocessing: holdout splits and the training-side context
//! (statistics, interaction tables, relationship graph).

use crate::dataset::{
    split, DataError, InteractionTables, RatingRecord, RatingScale, Statistics, TrustPair,
};
use crate::social_graph::RelationshipGraph;
use crate::trainer::derive_seed;

const VALIDATION_STREAM: u64 = 0x7661_6c69_6461_7465;

/// Everything derived from training ratings that predictions depend on.
#[derive(Clone, Debug)]
pub struct Context {
    pub stats: Statistics,
    pub tables: InteractionTables,
    pub graph: RelationshipGraph,
    pub num_users: usize,
    pub num_items: usize,
    pub scale: RatingScale,
}

impl Context {
    pub fn build(
        train: &[RatingRecord],
        trust: &[TrustPair],
        num_users: usize,
        num_items: usize,
        scale: RatingScale,
        delta: f64,
    ) -> Result<Self, DataError> {
        let stats = Statistics::compute(train, num_users, num_items)?;
        let tables = InteractionTables::build(train, &stats, num_users, num_items, scale.levels());
        let graph = RelationshipGraph::build(&tables, trust, delta, num_users);
        Ok(Context {
            stats,
            tables,
            graph,
            num_users,
            num_items,
            scale,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<RatingRecord>,
    pub val: Vec<RatingRecord>,
    pub test: Vec<RatingRecord>,
}

/// Test holdout first, then a validation slice carved from the remainder.
/// A zero `val_fraction` leaves validation empty.
pub fn make_splits(
    ratings: &[RatingRecord],
    test_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<Splits, DataError> {
    let (rest, test) = split(ratings, test_fraction, seed)?;
    if val_fraction == 0.0 {
        return Ok(Splits {
            train: rest,
            val: Vec::new(),
            test,
        });
    }
    let (train, val) = split(&rest, val_fraction, derive_seed(seed, VALIDATION_STREAM, 0))?;
    Ok(Splits { train, val, test })
}
