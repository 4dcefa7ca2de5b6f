#![allow(dead_code)]

pub mod oracle;

use gdsrec::dataset::{RatingRecord, RatingScale, TrustPair};
use gdsrec::model::{Model, ModelDims};
use gdsrec::pipeline::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random dataset with a model whose every parameter, biases
/// included, is drawn uniformly so no term of the forward pass is trivially
/// zero.
pub struct Toy {
    pub train: Vec<RatingRecord>,
    pub trust: Vec<TrustPair>,
    pub num_users: usize,
    pub num_items: usize,
    pub delta: f64,
    pub ctx: Context,
    pub model: Model,
}

pub fn toy(seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_users = rng.random_range(2..=5);
    let num_items = rng.random_range(2..=5);
    let mut train = Vec::new();
    for u in 0..num_users {
        for v in 0..num_items {
            if rng.random_bool(0.6) {
                // half-point ratings exercise non-integer deviations
                let rating = rng.random_range(2..=10) as f64 / 2.0;
                train.push(RatingRecord { user: u, item: v, rating });
            }
        }
    }
    if train.is_empty() {
        train.push(RatingRecord { user: 0, item: 0, rating: 3.0 });
    }
    let mut trust = Vec::new();
    for a in 0..num_users {
        for b in 0..num_users {
            if a != b && rng.random_bool(0.4) {
                trust.push(TrustPair { source: a, target: b });
            }
        }
    }
    let delta = [0.0, 0.5, 1.0, 2.0][rng.random_range(0..4)];
    let dims = ModelDims {
        dim: rng.random_range(2..=6),
        diff_levels: 5,
        attn_hidden: rng.random_range(2..=6),
        mlp_hidden: rng.random_range(2..=6),
    };
    let scale = RatingScale::new(1.0, 5.0).unwrap();
    let ctx = Context::build(&train, &trust, num_users, num_items, scale, delta).unwrap();
    let mut model = Model::new(dims, num_users, num_items, seed);
    randomize(&mut model, &mut rng, 0.6);
    Toy {
        train,
        trust,
        num_users,
        num_items,
        delta,
        ctx,
        model,
    }
}

pub fn randomize(model: &mut Model, rng: &mut impl Rng, bound: f64) {
    for p in model.store.iter_mut() {
        for x in p.value.data_mut() {
            *x = rng.random_range(-bound..bound);
        }
    }
}

pub fn records(triples: &[(usize, usize, f64)]) -> Vec<RatingRecord> {
    triples
        .iter()
        .map(|&(user, item, rating)| RatingRecord { user, item, rating })
        .collect()
}

pub fn trust_pairs(pairs: &[(usize, usize)]) -> Vec<TrustPair> {
    pairs
        .iter()
        .map(|&(source, target)| TrustPair { source, target })
        .collect()
}

use gdsrec::diffcore::{finite_diff_check, DiffError, GradCheckReport, Tape, Var};
use gdsrec::model::{Forward, ModelParams, NeighborSample};
use gdsrec::trainer::{batch_loss, Task};

/// Runs `f` as a model forward pass recorded on a borrowed tape.
pub fn on_tape<'t>(
    tape: &mut Tape<'t>,
    params: ModelParams,
    f: impl FnOnce(&mut Forward<'t>) -> Result<Var, DiffError>,
) -> Result<Var, DiffError> {
    let store = tape.store();
    let mut fwd = Forward::new(std::mem::replace(tape, Tape::new(store)), params);
    let out = f(&mut fwd);
    *tape = fwd.tape;
    out
}

pub const RANKING_THRESHOLD: f64 = 4.0;

/// Finite-difference check of the training objective over all of a toy's
/// ratings, with complete (dropout-free) neighborhoods.
pub fn gradcheck_toy(toy: &mut Toy, task: Task, h: f64) -> GradCheckReport {
    let samples: Vec<NeighborSample> = toy
        .train
        .iter()
        .map(|r| NeighborSample::full(&toy.ctx.tables, &toy.ctx.graph, r.user, r.item))
        .collect();
    let params = toy.model.params;
    let (ctx, train) = (&toy.ctx, &toy.train);
    finite_diff_check(&mut toy.model.store, h, |tape| {
        on_tape(tape, params, |fwd| {
            batch_loss(fwd, ctx, train, &samples, task, RANKING_THRESHOLD)
        })
    })
    .unwrap()
}
