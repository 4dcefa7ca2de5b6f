//! Model parameters and the forward computation.
//!
//! A rating prediction is the statistical benchmark `½(E(u) + E(v))` plus a
//! learned preference term. The preference term combines the user's own
//! preference rating with the `λ`-weighted preference ratings of the user's
//! social neighbors. Each preference rating comes from a small head applied
//! to the user offset `h_u` and the item offset `h_v`. The offsets are
//! attention-weighted aggregates of deviation-aware interaction encodings.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::dataset::{InteractionTables, Statistics};
use crate::diffcore::{DiffError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::social_graph::{LambdaWeights, RelationshipGraph};

/// Standard deviation of embedding-table initialization.
pub const EMBEDDING_INIT_STD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    /// Latent dimension `D`.
    pub dim: usize,
    /// Rows of each deviation embedding table.
    pub diff_levels: usize,
    pub attn_hidden: usize,
    pub mlp_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            dim: 64,
            diff_levels: 5,
            attn_hidden: 64,
            mlp_hidden: 64,
        }
    }
}

/// Two-layer interaction encoder `[2D → hidden → D]` with a ReLU between.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Scores `w2ᵀ · ReLU(W1 · [x ⊕ anchor] + b1) + b2`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionNet {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct Aggregator {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct Head {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub w: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct ModelParams {
    pub user_emb: ParamId,
    pub item_emb: ParamId,
    pub diff_user: ParamId,
    pub diff_item: ParamId,
    pub mlp_user: Mlp,
    pub mlp_item: Mlp,
    pub attn_user: AttentionNet,
    pub attn_item: AttentionNet,
    pub agg_user: Aggregator,
    pub agg_item: Aggregator,
    pub head: Head,
}

struct Init {
    rng: ChaCha8Rng,
    store: ParamStore,
}

impl Init {
    fn embedding(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let normal = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid std");
        let data = (0..rows * cols).map(|_| normal.sample(&mut self.rng)).collect();
        self.add(name, Tensor::new(vec![rows, cols], data))
    }

    /// Glorot-uniform `[rows × cols]`; a vector when `rows` is `None`.
    fn weight(&mut self, name: &str, rows: Option<usize>, cols: usize) -> ParamId {
        let fan_out = rows.unwrap_or(1);
        let bound = (6.0 / (cols + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
        let data: Vec<f64> = (0..fan_out * cols).map(|_| dist.sample(&mut self.rng)).collect();
        let shape = match rows {
            Some(r) => vec![r, cols],
            None => vec![cols],
        };
        self.add(name, Tensor::new(shape, data))
    }

    fn bias(&mut self, name: &str, shape: Vec<usize>) -> ParamId {
        self.add(name, Ok(Tensor::zeros(shape)))
    }

    fn add(&mut self, name: &str, t: Result<Tensor, DiffError>) -> ParamId {
        self.store
            .add(name, t.expect("consistent shape"))
            .expect("unique parameter name")
    }

    fn mlp(&mut self, prefix: &str, d: usize, hidden: usize) -> Mlp {
        Mlp {
            w1: self.weight(&format!("{prefix}.w1"), Some(hidden), 2 * d),
            b1: self.bias(&format!("{prefix}.b1"), vec![hidden]),
            w2: self.weight(&format!("{prefix}.w2"), Some(d), hidden),
            b2: self.bias(&format!("{prefix}.b2"), vec![d]),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize, hidden: usize) -> AttentionNet {
        AttentionNet {
            w1: self.weight(&format!("{prefix}.w1"), Some(hidden), 2 * d),
            b1: self.bias(&format!("{prefix}.b1"), vec![hidden]),
            w2: self.weight(&format!("{prefix}.w2"), None, hidden),
            b2: self.bias(&format!("{prefix}.b2"), vec![]),
        }
    }

    fn aggregator(&mut self, prefix: &str, d: usize) -> Aggregator {
        Aggregator {
            w: self.weight(&format!("{prefix}.w"), Some(d), d),
            b: self.bias(&format!("{prefix}.b"), vec![d]),
        }
    }
}

/// One social neighbor's contribution: its renormalized weight and the
/// (possibly truncated) interaction list its offset is computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct SocialNeighbor {
    pub user: usize,
    pub weight: f64,
    pub items: Vec<(usize, usize)>,
}

/// Neighborhood lists for one `(user, item)` prediction. Pairs are
/// `(entity, deviation index)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborSample {
    pub items_of_user: Vec<(usize, usize)>,
    pub users_of_item: Vec<(usize, usize)>,
    pub social: Vec<SocialNeighbor>,
}

impl NeighborSample {
    /// Complete lists with no truncation. The `(user, item)` edge itself is
    /// left out of both interaction lists.
    pub fn full(
        tables: &InteractionTables,
        graph: &RelationshipGraph,
        user: usize,
        item: usize,
    ) -> Self {
        let weights = LambdaWeights::from_neighbors(graph.neighbors(user));
        NeighborSample {
            items_of_user: user_items(tables, user, Some(item)),
            users_of_item: item_users(tables, item, Some(user)),
            social: weights
                .weights
                .into_iter()
                .map(|(k, weight)| SocialNeighbor {
                    user: k,
                    weight,
                    items: user_items(tables, k, None),
                })
                .collect(),
        }
    }
}

pub(crate) fn user_items(
    tables: &InteractionTables,
    user: usize,
    exclude_item: Option<usize>,
) -> Vec<(usize, usize)> {
    tables
        .user(user)
        .iter()
        .filter(|e| Some(e.item) != exclude_item)
        .map(|e| (e.item, e.diff))
        .collect()
}

pub(crate) fn item_users(
    tables: &InteractionTables,
    item: usize,
    exclude_user: Option<usize>,
) -> Vec<(usize, usize)> {
    tables
        .item(item)
        .iter()
        .filter(|e| Some(e.user) != exclude_user)
        .map(|e| (e.user, e.diff))
        .collect()
}

/// Trainable parameters plus the entity counts they were sized for.
#[derive(Clone, Debug)]
pub struct Model {
    pub dims: ModelDims,
    pub num_users: usize,
    pub num_items: usize,
    pub store: ParamStore,
    pub params: ModelParams,
}

impl Model {
    /// Embedding tables `~ N(0, 0.1²)`, weights Glorot-uniform, biases zero.
    pub fn new(dims: ModelDims, num_users: usize, num_items: usize, seed: u64) -> Self {
        let d = dims.dim;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            store: ParamStore::new(),
        };
        let user_emb = init.embedding("user_emb", num_users.max(1), d);
        let item_emb = init.embedding("item_emb", num_items.max(1), d);
        let diff_user = init.embedding("diff_user", dims.diff_levels, d);
        let diff_item = init.embedding("diff_item", dims.diff_levels, d);
        let mlp_user = init.mlp("mlp_user", d, dims.mlp_hidden);
        let mlp_item = init.mlp("mlp_item", d, dims.mlp_hidden);
        let attn_user = init.attention("attn_user", d, dims.attn_hidden);
        let attn_item = init.attention("attn_item", d, dims.attn_hidden);
        let agg_user = init.aggregator("agg_user", d);
        let agg_item = init.aggregator("agg_item", d);
        let head = Head {
            w1: init.weight("head.w1", Some(d), 2 * d),
            b1: init.bias("head.b1", vec![d]),
            w2: init.weight("head.w2", Some(d), d),
            b2: init.bias("head.b2", vec![d]),
            w: init.weight("head.w", None, d),
        };
        Model {
            dims,
            num_users,
            num_items,
            store: init.store,
            params: ModelParams {
                user_emb,
                item_emb,
                diff_user,
                diff_item,
                mlp_user,
                mlp_item,
                attn_user,
                attn_item,
                agg_user,
                agg_item,
                head,
            },
        }
    }

    /// Sets every parameter to zero.
    pub fn zero_params(&mut self) {
        for p in self.store.iter_mut() {
            p.value.fill(0.0);
        }
    }

    pub fn forward<'a>(&'a self) -> Forward<'a> {
        Forward {
            tape: Tape::new(&self.store),
            params: self.params,
        }
    }

    /// Rating prediction without gradient bookkeeping beyond one tape.
    pub fn predict(
        &self,
        stats: &Statistics,
        user: usize,
        item: usize,
        sample: &NeighborSample,
    ) -> Result<f64, DiffError> {
        let mut fwd = self.forward();
        let r = fwd.predict_rating(stats, user, item, sample)?;
        Ok(fwd.tape.scalar(r))
    }
}

/// A tape bound to a model's parameter layout.
pub struct Forward<'a> {
    pub tape: Tape<'a>,
    pub params: ModelParams,
}

impl<'a> Forward<'a> {
    pub fn new(tape: Tape<'a>, params: ModelParams) -> Self {
        Forward { tape, params }
    }

    fn mlp(&mut self, mlp: Mlp, x: Var) -> Result<Var, DiffError> {
        let t = &mut self.tape;
        let (w1, b1, w2, b2) = (t.param(mlp.w1), t.param(mlp.b1), t.param(mlp.w2), t.param(mlp.b2));
        let hidden = t.affine(w1, x, b1)?;
        let hidden = t.relu(hidden);
        t.affine(w2, hidden, b2)
    }

    /// `x = L_U(q_item ⊕ s_user[diff])`.
    pub fn encode_user_interaction(&mut self, item: usize, diff: usize) -> Result<Var, DiffError> {
        let q = self.tape.lookup(self.params.item_emb, item)?;
        let s = self.tape.lookup(self.params.diff_user, diff)?;
        let x = self.tape.concat(q, s)?;
        self.mlp(self.params.mlp_user, x)
    }

    /// `y = L_I(p_user ⊕ s_item[diff])`.
    pub fn encode_item_interaction(&mut self, user: usize, diff: usize) -> Result<Var, DiffError> {
        let p = self.tape.lookup(self.params.user_emb, user)?;
        let s = self.tape.lookup(self.params.diff_item, diff)?;
        let x = self.tape.concat(p, s)?;
        self.mlp(self.params.mlp_item, x)
    }

    /// Softmax-normalized attention of each encoding against `anchor`.
    pub fn attention_weights(
        &mut self,
        net: AttentionNet,
        encoded: &[Var],
        anchor: Var,
    ) -> Result<Vec<Var>, DiffError> {
        if encoded.is_empty() {
            return Err(DiffError::EmptyInput("attention_weights"));
        }
        let t = &mut self.tape;
        let (w1, b1, w2, b2) = (t.param(net.w1), t.param(net.b1), t.param(net.w2), t.param(net.b2));
        let scores = encoded
            .iter()
            .map(|&x| {
                let joined = t.concat(x, anchor)?;
                let hidden = t.affine(w1, joined, b1)?;
                let hidden = t.relu(hidden);
                let s = t.dot(w2, hidden)?;
                t.add(s, b2)
            })
            .collect::<Result<Vec<_>, _>>()?;
        t.softmax_over_set(&scores)
    }

    fn aggregate(
        &mut self,
        net: AttentionNet,
        agg: Aggregator,
        encoded: &[Var],
        anchor: (ParamId, usize),
    ) -> Result<Var, DiffError> {
        let w = self.tape.param(agg.w);
        let b = self.tape.param(agg.b);
        if encoded.is_empty() {
            // Empty neighborhoods aggregate to zero: `tanh(W·0 + b)`.
            return Ok(self.tape.tanh(b));
        }
        // ids outside the embedding tables only ever reach here with empty lists
        let anchor = self.tape.lookup(anchor.0, anchor.1)?;
        let weights = self.attention_weights(net, encoded, anchor)?;
        let pooled = self.tape.weighted_sum(&weights, encoded)?;
        let z = self.tape.affine(w, pooled, b)?;
        Ok(self.tape.tanh(z))
    }

    /// User offset `h_u` from the user's `(item, deviation)` list.
    pub fn user_offset(&mut self, user: usize, items: &[(usize, usize)]) -> Result<Var, DiffError> {
        let encoded = items
            .iter()
            .map(|&(item, diff)| self.encode_user_interaction(item, diff))
            .collect::<Result<Vec<_>, _>>()?;
        self.aggregate(self.params.attn_user, self.params.agg_user, &encoded, (self.params.user_emb, user))
    }

    /// Item offset `h_v` from the item's `(user, deviation)` list.
    pub fn item_offset(&mut self, item: usize, users: &[(usize, usize)]) -> Result<Var, DiffError> {
        let encoded = users
            .iter()
            .map(|&(user, diff)| self.encode_item_interaction(user, diff))
            .collect::<Result<Vec<_>, _>>()?;
        self.aggregate(self.params.attn_item, self.params.agg_item, &encoded, (self.params.item_emb, item))
    }

    /// `wᵀ tanh(W2 tanh(W1 [h_u ⊕ h_v] + b1) + b2)`.
    pub fn preference_rating(&mut self, h_user: Var, h_item: Var) -> Result<Var, DiffError> {
        let head = self.params.head;
        let t = &mut self.tape;
        let (w1, b1, w2, b2, w) = (
            t.param(head.w1),
            t.param(head.b1),
            t.param(head.w2),
            t.param(head.b2),
            t.param(head.w),
        );
        let joined = t.concat(h_user, h_item)?;
        let z1 = t.affine(w1, joined, b1)?;
        let z1 = t.tanh(z1);
        let z2 = t.affine(w2, z1, b2)?;
        let z2 = t.tanh(z2);
        t.dot(w, z2)
    }

    /// `Σ λ_k r^p_k` over the sampled neighbors; `None` when there are none.
    pub fn social_preference_term(
        &mut self,
        h_item: Var,
        social: &[SocialNeighbor],
    ) -> Result<Option<Var>, DiffError> {
        if social.is_empty() {
            return Ok(None);
        }
        let mut weights = Vec::with_capacity(social.len());
        let mut ratings = Vec::with_capacity(social.len());
        for n in social {
            let h_k = self.user_offset(n.user, &n.items)?;
            let r = self.preference_rating(h_k, h_item)?;
            ratings.push(self.tape.stack(&[r])?);
            weights.push(self.tape.constant_scalar(n.weight));
        }
        let total = self.tape.weighted_sum(&weights, &ratings)?;
        Ok(Some(self.tape.pick(total, 0)?))
    }

    /// `½(E(u) + E(v)) + f`, with `f = ½(r^p + social)` when the user has
    /// social neighbors and `f = r^p` otherwise.
    pub fn predict_rating(
        &mut self,
        stats: &Statistics,
        user: usize,
        item: usize,
        sample: &NeighborSample,
    ) -> Result<Var, DiffError> {
        let h_u = self.user_offset(user, &sample.items_of_user)?;
        let h_v = self.item_offset(item, &sample.users_of_item)?;
        let own = self.preference_rating(h_u, h_v)?;
        let f = match self.social_preference_term(h_v, &sample.social)? {
            Some(social) => {
                let both = self.tape.add(own, social)?;
                self.tape.scale(both, 0.5)
            }
            None => own,
        };
        let benchmark = 0.5 * (stats.user_mean(user) + stats.item_mean(item));
        Ok(self.tape.offset(f, benchmark))
    }

    /// `sigmoid(r̂)`.
    pub fn predict_ranking_score(
        &mut self,
        stats: &Statistics,
        user: usize,
        item: usize,
        sample: &NeighborSample,
    ) -> Result<Var, DiffError> {
        let r = self.predict_rating(stats, user, item, sample)?;
        Ok(self.tape.sigmoid(r))
    }
}
