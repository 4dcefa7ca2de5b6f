//! Straight-line reference forward pass. Works only from raw training
//! triples, raw trust pairs and parameter values fetched by name; shares no
//! code with the production path beyond reading the parameter store.

use std::collections::BTreeMap;

use gdsrec::dataset::{RatingRecord, TrustPair};
use gdsrec::diffcore::ParamStore;

pub struct Oracle<'a> {
    pub store: &'a ParamStore,
    pub train: &'a [RatingRecord],
    pub trust: &'a [TrustPair],
    pub delta: f64,
    pub levels: usize,
}

fn matvec(w: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), cols);
    w.chunks(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn relu(a: Vec<f64>) -> Vec<f64> {
    a.into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect()
}

fn tanh(a: Vec<f64>) -> Vec<f64> {
    a.into_iter().map(f64::tanh).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl<'a> Oracle<'a> {
    fn p(&self, name: &str) -> &[f64] {
        let id = self.store.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
        self.store.get(id).value.data()
    }

    fn cols(&self, name: &str) -> usize {
        let id = self.store.id(name).unwrap();
        *self.store.get(id).value.shape().last().unwrap()
    }

    fn row(&self, name: &str, i: usize) -> Vec<f64> {
        let c = self.cols(name);
        self.p(name)[i * c..(i + 1) * c].to_vec()
    }

    fn affine(&self, w: &str, b: &str, x: &[f64]) -> Vec<f64> {
        plus(&matvec(self.p(w), self.cols(w), x), self.p(b))
    }

    pub fn global_mean(&self) -> f64 {
        mean(&self.train.iter().map(|r| r.rating).collect::<Vec<_>>()).unwrap()
    }

    /// E(u), falling back to the global mean.
    pub fn user_mean(&self, u: usize) -> f64 {
        let rs: Vec<f64> = self.train.iter().filter(|r| r.user == u).map(|r| r.rating).collect();
        mean(&rs).unwrap_or_else(|| self.global_mean())
    }

    pub fn item_mean(&self, v: usize) -> f64 {
        let rs: Vec<f64> = self.train.iter().filter(|r| r.item == v).map(|r| r.rating).collect();
        mean(&rs).unwrap_or_else(|| self.global_mean())
    }

    fn deviation(&self, r: f64, e: f64) -> usize {
        ((r - e).abs().ceil() as usize).min(self.levels - 1)
    }

    /// T between two users: one plus co-rated items within δ.
    pub fn coefficient(&self, a: usize, b: usize) -> f64 {
        let mut agree = 0;
        for ra in self.train.iter().filter(|r| r.user == a) {
            for rb in self.train.iter().filter(|r| r.user == b && r.item == ra.item) {
                if (ra.rating - rb.rating).abs() <= self.delta {
                    agree += 1;
                }
            }
        }
        1.0 + agree as f64
    }

    /// x = L_U(q_v ⊕ s[r̄]) with r̄ = ⌈|r − E(v)|⌉.
    fn x(&self, item: usize, rating: f64) -> Vec<f64> {
        let d = self.deviation(rating, self.item_mean(item));
        let input = cat(&self.row("item_emb", item), &self.row("diff_user", d));
        let hidden = relu(self.affine("mlp_user.w1", "mlp_user.b1", &input));
        self.affine("mlp_user.w2", "mlp_user.b2", &hidden)
    }

    /// y = L_I(p_u ⊕ s[r̃]) with r̃ = ⌈|r − E(u)|⌉.
    fn y(&self, user: usize, rating: f64) -> Vec<f64> {
        let d = self.deviation(rating, self.user_mean(user));
        let input = cat(&self.row("user_emb", user), &self.row("diff_item", d));
        let hidden = relu(self.affine("mlp_item.w1", "mlp_item.b1", &input));
        self.affine("mlp_item.w2", "mlp_item.b2", &hidden)
    }

    /// softmax over w₂ᵀ ReLU(W₁[e ⊕ anchor] + b₁) + b₂.
    pub fn attention(&self, net: &str, encoded: &[Vec<f64>], anchor: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = encoded
            .iter()
            .map(|e| {
                let h = relu(self.affine(&format!("{net}.w1"), &format!("{net}.b1"), &cat(e, anchor)));
                dot(self.p(&format!("{net}.w2")), &h) + self.p(&format!("{net}.b2"))[0]
            })
            .collect();
        let exps: Vec<f64> = raw.iter().map(|s| s.exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|e| e / z).collect()
    }

    fn offset(&self, net: &str, agg: &str, encoded: &[Vec<f64>], anchor: &[f64]) -> Vec<f64> {
        let d = self.p(&format!("{agg}.b")).len();
        let mut pooled = vec![0.0; d];
        if !encoded.is_empty() {
            let eta = self.attention(net, encoded, anchor);
            for (w, e) in eta.iter().zip(encoded) {
                for (p, x) in pooled.iter_mut().zip(e) {
                    *p += w * x;
                }
            }
        }
        tanh(self.affine(&format!("{agg}.w"), &format!("{agg}.b"), &pooled))
    }

    /// h_u from R(u), leaving out `skip_item`.
    pub fn h_user(&self, u: usize, skip_item: Option<usize>) -> Vec<f64> {
        let xs: Vec<Vec<f64>> = self
            .train
            .iter()
            .filter(|r| r.user == u && Some(r.item) != skip_item)
            .map(|r| self.x(r.item, r.rating))
            .collect();
        let anchor = if xs.is_empty() { Vec::new() } else { self.row("user_emb", u) };
        self.offset("attn_user", "agg_user", &xs, &anchor)
    }

    /// h_v from R(v), leaving out `skip_user`.
    pub fn h_item(&self, v: usize, skip_user: Option<usize>) -> Vec<f64> {
        let ys: Vec<Vec<f64>> = self
            .train
            .iter()
            .filter(|r| r.item == v && Some(r.user) != skip_user)
            .map(|r| self.y(r.user, r.rating))
            .collect();
        let anchor = if ys.is_empty() { Vec::new() } else { self.row("item_emb", v) };
        self.offset("attn_item", "agg_item", &ys, &anchor)
    }

    /// z₁ = tanh(W₁[h_u ⊕ h_v] + b₁), z₂ = tanh(W₂z₁ + b₂), rᵖ = wᵀz₂.
    pub fn preference(&self, hu: &[f64], hv: &[f64]) -> f64 {
        let z1 = tanh(self.affine("head.w1", "head.b1", &cat(hu, hv)));
        let z2 = tanh(self.affine("head.w2", "head.b2", &z1));
        dot(self.p("head.w"), &z2)
    }

    /// λ_k = T_k / ΣT over the users `u` trusts.
    pub fn lambdas(&self, u: usize) -> BTreeMap<usize, f64> {
        let ts: BTreeMap<usize, f64> = self
            .trust
            .iter()
            .filter(|p| p.source == u)
            .map(|p| (p.target, self.coefficient(u, p.target)))
            .collect();
        let total: f64 = ts.values().sum();
        ts.into_iter().map(|(k, t)| (k, t / total)).collect()
    }

    /// r̂ = ½(E(u) + E(v)) + f, with the (u, v) rating itself hidden from
    /// both neighborhoods.
    pub fn predict(&self, u: usize, v: usize) -> f64 {
        let hv = self.h_item(v, Some(u));
        let own = self.preference(&self.h_user(u, Some(v)), &hv);
        let lambdas = self.lambdas(u);
        let f = if lambdas.is_empty() {
            own
        } else {
            let social: f64 = lambdas
                .iter()
                .map(|(&k, l)| l * self.preference(&self.h_user(k, None), &hv))
                .sum();
            0.5 * (own + social)
        };
        0.5 * (self.user_mean(u) + self.item_mean(v)) + f
    }

    /// L₁ = (1/2n) Σ (r̂ − r)² over `examples`.
    pub fn rating_loss(&self, examples: &[RatingRecord]) -> f64 {
        let n = examples.len() as f64;
        examples
            .iter()
            .map(|r| (self.predict(r.user, r.item) - r.rating).powi(2))
            .sum::<f64>()
            / (2.0 * n)
    }

    /// L₂ = −Σ [y log σ(r̂) + (1 − y) log(1 − σ(r̂))].
    pub fn ranking_loss(&self, examples: &[RatingRecord], threshold: f64) -> f64 {
        examples
            .iter()
            .map(|r| {
                let p = 1.0 / (1.0 + (-self.predict(r.user, r.item)).exp());
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                if r.rating >= threshold {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum()
    }
}
