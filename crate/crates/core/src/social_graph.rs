//! Explicit social-connection strengths and neighbor influence weights.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::dataset::{InteractionTables, TrustPair};

/// Agreement threshold used when none is configured.
pub const DEFAULT_DELTA: f64 = 1.0;

/// `1 +` the number of co-rated items whose ratings differ by at most `delta`.
pub fn relationship_coefficient(
    ratings_a: &HashMap<usize, f64>,
    ratings_b: &HashMap<usize, f64>,
    delta: f64,
) -> u32 {
    let (small, large) = if ratings_a.len() <= ratings_b.len() {
        (ratings_a, ratings_b)
    } else {
        (ratings_b, ratings_a)
    };
    let agreeing = small
        .iter()
        .filter(|(item, r)| {
            large
                .get(item)
                .is_some_and(|other| (*r - other).abs() <= delta)
        })
        .count();
    1 + agreeing as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub user: usize,
    pub strength: u32,
}

/// Directed trust edges annotated with their relationship coefficient.
#[derive(Clone, Debug)]
pub struct RelationshipGraph {
    neighbors: Vec<Vec<Neighbor>>,
    delta: f64,
}

impl RelationshipGraph {
    /// Computes the coefficient of every trust pair from training ratings.
    /// User `source`'s list holds `target`.
    pub fn build(
        tables: &InteractionTables,
        trust: &[TrustPair],
        delta: f64,
        num_users: usize,
    ) -> Self {
        let num_users = trust
            .iter()
            .map(|p| p.source.max(p.target) + 1)
            .max()
            .unwrap_or(0)
            .max(num_users);
        let ratings: Vec<HashMap<usize, f64>> = (0..num_users)
            .into_par_iter()
            .map(|u| tables.user_ratings(u))
            .collect();
        let strengths: Vec<u32> = trust
            .par_iter()
            .map(|p| relationship_coefficient(&ratings[p.source], &ratings[p.target], delta))
            .collect();
        let mut neighbors = vec![Vec::new(); num_users];
        for (p, strength) in trust.iter().zip(strengths) {
            neighbors[p.source].push(Neighbor {
                user: p.target,
                strength,
            });
        }
        RelationshipGraph { neighbors, delta }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn num_users(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, user: usize) -> &[Neighbor] {
        self.neighbors.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(user, neighbor, strength)` for every stored edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |n| (u, n.user, n.strength)))
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

pub fn build_graph(
    tables: &InteractionTables,
    trust: &[TrustPair],
    delta: f64,
) -> RelationshipGraph {
    RelationshipGraph::build(tables, trust, delta, tables.num_users())
}

/// Neighbor weights `T_k / Σ T`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LambdaWeights {
    pub weights: Vec<(usize, f64)>,
}

impl LambdaWeights {
    pub fn from_neighbors(neighbors: &[Neighbor]) -> Self {
        let total: f64 = neighbors.iter().map(|n| n.strength as f64).sum();
        LambdaWeights {
            weights: neighbors
                .iter()
                .map(|n| (n.user, n.strength as f64 / total))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }
}

pub fn lambda_weights(graph: &RelationshipGraph, user: usize) -> LambdaWeights {
    LambdaWeights::from_neighbors(graph.neighbors(user))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_interaction_tables, compute_statistics, RatingRecord};
    use proptest::prelude::*;

    fn map(pairs: &[(usize, f64)]) -> HashMap<usize, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn coefficient_examples() {
        let (a, b, c) = (0, 1, 2);
        let ri = map(&[(a, 5.0), (b, 2.0)]);
        let rj = map(&[(a, 4.0), (c, 3.0)]);
        assert_eq!(relationship_coefficient(&ri, &rj, 1.0), 2);
        assert_eq!(relationship_coefficient(&ri, &map(&[(9, 1.0)]), 1.0), 1);
        let same = map(&[(0, 1.0), (1, 4.0), (2, 2.5)]);
        for delta in [0.0, 0.5, 3.0] {
            assert_eq!(relationship_coefficient(&same, &same, delta), 4);
        }
    }

    fn recs(list: &[(usize, usize, f64)]) -> Vec<RatingRecord> {
        list.iter()
            .map(|&(user, item, rating)| RatingRecord { user, item, rating })
            .collect()
    }

    fn tables_for(train: &[RatingRecord]) -> InteractionTables {
        let stats = compute_statistics(train).unwrap();
        build_interaction_tables(train, &stats, 5)
    }

    #[test]
    fn graph_examples() {
        let train = recs(&[(0, 0, 5.0), (1, 1, 3.0)]);
        let tables = tables_for(&train);
        let g = build_graph(&tables, &[TrustPair { source: 0, target: 1 }], 1.0);
        assert_eq!(g.neighbors(0), &[Neighbor { user: 1, strength: 1 }]);
        assert!(g.neighbors(1).is_empty());

        let train = recs(&[(0, 0, 5.0), (0, 1, 2.0), (1, 0, 4.0), (1, 1, 2.0), (1, 2, 1.0)]);
        let tables = tables_for(&train);
        let trust = [
            TrustPair { source: 0, target: 1 },
            TrustPair { source: 1, target: 0 },
        ];
        let g = build_graph(&tables, &trust, 1.0);
        assert_eq!(g.neighbors(0)[0].strength, 3);
        assert_eq!(g.neighbors(1)[0].strength, 3);

        let g = build_graph(&tables, &[], 1.0);
        assert_eq!(g.num_edges(), 0);
        assert!((0..2).all(|u| g.neighbors(u).is_empty()));
    }

    #[test]
    fn lambda_examples() {
        let w = LambdaWeights::from_neighbors(&[
            Neighbor { user: 3, strength: 2 },
            Neighbor { user: 5, strength: 3 },
        ]);
        assert_eq!(w.weights, vec![(3, 0.4), (5, 0.6)]);
        let w = LambdaWeights::from_neighbors(&[Neighbor { user: 1, strength: 7 }]);
        assert_eq!(w.weights, vec![(1, 1.0)]);
        assert!(LambdaWeights::from_neighbors(&[]).is_empty());
    }

    fn rating_map() -> impl Strategy<Value = HashMap<usize, f64>> {
        proptest::collection::hash_map(0usize..12, (1u8..=5).prop_map(f64::from), 0..10)
    }

    proptest! {
        #[test]
        fn coefficient_is_symmetric(a in rating_map(), b in rating_map(), delta in 0.0f64..4.0) {
            prop_assert_eq!(
                relationship_coefficient(&a, &b, delta),
                relationship_coefficient(&b, &a, delta)
            );
        }

        #[test]
        fn coefficient_is_monotone_in_delta(
            a in rating_map(), b in rating_map(), d1 in 0.0f64..4.0, extra in 0.0f64..4.0,
        ) {
            prop_assert!(
                relationship_coefficient(&a, &b, d1) <= relationship_coefficient(&a, &b, d1 + extra)
            );
        }

        #[test]
        fn lambda_normalizes(strengths in proptest::collection::vec(1u32..50, 1..20)) {
            let neighbors: Vec<_> = strengths
                .iter()
                .enumerate()
                .map(|(user, &strength)| Neighbor { user, strength })
                .collect();
            let w = LambdaWeights::from_neighbors(&neighbors);
            let total: f64 = w.weights.iter().map(|x| x.1).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(w.weights.iter().all(|x| x.1 > 0.0));
            let max_t = *strengths.iter().max().unwrap();
            let max_l = w.weights.iter().map(|x| x.1).fold(0.0, f64::max);
            for (n, (_, l)) in neighbors.iter().zip(&w.weights) {
                prop_assert_eq!(n.strength == max_t, *l == max_l);
            }
        }
    }
}
