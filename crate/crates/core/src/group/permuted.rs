//! Worlds that share states and symmetry group with the canonical world but
//! order the states differently along an axis.

use super::{GroupElement, GroupError, Result, WorldAction};
use crate::world::{Observation, WorldSpec, WorldState};
use itertools::Itertools;

/// `n * (N!) - 1`: the lower bound on distinct worlds consistent with the
/// same training set, with every axis holding `N` values.
pub fn count_permuted_worlds(grid_size: usize, factors: usize) -> Result<u128> {
    let overflow = GroupError::Overflow {
        n: grid_size,
        factors,
    };
    let fact = (1..=grid_size as u128).try_fold(1u128, |acc, k| acc.checked_mul(k));
    fact.and_then(|f| f.checked_mul(factors as u128))
        .and_then(|v| v.checked_sub(1))
        .ok_or(overflow)
}

/// Successor permutation of the cycle `order[0] -> order[1] -> ... -> order[0]`.
fn successor_of_cycle(order: &[usize]) -> Vec<usize> {
    let mut succ = vec![0; order.len()];
    for (i, &v) in order.iter().enumerate() {
        succ[v] = order[(i + 1) % order.len()];
    }
    succ
}

/// Every single `N`-cycle on `0..N`, canonical first, lazily.
fn cycles(n: usize) -> impl Iterator<Item = Vec<usize>> + Clone {
    (1..n).permutations(n - 1).map(move |rest| {
        let mut order = Vec::with_capacity(n);
        order.push(0);
        order.extend(rest);
        successor_of_cycle(&order)
    })
}

/// Up to `limit` non-canonical worlds whose axis successors are single
/// `N`-cycles: first those reordering only `x`, then only `y`, then both.
pub fn enumerate_permuted_worlds(grid_size: usize, limit: usize) -> Vec<WorldAction> {
    let n = grid_size;
    if n < 2 {
        return Vec::new();
    }
    let canonical: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let others = || cycles(n).skip(1);
    let x_only = others().map(|px| (px, canonical.clone()));
    let y_only = others().map(|py| (canonical.clone(), py));
    let both = others().cartesian_product(others());
    x_only
        .chain(y_only)
        .chain(both)
        .take(limit)
        .map(|(px, py)| WorldAction::new(px, py).expect("cycles are bijections"))
        .collect()
}

/// Observations of the orbit of the origin: `g . (0, 0)` for every `g` in
/// `Z_N x Z_N`, in group-element order.
pub fn sweep_observations(spec: &WorldSpec, world: &WorldAction) -> Vec<Observation> {
    let origin = WorldState { x: 0, y: 0 };
    GroupElement::elements(spec.grid_size())
        .map(|g| spec.render(world.act(&g, origin)))
        .collect()
}

/// Whether two worlds' sweeps produce the same multiset of observations,
/// compared bit for bit.
pub fn same_training_set(spec: &WorldSpec, a: &WorldAction, b: &WorldAction) -> bool {
    let key = |w: &WorldAction| {
        let mut v: Vec<Vec<u64>> = sweep_observations(spec, w)
            .iter()
            .map(Observation::bits)
            .collect();
        v.sort_unstable();
        v
    };
    key(a) == key(b)
}
