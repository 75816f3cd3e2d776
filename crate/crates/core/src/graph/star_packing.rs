//! Maximum vertex-disjoint `K_{1,k}` packings.
//!
//! A packing of `(p(n) + 1)`-stars lower-bounds the number of couples any
//! embedding into the Euclidean `n`-ball must get wrong, where `p(n)` is the
//! unit-distance packing number of the unit sphere.

use super::{Graph, GraphError};

/// Exhaustive search is used for non-forests up to this many vertices.
pub const EXACT_SEARCH_LIMIT: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StarPacking {
    pub count: usize,
    /// `false` when `count` is only a certified lower bound.
    pub exact: bool,
}

/// Unit-distance packing number `p(n)` of the unit sphere, where known.
pub fn sphere_packing_number(dim: usize) -> Option<usize> {
    match dim {
        2 => Some(5),
        _ => None,
    }
}

/// Maximum number of vertex-disjoint stars with `k` leaves.
///
/// Forests are solved exactly by dynamic programming at any size; other graphs
/// exactly by branch and bound when `|V| <= 40`, otherwise greedily with
/// `exact = false`.
pub fn max_disjoint_star_packing(g: &Graph, k: usize) -> Result<StarPacking, GraphError> {
    if k == 0 {
        return Err(GraphError::ZeroStar);
    }
    if g.is_forest() {
        return Ok(StarPacking {
            count: forest_dp(g, k),
            exact: true,
        });
    }
    if g.vertex_count() <= EXACT_SEARCH_LIMIT {
        let mut search = Search::new(g, k);
        search.run(0);
        return Ok(StarPacking {
            count: search.best,
            exact: true,
        });
    }
    Ok(StarPacking {
        count: greedy(g, k),
        exact: false,
    })
}

/// Sum of the `take` largest entries (all entries are `<= 0`); `None` when
/// fewer than `take` are available.
fn top_sum(diffs: &mut [i64], take: usize) -> Option<i64> {
    if diffs.len() < take {
        return None;
    }
    diffs.sort_unstable_by(|a, b| b.cmp(a));
    Some(diffs[..take].iter().sum())
}

fn forest_dp(g: &Graph, k: usize) -> usize {
    let n = g.vertex_count();
    // free[v]: best in subtree(v) with v uncovered (available as a leaf above).
    // best[v]: best in subtree(v).
    // center_up[v]: 1 + best in subtree(v) with v a center that still needs
    //               its parent as the k-th leaf.
    let mut free = vec![0i64; n];
    let mut best = vec![0i64; n];
    let mut center_up = vec![i64::MIN; n];
    let mut parent = vec![usize::MAX; n];
    let mut visited = vec![false; n];
    let mut total = 0i64;

    for root in 0..n {
        if visited[root] {
            continue;
        }
        let mut order = Vec::new();
        let mut stack = vec![root];
        visited[root] = true;
        while let Some(v) = stack.pop() {
            order.push(v);
            for &w in g.neighbors(v) {
                if !visited[w] {
                    visited[w] = true;
                    parent[w] = v;
                    stack.push(w);
                }
            }
        }
        for &v in order.iter().rev() {
            let children: Vec<usize> = g
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&c| parent[c] == v)
                .collect();
            let sum_best: i64 = children.iter().map(|&c| best[c]).sum();
            let mut diffs: Vec<i64> = children.iter().map(|&c| free[c] - best[c]).collect();

            free[v] = sum_best;
            let mut b = sum_best;
            if let Some(t) = top_sum(&mut diffs, k) {
                b = b.max(1 + sum_best + t);
            }
            for &c in &children {
                if center_up[c] != i64::MIN {
                    b = b.max(sum_best - best[c] + center_up[c]);
                }
            }
            best[v] = b;
            center_up[v] = match top_sum(&mut diffs, k - 1) {
                Some(t) => 1 + sum_best + t,
                None => i64::MIN,
            };
        }
        total += best[root];
    }
    total as usize
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Used,
    Excluded,
}

struct Search<'a> {
    g: &'a Graph,
    k: usize,
    status: Vec<Status>,
    free_count: usize,
    best: usize,
}

impl<'a> Search<'a> {
    fn new(g: &'a Graph, k: usize) -> Self {
        let n = g.vertex_count();
        Search {
            g,
            k,
            status: vec![Status::Free; n],
            free_count: n,
            best: greedy(g, k),
        }
    }

    fn set(&mut self, v: usize, s: Status) {
        if self.status[v] == Status::Free && s != Status::Free {
            self.free_count -= 1;
        } else if self.status[v] != Status::Free && s == Status::Free {
            self.free_count += 1;
        }
        self.status[v] = s;
    }

    fn free_neighbors(&self, v: usize, skip: usize) -> Vec<usize> {
        self.g
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&w| w != skip && self.status[w] == Status::Free)
            .collect()
    }

    fn run(&mut self, count: usize) {
        if count > self.best {
            self.best = count;
        }
        if count + self.free_count / (self.k + 1) <= self.best {
            return;
        }
        let Some(v) = self.status.iter().position(|&s| s == Status::Free) else {
            return;
        };

        // v as a center.
        let nbrs = self.free_neighbors(v, usize::MAX);
        if nbrs.len() >= self.k {
            self.set(v, Status::Used);
            self.with_subsets(&nbrs, self.k, count + 1);
            self.set(v, Status::Free);
        }
        // v as a leaf of a star centred at a free neighbour u.
        for u in nbrs {
            let others = self.free_neighbors(u, v);
            if others.len() + 1 >= self.k {
                self.set(v, Status::Used);
                self.set(u, Status::Used);
                self.with_subsets(&others, self.k - 1, count + 1);
                self.set(u, Status::Free);
                self.set(v, Status::Free);
            }
        }
        // v unused.
        self.set(v, Status::Excluded);
        self.run(count);
        self.set(v, Status::Free);
    }

    fn with_subsets(&mut self, pool: &[usize], take: usize, count: usize) {
        fn rec(s: &mut Search<'_>, pool: &[usize], start: usize, take: usize, count: usize) {
            if take == 0 {
                s.run(count);
                return;
            }
            for i in start..pool.len() {
                if pool.len() - i < take {
                    break;
                }
                s.set(pool[i], Status::Used);
                rec(s, pool, i + 1, take - 1, count);
                s.set(pool[i], Status::Free);
            }
        }
        rec(self, pool, 0, take, count);
    }
}

/// Greedy packing: highest free-degree centre first, lowest free-degree leaves.
fn greedy(g: &Graph, k: usize) -> usize {
    let n = g.vertex_count();
    let mut used = vec![false; n];
    let mut count = 0;
    loop {
        let free_deg =
            |v: usize, used: &[bool]| g.neighbors(v).iter().filter(|&&w| !used[w]).count();
        let center = (0..n)
            .filter(|&v| !used[v] && free_deg(v, &used) >= k)
            .max_by_key(|&v| (free_deg(v, &used), std::cmp::Reverse(v)));
        let Some(c) = center else { break };
        let mut leaves: Vec<usize> = g
            .neighbors(c)
            .iter()
            .copied()
            .filter(|&w| !used[w])
            .collect();
        leaves.sort_by_key(|&w| (free_deg(w, &used), w));
        used[c] = true;
        for &w in leaves.iter().take(k) {
            used[w] = true;
        }
        count += 1;
    }
    count
}
