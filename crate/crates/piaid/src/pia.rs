//! Alignment-set selection: interference cost metric and exact MaxPIA
//! optimization.
//!
//! Selecting which `α` interferers to align at each receiver is an α-factor
//! problem on the bipartite receiver/transmitter graph: pick edges `(k, i)`,
//! `k ≠ i`, so every receiver picks exactly `α` transmitters and every
//! transmitter is picked by exactly `α` receivers, maximizing the summed edge
//! costs. The constraint matrix of the LP relaxation is totally unimodular,
//! so the relaxation is integral; we attain that integral optimum directly
//! with a successive-shortest-path min-cost flow, leaving the diagonal edges
//! out entirely instead of penalizing them.
//!
//! The cost of edge `(k, i)` is the min/max ratio of the interfering receive
//! power `P_i L_ki` and the desired receive power `P_k L_kk` — the
//! asymptotically dominant term of the per-link SER, so maximizing the summed
//! cost of the aligned set minimizes the residual interference SER bound.

use crate::netgen::NetworkInstance;
use crate::RMat;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PiaError {
    #[error("alignment infeasible: floor((M+N)/D) - 2 = {0} is not positive")]
    InfeasibleAlignment(isize),
    #[error("degree {alpha} exceeds K-1 = {max}")]
    InfeasibleDegree { alpha: usize, max: usize },
    #[error("brute force supports K <= {max}, got K = {k}")]
    TooLarge { k: usize, max: usize },
}

/// Largest feasible alignment-set cardinality for the given antenna/stream
/// configuration: `min(floor((M+N)/D) - 2, K - 1)`.
///
/// The first term counts alignment equations against free transceiver
/// variables when every transmitter is aligned at equally many receivers; the
/// second is the trivial cap of aligning everyone else.
pub fn feasible_alpha(m: usize, n: usize, d: usize, k: usize) -> Result<usize, PiaError> {
    assert!(d >= 1 && d <= m.min(n), "streams must satisfy 1 <= D <= min(M,N)");
    let by_antennas = ((m + n) / d) as isize - 2;
    if by_antennas <= 0 {
        return Err(PiaError::InfeasibleAlignment(by_antennas));
    }
    Ok((by_antennas as usize).min(k.saturating_sub(1)))
}

/// Cost matrix of the selection problem.
///
/// Off-diagonal entries are power ratios in (0, 1]; diagonal entries carry
/// `-penalty` with `penalty = 1 + Σ|c_ki|`, large enough that no maximizer
/// ever uses a diagonal edge. The receive powers used to build the costs are
/// kept so residual interferers can be classified as strong or weak.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    /// K x K costs, `costs[(k, i)]` for receiver k / transmitter i.
    pub costs: RMat,
    /// Magnitude of the diagonal penalty.
    pub penalty: f64,
    /// Receive powers `rx_power[(k, i)] = P_i L_ki`, when known.
    rx_power: Option<RMat>,
}

impl CostMatrix {
    /// Build from raw off-diagonal costs; the diagonal is overwritten with the
    /// penalty. Residual classification data is absent, so selections built
    /// from this matrix treat every non-aligned interferer as weak.
    pub fn from_costs(mut costs: RMat) -> Self {
        assert_eq!(costs.nrows(), costs.ncols(), "cost matrix must be square");
        let penalty = 1.0 + off_diagonal_abs_sum(&costs);
        let k = costs.nrows();
        for u in 0..k {
            costs[(u, u)] = -penalty;
        }
        Self {
            costs,
            penalty,
            rx_power: None,
        }
    }

    /// Same as [`CostMatrix::from_costs`] but with receive powers attached so
    /// strong/weak residual sets can be derived.
    pub fn from_costs_with_rx_power(costs: RMat, rx_power: RMat) -> Self {
        assert_eq!(costs.nrows(), rx_power.nrows());
        assert_eq!(costs.ncols(), rx_power.ncols());
        let mut out = Self::from_costs(costs);
        out.rx_power = Some(rx_power);
        out
    }

    pub fn users(&self) -> usize {
        self.costs.nrows()
    }

    pub fn rx_power(&self) -> Option<&RMat> {
        self.rx_power.as_ref()
    }

    /// Summed cost of the aligned edges of `set`.
    pub fn objective_of(&self, set: &PiaSet) -> f64 {
        set.aligned
            .iter()
            .enumerate()
            .flat_map(|(k, a)| a.iter().map(move |&i| self.costs[(k, i)]))
            .sum()
    }
}

fn off_diagonal_abs_sum(costs: &RMat) -> f64 {
    let k = costs.nrows();
    let mut sum = 0.0;
    for r in 0..k {
        for c in 0..k {
            if r != c {
                sum += costs[(r, c)].abs();
            }
        }
    }
    sum
}

/// Interference cost metric: `c_ki` is the smaller of the two power ratios
/// between interferer and desired link, so both very strong and very weak
/// interferers (whose residual SER contribution is small) cost little to
/// leave unaligned.
pub fn build_cost_matrix(instance: &NetworkInstance) -> CostMatrix {
    let k = instance.config.users;
    let mut rx_power = RMat::zeros(k, k);
    for r in 0..k {
        for t in 0..k {
            rx_power[(r, t)] = instance.rx_power(r, t);
        }
    }
    let mut costs = RMat::zeros(k, k);
    for r in 0..k {
        let desired = rx_power[(r, r)];
        for t in 0..k {
            if r == t {
                continue;
            }
            let interf = rx_power[(r, t)];
            costs[(r, t)] = if interf >= desired {
                desired / interf
            } else {
                interf / desired
            };
        }
    }
    CostMatrix::from_costs_with_rx_power(costs, rx_power)
}

/// A partial interference alignment set plus its residual classification.
///
/// `aligned[k]` are the α transmitters nulled at receiver k; of the rest,
/// `strong[k]` are those received at least as strongly as the desired link
/// (detected in stage I) and `weak[k]` the remainder (treated as noise).
/// Together with `{k}` they partition the user set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiaSet {
    pub alpha: usize,
    pub aligned: Vec<Vec<usize>>,
    pub strong: Vec<Vec<usize>>,
    pub weak: Vec<Vec<usize>>,
}

impl PiaSet {
    /// Classify residual interferers of `aligned` using the receive powers in
    /// `costs` (everything residual is weak when powers are unknown).
    pub fn from_alignment(aligned: Vec<Vec<usize>>, alpha: usize, costs: &CostMatrix) -> Self {
        let k = aligned.len();
        let mut strong = vec![Vec::new(); k];
        let mut weak = vec![Vec::new(); k];
        for r in 0..k {
            debug_assert!(!aligned[r].contains(&r));
            for i in 0..k {
                if i == r || aligned[r].contains(&i) {
                    continue;
                }
                let is_strong = match &costs.rx_power {
                    Some(g) => g[(r, i)] >= g[(r, r)],
                    None => false,
                };
                if is_strong {
                    strong[r].push(i);
                } else {
                    weak[r].push(i);
                }
            }
        }
        Self {
            alpha,
            aligned,
            strong,
            weak,
        }
    }

    /// Circulant alignment set `A_k = {k+s, …, k+s+α−1} (mod K)` for shift
    /// `1 <= s <= K−α`; feasible for every `α <= K−1`.
    pub fn circulant(users: usize, alpha: usize, shift: usize, costs: &CostMatrix) -> Self {
        assert!(alpha < users, "circulant set needs alpha <= K-1");
        assert!(shift >= 1 && shift + alpha <= users, "shift out of range");
        let aligned = (0..users)
            .map(|k| {
                let mut a: Vec<usize> = (0..alpha).map(|j| (k + shift + j) % users).collect();
                a.sort_unstable();
                a
            })
            .collect();
        Self::from_alignment(aligned, alpha, costs)
    }
}

/// Full output of the selection solve, including the relaxed edge variables
/// for integrality checks.
#[derive(Debug, Clone)]
pub struct Selection {
    pub set: PiaSet,
    pub objective: f64,
    /// Edge variables `e_ki` of the solved relaxation.
    pub edge_values: RMat,
}

/// True iff every relaxed edge variable is within 1e-9 of {0, 1}.
pub fn verify_integrality(edge_values: &RMat) -> bool {
    edge_values
        .iter()
        .all(|&e| e.abs() <= 1e-9 || (e - 1.0).abs() <= 1e-9)
}

/// Solve the MaxPIA selection exactly. See [`solve_selection`].
pub fn select_pia_set(costs: &CostMatrix, alpha: usize) -> Result<PiaSet, PiaError> {
    solve_selection(costs, alpha).map(|s| s.set)
}

/// Solve the MaxPIA selection exactly via min-cost flow.
///
/// Maximizing `Σ c_ki e_ki` over α-factors equals minimizing
/// `Σ (c_max − c_ki) e_ki` because every feasible α-factor has exactly αK
/// edges; the shifted costs are non-negative, so successive shortest paths
/// with Dijkstra and node potentials apply directly. Unit middle-edge
/// capacities make the optimum integral, matching the integrality of the LP
/// relaxation. Ties are broken by the deterministic row-major edge order.
pub fn solve_selection(costs: &CostMatrix, alpha: usize) -> Result<Selection, PiaError> {
    let k = costs.users();
    if alpha > k.saturating_sub(1) {
        return Err(PiaError::InfeasibleDegree {
            alpha,
            max: k.saturating_sub(1),
        });
    }
    if alpha == 0 {
        let set = PiaSet::from_alignment(vec![Vec::new(); k], 0, costs);
        return Ok(Selection {
            objective: 0.0,
            set,
            edge_values: RMat::zeros(k, k),
        });
    }

    let c_max = (0..k)
        .flat_map(|r| (0..k).filter(move |&c| c != r).map(move |c| (r, c)))
        .map(|(r, c)| costs.costs[(r, c)])
        .fold(f64::NEG_INFINITY, f64::max);

    // Nodes: 0 = source, 1..=k receivers, k+1..=2k transmitters, 2k+1 = sink.
    let n_nodes = 2 * k + 2;
    let source = 0;
    let sink = 2 * k + 1;
    let mut graph = FlowGraph::new(n_nodes);
    for r in 0..k {
        graph.add_edge(source, 1 + r, alpha as i64, 0.0);
    }
    let mut middle_edges = vec![vec![usize::MAX; k]; k];
    for r in 0..k {
        for t in 0..k {
            if r == t {
                continue;
            }
            middle_edges[r][t] =
                graph.add_edge(1 + r, 1 + k + t, 1, c_max - costs.costs[(r, t)]);
        }
    }
    for t in 0..k {
        graph.add_edge(1 + k + t, sink, alpha as i64, 0.0);
    }

    let needed = (alpha * k) as i64;
    let sent = graph.min_cost_flow(source, sink, needed);
    debug_assert_eq!(sent, needed, "alpha-factor must exist for alpha <= K-1");

    let mut edge_values = RMat::zeros(k, k);
    let mut aligned = vec![Vec::new(); k];
    for r in 0..k {
        for t in 0..k {
            if r == t {
                continue;
            }
            let flow = graph.flow_on(middle_edges[r][t]);
            edge_values[(r, t)] = flow as f64;
            if flow > 0 {
                aligned[r].push(t);
            }
        }
    }
    let set = PiaSet::from_alignment(aligned, alpha, costs);
    let objective = costs.objective_of(&set);
    Ok(Selection {
        set,
        objective,
        edge_values,
    })
}

const BRUTE_FORCE_MAX_USERS: usize = 6;

/// Exact optimum by enumeration of all 0/1 edge matrices with zero diagonal
/// and all row and column sums equal to `alpha`. Exponential in K; the
/// independent oracle for [`solve_selection`].
pub fn brute_force_pia(costs: &CostMatrix, alpha: usize) -> Result<PiaSet, PiaError> {
    let k = costs.users();
    if k > BRUTE_FORCE_MAX_USERS {
        return Err(PiaError::TooLarge {
            k,
            max: BRUTE_FORCE_MAX_USERS,
        });
    }
    if alpha > k.saturating_sub(1) {
        return Err(PiaError::InfeasibleDegree {
            alpha,
            max: k.saturating_sub(1),
        });
    }

    // Candidate row masks in ascending (lexicographic) order.
    let row_masks: Vec<Vec<u32>> = (0..k)
        .map(|r| {
            (0u32..(1 << k))
                .filter(|m| m.count_ones() as usize == alpha && m & (1 << r) == 0)
                .collect()
        })
        .collect();

    struct Search<'a> {
        k: usize,
        costs: &'a RMat,
        row_masks: &'a [Vec<u32>],
        col_remaining: Vec<usize>,
        chosen: Vec<u32>,
        best: Option<(f64, Vec<u32>)>,
    }

    impl Search<'_> {
        fn run(&mut self, row: usize, partial: f64) {
            if row == self.k {
                if self.best.as_ref().map_or(true, |(b, _)| partial > *b) {
                    self.best = Some((partial, self.chosen.clone()));
                }
                return;
            }
            let rows_left = self.k - row - 1;
            'mask: for &mask in &self.row_masks[row] {
                let mut gain = 0.0;
                for t in 0..self.k {
                    if mask & (1 << t) != 0 {
                        if self.col_remaining[t] == 0 {
                            continue 'mask;
                        }
                        gain += self.costs[(row, t)];
                    }
                }
                for t in 0..self.k {
                    if mask & (1 << t) != 0 {
                        self.col_remaining[t] -= 1;
                    }
                }
                // Each remaining row can serve a transmitter at most once.
                if self.col_remaining.iter().all(|&rem| rem <= rows_left) {
                    self.chosen.push(mask);
                    self.run(row + 1, partial + gain);
                    self.chosen.pop();
                }
                for t in 0..self.k {
                    if mask & (1 << t) != 0 {
                        self.col_remaining[t] += 1;
                    }
                }
            }
        }
    }

    let mut search = Search {
        k,
        costs: &costs.costs,
        row_masks: &row_masks,
        col_remaining: vec![alpha; k],
        chosen: Vec::with_capacity(k),
        best: None,
    };
    search.run(0, 0.0);
    let (_, masks) = search.best.expect("alpha-factor exists for alpha <= K-1");
    let aligned = masks
        .iter()
        .map(|m| (0..k).filter(|t| m & (1 << t) != 0).collect())
        .collect();
    Ok(PiaSet::from_alignment(aligned, alpha, costs))
}

/// Exhaustive-search variant with the equal-transmitter-degree constraint
/// relaxed: each receiver independently keeps its α best off-diagonal costs.
/// With no coupling between rows this per-row maximization is exact.
pub fn brute_force_receiver_only(costs: &CostMatrix, alpha: usize) -> Result<PiaSet, PiaError> {
    let k = costs.users();
    if alpha > k.saturating_sub(1) {
        return Err(PiaError::InfeasibleDegree {
            alpha,
            max: k.saturating_sub(1),
        });
    }
    let aligned = (0..k)
        .map(|r| {
            let mut order: Vec<usize> = (0..k).filter(|&t| t != r).collect();
            order.sort_by(|&a, &b| {
                costs.costs[(r, b)]
                    .partial_cmp(&costs.costs[(r, a)])
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut a: Vec<usize> = order.into_iter().take(alpha).collect();
            a.sort_unstable();
            a
        })
        .collect();
    Ok(PiaSet::from_alignment(aligned, alpha, costs))
}

// ---------------------------------------------------------------------------
// Min-cost flow (successive shortest paths, Dijkstra with potentials)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct FlowEdge {
    to: usize,
    cap: i64,
    cost: f64,
    rev: usize,
}

#[derive(Debug)]
struct FlowGraph {
    adj: Vec<Vec<FlowEdge>>,
    /// (node, index into adj[node]) of each forward edge, in insertion order.
    edges: Vec<(usize, usize)>,
    original_cap: Vec<i64>,
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap by (dist, node); node index breaks ties deterministically.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            edges: Vec::new(),
            original_cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let fwd = self.adj[from].len();
        let bwd = self.adj[to].len();
        self.adj[from].push(FlowEdge {
            to,
            cap,
            cost,
            rev: bwd,
        });
        self.adj[to].push(FlowEdge {
            to: from,
            cap: 0,
            cost: -cost,
            rev: fwd,
        });
        self.edges.push((from, fwd));
        self.original_cap.push(cap);
        self.edges.len() - 1
    }

    fn flow_on(&self, edge_id: usize) -> i64 {
        let (node, idx) = self.edges[edge_id];
        self.original_cap[edge_id] - self.adj[node][idx].cap
    }

    /// Send up to `target` units; all edge costs must be non-negative.
    fn min_cost_flow(&mut self, source: usize, sink: usize, target: i64) -> i64 {
        let n = self.adj.len();
        let mut potential = vec![0.0f64; n];
        let mut sent = 0i64;
        while sent < target {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut done = vec![false; n];
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(HeapItem {
                dist: 0.0,
                node: source,
            });
            while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                if d > dist[u] {
                    continue;
                }
                for (ei, e) in self.adj[u].iter().enumerate() {
                    if e.cap <= 0 {
                        continue;
                    }
                    let nd = d + e.cost + potential[u] - potential[e.to];
                    if nd < dist[e.to] - 1e-15 {
                        dist[e.to] = nd;
                        prev[e.to] = Some((u, ei));
                        heap.push(HeapItem {
                            dist: nd,
                            node: e.to,
                        });
                    }
                }
            }
            if dist[sink].is_infinite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            // Bottleneck along the shortest path.
            let mut bottleneck = target - sent;
            let mut v = sink;
            while let Some((u, ei)) = prev[v] {
                bottleneck = bottleneck.min(self.adj[u][ei].cap);
                v = u;
            }
            let mut v = sink;
            while let Some((u, ei)) = prev[v] {
                let rev = self.adj[u][ei].rev;
                self.adj[u][ei].cap -= bottleneck;
                self.adj[v][rev].cap += bottleneck;
                v = u;
            }
            sent += bottleneck;
        }
        sent
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    fn random_costs(k: usize, rng: &mut impl Rng) -> CostMatrix {
        let mut m = RMat::zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                if r != c {
                    m[(r, c)] = rng.random::<f64>();
                }
            }
        }
        CostMatrix::from_costs(m)
    }

    fn degree_check(set: &PiaSet, k: usize, alpha: usize) {
        let mut col = vec![0usize; k];
        for (r, a) in set.aligned.iter().enumerate() {
            assert_eq!(a.len(), alpha, "receiver degree");
            assert!(!a.contains(&r), "diagonal excluded");
            for &t in a {
                col[t] += 1;
            }
        }
        assert!(col.iter().all(|&c| c == alpha), "transmitter degrees {col:?}");
    }

    fn partition_check(set: &PiaSet, k: usize) {
        for r in 0..k {
            let mut all: Vec<usize> = set.aligned[r]
                .iter()
                .chain(&set.strong[r])
                .chain(&set.weak[r])
                .copied()
                .collect();
            all.push(r);
            all.sort_unstable();
            let expect: Vec<usize> = (0..k).collect();
            assert_eq!(all, expect, "partition at receiver {r}");
        }
    }

    #[test]
    fn alpha_formula_matches_known_points() {
        assert_eq!(feasible_alpha(3, 2, 1, 5).unwrap(), 3);
        assert_eq!(feasible_alpha(2, 2, 1, 4).unwrap(), 2);
        assert_eq!(feasible_alpha(8, 8, 1, 3).unwrap(), 2); // capped by K-1
        assert!(matches!(
            feasible_alpha(1, 1, 1, 5),
            Err(PiaError::InfeasibleAlignment(0))
        ));
    }

    #[test]
    fn cost_metric_branches() {
        let cfg = crate::netgen::SystemConfig {
            users: 2,
            tx_antennas: 2,
            rx_antennas: 2,
            streams: 1,
            ..crate::netgen::SystemConfig::default_profile()
        };
        let mut inst = crate::netgen::generate_topology(&cfg, &mut cfg.rng());
        inst.tx_power = vec![1.0, 1.0];
        inst.path_gain[(0, 0)] = 1.0;
        inst.path_gain[(0, 1)] = 2.0; // strong: ratio 1/2
        inst.path_gain[(1, 1)] = 1.0;
        inst.path_gain[(1, 0)] = 0.25; // weak: ratio 1/4
        let costs = build_cost_matrix(&inst);
        assert!((costs.costs[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((costs.costs[(1, 0)] - 0.25).abs() < 1e-15);
        // Boundary: equal powers resolve to ratio 1 on either branch.
        inst.path_gain[(0, 1)] = 1.0;
        let costs = build_cost_matrix(&inst);
        assert_eq!(costs.costs[(0, 1)], 1.0);
        // Diagonal penalty dominates the off-diagonal mass.
        assert!(costs.penalty > 0.5 + 0.25);
        assert_eq!(costs.costs[(0, 0)], -costs.penalty);
    }

    #[test]
    fn crafted_cross_pair_costs_select_circulant_set() {
        // Cost 1 on the two circulant-next edges of each receiver, 0 elsewhere:
        // the unique maximizer is A_k = {k+1, k+2}.
        let k = 4;
        let mut m = RMat::zeros(k, k);
        for r in 0..k {
            m[(r, (r + 1) % k)] = 1.0;
            m[(r, (r + 2) % k)] = 1.0;
        }
        let costs = CostMatrix::from_costs(m);
        let sel = solve_selection(&costs, 2).unwrap();
        assert_eq!(
            sel.set.aligned,
            vec![vec![1, 2], vec![2, 3], vec![0, 3], vec![0, 1]]
        );
        assert!((sel.objective - 8.0).abs() < 1e-12);
        assert!(verify_integrality(&sel.edge_values));
        // Edge list view: [r1,t2],[r1,t3],[r2,t3],[r2,t4],[r3,t4],[r3,t1],[r4,t1],[r4,t2]
        let mut edges = Vec::new();
        for (r, a) in sel.set.aligned.iter().enumerate() {
            for &t in a {
                edges.push((r + 1, t + 1));
            }
        }
        assert_eq!(
            edges,
            vec![
                (1, 2),
                (1, 3),
                (2, 3),
                (2, 4),
                (3, 1),
                (3, 4),
                (4, 1),
                (4, 2)
            ]
        );
    }

    #[test]
    fn full_alpha_aligns_everyone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let costs = random_costs(5, &mut rng);
        let set = select_pia_set(&costs, 4).unwrap();
        for (r, a) in set.aligned.iter().enumerate() {
            let expect: Vec<usize> = (0..5).filter(|&t| t != r).collect();
            assert_eq!(a, &expect);
        }
    }

    #[test]
    fn selection_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let costs = random_costs(5, &mut rng);
            let sel = solve_selection(&costs, 3).unwrap();
            let brute = brute_force_pia(&costs, 3).unwrap();
            let brute_obj = costs.objective_of(&brute);
            assert!(
                (sel.objective - brute_obj).abs() <= 1e-9,
                "trial {trial}: flow {} vs brute {}",
                sel.objective,
                brute_obj
            );
            assert!(verify_integrality(&sel.edge_values));
            degree_check(&sel.set, 5, 3);
            degree_check(&brute, 5, 3);
        }
    }

    #[test]
    fn brute_force_three_user_single_factor() {
        // With zero diagonal, the only 1-factors of K=3 are the two 3-cycles.
        let mut m = RMat::zeros(3, 3);
        m[(0, 1)] = 5.0;
        m[(1, 2)] = 4.0;
        m[(2, 0)] = 3.0;
        m[(0, 2)] = 1.0;
        m[(2, 1)] = 1.0;
        m[(1, 0)] = 1.0;
        let costs = CostMatrix::from_costs(m);
        let set = brute_force_pia(&costs, 1).unwrap();
        assert_eq!(set.aligned, vec![vec![1], vec![2], vec![0]]);
        assert!((costs.objective_of(&set) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_symmetric_costs_objective() {
        let c = 0.3;
        let mut m = RMat::zeros(4, 4);
        for r in 0..4 {
            for t in 0..4 {
                if r != t {
                    m[(r, t)] = c;
                }
            }
        }
        let costs = CostMatrix::from_costs(m);
        let set = brute_force_pia(&costs, 2).unwrap();
        assert!((costs.objective_of(&set) - 8.0 * c).abs() < 1e-12);
        degree_check(&set, 4, 2);
    }

    #[test]
    fn brute_force_guards() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let costs = random_costs(7, &mut rng);
        assert!(matches!(
            brute_force_pia(&costs, 2),
            Err(PiaError::TooLarge { k: 7, .. })
        ));
        let costs = random_costs(4, &mut rng);
        assert!(matches!(
            brute_force_pia(&costs, 4),
            Err(PiaError::InfeasibleDegree { .. })
        ));
        assert!(matches!(
            solve_selection(&costs, 4),
            Err(PiaError::InfeasibleDegree { .. })
        ));
    }

    #[test]
    fn receiver_only_variant_upper_bounds_constrained_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let costs = random_costs(5, &mut rng);
            let constrained = solve_selection(&costs, 2).unwrap().objective;
            let relaxed = costs.objective_of(&brute_force_receiver_only(&costs, 2).unwrap());
            assert!(relaxed >= constrained - 1e-12);
        }
    }

    #[test]
    fn integrality_checker_cases() {
        let mut e = RMat::zeros(3, 3);
        e[(0, 1)] = 1.0;
        e[(1, 2)] = 1.0;
        e[(2, 0)] = 1.0;
        assert!(verify_integrality(&e));
        e[(0, 2)] = 0.5;
        assert!(!verify_integrality(&e));
    }

    #[test]
    fn circulant_sets_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let costs = random_costs(5, &mut rng);
        for shift in 1..=2 {
            let set = PiaSet::circulant(5, 3, shift, &costs);
            degree_check(&set, 5, 3);
            partition_check(&set, 5);
        }
    }

    #[test]
    fn strong_weak_classification_uses_power_boundary() {
        let cfg = crate::netgen::SystemConfig {
            users: 3,
            tx_antennas: 4,
            rx_antennas: 4,
            streams: 1,
            ..crate::netgen::SystemConfig::default_profile()
        };
        let mut inst = crate::netgen::generate_topology(&cfg, &mut cfg.rng());
        inst.tx_power = vec![1.0; 3];
        for r in 0..3 {
            for t in 0..3 {
                inst.path_gain[(r, t)] = 1.0;
            }
        }
        // Receiver 0: tx1 equal power (boundary -> strong), tx2 weaker -> weak.
        inst.path_gain[(0, 2)] = 0.5;
        let costs = build_cost_matrix(&inst);
        let set = PiaSet::from_alignment(vec![vec![], vec![], vec![]], 0, &costs);
        assert_eq!(set.strong[0], vec![1]);
        assert_eq!(set.weak[0], vec![2]);
        partition_check(&set, 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn selection_invariants_hold_on_random_costs(seed in 0u64..1_000_000, k in 3usize..6, alpha in 1usize..3) {
            let alpha = alpha.min(k - 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let costs = random_costs(k, &mut rng);
            let sel = solve_selection(&costs, alpha).unwrap();
            degree_check(&sel.set, k, alpha);
            partition_check(&sel.set, k);
            prop_assert!(verify_integrality(&sel.edge_values));
        }

        #[test]
        fn constant_shift_preserves_argmax(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_costs(5, &mut rng);
            let sel = solve_selection(&base, 2).unwrap();
            let mut shifted = base.costs.clone();
            for r in 0..5 {
                for c in 0..5 {
                    if r != c {
                        shifted[(r, c)] += 0.5;
                    }
                }
            }
            let sel2 = solve_selection(&CostMatrix::from_costs(shifted), 2).unwrap();
            prop_assert_eq!(sel.set.aligned, sel2.set.aligned);
        }
    }
}
