//! Louvain community detection and assignment of communities to clients.
//!
//! The federation setup carves one global graph into per-client subgraphs:
//! Louvain finds communities, communities are dealt to clients by greedy
//! load balancing, and train/val/test tags are assigned on the global graph
//! beforehand so the test pool is well defined.

use rand::seq::SliceRandom;

use crate::graph::{GraphBundle, Split};
use crate::seeding::{self, Purpose};
use crate::{Error, Result};

/// Disjoint node sets covering all nodes, one per client.
#[derive(Debug, Clone)]
pub struct Partition {
    pub client_nodes: Vec<Vec<usize>>,
    /// community id → client id
    pub provenance: Vec<(usize, usize)>,
}

/// Train/val/test proportions. Must be positive and sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.2, val: 0.4, test: 0.4 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        if self.train <= 0.0 || self.val <= 0.0 || self.test <= 0.0 {
            return Err(Error::Config(format!(
                "split ratios must all be positive, got ({}, {}, {})",
                self.train, self.val, self.test
            )));
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

struct LevelGraph {
    n: usize,
    /// adjacency rows (neighbor, weight), no self entries
    adj: Vec<Vec<(usize, f64)>>,
    /// aggregated intra-community weight kept as a self-loop
    self_weight: Vec<f64>,
    /// weighted degree incl. twice the self-loop
    degree: Vec<f64>,
    /// total edge weight m (self-loops once)
    m: f64,
}

impl LevelGraph {
    fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        let mut self_weight = vec![0.0; n];
        let mut m = 0.0;
        for &(u, v, w) in edges {
            m += w;
            if u == v {
                self_weight[u] += w;
            } else {
                adj[u].push((v, w));
                adj[v].push((u, w));
            }
        }
        for row in &mut adj {
            row.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        }
        let degree = (0..n)
            .map(|i| adj[i].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self_weight[i])
            .collect();
        LevelGraph { n, adj, self_weight, degree, m }
    }

    /// One pass of greedy local moves. Returns the community of each node
    /// and whether anything moved.
    fn local_moves(&self, order: &[usize]) -> (Vec<usize>, bool) {
        let mut comm: Vec<usize> = (0..self.n).collect();
        let mut tot: Vec<f64> = self.degree.clone();
        let two_m = 2.0 * self.m;
        let mut any_move = false;
        let mut weight_to: Vec<f64> = vec![0.0; self.n];

        loop {
            let mut improved = false;
            for &v in order {
                let old = comm[v];
                tot[old] -= self.degree[v];

                // links from v into each neighboring community
                let mut touched: Vec<usize> = Vec::new();
                for &(u, w) in &self.adj[v] {
                    let c = comm[u];
                    if weight_to[c] == 0.0 {
                        touched.push(c);
                    }
                    weight_to[c] += w;
                }
                touched.sort_unstable();

                // strictly-better moves only; candidates visited in
                // ascending id order, so ties keep the lowest community
                let gain_of = |c: usize, link: f64| link - tot[c] * self.degree[v] / two_m;
                let mut best = old;
                let mut best_gain = gain_of(old, weight_to[old]);
                for &c in &touched {
                    if c == old {
                        continue;
                    }
                    let gain = gain_of(c, weight_to[c]);
                    if gain > best_gain + 1e-12 {
                        best = c;
                        best_gain = gain;
                    }
                }

                tot[best] += self.degree[v];
                if best != old {
                    comm[v] = best;
                    improved = true;
                    any_move = true;
                }
                for &c in &touched {
                    weight_to[c] = 0.0;
                }
                if weight_to[old] != 0.0 {
                    weight_to[old] = 0.0;
                }
            }
            if !improved {
                break;
            }
        }
        (comm, any_move)
    }

    /// Collapse communities into super-nodes.
    fn aggregate(&self, comm: &[usize]) -> (LevelGraph, Vec<usize>) {
        let mut relabel = vec![usize::MAX; self.n];
        let mut next = 0;
        for &c in comm {
            if relabel[c] == usize::MAX {
                relabel[c] = next;
                next += 1;
            }
        }
        let dense: Vec<usize> = comm.iter().map(|&c| relabel[c]).collect();

        let mut edges: std::collections::BTreeMap<(usize, usize), f64> =
            std::collections::BTreeMap::new();
        for v in 0..self.n {
            let cv = dense[v];
            for &(u, w) in &self.adj[v] {
                if u < v {
                    continue; // each undirected edge once
                }
                let cu = dense[u];
                let key = (cv.min(cu), cv.max(cu));
                *edges.entry(key).or_insert(0.0) += w;
            }
            if self.self_weight[v] != 0.0 {
                *edges.entry((cv, cv)).or_insert(0.0) += self.self_weight[v];
            }
        }
        let edge_list: Vec<(usize, usize, f64)> =
            edges.into_iter().map(|((u, v), w)| (u, v, w)).collect();
        (LevelGraph::from_edges(next, &edge_list), dense)
    }
}

/// Modularity of a community assignment on the bundle's unit-weight graph.
pub fn modularity(bundle: &GraphBundle, comm: &[usize]) -> f64 {
    let m = bundle.edges.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let deg = bundle.degrees();
    let n_comm = comm.iter().max().map_or(0, |&c| c + 1);
    let mut inside = vec![0.0f64; n_comm];
    let mut tot = vec![0.0f64; n_comm];
    for &(u, v) in &bundle.edges {
        if comm[u] == comm[v] {
            inside[comm[u]] += 1.0;
        }
    }
    for i in 0..bundle.n_nodes {
        tot[comm[i]] += deg[i] as f64;
    }
    (0..n_comm)
        .map(|c| inside[c] / m - (tot[c] / (2.0 * m)).powi(2))
        .sum()
}

/// Greedy modularity maximization (node moves plus aggregation phases).
///
/// The seed fixes the node visit order at every level, so the result is a
/// pure function of (bundle, seed). Returns a dense community label per
/// node.
pub fn louvain(bundle: &GraphBundle, seed: u64) -> Vec<usize> {
    let edges: Vec<(usize, usize, f64)> =
        bundle.edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
    let mut graph = LevelGraph::from_edges(bundle.n_nodes, &edges);
    // node → community at the finest level, composed across aggregations
    let mut assignment: Vec<usize> = (0..bundle.n_nodes).collect();

    if graph.m == 0.0 {
        return assignment;
    }

    let mut rng = seeding::stream(seed, Purpose::Louvain, &[]);
    for level in 0.. {
        let mut order: Vec<usize> = (0..graph.n).collect();
        order.shuffle(&mut rng);
        let (comm, moved) = graph.local_moves(&order);
        if !moved && level > 0 {
            break;
        }
        let (aggregated, dense) = graph.aggregate(&comm);
        for a in assignment.iter_mut() {
            *a = dense[*a];
        }
        if aggregated.n == graph.n {
            break;
        }
        graph = aggregated;
    }

    // renumber communities by first appearance for stable output
    let mut relabel = vec![usize::MAX; bundle.n_nodes];
    let mut next = 0;
    for a in assignment.iter_mut() {
        if relabel[*a] == usize::MAX {
            relabel[*a] = next;
            next += 1;
        }
        *a = relabel[*a];
    }
    assignment
}

/// Deal communities to `m_clients` clients: communities sorted by size
/// descending (ties by community id) each go to the currently lightest
/// client, lowest client index winning ties.
pub fn assign_communities(communities: &[usize], m_clients: usize, _seed: u64) -> Result<Partition> {
    assert!(m_clients > 0, "contract error: need at least one client");
    let n_comm = communities.iter().max().map_or(0, |&c| c + 1);
    if n_comm < m_clients {
        return Err(Error::Partition(format!(
            "found {n_comm} communities for {m_clients} clients; reduce the client count"
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comm];
    for (node, &c) in communities.iter().enumerate() {
        members[c].push(node);
    }
    let mut order: Vec<usize> = (0..n_comm).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(members[c].len()), c));

    let mut client_nodes: Vec<Vec<usize>> = vec![Vec::new(); m_clients];
    let mut provenance = Vec::with_capacity(n_comm);
    for c in order {
        let lightest = (0..m_clients)
            .min_by_key(|&k| (client_nodes[k].len(), k))
            .expect("at least one client");
        client_nodes[lightest].extend(&members[c]);
        provenance.push((c, lightest));
    }
    for nodes in &mut client_nodes {
        nodes.sort_unstable();
    }
    provenance.sort_unstable();
    Ok(Partition { client_nodes, provenance })
}

/// Per-class stratified split with largest-remainder apportionment.
///
/// Every class keeps at least one train node where possible (a node is
/// reassigned from val, then test, if the train share rounds to zero).
pub fn split_nodes(bundle: &GraphBundle, ratios: SplitRatios, seed: u64) -> Result<Vec<Split>> {
    ratios.validate()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); bundle.n_classes];
    for (node, &label) in bundle.labels.iter().enumerate() {
        by_class[label].push(node);
    }

    let mut tags = vec![Split::Test; bundle.n_nodes];
    for (class, nodes) in by_class.iter().enumerate() {
        if nodes.is_empty() {
            continue;
        }
        let mut shuffled = nodes.clone();
        let mut rng = seeding::stream(seed, Purpose::Split, &[class as u64]);
        shuffled.shuffle(&mut rng);

        let counts = apportion(nodes.len(), [ratios.train, ratios.val, ratios.test]);
        let (n_train, n_val, _) = (counts[0], counts[1], counts[2]);
        for (i, &node) in shuffled.iter().enumerate() {
            tags[node] = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(tags)
}

/// Largest-remainder apportionment of `total` into three buckets, with the
/// first bucket (train) guaranteed nonzero when `total` ≥ 1.
fn apportion(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let targets: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let mut leftover = total - counts.iter().sum::<usize>();
    let mut by_frac: Vec<usize> = (0..3).collect();
    by_frac.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &bucket in by_frac.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[bucket] += 1;
        leftover -= 1;
    }
    if counts[0] == 0 && total > 0 {
        let donor = if counts[1] > 0 { 1 } else { 2 };
        counts[donor] -= 1;
        counts[0] += 1;
    }
    [counts[0], counts[1], counts[2]]
}
