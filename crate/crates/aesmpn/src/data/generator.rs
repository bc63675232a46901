//! Synthetic dataset generator with an M/M/1 delay oracle.
//!
//! Topologies are random connected graphs; flows ride hop-count shortest
//! paths (ties broken toward the lowest node id). Per directed L3 link,
//! the service rate is `mu = capacity / mean packet size` with the mean
//! weighted by packet rate, the arrival rate is the sum of the packet
//! rates of the flows on the link, and the per-link sojourn time is
//! `1 / (mu - lambda)`. A flow's target delay is the sum over its path.
//! Each L3 link rides exactly one mirrored L2 link.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    FlowRecord, FlowSpec, FlowType, Link, NetworkSample, TopologySpec, CAPACITY_CHOICES,
    PACKET_RATE_RANGE, PACKET_SIZE_RANGE, SCHEMA_VERSION, TRAFFIC_RATE_RANGE,
};
use crate::error::{Error, Result};
use crate::par;
use crate::seed::stream_rng;

const MAX_ATTEMPTS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub samples: usize,
    /// Inclusive node count range.
    pub nodes: (usize, usize),
    /// Link capacities to draw from, bits/sec.
    pub capacities: Vec<f64>,
    /// Inclusive flow count range.
    pub flows: (usize, usize),
    /// Utilization cap; every link keeps `lambda < rho_max * mu`.
    pub rho_max: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            samples: 100,
            nodes: (5, 8),
            capacities: CAPACITY_CHOICES.to_vec(),
            flows: (3, 6),
            rho_max: 0.9,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_max > 0.0 && self.rho_max < 1.0) {
            return Err(Error::Config(format!(
                "rho_max must be in (0, 1), got {}",
                self.rho_max
            )));
        }
        if self.nodes.0 < 2 || self.nodes.0 > self.nodes.1 {
            return Err(Error::Config(format!("invalid node range {:?}", self.nodes)));
        }
        if self.flows.0 < 1 || self.flows.0 > self.flows.1 {
            return Err(Error::Config(format!("invalid flow range {:?}", self.flows)));
        }
        if self.capacities.is_empty() || self.capacities.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("capacities must be positive and non-empty".into()));
        }
        Ok(())
    }
}

/// Mean sojourn time of an M/M/1 queue. Precondition: `0 <= lambda < mu`.
pub fn mm1_sojourn(mu: f64, lambda: f64) -> f64 {
    1.0 / (mu - lambda)
}

/// Sum of per-link sojourn times along a path of `(mu, lambda)` stages.
pub fn path_delay(stages: &[(f64, f64)]) -> f64 {
    stages.iter().map(|&(mu, lambda)| mm1_sojourn(mu, lambda)).sum()
}

/// Recompute per-L3-link `(mu, lambda)` from a sample's flows. Links
/// carrying no traffic get `lambda = 0` and `mu = capacity / max packet
/// size` as a conservative placeholder (they never contribute to a
/// delay).
pub fn link_loads(sample: &NetworkSample) -> Vec<(f64, f64)> {
    let n = sample.topology.l3_links.len();
    let mut lambda = vec![0.0_f64; n];
    let mut traffic = vec![0.0_f64; n];
    for flow in &sample.flows {
        for &(_, l3) in &flow.path {
            lambda[l3] += flow.spec.packet_rate;
            traffic[l3] += flow.spec.traffic_rate;
        }
    }
    (0..n)
        .map(|l| {
            let cap = sample.topology.l3_links[l].capacity;
            let mu = if lambda[l] > 0.0 {
                cap * lambda[l] / traffic[l]
            } else {
                cap / PACKET_SIZE_RANGE.1
            };
            (mu, lambda[l])
        })
        .collect()
}

/// Generate `cfg.samples` synthetic samples. Deterministic under a fixed
/// seed regardless of thread count: each sample draws from its own
/// ChaCha stream keyed by sample index.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<Vec<NetworkSample>> {
    cfg.validate()?;
    let results = par::map_indices(cfg.samples, |i| generate_one(cfg, i));
    results.into_iter().collect()
}

/// Sequential twin of [`generate_synthetic`], for benchmarking.
pub fn generate_synthetic_seq(cfg: &GeneratorConfig) -> Result<Vec<NetworkSample>> {
    cfg.validate()?;
    let results = par::map_indices_seq(cfg.samples, |i| generate_one(cfg, i));
    results.into_iter().collect()
}

fn generate_one(cfg: &GeneratorConfig, index: usize) -> Result<NetworkSample> {
    let mut rng = stream_rng(cfg.seed, "generate");
    rng.set_stream(index as u64);

    for _ in 0..MAX_ATTEMPTS {
        if let Some(sample) = attempt(cfg, &mut rng) {
            return Ok(sample);
        }
    }
    Err(Error::Generation {
        sample: index,
        message: format!("no feasible sample within {MAX_ATTEMPTS} attempts (rho_max {})", cfg.rho_max),
    })
}

fn attempt(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Option<NetworkSample> {
    let n = rng.gen_range(cfg.nodes.0..=cfg.nodes.1);
    let undirected = random_connected_edges(n, rng);

    let mut l3_links = Vec::with_capacity(undirected.len() * 2);
    for &(u, v) in &undirected {
        let capacity = cfg.capacities[rng.gen_range(0..cfg.capacities.len())];
        l3_links.push(Link { src: u, dst: v, capacity });
        l3_links.push(Link { src: v, dst: u, capacity });
    }
    // synthetic data: one mirrored L2 link per L3 link
    let l2_links = l3_links.clone();

    let mut link_index = std::collections::HashMap::new();
    for (i, l) in l3_links.iter().enumerate() {
        link_index.insert((l.src, l.dst), i);
    }
    let adjacency = sorted_adjacency(n, &undirected);

    let flow_count = rng.gen_range(cfg.flows.0..=cfg.flows.1);
    let mut flows = Vec::with_capacity(flow_count);
    for _ in 0..flow_count {
        let src = rng.gen_range(0..n);
        let mut dst = rng.gen_range(0..n - 1);
        if dst >= src {
            dst += 1;
        }
        let node_path = bfs_shortest_path(&adjacency, src, dst)?;
        let path: Vec<(usize, usize)> = node_path
            .windows(2)
            .map(|w| {
                let l3 = link_index[&(w[0], w[1])];
                (l3, l3)
            })
            .collect();

        let (packet_rate, packet_size) = draw_rate_size(rng)?;
        flows.push(FlowRecord {
            spec: FlowSpec {
                traffic_rate: packet_rate * packet_size,
                packet_rate,
                packet_size,
                flow_type: if rng.gen_bool(0.5) { FlowType::Cbr } else { FlowType::Mb },
                src,
                dst,
            },
            path,
            target_delay: 0.0, // filled below
        });
    }

    let mut sample = NetworkSample {
        v: SCHEMA_VERSION,
        topology: TopologySpec { nodes: n, l2_links, l3_links },
        flows,
    };

    let loads = link_loads(&sample);
    for &(mu, lambda) in &loads {
        if lambda >= cfg.rho_max * mu {
            return None;
        }
    }
    for flow in &mut sample.flows {
        let stages: Vec<(f64, f64)> = flow.path.iter().map(|&(_, l3)| loads[l3]).collect();
        flow.target_delay = path_delay(&stages);
    }
    Some(sample)
}

/// Packet rate and size, redrawn until the implied traffic rate falls in
/// the documented range.
fn draw_rate_size(rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
    for _ in 0..1000 {
        let rate = rng.gen_range(PACKET_RATE_RANGE.0..=PACKET_RATE_RANGE.1);
        let size = rng.gen_range(PACKET_SIZE_RANGE.0..=PACKET_SIZE_RANGE.1);
        let traffic = rate * size;
        if traffic >= TRAFFIC_RATE_RANGE.0 && traffic <= TRAFFIC_RATE_RANGE.1 {
            return Some((rate, size));
        }
    }
    None
}

/// Random connected undirected graph: a random spanning tree plus extra
/// edges. The undirected edge count lands in a band that keeps the
/// directed count inside the documented 10..=26 regime for 5-8 nodes.
fn random_connected_edges(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let max_edges = n * (n - 1) / 2;
    let lo = (n - 1).max(5.min(max_edges));
    let hi = max_edges.min(13).max(lo);
    let target = rng.gen_range(lo..=hi);

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(target);
    let mut present = std::collections::HashSet::new();
    // spanning tree by random attachment
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    for i in 1..n {
        let u = order[i];
        let v = order[rng.gen_range(0..i)];
        let e = (u.min(v), u.max(v));
        present.insert(e);
        edges.push(e);
    }
    while edges.len() < target {
        let u = rng.gen_range(0..n);
        let mut v = rng.gen_range(0..n - 1);
        if v >= u {
            v += 1;
        }
        let e = (u.min(v), u.max(v));
        if present.insert(e) {
            edges.push(e);
        }
    }
    edges
}

fn sorted_adjacency(n: usize, undirected: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in undirected {
        adj[u].push(v);
        adj[v].push(u);
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
    }
    adj
}

/// BFS with neighbors explored in ascending id order: among shortest
/// paths this yields the lexicographically smallest, deterministically.
fn bfs_shortest_path(adj: &[Vec<usize>], src: usize, dst: usize) -> Option<Vec<usize>> {
    let mut parent = vec![usize::MAX; adj.len()];
    let mut queue = std::collections::VecDeque::new();
    parent[src] = src;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            break;
        }
        for &v in &adj[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    if parent[dst] == usize::MAX {
        return None;
    }
    let mut path = vec![dst];
    let mut cur = dst;
    while cur != src {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}
