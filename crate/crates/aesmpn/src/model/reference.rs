//! Textbook sum-aggregation message-passing network on a small generic
//! graph. Serves as the contract oracle the specialized three-phase
//! round is tested against: message = order-invariant sum over
//! neighbors, update from (state, message), readout over final states.
//!
//! Forward-only, plain `Vec<f64>` math, fixed seeded weights.

use rand_chacha::ChaCha8Rng;

use crate::nn::init_weight;
use crate::seed::stream_rng;

/// Directed neighbor lists with per-edge feature vectors.
pub struct RefGraph {
    pub node_features: Vec<Vec<f64>>,
    pub neighbors: Vec<Vec<(usize, Vec<f64>)>>,
}

/// One-hidden-layer tanh MLP.
struct TinyMlp {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    in_dim: usize,
    hid: usize,
}

impl TinyMlp {
    fn new(in_dim: usize, hid: usize, out: usize, rng: &mut ChaCha8Rng) -> Self {
        TinyMlp {
            w1: init_weight(hid, in_dim, rng).data().to_vec(),
            b1: vec![0.0; hid],
            w2: init_weight(out, hid, rng).data().to_vec(),
            b2: vec![0.0; out],
            in_dim,
            hid,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim);
        let mut h = self.b1.clone();
        for (i, hv) in h.iter_mut().enumerate() {
            let row = &self.w1[i * self.in_dim..(i + 1) * self.in_dim];
            *hv = (*hv + dot(row, x)).tanh();
        }
        let mut y = self.b2.clone();
        for (i, yv) in y.iter_mut().enumerate() {
            let row = &self.w2[i * self.hid..(i + 1) * self.hid];
            *yv += dot(row, &h);
        }
        y
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub struct RefMpnn {
    msg: TinyMlp,
    upd: TinyMlp,
    readout: TinyMlp,
    state_dim: usize,
}

impl RefMpnn {
    /// Initial states are the node features, so `state_dim` must match
    /// the graph's feature width.
    pub fn new(state_dim: usize, edge_dim: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, "mpnn-reference");
        RefMpnn {
            msg: TinyMlp::new(2 * state_dim + edge_dim, 8, state_dim, &mut rng),
            upd: TinyMlp::new(2 * state_dim, 8, state_dim, &mut rng),
            readout: TinyMlp::new(state_dim, 8, 1, &mut rng),
            state_dim,
        }
    }

    /// K rounds of message passing; returns the final node states.
    pub fn run(&self, g: &RefGraph, k: usize) -> Vec<Vec<f64>> {
        let mut states: Vec<Vec<f64>> = g.node_features.clone();
        for _ in 0..k {
            let mut messages = Vec::with_capacity(states.len());
            for (v, nbrs) in g.neighbors.iter().enumerate() {
                let mut contribs: Vec<Vec<f64>> = nbrs
                    .iter()
                    .map(|(w, e)| {
                        let mut input = states[v].clone();
                        input.extend_from_slice(&states[*w]);
                        input.extend_from_slice(e);
                        self.msg.apply(&input)
                    })
                    .collect();
                // canonical order: neighbor list order cannot perturb the sum
                contribs.sort_by(|a, b| bits(a).cmp(&bits(b)));
                let mut m = vec![0.0; self.state_dim];
                for c in &contribs {
                    for (mv, cv) in m.iter_mut().zip(c) {
                        *mv += cv;
                    }
                }
                messages.push(m);
            }
            states = states
                .iter()
                .zip(&messages)
                .map(|(h, m)| {
                    let mut input = h.clone();
                    input.extend_from_slice(m);
                    self.upd.apply(&input)
                })
                .collect();
        }
        states
    }

    /// Sum-pool the states and map to one scalar.
    pub fn read_out(&self, states: &[Vec<f64>]) -> f64 {
        let mut pooled = vec![0.0; self.state_dim];
        let mut keyed: Vec<&Vec<f64>> = states.iter().collect();
        keyed.sort_by(|a, b| bits(a).cmp(&bits(b)));
        for s in keyed {
            for (p, v) in pooled.iter_mut().zip(s) {
                *p += v;
            }
        }
        self.readout.apply(&pooled)[0]
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_graph(feat_a: Vec<f64>, feat_b: Vec<f64>, edge: Vec<f64>) -> RefGraph {
        RefGraph {
            node_features: vec![feat_a, feat_b],
            neighbors: vec![vec![(1, edge.clone())], vec![(0, edge)]],
        }
    }

    #[test]
    fn isolated_node_updates_from_zero_message() {
        let g = RefGraph {
            node_features: vec![vec![0.3, -0.4]],
            neighbors: vec![vec![]],
        };
        let mpnn = RefMpnn::new(2, 1, 5);
        let states = mpnn.run(&g, 1);
        // empty-sum message is exactly zero; update still fires
        let mut input = g.node_features[0].clone();
        input.extend_from_slice(&[0.0, 0.0]);
        assert_eq!(states[0], mpnn.upd.apply(&input));
    }

    #[test]
    fn symmetric_nodes_end_identical() {
        let g = two_node_graph(vec![0.5, 0.5], vec![0.5, 0.5], vec![1.0]);
        let mpnn = RefMpnn::new(2, 1, 9);
        let states = mpnn.run(&g, 3);
        assert_eq!(states[0], states[1]);
    }

    #[test]
    fn neighbor_order_is_irrelevant() {
        let star = |order: &[usize]| RefGraph {
            node_features: vec![vec![0.1, 0.2], vec![0.7, -0.3], vec![-0.9, 0.4], vec![0.05, 1.1]],
            neighbors: vec![
                order.iter().map(|&w| (w, vec![w as f64])).collect(),
                vec![(0, vec![1.0])],
                vec![(0, vec![2.0])],
                vec![(0, vec![3.0])],
            ],
        };
        let mpnn = RefMpnn::new(2, 1, 21);
        let a = mpnn.run(&star(&[1, 2, 3]), 2);
        let b = mpnn.run(&star(&[3, 1, 2]), 2);
        assert_eq!(a, b);
        assert_eq!(mpnn.read_out(&a).to_bits(), mpnn.read_out(&b).to_bits());
    }
}
