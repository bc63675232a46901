//! Dataset types, validation, normalization, and splits.
//!
//! A [`NetworkSample`] is one topology snapshot in raw units: link
//! capacities in bits/sec, flow rates in bits/sec and packets/sec, packet
//! sizes in bits, target delay in seconds. [`normalize`] turns it into
//! the [`ModelSample`] the model consumes: per-entity feature vectors
//! min-max mapped to [0,1] plus a scaled target delay.

mod format;
mod generator;

pub use format::{load_dataset, save_dataset, LoadedDataset, SCHEMA_VERSION};
pub use generator::{generate_synthetic, generate_synthetic_seq, link_loads, mm1_sojourn, path_delay, GeneratorConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stream_rng;

// Feature ranges of the training-data regime (raw units).
pub const TRAFFIC_RATE_RANGE: (f64, f64) = (8.584_470_72e5, 3.238_025_72e8);
pub const PACKET_RATE_RANGE: (f64, f64) = (221.7, 43_856.35);
pub const PACKET_SIZE_RANGE: (f64, f64) = (824.0, 11_552.0);
pub const CAPACITY_RANGE: (f64, f64) = (1.0e9, 8.0e10);
pub const CAPACITY_CHOICES: [f64; 3] = [1.0e9, 1.0e10, 8.0e10];
pub const NODE_COUNT_RANGE: (usize, usize) = (5, 8);
pub const EDGE_COUNT_RANGE: (usize, usize) = (10, 26);
pub const DEFAULT_DELAY_SCALE: f64 = 1e-4;

pub const FLOW_FEATURE_DIM: usize = 4;
pub const L2_FEATURE_DIM: usize = 1;
pub const L3_FEATURE_DIM: usize = 1;

// ---- raw sample types -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowType {
    #[serde(rename = "CBR")]
    Cbr,
    #[serde(rename = "MB")]
    Mb,
}

impl FlowType {
    pub fn as_feature(self) -> f64 {
        match self {
            FlowType::Cbr => 0.0,
            FlowType::Mb => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    /// bits/sec
    pub traffic_rate: f64,
    /// packets/sec
    pub packet_rate: f64,
    /// bits
    pub packet_size: f64,
    pub flow_type: FlowType,
    pub src: usize,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub src: usize,
    pub dst: usize,
    /// bits/sec
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub nodes: usize,
    pub l2_links: Vec<Link>,
    pub l3_links: Vec<Link>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub spec: FlowSpec,
    /// Ordered (l2 index, l3 index) hops.
    pub path: Vec<(usize, usize)>,
    /// seconds
    pub target_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSample {
    /// Schema version; every line carries it so files are self-describing.
    pub v: u32,
    pub topology: TopologySpec,
    pub flows: Vec<FlowRecord>,
}

// ---- validation ---------------------------------------------------------------

/// How to interpret the edge-count bound: the raw directed link count,
/// or the number of distinct undirected endpoint pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeCountMode {
    Directed,
    Undirected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Index/positivity checks only.
    Structural,
    /// Additionally enforce the documented training-data regime
    /// (node/edge counts, capacity set, feature ranges).
    Strict(EdgeCountMode),
}

pub fn validate_sample(sample: &NetworkSample, index: usize, strictness: Strictness) -> Result<()> {
    let fail = |message: String| Error::Validation { sample: index, message };

    let topo = &sample.topology;
    if topo.nodes == 0 {
        return Err(fail("topology has zero nodes".into()));
    }
    for (kind, links) in [("l2", &topo.l2_links), ("l3", &topo.l3_links)] {
        for (i, l) in links.iter().enumerate() {
            if l.src >= topo.nodes || l.dst >= topo.nodes {
                return Err(fail(format!(
                    "{kind} link {i} endpoints ({}, {}) out of range for {} nodes",
                    l.src, l.dst, topo.nodes
                )));
            }
            if !(l.capacity > 0.0) || !l.capacity.is_finite() {
                return Err(fail(format!("{kind} link {i} capacity {} not positive", l.capacity)));
            }
        }
    }
    if sample.flows.is_empty() {
        return Err(fail("sample has no flows".into()));
    }
    for (i, flow) in sample.flows.iter().enumerate() {
        let s = &flow.spec;
        if !(s.traffic_rate > 0.0 && s.packet_rate > 0.0 && s.packet_size > 0.0) {
            return Err(fail(format!("flow {i}: rates and packet size must be positive")));
        }
        if s.src >= topo.nodes || s.dst >= topo.nodes {
            return Err(fail(format!("flow {i}: endpoints out of range")));
        }
        if s.flow_type == FlowType::Cbr {
            let implied = s.packet_rate * s.packet_size;
            if (implied - s.traffic_rate).abs() > 0.01 * s.traffic_rate {
                return Err(fail(format!(
                    "flow {i}: CBR traffic rate {} inconsistent with packet_rate*packet_size {}",
                    s.traffic_rate, implied
                )));
            }
        }
        if flow.path.is_empty() {
            return Err(fail(format!("flow {i}: empty path")));
        }
        for (hop, &(l2, l3)) in flow.path.iter().enumerate() {
            if l2 >= topo.l2_links.len() {
                return Err(fail(format!(
                    "flow {i}: hop {hop} l2 index {l2} out of range ({} l2 links)",
                    topo.l2_links.len()
                )));
            }
            if l3 >= topo.l3_links.len() {
                return Err(fail(format!(
                    "flow {i}: hop {hop} l3 index {l3} out of range ({} l3 links)",
                    topo.l3_links.len()
                )));
            }
        }
        if !(flow.target_delay > 0.0) || !flow.target_delay.is_finite() {
            return Err(fail(format!("flow {i}: target delay {} not positive", flow.target_delay)));
        }
    }

    if let Strictness::Strict(edge_mode) = strictness {
        if topo.nodes < NODE_COUNT_RANGE.0 || topo.nodes > NODE_COUNT_RANGE.1 {
            return Err(fail(format!(
                "node count {} outside [{}, {}]",
                topo.nodes, NODE_COUNT_RANGE.0, NODE_COUNT_RANGE.1
            )));
        }
        let edges = match edge_mode {
            EdgeCountMode::Directed => topo.l3_links.len(),
            EdgeCountMode::Undirected => {
                let mut pairs: Vec<(usize, usize)> = topo
                    .l3_links
                    .iter()
                    .map(|l| (l.src.min(l.dst), l.src.max(l.dst)))
                    .collect();
                pairs.sort_unstable();
                pairs.dedup();
                pairs.len()
            }
        };
        if edges < EDGE_COUNT_RANGE.0 || edges > EDGE_COUNT_RANGE.1 {
            return Err(fail(format!(
                "edge count {} ({edge_mode:?}) outside [{}, {}]",
                edges, EDGE_COUNT_RANGE.0, EDGE_COUNT_RANGE.1
            )));
        }
        for (kind, links) in [("l2", &topo.l2_links), ("l3", &topo.l3_links)] {
            for (i, l) in links.iter().enumerate() {
                let ok = CAPACITY_CHOICES.iter().any(|&c| (l.capacity - c).abs() <= 1e-6 * c);
                if !ok {
                    return Err(fail(format!(
                        "{kind} link {i} capacity {} not one of {:?}",
                        l.capacity, CAPACITY_CHOICES
                    )));
                }
            }
        }
        for (i, flow) in sample.flows.iter().enumerate() {
            let s = &flow.spec;
            let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
            if !in_range(s.traffic_rate, TRAFFIC_RATE_RANGE) {
                return Err(fail(format!("flow {i}: traffic rate {} outside regime", s.traffic_rate)));
            }
            if !in_range(s.packet_rate, PACKET_RATE_RANGE) {
                return Err(fail(format!("flow {i}: packet rate {} outside regime", s.packet_rate)));
            }
            if !in_range(s.packet_size, PACKET_SIZE_RANGE) {
                return Err(fail(format!("flow {i}: packet size {} outside regime", s.packet_size)));
            }
        }
    }

    Ok(())
}

// ---- normalization ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn new(min: f64, max: f64) -> Self {
        FeatureRange { min, max }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Per-feature min-max constants plus the delay scale. Defaults are the
/// documented training-data ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub traffic_rate: FeatureRange,
    pub packet_rate: FeatureRange,
    pub packet_size: FeatureRange,
    pub flow_type: FeatureRange,
    pub l2_capacity: FeatureRange,
    pub l3_capacity: FeatureRange,
    /// Targets are divided by this scale (seconds).
    pub delay_scale: f64,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        NormalizationSpec {
            traffic_rate: FeatureRange::new(TRAFFIC_RATE_RANGE.0, TRAFFIC_RATE_RANGE.1),
            packet_rate: FeatureRange::new(PACKET_RATE_RANGE.0, PACKET_RATE_RANGE.1),
            packet_size: FeatureRange::new(PACKET_SIZE_RANGE.0, PACKET_SIZE_RANGE.1),
            flow_type: FeatureRange::new(0.0, 1.0),
            l2_capacity: FeatureRange::new(CAPACITY_RANGE.0, CAPACITY_RANGE.1),
            l3_capacity: FeatureRange::new(CAPACITY_RANGE.0, CAPACITY_RANGE.1),
            delay_scale: DEFAULT_DELAY_SCALE,
        }
    }
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("traffic_rate", self.traffic_rate),
            ("packet_rate", self.packet_rate),
            ("packet_size", self.packet_size),
            ("flow_type", self.flow_type),
            ("l2_capacity", self.l2_capacity),
            ("l3_capacity", self.l3_capacity),
        ];
        for (name, r) in ranges {
            if !(r.max > r.min) {
                return Err(Error::Config(format!(
                    "normalization range for {name} must satisfy max > min, got [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        if !(self.delay_scale > 0.0) {
            return Err(Error::Config(format!(
                "delay scale must be positive, got {}",
                self.delay_scale
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: NormalizationSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

// ---- model-facing sample ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFlow {
    /// `[traffic_rate, packet_rate, packet_size, flow_type]`, normalized.
    pub features: Vec<f64>,
    pub path: Vec<(usize, usize)>,
    /// Normalized target delay.
    pub target: f64,
}

/// Feature-vector view of a sample: what the model actually consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSample {
    pub l2: Vec<Vec<f64>>,
    pub l3: Vec<Vec<f64>>,
    pub flows: Vec<ModelFlow>,
}

/// Map a raw sample into normalized feature space. With `strict` set,
/// any feature outside its declared range is an error.
pub fn normalize(sample: &NetworkSample, spec: &NormalizationSpec, strict: bool) -> Result<ModelSample> {
    let check = |name: &str, v: f64, r: &FeatureRange| -> Result<f64> {
        if strict && !r.contains(v) {
            return Err(Error::Validation {
                sample: 0,
                message: format!("{name} value {v} outside normalization range [{}, {}]", r.min, r.max),
            });
        }
        Ok(r.normalize(v))
    };

    let l2 = sample
        .topology
        .l2_links
        .iter()
        .map(|l| Ok(vec![check("l2 capacity", l.capacity, &spec.l2_capacity)?]))
        .collect::<Result<Vec<_>>>()?;
    let l3 = sample
        .topology
        .l3_links
        .iter()
        .map(|l| Ok(vec![check("l3 capacity", l.capacity, &spec.l3_capacity)?]))
        .collect::<Result<Vec<_>>>()?;
    let flows = sample
        .flows
        .iter()
        .map(|f| {
            Ok(ModelFlow {
                features: vec![
                    check("traffic rate", f.spec.traffic_rate, &spec.traffic_rate)?,
                    check("packet rate", f.spec.packet_rate, &spec.packet_rate)?,
                    check("packet size", f.spec.packet_size, &spec.packet_size)?,
                    spec.flow_type.normalize(f.spec.flow_type.as_feature()),
                ],
                path: f.path.clone(),
                target: f.target_delay / spec.delay_scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ModelSample { l2, l3, flows })
}

/// Invert [`normalize`] on a flow feature vector, returning raw
/// `(traffic_rate, packet_rate, packet_size, flow_type)` values.
pub fn denormalize_flow_features(features: &[f64], spec: &NormalizationSpec) -> (f64, f64, f64, f64) {
    (
        spec.traffic_rate.denormalize(features[0]),
        spec.packet_rate.denormalize(features[1]),
        spec.packet_size.denormalize(features[2]),
        spec.flow_type.denormalize(features[3]),
    )
}

/// Normalized prediction back to seconds.
pub fn denormalize_delay(v: f64, spec: &NormalizationSpec) -> f64 {
    v * spec.delay_scale
}

// ---- splits ---------------------------------------------------------------------------

/// Seed-deterministic disjoint shuffle split.
pub fn split_dataset<T: Clone>(
    items: &[T],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (ft, fv, fe) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fe > 0.0) {
        return Err(Error::Config("split fractions must be positive".into()));
    }
    if ft + fv + fe > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "split fractions sum to {} > 1",
            ft + fv + fe
        )));
    }
    let n = items.len();
    let n_train = (n as f64 * ft).floor() as usize;
    let n_val = (n as f64 * fv).floor() as usize;
    let n_test = (n as f64 * fe).floor() as usize;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "{n} samples are too few for fractions ({ft}, {fv}, {fe})"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, "split");
    use rand::seq::SliceRandom;
    indices.shuffle(&mut rng);

    let take = |range: std::ops::Range<usize>| -> Vec<T> {
        indices[range].iter().map(|&i| items[i].clone()).collect()
    };
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_val),
        take(n_train + n_val..n_train + n_val + n_test),
    ))
}
