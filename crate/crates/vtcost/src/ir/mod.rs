//! Layer-graph intermediate representation of vision models.
//!
//! A [`ModelGraph`] is a validated DAG of [`LayerNode`]s connected by
//! [`Edge`]s. It carries tensor shapes and connectivity only; there are no
//! weights and no numerics. Graphs are immutable after validation and safe
//! to share across analysis threads.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod builders;
pub mod file;

/// Tensor shape, either spatial (height x width x channels) or a token
/// sequence (tokens x channels). Exactly one of the two forms is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum TensorShape {
    #[serde(rename = "spatial")]
    Spatial { height: u64, width: u64, channels: u64 },
    #[serde(rename = "sequence")]
    Sequence { tokens: u64, channels: u64 },
}

impl TensorShape {
    pub fn spatial(height: u64, width: u64, channels: u64) -> Self {
        TensorShape::Spatial { height, width, channels }
    }

    pub fn sequence(tokens: u64, channels: u64) -> Self {
        TensorShape::Sequence { tokens, channels }
    }

    pub fn channels(&self) -> u64 {
        match *self {
            TensorShape::Spatial { channels, .. } => channels,
            TensorShape::Sequence { channels, .. } => channels,
        }
    }

    /// Number of positions the channel vector is replicated over
    /// (spatial pixels or sequence tokens).
    pub fn positions(&self) -> u64 {
        match *self {
            TensorShape::Spatial { height, width, .. } => height * width,
            TensorShape::Sequence { tokens, .. } => tokens,
        }
    }

    /// Total element count.
    pub fn elements(&self) -> u64 {
        self.positions() * self.channels()
    }

    pub fn with_channels(&self, channels: u64) -> Self {
        match *self {
            TensorShape::Spatial { height, width, .. } => TensorShape::Spatial { height, width, channels },
            TensorShape::Sequence { tokens, .. } => TensorShape::Sequence { tokens, channels },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TensorShape::Spatial { height, width, channels } => height >= 1 && width >= 1 && channels >= 1,
            TensorShape::Sequence { tokens, channels } => tokens >= 1 && channels >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("tensor dimensions must be >= 1".into()))
        }
    }
}

/// Which architectural region a node belongs to. Needed for the category
/// aggregation in reports and for encoder-block bypass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum StageTag {
    /// Encoder stage `stage` in 0..=3. `block` is the block index for nodes
    /// inside an encoder block; `None` for stage plumbing such as patch
    /// embeddings and stage-final norms, which bypass never removes.
    #[serde(rename = "encoder")]
    Encoder { stage: u8, block: Option<u32> },
    #[serde(rename = "decoder")]
    Decoder,
    #[serde(rename = "backbone")]
    Backbone,
    #[serde(rename = "transformer_encoder")]
    TransformerEncoder,
    #[serde(rename = "transformer_decoder")]
    TransformerDecoder,
    #[serde(rename = "head")]
    Head,
}

impl StageTag {
    /// Group label used by category reports.
    pub fn group(&self) -> StageGroup {
        match self {
            StageTag::Encoder { .. } => StageGroup::Encoder,
            StageTag::Decoder => StageGroup::Decoder,
            StageTag::Backbone => StageGroup::Backbone,
            StageTag::TransformerEncoder | StageTag::TransformerDecoder => StageGroup::Transformer,
            StageTag::Head => StageGroup::Head,
        }
    }
}

/// Coarse stage grouping for aggregate reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageGroup {
    Encoder,
    Decoder,
    Backbone,
    Transformer,
    Head,
}

impl StageGroup {
    pub const ALL: [StageGroup; 5] = [
        StageGroup::Encoder,
        StageGroup::Decoder,
        StageGroup::Backbone,
        StageGroup::Transformer,
        StageGroup::Head,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StageGroup::Encoder => "encoder",
            StageGroup::Decoder => "decoder",
            StageGroup::Backbone => "backbone",
            StageGroup::Transformer => "transformer",
            StageGroup::Head => "head",
        }
    }
}

/// Layer kind plus its kind-specific parameters.
///
/// Attention blocks are stored as a single node carrying parameters; the
/// profiler decomposes them into constituent matmuls. Auxiliary micro-ops
/// (LayerNorm, Softmax, Activation, Interpolate, Add, Concat, Pooling)
/// carry per-element op counts and are grouped as "other" in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", deny_unknown_fields)]
pub enum LayerKind {
    #[serde(rename = "conv2d")]
    Conv2D {
        in_channels: u64,
        out_channels: u64,
        kernel_h: u64,
        kernel_w: u64,
        stride: u64,
        padding: u64,
        in_h: u64,
        in_w: u64,
    },
    #[serde(rename = "depthwise_conv2d")]
    DepthwiseConv2D {
        channels: u64,
        kernel_h: u64,
        kernel_w: u64,
        stride: u64,
        padding: u64,
        in_h: u64,
        in_w: u64,
    },
    /// Dense layer with learned weights applied per token/row.
    #[serde(rename = "linear")]
    Linear { rows: u64, in_features: u64, out_features: u64 },
    /// Activation-by-activation matrix product (no weights).
    #[serde(rename = "matmul")]
    MatMul { rows: u64, in_features: u64, out_features: u64 },
    #[serde(rename = "attention")]
    Attention {
        tokens: u64,
        embed_dim: u64,
        heads: u64,
        /// Spatial-reduction ratio applied to K/V (1 = none).
        reduction_ratio: u64,
        /// Local window side for windowed attention.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window_size: Option<u64>,
        /// Token grid (h, w); required for windowed or spatially reduced
        /// attention so padding and reshaping cost is exact.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<(u64, u64)>,
        /// Cross-attention key/value token count (None = self-attention).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kv_tokens: Option<u64>,
        /// Content+spatial concatenated scores (doubles q/k projection and
        /// score dimensionality, as in conditional-attention decoders).
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        spatial_concat: bool,
    },
    #[serde(rename = "layer_norm")]
    LayerNorm { elements: u64 },
    #[serde(rename = "activation")]
    Activation { elements: u64 },
    #[serde(rename = "pooling")]
    Pooling { elements_out: u64, kernel: u64 },
    #[serde(rename = "interpolate")]
    Interpolate { in_h: u64, in_w: u64, out_h: u64, out_w: u64, channels: u64 },
    #[serde(rename = "concat")]
    Concat { channels: u64 },
    #[serde(rename = "add")]
    Add { elements: u64 },
    #[serde(rename = "softmax")]
    Softmax { elements: u64 },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2D { .. } => "conv2d",
            LayerKind::DepthwiseConv2D { .. } => "depthwise_conv2d",
            LayerKind::Linear { .. } => "linear",
            LayerKind::MatMul { .. } => "matmul",
            LayerKind::Attention { .. } => "attention",
            LayerKind::LayerNorm { .. } => "layer_norm",
            LayerKind::Activation { .. } => "activation",
            LayerKind::Pooling { .. } => "pooling",
            LayerKind::Interpolate { .. } => "interpolate",
            LayerKind::Concat { .. } => "concat",
            LayerKind::Add { .. } => "add",
            LayerKind::Softmax { .. } => "softmax",
        }
    }

    /// True for kinds whose output channel count equals their input channel
    /// count, so channel pruning passes straight through them.
    pub fn is_passthrough(&self) -> bool {
        matches!(
            self,
            LayerKind::LayerNorm { .. }
                | LayerKind::Activation { .. }
                | LayerKind::Pooling { .. }
                | LayerKind::Interpolate { .. }
                | LayerKind::Add { .. }
                | LayerKind::Softmax { .. }
                | LayerKind::DepthwiseConv2D { .. }
        )
    }
}

/// One layer in the model graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode {
    pub id: String,
    pub kind: LayerKind,
    pub stage_tag: StageTag,
    pub output_shape: TensorShape,
}

impl LayerNode {
    fn validate(&self) -> Result<()> {
        self.output_shape.validate().map_err(|e| Error::InvalidNode {
            node: self.id.clone(),
            message: e.to_string(),
        })?;
        let bad = |m: &str| {
            Err(Error::InvalidNode {
                node: self.id.clone(),
                message: m.to_string(),
            })
        };
        match &self.kind {
            LayerKind::Conv2D { in_channels, out_channels, kernel_h, kernel_w, stride, .. } => {
                if *in_channels < 1 || *out_channels < 1 {
                    return bad("conv2d channels must be >= 1");
                }
                if *kernel_h < 1 || *kernel_w < 1 || *stride < 1 {
                    return bad("conv2d kernel/stride must be >= 1");
                }
            }
            LayerKind::DepthwiseConv2D { channels, kernel_h, kernel_w, stride, .. } => {
                if *channels < 1 || *kernel_h < 1 || *kernel_w < 1 || *stride < 1 {
                    return bad("depthwise parameters must be >= 1");
                }
            }
            LayerKind::Linear { rows, in_features, out_features }
            | LayerKind::MatMul { rows, in_features, out_features } => {
                if *rows < 1 || *in_features < 1 || *out_features < 1 {
                    return bad("linear/matmul dimensions must be >= 1");
                }
            }
            LayerKind::Attention { tokens, embed_dim, heads, reduction_ratio, window_size, .. } => {
                if *tokens < 1 || *embed_dim < 1 || *heads < 1 {
                    return bad("attention dimensions must be >= 1");
                }
                if embed_dim % heads != 0 {
                    return bad("attention embed_dim must be divisible by heads");
                }
                if *reduction_ratio < 1 {
                    return bad("attention reduction_ratio must be >= 1");
                }
                if let Some(w) = window_size {
                    if *w < 1 {
                        return bad("attention window_size must be >= 1");
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Output channel count reported by this node's shape.
    pub fn out_channels(&self) -> u64 {
        self.output_shape.channels()
    }
}

/// Directed edge. `channel_range` is the half-open channel interval the
/// consumer reads. For edges into a `Concat` node the range is expressed in
/// the concat's output channel space and records the segment this input
/// occupies; for every other consumer it indexes the producer's output
/// channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub producer: String,
    pub consumer: String,
    pub channel_range: (u64, u64),
}

impl Edge {
    pub fn full(producer: &str, consumer: &str, channels: u64) -> Self {
        Edge {
            producer: producer.to_string(),
            consumer: consumer.to_string(),
            channel_range: (0, channels),
        }
    }
}

/// Validated directed acyclic layer graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub name: String,
    pub input_shape: TensorShape,
    pub nodes: Vec<LayerNode>,
    pub edges: Vec<Edge>,
    /// Ids of nodes fed directly by the model input.
    pub inputs: Vec<String>,
}

impl ModelGraph {
    /// Build and validate a graph. Rejects duplicate ids, dangling edges,
    /// cycles, unreachable nodes, dead interior nodes and malformed concat
    /// segments.
    pub fn new(
        name: impl Into<String>,
        input_shape: TensorShape,
        nodes: Vec<LayerNode>,
        edges: Vec<Edge>,
        inputs: Vec<String>,
    ) -> Result<Self> {
        let graph = ModelGraph { name: name.into(), input_shape, nodes, edges, inputs };
        graph.validate()?;
        Ok(graph)
    }

    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Index from node id to position in `nodes`.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }

    pub fn consumers_of(&self, id: &str) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.producer == id)
    }

    pub fn producers_of(&self, id: &str) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.consumer == id)
    }

    /// Consumer fan-out per node, keyed by id.
    pub fn fan_out(&self) -> BTreeMap<&str, usize> {
        let mut out: BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
        for e in &self.edges {
            if let Some(c) = out.get_mut(e.producer.as_str()) {
                *c += 1;
            }
        }
        out
    }

    /// Terminal nodes (no consumers); the model outputs.
    pub fn outputs(&self) -> Vec<&LayerNode> {
        let fan = self.fan_out();
        self.nodes.iter().filter(|n| fan[n.id.as_str()] == 0).collect()
    }

    /// Node ids in a deterministic topological order.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let idx = self.index();
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            let (p, c) = (idx[e.producer.as_str()], idx[e.consumer.as_str()]);
            succ[p].push(c);
            indegree[c] += 1;
        }
        // BTreeSet keeps the order deterministic regardless of edge order.
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            order.push(i);
            for &s in &succ[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(Error::Cycle(self.nodes[stuck].id.clone()));
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<()> {
        self.input_shape.validate()?;
        if self.nodes.is_empty() {
            // An empty graph is permitted; costs are zero.
            return Ok(());
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            n.validate()?;
            if !seen.insert(n.id.as_str()) {
                return Err(Error::InvalidGraph(format!("duplicate node id `{}`", n.id)));
            }
        }
        for e in &self.edges {
            for end in [&e.producer, &e.consumer] {
                if !seen.contains(end.as_str()) {
                    return Err(Error::DanglingEdge(end.clone()));
                }
            }
            if e.channel_range.0 >= e.channel_range.1 {
                return Err(Error::InvalidEdge {
                    producer: e.producer.clone(),
                    consumer: e.consumer.clone(),
                    message: "empty channel range".into(),
                });
            }
        }
        for inp in &self.inputs {
            if !seen.contains(inp.as_str()) {
                return Err(Error::DanglingEdge(inp.clone()));
            }
        }

        self.topo_order()?;
        self.check_reachability()?;
        self.check_channel_ranges()?;
        Ok(())
    }

    /// Every node must be reachable from the model input, and every
    /// non-terminal node must feed something.
    fn check_reachability(&self) -> Result<()> {
        let idx = self.index();
        let mut reach = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = self.inputs.iter().map(|i| idx[i.as_str()]).collect();
        for &s in &stack {
            reach[s] = true;
        }
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            succ[idx[e.producer.as_str()]].push(idx[e.consumer.as_str()]);
        }
        while let Some(i) = stack.pop() {
            for &s in &succ[i] {
                if !reach[s] {
                    reach[s] = true;
                    stack.push(s);
                }
            }
        }
        if let Some(i) = reach.iter().position(|r| !r) {
            return Err(Error::InvalidGraph(format!(
                "node `{}` unreachable from model input",
                self.nodes[i].id
            )));
        }
        Ok(())
    }

    /// Channel-range legality: ordinary edges must lie inside the producer's
    /// output channels; concat inputs must tile the concat output exactly.
    fn check_channel_ranges(&self) -> Result<()> {
        let idx = self.index();
        for e in &self.edges {
            let consumer = &self.nodes[idx[e.consumer.as_str()]];
            let producer = &self.nodes[idx[e.producer.as_str()]];
            if matches!(consumer.kind, LayerKind::Concat { .. }) {
                // Segment length must match the producer's full output.
                let len = e.channel_range.1 - e.channel_range.0;
                if len != producer.out_channels() {
                    return Err(Error::InvalidEdge {
                        producer: e.producer.clone(),
                        consumer: e.consumer.clone(),
                        message: format!(
                            "concat segment length {} != producer channels {}",
                            len,
                            producer.out_channels()
                        ),
                    });
                }
            } else if e.channel_range.1 > producer.out_channels() {
                return Err(Error::InvalidEdge {
                    producer: e.producer.clone(),
                    consumer: e.consumer.clone(),
                    message: format!(
                        "channel range [{}, {}) outside producer channels {}",
                        e.channel_range.0,
                        e.channel_range.1,
                        producer.out_channels()
                    ),
                });
            }
        }
        for node in &self.nodes {
            if let LayerKind::Concat { channels } = node.kind {
                let mut segs: Vec<(u64, u64)> = self
                    .producers_of(&node.id)
                    .map(|e| e.channel_range)
                    .collect();
                segs.sort_unstable();
                let mut cursor = 0;
                for (s, t) in &segs {
                    if *s != cursor {
                        return Err(Error::InvalidNode {
                            node: node.id.clone(),
                            message: format!(
                                "concat segments must be disjoint and cover [0, {channels}); gap or overlap at {s}"
                            ),
                        });
                    }
                    cursor = *t;
                }
                if cursor != channels {
                    return Err(Error::InvalidNode {
                        node: node.id.clone(),
                        message: format!("concat segments cover [0, {cursor}) but node declares {channels} channels"),
                    });
                }
            }
        }
        Ok(())
    }
}
