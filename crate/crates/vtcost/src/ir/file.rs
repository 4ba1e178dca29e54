//! JSON on-disk format for model graphs.
//!
//! The file is an object `{name, input_shape, nodes, edges}` where each node
//! is `{id, kind, params, stage_tag, output_shape}` and each edge is
//! `{producer, consumer, channel_range}`. Unknown fields are rejected.
//! Model inputs are the nodes with no incoming edges, so they are not stored
//! explicitly; saving and reloading yields a graph equal up to node ordering.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::ir::{Edge, LayerKind, LayerNode, ModelGraph, StageTag, TensorShape};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGraph {
    name: String,
    input_shape: TensorShape,
    nodes: Vec<FileNode>,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileNode {
    id: String,
    kind: String,
    params: Value,
    stage_tag: StageTag,
    output_shape: TensorShape,
}

fn node_to_file(node: &LayerNode) -> Result<FileNode> {
    let tagged = serde_json::to_value(&node.kind)?;
    let (kind, params) = match tagged {
        Value::Object(mut map) => {
            let kind = map
                .remove("kind")
                .and_then(|v| v.as_str().map(str::to_string))
                .ok_or_else(|| Error::Parse("missing kind tag".into()))?;
            let params = map.remove("params").unwrap_or(Value::Object(Map::new()));
            (kind, params)
        }
        _ => return Err(Error::Parse("layer kind did not serialize to an object".into())),
    };
    Ok(FileNode {
        id: node.id.clone(),
        kind,
        params,
        stage_tag: node.stage_tag,
        output_shape: node.output_shape,
    })
}

fn node_from_file(file: FileNode) -> Result<LayerNode> {
    let mut map = Map::new();
    map.insert("kind".into(), Value::String(file.kind.clone()));
    map.insert("params".into(), file.params);
    let kind: LayerKind = serde_json::from_value(Value::Object(map)).map_err(|e| Error::InvalidNode {
        node: file.id.clone(),
        message: format!("bad kind/params: {e}"),
    })?;
    Ok(LayerNode {
        id: file.id,
        kind,
        stage_tag: file.stage_tag,
        output_shape: file.output_shape,
    })
}

/// Serialize a graph to the IR JSON format.
pub fn to_json(graph: &ModelGraph) -> Result<String> {
    let file = FileGraph {
        name: graph.name.clone(),
        input_shape: graph.input_shape,
        nodes: graph.nodes.iter().map(node_to_file).collect::<Result<_>>()?,
        edges: graph.edges.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parse and validate a graph from IR JSON.
pub fn from_json(text: &str) -> Result<ModelGraph> {
    let file: FileGraph = serde_json::from_str(text)?;
    let nodes: Vec<LayerNode> = file.nodes.into_iter().map(node_from_file).collect::<Result<_>>()?;
    // Model inputs are the roots: nodes nothing produces into.
    let consumed: BTreeSet<&str> = file.edges.iter().map(|e| e.consumer.as_str()).collect();
    let inputs: Vec<String> = nodes
        .iter()
        .filter(|n| !consumed.contains(n.id.as_str()))
        .map(|n| n.id.clone())
        .collect();
    ModelGraph::new(file.name, file.input_shape, nodes, file.edges, inputs)
}

pub fn save_graph(graph: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(graph)?)?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<ModelGraph> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::StageGroup;

    fn tiny_graph() -> ModelGraph {
        let nodes = vec![
            LayerNode {
                id: "stem".into(),
                kind: LayerKind::Conv2D {
                    in_channels: 3,
                    out_channels: 8,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                    in_h: 8,
                    in_w: 8,
                },
                stage_tag: StageTag::Backbone,
                output_shape: TensorShape::spatial(8, 8, 8),
            },
            LayerNode {
                id: "act".into(),
                kind: LayerKind::Activation { elements: 512 },
                stage_tag: StageTag::Backbone,
                output_shape: TensorShape::spatial(8, 8, 8),
            },
        ];
        let edges = vec![Edge::full("stem", "act", 8)];
        ModelGraph::new("tiny", TensorShape::spatial(8, 8, 3), nodes, edges, vec!["stem".into()]).unwrap()
    }

    #[test]
    fn round_trip_preserves_graph() {
        let g = tiny_graph();
        let text = to_json(&g).unwrap();
        let g2 = from_json(&text).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn unknown_node_field_rejected() {
        let g = tiny_graph();
        let mut v: Value = serde_json::from_str(&to_json(&g).unwrap()).unwrap();
        v["nodes"][0]["mystery"] = Value::from(1);
        let err = from_json(&serde_json::to_string(&v).unwrap()).unwrap_err();
        assert!(err.to_string().contains("mystery"), "got: {err}");
    }

    #[test]
    fn unknown_param_field_rejected_with_node_id() {
        let g = tiny_graph();
        let mut v: Value = serde_json::from_str(&to_json(&g).unwrap()).unwrap();
        v["nodes"][0]["params"]["bogus"] = Value::from(7);
        let err = from_json(&serde_json::to_string(&v).unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("stem") && msg.contains("bogus"), "got: {msg}");
    }

    #[test]
    fn dangling_edge_rejected() {
        let g = tiny_graph();
        let mut v: Value = serde_json::from_str(&to_json(&g).unwrap()).unwrap();
        v["edges"][0]["consumer"] = Value::from("ghost");
        let err = from_json(&serde_json::to_string(&v).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DanglingEdge(ref n) if n == "ghost"), "got: {err}");
    }

    #[test]
    fn stage_groups_cover_tags() {
        assert_eq!(StageTag::Decoder.group(), StageGroup::Decoder);
        assert_eq!(StageTag::Encoder { stage: 1, block: None }.group(), StageGroup::Encoder);
    }
}
