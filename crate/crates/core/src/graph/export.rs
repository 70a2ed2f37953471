use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Edge, GraphError, ReplyGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            other => Err(GraphError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonEdge {
    pub parent: usize,
    pub child: usize,
    pub w: f64,
}

/// On-disk graph document:
/// `{"n": int, "edges": [{"parent", "child", "w"}], "roots": [int]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<JsonEdge>,
    pub roots: Vec<usize>,
}

impl GraphJson {
    pub fn from_graph(graph: &ReplyGraph) -> Self {
        Self {
            n: graph.node_count(),
            edges: graph
                .edges()
                .map(|e| JsonEdge {
                    parent: e.parent,
                    child: e.child,
                    w: e.weight,
                })
                .collect(),
            roots: graph.roots(),
        }
    }

    pub fn to_graph(&self) -> Result<ReplyGraph, GraphError> {
        ReplyGraph::from_edges(
            self.n,
            self.edges.iter().map(|e| Edge {
                parent: e.parent,
                child: e.child,
                weight: e.w,
            }),
        )
    }
}

impl ReplyGraph {
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str::<GraphJson>(text)?.to_graph()
    }
}

pub fn export_graph(graph: &ReplyGraph, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(&GraphJson::from_graph(graph)).expect("graph json serializes");
            out.push(b'\n');
            out
        }
        ExportFormat::Dot => {
            let mut s = String::from("digraph replies {\n");
            for node in 0..graph.node_count() {
                let _ = writeln!(s, "  {node};");
            }
            for e in graph.edges() {
                let _ = writeln!(s, "  {} -> {} [label=\"{:.4}\"];", e.parent, e.child, e.weight);
            }
            s.push_str("}\n");
            s.into_bytes()
        }
    }
}
