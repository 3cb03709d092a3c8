//! Storage node descriptions and liveness bookkeeping.

use std::path::PathBuf;

use crate::StoreError;

/// Where a node keeps its chunks: a local directory, or a block server
/// reachable over TCP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeTarget {
    Dir(PathBuf),
    Tcp(String),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub target: NodeTarget,
    pub alive: bool,
}

impl Node {
    pub fn dir(id: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            target: NodeTarget::Dir(root.into()),
            alive: true,
        }
    }

    pub fn tcp(id: impl Into<String>, addr: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            target: NodeTarget::Tcp(addr.into()),
            alive: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeRegistry {
    nodes: Vec<Node>,
}

impl NodeRegistry {
    /// Node ids must be unique, non-empty, and comma/whitespace-free so
    /// they survive the manifest placement syntax.
    pub fn new(nodes: Vec<Node>) -> Result<Self, StoreError> {
        for (i, node) in nodes.iter().enumerate() {
            if node.id.is_empty() || node.id.contains(',') || node.id.chars().any(char::is_whitespace)
            {
                return Err(StoreError::BadNodeId(node.id.clone()));
            }
            if nodes[..i].iter().any(|other| other.id == node.id) {
                return Err(StoreError::DuplicateNode(node.id.clone()));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn alive_nodes(&self) -> Vec<&Node> {
        self.nodes.iter().filter(|n| n.alive).collect()
    }

    pub fn mark_dead(&mut self, id: &str) -> Result<(), StoreError> {
        self.set_alive(id, false)
    }

    pub fn mark_alive(&mut self, id: &str) -> Result<(), StoreError> {
        self.set_alive(id, true)
    }

    fn set_alive(&mut self, id: &str, alive: bool) -> Result<(), StoreError> {
        match self.nodes.iter_mut().find(|n| n.id == id) {
            Some(node) => {
                node.alive = alive;
                Ok(())
            }
            None => Err(StoreError::UnknownNode(id.to_string())),
        }
    }
}
