//! Parsing of the `--nodes` registry syntax.

use chunkstore::{Node, NodeRegistry};

/// Parses `id=dir:<path>` / `id=tcp:<host:port>` entries separated by
/// commas. The error string names what was wrong; the caller turns it
/// into a usage error.
pub fn parse_nodes(spec: &str) -> Result<NodeRegistry, String> {
    if spec.trim().is_empty() {
        return Err("--nodes is empty".into());
    }
    let mut nodes = Vec::new();
    for entry in spec.split(',') {
        let (id, target) = entry
            .split_once('=')
            .ok_or_else(|| format!("--nodes entry {entry:?} is missing `=`"))?;
        let (kind, rest) = target
            .split_once(':')
            .ok_or_else(|| format!("--nodes entry {entry:?} is missing `dir:` or `tcp:`"))?;
        if rest.is_empty() {
            return Err(format!("--nodes entry {entry:?} has an empty target"));
        }
        match kind {
            "dir" => nodes.push(Node::dir(id, rest)),
            "tcp" => nodes.push(Node::tcp(id, rest)),
            other => {
                return Err(format!(
                    "--nodes entry {entry:?} has unknown kind {other:?} (want dir or tcp)"
                ))
            }
        }
    }
    NodeRegistry::new(nodes).map_err(|e| format!("--nodes: {e}"))
}
