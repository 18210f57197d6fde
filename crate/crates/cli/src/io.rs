//! Plain-text graph files.
//!
//! * `<prefix>.edges`: `# n=<n>` then one `u v` line per multigraph edge.
//! * `<prefix>.atoms`: one line per atom, `<shape> v1 v2 ...`, the shape
//!   written as `<vertices>:<a>-<b>,...`.
//! * `<prefix>.types.csv`: `vertex,type`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kfgraph::sampler::GeneratedGraph;

use crate::error::{CliError, Result};

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn edges_text(g: &GeneratedGraph) -> String {
    let mut s = format!("# n={}\n", g.n());
    for &(a, b) in g.multi_edges() {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}

pub fn atoms_text(g: &GeneratedGraph) -> String {
    let labels: Vec<String> = g
        .shapes()
        .iter()
        .map(|sh| {
            let e: Vec<String> = sh.edges().iter().map(|(a, b)| format!("{a}-{b}")).collect();
            format!("{}:{}", sh.r(), e.join(","))
        })
        .collect();
    let mut s = String::new();
    for (shape, verts) in g.atoms() {
        s.push_str(&labels[shape]);
        for v in verts {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn types_text(g: &GeneratedGraph) -> String {
    let mut s = String::from("vertex,type\n");
    for (i, t) in g.types().iter().enumerate() {
        let _ = writeln!(s, "{i},{t}");
    }
    s
}

/// Paths written by [`write_graph`].
#[derive(Clone, Debug, serde::Serialize)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub atoms: PathBuf,
    pub types: PathBuf,
}

pub fn write_graph(g: &GeneratedGraph, dir: &Path, prefix: &str) -> Result<GraphFiles> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let files = GraphFiles {
        edges: dir.join(format!("{prefix}.edges")),
        atoms: dir.join(format!("{prefix}.atoms")),
        types: dir.join(format!("{prefix}.types.csv")),
    };
    write_file(&files.edges, &edges_text(g))?;
    write_file(&files.atoms, &atoms_text(g))?;
    write_file(&files.types, &types_text(g))?;
    Ok(files)
}

fn parse_err(path: &Path, line: usize, msg: &str) -> CliError {
    CliError::config(format!("{}:{}: {msg}", path.display(), line + 1))
}

/// Reads an edge file; `n` overrides the header.
pub fn read_edges(path: &Path, n: Option<usize>) -> Result<(usize, Vec<(u32, u32)>)> {
    let text = read_file(path)?;
    let mut header_n = None;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("n=") {
                header_n = Some(v.trim().parse().map_err(|_| parse_err(path, i, "bad n in header"))?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace().map(|t| t.parse::<u32>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b)), None) => edges.push((a, b)),
            _ => return Err(parse_err(path, i, "expected two vertex ids")),
        }
    }
    let n = match n.or(header_n) {
        Some(n) => n,
        None => edges.iter().map(|&(a, b)| a.max(b) as usize + 1).max().unwrap_or(0),
    };
    Ok((n, edges))
}

pub fn read_types(path: &Path) -> Result<Vec<f64>> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (v, t) = line.split_once(',').ok_or_else(|| parse_err(path, i, "expected vertex,type"))?;
        let v: usize = v.trim().parse().map_err(|_| parse_err(path, i, "bad vertex"))?;
        if v != out.len() {
            return Err(parse_err(path, i, "vertices must be listed in order"));
        }
        out.push(t.trim().parse().map_err(|_| parse_err(path, i, "bad type"))?);
    }
    Ok(out)
}

pub fn read_graph(edges: &Path, types: Option<&Path>, n: Option<usize>) -> Result<GeneratedGraph> {
    let types = types.map(read_types).transpose()?;
    let (n, e) = read_edges(edges, n.or(types.as_ref().map(Vec::len)))?;
    let types = types.unwrap_or_else(|| vec![0.0; n]);
    Ok(GeneratedGraph::from_edges(n, types, e)?)
}
