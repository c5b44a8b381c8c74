//! Plain-text edge lists: a header `n m`, then `m` lines `u v w` with
//! 1-indexed vertices.

use crate::error::{Error, Result};
use crate::graph::Graph;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn fields<const K: usize>(line_no: usize, line: &str) -> Result<[i64; K]> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != K {
        return Err(parse_err(line_no, format!("expected {K} fields, found {}", parts.len())));
    }
    let mut out = [0i64; K];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse()
            .map_err(|_| parse_err(line_no, format!("`{p}` is not an integer")))?;
    }
    Ok(out)
}

pub fn parse_gset(text: &str) -> Result<Graph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (header_no, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let [n, m] = fields::<2>(header_no, header)?;
    if n < 0 || m < 0 {
        return Err(parse_err(header_no, "negative counts in header"));
    }
    let n = n as usize;
    let mut edges = Vec::with_capacity(m as usize);
    let mut seen = std::collections::HashSet::with_capacity(m as usize);
    let mut last_line = header_no;
    for (line_no, line) in lines {
        last_line = line_no;
        if edges.len() == m as usize {
            return Err(parse_err(line_no, format!("more than {m} edge lines")));
        }
        let [u, v, w] = fields::<3>(line_no, line)?;
        for x in [u, v] {
            if x < 1 || x as usize > n {
                return Err(parse_err(line_no, format!("vertex {x} outside 1..={n}")));
            }
        }
        if u == v {
            return Err(parse_err(line_no, format!("self-loop on vertex {u}")));
        }
        let (a, b) = ((u.min(v) - 1) as usize, (u.max(v) - 1) as usize);
        if !seen.insert((a, b)) {
            return Err(parse_err(line_no, format!("duplicate edge {u} {v}")));
        }
        edges.push((a, b, w));
    }
    if edges.len() != m as usize {
        return Err(parse_err(last_line, format!("header promises {m} edges, found {}", edges.len())));
    }
    Graph::from_edges(n, edges)
}

/// Serializes with edges in canonical `(u < v)` order.
pub fn write_gset(graph: &Graph) -> String {
    let mut out = format!("{} {}\n", graph.n_vertices(), graph.n_edges());
    for (u, v, w) in graph.edges() {
        out.push_str(&format!("{} {} {}\n", u + 1, v + 1, w));
    }
    out
}

pub fn read_gset(path: &std::path::Path) -> Result<Graph> {
    parse_gset(&std::fs::read_to_string(path)?)
}
