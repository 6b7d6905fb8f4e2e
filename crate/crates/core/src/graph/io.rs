use std::io::{BufRead, Write};

use super::GraphError;

/// Reads `i j` pairs, one per line. Blank lines and lines starting with `#`
/// are skipped.
pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Vec<(u64, u64)>, GraphError> {
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u64, GraphError> {
            let tok = tok.ok_or_else(|| GraphError::Parse {
                line: lineno + 1,
                msg: "expected two node ids".into(),
            })?;
            tok.parse().map_err(|_| GraphError::Parse {
                line: lineno + 1,
                msg: format!("bad node id {tok:?}"),
            })
        };
        let i = parse(it.next())?;
        let j = parse(it.next())?;
        if it.next().is_some() {
            return Err(GraphError::Parse {
                line: lineno + 1,
                msg: "trailing tokens after edge".into(),
            });
        }
        edges.push((i, j));
    }
    Ok(edges)
}

pub fn write_edge_list<W: Write>(
    mut writer: W,
    edges: impl IntoIterator<Item = (u64, u64)>,
) -> std::io::Result<()> {
    for (i, j) in edges {
        writeln!(writer, "{i} {j}")?;
    }
    Ok(())
}
