use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Graph, Label};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DatasetFormat {
    /// TUDataset text layout: `DS_A.txt`, `DS_graph_indicator.txt`,
    /// `DS_graph_labels.txt`, optional `DS_node_labels.txt` and
    /// `DS_edge_labels.txt`. All indices 1-based.
    TuText,
    /// One JSON object per line: `nodes`, `edges`, optional `edge_labels`, `label`.
    Jsonl,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tu" | "tu_text" | "tu-text" => Ok(DatasetFormat::TuText),
            "jsonl" => Ok(DatasetFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format {other:?}"
            ))),
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<Graph>> {
    match format {
        DatasetFormat::TuText => load_tu(path),
        DatasetFormat::Jsonl => load_jsonl(path),
    }
}

#[derive(Serialize, Deserialize)]
struct JsonGraph {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<Label>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_nodes: Option<usize>,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_labels: Option<Vec<Option<Label>>>,
    label: usize,
}

fn load_jsonl(path: &Path) -> Result<Vec<Graph>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut graphs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            file: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: JsonGraph = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let edges: Vec<(usize, usize)> = record.edges.iter().map(|&[a, b]| (a, b)).collect();
        let node_labels = match (record.nodes, record.num_nodes) {
            (Some(labels), _) => labels,
            (None, Some(n)) => degree_labels(n, &edges)
                .map_err(|e| Error::Structure(format!("line {}: {e}", i + 1)))?,
            (None, None) => return Err(parse_err("missing field `nodes`".into())),
        };
        let g = Graph::new(node_labels, edges, record.edge_labels, record.label)
            .map_err(|e| Error::Structure(format!("{}:{}: {e}", path.display(), i + 1)))?;
        graphs.push(g);
    }
    Ok(graphs)
}

pub fn save_jsonl(graphs: &[Graph], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for g in graphs {
        let record = JsonGraph {
            nodes: Some(g.node_labels().to_vec()),
            num_nodes: None,
            edges: g.edges().iter().map(|&(a, b)| [a, b]).collect(),
            edge_labels: g.has_edge_labels().then(|| g.edge_labels().to_vec()),
            label: g.class_label(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn degree_labels(n: usize, edges: &[(usize, usize)]) -> Result<Vec<Label>> {
    let mut deg = vec![0u32; n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::Structure(format!(
                "edge ({a}, {b}) references a node outside 0..{n}"
            )));
        }
        deg[a] += 1;
        deg[b] += 1;
    }
    Ok(deg)
}

/// Resolves `dir` (holding exactly one `*_A.txt`) or an explicit `dir/DS`
/// prefix to the dataset prefix.
fn tu_prefix(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter_map(|n| n.strip_suffix("_A.txt").map(str::to_owned))
            .collect();
        names.sort();
        match names.as_slice() {
            [one] => Ok(path.join(one)),
            [] => Err(Error::InvalidArgument(format!(
                "no *_A.txt file in {}",
                path.display()
            ))),
            _ => Err(Error::InvalidArgument(format!(
                "several datasets in {}; pass the DS prefix explicitly",
                path.display()
            ))),
        }
    } else {
        Ok(path.to_path_buf())
    }
}

fn component(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_owned()))
        .collect())
}

fn parse_field<T: FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        file: path.to_path_buf(),
        line,
        message: format!("cannot parse {what} from {field:?}"),
    })
}

fn read_column<T: FromStr>(path: &Path, what: &str) -> Result<Vec<T>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            // multi-column label files: first column is the label
            let first = text.split(',').next().unwrap_or("");
            parse_field(path, line, first, what)
        })
        .collect()
}

fn load_tu(path: &Path) -> Result<Vec<Graph>> {
    let prefix = tu_prefix(path)?;
    let a_path = component(&prefix, "_A.txt");
    let ind_path = component(&prefix, "_graph_indicator.txt");
    let gl_path = component(&prefix, "_graph_labels.txt");
    let nl_path = component(&prefix, "_node_labels.txt");
    let el_path = component(&prefix, "_edge_labels.txt");

    for required in [&a_path, &ind_path, &gl_path] {
        if !required.is_file() {
            return Err(Error::InvalidArgument(format!(
                "missing TU component {}",
                required.display()
            )));
        }
    }

    let indicator: Vec<usize> = read_column(&ind_path, "graph id")?;
    let raw_graph_labels: Vec<i64> = read_column(&gl_path, "graph label")?;
    let n_graphs = raw_graph_labels.len();
    let n_nodes = indicator.len();

    // dense remap of class labels in ascending order (e.g. {-1, 1} -> {0, 1})
    let classes: Vec<i64> = raw_graph_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let class_of = |raw: i64| classes.binary_search(&raw).expect("label collected above");

    let node_labels: Option<Vec<Label>> = if nl_path.is_file() {
        let labels: Vec<Label> = read_column(&nl_path, "node label")?;
        if labels.len() != n_nodes {
            return Err(Error::Structure(format!(
                "{} has {} rows, graph indicator has {}",
                nl_path.display(),
                labels.len(),
                n_nodes
            )));
        }
        Some(labels)
    } else {
        None
    };

    // node id (1-based global) -> (graph index, local index)
    let mut local = Vec::with_capacity(n_nodes);
    let mut sizes = vec![0usize; n_graphs];
    for (row, &gid) in indicator.iter().enumerate() {
        if gid == 0 || gid > n_graphs {
            return Err(Error::Parse {
                file: ind_path.clone(),
                line: row + 1,
                message: format!("graph id {gid} outside 1..={n_graphs}"),
            });
        }
        local.push((gid - 1, sizes[gid - 1]));
        sizes[gid - 1] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Structure(format!("graph {} has no nodes", empty + 1)));
    }

    let a_lines = read_lines(&a_path)?;
    let edge_label_column: Option<Vec<Label>> = if el_path.is_file() {
        let labels: Vec<Label> = read_column(&el_path, "edge label")?;
        if labels.len() != a_lines.len() {
            return Err(Error::Structure(format!(
                "{} has {} rows, {} has {}",
                el_path.display(),
                labels.len(),
                a_path.display(),
                a_lines.len()
            )));
        }
        Some(labels)
    } else {
        None
    };

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    let mut edge_labels: Vec<Vec<Option<Label>>> = vec![Vec::new(); n_graphs];
    let mut seen: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); n_graphs];
    for (row, (line, text)) in a_lines.iter().enumerate() {
        let mut fields = text.split(',');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                file: a_path.clone(),
                line: *line,
                message: format!("expected \"i, j\", got {text:?}"),
            });
        };
        let a: usize = parse_field(&a_path, *line, a, "node id")?;
        let b: usize = parse_field(&a_path, *line, b, "node id")?;
        let lookup = |id: usize| {
            if id == 0 || id > n_nodes {
                Err(Error::Structure(format!(
                    "{}:{line}: node id {id} outside 1..={n_nodes}",
                    a_path.display()
                )))
            } else {
                Ok(local[id - 1])
            }
        };
        let (ga, la) = lookup(a)?;
        let (gb, lb) = lookup(b)?;
        if ga != gb {
            return Err(Error::Structure(format!(
                "{}:{line}: edge joins graphs {} and {}",
                a_path.display(),
                ga + 1,
                gb + 1
            )));
        }
        if la == lb {
            // self-loops carry no motif information and break the simple-graph invariant
            continue;
        }
        let key = (la.min(lb), la.max(lb));
        if seen[ga].insert(key) {
            edges[ga].push(key);
            edge_labels[ga].push(edge_label_column.as_ref().map(|c| c[row]));
        }
    }

    let mut graphs = Vec::with_capacity(n_graphs);
    let mut offset = 0;
    for g in 0..n_graphs {
        let labels = match &node_labels {
            Some(all) => all[offset..offset + sizes[g]].to_vec(),
            None => degree_labels(sizes[g], &edges[g])?,
        };
        offset += sizes[g];
        let el = edge_label_column.is_some().then(|| std::mem::take(&mut edge_labels[g]));
        graphs.push(Graph::new(
            labels,
            std::mem::take(&mut edges[g]),
            el,
            class_of(raw_graph_labels[g]),
        )?);
    }
    Ok(graphs)
}
