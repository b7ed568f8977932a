//! CSV file formats. Node identifiers in design and edge files are arbitrary
//! strings, mapped to dense indices in order of first appearance in the
//! design file.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use netspill_core::mixture::PosteriorTable;
use netspill_core::sim::SimFailure;
use netspill_core::{Condition, DirectedGraph, Error as CoreError};

use crate::error::{CliError, Result};

/// String identifiers of the nodes, indexed by dense node index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl NodeIndex {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    fn push(&mut self, id: &str) -> bool {
        if self.lookup.contains_key(id) {
            return false;
        }
        self.lookup.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        true
    }
}

/// Contents of a design file.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    pub nodes: NodeIndex,
    pub treatment: Vec<bool>,
    pub outcomes: Vec<f64>,
    /// Optional `group` column, used to split pairs into strata.
    pub groups: Option<Vec<u32>>,
}

struct Table {
    reader: csv::Reader<File>,
    headers: Vec<String>,
}

impl Table {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        Ok(Self { reader, headers })
    }

    fn column(&self, path: &Path, name: &'static str) -> Result<usize> {
        self.optional(name).ok_or(CliError::MissingColumn {
            path: path.to_path_buf(),
            column: name,
        })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Every data row with its 1-based line number.
    fn rows(&mut self, path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
        let mut out = Vec::new();
        for rec in self.reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            out.push((line, rec));
        }
        Ok(out)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::parse(path, line, e.to_string())
}

fn field<'a>(path: &Path, line: u64, rec: &'a csv::StringRecord, col: usize) -> Result<&'a str> {
    rec.get(col)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| CliError::parse(path, line, format!("empty field in column {}", col + 1)))
}

fn parse_f64(path: &Path, line: u64, what: &str, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::parse(
            path,
            line,
            format!("{what} `{s}` is not a finite number"),
        )),
    }
}

fn parse_treatment(path: &Path, line: u64, s: &str) -> Result<bool> {
    match s {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        _ => Err(CliError::parse(path, line, format!("treatment `{s}` is not 0/1"))),
    }
}

/// Reads a `node,treatment,outcome[,group]` file.
pub fn read_design(path: &Path) -> Result<DesignTable> {
    let mut table = Table::open(path)?;
    let c_node = table.column(path, "node")?;
    let c_t = table.column(path, "treatment")?;
    let c_y = table.column(path, "outcome")?;
    let c_g = table.optional("group");
    let mut nodes = NodeIndex::default();
    let mut treatment = Vec::new();
    let mut outcomes = Vec::new();
    let mut group_ids = NodeIndex::default();
    let mut groups = Vec::new();
    for (line, rec) in table.rows(path)? {
        let id = field(path, line, &rec, c_node)?;
        if !nodes.push(id) {
            return Err(CliError::parse(path, line, format!("duplicate node `{id}`")));
        }
        treatment.push(parse_treatment(path, line, field(path, line, &rec, c_t)?)?);
        outcomes.push(parse_f64(path, line, "outcome", field(path, line, &rec, c_y)?)?);
        if let Some(c) = c_g {
            let g = field(path, line, &rec, c)?;
            group_ids.push(g);
            groups.push(group_ids.get(g).expect("just inserted") as u32);
        }
    }
    if nodes.is_empty() {
        return Err(CliError::config(path, "no subjects"));
    }
    Ok(DesignTable {
        nodes,
        treatment,
        outcomes,
        groups: c_g.map(|_| groups),
    })
}

fn graph_error(path: &Path, line: u64, e: CoreError) -> CliError {
    CliError::parse(path, line, e.to_string())
}

/// Reads a `src,dst[,stratum]` file whose endpoints are identifiers from
/// `nodes`.
pub fn read_edges(path: &Path, nodes: &NodeIndex) -> Result<DirectedGraph> {
    let mut table = Table::open(path)?;
    let c_src = table.column(path, "src")?;
    let c_dst = table.column(path, "dst")?;
    let c_stratum = table.optional("stratum");
    let resolve = |line: u64, id: &str| {
        nodes
            .get(id)
            .ok_or_else(|| CliError::parse(path, line, format!("unknown node `{id}`")))
    };
    let mut edges = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in table.rows(path)? {
        let src = resolve(line, field(path, line, &rec, c_src)?)?;
        let dst = resolve(line, field(path, line, &rec, c_dst)?)?;
        check_pair(path, line, src, dst, &mut seen)?;
        let label = match c_stratum {
            Some(c) => field(path, line, &rec, c)?.to_string(),
            None => String::new(),
        };
        edges.push((src, dst, label));
    }
    build_graph(nodes.len(), edges, c_stratum.is_some()).map_err(|e| graph_error(path, 0, e))
}

/// Reads a `src,dst[,stratum]` file of dense integer node indices. The node
/// count is `n_nodes` when given, else one more than the largest index.
pub fn read_edge_list(path: &Path, n_nodes: Option<usize>) -> Result<DirectedGraph> {
    let mut table = Table::open(path)?;
    let c_src = table.column(path, "src")?;
    let c_dst = table.column(path, "dst")?;
    let c_stratum = table.optional("stratum");
    let index = |line: u64, s: &str| {
        s.parse::<usize>()
            .map_err(|_| CliError::parse(path, line, format!("node `{s}` is not a nonnegative integer")))
    };
    let mut edges = Vec::new();
    let mut seen = HashMap::new();
    let mut max = None;
    for (line, rec) in table.rows(path)? {
        let src = index(line, field(path, line, &rec, c_src)?)?;
        let dst = index(line, field(path, line, &rec, c_dst)?)?;
        check_pair(path, line, src, dst, &mut seen)?;
        if let Some(n) = n_nodes {
            if src.max(dst) >= n {
                return Err(CliError::parse(
                    path,
                    line,
                    format!("node {} out of range for {n} nodes", src.max(dst)),
                ));
            }
        }
        max = max.max(Some(src.max(dst)));
        let label = match c_stratum {
            Some(c) => field(path, line, &rec, c)?.to_string(),
            None => String::new(),
        };
        edges.push((src, dst, label));
    }
    let n = n_nodes.unwrap_or(max.map_or(0, |m| m + 1));
    build_graph(n, edges, c_stratum.is_some()).map_err(|e| graph_error(path, 0, e))
}

fn check_pair(path: &Path, line: u64, src: usize, dst: usize, seen: &mut HashMap<(usize, usize), u64>) -> Result<()> {
    if src == dst {
        return Err(CliError::parse(path, line, CoreError::SelfLoop(src).to_string()));
    }
    if let Some(first) = seen.insert((src, dst), line) {
        return Err(CliError::parse(
            path,
            line,
            format!("{} (first on line {first})", CoreError::DuplicateEdge { src, dst }),
        ));
    }
    Ok(())
}

fn build_graph(n: usize, edges: Vec<(usize, usize, String)>, labeled: bool) -> netspill_core::Result<DirectedGraph> {
    if labeled {
        DirectedGraph::from_labeled_edges(n, edges)
    } else {
        DirectedGraph::from_edges(n, edges.into_iter().map(|(s, d, _)| (s, d)))
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for rec in rows {
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes `g` with dense integer indices, including the stratum column when
/// the edges carry labels.
pub fn write_edge_list(g: &DirectedGraph, path: &Path) -> Result<()> {
    std::fs::write(path, edge_list_csv(g)).map_err(|e| CliError::io(path, e))
}

pub fn edge_list_csv(g: &DirectedGraph) -> Vec<u8> {
    let labeled = g.edge_strata().is_some();
    let header: &[&str] = if labeled {
        &["src", "dst", "stratum"]
    } else {
        &["src", "dst"]
    };
    let rows = (0..g.n_nodes()).flat_map(|dst| {
        g.in_neighbors(dst)
            .expect("node in range")
            .iter()
            .enumerate()
            .map(move |(k, &src)| {
                let mut rec = vec![src.to_string(), dst.to_string()];
                if labeled {
                    rec.push(g.edge_label(dst, k).unwrap_or_default().to_string());
                }
                rec
            })
    });
    csv_bytes(header, rows)
}

/// Reads `node` plus one column per condition name, e.g.
/// `node,no_exposure,indirect_exposure,direct_exposure,full_exposure`.
pub fn read_potential_outcomes(path: &Path) -> Result<(NodeIndex, Vec<[f64; 4]>)> {
    let mut table = Table::open(path)?;
    let c_node = table.column(path, "node")?;
    let cols = [
        table.column(path, Condition::NoExposure.name())?,
        table.column(path, Condition::IndirectExposure.name())?,
        table.column(path, Condition::DirectExposure.name())?,
        table.column(path, Condition::FullExposure.name())?,
    ];
    let mut nodes = NodeIndex::default();
    let mut values = Vec::new();
    for (line, rec) in table.rows(path)? {
        let id = field(path, line, &rec, c_node)?;
        if !nodes.push(id) {
            return Err(CliError::parse(path, line, format!("duplicate node `{id}`")));
        }
        let mut row = [0.0; 4];
        for (c, &col) in cols.iter().enumerate() {
            row[c] = parse_f64(path, line, "potential outcome", field(path, line, &rec, col)?)?;
        }
        values.push(row);
    }
    if nodes.is_empty() {
        return Err(CliError::config(path, "no subjects"));
    }
    Ok((nodes, values))
}

/// Nonzero entries of `table` as `node,condition,degree,probability`.
pub fn responsibilities_csv(table: &PosteriorTable, nodes: &NodeIndex) -> Vec<u8> {
    let rows = table.rows.iter().zip(nodes.ids()).flat_map(|(row, id)| {
        [false, true].into_iter().flat_map(move |indirect| {
            let c = row.condition(indirect);
            row.arm(indirect)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(move |(d, v)| vec![id.clone(), c.name().to_string(), d.to_string(), v.to_string()])
        })
    });
    csv_bytes(&["node", "condition", "degree", "probability"], rows)
}

/// Long-format simulation grid `p,q,method,condition,stat,value`.
pub fn grid_csv(rows: &[(f64, f64, &str, &str, &str, f64)]) -> Vec<u8> {
    let rows = rows.iter().map(|(p, q, method, condition, stat, value)| {
        vec![
            p.to_string(),
            q.to_string(),
            method.to_string(),
            condition.to_string(),
            stat.to_string(),
            value.to_string(),
        ]
    });
    csv_bytes(&["p", "q", "method", "condition", "stat", "value"], rows)
}

/// Estimates that failed during a simulation run.
pub fn failures_csv(failures: &[SimFailure]) -> Vec<u8> {
    let rows = failures.iter().map(|f| {
        vec![
            f.network.to_string(),
            f.rep.to_string(),
            f.p.to_string(),
            f.q.to_string(),
            f.method.name().to_string(),
            f.error.clone(),
        ]
    });
    csv_bytes(&["network", "rep", "p", "q", "method", "error"], rows)
}
