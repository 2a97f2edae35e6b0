//! CSV loaders and writers for attribute tables, ratings and relation graphs.
//!
//! Every file carries a mandatory header row. Fields containing commas are
//! double-quoted; LF and CRLF line endings are both accepted.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{
    CategoricalTable, Edge, IdIndex, Rating, RatingDataset, RatingRange, RelationGraph, MISSING,
};
use crate::error::{Error, Result};

const RATINGS_HEADER: [&str; 3] = ["user_id", "item_id", "rating"];
const GRAPH_HEADER: [&str; 3] = ["src", "dst", "weight"];
const PAIRS_HEADER: [&str; 2] = ["user_id", "item_id"];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn writer<W: Write>(output: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn check_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "{}: expected header `{}`, found `{}`",
                path.display(),
                expected.join(","),
                found.join(",")
            ),
        });
    }
    Ok(())
}

fn check_width(record: &csv::StringRecord, expected: usize) -> Result<()> {
    if record.len() != expected {
        return Err(Error::RaggedRow {
            line: line_of(record),
            found: record.len(),
            expected,
        });
    }
    Ok(())
}

fn parse_f64(record: &csv::StringRecord, field: usize, what: &str) -> Result<f64> {
    let raw = &record[field];
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        line: line_of(record),
        message: format!("cannot parse {what} `{raw}`"),
    })
}

pub fn load_attribute_table(path: impl AsRef<Path>) -> Result<CategoricalTable> {
    let path = path.as_ref();
    read_attribute_table(open(path)?, path)
}

pub fn read_attribute_table<R: Read>(input: R, source: &Path) -> Result<CategoricalTable> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "{}: header needs `id` plus at least one attribute",
                source.display()
            ),
        });
    }
    let width = header.len();
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();

    let mut ids = IdIndex::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(source, e))?;
        check_width(&record, width)?;
        let id = &record[0];
        if ids.index_of(id).is_some() {
            return Err(Error::DuplicateId(id.to_owned()));
        }
        ids.get_or_insert(id);
        rows.push(record.iter().skip(1).map(str::to_owned).collect());
    }
    CategoricalTable::from_rows(ids.ids().to_vec(), names, &rows)
}

pub fn write_attribute_table(table: &CategoricalTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = writer(file);
    let to_csv = |e| Error::csv(path, e);
    let mut header = vec!["id"];
    header.extend(table.attribute_names().iter().map(String::as_str));
    wtr.write_record(&header).map_err(to_csv)?;
    for o in 0..table.num_objects() {
        let mut record = vec![table.objects().id(o)];
        for (j, &v) in table.row(o).iter().enumerate() {
            let label = table.label(j, v);
            record.push(if label == MISSING { "" } else { label });
        }
        wtr.write_record(&record).map_err(to_csv)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn load_ratings(path: impl AsRef<Path>, r_min: f64, r_max: f64) -> Result<RatingDataset> {
    let path = path.as_ref();
    read_ratings(open(path)?, path, RatingRange::new(r_min, r_max)?)
}

pub fn read_ratings<R: Read>(input: R, source: &Path, range: RatingRange) -> Result<RatingDataset> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
    check_header(source, &header, &RATINGS_HEADER)?;

    let mut users = IdIndex::new();
    let mut items = IdIndex::new();
    let mut ratings = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(source, e))?;
        check_width(&record, 3)?;
        let value = parse_f64(&record, 2, "rating")?;
        if !range.contains(value) {
            return Err(Error::RatingOutOfRange {
                line: line_of(&record),
                value,
                min: range.min,
                max: range.max,
            });
        }
        let user = users.get_or_insert(&record[0]);
        let item = items.get_or_insert(&record[1]);
        if !seen.insert((user, item)) {
            return Err(Error::DuplicateRating {
                user: record[0].to_owned(),
                item: record[1].to_owned(),
            });
        }
        ratings.push(Rating { user, item, value });
    }
    RatingDataset::new(users, items, ratings, range)
}

pub fn write_ratings(data: &RatingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = writer(file);
    let to_csv = |e| Error::csv(path, e);
    wtr.write_record(RATINGS_HEADER).map_err(to_csv)?;
    for r in data.ratings() {
        wtr.write_record([
            data.users().id(r.user),
            data.items().id(r.item),
            &r.value.to_string(),
        ])
        .map_err(to_csv)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// A loaded graph plus the number of self-loops that were dropped.
#[derive(Debug, Clone)]
pub struct GraphLoad {
    pub graph: RelationGraph,
    pub self_loops_dropped: usize,
}

/// Loads a `src,dst,weight` edge list. Node ids are resolved against `nodes`,
/// which comes from the ratings or attribute file the graph belongs to.
pub fn load_graph(path: impl AsRef<Path>, nodes: &IdIndex, normalize: bool) -> Result<GraphLoad> {
    let path = path.as_ref();
    read_graph(open(path)?, path, nodes, normalize)
}

pub fn read_graph<R: Read>(
    input: R,
    source: &Path,
    nodes: &IdIndex,
    normalize: bool,
) -> Result<GraphLoad> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
    check_header(source, &header, &GRAPH_HEADER)?;

    let mut edges = Vec::new();
    let mut self_loops_dropped = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(source, e))?;
        check_width(&record, 3)?;
        let resolve = |field: usize| {
            nodes
                .index_of(&record[field])
                .ok_or_else(|| Error::UnknownId(record[field].to_owned()))
        };
        let src = resolve(0)?;
        let dst = resolve(1)?;
        let weight = parse_f64(&record, 2, "weight")?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::NegativeWeight {
                line: line_of(&record),
                weight,
            });
        }
        if src == dst {
            self_loops_dropped += 1;
            continue;
        }
        edges.push(Edge { src, dst, weight });
    }
    let graph = RelationGraph::new(nodes.len(), edges)?;
    let graph = if normalize { graph.normalized() } else { graph };
    Ok(GraphLoad {
        graph,
        self_loops_dropped,
    })
}

pub fn write_graph(graph: &RelationGraph, nodes: &IdIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = writer(file);
    let to_csv = |e| Error::csv(path, e);
    wtr.write_record(GRAPH_HEADER).map_err(to_csv)?;
    for e in graph.edges() {
        wtr.write_record([nodes.id(e.src), nodes.id(e.dst), &e.weight.to_string()])
            .map_err(to_csv)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `user_id,item_id` request file.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let mut rdr = reader(open(path)?);
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    check_header(path, &header, &PAIRS_HEADER)?;
    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        check_width(&record, 2)?;
        pairs.push((record[0].to_owned(), record[1].to_owned()));
    }
    Ok(pairs)
}
