//! In-memory data types shared by every stage: categorical attribute tables,
//! sparse rating triples and weighted relation graphs.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Value recorded for an empty cell in a categorical table. It takes part in
/// frequency counts like any other value.
pub const MISSING: &str = "⊥";

/// Bijection between external string ids and dense indices, in
/// first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an index from ids that must be unique.
    pub fn from_unique<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = Self::new();
        for id in ids {
            let id = id.into();
            if index.lookup.contains_key(&id) {
                return Err(Error::DuplicateId(id));
            }
            index.get_or_insert(&id);
        }
        Ok(index)
    }

    /// Dense ids `prefix0 .. prefix{n-1}`.
    pub fn sequential(prefix: &str, n: usize) -> Self {
        let mut index = Self::new();
        for i in 0..n {
            index.get_or_insert(&format!("{prefix}{i}"));
        }
        index
    }

    pub fn get_or_insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.lookup.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), i);
        i
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Objects described by categorical attributes. Cells hold value codes that
/// index into the attribute's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalTable {
    objects: IdIndex,
    attribute_names: Vec<String>,
    domains: Vec<Vec<String>>,
    /// Row-major, `objects.len() * attribute_names.len()`.
    cells: Vec<usize>,
}

impl CategoricalTable {
    pub fn new(
        object_ids: Vec<String>,
        attribute_names: Vec<String>,
        domains: Vec<Vec<String>>,
        rows: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = attribute_names.len();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "table needs at least one attribute".into(),
            ));
        }
        let mut seen = HashSet::new();
        for name in &attribute_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate attribute `{name}`"
                )));
            }
        }
        if domains.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} domains for {n} attributes",
                domains.len()
            )));
        }
        if let Some(j) = domains.iter().position(|d| d.is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "attribute `{}` has an empty domain",
                attribute_names[j]
            )));
        }
        if rows.len() != object_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows for {} objects",
                rows.len(),
                object_ids.len()
            )));
        }
        let objects = IdIndex::from_unique(object_ids)?;
        let mut cells = Vec::with_capacity(rows.len() * n);
        for (o, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "object `{}` has {} values, expected {n}",
                    objects.id(o),
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if v >= domains[j].len() {
                    return Err(Error::Domain(format!(
                        "object `{}` attribute `{}`: code {v} outside domain of size {}",
                        objects.id(o),
                        attribute_names[j],
                        domains[j].len()
                    )));
                }
            }
            cells.extend(row);
        }
        Ok(Self {
            objects,
            attribute_names,
            domains,
            cells,
        })
    }

    /// Builds a table from string cells. Domains follow first appearance;
    /// empty cells become [`MISSING`], appended after the observed values.
    pub fn from_rows<S: AsRef<str>>(
        object_ids: Vec<String>,
        attribute_names: Vec<String>,
        rows: &[Vec<S>],
    ) -> Result<Self> {
        let n = attribute_names.len();
        let mut domains: Vec<IdIndex> = vec![IdIndex::new(); n];
        let mut has_missing = vec![false; n];
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "row has {} values, expected {n}",
                    row.len()
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                let cell = cell.as_ref();
                if cell.is_empty() || cell == MISSING {
                    has_missing[j] = true;
                } else {
                    domains[j].get_or_insert(cell);
                }
            }
        }
        for (j, domain) in domains.iter_mut().enumerate() {
            if has_missing[j] {
                domain.get_or_insert(MISSING);
            }
        }
        let coded = rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, cell)| {
                        let cell = cell.as_ref();
                        let key = if cell.is_empty() { MISSING } else { cell };
                        domains[j].index_of(key).expect("value registered above")
                    })
                    .collect()
            })
            .collect();
        let domains = domains.into_iter().map(|d| d.ids().to_vec()).collect();
        Self::new(object_ids, attribute_names, domains, coded)
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn objects(&self) -> &IdIndex {
        &self.objects
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn domain(&self, attribute: usize) -> &[String] {
        &self.domains[attribute]
    }

    pub fn domain_size(&self, attribute: usize) -> usize {
        self.domains[attribute].len()
    }

    pub fn row(&self, object: usize) -> &[usize] {
        let n = self.num_attributes();
        &self.cells[object * n..(object + 1) * n]
    }

    pub fn value(&self, object: usize, attribute: usize) -> usize {
        self.cells[object * self.num_attributes() + attribute]
    }

    /// Label of a value code, with [`MISSING`] for the sentinel.
    pub fn label(&self, attribute: usize, value: usize) -> &str {
        &self.domains[attribute][value]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingRange {
    pub min: f64,
    pub max: f64,
}

impl RatingRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidArgument(format!(
                "rating range [{min}, {max}] must satisfy min < max"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

/// Sparse explicit ratings over densely indexed users and items.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    users: IdIndex,
    items: IdIndex,
    ratings: Vec<Rating>,
    range: RatingRange,
}

impl RatingDataset {
    pub fn new(
        users: IdIndex,
        items: IdIndex,
        ratings: Vec<Rating>,
        range: RatingRange,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(ratings.len());
        for r in &ratings {
            if r.user >= users.len() || r.item >= items.len() {
                return Err(Error::InvalidArgument(format!(
                    "rating ({}, {}) outside {}x{} index space",
                    r.user,
                    r.item,
                    users.len(),
                    items.len()
                )));
            }
            if !range.contains(r.value) {
                return Err(Error::InvalidArgument(format!(
                    "rating {} for ({}, {}) outside [{}, {}]",
                    r.value,
                    users.id(r.user),
                    items.id(r.item),
                    range.min,
                    range.max
                )));
            }
            if !seen.insert((r.user, r.item)) {
                return Err(Error::DuplicateRating {
                    user: users.id(r.user).to_owned(),
                    item: items.id(r.item).to_owned(),
                });
            }
        }
        Ok(Self {
            users,
            items,
            ratings,
            range,
        })
    }

    /// Convenience constructor from string triples; ids are indexed in
    /// first-appearance order.
    pub fn from_triples(range: RatingRange, triples: &[(&str, &str, f64)]) -> Result<Self> {
        let mut users = IdIndex::new();
        let mut items = IdIndex::new();
        let ratings = triples
            .iter()
            .map(|&(u, i, value)| Rating {
                user: users.get_or_insert(u),
                item: items.get_or_insert(i),
                value,
            })
            .collect();
        Self::new(users, items, ratings, range)
    }

    pub fn users(&self) -> &IdIndex {
        &self.users
    }

    pub fn items(&self) -> &IdIndex {
        &self.items
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn range(&self) -> RatingRange {
        self.range
    }

    pub fn global_mean(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            return None;
        }
        Some(self.ratings.iter().map(|r| r.value).sum::<f64>() / self.ratings.len() as f64)
    }

    /// The ratings at `positions`, keeping the full user and item index space.
    pub fn subset(&self, positions: &[usize]) -> RatingDataset {
        RatingDataset {
            users: self.users.clone(),
            items: self.items.clone(),
            ratings: positions.iter().map(|&p| self.ratings[p]).collect(),
            range: self.range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Weighted directed relation between nodes of one kind (user-user or
/// item-item).
#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    node_count: usize,
    edges: Vec<Edge>,
    normalized: bool,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl RelationGraph {
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &edges {
            if e.src >= node_count || e.dst >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) outside {node_count} nodes",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                return Err(Error::InvalidArgument(format!(
                    "self-loop on node {}",
                    e.src
                )));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) has weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            adjacency[e.src].push((e.dst, e.weight));
        }
        Ok(Self {
            node_count,
            edges,
            normalized: false,
            adjacency,
        })
    }

    pub fn empty(node_count: usize) -> Self {
        Self {
            node_count,
            edges: Vec::new(),
            normalized: false,
            adjacency: vec![Vec::new(); node_count],
        }
    }

    /// Rescales each node's outgoing weights to sum to one. Nodes whose
    /// outgoing weights are all zero are left untouched.
    pub fn normalized(mut self) -> Self {
        let mut totals = vec![0.0; self.node_count];
        for e in &self.edges {
            totals[e.src] += e.weight;
        }
        for e in &mut self.edges {
            if totals[e.src] > 0.0 {
                e.weight /= totals[e.src];
            }
        }
        for (src, list) in self.adjacency.iter_mut().enumerate() {
            if totals[src] > 0.0 {
                for (_, w) in list.iter_mut() {
                    *w /= totals[src];
                }
            }
        }
        self.normalized = true;
        self
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Outgoing `(dst, weight)` pairs of `node`, in file order.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn from_rows_appends_missing_sentinel() {
        let t = CategoricalTable::from_rows(
            strings(&["a", "b", "c"]),
            strings(&["color"]),
            &[vec![""], vec!["red"], vec!["blue"]],
        )
        .unwrap();
        assert_eq!(t.domain(0), &strings(&["red", "blue", MISSING])[..]);
        assert_eq!(t.value(0, 0), 2);
    }

    #[test]
    fn table_rejects_out_of_domain_code() {
        let err = CategoricalTable::new(
            strings(&["a"]),
            strings(&["x"]),
            vec![strings(&["v"])],
            vec![vec![1]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn dataset_rejects_duplicates_and_range() {
        let range = RatingRange::new(1.0, 5.0).unwrap();
        assert!(matches!(
            RatingDataset::from_triples(range, &[("u", "i", 3.0), ("u", "i", 4.0)]),
            Err(Error::DuplicateRating { .. })
        ));
        assert!(RatingDataset::from_triples(range, &[("u", "i", 6.0)]).is_err());
        assert!(RatingRange::new(5.0, 5.0).is_err());
    }

    #[test]
    fn normalization_sums_to_one() {
        let g = RelationGraph::new(
            3,
            vec![
                Edge {
                    src: 0,
                    dst: 1,
                    weight: 1.0,
                },
                Edge {
                    src: 0,
                    dst: 2,
                    weight: 3.0,
                },
                Edge {
                    src: 1,
                    dst: 0,
                    weight: 0.0,
                },
            ],
        )
        .unwrap()
        .normalized();
        let total: f64 = g.neighbors(0).iter().map(|&(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(g.neighbors(0)[1].1, 0.75);
        assert_eq!(g.neighbors(1)[0].1, 0.0);
    }

    #[test]
    fn graph_rejects_self_loop() {
        assert!(RelationGraph::new(
            2,
            vec![Edge {
                src: 1,
                dst: 1,
                weight: 1.0
            }]
        )
        .is_err());
    }
}
