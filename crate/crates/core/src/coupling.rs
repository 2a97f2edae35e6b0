//! Coupled similarity between categorical objects.
//!
//! Two values of the same attribute are compared in two ways. The
//! intra-coupled similarity looks only at how often each value occurs. The
//! inter-coupled similarity compares the conditional distributions the two
//! values induce on every other attribute. Their product is the coupled
//! attribute value similarity, and summing it over attributes gives the
//! coupled object similarity.
//!
//! Frequencies are always taken from the whole table, so the similarity is a
//! fixed function of the value codes once the index is built.

use std::io::Write;

use rayon::prelude::*;

use crate::data::CategoricalTable;
use crate::error::{Error, Result};

/// Largest domain accepted by the exhaustive subset oracle.
pub const EXHAUSTIVE_DOMAIN_LIMIT: usize = 20;

/// Per attribute, the objects carrying each value, plus pairwise
/// co-occurrence counts between values of different attributes.
#[derive(Debug, Clone)]
pub struct FrequencyIndex {
    num_objects: usize,
    num_attributes: usize,
    cells: Vec<usize>,
    domain_sizes: Vec<usize>,
    groups: Vec<Vec<Vec<usize>>>,
    /// `cooc[j * n + k][x * |V_k| + w]` = number of objects with value `x`
    /// on `j` and `w` on `k`. Empty when `j == k`.
    cooc: Vec<Vec<usize>>,
}

impl FrequencyIndex {
    pub fn build(table: &CategoricalTable) -> Self {
        let m = table.num_objects();
        let n = table.num_attributes();
        let domain_sizes: Vec<usize> = (0..n).map(|j| table.domain_size(j)).collect();
        let mut groups: Vec<Vec<Vec<usize>>> =
            domain_sizes.iter().map(|&s| vec![Vec::new(); s]).collect();
        let mut cooc: Vec<Vec<usize>> = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                if j == k {
                    cooc.push(Vec::new());
                } else {
                    cooc.push(vec![0; domain_sizes[j] * domain_sizes[k]]);
                }
            }
        }
        for o in 0..m {
            let row = table.row(o);
            for j in 0..n {
                groups[j][row[j]].push(o);
                for k in 0..n {
                    if j != k {
                        cooc[j * n + k][row[j] * domain_sizes[k] + row[k]] += 1;
                    }
                }
            }
        }
        let cells = (0..m).flat_map(|o| table.row(o).iter().copied()).collect();
        Self {
            num_objects: m,
            num_attributes: n,
            cells,
            domain_sizes,
            groups,
            cooc,
        }
    }

    pub fn num_objects(&self) -> usize {
        self.num_objects
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attributes
    }

    pub fn domain_size(&self, attribute: usize) -> usize {
        self.domain_sizes[attribute]
    }

    /// Objects whose value on `attribute` is `value`, in ascending order.
    pub fn group(&self, attribute: usize, value: usize) -> &[usize] {
        &self.groups[attribute][value]
    }

    pub fn count(&self, attribute: usize, value: usize) -> usize {
        self.groups[attribute][value].len()
    }

    pub fn row(&self, object: usize) -> &[usize] {
        let n = self.num_attributes;
        &self.cells[object * n..(object + 1) * n]
    }

    fn check_attribute(&self, attribute: usize) -> Result<()> {
        if attribute >= self.num_attributes {
            return Err(Error::Domain(format!(
                "attribute {attribute} out of range ({} attributes)",
                self.num_attributes
            )));
        }
        Ok(())
    }

    fn check_value(&self, attribute: usize, value: usize) -> Result<()> {
        self.check_attribute(attribute)?;
        if value >= self.domain_sizes[attribute] {
            return Err(Error::Domain(format!(
                "value {value} outside domain of attribute {attribute} (size {})",
                self.domain_sizes[attribute]
            )));
        }
        Ok(())
    }

    fn check_present(&self, attribute: usize, value: usize) -> Result<()> {
        self.check_value(attribute, value)?;
        if self.count(attribute, value) == 0 {
            return Err(Error::Domain(format!(
                "value {value} of attribute {attribute} occurs in no object"
            )));
        }
        Ok(())
    }

    fn check_object(&self, object: usize) -> Result<()> {
        if object >= self.num_objects {
            return Err(Error::Domain(format!(
                "object {object} out of range ({} objects)",
                self.num_objects
            )));
        }
        Ok(())
    }

    /// Intra-coupled attribute value similarity: `f_x f_y / (f_x + f_y + f_x f_y)`
    /// where `f_v` is the number of objects holding `v`.
    pub fn iaavs(&self, attribute: usize, x: usize, y: usize) -> Result<f64> {
        self.check_present(attribute, x)?;
        self.check_present(attribute, y)?;
        Ok(intra(self.count(attribute, x), self.count(attribute, y)))
    }

    /// Information conditional probability of the value set `w` of attribute
    /// `k` given value `x` of attribute `j`: the share of objects holding `x`
    /// whose `k` value lies in `w`. Evaluated on the object sets directly.
    pub fn icp(&self, k: usize, w: &[usize], j: usize, x: usize) -> Result<f64> {
        self.check_present(j, x)?;
        self.check_attribute(k)?;
        let mut in_w = vec![false; self.domain_sizes[k]];
        for &v in w {
            self.check_value(k, v)?;
            in_w[v] = true;
        }
        let mut covered = vec![false; self.num_objects];
        for (v, _) in in_w.iter().enumerate().filter(|(_, &b)| b) {
            for &o in self.group(k, v) {
                covered[o] = true;
            }
        }
        let given = self.group(j, x);
        let hits = given.iter().filter(|&&o| covered[o]).count();
        Ok(hits as f64 / given.len() as f64)
    }

    /// Inter-coupled similarity of `x` and `y` (values of `j`) relative to
    /// attribute `k`: the minimum over `W ⊆ V_k` of `2 − P(W|x) − P(V_k∖W|y)`.
    ///
    /// `P(W|x) + P(V_k∖W|y)` is a sum of one term per value of `V_k`, each
    /// value contributing either `P(w|x)` or `P(w|y)`. The minimum therefore
    /// picks the larger term for every value.
    pub fn ieavs_pair(&self, j: usize, k: usize, x: usize, y: usize) -> Result<f64> {
        self.check_present(j, x)?;
        self.check_present(j, y)?;
        self.check_attribute(k)?;
        if j == k {
            return Err(Error::Domain(format!(
                "inter-coupling needs two distinct attributes, got {j} twice"
            )));
        }
        Ok(self.inter_pair(j, k, x, y))
    }

    fn inter_pair(&self, j: usize, k: usize, x: usize, y: usize) -> f64 {
        if x == y {
            return 1.0;
        }
        let vk = self.domain_sizes[k];
        let table = &self.cooc[j * self.num_attributes + k];
        let fx = self.count(j, x) as f64;
        let fy = self.count(j, y) as f64;
        let row_x = &table[x * vk..(x + 1) * vk];
        let row_y = &table[y * vk..(y + 1) * vk];
        let overlap: f64 = row_x
            .iter()
            .zip(row_y)
            .map(|(&cx, &cy)| (cx as f64 / fx).max(cy as f64 / fy))
            .sum();
        (2.0 - overlap).clamp(0.0, 1.0)
    }

    /// Literal subset enumeration of [`FrequencyIndex::ieavs_pair`]. Kept as
    /// an independent check; refuses domains above
    /// [`EXHAUSTIVE_DOMAIN_LIMIT`].
    pub fn ieavs_pair_exhaustive(&self, j: usize, k: usize, x: usize, y: usize) -> Result<f64> {
        self.check_present(j, x)?;
        self.check_present(j, y)?;
        self.check_attribute(k)?;
        if j == k {
            return Err(Error::Domain(format!(
                "inter-coupling needs two distinct attributes, got {j} twice"
            )));
        }
        let vk = self.domain_sizes[k];
        if vk > EXHAUSTIVE_DOMAIN_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "exhaustive enumeration refused: attribute {k} has {vk} values (limit {EXHAUSTIVE_DOMAIN_LIMIT})"
            )));
        }
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << vk) {
            let (w, complement): (Vec<usize>, Vec<usize>) =
                (0..vk).partition(|&v| mask & (1 << v) != 0);
            let value = 2.0 - self.icp(k, &w, j, x)? - self.icp(k, &complement, j, y)?;
            best = best.min(value);
        }
        Ok(best)
    }

    /// Inter-coupled similarity aggregated over all other attributes with the
    /// weights in `params`. Equals one when the table has a single attribute.
    pub fn ieavs(&self, params: &CouplingParams, j: usize, x: usize, y: usize) -> Result<f64> {
        self.check_params(params)?;
        self.check_present(j, x)?;
        self.check_present(j, y)?;
        Ok(self.inter(params, j, x, y))
    }

    fn inter(&self, params: &CouplingParams, j: usize, x: usize, y: usize) -> f64 {
        if x == y || self.num_attributes == 1 {
            return 1.0;
        }
        (0..self.num_attributes)
            .filter(|&k| k != j)
            .map(|k| params.weight(j, k) * self.inter_pair(j, k, x, y))
            .sum()
    }

    /// Coupled attribute value similarity: intra times inter.
    pub fn cavs(&self, params: &CouplingParams, j: usize, x: usize, y: usize) -> Result<f64> {
        Ok(self.iaavs(j, x, y)? * self.ieavs(params, j, x, y)?)
    }

    /// Coupled similarity of two objects of the table.
    pub fn cis(&self, params: &CouplingParams, a: usize, b: usize) -> Result<f64> {
        self.check_object(a)?;
        self.check_object(b)?;
        self.cis_values(params, self.row(a), self.row(b))
    }

    /// Coupled similarity of two value vectors, e.g. an object and a mode.
    pub fn cis_values(&self, params: &CouplingParams, a: &[usize], b: &[usize]) -> Result<f64> {
        if a.len() != self.num_attributes || b.len() != self.num_attributes {
            return Err(Error::Domain(format!(
                "value vectors must have {} entries",
                self.num_attributes
            )));
        }
        let mut total = 0.0;
        for j in 0..self.num_attributes {
            total += self.cavs(params, j, a[j], b[j])?;
        }
        Ok(total)
    }

    fn check_params(&self, params: &CouplingParams) -> Result<()> {
        if params.num_attributes() != self.num_attributes {
            return Err(Error::InvalidArgument(format!(
                "coupling weights for {} attributes, table has {}",
                params.num_attributes(),
                self.num_attributes
            )));
        }
        Ok(())
    }
}

fn intra(fx: usize, fy: usize) -> f64 {
    let (fx, fy) = (fx as f64, fy as f64);
    let denom = fx + fy + fx * fy;
    if denom == 0.0 {
        0.0
    } else {
        fx * fy / denom
    }
}

/// Weights `α_jk` combining the pairwise inter-couplings of attribute `j`
/// with every other attribute `k`. Each row sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingParams {
    num_attributes: usize,
    weights: Vec<f64>,
}

impl CouplingParams {
    pub fn uniform(num_attributes: usize) -> Self {
        let n = num_attributes;
        let w = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
        let weights = (0..n * n)
            .map(|idx| if idx / n == idx % n { 0.0 } else { w })
            .collect();
        Self {
            num_attributes: n,
            weights,
        }
    }

    /// Explicit weights; `rows[j][k]` is `α_jk`. Diagonal entries are ignored.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut weights = vec![0.0; n * n];
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "weight row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            let mut total = 0.0;
            for (k, &w) in row.iter().enumerate() {
                if k == j {
                    continue;
                }
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "weight ({j}, {k}) = {w} must be nonnegative"
                    )));
                }
                weights[j * n + k] = w;
                total += w;
            }
            if n > 1 && (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "weight row {j} sums to {total}, expected 1"
                )));
            }
        }
        Ok(Self {
            num_attributes: n,
            weights,
        })
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attributes
    }

    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.weights[j * self.num_attributes + k]
    }
}

/// Precomputed coupled attribute value similarities for every pair of values
/// of every attribute. Values that occur in no object get similarity zero.
#[derive(Debug, Clone)]
pub struct CoupledSimilarity {
    domain_sizes: Vec<usize>,
    tables: Vec<Vec<f64>>,
}

impl CoupledSimilarity {
    pub fn new(index: &FrequencyIndex, params: &CouplingParams) -> Result<Self> {
        index.check_params(params)?;
        let tables = (0..index.num_attributes())
            .map(|j| {
                let s = index.domain_size(j);
                let mut table = vec![0.0; s * s];
                for x in 0..s {
                    for y in x..s {
                        let (fx, fy) = (index.count(j, x), index.count(j, y));
                        if fx == 0 || fy == 0 {
                            continue;
                        }
                        let v = intra(fx, fy) * index.inter(params, j, x, y);
                        table[x * s + y] = v;
                        table[y * s + x] = v;
                    }
                }
                table
            })
            .collect();
        Ok(Self {
            domain_sizes: (0..index.num_attributes())
                .map(|j| index.domain_size(j))
                .collect(),
            tables,
        })
    }

    pub fn from_table(table: &CategoricalTable, params: &CouplingParams) -> Result<Self> {
        Self::new(&FrequencyIndex::build(table), params)
    }

    pub fn num_attributes(&self) -> usize {
        self.domain_sizes.len()
    }

    pub fn domain_size(&self, attribute: usize) -> usize {
        self.domain_sizes[attribute]
    }

    #[inline]
    pub fn value_similarity(&self, attribute: usize, x: usize, y: usize) -> f64 {
        self.tables[attribute][x * self.domain_sizes[attribute] + y]
    }

    pub fn object_similarity(&self, a: &[usize], b: &[usize]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(j, (&x, &y))| self.value_similarity(j, x, y))
            .sum()
    }
}

/// Dense symmetric object-by-object similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds from the upper triangle; `f(a, b)` is evaluated for `a <= b`.
    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let upper: Vec<Vec<f64>> = (0..size)
            .into_par_iter()
            .map(|a| (a..size).map(|b| f(a, b)).collect())
            .collect();
        let mut entries = vec![0.0; size * size];
        for (a, row) in upper.into_iter().enumerate() {
            for (offset, v) in row.into_iter().enumerate() {
                let b = a + offset;
                entries[a * size + b] = v;
                entries[b * size + a] = v;
            }
        }
        Self { size, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.size + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.entries[a * self.size..(a + 1) * self.size]
    }

    /// Writes `id_a,id_b,cis` rows for the upper triangle including the
    /// diagonal, with 12 significant digits.
    pub fn write_csv<W: Write>(&self, ids: &[String], out: W) -> Result<()> {
        if ids.len() != self.size {
            return Err(Error::InvalidArgument(format!(
                "{} ids for a {}x{} matrix",
                ids.len(),
                self.size,
                self.size
            )));
        }
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let to_err = |e| Error::csv("<similarity>", e);
        wtr.write_record(["id_a", "id_b", "cis"]).map_err(to_err)?;
        for a in 0..self.size {
            for b in a..self.size {
                wtr.write_record([
                    ids[a].as_str(),
                    ids[b].as_str(),
                    &format_significant(self.get(a, b), 12),
                ])
                .map_err(to_err)?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<similarity>", e))
    }
}

/// Fixed-point rendering of `value` with `digits` significant digits.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{:.*}", digits.saturating_sub(1), value);
    }
    let magnitude = value.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

/// Coupled object similarity for every pair of objects in `table`.
pub fn coupling_matrix(
    table: &CategoricalTable,
    params: &CouplingParams,
) -> Result<SimilarityMatrix> {
    let index = FrequencyIndex::build(table);
    let sim = CoupledSimilarity::new(&index, params)?;
    Ok(SimilarityMatrix::from_fn(table.num_objects(), |a, b| {
        sim.object_similarity(index.row(a), index.row(b))
    }))
}
