//! K-modes clustering of categorical objects.
//!
//! The driver is generic over the per-attribute value similarity. Coupled
//! K-modes uses [`CoupledSimilarity`]; the plain baseline uses
//! [`SimpleMatching`]. Because object similarity is a sum over attributes,
//! the best mode of a cluster is found one attribute at a time.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coupling::{CoupledSimilarity, CouplingParams};
use crate::data::CategoricalTable;
use crate::error::{Error, Result};

/// Similarity between two values of one attribute, summed over attributes to
/// compare objects.
pub trait AttributeSimilarity: Sync {
    fn num_attributes(&self) -> usize;

    fn domain_size(&self, attribute: usize) -> usize;

    fn value_similarity(&self, attribute: usize, x: usize, y: usize) -> f64;

    fn object_similarity(&self, a: &[usize], b: &[usize]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(j, (&x, &y))| self.value_similarity(j, x, y))
            .sum()
    }
}

impl AttributeSimilarity for CoupledSimilarity {
    fn num_attributes(&self) -> usize {
        CoupledSimilarity::num_attributes(self)
    }

    fn domain_size(&self, attribute: usize) -> usize {
        CoupledSimilarity::domain_size(self, attribute)
    }

    fn value_similarity(&self, attribute: usize, x: usize, y: usize) -> f64 {
        CoupledSimilarity::value_similarity(self, attribute, x, y)
    }
}

/// Counts matching attribute values.
#[derive(Debug, Clone)]
pub struct SimpleMatching {
    domain_sizes: Vec<usize>,
}

impl SimpleMatching {
    pub fn new(table: &CategoricalTable) -> Self {
        Self {
            domain_sizes: (0..table.num_attributes())
                .map(|j| table.domain_size(j))
                .collect(),
        }
    }
}

impl AttributeSimilarity for SimpleMatching {
    fn num_attributes(&self) -> usize {
        self.domain_sizes.len()
    }

    fn domain_size(&self, attribute: usize) -> usize {
        self.domain_sizes[attribute]
    }

    fn value_similarity(&self, _attribute: usize, x: usize, y: usize) -> f64 {
        if x == y {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    /// Cluster index of every object.
    pub assignment: Vec<usize>,
    /// One value code per attribute for each cluster.
    pub modes: Vec<Vec<usize>>,
    /// Total similarity of objects to their cluster's mode.
    pub objective: f64,
    /// Number of assign/update rounds performed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each round.
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(o, _)| o)
            .collect()
    }

    pub fn write_assignment_csv<W: Write>(&self, table: &CategoricalTable, out: W) -> Result<()> {
        let mut wtr = csv_writer(out);
        let to_err = |e| Error::csv("<clusters>", e);
        wtr.write_record(["object_id", "cluster"]).map_err(to_err)?;
        for (o, c) in self.assignment.iter().enumerate() {
            wtr.write_record([table.objects().id(o), &c.to_string()])
                .map_err(to_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<clusters>", e))
    }

    pub fn write_modes_csv<W: Write>(&self, table: &CategoricalTable, out: W) -> Result<()> {
        let mut wtr = csv_writer(out);
        let to_err = |e| Error::csv("<modes>", e);
        let mut header = vec!["cluster".to_string()];
        header.extend(table.attribute_names().iter().cloned());
        wtr.write_record(&header).map_err(to_err)?;
        for (c, mode) in self.modes.iter().enumerate() {
            let mut record = vec![c.to_string()];
            record.extend(
                mode.iter()
                    .enumerate()
                    .map(|(j, &v)| table.label(j, v).to_string()),
            );
            wtr.write_record(&record).map_err(to_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<modes>", e))
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Attribute vectors of `k` distinct objects drawn uniformly without
/// replacement.
pub fn init_modes(table: &CategoricalTable, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let m = table.num_objects();
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in [1, {m}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, m, k)
        .into_iter()
        .map(|o| table.row(o).to_vec())
        .collect())
}

/// Each object goes to its most similar mode; ties go to the lowest cluster.
pub fn assign<S: AttributeSimilarity>(
    table: &CategoricalTable,
    sim: &S,
    modes: &[Vec<usize>],
) -> Vec<usize> {
    (0..table.num_objects())
        .into_par_iter()
        .map(|o| nearest_mode(sim, table.row(o), modes).0)
        .collect()
}

/// Relative gap below which two similarity totals count as tied; sums of the
/// same terms in different orders differ only by rounding.
const TIE_TOLERANCE: f64 = 1e-12;

/// Index of the first score within rounding of the maximum.
fn first_max(scores: impl Iterator<Item = f64> + Clone) -> (usize, f64) {
    let best = scores.clone().fold(f64::NEG_INFINITY, f64::max);
    let floor = best - TIE_TOLERANCE * best.abs().max(1.0);
    scores
        .enumerate()
        .find(|&(_, s)| s >= floor)
        .unwrap_or((0, best))
}

fn nearest_mode<S: AttributeSimilarity>(
    sim: &S,
    row: &[usize],
    modes: &[Vec<usize>],
) -> (usize, f64) {
    let scores: Vec<f64> = modes
        .iter()
        .map(|mode| sim.object_similarity(row, mode))
        .collect();
    first_max(scores.iter().copied())
}

/// Mode maximizing total similarity to `members`. Every attribute picks the
/// domain value with the largest summed similarity, earliest value on ties.
pub fn update_mode<S: AttributeSimilarity>(
    table: &CategoricalTable,
    sim: &S,
    members: &[usize],
) -> Result<Vec<usize>> {
    if members.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot compute the mode of an empty cluster".into(),
        ));
    }
    Ok((0..table.num_attributes())
        .map(|j| {
            let totals: Vec<f64> = (0..sim.domain_size(j))
                .map(|v| {
                    members
                        .iter()
                        .map(|&o| sim.value_similarity(j, table.value(o, j), v))
                        .sum()
                })
                .collect();
            first_max(totals.iter().copied()).0
        })
        .collect())
}

pub fn objective<S: AttributeSimilarity>(
    table: &CategoricalTable,
    sim: &S,
    assignment: &[usize],
    modes: &[Vec<usize>],
) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(o, &c)| sim.object_similarity(table.row(o), &modes[c]))
        .sum()
}

/// Moves objects into empty clusters. For each empty cluster, the object
/// least similar to its current mode (among clusters with at least two
/// members) is moved there.
fn reseed_empty<S: AttributeSimilarity>(
    table: &CategoricalTable,
    sim: &S,
    modes: &[Vec<usize>],
    assignment: &mut [usize],
) {
    let k = modes.len();
    let mut sizes = vec![0usize; k];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut pick: Option<(usize, f64)> = None;
        for (o, &c) in assignment.iter().enumerate() {
            if sizes[c] < 2 {
                continue;
            }
            let s = sim.object_similarity(table.row(o), &modes[c]);
            if pick.is_none_or(|(_, best)| s < best) {
                pick = Some((o, s));
            }
        }
        let (o, _) = pick.expect("k <= object count leaves a cluster with two members");
        sizes[assignment[o]] -= 1;
        assignment[o] = empty;
        sizes[empty] += 1;
    }
}

/// Generic K-modes loop: assign, reseed empty clusters, update modes, and
/// repeat until the assignment stops changing or `max_iter` rounds ran.
pub fn k_modes<S: AttributeSimilarity>(
    table: &CategoricalTable,
    sim: &S,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterModel> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let mut modes = init_modes(table, k, seed)?;
    let mut assignment = assign(table, sim, &modes);
    reseed_empty(table, sim, &modes, &mut assignment);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for round in 1..=max_iter {
        let before = objective(table, sim, &assignment, &modes);
        let mut members = vec![Vec::new(); k];
        for (o, &c) in assignment.iter().enumerate() {
            members[c].push(o);
        }
        modes = members
            .par_iter()
            .map(|m| update_mode(table, sim, m))
            .collect::<Result<_>>()?;
        let after = objective(table, sim, &assignment, &modes);
        debug_assert!(
            after >= before - 1e-9,
            "mode update lowered the objective: {before} -> {after}"
        );
        if let Some(&prev) = trace.last() {
            debug_assert!(
                after >= prev - 1e-9,
                "objective decreased across rounds: {prev} -> {after}"
            );
        }
        trace.push(after);
        iterations = round;
        if round == max_iter {
            break;
        }
        let mut next = assign(table, sim, &modes);
        reseed_empty(table, sim, &modes, &mut next);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }

    Ok(ClusterModel {
        k,
        objective: objective(table, sim, &assignment, &modes),
        assignment,
        modes,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// K-modes with coupled object similarity.
pub fn ck_modes(
    table: &CategoricalTable,
    k: usize,
    seed: u64,
    max_iter: usize,
    params: &CouplingParams,
) -> Result<ClusterModel> {
    let sim = CoupledSimilarity::from_table(table, params)?;
    k_modes(table, &sim, k, seed, max_iter)
}

/// K-modes with simple matching similarity and majority-vote modes.
pub fn plain_k_modes(
    table: &CategoricalTable,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterModel> {
    k_modes(table, &SimpleMatching::new(table), k, seed, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[Vec<&str>]) -> CategoricalTable {
        let n = rows[0].len();
        let ids = (0..rows.len()).map(|i| format!("o{i}")).collect();
        let names = (0..n).map(|j| format!("a{j}")).collect();
        CategoricalTable::from_rows(ids, names, rows).unwrap()
    }

    fn planted() -> CategoricalTable {
        let groups = [
            vec!["r", "s", "t"],
            vec!["u", "v", "w"],
            vec!["x", "y", "z"],
        ];
        let rows: Vec<Vec<&str>> = groups
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.clone(), 3))
            .collect();
        table(&rows)
    }

    #[test]
    fn init_modes_contract() {
        let t = planted();
        let all = init_modes(&t, 9, 7).unwrap();
        let mut seen: Vec<Vec<usize>> = all.clone();
        seen.sort();
        let mut rows: Vec<Vec<usize>> = (0..9).map(|o| t.row(o).to_vec()).collect();
        rows.sort();
        assert_eq!(seen, rows);
        assert_eq!(
            init_modes(&t, 3, 11).unwrap(),
            init_modes(&t, 3, 11).unwrap()
        );
        let one = init_modes(&t, 1, 3).unwrap();
        assert!((0..9).any(|o| t.row(o) == one[0].as_slice()));
        assert!(init_modes(&t, 10, 0).is_err());
        assert!(init_modes(&t, 0, 0).is_err());
    }

    #[test]
    fn assign_ties_go_low() {
        let t = planted();
        let sim = CoupledSimilarity::from_table(&t, &CouplingParams::uniform(3)).unwrap();
        let mode = t.row(0).to_vec();
        let a = assign(&t, &sim, &[mode.clone(), mode]);
        assert!(a.iter().all(|&c| c == 0));
        let single = assign(&t, &sim, &[t.row(4).to_vec()]);
        assert!(single.iter().all(|&c| c == 0));
    }

    #[test]
    fn assign_object_equal_to_mode() {
        let t = planted();
        let sim = CoupledSimilarity::from_table(&t, &CouplingParams::uniform(3)).unwrap();
        let modes = vec![t.row(0).to_vec(), t.row(3).to_vec(), t.row(6).to_vec()];
        let sims: Vec<f64> = modes
            .iter()
            .map(|m| sim.object_similarity(t.row(3), m))
            .collect();
        assert!(sims[1] > sims[0] && sims[1] > sims[2]);
        assert_eq!(assign(&t, &sim, &modes)[3], 1);
    }

    #[test]
    fn update_mode_single_attribute() {
        // Members [a, a, b] with f_a = 2, f_b = 1: a scores 2*0.5 + 0.4 = 1.4,
        // b scores 2*0.4 + 1/3 = 1.1333.
        let t = table(&[vec!["a"], vec!["a"], vec!["b"]]);
        let sim = CoupledSimilarity::from_table(&t, &CouplingParams::uniform(1)).unwrap();
        assert_eq!(update_mode(&t, &sim, &[0, 1, 2]).unwrap(), vec![0]);
        let sa: f64 = [0, 1, 2]
            .iter()
            .map(|&o| sim.value_similarity(0, t.value(o, 0), 0))
            .sum();
        let sb: f64 = [0, 1, 2]
            .iter()
            .map(|&o| sim.value_similarity(0, t.value(o, 0), 1))
            .sum();
        assert!((sa - 1.4).abs() < 1e-12);
        assert!((sb - (0.8 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn update_mode_identical_members_and_empty() {
        let t = planted();
        let sim = SimpleMatching::new(&t);
        assert_eq!(update_mode(&t, &sim, &[3, 4, 5]).unwrap(), t.row(3));
        assert!(update_mode(&t, &sim, &[]).is_err());
    }

    #[test]
    fn update_mode_single_member_maximizes_each_attribute() {
        let t = table(&[
            vec!["a", "p"],
            vec!["b", "p"],
            vec!["b", "q"],
            vec!["b", "q"],
        ]);
        let sim = CoupledSimilarity::from_table(&t, &CouplingParams::uniform(2)).unwrap();
        let mode = update_mode(&t, &sim, &[0]).unwrap();
        for (j, &m) in mode.iter().enumerate() {
            let own = t.value(0, j);
            for v in 0..t.domain_size(j) {
                assert!(sim.value_similarity(j, own, m) >= sim.value_similarity(j, own, v));
            }
        }
    }

    #[test]
    fn ck_modes_recovers_planted_copies() {
        let t = planted();
        for seed in 0..5 {
            let model = ck_modes(&t, 3, seed, 20, &CouplingParams::uniform(3)).unwrap();
            assert!(model.converged);
            assert!(model.iterations <= 3, "iterations = {}", model.iterations);
            for g in 0..3 {
                let c = model.assignment[3 * g];
                assert!(model.assignment[3 * g..3 * g + 3].iter().all(|&x| x == c));
            }
            assert_eq!(model.cluster_sizes(), vec![3, 3, 3]);
        }
    }

    #[test]
    fn max_iter_one_runs_one_round() {
        let t = planted();
        let model = ck_modes(&t, 3, 1, 1, &CouplingParams::uniform(3)).unwrap();
        assert_eq!(model.iterations, 1);
        assert_eq!(model.objective_trace.len(), 1);
        assert!(ck_modes(&t, 3, 1, 0, &CouplingParams::uniform(3)).is_err());
    }

    #[test]
    fn plain_k_modes_k_equals_objects_converges_at_once() {
        let t = table(&[
            vec!["a", "p"],
            vec!["b", "p"],
            vec!["a", "q"],
            vec!["c", "r"],
        ]);
        let model = plain_k_modes(&t, 4, 5, 10).unwrap();
        assert!(model.converged);
        assert_eq!(model.iterations, 1);
        assert_eq!(model.cluster_sizes(), vec![1, 1, 1, 1]);
        assert_eq!(model.objective, 8.0);
    }

    #[test]
    fn plain_k_modes_deterministic_and_recovers() {
        let t = planted();
        let a = plain_k_modes(&t, 3, 9, 10).unwrap();
        let b = plain_k_modes(&t, 3, 9, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.objective, 27.0);
        assert_eq!(
            SimpleMatching::new(&t).object_similarity(t.row(0), t.row(1)),
            3.0
        );
    }

    #[test]
    fn reseeding_fills_empty_clusters() {
        // Identical objects force every object onto cluster 0 at assignment.
        let t = table(&[vec!["a"], vec!["a"], vec!["a"]]);
        let model = plain_k_modes(&t, 3, 0, 5).unwrap();
        assert_eq!(model.cluster_sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn objective_matches_recomputation() {
        let t = table(&[
            vec!["a", "p", "u"],
            vec!["a", "q", "u"],
            vec!["b", "q", "v"],
            vec!["b", "p", "v"],
            vec!["c", "q", "u"],
            vec!["a", "p", "v"],
        ]);
        let params = CouplingParams::uniform(3);
        let model = ck_modes(&t, 2, 3, 10, &params).unwrap();
        let sim = CoupledSimilarity::from_table(&t, &params).unwrap();
        let recomputed = objective(&t, &sim, &model.assignment, &model.modes);
        assert!((model.objective - recomputed).abs() < 1e-9);
        for w in model.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn csv_outputs() {
        let t = planted();
        let model = plain_k_modes(&t, 3, 2, 10).unwrap();
        let mut out = Vec::new();
        model.write_assignment_csv(&t, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("object_id,cluster\n"));
        assert_eq!(text.lines().count(), 10);
        let mut out = Vec::new();
        model.write_modes_csv(&t, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("cluster,a0,a1,a2\n"));
    }
}
