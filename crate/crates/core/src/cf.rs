//! Neighborhood collaborative filtering.
//!
//! The coupled predictor restricts an item's neighbors to the items of its
//! K-modes cluster and weights them by coupled object similarity. User-based,
//! item-based and Slope One predictors serve as baselines. Every predictor is
//! total: users or items without ratings fall back to means, and results are
//! clamped to the rating range.

use std::cmp::Ordering;
use std::num::NonZeroUsize;

use crate::coupling::SimilarityMatrix;
use crate::data::{CategoricalTable, IdIndex, RatingDataset, RatingRange};
use crate::error::{Error, Result};
use crate::kmodes::ClusterModel;

pub const DEFAULT_NEIGHBORS: NonZeroUsize = NonZeroUsize::new(30).unwrap();

/// Ratings indexed by user and by item, with per-user, per-item and global
/// means over observed ratings.
#[derive(Debug, Clone)]
pub struct RatingIndex {
    range: RatingRange,
    by_user: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
    user_means: Vec<Option<f64>>,
    item_means: Vec<Option<f64>>,
    global_mean: f64,
}

fn mean_of(list: &[(usize, f64)]) -> Option<f64> {
    if list.is_empty() {
        None
    } else {
        Some(list.iter().map(|&(_, r)| r).sum::<f64>() / list.len() as f64)
    }
}

impl RatingIndex {
    pub fn new(data: &RatingDataset) -> Result<Self> {
        let global_mean = data.global_mean().ok_or(Error::Empty("rating dataset"))?;
        let mut by_user = vec![Vec::new(); data.num_users()];
        let mut by_item = vec![Vec::new(); data.num_items()];
        for r in data.ratings() {
            by_user[r.user].push((r.item, r.value));
            by_item[r.item].push((r.user, r.value));
        }
        for list in by_user.iter_mut().chain(by_item.iter_mut()) {
            list.sort_unstable_by_key(|&(k, _)| k);
        }
        Ok(Self {
            range: data.range(),
            user_means: by_user.iter().map(|l| mean_of(l)).collect(),
            item_means: by_item.iter().map(|l| mean_of(l)).collect(),
            by_user,
            by_item,
            global_mean,
        })
    }

    pub fn range(&self) -> RatingRange {
        self.range
    }

    pub fn num_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn num_items(&self) -> usize {
        self.by_item.len()
    }

    /// `(item, rating)` pairs of `user`, sorted by item.
    pub fn user_ratings(&self, user: usize) -> &[(usize, f64)] {
        &self.by_user[user]
    }

    /// `(user, rating)` pairs of `item`, sorted by user.
    pub fn item_ratings(&self, item: usize) -> &[(usize, f64)] {
        &self.by_item[item]
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<f64> {
        let list = &self.by_user[user];
        list.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|p| list[p].1)
    }

    pub fn user_mean(&self, user: usize) -> Option<f64> {
        self.user_means[user]
    }

    pub fn item_mean(&self, item: usize) -> Option<f64> {
        self.item_means[item]
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// Prediction when no neighbor information is usable: the user's mean,
    /// else the item's mean, else the global mean. Either index may be
    /// unknown (`None`) for ids absent from training data.
    pub fn fallback(&self, user: Option<usize>, item: Option<usize>) -> f64 {
        let value = user
            .and_then(|u| self.user_mean(u))
            .or_else(|| item.and_then(|i| self.item_mean(i)))
            .unwrap_or(self.global_mean);
        self.range.clamp(value)
    }
}

/// A predicted rating with the size of the neighbor pool it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// Candidates scanned before ranking and truncation.
    pub candidates: usize,
    /// Neighbors that contributed to the value.
    pub neighbors: usize,
}

impl Prediction {
    fn fallback(value: f64, candidates: usize) -> Self {
        Self {
            value,
            candidates,
            neighbors: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborSource {
    /// Only items in the target item's cluster.
    Cluster,
    /// Every item the user rated.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionRequest {
    pub user: usize,
    pub item: usize,
    pub source: NeighborSource,
    pub cap: NonZeroUsize,
}

impl PredictionRequest {
    pub fn new(user: usize, item: usize) -> Self {
        Self {
            user,
            item,
            source: NeighborSource::Cluster,
            cap: DEFAULT_NEIGHBORS,
        }
    }

    pub fn with_cap(mut self, cap: NonZeroUsize) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_source(mut self, source: NeighborSource) -> Self {
        self.source = source;
        self
    }
}

/// Item clusters and coupled similarities expressed in the rating dataset's
/// item index space. Rated items missing from the attribute table have no
/// cluster and never act as neighbors.
#[derive(Debug, Clone)]
pub struct ItemCoupling {
    cluster_of: Vec<Option<usize>>,
    row_of: Vec<Option<usize>>,
    similarity: SimilarityMatrix,
    largest_cluster: usize,
}

impl ItemCoupling {
    /// Aligns clusters and similarities computed over `table` with the items
    /// of a rating dataset by id.
    pub fn align(
        items: &IdIndex,
        table: &CategoricalTable,
        clusters: &ClusterModel,
        similarity: SimilarityMatrix,
    ) -> Result<Self> {
        if clusters.assignment.len() != table.num_objects()
            || similarity.size() != table.num_objects()
        {
            return Err(Error::InvalidArgument(format!(
                "clusters cover {} objects and similarity {}, table has {}",
                clusters.assignment.len(),
                similarity.size(),
                table.num_objects()
            )));
        }
        let row_of: Vec<Option<usize>> = items
            .ids()
            .iter()
            .map(|id| table.objects().index_of(id))
            .collect();
        let cluster_of = row_of
            .iter()
            .map(|r| r.map(|o| clusters.assignment[o]))
            .collect();
        let largest_cluster = clusters.cluster_sizes().into_iter().max().unwrap_or(0);
        Ok(Self {
            cluster_of,
            row_of,
            similarity,
            largest_cluster,
        })
    }

    /// Item `i` of the ratings is object `i` of the clustered table.
    pub fn identity(clusters: &ClusterModel, similarity: SimilarityMatrix) -> Result<Self> {
        if clusters.assignment.len() != similarity.size() {
            return Err(Error::InvalidArgument(
                "cluster and similarity sizes differ".into(),
            ));
        }
        Ok(Self {
            cluster_of: clusters.assignment.iter().map(|&c| Some(c)).collect(),
            row_of: (0..similarity.size()).map(Some).collect(),
            largest_cluster: clusters.cluster_sizes().into_iter().max().unwrap_or(0),
            similarity,
        })
    }

    pub fn cluster_of(&self, item: usize) -> Option<usize> {
        self.cluster_of.get(item).copied().flatten()
    }

    pub fn similarity(&self, a: usize, b: usize) -> Option<f64> {
        let ra = self.row_of.get(a).copied().flatten()?;
        let rb = self.row_of.get(b).copied().flatten()?;
        Some(self.similarity.get(ra, rb))
    }

    pub fn largest_cluster(&self) -> usize {
        self.largest_cluster
    }
}

/// Sort by weight descending, then by id ascending, and keep `cap`.
fn top_weighted(mut pool: Vec<(usize, f64, f64)>, cap: NonZeroUsize) -> Vec<(usize, f64, f64)> {
    pool.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    pool.truncate(cap.get());
    pool
}

/// `base + Σ w·dev / Σ |w|` over `(id, w, dev)` neighbors, or `None` when
/// the weights sum to zero.
fn weighted_offset(base: f64, neighbors: &[(usize, f64, f64)]) -> Option<f64> {
    let denom: f64 = neighbors.iter().map(|n| n.1.abs()).sum();
    if denom == 0.0 {
        return None;
    }
    let num: f64 = neighbors.iter().map(|n| n.1 * n.2).sum();
    Some(base + num / denom)
}

/// Coupled item-based prediction: the user's mean plus the similarity
/// weighted average of the user's deviations from item means, over the
/// co-rated items in the target item's cluster.
pub fn predict_coupled(
    index: &RatingIndex,
    coupling: &ItemCoupling,
    req: &PredictionRequest,
) -> Prediction {
    let (u, y) = (req.user, req.item);
    let Some(user_mean) = index.user_mean(u) else {
        return Prediction::fallback(index.fallback(None, Some(y)), 0);
    };
    let target_cluster = coupling.cluster_of(y);
    let pool: Vec<(usize, f64, f64)> = match (req.source, target_cluster) {
        (NeighborSource::Cluster, None) => Vec::new(),
        (source, _) => index
            .user_ratings(u)
            .iter()
            .filter(|&&(x, _)| x != y)
            .filter(|&&(x, _)| {
                source == NeighborSource::Global || coupling.cluster_of(x) == target_cluster
            })
            .filter_map(|&(x, r)| {
                let s = coupling.similarity(x, y)?;
                let item_mean = index.item_mean(x).expect("rated item has a mean");
                Some((x, s, r - item_mean))
            })
            .collect(),
    };
    let candidates = pool.len();
    let neighbors = top_weighted(pool, req.cap);
    match weighted_offset(user_mean, &neighbors) {
        Some(v) => Prediction {
            value: index.range().clamp(v),
            candidates,
            neighbors: neighbors.len(),
        },
        None => Prediction::fallback(index.range().clamp(user_mean), candidates),
    }
}

/// Adjusted cosine similarity of two items over their co-raters, centering
/// each rating on the rater's mean. Zero with fewer than two co-raters or a
/// zero norm.
pub fn rating_similarity(index: &RatingIndex, a: usize, b: usize) -> f64 {
    let (la, lb) = (index.item_ratings(a), index.item_ratings(b));
    let (mut i, mut j) = (0, 0);
    let (mut dot, mut na, mut nb, mut common) = (0.0, 0.0, 0.0, 0usize);
    while i < la.len() && j < lb.len() {
        match la[i].0.cmp(&lb[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                let mean = index.user_mean(la[i].0).expect("rater has a mean");
                let (da, db) = (la[i].1 - mean, lb[j].1 - mean);
                dot += da * db;
                na += da * da;
                nb += db * db;
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    if common < 2 || na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Pearson correlation of two users over the items both rated. Zero with
/// fewer than two common items or zero variance.
pub fn user_correlation(index: &RatingIndex, u: usize, v: usize) -> f64 {
    let (lu, lv) = (index.user_ratings(u), index.user_ratings(v));
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < lu.len() && j < lv.len() {
        match lu[i].0.cmp(&lv[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                pairs.push((lu[i].1, lv[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mu = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut cov, mut vu, mut vv) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        cov += (a - mu) * (b - mv);
        vu += (a - mu) * (a - mu);
        vv += (b - mv) * (b - mv);
    }
    if vu == 0.0 || vv == 0.0 {
        return 0.0;
    }
    (cov / (vu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0)
}

/// Item-based CF over all co-rated items with adjusted cosine weights.
/// Neighbors with nonpositive similarity are discarded.
pub fn predict_item_based(index: &RatingIndex, req: &PredictionRequest) -> Prediction {
    let (u, y) = (req.user, req.item);
    let Some(user_mean) = index.user_mean(u) else {
        return Prediction::fallback(index.fallback(None, Some(y)), 0);
    };
    let rated: Vec<(usize, f64)> = index
        .user_ratings(u)
        .iter()
        .copied()
        .filter(|&(x, _)| x != y)
        .collect();
    let candidates = rated.len();
    let pool = rated
        .into_iter()
        .filter_map(|(x, r)| {
            let s = rating_similarity(index, x, y);
            (s > 0.0).then(|| (x, s, r - index.item_mean(x).expect("rated item has a mean")))
        })
        .collect();
    let neighbors = top_weighted(pool, req.cap);
    match weighted_offset(user_mean, &neighbors) {
        Some(v) => Prediction {
            value: index.range().clamp(v),
            candidates,
            neighbors: neighbors.len(),
        },
        None => Prediction::fallback(index.range().clamp(user_mean), candidates),
    }
}

/// User-based CF: Pearson-weighted deviations of other raters of the item
/// from their own means. Neighbors with nonpositive correlation are
/// discarded.
pub fn predict_user_based(index: &RatingIndex, req: &PredictionRequest) -> Prediction {
    let (u, y) = (req.user, req.item);
    let Some(user_mean) = index.user_mean(u) else {
        return Prediction::fallback(index.fallback(None, Some(y)), 0);
    };
    let raters: Vec<(usize, f64)> = index
        .item_ratings(y)
        .iter()
        .copied()
        .filter(|&(v, _)| v != u)
        .collect();
    let candidates = raters.len();
    let pool = raters
        .into_iter()
        .filter_map(|(v, r)| {
            let w = user_correlation(index, u, v);
            (w > 0.0).then(|| (v, w, r - index.user_mean(v).expect("rater has a mean")))
        })
        .collect();
    let neighbors = top_weighted(pool, req.cap);
    match weighted_offset(user_mean, &neighbors) {
        Some(v) => Prediction {
            value: index.range().clamp(v),
            candidates,
            neighbors: neighbors.len(),
        },
        None => Prediction::fallback(index.range().clamp(user_mean), candidates),
    }
}

/// Weighted Slope One: each item the user rated votes `rating + mean
/// difference`, weighted by the number of users who rated both items.
pub fn predict_slope_one(index: &RatingIndex, req: &PredictionRequest) -> Prediction {
    let (u, y) = (req.user, req.item);
    let Some(user_mean) = index.user_mean(u) else {
        return Prediction::fallback(index.fallback(None, Some(y)), 0);
    };
    let target = index.item_ratings(y);
    let (mut num, mut denom, mut candidates, mut used) = (0.0, 0.0, 0usize, 0usize);
    for &(j, r_uj) in index.user_ratings(u) {
        if j == y {
            continue;
        }
        candidates += 1;
        let other = index.item_ratings(j);
        let (mut a, mut b) = (0, 0);
        let (mut diff, mut count) = (0.0, 0usize);
        while a < target.len() && b < other.len() {
            match target[a].0.cmp(&other[b].0) {
                Ordering::Less => a += 1,
                Ordering::Greater => b += 1,
                Ordering::Equal => {
                    diff += target[a].1 - other[b].1;
                    count += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        if count == 0 {
            continue;
        }
        let c = count as f64;
        num += c * (diff / c + r_uj);
        denom += c;
        used += 1;
    }
    if denom == 0.0 {
        return Prediction::fallback(index.range().clamp(user_mean), candidates);
    }
    Prediction {
        value: index.range().clamp(num / denom),
        candidates,
        neighbors: used,
    }
}
