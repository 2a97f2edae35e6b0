//! Synthetic data with known structure: rating matrices drawn from the
//! coupled factor model, and categorical tables with planted clusters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{
    CategoricalTable, Edge, IdIndex, Rating, RatingDataset, RatingRange, RelationGraph,
};
use crate::error::{Error, Result};
use crate::mf::{cmf_predict, Couplings, FactorModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_users: usize,
    pub num_items: usize,
    pub rank: usize,
    /// Probability that a given pair of users (or of items) is linked.
    pub friend_density: f64,
    /// Standard deviation of the Gaussian rating noise.
    pub noise: f64,
    /// Probability that a user-item cell is observed.
    pub rating_density: f64,
    /// Standard deviation of the planted factor entries.
    pub factor_scale: f64,
    pub offset: f64,
    /// Round ratings to the integer grid of the range.
    pub quantize: bool,
    pub range: RatingRange,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_users: 200,
            num_items: 200,
            rank: 4,
            friend_density: 0.05,
            noise: 0.3,
            rating_density: 0.1,
            factor_scale: 0.6,
            offset: 3.0,
            quantize: true,
            range: RatingRange { min: 1.0, max: 5.0 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub ratings: RatingDataset,
    pub couplings: Couplings,
    /// Planted factors; predicting with them and `couplings` gives the
    /// noiseless ratings.
    pub truth: FactorModel,
}

fn random_graph(rng: &mut ChaCha8Rng, nodes: usize, density: f64) -> Result<RelationGraph> {
    let mut edges = Vec::new();
    for a in 0..nodes {
        for b in a + 1..nodes {
            if rng.random_bool(density) {
                edges.push(Edge {
                    src: a,
                    dst: b,
                    weight: 1.0,
                });
                edges.push(Edge {
                    src: b,
                    dst: a,
                    weight: 1.0,
                });
            }
        }
    }
    Ok(RelationGraph::new(nodes, edges)?.normalized())
}

/// Ratings drawn from the coupled factor model: planted factors, symmetric
/// random user and item relation graphs (row-normalized), Gaussian noise,
/// clipping to the range and optional rounding.
pub fn synth_coupled(config: &SynthConfig) -> Result<SyntheticData> {
    let (nu, ni, d) = (config.num_users, config.num_items, config.rank);
    if nu < 2 || ni < 2 {
        return Err(Error::InvalidArgument(
            "synthetic data needs at least 2 users and 2 items".into(),
        ));
    }
    for (name, p) in [
        ("friend density", config.friend_density),
        ("rating density", config.rating_density),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "{name} {p} must lie in [0, 1]"
            )));
        }
    }
    let noise = Normal::new(0.0, config.noise)
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
    let factor = Normal::new(0.0, config.factor_scale)
        .map_err(|e| Error::InvalidArgument(format!("factor scale: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = (0..nu * d).map(|_| factor.sample(&mut rng)).collect();
    let q = (0..ni * d).map(|_| factor.sample(&mut rng)).collect();
    let mut truth = FactorModel::new(nu, ni, d, config.offset, p, q)?;
    truth.flags.coupled = true;
    let couplings = Couplings::new(
        random_graph(&mut rng, nu, config.friend_density)?,
        random_graph(&mut rng, ni, config.friend_density)?,
    );

    let range = config.range;
    let mut ratings = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            if !rng.random_bool(config.rating_density) {
                continue;
            }
            let mut value =
                range.clamp(cmf_predict(&truth, &couplings, u, i) + noise.sample(&mut rng));
            if config.quantize {
                value = value.round();
            }
            ratings.push(Rating {
                user: u,
                item: i,
                value,
            });
        }
    }
    let ratings = RatingDataset::new(
        IdIndex::sequential("u", nu),
        IdIndex::sequential("i", ni),
        ratings,
        range,
    )?;
    Ok(SyntheticData {
        ratings,
        couplings,
        truth,
    })
}

#[derive(Debug, Clone)]
pub struct PlantedClusters {
    pub table: CategoricalTable,
    pub labels: Vec<usize>,
}

/// `clusters × per_cluster` objects over `attributes` attributes with
/// `domain_size` values each. Cluster `c` has its own random prototype
/// (distinct across clusters on every attribute); each cell is replaced by a
/// uniform random value with probability `noise`.
pub fn planted_clusters(
    seed: u64,
    clusters: usize,
    per_cluster: usize,
    attributes: usize,
    domain_size: usize,
    noise: f64,
) -> Result<PlantedClusters> {
    if domain_size < clusters {
        return Err(Error::InvalidArgument(format!(
            "domain size {domain_size} cannot separate {clusters} clusters"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<usize>> = {
        let columns: Vec<Vec<usize>> = (0..attributes)
            .map(|_| rand::seq::index::sample(&mut rng, domain_size, clusters).into_vec())
            .collect();
        (0..clusters)
            .map(|c| columns.iter().map(|col| col[c]).collect())
            .collect()
    };
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (c, proto) in prototypes.iter().enumerate() {
        for _ in 0..per_cluster {
            let row: Vec<String> = proto
                .iter()
                .map(|&v| {
                    let v = if rng.random_bool(noise) {
                        rng.random_range(0..domain_size)
                    } else {
                        v
                    };
                    format!("v{v}")
                })
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    let ids = (0..rows.len()).map(|o| format!("o{o}")).collect();
    let names = (0..attributes).map(|j| format!("a{j}")).collect();
    Ok(PlantedClusters {
        table: CategoricalTable::from_rows(ids, names, &rows)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::rmse;
    use crate::mf::predict_batch;

    fn small(noise: f64, quantize: bool, friend_density: f64) -> SynthConfig {
        SynthConfig {
            seed: 4,
            num_users: 20,
            num_items: 15,
            rank: 3,
            friend_density,
            noise,
            rating_density: 1.0,
            quantize,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = synth_coupled(&small(0.3, true, 0.2)).unwrap();
        let b = synth_coupled(&small(0.3, true, 0.2)).unwrap();
        assert_eq!(a.ratings, b.ratings);
        assert_eq!(a.couplings, b.couplings);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn noiseless_unquantized_is_reproduced_exactly() {
        let data = synth_coupled(&small(0.0, false, 0.2)).unwrap();
        let pairs: Vec<(usize, usize)> = data
            .ratings
            .ratings()
            .iter()
            .map(|r| (r.user, r.item))
            .collect();
        let preds = predict_batch(
            &data.truth,
            Some(&data.couplings),
            &pairs,
            data.ratings.range(),
        );
        for (r, p) in data.ratings.ratings().iter().zip(preds) {
            assert_eq!(r.value, p);
        }
    }

    #[test]
    fn noiseless_quantized_error_is_rounding_only() {
        let data = synth_coupled(&small(0.0, true, 0.2)).unwrap();
        assert_eq!(data.ratings.len(), 20 * 15);
        let pairs: Vec<(f64, f64)> = data
            .ratings
            .ratings()
            .iter()
            .map(|r| {
                (
                    r.value,
                    data.ratings.range().clamp(cmf_predict(
                        &data.truth,
                        &data.couplings,
                        r.user,
                        r.item,
                    )),
                )
            })
            .collect();
        assert!(pairs.iter().all(|(a, p)| (a - p).abs() <= 0.5 + 1e-12));
        assert!(rmse(&pairs).unwrap() <= 0.5);
    }

    #[test]
    fn zero_density_has_no_links() {
        let data = synth_coupled(&small(0.3, true, 0.0)).unwrap();
        assert!(data.couplings.users.is_empty() && data.couplings.items.is_empty());
    }

    #[test]
    fn planted_cluster_shape() {
        let planted = planted_clusters(1, 3, 20, 6, 5, 0.1).unwrap();
        assert_eq!(planted.table.num_objects(), 60);
        assert_eq!(planted.table.num_attributes(), 6);
        assert_eq!(planted.labels.iter().filter(|&&l| l == 2).count(), 20);
        assert!(planted_clusters(1, 3, 20, 6, 2, 0.1).is_err());
    }
}
