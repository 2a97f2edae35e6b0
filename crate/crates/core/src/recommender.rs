//! Uniform interface over every rating predictor, keyed by a short label.

use std::cmp::Ordering;
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use crate::cf::{
    self, ItemCoupling, NeighborSource, Prediction, PredictionRequest, RatingIndex,
    DEFAULT_NEIGHBORS,
};
use crate::coupling::{coupling_matrix, CouplingParams};
use crate::data::{CategoricalTable, RatingDataset, RatingRange};
use crate::error::{Error, Result};
use crate::kmodes::ck_modes;
use crate::mf::{self, Couplings, FactorModel, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    UserCf,
    ItemCf,
    SlopeOne,
    CoupledCf,
    BaseMf,
    CoupledMf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::UserCf,
        Algorithm::ItemCf,
        Algorithm::SlopeOne,
        Algorithm::CoupledCf,
        Algorithm::BaseMf,
        Algorithm::CoupledMf,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::UserCf => "ucf",
            Algorithm::ItemCf => "icf",
            Algorithm::SlopeOne => "slope1",
            Algorithm::CoupledCf => "ck-cf",
            Algorithm::BaseMf => "basemf",
            Algorithm::CoupledMf => "cmf",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_owned()))
    }
}

/// Side information some algorithms need: item attributes for coupled CF and
/// relation graphs for coupled MF.
#[derive(Debug, Clone, Default)]
pub struct AuxInputs {
    pub item_attrs: Option<CategoricalTable>,
    pub couplings: Option<Couplings>,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub neighbors: NonZeroUsize,
    pub source: NeighborSource,
    pub clusters: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub coupling: Option<CouplingParams>,
    pub mf: TrainConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            source: NeighborSource::Cluster,
            clusters: 5,
            max_iter: 100,
            seed: 0,
            coupling: None,
            mf: TrainConfig::default(),
        }
    }
}

pub trait RatingPredictor: Send + Sync {
    fn algorithm(&self) -> Algorithm;

    /// Clamped prediction together with neighbor-pool statistics.
    fn predict_detailed(&self, user: usize, item: usize) -> Prediction;

    fn predict(&self, user: usize, item: usize) -> f64 {
        self.predict_detailed(user, item).value
    }

    /// Number of objects in the largest item cluster, for cluster-scoped
    /// predictors.
    fn largest_cluster(&self) -> Option<usize> {
        None
    }
}

struct NeighborhoodPredictor {
    algorithm: Algorithm,
    index: RatingIndex,
    coupling: Option<ItemCoupling>,
    neighbors: NonZeroUsize,
    source: NeighborSource,
}

impl RatingPredictor for NeighborhoodPredictor {
    fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    fn predict_detailed(&self, user: usize, item: usize) -> Prediction {
        let req = PredictionRequest::new(user, item)
            .with_cap(self.neighbors)
            .with_source(self.source);
        match self.algorithm {
            Algorithm::UserCf => cf::predict_user_based(&self.index, &req),
            Algorithm::ItemCf => cf::predict_item_based(&self.index, &req),
            Algorithm::SlopeOne => cf::predict_slope_one(&self.index, &req),
            Algorithm::CoupledCf => cf::predict_coupled(
                &self.index,
                self.coupling.as_ref().expect("coupled CF has clusters"),
                &req,
            ),
            Algorithm::BaseMf | Algorithm::CoupledMf => {
                unreachable!("factor models use FactorPredictor")
            }
        }
    }

    fn largest_cluster(&self) -> Option<usize> {
        self.coupling.as_ref().map(ItemCoupling::largest_cluster)
    }
}

/// Trained factor model plus the graphs it predicts with.
pub struct FactorPredictor {
    pub model: FactorModel,
    pub couplings: Option<Couplings>,
    pub range: RatingRange,
}

impl RatingPredictor for FactorPredictor {
    fn algorithm(&self) -> Algorithm {
        if self.couplings.is_some() {
            Algorithm::CoupledMf
        } else {
            Algorithm::BaseMf
        }
    }

    fn predict_detailed(&self, user: usize, item: usize) -> Prediction {
        Prediction {
            value: self.range.clamp(mf::predict(
                &self.model,
                self.couplings.as_ref(),
                user,
                item,
            )),
            candidates: 0,
            neighbors: 0,
        }
    }
}

/// Item clusters and coupled similarities for the items of `train`.
pub fn item_coupling(
    train: &RatingDataset,
    table: &CategoricalTable,
    config: &FitConfig,
) -> Result<ItemCoupling> {
    let params = config
        .coupling
        .clone()
        .unwrap_or_else(|| CouplingParams::uniform(table.num_attributes()));
    let k = config.clusters.min(table.num_objects());
    let clusters = ck_modes(table, k, config.seed, config.max_iter, &params)?;
    let similarity = coupling_matrix(table, &params)?;
    ItemCoupling::align(train.items(), table, &clusters, similarity)
}

pub fn fit(
    algorithm: Algorithm,
    train: &RatingDataset,
    aux: &AuxInputs,
    config: &FitConfig,
) -> Result<Box<dyn RatingPredictor>> {
    match algorithm {
        Algorithm::BaseMf | Algorithm::CoupledMf => {
            let couplings = match algorithm {
                Algorithm::CoupledMf => Some(aux.couplings.clone().ok_or_else(|| {
                    Error::InvalidArgument(
                        "cmf needs a user relation graph or an item relation graph".into(),
                    )
                })?),
                _ => None,
            };
            let outcome = mf::train(train, couplings.as_ref(), &config.mf)?;
            Ok(Box::new(FactorPredictor {
                model: outcome.model,
                couplings,
                range: train.range(),
            }))
        }
        _ => {
            let coupling = match algorithm {
                Algorithm::CoupledCf => {
                    let table = aux.item_attrs.as_ref().ok_or_else(|| {
                        Error::InvalidArgument("ck-cf needs an item attribute table".into())
                    })?;
                    Some(item_coupling(train, table, config)?)
                }
                _ => None,
            };
            Ok(Box::new(NeighborhoodPredictor {
                algorithm,
                index: RatingIndex::new(train)?,
                coupling,
                neighbors: config.neighbors,
                source: config.source,
            }))
        }
    }
}

/// Up to `n` items the user has not rated, best predicted first; equal
/// predictions are ordered by item index.
pub fn top_n(
    predictor: &dyn RatingPredictor,
    index: &RatingIndex,
    user: usize,
    n: usize,
) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = (0..index.num_items())
        .filter(|&i| index.rating(user, i).is_none())
        .map(|i| (i, predictor.predict(user, i)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(n);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{IdIndex, Rating};

    #[test]
    fn labels_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
        }
        assert!(matches!(
            "knn".parse::<Algorithm>(),
            Err(Error::UnknownAlgorithm(_))
        ));
    }

    fn data() -> RatingDataset {
        let triples = [
            (0, 0, 5.0),
            (0, 1, 3.0),
            (1, 0, 4.0),
            (1, 2, 2.0),
            (2, 1, 1.0),
            (2, 2, 4.0),
            (2, 3, 5.0),
        ];
        RatingDataset::new(
            IdIndex::sequential("u", 3),
            IdIndex::sequential("i", 4),
            triples
                .iter()
                .map(|&(user, item, value)| Rating { user, item, value })
                .collect(),
            RatingRange::new(1.0, 5.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn top_n_contract() {
        let d = data();
        let index = RatingIndex::new(&d).unwrap();
        let p = fit(
            Algorithm::SlopeOne,
            &d,
            &AuxInputs::default(),
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(top_n(p.as_ref(), &index, 0, 10).len(), 2);
        let one = top_n(p.as_ref(), &index, 0, 1);
        assert_eq!(one.len(), 1);
        assert_eq!(
            top_n(p.as_ref(), &index, 0, 10),
            top_n(p.as_ref(), &index, 0, 10)
        );
        let all_rated = RatingDataset::new(
            IdIndex::sequential("u", 1),
            IdIndex::sequential("i", 1),
            vec![Rating {
                user: 0,
                item: 0,
                value: 3.0,
            }],
            RatingRange::new(1.0, 5.0).unwrap(),
        )
        .unwrap();
        let index = RatingIndex::new(&all_rated).unwrap();
        let p = fit(
            Algorithm::ItemCf,
            &all_rated,
            &AuxInputs::default(),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(top_n(p.as_ref(), &index, 0, 3).is_empty());
    }

    #[test]
    fn missing_side_inputs_are_errors() {
        let d = data();
        assert!(fit(
            Algorithm::CoupledCf,
            &d,
            &AuxInputs::default(),
            &FitConfig::default()
        )
        .is_err());
        let cfg = FitConfig {
            mf: TrainConfig {
                rank: 2,
                ..TrainConfig::default()
            },
            ..FitConfig::default()
        };
        assert!(fit(Algorithm::CoupledMf, &d, &AuxInputs::default(), &cfg).is_err());
        assert!(fit(Algorithm::BaseMf, &d, &AuxInputs::default(), &cfg).is_ok());
    }
}
