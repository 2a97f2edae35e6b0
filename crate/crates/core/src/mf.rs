//! Matrix factorization with optional user-user and item-item coupling.
//!
//! The base model predicts `R_m + ⟨P_u, Q_i⟩`. The coupled model adds the
//! friends' factors against the item, `Σ_v S_uv ⟨P_v, Q_i⟩`, and the user's
//! factors against linked items, `Σ_j W_ij ⟨P_u, Q_j⟩`. Both are fit by
//! stochastic gradient descent on the regularized squared error.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Rating, RatingDataset, RatingRange, RelationGraph};
use crate::error::{Error, Result};

const MODEL_MAGIC: &str = "coupled-rec factor-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelFlags {
    /// Trained with relation graphs.
    pub coupled: bool,
    /// Global offset was learned rather than fixed to the mean rating.
    pub trained_offset: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    num_users: usize,
    num_items: usize,
    rank: usize,
    pub offset: f64,
    pub flags: ModelFlags,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl FactorModel {
    pub fn new(
        num_users: usize,
        num_items: usize,
        rank: usize,
        offset: f64,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if rank == 0 || rank > num_users.min(num_items) {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} must lie in [1, min({num_users}, {num_items})]"
            )));
        }
        if user_factors.len() != num_users * rank || item_factors.len() != num_items * rank {
            return Err(Error::InvalidArgument(format!(
                "factor lengths {} and {} do not match {num_users}x{rank} and {num_items}x{rank}",
                user_factors.len(),
                item_factors.len()
            )));
        }
        if !offset.is_finite()
            || user_factors
                .iter()
                .chain(&item_factors)
                .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "model parameters must be finite".into(),
            ));
        }
        Ok(Self {
            num_users,
            num_items,
            rank,
            offset,
            flags: ModelFlags::default(),
            user_factors,
            item_factors,
        })
    }

    pub fn zeros(num_users: usize, num_items: usize, rank: usize, offset: f64) -> Result<Self> {
        Self::new(
            num_users,
            num_items,
            rank,
            offset,
            vec![0.0; num_users * rank],
            vec![0.0; num_items * rank],
        )
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.rank..(u + 1) * self.rank]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.rank..(i + 1) * self.rank]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_factors[u * self.rank..(u + 1) * self.rank]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.item_factors[i * self.rank..(i + 1) * self.rank]
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn user_factors_mut(&mut self) -> &mut [f64] {
        &mut self.user_factors
    }

    pub fn item_factors_mut(&mut self) -> &mut [f64] {
        &mut self.item_factors
    }

    fn squared_norm(&self) -> f64 {
        self.user_factors
            .iter()
            .chain(&self.item_factors)
            .map(|v| v * v)
            .sum()
    }

    /// Text container: a header with sizes, offset and flags, then `P` and `Q`
    /// one row per line. Floats use the shortest exact decimal form.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut text = String::new();
        let _ = writeln!(text, "{MODEL_MAGIC} v{MODEL_VERSION}");
        let _ = writeln!(text, "users {}", self.num_users);
        let _ = writeln!(text, "items {}", self.num_items);
        let _ = writeln!(text, "rank {}", self.rank);
        let _ = writeln!(text, "offset {}", self.offset);
        let _ = writeln!(
            text,
            "flags {} {}",
            if self.flags.coupled {
                "coupled"
            } else {
                "base"
            },
            if self.flags.trained_offset {
                "trained-offset"
            } else {
                "fixed-offset"
            }
        );
        for (label, factors, rows) in [
            ("P", &self.user_factors, self.num_users),
            ("Q", &self.item_factors, self.num_items),
        ] {
            let _ = writeln!(text, "{label}");
            for r in 0..rows {
                let row = &factors[r * self.rank..(r + 1) * self.rank];
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(text, "{}", line.join(" "));
            }
        }
        out.write_all(text.as_bytes())
            .map_err(|e| Error::io("<model>", e))
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(Ok(line)) => Ok(line),
                Some(Err(e)) => Err(Error::io("<model>", e)),
                None => Err(Error::Format(format!(
                    "unexpected end of file, expected {what}"
                ))),
            }
        };
        let magic = next("header")?;
        if magic != format!("{MODEL_MAGIC} v{MODEL_VERSION}") {
            return Err(Error::Format(format!("unrecognized header `{magic}`")));
        }
        fn field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("expected `{key} <value>`, found `{line}`")))
        }
        let num_users: usize = field(&next("users")?, "users")?;
        let num_items: usize = field(&next("items")?, "items")?;
        let rank: usize = field(&next("rank")?, "rank")?;
        let offset: f64 = field(&next("offset")?, "offset")?;
        let flags_line = next("flags")?;
        let flag_words: Vec<&str> = flags_line.split_whitespace().collect();
        let flags = match flag_words.as_slice() {
            ["flags", kind, off] => ModelFlags {
                coupled: match *kind {
                    "coupled" => true,
                    "base" => false,
                    other => return Err(Error::Format(format!("unknown model kind `{other}`"))),
                },
                trained_offset: match *off {
                    "trained-offset" => true,
                    "fixed-offset" => false,
                    other => return Err(Error::Format(format!("unknown offset flag `{other}`"))),
                },
            },
            _ => {
                return Err(Error::Format(format!(
                    "malformed flags line `{flags_line}`"
                )))
            }
        };
        let mut read_block = |label: &str, rows: usize| -> Result<Vec<f64>> {
            let marker = next(label)?;
            if marker != label {
                return Err(Error::Format(format!(
                    "expected `{label}`, found `{marker}`"
                )));
            }
            let mut values = Vec::with_capacity(rows * rank);
            for r in 0..rows {
                let line = next(label)?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::Format(format!("{label} row {r}: cannot parse `{line}`"))
                    })?;
                if row.len() != rank {
                    return Err(Error::Format(format!(
                        "{label} row {r} has {} values, expected {rank}",
                        row.len()
                    )));
                }
                values.extend(row);
            }
            Ok(values)
        };
        let p = read_block("P", num_users)?;
        let q = read_block("Q", num_items)?;
        let mut model = Self::new(num_users, num_items, rank, offset, p, q)?;
        model.flags = flags;
        Ok(model)
    }
}

/// User-user relation `S` and item-item relation `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Couplings {
    pub users: RelationGraph,
    pub items: RelationGraph,
}

impl Couplings {
    pub fn new(users: RelationGraph, items: RelationGraph) -> Self {
        Self { users, items }
    }

    pub fn empty(num_users: usize, num_items: usize) -> Self {
        Self {
            users: RelationGraph::empty(num_users),
            items: RelationGraph::empty(num_items),
        }
    }

    fn check(&self, model_users: usize, model_items: usize) -> Result<()> {
        if self.users.node_count() != model_users || self.items.node_count() != model_items {
            return Err(Error::InvalidArgument(format!(
                "graphs cover {} users and {} items, model has {model_users} and {model_items}",
                self.users.node_count(),
                self.items.node_count()
            )));
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn base_predict(model: &FactorModel, u: usize, i: usize) -> f64 {
    model.offset + dot(model.user(u), model.item(i))
}

pub fn cmf_predict(model: &FactorModel, graphs: &Couplings, u: usize, i: usize) -> f64 {
    let pu = model.user(u);
    let qi = model.item(i);
    let mut value = model.offset + dot(pu, qi);
    let mut social = 0.0;
    for &(v, s) in graphs.users.neighbors(u) {
        social += s * dot(model.user(v), qi);
    }
    let mut linked = 0.0;
    for &(j, w) in graphs.items.neighbors(i) {
        linked += w * dot(pu, model.item(j));
    }
    value += social;
    value += linked;
    value
}

pub fn predict(model: &FactorModel, graphs: Option<&Couplings>, u: usize, i: usize) -> f64 {
    match graphs {
        Some(g) => cmf_predict(model, g, u, i),
        None => base_predict(model, u, i),
    }
}

/// `½ Σ (r − r̂)² + (λ/2)(‖P‖² + ‖Q‖²)` over the given ratings.
pub fn loss(
    model: &FactorModel,
    graphs: Option<&Couplings>,
    ratings: &[Rating],
    lambda: f64,
) -> f64 {
    let sse: f64 = ratings
        .iter()
        .map(|r| {
            let e = r.value - predict(model, graphs, r.user, r.item);
            e * e
        })
        .sum();
    0.5 * sse + 0.5 * lambda * model.squared_norm()
}

/// Partial derivatives of [`loss`] with respect to every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub users: Vec<f64>,
    pub items: Vec<f64>,
    pub offset: f64,
}

pub fn gradients(
    model: &FactorModel,
    graphs: Option<&Couplings>,
    ratings: &[Rating],
    lambda: f64,
) -> Gradient {
    let d = model.rank();
    let mut grad = Gradient {
        users: model.user_factors().iter().map(|v| lambda * v).collect(),
        items: model.item_factors().iter().map(|v| lambda * v).collect(),
        offset: 0.0,
    };
    for r in ratings {
        let (u, i) = (r.user, r.item);
        let g = -(r.value - predict(model, graphs, u, i));
        grad.offset += g;
        let pu = model.user(u);
        let qi = model.item(i);
        for k in 0..d {
            grad.users[u * d + k] += g * qi[k];
            grad.items[i * d + k] += g * pu[k];
        }
        if let Some(graphs) = graphs {
            for &(v, s) in graphs.users.neighbors(u) {
                let pv = model.user(v);
                for k in 0..d {
                    grad.users[v * d + k] += g * s * qi[k];
                    grad.items[i * d + k] += g * s * pv[k];
                }
            }
            for &(j, w) in graphs.items.neighbors(i) {
                let qj = model.item(j);
                for k in 0..d {
                    grad.users[u * d + k] += g * w * qj[k];
                    grad.items[j * d + k] += g * w * pu[k];
                }
            }
        }
    }
    grad
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rank: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Learn the global offset instead of fixing it to the mean rating.
    pub train_offset: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rank: 4,
            lambda: 0.05,
            learning_rate: 0.01,
            epochs: 50,
            init_scale: 0.1,
            seed: 0,
            shuffle: true,
            train_offset: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda = {} must be >= 0", self.lambda));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate = {} must be > 0",
                self.learning_rate
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return bad(format!("init scale = {} must be > 0", self.init_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FactorModel,
    /// Full regularized loss on the training ratings after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Number of per-rating SGD steps taken.
    pub updates: usize,
}

/// Fits a base (`graphs = None`) or coupled model by SGD.
///
/// Each step touches one rating `(u, i)`: the residual flows into `P_u`,
/// `Q_i`, the friends' `P_v` and the linked items' `Q_j`. The ridge penalty
/// is applied to `P_u` and `Q_i` only. All updates of a step are computed
/// from the parameters as they were before the step.
pub fn train(
    data: &RatingDataset,
    graphs: Option<&Couplings>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mean = data.global_mean().ok_or(Error::Empty("training ratings"))?;
    let (nu, ni, d) = (data.num_users(), data.num_items(), config.rank);
    if let Some(g) = graphs {
        g.check(nu, ni)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.init_scale;
    let p = (0..nu * d).map(|_| rng.random_range(-s..=s)).collect();
    let q = (0..ni * d).map(|_| rng.random_range(-s..=s)).collect();
    let mut model = FactorModel::new(nu, ni, d, mean, p, q)?;
    model.flags = ModelFlags {
        coupled: graphs.is_some(),
        trained_offset: config.train_offset,
    };

    let ratings = data.ratings();
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut updates = 0;
    let lr = config.learning_rate;
    let lambda = config.lambda;
    let mut pu_old = vec![0.0; d];
    let mut qi_old = vec![0.0; d];
    let mut grad_pu = vec![0.0; d];
    let mut grad_qi = vec![0.0; d];

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for &idx in &order {
            let Rating {
                user: u,
                item: i,
                value,
            } = ratings[idx];
            let g = -(value - predict(&model, graphs, u, i));
            pu_old.copy_from_slice(model.user(u));
            qi_old.copy_from_slice(model.item(i));
            grad_pu.copy_from_slice(&qi_old);
            grad_qi.copy_from_slice(&pu_old);

            if let Some(graphs) = graphs {
                for &(j, w) in graphs.items.neighbors(i) {
                    let qj = model.item(j);
                    for k in 0..d {
                        grad_pu[k] += w * qj[k];
                    }
                }
                for &(v, sw) in graphs.users.neighbors(u) {
                    let pv = model.user(v);
                    for k in 0..d {
                        grad_qi[k] += sw * pv[k];
                    }
                }
                for &(v, sw) in graphs.users.neighbors(u) {
                    let pv = model.user_mut(v);
                    for k in 0..d {
                        pv[k] -= lr * g * sw * qi_old[k];
                    }
                }
                for &(j, w) in graphs.items.neighbors(i) {
                    let qj = model.item_mut(j);
                    for k in 0..d {
                        qj[k] -= lr * g * w * pu_old[k];
                    }
                }
            }

            let pu = model.user_mut(u);
            for k in 0..d {
                pu[k] -= lr * (g * grad_pu[k] + lambda * pu_old[k]);
            }
            let qi = model.item_mut(i);
            for k in 0..d {
                qi[k] -= lr * (g * grad_qi[k] + lambda * qi_old[k]);
            }
            if config.train_offset {
                model.offset -= lr * g;
            }
            updates += 1;
        }
        let epoch_loss = loss(&model, graphs, ratings, lambda);
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        epoch_losses.push(epoch_loss);
    }

    Ok(TrainOutcome {
        model,
        epoch_losses,
        updates,
    })
}

/// Clamped predictions for `(user, item)` pairs.
pub fn predict_batch(
    model: &FactorModel,
    graphs: Option<&Couplings>,
    pairs: &[(usize, usize)],
    range: RatingRange,
) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(u, i)| range.clamp(predict(model, graphs, u, i)))
        .collect()
}
