//! Prediction throughput: recommendations generated per second.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::RatingDataset;
use crate::error::{Error, Result};
use crate::recommender::{fit, Algorithm, AuxInputs, FitConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub algorithm: Algorithm,
    pub k: usize,
    pub requests: usize,
    pub seconds: f64,
    pub throughput: f64,
    /// Largest neighbor pool scanned by any timed request.
    pub max_candidates: usize,
    pub largest_cluster: Option<usize>,
}

/// Fits `algorithm` on `data`, runs `warmup` untimed predictions, then times
/// `requests` predictions for `(user, item)` pairs drawn uniformly with the
/// config seed. Cluster-scoped predictors must never scan more candidates
/// than their largest cluster holds.
pub fn throughput_bench(
    algorithm: Algorithm,
    data: &RatingDataset,
    aux: &AuxInputs,
    config: &FitConfig,
    requests: usize,
    warmup: usize,
) -> Result<BenchResult> {
    if requests == 0 {
        return Err(Error::InvalidArgument(
            "benchmark needs at least one request".into(),
        ));
    }
    let predictor = fit(algorithm, data, aux, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (nu, ni) = (data.num_users(), data.num_items());
    let mut draw = |n: usize| -> Vec<(usize, usize)> {
        (0..n)
            .map(|_| (rng.random_range(0..nu), rng.random_range(0..ni)))
            .collect()
    };
    let warm = draw(warmup);
    let timed = draw(requests);

    for &(u, i) in &warm {
        black_box(predictor.predict(u, i));
    }
    let start = Instant::now();
    let mut max_candidates = 0;
    for &(u, i) in &timed {
        let p = black_box(predictor.predict_detailed(u, i));
        max_candidates = max_candidates.max(p.candidates);
    }
    let seconds = start.elapsed().as_secs_f64();

    let largest_cluster = predictor.largest_cluster();
    if let Some(bound) = largest_cluster {
        if max_candidates > bound {
            return Err(Error::Invariant(format!(
                "{algorithm}: {max_candidates} candidates exceed the largest cluster ({bound})"
            )));
        }
    }
    Ok(BenchResult {
        algorithm,
        k: config.clusters,
        requests,
        seconds,
        throughput: requests as f64 / seconds.max(f64::MIN_POSITIVE),
        max_candidates,
        largest_cluster,
    })
}

/// `algo,k,requests,seconds,throughput,max_candidates`.
pub fn write_bench_csv<W: Write>(results: &[BenchResult], out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let to_err = |e| Error::csv("<bench>", e);
    wtr.write_record([
        "algo",
        "k",
        "requests",
        "seconds",
        "throughput",
        "max_candidates",
    ])
    .map_err(to_err)?;
    for r in results {
        wtr.write_record([
            r.algorithm.label().to_string(),
            r.k.to_string(),
            r.requests.to_string(),
            format!("{:.6}", r.seconds),
            format!("{:.3}", r.throughput),
            r.max_candidates.to_string(),
        ])
        .map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<bench>", e))
}
