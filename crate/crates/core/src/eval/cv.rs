use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::RatingDataset;
use crate::error::{Error, Result};
use crate::eval::folds::kfold;
use crate::eval::metrics::{mae, rmse};
use crate::recommender::{fit, Algorithm, AuxInputs, FitConfig, RatingPredictor};

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub rmse: f64,
    pub mae: f64,
    pub n_test: usize,
    pub seconds: f64,
}

/// Per-fold scores plus metrics over the union of all test folds.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub folds: Vec<FoldResult>,
    pub rmse: f64,
    pub mae: f64,
    pub n_test: usize,
    pub seconds: f64,
    pub config: String,
}

/// Trains on all folds but one, predicts the held-out fold (clamped to the
/// rating range) and scores it, for every fold.
pub fn cross_validate(
    data: &RatingDataset,
    aux: &AuxInputs,
    algorithm: Algorithm,
    config: &FitConfig,
    folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut report = cross_validate_with(data, folds, seed, algorithm.label(), |train| {
        fit(algorithm, train, aux, config)
    })?;
    report.config = format!(
        "folds={folds} seed={seed} neighbors={} clusters={} rank={} lambda={} lr={} epochs={}",
        config.neighbors,
        config.clusters,
        config.mf.rank,
        config.mf.lambda,
        config.mf.learning_rate,
        config.mf.epochs
    );
    Ok(report)
}

/// Cross-validation with a caller-supplied training step.
pub fn cross_validate_with<F>(
    data: &RatingDataset,
    folds: usize,
    seed: u64,
    label: &str,
    fit_fold: F,
) -> Result<EvalReport>
where
    F: Fn(&RatingDataset) -> Result<Box<dyn RatingPredictor>> + Sync,
{
    let plan = kfold(data.len(), folds, seed)?;
    let runs: Vec<(FoldResult, Vec<(f64, f64)>)> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let start = Instant::now();
            let train_pos = plan.train_positions(fold);
            let test_pos = plan.test_positions(fold);
            let train = data.subset(&train_pos);
            let seen: HashSet<(usize, usize)> =
                train.ratings().iter().map(|r| (r.user, r.item)).collect();
            let leaked = test_pos
                .iter()
                .map(|&p| data.ratings()[p])
                .find(|r| seen.contains(&(r.user, r.item)));
            if let Some(r) = leaked {
                return Err(Error::Invariant(format!(
                    "fold {fold}: test rating ({}, {}) is also in the training set",
                    data.users().id(r.user),
                    data.items().id(r.item)
                )));
            }
            let predictor = fit_fold(&train)?;
            let range = data.range();
            let pairs: Vec<(f64, f64)> = test_pos
                .iter()
                .map(|&p| {
                    let r = data.ratings()[p];
                    (r.value, range.clamp(predictor.predict(r.user, r.item)))
                })
                .collect();
            let result = FoldResult {
                fold,
                rmse: rmse(&pairs)?,
                mae: mae(&pairs)?,
                n_test: pairs.len(),
                seconds: start.elapsed().as_secs_f64(),
            };
            Ok((result, pairs))
        })
        .collect::<Result<_>>()?;

    let all: Vec<(f64, f64)> = runs.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let folds_out: Vec<FoldResult> = runs.into_iter().map(|(r, _)| r).collect();
    Ok(EvalReport {
        label: label.to_owned(),
        rmse: rmse(&all)?,
        mae: mae(&all)?,
        n_test: all.len(),
        seconds: folds_out.iter().map(|f| f.seconds).sum(),
        folds: folds_out,
        config: format!("folds={folds} seed={seed}"),
    })
}

/// `algo,fold,rmse,mae,n_test,seconds` with one aggregate row per report
/// whose fold column is `all`.
pub fn write_reports_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let to_err = |e| Error::csv("<report>", e);
    wtr.write_record(["algo", "fold", "rmse", "mae", "n_test", "seconds"])
        .map_err(to_err)?;
    for report in reports {
        let algo = report.label.as_str();
        for f in &report.folds {
            wtr.write_record([
                algo.to_string(),
                f.fold.to_string(),
                format!("{:.6}", f.rmse),
                format!("{:.6}", f.mae),
                f.n_test.to_string(),
                format!("{:.6}", f.seconds),
            ])
            .map_err(to_err)?;
        }
        wtr.write_record([
            algo.to_string(),
            "all".to_string(),
            format!("{:.6}", report.rmse),
            format!("{:.6}", report.mae),
            report.n_test.to_string(),
            format!("{:.6}", report.seconds),
        ])
        .map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<report>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::Prediction;
    use crate::data::{IdIndex, Rating, RatingRange};

    struct Constant(f64);

    impl RatingPredictor for Constant {
        fn algorithm(&self) -> Algorithm {
            Algorithm::UserCf
        }

        fn predict_detailed(&self, _: usize, _: usize) -> Prediction {
            Prediction {
                value: self.0,
                candidates: 0,
                neighbors: 0,
            }
        }
    }

    fn toy(n: usize) -> RatingDataset {
        let values = [1.0, 2.0, 5.0, 4.0, 3.0, 3.0, 2.0, 5.0, 4.0, 1.0];
        RatingDataset::new(
            IdIndex::sequential("u", n),
            IdIndex::sequential("i", 1),
            (0..n)
                .map(|u| Rating {
                    user: u,
                    item: 0,
                    value: values[u % values.len()],
                })
                .collect(),
            RatingRange::new(1.0, 5.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_mean_predictor_scores_the_std_dev() {
        let data = toy(10);
        let mean = data.global_mean().unwrap();
        let var = data
            .ratings()
            .iter()
            .map(|r| (r.value - mean).powi(2))
            .sum::<f64>()
            / 10.0;
        let report =
            cross_validate_with(&data, 5, 3, "const", |_| Ok(Box::new(Constant(mean)))).unwrap();
        assert!((report.rmse - var.sqrt()).abs() < 1e-12);
        assert_eq!(report.n_test, 10);
        assert!(report.folds.iter().all(|f| f.n_test == 2));
    }

    #[test]
    fn trains_on_eighty_percent() {
        let data = toy(100);
        let seen = std::sync::Mutex::new(Vec::new());
        cross_validate_with(&data, 5, 1, "const", |train| {
            seen.lock().unwrap().push(train.len());
            Ok(Box::new(Constant(3.0)))
        })
        .unwrap();
        assert_eq!(seen.into_inner().unwrap(), vec![80; 5]);
    }

    #[test]
    fn report_csv_has_aggregate_row() {
        let data = toy(20);
        let report = cross_validate(
            &data,
            &AuxInputs::default(),
            Algorithm::SlopeOne,
            &FitConfig::default(),
            5,
            7,
        )
        .unwrap();
        let again = cross_validate(
            &data,
            &AuxInputs::default(),
            Algorithm::SlopeOne,
            &FitConfig::default(),
            5,
            7,
        )
        .unwrap();
        assert_eq!((report.rmse, report.mae), (again.rmse, again.mae));
        let mut out = Vec::new();
        write_reports_csv(&[report], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "algo,fold,rmse,mae,n_test,seconds");
        assert_eq!(lines.len(), 7);
        assert!(lines[6].starts_with("slope1,all,"));
    }
}
