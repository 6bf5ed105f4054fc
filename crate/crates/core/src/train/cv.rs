use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Event, Label};
use crate::error::{Error, Result};
use crate::tensor::SeededRng;
use crate::users::UserTable;

use super::{build_model, evaluate, train, MetricsReport, TrainConfig};

/// Assigns event indices to `folds` folds, stratified by label. Each class
/// is shuffled with the seeded RNG and dealt round-robin; the dealing
/// position carries over from one class to the next.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if labels.len() < folds {
        return Err(Error::Data(format!(
            "{} events cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut rng = SeededRng::new(seed).fork(0xF01D);
    let mut out = vec![Vec::new(); folds];
    let mut slot = 0;
    for class in [Label::Rumor, Label::NonRumor] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut idx);
        for i in idx {
            out[slot % folds].push(i);
            slot += 1;
        }
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

/// Stratified split into (train, test) indices with roughly `fraction` of
/// each class in the test part.
pub fn holdout_split(labels: &[Label], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("holdout fraction must be in (0, 1), got {fraction}")));
    }
    let mut rng = SeededRng::new(seed).fork(0x5EED);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [Label::Rumor, Label::NonRumor] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut idx);
        let n_test = (idx.len() as f64 * fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<MetricsReport>,
    pub mean: MetricsReport,
}

/// Trains a fresh model per fold on the other folds and evaluates it on the
/// held-out one. Folds run in parallel.
pub fn cross_validate(
    events: &[Event],
    cfg: &TrainConfig,
    pretrained: Option<&UserTable>,
) -> Result<CvReport> {
    cfg.validate()?;
    let labels: Vec<Label> = events.iter().map(|e| e.label).collect();
    let folds = stratified_folds(&labels, cfg.folds, cfg.shuffle_seed)?;
    let reports = (0..folds.len())
        .into_par_iter()
        .map(|f| {
            let held: Vec<Event> = folds[f].iter().map(|&i| events[i].clone()).collect();
            let rest: Vec<Event> = (0..folds.len())
                .filter(|&g| g != f)
                .flat_map(|g| folds[g].iter().map(|&i| events[i].clone()))
                .collect();
            let mut model = build_model(&cfg.model, &rest, pretrained)?;
            let train_set = model.prepare_all(&rest)?;
            let test_set = model.prepare_all(&held)?;
            let outcome = train(&mut model, &train_set, cfg, |_| {})?;
            log::info!("fold {}: {} epochs", f + 1, outcome.curve.len());
            evaluate(&model, &test_set)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = MetricsReport::mean(&reports);
    Ok(CvReport {
        folds: reports,
        mean,
    })
}
