//! Prediction quality metrics and report rendering: Pearson correlation on
//! flattened feature matrices plus centrality MAE per metric, averaged over
//! target domains.

use std::fmt::Write as _;

use crate::centrality::{centrality_matrix, Metric};
use crate::error::{validation, Error, Result};
use crate::population::MultiDomainPopulation;
use crate::tensor::Tensor;
use crate::training::{predict, TrainingState};

/// Pearson correlation coefficient of two equal-length vectors.
pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(validation(format!(
            "pcc needs two equal-length vectors of at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::Degenerate(
            "pcc undefined: one of the vectors has zero variance".into(),
        ));
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Mean absolute error between the centrality matrices of two feature
/// matrices: mean over all `n x r` node scores.
pub fn mae_centrality(truth: &Tensor, pred: &Tensor, r: usize, metric: Metric) -> Result<f64> {
    if truth.shape() != pred.shape() {
        return Err(validation("mae_centrality: shapes differ"));
    }
    let truth_scores = centrality_matrix(truth, r, metric)?;
    let pred_scores = centrality_matrix(pred, r, metric)?;
    if pred_scores.clamped_entries > 0 {
        log::debug!(
            "mae_centrality({metric}): clamped {} negative predicted weights",
            pred_scores.clamped_entries
        );
    }
    let total: f64 = truth_scores
        .scores
        .data()
        .iter()
        .zip(pred_scores.scores.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / truth_scores.scores.len() as f64)
}

/// Scores of one target domain (or the cross-domain average).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainScores {
    pub domain: String,
    pub pcc: f64,
    pub mae_bc: f64,
    pub mae_cc: f64,
    pub mae_ec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMetadata {
    pub seed: u64,
    pub config_digest: String,
    pub training_metric: String,
}

/// Per-domain and averaged evaluation results.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_domain: Vec<DomainScores>,
    pub average: DomainScores,
    pub metadata: ReportMetadata,
}

/// Scores a set of predictions against a paired test population.
pub fn evaluate_predictions(
    test: &MultiDomainPopulation,
    predictions: &[Tensor],
    metadata: ReportMetadata,
) -> Result<EvaluationReport> {
    if predictions.len() != test.n_targets() {
        return Err(validation(format!(
            "{} predictions for {} target domains",
            predictions.len(),
            test.n_targets()
        )));
    }
    let r = test.regions();
    let mut per_domain = Vec::with_capacity(predictions.len());
    for (dataset, pred) in test.targets().iter().zip(predictions) {
        let truth = &dataset.features;
        if truth.shape() != pred.shape() {
            return Err(validation(format!(
                "domain {}: prediction shape {:?} does not match truth {:?}",
                dataset.domain_id,
                pred.shape(),
                truth.shape()
            )));
        }
        per_domain.push(DomainScores {
            domain: dataset.domain_id.to_string(),
            pcc: pcc(truth.data(), pred.data())?,
            mae_bc: mae_centrality(truth, pred, r, Metric::Betweenness)?,
            mae_cc: mae_centrality(truth, pred, r, Metric::Closeness)?,
            mae_ec: mae_centrality(truth, pred, r, Metric::Eigenvector)?,
        });
    }
    let k = per_domain.len() as f64;
    let average = DomainScores {
        domain: "average".into(),
        pcc: per_domain.iter().map(|d| d.pcc).sum::<f64>() / k,
        mae_bc: per_domain.iter().map(|d| d.mae_bc).sum::<f64>() / k,
        mae_cc: per_domain.iter().map(|d| d.mae_cc).sum::<f64>() / k,
        mae_ec: per_domain.iter().map(|d| d.mae_ec).sum::<f64>() / k,
    };
    Ok(EvaluationReport {
        per_domain,
        average,
        metadata,
    })
}

/// Predicts the test population's targets and scores them.
pub fn evaluate(state: &TrainingState, test: &MultiDomainPopulation) -> Result<EvaluationReport> {
    let predictions = predict(state, &test.source().features)?;
    evaluate_predictions(
        test,
        &predictions,
        ReportMetadata {
            seed: state.config.seed,
            config_digest: String::new(),
            training_metric: state.config.centrality_metric.to_string(),
        },
    )
}

impl EvaluationReport {
    /// Aligned text table; same numbers as the CSV rendering.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# seed={} config={} metric={}",
            self.metadata.seed, self.metadata.config_digest, self.metadata.training_metric
        );
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>9} {:>9} {:>9}",
            "domain", "PCC", "MAE(BC)", "MAE(CC)", "MAE(EC)"
        );
        for row in self.per_domain.iter().chain(std::iter::once(&self.average)) {
            let _ = writeln!(
                out,
                "{:<10} {:>8.4} {:>9.4} {:>9.4} {:>9.4}",
                row.domain, row.pcc, row.mae_bc, row.mae_cc, row.mae_ec
            );
        }
        out
    }

    /// Machine rendering, header `domain,pcc,mae_bc,mae_cc,mae_ec`.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("domain,pcc,mae_bc,mae_cc,mae_ec\n");
        for row in self.per_domain.iter().chain(std::iter::once(&self.average)) {
            let _ = writeln!(
                out,
                "{},{:.4},{:.4},{:.4},{:.4}",
                row.domain, row.pcc, row.mae_bc, row.mae_cc, row.mae_ec
            );
        }
        out
    }
}
