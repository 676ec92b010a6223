//! Multi-view graph populations: data model, feature vectorization, CSV
//! ingestion, and a seeded synthetic population generator.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, Error, Result};
use crate::similarity::SimilarityMatrix;
use crate::tensor::Tensor;

/// Feature-vector length for `r` regions: the strict upper triangle.
pub fn feature_len(r: usize) -> usize {
    r * (r - 1) / 2
}

/// Region count whose strict upper triangle has length `f`, if any.
pub fn regions_for_feature_len(f: usize) -> Option<usize> {
    // r(r-1)/2 = f  =>  r = (1 + sqrt(1 + 8f)) / 2
    let root = ((1.0 + 8.0 * f as f64).sqrt() + 1.0) / 2.0;
    let r = root.round() as usize;
    (r >= 2 && feature_len(r) == f).then_some(r)
}

/// Index of edge `(i, j)` (`i < j`) in the row-major upper-triangle layout.
pub fn upper_index(i: usize, j: usize, r: usize) -> usize {
    debug_assert!(i < j && j < r);
    i * r - i * (i + 1) / 2 + (j - i - 1)
}

/// One view of one subject: a symmetric, non-negative, zero-diagonal
/// weighted adjacency over `r` regions.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainGraph {
    weights: Tensor,
}

impl BrainGraph {
    pub fn new(weights: Tensor) -> Result<Self> {
        let r = weights.rows();
        if weights.cols() != r || r < 2 {
            return Err(validation(format!(
                "brain graph requires a square matrix with r >= 2, got {}x{}",
                weights.rows(),
                weights.cols()
            )));
        }
        for i in 0..r {
            if weights.get(i, i) != 0.0 {
                return Err(validation(format!("non-zero diagonal at region {i}")));
            }
            for j in 0..r {
                let w = weights.get(i, j);
                if w < 0.0 {
                    return Err(validation(format!("negative weight at ({i}, {j})")));
                }
                if w != weights.get(j, i) {
                    return Err(validation(format!("asymmetric weights at ({i}, {j})")));
                }
            }
        }
        Ok(BrainGraph { weights })
    }

    pub fn regions(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }
}

/// Upper-triangle feature vector of a graph, in row-major pair order.
pub fn vectorize(g: &BrainGraph) -> Vec<f64> {
    let r = g.regions();
    let mut out = Vec::with_capacity(feature_len(r));
    for i in 0..r {
        for j in (i + 1)..r {
            out.push(g.weight(i, j));
        }
    }
    out
}

/// Rebuilds a graph from a feature vector, clamping negative entries to 0.
///
/// Returns the graph plus the number of clamped entries (generated feature
/// rows may go slightly negative; Table-style centralities need w >= 0).
pub fn devectorize(values: &[f64], r: usize) -> Result<(BrainGraph, usize)> {
    if values.len() != feature_len(r) {
        return Err(validation(format!(
            "feature vector length {} does not match r={} (expected {})",
            values.len(),
            r,
            feature_len(r)
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(validation("feature vector contains a non-finite value"));
    }
    let mut weights = Tensor::zeros(r, r);
    let mut clamped = 0;
    let mut k = 0;
    for i in 0..r {
        for j in (i + 1)..r {
            let mut w = values[k];
            if w < 0.0 {
                w = 0.0;
                clamped += 1;
            }
            weights.set(i, j, w);
            weights.set(j, i, w);
            k += 1;
        }
    }
    Ok((BrainGraph::new(weights)?, clamped))
}

/// Domain tag: the source view or one of the `m` target views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainId {
    Source,
    /// 1-based target index, rendered as `T1..Tm`.
    Target(usize),
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainId::Source => write!(f, "S"),
            DomainId::Target(i) => write!(f, "T{i}"),
        }
    }
}

impl DomainId {
    pub fn parse(s: &str) -> Option<DomainId> {
        if s == "S" {
            return Some(DomainId::Source);
        }
        let idx = s.strip_prefix('T')?.parse::<usize>().ok()?;
        (idx >= 1).then_some(DomainId::Target(idx))
    }
}

/// Feature matrix for one domain, one row per subject, plus the learned
/// sample-similarity matrix once it exists.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub domain_id: DomainId,
    pub features: Tensor,
    pub similarity: Option<SimilarityMatrix>,
}

impl DomainDataset {
    pub fn new(domain_id: DomainId, features: Tensor) -> Self {
        DomainDataset {
            domain_id,
            features,
            similarity: None,
        }
    }
}

/// Paired multi-domain graph population: one source view and `m` target
/// views over the same ordered subjects. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MultiDomainPopulation {
    r: usize,
    subjects: Vec<String>,
    source: DomainDataset,
    targets: Vec<DomainDataset>,
}

impl MultiDomainPopulation {
    pub fn new(
        r: usize,
        subjects: Vec<String>,
        source: DomainDataset,
        targets: Vec<DomainDataset>,
    ) -> Result<Self> {
        let n = subjects.len();
        let f = feature_len(r);
        if n == 0 {
            return Err(validation("population has no subjects"));
        }
        for ds in std::iter::once(&source).chain(&targets) {
            if ds.features.rows() != n || ds.features.cols() != f {
                return Err(validation(format!(
                    "domain {} has shape {}x{}, expected {}x{}",
                    ds.domain_id,
                    ds.features.rows(),
                    ds.features.cols(),
                    n,
                    f
                )));
            }
        }
        Ok(MultiDomainPopulation {
            r,
            subjects,
            source,
            targets,
        })
    }

    pub fn regions(&self) -> usize {
        self.r
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.r)
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn source(&self) -> &DomainDataset {
        &self.source
    }

    pub fn targets(&self) -> &[DomainDataset] {
        &self.targets
    }

    /// Sub-population keeping the given subject indices, in the given order.
    pub fn restrict(&self, idx: &[usize]) -> Result<MultiDomainPopulation> {
        if idx.iter().any(|&i| i >= self.n_subjects()) {
            return Err(validation("restriction index out of range"));
        }
        let subjects = idx.iter().map(|&i| self.subjects[i].clone()).collect();
        let source = DomainDataset::new(DomainId::Source, self.source.features.restrict_rows(idx));
        let targets = self
            .targets
            .iter()
            .map(|t| DomainDataset::new(t.domain_id, t.features.restrict_rows(idx)))
            .collect();
        MultiDomainPopulation::new(self.r, subjects, source, targets)
    }
}

/// Seeded disjoint train/test partition, paired across all domains.
pub fn split_train_test(
    pop: &MultiDomainPopulation,
    fraction: f64,
    seed: u64,
) -> Result<(MultiDomainPopulation, MultiDomainPopulation)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(validation(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = pop.n_subjects();
    let n_train = ((n as f64) * fraction + 1e-9).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(validation(format!(
            "degenerate split: {n_train} train / {} test subjects",
            n - n_train
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut test: Vec<usize> = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((pop.restrict(&train)?, pop.restrict(&test)?))
}

/// A generated population together with its planted mode labels.
pub struct SyntheticPopulation {
    pub population: MultiDomainPopulation,
    pub mode_labels: Vec<usize>,
}

const MODE_STD: f64 = 0.05;

/// Generates a paired population whose source graphs come from `n_modes`
/// Gaussian mixture components (means separated by at least 4x the component
/// std) and whose targets are fixed smooth per-mode maps of the source
/// features plus Gaussian noise. All features land in [0, 1].
pub fn synthesize_population(
    seed: u64,
    n: usize,
    r: usize,
    m: usize,
    n_modes: usize,
    noise_level: f64,
) -> Result<SyntheticPopulation> {
    if n_modes == 0 || n < 2 * n_modes {
        return Err(validation(format!(
            "need n >= 2*n_modes, got n={n}, n_modes={n_modes}"
        )));
    }
    if r < 3 {
        return Err(validation(format!("need r >= 3, got r={r}")));
    }
    if m == 0 {
        return Err(validation("need at least one target domain"));
    }
    if noise_level < 0.0 {
        return Err(validation("noise_level must be non-negative"));
    }
    let f = feature_len(r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Mixture means, rejection-sampled to a 4-sigma separation.
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    let mut attempts = 0;
    while means.len() < n_modes {
        let candidate: Vec<f64> = (0..f).map(|_| rng.gen_range(0.3..0.7)).collect();
        let ok = means.iter().all(|mu| {
            let d2: f64 = mu
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() >= 4.0 * MODE_STD
        });
        if ok {
            means.push(candidate);
        } else {
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::Degenerate(
                    "could not separate mixture means; raise r or lower n_modes".into(),
                ));
            }
        }
    }

    // Fixed per-(domain, mode) smooth maps: affine then sigmoid. Modes of one
    // domain share a base map plus a mode-specific component, the way views
    // of a common anatomy differ by population mode rather than arbitrarily.
    let gain = 3.0;
    let mode_delta = 0.3;
    let mut maps: Vec<Vec<(Vec<f64>, Vec<f64>)>> = Vec::with_capacity(m);
    for _ in 0..m {
        let base_a: Vec<f64> = (0..f * f)
            .map(|_| normal(&mut rng) / (f as f64).sqrt())
            .collect();
        let base_b: Vec<f64> = (0..f).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut per_mode = Vec::with_capacity(n_modes);
        for _ in 0..n_modes {
            let a: Vec<f64> = base_a
                .iter()
                .map(|&v| v + mode_delta * normal(&mut rng) / (f as f64).sqrt())
                .collect();
            let b: Vec<f64> = base_b
                .iter()
                .map(|&v| v + mode_delta * rng.gen_range(-0.5..0.5))
                .collect();
            per_mode.push((a, b));
        }
        maps.push(per_mode);
    }

    let width = n.to_string().len().max(4);
    let subjects: Vec<String> = (0..n).map(|i| format!("s{i:0width$}")).collect();
    let mode_labels: Vec<usize> = (0..n).map(|i| i % n_modes).collect();

    let mut source_rows = vec![0.0; n * f];
    let mut target_rows = vec![vec![0.0; n * f]; m];
    for subj in 0..n {
        let mode = mode_labels[subj];
        let x: Vec<f64> = means[mode]
            .iter()
            .map(|&mu| (mu + MODE_STD * normal(&mut rng)).clamp(0.0, 1.0))
            .collect();
        source_rows[subj * f..(subj + 1) * f].copy_from_slice(&x);
        for (i, rows) in target_rows.iter_mut().enumerate() {
            let (a, b) = &maps[i][mode];
            for k in 0..f {
                let mut acc = b[k];
                for (l, &xv) in x.iter().enumerate() {
                    acc += a[k * f + l] * xv;
                }
                let clean = 1.0 / (1.0 + (-gain * acc).exp());
                let noisy = if noise_level > 0.0 {
                    clean + noise_level * normal(&mut rng)
                } else {
                    clean
                };
                rows[subj * f + k] = noisy.clamp(0.0, 1.0);
            }
        }
    }

    let source = DomainDataset::new(DomainId::Source, Tensor::from_vec(n, f, source_rows)?);
    let targets = target_rows
        .into_iter()
        .enumerate()
        .map(|(i, rows)| {
            Ok(DomainDataset::new(
                DomainId::Target(i + 1),
                Tensor::from_vec(n, f, rows)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticPopulation {
        population: MultiDomainPopulation::new(r, subjects, source, targets)?,
        mode_labels,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple and seeded.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Loads a population from the `subject_id,domain,v_0..v_{f-1}` CSV layout.
/// Rows may arrive in any order; subjects are sorted lexicographically by id.
pub fn load_population(path: &Path, r: usize, m: usize) -> Result<MultiDomainPopulation> {
    let f = feature_len(r);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    {
        let headers = reader.headers()?;
        if headers.len() < 2 || &headers[0] != "subject_id" || &headers[1] != "domain" {
            return Err(validation(
                "population CSV must start with subject_id,domain columns",
            ));
        }
    }

    let mut by_subject: BTreeMap<String, BTreeMap<DomainId, Vec<f64>>> = BTreeMap::new();
    let mut out_of_range = 0usize;
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_no + 2; // 1-based, after the header
        let subject = record
            .get(0)
            .ok_or_else(|| validation(format!("row {line}: missing subject id")))?
            .to_string();
        let domain_str = record
            .get(1)
            .ok_or_else(|| validation(format!("row {line}: missing domain")))?;
        let domain = DomainId::parse(domain_str)
            .ok_or_else(|| validation(format!("row {line}: unknown domain '{domain_str}'")))?;
        if let DomainId::Target(i) = domain {
            if i > m {
                return Err(validation(format!(
                    "row {line}: domain T{i} exceeds m={m}"
                )));
            }
        }
        if record.len() != f + 2 {
            return Err(validation(format!(
                "row {line}: expected {f} feature values, found {}",
                record.len().saturating_sub(2)
            )));
        }
        let mut values = Vec::with_capacity(f);
        for idx in 0..f {
            let raw = &record[idx + 2];
            let v: f64 = raw
                .parse()
                .map_err(|_| validation(format!("row {line}: bad number '{raw}'")))?;
            if !v.is_finite() {
                return Err(validation(format!("row {line}: non-finite value")));
            }
            if !(0.0..=1.0).contains(&v) {
                out_of_range += 1;
            }
            values.push(v);
        }
        let prior = by_subject
            .entry(subject.clone())
            .or_default()
            .insert(domain, values);
        if prior.is_some() {
            return Err(validation(format!(
                "row {line}: duplicate ({subject}, {domain}) row"
            )));
        }
    }
    if out_of_range > 0 {
        log::warn!("{out_of_range} ingested feature values fall outside [0, 1]");
    }
    if by_subject.is_empty() {
        return Err(validation("population CSV has no data rows"));
    }

    let mut expected = vec![DomainId::Source];
    expected.extend((1..=m).map(DomainId::Target));
    let mut incomplete = Vec::new();
    for (subject, domains) in &by_subject {
        if expected.iter().any(|d| !domains.contains_key(d)) {
            incomplete.push(subject.clone());
        }
    }
    if !incomplete.is_empty() {
        return Err(Error::IncompletePairing(incomplete));
    }

    let subjects: Vec<String> = by_subject.keys().cloned().collect();
    let collect_domain = |domain: DomainId| -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = by_subject
            .values()
            .map(|domains| domains[&domain].clone())
            .collect();
        Tensor::from_rows(&rows)
    };
    let source = DomainDataset::new(DomainId::Source, collect_domain(DomainId::Source)?);
    let targets = (1..=m)
        .map(|i| {
            Ok(DomainDataset::new(
                DomainId::Target(i),
                collect_domain(DomainId::Target(i))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    MultiDomainPopulation::new(r, subjects, source, targets)
}

/// Reads `(r, m)` off a population CSV: `f` from the header width, `m` from
/// the distinct target domains present.
pub fn infer_dimensions(path: &Path) -> Result<(usize, usize)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let f = {
        let headers = reader.headers()?;
        if headers.len() < 3 {
            return Err(validation("population CSV header too short"));
        }
        headers.len() - 2
    };
    let r = regions_for_feature_len(f)
        .ok_or_else(|| validation(format!("{f} columns is not a valid r(r-1)/2 length")))?;
    let mut m = 0usize;
    for record in reader.records() {
        let record = record?;
        if let Some(DomainId::Target(i)) = record.get(1).and_then(DomainId::parse) {
            m = m.max(i);
        }
    }
    if m == 0 {
        return Err(validation("population CSV contains no target-domain rows"));
    }
    Ok((r, m))
}

/// Writes the population in the ingestion CSV layout.
pub fn write_population_csv(pop: &MultiDomainPopulation, path: &Path) -> Result<()> {
    let f = pop.feature_len();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "subject_id,domain")?;
    for k in 0..f {
        write!(out, ",v_{k}")?;
    }
    writeln!(out)?;
    for (idx, subject) in pop.subjects().iter().enumerate() {
        for ds in std::iter::once(pop.source()).chain(pop.targets().iter()) {
            write!(out, "{subject},{}", ds.domain_id)?;
            for &v in ds.features.row(idx) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Loads only the source-domain rows of a population CSV (for prediction,
/// where targets are unknown). Subjects come back sorted by id.
pub fn load_source_features(path: &Path, r: usize) -> Result<(Vec<String>, Tensor)> {
    let f = feature_len(r);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_no + 2;
        if record.get(1).and_then(DomainId::parse) != Some(DomainId::Source) {
            continue;
        }
        let subject = record
            .get(0)
            .ok_or_else(|| validation(format!("row {line}: missing subject id")))?
            .to_string();
        if record.len() != f + 2 {
            return Err(validation(format!(
                "row {line}: expected {f} feature values, found {}",
                record.len().saturating_sub(2)
            )));
        }
        let values = (0..f)
            .map(|idx| {
                record[idx + 2]
                    .parse::<f64>()
                    .map_err(|_| validation(format!("row {line}: bad number '{}'", &record[idx + 2])))
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows.insert(subject.clone(), values).is_some() {
            return Err(validation(format!("row {line}: duplicate source row for {subject}")));
        }
    }
    if rows.is_empty() {
        return Err(validation("no source-domain rows found"));
    }
    let subjects: Vec<String> = rows.keys().cloned().collect();
    let features = Tensor::from_rows(&rows.into_values().collect::<Vec<_>>())?;
    Ok((subjects, features))
}

/// Writes predicted target features in the population CSV layout (target
/// rows only).
pub fn write_predictions_csv(
    subjects: &[String],
    predictions: &[Tensor],
    path: &Path,
) -> Result<()> {
    let f = predictions
        .first()
        .map(|t| t.cols())
        .ok_or_else(|| validation("no predictions to write"))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "subject_id,domain")?;
    for k in 0..f {
        write!(out, ",v_{k}")?;
    }
    writeln!(out)?;
    for (idx, subject) in subjects.iter().enumerate() {
        for (i, pred) in predictions.iter().enumerate() {
            write!(out, "{subject},T{}", i + 1)?;
            for &v in pred.row(idx) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes the `subject_id,mode` sidecar for a synthetic population.
pub fn write_labels_csv(pop: &MultiDomainPopulation, labels: &[usize], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "subject_id,mode")?;
    for (subject, label) in pop.subjects().iter().zip(labels) {
        writeln!(out, "{subject},{label}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the `subject_id,mode` sidecar, returning labels in subject order.
pub fn load_labels_csv(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let subject = record
            .get(0)
            .ok_or_else(|| validation("labels CSV: missing subject id"))?
            .to_string();
        let mode: usize = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| validation("labels CSV: bad mode value"))?;
        rows.push((subject, mode));
    }
    rows.sort();
    Ok(rows)
}
