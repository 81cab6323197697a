//! Generation-capability metrics, erasure metrics, and concept-graph
//! statistics, all grounded in a closed-form Bayes classifier over the
//! ground-truth concept modes.
//!
//! Everything here is read-only over immutable models and spaces.
//! Per-concept sample generation runs on parallel workers, each with an
//! independent seeded substream derived from the caller's seed and the
//! concept id; results merge by concept id, so outputs are deterministic
//! regardless of thread scheduling.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::concepts::{ConceptId, ConceptSpace};
use crate::diffusion::{ancestral_sample_batch, DenoiserModel};
use crate::error::{Error, Result};
use crate::numerics::derive_seed;

/// Anything that can draw conditional samples for evaluation.
///
/// Implemented by [`DenoiserModel`] via ancestral sampling; test doubles
/// implement it directly.
pub trait ConceptSampler: Sync {
    fn data_dim(&self) -> usize;
    fn sample(&self, embedding: &[f64], n: usize, seed: u64) -> Result<Vec<f64>>;
}

impl ConceptSampler for DenoiserModel {
    fn data_dim(&self) -> usize {
        self.input_dim()
    }

    fn sample(&self, embedding: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ancestral_sample_batch(self, embedding, n, &mut rng)
    }
}

/// Evaluation substream for one concept under one base seed.
pub fn eval_stream(seed: u64, concept: ConceptId) -> u64 {
    derive_seed(seed, 0x4556 ^ (concept.0 as u64).wrapping_mul(2).wrapping_add(1))
}

/// Bayes-optimal classifier over the ground-truth concept modes with a
/// uniform prior. Synonyms carry their referent's mode, so the posterior
/// never separates a synonym from its referent; ranking breaks the tie by
/// ascending id.
#[derive(Debug, Clone)]
pub struct ClassifierOracle {
    classes: Vec<(ConceptId, Vec<f64>, f64)>,
    data_dim: usize,
}

impl ClassifierOracle {
    pub fn from_space(space: &ConceptSpace) -> Self {
        let classes = space
            .records()
            .iter()
            .filter_map(|r| {
                r.mode
                    .as_ref()
                    .map(|m| (r.id, m.mean.clone(), m.std))
            })
            .collect();
        ClassifierOracle {
            classes,
            data_dim: space.data_dim(),
        }
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Posterior over all mode-carrying concepts, ranked descending with
    /// ties broken by ascending id. Posteriors sum to 1.
    pub fn classify(&self, point: &[f64]) -> Vec<(ConceptId, f64)> {
        debug_assert_eq!(point.len(), self.data_dim);
        let mut lls: Vec<(ConceptId, f64)> = self
            .classes
            .iter()
            .map(|(id, mean, std)| {
                let mut d2 = 0.0;
                for (x, m) in point.iter().zip(mean) {
                    let d = x - m;
                    d2 += d * d;
                }
                let ll = -d2 / (2.0 * std * std)
                    - self.data_dim as f64 * (std * (2.0 * std::f64::consts::PI).sqrt()).ln();
                (*id, ll)
            })
            .collect();
        let max = lls
            .iter()
            .map(|(_, ll)| *ll)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (_, ll) in lls.iter_mut() {
            *ll = (*ll - max).exp();
            total += *ll;
        }
        for (_, p) in lls.iter_mut() {
            *p /= total;
        }
        lls.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        lls
    }

    /// Posterior mass of one concept at a point.
    pub fn posterior_of(&self, point: &[f64], concept: ConceptId) -> Option<f64> {
        self.classify(point)
            .into_iter()
            .find(|(id, _)| *id == concept)
            .map(|(_, p)| p)
    }
}

fn validate_k(oracle: &ClassifierOracle, k: usize) -> Result<()> {
    if k < 1 || k >= oracle.class_count() {
        return Err(Error::Parameter(format!(
            "k={k} out of range 1..{}",
            oracle.class_count()
        )));
    }
    Ok(())
}

/// DS-k and CS-k for one concept at several k values from a single sample
/// batch.
pub fn concept_scores<S: ConceptSampler>(
    model: &S,
    space: &ConceptSpace,
    oracle: &ClassifierOracle,
    concept: ConceptId,
    ks: &[usize],
    n: usize,
    seed: u64,
) -> Result<BTreeMap<usize, (f64, f64)>> {
    if n == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    for &k in ks {
        validate_k(oracle, k)?;
    }
    let rec = space.record(concept)?;
    if rec.mode.is_none() {
        return Err(Error::Input(format!(
            "concept `{}` has no mode; detection is undefined",
            rec.name
        )));
    }
    let group = space.detection_group(concept);
    let emb = space.embedding_of(concept)?;
    let dim = space.data_dim();
    let samples = model.sample(emb, n, eval_stream(seed, concept))?;
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut conf: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    for i in 0..n {
        let ranked = oracle.classify(&samples[i * dim..(i + 1) * dim]);
        let own_posterior = ranked
            .iter()
            .find(|(id, _)| *id == concept)
            .map(|(_, p)| *p)
            .unwrap_or(0.0);
        for &k in ks {
            let hit = ranked[..k].iter().any(|(id, _)| group.contains(id));
            if hit {
                *hits.get_mut(&k).unwrap() += 1;
                *conf.get_mut(&k).unwrap() += own_posterior;
            }
        }
    }
    Ok(ks
        .iter()
        .map(|&k| (k, (hits[&k] as f64 / n as f64, conf[&k] / n as f64)))
        .collect())
}

/// Fraction of `n` conditional samples whose top-k ranking contains the
/// concept (synonym ids count as hits for their referent and vice versa).
pub fn detection_score<S: ConceptSampler>(
    model: &S,
    space: &ConceptSpace,
    oracle: &ClassifierOracle,
    concept: ConceptId,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<f64> {
    Ok(concept_scores(model, space, oracle, concept, &[k], n, seed)?[&k].0)
}

/// Mean over samples of the concept's posterior when detected in top-k,
/// zero otherwise.
pub fn confidence_score<S: ConceptSampler>(
    model: &S,
    space: &ConceptSpace,
    oracle: &ClassifierOracle,
    concept: ConceptId,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<f64> {
    Ok(concept_scores(model, space, oracle, concept, &[k], n, seed)?[&k].1)
}

/// Per-concept generation capability of one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub id: ConceptId,
    pub name: String,
    pub family: String,
    pub ds1: f64,
    pub dsk: f64,
    pub cs1: f64,
    pub csk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationReport {
    pub label: String,
    pub n: usize,
    pub seed: u64,
    /// The larger k reported beside k=1.
    pub k_top: usize,
    pub rows: Vec<ReportRow>,
}

impl GenerationReport {
    pub fn row(&self, id: ConceptId) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn metric(&self, id: ConceptId, metric: MetricKind) -> Option<f64> {
        let row = self.row(id)?;
        Some(match metric {
            MetricKind::Ds(1) => row.ds1,
            MetricKind::Ds(k) if k == self.k_top => row.dsk,
            MetricKind::Cs(1) => row.cs1,
            MetricKind::Cs(k) if k == self.k_top => row.csk,
            _ => return None,
        })
    }
}

/// Evaluates DS-1/DS-k/CS-1/CS-k for every listed concept in parallel.
pub fn generation_report<S: ConceptSampler>(
    model: &S,
    space: &ConceptSpace,
    oracle: &ClassifierOracle,
    concepts: &[ConceptId],
    k_top: usize,
    n: usize,
    seed: u64,
    label: &str,
) -> Result<GenerationReport> {
    validate_k(oracle, k_top)?;
    let mut rows = concepts
        .par_iter()
        .map(|&id| {
            let scores = concept_scores(model, space, oracle, id, &[1, k_top], n, seed)?;
            let rec = space.record(id)?;
            Ok(ReportRow {
                id,
                name: rec.name.clone(),
                family: rec.family.clone(),
                ds1: scores[&1].0,
                dsk: scores[&k_top].0,
                cs1: scores[&1].1,
                csk: scores[&k_top].1,
            })
        })
        .collect::<Result<Vec<ReportRow>>>()?;
    rows.sort_by_key(|r| r.id);
    Ok(GenerationReport {
        label: label.to_string(),
        n,
        seed,
        k_top,
        rows,
    })
}

/// Which score a matrix or report cell carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MetricKind {
    Ds(usize),
    Cs(usize),
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::Ds(k) => write!(f, "DS-{k}"),
            MetricKind::Cs(k) => write!(f, "CS-{k}"),
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, k) = s
            .split_once('-')
            .ok_or_else(|| Error::Input(format!("invalid metric `{s}`")))?;
        let k: usize = k
            .parse()
            .map_err(|_| Error::Input(format!("invalid metric `{s}`")))?;
        match kind {
            "DS" => Ok(MetricKind::Ds(k)),
            "CS" => Ok(MetricKind::Cs(k)),
            _ => Err(Error::Input(format!("invalid metric `{s}`"))),
        }
    }
}

/// Provenance of one impact-matrix cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellMeta {
    pub n: usize,
    pub seed: u64,
}

/// Square-or-rectangular difference matrix `delta[ce][cj] = G0(cj) -
/// G_ce(cj)` for one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactMatrix {
    pub metric: MetricKind,
    /// Erased concepts, one per row.
    pub rows: Vec<ConceptId>,
    /// Queried concepts, one per column.
    pub cols: Vec<ConceptId>,
    /// Row-major `rows x cols` differences.
    pub values: Vec<f64>,
    pub cells: Vec<CellMeta>,
}

impl ImpactMatrix {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols.len() + col]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Mean over off-diagonal cells (row concept != column concept).
    pub fn mean_off_diagonal(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (ri, &ce) in self.rows.iter().enumerate() {
            for (ci, &cj) in self.cols.iter().enumerate() {
                if ce != cj {
                    sum += self.value(ri, ci);
                    count += 1;
                }
            }
        }
        sum / count.max(1) as f64
    }

    /// Stacks matrices with identical columns row-wise.
    pub fn stack(parts: &[ImpactMatrix]) -> Result<ImpactMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Input("stack: no matrices".into()))?;
        let mut out = ImpactMatrix {
            metric: first.metric,
            rows: Vec::new(),
            cols: first.cols.clone(),
            values: Vec::new(),
            cells: Vec::new(),
        };
        for p in parts {
            if p.cols != out.cols || p.metric != out.metric {
                return Err(Error::Input(
                    "stack: matrices differ in columns or metric".into(),
                ));
            }
            out.rows.extend_from_slice(&p.rows);
            out.values.extend_from_slice(&p.values);
            out.cells.extend_from_slice(&p.cells);
        }
        Ok(out)
    }
}

fn score_for_metric<S: ConceptSampler>(
    model: &S,
    space: &ConceptSpace,
    oracle: &ClassifierOracle,
    concept: ConceptId,
    metric: MetricKind,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let (k, confidence) = match metric {
        MetricKind::Ds(k) => (k, false),
        MetricKind::Cs(k) => (k, true),
    };
    let scores = concept_scores(model, space, oracle, concept, &[k], n, seed)?;
    Ok(if confidence { scores[&k].1 } else { scores[&k].0 })
}

/// Builds the impact matrix for a set of sanitized models.
///
/// The base capability `G0(cj)` is computed once and shared across rows;
/// every cell's sampling seed is derived from the call seed and the
/// queried concept, so a column uses paired noise across models.
pub fn impact_matrix<S: ConceptSampler>(
    base: &S,
    sanitized: &[(ConceptId, &S)],
    space: &ConceptSpace,
    oracle: &ClassifierOracle,
    concepts: &[ConceptId],
    metric: MetricKind,
    n: usize,
    seed: u64,
) -> Result<ImpactMatrix> {
    if sanitized.is_empty() {
        return Err(Error::Input("impact_matrix: no sanitized models".into()));
    }
    let g0: Vec<f64> = concepts
        .par_iter()
        .map(|&cj| score_for_metric(base, space, oracle, cj, metric, n, seed))
        .collect::<Result<Vec<f64>>>()?;

    let mut values = vec![0.0; sanitized.len() * concepts.len()];
    let mut cells = vec![CellMeta { n, seed: 0 }; sanitized.len() * concepts.len()];
    let results: Vec<(usize, usize, f64, u64)> = sanitized
        .par_iter()
        .enumerate()
        .flat_map(|(ri, (_, model))| {
            concepts
                .par_iter()
                .enumerate()
                .map(move |(ci, &cj)| (ri, ci, model, cj))
        })
        .map(|(ri, ci, model, cj)| {
            let score = score_for_metric(*model, space, oracle, cj, metric, n, seed)?;
            Ok((ri, ci, score, eval_stream(seed, cj)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (ri, ci, score, cell_seed) in results {
        values[ri * concepts.len() + ci] = g0[ci] - score;
        cells[ri * concepts.len() + ci].seed = cell_seed;
    }
    Ok(ImpactMatrix {
        metric,
        rows: sanitized.iter().map(|(id, _)| *id).collect(),
        cols: concepts.to_vec(),
        values,
        cells,
    })
}

/// Within-family versus cross-family mean impact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalityScore {
    pub within_mean: f64,
    pub cross_mean: f64,
    pub ratio: f64,
}

/// Measures how strongly impact concentrates inside the erased concept's
/// family. Diagonal cells and abnormal columns are excluded.
pub fn locality_score(matrix: &ImpactMatrix, space: &ConceptSpace) -> Result<LocalityScore> {
    let mut within = (0.0, 0usize);
    let mut cross = (0.0, 0usize);
    for (ri, &ce) in matrix.rows.iter().enumerate() {
        let fam_e = space
            .family_index_of(ce)
            .ok_or_else(|| Error::Input(format!("row concept {ce} has no family")))?;
        for (ci, &cj) in matrix.cols.iter().enumerate() {
            if ce == cj || space.record(cj)?.abnormal {
                continue;
            }
            let Some(fam_j) = space.family_index_of(cj) else {
                continue;
            };
            let v = matrix.value(ri, ci);
            if fam_j == fam_e {
                within.0 += v;
                within.1 += 1;
            } else {
                cross.0 += v;
                cross.1 += 1;
            }
        }
    }
    if within.1 == 0 {
        return Err(Error::Input(
            "locality_score: no within-family cells".into(),
        ));
    }
    let within_mean = within.0 / within.1 as f64;
    let cross_mean = cross.0 / cross.1.max(1) as f64;
    Ok(LocalityScore {
        within_mean,
        cross_mean,
        ratio: within_mean / cross_mean.max(1e-6),
    })
}

/// Relative antisymmetry `|delta - delta^T|_F / max(|delta|_F, 1e-12)` of
/// a square impact matrix. Zero for symmetric impact; unbounded above.
pub fn asymmetry_score(matrix: &ImpactMatrix) -> Result<f64> {
    if !matrix.is_square() {
        return Err(Error::Input(
            "asymmetry_score: matrix rows and columns differ".into(),
        ));
    }
    let n = matrix.rows.len();
    let mut anti = 0.0;
    let mut norm = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = matrix.value(i, j);
            norm += d * d;
            let a = d - matrix.value(j, i);
            anti += a * a;
        }
    }
    Ok(anti.sqrt() / norm.sqrt().max(1e-12))
}

/// Flags concepts with weak base capability that degrade under any
/// erasure: base DS below `ds_low` and mean column impact (self-erasure
/// cells excluded) above `impact_high`.
pub fn abnormal_concepts(
    report: &GenerationReport,
    matrix: &ImpactMatrix,
    ds_low: f64,
    impact_high: f64,
) -> Vec<ConceptId> {
    let mut flagged = Vec::new();
    for (ci, &cj) in matrix.cols.iter().enumerate() {
        let Some(row) = report.row(cj) else { continue };
        if row.dsk >= ds_low {
            continue;
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (ri, &ce) in matrix.rows.iter().enumerate() {
            if ce == cj {
                continue;
            }
            sum += matrix.value(ri, ci);
            count += 1;
        }
        if count > 0 && sum / count as f64 > impact_high {
            flagged.push(cj);
        }
    }
    flagged
}

/// Erasing and preserving success rates of a sanitized model.
///
/// `ESR-k` is the mean over the erase set of `1 - DS-k`; `PSR-k` the mean
/// over the preserve set of `DS-k`.
pub fn esr_psr<S: ConceptSampler>(
    model: &S,
    space: &ConceptSpace,
    oracle: &ClassifierOracle,
    erase_set: &[ConceptId],
    preserve_set: &[ConceptId],
    k: usize,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if erase_set.is_empty() || preserve_set.is_empty() {
        return Err(Error::Input("erase and preserve sets must be non-empty".into()));
    }
    if erase_set.iter().any(|id| preserve_set.contains(id)) {
        return Err(Error::Input("erase and preserve sets overlap".into()));
    }
    let ds = |ids: &[ConceptId]| -> Result<Vec<f64>> {
        ids.par_iter()
            .map(|&id| detection_score(model, space, oracle, id, k, n, seed))
            .collect()
    };
    let esr = ds(erase_set)?
        .iter()
        .map(|d| 1.0 - d)
        .sum::<f64>()
        / erase_set.len() as f64;
    let psr = ds(preserve_set)?.iter().sum::<f64>() / preserve_set.len() as f64;
    Ok((esr, psr))
}

#[cfg(test)]
mod tests;
