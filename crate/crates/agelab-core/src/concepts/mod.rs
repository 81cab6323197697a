//! Synthetic concept space: ground-truth data modes, frozen embeddings,
//! vocabulary restriction, and concept mixtures.
//!
//! The default layout mirrors a small family-structured label set: five
//! families of five concepts each, one synonym per family anchor, one
//! deliberately under-trained (abnormal) concept, and a null concept that
//! has an embedding but no data mode. Embeddings are unit vectors drawn
//! around a random family center so that embedding similarity tracks
//! semantic (family) structure; synonyms sit very close to their referent
//! in embedding space while sharing its data mode exactly.

mod io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_space, save_space, space_from_text, space_to_text};

const FAMILY_NAMES: [&str; 10] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliett",
];

/// Index of a concept record inside its [`ConceptSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub usize);

impl std::fmt::Display for ConceptId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ground-truth generating distribution of a concept: an isotropic
/// Gaussian in data space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptMode {
    pub mean: Vec<f64>,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptRecord {
    pub id: ConceptId,
    pub name: String,
    pub family: String,
    /// `None` only for the null concept.
    pub mode: Option<ConceptMode>,
    pub embedding: Vec<f64>,
    pub synonym_of: Option<ConceptId>,
    pub abnormal: bool,
}

impl ConceptRecord {
    pub fn is_synonym(&self) -> bool {
        self.synonym_of.is_some()
    }
}

/// Construction parameters for [`build_concept_space`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSpec {
    pub families: usize,
    pub members_per_family: usize,
    pub embed_dim: usize,
    pub data_dim: usize,
    /// Isotropic standard deviation of every concept mode.
    pub mode_std: f64,
    /// Distance of family centers from the data-space origin.
    pub family_radius: f64,
    /// Distance of member modes from their family center.
    pub member_radius: f64,
    /// Embedding noise scale for family members around the family center.
    pub member_embed_noise: f64,
    /// Embedding noise scale for a synonym around its referent.
    pub synonym_embed_noise: f64,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec {
            families: 5,
            members_per_family: 5,
            embed_dim: 16,
            data_dim: 2,
            mode_std: 0.16,
            family_radius: 4.0,
            member_radius: 1.3,
            member_embed_noise: 0.25,
            synonym_embed_noise: 0.08,
        }
    }
}

impl SpaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.families < 2 || self.members_per_family < 2 {
            return Err(Error::Parameter(format!(
                "degenerate space layout: {} families x {} members (need at least 2 x 2)",
                self.families, self.members_per_family
            )));
        }
        if self.embed_dim < 2 {
            return Err(Error::Parameter("embed_dim must be at least 2".into()));
        }
        if self.data_dim < 2 {
            return Err(Error::Parameter("data_dim must be at least 2".into()));
        }
        for (name, v) in [
            ("mode_std", self.mode_std),
            ("family_radius", self.family_radius),
            ("member_radius", self.member_radius),
            ("member_embed_noise", self.member_embed_noise),
            ("synonym_embed_noise", self.synonym_embed_noise),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn family_name(&self, f: usize) -> String {
        if f < FAMILY_NAMES.len() {
            FAMILY_NAMES[f].to_string()
        } else {
            format!("family{f}")
        }
    }
}

/// Registry of concepts plus the frozen embedding table.
///
/// Immutable after construction; freely shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSpace {
    records: Vec<ConceptRecord>,
    families: Vec<String>,
    embed_dim: usize,
    data_dim: usize,
    null_id: ConceptId,
    seed: u64,
}

impl ConceptSpace {
    pub fn records(&self) -> &[ConceptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn null_id(&self) -> ConceptId {
        self.null_id
    }

    pub fn family_names(&self) -> &[String] {
        &self.families
    }

    pub fn record(&self, id: ConceptId) -> Result<&ConceptRecord> {
        self.records
            .get(id.0)
            .ok_or_else(|| Error::Lookup(format!("unknown concept id {id}")))
    }

    pub fn by_name(&self, name: &str) -> Result<&ConceptRecord> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Lookup(format!("unknown concept name `{name}`")))
    }

    /// The frozen unit-norm embedding tau(c).
    pub fn embedding_of(&self, id: ConceptId) -> Result<&[f64]> {
        Ok(&self.record(id)?.embedding)
    }

    /// Anchor (first member) of every family, in family order.
    pub fn anchors(&self) -> Vec<ConceptId> {
        self.families
            .iter()
            .map(|fam| {
                self.records
                    .iter()
                    .find(|r| &r.family == fam && !r.is_synonym() && r.mode.is_some())
                    .expect("every family has members")
                    .id
            })
            .collect()
    }

    /// Concepts that carry their own mode and are not synonyms.
    pub fn regular_ids(&self) -> Vec<ConceptId> {
        self.records
            .iter()
            .filter(|r| r.mode.is_some() && !r.is_synonym())
            .map(|r| r.id)
            .collect()
    }

    /// All records with a mode (regular concepts and synonyms).
    pub fn mode_ids(&self) -> Vec<ConceptId> {
        self.records
            .iter()
            .filter(|r| r.mode.is_some())
            .map(|r| r.id)
            .collect()
    }

    pub fn synonym_ids(&self) -> Vec<ConceptId> {
        self.records
            .iter()
            .filter(|r| r.is_synonym())
            .map(|r| r.id)
            .collect()
    }

    /// The synonym record pointing at `id`, if one exists.
    pub fn synonym_for(&self, id: ConceptId) -> Option<ConceptId> {
        self.records
            .iter()
            .find(|r| r.synonym_of == Some(id))
            .map(|r| r.id)
    }

    /// Concepts that are physically indistinguishable from `id`: the
    /// concept itself, its referent if it is a synonym, and its synonym if
    /// it has one.
    pub fn detection_group(&self, id: ConceptId) -> Vec<ConceptId> {
        let mut group = vec![id];
        if let Ok(rec) = self.record(id) {
            if let Some(referent) = rec.synonym_of {
                group.push(referent);
            }
        }
        if let Some(syn) = self.synonym_for(id) {
            group.push(syn);
        }
        group.sort();
        group.dedup();
        group
    }

    pub fn family_index_of(&self, id: ConceptId) -> Option<usize> {
        let rec = self.records.get(id.0)?;
        if rec.id == self.null_id {
            return None;
        }
        self.families.iter().position(|f| f == &rec.family)
    }

    /// Mean within-family and cross-family pairwise embedding cosines
    /// over all non-null records.
    pub fn family_cosine_stats(&self) -> (f64, f64) {
        let mut within = (0.0, 0usize);
        let mut cross = (0.0, 0usize);
        let recs: Vec<&ConceptRecord> = self
            .records
            .iter()
            .filter(|r| r.id != self.null_id)
            .collect();
        for i in 0..recs.len() {
            for j in (i + 1)..recs.len() {
                let cos = dot(&recs[i].embedding, &recs[j].embedding);
                if recs[i].family == recs[j].family {
                    within.0 += cos;
                    within.1 += 1;
                } else {
                    cross.0 += cos;
                    cross.1 += 1;
                }
            }
        }
        (within.0 / within.1 as f64, cross.0 / cross.1 as f64)
    }

    /// Draws `n` points from the concept's ground-truth Gaussian mode,
    /// row-major `n x data_dim`.
    pub fn sample_data(&self, id: ConceptId, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let rec = self.record(id)?;
        let mode = rec.mode.as_ref().ok_or_else(|| {
            Error::Usage(format!("concept `{}` has no data mode to sample", rec.name))
        })?;
        let mut out = Vec::with_capacity(n * self.data_dim);
        for _ in 0..n {
            for d in 0..self.data_dim {
                let z: f64 = StandardNormal.sample(rng);
                out.push(mode.mean[d] + mode.std * z);
            }
        }
        Ok(out)
    }

    /// Draws `n` points from the union of all regular concept modes,
    /// picking a concept uniformly per point. Training data for the null
    /// concept.
    pub fn sample_union_of_modes(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let regular = self.regular_ids();
        let mut out = Vec::with_capacity(n * self.data_dim);
        for _ in 0..n {
            let pick = regular[rng.random_range(0..regular.len())];
            out.extend_from_slice(&self.sample_data(pick, 1, rng)?);
        }
        Ok(out)
    }

    fn from_parts(
        records: Vec<ConceptRecord>,
        families: Vec<String>,
        embed_dim: usize,
        data_dim: usize,
        null_id: ConceptId,
        seed: u64,
    ) -> Result<Self> {
        let space = ConceptSpace {
            records,
            families,
            embed_dim,
            data_dim,
            null_id,
            seed,
        };
        let (within, cross) = space.family_cosine_stats();
        if !(within > cross) {
            return Err(Error::Configuration(format!(
                "embedding construction failed the family-correlation invariant: \
                 within-family mean cosine {within:.4} <= cross-family {cross:.4}"
            )));
        }
        Ok(space)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&mut v);
    v
}

fn noisy_unit(rng: &mut ChaCha8Rng, center: &[f64], noise: f64) -> Vec<f64> {
    let mut v: Vec<f64> = center
        .iter()
        .map(|&c| {
            let z: f64 = StandardNormal.sample(rng);
            c + noise * z
        })
        .collect();
    normalize(&mut v);
    v
}

/// Builds the synthetic concept space for a layout and seed.
///
/// Data modes are placed deterministically: family centers sit on a ring
/// around the origin and member modes on a smaller ring around their
/// family center, each ring rotated by a seeded offset. Embeddings are
/// family-correlated unit vectors. The returned space always satisfies
/// the within-family > cross-family mean-cosine invariant; construction
/// fails otherwise.
pub fn build_concept_space(spec: &SpaceSpec, seed: u64) -> Result<ConceptSpace> {
    use rand::Rng as _;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f_count = spec.families;
    let m_count = spec.members_per_family;
    let tau = std::f64::consts::TAU;

    let global_rot: f64 = rng.random::<f64>() * tau;
    let family_rots: Vec<f64> = (0..f_count).map(|_| rng.random::<f64>() * tau).collect();
    let embed_centers: Vec<Vec<f64>> = (0..f_count)
        .map(|_| random_unit(&mut rng, spec.embed_dim))
        .collect();

    let abnormal_family = 2.min(f_count - 1);
    let abnormal_member = 3.min(m_count - 1);

    let mut records = Vec::new();
    let mut families = Vec::new();
    for f in 0..f_count {
        let fam_name = spec.family_name(f);
        families.push(fam_name.clone());
        let theta = tau * f as f64 / f_count as f64 + global_rot;
        let center = [
            spec.family_radius * theta.cos(),
            spec.family_radius * theta.sin(),
        ];
        for m in 0..m_count {
            let phi = tau * m as f64 / m_count as f64 + family_rots[f];
            let mut mean = vec![0.0; spec.data_dim];
            mean[0] = center[0] + spec.member_radius * phi.cos();
            mean[1] = center[1] + spec.member_radius * phi.sin();
            records.push(ConceptRecord {
                id: ConceptId(records.len()),
                name: format!("{fam_name}{m}"),
                family: fam_name.clone(),
                mode: Some(ConceptMode {
                    mean,
                    std: spec.mode_std,
                }),
                embedding: noisy_unit(&mut rng, &embed_centers[f], spec.member_embed_noise),
                synonym_of: None,
                abnormal: f == abnormal_family && m == abnormal_member,
            });
        }
    }

    // One synonym per family anchor: identical mode, distinct embedding
    // drawn tightly around the anchor's.
    for f in 0..f_count {
        let anchor = &records[f * m_count];
        let embedding = {
            let anchor_emb = anchor.embedding.clone();
            noisy_unit(&mut rng, &anchor_emb, spec.synonym_embed_noise)
        };
        let anchor = &records[f * m_count];
        records.push(ConceptRecord {
            id: ConceptId(records.len()),
            name: format!("{}_syn", anchor.name),
            family: anchor.family.clone(),
            mode: anchor.mode.clone(),
            embedding,
            synonym_of: Some(anchor.id),
            abnormal: false,
        });
    }

    let null_id = ConceptId(records.len());
    records.push(ConceptRecord {
        id: null_id,
        name: "null".into(),
        family: String::new(),
        mode: None,
        embedding: random_unit(&mut rng, spec.embed_dim),
        synonym_of: None,
        abnormal: false,
    });

    ConceptSpace::from_parts(
        records,
        families,
        spec.embed_dim,
        spec.data_dim,
        null_id,
        seed,
    )
}

/// The `k` embedding-nearest concepts to a source concept.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabularySubset {
    source: ConceptId,
    ids: Vec<ConceptId>,
    embeddings: Vec<f64>,
    embed_dim: usize,
}

impl VocabularySubset {
    pub fn source(&self) -> ConceptId {
        self.source
    }

    pub fn k(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[ConceptId] {
        &self.ids
    }

    /// Sliced embedding matrix, `k x embed_dim` row-major.
    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }
}

/// Restricts the concept vocabulary to the `k` nearest concepts to `ce`
/// by embedding cosine, excluding `ce` itself. Ordering is deterministic:
/// similarity descending, id ascending on ties.
pub fn restrict_vocabulary(space: &ConceptSpace, ce: ConceptId, k: usize) -> Result<VocabularySubset> {
    let source = space.record(ce)?;
    let max_k = space.len() - 1;
    if k < 1 || k > max_k {
        return Err(Error::Parameter(format!(
            "vocabulary size k={k} out of range 1..={max_k}"
        )));
    }
    let mut scored: Vec<(ConceptId, f64)> = space
        .records()
        .iter()
        .filter(|r| r.id != ce)
        .map(|r| (r.id, dot(&r.embedding, &source.embedding)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    let mut embeddings = Vec::with_capacity(k * space.embed_dim());
    for (id, _) in &scored {
        embeddings.extend_from_slice(space.embedding_of(*id)?);
    }
    Ok(VocabularySubset {
        source: ce,
        ids: scored.into_iter().map(|(id, _)| id).collect(),
        embeddings,
        embed_dim: space.embed_dim(),
    })
}

/// Weighted mixture of subset embeddings: `sum_i weights_i * tau(c_i)`.
pub fn mixture_embedding(weights: &[f64], subset: &VocabularySubset) -> Result<Vec<f64>> {
    if weights.len() != subset.k() {
        return Err(Error::Input(format!(
            "mixture_embedding: {} weights for a subset of {}",
            weights.len(),
            subset.k()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "mixture_embedding: weights sum to {total}, expected 1"
        )));
    }
    let d = subset.embed_dim();
    let mut out = vec![0.0; d];
    for (i, &w) in weights.iter().enumerate() {
        let row = &subset.embeddings[i * d..(i + 1) * d];
        for (o, &e) in out.iter_mut().zip(row) {
            *o += w * e;
        }
    }
    Ok(out)
}

/// Linear interpolation `(1 - alpha) tau(c1) + alpha tau(c2)`.
pub fn interpolate_concepts(
    space: &ConceptSpace,
    c1: ConceptId,
    c2: ConceptId,
    alpha: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!(
            "interpolation weight {alpha} outside [0, 1]"
        )));
    }
    let e1 = space.embedding_of(c1)?;
    let e2 = space.embedding_of(c2)?;
    Ok(e1
        .iter()
        .zip(e2)
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_space() -> ConceptSpace {
        build_concept_space(&SpaceSpec::default(), 42).unwrap()
    }

    #[test]
    fn default_layout_has_31_records() {
        let space = default_space();
        assert_eq!(space.len(), 31);
        assert_eq!(space.regular_ids().len(), 25);
        assert_eq!(space.synonym_ids().len(), 5);
        assert_eq!(space.anchors().len(), 5);
        assert_eq!(space.record(space.null_id()).unwrap().mode, None);
        assert_eq!(
            space.records().iter().filter(|r| r.abnormal).count(),
            1,
            "exactly one abnormal concept"
        );
    }

    #[test]
    fn same_seed_reproduces_identical_space() {
        let a = default_space();
        let b = default_space();
        assert_eq!(a, b);
        let c = build_concept_space(&SpaceSpec::default(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_layouts_are_rejected() {
        let mut spec = SpaceSpec::default();
        spec.families = 1;
        assert!(matches!(
            build_concept_space(&spec, 1),
            Err(Error::Parameter(_))
        ));
        let mut spec = SpaceSpec::default();
        spec.members_per_family = 1;
        assert!(matches!(
            build_concept_space(&spec, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn family_cosine_margin_on_default_seed() {
        let space = default_space();
        let (within, cross) = space.family_cosine_stats();
        assert!(
            within >= cross + 0.2,
            "within {within:.4}, cross {cross:.4}"
        );
    }

    #[test]
    fn embeddings_are_unit_norm_and_synonyms_distinct() {
        let space = default_space();
        for rec in space.records() {
            let norm = dot(&rec.embedding, &rec.embedding).sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "{} has norm {norm}", rec.name);
        }
        for syn in space.synonym_ids() {
            let referent = space.record(syn).unwrap().synonym_of.unwrap();
            assert_ne!(
                space.embedding_of(syn).unwrap(),
                space.embedding_of(referent).unwrap()
            );
            let cos = dot(
                space.embedding_of(syn).unwrap(),
                space.embedding_of(referent).unwrap(),
            );
            assert!(cos >= 0.9, "synonym cosine {cos}");
            assert_eq!(
                space.record(syn).unwrap().mode,
                space.record(referent).unwrap().mode,
                "synonyms share their referent's mode exactly"
            );
        }
    }

    #[test]
    fn unknown_ids_are_lookup_errors() {
        let space = default_space();
        assert!(matches!(
            space.embedding_of(ConceptId(999)),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn vocabulary_is_nearest_k_and_prefix_consistent() {
        let space = default_space();
        let ce = space.anchors()[0];
        let full = restrict_vocabulary(&space, ce, space.len() - 1).unwrap();
        assert_eq!(full.k(), space.len() - 1);
        assert!(!full.ids().contains(&ce));

        // Brute-force oracle: sort every other concept by cosine.
        let src = space.embedding_of(ce).unwrap().to_vec();
        let mut expected: Vec<(ConceptId, f64)> = space
            .records()
            .iter()
            .filter(|r| r.id != ce)
            .map(|r| (r.id, dot(&r.embedding, &src)))
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let expected_ids: Vec<ConceptId> = expected.iter().map(|(id, _)| *id).collect();
        assert_eq!(full.ids(), expected_ids.as_slice());

        // The synonym is the single nearest neighbor of its anchor.
        assert_eq!(full.ids()[0], space.synonym_for(ce).unwrap());
        for k in 1..space.len() - 1 {
            let sub = restrict_vocabulary(&space, ce, k).unwrap();
            assert_eq!(sub.ids(), &full.ids()[..k], "prefix property at k={k}");
        }

        assert!(matches!(
            restrict_vocabulary(&space, ce, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            restrict_vocabulary(&space, ce, space.len()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn mixture_embedding_matches_direct_dot_product() {
        let space = default_space();
        let subset = restrict_vocabulary(&space, space.anchors()[1], 6).unwrap();

        // One-hot weights reproduce that concept's embedding exactly.
        let mut onehot = vec![0.0; 6];
        onehot[3] = 1.0;
        let mixed = mixture_embedding(&onehot, &subset).unwrap();
        assert_eq!(mixed, space.embedding_of(subset.ids()[3]).unwrap());

        // Random-ish weights against an independent accumulation.
        let weights = [0.31, 0.07, 0.12, 0.2, 0.05, 0.25];
        let mixed = mixture_embedding(&weights, &subset).unwrap();
        let d = space.embed_dim();
        for col in 0..d {
            let mut expected = 0.0;
            for (i, &w) in weights.iter().enumerate() {
                expected += w * subset.embeddings()[i * d + col];
            }
            assert!((mixed[col] - expected).abs() < 1e-12);
        }

        let bad = mixture_embedding(&[0.5, 0.5], &subset);
        assert!(matches!(bad, Err(Error::Input(_))));
        let unnormalized = mixture_embedding(&[0.5; 6], &subset);
        assert!(matches!(unnormalized, Err(Error::Input(_))));
    }

    #[test]
    fn uniform_mixture_of_identical_embeddings_is_that_embedding() {
        let space = default_space();
        let emb = space.embedding_of(ConceptId(0)).unwrap().to_vec();
        let d = space.embed_dim();
        let mut table = emb.clone();
        table.extend_from_slice(&emb);
        let subset = VocabularySubset {
            source: ConceptId(0),
            ids: vec![ConceptId(1), ConceptId(2)],
            embeddings: table,
            embed_dim: d,
        };
        let mixed = mixture_embedding(&[0.5, 0.5], &subset).unwrap();
        for (m, e) in mixed.iter().zip(&emb) {
            assert!((m - e).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_endpoints_and_degenerate_pair() {
        let space = default_space();
        let (c1, c2) = (ConceptId(0), ConceptId(7));
        let e1 = space.embedding_of(c1).unwrap().to_vec();
        let e2 = space.embedding_of(c2).unwrap().to_vec();
        assert_eq!(interpolate_concepts(&space, c1, c2, 0.0).unwrap(), e1);
        assert_eq!(interpolate_concepts(&space, c1, c2, 1.0).unwrap(), e2);
        assert_eq!(interpolate_concepts(&space, c1, c1, 0.5).unwrap(), e1);
        assert!(matches!(
            interpolate_concepts(&space, c1, c2, 1.5),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn sampling_behaviour() {
        let space = default_space();
        let id = ConceptId(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(space.sample_data(id, 0, &mut rng).unwrap().is_empty());

        // Law-of-large-numbers bound at a fixed seed: the mean of 1e4
        // draws sits within 5 std errors of the mode mean.
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = space.sample_data(id, n, &mut rng).unwrap();
        let mode = space.record(id).unwrap().mode.clone().unwrap();
        for d in 0..space.data_dim() {
            let mean: f64 = (0..n).map(|i| pts[i * 2 + d]).sum::<f64>() / n as f64;
            let bound = 5.0 * mode.std / (n as f64).sqrt();
            assert!(
                (mean - mode.mean[d]).abs() < bound,
                "dim {d}: {mean} vs {} (bound {bound})",
                mode.mean[d]
            );
        }

        let mut rng_a = ChaCha8Rng::seed_from_u64(1);
        let mut rng_b = ChaCha8Rng::seed_from_u64(2);
        assert_ne!(
            space.sample_data(id, 8, &mut rng_a).unwrap(),
            space.sample_data(id, 8, &mut rng_b).unwrap()
        );

        assert!(matches!(
            space.sample_data(space.null_id(), 1, &mut rng_a),
            Err(Error::Usage(_))
        ));
    }
}
