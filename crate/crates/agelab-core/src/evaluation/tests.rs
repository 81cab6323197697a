use super::*;
use crate::concepts::{build_concept_space, SpaceSpec};

fn space() -> ConceptSpace {
    build_concept_space(&SpaceSpec::default(), 42).unwrap()
}

/// Emits the concept's exact mode mean for every sample.
struct ExactModeSampler<'a> {
    space: &'a ConceptSpace,
}

impl ConceptSampler for ExactModeSampler<'_> {
    fn data_dim(&self) -> usize {
        self.space.data_dim()
    }

    fn sample(&self, embedding: &[f64], n: usize, _seed: u64) -> Result<Vec<f64>> {
        // Identify the concept by its embedding; good enough for a stub.
        let rec = self
            .space
            .records()
            .iter()
            .find(|r| r.embedding == embedding)
            .expect("stub sampler only sees known embeddings");
        let mean = &rec.mode.as_ref().expect("mode concept").mean;
        let mut out = Vec::with_capacity(n * mean.len());
        for _ in 0..n {
            out.extend_from_slice(mean);
        }
        Ok(out)
    }
}

#[test]
fn classify_ranks_the_mode_owner_first_and_sums_to_one() {
    let space = space();
    let oracle = ClassifierOracle::from_space(&space);
    for &id in &space.regular_ids() {
        let mean = space.record(id).unwrap().mode.as_ref().unwrap().mean.clone();
        let ranked = oracle.classify(&mean);
        let total: f64 = ranked.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12, "posteriors sum to {total}");
        let group = space.detection_group(id);
        assert!(
            group.contains(&ranked[0].0),
            "top-1 at the mode mean of {id} was {:?}",
            ranked[0]
        );
    }
}

#[test]
fn classify_matches_brute_force_bayes() {
    use rand::{Rng, SeedableRng};
    let space = space();
    let oracle = ClassifierOracle::from_space(&space);
    let modes: Vec<(ConceptId, Vec<f64>, f64)> = space
        .records()
        .iter()
        .filter_map(|r| r.mode.as_ref().map(|m| (r.id, m.mean.clone(), m.std)))
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let point = [rng.random::<f64>() * 12.0 - 6.0, rng.random::<f64>() * 12.0 - 6.0];
        // Independent route: unnormalized Gaussian densities, direct sum.
        let dens: Vec<(ConceptId, f64)> = modes
            .iter()
            .map(|(id, mean, std)| {
                let d2: f64 = point
                    .iter()
                    .zip(mean)
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum();
                let var = std * std;
                let norm = (2.0 * std::f64::consts::PI * var).powi(-1);
                (*id, norm * (-d2 / (2.0 * var)).exp())
            })
            .collect();
        let total: f64 = dens.iter().map(|(_, d)| d).sum();
        let ranked = oracle.classify(&point);
        for (id, p) in &ranked {
            let brute = dens.iter().find(|(i, _)| i == id).unwrap().1 / total;
            assert!(
                (p - brute).abs() < 1e-10,
                "posterior mismatch for {id}: {p} vs {brute}"
            );
        }
    }
}

#[test]
fn synonyms_are_separated_only_by_the_id_tie_break() {
    let space = space();
    let oracle = ClassifierOracle::from_space(&space);
    for syn in space.synonym_ids() {
        let referent = space.record(syn).unwrap().synonym_of.unwrap();
        let mean = space.record(syn).unwrap().mode.as_ref().unwrap().mean.clone();
        let ranked = oracle.classify(&mean);
        let pos_ref = ranked.iter().position(|(id, _)| *id == referent).unwrap();
        let pos_syn = ranked.iter().position(|(id, _)| *id == syn).unwrap();
        assert_eq!(ranked[pos_ref].1, ranked[pos_syn].1, "identical posteriors");
        assert!(pos_ref < pos_syn, "referent ranks first by ascending id");
    }
}

#[test]
fn exact_mode_sampler_has_perfect_ds1_and_posterior_cs1() {
    let space = space();
    let oracle = ClassifierOracle::from_space(&space);
    let sampler = ExactModeSampler { space: &space };
    // A concept without a synonym: its posterior at its own mean wins alone.
    let id = ConceptId(1);
    let scores = concept_scores(&sampler, &space, &oracle, id, &[1, 3], 50, 0).unwrap();
    assert_eq!(scores[&1].0, 1.0, "DS-1 of a perfect sampler");
    let mean = space.record(id).unwrap().mode.as_ref().unwrap().mean.clone();
    let posterior = oracle.posterior_of(&mean, id).unwrap();
    assert!((scores[&1].1 - posterior).abs() < 1e-12, "CS-1 equals the posterior");
    assert!(scores[&1].0 <= scores[&3].0, "DS-1 <= DS-3");
    assert!(scores[&1].1 <= scores[&1].0, "CS-1 <= DS-1");
    assert!(scores[&3].1 <= scores[&3].0, "CS-3 <= DS-3");
}

#[test]
fn k_out_of_range_is_rejected() {
    let space = space();
    let oracle = ClassifierOracle::from_space(&space);
    let sampler = ExactModeSampler { space: &space };
    assert!(detection_score(&sampler, &space, &oracle, ConceptId(0), 0, 10, 0).is_err());
    assert!(detection_score(
        &sampler,
        &space,
        &oracle,
        ConceptId(0),
        oracle.class_count(),
        10,
        0
    )
    .is_err());
}

#[test]
fn identity_sanitized_map_gives_a_zero_matrix() {
    let space = space();
    let oracle = ClassifierOracle::from_space(&space);
    let sampler = ExactModeSampler { space: &space };
    let concepts = space.regular_ids();
    let rows: Vec<(ConceptId, &ExactModeSampler)> = space
        .anchors()
        .into_iter()
        .map(|a| (a, &sampler))
        .collect();
    let m = impact_matrix(
        &sampler,
        &rows,
        &space,
        &oracle,
        &concepts,
        MetricKind::Ds(1),
        20,
        5,
    )
    .unwrap();
    assert!(m.values.iter().all(|&v| v == 0.0));
    assert_eq!(m.cells.len(), m.values.len());
    assert!(m.cells.iter().all(|c| c.n == 20));
}

fn hand_matrix(space: &ConceptSpace, within: f64, cross: f64) -> ImpactMatrix {
    let rows = space.anchors();
    let cols = space.regular_ids();
    let mut values = Vec::new();
    for &ce in &rows {
        let fam_e = space.family_index_of(ce).unwrap();
        for &cj in &cols {
            let v = if ce == cj {
                0.9
            } else if space.family_index_of(cj) == Some(fam_e) {
                within
            } else {
                cross
            };
            values.push(v);
        }
    }
    let cells = vec![CellMeta { n: 1, seed: 0 }; values.len()];
    ImpactMatrix {
        metric: MetricKind::Ds(1),
        rows,
        cols,
        values,
        cells,
    }
}

#[test]
fn locality_score_arithmetic() {
    let space = space();
    let m = hand_matrix(&space, 0.5, 0.1);
    let score = locality_score(&m, &space).unwrap();
    assert!((score.within_mean - 0.5).abs() < 1e-12);
    assert!((score.cross_mean - 0.1).abs() < 1e-12);
    assert!((score.ratio - 5.0).abs() < 1e-9);

    let zero = hand_matrix(&space, 0.0, 0.0);
    let zero = ImpactMatrix {
        values: vec![0.0; zero.values.len()],
        ..zero
    };
    let score = locality_score(&zero, &space).unwrap();
    assert_eq!(score.ratio, 0.0);
}

#[test]
fn asymmetry_score_examples() {
    let space = space();
    let anchors = space.anchors();
    let sym = ImpactMatrix {
        metric: MetricKind::Ds(1),
        rows: vec![anchors[0], anchors[1]],
        cols: vec![anchors[0], anchors[1]],
        values: vec![0.3, 0.7, 0.7, 0.1],
        cells: vec![CellMeta { n: 1, seed: 0 }; 4],
    };
    assert_eq!(asymmetry_score(&sym).unwrap(), 0.0);

    let tri = ImpactMatrix {
        values: vec![0.0, 1.0, 0.0, 0.0],
        ..sym.clone()
    };
    let score = asymmetry_score(&tri).unwrap();
    assert!((score - std::f64::consts::SQRT_2).abs() < 1e-12);

    let rect = ImpactMatrix {
        cols: vec![anchors[0], anchors[1], anchors[2]],
        values: vec![0.0; 6],
        cells: vec![CellMeta { n: 1, seed: 0 }; 6],
        ..sym
    };
    assert!(asymmetry_score(&rect).is_err());
}

#[test]
fn abnormal_flagging_edges() {
    let space = space();
    let report = GenerationReport {
        label: "base".into(),
        n: 10,
        seed: 0,
        k_top: 3,
        rows: space
            .regular_ids()
            .iter()
            .map(|&id| {
                let rec = space.record(id).unwrap();
                ReportRow {
                    id,
                    name: rec.name.clone(),
                    family: rec.family.clone(),
                    ds1: 1.0,
                    dsk: 1.0,
                    cs1: 1.0,
                    csk: 1.0,
                }
            })
            .collect(),
    };
    let zero = hand_matrix(&space, 0.0, 0.0);
    // All-strong base and a zero matrix: nothing flagged.
    assert!(abnormal_concepts(&report, &zero, 0.8, 0.1).is_empty());
    // Vacuous thresholds flag nothing regardless of data.
    let heavy = hand_matrix(&space, 0.9, 0.9);
    assert!(abnormal_concepts(&report, &heavy, 0.0, f64::INFINITY).is_empty());
}

#[test]
fn esr_psr_validation_and_perfect_eraser() {
    let space = space();
    let oracle = ClassifierOracle::from_space(&space);

    /// DS = 1 on preserve-set concepts, 0 on erased ones (constant junk
    /// samples far from every mode).
    struct PerfectEraser<'a> {
        space: &'a ConceptSpace,
        erased: Vec<ConceptId>,
    }
    impl ConceptSampler for PerfectEraser<'_> {
        fn data_dim(&self) -> usize {
            self.space.data_dim()
        }
        fn sample(&self, embedding: &[f64], n: usize, _seed: u64) -> Result<Vec<f64>> {
            let rec = self
                .space
                .records()
                .iter()
                .find(|r| r.embedding == embedding)
                .unwrap();
            let out = if self.erased.contains(&rec.id) {
                vec![1e6; n * 2]
            } else {
                let mean = &rec.mode.as_ref().unwrap().mean;
                let mut v = Vec::new();
                for _ in 0..n {
                    v.extend_from_slice(mean);
                }
                v
            };
            Ok(out)
        }
    }

    let erase = space.anchors();
    let preserve: Vec<ConceptId> = space
        .regular_ids()
        .into_iter()
        .filter(|id| !erase.contains(id))
        .collect();
    let eraser = PerfectEraser {
        space: &space,
        erased: erase.clone(),
    };
    let (esr, psr) = esr_psr(&eraser, &space, &oracle, &erase, &preserve, 1, 20, 3).unwrap();
    assert_eq!(esr, 1.0);
    assert!(psr > 0.99);

    let overlapping = esr_psr(&eraser, &space, &oracle, &erase, &erase, 1, 20, 3);
    assert!(matches!(overlapping, Err(Error::Input(_))));
    let empty: Vec<ConceptId> = Vec::new();
    assert!(esr_psr(&eraser, &space, &oracle, &empty, &preserve, 1, 20, 3).is_err());
}

#[test]
fn metric_kind_round_trips_through_display() {
    for m in [MetricKind::Ds(1), MetricKind::Ds(3), MetricKind::Cs(5)] {
        let s = m.to_string();
        assert_eq!(s.parse::<MetricKind>().unwrap(), m);
    }
    assert!("DX-1".parse::<MetricKind>().is_err());
}
