use super::*;
use crate::dom::{estimate_geometry, parse_html, Viewport};
use crate::graph::{build_layout_graph, raw_features_of};

fn ingest(doc: &Document, width: f64) -> DomTree {
    let tree = parse_html(&doc.html).unwrap();
    estimate_geometry(
        tree,
        Viewport {
            width,
            height: 2000.0,
        },
    )
}

fn assert_matches_manifest(doc: &Document, width: f64) {
    let tree = ingest(doc, width);
    let e = &doc.entry;
    assert_eq!(tree.len(), e.nodes.len(), "{}", doc.html);
    for (i, (n, m)) in tree.nodes.iter().zip(&e.nodes).enumerate() {
        assert_eq!(n.tag_name, m.tag_name, "node {i}");
        assert_eq!(n.parent_id, m.parent_id, "node {i}");
        assert_eq!(n.style, m.style, "node {i}");
        assert_eq!(n.text_length, m.text_length, "node {i}");
        assert_eq!(n.geometry, m.geometry, "node {i} of {}", e.id);
        assert_eq!(raw_features_of(n), e.raw_features[i], "node {i}");
    }
}

#[test]
fn every_profile_round_trips_through_ingest() {
    for profile in Profile::ALL {
        for seed in 0..40 {
            let spec = TemplateSpec::new(category_name((seed % 9) as usize), profile, seed);
            let doc = generate_document(&spec, "d").unwrap();
            assert_matches_manifest(&doc, spec.viewport_width);
        }
    }
}

#[test]
fn fifty_node_template_matches_manifest() {
    let mut spec = TemplateSpec::new("news", Profile::Rich, 3);
    spec.size = (4, 4);
    let doc = (0..200)
        .map(|s| {
            generate_document(
                &TemplateSpec {
                    seed: s,
                    ..spec.clone()
                },
                "d",
            )
            .unwrap()
        })
        .find(|d| d.entry.nodes.len() >= 50)
        .expect("a rich page with at least 50 nodes");
    assert_matches_manifest(&doc, 1280.0);
}

#[test]
fn narrow_viewport_still_matches() {
    for seed in 0..10 {
        let spec = TemplateSpec {
            viewport_width: 333.0,
            ..TemplateSpec::new("forum", Profile::Rich, seed)
        };
        assert_matches_manifest(&generate_document(&spec, "d").unwrap(), 333.0);
    }
}

#[test]
fn prerendered_tree_builds_the_same_graph() {
    let doc = generate_document(&TemplateSpec::new("travel", Profile::Chaotic, 5), "d").unwrap();
    let a = build_layout_graph(&ingest(&doc, 1280.0));
    let mut buf = Vec::new();
    crate::dom::write_prerendered(&doc.entry.to_tree(), &mut buf).unwrap();
    let b = build_layout_graph(&crate::dom::read_prerendered(&buf[..]).unwrap());
    assert_eq!(a.edges, b.edges);
    assert_eq!(a.raw_features, b.raw_features);
}

#[test]
fn generation_is_deterministic() {
    let spec = CorpusSpec {
        n: 60,
        ..CorpusSpec::default()
    };
    assert_eq!(
        generate_corpus(&spec).unwrap(),
        generate_corpus(&spec).unwrap()
    );
    let other = CorpusSpec {
        seed: 8,
        ..spec.clone()
    };
    assert_ne!(
        generate_corpus(&spec).unwrap(),
        generate_corpus(&other).unwrap()
    );
}

#[test]
fn profile_shapes() {
    for seed in 0..100 {
        let thin = generate_document(&TemplateSpec::new("news", Profile::Thin, seed), "t").unwrap();
        assert!(thin.entry.total_words() < 30);
        assert_eq!(thin.entry.label, 0);
        let rich = generate_document(&TemplateSpec::new("news", Profile::Rich, seed), "r").unwrap();
        assert!(rich.entry.total_words() >= 60);
        assert_eq!(rich.entry.overlapping_pairs(), 0);
        let chaotic =
            generate_document(&TemplateSpec::new("news", Profile::Chaotic, seed), "c").unwrap();
        assert!(chaotic
            .entry
            .nodes
            .iter()
            .any(|n| n.style.get("position").is_some_and(|p| p == "absolute")));
    }
}

#[test]
fn exact_counts() {
    let spec = CorpusSpec {
        n: 101,
        categories: 3,
        ..CorpusSpec::default()
    };
    let plan = spec.plan().unwrap();
    assert_eq!(plan.iter().map(|p| p.2).sum::<usize>(), 101);
    let docs = generate_corpus(&spec).unwrap();
    assert_eq!(docs.len(), 101);
    let rich = docs.iter().filter(|d| d.entry.label == 1).count();
    assert!((29..=32).contains(&rich), "{rich}");

    let skewed = CorpusSpec {
        n: 100,
        categories: 2,
        rich_share_by_category: Some(vec![0.9, 0.1]),
        ..CorpusSpec::default()
    };
    let plan = skewed.plan().unwrap();
    assert_eq!(plan[0], ("news".to_string(), Profile::Rich, 45));
    assert_eq!(plan[3], ("shopping".to_string(), Profile::Rich, 5));
}

#[test]
fn apportion_is_exact() {
    assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
    assert_eq!(apportion(7, &[0.5, 0.5]), vec![4, 3]);
    assert_eq!(apportion(5, &[0.0, 1.0]), vec![0, 5]);
}

#[test]
fn bad_specs_are_rejected() {
    let mut t = TemplateSpec::new("news", Profile::Rich, 0);
    t.size = (3, 2);
    assert!(matches!(generate_document(&t, "x"), Err(Error::BadSpec(_))));
    assert!(matches!(
        generate(&TemplateSpec::new("news", Profile::Thin, 0), 0),
        Err(Error::BadSpec(_))
    ));
    let c = CorpusSpec {
        profile_mix: vec![(Profile::Rich, -1.0)],
        ..CorpusSpec::default()
    };
    assert!(c.plan().is_err());
    assert!(parse_profile_mix("rich:0.3,thin:x").is_err());
    assert_eq!(
        parse_profile_mix("rich:1").unwrap(),
        vec![(Profile::Rich, 1.0)]
    );
}

#[test]
fn split_is_stratified_and_disjoint() {
    let docs = generate_corpus(&CorpusSpec {
        n: 300,
        categories: 3,
        ..CorpusSpec::default()
    })
    .unwrap();
    let entries: Vec<&ManifestEntry> = docs.iter().map(|d| &d.entry).collect();
    let s = split(&entries, [0.7, 0.15, 0.15], 1).unwrap();
    assert_eq!(s.len(), 300);
    let mut all: Vec<&String> = s.train.iter().chain(&s.eval).chain(&s.test).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 300);
    assert_eq!(s, split(&entries, [0.7, 0.15, 0.15], 1).unwrap());
    let rich_in = |urls: &[String]| {
        urls.iter()
            .filter(|u| entries.iter().any(|e| &e.url == *u && e.label == 1))
            .count() as f64
            / urls.len() as f64
    };
    for part in [&s.train, &s.eval, &s.test] {
        assert!((rich_in(part) - 0.3).abs() < 0.05);
    }
    assert!(matches!(
        split(&entries, [0.5, 0.5, 0.5], 1),
        Err(Error::BadRatios(_))
    ));
    assert!(matches!(
        split(&entries, [1.2, -0.1, -0.1], 1),
        Err(Error::BadRatios(_))
    ));
}

#[test]
fn heuristic_separates_profiles() {
    let docs = generate_corpus(&CorpusSpec {
        n: 300,
        ..CorpusSpec::default()
    })
    .unwrap();
    let hits = docs
        .iter()
        .filter(|d| heuristic_label(&d.entry) == d.entry.label)
        .count();
    assert!(hits as f64 / docs.len() as f64 >= 0.95, "{hits}");
}

#[test]
fn corpus_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let docs = generate_corpus(&CorpusSpec {
        n: 12,
        ..CorpusSpec::default()
    })
    .unwrap();
    let files = write_corpus(&docs, dir.path(), [0.6, 0.2, 0.2], 0, true).unwrap();
    assert_eq!(read_manifest(&files.manifest).unwrap().len(), 12);
    let labels = std::fs::read_to_string(&files.labels).unwrap();
    assert!(labels.starts_with("url\tlabel\n"));
    assert_eq!(labels.lines().count(), 13);
    assert_eq!(Splits::load(&files.splits).unwrap().len(), 12);
    let pre = crate::dom::load_prerendered(dir.path().join("prerendered/doc00000.jsonl")).unwrap();
    assert_eq!(pre, docs[0].entry.to_tree());
}
