use std::fs;
use std::path::PathBuf;

use abseg::corpus::{
    cohens_kappa, parse_corpus, remap_labels, serialize_corpus, write_corpus, LabelMapping,
    LabelSchema,
};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

#[test]
fn canonical_files_round_trip_byte_identically() {
    for (name, schema) in [
        ("five.txt", LabelSchema::five()),
        ("three.txt", LabelSchema::three()),
        ("unlabeled.txt", LabelSchema::three()),
    ] {
        let original = fs::read_to_string(data(name)).unwrap();
        let corpus = parse_corpus(data(name), &schema).unwrap();
        assert_eq!(serialize_corpus(&corpus), original, "{name}");

        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join(name);
        write_corpus(&corpus, &out).unwrap();
        assert_eq!(fs::read(&out).unwrap(), original.as_bytes(), "{name}");
    }
}

#[test]
fn remap_preserves_counts_and_maps_each_label() {
    let five = parse_corpus(data("five.txt"), &LabelSchema::five()).unwrap();
    let three = remap_labels(&five, &LabelMapping::five_to_three()).unwrap();
    assert_eq!(three.schema(), &LabelSchema::three());
    assert_eq!(three.len(), five.len());
    assert_eq!(three.sentence_count(), five.sentence_count());
    let expected = |label: &str| match label {
        "BACKGROUND" | "OBJECTIVE" => "BACKGROUND",
        "METHOD" => "TECHNIQUE",
        "RESULT" | "CONCLUSION" => "OBSERVATION",
        other => panic!("unexpected label {other}"),
    };
    for (a, b) in five.sentences().zip(three.sentences()) {
        assert_eq!(a.text(), b.text());
        assert_eq!(expected(a.label().unwrap()), b.label().unwrap());
    }
    let counts = three.label_counts();
    let five_counts = five.label_counts();
    assert_eq!(
        counts,
        [
            five_counts[0] + five_counts[1],
            five_counts[2],
            five_counts[3] + five_counts[4]
        ]
    );
}

#[test]
fn remap_rejects_the_wrong_source_schema() {
    let three = parse_corpus(data("three.txt"), &LabelSchema::three()).unwrap();
    assert!(remap_labels(&three, &LabelMapping::five_to_three()).is_err());
}

#[test]
fn unlabeled_file_has_no_labels() {
    let corpus = parse_corpus(data("unlabeled.txt"), &LabelSchema::three()).unwrap();
    assert!(!corpus.has_labels());
}

/// Chance-corrected agreement computed straight from the definition.
fn kappa_oracle(a: &[&str], b: &[&str]) -> f64 {
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut labels: Vec<&str> = a.iter().chain(b).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let p_e: f64 = labels
        .iter()
        .map(|l| {
            let pa = a.iter().filter(|x| *x == l).count() as f64 / n;
            let pb = b.iter().filter(|x| *x == l).count() as f64 / n;
            pa * pb
        })
        .sum();
    (p_o - p_e) / (1.0 - p_e)
}

#[test]
fn kappa_matches_hand_examples() {
    let a = ["B", "B", "T", "O"];
    let b = ["B", "T", "T", "O"];
    // p_o = 3/4, p_e = (2*1 + 1*2 + 1*1) / 16 = 5/16
    let hand = (0.75 - 0.3125) / (1.0 - 0.3125);
    let k = cohens_kappa(&a, &b).unwrap();
    assert!((k - 0.6364).abs() < 1e-4);
    assert!((k - hand).abs() < 1e-12);
    assert!((k - kappa_oracle(&a, &b)).abs() < 1e-12);
    assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    assert!(cohens_kappa(&["B", "T"], &["T", "B"]).unwrap() < 0.0);
}

#[test]
fn kappa_degenerate_and_invalid_inputs() {
    // both annotators use one label: p_e = 1
    assert_eq!(cohens_kappa(&["B", "B"], &["B", "B"]).unwrap(), 1.0);
    assert!(cohens_kappa(&["B"], &["B", "T"]).is_err());
    assert!(cohens_kappa::<&str>(&[], &[]).is_err());
}
