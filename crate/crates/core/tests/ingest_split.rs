use proptest::prelude::*;
use veritas_core::ingest::*;

fn dataset(labels: &[bool]) -> Dataset {
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &fake)| Record::new(format!("doc {i}"), if fake { Label::Fake } else { Label::Real }).unwrap())
        .collect();
    Dataset::new(records, "prop")
}

fn spec(seed: u64, stratified: bool) -> SplitSpec {
    SplitSpec {
        seed,
        stratified,
        ..SplitSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn split_is_a_partition(labels in prop::collection::vec(any::<bool>(), 4..120), seed in any::<u64>(), stratified in any::<bool>()) {
        prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
        let d = dataset(&labels);
        let s = split(&d, &spec(seed, stratified)).unwrap();
        let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
        prop_assert_eq!(s.train.len(), TrainFraction::default().round_of(d.len()));
        for (k, &i) in s.train_indices.iter().enumerate() {
            prop_assert_eq!(&s.train.records[k], &d.records[i]);
        }
    }

    #[test]
    fn split_is_deterministic(labels in prop::collection::vec(any::<bool>(), 4..60), seed in any::<u64>()) {
        prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
        let d = dataset(&labels);
        prop_assert_eq!(split(&d, &spec(seed, true)).unwrap(), split(&d, &spec(seed, true)).unwrap());
    }

    #[test]
    fn stratified_train_counts_stay_within_one_of_the_ideal(labels in prop::collection::vec(any::<bool>(), 4..200), seed in any::<u64>()) {
        prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
        let d = dataset(&labels);
        let s = split(&d, &spec(seed, true)).unwrap();
        let total = class_counts(&d);
        let train = class_counts(&s.train);
        for l in Label::ALL {
            // |train - 7n/10| <= 1, in integers.
            let gap = (10 * train[&l]).abs_diff(7 * total[&l]);
            prop_assert!(gap <= 10, "{l}: {} of {}", train[&l], total[&l]);
        }
    }
}

#[test]
fn different_seeds_give_different_splits() {
    let labels: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
    let d = dataset(&labels);
    let a = split(&d, &spec(1, true)).unwrap();
    let b = split(&d, &spec(2, true)).unwrap();
    assert_ne!(a.train_indices, b.train_indices);
}

#[test]
fn five_thousand_records_split_exactly() {
    let labels: Vec<bool> = (0..5000).map(|i| i % 7 < 3).collect();
    for stratified in [true, false] {
        let s = split(&dataset(&labels), &spec(42, stratified)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (3500, 1500));
    }
}

#[test]
fn csv_roundtrip_through_a_file() {
    let d = dataset(&[true, false, true]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("news.csv");
    write_csv(std::fs::File::create(&path).unwrap(), &d, "text", "type").unwrap();
    let back = load_csv(&path, &CsvSchema::default()).unwrap();
    assert_eq!(back.records, d.records);
}
