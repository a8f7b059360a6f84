use edc_core::data::{load_csv_from_reader, RawTable, Schema};
use edc_core::model::{train, ModelFile, TrainSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick_settings(seed: u64) -> TrainSettings {
    let mut s = TrainSettings::default().with_seed(seed);
    s.search.beam_width = 3;
    s.search.max_depth = 2;
    s.search.restarts_per_candidate = 1;
    s.optimizer.sgd.epochs = 40;
    s.optimizer.hill.budget = 400;
    s
}

/// Two numeric columns and one categorical column; positive when
/// `a + b > 1` or the colour is red.
fn mixed_table(n: usize, seed: u64) -> (RawTable, Vec<bool>) {
    let (names, cells, labels) = mixed_cells(n, seed);
    (RawTable::from_cells(names, cells, &[]), labels)
}

fn mixed_cells(n: usize, seed: u64) -> (Vec<String>, Vec<Vec<String>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colours = ["red", "green", "blue", "grey"];
    let mut cells = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let a: f64 = rng.random_range(0.0..10.0);
        let b: f64 = rng.random_range(-5.0..5.0);
        let c = colours[rng.random_range(0..colours.len())];
        labels.push(a / 10.0 + (b + 5.0) / 10.0 > 1.0 || c == "red");
        cells.push(vec![format!("{a}"), format!("{b}"), c.to_string()]);
    }
    let names = vec!["a".to_string(), "b".to_string(), "colour".to_string()];
    (names, cells, labels)
}

#[test]
fn saved_model_predicts_identically() {
    let (table, labels) = mixed_table(300, 1);
    let rows: Vec<usize> = (0..table.n_rows).collect();
    let model = train(&table, &labels, &rows, &quick_settings(4), |_| {}).unwrap();
    let reloaded = ModelFile::from_json(&model.to_json()).unwrap();
    assert_eq!(reloaded, model);
    assert_eq!(reloaded.to_json(), model.to_json());

    let (fresh, _) = mixed_table(1000, 2);
    let a = model.predict_table(&fresh).unwrap();
    let b = reloaded.predict_table(&fresh).unwrap();
    assert_eq!(a.len(), 1000);
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.score.to_bits(), q.score.to_bits());
        assert_eq!(p.probability.to_bits(), q.probability.to_bits());
        assert_eq!(p.label, q.label);
    }
}

#[test]
fn training_is_deterministic() {
    let (table, labels) = mixed_table(200, 3);
    let rows: Vec<usize> = (0..table.n_rows).collect();
    let a = train(&table, &labels, &rows, &quick_settings(7), |_| {}).unwrap();
    let b = train(&table, &labels, &rows, &quick_settings(7), |_| {}).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn rows_outside_the_training_set_do_not_influence_the_model() {
    let (names, mut cells, labels) = mixed_cells(200, 5);
    let train_rows: Vec<usize> = (0..150).collect();
    let table = RawTable::from_cells(names.clone(), cells.clone(), &[]);
    let before = train(&table, &labels, &train_rows, &quick_settings(1), |_| {}).unwrap();

    // Canary: an extreme outlier and an unseen category in a held-out row.
    cells[170] = vec!["1e9".into(), "-1e9".into(), "violet".into()];
    let table = RawTable::from_cells(names, cells, &[]);
    let after = train(&table, &labels, &train_rows, &quick_settings(1), |_| {}).unwrap();
    assert_eq!(before.to_json(), after.to_json());
}

#[test]
fn predicted_labels_follow_the_threshold() {
    let (table, labels) = mixed_table(200, 8);
    let rows: Vec<usize> = (0..table.n_rows).collect();
    let model = train(&table, &labels, &rows, &quick_settings(2), |_| {}).unwrap();
    for p in model.predict_table(&table).unwrap() {
        assert_eq!(p.label, p.score >= model.threshold);
    }
    let failed = model.predict_table(&RawTable::from_cells(vec!["a".into()], vec![vec!["1".into()]], &[]));
    assert!(failed.is_err(), "missing feature columns are rejected");
}

#[test]
fn csv_round_trip_through_loader() {
    let text = "a,b,label\n1,2,yes\n3,?,no\n5,6,yes\n";
    let (table, labels) = load_csv_from_reader(text.as_bytes(), &Schema::new("label", "yes")).unwrap();
    assert_eq!(labels, vec![true, false, true]);
    assert_eq!(table.names, vec!["a".to_string(), "b".to_string()]);
}
