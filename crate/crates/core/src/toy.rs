//! Small synthetic classification tables for demos and tests.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::seed;
use crate::tabular::{Column, Lineage, Table, Target};

fn target(labels: Vec<u32>, classes: &[&str]) -> Target {
    Target::new(
        "target",
        Arc::new(classes.iter().map(|s| s.to_string()).collect()),
        labels,
    )
}

fn numeric(name: &str, values: Vec<f64>) -> Column {
    Column::numeric(name, Lineage::raw(name), values)
}

/// Three Gaussian classes in three informative dimensions, plus two pure
/// noise columns.
pub fn blobs(n: usize, seed: u64) -> Table {
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let centers = [[0.0, 0.0, 0.0], [2.2, 1.0, -1.0], [-1.0, 2.4, 1.2]];
    let labels: Vec<u32> = (0..n).map(|i| (i % 3) as u32).collect();
    let mut cols = vec![Vec::with_capacity(n); 5];
    for &l in &labels {
        for (j, col) in cols.iter_mut().enumerate() {
            let center = if j < 3 { centers[l as usize][j] } else { 0.0 };
            col.push(center + noise.sample(&mut rng));
        }
    }
    let names = ["x1", "x2", "x3", "noise1", "noise2"];
    let columns = names.iter().zip(cols).map(|(n, v)| numeric(n, v)).collect();
    Table::from_columns(columns, n, Some(target(labels, &["a", "b", "c"]))).expect("consistent table")
}

/// Binary task with a categorical signal column, a numeric column with
/// missing cells, and noise. About 30/70 class balance.
pub fn mixed(n: usize, seed: u64) -> Table {
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut labels = Vec::with_capacity(n);
    let mut color = Vec::with_capacity(n);
    let mut amount = Vec::with_capacity(n);
    let mut other = Vec::with_capacity(n);
    let mut shift = Vec::with_capacity(n);
    for i in 0..n {
        let l = u32::from(i % 10 < 3);
        labels.push(l);
        let hit = rng.gen_bool(0.8);
        let c = match (l, hit) {
            (1, true) => "red",
            (0, true) => {
                if rng.gen_bool(0.5) {
                    "green"
                } else {
                    "blue"
                }
            }
            _ => ["red", "green", "blue"][rng.gen_range(0..3)],
        };
        color.push(Some(c.to_string()));
        let a = 1.5 * l as f64 + noise.sample(&mut rng);
        amount.push(if rng.gen_bool(0.1) { None } else { Some(a) });
        other.push(noise.sample(&mut rng) * 3.0);
        shift.push(-2.0 + 0.8 * l as f64 + noise.sample(&mut rng));
    }
    let columns = vec![
        Column::categorical_from_strings("color", Lineage::raw("color"), &color),
        Column::numeric_with_missing("amount", Lineage::raw("amount"), amount),
        numeric("other", other),
        numeric("shift", shift),
    ];
    Table::from_columns(columns, n, Some(target(labels, &["no", "yes"]))).expect("consistent table")
}

/// Binary XOR of the signs of two features, plus noise columns.
pub fn xor(n: usize, seed: u64) -> Table {
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut cols = vec![Vec::with_capacity(n); 4];
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        labels.push(u32::from((a > 0.0) != (b > 0.0)));
        cols[0].push(a);
        cols[1].push(b);
        cols[2].push(noise.sample(&mut rng));
        cols[3].push(noise.sample(&mut rng));
    }
    let names = ["u", "v", "noise1", "noise2"];
    let columns = names.iter().zip(cols).map(|(n, v)| numeric(n, v)).collect();
    Table::from_columns(columns, n, Some(target(labels, &["same", "differ"]))).expect("consistent table")
}

/// Binary table whose single feature equals the label.
pub fn memorize(n: usize) -> Table {
    let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let f = labels.iter().map(|&l| l as f64).collect();
    Table::from_columns(vec![numeric("copy", f)], n, Some(target(labels, &["zero", "one"])))
        .expect("consistent table")
}

/// Binary table with a fixed class ratio and an uninformative constant
/// feature, so the best any estimator can do is the majority class.
pub fn constant_feature(n_major: usize, n_minor: usize) -> Table {
    let n = n_major + n_minor;
    let labels: Vec<u32> = (0..n).map(|i| u32::from(i >= n_major)).collect();
    Table::from_columns(
        vec![numeric("flat", vec![1.0; n])],
        n,
        Some(target(labels, &["major", "minor"])),
    )
    .expect("consistent table")
}
