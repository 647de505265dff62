//! Seeded synthetic tables for demos, tests and timing runs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, TabularDataset, Task};
use crate::util::rng_from_seed;

/// Built-in table generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratedTable {
    /// Columns `a`..`e` standard normal; target `y = 1{a·b > 0}`.
    Interaction { rows: usize, seed: u64 },
    /// `cols` standard-normal features `x001`..; binary target from a sparse
    /// linear score plus noise.
    Wide { rows: usize, cols: usize, seed: u64 },
}

impl GeneratedTable {
    pub fn build(&self) -> TabularDataset {
        match *self {
            GeneratedTable::Interaction { rows, seed } => interaction_table(rows, seed),
            GeneratedTable::Wide { rows, cols, seed } => wide_table(rows, cols, seed),
        }
    }
}

pub fn interaction_table(rows: usize, seed: u64) -> TabularDataset {
    let mut rng = rng_from_seed(seed);
    let names = ["a", "b", "c", "d", "e"];
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(rows); names.len()];
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        for c in cols.iter_mut() {
            c.push(rng.sample(StandardNormal));
        }
        let (a, b): (f64, f64) = (cols[0][cols[0].len() - 1], cols[1][cols[1].len() - 1]);
        y.push(if a * b > 0.0 { 1.0 } else { 0.0 });
    }
    let mut columns: Vec<Column> = names
        .iter()
        .zip(&cols)
        .map(|(n, v)| Column::from_f64(*n, v))
        .collect();
    columns.push(Column::from_f64("y", &y));
    TabularDataset::new(
        columns,
        "y",
        Task::Classification,
        "synthetic: the label depends on the sign agreement of two columns",
    )
    .expect("generated table is well-formed")
}

pub fn wide_table(rows: usize, cols: usize, seed: u64) -> TabularDataset {
    let mut rng = rng_from_seed(seed);
    let mut data: Vec<Vec<f64>> = vec![Vec::with_capacity(rows); cols];
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut score = 0.0;
        for (j, c) in data.iter_mut().enumerate() {
            let v: f64 = rng.sample(StandardNormal);
            if j < 5 {
                score += v;
            }
            c.push(v);
        }
        let noise: f64 = rng.sample(StandardNormal);
        y.push(if score + 2.0 * noise > 0.0 { 1.0 } else { 0.0 });
    }
    let mut columns: Vec<Column> = data
        .iter()
        .enumerate()
        .map(|(j, v)| Column::from_f64(format!("x{:03}", j + 1), v))
        .collect();
    columns.push(Column::from_f64("y", &y));
    TabularDataset::new(columns, "y", Task::Classification, "synthetic wide table")
        .expect("generated table is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interaction_label_rule() {
        let ds = interaction_table(50, 1);
        let a = ds.column("a").unwrap().as_numeric().unwrap().to_vec();
        let b = ds.column("b").unwrap().as_numeric().unwrap().to_vec();
        for (i, y) in ds.target_values().iter().enumerate() {
            assert_eq!(*y, ((a[i].unwrap() * b[i].unwrap()) > 0.0) as u8 as f64);
        }
        assert_eq!(interaction_table(50, 1), ds);
    }

    #[test]
    fn wide_shape() {
        let ds = wide_table(20, 7, 0);
        assert_eq!(ds.n_rows(), 20);
        assert_eq!(ds.feature_schema().len(), 7);
        assert_eq!(ds.column_names()[0], "x001");
    }
}
