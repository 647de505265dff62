use serde::{Deserialize, Serialize};

use super::ast::{CmpOp, Expr};
use super::validate::validate;
use super::DslError;
use crate::dataset::TabularDataset;

/// Rows that were zeroed during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalDiagnostics {
    pub n_nonfinite: usize,
    pub n_missing: usize,
}

impl std::ops::Add for EvalDiagnostics {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            n_nonfinite: self.n_nonfinite + rhs.n_nonfinite,
            n_missing: self.n_missing + rhs.n_missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedColumn {
    pub values: Vec<f64>,
    pub diagnostics: EvalDiagnostics,
}

/// `None` marks a row that touched a missing input.
type Lane = Vec<Option<f64>>;

/// Evaluates row-wise in IEEE double arithmetic. Rows that touch a missing
/// input, or whose result is non-finite, become 0 and are counted.
pub fn evaluate(expr: &Expr, dataset: &TabularDataset) -> Result<EvaluatedColumn, DslError> {
    validate(expr, &dataset.feature_schema()).map_err(DslError::Invalid)?;
    let n = dataset.n_rows();
    let lane = eval_lane(expr, dataset, n);
    let mut diagnostics = EvalDiagnostics::default();
    let values = lane
        .into_iter()
        .map(|v| match v {
            None => {
                diagnostics.n_missing += 1;
                0.0
            }
            Some(x) if !x.is_finite() => {
                diagnostics.n_nonfinite += 1;
                0.0
            }
            Some(x) => x,
        })
        .collect();
    Ok(EvaluatedColumn {
        values,
        diagnostics,
    })
}

fn numeric_column(dataset: &TabularDataset, name: &str) -> Lane {
    dataset
        .column(name)
        .and_then(|c| c.as_numeric())
        .expect("validated numeric column")
        .to_vec()
}

fn zip_with(a: Lane, b: Lane, f: impl Fn(f64, f64) -> f64) -> Lane {
    a.into_iter().zip(b).map(|(x, y)| Some(f(x?, y?))).collect()
}

fn indicator(op: CmpOp, column: &str, literal: &str, dataset: &TabularDataset) -> Lane {
    let values = dataset
        .column(column)
        .and_then(|c| c.as_categorical())
        .expect("validated categorical column");
    values
        .iter()
        .map(|v| {
            let eq = v.as_deref()? == literal;
            let hit = if op == CmpOp::Eq { eq } else { !eq };
            Some(if hit { 1.0 } else { 0.0 })
        })
        .collect()
}

fn eval_lane(expr: &Expr, dataset: &TabularDataset, n: usize) -> Lane {
    match expr {
        Expr::Col(name) => numeric_column(dataset, name),
        Expr::Num(v) => vec![Some(*v); n],
        Expr::Str(_) => unreachable!("validated: strings only inside categorical equality"),
        Expr::Unary(f, a) => eval_lane(a, dataset, n)
            .into_iter()
            .map(|x| x.map(|x| f.apply(x)))
            .collect(),
        Expr::Binary(op, a, b) => zip_with(
            eval_lane(a, dataset, n),
            eval_lane(b, dataset, n),
            |x, y| op.apply(x, y),
        ),
        Expr::Compare(op, a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Col(c), Expr::Str(s)) | (Expr::Str(s), Expr::Col(c)) => {
                indicator(*op, c, s, dataset)
            }
            _ => zip_with(
                eval_lane(a, dataset, n),
                eval_lane(b, dataset, n),
                |x, y| if op.apply(x, y) { 1.0 } else { 0.0 },
            ),
        },
        Expr::Aggregate(f, args) => {
            let lanes: Vec<Lane> = args.iter().map(|a| eval_lane(a, dataset, n)).collect();
            (0..n)
                .map(|row| {
                    let vals: Option<Vec<f64>> = lanes.iter().map(|l| l[row]).collect();
                    Some(f.apply(&vals?))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Task};
    use crate::dsl::parse;

    fn table() -> TabularDataset {
        TabularDataset::new(
            vec![
                Column::from_f64("a", &[4.0, 4.0, 4.0]),
                Column::from_f64("b", &[2.0, 0.0, 4.0]),
                Column::numeric("m", vec![Some(1.0), None, Some(-1.0)]),
                Column::categorical("k", vec![Some("x".into()), Some("y".into()), None]),
                Column::from_f64("y", &[0.0, 1.0, 0.0]),
            ],
            "y",
            Task::Classification,
            "",
        )
        .unwrap()
    }

    fn run(text: &str) -> EvaluatedColumn {
        evaluate(&parse(text).unwrap(), &table()).unwrap()
    }

    #[test]
    fn identity_plus_zero() {
        assert_eq!(run(r#"col("a") + 0"#).values, vec![4.0, 4.0, 4.0]);
    }

    #[test]
    fn division_by_zero_zeroed_and_counted() {
        let out = run(r#"col("a") / col("b")"#);
        assert_eq!(out.values, vec![2.0, 0.0, 1.0]);
        assert_eq!(
            out.diagnostics,
            EvalDiagnostics {
                n_nonfinite: 1,
                n_missing: 0
            }
        );
    }

    #[test]
    fn missing_inputs_zeroed_and_counted() {
        let out = run(r#"col("m") * 2"#);
        assert_eq!(out.values, vec![2.0, 0.0, -2.0]);
        assert_eq!(out.diagnostics.n_missing, 1);
    }

    #[test]
    fn log_of_nonpositive_and_negative_fractional_power() {
        let out = run(r#"log(col("m")) + (col("m") ^ 0.5)"#);
        assert_eq!(out.values, vec![1.0, 0.0, 0.0]);
        assert_eq!(
            out.diagnostics,
            EvalDiagnostics {
                n_nonfinite: 1,
                n_missing: 1
            }
        );
    }

    #[test]
    fn categorical_indicator() {
        assert_eq!(run(r#"col("k") = "x""#).values, vec![1.0, 0.0, 0.0]);
        let ne = run(r#""x" != col("k")"#);
        assert_eq!(ne.values, vec![0.0, 1.0, 0.0]);
        assert_eq!(ne.diagnostics.n_missing, 1);
    }

    #[test]
    fn comparisons_and_aggregates() {
        assert_eq!(run(r#"col("b") >= 2"#).values, vec![1.0, 0.0, 1.0]);
        assert_eq!(
            run(r#"mean(col("a"), col("b"))"#).values,
            vec![3.0, 2.0, 4.0]
        );
        assert_eq!(
            run(r#"min(col("a"), col("b"), 3)"#).values,
            vec![2.0, 0.0, 3.0]
        );
        assert_eq!(
            run(r#"max(col("a"), col("b"))"#).values,
            vec![4.0, 4.0, 4.0]
        );
        assert_eq!(
            run(r#"sum(col("a"), col("b"), 1)"#).values,
            vec![7.0, 5.0, 9.0]
        );
    }

    #[test]
    fn invalid_expression_is_error() {
        assert!(matches!(
            evaluate(&parse(r#"col("zzz")"#).unwrap(), &table()),
            Err(DslError::Invalid(_))
        ));
        // target is not a feature column
        assert!(evaluate(&parse(r#"col("y")"#).unwrap(), &table()).is_err());
    }
}
