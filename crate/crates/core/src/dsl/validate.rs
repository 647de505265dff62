use thiserror::Error;

use super::ast::Expr;
use crate::dataset::ColumnKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("categorical in numeric context: column {0:?}")]
    CategoricalInNumericContext(String),
    #[error("string literal {0:?} outside a categorical equality")]
    StrayString(String),
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Numeric,
    Categorical,
    Str,
    Unknown,
}

/// Checks column references and typing against `schema`, returning every
/// problem found.
pub fn validate(expr: &Expr, schema: &[(String, ColumnKind)]) -> Result<(), Vec<ValidationError>> {
    let mut errors = Vec::new();
    let kind = check(expr, schema, &mut errors);
    require_numeric(kind, expr, &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn check(expr: &Expr, schema: &[(String, ColumnKind)], errors: &mut Vec<ValidationError>) -> Kind {
    match expr {
        Expr::Col(name) => match schema.iter().find(|(n, _)| n == name) {
            Some((_, ColumnKind::Numeric)) => Kind::Numeric,
            Some((_, ColumnKind::Categorical)) => Kind::Categorical,
            None => {
                errors.push(ValidationError::UnknownColumn(name.clone()));
                Kind::Unknown
            }
        },
        Expr::Num(_) => Kind::Numeric,
        Expr::Str(_) => Kind::Str,
        Expr::Unary(_, a) => {
            let k = check(a, schema, errors);
            require_numeric(k, a, errors);
            Kind::Numeric
        }
        Expr::Binary(_, a, b) => {
            for side in [a, b] {
                let k = check(side, schema, errors);
                require_numeric(k, side, errors);
            }
            Kind::Numeric
        }
        Expr::Compare(op, a, b) => {
            let ka = check(a, schema, errors);
            let kb = check(b, schema, errors);
            let indicator = op.is_equality()
                && matches!(
                    (ka, kb),
                    (Kind::Categorical, Kind::Str) | (Kind::Str, Kind::Categorical)
                );
            if !indicator {
                require_numeric(ka, a, errors);
                require_numeric(kb, b, errors);
            }
            Kind::Numeric
        }
        Expr::Aggregate(_, args) => {
            for arg in args {
                let k = check(arg, schema, errors);
                require_numeric(k, arg, errors);
            }
            Kind::Numeric
        }
    }
}

fn require_numeric(kind: Kind, expr: &Expr, errors: &mut Vec<ValidationError>) {
    match (kind, expr) {
        (Kind::Categorical, Expr::Col(name)) => {
            errors.push(ValidationError::CategoricalInNumericContext(name.clone()))
        }
        (Kind::Str, Expr::Str(s)) => errors.push(ValidationError::StrayString(s.clone())),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn schema() -> Vec<(String, ColumnKind)> {
        vec![
            ("Type of Travel".into(), ColumnKind::Categorical),
            ("Cleanliness".into(), ColumnKind::Numeric),
            ("a".into(), ColumnKind::Numeric),
        ]
    }

    #[test]
    fn numeric_expression_ok() {
        assert!(validate(
            &parse(r#"log1p(col("a")) * col("Cleanliness")"#).unwrap(),
            &schema()
        )
        .is_ok());
    }

    #[test]
    fn categorical_under_sqrt_rejected() {
        let errs =
            validate(&parse(r#"sqrt(col("Type of Travel"))"#).unwrap(), &schema()).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0]
            .to_string()
            .contains("categorical in numeric context"));
    }

    #[test]
    fn business_travel_indicator_ok() {
        let e =
            parse(r#"(col("Type of Travel") = "Business travel") * col("Cleanliness")"#).unwrap();
        assert!(validate(&e, &schema()).is_ok());
        let flipped = parse(r#""Business travel" != col("Type of Travel")"#).unwrap();
        assert!(validate(&flipped, &schema()).is_ok());
    }

    #[test]
    fn reports_every_error() {
        let e = parse(r#"col("nope") + col("Type of Travel") + "x" + col("also_nope")"#).unwrap();
        let errs = validate(&e, &schema()).unwrap_err();
        assert_eq!(
            errs,
            vec![
                ValidationError::UnknownColumn("nope".into()),
                ValidationError::CategoricalInNumericContext("Type of Travel".into()),
                ValidationError::StrayString("x".into()),
                ValidationError::UnknownColumn("also_nope".into()),
            ]
        );
    }

    #[test]
    fn bare_categorical_or_ordering_rejected() {
        assert!(validate(&parse(r#"col("Type of Travel")"#).unwrap(), &schema()).is_err());
        assert!(validate(&parse(r#"col("Type of Travel") < "B""#).unwrap(), &schema()).is_err());
        assert!(validate(&parse(r#"col("a") = "B""#).unwrap(), &schema()).is_err());
    }
}
