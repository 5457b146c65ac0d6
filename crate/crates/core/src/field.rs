//! Scalar fields f(x, t) consumed by the discretization.

use std::fmt;
use std::sync::Arc;

use crate::expr::{EvalError, Expr};

/// A scalar function of space and time. Functions of one variable simply
/// ignore the other argument.
pub trait Field: Send + Sync + fmt::Debug {
    fn eval(&self, x: f64, t: f64) -> Result<f64, EvalError>;

    fn depends_on_x(&self) -> bool {
        true
    }

    fn depends_on_t(&self) -> bool {
        true
    }
}

impl Field for Expr {
    fn eval(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        Expr::eval(self, x, t)
    }

    fn depends_on_x(&self) -> bool {
        self.uses_x()
    }

    fn depends_on_t(&self) -> bool {
        self.uses_t()
    }
}

type ScalarFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A field backed by a native closure, e.g. an exact reference solution.
#[derive(Clone)]
pub struct FnField {
    name: String,
    f: Arc<ScalarFn>,
    uses_x: bool,
    uses_t: bool,
}

impl FnField {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        FnField {
            name: name.into(),
            f: Arc::new(f),
            uses_x: true,
            uses_t: true,
        }
    }

    pub fn of_x<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        FnField {
            uses_t: false,
            ..FnField::new(name, move |x, _| f(x))
        }
    }

    pub fn of_t<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        FnField {
            uses_x: false,
            ..FnField::new(name, move |_, t| f(t))
        }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({})", self.name)
    }
}

impl Field for FnField {
    fn eval(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        let v = (self.f)(x, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                expr: format!("{}({x}, {t})", self.name),
            })
        }
    }

    fn depends_on_x(&self) -> bool {
        self.uses_x
    }

    fn depends_on_t(&self) -> bool {
        self.uses_t
    }
}

pub type SharedField = Arc<dyn Field>;

/// Parses `source` into a shareable field.
pub fn expr_field(source: &str) -> Result<SharedField, crate::expr::ParseError> {
    Ok(Arc::new(Expr::parse(source)?))
}

pub fn constant_field(value: f64) -> SharedField {
    Arc::new(Expr::constant(value))
}
