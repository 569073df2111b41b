use serde::{Deserialize, Serialize};

use crate::autodiff::HingeKind;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// ∂effect/∂cause ≤ bound
    #[serde(rename = "le")]
    AtMost,
    /// ∂effect/∂cause ≥ bound
    #[serde(rename = "ge")]
    AtLeast,
    /// |∂effect/∂cause - bound| ≤ epsilon
    #[serde(rename = "eq")]
    Equal,
}

/// Expert constraint on the derivative of a modeled variable with respect to
/// one of its causes, enforced per sample by a hinge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainPrior {
    pub cause: usize,
    pub effect: usize,
    pub relation: Relation,
    #[serde(default)]
    pub bound: f64,
    /// Tolerance of the two-sided form; one-sided forms hinge at `bound`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl DomainPrior {
    pub fn at_most(cause: usize, effect: usize, bound: f64) -> Self {
        Self {
            cause,
            effect,
            relation: Relation::AtMost,
            bound,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn at_least(cause: usize, effect: usize, bound: f64) -> Self {
        Self {
            relation: Relation::AtLeast,
            ..Self::at_most(cause, effect, bound)
        }
    }

    pub fn equal(cause: usize, effect: usize, target: f64, epsilon: f64) -> Self {
        Self {
            cause,
            effect,
            relation: Relation::Equal,
            bound: target,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bound.is_finite() || !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "prior {self}: bound must be finite and epsilon >= 0"
            )));
        }
        if self.cause == self.effect {
            return Err(Error::Config(format!("prior {self}: cause and effect coincide")));
        }
        Ok(())
    }

    pub(crate) fn hinge(&self) -> HingeKind {
        match self.relation {
            Relation::AtMost => HingeKind::AtMost { bound: self.bound },
            Relation::AtLeast => HingeKind::AtLeast { bound: self.bound },
            Relation::Equal => HingeKind::Within {
                target: self.bound,
                margin: self.epsilon,
            },
        }
    }

    /// Penalty for one observed derivative value.
    pub fn penalty(&self, derivative: f64) -> f64 {
        match self.hinge() {
            HingeKind::AtMost { bound } => (derivative - bound).max(0.0),
            HingeKind::AtLeast { bound } => (bound - derivative).max(0.0),
            HingeKind::Within { target, margin } => ((derivative - target).abs() - margin).max(0.0),
        }
    }
}

impl std::fmt::Display for DomainPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (c, e) = (self.cause, self.effect);
        match self.relation {
            Relation::AtMost => write!(f, "dX{e}/dX{c} <= {}", self.bound),
            Relation::AtLeast => write!(f, "dX{e}/dX{c} >= {}", self.bound),
            Relation::Equal => write!(f, "dX{e}/dX{c} = {} ± {}", self.bound, self.epsilon),
        }
    }
}
