use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    /// `=?`: report the value without a verdict.
    Query,
    AtLeast(f64),
    AtMost(f64),
}

impl Bound {
    pub fn verdict(self, value: f64) -> Option<bool> {
        match self {
            Bound::Query => None,
            Bound::AtLeast(b) => Some(value >= b),
            Bound::AtMost(b) => Some(value <= b),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Query => write!(f, "=?"),
            Bound::AtLeast(b) => write!(f, ">={b}"),
            Bound::AtMost(b) => write!(f, "<={b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn apply(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateExpr {
    True,
    False,
    /// `field op value`, e.g. `m=3` or `e<=2`.
    Atom {
        field: String,
        op: CmpOp,
        value: i64,
    },
    Not(Box<StateExpr>),
    And(Box<StateExpr>, Box<StateExpr>),
    Or(Box<StateExpr>, Box<StateExpr>),
}

impl StateExpr {
    pub fn atom(field: &str, op: CmpOp, value: i64) -> Self {
        StateExpr::Atom {
            field: field.to_string(),
            op,
            value,
        }
    }

    pub fn and(a: StateExpr, b: StateExpr) -> Self {
        StateExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: StateExpr, b: StateExpr) -> Self {
        StateExpr::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: StateExpr) -> Self {
        StateExpr::Not(Box::new(a))
    }

    fn precedence(&self) -> u8 {
        match self {
            StateExpr::Or(..) => 1,
            StateExpr::And(..) => 2,
            _ => 3,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for StateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateExpr::True => write!(f, "true"),
            StateExpr::False => write!(f, "false"),
            StateExpr::Atom { field, op, value } => write!(f, "{field}{}{value}", op.symbol()),
            StateExpr::Not(a) => {
                write!(f, "!")?;
                a.fmt_child(f, 3)
            }
            // Binary operators associate to the left, so a right operand of
            // the same precedence needs parentheses.
            StateExpr::And(a, b) => {
                a.fmt_child(f, 2)?;
                write!(f, " & ")?;
                b.fmt_child(f, 3)
            }
            StateExpr::Or(a, b) => {
                a.fmt_child(f, 1)?;
                write!(f, " | ")?;
                b.fmt_child(f, 2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathFormula {
    Eventually(StateExpr),
    Until(StateExpr, StateExpr),
}

impl PathFormula {
    /// `F φ` as `true U φ`.
    pub fn desugar(&self) -> (StateExpr, StateExpr) {
        match self {
            PathFormula::Eventually(t) => (StateExpr::True, t.clone()),
            PathFormula::Until(c, t) => (c.clone(), t.clone()),
        }
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Eventually(t) => write!(f, "F {t}"),
            PathFormula::Until(c, t) => write!(f, "{c} U {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PctlFormula {
    Prob {
        bound: Bound,
        path: PathFormula,
    },
    Reward {
        label: String,
        bound: Bound,
        path: PathFormula,
    },
}

impl PctlFormula {
    pub fn path(&self) -> &PathFormula {
        match self {
            PctlFormula::Prob { path, .. } | PctlFormula::Reward { path, .. } => path,
        }
    }

    pub fn bound(&self) -> Bound {
        match self {
            PctlFormula::Prob { bound, .. } | PctlFormula::Reward { bound, .. } => *bound,
        }
    }
}

impl fmt::Display for PctlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PctlFormula::Prob { bound, path } => write!(f, "P{bound} [ {path} ]"),
            PctlFormula::Reward { label, bound, path } => {
                write!(f, "R{{\"{label}\"}}{bound} [ {path} ]")
            }
        }
    }
}
