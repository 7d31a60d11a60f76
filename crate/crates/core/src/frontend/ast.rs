//! Untyped syntax tree of a B0-lite model, as produced by the parser.

use std::fmt;

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn new(line: u32, column: u32) -> Self {
        Span { line, column }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarType {
    Bool,
    Int { lo: i64, hi: i64 },
}

impl ScalarType {
    /// Fail-safe default: FALSE or the range minimum.
    pub fn default_value(&self) -> i64 {
        match *self {
            ScalarType::Bool => 0,
            ScalarType::Int { lo, .. } => lo,
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        match *self {
            ScalarType::Bool => v == 0 || v == 1,
            ScalarType::Int { lo, hi } => lo <= v && v <= hi,
        }
    }

    /// Number of distinct values, saturating.
    pub fn cardinality(&self) -> u128 {
        match *self {
            ScalarType::Bool => 2,
            ScalarType::Int { lo, hi } => (hi as i128 - lo as i128 + 1).max(0) as u128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Scalar(ScalarType),
    Array { len: u32, elem: ScalarType },
}

impl Type {
    pub fn elem(&self) -> ScalarType {
        match *self {
            Type::Scalar(s) => s,
            Type::Array { elem, .. } => elem,
        }
    }

    /// Number of storage cells (1 for scalars).
    pub fn cells(&self) -> u32 {
        match *self {
            Type::Scalar(_) => 1,
            Type::Array { len, .. } => len,
        }
    }

    pub fn is_array(&self) -> bool {
        matches!(self, Type::Array { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub ty: Type,
    /// Only meaningful in the STATE section.
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstDecl {
    pub name: String,
    pub value: i64,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub inputs: Vec<VarDecl>,
    pub outputs: Vec<VarDecl>,
    pub state: Vec<VarDecl>,
    pub constants: Vec<ConstDecl>,
    pub invariant: Option<Expr>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    Xor,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Or => "OR",
            BinOp::Xor => "XOR",
            BinOp::And => "AND",
            BinOp::Eq => "=",
            BinOp::Ne => "/=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "MOD",
        }
    }

    pub fn is_logical(&self) -> bool {
        matches!(self, BinOp::Or | BinOp::Xor | BinOp::And)
    }

    pub fn is_comparison(&self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub fn is_arithmetic(&self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Bool(bool),
    Int(i64),
    Var(String),
    Index(String, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Builds an expression with an empty span (used by generators).
    pub fn synth(kind: ExprKind) -> Self {
        Expr {
            kind,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LValue {
    pub name: String,
    pub index: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign {
        target: LValue,
        value: Expr,
        span: Span,
    },
    If {
        /// `IF c THEN ... {ELSIF c THEN ...}`
        arms: Vec<(Expr, Vec<Stmt>)>,
        otherwise: Vec<Stmt>,
        span: Span,
    },
    For {
        var: String,
        from: Expr,
        to: Expr,
        body: Vec<Stmt>,
        span: Span,
    },
}

impl Model {
    /// Copy of the model with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> Model {
        fn expr(e: &Expr) -> Expr {
            let kind = match &e.kind {
                ExprKind::Index(n, i) => ExprKind::Index(n.clone(), Box::new(expr(i))),
                ExprKind::Unary(op, a) => ExprKind::Unary(*op, Box::new(expr(a))),
                ExprKind::Binary(op, a, b) => {
                    ExprKind::Binary(*op, Box::new(expr(a)), Box::new(expr(b)))
                }
                k => k.clone(),
            };
            Expr::synth(kind)
        }
        fn stmts(body: &[Stmt]) -> Vec<Stmt> {
            body.iter()
                .map(|s| match s {
                    Stmt::Assign { target, value, .. } => Stmt::Assign {
                        target: LValue {
                            name: target.name.clone(),
                            index: target.index.as_ref().map(expr),
                            span: Span::default(),
                        },
                        value: expr(value),
                        span: Span::default(),
                    },
                    Stmt::If {
                        arms, otherwise, ..
                    } => Stmt::If {
                        arms: arms.iter().map(|(c, b)| (expr(c), stmts(b))).collect(),
                        otherwise: stmts(otherwise),
                        span: Span::default(),
                    },
                    Stmt::For {
                        var, from, to, body, ..
                    } => Stmt::For {
                        var: var.clone(),
                        from: expr(from),
                        to: expr(to),
                        body: stmts(body),
                        span: Span::default(),
                    },
                })
                .collect()
        }
        let decls = |ds: &[VarDecl]| {
            ds.iter()
                .map(|d| VarDecl {
                    name: d.name.clone(),
                    ty: d.ty,
                    init: d.init.as_ref().map(expr),
                    span: Span::default(),
                })
                .collect::<Vec<_>>()
        };
        Model {
            name: self.name.clone(),
            inputs: decls(&self.inputs),
            outputs: decls(&self.outputs),
            state: decls(&self.state),
            constants: self
                .constants
                .iter()
                .map(|c| ConstDecl {
                    name: c.name.clone(),
                    value: c.value,
                    span: Span::default(),
                })
                .collect(),
            invariant: self.invariant.as_ref().map(expr),
            body: stmts(&self.body),
            span: Span::default(),
        }
    }
}
