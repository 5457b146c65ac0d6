//! Scalar arithmetic expressions in the variables `x` and `t`.
//!
//! Grammar (precedence from loosest to tightest):
//!
//! ```text
//! expr   := expr ('+' | '-') expr
//!         | expr ('*' | '/') expr
//!         | '-' expr
//!         | expr '^' expr            (right associative)
//!         | number | 'x' | 't' | 'pi' | func '(' args ')' | '(' expr ')'
//! func   := sin | cos | tanh | exp | ln | sqrt | abs | min | max
//! ```
//!
//! Implicit multiplication is not accepted: `2x` is a syntax error.

use std::fmt;

use thiserror::Error;

/// Errors produced while parsing an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
}

/// Domain errors raised during evaluation, each carrying the printed
/// sub-expression that failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },
    #[error("square root of a negative value in `{expr}`")]
    NegativeSqrt { expr: String },
    #[error("logarithm of a non-positive value in `{expr}`")]
    NonPositiveLog { expr: String },
    #[error("non-finite result in `{expr}`")]
    NonFinite { expr: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression. Immutable and cheap to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ParseError> {
        let tokens = lex(source)?;
        if tokens.is_empty() {
            return Err(ParseError::Empty);
        }
        let mut parser = Parser {
            tokens,
            pos: 0,
            end: source.len(),
        };
        let root = parser.expr(0)?;
        if let Some(tok) = parser.peek() {
            return Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        Ok(Expr { root })
    }

    pub fn from_node(root: Node) -> Expr {
        Expr { root }
    }

    pub fn constant(value: f64) -> Expr {
        Expr {
            root: Node::Num(value),
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        eval_node(&self.root, x, t)
    }

    pub fn uses_x(&self) -> bool {
        uses_var(&self.root, Var::X)
    }

    pub fn uses_t(&self) -> bool {
        uses_var(&self.root, Var::T)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Pi => write!(f, "pi"),
            Node::Var(Var::X) => write!(f, "x"),
            Node::Var(Var::T) => write!(f, "t"),
            Node::Neg(e) => write!(f, "(-{e})"),
            Node::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn uses_var(node: &Node, var: Var) -> bool {
    match node {
        Node::Num(_) | Node::Pi => false,
        Node::Var(v) => *v == var,
        Node::Neg(e) => uses_var(e, var),
        Node::Bin(_, l, r) => uses_var(l, var) || uses_var(r, var),
        Node::Call(_, args) => args.iter().any(|a| uses_var(a, var)),
    }
}

fn eval_node(node: &Node, x: f64, t: f64) -> Result<f64, EvalError> {
    Ok(match node {
        Node::Num(v) => *v,
        Node::Pi => std::f64::consts::PI,
        Node::Var(Var::X) => x,
        Node::Var(Var::T) => t,
        Node::Neg(e) => -eval_node(e, x, t)?,
        Node::Bin(op, l, r) => {
            let a = eval_node(l, x, t)?;
            let b = eval_node(r, x, t)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero {
                            expr: node.to_string(),
                        });
                    }
                    a / b
                }
                BinOp::Pow => {
                    let v = a.powf(b);
                    if !v.is_finite() && a.is_finite() && b.is_finite() {
                        return Err(EvalError::NonFinite {
                            expr: node.to_string(),
                        });
                    }
                    v
                }
            }
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], x, t)?;
            match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tanh => a.tanh(),
                Func::Exp => a.exp(),
                Func::Abs => a.abs(),
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(EvalError::NegativeSqrt {
                            expr: node.to_string(),
                        });
                    }
                    a.sqrt()
                }
                Func::Ln => {
                    if a <= 0.0 {
                        return Err(EvalError::NonPositiveLog {
                            expr: node.to_string(),
                        });
                    }
                    a.ln()
                }
                Func::Min => a.min(eval_node(&args[1], x, t)?),
                Func::Max => a.max(eval_node(&args[1], x, t)?),
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(c) => format!("operator `{c}`"),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                kind: TokenKind::Num(value),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(src[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let kind = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => TokenKind::Op(c as char),
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b',' => TokenKind::Comma,
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!(
                        "unexpected character `{}`",
                        src[start..].chars().next().unwrap_or('?')
                    ),
                })
            }
        };
        out.push(Token {
            kind,
            offset: start,
        });
        i += 1;
    }
    Ok(out)
}

const PREFIX_NEG_BP: u8 = 5;

fn infix_binding(op: char) -> Option<(u8, u8, BinOp)> {
    Some(match op {
        '+' => (1, 2, BinOp::Add),
        '-' => (1, 2, BinOp::Sub),
        '*' => (3, 4, BinOp::Mul),
        '/' => (3, 4, BinOp::Div),
        '^' => (8, 7, BinOp::Pow),
        _ => return None,
    })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn offset(&self) -> usize {
        self.peek().map(|t| t.offset).unwrap_or(self.end)
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<(), ParseError> {
        let offset = self.offset();
        match self.next() {
            Some(t) if t.kind == kind => Ok(()),
            Some(t) => Err(ParseError::Syntax {
                offset,
                message: format!("expected {what}, found {}", t.kind.describe()),
            }),
            None => Err(ParseError::Syntax {
                offset,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Node, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let op = match self.peek() {
                Some(Token {
                    kind: TokenKind::Op(c),
                    ..
                }) => *c,
                _ => break,
            };
            let (l_bp, r_bp, bin) = infix_binding(op).expect("lexer only emits known operators");
            if l_bp < min_bp {
                break;
            }
            self.next();
            let rhs = self.expr(r_bp)?;
            lhs = Node::Bin(bin, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Node, ParseError> {
        let offset = self.offset();
        let tok = self.next().ok_or(ParseError::Syntax {
            offset,
            message: "unexpected end of input".into(),
        })?;
        match tok.kind {
            TokenKind::Num(v) => Ok(Node::Num(v)),
            TokenKind::Op('-') => {
                let inner = self.expr(PREFIX_NEG_BP)?;
                Ok(Node::Neg(Box::new(inner)))
            }
            TokenKind::LParen => {
                let inner = self.expr(0)?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => match name.as_str() {
                "x" => Ok(Node::Var(Var::X)),
                "t" => Ok(Node::Var(Var::T)),
                "pi" => Ok(Node::Pi),
                _ => {
                    let func = Func::lookup(&name).ok_or_else(|| ParseError::UnknownIdentifier {
                        name: name.clone(),
                        offset: tok.offset,
                    })?;
                    self.expect(TokenKind::LParen, "`(` after function name")?;
                    let mut args = Vec::new();
                    if matches!(self.peek(), Some(t) if t.kind == TokenKind::RParen) {
                        self.next();
                    } else {
                        loop {
                            args.push(self.expr(0)?);
                            let off = self.offset();
                            match self.next() {
                                Some(Token {
                                    kind: TokenKind::Comma,
                                    ..
                                }) => continue,
                                Some(Token {
                                    kind: TokenKind::RParen,
                                    ..
                                }) => break,
                                other => {
                                    return Err(ParseError::Syntax {
                                        offset: off,
                                        message: format!(
                                            "expected `,` or `)`, found {}",
                                            other
                                                .map(|t| t.kind.describe())
                                                .unwrap_or_else(|| "end of input".into())
                                        ),
                                    })
                                }
                            }
                        }
                    }
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity {
                            name,
                            offset: tok.offset,
                            expected: func.arity(),
                            found: args.len(),
                        });
                    }
                    Ok(Node::Call(func, args))
                }
            },
            other => Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, x: f64, t: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, t).unwrap()
    }

    #[test]
    fn variables_and_simple_forms() {
        assert_eq!(Expr::parse("x").unwrap().root, Node::Var(Var::X));
        assert_eq!(ev("x", 3.0, 0.0), 3.0);
        assert_eq!(ev("2*x+sin(t)", 1.0, 0.0), 2.0);
        assert_eq!(ev("1+2*3", 0.0, 0.0), 7.0);
        assert_eq!(ev("x^2", -2.0, 0.0), 4.0);
        assert_eq!(ev("exp(0)*5", 0.0, 0.0), 5.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("8-3-2", 0.0, 0.0), 3.0);
        assert_eq!(ev("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("-2*3", 0.0, 0.0), -6.0);
        assert_eq!(ev("max(x, t) - min(x, t)", 1.0, 4.0), 3.0);
        assert!((ev("cos(pi)", 0.0, 0.0) + 1.0).abs() < 1e-15);
        assert_eq!(ev("1.5e2 + 2E-1", 0.0, 0.0), 150.2);
    }

    #[test]
    fn parse_errors_are_located() {
        assert_eq!(Expr::parse("").unwrap_err(), ParseError::Empty);
        assert_eq!(Expr::parse("   ").unwrap_err(), ParseError::Empty);
        match Expr::parse("2x").unwrap_err() {
            ParseError::Syntax { offset, .. } => assert_eq!(offset, 1),
            e => panic!("unexpected {e:?}"),
        }
        match Expr::parse("y + 1").unwrap_err() {
            ParseError::UnknownIdentifier { name, offset } => {
                assert_eq!(name, "y");
                assert_eq!(offset, 0);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(
            Expr::parse("sin(x, t)").unwrap_err(),
            ParseError::Arity { expected: 1, found: 2, .. }
        ));
        assert!(matches!(
            Expr::parse("max(x)").unwrap_err(),
            ParseError::Arity { expected: 2, found: 1, .. }
        ));
        assert!(matches!(Expr::parse("(1+2").unwrap_err(), ParseError::Syntax { offset: 4, .. }));
        assert!(matches!(Expr::parse("1 $ 2").unwrap_err(), ParseError::Syntax { offset: 2, .. }));
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = Expr::parse("1 + 1/x").unwrap();
        match e.eval(0.0, 0.0).unwrap_err() {
            EvalError::DivisionByZero { expr } => assert_eq!(expr, "(1.0 / x)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Expr::parse("sqrt(x)").unwrap().eval(-1.0, 0.0),
            Err(EvalError::NegativeSqrt { .. })
        ));
        assert!(matches!(
            Expr::parse("ln(t)").unwrap().eval(0.0, 0.0),
            Err(EvalError::NonPositiveLog { .. })
        ));
    }

    #[test]
    fn variable_usage_flags() {
        let e = Expr::parse("sin(x) + 2").unwrap();
        assert!(e.uses_x());
        assert!(!e.uses_t());
    }

    #[test]
    fn printed_form_round_trips() {
        for src in ["1+2*3", "-x^2", "2^3^2", "max(x, -t) / (1 + exp(-t))", "pi*x", "1e-20+x"] {
            let a = Expr::parse(src).unwrap();
            let b = Expr::parse(&a.to_string()).unwrap();
            assert_eq!(a, b, "{src}");
        }
    }

    fn int_tree() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0i32..10).prop_map(|v| Node::Num(v as f64)),
            Just(Node::Var(Var::X)),
            Just(Node::Var(Var::T)),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Node::Neg(Box::new(e))),
                (inner.clone(), inner.clone(), 0usize..3).prop_map(|(l, r, op)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul][op];
                    Node::Bin(op, Box::new(l), Box::new(r))
                }),
                (inner.clone(), 0u32..3).prop_map(|(l, p)| Node::Bin(
                    BinOp::Pow,
                    Box::new(l),
                    Box::new(Node::Num(p as f64))
                )),
            ]
        })
    }

    proptest! {
        #[test]
        fn printed_tree_evaluates_like_original(tree in int_tree(), x in -3i32..4, t in -3i32..4) {
            let original = Expr::from_node(tree);
            let reparsed = Expr::parse(&original.to_string()).unwrap();
            let (x, t) = (x as f64, t as f64);
            let a = original.eval(x, t).unwrap();
            let b = reparsed.eval(x, t).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            let again = Expr::parse(&reparsed.to_string()).unwrap();
            prop_assert_eq!(again, reparsed);
        }

        #[test]
        fn evaluation_is_pure(x in -10.0f64..10.0, t in 0.0f64..5.0) {
            let e = Expr::parse("exp(-t)*sin(pi*x) + tanh(x*t) - abs(x)^0.5").unwrap();
            let a = e.eval(x, t).unwrap();
            let b = e.eval(x, t).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
