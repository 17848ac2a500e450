//! Concrete syntax: lexer, recursive-descent parser, and elaboration of
//! surface syntax into the core calculi.
//!
//! Operation names are resolved by scope: an identifier bound by `fun`,
//! `do`, or a handler clause is a variable; an unbound identifier denotes an
//! operation. A bare operation elaborates to its generic effect, and
//! computations in value positions are sequenced into call-by-value order
//! with fresh `do`-bindings.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dynstate::{DynComputation, DynProgram, DynValue, ParamSignature};
use crate::syntax::{
    free_vars_comp, fresh_var, is_reserved_op_name, Computation, GlobalSignature, Handler, Mode,
    OpClause, OpName, Param, Program, TypeExpr, Value, Var,
};
use crate::{dynstate, syntax};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    fn new(pos: Pos, msg: impl Into<String>) -> Self {
        ParseError {
            line: pos.0,
            col: pos.1,
            msg: msg.into(),
        }
    }
}

type Pos = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Do,
    In,
    If,
    Then,
    Else,
    Fun,
    Return,
    With,
    Handle,
    HandlerKw,
    Dlet,
    ModeKw,
    SignatureKw,
    ParamsKw,
    True,
    False,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Pipe,
    Semi,
    Colon,
    Dot,
    Arrow,
    LArrow,
    ColonEq,
    Eq,
    Bang,
    Plus,
    Dollar,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    macro_rules! push {
        ($tok:expr, $pos:expr) => {
            toks.push(Token { tok: $tok, pos: $pos })
        };
    }
    while let Some(&c) = chars.peek() {
        let pos = (line, col);
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => {
                chars.next();
                col += 1;
                push!(Tok::LParen, pos);
            }
            ')' => {
                chars.next();
                col += 1;
                push!(Tok::RParen, pos);
            }
            '{' => {
                chars.next();
                col += 1;
                push!(Tok::LBrace, pos);
            }
            '}' => {
                chars.next();
                col += 1;
                push!(Tok::RBrace, pos);
            }
            '|' => {
                chars.next();
                col += 1;
                push!(Tok::Pipe, pos);
            }
            ';' => {
                chars.next();
                col += 1;
                push!(Tok::Semi, pos);
            }
            '.' => {
                chars.next();
                col += 1;
                push!(Tok::Dot, pos);
            }
            '+' => {
                chars.next();
                col += 1;
                push!(Tok::Plus, pos);
            }
            '$' => {
                chars.next();
                col += 1;
                push!(Tok::Dollar, pos);
            }
            '!' => {
                chars.next();
                col += 1;
                push!(Tok::Bang, pos);
            }
            '=' => {
                chars.next();
                col += 1;
                push!(Tok::Eq, pos);
            }
            ':' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    push!(Tok::ColonEq, pos);
                } else {
                    push!(Tok::Colon, pos);
                }
            }
            '-' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'>') {
                    chars.next();
                    col += 1;
                    push!(Tok::Arrow, pos);
                } else if chars.peek().is_some_and(|c| c.is_ascii_digit()) {
                    let mut s = String::from("-");
                    while let Some(&c) = chars.peek() {
                        if c.is_ascii_digit() {
                            s.push(c);
                            chars.next();
                            col += 1;
                        } else {
                            break;
                        }
                    }
                    let n: i64 = s
                        .parse()
                        .map_err(|_| ParseError::new(pos, "integer literal out of range"))?;
                    push!(Tok::Int(n), pos);
                } else {
                    return Err(ParseError::new(pos, "expected `->` or a negative integer"));
                }
            }
            '<' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'-') {
                    chars.next();
                    col += 1;
                    push!(Tok::LArrow, pos);
                } else {
                    return Err(ParseError::new(pos, "expected `<-`"));
                }
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let n: i64 = s
                    .parse()
                    .map_err(|_| ParseError::new(pos, "integer literal out of range"))?;
                push!(Tok::Int(n), pos);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '\'' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let tok = match s.as_str() {
                    "do" => Tok::Do,
                    "in" => Tok::In,
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    "fun" => Tok::Fun,
                    "return" => Tok::Return,
                    "with" => Tok::With,
                    "handle" => Tok::Handle,
                    "handler" => Tok::HandlerKw,
                    "dlet" => Tok::Dlet,
                    "mode" => Tok::ModeKw,
                    "signature" => Tok::SignatureKw,
                    "params" => Tok::ParamsKw,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(s),
                };
                push!(tok, pos);
            }
            other => {
                return Err(ParseError::new(pos, format!("unexpected character `{other}`")));
            }
        }
    }
    toks.push(Token {
        tok: Tok::Eof,
        pos: (line, col),
    });
    Ok(toks)
}

/// Surface syntax, before call-by-value elaboration.
#[derive(Debug, Clone)]
enum Surface {
    Ident(String, Pos),
    True,
    False,
    Unit,
    Int(i64),
    Fun(Vec<(String, Pos)>, Box<Surface>),
    HandlerLit(SurfHandler, Pos),
    Return(Box<Surface>),
    Do(String, Box<Surface>, Box<Surface>),
    If(Box<Surface>, Box<Surface>, Box<Surface>),
    App(Box<Surface>, Box<Surface>),
    Seq(Box<Surface>, Box<Surface>),
    /// `op(c; y. c)` with positions of the operation and the binder.
    OpCallFull(String, Pos, Box<Surface>, String, Box<Surface>),
    With(Box<Surface>, Box<Surface>),
    Add(Box<Surface>, Box<Surface>),
    Deref(String, Pos),
    Assign(String, Pos, Box<Surface>),
    DLet(String, Pos, Box<Surface>, Box<Surface>),
}

#[derive(Debug, Clone)]
struct SurfHandler {
    ret: (String, Pos, Box<Surface>),
    clauses: Vec<(String, Pos, String, String, Box<Surface>)>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_pos(&self) -> Pos {
        self.toks[self.pos].pos
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Pos, ParseError> {
        let t = self.next();
        if t.tok == tok {
            Ok(t.pos)
        } else {
            Err(ParseError::new(
                t.pos,
                format!("expected {what}, found {:?}", t.tok),
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos), ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(s) => Ok((s, t.pos)),
            other => Err(ParseError::new(
                t.pos,
                format!("expected {what}, found {other:?}"),
            )),
        }
    }

    /// A binder position: identifiers with reserved operation prefixes are
    /// refused here so user programs cannot collide with translated ones.
    fn binder(&mut self, what: &str) -> Result<(String, Pos), ParseError> {
        let (name, pos) = self.ident(what)?;
        if is_reserved_op_name(&name) {
            return Err(ParseError::new(
                pos,
                format!("`{name}` is reserved for translated operations and cannot be bound"),
            ));
        }
        Ok((name, pos))
    }

    fn param(&mut self) -> Result<(String, Pos), ParseError> {
        self.expect(Tok::Dollar, "`$`")?;
        let (name, pos) = self.ident("a parameter name")?;
        if is_reserved_op_name(&name) {
            return Err(ParseError::new(
                pos,
                format!("`${name}` collides with reserved translated operation names"),
            ));
        }
        Ok((name, pos))
    }

    fn parse_comp(&mut self) -> Result<Surface, ParseError> {
        match self.peek() {
            Tok::Do => {
                self.next();
                let (x, _) = self.binder("a variable to bind")?;
                self.expect(Tok::LArrow, "`<-`")?;
                let c1 = self.parse_comp()?;
                self.expect(Tok::In, "`in`")?;
                let c2 = self.parse_comp()?;
                Ok(Surface::Do(x, Box::new(c1), Box::new(c2)))
            }
            Tok::If => {
                self.next();
                let cond = self.parse_add()?;
                self.expect(Tok::Then, "`then`")?;
                let t = self.parse_comp()?;
                self.expect(Tok::Else, "`else`")?;
                let e = self.parse_comp()?;
                Ok(Surface::If(Box::new(cond), Box::new(t), Box::new(e)))
            }
            Tok::Fun => {
                self.next();
                let mut params = vec![self.binder("a function parameter")?];
                while matches!(self.peek(), Tok::Ident(_)) {
                    params.push(self.binder("a function parameter")?);
                }
                self.expect(Tok::Arrow, "`->`")?;
                let body = self.parse_comp()?;
                Ok(Surface::Fun(params, Box::new(body)))
            }
            Tok::With => {
                self.next();
                let h = self.parse_add()?;
                self.expect(Tok::Handle, "`handle`")?;
                let c = self.parse_comp()?;
                Ok(Surface::With(Box::new(h), Box::new(c)))
            }
            Tok::Dlet => {
                self.next();
                let (p, ppos) = self.param()?;
                self.expect(Tok::Eq, "`=`")?;
                let v = self.parse_comp()?;
                self.expect(Tok::In, "`in`")?;
                let body = self.parse_comp()?;
                Ok(Surface::DLet(p, ppos, Box::new(v), Box::new(body)))
            }
            _ => {
                let head = match self.peek() {
                    Tok::Return => {
                        self.next();
                        let arg = self.parse_add()?;
                        Surface::Return(Box::new(arg))
                    }
                    Tok::Dollar => {
                        let (p, ppos) = self.param()?;
                        self.expect(Tok::ColonEq, "`:=`")?;
                        let rhs = self.parse_add()?;
                        Surface::Assign(p, ppos, Box::new(rhs))
                    }
                    _ => self.parse_add()?,
                };
                if *self.peek() == Tok::Semi {
                    self.next();
                    let rest = self.parse_comp()?;
                    Ok(Surface::Seq(Box::new(head), Box::new(rest)))
                } else {
                    Ok(head)
                }
            }
        }
    }

    fn parse_add(&mut self) -> Result<Surface, ParseError> {
        let mut left = self.parse_app()?;
        while *self.peek() == Tok::Plus {
            self.next();
            let right = self.parse_app()?;
            left = Surface::Add(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn starts_unary(tok: &Tok) -> bool {
        matches!(
            tok,
            Tok::Ident(_)
                | Tok::Int(_)
                | Tok::True
                | Tok::False
                | Tok::LParen
                | Tok::Bang
                | Tok::HandlerKw
        )
    }

    fn parse_app(&mut self) -> Result<Surface, ParseError> {
        let mut head = self.parse_unary()?;
        while Self::starts_unary(self.peek()) {
            let arg = self.parse_unary()?;
            head = Surface::App(Box::new(head), Box::new(arg));
        }
        Ok(head)
    }

    fn parse_unary(&mut self) -> Result<Surface, ParseError> {
        if *self.peek() == Tok::Bang {
            self.next();
            let (p, ppos) = self.param()?;
            Ok(Surface::Deref(p, ppos))
        } else {
            self.parse_atom()
        }
    }

    fn parse_atom(&mut self) -> Result<Surface, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::LParen => {
                if *self.peek() == Tok::RParen {
                    self.next();
                    Ok(Surface::Unit)
                } else {
                    let c = self.parse_comp()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(c)
                }
            }
            Tok::True => Ok(Surface::True),
            Tok::False => Ok(Surface::False),
            Tok::Int(n) => Ok(Surface::Int(n)),
            Tok::HandlerKw => self.parse_handler(t.pos),
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    // Try the full operation-call form `op(c; y. c)`;
                    // on failure fall back to `ident (c)` application.
                    let save = self.pos;
                    if let Some(surf) = self.try_opcall(&name, t.pos) {
                        return Ok(surf);
                    }
                    self.pos = save;
                }
                Ok(Surface::Ident(name, t.pos))
            }
            other => Err(ParseError::new(
                t.pos,
                format!("expected an expression, found {other:?}"),
            )),
        }
    }

    fn try_opcall(&mut self, op: &str, oppos: Pos) -> Option<Surface> {
        debug_assert_eq!(*self.peek(), Tok::LParen);
        self.next();
        // The argument is parsed below `;` so that the clause separator is
        // unambiguous; parenthesize prefix forms in argument position.
        let arg = self.parse_add().ok()?;
        if *self.peek() != Tok::Semi {
            return None;
        }
        self.next();
        let (y, _) = self.binder("a continuation variable").ok()?;
        if *self.peek() != Tok::Dot {
            return None;
        }
        self.next();
        let cont = self.parse_comp().ok()?;
        if *self.peek() != Tok::RParen {
            return None;
        }
        self.next();
        Some(Surface::OpCallFull(
            op.to_string(),
            oppos,
            Box::new(arg),
            y,
            Box::new(cont),
        ))
    }

    fn parse_handler(&mut self, pos: Pos) -> Result<Surface, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut ret = None;
        let mut clauses: Vec<(String, Pos, String, String, Box<Surface>)> = Vec::new();
        loop {
            if *self.peek() == Tok::Return {
                let rpos = self.peek_pos();
                self.next();
                let (x, _) = self.binder("the return-clause variable")?;
                self.expect(Tok::Arrow, "`->`")?;
                let body = self.parse_comp()?;
                if ret.is_some() {
                    return Err(ParseError::new(rpos, "duplicate return clause"));
                }
                ret = Some((x, rpos, Box::new(body)));
            } else {
                let (op, oppos) = self.ident("an operation clause")?;
                self.expect(Tok::LParen, "`(`")?;
                let (arg, _) = self.binder("the clause argument")?;
                self.expect(Tok::Semi, "`;`")?;
                let (k, kpos) = self.binder("the continuation variable")?;
                self.expect(Tok::RParen, "`)`")?;
                if arg == k {
                    return Err(ParseError::new(
                        kpos,
                        "clause argument and continuation must be distinct",
                    ));
                }
                self.expect(Tok::Arrow, "`->`")?;
                let body = self.parse_comp()?;
                if clauses.iter().any(|(o, _, _, _, _)| *o == op) {
                    return Err(ParseError::new(
                        oppos,
                        format!("duplicate clause for operation `{op}`"),
                    ));
                }
                clauses.push((op, oppos, arg, k, Box::new(body)));
            }
            match self.next() {
                Token { tok: Tok::Pipe, .. } => continue,
                Token {
                    tok: Tok::RBrace, ..
                } => break,
                Token { tok, pos } => {
                    return Err(ParseError::new(
                        pos,
                        format!("expected `|` or `}}` in handler, found {tok:?}"),
                    ))
                }
            }
        }
        let ret = ret.ok_or_else(|| ParseError::new(pos, "handler is missing a return clause"))?;
        Ok(Surface::HandlerLit(SurfHandler { ret, clauses }, pos))
    }

    fn parse_vtype(&mut self) -> Result<TypeExpr, ParseError> {
        let left = self.parse_vtype_atom()?;
        if *self.peek() == Tok::Arrow {
            self.next();
            let right = self.parse_vtype()?;
            Ok(TypeExpr::Arrow(Box::new(left), Box::new(right)))
        } else {
            Ok(left)
        }
    }

    fn parse_vtype_atom(&mut self) -> Result<TypeExpr, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == "bool" => Ok(TypeExpr::Bool),
            Tok::Ident(s) if s == "unit" => Ok(TypeExpr::Unit),
            Tok::Ident(s) if s == "int" => Ok(TypeExpr::Int),
            Tok::LParen => {
                let ty = self.parse_vtype()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(ty)
            }
            other => Err(ParseError::new(
                t.pos,
                format!("expected a type (`bool`, `unit`, `int`, or parentheses), found {other:?}"),
            )),
        }
    }
}

/// A parsed and elaborated source file: either a handler-calculus program
/// or a dynamic-state program, depending on the headers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceProgram {
    Handler(Program),
    Dyn(DynProgram),
}

pub fn parse_source(text: &str) -> Result<SourceProgram, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };

    let mut mode: Option<(Mode, Pos)> = None;
    let mut signature: Option<GlobalSignature> = None;
    let mut params: Option<(ParamSignature, Pos)> = None;
    loop {
        match p.peek() {
            Tok::ModeKw => {
                let pos = p.peek_pos();
                p.next();
                let (name, npos) = p.ident("`local`, `coarse`, or `none`")?;
                let m = match name.as_str() {
                    "local" => Mode::Local,
                    "coarse" => Mode::Coarse,
                    "none" => Mode::None,
                    other => {
                        return Err(ParseError::new(
                            npos,
                            format!("unknown mode `{other}` (expected local, coarse, or none)"),
                        ))
                    }
                };
                if mode.is_some() {
                    return Err(ParseError::new(pos, "duplicate mode header"));
                }
                p.expect(Tok::Semi, "`;`")?;
                mode = Some((m, pos));
            }
            Tok::SignatureKw => {
                let pos = p.peek_pos();
                p.next();
                if signature.is_some() {
                    return Err(ParseError::new(pos, "duplicate signature header"));
                }
                p.expect(Tok::LBrace, "`{`")?;
                let mut sig = GlobalSignature::new();
                while *p.peek() != Tok::RBrace {
                    let (op, oppos) = p.ident("an operation name")?;
                    p.expect(Tok::Colon, "`:`")?;
                    let ty = p.parse_vtype()?;
                    let (a, b) = match ty {
                        TypeExpr::Arrow(a, b) => (*a, *b),
                        _ => {
                            return Err(ParseError::new(
                                oppos,
                                "operation types must have the shape A -> B",
                            ))
                        }
                    };
                    p.expect(Tok::Semi, "`;`")?;
                    if sig.insert(OpName::new(op.clone()), (a, b)).is_some() {
                        return Err(ParseError::new(
                            oppos,
                            format!("duplicate signature entry for `{op}`"),
                        ));
                    }
                }
                p.next(); // consume RBrace
                signature = Some(sig);
            }
            Tok::ParamsKw => {
                let pos = p.peek_pos();
                p.next();
                if params.is_some() {
                    return Err(ParseError::new(pos, "duplicate params header"));
                }
                p.expect(Tok::LBrace, "`{`")?;
                let mut sig = ParamSignature::new();
                while *p.peek() != Tok::RBrace {
                    let (name, npos) = p.param()?;
                    p.expect(Tok::Colon, "`:`")?;
                    let ty = p.parse_vtype()?;
                    p.expect(Tok::Semi, "`;`")?;
                    if sig.insert(Param::new(name.clone()), ty).is_some() {
                        return Err(ParseError::new(
                            npos,
                            format!("duplicate params entry for `${name}`"),
                        ));
                    }
                }
                p.next();
                params = Some((sig, pos));
            }
            _ => break,
        }
    }

    let body = p.parse_comp()?;
    let end = p.next();
    if end.tok != Tok::Eof {
        return Err(ParseError::new(
            end.pos,
            format!("unexpected {:?} after the program body", end.tok),
        ));
    }

    if let Some((params, ppos)) = params {
        if let Some((_, mpos)) = mode {
            return Err(ParseError::new(
                mpos,
                "dynamic-state programs take a params header, not a mode header",
            ));
        }
        if signature.is_some() {
            return Err(ParseError::new(
                ppos,
                "dynamic-state programs take a params header, not a signature header",
            ));
        }
        let body = Elaborator::new().dyn_comp(&body)?;
        return Ok(SourceProgram::Dyn(DynProgram { params, body }));
    }

    let mode = mode.map(|(m, _)| m).unwrap_or(Mode::Local);
    match mode {
        Mode::Local => {
            if signature.is_some() {
                return Err(ParseError::new(
                    (1, 1),
                    "local mode takes no signature header; signatures are inferred",
                ));
            }
        }
        Mode::Coarse | Mode::None => {
            if signature.is_none() {
                return Err(ParseError::new(
                    (1, 1),
                    format!("mode {mode} requires a signature header"),
                ));
            }
        }
    }
    let body = Elaborator::new().comp(&body)?;
    Ok(SourceProgram::Handler(Program {
        mode,
        signature,
        body,
    }))
}

/// Parses a bare handler-calculus computation (no headers).
pub fn parse_computation(text: &str) -> Result<Computation, ParseError> {
    match parse_source(text)? {
        SourceProgram::Handler(p) => Ok(p.body),
        SourceProgram::Dyn(_) => unreachable!("no params header was supplied"),
    }
}

/// Parses a bare handler-calculus value, given as `return v`-less syntax.
pub fn parse_value(text: &str) -> Result<Value, ParseError> {
    let c = parse_computation(&format!("return ({text})"))?;
    match c {
        Computation::Return(v) => Ok(v),
        _ => Err(ParseError {
            line: 1,
            col: 1,
            msg: "expected a value".to_string(),
        }),
    }
}

/// Parses a bare dynamic-state computation (no headers).
pub fn parse_dyn_computation(text: &str) -> Result<DynComputation, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let body = p.parse_comp()?;
    let end = p.next();
    if end.tok != Tok::Eof {
        return Err(ParseError::new(
            end.pos,
            format!("unexpected {:?} after the computation", end.tok),
        ));
    }
    Elaborator::new().dyn_comp(&body)
}

/// Elaborates surface syntax into the core calculi, resolving identifiers
/// by scope and inserting call-by-value `do`-bindings.
struct Elaborator {
    scope: Vec<Var>,
}

/// A value-position argument: either already a value, or a computation that
/// must be bound to a fresh variable first.
enum Part {
    Val(Value),
    Bind(Computation),
}

enum DynPart {
    Val(DynValue),
    Bind(DynComputation),
}

impl Elaborator {
    fn new() -> Self {
        Elaborator { scope: Vec::new() }
    }

    fn bound(&self, name: &str) -> bool {
        self.scope.iter().any(|v| v.as_str() == name)
    }

    /// `Some(v)` when the surface form is a value.
    fn value_view(&mut self, s: &Surface) -> Result<Option<Value>, ParseError> {
        Ok(match s {
            Surface::Ident(name, _) => {
                if self.bound(name) {
                    Some(Value::Var(Var::new(name.clone())))
                } else {
                    // A bare operation denotes its generic effect.
                    let op = OpName::new(name.clone());
                    let x = Var::new("x");
                    let y = Var::new("y");
                    Some(Value::Lambda(
                        x.clone(),
                        Box::new(Computation::OpCall(
                            op,
                            Value::Var(x),
                            y.clone(),
                            Box::new(Computation::Return(Value::Var(y))),
                        )),
                    ))
                }
            }
            Surface::True => Some(Value::True),
            Surface::False => Some(Value::False),
            Surface::Unit => Some(Value::Unit),
            Surface::Int(n) => Some(Value::Int(*n)),
            Surface::Fun(params, body) => Some(self.lambda(params, body)?),
            Surface::HandlerLit(h, _) => Some(self.handler(h)?),
            _ => None,
        })
    }

    fn lambda(&mut self, params: &[(String, Pos)], body: &Surface) -> Result<Value, ParseError> {
        let (name, _) = &params[0];
        self.scope.push(Var::new(name.clone()));
        let inner = if params.len() == 1 {
            self.comp(body)?
        } else {
            let v = self.lambda(&params[1..], body)?;
            Computation::Return(v)
        };
        self.scope.pop();
        Ok(Value::Lambda(Var::new(name.clone()), Box::new(inner)))
    }

    fn handler(&mut self, h: &SurfHandler) -> Result<Value, ParseError> {
        let (x, _, body) = &h.ret;
        self.scope.push(Var::new(x.clone()));
        let ret_body = self.comp(body)?;
        self.scope.pop();
        let mut clauses = BTreeMap::new();
        for (op, _, arg, k, body) in &h.clauses {
            self.scope.push(Var::new(arg.clone()));
            self.scope.push(Var::new(k.clone()));
            let body = self.comp(body)?;
            self.scope.pop();
            self.scope.pop();
            clauses.insert(
                OpName::new(op.clone()),
                OpClause {
                    arg: Var::new(arg.clone()),
                    cont: Var::new(k.clone()),
                    body,
                },
            );
        }
        Ok(Value::Handler(Box::new(Handler {
            ret_var: Var::new(x.clone()),
            ret_body,
            clauses,
        })))
    }

    fn part(&mut self, s: &Surface) -> Result<Part, ParseError> {
        match self.value_view(s)? {
            Some(v) => Ok(Part::Val(v)),
            None => Ok(Part::Bind(self.comp(s)?)),
        }
    }

    /// Sequences computed parts in order, then builds the core form.
    fn chain(
        &mut self,
        parts: Vec<Part>,
        build: impl FnOnce(Vec<Value>) -> Computation,
    ) -> Computation {
        let mut values = Vec::with_capacity(parts.len());
        let mut binds: Vec<(Var, Computation)> = Vec::new();
        let mut avoid = std::collections::BTreeSet::new();
        for part in &parts {
            match part {
                Part::Val(v) => avoid.extend(syntax::free_vars_value(v)),
                Part::Bind(c) => avoid.extend(free_vars_comp(c)),
            }
        }
        for part in parts {
            match part {
                Part::Val(v) => values.push(v),
                Part::Bind(c) => {
                    let x = fresh_var("a", &avoid);
                    avoid.insert(x.clone());
                    values.push(Value::Var(x.clone()));
                    binds.push((x, c));
                }
            }
        }
        let mut acc = build(values);
        for (x, c) in binds.into_iter().rev() {
            acc = Computation::Do(x, Box::new(c), Box::new(acc));
        }
        acc
    }

    fn comp(&mut self, s: &Surface) -> Result<Computation, ParseError> {
        match s {
            Surface::Return(arg) => {
                let part = self.part(arg)?;
                Ok(self.chain(vec![part], |mut vs| Computation::Return(vs.remove(0))))
            }
            Surface::Do(x, c1, c2) => {
                let c1 = self.comp(c1)?;
                self.scope.push(Var::new(x.clone()));
                let c2 = self.comp(c2)?;
                self.scope.pop();
                Ok(Computation::Do(
                    Var::new(x.clone()),
                    Box::new(c1),
                    Box::new(c2),
                ))
            }
            Surface::Seq(c1, c2) => {
                let c1 = self.comp(c1)?;
                let c2 = self.comp(c2)?;
                let dummy = fresh_var("_", &free_vars_comp(&c2));
                Ok(Computation::Do(dummy, Box::new(c1), Box::new(c2)))
            }
            Surface::If(cond, t, e) => {
                let cond = self.part(cond)?;
                let t = self.comp(t)?;
                let e = self.comp(e)?;
                Ok(self.chain(vec![cond], move |mut vs| {
                    Computation::If(vs.remove(0), Box::new(t), Box::new(e))
                }))
            }
            Surface::App(f, a) => {
                // An unbound identifier in function position is an
                // operation; `op c` is its generic-effect application.
                if let Surface::Ident(name, _) = &**f {
                    if !self.bound(name) {
                        let op = OpName::new(name.clone());
                        let arg = self.part(a)?;
                        return Ok(self.chain(vec![arg], move |mut vs| {
                            let y = Var::new("y");
                            Computation::OpCall(
                                op,
                                vs.remove(0),
                                y.clone(),
                                Box::new(Computation::Return(Value::Var(y))),
                            )
                        }));
                    }
                }
                let fp = self.part(f)?;
                let ap = self.part(a)?;
                Ok(self.chain(vec![fp, ap], |mut vs| {
                    let a = vs.pop().unwrap();
                    let f = vs.pop().unwrap();
                    Computation::App(f, a)
                }))
            }
            Surface::OpCallFull(op, oppos, arg, y, cont) => {
                if self.bound(op) {
                    return Err(ParseError::new(
                        *oppos,
                        format!("`{op}` is bound as a variable but used as an operation"),
                    ));
                }
                let opn = OpName::new(op.clone());
                let arg = self.part(arg)?;
                self.scope.push(Var::new(y.clone()));
                let cont = self.comp(cont)?;
                self.scope.pop();
                let y = Var::new(y.clone());
                Ok(self.chain(vec![arg], move |mut vs| {
                    Computation::OpCall(opn, vs.remove(0), y, Box::new(cont))
                }))
            }
            Surface::With(h, c) => {
                let h = self.part(h)?;
                let c = self.comp(c)?;
                Ok(self.chain(vec![h], move |mut vs| {
                    Computation::Handle(vs.remove(0), Box::new(c))
                }))
            }
            Surface::Add(a, b) => {
                let ap = self.part(a)?;
                let bp = self.part(b)?;
                Ok(self.chain(vec![ap, bp], |mut vs| {
                    let b = vs.pop().unwrap();
                    let a = vs.pop().unwrap();
                    Computation::Add(a, b)
                }))
            }
            Surface::Deref(_, pos) | Surface::Assign(_, pos, _) | Surface::DLet(_, pos, _, _) => {
                Err(ParseError::new(
                    *pos,
                    "dynamic-state syntax is only allowed under a params header",
                ))
            }
            Surface::Ident(name, pos) => {
                if self.bound(name) {
                    Err(ParseError::new(
                        *pos,
                        format!("`{name}` is a value; write `return {name}` to use it as a computation"),
                    ))
                } else {
                    Err(ParseError::new(
                        *pos,
                        format!(
                            "bare operation `{name}` is a value (its generic effect); apply it or return it"
                        ),
                    ))
                }
            }
            Surface::True | Surface::False | Surface::Unit | Surface::Int(_) => {
                Err(ParseError::new(
                    (0, 0),
                    "a literal is a value; write `return <literal>`",
                ))
            }
            Surface::Fun(params, _) => Err(ParseError::new(
                params[0].1,
                "a function is a value; write `return (fun ...)`",
            )),
            Surface::HandlerLit(_, pos) => Err(ParseError::new(
                *pos,
                "a handler is a value; write `return (handler {...})`",
            )),
        }
    }

    // ----- dynamic-state elaboration -----

    fn dyn_value_view(&mut self, s: &Surface) -> Result<Option<DynValue>, ParseError> {
        Ok(match s {
            Surface::Ident(name, pos) => {
                if self.bound(name) {
                    Some(DynValue::Var(Var::new(name.clone())))
                } else {
                    return Err(ParseError::new(
                        *pos,
                        format!("unbound variable `{name}` (dynamic-state programs have no operations)"),
                    ));
                }
            }
            Surface::True => Some(DynValue::True),
            Surface::False => Some(DynValue::False),
            Surface::Unit => Some(DynValue::Unit),
            Surface::Int(n) => Some(DynValue::Int(*n)),
            Surface::Fun(params, body) => Some(self.dyn_lambda(params, body)?),
            _ => None,
        })
    }

    fn dyn_lambda(
        &mut self,
        params: &[(String, Pos)],
        body: &Surface,
    ) -> Result<DynValue, ParseError> {
        let (name, _) = &params[0];
        self.scope.push(Var::new(name.clone()));
        let inner = if params.len() == 1 {
            self.dyn_comp(body)?
        } else {
            let v = self.dyn_lambda(&params[1..], body)?;
            DynComputation::Return(v)
        };
        self.scope.pop();
        Ok(DynValue::Lambda(Var::new(name.clone()), Box::new(inner)))
    }

    fn dyn_part(&mut self, s: &Surface) -> Result<DynPart, ParseError> {
        match self.dyn_value_view(s)? {
            Some(v) => Ok(DynPart::Val(v)),
            None => Ok(DynPart::Bind(self.dyn_comp(s)?)),
        }
    }

    fn dyn_chain(
        &mut self,
        parts: Vec<DynPart>,
        build: impl FnOnce(Vec<DynValue>) -> DynComputation,
    ) -> DynComputation {
        let mut values = Vec::with_capacity(parts.len());
        let mut binds: Vec<(Var, DynComputation)> = Vec::new();
        let mut avoid = std::collections::BTreeSet::new();
        for part in &parts {
            match part {
                DynPart::Val(v) => avoid.extend(dynstate::free_vars_dyn_value(v)),
                DynPart::Bind(c) => avoid.extend(dynstate::free_vars_dyn(c)),
            }
        }
        for part in parts {
            match part {
                DynPart::Val(v) => values.push(v),
                DynPart::Bind(c) => {
                    let x = fresh_var("a", &avoid);
                    avoid.insert(x.clone());
                    values.push(DynValue::Var(x.clone()));
                    binds.push((x, c));
                }
            }
        }
        let mut acc = build(values);
        for (x, c) in binds.into_iter().rev() {
            acc = DynComputation::Do(x, Box::new(c), Box::new(acc));
        }
        acc
    }

    fn dyn_comp(&mut self, s: &Surface) -> Result<DynComputation, ParseError> {
        match s {
            Surface::Return(arg) => {
                let part = self.dyn_part(arg)?;
                Ok(self.dyn_chain(vec![part], |mut vs| DynComputation::Return(vs.remove(0))))
            }
            Surface::Do(x, c1, c2) => {
                let c1 = self.dyn_comp(c1)?;
                self.scope.push(Var::new(x.clone()));
                let c2 = self.dyn_comp(c2)?;
                self.scope.pop();
                Ok(DynComputation::Do(
                    Var::new(x.clone()),
                    Box::new(c1),
                    Box::new(c2),
                ))
            }
            Surface::Seq(c1, c2) => {
                let c1 = self.dyn_comp(c1)?;
                let c2 = self.dyn_comp(c2)?;
                let dummy = fresh_var("_", &dynstate::free_vars_dyn(&c2));
                Ok(DynComputation::Do(dummy, Box::new(c1), Box::new(c2)))
            }
            Surface::If(cond, t, e) => {
                let cond = self.dyn_part(cond)?;
                let t = self.dyn_comp(t)?;
                let e = self.dyn_comp(e)?;
                Ok(self.dyn_chain(vec![cond], move |mut vs| {
                    DynComputation::If(vs.remove(0), Box::new(t), Box::new(e))
                }))
            }
            Surface::App(f, a) => {
                let fp = self.dyn_part(f)?;
                let ap = self.dyn_part(a)?;
                Ok(self.dyn_chain(vec![fp, ap], |mut vs| {
                    let a = vs.pop().unwrap();
                    let f = vs.pop().unwrap();
                    DynComputation::App(f, a)
                }))
            }
            Surface::Add(a, b) => {
                let ap = self.dyn_part(a)?;
                let bp = self.dyn_part(b)?;
                Ok(self.dyn_chain(vec![ap, bp], |mut vs| {
                    let b = vs.pop().unwrap();
                    let a = vs.pop().unwrap();
                    DynComputation::Add(a, b)
                }))
            }
            Surface::Deref(p, _) => Ok(DynComputation::Deref(Param::new(p.clone()))),
            Surface::Assign(p, _, rhs) => {
                let part = self.dyn_part(rhs)?;
                let p = Param::new(p.clone());
                Ok(self.dyn_chain(vec![part], move |mut vs| {
                    DynComputation::Assign(p, vs.remove(0))
                }))
            }
            Surface::DLet(p, _, v, body) => {
                let part = self.dyn_part(v)?;
                let body = self.dyn_comp(body)?;
                let p = Param::new(p.clone());
                Ok(self.dyn_chain(vec![part], move |mut vs| {
                    DynComputation::DLet(p, vs.remove(0), Box::new(body))
                }))
            }
            Surface::OpCallFull(_, pos, _, _, _) | Surface::HandlerLit(_, pos) => {
                Err(ParseError::new(
                    *pos,
                    "handler syntax is not allowed in a dynamic-state program",
                ))
            }
            Surface::With(_, _) => Err(ParseError::new(
                (0, 0),
                "handler syntax is not allowed in a dynamic-state program",
            )),
            Surface::Ident(name, pos) => Err(ParseError::new(
                *pos,
                format!("`{name}` is a value; write `return {name}`"),
            )),
            Surface::True | Surface::False | Surface::Unit | Surface::Int(_) => Err(
                ParseError::new((0, 0), "a literal is a value; write `return <literal>`"),
            ),
            Surface::Fun(params, _) => Err(ParseError::new(
                params[0].1,
                "a function is a value; write `return (fun ...)`",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::alpha_eq_comp;

    fn comp(text: &str) -> Computation {
        parse_computation(text).expect("parse failure")
    }

    #[test]
    fn parses_leaf_productions() {
        assert_eq!(comp("return true"), Computation::Return(Value::True));
        let c = comp("do x <- return () in return x");
        let expected = Computation::do_(
            "x",
            Computation::Return(Value::Unit),
            Computation::Return(Value::Var(Var::new("x"))),
        );
        assert!(alpha_eq_comp(&c, &expected));
    }

    #[test]
    fn bare_operation_applications_become_op_calls() {
        // `get ()` elaborates directly to the generic effect call.
        let c = comp("get ()");
        match c {
            Computation::OpCall(op, Value::Unit, y, cont) => {
                assert_eq!(op.as_str(), "get");
                assert!(matches!(*cont, Computation::Return(Value::Var(z)) if z == y));
            }
            other => panic!("expected an operation call, got {other:?}"),
        }
    }

    #[test]
    fn bare_operation_alone_is_its_generic_effect() {
        // `return op` gives fun x -> op(x; y. return y).
        let c = comp("return op");
        let expected = comp("return (fun x -> op(x; y. return y))");
        assert!(alpha_eq_comp(&c, &expected));
    }

    #[test]
    fn application_elaborates_in_cbv_order() {
        // c1 c2 with both computations: do f <- c1 in do a <- c2 in f a
        let c = comp("(return (fun x -> return x)) (f ())");
        match &c {
            Computation::Do(f, _, rest) => match &**rest {
                Computation::Do(a, _, app) => match &**app {
                    Computation::App(Value::Var(vf), Value::Var(va)) => {
                        assert_eq!(vf, f);
                        assert_eq!(va, a);
                    }
                    other => panic!("expected application, got {other:?}"),
                },
                other => panic!("expected inner do, got {other:?}"),
            },
            other => panic!("expected outer do, got {other:?}"),
        }
    }

    #[test]
    fn semicolon_binds_a_fresh_dummy() {
        let c = comp("return (); return true");
        match &c {
            Computation::Do(x, c1, c2) => {
                assert!(matches!(**c1, Computation::Return(Value::Unit)));
                assert!(matches!(**c2, Computation::Return(Value::True)));
                assert!(!free_vars_comp(c2).contains(x));
            }
            other => panic!("expected do, got {other:?}"),
        }
    }

    #[test]
    fn value_in_computation_position_is_rejected() {
        assert!(parse_computation("fun x -> return x").is_err());
        assert!(parse_computation("true").is_err());
    }

    #[test]
    fn reserved_prefixes_cannot_be_bound() {
        assert!(parse_computation("do get_p <- return () in return get_p").is_err());
        assert!(parse_computation("return (fun set_q -> return set_q)").is_err());
    }

    #[test]
    fn mode_headers_are_validated() {
        assert!(parse_source("mode coarse;\nreturn true").is_err());
        assert!(parse_source("mode local;\nsignature { op : unit -> unit; }\nreturn true").is_err());
        let ok = parse_source("mode coarse;\nsignature { op : unit -> unit; }\nreturn true");
        assert!(matches!(ok, Ok(SourceProgram::Handler(p)) if p.mode == Mode::Coarse));
    }

    #[test]
    fn dyn_programs_reject_handler_syntax() {
        let bad = parse_source("params { $p : int; }\nwith h handle return ()");
        assert!(bad.is_err());
        let bad = parse_source("params { $p : int; }\nop(() ; y. return y)");
        assert!(bad.is_err());
        let ok = parse_source("params { $p : int; }\ndlet $p = 1 in !$p");
        assert!(matches!(ok, Ok(SourceProgram::Dyn(_))));
    }

    #[test]
    fn dyn_assignment_of_computed_value() {
        let c = parse_dyn_computation("dlet $p = 1 in $p := 1 + !$p").unwrap();
        // The assignment argument is a computation, so it is do-bound.
        let text = crate::pretty::pretty_dyn(&c);
        let c2 = parse_dyn_computation(&text).unwrap();
        assert!(dynstate::alpha_eq_dyn(&c, &c2));
    }

    #[test]
    fn opcall_backtracking_keeps_parenthesized_application() {
        // `f (g x)` where f, g are bound variables must stay an application.
        let c = comp(
            "do f <- return (fun x -> return x) in do g <- return (fun x -> return x) in do x <- return () in f (g x)",
        );
        let printed = crate::pretty::pretty_comp(&c);
        let c2 = comp(&printed);
        assert!(alpha_eq_comp(&c, &c2));
    }
}
