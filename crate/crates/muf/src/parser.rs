//! Recursive-descent parser with A-normalization of compound arguments.

use std::collections::HashSet;

use crate::ast::{Const, Decl, Expr, Pattern, Program, StreamDecl};
use crate::builtins::is_builtin;
use crate::error::{ParseError, ParseErrorKind};
use crate::lexer::{lex, Tok, Token};

pub fn parse(src: &str) -> Result<Program, ParseError> {
    let lexed = lex(src)?;
    let mut p = Parser {
        toks: lexed.tokens,
        pos: 0,
        fresh: lexed.max_fresh,
        scopes: vec![Vec::new()],
        streams: HashSet::new(),
    };
    p.program()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    fresh: u64,
    scopes: Vec<Vec<String>>,
    streams: HashSet<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError::at(t.line, t.col, msg))
    }

    fn err_kind<T>(&self, kind: ParseErrorKind) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError { line: t.line, col: t.col, kind })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Kw(x) if *x == s)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(x) => {
                self.bump();
                Ok(x)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    fn fresh_name(&mut self) -> String {
        self.fresh += 1;
        format!("${}", self.fresh)
    }

    fn bound(&self, x: &str) -> bool {
        self.scopes.iter().rev().any(|s| s.iter().any(|y| y == x))
    }

    fn push_pattern(&mut self, p: &Pattern) {
        let names = crate::ast::free_pattern_vars(p);
        self.scopes.push(names.into_iter().collect());
    }

    // ---- declarations ----

    fn program(&mut self) -> PResult<Program> {
        let mut decls = Vec::new();
        let mut top: HashSet<String> = HashSet::new();
        let mut last_stream = None;
        while *self.peek() != Tok::Eof {
            let start = self.pos;
            let d = self.decl()?;
            for name in d.bound_names() {
                if !top.insert(name.clone()) {
                    let t = &self.toks[start];
                    return Err(ParseError {
                        line: t.line,
                        col: t.col,
                        kind: ParseErrorKind::Duplicate(name),
                    });
                }
                self.scopes[0].push(name);
            }
            if let Decl::Stream(s) = &d {
                self.streams.insert(s.name.clone());
                last_stream = Some(s.name.clone());
            }
            decls.push(d);
        }
        let main = if self.streams.contains("main") {
            "main".to_string()
        } else {
            match last_stream {
                Some(m) => m,
                None => return self.err("program declares no stream function"),
            }
        };
        Ok(Program { decls, main })
    }

    fn decl(&mut self) -> PResult<Decl> {
        if self.is_kw("fun") {
            // `fun f p = e`
            self.bump();
            let name = self.ident()?;
            let p = self.pattern_atom()?;
            self.expect_sym("=")?;
            self.push_pattern(&p);
            let body = self.expr()?;
            self.scopes.pop();
            return Ok(Decl::Fun(name, p, body));
        }
        self.expect_kw("val")?;
        let pat = self.pattern_tuple()?;
        self.expect_sym("=")?;
        if let Pattern::Var(name) = &pat {
            if self.is_kw("stream") {
                return self.stream_decl(name.clone());
            }
            if self.is_kw("fun") {
                self.bump();
                let p = self.pattern_atom()?;
                self.expect_sym("->")?;
                self.push_pattern(&p);
                let body = self.expr()?;
                self.scopes.pop();
                return Ok(Decl::Fun(name.clone(), p, body));
            }
        }
        let e = self.expr()?;
        Ok(Decl::Val(pat, e))
    }

    fn stream_decl(&mut self, name: String) -> PResult<Decl> {
        self.expect_kw("stream")?;
        self.expect_sym("{")?;
        self.expect_kw("init")?;
        self.expect_sym("=")?;
        let init = self.expr()?;
        self.expect_sym(";")?;
        self.expect_kw("step")?;
        self.expect_sym("(")?;
        let state = self.pattern()?;
        self.expect_sym(",")?;
        let mut rest = vec![self.pattern()?];
        while self.is_sym(",") {
            self.bump();
            rest.push(self.pattern()?);
        }
        self.expect_sym(")")?;
        let input = Pattern::tuple(rest);
        self.expect_sym("=")?;
        self.push_pattern(&Pattern::pair(state.clone(), input.clone()));
        let body = self.expr()?;
        self.scopes.pop();
        if self.is_sym(";") {
            self.bump();
        }
        self.expect_sym("}")?;
        Ok(Decl::Stream(StreamDecl { name, init, state, input, body }))
    }

    // ---- patterns ----

    fn pattern_tuple(&mut self) -> PResult<Pattern> {
        let mut items = vec![self.pattern()?];
        while self.is_sym(",") {
            self.bump();
            items.push(self.pattern()?);
        }
        Ok(Pattern::tuple(items))
    }

    fn pattern(&mut self) -> PResult<Pattern> {
        self.pattern_atom()
    }

    fn pattern_atom(&mut self) -> PResult<Pattern> {
        match self.peek().clone() {
            Tok::Ident(x) => {
                self.bump();
                Ok(Pattern::Var(x))
            }
            Tok::Sym("_") => {
                self.bump();
                Ok(Pattern::Wild)
            }
            Tok::Sym("(") => {
                self.bump();
                if self.is_sym(")") {
                    self.bump();
                    return Ok(Pattern::Unit);
                }
                let p = self.pattern_tuple()?;
                self.expect_sym(")")?;
                Ok(p)
            }
            t => self.err(format!("expected pattern, found {}", describe(&t))),
        }
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<Expr> {
        match self.peek() {
            Tok::Kw("let") => {
                self.bump();
                let p = self.pattern_tuple()?;
                self.expect_sym("=")?;
                let e1 = self.expr()?;
                self.expect_kw("in")?;
                self.push_pattern(&p);
                let e2 = self.expr()?;
                self.scopes.pop();
                Ok(Expr::Let(p, Box::new(e1), Box::new(e2)))
            }
            Tok::Kw("if") => {
                self.bump();
                let c = self.expr()?;
                self.expect_kw("then")?;
                let a = self.expr()?;
                self.expect_kw("else")?;
                let b = self.expr()?;
                let mut binds = Vec::new();
                let c = self.norm(c, &mut binds);
                Ok(wrap(binds, Expr::If(Box::new(c), Box::new(a), Box::new(b))))
            }
            Tok::Kw("fun") => {
                self.bump();
                let p = self.pattern_atom()?;
                self.expect_sym("->")?;
                self.push_pattern(&p);
                let body = self.expr()?;
                self.scopes.pop();
                Ok(Expr::Lambda(p, Box::new(body)))
            }
            _ => self.app(),
        }
    }

    /// Argument of `sample`/`observe`/`unfold`: either parenthesized or an application.
    fn keyword_arg(&mut self) -> PResult<Expr> {
        if self.is_sym("(") {
            self.paren_raw()
        } else {
            self.app()
        }
    }

    fn app(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Kw("sample") => {
                self.bump();
                let arg = self.keyword_arg()?;
                let mut binds = Vec::new();
                let v = self.norm(arg, &mut binds);
                Ok(wrap(binds, Expr::Sample(Box::new(v))))
            }
            Tok::Kw("observe") => {
                self.bump();
                let arg = self.keyword_arg()?;
                let (a, b) = match arg {
                    Expr::Pair(a, b) => (*a, *b),
                    _ => return self.err("observe expects a pair (distribution, value)"),
                };
                let mut binds = Vec::new();
                let a = self.norm(a, &mut binds);
                let b = self.norm(b, &mut binds);
                Ok(wrap(binds, Expr::Observe(Box::new(a), Box::new(b))))
            }
            Tok::Kw("unfold") => {
                self.bump();
                let arg = self.keyword_arg()?;
                let (a, b) = match arg {
                    Expr::Pair(a, b) => (*a, *b),
                    _ => return self.err("unfold expects a pair (instance, input)"),
                };
                let mut binds = Vec::new();
                let inst = match a {
                    Expr::Var(x) => x,
                    other => {
                        let x = self.fresh_name();
                        binds.push((Pattern::Var(x.clone()), other));
                        x
                    }
                };
                let b = self.norm(b, &mut binds);
                Ok(wrap(binds, Expr::Unfold(inst, Box::new(b))))
            }
            Tok::Kw(kw @ ("init" | "infer")) => {
                self.bump();
                let m = if self.is_sym("(") {
                    self.bump();
                    let m = self.ident()?;
                    self.expect_sym(")")?;
                    m
                } else {
                    self.ident()?
                };
                if !self.streams.contains(&m) {
                    return self.err_kind(ParseErrorKind::Unbound(m));
                }
                Ok(if kw == "init" { Expr::Init(m) } else { Expr::Infer(m) })
            }
            Tok::Ident(name) => {
                let locally_bound = self.bound(&name);
                if !locally_bound && !is_builtin(&name) {
                    return self.err_kind(ParseErrorKind::Unbound(name));
                }
                self.bump();
                if self.is_sym("(") {
                    let arg = self.paren_raw()?;
                    let mut binds = Vec::new();
                    let v = self.norm(arg, &mut binds);
                    let call = if locally_bound {
                        Expr::App(name, Box::new(v))
                    } else {
                        Expr::Op(name, Box::new(v))
                    };
                    Ok(wrap(binds, call))
                } else if locally_bound {
                    Ok(Expr::Var(name))
                } else if crate::builtins::is_nullary(&name) {
                    Ok(Expr::Op(name, Box::new(Expr::Const(Const::Unit))))
                } else {
                    self.err(format!("builtin `{name}` must be applied"))
                }
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Const(Const::Int(i)))
            }
            Tok::Real(r) => {
                self.bump();
                Ok(Expr::Const(Const::Real(r)))
            }
            Tok::Sym("-") => {
                self.bump();
                match self.bump() {
                    Tok::Int(i) => Ok(Expr::Const(Const::Int(-i))),
                    Tok::Real(r) => Ok(Expr::Const(Const::Real(-r))),
                    _ => self.err("`-` must prefix a numeric literal"),
                }
            }
            Tok::Kw("true") => {
                self.bump();
                Ok(Expr::Const(Const::Bool(true)))
            }
            Tok::Kw("false") => {
                self.bump();
                Ok(Expr::Const(Const::Bool(false)))
            }
            Tok::Sym("(") => {
                let e = self.paren_raw()?;
                if !matches!(e, Expr::Pair(..)) {
                    return Ok(e);
                }
                // Tuple components must be values.
                let mut binds = Vec::new();
                let e = self.norm(e, &mut binds);
                Ok(wrap(binds, e))
            }
            Tok::Ident(_) | Tok::Kw(_) => self.app(),
            t => self.err(format!("unexpected {}", describe(&t))),
        }
    }

    /// `( e1, ..., en )` as a right-nested tuple whose components are not
    /// yet normalized.
    fn paren_raw(&mut self) -> PResult<Expr> {
        self.expect_sym("(")?;
        if self.is_sym(")") {
            self.bump();
            return Ok(Expr::Const(Const::Unit));
        }
        let mut items = vec![self.expr()?];
        while self.is_sym(",") {
            self.bump();
            items.push(self.expr()?);
        }
        self.expect_sym(")")?;
        Ok(Expr::tuple(items))
    }

    /// Turn `e` into a syntactic value, hoisting compound parts into `binds`.
    fn norm(&mut self, e: Expr, binds: &mut Vec<(Pattern, Expr)>) -> Expr {
        if e.is_value() {
            return e;
        }
        match e {
            Expr::Pair(a, b) => {
                let a = self.norm(*a, binds);
                let b = self.norm(*b, binds);
                Expr::Pair(Box::new(a), Box::new(b))
            }
            other => {
                let x = self.fresh_name();
                binds.push((Pattern::Var(x.clone()), other));
                Expr::Var(x)
            }
        }
    }
}

fn wrap(binds: Vec<(Pattern, Expr)>, body: Expr) -> Expr {
    binds
        .into_iter()
        .rev()
        .fold(body, |acc, (p, e)| Expr::Let(p, Box::new(e), Box::new(acc)))
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(x) => format!("identifier `{x}`"),
        Tok::Int(i) => format!("integer {i}"),
        Tok::Real(r) => format!("real {r}"),
        Tok::Kw(k) => format!("keyword `{k}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}
