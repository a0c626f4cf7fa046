use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Kw(&'static str),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const KEYWORDS: &[&str] = &[
    "val", "fun", "stream", "init", "step", "let", "in", "if", "then", "else", "sample",
    "observe", "infer", "unfold", "true", "false",
];

// Longest first so that `->` wins over `-`.
const SYMBOLS: &[&str] = &["->", "(", ")", "{", "}", ",", ";", "=", "_", "-"];

pub struct Lexed {
    pub tokens: Vec<Token>,
    /// Largest `$N` suffix seen, so generated names never collide.
    pub max_fresh: u64,
}

pub fn lex(src: &str) -> Result<Lexed, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let mut max_fresh = 0u64;
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        let push = |tokens: &mut Vec<Token>, tok| {
            tokens.push(Token { tok, line: start_line, col: start_col })
        };

        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut real = false;
            if i < chars.len() && chars[i] == '.' {
                real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    real = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if real {
                Tok::Real(text.parse().map_err(|_| ParseError::at(start_line, start_col, "bad real literal"))?)
            } else {
                Tok::Int(text.parse().map_err(|_| ParseError::at(start_line, start_col, "bad integer literal"))?)
            };
            push(&mut tokens, tok);
            continue;
        }

        if c.is_alphabetic() || c == '_' || c == '$' {
            let start = i;
            i += 1;
            loop {
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
                {
                    i += 1;
                }
                // Qualified builtin names such as `List.map`.
                if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_alphabetic() {
                    i += 1;
                    continue;
                }
                break;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            if text == "_" {
                push(&mut tokens, Tok::Sym("_"));
            } else if let Some(kw) = KEYWORDS.iter().find(|k| **k == text) {
                push(&mut tokens, Tok::Kw(kw));
            } else {
                if let Some(n) = text.strip_prefix('$').and_then(|s| s.parse::<u64>().ok()) {
                    max_fresh = max_fresh.max(n);
                }
                push(&mut tokens, Tok::Ident(text));
            }
            continue;
        }

        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                push(&mut tokens, Tok::Sym(s));
            }
            None => {
                return Err(ParseError::at(line, col, format!("unexpected character `{c}`")));
            }
        }
    }
    tokens.push(Token { tok: Tok::Eof, line, col });
    Ok(Lexed { tokens, max_fresh })
}
