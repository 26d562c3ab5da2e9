use std::fmt;

use super::{DslError, Span};

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Num(u64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    Comma,
    Semi,
    Eq,
    Arrow,
    At,
    DotDot,
    Plus,
    Minus,
    Star,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "`{n:#x}`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::At => f.write_str("`@`"),
            Tok::DotDot => f.write_str("`..`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn lex(text: &str) -> Result<Vec<(Tok, Span)>, DslError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let span = Span {
                line: li + 1,
                col: i + 1,
            };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if ident_start(c) {
                // Dots join segments of a qualified name (`inst.node`), but
                // never two in a row, so `a..b` still lexes as a range.
                let start = i;
                i += 1;
                loop {
                    while i < chars.len() && ident_char(chars[i]) {
                        i += 1;
                    }
                    if i + 1 < chars.len() && chars[i] == '.' && ident_start(chars[i + 1]) {
                        i += 1;
                        continue;
                    }
                    break;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), span));
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                let hex = c == '0' && matches!(chars.get(i + 1), Some('x' | 'X'));
                if hex {
                    i += 2;
                }
                while i < chars.len() && (chars[i].is_ascii_hexdigit() || chars[i] == '_') {
                    if !hex && chars[i].is_ascii_alphabetic() {
                        break;
                    }
                    i += 1;
                }
                let lit: String = chars[start..i].iter().collect();
                let digits: String = lit
                    .chars()
                    .skip(if hex { 2 } else { 0 })
                    .filter(|&c| c != '_')
                    .collect();
                let value =
                    u64::from_str_radix(&digits, if hex { 16 } else { 10 }).map_err(|_| DslError::SyntaxError {
                        span,
                        expected: "a 64-bit number".into(),
                        found: format!("`{lit}`"),
                    })?;
                out.push((Tok::Num(value), span));
                continue;
            }
            let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let (tok, len) = match (c, two.as_str()) {
                (_, "->") => (Tok::Arrow, 2),
                (_, "..") => (Tok::DotDot, 2),
                ('{', _) => (Tok::LBrace, 1),
                ('}', _) => (Tok::RBrace, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('[', _) => (Tok::LBracket, 1),
                (',', _) => (Tok::Comma, 1),
                (';', _) => (Tok::Semi, 1),
                ('=', _) => (Tok::Eq, 1),
                ('@', _) => (Tok::At, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                _ => {
                    return Err(DslError::SyntaxError {
                        span,
                        expected: "a token".into(),
                        found: format!("`{c}`"),
                    })
                }
            };
            out.push((tok, span));
            i += len;
        }
    }
    let end = Span {
        line: text.lines().count().max(1),
        col: text.lines().last().map_or(1, |l| l.chars().count() + 1),
    };
    out.push((Tok::Eof, end));
    Ok(out)
}
