//! Recursive-descent parser; one token of lookahead.

use super::ast::*;
use super::lexer::Tok;
use super::{DslError, Span};

const KEYWORDS: &[&str] = &[
    "module",
    "node",
    "accept",
    "map",
    "overlay",
    "configurable",
    "granularity",
    "targets",
    "instance",
];

pub(crate) struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    pub(crate) fn new(toks: Vec<(Tok, Span)>) -> Self {
        Parser { toks, pos: 0 }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, DslError> {
        Err(DslError::SyntaxError {
            span: self.span(),
            expected: expected.into(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<Span, DslError> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            self.error(&tok.to_string())
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<Span, DslError> {
        if self.at_keyword(kw) {
            Ok(self.bump().1)
        } else {
            self.error(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> Result<Ident, DslError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let name = s.clone();
                let span = self.bump().1;
                Ok(Ident { name, span })
            }
            _ => self.error("an identifier"),
        }
    }

    fn skip_semis(&mut self) {
        while *self.peek() == Tok::Semi {
            self.bump();
        }
    }

    pub(crate) fn file(mut self) -> Result<PlatformAst, DslError> {
        let mut modules = Vec::new();
        self.skip_semis();
        while *self.peek() != Tok::Eof {
            modules.push(self.module()?);
            self.skip_semis();
        }
        Ok(PlatformAst { modules })
    }

    fn module(&mut self) -> Result<Module, DslError> {
        self.keyword("module")?;
        let name = self.ident()?;
        let mut params = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            if *self.peek() != Tok::RParen {
                params.push(self.ident()?);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    params.push(self.ident()?);
                }
            }
            self.expect(Tok::RParen)?;
        }
        self.expect(Tok::LBrace)?;
        let mut items = Vec::new();
        loop {
            self.skip_semis();
            if *self.peek() == Tok::RBrace {
                self.bump();
                break;
            }
            items.push(self.item()?);
        }
        Ok(Module { name, params, items })
    }

    fn item(&mut self) -> Result<Item, DslError> {
        if self.at_keyword("node") {
            self.bump();
            let id = self.ident()?;
            self.expect(Tok::LBrace)?;
            let mut stmts = Vec::new();
            loop {
                self.skip_semis();
                if *self.peek() == Tok::RBrace {
                    self.bump();
                    break;
                }
                stmts.push(self.node_stmt()?);
            }
            Ok(Item::Node(NodeDecl { id, stmts }))
        } else if self.at_keyword("configurable") {
            self.bump();
            let id = self.ident()?;
            self.expect(Tok::LBrace)?;
            let mut decl = ConfDecl {
                id,
                granularity: None,
                targets: Vec::new(),
            };
            let mut seen_targets = false;
            loop {
                self.skip_semis();
                if *self.peek() == Tok::RBrace {
                    self.bump();
                    break;
                }
                let at = self.span();
                if self.at_keyword("granularity") {
                    self.bump();
                    if decl.granularity.is_some() {
                        return Err(DslError::DuplicateDefinition {
                            name: "granularity".into(),
                            span: at,
                        });
                    }
                    decl.granularity = Some(self.expr()?);
                } else if self.at_keyword("targets") {
                    self.bump();
                    if seen_targets {
                        return Err(DslError::DuplicateDefinition {
                            name: "targets".into(),
                            span: at,
                        });
                    }
                    seen_targets = true;
                    decl.targets.push(self.ident()?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        decl.targets.push(self.ident()?);
                    }
                } else {
                    return self.error("`granularity`, `targets` or `}`");
                }
            }
            Ok(Item::Configurable(decl))
        } else if self.at_keyword("instance") {
            self.bump();
            let id = self.ident()?;
            self.expect(Tok::Eq)?;
            let module = self.ident()?;
            self.expect(Tok::LParen)?;
            let mut args = Vec::new();
            if *self.peek() != Tok::RParen {
                args.push(self.expr()?);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
            }
            self.expect(Tok::RParen)?;
            Ok(Item::Instance(InstanceDecl { id, module, args }))
        } else {
            self.error("`node`, `configurable`, `instance` or `}`")
        }
    }

    fn node_stmt(&mut self) -> Result<NodeStmt, DslError> {
        if self.at_keyword("accept") {
            self.bump();
            Ok(NodeStmt::Accept(self.range()?))
        } else if self.at_keyword("map") {
            self.bump();
            let src = self.range()?;
            self.expect(Tok::Arrow)?;
            let dst = self.ident()?;
            self.expect(Tok::At)?;
            let base = self.expr()?;
            Ok(NodeStmt::Map { src, dst, base })
        } else if self.at_keyword("overlay") {
            self.bump();
            Ok(NodeStmt::Overlay(self.ident()?))
        } else {
            self.error("`accept`, `map`, `overlay` or `}`")
        }
    }

    fn range(&mut self) -> Result<RangeExpr, DslError> {
        let span = self.expect(Tok::LBracket)?;
        let lo = self.expr()?;
        self.expect(Tok::DotDot)?;
        let hi = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(RangeExpr { lo, hi, span })
    }

    /// expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Op::Add,
                Tok::Minus => Op::Sub,
                _ => return Ok(lhs),
            };
            let span = self.bump().1;
            let rhs = self.term()?;
            lhs = Expr::Bin(Box::new(lhs), op, Box::new(rhs), span);
        }
    }

    /// term := atom ('*' atom)*
    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.atom()?;
        while *self.peek() == Tok::Star {
            let span = self.bump().1;
            let rhs = self.atom()?;
            lhs = Expr::Bin(Box::new(lhs), Op::Mul, Box::new(rhs), span);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, DslError> {
        match self.peek().clone() {
            Tok::Num(n) => Ok(Expr::Num(n, self.bump().1)),
            Tok::Ident(_) => Ok(Expr::Var(self.ident()?)),
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => self.error("a number, a name or `(`"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn one_node() {
        let ast = parse("module m { node dram { accept [0x0..0x10000) } }").unwrap();
        let m = ast.root().unwrap();
        assert_eq!(m.items.len(), 1);
        assert_eq!(
            m.items[0],
            Item::Node(NodeDecl {
                id: Ident::new("dram"),
                stmts: vec![NodeStmt::Accept(RangeExpr {
                    lo: Expr::num(0),
                    hi: Expr::num(0x10000),
                    span: Span::default()
                })]
            })
        );
    }

    #[test]
    fn precedence() {
        let ast = parse("module m(a) { node n { accept [a + 2 * 3..(a + 2) * 3) } }").unwrap();
        let Item::Node(n) = &ast.modules[0].items[0] else {
            panic!()
        };
        let NodeStmt::Accept(r) = &n.stmts[0] else { panic!() };
        assert_eq!(r.lo.to_string(), "(a + (0x2 * 0x3))");
        assert_eq!(r.hi.to_string(), "((a + 0x2) * 0x3)");
    }

    #[test]
    fn syntax_error_location() {
        let e = parse("module m {\n  node n { acept [0x0..0x1) }\n}").unwrap_err();
        assert_eq!(e.span().map(|s| (s.line, s.col)), Some((2, 12)));
        assert!(e.to_string().contains("expected `accept`"), "{e}");
        assert!(parse("module m { node map { } }").is_err());
        assert!(parse("module m { configurable c { granularity 1 ; granularity 2 } }").is_err());
        assert!(parse("module m {").is_err());
    }

    #[test]
    fn empty_file_and_empty_module() {
        assert!(parse("").unwrap().modules.is_empty());
        assert!(parse("# nothing\n").unwrap().modules.is_empty());
        assert!(parse("module m {}").unwrap().modules[0].items.is_empty());
    }
}
