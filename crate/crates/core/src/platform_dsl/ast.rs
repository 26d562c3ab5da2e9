use std::fmt;

use super::Span;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlatformAst {
    pub modules: Vec<Module>,
}

impl PlatformAst {
    /// The module the platform is built from: the last one in the file.
    pub fn root(&self) -> Option<&Module> {
        self.modules.last()
    }

    pub fn module(&self, name: &str) -> Option<&Module> {
        self.modules.iter().find(|m| m.name.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>) -> Self {
        Ident {
            name: name.into(),
            span: Span::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Module {
    pub name: Ident,
    pub params: Vec<Ident>,
    pub items: Vec<Item>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Node(NodeDecl),
    Configurable(ConfDecl),
    Instance(InstanceDecl),
}

impl Item {
    pub fn id(&self) -> &Ident {
        match self {
            Item::Node(n) => &n.id,
            Item::Configurable(c) => &c.id,
            Item::Instance(i) => &i.id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDecl {
    pub id: Ident,
    pub stmts: Vec<NodeStmt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeStmt {
    Accept(RangeExpr),
    Map { src: RangeExpr, dst: Ident, base: Expr },
    Overlay(Ident),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfDecl {
    pub id: Ident,
    pub granularity: Option<Expr>,
    pub targets: Vec<Ident>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceDecl {
    pub id: Ident,
    pub module: Ident,
    pub args: Vec<Expr>,
}

/// Half-open `[lo..hi)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeExpr {
    pub lo: Expr,
    pub hi: Expr,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Num(u64, Span),
    Var(Ident),
    Bin(Box<Expr>, Op, Box<Expr>, Span),
}

impl Expr {
    pub fn num(n: u64) -> Self {
        Expr::Num(n, Span::default())
    }

    pub fn span(&self) -> Span {
        match self {
            Expr::Num(_, s) | Expr::Bin(_, _, _, s) => *s,
            Expr::Var(i) => i.span,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n, _) => write!(f, "{n:#x}"),
            Expr::Var(i) => f.write_str(&i.name),
            Expr::Bin(l, op, r, _) => write!(f, "({l} {op} {r})"),
        }
    }
}

impl fmt::Display for RangeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}..{})", self.lo, self.hi)
    }
}

/// Canonical source form; parsing it yields an equal AST.
impl fmt::Display for PlatformAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.modules.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "module {}", self.name.name)?;
        if !self.params.is_empty() {
            let ps: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
            write!(f, "({})", ps.join(", "))?;
        }
        writeln!(f, " {{")?;
        for item in &self.items {
            match item {
                Item::Node(n) => {
                    writeln!(f, "    node {} {{", n.id.name)?;
                    for s in &n.stmts {
                        match s {
                            NodeStmt::Accept(r) => writeln!(f, "        accept {r}")?,
                            NodeStmt::Map { src, dst, base } => {
                                writeln!(f, "        map {src} -> {} @ {base}", dst.name)?
                            }
                            NodeStmt::Overlay(o) => writeln!(f, "        overlay {}", o.name)?,
                        }
                    }
                    writeln!(f, "    }}")?;
                }
                Item::Configurable(c) => {
                    writeln!(f, "    configurable {} {{", c.id.name)?;
                    if let Some(g) = &c.granularity {
                        writeln!(f, "        granularity {g}")?;
                    }
                    if !c.targets.is_empty() {
                        let ts: Vec<&str> = c.targets.iter().map(|t| t.name.as_str()).collect();
                        writeln!(f, "        targets {}", ts.join(", "))?;
                    }
                    writeln!(f, "    }}")?;
                }
                Item::Instance(i) => {
                    let args: Vec<String> = i.args.iter().map(ToString::to_string).collect();
                    writeln!(f, "    instance {} = {}({})", i.id.name, i.module.name, args.join(", "))?;
                }
            }
        }
        writeln!(f, "}}")
    }
}
