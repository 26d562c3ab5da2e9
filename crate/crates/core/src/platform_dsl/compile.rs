//! Module expansion and lowering to a decoding net.

use std::collections::{BTreeMap, BTreeSet};

use crate::decoding_net::{
    well_formed, AddressRange, ConfSpaces, ConfigurableSpace, DecodingNet, Node, NodeId, Platform,
};
use crate::monitor::DEFAULT_GRANULARITY;

use super::ast::*;
use super::{DslError, Span};

/// A parameter value: a number, or a fully qualified node id.
#[derive(Clone, Debug)]
enum Value {
    Num(u64),
    Name(String),
}

type Env = BTreeMap<String, Value>;

/// Expands the root module (the last one) and builds the platform. Nets
/// that break a well-formedness rule are reported at the offending node's
/// declaration.
pub fn compile(ast: &PlatformAst) -> Result<Platform, DslError> {
    let mut names = BTreeSet::new();
    for m in &ast.modules {
        if !names.insert(m.name.name.as_str()) {
            return Err(DslError::DuplicateDefinition {
                name: m.name.name.clone(),
                span: m.name.span,
            });
        }
    }
    let Some(root) = ast.root() else {
        return Ok(Platform::default());
    };
    if let Some(p) = root.params.first() {
        return Err(DslError::invalid(
            format!("root module `{}` cannot take parameters", root.name.name),
            p.span,
        ));
    }
    let mut cx = Expander {
        ast,
        nodes: Vec::new(),
        conf: ConfSpaces::new(),
        origins: BTreeMap::new(),
        stack: Vec::new(),
    };
    cx.expand(root, "", &Env::new())?;

    let net = DecodingNet::from_nodes_unchecked(cx.nodes);
    if let Some(v) = well_formed(&net).into_iter().next() {
        let span = v.node().and_then(|n| cx.origins.get(n)).copied().unwrap_or_default();
        return Err(DslError::Net {
            source: v.into_error(),
            span,
        });
    }
    Ok(Platform::new(net, cx.conf))
}

struct Expander<'a> {
    ast: &'a PlatformAst,
    nodes: Vec<Node>,
    conf: ConfSpaces,
    origins: BTreeMap<NodeId, Span>,
    stack: Vec<&'a str>,
}

impl<'a> Expander<'a> {
    fn module(&self, name: &Ident) -> Result<&'a Module, DslError> {
        self.ast.module(&name.name).ok_or_else(|| DslError::UnboundName {
            name: name.name.clone(),
            span: name.span,
        })
    }

    fn enter(&mut self, m: &'a Module, at: Span) -> Result<(), DslError> {
        if self.stack.contains(&m.name.name.as_str()) {
            return Err(DslError::invalid(
                format!("module `{}` instantiates itself", m.name.name),
                at,
            ));
        }
        self.stack.push(&m.name.name);
        Ok(())
    }

    /// Every node name a module declares, instance contents included,
    /// relative to the module.
    fn exports(&mut self, m: &'a Module, at: Span) -> Result<Vec<String>, DslError> {
        self.enter(m, at)?;
        let mut out = Vec::new();
        for item in &m.items {
            match item {
                Item::Node(n) => out.push(n.id.name.clone()),
                Item::Configurable(c) => out.push(c.id.name.clone()),
                Item::Instance(i) => {
                    let child = self.module(&i.module)?;
                    for e in self.exports(child, i.id.span)? {
                        out.push(format!("{}.{e}", i.id.name));
                    }
                }
            }
        }
        self.stack.pop();
        Ok(out)
    }

    fn expand(&mut self, m: &'a Module, prefix: &str, env: &Env) -> Result<(), DslError> {
        // Local scope: declared names plus everything instances export.
        let mut locals: BTreeSet<String> = BTreeSet::new();
        let mut declared: BTreeMap<&str, Span> = BTreeMap::new();
        for p in &m.params {
            if declared.insert(&p.name, p.span).is_some() {
                return Err(DslError::DuplicateDefinition {
                    name: p.name.clone(),
                    span: p.span,
                });
            }
        }
        for item in &m.items {
            let id = item.id();
            if declared.insert(&id.name, id.span).is_some() {
                return Err(DslError::DuplicateDefinition {
                    name: id.name.clone(),
                    span: id.span,
                });
            }
            if let Item::Instance(i) = item {
                let child = self.module(&i.module)?;
                self.stack.push(&m.name.name);
                let exported = self.exports(child, i.id.span);
                self.stack.pop();
                locals.extend(exported?.into_iter().map(|e| format!("{}.{e}", i.id.name)));
            } else {
                locals.insert(id.name.clone());
            }
        }
        let scope = Scope {
            prefix,
            env,
            locals: &locals,
        };

        self.enter(m, m.name.span)?;
        for item in &m.items {
            match item {
                Item::Node(n) => {
                    let node = scope.node(n)?;
                    self.push_node(node, n.id.span)?;
                }
                Item::Configurable(c) => {
                    let id = NodeId::new(format!("{prefix}{}", c.id.name));
                    let granularity = match &c.granularity {
                        Some(e) => scope.eval(e)?,
                        None => DEFAULT_GRANULARITY,
                    };
                    if granularity == 0 {
                        return Err(DslError::invalid("granularity must be non-zero", c.id.span));
                    }
                    let targets = c
                        .targets
                        .iter()
                        .map(|t| scope.name(t).map(NodeId::new))
                        .collect::<Result<Vec<_>, _>>()?;
                    self.conf.insert(id.clone(), ConfigurableSpace { granularity, targets });
                    self.push_node(Node::new(id), c.id.span)?;
                }
                Item::Instance(i) => {
                    let child = self.module(&i.module)?;
                    if child.params.len() != i.args.len() {
                        return Err(DslError::invalid(
                            format!(
                                "module `{}` takes {} arguments, got {}",
                                child.name.name,
                                child.params.len(),
                                i.args.len()
                            ),
                            i.id.span,
                        ));
                    }
                    let mut child_env = Env::new();
                    for (p, a) in child.params.iter().zip(&i.args) {
                        child_env.insert(p.name.clone(), scope.value(a)?);
                    }
                    let child_prefix = format!("{prefix}{}.", i.id.name);
                    self.expand(child, &child_prefix, &child_env)?;
                }
            }
        }
        self.stack.pop();
        Ok(())
    }

    fn push_node(&mut self, node: Node, span: Span) -> Result<(), DslError> {
        if self.origins.insert(node.id.clone(), span).is_some() {
            return Err(DslError::DuplicateDefinition {
                name: node.id.to_string(),
                span,
            });
        }
        self.nodes.push(node);
        Ok(())
    }
}

struct Scope<'s> {
    prefix: &'s str,
    env: &'s Env,
    locals: &'s BTreeSet<String>,
}

impl Scope<'_> {
    fn name(&self, id: &Ident) -> Result<String, DslError> {
        match self.env.get(&id.name) {
            Some(Value::Name(n)) => Ok(n.clone()),
            Some(Value::Num(_)) => Err(DslError::invalid(
                format!("parameter `{}` is a number, not a node", id.name),
                id.span,
            )),
            None if self.locals.contains(&id.name) => Ok(format!("{}{}", self.prefix, id.name)),
            None => Err(DslError::UnboundName {
                name: id.name.clone(),
                span: id.span,
            }),
        }
    }

    fn eval(&self, e: &Expr) -> Result<u64, DslError> {
        match e {
            Expr::Num(n, _) => Ok(*n),
            Expr::Var(id) => match self.env.get(&id.name) {
                Some(Value::Num(n)) => Ok(*n),
                Some(Value::Name(_)) => Err(DslError::invalid(
                    format!("parameter `{}` is a node, not a number", id.name),
                    id.span,
                )),
                None if self.locals.contains(&id.name) => Err(DslError::invalid(
                    format!("`{}` is a node, not a number", id.name),
                    id.span,
                )),
                None => Err(DslError::UnboundName {
                    name: id.name.clone(),
                    span: id.span,
                }),
            },
            Expr::Bin(l, op, r, span) => {
                let (l, r) = (self.eval(l)?, self.eval(r)?);
                let v = match op {
                    Op::Add => l.checked_add(r),
                    Op::Sub => l.checked_sub(r),
                    Op::Mul => l.checked_mul(r),
                };
                v.ok_or_else(|| DslError::invalid("arithmetic overflow", *span))
            }
        }
    }

    /// An instance argument: a bare name that is not a numeric parameter
    /// denotes a node.
    fn value(&self, e: &Expr) -> Result<Value, DslError> {
        if let Expr::Var(id) = e {
            if !matches!(self.env.get(&id.name), Some(Value::Num(_))) {
                return self.name(id).map(Value::Name);
            }
        }
        self.eval(e).map(Value::Num)
    }

    fn range(&self, r: &RangeExpr) -> Result<AddressRange, DslError> {
        let (lo, hi) = (self.eval(&r.lo)?, self.eval(&r.hi)?);
        AddressRange::from_bounds(lo, hi).map_err(|source| DslError::Net { source, span: r.span })
    }

    fn node(&self, n: &NodeDecl) -> Result<Node, DslError> {
        let mut node = Node::new(format!("{}{}", self.prefix, n.id.name));
        for s in &n.stmts {
            match s {
                NodeStmt::Accept(r) => node = node.with_accept(self.range(r)?),
                NodeStmt::Map { src, dst, base } => {
                    node = node.with_segment(self.range(src)?, self.name(dst)?, self.eval(base)?)
                }
                NodeStmt::Overlay(o) => {
                    if node.overlay.is_some() {
                        return Err(DslError::DuplicateDefinition {
                            name: format!("overlay of {}", n.id.name),
                            span: o.span,
                        });
                    }
                    node = node.with_overlay(self.name(o)?);
                }
            }
        }
        Ok(node)
    }
}
