//! Flat predicate statements with typed arguments, and one-way syntactic matching.
//!
//! Text form: `covert-transfer(?Ship:ship, ?Buyer:organization) & loiters-at-night(?Ship)`.
//! A leading `?` marks a variable; `:type` is optional on any term. Two terms are
//! type-compatible unless both carry a type and the types differ.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const { name: String, ty: Option<String> },
    Var { name: String, ty: Option<String> },
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const { name: name.into(), ty: None }
    }

    pub fn typed(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Term::Const { name: name.into(), ty: Some(ty.into()) }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var { name: name.into(), ty: None }
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Const { name, .. } | Term::Var { name, .. } => name,
        }
    }

    pub fn ty(&self) -> Option<&str> {
        match self {
            Term::Const { ty, .. } | Term::Var { ty, .. } => ty.as_deref(),
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var { .. })
    }

    fn compatible(&self, other: &Term) -> bool {
        match (self.ty(), other.ty()) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_var() {
            f.write_str("?")?;
        }
        f.write_str(self.name())?;
        if let Some(ty) = self.ty() {
            write!(f, ":{ty}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Self { predicate: predicate.into(), args }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter(|t| t.is_var()).map(Term::name)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, arg) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{arg}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A conjunction of one or more atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Statement {
    atoms: Vec<Atom>,
}

impl Statement {
    /// Returns `None` for an empty conjunction.
    pub fn new(atoms: Vec<Atom>) -> Option<Self> {
        (!atoms.is_empty()).then_some(Self { atoms })
    }

    pub fn atom(atom: Atom) -> Self {
        Self { atoms: alloc::vec![atom] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn first(&self) -> &Atom {
        &self.atoms[0]
    }

    pub fn is_ground(&self) -> bool {
        self.atoms.iter().all(Atom::is_ground)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.atoms.iter().flat_map(Atom::variables)
    }

    /// `self & other`, skipping atoms already present.
    pub fn conjoin(&self, other: &Statement) -> Statement {
        let mut atoms = self.atoms.clone();
        for atom in &other.atoms {
            if !atoms.contains(atom) {
                atoms.push(atom.clone());
            }
        }
        Statement { atoms }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

impl From<Atom> for Statement {
    fn from(atom: Atom) -> Self {
        Statement::atom(atom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse statement {input:?}: {reason}")]
pub struct ParseError {
    pub input: String,
    pub reason: &'static str,
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '-' | '_' | '.' | '/')
}

fn parse_name(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty() && s.chars().all(is_name_char)).then_some(s)
}

fn parse_term(s: &str) -> Result<Term, &'static str> {
    let s = s.trim();
    let (var, rest) = match s.strip_prefix('?') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (name, ty) = match rest.split_once(':') {
        Some((name, ty)) => (name, Some(parse_name(ty).ok_or("bad type name")?.to_string())),
        None => (rest, None),
    };
    let name = parse_name(name).ok_or("bad term name")?.to_string();
    Ok(if var { Term::Var { name, ty } } else { Term::Const { name, ty } })
}

fn parse_atom(s: &str) -> Result<Atom, &'static str> {
    let s = s.trim();
    match s.find('(') {
        None => Ok(Atom::new(parse_name(s).ok_or("bad predicate")?, Vec::new())),
        Some(open) => {
            let predicate = parse_name(&s[..open]).ok_or("bad predicate")?;
            let inner = s[open + 1..].strip_suffix(')').ok_or("missing closing parenthesis")?;
            if inner.contains(['(', ')']) {
                return Err("nested parentheses");
            }
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').map(parse_term).collect::<Result<_, _>>()?
            };
            Ok(Atom::new(predicate, args))
        }
    }
}

impl FromStr for Statement {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| ParseError { input: s.to_string(), reason };
        if s.trim().is_empty() {
            return Err(err("empty statement"));
        }
        let atoms = s.split('&').map(parse_atom).collect::<Result<Vec<_>, _>>().map_err(err)?;
        Ok(Statement { atoms })
    }
}

impl FromStr for Atom {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_atom(s).map_err(|reason| ParseError { input: s.to_string(), reason })
    }
}

impl FromStr for Term {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_term(s).map_err(|reason| ParseError { input: s.to_string(), reason })
    }
}

macro_rules! text_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

text_serde!(Statement);
text_serde!(Atom);
text_serde!(Term);

/// Variable name → ground term.
pub type Bindings = BTreeMap<String, Term>;

/// Matches `pattern` against a ground atom, extending `bindings`.
///
/// On failure `bindings` may hold partial entries; callers pass a scratch copy.
pub fn match_atom(pattern: &Atom, ground: &Atom, bindings: &mut Bindings) -> bool {
    if pattern.predicate != ground.predicate || pattern.args.len() != ground.args.len() {
        return false;
    }
    for (p, g) in pattern.args.iter().zip(&ground.args) {
        if g.is_var() || !p.compatible(g) {
            return false;
        }
        match p {
            Term::Const { name, .. } => {
                if name != g.name() {
                    return false;
                }
            }
            Term::Var { name, ty } => match bindings.get_mut(name) {
                Some(bound) => {
                    if bound.name() != g.name() || !bound.compatible(g) || !p.compatible(bound) {
                        return false;
                    }
                    if bound.ty().is_none() {
                        if let Some(ty) = g.ty().or(ty.as_deref()) {
                            *bound = Term::typed(g.name(), ty);
                        }
                    }
                }
                None => {
                    let value = match (g.ty(), ty) {
                        (None, Some(ty)) => Term::typed(g.name(), ty.clone()),
                        _ => g.clone(),
                    };
                    bindings.insert(name.clone(), value);
                }
            },
        }
    }
    true
}

/// Finds the first atom of `ground` that `pattern` matches.
pub fn match_in(pattern: &Atom, ground: &Statement) -> Option<Bindings> {
    ground.atoms().iter().find_map(|atom| {
        let mut bindings = Bindings::new();
        match_atom(pattern, atom, &mut bindings).then_some(bindings)
    })
}

/// Matches every atom of a pattern conjunction against the same-position atom of
/// a ground conjunction.
pub fn match_statement(pattern: &Statement, ground: &Statement) -> Option<Bindings> {
    if pattern.atoms.len() != ground.atoms.len() {
        return None;
    }
    let mut bindings = Bindings::new();
    pattern
        .atoms
        .iter()
        .zip(&ground.atoms)
        .all(|(p, g)| match_atom(p, g, &mut bindings))
        .then_some(bindings)
}

/// True when `pattern` matches `ground` atom-for-atom, or when a single-atom
/// pattern matches any atom of `ground`.
pub fn statement_matches(pattern: &Statement, ground: &Statement) -> bool {
    match_statement(pattern, ground).is_some()
        || (pattern.atoms.len() == 1 && match_in(pattern.first(), ground).is_some())
}

/// Identifier for an entity introduced to satisfy an unbound variable: the
/// lowercased variable name followed by a caller-chosen tag.
pub fn fresh_entity(var: &str, tag: &str) -> String {
    let mut name = var.to_lowercase();
    name.push('-');
    name.push_str(tag);
    name
}

/// Substitutes bound variables; unbound ones are passed to `fresh`, whose result
/// is recorded in `bindings` so repeated occurrences agree.
pub fn instantiate_atom(
    pattern: &Atom,
    bindings: &mut Bindings,
    fresh: &mut dyn FnMut(&str, Option<&str>) -> Term,
) -> Atom {
    let args = pattern
        .args
        .iter()
        .map(|term| match term {
            Term::Const { .. } => term.clone(),
            Term::Var { name, ty } => {
                if let Some(bound) = bindings.get(name) {
                    return bound.clone();
                }
                let value = fresh(name, ty.as_deref());
                bindings.insert(name.clone(), value.clone());
                value
            }
        })
        .collect();
    Atom::new(pattern.predicate.clone(), args)
}

pub fn instantiate(
    pattern: &Statement,
    bindings: &mut Bindings,
    fresh: &mut dyn FnMut(&str, Option<&str>) -> Term,
) -> Statement {
    Statement { atoms: pattern.atoms.iter().map(|a| instantiate_atom(a, bindings, fresh)).collect() }
}

/// Substitutes bound variables and leaves unbound ones in place.
pub fn substitute(pattern: &Statement, bindings: &Bindings) -> Statement {
    let mut bindings = bindings.clone();
    instantiate(pattern, &mut bindings, &mut |name, ty| Term::Var {
        name: name.to_string(),
        ty: ty.map(ToString::to_string),
    })
}
