//! Tier formulas, generalized factors and Hasse diagrams.
//!
//! A tier is described by factors and a formula combining them with `/`
//! (nesting) and `*` (crossing). [`expand`] lists the intrinsic generalized
//! factors in a fixed order that mirrors the formula, and [`build_hasse`]
//! arranges them by marginality and assigns degrees of freedom and names.
//!
//! Pseudofactor nodes are inserted with [`HasseDiagram::with_pseudofactor`];
//! their marginality is declared rather than inferred.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub const MEAN: &str = "Mean";
pub const WEDGE: &str = " ∧ ";
pub const VDASH: &str = " ⊢ ";
pub const PERP: &str = "_⊥";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("factor `{0}` appears more than once")]
    DuplicateFactor(String),
    #[error("factor `{0}` must have at least one level")]
    NoLevels(String),
    #[error("negative degrees of freedom ({df}) for `{node}`; check the level counts")]
    NegativeDf { node: String, df: i128 },
    #[error("source name `{0}` is used by two nodes")]
    NameCollision(String),
    #[error("no node named `{0}`")]
    UnknownNode(String),
    #[error("pseudofactor `{pseudo}`: `{ancestor}` is not marginal to host `{host}`")]
    AncestorNotMarginal {
        pseudo: String,
        ancestor: String,
        host: String,
    },
    #[error("pseudofactor `{0}` cannot refine the Mean")]
    RefinesMean(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub levels: u64,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: u64) -> Self {
        Factor {
            name: name.into(),
            levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TierFormula {
    Leaf(Factor),
    Nest(Box<TierFormula>, Box<TierFormula>),
    Cross(Box<TierFormula>, Box<TierFormula>),
}

impl TierFormula {
    /// Factors in order of appearance.
    pub fn factors(&self) -> Vec<Factor> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<Factor>) {
        match self {
            TierFormula::Leaf(f) => out.push(f.clone()),
            TierFormula::Nest(a, b) | TierFormula::Cross(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }
}

impl fmt::Display for TierFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TierFormula::Leaf(x) => write!(f, "{}", x.name),
            TierFormula::Nest(a, b) => write!(f, "({a}/{b})"),
            TierFormula::Cross(a, b) => write!(f, "({a}*{b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Star,
    Slash,
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ModelError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '*' => {
                out.push((pos, Token::Star));
                chars.next();
            }
            '/' => {
                out.push((pos, Token::Slash));
                chars.next();
            }
            '(' => {
                out.push((pos, Token::Open));
                chars.next();
            }
            ')' => {
                out.push((pos, Token::Close));
                chars.next();
            }
            c if c.is_ascii_alphabetic() => {
                let mut ident = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((pos, Token::Ident(ident)));
            }
            other => {
                return Err(ModelError::Syntax {
                    pos,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    at: usize,
    end: usize,
    decls: &'a [Factor],
    seen: BTreeSet<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn formula(&mut self) -> Result<TierFormula, ModelError> {
        let mut lhs = self.term()?;
        while self.peek() == Some(&Token::Star) {
            self.at += 1;
            let rhs = self.term()?;
            lhs = TierFormula::Cross(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<TierFormula, ModelError> {
        let mut lhs = self.atom()?;
        while self.peek() == Some(&Token::Slash) {
            self.at += 1;
            let rhs = self.atom()?;
            lhs = TierFormula::Nest(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<TierFormula, ModelError> {
        let pos = self.pos();
        match self.tokens.get(self.at).map(|(_, t)| t.clone()) {
            Some(Token::Ident(name)) => {
                self.at += 1;
                let f = self
                    .decls
                    .iter()
                    .find(|f| f.name == name)
                    .ok_or_else(|| ModelError::UnknownFactor(name.clone()))?;
                if !self.seen.insert(name.clone()) {
                    return Err(ModelError::DuplicateFactor(name));
                }
                Ok(TierFormula::Leaf(f.clone()))
            }
            Some(Token::Open) => {
                self.at += 1;
                let inner = self.formula()?;
                if self.peek() != Some(&Token::Close) {
                    return Err(ModelError::Syntax {
                        pos: self.pos(),
                        msg: "expected `)`".into(),
                    });
                }
                self.at += 1;
                Ok(inner)
            }
            Some(t) => Err(ModelError::Syntax {
                pos,
                msg: format!("expected a factor or `(`, found {}", describe(&t)),
            }),
            None => Err(ModelError::Syntax {
                pos,
                msg: "unexpected end of formula".into(),
            }),
        }
    }
}

fn describe(t: &Token) -> String {
    match t {
        Token::Ident(s) => format!("`{s}`"),
        Token::Star => "`*`".into(),
        Token::Slash => "`/`".into(),
        Token::Open => "`(`".into(),
        Token::Close => "`)`".into(),
    }
}

/// Parses a formula over the declared factors.
///
/// `/` binds tighter than `*`; both associate to the left.
pub fn parse_formula(text: &str, decls: &[Factor]) -> Result<TierFormula, ModelError> {
    if let Some(f) = decls.iter().find(|f| f.levels == 0) {
        return Err(ModelError::NoLevels(f.name.clone()));
    }
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ModelError::Syntax {
            pos: 0,
            msg: "empty formula".into(),
        });
    }
    let mut p = Parser {
        tokens,
        at: 0,
        end: text.len(),
        decls,
        seen: BTreeSet::new(),
    };
    let f = p.formula()?;
    if p.at != p.tokens.len() {
        return Err(ModelError::Syntax {
            pos: p.pos(),
            msg: format!("unexpected {}", describe(&p.tokens[p.at].1)),
        });
    }
    Ok(f)
}

/// A set of factors whose level combinations define a partition of the objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralizedFactor {
    /// Component names in formula order. Empty for the universe.
    pub components: Vec<String>,
    /// Number of level combinations.
    pub n: u64,
}

impl GeneralizedFactor {
    pub fn universe() -> Self {
        GeneralizedFactor {
            components: Vec::new(),
            n: 1,
        }
    }

    pub fn is_universe(&self) -> bool {
        self.components.is_empty()
    }
}

type Set = BTreeSet<usize>;

fn expand_sets(f: &TierFormula, index: &dyn Fn(&str) -> usize) -> Vec<Set> {
    match f {
        TierFormula::Leaf(x) => vec![Set::new(), Set::from([index(&x.name)])],
        TierFormula::Nest(l, r) => {
            let left = expand_sets(l, index);
            let all: Set = left.iter().flatten().copied().collect();
            let mut out = left;
            for s in expand_sets(r, index).into_iter().filter(|s| !s.is_empty()) {
                out.push(all.union(&s).copied().collect());
            }
            out
        }
        TierFormula::Cross(a, b) => {
            let (la, lb) = (expand_sets(a, index), expand_sets(b, index));
            let mut out: Vec<Set> = Vec::new();
            for sb in &lb {
                for sa in &la {
                    let u: Set = sa.union(sb).copied().collect();
                    if !out.contains(&u) {
                        out.push(u);
                    }
                }
            }
            out
        }
    }
}

/// Universe plus every intrinsic generalized factor of the formula, in the
/// order used for tables.
pub fn expand(formula: &TierFormula) -> Vec<GeneralizedFactor> {
    let factors = formula.factors();
    let index = |name: &str| factors.iter().position(|f| f.name == name).unwrap();
    expand_sets(formula, &index)
        .into_iter()
        .map(|s| GeneralizedFactor {
            components: s.iter().map(|&i| factors[i].name.clone()).collect(),
            n: s.iter().map(|&i| factors[i].levels).product(),
        })
        .collect()
}

fn nesting_pairs(f: &TierFormula, index: &dyn Fn(&str) -> usize, out: &mut Vec<(usize, usize)>) {
    match f {
        TierFormula::Leaf(_) => {}
        TierFormula::Cross(a, b) => {
            nesting_pairs(a, index, out);
            nesting_pairs(b, index, out);
        }
        TierFormula::Nest(a, b) => {
            nesting_pairs(a, index, out);
            nesting_pairs(b, index, out);
            for x in a.factors() {
                for y in b.factors() {
                    out.push((index(&x.name), index(&y.name)));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Intrinsic,
    /// Inserted for the pseudofactor with this factor index, refining the
    /// node with components `host`.
    Pseudo { factor: usize, host: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HasseNode {
    /// Factor indices into [`HasseDiagram::factors`].
    pub components: Vec<usize>,
    pub n: u64,
    pub df: u64,
    pub name: String,
    pub kind: NodeKind,
}

/// Generalized factors of one tier ordered by marginality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HasseDiagram {
    factors: Vec<Factor>,
    intrinsic: usize,
    /// `nests[i][j]`: factor `i` nests factor `j`.
    nests: Vec<Vec<bool>>,
    nodes: Vec<HasseNode>,
    /// `marginal[h][g]`: node `h` is strictly marginal to node `g`.
    marginal: Vec<Vec<bool>>,
    /// Declared edges `(ancestor, pseudo node)` and `(pseudo node, host)` by components.
    declared: Vec<(Vec<usize>, Vec<usize>)>,
}

/// Builds the Hasse diagram of a tier formula.
pub fn build_hasse(formula: &TierFormula) -> Result<HasseDiagram, ModelError> {
    let factors = formula.factors();
    let index = |name: &str| factors.iter().position(|f| f.name == name).unwrap();
    let mut pairs = Vec::new();
    nesting_pairs(formula, &index, &mut pairs);
    let k = factors.len();
    let mut nests = vec![vec![false; k]; k];
    for (a, b) in pairs {
        nests[a][b] = true;
    }
    let nodes = expand_sets(formula, &index)
        .into_iter()
        .map(|s| HasseNode {
            n: s.iter().map(|&i| factors[i].levels).product(),
            components: s.into_iter().collect(),
            df: 0,
            name: String::new(),
            kind: NodeKind::Intrinsic,
        })
        .collect();
    let mut d = HasseDiagram {
        intrinsic: k,
        factors,
        nests,
        nodes,
        marginal: Vec::new(),
        declared: Vec::new(),
    };
    d.recompute()?;
    Ok(d)
}

/// The source name of the node at `index`.
pub fn source_name(index: usize, diagram: &HasseDiagram) -> &str {
    &diagram.nodes[index].name
}

impl HasseDiagram {
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// True for factors introduced as pseudofactors.
    pub fn is_pseudofactor(&self, factor: usize) -> bool {
        factor >= self.intrinsic
    }

    pub fn nodes(&self) -> &[HasseNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Finds a node by its current name, or an intrinsic node by the name it
    /// had before pseudofactors split it.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name).or_else(|| {
            self.nodes.iter().position(|n| {
                n.kind == NodeKind::Intrinsic && self.base_name(&n.components) == name
            })
        })
    }

    /// Node `h` is strictly marginal to node `g`.
    pub fn is_marginal(&self, h: usize, g: usize) -> bool {
        self.marginal[h][g]
    }

    /// Cover pairs `(h, g)`: `h` marginal to `g` with nothing in between.
    pub fn cover_edges(&self) -> Vec<(usize, usize)> {
        let n = self.nodes.len();
        let mut out = Vec::new();
        for h in 0..n {
            for g in 0..n {
                if self.marginal[h][g]
                    && !(0..n).any(|m| self.marginal[h][m] && self.marginal[m][g])
                {
                    out.push((h, g));
                }
            }
        }
        out
    }

    pub fn total_df(&self) -> u64 {
        self.nodes.iter().map(|n| n.df).sum()
    }

    /// Components of a node as factor names, in storage order.
    pub fn component_names(&self, node: usize) -> Vec<&str> {
        self.nodes[node]
            .components
            .iter()
            .map(|&i| self.factors[i].name.as_str())
            .collect()
    }

    /// Inserts a pseudofactor node refining `host`, below each node in
    /// `ancestors`. The node is placed immediately before its host.
    pub fn with_pseudofactor(
        &self,
        name: &str,
        levels: u64,
        host: &str,
        ancestors: &[&str],
    ) -> Result<HasseDiagram, ModelError> {
        if levels == 0 {
            return Err(ModelError::NoLevels(name.to_string()));
        }
        if self.factors.iter().any(|f| f.name == name) {
            return Err(ModelError::DuplicateFactor(name.to_string()));
        }
        let h = self
            .position(host)
            .ok_or_else(|| ModelError::UnknownNode(host.to_string()))?;
        if self.nodes[h].components.is_empty() {
            return Err(ModelError::RefinesMean(name.to_string()));
        }
        let mut anc = Vec::new();
        for a in ancestors {
            let i = self
                .position(a)
                .ok_or_else(|| ModelError::UnknownNode(a.to_string()))?;
            if !self.marginal[i][h] {
                return Err(ModelError::AncestorNotMarginal {
                    pseudo: name.to_string(),
                    ancestor: a.to_string(),
                    host: host.to_string(),
                });
            }
            anc.push(i);
        }
        let mut d = self.clone();
        let fi = d.factors.len();
        d.factors.push(Factor::new(name, levels));
        for row in &mut d.nests {
            row.push(false);
        }
        d.nests.push(vec![false; fi + 1]);
        let mut comps: Set = anc
            .iter()
            .flat_map(|&i| self.nodes[i].components.iter().copied())
            .collect();
        comps.insert(fi);
        let comps: Vec<usize> = comps.into_iter().collect();
        let host_comps = self.nodes[h].components.clone();
        for &i in &anc {
            d.declared.push((self.nodes[i].components.clone(), comps.clone()));
        }
        d.declared.push((comps.clone(), host_comps.clone()));
        d.nodes.insert(
            h,
            HasseNode {
                n: comps.iter().map(|&i| d.factors[i].levels).product(),
                components: comps,
                df: 0,
                name: String::new(),
                kind: NodeKind::Pseudo {
                    factor: fi,
                    host: host_comps,
                },
            },
        );
        d.recompute()?;
        Ok(d)
    }

    fn index_of(&self, comps: &[usize]) -> usize {
        self.nodes
            .iter()
            .position(|n| n.components == comps)
            .expect("declared node exists")
    }

    fn recompute(&mut self) -> Result<(), ModelError> {
        let n = self.nodes.len();
        let mut m = vec![vec![false; n]; n];
        for h in 0..n {
            for g in 0..n {
                let (a, b) = (&self.nodes[h], &self.nodes[g]);
                if a.kind == NodeKind::Intrinsic
                    && b.kind == NodeKind::Intrinsic
                    && a.components.len() < b.components.len()
                    && a.components.iter().all(|c| b.components.contains(c))
                {
                    m[h][g] = true;
                }
            }
        }
        for (a, b) in &self.declared {
            let (i, j) = (self.index_of(a), self.index_of(b));
            m[i][j] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if m[i][k] {
                    for j in 0..n {
                        if m[k][j] {
                            m[i][j] = true;
                        }
                    }
                }
            }
        }
        self.marginal = m;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&g| (0..n).filter(|&h| self.marginal[h][g]).count());
        let mut df = vec![0i128; n];
        for &g in &order {
            let below: i128 = (0..n).filter(|&h| self.marginal[h][g]).map(|h| df[h]).sum();
            df[g] = self.nodes[g].n as i128 - below;
        }

        for g in 0..n {
            let name = self.name_for(g);
            self.nodes[g].name = name;
        }
        for g in 0..n {
            if df[g] < 0 {
                return Err(ModelError::NegativeDf {
                    node: self.nodes[g].name.clone(),
                    df: df[g],
                });
            }
            self.nodes[g].df = df[g] as u64;
        }
        for g in 0..n {
            if self.nodes[..g].iter().any(|x| x.name == self.nodes[g].name) {
                return Err(ModelError::NameCollision(self.nodes[g].name.clone()));
            }
        }
        Ok(())
    }

    /// Orders a set of intrinsic factors: the nesting part first (recursively),
    /// then the remaining factors in formula order.
    fn order(&self, comps: &[usize]) -> Vec<usize> {
        let (nesting, plain) = self.split(comps);
        let mut out = if nesting.is_empty() {
            Vec::new()
        } else {
            self.order(&nesting)
        };
        out.extend(plain);
        out
    }

    fn split(&self, comps: &[usize]) -> (Vec<usize>, Vec<usize>) {
        comps
            .iter()
            .partition(|&&i| comps.iter().any(|&j| self.nests[i][j]))
    }

    fn join(&self, ids: &[usize], sep: &str) -> String {
        ids.iter()
            .map(|&i| self.factors[i].name.as_str())
            .collect::<Vec<_>>()
            .join(sep)
    }

    fn base_name(&self, comps: &[usize]) -> String {
        if comps.is_empty() {
            return MEAN.to_string();
        }
        let intrinsic: Vec<usize> = comps.iter().copied().filter(|&i| i < self.intrinsic).collect();
        let pseudo: Vec<usize> = comps.iter().copied().filter(|&i| i >= self.intrinsic).collect();
        if let Some((&last, rest)) = pseudo.split_last() {
            // A pseudofactor nested in everything else on the node.
            let mut inside = self.order(&intrinsic);
            inside.extend_from_slice(rest);
            let head = self.factors[last].name.clone();
            return if inside.is_empty() {
                head
            } else {
                format!("{head}[{}]", self.join(&inside, WEDGE))
            };
        }
        let (nesting, plain) = self.split(comps);
        let head = self.join(&plain, "#");
        if nesting.is_empty() {
            head
        } else {
            format!("{head}[{}]", self.join(&self.order(&nesting), WEDGE))
        }
    }

    fn name_for(&self, g: usize) -> String {
        let node = &self.nodes[g];
        let base = self.base_name(&node.components);
        if node.kind != NodeKind::Intrinsic {
            return base;
        }
        let pseudo: Vec<usize> = (0..self.nodes.len())
            .filter(|&p| {
                matches!(&self.nodes[p].kind, NodeKind::Pseudo { host, .. } if *host == node.components)
            })
            .collect();
        let maximal: Vec<usize> = pseudo
            .iter()
            .copied()
            .filter(|&p| !pseudo.iter().any(|&q| self.marginal[p][q]))
            .collect();
        match maximal.as_slice() {
            [] => base,
            [only] => {
                let names: Vec<usize> = self.nodes[*only]
                    .components
                    .iter()
                    .copied()
                    .filter(|&i| i >= self.intrinsic)
                    .collect();
                let label = self.join(&names, WEDGE);
                if names.len() > 1 {
                    format!("{base}{VDASH}({label})")
                } else {
                    format!("{base}{VDASH}{label}")
                }
            }
            _ => format!("{base}{PERP}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decls(spec: &[(&str, u64)]) -> Vec<Factor> {
        spec.iter().map(|&(n, l)| Factor::new(n, l)).collect()
    }

    fn names(d: &HasseDiagram) -> Vec<String> {
        d.nodes().iter().map(|n| n.name.clone()).collect()
    }

    fn dfs(d: &HasseDiagram) -> Vec<u64> {
        d.nodes().iter().map(|n| n.df).collect()
    }

    #[test]
    fn parses_precedence_and_associativity() {
        let f = decls(&[("A", 2), ("B", 2), ("C", 2)]);
        let t = parse_formula("A*B/C", &f).unwrap();
        assert_eq!(t.to_string(), "(A*(B/C))");
        let t = parse_formula("A/B/C", &f).unwrap();
        assert_eq!(t.to_string(), "((A/B)/C)");
        let t = parse_formula("(A*B)/C", &f).unwrap();
        assert_eq!(t.to_string(), "((A*B)/C)");
    }

    #[test]
    fn blocks_plots() {
        let f = decls(&[("Blocks", 3), ("Plots", 6)]);
        let t = parse_formula("Blocks/Plots", &f).unwrap();
        assert!(matches!(t, TierFormula::Nest(..)));
        let gfs = expand(&t);
        let comps: Vec<Vec<String>> = gfs.iter().map(|g| g.components.clone()).collect();
        assert_eq!(
            comps,
            vec![vec![], vec!["Blocks".to_string()], vec!["Blocks".into(), "Plots".into()]]
        );
        let d = build_hasse(&t).unwrap();
        assert_eq!(names(&d), ["Mean", "Blocks", "Plots[Blocks]"]);
        assert_eq!(dfs(&d), [1, 2, 15]);
    }

    #[test]
    fn crossed_factors() {
        let f = decls(&[("Trellis", 4), ("Method", 2)]);
        let t = parse_formula("Trellis*Method", &f).unwrap();
        assert!(matches!(t, TierFormula::Cross(..)));
        let d = build_hasse(&t).unwrap();
        assert_eq!(names(&d), ["Mean", "Trellis", "Method", "Trellis#Method"]);
        assert_eq!(dfs(&d), [1, 3, 1, 3]);
        assert_eq!(d.cover_edges().len(), 4);
    }

    #[test]
    fn halfplots_names() {
        let f = decls(&[("Rows", 3), ("Squares", 2), ("Columns", 4), ("Halfplots", 2)]);
        let t = parse_formula("(Rows*(Squares/Columns))/Halfplots", &f).unwrap();
        let d = build_hasse(&t).unwrap();
        assert_eq!(
            names(&d),
            [
                "Mean",
                "Rows",
                "Squares",
                "Rows#Squares",
                "Columns[Squares]",
                "Rows#Columns[Squares]",
                "Halfplots[Squares ∧ Rows ∧ Columns]"
            ]
        );
        assert_eq!(dfs(&d), [1, 2, 1, 2, 6, 12, 24]);
    }

    #[test]
    fn evaluations_tier() {
        let f = decls(&[
            ("Occasions", 2),
            ("Intervals", 3),
            ("Sittings", 4),
            ("Judges", 6),
            ("Positions", 4),
        ]);
        let t = parse_formula("((Occasions/Intervals/Sittings)*Judges)/Positions", &f).unwrap();
        assert_eq!(t.factors().len(), 5);
        let d = build_hasse(&t).unwrap();
        assert_eq!(dfs(&d), [1, 1, 4, 18, 5, 5, 20, 90, 432]);
        assert_eq!(d.total_df(), 576);
        assert_eq!(d.nodes()[7].name, "Sittings#Judges[Occasions ∧ Intervals]");
        assert_eq!(
            d.nodes()[8].name,
            "Positions[Occasions ∧ Intervals ∧ Sittings ∧ Judges]"
        );
    }

    #[test]
    fn parse_errors() {
        let f = decls(&[("A", 2), ("B", 2)]);
        assert_eq!(
            parse_formula("A*C", &f),
            Err(ModelError::UnknownFactor("C".into()))
        );
        assert_eq!(
            parse_formula("A*A", &f),
            Err(ModelError::DuplicateFactor("A".into()))
        );
        assert!(matches!(
            parse_formula("A*(B", &f),
            Err(ModelError::Syntax { pos: 4, .. })
        ));
        assert!(matches!(
            parse_formula("A B", &f),
            Err(ModelError::Syntax { pos: 2, .. })
        ));
        assert!(matches!(parse_formula("", &f), Err(ModelError::Syntax { .. })));
        assert!(matches!(parse_formula("A-B", &f), Err(ModelError::Syntax { pos: 1, .. })));
    }

    #[test]
    fn pseudofactor_insertion() {
        let f = decls(&[("Socks", 48)]);
        let d = build_hasse(&parse_formula("Socks", &f).unwrap()).unwrap();
        let d = d.with_pseudofactor("S1", 12, "Socks", &["Mean"]).unwrap();
        assert_eq!(names(&d), ["Mean", "S1", "Socks ⊢ S1"]);
        assert_eq!(dfs(&d), [1, 11, 36]);

        let d = build_hasse(&parse_formula("Socks", &f).unwrap()).unwrap();
        let d = d.with_pseudofactor("S2", 3, "Socks", &["Mean"]).unwrap();
        let d = d.with_pseudofactor("S3", 4, "Socks", &["S2"]).unwrap();
        assert_eq!(names(&d), ["Mean", "S2", "S3[S2]", "Socks ⊢ (S2 ∧ S3)"]);
        assert_eq!(dfs(&d), [1, 2, 9, 36]);

        let f = decls(&[("Blocks", 4), ("Plots", 49)]);
        let mut d = build_hasse(&parse_formula("Blocks/Plots", &f).unwrap()).unwrap();
        d = d.with_pseudofactor("P1", 7, "Plots[Blocks]", &["Blocks"]).unwrap();
        d = d.with_pseudofactor("P2", 7, "Plots[Blocks]", &["Blocks"]).unwrap();
        assert_eq!(
            names(&d),
            ["Mean", "Blocks", "P1[Blocks]", "P2[Blocks]", "Plots[Blocks]_⊥"]
        );
        assert_eq!(dfs(&d), [1, 3, 24, 24, 144]);
        assert_eq!(d.total_df(), 196);
        let p1 = d.position("P1[Blocks]").unwrap();
        assert!(d.is_marginal(0, p1));
        assert!(d.is_marginal(p1, d.len() - 1));
        assert!(!d.is_marginal(p1, 3));
    }

    #[test]
    fn pseudofactor_errors() {
        let f = decls(&[("Blocks", 4), ("Plots", 49)]);
        let d = build_hasse(&parse_formula("Blocks/Plots", &f).unwrap()).unwrap();
        assert!(matches!(
            d.with_pseudofactor("P1", 7, "Nope", &["Blocks"]),
            Err(ModelError::UnknownNode(_))
        ));
        assert!(matches!(
            d.with_pseudofactor("P1", 7, "Blocks", &["Plots[Blocks]"]),
            Err(ModelError::AncestorNotMarginal { .. })
        ));
        assert!(matches!(
            d.with_pseudofactor("P1", 70, "Plots[Blocks]", &["Blocks"]),
            Err(ModelError::NegativeDf { .. })
        ));
        assert!(matches!(
            d.with_pseudofactor("Blocks", 7, "Plots[Blocks]", &["Mean"]),
            Err(ModelError::DuplicateFactor(_))
        ));
    }
}
