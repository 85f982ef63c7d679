//! Concrete structures on object sets.
//!
//! An [`AllocationTable`] records the level of every factor on every object.
//! From it and a [`HasseDiagram`] we build one projector per node by
//! subtracting, from the averaging operator of the node, the projectors of
//! all nodes marginal to it. [`embed`] carries a structure on a randomized
//! tier into the space of the observational units through its design
//! function.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::algebra::{
    format_rational, projector_diagnostic, AlgebraError, LabelSet, LabeledMatrix, Labels,
};
use crate::model::{GeneralizedFactor, HasseDiagram, ModelError, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("tier `{tier}` has no column for factor `{column}`")]
    MissingColumn { tier: String, column: String },
    #[error("column `{column}` has {got} values for {expected} objects")]
    ColumnLength {
        column: String,
        expected: usize,
        got: usize,
    },
    #[error("column `{column}`: level {value} on object `{object}` is outside 1..={levels}")]
    LevelOutOfRange {
        column: String,
        object: String,
        value: u64,
        levels: u64,
    },
    #[error("`{node}` should have {expected} level combinations but {observed} occur")]
    LevelCount {
        node: String,
        expected: u64,
        observed: usize,
    },
    #[error("tier `{tier}`: design is not equireplicate (replication: count) {histogram:?}")]
    NotEquireplicate {
        tier: String,
        histogram: Vec<(usize, usize)>,
    },
    #[error("column `{column}` takes several values on object `{object}` of tier `{tier}`")]
    Inconsistent {
        tier: String,
        column: String,
        object: String,
    },
    #[error("two rows share the index `{0}` of the observational units")]
    DuplicateObject(String),
    #[error("pseudofactor `{pseudo}` splits levels of its host `{host}`")]
    PseudoSplitsHost { pseudo: String, host: String },
    #[error("pseudofactor node `{pseudo}` is aliased with `{node}`")]
    Aliased { pseudo: String, node: String },
    #[error("source `{source_name}` is not a projector: {reason}")]
    NotProjector { source_name: String, reason: String },
    #[error("sources `{a}` and `{b}` are not orthogonal")]
    NotOrthogonal { a: String, b: String },
    #[error("projectors of tier `{0}` do not sum to its support")]
    Incomplete(String),
    #[error("no source named `{0}`")]
    UnknownSource(String),
    #[error("source name `{0}` already exists")]
    DuplicateSource(String),
    #[error("design function maps into `{got}` but the structure is on `{expected}`")]
    TierMismatch { expected: String, got: String },
    #[error("object set is empty")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A named, ordered set of objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectSet {
    pub id: String,
    pub labels: Labels,
}

impl ObjectSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Levels of each factor on each object, 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationTable {
    pub objects: ObjectSet,
    columns: Vec<(String, Vec<u64>)>,
}

impl AllocationTable {
    pub fn new(
        objects: ObjectSet,
        columns: Vec<(String, Vec<u64>)>,
    ) -> Result<Self, StructureError> {
        for (name, values) in &columns {
            if values.len() != objects.len() {
                return Err(StructureError::ColumnLength {
                    column: name.clone(),
                    expected: objects.len(),
                    got: values.len(),
                });
            }
        }
        Ok(AllocationTable { objects, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[u64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    fn require(&self, name: &str) -> Result<&[u64], StructureError> {
        self.column(name).ok_or_else(|| StructureError::MissingColumn {
            tier: self.objects.id.clone(),
            column: name.to_string(),
        })
    }

    fn check_levels(&self, name: &str, levels: u64) -> Result<(), StructureError> {
        let col = self.require(name)?;
        for (i, &v) in col.iter().enumerate() {
            if v == 0 || v > levels {
                return Err(StructureError::LevelOutOfRange {
                    column: name.to_string(),
                    object: self.objects.labels.get(i).to_string(),
                    value: v,
                    levels,
                });
            }
        }
        Ok(())
    }

    /// Class index of each object under the level combinations of `names`,
    /// plus the number of classes. Classes are numbered by first occurrence.
    pub fn partition(&self, names: &[&str]) -> Result<(Vec<usize>, usize), StructureError> {
        let cols: Vec<&[u64]> = names
            .iter()
            .map(|n| self.require(n))
            .collect::<Result<_, _>>()?;
        let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
        let class = (0..self.objects.len())
            .map(|i| {
                let key: Vec<u64> = cols.iter().map(|c| c[i]).collect();
                let next = ids.len();
                *ids.entry(key).or_insert(next)
            })
            .collect();
        Ok((class, ids.len()))
    }
}

/// A pseudofactor splitting one source of a tier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudofactorDecl {
    pub name: String,
    pub levels: u64,
    /// Source name of the node it refines.
    pub refines: String,
    /// Nodes declared marginal to the new node.
    pub ancestors: Vec<String>,
    /// Column of the allocation table holding its levels.
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub name: String,
    pub projector: LabeledMatrix,
    pub df: u64,
}

/// Mutually orthogonal symmetric idempotents summing to `support`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Structure {
    pub tier: String,
    pub sources: Vec<Source>,
    pub support: LabeledMatrix,
    /// Nodes whose projector has rank zero and was left out.
    pub dropped: Vec<String>,
}

impl Structure {
    pub fn objects(&self) -> &Labels {
        self.support.row_labels()
    }

    pub fn source(&self, name: &str) -> Option<&Source> {
        self.sources.iter().find(|s| s.name == name)
    }

    pub fn total_df(&self) -> u64 {
        self.sources.iter().map(|s| s.df).sum()
    }

    /// Checks every structure axiom exactly.
    pub fn verify(&self) -> Result<(), StructureError> {
        for s in &self.sources {
            projector_diagnostic(&s.projector).map_err(|reason| StructureError::NotProjector {
                source_name: s.name.clone(),
                reason,
            })?;
            let tr = s.projector.trace()?;
            if tr != crate::algebra::integer(s.df as i64) {
                return Err(StructureError::NotProjector {
                    source_name: s.name.clone(),
                    reason: format!("trace {} but {} d.f.", format_rational(&tr), s.df),
                });
            }
        }
        // For symmetric idempotents tr(AB) = ‖AB‖², so a zero trace is a zero product.
        for (i, a) in self.sources.iter().enumerate() {
            for b in &self.sources[i + 1..] {
                if !num_traits::Zero::is_zero(&a.projector.trace_of_product(&b.projector)?) {
                    return Err(StructureError::NotOrthogonal {
                        a: a.name.clone(),
                        b: b.name.clone(),
                    });
                }
            }
        }
        let sum = LabeledMatrix::sum(self.objects(), self.sources.iter().map(|s| &s.projector))?;
        if sum != self.support {
            return Err(StructureError::Incomplete(self.tier.clone()));
        }
        Ok(())
    }
}

/// Averaging operator of a generalized factor over the table's objects.
pub fn averaging_matrix(
    g: &GeneralizedFactor,
    alloc: &AllocationTable,
) -> Result<LabeledMatrix, StructureError> {
    let names: Vec<&str> = g.components.iter().map(String::as_str).collect();
    let (class, _) = alloc.partition(&names)?;
    Ok(averaging_from_classes(&alloc.objects.labels, &class))
}

fn averaging_from_classes(labels: &Labels, class: &[usize]) -> LabeledMatrix {
    let n = class.len();
    let k = class.iter().max().map_or(0, |m| m + 1);
    let mut size = vec![0i64; k];
    for &c in class {
        size[c] += 1;
    }
    let l = size
        .iter()
        .fold(1i64, |acc, &s| num_integer::Integer::lcm(&acc, &s));
    let mut nums = vec![0i64; n * n];
    for i in 0..n {
        let v = l / size[class[i]];
        for j in 0..n {
            if class[j] == class[i] {
                nums[i * n + j] = v;
            }
        }
    }
    LabeledMatrix::from_integers(labels.clone(), labels.clone(), l, nums)
        .expect("shape matches labels")
}

fn node_partition(
    diagram: &HasseDiagram,
    node: usize,
    alloc: &AllocationTable,
) -> Result<(Vec<usize>, usize), StructureError> {
    alloc.partition(&diagram.component_names(node))
}

/// Builds the projector of every node; rank-zero nodes are dropped and logged.
pub fn build_structure(
    tier: &str,
    diagram: &HasseDiagram,
    alloc: &AllocationTable,
) -> Result<Structure, StructureError> {
    if alloc.objects.is_empty() {
        return Err(StructureError::Empty);
    }
    for f in diagram.factors() {
        alloc.check_levels(&f.name, f.levels)?;
    }
    let labels = alloc.objects.labels.clone();
    let nodes = diagram.nodes();
    let mut projectors: Vec<LabeledMatrix> = Vec::with_capacity(nodes.len());
    for (g, node) in nodes.iter().enumerate() {
        let (class, observed) = node_partition(diagram, g, alloc)?;
        if observed as u64 != node.n {
            return Err(StructureError::LevelCount {
                node: node.name.clone(),
                expected: node.n,
                observed,
            });
        }
        let mut p = averaging_from_classes(&labels, &class);
        for h in 0..g {
            if diagram.is_marginal(h, g) {
                p = p.sub(&projectors[h])?;
            }
        }
        projectors.push(p);
    }
    let mut sources = Vec::new();
    let mut dropped = Vec::new();
    for (node, p) in nodes.iter().zip(projectors) {
        if node.df == 0 {
            if !p.is_zero() {
                return Err(StructureError::NotProjector {
                    source_name: node.name.clone(),
                    reason: "zero degrees of freedom but nonzero projector".into(),
                });
            }
            dropped.push(node.name.clone());
        } else {
            sources.push(Source {
                name: node.name.clone(),
                projector: p,
                df: node.df,
            });
        }
    }
    let s = Structure {
        tier: tier.to_string(),
        sources,
        support: LabeledMatrix::identity(labels),
        dropped,
    };
    s.verify()?;
    Ok(s)
}

/// Inserts pseudofactor nodes after checking each against the allocation.
pub fn refine_with_pseudofactors(
    diagram: &HasseDiagram,
    decls: &[PseudofactorDecl],
    alloc: &AllocationTable,
) -> Result<HasseDiagram, StructureError> {
    let mut d = diagram.clone();
    let mut work = alloc.clone();
    for decl in decls {
        alloc.check_levels(&decl.column, decl.levels)?;
        let ancestors: Vec<&str> = decl.ancestors.iter().map(String::as_str).collect();
        d = d.with_pseudofactor(&decl.name, decl.levels, &decl.refines, &ancestors)?;
        let p = d
            .nodes()
            .iter()
            .position(|n| matches!(&n.kind, NodeKind::Pseudo { factor, .. } if d.factors()[*factor].name == decl.name))
            .expect("node just inserted");
        let NodeKind::Pseudo { host, .. } = &d.nodes()[p].kind else {
            unreachable!()
        };
        let h = d
            .nodes()
            .iter()
            .position(|n| n.kind == NodeKind::Intrinsic && &n.components == host)
            .expect("host exists");
        if work.column(&decl.name).is_none() {
            let col = work.require(&decl.column)?.to_vec();
            work.columns.push((decl.name.clone(), col));
        }
        let aliased = &work;
        let (pc, pn) = node_partition(&d, p, aliased)?;
        let (hc, _) = node_partition(&d, h, aliased)?;
        // Each host class must sit inside one class of the pseudofactor node.
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for (a, b) in hc.iter().zip(&pc) {
            if *seen.entry(*a).or_insert(*b) != *b {
                return Err(StructureError::PseudoSplitsHost {
                    pseudo: decl.name.clone(),
                    host: decl.refines.clone(),
                });
            }
        }
        for (q, node) in d.nodes().iter().enumerate() {
            if q == p {
                continue;
            }
            let Ok((qc, qn)) = node_partition(&d, q, aliased) else {
                continue;
            };
            if qn == pn && same_partition(&pc, &qc) {
                return Err(StructureError::Aliased {
                    pseudo: d.nodes()[p].name.clone(),
                    node: node.name.clone(),
                });
            }
        }
    }
    Ok(d)
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut map: HashMap<usize, usize> = HashMap::new();
    a.iter()
        .zip(b)
        .all(|(x, y)| *map.entry(*x).or_insert(*y) == *y)
}

/// Replaces the named sources by their sum, placed where the first of them was.
pub fn merge_sources(
    s: &Structure,
    names: &[&str],
    new_name: &str,
) -> Result<Structure, StructureError> {
    let mut positions = Vec::new();
    for n in names {
        let i = s
            .sources
            .iter()
            .position(|x| x.name == *n)
            .ok_or_else(|| StructureError::UnknownSource(n.to_string()))?;
        if positions.contains(&i) {
            return Err(StructureError::DuplicateSource(n.to_string()));
        }
        positions.push(i);
    }
    if s
        .sources
        .iter()
        .enumerate()
        .any(|(i, x)| x.name == new_name && !positions.contains(&i))
    {
        return Err(StructureError::DuplicateSource(new_name.to_string()));
    }
    let first = *positions.iter().min().ok_or_else(|| StructureError::UnknownSource(String::new()))?;
    let merged = Source {
        name: new_name.to_string(),
        projector: LabeledMatrix::sum(
            s.objects(),
            positions.iter().map(|&i| &s.sources[i].projector),
        )?,
        df: positions.iter().map(|&i| s.sources[i].df).sum(),
    };
    let mut sources = Vec::with_capacity(s.sources.len() + 1 - positions.len());
    for (i, src) in s.sources.iter().enumerate() {
        if i == first {
            sources.push(merged.clone());
        } else if !positions.contains(&i) {
            sources.push(src.clone());
        }
    }
    Ok(Structure {
        tier: s.tier.clone(),
        sources,
        support: s.support.clone(),
        dropped: s.dropped.clone(),
    })
}

/// A total map between object sets with equal replication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignFunction {
    pub domain: ObjectSet,
    pub codomain: ObjectSet,
    map: Vec<usize>,
    replication: u64,
}

impl DesignFunction {
    /// `map[i]` is the codomain position of domain object `i`.
    pub fn new(
        domain: ObjectSet,
        codomain: ObjectSet,
        map: Vec<usize>,
    ) -> Result<Self, StructureError> {
        if map.len() != domain.len() {
            return Err(StructureError::ColumnLength {
                column: format!("{} -> {}", domain.id, codomain.id),
                expected: domain.len(),
                got: map.len(),
            });
        }
        let mut counts = vec![0usize; codomain.len()];
        for &m in &map {
            counts[m] += 1;
        }
        let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in &counts {
            *hist.entry(c).or_default() += 1;
        }
        if hist.len() != 1 || hist.contains_key(&0) {
            return Err(StructureError::NotEquireplicate {
                tier: codomain.id.clone(),
                histogram: hist.into_iter().collect(),
            });
        }
        let replication = counts.first().copied().unwrap_or(0) as u64;
        Ok(DesignFunction {
            domain,
            codomain,
            map,
            replication,
        })
    }

    pub fn identity(objects: ObjectSet) -> Self {
        let map = (0..objects.len()).collect();
        DesignFunction {
            domain: objects.clone(),
            codomain: objects,
            map,
            replication: 1,
        }
    }

    pub fn replication(&self) -> u64 {
        self.replication
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// Label of the image of domain object `i`.
    pub fn image(&self, i: usize) -> &str {
        self.codomain.labels.get(self.map[i])
    }

    /// `g ∘ self`.
    pub fn compose(&self, g: &DesignFunction) -> Result<DesignFunction, StructureError> {
        let pos = self.codomain.labels.positions_in(&g.domain.labels)?;
        let map = self.map.iter().map(|&m| g.map[pos[m]]).collect();
        DesignFunction::new(self.domain.clone(), g.codomain.clone(), map)
    }

    /// The map `g` on `self`'s codomain with `g ∘ self = other`, if it exists.
    pub fn factor_through(&self, other: &DesignFunction) -> Result<DesignFunction, StructureError> {
        let pos = self.domain.labels.positions_in(&other.domain.labels)?;
        let mut g: Vec<Option<usize>> = vec![None; self.codomain.len()];
        for (i, &u) in self.map.iter().enumerate() {
            let v = other.map[pos[i]];
            match g[u] {
                None => g[u] = Some(v),
                Some(w) if w == v => {}
                Some(_) => {
                    return Err(StructureError::Inconsistent {
                        tier: self.codomain.id.clone(),
                        column: other.codomain.id.clone(),
                        object: self.codomain.labels.get(u).to_string(),
                    })
                }
            }
        }
        let map = g.into_iter().map(|x| x.expect("design functions are total")).collect();
        DesignFunction::new(self.codomain.clone(), other.codomain.clone(), map)
    }
}

/// Derives the objects of a tier from the level combinations of its key
/// columns in `alloc`, together with that tier's own table and the map from
/// `alloc`'s objects onto it.
///
/// Columns are given as `(name in alloc, name in the derived table)`. Objects
/// are labelled by their levels joined with `.` and sorted numerically, so the
/// result does not depend on the order of `alloc`'s objects.
pub fn derive_design_function(
    alloc: &AllocationTable,
    tier: &str,
    keys: &[(&str, &str)],
    attributes: &[(&str, &str)],
) -> Result<(ObjectSet, AllocationTable, DesignFunction), StructureError> {
    let key_cols: Vec<&[u64]> = keys
        .iter()
        .map(|(c, _)| alloc.require(c))
        .collect::<Result<_, _>>()?;
    let attr_cols: Vec<&[u64]> = attributes
        .iter()
        .map(|(c, _)| alloc.require(c))
        .collect::<Result<_, _>>()?;
    let n = alloc.objects.len();
    let tuples: Vec<Vec<u64>> = (0..n)
        .map(|i| key_cols.iter().map(|c| c[i]).collect())
        .collect();
    let distinct: BTreeMap<&Vec<u64>, usize> = {
        let mut m: BTreeMap<&Vec<u64>, usize> = tuples.iter().map(|t| (t, 0)).collect();
        for (i, v) in m.values_mut().enumerate() {
            *v = i;
        }
        m
    };
    let labels = LabelSet::new(distinct.keys().map(|t| {
        t.iter().map(u64::to_string).collect::<Vec<_>>().join(".")
    }))?;
    let objects = ObjectSet {
        id: tier.to_string(),
        labels,
    };
    let map: Vec<usize> = tuples.iter().map(|t| distinct[t]).collect();
    let mut columns: Vec<(String, Vec<u64>)> = Vec::new();
    for (k, (_, name)) in keys.iter().enumerate() {
        let mut col = vec![0u64; objects.len()];
        for (i, &m) in map.iter().enumerate() {
            col[m] = key_cols[k][i];
        }
        columns.push((name.to_string(), col));
    }
    for (k, (src, name)) in attributes.iter().enumerate() {
        let mut col: Vec<Option<u64>> = vec![None; objects.len()];
        for (i, &m) in map.iter().enumerate() {
            let v = attr_cols[k][i];
            match col[m] {
                None => col[m] = Some(v),
                Some(w) if w == v => {}
                Some(_) => {
                    return Err(StructureError::Inconsistent {
                        tier: tier.to_string(),
                        column: src.to_string(),
                        object: objects.labels.get(m).to_string(),
                    })
                }
            }
        }
        columns.push((name.to_string(), col.into_iter().map(|v| v.unwrap_or(0)).collect()));
    }
    let table = AllocationTable::new(objects.clone(), columns)?;
    let f = DesignFunction::new(alloc.objects.clone(), objects.clone(), map)?;
    Ok((objects, table, f))
}

/// Carries a structure on `f`'s codomain into the space of `f`'s domain:
/// each projector `Q` becomes `(1/r)·X·Q·Xᵀ`.
pub fn embed(s: &Structure, f: &DesignFunction) -> Result<Structure, StructureError> {
    if !s.objects().same_set(&f.codomain.labels) {
        return Err(StructureError::TierMismatch {
            expected: s.tier.clone(),
            got: f.codomain.id.clone(),
        });
    }
    // Positions of the images in the structure's own label order.
    let pos = f.codomain.labels.positions_in(s.objects())?;
    let index: Vec<usize> = f.map.iter().map(|&m| pos[m]).collect();
    let labels = f.domain.labels.clone();
    let r = f.replication;
    let pull = |m: &LabeledMatrix| -> Result<LabeledMatrix, StructureError> {
        let aligned = m.align_to(s.objects(), s.objects())?;
        Ok(aligned.pull_back(labels.clone(), &index, r)?)
    };
    let sources = s
        .sources
        .iter()
        .map(|src| {
            Ok(Source {
                name: src.name.clone(),
                projector: pull(&src.projector)?,
                df: src.df,
            })
        })
        .collect::<Result<_, StructureError>>()?;
    Ok(Structure {
        tier: s.tier.clone(),
        sources,
        support: pull(&s.support)?,
        dropped: s.dropped.clone(),
    })
}
