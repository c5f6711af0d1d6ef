//! Stable paths with monomial simplicial coordinates, their comparability
//! filtrations, the recursion computing their limiting filtered screen and
//! point, and the inverse construction of a path with a prescribed limit.
//!
//! A path is stored on a quasi triangulation E″: edge `e` has
//! X_t(e) = coeff(e)·t^(−level(e)), and edges without a level have X_t = 0.
//! The edges with a level form the q.c.d. E.

use crate::coords::contract_edges;
use crate::error::{invariant, pre, Error, Result};
use crate::fatgraph::{EdgeSet, Fatgraph, FatgraphJson};
use crate::rational::{QJson, Q};
use crate::screens::{face_remove_arc, face_split_level, maximal_quasi_recurrent, FilteredScreen, ScreenPoint};
use num_traits::{One, Pow, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicPath {
    pub graph: Fatgraph,
    pub level: Vec<Option<usize>>,
    pub coeff: Vec<Q>,
}

impl SymbolicPath {
    pub fn new(graph: Fatgraph, level: Vec<Option<usize>>, coeff: Vec<Q>) -> Result<Self> {
        let p = SymbolicPath { graph, level, coeff };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        if !g.is_quasi_triangulation() {
            return Err(Error::Validation("ambient graph is not a quasi triangulation".into()));
        }
        if self.level.len() != g.n_edges() || self.coeff.len() != g.n_edges() {
            return Err(Error::Validation("one level and coefficient per edge expected".into()));
        }
        for e in 0..g.n_edges() {
            let ok = match self.level[e] {
                Some(_) => self.coeff[e].is_positive(),
                None => self.coeff[e].is_zero(),
            };
            if !ok {
                return Err(Error::Validation(format!("edge {e}: coefficient does not match its level")));
            }
        }
        if !self.level.contains(&Some(0)) {
            return Err(Error::Validation("no edge of level 0".into()));
        }
        let zero = self.zero_edges();
        if !is_forest(g, &zero) {
            return Err(Error::Validation("vanishing edges do not form a forest".into()));
        }
        if !maximal_quasi_recurrent(g, &zero).is_empty() {
            return Err(Error::Validation("vanishing edges carry a quasi efficient cycle".into()));
        }
        let (e, _) = contract_edges(g, &zero).map_err(|e| Error::Validation(e.to_string()))?;
        if !e.is_qcd_dual() {
            return Err(Error::Validation("non-vanishing edges are not a q.c.d.".into()));
        }
        Ok(())
    }

    pub fn zero_edges(&self) -> EdgeSet {
        (0..self.level.len()).filter(|&e| self.level[e].is_none()).collect()
    }

    /// G(E) with the ambient index of each of its edges.
    pub fn qcd(&self) -> Result<(Fatgraph, Vec<usize>)> {
        contract_edges(&self.graph, &self.zero_edges())
    }

    /// Exact X_t at a positive rational t.
    pub fn x_at(&self, t: &Q) -> Vec<Q> {
        self.level
            .iter()
            .zip(&self.coeff)
            .map(|(l, c)| match l {
                Some(k) => c / Pow::pow(t, *k as u32),
                None => Q::zero(),
            })
            .collect()
    }
}

pub(crate) fn is_forest(g: &Fatgraph, a: &EdgeSet) -> bool {
    g.edge_components(a).iter().all(|c| c.len() + 1 == g.vertices_of(c).len())
}

/// E_0 ⊃ E_1 ⊃ …: E_k holds the edges whose level is at least the k-th
/// distinct level. Vanishing edges count as deepest and, when present,
/// form the last set on their own.
pub fn comparability_filtration(p: &SymbolicPath) -> Vec<EdgeSet> {
    let values: BTreeSet<usize> = p.level.iter().flatten().copied().collect();
    let mut out: Vec<EdgeSet> = values
        .iter()
        .map(|&v| (0..p.level.len()).filter(|&e| p.level[e].is_none_or(|l| l >= v)).collect())
        .collect();
    let zero = p.zero_edges();
    if !zero.is_empty() {
        out.push(zero);
    }
    out
}

/// (I(H), J(H)) after rescaling so that `base` is the bounded level:
/// J is everything deeper than `base`, I its maximal quasi recurrent part.
pub fn filtered_ij(p: &SymbolicPath, h: &EdgeSet, base: usize) -> Result<(EdgeSet, EdgeSet)> {
    let g = &p.graph;
    if g.edge_components(h).iter().any(|c| g.is_simple_cycle(c)) {
        return pre("H has a simple cycle component");
    }
    let j: EdgeSet = h.iter().copied().filter(|&e| p.level[e].is_none_or(|l| l > base)).collect();
    let i = maximal_quasi_recurrent(g, &j);
    Ok((i, j))
}

/// Stage-by-stage output of the recursion. Index 0 holds C_0 = Z_0 = B_0 = ∅
/// and D_0 = E″.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecursionTrace {
    pub c: Vec<EdgeSet>,
    pub z: Vec<EdgeSet>,
    pub b: Vec<EdgeSet>,
    pub d: Vec<EdgeSet>,
}

#[derive(Clone, Debug)]
pub struct Limit {
    pub screen: FilteredScreen,
    pub point: ScreenPoint,
    /// Ambient edge of each edge of the limiting q.c.d.
    pub edge_map: Vec<usize>,
    pub trace: RecursionTrace,
}

impl Limit {
    pub fn levels_in_ambient(&self) -> Vec<EdgeSet> {
        self.screen.levels.iter().map(|l| l.iter().map(|&e| self.edge_map[e]).collect()).collect()
    }

    pub fn weights_in_ambient(&self) -> BTreeMap<usize, Q> {
        self.point.weights.iter().enumerate().map(|(e, w)| (self.edge_map[e], w.clone())).collect()
    }

    /// Canonical code of the limiting graph with edges coloured by ambient index.
    pub fn ambient_code(&self) -> Result<Vec<u64>> {
        colored_code(&self.screen.graph, &self.edge_map)
    }
}

pub(crate) fn colored_code(g: &Fatgraph, ids: &[usize]) -> Result<Vec<u64>> {
    let colors: Vec<u64> = (0..g.n_half()).map(|h| ids[g.edge_of(h)] as u64).collect();
    Ok(g.canonical_form_colored(&colors)?.code)
}

/// Limiting filtered screen and point of a stable path.
pub fn limiting_point(p: &SymbolicPath) -> Result<Limit> {
    p.validate()?;
    let g = &p.graph;
    let mut tr = RecursionTrace {
        c: vec![EdgeSet::new()],
        z: vec![EdgeSet::new()],
        b: vec![EdgeSet::new()],
        d: vec![g.all_edges()],
    };
    let mut d = g.all_edges();
    let mut removed = EdgeSet::new();
    while !d.is_empty() {
        if tr.d.len() > g.n_edges() + 1 {
            return Err(Error::Invariant("recursion does not terminate".into()));
        }
        let base = d
            .iter()
            .filter_map(|&e| p.level[e])
            .min()
            .ok_or_else(|| Error::Invariant("a stage holds only vanishing edges".into()))?;
        let (i, j) = filtered_ij(p, &d, base).map_err(|e| Error::Invariant(e.to_string()))?;
        let mut c: EdgeSet = j.difference(&i).copied().collect();
        let mut z = EdgeSet::new();
        let mut next = EdgeSet::new();
        for comp in g.edge_components(&i) {
            if g.is_simple_cycle(&comp) {
                let m = comp
                    .iter()
                    .filter_map(|&e| p.level[e])
                    .min()
                    .ok_or_else(|| Error::Invariant("simple cycle of vanishing edges".into()))?;
                for e in comp {
                    if p.level[e] == Some(m) {
                        z.insert(e);
                    } else {
                        c.insert(e);
                    }
                }
            } else {
                next.extend(comp);
            }
        }
        let b: EdgeSet = d.difference(&j).copied().collect();
        let total = c.len() + z.len() + b.len() + next.len();
        let union: EdgeSet = c.iter().chain(&z).chain(&b).chain(&next).copied().collect();
        invariant(total == d.len() && union == d, || format!("stage {} is not a partition", tr.d.len()))?;
        removed.extend(c.iter().copied());
        check_forest_claim(g, &removed, &next)?;
        tr.c.push(c);
        tr.z.push(z);
        tr.b.push(b);
        tr.d.push(next.clone());
        d = next;
    }
    let (ng, back) = contract_edges(g, &removed).map_err(|e| Error::Invariant(e.to_string()))?;
    let mut by_level: BTreeMap<usize, EdgeSet> = BTreeMap::new();
    for (new, &old) in back.iter().enumerate() {
        let l = p.level[old].ok_or_else(|| Error::Invariant(format!("vanishing edge {old} survives")))?;
        by_level.entry(l).or_default().insert(new);
    }
    let screen = FilteredScreen::new(ng, by_level.into_values().collect()).map_err(|e| Error::Invariant(e.to_string()))?;
    let raw: Vec<Q> = back.iter().map(|&e| p.coeff[e].clone()).collect();
    let point = ScreenPoint::from_raw(screen.clone(), &raw)?;
    Ok(Limit { screen, point, edge_map: back, trace: tr })
}

/// The removed edges form a forest, each tree touching the next stage in at
/// most one vertex.
fn check_forest_claim(g: &Fatgraph, removed: &EdgeSet, next: &EdgeSet) -> Result<()> {
    let deep = g.vertices_of(next);
    for tree in g.edge_components(removed) {
        let vs = g.vertices_of(&tree);
        invariant(tree.len() + 1 == vs.len(), || format!("removed edges {tree:?} are not a tree"))?;
        let meet = vs.intersection(&deep).count();
        invariant(meet <= 1, || format!("removed tree {tree:?} meets the next stage {meet} times"))?;
    }
    Ok(())
}

/// Complete a q.c.d. dual to a quasi triangulation by random vertex
/// expansions. Old edges keep their indices, new edges come last.
pub fn complete_to_quasi_triangulation<R: Rng>(g: &Fatgraph, rng: &mut R) -> Result<Fatgraph> {
    if !g.is_qcd_dual() {
        return pre("not the dual of a q.c.d.");
    }
    let mut cur = g.clone();
    loop {
        let v = (0..cur.n_verts()).find(|&v| {
            let k = cur.valence(v);
            if cur.is_punctured(v) {
                k >= 2
            } else {
                k >= 4
            }
        });
        let Some(v) = v else { break };
        let k = cur.valence(v);
        cur = if cur.is_punctured(v) {
            cur.unpuncture_vertex(v, rng.gen_range(0..k))?
        } else {
            cur.split_vertex(v, rng.gen_range(0..k), 2)?
        };
    }
    Ok(cur)
}

/// A path whose limit is the given point: level k on L^k, level n+1 on the
/// removed edges E − E′ and zero on a random completion of E.
pub fn construct_path<R: Rng>(ge: &Fatgraph, removed: &EdgeSet, q: &ScreenPoint, rng: &mut R) -> Result<SymbolicPath> {
    let (ge2, back) = contract_edges(ge, removed)?;
    if !ge2.same_structure(&q.screen.graph) {
        return pre("point does not live on G(E) with the removed edges collapsed");
    }
    q.screen.validate()?;
    let n = q.screen.total_level();
    let big = complete_to_quasi_triangulation(ge, rng)?;
    let mut level = vec![None; big.n_edges()];
    let mut coeff = vec![Q::zero(); big.n_edges()];
    for &e in removed {
        level[e] = Some(n + 1);
        coeff[e] = Q::one();
    }
    for (new, &old) in back.iter().enumerate() {
        level[old] = Some(q.screen.level_of(new));
        coeff[old] = q.weights[new].clone();
    }
    SymbolicPath::new(big, level, coeff)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Refinement {
    Edge(usize),
    Set(EdgeSet),
}

/// Limiting screen of paths that make part of level `k` slightly deeper.
/// The prediction is checked against the recursion on a path with the
/// matching comparability filtration.
pub fn refine_level<R: Rng>(f: &FilteredScreen, k: usize, r: &Refinement, rng: &mut R) -> Result<FilteredScreen> {
    f.validate()?;
    if k > f.total_level() {
        return pre(format!("no level {k}"));
    }
    let g = &f.graph;
    let n = g.n_edges();
    let (moved, predicted, ids): (EdgeSet, FilteredScreen, Vec<usize>) = match r {
        Refinement::Edge(e) => {
            let e = *e;
            if !f.levels[k].contains(&e) {
                return pre(format!("edge {e} is not at level {k}"));
            }
            let (u, v) = g.endpoints(e);
            if u == v || (g.is_punctured(u) && g.is_punctured(v)) {
                return pre("endpoints must be distinct and not both punctured");
            }
            let deep = if k < f.total_level() { g.vertices_of(&f.at_least(k + 1)) } else { BTreeSet::new() };
            let free = |w: usize| !g.is_punctured(w) && !deep.contains(&w);
            if free(u) || free(v) {
                let ids = (0..n).filter(|&x| x != e).collect();
                ([e].into(), face_remove_arc(f, e)?, ids)
            } else if deep.contains(&u) && deep.contains(&v) && f.levels[k].len() > 1 {
                ([e].into(), face_split_level(f, k, &[e].into())?, (0..n).collect())
            } else {
                return pre("edge satisfies neither refinement case");
            }
        }
        Refinement::Set(a) => (a.clone(), face_split_level(f, k, a)?, (0..n).collect()),
    };
    let big = complete_to_quasi_triangulation(g, rng)?;
    let mut level = vec![None; big.n_edges()];
    let mut coeff = vec![Q::zero(); big.n_edges()];
    for x in 0..n {
        let l = f.level_of(x);
        level[x] = Some(if moved.contains(&x) || l > k { l + 1 } else { l });
        coeff[x] = Q::one();
    }
    let lim = limiting_point(&SymbolicPath::new(big, level, coeff)?)?;
    let want: Vec<EdgeSet> = predicted.levels.iter().map(|l| l.iter().map(|&x| ids[x]).collect()).collect();
    invariant(lim.levels_in_ambient() == want, || "refined levels disagree with the recursion".into())?;
    invariant(lim.ambient_code()? == colored_code(&predicted.graph, &ids)?, || {
        "refined q.c.d. disagrees with the recursion".into()
    })?;
    Ok(predicted)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlopeEstimate {
    /// Estimated level per edge; `None` for identically vanishing edges.
    pub levels: Vec<Option<i64>>,
    /// Edges whose slope at the two largest samples is not near an integer.
    pub inconclusive: Vec<usize>,
}

/// Estimate levels from exact samples of X_t by log-ratio slopes between
/// consecutive samples, rounded at the two largest.
pub fn numeric_slope_oracle(p: &SymbolicPath, ts: &[Q]) -> Result<SlopeEstimate> {
    if ts.len() < 3 || ts[0] <= Q::one() || ts.windows(2).any(|w| w[0] >= w[1]) {
        return pre("need at least three increasing samples above 1");
    }
    let xs: Vec<Vec<Q>> = ts.iter().map(|t| p.x_at(t)).collect();
    let m = ts.len();
    let mut levels = Vec::new();
    let mut inconclusive = Vec::new();
    for e in 0..p.level.len() {
        if xs[0][e].is_zero() {
            levels.push(None);
            continue;
        }
        let slope = |a: usize, b: usize| {
            let r = crate::rational::to_f64(&(&xs[b][e] / &xs[a][e]));
            let s = crate::rational::to_f64(&(&ts[b] / &ts[a]));
            -r.ln() / s.ln()
        };
        let last = slope(m - 2, m - 1);
        let round = last.round();
        let stable = (0..m - 1).all(|i| (slope(i, i + 1) - last).abs() < 0.1);
        if (last - round).abs() >= 0.1 || !stable {
            inconclusive.push(e);
        }
        levels.push(Some(round as i64));
    }
    Ok(SlopeEstimate { levels, inconclusive })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEdgeJson {
    pub edge: usize,
    pub level: Option<usize>,
    pub coeff: QJson,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicPathJson {
    pub graph: FatgraphJson,
    pub edges: Vec<PathEdgeJson>,
}

impl SymbolicPathJson {
    pub fn from_path(p: &SymbolicPath) -> Self {
        let edges = (0..p.level.len())
            .map(|e| PathEdgeJson { edge: e, level: p.level[e], coeff: (&p.coeff[e]).into() })
            .collect();
        SymbolicPathJson { graph: p.graph.to_json(), edges }
    }

    pub fn to_path(&self) -> Result<SymbolicPath> {
        let g = Fatgraph::from_json(&self.graph)?;
        let n = g.n_edges();
        let mut level = vec![None; n];
        let mut coeff = vec![Q::zero(); n];
        let mut seen = vec![false; n];
        for pe in &self.edges {
            if pe.edge >= n || seen[pe.edge] {
                return Err(Error::Structure(format!("bad edge entry {}", pe.edge)));
            }
            seen[pe.edge] = true;
            level[pe.edge] = pe.level;
            coeff[pe.edge] = pe.coeff.to_q()?;
        }
        if seen.contains(&false) {
            return Err(Error::Structure("every edge needs an entry".into()));
        }
        SymbolicPath::new(g, level, coeff)
    }
}

/// Small fixtures shared by tests and the command line tool.
pub mod examples {
    use crate::fatgraph::Fatgraph;

    /// Bigon x–y between a and b, bars u, w out to loops l1, l2.
    /// Edges: x 0, y 1, u 2, w 3, l1 4, l2 5.
    pub fn bigon_with_loops() -> Fatgraph {
        Fatgraph::new(
            vec![[0, 1], [2, 3], [4, 5], [6, 7], [8, 9], [10, 11]],
            vec![vec![0, 2, 4], vec![1, 6, 3], vec![5, 8, 9], vec![7, 10, 11]],
            &[],
        )
        .unwrap()
    }
}
