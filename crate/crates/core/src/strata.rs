//! Stratum graphs and nests.
//!
//! Edges are numbered nodes first (`0..n_nodes`), then punctures. Every
//! puncture edge ends at its own univalent ∗-vertex, which is implicit.

use crate::error::{invariant, pre, Error, Result};
use crate::fatgraph::EdgeSet;
use crate::rational::{projectivize, QJson, Q};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StratumGraph {
    n_vertices: usize,
    nodes: Vec<[usize; 2]>,
    punctures: Vec<usize>,
}

impl StratumGraph {
    pub fn new(n_vertices: usize, nodes: Vec<[usize; 2]>, punctures: Vec<usize>) -> Result<Self> {
        if punctures.is_empty() {
            return Err(Error::Structure("a stratum graph needs a ∗-vertex".into()));
        }
        if nodes.iter().flatten().chain(&punctures).any(|&v| v >= n_vertices) {
            return Err(Error::Structure("edge endpoint out of range".into()));
        }
        let g = StratumGraph { n_vertices, nodes, punctures };
        if !g.is_connected() {
            return Err(Error::Structure("stratum graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_punctures(&self) -> usize {
        self.punctures.len()
    }
    pub fn n_edges(&self) -> usize {
        self.nodes.len() + self.punctures.len()
    }
    pub fn nodes(&self) -> &[[usize; 2]] {
        &self.nodes
    }
    pub fn punctures(&self) -> &[usize] {
        &self.punctures
    }
    pub fn is_node(&self, x: usize) -> bool {
        x < self.nodes.len()
    }
    pub fn puncture_edge(&self, i: usize) -> usize {
        self.nodes.len() + i
    }
    pub fn is_loop(&self, x: usize) -> bool {
        self.is_node(x) && self.nodes[x][0] == self.nodes[x][1]
    }

    /// V(x): non-∗ endpoints.
    pub fn ends(&self, x: usize) -> Vec<usize> {
        if self.is_node(x) {
            let [a, b] = self.nodes[x];
            if a == b {
                vec![a]
            } else {
                vec![a, b]
            }
        } else {
            vec![self.punctures[x - self.nodes.len()]]
        }
    }

    /// For an edge with endpoint `v`, the endpoint on the other side; `None`
    /// for a ∗-vertex.
    pub fn other_end(&self, x: usize, v: usize) -> Option<usize> {
        if self.is_node(x) {
            let [a, b] = self.nodes[x];
            Some(if a == v { b } else { a })
        } else {
            None
        }
    }

    pub fn star(&self, v: usize) -> Vec<usize> {
        (0..self.n_edges()).filter(|&x| self.ends(x).contains(&v)).collect()
    }

    /// Edges sharing a non-∗ endpoint with `x`, other than `x`.
    pub fn adjacent(&self, x: usize) -> BTreeSet<usize> {
        self.ends(x).into_iter().flat_map(|v| self.star(v)).filter(|&y| y != x).collect()
    }

    pub fn all_edges(&self) -> EdgeSet {
        (0..self.n_edges()).collect()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_vertices];
        let mut stack = vec![0];
        if self.n_vertices == 0 {
            return false;
        }
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &[a, b] in &self.nodes {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Collapse nodes: endpoints merge, loops disappear. Returns the new
    /// graph and the image of each old edge.
    pub fn collapse(&self, set: &EdgeSet) -> Result<(StratumGraph, Vec<Option<usize>>)> {
        if set.iter().any(|&x| !self.is_node(x)) {
            return pre("only nodes can be collapsed");
        }
        let mut parent: Vec<usize> = (0..self.n_vertices).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &x in set {
            let [a, b] = self.nodes[x];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
        let mut vmap = vec![usize::MAX; self.n_vertices];
        let mut next = 0;
        for v in 0..self.n_vertices {
            let r = find(&mut parent, v);
            if vmap[r] == usize::MAX {
                vmap[r] = next;
                next += 1;
            }
            vmap[v] = vmap[r];
        }
        let mut emap = vec![None; self.n_edges()];
        let mut nodes = Vec::new();
        for (x, &[a, b]) in self.nodes.iter().enumerate() {
            if !set.contains(&x) {
                emap[x] = Some(nodes.len());
                nodes.push([vmap[a], vmap[b]]);
            }
        }
        let nn = nodes.len();
        let punctures: Vec<usize> = self.punctures.iter().map(|&v| vmap[v]).collect();
        for i in 0..punctures.len() {
            emap[self.nodes.len() + i] = Some(nn + i);
        }
        Ok((StratumGraph::new(next, nodes, punctures)?, emap))
    }

    /// Isomorphism-invariant key: minimum over vertex relabellings of the
    /// sorted node and puncture lists.
    pub fn canonical_key(&self) -> (usize, Vec<[usize; 2]>, Vec<usize>) {
        let deg = self.degrees();
        let mut order: Vec<usize> = (0..self.n_vertices).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(deg[v]));
        let mut best: Option<(Vec<[usize; 2]>, Vec<usize>)> = None;
        let mut perm = vec![usize::MAX; self.n_vertices];
        let mut used = vec![false; self.n_vertices];
        self.key_search(&deg, &order, 0, &mut perm, &mut used, &mut best);
        let (n, p) = best.unwrap();
        (self.n_vertices, n, p)
    }

    fn degrees(&self) -> Vec<(usize, usize)> {
        let mut d = vec![(0, 0); self.n_vertices];
        for &[a, b] in &self.nodes {
            d[a].0 += 1;
            d[b].0 += 1;
        }
        for &v in &self.punctures {
            d[v].1 += 1;
        }
        d
    }

    /// Assign new labels position by position, only within blocks of equal
    /// degree.
    fn key_search(
        &self,
        deg: &[(usize, usize)],
        order: &[usize],
        pos: usize,
        perm: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best: &mut Option<(Vec<[usize; 2]>, Vec<usize>)>,
    ) {
        if pos == self.n_vertices {
            let mut nodes: Vec<[usize; 2]> = self
                .nodes
                .iter()
                .map(|&[a, b]| {
                    let (x, y) = (perm[a], perm[b]);
                    [x.min(y), x.max(y)]
                })
                .collect();
            nodes.sort();
            let mut ps: Vec<usize> = self.punctures.iter().map(|&v| perm[v]).collect();
            ps.sort();
            let cand = (nodes, ps);
            if best.as_ref().is_none_or(|b| cand < *b) {
                *best = Some(cand);
            }
            return;
        }
        let want = &deg[order[pos]];
        for v in 0..self.n_vertices {
            if !used[v] && deg[v] == *want {
                used[v] = true;
                perm[v] = pos;
                self.key_search(deg, order, pos + 1, perm, used, best);
                used[v] = false;
            }
        }
    }

    pub fn canonical(&self) -> StratumGraph {
        let (n, nodes, punctures) = self.canonical_key();
        StratumGraph { n_vertices: n, nodes, punctures }
    }

    pub fn to_json(&self) -> StratumGraphJson {
        StratumGraphJson { vertices: self.n_vertices, nodes: self.nodes.clone(), punctures: self.punctures.clone() }
    }

    pub fn from_json(j: &StratumGraphJson) -> Result<Self> {
        StratumGraph::new(j.vertices, j.nodes.clone(), j.punctures.clone())
    }

    /// DOT rendering; `label` gives an optional edge label, `tail` an
    /// optional initial vertex (`None` inside means towards ∗).
    pub fn dot_with(&self, name: &str, label: impl Fn(usize) -> Option<String>, tail: impl Fn(usize) -> Option<Option<usize>>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "graph {name} {{");
        for v in 0..self.n_vertices {
            let _ = writeln!(s, "  v{v} [label=\"v{v}\"];");
        }
        for (i, _) in self.punctures.iter().enumerate() {
            let _ = writeln!(s, "  s{i} [label=\"*\", shape=plaintext];");
        }
        for x in 0..self.n_edges() {
            let (a, b) = if self.is_node(x) {
                (format!("v{}", self.nodes[x][0]), format!("v{}", self.nodes[x][1]))
            } else {
                let i = x - self.n_nodes();
                (format!("v{}", self.punctures[i]), format!("s{i}"))
            };
            let mut attrs = vec![format!("name=\"{}{}\"", if self.is_node(x) { "n" } else { "p" }, x)];
            if let Some(l) = label(x) {
                attrs.push(format!("label=\"{l}\""));
            }
            let (a, b) = match tail(x) {
                Some(t) => {
                    attrs.push("dir=forward".into());
                    match t {
                        Some(v) if self.is_node(x) && self.nodes[x][1] == v && self.nodes[x][0] != v => (b, a),
                        _ => (a, b),
                    }
                }
                None => (a, b),
            };
            let _ = writeln!(s, "  {a} -- {b} [{}];", attrs.join(", "));
        }
        s.push_str("}\n");
        s
    }

    pub fn to_dot(&self, name: &str) -> String {
        self.dot_with(name, |_| None, |_| None)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumGraphJson {
    pub vertices: usize,
    pub nodes: Vec<[usize; 2]>,
    pub punctures: Vec<usize>,
}

/// Which nest condition fails first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NestViolation {
    /// No puncture at level zero.
    NoZeroPuncture,
    /// A node at level zero.
    NodeAtZero(usize),
    /// A node with no strictly lower adjacent edge.
    Inadmissible(usize),
    /// A level between zero and the maximum is unused.
    Gap(usize),
}

impl NestViolation {
    pub fn condition(&self) -> usize {
        match self {
            NestViolation::NoZeroPuncture => 1,
            NestViolation::NodeAtZero(_) => 2,
            NestViolation::Inadmissible(_) => 3,
            NestViolation::Gap(_) => 4,
        }
    }
}

pub fn check_levels(g: &StratumGraph, f: &[usize]) -> std::result::Result<(), NestViolation> {
    check_admissible(g, f)?;
    let max = f.iter().copied().max().unwrap_or(0);
    let used: BTreeSet<usize> = f.iter().copied().collect();
    match (0..=max).find(|k| !used.contains(k)) {
        Some(k) => Err(NestViolation::Gap(k)),
        None => Ok(()),
    }
}

/// Conditions 1-3.
fn check_admissible(g: &StratumGraph, f: &[usize]) -> std::result::Result<(), NestViolation> {
    if !(0..g.n_punctures()).any(|i| f[g.puncture_edge(i)] == 0) {
        return Err(NestViolation::NoZeroPuncture);
    }
    if let Some(n) = (0..g.n_nodes()).find(|&n| f[n] == 0) {
        return Err(NestViolation::NodeAtZero(n));
    }
    if let Some(n) = (0..g.n_nodes()).find(|&n| !g.adjacent(n).iter().any(|&x| f[x] < f[n])) {
        return Err(NestViolation::Inadmissible(n));
    }
    Ok(())
}

pub fn validate_nest(g: &StratumGraph, f: &[usize]) -> std::result::Result<(), NestViolation> {
    if f.len() != g.n_edges() {
        return Err(NestViolation::NoZeroPuncture);
    }
    check_levels(g, f)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nest {
    pub graph: StratumGraph,
    pub f: Vec<usize>,
}

impl Nest {
    pub fn new(graph: StratumGraph, f: Vec<usize>) -> Result<Self> {
        if f.len() != graph.n_edges() {
            return Err(Error::Structure("one level per edge".into()));
        }
        validate_nest(&graph, &f).map_err(|v| Error::Validation(format!("nest condition {} fails: {v:?}", v.condition())))?;
        Ok(Nest { graph, f })
    }

    pub fn max_level(&self) -> usize {
        self.f.iter().copied().max().unwrap_or(0)
    }

    pub fn level(&self, k: usize) -> EdgeSet {
        (0..self.f.len()).filter(|&x| self.f[x] == k).collect()
    }

    pub fn min_level_at(&self, v: usize) -> usize {
        self.graph.star(v).iter().map(|&x| self.f[x]).min().expect("vertex with edges")
    }

    /// Min_f(v).
    pub fn min_at(&self, v: usize) -> EdgeSet {
        let m = self.min_level_at(v);
        self.graph.star(v).into_iter().filter(|&x| self.f[x] == m).collect()
    }

    pub fn sum(&self) -> usize {
        self.f.iter().sum()
    }

    fn check_m(&self, m: &EdgeSet) -> Result<()> {
        if m.iter().any(|&x| x >= self.f.len() || self.f[x] == 0) {
            return pre("M must avoid level zero");
        }
        Ok(())
    }

    pub fn to_json(&self) -> NestJson {
        NestJson { graph: self.graph.to_json(), levels: self.f.clone() }
    }

    pub fn from_json(j: &NestJson) -> Result<Self> {
        Nest::new(StratumGraph::from_json(&j.graph)?, j.levels.clone())
    }

    pub fn to_dot(&self, name: &str) -> String {
        self.graph.dot_with(name, |x| Some(self.f[x].to_string()), |_| None)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestJson {
    pub graph: StratumGraphJson,
    pub levels: Vec<usize>,
}

/// f_σ: least number of non-∗ vertices on a path to a ∗-vertex.
pub fn canonical_nest(g: &StratumGraph) -> Nest {
    let mut hops = vec![usize::MAX; g.n_vertices()];
    let mut queue: std::collections::VecDeque<usize> = g.punctures().iter().copied().collect();
    for &v in g.punctures() {
        hops[v] = 0;
    }
    while let Some(v) = queue.pop_front() {
        for &[a, b] in g.nodes() {
            for (x, y) in [(a, b), (b, a)] {
                if x == v && hops[y] == usize::MAX {
                    hops[y] = hops[v] + 1;
                    queue.push_back(y);
                }
            }
        }
    }
    let f = (0..g.n_edges())
        .map(|x| if g.is_node(x) { 1 + g.ends(x).iter().map(|&v| hops[v]).min().unwrap() } else { 0 })
        .collect();
    Nest { graph: g.clone(), f }
}

/// ⌊f⌋ for a function satisfying conditions 1-3.
pub fn floor_nest(g: &StratumGraph, f: &[usize]) -> Result<Nest> {
    if f.len() != g.n_edges() {
        return Err(Error::Structure("one level per edge".into()));
    }
    check_admissible(g, f).map_err(|v| Error::Precondition(format!("nest condition {} fails: {v:?}", v.condition())))?;
    Ok(Nest { graph: g.clone(), f: dense_rank(f) })
}

fn dense_rank(f: &[usize]) -> Vec<usize> {
    let vals: BTreeSet<usize> = f.iter().copied().collect();
    let rank: BTreeMap<usize, usize> = vals.into_iter().enumerate().map(|(i, v)| (v, i)).collect();
    f.iter().map(|v| rank[v]).collect()
}

/// ⌊f_M⌋.
pub fn insert_isolating_levels(f: &Nest, m: &EdgeSet) -> Result<Nest> {
    f.check_m(m)?;
    let raw: Vec<usize> = (0..f.f.len()).map(|x| if m.contains(&x) { 2 * f.f[x] - 1 } else { 2 * f.f[x] }).collect();
    floor_nest(&f.graph, &raw)
}

/// f^M before flooring.
pub fn lowered(f: &Nest, m: &EdgeSet) -> Vec<usize> {
    (0..f.f.len()).map(|x| if m.contains(&x) { f.f[x] - 1 } else { f.f[x] }).collect()
}

/// C(M) from the definition.
pub fn c_by_definition(f: &Nest, m: &EdgeSet) -> EdgeSet {
    let fm = lowered(f, m);
    (0..f.graph.n_nodes()).filter(|&n| f.graph.adjacent(n).iter().all(|&x| fm[n] <= fm[x])).collect()
}

/// C(M) from the two-case characterization through Min_f.
pub fn c_by_characterization(f: &Nest, m: &EdgeSet) -> EdgeSet {
    let g = &f.graph;
    let good = |n: usize, v: usize| {
        let mins = f.min_at(v);
        mins.iter().any(|&x| !m.contains(&x) && f.f[x] + 1 == f.f[n])
            && g.star(v).iter().filter(|x| m.contains(x)).all(|&y| f.f[n] <= f.f[y])
    };
    m.iter()
        .copied()
        .filter(|&n| g.is_node(n))
        .filter(|&n| {
            let vs = g.ends(n);
            let one = vs.iter().all(|&v| good(n, v));
            let two = vs.iter().any(|&v1| good(n, v1)) && vs.iter().any(|&v2| f.min_at(v2).contains(&n));
            one || two
        })
        .collect()
}

/// C(M), computed both ways.
pub fn obstruction_c(f: &Nest, m: &EdgeSet) -> Result<EdgeSet> {
    f.check_m(m)?;
    let a = c_by_definition(f, m);
    let b = c_by_characterization(f, m);
    invariant(a == b, || format!("C(M) mismatch for {m:?}: definition {a:?}, characterization {b:?}"))?;
    Ok(a)
}

pub fn is_collapsable(f: &Nest, n: usize) -> Result<bool> {
    if !f.graph.is_node(n) {
        return Ok(false);
    }
    let m: EdgeSet = [n].into();
    Ok(obstruction_c(f, &m)? == m)
}

/// Collapse C(M) and restrict ⌊f^M⌋. Returns the nest on the collapsed
/// graph and the image of each old edge.
pub fn decrease_level(f: &Nest, m: &EdgeSet) -> Result<(Nest, Vec<Option<usize>>)> {
    let c = obstruction_c(f, m)?;
    let fm = lowered(f, m);
    let (g2, emap) = f.graph.collapse(&c)?;
    let mut f2 = vec![0; g2.n_edges()];
    for (x, y) in emap.iter().enumerate() {
        if let Some(y) = y {
            f2[*y] = fm[x];
        }
    }
    let n = floor_nest(&g2, &f2).map_err(|e| Error::Invariant(format!("decrease_level left a non-nest: {e}")))?;
    Ok((n, emap))
}

/// The largest M̊ ⊆ M with C(M̊) = ∅. Anything in C(S) is in C(T) for every
/// T ⊆ S containing it, so discarding C(S) repeatedly loses no free subset.
pub fn maximal_free_subset(f: &Nest, m: &EdgeSet) -> Result<EdgeSet> {
    f.check_m(m)?;
    let mut s = m.clone();
    loop {
        let c = obstruction_c(f, &s)?;
        if c.is_empty() {
            return Ok(s);
        }
        s = s.difference(&c).copied().collect();
    }
}

/// All inclusion-maximal free subsets, by exhaustion.
pub fn maximal_free_subsets_brute(f: &Nest, m: &EdgeSet) -> Result<Vec<EdgeSet>> {
    f.check_m(m)?;
    let items: Vec<usize> = m.iter().copied().collect();
    if items.len() > 16 {
        return Err(Error::Cap("brute force over more than 16 edges".into()));
    }
    let mut free = Vec::new();
    for mask in 0u32..(1 << items.len()) {
        let s: EdgeSet = (0..items.len()).filter(|i| mask & (1 << i) != 0).map(|i| items[i]).collect();
        if c_by_definition(f, &s).is_empty() {
            free.push(s);
        }
    }
    Ok(free.iter().filter(|s| !free.iter().any(|t| t.len() > s.len() && s.is_subset(t))).cloned().collect())
}

/// M̄(f): edges strictly above f_σ.
pub fn m_bar(f: &Nest) -> EdgeSet {
    let fs = canonical_nest(&f.graph);
    (0..f.f.len()).filter(|&x| f.f[x] > fs.f[x]).collect()
}

/// m_f: least level where f and f_σ disagree.
pub fn first_disagreement(f: &Nest) -> Option<usize> {
    let fs = canonical_nest(&f.graph);
    (0..=f.max_level().max(fs.max_level())).find(|&k| f.level(k) != fs.level(k))
}

/// One step f ↦ ⌊f^{M̊(f)}⌋.
pub fn mring_step(f: &Nest) -> Result<Nest> {
    let m = maximal_free_subset(f, &m_bar(f))?;
    floor_nest(&f.graph, &lowered(f, &m)).map_err(|e| Error::Invariant(format!("free decrease left a non-nest: {e}")))
}

/// Iterate the M̊ operator to f_σ.
pub fn mring_flow(f: &Nest) -> Result<Vec<Nest>> {
    let target = canonical_nest(&f.graph);
    let cap = f.f.len() * (f.max_level() + 1) + 1;
    let mut out = vec![f.clone()];
    while out.last().unwrap().f != target.f {
        if out.len() > cap {
            return Err(Error::Invariant("M̊-flow did not reach f_σ".into()));
        }
        let cur = out.last().unwrap();
        let next = mring_step(cur)?;
        invariant(next.sum() < cur.sum(), || "M̊-flow failed to decrease".into())?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NestFace {
    /// Levels k and k+1 merge within the same stratum graph.
    Coalesce { level: usize, nest: Nest },
    /// A collapsable level is contracted, moving to another stratum graph.
    Collapse { level: usize, nest: Nest, edge_map: Vec<Option<usize>> },
}

/// Codimension-one coalescings and collapsable-level identifications.
pub fn dsigma_faces(f: &Nest) -> Result<Vec<NestFace>> {
    let mut out = Vec::new();
    for k in 1..=f.max_level() {
        let m = f.level(k);
        let c = obstruction_c(f, &m)?;
        if c.is_empty() {
            out.push(NestFace::Coalesce { level: k, nest: floor_nest(&f.graph, &lowered(f, &m))? });
        } else if c == m {
            let (nest, edge_map) = decrease_level(f, &m)?;
            out.push(NestFace::Collapse { level: k, nest, edge_map });
        }
    }
    Ok(out)
}

/// A point of the cell 𝒞(f): positive weights summing to one per level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NestCell {
    pub nest: Nest,
    pub weights: Vec<Q>,
}

impl NestCell {
    pub fn new(nest: Nest, weights: Vec<Q>) -> Result<Self> {
        if weights.len() != nest.f.len() || weights.iter().any(|w| !w.is_positive()) {
            return Err(Error::Validation("one positive weight per edge".into()));
        }
        for k in 0..=nest.max_level() {
            let s = nest.level(k).iter().fold(Q::zero(), |s, &x| s + &weights[x]);
            if !s.is_one() {
                return Err(Error::Validation(format!("weights on level {k} do not sum to one")));
            }
        }
        Ok(NestCell { nest, weights })
    }

    pub fn from_raw(nest: Nest, raw: &[Q]) -> Result<Self> {
        let mut w = raw.to_vec();
        for k in 0..=nest.max_level() {
            let l: Vec<usize> = nest.level(k).into_iter().collect();
            if l.iter().any(|&x| !raw[x].is_positive()) {
                return Err(Error::Validation("weights must be positive".into()));
            }
            let xs: Vec<Q> = l.iter().map(|&x| raw[x].clone()).collect();
            for (&x, v) in l.iter().zip(projectivize(&xs)) {
                w[x] = v;
            }
        }
        NestCell::new(nest, w)
    }

    pub fn dim(&self) -> usize {
        self.nest.f.len() - (self.nest.max_level() + 1)
    }

    pub fn weights_json(&self) -> Vec<QJson> {
        self.weights.iter().map(Into::into).collect()
    }
}

/// All stratum graphs with at most `max_edges` edges, up to isomorphism,
/// in canonical form.
pub fn enumerate_stratum_graphs(max_edges: usize) -> Vec<StratumGraph> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for k in 1..=max_edges {
        let pairs: Vec<[usize; 2]> = (0..k).flat_map(|a| (a..k).map(move |b| [a, b])).collect();
        for np in 1..=max_edges {
            for nn in (k - 1)..=max_edges.saturating_sub(np) {
                if nn + np > max_edges {
                    continue;
                }
                for_multisets(pairs.len(), nn, &mut |ni| {
                    let nodes: Vec<[usize; 2]> = ni.iter().map(|&i| pairs[i]).collect();
                    for_multisets(k, np, &mut |ps| {
                        let g = StratumGraph { n_vertices: k, nodes: nodes.clone(), punctures: ps.to_vec() };
                        let d = g.degrees();
                        if d.windows(2).any(|w| w[0] < w[1]) || !g.is_connected() {
                            return;
                        }
                        let c = g.canonical();
                        if seen.insert(c.clone()) {
                            out.push(c);
                        }
                    });
                });
            }
        }
    }
    out.sort();
    out
}

fn for_multisets(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i, cur, f);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut Vec::with_capacity(k), f);
}

/// All nests on `g` with levels at most `max_level`.
pub fn all_nests(g: &StratumGraph, max_level: usize) -> Vec<Nest> {
    let mut out = Vec::new();
    for_dense_functions(g.n_edges(), max_level, &mut |f| {
        if validate_nest(g, f).is_ok() {
            out.push(Nest { graph: g.clone(), f: f.to_vec() });
        }
    });
    out
}

/// Every function onto an initial segment {0..m} with m ≤ `max_level`.
pub fn for_dense_functions(n: usize, max_level: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(i: usize, m: usize, cur: &mut Vec<usize>, used: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        let missing = used.iter().filter(|&&c| c == 0).count();
        if cur.len() - i < missing {
            return;
        }
        if i == cur.len() {
            f(cur);
            return;
        }
        for v in 0..=m {
            cur[i] = v;
            used[v] += 1;
            rec(i + 1, m, cur, used, f);
            used[v] -= 1;
        }
    }
    for m in 0..=max_level.min(n.saturating_sub(1)) {
        let mut cur = vec![0; n];
        let mut used = vec![0; m + 1];
        rec(0, m, &mut cur, &mut used, f);
    }
}

/// All subsets of a set, as edge sets.
pub fn subsets(items: &EdgeSet) -> Vec<EdgeSet> {
    let v: Vec<usize> = items.iter().copied().collect();
    (0u32..(1 << v.len())).map(|mask| (0..v.len()).filter(|i| mask & (1 << i) != 0).map(|i| v[i]).collect()).collect()
}

/// Per-nest checks of the nest calculus: validity of f_σ, the inclusion at
/// the first disagreement, C(M) two ways for every admissible M, validity
/// after every decrease, minimality of f_σ, uniqueness of the maximal free
/// subset, preservation of collapsable nodes, and termination of the flow.
pub fn check_nest_calculus(f: &Nest) -> Result<()> {
    let g = &f.graph;
    let fs = canonical_nest(g);
    invariant(validate_nest(g, &fs.f).is_ok(), || "f_σ is not a nest".into())?;
    invariant((0..f.f.len()).all(|x| fs.f[x] <= f.f[x]), || format!("f_σ not below {:?}", f.f))?;
    if let Some(k) = first_disagreement(f) {
        invariant(f.level(k).is_subset(&fs.level(k)), || format!("level inclusion fails at {k} for {:?}", f.f))?;
    }
    let nonzero: EdgeSet = (0..f.f.len()).filter(|&x| f.f[x] > 0).collect();
    for m in subsets(&nonzero) {
        decrease_level(f, &m)?;
    }
    let mb = m_bar(f);
    let greedy = maximal_free_subset(f, &mb)?;
    let brute = maximal_free_subsets_brute(f, &mb)?;
    invariant(brute == vec![greedy.clone()], || format!("maximal free subset not unique or missed: {greedy:?} vs {brute:?}"))?;
    let next = mring_step(f)?;
    for n in 0..g.n_nodes() {
        if is_collapsable(f, n)? {
            invariant(is_collapsable(&next, n)?, || format!("node {n} stops being collapsable for {:?}", f.f))?;
        }
    }
    let flow = mring_flow(f)?;
    invariant(flow.last().unwrap().f == fs.f, || "flow endpoint differs from f_σ".into())?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rational::{q, qi};

    pub fn chain() -> StratumGraph {
        // v0 - v1 with p at v0
        StratumGraph::new(2, vec![[0, 1]], vec![0]).unwrap()
    }

    /// Two components joined by a node, the second carrying a loop, with
    /// punctures on both.
    pub fn sample() -> StratumGraph {
        StratumGraph::new(3, vec![[0, 1], [1, 2], [2, 2], [0, 2]], vec![0, 2, 1]).unwrap()
    }

    #[test]
    fn canonical_nest_values() {
        let g = StratumGraph::new(1, vec![], vec![0]).unwrap();
        assert_eq!(canonical_nest(&g).f, vec![0]);
        assert_eq!(canonical_nest(&chain()).f, vec![1, 0]);
        // path of three components with the only puncture at one end
        let g = StratumGraph::new(3, vec![[0, 1], [1, 2], [2, 2]], vec![0]).unwrap();
        assert_eq!(canonical_nest(&g).f, vec![1, 2, 3, 0]);
        let fs = canonical_nest(&g);
        assert!(Nest::new(g, fs.f).is_ok());
    }

    #[test]
    fn violations() {
        let g = chain();
        assert_eq!(validate_nest(&g, &[0, 0]).unwrap_err().condition(), 2);
        assert_eq!(validate_nest(&g, &[2, 0]).unwrap_err().condition(), 4);
        assert_eq!(validate_nest(&g, &[1, 1]).unwrap_err().condition(), 1);
        let g2 = StratumGraph::new(2, vec![[0, 1]], vec![0, 1]).unwrap();
        assert!(validate_nest(&g2, &[1, 0, 0]).is_ok());
        let g3 = StratumGraph::new(2, vec![[0, 1]], vec![0, 1]).unwrap();
        assert_eq!(validate_nest(&g3, &[1, 0, 1]).unwrap(), ());
        // node lowest at both ends
        let g4 = StratumGraph::new(2, vec![[0, 1]], vec![0, 1]).unwrap();
        assert_eq!(validate_nest(&g4, &[1, 2, 2]).unwrap_err().condition(), 1);
        let g5 = StratumGraph::new(2, vec![[0, 1]], vec![0, 1]).unwrap();
        assert!(validate_nest(&g5, &[1, 0, 2]).is_ok());
        let g6 = StratumGraph::new(3, vec![[0, 1], [1, 2]], vec![0]).unwrap();
        assert_eq!(validate_nest(&g6, &[1, 1, 0]).unwrap_err().condition(), 3);
    }

    #[test]
    fn floor_and_isolation() {
        let g = StratumGraph::new(3, vec![[0, 1], [1, 2]], vec![0]).unwrap();
        let f = floor_nest(&g, &[2, 5, 0]).unwrap();
        assert_eq!(f.f, vec![1, 2, 0]);
        assert_eq!(floor_nest(&g, &f.f).unwrap(), f);
        assert!(floor_nest(&g, &[0, 5, 0]).is_err());
        assert_eq!(insert_isolating_levels(&f, &EdgeSet::new()).unwrap(), f);
        let g2 = StratumGraph::new(2, vec![[0, 1]], vec![0, 1]).unwrap();
        let f2 = Nest::new(g2, vec![1, 0, 1]).unwrap();
        // isolating the node puts it on its own level below the puncture
        assert_eq!(insert_isolating_levels(&f2, &[0].into()).unwrap().f, vec![1, 0, 2]);
        assert!(insert_isolating_levels(&f2, &[1].into()).is_err());
        // M across two old levels
        let f3 = Nest::new(g.clone(), vec![1, 2, 0]).unwrap();
        assert_eq!(insert_isolating_levels(&f3, &[0, 1].into()).unwrap().f, vec![1, 2, 0]);
        let g4 = StratumGraph::new(3, vec![[0, 1], [1, 2]], vec![0, 1, 2]).unwrap();
        let f4 = Nest::new(g4, vec![1, 2, 0, 1, 2]).unwrap();
        assert_eq!(insert_isolating_levels(&f4, &[0, 1].into()).unwrap().f, vec![1, 3, 0, 2, 4]);
    }

    #[test]
    fn obstruction_examples() {
        let f = canonical_nest(&chain());
        assert_eq!(obstruction_c(&f, &[0].into()).unwrap(), [0].into());
        assert!(is_collapsable(&f, 0).unwrap());
        let g = StratumGraph::new(3, vec![[0, 1], [1, 2]], vec![0, 1, 2]).unwrap();
        let f = Nest::new(g, vec![3, 2, 0, 1, 0]).unwrap();
        // node 0 has a level-0 neighbour, slack 3 ≥ 2
        assert!(obstruction_c(&f, &[0].into()).unwrap().is_empty());
    }

    #[test]
    fn decreasing() {
        let f = canonical_nest(&chain());
        let (n, emap) = decrease_level(&f, &[0].into()).unwrap();
        assert_eq!(n.graph.n_vertices(), 1);
        assert_eq!(n.f, vec![0]);
        assert_eq!(emap, vec![None, Some(0)]);
        // permissible coalescing
        let g = StratumGraph::new(2, vec![[0, 1]], vec![0, 1]).unwrap();
        let f = Nest::new(g, vec![2, 0, 1]).unwrap();
        let m = f.level(2);
        assert!(obstruction_c(&f, &m).unwrap().is_empty());
        let (n, _) = decrease_level(&f, &m).unwrap();
        assert_eq!(n.f, vec![1, 0, 1]);
        let faces = dsigma_faces(&f).unwrap();
        assert_eq!(faces.len(), 2);
        assert!(faces.iter().all(|x| matches!(x, NestFace::Coalesce { .. })));
        // a loop in C(M) is deleted
        let g = StratumGraph::new(1, vec![[0, 0]], vec![0]).unwrap();
        let f = canonical_nest(&g);
        let (n, _) = decrease_level(&f, &[0].into()).unwrap();
        assert_eq!(n.graph.n_nodes(), 0);
    }

    #[test]
    fn free_subsets() {
        let f = canonical_nest(&chain());
        assert!(maximal_free_subset(&f, &[0].into()).unwrap().is_empty());
        let g = StratumGraph::new(3, vec![[0, 1], [1, 2]], vec![0, 1, 2]).unwrap();
        let f = Nest::new(g, vec![3, 2, 0, 1, 0]).unwrap();
        let all: EdgeSet = [0, 1, 3].into();
        let m = maximal_free_subset(&f, &all).unwrap();
        assert_eq!(maximal_free_subsets_brute(&f, &all).unwrap(), vec![m]);
    }

    #[test]
    fn flow_examples() {
        let fs = canonical_nest(&sample());
        assert_eq!(mring_flow(&fs).unwrap().len(), 1);
        let g = StratumGraph::new(2, vec![[0, 1]], vec![0, 1]).unwrap();
        let f = Nest::new(g, vec![2, 0, 1]).unwrap();
        let flow = mring_flow(&f).unwrap();
        assert_eq!(flow.len(), 2);
        assert_eq!(flow.last().unwrap().f, vec![1, 0, 0]);
    }

    #[test]
    fn enumeration_counts() {
        let gs = enumerate_stratum_graphs(2);
        // one vertex: p | p,p | loop+p ; two vertices: node with p at one end
        assert_eq!(gs.len(), 4);
        let gs3 = enumerate_stratum_graphs(3);
        assert!(gs3.len() > gs.len());
        for g in &gs3 {
            assert_eq!(g.canonical(), *g);
        }
    }

    #[test]
    fn small_exhaustive() {
        for g in enumerate_stratum_graphs(4) {
            for f in all_nests(&g, 3) {
                check_nest_calculus(&f).unwrap();
            }
        }
    }

    #[test]
    fn cells_and_json() {
        let f = Nest::new(sample(), canonical_nest(&sample()).f).unwrap();
        let raw: Vec<Q> = (1..=f.f.len() as i64).map(qi).collect();
        let c = NestCell::from_raw(f.clone(), &raw).unwrap();
        assert_eq!(c.dim(), f.f.len() - f.max_level() - 1);
        assert_eq!(c.weights[3], q(4, 10));
        let s = serde_json::to_string(&f.to_json()).unwrap();
        let back: NestJson = serde_json::from_str(&s).unwrap();
        assert_eq!(Nest::from_json(&back).unwrap(), f);
        assert!(f.to_dot("f").contains("label=\"0\""));
    }
}
