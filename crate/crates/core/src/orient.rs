//! Partially oriented stratum graphs: orientation from a pairing,
//! realizability, the minimal compatible nest, contractible edges, ψ and χ,
//! and the discrete flow to the canonical nest.

use crate::error::{invariant, pre, Error, Result};
use crate::fatgraph::{EdgeSet, Fatgraph};
use crate::pairing::{project_pi_traced, MoveKind, PairedFatgraph, Slot, SlotRef};
use crate::rational::{projectivize, Q};
use crate::screens::ScreenPoint;
use crate::strata::{
    all_nests, canonical_nest, floor_nest, is_collapsable, lowered, m_bar, maximal_free_subset, Nest, NestCell,
    StratumGraph,
};
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// `tail[x]` is the initial vertex of an oriented edge. A puncture edge can
/// only be oriented away from its component vertex, towards ∗.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PartialOrientation {
    pub graph: StratumGraph,
    tail: Vec<Option<usize>>,
}

impl PartialOrientation {
    pub fn new(graph: StratumGraph, tail: Vec<Option<usize>>) -> Result<Self> {
        if tail.len() != graph.n_edges() {
            return Err(Error::Structure("one entry per edge".into()));
        }
        for (x, t) in tail.iter().enumerate() {
            if let Some(v) = t {
                if !graph.ends(x).contains(v) {
                    return Err(Error::Structure(format!("edge {x} cannot start at {v}")));
                }
            }
        }
        Ok(PartialOrientation { graph, tail })
    }

    pub fn unoriented(graph: StratumGraph) -> Self {
        let n = graph.n_edges();
        PartialOrientation { graph, tail: vec![None; n] }
    }

    pub fn tails(&self) -> &[Option<usize>] {
        &self.tail
    }

    pub fn tail(&self, x: usize) -> Option<usize> {
        self.tail[x]
    }

    pub fn is_oriented(&self, x: usize) -> bool {
        self.tail[x].is_some()
    }

    /// Terminal vertex of an oriented node.
    pub fn head(&self, x: usize) -> Option<usize> {
        let t = self.tail[x]?;
        self.graph.other_end(x, t)
    }

    pub fn out_edges(&self, v: usize) -> EdgeSet {
        (0..self.tail.len()).filter(|&x| self.tail[x] == Some(v)).collect()
    }

    pub fn orient(&mut self, x: usize, tail: Option<usize>) {
        self.tail[x] = tail;
    }

    pub fn cond_i(&self) -> bool {
        (0..self.graph.n_vertices()).all(|v| !self.out_edges(v).is_empty())
    }

    pub fn cond_ii(&self) -> bool {
        (0..self.graph.n_vertices()).any(|v| {
            let out = self.out_edges(v);
            !out.is_empty() && out.iter().all(|&x| !self.graph.is_node(x))
        })
    }

    pub fn cond_iii(&self) -> bool {
        let n = self.graph.n_vertices();
        let mut indeg = vec![0; n];
        let arcs: Vec<(usize, usize)> =
            (0..self.graph.n_nodes()).filter_map(|x| Some((self.tail[x]?, self.head(x)?))).collect();
        for &(_, b) in &arcs {
            indeg[b] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &(a, b) in &arcs {
                if a == v {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        stack.push(b);
                    }
                }
            }
        }
        seen == n
    }

    /// Conditions i-iii.
    pub fn is_realizable(&self) -> bool {
        self.cond_i() && self.cond_ii() && self.cond_iii()
    }

    /// An oriented path of positive length from `a` to `b`.
    pub fn has_path(&self, a: usize, b: usize) -> bool {
        let mut seen = vec![false; self.graph.n_vertices()];
        let mut stack = vec![a];
        while let Some(v) = stack.pop() {
            for x in self.out_edges(v) {
                if let Some(w) = self.head(x) {
                    if w == b {
                        return true;
                    }
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        false
    }

    /// d(v): the most non-∗ vertices an oriented path from v passes, not
    /// counting v. Needs no oriented cycles.
    pub fn depths(&self) -> Result<Vec<usize>> {
        if !self.cond_iii() {
            return pre("oriented cycle");
        }
        let n = self.graph.n_vertices();
        let mut memo: Vec<Option<usize>> = vec![None; n];
        fn go(p: &PartialOrientation, v: usize, memo: &mut Vec<Option<usize>>) -> usize {
            if let Some(d) = memo[v] {
                return d;
            }
            let d = p.out_edges(v).iter().map(|&x| p.head(x).map_or(0, |w| 1 + go(p, w, memo))).max().unwrap_or(0);
            memo[v] = Some(d);
            d
        }
        Ok((0..n).map(|v| go(self, v, &mut memo)).collect())
    }

    /// f_𝒢⃗.
    pub fn minimal_nest(&self) -> Result<Nest> {
        if !self.is_realizable() {
            return pre("orientation is not realizable");
        }
        let d = self.depths()?;
        let f = (0..self.tail.len())
            .map(|x| match self.tail[x] {
                Some(v) => d[v],
                None => 1 + self.graph.ends(x).iter().map(|&v| d[v]).max().unwrap(),
            })
            .collect();
        Nest::new(self.graph.clone(), f).map_err(|e| Error::Invariant(format!("f_𝒢⃗ is not a nest: {e}")))
    }

    /// Oriented edges at every vertex are exactly Min_f(v).
    pub fn is_compatible(&self, f: &Nest) -> bool {
        f.graph == self.graph && (0..self.graph.n_vertices()).all(|v| self.out_edges(v) == f.min_at(v))
    }

    pub fn is_essential(&self, n: usize) -> bool {
        if !self.graph.is_node(n) || self.is_oriented(n) || self.graph.is_loop(n) {
            return false;
        }
        let [a, b] = self.graph.nodes()[n];
        self.has_path(a, b) || self.has_path(b, a)
    }

    /// Oriented, or inessential.
    pub fn is_contractible(&self, n: usize) -> bool {
        self.graph.is_node(n) && (self.is_oriented(n) || !self.is_essential(n))
    }

    /// 𝒢⃗(n): an oriented n becomes the only oriented edge at its tail.
    pub fn isolate(&self, n: usize) -> PartialOrientation {
        let mut out = self.clone();
        if let Some(v) = self.tail[n] {
            for x in self.out_edges(v) {
                if x != n {
                    out.tail[x] = None;
                }
            }
        }
        out
    }

    /// Collapse a node keeping all other orientations.
    pub fn collapse_keep(&self, n: usize) -> Result<(PartialOrientation, Vec<Option<usize>>)> {
        let (g2, emap) = self.graph.collapse(&[n].into())?;
        let [a, b] = self.graph.nodes()[n];
        let vmap = |v: usize| {
            // vertex images follow the collapse relabelling
            let (lo, hi) = (a.min(b), a.max(b));
            let w = if v == hi { lo } else { v };
            w - usize::from(w > hi && lo != hi)
        };
        let mut tail = vec![None; g2.n_edges()];
        for (x, y) in emap.iter().enumerate() {
            if let (Some(y), Some(t)) = (y, self.tail[x]) {
                tail[*y] = Some(vmap(t));
            }
        }
        Ok((PartialOrientation::new(g2, tail)?, emap))
    }

    /// Contractible by definition: collapsing n in 𝒢⃗(n) is realizable.
    pub fn contractible_by_definition(&self, n: usize) -> Result<bool> {
        Ok(self.collapse_keep_isolated(n)?.is_realizable())
    }

    fn collapse_keep_isolated(&self, n: usize) -> Result<PartialOrientation> {
        Ok(self.isolate(n).collapse_keep(n)?.0)
    }

    /// (𝒢⃗, 𝒢⃗(n), 𝒢⃗_{n}).
    pub fn contracting_sequence(&self, n: usize) -> Result<(PartialOrientation, PartialOrientation, PartialOrientation)> {
        if !self.graph.is_node(n) {
            return pre("only nodes contract");
        }
        if !self.is_contractible(n) {
            return pre("node is essential");
        }
        let mid = self.isolate(n);
        let end = mid.collapse_keep(n)?.0;
        invariant(end.is_realizable(), || "contracted orientation is not realizable".into())?;
        Ok((self.clone(), mid, end))
    }

    pub fn to_dot(&self, name: &str) -> String {
        let f = self.minimal_nest().ok();
        self.graph.dot_with(name, |x| f.as_ref().map(|f| f.f[x].to_string()), |x| self.tail[x].map(Some))
    }

    pub fn to_json(&self) -> OrientationJson {
        OrientationJson { graph: self.graph.to_json(), tails: self.tail.clone() }
    }

    pub fn from_json(j: &OrientationJson) -> Result<Self> {
        PartialOrientation::new(StratumGraph::from_json(&j.graph)?, j.tails.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrientationJson {
    pub graph: crate::strata::StratumGraphJson,
    pub tails: Vec<Option<usize>>,
}

/// Orientation induced by a nest: Min_f(v) leaves v.
pub fn orientation_of_nest(f: &Nest) -> PartialOrientation {
    let mut tail = vec![None; f.f.len()];
    for v in 0..f.graph.n_vertices() {
        for x in f.min_at(v) {
            tail[x] = Some(v);
        }
    }
    PartialOrientation { graph: f.graph.clone(), tail }
}

/// f_𝒢⃗ for a realizable orientation.
pub fn nest_from_orientation(p: &PartialOrientation) -> Result<Nest> {
    p.minimal_nest()
}

/// Nests on a stratum graph grouped by the orientation they induce. Levels
/// are dense, so `n_edges - 1` bounds every nest.
pub fn nests_by_orientation(g: &StratumGraph) -> HashMap<Vec<Option<usize>>, Vec<Nest>> {
    let mut out: HashMap<Vec<Option<usize>>, Vec<Nest>> = HashMap::new();
    for f in all_nests(g, g.n_edges().saturating_sub(1)) {
        out.entry(orientation_of_nest(&f).tail).or_default().push(f);
    }
    out
}

/// Every partial orientation of a stratum graph.
pub fn all_orientations(g: &StratumGraph) -> Vec<PartialOrientation> {
    let choices: Vec<Vec<Option<usize>>> = (0..g.n_edges())
        .map(|x| std::iter::once(None).chain(g.ends(x).into_iter().map(Some)).collect())
        .collect();
    let mut out = Vec::new();
    let mut cur = vec![None; g.n_edges()];
    fn rec(i: usize, ch: &[Vec<Option<usize>>], cur: &mut Vec<Option<usize>>, g: &StratumGraph, out: &mut Vec<PartialOrientation>) {
        if i == ch.len() {
            out.push(PartialOrientation { graph: g.clone(), tail: cur.clone() });
            return;
        }
        for &c in &ch[i] {
            cur[i] = c;
            rec(i + 1, ch, cur, g, out);
        }
    }
    rec(0, &choices, &mut cur, g, &mut out);
    out
}

/// End slots of each stratum edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeEnds {
    Node([SlotRef; 2]),
    Puncture(SlotRef),
}

/// 𝒢_Ḡ: nodes for pairs, in order; punctures for unpaired slots, in slot order.
pub fn stratum_of(p: &PairedFatgraph) -> Result<(StratumGraph, Vec<EdgeEnds>)> {
    let nodes: Vec<[usize; 2]> = p.pairs.iter().map(|[a, b]| [a.comp, b.comp]).collect();
    let paired = p.paired_slots();
    let free: Vec<SlotRef> = p.all_slots().into_iter().filter(|s| !paired.contains(s)).collect();
    let g = StratumGraph::new(p.components.len(), nodes, free.iter().map(|s| s.comp).collect())?;
    let ends = p.pairs.iter().map(|pr| EdgeEnds::Node(*pr)).chain(free.into_iter().map(EdgeEnds::Puncture)).collect();
    Ok((g, ends))
}

fn decorated(s: &SlotRef) -> bool {
    matches!(s.slot, Slot::Boundary(_))
}

/// 𝒢⃗_Ḡ: decorated towards undecorated, decorated unpaired towards ∗.
pub fn orientation_from_pairing(p: &PairedFatgraph) -> Result<(PartialOrientation, Vec<EdgeEnds>)> {
    let d = p.validate_pairing();
    if !d.ok() {
        return Err(Error::Validation(d.problems.join("; ")));
    }
    if !p.pg_membership() {
        return pre("paired fatgraph fails the membership conditions");
    }
    let (g, ends) = stratum_of(p)?;
    let tail = ends
        .iter()
        .map(|e| match e {
            EdgeEnds::Node([a, b]) => match (decorated(a), decorated(b)) {
                (true, false) => Some(a.comp),
                (false, true) => Some(b.comp),
                _ => None,
            },
            EdgeEnds::Puncture(s) => decorated(s).then_some(s.comp),
        })
        .collect();
    Ok((PartialOrientation::new(g, tail)?, ends))
}

/// Geometry of one irreducible component as input to χ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComponentGeometry {
    /// Already the convex-hull decomposition, with positive coordinates.
    Coordinates { graph: Fatgraph, x: Vec<Q>, tokens: Vec<String> },
    /// Lambda lengths on a quasi triangulation; punctured vertices are the
    /// undecorated punctures.
    Lambda { graph: Fatgraph, lambda: Vec<Q>, tokens: Vec<String> },
}

/// Output of ψ: the nodal data and the point of 𝒞(f).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsiImage {
    pub stratum: StratumGraph,
    pub ends: Vec<EdgeEnds>,
    pub nest: Nest,
    pub cell: NestCell,
    /// Screen level of the cycle behind each stratum edge.
    pub cycle_levels: Vec<usize>,
    /// Summed coordinates along each cycle, before projectivizing.
    pub cycle_lengths: Vec<Q>,
    pub components: Vec<ComponentGeometry>,
}

/// ψ: stratum graph of π(pt), levels of its horocycles and pinch curves,
/// and their summed coordinates. The input graph must have no punctured
/// vertices, so every puncture is a face.
pub fn psi(pt: &ScreenPoint) -> Result<PsiImage> {
    let g = &pt.screen.graph;
    if !g.punctured_vertices().is_empty() {
        return pre("ψ expects a fatgraph without punctured vertices");
    }
    let (p, tr) = project_pi_traced(pt)?;
    let (stratum, ends) = stratum_of(&p)?;
    let mut by_slot: BTreeMap<SlotRef, (usize, Q)> = BTreeMap::new();
    for mv in &tr.moves {
        let len = mv.edges.iter().fold(Q::zero(), |s, &e| s + &pt.weights[e]);
        match mv.kind {
            MoveKind::Horocycle | MoveKind::Pinch => {
                for s in &mv.slots {
                    by_slot.insert(*s, (mv.level, len.clone()));
                }
            }
            MoveKind::Cut => {}
        }
    }
    let face_len = |s: &SlotRef| -> Result<(usize, Q)> {
        let Slot::Boundary(b) = s.slot else {
            return by_slot.get(s).cloned().ok_or_else(|| Error::Invariant(format!("no cycle behind {s:?}")));
        };
        let c = &p.components[s.comp];
        let cyc = &c.boundary_cycles()[b];
        let len = cyc.iter().fold(Q::zero(), |acc, &h| acc + &tr.raw_weights[s.comp][c.edge_of(h)]);
        Ok((tr.levels[s.comp], len))
    };
    let mut cycle_levels = Vec::new();
    let mut cycle_lengths = Vec::new();
    for e in &ends {
        let (l, x) = match e {
            EdgeEnds::Node([a, b]) => {
                // the decorated side carries the cut boundary; otherwise a pinch
                let s = if decorated(a) { a } else { b };
                face_len(s)?
            }
            EdgeEnds::Puncture(s) => face_len(s)?,
        };
        cycle_levels.push(l);
        cycle_lengths.push(x);
    }
    let ranks: BTreeSet<usize> = cycle_levels.iter().copied().collect();
    let rank: BTreeMap<usize, usize> = ranks.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    let f: Vec<usize> = cycle_levels.iter().map(|l| rank[l]).collect();
    let nest = Nest::new(stratum.clone(), f).map_err(|e| Error::Invariant(format!("ψ level function is not a nest: {e}")))?;
    let cell = NestCell::from_raw(nest.clone(), &cycle_lengths)?;
    let components = p
        .components
        .iter()
        .enumerate()
        .map(|(c, gc)| ComponentGeometry::Coordinates { graph: gc.clone(), x: tr.raw_weights[c].clone(), tokens: p.tokens[c].clone() })
        .collect();
    Ok(PsiImage { stratum, ends, nest, cell, cycle_levels, cycle_lengths, components })
}

/// χ: convex hull per component with decorations on Min_f(v) slots,
/// assembled with the nodal pairing and projectivized per component.
pub fn chi_combinatorial(components: &[ComponentGeometry], ends: &[EdgeEnds], cell: &NestCell) -> Result<PairedFatgraph> {
    let g = &cell.nest.graph;
    if components.len() != g.n_vertices() || ends.len() != g.n_edges() {
        return Err(Error::Structure("component or edge count mismatch".into()));
    }
    let mut graphs = Vec::new();
    let mut weights = Vec::new();
    let mut tokens = Vec::new();
    let mut ends = ends.to_vec();
    for (v, c) in components.iter().enumerate() {
        let (gr, x, tk) = match c {
            ComponentGeometry::Coordinates { graph, x, tokens } => {
                if x.iter().any(|v| v <= &Q::zero()) {
                    return Err(Error::Validation("coordinates must be positive".into()));
                }
                (graph.clone(), x.clone(), tokens.clone())
            }
            ComponentGeometry::Lambda { graph, lambda, tokens } => {
                let mine: Vec<Slot> = slots_at(&ends, v).into_iter().map(|s| s.slot).collect();
                let (r, moved) = convex_hull_tracking(graph, lambda, &mine)?;
                let map: BTreeMap<Slot, Slot> = mine.into_iter().zip(moved).collect();
                for e in ends.iter_mut() {
                    let fix = |s: &mut SlotRef| {
                        if s.comp == v {
                            s.slot = map[&s.slot];
                        }
                    };
                    match e {
                        EdgeEnds::Node(pr) => pr.iter_mut().for_each(fix),
                        EdgeEnds::Puncture(s) => fix(s),
                    }
                }
                let tk = r.edge_map.iter().map(|&e| tokens[e].clone()).collect();
                (r.qcd, r.x, tk)
            }
        };
        graphs.push(gr);
        weights.push(projectivize(&x));
        tokens.push(tk);
    }
    for v in 0..g.n_vertices() {
        let mins = cell.nest.min_at(v);
        for x in g.star(v) {
            let slots: Vec<SlotRef> = match ends[x] {
                EdgeEnds::Node(pr) => pr.into_iter().filter(|s| s.comp == v).collect(),
                EdgeEnds::Puncture(s) => vec![s],
            };
            let dec: Vec<bool> = slots.iter().map(decorated).collect();
            let ok = if g.is_loop(x) { dec.iter().any(|&d| d) == mins.contains(&x) } else { dec.iter().all(|&d| d == mins.contains(&x)) };
            if !ok {
                return Err(Error::Validation(format!("decoration of edge {x} disagrees with the least level at vertex {v}")));
            }
        }
    }
    let pairs = ends
        .iter()
        .filter_map(|e| match e {
            EdgeEnds::Node(pr) => Some(*pr),
            _ => None,
        })
        .collect();
    PairedFatgraph::new(graphs, pairs, weights, tokens)
}

fn slots_at(ends: &[EdgeEnds], v: usize) -> Vec<SlotRef> {
    let mut out: Vec<SlotRef> = ends
        .iter()
        .flat_map(|e| match e {
            EdgeEnds::Node(pr) => pr.to_vec(),
            EdgeEnds::Puncture(s) => vec![*s],
        })
        .filter(|s| s.comp == v)
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Convex hull of a lambda-decorated quasi triangulation, carrying each
/// slot along. Faces and punctured vertices survive flips and contractions;
/// each is followed through a representative half-edge.
pub fn convex_hull_tracking(g: &Fatgraph, lambda: &[Q], slots: &[Slot]) -> Result<(crate::coords::QcdResult, Vec<Slot>)> {
    let mut flipped = Vec::new();
    let r = crate::coords::flip_to_qcd_with(g, lambda, |c| {
        flipped.push(c[0]);
        c[0]
    })?;
    let cycles = g.boundary_cycles();
    let mut reps: Vec<usize> = Vec::new();
    for s in slots {
        reps.push(match *s {
            Slot::Boundary(b) => *cycles.get(b).and_then(|c| c.first()).ok_or_else(|| Error::Structure(format!("no face {b}")))?,
            Slot::Puncture(u) if u < g.n_verts() && g.is_punctured(u) => g.vertex(u)[0],
            Slot::Puncture(u) => return Err(Error::Structure(format!("vertex {u} is not punctured"))),
        });
    }
    // move a representative off an edge about to change
    let dodge = |cur: &Fatgraph, e: usize, s: &Slot, h: usize| -> Result<usize> {
        if cur.edge_of(h) != e {
            return Ok(h);
        }
        let cands: Vec<usize> = match s {
            Slot::Boundary(_) => {
                let mut c = vec![];
                let mut x = cur.face_next(h);
                while x != h {
                    c.push(x);
                    x = cur.face_next(x);
                }
                c
            }
            Slot::Puncture(_) => {
                let [a, b] = cur.edge(e);
                cur.vertex(cur.vertex_of(a)).iter().chain(cur.vertex(cur.vertex_of(b))).copied().collect()
            }
        };
        cands.into_iter().find(|&x| cur.edge_of(x) != e).ok_or_else(|| Error::Invariant("slot lives on a single edge".into()))
    };
    let mut cur = g.clone();
    let mut lam = lambda.to_vec();
    for &e in &flipped {
        for (i, s) in slots.iter().enumerate() {
            reps[i] = dodge(&cur, e, s, reps[i])?;
        }
        let (ng, nl) = crate::coords::ptolemy_flip(&cur, &lam, e)?;
        cur = ng;
        lam = nl;
    }
    invariant(cur == r.triangulation, || "flip replay diverged".into())?;
    let keep: BTreeSet<usize> = r.edge_map.iter().copied().collect();
    let mut gone: Vec<usize> = (0..cur.n_edges()).filter(|e| !keep.contains(e)).collect();
    gone.sort_unstable_by(|a, b| b.cmp(a));
    for e in gone {
        for (i, s) in slots.iter().enumerate() {
            reps[i] = dodge(&cur, e, s, reps[i])?;
        }
        let (ng, hmap) = cur.collapse_edge_mapped(e)?;
        for h in reps.iter_mut() {
            *h = hmap[*h].expect("representative avoids the collapsed edge");
        }
        cur = ng;
    }
    invariant(cur == r.qcd, || "contraction replay diverged".into())?;
    let fi = cur.face_index();
    let moved = slots
        .iter()
        .zip(&reps)
        .map(|(s, &h)| match s {
            Slot::Boundary(_) => Slot::Boundary(fi[h]),
            Slot::Puncture(_) => Slot::Puncture(cur.vertex_of(h)),
        })
        .collect();
    Ok((r, moved))
}

/// Which rule produced a flow step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowPhase {
    Essential,
    Inessential,
    MRing,
}

/// Surrogate point of the flow: orientation and deprojectivized decoration
/// lengths per stratum edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowState {
    pub orientation: PartialOrientation,
    pub lengths: Vec<Q>,
}

impl FlowState {
    pub fn new(orientation: PartialOrientation, lengths: Vec<Q>) -> Result<Self> {
        if !orientation.is_realizable() {
            return pre("flow needs a realizable orientation");
        }
        if lengths.len() != orientation.graph.n_edges() || lengths.iter().any(|l| l <= &Q::zero()) {
            return Err(Error::Validation("one positive length per edge".into()));
        }
        Ok(FlowState { orientation, lengths })
    }

    pub fn nest(&self) -> Result<Nest> {
        self.orientation.minimal_nest()
    }

    pub fn all_contractible(&self) -> bool {
        (0..self.orientation.graph.n_nodes()).all(|n| self.orientation.is_contractible(n))
    }

    /// Projectivized decorations per component vertex over its oriented edges.
    pub fn decorations(&self) -> Vec<Vec<(usize, Q)>> {
        (0..self.orientation.graph.n_vertices())
            .map(|v| {
                let out: Vec<usize> = self.orientation.out_edges(v).into_iter().collect();
                let ls: Vec<Q> = out.iter().map(|&x| self.lengths[x].clone()).collect();
                out.into_iter().zip(projectivize(&ls)).collect()
            })
            .collect()
    }

    fn min_length_out(&self, v: usize) -> Q {
        self.orientation.out_edges(v).iter().map(|&x| self.lengths[x].clone()).min().expect("vertex has an oriented edge")
    }
}

/// One step of the flow, or `None` at the fixed point.
pub fn contraction_flow_step(s: &FlowState) -> Result<Option<(FlowState, FlowPhase)>> {
    let o = &s.orientation;
    let g = &o.graph;
    if !o.is_realizable() {
        return pre("flow needs a realizable orientation");
    }
    if let Some(n) = (0..g.n_nodes()).find(|&n| o.is_essential(n)) {
        let [a, b] = g.nodes()[n];
        let t = if o.has_path(a, b) { a } else { b };
        let mut next = s.clone();
        next.lengths[n] = s.min_length_out(t);
        next.orientation.orient(n, Some(t));
        invariant(next.orientation.is_realizable(), || "orienting an essential node broke realizability".into())?;
        return Ok(Some((next, FlowPhase::Essential)));
    }
    let f = o.minimal_nest()?;
    for n in 0..g.n_nodes() {
        if o.is_oriented(n) || g.is_loop(n) {
            continue;
        }
        let [a, b] = g.nodes()[n];
        let (la, lb) = (f.min_level_at(a), f.min_level_at(b));
        if la != lb {
            let t = if la > lb { a } else { b };
            let mut next = s.clone();
            next.lengths[n] = s.min_length_out(t);
            next.orientation.orient(n, Some(t));
            invariant(next.orientation.is_realizable(), || "orienting an inessential node broke realizability".into())?;
            return Ok(Some((next, FlowPhase::Inessential)));
        }
    }
    let m = maximal_free_subset(&f, &m_bar(&f))?;
    if m.is_empty() {
        return Ok(None);
    }
    let f2 = floor_nest(g, &lowered(&f, &m))?;
    let o2 = orientation_of_nest(&f2);
    let mut next = FlowState { orientation: o2, lengths: s.lengths.clone() };
    for v in 0..g.n_vertices() {
        let (m1, m2) = (f.min_at(v), f2.min_at(v));
        let common: Vec<&usize> = m1.intersection(&m2).collect();
        invariant(!common.is_empty(), || format!("least levels at vertex {v} do not overlap"))?;
        let ml = common.iter().map(|&&x| s.lengths[x].clone()).min().unwrap();
        for x in m2.difference(&m1) {
            next.lengths[*x] = ml.clone();
        }
    }
    invariant(next.orientation.is_realizable(), || "M̊ step broke realizability".into())?;
    invariant(next.all_contractible(), || "M̊ step produced an essential node".into())?;
    Ok(Some((next, FlowPhase::MRing)))
}

/// Iterate to the fixed point; the final minimal nest is f_σ.
pub fn flow(s: &FlowState) -> Result<Vec<(FlowState, Option<FlowPhase>)>> {
    let mut out = vec![(s.clone(), None)];
    let cap = 4 * s.orientation.graph.n_edges() * s.orientation.graph.n_edges() + 8;
    while let Some((next, ph)) = contraction_flow_step(&out.last().unwrap().0)? {
        let before = out.last().unwrap().0.nest()?.sum();
        let after = next.nest()?.sum();
        invariant(after < before, || format!("flow did not decrease the minimal nest ({before} to {after})"))?;
        out.push((next, Some(ph)));
        if out.len() > cap {
            return Err(Error::Invariant("flow did not terminate".into()));
        }
    }
    let last = &out.last().unwrap().0;
    invariant(last.nest()?.f == canonical_nest(&last.orientation.graph).f, || "flow fixed point is not f_σ".into())?;
    Ok(out)
}

/// Checks for one stratum graph, given its nests grouped by induced
/// orientation: realizability two ways, minimality of f_𝒢⃗, the three
/// descriptions of contractible nodes, preservation under the M̊ step, and
/// termination of the flow.
pub fn check_orientation_calculus(g: &StratumGraph) -> Result<usize> {
    let groups = nests_by_orientation(g);
    let mut checked = 0;
    for o in all_orientations(g) {
        let brute = groups.get(&o.tail);
        invariant(o.is_realizable() == brute.is_some(), || format!("realizability disagrees for {:?}", o.tail))?;
        let Some(compatible) = brute else { continue };
        checked += 1;
        let fmin = o.minimal_nest()?;
        invariant(o.is_compatible(&fmin), || "f_𝒢⃗ is not compatible".into())?;
        for f in compatible {
            invariant((0..f.f.len()).all(|x| fmin.f[x] <= f.f[x]), || format!("f_𝒢⃗ not minimal for {:?}", o.tail))?;
        }
        for n in 0..g.n_nodes() {
            let two = o.is_contractible(n);
            let one = o.contractible_by_definition(n)?;
            let iso = o.isolate(n);
            let three = match groups.get(&iso.tail) {
                Some(fs) => fs.iter().any(|f| is_collapsable(f, n).unwrap_or(false)),
                None => false,
            };
            invariant(one == two && two == three, || format!("contractibility {one}/{two}/{three} for node {n} of {:?}", o.tail))?;
        }
        let all_contractible = (0..g.n_nodes()).all(|n| o.is_contractible(n));
        let equal_levels = (0..g.n_nodes()).filter(|&n| !o.is_oriented(n) && !g.is_loop(n)).all(|n| {
            let [a, b] = g.nodes()[n];
            fmin.min_level_at(a) == fmin.min_level_at(b)
        });
        if all_contractible && equal_levels {
            let m = maximal_free_subset(&fmin, &m_bar(&fmin))?;
            let f2 = floor_nest(g, &lowered(&fmin, &m))?;
            let o2 = orientation_of_nest(&f2);
            invariant((0..g.n_nodes()).all(|n| o2.is_contractible(n)), || "M̊ step produced an essential node".into())?;
        }
        let st = FlowState::new(o.clone(), vec![Q::from_integer(1.into()); g.n_edges()])?;
        flow(&st)?;
    }
    Ok(checked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fatgraph::examples::planar_theta;
    use crate::fatgraph::SurfaceType;
    use crate::pairing::project_pi;
    use crate::rational::{q, qi};
    use crate::screens::{random_filtered_screen, random_point};
    use crate::strata::enumerate_stratum_graphs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain() -> PartialOrientation {
        // v0 -> v1 -> ∗
        let g = StratumGraph::new(2, vec![[0, 1]], vec![1]).unwrap();
        PartialOrientation::new(g, vec![Some(0), Some(1)]).unwrap()
    }

    #[test]
    fn realizability_examples() {
        let g = StratumGraph::new(1, vec![], vec![0]).unwrap();
        let one = PartialOrientation::new(g.clone(), vec![Some(0)]).unwrap();
        assert!(one.is_realizable());
        assert_eq!(one.minimal_nest().unwrap().f, vec![0]);
        assert!(!PartialOrientation::unoriented(g).is_realizable());
        let g2 = StratumGraph::new(2, vec![[0, 1], [0, 1]], vec![0]).unwrap();
        let cyc = PartialOrientation::new(g2, vec![Some(0), Some(1), Some(0)]).unwrap();
        assert!(cyc.cond_i() && !cyc.cond_iii());
        assert!(!cyc.is_realizable());
        let c = chain();
        assert!(c.is_realizable());
        assert_eq!(c.minimal_nest().unwrap().f, vec![1, 0]);
    }

    #[test]
    fn contractibility_examples() {
        let c = chain();
        assert!(c.is_contractible(0));
        let (_, mid, end) = c.contracting_sequence(0).unwrap();
        assert_eq!(mid, c);
        assert_eq!(end.graph.n_vertices(), 1);
        // v0 -> v1 -> v2 -> ∗ with an unoriented node v0 - v2: essential
        let g = StratumGraph::new(3, vec![[0, 1], [1, 2], [0, 2]], vec![2]).unwrap();
        let o = PartialOrientation::new(g, vec![Some(0), Some(1), None, Some(2)]).unwrap();
        assert!(o.is_realizable());
        assert!(o.is_essential(2));
        assert!(!o.is_contractible(2));
        assert!(o.contracting_sequence(2).is_err());
        // unoriented loop
        let g = StratumGraph::new(1, vec![[0, 0]], vec![0]).unwrap();
        let o = PartialOrientation::new(g, vec![None, Some(0)]).unwrap();
        assert!(o.is_contractible(0));
        // an oriented node sharing its tail with two others
        let g = StratumGraph::new(2, vec![[0, 1]], vec![0, 0, 1]).unwrap();
        let o = PartialOrientation::new(g, vec![Some(0), Some(0), Some(0), Some(1)]).unwrap();
        assert!(o.is_realizable());
        let (_, mid, end) = o.contracting_sequence(0).unwrap();
        assert_eq!(mid.tails(), &[Some(0), None, None, Some(1)]);
        assert_eq!(end.tails(), &[None, None, Some(0)]);
        assert!(end.is_realizable());
    }

    #[test]
    fn exhaustive_small() {
        let gs = enumerate_stratum_graphs(4);
        let total: usize = gs.iter().map(|g| check_orientation_calculus(g).unwrap()).sum();
        assert_eq!(gs.len(), 48);
        assert!(total > gs.len());
    }

    #[test]
    fn pairing_orientation() {
        let t = PairedFatgraph::single(planar_theta(), vec![qi(1); 3]).unwrap();
        let (o, _) = orientation_from_pairing(&t).unwrap();
        assert_eq!(o.tails(), &[Some(0), Some(0), Some(0)]);
        let a = Fatgraph::new(vec![[0, 1], [2, 3]], vec![vec![0, 1, 2], vec![3]], &[1]).unwrap();
        let b = Fatgraph::new(vec![[0, 1], [2, 3]], vec![vec![0, 1, 2], vec![3]], &[1]).unwrap();
        let sr = |comp, slot| SlotRef { comp, slot };
        let p = PairedFatgraph::new(
            vec![a.clone(), b.clone()],
            vec![[sr(0, Slot::Puncture(1)), sr(1, Slot::Boundary(0))]],
            vec![vec![qi(1); 2]; 2],
            vec![vec![String::new(); 2]; 2],
        )
        .unwrap();
        let (o, ends) = orientation_from_pairing(&p).unwrap();
        assert_eq!(o.tail(0), Some(1));
        assert!(matches!(ends[0], EdgeEnds::Node(_)));
        assert!(o.is_realizable());
        let pp = PairedFatgraph::new(
            vec![a, b],
            vec![[sr(0, Slot::Puncture(1)), sr(1, Slot::Puncture(1))]],
            vec![vec![qi(1); 2]; 2],
            vec![vec![String::new(); 2]; 2],
        )
        .unwrap();
        let (o, _) = orientation_from_pairing(&pp).unwrap();
        assert_eq!(o.tail(0), None);
    }

    fn random_icd(rng: &mut ChaCha8Rng) -> Fatgraph {
        let (g, s) = [(0, 3), (0, 4), (1, 1)][rng.gen_range(0..3)];
        let st = SurfaceType::new(g, s);
        // a trivalent graph with s faces and no punctured vertices
        loop {
            let n = (-2 * st.euler) as usize;
            let cand = crate::coords::random_quasi_triangulation(rng, n, 0).unwrap();
            if cand.surface_type().unwrap() == st {
                return cand;
            }
        }
    }

    #[test]
    fn chi_psi_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut nodes, mut comps) = (0, 0);
        for _ in 0..60 {
            let g = random_icd(&mut rng);
            let f = random_filtered_screen(&mut rng, &g, 3);
            let pt = random_point(&mut rng, &f);
            let im = psi(&pt).unwrap();
            let p = project_pi(&pt).unwrap();
            let (o, _) = orientation_from_pairing(&p).unwrap();
            assert!(o.is_realizable());
            assert!(o.is_compatible(&im.nest));
            let back = chi_combinatorial(&im.components, &im.ends, &im.cell).unwrap();
            assert_eq!(back, p);
            nodes += im.stratum.n_nodes();
            comps += im.stratum.n_vertices();
        }
        assert!(nodes > 0 && comps > 60);
    }

    #[test]
    fn psi_level_zero() {
        let g = planar_theta();
        let pt = ScreenPoint::from_raw(crate::screens::FilteredScreen::trivial(g), &[qi(1), qi(2), qi(3)]).unwrap();
        let im = psi(&pt).unwrap();
        assert_eq!(im.stratum.n_vertices(), 1);
        assert_eq!(im.stratum.n_nodes(), 0);
        assert!(im.nest.f.iter().all(|&l| l == 0));
        let mut ls = im.cycle_lengths.clone();
        ls.sort();
        // faces of the theta: each pair of edges
        assert_eq!(ls, vec![q(3, 6), q(4, 6), q(5, 6)]);
    }

    #[test]
    fn chi_flips_lambda_component() {
        // one flip brings the quadrilateral to its convex hull
        let g = crate::fatgraph::examples::planar_theta();
        let lambda = vec![qi(1); 3];
        let r = crate::coords::flip_to_qcd(&g, &lambda).unwrap();
        let comp = ComponentGeometry::Lambda { graph: g, lambda, tokens: vec!["a".into(), "b".into(), "c".into()] };
        let st = StratumGraph::new(1, vec![], vec![0, 0, 0]).unwrap();
        let nest = Nest::new(st, vec![0, 0, 0]).unwrap();
        let cell = NestCell::from_raw(nest, &[qi(1), qi(1), qi(1)]).unwrap();
        let ends: Vec<EdgeEnds> =
            (0..3).map(|b| EdgeEnds::Puncture(SlotRef { comp: 0, slot: Slot::Boundary(b) })).collect();
        let out = chi_combinatorial(&[comp], &ends, &cell).unwrap();
        assert_eq!(out.components[0].n_edges(), r.qcd.n_edges());
        assert_eq!(out.weights[0], projectivize(&r.x));
    }

    #[test]
    fn flow_examples() {
        // one essential node gets oriented first
        let g = StratumGraph::new(3, vec![[0, 1], [1, 2], [0, 2]], vec![2]).unwrap();
        let o = PartialOrientation::new(g, vec![Some(0), Some(1), None, Some(2)]).unwrap();
        let st = FlowState::new(o, vec![qi(2), qi(3), qi(5), qi(7)]).unwrap();
        let (next, ph) = contraction_flow_step(&st).unwrap().unwrap();
        assert_eq!(ph, FlowPhase::Essential);
        assert_eq!(next.orientation.tail(2), Some(0));
        assert_eq!(next.lengths[2], qi(2));
        let steps = flow(&st).unwrap();
        assert!(steps.len() >= 2);
        // at f_σ nothing moves
        let c = chain();
        let st = FlowState::new(c, vec![qi(1), qi(1)]).unwrap();
        assert!(contraction_flow_step(&st).unwrap().is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in enumerate_stratum_graphs(4).into_iter().take(40) {
            let os: Vec<PartialOrientation> = all_orientations(&g).into_iter().filter(|o| o.is_realizable()).collect();
            let o = os[rng.gen_range(0..os.len())].clone();
            let ls = (0..g.n_edges()).map(|_| qi(rng.gen_range(1..9))).collect();
            flow(&FlowState::new(o, ls).unwrap()).unwrap();
        }
    }

    #[test]
    fn json_dot() {
        let c = chain();
        let s = serde_json::to_string(&c.to_json()).unwrap();
        let back: OrientationJson = serde_json::from_str(&s).unwrap();
        assert_eq!(PartialOrientation::from_json(&back).unwrap(), c);
        assert!(c.to_dot("o").contains("dir=forward"));
    }
}
