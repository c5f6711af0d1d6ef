//! Punctured fatgraphs with partial pairing, the support and membership
//! conditions, and the projection π from points of filtered screens.
//!
//! Slots are punctured vertices and boundary cycles of the component
//! fatgraphs. A boundary cycle stands for a decorated puncture, a punctured
//! vertex for an undecorated one.

use crate::error::{invariant, Error, Result};
use crate::fatgraph::{EdgeSet, Fatgraph, FatgraphJson, SurfaceType};
use crate::rational::{projectivize, QJson, Q};
use crate::screens::ScreenPoint;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    /// A punctured vertex, by vertex index.
    Puncture(usize),
    /// A boundary cycle, by index in `boundary_cycles()`.
    Boundary(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotRef {
    pub comp: usize,
    pub slot: Slot,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairedFatgraph {
    pub components: Vec<Fatgraph>,
    pub pairs: Vec<[SlotRef; 2]>,
    /// Positive weights per component edge (not necessarily normalized).
    pub weights: Vec<Vec<Q>>,
    /// Opaque embedding token per component edge.
    pub tokens: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub problems: Vec<String>,
}

impl Diagnostics {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

impl PairedFatgraph {
    pub fn new(components: Vec<Fatgraph>, pairs: Vec<[SlotRef; 2]>, weights: Vec<Vec<Q>>, tokens: Vec<Vec<String>>) -> Result<Self> {
        if weights.len() != components.len() || tokens.len() != components.len() {
            return Err(Error::Structure("weights and tokens needed for every component".into()));
        }
        for (i, g) in components.iter().enumerate() {
            if weights[i].len() != g.n_edges() || tokens[i].len() != g.n_edges() {
                return Err(Error::Structure(format!("component {i}: one weight and token per edge")));
            }
            if weights[i].iter().any(|w| !w.is_positive()) {
                return Err(Error::Structure(format!("component {i}: weights must be positive")));
            }
            if !g.is_connected() {
                return Err(Error::Structure(format!("component {i} is disconnected")));
            }
        }
        Ok(PairedFatgraph { components, pairs, weights, tokens })
    }

    /// Single component with no pairing and default tokens.
    pub fn single(g: Fatgraph, weights: Vec<Q>) -> Result<Self> {
        let tokens = (0..g.n_edges()).map(|e| e.to_string()).collect();
        PairedFatgraph::new(vec![g], vec![], vec![weights], vec![tokens])
    }

    pub fn slots(&self, comp: usize) -> Vec<Slot> {
        let g = &self.components[comp];
        let mut out: Vec<Slot> = g.punctured_vertices().into_iter().map(Slot::Puncture).collect();
        out.extend((0..g.boundary_cycles().len()).map(Slot::Boundary));
        out
    }

    pub fn all_slots(&self) -> Vec<SlotRef> {
        (0..self.components.len())
            .flat_map(|c| self.slots(c).into_iter().map(move |slot| SlotRef { comp: c, slot }))
            .collect()
    }

    pub fn paired_slots(&self) -> BTreeSet<SlotRef> {
        self.pairs.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn partner(&self, s: SlotRef) -> Option<SlotRef> {
        self.pairs.iter().find_map(|[a, b]| {
            if *a == s {
                Some(*b)
            } else if *b == s {
                Some(*a)
            } else {
                None
            }
        })
    }

    fn slot_exists(&self, s: &SlotRef) -> bool {
        self.components.get(s.comp).is_some_and(|g| match s.slot {
            Slot::Puncture(v) => v < g.n_verts() && g.is_punctured(v),
            Slot::Boundary(b) => b < g.boundary_cycles().len(),
        })
    }

    pub fn validate_pairing(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        let mut used = BTreeSet::new();
        for (i, [a, b]) in self.pairs.iter().enumerate() {
            for s in [a, b] {
                if !self.slot_exists(s) {
                    d.problems.push(format!("pair {i}: slot {s:?} does not exist"));
                }
                if !used.insert(*s) {
                    d.problems.push(format!("pair {i}: slot {s:?} used twice"));
                }
            }
            if !matches!(a.slot, Slot::Puncture(_)) && !matches!(b.slot, Slot::Puncture(_)) {
                d.problems.push(format!("pair {i}: neither side is a punctured vertex"));
            }
        }
        d
    }

    pub fn unpaired_count(&self) -> usize {
        let paired = self.paired_slots();
        self.all_slots().iter().filter(|s| !paired.contains(s)).count()
    }

    /// Conditions for being supported by a connected surface of type `f`.
    pub fn support_diagnostics(&self, f: SurfaceType) -> Diagnostics {
        let mut d = self.validate_pairing();
        if !d.ok() {
            return d;
        }
        let s = self.unpaired_count();
        if s != f.punctures {
            d.problems.push(format!("{s} unpaired punctures, expected {}", f.punctures));
        }
        let mut total = 0;
        for (i, g) in self.components.iter().enumerate() {
            let chi = g.euler_characteristic();
            total += chi;
            if chi >= 0 {
                d.problems.push(format!("component {i} has Euler characteristic {chi}"));
            }
        }
        if total != f.euler {
            d.problems.push(format!("Euler characteristics sum to {total}, expected {}", f.euler));
        }
        let n = self.components.len();
        let mut reach = vec![false; n];
        let mut stack = vec![0];
        if n > 0 {
            reach[0] = true;
        }
        while let Some(c) = stack.pop() {
            for [a, b] in &self.pairs {
                for (x, y) in [(a, b), (b, a)] {
                    if x.comp == c && !reach[y.comp] {
                        reach[y.comp] = true;
                        stack.push(y.comp);
                    }
                }
            }
        }
        if reach.contains(&false) {
            d.problems.push("components are not connected by pairings".into());
        }
        d
    }

    pub fn supported_by(&self, f: SurfaceType) -> bool {
        self.support_diagnostics(f).ok()
    }

    /// Component `a` points to `b` when a boundary cycle of `a` is paired
    /// with a punctured vertex of `b`.
    pub fn boundary_arrows(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for [a, b] in &self.pairs {
            for (x, y) in [(a, b), (b, a)] {
                if matches!(x.slot, Slot::Boundary(_)) && matches!(y.slot, Slot::Puncture(_)) {
                    out.insert((x.comp, y.comp));
                }
            }
        }
        out
    }

    /// Some component has all boundary cycles unpaired, and boundary-to-
    /// puncture pairings have no cycles.
    pub fn pg_membership(&self) -> bool {
        let paired = self.paired_slots();
        let free_top = (0..self.components.len()).any(|c| {
            (0..self.components[c].boundary_cycles().len()).all(|b| !paired.contains(&SlotRef { comp: c, slot: Slot::Boundary(b) }))
        });
        free_top && is_acyclic(self.components.len(), &self.boundary_arrows())
    }

    /// Weights scaled to sum to one on every component.
    pub fn projectivized(&self) -> PairedFatgraph {
        let mut out = self.clone();
        for w in out.weights.iter_mut() {
            *w = projectivize(w);
        }
        out
    }

    /// A complete invariant of the isomorphism class: components up to
    /// isomorphism respecting normalized weights (and tokens if asked),
    /// together with the pairing between their slots.
    pub fn signature(&self, with_tokens: bool) -> Result<Signature> {
        let p = self.projectivized();
        let mut values: BTreeSet<(Q, String)> = BTreeSet::new();
        let key = |c: usize, e: usize| (p.weights[c][e].clone(), if with_tokens { p.tokens[c][e].clone() } else { String::new() });
        for c in 0..p.components.len() {
            for e in 0..p.components[c].n_edges() {
                values.insert(key(c, e));
            }
        }
        let rank: BTreeMap<(Q, String), u64> = values.into_iter().enumerate().map(|(i, v)| (v, i as u64)).collect();
        let mut comps = Vec::new();
        for (c, g) in p.components.iter().enumerate() {
            let colors: Vec<u64> = (0..g.n_half()).map(|h| rank[&key(c, g.edge_of(h))]).collect();
            let code = g.canonical_form_colored(&colors)?.code;
            let labs = g.canonical_labelings(&colors)?;
            comps.push((code, labs));
        }
        let mut order: Vec<usize> = (0..comps.len()).collect();
        order.sort_by(|&a, &b| comps[a].0.cmp(&comps[b].0));
        let codes: Vec<Vec<u64>> = order.iter().map(|&c| comps[c].0.clone()).collect();
        let mut best: Option<Vec<[(usize, u8, usize); 2]>> = None;
        let mut count = 0usize;
        search_pairings(&p, &comps, &order, &mut vec![], &mut best, &mut count)?;
        Ok(Signature { components: codes, pairs: best.unwrap_or_default() })
    }

    pub fn equivalent(&self, other: &PairedFatgraph, with_tokens: bool) -> Result<bool> {
        Ok(self.signature(with_tokens)? == other.signature(with_tokens)?)
    }
}

fn is_acyclic(n: usize, arrows: &BTreeSet<(usize, usize)>) -> bool {
    let mut indeg = vec![0; n];
    for &(_, b) in arrows {
        indeg[b] += 1;
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &(a, b) in arrows {
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

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub components: Vec<Vec<u64>>,
    pub pairs: Vec<[(usize, u8, usize); 2]>,
}

type Labelled = (Vec<u64>, Vec<Vec<usize>>);

/// Canonical name of a slot under a labelling of its component.
fn slot_name(g: &Fatgraph, lab: &[usize], s: Slot) -> (u8, usize) {
    match s {
        Slot::Puncture(v) => (0, g.vertex(v).iter().map(|&h| lab[h]).min().unwrap()),
        Slot::Boundary(b) => (1, g.boundary_cycles()[b].iter().map(|&h| lab[h]).min().unwrap()),
    }
}

/// Minimize the pairing list over orderings of isomorphic components and
/// over automorphisms of each component.
fn search_pairings(
    p: &PairedFatgraph,
    comps: &[Labelled],
    order: &[usize],
    choice: &mut Vec<(usize, usize)>,
    best: &mut Option<Vec<[(usize, u8, usize); 2]>>,
    count: &mut usize,
) -> Result<()> {
    *count += 1;
    if *count > 200_000 {
        return Err(Error::Cap("pairing signature search too large".into()));
    }
    let k = choice.len();
    if k == order.len() {
        let pos: BTreeMap<usize, (usize, usize)> = choice.iter().enumerate().map(|(i, &(c, l))| (c, (i, l))).collect();
        let mut list: Vec<[(usize, u8, usize); 2]> = p
            .pairs
            .iter()
            .map(|pr| {
                let mut x = pr.map(|s| {
                    let (i, l) = pos[&s.comp];
                    let (kind, id) = slot_name(&p.components[s.comp], &comps[s.comp].1[l], s.slot);
                    (i, kind, id)
                });
                x.sort();
                x
            })
            .collect();
        list.sort();
        if best.as_ref().is_none_or(|b| list < *b) {
            *best = Some(list);
        }
        return Ok(());
    }
    let code = &comps[order[k]].0;
    let used: BTreeSet<usize> = choice.iter().map(|x| x.0).collect();
    let cands: Vec<usize> = order.iter().copied().filter(|c| !used.contains(c) && comps[*c].0 == *code).collect();
    for c in cands {
        for l in 0..comps[c].1.len() {
            choice.push((c, l));
            search_pairings(p, comps, order, choice, best, count)?;
            choice.pop();
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    /// A simple cycle bounding a bare face shrinks to an unpaired punctured vertex.
    Horocycle,
    /// A simple cycle pinches to two paired punctured vertices.
    Pinch,
    /// A deeper fatgraph is cut out along its boundary cycles.
    Cut,
}

/// One local move of the projection, in the order performed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiMove {
    pub kind: MoveKind,
    /// Level of the deep component's edges.
    pub level: usize,
    /// Edges of the deep component, in the input graph.
    pub edges: EdgeSet,
    /// Slots created, in the output.
    pub slots: Vec<SlotRef>,
}

/// Working copy of the input graph. Half-edges keep their input indices;
/// new punctured vertices are appended.
struct Work<'a> {
    g: &'a Fatgraph,
    alive: Vec<bool>,
    vert_of: Vec<usize>,
    verts: Vec<Vec<usize>>,
    punct: Vec<bool>,
    level: Vec<usize>,
    done: Vec<bool>,
}

/// Pending slot: a punctured vertex of the working graph, or the boundary
/// cycle through a departing half-edge.
#[derive(Clone, Copy, Debug)]
enum Pending {
    Vertex(usize),
    Face(usize),
}

struct Face {
    cycle: Vec<usize>,
    attachments: Vec<usize>,
}

impl Work<'_> {
    fn faces(&self, k: &EdgeSet) -> Vec<Face> {
        let inside = |h: usize| k.contains(&self.g.edge_of(h));
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &e in k {
            for s in self.g.edge(e) {
                if seen.contains(&s) {
                    continue;
                }
                let mut cycle = vec![];
                let mut attachments = vec![];
                let mut h = s;
                while seen.insert(h) {
                    cycle.push(h);
                    let arr = self.g.pair(h);
                    let cyc = &self.verts[self.vert_of[arr]];
                    let at = cyc.iter().position(|&x| x == arr).unwrap();
                    let mut i = (at + 1) % cyc.len();
                    while !inside(cyc[i]) {
                        attachments.push(cyc[i]);
                        i = (i + 1) % cyc.len();
                    }
                    h = cyc[i];
                }
                out.push(Face { cycle, attachments });
            }
        }
        out
    }

    /// Move half-edges to a new punctured vertex in the given order.
    fn new_vertex(&mut self, hs: &[usize]) -> usize {
        let v = self.verts.len();
        for &h in hs {
            let old = self.vert_of[h];
            self.verts[old].retain(|&x| x != h);
            self.vert_of[h] = v;
        }
        self.verts.push(hs.to_vec());
        self.punct.push(true);
        v
    }

    fn delete(&mut self, k: &EdgeSet) {
        for &e in k {
            for h in self.g.edge(e) {
                self.alive[h] = false;
                let v = self.vert_of[h];
                self.verts[v].retain(|&x| x != h);
            }
        }
    }

    fn active_components(&self, min_level: usize) -> Vec<EdgeSet> {
        let a: EdgeSet = (0..self.g.n_edges())
            .filter(|&e| !self.done[e] && self.alive[self.g.edge(e)[0]] && self.level[e] >= min_level)
            .collect();
        // components through shared working vertices
        let mut comp_of: BTreeMap<usize, usize> = BTreeMap::new();
        let mut parent: Vec<usize> = (0..self.verts.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &e in &a {
            let [h, hp] = self.g.edge(e);
            let (u, v) = (find(&mut parent, self.vert_of[h]), find(&mut parent, self.vert_of[hp]));
            parent[u] = v;
        }
        let mut out: Vec<EdgeSet> = Vec::new();
        for &e in &a {
            let r = find(&mut parent, self.vert_of[self.g.edge(e)[0]]);
            let i = *comp_of.entry(r).or_insert_with(|| {
                out.push(EdgeSet::new());
                out.len() - 1
            });
            out[i].insert(e);
        }
        out
    }

    /// Face of the working graph through `h`.
    fn face_walk(&self, h: usize) -> Vec<usize> {
        let mut out = vec![h];
        let mut x = h;
        loop {
            let arr = self.g.pair(x);
            let cyc = &self.verts[self.vert_of[arr]];
            let at = cyc.iter().position(|&y| y == arr).unwrap();
            x = cyc[(at + 1) % cyc.len()];
            if x == h {
                return out;
            }
            out.push(x);
        }
    }

    fn k_valence(&self, v: usize, k: &EdgeSet) -> usize {
        self.verts[v].iter().filter(|&&h| k.contains(&self.g.edge_of(h))).count()
    }
}

/// π: the punctured fatgraph with partial pairing of a screen point.
pub fn project_pi(pt: &ScreenPoint) -> Result<PairedFatgraph> {
    project_pi_traced(pt).map(|(p, _)| p)
}

/// Bookkeeping of a projection: the moves, and for each output component
/// its screen level, the input edges behind each of its edges, and the
/// unnormalized (summed) weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiTrace {
    pub moves: Vec<PiMove>,
    pub levels: Vec<usize>,
    pub members: Vec<Vec<Vec<usize>>>,
    pub raw_weights: Vec<Vec<Q>>,
    /// Where each slot of the input graph ends up.
    pub slot_map: BTreeMap<Slot, SlotRef>,
}

/// A face of the input followed through the moves: by one of its
/// half-edges, or by the punctured vertex it shrank to.
#[derive(Clone, Copy, Debug)]
enum FaceTrack {
    Half(usize),
    Vertex(usize),
}

/// π together with the moves performed.
pub fn project_pi_traced(pt: &ScreenPoint) -> Result<(PairedFatgraph, PiTrace)> {
    let f = &pt.screen;
    f.validate()?;
    let g = &f.graph;
    let mut w = Work {
        g,
        alive: vec![true; g.n_half()],
        vert_of: (0..g.n_half()).map(|h| g.vertex_of(h)).collect(),
        verts: g.vertices().to_vec(),
        punct: (0..g.n_verts()).map(|v| g.is_punctured(v)).collect(),
        level: (0..g.n_edges()).map(|e| f.level_of(e)).collect(),
        done: vec![false; g.n_edges()],
    };
    let mut pending: Vec<[Pending; 2]> = Vec::new();
    let mut moves: Vec<(MoveKind, usize, EdgeSet, Vec<Pending>)> = Vec::new();
    let mut tracks: Vec<FaceTrack> = g.boundary_cycles().iter().map(|c| FaceTrack::Half(c[0])).collect();
    for k in (0..f.total_level()).rev() {
        for comp in w.active_components(k + 1) {
            // faces lying wholly on the component, by index into `tracks`
            let mut swallowed = Vec::new();
            for (i, t) in tracks.iter_mut().enumerate() {
                let FaceTrack::Half(h) = *t else { continue };
                if !comp.contains(&g.edge_of(h)) {
                    continue;
                }
                let cyc = w.face_walk(h);
                match cyc.iter().find(|&&x| !comp.contains(&g.edge_of(x))) {
                    Some(&x) => *t = FaceTrack::Half(x),
                    None => swallowed.push(i),
                }
            }
            let faces = w.faces(&comp);
            let vs: BTreeSet<usize> = comp.iter().flat_map(|&e| g.edge(e).map(|h| w.vert_of[h])).collect();
            let simple = vs.iter().all(|&v| !w.punct[v] && w.k_valence(v, &comp) == 2);
            if simple {
                invariant(faces.len() == 2, || "a simple cycle has two sides".into())?;
                let (a, b) = (&faces[0].attachments, &faces[1].attachments);
                invariant(!(a.is_empty() && b.is_empty()), || "a simple cycle is the whole graph".into())?;
                if a.is_empty() || b.is_empty() {
                    let att = if a.is_empty() { b.clone() } else { a.clone() };
                    let p = w.new_vertex(&att);
                    for &i in &swallowed {
                        tracks[i] = FaceTrack::Vertex(p);
                    }
                    moves.push((MoveKind::Horocycle, k + 1, comp.clone(), vec![Pending::Vertex(p)]));
                } else {
                    invariant(swallowed.is_empty(), || "a pinched cycle bounds a face".into())?;
                    let (a, b) = (a.clone(), b.clone());
                    let p1 = w.new_vertex(&a);
                    let p2 = w.new_vertex(&b);
                    pending.push([Pending::Vertex(p1), Pending::Vertex(p2)]);
                    moves.push((MoveKind::Pinch, k + 1, comp.clone(), vec![Pending::Vertex(p1), Pending::Vertex(p2)]));
                }
                w.delete(&comp);
            } else {
                let mut created = Vec::new();
                for face in &faces {
                    if face.attachments.is_empty() {
                        continue;
                    }
                    let d = *face
                        .cycle
                        .iter()
                        .find(|&&h| {
                            let v = w.vert_of[h];
                            w.punct[v] || w.k_valence(v, &comp) >= 3
                        })
                        .ok_or_else(|| Error::Invariant("face runs only through bivalent vertices".into()))?;
                    let p = w.new_vertex(&face.attachments);
                    pending.push([Pending::Face(d), Pending::Vertex(p)]);
                    created.push(Pending::Face(d));
                    created.push(Pending::Vertex(p));
                }
                moves.push((MoveKind::Cut, k + 1, comp.clone(), created));
            }
            for &e in &comp {
                w.done[e] = true;
            }
        }
    }
    assemble(pt, &w, &pending, moves, &tracks)
}

fn assemble(
    pt: &ScreenPoint,
    w: &Work,
    pending: &[[Pending; 2]],
    moves: Vec<(MoveKind, usize, EdgeSet, Vec<Pending>)>,
    tracks: &[FaceTrack],
) -> Result<(PairedFatgraph, PiTrace)> {
    let g = w.g;
    // compact the working graph
    let mut id = vec![usize::MAX; g.n_half()];
    let mut next = 0;
    let mut old_edges = Vec::new();
    for e in 0..g.n_edges() {
        let [a, b] = g.edge(e);
        if w.alive[a] {
            id[a] = next;
            id[b] = next + 1;
            next += 2;
            old_edges.push(e);
        }
    }
    let mut vmap = vec![usize::MAX; w.verts.len()];
    let mut verts = Vec::new();
    let mut punct = Vec::new();
    for (v, cyc) in w.verts.iter().enumerate() {
        if cyc.is_empty() {
            continue;
        }
        vmap[v] = verts.len();
        if w.punct[v] {
            punct.push(verts.len());
        }
        verts.push(cyc.iter().map(|&h| id[h]).collect::<Vec<usize>>());
    }
    let edges = (0..old_edges.len()).map(|i| [2 * i, 2 * i + 1]).collect();
    let big = Fatgraph::new(edges, verts, &punct)?;
    let (sm, hmap, emap) = big.smooth_bivalent()?;
    // merged weights, levels and tokens per smoothed edge
    let mut weight = vec![Q::zero(); sm.n_edges()];
    let mut members: Vec<Vec<usize>> = vec![vec![]; sm.n_edges()];
    for (i, &e) in old_edges.iter().enumerate() {
        weight[emap[i]] += &pt.weights[e];
        members[emap[i]].push(e);
    }
    for m in &members {
        let l = w.level[m[0]];
        invariant(m.iter().all(|&e| w.level[e] == l), || "merged chain spans several levels".into())?;
    }
    let parts = sm.split_components();
    let mut where_half = vec![(usize::MAX, usize::MAX); sm.n_half()];
    for (c, (_, amb)) in parts.iter().enumerate() {
        for (nh, &oh) in amb.iter().enumerate() {
            where_half[oh] = (c, nh);
        }
    }
    let resolve = |p: Pending| -> Result<SlotRef> {
        match p {
            Pending::Vertex(v) => {
                let h0 = w.verts[v][0];
                let sh = hmap[id[h0]].ok_or_else(|| Error::Invariant("punctured vertex smoothed away".into()))?;
                let (c, nh) = where_half[sh];
                Ok(SlotRef { comp: c, slot: Slot::Puncture(parts[c].0.vertex_of(nh)) })
            }
            Pending::Face(d) => {
                let sh = hmap[id[d]].ok_or_else(|| Error::Invariant("face marker smoothed away".into()))?;
                let (c, nh) = where_half[sh];
                Ok(SlotRef { comp: c, slot: Slot::Boundary(parts[c].0.face_index()[nh]) })
            }
        }
    };
    let pairs = pending.iter().map(|[a, b]| Ok([resolve(*a)?, resolve(*b)?])).collect::<Result<Vec<_>>>()?;
    let mut slot_map = BTreeMap::new();
    for v in g.punctured_vertices() {
        slot_map.insert(Slot::Puncture(v), resolve(Pending::Vertex(v))?);
    }
    for (b, t) in tracks.iter().enumerate() {
        let to = match *t {
            FaceTrack::Vertex(p) => resolve(Pending::Vertex(p))?,
            FaceTrack::Half(h) => {
                // step to a half-edge that survives smoothing
                let mut x = id[h];
                let mut steps = 0;
                while hmap[x].is_none() {
                    x = big.face_next(x);
                    steps += 1;
                    invariant(steps <= big.n_half(), || "face smoothed away".into())?;
                }
                let (c, nh) = where_half[hmap[x].unwrap()];
                SlotRef { comp: c, slot: Slot::Boundary(parts[c].0.face_index()[nh]) }
            }
        };
        slot_map.insert(Slot::Boundary(b), to);
    }
    let mut comps = Vec::new();
    let mut weights = Vec::new();
    let mut tokens = Vec::new();
    let mut raw_weights = Vec::new();
    let mut comp_members = Vec::new();
    let mut levels = Vec::new();
    for (cg, amb) in &parts {
        let es: Vec<usize> = (0..cg.n_edges()).map(|e| sm.edge_of(amb[cg.edge(e)[0]])).collect();
        let ws: Vec<Q> = es.iter().map(|&e| weight[e].clone()).collect();
        weights.push(projectivize(&ws));
        raw_weights.push(ws);
        comp_members.push(es.iter().map(|&e| members[e].clone()).collect::<Vec<_>>());
        levels.push(w.level[members[es[0]][0]]);
        tokens.push(
            es.iter()
                .map(|&e| members[e].iter().map(|x| x.to_string()).collect::<Vec<_>>().join("+"))
                .collect(),
        );
        comps.push(cg.clone());
    }
    let out = PairedFatgraph::new(comps, pairs, weights, tokens)?;
    let moves = moves
        .into_iter()
        .map(|(kind, level, edges, slots)| {
            Ok(PiMove { kind, level, edges, slots: slots.into_iter().map(resolve).collect::<Result<Vec<_>>>()? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, PiTrace { moves, levels, members: comp_members, raw_weights, slot_map }))
}

/// p ∼ q: equal images under π, including embedding tokens.
pub fn pi_equivalent(p: &ScreenPoint, q: &ScreenPoint) -> Result<bool> {
    project_pi(p)?.equivalent(&project_pi(q)?, true)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedFatgraphJson {
    pub components: Vec<FatgraphJson>,
    pub pairings: Vec<[SlotRef; 2]>,
    pub weights: Vec<Vec<QJson>>,
    pub tokens: Vec<Vec<String>>,
}

impl PairedFatgraphJson {
    pub fn from_paired(p: &PairedFatgraph) -> Self {
        PairedFatgraphJson {
            components: p.components.iter().map(|g| g.to_json()).collect(),
            pairings: p.pairs.clone(),
            weights: p.weights.iter().map(|w| w.iter().map(Into::into).collect()).collect(),
            tokens: p.tokens.clone(),
        }
    }

    pub fn to_paired(&self) -> Result<PairedFatgraph> {
        let comps = self.components.iter().map(Fatgraph::from_json).collect::<Result<Vec<_>>>()?;
        let weights = self
            .weights
            .iter()
            .map(|w| w.iter().map(|x| x.to_q()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        PairedFatgraph::new(comps, self.pairings.clone(), weights, self.tokens.clone())
    }
}
