//! Half-edge fatgraphs with punctured vertices.
//!
//! Half-edges are dense indices `0..2E`. The pairing `pair` is a fixed point
//! free involution, `rot` is the rotation (successor of a half-edge in the
//! cyclic order at its vertex). Boundary cycles are the orbits of the face
//! permutation `h -> rot[pair[h]]`: arrive along an edge, then turn to the
//! next half-edge in the cyclic order at the vertex reached.

use crate::error::{pre, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;

pub type EdgeSet = BTreeSet<usize>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fatgraph {
    pair: Vec<usize>,
    rot: Vec<usize>,
    rot_inv: Vec<usize>,
    edges: Vec<[usize; 2]>,
    edge_of: Vec<usize>,
    verts: Vec<Vec<usize>>,
    vert_of: Vec<usize>,
    punctured: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SurfaceType {
    pub genus: usize,
    pub punctures: usize,
    pub euler: i64,
}

impl SurfaceType {
    pub fn new(genus: usize, punctures: usize) -> Self {
        SurfaceType { genus, punctures, euler: 2 - 2 * genus as i64 - punctures as i64 }
    }

    /// Negative Euler characteristic with at least one puncture.
    pub fn is_supported(&self) -> bool {
        self.euler < 0 && self.punctures > 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FatgraphJson {
    pub pairing: Vec<[usize; 2]>,
    pub rotation: Vec<Vec<usize>>,
    #[serde(default)]
    pub punctured: Vec<usize>,
}

/// Result of canonical labelling. `labeling[h]` is the canonical index of `h`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalForm {
    pub code: Vec<u64>,
    pub aut: usize,
    pub labeling: Vec<usize>,
}

impl Fatgraph {
    /// Build from an edge list and rotation cycles. Edge `i` is `edges[i]`,
    /// vertex `j` is `rotation[j]`; `punctured` lists vertex indices.
    pub fn new(edges: Vec<[usize; 2]>, rotation: Vec<Vec<usize>>, punctured: &[usize]) -> Result<Self> {
        let n = 2 * edges.len();
        let mut pair = vec![usize::MAX; n];
        let mut edge_of = vec![usize::MAX; n];
        for (i, &[a, b]) in edges.iter().enumerate() {
            if a >= n || b >= n || a == b {
                return Err(Error::Structure(format!("bad edge {i}: [{a}, {b}]")));
            }
            if pair[a] != usize::MAX || pair[b] != usize::MAX {
                return Err(Error::Structure(format!("half-edge reused in edge {i}")));
            }
            pair[a] = b;
            pair[b] = a;
            edge_of[a] = i;
            edge_of[b] = i;
        }
        let mut rot = vec![usize::MAX; n];
        let mut rot_inv = vec![usize::MAX; n];
        let mut vert_of = vec![usize::MAX; n];
        for (v, cyc) in rotation.iter().enumerate() {
            if cyc.is_empty() {
                return Err(Error::Structure(format!("vertex {v} has no half-edges")));
            }
            for (k, &h) in cyc.iter().enumerate() {
                if h >= n || vert_of[h] != usize::MAX {
                    return Err(Error::Structure(format!("half-edge {h} misplaced in rotation")));
                }
                vert_of[h] = v;
                let nx = cyc[(k + 1) % cyc.len()];
                rot[h] = nx;
                rot_inv[nx] = h;
            }
        }
        if vert_of.contains(&usize::MAX) {
            return Err(Error::Structure("some half-edge lies at no vertex".into()));
        }
        let mut punct = vec![false; rotation.len()];
        for &p in punctured {
            if p >= rotation.len() || punct[p] {
                return Err(Error::Structure(format!("bad punctured vertex {p}")));
            }
            punct[p] = true;
        }
        Ok(Fatgraph { pair, rot, rot_inv, edges, edge_of, verts: rotation, vert_of, punctured: punct })
    }

    /// Build from raw permutations. Edges are ordered by smaller half-edge,
    /// vertices by smallest half-edge; `punct_of` decides marks per vertex.
    pub fn from_permutations(pair: &[usize], rot: &[usize], punct_of: impl Fn(&[usize]) -> bool) -> Result<Self> {
        let n = pair.len();
        let mut edges = Vec::new();
        for h in 0..n {
            if pair[h] > h {
                edges.push([h, pair[h]]);
            } else if pair[h] == h || pair[pair[h]] != h {
                return Err(Error::Structure("pairing is not a free involution".into()));
            }
        }
        let mut seen = vec![false; n];
        let mut verts = Vec::new();
        let mut punct = Vec::new();
        for h in 0..n {
            if seen[h] {
                continue;
            }
            let mut cyc = vec![];
            let mut x = h;
            while !seen[x] {
                seen[x] = true;
                cyc.push(x);
                x = rot[x];
            }
            if x != h {
                return Err(Error::Structure("rotation is not a permutation".into()));
            }
            if punct_of(&cyc) {
                punct.push(verts.len());
            }
            verts.push(cyc);
        }
        Fatgraph::new(edges, verts, &punct)
    }

    pub fn from_json(j: &FatgraphJson) -> Result<Self> {
        Fatgraph::new(j.pairing.clone(), j.rotation.clone(), &j.punctured)
    }

    pub fn to_json(&self) -> FatgraphJson {
        FatgraphJson {
            pairing: self.edges.clone(),
            rotation: self.verts.clone(),
            punctured: self.punctured_vertices(),
        }
    }

    pub fn n_half(&self) -> usize {
        self.pair.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_verts(&self) -> usize {
        self.verts.len()
    }
    pub fn pair(&self, h: usize) -> usize {
        self.pair[h]
    }
    pub fn rot(&self, h: usize) -> usize {
        self.rot[h]
    }
    pub fn rot_inv(&self, h: usize) -> usize {
        self.rot_inv[h]
    }
    pub fn edge_of(&self, h: usize) -> usize {
        self.edge_of[h]
    }
    pub fn vertex_of(&self, h: usize) -> usize {
        self.vert_of[h]
    }
    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn vertex(&self, v: usize) -> &[usize] {
        &self.verts[v]
    }
    pub fn vertices(&self) -> &[Vec<usize>] {
        &self.verts
    }
    pub fn is_punctured(&self, v: usize) -> bool {
        self.punctured[v]
    }
    pub fn valence(&self, v: usize) -> usize {
        self.verts[v].len()
    }
    pub fn punctured_vertices(&self) -> Vec<usize> {
        (0..self.n_verts()).filter(|&v| self.punctured[v]).collect()
    }
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        let [a, b] = self.edges[e];
        (self.vert_of[a], self.vert_of[b])
    }
    pub fn is_loop(&self, e: usize) -> bool {
        let (u, v) = self.endpoints(e);
        u == v
    }
    pub fn all_edges(&self) -> EdgeSet {
        (0..self.n_edges()).collect()
    }

    /// Face permutation.
    pub fn face_next(&self, h: usize) -> usize {
        self.rot[self.pair[h]]
    }

    /// Orbits of the face permutation, ordered by smallest member, each
    /// starting at its smallest member.
    pub fn boundary_cycles(&self) -> Vec<Vec<usize>> {
        let n = self.n_half();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for h in 0..n {
            if seen[h] {
                continue;
            }
            let mut cyc = vec![];
            let mut x = h;
            while !seen[x] {
                seen[x] = true;
                cyc.push(x);
                x = self.face_next(x);
            }
            out.push(cyc);
        }
        out
    }

    /// Face index of every half-edge, in the order of `boundary_cycles`.
    pub fn face_index(&self) -> Vec<usize> {
        let mut f = vec![0; self.n_half()];
        for (i, c) in self.boundary_cycles().iter().enumerate() {
            for &h in c {
                f[h] = i;
            }
        }
        f
    }

    pub fn euler_characteristic(&self) -> i64 {
        let vu = self.punctured.iter().filter(|&&p| !p).count() as i64;
        vu - self.n_edges() as i64
    }

    /// Vertex sets of connected components, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let nv = self.n_verts();
        let mut comp = vec![usize::MAX; nv];
        let mut out = Vec::new();
        for s in 0..nv {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut list = vec![s];
            comp[s] = id;
            let mut i = 0;
            while i < list.len() {
                let v = list[i];
                i += 1;
                for &h in &self.verts[v] {
                    let w = self.vert_of[self.pair[h]];
                    if comp[w] == usize::MAX {
                        comp[w] = id;
                        list.push(w);
                    }
                }
            }
            list.sort_unstable();
            out.push(list);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    pub fn surface_type(&self) -> Result<SurfaceType> {
        if !self.is_connected() {
            return pre("surface_type needs a connected fatgraph");
        }
        let s = self.boundary_cycles().len() + self.punctured_vertices().len();
        let chi = self.euler_characteristic();
        let two_g = 2 - chi - s as i64;
        if two_g < 0 || two_g % 2 != 0 {
            return Err(Error::Validation(format!("inconsistent data: chi={chi}, s={s}")));
        }
        Ok(SurfaceType { genus: (two_g / 2) as usize, punctures: s, euler: chi })
    }

    /// Every vertex of valence one or two is punctured.
    pub fn is_qcd_dual(&self) -> bool {
        (0..self.n_verts()).all(|v| self.valence(v) >= 3 || self.punctured[v])
    }

    /// Unpunctured vertices trivalent, punctured vertices univalent.
    pub fn is_quasi_triangulation(&self) -> bool {
        (0..self.n_verts()).all(|v| if self.punctured[v] { self.valence(v) == 1 } else { self.valence(v) == 3 })
    }

    /// Inverse of a collapse: move `len` consecutive half-edges of `v`,
    /// starting at rotation position `start`, to a new unpunctured vertex
    /// joined to `v` by a new last edge.
    pub fn split_vertex(&self, v: usize, start: usize, len: usize) -> Result<Fatgraph> {
        let cyc = &self.verts[v];
        let k = cyc.len();
        if len < 2 || len >= k {
            return pre(format!("cannot split {len} of {k} half-edges"));
        }
        let (hv, hw) = (self.n_half(), self.n_half() + 1);
        let run: Vec<usize> = (0..len).map(|i| cyc[(start + i) % k]).collect();
        let mut rest: Vec<usize> = (len..k).map(|i| cyc[(start + i) % k]).collect();
        rest.push(hv);
        let mut w = run;
        w.push(hw);
        let mut verts = self.verts.clone();
        verts[v] = rest;
        verts.push(w);
        let mut edges = self.edges.clone();
        edges.push([hv, hw]);
        Fatgraph::new(edges, verts, &self.punctured_vertices())
    }

    /// Move the puncture of `v` onto a new univalent vertex, attached by a
    /// new last edge inserted before rotation position `pos`.
    pub fn unpuncture_vertex(&self, v: usize, pos: usize) -> Result<Fatgraph> {
        if !self.punctured[v] {
            return pre(format!("vertex {v} is not punctured"));
        }
        let (hv, hw) = (self.n_half(), self.n_half() + 1);
        let mut verts = self.verts.clone();
        let k = verts[v].len();
        verts[v].insert(pos % (k + 1), hv);
        verts.push(vec![hw]);
        let mut edges = self.edges.clone();
        edges.push([hv, hw]);
        let mut punct: Vec<usize> = self.punctured_vertices().into_iter().filter(|&x| x != v).collect();
        punct.push(verts.len() - 1);
        Fatgraph::new(edges, verts, &punct)
    }

    /// Erase bivalent unpunctured vertices, merging the edges through them.
    /// Returns the new graph, the new index of each surviving half-edge and
    /// the new edge of each old edge.
    pub fn smooth_bivalent(&self) -> Result<(Fatgraph, Vec<Option<usize>>, Vec<usize>)> {
        let n = self.n_half();
        let keep: Vec<bool> = (0..n)
            .map(|h| {
                let v = self.vert_of[h];
                self.punctured[v] || self.verts[v].len() != 2
            })
            .collect();
        let mut id = vec![None; n];
        let mut next = 0;
        for h in 0..n {
            if keep[h] {
                id[h] = Some(next);
                next += 1;
            }
        }
        let mut edge_map = vec![usize::MAX; self.n_edges()];
        let mut edges = Vec::new();
        let mut done = vec![false; n];
        for a in 0..n {
            if !keep[a] || done[a] {
                continue;
            }
            let mut cur = a;
            let mut chain = vec![self.edge_of[a]];
            let b = loop {
                let x = self.pair[cur];
                if keep[x] {
                    break x;
                }
                cur = self.rot[x];
                chain.push(self.edge_of[cur]);
                if chain.len() > self.n_edges() {
                    return Err(Error::Invariant("runaway chain while smoothing".into()));
                }
            };
            done[a] = true;
            done[b] = true;
            for e in chain {
                edge_map[e] = edges.len();
            }
            edges.push([id[a].unwrap(), id[b].unwrap()]);
        }
        if edge_map.contains(&usize::MAX) {
            return pre("a component is a cycle of bivalent vertices");
        }
        let mut verts = Vec::new();
        let mut punct = Vec::new();
        for v in 0..self.n_verts() {
            if !keep[self.verts[v][0]] {
                continue;
            }
            if self.punctured[v] {
                punct.push(verts.len());
            }
            verts.push(self.verts[v].iter().map(|&h| id[h].unwrap()).collect());
        }
        Ok((Fatgraph::new(edges, verts, &punct)?, id, edge_map))
    }

    /// Split into connected components. Returns each component with, for
    /// each of its half-edges, the half-edge of `self`.
    pub fn split_components(&self) -> Vec<(Fatgraph, Vec<usize>)> {
        self.components()
            .iter()
            .map(|comp| {
                let edges: EdgeSet = comp.iter().flat_map(|&v| self.verts[v].iter().map(|&h| self.edge_of[h])).collect();
                self.subgraph(&edges)
            })
            .collect()
    }

    /// Equality up to the numbering of vertices.
    pub fn same_structure(&self, other: &Fatgraph) -> bool {
        self.pair == other.pair
            && self.rot == other.rot
            && self.edges == other.edges
            && (0..self.n_half()).all(|h| self.punctured[self.vert_of[h]] == other.punctured[other.vert_of[h]])
    }

    /// Relabel half-edges: `perm[old] = new`. Edge and vertex order kept.
    pub fn relabel(&self, perm: &[usize]) -> Fatgraph {
        let edges = self.edges.iter().map(|&[a, b]| [perm[a], perm[b]]).collect();
        let verts = self.verts.iter().map(|c| c.iter().map(|&h| perm[h]).collect()).collect();
        Fatgraph::new(edges, verts, &self.punctured_vertices()).expect("relabel keeps structure")
    }

    /// Swap the two half-edges of `e`, i.e. reverse its orientation.
    pub fn reverse_edge(&self, e: usize) -> Fatgraph {
        let mut perm: Vec<usize> = (0..self.n_half()).collect();
        let [a, b] = self.edges[e];
        perm[a] = b;
        perm[b] = a;
        let g = self.relabel(&perm);
        let mut edges = g.edges.clone();
        edges[e] = [a, b];
        let punct = g.punctured_vertices();
        Fatgraph::new(edges, g.verts, &punct).expect("reverse keeps structure")
    }

    /// Collapse a non-loop edge whose endpoints are not both punctured.
    pub fn collapse_edge(&self, e: usize) -> Result<Fatgraph> {
        self.collapse_edge_mapped(e).map(|(g, _)| g)
    }

    /// Collapse and also return the half-edge map old -> new (`None` for
    /// the two removed half-edges). Surviving edges keep their order.
    pub fn collapse_edge_mapped(&self, e: usize) -> Result<(Fatgraph, Vec<Option<usize>>)> {
        if e >= self.n_edges() {
            return pre(format!("no edge {e}"));
        }
        let [h, hp] = self.edges[e];
        let (u, v) = (self.vert_of[h], self.vert_of[hp]);
        if u == v {
            return pre(format!("edge {e} is a loop"));
        }
        if self.punctured[u] && self.punctured[v] {
            return pre(format!("edge {e} joins two punctured vertices"));
        }
        let mut hmap = vec![None; self.n_half()];
        let mut next = 0;
        for x in 0..self.n_half() {
            if x != h && x != hp {
                hmap[x] = Some(next);
                next += 1;
            }
        }
        let m = |x: usize| hmap[x].unwrap();
        // u = (h, u1..uk), v = (h', v1..vm) becomes (u1..uk, v1..vm)
        let mut merged = Vec::new();
        let mut x = self.rot[h];
        while x != h {
            merged.push(m(x));
            x = self.rot[x];
        }
        let mut x = self.rot[hp];
        while x != hp {
            merged.push(m(x));
            x = self.rot[x];
        }
        let keep = u.min(v);
        let drop = u.max(v);
        let mut verts = Vec::new();
        let mut punct = Vec::new();
        for w in 0..self.n_verts() {
            if w == drop {
                continue;
            }
            let cyc: Vec<usize> = if w == keep { merged.clone() } else { self.verts[w].iter().map(|&y| m(y)).collect() };
            let p = if w == keep { self.punctured[u] || self.punctured[v] } else { self.punctured[w] };
            if cyc.is_empty() {
                // both endpoints univalent: the graph was a single edge
                return pre("collapsing the only edge leaves no fatgraph");
            }
            if p {
                punct.push(verts.len());
            }
            verts.push(cyc);
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != e)
            .map(|(_, &[a, b])| [m(a), m(b)])
            .collect();
        Ok((Fatgraph::new(edges, verts, &punct)?, hmap))
    }

    /// Edge-induced subgraph G(A): vertices incident to A with the induced
    /// rotation. Returns the subgraph, and for each of its half-edges the
    /// ambient half-edge. Ambient punctured marks are kept.
    pub fn subgraph(&self, a: &EdgeSet) -> (Fatgraph, Vec<usize>) {
        let inside = |h: usize| a.contains(&self.edge_of[h]);
        let mut amb: Vec<usize> = Vec::new();
        let mut new_id = vec![usize::MAX; self.n_half()];
        for &e in a {
            for &h in &self.edges[e] {
                new_id[h] = amb.len();
                amb.push(h);
            }
        }
        let edges = (0..a.len()).map(|i| [2 * i, 2 * i + 1]).collect();
        let mut verts = Vec::new();
        let mut punct = Vec::new();
        for v in 0..self.n_verts() {
            let cyc: Vec<usize> = self.verts[v].iter().filter(|&&h| inside(h)).map(|&h| new_id[h]).collect();
            if cyc.is_empty() {
                continue;
            }
            if self.punctured[v] {
                punct.push(verts.len());
            }
            verts.push(cyc);
        }
        (Fatgraph::new(edges, verts, &punct).expect("subgraph is well formed"), amb)
    }

    /// Number of half-edges of `A` at vertex `v`.
    pub fn valence_in(&self, v: usize, a: &EdgeSet) -> usize {
        self.verts[v].iter().filter(|&&h| a.contains(&self.edge_of[h])).count()
    }

    /// Vertices of G(A).
    pub fn vertices_of(&self, a: &EdgeSet) -> BTreeSet<usize> {
        a.iter().flat_map(|&e| self.edges[e].iter().map(|&h| self.vert_of[h])).collect()
    }

    /// Edge sets of the connected components of G(A).
    pub fn edge_components(&self, a: &EdgeSet) -> Vec<EdgeSet> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &s in a {
            if seen.contains(&s) {
                continue;
            }
            let mut comp = EdgeSet::new();
            let mut stack = vec![s];
            seen.insert(s);
            while let Some(e) = stack.pop() {
                comp.insert(e);
                for &h in &self.edges[e] {
                    for &x in &self.verts[self.vert_of[h]] {
                        let f = self.edge_of[x];
                        if a.contains(&f) && seen.insert(f) {
                            stack.push(f);
                        }
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// G(A) is a closed chain of distinct edges through bivalent,
    /// unpunctured vertices.
    pub fn is_simple_cycle(&self, a: &EdgeSet) -> bool {
        if a.is_empty() || self.edge_components(a).len() != 1 {
            return false;
        }
        self.vertices_of(a).iter().all(|&v| !self.punctured[v] && self.valence_in(v, a) == 2)
    }

    /// Quasi efficient cycles in G(A) up to rotation and reversal. A cycle
    /// is the sequence of departing half-edges. No half-edge is used twice
    /// in the same direction.
    pub fn quasi_efficient_cycles(&self, a: &EdgeSet, cap: usize) -> Result<Vec<Vec<usize>>> {
        let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut steps = 0usize;
        let starts: Vec<usize> = a.iter().flat_map(|&e| self.edges[e]).collect();
        for &s in &starts {
            let mut path = vec![s];
            let mut used = BTreeSet::from([s]);
            self.qe_dfs(a, s, &mut path, &mut used, &mut found, &mut steps, cap)?;
        }
        Ok(found.into_iter().collect())
    }

    #[allow(clippy::too_many_arguments)]
    fn qe_dfs(
        &self,
        a: &EdgeSet,
        s: usize,
        path: &mut Vec<usize>,
        used: &mut BTreeSet<usize>,
        found: &mut BTreeSet<Vec<usize>>,
        steps: &mut usize,
        cap: usize,
    ) -> Result<()> {
        *steps += 1;
        if *steps > cap || found.len() > cap {
            return Err(Error::Cap(format!("quasi efficient cycle search exceeded {cap}")));
        }
        let last = *path.last().unwrap();
        let arr = self.pair[last];
        let w = self.vert_of[arr];
        for &x in &self.verts[w] {
            if !a.contains(&self.edge_of[x]) || (x == arr && !self.punctured[w]) {
                continue;
            }
            if x == s {
                found.insert(self.canonical_walk(path));
            } else if x > s && !used.contains(&x) {
                path.push(x);
                used.insert(x);
                self.qe_dfs(a, s, path, used, found, steps, cap)?;
                used.remove(&x);
                path.pop();
            }
        }
        Ok(())
    }

    /// Minimal rotation of the walk or of its reversal.
    pub fn canonical_walk(&self, walk: &[usize]) -> Vec<usize> {
        let rev: Vec<usize> = walk.iter().rev().map(|&h| self.pair[h]).collect();
        let best = |w: &[usize]| -> Vec<usize> {
            (0..w.len()).map(|i| [&w[i..], &w[..i]].concat()).min().unwrap()
        };
        best(walk).min(best(&rev))
    }

    /// Whether a closed walk (departing half-edges) is quasi efficient.
    pub fn is_quasi_efficient(&self, walk: &[usize]) -> bool {
        if walk.is_empty() {
            return false;
        }
        (0..walk.len()).all(|i| {
            let h = walk[i];
            let nx = walk[(i + 1) % walk.len()];
            let arr = self.pair[h];
            self.vert_of[nx] == self.vert_of[arr] && (nx != arr || self.punctured[self.vert_of[arr]])
        })
    }

    fn bfs_code(&self, start: usize, colors: &[u64]) -> (Vec<u64>, Vec<usize>) {
        let n = self.n_half();
        let mut label = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        label[start] = 0;
        order.push(start);
        let mut i = 0;
        while i < order.len() {
            let h = order[i];
            i += 1;
            for nb in [self.pair[h], self.rot[h]] {
                if label[nb] == usize::MAX {
                    label[nb] = order.len();
                    order.push(nb);
                }
            }
        }
        let mut code = Vec::with_capacity(4 * n);
        for &h in &order {
            code.push(label[self.rot[h]] as u64);
            code.push(label[self.pair[h]] as u64);
            code.push(self.punctured[self.vert_of[h]] as u64);
            code.push(colors[h]);
        }
        (code, label)
    }

    pub fn canonical_form(&self) -> Result<CanonicalForm> {
        self.canonical_form_colored(&vec![0; self.n_half()])
    }

    /// Canonical labelling preserving an extra colour per half-edge. The
    /// automorphism count is the number of starts achieving the minimum.
    pub fn canonical_form_colored(&self, colors: &[u64]) -> Result<CanonicalForm> {
        if !self.is_connected() {
            return pre("canonical_form needs a connected fatgraph");
        }
        let mut best: Option<(Vec<u64>, Vec<usize>)> = None;
        let mut aut = 0;
        for s in 0..self.n_half() {
            let (code, label) = self.bfs_code(s, colors);
            match &best {
                Some((b, _)) if code > *b => {}
                Some((b, _)) if code == *b => aut += 1,
                _ => {
                    best = Some((code, label));
                    aut = 1;
                }
            }
        }
        let (code, labeling) = best.expect("non-empty graph");
        Ok(CanonicalForm { code, aut, labeling })
    }

    /// All labellings achieving the canonical code (one per automorphism).
    pub fn canonical_labelings(&self, colors: &[u64]) -> Result<Vec<Vec<usize>>> {
        let cf = self.canonical_form_colored(colors)?;
        Ok((0..self.n_half())
            .filter_map(|s| {
                let (code, label) = self.bfs_code(s, colors);
                (code == cf.code).then_some(label)
            })
            .collect())
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "graph {name} {{");
        for v in 0..self.n_verts() {
            let style = if self.punctured[v] { "shape=doublecircle,style=filled,fillcolor=gray80" } else { "shape=circle" };
            let _ = writeln!(s, "  v{v} [label=\"{}{v}\",{style}];", if self.punctured[v] { "*" } else { "" });
        }
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            let _ = writeln!(
                s,
                "  v{} -- v{} [label=\"e{e}\",taillabel=\"{a}\",headlabel=\"{b}\"];",
                self.vert_of[a], self.vert_of[b]
            );
        }
        s.push_str("}\n");
        s
    }
}

/// Small named graphs used in tests, docs and the CLI.
pub mod examples {
    use super::Fatgraph;

    /// Two trivalent vertices, three edges, embedded in the sphere.
    pub fn planar_theta() -> Fatgraph {
        Fatgraph::new(vec![[0, 1], [2, 3], [4, 5]], vec![vec![0, 2, 4], vec![1, 5, 3]], &[]).unwrap()
    }

    /// Theta graph with aligned rotations: a once-punctured torus.
    pub fn torus_theta() -> Fatgraph {
        Fatgraph::new(vec![[0, 1], [2, 3], [4, 5]], vec![vec![0, 2, 4], vec![1, 3, 5]], &[]).unwrap()
    }

    /// One four-valent vertex with two interleaved loops.
    pub fn torus_eight() -> Fatgraph {
        Fatgraph::new(vec![[0, 2], [1, 3]], vec![vec![0, 1, 2, 3]], &[]).unwrap()
    }

    /// One four-valent vertex with two nested-free loops: three faces.
    pub fn planar_eight() -> Fatgraph {
        Fatgraph::new(vec![[0, 1], [2, 3]], vec![vec![0, 1, 2, 3]], &[]).unwrap()
    }

    /// Single loop at a punctured vertex.
    pub fn punctured_loop() -> Fatgraph {
        Fatgraph::new(vec![[0, 1]], vec![vec![0, 1]], &[0]).unwrap()
    }

    /// Two loops joined by a bar.
    pub fn dumbbell() -> Fatgraph {
        Fatgraph::new(vec![[0, 1], [2, 3], [4, 5]], vec![vec![0, 1, 2], vec![3, 4, 5]], &[]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::examples::*;
    use super::*;

    #[test]
    fn theta_faces_both_orientations() {
        assert_eq!(planar_theta().boundary_cycles().len(), 3);
        assert_eq!(torus_theta().boundary_cycles().len(), 1);
        // hand trace for the planar theta: 0 -> rot[1] = 5 -> rot[4] = 0
        assert!(planar_theta().boundary_cycles().contains(&vec![0, 5]));
    }

    #[test]
    fn punctured_loop_has_two_faces() {
        let g = punctured_loop();
        assert_eq!(g.boundary_cycles().len(), 2);
        assert_eq!(g.euler_characteristic(), -1);
        assert_eq!(g.surface_type().unwrap(), SurfaceType::new(0, 3));
    }

    #[test]
    fn unsupported_surface_detected() {
        let g = Fatgraph::new(vec![[0, 1]], vec![vec![0], vec![1]], &[1]).unwrap();
        let st = g.surface_type().unwrap();
        assert!(!st.is_supported());
    }

    #[test]
    fn surface_types() {
        assert_eq!(planar_theta().surface_type().unwrap(), SurfaceType::new(0, 3));
        assert_eq!(torus_theta().surface_type().unwrap(), SurfaceType::new(1, 1));
        assert_eq!(torus_eight().surface_type().unwrap(), SurfaceType::new(1, 1));
        assert_eq!(dumbbell().surface_type().unwrap(), SurfaceType::new(0, 3));
    }

    #[test]
    fn collapse_keeps_faces() {
        let g = planar_theta();
        for e in 0..3 {
            let c = g.collapse_edge(e).unwrap();
            assert_eq!(c.n_verts(), 1);
            assert_eq!(c.boundary_cycles().len(), 3);
            assert_eq!(c.surface_type().unwrap(), g.surface_type().unwrap());
        }
        assert!(torus_eight().collapse_edge(0).is_err());
    }

    #[test]
    fn collapse_into_punctured_vertex() {
        let g = Fatgraph::new(vec![[0, 1], [2, 3]], vec![vec![0, 1, 2], vec![3]], &[1]).unwrap();
        let c = g.collapse_edge(1).unwrap();
        assert_eq!(c.n_verts(), 1);
        assert!(c.is_punctured(0));
        let two = Fatgraph::new(vec![[0, 1]], vec![vec![0], vec![1]], &[0, 1]).unwrap();
        assert!(two.collapse_edge(0).is_err());
    }

    #[test]
    fn automorphism_counts() {
        assert_eq!(torus_theta().canonical_form().unwrap().aut, 6);
        assert_eq!(torus_eight().canonical_form().unwrap().aut, 4);
        assert_eq!(planar_theta().canonical_form().unwrap().aut, 6);
    }

    #[test]
    fn qe_cycles_basic() {
        let g = planar_theta();
        let cyc = g.quasi_efficient_cycles(&g.all_edges(), 10_000).unwrap();
        for e in 0..3 {
            assert!(cyc.iter().any(|c| c.iter().any(|&h| g.edge_of(h) == e)));
        }
        assert!(cyc.iter().all(|c| g.is_quasi_efficient(c)));
        let l = torus_eight();
        let one: EdgeSet = [0].into();
        assert_eq!(l.quasi_efficient_cycles(&one, 100).unwrap(), vec![vec![0]]);
        let t = Fatgraph::new(vec![[0, 1]], vec![vec![0], vec![1]], &[]).unwrap();
        assert!(t.quasi_efficient_cycles(&t.all_edges(), 100).unwrap().is_empty());
    }

    #[test]
    fn simple_cycles() {
        let tri = Fatgraph::new(
            vec![[0, 1], [2, 3], [4, 5]],
            vec![vec![0, 5], vec![1, 2], vec![3, 4]],
            &[],
        )
        .unwrap();
        assert!(tri.is_simple_cycle(&tri.all_edges()));
        let tri_p = Fatgraph::new(tri.edges().to_vec(), tri.vertices().to_vec(), &[1]).unwrap();
        assert!(!tri_p.is_simple_cycle(&tri_p.all_edges()));
        assert!(!planar_theta().is_simple_cycle(&planar_theta().all_edges()));
    }

    #[test]
    fn json_round_trip() {
        let g = dumbbell();
        let s = serde_json::to_string(&g.to_json()).unwrap();
        let back: FatgraphJson = serde_json::from_str(&s).unwrap();
        assert_eq!(Fatgraph::from_json(&back).unwrap(), g);
        assert!(g.to_dot("g").contains("v0 -- v0"));
    }

    #[test]
    fn malformed_rejected() {
        assert!(Fatgraph::new(vec![[0, 0]], vec![vec![0]], &[]).is_err());
        assert!(Fatgraph::new(vec![[0, 1]], vec![vec![0]], &[]).is_err());
        assert!(Fatgraph::new(vec![[0, 1]], vec![vec![0, 1]], &[3]).is_err());
    }
}
