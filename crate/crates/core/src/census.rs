//! Enumeration of fatgraphs and of cells of the space of punctured
//! fatgraphs with partial pairing, cellular boundary maps and rational
//! homology.

use crate::error::{invariant, pre, Error, Result};
use crate::fatgraph::{EdgeSet, Fatgraph, FatgraphJson, SurfaceType};
use crate::orient::orientation_from_pairing;
use crate::pairing::{project_pi_traced, PairedFatgraph, Slot, SlotRef};
use crate::rational::{q, qi, Q};
use crate::screens::{is_quasi_recurrent, FilteredScreen, ScreenPoint};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumOptions {
    /// Allow punctured vertices (q.c.d. duals); otherwise every vertex is
    /// unpunctured of valence at least three.
    pub punctured: bool,
    /// Keep only graphs all of whose unpunctured vertices have this valence.
    pub valence: Option<usize>,
    pub max_half_edges: usize,
    /// Upper bound on raw rotation systems examined.
    pub work_cap: usize,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions { punctured: false, valence: None, max_half_edges: 12, work_cap: 5_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FatgraphClass {
    pub graph: Fatgraph,
    /// Orientation preserving automorphisms, punctured marks respected.
    pub aut: usize,
}

impl FatgraphClass {
    pub fn valences(&self) -> Vec<usize> {
        let g = &self.graph;
        let mut v: Vec<usize> = (0..g.n_verts()).filter(|&v| !g.is_punctured(v)).map(|v| g.valence(v)).collect();
        v.sort_unstable();
        v
    }
}

/// Nonincreasing sequences of `len` parts, each at least `min`, summing to `total`.
fn partitions(total: usize, len: usize, min: usize, max: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>) {
    if cur.len() == len {
        if total == 0 {
            out.push(cur.clone());
        }
        return;
    }
    let left = len - cur.len();
    for p in (min..=max.min(total)).rev() {
        if total - p < (left - 1) * min {
            continue;
        }
        cur.push(p);
        partitions(total - p, len, min, p, out, cur);
        cur.pop();
    }
}

fn for_matchings(n: usize, visit: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
    fn rec(pair: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
        let Some(a) = pair.iter().position(|&x| x == usize::MAX) else {
            return visit(pair);
        };
        for b in a + 1..pair.len() {
            if pair[b] == usize::MAX {
                pair[a] = b;
                pair[b] = a;
                rec(pair, visit)?;
                pair[a] = usize::MAX;
                pair[b] = usize::MAX;
            }
        }
        Ok(())
    }
    rec(&mut vec![usize::MAX; n], visit)
}

/// Isomorphism classes of connected fatgraphs of type (g, s).
pub fn enumerate_fatgraphs(genus: usize, s: usize, opts: &EnumOptions) -> Result<Vec<FatgraphClass>> {
    let st = SurfaceType::new(genus, s);
    if !st.is_supported() {
        return pre("need 2 - 2g - s < 0 and s > 0");
    }
    let chi = -st.euler as usize;
    let mut seen: BTreeMap<Vec<u64>, FatgraphClass> = BTreeMap::new();
    let mut work = 0usize;
    let max_p = if opts.punctured { s - 1 } else { 0 };
    for np in 0..=max_p {
        // E = V_u + chi, 2E = sum of valences
        for nu in 0.. {
            let e = nu + chi;
            if 2 * e > opts.max_half_edges {
                break;
            }
            if 2 * e < 3 * nu + np {
                continue;
            }
            let mut us = vec![];
            match opts.valence {
                Some(k) => {
                    if nu * k <= 2 * e {
                        us.push(vec![k; nu]);
                    }
                }
                None => {
                    for tot in 3 * nu..=2 * e - np {
                        partitions(tot, nu, 3, tot, &mut us, &mut vec![]);
                    }
                }
            }
            for u in us {
                let rest = 2 * e - u.iter().sum::<usize>();
                let mut ps = vec![];
                if np == 0 {
                    if rest == 0 {
                        ps.push(vec![]);
                    }
                } else {
                    partitions(rest, np, 1, rest, &mut ps, &mut vec![]);
                }
                for p in ps {
                    let vals: Vec<usize> = u.iter().chain(&p).copied().collect();
                    let mut rot = vec![0; 2 * e];
                    let mut start = 0;
                    let mut firsts = vec![];
                    for &k in &vals {
                        firsts.push(start);
                        for i in 0..k {
                            rot[start + i] = start + (i + 1) % k;
                        }
                        start += k;
                    }
                    let punct_first: BTreeSet<usize> = firsts[nu..].iter().copied().collect();
                    for_matchings(2 * e, &mut |pair| {
                        work += 1;
                        if work > opts.work_cap {
                            return Err(Error::Cap(format!("more than {} rotation systems", opts.work_cap)));
                        }
                        let g = Fatgraph::from_permutations(pair, &rot, |c| c.iter().any(|h| punct_first.contains(h)))?;
                        if !g.is_connected() || g.surface_type()? != st {
                            return Ok(());
                        }
                        let cf = g.canonical_form()?;
                        seen.entry(cf.code).or_insert(FatgraphClass { graph: g, aut: cf.aut });
                        Ok(())
                    })?;
                }
            }
        }
    }
    Ok(seen.into_values().collect())
}

/// Σ (−1)^V / |Aut| over ribbon graphs of type (g, s) with unlabelled
/// boundary cycles. Multiply by s! for labelled punctures.
pub fn orbifold_euler(genus: usize, s: usize) -> Result<Q> {
    Ok(euler_terms(genus, s)?.into_iter().map(|(_, t)| t).fold(Q::zero(), |a, b| a + b))
}

/// Per class: (dimension E − 1 of the cell in decorated Teichmüller space
/// mod the mapping class group, signed contribution). The sign is
/// (−1)^(dim − s + 1): the cell is a product of the moduli cell with an
/// open (s − 1)-simplex of decorations.
pub fn euler_terms(genus: usize, s: usize) -> Result<Vec<(usize, Q)>> {
    let cls = enumerate_fatgraphs(genus, s, &EnumOptions { max_half_edges: 2 * (6 * genus + 3 * s - 6), ..Default::default() })?;
    Ok(cls
        .iter()
        .map(|c| {
            let dim = c.graph.n_edges() - 1;
            let sign = if (dim + s - 1).is_multiple_of(2) { 1 } else { -1 };
            (dim, q(sign, c.aut as i64))
        })
        .collect())
}

/// Bernoulli numbers B_0..B_n (B_1 = −1/2).
pub fn bernoulli(n: usize) -> Vec<Q> {
    let mut b = vec![Q::one()];
    for m in 1..=n {
        let mut acc = Q::zero();
        let mut binom = Q::one();
        for k in 0..m {
            // binom = C(m+1, k)
            acc += &binom * &b[k];
            binom = binom * qi((m + 1 - k) as i64) / qi((k + 1) as i64);
        }
        b.push(-acc / qi((m + 1) as i64));
    }
    b
}

/// Orbifold Euler characteristic of M_{g,s} with labelled punctures:
/// ζ(1 − 2g) for one puncture, χ(M_{0,3}) = 1, and the forgetful
/// recursion χ(M_{g,s+1}) = (2 − 2g − s) χ(M_{g,s}).
pub fn harer_zagier(genus: usize, s: usize) -> Result<Q> {
    if 2 * genus + s < 3 || s == 0 {
        return pre("unstable type");
    }
    let (mut x, mut k) = if genus == 0 {
        (Q::one(), 3)
    } else {
        let b = bernoulli(2 * genus);
        (-b[2 * genus].clone() / qi(2 * genus as i64), 1)
    };
    while k < s {
        x *= qi(2 - 2 * genus as i64 - k as i64);
        k += 1;
    }
    Ok(x)
}

/// Graphs with exactly m_i vertices of valence 2i + 3 and no others.
pub fn combinatorial_class_filter(cells: &[FatgraphClass], genus: usize, s: usize, m: &[usize]) -> Result<Vec<FatgraphClass>> {
    let lhs: usize = m.iter().enumerate().map(|(i, &mi)| (2 * i + 1) * mi).sum();
    let rhs = 4 * genus as i64 - 4 + 2 * s as i64;
    if lhs as i64 != rhs {
        return Err(Error::Validation(format!("Σ(2i+1)m_i = {lhs}, expected {rhs}")));
    }
    let mut want: Vec<usize> = m.iter().enumerate().flat_map(|(i, &mi)| std::iter::repeat_n(2 * i + 3, mi)).collect();
    want.sort_unstable();
    Ok(cells.iter().filter(|c| c.graph.punctured_vertices().is_empty() && c.valences() == want).cloned().collect())
}

/// A cell: components, nodal pairing, and puncture labels on the
/// unpaired slots. Labels are all zero when punctures are unlabelled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PgCell {
    pub components: Vec<Fatgraph>,
    pub pairs: Vec<[SlotRef; 2]>,
    pub labels: BTreeMap<SlotRef, usize>,
}

pub type CellKey = (Vec<Vec<u64>>, Vec<[(usize, u8, usize); 2]>);

/// Coordinates of one cell in terms of another: `pos[c]` is the factor of
/// component c, `edge[c][e]` the vertex of edge e in that factor.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Iso {
    pos: Vec<usize>,
    edge: Vec<Vec<usize>>,
}

struct Canon {
    key: CellKey,
    rep: PgCell,
    isos: Vec<Iso>,
}

impl PgCell {
    pub fn dim(&self) -> usize {
        self.components.iter().map(|g| g.n_edges() - 1).sum()
    }

    pub fn to_paired(&self) -> Result<PairedFatgraph> {
        let w = self.components.iter().map(|g| vec![Q::one(); g.n_edges()]).collect();
        let t = self.components.iter().map(|g| (0..g.n_edges()).map(|e| e.to_string()).collect()).collect();
        PairedFatgraph::new(self.components.clone(), self.pairs.clone(), w, t)
    }

    fn colors(&self, c: usize) -> Vec<u64> {
        let g = &self.components[c];
        let fi = g.face_index();
        (0..g.n_half())
            .map(|h| {
                let fl = self.labels.get(&SlotRef { comp: c, slot: Slot::Boundary(fi[h]) }).map_or(0, |l| l + 1);
                let vl = self.labels.get(&SlotRef { comp: c, slot: Slot::Puncture(g.vertex_of(h)) }).map_or(0, |l| l + 1);
                (fl * 1024 + vl) as u64
            })
            .collect()
    }

    fn canon(&self) -> Result<Canon> {
        let n = self.components.len();
        let mut codes = Vec::new();
        let mut labs = Vec::new();
        for c in 0..n {
            let col = self.colors(c);
            codes.push(self.components[c].canonical_form_colored(&col)?.code);
            labs.push(self.components[c].canonical_labelings(&col)?);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| codes[a].cmp(&codes[b]));
        let mut best: Option<Vec<[(usize, u8, usize); 2]>> = None;
        let mut winners: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut count = 0usize;
        self.search(&codes, &labs, &order, &mut vec![], &mut best, &mut winners, &mut count)?;
        let key = (order.iter().map(|&c| codes[c].clone()).collect(), best.unwrap_or_default());
        // rep from the first winner
        let w0 = &winners[0];
        let mut comps = vec![None; n];
        let mut slot_to = BTreeMap::new();
        for (i, &(c, l)) in w0.iter().enumerate() {
            let g = &self.components[c];
            let lab = &labs[c][l];
            let (rg, smap) = relabeled(g, lab)?;
            for (s, t) in smap {
                slot_to.insert(SlotRef { comp: c, slot: s }, SlotRef { comp: i, slot: t });
            }
            comps[i] = Some(rg);
        }
        let rep = PgCell {
            components: comps.into_iter().map(|x| x.unwrap()).collect(),
            pairs: self.pairs.iter().map(|p| p.map(|s| slot_to[&s])).collect(),
            labels: self.labels.iter().map(|(s, &l)| (slot_to[s], l)).collect(),
        };
        let isos = winners
            .iter()
            .map(|w| {
                let mut pos = vec![0; n];
                let mut edge = vec![vec![]; n];
                for (i, &(c, l)) in w.iter().enumerate() {
                    pos[c] = i;
                    edge[c] = edge_ranks(&self.components[c], &labs[c][l]);
                }
                Iso { pos, edge }
            })
            .collect();
        Ok(Canon { key, rep, isos })
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        codes: &[Vec<u64>],
        labs: &[Vec<Vec<usize>>],
        order: &[usize],
        choice: &mut Vec<(usize, usize)>,
        best: &mut Option<Vec<[(usize, u8, usize); 2]>>,
        winners: &mut Vec<Vec<(usize, usize)>>,
        count: &mut usize,
    ) -> Result<()> {
        *count += 1;
        if *count > 200_000 {
            return Err(Error::Cap("cell canonical form search too large".into()));
        }
        let k = choice.len();
        if k == order.len() {
            let pos: BTreeMap<usize, (usize, usize)> = choice.iter().enumerate().map(|(i, &(c, l))| (c, (i, l))).collect();
            let mut list: Vec<[(usize, u8, usize); 2]> = self
                .pairs
                .iter()
                .map(|pr| {
                    let mut x = pr.map(|s| {
                        let (i, l) = pos[&s.comp];
                        let (kind, id) = slot_name(&self.components[s.comp], &labs[s.comp][l], s.slot);
                        (i, kind, id)
                    });
                    x.sort();
                    x
                })
                .collect();
            list.sort();
            match best {
                Some(b) if list > *b => {}
                Some(b) if list == *b => winners.push(choice.clone()),
                _ => {
                    *best = Some(list);
                    winners.clear();
                    winners.push(choice.clone());
                }
            }
            return Ok(());
        }
        let code = &codes[order[k]];
        let used: BTreeSet<usize> = choice.iter().map(|x| x.0).collect();
        let cands: Vec<usize> = order.iter().copied().filter(|c| !used.contains(c) && codes[*c] == *code).collect();
        for c in cands {
            for l in 0..labs[c].len() {
                choice.push((c, l));
                self.search(codes, labs, order, choice, best, winners, count)?;
                choice.pop();
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> PgCellJson {
        PgCellJson {
            components: self.components.iter().map(|g| g.to_json()).collect(),
            pairs: self.pairs.clone(),
            labels: self.labels.iter().map(|(s, &l)| (*s, l)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PgCellJson {
    pub components: Vec<FatgraphJson>,
    pub pairs: Vec<[SlotRef; 2]>,
    pub labels: Vec<(SlotRef, usize)>,
}

fn slot_name(g: &Fatgraph, lab: &[usize], s: Slot) -> (u8, usize) {
    match s {
        Slot::Puncture(v) => (0, g.vertex(v).iter().map(|&h| lab[h]).min().unwrap()),
        Slot::Boundary(b) => (1, g.boundary_cycles()[b].iter().map(|&h| lab[h]).min().unwrap()),
    }
}

/// Rank of each edge by its smaller relabelled half-edge.
fn edge_ranks(g: &Fatgraph, lab: &[usize]) -> Vec<usize> {
    let mins: Vec<usize> = (0..g.n_edges()).map(|e| lab[g.edge(e)[0]].min(lab[g.edge(e)[1]])).collect();
    let mut sorted = mins.clone();
    sorted.sort_unstable();
    mins.iter().map(|m| sorted.binary_search(m).unwrap()).collect()
}

/// The graph under a relabelling, built with edges ordered by smaller
/// half-edge; also the image of every slot.
fn relabeled(g: &Fatgraph, lab: &[usize]) -> Result<(Fatgraph, Vec<(Slot, Slot)>)> {
    let n = g.n_half();
    let mut inv = vec![0; n];
    for h in 0..n {
        inv[lab[h]] = h;
    }
    let pair: Vec<usize> = (0..n).map(|x| lab[g.pair(inv[x])]).collect();
    let rot: Vec<usize> = (0..n).map(|x| lab[g.rot(inv[x])]).collect();
    let out = Fatgraph::from_permutations(&pair, &rot, |c| g.is_punctured(g.vertex_of(inv[c[0]])))?;
    let fi = out.face_index();
    let mut slots = Vec::new();
    for v in g.punctured_vertices() {
        slots.push((Slot::Puncture(v), Slot::Puncture(out.vertex_of(lab[g.vertex(v)[0]]))));
    }
    for (b, c) in g.boundary_cycles().iter().enumerate() {
        slots.push((Slot::Boundary(b), Slot::Boundary(fi[lab[c[0]]])));
    }
    Ok((out, slots))
}

fn perm_sign(xs: &[usize]) -> i64 {
    let mut s = 1;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            if xs[i] > xs[j] {
                s = -s;
            }
        }
    }
    s
}

/// Degree of an affine identification of products of simplices. Each
/// source factor lists, in its vertex order, the (factor, vertex) images
/// in the target. `None` when the map is not a bijection of vertices.
fn product_sign(src: &[Vec<(usize, usize)>], tgt_sizes: &[usize]) -> Option<i64> {
    let mut hit = vec![false; tgt_sizes.len()];
    let mut tgt_of = Vec::new();
    let mut sign = 1;
    for f in src {
        let t = f.first()?.0;
        if f.iter().any(|x| x.0 != t) || hit[t] || tgt_sizes[t] != f.len() {
            return None;
        }
        hit[t] = true;
        let vs: Vec<usize> = f.iter().map(|x| x.1).collect();
        let set: BTreeSet<usize> = vs.iter().copied().collect();
        if set.len() != vs.len() {
            return None;
        }
        sign *= perm_sign(&vs);
        tgt_of.push((t, f.len() - 1));
    }
    if (0..tgt_sizes.len()).any(|t| !hit[t] && tgt_sizes[t] != 1) {
        return None;
    }
    for i in 0..tgt_of.len() {
        for j in i + 1..tgt_of.len() {
            if tgt_of[i].0 > tgt_of[j].0 && (tgt_of[i].1 * tgt_of[j].1) % 2 == 1 {
                sign = -sign;
            }
        }
    }
    Some(sign)
}

/// One facet degeneration: the resulting cell and where each surviving
/// coordinate (component, edge) of the source goes.
struct Degeneration {
    cell: PgCell,
    coords: BTreeMap<(usize, usize), (usize, usize)>,
}

/// How a face of a cell is reached inside one component.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Vanish {
    /// Contract a non-loop edge whose ends are not both punctured.
    Collapse(usize),
    /// Send a quasi recurrent proper subset to zero at a common rate; the
    /// ratios survive on the deep components.
    Level(EdgeSet),
}

impl Vanish {
    fn edges(&self) -> EdgeSet {
        match self {
            Vanish::Collapse(e) => [*e].into(),
            Vanish::Level(k) => k.clone(),
        }
    }
}

fn degenerate(cell: &PgCell, j: usize, how: &Vanish) -> Result<Degeneration> {
    let g = &cell.components[j];
    let mut coords = BTreeMap::new();
    let n = cell.components.len();
    let slot_img: BTreeMap<Slot, SlotRef>;
    let mut components: Vec<Fatgraph> = Vec::new();
    let mut new_pairs = Vec::new();
    let comp_shift = |c: usize| if c < j { c } else { c - 1 };
    for (c, gc) in cell.components.iter().enumerate() {
        if c != j {
            components.push(gc.clone());
            for k in 0..gc.n_edges() {
                coords.insert((c, k), (comp_shift(c), k));
            }
        }
    }
    let base = n - 1;
    if let Vanish::Collapse(e) = *how {
        let (a, b) = g.endpoints(e);
        let (ng, hmap) = g.collapse_edge_mapped(e)?;
        let mut img = BTreeMap::new();
        let [h0, h1] = g.edge(e);
        let off = |h: usize| h != h0 && h != h1;
        for v in g.punctured_vertices() {
            let h = if g.vertex(v).iter().any(|&h| off(h)) {
                *g.vertex(v).iter().find(|&&h| off(h)).unwrap()
            } else {
                // univalent on e: the puncture moves to the other end
                let w = if v == a { b } else { a };
                *g.vertex(w).iter().find(|&&h| off(h)).ok_or_else(|| Error::Invariant("collapse of a lone edge".into()))?
            };
            img.insert(Slot::Puncture(v), SlotRef { comp: base, slot: Slot::Puncture(ng.vertex_of(hmap[h].unwrap())) });
        }
        let fi = ng.face_index();
        for (bi, cyc) in g.boundary_cycles().iter().enumerate() {
            let h = *cyc.iter().find(|&&h| off(h)).ok_or_else(|| Error::Invariant("face made of one edge".into()))?;
            img.insert(Slot::Boundary(bi), SlotRef { comp: base, slot: Slot::Boundary(fi[hmap[h].unwrap()]) });
        }
        for k in 0..g.n_edges() {
            if k != e {
                coords.insert((j, k), (base, k - usize::from(k > e)));
            }
        }
        components.push(ng);
        slot_img = img;
    } else {
        let deep = how.edges();
        let rest: EdgeSet = g.all_edges().difference(&deep).copied().collect();
        let fs = FilteredScreen::new(g.clone(), vec![rest, deep])?;
        let pt = ScreenPoint::from_raw(fs, &vec![Q::one(); g.n_edges()])?;
        let (p, tr) = project_pi_traced(&pt)?;
        for (c2, ms) in tr.members.iter().enumerate() {
            for (k2, m) in ms.iter().enumerate() {
                for &k in m {
                    coords.insert((j, k), (base + c2, k2));
                }
            }
        }
        for pr in &p.pairs {
            new_pairs.push(pr.map(|s| SlotRef { comp: base + s.comp, slot: s.slot }));
        }
        slot_img = tr.slot_map.iter().map(|(s, t)| (*s, SlotRef { comp: base + t.comp, slot: t.slot })).collect();
        components.extend(p.components);
    }
    let remap = |s: &SlotRef| -> SlotRef {
        if s.comp == j {
            slot_img[&s.slot]
        } else {
            SlotRef { comp: comp_shift(s.comp), slot: s.slot }
        }
    };
    let mut pairs: Vec<[SlotRef; 2]> = cell.pairs.iter().map(|p| p.map(|s| remap(&s))).collect();
    pairs.extend(new_pairs);
    let labels = cell.labels.iter().map(|(s, &l)| (remap(s), l)).collect();
    Ok(Degeneration { cell: PgCell { components, pairs, labels }, coords })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellInfo {
    pub rep: PgCell,
    pub dim: usize,
    /// Automorphisms of the labelled cell.
    pub aut: usize,
    /// No automorphism reverses the product orientation.
    pub orientable: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CellComplex {
    pub cells: Vec<Vec<CellInfo>>,
    /// `boundary[k][(i, j)]`: incidence of cell i of dimension k − 1 in
    /// the boundary of cell j of dimension k.
    pub boundary: Vec<BTreeMap<(usize, usize), i64>>,
    /// Every (face dim, face, cell dim, cell) reached by one vanishing edge.
    pub faces: BTreeSet<(usize, usize, usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssembleOptions {
    /// Forget which puncture is which.
    pub quotient: bool,
    pub max_cells: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions { quotient: false, max_cells: 20_000 }
    }
}

fn orientation_signs(c: &Canon) -> Vec<i64> {
    // the rep is the image of the first iso; compose to get automorphisms
    let first = &c.isos[0];
    c.isos
        .iter()
        .map(|iso| {
            let n = first.pos.len();
            let mut src = vec![vec![]; n];
            for comp in 0..n {
                let mut items = vec![(0, 0); first.edge[comp].len()];
                for (e, &r) in first.edge[comp].iter().enumerate() {
                    items[r] = (iso.pos[comp], iso.edge[comp][e]);
                }
                src[first.pos[comp]] = items;
            }
            let sizes: Vec<usize> = (0..n).map(|i| src[i].len()).collect();
            product_sign(&src, &sizes).expect("automorphisms are bijections")
        })
        .collect()
}

/// The cells of 𝒫𝒢(F) for F of type (g, s): closure of the top cells
/// under vanishing of one edge at a time, with cellular boundary maps
/// from the product-of-simplices orientations.
pub fn assemble_pg_complex(genus: usize, s: usize, opts: AssembleOptions) -> Result<CellComplex> {
    let st = SurfaceType::new(genus, s);
    let tops = enumerate_fatgraphs(genus, s, &EnumOptions { valence: Some(3), max_half_edges: 2 * (6 * genus + 3 * s - 6), ..Default::default() })?;
    let mut index: HashMap<CellKey, (usize, usize)> = HashMap::new();
    let mut cx = CellComplex::default();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    let add = |canon: Canon, index: &mut HashMap<CellKey, (usize, usize)>, cx: &mut CellComplex, queue: &mut VecDeque<(usize, usize)>| -> Result<(usize, usize)> {
        if let Some(&at) = index.get(&canon.key) {
            return Ok(at);
        }
        let total: usize = cx.cells.iter().map(|c| c.len()).sum();
        if total >= opts.max_cells {
            return Err(Error::Cap(format!("more than {} cells", opts.max_cells)));
        }
        let p = canon.rep.to_paired()?;
        let d = p.support_diagnostics(st);
        invariant(d.ok(), || format!("cell not supported by the surface: {:?}", d.problems))?;
        let (o, _) = orientation_from_pairing(&p)?;
        invariant(o.is_realizable(), || "cell with a non-realizable orientation".into())?;
        let dim = canon.rep.dim();
        while cx.cells.len() <= dim {
            cx.cells.push(vec![]);
            cx.boundary.push(BTreeMap::new());
        }
        let signs = orientation_signs(&canon);
        let at = (dim, cx.cells[dim].len());
        cx.cells[dim].push(CellInfo { rep: canon.rep, dim, aut: canon.isos.len(), orientable: signs.iter().all(|&x| x == 1) });
        index.insert(canon.key, at);
        queue.push_back(at);
        Ok(at)
    };
    let labels_of = |perm: &[usize]| -> BTreeMap<SlotRef, usize> {
        perm.iter().enumerate().map(|(b, &l)| (SlotRef { comp: 0, slot: Slot::Boundary(b) }, if opts.quotient { 0 } else { l })).collect()
    };
    for t in &tops {
        let mut perm: Vec<usize> = (0..s).collect();
        loop {
            let cell = PgCell { components: vec![t.graph.clone()], pairs: vec![], labels: labels_of(&perm) };
            add(cell.canon()?, &mut index, &mut cx, &mut queue)?;
            if opts.quotient || !next_permutation(&mut perm) {
                break;
            }
        }
    }
    while let Some((dim, i)) = queue.pop_front() {
        let sigma = cx.cells[dim][i].rep.clone();
        let sigma_ok = cx.cells[dim][i].orientable;
        let sizes: Vec<usize> = sigma.components.iter().map(|g| g.n_edges()).collect();
        let mut offset = 0;
        for j in 0..sigma.components.len() {
            for how in facet_moves(&sigma.components[j]) {
                let deg = degenerate(&sigma, j, &how)?;
                let canon = deg.cell.canon()?;
                let iso = canon.isos[0].clone();
                let tgt_sizes: Vec<usize> = canon.rep.components.iter().map(|g| g.n_edges()).collect();
                let (tdim, ti) = add(canon, &mut index, &mut cx, &mut queue)?;
                cx.faces.insert((tdim, ti, dim, i));
                if tdim + 1 != dim || !sigma_ok || !cx.cells[tdim][ti].orientable {
                    continue;
                }
                let k = how.edges();
                let img = |c: usize, e: usize| {
                    let (c2, k2) = deg.coords[&(c, e)];
                    (iso.pos[c2], iso.edge[c2][k2])
                };
                let mut src: Vec<Vec<(usize, usize)>> = Vec::new();
                for c in 0..sizes.len() {
                    if c != j {
                        src.push((0..sizes[c]).map(|e| img(c, e)).collect());
                        continue;
                    }
                    src.push((0..sizes[c]).filter(|e| !k.contains(e)).map(|e| img(c, e)).collect());
                    // a vanishing simple cycle leaves a puncture and no factor
                    if matches!(how, Vanish::Level(_)) && k.iter().any(|e| deg.coords.contains_key(&(c, *e))) {
                        src.push(k.iter().map(|&e| img(c, e)).collect());
                    }
                }
                let sgn = product_sign(&src, &tgt_sizes)
                    .ok_or_else(|| Error::Invariant("codimension one face is not a bijection on coordinates".into()))?;
                // outward normal first on the face x_K = 0 of the blown up simplex
                let shuffle = (0..sizes[j]).filter(|e| !k.contains(e)).map(|e| k.iter().filter(|&&x| x < e).count()).sum::<usize>();
                let facet = if (offset + shuffle + sizes[j] - k.len()).is_multiple_of(2) { 1 } else { -1 };
                *cx.boundary[dim].entry((ti, i)).or_insert(0) += facet * sgn;
            }
            offset += sizes[j] - 1;
        }
    }
    for b in cx.boundary.iter_mut() {
        b.retain(|_, v| *v != 0);
    }
    Ok(cx)
}

/// Codimension one moves in a component: collapsible edges and proper
/// quasi recurrent edge sets.
fn facet_moves(g: &Fatgraph) -> Vec<Vanish> {
    let n = g.n_edges();
    if n < 2 {
        return vec![];
    }
    let mut out = Vec::new();
    for e in 0..n {
        let (a, b) = g.endpoints(e);
        if a != b && !(g.is_punctured(a) && g.is_punctured(b)) {
            out.push(Vanish::Collapse(e));
        }
    }
    for mask in 1u64..(1 << n) - 1 {
        let k: EdgeSet = (0..n).filter(|e| mask >> e & 1 == 1).collect();
        if is_quasi_recurrent(g, &k) {
            out.push(Vanish::Level(k));
        }
    }
    out
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

impl CellComplex {
    pub fn counts(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.len()).collect()
    }

    /// Cells entering the signed chain complex.
    pub fn orientable_counts(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.iter().filter(|x| x.orientable).count()).collect()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.orientable_counts().iter().enumerate().map(|(k, &n)| if k % 2 == 0 { n as i64 } else { -(n as i64) }).sum()
    }

    /// ∂_{k-1} ∘ ∂_k as a sparse matrix; empty when ∂² = 0.
    pub fn boundary_squared(&self, k: usize) -> BTreeMap<(usize, usize), i64> {
        let mut out = BTreeMap::new();
        if k < 2 || k >= self.boundary.len() {
            return out;
        }
        for (&(mid, top), &a) in &self.boundary[k] {
            for (&(low, m2), &b) in &self.boundary[k - 1] {
                if m2 == mid {
                    *out.entry((low, top)).or_insert(0) += a * b;
                }
            }
        }
        out.retain(|_, v| *v != 0);
        out
    }

    pub fn to_json(&self) -> CellComplexJson {
        CellComplexJson {
            counts: self.counts(),
            cells: self
                .cells
                .iter()
                .flatten()
                .map(|c| CellJson { dim: c.dim, aut: c.aut, orientable: c.orientable, cell: c.rep.to_json() })
                .collect(),
            boundary: self.boundary.iter().map(|b| b.iter().map(|(&(i, j), &v)| (i, j, v)).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellJson {
    pub dim: usize,
    pub aut: usize,
    pub orientable: bool,
    pub cell: PgCellJson,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellComplexJson {
    pub counts: Vec<usize>,
    pub cells: Vec<CellJson>,
    pub boundary: Vec<Vec<(usize, usize, i64)>>,
}

/// Rank over the rationals.
pub fn rank(rows: usize, cols: usize, m: &BTreeMap<(usize, usize), i64>) -> usize {
    let mut a = vec![vec![Q::zero(); cols]; rows];
    for (&(i, j), &v) in m {
        a[i][j] = qi(v);
    }
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let f = &a[i][c] / &a[r][c];
                for k in c..cols {
                    let t = &f * &a[r][k];
                    a[i][k] -= t;
                }
            }
        }
        r += 1;
    }
    r
}

/// Rational Betti numbers of the signed chain complex on orientable cells.
pub fn homology(cx: &CellComplex) -> Result<Vec<usize>> {
    for k in 2..cx.boundary.len() {
        let sq = cx.boundary_squared(k);
        if !sq.is_empty() {
            return Err(Error::Invariant(format!("∂∘∂ ≠ 0 in degree {k} ({} entries)", sq.len())));
        }
    }
    let n = cx.cells.len();
    // restrict to orientable cells
    let idx: Vec<BTreeMap<usize, usize>> = cx
        .cells
        .iter()
        .map(|cs| cs.iter().enumerate().filter(|(_, c)| c.orientable).enumerate().map(|(new, (old, _))| (old, new)).collect())
        .collect();
    let mut ranks = vec![0; n + 1];
    for k in 1..n {
        let m: BTreeMap<(usize, usize), i64> = cx.boundary[k]
            .iter()
            .filter_map(|(&(i, j), &v)| Some(((*idx[k - 1].get(&i)?, *idx[k].get(&j)?), v)))
            .collect();
        ranks[k] = rank(idx[k - 1].len(), idx[k].len(), &m);
    }
    Ok((0..n).map(|k| idx[k].len() - ranks[k] - ranks[k + 1]).collect())
}

/// Betti numbers with b_0 reduced by one.
pub fn reduced_homology(cx: &CellComplex) -> Result<Vec<usize>> {
    let mut b = homology(cx)?;
    if let Some(b0) = b.first_mut() {
        *b0 = b0.checked_sub(1).ok_or_else(|| Error::Invariant("empty complex".into()))?;
    }
    Ok(b)
}

/// Sign convention check helper: contributions with the sign of each
/// odd-dimensional term reversed.
pub fn flip_odd(terms: &[(usize, Q)]) -> Vec<(usize, Q)> {
    terms.iter().map(|(d, t)| (*d, if d % 2 == 1 { -t.clone() } else { t.clone() })).collect()
}

/// True when the signs of `euler_terms(_, s)` alternate with dimension.
pub fn alternating(terms: &[(usize, Q)], s: usize) -> bool {
    terms.iter().all(|(d, t)| (d + s - 1).is_multiple_of(2) == t.is_positive())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_one_census() {
        let all = enumerate_fatgraphs(1, 1, &EnumOptions::default()).unwrap();
        assert_eq!(all.len(), 2);
        let tri: Vec<_> = all.iter().filter(|c| c.valences() == vec![3, 3]).collect();
        let four: Vec<_> = all.iter().filter(|c| c.valences() == vec![4]).collect();
        assert_eq!((tri.len(), tri[0].aut), (1, 6));
        assert_eq!((four.len(), four[0].aut), (1, 4));
        assert_eq!(orbifold_euler(1, 1).unwrap(), q(-1, 12));
        assert_eq!(harer_zagier(1, 1).unwrap(), q(-1, 12));
    }

    #[test]
    fn euler_matches_oracle() {
        for (g, s) in [(0, 3), (0, 4), (1, 1), (1, 2)] {
            let fact: i64 = (1..=s as i64).product();
            assert_eq!(orbifold_euler(g, s).unwrap() * qi(fact), harer_zagier(g, s).unwrap(), "({g},{s})");
        }
        assert_eq!(harer_zagier(2, 1).unwrap(), q(1, 120));
        let b = bernoulli(6);
        assert_eq!((b[1].clone(), b[2].clone(), b[4].clone(), b[6].clone()), (q(-1, 2), q(1, 6), q(-1, 30), q(1, 42)));
    }

    #[test]
    fn zero_three_classes() {
        let top = enumerate_fatgraphs(0, 3, &EnumOptions { valence: Some(3), ..Default::default() }).unwrap();
        // theta and dumbbell
        assert_eq!(top.len(), 2);
        let mut auts: Vec<usize> = top.iter().map(|c| c.aut).collect();
        auts.sort();
        assert_eq!(auts, vec![2, 6]);
        let with_p = enumerate_fatgraphs(0, 3, &EnumOptions { punctured: true, ..Default::default() }).unwrap();
        // + eight, lollipop, loop at a puncture, edge between two punctures
        assert_eq!(with_p.len(), 6);
    }

    #[test]
    fn class_filter() {
        let all = enumerate_fatgraphs(1, 1, &EnumOptions::default()).unwrap();
        let theta = combinatorial_class_filter(&all, 1, 1, &[2]).unwrap();
        assert_eq!(theta.len(), 1);
        assert_eq!(theta[0].aut, 6);
        assert!(combinatorial_class_filter(&all, 1, 1, &[0, 1]).is_err());
        let top = combinatorial_class_filter(&enumerate_fatgraphs(0, 4, &EnumOptions::default()).unwrap(), 0, 4, &[4]).unwrap();
        assert!(top.iter().all(|c| c.graph.n_edges() == 6));
    }

    #[test]
    fn sign_convention() {
        let t = euler_terms(1, 1).unwrap();
        assert!(alternating(&t, 1));
        let f = flip_odd(&t);
        for ((d, a), (_, b)) in t.iter().zip(&f) {
            assert_eq!(*a == *b, d % 2 == 0);
        }
    }

    #[test]
    fn homology_basics() {
        let cell = |d| CellInfo {
            rep: PgCell { components: vec![], pairs: vec![], labels: BTreeMap::new() },
            dim: d,
            aut: 1,
            orientable: true,
        };
        let point = CellComplex { cells: vec![vec![cell(0)]], boundary: vec![BTreeMap::new()], faces: BTreeSet::new() };
        assert_eq!(homology(&point).unwrap(), vec![1]);
        let mut d1 = BTreeMap::new();
        for (j, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
            d1.insert((b, j), 1);
            d1.insert((a, j), -1);
        }
        let tri = CellComplex {
            cells: vec![vec![cell(0); 3], vec![cell(1); 3]],
            boundary: vec![BTreeMap::new(), d1],
            faces: BTreeSet::new(),
        };
        assert_eq!(homology(&tri).unwrap(), vec![1, 1]);
    }

    #[test]
    fn pg_zero_three() {
        let cx = assemble_pg_complex(0, 3, AssembleOptions::default()).unwrap();
        assert_eq!(cx.counts(), vec![6, 9, 4]);
        assert!(cx.cells.iter().flatten().all(|c| c.aut == 1 && c.orientable));
        for k in 2..cx.boundary.len() {
            assert!(cx.boundary_squared(k).is_empty());
        }
        assert_eq!(reduced_homology(&cx).unwrap(), vec![0, 0, 0]);
        // every codimension one face appears with coefficient ±1
        assert!(cx.boundary.iter().flat_map(|b| b.values()).all(|v| v.abs() == 1));
    }

    #[test]
    fn faces_of_faces() {
        let cx = assemble_pg_complex(0, 3, AssembleOptions::default()).unwrap();
        // codimension two faces of a cell are reached through an even
        // number of codimension one faces
        for (k, top) in cx.cells.iter().enumerate().skip(2) {
            for j in 0..top.len() {
                let mut paths: BTreeMap<usize, usize> = BTreeMap::new();
                for &(i, jj) in cx.boundary[k].keys() {
                    if jj == j {
                        for &(l, ii) in cx.boundary[k - 1].keys() {
                            if ii == i {
                                *paths.entry(l).or_insert(0) += 1;
                            }
                        }
                    }
                }
                assert!(paths.values().all(|n| n % 2 == 0));
            }
        }
    }

    #[test]
    fn betti_numbers_of_compactifications() {
        let cases: [(usize, usize, bool, &[usize]); 6] = [
            (0, 3, true, &[1, 0, 0]),
            (1, 1, true, &[1, 0, 1]),
            (0, 4, true, &[1, 0, 1, 0, 0, 0]),
            (0, 4, false, &[1, 0, 1, 0, 0, 0]),
            (1, 2, true, &[1, 0, 2, 0, 1, 0]),
            (1, 2, false, &[1, 0, 2, 0, 1, 0]),
        ];
        for (g, s, quotient, want) in cases {
            let cx = assemble_pg_complex(g, s, AssembleOptions { quotient, ..Default::default() }).unwrap();
            assert_eq!(homology(&cx).unwrap(), want, "({g},{s}) quotient={quotient} {:?}", cx.counts());
            let chi: i64 = want.iter().enumerate().map(|(k, &b)| if k % 2 == 0 { b as i64 } else { -(b as i64) }).sum();
            assert_eq!(cx.euler_characteristic(), chi);
        }
    }

    #[test]
    fn deterministic_assembly() {
        let a = assemble_pg_complex(0, 4, AssembleOptions::default()).unwrap();
        let b = assemble_pg_complex(0, 4, AssembleOptions::default()).unwrap();
        assert_eq!(a.counts(), vec![81, 252, 384, 387, 240, 64]);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn cell_dims_are_simplex_products() {
        let cx = assemble_pg_complex(1, 1, AssembleOptions::default()).unwrap();
        for (k, cs) in cx.cells.iter().enumerate() {
            for c in cs {
                assert_eq!(c.rep.components.iter().map(|g| g.n_edges() - 1).sum::<usize>(), k);
            }
        }
        // the top cell is the theta graph
        assert_eq!(cx.cells.last().unwrap().len(), 1);
    }
}
