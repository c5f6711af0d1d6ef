//! Quasi recurrent edge sets, screens, filtered screens and their points,
//! relative boundary curves and the two face operations.

use crate::error::{pre, Error, Result};
use crate::fatgraph::{EdgeSet, Fatgraph};
use crate::rational::{projectivize, Q};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Every univalent vertex of G(A) is punctured.
pub fn is_quasi_recurrent(g: &Fatgraph, a: &EdgeSet) -> bool {
    g.vertices_of(a).iter().all(|&v| g.is_punctured(v) || g.valence_in(v, a) != 1)
}

/// Prune edges at unpunctured univalent vertices until stable.
pub fn maximal_quasi_recurrent(g: &Fatgraph, a: &EdgeSet) -> EdgeSet {
    let mut cur = a.clone();
    loop {
        let bad: Vec<usize> = cur
            .iter()
            .copied()
            .filter(|&e| {
                g.edge(e).iter().any(|&h| {
                    let v = g.vertex_of(h);
                    !g.is_punctured(v) && g.valence_in(v, &cur) == 1
                })
            })
            .collect();
        if bad.is_empty() {
            return cur;
        }
        for e in bad {
            cur.remove(&e);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Screen {
    pub graph: Fatgraph,
    pub members: Vec<EdgeSet>,
}

impl Screen {
    pub fn new(graph: Fatgraph, members: Vec<EdgeSet>) -> Result<Self> {
        let s = Screen { graph, members };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        let all = g.all_edges();
        if !self.members.contains(&all) {
            return Err(Error::Validation("screen must contain E".into()));
        }
        for (i, a) in self.members.iter().enumerate() {
            if a.is_empty() || !a.is_subset(&all) {
                return Err(Error::Validation(format!("member {i} is empty or not a subset of E")));
            }
            if !is_quasi_recurrent(g, a) {
                return Err(Error::Validation(format!("member {i} is not quasi recurrent")));
            }
            for b in &self.members[i + 1..] {
                if a == b {
                    return Err(Error::Validation("repeated member".into()));
                }
                if !(a.is_subset(b) || b.is_subset(a) || a.is_disjoint(b)) {
                    return Err(Error::Validation("members neither nested nor disjoint".into()));
                }
            }
            let below: EdgeSet = self
                .members
                .iter()
                .filter(|b| *b != a && b.is_subset(a))
                .flat_map(|b| b.iter().copied())
                .collect();
            if below == *a {
                return Err(Error::Validation(format!("member {i} is the union of smaller members")));
            }
        }
        Ok(())
    }

    pub fn depth(&self, e: usize) -> usize {
        self.members.iter().filter(|a| a.contains(&e)).count() - 1
    }

    /// Smallest member strictly containing `a`.
    pub fn parent(&self, a: &EdgeSet) -> Option<&EdgeSet> {
        self.members.iter().filter(|b| *b != a && a.is_subset(b)).min_by_key(|b| b.len())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilteredScreen {
    pub graph: Fatgraph,
    pub levels: Vec<EdgeSet>,
}

impl FilteredScreen {
    pub fn new(graph: Fatgraph, levels: Vec<EdgeSet>) -> Result<Self> {
        let s = FilteredScreen { graph, levels };
        s.validate()?;
        Ok(s)
    }

    /// The screen with a single level.
    pub fn trivial(graph: Fatgraph) -> Self {
        let all = graph.all_edges();
        FilteredScreen { graph, levels: vec![all] }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = EdgeSet::new();
        for (k, l) in self.levels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::Validation(format!("level {k} is empty")));
            }
            for &e in l {
                if e >= self.graph.n_edges() || !seen.insert(e) {
                    return Err(Error::Validation(format!("edge {e} misplaced at level {k}")));
                }
            }
        }
        if seen.len() != self.graph.n_edges() {
            return Err(Error::Validation("levels do not cover E".into()));
        }
        for k in 0..self.levels.len() {
            if !is_quasi_recurrent(&self.graph, &self.at_least(k)) {
                return Err(Error::Validation(format!("edges of level >= {k} are not quasi recurrent")));
            }
        }
        Ok(())
    }

    pub fn total_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn at_least(&self, k: usize) -> EdgeSet {
        self.levels[k..].iter().flat_map(|l| l.iter().copied()).collect()
    }

    pub fn level_of(&self, e: usize) -> usize {
        self.levels.iter().position(|l| l.contains(&e)).expect("edge has a level")
    }

    pub fn dim(&self) -> usize {
        self.levels.iter().map(|l| l.len() - 1).sum()
    }
}

pub fn screen_to_filtered(s: &Screen) -> Result<FilteredScreen> {
    s.validate()?;
    let n = s.graph.n_edges();
    let depth: Vec<usize> = (0..n).map(|e| s.depth(e)).collect();
    let max = *depth.iter().max().unwrap_or(&0);
    let levels: Vec<EdgeSet> = (0..=max).map(|k| (0..n).filter(|&e| depth[e] == k).collect()).collect();
    if levels.iter().any(|l| l.is_empty()) {
        return Err(Error::Validation("screen has an empty depth".into()));
    }
    FilteredScreen::new(s.graph.clone(), levels)
}

pub fn filtered_to_screen(f: &FilteredScreen) -> Screen {
    let members = (0..f.levels.len()).map(|k| f.at_least(k)).collect();
    Screen { graph: f.graph.clone(), members }
}

/// A point in the cell of a filtered screen: weights per edge, positive,
/// summing to one on each level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScreenPoint {
    pub screen: FilteredScreen,
    pub weights: Vec<Q>,
}

impl ScreenPoint {
    pub fn new(screen: FilteredScreen, weights: Vec<Q>) -> Result<Self> {
        if weights.len() != screen.graph.n_edges() || weights.iter().any(|w| !w.is_positive()) {
            return Err(Error::Validation("weights must be positive, one per edge".into()));
        }
        for l in &screen.levels {
            let s: Q = l.iter().fold(Q::zero(), |s, &e| s + &weights[e]);
            if !s.is_one() {
                return Err(Error::Validation("weights do not sum to one on a level".into()));
            }
        }
        Ok(ScreenPoint { screen, weights })
    }

    /// Projectivize arbitrary positive weights level by level.
    pub fn from_raw(screen: FilteredScreen, raw: &[Q]) -> Result<Self> {
        let mut w = raw.to_vec();
        for l in &screen.levels {
            let xs: Vec<Q> = l.iter().map(|&e| raw[e].clone()).collect();
            if xs.iter().any(|x| !x.is_positive()) {
                return Err(Error::Validation("weights must be positive".into()));
            }
            for (&e, x) in l.iter().zip(projectivize(&xs)) {
                w[e] = x;
            }
        }
        ScreenPoint::new(screen, w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CurveClass {
    Essential,
    PunctureParallel,
    BoundaryParallel,
}

/// A boundary cycle of a component of the deeper subgraph, as the cyclic
/// sequence of its departing half-edges (starting at the smallest).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Curve {
    pub half_edges: Vec<usize>,
    pub class: CurveClass,
    /// Shallow half-edges sitting in its corners.
    pub attachments: Vec<usize>,
    pub included: bool,
}

impl Curve {
    pub fn edges(&self, g: &Fatgraph) -> Vec<usize> {
        self.half_edges.iter().map(|&h| g.edge_of(h)).collect()
    }
}

/// Next half-edge after `h` in the rotation at its vertex within `inside`.
pub(crate) fn sub_rot(g: &Fatgraph, h: usize, inside: &dyn Fn(usize) -> bool) -> usize {
    let mut x = g.rot(h);
    while !inside(x) {
        x = g.rot(x);
    }
    x
}

/// Faces of G(deep) classified against attachments from `shallow`.
pub fn classify_curves(g: &Fatgraph, deep: &EdgeSet, shallow: &EdgeSet) -> Vec<Curve> {
    let mut out = Vec::new();
    for comp in g.edge_components(deep) {
        let in_c = |h: usize| comp.contains(&g.edge_of(h));
        let mut faces = Vec::new();
        let mut seen = BTreeSet::new();
        for &e in &comp {
            for &s in &g.edge(e) {
                if seen.contains(&s) {
                    continue;
                }
                let mut cyc = vec![];
                let mut att = vec![];
                let mut bare = true;
                let mut h = s;
                while seen.insert(h) {
                    cyc.push(h);
                    let arr = g.pair(h);
                    let nx = sub_rot(g, arr, &in_c);
                    let mut x = g.rot(arr);
                    while x != nx {
                        bare = false;
                        if shallow.contains(&g.edge_of(x)) {
                            att.push(x);
                        }
                        x = g.rot(x);
                    }
                    h = nx;
                }
                faces.push((cyc, att, bare));
            }
        }
        let simple = g.is_simple_cycle(&comp);
        let classes: Vec<(CurveClass, bool)> = if simple {
            let horo = faces.iter().any(|f| f.2);
            let with_att: Vec<usize> = (0..faces.len()).filter(|&i| !faces[i].1.is_empty()).collect();
            faces
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    if f.2 {
                        (CurveClass::PunctureParallel, false)
                    } else if horo || with_att.is_empty() {
                        (CurveClass::BoundaryParallel, false)
                    } else {
                        // one curve for the cycle: the first side with attachments
                        (CurveClass::Essential, i == with_att[0])
                    }
                })
                .collect()
        } else {
            faces
                .iter()
                .map(|f| {
                    if !f.1.is_empty() {
                        (CurveClass::Essential, true)
                    } else if f.2 {
                        (CurveClass::PunctureParallel, false)
                    } else {
                        (CurveClass::BoundaryParallel, false)
                    }
                })
                .collect()
        };
        for ((cyc, att, _), (class, included)) in faces.into_iter().zip(classes) {
            let m = cyc.iter().enumerate().min_by_key(|p| p.1).unwrap().0;
            let half_edges = [&cyc[m..], &cyc[..m]].concat();
            out.push(Curve { half_edges, class, attachments: att, included });
        }
    }
    out.sort();
    out
}

/// Curves of G(L^{>=k+1}) classified inside G(L^{>=k}).
pub fn boundary_curves(f: &FilteredScreen, k: usize) -> Result<Vec<Curve>> {
    if k >= f.total_level() {
        return pre(format!("k = {k} out of range"));
    }
    Ok(classify_curves(&f.graph, &f.at_least(k + 1), &f.levels[k]))
}

/// The included curves at level `k`.
pub fn relative_boundary(f: &FilteredScreen, k: usize) -> Result<Vec<Curve>> {
    Ok(boundary_curves(f, k)?.into_iter().filter(|c| c.included).collect())
}

/// All included curves over all levels, as half-edge cycles.
pub fn full_boundary(f: &FilteredScreen) -> BTreeSet<Vec<usize>> {
    (0..f.total_level())
        .flat_map(|k| relative_boundary(f, k).unwrap())
        .map(|c| c.half_edges)
        .collect()
}

/// Boundary of a screen: for each member, its curves inside its parent.
pub fn screen_boundary(s: &Screen) -> BTreeSet<Vec<usize>> {
    let mut out = BTreeSet::new();
    for a in &s.members {
        if let Some(p) = s.parent(a) {
            let shallow: EdgeSet = p.difference(a).copied().collect();
            for c in classify_curves(&s.graph, a, &shallow) {
                if c.included {
                    out.insert(c.half_edges);
                }
            }
        }
    }
    out
}

/// Collapse the dual edge `e` of level k (remove the arc).
pub fn face_remove_arc(f: &FilteredScreen, e: usize) -> Result<FilteredScreen> {
    let g = &f.graph;
    if e >= g.n_edges() {
        return pre(format!("no edge {e}"));
    }
    let k = f.level_of(e);
    let (u, v) = g.endpoints(e);
    if u == v {
        return pre("arc has the same region on both sides");
    }
    if g.is_punctured(u) && g.is_punctured(v) {
        return pre("both endpoints punctured");
    }
    let deep_v = g.vertices_of(&f.at_least(k + 1));
    let free = |w: usize| !g.is_punctured(w) && !deep_v.contains(&w);
    if !free(u) && !free(v) {
        return pre("no unpunctured endpoint away from the deeper levels");
    }
    let ng = g.collapse_edge(e)?;
    let renum = |x: usize| if x > e { x - 1 } else { x };
    let levels: Vec<EdgeSet> = f
        .levels
        .iter()
        .map(|l| l.iter().filter(|&&x| x != e).map(|&x| renum(x)).collect::<EdgeSet>())
        .filter(|l| !l.is_empty())
        .collect();
    FilteredScreen::new(ng, levels)
}

/// Split level k into (L^k − A, A).
pub fn face_split_level(f: &FilteredScreen, k: usize, a: &EdgeSet) -> Result<FilteredScreen> {
    if k > f.total_level() {
        return pre(format!("no level {k}"));
    }
    if a.is_empty() || !a.is_subset(&f.levels[k]) || *a == f.levels[k] {
        return pre("A must be a nonempty proper subset of the level");
    }
    let mut deep = f.at_least(k + 1);
    deep.extend(a.iter().copied());
    if !is_quasi_recurrent(&f.graph, &deep) {
        return pre("A together with the deeper levels is not quasi recurrent");
    }
    let mut levels = f.levels.clone();
    levels[k] = f.levels[k].difference(a).copied().collect();
    levels.insert(k + 1, a.clone());
    FilteredScreen::new(f.graph.clone(), levels)
}

/// Random filtered screen by repeatedly passing to the maximal quasi
/// recurrent part of a random subset.
pub fn random_filtered_screen<R: Rng>(rng: &mut R, g: &Fatgraph, max_levels: usize) -> FilteredScreen {
    let mut s = g.all_edges();
    let mut levels = Vec::new();
    while levels.len() + 1 < max_levels {
        let mut t = EdgeSet::new();
        for _ in 0..4 {
            let sub: EdgeSet = s.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
            t = maximal_quasi_recurrent(g, &sub);
            if !t.is_empty() && t != s {
                break;
            }
        }
        if t.is_empty() || t == s {
            break;
        }
        levels.push(s.difference(&t).copied().collect());
        s = t;
    }
    levels.push(s);
    FilteredScreen::new(g.clone(), levels).expect("construction keeps quasi recurrence")
}

/// Random point with small integer raw weights.
pub fn random_point<R: Rng>(rng: &mut R, f: &FilteredScreen) -> ScreenPoint {
    let raw: Vec<Q> = (0..f.graph.n_edges()).map(|_| Q::from_integer(rng.gen_range(1..=9).into())).collect();
    ScreenPoint::from_raw(f.clone(), &raw).expect("positive weights")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredScreenJson {
    pub graph: crate::fatgraph::FatgraphJson,
    pub levels: Vec<Vec<usize>>,
    #[serde(default)]
    pub weights: Option<Vec<crate::rational::QJson>>,
}

impl FilteredScreenJson {
    pub fn from_point(p: &ScreenPoint) -> Self {
        FilteredScreenJson {
            graph: p.screen.graph.to_json(),
            levels: p.screen.levels.iter().map(|l| l.iter().copied().collect()).collect(),
            weights: Some(p.weights.iter().map(Into::into).collect()),
        }
    }

    pub fn to_screen(&self) -> Result<FilteredScreen> {
        let g = Fatgraph::from_json(&self.graph)?;
        FilteredScreen::new(g, self.levels.iter().map(|l| l.iter().copied().collect()).collect())
    }

    /// Missing weights default to uniform per level.
    pub fn to_point(&self) -> Result<ScreenPoint> {
        let s = self.to_screen()?;
        match &self.weights {
            Some(w) => {
                let raw = w.iter().map(|x| x.to_q()).collect::<Result<Vec<Q>>>()?;
                if raw.len() != s.graph.n_edges() {
                    return Err(Error::Validation("one weight per edge expected".into()));
                }
                ScreenPoint::from_raw(s, &raw)
            }
            None => {
                let n = s.graph.n_edges();
                ScreenPoint::from_raw(s, &vec![Q::one(); n])
            }
        }
    }
}

/// The worked example graph: bigon f–g and square b–e joined by a bar a, a
/// bar h to a triangle i–k bounding a face, and filler edges l–o.
pub mod fifteen {
    use crate::fatgraph::{EdgeSet, Fatgraph};

    pub const NAMES: &str = "abcdefghijklmno";

    pub fn edge(c: char) -> usize {
        NAMES.find(c).expect("edge name")
    }

    /// Edges named by the inclusive letter range, e.g. `range('a','g')`.
    pub fn range(a: char, b: char) -> EdgeSet {
        (edge(a)..=edge(b)).collect()
    }

    pub fn set(s: &str) -> EdgeSet {
        s.chars().map(edge).collect()
    }

    pub fn graph() -> Fatgraph {
        let edges = (0..15).map(|i| [2 * i, 2 * i + 1]).collect();
        let rotation = vec![
            vec![0, 10, 13],  // P1: a f g
            vec![11, 12, 22], // P2: f g l
            vec![1, 2, 9],    // Q1: a b e
            vec![3, 4, 24],   // Q2: b c m
            vec![5, 6, 14],   // Q3: c d h
            vec![7, 8, 26],   // Q4: d e n
            vec![21, 16, 15], // T1: k i h
            vec![17, 18, 28], // T2: i j o
            vec![19, 20, 29], // T3: j k o
            vec![23, 25, 27], // R: l m n
        ];
        Fatgraph::new(edges, rotation, &[]).expect("fixture is well formed")
    }
}
