//! Lambda lengths, h-lengths and simplicial coordinates on quasi
//! triangulations, with Ptolemy flips and the flip algorithm producing the
//! convex-hull cell decomposition.
//!
//! A trivalent unpunctured vertex is a triangle, a univalent punctured vertex
//! a once-punctured monogon. Corners are keyed by the half-edge `h` and mean
//! the sector between `h` and `rot(h)`.

use crate::error::{pre, Error, Result};
use crate::fatgraph::{EdgeSet, Fatgraph};
use crate::rational::{q, QJson, Q};
use crate::screens::maximal_quasi_recurrent;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

fn check_qt(g: &Fatgraph, lambda: &[Q]) -> Result<()> {
    if !g.is_quasi_triangulation() {
        return pre("fatgraph is not a quasi triangulation");
    }
    if lambda.len() != g.n_edges() {
        return pre("lambda has wrong length");
    }
    if lambda.iter().any(|x| !x.is_positive()) {
        return pre("lambda lengths must be positive");
    }
    Ok(())
}

fn lam(g: &Fatgraph, lambda: &[Q], h: usize) -> Q {
    lambda[g.edge_of(h)].clone()
}

/// Strict triangle inequalities in every unpunctured triangle.
pub fn is_valid_lambda(g: &Fatgraph, lambda: &[Q]) -> bool {
    if check_qt(g, lambda).is_err() {
        return false;
    }
    (0..g.n_verts()).filter(|&v| !g.is_punctured(v)).all(|v| {
        let s: Vec<Q> = g.vertex(v).iter().map(|&h| lam(g, lambda, h)).collect();
        (0..3).all(|i| s[i] < &s[(i + 1) % 3] + &s[(i + 2) % 3])
    })
}

/// h-length of every corner, indexed by half-edge.
pub fn h_lengths(g: &Fatgraph, lambda: &[Q]) -> Result<Vec<Q>> {
    check_qt(g, lambda)?;
    Ok((0..g.n_half()).map(|h| corner(g, lambda, h)).collect())
}

fn corner(g: &Fatgraph, lambda: &[Q], h: usize) -> Q {
    if g.is_punctured(g.vertex_of(h)) {
        return q(2, 1) / lam(g, lambda, h);
    }
    let h1 = g.rot(h);
    let h2 = g.rot(h1);
    lam(g, lambda, h2) / (lam(g, lambda, h) * lam(g, lambda, h1))
}

/// Contribution of one end of an edge to its simplicial coordinate.
fn end_term(g: &Fatgraph, lambda: &[Q], h: usize) -> Q {
    let e = lam(g, lambda, h);
    if g.is_punctured(g.vertex_of(h)) {
        return q(2, 1) / e;
    }
    let b = lam(g, lambda, g.rot(h));
    let a = lam(g, lambda, g.rot(g.rot(h)));
    (&a * &a + &b * &b - &e * &e) / (a * b * e)
}

pub fn simplicial_coordinates(g: &Fatgraph, lambda: &[Q]) -> Result<Vec<Q>> {
    check_qt(g, lambda)?;
    Ok(g.edges().iter().map(|&[a, b]| end_term(g, lambda, a) + end_term(g, lambda, b)).collect())
}

/// Ptolemy flip of `e`. The half-edges of `e` move to the new diagonal;
/// flipping twice gives back the graph with `e` reversed.
pub fn ptolemy_flip(g: &Fatgraph, lambda: &[Q], e: usize) -> Result<(Fatgraph, Vec<Q>)> {
    check_qt(g, lambda)?;
    let [h, hp] = g.edge(e);
    let (u, v) = (g.vertex_of(h), g.vertex_of(hp));
    if u == v || g.is_punctured(u) || g.is_punctured(v) {
        return pre(format!("edge {e} is not the diagonal of a quadrilateral"));
    }
    let (u1, u2) = (g.rot(h), g.rot(g.rot(h)));
    let (v1, v2) = (g.rot(hp), g.rot(g.rot(hp)));
    let f = (lam(g, lambda, u1) * lam(g, lambda, v1) + lam(g, lambda, u2) * lam(g, lambda, v2)) / &lambda[e];
    let mut verts = g.vertices().to_vec();
    verts[u] = vec![h, u2, v1];
    verts[v] = vec![hp, v2, u1];
    let ng = Fatgraph::new(g.edges().to_vec(), verts, &g.punctured_vertices())?;
    let mut nl = lambda.to_vec();
    nl[e] = f;
    Ok((ng, nl))
}

/// Included h-length at the turn arriving on `p` and leaving on `q`.
fn turn_length(g: &Fatgraph, lambda: &[Q], p: usize, qh: usize) -> Q {
    if p == qh {
        return q(2, 1) / lam(g, lambda, p);
    }
    if g.rot(p) == qh {
        corner(g, lambda, p)
    } else {
        corner(g, lambda, qh)
    }
}

/// (sum of X along the cycle, twice the sum of included h-lengths).
pub fn telescoping_sum(g: &Fatgraph, lambda: &[Q], cycle: &[usize]) -> Result<(Q, Q)> {
    check_qt(g, lambda)?;
    if !g.is_quasi_efficient(cycle) {
        return pre("cycle is not quasi efficient");
    }
    let x = simplicial_coordinates(g, lambda)?;
    let sx = cycle.iter().fold(Q::zero(), |s, &h| s + &x[g.edge_of(h)]);
    let mut sa = Q::zero();
    for i in 0..cycle.len() {
        let p = g.pair(cycle[i]);
        let nx = cycle[(i + 1) % cycle.len()];
        sa += turn_length(g, lambda, p, nx);
    }
    Ok((sx, q(2, 1) * sa))
}

/// λ(e)·X(e) ≤ 4 for every edge.
pub fn product_bound_check(g: &Fatgraph, lambda: &[Q]) -> Result<bool> {
    let x = simplicial_coordinates(g, lambda)?;
    Ok(x.iter().zip(lambda).all(|(x, l)| x * l <= q(4, 1)))
}

/// Quantitative corner bound: if 1 ≤ a, b, e satisfy |b − e| < a and the
/// corner a/(be) is at most K < 1, then min(b, e) ≥ 1/(2√K), checked in
/// squared form. Returns true when the hypotheses fail.
pub fn corner_bound_holds(a: &Q, b: &Q, e: &Q, k: &Q) -> bool {
    let one = Q::one();
    if *a < one || *b < one || *e < one || *k >= one || !k.is_positive() {
        return true;
    }
    if (b - e).abs() >= *a {
        return true;
    }
    if a / (b * e) > *k {
        return true;
    }
    let m = if b < e { b } else { e };
    q(4, 1) * k * m * m >= one
}

#[derive(Clone, Debug)]
pub struct QcdResult {
    /// The convex-hull q.c.d. fatgraph.
    pub qcd: Fatgraph,
    /// Simplicial coordinates on `qcd`, all positive.
    pub x: Vec<Q>,
    /// Final quasi triangulation and its lambda lengths.
    pub triangulation: Fatgraph,
    pub lambda: Vec<Q>,
    /// Edge of `triangulation` for each edge of `qcd`.
    pub edge_map: Vec<usize>,
    pub flips: usize,
}

/// Flip edges with negative coordinate, lowest index first, then collapse
/// edges with zero coordinate.
pub fn flip_to_qcd(g: &Fatgraph, lambda: &[Q]) -> Result<QcdResult> {
    flip_to_qcd_with(g, lambda, |cands: &[usize]| cands[0])
}

/// Same, with a caller-chosen flip order.
pub fn flip_to_qcd_with(g: &Fatgraph, lambda: &[Q], mut choose: impl FnMut(&[usize]) -> usize) -> Result<QcdResult> {
    if !is_valid_lambda(g, lambda) {
        return pre("lambda lengths violate the triangle inequalities");
    }
    let cap = 10 * g.n_edges() * g.n_edges();
    let mut g = g.clone();
    let mut lambda = lambda.to_vec();
    let mut flips = 0;
    loop {
        let x = simplicial_coordinates(&g, &lambda)?;
        let neg: Vec<usize> = (0..x.len()).filter(|&e| x[e].is_negative()).collect();
        if neg.is_empty() {
            break;
        }
        if flips >= cap {
            return Err(Error::Invariant(format!("flip cap {cap} reached")));
        }
        let e = choose(&neg);
        let (ng, nl) = ptolemy_flip(&g, &lambda, e)?;
        g = ng;
        lambda = nl;
        flips += 1;
    }
    let x = simplicial_coordinates(&g, &lambda)?;
    let zero: EdgeSet = (0..x.len()).filter(|&e| x[e].is_zero()).collect();
    if !maximal_quasi_recurrent(&g, &zero).is_empty() {
        return Err(Error::Invariant("vanishing edges carry a quasi efficient cycle".into()));
    }
    let (qcd, edge_map) = contract_edges(&g, &zero)?;
    let xq = edge_map.iter().map(|&e| x[e].clone()).collect();
    Ok(QcdResult { qcd, x: xq, triangulation: g, lambda, edge_map, flips })
}

/// Contract a forest of edges; returns the new graph and, per new edge,
/// the old edge index.
pub fn contract_edges(g: &Fatgraph, set: &EdgeSet) -> Result<(Fatgraph, Vec<usize>)> {
    let mut cur = g.clone();
    let mut back: Vec<usize> = (0..g.n_edges()).collect();
    let mut todo: Vec<usize> = set.iter().copied().collect();
    todo.sort_unstable_by(|a, b| b.cmp(a));
    for e in todo {
        let idx = back.iter().position(|&o| o == e).expect("edge present");
        cur = cur.collapse_edge(idx)?;
        back.remove(idx);
    }
    Ok((cur, back))
}

/// Canonical code together with per-canonical-edge weights, minimized over
/// automorphisms. Two weighted fatgraphs are isomorphic iff these agree.
pub fn canonical_weighted(g: &Fatgraph, w: &[Q], colors: &[u64]) -> Result<(Vec<u64>, Vec<Q>)> {
    let labs = g.canonical_labelings(colors)?;
    let code = g.canonical_form_colored(colors)?.code;
    let best = labs
        .iter()
        .map(|lab| {
            let mut es: Vec<(usize, usize)> =
                (0..g.n_edges()).map(|e| (lab[g.edge(e)[0]].min(lab[g.edge(e)[1]]), e)).collect();
            es.sort_unstable();
            es.into_iter().map(|(_, e)| w[e].clone()).collect::<Vec<Q>>()
        })
        .min()
        .unwrap_or_default();
    Ok((code, best))
}

/// Random connected quasi triangulation with `n` trivalent and `m`
/// univalent punctured vertices, negative Euler characteristic and no edge
/// between two punctured vertices.
pub fn random_quasi_triangulation<R: Rng>(rng: &mut R, n: usize, m: usize) -> Result<Fatgraph> {
    let nh = 3 * n + m;
    if !nh.is_multiple_of(2) || n == 0 {
        return pre("3n + m must be even and n positive");
    }
    for _ in 0..10_000 {
        let mut hs: Vec<usize> = (0..nh).collect();
        hs.shuffle(rng);
        let edges: Vec<[usize; 2]> = hs.chunks(2).map(|c| [c[0], c[1]]).collect();
        let mut verts: Vec<Vec<usize>> = (0..n).map(|i| vec![3 * i, 3 * i + 1, 3 * i + 2]).collect();
        for v in verts.iter_mut() {
            if rng.gen_bool(0.5) {
                v.swap(1, 2);
            }
        }
        verts.extend((0..m).map(|j| vec![3 * n + j]));
        let punct: Vec<usize> = (n..n + m).collect();
        let g = Fatgraph::new(edges, verts, &punct)?;
        let bad = (0..g.n_edges()).any(|e| {
            let (a, b) = g.endpoints(e);
            g.is_punctured(a) && g.is_punctured(b)
        });
        if !bad && g.is_connected() && g.euler_characteristic() < 0 {
            return Ok(g);
        }
    }
    Err(Error::Cap("no admissible random quasi triangulation found".into()))
}

/// Random valid lambda lengths: rejection in [1/4, 4], else [1, 2).
pub fn random_lambda<R: Rng>(rng: &mut R, g: &Fatgraph) -> Vec<Q> {
    for _ in 0..50 {
        let l: Vec<Q> = (0..g.n_edges()).map(|_| q(rng.gen_range(2..=32), 8)).collect();
        if is_valid_lambda(g, &l) {
            return l;
        }
    }
    (0..g.n_edges()).map(|_| q(16 + rng.gen_range(0..16), 16)).collect()
}

/// A random quasi efficient cycle: non-backtracking walk on directed
/// half-edges until a state repeats.
pub fn random_qe_cycle<R: Rng>(rng: &mut R, g: &Fatgraph) -> Vec<usize> {
    let mut h = rng.gen_range(0..g.n_half());
    let mut seen = std::collections::HashMap::new();
    let mut walk = Vec::new();
    loop {
        if let Some(&i) = seen.get(&h) {
            return walk[i..].to_vec();
        }
        seen.insert(h, walk.len());
        walk.push(h);
        let arr = g.pair(h);
        let w = g.vertex_of(arr);
        let opts: Vec<usize> = g.vertex(w).iter().copied().filter(|&x| x != arr || g.is_punctured(w)).collect();
        h = *opts.choose(rng).expect("no dead ends in a quasi triangulation");
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeValue {
    pub edge: usize,
    pub value: QJson,
}

pub fn values_to_json(v: &[Q]) -> Vec<EdgeValue> {
    v.iter().enumerate().map(|(edge, x)| EdgeValue { edge, value: x.into() }).collect()
}

pub fn values_from_json(v: &[EdgeValue]) -> Result<Vec<Q>> {
    let mut out = vec![None; v.len()];
    for ev in v {
        if ev.edge >= v.len() || out[ev.edge].is_some() {
            return Err(Error::Structure(format!("bad edge index {}", ev.edge)));
        }
        out[ev.edge] = Some(ev.value.to_q()?);
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

pub fn values_to_csv(v: &[Q]) -> String {
    let mut s = String::from("edge,numerator,denominator\n");
    for (e, x) in v.iter().enumerate() {
        s.push_str(&format!("{e},{},{}\n", x.numer(), x.denom()));
    }
    s
}

pub fn values_from_csv(s: &str) -> Result<Vec<Q>> {
    let mut rows = Vec::new();
    for (i, line) in s.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(Error::Structure(format!("line {}: expected 3 fields", i + 1)));
        }
        let e: usize = f[0].parse().map_err(|_| Error::Structure(format!("line {}: bad edge", i + 1)))?;
        rows.push(EdgeValue { edge: e, value: QJson(f[1].into(), f[2].into()) });
    }
    values_from_json(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fatgraph::examples::planar_theta;
    use crate::rational::qi;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad(a: i64, b: i64, c: i64, d: i64, e: i64) -> (Fatgraph, Vec<Q>) {
        quad_q([qi(a), qi(b), qi(c), qi(d), qi(e)])
    }

    fn quad_q([a, b, c, d, e]: [Q; 5]) -> (Fatgraph, Vec<Q>) {
        // two triangles sharing edge 0; the other sides end at punctured
        // univalent vertices, so everything is a quasi triangulation
        let g = Fatgraph::new(
            vec![[0, 1], [2, 6], [3, 7], [4, 8], [5, 9]],
            vec![vec![0, 2, 3], vec![1, 4, 5], vec![6], vec![7], vec![8], vec![9]],
            &[2, 3, 4, 5],
        )
        .unwrap();
        (g, vec![e, a, b, c, d])
    }

    #[test]
    fn corner_examples() {
        let g = planar_theta();
        let l = vec![qi(2), qi(1), qi(1)];
        let h = h_lengths(&g, &l).unwrap();
        // corner at vertex 0 between half-edges 2 and 4 is opposite edge 0
        assert_eq!(h[2], qi(2));
        let one = vec![qi(1); 3];
        assert!(h_lengths(&g, &one).unwrap().iter().all(|x| *x == qi(1)));
        let (m, ml) = quad(1, 1, 1, 1, 1);
        assert_eq!(h_lengths(&m, &[ml[0].clone(), ml[1].clone(), ml[2].clone(), ml[3].clone(), qi(4)]).unwrap()[9], q(1, 2));
    }

    #[test]
    fn simplicial_examples() {
        let g = planar_theta();
        let x = simplicial_coordinates(&g, &[qi(1), qi(1), qi(1)]).unwrap();
        assert!(x.iter().all(|v| *v == qi(2)));
        let (m, l) = quad(1, 1, 1, 1, 1);
        let x = simplicial_coordinates(&m, &l).unwrap();
        assert_eq!(x[0], qi(2));
        assert_eq!(x[1], qi(3));
    }

    #[test]
    fn ptolemy_examples() {
        let (m, l) = quad(1, 1, 1, 1, 1);
        let (g2, l2) = ptolemy_flip(&m, &l, 0).unwrap();
        assert_eq!(l2[0], qi(2));
        let (g3, l3) = ptolemy_flip(&g2, &l2, 0).unwrap();
        assert_eq!(l3, l);
        assert!(g3.same_structure(&m.reverse_edge(0)));
        // sides in cyclic order a, b, c, d around the quadrilateral
        let g = Fatgraph::new(
            vec![[0, 1], [2, 6], [3, 7], [4, 8], [5, 9]],
            vec![vec![0, 2, 3], vec![1, 4, 5], vec![6], vec![7], vec![8], vec![9]],
            &[2, 3, 4, 5],
        )
        .unwrap();
        // a = u1 (edge 1), b = u2 (edge 2), c = v1 (edge 3), d = v2 (edge 4)
        let l = vec![qi(11), qi(2), qi(3), qi(5), qi(7)];
        let (_, lf) = ptolemy_flip(&g, &l, 0).unwrap();
        assert_eq!(lf[0], q(31, 11));
        assert!(ptolemy_flip(&g, &l, 1).is_err());
    }

    #[test]
    fn flip_preserves_topology() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let g = random_quasi_triangulation(&mut rng, 4, 2).unwrap();
            let l = random_lambda(&mut rng, &g);
            for e in 0..g.n_edges() {
                if let Ok((h, _)) = ptolemy_flip(&g, &l, e) {
                    assert_eq!(h.surface_type().unwrap(), g.surface_type().unwrap());
                }
            }
        }
    }

    #[test]
    fn telescoping_on_theta() {
        let g = planar_theta();
        let l = vec![qi(1); 3];
        let (a, b) = telescoping_sum(&g, &l, &[0, 3]).unwrap();
        assert_eq!(a, b);
        assert!(telescoping_sum(&g, &l, &[0, 1]).is_err());
    }

    #[test]
    fn flip_to_qcd_identity_and_one_flip() {
        let g = planar_theta();
        let l = vec![qi(1); 3];
        let r = flip_to_qcd(&g, &l).unwrap();
        assert_eq!(r.flips, 0);
        assert_eq!(r.qcd, g);
        // a nonnegative configuration, inverse flipped, needs one flip back
        let (m, l) = quad_q([qi(1), qi(1), qi(1), qi(1), q(20, 19)]);
        assert!(simplicial_coordinates(&m, &l).unwrap().iter().all(|x| !x.is_negative()));
        let (m2, l2) = ptolemy_flip(&m, &l, 0).unwrap();
        assert!(simplicial_coordinates(&m2, &l2).unwrap()[0].is_negative());
        assert!(is_valid_lambda(&m2, &l2));
        let r = flip_to_qcd(&m2, &l2).unwrap();
        assert_eq!(r.flips, 1);
        assert!(r.x.iter().all(|x| x.is_positive()));
    }

    #[test]
    fn corner_bound_examples() {
        assert!(corner_bound_holds(&qi(1), &qi(2), &qi(2), &q(1, 4)));
        assert!(corner_bound_holds(&qi(1), &qi(1), &qi(1), &q(1, 4)));
        // without |b − e| < a the bound would fail here
        assert!(corner_bound_holds(&qi(1), &qi(1), &qi(100), &q(1, 100)));
        assert!(!(q(4, 1) * q(1, 100) >= qi(1)));
    }

    #[test]
    fn csv_round_trip() {
        let v = vec![q(1, 3), qi(7), q(-2, 5)];
        assert_eq!(values_from_csv(&values_to_csv(&v)).unwrap(), v);
        let j = serde_json::to_string(&values_to_json(&v)).unwrap();
        let back: Vec<EdgeValue> = serde_json::from_str(&j).unwrap();
        assert_eq!(values_from_json(&back).unwrap(), v);
    }
}
