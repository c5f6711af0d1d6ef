//! Acceptance run: one line per criterion, non-zero exit on any failure.
//! All checks are exact; the only tolerances are the wall-clock budgets.

use num_traits::{One, Signed, Zero};
use pgcomplex::census::{
    assemble_pg_complex, enumerate_fatgraphs, harer_zagier, orbifold_euler, reduced_homology, AssembleOptions, EnumOptions,
};
use pgcomplex::coords::{
    canonical_weighted, contract_edges, corner_bound_holds, flip_to_qcd, flip_to_qcd_with, product_bound_check, ptolemy_flip,
    random_lambda, random_qe_cycle, random_quasi_triangulation, simplicial_coordinates, telescoping_sum,
};
use pgcomplex::limits::{construct_path, limiting_point};
use pgcomplex::orient::{check_orientation_calculus, chi_combinatorial, orientation_from_pairing, psi};
use pgcomplex::pairing::{pi_equivalent, project_pi, project_pi_traced, MoveKind};
use pgcomplex::rational::{q, qi};
use pgcomplex::screens::fifteen::{edge, graph, range};
use pgcomplex::screens::{
    full_boundary, maximal_quasi_recurrent, random_filtered_screen, random_point, screen_boundary, screen_to_filtered,
    FilteredScreen, Screen, ScreenPoint,
};
use pgcomplex::strata::{all_nests, check_nest_calculus, enumerate_stratum_graphs};
use pgcomplex::{EdgeSet, Fatgraph, SurfaceType, Q};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

const IDENTITY_BUDGET: Duration = Duration::from_secs(1);
const FLIP_BUDGET: Duration = Duration::from_secs(10);
const LIMIT_BUDGET: Duration = Duration::from_secs(30);
const NEST_BUDGET: Duration = Duration::from_secs(60);
const ORIENT_BUDGET: Duration = Duration::from_secs(60);
const CHI_PSI_BUDGET: Duration = Duration::from_secs(30);
const CENSUS_BUDGET: Duration = Duration::from_secs(10);
const TOPOLOGY_BUDGET: Duration = Duration::from_secs(60);
const EXAMPLE_BUDGET: Duration = Duration::from_secs(10);

const MAX_STRATUM_EDGES: usize = 6;
const MAX_NEST_LEVEL: usize = 3;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: pgcomplex::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Fatgraph, Vec<Q>) {
    let n = 2 * rng.gen_range(1..=3);
    let m = rng.gen_range(0..=2);
    let g = random_quasi_triangulation(rng, n + (m % 2), m).expect("random quasi triangulation");
    let l = random_lambda(rng, &g);
    (g, l)
}

fn c1_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut timings = vec![];
    // Ptolemy involution
    let t = Instant::now();
    let mut flips = 0;
    for _ in 0..500 {
        let (g, l) = random_instance(&mut rng);
        for e in 0..g.n_edges() {
            let Ok((g2, l2)) = ptolemy_flip(&g, &l, e) else { continue };
            let (g3, l3) = lib(ptolemy_flip(&g2, &l2, e))?;
            ensure(l3 == l && g3.same_structure(&g.reverse_edge(e)), || format!("flip of edge {e} is not an involution"))?;
            flips += 1;
        }
    }
    timings.push(("ptolemy", t.elapsed()));
    // telescoping
    let t = Instant::now();
    for i in 0..500 {
        let (g, l) = random_instance(&mut rng);
        let c = random_qe_cycle(&mut rng, &g);
        let (a, b) = lib(telescoping_sum(&g, &l, &c))?;
        ensure(a == b, || format!("telescoping fails on instance {i}: {a} vs {b}"))?;
    }
    timings.push(("telescoping", t.elapsed()));
    // product bound
    let t = Instant::now();
    for i in 0..500 {
        let (g, l) = random_instance(&mut rng);
        ensure(lib(product_bound_check(&g, &l))?, || format!("λ·X > 4 on instance {i}"))?;
    }
    timings.push(("λ·X ≤ 4", t.elapsed()));
    // corner bound, squared form, on triples meeting the hypotheses
    let t = Instant::now();
    let mut live = 0;
    for k in [q(1, 4), q(1, 9), q(1, 100)] {
        for _ in 0..2000 {
            let b = Q::one() + q(rng.gen_range(0..4000), 100);
            let e = Q::one() + q(rng.gen_range(0..4000), 100);
            let lo = (&b - &e).abs().max(Q::one());
            let hi = (&k * &b * &e).min(&b + &e);
            if hi <= lo {
                continue;
            }
            let a = &lo + (&hi - &lo) * q(rng.gen_range(1..1000), 1000);
            ensure(corner_bound_holds(&a, &b, &e, &k), || format!("corner bound fails at a={a} b={b} e={e} K={k}"))?;
            live += 1;
        }
    }
    timings.push(("corner bound", t.elapsed()));
    ensure(live > 1000, || format!("only {live} corner triples met the hypotheses"))?;
    for (name, d) in &timings {
        ensure(*d < IDENTITY_BUDGET, || format!("{name} took {d:?}"))?;
    }
    Ok(format!("{flips} involutive flips, 500+500 instances, {live} corner triples; slowest {:?}", timings.iter().map(|x| x.1).max().unwrap()))
}

fn c2_flip_to_qcd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut flipped = 0;
    for i in 0..200 {
        let (g, l) = random_instance(&mut rng);
        let r = lib(flip_to_qcd(&g, &l))?;
        ensure(r.x.iter().all(|x| x.is_positive()), || format!("instance {i}: nonpositive coordinate survives"))?;
        let xt = lib(simplicial_coordinates(&r.triangulation, &r.lambda))?;
        ensure(xt.iter().all(|x| !x.is_negative()), || format!("instance {i}: negative coordinate after flipping"))?;
        let zero: EdgeSet = (0..xt.len()).filter(|&e| xt[e].is_zero()).collect();
        ensure(maximal_quasi_recurrent(&r.triangulation, &zero).is_empty(), || format!("instance {i}: quasi vanishing cycle"))?;
        let colors = vec![0; r.qcd.n_half()];
        let want = lib(canonical_weighted(&r.qcd, &r.x, &colors))?;
        for _ in 0..2 {
            let mut orng = ChaCha8Rng::seed_from_u64(rng.gen());
            let s = lib(flip_to_qcd_with(&g, &l, |c| c[orng.gen_range(0..c.len())]))?;
            let got = lib(canonical_weighted(&s.qcd, &s.x, &vec![0; s.qcd.n_half()]))?;
            ensure(got == want, || format!("instance {i}: flip order changes the result"))?;
        }
        if r.flips > 0 {
            flipped += 1;
        }
    }
    ensure(flipped >= 20, || format!("only {flipped} instances needed flips"))?;
    Ok(format!("200 instances, {flipped} needing flips, 2 extra random orders each"))
}

fn limit_instance(rng: &mut ChaCha8Rng) -> (Fatgraph, EdgeSet, ScreenPoint) {
    let collapsible = |g: &Fatgraph| -> Vec<usize> {
        (0..g.n_edges())
            .filter(|&e| {
                let (a, b) = g.endpoints(e);
                a != b && !(g.is_punctured(a) && g.is_punctured(b))
            })
            .collect()
    };
    let n = 2 * rng.gen_range(1..=3);
    let m = rng.gen_range(0..=2);
    let mut ge = random_quasi_triangulation(rng, n + (m % 2), m).expect("random quasi triangulation");
    for _ in 0..rng.gen_range(0..=2) {
        let c = collapsible(&ge);
        if c.is_empty() || ge.n_edges() < 3 {
            break;
        }
        ge = ge.collapse_edge(c[rng.gen_range(0..c.len())]).expect("collapsible");
    }
    let mut removed = EdgeSet::new();
    let mut cur = ge.clone();
    let mut back: Vec<usize> = (0..cur.n_edges()).collect();
    for _ in 0..rng.gen_range(0..=2) {
        let c = collapsible(&cur);
        if c.is_empty() || cur.n_edges() < 3 {
            break;
        }
        let e = c[rng.gen_range(0..c.len())];
        removed.insert(back[e]);
        back.remove(e);
        cur = cur.collapse_edge(e).expect("collapsible");
    }
    let (ep, _) = contract_edges(&ge, &removed).expect("forest");
    let f = random_filtered_screen(rng, &ep, 4);
    (ge, removed, random_point(rng, &f))
}

fn c3_limits() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut stages = 0;
    for i in 0..300 {
        let (ge, removed, pt) = limit_instance(&mut rng);
        let (_, back) = lib(contract_edges(&ge, &removed))?;
        let want: Vec<EdgeSet> = pt.screen.levels.iter().map(|l| l.iter().map(|&e| back[e]).collect()).collect();
        let ws: BTreeMap<usize, Q> = pt.weights.iter().enumerate().map(|(e, w)| (back[e], w.clone())).collect();
        let mut codes = vec![];
        for _ in 0..2 {
            let p = lib(construct_path(&ge, &removed, &pt, &mut rng))?;
            let lim = lib(limiting_point(&p))?;
            ensure(lim.levels_in_ambient() == want, || format!("triple {i}: levels differ"))?;
            ensure(lim.weights_in_ambient() == ws, || format!("triple {i}: weights differ"))?;
            codes.push(lib(lim.ambient_code())?);
            let tr = &lim.trace;
            let mut gone = EdgeSet::new();
            for k in 1..tr.d.len() {
                let parts = [&tr.c[k], &tr.z[k], &tr.b[k], &tr.d[k]];
                let total: usize = parts.iter().map(|s| s.len()).sum();
                let union: EdgeSet = parts.iter().flat_map(|s| s.iter().copied()).collect();
                ensure(total == tr.d[k - 1].len() && union == tr.d[k - 1], || format!("triple {i}: stage {k} not a partition"))?;
                gone.extend(tr.c[k].iter().copied());
                for tree in p.graph.edge_components(&gone) {
                    ensure(tree.len() + 1 == p.graph.vertices_of(&tree).len(), || format!("triple {i}: removed edges not a forest"))?;
                }
                stages += 1;
            }
        }
        ensure(codes[0] == codes[1], || format!("triple {i}: completion changes the limit"))?;
    }
    Ok(format!("300 triples, 2 completions each, {stages} recursion stages checked"))
}

fn c4_examples() -> Check {
    let g = graph();
    let all = g.all_edges();
    let a = lib(Screen::new(
        g.clone(),
        vec![all.clone(), range('a', 'k'), range('a', 'g'), range('i', 'k'), range('f', 'g'), range('b', 'e')],
    ))?;
    let mut ag_ik = range('a', 'g');
    ag_ik.extend(range('i', 'k'));
    let mut fg_be = range('f', 'g');
    fg_be.extend(range('b', 'e'));
    let a2 = lib(Screen::new(g.clone(), vec![all.clone(), range('a', 'k'), ag_ik, fg_be]))?;
    let names = |s: &str| -> EdgeSet { s.chars().map(edge).collect() };
    let expect = vec![all.difference(&range('a', 'k')).copied().collect(), names("h"), names("aijk"), names("bcdefg")];
    let f1 = lib(screen_to_filtered(&a))?;
    let f2 = lib(screen_to_filtered(&a2))?;
    ensure(f1.levels == expect && f2.levels == expect, || "the two screens do not give the stated filtered screen".into())?;
    ensure(full_boundary(&f1) == screen_boundary(&a) && screen_boundary(&a) == screen_boundary(&a2), || "boundaries differ".into())?;
    // two orders of the same deep levels project to the same point
    let ag = range('a', 'g');
    let ik = range('i', 'k');
    let top: EdgeSet = all.iter().copied().filter(|e| !ag.contains(e) && !ik.contains(e)).collect();
    let raw: Vec<Q> = (1..=15).map(qi).collect();
    let p1 = lib(ScreenPoint::from_raw(lib(FilteredScreen::new(g.clone(), vec![top.clone(), ag.clone(), ik.clone()]))?, &raw))?;
    let p2 = lib(ScreenPoint::from_raw(lib(FilteredScreen::new(g.clone(), vec![top, ik, ag]))?, &raw))?;
    ensure(lib(pi_equivalent(&p1, &p2))?, || "the two filtered screens have different images".into())?;
    let (img, tr) = lib(project_pi_traced(&p1))?;
    ensure(tr.moves[0].kind == MoveKind::Horocycle && tr.moves[1].kind == MoveKind::Cut, || format!("moves {:?}", tr.moves))?;
    let c = img.tokens.iter().position(|t| t.len() == 3).ok_or("no three-edge component")?;
    let w = |tok: &str| img.tokens[c].iter().position(|t| t == tok).map(|i| img.weights[c][i].clone());
    let (wa, wfg, wbe) = (qi(1), qi(6 + 7), qi(2 + 3 + 4 + 5));
    let tot = &wa + &wfg + &wbe;
    ensure(
        w("0") == Some(&wa / &tot) && w("5+6") == Some(&wfg / &tot) && w("1+2+3+4") == Some(&wbe / &tot),
        || "summed weights on the deep component differ".into(),
    )?;
    Ok("screens agree on 4 levels; images equal with weights 1:13:14".into())
}

fn c5_nests() -> Check {
    let gs = enumerate_stratum_graphs(MAX_STRATUM_EDGES);
    let mut nests = 0;
    for g in &gs {
        for f in all_nests(g, MAX_NEST_LEVEL) {
            lib(check_nest_calculus(&f))?;
            nests += 1;
        }
    }
    Ok(format!("{} stratum graphs, {nests} nests", gs.len()))
}

fn c6_orientations() -> Check {
    let gs = enumerate_stratum_graphs(MAX_STRATUM_EDGES);
    let mut realizable = 0;
    for g in &gs {
        realizable += lib(check_orientation_calculus(g))?;
    }
    Ok(format!("{} stratum graphs, {realizable} realizable orientations", gs.len()))
}

fn c7_chi_psi() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let types = [(0, 3), (0, 4), (1, 1)];
    let mut nodes = 0;
    for i in 0..200 {
        let (genus, s) = types[i % 3];
        let st = SurfaceType::new(genus, s);
        let g = loop {
            let cand = lib(random_quasi_triangulation(&mut rng, (-2 * st.euler) as usize, 0))?;
            if lib(cand.surface_type())? == st {
                break cand;
            }
        };
        let f = random_filtered_screen(&mut rng, &g, 3);
        let pt = random_point(&mut rng, &f);
        let im = lib(psi(&pt))?;
        let p = lib(project_pi(&pt))?;
        let (o, _) = lib(orientation_from_pairing(&p))?;
        ensure(o.is_realizable() && o.is_compatible(&im.nest), || format!("point {i}: orientation mismatch"))?;
        let back = lib(chi_combinatorial(&im.components, &im.ends, &im.cell))?;
        ensure(back == p, || format!("point {i}: χ∘ψ ≠ π"))?;
        nodes += im.stratum.n_nodes();
    }
    ensure(nodes > 0, || "no point left the open stratum".into())?;
    Ok(format!("200 points, {nodes} nodes in total"))
}

fn c8_census() -> Check {
    let all = lib(enumerate_fatgraphs(1, 1, &EnumOptions::default()))?;
    let by_val = |v: Vec<usize>| all.iter().filter(|c| c.valences() == v).map(|c| c.aut).collect::<Vec<_>>();
    ensure(by_val(vec![3, 3]) == vec![6], || format!("trivalent classes {:?}", by_val(vec![3, 3])))?;
    ensure(by_val(vec![4]) == vec![4], || format!("4-valent classes {:?}", by_val(vec![4])))?;
    ensure(all.len() == 2, || format!("{} classes", all.len()))?;
    let e = lib(orbifold_euler(1, 1))?;
    ensure(e == q(1, 6) - q(1, 4) && e == q(-1, 12), || format!("signed sum {e}"))?;
    let hz = lib(harer_zagier(1, 1))?;
    ensure(e == hz, || format!("oracle gives {hz}"))?;
    Ok(format!("aut 6 and 4, signed sum {e} = ζ(−1)"))
}

fn c9_topology() -> Check {
    let snap: serde_json::Value = serde_json::from_str(include_str!("data/pg_counts.json")).map_err(|e| e.to_string())?;
    let want: Vec<usize> = snap["complexes"]
        .as_array()
        .and_then(|a| a.iter().find(|c| c["genus"] == 0 && c["punctures"] == 3))
        .and_then(|c| serde_json::from_value(c["counts"].clone()).ok())
        .ok_or("snapshot missing")?;
    let cx = lib(assemble_pg_complex(0, 3, AssembleOptions::default()))?;
    for k in 2..cx.boundary.len() {
        ensure(cx.boundary_squared(k).is_empty(), || format!("∂² ≠ 0 in degree {k}"))?;
    }
    let r = lib(reduced_homology(&cx))?;
    ensure(r.iter().all(|&b| b == 0), || format!("reduced Betti numbers {r:?}"))?;
    ensure(cx.counts() == want, || format!("counts {:?}, snapshot {want:?}", cx.counts()))?;
    ensure(cx.euler_characteristic() == 1, || "Euler characteristic is not 1".into())?;
    Ok(format!("counts {want:?}, ∂² = 0, reduced homology 0"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 9] = [
        ("exact identities", Duration::from_secs(4), c1_identities),
        ("flip to q.c.d.", FLIP_BUDGET, c2_flip_to_qcd),
        ("limits round trip", LIMIT_BUDGET, c3_limits),
        ("example fidelity", EXAMPLE_BUDGET, c4_examples),
        ("nest calculus", NEST_BUDGET, c5_nests),
        ("orientation calculus", ORIENT_BUDGET, c6_orientations),
        ("χ∘ψ = π", CHI_PSI_BUDGET, c7_chi_psi),
        ("census anchors", CENSUS_BUDGET, c8_census),
        ("topology anchor", TOPOLOGY_BUDGET, c9_topology),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panic".into()))
        });
        let dt = t.elapsed();
        let r = r.and_then(|m| if dt <= *budget { Ok(m) } else { Err(format!("{m}; over budget {budget:?}")) });
        match r {
            Ok(m) => println!("PASS {} {name} ({:.2}s): {m}", i + 1, dt.as_secs_f64()),
            Err(m) => {
                failed += 1;
                println!("FAIL {} {name} ({:.2}s): {m}", i + 1, dt.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
