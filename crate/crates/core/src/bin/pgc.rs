//! Command line front end. Reads JSON from a file or stdin, writes one
//! deterministic document to stdout.
//!
//! Exit codes: 0 success, 2 malformed or invalid input, 3 cap exceeded,
//! 1 internal error.

use clap::{Parser, Subcommand, ValueEnum};
use pgcomplex::census::{
    assemble_pg_complex, enumerate_fatgraphs, harer_zagier, homology, orbifold_euler, reduced_homology, AssembleOptions, CellComplex,
    EnumOptions,
};
use pgcomplex::coords::{flip_to_qcd, values_from_json, values_to_csv, values_to_json, EdgeValue};
use pgcomplex::fatgraph::{Fatgraph, FatgraphJson};
use pgcomplex::limits::{limiting_point, SymbolicPathJson};
use pgcomplex::orient::{FlowState, OrientationJson, PartialOrientation};
use pgcomplex::pairing::{project_pi, PairedFatgraphJson};
use pgcomplex::rational::QJson;
use pgcomplex::screens::FilteredScreenJson;
use pgcomplex::strata::StratumGraphJson;
use pgcomplex::{Error, SurfaceType, Q};
use serde::Deserialize;
use serde_json::{json, Value};
use std::io::Read;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pgc", about = "Fatgraphs, screens, nests and the punctured fatgraph complex")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[arg(long, global = true)]
    genus: Option<usize>,
    #[arg(long, global = true)]
    punctures: Option<usize>,
    /// Half-edge bound for `census`, cell bound for `homology` and `export`.
    #[arg(long, global = true)]
    cap: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Forget puncture labels (full mapping class group quotient).
    #[arg(long, global = true)]
    quotient: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Dot,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a fatgraph, filtered screen, paired fatgraph, stratum graph or orientation.
    Validate { input: Option<String> },
    /// Flip a decorated quasi triangulation to its convex hull q.c.d.
    Flip { input: Option<String> },
    /// Limiting screen point of a symbolic path.
    Limit { input: Option<String> },
    /// Project a screen point to a partially paired fatgraph.
    Pi { input: Option<String> },
    /// Run the contraction flow on a partially oriented stratum graph.
    Nestflow { input: Option<String> },
    /// Fatgraph classes of type (g, s) and the orbifold Euler characteristic.
    Census {
        /// Include punctured vertices.
        #[arg(long)]
        punctured: bool,
    },
    /// Betti numbers of the cell complex.
    Homology,
    /// Cells and boundary maps of the cell complex.
    Export,
}

#[derive(Deserialize)]
struct FlipInput {
    graph: FatgraphJson,
    lambda: Vec<EdgeValue>,
}

#[derive(Deserialize)]
struct FlowInput {
    orientation: OrientationJson,
    #[serde(default)]
    lengths: Option<Vec<QJson>>,
}

enum Fail {
    Lib(Error),
    Input(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

type Out = Result<String, Fail>;

fn read_input(path: &Option<String>) -> Result<Value, Fail> {
    let mut s = String::new();
    match path {
        Some(p) if p != "-" => s = std::fs::read_to_string(p).map_err(|e| Fail::Input(format!("{p}: {e}")))?,
        _ => {
            std::io::stdin().read_to_string(&mut s).map_err(|e| Fail::Input(e.to_string()))?;
        }
    }
    serde_json::from_str(&s).map_err(|e| Fail::Input(format!("bad JSON: {e}")))
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T, Fail> {
    serde_json::from_value(v).map_err(|e| Fail::Input(format!("unexpected shape: {e}")))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn surface(cli: &Cli) -> Result<(usize, usize), Fail> {
    match (cli.genus, cli.punctures) {
        (Some(g), Some(s)) => Ok((g, s)),
        _ => Err(Fail::Input("--genus and --punctures are required".into())),
    }
}

fn unsupported(what: &str, f: Format) -> Fail {
    let name = match f {
        Format::Json => "json",
        Format::Dot => "dot",
        Format::Csv => "csv",
    };
    Fail::Input(format!("{what} has no {name} output"))
}

fn check_type(cli: &Cli, st: SurfaceType) -> Result<(), Fail> {
    if cli.genus.is_some_and(|g| g != st.genus) || cli.punctures.is_some_and(|s| s != st.punctures) {
        return Err(Error::Validation(format!("surface type is ({}, {})", st.genus, st.punctures)).into());
    }
    Ok(())
}

fn validate(cli: &Cli, v: Value) -> Out {
    let obj = v.as_object().ok_or_else(|| Fail::Input("expected a JSON object".into()))?;
    let report = if obj.contains_key("levels") {
        let s: FilteredScreenJson = parse(v)?;
        let p = s.to_point()?;
        let st = p.screen.graph.surface_type()?;
        check_type(cli, st)?;
        json!({"kind": "filtered_screen", "genus": st.genus, "punctures": st.punctures, "levels": p.screen.levels.len()})
    } else if obj.contains_key("components") {
        let p: PairedFatgraphJson = parse(v)?;
        let p = p.to_paired()?;
        json!({"kind": "paired_fatgraph", "components": p.components.len(), "pairs": p.pairs.len()})
    } else if obj.contains_key("tails") {
        let o: OrientationJson = parse(v)?;
        let o = PartialOrientation::from_json(&o)?;
        json!({"kind": "orientation", "realizable": o.is_realizable(), "conditions": [o.cond_i(), o.cond_ii(), o.cond_iii()]})
    } else if obj.contains_key("nodes") {
        let g: StratumGraphJson = parse(v)?;
        let g = pgcomplex::strata::StratumGraph::from_json(&g)?;
        json!({"kind": "stratum_graph", "vertices": g.n_vertices(), "edges": g.n_edges()})
    } else {
        let g: FatgraphJson = parse(v)?;
        let g = Fatgraph::from_json(&g)?;
        let st = g.surface_type()?;
        check_type(cli, st)?;
        json!({"kind": "fatgraph", "genus": st.genus, "punctures": st.punctures, "edges": g.n_edges(), "vertices": g.n_verts()})
    };
    match cli.format {
        Format::Json => Ok(pretty(&report)),
        f => Err(unsupported("validate", f)),
    }
}

fn flip(cli: &Cli, v: Value) -> Out {
    let inp: FlipInput = parse(v)?;
    let g = Fatgraph::from_json(&inp.graph)?;
    let lambda = values_from_json(&inp.lambda)?;
    let r = flip_to_qcd(&g, &lambda)?;
    Ok(match cli.format {
        Format::Json => pretty(&json!({
            "qcd": r.qcd.to_json(),
            "x": values_to_json(&r.x),
            "triangulation": r.triangulation.to_json(),
            "lambda": values_to_json(&r.lambda),
        })),
        Format::Dot => r.qcd.to_dot("qcd"),
        Format::Csv => values_to_csv(&r.x),
    })
}

fn limit(cli: &Cli, v: Value) -> Out {
    let p: SymbolicPathJson = parse(v)?;
    let l = limiting_point(&p.to_path()?)?;
    Ok(match cli.format {
        Format::Json => pretty(&json!({"point": FilteredScreenJson::from_point(&l.point), "edge_map": l.edge_map})),
        Format::Dot => l.screen.graph.to_dot("limit"),
        Format::Csv => values_to_csv(&l.point.weights),
    })
}

fn pi(cli: &Cli, v: Value) -> Out {
    let s: FilteredScreenJson = parse(v)?;
    let p = project_pi(&s.to_point()?)?;
    match cli.format {
        Format::Json => Ok(pretty(&serde_json::to_value(PairedFatgraphJson::from_paired(&p)).expect("serializable"))),
        Format::Dot => Ok(p.components.iter().enumerate().map(|(i, g)| g.to_dot(&format!("component{i}"))).collect()),
        f => Err(unsupported("pi", f)),
    }
}

fn nestflow(cli: &Cli, v: Value) -> Out {
    let inp: FlowInput = parse(v)?;
    let o = PartialOrientation::from_json(&inp.orientation)?;
    let lengths = match inp.lengths {
        Some(ls) => ls.iter().map(QJson::to_q).collect::<pgcomplex::Result<Vec<Q>>>()?,
        None => vec![Q::from_integer(1.into()); o.graph.n_edges()],
    };
    let steps = pgcomplex::orient::flow(&FlowState::new(o, lengths)?)?;
    let last = &steps.last().expect("flow has a start").0;
    match cli.format {
        Format::Json => {
            let rows: Vec<Value> = steps
                .iter()
                .map(|(s, ph)| {
                    json!({
                        "phase": ph.map(|p| format!("{p:?}")),
                        "tails": s.orientation.tails(),
                        "nest": s.nest().map(|n| n.f).ok(),
                    })
                })
                .collect();
            Ok(pretty(&json!({"steps": rows})))
        }
        Format::Dot => Ok(last.orientation.to_dot("flow")),
        f => Err(unsupported("nestflow", f)),
    }
}

fn census(cli: &Cli, punctured: bool) -> Out {
    let (g, s) = surface(cli)?;
    let opts = EnumOptions { punctured, max_half_edges: cli.cap.unwrap_or(12), ..Default::default() };
    let cls = enumerate_fatgraphs(g, s, &opts)?;
    let euler = if punctured { None } else { Some(orbifold_euler(g, s)?) };
    match cli.format {
        Format::Json => {
            let rows: Vec<Value> = cls
                .iter()
                .map(|c| json!({"graph": c.graph.to_json(), "aut": c.aut, "valences": c.valences(), "punctured": c.graph.punctured_vertices().len()}))
                .collect();
            let mut out = json!({"genus": g, "punctures": s, "classes": rows});
            if let Some(e) = euler {
                let fact: i64 = (1..=s as i64).product();
                out["orbifold_euler"] = json!(QJson::from(&e));
                out["labelled_euler"] = json!(QJson::from(&(e * Q::from_integer(fact.into()))));
                out["harer_zagier"] = json!(QJson::from(&harer_zagier(g, s)?));
            }
            Ok(pretty(&out))
        }
        Format::Csv => {
            let mut o = String::from("class,edges,vertices,punctured,aut,valences\n");
            for (i, c) in cls.iter().enumerate() {
                let vs: Vec<String> = c.valences().iter().map(|x| x.to_string()).collect();
                o.push_str(&format!(
                    "{i},{},{},{},{},{}\n",
                    c.graph.n_edges(),
                    c.graph.n_verts(),
                    c.graph.punctured_vertices().len(),
                    c.aut,
                    vs.join(" ")
                ));
            }
            Ok(o)
        }
        Format::Dot => Ok(cls.iter().enumerate().map(|(i, c)| c.graph.to_dot(&format!("class{i}"))).collect()),
    }
}

fn complex(cli: &Cli) -> Result<CellComplex, Fail> {
    let (g, s) = surface(cli)?;
    let mut opts = AssembleOptions { quotient: cli.quotient, ..Default::default() };
    if let Some(c) = cli.cap {
        opts.max_cells = c;
    }
    Ok(assemble_pg_complex(g, s, opts)?)
}

fn homology_cmd(cli: &Cli) -> Out {
    let cx = complex(cli)?;
    let b = homology(&cx)?;
    let r = reduced_homology(&cx)?;
    match cli.format {
        Format::Json => Ok(pretty(&json!({
            "cells": cx.counts(),
            "orientable_cells": cx.orientable_counts(),
            "betti": b,
            "reduced_betti": r,
        }))),
        Format::Csv => {
            let oc = cx.orientable_counts();
            let mut o = String::from("dim,cells,orientable_cells,betti\n");
            for k in 0..b.len() {
                o.push_str(&format!("{k},{},{},{}\n", cx.cells[k].len(), oc[k], b[k]));
            }
            Ok(o)
        }
        f => Err(unsupported("homology", f)),
    }
}

fn export(cli: &Cli) -> Out {
    let cx = complex(cli)?;
    match cli.format {
        Format::Json => Ok(pretty(&serde_json::to_value(cx.to_json()).expect("serializable"))),
        Format::Csv => {
            let mut o = String::from("dim,face,cell,coefficient\n");
            for (k, b) in cx.boundary.iter().enumerate() {
                for (&(i, j), v) in b {
                    o.push_str(&format!("{k},{i},{j},{v}\n"));
                }
            }
            Ok(o)
        }
        Format::Dot => {
            // Hasse diagram of one-step degenerations
            let mut o = String::from("digraph faces {\n  rankdir=BT;\n");
            for (k, cs) in cx.cells.iter().enumerate() {
                for (i, c) in cs.iter().enumerate() {
                    let style = if c.orientable { "" } else { ", style=dashed" };
                    o.push_str(&format!("  c{k}_{i} [label=\"{k}:{i}\"{style}];\n"));
                }
            }
            for &(fd, f, cd, c) in &cx.faces {
                o.push_str(&format!("  c{fd}_{f} -> c{cd}_{c};\n"));
            }
            o.push_str("}\n");
            Ok(o)
        }
    }
}

fn run(cli: &Cli) -> Out {
    match &cli.cmd {
        Cmd::Validate { input } => validate(cli, read_input(input)?),
        Cmd::Flip { input } => flip(cli, read_input(input)?),
        Cmd::Limit { input } => limit(cli, read_input(input)?),
        Cmd::Pi { input } => pi(cli, read_input(input)?),
        Cmd::Nestflow { input } => nestflow(cli, read_input(input)?),
        Cmd::Census { punctured } => census(cli, *punctured),
        Cmd::Homology => homology_cmd(cli),
        Cmd::Export => export(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(Fail::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Fail::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Cap(_) => 3,
                Error::Invariant(_) => 1,
                _ => 2,
            })
        }
    }
}
