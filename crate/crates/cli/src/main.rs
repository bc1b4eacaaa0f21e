use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use skeleta::experiment::{run_experiment, ExperimentConfig, Mode};
use skeleta::okounkov::{fekete_limits, ks_uniformity, sminmax_gap, width_defect, SlopeFamily};
use skeleta::potential::{foster_terms, green, green_mu, resistance, uniformizing_constant, zhang_measure, Resistance};
use skeleta::rank::rank;
use skeleta::rational::{fmt_q, parse_q, Q};
use skeleta::reduction::reduce;
use skeleta::slope::{grd_failure, grid_for, SlopeStructureSpec, DEFAULT_STATE_CAP};
use skeleta::weierstrass::{midpoint_parts, weierstrass_parts, SlopeData};
use skeleta::{fixtures, Divisor, DivisorSpec, GraphSpec, MetricGraph, Point};

#[derive(Parser)]
#[command(name = "skeleta", version, about = "Potential and divisor theory on augmented metric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    TropicalSurrogate,
    Explicit,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::TropicalSurrogate => Mode::TropicalSurrogate,
            ModeArg::Explicit => Mode::Explicit,
        }
    }
}

#[derive(clap::Args)]
struct GraphArg {
    /// Graph JSON file, or a fixture name (circle, theta, dumbbell, ...).
    #[arg(long)]
    graph: String,
}

#[derive(Subcommand)]
enum Command {
    /// Check that the inputs parse and are consistent.
    Validate {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        divisor: Option<String>,
        /// Slope structure or slope data JSON.
        #[arg(long)]
        slopes: Option<PathBuf>,
    },
    /// The canonical divisor K_X.
    Canonical {
        #[command(flatten)]
        graph: GraphArg,
    },
    /// The canonical admissible measure and its constant.
    Zhang {
        #[command(flatten)]
        graph: GraphArg,
    },
    /// Effective resistance between two points, or ρ_e for every edge.
    Resistance {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, requires = "to")]
        from: Option<String>,
        #[arg(long, requires = "from")]
        to: Option<String>,
    },
    /// g_z(x, y), or the admissible Green function g_μ(x, y).
    Green {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, required_unless_present = "admissible")]
        z: Option<String>,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Use the canonical admissible measure instead of a base point.
        #[arg(long)]
        admissible: bool,
    },
    /// The reduced divisor at a point, with its witness function.
    Reduce {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        divisor: String,
        #[arg(long)]
        at: String,
    },
    /// Rank of a divisor, with effective divisors placed on a grid.
    Rank {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        divisor: String,
        /// Grid spacing; model vertices only if omitted.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Check property (*) of a slope structure on a grid.
    GrdCheck {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        divisor: String,
        #[arg(long)]
        slopes: PathBuf,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
    },
    /// The reduced Weierstrass divisor from slope data.
    Weierstrass {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        slopes: PathBuf,
        /// tropical-surrogate uses minimum slopes only.
        #[arg(long, value_enum, default_value = "explicit")]
        mode: ModeArg,
    },
    /// Fekete limits, width defect and uniformity of a slope family.
    Okounkov {
        #[arg(long)]
        slopes: PathBuf,
        #[arg(long)]
        n_max: Option<u64>,
    },
    /// The equidistribution experiment.
    Equidist {
        /// Full configuration; the other flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        divisor: Option<String>,
        #[arg(long)]
        n_max: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Slope data files (explicit mode), one per n.
        #[arg(long, num_args = 1..)]
        slopes: Vec<PathBuf>,
        /// Bin length of the binned ℓ1 statistic.
        #[arg(long)]
        grid: Option<String>,
        /// Spacing of the surrogate model carrying μ_n.
        #[arg(long)]
        model_step: Option<String>,
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<u64>,
        /// Directory receiving report.json and report.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_graph(arg: &str) -> Result<MetricGraph> {
    let p = Path::new(arg);
    if p.exists() {
        let spec: GraphSpec = serde_json::from_str(&read(p)?).with_context(|| format!("parsing {arg}"))?;
        return Ok(spec.build()?);
    }
    fixtures::by_name(arg).with_context(|| format!("{arg} is neither a file nor a fixture name"))
}

/// A JSON file, or inline `point:coeff` pairs such as `x:2,e1@1/2:-1`.
fn load_divisor(arg: &str, g: &MetricGraph) -> Result<Divisor> {
    let p = Path::new(arg);
    if p.exists() {
        let spec: DivisorSpec = serde_json::from_str(&read(p)?).with_context(|| format!("parsing {arg}"))?;
        return Ok(spec.resolve(g)?);
    }
    let mut d = Divisor::zero();
    for part in arg.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (pt, c) = part
            .rsplit_once(':')
            .with_context(|| format!("expected point:coefficient, got {part}"))?;
        let c: i64 = c.parse().with_context(|| format!("coefficient in {part}"))?;
        d.add_at(g.parse_point(pt)?, c);
    }
    Ok(d)
}

fn parse_rational(s: &str) -> Result<Q> {
    parse_q(s).map_err(|e| anyhow::anyhow!("bad rational {s}: {e:?}"))
}

fn grid_points(g: &MetricGraph, step: Option<&str>) -> Result<Vec<Point>> {
    Ok(match step {
        Some(s) => g.refine_uniform(&parse_rational(s)?).origin,
        None => (0..g.num_vertices()).map(Point::Vertex).collect(),
    })
}

fn resistance_str(r: &Resistance) -> String {
    r.finite().map_or_else(|| "inf".to_string(), fmt_q)
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { graph, divisor, slopes } => {
            let g = load_graph(&graph.graph)?;
            let (betti, genus) = g.genus();
            let mut out = json!({
                "vertices": g.num_vertices(),
                "edges": g.num_edges(),
                "betti": betti,
                "genus": genus,
            });
            if let Some(d) = divisor {
                out["degree"] = json!(load_divisor(&d, &g)?.degree());
            }
            if let Some(path) = slopes {
                let text = read(&path)?;
                if let Ok(spec) = serde_json::from_str::<SlopeStructureSpec>(&text) {
                    spec.resolve(&g)?.validate(&g)?;
                    out["slopes"] = json!("slope structure");
                } else {
                    let data: SlopeData = serde_json::from_str(&text)
                        .with_context(|| format!("{} is neither a slope structure nor slope data", path.display()))?;
                    data.validate()?;
                    out["slopes"] = json!("slope data");
                }
            }
            print(&out);
        }
        Command::Canonical { graph } => {
            let g = load_graph(&graph.graph)?;
            let k = g.canonical_divisor();
            print(&json!({"degree": k.degree(), "divisor": k.to_spec(&g)}));
        }
        Command::Zhang { graph } => {
            let g = load_graph(&graph.graph)?;
            let mu = zhang_measure(&g)?;
            let c = uniformizing_constant(&g, &mu)?;
            print(&json!({
                "mass": fmt_q(&mu.mass()),
                "constant": fmt_q(&c),
                "measure": mu.to_spec(&g),
            }));
        }
        Command::Resistance { graph, from, to } => {
            let g = load_graph(&graph.graph)?;
            if let (Some(a), Some(b)) = (from, to) {
                let r = resistance(&g, &g.parse_point(&a)?, &g.parse_point(&b)?)?;
                print(&json!({"resistance": resistance_str(&r)}));
            } else {
                let targets = foster_terms(&g);
                let rows: Vec<Value> = (0..g.num_edges())
                    .map(|e| {
                        json!({
                            "edge": g.edge(e).id,
                            "length": fmt_q(&g.edge(e).length),
                            "rho": resistance_str(&skeleta::potential::edge_resistance(&g, e)),
                            "foster": fmt_q(&targets[e]),
                        })
                    })
                    .collect();
                print(&json!(rows));
            }
        }
        Command::Green { graph, z, x, y, admissible } => {
            let g = load_graph(&graph.graph)?;
            let (x, y) = (g.parse_point(&x)?, g.parse_point(&y)?);
            let v = if admissible {
                green_mu(&g, &zhang_measure(&g)?, &x, &y)?
            } else {
                let z = g.parse_point(z.as_deref().expect("required by clap"))?;
                green(&g, &z, &x, &y)?
            };
            print(&json!({"green": fmt_q(&v)}));
        }
        Command::Reduce { graph, divisor, at } => {
            let g = load_graph(&graph.graph)?;
            let d = load_divisor(&divisor, &g)?;
            let red = reduce(&g, &d, &g.parse_point(&at)?)?;
            print(&json!({
                "reduced": red.divisor.to_spec(&g),
                "witness": red.witness.to_spec(&g),
            }));
        }
        Command::Rank { graph, divisor, grid } => {
            let g = load_graph(&graph.graph)?;
            let d = load_divisor(&divisor, &g)?;
            let mut pts = grid_points(&g, grid.as_deref())?;
            pts.extend(d.support().cloned());
            pts.sort();
            pts.dedup();
            print(&json!({"rank": rank(&g, &d, &pts)?}));
        }
        Command::GrdCheck { graph, divisor, slopes, grid, cap } => {
            let g = load_graph(&graph.graph)?;
            let d = load_divisor(&divisor, &g)?;
            let spec: SlopeStructureSpec = serde_json::from_str(&read(&slopes)?)?;
            let s = spec.resolve(&g)?;
            let model = grid_for(&g, &d, &grid_points(&g, grid.as_deref())?);
            let failure = grd_failure(&g, &d, &s, &model, cap)?;
            let ok = failure.is_none();
            print(&json!({
                "grd": ok,
                "failing_divisor": failure.map(|e| e.to_spec(&g)),
            }));
            if !ok {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Weierstrass { graph, slopes, mode } => {
            let g = load_graph(&graph.graph)?;
            let data: SlopeData = serde_json::from_str(&read(&slopes)?)?;
            let parts = match Mode::from(mode) {
                Mode::Explicit => weierstrass_parts(&g, &data)?,
                Mode::TropicalSurrogate => midpoint_parts(&g, &data)?,
            };
            let total = parts.total();
            let atoms: Vec<Value> = total
                .iter()
                .map(|(p, c)| json!({"point": g.point_name(p), "c": fmt_q(c)}))
                .collect();
            print(&json!({
                "degree": fmt_q(&total.degree()),
                "divisor_term": fmt_q(&parts.divisor_term.degree()),
                "genus_term": fmt_q(&parts.genus_term.degree()),
                "valence_term": fmt_q(&parts.valence_term.degree()),
                "slope_term": fmt_q(&parts.slope_term.degree()),
                "atoms": atoms,
            }));
        }
        Command::Okounkov { slopes, n_max } => {
            let fam: SlopeFamily = serde_json::from_str(&read(&slopes)?)?;
            fam.validate()?;
            let n = match n_max {
                Some(n) => n,
                None => *fam.lists.keys().last().context("empty family")?,
            };
            let l = fam.list(n)?;
            let a = Q::from_integer(l[0].into()) / Q::from_integer((n as i64).into());
            let b = &a + Q::from_integer(fam.d.into());
            print(&json!({
                "fekete": fekete_limits(&fam)?,
                "width_defect": fmt_q(&width_defect(&fam, n)?),
                "sminmax_gap": fmt_q(&sminmax_gap(&fam, n)?),
                "ks": fmt_q(&ks_uniformity(&fam, n, &a, &b)?),
            }));
        }
        Command::Equidist {
            config,
            graph,
            divisor,
            n_max,
            mode,
            slopes,
            grid,
            model_step,
            snapshots,
            out,
            format,
        } => {
            let mut cfg: ExperimentConfig = match &config {
                Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => {
                    let (Some(gr), Some(dv), Some(n)) = (&graph, &divisor, n_max) else {
                        bail!("without --config, --graph, --divisor and --n-max are required");
                    };
                    let g = load_graph(gr)?;
                    let d = load_divisor(dv, &g)?;
                    ExperimentConfig::surrogate(g.to_spec(), d.to_spec(&g), n)
                }
            };
            if config.is_some() {
                if let Some(gr) = &graph {
                    cfg.graph = load_graph(gr)?.to_spec();
                }
                if let Some(dv) = &divisor {
                    let g = cfg.graph.build()?;
                    cfg.divisor = load_divisor(dv, &g)?.to_spec(&g);
                }
                if let Some(n) = n_max {
                    cfg.n_max = n;
                }
            }
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            for p in &slopes {
                cfg.slopes.push(serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?);
            }
            if let Some(h) = grid {
                cfg.h = parse_rational(&h)?;
            }
            if let Some(st) = model_step {
                cfg.model_step = parse_rational(&st)?;
            }
            if !snapshots.is_empty() {
                cfg.snapshots = snapshots;
            }
            let report = run_experiment(&cfg)?;
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("report.json"), report.to_json())?;
                fs::write(dir.join("report.csv"), report.to_csv())?;
            }
            match format {
                Format::Json => println!("{}", report.to_json()),
                Format::Csv => print!("{}", report.to_csv()),
            }
            for v in &report.verdicts {
                eprintln!("{:?}: {} ({})", v.status, v.name, v.detail);
            }
            if !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
