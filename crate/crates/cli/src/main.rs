use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spikelab::bioutput::{
    estimate_first_head_size, random_search, BallFamily, BiOutput, FixedRandomSet, GeometricBiOutput,
    ObjectiveConfig, ObjectiveScene,
};
use spikelab::geometry::Region;
use spikelab::mnist::{load_idx, run_demo, DemoConfig};
use spikelab::scene::{bundled, golden_rows, load_scene, parse_bioutputs, parse_scene, BoundScene, ModeSpec, Scene};
use spikelab::sequence::EfficiencyReport;
use spikelab::spiking::ContourConfig;
use spikelab::stats::{learns_regularities, z_score, SpikeCounts};

/// Spiking-function efficiency laboratory.
#[derive(Parser)]
#[command(name = "spikelab", version)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate candidate sequences of a scene.
    Eval(EvalArgs),
    /// Rank a scene's candidates by efficiency, then ability.
    Rank(RankArgs),
    /// Two-proportion z-score of M data spikes vs M' random spikes out of N.
    Zscore {
        m: u64,
        m_prime: u64,
        n: u64,
    },
    /// Bi-output objective of a candidate or a bi-output spec file.
    Objective(ObjectiveArgs),
    /// Evaluate all bundled scenes and compare with the golden table.
    #[command(name = "reproduce-appendix-d", alias = "golden")]
    Reproduce(OutputArgs),
    /// Max-correlation memorizer on IDX image files versus uniform noise.
    MnistDemo(MnistArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Expected,
    Mc,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene file, or the name of a bundled scene.
    #[arg(long)]
    scene: String,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Contour grid width; enables leveled counting.
    #[arg(long, requires = "contour_top")]
    contour_grid: Option<f64>,
    /// Contour top level.
    #[arg(long, requires = "contour_grid")]
    contour_top: Option<u32>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Candidates to evaluate; all when omitted.
    #[arg(long)]
    candidate: Vec<String>,
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Equivalence tolerance on total efficiency.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ObjectiveArgs {
    #[arg(long)]
    scene: String,
    /// Use this candidate's indicators as first heads.
    #[arg(long, conflicts_with = "spec")]
    candidate: Option<String>,
    /// JSON array of {"first": region, "second": region?, "size": n?}.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Size of the fixed random set.
    #[arg(long, default_value_t = FixedRandomSet::DEFAULT_LEN)]
    fixed: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 50.0)]
    lambda: f64,
    #[arg(long)]
    alpha: Option<f64>,
    /// Run a random-search baseline over ball centers and radii.
    #[arg(long)]
    search: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MnistArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Use only the first k training images.
    #[arg(long)]
    subsample: Option<usize>,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.15)]
    threshold: f64,
    #[arg(long, default_value_t = 2.0)]
    tau1: f64,
    #[arg(long, default_value_t = 1e-6)]
    tau2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Mismatch(String),
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let input = e.chain().any(|c| {
            matches!(
                c.downcast_ref::<spikelab::Error>(),
                Some(
                    spikelab::Error::Schema { .. }
                        | spikelab::Error::InvalidConfig(_)
                        | spikelab::Error::Io(_)
                        | spikelab::Error::Idx { .. }
                        | spikelab::Error::IdxTruncated { .. }
                        | spikelab::Error::InvalidCounts(_)
                        | spikelab::Error::DegenerateZ { .. }
                )
            ) || c.downcast_ref::<std::io::Error>().is_some()
        });
        if input {
            Failure::Input(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Eval(a) => eval(a)?,
        Command::Rank(a) => rank(a)?,
        Command::Zscore { m, m_prime, n } => {
            let z = SpikeCounts::new(m, m_prime, n).and_then(z_score).map_err(anyhow::Error::from)?;
            println!("{z:.2}");
        }
        Command::Objective(a) => objective(a)?,
        Command::Reproduce(a) => return reproduce(a),
        Command::MnistDemo(a) => mnist(a)?,
    }
    Ok(())
}

fn read_scene(spec: &str) -> Result<(Scene, Option<PathBuf>)> {
    let path = Path::new(spec);
    if path.exists() {
        let scene = load_scene(path).with_context(|| format!("reading scene {}", path.display()))?;
        Ok((scene, path.parent().map(Path::to_path_buf)))
    } else if let Some(text) = bundled(spec) {
        Ok((parse_scene(text.as_bytes())?, None))
    } else {
        Err(spikelab::Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no scene file or bundled scene named {spec:?}"),
        ))
        .into())
    }
}

fn prepare(args: &SceneArgs) -> Result<(Scene, BoundScene)> {
    let (mut scene, base) = read_scene(&args.scene)?;
    let e = &mut scene.eval;
    if let Some(m) = args.mode {
        e.mode = match m {
            Mode::Expected => ModeSpec::Expected,
            Mode::Mc => ModeSpec::Mc,
        };
    }
    if let Some(n) = args.n {
        e.n = n;
    }
    if let Some(s) = args.seed {
        e.seed = s;
    }
    if let Some(a) = args.alpha {
        e.alpha = a;
    }
    if let (Some(grid), Some(top)) = (args.contour_grid, args.contour_top) {
        e.contour = Some(ContourConfig { grid, top_level: top });
    }
    e.validate()?;
    let bound = scene.bind(base.as_deref())?;
    Ok((scene, bound))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            let written = stdout
                .write_all(text.as_bytes())
                .and_then(|_| if text.ends_with('\n') { Ok(()) } else { stdout.write_all(b"\n") });
            match written {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Evaluated {
    candidate: String,
    z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    learns_regularities: Option<bool>,
    report: EfficiencyReport,
}

/// Writes a report's CSV rows with the candidate name as a leading column.
fn tagged_csv(w: &mut csv::Writer<Vec<u8>>, tag: &str, report: &EfficiencyReport, header: &mut bool) -> Result<()> {
    let csv = report.to_csv();
    let mut lines = csv.lines();
    let head = lines.next().unwrap_or_default();
    if !*header {
        w.write_record(std::iter::once("candidate").chain(head.split(',')))?;
        *header = true;
    }
    for line in lines {
        w.write_record(std::iter::once(tag).chain(line.split(',')))?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (scene, bound) = prepare(&a.scene)?;
    let opts = scene.eval.options();
    let names: Vec<String> = if a.candidate.is_empty() {
        scene.candidates.iter().map(|c| c.name.clone()).collect()
    } else {
        a.candidate.clone()
    };
    let thresholds = match (a.tau2, scene.eval.thresholds) {
        (Some(t2), t) => Some((a.tau1.or(t.map(|t| t.tau1)).unwrap_or(2.0), t2)),
        (None, Some(t)) => Some((a.tau1.unwrap_or(t.tau1), t.tau2)),
        (None, None) => None,
    };
    let mut results = Vec::new();
    for name in &names {
        let report = bound.evaluate(name, &opts)?;
        let z = z_score(SpikeCounts {
            data: report.total.data_spikes,
            random: report.total.random_spikes,
            n: report.n(),
        })
        .ok();
        let verdict = match (z, thresholds) {
            (Some(z), Some((t1, t2))) => Some(learns_regularities(z, report.total.size, t1, t2)),
            _ => None,
        };
        results.push(Evaluated {
            candidate: name.clone(),
            z,
            learns_regularities: verdict,
            report,
        });
    }
    let text = match a.output.format {
        Format::Json if results.len() == 1 => serde_json::to_string_pretty(&results[0])?,
        Format::Json => serde_json::to_string_pretty(&results)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = false;
            for r in &results {
                tagged_csv(&mut w, &r.candidate, &r.report, &mut header)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?
        }
    };
    emit(&a.output.out, &text)
}

#[derive(Serialize)]
struct RankRow<'a> {
    rank: usize,
    candidate: &'a str,
    bucket: usize,
    se: f64,
    ability: f64,
    size: u64,
}

fn rank(a: RankArgs) -> Result<()> {
    let (scene, bound) = prepare(&a.scene)?;
    let tol = a.tol.unwrap_or_else(|| scene.eval.tol());
    let ranked = bound.rank(&scene.eval.options(), tol)?;
    let text = match a.output.format {
        Format::Json => serde_json::to_string_pretty(&ranked)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for (i, r) in ranked.iter().enumerate() {
                w.serialize(RankRow {
                    rank: i + 1,
                    candidate: &r.name,
                    bucket: r.bucket,
                    se: r.report.total.se,
                    ability: r.report.total.ability,
                    size: r.report.total.size,
                })?;
            }
            String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?
        }
    };
    emit(&a.output.out, &text)
}

#[derive(Serialize)]
struct ObjectiveRow {
    first_data: u64,
    first_random: u64,
    second_data: u64,
    second_random: u64,
    second_fixed: u64,
    size: u64,
    estimated_size: f64,
}

#[derive(Serialize)]
struct ObjectiveOut {
    objective: f64,
    n: u64,
    fixed_len: u64,
    config: ObjectiveConfig,
    functions: Vec<ObjectiveRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    search: Option<spikelab::bioutput::SearchResult>,
}

fn objective(a: ObjectiveArgs) -> Result<()> {
    let (scene, base) = read_scene(&a.scene)?;
    let bound = scene.bind(base.as_deref())?;
    let fns: Vec<GeometricBiOutput> = match (&a.candidate, &a.spec) {
        (Some(c), None) => bound.bioutputs(c)?,
        (None, Some(p)) => parse_bioutputs(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        _ => bail!(spikelab::Error::InvalidConfig("pass exactly one of --candidate or --spec".into())),
    };
    let dim = bound.dist.space().dim();
    let cfg = ObjectiveConfig {
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        lambda: a.lambda,
        alpha: a.alpha.unwrap_or(scene.eval.alpha),
        dim,
        estimate_sizes: true,
    };
    cfg.validate()?;
    let n = usize::try_from(a.n).map_err(|_| spikelab::Error::InvalidConfig("n too large".into()))?;
    let world = ObjectiveScene::draw(&bound.dist, &bound.null, n, a.fixed, a.seed)?;
    let refs: Vec<&dyn BiOutput> = fns.iter().map(|f| f as &dyn BiOutput).collect();
    let (value, counts) = world.evaluate(&refs, &cfg)?;
    let functions = counts
        .per_function
        .iter()
        .zip(&fns)
        .map(|(c, f)| ObjectiveRow {
            first_data: c.first_data,
            first_random: c.first_random,
            second_data: c.second_data,
            second_random: c.second_random,
            second_fixed: c.second_fixed,
            size: f.size,
            estimated_size: estimate_first_head_size(f.size, dim, c.second_fixed, c.second_data, c.second_random, cfg.lambda),
        })
        .collect();
    let search = match a.search {
        None => None,
        Some(budget) => {
            let initial = fns
                .iter()
                .map(|f| match (&f.first, &f.second) {
                    (Region::Ball(b), None) if b.center.len() == 2 => Ok([b.center[0], b.center[1], b.radius]),
                    _ => Err(spikelab::Error::Unsupported("search needs planar ball heads without second heads".into())),
                })
                .collect::<spikelab::Result<Vec<_>>>()?;
            let family = BallFamily { initial, step: a.step };
            Some(random_search(&family, &world, &cfg, budget, a.seed)?)
        }
    };
    let out = ObjectiveOut {
        objective: value,
        n: counts.n,
        fixed_len: counts.fixed_len,
        config: cfg,
        functions,
        search,
    };
    emit(&a.out, &serde_json::to_string_pretty(&out)?)
}

#[derive(Serialize)]
struct GoldenCheck {
    scene: String,
    candidate: String,
    quantity: String,
    expected: f64,
    actual: f64,
    tol: f64,
    ok: bool,
}

fn reproduce(a: OutputArgs) -> std::result::Result<(), Failure> {
    let run = || -> Result<Vec<GoldenCheck>> {
        let mut checks = Vec::new();
        for row in golden_rows()? {
            let text = bundled(&row.scene).ok_or_else(|| anyhow!("golden row names unknown scene {}", row.scene))?;
            let scene = parse_scene(text.as_bytes())?;
            let report = scene.bind(None)?.evaluate(&row.candidate, &scene.eval.options())?;
            let actual = row.quantity.of(&report);
            checks.push(GoldenCheck {
                ok: (actual - row.value).abs() <= row.tol,
                quantity: format!("{:?}", row.quantity).to_lowercase(),
                scene: row.scene,
                candidate: row.candidate,
                expected: row.value,
                actual,
                tol: row.tol,
            });
        }
        Ok(checks)
    };
    let checks = run()?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&checks).map_err(anyhow::Error::from)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for c in &checks {
                w.serialize(c).map_err(anyhow::Error::from)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?).map_err(anyhow::Error::from)?
        }
    };
    emit(&a.out, &text)?;
    let bad = checks.iter().filter(|c| !c.ok).count();
    if bad > 0 {
        return Err(Failure::Mismatch(format!("{bad} of {} golden values out of tolerance", checks.len())));
    }
    eprintln!("{} golden values matched", checks.len());
    Ok(())
}

fn mnist(a: MnistArgs) -> Result<()> {
    let train = load_idx(&a.train).with_context(|| format!("loading {}", a.train.display()))?;
    let test = load_idx(&a.test).with_context(|| format!("loading {}", a.test.display()))?;
    let report = run_demo(
        &train,
        &test,
        &DemoConfig {
            threshold: a.threshold,
            noise_seed: a.seed,
            subsample: a.subsample,
            tau1: a.tau1,
            tau2: a.tau2,
        },
    )?;
    emit(&a.out, &serde_json::to_string_pretty(&report)?)
}
