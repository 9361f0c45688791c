use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pointdon::data::{self, full_batch, make_batch, Dataset, Manifest, MANIFEST_FILE};
use pointdon::geometry::{sample_volume, vec3, PointSet, Shape, TriMesh, FIELD_NAMES};
use pointdon::train::{
    evaluate, predict_chunked, predict_points, train, Checkpoint, EvalMode, MetricsReport,
    TrainOutputs, CHECKPOINT_MAGIC,
};
use pointdon::{ExperimentConfig, LoadCondition, Split};

/// Thread count for data generation and evaluation; defaults to 1 so runs are
/// reproducible.
const THREADS_ENV: &str = "POINTDON_THREADS";

#[derive(Parser)]
#[command(name = "pointdon", version, about = "Point-cloud operator surrogates for 3D field prediction")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment TOML with [model], [data] and [train] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override an existing config key, e.g. `--set train.lr=5e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self, seed_key: &str) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("{seed_key}={s}"));
        }
        Ok(match &self.config {
            Some(p) => ExperimentConfig::load(p, &overrides)?,
            None => ExperimentConfig::parse("", &overrides)?,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModeArg {
    /// Sampled, plus full resolution for operator models.
    Auto,
    Sampled,
    Full,
}

#[derive(Subcommand)]
enum Verb {
    /// Write a synthetic dataset.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (defaults to `data.dataset`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Signed distances of an OBJ mesh at probe points, as CSV.
    Sdf {
        #[arg(long)]
        mesh: PathBuf,
        /// A probe `x,y,z`; repeatable.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        probe: Vec<[f64; 3]>,
        /// CSV with columns x,y,z.
        #[arg(long)]
        probes: Option<PathBuf>,
        /// Additionally sample this many interior points.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; writes checkpoint.pdc, history.csv and config.toml.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory (defaults to `data.dataset`).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of a checkpoint per field and load label, as CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict fields for a dataset sample or a mesh with a load condition.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, requires = "sample", conflicts_with = "mesh")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        sample: Option<String>,
        #[arg(long, requires_all = ["mass", "force", "direction"])]
        mesh: Option<PathBuf>,
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        force: Option<f64>,
        /// Load direction `x,y,z`; normalized before use.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        direction: Option<[f64; 3]>,
        /// Interior points sampled from the mesh.
        #[arg(long, default_value_t = 2048)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a dataset directory, manifest or checkpoint.
    Inspect { path: PathBuf },
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got `{s}`"));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|e| format!("`{p}`: {e}"))?;
    }
    Ok(v)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        },
        Err(_) => 1,
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(verb: Verb) -> Result<()> {
    match verb {
        Verb::Generate { cfg, out } => generate(&cfg, out),
        Verb::Sdf {
            mesh,
            probe,
            probes,
            sample,
            seed,
            out,
        } => sdf(&mesh, probe, probes.as_deref(), sample, seed, out.as_deref()),
        Verb::Train { cfg, dataset, out } => train_cmd(&cfg, dataset, &out),
        Verb::Eval {
            checkpoint,
            dataset,
            split,
            mode,
            seed,
            out,
        } => eval(&checkpoint, &dataset, split, mode, seed, out.as_deref()),
        Verb::Predict {
            checkpoint,
            dataset,
            sample,
            mesh,
            mass,
            force,
            direction,
            nodes,
            seed,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let (coords, fields) = match (dataset, sample, mesh) {
                (Some(ds), Some(id), None) => predict_sample(&ckpt, &ds, &id, seed)?,
                (None, None, Some(mesh)) => {
                    let load = LoadCondition::new(
                        mass.unwrap(),
                        force.unwrap(),
                        vec3::normalized(direction.unwrap()),
                    )?;
                    predict_mesh(&ckpt, &mesh, &load, nodes, seed)?
                }
                _ => bail!("predict needs either --dataset with --sample, or --mesh with --mass, --force and --direction"),
            };
            let mut w = csv_writer(out.as_deref())?;
            w.write_record(["x", "y", "z", "u_x", "u_y", "u_z", "von_mises"])?;
            for (p, f) in coords.iter().zip(&fields) {
                w.write_record(p.iter().chain(f).map(|v| v.to_string()))?;
            }
            w.flush()?;
            Ok(())
        }
        Verb::Inspect { path } => inspect(&path),
    }
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn generate(cfg: &ConfigArgs, out: Option<PathBuf>) -> Result<()> {
    let mut config = cfg.load("data.seed")?;
    if let Some(out) = out {
        config.data.dataset = out;
    }
    let dir = &config.data.dataset;
    if dir.join(MANIFEST_FILE).exists() {
        bail!("{} already contains a dataset", dir.display());
    }
    let ds = data::generate_synthetic(&config.data.generator, config.data.seed, dir)?;
    config.echo(dir)?;
    let m = &ds.manifest;
    println!(
        "wrote {} samples ({} train, {} val) to {}",
        ds.len(),
        m.count(Split::Train),
        m.count(Split::Val),
        dir.display()
    );
    Ok(())
}

fn read_probes(path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{}: missing column `{name}`", path.display()))
    };
    let idx = [col("x")?, col("y")?, col("z")?];
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut p = [0.0; 3];
        for k in 0..3 {
            let cell = rec.get(idx[k]).unwrap_or("");
            p[k] = cell
                .trim()
                .parse()
                .with_context(|| format!("{} row {}: `{cell}`", path.display(), line + 2))?;
        }
        out.push(p);
    }
    Ok(out)
}

fn load_mesh(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TriMesh::from_obj(&text).with_context(|| path.display().to_string())
}

fn sdf(
    mesh: &Path,
    mut probes: Vec<[f64; 3]>,
    file: Option<&Path>,
    sample: Option<usize>,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let shape = Shape::Mesh(load_mesh(mesh)?);
    if let Some(f) = file {
        probes.extend(read_probes(f)?);
    }
    let mut points = PointSet::with_sdf(&shape, probes);
    if let Some(n) = sample {
        let s = sample_volume(&shape, n, seed)?;
        points.coords.extend(s.coords);
        points.sdf.extend(s.sdf);
    }
    if points.is_empty() {
        bail!("no points: pass --probe, --probes or --sample");
    }
    let mut w = csv_writer(out)?;
    w.write_record(["x", "y", "z", "sdf"])?;
    for (p, d) in points.coords.iter().zip(&points.sdf) {
        w.write_record([p[0], p[1], p[2], *d].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn train_cmd(cfg: &ConfigArgs, dataset: Option<PathBuf>, out: &Path) -> Result<()> {
    let mut config = cfg.load("train.seed")?;
    if let Some(d) = dataset {
        config.data.dataset = d;
    }
    let ds = Dataset::open(&config.data.dataset)
        .with_context(|| format!("opening dataset {}", config.data.dataset.display()))?;
    config.echo(out)?;
    let outputs = TrainOutputs {
        checkpoint: Some(out.join("checkpoint.pdc")),
        history: Some(out.join("history.csv")),
    };
    let start = std::time::Instant::now();
    let trainer = train(config.model.clone(), &config.train, &ds, &outputs, |row| {
        let val = row.val_loss.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
        eprintln!(
            "iter {:>6}  train {:.6e}  val {val}  ({:.0}s)",
            row.iteration,
            row.train_loss,
            start.elapsed().as_secs_f64()
        );
    })?;
    println!(
        "trained {} for {} iterations ({} parameters); outputs in {}",
        config.model.architecture.name(),
        trainer.iteration,
        trainer.model.parameter_count(),
        out.display()
    );
    Ok(())
}

fn eval(
    checkpoint: &Path,
    dataset: &Path,
    split: SplitArg,
    mode: ModeArg,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = ckpt.model()?;
    let mut ds = Dataset::open(dataset)?;
    // Normalization always follows the statistics the model was trained with.
    ds.manifest.stats = Some(ckpt.stats);
    let split = match split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
    };
    let modes = match mode {
        ModeArg::Sampled => vec![EvalMode::Sampled],
        ModeArg::Full => vec![EvalMode::Full],
        ModeArg::Auto if model.architecture().is_operator() => vec![EvalMode::Sampled, EvalMode::Full],
        ModeArg::Auto => vec![EvalMode::Sampled],
    };
    let mut report = MetricsReport::default();
    for m in modes {
        report.merge(evaluate(&model, &ds, split, m, seed)?);
    }
    let mut w = csv_writer(out)?;
    w.write_record(pointdon::train::REPORT_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.mode.name().to_string(),
            r.field.to_string(),
            r.label.name().to_string(),
            r.n.to_string(),
            r.samples.to_string(),
            r.mae.to_string(),
            r.rmse.to_string(),
            r.r2.to_string(),
        ])?;
    }
    w.flush()?;
    for mode in [EvalMode::Sampled, EvalMode::Full] {
        if let Some(r2) = report.mean_r2(mode) {
            let per: Vec<String> = report
                .pooled
                .iter()
                .filter(|p| p.mode == mode)
                .map(|p| format!("{} {:.4}", p.field, p.r2))
                .collect();
            eprintln!("{}: mean R² {r2:.4} ({})", mode.name(), per.join(", "));
        }
    }
    Ok(())
}

type Rows = (Vec<[f64; 3]>, Vec<[f64; 4]>);

fn predict_sample(ckpt: &Checkpoint, dataset: &Path, id: &str, seed: u64) -> Result<Rows> {
    let model = ckpt.model()?;
    let mut ds = Dataset::open(dataset)?;
    ds.manifest.stats = Some(ckpt.stats);
    let head = model.spec.head();
    let batch = if model.architecture().is_operator() {
        let b = full_batch(&ds, id, head)?;
        let input = pointdon::train::full_resolution_input(&model, b.input.clone(), seed)?;
        (b, input)
    } else {
        let b = make_batch(&ds, &[id], model.spec.points, seed, head)?;
        let input = b.input.clone();
        (b, input)
    };
    let (b, input) = batch;
    let y = predict_chunked(&model, &input, pointdon::train::DEFAULT_CHUNK)?;
    // Normalized coordinates are mapped back for the output.
    let coords = b
        .input
        .coords
        .data()
        .chunks_exact(3)
        .map(|c| std::array::from_fn(|k| ckpt.stats.coords[k].from_range(c[k], (-1.0, 1.0))))
        .collect();
    let fields = y
        .data()
        .chunks_exact(4)
        .map(|v| ckpt.stats.denormalize_targets([v[0], v[1], v[2], v[3]], head))
        .collect();
    Ok((coords, fields))
}

fn predict_mesh(ckpt: &Checkpoint, mesh: &Path, load: &LoadCondition, nodes: usize, seed: u64) -> Result<Rows> {
    let model = ckpt.model()?;
    let shape = Shape::Mesh(load_mesh(mesh)?);
    let n = if model.architecture().is_operator() { nodes } else { model.spec.points };
    let points = sample_volume(&shape, n, seed)?;
    let sdf = model.spec.use_sdf.then_some(points.sdf.as_slice());
    let p = predict_points(&model, &ckpt.stats, &points.coords, sdf, load, seed)?;
    Ok((p.coords, p.fields))
}

fn inspect(path: &Path) -> Result<()> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let head = {
        let mut buf = [0u8; 4];
        let mut f = std::fs::File::open(&manifest_path)
            .with_context(|| format!("opening {}", manifest_path.display()))?;
        std::io::Read::read(&mut f, &mut buf)?;
        buf
    };
    if &head == CHECKPOINT_MAGIC {
        let c = Checkpoint::load(path)?;
        let arch = c.spec.architecture;
        let count = c.params.scalar_count();
        println!("checkpoint   {}", path.display());
        println!("architecture {}", arch.name());
        println!("parameters   {count} (reference {})", arch.reference_parameter_count());
        println!("tensors      {}", c.params.len());
        println!("batchnorms   {}", c.norms.len());
        println!("iteration    {}", c.iteration);
        println!("seed         {}", c.seed);
        println!("latent       {}", c.spec.latent);
        println!("points       {}", c.spec.points);
        println!("inputs       mass={} sdf={}", c.spec.use_mass, c.spec.use_sdf);
        if let Some(last) = c.history.last() {
            let val = last.val_loss.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
            println!("last loss    train {:.6e} val {val}", last.train_loss);
        }
        return Ok(());
    }
    let m = Manifest::load(&manifest_path)?;
    println!("manifest     {}", manifest_path.display());
    println!("samples      {} ({} train, {} val)", m.samples.len(), m.count(Split::Train), m.count(Split::Val));
    println!("seed         {}", m.seed);
    if !m.generator_hash.is_empty() {
        println!("generator    {}", m.generator_hash);
    }
    for label in pointdon::LoadLabel::ALL {
        let n = m.samples.iter().filter(|s| s.label == label).count();
        println!("{:<12} {n}", label.name());
    }
    let (lo, hi) = m
        .samples
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), s| (lo.min(s.nodes), hi.max(s.nodes)));
    println!("nodes        {lo}..={hi}");
    if let Some(s) = &m.stats {
        for (name, mm) in FIELD_NAMES.iter().zip(&s.targets) {
            println!("{name:<12} [{:.6e}, {:.6e}]", mm.min, mm.max);
        }
    }
    Ok(())
}
