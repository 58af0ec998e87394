//! The `scanpath` command line: train, generate, featurize, eval, render.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::eval::{
    cross_validate, deception_rate, group_by_class, ClassifierKind, CvConfig, ExtraTraining, TrainingSource,
};
use crate::features::{parse_grid, FeatureSpec, DEFAULT_BINS};
use crate::gaze::{self, Bounds, ClassKey, Dataset, FormatOptions};
use crate::generator::{generate_batch, GeneratorConfig};
use crate::model::{self, BuildConfig, UpdateRule};
use crate::render::render_svg;
use crate::synthetic;

#[derive(Debug, Parser)]
#[command(name = "scanpath", version, about = "Learn scan path models from gaze data and generate new scan paths")]
pub struct Cli {
    /// Seed for every random choice; runs with the same seed are reproducible.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Progress messages on standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    /// Worker threads (falls back to SCANPATH_THREADS, then all cores).
    #[arg(long, global = true, env = "SCANPATH_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a model from a gaze CSV.
    Train(TrainArgs),
    /// Generate scan paths from a model.
    Generate(GenerateArgs),
    /// Write heatmap or HOV feature vectors.
    Featurize(FeaturizeArgs),
    /// Cross-validation and deception experiments.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Draw recordings as SVG.
    Render(RenderArgs),
    /// Write a synthetic multi-class gaze dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassArg {
    Stimulus,
    Participant,
}

impl From<ClassArg> for ClassKey {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Stimulus => ClassKey::Stimulus,
            ClassArg::Participant => ClassKey::Participant,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Constant,
    Halving,
    LinearDecay,
}

impl From<RuleArg> for UpdateRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Constant => UpdateRule::Constant,
            RuleArg::Halving => UpdateRule::Halving,
            RuleArg::LinearDecay => UpdateRule::LinearDecay,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureArg {
    Heatmap,
    Hov,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassifierArg {
    Centroid,
    Mlp,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::Centroid => ClassifierKind::NearestCentroid,
            ClassifierArg::Mlp => ClassifierKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TrainOnArg {
    Real,
    Generated,
    Mixed,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Field delimiter of the CSV input.
    #[arg(long, default_value = ",")]
    pub delimiter: char,

    /// Spatial bounds `xmin,xmax,ymin,ymax` mapped onto [0,1]. Without it,
    /// data already inside the unit square is used as is and anything else
    /// is rescaled by its own extent.
    #[arg(long, value_parser = parse_bounds)]
    pub bounds: Option<Bounds>,

    /// Label field that defines classes.
    #[arg(long, value_enum, default_value = "participant")]
    pub classes: ClassArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub max_level: usize,
    #[arg(long)]
    pub clusters: usize,
    #[arg(long)]
    pub dyn_cluster: bool,
    #[arg(long, value_enum, default_value = "constant")]
    pub rule: RuleArg,
    /// Cross-recording matching radius (default: derived per level).
    #[arg(long)]
    pub merge_radius: Option<f64>,
    /// Variance fraction kept by each shape model.
    #[arg(long, default_value_t = 0.95)]
    pub pca_variance: f64,
    /// Scale of the time axis relative to space when clustering.
    #[arg(long, default_value_t = 1.0)]
    pub time_weight: f64,
    /// K-Means restarts per cluster.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Drop timestamps and build a 2-D model.
    #[arg(long)]
    pub ignore_time: bool,
    /// Train only on recordings with this class label.
    #[arg(long)]
    pub class: Option<String>,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub max_clusters: usize,
    #[arg(long)]
    pub max_subclusters: usize,
    #[arg(long)]
    pub dyn_cluster: bool,
    #[arg(long, value_enum, default_value = "constant")]
    pub rule: RuleArg,
    /// Choose nodes in proportion to their training support.
    #[arg(long)]
    pub support_weighted: bool,
    /// Keep points that leave the unit square.
    #[arg(long)]
    pub no_clamp: bool,
    /// Class label written on every generated recording.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, value_enum, default_value = "participant")]
    pub classes: ClassArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    #[arg(long = "feature", alias = "kind", value_enum, default_value = "heatmap")]
    pub feature: FeatureArg,
    /// Heatmap grid as WxH.
    #[arg(long, default_value = "16x16")]
    pub grid: String,
    /// HOV bin count.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// HOV counts segments instead of weighting them by length.
    #[arg(long)]
    pub unweighted: bool,
}

impl FeatureArgs {
    fn spec(&self) -> Result<FeatureSpec> {
        Ok(match self.feature {
            FeatureArg::Heatmap => {
                let (width, height) = parse_grid(&self.grid)?;
                FeatureSpec::Heatmap { width, height }
            }
            FeatureArg::Hov => FeatureSpec::Hov { bins: self.bins, length_weighted: !self.unweighted },
        })
    }
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub feature: FeatureArgs,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Stratified k-fold cross-validation on real data, optionally with
    /// generated training data.
    Cv(CvArgs),
    /// Share of generated recordings a classifier trained on real data
    /// attributes to their intended class.
    Deceive(DeceiveArgs),
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub feature: FeatureArgs,
    #[arg(long, value_enum, default_value = "centroid")]
    pub clf: ClassifierArg,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Generated recordings to add to every training fold (one or more CSVs).
    #[arg(long, num_args = 1..)]
    pub gen: Vec<PathBuf>,
    /// Training data per fold (default: mixed with --gen, real otherwise).
    #[arg(long, value_enum)]
    pub train_on: Option<TrainOnArg>,
    /// Augment the real training recordings.
    #[arg(long)]
    pub augment: bool,
    #[command(flatten)]
    pub input_args: InputArgs,
    /// Also write the report to this file.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeceiveArgs {
    #[arg(long)]
    pub real: PathBuf,
    /// Generated recordings, labelled with the class their model was trained on.
    #[arg(long, required = true, num_args = 1..)]
    pub gen: Vec<PathBuf>,
    #[command(flatten)]
    pub feature: FeatureArgs,
    #[arg(long, value_enum, default_value = "centroid")]
    pub clf: ClassifierArg,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 800)]
    pub width: u32,
    #[arg(long, default_value_t = 800)]
    pub height: u32,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long = "class-count", default_value_t = 4)]
    pub class_count: usize,
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.02)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_bounds(text: &str) -> std::result::Result<Bounds, String> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x_min, x_max, y_min, y_max] => Ok(Bounds { x_min, x_max, y_min, y_max }),
        _ => Err("expected xmin,xmax,ymin,ymax".into()),
    }
}

struct Ctx {
    seed: u64,
    verbose: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

const UNIT: Bounds = Bounds { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };

fn load(path: &Path, args: &InputArgs, ctx: &Ctx) -> Result<Dataset> {
    load_with(path, args, args.bounds, ctx)
}

fn load_with(path: &Path, args: &InputArgs, bounds: Option<Bounds>, ctx: &Ctx) -> Result<Dataset> {
    let delimiter = u8::try_from(args.delimiter)
        .map_err(|_| Error::Config(format!("delimiter '{}' is not a single byte", args.delimiter)))?;
    let options = FormatOptions { delimiter, class_key: args.classes.into(), ..FormatOptions::default() };
    let raw = gaze::load_recordings(path, &options)?;
    let bounds = match bounds {
        Some(b) => b,
        None => {
            let own = Bounds::of(&raw)?;
            if own.is_unit() {
                UNIT
            } else {
                ctx.note(format!(
                    "{}: coordinates outside [0,1], rescaling by extent x [{}, {}] y [{}, {}]",
                    path.display(),
                    own.x_min,
                    own.x_max,
                    own.y_min,
                    own.y_max
                ));
                own
            }
        }
    };
    let ds = gaze::normalize(&raw, Some(&bounds))?;
    ctx.note(format!("{}: {} recordings, {} points", path.display(), ds.len(), ds.point_count()));
    Ok(ds)
}

/// Generated recordings are already in the unit square of the model.
fn load_generated(paths: &[PathBuf], args: &InputArgs, ctx: &Ctx) -> Result<Option<Dataset>> {
    let mut out: Option<Dataset> = None;
    for p in paths {
        let ds = load_with(p, args, Some(UNIT), ctx)?;
        match out.as_mut() {
            Some(all) => all.recordings.extend(ds.recordings),
            None => out = Some(ds),
        }
    }
    Ok(out)
}

fn write_report(text: &str, path: Option<&Path>) -> Result<()> {
    print!("{text}");
    let _ = std::io::stdout().flush();
    if let Some(p) = path {
        fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn train(args: &TrainArgs, ctx: &Ctx) -> Result<()> {
    let mut ds = load(&args.input, &args.input_args, ctx)?;
    if let Some(class) = &args.class {
        ds = ds.subset(class);
        if ds.is_empty() {
            return Err(Error::Config(format!("no recordings with class label '{class}' in {}", args.input.display())));
        }
    }
    if args.ignore_time {
        ds = ds.without_time();
    }
    let config = BuildConfig {
        max_level: args.max_level,
        num_clusters: args.clusters,
        dyn_cluster: args.dyn_cluster,
        rule: args.rule.into(),
        merge_radius: args.merge_radius,
        pca_variance: args.pca_variance,
        time_weight: args.time_weight,
        seed: ctx.seed,
        kmeans_restarts: args.restarts,
    };
    let model = model::generate_model(&ds, &config)?;
    ctx.note(format!(
        "model: dim {}, {} levels, nodes per level {:?}",
        model.dim,
        model.depth(),
        model.levels.iter().map(Vec::len).collect::<Vec<_>>()
    ));
    model::save_model(&model, &args.out)
}

fn generate(args: &GenerateArgs, ctx: &Ctx) -> Result<()> {
    let model = model::load_model(&args.model)?;
    let config = GeneratorConfig {
        max_clusters: args.max_clusters,
        max_subclusters: args.max_subclusters,
        dyn_cluster: args.dyn_cluster,
        rule: args.rule.into(),
        seed: ctx.seed,
        clamp_to_unit: !args.no_clamp,
        support_weighted: args.support_weighted,
        max_level: None,
    };
    let mut recs = generate_batch(&model, &config, args.count)?;
    if let Some(label) = &args.label {
        for rec in recs.iter_mut() {
            rec.set_label(args.classes.into(), label.clone());
            rec.id = format!("{label}-{}", rec.id);
        }
    }
    ctx.note(format!("generated {} recordings, {} points", recs.len(), recs.iter().map(|r| r.len()).sum::<usize>()));
    gaze::save_recordings(&recs, &args.out)
}

fn featurize(args: &FeaturizeArgs, ctx: &Ctx) -> Result<()> {
    let ds = load(&args.input, &args.input_args, ctx)?;
    let spec = args.feature.spec()?;
    let file = fs::File::create(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io_err = |e: csv::Error| Error::io(&args.out, std::io::Error::other(e.to_string()));
    let mut header = vec!["rec".to_string(), "stimulus".into(), "participant".into()];
    header.extend((0..spec.len()).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(io_err)?;
    let mut skipped = 0;
    for rec in &ds.recordings {
        let f = match spec.extract(rec) {
            Ok(f) => f,
            Err(Error::Feature(msg)) => {
                eprintln!("warning: skipping: {msg}");
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut row = vec![rec.id.clone(), rec.stimulus.clone(), rec.participant.clone()];
        row.extend(f.values.iter().map(f64::to_string));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(&args.out, e))?;
    if skipped == ds.len() {
        return Err(Error::Feature(format!("no recording in {} could be featurized", args.input.display())));
    }
    Ok(())
}

fn eval_cv(args: &CvArgs, ctx: &Ctx) -> Result<()> {
    let ds = load(&args.input, &args.input_args, ctx)?;
    let generated = load_generated(&args.gen, &args.input_args, ctx)?;
    let training = match (args.train_on, &generated) {
        (Some(TrainOnArg::Real), _) => TrainingSource::Real,
        (Some(TrainOnArg::Generated), _) => TrainingSource::Generated,
        (Some(TrainOnArg::Mixed), _) | (None, Some(_)) => TrainingSource::Mixed,
        (None, None) => TrainingSource::Real,
    };
    let config = CvConfig {
        feature: args.feature.spec()?,
        classifier: args.clf.into(),
        folds: args.folds,
        training,
        augment: args.augment,
        augment_copies: 1,
        seed: ctx.seed,
    };
    let extra = match &generated {
        Some(g) if training != TrainingSource::Real => ExtraTraining::Fixed(&g.recordings),
        _ => ExtraTraining::None,
    };
    let report = cross_validate(&ds, &config, extra)?;
    write_report(&report.to_string(), args.report_out.as_deref())
}

fn eval_deceive(args: &DeceiveArgs, ctx: &Ctx) -> Result<()> {
    let real = load(&args.real, &args.input_args, ctx)?;
    let generated = load_generated(&args.gen, &args.input_args, ctx)?.ok_or(Error::EmptyDataset)?;
    let by_class = group_by_class(&generated.recordings, real.class_key);
    let report = deception_rate(&real, &by_class, args.feature.spec()?, args.clf.into(), ctx.seed)?;
    write_report(&report.to_string(), args.report_out.as_deref())
}

fn render(args: &RenderArgs) -> Result<()> {
    let ds = gaze::load_recordings(&args.input, &FormatOptions::default())?;
    let svg = render_svg(&ds.recordings, args.width, args.height);
    fs::write(&args.out, svg).map_err(|e| Error::io(&args.out, e))
}

fn synth(args: &SynthArgs, ctx: &Ctx) -> Result<()> {
    if args.class_count < 1 || args.per_class < 1 || args.sigma.is_nan() || args.sigma < 0.0 {
        return Err(Error::Config("synth needs at least one class, one recording and sigma >= 0".into()));
    }
    let ds = synthetic::class_layout_dataset(args.class_count, args.per_class, args.sigma, ctx.seed);
    gaze::save_recordings(&ds.recordings, &args.out)
}

fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs the CLI. Returns 0 on success, 1 on runtime errors and 2 on usage
/// errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads(cli.threads);
    let ctx = Ctx { seed: cli.seed, verbose: cli.verbose };
    let result = match &cli.command {
        Command::Train(a) => train(a, &ctx),
        Command::Generate(a) => generate(a, &ctx),
        Command::Featurize(a) => featurize(a, &ctx),
        Command::Eval(EvalCommand::Cv(a)) => eval_cv(a, &ctx),
        Command::Eval(EvalCommand::Deceive(a)) => eval_deceive(a, &ctx),
        Command::Render(a) => render(a),
        Command::Synth(a) => synth(a, &ctx),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn bounds_parser() {
        let b = parse_bounds("0,1920,0,1080").unwrap();
        assert_eq!(b.x_max, 1920.0);
        assert!(parse_bounds("0,1").is_err());
    }
}
