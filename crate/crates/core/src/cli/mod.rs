//! Command-line front end. Every subcommand writes its outputs plus a
//! `manifest.json` into `--out`.

mod config;
mod manifest;

pub use config::{load_config, parse_config, AnalysisConfig, ConfigBundle, SEED_ENV};
pub use manifest::{sha256_hex, RunManifest};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{
    gene_label_correlations, lq_fit, pairwise_heatmap_stats, rna_protein_concordance, substitution_candidates, vif,
    HistogramView, LqReport, LqRow,
};
use crate::error::{Error, Result};
use crate::evaluate::{cross_evaluate, cross_validate, sweep_gene_count, GridMode, SweepReport};
use crate::lasso::LambdaTrace;
use crate::matrixio::{
    match_samples, read_expression_matrix, read_labels, write_expression_matrix, write_labels, write_report,
    AlignedDataset, CsvTable, Omic, Orientation, Report, ReportFormat,
};
use crate::preprocess::{merge_omics, prepare_pair, prepare_single, PreprocessLog};
use crate::selection::{select_features_traced, FeatureRanking};
use crate::svr::{grid_search_c, svr_train, NamedSvrModel};
use crate::synth::{generate, Preset};

#[derive(Debug, Parser)]
#[command(
    name = "radsens",
    version,
    about = "SF2 radiosensitivity modelling from transcriptome and proteome data"
)]
struct Cli {
    /// Output directory (created if absent).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for CV iterations and grid cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OmicArg {
    Transcriptome,
    Proteome,
    Combined,
}

impl From<OmicArg> for Omic {
    fn from(o: OmicArg) -> Self {
        match o {
            OmicArg::Transcriptome => Omic::Transcriptome,
            OmicArg::Proteome => Omic::Proteome,
            OmicArg::Combined => Omic::Combined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PipelineOmic {
    Transcriptome,
    Proteome,
    Combined,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OrientationArg {
    GenesAsRows,
    SamplesAsRows,
}

impl From<OrientationArg> for Orientation {
    fn from(o: OrientationArg) -> Self {
        match o {
            OrientationArg::GenesAsRows => Orientation::GenesAsRows,
            OrientationArg::SamplesAsRows => Orientation::SamplesAsRows,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Recovery,
    Concordance,
    TinyQp,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Recovery => Preset::Recovery,
            PresetArg::Concordance => Preset::Concordance,
            PresetArg::TinyQp => Preset::TinyQp,
        }
    }
}

/// Where the expression data comes from.
#[derive(Debug, Clone, Args)]
struct DataArgs {
    /// Directory holding transcriptome.tsv, proteome.tsv and labels.tsv.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    transcriptome: Option<PathBuf>,
    #[arg(long)]
    proteome: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OrientationArg::SamplesAsRows)]
    orientation: OrientationArg,
    /// Inputs are already cleaned and z-scored; skip preprocessing.
    #[arg(long)]
    preprocessed: bool,
}

#[derive(Debug, Clone, Args)]
struct PreprocessArgs {
    #[arg(long)]
    max_missing: Option<usize>,
    #[arg(long)]
    redundancy_threshold: Option<f64>,
    #[arg(long)]
    sort_genes: bool,
}

#[derive(Debug, Clone, Args)]
struct SvrArgs {
    /// Fixed C, or `auto` for grid search.
    #[arg(long = "C", default_value = "auto")]
    c: String,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Args)]
struct EvalArgs {
    #[arg(long)]
    global_grid_search: bool,
    #[arg(long)]
    reuse_selection_folds: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read a matrix and label file, align them and write the aligned copies.
    Ingest {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = OmicArg::Transcriptome)]
        omic: OmicArg,
        #[arg(long, value_enum, default_value_t = OrientationArg::SamplesAsRows)]
        orientation: OrientationArg,
    },
    /// Clean, intersect and z-score the omic matrices.
    Preprocess {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prep: PreprocessArgs,
    },
    /// Frequency-ranked Lasso gene selection.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prep: PreprocessArgs,
        #[arg(long, value_enum, default_value_t = OmicArg::Combined)]
        omic: OmicArg,
        #[arg(long)]
        dump_lasso_trace: bool,
    },
    /// Fit one SVR model on all samples.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prep: PreprocessArgs,
        #[command(flatten)]
        svr: SvrArgs,
        #[arg(long, value_enum, default_value_t = OmicArg::Combined)]
        omic: OmicArg,
        #[arg(long)]
        genes: PathBuf,
    },
    /// Repeated cross-validation of an SVR on a gene panel.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prep: PreprocessArgs,
        #[command(flatten)]
        svr: SvrArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum, default_value_t = OmicArg::Combined)]
        omic: OmicArg,
        /// Gene list, one per line, or a ranking CSV with a gene_id column.
        #[arg(long)]
        genes: PathBuf,
        /// Evaluate the top 1..=N genes of the list instead of the whole panel.
        #[arg(long)]
        sweep: bool,
    },
    /// Train on one omic, score on another.
    CrossEval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prep: PreprocessArgs,
        #[command(flatten)]
        svr: SvrArgs,
        #[arg(long, value_enum)]
        source: OmicArg,
        #[arg(long, value_enum)]
        target: OmicArg,
        #[arg(long)]
        genes: PathBuf,
        /// Shuffle the target labels (negative control).
        #[arg(long)]
        permute_target_labels: bool,
    },
    /// Correlation and collinearity diagnostics, and LQ fits.
    Analyze {
        #[command(subcommand)]
        kind: AnalyzeKind,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(long, value_enum)]
        preset: PresetArg,
    },
    /// preprocess → select → evaluate sweep → analyze.
    Pipeline {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prep: PreprocessArgs,
        #[command(flatten)]
        svr: SvrArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum, default_value_t = PipelineOmic::Combined)]
        omic: PipelineOmic,
        #[arg(long)]
        dump_lasso_trace: bool,
    },
}

#[derive(Debug, Clone, Args)]
struct PanelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prep: PreprocessArgs,
    #[arg(long, value_enum, default_value_t = OmicArg::Combined)]
    omic: OmicArg,
    #[arg(long)]
    genes: PathBuf,
}

#[derive(Debug, Subcommand)]
enum AnalyzeKind {
    Concordance {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prep: PreprocessArgs,
    },
    Correlations {
        #[command(flatten)]
        panel: PanelArgs,
    },
    Substitutes {
        #[command(flatten)]
        panel: PanelArgs,
        #[arg(long)]
        r_gene: Option<f64>,
        #[arg(long)]
        r_label: Option<f64>,
    },
    Vif {
        #[command(flatten)]
        panel: PanelArgs,
    },
    Heatmap {
        #[command(flatten)]
        panel: PanelArgs,
    },
    /// Fit LQ curves from a CSV with columns cell_line, dose, sf.
    Lq {
        #[arg(long)]
        survival: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 success, 1 bad input, 2 internal failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut bundle = match &cli.config {
        Some(p) => load_config(p)?,
        None => ConfigBundle::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    match cli.jobs {
        Some(0) => Err(Error::invalid("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&cli, &mut bundle, env.as_deref()))
        }
        None => dispatch(&cli, &mut bundle, env.as_deref()),
    }
}

struct Ctx<'a> {
    out: &'a Path,
    format: ReportFormat,
    manifest: RunManifest,
}

impl Ctx<'_> {
    fn report<R: Report>(&mut self, stem: &str, report: &R) -> Result<()> {
        let name = format!("{stem}.{}", self.format.extension());
        write_report(report, self.out.join(&name), self.format)?;
        self.manifest.add_output(name);
        Ok(())
    }

    fn matrix(&mut self, name: &str, ds: &AlignedDataset) -> Result<()> {
        write_expression_matrix(&ds.matrix, self.out.join(name), Orientation::SamplesAsRows)?;
        self.manifest.add_output(name);
        Ok(())
    }

    fn labels(&mut self, name: &str, ds: &AlignedDataset) -> Result<()> {
        write_labels(&ds.label_table(), self.out.join(name))?;
        self.manifest.add_output(name);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        self.manifest.write(self.out)
    }
}

fn subcommand_name(c: &Command) -> String {
    match c {
        Command::Ingest { .. } => "ingest".into(),
        Command::Preprocess { .. } => "preprocess".into(),
        Command::Select { .. } => "select".into(),
        Command::Train { .. } => "train".into(),
        Command::Evaluate { .. } => "evaluate".into(),
        Command::CrossEval { .. } => "cross-eval".into(),
        Command::Analyze { kind } => format!(
            "analyze {}",
            match kind {
                AnalyzeKind::Concordance { .. } => "concordance",
                AnalyzeKind::Correlations { .. } => "correlations",
                AnalyzeKind::Substitutes { .. } => "substitutes",
                AnalyzeKind::Vif { .. } => "vif",
                AnalyzeKind::Heatmap { .. } => "heatmap",
                AnalyzeKind::Lq { .. } => "lq",
            }
        ),
        Command::Synth { .. } => "synth".into(),
        Command::Pipeline { .. } => "pipeline".into(),
    }
}

fn apply_prep(bundle: &mut ConfigBundle, prep: &PreprocessArgs) {
    if let Some(m) = prep.max_missing {
        bundle.preprocess.max_missing = m;
    }
    if let Some(r) = prep.redundancy_threshold {
        bundle.preprocess.redundancy_threshold = r;
    }
    if prep.sort_genes {
        bundle.preprocess.sort_genes = true;
    }
}

/// `None` means grid search.
fn apply_svr(bundle: &mut ConfigBundle, svr: &SvrArgs) -> Result<Option<f64>> {
    if let Some(e) = svr.epsilon {
        bundle.svr.epsilon = e;
    }
    if svr.c.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let c: f64 = svr
        .c
        .parse()
        .map_err(|_| Error::invalid(format!("--C expects a positive real or 'auto', got '{}'", svr.c)))?;
    bundle.svr.c = c;
    Ok(Some(c))
}

fn apply_eval(bundle: &mut ConfigBundle, eval: &EvalArgs) {
    if eval.global_grid_search {
        bundle.evaluate.grid_mode = GridMode::Global;
    }
    if eval.reuse_selection_folds {
        bundle.reuse_selection_folds = true;
    }
}

fn dispatch(cli: &Cli, bundle: &mut ConfigBundle, env: Option<&str>) -> Result<()> {
    let mut fixed_c = None;
    match &cli.command {
        Command::Preprocess { prep, .. } | Command::Select { prep, .. } => apply_prep(bundle, prep),
        Command::Train { prep, svr, .. } | Command::CrossEval { prep, svr, .. } => {
            apply_prep(bundle, prep);
            fixed_c = apply_svr(bundle, svr)?;
        }
        Command::Evaluate { prep, svr, eval, .. } | Command::Pipeline { prep, svr, eval, .. } => {
            apply_prep(bundle, prep);
            fixed_c = apply_svr(bundle, svr)?;
            apply_eval(bundle, eval);
        }
        Command::Analyze { kind } => match kind {
            AnalyzeKind::Concordance { prep, .. } => apply_prep(bundle, prep),
            AnalyzeKind::Correlations { panel }
            | AnalyzeKind::Substitutes { panel, .. }
            | AnalyzeKind::Vif { panel }
            | AnalyzeKind::Heatmap { panel } => apply_prep(bundle, &panel.prep),
            AnalyzeKind::Lq { .. } => {}
        },
        Command::Ingest { .. } | Command::Synth { .. } => {}
    }
    if let Command::Analyze {
        kind: AnalyzeKind::Substitutes { r_gene, r_label, .. },
    } = &cli.command
    {
        if let Some(r) = r_gene {
            bundle.analysis.r_gene = *r;
        }
        if let Some(r) = r_label {
            bundle.analysis.r_label = *r;
        }
    }
    let seed = bundle.resolve_seed(cli.seed, env)?;
    bundle.validate()?;
    if let Some(c) = fixed_c {
        bundle.evaluate.c_grid = vec![c];
    }

    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let snapshot = serde_json::to_value(&*bundle)?;
    let mut ctx = Ctx {
        out: &cli.out,
        format: cli.format.into(),
        manifest: RunManifest::new(&subcommand_name(&cli.command), snapshot, seed),
    };
    let bundle = &*bundle;

    match &cli.command {
        Command::Ingest {
            matrix,
            labels,
            omic,
            orientation,
        } => {
            ctx.manifest.add_input(matrix)?;
            ctx.manifest.add_input(labels)?;
            let m = read_expression_matrix(matrix, (*orientation).into())?;
            let table = read_labels(labels)?;
            let omic: Omic = (*omic).into();
            let ds = match_samples(&m, &table, omic)?;
            let summary = IngestSummary {
                omic,
                samples_in_matrix: m.n_samples(),
                labels_in_table: table.len(),
                samples_matched: ds.n_samples(),
                genes: ds.n_genes(),
                missing_cells: ds.matrix.missing_total(),
            };
            ctx.matrix(&format!("{omic}_aligned.tsv"), &ds)?;
            ctx.labels(&format!("{omic}_labels.tsv"), &ds)?;
            ctx.report(&format!("ingest_{omic}"), &summary)?;
        }
        Command::Preprocess { data, .. } => {
            let loaded = load_data(data, bundle, &mut ctx.manifest)?;
            persist_prepared(&mut ctx, &loaded)?;
        }
        Command::Select {
            data,
            omic,
            dump_lasso_trace,
            ..
        } => {
            let loaded = load_data(data, bundle, &mut ctx.manifest)?;
            let ds = loaded.dataset((*omic).into())?;
            run_selection(&mut ctx, &ds, bundle, *dump_lasso_trace)?;
        }
        Command::Train { data, omic, genes, .. } => {
            let loaded = load_data(data, bundle, &mut ctx.manifest)?;
            let ds = loaded.dataset((*omic).into())?;
            let genes = read_gene_list(genes, &mut ctx.manifest)?;
            let sub = ds.restrict_genes(&genes)?;
            let c = match fixed_c {
                Some(c) => c,
                None => {
                    grid_search_c(
                        sub.matrix.values(),
                        &sub.labels,
                        &bundle.evaluate.c_grid,
                        bundle.evaluate.inner_folds,
                        bundle.evaluate.seed,
                        &bundle.svr,
                    )?
                    .best_c
                }
            };
            let model = svr_train(sub.matrix.values(), &sub.labels, &bundle.svr.with_c(c))?;
            let named = NamedSvrModel {
                genes: sub.matrix.gene_ids().to_vec(),
                model,
            };
            ctx.report(&format!("model_{}", ds.provenance), &named)?;
        }
        Command::Evaluate {
            data,
            omic,
            genes,
            sweep,
            ..
        } => {
            let loaded = load_data(data, bundle, &mut ctx.manifest)?;
            let ds = loaded.dataset((*omic).into())?;
            let genes = read_gene_list(genes, &mut ctx.manifest)?;
            let omic = ds.provenance;
            if *sweep {
                let ranking = ranking_from_list(&genes);
                let rep = sweep_gene_count(&ds, &ranking, genes.len(), omic.as_str(), &bundle.evaluate, &bundle.svr)?;
                ctx.report(&format!("sweep_{omic}"), &rep)?;
            } else {
                let rep = cross_validate(&ds, &genes, &bundle.evaluate, &bundle.svr)?;
                ctx.report(&format!("cv_{omic}_{}", genes.len()), &rep)?;
            }
        }
        Command::CrossEval {
            data,
            source,
            target,
            genes,
            permute_target_labels,
            ..
        } => {
            let loaded = load_data(data, bundle, &mut ctx.manifest)?;
            let src = loaded.dataset((*source).into())?;
            let mut tgt = loaded.dataset((*target).into())?;
            let genes = read_gene_list(genes, &mut ctx.manifest)?;
            if *permute_target_labels {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                tgt.labels.shuffle(&mut rng);
            }
            let metrics = cross_evaluate(&src, &tgt, &genes, &bundle.evaluate, &bundle.svr)?;
            let rep = CrossEvalReport {
                source: src.provenance,
                target: tgt.provenance,
                gene_count: genes.len(),
                permuted_target_labels: *permute_target_labels,
                r_squared: metrics.r_squared,
                rmse: metrics.rmse,
                n: metrics.n,
            };
            ctx.report(&format!("cross_eval_{}_{}", src.provenance, tgt.provenance), &rep)?;
        }
        Command::Analyze { kind } => run_analyze(&mut ctx, kind, bundle)?,
        Command::Synth { preset } => {
            let cfg = Preset::from(*preset).config(seed);
            let (a, b, truth) = generate(&cfg)?;
            ctx.matrix("transcriptome.tsv", &a)?;
            ctx.matrix("proteome.tsv", &b)?;
            ctx.labels("labels.tsv", &a)?;
            let path = ctx.out.join("truth.json");
            let mut text = serde_json::to_string_pretty(&serde_json::to_value(&truth)?)?;
            text.push('\n');
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            ctx.manifest.add_output("truth.json");
        }
        Command::Pipeline {
            data,
            omic,
            dump_lasso_trace,
            ..
        } => {
            let loaded = load_data(data, bundle, &mut ctx.manifest)?;
            persist_prepared(&mut ctx, &loaded)?;
            let omics: Vec<Omic> = match omic {
                PipelineOmic::Transcriptome => vec![Omic::Transcriptome],
                PipelineOmic::Proteome => vec![Omic::Proteome],
                PipelineOmic::Combined => vec![Omic::Combined],
                PipelineOmic::All => vec![Omic::Transcriptome, Omic::Proteome, Omic::Combined],
            };
            let mut sweeps = SweepReport::default();
            let several = omics.len() > 1;
            for o in omics {
                let ds = loaded.dataset(o)?;
                let ranking = run_selection(&mut ctx, &ds, bundle, *dump_lasso_trace)?;
                let count = ranking.entries.len();
                let sweep = sweep_gene_count(&ds, &ranking, count, o.as_str(), &bundle.evaluate, &bundle.svr)?;
                ctx.report(&format!("sweep_{o}"), &sweep)?;
                let genes = ranking.genes();
                analyze_panel(&mut ctx, &ds, &genes, bundle)?;
                sweeps.extend(sweep);
            }
            if let (Some(t), Some(p)) = (&loaded.transcriptome, &loaded.proteome) {
                let (t, p) = shared_samples(t, p)?;
                ctx.report("concordance", &rna_protein_concordance(&t, &p)?)?;
            }
            if several {
                ctx.report("sweep_all", &sweeps)?;
            }
        }
    }
    ctx.finish()
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    omic: Omic,
    samples_in_matrix: usize,
    labels_in_table: usize,
    samples_matched: usize,
    genes: usize,
    missing_cells: usize,
}

impl Report for IngestSummary {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "omic",
            "samples_in_matrix",
            "labels_in_table",
            "samples_matched",
            "genes",
            "missing_cells",
        ]);
        t.push(vec![
            self.omic.as_str().into(),
            self.samples_in_matrix.into(),
            self.labels_in_table.into(),
            self.samples_matched.into(),
            self.genes.into(),
            self.missing_cells.into(),
        ]);
        t
    }
}

#[derive(Debug, Serialize)]
struct CrossEvalReport {
    source: Omic,
    target: Omic,
    gene_count: usize,
    permuted_target_labels: bool,
    r_squared: f64,
    rmse: f64,
    n: usize,
}

impl Report for CrossEvalReport {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "source",
            "target",
            "gene_count",
            "permuted_target_labels",
            "r_squared",
            "rmse",
            "n",
        ]);
        t.push(vec![
            self.source.as_str().into(),
            self.target.as_str().into(),
            self.gene_count.into(),
            self.permuted_target_labels.into(),
            self.r_squared.into(),
            self.rmse.into(),
            self.n.into(),
        ]);
        t
    }
}

#[derive(Debug, Serialize)]
struct TraceDump<'a> {
    iterations: &'a [LambdaTrace],
}

impl Report for TraceDump<'_> {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["iteration", "step", "lambda", "support_size"]);
        for (i, tr) in self.iterations.iter().enumerate() {
            for (s, p) in tr.points.iter().enumerate() {
                t.push(vec![i.into(), s.into(), p.lambda.into(), p.support_size.into()]);
            }
        }
        t
    }
}

#[derive(Debug, Default, Serialize)]
struct PrepLogs {
    logs: BTreeMap<String, PreprocessLog>,
}

impl Report for PrepLogs {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["omic", "stage", "gene_id", "partner", "r"]);
        for (omic, log) in &self.logs {
            for g in &log.dropped_missing {
                t.push(vec![
                    omic.as_str().into(),
                    "missing".into(),
                    g.as_str().into(),
                    crate::matrixio::Cell::Empty,
                    crate::matrixio::Cell::Empty,
                ]);
            }
            for g in &log.dropped_zero_variance {
                t.push(vec![
                    omic.as_str().into(),
                    "zero_variance".into(),
                    g.as_str().into(),
                    crate::matrixio::Cell::Empty,
                    crate::matrixio::Cell::Empty,
                ]);
            }
            for d in &log.dropped_redundant {
                t.push(vec![
                    omic.as_str().into(),
                    "redundant".into(),
                    d.dropped.as_str().into(),
                    d.retained.as_str().into(),
                    d.r.into(),
                ]);
            }
        }
        t
    }
}

/// Loaded (and unless told otherwise, cleaned) omic datasets.
struct Loaded {
    transcriptome: Option<AlignedDataset>,
    proteome: Option<AlignedDataset>,
    logs: PrepLogs,
}

impl Loaded {
    fn dataset(&self, omic: Omic) -> Result<AlignedDataset> {
        let missing = |name: &str| Error::invalid(format!("{name} data required for --omic {omic}"));
        match omic {
            Omic::Transcriptome => self.transcriptome.clone().ok_or_else(|| missing("transcriptome")),
            Omic::Proteome => self.proteome.clone().ok_or_else(|| missing("proteome")),
            Omic::Combined => {
                let t = self.transcriptome.as_ref().ok_or_else(|| missing("transcriptome"))?;
                let p = self.proteome.as_ref().ok_or_else(|| missing("proteome"))?;
                merge_omics(t, p)
            }
        }
    }
}

fn resolve_inputs(data: &DataArgs) -> Result<(Option<PathBuf>, Option<PathBuf>, PathBuf)> {
    let from_dir = |name: &str| data.input.as_ref().map(|d| d.join(name));
    let t = data.transcriptome.clone().or_else(|| from_dir("transcriptome.tsv"));
    let p = data.proteome.clone().or_else(|| from_dir("proteome.tsv"));
    let l = data
        .labels
        .clone()
        .or_else(|| from_dir("labels.tsv"))
        .ok_or_else(|| Error::invalid("no label file: pass --labels or --input DIR"))?;
    // Inside --input, an absent omic file just means that omic is unavailable.
    let keep = |path: Option<PathBuf>, explicit: bool| match path {
        Some(p) if explicit || p.exists() => Some(p),
        _ => None,
    };
    let t = keep(t, data.transcriptome.is_some());
    let p = keep(p, data.proteome.is_some());
    if t.is_none() && p.is_none() {
        return Err(Error::invalid(
            "no expression matrix: pass --transcriptome/--proteome or --input DIR",
        ));
    }
    Ok((t, p, l))
}

fn load_data(data: &DataArgs, bundle: &ConfigBundle, manifest: &mut RunManifest) -> Result<Loaded> {
    let (tp, pp, lp) = resolve_inputs(data)?;
    let orientation: Orientation = data.orientation.into();
    manifest.add_input(&lp)?;
    let labels = read_labels(&lp)?;
    let mut read = |path: &Option<PathBuf>, omic: Omic| -> Result<Option<AlignedDataset>> {
        match path {
            Some(p) => {
                manifest.add_input(p)?;
                let m = read_expression_matrix(p, orientation)?;
                Ok(Some(match_samples(&m, &labels, omic)?))
            }
            None => Ok(None),
        }
    };
    let t = read(&tp, Omic::Transcriptome)?;
    let p = read(&pp, Omic::Proteome)?;
    if data.preprocessed {
        return Ok(Loaded {
            transcriptome: t,
            proteome: p,
            logs: PrepLogs::default(),
        });
    }
    let mut logs = PrepLogs::default();
    let (t, p) = match (t, p) {
        (Some(t), Some(p)) => {
            let pair = prepare_pair(&t, &p, &bundle.preprocess)?;
            logs.logs.insert("transcriptome".into(), pair.transcriptome_log);
            logs.logs.insert("proteome".into(), pair.proteome_log);
            (Some(pair.transcriptome), Some(pair.proteome))
        }
        (Some(t), None) => {
            let (ds, log) = prepare_single(&t, &bundle.preprocess)?;
            logs.logs.insert("transcriptome".into(), log);
            (Some(ds), None)
        }
        (None, Some(p)) => {
            let (ds, log) = prepare_single(&p, &bundle.preprocess)?;
            logs.logs.insert("proteome".into(), log);
            (None, Some(ds))
        }
        (None, None) => unreachable!("resolve_inputs requires one matrix"),
    };
    Ok(Loaded {
        transcriptome: t,
        proteome: p,
        logs,
    })
}

fn persist_prepared(ctx: &mut Ctx<'_>, loaded: &Loaded) -> Result<()> {
    if let Some(t) = &loaded.transcriptome {
        ctx.matrix("transcriptome_clean.tsv", t)?;
        ctx.labels("transcriptome_labels.tsv", t)?;
    }
    if let Some(p) = &loaded.proteome {
        ctx.matrix("proteome_clean.tsv", p)?;
        ctx.labels("proteome_labels.tsv", p)?;
    }
    if loaded.transcriptome.is_some() && loaded.proteome.is_some() {
        let c = loaded.dataset(Omic::Combined)?;
        ctx.matrix("combined_clean.tsv", &c)?;
        ctx.labels("combined_labels.tsv", &c)?;
    }
    ctx.report("preprocess_log", &loaded.logs)
}

fn run_selection(ctx: &mut Ctx<'_>, ds: &AlignedDataset, bundle: &ConfigBundle, dump: bool) -> Result<FeatureRanking> {
    let (ranking, traces) = select_features_traced(ds, &bundle.selection, &bundle.lasso)?;
    let omic = ds.provenance;
    ctx.report(&format!("ranking_{omic}"), &ranking)?;
    if dump {
        ctx.report(&format!("lasso_trace_{omic}"), &TraceDump { iterations: &traces })?;
    }
    Ok(ranking)
}

fn analyze_panel(ctx: &mut Ctx<'_>, ds: &AlignedDataset, genes: &[String], bundle: &ConfigBundle) -> Result<()> {
    let omic = ds.provenance;
    ctx.report(&format!("correlations_{omic}"), &gene_label_correlations(ds, genes)?)?;
    ctx.report(
        &format!("substitutes_{omic}"),
        &substitution_candidates(ds, genes, bundle.analysis.r_gene, bundle.analysis.r_label, &[])?,
    )?;
    let panel = ds.restrict_genes(genes)?;
    if panel.n_genes() >= 2 {
        if panel.n_samples() > panel.n_genes() {
            ctx.report(&format!("vif_{omic}"), &vif(&panel)?)?;
        }
        let heat = pairwise_heatmap_stats(&panel)?;
        ctx.report(&format!("heatmap_{omic}"), &heat)?;
        ctx.report(&format!("heatmap_histogram_{omic}"), &HistogramView(&heat))?;
    }
    Ok(())
}

/// Restricts both datasets to the sample ids they share.
fn shared_samples(t: &AlignedDataset, p: &AlignedDataset) -> Result<(AlignedDataset, AlignedDataset)> {
    let pick = |a: &AlignedDataset, b: &AlignedDataset| -> Vec<usize> {
        let other: std::collections::HashSet<&str> = b.matrix.sample_ids().iter().map(String::as_str).collect();
        (0..a.n_samples())
            .filter(|&i| other.contains(a.matrix.sample_ids()[i].as_str()))
            .collect()
    };
    let (ti, pi) = (pick(t, p), pick(p, t));
    if ti.len() < 3 {
        return Err(Error::invalid(
            "fewer than three cell lines are shared between the omics",
        ));
    }
    Ok((t.select_samples(&ti), p.select_samples(&pi)))
}

fn run_analyze(ctx: &mut Ctx<'_>, kind: &AnalyzeKind, bundle: &ConfigBundle) -> Result<()> {
    let panel = |ctx: &mut Ctx<'_>, a: &PanelArgs| -> Result<(AlignedDataset, Vec<String>)> {
        let loaded = load_data(&a.data, bundle, &mut ctx.manifest)?;
        let ds = loaded.dataset(a.omic.into())?;
        let genes = read_gene_list(&a.genes, &mut ctx.manifest)?;
        Ok((ds, genes))
    };
    match kind {
        AnalyzeKind::Concordance { data, .. } => {
            let loaded = load_data(data, bundle, &mut ctx.manifest)?;
            let (t, p) = match (&loaded.transcriptome, &loaded.proteome) {
                (Some(t), Some(p)) => shared_samples(t, p)?,
                _ => return Err(Error::invalid("concordance needs both transcriptome and proteome data")),
            };
            ctx.report("concordance", &rna_protein_concordance(&t, &p)?)
        }
        AnalyzeKind::Correlations { panel: a } => {
            let (ds, genes) = panel(ctx, a)?;
            ctx.report(
                &format!("correlations_{}", ds.provenance),
                &gene_label_correlations(&ds, &genes)?,
            )
        }
        AnalyzeKind::Substitutes { panel: a, .. } => {
            let (ds, genes) = panel(ctx, a)?;
            let tab = substitution_candidates(&ds, &genes, bundle.analysis.r_gene, bundle.analysis.r_label, &[])?;
            ctx.report(&format!("substitutes_{}", ds.provenance), &tab)
        }
        AnalyzeKind::Vif { panel: a } => {
            let (ds, genes) = panel(ctx, a)?;
            ctx.report(&format!("vif_{}", ds.provenance), &vif(&ds.restrict_genes(&genes)?)?)
        }
        AnalyzeKind::Heatmap { panel: a } => {
            let (ds, genes) = panel(ctx, a)?;
            let heat = pairwise_heatmap_stats(&ds.restrict_genes(&genes)?)?;
            ctx.report(&format!("heatmap_{}", ds.provenance), &heat)?;
            ctx.report(&format!("heatmap_histogram_{}", ds.provenance), &HistogramView(&heat))
        }
        AnalyzeKind::Lq { survival } => {
            ctx.manifest.add_input(survival)?;
            let rep = lq_from_file(survival)?;
            ctx.report("lq_fits", &rep)
        }
    }
}

/// One gene per line, or a CSV whose header has a `gene_id` column.
fn read_gene_list(path: &Path, manifest: &mut RunManifest) -> Result<Vec<String>> {
    manifest.add_input(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gene_list(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn parse_gene_list(text: &str) -> Result<Vec<String>> {
    let first = text.lines().next().unwrap_or("");
    let genes: Vec<String> = if first.contains(',') {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::parse(e.to_string()))?.clone();
        let col = header
            .iter()
            .position(|h| h.trim() == "gene_id")
            .ok_or_else(|| Error::parse("gene list CSV has no gene_id column"))?;
        rdr.records()
            .map(|r| {
                r.map_err(|e| Error::parse(e.to_string()))
                    .map(|rec| rec.get(col).unwrap_or("").trim().to_string())
            })
            .collect::<Result<_>>()?
    } else {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    };
    if genes.is_empty() {
        return Err(Error::invalid("gene list is empty"));
    }
    let mut seen = std::collections::HashSet::new();
    for g in &genes {
        if !seen.insert(g.as_str()) {
            return Err(Error::invalid(format!("gene '{g}' listed twice")));
        }
    }
    Ok(genes)
}

/// A ranking whose order is the given list.
fn ranking_from_list(genes: &[String]) -> FeatureRanking {
    let entries: Vec<_> = genes
        .iter()
        .map(|g| crate::selection::RankedGene {
            gene_id: g.clone(),
            importance: f64::NAN,
            selection_count: 0,
            mean_abs_coefficient: f64::NAN,
        })
        .collect();
    FeatureRanking {
        tallies: entries.clone(),
        entries,
        iterations: 0,
        truncated_iterations: 0,
    }
}

fn lq_from_file(path: &Path) -> Result<LqReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    let header = rdr.headers().map_err(|e| Error::parse(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(format!("{}: missing column '{name}'", path.display())))
    };
    let (ci, di, si) = (col("cell_line")?, col("dose")?, col("sf")?);
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(e.to_string()))?;
        let num = |i: usize, what: &str| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::parse(format!("{}: row {}: {what} is not a number", path.display(), line + 2)))
        };
        let g = groups.entry(rec.get(ci).unwrap_or("").to_string()).or_default();
        g.0.push(num(di, "dose")?);
        g.1.push(num(si, "sf")?);
    }
    let rows = groups
        .into_iter()
        .map(|(cell_line, (d, s))| {
            let fit = lq_fit(&d, &s).map_err(|e| Error::invalid(format!("cell line '{cell_line}': {e}")))?;
            Ok(LqRow { cell_line, fit })
        })
        .collect::<Result<_>>()?;
    Ok(LqReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gene_list_formats() {
        assert_eq!(parse_gene_list("A\nB\n\n# note\nC\n").unwrap(), vec!["A", "B", "C"]);
        let csv = "rank,gene_id,importance\n1,X,0.5\n2,Y,0.4\n";
        assert_eq!(parse_gene_list(csv).unwrap(), vec!["X", "Y"]);
        assert!(parse_gene_list("A\nA\n").is_err());
        assert!(parse_gene_list("").is_err());
    }

    #[test]
    fn unknown_flag_is_exit_one() {
        assert_eq!(run(["radsens", "synth", "--preset", "tiny-qp", "--frobnicate"]), 1);
        assert_eq!(run(["radsens"]), 1);
    }
}
