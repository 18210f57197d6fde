use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kfgraph::branching::{
    operator_norm, solve_survival, survival_frequency, DiscreteBP, NormEstimate, NormMethod, SimCaps, SolveOptions,
};
use kfgraph::graphstats::{
    components, mcpo_reference, neighborhood_census, sample_rooted_limit, stats_report, tv_distance, DegreeHistogram,
    RootedCensus, StatsReport, DEFAULT_BALL_CAP,
};
use kfgraph::models::{powerlaw_norm, PowerLawParams};
use kfgraph::percolation::{percolation_report, percolation_threshold_constant, PercolationReport};
use kfgraph::sampler::{generate, GeneratedGraph, SamplerConfig};
use kfgraph::{edge_density, KernelFamily};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FamilyConfig, FamilyDesc, FamilySource, ModelSpec};
use crate::error::{CliError, Result};
use crate::io;

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "kfgraph", version, about = "Sample and analyse random graphs built from kernel families of small atoms")]
pub struct Cli {
    /// Worker threads for independent trials; results do not depend on it.
    #[arg(long, global = true, env = "KFGRAPH_THREADS", default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a graph and write edge, atom and type files.
    Gen(GenArgs),
    /// Components, degrees, subgraph counts and mixing of a graph.
    Stats(StatsArgs),
    /// Solve for the survival function of the branching process.
    Survival(SurvivalArgs),
    /// Norm of the edge-kernel operator.
    Norm(NormArgs),
    /// Largest component against theory over a parameter range.
    Sweep(SweepArgs),
    /// Bond percolation: transformed family, edge density polynomial, threshold.
    Perc(PercArgs),
    /// Degree distribution of a sample against the compound Poisson limit.
    DegreeCompare(DegreeArgs),
    /// Census of rooted balls in a sample against the limiting rooted graph.
    LocalLimit(LocalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Constant,
    Powerlaw,
    TwoBlock,
    Badp2,
}

#[derive(Debug, Clone, Args)]
pub struct FamilyArgs {
    /// TOML family file.
    #[arg(long, conflicts_with = "model")]
    pub config: Option<PathBuf>,
    /// Built-in family.
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// Edge intensity (constant model).
    #[arg(long)]
    pub c2: Option<f64>,
    /// Triangle intensity (constant model).
    #[arg(long)]
    pub c3: Option<f64>,
    /// K4 intensity (constant model).
    #[arg(long)]
    pub c4: Option<f64>,
    /// A (powerlaw, two-block).
    #[arg(long)]
    pub a: Option<f64>,
    /// B (powerlaw).
    #[arg(long)]
    pub b: Option<f64>,
    /// Tail exponent (powerlaw).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the first type (two-block).
    #[arg(long)]
    pub block_p: Option<f64>,
    /// Exponent offset (badp2).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Quadrature grid size for models on (0,1].
    #[arg(long)]
    pub grid: Option<usize>,
}

impl FamilyArgs {
    pub fn source(&self) -> Result<FamilySource> {
        if let Some(path) = &self.config {
            if self.any_model_flag() {
                return Err(CliError::config("model parameters cannot be combined with --config"));
            }
            return Ok(FamilySource::Config(FamilyConfig::load(path)?));
        }
        let Some(model) = self.model else {
            return Err(CliError::config("give --config FILE or --model NAME"));
        };
        let grid = self.grid.unwrap_or(kfgraph::space::DEFAULT_GRID);
        let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::config(format!("{model:?} model needs --{flag}")));
        let allowed: &[&str] = match model {
            Model::Constant => &["c2", "c3", "c4"],
            Model::Powerlaw => &["a", "b", "alpha", "grid"],
            Model::TwoBlock => &["a", "block-p"],
            Model::Badp2 => &["eps", "grid"],
        };
        for (flag, set) in self.flags() {
            if set && !allowed.contains(&flag) {
                return Err(CliError::config(format!("--{flag} does not apply to the {model:?} model")));
            }
        }
        let spec = match model {
            Model::Constant => ModelSpec::Constant {
                c: [(2, self.c2), (3, self.c3), (4, self.c4)]
                    .into_iter()
                    .filter_map(|(r, c)| c.map(|c| (r, c)))
                    .collect(),
            },
            Model::Powerlaw => ModelSpec::Powerlaw {
                a: self.a.unwrap_or(0.0),
                b: self.b.unwrap_or(0.0),
                alpha: need(self.alpha, "alpha")?,
                grid,
            },
            Model::TwoBlock => ModelSpec::TwoBlock {
                a: need(self.a, "a")?,
                p: need(self.block_p, "block-p")?,
            },
            Model::Badp2 => ModelSpec::Badp2 {
                eps: need(self.eps, "eps")?,
                grid,
            },
        };
        Ok(FamilySource::Model(spec))
    }

    fn flags(&self) -> [(&'static str, bool); 9] {
        [
            ("c2", self.c2.is_some()),
            ("c3", self.c3.is_some()),
            ("c4", self.c4.is_some()),
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("alpha", self.alpha.is_some()),
            ("block-p", self.block_p.is_some()),
            ("eps", self.eps.is_some()),
            ("grid", self.grid.is_some()),
        ]
    }

    fn any_model_flag(&self) -> bool {
        self.flags().iter().any(|f| f.1)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value = "graph")]
    pub prefix: String,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Edge file written by `gen`; without it a graph is sampled from the family.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, requires = "edges")]
    pub types: Option<PathBuf>,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub d_max: usize,
    /// Also report the census of rooted balls of this radius (at most 3).
    #[arg(long)]
    pub census_depth: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SurvivalArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Write `node,weight,rho` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also estimate survival by simulating this many trees.
    #[arg(long)]
    pub simulate: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Auto,
    Power,
}

#[derive(Debug, Clone, Args)]
pub struct NormArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, value_enum, default_value_t = NormArg::Auto)]
    pub method: NormArg,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Model parameter to vary (`c3`, `a`, `alpha`, ...) or `scale` to multiply every kernel.
    #[arg(long, default_value = "scale")]
    pub param: String,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the rows as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PercArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Edge retention probability; may be repeated.
    #[arg(long = "p")]
    pub p: Vec<f64>,
    /// Evaluate at `p = i/STEPS` for `i = 0..=STEPS`.
    #[arg(long, conflicts_with = "p")]
    pub scan: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DegreeArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub d_max: usize,
}

#[derive(Debug, Clone, Args)]
pub struct LocalArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Ball radius (at most 3).
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long)]
    pub n: usize,
    /// Samples from the limiting rooted graph.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Balls with more vertices are pooled into one overflow class.
    #[arg(long, default_value_t = DEFAULT_BALL_CAP)]
    pub cap: usize,
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub schema_version: u32,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyDesc>,
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub meta: Meta,
    pub result: T,
}

struct Ctx {
    threads: usize,
    start: std::time::Instant,
}

impl Ctx {
    fn report<T: Serialize>(&self, command: &'static str, seed: Option<u64>, family: Option<FamilyDesc>, result: T) -> Result<String> {
        let r = Report {
            meta: Meta {
                schema_version: SCHEMA_VERSION,
                version: env!("CARGO_PKG_VERSION"),
                command,
                seed,
                threads: self.threads,
                family,
                wall_time_s: self.start.elapsed().as_secs_f64(),
            },
            result,
        };
        Ok(serde_json::to_string_pretty(&r).expect("report serializes") + "\n")
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))
    }
}

fn load(args: &FamilyArgs) -> Result<(FamilySource, KernelFamily, FamilyDesc)> {
    let src = args.source()?;
    let fam = src.build()?;
    let model = match &src {
        FamilySource::Model(m) => Some(m.clone()),
        FamilySource::Config(_) => None,
    };
    let desc = FamilyDesc::new(&fam, model);
    Ok((src, fam, desc))
}

fn sample(fam: &KernelFamily, n: usize, seed: u64) -> Result<GeneratedGraph> {
    Ok(generate(fam, n, &SamplerConfig::with_seed(seed))?)
}

/// Independent seed for task `i` of a run with master seed `seed` (splitmix64).
pub fn task_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run(cli: &Cli) -> Result<String> {
    if cli.threads == 0 {
        return Err(CliError::config("--threads must be at least 1"));
    }
    let ctx = Ctx {
        threads: cli.threads,
        start: std::time::Instant::now(),
    };
    match &cli.command {
        Command::Gen(a) => gen(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Survival(a) => survival(&ctx, a),
        Command::Norm(a) => norm(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Perc(a) => perc(&ctx, a),
        Command::DegreeCompare(a) => degree_compare(&ctx, a),
        Command::LocalLimit(a) => local_limit(&ctx, a),
    }
}

#[derive(Debug, Serialize)]
struct GenResult {
    n: usize,
    atoms: usize,
    multi_edges: usize,
    simple_edges: usize,
    e_per_n: f64,
    simple_e_per_n: f64,
    files: io::GraphFiles,
}

fn gen(ctx: &Ctx, a: &GenArgs) -> Result<String> {
    let (_, fam, desc) = load(&a.family)?;
    let g = sample(&fam, a.n, a.seed)?;
    let files = io::write_graph(&g, &a.out, &a.prefix)?;
    let nf = a.n.max(1) as f64;
    let res = GenResult {
        n: a.n,
        atoms: g.atom_count(),
        multi_edges: g.multi_edges().len(),
        simple_edges: g.edge_count(),
        e_per_n: g.multi_edges().len() as f64 / nf,
        simple_e_per_n: g.edge_count() as f64 / nf,
        files,
    };
    ctx.report("gen", Some(a.seed), Some(desc), res)
}

fn stats(ctx: &Ctx, a: &StatsArgs) -> Result<String> {
    let (g, seed, desc) = match &a.edges {
        Some(path) => {
            if a.family.config.is_some() || a.family.model.is_some() {
                return Err(CliError::config("give either --edges or a family, not both"));
            }
            (io::read_graph(path, a.types.as_deref(), a.n)?, None, None)
        }
        None => {
            let (_, fam, desc) = load(&a.family)?;
            let n = a.n.ok_or_else(|| CliError::config("sampling a graph needs --n"))?;
            (sample(&fam, n, a.seed)?, Some(a.seed), Some(desc))
        }
    };
    let rep: StatsReport = stats_report(&g, a.d_max, a.census_depth)?;
    ctx.report("stats", seed, desc, rep)
}

#[derive(Debug, Serialize)]
struct Simulated {
    trials: usize,
    estimate: f64,
    std_err: f64,
    ambiguous: f64,
}

#[derive(Debug, Serialize)]
struct SurvivalResult {
    rho: f64,
    iterations: usize,
    residual: f64,
    grid: usize,
    xi_e: f64,
    norm: NormEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_x_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulated: Option<Simulated>,
}

fn survival(ctx: &Ctx, a: &SurvivalArgs) -> Result<String> {
    let (_, fam, desc) = load(&a.family)?;
    let bp = DiscreteBP::from_family(&fam)?;
    let opts = SolveOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        ..SolveOptions::default()
    };
    let sol = solve_survival(&bp, &opts)?;
    if let Some(path) = &a.out {
        io::write_file(path, &sol.to_csv())?;
    }
    let simulated = match a.simulate {
        Some(trials) => {
            let (est, amb) = survival_frequency(&bp, SimCaps::default(), trials, a.seed)?;
            Some(Simulated {
                trials,
                estimate: est.estimate,
                std_err: est.std_err,
                ambiguous: amb,
            })
        }
        None => None,
    };
    let res = SurvivalResult {
        rho: sol.rho,
        iterations: sol.iterations,
        residual: sol.residual,
        grid: sol.nodes.len(),
        xi_e: bp.edge_kernel().xi_e(),
        norm: operator_norm(&bp, NormMethod::Auto, 1e-10),
        rho_x_csv: a.out.clone(),
        simulated,
    };
    ctx.report("survival", a.simulate.map(|_| a.seed), Some(desc), res)
}

#[derive(Debug, Serialize)]
struct NormResult {
    norm: NormEstimate,
    xi_e: f64,
    two_xi_e: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
    supercritical: bool,
}

fn norm(ctx: &Ctx, a: &NormArgs) -> Result<String> {
    let (src, fam, desc) = load(&a.family)?;
    let bp = DiscreteBP::from_family(&fam)?;
    let method = match a.method {
        NormArg::Auto => NormMethod::Auto,
        NormArg::Power => NormMethod::PowerIteration,
    };
    let est = operator_norm(&bp, method, a.tol);
    let xi = edge_density(&fam)?;
    let closed_form = match src {
        FamilySource::Model(ModelSpec::Powerlaw { a, b, alpha, .. }) => Some(powerlaw_norm(&PowerLawParams::new(a, b, alpha)?)),
        _ => None,
    };
    let res = NormResult {
        supercritical: est.value > 1.0,
        norm: est,
        xi_e: xi,
        two_xi_e: 2.0 * xi,
        closed_form,
    };
    ctx.report("norm", None, Some(desc), res)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    param: f64,
    c1_over_n: f64,
    c1_se: f64,
    rho_theory: f64,
}

#[derive(Debug, Serialize)]
struct SweepResult {
    param: String,
    n: usize,
    trials: usize,
    rows: Vec<SweepRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<PathBuf>,
}

fn sweep(ctx: &Ctx, a: &SweepArgs) -> Result<String> {
    if a.steps == 0 || a.trials == 0 || a.n == 0 {
        return Err(CliError::config("--steps, --trials and --n must be positive"));
    }
    let (src, _, desc) = load(&a.family)?;
    let values: Vec<f64> = (0..a.steps)
        .map(|i| {
            if a.steps == 1 {
                a.from
            } else {
                a.from + (a.to - a.from) * i as f64 / (a.steps - 1) as f64
            }
        })
        .collect();
    let families = values
        .iter()
        .map(|&v| src.build_with(&a.param, v))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..a.steps).flat_map(|s| (0..a.trials).map(move |t| (s, t))).collect();
    let pool = ctx.pool()?;
    let fractions: Vec<f64> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, t)| {
                let g = sample(&families[s], a.n, task_seed(a.seed, (s * a.trials + t) as u64))?;
                Ok(components(&g).c1 as f64 / a.n as f64)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let rhos: Vec<f64> = pool.install(|| {
        families
            .par_iter()
            .map(|f| {
                let bp = DiscreteBP::from_family(f)?;
                Ok(solve_survival(&bp, &SolveOptions::default())?.rho)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let rows: Vec<SweepRow> = values
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            let xs = &fractions[s * a.trials..(s + 1) * a.trials];
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let se = if xs.len() > 1 {
                (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 / xs.len() as f64).sqrt()
            } else {
                0.0
            };
            SweepRow {
                param: v,
                c1_over_n: m,
                c1_se: se,
                rho_theory: rhos[s],
            }
        })
        .collect();
    if let Some(path) = &a.out {
        let mut csv = format!("{},c1_over_n,c1_se,rho_theory\n", a.param);
        for r in &rows {
            csv.push_str(&format!("{},{},{},{}\n", r.param, r.c1_over_n, r.c1_se, r.rho_theory));
        }
        io::write_file(path, &csv)?;
    }
    let res = SweepResult {
        param: a.param.clone(),
        n: a.n,
        trials: a.trials,
        rows,
        csv: a.out.clone(),
    };
    ctx.report("sweep", Some(a.seed), Some(desc), res)
}

#[derive(Debug, Serialize)]
struct PercResult {
    /// Threshold of the edge-density criterion; `None` if never supercritical
    /// or the family is not constant.
    p_c: Option<f64>,
    reports: Vec<PercolationReport>,
}

fn perc(ctx: &Ctx, a: &PercArgs) -> Result<String> {
    let (_, fam, desc) = load(&a.family)?;
    let ps: Vec<f64> = match a.scan {
        Some(0) => return Err(CliError::config("--scan needs at least one step")),
        Some(k) => (0..=k).map(|i| i as f64 / k as f64).collect(),
        None => a.p.clone(),
    };
    let p_c = match percolation_threshold_constant(&fam, 1e-12) {
        Ok(p) => Some(p),
        Err(kfgraph::Error::NoThreshold | kfgraph::Error::Unsupported(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let reports = ps
        .iter()
        .map(|&p| percolation_report(&fam, p, false))
        .collect::<kfgraph::Result<Vec<_>>>()?;
    ctx.report("perc", None, Some(desc), PercResult { p_c, reports })
}

#[derive(Debug, Serialize)]
struct DegreeResult {
    tv: f64,
    n: usize,
    d_max: usize,
    mean_degree: f64,
    reference_mean: f64,
    empirical: Vec<f64>,
    empirical_overflow: f64,
    reference: Vec<f64>,
    reference_tail: f64,
    truncation_warning: bool,
}

fn degree_compare(ctx: &Ctx, a: &DegreeArgs) -> Result<String> {
    let (_, fam, desc) = load(&a.family)?;
    let g = sample(&fam, a.n, a.seed)?;
    let hist = DegreeHistogram::of_graph(&g, a.d_max);
    let reference = mcpo_reference(&fam, a.d_max)?;
    let tv = tv_distance(&hist, &reference)?;
    let (emp, over) = hist.pmf();
    let degrees = g.degrees();
    let res = DegreeResult {
        tv,
        n: a.n,
        d_max: a.d_max,
        mean_degree: degrees.iter().sum::<usize>() as f64 / a.n.max(1) as f64,
        reference_mean: reference.mean,
        empirical: emp,
        empirical_overflow: over,
        reference: reference.pmf,
        reference_tail: reference.tail_mass,
        truncation_warning: reference.truncation_warning,
    };
    ctx.report("degree-compare", Some(a.seed), Some(desc), res)
}

#[derive(Debug, Serialize)]
struct LocalResult {
    tv: f64,
    depth: usize,
    graph: RootedCensus,
    limit: RootedCensus,
}

fn local_limit(ctx: &Ctx, a: &LocalArgs) -> Result<String> {
    let (_, fam, desc) = load(&a.family)?;
    let g = sample(&fam, a.n, a.seed)?;
    let graph = neighborhood_census(&g, a.depth, a.cap)?;
    let limit = sample_rooted_limit(&fam, a.depth, a.trials, task_seed(a.seed, u64::MAX), a.cap)?;
    let res = LocalResult {
        tv: graph.tv(&limit),
        depth: a.depth,
        graph,
        limit,
    };
    ctx.report("local-limit", Some(a.seed), Some(desc), res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|i| task_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(task_seed(1, 0), task_seed(2, 0));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
