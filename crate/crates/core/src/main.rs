//! Command-line front end: generate data, train factors, build graphs, run
//! selections and experiments, and emit diagnostics.
//!
//! Exit codes: 0 success, 2 validation error (bad input or config),
//! 1 runtime error. Thread count follows `RAYON_NUM_THREADS` (default: all
//! available cores); results never depend on it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coldstart::domain::{EmbeddingMatrix, Method};
use coldstart::error::{Error, Result};
use coldstart::harness::{
    self, digest_file, digest_matrix, fit_cold_users, gen_synthetic, load_embeddings,
    load_ratings, load_selection, split_users, train_mf, EmitOptions, ExperimentConfig,
    ExperimentInputs, RatingsTable,
};
use coldstart::harness::{fmt_sig6, write_report, MethodContext};
use coldstart::ipgraph::{self, GraphMode};
use coldstart::metrics;
use coldstart::oracle;

#[derive(Parser)]
#[command(
    name = "coldstart",
    about = "Item-subset selection for user cold-start recommendation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance (items, warm users, optional cold users).
    Gen(GenArgs),
    /// Train user/item factors on a ratings file with regularized ALS.
    MfTrain(MfTrainArgs),
    /// Fit cold-user vectors against fixed item factors.
    FitCold(FitColdArgs),
    /// Build an inner-product proximity graph and save it.
    GraphBuild(GraphBuildArgs),
    /// Run one selection method and save the ranked subset.
    Select(SelectArgs),
    /// Evaluate a stored selection against an embedding pair.
    Evaluate(EvaluateArgs),
    /// Norm-bias diagnostics: norm distribution, group occupancy, popularity buckets.
    Diagnose(DiagnoseArgs),
    /// Full pipeline: data, selections over the M grid, evaluation report.
    Run(RunArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of items.
    #[arg(long)]
    items: usize,
    /// Number of warm users.
    #[arg(long)]
    users: usize,
    /// Number of additional cold users from the same mixture.
    #[arg(long, default_value_t = 0)]
    cold: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = 1.0)]
    center_scale: f64,
    #[arg(long, default_value_t = 0.4)]
    spread: f64,
    /// Log-normal sigma for the item norm multiplier.
    #[arg(long, default_value_t = 0.0)]
    norm_skew: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    items_out: PathBuf,
    #[arg(long)]
    users_out: PathBuf,
    #[arg(long)]
    cold_out: Option<PathBuf>,
    /// Write the binary embedding format instead of text.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct MfTrainArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    users_out: PathBuf,
    #[arg(long)]
    items_out: PathBuf,
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct FitColdArgs {
    /// Cold-user ratings file.
    #[arg(long)]
    ratings: PathBuf,
    /// Fixed item embeddings.
    #[arg(long)]
    items: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct GraphBuildArgs {
    #[arg(long)]
    items: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// `exact` or `approx`.
    #[arg(long, default_value = "approx")]
    mode: String,
    #[arg(long, default_value_t = 200)]
    ef_construction: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    items: PathBuf,
    /// Warm-user embeddings (required by every method except max-norm and
    /// max-in-degree).
    #[arg(long)]
    users: Option<PathBuf>,
    /// max-norm | max-in-degree | user-expectation | ipgs | ipgs-exact |
    /// greedy | greedy-lazy | hull | exhaustive
    #[arg(long)]
    method: String,
    #[arg(long)]
    m: usize,
    /// Prebuilt proximity graph (required by ipgs and max-in-degree).
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    ef: usize,
    #[arg(long, default_value_t = 1000)]
    num_directions: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Subset budget for the exhaustive oracle.
    #[arg(long, default_value_t = oracle::DEFAULT_SUBSET_BUDGET)]
    budget: u128,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    items: PathBuf,
    #[arg(long)]
    users: PathBuf,
    #[arg(long)]
    selection: PathBuf,
    /// Metric cutoff; defaults to the stored selection size.
    #[arg(long)]
    m: Option<usize>,
    /// Label for the population column (`warm` or `cold`).
    #[arg(long, default_value = "warm")]
    population: String,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    items: PathBuf,
    /// Warm users; enables the norm-group occupancy diagnostic.
    #[arg(long)]
    users: Option<PathBuf>,
    /// Ratings file; enables the norm-vs-high-ratings diagnostic.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Pool depth for the occupancy diagnostic.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Cumulative norm-percentile edges, ending at 100.
    #[arg(long, default_value = "0.1,1,5,25,100")]
    edges: String,
    #[arg(long, default_value_t = 5.0)]
    high_threshold: f64,
    /// Output prefix; files are written as PREFIX.norms.csv etc.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline config overrides, repeatable: --set m_grid=5,20 --set seed=7
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Generate a synthetic instance from the config's synth.* parameters.
    #[arg(long, conflicts_with_all = ["ratings", "items"])]
    synthetic: bool,
    /// Ratings file: split, train and fit per the config.
    #[arg(long, conflicts_with = "items")]
    ratings: Option<PathBuf>,
    /// Precomputed item embeddings (with --warm-users / --cold-users).
    #[arg(long, requires = "warm_users")]
    items: Option<PathBuf>,
    #[arg(long)]
    warm_users: Option<PathBuf>,
    #[arg(long)]
    cold_users: Option<PathBuf>,
    /// Report path (`.json` switches the format).
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    /// Also write a JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Include wall-time columns (makes outputs run-dependent).
    #[arg(long)]
    timings: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::MfTrain(args) => cmd_mf_train(args),
        Command::FitCold(args) => cmd_fit_cold(args),
        Command::GraphBuild(args) => cmd_graph_build(args),
        Command::Select(args) => cmd_select(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Run(args) => cmd_run(args),
    }
}

fn save_embeddings(m: &EmbeddingMatrix, path: &PathBuf, binary: bool) -> Result<()> {
    if binary {
        harness::save_embeddings_binary(m, path)
    } else {
        harness::save_embeddings_text(m, path)
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mixture = harness::MixtureSpec {
        clusters: args.clusters,
        center_scale: args.center_scale,
        spread: args.spread,
    };
    let skew = harness::NormSkewSpec {
        sigma: args.norm_skew,
    };
    let total_users = args.users + args.cold;
    let (items, all_users) =
        gen_synthetic(args.items, total_users, args.dim, &mixture, &skew, args.seed)?;
    let (warm, cold) = split_user_matrix(&all_users, args.users)?;
    save_embeddings(&items, &args.items_out, args.binary)?;
    save_embeddings(&warm, &args.users_out, args.binary)?;
    println!(
        "wrote {} items to {} and {} users to {}",
        items.count(),
        args.items_out.display(),
        warm.count(),
        args.users_out.display()
    );
    if args.cold > 0 {
        let path = args.cold_out.ok_or_else(|| {
            Error::invalid("--cold requires --cold-out for the held-out users")
        })?;
        let cold = cold.expect("cold split is non-empty");
        save_embeddings(&cold, &path, args.binary)?;
        println!("wrote {} cold users to {}", cold.count(), path.display());
    }
    Ok(())
}

/// Splits a user matrix into the first `warm` rows and the rest.
fn split_user_matrix(
    users: &EmbeddingMatrix,
    warm: usize,
) -> Result<(EmbeddingMatrix, Option<EmbeddingMatrix>)> {
    if warm == 0 || warm > users.count() {
        return Err(Error::invalid(format!(
            "warm user count {warm} out of range 1..={}",
            users.count()
        )));
    }
    let dim = users.dim();
    let take = |range: std::ops::Range<usize>| -> Result<EmbeddingMatrix> {
        let ids = range.clone().map(|i| users.id(i).to_string()).collect();
        let data = range.flat_map(|i| users.vector(i).to_vec()).collect();
        EmbeddingMatrix::from_flat(dim, ids, data)
    };
    let warm_matrix = take(0..warm)?;
    let cold_matrix = if warm < users.count() {
        Some(take(warm..users.count())?)
    } else {
        None
    };
    Ok((warm_matrix, cold_matrix))
}

fn cmd_mf_train(args: MfTrainArgs) -> Result<()> {
    let table = load_ratings(&args.ratings)?;
    log::info!(
        "loaded {} ratings over {} users x {} items",
        table.n_ratings(),
        table.n_users(),
        table.n_items()
    );
    let (users, items, train_log) =
        train_mf(&table, args.dim, args.lambda, args.epochs, args.seed)?;
    save_embeddings(&users, &args.users_out, args.binary)?;
    save_embeddings(&items, &args.items_out, args.binary)?;
    if let Some(last) = train_log.last() {
        println!("final training rmse: {}", fmt_sig6(last.rmse));
    }
    println!(
        "wrote {} and {}",
        args.users_out.display(),
        args.items_out.display()
    );
    Ok(())
}

fn cmd_fit_cold(args: FitColdArgs) -> Result<()> {
    let table = load_ratings(&args.ratings)?;
    let items = load_embeddings(&args.items)?;
    let fit = fit_cold_users(&table, &items, args.lambda)?;
    save_embeddings(&fit.users, &args.out, args.binary)?;
    println!(
        "fitted {} cold users ({} without usable ratings) to {}",
        fit.users.count(),
        fit.empty_users,
        args.out.display()
    );
    Ok(())
}

fn cmd_graph_build(args: GraphBuildArgs) -> Result<()> {
    let items = load_embeddings(&args.items)?;
    let mode: GraphMode = args.mode.parse()?;
    let graph = match mode {
        GraphMode::Exact => ipgraph::build_exact_ip_graph(&items, args.k)?,
        GraphMode::Approximate => {
            ipgraph::build_approx_ip_graph(&items, args.k, args.ef_construction)?
        }
    };
    ipgraph::save_graph(&graph, &args.out)?;
    println!(
        "built {} graph over {} items (k = {}) at {}",
        mode.tag(),
        graph.n(),
        graph.k(),
        args.out.display()
    );
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<()> {
    let items = load_embeddings(&args.items)?;
    let method: Method = args.method.parse()?;
    let users = match &args.users {
        Some(path) => load_embeddings(path)?,
        None => {
            if !matches!(method, Method::MaxNorm | Method::MaxInDegree) {
                return Err(Error::invalid(format!(
                    "method {method} requires --users"
                )));
            }
            // Placeholder never read by these methods.
            EmbeddingMatrix::from_flat(items.dim(), vec![], vec![])?
        }
    };
    let graph = match &args.graph {
        Some(path) => Some(ipgraph::load_graph(path)?),
        None => None,
    };
    let ctx = MethodContext {
        graph: graph.as_ref(),
        ef_search: args.ef,
        hull_directions: args.num_directions,
        seed: args.seed,
        subset_budget: args.budget,
    };
    let sel = harness::select_with_method(method, &users, &items, args.m, ctx)?;
    harness::save_selection(&sel, &items, &args.out)?;
    println!(
        "selected {} items with {} to {}",
        sel.m(),
        method,
        args.out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let items = load_embeddings(&args.items)?;
    let users = load_embeddings(&args.users)?;
    let sel = load_selection(&args.selection, &items)?;
    let m = args.m.unwrap_or_else(|| sel.m());
    let population = match args.population.as_str() {
        "warm" => harness::Population::Warm,
        "cold" => harness::Population::Cold,
        _ => return Err(Error::invalid("population must be warm or cold")),
    };
    let report = metrics::MetricReport::evaluate(&users, &items, &sel, m, population)?;

    let mut out = String::new();
    out.push_str("schema,method,m,population,fav_loss,fav_loss_per_user,precision,map,ndcg\n");
    out.push_str(&format!(
        "coldstart-eval/1,{},{},{},{},{},{},{},{}\n",
        report.method,
        report.m,
        report.population.tag(),
        fmt_sig6(report.fav_loss_value),
        fmt_sig6(report.fav_loss_value / users.count() as f64),
        fmt_sig6(report.precision),
        fmt_sig6(report.map),
        fmt_sig6(report.ndcg)
    ));
    match &args.out {
        Some(path) => std::fs::write(path, out).map_err(|e| Error::io(path, e))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let items = load_embeddings(&args.items)?;
    let prefix = args.out_prefix.display();

    let dist = metrics::norm_distribution(&items)?;
    let norms = items.norms();
    let mut out = String::from("schema,item_id,norm,normalized_norm\n");
    for i in 0..items.count() {
        out.push_str(&format!(
            "coldstart-diag-norms/1,{},{},{}\n",
            items.id(i),
            fmt_sig6(norms[i]),
            fmt_sig6(dist.normalized_norms[i])
        ));
    }
    let norms_path = PathBuf::from(format!("{prefix}.norms.csv"));
    std::fs::write(&norms_path, out).map_err(|e| Error::io(&norms_path, e))?;
    println!(
        "median normalized norm: {} ({} items) -> {}",
        fmt_sig6(dist.median),
        items.count(),
        norms_path.display()
    );

    if let Some(users_path) = &args.users {
        let users = load_embeddings(users_path)?;
        let edges: Vec<f64> = args
            .edges
            .split(',')
            .map(|e| {
                e.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad percentile edge {e:?}")))
            })
            .collect::<Result<_>>()?;
        let groups = metrics::norm_group_occupancy(&users, &items, args.k, &edges)?;
        let mut out = String::from("schema,group_upper_pct,item_count,share\n");
        for g in &groups {
            out.push_str(&format!(
                "coldstart-diag-occupancy/1,{},{},{}\n",
                fmt_sig6(g.upper_pct),
                g.item_count,
                fmt_sig6(g.share)
            ));
        }
        let path = PathBuf::from(format!("{prefix}.occupancy.csv"));
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        println!(
            "top-{} occupancy over {} users -> {}",
            args.k,
            users.count(),
            path.display()
        );
    }

    if let Some(ratings_path) = &args.ratings {
        let table = load_ratings(ratings_path)?;
        let buckets = metrics::norm_vs_high_ratings(&items, &table, args.high_threshold)?;
        let mut out = String::from("schema,high_count,item_count,mean_norm,var_norm\n");
        for b in &buckets {
            out.push_str(&format!(
                "coldstart-diag-popularity/1,{},{},{},{}\n",
                b.high_count,
                b.item_count,
                fmt_sig6(b.mean_norm),
                fmt_sig6(b.var_norm)
            ));
        }
        let path = PathBuf::from(format!("{prefix}.popularity.csv"));
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        println!(
            "norm-vs-popularity buckets (threshold {}) -> {}",
            args.high_threshold,
            path.display()
        );
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply_overrides(args.sets.iter().map(String::as_str))?;
    config.validate()?;

    let inputs = if let Some(ratings_path) = &args.ratings {
        inputs_from_ratings(ratings_path, &config)?
    } else if let Some(items_path) = &args.items {
        inputs_from_files(items_path, &args)?
    } else {
        // Synthetic is the default when no source is named.
        inputs_from_synthetic(&config)?
    };

    log::info!(
        "running {} method(s) x {} m value(s) on {} items / {} warm users",
        config.methods.len(),
        config.m_grid.len(),
        inputs.items.count(),
        inputs.warm_users.count()
    );
    let report = harness::run_experiment(&config, &inputs)?;
    let options = EmitOptions {
        include_timings: args.timings,
    };
    write_report(&report, options, &args.out)?;
    println!("wrote {}", args.out.display());
    if let Some(json_path) = &args.json {
        let file = std::fs::File::create(json_path).map_err(|e| Error::io(json_path, e))?;
        let mut w = std::io::BufWriter::new(file);
        harness::emit_report_json(&report, options, &mut w).map_err(|e| Error::io(json_path, e))?;
        println!("wrote {}", json_path.display());
    }
    // A short stdout summary: the best method per M on each population.
    summarize(&report);
    Ok(())
}

fn summarize(report: &harness::EvalReport) {
    use std::collections::BTreeMap;
    let mut best: BTreeMap<(usize, &str), (&str, f64)> = BTreeMap::new();
    for row in &report.rows {
        if let Some(loss) = row.fav_loss {
            let key = (row.m, row.population.tag());
            let better = match best.get(&key) {
                Some(&(_, current)) => loss < current,
                None => true,
            };
            if better {
                best.insert(key, (row.method.tag(), loss));
            }
        }
    }
    for ((m, pop), (method, loss)) in best {
        println!(
            "m = {m:>4} [{pop}]: best fav_loss {} by {method}",
            fmt_sig6(loss)
        );
    }
}

fn inputs_from_synthetic(config: &ExperimentConfig) -> Result<ExperimentInputs> {
    let synth = &config.synth;
    let total = synth.n_users + synth.n_cold_users;
    let (items, all_users) = gen_synthetic(
        synth.n_items,
        total,
        config.dim,
        &synth.mixture,
        &synth.skew,
        config.seed,
    )?;
    let (warm, cold) = split_user_matrix(&all_users, synth.n_users)?;
    let mut digests = vec![
        ("items".to_string(), digest_matrix(&items)),
        ("warm_users".to_string(), digest_matrix(&warm)),
    ];
    if let Some(cold) = &cold {
        digests.push(("cold_users".to_string(), digest_matrix(cold)));
    }
    Ok(ExperimentInputs {
        items,
        warm_users: warm,
        cold_users: cold,
        digests,
    })
}

fn inputs_from_ratings(path: &PathBuf, config: &ExperimentConfig) -> Result<ExperimentInputs> {
    let table = load_ratings(path)?;
    let (warm_table, cold_table) = split_users(&table, config.split_ratio, config.seed)?;
    log::info!(
        "split {} users into {} warm / {} cold",
        table.n_users(),
        warm_table.n_users(),
        cold_table.n_users()
    );
    let (warm_users, items, _) = train_mf(
        &warm_table,
        config.dim,
        config.mf.lambda,
        config.mf.epochs,
        config.seed,
    )?;
    // Cold ratings for items unseen in training cannot be used; drop them
    // (the affected users keep their remaining ratings).
    let cold_table = drop_unknown_items(&cold_table, &items)?;
    let fit = fit_cold_users(&cold_table, &items, config.mf.lambda)?;
    let digests = vec![("ratings".to_string(), digest_file(path)?)];
    Ok(ExperimentInputs {
        items,
        warm_users,
        cold_users: Some(fit.users),
        digests,
    })
}

fn drop_unknown_items(cold: &RatingsTable, items: &EmbeddingMatrix) -> Result<RatingsTable> {
    let mut kept = Vec::with_capacity(cold.n_ratings());
    let mut dropped = 0usize;
    for t in cold.triples() {
        if items.index_of(cold.item_id(t.item)).is_some() {
            kept.push((t.user, t.item, t.rating));
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} cold rating(s) referencing items unseen in training");
    }
    RatingsTable::from_parts(
        cold.user_ids().to_vec(),
        cold.item_ids().to_vec(),
        kept,
    )
}

fn inputs_from_files(items_path: &PathBuf, args: &RunArgs) -> Result<ExperimentInputs> {
    let items = load_embeddings(items_path)?;
    let warm_path = args
        .warm_users
        .as_ref()
        .ok_or_else(|| Error::invalid("--items requires --warm-users"))?;
    let warm_users = load_embeddings(warm_path)?;
    let mut digests = vec![
        ("items".to_string(), digest_file(items_path)?),
        ("warm_users".to_string(), digest_file(warm_path)?),
    ];
    let cold_users = match &args.cold_users {
        Some(path) => {
            digests.push(("cold_users".to_string(), digest_file(path)?));
            Some(load_embeddings(path)?)
        }
        None => None,
    };
    Ok(ExperimentInputs {
        items,
        warm_users,
        cold_users,
        digests,
    })
}
