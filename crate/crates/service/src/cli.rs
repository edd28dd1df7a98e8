//! Command-line verbs.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use propagator_core::engine::{Engine, EngineError, SearchOutcome, SearchParams, SearchResult};
use propagator_core::grouping::{GroupingAlgorithm, GroupingThresholds};
use propagator_core::index::PropagationQuery;
use propagator_core::ontology::{DataType, NewPageBinding, PageId, VisFunctionRecord};
use propagator_ingest::{AgentOutcome, SyntheticCorpusSpec};

use crate::api::{router, AppState};
use crate::config::ServiceConfig;
use crate::ops::{ingest_dir, load_synthetic, open_engine};

#[derive(Debug, Parser)]
#[command(name = "propagator", version, about = "Find and create analogous visualization pages")]
pub struct Cli {
    /// TOML config file (falls back to $PROPAGATOR_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured store directory.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the REST service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    #[command(subcommand)]
    Ingest(IngestCommand),
    /// Same as `ingest synth`.
    SynthCorpus(SynthArgs),
    #[command(subcommand)]
    Index(IndexCommand),
    /// List candidate groups for a reference page.
    Search {
        page: String,
        #[command(flatten)]
        search: SearchArgs,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Create pages for chosen candidate groups.
    Propagate {
        page: String,
        #[command(flatten)]
        search: SearchArgs,
        /// 1-based rank of a single group to propagate.
        #[arg(long, conflicts_with = "all_validated", required_unless_present = "all_validated")]
        rank: Option<usize>,
        /// Propagate every group that passed validation.
        #[arg(long)]
        all_validated: bool,
        /// Confirm creation of the pages.
        #[arg(long)]
        yes: bool,
        #[arg(long)]
        allow_missing_links: bool,
    },
    #[command(subcommand)]
    Vis(VisCommand),
    #[command(subcommand)]
    Page(PageCommand),
}

#[derive(Debug, Subcommand)]
pub enum IngestCommand {
    /// Run the due ingestion manifests once.
    Run {
        #[arg(long)]
        manifests: Option<PathBuf>,
        /// Accepted for symmetry with schedulers; a run is always a single pass.
        #[arg(long)]
        once: bool,
    },
    /// Register a synthetic regional mortality corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub regions: usize,
    /// Comma-separated category keywords.
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
    #[arg(long, default_value_t = 30)]
    pub distractors: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Also create a reference page over region_1 with this id.
    #[arg(long)]
    pub reference_page: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Rebuild,
    Status,
}

#[derive(Debug, Subcommand)]
pub enum VisCommand {
    Add {
        id: String,
        function_name: String,
        #[arg(long, default_value = "")]
        description: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum PageCommand {
    Add {
        #[arg(long)]
        vis: String,
        /// Stream ids in binding order.
        #[arg(long = "data", required = true, num_args = 1..)]
        data: Vec<String>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long = "child")]
        children: Vec<String>,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long)]
        reference: bool,
    },
}

/// Query edits applied to the reference query, plus parameter overrides.
#[derive(Debug, Args, Default)]
pub struct SearchArgs {
    #[arg(long = "must-all")]
    pub must_all: Vec<String>,
    #[arg(long = "must-some")]
    pub must_some: Vec<String>,
    #[arg(long = "must-not")]
    pub must_not: Vec<String>,
    #[arg(long = "data-type")]
    pub data_types: Vec<String>,
    #[arg(long = "text")]
    pub free_text: Vec<String>,
    #[arg(long)]
    pub algorithm: Option<GroupingAlgorithm>,
    #[arg(long)]
    pub w: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub t_group: Option<f64>,
    #[arg(long)]
    pub t_stream: Option<f64>,
    #[arg(long)]
    pub s_allpair: Option<f64>,
    #[arg(long)]
    pub s_pair: Option<f64>,
    #[arg(long)]
    pub include_failed: bool,
    #[arg(long)]
    pub no_auto_exclude: bool,
}

impl SearchArgs {
    fn query(&self, mut q: PropagationQuery) -> Result<PropagationQuery, CliError> {
        for k in &self.must_not {
            q.must_all.remove(k);
            q.must_some.remove(k);
            q.must_not.insert(k.clone());
        }
        q.must_all.extend(self.must_all.iter().cloned());
        q.must_some.extend(self.must_some.iter().cloned());
        for t in &self.data_types {
            let dt: DataType = serde_json::from_value(serde_json::Value::String(t.clone()))
                .map_err(|_| CliError::usage(format!("unknown data type {t:?}")))?;
            q.data_types.insert(dt);
        }
        q.free_text.extend(self.free_text.iter().cloned());
        Ok(q)
    }

    fn params(&self, base: &SearchParams) -> Result<SearchParams, CliError> {
        let t = base.thresholds;
        let thresholds = GroupingThresholds::new(
            self.t_group.unwrap_or(t.t_group),
            self.t_stream.unwrap_or(t.t_stream),
            self.s_allpair.unwrap_or(t.s_allpair),
            self.s_pair.unwrap_or(t.s_pair),
        )
        .map_err(|e| CliError::usage(e.to_string()))?;
        Ok(SearchParams {
            algorithm: self.algorithm.unwrap_or(base.algorithm),
            thresholds,
            weights: base.weights,
            w: self.w.unwrap_or(base.w),
            kmeans_seed: self.seed.unwrap_or(base.kmeans_seed),
            include_failed: self.include_failed || base.include_failed,
            auto_exclude: !self.no_auto_exclude && base.auto_exclude,
        })
    }

    fn run(&self, engine: &Engine, page: &PageId) -> Result<SearchOutcome, CliError> {
        let query = self.query(engine.reference_query(page)?)?;
        let params = self.params(engine.defaults())?;
        Ok(engine.search(page, Some(&query), Some(&params))?)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit_code: u8,
    pub message: String,
}

impl CliError {
    fn new(exit_code: u8, message: impl Into<String>) -> Self {
        Self { exit_code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(1, message)
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let exit_code = match e.code() {
            "not_found" => 2,
            "duplicate_propagation" => 3,
            _ => 1,
        };
        Self::new(exit_code, e.to_string())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::new(1, format!("{e:#}"))
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::new(1, e.to_string())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = ServiceConfig::resolve(cli.config.as_deref()).map_err(other)?;
    if let Some(store) = cli.store {
        config.store_path = store;
    }
    match cli.command {
        Command::Serve { port } => {
            if let Some(p) = port {
                config.listen_port = p;
            }
            config.validate().map_err(other)?;
            serve(config)
        }
        Command::Ingest(IngestCommand::Run { manifests, once: _ }) => {
            let dir = manifests
                .or_else(|| config.manifests_dir.clone())
                .ok_or_else(|| CliError::usage("no manifests directory given or configured"))?;
            let engine = open_engine(&config)?;
            let reports = ingest_dir(&engine, &config, &dir).map_err(other)?;
            let mut failed = 0;
            for r in &reports {
                match &r.outcome {
                    AgentOutcome::Executed { stream_id } => println!("{}\texecuted\t{stream_id}", r.source_id),
                    AgentOutcome::Skipped { next_due } => println!("{}\tskipped\tnext due {next_due}", r.source_id),
                    AgentOutcome::Failed { error } => {
                        failed += 1;
                        println!("{}\tfailed\t{error}", r.source_id);
                    }
                }
            }
            if failed > 0 {
                return Err(CliError::usage(format!("{failed} of {} sources failed", reports.len())));
            }
            Ok(())
        }
        Command::Ingest(IngestCommand::Synth(args)) | Command::SynthCorpus(args) => {
            let engine = open_engine(&config)?;
            let mut spec = SyntheticCorpusSpec {
                regions: args.regions,
                distractors: args.distractors,
                seed: args.seed,
                ..SyntheticCorpusSpec::default()
            };
            if let Some(c) = args.categories {
                spec.categories = c;
            }
            let summary = load_synthetic(&engine, &spec, args.reference_page.as_deref())?;
            println!("registered {} streams", summary.streams);
            if let Some(p) = summary.reference_page {
                println!("reference page {}", p.id);
            }
            Ok(())
        }
        Command::Index(cmd) => {
            let engine = open_engine(&config)?;
            if matches!(cmd, IndexCommand::Rebuild) {
                engine.rebuild_index();
            }
            let index = engine.index();
            println!("seq {} streams {} terms {}", index.high_seq(), index.stream_count(), index.term_count());
            Ok(())
        }
        Command::Search { page, search, json } => {
            let engine = open_engine(&config)?;
            let out = search.run(&engine, &PageId(page))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&out).map_err(other)?);
            } else {
                print_groups(&out.groups);
            }
            Ok(())
        }
        Command::Propagate { page, search, rank, all_validated, yes, allow_missing_links } => {
            if !yes {
                return Err(CliError::usage("propagation creates pages; pass --yes to confirm"));
            }
            let engine = open_engine(&config)?;
            let page = PageId(page);
            let groups = search.run(&engine, &page)?.groups;
            let chosen: Vec<SearchResult> = match rank {
                Some(r) => {
                    let g = r
                        .checked_sub(1)
                        .and_then(|i| groups.get(i))
                        .ok_or_else(|| CliError::new(3, format!("no group at rank {r} ({} available)", groups.len())))?;
                    vec![g.clone()]
                }
                None => {
                    debug_assert!(all_validated);
                    groups.into_iter().filter(|g| g.group.validation.passed).collect()
                }
            };
            if chosen.is_empty() {
                return Err(CliError::new(3, "nothing to propagate"));
            }
            for record in engine.activate_propagation(&page, &chosen, allow_missing_links)? {
                println!("{}", record.new_page_id);
            }
            Ok(())
        }
        Command::Vis(VisCommand::Add { id, function_name, description }) => {
            let engine = open_engine(&config)?;
            let id = engine.write(|s| s.put_vis_function(VisFunctionRecord::new(id, &function_name, &description)))?;
            println!("{id}");
            Ok(())
        }
        Command::Page(PageCommand::Add { vis, data, id, children, title, description, reference }) => {
            let engine = open_engine(&config)?;
            let new = NewPageBinding {
                id: id.map(PageId),
                vis_id: vis.into(),
                data_ids: data.into_iter().map(Into::into).collect(),
                child_page_ids: children.into_iter().map(PageId).collect(),
                title,
                description,
                is_reference: reference,
            };
            let page = engine.write(|s| s.create_page_binding(new))?;
            println!("{}", page.id);
            Ok(())
        }
    }
}

fn print_groups(groups: &[SearchResult]) {
    for (i, g) in groups.iter().enumerate() {
        let failed: BTreeSet<_> = g.group.validation.failed_criteria().map(|c| format!("{c:?}")).collect();
        let status = if failed.is_empty() { "ok".to_string() } else { failed.into_iter().collect::<Vec<_>>().join(",") };
        let members: Vec<&str> = g.group.ordered_member_ids.iter().map(|m| m.as_str()).collect();
        println!("{}\t{:.4}\t{}\t{}\t{}", i + 1, g.group.score, g.group.group_hash, status, members.join(" "));
    }
}

fn serve(config: ServiceConfig) -> Result<(), CliError> {
    let engine = open_engine(&config)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.listen_port));
    let app = router(Arc::new(AppState::new(engine, config)));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(other)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(%addr, "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
    .map_err(other)
}
