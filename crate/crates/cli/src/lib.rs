//! The `beads` command: ingest, tag, compare, report and serve.
//!
//! Results go to stdout and diagnostics to stderr. Exit codes: 0 success,
//! 1 domain error, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use beads_core::agreement::{compare, render_comparison, ReportFormat, DEFAULT_SHOWN_DISCREPANCIES};
use beads_core::analytics::{
    compare_debates, default_eligible, parse_notes, render_metrics, tag_frequencies, top_k_categories, CountMode,
    FrequencyOptions, MetricsFormat, DEFAULT_REPORT_TAGS,
};
use beads_core::autotag::{
    autotag_corpus, failures_path, manifest_path, save_run, AutotagError, EndpointConfig, LiveEndpoint, MockEndpoint,
    PromptTemplate, RuleTable, RunConfig, RunSpec, TaggingEndpoint,
};
use beads_core::corpus::{ingest, CorpusStats, NoiseRules, RawTranscript, Segmenter};
use beads_core::schema::TagCode;
use beads_core::store::Store;
use beads_service::ApiError;
use clap::{CommandFactory, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "beads", version, about = "Bias-enriched dialogue-act annotation of debate transcripts")]
pub struct Cli {
    /// Store directory holding corpora and annotation sets.
    #[arg(long, global = true, env = "BEADS_STORE", default_value = "beads-store")]
    pub store: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, parse and segment a raw transcript into a stored corpus.
    Ingest {
        raw: PathBuf,
        #[arg(long)]
        debate_id: String,
        /// Free-text source label; defaults to the file name.
        #[arg(long)]
        source: Option<String>,
        /// Moderator speaker names; repeat or separate with commas.
        #[arg(long = "moderator", value_delimiter = ',')]
        moderators: Vec<String>,
        /// Noise rule file replacing the bundled rules.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Extra abbreviations that never end a sentence.
        #[arg(long = "abbreviation", value_delimiter = ',')]
        abbreviations: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Print word, unit and per-speaker counts for a stored corpus.
    Stats {
        debate_id: String,
        #[arg(long)]
        json: bool,
    },
    /// Tag every unit of a corpus with the mock rules or a live endpoint.
    Autotag {
        debate_id: String,
        #[arg(long)]
        annotator: String,
        #[arg(long, conflicts_with = "endpoint_config", required_unless_present = "endpoint_config")]
        mock: bool,
        /// TOML or JSON endpoint settings.
        #[arg(long)]
        endpoint_config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        /// Output set id; defaults to `<debate-id>_<annotator>`.
        #[arg(long)]
        set_id: Option<String>,
        /// Prompt template file replacing the bundled one.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Mock rule file replacing the bundled rules.
        #[arg(long)]
        mock_rules: Option<PathBuf>,
        #[arg(long)]
        max_concurrent: Option<usize>,
        #[arg(long)]
        max_retries: Option<u32>,
        /// Replace an existing set with the same id.
        #[arg(long)]
        force: bool,
    },
    /// Agreement between a gold set and another set on the same debate.
    Compare {
        gold: String,
        other: String,
        #[arg(long, default_value = "md")]
        format: String,
        #[arg(long, default_value_t = DEFAULT_SHOWN_DISCREPANCIES)]
        max_discrepancies: usize,
    },
    /// Per-speaker tag counts for two debates side by side.
    Report {
        debate1: String,
        debate2: String,
        /// Two set ids, one per debate, in the same order.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sets: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        tags: Option<Vec<String>>,
        #[arg(long, default_value = "md")]
        format: String,
        /// `TAG<tab or comma>note` lines for the last column.
        #[arg(long)]
        notes: Option<PathBuf>,
        #[arg(long, default_value = "primary_only")]
        mode: String,
    },
    /// Most frequent tags for one speaker.
    Top {
        #[arg(long)]
        set: String,
        #[arg(long)]
        speaker: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value = "primary_only")]
        mode: String,
    },
    /// Run the HTTP API and host the annotation UI.
    Serve {
        #[arg(long, default_value_t = beads_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// Directory with the built UI bundle.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Endpoint settings for live autotag runs started over the API.
        #[arg(long)]
        endpoint_config: Option<PathBuf>,
    },
}

/// A domain failure with a stable kind name.
#[derive(Debug)]
pub struct Failure {
    pub kind: String,
    pub detail: String,
}

impl Failure {
    fn new(kind: &str, detail: impl Into<String>) -> Self {
        Failure { kind: kind.to_string(), detail: detail.into() }
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                let api = ApiError::from(e);
                Failure { kind: api.kind.to_string(), detail: api.detail }
            }
        }
    )*};
}

failure_from!(
    beads_core::store::StoreError,
    beads_core::corpus::CorpusError,
    beads_core::annotation::AnnotationError,
    beads_core::autotag::AutotagError,
    beads_core::agreement::AgreementError,
    beads_core::analytics::AnalyticsError,
    beads_core::schema::SchemaError
);

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new("IoFailure", format!("cannot read {}: {e}", path.display())))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => return usage_error(e, &args, out, err),
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error[{}]: {}", f.kind, f.detail);
            EXIT_DOMAIN
        }
    }
}

fn usage_error(e: clap::Error, args: &[OsString], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    use clap::error::ErrorKind;
    if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        let _ = write!(out, "{}", e.render());
        return EXIT_OK;
    }
    let _ = write!(err, "{}", e.render());
    let mut cmd = Cli::command();
    cmd.build();
    let sub = args
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find_map(|a| cmd.get_subcommands().find(|s| s.get_name() == a).map(|s| s.get_name().to_string()));
    if let Some(name) = sub {
        if let Some(sc) = cmd.find_subcommand_mut(&name) {
            let _ = write!(err, "\n{}", sc.render_help());
        }
    }
    EXIT_USAGE
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let w = |out: &mut dyn Write, text: &str| {
        out.write_all(text.as_bytes()).map_err(|e| Failure::new("IoFailure", format!("cannot write output: {e}")))
    };
    match cli.command {
        Command::Ingest { raw, debate_id, source, moderators, rules, abbreviations, json } => {
            let text = read_file(&raw)?;
            let rules = match rules {
                Some(p) => NoiseRules::from_toml(&read_file(&p)?)?,
                None => NoiseRules::bundled(),
            };
            let label =
                source.unwrap_or_else(|| raw.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            let transcript = RawTranscript::from_text(&debate_id, &label, &text)?;
            let segmenter = Segmenter::default().with_abbreviations(abbreviations);
            let (corpus, removed) = ingest(&transcript, &rules, &segmenter, &moderators)?;
            let store = Store::open_or_create(&cli.store)?;
            store.save_corpus(&corpus, &removed)?;
            tracing::info!(debate = %debate_id, removed = removed.len(), "corpus written");
            let _ = writeln!(
                err,
                "{} noise lines removed; log at {}",
                removed.len(),
                store.removals_path(&debate_id).display()
            );
            w(out, &render_stats(&debate_id, &corpus.stats(), json))
        }
        Command::Stats { debate_id, json } => {
            let store = Store::open(&cli.store)?;
            let corpus = store.load_corpus(&debate_id)?;
            w(out, &render_stats(&debate_id, &corpus.stats(), json))
        }
        Command::Autotag {
            debate_id,
            annotator,
            mock,
            endpoint_config,
            radius,
            set_id,
            template,
            mock_rules,
            max_concurrent,
            max_retries,
            force,
        } => {
            let store = Store::open(&cli.store)?;
            let corpus = store.load_corpus(&debate_id)?;
            let template = match template {
                Some(p) => PromptTemplate::from_toml(&read_file(&p)?)?,
                None => PromptTemplate::bundled(),
            };
            let mut config = RunConfig::default();
            let client: Box<dyn TaggingEndpoint> = if mock {
                let rules = match mock_rules {
                    Some(p) => RuleTable::from_toml(&read_file(&p)?, store.registry())?,
                    None => RuleTable::bundled(store.registry())?,
                };
                Box::new(MockEndpoint::new(rules))
            } else {
                let path = endpoint_config.expect("clap enforces --mock or --endpoint-config");
                let cfg = EndpointConfig::load(&path)?;
                config.timeout = Duration::from_secs(cfg.timeout_secs);
                Box::new(LiveEndpoint::new(cfg)?)
            };
            if let Some(n) = max_concurrent {
                config.max_concurrent = n;
            }
            if let Some(n) = max_retries {
                config.max_retries = n;
            }
            let set_id = set_id.unwrap_or_else(|| format!("{debate_id}_{annotator}"));
            if store.has_set(&set_id) && !force {
                return Err(Failure::new(
                    "SetExists",
                    format!("annotation set {set_id:?} already exists; pass --force to replace it"),
                ));
            }
            let spec = RunSpec { set_id: set_id.clone(), annotator_id: annotator, radius };
            let path = store.set_path(&set_id);
            let run = match autotag_corpus(client.as_ref(), &template, store.registry(), &corpus, &spec, &config) {
                Ok(run) => run,
                Err(AutotagError::EndpointUnreachable { detail, partial }) => {
                    save_run(&partial, &path)?;
                    let _ = writeln!(
                        err,
                        "partial set with {} annotations written to {}; failures in {}",
                        partial.set.len(),
                        path.display(),
                        failures_path(&path).display()
                    );
                    return Err(Failure::new("EndpointUnreachable", detail));
                }
                Err(e) => return Err(e.into()),
            };
            save_run(&run, &path)?;
            let m = &run.manifest;
            let mut text = String::new();
            let _ = writeln!(text, "set: {}", path.display());
            let _ = writeln!(text, "manifest: {}", manifest_path(&path).display());
            let _ = writeln!(text, "failures: {}", failures_path(&path).display());
            let _ = writeln!(
                text,
                "annotated {} of {} units ({} failed)",
                m.units_annotated, m.units_total, m.units_failed
            );
            w(out, &text)
        }
        Command::Compare { gold, other, format, max_discrepancies } => {
            let format = ReportFormat::from_str(&format)?;
            let store = Store::open(&cli.store)?;
            let (g, corpus) = store.load_set(&gold)?;
            let (o, _) = store.load_set(&other)?;
            let report = compare(&g, &o, &corpus)?;
            w(out, &render_comparison(&report, format, max_discrepancies))
        }
        Command::Report { debate1, debate2, sets, tags, format, notes, mode } => {
            let format = MetricsFormat::from_str(&format)?;
            let mode = CountMode::from_str(&mode)?;
            if sets.len() != 2 {
                return Err(Failure::new(
                    "InvalidArgument",
                    format!("--sets needs exactly two set ids, got {}", sets.len()),
                ));
            }
            let store = Store::open(&cli.store)?;
            let reg = store.registry();
            let mut tables = Vec::with_capacity(2);
            for (debate, set_id) in [&debate1, &debate2].into_iter().zip(&sets) {
                let (set, corpus) = store.load_set(set_id)?;
                if set.debate_id() != debate {
                    return Err(Failure::new(
                        "DebateMismatch",
                        format!("set {set_id:?} annotates {:?}, not {debate:?}", set.debate_id()),
                    ));
                }
                tables.push(tag_frequencies(&set, &corpus, FrequencyOptions { mode, include_moderators: false })?);
            }
            let tag_names: Vec<String> =
                tags.unwrap_or_else(|| DEFAULT_REPORT_TAGS.iter().map(|s| s.to_string()).collect());
            let codes = tag_names
                .iter()
                .map(|t| reg.resolve(t).map(|d| d.code.clone()))
                .collect::<Result<Vec<TagCode>, _>>()?;
            let notes = match notes {
                Some(p) => parse_notes(&read_file(&p)?, reg)?,
                None => Default::default(),
            };
            let cmp = compare_debates(reg, &tables[0], &tables[1], &codes, &notes)?;
            w(out, &render_metrics(&cmp, format))
        }
        Command::Top { set, speaker, k, mode } => {
            let mode = CountMode::from_str(&mode)?;
            let store = Store::open(&cli.store)?;
            let (s, corpus) = store.load_set(&set)?;
            let speaker = speaker.split_whitespace().map(str::to_uppercase).collect::<Vec<_>>().join(" ");
            let table = tag_frequencies(&s, &corpus, FrequencyOptions { mode, include_moderators: true })?;
            let ranked = top_k_categories(&table, &speaker, k, &default_eligible(store.registry()))?;
            let mut text = String::new();
            for (i, (tag, n)) in ranked.iter().enumerate() {
                let name = store.registry().get(tag).map(|d| d.name.as_str()).unwrap_or("");
                let _ = writeln!(text, "{}. {tag} {name}: {n}", i + 1);
            }
            w(out, &text)
        }
        Command::Serve { port, bind, static_dir, endpoint_config } => {
            let mut config = beads_service::ServeConfig::new(&cli.store);
            config.port = port;
            config.bind = bind;
            config.static_dir = static_dir;
            config.options.endpoint_config = endpoint_config;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new("IoFailure", e.to_string()))?;
            rt.block_on(beads_service::serve(config)).map_err(|e| {
                let kind = match e {
                    beads_service::ServeError::PortInUse(_) => "PortInUse",
                    beads_service::ServeError::StoreUnreadable(_) => "StoreUnreadable",
                    _ => "IoFailure",
                };
                Failure::new(kind, e.to_string())
            })
        }
    }
}

fn render_stats(debate_id: &str, stats: &CorpusStats, json: bool) -> String {
    if json {
        return serde_json::to_string_pretty(stats).expect("stats serialise") + "\n";
    }
    let mut s = String::new();
    let _ = writeln!(s, "debate: {debate_id}");
    let _ = writeln!(s, "words: {}", stats.word_count);
    let _ = writeln!(s, "units: {}", stats.unit_count);
    for (speaker, st) in &stats.per_speaker {
        let _ = writeln!(s, "  {speaker}: {} words, {} units", st.word_count, st.unit_count);
    }
    s
}
