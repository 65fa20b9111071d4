//! `medreview review | import | serve`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use medreview_core::review::{run_review, ReviewReport};
use medreview_core::rules::{compile, parse_rules};
use medreview_core::{FixturePaths, Knowledge};
use medreview_service::hub::import_record;
use medreview_service::store::FileStore;
use medreview_service::{Hub, HubConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "medreview",
    version,
    about = "Medication review decision support"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Review one patient document and write the view models as JSON files.
    Review(ReviewArgs),
    /// Import a patient document into the data directory.
    Import(ImportArgs),
    /// Run the collaborative review service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct KnowledgeFlags {
    /// Directory holding the knowledge files under their usual names.
    #[arg(long, env = "MEDREVIEW_FIXTURES", default_value = "fixtures")]
    fixtures: PathBuf,
    #[arg(long, env = "MEDREVIEW_RULES")]
    rules: Option<PathBuf>,
    #[arg(long, env = "MEDREVIEW_TERMINOLOGY")]
    terminology: Option<PathBuf>,
    #[arg(long, env = "MEDREVIEW_DRUGDB")]
    drugdb: Option<PathBuf>,
    #[arg(long, env = "MEDREVIEW_INTERACTIONS")]
    interactions: Option<PathBuf>,
    #[arg(long, env = "MEDREVIEW_LEXICON")]
    lexicon: Option<PathBuf>,
}

impl KnowledgeFlags {
    fn paths(&self) -> FixturePaths {
        let mut paths = FixturePaths::in_dir(&self.fixtures);
        let set = |slot: &mut PathBuf, v: &Option<PathBuf>| {
            if let Some(p) = v {
                *slot = p.clone();
            }
        };
        set(&mut paths.terminology, &self.terminology);
        set(&mut paths.drugdb, &self.drugdb);
        set(&mut paths.interactions, &self.interactions);
        set(&mut paths.lexicon, &self.lexicon);
        paths
    }

    fn rules(&self) -> PathBuf {
        self.rules
            .clone()
            .unwrap_or_else(|| self.fixtures.join("rules.txt"))
    }

    fn knowledge(&self) -> Result<Knowledge> {
        Ok(Knowledge::load(&self.paths())?)
    }
}

#[derive(Args)]
struct ReviewArgs {
    /// Patient import document (JSON).
    patient: PathBuf,
    #[command(flatten)]
    knowledge: KnowledgeFlags,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Emit the color-blind palette in interaction views.
    #[arg(long)]
    color_blind: bool,
}

#[derive(Args)]
struct ImportArgs {
    /// Patient import document (JSON).
    document: PathBuf,
    #[command(flatten)]
    knowledge: KnowledgeFlags,
    #[arg(long, env = "MEDREVIEW_DATA_DIR")]
    data_dir: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    knowledge: KnowledgeFlags,
    #[arg(long, env = "MEDREVIEW_LISTEN", default_value = "127.0.0.1:8080")]
    listen: String,
    /// Where patient records are kept, one JSON file each.
    #[arg(long, env = "MEDREVIEW_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Token file: `token<TAB>user<TAB>role`.
    #[arg(long, env = "MEDREVIEW_USERS")]
    users: Option<PathBuf>,
    /// Tab dependency table.
    #[arg(long, env = "MEDREVIEW_DEPENDENCIES")]
    dependencies: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let path = dir.join(name);
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn write_report(out: &Path, report: &ReviewReport) -> Result<Vec<&'static str>> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut written = vec![
        "alerts.json",
        "glyph_pre.json",
        "interactions_pre.json",
        "posology.json",
    ];
    write_json(out, "alerts.json", &report.alerts)?;
    write_json(out, "glyph_pre.json", &report.glyph_pre)?;
    write_json(out, "interactions_pre.json", &report.interactions_pre)?;
    write_json(out, "posology.json", &report.posology)?;
    if let Some(g) = &report.glyph_post {
        write_json(out, "glyph_post.json", g)?;
        written.push("glyph_post.json");
    }
    if let Some(i) = &report.interactions_post {
        write_json(out, "interactions_post.json", i)?;
        written.push("interactions_post.json");
    }
    for stale in ["glyph_post.json", "interactions_post.json"] {
        if !written.contains(&stale) {
            let _ = std::fs::remove_file(out.join(stale));
        }
    }
    Ok(written)
}

fn review(args: &ReviewArgs) -> Result<ExitCode> {
    let knowledge = args.knowledge.knowledge()?;
    let rules_path = args.knowledge.rules();
    let rules = parse_rules(&read(&rules_path)?, &knowledge.terminology)
        .with_context(|| format!("{}", rules_path.display()))?;
    let plan = compile(&rules, &knowledge.terminology)
        .with_context(|| format!("{}", rules_path.display()))?;
    let record = import_record(&read(&args.patient)?, &knowledge)
        .with_context(|| format!("{}", args.patient.display()))?;
    let report = run_review(&plan, &record, &knowledge, args.color_blind)?;
    let written = write_report(&args.out, &report)?;

    let alerts = report.alerts.pre.alerts.len();
    println!(
        "{}: {alerts} alert(s); wrote {} to {}",
        record.patient_id,
        written.join(", "),
        args.out.display()
    );
    for note in report.notes() {
        eprintln!(
            "note: rule {} could not be decided ({}): {}",
            note.rule,
            note.phase.as_str(),
            note.reason
        );
    }
    for issue in &report.import_issues {
        eprintln!(
            "import: {} #{} dropped: {}",
            issue.section, issue.index, issue.reason
        );
    }
    Ok(if report.has_quality_issues() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn import(args: &ImportArgs) -> Result<ExitCode> {
    let knowledge = args.knowledge.knowledge()?;
    let record = import_record(&read(&args.document)?, &knowledge)
        .with_context(|| format!("{}", args.document.display()))?;
    let store = FileStore::open(&args.data_dir)?;
    let path = store.path_of(&record.patient_id)?;
    if path.exists() {
        anyhow::bail!("{} already exists", path.display());
    }
    store.save(&record)?;
    println!(
        "imported {} (revision {}) into {}",
        record.patient_id,
        record.revision,
        path.display()
    );
    for issue in &record.import_issues {
        eprintln!(
            "import: {} #{} dropped: {}",
            issue.section, issue.index, issue.reason
        );
    }
    Ok(if record.import_issues.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

async fn serve(args: &ServeArgs) -> Result<ExitCode> {
    let k = &args.knowledge;
    let config = HubConfig {
        fixtures: k.paths(),
        rules: k.rules(),
        dependencies: args
            .dependencies
            .clone()
            .unwrap_or_else(|| k.fixtures.join("tab_dependencies.tsv")),
        users: args
            .users
            .clone()
            .unwrap_or_else(|| k.fixtures.join("users.tsv")),
        data_dir: args.data_dir.clone(),
    };
    let hub = Arc::new(Hub::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(&args.listen)
        .await
        .with_context(|| format!("cannot listen on {}", args.listen))?;
    let addr = listener.local_addr()?;
    println!(
        "medreview listening on http://{addr} ({} patients)",
        hub.patient_ids().len()
    );
    medreview_service::serve(listener, hub, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Review(a) => review(a),
        Command::Import(a) => import(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()
            .context("cannot start the runtime")
            .and_then(|rt| rt.block_on(serve(a))),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
