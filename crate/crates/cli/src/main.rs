use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use quicprobe::dissector::{self, render_html, render_text, DescriptionSet};
use quicprobe::scenarios::{self, parse_targets, run_suite, SuitePlan};
use quicprobe::traces::{metrics, read_corpus, read_trace, render_grid, write_trace, Trace};

#[derive(Parser)]
#[command(name = "quicprobe", version, about = "Black-box conformance tests for QUIC servers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios against a list of targets and write one trace each.
    Run(RunArgs),
    /// Compute metrics, results grids and trace pages for a trace directory.
    Postprocess(PostprocessArgs),
    /// Print the dissected packets of a trace, or of one hex-encoded packet.
    Dissect(DissectArgs),
    /// List scenarios and their error codes.
    Scenarios,
}

#[derive(Args)]
struct RunArgs {
    /// File with one `name,host:port` per line.
    #[arg(long)]
    targets: PathBuf,
    /// Comma-separated scenario names, or `all`.
    #[arg(long, default_value = "all")]
    scenarios: String,
    /// Seed for the scenario order and connection IDs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    /// Trace directory; traces go to `<out>/<date>/`.
    #[arg(long)]
    out: PathBuf,
    /// Targets tested concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Seed of the scripted handshake; must match the server's `--seed`.
    #[arg(long, default_value_t = 0)]
    provider_seed: u64,
}

#[derive(Args)]
struct PostprocessArgs {
    /// Trace directory written by `run`. Reports are written into it.
    corpus: PathBuf,
    /// Skip the per-trace HTML pages.
    #[arg(long)]
    no_pages: bool,
    /// Extra protocol descriptions for other versions.
    #[arg(long = "description")]
    descriptions: Vec<PathBuf>,
}

#[derive(Args)]
struct DissectArgs {
    /// Trace file to dissect.
    #[arg(required_unless_present = "hex")]
    trace: Option<PathBuf>,
    /// Dissect one cleartext packet given as hex instead.
    #[arg(long, conflicts_with = "trace")]
    hex: Option<String>,
    /// Destination connection ID length for short headers with `--hex`.
    #[arg(long, default_value_t = 8)]
    dcid_len: u8,
    /// Only this packet of the trace (0-based).
    #[arg(long)]
    packet: Option<usize>,
    /// Emit HTML fragments instead of text.
    #[arg(long)]
    html: bool,
    #[arg(long = "description")]
    descriptions: Vec<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Postprocess(args) => postprocess(args),
        Command::Dissect(args) => dissect(args),
        Command::Scenarios => {
            list_scenarios();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn select_scenarios(spec: &str) -> Result<Vec<String>> {
    if spec == "all" {
        return Ok(scenarios::scenario_names().into_iter().map(String::from).collect());
    }
    let mut names = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        if scenarios::find(name).is_none() {
            bail!("unknown scenario `{name}` (known: {})", scenarios::scenario_names().join(", "));
        }
        names.push(name.to_string());
    }
    if names.is_empty() {
        bail!("no scenarios selected");
    }
    Ok(names)
}

fn run(args: RunArgs) -> Result<()> {
    let text = fs::read_to_string(&args.targets)
        .with_context(|| format!("reading {}", args.targets.display()))?;
    let targets = parse_targets(&text).with_context(|| format!("parsing {}", args.targets.display()))?;
    if targets.is_empty() {
        bail!("{} lists no targets", args.targets.display());
    }
    let mut plan = SuitePlan::new(targets);
    plan.scenarios = select_scenarios(&args.scenarios)?;
    plan.seed = args.seed;
    plan.timeout = Duration::from_millis(args.timeout_ms);
    plan.parallel = args.parallel.max(1);
    plan.provider_seed = args.provider_seed;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let failures = Mutex::new(Vec::new());
    let sink = |trace: &Trace| match write_trace(&args.out, trace) {
        Ok(path) => println!(
            "{:<20} {:<28} {:>3}  {}",
            trace.target.name,
            trace.scenario,
            trace.error_code,
            path.display()
        ),
        Err(e) => failures.lock().expect("not poisoned").push(e.to_string()),
    };
    let traces = run_suite(&plan, &sink);
    let failures = failures.into_inner().expect("not poisoned");
    for f in &failures {
        eprintln!("error: {f}");
    }
    if !failures.is_empty() {
        bail!("{} of {} traces could not be written", failures.len(), traces.len());
    }
    Ok(())
}

fn load_descriptions(extra: &[PathBuf]) -> Result<DescriptionSet> {
    let mut set = DescriptionSet::builtin();
    for path in extra {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let desc = dissector::load_description(&text).with_context(|| format!("loading {}", path.display()))?;
        set.insert(desc);
    }
    Ok(set)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn csv_file<E>(path: &Path, write: impl FnOnce(fs::File) -> Result<(), E>) -> Result<()>
where
    E: std::error::Error + Send + Sync + 'static,
{
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write(file).with_context(|| format!("writing {}", path.display()))
}

fn postprocess(args: PostprocessArgs) -> Result<()> {
    let descriptions = load_descriptions(&args.descriptions)?;
    let (corpus, warnings) = read_corpus(&args.corpus)?;
    for w in &warnings {
        eprintln!("warning: {}: {}", w.path.display(), w.message);
    }
    if corpus.is_empty() {
        bail!("no traces under {}", args.corpus.display());
    }
    let root = &args.corpus;
    csv_file(&root.join("versions.csv"), |f| metrics::write_versions_csv(&metrics::versions_over_time(&corpus), f))?;
    csv_file(&root.join("handshake.csv"), |f| metrics::write_handshake_csv(&metrics::handshake_success(&corpus), f))?;
    csv_file(&root.join("outcomes.csv"), |f| metrics::write_outcomes_csv(&metrics::outcomes(&corpus), f))?;
    for date in corpus.dates() {
        let grid = render_grid(&corpus, &date);
        write_file(&root.join(format!("grid-{date}.html")), grid.to_html(!args.no_pages))?;
        csv_file(&root.join(format!("grid-{date}.csv")), |f| grid.write_csv(f))?;
    }
    let mut pages = 0;
    if !args.no_pages {
        for entry in corpus.iter() {
            let page = root.join(&entry.path).with_extension("html");
            write_file(&page, dissector::render_trace_page(&entry.trace, &descriptions))?;
            pages += 1;
        }
    }
    println!(
        "{} traces over {} date(s); wrote metrics, grids and {pages} trace page(s) to {}",
        corpus.len(),
        corpus.dates().len(),
        root.display()
    );
    Ok(())
}

fn dissect(args: DissectArgs) -> Result<()> {
    let descriptions = load_descriptions(&args.descriptions)?;
    let render = |bytes: &[u8], dcid_len: u8| {
        let tree = descriptions.dissect(bytes, dcid_len);
        if args.html {
            render_html(&tree) + "\n"
        } else {
            render_text(&tree)
        }
    };
    if let Some(hex) = &args.hex {
        let bytes = decode_hex(hex)?;
        print!("{}", render(&bytes, args.dcid_len));
        return Ok(());
    }
    let path = args.trace.as_ref().expect("clap requires a trace without --hex");
    let trace = read_trace(path).map_err(anyhow::Error::msg).with_context(|| format!("reading {}", path.display()))?;
    let meaning = scenarios::describe(&trace.scenario, trace.error_code).unwrap_or("unknown code");
    println!("{} / {}: error code {} ({meaning})", trace.target.name, trace.scenario, trace.error_code);
    if let Some(i) = args.packet {
        if i >= trace.packets.len() {
            bail!("trace has {} packets", trace.packets.len());
        }
    }
    for (i, p) in trace.packets.iter().enumerate() {
        if args.packet.is_some_and(|only| only != i) {
            continue;
        }
        println!("\n#{i} {:?} {} ms {} conn {}", p.direction, p.timestamp_ms, p.level, p.connection);
        match p.cleartext() {
            Some(bytes) => print!("{}", render(&bytes, p.dcid_len)),
            None => println!("(cleartext is not valid hex)"),
        }
    }
    Ok(())
}

fn decode_hex(text: &str) -> Result<Vec<u8>> {
    let clean: String = text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    let clean = clean.strip_prefix("0x").unwrap_or(&clean);
    hex::decode(clean).with_context(|| format!("`{text}` is not a hex string"))
}

fn list_scenarios() {
    for scenario in scenarios::registry() {
        let prerequisite = if scenario.requires_handshake() { ", requires a handshake" } else { "" };
        println!("{} (version {}{prerequisite})", scenario.name(), scenario.version());
        for (code, meaning) in scenario.codes() {
            println!("  {code:>3}  {meaning}");
        }
    }
    println!("common codes:");
    for (code, meaning) in scenarios::COMMON_CODES {
        println!("  {code:>3}  {meaning}");
    }
}
