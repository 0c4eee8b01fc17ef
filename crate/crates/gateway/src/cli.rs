//! `valrank` command line.
//!
//! Every command prints canonical JSON with `--json`, byte for byte the body
//! the matching HTTP endpoint returns. Exit codes: 0 success, 1 operation
//! failure, 2 usage error.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use valrank_core::query::DecisionOption;
use valrank_core::sim::GeneratorConfig;
use valrank_core::{
    Clock, IndicatorId, NewAchievement, NewResource, Owner, PsvDocument, ResourceId, ResourceKind, ValueSystemId,
};

use crate::error::ApiError;
use crate::service::{
    render, DecisionRequest, EpochRequest, LeagueInitRequest, QueryRequest, RankingParams, Service, ServiceConfig,
    SimulateRequest, VsRef,
};

#[derive(Debug, Parser)]
#[command(name = "valrank", version, about = "Rank academic resources under explicit value systems")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "VALRANK_STORE", default_value = "valrank-store")]
    store: PathBuf,
    /// Print canonical JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create an empty store with the starter indicators.
    Init,
    /// Import achievements from CSV
    /// (owner,category,year,attr_name,attr_value,evidence_uri).
    Import {
        file: PathBuf,
        /// Import nothing if any row fails.
        #[arg(long)]
        atomic: bool,
    },
    /// Register a person, unit or organization.
    Register {
        #[arg(long)]
        kind: ResourceKind,
        #[arg(long)]
        name: String,
        #[arg(long)]
        member_of: Option<ResourceId>,
        #[arg(long)]
        id: Option<ResourceId>,
    },
    /// Value system commands.
    Psv {
        #[command(subcommand)]
        command: PsvCommand,
    },
    /// Rank resources of one kind.
    Rank {
        /// Stored value system id or a value system JSON file.
        #[arg(long)]
        vs: String,
        #[arg(long, default_value = "person")]
        kind: String,
        /// Query clauses, e.g. `cit>=10 AND unit="AI Dept"`.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Assessment report of one resource within its kind.
    Report {
        resource: ResourceId,
        /// Defaults to the resource's own value system.
        #[arg(long)]
        vs: Option<String>,
    },
    /// Run a query; with `--option` it is a decision.
    Query {
        text: String,
        #[arg(long)]
        caller: Option<ResourceId>,
        #[arg(long)]
        vs: Option<ValueSystemId>,
        /// Decision option as `name=res1,res2`. Repeatable.
        #[arg(long = "option")]
        options: Vec<String>,
    },
    /// Three-league model.
    League {
        #[command(subcommand)]
        command: LeagueCommand,
    },
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Audit log commands.
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
}

#[derive(Debug, Subcommand)]
enum PsvCommand {
    /// Store a value system from a file or from flags.
    Set {
        /// Value system JSON document.
        #[arg(long, conflicts_with_all = ["owner", "weight", "label"])]
        file: Option<PathBuf>,
        /// Owning resource id or `collective`.
        #[arg(long, required_unless_present = "file")]
        owner: Option<Owner>,
        #[arg(long)]
        label: Option<String>,
        /// Weight as `indicator=number`. Repeatable.
        #[arg(long, required_unless_present = "file")]
        weight: Vec<String>,
        #[arg(long)]
        id: Option<ValueSystemId>,
    },
}

#[derive(Debug, Subcommand)]
enum LeagueCommand {
    /// Split a population into senior, middle and junior leagues.
    Init {
        /// Senior, middle and junior sizes, e.g. `3,3,4`.
        #[arg(long, value_parser = parse_sizes)]
        sizes: [usize; 3],
        /// Members exchanged between adjacent leagues per epoch.
        #[arg(long)]
        exchange: Option<usize>,
        #[arg(long)]
        seed_vs: ValueSystemId,
        /// Defaults to every person.
        #[arg(long, value_delimiter = ',')]
        population: Option<Vec<ResourceId>>,
    },
    /// Run one epoch.
    Epoch {
        /// JSON array of achievements to attach first.
        #[arg(long)]
        achievements: Option<PathBuf>,
    },
    /// Project epochs forward without changing the store.
    Simulate {
        #[arg(long)]
        epochs: u64,
        #[arg(long)]
        seed: u64,
        /// Generator config JSON.
        #[arg(long)]
        generator: Option<PathBuf>,
    },
    /// Print the current leagues.
    Show,
}

#[derive(Debug, Subcommand)]
enum AuditCommand {
    /// Rebuild the state from the audit log and compare digests.
    Replay,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Reject all writes.
    #[arg(long)]
    read_only: bool,
    /// Bearer token required for writes.
    #[arg(long, env = "VALRANK_TOKEN")]
    token: Option<String>,
}

/// Run the CLI and return the process exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let clock = Clock::from_env();
    match execute(cli, clock, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn open(store: &Path, read_only: bool, clock: Clock) -> Result<Service, ApiError> {
    Service::open(store, ServiceConfig { read_only, clock })
}

fn read_file(path: &Path) -> Result<Vec<u8>, ApiError> {
    std::fs::read(path).map_err(|e| ApiError::new("IO_ERROR", format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ApiError> {
    serde_json::from_slice(&read_file(path)?)
        .map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))
}

/// A path to an existing file (or anything that looks like one) is read as
/// a value system document; anything else is a stored id.
fn vs_ref(arg: &str) -> Result<VsRef, ApiError> {
    let path = Path::new(arg);
    if path.is_file() || arg.ends_with(".json") || arg.contains(std::path::MAIN_SEPARATOR) {
        return Ok(VsRef::Inline(read_json(path)?));
    }
    ValueSystemId::new(arg)
        .map(VsRef::Id)
        .map_err(|e| valrank_core::DomainError::from(e).into())
}

fn parse_weights(items: &[String]) -> Result<valrank_core::Weights, ApiError> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| ApiError::bad_request(format!("weight {item:?} is not indicator=number")))?;
            let id = IndicatorId::new(k).map_err(valrank_core::DomainError::from)?;
            let w = v
                .parse::<f64>()
                .map_err(|_| ApiError::bad_request(format!("weight {v:?} is not a number")))?;
            Ok((id, w))
        })
        .collect()
}

fn parse_sizes(s: &str) -> Result<[usize; 3], String> {
    let parts = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<usize>| format!("expected three sizes, got {}", v.len()))
}

fn parse_option(item: &str) -> Result<DecisionOption, ApiError> {
    let (name, list) = item
        .split_once('=')
        .ok_or_else(|| ApiError::bad_request(format!("option {item:?} is not name=res1,res2")))?;
    let resources = list
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| ResourceId::new(s).map_err(|e| valrank_core::DomainError::from(e).into()))
        .collect::<Result<_, ApiError>>()?;
    Ok(DecisionOption {
        option_id: name.to_string(),
        resources,
    })
}

struct Printer<'a> {
    out: &'a mut dyn Write,
    json: bool,
}

impl Printer<'_> {
    /// JSON when asked for, `text(value)` otherwise.
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce(&T) -> String) -> Result<(), ApiError> {
        let s = if self.json { render(value) } else { text(value) };
        self.out
            .write_all(s.as_bytes())
            .map_err(|e| ApiError::new("IO_ERROR", e.to_string()))
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn ranking_text(list: &valrank_core::RankingList) -> String {
    let mut s = format!("value system {}\n", list.value_system);
    for e in &list.entries {
        s.push_str(&format!("{:>4}  {:<20} {:.6}\n", e.rank, e.resource.as_str(), e.score));
    }
    s
}

fn league_text(l: &valrank_core::LeagueSnapshot) -> String {
    let mut s = format!("epoch {}\n", l.epoch);
    for (name, members) in &l.leagues {
        let leader = l.leaders.get(name).map_or("-", |r| r.as_str());
        let names: Vec<_> = members.iter().map(ResourceId::as_str).collect();
        s.push_str(&format!("{name:<7} leader {leader:<12} {}\n", names.join(" ")));
    }
    s
}

fn execute(cli: Cli, clock: Clock, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), ApiError> {
    let mut p = Printer { out, json: cli.json };
    let store = cli.store.as_path();
    match cli.command {
        Command::Init => {
            let (_, report) = Service::init(store, clock)?;
            p.emit(&report, |r| format!("initialized {} (digest {})\n", store.display(), r.digest))
        }
        Command::Import { file, atomic } => {
            let csv = read_file(&file)?;
            let report = open(store, false, clock)?.import(&csv, atomic)?;
            p.emit(&report, |r| {
                let mut s = format!("imported {} achievements\n", r.imported.len());
                for e in &r.errors {
                    s.push_str(&format!("line {}: {}: {}\n", e.line, e.code, e.message));
                }
                s
            })
        }
        Command::Register {
            kind,
            name,
            member_of,
            id,
        } => {
            let r = open(store, false, clock)?.register(NewResource {
                id,
                kind,
                display_name: name,
                member_of,
            })?;
            p.emit(&r, |r| format!("registered {} {}\n", r.kind.as_str(), r.id))
        }
        Command::Psv {
            command:
                PsvCommand::Set {
                    file,
                    owner,
                    label,
                    weight,
                    id,
                },
        } => {
            let mut doc: PsvDocument = match file {
                Some(f) => read_json(&f)?,
                None => PsvDocument {
                    id: None,
                    owner: owner.expect("clap requires owner without file"),
                    label: label.unwrap_or_default(),
                    weights: parse_weights(&weight)?,
                },
            };
            if id.is_some() {
                doc.id = id;
            }
            let vs = open(store, false, clock)?.create_value_system(doc)?;
            p.emit(&vs, |v| format!("stored value system {}\n", v.id))
        }
        Command::Rank { vs, kind, filter } => {
            let vs = vs_ref(&vs)?;
            let list = open(store, true, clock)?.rankings(RankingParams { kind, vs, filter })?;
            p.emit(&list, ranking_text)
        }
        Command::Report { resource, vs } => {
            let vs = vs.as_deref().map(vs_ref).transpose()?;
            let report = open(store, true, clock)?.report(&resource, vs)?;
            p.emit(&report, pretty)
        }
        Command::Query {
            text,
            caller,
            vs,
            options,
        } => {
            let svc = open(store, true, clock)?;
            let result = if options.is_empty() {
                svc.query(QueryRequest { text, caller, vs })?
            } else {
                let options = options.iter().map(|o| parse_option(o)).collect::<Result<_, _>>()?;
                svc.decide(DecisionRequest {
                    text,
                    options,
                    caller,
                    vs,
                })?
            };
            p.emit(&result, |r| {
                if let Some(d) = &r.decision {
                    d.iter()
                        .map(|o| format!("{:>4}  {:<20} {:.6}\n", o.rank, o.option_id, o.score))
                        .collect()
                } else if let Some(list) = &r.ranking {
                    ranking_text(list)
                } else if r.reports.is_some() {
                    pretty(&r.reports)
                } else {
                    r.matches.iter().map(|m| format!("{m}\n")).collect()
                }
            })
        }
        Command::League { command } => match command {
            LeagueCommand::Init {
                sizes,
                exchange,
                seed_vs,
                population,
            } => {
                let snap = open(store, false, clock)?.league_init(LeagueInitRequest {
                    population,
                    seed_vs,
                    league_sizes: sizes,
                    exchange_count: exchange,
                })?;
                p.emit(&snap, league_text)
            }
            LeagueCommand::Epoch { achievements } => {
                let achievements: Vec<NewAchievement> = match achievements {
                    Some(f) => read_json(&f)?,
                    None => Vec::new(),
                };
                let outcome = open(store, false, clock)?.league_epoch(EpochRequest { achievements })?;
                p.emit(&outcome, |o| {
                    let mut s = String::new();
                    for x in &o.exchanges {
                        let names = |v: &[ResourceId]| v.iter().map(ResourceId::as_str).collect::<Vec<_>>().join(",");
                        s.push_str(&format!(
                            "{} -> {}: {}; {} -> {}: {}\n",
                            x.upper,
                            x.lower,
                            names(&x.relegated),
                            x.lower,
                            x.upper,
                            names(&x.promoted)
                        ));
                    }
                    s + &league_text(&o.league)
                })
            }
            LeagueCommand::Simulate {
                epochs,
                seed,
                generator,
            } => {
                let generator: Option<GeneratorConfig> = generator.map(|g| read_json(&g)).transpose()?;
                let sim = open(store, true, clock)?.league_simulate(SimulateRequest {
                    epochs,
                    seed,
                    generator,
                })?;
                p.emit(&sim, |s| {
                    format!(
                        "{}final digest {}\n",
                        league_text(s.final_snapshot()),
                        s.final_digest
                    )
                })
            }
            LeagueCommand::Show => {
                let snap = open(store, true, clock)?.league()?;
                p.emit(&snap, league_text)
            }
        },
        Command::Audit {
            command: AuditCommand::Replay,
        } => {
            let report = open(store, true, clock)?.replay()?;
            p.emit(&report, |r| {
                format!(
                    "{} events; snapshot {} replayed {}: {}\n",
                    r.events,
                    r.snapshot_digest,
                    r.replayed_digest,
                    if r.consistent { "consistent" } else { "INCONSISTENT" }
                )
            })?;
            if report.consistent {
                Ok(())
            } else {
                Err(ApiError::new("REPLAY_INCONSISTENT", "replayed state differs from the snapshot"))
            }
        }
        Command::Serve(args) => serve(store, args, clock, p.out, err),
    }
}

fn serve(store: &Path, args: ServeArgs, clock: Clock, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), ApiError> {
    let service = Arc::new(open(
        store,
        args.read_only,
        clock,
    )?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| ApiError::internal(e.to_string()))?;
    runtime.block_on(async {
        let listener = crate::http::bind(SocketAddr::new(args.bind, args.port)).await?;
        let addr = listener.local_addr().map_err(|e| ApiError::new("IO_ERROR", e.to_string()))?;
        let _ = writeln!(out, "listening on http://{addr}");
        let _ = out.flush();
        let router = crate::http::router(service, args.token);
        crate::http::serve(listener, router, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    let _ = writeln!(err, "shut down");
    Ok(())
}
