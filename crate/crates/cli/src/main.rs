//! `slarkit`: learn stationary chain models from system logs and check
//! steady-state safety properties against them.
//!
//! Exit codes: 0 verified, 1 violated, 2 inconclusive, 3 operational error.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use slarkit_cli::config::RunConfig;
use slarkit_cli::model_io::{model_from_json, model_to_dot, model_to_json};
use slarkit_cli::property::{parse_property, parse_property_file, print_property};
use slarkit_cli::report_io::{
    report_from_json, report_to_doc, report_to_json, table_header, table_row,
};
use slarkit_cli::synth::{generate, log_to_csv, SyntheticSpec};

use slarkit_core::abstraction::{abstract_trace, parse_predicate, PredicateSet};
use slarkit_core::log::{downsample, parse_log, SystemLog};
use slarkit_core::markov::{
    stationary_with, unsafe_mass, unsafe_states, MarkovError, SafetyProperty,
};
use slarkit_core::pst::{grow_pst, pst_to_psa, SuffixStats};
use slarkit_core::refine::empirical_unsafe_probability;
use slarkit_core::slar::{run_slar, Outcome, SlarConfig};
use slarkit_core::StationaryChain;

#[derive(Parser)]
#[command(
    name = "slarkit",
    version,
    about = "Learn stationary Markov-chain models from system logs and verify steady-state safety properties"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Knob overrides; every flag overrides its config-file counterpart.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Growth threshold for the suffix tree
    #[arg(long)]
    epsilon: Option<f64>,
    /// Maximum suffix-context depth
    #[arg(long)]
    max_depth: Option<usize>,
    /// Keep one observation every N rows
    #[arg(long)]
    stride: Option<usize>,
    /// Epoch budget for the linear separator
    #[arg(long)]
    budget: Option<u32>,
    /// Refinement round cap
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Seed recorded with the run
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, mut config: SlarConfig) -> SlarConfig {
        if let Some(e) = self.epsilon {
            config.epsilon = e;
        }
        if let Some(d) = self.max_depth {
            config.max_depth = d;
        }
        if let Some(s) = self.stride {
            config.downsample_stride = s;
        }
        if let Some(b) = self.budget {
            config.classifier_budget = b;
        }
        if let Some(r) = self.max_rounds {
            config.max_rounds = r;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a chain model from a training log and write it as JSON
    Learn {
        /// Run configuration (schema plus learning knobs), TOML
        #[arg(long)]
        config: PathBuf,
        /// Training log, delimited text
        #[arg(long)]
        train: PathBuf,
        /// Property whose predicate seeds the abstraction, e.g. "LIT101 > 1100 @ r=0.15"
        #[arg(long)]
        property: String,
        /// Extra abstraction predicates, one per line
        #[arg(long)]
        predicates: Option<PathBuf>,
        /// Write the model JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a DOT rendering
        #[arg(long)]
        dot: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a stored model against a property
    Verify {
        /// Model JSON produced by `learn` or `slar`
        #[arg(long)]
        model: PathBuf,
        /// Property to check, e.g. "FIT101 > 2.6 @ r=0.2845"
        #[arg(long)]
        property: String,
    },
    /// Full learn-verify-validate-refine loop over a training and a testing log
    Slar {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Single property text
        #[arg(long, conflicts_with = "properties")]
        property: Option<String>,
        /// File of properties, one per line
        #[arg(long)]
        properties: Option<PathBuf>,
        /// Directory for report JSON (and model JSON when verified)
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate a synthetic log with exact ground truth
    Synth {
        /// Synthetic source spec, TOML
        #[arg(long)]
        spec: PathBuf,
        /// Write the log CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the ground-truth JSON here
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also report the exact long-run probability for these properties
        #[arg(long = "property")]
        properties: Vec<String>,
    },
    /// Render stored report JSON as table rows
    Report {
        /// Report files
        reports: Vec<PathBuf>,
        /// Skip the header line
        #[arg(long)]
        no_header: bool,
    },
}

fn read(path: &Path) -> Result<String, Box<dyn Error>> {
    fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()).into())
}

fn write_out(path: Option<&Path>, content: &str) -> Result<(), Box<dyn Error>> {
    match path {
        Some(path) => {
            fs::write(path, content).map_err(|e| format!("writing {}: {e}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

/// Mirrors the driver's learning step: grow, and retry once with a
/// five-fold stricter epsilon when the tree refuses to grow.
fn learn_chain(
    log: &SystemLog,
    predicates: &PredicateSet,
    config: &SlarConfig,
) -> Result<(StationaryChain, f64), Box<dyn Error>> {
    let trace = abstract_trace(log, predicates)?;
    let stats = SuffixStats::new(&trace, config.max_depth);
    let mut params = config.growth_params();
    let mut pst = grow_pst(&stats, &params)?;
    if pst.is_root_only() && empirical_unsafe_probability(&trace, 0) > 0.0 {
        params = params.scaled(0.2);
        pst = grow_pst(&stats, &params)?;
    }
    Ok((pst_to_psa(&pst)?, params.kl_threshold))
}

fn property_slug(property: &SafetyProperty) -> String {
    print_property(property)
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn outcome_exit(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Verified => 0,
        Outcome::Violated => 1,
        Outcome::Inconclusive => 2,
    }
}

fn run(cli: Cli) -> Result<u8, Box<dyn Error>> {
    match cli.command {
        Command::Learn {
            config,
            train,
            property,
            predicates,
            out,
            dot,
            overrides,
        } => {
            let run_config = RunConfig::parse(&read(&config)?)?;
            let schema = run_config.observation_schema()?;
            let slar_config = overrides.apply(run_config.slar_config());
            slar_config
                .validate()
                .map_err(|e| format!("invalid configuration: {e}"))?;
            let property = parse_property(&property)?;
            let mut predicate_set = PredicateSet::new(vec![property.to_predicate()])?;
            if let Some(path) = predicates {
                for line in read(&path)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                {
                    predicate_set.push(parse_predicate(line)?)?;
                }
            }
            let mut log = parse_log(&read(&train)?, &schema)?;
            if slar_config.downsample_stride > 1 {
                log = downsample(&log, slar_config.downsample_stride);
            }
            let (chain, _) = learn_chain(&log, &predicate_set, &slar_config)?;
            eprintln!(
                "learned {} states over alphabet of {} symbols",
                chain.len(),
                chain.alphabet().len()
            );
            write_out(out.as_deref(), &model_to_json(&chain, &predicate_set))?;
            if let Some(path) = dot {
                write_out(Some(&path), &model_to_dot(&chain))?;
            }
            Ok(0)
        }

        Command::Verify { model, property } => {
            let (chain, predicate_set) = model_from_json(&read(&model)?)?;
            let property = parse_property(&property)?;
            let states = unsafe_states(&chain, &property, &predicate_set)?;
            match stationary_with(&chain, 1e-12, 1_000_000) {
                Ok(mu) => {
                    let p_u = unsafe_mass(&mu, &states);
                    let verified = p_u <= property.threshold();
                    println!(
                        "P_u = {p_u} against r = {} -> {}",
                        property.threshold(),
                        if verified { "Verified" } else { "Violated" }
                    );
                    Ok(u8::from(!verified))
                }
                Err(MarkovError::ReducibleModel { components }) => {
                    println!(
                        "Inconclusive: model is reducible ({} terminal components)",
                        components.len()
                    );
                    Ok(2)
                }
                Err(e) => Err(e.into()),
            }
        }

        Command::Slar {
            config,
            train,
            test,
            property,
            properties,
            out_dir,
            overrides,
        } => {
            let run_config = RunConfig::parse(&read(&config)?)?;
            let schema = run_config.observation_schema()?;
            let slar_config = overrides.apply(run_config.slar_config());
            let mut props = Vec::new();
            if let Some(text) = property {
                props.push(parse_property(&text)?);
            }
            if let Some(path) = properties {
                props.extend(parse_property_file(&read(&path)?)?);
            }
            if props.is_empty() {
                return Err("no property given; use --property or --properties".into());
            }
            let train_log = parse_log(&read(&train)?, &schema)?;
            let test_log = parse_log(&read(&test)?, &schema)?;
            if let Some(dir) = &out_dir {
                fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
            }

            println!("{}", table_header());
            let mut worst = 0u8;
            for prop in &props {
                let started = Instant::now();
                let report = run_slar(&train_log, &test_log, prop, &slar_config)?;
                let elapsed = started.elapsed().as_secs_f64();
                let doc = report_to_doc(&report, elapsed, slar_config.epsilon);
                println!("{}", table_row(&doc));
                if let Some(dir) = &out_dir {
                    let slug = property_slug(prop);
                    fs::write(
                        dir.join(format!("report-{slug}.json")),
                        report_to_json(&doc),
                    )?;
                    if let Some(chain) = &report.chain {
                        fs::write(
                            dir.join(format!("model-{slug}.json")),
                            model_to_json(chain, &report.predicates),
                        )?;
                    }
                }
                worst = worst.max(outcome_exit(report.outcome));
            }
            Ok(worst)
        }

        Command::Synth {
            spec,
            out,
            truth,
            properties,
        } => {
            let spec = SyntheticSpec::parse(&read(&spec)?)?;
            let (log, ground_truth) = generate(&spec)?;
            write_out(out.as_deref(), &log_to_csv(&log))?;

            let mut truth_doc = serde_json::json!({
                "format_version": 1,
                "stationary": ground_truth.stationary,
            });
            let mut prop_entries = Vec::new();
            for text in &properties {
                let prop = parse_property(text)?;
                let p = ground_truth
                    .violation_probability(prop.variable(), prop.sense(), prop.bound())
                    .ok_or_else(|| format!("variable {} not in spec", prop.variable()))?;
                prop_entries.push(serde_json::json!({
                    "property": print_property(&prop),
                    "violation_probability": p,
                }));
            }
            truth_doc["properties"] = serde_json::Value::Array(prop_entries);
            let rendered = serde_json::to_string_pretty(&truth_doc)?;
            match truth {
                Some(path) => write_out(Some(&path), &rendered)?,
                None => {
                    if out.is_some() {
                        println!("{rendered}");
                    } else {
                        eprintln!("{rendered}");
                    }
                }
            }
            Ok(0)
        }

        Command::Report { reports, no_header } => {
            if !no_header {
                println!("{}", table_header());
            }
            for path in &reports {
                let doc = report_from_json(&read(path)?)?;
                println!("{}", table_row(&doc));
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors share the operational exit code so the outcome codes
    // 0/1/2 stay unambiguous for scripting.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
