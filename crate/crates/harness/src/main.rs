use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use led_core::toy::ThinkSpan;
use led_harness::bridge::{run_session, serve_tcp};
use led_harness::commands::{
    cmd_ablate, cmd_analyze, cmd_synthetic, cmd_toy_init, cmd_toy_run, AnalyzeOptions,
    ToyRunOutputs,
};
use led_harness::config::{RunConfig, SamplerName};
use led_harness::error::{io_at, usage};
use led_harness::metrics::fmt_g;
use led_harness::Result;

/// Latent exploration decoding harness.
#[derive(Parser)]
#[command(name = "led", version)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded toy-transformer weights.
    ToyInit(ToyInitArgs),
    /// Generate from a toy model and record the LED trace.
    ToyRun(ToyRunArgs),
    /// Exact and empirical pass@n on synthetic scenarios.
    Synthetic(SyntheticArgs),
    /// Entropy, coverage, decision and slope statistics from recorded files.
    Analyze(AnalyzeArgs),
    /// pass@n across LED ablation variants.
    Ablate(AblateArgs),
    /// Serve the logit-stream bridge protocol.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SamplerArgs {
    #[arg(long, value_enum)]
    sampler: Option<SamplerName>,
    /// Softmax temperature for every sampler.
    #[arg(long)]
    temperature: Option<f64>,
    /// LED candidate count.
    #[arg(long)]
    k: Option<usize>,
    /// LED layer depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Nucleus cut on LED candidates.
    #[arg(long)]
    led_top_p: Option<f64>,
    /// Apply LED outside the thinking span too.
    #[arg(long)]
    no_think_only: bool,
    /// Always take the exploration branch.
    #[arg(long)]
    no_exploit_gate: bool,
    #[arg(long)]
    renorm_topk: bool,
    #[arg(long)]
    latent_layernorm: bool,
    /// Baseline top-k.
    #[arg(long)]
    top_k: Option<usize>,
    /// Baseline nucleus mass.
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    greedy: bool,
    #[arg(long, value_delimiter = ',')]
    dola_layers: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SamplerArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.sampler {
            c.sampler = v;
        }
        if let Some(v) = self.temperature {
            c.led.temperature = v;
            c.baseline.temperature = v;
        }
        if let Some(v) = self.k {
            c.led.k = v;
        }
        if let Some(v) = self.depth {
            c.led.depth = v;
        }
        if let Some(v) = self.led_top_p {
            c.led.top_p = Some(v);
        }
        if self.no_think_only {
            c.led.think_only = false;
        }
        if self.no_exploit_gate {
            c.led.exploit_gate = false;
        }
        if self.renorm_topk {
            c.led.renorm_topk = true;
        }
        if self.latent_layernorm {
            c.led.latent_layernorm = true;
        }
        if let Some(v) = self.top_k {
            c.baseline.top_k = v;
        }
        if let Some(v) = self.top_p {
            c.baseline.top_p = v;
        }
        if self.greedy {
            c.baseline.greedy = true;
        }
        if let Some(v) = &self.dola_layers {
            c.baseline.dola_candidate_layers = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
    }
}

#[derive(Args)]
struct ToyInitArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    max_seq: Option<usize>,
}

#[derive(Args)]
struct ToyRunArgs {
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Comma-separated token ids.
    #[arg(long, value_delimiter = ',')]
    prompt: Option<Vec<usize>>,
    #[arg(long)]
    max_new: Option<usize>,
    /// Token id that opens the thinking span.
    #[arg(long, requires = "think_end")]
    think_begin: Option<usize>,
    /// Token id that closes the thinking span.
    #[arg(long, requires = "think_begin")]
    think_end: Option<usize>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    tokens_out: Option<PathBuf>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// All-layer logits per step, for `analyze --layers`.
    #[arg(long)]
    layers_out: Option<PathBuf>,
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    attempts: Option<usize>,
    #[arg(long)]
    questions: Option<usize>,
    /// Explicit scenario JSON.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    #[arg(long = "n", value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl BenchArgs {
    fn apply(&self, c: &mut RunConfig) {
        self.sampler.apply(c);
        if let Some(v) = self.attempts {
            c.attempts = v;
        }
        if let Some(v) = self.questions {
            c.questions = v;
        }
        if let Some(v) = &self.scenario_file {
            c.scenario_file = Some(v.clone());
        }
        if let Some(v) = &self.n_values {
            c.n_values = v.clone();
        }
    }
}

#[derive(Args)]
struct SyntheticArgs {
    #[command(flatten)]
    bench: BenchArgs,
    #[arg(long, value_enum, value_delimiter = ',')]
    samplers: Option<Vec<SamplerName>>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    bench: BenchArgs,
    /// Variants to run (default: all).
    #[arg(long, value_delimiter = ',')]
    variant: Option<Vec<String>>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// LED trace file or directory of .jsonl traces.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// All-layer logit file or directory.
    #[arg(long)]
    layers: Option<PathBuf>,
    /// Accuracy grid JSON for the slope fit.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Report entropy in nats instead of dividing by ln V.
    #[arg(long)]
    raw_entropy: bool,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long = "k", value_delimiter = ',', default_values_t = [1, 2, 4, 8, 16])]
    k_values: Vec<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Serve one session on stdin/stdout.
    #[arg(long, conflicts_with = "listen")]
    stdio: bool,
    /// TCP address, e.g. 127.0.0.1:7070.
    #[arg(long)]
    listen: Option<String>,
    /// Exit after this many TCP sessions.
    #[arg(long)]
    max_sessions: Option<usize>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

fn print_rows(label: &str, rows: &[led_harness::commands::PassRow]) {
    println!("{label},n,exact_pass,empirical_unbiased,empirical_prefix");
    for r in rows {
        println!(
            "{},{},{},{},{}",
            r.label,
            r.n,
            fmt_g(r.exact),
            fmt_g(r.empirical_unbiased),
            fmt_g(r.empirical_prefix)
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::ToyInit(a) => {
            let seed = a.seed.unwrap_or(cfg.seed);
            let toy = &mut cfg.toy;
            if let Some(v) = a.layers {
                toy.n_layers = v;
            }
            if let Some(v) = a.hidden {
                toy.hidden = v;
            }
            if let Some(v) = a.heads {
                toy.heads = v;
            }
            if let Some(v) = a.vocab {
                toy.vocab = v;
            }
            if let Some(v) = a.max_seq {
                toy.max_seq = v;
            }
            let checksum = cmd_toy_init(&a.out, toy, seed)?;
            println!("wrote {} (checksum {checksum:#010x})", a.out.display());
        }
        Command::ToyRun(a) => {
            a.sampler.apply(&mut cfg);
            if let Some(v) = a.weights {
                cfg.weights = Some(v);
            }
            if let Some(v) = a.prompt {
                cfg.prompt = v;
            }
            if let Some(v) = a.max_new {
                cfg.max_new = v;
            }
            if let (Some(begin), Some(end)) = (a.think_begin, a.think_end) {
                cfg.think_span = Some(ThinkSpan { begin, end });
            }
            let out = ToyRunOutputs {
                tokens: a.tokens_out,
                trace: a.trace_out,
                layers: a.layers_out,
                summary: a.summary_out,
            };
            let summary = cmd_toy_run(&cfg, &out)?;
            let tokens: Vec<String> = summary.tokens.iter().map(usize::to_string).collect();
            println!("{}", tokens.join(","));
        }
        Command::Synthetic(a) => {
            a.bench.apply(&mut cfg);
            if let Some(v) = a.samplers {
                cfg.samplers = v;
            }
            let rows = cmd_synthetic(&cfg, a.bench.out.as_deref())?;
            if a.bench.out.is_none() {
                print_rows("sampler", &rows);
            }
        }
        Command::Ablate(a) => {
            a.bench.apply(&mut cfg);
            if let Some(v) = a.variant {
                cfg.variants = v;
            }
            let rows = cmd_ablate(&cfg, a.bench.out.as_deref())?;
            if a.bench.out.is_none() {
                print_rows("variant", &rows);
            }
        }
        Command::Analyze(a) => {
            let opts = AnalyzeOptions {
                traces: a.traces,
                layers: a.layers,
                grid: a.grid,
                normalize: !a.raw_entropy,
                temperature: a.temperature,
                k_values: a.k_values,
                out_dir: a.out_dir,
            };
            let summary = cmd_analyze(&opts)?;
            if let Some(alpha) = summary.alpha {
                println!("alpha {}", fmt_g(alpha));
            }
            if let Some(s) = summary.decision_stats {
                println!("exploration rate {}", fmt_g(s.exploration_rate));
            }
            println!("wrote results to {}", opts.out_dir.display());
        }
        Command::Serve(a) => {
            a.sampler.apply(&mut cfg);
            cfg.led.validate()?;
            if a.stdio {
                let stdin = io::stdin();
                run_session(&cfg.led, BufReader::new(stdin.lock()), io::stdout().lock())
                    .map_err(io_at(std::path::Path::new("<stdio>")))?;
            } else if let Some(addr) = a.listen {
                let listener =
                    TcpListener::bind(&addr).map_err(io_at(std::path::Path::new(&addr)))?;
                eprintln!(
                    "listening on {}",
                    listener
                        .local_addr()
                        .map_err(io_at(std::path::Path::new(&addr)))?
                );
                serve_tcp(listener, cfg.led.clone(), a.max_sessions)
                    .map_err(io_at(std::path::Path::new(&addr)))?;
            } else {
                return usage("serve needs --stdio or --listen ADDR");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
