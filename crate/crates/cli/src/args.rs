use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "mmcast",
    version,
    about = "Multisource multicast: feasibility, rate allocation and network coding"
)]
pub struct Cli {
    /// Worker threads for per-client solves (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check an instance file.
    Validate { input: PathBuf },
    /// Decide feasibility for every client.
    Feas { input: PathBuf },
    /// Minimum-cost rates for one client or all of them.
    Solve(SolveArgs),
    /// Build and verify a random linear network code.
    Code(CodeArgs),
    /// Send a message through a freshly built code.
    Simulate(SimulateArgs),
    /// Full-enumeration baselines for cross-checking.
    Oracle { input: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Subgradient,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub input: PathBuf,
    #[arg(
        long,
        conflicts_with = "all_clients",
        required_unless_present = "all_clients"
    )]
    pub client: Option<String>,
    #[arg(long)]
    pub all_clients: bool,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    /// `s1:a,b,c` for a/(b+cn) or `s2:a` for n^-a.
    #[arg(long, default_value = "s1:1,1,1")]
    pub schedule: String,
    #[arg(long, default_value_t = 50_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub gap: f64,
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CodeArgs {
    pub input: PathBuf,
    /// JSON rates; defaults to the exact joint optimum.
    #[arg(long)]
    pub rates: Option<PathBuf>,
    /// Field size replacing the one in the instance.
    #[arg(long)]
    pub q: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    /// Comma-separated field elements.
    #[arg(long, allow_hyphen_values = true)]
    pub w: String,
}
