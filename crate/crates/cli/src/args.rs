use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "defcomp", version, about = "Predict conflicts between combined ML defenses")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// DEFCAT file to use instead of the built-in catalog.
    #[arg(long, global = true, value_name = "FILE")]
    pub catalog: Option<PathBuf>,
    /// Downgrade unknown keys and risk tokens in DEFCAT input to warnings.
    #[arg(long, global = true)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict the outcome of applying defenses in the given order.
    Predict {
        #[arg(value_name = "ID", required = true)]
        ids: Vec<String>,
        /// Exit with status 2 when the combination conflicts.
        #[arg(long)]
        strict: bool,
    },
    /// Find conflict-free orderings for a set of defenses or for goals.
    Plan(PlanArgs),
    /// Score a technique against the ground-truth combinations.
    Evaluate {
        #[arg(long, value_enum, default_value_t = TechniqueArg::Both)]
        technique: TechniqueArg,
        #[arg(long, value_enum, default_value_t = CohortArg::All)]
        cohort: CohortArg,
        /// GTRUTH file to use instead of the built-in ground truth.
        #[arg(long, value_name = "FILE")]
        groundtruth: Option<PathBuf>,
    },
    /// List the evaluable pairs with both techniques' predictions.
    Enumerate {
        /// Also pair up contextual (three-segment id) descriptors.
        #[arg(long)]
        include_context: bool,
    },
    /// Inspect or validate defense catalogs.
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Print the rationale behind a decision step.
    Explain {
        #[arg(value_name = "STEP")]
        step: String,
    },
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Defense ids to order, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "goals",
        required_unless_present = "goals"
    )]
    pub defenses: Vec<String>,
    /// Risk tokens or objective names to cover, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub goals: Vec<String>,
    /// Largest combination to consider for goals [default: 4].
    #[arg(long, conflicts_with = "defenses")]
    pub max: Option<usize>,
    /// Exit with status 2 when no plan exists.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum CatalogCommand {
    /// List descriptors.
    List,
    /// Show one descriptor.
    Show { id: String },
    /// Parse a DEFCAT file and report problems.
    Validate {
        file: PathBuf,
        /// Print the canonical form of the file on success.
        #[arg(long)]
        export: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TechniqueArg {
    Defcon,
    Naive,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CohortArg {
    Prior,
    Empirical,
    Scaling,
    Argued,
    All,
}
