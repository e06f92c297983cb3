use clap::{Args, Parser, Subcommand, ValueEnum};
use dax::certificate::{to_json, ConfigRecord};
use dax::decide::{close_over, robustness_scan, run_pipeline, scan_csv, verdict_of, DecideError, DecideOptions, DeltaVerdict};
use dax::enclosure::{build_enclosure, Domain};
use dax::engine::Budget;
use dax::formula::{function_terms, parse_formula, print_formula, Formula};
use dax::interval::RatInterval;
use dax::ode::approx_function;
use dax::perturbation::{build_admissible_approx, parse_policy, perturb_exists, perturb_forall, to_smt2};
use dax::poly::UniPoly;
use dax::rational::{parse_q, Q};
use dax::registry::{builtin_registry, FuncRegistry};
use num_traits::Signed;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_TRUE: u8 = 0;
const EXIT_FALSE: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Parse(String),
    Divergence(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 3,
            CliError::Io(..) => 4,
            CliError::Parse(_) => 5,
            CliError::Divergence(_) => 6,
            CliError::Other(_) => 7,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(p, e) => write!(f, "I/O error on {}: {e}", p.display()),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Divergence(m) => write!(f, "divergence: {m}"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<DecideError> for CliError {
    fn from(e: DecideError) -> Self {
        if e.is_divergence() {
            return CliError::Divergence(e.to_string());
        }
        match e {
            DecideError::NotSentence(_) => CliError::Parse(e.to_string()),
            DecideError::InvalidDelta(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "dax", version, about = "δ-decisions for real formulas with differentially-defined functions")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide a sentence: exit 0 provably true, 1 provably false, 2 inconclusive.
    Decide {
        formula: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write the certificate here when the verdict is certified.
        #[arg(long, value_name = "PATH")]
        emit_cert: Option<PathBuf>,
    },
    /// Print the universal or existential δ-perturbation of a formula.
    Approximate {
        formula: PathBuf,
        #[arg(long, value_enum, default_value = "forall")]
        mode: Mode,
        #[command(flatten)]
        common: Common,
        /// Also write the result as an SMT-LIB2 script.
        #[arg(long, value_name = "PATH")]
        emit_smt2: Option<PathBuf>,
    },
    /// Certified polynomial approximation of a registered function on [LO, HI].
    ApproxFn {
        name: String,
        #[arg(allow_hyphen_values = true)]
        lo: String,
        #[arg(allow_hyphen_values = true)]
        hi: String,
        #[arg(long)]
        eps: String,
        #[arg(long, value_name = "PATH")]
        fns: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Decide both perturbations at each δ and print a CSV table.
    Scan {
        formula: PathBuf,
        /// Comma-separated list of δ values.
        #[arg(long, allow_hyphen_values = true)]
        deltas: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Forall,
    Exists,
}

#[derive(Args)]
struct Common {
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// Enclosure radius (default 1).
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    #[arg(long)]
    budget_depth: Option<u32>,
    #[arg(long)]
    budget_boxes: Option<u64>,
    /// Accepted for compatibility; the search runs on one thread.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Function definition file with `define-fn` forms.
    #[arg(long, value_name = "PATH")]
    fns: Option<PathBuf>,
    /// Approximation policy file with `(approx NAME POLY)` forms.
    #[arg(long, value_name = "PATH")]
    approx: Option<PathBuf>,
    /// JSON run configuration, e.g. the `config` object of a certificate.
    /// Command-line flags take precedence.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Interval for a free variable, as NAME=LO:HI.  Repeatable.  `decide`
    /// and `scan` close the formula universally over these intervals.
    #[arg(long = "domain", value_name = "NAME=LO:HI", allow_hyphen_values = true)]
    domains: Vec<String>,
}

struct Setup {
    reg: FuncRegistry,
    delta: Option<Q>,
    opts: DecideOptions,
}

fn read(path: &Path) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(|e| CliError::Io(path.into(), e))?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.into(), e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.into(), e))
}

fn rational(flag: &str, s: &str) -> Result<Q, CliError> {
    parse_q(s).map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

fn load_registry(fns: &Option<PathBuf>) -> Result<FuncRegistry, CliError> {
    let mut reg = builtin_registry();
    if let Some(p) = fns {
        reg.load_source(&read(p)?).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?;
    }
    Ok(reg)
}

fn env_budget() -> Result<Budget, CliError> {
    let Ok(v) = std::env::var("DAX_DEFAULT_BUDGET") else {
        return Ok(Budget::default());
    };
    let bad = || CliError::Usage(format!("DAX_DEFAULT_BUDGET must be `depth,boxes`, got `{v}`"));
    let (d, b) = v.split_once(',').ok_or_else(bad)?;
    let max_depth = d.trim().parse().map_err(|_| bad())?;
    let max_boxes = b.trim().parse().map_err(|_| bad())?;
    Ok(Budget { max_depth, max_boxes })
}

fn setup(c: &Common) -> Result<Setup, CliError> {
    let reg = load_registry(&c.fns)?;
    let mut opts = DecideOptions { budget: env_budget()?, ..Default::default() };
    let mut delta = None;
    if let Some(p) = &c.config {
        let cfg: ConfigRecord =
            serde_json::from_str(&read(p)?).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?;
        delta = Some(cfg.requested_delta);
        opts.eps = cfg.eps;
        opts.budget = cfg.budget;
        for e in cfg.policy {
            if reg.lookup(&e.func).is_none() {
                return Err(CliError::Parse(format!("{}: unknown function `{}`", p.display(), e.func)));
            }
            opts.policy.insert(e.func, UniPoly::new(e.coeffs));
        }
    }
    if let Some(d) = &c.delta {
        delta = Some(rational("delta", d)?);
    }
    if let Some(e) = &c.eps {
        opts.eps = rational("eps", e)?;
    }
    if let Some(d) = c.budget_depth {
        opts.budget.max_depth = d;
    }
    if let Some(b) = c.budget_boxes {
        opts.budget.max_boxes = b;
    }
    if let Some(p) = &c.approx {
        let policy = parse_policy(&read(p)?, &reg).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?;
        opts.policy.extend(policy);
    }
    if c.threads == 0 {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    if opts.budget.max_depth == 0 || opts.budget.max_boxes == 0 {
        return Err(CliError::Usage("budget must be positive".into()));
    }
    if !opts.eps.is_positive() {
        return Err(CliError::Usage("--eps must be positive".into()));
    }
    Ok(Setup { reg, delta, opts })
}

fn formula(path: &Path, reg: &FuncRegistry) -> Result<Formula, CliError> {
    parse_formula(&read(path)?, reg).map_err(|e| CliError::Parse(format!("{}:{e}", path.display())))
}

fn closed_formula(path: &Path, reg: &FuncRegistry, common: &Common) -> Result<Formula, CliError> {
    let phi = formula(path, reg)?;
    if common.domains.is_empty() {
        return Ok(phi);
    }
    let domain = parse_domain(&common.domains)?;
    if let Some(v) = phi.free_vars().into_iter().find(|v| !domain.contains_key(v)) {
        return Err(CliError::Usage(format!("no --domain given for free variable `{v}`")));
    }
    Ok(close_over(&phi, &domain))
}

fn need_delta(s: &Setup) -> Result<Q, CliError> {
    s.delta.clone().ok_or_else(|| CliError::Usage("--delta is required".into()))
}

fn cmd_decide(path: &Path, common: &Common, emit_cert: &Option<PathBuf>) -> Result<u8, CliError> {
    let s = setup(common)?;
    let delta = need_delta(&s)?;
    let phi = closed_formula(path, &s.reg, common)?;
    let run = run_pipeline(&phi, &delta, &s.opts, &s.reg, false)?;
    let v = verdict_of(&run, &s.reg);
    println!("{}", v.label());
    match v {
        DeltaVerdict::ProvablyTrue(c) | DeltaVerdict::ProvablyFalse(c) => {
            if let Some(p) = emit_cert {
                write(p, &to_json(&c))?;
            }
            Ok(if c.outcome == dax::certificate::Outcome::ProvablyTrue { EXIT_TRUE } else { EXIT_FALSE })
        }
        DeltaVerdict::Inconclusive { forall, exists } => {
            eprintln!("A^forall: {}, A^exists: {}", forall.label(), exists.label());
            Ok(EXIT_INCONCLUSIVE)
        }
    }
}

fn parse_domain(items: &[String]) -> Result<Domain, CliError> {
    let mut d = Domain::new();
    for it in items {
        let bad = || CliError::Usage(format!("--domain expects NAME=LO:HI, got `{it}`"));
        let (name, range) = it.split_once('=').ok_or_else(bad)?;
        let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
        let iv = RatInterval::new(rational("domain", lo)?, rational("domain", hi)?)
            .map_err(|e| CliError::Usage(format!("--domain {name}: {e}")))?;
        d.insert(name.trim().to_string(), iv);
    }
    Ok(d)
}

fn cmd_approximate(
    path: &Path,
    mode: Mode,
    common: &Common,
    emit_smt2: &Option<PathBuf>,
) -> Result<u8, CliError> {
    let s = setup(common)?;
    let phi = formula(path, &s.reg)?;
    let out = if function_terms(&phi).is_empty() {
        phi
    } else {
        let delta = need_delta(&s)?;
        let domain = parse_domain(&common.domains)?;
        let d = delta.clone().min(dax::decide::delta_cap());
        let goal = dax::formula::normalize(&phi);
        let enc = build_enclosure(&goal, &domain, &s.opts.eps, &s.reg).map_err(|e| match e {
            dax::enclosure::EnclosureError::Divergence(d) => CliError::Divergence(d.to_string()),
            other => CliError::Usage(other.to_string()),
        })?;
        let approx = build_admissible_approx(&goal, &enc, &d, &s.reg, &s.opts.policy)
            .map_err(|e| CliError::from(DecideError::from(e)))?;
        let r = match mode {
            Mode::Forall => perturb_forall(&goal, &approx, &d),
            Mode::Exists => perturb_exists(&goal, &approx, &d),
        };
        r.map_err(|e| CliError::from(DecideError::from(e)))?
    };
    println!("{}", print_formula(&out));
    if let Some(p) = emit_smt2 {
        write(p, &to_smt2(&out))?;
    }
    Ok(0)
}

fn cmd_approx_fn(name: &str, lo: &str, hi: &str, eps: &str, fns: &Option<PathBuf>, out: &Option<PathBuf>) -> Result<u8, CliError> {
    let reg = load_registry(fns)?;
    let def = reg.get_by_name(name).ok_or_else(|| CliError::Usage(format!("unknown function `{name}`")))?;
    let eps = rational("eps", eps)?;
    if !eps.is_positive() {
        return Err(CliError::Usage("invalid argument: --eps must be positive".into()));
    }
    let window = RatInterval::new(rational("lo", lo)?, rational("hi", hi)?)
        .map_err(|e| CliError::Usage(format!("invalid window: {e}")))?;
    let a = approx_function(def, &window, &eps).map_err(|e| CliError::Divergence(e.to_string()))?;
    let json = serde_json::to_string_pretty(&a).map_err(|e| CliError::Other(e.to_string()))?;
    match out {
        Some(p) => write(p, &json)?,
        None => println!("{json}"),
    }
    Ok(0)
}

fn cmd_scan(path: &Path, deltas: &str, common: &Common) -> Result<u8, CliError> {
    let s = setup(common)?;
    let ds = deltas
        .split(',')
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .map(|d| rational("deltas", d))
        .collect::<Result<Vec<Q>, _>>()?;
    if ds.is_empty() {
        return Err(CliError::Usage("--deltas must list at least one value".into()));
    }
    let phi = closed_formula(path, &s.reg, common)?;
    let rows = robustness_scan(&phi, &ds, &s.opts, &s.reg)?;
    print!("{}", scan_csv(&rows));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let r = match &cli.cmd {
        Command::Decide { formula, common, emit_cert } => cmd_decide(formula, common, emit_cert),
        Command::Approximate { formula, mode, common, emit_smt2 } => cmd_approximate(formula, *mode, common, emit_smt2),
        Command::ApproxFn { name, lo, hi, eps, fns, out } => cmd_approx_fn(name, lo, hi, eps, fns, out),
        Command::Scan { formula, deltas, common } => cmd_scan(formula, deltas, common),
    };
    match r {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("dax: {e}");
            ExitCode::from(e.code())
        }
    }
}
