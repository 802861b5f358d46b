//! `resonant` — command-line front end for the resonant-system pipeline:
//! coupling generation, identity audits, time-averaging reduction, slow-time
//! evolution, family diagnostics and PDE-level validation.
//!
//! Human-readable summaries go to stderr; machine payloads go to files or
//! stdout. Exit codes: 0 success, 1 domain failure (e.g. no consistent
//! solvability parameter), 2 usage error.

mod parse;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use num_rational::Rational64;

use resonant::ansatz::{
    ansatz_state, detect_period, fit_ansatz, refine_spectrum_return, tail_fraction, AnsatzError,
    AnsatzParams, PeriodFind,
};
use resonant::couplings::{
    check_c_identity, find_g, gen_conformal, gen_nls1d, load_tensor, save_tensor, BreathingVector,
    CouplingTensor,
};
use resonant::evolution::{conserved_report, evolve, DenseCoupling, Trajectory};
use resonant::nlsbench::{
    breathing_phase_test, compare_resonant, nls_evolve, pde_energy, shifted_gaussian,
    BreathingPhaseReport, FieldState, HermiteGrid,
};
use resonant::polyspace::{read_poly, write_poly, FrequencyLadder};
use resonant::reduction::{reduce_with_census, ChannelCensus};
use resonant::state::ModeState;

use parse::{parse_amplitude_file, parse_complex, parse_field_init, parse_rational, FieldInit};

/// Marker for errors that are the caller's fault; they exit with code 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "resonant",
    version,
    args_override_self = true,
    about = "Resonant-system pipeline: couplings, audits, reduction, evolution, PDE validation",
    after_help = "Exit codes: 0 success, 1 domain failure, 2 usage error."
)]
struct Cli {
    /// Worker threads (default: all cores). Results are bit-identical
    /// regardless of the thread count.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Flat `key = value` file supplying defaults for the subcommand;
    /// explicit command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a coupling tensor from a built-in mode system
    GenCouplings(GenCouplingsArgs),
    /// Audit a coupling tensor against the beta identity
    Audit(AuditArgs),
    /// Time-average a polynomial on a frequency ladder
    Reduce(ReduceArgs),
    /// Poisson bracket of two polynomial files
    Bracket(BracketArgs),
    /// Integrate the resonant system in slow time
    Evolve(EvolveArgs),
    /// Evolve a family state, fit each sample and detect periodic returns
    AnsatzRun(AnsatzRunArgs),
    /// Validate the resonant approximation against the trapped 1D NLS
    PdeValidate(PdeValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemKind {
    /// 1D nonlinear Schrödinger equation in a harmonic trap
    Nls1d,
    /// conformal-flow wave equation couplings
    Conformal,
}

#[derive(Args)]
struct GenCouplingsArgs {
    /// Mode system to generate from
    #[arg(long, value_enum)]
    system: SystemKind,
    /// Window size: mode indices run over [0, n_max]
    #[arg(long)]
    n_max: u32,
    /// Output tensor file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// Tensor file to audit
    #[arg(long)]
    couplings: PathBuf,
    /// Check the identity at this fixed lambda = 1/G instead of fitting
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct ReduceArgs {
    /// Input polynomial file
    #[arg(long)]
    poly: PathBuf,
    /// Exact ladder offset, written p/q
    #[arg(long, value_parser = rational_value)]
    omega0: Rational64,
    /// Window size (default: inferred from the polynomial)
    #[arg(long)]
    n_max: Option<u32>,
    /// Output polynomial file (resonant part)
    #[arg(long)]
    out: PathBuf,
    /// Channel-census JSON (default: <out>.census.json)
    #[arg(long)]
    census: Option<PathBuf>,
}

#[derive(Args)]
struct BracketArgs {
    /// Left operand polynomial file
    #[arg(long)]
    lhs: PathBuf,
    /// Right operand polynomial file
    #[arg(long)]
    rhs: PathBuf,
    /// Output polynomial file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvolveArgs {
    /// Coupling tensor file
    #[arg(long)]
    couplings: PathBuf,
    /// Initial amplitudes: lines `n re im`, missing modes zero
    #[arg(long)]
    init: PathBuf,
    /// Final slow time
    #[arg(long)]
    tau_end: f64,
    /// Local error tolerance, within [1e-13, 1e-6]
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Number of output intervals (samples + 1 rows)
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// lambda = 1/G for the B0 conservation monitor
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Trajectory CSV: tau, re_a0, im_a0, ...
    #[arg(long)]
    out: PathBuf,
    /// Conserved-quantity JSON sidecar (default: <out>.report.json)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AnsatzRunArgs {
    /// Coupling tensor file
    #[arg(long)]
    couplings: PathBuf,
    /// Family parameter b (complex, e.g. `1`, `0.4i`, `1+0.4i`)
    #[arg(long, value_parser = complex_value)]
    b: Complex64,
    /// Family parameter a (complex)
    #[arg(long, value_parser = complex_value)]
    a: Complex64,
    /// Family parameter p (complex, |p| < 1)
    #[arg(long, value_parser = complex_value)]
    p: Complex64,
    /// lambda = 1/G of the family and the fit
    #[arg(long)]
    lambda: f64,
    /// Final slow time
    #[arg(long)]
    tau_end: f64,
    /// Local error tolerance, within [1e-13, 1e-6]
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Number of output intervals
    #[arg(long, default_value_t = 400)]
    samples: usize,
    /// Per-sample CSV: tau, fit_residual, p_fit_abs, spec_0, ...
    #[arg(long)]
    out: PathBuf,
    /// JSON summary with the detected period (default: <out>.summary.json)
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Return-detection threshold as a fraction of the observed spectrum
    /// variation
    #[arg(long, default_value_t = 0.05)]
    return_fraction: f64,
}

#[derive(Args)]
struct PdeValidateArgs {
    /// Interaction strength g >= 0
    #[arg(long)]
    g: f64,
    /// Slow-time horizon; the PDE runs to t = horizon/g
    #[arg(long)]
    horizon: f64,
    /// Window size of the spectral discretization
    #[arg(long)]
    n_max: u32,
    /// Initial field: `shifted-gaussian:d=0.5` or `modes:0=1,1=0.5+0.2i`
    #[arg(long)]
    init: String,
    /// Local error tolerance for both solvers
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Comparison samples across the horizon
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Output JSON
    #[arg(long)]
    out: PathBuf,
}

fn rational_value(s: &str) -> Result<Rational64, String> {
    parse_rational(s).map_err(|e| format!("{e:#}"))
}

fn complex_value(s: &str) -> Result<Complex64, String> {
    parse_complex(s).map_err(|e| format!("{e:#}"))
}

fn main() {
    let argv = match inject_config(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };
    let cli = Cli::parse_from(argv);
    if let Some(threads) = cli.threads {
        // a later global-pool init (e.g. in tests) is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        let code = if e.downcast_ref::<UsageError>().is_some() { 2 } else { 1 };
        std::process::exit(code);
    }
}

/// Splices `key = value` pairs from a `--config FILE` into the argument
/// list right after the subcommand, so explicit flags (which come later)
/// override them.
fn inject_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut config_path = None;
    let mut i = 0;
    while i < argv.len() {
        if argv[i] == "--config" {
            config_path = argv.get(i + 1).cloned();
            if config_path.is_none() {
                bail!("--config needs a file argument");
            }
            i += 2;
        } else if let Some(p) = argv[i].strip_prefix("--config=") {
            config_path = Some(p.to_string());
            i += 1;
        } else {
            i += 1;
        }
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{path}:{}: expected key = value", lineno + 1))?;
        extra.push(format!("--{}", key.trim()));
        extra.push(value.trim().to_string());
    }
    // insert after the subcommand (the first bare token past the binary)
    let subcommand_pos = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(i, token)| !token.starts_with('-') && argv[i - 1] != "--config" && argv[i - 1] != "--threads")
        .map(|(i, _)| i);
    let Some(pos) = subcommand_pos else {
        return Ok(argv); // no subcommand; let clap produce the usage error
    };
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend(argv[pos + 1..].iter().cloned());
    Ok(out)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCouplings(args) => cmd_gen_couplings(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Reduce(args) => cmd_reduce(args),
        Command::Bracket(args) => cmd_bracket(args),
        Command::Evolve(args) => cmd_evolve(args),
        Command::AnsatzRun(args) => cmd_ansatz_run(args),
        Command::PdeValidate(args) => cmd_pde_validate(args),
    }
}

fn load_couplings(path: &Path) -> Result<CouplingTensor> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_tensor(std::io::BufReader::new(file))
        .with_context(|| format!("loading tensor {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn validate_tol(tol: f64) -> Result<()> {
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(usage(format!("--tol {tol:e} outside the supported range [1e-13, 1e-6]")));
    }
    Ok(())
}

fn cmd_gen_couplings(args: GenCouplingsArgs) -> Result<()> {
    let (tensor, label) = match args.system {
        SystemKind::Nls1d => (gen_nls1d(args.n_max)?, "nls1d"),
        SystemKind::Conformal => (gen_conformal(args.n_max)?, "conformal"),
    };
    let mut buf = Vec::new();
    save_tensor(&tensor, &mut buf)?;
    fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "gen-couplings: {label} n_max={} -> {} quartets in {}",
        args.n_max,
        tensor.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let tensor = load_couplings(&args.couplings)?;

    #[derive(serde::Serialize)]
    struct AuditOut {
        n_max: u32,
        quartets: usize,
        lambda: f64,
        /// solvability parameter 1/lambda; null encodes infinity
        g: Option<f64>,
        residual: f64,
        max_coupling: f64,
    }

    let (lambda, g, residual) = match args.lambda {
        Some(lambda) => {
            if lambda < 0.0 {
                return Err(usage("--lambda must be nonnegative"));
            }
            let bv = BreathingVector::new(lambda, tensor.n_max());
            let r = check_c_identity(&tensor, &bv);
            (lambda, bv.g(), r)
        }
        None => {
            let fit = find_g(&tensor)?;
            (fit.lambda, fit.g, fit.residual)
        }
    };
    let out = AuditOut {
        n_max: tensor.n_max(),
        quartets: tensor.len(),
        lambda,
        g: g.is_finite().then_some(g),
        residual,
        max_coupling: tensor.max_abs(),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    eprintln!(
        "audit: lambda={lambda:.3e} residual={residual:.3e} over {} quartets",
        tensor.len()
    );
    Ok(())
}

fn cmd_reduce(args: ReduceArgs) -> Result<()> {
    let text = fs::read_to_string(&args.poly)
        .with_context(|| format!("reading {}", args.poly.display()))?;
    let poly = read_poly(std::io::BufReader::new(text.as_bytes()), args.n_max)?;
    let ladder = FrequencyLadder::new(args.omega0, poly.max_mode())
        .map_err(|e| usage(e.to_string()))?;
    let (averaged, census) = reduce_with_census(&poly, &ladder);

    let mut buf = Vec::new();
    write_poly(&averaged, &mut buf)?;
    fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;

    let census_path = args
        .census
        .unwrap_or_else(|| sibling(&args.out, ".census.json"));
    write_json(&census_path, &census)?;
    let ChannelCensus { c_terms, s_terms, dropped } = census;
    eprintln!(
        "reduce: omega0={} kept {} terms (C {c_terms}, S {s_terms}), dropped {dropped}",
        args.omega0,
        averaged.num_terms()
    );
    Ok(())
}

fn cmd_bracket(args: BracketArgs) -> Result<()> {
    let read = |path: &Path| -> Result<resonant::polyspace::PhasePoly> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(read_poly(std::io::BufReader::new(text.as_bytes()), None)?)
    };
    let lhs = read(&args.lhs)?;
    let rhs = read(&args.rhs)?;
    let bracket = lhs.poisson_bracket(&rhs);
    let mut buf = Vec::new();
    write_poly(&bracket, &mut buf)?;
    fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "bracket: {} x {} -> {} terms",
        lhs.num_terms(),
        rhs.num_terms(),
        bracket.num_terms()
    );
    Ok(())
}

fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let n_max = traj.states[0].n_max();
    let mut file = std::io::BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    write!(file, "tau")?;
    for n in 0..=n_max {
        write!(file, ",re_a{n},im_a{n}")?;
    }
    writeln!(file)?;
    for state in &traj.states {
        write!(file, "{}", state.tau)?;
        for a in &state.amps {
            write!(file, ",{},{}", a.re, a.im)?;
        }
        writeln!(file)?;
    }
    Ok(())
}

fn cmd_evolve(args: EvolveArgs) -> Result<()> {
    validate_tol(args.tol)?;
    if args.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let tensor = load_couplings(&args.couplings)?;
    let init_text = fs::read_to_string(&args.init)
        .with_context(|| format!("reading {}", args.init.display()))?;
    let amps = parse_amplitude_file(&init_text, tensor.n_max()).map_err(|e| usage(format!("{e:#}")))?;
    let s0 = ModeState::new(amps);
    if s0.norm() == 0.0 {
        return Err(usage("initial state is identically zero"));
    }

    let dense = DenseCoupling::new(&tensor);
    let traj = evolve(&dense, &s0, args.tau_end, args.tol, args.samples)?;
    write_trajectory_csv(&args.out, &traj)?;

    let bv = BreathingVector::new(args.lambda, tensor.n_max());
    let report = conserved_report(&traj, &tensor, &bv);
    let report_path = args
        .report
        .unwrap_or_else(|| sibling(&args.out, ".report.json"));
    write_json(&report_path, &report)?;
    eprintln!(
        "evolve: tau={} in {} steps; drifts N {:.2e} E {:.2e} H {:.2e} B0 {:.2e}",
        args.tau_end,
        traj.steps_accepted,
        report.drift_number,
        report.drift_energy,
        report.drift_h_res,
        report.drift_b0
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct AnsatzSummary {
    params: AnsatzParams,
    n_max: u32,
    tau_end: f64,
    tail_fraction: f64,
    max_fit_residual: f64,
    period: Option<PeriodFind>,
    period_search: String,
}

fn cmd_ansatz_run(args: AnsatzRunArgs) -> Result<()> {
    validate_tol(args.tol)?;
    if args.samples < 200 {
        return Err(usage("--samples must be at least 200 for return detection"));
    }
    if args.lambda < 0.0 {
        return Err(usage("--lambda must be nonnegative"));
    }
    let tensor = load_couplings(&args.couplings)?;
    let n_max = tensor.n_max();
    let params = AnsatzParams { b: args.b, a: args.a, p: args.p, lambda: args.lambda };
    let s0 = ansatz_state(&params, n_max)?;
    let tail = tail_fraction(&params, n_max);
    if tail > 1e-12 {
        return Err(usage(format!(
            "window too small for these parameters: tail fraction {tail:.2e} > 1e-12"
        )));
    }

    let dense = DenseCoupling::new(&tensor);
    let traj = evolve(&dense, &s0, args.tau_end, args.tol, args.samples)?;

    let mut file = std::io::BufWriter::new(
        fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    write!(file, "tau,fit_residual,p_fit_abs")?;
    for n in 0..=n_max {
        write!(file, ",spec_{n}")?;
    }
    writeln!(file)?;
    let mut max_fit_residual = 0.0f64;
    for state in &traj.states {
        let fit = fit_ansatz(state, args.lambda);
        max_fit_residual = max_fit_residual.max(fit.residual);
        write!(file, "{},{},{}", state.tau, fit.residual, fit.params.p.norm())?;
        for a in &state.amps {
            write!(file, ",{}", a.norm_sqr())?;
        }
        writeln!(file)?;
    }
    drop(file);

    // periodic-return search on the spectrum, refined by re-integration
    let taus = traj.taus();
    let spectra = traj.spectra();
    let variation = spectra
        .iter()
        .map(|s| {
            s.iter()
                .zip(&spectra[0])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0f64, f64::max);
    let threshold = args.return_fraction * variation;
    let (period, period_search) = match detect_period(&taus, &spectra, threshold) {
        Ok(coarse) => {
            let refined = refine_spectrum_return(&dense, &traj, &coarse, args.tol, 4)?;
            (Some(refined), "refined".to_string())
        }
        Err(e @ AnsatzError::ConstantObservable(_))
        | Err(e @ AnsatzError::NoReturnFound { .. }) => (None, e.to_string()),
        Err(e) => return Err(e.into()),
    };

    let summary = AnsatzSummary {
        params,
        n_max,
        tau_end: args.tau_end,
        tail_fraction: tail,
        max_fit_residual,
        period,
        period_search,
    };
    let summary_path = args
        .summary
        .unwrap_or_else(|| sibling(&args.out, ".summary.json"));
    write_json(&summary_path, &summary)?;
    match &summary.period {
        Some(p) => eprintln!(
            "ansatz-run: max fit residual {:.2e}; spectrum returns at tau {:.6} (residual {:.2e})",
            max_fit_residual, p.period, p.return_residual
        ),
        None => eprintln!(
            "ansatz-run: max fit residual {max_fit_residual:.2e}; no return ({})",
            summary.period_search
        ),
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct PdeValidateOut {
    g: f64,
    horizon: f64,
    n_max: u32,
    metric: f64,
    per_sample: Vec<f64>,
    breathing: Option<BreathingPhaseReport>,
    breathing_note: Option<String>,
    norm_drift: f64,
    energy_drift: f64,
    stripped_number_drift: f64,
    stripped_energy_drift: f64,
}

fn cmd_pde_validate(args: PdeValidateArgs) -> Result<()> {
    if args.g < 0.0 {
        return Err(usage("--g must be nonnegative"));
    }
    if args.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let init = parse_field_init(&args.init).map_err(|e| usage(format!("{e:#}")))?;
    let f0 = match init {
        FieldInit::ShiftedGaussian { d } => shifted_gaussian(d, args.n_max),
        FieldInit::Modes(modes) => {
            let mut coeffs = vec![Complex64::ZERO; args.n_max as usize + 1];
            for (n, v) in modes {
                if n > args.n_max {
                    return Err(usage(format!("init mode {n} exceeds n_max {}", args.n_max)));
                }
                coeffs[n as usize] = v;
            }
            FieldState::new(coeffs)
        }
    };

    let grid = HermiteGrid::new(args.n_max);
    let report = compare_resonant(&grid, &f0, args.g, args.horizon, args.tol, args.samples)?;

    // breathing phase and conservation along the same PDE horizon
    let t_end = if args.g > 0.0 { args.horizon / args.g } else { args.horizon };
    let pde_traj = nls_evolve(&grid, &f0, args.g, t_end, args.tol, args.samples.max(100))?;
    let (breathing, breathing_note) = match breathing_phase_test(&pde_traj) {
        Ok(rep) => (Some(rep), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let norm0 = pde_traj[0].norm_sqr();
    let energy0 = pde_energy(&grid, &pde_traj[0], args.g)?;
    let mut norm_drift = 0.0f64;
    let mut energy_drift = 0.0f64;
    for f in &pde_traj {
        norm_drift = norm_drift.max((f.norm_sqr() - norm0).abs() / norm0);
        energy_drift =
            energy_drift.max((pde_energy(&grid, f, args.g)? - energy0).abs() / energy0.abs());
    }

    let out = PdeValidateOut {
        g: args.g,
        horizon: args.horizon,
        n_max: args.n_max,
        metric: report.metric,
        per_sample: report.per_sample,
        breathing,
        breathing_note,
        norm_drift,
        energy_drift,
        stripped_number_drift: report.stripped_number_drift,
        stripped_energy_drift: report.stripped_energy_drift,
    };
    write_json(&args.out, &out)?;
    eprintln!(
        "pde-validate: g={} horizon={} metric={:.3e} norm drift {:.2e}",
        args.g, args.horizon, out.metric, out.norm_drift
    );
    Ok(())
}
