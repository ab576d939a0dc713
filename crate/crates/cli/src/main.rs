use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coalsig::exact::scan::{hellinger_scaling_scan_with, write_scan_csv};
use coalsig::exact::{mixture_decompose, null_mixing_density, oracle_rates, pmf_theta};
use coalsig::io::{read_theta_csv, write_fasta, write_metadata, write_pmf_csv, write_theta_csv};
use coalsig::pipeline::{pair_samples, simulate_sequence_sets, Simulator};
use coalsig::sweep::{calibrate_constants, run_sweep, write_records, CalibrationOptions, SweepConfig};
use coalsig::{
    agnostic_two_sample_test, hellinger2, mean_test, min_test, oracle_quantile_test,
    quantile_distance_estimate, single_linkage_tree, tensorize_h2, triplet_topology, tv, tv_bracket_m, Error,
    GeneSampleSet, SpeciesTree, TestKind, ThetaMatrix,
};

const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_IO: u8 = 74;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "coalsig", version, about = "Detect speciation signal in per-gene substitution counts")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate gene trees and sequences on a species tree.
    Simulate(SimulateArgs),
    /// Exact distribution of the substitution count between two leaves.
    Pmf(PmfArgs),
    /// Hellinger and total-variation distance between null and alternative.
    Hellinger(HellingerArgs),
    /// Hellinger distance against f^2 sqrt(k) along a kappa curve.
    Scan(ScanArgs),
    /// Run a detection test on simulated or observed substitution counts.
    Test(TestArgs),
    /// Monte-Carlo power sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Rebuild a clock tree (or a single triplet) from substitution counts.
    Reconstruct(ReconstructArgs),
    /// Calibrate the lower and upper gene-count multipliers.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Species tree in Newick, branch lengths in coalescent units.
    #[arg(long, conflicts_with = "tree_file", required_unless_present = "tree_file")]
    tree: Option<String>,
    #[arg(long)]
    tree_file: Option<PathBuf>,
    #[arg(long)]
    genes: usize,
    /// Sites per gene.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SimFormat::Theta)]
    format: SimFormat,
    /// Output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimFormat {
    Theta,
    Fasta,
}

#[derive(Args)]
struct PmfArgs {
    #[arg(long)]
    k: usize,
    /// Split time of the two leaves (null law).
    #[arg(long, conflicts_with = "f", required_unless_present = "f")]
    tau: Option<f64>,
    /// Signal strength; selects a component with --component.
    #[arg(long)]
    f: Option<f64>,
    #[arg(long, value_enum, default_value_t = Component::Q, requires = "f")]
    component: Component,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Component {
    /// Null, split at 1.
    P0,
    /// Signal part of the alternative, coalescence before time 1.
    P1,
    /// Full alternative, split at 1 - f.
    Q,
}

#[derive(Args)]
struct HellingerArgs {
    #[arg(long)]
    f: f64,
    #[arg(long)]
    k: usize,
    /// Also report the bracket for m independent genes.
    #[arg(long)]
    m: Option<u64>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    kappa: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.08,0.04,0.02,0.01")]
    f: Vec<f64>,
    /// Width constant of the interval just above p0.
    #[arg(long, default_value_t = 1.0)]
    interval_c: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, value_parser = parse_test_kind)]
    kind: TestKind,
    /// Counts CSV holding the first sample.
    #[arg(long)]
    input: PathBuf,
    /// Leaf pair of the first sample, e.g. `A,B`.
    #[arg(long, value_delimiter = ',')]
    pair: Vec<String>,
    /// Counts CSV for the second sample (default: --input).
    #[arg(long)]
    against: Option<PathBuf>,
    /// Leaf pair of the second sample (default: --pair).
    #[arg(long, value_delimiter = ',')]
    against_pair: Vec<String>,
    /// Signal strength assumed by the oracle test.
    #[arg(long)]
    f: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    quantile_c: f64,
    /// Seed of the sample split (agnostic test).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output` in the config; stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    quantile_c: f64,
    /// Resolve only this triplet with the agnostic test, e.g. `A,B,C`.
    #[arg(long, value_delimiter = ',', requires = "seed")]
    triplet: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_parser = parse_test_kind, default_value = "oracle-quantile")]
    test: TestKind,
    #[arg(long)]
    f: f64,
    #[arg(long)]
    kappa: f64,
    #[arg(long, default_value_t = 0.9)]
    target: f64,
    #[arg(long, default_value_t = 200)]
    replicates: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    max_steps: u32,
    #[arg(long, default_value_t = 1.0)]
    quantile_c: f64,
    /// Two-leaf sampler used by the pair tests.
    #[arg(long, value_enum, default_value_t = SimChoice::Collapsed)]
    simulator: SimChoice,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimChoice {
    Full,
    Collapsed,
}

impl From<SimChoice> for Simulator {
    fn from(s: SimChoice) -> Self {
        match s {
            SimChoice::Full => Simulator::Full,
            SimChoice::Collapsed => Simulator::Collapsed,
        }
    }
}

fn parse_test_kind(s: &str) -> Result<TestKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type Outcome = Result<ExitCode, Failure>;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn meta(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn simulate(a: SimulateArgs) -> Outcome {
    let newick = match (&a.tree, &a.tree_file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => std::fs::read_to_string(p)?,
        (None, None) => return Err(Failure::Usage("one of --tree or --tree-file is required".into())),
    };
    let species = SpeciesTree::from_newick(newick.trim())?;
    let sets = simulate_sequence_sets(&species, a.k, a.genes, a.seed)?;
    let mut out = output(a.out.as_deref())?;
    match a.format {
        SimFormat::Fasta => write_fasta(&mut out, &sets)?,
        SimFormat::Theta => {
            let mats: Vec<ThetaMatrix> = sets.iter().map(|s| s.theta_matrix()).collect();
            let m = meta(&[
                ("tree", species.to_newick()),
                ("genes", a.genes.to_string()),
                ("k", a.k.to_string()),
                ("seed", a.seed.to_string()),
            ]);
            write_theta_csv(&mut out, &mats, &m)?;
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn pmf(a: PmfArgs) -> Outcome {
    let (mix, m) = match (a.tau, a.f) {
        (Some(tau), _) => (null_mixing_density(tau)?, meta(&[("tau", tau.to_string()), ("k", a.k.to_string())])),
        (None, Some(f)) => {
            let d = mixture_decompose(f)?;
            let (name, mix) = match a.component {
                Component::P0 => ("p0", d.p0),
                Component::P1 => ("p1", d.p1),
                Component::Q => ("q", d.q),
            };
            (mix, meta(&[("f", f.to_string()), ("component", name.into()), ("k", a.k.to_string())]))
        }
        (None, None) => return Err(Failure::Usage("one of --tau or --f is required".into())),
    };
    let p = pmf_theta(a.k, &mix)?;
    let mut out = output(a.out.as_deref())?;
    write_pmf_csv(&mut out, &p, &m)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn hellinger(a: HellingerArgs) -> Outcome {
    let d = mixture_decompose(a.f)?;
    let p0 = pmf_theta(a.k, &d.p0)?;
    let q = pmf_theta(a.k, &d.q)?;
    let h2 = hellinger2(&p0, &q)?;
    let tv1 = tv(&p0, &q)?;
    let mut out = output(None)?;
    write_metadata(&mut out, &meta(&[("f", a.f.to_string()), ("k", a.k.to_string())]))?;
    match a.m {
        None => {
            writeln!(out, "h2,tv")?;
            writeln!(out, "{h2:e},{tv1:e}")?;
        }
        Some(m) => {
            let h2_m = tensorize_h2(h2, m)?;
            let (lo, hi) = tv_bracket_m(h2, m)?;
            writeln!(out, "h2,tv,m,h2_m,tv_m_lower,tv_m_upper")?;
            writeln!(out, "{h2:e},{tv1:e},{m},{h2_m:e},{lo:e},{hi:e}")?;
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn scan(a: ScanArgs) -> Outcome {
    let rows = hellinger_scaling_scan_with(a.kappa, &a.f, a.interval_c)?;
    let mut out = output(a.out.as_deref())?;
    write_metadata(&mut out, &meta(&[("kappa", a.kappa.to_string()), ("interval_c", a.interval_c.to_string())]))?;
    write_scan_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn load_pair(path: &Path, pair: &[String]) -> Result<GeneSampleSet, Failure> {
    let mats = read_theta_csv(File::open(path)?)?;
    let first = mats.first().ok_or_else(|| Error::Domain(format!("{} holds no genes", path.display())))?;
    let index = |l: &String| {
        first.label_index(l).ok_or_else(|| Error::Domain(format!("leaf '{l}' not in {}", path.display())))
    };
    Ok(pair_samples(&mats, index(&pair[0])?, index(&pair[1])?)?)
}

fn test(a: TestArgs) -> Outcome {
    if a.pair.len() != 2 || !(a.against_pair.is_empty() || a.against_pair.len() == 2) {
        return Err(Failure::Usage("--pair and --against-pair take two leaf labels".into()));
    }
    let first = load_pair(&a.input, &a.pair)?;
    let verdict = match a.kind {
        TestKind::OracleQuantile => {
            let f = a.f.ok_or_else(|| Failure::Usage("the oracle test needs --f".into()))?;
            let r = oracle_rates(f, first.k())?;
            serde_json::to_value(oracle_quantile_test(&first, r.p0, r.w, r.w_prime)?).map_err(Error::from)?
        }
        TestKind::Triplet => return Err(Failure::Usage("use `reconstruct --triplet` for triplets".into())),
        kind => {
            let second_pair = if a.against_pair.is_empty() { &a.pair } else { &a.against_pair };
            let second = load_pair(a.against.as_deref().unwrap_or(&a.input), second_pair)?;
            let v = match kind {
                TestKind::Agnostic => {
                    let seed = a.seed.ok_or_else(|| Failure::Usage("the agnostic test needs --seed".into()))?;
                    agnostic_two_sample_test(&first, &second, a.quantile_c, seed)?
                }
                TestKind::Mean => mean_test(&first, &second)?,
                _ => min_test(&first, &second)?,
            };
            serde_json::to_value(v).map_err(Error::from)?
        }
    };
    println!("{}", serde_json::to_string_pretty(&verdict).map_err(Error::from)?);
    Ok(ExitCode::SUCCESS)
}

fn sweep(a: SweepArgs) -> Outcome {
    let mut cfg = SweepConfig::from_json(&std::fs::read_to_string(&a.config)?)?;
    if a.out.is_some() {
        cfg.output = a.out;
    }
    let outcome = run_sweep(&cfg)?;
    if cfg.output.is_none() {
        write_records(&outcome.records, io::stdout().lock())?;
    }
    Ok(if outcome.partial { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn reconstruct(a: ReconstructArgs) -> Outcome {
    if !(a.triplet.is_empty() || a.triplet.len() == 3) {
        return Err(Failure::Usage("--triplet takes three leaf labels".into()));
    }
    let mats = read_theta_csv(File::open(&a.input)?)?;
    let tree = if a.triplet.is_empty() {
        let est = quantile_distance_estimate(&mats, a.quantile_c)?;
        if let Some(&(x, y)) = est.saturated.first() {
            return Err(Failure::Core(Error::Domain(format!(
                "distance between '{}' and '{}' is saturated; more sites are needed",
                est.labels[x], est.labels[y]
            ))));
        }
        single_linkage_tree(&est.d, &est.labels)?.to_newick()
    } else {
        let first = mats.first().ok_or_else(|| Error::Domain("input holds no genes".into()))?;
        let mut leaves = [0usize; 3];
        for (slot, l) in leaves.iter_mut().zip(&a.triplet) {
            *slot = first.label_index(l).ok_or_else(|| Error::Domain(format!("leaf '{l}' not in input")))?;
        }
        let call = triplet_topology(&mats, leaves, a.quantile_c, a.seed.unwrap_or_default())?;
        match call.closest {
            Some((x, y)) => {
                let z = 3 - x - y;
                format!("(({},{}),{});", call.labels[x], call.labels[y], call.labels[z])
            }
            None => format!("({},{},{});", call.labels[0], call.labels[1], call.labels[2]),
        }
    };
    println!("{tree}");
    Ok(ExitCode::SUCCESS)
}

fn calibrate(a: CalibrateArgs) -> Outcome {
    let opts = CalibrationOptions {
        test: a.test,
        replicates: a.replicates,
        seed: a.seed,
        max_steps: a.max_steps,
        quantile_c: a.quantile_c,
        simulator: a.simulator.into(),
    };
    let cal = calibrate_constants(a.f, a.kappa, a.target, &opts)?;
    let mut out = output(None)?;
    write_metadata(
        &mut out,
        &meta(&[
            ("c", "exact: largest multiplier whose total-variation bound keeps every test's error sum >= target".into()),
            ("c_prime", format!("empirical: Monte-Carlo over {} replicates, seed {}", a.replicates, a.seed)),
        ]),
    )?;
    writeln!(out, "test,f,kappa,k,target,c,m_lower,tv_upper,error_floor,c_prime,m_upper,power,steps")?;
    let (lo, up) = (cal.lower, cal.upper);
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        cal.test.name(),
        cal.f,
        cal.kappa,
        cal.k,
        cal.target,
        lo.c,
        lo.m,
        lo.tv_upper,
        lo.error_floor,
        up.c_prime,
        up.m,
        up.power,
        up.steps
    )?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = ["warn", "info", "debug", "trace"][usize::from(cli.verbose.min(3))];
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Pmf(a) => pmf(a),
        Command::Hellinger(a) => hellinger(a),
        Command::Scan(a) => scan(a),
        Command::Test(a) => test(a),
        Command::Sweep(a) => sweep(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Csv(_) => ExitCode::from(EXIT_IO),
                _ => ExitCode::from(EXIT_DATA),
            }
        }
    }
}
