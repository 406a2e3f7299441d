use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use qfrac::bench::{self, BenchConfig, Scale, Table};
use qfrac::oracle::{self, DEFAULT_SAMPLES};
use qfrac::{Algorithm, DecompMode, Family, GeneratorSpec, SolverConfig};

#[derive(Parser)]
#[command(name = "qfrac", version, about = "Maximize x'Qx / x'Px over a polyhedron")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FamilyArg::Standard)]
        family: FamilyArg,
        /// Upper bound on each coordinate; `n * ub` must be at least 1.
        #[arg(long, default_value_t = 0.1)]
        ub: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an instance and write the solution JSON.
    Solve {
        #[arg(long, value_enum, default_value_t = AlgoArg::Auto)]
        algo: AlgoArg,
        #[arg(long, value_enum, default_value_t = DecompArg::Eig)]
        decomp: DecompArg,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        instance: PathBuf,
    },
    /// Run one benchmark table and write CSV rows.
    Bench {
        #[arg(long, value_enum)]
        table: TableArg,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
        scale: ScaleArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare every applicable algorithm against the sampling oracle.
    Verify {
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        oracle_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        instance: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Standard,
    FullRankTn,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Ibaraki,
    Region,
    FastRegion,
    RankOne,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecompArg {
    Eig,
    Ldl,
    User,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    T1,
    T2,
    T3,
    T4,
    T5,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

impl From<FamilyArg> for Family {
    fn from(a: FamilyArg) -> Self {
        match a {
            FamilyArg::Standard => Family::Standard,
            FamilyArg::FullRankTn => Family::FullRankTn,
        }
    }
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Ibaraki => Algorithm::Ibaraki,
            AlgoArg::Region => Algorithm::Region,
            AlgoArg::FastRegion => Algorithm::FastRegion,
            AlgoArg::RankOne => Algorithm::RankOne,
            AlgoArg::Auto => Algorithm::Auto,
        }
    }
}

impl From<DecompArg> for DecompMode {
    fn from(a: DecompArg) -> Self {
        match a {
            DecompArg::Eig => DecompMode::Eigen,
            DecompArg::Ldl => DecompMode::Ldl,
            DecompArg::User => DecompMode::User,
        }
    }
}

impl From<TableArg> for Table {
    fn from(a: TableArg) -> Self {
        match a {
            TableArg::T1 => Table::T1,
            TableArg::T2 => Table::T2,
            TableArg::T3 => Table::T3,
            TableArg::T4 => Table::T4,
            TableArg::T5 => Table::T5,
        }
    }
}

impl From<ScaleArg> for Scale {
    fn from(a: ScaleArg) -> Self {
        match a {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<qfrac::Instance> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    qfrac::read_instance(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn verify(path: &Path, samples: usize, seed: u64) -> Result<()> {
    let inst = load(path)?;
    let reference = oracle::grid_oracle(&inst, samples, seed)?;
    println!("oracle f = {:.10} from {} feasible samples", reference.f, reference.evaluated);
    println!("{:<12} {:>16} {:>12} {:>10} status", "algo", "f", "rel_error", "wall_s");
    let mut algos = vec![Algorithm::Ibaraki, Algorithm::Region, Algorithm::FastRegion, Algorithm::Auto];
    if qfrac::region::numerator_rank(&inst)? == 1 {
        algos.push(Algorithm::RankOne);
    }
    let mut worst = 0.0f64;
    for algo in algos {
        let config = SolverConfig { algorithm: algo, ..SolverConfig::default() };
        let name = serde_json::to_value(algo)?.as_str().unwrap_or("?").to_string();
        match qfrac::solve(&inst, &config) {
            Ok(out) => {
                let rel = (reference.f - out.f_star) / reference.f.abs().max(1.0);
                worst = worst.max(rel);
                println!(
                    "{:<12} {:>16.10} {:>12.3e} {:>10.4} {}",
                    name,
                    out.f_star,
                    rel,
                    out.wall_time.as_secs_f64(),
                    out.status
                );
            }
            Err(e) => println!("{name:<12} error: {e}"),
        }
    }
    println!("worst shortfall against the oracle: {worst:.3e}");
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { n, rank, t, seed, family, ub, out } => {
            let spec = GeneratorSpec {
                n,
                rank,
                t,
                seed,
                family: family.into(),
                ub,
            };
            let inst = qfrac::generate(&spec)?;
            emit(out.as_deref(), &qfrac::write_instance(&inst)?)
        }
        Command::Solve { algo, decomp, eps, out, instance } => {
            let inst = load(&instance)?;
            let config = SolverConfig {
                eps,
                algorithm: algo.into(),
                decomp_mode: decomp.into(),
                ..SolverConfig::default()
            };
            let outcome = qfrac::solve(&inst, &config)?;
            emit(out.as_deref(), &qfrac::write_solution(&outcome)?)
        }
        Command::Bench { table, trials, scale, seed, out } => {
            let cfg = BenchConfig {
                table: table.into(),
                trials,
                scale: scale.into(),
                seed,
                solver: SolverConfig::default(),
            };
            let records = bench::run_bench(&cfg);
            match out {
                Some(p) => {
                    let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                    bench::write_csv(&records, f)?;
                }
                None => bench::write_csv(&records, std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Verify { oracle_samples, seed, instance } => verify(&instance, oracle_samples, seed),
    }
}
