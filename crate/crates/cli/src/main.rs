use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use infdiag::io::{read_model, serialize_model, write_model};
use infdiag::jointree::DEFAULT_MEMORY_BUDGET;
use infdiag::maze::{build_maze_id, MazeSpec, Variant};
use infdiag::solver::{solve_with_budget, Method, Solution};
use infdiag::upper_bound::build_upper_bound_id;
use infdiag::{Error, InfluenceDiagram};

#[derive(Parser)]
#[command(
    name = "infdiag",
    version,
    about = "Exact influence diagram evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the maximum expected utility of each model file.
    Solve {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// jointree, exhaustive or dfbnb.
        #[arg(long, default_value = "dfbnb")]
        method: Method,
        /// Print a tab-separated statistics line per run.
        #[arg(long)]
        stats: bool,
        /// Print a header before the first statistics line.
        #[arg(long, requires = "stats")]
        header: bool,
        /// Write the policy tree as JSON (one input, search methods only).
        #[arg(long)]
        policy_out: Option<PathBuf>,
        /// Join tree size limit in table entries.
        #[arg(long, default_value_t = DEFAULT_MEMORY_BUDGET)]
        max_memory: usize,
        /// Inputs solved in parallel.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
    },
    /// Generate the model file of a maze layout.
    Maze {
        layout: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        stages: u32,
        /// original, exact-sensors or exact-both.
        #[arg(long, default_value = "original")]
        variant: Variant,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print each decision's sufficient information set and arc changes.
    Bounds {
        input: PathBuf,
        #[arg(long)]
        json: bool,
        /// Write the upper-bound diagram to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure with its exit status: 1 usage or parse, 2 validation, 3 budget.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn from_error(context: &str, e: Error) -> Self {
        let code = match e {
            Error::Json(_) | Error::Parse(_) | Error::Io(_) | Error::Maze(_) => 1,
            Error::MemoryBudget { .. } | Error::TooLarge { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: format!("{context}: {e}"),
        }
    }
}

/// `x` to 9 significant digits without trailing zeros.
fn format_meu(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        let s = format!("{x:.8e}");
        let (mantissa, e) = s.split_once('e').unwrap();
        return format!("{}e{e}", trim(mantissa));
    }
    let decimals = (8 - exp).max(0) as usize;
    trim(&format!("{x:.decimals$}")).to_string()
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn load(path: &Path) -> Result<InfluenceDiagram, Failure> {
    let ctx = path.display().to_string();
    let id = read_model(path).map_err(|e| Failure::from_error(&ctx, e))?;
    id.ensure_valid()
        .map_err(|e| Failure::from_error(&ctx, e))?;
    Ok(id)
}

type Outcome = Result<(InfluenceDiagram, Solution), Failure>;

fn solve_one(path: &Path, method: Method, budget: usize) -> Outcome {
    let id = load(path)?;
    let sol = solve_with_budget(&id, method, budget)
        .map_err(|e| Failure::from_error(&path.display().to_string(), e))?;
    Ok((id, sol))
}

fn stats_line(method: Method, s: &Solution) -> String {
    let ms = s.stats.elapsed.as_secs_f64() * 1e3;
    if s.policy.is_none() {
        return format!("{method}\t{ms:.1}\t-\t-\t-");
    }
    format!(
        "{method}\t{ms:.1}\t{}\t{}\t{}",
        s.stats.policy, s.stats.bounds, s.stats.zeros
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    inputs: &[PathBuf],
    method: Method,
    stats: bool,
    header: bool,
    policy_out: Option<&Path>,
    budget: usize,
    jobs: usize,
) -> Result<(), Failure> {
    if policy_out.is_some() && (inputs.len() != 1 || method == Method::JoinTree) {
        return Err(Failure::usage(
            "--policy-out needs exactly one input and a search method",
        ));
    }
    let results: Vec<Mutex<Option<Outcome>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(inputs.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = inputs.get(k) else { break };
                *results[k].lock().unwrap() = Some(solve_one(path, method, budget));
            });
        }
    });
    if header {
        println!("method\ttime_ms\tpolicy\tbounds\tzeros");
    }
    let mut first_error = None;
    for slot in results {
        match slot.into_inner().unwrap().expect("every input is solved") {
            Ok((id, sol)) => {
                println!("{}", format_meu(sol.meu));
                if stats {
                    println!("{}", stats_line(method, &sol));
                }
                if let (Some(out), Some(policy)) = (policy_out, &sol.policy) {
                    let text = serde_json::to_string_pretty(&policy.to_json(&id))
                        .expect("JSON values serialize");
                    std::fs::write(out, text + "\n")
                        .map_err(|e| Failure::from_error(&out.display().to_string(), e.into()))?;
                }
            }
            Err(f) => {
                eprintln!("error: {}", f.message);
                first_error.get_or_insert(Failure {
                    code: f.code,
                    message: String::new(),
                });
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn cmd_maze(
    layout: &Path,
    stages: usize,
    variant: Variant,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let ctx = layout.display().to_string();
    let text = std::fs::read_to_string(layout).map_err(|e| Failure::from_error(&ctx, e.into()))?;
    let spec = MazeSpec::parse(&text, stages, variant).map_err(|e| Failure::from_error(&ctx, e))?;
    let id = build_maze_id(&spec).map_err(|e| Failure::from_error(&ctx, e))?;
    match out {
        Some(path) => {
            write_model(path, &id).map_err(|e| Failure::from_error(&path.display().to_string(), e))
        }
        None => {
            println!("{}", serialize_model(&id));
            Ok(())
        }
    }
}

fn cmd_bounds(input: &Path, json: bool, out: Option<&Path>) -> Result<(), Failure> {
    let ctx = input.display().to_string();
    let id = load(input)?
        .apply_no_forgetting()
        .map_err(|e| Failure::from_error(&ctx, e))?;
    let (ub, results) = build_upper_bound_id(&id).map_err(|e| Failure::from_error(&ctx, e))?;
    let name = |v: &infdiag::VarId| id.name(*v).to_string();
    let arcs = |a: &[(infdiag::VarId, infdiag::VarId)]| {
        a.iter()
            .map(|(f, t)| [name(f), name(t)])
            .collect::<Vec<_>>()
    };
    if json {
        let value: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "decision": name(&r.decision),
                    "sis": r.sis.iter().map(name).collect::<Vec<_>>(),
                    "candidate_pool": r.candidate_pool.iter().map(name).collect::<Vec<_>>(),
                    "added_arcs": arcs(&r.added_arcs),
                    "removed_arcs": arcs(&r.removed_arcs),
                })
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("JSON values serialize")
        );
    } else {
        let list = |a: &[(infdiag::VarId, infdiag::VarId)]| {
            let mut s = String::new();
            for (k, [f, t]) in arcs(a).iter().enumerate() {
                let _ = write!(s, "{}{f} -> {t}", if k > 0 { ", " } else { "" });
            }
            if s.is_empty() {
                s.push_str("none");
            }
            s
        };
        for r in results.iter().rev() {
            println!(
                "{}: {{{}}}",
                name(&r.decision),
                r.sis.iter().map(name).collect::<Vec<_>>().join(", ")
            );
            println!("  added: {}", list(&r.added_arcs));
            println!("  removed: {}", list(&r.removed_arcs));
        }
    }
    if let Some(path) = out {
        write_model(path, &ub).map_err(|e| Failure::from_error(&path.display().to_string(), e))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve {
            inputs,
            method,
            stats,
            header,
            policy_out,
            max_memory,
            jobs,
        } => cmd_solve(
            &inputs,
            method,
            stats,
            header,
            policy_out.as_deref(),
            max_memory,
            jobs as usize,
        ),
        Command::Maze {
            layout,
            stages,
            variant,
            out,
        } => cmd_maze(&layout, stages as usize, variant, out.as_deref()),
        Command::Bounds { input, json, out } => cmd_bounds(&input, json, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meu_has_nine_significant_digits() {
        assert_eq!(format_meu(5.2), "5.2");
        assert_eq!(format_meu(0.172358941108), "0.172358941");
        assert_eq!(format_meu(0.0), "0");
        assert_eq!(format_meu(-3.0), "-3");
        assert_eq!(format_meu(123456.789012), "123456.789");
        assert_eq!(format_meu(9.9999999999), "10");
        assert_eq!(format_meu(1.5e-7), "1.5e-7");
    }
}
