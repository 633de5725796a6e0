//! Command-line front end: validate, solve, generate, simulate, verify.
//!
//! Errors print one machine-readable JSON line on stderr
//! (`{"error":{"kind":…,"message":…}}`) and exit with the kind's code:
//! 1 validation, 2 precondition, 3 parse/io. Outputs are canonical, so
//! identical invocations write byte-identical documents.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use pars_mdp::io::{
    load_bonus, load_instance, parse_solution, save_bonus, save_instance, save_solution,
};
use pars_mdp::mdp::MdpInstance;
use pars_mdp::oracle::{
    brute_force_optimal, gen_knapsack_gadget, gen_knapsack_spec, gen_layer_graph, gen_random_tree,
    gen_wcspp, simulate, wcspp_to_pars, SweepConfig,
};
use pars_mdp::shaping::best_response;
use pars_mdp::stum::{stum_solve, stum_solve_delta};
use pars_mdp::dfar::{dfar_solve, dfar_solve_delta, dfar_solve_pruned, solve_bi_criteria};
use pars_mdp::{Algorithm, ParsError, Solution, ETA};

#[derive(Parser)]
#[command(
    name = "pars-mdp",
    version,
    about = "Budget-optimal reward shaping for principal-agent MDPs"
)]
struct Cli {
    /// Worker threads for the simulation sweep (default: $PARS_MDP_JOBS,
    /// else 1).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Seed for the instance generators.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance document and print its profile.
    Validate { instance: PathBuf },

    /// Solve an instance and print the realized values.
    Solve {
        instance: PathBuf,

        /// Solver to run.
        #[arg(long, value_enum)]
        algo: Algo,

        /// Grid / discretization step.
        #[arg(long)]
        epsilon: Option<f64>,

        /// Inflate the budget grid by ε·|states| (tree solver only).
        #[arg(long)]
        inflate: bool,

        /// Solve for a δ-approximate agent with this much slack.
        #[arg(long)]
        delta: Option<f64>,

        /// Discretize-and-inflate wrapper with a value/budget certificate
        /// (frontier solver only).
        #[arg(long)]
        bi_criteria: bool,

        /// Write the full solution document here.
        #[arg(long)]
        out: Option<PathBuf>,

        /// Write the bonus document here.
        #[arg(long)]
        out_bonus: Option<PathBuf>,
    },

    /// Generate a seeded instance and write it as a document.
    Generate {
        /// Instance family.
        #[arg(long, value_enum)]
        kind: Kind,

        /// Tree: branching factor (default 2).
        #[arg(long)]
        arity: Option<usize>,

        /// Tree: depth = horizon (default 3).
        #[arg(long)]
        depth: Option<usize>,

        /// Layer graph: number of layers (default 4).
        #[arg(long)]
        layers: Option<usize>,

        /// Layer graph: states per layer (default 4).
        #[arg(long)]
        width: Option<usize>,

        /// Layer graph: actions per state (default 3).
        #[arg(long)]
        actions: Option<usize>,

        /// Knapsack: number of items (default 5).
        #[arg(long)]
        items: Option<usize>,

        /// Override the generated instance's bonus budget.
        #[arg(long)]
        budget: Option<f64>,

        /// Where to write the instance document.
        #[arg(long)]
        out: PathBuf,
    },

    /// Run a batch sweep from a config document and write the record CSV.
    Simulate {
        config: PathBuf,

        /// Where to write the CSV.
        #[arg(long)]
        out: PathBuf,
    },

    /// Report which policy a bonus document makes the agent play.
    Verify {
        instance: PathBuf,
        bonus: PathBuf,

        /// Solution document to check the realized values against.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    /// Budget-grid tree solver, strict agent.
    Stum,
    /// Budget-grid tree solver, δ-approximate agent.
    StumDelta,
    /// Exact Pareto-frontier solver (grid-aligned rewards).
    Dfar,
    /// Discretize-and-inflate frontier wrapper.
    DfarBiCriteria,
    /// Rounded-gap frontier for a δ-approximate agent.
    DfarDelta,
    /// Frontier solver with ε-resolution pruning.
    DfarPruned,
    /// Exhaustive policy enumeration.
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// Full k-ary stochastic tree.
    Tree,
    /// Layered deterministic graph.
    Layer,
    /// Two-step knapsack reduction.
    Knapsack,
    /// Weight-constrained shortest-path reduction.
    Wcspp,
}

fn main() {
    let cli = Cli::parse();
    let jobs = cli.jobs.unwrap_or_else(|| {
        std::env::var("PARS_MDP_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(1)
    });
    if let Err(e) = run(cli, jobs) {
        eprintln!(
            "{}",
            serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}})
        );
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli, jobs: usize) -> Result<(), ParsError> {
    match cli.command {
        Command::Validate { instance } => cmd_validate(&instance),
        Command::Solve {
            instance,
            algo,
            epsilon,
            inflate,
            delta,
            bi_criteria,
            out,
            out_bonus,
        } => cmd_solve(
            &instance, algo, epsilon, inflate, delta, bi_criteria, out, out_bonus,
        ),
        Command::Generate {
            kind,
            arity,
            depth,
            layers,
            width,
            actions,
            items,
            budget,
            out,
        } => cmd_generate(
            kind, arity, depth, layers, width, actions, items, budget, cli.seed, &out,
        ),
        Command::Simulate { config, out } => cmd_simulate(&config, &out, jobs),
        Command::Verify {
            instance,
            bonus,
            expect,
        } => cmd_verify(&instance, &bonus, expect.as_deref()),
    }
}

fn cmd_validate(path: &Path) -> Result<(), ParsError> {
    // The loader runs full validation; a dirty document surfaces its
    // violations here rather than a generic failure.
    let text = std::fs::read_to_string(path)?;
    match pars_mdp::io::parse_instance(&text) {
        Ok(instance) => {
            let report = instance.validate();
            println!("valid true");
            println!("layout {}", report.layout);
            println!("states {}", instance.num_states());
            println!("horizon {}", instance.horizon());
            println!("budget {:?}", instance.budget());
            println!("initial {}", instance.state_name(instance.initial()));
            let unreachable: Vec<&str> = report
                .unreachable
                .iter()
                .map(|&s| instance.state_name(s))
                .collect();
            if !unreachable.is_empty() {
                println!("unreachable {}", unreachable.join(","));
            }
            Ok(())
        }
        Err(ParsError::Validation { violations }) => {
            println!("valid false");
            for v in &violations {
                println!("violation {v}");
            }
            Err(ParsError::Validation { violations })
        }
        Err(other) => Err(other),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    path: &Path,
    algo: Algo,
    epsilon: Option<f64>,
    inflate: bool,
    delta: Option<f64>,
    bi_criteria: bool,
    out: Option<PathBuf>,
    out_bonus: Option<PathBuf>,
) -> Result<(), ParsError> {
    let instance = load_instance(path)?;

    // Fold the modifier flags into the algorithm choice.
    let algo = match (algo, delta.is_some(), bi_criteria) {
        (Algo::Stum, true, false) => Algo::StumDelta,
        (Algo::Dfar, true, false) => Algo::DfarDelta,
        (Algo::Dfar, false, true) => Algo::DfarBiCriteria,
        (a @ (Algo::StumDelta | Algo::DfarDelta), _, false) => a,
        (a @ Algo::DfarBiCriteria, false, _) => a,
        (a, false, false) => a,
        (a, _, _) => {
            return Err(ParsError::Precondition(format!(
                "--delta / --bi-criteria do not combine with --algo {}",
                a.to_possible_value().unwrap().get_name()
            )));
        }
    };
    if inflate && algo != Algo::Stum {
        return Err(ParsError::Precondition(
            "--inflate applies only to --algo stum".to_string(),
        ));
    }
    let need_eps = |what: &str| {
        epsilon.ok_or_else(|| ParsError::Precondition(format!("--epsilon is required for {what}")))
    };

    let solution = match algo {
        Algo::Stum => stum_solve(&instance, need_eps("--algo stum")?, inflate)?,
        Algo::StumDelta => {
            // Given only ε, default the agent slack to the grid bound ε·|S|.
            let d = match (delta, epsilon) {
                (Some(d), _) => d,
                (None, Some(e)) => e * instance.num_states() as f64,
                (None, None) => {
                    return Err(ParsError::Precondition(
                        "stum-delta needs --delta or --epsilon".to_string(),
                    ))
                }
            };
            stum_solve_delta(&instance, epsilon, d)?
        }
        Algo::Dfar => dfar_solve(&instance, need_eps("--algo dfar")?)?,
        Algo::DfarBiCriteria => solve_bi_criteria(&instance, need_eps("--bi-criteria")?)?,
        Algo::DfarDelta => {
            // Given only δ, pick ε = δ/H so the agent shortfall stays ≤ δ.
            let e = match (epsilon, delta) {
                (Some(e), _) => e,
                (None, Some(d)) => d / instance.horizon() as f64,
                (None, None) => {
                    return Err(ParsError::Precondition(
                        "dfar-delta needs --epsilon or --delta".to_string(),
                    ))
                }
            };
            dfar_solve_delta(&instance, e)?
        }
        Algo::DfarPruned => dfar_solve_pruned(&instance, need_eps("--algo dfar-pruned")?)?,
        Algo::Brute => {
            let b = brute_force_optimal(&instance, None)?;
            Solution {
                algorithm: Algorithm::BruteForce,
                principal_value: b.principal_value,
                agent_value: b.agent_value,
                budget_used: b.budget_used,
                bonus: b.bonus,
                policy: b.policy,
                epsilon: 0.0,
                effective_budget: instance.budget(),
                agent_shortfall: None,
                certificate: None,
            }
        }
    };

    println!("algorithm {}", solution.algorithm);
    println!("principal_value {:?}", solution.principal_value);
    println!("agent_value {:?}", solution.agent_value);
    println!("budget_used {:?}", solution.budget_used);
    if let Some(shortfall) = solution.agent_shortfall {
        println!("agent_shortfall {:?}", shortfall);
    }
    if let Some(cert) = &solution.certificate {
        println!(
            "certificate value ≥ optimum − {:?}, budget ≤ {:?}",
            cert.additive_slack, cert.budget_cap
        );
    }
    if let Some(out) = out {
        save_solution(&solution, &instance, &out)?;
    }
    if let Some(out) = out_bonus {
        save_bonus(&solution.bonus, &instance, &out)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    kind: Kind,
    arity: Option<usize>,
    depth: Option<usize>,
    layers: Option<usize>,
    width: Option<usize>,
    actions: Option<usize>,
    items: Option<usize>,
    budget: Option<f64>,
    seed: u64,
    out: &Path,
) -> Result<(), ParsError> {
    let reject = |flag: &str, kind: &str| {
        ParsError::Precondition(format!("--{flag} does not apply to --kind {kind}"))
    };
    let instance: MdpInstance = match kind {
        Kind::Tree => {
            for (set, flag) in [
                (layers.is_some(), "layers"),
                (width.is_some(), "width"),
                (actions.is_some(), "actions"),
                (items.is_some(), "items"),
            ] {
                if set {
                    return Err(reject(flag, "tree"));
                }
            }
            gen_random_tree(arity.unwrap_or(2), depth.unwrap_or(3), seed)?
        }
        Kind::Layer => {
            for (set, flag) in [
                (arity.is_some(), "arity"),
                (depth.is_some(), "depth"),
                (items.is_some(), "items"),
            ] {
                if set {
                    return Err(reject(flag, "layer"));
                }
            }
            gen_layer_graph(
                layers.unwrap_or(4),
                width.unwrap_or(4),
                actions.unwrap_or(3),
                seed,
            )?
        }
        Kind::Knapsack => gen_knapsack_gadget(&gen_knapsack_spec(items.unwrap_or(5), seed))?
            .instance,
        Kind::Wcspp => wcspp_to_pars(&gen_wcspp(seed))?.instance,
    };
    let instance = match budget {
        Some(b) => instance.with_budget(b),
        None => instance,
    };
    save_instance(&instance, out)?;
    println!(
        "wrote {} ({} states, horizon {}, budget {:?})",
        out.display(),
        instance.num_states(),
        instance.horizon(),
        instance.budget()
    );
    Ok(())
}

fn cmd_simulate(config: &Path, out: &Path, jobs: usize) -> Result<(), ParsError> {
    let cfg: SweepConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
    let report = simulate(&cfg, jobs)?;
    let file = std::fs::File::create(out)?;
    pars_mdp::oracle::sweep::write_csv(&report.records, file)?;
    println!("records {}", report.records.len());
    println!("failures {}", report.failures.len());
    for f in &report.failures {
        println!("failure {f}");
    }
    for a in &report.aggregates {
        match a.mean_bruteforce {
            Some(reference) => println!(
                "cell {} epsilon {:?} budget {:?}: mean {:.6} std {:.6} exhaustive {:.6}",
                a.algorithm, a.epsilon, a.budget, a.mean_principal, a.std_principal, reference
            ),
            None => println!(
                "cell {} epsilon {:?} budget {:?}: mean {:.6} std {:.6}",
                a.algorithm, a.epsilon, a.budget, a.mean_principal, a.std_principal
            ),
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_verify(
    instance_path: &Path,
    bonus_path: &Path,
    expect: Option<&Path>,
) -> Result<(), ParsError> {
    let instance = load_instance(instance_path)?;
    let bonus = load_bonus(bonus_path, &instance)?;
    let response = best_response(&instance, &bonus)?;
    let total = bonus.total();

    match response.policy.induced_path(&instance) {
        Some(path) => {
            let names: Vec<&str> = path.iter().map(|&s| instance.state_name(s)).collect();
            println!("implements path ({}), total {:?}", names.join(","), total);
        }
        None => {
            let mut choices = Vec::new();
            for s in 0..instance.num_states() {
                if let Some(a) = response.policy.choice(s) {
                    choices.push(format!(
                        "{}={}",
                        instance.state_name(s),
                        instance.action_name(a)
                    ));
                }
            }
            println!("implements policy ({}), total {:?}", choices.join(","), total);
        }
    }
    println!("agent_value {:?}", response.agent_value);
    println!("principal_value {:?}", response.principal_value);
    println!(
        "within_budget {}",
        if total <= instance.budget() + ETA {
            "true"
        } else {
            "false"
        }
    );

    if let Some(expect_path) = expect {
        let doc = parse_solution(&std::fs::read_to_string(expect_path)?)?;
        let mut mismatches = Vec::new();
        for (name, claimed, realized) in [
            ("principal_value", doc.principal_value, response.principal_value),
            ("agent_value", doc.agent_value, response.agent_value),
            ("bonus_total", doc.bonus_total, total),
        ] {
            if (claimed - realized).abs() > ETA {
                mismatches.push(format!("{name} claimed {claimed:?}, realized {realized:?}"));
            }
        }
        if mismatches.is_empty() {
            println!("matches {}", expect_path.display());
        } else {
            return Err(ParsError::Validation {
                violations: mismatches,
            });
        }
    }
    Ok(())
}
