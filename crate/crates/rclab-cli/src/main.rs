//! `rclab`: seeded, reproducible experiments on random walks among random
//! conductances, with machine-readable outputs.

mod describe;
mod output;
mod params;

use output::{Format, RunContext};
use params::{Params, UsageError};
use rclab_core::analysis::{
    annealed_return, anomalous_pipeline, anomalous_pipeline_on, bounds_report, fit_exponent,
    planted_fixture, PipelineConfig,
};
use rclab_core::environment::{
    min_conductance_statistic, modify, sample_environment, ConductanceLaw, Environment,
};
use rclab_core::isoperimetry::{
    full_profile_with_budget, iso_constant_check, iso_profile_sampled, iso_profile_with_budget,
    random_connected_even_subset, surface_volume_check, verify_mp_with_sigma, FiniteChain,
    IsoProfile, SUBSET_BUDGET,
};
use rclab_core::kernel::{
    geometric_grid, heat_kernel, return_series, ReturnSeries, DEFAULT_TRUNCATION,
};
use rclab_core::lattice::{LatticePoint, Window};
use rclab_core::rng::replica_seed;
use rclab_core::traps::{alpha_exponent, q_n_closed_form, q_n_with_alpha, scan_traps};
use rclab_core::walker::simulate;
use rclab_core::Error;
use std::collections::BTreeMap;
use std::path::PathBuf;

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Usage(_) => 2,
        CliError::Core(err) => match err {
            Error::CapacityExceeded { .. }
            | Error::BudgetExceeded { .. }
            | Error::HorizonTooLarge { .. }
            | Error::PointOutsideBox { .. }
            | Error::BondOutsideBox { .. } => 3,
            Error::Io(_)
            | Error::MalformedFile(_)
            | Error::ChecksumMismatch { .. }
            | Error::UnsupportedVersion { .. }
            | Error::BadMagic => 4,
            _ => 2,
        },
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => {}
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("usage error: {msg}"),
                CliError::Core(err) => eprintln!("error: {err}"),
            }
            std::process::exit(exit_code(&e));
        }
    }
}

fn usage() -> String {
    let mut text = String::from(
        "rclab: experiments on random walks among random conductances\n\n\
         usage: rclab <command> [--flag value ...]\n\
         \u{20}       rclab describe <command>\n\ncommands:\n",
    );
    for cmd in describe::COMMANDS {
        text.push_str(&format!("  {cmd}\n"));
    }
    text.push_str(
        "\ncommon flags: --config <file> (key=value lines; flags override),\n\
         --out <path> (default stdout), --format json|csv, --threads <n>\n\
         (or RCLAB_THREADS), --no-timestamp, --seed <u64>\n",
    );
    text
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    if args.is_empty() || args[0] == "--help" || args[0] == "help" {
        print!("{}", usage());
        return Ok(());
    }
    let (words, mut p) = Params::parse(args)?;
    if words.first().map(String::as_str) == Some("describe") {
        let rest = words[1..].join(" ");
        return match describe::describe(&rest) {
            Some(text) => {
                println!("{text}");
                Ok(())
            }
            None => Err(CliError::Usage(format!(
                "unknown command {rest:?}; expected one of: {}",
                describe::COMMANDS.join(", ")
            ))),
        };
    }
    let command = words.join(" ");
    if !describe::COMMANDS.contains(&command.as_str()) {
        return Err(CliError::Usage(format!(
            "unknown command {command:?}\n\n{}",
            usage()
        )));
    }

    if let Some(config_path) = p.take_raw("config") {
        p.merge_config(&PathBuf::from(config_path))?;
    }
    let threads: usize = match p.take_opt::<usize>("threads")? {
        Some(t) => t,
        None => std::env::var("RCLAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0),
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let format = match p.take::<String>("format", Some("json".into()))?.as_str() {
        "json" => Format::Json,
        "csv" => Format::Csv,
        other => {
            return Err(CliError::Usage(format!(
                "--format must be json or csv, got {other:?}"
            )))
        }
    };
    let out = p.take_opt::<PathBuf>("out")?;
    let no_timestamp = p.take_flag("no-timestamp")?;

    let make_ctx = |resolved: BTreeMap<String, String>| RunContext {
        command: command.clone(),
        resolved,
        format,
        out: out.clone(),
        no_timestamp,
        threads,
    };

    match command.as_str() {
        "env sample" => env_sample(p, make_ctx),
        "env stat" => env_stat(p, make_ctx),
        "kernel return" => kernel_return(p, make_ctx),
        "kernel dist" => kernel_dist(p, make_ctx),
        "walk simulate" => walk_simulate(p, make_ctx),
        "traps scan" => traps_scan(p, make_ctx),
        "traps qn" => traps_qn(p, make_ctx),
        "traps lambda" => traps_lambda(p, make_ctx),
        "iso profile" => iso_profile_cmd(p, make_ctx),
        "iso mp" => iso_mp(p, make_ctx),
        "iso check" => iso_check(p, make_ctx),
        "fit exponent" => fit_exponent_cmd(p, make_ctx),
        "report bounds" => report_bounds(p, make_ctx),
        "annealed" => annealed(p, make_ctx),
        "pipeline anomalous" => pipeline_anomalous(p, make_ctx),
        _ => unreachable!("validated above"),
    }
}

/// Reads the law flags: `--law polytail|sitemin|constant` with `--gamma`
/// or `--value`.
fn take_law(p: &mut Params) -> Result<ConductanceLaw, CliError> {
    let law = p.take::<String>("law", Some("polytail".into()))?;
    Ok(match law.as_str() {
        "polytail" => ConductanceLaw::PolyTail {
            gamma: p.take("gamma", Some(1.0))?,
        },
        "sitemin" => ConductanceLaw::SiteMin {
            gamma: p.take("gamma", Some(1.0))?,
        },
        "constant" => ConductanceLaw::Constant {
            value: p.take("value", Some(1.0))?,
        },
        other => {
            return Err(CliError::Usage(format!(
                "--law must be polytail, sitemin or constant, got {other:?}"
            )))
        }
    })
}

/// Environment from `--in <file>` or sampled from the law flags.
fn take_env(p: &mut Params) -> Result<Environment, CliError> {
    if let Some(path) = p.take_opt::<PathBuf>("in")? {
        return Ok(Environment::load(path)?);
    }
    let d = p.take::<usize>("d", Some(2))?;
    let law = take_law(p)?;
    let radius = p.take::<i64>("radius", None)?;
    let seed = p.take::<u64>("seed", Some(0))?;
    Ok(sample_environment(d, radius, law, seed)?)
}

fn take_grid(p: &mut Params) -> Result<Vec<u64>, CliError> {
    if let Some(grid) = p.take_list::<u64>("grid")? {
        if grid.is_empty() {
            return Err(CliError::Usage("--grid must not be empty".into()));
        }
        return Ok(grid);
    }
    let n_min = p.take::<u64>("nmin", Some(1))?;
    let n_max = p.take::<u64>("nmax", None)?;
    let per_octave = p.take::<u32>("per-octave", Some(4))?;
    if n_min < 1 || n_max < n_min {
        return Err(CliError::Usage(format!(
            "need 1 <= nmin <= nmax, got {n_min}..{n_max}"
        )));
    }
    Ok(geometric_grid(n_min, n_max, per_octave))
}

fn point_from_list(coords: Vec<i64>, d: usize, what: &str) -> Result<LatticePoint, CliError> {
    if coords.len() != d {
        return Err(CliError::Usage(format!(
            "--{what} must have {d} coordinates, got {}",
            coords.len()
        )));
    }
    Ok(LatticePoint::new(coords))
}

fn env_sample(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let d = p.take::<usize>("d", Some(2))?;
    let law = take_law(&mut p)?;
    let radius = p.take::<i64>("radius", None)?;
    let seed = p.take::<u64>("seed", Some(0))?;
    let ctx = ctx(p.finish()?);
    // here --out names the binary field file; the summary goes to stdout
    let target = ctx.out.clone().ok_or_else(|| {
        UsageError("env sample requires --out <path> for the field file".into())
    })?;
    let env = sample_environment(d, radius, law, seed)?;
    // atomic: write into a temp path next to the target, then rename
    let dir = target
        .parent()
        .filter(|q| !q.as_os_str().is_empty())
        .map(|q| q.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(Error::Io)?;
    let tmp_path = tmp.into_temp_path();
    env.save(&tmp_path)?;
    tmp_path.persist(&target).map_err(|e| Error::Io(e.error))?;
    let summary_ctx = RunContext { out: None, ..ctx };
    summary_ctx.emit_json(serde_json::json!({
        "path": target,
        "d": d,
        "radius": radius,
        "law": env.law(),
        "seed": seed,
        "bond_count": env.bond_count(),
    }))?;
    Ok(())
}

fn env_stat(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let n_box = p.take::<i64>("N", None)?;
    let seeds = p.take::<u64>("seeds", Some(1))?;
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let (values, law, d) = if seeds == 1 {
        let env = take_env(&mut p)?;
        (
            vec![min_conductance_statistic(&env, n_box)?],
            env.law(),
            env.dim(),
        )
    } else {
        let d = p.take::<usize>("d", Some(2))?;
        let law = take_law(&mut p)?;
        let radius = p.take::<i64>("radius", None)?;
        let seed = p.take::<u64>("seed", Some(0))?;
        let values = (0..seeds)
            .map(|i| {
                let env = sample_environment(d, radius, law, replica_seed(seed, i))?;
                min_conductance_statistic(&env, n_box)
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        (values, law, d)
    };
    let ctx = ctx(p.finish()?);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let theory = match law {
        ConductanceLaw::PolyTail { gamma } | ConductanceLaw::SiteMin { gamma } => {
            Some(-(d as f64) / gamma)
        }
        ConductanceLaw::Constant { .. } => None,
    };
    ctx.emit_json(serde_json::json!({
        "N": n_box,
        "values": values,
        "mean": mean,
        "theory_limit": theory,
    }))?;
    Ok(())
}

fn series_to_json(series: &ReturnSeries) -> serde_json::Value {
    serde_json::json!({
        "d": series.d,
        "law": series.law,
        "seed": series.seed,
        "tau": series.tau,
        "points": series.points.iter().map(|pt| {
            serde_json::json!({"n": pt.n, "p2n": pt.value, "err_bound": pt.err_bound})
        }).collect::<Vec<_>>(),
    })
}

fn kernel_return(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let env = take_env(&mut p)?;
    let grid = take_grid(&mut p)?;
    let tau = p.take::<f64>("tau", Some(DEFAULT_TRUNCATION))?;
    let gnuplot = p.take_opt::<PathBuf>("gnuplot")?;
    let ctx = ctx(p.finish()?);
    let series = return_series(&env, &grid, tau)?;
    if let Some(path) = gnuplot {
        let mut body = String::new();
        for pt in &series.points {
            body.push_str(&format!("{} {:.16e}\n", pt.n, pt.value));
        }
        ctx.emit_gnuplot(&path, &body)?;
    }
    match ctx.format {
        Format::Json => ctx.emit_json(series_to_json(&series))?,
        Format::Csv => {
            let mut buf = Vec::new();
            series.write_csv(&mut buf)?;
            ctx.emit_csv(&String::from_utf8(buf).expect("ascii"))?;
        }
    }
    Ok(())
}

fn kernel_dist(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let env = take_env(&mut p)?;
    let n = p.take::<u64>("n", None)?;
    let source = match p.take_list::<i64>("source")? {
        Some(coords) => point_from_list(coords, env.dim(), "source")?,
        None => LatticePoint::origin(env.dim()),
    };
    let tau = p.take::<f64>("tau", Some(DEFAULT_TRUNCATION))?;
    let ctx = ctx(p.finish()?);
    let dist = heat_kernel(&env, n, &source, tau)?;
    match ctx.format {
        Format::Json => {
            let entries: Vec<serde_json::Value> = dist
                .iter()
                .map(|(pt, m)| serde_json::json!({"point": pt.coords, "mass": m}))
                .collect();
            ctx.emit_json(serde_json::json!({
                "n": n,
                "source": source.coords,
                "support_size": dist.support_size(),
                "total_mass": dist.total_mass(),
                "lost_mass_bound": dist.lost_mass_bound(),
                "entries": entries,
            }))?;
        }
        Format::Csv => {
            let mut body = String::from("coords,mass\n");
            for (pt, m) in dist.iter() {
                let coords: Vec<String> = pt.coords.iter().map(|c| c.to_string()).collect();
                body.push_str(&format!("{},{m:.16e}\n", coords.join(";")));
            }
            ctx.emit_csv(&body)?;
        }
    }
    Ok(())
}

fn walk_simulate(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let env = take_env(&mut p)?;
    let length = p.take::<u64>("length", None)?;
    let walk_seed = p.take::<u64>("walk-seed", Some(0))?;
    let start = match p.take_list::<i64>("start")? {
        Some(coords) => point_from_list(coords, env.dim(), "start")?,
        None => LatticePoint::origin(env.dim()),
    };
    let ctx = ctx(p.finish()?);
    let traj = simulate(&env, &start, length, walk_seed)?;
    match ctx.format {
        Format::Json => {
            let positions: Vec<&Vec<i64>> = traj.positions().map(|pt| &pt.coords).collect();
            ctx.emit_json(serde_json::json!({
                "start": start.coords,
                "length": length,
                "walk_seed": walk_seed,
                "positions": positions,
            }))?;
        }
        Format::Csv => {
            let mut body = String::from("t,coords\n");
            for (t, pt) in traj.positions().enumerate() {
                let coords: Vec<String> = pt.coords.iter().map(|c| c.to_string()).collect();
                body.push_str(&format!("{t},{}\n", coords.join(";")));
            }
            ctx.emit_csv(&body)?;
        }
    }
    Ok(())
}

fn traps_scan(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let env = take_env(&mut p)?;
    let n = p.take::<u64>("N", None)?;
    let xi = p.take::<f64>("xi", Some(0.5))?;
    let alpha = match p.take_opt::<f64>("alpha")? {
        Some(a) => a,
        None => {
            let eps = p.take::<f64>("eps", Some(0.5))?;
            match env.law() {
                ConductanceLaw::PolyTail { gamma } | ConductanceLaw::SiteMin { gamma } => {
                    alpha_exponent(env.dim(), gamma, eps)?
                }
                ConductanceLaw::Constant { .. } => {
                    return Err(CliError::Usage(
                        "a constant field needs an explicit --alpha".into(),
                    ))
                }
            }
        }
    };
    let default_region = (3 * (n as i64 - 1)).clamp(1, (env.radius() - 3).max(1));
    let region_radius = p.take::<i64>("region-radius", Some(default_region))?;
    let ctx = ctx(p.finish()?);
    let report = scan_traps(&env, n, alpha, xi, &Window::new(env.dim(), region_radius))?;
    match ctx.format {
        Format::Json => {
            let hits: Vec<serde_json::Value> = report
                .hits
                .iter()
                .map(|(site, pattern)| {
                    serde_json::json!({
                        "site": site.coords,
                        "omega_xy": env.conductance(&pattern.weak_bond).unwrap(),
                        "omega_yz": env.conductance(&pattern.strong_bond).unwrap(),
                    })
                })
                .collect();
            ctx.emit_json(serde_json::json!({
                "N": report.n,
                "alpha": report.alpha,
                "xi": report.xi,
                "sites_scanned": report.sites_scanned,
                "hits": hits,
            }))?;
        }
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&env, &mut buf)?;
            ctx.emit_csv(&String::from_utf8(buf).expect("ascii"))?;
        }
    }
    Ok(())
}

fn traps_qn(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let d = p.take::<usize>("d", None)?;
    let gamma = p.take::<f64>("gamma", None)?;
    let xi = p.take::<f64>("xi", Some(0.5))?;
    let eps = p.take::<f64>("eps", Some(0.5))?;
    let n = p.take::<u64>("N", None)?;
    let alpha_override = p.take_opt::<f64>("alpha")?;
    let ctx = ctx(p.finish()?);
    let derived_alpha = alpha_exponent(d, gamma, eps)?;
    let (alpha, q) = match alpha_override {
        Some(a) => (a, q_n_with_alpha(d, gamma, xi, a, n)?),
        None => (derived_alpha, q_n_closed_form(d, gamma, xi, eps, n)?),
    };
    println!("{q:.6e}");
    if ctx.out.is_none() {
        return Ok(());
    }
    ctx.emit_json(serde_json::json!({
        "q_n": q,
        "alpha": alpha,
        "derived_alpha": derived_alpha,
        "weak_factor": 1.0 - 2f64.powf(-gamma),
        "strong_factor": 1.0 - xi.powf(gamma),
        "n_power": (n as f64).powf(eps - 1.0),
    }))?;
    Ok(())
}

fn traps_lambda(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let d = p.take::<usize>("d", Some(2))?;
    let gamma = p.take::<f64>("gamma", Some(1.0))?;
    let xi = p.take::<f64>("xi", Some(0.5))?;
    let eps = p.take::<f64>("eps", Some(0.5))?;
    let n = p.take::<u64>("N", None)?;
    let replicas = p.take::<u64>("replicas", Some(10_000))?;
    let seed = p.take::<u64>("seed", Some(0))?;
    let ctx = ctx(p.finish()?);
    let report = rclab_core::traps::lambda_experiment(d, gamma, xi, eps, n, replicas, seed)?;
    ctx.emit_json(serde_json::to_value(&report).expect("serializable"))?;
    Ok(())
}

fn load_chain(path: &PathBuf) -> Result<FiniteChain, Error> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::MalformedFile(e.to_string()))?;
    FiniteChain::from_json(&value)
}

fn profile_to_json(profile: &IsoProfile) -> serde_json::Value {
    serde_json::json!({
        "mode": format!("{:?}", profile.mode),
        "breakpoints": profile.breakpoints.iter().map(|(r, phi, set)| {
            serde_json::json!({"r": r, "phi": phi, "minimizer": set})
        }).collect::<Vec<_>>(),
    })
}

/// A chain from `--chain <json>` or, with `--from-env`, the two-step
/// operator on the even sublattice of a modified sampled field
/// (`--N`, `--horizon` control the protected box and window padding).
fn take_chain(p: &mut Params) -> Result<FiniteChain, CliError> {
    if p.take_flag("from-env")? {
        let n = p.take::<i64>("N", None)?;
        let horizon = p.take::<u64>("horizon", Some(1))?;
        let max_states = p.take::<usize>("max-states", Some(rclab_core::kernel::DEFAULT_CHAIN_STATES))?;
        let d = p.take::<usize>("d", Some(2))?;
        let law = take_law(p)?;
        let radius = p.take::<i64>("radius", Some(n + 1))?;
        let seed = p.take::<u64>("seed", Some(0))?;
        let env = sample_environment(d, radius, law, seed)?;
        let modified = modify(&env, n)?;
        let chain = rclab_core::kernel::two_step_even_kernel(&modified, horizon, max_states)?;
        if let Some(path) = p.take_opt::<PathBuf>("export-chain")? {
            output::write_atomic(&path, (chain.to_json().to_string() + "\n").as_bytes())?;
        }
        Ok(chain)
    } else {
        let chain_path = p.take_req::<PathBuf>("chain")?;
        Ok(load_chain(&chain_path)?)
    }
}

fn iso_profile_cmd(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let chain = take_chain(&mut p)?;
    let budget = p.take::<u64>("budget", Some(SUBSET_BUDGET))?;
    let samples = p.take_opt::<usize>("sampled")?;
    let seed = p.take::<u64>("seed", Some(0))?;
    let grid = p.take_list::<f64>("r-grid")?;
    let ctx = ctx(p.finish()?);
    let profile = match samples {
        Some(count) => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = grid.unwrap_or_else(|| {
                (1..=chain.n_states())
                    .map(|k| k as f64 * chain.pi_total() / chain.n_states() as f64)
                    .collect()
            });
            iso_profile_sampled(&chain, &grid, count, &mut rng)
        }
        None => match grid {
            Some(grid) => iso_profile_with_budget(&chain, &grid, budget)?,
            None => full_profile_with_budget(&chain, budget)?,
        },
    };
    match ctx.format {
        Format::Json => ctx.emit_json(profile_to_json(&profile))?,
        Format::Csv => {
            let mut body = String::from("r,phi,minimizer_size\n");
            for (r, phi, set) in &profile.breakpoints {
                body.push_str(&format!("{r:.16e},{phi:.16e},{}\n", set.len()));
            }
            ctx.emit_csv(&body)?;
        }
    }
    Ok(())
}

fn iso_mp(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let chain = take_chain(&mut p)?;
    let epsilon = p.take::<f64>("epsilon", None)?;
    let sigma = p.take_opt::<f64>("sigma")?;
    let pairs_raw = p.take::<String>("pairs", Some("all".into()))?;
    let ctx = ctx(p.finish()?);
    let n = chain.n_states();
    let pairs: Vec<(usize, usize)> = if pairs_raw == "all" {
        (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).collect()
    } else {
        pairs_raw
            .split(',')
            .map(|pair| {
                let (a, b) = pair
                    .split_once(':')
                    .ok_or_else(|| UsageError(format!("bad pair {pair:?}; use x:y")))?;
                Ok::<(usize, usize), UsageError>((
                    a.trim()
                        .parse()
                        .map_err(|e| UsageError(format!("bad pair {pair:?}: {e}")))?,
                    b.trim()
                        .parse()
                        .map_err(|e| UsageError(format!("bad pair {pair:?}: {e}")))?,
                ))
            })
            .collect::<Result<_, _>>()?
    };
    let report = verify_mp_with_sigma(&chain, epsilon, &pairs, sigma)?;
    ctx.emit_json(serde_json::to_value(&report).expect("serializable"))?;
    Ok(())
}

fn iso_check(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let d = p.take::<usize>("d", Some(2))?;
    let surface_volume = p.take_flag("surface-volume")?;
    if !surface_volume {
        let max_side = p.take::<i64>("max-side", Some(8))?;
        let ctx = ctx(p.finish()?);
        if d != 2 {
            return Err(CliError::Usage(
                "the built-in shape families are two-dimensional; use --d 2".into(),
            ));
        }
        let squares: Vec<Vec<LatticePoint>> = (1..=max_side)
            .map(|k| {
                (0..k)
                    .flat_map(|x| (0..k).map(move |y| LatticePoint::new(vec![x, y])))
                    .collect()
            })
            .collect();
        let strips: Vec<Vec<LatticePoint>> = (1..=max_side)
            .map(|k| (0..k).map(|y| LatticePoint::new(vec![0, y])).collect())
            .collect();
        let kappa_squares = iso_constant_check(d, &squares)?;
        let kappa_strips = iso_constant_check(d, &strips)?;
        let all: Vec<Vec<LatticePoint>> =
            squares.into_iter().chain(strips).collect();
        let kappa = iso_constant_check(d, &all)?;
        ctx.emit_json(serde_json::json!({
            "kappa_squares": kappa_squares,
            "kappa_strips": kappa_strips,
            "kappa": kappa,
        }))?;
        return Ok(());
    }
    // surface/volume mode on random connected even subsets
    let gamma = p.take::<f64>("gamma", Some(45.0))?;
    let n = p.take::<u64>("N", Some(9))?;
    let mu = p.take::<f64>("mu", Some(0.5))?;
    let subsets = p.take::<u64>("subsets", Some(100))?;
    let max_size = p.take::<usize>("max-size", Some(12))?;
    let seed = p.take::<u64>("seed", Some(0))?;
    let ctx = ctx(p.finish()?);
    let env = sample_environment(d, n as i64 + 3, ConductanceLaw::PolyTail { gamma }, seed)?;
    let modified = modify(&env, n as i64)?;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a1f);
    let mut reports = Vec::new();
    let mut surface_failures = 0u64;
    let mut volume_failures = 0u64;
    let mut alpha_invalid = 0u64;
    for _ in 0..subsets {
        let size = rng.gen_range(1..=max_size);
        let subset =
            random_connected_even_subset(d, n as i64, size, LatticePoint::origin(d), &mut rng);
        let report = surface_volume_check(&modified, mu, Some(gamma), &subset)?;
        if !report.alpha_valid {
            alpha_invalid += 1;
        } else {
            if !report.surface_bound_holds {
                surface_failures += 1;
            }
            if !report.volume_bound_holds {
                volume_failures += 1;
            }
        }
        reports.push(report);
    }
    ctx.emit_json(serde_json::json!({
        "subsets": subsets,
        "alpha_invalid": alpha_invalid,
        "surface_failures": surface_failures,
        "volume_failures": volume_failures,
        "checks": reports,
    }))?;
    Ok(())
}

fn read_series(path: &PathBuf) -> Result<ReturnSeries, Error> {
    let file = std::fs::File::open(path)?;
    ReturnSeries::read_csv(std::io::BufReader::new(file))
}

fn fit_exponent_cmd(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let path = p.take_req::<PathBuf>("in")?;
    let n_min = p.take::<u64>("nmin", None)?;
    let n_max = p.take::<u64>("nmax", None)?;
    let seed = p.take::<u64>("seed", Some(0))?;
    let ctx = ctx(p.finish()?);
    let series = read_series(&path)?;
    let fit = fit_exponent(&series, n_min, n_max, seed)?;
    println!("{:.3}", fit.slope);
    if ctx.out.is_none() {
        return Ok(());
    }
    ctx.emit_json(serde_json::to_value(&fit).expect("serializable"))?;
    Ok(())
}

fn report_bounds(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let path = p.take_req::<PathBuf>("in")?;
    let n_min = p.take::<u64>("nmin", None)?;
    let n_max = p.take::<u64>("nmax", None)?;
    let seed = p.take::<u64>("seed", Some(0))?;
    let d = p.take::<usize>("d", None)?;
    let gamma = p.take::<f64>("gamma", None)?;
    let eps = p.take::<f64>("eps", Some(0.5))?;
    let mu = p.take::<f64>("mu", Some(0.01))?;
    let ctx = ctx(p.finish()?);
    let series = read_series(&path)?;
    let fit = fit_exponent(&series, n_min, n_max, seed)?;
    let report = bounds_report(&fit, d, gamma, eps, mu)?;
    ctx.emit_json(serde_json::to_value(&report).expect("serializable"))?;
    Ok(())
}

fn annealed(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let d = p.take::<usize>("d", Some(2))?;
    let law = {
        let law = p.take::<String>("law", Some("sitemin".into()))?;
        match law.as_str() {
            "polytail" => ConductanceLaw::PolyTail {
                gamma: p.take("gamma", Some(0.5))?,
            },
            "sitemin" => ConductanceLaw::SiteMin {
                gamma: p.take("gamma", Some(0.5))?,
            },
            "constant" => ConductanceLaw::Constant {
                value: p.take("value", Some(1.0))?,
            },
            other => {
                return Err(CliError::Usage(format!(
                    "--law must be polytail, sitemin or constant, got {other:?}"
                )))
            }
        }
    };
    let grid = take_grid(&mut p)?;
    let replicas = p.take::<u64>("replicas", Some(8))?;
    let seed = p.take::<u64>("seed", Some(0))?;
    let tau = p.take::<f64>("tau", Some(DEFAULT_TRUNCATION))?;
    let gnuplot = p.take_opt::<PathBuf>("gnuplot")?;
    let ctx = ctx(p.finish()?);
    let series = annealed_return(d, law, &grid, replicas, seed, tau)?;
    if let Some(path) = gnuplot {
        let mut body = String::new();
        for pt in &series.points {
            body.push_str(&format!("{} {:.16e}\n", pt.n, pt.mean));
        }
        ctx.emit_gnuplot(&path, &body)?;
    }
    ctx.emit_json(serde_json::to_value(&series).expect("serializable"))?;
    Ok(())
}

fn pipeline_anomalous(
    mut p: Params,
    ctx: impl FnOnce(BTreeMap<String, String>) -> RunContext,
) -> Result<(), CliError> {
    let config = PipelineConfig {
        d: p.take::<usize>("d", Some(2))?,
        gamma: p.take::<f64>("gamma", Some(1.0))?,
        xi: p.take::<f64>("xi", Some(0.5))?,
        eps: p.take::<f64>("eps", Some(0.5))?,
        n_scale: p.take::<u64>("N", None)?,
        seed: p.take::<u64>("seed", Some(0))?,
        walk_replicas: p.take::<u64>("replicas", Some(8))?,
        tau: p.take::<f64>("tau", Some(DEFAULT_TRUNCATION))?,
        alpha_override: p.take_opt::<f64>("alpha")?,
        walk_step_cap: p.take::<u64>("walk-cap", Some(2_000_000))?,
    };
    let plant_rank = p.take_opt::<u32>("plant-rank")?;
    let ctx = ctx(p.finish()?);
    let report = match plant_rank {
        Some(k) => {
            let (env, _site) = planted_fixture(&config, k)?;
            anomalous_pipeline_on(&env, &config)?
        }
        None => anomalous_pipeline(&config)?,
    };
    ctx.emit_json(serde_json::to_value(&report).expect("serializable"))?;
    Ok(())
}
