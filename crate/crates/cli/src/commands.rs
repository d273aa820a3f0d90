//! Subcommand implementations. Exit codes: 0 success, 1 configuration error,
//! 2 runtime failure, 3 failed verification check.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use magmcmc_core::catalog;
use magmcmc_core::diagnostics::{
    check_map_reversibility, ess_report, standard_battery, CheckParams, CheckSuite,
};
use magmcmc_core::integrator::{integrate, IntegratorParams};
use magmcmc_core::magnetic::{flow_kinetic, flow_potential, MagneticField, PhaseState, SkewMatrix};
use magmcmc_core::manifold::{sample_momentum, Euclidean, SpecialOrthogonal, Sphere};
use magmcmc_core::sampler::{run_chain, ChainConfig, ChainOutput, SamplerKind};
use magmcmc_core::target::{FreeMotion, Target};
use magmcmc_core::{Matrix, Vector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::io;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

fn deterministic_timing() -> bool {
    std::env::var("MAGMCMC_DETERMINISTIC_TIMING").is_ok()
}

fn worker_cap(jobs: usize) -> usize {
    let env_cap = std::env::var("MAGMCMC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1);
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    env_cap.unwrap_or(hw).min(jobs).max(1)
}

struct ChainJob {
    index: usize,
    field_seed: Option<u64>,
    chain_seed: u64,
}

struct ChainResult {
    index: usize,
    field_seed: Option<u64>,
    chain_seed: u64,
    field: MagneticField,
    output: ChainOutput,
}

pub fn cmd_sample(config_path: &Path, grid: bool) -> i32 {
    let cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if !grid && (cfg.sampler.step_size.is_list() || cfg.sampler.num_steps.is_list()) {
        eprintln!("config error: step_size/num_steps lists require --grid");
        return EXIT_CONFIG;
    }
    let config_dir = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let kind = cfg.sampler_kind().expect("validated");
    let target = match cfg.build_target(&config_dir) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(q0) = &cfg.sampler.initial_point {
        if q0.len() != target.dim() {
            eprintln!(
                "config error: initial_point has {} coordinates, target needs {}",
                q0.len(),
                target.dim()
            );
            return EXIT_CONFIG;
        }
    }
    let out_root = cfg.output_dir();

    let eps_values = cfg.sampler.step_size.values();
    let steps_values = cfg.sampler.num_steps.values();
    let expanded = eps_values.len() * steps_values.len() > 1;
    for &eps in &eps_values {
        for &steps in &steps_values {
            let dir = if expanded {
                out_root.join(format!("eps{eps}_n{steps}"))
            } else {
                out_root.clone()
            };
            if let Err(e) = run_experiment(&cfg, target.clone(), kind, eps, steps, &dir) {
                eprintln!("runtime error: {e}");
                return EXIT_RUNTIME;
            }
        }
    }
    EXIT_OK
}

fn run_experiment(
    cfg: &ExperimentConfig,
    target: std::sync::Arc<dyn Target>,
    kind: SamplerKind,
    step_size: f64,
    num_steps: usize,
    out_dir: &Path,
) -> Result<(), String> {
    let m = target.dim();
    let master = cfg.sampler.seed;
    let chains = if kind == SamplerKind::MagneticHmc {
        cfg.sampler.num_fields.unwrap_or(5)
    } else {
        1
    };
    let field_seeds = catalog::field_seeds(master, chains);
    let jobs: Vec<ChainJob> = (0..chains)
        .map(|i| ChainJob {
            index: i,
            field_seed: (kind == SamplerKind::MagneticHmc).then(|| field_seeds[i]),
            chain_seed: catalog::derive_seed(master, 1000 + i as u64),
        })
        .collect();

    let results: Mutex<Vec<ChainResult>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let next = AtomicUsize::new(0);
    let workers = worker_cap(jobs.len());
    let failure: Mutex<Option<String>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let job = &jobs[i];
                let field = match job.field_seed {
                    Some(fs) => {
                        let mut rng = ChaCha8Rng::seed_from_u64(fs);
                        match MagneticField::new(SkewMatrix::from_gaussian(m, &mut rng)) {
                            Ok(f) => f,
                            Err(e) => {
                                *failure.lock().unwrap() = Some(format!("field build: {e}"));
                                break;
                            }
                        }
                    }
                    None => MagneticField::zero(m),
                };
                let mut chain_cfg = ChainConfig::new(
                    target.clone(),
                    field.clone(),
                    kind,
                    step_size,
                    num_steps,
                    cfg.sampler.num_samples,
                    job.chain_seed,
                );
                if let Some(burn) = cfg.sampler.burn_in {
                    chain_cfg.burn_in = burn;
                }
                if let Some(v) = cfg.sampler.interleave_canonical {
                    chain_cfg.interleave_canonical = v;
                }
                if let Some(v) = cfg.sampler.strict_reversibility {
                    chain_cfg.strict_reversibility = v;
                }
                if let Some(v) = cfg.sampler.newton_tol {
                    chain_cfg.newton_tol = v;
                }
                if let Some(v) = cfg.sampler.newton_max_iter {
                    chain_cfg.newton_max_iter = v;
                }
                if let Some(q0) = &cfg.sampler.initial_point {
                    chain_cfg.initial_point = Some(Vector::from_vec(q0.clone()));
                }
                let started = Instant::now();
                match run_chain(&chain_cfg) {
                    Ok(mut output) => {
                        output.wall_time_seconds = if deterministic_timing() {
                            0.0
                        } else {
                            started.elapsed().as_secs_f64()
                        };
                        results.lock().unwrap().push(ChainResult {
                            index: job.index,
                            field_seed: job.field_seed,
                            chain_seed: job.chain_seed,
                            field,
                            output,
                        });
                    }
                    Err(e) => {
                        *failure.lock().unwrap() = Some(format!("chain {}: {e}", job.index));
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|r| r.index);

    // all writes happen post-join from this single thread
    let ceiling = cfg.output.ess_ceiling.unwrap_or(10_000.0);
    for r in &results {
        let chain_dir = out_dir.join(format!("chain_{:02}", r.index));
        std::fs::create_dir_all(&chain_dir)
            .map_err(|e| format!("create {}: {e}", chain_dir.display()))?;
        io::write_samples_csv(&chain_dir.join("samples.csv"), &r.output)?;
        let wall = (!deterministic_timing() && r.output.wall_time_seconds > 0.0)
            .then_some(r.output.wall_time_seconds);
        let report = ess_report(&r.output.samples, ceiling, wall)
            .map_err(|e| format!("ess: {e}"))?;
        let stats = io::ChainStats {
            schema: crate::config::SCHEMA_VERSION,
            sampler: cfg.sampler.kind.clone(),
            step_size,
            num_steps,
            num_samples: cfg.sampler.num_samples,
            burn_in: cfg
                .sampler
                .burn_in
                .unwrap_or(cfg.sampler.num_samples / 10),
            master_seed: master,
            chain_seed: r.chain_seed,
            field_seed: r.field_seed,
            acceptance_rate: r.output.acceptance_rate(),
            newton_failure_count: r.output.newton_failure_count,
            wall_time_seconds: r.output.wall_time_seconds,
            ess: io::EssStats::from(&report),
            field_l: io::matrix_rows(r.field.skew().matrix()),
        };
        io::write_stats_json(&chain_dir.join("stats.json"), &stats)?;
    }
    Ok(())
}

pub struct GeodesicArgs {
    pub manifold: String,
    pub seed: u64,
    pub eps: f64,
    pub steps: usize,
    pub out: PathBuf,
    pub field_mode: String,
}

pub fn cmd_geodesic(args: &GeodesicArgs) -> i32 {
    let (target, with_action): (Box<dyn Target>, bool) = match args.manifold.as_str() {
        "euclidean3" => (
            Box::new(FreeMotion::new(Euclidean::new(3), Vector::zeros(3))),
            false,
        ),
        "sphere2" => (
            Box::new(FreeMotion::new(
                Sphere::new(3),
                Vector::from_vec(vec![0.0, 0.0, 1.0]),
            )),
            false,
        ),
        "so3" => (
            Box::new(FreeMotion::new(
                SpecialOrthogonal::new(3),
                Vector::from_column_slice(Matrix::identity(3, 3).as_slice()),
            )),
            true,
        ),
        other => {
            eprintln!("unknown geodesic manifold '{other}' (euclidean3|sphere2|so3)");
            return EXIT_CONFIG;
        }
    };
    let m = target.dim();
    let field = match args.field_mode.as_str() {
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            match MagneticField::new(SkewMatrix::from_gaussian(m, &mut rng)) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("field build failed: {e}");
                    return EXIT_RUNTIME;
                }
            }
        }
        "zero" => MagneticField::zero(m),
        other => {
            eprintln!("unknown --field mode '{other}' (random|zero)");
            return EXIT_CONFIG;
        }
    };

    let q0 = target.initial_point();
    let mut rng = ChaCha8Rng::seed_from_u64(catalog::derive_seed(args.seed, 1));
    let p0 = sample_momentum(target.manifold(), &q0, &mut rng);
    let state = PhaseState::new(q0, p0);
    let params = IntegratorParams::new(args.eps, args.steps);

    let forward = match integrate(&state, target.as_ref(), field.factorization(), &params, true) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("forward integration failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    let backward = match integrate(
        &forward.state,
        target.as_ref(),
        field.factorization(),
        &params.reversed(),
        true,
    ) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("backward integration failed: {e}");
            return EXIT_RUNTIME;
        }
    };

    let fwd: Vec<Vector> = forward
        .trajectory
        .unwrap()
        .iter()
        .map(|s| s.position.clone())
        .collect();
    let bwd: Vec<Vector> = backward
        .trajectory
        .unwrap()
        .iter()
        .map(|s| s.position.clone())
        .collect();
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if let Err(e) = std::fs::create_dir_all(parent) {
            eprintln!("cannot create output directory: {e}");
            return EXIT_RUNTIME;
        }
    }
    match io::write_geodesic_csv(&args.out, &fwd, &bwd, with_action) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("write failed: {e}");
            EXIT_RUNTIME
        }
    }
}

pub fn cmd_check(suite: &str, seed: u64, out: Option<&Path>) -> i32 {
    let suite = match suite {
        "core" => CheckSuite::Core,
        "constrained" => CheckSuite::Constrained,
        "all" => CheckSuite::All,
        other => {
            eprintln!("unknown suite '{other}' (core|constrained|all)");
            return EXIT_CONFIG;
        }
    };
    let mut reports = standard_battery(suite, seed);

    // internal self-test hook: deliberately damage the step map to prove the
    // battery and exit-code plumbing can fail
    if let Ok(mode) = std::env::var("MAGMCMC_MUTATION") {
        if mode == "skip_second_kick" {
            let params = CheckParams::new(seed);
            reports.push(check_map_reversibility(
                "selftest_broken_skip_second_kick",
                &params,
                1e-10,
                |state, weights, fact, eps| {
                    let w = weights.clone();
                    let kicked =
                        flow_potential(state, move |q: &Vector| q.component_mul(&w), eps)?;
                    Ok(flow_kinetic(&kicked, fact, eps))
                },
            ));
        } else {
            eprintln!("unknown MAGMCMC_MUTATION mode '{mode}'");
            return EXIT_CONFIG;
        }
    }

    let mut lines = String::new();
    for r in &reports {
        let line = r.to_line();
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    }
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, &lines) {
            eprintln!("cannot write report file: {e}");
            return EXIT_RUNTIME;
        }
    }
    if reports.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

pub fn cmd_ess(csv: &Path, ceiling: f64) -> i32 {
    let positions = match io::read_samples_csv(csv) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot read samples: {e}");
            return EXIT_CONFIG;
        }
    };
    if positions.nrows() < 10 {
        eprintln!("series too short: need at least 10 rows");
        return EXIT_CONFIG;
    }
    let report = match ess_report(&positions, ceiling, None) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("ess failed: {e}");
            return EXIT_CONFIG;
        }
    };
    let stats = io::EssStats::from(&report);
    println!(
        "{}",
        serde_json::to_string_pretty(&stats).expect("ESS stats serialize")
    );
    EXIT_OK
}
