//! Subcommand implementations. Every command writes a run manifest next to
//! its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use hlctdp::analysis::{self, run_csv_row, validate_with, RUN_CSV_HEADER};
use hlctdp::formulations::{self, BuildOptions, Formulation};
use hlctdp::generator::{self, DeltaTable, GenError, GenParams, SweepCell};
use hlctdp::milp::export_mps;
use hlctdp::oracle::{brute_force_with, OracleError, OracleLimits};
use hlctdp::solver::{solve_exact_logged, solve_via_export, ExportSolveError, SolveLog};
use hlctdp::{preprocess, FixMask, FixReport, Instance, Solution, SolverConfig};
use log::info;

use crate::manifest::RunManifest;
use crate::{BuildArgs, GenerateArgs, ModelFlags, OnOff, OracleArgs, ReportArgs, SolveArgs, ValidateArgs};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_TOO_LARGE: u8 = 3;
pub const EXIT_INPUT: u8 = 4;

/// An error together with the process exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_OTHER,
            error,
        }
    }
}

type Outcome = Result<(), Failure>;

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

fn bad_input(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: e.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(fail(EXIT_INPUT))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    Instance::from_json(&read(path)?)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(fail(EXIT_INPUT))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into())
}

fn build_options(inst: &Instance, flags: &ModelFlags, preprocess_mask: bool) -> BuildOptions {
    BuildOptions {
        include_consistency: !flags.no_consistency,
        include_valid_inequality: flags.valid_ineq,
        fix_mask: preprocess_mask.then(|| preprocess::preprocess(inst).0),
    }
}

fn formulation_tag(which: Formulation) -> &'static str {
    match which {
        Formulation::F1 => "f1",
        Formulation::F2 => "f2",
    }
}

pub fn generate(args: &GenerateArgs) -> Outcome {
    let start = Instant::now();
    let mut manifest = RunManifest::new("generate", args, args.seed);
    let (raw, costs) = match args.synthetic {
        Some(cities) => generator::synthetic_cab(cities, args.seed),
        None => {
            let cab = args.cab.as_deref().expect("clap requires --cab");
            let costs = args.costs.as_deref().expect("clap requires --costs");
            let raw = generator::load_cab(&read(cab)?).map_err(bad_input)?;
            let values = generator::load_values(&read(costs)?).map_err(bad_input)?;
            manifest.input(cab)?;
            manifest.input(costs)?;
            (raw, values)
        }
    };
    let mut params: GenParams = match &args.params {
        Some(p) => {
            manifest.input(p)?;
            serde_json::from_str(&read(p)?)
                .with_context(|| format!("parsing {}", p.display()))
                .map_err(fail(EXIT_INPUT))?
        }
        None => GenParams::default(),
    };
    params.seed = args.seed;
    if params.hub_cost_base.is_empty() {
        params.hub_cost_base = costs;
    }
    let deltas: DeltaTable = match &args.deltas {
        Some(p) => {
            manifest.input(p)?;
            serde_json::from_str(&read(p)?)
                .with_context(|| format!("parsing {}", p.display()))
                .map_err(fail(EXIT_INPUT))?
        }
        None => DeltaTable::default(),
    };

    let gen_err = |e: GenError| bad_input(e);
    let instances = if args.sweep {
        generator::sweep(&raw, &params, &deltas, &args.alphas, &args.sizes).map_err(gen_err)?
    } else {
        let n = args.n.expect("clap requires --n");
        let alpha = args.alpha.expect("clap requires --alpha");
        let base = generator::make_base(&raw, n, alpha, &params).map_err(gen_err)?;
        let inst = generator::expand(&base, args.levels, args.demand_levels, &deltas).map_err(gen_err)?;
        let cell = SweepCell {
            alpha,
            n,
            l: args.levels,
            r: args.demand_levels,
        };
        vec![(cell, inst)]
    };

    create_dir(&args.out)?;
    for (cell, inst) in &instances {
        let path = args.out.join(cell.file_name());
        write(&path, &inst.to_json())?;
        manifest.output(&path)?;
    }
    info!("wrote {} instances to {}", instances.len(), args.out.display());
    println!("generated {} instance(s) in {}", instances.len(), args.out.display());
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out.join("generate.manifest.json"))?;
    Ok(())
}

pub fn build(args: &BuildArgs) -> Outcome {
    let start = Instant::now();
    let mut manifest = RunManifest::new("build", args, 0);
    let inst = load_instance(&args.instance)?;
    manifest.input(&args.instance)?;
    let which: Formulation = args.model.formulation.into();
    let opts = build_options(&inst, &args.model, args.preprocess);
    let (model, _) = formulations::build(&inst, which, &opts).map_err(bad_input)?;
    let export = export_mps(&model);

    create_dir(&args.out)?;
    let prefix = format!("{}.{}", stem(&args.instance), formulation_tag(which));
    let mps = args.out.join(format!("{prefix}.mps"));
    let names = args.out.join(format!("{prefix}.names.json"));
    let size = args.out.join(format!("{prefix}.size.json"));
    write(&mps, &export.text)?;
    write(
        &names,
        &serde_json::to_string_pretty(&export.names).expect("name maps serialise"),
    )?;
    let report = serde_json::json!({
        "formulation": formulation_tag(which),
        "binaries": model.binary_count(),
        "continuous": model.continuous_count(),
        "constraints": model.logical_constraint_count(),
        "closed_form": formulations::model_size(&inst, which),
    });
    write(
        &size,
        &serde_json::to_string_pretty(&report).expect("JSON values serialise"),
    )?;
    for p in [&mps, &names, &size] {
        manifest.output(p)?;
    }
    println!(
        "{}: {} binaries, {} continuous, {} constraints",
        mps.display(),
        model.binary_count(),
        model.continuous_count(),
        model.logical_constraint_count()
    );
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out.join(format!("{prefix}.build.manifest.json")))?;
    Ok(())
}

pub fn solve(args: &SolveArgs) -> Outcome {
    let start = Instant::now();
    let mut manifest = RunManifest::new("solve", args, args.seed);
    if args.import.is_none() && args.model.no_consistency {
        return Err(bad_input(anyhow!(
            "the exact solver always enforces consistency; --no-consistency needs --import"
        )));
    }
    let inst = load_instance(&args.instance)?;
    manifest.input(&args.instance)?;

    let mut consistency = true;
    let mut fix_report: Option<FixReport> = None;
    let (sol, log) = match &args.import {
        Some(path) => {
            manifest.input(path)?;
            let text = read(path)?;
            let which: Formulation = args.model.formulation.into();
            let opts = build_options(&inst, &args.model, args.preprocess == OnOff::On);
            consistency = opts.include_consistency;
            let sol = solve_via_export(&inst, which, &opts, &text).map_err(|e| {
                let code = match e {
                    ExportSolveError::Infeasible(_) | ExportSolveError::ObjectiveMismatch { .. } => EXIT_INVALID,
                    _ => EXIT_INPUT,
                };
                Failure {
                    code,
                    error: anyhow!(e),
                }
            })?;
            (sol, SolveLog::default())
        }
        None => {
            let mask = if args.preprocess == OnOff::On {
                let (mask, report) = preprocess::preprocess(&inst);
                fix_report = Some(report);
                mask
            } else {
                FixMask::empty(&inst)
            };
            let cfg = SolverConfig {
                time_limit: args.time_limit,
                gap_tol: args.gap,
                seed: args.seed,
                max_hubs: args.max_hubs,
            };
            solve_exact_logged(&inst, &mask, &cfg).map_err(bad_input)?
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    create_dir(&args.out)?;
    let prefix = stem(&args.instance);
    let mut outputs = Vec::new();
    let sol_path = args.out.join(format!("{prefix}.solution.json"));
    write(&sol_path, &sol.to_json(&inst))?;
    outputs.push(sol_path);

    let report = validate_with(&inst, &sol, consistency);
    let val_path = args.out.join(format!("{prefix}.validation.json"));
    write(
        &val_path,
        &serde_json::to_string_pretty(&report).expect("reports serialise"),
    )?;
    outputs.push(val_path);

    if report.ok {
        let stats = analysis::stats(&inst, &sol).map_err(anyhow::Error::from)?;
        let run_path = args.out.join(format!("{prefix}.run.csv"));
        write(
            &run_path,
            &format!("{RUN_CSV_HEADER}\n{}\n", run_csv_row(&inst, &sol, &stats, elapsed)),
        )?;
        outputs.push(run_path);
    }
    if args.import.is_none() {
        let log_path = args.out.join(format!("{prefix}.log.csv"));
        write(&log_path, &log.to_csv())?;
        outputs.push(log_path);
    }
    if let Some(fr) = &fix_report {
        let pre_path = args.out.join(format!("{prefix}.preprocess.csv"));
        write(&pre_path, &format!("{}\n{}\n", FixReport::CSV_HEADER, fr.csv_row()))?;
        outputs.push(pre_path);
    }
    for p in &outputs {
        manifest.output(p)?;
    }
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out.join(format!("{prefix}.solve.manifest.json")))?;

    println!("status {} objective {} time {:.3}s", sol.status, sol.objective, elapsed);
    if !report.ok {
        return Err(Failure {
            code: EXIT_INVALID,
            error: anyhow!("solution failed validation:\n{report}"),
        });
    }
    Ok(())
}

pub fn oracle(args: &OracleArgs) -> Outcome {
    let start = Instant::now();
    let mut manifest = RunManifest::new("oracle", args, 0);
    let inst = load_instance(&args.instance)?;
    manifest.input(&args.instance)?;
    let limits = OracleLimits {
        max_configs: args.max_configs,
        max_assignments: args.max_assignments,
    };
    let sol = brute_force_with(&inst, &limits, !args.no_consistency).map_err(|e| {
        let code = match e {
            OracleError::TooManyConfigs { .. } | OracleError::TooManyAssignments { .. } => EXIT_TOO_LARGE,
            OracleError::InvalidInstance(_) => EXIT_INPUT,
            OracleError::BadConfig(_) => EXIT_OTHER,
        };
        Failure {
            code,
            error: anyhow!(e),
        }
    })?;
    create_dir(&args.out)?;
    let prefix = stem(&args.instance);
    let path = args.out.join(format!("{prefix}.oracle.json"));
    write(&path, &sol.to_json(&inst))?;
    manifest.output(&path)?;
    println!("status {} objective {}", sol.status, sol.objective);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out.join(format!("{prefix}.oracle.manifest.json")))?;
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> Outcome {
    let start = Instant::now();
    let mut manifest = RunManifest::new("validate", args, 0);
    let inst = load_instance(&args.instance)?;
    let sol = Solution::from_json(&read(&args.solution)?, &inst)
        .with_context(|| format!("loading {}", args.solution.display()))
        .map_err(fail(EXIT_INPUT))?;
    manifest.input(&args.instance)?;
    manifest.input(&args.solution)?;
    let report = validate_with(&inst, &sol, !args.no_consistency);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let dir = args.solution.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.write(&dir.join(format!("{}.validate.manifest.json", stem(&args.solution))))?;
    if !report.ok {
        return Err(Failure {
            code: EXIT_INVALID,
            error: anyhow!("solution is infeasible:\n{report}"),
        });
    }
    println!("ok: objective {}", sol.objective);
    Ok(())
}

/// Instance files of a directory whose names identify a sweep cell, in
/// alpha, n, L, R order.
fn sweep_files(dir: &Path) -> Result<Vec<(SweepCell, PathBuf)>, Failure> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))
        .map_err(fail(EXIT_INPUT))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.context("listing directory").map_err(fail(EXIT_INPUT))?.path();
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some(cell) = SweepCell::parse_file_name(&name) {
            files.push((cell, path));
        }
    }
    files.sort_by(|(a, _), (b, _)| {
        a.alpha
            .total_cmp(&b.alpha)
            .then(a.n.cmp(&b.n))
            .then(a.l.cmp(&b.l))
            .then(a.r.cmp(&b.r))
    });
    Ok(files)
}

pub fn report(args: &ReportArgs) -> Outcome {
    let start = Instant::now();
    let mut manifest = RunManifest::new("report", args, 0);
    let results_dir = args.results.as_deref().unwrap_or(&args.dir);
    let files = sweep_files(&args.dir)?;
    if files.is_empty() {
        return Err(bad_input(anyhow!("no sweep instance files in {}", args.dir.display())));
    }
    let mut pre = format!("{}\n", FixReport::CSV_HEADER);
    let mut results = format!("{RUN_CSV_HEADER}\n");
    let mut solved = 0;
    for (_, path) in &files {
        let inst = load_instance(path)?;
        manifest.input(path)?;
        pre.push_str(&preprocess::preprocess(&inst).1.csv_row());
        pre.push('\n');
        let run = results_dir.join(format!("{}.run.csv", stem(path)));
        if run.exists() {
            let text = read(&run)?;
            let row = text
                .lines()
                .nth(1)
                .ok_or_else(|| bad_input(anyhow!("{} has no data row", run.display())))?;
            results.push_str(row);
            results.push('\n');
            manifest.input(&run)?;
            solved += 1;
        }
    }
    create_dir(&args.out)?;
    let pre_path = args.out.join("preprocessing.csv");
    let res_path = args.out.join("results.csv");
    write(&pre_path, &pre)?;
    write(&res_path, &results)?;
    manifest.output(&pre_path)?;
    manifest.output(&res_path)?;
    println!("{} instances, {} with results", files.len(), solved);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out.join("report.manifest.json"))?;
    Ok(())
}
