use std::path::Path;

use bmapinf::ctmc::{self, NecessityReport, PgfSample};
use bmapinf::lyapunov::{self, CertificateOptions, DriftCertificate, Violation};
use bmapinf::sim::{self, CoupleOptions, SimOptions, StabilityDiagnostics};
use bmapinf::{Execution, ModelFile, QueueSelector, StabilityVerdict, ValidatedModel};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{io_error, write_csv, write_json};
use crate::{Cli, CliResult, Command, RunArgs};

pub fn run(cli: &Cli) -> CliResult<u8> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Validate { model, echo } => {
            let m = load(&model.path, cli.generator_tol)?;
            if *echo {
                write_json(&ModelFile::from_model(m.model()), out)?;
            } else {
                write_json(&validate_report(&m)?, out)?;
            }
            Ok(0)
        }
        Command::Stability { model, strict } => {
            let m = load(&model.path, cli.generator_tol)?;
            let report = stability_report(&m);
            write_json(&report, out)?;
            Ok(if *strict && !report.verdict.stable { 1 } else { 0 })
        }
        Command::Drift {
            model,
            queue,
            range,
            verified_range,
            csv,
        } => {
            let m = load(&model.path, cli.generator_tol)?;
            let opts = CertificateOptions {
                verified_range: *verified_range,
                report_levels: range + 1,
                exec: cli.exec(),
                ..CertificateOptions::default()
            };
            let cert = lyapunov::foster_certificate_with(&m.view(*queue), opts)?;
            let report = DriftReport::new(*queue, &cert);
            if let Some(path) = csv {
                write_csv(
                    path,
                    "k,min_component",
                    report.drift_table.iter().map(|r| format!("{},{:e}", r.k, r.min)),
                )?;
            }
            write_json(&report, out)?;
            Ok(0)
        }
        Command::Solve {
            model,
            cap,
            queue,
            z,
            csv,
        } => {
            let m = load(&model.path, cli.generator_tol)?;
            let report = solve_report(&m, *queue, *cap, z, cli.pgf_tol)?;
            if let Some(path) = csv {
                write_csv(
                    path,
                    "level,probability",
                    report
                        .level_marginals
                        .iter()
                        .enumerate()
                        .map(|(k, p)| format!("{k},{p:e}")),
                )?;
            }
            write_json(&report, out)?;
            report.check()?;
            Ok(0)
        }
        Command::Simulate { model, run } => {
            let m = load(&model.path, cli.generator_tol)?;
            let report = simulate_report(&m, run, cli.exec())?;
            write_json(&report, out)?;
            Ok(0)
        }
        Command::Couple { model, run } => {
            let m = load(&model.path, cli.generator_tol)?;
            let report = couple_report(&m, run, cli.exec())?;
            write_json(&report, out)?;
            Ok(0)
        }
        Command::Report {
            model,
            cap,
            queue,
            horizon,
            seed,
            burn_in,
        } => {
            let m = load(&model.path, cli.generator_tol)?;
            let report = full_report(&m, *queue, *cap, *horizon, *seed, *burn_in, cli)?;
            write_json(&report, out)?;
            report.solve.check()?;
            Ok(0)
        }
    }
}

fn load(path: &Path, tol: f64) -> CliResult<ValidatedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let file = ModelFile::from_json(&text)?;
    Ok(file.to_model()?.validate_with(tol)?)
}

#[derive(Serialize)]
struct StreamSummary {
    label: String,
    family: &'static str,
    service_rate: f64,
    /// Long-run batch arrival rate `theta A_v e`.
    batch_rate: f64,
}

#[derive(Serialize)]
struct ValidateReport {
    valid: bool,
    phases: usize,
    streams: Vec<StreamSummary>,
    background_stationary: Vec<f64>,
    generator_residual: f64,
}

fn validate_report(m: &ValidatedModel) -> CliResult<ValidateReport> {
    let theta = m.background_stationary()?;
    let rates = m.batch_rates()?;
    Ok(ValidateReport {
        valid: true,
        phases: m.phases(),
        streams: m
            .streams()
            .iter()
            .zip(rates)
            .map(|(s, r)| StreamSummary {
                label: s.label.clone(),
                family: s.batch.family(),
                service_rate: s.service_rate,
                batch_rate: r,
            })
            .collect(),
        background_stationary: theta,
        generator_residual: m
            .generator()
            .row_sums()
            .into_iter()
            .fold(0.0, |a: f64, x| a.max(x.abs())),
    })
}

#[derive(Serialize)]
struct StreamMoment {
    label: String,
    family: &'static str,
    #[serde(serialize_with = "bmapinf::ext_real::serialize")]
    log_moment: f64,
}

#[derive(Serialize)]
struct StabilityReport {
    #[serde(flatten)]
    verdict: StabilityVerdict,
    streams: Vec<StreamMoment>,
}

fn stability_report(m: &ValidatedModel) -> StabilityReport {
    StabilityReport {
        verdict: m.stability_verdict(),
        streams: m
            .streams()
            .iter()
            .map(|s| StreamMoment {
                label: s.label.clone(),
                family: s.batch.family(),
                log_moment: s.batch.log_moment(),
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct DriftRow {
    k: u64,
    y: Vec<f64>,
    min: f64,
}

#[derive(Serialize)]
struct DriftReport {
    queue: QueueSelector,
    mu: f64,
    delta: f64,
    #[serde(rename = "K")]
    k: u64,
    #[serde(rename = "C")]
    c: f64,
    verified_range: u64,
    violations: Vec<Violation>,
    drift_table: Vec<DriftRow>,
}

impl DriftReport {
    fn new(queue: QueueSelector, cert: &DriftCertificate) -> Self {
        Self {
            queue,
            mu: cert.mu,
            delta: cert.delta,
            k: cert.k,
            c: cert.c,
            verified_range: cert.verified_range,
            violations: cert.violations.clone(),
            drift_table: cert
                .drift_vectors
                .iter()
                .enumerate()
                .map(|(k, y)| DriftRow {
                    k: k as u64,
                    min: y.iter().copied().fold(f64::INFINITY, f64::min),
                    y: y.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct SolveReport {
    queue: QueueSelector,
    cap: usize,
    mu: f64,
    pi: Vec<Vec<f64>>,
    level_marginals: Vec<f64>,
    residual: f64,
    tail_mass: f64,
    min_entry: f64,
    /// `null` for unstable models.
    necessity: Option<NecessityReport>,
    pgf: Vec<PgfSample>,
    pgf_tolerance: f64,
    pgf_ok: bool,
}

impl SolveReport {
    /// Exit-3 conditions: checks that hold by theorem failed numerically.
    fn check(&self) -> CliResult<()> {
        if !self.pgf_ok {
            return Err(CliError::internal(
                "PgfMismatch",
                "PGF identity residual exceeds its tolerance",
            ));
        }
        if let Some(n) = &self.necessity {
            if !n.holds {
                return Err(CliError::internal(
                    "NecessityViolated",
                    format!("necessity inequality failed: lhs {} > rhs {}", n.lhs, n.rhs),
                ));
            }
        }
        Ok(())
    }
}

fn solve_report(
    m: &ValidatedModel,
    queue: QueueSelector,
    cap: usize,
    z: &[f64],
    pgf_tol: f64,
) -> CliResult<SolveReport> {
    if let Some(bad) = z.iter().find(|z| !(0.0..=1.0).contains(*z)) {
        return Err(CliError::input(
            "BadArgument",
            format!("z samples must lie in [0, 1], got {bad}"),
        ));
    }
    let view = m.view(queue);
    let (generator, sol) = ctmc::solve_view(&view, cap)?;
    let verdict = view.stability_verdict();
    let necessity = verdict
        .stable
        .then(|| ctmc::necessity_check(&sol, &verdict, generator.service_rate()))
        .transpose()?;
    let pgf = ctmc::pgf_check(&sol, &generator, z);
    Ok(SolveReport {
        queue,
        cap,
        mu: generator.service_rate(),
        level_marginals: sol.level_marginals(),
        pgf_ok: pgf.iter().all(|s| s.within(pgf_tol)),
        pgf_tolerance: pgf_tol,
        pi: sol.pi,
        residual: sol.residual,
        tail_mass: sol.tail_mass,
        min_entry: sol.min_entry,
        necessity,
        pgf,
    })
}

fn check_run(run: &RunArgs) -> CliResult<()> {
    if run.replications == 0 {
        return Err(CliError::input("BadArgument", "replications must be at least 1"));
    }
    if !(run.horizon > 0.0 && run.horizon.is_finite()) {
        return Err(CliError::input(
            "HorizonNonpositive",
            format!("horizon must be positive and finite, got {}", run.horizon),
        ));
    }
    if !(run.burn_in >= 0.0 && run.burn_in < run.horizon) {
        return Err(CliError::input(
            "BadBurnIn",
            format!("burn-in {} must lie in [0, horizon)", run.burn_in),
        ));
    }
    Ok(())
}

fn seeds(run: &RunArgs) -> Vec<u64> {
    (0..run.replications).map(|r| run.seed.wrapping_add(r)).collect()
}

#[derive(Serialize)]
struct ReplicationSummary {
    seed: u64,
    diagnostics: StabilityDiagnostics,
    events: u64,
    final_level: u64,
    mean_level: Option<f64>,
    unresolved_time: f64,
    overflow_time: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    horizon: f64,
    burn_in: f64,
    replications: Vec<ReplicationSummary>,
    /// Time-weighted level distribution pooled over replications.
    pooled_pmf: Vec<f64>,
}

fn simulate_report(m: &ValidatedModel, run: &RunArgs, exec: Execution) -> CliResult<SimulateReport> {
    check_run(run)?;
    let opts = SimOptions::new(run.horizon).burn_in(run.burn_in);
    let first = run.seed;
    let results = sim::replicate(&seeds(run), exec, |s| {
        let mut o = opts.clone();
        if s == first && run.trace.is_some() {
            o.trace_limit = run.trace_rows;
        }
        sim::simulate(m, &o, s)
    });
    let mut pooled = Vec::<f64>::new();
    let mut summaries = Vec::new();
    for (_, r) in results {
        let r = r?;
        if r.seed == first {
            if let Some(path) = &run.trace {
                write_csv(
                    path,
                    "time,level,phase",
                    r.trace.iter().map(|t| format!("{},{},{}", t.time, t.level, t.phase)),
                )?;
            }
        }
        if pooled.len() < r.occupancy.len() {
            pooled.resize(r.occupancy.len(), 0.0);
        }
        for (p, t) in pooled.iter_mut().zip(&r.occupancy) {
            *p += t;
        }
        let resolved: f64 = r.occupancy.iter().sum();
        let mean_level = (r.overflow_time == 0.0 && r.unresolved_time == 0.0 && resolved > 0.0)
            .then(|| r.occupancy.iter().enumerate().map(|(k, t)| k as f64 * t).sum::<f64>() / resolved);
        summaries.push(ReplicationSummary {
            seed: r.seed,
            diagnostics: r.diagnostics,
            events: r.events,
            final_level: r.final_level,
            mean_level,
            unresolved_time: r.unresolved_time,
            overflow_time: r.overflow_time,
        });
    }
    let total: f64 = pooled.iter().sum();
    while pooled.last() == Some(&0.0) {
        pooled.pop();
    }
    if total > 0.0 {
        pooled.iter_mut().for_each(|p| *p /= total);
    }
    Ok(SimulateReport {
        horizon: run.horizon,
        burn_in: run.burn_in,
        replications: summaries,
        pooled_pmf: pooled,
    })
}

#[derive(Serialize)]
struct CoupleSummary {
    seed: u64,
    customers: u64,
    epochs: usize,
    max_total: u64,
    max_queue1: u64,
    max_queue2: u64,
    diagnostics: StabilityDiagnostics,
}

#[derive(Serialize)]
struct CoupleReport {
    horizon: f64,
    burn_in: f64,
    replications: Vec<CoupleSummary>,
    ordering_violations: u64,
}

fn couple_report(m: &ValidatedModel, run: &RunArgs, exec: Execution) -> CliResult<CoupleReport> {
    check_run(run)?;
    let opts = CoupleOptions::new(run.horizon);
    let first = run.seed;
    let results = sim::replicate(&seeds(run), exec, |s| {
        sim::couple(m, &opts, s).map(|trace| {
            let summary = CoupleSummary {
                seed: s,
                customers: trace.customers,
                epochs: trace.len(),
                max_total: trace.epochs().map(|e| e.total).max().unwrap_or(0),
                max_queue1: trace.epochs().map(|e| e.queue1).max().unwrap_or(0),
                max_queue2: trace.epochs().map(|e| e.queue2).max().unwrap_or(0),
                diagnostics: sim::diagnostics(&trace.original_path(), run.horizon, run.burn_in),
            };
            let rows = (s == first && run.trace.is_some()).then(|| {
                trace
                    .epochs()
                    .take(run.trace_rows)
                    .map(|e| {
                        let classes: Vec<String> = e.per_class.iter().map(u64::to_string).collect();
                        format!(
                            "{},{},{},{},{},{}",
                            e.time,
                            e.total,
                            e.queue1,
                            e.queue2,
                            e.phase,
                            classes.join(",")
                        )
                    })
                    .collect::<Vec<_>>()
            });
            (summary, rows)
        })
    });
    let labels: Vec<String> = m.streams().iter().map(|s| format!("class_{}", s.label)).collect();
    let mut replications = Vec::new();
    for (_, r) in results {
        let (summary, rows) = r?;
        if let (Some(path), Some(rows)) = (&run.trace, rows) {
            write_csv(
                path,
                &format!("time,L,L1,L2,phase,{}", labels.join(",")),
                rows.into_iter(),
            )?;
        }
        replications.push(summary);
    }
    Ok(CoupleReport {
        horizon: run.horizon,
        burn_in: run.burn_in,
        replications,
        ordering_violations: 0,
    })
}

#[derive(Serialize)]
struct SolveSummary {
    queue: QueueSelector,
    cap: usize,
    residual: f64,
    tail_mass: f64,
    level_marginals: Vec<f64>,
    necessity: Option<NecessityReport>,
    pgf: Vec<PgfSample>,
    pgf_ok: bool,
}

impl SolveSummary {
    fn check(&self) -> CliResult<()> {
        if !self.pgf_ok {
            return Err(CliError::internal(
                "PgfMismatch",
                "PGF identity residual exceeds its tolerance",
            ));
        }
        if self.necessity.as_ref().is_some_and(|n| !n.holds) {
            return Err(CliError::internal("NecessityViolated", "necessity inequality failed"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct SimulationSummary {
    seed: u64,
    horizon: f64,
    burn_in: f64,
    diagnostics: StabilityDiagnostics,
    unresolved_time: f64,
    /// TV distance between the simulated level law and the solved one; only
    /// when the solved queue has the simulated dynamics.
    tv_distance: Option<f64>,
}

#[derive(Serialize)]
struct FullReport {
    verdict: StabilityReport,
    certificate: Option<DriftReport>,
    /// Error code when no certificate could be produced.
    certificate_error: Option<String>,
    solve: SolveSummary,
    simulation: SimulationSummary,
}

fn full_report(
    m: &ValidatedModel,
    queue: QueueSelector,
    cap: usize,
    horizon: f64,
    seed: u64,
    burn_in: f64,
    cli: &Cli,
) -> CliResult<FullReport> {
    let view = m.view(queue);
    let (certificate, certificate_error) = match lyapunov::foster_certificate_with(
        &view,
        CertificateOptions {
            exec: cli.exec(),
            ..CertificateOptions::default()
        },
    ) {
        Ok(cert) => (Some(DriftReport::new(queue, &cert)), None),
        Err(e @ lyapunov::LyapunovError::CertificateFailed { .. }) => return Err(e.into()),
        Err(e) => (None, Some(e.code().to_string())),
    };
    let solved = solve_report(m, queue, cap, &ctmc::DEFAULT_Z_SAMPLES, cli.pgf_tol)?;
    let sim = sim::simulate(m, &SimOptions::new(horizon).burn_in(burn_in), seed)?;
    let same_law = view.single_rate().is_some() && m.view(QueueSelector::Original).single_rate() == view.single_rate();
    let tv_distance = same_law.then(|| ctmc::total_variation(&sim.empirical_pmf(), &solved.level_marginals));
    Ok(FullReport {
        verdict: stability_report(m),
        certificate,
        certificate_error,
        solve: SolveSummary {
            queue,
            cap,
            residual: solved.residual,
            tail_mass: solved.tail_mass,
            level_marginals: solved.level_marginals,
            necessity: solved.necessity,
            pgf: solved.pgf,
            pgf_ok: solved.pgf_ok,
        },
        simulation: SimulationSummary {
            seed,
            horizon,
            burn_in,
            diagnostics: sim.diagnostics,
            unresolved_time: sim.unresolved_time,
            tv_distance,
        },
    })
}
