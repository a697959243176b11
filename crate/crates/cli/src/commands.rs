//! The four subcommand bodies.

use std::path::Path;

use lrtest_core::diagnostics::{summarize, DistributionSummary, Histogram};
use lrtest_core::logrank::{
    logrank_statistic, stratified_logrank, LogrankComponents, StratumContribution,
};
use lrtest_core::moments::{
    asymptotic_variance_approx, condition_report, exact_variance_l, stratified_condition_report,
    ConditionReport, MechanismSpec, StratifiedConditionReport,
};
use lrtest_core::oracle::{
    enumerate_with_cap, CheckReport, VarianceIdentityReport, DEFAULT_ENUMERATION_CAP,
    ORACLE_TOLERANCE,
};
use lrtest_core::simulation::{run_scenario, ConditioningMode, ReplicationOutput, ScenarioConfig};
use lrtest_core::{EmpiricalSurvival, EventGrid};
use serde::Serialize;

use crate::report::{input_echo, read_input, resolve_out, Envelope};
use crate::scenario::{self, ScenarioSource};
use crate::{
    dataset, popspec, ChecksArg, CliResult, Failure, ModeArg, MomentsArgs, OracleArgs,
    SimulateArgs, StatArg, TestArgs,
};

fn undefined_statistic() -> Failure {
    Failure::Undefined("statistic undefined: U = 0".into())
}

fn spec_text(bytes: &[u8], path: &Path) -> CliResult<String> {
    String::from_utf8(bytes.to_vec())
        .map_err(|_| Failure::Usage(format!("{}: file is not UTF-8", path.display())))
}

#[derive(Serialize)]
struct TestBody {
    rows: usize,
    stratified: bool,
    score: f64,
    variance: f64,
    statistic: f64,
    p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    components: Option<LogrankComponents>,
    #[serde(skip_serializing_if = "Option::is_none")]
    strata: Option<Vec<StratumContribution>>,
}

pub fn run_test(args: TestArgs) -> CliResult<()> {
    let bytes = read_input(&args.dataset)?;
    let data = dataset::parse_dataset(&bytes)?;
    let body = if args.stratified {
        if !data.has_stratum {
            eprintln!("note: dataset has no stratum column; every row is stratum 0");
        }
        let result = stratified_logrank(&data.records)?;
        let statistic = result.statistic.ok_or_else(undefined_statistic)?;
        let p_value = result.p_value.expect("defined whenever the statistic is");
        println!("SLR = {statistic}");
        println!("two-sided p = {p_value}");
        TestBody {
            rows: data.records.len(),
            stratified: true,
            score: result.score,
            variance: result.variance,
            statistic,
            p_value,
            components: None,
            strata: args.components.then_some(result.strata),
        }
    } else {
        let result = logrank_statistic(&data.records)?;
        let statistic = result.statistic.ok_or_else(undefined_statistic)?;
        let p_value = result.p_value.expect("defined whenever the statistic is");
        println!("LR = {statistic}");
        println!("two-sided p = {p_value}");
        TestBody {
            rows: data.records.len(),
            stratified: false,
            score: result.score,
            variance: result.variance,
            statistic,
            p_value,
            components: args.components.then_some(result.components),
            strata: None,
        }
    };
    let mut envelope = Envelope::new("test", &args.output, body);
    envelope.input = Some(input_echo(&args.dataset, &bytes));
    envelope.write(&args.output)
}

#[derive(Serialize)]
struct SimulateBody {
    scenario: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed_event_stream: Option<u64>,
    statistic: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<DistributionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slr: Option<DistributionSummary>,
}

fn mode_name(mode: ConditioningMode) -> &'static str {
    match mode {
        ConditioningMode::FixedEventTimes => "finite",
        ConditioningMode::FixedAssignment => "superpop",
        ConditioningMode::FullyRandom => "random",
    }
}

pub fn run_simulate(args: SimulateArgs) -> CliResult<()> {
    let loaded = scenario::load(&args.source)?;
    let mut config = loaded.config;
    let mut seed_provided = loaded.seed_provided;
    if let Some(mode) = args.mode {
        config.mode = match mode {
            ModeArg::Finite => ConditioningMode::FixedEventTimes,
            ModeArg::Superpop => ConditioningMode::FixedAssignment,
            ModeArg::Random => ConditioningMode::FullyRandom,
        };
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
        seed_provided = true;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    let stat = args.stat.unwrap_or(if config.stratified {
        StatArg::Both
    } else {
        StatArg::Lr
    });
    if stat != StatArg::Lr {
        config.stratified = true;
    }
    if !seed_provided {
        return Err(Failure::Usage(
            "simulate needs a seed: pass --seed or set seed = in the scenario file".into(),
        ));
    }

    let output = run_scenario(&config)?;
    let lr = if stat != StatArg::Slr {
        Some(summarize(&output.statistics()).map_err(|e| Failure::Undefined(e.to_string()))?)
    } else {
        None
    };
    let slr = if stat != StatArg::Lr {
        let samples = output
            .stratified_statistics()
            .expect("stratified computation was enabled");
        Some(summarize(&samples).map_err(|e| Failure::Undefined(e.to_string()))?)
    } else {
        None
    };

    println!(
        "scenario {}: n = {}, reps = {}, mode = {}, seed = {}",
        config.label,
        config.n,
        config.replications,
        mode_name(config.mode),
        config.seed
    );
    if let Some(summary) = &lr {
        print_summary("LR", summary);
    }
    if let Some(summary) = &slr {
        print_summary("SLR", summary);
    }

    if let Some(path) = &args.samples {
        write_samples(&resolve_out(path), &output)?;
    }
    if let Some(path) = &args.histogram {
        let histogram = match (&lr, &slr) {
            (Some(summary), _) => &summary.histogram,
            (None, Some(summary)) => &summary.histogram,
            (None, None) => unreachable!("at least one statistic is summarized"),
        };
        write_histogram(&resolve_out(path), histogram)?;
    }

    let statistic = match stat {
        StatArg::Lr => "lr",
        StatArg::Slr => "slr",
        StatArg::Both => "both",
    };
    let seed = config.seed;
    let body = SimulateBody {
        scenario: config,
        fixed_event_stream: output.fixed_event_stream,
        statistic,
        lr,
        slr,
    };
    let mut envelope = Envelope::new("simulate", &args.output, body);
    envelope.seed = Some(seed);
    envelope.generator = Some(output.generator);
    match &loaded.source {
        ScenarioSource::Preset(name) => envelope.preset = Some(name.clone()),
        ScenarioSource::File { path, bytes } => {
            envelope.input = Some(input_echo(Path::new(path), bytes));
        }
    }
    envelope.write(&args.output)
}

fn print_summary(name: &str, summary: &DistributionSummary) {
    println!(
        "{name}: mean = {:.6}, variance = {:.6}, KS vs N(0,1) = {:.6}, undefined = {}/{}",
        summary.mean,
        summary.variance,
        summary.ks_normal,
        summary.count - summary.defined_count,
        summary.count
    );
}

fn field(value: f64) -> String {
    format!("{value}")
}

fn optional_field(value: Option<f64>) -> String {
    value.map(field).unwrap_or_default()
}

fn write_samples(path: &Path, output: &ReplicationOutput) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Failure::Usage(format!("{}: {e}", path.display()));
    let stratified = output.config.stratified;
    let mut header = vec!["replication", "score", "variance", "statistic"];
    if stratified {
        header.extend(["slr_score", "slr_variance", "slr_statistic"]);
    }
    writer.write_record(&header).map_err(io_err)?;
    for (index, replicate) in output.replicates.iter().enumerate() {
        let mut row = vec![
            index.to_string(),
            field(replicate.score),
            field(replicate.variance),
            optional_field(replicate.statistic),
        ];
        if stratified {
            let values = replicate.stratified.expect("stratified was enabled");
            row.push(field(values.score));
            row.push(field(values.variance));
            row.push(optional_field(values.statistic));
        }
        writer.write_record(&row).map_err(io_err)?;
    }
    writer
        .flush()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_histogram(path: &Path, histogram: &Histogram) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Failure::Usage(format!("{}: {e}", path.display()));
    writer
        .write_record(["bin_left", "bin_right", "count"])
        .map_err(io_err)?;
    for (left, right, count) in histogram.rows() {
        writer
            .write_record([field(left), field(right), count.to_string()])
            .map_err(io_err)?;
    }
    writer
        .flush()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct OracleBody {
    population_units: usize,
    cap: usize,
    atoms: usize,
    total_probability: f64,
    tolerance: f64,
    checks: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_identity: Option<VarianceIdentityReport>,
    all_pass: bool,
}

fn pass_str(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn run_oracle(args: OracleArgs) -> CliResult<()> {
    let bytes = read_input(&args.population)?;
    let text = spec_text(&bytes, &args.population)?;
    let population = popspec::parse_population(&text)?;
    let first = population
        .mechanisms()
        .values()
        .next()
        .expect("populations are nonempty")
        .clone();
    if population.mechanisms().values().any(|m| *m != first) {
        return Err(Failure::Usage(
            "strata use different mechanisms; the oracle checks condition on one common \
             mechanism, so split the spec into one file per stratum"
                .into(),
        ));
    }
    let cap = args.cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let dist = enumerate_with_cap(&population, cap)?;
    let mech = MechanismSpec::from_mechanism(&first);

    let want = |check: ChecksArg| args.checks == ChecksArg::All || args.checks == check;
    let mut checks = Vec::new();
    if want(ChecksArg::Hypergeom) {
        checks.push(dist.check_conditional_hypergeometric());
    }
    if want(ChecksArg::Martingale) {
        checks.push(dist.check_martingale());
    }
    if want(ChecksArg::Marginals) {
        checks.push(dist.check_marginal_laws(&mech));
    }
    let variance_identity = want(ChecksArg::Variance).then(|| dist.variance_identity(&mech));

    let total_probability = dist.total_probability();
    let total_ok = (total_probability - 1.0).abs() <= ORACLE_TOLERANCE;
    println!(
        "{} atoms enumerated, probability total = {} ({})",
        dist.atoms().len(),
        total_probability,
        pass_str(total_ok)
    );
    for check in &checks {
        println!(
            "{}: max |deviation| = {:e} over {} comparisons in {} contexts ({})",
            check.check,
            check.max_abs_deviation,
            check.comparisons,
            check.contexts,
            pass_str(check.pass)
        );
    }
    if let Some(identity) = &variance_identity {
        println!(
            "variance-identity: Var(L) = {}, E[U] = {}, closed form = {} \
             (max |deviation| = {:e}, {})",
            identity.score_variance,
            identity.mean_total_variance,
            identity.closed_form,
            identity.max_abs_deviation,
            pass_str(identity.pass)
        );
    }

    let all_pass = total_ok
        && checks.iter().all(|c| c.pass)
        && variance_identity.as_ref().map_or(true, |v| v.pass);
    let body = OracleBody {
        population_units: population.len(),
        cap,
        atoms: dist.atoms().len(),
        total_probability,
        tolerance: ORACLE_TOLERANCE,
        checks,
        variance_identity,
        all_pass,
    };
    let mut envelope = Envelope::new("oracle", &args.output, body);
    envelope.input = Some(input_echo(&args.population, &bytes));
    envelope.write(&args.output)?;
    if !all_pass {
        return Err(Failure::Verification(format!(
            "a check deviated beyond tolerance {ORACLE_TOLERANCE:e}"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct StratumMoments {
    stratum: u32,
    units: u32,
    exact_variance: f64,
    approximate_variance: f64,
}

#[derive(Serialize)]
struct MomentsBody {
    units: usize,
    /// Exact variance of the (stratified, when multi-stratum) score; equals
    /// the expected total variance term of the statistic's denominator.
    exact_variance: f64,
    approximate_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditions: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_stratum: Option<Vec<StratumMoments>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stratified_conditions: Option<StratifiedConditionReport>,
}

pub fn run_moments(args: MomentsArgs) -> CliResult<()> {
    let bytes = read_input(&args.population)?;
    let text = spec_text(&bytes, &args.population)?;
    let population = popspec::parse_population(&text)?;
    let labels = population.stratum_labels();

    let mut parts: Vec<(u32, EventGrid, MechanismSpec)> = Vec::with_capacity(labels.len());
    for &label in &labels {
        let times = population.times_in(label);
        let grid = EventGrid::from_times(&times)?;
        let spec =
            MechanismSpec::from_mechanism(population.mechanism(label).expect("label exists"));
        parts.push((label, grid, spec));
    }
    let per_stratum: Vec<StratumMoments> = parts
        .iter()
        .map(|(label, grid, spec)| StratumMoments {
            stratum: *label,
            units: grid.n_units(),
            exact_variance: exact_variance_l(grid, spec),
            approximate_variance: asymptotic_variance_approx(
                &EmpiricalSurvival::new(grid.clone()),
                spec,
            ),
        })
        .collect();
    let exact_variance: f64 = per_stratum.iter().map(|s| s.exact_variance).sum();
    let approximate_variance: f64 = per_stratum.iter().map(|s| s.approximate_variance).sum();

    let body = if labels.len() == 1 {
        let (_, grid, spec) = &parts[0];
        let conditions = condition_report(grid, spec);
        println!("exact Var(L) = E[U] = {exact_variance}");
        println!("asymptotic approximation = {approximate_variance}");
        println!("max tied events = {}", conditions.max_tied_events);
        println!("observable fraction = {}", conditions.observable_fraction);
        println!("clt criterion = {}", conditions.clt_criterion);
        println!(
            "assignment nondegenerate: {}",
            conditions.assignment_nondegenerate
        );
        println!("witness time exists: {}", conditions.witness_time_exists);
        MomentsBody {
            units: population.len(),
            exact_variance,
            approximate_variance,
            conditions: Some(conditions),
            per_stratum: None,
            stratified_conditions: None,
        }
    } else {
        let refs: Vec<(u32, &EventGrid, &MechanismSpec)> = parts
            .iter()
            .map(|(label, grid, spec)| (*label, grid, spec))
            .collect();
        let conditions = stratified_condition_report(&refs);
        for (moments, stratum) in per_stratum.iter().zip(&conditions.strata) {
            println!(
                "stratum {}: units = {}, exact Var = {}, approx = {}, clt criterion = {}, \
                 witness: {}",
                moments.stratum,
                moments.units,
                moments.exact_variance,
                moments.approximate_variance,
                stratum.report.clt_criterion,
                stratum.report.witness_time_exists
            );
        }
        println!("total: exact Var = {exact_variance}, approx = {approximate_variance}");
        println!("smallest stratum share = {}", conditions.smallest_share);
        println!(
            "all strata have a witness time: {}",
            conditions.all_strata_have_witness
        );
        MomentsBody {
            units: population.len(),
            exact_variance,
            approximate_variance,
            conditions: None,
            per_stratum: Some(per_stratum),
            stratified_conditions: Some(conditions),
        }
    };
    let mut envelope = Envelope::new("moments", &args.output, body);
    envelope.input = Some(input_echo(&args.population, &bytes));
    envelope.write(&args.output)
}
