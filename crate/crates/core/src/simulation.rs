//! Monte Carlo engine: correlated event-time generation through a Gaussian
//! copula, covariate-driven assignment and censoring mechanisms, and
//! replicated computation of the test statistics under different
//! conditioning modes.
//!
//! Reproducibility contract: all randomness comes from ChaCha8 seeded with
//! the scenario seed, using one counter stream per replication
//! (replication `r` reads stream `r + 1`; stream 0 is reserved for the
//! one-shot event-time draw in fixed-event-times mode). Streams make the
//! draws independent of scheduling, so results are byte-identical across
//! thread counts, and any single replication can be regenerated in
//! isolation. Within a replication the draw order is fixed: event times
//! (when random), then assignments (when random), then censoring values,
//! each as one pass over the units in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::normal_cdf;
use crate::error::{Error, Result};
use crate::logrank::{logrank_statistic, stratified_logrank};
use crate::moments::MechanismSpec;
use crate::survival::{CensoringDist, SurvivalRecord};

/// Name of the pseudo-random generator scheme, recorded in outputs.
pub const RNG_GENERATOR: &str = "chacha8";

/// Stream id of the one-shot event-time draw in fixed-event-times mode.
pub const FIXED_EVENT_STREAM: u64 = 0;

/// Stream id used by replication `r`.
pub fn replication_stream(r: usize) -> u64 {
    r as u64 + 1
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The fixed binary covariate pattern: zeros on the first 20% of units,
/// ones on the next 30%, zeros on the next 30%, ones on the last 20%.
/// Interleaving the blocks keeps the covariate from being confounded with
/// the autocorrelation order of the event times.
pub fn covariate_pattern(n: usize) -> Result<Vec<u8>> {
    if n == 0 || n % 10 != 0 {
        return Err(Error::InvalidConfig(format!(
            "population size {n} must be a positive multiple of 10 so the covariate blocks are exact"
        )));
    }
    let mut x = vec![0u8; n];
    x[n / 5..n / 2].fill(1);
    x[4 * n / 5..].fill(1);
    Ok(x)
}

/// The fixed allocation used in fixed-assignment mode: first half treated.
pub fn half_treated_assignment(n: usize) -> Vec<bool> {
    let mut z = vec![false; n];
    z[..n / 2].fill(true);
    z
}

/// Event-time generator: unit `i` gets `-ln(Phi(-e_i)) * (1 + theta * x_i)`
/// where `(e_i)` is a standard AR(1) Gaussian sequence with lag-one
/// correlation `rho`. Marginally each time is exponential with scale
/// `1 + theta * x_i`; `rho` induces dependence across units without
/// changing the marginals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CopulaEventModel {
    pub n: usize,
    pub rho: f64,
    pub theta: f64,
    covariates: Vec<u8>,
}

impl CopulaEventModel {
    pub fn new(n: usize, rho: f64, theta: f64) -> Result<Self> {
        if !rho.is_finite() || rho.abs() >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "autocorrelation {rho} must lie in (-1, 1)"
            )));
        }
        if !theta.is_finite() || theta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "covariate effect {theta} must be finite and nonnegative"
            )));
        }
        let covariates = covariate_pattern(n)?;
        Ok(Self {
            n,
            rho,
            theta,
            covariates,
        })
    }

    pub fn covariates(&self) -> &[u8] {
        &self.covariates
    }

    /// Event-time scale of one unit.
    pub fn scale(&self, unit: usize) -> f64 {
        1.0 + self.theta * f64::from(self.covariates[unit])
    }
}

/// Standard AR(1) Gaussian sequence: `e_1 ~ N(0,1)`,
/// `e_i = rho e_{i-1} + sqrt(1-rho^2) z_i`. The recursion is O(n) and keeps
/// every marginal exactly standard normal.
pub fn sample_ar1_standard_normals(rho: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let innovation_scale = (1.0 - rho * rho).sqrt();
    let mut prev: f64 = rng.sample(StandardNormal);
    out.push(prev);
    for _ in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        prev = rho * prev + innovation_scale * z;
        out.push(prev);
    }
    out
}

/// Correlated uniforms `Phi(e_i)` from the AR(1) sequence.
pub fn sample_copula_uniforms(rho: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    sample_ar1_standard_normals(rho, n, rng)
        .into_iter()
        .map(normal_cdf)
        .collect()
}

/// One draw of all units' event times under the copula model.
pub fn sample_copula_event_times(model: &CopulaEventModel, rng: &mut impl Rng) -> Vec<f64> {
    sample_ar1_standard_normals(model.rho, model.n, rng)
        .into_iter()
        .enumerate()
        .map(|(i, e)| -normal_cdf(-e).ln() * model.scale(i))
        .collect()
}

/// How units are assigned to arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssignmentScheme {
    /// Fair coin for every unit.
    Homogeneous,
    /// Assignment probability `0.5 + 0.2 (1 - 2x)` when `shifted`, i.e. 0.7
    /// for `x = 0` units and 0.3 for `x = 1`; the unshifted member of the
    /// family is the fair coin again.
    CovariateShift { shifted: bool },
}

impl AssignmentScheme {
    pub fn probability(&self, x: u8) -> f64 {
        match self {
            Self::Homogeneous => 0.5,
            Self::CovariateShift { shifted: false } => 0.5,
            Self::CovariateShift { shifted: true } => 0.5 + 0.2 * (1.0 - 2.0 * f64::from(x)),
        }
    }
}

/// How units are censored: exponential in both arms, with arm scales that
/// may depend on the covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CensoringScheme {
    /// Scales (2, 1) for the treated and control arms.
    Homogeneous,
    /// Scales `(10^(1 + s(x-1)), 10^(s(x-1)))` with `s = 1` when `scaled`:
    /// `x = 1` units keep (10, 1) while `x = 0` units drop to (1, 0.1).
    /// With `s = 0` every unit gets the mild (10, 1) censoring.
    CovariateScale { scaled: bool },
}

impl CensoringScheme {
    /// `(treated scale, control scale)` for a unit with covariate `x`.
    pub fn scales(&self, x: u8) -> (f64, f64) {
        match self {
            Self::Homogeneous => (2.0, 1.0),
            Self::CovariateScale { scaled: false } => (10.0, 1.0),
            Self::CovariateScale { scaled: true } => {
                let exponent = f64::from(x) - 1.0;
                (10f64.powf(1.0 + exponent), 10f64.powf(exponent))
            }
        }
    }
}

/// One Bernoulli assignment per unit, in index order.
pub fn sample_assignments(
    scheme: AssignmentScheme,
    covariates: &[u8],
    rng: &mut impl Rng,
) -> Vec<bool> {
    covariates
        .iter()
        .map(|&x| rng.random_bool(scheme.probability(x)))
        .collect()
}

/// One exponential censoring time per unit using its realized arm's scale,
/// in index order.
pub fn sample_censoring(
    scheme: CensoringScheme,
    covariates: &[u8],
    assignments: &[bool],
    rng: &mut impl Rng,
) -> Vec<f64> {
    covariates
        .iter()
        .zip(assignments)
        .map(|(&x, &treated)| {
            let (treated_scale, control_scale) = scheme.scales(x);
            let scale = if treated {
                treated_scale
            } else {
                control_scale
            };
            let e: f64 = rng.sample(Exp1);
            e * scale
        })
        .collect()
}

/// Draw assignments, then censoring values for the realized arms.
pub fn sample_mechanisms(
    assignment: AssignmentScheme,
    censoring: CensoringScheme,
    covariates: &[u8],
    rng: &mut impl Rng,
) -> (Vec<bool>, Vec<f64>) {
    let z = sample_assignments(assignment, covariates, rng);
    let c = sample_censoring(censoring, covariates, &z, rng);
    (z, c)
}

/// The assignment/censoring mechanism faced by a unit with covariate `x`,
/// as a moment-formula spec. Marked conditional when either scheme actually
/// uses the covariate.
pub fn mechanism_spec_for(
    assignment: AssignmentScheme,
    censoring: CensoringScheme,
    x: u8,
) -> Result<MechanismSpec> {
    let p1 = assignment.probability(x);
    let (treated_scale, control_scale) = censoring.scales(x);
    let treated = CensoringDist::exponential(treated_scale)?;
    let control = CensoringDist::exponential(control_scale)?;
    let conditional = matches!(
        assignment,
        AssignmentScheme::CovariateShift { shifted: true }
    ) || matches!(censoring, CensoringScheme::CovariateScale { scaled: true });
    if conditional {
        MechanismSpec::conditional(p1, treated, control)
    } else {
        MechanismSpec::new(p1, treated, control)
    }
}

/// What is held fixed across replications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditioningMode {
    /// Event times are drawn once (stream 0) and reused in every
    /// replication; assignment and censoring are redrawn each time. This is
    /// the randomization distribution the finite-population theory
    /// describes.
    FixedEventTimes,
    /// The allocation is pinned to first-half-treated and event times are
    /// redrawn each replication, so the statistic's variability comes from
    /// the outcome model rather than the randomization.
    FixedAssignment,
    /// Everything is redrawn every replication.
    FullyRandom,
}

/// Complete description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub label: String,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub rho: f64,
    pub theta: f64,
    pub assignment: AssignmentScheme,
    pub censoring: CensoringScheme,
    pub mode: ConditioningMode,
    /// Also compute the covariate-stratified statistic each replication.
    pub stratified: bool,
    /// Worker threads; 0 picks the default for the machine. Results do not
    /// depend on this, so reports omit it.
    #[serde(skip_serializing)]
    pub threads: usize,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        CopulaEventModel::new(self.n, self.rho, self.theta)?;
        Ok(())
    }
}

/// Named baseline scenarios. The `table3` family varies the event-time
/// dependence and covariate effect under homogeneous mechanisms; the
/// `table4` family turns covariate-dependent assignment and censoring on
/// and off under correlated event times with a covariate effect.
pub const PRESET_NAMES: [&str; 8] = [
    "table3-case1",
    "table3-case2",
    "table3-case3",
    "table3-case4",
    "table4-case-i",
    "table4-case-ii",
    "table4-case-iii",
    "table4-case-iv",
];

/// Build a preset scenario (n = 1000, 10,000 replications,
/// fixed-event-times conditioning) with the given seed.
///
/// `table3-caseN` (N = 1..4) sweeps `(rho, theta)` over (0,0), (0.5,0),
/// (0,1), (0.5,1) with homogeneous mechanisms. `table4-case-R` (R = i..iv,
/// arabic aliases accepted) fixes `(rho, theta) = (0.5, 1)` and sweeps the
/// covariate-shifted assignment and covariate-scaled censoring flags over
/// (off,off), (off,on), (on,off), (on,on), with the stratified statistic
/// enabled.
pub fn preset(name: &str, seed: u64) -> Result<ScenarioConfig> {
    let base = |label: &str, rho: f64, theta: f64| ScenarioConfig {
        label: label.to_string(),
        n: 1000,
        replications: 10_000,
        seed,
        rho,
        theta,
        assignment: AssignmentScheme::Homogeneous,
        censoring: CensoringScheme::Homogeneous,
        mode: ConditioningMode::FixedEventTimes,
        stratified: false,
        threads: 0,
    };
    let covariate = |label: &str, shifted: bool, scaled: bool| ScenarioConfig {
        assignment: AssignmentScheme::CovariateShift { shifted },
        censoring: CensoringScheme::CovariateScale { scaled },
        stratified: true,
        ..base(label, 0.5, 1.0)
    };
    match name {
        "table3-case1" => Ok(base(name, 0.0, 0.0)),
        "table3-case2" => Ok(base(name, 0.5, 0.0)),
        "table3-case3" => Ok(base(name, 0.0, 1.0)),
        "table3-case4" => Ok(base(name, 0.5, 1.0)),
        "table4-case-i" | "table4-case1" => Ok(covariate("table4-case-i", false, false)),
        "table4-case-ii" | "table4-case2" => Ok(covariate("table4-case-ii", false, true)),
        "table4-case-iii" | "table4-case3" => Ok(covariate("table4-case-iii", true, false)),
        "table4-case-iv" | "table4-case4" => Ok(covariate("table4-case-iv", true, true)),
        other => Err(Error::InvalidConfig(format!(
            "unknown preset {other:?}; available: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// Statistics of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Replicate {
    pub score: f64,
    pub variance: f64,
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratified: Option<StratifiedValues>,
}

/// Stratified statistic of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratifiedValues {
    pub score: f64,
    pub variance: f64,
    pub statistic: Option<f64>,
}

/// All replications of one scenario, in replication order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutput {
    pub config: ScenarioConfig,
    /// Generator scheme, always [`RNG_GENERATOR`].
    pub generator: &'static str,
    /// Stream that drew the fixed event times, when the mode fixes them.
    pub fixed_event_stream: Option<u64>,
    /// The fixed event times themselves, when the mode fixes them.
    pub fixed_event_times: Option<Vec<f64>>,
    pub replicates: Vec<Replicate>,
}

impl ReplicationOutput {
    pub fn statistics(&self) -> Vec<Option<f64>> {
        self.replicates.iter().map(|r| r.statistic).collect()
    }

    pub fn stratified_statistics(&self) -> Option<Vec<Option<f64>>> {
        self.config.stratified.then(|| {
            self.replicates
                .iter()
                .map(|r| r.stratified.and_then(|s| s.statistic))
                .collect()
        })
    }
}

/// Run every replication of `config` and collect the statistics in
/// replication order.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ReplicationOutput> {
    config.validate()?;
    let model = CopulaEventModel::new(config.n, config.rho, config.theta)?;
    let covariates = model.covariates().to_vec();

    let fixed_times = match config.mode {
        ConditioningMode::FixedEventTimes => {
            let mut rng = stream_rng(config.seed, FIXED_EVENT_STREAM);
            Some(sample_copula_event_times(&model, &mut rng))
        }
        _ => None,
    };
    let fixed_assignment = match config.mode {
        ConditioningMode::FixedAssignment => Some(half_treated_assignment(config.n)),
        _ => None,
    };

    let run_one = |r: usize| -> Replicate {
        let mut rng = stream_rng(config.seed, replication_stream(r));
        let times = match &fixed_times {
            Some(fixed) => fixed.clone(),
            None => sample_copula_event_times(&model, &mut rng),
        };
        let assignments = match &fixed_assignment {
            Some(fixed) => fixed.clone(),
            None => sample_assignments(config.assignment, &covariates, &mut rng),
        };
        let censoring = sample_censoring(config.censoring, &covariates, &assignments, &mut rng);

        let records: Vec<SurvivalRecord> = (0..config.n)
            .map(|i| SurvivalRecord {
                id: i as u32,
                time: times[i].min(censoring[i]),
                event: times[i] <= censoring[i],
                group: u8::from(assignments[i]),
                stratum: u32::from(covariates[i]),
            })
            .collect();

        let plain = logrank_statistic(&records).expect("records are nonempty");
        let stratified = config.stratified.then(|| {
            let s = stratified_logrank(&records).expect("records are nonempty");
            StratifiedValues {
                score: s.score,
                variance: s.variance,
                statistic: s.statistic,
            }
        });
        Replicate {
            score: plain.score,
            variance: plain.variance,
            statistic: plain.statistic,
            stratified,
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let replicates: Vec<Replicate> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(run_one)
            .collect()
    });

    Ok(ReplicationOutput {
        config: config.clone(),
        generator: RNG_GENERATOR,
        fixed_event_stream: fixed_times.as_ref().map(|_| FIXED_EVENT_STREAM),
        fixed_event_times: fixed_times,
        replicates,
    })
}
