//! Experiment definitions, parameter sweeps and result files.

mod config;
mod output;
mod presets;

pub use config::{ClassSpec, ScenarioFile, SweepSpec, VariantSpec};
pub use output::{plot_script, write_csv, CSV_HEADER};
pub use presets::{preset, preset_names, PRESETS};

use std::fmt;

use rayon::prelude::*;

use crate::engine::{
    run, EstimationMode, InvalidConfig, ReallocationMode, ServiceClass, SimConfig, SimulationReport,
};
use crate::policies::PolicyBundle;
use crate::stochastic::Distribution;

/// A problem found in a scenario, located by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl ConfigIssue {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassField {
    Gamma,
    Jobs,
    Delta,
    Charge,
    Obligation,
    Penalty,
    /// Rescales the service law to the swept mean.
    MeanService,
}

impl ClassField {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gamma" => Self::Gamma,
            "jobs" => Self::Jobs,
            "delta" => Self::Delta,
            "charge" => Self::Charge,
            "obligation" => Self::Obligation,
            "penalty" => Self::Penalty,
            "mean_service" => Self::MeanService,
            _ => return None,
        })
    }

    fn is_integer(self) -> bool {
        self == Self::Jobs
    }

    fn apply(self, class: &mut ServiceClass, value: f64) {
        match self {
            Self::Gamma => {
                class.gamma = value;
                class.interarrival = class.interarrival.with_mean(1.0 / value);
            }
            Self::Jobs => class.jobs = value as u32,
            Self::Delta => class.delta = value,
            Self::Charge => class.charge = value,
            Self::Obligation => class.obligation = value,
            Self::Penalty => class.penalty = value,
            Self::MeanService => class.service = class.service.with_mean(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    Servers,
    Class { class: usize, field: ClassField },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: String,
    pub target: SweepTarget,
    pub values: Vec<f64>,
}

/// Service law replacements applied to a copy of the base classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub services: Vec<(usize, Distribution)>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub base: SimConfig,
    pub policies: Vec<PolicyBundle>,
    pub sweep: Option<Sweep>,
    pub variants: Vec<Variant>,
}

/// Run-level settings that may be overridden from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub batches: Option<usize>,
    pub estimation: Option<EstimationMode>,
    pub preemptive: bool,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadError {
    /// The text is not a well-formed scenario; the message carries the
    /// line and column.
    Parse(String),
    Invalid(Vec<ConfigIssue>),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Parse(msg) => write!(f, "parse error: {msg}"),
            Self::Invalid(issues) => {
                for (i, issue) in issues.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{issue}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for LoadError {}

/// A validated scenario plus non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub scenario: Scenario,
    pub warnings: Vec<ConfigIssue>,
}

pub fn parse_config(text: &str) -> Result<ScenarioFile, LoadError> {
    toml::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))
}

/// Parses and validates in one step.
pub fn load_config(text: &str) -> Result<Validated, LoadError> {
    validate_config(&parse_config(text)?).map_err(LoadError::Invalid)
}

fn sweep_values(spec: &SweepSpec, issues: &mut Vec<ConfigIssue>) -> Vec<f64> {
    match (&spec.values, spec.from, spec.to, spec.step) {
        (Some(values), None, None, None) => values.clone(),
        (None, Some(from), Some(to), Some(step)) => {
            if !(step > 0.0 && step.is_finite() && to >= from) {
                issues.push(ConfigIssue::new("sweep", "need step > 0 and to >= from"));
                return Vec::new();
            }
            let count = ((to - from) / step + 1e-9).floor() as usize;
            (0..=count)
                .map(|i| {
                    let v = from + i as f64 * step;
                    (v * 1e12).round() / 1e12
                })
                .collect()
        }
        _ => {
            issues.push(ConfigIssue::new("sweep", "give either values or from, to and step"));
            Vec::new()
        }
    }
}

fn build_class(spec: &ClassSpec) -> ServiceClass {
    let mut class = ServiceClass::new(
        spec.name.clone(),
        spec.gamma,
        spec.jobs,
        spec.service,
        spec.delta,
        spec.charge,
        spec.obligation,
        spec.penalty,
    );
    if let Some(d) = spec.interarrival {
        class.interarrival = d;
    }
    class
}

fn class_issues(class: &ServiceClass, path: &str, issues: &mut Vec<ConfigIssue>) {
    for e in class.validate() {
        issues.push(ConfigIssue::new(path, e.to_string()));
    }
}

/// Checks every field and collects all problems rather than stopping at
/// the first. Overload is reported as a warning.
pub fn validate_config(file: &ScenarioFile) -> Result<Validated, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();

    let classes: Vec<ServiceClass> = file.classes.iter().map(build_class).collect();
    for (i, class) in classes.iter().enumerate() {
        if let Some(j) = classes[..i].iter().position(|c| c.name == class.name) {
            issues.push(ConfigIssue::new(format!("class[{i}].name"), format!("duplicates class[{j}]")));
        }
    }

    let mut policies = Vec::new();
    if file.policies.is_empty() {
        issues.push(ConfigIssue::new("policies", "at least one policy is needed"));
    }
    for (i, name) in file.policies.iter().enumerate() {
        match PolicyBundle::named(name) {
            Ok(b) => policies.push(b.with_weights(file.weights).with_tunables(file.policy)),
            Err(e) => issues.push(ConfigIssue::new(
                format!("policies[{i}]"),
                format!("{e}; known: {}", PolicyBundle::NAMES.join(", ")),
            )),
        }
    }
    if file.policy.drift.is_nan() || file.policy.drift < 0.0 {
        issues.push(ConfigIssue::new("policy.drift", "must be non-negative"));
    }
    if file.policy.epsilon.is_some_and(|e| e.is_nan() || e < 0.0) {
        issues.push(ConfigIssue::new("policy.epsilon", "must be non-negative"));
    }

    let mut base = SimConfig::new(file.servers, classes.clone());
    base.horizon = file.horizon;
    base.batches = file.batches;
    base.seed = file.seed;
    base.warmup = file.warmup;
    base.estimation = file.estimation;
    base.smoothing = file.smoothing;
    base.reallocation = file.reallocation;
    for e in base.validate() {
        let path = match &e {
            crate::engine::SimError::Class(_) => String::new(),
            crate::engine::SimError::NoServers => "servers".into(),
            crate::engine::SimError::Horizon(_) => "horizon".into(),
            crate::engine::SimError::Batches(_) => "batches".into(),
            crate::engine::SimError::Warmup(_) => "warmup".into(),
            crate::engine::SimError::Smoothing(_) => "smoothing".into(),
            crate::engine::SimError::NoClasses => "class".into(),
            _ => String::new(),
        };
        issues.push(ConfigIssue::new(path, e.to_string()));
    }

    let mut variants = Vec::new();
    for (v, spec) in file.variants.iter().enumerate() {
        let mut services = Vec::new();
        for (name, dist) in &spec.service {
            let path = format!("variant[{v}].service.{name}");
            match classes.iter().position(|c| &c.name == name) {
                Some(i) => {
                    if let Err(e) = dist.validate() {
                        issues.push(ConfigIssue::new(path, e.to_string()));
                    }
                    services.push((i, *dist));
                }
                None => issues.push(ConfigIssue::new(path, "no such class")),
            }
        }
        variants.push(Variant {
            name: spec.name.clone(),
            services,
        });
    }

    let sweep = file.sweep.as_ref().and_then(|spec| {
        let values = sweep_values(spec, &mut issues);
        let target = if spec.parameter == "servers" {
            Some(SweepTarget::Servers)
        } else {
            let parsed = spec.parameter.split_once('.').and_then(|(name, field)| {
                let class = classes.iter().position(|c| c.name == name)?;
                Some(SweepTarget::Class {
                    class,
                    field: ClassField::parse(field)?,
                })
            });
            if parsed.is_none() {
                issues.push(ConfigIssue::new(
                    "sweep.parameter",
                    format!("{:?} is neither servers nor <class>.<field>", spec.parameter),
                ));
            }
            parsed
        };
        let target = target?;
        for (i, &v) in values.iter().enumerate() {
            let integral = matches!(target, SweepTarget::Servers)
                || matches!(target, SweepTarget::Class { field, .. } if field.is_integer());
            let ok = v.is_finite() && if integral { v >= 1.0 && v.fract() == 0.0 } else { v >= 0.0 };
            if !ok {
                issues.push(ConfigIssue::new(format!("sweep.values[{i}]"), format!("{v} is out of range")));
            }
        }
        Some(Sweep {
            parameter: spec.parameter.clone(),
            target,
            values,
        })
    });

    let scenario = Scenario {
        name: file.name.clone(),
        base,
        policies,
        sweep,
        variants,
    };
    if issues.is_empty() {
        for point in scenario.points() {
            for (variant, cfg) in scenario.configs_at(point) {
                for (i, class) in cfg.classes.iter().enumerate() {
                    let path = match &variant {
                        Some(v) => format!("variant {v}, class[{i}]"),
                        None => format!("class[{i}]"),
                    };
                    class_issues(class, &path, &mut issues);
                }
                let load: f64 = cfg.classes.iter().map(ServiceClass::potential_load).sum();
                if load > 1.5 * cfg.servers as f64 {
                    let at = point.map_or(String::new(), |p| format!(" at {} = {p}", scenario.parameter_name()));
                    warnings.push(ConfigIssue::new(
                        "",
                        format!("potential load {load:.2} exceeds capacity {}{at}", cfg.servers),
                    ));
                }
            }
        }
        warnings.dedup();
    }
    if issues.is_empty() {
        Ok(Validated { scenario, warnings })
    } else {
        Err(issues)
    }
}

impl Scenario {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.base.seed = seed;
        }
        if let Some(h) = o.horizon {
            self.base.horizon = h;
        }
        if let Some(b) = o.batches {
            self.base.batches = b;
        }
        if let Some(e) = o.estimation {
            self.base.estimation = e;
        }
        if o.preemptive {
            self.base.reallocation = ReallocationMode::Preemptive;
        }
        self.base.trace |= o.trace;
    }

    pub fn parameter_name(&self) -> &str {
        self.sweep.as_ref().map_or("none", |s| s.parameter.as_str())
    }

    /// Sweep values, or a single `None` point without a sweep.
    pub fn points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().copied().map(Some).collect(),
            None => vec![None],
        }
    }

    /// Simulation settings of each variant at one sweep point.
    pub fn configs_at(&self, point: Option<f64>) -> Vec<(Option<String>, SimConfig)> {
        let mut cfg = self.base.clone();
        if let (Some(value), Some(sweep)) = (point, &self.sweep) {
            match sweep.target {
                SweepTarget::Servers => cfg.servers = value as usize,
                SweepTarget::Class { class, field } => field.apply(&mut cfg.classes[class], value),
            }
        }
        if self.variants.is_empty() {
            return vec![(None, cfg)];
        }
        self.variants
            .iter()
            .map(|v| {
                let mut c = cfg.clone();
                for &(class, dist) in &v.services {
                    c.classes[class].service = dist;
                }
                (Some(v.name.clone()), c)
            })
            .collect()
    }

    /// Every simulation of the experiment, in output order: variant, then
    /// sweep point, then policy.
    pub fn runs(&self) -> Vec<RunSpec> {
        let points = self.points();
        let variants = self.configs_at(points[0]).len();
        let mut out = Vec::new();
        for v in 0..variants {
            for &point in &points {
                let (variant, config) = self.configs_at(point).swap_remove(v);
                for policy in &self.policies {
                    out.push(RunSpec {
                        variant: variant.clone(),
                        point,
                        policy: *policy,
                        config: config.clone(),
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub variant: Option<String>,
    pub point: Option<f64>,
    pub policy: PolicyBundle,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub variant: Option<String>,
    pub point: Option<f64>,
    pub report: SimulationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResults {
    pub name: String,
    pub parameter: String,
    pub runs: Vec<RunResult>,
}

impl ScenarioResults {
    /// Label of a run's series in the CSV's scenario column.
    pub fn label(&self, run: &RunResult) -> String {
        match &run.variant {
            Some(v) => format!("{}/{v}", self.name),
            None => self.name.clone(),
        }
    }

    pub fn find(&self, variant: Option<&str>, policy: &str, point: Option<f64>) -> Option<&RunResult> {
        self.runs.iter().find(|r| {
            r.variant.as_deref() == variant && r.report.policy == policy && r.point == point
        })
    }

    /// Reports of one series, in sweep order.
    pub fn series(&self, variant: Option<&str>, policy: &str) -> Vec<&RunResult> {
        self.runs
            .iter()
            .filter(|r| r.variant.as_deref() == variant && r.report.policy == policy)
            .collect()
    }
}

/// Runs every simulation of the scenario. Runs are independent and execute
/// in parallel; results come back in [`Scenario::runs`] order. Every
/// policy at a given point sees the same seed and therefore the same
/// submitted streams and job variates.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResults, InvalidConfig> {
    let runs: Result<Vec<RunResult>, InvalidConfig> = scenario
        .runs()
        .into_par_iter()
        .map(|spec| {
            run(&spec.config, &spec.policy).map(|report| RunResult {
                variant: spec.variant,
                point: spec.point,
                report,
            })
        })
        .collect();
    Ok(ScenarioResults {
        name: scenario.name.clone(),
        parameter: scenario.parameter_name().to_string(),
        runs: runs?,
    })
}
