//! The `floodguard` command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 resource limit reached,
//! 4 infeasible model, 1 anything else.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cases;
use crate::domain::{validate_case, CaseModel};
use crate::error::{Error, Result};
use crate::eval::{self, PlanOutcome, PlanReport};
use crate::milp;
use crate::scenario::{self, ScenarioSet};
use crate::solver::{MipOptions, MipStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNEXPECTED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "floodguard", version, about = "Day-ahead tiger dam protection planning for flooded substations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a case file and list every problem found.
    Validate {
        /// Case file; the bundled 6-bus case when omitted.
        path: Option<PathBuf>,
        #[arg(long)]
        case: Option<PathBuf>,
    },
    /// Generate the scenario set and write scenarios.json.
    Scenarios(RunArgs),
    /// Solve the stochastic plan; writes plan.json, curve.csv and report.json.
    Plan {
        #[command(flatten)]
        run: RunArgs,
        /// Skip the ±50% parameter scan in report.json.
        #[arg(long)]
        skip_sensitivity: bool,
    },
    /// Solve the deterministic baseline; writes baseline_plan.json,
    /// baseline_curve.csv and baseline_report.json.
    Baseline(RunArgs),
    /// Solve both plans and write compare.json with their deltas.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Only solve and write the baseline artifacts.
        #[arg(long)]
        baseline_only: bool,
    },
    /// Write the planning MILP as model.mps plus a variable catalog.
    ExportMps(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Case file; the bundled 6-bus case when omitted.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// file:PATH, nested:D1,D2,... (decreasing depths in m), top:N or all.
    #[arg(long)]
    pub scenarios: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub teams: Option<u32>,
    #[arg(long)]
    pub members: Option<u32>,
    #[arg(long)]
    pub prep_hours: Option<u32>,
    /// Value of lost load, $/MWh.
    #[arg(long)]
    pub voll: Option<f64>,
    /// Tiger dam cost applied to every substation, $.
    #[arg(long)]
    pub dam_cost: Option<f64>,
    /// Relative optimality gap at which the search stops.
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with any of the options above; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Options read from a TOML config file. Keys mirror the long flags with
/// underscores.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub scenarios: Option<String>,
    pub horizon: Option<usize>,
    pub teams: Option<u32>,
    pub members: Option<u32>,
    pub prep_hours: Option<u32>,
    pub voll: Option<f64>,
    pub dam_cost: Option<f64>,
    pub gap: Option<f64>,
    pub node_limit: Option<usize>,
    pub out: Option<PathBuf>,
    /// Reserved; the solve path is deterministic and does not draw numbers.
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Flags override the config file.
    pub fn merged(self, a: &RunArgs) -> Self {
        Self {
            case: a.case.clone().or(self.case),
            scenarios: a.scenarios.clone().or(self.scenarios),
            horizon: a.horizon.or(self.horizon),
            teams: a.teams.or(self.teams),
            members: a.members.or(self.members),
            prep_hours: a.prep_hours.or(self.prep_hours),
            voll: a.voll.or(self.voll),
            dam_cost: a.dam_cost.or(self.dam_cost),
            gap: a.gap.or(self.gap),
            node_limit: a.node_limit.or(self.node_limit),
            out: a.out.clone().or(self.out),
            seed: self.seed,
        }
    }

    pub fn mip_options(&self) -> Result<MipOptions> {
        let mut o = MipOptions::default();
        if let Some(g) = self.gap {
            if !(g >= 0.0) {
                return Err(Error::Range(format!("gap must be >= 0, got {g}")));
            }
            o.gap_tolerance = g;
        }
        if let Some(n) = self.node_limit {
            o.node_limit = n;
        }
        Ok(o)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Loads the case, applies overrides and validates the result.
    pub fn load_case(&self) -> Result<CaseModel> {
        let mut case = match &self.case {
            Some(p) => CaseModel::load(p)?,
            None => cases::sixbus(),
        };
        if let Some(h) = self.horizon {
            case.set_horizon(h);
        }
        if let Some(n) = self.teams {
            case.crew.num_teams = n;
        }
        if let Some(m) = self.members {
            case.crew.members_per_team = m;
        }
        if let Some(t) = self.prep_hours {
            case.crew.prep_hours = t;
        }
        if let Some(v) = self.voll {
            case.costs.voll = v;
        }
        if let Some(c) = self.dam_cost {
            case.substations.iter_mut().for_each(|s| s.tiger_dam_cost = c);
        }
        let violations = validate_case(&case);
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        Ok(case)
    }

    pub fn load_scenarios(&self, case: &CaseModel) -> Result<ScenarioSet> {
        let set = match &self.scenarios {
            None => scenario::default_scenarios(case)?,
            Some(spec) => ScenarioSource::parse(spec)?.generate(case)?,
        };
        set.failure_matrix(case)?;
        Ok(set)
    }
}

/// Where the scenario set comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    File(PathBuf),
    Nested(Vec<f64>),
    Top(usize),
    All,
}

impl ScenarioSource {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |m: String| Error::Parse(format!("--scenarios {spec}: {m}"));
        if spec == "all" {
            return Ok(Self::All);
        }
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| bad("expected file:PATH, nested:D1,D2,..., top:N or all".into()))?;
        match kind {
            "file" => Ok(Self::File(PathBuf::from(rest))),
            "nested" => rest
                .split(',')
                .map(|d| d.trim().parse::<f64>().map_err(|e| bad(format!("{d}: {e}"))))
                .collect::<Result<_>>()
                .map(Self::Nested),
            "top" => rest.parse().map(Self::Top).map_err(|e| bad(format!("{rest}: {e}"))),
            other => Err(bad(format!("unknown source {other}"))),
        }
    }

    pub fn generate(&self, case: &CaseModel) -> Result<ScenarioSet> {
        match self {
            Self::File(p) => ScenarioSet::load(p),
            Self::Nested(d) => scenario::nested_severity_reduction(&case.substations, d),
            Self::Top(n) => scenario::top_n_by_probability(&case.substations, *n),
            Self::All => scenario::enumerate_all(&case.substations),
        }
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::Invalid(_) | Error::Range(_) | Error::Scenario(_) => EXIT_INVALID,
        Error::Limit(_) => EXIT_LIMIT,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_UNEXPECTED,
    }
}

fn report_error(e: &Error) {
    eprintln!("error: {e}");
    if let Error::Invalid(v) = e {
        for x in v {
            eprintln!("  {x}");
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}

fn config_for(a: &RunArgs) -> Result<RunConfig> {
    let base = match &a.config {
        Some(p) => RunConfig::from_toml_str(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    Ok(base.merged(a))
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Validate { path, case } => cmd_validate(path.or(case).as_deref()),
        Command::Scenarios(a) => cmd_scenarios(&config_for(&a)?),
        Command::Plan { run, skip_sensitivity } => cmd_plan(&config_for(&run)?, !skip_sensitivity),
        Command::Baseline(a) => cmd_baseline(&config_for(&a)?),
        Command::Compare { run, baseline_only } => cmd_compare(&config_for(&run)?, baseline_only),
        Command::ExportMps(a) => cmd_export_mps(&config_for(&a)?),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn cmd_validate(path: Option<&Path>) -> Result<i32> {
    let case = match path {
        Some(p) => CaseModel::load(p)?,
        None => cases::sixbus(),
    };
    let violations = validate_case(&case);
    if violations.is_empty() {
        println!("ok: {} buses, {} lines, {} substations", case.buses.len(), case.lines.len(), case.substations.len());
        Ok(EXIT_OK)
    } else {
        for v in &violations {
            println!("{v}");
        }
        Ok(EXIT_INVALID)
    }
}

pub fn cmd_scenarios(cfg: &RunConfig) -> Result<i32> {
    let case = cfg.load_case()?;
    let set = cfg.load_scenarios(&case)?;
    for s in &set.scenarios {
        println!("{}\t{}\t{{{}}}", s.id, s.probability, s.failed_ids().join(","));
    }
    write_file(&cfg.out_dir(), "scenarios.json", &set.to_json())?;
    Ok(EXIT_OK)
}

/// plan.json contents.
#[derive(Debug, Serialize)]
pub struct PlanFile<'a> {
    pub status: MipStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub protected: &'a [String],
    /// Substation id → 1 when protected.
    pub theta: BTreeMap<String, u8>,
    pub schedule: ScheduleGrid,
    pub scenarios: Vec<ScenarioEcho>,
    pub warnings: &'a [String],
}

/// Crew schedule laid out as teams by prep hours; idle cells are null.
#[derive(Debug, Serialize)]
pub struct ScheduleGrid {
    pub hours: Vec<usize>,
    pub teams: Vec<TeamRow>,
}

#[derive(Debug, Serialize)]
pub struct TeamRow {
    pub team: usize,
    pub cells: Vec<Option<String>>,
}

#[derive(Debug, Serialize)]
pub struct ScenarioEcho {
    pub id: String,
    pub probability: f64,
    pub failed: Vec<String>,
}

fn plan_file<'a>(case: &CaseModel, set: &ScenarioSet, out: &'a PlanOutcome) -> PlanFile<'a> {
    let s = &out.summary;
    let theta = out.plan.theta(case);
    PlanFile {
        status: s.status,
        objective: s.objective,
        best_bound: s.best_bound,
        gap: s.gap,
        nodes: s.nodes,
        protected: &out.plan.protected,
        theta: case.substations.iter().zip(theta).map(|(x, t)| (x.id.clone(), u8::from(t))).collect(),
        schedule: ScheduleGrid {
            hours: (1..=case.crew.prep_hours as usize).collect(),
            teams: out
                .plan
                .schedule
                .iter()
                .enumerate()
                .map(|(n, r)| TeamRow { team: n + 1, cells: r.clone() })
                .collect(),
        },
        scenarios: set
            .scenarios
            .iter()
            .map(|x| ScenarioEcho {
                id: x.id.clone(),
                probability: x.probability,
                failed: x.failed_ids().iter().map(|f| f.to_string()).collect(),
            })
            .collect(),
        warnings: &out.warnings,
    }
}

fn status_code(status: MipStatus) -> i32 {
    match status {
        MipStatus::Optimal => EXIT_OK,
        MipStatus::NodeLimit => EXIT_LIMIT,
        _ => EXIT_UNEXPECTED,
    }
}

fn write_plan_artifacts(
    dir: &Path,
    prefix: &str,
    case: &CaseModel,
    set: &ScenarioSet,
    out: &PlanOutcome,
    report: &PlanReport,
) -> Result<()> {
    write_file(dir, &format!("{prefix}plan.json"), &to_json(&plan_file(case, set, out))?)?;
    write_file(dir, &format!("{prefix}curve.csv"), &report.curve.to_csv()?)?;
    write_file(dir, &format!("{prefix}report.json"), &to_json(report)?)?;
    Ok(())
}

fn print_summary(label: &str, out: &PlanOutcome, report: &PlanReport) {
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{label}: {:?} protect {{{}}} expected cost {:.2} (gap {:.2e}, {} nodes)",
        out.summary.status,
        out.plan.protected.join(","),
        report.expected_cost.total,
        out.summary.gap,
        out.summary.nodes
    );
}

fn solve_and_report(
    case: &CaseModel,
    set: &ScenarioSet,
    cfg: &RunConfig,
    baseline: bool,
) -> Result<(PlanOutcome, PlanReport)> {
    let options = cfg.mip_options()?;
    let (out, label) = if baseline {
        (eval::deterministic_baseline(case, &options)?, "deterministic")
    } else {
        (eval::solve_plan(case, set, &options)?, "stochastic")
    };
    let mut report = eval::evaluate_plan(case, set, &out.plan, label)?;
    report.solve = Some(out.summary.clone());
    Ok((out, report))
}

pub fn cmd_plan(cfg: &RunConfig, sensitivity: bool) -> Result<i32> {
    let case = cfg.load_case()?;
    let set = cfg.load_scenarios(&case)?;
    let (out, mut report) = solve_and_report(&case, &set, cfg, false)?;
    if sensitivity {
        let s = eval::protection_sensitivity(&case, &set, &out.plan.protected, &cfg.mip_options()?)?;
        println!("sensitivity: {}", s.note);
        report.sensitivity = Some(s);
    }
    write_plan_artifacts(&cfg.out_dir(), "", &case, &set, &out, &report)?;
    print_summary("stochastic", &out, &report);
    Ok(status_code(out.summary.status))
}

pub fn cmd_baseline(cfg: &RunConfig) -> Result<i32> {
    let case = cfg.load_case()?;
    let set = cfg.load_scenarios(&case)?;
    let (out, report) = solve_and_report(&case, &set, cfg, true)?;
    write_plan_artifacts(&cfg.out_dir(), "baseline_", &case, &set, &out, &report)?;
    print_summary("deterministic", &out, &report);
    Ok(status_code(out.summary.status))
}

pub fn cmd_compare(cfg: &RunConfig, baseline_only: bool) -> Result<i32> {
    let case = cfg.load_case()?;
    let set = cfg.load_scenarios(&case)?;
    let dir = cfg.out_dir();
    let (base, base_report) = solve_and_report(&case, &set, cfg, true)?;
    write_plan_artifacts(&dir, "baseline_", &case, &set, &base, &base_report)?;
    print_summary("deterministic", &base, &base_report);
    if baseline_only {
        return Ok(status_code(base.summary.status));
    }
    let (stoch, stoch_report) = solve_and_report(&case, &set, cfg, false)?;
    write_plan_artifacts(&dir, "", &case, &set, &stoch, &stoch_report)?;
    print_summary("stochastic", &stoch, &stoch_report);
    let cmp = eval::compare_reports(&stoch_report, &base_report);
    write_file(&dir, "compare.json", &to_json(&cmp)?)?;
    let pct = |d: &eval::Delta| d.percent.map_or("n/a".to_string(), |p| format!("{p:+.1}%"));
    println!(
        "stochastic vs deterministic: cost {}, outage magnitude {}, outage time {}",
        pct(&cmp.expected_cost),
        pct(&cmp.outage_magnitude_mw),
        pct(&cmp.outage_time_h)
    );
    Ok(status_code(stoch.summary.status).max(status_code(base.summary.status)))
}

pub fn cmd_export_mps(cfg: &RunConfig) -> Result<i32> {
    let case = cfg.load_case()?;
    let set = cfg.load_scenarios(&case)?;
    let instance = milp::build(&case, &set)?;
    let mut buf = Vec::new();
    milp::mps::export_mps(&instance, &mut buf)?;
    let dir = cfg.out_dir();
    write_file(&dir, "model.mps", &String::from_utf8_lossy(&buf))?;
    write_file(&dir, "model_catalog.json", &to_json(&instance.debug_json())?)?;
    println!(
        "model.mps: {} variables ({} binary), {} constraints",
        instance.catalog.len(),
        instance.catalog.count(milp::VarKind::Binary),
        instance.constraints.len()
    );
    Ok(EXIT_OK)
}
