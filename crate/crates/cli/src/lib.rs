//! Scenario ingestion and orchestration for the verification workbench.

pub mod builtins;
pub mod checks;
pub mod scenario;

use cpbundle::report::Report;

use checks::{Settings, Subjects};
pub use scenario::{parse_scenario, Scenario, ScenarioError};

/// Command-line overrides applied on top of a scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub rmax: Option<usize>,
    /// Bundle rank for presets that take one.
    pub rank: Option<usize>,
}

/// Loads `builtin:<name>` or a path.
pub fn load(source: &str) -> Result<Scenario, ScenarioError> {
    if let Some(name) = source.strip_prefix("builtin:") {
        let text = builtins::text(name).ok_or_else(|| ScenarioError::Validation(format!("unknown builtin `{name}`")))?;
        return parse_scenario(text);
    }
    let text = std::fs::read_to_string(source).map_err(|e| ScenarioError::Parse(format!("{source}: {e}")))?;
    parse_scenario(&text)
}

/// Builds the scenario objects and runs its checks in declaration order.
pub fn run_scenario(sc: &Scenario, ov: &Overrides) -> Result<Report, ScenarioError> {
    let seed = ov.seed.unwrap_or(sc.seed);
    let tol = ov.tol.unwrap_or(sc.tol);
    let (bundle, summand) = match &sc.bundle {
        Some(spec) => {
            let (b, s) = scenario::build_bundle(spec, sc.space.as_ref(), ov.rank)?;
            (Some(b), s)
        }
        None => (None, None),
    };
    let (model, acting) = match (&sc.group, &bundle) {
        (Some(spec), Some(b)) => {
            let setup = scenario::build_group(spec, b, seed)?;
            (Some(setup.model), setup.acting)
        }
        (Some(_), None) => return Err(ScenarioError::Validation("[group] needs a [bundle] section".into())),
        _ => (None, Vec::new()),
    };
    let pullback = match (&sc.pullback, &bundle) {
        (Some(spec), Some(b)) => Some(scenario::build_pullback(spec, b)?),
        (Some(_), None) => return Err(ScenarioError::Validation("[pullback] needs a [bundle] section".into())),
        _ => None,
    };
    let subdiv = sc.space.as_ref().filter(|s| s.kind == "sphere").and_then(|s| s.subdiv);
    let subjects = Subjects {
        bundle: bundle.clone(),
        summand,
        model,
        acting,
        pullback,
        subdiv,
    };
    let settings = Settings { seed, tol, rmax: ov.rmax };
    let mut report = Report::new(&sc.name, seed, tol);
    if !sc.description.is_empty() {
        report.note(sc.description.clone());
    }
    if let Some(b) = &bundle {
        report.note(format!("bundle: {} over {} points", b.label(), b.points()));
    }
    let default = scenario::CheckParams::default();
    for name in &sc.checks.run {
        let params = sc.checks.params.get(name).unwrap_or(&default);
        report.extend(checks::run_check(name, &subjects, params, &settings));
    }
    Ok(report)
}
