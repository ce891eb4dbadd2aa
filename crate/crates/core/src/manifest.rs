//! Run manifests: a TOML document naming one scenario, its parameter block,
//! simulation settings, an output directory and which artifacts to emit.
//!
//! Parsing fills every default, so the manifest serialized by
//! [`RunManifest::to_toml`] is the fully resolved configuration and parses
//! back to an identical value.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenarios::{
    baseline_peragent_tv, CoverageScenario, CoverageSpec, FormationScenario, FormationSpec, LeaderPath,
    NavigationScenario, NavigationSpec, Obstacle, PairwiseScenario, SizeLaw,
};
use crate::sim::{calibrate_integration_error, run, Metrics, Scenario, SimConfig, SimulationTrace};
use crate::voronoi::{tessellate, DensityField, QuadratureConfig, RectDomain, VoronoiCell};

pub const SCENARIO_NAMES: [&str; 5] = ["formation", "coverage", "navigation", "baseline_pairwise", "baseline_peragent"];

/// How formation followers are placed at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormationStart {
    /// Formation slots plus uniform noise of half-width `noise`.
    Perturbed { noise: f64 },
    /// Uniform in a cube of half-width `spread` around the leader.
    Random { spread: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationParams {
    pub size: SizeLaw,
    pub w_f: f64,
    pub w_l: f64,
    pub leader: LeaderPath,
    pub start: FormationStart,
}

impl Default for FormationParams {
    fn default() -> Self {
        Self {
            size: SizeLaw { base: 0.6, amplitude: 0.3, period: 20.0 },
            w_f: 1.0,
            w_l: 1.0,
            leader: LeaderPath::Fixed { position: vec![0.0; 3] },
            start: FormationStart::Perturbed { noise: 0.3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageParams {
    pub agents: usize,
    /// Agents start uniformly in this central fraction of the domain.
    pub fill: f64,
    pub domain: RectDomain,
    /// Defaults to two Gaussians drifting across the domain.
    pub density: Option<DensityField>,
    pub quadrature: QuadratureConfig,
    pub switch_band: Option<f64>,
}

impl Default for CoverageParams {
    fn default() -> Self {
        Self {
            agents: 10,
            fill: 0.8,
            domain: RectDomain::default(),
            density: None,
            quadrature: QuadratureConfig::default(),
            switch_band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavigationParams {
    pub side: f64,
    /// Time the leader takes to cross the field.
    pub leader_duration: f64,
    /// Defaults to the seven-obstacle corridor.
    pub obstacles: Option<Vec<Obstacle>>,
    pub safe_distance: f64,
    pub kappa: f64,
    pub gamma_rate: f64,
    pub orientation: bool,
}

impl Default for NavigationParams {
    fn default() -> Self {
        let d = NavigationSpec::obstacle_field(0.3, 60.0);
        Self {
            side: 0.3,
            leader_duration: 60.0,
            obstacles: None,
            safe_distance: d.safe_distance,
            kappa: d.kappa,
            gamma_rate: d.gamma_rate,
            orientation: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairwiseParams {
    /// All-to-all rendezvous of `agents` agents.
    Rendezvous { agents: usize },
    /// Four agents forming a square of side `side`.
    Square { side: f64 },
}

impl Default for PairwiseParams {
    fn default() -> Self {
        PairwiseParams::Rendezvous { agents: 6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioParams {
    Formation(FormationParams),
    Coverage(CoverageParams),
    Navigation(NavigationParams),
    BaselinePairwise(PairwiseParams),
    BaselinePeragent(CoverageParams),
}

impl ScenarioParams {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioParams::Formation(_) => "formation",
            ScenarioParams::Coverage(_) => "coverage",
            ScenarioParams::Navigation(_) => "navigation",
            ScenarioParams::BaselinePairwise(_) => "baseline_pairwise",
            ScenarioParams::BaselinePeragent(_) => "baseline_peragent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitFlags {
    pub trace_csv: bool,
    pub metrics_json: bool,
    /// Final tessellation; coverage scenarios only.
    pub cells_csv: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self { trace_csv: true, metrics_json: true, cells_csv: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Run a half-step companion to size the envelope budget `eps_int`;
    /// otherwise `eps_int = 0`.
    pub calibrate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub scenario: ScenarioParams,
    pub sim: SimConfig,
    pub output_dir: PathBuf,
    pub emit: EmitFlags,
    pub monitor: MonitorConfig,
}

/// On-disk layout. Exactly one scenario block may appear, the one named by
/// `scenario`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    scenario: String,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    sim: SimConfig,
    #[serde(default)]
    emit: EmitFlags,
    #[serde(default)]
    monitor: MonitorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    formation: Option<FormationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coverage: Option<CoverageParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    navigation: Option<NavigationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    baseline_pairwise: Option<PairwiseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    baseline_peragent: Option<CoverageParams>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of `key` inside table `table` (empty for the root), or of the
/// table header when `key` is empty.
fn locate(src: &str, table: &[&str], key: &str) -> Option<usize> {
    let mut current: Vec<String> = Vec::new();
    for (n, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            let name = h.trim_start_matches('[').split(']').next().unwrap_or("");
            current = name.split('.').map(|s| s.trim().trim_matches('"').to_string()).collect();
            if key.is_empty() && current == table {
                return Some(n + 1);
            }
            continue;
        }
        if key.is_empty() {
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let mut path: Vec<String> = current.clone();
        path.extend(lhs.split('.').map(|s| s.trim().trim_matches('"').to_string()));
        let want: Vec<&str> = table.iter().copied().chain(std::iter::once(key)).collect();
        if path == want {
            return Some(n + 1);
        }
    }
    None
}

fn manifest_error(line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Manifest { line, message: message.into() }
}

fn check_sim(src: &str, sim: &SimConfig) -> Result<()> {
    let bad = |key: &str, msg: String| Err(manifest_error(locate(src, &["sim"], key), format!("sim.{key}: {msg}")));
    if !(sim.dt > 0.0 && sim.dt.is_finite()) {
        return bad("dt", format!("must be positive and finite, got {}", sim.dt));
    }
    if !(sim.alpha_rate > 0.0 && sim.alpha_rate.is_finite()) {
        return bad("alpha_rate", format!("must be positive and finite, got {}", sim.alpha_rate));
    }
    if !(sim.qp_tol > 0.0 && sim.qp_tol < 1e-3) {
        return bad("qp_tol", format!("must lie in (0, 1e-3), got {}", sim.qp_tol));
    }
    Ok(())
}

impl RunManifest {
    /// A manifest for `scenario` with every default.
    pub fn with_defaults(scenario: &str) -> Result<Self> {
        Self::from_toml_str(&format!("scenario = \"{scenario}\"\n"))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path)
            .map_err(|e| manifest_error(None, format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let raw: RawManifest = toml::from_str(src)
            .map_err(|e| manifest_error(e.span().map(|s| line_of(src, s.start)), e.message().to_string()))?;
        check_sim(src, &raw.sim)?;
        let name = raw.scenario.as_str();
        if !SCENARIO_NAMES.contains(&name) {
            return Err(manifest_error(
                locate(src, &[], "scenario"),
                format!("unknown scenario `{name}`; expected one of {}", SCENARIO_NAMES.join(", ")),
            ));
        }
        let present = [
            ("formation", raw.formation.is_some()),
            ("coverage", raw.coverage.is_some()),
            ("navigation", raw.navigation.is_some()),
            ("baseline_pairwise", raw.baseline_pairwise.is_some()),
            ("baseline_peragent", raw.baseline_peragent.is_some()),
        ];
        if let Some((other, _)) = present.iter().find(|(n, p)| *p && *n != name) {
            return Err(manifest_error(
                locate(src, &[other], ""),
                format!("block [{other}] does not apply to scenario `{name}`"),
            ));
        }
        let scenario = match name {
            "formation" => ScenarioParams::Formation(raw.formation.unwrap_or_default()),
            "coverage" => ScenarioParams::Coverage(resolve_coverage(raw.coverage.unwrap_or_default())),
            "navigation" => ScenarioParams::Navigation(resolve_navigation(raw.navigation.unwrap_or_default())),
            "baseline_pairwise" => ScenarioParams::BaselinePairwise(raw.baseline_pairwise.unwrap_or_default()),
            _ => ScenarioParams::BaselinePeragent(resolve_coverage(raw.baseline_peragent.unwrap_or_default())),
        };
        let manifest = Self { scenario, sim: raw.sim, output_dir: raw.output_dir, emit: raw.emit, monitor: raw.monitor };
        // Building validates every scenario parameter.
        manifest.build().map_err(|e| {
            let line = locate(src, &[name], "").or_else(|| locate(src, &[], "scenario"));
            manifest_error(line, format!("[{name}] {e}"))
        })?;
        Ok(manifest)
    }

    /// The fully resolved configuration.
    pub fn to_toml(&self) -> Result<String> {
        let mut raw = RawManifest {
            scenario: self.scenario.name().to_string(),
            output_dir: self.output_dir.clone(),
            sim: self.sim.clone(),
            emit: self.emit,
            monitor: self.monitor,
            formation: None,
            coverage: None,
            navigation: None,
            baseline_pairwise: None,
            baseline_peragent: None,
        };
        match &self.scenario {
            ScenarioParams::Formation(p) => raw.formation = Some(p.clone()),
            ScenarioParams::Coverage(p) => raw.coverage = Some(p.clone()),
            ScenarioParams::Navigation(p) => raw.navigation = Some(p.clone()),
            ScenarioParams::BaselinePairwise(p) => raw.baseline_pairwise = Some(*p),
            ScenarioParams::BaselinePeragent(p) => raw.baseline_peragent = Some(p.clone()),
        }
        toml::to_string(&raw).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<BuiltScenario> {
        let seed = self.sim.seed;
        Ok(match &self.scenario {
            ScenarioParams::Formation(p) => {
                let spec = FormationSpec::icosahedron(p.size, p.w_f, p.w_l, p.leader.clone());
                BuiltScenario::Formation(match p.start {
                    FormationStart::Perturbed { noise } => FormationScenario::perturbed_start(spec, seed, noise)?,
                    FormationStart::Random { spread } => FormationScenario::random_start(spec, seed, spread)?,
                })
            }
            ScenarioParams::Coverage(p) | ScenarioParams::BaselinePeragent(p) if p.agents == 0 || !(p.fill > 0.0 && p.fill <= 1.0) => {
                return Err(Error::Config("coverage needs agents >= 1 and fill in (0, 1]".into()));
            }
            ScenarioParams::Coverage(p) => {
                BuiltScenario::Coverage(CoverageScenario::random_start(coverage_spec(p), p.agents, seed, p.fill)?)
            }
            ScenarioParams::BaselinePeragent(p) => {
                let start = CoverageScenario::random_start(coverage_spec(p), p.agents, seed, p.fill)?;
                BuiltScenario::Coverage(baseline_peragent_tv(coverage_spec(p), start.initial_state().clone())?)
            }
            ScenarioParams::Navigation(p) => {
                let mut spec = NavigationSpec::obstacle_field(p.side, p.leader_duration);
                if let Some(obs) = &p.obstacles {
                    spec.obstacles = obs.clone();
                }
                spec.safe_distance = p.safe_distance;
                spec.kappa = p.kappa;
                spec.gamma_rate = p.gamma_rate;
                if !p.orientation {
                    spec.orientation = None;
                }
                BuiltScenario::Navigation(NavigationScenario::in_formation(spec)?)
            }
            ScenarioParams::BaselinePairwise(p) => BuiltScenario::Pairwise(match *p {
                PairwiseParams::Rendezvous { agents } => {
                    if agents < 2 {
                        return Err(Error::Config("rendezvous needs at least two agents".into()));
                    }
                    PairwiseScenario::rendezvous(agents, seed)?
                }
                PairwiseParams::Square { side } => {
                    if !(side > 0.0) {
                        return Err(Error::Config("square side must be positive".into()));
                    }
                    PairwiseScenario::square(side, seed)?
                }
            }),
        })
    }

    /// Copies of this manifest with `key` set to each of `values`, each
    /// writing into its own subdirectory `key=value` of `output_dir`.
    ///
    /// A bare key is looked up in `[sim]` first, then in the scenario block;
    /// a dotted key is a full path.
    pub fn sweep(&self, key: &str, values: &[&str]) -> Result<Vec<RunManifest>> {
        let base: toml::Table = toml::from_str(&self.to_toml()?).map_err(|e| Error::Config(e.to_string()))?;
        let path: Vec<String> = if key.contains('.') {
            key.split('.').map(str::to_string).collect()
        } else {
            let sim_keys = toml::Table::try_from(SimConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
            let table = if sim_keys.contains_key(key) { "sim" } else { self.scenario.name() };
            vec![table.to_string(), key.to_string()]
        };
        values
            .iter()
            .map(|v| {
                let mut doc = base.clone();
                set_path(&mut doc, &path, parse_value(v))?;
                let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
                let mut m = Self::from_toml_str(&text)?;
                m.output_dir = self.output_dir.join(format!("{key}={v}"));
                Ok(m)
            })
            .collect()
    }

    /// Runs the scenario, calibrating `eps_int` when requested.
    pub fn execute(&self) -> Result<RunOutcome> {
        let built = self.build()?;
        let (trace, eps_int) = built.simulate(&self.sim, self.monitor.calibrate)?;
        let metrics = trace.metrics(eps_int);
        let cells = match &built {
            BuiltScenario::Coverage(s) if self.emit.cells_csv => {
                let last = trace.records.last().ok_or(Error::Config("empty trace".into()))?;
                let sites: Vec<[f64; 2]> = last.positions.iter().map(|p| [p[0], p[1]]).collect();
                Some(tessellate(&sites, &s.spec().domain)?)
            }
            _ => None,
        };
        Ok(RunOutcome { trace, metrics, cells })
    }

    /// Writes the effective config and the requested artifacts into
    /// `output_dir`, each through a temporary file and a rename.
    pub fn write_outputs(&self, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.output_dir)?;
        let mut written = vec![write_atomic(&self.output_dir, "effective.toml", |w| {
            w.write_all(self.to_toml()?.as_bytes())?;
            Ok(())
        })?];
        if self.emit.trace_csv {
            written.push(write_atomic(&self.output_dir, "trace.csv", |w| outcome.trace.write_csv(w))?);
        }
        if self.emit.metrics_json {
            written.push(write_atomic(&self.output_dir, "metrics.json", |w| {
                serde_json::to_writer_pretty(&mut *w, &outcome.metrics).map_err(|e| Error::Io(e.to_string()))?;
                w.write_all(b"\n")?;
                Ok(())
            })?);
        }
        if let Some(cells) = &outcome.cells {
            written.push(write_atomic(&self.output_dir, "cells.csv", |w| crate::voronoi::geometry::write_cells_csv(cells, w))?);
        }
        Ok(written)
    }
}

fn resolve_coverage(mut p: CoverageParams) -> CoverageParams {
    if p.density.is_none() {
        p.density = Some(DensityField::drifting_pair(&p.domain));
    }
    p
}

fn resolve_navigation(mut p: NavigationParams) -> NavigationParams {
    if p.obstacles.is_none() {
        p.obstacles = Some(NavigationSpec::obstacle_field(p.side, p.leader_duration).obstacles);
    }
    p
}

fn coverage_spec(p: &CoverageParams) -> CoverageSpec {
    let density = p.density.clone().unwrap_or_else(|| DensityField::drifting_pair(&p.domain));
    let mut spec = CoverageSpec::new(p.domain, density);
    spec.quadrature = p.quadrature;
    spec.switch_band = p.switch_band;
    spec
}

fn parse_value(v: &str) -> toml::Value {
    if let Ok(i) = v.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = v.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = v.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(v.to_string())
    }
}

fn set_path(doc: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or(Error::Config("empty sweep key".into()))?;
    let mut table = doc;
    for p in parents {
        table = table
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("sweep key segment `{p}` is not a table")))?;
    }
    // Integers given for float fields would fail to deserialize.
    let value = match (table.get(last), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(last.clone(), value);
    Ok(())
}

fn write_atomic<F>(dir: &Path, name: &str, fill: F) -> Result<PathBuf>
where
    F: FnOnce(&mut fs::File) -> Result<()>,
{
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| Error::Io(e.to_string()))?;
    Ok(target)
}

/// A scenario instantiated from a manifest.
pub enum BuiltScenario {
    Formation(FormationScenario),
    Coverage(CoverageScenario),
    Navigation(NavigationScenario),
    Pairwise(PairwiseScenario),
}

impl BuiltScenario {
    pub fn name(&self) -> &str {
        match self {
            BuiltScenario::Formation(s) => s.name(),
            BuiltScenario::Coverage(s) => s.name(),
            BuiltScenario::Navigation(s) => s.name(),
            BuiltScenario::Pairwise(s) => s.name(),
        }
    }

    /// The trace and its envelope budget (zero unless `calibrate`).
    pub fn simulate(&self, cfg: &SimConfig, calibrate: bool) -> Result<(SimulationTrace, f64)> {
        fn go<S: Scenario>(s: &S, cfg: &SimConfig, calibrate: bool) -> Result<(SimulationTrace, f64)> {
            if calibrate {
                let (trace, budget) = calibrate_integration_error(s, cfg)?;
                Ok((trace, budget.eps_int))
            } else {
                Ok((run(s, cfg)?, 0.0))
            }
        }
        match self {
            BuiltScenario::Formation(s) => go(s, cfg, calibrate),
            BuiltScenario::Coverage(s) => go(s, cfg, calibrate),
            BuiltScenario::Navigation(s) => go(s, cfg, calibrate),
            BuiltScenario::Pairwise(s) => go(s, cfg, calibrate),
        }
    }
}

pub struct RunOutcome {
    pub trace: SimulationTrace,
    pub metrics: Metrics,
    pub cells: Option<Vec<VoronoiCell>>,
}
