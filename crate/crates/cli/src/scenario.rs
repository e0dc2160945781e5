//! Scenario files: TOML with `[space]`, `[bundle]`, `[group]`, `[pullback]`
//! and `[checks]` sections. Matrices are lists of rows; an entry is a real
//! number or a `[re, im]` pair.

use std::collections::BTreeMap;
use std::sync::Arc;

use cpbundle::bundle::{self, Bundle, Cocycle};
use cpbundle::groups::{self, BundleMap, FiberGroup, GroupModel};
use cpbundle::linalg::{self, Mat, C64};
use cpbundle::ncpullback::{self, PullbackModule};
use cpbundle::space::{self, CoverSet, MatFunc, SampleSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

impl From<cpbundle::Error> for ScenarioError {
    fn from(e: cpbundle::Error) -> Self {
        ScenarioError::Validation(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub space: Option<SpaceSpec>,
    pub bundle: Option<BundleSpec>,
    pub group: Option<GroupSpec>,
    pub pullback: Option<PullbackSpec>,
    pub checks: ChecksSpec,
}

fn default_seed() -> u64 {
    7
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    /// interval, circle, torus, sphere, graph
    pub kind: String,
    pub points: Option<usize>,
    pub split: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub subdiv: Option<usize>,
    pub coords: Option<Vec<[f64; 3]>>,
    pub edges: Option<Vec<[usize; 2]>>,
    pub faces: Option<Vec<Vec<usize>>>,
    pub cover: Option<Vec<CoverSpec>>,
    pub limit_neighbors: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSpec {
    pub name: String,
    pub points: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

pub type MatrixSpec = Vec<Vec<Entry>>;

pub fn matrix_of(spec: &MatrixSpec) -> Result<Mat, ScenarioError> {
    let rows = spec.len();
    let cols = spec.first().map_or(0, |r| r.len());
    if rows == 0 || spec.iter().any(|r| r.len() != cols) {
        return Err(invalid("matrix rows must be non-empty and of equal length"));
    }
    Ok(Mat::from_fn(rows, cols, |i, j| match spec[i][j] {
        Entry::Real(x) => linalg::c(x),
        Entry::Complex([re, im]) => C64::new(re, im),
    }))
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpec {
    /// trivial, mobius, clutched, bott, bott_sum, cocycle
    pub preset: String,
    pub rank: Option<usize>,
    pub special: Option<bool>,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
}

/// Constant transition `u_ij` on the overlap of cover sets `i` and `j`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub i: usize,
    pub j: usize,
    pub matrix: MatrixSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    /// Q8, FULL_U, FULL_SU, trivial, cyclic, symmetric, inline
    pub preset: Option<String>,
    pub order: Option<usize>,
    pub gens: Option<Vec<MatrixSpec>>,
    /// Piecewise assignment by point index, `from` inclusive.
    #[serde(default)]
    pub pieces: Vec<GroupPiece>,
    /// Assignment on a cover set, expressed in that chart's local frame.
    #[serde(default)]
    pub charts: Vec<GroupChart>,
    /// Single-point overrides.
    #[serde(default)]
    pub points: Vec<GroupPoint>,
    /// group_constants, ord2, unitary_paths
    pub pool: Option<String>,
    pub pool_size: Option<usize>,
    /// Split point for the `ord2` and `unitary_paths` pools.
    pub omega: Option<usize>,
    /// Unitary perturbation of the acting generators (negative control).
    pub perturb: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupPiece {
    pub from: usize,
    pub preset: String,
    pub order: Option<usize>,
    pub gens: Option<Vec<MatrixSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupChart {
    pub chart: usize,
    pub preset: String,
    pub order: Option<usize>,
    pub gens: Option<Vec<MatrixSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupPoint {
    pub at: usize,
    pub preset: String,
    pub order: Option<usize>,
    pub gens: Option<Vec<MatrixSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackSpec {
    /// identity, double_cover, sheets, explicit
    pub fixture: String,
    pub sheets: Option<usize>,
    pub rotate: Option<bool>,
    pub y_space: Option<SpaceSpec>,
    pub base_map: Option<Vec<usize>>,
    pub phi: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct ChecksSpec {
    pub run: Vec<String>,
    #[serde(flatten)]
    pub params: BTreeMap<String, CheckParams>,
}

/// Per-check settings; unset fields fall back to module defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    pub rmax: Option<usize>,
    pub kmax: Option<usize>,
    pub search_level: Option<usize>,
    pub tol: Option<f64>,
    pub r: Option<usize>,
    pub s: Option<usize>,
    pub arrows: Option<usize>,
    pub expect: Option<toml::Value>,
    pub glued: Option<bool>,
    /// Glue closure fibers instead of point fibers.
    pub closure: Option<bool>,
    pub sg_equals_g: Option<bool>,
    #[serde(default)]
    pub accept: Vec<String>,
    #[serde(default)]
    pub reject: Vec<String>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if sc.checks.run.is_empty() {
        return Err(invalid("[checks] run list is empty"));
    }
    for name in sc.checks.run.iter().chain(sc.checks.params.keys()) {
        if !crate::checks::CHECK_NAMES.contains(&name.as_str()) {
            return Err(invalid(format!("unknown check `{name}`")));
        }
    }
    if sc.tol.is_nan() || sc.tol <= 0.0 {
        return Err(invalid("tol must be positive"));
    }
    Ok(sc)
}

pub fn build_space(spec: &SpaceSpec) -> Result<SampleSpace, ScenarioError> {
    let need = |v: Option<usize>, what: &str| v.ok_or_else(|| invalid(format!("[space] {} needs `{what}`", spec.kind)));
    Ok(match spec.kind.as_str() {
        "interval" => space::make_interval_space(need(spec.points, "points")?, spec.split)?,
        "circle" => space::make_circle_space(need(spec.points, "points")?)?,
        "torus" => space::make_torus_space(need(spec.rows, "rows")?, need(spec.cols, "cols")?)?,
        "sphere" => space::make_sphere_space(need(spec.subdiv, "subdiv")?)?,
        "graph" => {
            let coords = spec.coords.clone().ok_or_else(|| invalid("[space] graph needs `coords`"))?;
            let edges: Vec<(usize, usize)> = spec.edges.clone().unwrap_or_default().iter().map(|e| (e[0], e[1])).collect();
            let cover = match &spec.cover {
                Some(c) => c
                    .iter()
                    .map(|c| CoverSet {
                        name: c.name.clone(),
                        points: c.points.clone(),
                    })
                    .collect(),
                None => vec![CoverSet {
                    name: "all".into(),
                    points: (0..coords.len()).collect(),
                }],
            };
            SampleSpace::new(
                coords,
                &edges,
                spec.faces.clone().unwrap_or_default(),
                cover,
                spec.limit_neighbors.clone(),
            )?
        }
        other => return Err(invalid(format!("unknown space kind `{other}`"))),
    })
}

/// The bundle and, for direct sums, its first summand.
pub fn build_bundle(
    spec: &BundleSpec,
    space_spec: Option<&SpaceSpec>,
    rank_override: Option<usize>,
) -> Result<(Arc<Bundle>, Option<Arc<Bundle>>), ScenarioError> {
    let space_spec = space_spec.ok_or_else(|| invalid("[bundle] needs a [space] section"))?;
    let space = Arc::new(build_space(space_spec)?);
    let rank = rank_override.or(spec.rank);
    let want_kind = |kind: &str| {
        if space_spec.kind == kind {
            Ok(())
        } else {
            Err(invalid(format!("bundle preset `{}` needs a {kind} space", spec.preset)))
        }
    };
    Ok(match spec.preset.as_str() {
        "trivial" => (Bundle::trivial(space, rank.unwrap_or(2))?, None),
        "mobius" => {
            want_kind("circle")?;
            (bundle::mobius_line(space.len())?, None)
        }
        "clutched" => {
            want_kind("circle")?;
            (bundle::clutched_circle_rank2(space.len(), spec.special.unwrap_or(false))?, None)
        }
        "bott" => {
            want_kind("sphere")?;
            (bundle::bott_line_on(space)?, None)
        }
        "bott_sum" => {
            want_kind("sphere")?;
            let line = bundle::bott_line_on(space)?;
            let sum = line.direct_sum(&*line.dual()?)?;
            (sum, Some(line))
        }
        "cocycle" => {
            let d = rank.ok_or_else(|| invalid("cocycle bundle needs `rank`"))?;
            let mut cocycle = Cocycle::new();
            for t in &spec.transitions {
                let m = matrix_of(&t.matrix)?;
                cocycle.insert(t.i, t.j, MatFunc::constant(space.len(), &m));
            }
            (Bundle::from_cocycle(space, d, &cocycle)?, None)
        }
        other => return Err(invalid(format!("unknown bundle preset `{other}`"))),
    })
}

fn preset_group(preset: &str, order: Option<usize>, gens: &Option<Vec<MatrixSpec>>, d: usize) -> Result<FiberGroup, ScenarioError> {
    Ok(match preset {
        "FULL_U" => FiberGroup::FullU,
        "FULL_SU" => FiberGroup::FullSU,
        "trivial" => FiberGroup::trivial(d),
        "Q8" => {
            if d != 2 {
                return Err(invalid("Q8 acts on rank 2"));
            }
            FiberGroup::finite("Q8", groups::quaternion_gens())
        }
        "cyclic" => {
            let m = order.ok_or_else(|| invalid("cyclic group needs `order`"))?;
            FiberGroup::finite(&format!("Z{m}"), groups::cyclic_gens(m, d))
        }
        "symmetric" => FiberGroup::finite(&format!("S{d}"), groups::symmetric_gens(d)),
        "inline" => {
            let specs = gens.as_ref().ok_or_else(|| invalid("inline group needs `gens`"))?;
            let mats = specs.iter().map(matrix_of).collect::<Result<Vec<_>, _>>()?;
            FiberGroup::finite("inline", mats)
        }
        other => return Err(invalid(format!("unknown group preset `{other}`"))),
    })
}

/// Conjugates finite generators from a chart frame into bundle frame coordinates.
fn in_chart(group: FiberGroup, bundle: &Bundle, chart: usize, x: usize) -> Result<FiberGroup, ScenarioError> {
    let FiberGroup::Finite { name, gens } = group else {
        return Ok(group);
    };
    let charts = bundle.charts().ok_or_else(|| invalid("chart-relative groups need a bundle with charts"))?;
    let f = charts
        .local_frame(chart, x)
        .ok_or_else(|| invalid(format!("point {x} is not in chart {chart}")))?;
    let w = groups::polar_unitary(&(bundle.frame(x).adjoint() * f));
    Ok(FiberGroup::finite(&name, gens.iter().map(|g| &w * g * w.adjoint()).collect()))
}

pub struct GroupSetup {
    pub model: GroupModel,
    /// Generators acting at each point, perturbed when requested.
    pub acting: Vec<Vec<Mat>>,
}

pub fn build_group(spec: &GroupSpec, bundle: &Arc<Bundle>, seed: u64) -> Result<GroupSetup, ScenarioError> {
    let d = bundle.rank();
    let n = bundle.points();
    let base = match &spec.preset {
        Some(p) => Some(preset_group(p, spec.order, &spec.gens, d)?),
        None => None,
    };
    let mut pieces = spec.pieces.clone();
    pieces.sort_by_key(|p| p.from);
    let mut assigned: Vec<FiberGroup> = Vec::with_capacity(n);
    for x in 0..n {
        let mut g = base.clone();
        if let Some(p) = pieces.iter().rev().find(|p| p.from <= x) {
            g = Some(preset_group(&p.preset, p.order, &p.gens, d)?);
        }
        for c in &spec.charts {
            if c.chart >= bundle.space().cover().len() {
                return Err(invalid(format!("no chart {}", c.chart)));
            }
            if bundle.space().in_cover(c.chart, x) {
                g = Some(in_chart(preset_group(&c.preset, c.order, &c.gens, d)?, bundle, c.chart, x)?);
            }
        }
        for p in &spec.points {
            if p.at >= n {
                return Err(invalid(format!("group override at {} is outside the space", p.at)));
            }
            if p.at == x {
                g = Some(preset_group(&p.preset, p.order, &p.gens, d)?);
            }
        }
        assigned.push(g.ok_or_else(|| invalid(format!("no group assigned at point {x}")))?);
    }
    let pool = match spec.pool.as_deref() {
        None => Vec::new(),
        Some(kind) => build_pool(kind, spec, &assigned, d, n, seed)?,
    };
    let acting = assigned
        .iter()
        .map(|g| {
            let gens = acting_generators(g, d, seed);
            match spec.perturb {
                Some(eps) => perturb(gens, eps, d),
                None => gens,
            }
        })
        .collect();
    let model = GroupModel::from_fn(bundle.clone(), |x| assigned[x].clone(), pool)?;
    Ok(GroupSetup { model, acting })
}

/// Finite generators, or two seeded random elements for the full groups.
fn acting_generators(g: &FiberGroup, d: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    match g {
        FiberGroup::Finite { gens, .. } => gens.clone(),
        FiberGroup::FullU => (0..2).map(|_| linalg::random_unitary(&mut rng, d)).collect(),
        FiberGroup::FullSU => (0..2).map(|_| linalg::random_special_unitary(&mut rng, d)).collect(),
    }
}

/// `g₀ ↦ g₀ exp(iεK)` for a fixed Hermitian `K` with unit entries off the diagonal.
fn perturb(mut gens: Vec<Mat>, eps: f64, d: usize) -> Vec<Mat> {
    let k = Mat::from_fn(d, d, |i, j| if i == j { linalg::c(0.0) } else { linalg::c(1.0) });
    let kick = unitary_exp(&k, eps);
    if let Some(g) = gens.first_mut() {
        *g = &*g * kick;
    }
    gens
}

/// `exp(i t H)` for Hermitian `H`.
pub fn unitary_exp(h: &Mat, t: f64) -> Mat {
    let (vals, vecs) = linalg::eigh(h);
    let phases = Mat::from_fn(vals.len(), vals.len(), |i, j| {
        if i == j {
            C64::from_polar(1.0, t * vals[i])
        } else {
            linalg::c(0.0)
        }
    });
    &vecs * phases * vecs.adjoint()
}

fn random_traceless_hermitian(rng: &mut ChaCha8Rng, d: usize) -> Mat {
    let a = linalg::random_matrix(rng, d, d);
    let h = (&a + a.adjoint()) * linalg::c(0.5);
    let tr = h.trace() / linalg::c(d as f64);
    h - linalg::eye(d) * tr
}

/// Candidate maps for section-group checks.
///
/// `group_constants`: constant maps onto the elements of the group at point 0,
/// padded with constant special unitaries outside it.
/// `ord2`: for a group that is finite up to `omega` and special unitary beyond,
/// a quarter constants in the finite group, a quarter equal to such a constant
/// up to `omega` then moving into `SU(d)`, a quarter constant outside the
/// finite group, a quarter leaving it on a bump below `omega`.
/// `unitary_paths`: `exp(i f(x) H)` with `f(omega) = 0` for half and not for the other half.
fn build_pool(kind: &str, spec: &GroupSpec, assigned: &[FiberGroup], d: usize, n: usize, seed: u64) -> Result<Vec<BundleMap>, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = spec.pool_size.unwrap_or(32);
    let finite_at = |x: usize| -> Result<Vec<Mat>, ScenarioError> {
        match &assigned[x] {
            FiberGroup::Finite { gens, .. } => Ok(groups::enumerate_group(gens, 512)?),
            other => Err(invalid(format!("pool `{kind}` needs a finite group at point {x}, found {}", other.label()))),
        }
    };
    let outside = |rng: &mut ChaCha8Rng, elems: &[Mat]| loop {
        let g = linalg::random_special_unitary(rng, d);
        if elems.iter().all(|e| linalg::diff_abs(e, &g) > 1e-3) {
            return g;
        }
    };
    let mut pool = Vec::new();
    match kind {
        "group_constants" => {
            let elems = finite_at(0)?;
            for (k, g) in elems.iter().enumerate() {
                pool.push(BundleMap::constant(&format!("in_{k}"), n, g));
            }
            let mut k = 0;
            while pool.len() < size {
                pool.push(BundleMap::constant(&format!("outside_{k}"), n, &outside(&mut rng, &elems)));
                k += 1;
            }
        }
        "ord2" => {
            let omega = spec.omega.ok_or_else(|| invalid("pool `ord2` needs `omega`"))?;
            if omega + 1 >= n {
                return Err(invalid("omega must lie inside the space"));
            }
            let elems = finite_at(0)?;
            let quarter = size / 4;
            for k in 0..quarter {
                pool.push(BundleMap::constant(&format!("in_const_{k}"), n, &elems[k % elems.len()]));
            }
            for k in 0..quarter {
                let g0 = elems[(k + 3) % elems.len()].clone();
                let h = random_traceless_hermitian(&mut rng, d);
                let values = (0..n)
                    .map(|x| {
                        let t = x.saturating_sub(omega) as f64 / (n - omega) as f64;
                        &g0 * unitary_exp(&h, 3.0 * t)
                    })
                    .collect();
                pool.push(BundleMap::new(&format!("in_tail_{k}"), values));
            }
            for k in 0..quarter {
                pool.push(BundleMap::constant(&format!("leave_const_{k}"), n, &outside(&mut rng, &elems)));
            }
            for k in 0..size - 3 * quarter {
                let g0 = elems[k % elems.len()].clone();
                let h = random_traceless_hermitian(&mut rng, d);
                let centre = (k * 7 + 3) % omega.max(1);
                let values = (0..n)
                    .map(|x| {
                        let dist = (x as f64 - centre as f64).abs();
                        let bump = (1.0 - dist / 3.0).max(0.0);
                        &g0 * unitary_exp(&h, bump)
                    })
                    .collect();
                pool.push(BundleMap::new(&format!("leave_bump_{k}"), values));
            }
        }
        "unitary_paths" => {
            let omega = spec.omega.ok_or_else(|| invalid("pool `unitary_paths` needs `omega`"))?;
            for k in 0..size {
                let h = linalg::random_matrix(&mut rng, d, d);
                let h = (&h + h.adjoint()) * linalg::c(0.5);
                let fixed = k % 2 == 0;
                let values = (0..n)
                    .map(|x| {
                        let t = (x as f64 - omega as f64) / n as f64;
                        let f = if fixed { t } else { t + 0.5 };
                        unitary_exp(&h, f)
                    })
                    .collect();
                let name = if fixed { format!("fixed_{k}") } else { format!("moving_{k}") };
                pool.push(BundleMap::new(&name, values));
            }
        }
        other => return Err(invalid(format!("unknown pool `{other}`"))),
    }
    Ok(pool)
}

pub fn build_pullback(spec: &PullbackSpec, bundle: &Arc<Bundle>) -> Result<PullbackModule, ScenarioError> {
    Ok(match spec.fixture.as_str() {
        "identity" => ncpullback::identity_fixture(bundle.clone())?,
        "double_cover" => ncpullback::double_cover_fixture(bundle.clone())?,
        "sheets" => ncpullback::sheets_fixture(bundle.clone(), spec.sheets.unwrap_or(2), spec.rotate.unwrap_or(false))?,
        "explicit" => {
            let y = spec.y_space.as_ref().ok_or_else(|| invalid("explicit pullback needs `y_space`"))?;
            let y = Arc::new(build_space(y)?);
            let base_map = spec.base_map.clone().ok_or_else(|| invalid("explicit pullback needs `base_map`"))?;
            let phi = spec.phi.clone().unwrap_or_else(|| (0..y.len()).collect());
            ncpullback::build_ncpullback(bundle.clone(), y, base_map, phi)?
        }
        other => return Err(invalid(format!("unknown pullback fixture `{other}`"))),
    })
}
