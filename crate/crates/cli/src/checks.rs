//! Check dispatch: each named check turns the scenario objects into report
//! records. Errors raised by a check become failing records.

use std::sync::Arc;

use cpbundle::bundle::Bundle;
use cpbundle::cpalg::{self, AlgElem, Arrow, FieldCtx};
use cpbundle::crossed;
use cpbundle::groups::{self, FiberGroup, GroupModel, SpectralAnalysis, SpectralFiber};
use cpbundle::linalg::{self, Mat};
use cpbundle::ncpullback::{self, PullbackModule};
use cpbundle::report::CheckRecord;
use cpbundle::space::MatFunc;
use cpbundle::symmetry;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scenario::CheckParams;

pub const CHECK_NAMES: &[&str] = &[
    "genrel",
    "flip",
    "antisym",
    "scp",
    "lem21",
    "lem22",
    "ex_cp",
    "chern",
    "ex_sue",
    "dual_table",
    "spectral",
    "local_triviality",
    "section_group",
    "gluing",
    "amenability",
    "commutant",
    "invariance",
    "tensor_action",
    "pullback_structure",
    "cross_bp",
];

/// Objects a scenario provides to its checks.
pub struct Subjects {
    pub bundle: Option<Arc<Bundle>>,
    pub summand: Option<Arc<Bundle>>,
    pub model: Option<GroupModel>,
    pub acting: Vec<Vec<Mat>>,
    pub pullback: Option<PullbackModule>,
    pub subdiv: Option<usize>,
}

pub struct Settings {
    pub seed: u64,
    pub tol: f64,
    pub rmax: Option<usize>,
}

type Outcome = Result<Vec<CheckRecord>, String>;

pub fn run_check(name: &str, subj: &Subjects, params: &CheckParams, set: &Settings) -> Vec<CheckRecord> {
    let tol = params.tol.unwrap_or(set.tol);
    let rmax = |default: usize| set.rmax.or(params.rmax).unwrap_or(default);
    let seed = set.seed;
    let res: Outcome = match name {
        "genrel" => with_bundle(subj, |b| genrel(b, tol)),
        "flip" => with_bundle(subj, |b| flip(b, rmax(3), params.arrows.unwrap_or(50), seed, tol)),
        "antisym" => with_bundle(subj, |b| antisym(b, tol)),
        "scp" => with_bundle(subj, |b| scp(b, tol)),
        "lem21" => with_bundle(subj, |b| err(crossed::verify_lem21(b, rmax(3), seed, tol))),
        "lem22" => with_bundle(subj, |b| err(crossed::verify_lem22(b, params.kmax.unwrap_or(2), rmax(4), seed, tol))),
        "ex_cp" => with_bundle(subj, |b| ex_cp(b, subj.summand.as_ref(), seed, tol)),
        "chern" => with_bundle(subj, |b| chern(b, params)),
        "ex_sue" => match subj.subdiv {
            Some(k) => err(crossed::verify_ex_sue(k, rmax(4))),
            None => Err("ex_sue needs a sphere space".into()),
        },
        "dual_table" => with_model(subj, |m| dual_table(m, rmax(3), params)),
        "spectral" => with_model(subj, |m| spectral(m, rmax(m.rank().max(2)), params)),
        "local_triviality" => with_model(subj, |m| local_triviality(m, rmax(m.rank().max(2)), params)),
        "section_group" => with_model(subj, |m| section_group(m, rmax(m.rank().max(2)), params)),
        "gluing" => with_model(subj, |m| gluing(m, params)),
        "amenability" => with_model(subj, |m| amenability(m, rmax(2), params, tol)),
        "commutant" => with_model(subj, |m| commutant(m, params)),
        "invariance" => with_model(subj, |m| invariance(m, &subj.acting, rmax(2), tol)),
        "tensor_action" => with_pullback(subj, |p, m| err(ncpullback::check_tensor_action(p, m, rmax(2)).map(|r| vec![r]))),
        "pullback_structure" => match &subj.pullback {
            Some(p) => err(ncpullback::verify_pullback_structure(p, rmax(2), seed, tol)),
            None => Err("check needs a [pullback] section".into()),
        },
        "cross_bp" => with_pullback(subj, |p, m| err(ncpullback::verify_cross_bp(p, m, rmax(2), seed, tol))),
        other => Err(format!("unknown check `{other}`")),
    };
    res.unwrap_or_else(|e| vec![CheckRecord::flag(name, "check could not run", false, e)])
}

fn err<T>(r: cpbundle::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn with_bundle(subj: &Subjects, f: impl FnOnce(&Arc<Bundle>) -> Outcome) -> Outcome {
    match &subj.bundle {
        Some(b) => f(b),
        None => Err("check needs a [bundle] section".into()),
    }
}

fn with_model(subj: &Subjects, f: impl FnOnce(&GroupModel) -> Outcome) -> Outcome {
    match &subj.model {
        Some(m) => f(m),
        None => Err("check needs a [group] section".into()),
    }
}

fn with_pullback(subj: &Subjects, f: impl FnOnce(&PullbackModule, &GroupModel) -> Outcome) -> Outcome {
    match (&subj.pullback, &subj.model) {
        (Some(p), Some(m)) => f(p, m),
        _ => Err("check needs [pullback] and [group] sections".into()),
    }
}

fn genrel(b: &Arc<Bundle>, tol: f64) -> Outcome {
    let anchor = "generators and relations";
    let gens = cpalg::section_elems(b);
    let secs = b.generators();
    let mut inner_dev: f64 = 0.0;
    for (l, gl) in gens.iter().enumerate() {
        for (m, gm) in gens.iter().enumerate() {
            let lhs = err(gl.adjoint().mul(gm))?;
            let ip = err(secs[l].inner(&secs[m]))?;
            let rhs = AlgElem::function(b, &ip);
            inner_dev = inner_dev.max(lhs.max_diff(&rhs));
        }
    }
    let mut sum: Option<AlgElem> = None;
    for g in &gens {
        let t = err(g.mul(&g.adjoint()))?;
        sum = Some(match sum {
            None => t,
            Some(s) => err(s.add(&t))?,
        });
    }
    let support = sum.ok_or("bundle has no generators")?;
    let unit_dev = support.max_diff(&AlgElem::identity(b, 1));
    Ok(vec![
        CheckRecord::residual("ψ_l* ψ_m = ⟨ψ_l, ψ_m⟩", anchor, inner_dev, tol),
        CheckRecord::residual("Σ ψ_l ψ_l* = 1", anchor, unit_dev, tol)
            .with_detail(format!("{} generators, rank {}", gens.len(), b.rank())),
    ])
}

/// `θ(s,1) t = σ(t) θ(r,1)` on seeded random arrows; ambient when the
/// ambient tensor powers stay small, frame coordinates otherwise.
fn flip(b: &Arc<Bundle>, rmax: usize, count: usize, seed: u64, tol: f64) -> Outcome {
    let anchor = "permutation symmetry of σ";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = b.rank();
    let n = b.ambient_dim();
    let ctx = FieldCtx::plain(d);
    let mut worst: f64 = 0.0;
    let mut ambient_runs = 0;
    for k in 0..count {
        let r = 1 + k % rmax.max(1);
        let s = 1 + (k / rmax.max(1)) % rmax.max(1);
        let body = MatFunc::from_fn(b.points(), n.pow(s as u32), n.pow(r as u32), |_| {
            linalg::random_matrix(&mut rng, n.pow(s as u32), n.pow(r as u32))
        });
        let t = AlgElem::from_arrow(Arrow::squeeze(b.clone(), r, s, &body));
        if n.pow((r.max(s) + 1) as u32) <= 64 {
            let lhs = err(symmetry::theta_rs(b, s, 1).mul(&t))?;
            let rhs = err(t.sigma().mul(&symmetry::theta_rs(b, r, 1)))?;
            worst = worst.max(lhs.max_diff(&rhs));
            ambient_runs += 1;
        } else {
            let f = t.to_field();
            let th_s = cpalg::Field::constant(b.points(), s + 1, 0, &symmetry::theta_perm_fiber(d, &symmetry::block_swap_perm(s, 1)));
            let th_r = cpalg::Field::constant(b.points(), r + 1, 0, &symmetry::theta_perm_fiber(d, &symmetry::block_swap_perm(r, 1)));
            worst = worst.max(ctx.max_diff(&ctx.mul(&th_s, &f), &ctx.mul(&ctx.sigma(&f), &th_r)));
        }
    }
    Ok(vec![CheckRecord::residual("θ(s,1) t = σ(t) θ(r,1)", anchor, worst, tol).with_detail(format!(
        "{count} random arrows, r, s ≤ {rmax}, {ambient_runs} in ambient coordinates"
    ))])
}

fn antisym(b: &Arc<Bundle>, tol: f64) -> Outcome {
    let mut out = err(symmetry::check_antisym_relations(b, tol))?;
    let dev = match symmetry::support_projection(b) {
        Ok((_, dev)) => dev,
        Err(e) => return Err(e.to_string()),
    };
    out.push(CheckRecord::residual(
        "Σ R_i R_i* = (1/d!) Σ sign(p) θ(p)",
        "antisymmetric local sections",
        dev,
        tol,
    ));
    Ok(out)
}

fn scp(b: &Arc<Bundle>, tol: f64) -> Outcome {
    let d = b.rank();
    let rs = err(symmetry::antisym_local(b))?;
    let mut dev: f64 = 0.0;
    let mut observed = None;
    for a in &rs {
        for c in &rs {
            let chk = err(symmetry::check_scp_pair(a, c))?;
            dev = dev.max(chk.max_deviation);
            if observed.is_none() {
                observed = chk.observed_value;
            }
        }
    }
    let expected = symmetry::scp_constant(d);
    let value = observed.unwrap_or(f64::NAN);
    Ok(vec![
        CheckRecord::residual("R* σ(R') = λ R* R'", "special conjugate property", dev, tol).with_detail(format!(
            "{} local sections, rank {d}",
            rs.len()
        )),
        CheckRecord::residual(
            "special conjugate value",
            "special conjugate property",
            (value - expected).abs(),
            tol,
        )
        .with_detail(format!("value {value:.12}, expected (−1)^(d−1)/d = {expected:.12}")),
    ])
}

fn ex_cp(b: &Arc<Bundle>, summand: Option<&Arc<Bundle>>, seed: u64, tol: f64) -> Outcome {
    let p = match summand {
        Some(first) => err(crossed::first_summand_projection(b, first))?,
        None => {
            if !b.label().starts_with("trivial") {
                return Err("rank-one projection is only preset for trivial bundles and direct sums".into());
            }
            let n = b.ambient_dim();
            let mut e = Mat::zeros(n, n);
            e[(0, 0)] = linalg::c(1.0);
            AlgElem::from_arrow(err(Arrow::new(b.clone(), 1, 1, MatFunc::constant(b.points(), &e)))?)
        }
    };
    err(crossed::verify_ex_cp(b, &p, seed, tol))
}

fn chern(b: &Arc<Bundle>, params: &CheckParams) -> Outcome {
    let res = err(crossed::chern_detect(b))?;
    let detail = format!(
        "number {}, winding {:.6}, section defect {:.3e}, trivial {}, {}",
        res.number, res.winding, res.max_defect, res.trivial, res.method
    );
    let passed = match &params.expect {
        None => true,
        Some(toml::Value::Integer(k)) => res.number == *k,
        Some(toml::Value::String(s)) if s == "trivial" => res.trivial,
        Some(toml::Value::String(s)) if s == "nontrivial" => !res.trivial,
        Some(toml::Value::String(s)) if s == "unit" => res.number.abs() == 1,
        Some(other) => return Err(format!("unsupported chern expectation {other}")),
    };
    Ok(vec![CheckRecord::flag("Chern detection", "Chern criterion", passed, detail)])
}

fn expected_table(kind: &str, model: &GroupModel, x: usize, r: usize, s: usize) -> Result<usize, String> {
    let d = model.rank();
    Ok(match kind {
        "U" => groups::u_span(d, r, s).ncols(),
        "SU" => groups::su_span(d, r, s).ncols(),
        "model" => model.fiber_space(x, r, s).ncols(),
        other => return Err(format!("unknown dual table expectation `{other}`")),
    })
}

fn dual_table(model: &GroupModel, rmax: usize, params: &CheckParams) -> Outcome {
    let rmax = rmax.max(model.rank());
    let an = err(SpectralAnalysis::new(model, rmax))?;
    let table = an.dual_table();
    let kind = match &params.expect {
        Some(toml::Value::String(s)) => s.clone(),
        None => "model".into(),
        Some(other) => return Err(format!("unsupported dual table expectation {other}")),
    };
    let mut bad = Vec::new();
    for x in 0..model.points() {
        for r in 0..=rmax {
            for s in 0..=rmax {
                if table.entry(r, s, x) != expected_table(&kind, model, x, r, s)? {
                    bad.push(format!("x={x} ({r},{s})"));
                }
            }
        }
    }
    let diag: Vec<usize> = (0..=rmax).map(|r| table.entry(r, r, 0)).collect();
    let detail = if bad.is_empty() {
        format!("matches the {kind} table at every point, r, s ≤ {rmax}")
    } else {
        format!("{} mismatches, first {}", bad.len(), bad[0])
    };
    Ok(vec![CheckRecord::flag("dual dimension table", "dual of the group", bad.is_empty(), detail).with_dims(diag)])
}

fn fiber_labels(an: &SpectralAnalysis<'_>, n: usize) -> Vec<String> {
    (0..n).map(|x| an.spectral_fiber(x, 1e-9).label()).collect()
}

fn jumps(labels: &[String]) -> Vec<usize> {
    (1..labels.len()).filter(|&x| labels[x] != labels[x - 1]).collect()
}

/// Expected spectral fiber per point: `FULL_U`, `FULL_SU`, or `evaluation`
/// (the pool members whose value lies in the declared group at that point).
fn spectral(model: &GroupModel, rmax: usize, params: &CheckParams) -> Outcome {
    let an = err(SpectralAnalysis::new(model, rmax))?;
    let n = model.points();
    let segments: Vec<(usize, String)> = match &params.expect {
        Some(toml::Value::String(s)) => vec![(0, s.clone())],
        Some(toml::Value::Array(items)) => items
            .iter()
            .map(|it| {
                let pair = it.as_array().filter(|a| a.len() == 2);
                match pair.map(|a| (a[0].as_integer(), a[1].as_str())) {
                    Some((Some(from), Some(kind))) if from >= 0 => Ok((from as usize, kind.to_string())),
                    _ => Err(format!("spectral segment must be [from, kind], got {it}")),
                }
            })
            .collect::<Result<_, _>>()?,
        None => return Err("spectral check needs `expect`".into()),
        Some(other) => return Err(format!("unsupported spectral expectation {other}")),
    };
    let mut bad = Vec::new();
    for x in 0..n {
        let kind = segments
            .iter()
            .filter(|(from, _)| *from <= x)
            .max_by_key(|(from, _)| *from)
            .map(|(_, k)| k.as_str())
            .ok_or_else(|| format!("no spectral expectation covers point {x}"))?;
        let got = an.spectral_fiber(x, 1e-9);
        let ok = match kind {
            "FULL_U" => got == SpectralFiber::FullU,
            "FULL_SU" => got == SpectralFiber::FullSU,
            "evaluation" => {
                let mut want = Vec::new();
                for (k, g) in model.pool().iter().enumerate() {
                    if err(model.evaluation_contains(x, &g.values[x], 1e-9))? {
                        want.push(k);
                    }
                }
                matches!(&got, SpectralFiber::Pool { members, .. } if *members == want && !want.is_empty())
            }
            other => return Err(format!("unknown spectral kind `{other}`")),
        };
        if !ok {
            bad.push(format!("x={x}: {} (expected {kind})", got.label()));
        }
    }
    let labels = fiber_labels(&an, n);
    let jump = jumps(&labels);
    let mut detail = if jump.is_empty() {
        format!("{} everywhere", labels[0])
    } else {
        let parts: Vec<String> = jump.iter().map(|&x| format!("{} → {} at {x}", labels[x - 1], labels[x])).collect();
        format!("fiber jump: {}", parts.join(", "))
    };
    if let Some(first) = bad.first() {
        detail = format!("{detail}; {} mismatches, first {first}", bad.len());
    }
    Ok(vec![CheckRecord::flag("spectral fibers", "spectral bundle", bad.is_empty(), detail).with_dims(jump)])
}

fn local_triviality(model: &GroupModel, rmax: usize, params: &CheckParams) -> Outcome {
    let an = err(SpectralAnalysis::new(model, rmax))?;
    let labels = fiber_labels(&an, model.points());
    let table = an.dual_table();
    let constant_fibers = labels.iter().all(|l| *l == labels[0]) && table.non_constant().is_empty();
    let want = match &params.expect {
        Some(toml::Value::Boolean(b)) => *b,
        None => true,
        Some(other) => return Err(format!("unsupported local triviality expectation {other}")),
    };
    let mut kinds = labels.clone();
    kinds.dedup();
    Ok(vec![CheckRecord::flag(
        "spectral bundle has constant fibers",
        "local triviality of the spectral bundle",
        constant_fibers == want,
        format!("constant: {constant_fibers}, expected {want}; fiber types {kinds:?}; non-constant table entries {:?}", table.non_constant()),
    )])
}

/// `SG = G` on the pool, plus named maps required inside or outside `SG`
/// (matched by name prefix).
fn section_group(model: &GroupModel, rmax: usize, params: &CheckParams) -> Outcome {
    if model.pool().is_empty() {
        return Err("section group check needs a pool".into());
    }
    let an = err(SpectralAnalysis::new(model, rmax))?;
    let sg = an.section_group(1e-9);
    let g = err(an.evaluation_group(1e-9))?;
    let names: Vec<&str> = model.pool().iter().map(|m| m.name.as_str()).collect();
    let anchor = "sections of the spectral bundle";
    let want_equal = params.sg_equals_g.unwrap_or(true);
    let mut out = vec![CheckRecord::flag(
        if want_equal { "SG equals G on the pool" } else { "SG strictly contains G on the pool" },
        anchor,
        (sg == g) == want_equal && g.iter().all(|k| sg.contains(k)),
        format!("|pool| = {}, |G| = {}, |SG| = {}", names.len(), g.len(), sg.len()),
    )
    .with_dims(vec![names.len(), g.len(), sg.len()])];
    for (prefixes, inside) in [(&params.accept, true), (&params.reject, false)] {
        for prefix in prefixes {
            let idx: Vec<usize> = (0..names.len()).filter(|&k| names[k].starts_with(prefix.as_str())).collect();
            let ok = !idx.is_empty() && idx.iter().all(|k| sg.contains(k) == inside);
            out.push(CheckRecord::flag(
                &format!("maps `{prefix}*` {} sections", if inside { "are" } else { "are not" }),
                anchor,
                ok,
                format!("{} maps", idx.len()),
            ));
        }
    }
    Ok(out)
}

fn gluing(model: &GroupModel, params: &CheckParams) -> Outcome {
    let (r, s) = (params.r.unwrap_or(2), params.s.unwrap_or(2));
    let closure = params.closure.unwrap_or(false);
    let inv = if closure {
        let fibers = (0..model.points()).map(|x| model.closure_fiber(x, r, s)).collect();
        groups::InvariantSpace::assemble(model.bundle(), r, s, fibers)
    } else {
        model.invariant_arrows(r, s)
    };
    let what = if closure { "invariant sections" } else { "fiberwise invariant arrows" };
    let want = params.glued.unwrap_or(true);
    Ok(vec![CheckRecord::flag(
        &format!("{what} ({r},{s}) form a bundle"),
        "gluing of invariant fibers",
        inv.gluing.glued == want,
        format!("glued: {}, expected {want}; {}", inv.gluing.glued, inv.gluing.detail),
    )
    .with_dims(inv.fiber_dims())])
}

fn amenability(model: &GroupModel, rmax: usize, params: &CheckParams, tol: f64) -> Outcome {
    let d = model.rank();
    let mut out = Vec::new();
    for r in 0..=rmax {
        for s in 0..=rmax {
            let level = params.search_level.unwrap_or(r.max(s) + d);
            let chk = err(groups::check_amenability(model, r, s, level, 2))?;
            let mut rec = CheckRecord::dims(
                &format!("invariants equal intertwiners of σ_G at ({r},{s})"),
                "amenability",
                chk.fiber_dims_intertwiner.clone(),
                &chk.fiber_dims_invariant,
            )
            .with_residual(chk.max_residual);
            rec.passed &= chk.equal && chk.max_residual < tol;
            rec.dims = vec![chk.fiber_dims_invariant[0], chk.fiber_dims_intertwiner[0]];
            out.push(rec);
        }
    }
    Ok(out)
}

fn commutant(model: &GroupModel, params: &CheckParams) -> Outcome {
    let level = params.search_level.unwrap_or(3);
    let d = model.rank();
    let perms = groups::relative_commutant_dim(d, level, true, &[]);
    let dims = groups::check_relative_commutant(model, level);
    Ok(vec![
        CheckRecord::dims("degree-zero commutant of the permutations", "relative commutant", vec![perms], &[1])
            .with_detail(format!("level {}", level - 1)),
        CheckRecord::dims(
            "degree-zero commutant of the invariant algebra",
            "relative commutant",
            dims.clone(),
            &vec![1; dims.len()],
        ),
    ])
}

/// The declared invariant spaces are fixed by the acting generators.
fn invariance(model: &GroupModel, acting: &[Vec<Mat>], rmax: usize, tol: f64) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut at = (0, 0, 0);
    for x in 0..model.points() {
        if x > 0 && model.group_at(x).same(model.group_at(x - 1)) && acting[x] == acting[x - 1] {
            continue;
        }
        for r in 0..=rmax {
            for s in 0..=rmax {
                let res = groups::invariance_residual(&acting[x], r, s, &model.fiber_space(x, r, s));
                if res > worst {
                    worst = res;
                    at = (x, r, s);
                }
            }
        }
    }
    let label = match model.group_at(0) {
        FiberGroup::Finite { name, .. } => name.clone(),
        g => g.label(),
    };
    Ok(vec![CheckRecord::residual("invariant arrows are fixed by the generators", "group action on arrows", worst, tol)
        .with_detail(format!("group {label}, worst at x={} ({},{})", at.0, at.1, at.2))])
}
