//! Crossed-product relations checked inside the ambient algebra: the
//! universal relations, the rank-one shift example, the unitary and special
//! unitary invariant algebras, and discrete Chern detection.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{self, Bundle, Section};
use crate::cpalg::{AlgElem, Arrow, Endomorphism, FieldCtx};
use crate::error::{Error, Result};
use crate::groups::{self, FiberGroup, GroupModel};
use crate::linalg::{self, Mat, C64};
use crate::report::CheckRecord;
use crate::space::{Func, MatFunc, SampleSpace};
use crate::symmetry;

/// A finitely generated bimodule inside the ambient algebra, with its inner
/// products computed independently of the algebra product.
#[derive(Clone, Debug)]
pub struct CpModule {
    pub name: String,
    pub elems: Vec<AlgElem>,
    pub gram: Vec<Vec<Func>>,
}

impl CpModule {
    /// Generators `p e_l` of a bundle; inner products from the section vectors.
    pub fn from_sections(name: &str, sections: &[Section]) -> Result<Self> {
        let gram = sections
            .iter()
            .map(|a| sections.iter().map(|b| a.inner(b)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: name.into(),
            elems: sections.iter().map(AlgElem::section).collect(),
            gram,
        })
    }

    /// The local antisymmetric sections `R_i` inside `(ι, E^d)`, paired as
    /// sections of `E^d`.
    pub fn antisymmetric(bundle: &Arc<Bundle>) -> Result<Self> {
        let (_, sections) = symmetry::antisym_local_sections(bundle)?;
        let gram = sections
            .iter()
            .map(|a| sections.iter().map(|b| a.inner(b)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: "antisymmetric sections".into(),
            elems: symmetry::antisym_local(bundle)?,
            gram,
        })
    }
}

/// Entrywise residual relative to the largest entry of `a`; absolute when
/// `a` is negligible.
fn rel_diff(a: &AlgElem, b: &AlgElem) -> f64 {
    let diff = a.max_diff(b);
    let scale = a.max_diff(&a.scale(linalg::c(0.0)));
    if scale > 1e-6 {
        diff / scale
    } else {
        diff
    }
}

/// The four universal relations `ψ*ψ' = ⟨ψ,ψ'⟩`, `fψ = ψf`,
/// `(af)ψ = a(fψ)`, `ψa = ρ(a)ψ`, evaluated on generators.
pub fn verify_cp_relations(
    a_gens: &[AlgElem],
    rho: &dyn Endomorphism,
    module: &CpModule,
    funcs: &[Func],
    tol: f64,
) -> Result<Vec<CheckRecord>> {
    let anchor = "universal crossed-product relations";
    let mut inner_dev: f64 = 0.0;
    for (l, a) in module.elems.iter().enumerate() {
        for (m, b) in module.elems.iter().enumerate() {
            let prod = a.adjoint().mul(b)?;
            for x in 0..prod.bundle().points() {
                inner_dev = inner_dev.max((prod.at(x)[(0, 0)] - module.gram[l][m].values[x]).norm());
            }
        }
    }
    let mut central_dev: f64 = 0.0;
    let mut assoc_dev: f64 = 0.0;
    let mut cov_dev: f64 = 0.0;
    for psi in &module.elems {
        let bundle = psi.bundle();
        for f in funcs {
            let fe = AlgElem::function(bundle, f);
            central_dev = central_dev.max(fe.mul(psi)?.max_diff(&psi.mul(&fe)?));
            for a in a_gens {
                let lhs = a.mul(&fe)?.mul(psi)?;
                let rhs = a.mul(&fe.mul(psi)?)?;
                assoc_dev = assoc_dev.max(lhs.max_diff(&rhs));
            }
        }
        for a in a_gens {
            let lhs = psi.mul(a)?;
            let rhs = rho.apply(a)?.mul(psi)?;
            cov_dev = cov_dev.max(rel_diff(&lhs, &rhs));
        }
    }
    Ok(vec![
        CheckRecord::residual(&format!("inner products of {}", module.name), anchor, inner_dev, tol),
        CheckRecord::residual("functions are central on the module", anchor, central_dev, tol),
        CheckRecord::residual("module action is associative with functions", anchor, assoc_dev, tol),
        CheckRecord::residual(&format!("covariance under {}", rho.name()), anchor, cov_dev, tol)
            .with_detail("relative to the largest entry of ψa"),
    ])
}

/// The shift `t ↦ p ⊗ t` for a projection `p ∈ (E, E)`.
pub struct ProjectionShift {
    p: AlgElem,
}

impl ProjectionShift {
    pub fn new(p: AlgElem) -> Result<Self> {
        if p.level() != 1 || p.degree() != 0 {
            return Err(Error::Precondition("shift needs p in (E,E)".into()));
        }
        Ok(Self { p })
    }
}

impl Endomorphism for ProjectionShift {
    fn name(&self) -> String {
        "projection shift".into()
    }

    fn bimodule_degree(&self) -> i64 {
        1
    }

    fn apply(&self, a: &AlgElem) -> Result<AlgElem> {
        if a.degree() != 0 {
            return Err(Error::Precondition("projection shift acts on degree zero".into()));
        }
        self.p.lift(a.level()).mul(&a.sigma())
    }

    fn apply_fiber(&self, x: usize, a: &crate::cpalg::Field) -> Option<crate::cpalg::Field> {
        let q = self.p.fiber(x).mats[0].clone();
        Some(crate::cpalg::Field::single(
            a.level + 1,
            a.degree,
            linalg::kron(&q, &a.mats[0]),
        ))
    }
}

fn as_column(m: &Mat) -> Mat {
    let v = linalg::vec_of(m);
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

/// Random degree-zero arrows at level `r`, squeezed into `(E^r, E^r)`.
fn random_arrows(bundle: &Arc<Bundle>, r: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<AlgElem> {
    let dim = bundle.ambient_dim().pow(r as u32);
    (0..count)
        .map(|_| {
            let raw = MatFunc::from_fn(bundle.points(), dim, dim, |_| linalg::random_matrix(rng, dim, dim));
            AlgElem::from_arrow(Arrow::squeeze(bundle.clone(), r, r, &raw))
        })
        .collect()
}

/// The rank-one shift example: generation of `Ê` by `(E,E)·L̂`, the inner
/// relation `ρ(t)φ = φt`, and `(L, L) = C(X)·p`.
pub fn verify_ex_cp(bundle: &Arc<Bundle>, p: &AlgElem, seed: u64, tol: f64) -> Result<Vec<CheckRecord>> {
    let anchor = "rank-one shift crossed product";
    let d = bundle.rank();
    let n = bundle.points();
    let fibers: Vec<Mat> = (0..n).map(|x| p.fiber(x).mats[0].clone()).collect();
    for (x, q) in fibers.iter().enumerate() {
        let idem = linalg::diff_abs(&(q * q), q) + linalg::diff_abs(&q.adjoint(), q);
        let rank = q.trace().re;
        if idem > 1e-8 || (rank - 1.0).abs() > 1e-8 {
            return Err(Error::Precondition(format!(
                "p is not a rank-one projection at point {x} (trace {rank:.3})"
            )));
        }
    }
    // (i) span{t v : t ∈ (E,E), v ∈ pE} is the whole fiber
    let gen_dims: Vec<usize> = fibers
        .iter()
        .map(|q| {
            let v = linalg::projection_range(q);
            let mut vecs = Vec::new();
            for i in 0..d {
                for j in 0..d {
                    let mut e = Mat::zeros(d, d);
                    e[(i, j)] = linalg::c(1.0);
                    vecs.push(&e * &v);
                }
            }
            linalg::span_of(&vecs, d, 1).ncols()
        })
        .collect();
    let gen_rec = CheckRecord::dims("module generated by (E,E) and L", anchor, gen_dims, &vec![d; n]);
    // (ii) ρ(t)φ = φt
    let rho = ProjectionShift::new(p.clone())?;
    let phis: Vec<AlgElem> = bundle
        .generators()
        .iter()
        .map(|s| p.mul(&AlgElem::section(s)))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inner_dev: f64 = 0.0;
    for r in 0..=2 {
        let mut ts = random_arrows(bundle, r, 3, &mut rng);
        ts.push(AlgElem::identity(bundle, r));
        for t in &ts {
            let rt = rho.apply(t)?;
            for phi in &phis {
                inner_dev = inner_dev.max(rt.mul(phi)?.max_diff(&phi.mul(t)?));
            }
        }
    }
    let inner_rec = CheckRecord::residual("shift is inner: p⊗t·φ = φ·t", anchor, inner_dev, tol);
    // (iii) p (E,E) p is one-dimensional and spanned by p
    let mut res: f64 = 0.0;
    let comp_dims: Vec<usize> = fibers
        .iter()
        .map(|q| {
            let mut mats = Vec::new();
            for i in 0..d {
                for j in 0..d {
                    let mut e = Mat::zeros(d, d);
                    e[(i, j)] = linalg::c(1.0);
                    mats.push(q * e * q);
                }
            }
            let span = linalg::span_of(&mats, d, d);
            res = res.max(linalg::outside_residual(&span, &as_column(q)));
            span.ncols()
        })
        .collect();
    let comp_rec = CheckRecord::dims("(L,L) = C(X)·p", anchor, comp_dims, &vec![1; n]).with_residual(res);
    Ok(vec![gen_rec, inner_rec, comp_rec])
}

/// Rank-one projection onto the first summand of a direct sum `L ⊕ F` with
/// `L` of ambient dimension `n_first`.
pub fn first_summand_projection(sum: &Arc<Bundle>, first: &Bundle) -> Result<AlgElem> {
    let n = sum.ambient_dim();
    let k = first.ambient_dim();
    let body = MatFunc::from_fn(sum.points(), n, n, |x| {
        let mut m = Mat::zeros(n, n);
        m.view_mut((0, 0), (k, k)).copy_from(first.proj().at(x));
        m
    });
    Ok(AlgElem::from_arrow(Arrow::new(sum.clone(), 1, 1, body)?))
}

/// The unitary invariant algebra: at every fiber the `U(d)` invariants of
/// `(r, r)` are spanned by the permutations, off-diagonal spaces vanish, and
/// the ambient permutation arrows read as permutation matrices in every frame.
pub fn verify_lem21(bundle: &Arc<Bundle>, rmax: usize, seed: u64, tol: f64) -> Result<Vec<CheckRecord>> {
    let anchor = "unitary invariants are generated by permutations";
    let d = bundle.rank();
    let n = bundle.points();
    let model = GroupModel::constant(bundle.clone(), FiberGroup::FullU, vec![])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle_gens = vec![linalg::random_unitary(&mut rng, d), linalg::random_unitary(&mut rng, d)];
    let mut out = Vec::new();
    let mut diag = Vec::new();
    let mut span_res: f64 = 0.0;
    let mut off_ok = true;
    let mut constant = true;
    for r in 0..=rmax {
        for s in 0..=rmax {
            let space = model.invariant_arrows(r, s);
            let oracle = groups::generator_invariants(&oracle_gens, d, r, s);
            let (eq, res) = linalg::compare_spans(&space.fiber_bases[0], &oracle);
            span_res = span_res.max(res);
            constant &= eq && space.constant_dim().is_some();
            if r == s {
                diag.push(space.fiber_bases[0].ncols());
            } else {
                off_ok &= space.fiber_dims().iter().all(|&k| k == 0) && oracle.ncols() == 0;
            }
        }
    }
    out.push(
        CheckRecord::flag(
            "fiber dimensions constant and equal to the brute-force model",
            anchor,
            constant,
            "",
        )
        .with_residual(span_res)
        .with_dims(diag.clone()),
    );
    out.push(CheckRecord::flag("off-diagonal invariants vanish", anchor, off_ok, ""));
    let mut frame_dev: f64 = 0.0;
    for r in 1..=rmax.min(3) {
        for p in linalg::all_perms(r) {
            let theta = symmetry::theta_perm(bundle, &p);
            let want = linalg::perm_operator(d, &p);
            for x in 0..n {
                frame_dev = frame_dev.max(linalg::diff_abs(&theta.fiber(x).mats[0], &want));
            }
        }
    }
    out.push(CheckRecord::residual(
        "ambient permutation arrows are permutations in every frame",
        anchor,
        frame_dev,
        tol,
    ));
    Ok(out)
}

/// Seeded complex combination of elements of a common degree.
fn combine(elems: &[AlgElem], rng: &mut ChaCha8Rng) -> Result<AlgElem> {
    let mut acc: Option<AlgElem> = None;
    for e in elems {
        let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let term = e.scale(z);
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    acc.ok_or_else(|| Error::Precondition("nothing to combine".into()))
}

/// The special unitary invariant algebra as a crossed product by the
/// determinant line: the sector rule, factorization through `R^k`, the inner
/// relation `R y = ρ(y) R`, and `(λE, λE) = C(X)·P`.
pub fn verify_lem22(bundle: &Arc<Bundle>, kmax: usize, rmax: usize, seed: u64, tol: f64) -> Result<Vec<CheckRecord>> {
    let anchor = "special unitary invariants as a crossed product";
    let d = bundle.rank();
    let n = bundle.points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle_gens = vec![
        linalg::random_special_unitary(&mut rng, d),
        linalg::random_special_unitary(&mut rng, d),
    ];
    let model = GroupModel::constant(bundle.clone(), FiberGroup::FullSU, vec![])?;
    let mut out = Vec::new();
    // (i) sector rule
    let mut sector_ok = true;
    let mut sector_res: f64 = 0.0;
    let mut table = Vec::new();
    for r in 0..=rmax {
        for s in 0..=rmax {
            let space = model.invariant_arrows(r, s);
            let oracle = groups::generator_invariants(&oracle_gens, d, r, s);
            let (eq, res) = linalg::compare_spans(&space.fiber_bases[0], &oracle);
            sector_res = sector_res.max(res);
            let nonzero = space.fiber_bases[0].ncols() > 0;
            sector_ok &= eq && space.constant_dim().is_some() && nonzero == ((r as i64 - s as i64) % d as i64 == 0);
            table.push(space.fiber_bases[0].ncols());
        }
    }
    out.push(
        CheckRecord::flag("nonzero exactly when d divides r − s", anchor, sector_ok, "row-major table over r, s")
            .with_dims(table)
            .with_residual(sector_res),
    );
    // (ii) factorization (E^r, E^{r+kd}) = (E^{r+kd}, E^{r+kd})_U · (R^k ⊗ 1_r)
    let unit = linalg::antisymmetric_unit(d);
    let mut fact_ok = true;
    let mut fact_res: f64 = 0.0;
    let mut fact_dims = Vec::new();
    for k in 1..=kmax {
        for r in 0..=rmax.saturating_sub(k * d) {
            let s = r + k * d;
            let lhs = groups::su_span(d, r, s);
            let lead = linalg::kron(&linalg::kron_pow(&unit, k), &linalg::eye(d.pow(r as u32)));
            let u = groups::u_span(d, s, s);
            let prods: Vec<Mat> = (0..u.ncols())
                .map(|j| linalg::unvec(u.column(j).as_slice(), d.pow(s as u32), d.pow(s as u32)) * &lead)
                .collect();
            let rhs = linalg::span_of(&prods, d.pow(s as u32), d.pow(r as u32));
            let (eq, res) = linalg::compare_spans(&lhs, &rhs);
            fact_ok &= eq;
            fact_res = fact_res.max(res);
            fact_dims.push(lhs.ncols());
            // the expansion y = (y R*^k) R^k on every basis element
            for j in 0..lhs.ncols() {
                let y = linalg::unvec(lhs.column(j).as_slice(), d.pow(s as u32), d.pow(r as u32));
                let back = &y * lead.adjoint() * &lead;
                fact_res = fact_res.max(linalg::diff_abs(&back, &y));
            }
        }
    }
    out.push(
        CheckRecord::flag("factorization through powers of R", anchor, fact_ok && fact_res < tol, "")
            .with_dims(fact_dims)
            .with_residual(fact_res),
    );
    // (iii) R y = ρ(y) R with ρ(y) = P ⊗ y, on invariant generators
    let rs = symmetry::antisym_local(bundle)?;
    let (p_support, _) = symmetry::support_projection(bundle)?;
    let theta = symmetry::theta_perm(bundle, &[1, 0]);
    let mut ys: Vec<AlgElem> = vec![
        theta.clone(),
        theta.sigma(),
        AlgElem::identity(bundle, 1),
        combine(&[theta.clone(), AlgElem::identity(bundle, 2)], &mut rng)?,
    ];
    // R_j R_k* lies in the degree-zero invariants; R_j itself in degree d
    for a in &rs {
        for b in &rs {
            ys.push(a.mul(&b.adjoint())?);
        }
    }
    ys.push(combine(&rs, &mut rng)?);
    // evaluated fiberwise in frame coordinates; ambient levels grow as n^level
    let ctx = FieldCtx::plain(d);
    let mut inner_res: f64 = 0.0;
    for x in 0..n {
        let px = p_support.fiber(x);
        for r in &rs {
            let rx = r.fiber(x);
            for y in &ys {
                let yx = y.fiber(x);
                let lhs = ctx.mul(&rx, &yx);
                let shifted = (0..d).fold(yx.clone(), |a, _| ctx.sigma(&a));
                let rho_y = ctx.mul(&ctx.lift(&px, y.target_level()), &shifted);
                inner_res = inner_res.max(ctx.max_diff(&lhs, &ctx.mul(&rho_y, &rx)));
            }
        }
    }
    out.push(CheckRecord::residual("R y = (P ⊗ y) R", anchor, inner_res, tol));
    // (iv) P (E^d, E^d)_U P = C(X) P
    let frame_p = &unit * unit.adjoint();
    let mats: Vec<Mat> = linalg::all_perms(d)
        .iter()
        .map(|p| &frame_p * linalg::perm_operator(d, p) * &frame_p)
        .collect();
    let dim_d = d.pow(d as u32);
    let span = linalg::span_of(&mats, dim_d, dim_d);
    let mut res = linalg::outside_residual(&span, &as_column(&frame_p));
    for p in linalg::all_perms(d) {
        let th = symmetry::theta_perm(bundle, &p);
        let lhs = p_support.mul(&th)?.mul(&p_support)?;
        let rhs = p_support.scale(linalg::c(linalg::perm_sign(&p)));
        res = res.max(lhs.max_diff(&rhs));
    }
    out.push(
        CheckRecord::dims("(λE, λE) = C(X)·P", anchor, vec![span.ncols(); n], &vec![1; n]).with_residual(res),
    );
    if res >= tol {
        out.last_mut().unwrap().passed = false;
    }
    Ok(out)
}

/// Discrete first Chern number of the determinant line and the outcome of a
/// global unit-section search.
#[derive(Clone, Debug)]
pub struct ChernResult {
    pub number: i64,
    pub winding: f64,
    pub max_defect: f64,
    pub trivial: bool,
    pub method: String,
}

fn wrap(a: f64) -> f64 {
    let mut t = a % (2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Least-squares phase gauge for a unit line field: minimizes
/// `Σ (θ_y − θ_x + a_xy)²` over edges and returns the largest remaining edge
/// defect (wrapped to `(−π, π]`).
pub fn unit_section_search(space: &SampleSpace, field: &[Mat]) -> Result<(Vec<Mat>, f64)> {
    let n = space.len();
    let edges = space.edges();
    let mut phases = Vec::with_capacity(edges.len());
    for &(a, b) in &edges {
        let z = bundle::link_phase(&field[a], &field[b])
            .ok_or_else(|| Error::Precondition(format!("degenerate link on edge ({a},{b})")))?;
        phases.push(z.arg());
    }
    // graph Laplacian with the first vertex pinned
    let mut lap = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    for (&(a, b), &ph) in edges.iter().zip(&phases) {
        lap[(a, a)] += 1.0;
        lap[(b, b)] += 1.0;
        lap[(a, b)] -= 1.0;
        lap[(b, a)] -= 1.0;
        // want θ_b − θ_a = −ph
        rhs[b] -= ph;
        rhs[a] += ph;
    }
    lap[(0, 0)] += 1.0;
    let theta = lap
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Precondition("disconnected sample graph".into()))?;
    let section: Vec<Mat> = (0..n)
        .map(|x| &field[x] * C64::from_polar(1.0, theta[x]))
        .collect();
    let defect = edges
        .iter()
        .zip(&phases)
        .map(|(&(a, b), &ph)| wrap(ph + theta[b] - theta[a]).abs())
        .fold(0.0, f64::max);
    Ok((section, defect))
}

/// Chern detection for the determinant line `λE`.
pub fn chern_detect(bundle: &Arc<Bundle>) -> Result<ChernResult> {
    let line = if bundle.rank() == 1 { bundle.clone() } else { bundle.exterior_top()? };
    if line.rank() != 1 {
        return Err(Error::Rank("determinant line is not rank one".into()));
    }
    let space = line.space();
    let field: Vec<Mat> = (0..line.points()).map(|x| line.frame(x).clone()).collect();
    let (_, defect) = unit_section_search(space, &field)?;
    let continuous = defect < PI / 2.0;
    if !space.faces().is_empty() {
        let w = bundle::winding_number(space, &field)?;
        let number = w.round() as i64;
        if (w - number as f64).abs() > 0.1 {
            return Err(Error::Precondition(format!("face winding {w:.3} is not near an integer")));
        }
        Ok(ChernResult {
            number,
            winding: w,
            max_defect: defect,
            trivial: number == 0 && continuous,
            method: "face phase winding".into(),
        })
    } else if space.is_circle() {
        // every complex line bundle over a circle is trivial; the search
        // spreads the holonomy along the loop
        Ok(ChernResult {
            number: 0,
            winding: 0.0,
            max_defect: defect,
            trivial: continuous,
            method: "unit-section search on a circle".into(),
        })
    } else {
        Err(Error::Precondition(
            "Chern detection needs faces or a circle graph".into(),
        ))
    }
}

/// `L ⊕ L*` on the sphere: trivial determinant line, a nontrivial summand,
/// the same special unitary dual table as the trivial rank-two bundle, and
/// gluing of the determinant sector.
pub fn verify_ex_sue(subdiv: usize, rmax: usize) -> Result<Vec<CheckRecord>> {
    let anchor = "L ⊕ L* has the special unitary dual of the trivial bundle";
    let (line, sum) = bundle::bott_sum(subdiv)?;
    let cl = chern_detect(&line)?;
    let ce = chern_detect(&sum)?;
    let mut out = vec![
        CheckRecord::flag(
            "the summand line is nontrivial",
            anchor,
            cl.number.abs() == 1 && !cl.trivial,
            format!("c1(L) = {} (winding {:.6})", cl.number, cl.winding),
        ),
        CheckRecord::flag(
            "the determinant line of L ⊕ L* is trivial",
            anchor,
            ce.number == 0 && ce.trivial,
            format!("c1 = {} (winding {:.6}), largest gauge defect {:.3}", ce.number, ce.winding, ce.max_defect),
        ),
    ];
    let trivial = Bundle::trivial(sum.space().clone(), 2)?;
    let m_sum = GroupModel::constant(sum.clone(), FiberGroup::FullSU, vec![])?;
    let m_triv = GroupModel::constant(trivial, FiberGroup::FullSU, vec![])?;
    let t_sum = groups::dual_dimension_table(&m_sum, rmax)?;
    let t_triv = groups::dual_dimension_table(&m_triv, rmax)?;
    out.push(
        CheckRecord::flag("dual tables agree entrywise", anchor, t_sum == t_triv, format!("r, s ≤ {rmax}"))
            .with_dims(t_sum.at(0).concat()),
    );
    // the determinant sector glues to a global arrow exactly when c1 vanishes
    let glued = m_sum.invariant_arrows(0, 2);
    let twisted = line.direct_sum(&*Bundle::trivial(sum.space().clone(), 1)?)?;
    let m_tw = GroupModel::constant(twisted, FiberGroup::FullSU, vec![])?;
    let not_glued = m_tw.invariant_arrows(0, 2);
    out.push(CheckRecord::flag(
        "determinant sector glues globally",
        anchor,
        glued.gluing.glued && !not_glued.gluing.glued,
        format!("L ⊕ L*: {}; L ⊕ 1: {}", glued.gluing.detail, not_glued.gluing.detail),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{clutched_circle_rank2, mobius_line};
    use crate::cpalg::{Identity, Inner, Perturbed, Sigma};
    use crate::space::make_interval_space;

    fn trivial(n: usize, d: usize) -> Arc<Bundle> {
        Bundle::trivial(Arc::new(make_interval_space(n, None).unwrap()), d).unwrap()
    }

    fn funcs(n: usize) -> Vec<Func> {
        vec![
            Func::from_fn(n, |x| C64::new(x as f64 / n as f64, 0.3)),
            Func::constant(n, linalg::c(1.0)),
        ]
    }

    #[test]
    fn cp_relations_for_bundle_generators() {
        let b = clutched_circle_rank2(6, false).unwrap();
        let module = CpModule::from_sections("generators", &b.generators()).unwrap();
        let a_gens: Vec<AlgElem> = funcs(6).iter().map(|f| AlgElem::function(&b, f)).collect();
        let recs = verify_cp_relations(&a_gens, &Identity, &module, &funcs(6), 1e-9).unwrap();
        assert!(recs.iter().all(|r| r.passed), "{recs:?}");
    }

    #[test]
    fn cp_relations_for_sigma_on_arrows() {
        let b = trivial(3, 2);
        let module = CpModule::from_sections("generators", &b.generators()).unwrap();
        let theta = symmetry::theta_perm(&b, &[1, 0]);
        let a_gens = vec![theta.clone(), AlgElem::identity(&b, 1)];
        let sigma = Sigma::new(&b);
        let recs = verify_cp_relations(&a_gens, &sigma, &module, &funcs(3), 1e-9).unwrap();
        assert!(recs.iter().all(|r| r.passed), "{recs:?}");
        let bad = Perturbed::new(Sigma::new(&b), 1e-3);
        let recs = verify_cp_relations(&a_gens, &bad, &module, &funcs(3), 1e-9).unwrap();
        assert!(!recs[3].passed && recs[3].max_residual >= 1e-3 * (1.0 - 1e-6), "{:?}", recs[3]);
    }

    #[test]
    fn antisymmetric_module_induces_rho() {
        let b = clutched_circle_rank2(6, true).unwrap();
        let module = CpModule::antisymmetric(&b).unwrap();
        let inner = Inner::new(module.elems.clone()).unwrap();
        let theta = symmetry::theta_perm(&b, &[1, 0]);
        let recs = verify_cp_relations(&[theta], &inner, &module, &funcs(6), 1e-9).unwrap();
        assert!(recs.iter().all(|r| r.passed), "{recs:?}");
    }

    #[test]
    fn ex_cp_trivial_and_sum() {
        let b = trivial(3, 2);
        let mut e11 = Mat::zeros(2, 2);
        e11[(0, 0)] = linalg::c(1.0);
        let p = AlgElem::from_arrow(Arrow::new(b.clone(), 1, 1, MatFunc::constant(3, &e11)).unwrap());
        let recs = verify_ex_cp(&b, &p, 1, 1e-9).unwrap();
        assert!(recs.iter().all(|r| r.passed), "{recs:?}");
        let id = AlgElem::identity(&b, 1);
        assert!(matches!(verify_ex_cp(&b, &id, 1, 1e-9), Err(Error::Precondition(_))));
        let (line, sum) = bundle::bott_sum(2).unwrap();
        let p = first_summand_projection(&sum, &line).unwrap();
        let recs = verify_ex_cp(&sum, &p, 1, 1e-9).unwrap();
        assert!(recs.iter().all(|r| r.passed), "{recs:?}");
    }

    #[test]
    fn lem21_on_trivial_and_clutched() {
        for b in [trivial(3, 2), clutched_circle_rank2(6, false).unwrap()] {
            let recs = verify_lem21(&b, 3, 5, 1e-9).unwrap();
            assert!(recs.iter().all(|r| r.passed), "{recs:?}");
            assert_eq!(recs[0].dims, vec![1, 1, 2, 5]);
        }
    }

    #[test]
    fn lem22_on_trivial_and_sum() {
        let recs = verify_lem22(&trivial(3, 2), 2, 4, 3, 1e-9).unwrap();
        assert!(recs.iter().all(|r| r.passed), "{recs:?}");
        // (0,2) and (0,3) entries of the table
        assert_eq!(recs[0].dims[2], 1);
        assert_eq!(recs[0].dims[3], 0);
        let (_, sum) = bundle::bott_sum(2).unwrap();
        let recs = verify_lem22(&sum, 1, 2, 3, 1e-9).unwrap();
        assert!(recs.iter().all(|r| r.passed), "{recs:?}");
    }

    #[test]
    fn chern_numbers() {
        let b = Bundle::trivial(Arc::new(crate::space::make_sphere_space(2).unwrap()), 2).unwrap();
        let c = chern_detect(&b).unwrap();
        assert_eq!(c.number, 0);
        assert!(c.trivial);
        let (line, sum) = bundle::bott_sum(4).unwrap();
        let cl = chern_detect(&line).unwrap();
        assert_eq!(cl.number.abs(), 1);
        assert!(!cl.trivial);
        let cd = chern_detect(&line.dual().unwrap()).unwrap();
        assert_eq!(cd.number, -cl.number);
        let cs = chern_detect(&sum).unwrap();
        assert_eq!(cs.number, 0);
        assert!(cs.trivial, "{cs:?}");
        // additivity: λ(L ⊕ L) = L ⊗ L
        let double = line.direct_sum(&line).unwrap();
        assert_eq!(chern_detect(&double).unwrap().number, 2 * cl.number);
        let m = chern_detect(&mobius_line(8).unwrap()).unwrap();
        assert!(m.trivial && m.number == 0);
        assert!(chern_detect(&trivial(3, 1)).is_err());
    }

    #[test]
    fn ex_sue() {
        let recs = verify_ex_sue(2, 3).unwrap();
        assert!(recs.iter().all(|r| r.passed), "{recs:?}");
    }
}
