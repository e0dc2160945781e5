//! Fiberwise unitary group data on a bundle: invariant arrow spaces, the
//! closure rule, spectral fibers, section groups, amenability and relative
//! commutants, and dual dimension tables.
//!
//! All fiber data is expressed in the bundle's frame coordinates (`C^d` at
//! each point). Infinite groups are symbolic (`FullU`, `FullSU`) and resolved
//! through permutation and antisymmetric spanning sets.
//!
//! The closure rule intersects the invariant spaces at `x` with those at its
//! declared limit neighbors. It is a finite surrogate for continuity of
//! invariant sections, not a theorem; reports say so.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::bundle::{self, Bundle};
use crate::cpalg::{AlgElem, Arrow, Constraint, Field, FieldCtx};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, C64, TOL};
use crate::space::MatFunc;

/// Group data at one fiber.
#[derive(Clone, Debug)]
pub enum FiberGroup {
    /// Finite group given by unitary generators in frame coordinates.
    Finite { name: String, gens: Vec<Mat> },
    FullU,
    FullSU,
}

impl FiberGroup {
    pub fn finite(name: &str, gens: Vec<Mat>) -> Self {
        FiberGroup::Finite {
            name: name.into(),
            gens,
        }
    }

    pub fn trivial(d: usize) -> Self {
        Self::finite("trivial", vec![linalg::eye(d)])
    }

    pub fn label(&self) -> String {
        match self {
            FiberGroup::Finite { name, gens } => format!("{name} ({} generators)", gens.len()),
            FiberGroup::FullU => "U(d)".into(),
            FiberGroup::FullSU => "SU(d)".into(),
        }
    }

    pub fn same(&self, other: &FiberGroup) -> bool {
        match (self, other) {
            (FiberGroup::FullU, FiberGroup::FullU) | (FiberGroup::FullSU, FiberGroup::FullSU) => true,
            (FiberGroup::Finite { gens: a, .. }, FiberGroup::Finite { gens: b, .. }) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| linalg::diff_abs(x, y) < 1e-14)
            }
            _ => false,
        }
    }

    /// Membership of a single unitary.
    pub fn contains(&self, g: &Mat, tol: f64) -> Result<bool> {
        Ok(match self {
            FiberGroup::FullU => linalg::is_unitary(g, tol),
            FiberGroup::FullSU => linalg::is_unitary(g, tol) && (g.determinant() - linalg::c(1.0)).norm() < tol,
            FiberGroup::Finite { gens, .. } => enumerate_group(gens, 4096)?
                .iter()
                .any(|h| linalg::diff_abs(h, g) < tol),
        })
    }
}

/// All elements of the group generated by `gens` (which must be finite).
pub fn enumerate_group(gens: &[Mat], limit: usize) -> Result<Vec<Mat>> {
    let d = gens.first().map(|g| g.nrows()).unwrap_or(1);
    let mut elems = vec![linalg::eye(d)];
    let mut frontier = vec![linalg::eye(d)];
    while let Some(h) = frontier.pop() {
        for g in gens {
            let k = g * &h;
            if !elems.iter().any(|e| linalg::diff_abs(e, &k) < 1e-9) {
                if elems.len() >= limit {
                    return Err(Error::Precondition(format!(
                        "generated group exceeds {limit} elements"
                    )));
                }
                elems.push(k.clone());
                frontier.push(k);
            }
        }
    }
    Ok(elems)
}

/// Quaternion group `{±1, ±i, ±j, ±k}` inside `SU(2)`.
pub fn quaternion_gens() -> Vec<Mat> {
    let (z, o, i) = (linalg::c(0.0), linalg::c(1.0), C64::new(0.0, 1.0));
    vec![
        Mat::from_row_slice(2, 2, &[i, z, z, -i]),
        Mat::from_row_slice(2, 2, &[z, o, -o, z]),
    ]
}

/// Cyclic group of order `m` generated by `diag(ω, ω^{-1}, 1, …)` (`ω` alone when `d = 1`).
pub fn cyclic_gens(m: usize, d: usize) -> Vec<Mat> {
    let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / m as f64);
    let mut g = linalg::eye(d);
    g[(0, 0)] = w;
    if d > 1 {
        g[(1, 1)] = w.conj();
    }
    vec![g]
}

/// Permutation matrices of `S_d`, generated by a transposition and a cycle.
pub fn symmetric_gens(d: usize) -> Vec<Mat> {
    let perm_matrix = |p: &[usize]| {
        let mut m = Mat::zeros(d, d);
        for (i, &j) in p.iter().enumerate() {
            m[(j, i)] = linalg::c(1.0);
        }
        m
    };
    if d == 1 {
        return vec![linalg::eye(1)];
    }
    let mut swap: Vec<usize> = (0..d).collect();
    swap.swap(0, 1);
    let cycle: Vec<usize> = (0..d).map(|i| (i + 1) % d).collect();
    vec![perm_matrix(&swap), perm_matrix(&cycle)]
}

/// A global unitary bundle map, stored in frame coordinates.
#[derive(Clone, Debug)]
pub struct BundleMap {
    pub name: String,
    pub values: Vec<Mat>,
}

impl BundleMap {
    pub fn new(name: &str, values: Vec<Mat>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    pub fn constant(name: &str, points: usize, g: &Mat) -> Self {
        Self::new(name, vec![g.clone(); points])
    }

    /// Ambient operator `V g V* + (1 − p)` at `x`.
    pub fn ambient(&self, bundle: &Bundle, x: usize) -> Mat {
        let v = bundle.frame(x);
        let p = bundle.proj().at(x);
        v * &self.values[x] * v.adjoint() + (linalg::eye(p.nrows()) - p)
    }
}

/// `ĝ(t) = g^{⊗s} t g*^{⊗r}` for `t ∈ (E^r, E^s)`.
pub fn act(bundle: &Arc<Bundle>, g: &BundleMap, t: &AlgElem) -> Result<AlgElem> {
    if g.values.len() != bundle.points() {
        return Err(Error::Shape("bundle map has the wrong number of points".into()));
    }
    if let Some(x) = g.values.iter().position(|m| !linalg::is_unitary(m, TOL)) {
        return Err(Error::NotUnitary(format!("{} at point {x}", g.name)));
    }
    let (r, s) = (t.level(), t.target_level());
    let body = MatFunc::from_fn(bundle.points(), t.at(0).nrows(), t.at(0).ncols(), |x| {
        let gx = g.ambient(bundle, x);
        linalg::kron_pow(&gx, s) * t.at(x) * linalg::kron_pow(&gx.adjoint(), r)
    });
    Ok(AlgElem::from_arrow(Arrow::raw(bundle.clone(), r, s, body)))
}

/// Frame-coordinate action on a `d^s × d^r` matrix.
pub fn act_fiber(g: &Mat, r: usize, s: usize, t: &Mat) -> Mat {
    linalg::kron_pow(g, s) * t * linalg::kron_pow(&g.adjoint(), r)
}

/// Largest deviation `|ĝ(B) − B|` over generators and basis elements
/// (vec columns of `basis`); meaningful for non-unitary `g` too.
pub fn invariance_residual(gens: &[Mat], r: usize, s: usize, basis: &Mat) -> f64 {
    let d = gens.first().map(|g| g.nrows()).unwrap_or(1);
    let (rows, cols) = (d.pow(s as u32), d.pow(r as u32));
    let mut worst: f64 = 0.0;
    for g in gens {
        for j in 0..basis.ncols() {
            let b = linalg::unvec(basis.column(j).as_slice(), rows, cols);
            worst = worst.max(linalg::diff_abs(&act_fiber(g, r, s, &b), &b));
        }
    }
    worst
}

/// Span of `θ(p)`, `p ∈ S_r`, as vec columns.
pub fn perm_span(d: usize, r: usize) -> Mat {
    let mats: Vec<Mat> = linalg::all_perms(r)
        .iter()
        .map(|p| linalg::perm_operator(d, p))
        .collect();
    let dim = d.pow(r as u32);
    linalg::span_of(&mats, dim, dim)
}

/// `SU(d)`-invariant matrices `d^s × d^r`: zero unless `d | s − r`, else
/// permutations times powers of the antisymmetric vector.
pub fn su_span(d: usize, r: usize, s: usize) -> Mat {
    let (rows, cols) = (d.pow(s as u32), d.pow(r as u32));
    let diff = s as i64 - r as i64;
    if diff % d as i64 != 0 {
        return Mat::zeros(rows * cols, 0);
    }
    if diff < 0 {
        // adjoints of the (s, r) space
        let other = su_span(d, s, r);
        let mats: Vec<Mat> = (0..other.ncols())
            .map(|j| linalg::unvec(other.column(j).as_slice(), cols, rows).adjoint())
            .collect();
        return linalg::span_of(&mats, rows, cols);
    }
    let k = (diff / d as i64) as usize;
    let unit = linalg::antisymmetric_unit(d);
    let lead = linalg::kron(&linalg::kron_pow(&unit, k), &linalg::eye(cols));
    let mats: Vec<Mat> = linalg::all_perms(s)
        .iter()
        .map(|p| linalg::perm_operator(d, p) * &lead)
        .collect();
    linalg::span_of(&mats, rows, cols)
}

/// `U(d)`-invariant matrices `d^s × d^r`.
pub fn u_span(d: usize, r: usize, s: usize) -> Mat {
    if r != s {
        Mat::zeros(d.pow((r + s) as u32), 0)
    } else {
        perm_span(d, r)
    }
}

/// Invariants of a finite generating set. When the group enumerates, the
/// dimension comes from the character formula and the space from group
/// averages of seeded random matrices; otherwise from the null space of
/// `conj(g^{⊗r}) ⊗ g^{⊗s} − 1`.
pub fn finite_invariants(gens: &[Mat], d: usize, r: usize, s: usize) -> Mat {
    match enumerate_group(gens, 512) {
        Ok(elems) => reynolds_invariants(&elems, d, r, s),
        Err(_) => generator_invariants(gens, d, r, s),
    }
}

fn reynolds_invariants(elems: &[Mat], d: usize, r: usize, s: usize) -> Mat {
    use rand::SeedableRng;
    let (rows, cols) = (d.pow(s as u32), d.pow(r as u32));
    let order = elems.len() as f64;
    let dim = elems
        .iter()
        .map(|g| {
            let chi = g.trace();
            chi.conj().powu(r as u32) * chi.powu(s as u32)
        })
        .sum::<C64>()
        .re
        / order;
    let m = dim.round() as usize;
    if m == 0 {
        return Mat::zeros(rows * cols, 0);
    }
    let powers: Vec<(Mat, Mat)> = elems
        .iter()
        .map(|g| (linalg::kron_pow(g, s), linalg::kron_pow(&g.adjoint(), r)))
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut out = Mat::zeros(rows * cols, m + 4);
    for j in 0..m + 4 {
        let t = linalg::random_matrix(&mut rng, rows, cols);
        let mut avg = Mat::zeros(rows, cols);
        for (gs, gr) in &powers {
            avg += gs * &t * gr;
        }
        out.set_column(j, &linalg::vec_of(&avg));
    }
    let basis = linalg::orthonormalize(&out);
    if basis.ncols() == m {
        basis
    } else {
        generator_invariants(elems, d, r, s)
    }
}

/// Invariants by null space of the generator actions; no enumeration.
pub fn generator_invariants(gens: &[Mat], d: usize, r: usize, s: usize) -> Mat {
    let dim = d.pow((r + s) as u32);
    let mut ns = linalg::NullSpace::full(dim);
    for g in gens {
        let op = linalg::kron(&linalg::kron_pow(&g.conjugate(), r), &linalg::kron_pow(g, s)) - linalg::eye(dim);
        ns.constrain(&op);
    }
    ns.into_basis()
}

/// Vec-basis transport under a change of frame `w` (unitary `d × d`).
pub fn transport(basis: &Mat, w: &Mat, r: usize, s: usize) -> Mat {
    if basis.ncols() == 0 {
        return basis.clone();
    }
    let op = linalg::kron(&linalg::kron_pow(&w.conjugate(), r), &linalg::kron_pow(w, s));
    &op * basis
}

/// Unitary part of `a` (polar decomposition).
pub fn polar_unitary(a: &Mat) -> Mat {
    let svd = a.clone().svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// Fiberwise group data over a bundle plus a pool of candidate global maps.
pub struct GroupModel {
    bundle: Arc<Bundle>,
    groups: Vec<FiberGroup>,
    fiber_of: Vec<usize>,
    pool: Vec<BundleMap>,
    cache: Mutex<HashMap<(usize, usize, usize), Mat>>,
}

impl std::fmt::Debug for GroupModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroupModel")
            .field("groups", &self.groups.iter().map(|g| g.label()).collect::<Vec<_>>())
            .field("pool", &self.pool.len())
            .finish()
    }
}

impl GroupModel {
    /// Per-point groups from `assign`; equal groups share cached invariants.
    pub fn from_fn(
        bundle: Arc<Bundle>,
        assign: impl Fn(usize) -> FiberGroup,
        pool: Vec<BundleMap>,
    ) -> Result<Self> {
        let d = bundle.rank();
        let mut groups: Vec<FiberGroup> = Vec::new();
        let mut fiber_of = Vec::with_capacity(bundle.points());
        for x in 0..bundle.points() {
            let g = assign(x);
            if let FiberGroup::Finite { gens, name } = &g {
                if gens.is_empty() {
                    return Err(Error::Precondition(format!("group {name} has no generators")));
                }
                for m in gens {
                    if m.shape() != (d, d) {
                        return Err(Error::Shape(format!("generator of {name} is not {d}x{d}")));
                    }
                    if !linalg::is_unitary(m, TOL) {
                        return Err(Error::NotUnitary(format!("generator of {name} at point {x}")));
                    }
                }
            }
            let idx = match groups.iter().position(|h| h.same(&g)) {
                Some(i) => i,
                None => {
                    groups.push(g);
                    groups.len() - 1
                }
            };
            fiber_of.push(idx);
        }
        for m in &pool {
            if m.values.len() != bundle.points() {
                return Err(Error::Shape(format!("pool map {} has wrong length", m.name)));
            }
            if let Some(x) = m.values.iter().position(|g| !linalg::is_unitary(g, TOL)) {
                return Err(Error::NotUnitary(format!("pool map {} at point {x}", m.name)));
            }
        }
        Ok(Self {
            bundle,
            groups,
            fiber_of,
            pool,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn constant(bundle: Arc<Bundle>, group: FiberGroup, pool: Vec<BundleMap>) -> Result<Self> {
        Self::from_fn(bundle, |_| group.clone(), pool)
    }

    pub fn bundle(&self) -> &Arc<Bundle> {
        &self.bundle
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    pub fn points(&self) -> usize {
        self.bundle.points()
    }

    pub fn pool(&self) -> &[BundleMap] {
        &self.pool
    }

    pub fn group_at(&self, x: usize) -> &FiberGroup {
        &self.groups[self.fiber_of[x]]
    }

    /// Invariant matrices at `x` (vec basis), cached per distinct group.
    pub fn fiber_space(&self, x: usize, r: usize, s: usize) -> Mat {
        let gi = self.fiber_of[x];
        let key = (gi, r, s);
        if let Some(m) = self.cache.lock().unwrap().get(&key) {
            return m.clone();
        }
        let d = self.rank();
        let m = match &self.groups[gi] {
            FiberGroup::FullU => u_span(d, r, s),
            FiberGroup::FullSU => su_span(d, r, s),
            FiberGroup::Finite { gens, .. } => finite_invariants(gens, d, r, s),
        };
        self.cache.lock().unwrap().insert(key, m.clone());
        m
    }

    /// Membership of `g` in the evaluation group at `x`.
    pub fn evaluation_contains(&self, x: usize, g: &Mat, tol: f64) -> Result<bool> {
        self.group_at(x).contains(g, tol)
    }

    /// Closure fiber at `x`: intersection of the invariant spaces over `x` and
    /// its limit neighbors, transported into `x`'s frame.
    pub fn closure_fiber(&self, x: usize, r: usize, s: usize) -> Mat {
        let mut acc = self.fiber_space(x, r, s);
        for &y in self.bundle.space().limit_neighbors(x) {
            if acc.ncols() == 0 {
                break;
            }
            let w = polar_unitary(&(self.bundle.frame(x).adjoint() * self.bundle.frame(y)));
            let there = transport(&self.fiber_space(y, r, s), &w, r, s);
            acc = linalg::intersect(&acc, &there);
        }
        acc
    }

    pub fn invariant_arrows(&self, r: usize, s: usize) -> InvariantSpace {
        let fibers: Vec<Mat> = (0..self.points()).map(|x| self.fiber_space(x, r, s)).collect();
        InvariantSpace::assemble(&self.bundle, r, s, fibers)
    }
}

/// Outcome of gluing fiber bases into global arrows.
#[derive(Clone, Debug)]
pub struct Gluing {
    pub glued: bool,
    pub detail: String,
    pub global_basis: Vec<AlgElem>,
}

/// Fiberwise invariant bases and, when they glue, a global basis.
#[derive(Clone, Debug)]
pub struct InvariantSpace {
    pub r: usize,
    pub s: usize,
    pub fiber_bases: Vec<Mat>,
    pub gluing: Gluing,
}

impl InvariantSpace {
    pub fn assemble(bundle: &Arc<Bundle>, r: usize, s: usize, fiber_bases: Vec<Mat>) -> Self {
        let gluing = glue(bundle, r, s, &fiber_bases);
        Self {
            r,
            s,
            fiber_bases,
            gluing,
        }
    }

    pub fn fiber_dims(&self) -> Vec<usize> {
        self.fiber_bases.iter().map(|b| b.ncols()).collect()
    }

    pub fn constant_dim(&self) -> Option<usize> {
        let dims = self.fiber_dims();
        dims.iter().all(|&k| k == dims[0]).then(|| dims[0])
    }

    pub fn fiber_matrices(&self, x: usize, d: usize) -> Vec<Mat> {
        let (rows, cols) = (d.pow(self.s as u32), d.pow(self.r as u32));
        (0..self.fiber_bases[x].ncols())
            .map(|j| linalg::unvec(self.fiber_bases[x].column(j).as_slice(), rows, cols))
            .collect()
    }
}

/// Spanning-tree alignment of the ambient bases; fails when dimensions jump
/// or, on spaces with faces, when the determinant line winds.
fn glue(bundle: &Arc<Bundle>, r: usize, s: usize, fiber_bases: &[Mat]) -> Gluing {
    let dims: Vec<usize> = fiber_bases.iter().map(|b| b.ncols()).collect();
    let fail = |detail: String| Gluing {
        glued: false,
        detail,
        global_basis: Vec::new(),
    };
    if dims.iter().any(|&k| k != dims[0]) {
        let (lo, hi) = (dims.iter().min().unwrap(), dims.iter().max().unwrap());
        return fail(format!("fiber dimension jumps between {lo} and {hi}"));
    }
    let m = dims[0];
    if m == 0 {
        return Gluing {
            glued: true,
            detail: "zero space".into(),
            global_basis: Vec::new(),
        };
    }
    let d = bundle.rank();
    let (rows, cols) = (d.pow(s as u32), d.pow(r as u32));
    let n = bundle.ambient_dim();
    let (arows, acols) = (n.pow(s as u32), n.pow(r as u32));
    let ambient: Vec<Mat> = (0..bundle.points())
        .map(|x| {
            let vs = bundle.frame_power(x, s);
            let vr = bundle.frame_power(x, r).adjoint();
            let mut out = Mat::zeros(arows * acols, m);
            for j in 0..m {
                let b = linalg::unvec(fiber_bases[x].column(j).as_slice(), rows, cols);
                out.set_column(j, &linalg::vec_of(&(&vs * b * &vr)));
            }
            out
        })
        .collect();
    let space = bundle.space();
    if !space.faces().is_empty() {
        match bundle::winding_number(space, &ambient) {
            Ok(w) if w.abs() > 0.5 => {
                return fail(format!("determinant line winds {w:.3} times"));
            }
            Err(e) => return fail(format!("winding undefined: {e}")),
            _ => {}
        }
    }
    let (aligned, mismatch) = bundle::align_along_tree(space, &ambient);
    let global_basis = (0..m)
        .map(|j| {
            let body = MatFunc::from_fn(bundle.points(), arows, acols, |x| {
                linalg::unvec(aligned[x].column(j).as_slice(), arows, acols)
            });
            AlgElem::from_arrow(Arrow::raw(bundle.clone(), r, s, body))
        })
        .collect();
    Gluing {
        glued: true,
        detail: format!("aligned along a spanning tree; largest off-tree step {mismatch:.3e}"),
        global_basis,
    }
}

/// Spectral fiber at one point.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectralFiber {
    FullU,
    FullSU,
    /// Pool members whose value fixes every closure fiber, and those values.
    Pool { members: Vec<usize>, values: Vec<Mat> },
}

impl SpectralFiber {
    pub fn label(&self) -> String {
        match self {
            SpectralFiber::FullU => "U(d)".into(),
            SpectralFiber::FullSU => "SU(d)".into(),
            SpectralFiber::Pool { values, .. } => format!("finite ({} distinct values)", distinct(values).len()),
        }
    }
}

/// Distinct matrices of a list (tolerance 1e-9).
pub fn distinct(values: &[Mat]) -> Vec<Mat> {
    let mut out: Vec<Mat> = Vec::new();
    for v in values {
        if !out.iter().any(|w| linalg::diff_abs(v, w) < 1e-9) {
            out.push(v.clone());
        }
    }
    out
}

/// Closure fibers for every point and every `(r, s)` with `r, s ≤ rmax`.
pub struct SpectralAnalysis<'a> {
    model: &'a GroupModel,
    rmax: usize,
    closure: Vec<Vec<Mat>>,
}

impl<'a> SpectralAnalysis<'a> {
    /// Refuses `rmax < d`: the determinant sector would be invisible.
    pub fn new(model: &'a GroupModel, rmax: usize) -> Result<Self> {
        let d = model.rank();
        if rmax < d {
            return Err(Error::Precondition(format!(
                "rmax {rmax} is below the rank {d}; determinant sector invisible"
            )));
        }
        let closure = (0..model.points())
            .map(|x| {
                pairs(rmax)
                    .map(|(r, s)| model.closure_fiber(x, r, s))
                    .collect()
            })
            .collect();
        Ok(Self { model, rmax, closure })
    }

    pub fn rmax(&self) -> usize {
        self.rmax
    }

    pub fn closure(&self, x: usize, r: usize, s: usize) -> &Mat {
        &self.closure[x][r * (self.rmax + 1) + s]
    }

    /// Does the frame-coordinate unitary `g` fix every closure fiber at `x`?
    pub fn fixes(&self, x: usize, g: &Mat, tol: f64) -> bool {
        pairs(self.rmax).all(|(r, s)| invariance_residual(std::slice::from_ref(g), r, s, self.closure(x, r, s)) < tol)
    }

    pub fn spectral_fiber(&self, x: usize, tol: f64) -> SpectralFiber {
        let d = self.model.rank();
        let matches = |reference: &dyn Fn(usize, usize) -> Mat| {
            pairs(self.rmax).all(|(r, s)| linalg::spans_equal(self.closure(x, r, s), &reference(r, s), 1e-8))
        };
        if matches(&|r, s| u_span(d, r, s)) {
            return SpectralFiber::FullU;
        }
        if matches(&|r, s| su_span(d, r, s)) {
            return SpectralFiber::FullSU;
        }
        let mut members = Vec::new();
        let mut values = Vec::new();
        for (k, g) in self.model.pool().iter().enumerate() {
            if self.fixes(x, &g.values[x], tol) {
                members.push(k);
                values.push(g.values[x].clone());
            }
        }
        SpectralFiber::Pool { members, values }
    }

    /// `g` is a section of the spectral bundle iff it fixes the closure
    /// fibers at every sample point.
    pub fn section_group_check(&self, g: &BundleMap, tol: f64) -> bool {
        (0..self.model.points()).all(|x| self.fixes(x, &g.values[x], tol))
    }

    /// Pool members passing [`Self::section_group_check`].
    pub fn section_group(&self, tol: f64) -> Vec<usize> {
        (0..self.model.pool().len())
            .filter(|&k| self.section_group_check(&self.model.pool()[k], tol))
            .collect()
    }

    /// Pool members lying in the evaluation group at every point.
    pub fn evaluation_group(&self, tol: f64) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        'maps: for (k, g) in self.model.pool().iter().enumerate() {
            for x in 0..self.model.points() {
                if !self.model.evaluation_contains(x, &g.values[x], tol)? {
                    continue 'maps;
                }
            }
            out.push(k);
        }
        Ok(out)
    }

    pub fn dual_table(&self) -> DualTable {
        let n = self.model.points();
        let rmax = self.rmax;
        let dims = (0..=rmax)
            .map(|r| {
                (0..=rmax)
                    .map(|s| (0..n).map(|x| self.closure(x, r, s).ncols()).collect())
                    .collect()
            })
            .collect();
        DualTable { rmax, dims }
    }

    /// A group model whose fibers are the computed spectral fibers.
    pub fn spectral_model(&self, tol: f64) -> Result<GroupModel> {
        let fibers: Vec<SpectralFiber> = (0..self.model.points()).map(|x| self.spectral_fiber(x, tol)).collect();
        let d = self.model.rank();
        GroupModel::from_fn(
            self.model.bundle().clone(),
            |x| match &fibers[x] {
                SpectralFiber::FullU => FiberGroup::FullU,
                SpectralFiber::FullSU => FiberGroup::FullSU,
                SpectralFiber::Pool { values, .. } => {
                    let vals = distinct(values);
                    if vals.is_empty() {
                        FiberGroup::trivial(d)
                    } else {
                        FiberGroup::finite("spectral", vals)
                    }
                }
            },
            self.model.pool().to_vec(),
        )
    }
}

fn pairs(rmax: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=rmax).flat_map(move |r| (0..=rmax).map(move |s| (r, s)))
}

/// `dims[r][s][x]`: closure-fiber dimension of the `(r, s)` invariants at `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualTable {
    pub rmax: usize,
    pub dims: Vec<Vec<Vec<usize>>>,
}

impl DualTable {
    pub fn at(&self, x: usize) -> Vec<Vec<usize>> {
        self.dims
            .iter()
            .map(|row| row.iter().map(|v| v[x]).collect())
            .collect()
    }

    /// Entries whose dimension varies over the sample.
    pub fn non_constant(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in self.dims.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                if v.iter().any(|&k| k != v[0]) {
                    out.push((r, s));
                }
            }
        }
        out
    }

    pub fn entry(&self, r: usize, s: usize, x: usize) -> usize {
        self.dims[r][s][x]
    }
}

/// Comparison of the geometric invariants with the algebraic intertwiners.
#[derive(Clone, Debug)]
pub struct AmenabilityCheck {
    pub fiber_dims_invariant: Vec<usize>,
    pub fiber_dims_intertwiner: Vec<usize>,
    pub max_residual: f64,
    pub equal: bool,
}

/// Degree-preserving generators `σ^k(y)` of the invariant algebra, with `y`
/// ranging over bases of `(a, b)` invariants for `a, b ≤ gen_level` and
/// `k + max(a, b) ≤ max_level`.
fn invariant_generators(model: &GroupModel, x: usize, gen_level: usize, max_level: usize) -> Vec<Field> {
    let d = model.rank();
    let ctx = FieldCtx::plain(d);
    let mut out = Vec::new();
    for a in 0..=gen_level {
        for b in 0..=gen_level {
            let basis = model.fiber_space(x, a, b);
            let (rows, cols) = (d.pow(b as u32), d.pow(a as u32));
            for j in 0..basis.ncols() {
                let y = Field::single(a, b as i64 - a as i64, linalg::unvec(basis.column(j).as_slice(), rows, cols));
                let mut cur = y;
                let mut k = 0;
                while k + a.max(b) <= max_level {
                    out.push(cur.clone());
                    cur = ctx.sigma(&cur);
                    k += 1;
                }
            }
        }
    }
    out
}

/// Solves `t σ^r(y) = σ^s(y) t` for `t` in the invariants at level
/// `search_level` and degree `s − r`, over the invariant generators, and
/// compares with the `(r, s)` invariants lifted to that level.
pub fn check_amenability(
    model: &GroupModel,
    r: usize,
    s: usize,
    search_level: usize,
    gen_level: usize,
) -> Result<AmenabilityCheck> {
    let d = model.rank();
    if search_level < r.max(s) {
        return Err(Error::Precondition(format!(
            "search level {search_level} below max(r, s) = {}",
            r.max(s)
        )));
    }
    let level = search_level;
    let degree = s as i64 - r as i64;
    let top = (level as i64 + degree) as usize;
    let (rows, cols) = (d.pow(top as u32), d.pow(level as u32));
    let ctx = FieldCtx::plain(d);
    let mut inv_dims = Vec::new();
    let mut alg_dims = Vec::new();
    let mut worst: f64 = 0.0;
    let mut equal = true;
    let mut done: HashMap<usize, (usize, usize, f64, bool)> = HashMap::new();
    for x in 0..model.points() {
        let gi = model.fiber_of[x];
        if let Some(&(a, b, res, eq)) = done.get(&gi) {
            inv_dims.push(a);
            alg_dims.push(b);
            worst = worst.max(res);
            equal &= eq;
            continue;
        }
        let unknown = model.fiber_space(x, level, top);
        let gens = invariant_generators(model, x, gen_level, level);
        let constraints: Vec<Constraint<'_>> = gens
            .iter()
            .map(|y| {
                let ctx = ctx.clone();
                let sr = (0..r).fold(y.clone(), |a, _| ctx.sigma(&a));
                let ss = (0..s).fold(y.clone(), |a, _| ctx.sigma(&a));
                Box::new(move |t: &Field| ctx.residual(&ctx.mul(t, &sr), &ctx.mul(&ss, t))) as Constraint<'_>
            })
            .collect();
        let solved = crate::cpalg::solve_fiber(level, degree, rows, cols, &unknown, &constraints);
        // invariants of (r, s), lifted
        let base = model.fiber_space(x, r, s);
        let lift = linalg::eye(d.pow((level - r) as u32));
        let lifted: Vec<Mat> = (0..base.ncols())
            .map(|j| {
                let b = linalg::unvec(base.column(j).as_slice(), d.pow(s as u32), d.pow(r as u32));
                linalg::kron(&b, &lift)
            })
            .collect();
        let lifted = linalg::span_of(&lifted, rows, cols);
        let (dims_eq, res) = linalg::compare_spans(&lifted, &solved);
        let eq = dims_eq && res < 1e-8;
        done.insert(gi, (base.ncols(), solved.ncols(), res, eq));
        inv_dims.push(base.ncols());
        alg_dims.push(solved.ncols());
        worst = worst.max(res);
        equal &= eq;
    }
    Ok(AmenabilityCheck {
        fiber_dims_invariant: inv_dims,
        fiber_dims_intertwiner: alg_dims,
        max_residual: worst,
        equal,
    })
}

/// Degree-zero elements at level `search_level − 1` commuting with every
/// `θ(p)`, `p ∈ S_{search_level}` (through the adjacent transpositions), and
/// with the extra degree-zero constraints. Returns the solution dimension.
pub fn relative_commutant_dim(d: usize, search_level: usize, use_perms: bool, extra: &[Field]) -> usize {
    let level = search_level.saturating_sub(1);
    let dim = d.pow(level as u32);
    let ctx = FieldCtx::plain(d);
    let mut gens: Vec<Field> = Vec::new();
    if use_perms && search_level >= 2 {
        let flip = Field::single(2, 0, linalg::perm_operator(d, &[1, 0]));
        let mut cur = flip;
        for _ in 0..search_level - 1 {
            gens.push(cur.clone());
            cur = ctx.sigma(&cur);
        }
    }
    gens.extend(extra.iter().cloned());
    let constraints: Vec<Constraint<'_>> = gens
        .iter()
        .map(|y| {
            let ctx = ctx.clone();
            Box::new(move |t: &Field| ctx.residual(&ctx.mul(t, y), &ctx.mul(y, t))) as Constraint<'_>
        })
        .collect();
    crate::cpalg::solve_fiber(level, 0, dim, dim, &linalg::eye(dim * dim), &constraints).ncols()
}

/// Relative commutant of the invariant algebra: permutations up to
/// `search_level` letters plus the degree-zero invariant generators of each
/// fiber. Fiber dimensions per point.
pub fn check_relative_commutant(model: &GroupModel, search_level: usize) -> Vec<usize> {
    let d = model.rank();
    let level = search_level.saturating_sub(1);
    let mut memo: HashMap<usize, usize> = HashMap::new();
    (0..model.points())
        .map(|x| {
            *memo.entry(model.fiber_of[x]).or_insert_with(|| {
                let extra: Vec<Field> = invariant_generators(model, x, 2, level)
                    .into_iter()
                    .filter(|y| y.degree == 0 && y.level <= level)
                    .collect();
                relative_commutant_dim(d, search_level, true, &extra)
            })
        })
        .collect()
}

/// Dual dimension table under the closure rule.
pub fn dual_dimension_table(model: &GroupModel, rmax: usize) -> Result<DualTable> {
    Ok(SpectralAnalysis::new(model, rmax.max(model.rank()))?.dual_table())
}
