//! The dense graded subalgebra of the Cuntz-Pimsner algebra of a bundle,
//! in its inductive-limit picture: an element of degree `k` at level `r` is
//! an arrow `E^r → E^{r+k}`, and operands are brought to a common level by
//! tensoring on the right with the identity.
//!
//! Two layers live here. [`Arrow`]/[`AlgElem`] work in the ambient
//! coordinates of the bundle's projection. [`Field`] works in fiber frame
//! coordinates (`C^d` at every point), optionally twisted by a point map so
//! that right tensoring reads the left factor at the image point; the linear
//! solvers run on this layer.

use std::sync::Arc;

use crate::bundle::{Bundle, Section};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, C64, TOL};
use crate::space::{Func, MatFunc};

/// An element of `(E^r, E^s)`.
#[derive(Clone, Debug)]
pub struct Arrow {
    bundle: Arc<Bundle>,
    r: usize,
    s: usize,
    body: MatFunc,
}

impl Arrow {
    /// Checks `p^{⊗s} T p^{⊗r} = T` pointwise.
    pub fn new(bundle: Arc<Bundle>, r: usize, s: usize, body: MatFunc) -> Result<Self> {
        let n = bundle.ambient_dim();
        if body.shape() != (n.pow(s as u32), n.pow(r as u32)) || body.len() != bundle.points() {
            return Err(Error::Shape(format!(
                "arrow ({r},{s}) needs shape {}x{}",
                n.pow(s as u32),
                n.pow(r as u32)
            )));
        }
        for x in 0..body.len() {
            let t = body.at(x);
            let squeezed = bundle.proj_power_at(x, s) * t * bundle.proj_power_at(x, r);
            let dev = linalg::diff_abs(&squeezed, t);
            if dev > TOL * (1.0 + linalg::max_abs(t)) {
                return Err(Error::NotProjection(format!(
                    "arrow leaves the tensor powers at point {x} (deviation {dev:.2e})"
                )));
            }
        }
        Ok(Self { bundle, r, s, body })
    }

    /// Projects an arbitrary matrix function into `(E^r, E^s)`.
    pub fn squeeze(bundle: Arc<Bundle>, r: usize, s: usize, body: &MatFunc) -> Self {
        let body = bundle.arrow_projector(r, s)(body);
        Self { bundle, r, s, body }
    }

    pub(crate) fn raw(bundle: Arc<Bundle>, r: usize, s: usize, body: MatFunc) -> Self {
        Self { bundle, r, s, body }
    }

    pub fn bundle(&self) -> &Arc<Bundle> {
        &self.bundle
    }

    pub fn source(&self) -> usize {
        self.r
    }

    pub fn target(&self) -> usize {
        self.s
    }

    pub fn body(&self) -> &MatFunc {
        &self.body
    }

    pub fn at(&self, x: usize) -> &Mat {
        self.body.at(x)
    }
}

/// A homogeneous element of the algebra: degree `k`, level `r`, body in
/// `(E^r, E^{r+k})`.
#[derive(Clone, Debug)]
pub struct AlgElem {
    degree: i64,
    level: usize,
    body: Arrow,
}

impl AlgElem {
    pub fn from_arrow(arrow: Arrow) -> Self {
        Self {
            degree: arrow.s as i64 - arrow.r as i64,
            level: arrow.r,
            body: arrow,
        }
    }

    /// The unit at level `level`, i.e. `p^{⊗level}`.
    pub fn identity(bundle: &Arc<Bundle>, level: usize) -> Self {
        Self::from_arrow(Arrow::raw(bundle.clone(), level, level, bundle.proj_power(level)))
    }

    /// A function in `C(X)` as a degree-zero element at level zero.
    pub fn function(bundle: &Arc<Bundle>, f: &Func) -> Self {
        let body = MatFunc::from_fn(bundle.points(), 1, 1, |x| Mat::from_element(1, 1, f.values[x]));
        Self::from_arrow(Arrow::raw(bundle.clone(), 0, 0, body))
    }

    /// A section as a degree-one element of `(ι, E)`.
    pub fn section(psi: &Section) -> Self {
        Self::from_arrow(Arrow::raw(psi.bundle().clone(), 0, 1, psi.values().clone()))
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn target_level(&self) -> usize {
        (self.level as i64 + self.degree) as usize
    }

    pub fn body(&self) -> &Arrow {
        &self.body
    }

    pub fn bundle(&self) -> &Arc<Bundle> {
        &self.body.bundle
    }

    pub fn at(&self, x: usize) -> &Mat {
        self.body.at(x)
    }

    /// Tensors on the right by the identity of `E^{levels}`.
    pub fn lift(&self, levels: usize) -> Self {
        if levels == 0 {
            return self.clone();
        }
        let b = self.bundle();
        let body = MatFunc::from_fn(
            b.points(),
            self.body.body.shape().0 * b.ambient_dim().pow(levels as u32),
            self.body.body.shape().1 * b.ambient_dim().pow(levels as u32),
            |x| linalg::kron(self.at(x), &b.proj_power_at(x, levels)),
        );
        Self::from_arrow(Arrow::raw(b.clone(), self.level + levels, self.target_level() + levels, body))
    }

    pub fn at_level(&self, level: usize) -> Result<Self> {
        if level < self.level {
            return Err(Error::Precondition(format!(
                "cannot lower level {} to {level}",
                self.level
            )));
        }
        Ok(self.lift(level - self.level))
    }

    fn check_bundle(&self, other: &AlgElem) -> Result<()> {
        if Arc::ptr_eq(self.bundle(), other.bundle()) || self.bundle().same_as(other.bundle()) {
            Ok(())
        } else {
            Err(Error::BundleMismatch("operands live over different bundles".into()))
        }
    }

    pub fn mul(&self, other: &AlgElem) -> Result<Self> {
        self.check_bundle(other)?;
        let common = self.level.max(other.target_level());
        let a = self.lift(common - self.level);
        let b = other.lift(common - other.target_level());
        let body = a.body.body.mul(&b.body.body)?;
        Ok(Self::from_arrow(Arrow::raw(
            self.bundle().clone(),
            b.level,
            a.target_level(),
            body,
        )))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_arrow(Arrow::raw(
            self.bundle().clone(),
            self.target_level(),
            self.level,
            self.body.body.adjoint(),
        ))
    }

    fn aligned(&self, other: &AlgElem) -> Result<(Self, Self)> {
        self.check_bundle(other)?;
        if self.degree != other.degree {
            return Err(Error::Precondition(format!(
                "degrees {} and {} differ",
                self.degree, other.degree
            )));
        }
        let level = self.level.max(other.level);
        Ok((self.at_level(level)?, other.at_level(level)?))
    }

    pub fn add(&self, other: &AlgElem) -> Result<Self> {
        let (a, b) = self.aligned(other)?;
        let body = a.body.body.add(&b.body.body)?;
        Ok(Self::from_arrow(Arrow::raw(a.bundle().clone(), a.level, a.target_level(), body)))
    }

    pub fn sub(&self, other: &AlgElem) -> Result<Self> {
        self.add(&other.scale(linalg::c(-1.0)))
    }

    pub fn scale(&self, z: C64) -> Self {
        let body = self.body.body.scale(z);
        Self::from_arrow(Arrow::raw(self.bundle().clone(), self.level, self.target_level(), body))
    }

    /// Multiplication by a central function.
    pub fn mix(&self, f: &Func) -> Result<Self> {
        let body = self.body.body.mix(f)?;
        Ok(Self::from_arrow(Arrow::raw(self.bundle().clone(), self.level, self.target_level(), body)))
    }

    /// The canonical endomorphism `t ↦ 1_E ⊗ t`.
    pub fn sigma(&self) -> Self {
        let b = self.bundle();
        let (rows, cols) = self.body.body.shape();
        let n = b.ambient_dim();
        let body = MatFunc::from_fn(b.points(), rows * n, cols * n, |x| {
            linalg::kron(b.proj().at(x), self.at(x))
        });
        Self::from_arrow(Arrow::raw(b.clone(), self.level + 1, self.target_level() + 1, body))
    }

    pub fn sigma_pow(&self, k: usize) -> Self {
        (0..k).fold(self.clone(), |a, _| a.sigma())
    }

    pub fn norm(&self) -> f64 {
        self.body.body.sup_norm()
    }

    /// Largest entrywise deviation after lifting to a common level;
    /// infinite for different degrees.
    pub fn max_diff(&self, other: &AlgElem) -> f64 {
        match self.aligned(other) {
            Ok((a, b)) => a.body.body.max_diff(&b.body.body),
            Err(_) => f64::INFINITY,
        }
    }

    /// Frame coordinates: `V^{⊗(r+k)}* T V^{⊗r}` at every point.
    pub fn to_field(&self) -> Field {
        let b = self.bundle();
        Field {
            level: self.level,
            degree: self.degree,
            mats: (0..b.points())
                .map(|x| b.frame_power(x, self.target_level()).adjoint() * self.at(x) * b.frame_power(x, self.level))
                .collect(),
        }
    }

    pub fn fiber(&self, x: usize) -> Field {
        let b = self.bundle();
        Field::single(
            self.level,
            self.degree,
            b.frame_power(x, self.target_level()).adjoint() * self.at(x) * b.frame_power(x, self.level),
        )
    }

    pub fn from_field(bundle: &Arc<Bundle>, field: &Field) -> Result<Self> {
        if field.mats.len() != bundle.points() {
            return Err(Error::Shape("field length differs from the sample".into()));
        }
        let (r, s) = (field.level, field.target_level());
        let n = bundle.ambient_dim();
        let body = MatFunc::from_fn(bundle.points(), n.pow(s as u32), n.pow(r as u32), |x| {
            bundle.frame_power(x, s) * &field.mats[x] * bundle.frame_power(x, r).adjoint()
        });
        Ok(Self::from_arrow(Arrow::raw(bundle.clone(), r, s, body)))
    }
}

/// Per-point matrices in frame coordinates: at each point an arrow
/// `(C^d)^{⊗level} → (C^d)^{⊗(level+degree)}`.
#[derive(Clone, Debug)]
pub struct Field {
    pub level: usize,
    pub degree: i64,
    pub mats: Vec<Mat>,
}

impl Field {
    pub fn single(level: usize, degree: i64, mat: Mat) -> Self {
        Self {
            level,
            degree,
            mats: vec![mat],
        }
    }

    pub fn constant(points: usize, level: usize, degree: i64, mat: &Mat) -> Self {
        Self {
            level,
            degree,
            mats: vec![mat.clone(); points],
        }
    }

    pub fn target_level(&self) -> usize {
        (self.level as i64 + self.degree) as usize
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn restrict(&self, x: usize) -> Field {
        Field::single(self.level, self.degree, self.mats[x].clone())
    }

    pub fn adjoint(&self) -> Field {
        Field {
            level: self.target_level(),
            degree: -self.degree,
            mats: self.mats.iter().map(|m| m.adjoint()).collect(),
        }
    }

    pub fn scale(&self, z: C64) -> Field {
        Field {
            level: self.level,
            degree: self.degree,
            mats: self.mats.iter().map(|m| m * z).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.mats.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }
}

/// Arithmetic context for [`Field`]s: fiber rank and an optional point map
/// `φ` read by right tensoring (`T ⊗ 1` at `y` is `T(φ y) ⊗ 1`).
#[derive(Clone, Debug)]
pub struct FieldCtx {
    d: usize,
    twist: Option<Arc<Vec<usize>>>,
}

impl FieldCtx {
    pub fn plain(d: usize) -> Self {
        Self { d, twist: None }
    }

    pub fn twisted(d: usize, map: Vec<usize>) -> Self {
        Self {
            d,
            twist: Some(Arc::new(map)),
        }
    }

    pub fn rank(&self) -> usize {
        self.d
    }

    fn shift(&self, y: usize, times: usize) -> usize {
        match &self.twist {
            None => y,
            Some(map) => (0..times).fold(y, |z, _| map[z]),
        }
    }

    pub fn identity(&self, points: usize, level: usize) -> Field {
        Field::constant(points, level, 0, &linalg::eye(self.d.pow(level as u32)))
    }

    pub fn lift(&self, a: &Field, levels: usize) -> Field {
        if levels == 0 {
            return a.clone();
        }
        let id = linalg::eye(self.d.pow(levels as u32));
        Field {
            level: a.level + levels,
            degree: a.degree,
            mats: (0..a.len())
                .map(|y| linalg::kron(&a.mats[self.shift(y, levels)], &id))
                .collect(),
        }
    }

    pub fn at_level(&self, a: &Field, level: usize) -> Field {
        assert!(level >= a.level, "cannot lower a field's level");
        self.lift(a, level - a.level)
    }

    pub fn mul(&self, a: &Field, b: &Field) -> Field {
        assert_eq!(a.len(), b.len(), "fields on different samples");
        let common = a.level.max(b.target_level());
        let a = self.lift(a, common - a.level);
        let b = self.lift(b, common - b.target_level());
        Field {
            level: b.level,
            degree: a.degree + b.degree,
            mats: a.mats.iter().zip(&b.mats).map(|(x, y)| x * y).collect(),
        }
    }

    pub fn sigma(&self, a: &Field) -> Field {
        let id = linalg::eye(self.d);
        Field {
            level: a.level + 1,
            degree: a.degree,
            mats: a.mats.iter().map(|m| linalg::kron(&id, m)).collect(),
        }
    }

    pub fn add(&self, a: &Field, b: &Field) -> Field {
        assert_eq!(a.degree, b.degree, "sum of different degrees");
        let level = a.level.max(b.level);
        let (a, b) = (self.at_level(a, level), self.at_level(b, level));
        Field {
            level,
            degree: a.degree,
            mats: a.mats.iter().zip(&b.mats).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, a: &Field, b: &Field) -> Field {
        self.add(a, &b.scale(linalg::c(-1.0)))
    }

    /// Commutator-style residual `a·b − c·d` brought to a common level.
    pub fn residual(&self, lhs: &Field, rhs: &Field) -> Field {
        self.sub(lhs, rhs)
    }

    pub fn max_diff(&self, a: &Field, b: &Field) -> f64 {
        if a.degree != b.degree {
            return f64::INFINITY;
        }
        let r = self.sub(a, b);
        r.mats.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }
}

/// Fiber frame basis vectors `e_l` of `C^d` as degree-one elements.
pub fn fiber_generators(d: usize) -> Vec<Field> {
    (0..d)
        .map(|l| {
            let mut e = Mat::zeros(d, 1);
            e[(l, 0)] = linalg::c(1.0);
            Field::single(0, 1, e)
        })
        .collect()
}

/// A linear constraint on a single-point field: the solution space is where
/// it vanishes.
pub type Constraint<'a> = Box<dyn Fn(&Field) -> Field + 'a>;

/// Orthonormal basis (vec columns) of the subspace of `basis` annihilated by
/// every constraint, solved at a single point. Constraints are imposed one at
/// a time so later ones only see the surviving subspace.
pub fn solve_fiber(
    level: usize,
    degree: i64,
    rows: usize,
    cols: usize,
    basis: &Mat,
    constraints: &[Constraint<'_>],
) -> Mat {
    let mut current = basis.clone();
    for constraint in constraints {
        if current.ncols() == 0 {
            break;
        }
        let mut block: Option<Mat> = None;
        for j in 0..current.ncols() {
            let t = Field::single(level, degree, linalg::unvec(current.column(j).as_slice(), rows, cols));
            let out = constraint(&t);
            let m = &out.mats[0];
            let b = block.get_or_insert_with(|| Mat::zeros(m.len(), current.ncols()));
            b.set_column(j, &linalg::vec_of(m));
        }
        let block = block.unwrap();
        if linalg::max_abs(&block) == 0.0 {
            continue;
        }
        let k = linalg::null_space(&block);
        current = linalg::orthonormalize(&(&current * k));
    }
    current
}

/// Global version over all points of a (possibly twisted) sample: the unknown
/// ranges over fields whose value at `y` lies in `bases[y]`. Returns a basis
/// of the solution space as fields.
pub fn solve_global(
    level: usize,
    degree: i64,
    shape: (usize, usize),
    bases: &[Mat],
    residual: impl Fn(&Field) -> Vec<Field>,
) -> Vec<Field> {
    let (rows, cols) = shape;
    let points = bases.len();
    let mut index = Vec::new();
    for (y, b) in bases.iter().enumerate() {
        for j in 0..b.ncols() {
            index.push((y, j));
        }
    }
    if index.is_empty() {
        return Vec::new();
    }
    let unknown = |y: usize, j: usize| {
        let mut mats = vec![Mat::zeros(rows, cols); points];
        mats[y] = linalg::unvec(bases[y].column(j).as_slice(), rows, cols);
        Field { level, degree, mats }
    };
    let mut columns = Vec::with_capacity(index.len());
    for &(y, j) in &index {
        let mut col = Vec::new();
        for f in residual(&unknown(y, j)) {
            for m in &f.mats {
                col.extend(m.iter().cloned());
            }
        }
        columns.push(col);
    }
    let height = columns[0].len();
    let mut a = Mat::zeros(height, columns.len());
    for (j, col) in columns.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            a[(i, j)] = *z;
        }
    }
    let k = if height == 0 { linalg::eye(index.len()) } else { linalg::null_space(&a) };
    (0..k.ncols())
        .map(|c| {
            let mut mats = vec![Mat::zeros(rows, cols); points];
            for (row, &(y, j)) in index.iter().enumerate() {
                let coeff = k[(row, c)];
                if coeff.norm() > 0.0 {
                    let m = linalg::unvec(bases[y].column(j).as_slice(), rows, cols) * coeff;
                    mats[y] += m;
                }
            }
            Field { level, degree, mats }
        })
        .collect()
}

/// An endomorphism of the sampled algebra, applied either globally in ambient
/// coordinates or at a single fiber in frame coordinates.
pub trait Endomorphism: Send + Sync {
    fn name(&self) -> String;

    /// Degree of the generating bimodule; fixes the natural degree of
    /// intertwiners between its powers.
    fn bimodule_degree(&self) -> i64 {
        0
    }

    fn apply(&self, a: &AlgElem) -> Result<AlgElem>;

    /// Frame-coordinate action at point `x`; `None` when the map mixes fibers.
    fn apply_fiber(&self, x: usize, a: &Field) -> Option<Field>;
}

fn power<E: Endomorphism + ?Sized>(endo: &E, a: &AlgElem, k: usize) -> Result<AlgElem> {
    (0..k).try_fold(a.clone(), |acc, _| endo.apply(&acc))
}

fn power_fiber<E: Endomorphism + ?Sized>(endo: &E, x: usize, a: &Field, k: usize) -> Option<Field> {
    (0..k).try_fold(a.clone(), |acc, _| endo.apply_fiber(x, &acc))
}

pub struct Identity;

impl Endomorphism for Identity {
    fn name(&self) -> String {
        "identity".into()
    }

    fn apply(&self, a: &AlgElem) -> Result<AlgElem> {
        Ok(a.clone())
    }

    fn apply_fiber(&self, _x: usize, a: &Field) -> Option<Field> {
        Some(a.clone())
    }
}

/// The canonical endomorphism `t ↦ 1 ⊗ t`.
pub struct Sigma {
    d: usize,
}

impl Sigma {
    pub fn new(bundle: &Bundle) -> Self {
        Self { d: bundle.rank() }
    }
}

impl Endomorphism for Sigma {
    fn name(&self) -> String {
        "sigma".into()
    }

    fn bimodule_degree(&self) -> i64 {
        1
    }

    fn apply(&self, a: &AlgElem) -> Result<AlgElem> {
        Ok(a.sigma())
    }

    fn apply_fiber(&self, _x: usize, a: &Field) -> Option<Field> {
        Some(FieldCtx::plain(self.d).sigma(a))
    }
}

/// `a ↦ Σ_l g_l a g_l*` for a finite generating set of a bimodule.
pub struct Inner {
    gens: Vec<AlgElem>,
    fibers: Vec<Vec<Field>>,
    support: AlgElem,
    d: usize,
    degree: i64,
}

impl Inner {
    /// Fails when `Σ g g*` is not a projection.
    pub fn new(gens: Vec<AlgElem>) -> Result<Self> {
        let first = gens
            .first()
            .ok_or_else(|| Error::Precondition("inner endomorphism needs generators".into()))?;
        let degree = first.degree();
        if degree < 0 || gens.iter().any(|g| g.degree() != degree) {
            return Err(Error::Precondition("generators must share a nonnegative degree".into()));
        }
        let bundle = first.bundle().clone();
        let mut support: Option<AlgElem> = None;
        for g in &gens {
            let term = g.mul(&g.adjoint())?;
            support = Some(match support {
                None => term,
                Some(s) => s.add(&term)?,
            });
        }
        let support = support.unwrap();
        let dev = support.mul(&support)?.max_diff(&support);
        if dev > 1e-8 {
            return Err(Error::NotProjection(format!(
                "Σ g g* is not idempotent (deviation {dev:.2e})"
            )));
        }
        let fibers = (0..bundle.points())
            .map(|x| gens.iter().map(|g| g.fiber(x)).collect())
            .collect();
        Ok(Self {
            d: bundle.rank(),
            gens,
            fibers,
            support,
            degree,
        })
    }

    pub fn support(&self) -> &AlgElem {
        &self.support
    }

    pub fn generators(&self) -> &[AlgElem] {
        &self.gens
    }
}

impl Endomorphism for Inner {
    fn name(&self) -> String {
        format!("inner({} generators)", self.gens.len())
    }

    fn bimodule_degree(&self) -> i64 {
        self.degree
    }

    fn apply(&self, a: &AlgElem) -> Result<AlgElem> {
        let mut out: Option<AlgElem> = None;
        for g in &self.gens {
            let term = g.mul(a)?.mul(&g.adjoint())?;
            out = Some(match out {
                None => term,
                Some(o) => o.add(&term)?,
            });
        }
        Ok(out.unwrap())
    }

    fn apply_fiber(&self, x: usize, a: &Field) -> Option<Field> {
        let ctx = FieldCtx::plain(self.d);
        let mut out: Option<Field> = None;
        for g in &self.fibers[x] {
            let term = ctx.mul(&ctx.mul(g, a), &g.adjoint());
            out = Some(match out {
                None => term,
                Some(o) => ctx.add(&o, &term),
            });
        }
        out
    }
}

/// `f ↦ f ∘ φ` on `C(X)`; undefined on elements of nonzero level.
pub struct FunctionPullback {
    map: Vec<usize>,
}

impl FunctionPullback {
    pub fn new(map: Vec<usize>) -> Self {
        Self { map }
    }
}

impl Endomorphism for FunctionPullback {
    fn name(&self) -> String {
        "function pullback".into()
    }

    fn apply(&self, a: &AlgElem) -> Result<AlgElem> {
        if a.level() != 0 || a.degree() != 0 {
            return Err(Error::Precondition("pullback acts on C(X) only".into()));
        }
        let f = Func::from_fn(self.map.len(), |x| a.at(self.map[x])[(0, 0)]);
        Ok(AlgElem::function(a.bundle(), &f))
    }

    fn apply_fiber(&self, _x: usize, _a: &Field) -> Option<Field> {
        None
    }
}

/// `a ↦ Q a Q` with `Q` the lift of a projection `q ∈ (E, E)`; not
/// multiplicative in general, used as a nilpotent control.
pub struct Compression {
    q: AlgElem,
}

impl Compression {
    pub fn new(q: AlgElem) -> Result<Self> {
        if q.level() != 1 || q.degree() != 0 {
            return Err(Error::Precondition("compression needs q in (E,E)".into()));
        }
        Ok(Self { q })
    }

    fn at(&self, level: usize, bundle: &Arc<Bundle>) -> AlgElem {
        if level == 0 {
            AlgElem::identity(bundle, 0)
        } else {
            self.q.lift(level - 1)
        }
    }
}

impl Endomorphism for Compression {
    fn name(&self) -> String {
        "compression".into()
    }

    fn apply(&self, a: &AlgElem) -> Result<AlgElem> {
        let b = a.bundle();
        let left = self.at(a.target_level(), b);
        let right = self.at(a.level(), b);
        let mut body = a.body().body().clone();
        body = left.body().body().mul(&body)?.mul(right.body().body())?;
        Ok(AlgElem::from_arrow(Arrow::raw(b.clone(), a.level(), a.target_level(), body)))
    }

    fn apply_fiber(&self, x: usize, a: &Field) -> Option<Field> {
        let q = self.q.fiber(x);
        let d = q.mats[0].nrows();
        let at = |level: usize| {
            if level == 0 {
                linalg::eye(1)
            } else {
                linalg::kron(&q.mats[0], &linalg::eye(d.pow(level as u32 - 1)))
            }
        };
        Some(Field::single(a.level, a.degree, at(a.target_level()) * &a.mats[0] * at(a.level)))
    }
}

/// `a ↦ (1 + ε)·base(a)`: a deliberately broken endomorphism.
pub struct Perturbed<E: Endomorphism> {
    base: E,
    eps: f64,
}

impl<E: Endomorphism> Perturbed<E> {
    pub fn new(base: E, eps: f64) -> Self {
        Self { base, eps }
    }
}

impl<E: Endomorphism> Endomorphism for Perturbed<E> {
    fn name(&self) -> String {
        format!("perturbed {} (ε = {})", self.base.name(), self.eps)
    }

    fn bimodule_degree(&self) -> i64 {
        self.base.bimodule_degree()
    }

    fn apply(&self, a: &AlgElem) -> Result<AlgElem> {
        Ok(self.base.apply(a)?.scale(linalg::c(1.0 + self.eps)))
    }

    fn apply_fiber(&self, x: usize, a: &Field) -> Option<Field> {
        self.base
            .apply_fiber(x, a)
            .map(|f| f.scale(linalg::c(1.0 + self.eps)))
    }
}

/// Fiberwise bases of an intertwiner space, in frame coordinates.
#[derive(Clone, Debug)]
pub struct IntertwinerSpace {
    pub level: usize,
    pub degree: i64,
    pub fibers: Vec<Mat>,
}

impl IntertwinerSpace {
    pub fn shape(&self, d: usize) -> (usize, usize) {
        (d.pow((self.level as i64 + self.degree) as u32), d.pow(self.level as u32))
    }

    pub fn fiber_dims(&self) -> Vec<usize> {
        self.fibers.iter().map(|b| b.ncols()).collect()
    }

    /// Basis of the fiber at `x` as matrices.
    pub fn fiber_elems(&self, x: usize, d: usize) -> Vec<Field> {
        let (rows, cols) = self.shape(d);
        (0..self.fibers[x].ncols())
            .map(|j| {
                Field::single(
                    self.level,
                    self.degree,
                    linalg::unvec(self.fibers[x].column(j).as_slice(), rows, cols),
                )
            })
            .collect()
    }
}

/// Default search level `max(r, s) + d`.
pub fn default_search_level(r: usize, s: usize, d: usize) -> usize {
    r.max(s) + d
}

/// Solves `t·ρ_A^{r_A}(g) = ρ_B^{r_B}(g)·t` for `t` of the given degree at
/// level `search_level`, over the generators `e_l`, `e_l*` of every fiber
/// (central functions are handled by working fiberwise).
pub fn intertwiner_space(
    bundle: &Bundle,
    endo_a: &dyn Endomorphism,
    r_a: usize,
    endo_b: &dyn Endomorphism,
    r_b: usize,
    degree: Option<i64>,
    search_level: usize,
) -> Result<IntertwinerSpace> {
    let d = bundle.rank();
    let degree =
        degree.unwrap_or(r_b as i64 * endo_b.bimodule_degree() - r_a as i64 * endo_a.bimodule_degree());
    if (search_level as i64 + degree) < 0 || search_level < r_a.max(r_b) {
        return Err(Error::Precondition(format!(
            "search level {search_level} cannot express intertwiners of degree {degree} between powers {r_a} and {r_b}"
        )));
    }
    let ctx = FieldCtx::plain(d);
    let rows = d.pow((search_level as i64 + degree) as u32);
    let cols = d.pow(search_level as u32);
    let gens: Vec<Field> = fiber_generators(d)
        .into_iter()
        .flat_map(|e| [e.adjoint(), e])
        .collect();
    let mut fibers = Vec::with_capacity(bundle.points());
    let mut solved: Vec<(Vec<(Field, Field)>, Mat)> = Vec::new();
    for x in 0..bundle.points() {
        let mut images = Vec::new();
        for g in &gens {
            let a = power_fiber(endo_a, x, g, r_a);
            let b = power_fiber(endo_b, x, g, r_b);
            match (a, b) {
                (Some(a), Some(b)) => images.push((a, b)),
                _ => {
                    return Err(Error::Precondition(format!(
                        "{} / {} do not act fiberwise",
                        endo_a.name(),
                        endo_b.name()
                    )))
                }
            }
        }
        // identical fiber data gives identical solutions
        let same = |other: &Vec<(Field, Field)>| {
            other.iter().zip(&images).all(|((a1, b1), (a2, b2))| {
                a1.mats[0].shape() == a2.mats[0].shape()
                    && b1.mats[0].shape() == b2.mats[0].shape()
                    && linalg::diff_abs(&a1.mats[0], &a2.mats[0]) < 1e-13
                    && linalg::diff_abs(&b1.mats[0], &b2.mats[0]) < 1e-13
            })
        };
        if let Some((_, sol)) = solved.iter().find(|(imgs, _)| same(imgs)) {
            fibers.push(sol.clone());
            continue;
        }
        let constraints: Vec<Constraint<'_>> = images
            .iter()
            .map(|(a, b)| {
                let ctx = ctx.clone();
                Box::new(move |t: &Field| ctx.residual(&ctx.mul(t, a), &ctx.mul(b, t))) as Constraint<'_>
            })
            .collect();
        let sol = solve_fiber(search_level, degree, rows, cols, &linalg::eye(rows * cols), &constraints);
        drop(constraints);
        solved.push((images, sol.clone()));
        fibers.push(sol);
    }
    Ok(IntertwinerSpace {
        level: search_level,
        degree,
        fibers,
    })
}

/// Functions `f` with `ρ(f·g) = f·ρ(g)` for every generator `g`.
/// Returns the solution basis as functions on the sample.
pub fn rho_center(bundle: &Arc<Bundle>, gens: &[AlgElem], rho: &dyn Endomorphism) -> Result<Vec<Func>> {
    let n = bundle.points();
    let images: Vec<AlgElem> = gens.iter().map(|g| rho.apply(g)).collect::<Result<_>>()?;
    let mut columns: Vec<Vec<C64>> = Vec::with_capacity(n);
    for x in 0..n {
        let delta = Func::indicator(n, x);
        let mut col = Vec::new();
        for (g, img) in gens.iter().zip(&images) {
            let lhs = rho.apply(&g.mix(&delta)?)?;
            let rhs = img.mix(&delta)?;
            let res = lhs.sub(&rhs)?;
            for m in res.body().body().values() {
                col.extend(m.iter().cloned());
            }
        }
        columns.push(col);
    }
    let height = columns[0].len();
    if height == 0 {
        return Ok((0..n).map(|x| Func::indicator(n, x)).collect());
    }
    let mut a = Mat::zeros(height, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            a[(i, j)] = *z;
        }
    }
    let k = linalg::null_space(&a);
    Ok((0..k.ncols())
        .map(|c| Func::from_fn(n, |x| k[(x, c)]))
        .collect())
}

/// True iff some generator keeps norm above `tol` under every power
/// `ρ^k`, `1 ≤ k ≤ kmax`.
pub fn check_nilpotence(gens: &[AlgElem], rho: &dyn Endomorphism, kmax: usize, tol: f64) -> Result<bool> {
    for g in gens {
        let mut cur = g.clone();
        let mut survives = true;
        for _ in 0..kmax {
            cur = rho.apply(&cur)?;
            if cur.norm() <= tol {
                survives = false;
                break;
            }
        }
        if survives {
            return Ok(true);
        }
    }
    Ok(false)
}

/// `ρ^k` applied globally.
pub fn apply_power(rho: &dyn Endomorphism, a: &AlgElem, k: usize) -> Result<AlgElem> {
    power(rho, a, k)
}

/// Sections of `E` as algebra elements.
pub fn section_elems(bundle: &Arc<Bundle>) -> Vec<AlgElem> {
    bundle.generators().iter().map(AlgElem::section).collect()
}
