//! Vector bundles as projection-valued functions, with optional chart data
//! recording how they were clutched.
//!
//! A bundle carries a fiber frame `V(x)` (an `n × d` isometry with `V V* = p`)
//! used to express fiber data in `C^d` coordinates. When chart data is present
//! the frame at `x` is the local frame of the chart with the largest partition
//! weight at `x` (first chart on ties).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, C64, TOL};
use crate::space::{partition_of_unity, Func, MatFunc, SampleSpace};

/// Transition functions `u_ij` for `i < j`, only read on overlap points.
#[derive(Clone, Debug, Default)]
pub struct Cocycle {
    entries: BTreeMap<(usize, usize), MatFunc>,
}

impl Cocycle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, i: usize, j: usize, u: MatFunc) {
        if i <= j {
            self.entries.insert((i, j), u);
        } else {
            self.entries.insert((j, i), u.adjoint());
        }
    }

    /// `u_ij(x)`, with `u_ii = 1` and `u_ji = u_ij*`.
    pub fn get(&self, i: usize, j: usize, x: usize, d: usize) -> Option<Mat> {
        if i == j {
            return Some(linalg::eye(d));
        }
        if i < j {
            self.entries.get(&(i, j)).map(|u| u.at(x).clone())
        } else {
            self.entries.get(&(j, i)).map(|u| u.at(x).adjoint())
        }
    }
}

/// Local frames `F_i` on the cover sets plus the partition of unity.
/// Transitions are recovered as `u_ij = F_i* F_j`.
#[derive(Clone, Debug)]
pub struct Charts {
    lambda: Vec<Func>,
    local: Vec<Vec<Option<Mat>>>,
}

impl Charts {
    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }

    pub fn weight(&self, i: usize, x: usize) -> f64 {
        self.lambda[i].values[x].re
    }

    pub fn local_frame(&self, i: usize, x: usize) -> Option<&Mat> {
        self.local[i][x].as_ref()
    }

    pub fn transition(&self, i: usize, j: usize, x: usize) -> Option<Mat> {
        match (self.local_frame(i, x), self.local_frame(j, x)) {
            (Some(a), Some(b)) => Some(a.adjoint() * b),
            _ => None,
        }
    }

    fn map(&self, f: impl Fn(&Mat) -> Mat) -> Charts {
        Charts {
            lambda: self.lambda.clone(),
            local: self
                .local
                .iter()
                .map(|row| row.iter().map(|m| m.as_ref().map(&f)).collect())
                .collect(),
        }
    }

    fn best_chart(&self, x: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.len() {
            if self.local[i][x].is_some() {
                let w = self.weight(i, x);
                if best.is_none_or(|(_, bw)| w > bw + 1e-15) {
                    best = Some((i, w));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

#[derive(Debug)]
pub struct Bundle {
    space: Arc<SampleSpace>,
    ambient: usize,
    rank: usize,
    proj: MatFunc,
    charts: Option<Charts>,
    frames: Vec<Mat>,
    label: String,
}

impl Bundle {
    fn assemble(
        space: Arc<SampleSpace>,
        rank: usize,
        proj: MatFunc,
        charts: Option<Charts>,
        label: String,
    ) -> Result<Arc<Bundle>> {
        let (n, m) = proj.shape();
        if n != m || proj.len() != space.len() {
            return Err(Error::Shape("projection must be square on every point".into()));
        }
        for x in 0..space.len() {
            let p = proj.at(x);
            let herm = linalg::diff_abs(p, &p.adjoint());
            let idem = linalg::diff_abs(&(p * p), p);
            if herm > TOL || idem > TOL {
                return Err(Error::NotProjection(format!(
                    "point {x}: |p-p*| = {herm:.2e}, |p²-p| = {idem:.2e}"
                )));
            }
            let tr = p.trace().re;
            if (tr - rank as f64).abs() > 1e-8 {
                return Err(Error::Rank(format!("point {x}: trace {tr:.6} but rank {rank}")));
            }
        }
        let frames = (0..space.len())
            .map(|x| {
                let chart = charts.as_ref().and_then(|c| c.best_chart(x).map(|i| (c, i)));
                match chart {
                    Some((c, i)) => c.local[i][x].clone().unwrap(),
                    None => linalg::projection_range(proj.at(x)),
                }
            })
            .collect::<Vec<_>>();
        if let Some(x) = frames.iter().position(|f| f.ncols() != rank) {
            return Err(Error::Rank(format!("point {x}: frame has wrong rank")));
        }
        Ok(Arc::new(Bundle {
            space,
            ambient: n,
            rank,
            proj,
            charts,
            frames,
            label,
        }))
    }

    /// Trivial bundle `X × C^d`; carries identity local frames on the space's cover.
    pub fn trivial(space: Arc<SampleSpace>, d: usize) -> Result<Arc<Bundle>> {
        if d == 0 {
            return Err(Error::Rank("trivial bundle needs d ≥ 1".into()));
        }
        let lambda = partition_of_unity(&space)?;
        let local = (0..space.cover().len())
            .map(|i| {
                (0..space.len())
                    .map(|x| space.in_cover(i, x).then(|| linalg::eye(d)))
                    .collect()
            })
            .collect();
        let proj = MatFunc::identity(space.len(), d);
        Self::assemble(space, d, proj, Some(Charts { lambda, local }), format!("trivial rank {d}"))
    }

    /// Clutches `X_i × C^d` along `u_ij`; the projection has blocks
    /// `sqrt(λ_i λ_j) u_ij`.
    pub fn from_cocycle(space: Arc<SampleSpace>, d: usize, cocycle: &Cocycle) -> Result<Arc<Bundle>> {
        if d == 0 {
            return Err(Error::Rank("rank must be positive".into()));
        }
        let k = space.cover().len();
        let lambda = partition_of_unity(&space)?;
        for x in 0..space.len() {
            let here = space.charts_at(x);
            for &i in &here {
                for &j in &here {
                    let u = cocycle.get(i, j, x, d).ok_or_else(|| {
                        Error::Cocycle(format!("u_{i}{j} missing on the overlap at point {x}"))
                    })?;
                    if u.shape() != (d, d) {
                        return Err(Error::Shape(format!("u_{i}{j} is not {d}x{d}")));
                    }
                    if !linalg::is_unitary(&u, TOL) {
                        return Err(Error::NotUnitary(format!("u_{i}{j} at point {x}")));
                    }
                }
            }
            for &i in &here {
                for &j in &here {
                    for &l in &here {
                        let lhs = cocycle.get(i, l, x, d).unwrap();
                        let rhs = cocycle.get(i, j, x, d).unwrap() * cocycle.get(j, l, x, d).unwrap();
                        let dev = linalg::diff_abs(&lhs, &rhs);
                        if dev > TOL {
                            return Err(Error::Cocycle(format!(
                                "u_{i}{l} != u_{i}{j} u_{j}{l} at point {x} (deviation {dev:.2e})"
                            )));
                        }
                    }
                }
            }
        }
        let n = d * k;
        let local: Vec<Vec<Option<Mat>>> = (0..k)
            .map(|j| {
                (0..space.len())
                    .map(|x| {
                        space.in_cover(j, x).then(|| {
                            let mut f = Mat::zeros(n, d);
                            for i in space.charts_at(x) {
                                let w = lambda[i].values[x].re.sqrt();
                                let u = cocycle.get(i, j, x, d).unwrap();
                                f.view_mut((i * d, 0), (d, d)).copy_from(&(u * linalg::c(w)));
                            }
                            f
                        })
                    })
                    .collect()
            })
            .collect();
        let proj = MatFunc::from_fn(space.len(), n, n, |x| {
            let mut p = Mat::zeros(n, n);
            let here = space.charts_at(x);
            for &i in &here {
                for &j in &here {
                    let w = (lambda[i].values[x].re * lambda[j].values[x].re).sqrt();
                    let u = cocycle.get(i, j, x, d).unwrap();
                    p.view_mut((i * d, j * d), (d, d)).copy_from(&(u * linalg::c(w)));
                }
            }
            p
        });
        Self::assemble(
            space,
            d,
            proj,
            Some(Charts { lambda, local }),
            format!("clutched rank {d}"),
        )
    }

    /// Bundle given directly by a projection; frames come from its eigenvectors.
    pub fn from_projection(space: Arc<SampleSpace>, proj: MatFunc, label: &str) -> Result<Arc<Bundle>> {
        let rank = proj.values().first().map(|p| p.trace().re.round() as usize).unwrap_or(0);
        Self::assemble(space, rank, proj, None, label.to_string())
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn proj(&self) -> &MatFunc {
        &self.proj
    }

    pub fn charts(&self) -> Option<&Charts> {
        self.charts.as_ref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> usize {
        self.space.len()
    }

    pub fn frame(&self, x: usize) -> &Mat {
        &self.frames[x]
    }

    pub fn frame_power(&self, x: usize, r: usize) -> Mat {
        linalg::kron_pow(&self.frames[x], r)
    }

    pub fn proj_power_at(&self, x: usize, r: usize) -> Mat {
        linalg::kron_pow(self.proj.at(x), r)
    }

    pub fn proj_power(&self, r: usize) -> MatFunc {
        let dim = self.ambient.pow(r as u32);
        MatFunc::from_fn(self.points(), dim, dim, |x| self.proj_power_at(x, r))
    }

    /// Same space, ambient dimension and projection (within tolerance).
    pub fn same_as(&self, other: &Bundle) -> bool {
        std::ptr::eq(self, other)
            || (Arc::ptr_eq(&self.space, &other.space) || self.space.len() == other.space.len())
                && self.ambient == other.ambient
                && self.proj.max_diff(&other.proj) < TOL
    }

    fn check_space(&self, other: &Bundle) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space.len() == other.space.len() {
            Ok(())
        } else {
            Err(Error::BundleMismatch("bundles live on different spaces".into()))
        }
    }

    /// `E^{⊗r}`; `r = 0` gives the trivial line `ι`.
    pub fn tensor_power(&self, r: usize) -> Result<Arc<Bundle>> {
        let charts = self.charts.as_ref().map(|c| c.map(|f| linalg::kron_pow(f, r)));
        Self::assemble(
            self.space.clone(),
            self.rank.pow(r as u32),
            self.proj_power(r),
            charts,
            format!("({})^{r}", self.label),
        )
    }

    /// Conjugate bundle, realized with the entrywise conjugate projection.
    pub fn dual(&self) -> Result<Arc<Bundle>> {
        let charts = self.charts.as_ref().map(|c| c.map(|f| f.conjugate()));
        Self::assemble(
            self.space.clone(),
            self.rank,
            self.proj.map(|p| p.conjugate()),
            charts,
            format!("({})*", self.label),
        )
    }

    /// Block-diagonal direct sum. Chart data survives when both summands are
    /// charted on the same cover.
    pub fn direct_sum(&self, other: &Bundle) -> Result<Arc<Bundle>> {
        self.check_space(other)?;
        let (n1, n2) = (self.ambient, other.ambient);
        let blockdiag = |a: &Mat, b: &Mat| {
            let mut m = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
            m.view_mut((0, 0), a.shape()).copy_from(a);
            m.view_mut(a.shape(), b.shape()).copy_from(b);
            m
        };
        let proj = MatFunc::from_fn(self.points(), n1 + n2, n1 + n2, |x| {
            blockdiag(self.proj.at(x), other.proj.at(x))
        });
        let charts = match (&self.charts, &other.charts) {
            (Some(a), Some(b)) if a.len() == b.len() => Some(Charts {
                lambda: a.lambda.clone(),
                local: (0..a.len())
                    .map(|i| {
                        (0..self.points())
                            .map(|x| match (&a.local[i][x], &b.local[i][x]) {
                                (Some(fa), Some(fb)) => Some(blockdiag(fa, fb)),
                                _ => None,
                            })
                            .collect()
                    })
                    .collect(),
            }),
            _ => None,
        };
        Self::assemble(
            self.space.clone(),
            self.rank + other.rank,
            proj,
            charts,
            format!("{} ⊕ {}", self.label, other.label),
        )
    }

    /// Top exterior power as a rank-one sub-bundle of `E^d`.
    pub fn exterior_top(&self) -> Result<Arc<Bundle>> {
        let d = self.rank;
        let anti = linalg::antisymmetrizer(self.ambient, d);
        let unit = linalg::antisymmetric_unit(d);
        let dim = self.ambient.pow(d as u32);
        let mut frames = Vec::with_capacity(self.points());
        let mut projs = Vec::with_capacity(self.points());
        for x in 0..self.points() {
            let pd = self.proj_power_at(x, d);
            let q = &pd * &anti * &pd;
            let (vals, _) = linalg::eigh(&q);
            let rank = vals.iter().filter(|&&v| v > 0.5).count();
            if rank != 1 {
                return Err(Error::Rank(format!("exterior power has rank {rank} at point {x}")));
            }
            let v = self.frame_power(x, d) * &unit;
            projs.push(&v * v.adjoint());
            frames.push(v);
        }
        let charts = self.charts.as_ref().map(|c| c.map(|f| linalg::kron_pow(f, d) * &unit));
        let proj = MatFunc::new(dim, dim, projs)?;
        let out = Self::assemble(self.space.clone(), 1, proj, charts, format!("λ({})", self.label))?;
        debug_assert!(out.frames.iter().zip(&frames).all(|(a, b)| {
            (a.adjoint() * b)[(0, 0)].norm() > 1.0 - 1e-9
        }));
        Ok(out)
    }

    /// The `n` generating sections `x ↦ p(x) e_l`.
    pub fn generators(self: &Arc<Self>) -> Vec<Section> {
        (0..self.ambient)
            .map(|l| Section {
                bundle: self.clone(),
                vec: MatFunc::from_fn(self.points(), self.ambient, 1, |x| {
                    Mat::from_iterator(self.ambient, 1, self.proj.at(x).column(l).iter().cloned())
                }),
            })
            .collect()
    }

    /// The map `T ↦ p^{⊗s} T p^{⊗r}` onto `(E^r, E^s)`.
    pub fn arrow_projector(&self, r: usize, s: usize) -> impl Fn(&MatFunc) -> MatFunc + '_ {
        let pr = self.proj_power(r);
        let ps = self.proj_power(s);
        move |t: &MatFunc| {
            MatFunc::from_fn(t.len(), ps.shape().0, pr.shape().0, |x| ps.at(x) * t.at(x) * pr.at(x))
        }
    }
}

/// A continuous section of a bundle.
#[derive(Clone, Debug)]
pub struct Section {
    bundle: Arc<Bundle>,
    vec: MatFunc,
}

impl Section {
    pub fn new(bundle: Arc<Bundle>, vec: MatFunc) -> Result<Self> {
        if vec.shape() != (bundle.ambient_dim(), 1) || vec.len() != bundle.points() {
            return Err(Error::Shape("section must be an n×1 function".into()));
        }
        for x in 0..vec.len() {
            let dev = linalg::diff_abs(&(bundle.proj().at(x) * vec.at(x)), vec.at(x));
            if dev > TOL {
                return Err(Error::NotProjection(format!(
                    "section leaves the fiber at point {x} (deviation {dev:.2e})"
                )));
            }
        }
        Ok(Self { bundle, vec })
    }

    pub fn bundle(&self) -> &Arc<Bundle> {
        &self.bundle
    }

    pub fn values(&self) -> &MatFunc {
        &self.vec
    }

    pub fn at(&self, x: usize) -> &Mat {
        self.vec.at(x)
    }

    /// The C(X)-valued scalar product `x ↦ ψ(x)* ψ'(x)`.
    pub fn inner(&self, other: &Section) -> Result<Func> {
        if !self.bundle.same_as(&other.bundle) {
            return Err(Error::BundleMismatch("inner product across bundles".into()));
        }
        Ok(Func::from_fn(self.vec.len(), |x| (self.at(x).adjoint() * other.at(x))[(0, 0)]))
    }

    pub fn mix(&self, f: &Func) -> Result<Section> {
        Ok(Self {
            bundle: self.bundle.clone(),
            vec: self.vec.mix(f)?,
        })
    }

    pub fn add(&self, other: &Section) -> Result<Section> {
        if !self.bundle.same_as(&other.bundle) {
            return Err(Error::BundleMismatch("sum across bundles".into()));
        }
        Ok(Self {
            bundle: self.bundle.clone(),
            vec: self.vec.add(&other.vec)?,
        })
    }

    /// Smallest fiber norm over the sample.
    pub fn min_norm(&self) -> f64 {
        self.vec
            .values()
            .iter()
            .map(|v| v.norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Unit phase of `det(a* b)` for orthonormal column sets, `None` when the
/// overlap is (numerically) degenerate.
pub fn link_phase(a: &Mat, b: &Mat) -> Option<C64> {
    let det = (a.adjoint() * b).determinant();
    (det.norm() > 1e-8).then(|| det / det.norm())
}

/// Sum over faces of the arg of the product of edge links, divided by 2π:
/// the discrete first Chern number of the determinant line of a subspace field.
pub fn winding_number(space: &SampleSpace, field: &[Mat]) -> Result<f64> {
    if space.faces().is_empty() {
        return Err(Error::Precondition("space has no faces".into()));
    }
    let mut total = 0.0;
    for face in space.faces() {
        let mut prod = linalg::c(1.0);
        for i in 0..face.len() {
            let (a, b) = (face[i], face[(i + 1) % face.len()]);
            prod *= link_phase(&field[a], &field[b])
                .ok_or_else(|| Error::Precondition(format!("degenerate link on edge ({a},{b})")))?;
        }
        total += prod.arg();
    }
    Ok(total / (2.0 * PI))
}

/// Aligns a subspace field along a BFS spanning tree by unitary Procrustes.
/// Returns the aligned bases and the largest mismatch across non-tree edges.
pub fn align_along_tree(space: &SampleSpace, field: &[Mat]) -> (Vec<Mat>, f64) {
    let (order, tree) = space.spanning_tree();
    let mut aligned: Vec<Mat> = field.to_vec();
    let mut parent = vec![usize::MAX; space.len()];
    for &(a, b) in &tree {
        parent[b] = a;
    }
    for &x in order.iter().skip(1) {
        let p = parent[x];
        let m = aligned[p].adjoint() * &field[x];
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        // closest unitary to m is u vt; rotate x's basis onto p's
        aligned[x] = &field[x] * (u * vt).adjoint();
    }
    let mut mismatch: f64 = 0.0;
    for (a, b) in space.edges() {
        if parent[b] == a || parent[a] == b {
            continue;
        }
        mismatch = mismatch.max(linalg::diff_abs(&aligned[a], &aligned[b]));
    }
    (aligned, mismatch)
}

/// Circle-shaped transition: `u` at the overlap point opposite 0, identity at 0.
fn circle_cocycle(space: &SampleSpace, d: usize, twist: &Mat) -> Cocycle {
    let half = space.len() / 2;
    let mut cocycle = Cocycle::new();
    cocycle.insert(
        0,
        1,
        MatFunc::from_fn(space.len(), d, d, |x| {
            if x == half {
                twist.clone()
            } else {
                linalg::eye(d)
            }
        }),
    );
    cocycle
}

/// Rank-one bundle on the circle clutched by `+1` and `-1` on the two overlap
/// points: the complexified Möbius band.
pub fn mobius_line(points: usize) -> Result<Arc<Bundle>> {
    let space = Arc::new(crate::space::make_circle_space(points)?);
    let twist = Mat::from_element(1, 1, linalg::c(-1.0));
    let cocycle = circle_cocycle(&space, 1, &twist);
    Bundle::from_cocycle(space, 1, &cocycle)
}

/// Rank-two bundle on the circle with one nontrivial transition; `special`
/// selects a determinant-one twist, otherwise `diag(1, -1)`.
pub fn clutched_circle_rank2(points: usize, special: bool) -> Result<Arc<Bundle>> {
    let space = Arc::new(crate::space::make_circle_space(points)?);
    let (z, o) = (linalg::c(0.0), linalg::c(1.0));
    let twist = if special {
        Mat::from_row_slice(2, 2, &[z, -o, o, z])
    } else {
        Mat::from_row_slice(2, 2, &[o, z, z, -o])
    };
    let cocycle = circle_cocycle(&space, 2, &twist);
    Bundle::from_cocycle(space, 2, &cocycle)
}

/// Line bundle on the sphere clutched by `(x + iy)/|x + iy|` on the band.
pub fn bott_line(subdiv: usize) -> Result<Arc<Bundle>> {
    let space = Arc::new(crate::space::make_sphere_space(subdiv)?);
    bott_line_on(space)
}

pub fn bott_line_on(space: Arc<SampleSpace>) -> Result<Arc<Bundle>> {
    let coords = space.coords().to_vec();
    let mut cocycle = Cocycle::new();
    cocycle.insert(
        0,
        1,
        MatFunc::from_fn(space.len(), 1, 1, |x| {
            let [a, b, _] = coords[x];
            let z = C64::new(a, b);
            let w = if z.norm() > 1e-12 { z / z.norm() } else { linalg::c(1.0) };
            Mat::from_element(1, 1, w)
        }),
    );
    Bundle::from_cocycle(space, 1, &cocycle)
}

/// `L ⊕ L*` for the Bott line `L`.
pub fn bott_sum(subdiv: usize) -> Result<(Arc<Bundle>, Arc<Bundle>)> {
    let line = bott_line(subdiv)?;
    let dual = line.dual()?;
    let sum = line.direct_sum(&dual)?;
    Ok((line, sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{make_circle_space, make_interval_space};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interval(n: usize, split: Option<usize>) -> Arc<SampleSpace> {
        Arc::new(make_interval_space(n, split).unwrap())
    }

    #[test]
    fn trivial_rank_one_is_identity() {
        let e = Bundle::trivial(interval(3, None), 1).unwrap();
        assert_eq!((e.ambient_dim(), e.rank()), (1, 1));
        assert!(e.proj().max_diff(&MatFunc::identity(3, 1)) < 1e-15);
    }

    #[test]
    fn trivial_generators_orthonormal() {
        let e = Bundle::trivial(interval(4, None), 3).unwrap();
        let gens = e.generators();
        assert_eq!(gens.len(), 3);
        for (l, a) in gens.iter().enumerate() {
            for (m, b) in gens.iter().enumerate() {
                let f = a.inner(b).unwrap();
                let want = if l == m { 1.0 } else { 0.0 };
                assert!(f.values.iter().all(|z| (z - linalg::c(want)).norm() < 1e-15));
            }
        }
    }

    #[test]
    fn one_chart_cocycle_is_trivial() {
        let e = Bundle::from_cocycle(interval(4, None), 2, &Cocycle::new()).unwrap();
        assert_eq!(e.ambient_dim(), 2);
        assert!(e.proj().max_diff(&MatFunc::identity(4, 2)) < 1e-15);
    }

    #[test]
    fn serre_swan_on_clutched_bundles() {
        for e in [mobius_line(8).unwrap(), clutched_circle_rank2(8, true).unwrap(), bott_line(2).unwrap()] {
            let gens = e.generators();
            assert_eq!(gens.len(), e.ambient_dim());
            for x in 0..e.points() {
                let mut sum = Mat::zeros(e.ambient_dim(), e.ambient_dim());
                for g in &gens {
                    sum += g.at(x) * g.at(x).adjoint();
                }
                assert!(linalg::diff_abs(&sum, e.proj().at(x)) < 1e-9);
                let f = e.frame(x);
                assert!(linalg::diff_abs(&(f.adjoint() * f), &linalg::eye(e.rank())) < 1e-12);
                assert!(linalg::diff_abs(&(f * f.adjoint()), e.proj().at(x)) < 1e-12);
            }
        }
    }

    #[test]
    fn mobius_generators_vanish_somewhere() {
        let e = mobius_line(8).unwrap();
        let gens = e.generators();
        assert_eq!(gens.len(), 2);
        for g in &gens {
            assert!(g.min_norm() < 1e-12);
        }
    }

    #[test]
    fn chart_transitions_reproduce_cocycle() {
        let e = clutched_circle_rank2(8, false).unwrap();
        let charts = e.charts().unwrap();
        let u = charts.transition(0, 1, 4).unwrap();
        let want = Mat::from_row_slice(2, 2, &[linalg::c(1.0), linalg::c(0.0), linalg::c(0.0), linalg::c(-1.0)]);
        assert!(linalg::diff_abs(&u, &want) < 1e-12);
        assert!(charts.transition(0, 1, 2).is_none());
    }

    #[test]
    fn non_cocycle_rejected() {
        let space = interval(5, Some(2));
        let mut bad = Cocycle::new();
        bad.insert(0, 1, MatFunc::constant(5, &(linalg::eye(2) * linalg::c(1.5))));
        assert!(matches!(
            Bundle::from_cocycle(space.clone(), 2, &bad),
            Err(Error::NotUnitary(_))
        ));
        // three sets sharing a point with inconsistent transitions
        let cover = ["a", "b", "c"]
            .iter()
            .map(|n| crate::space::CoverSet {
                name: n.to_string(),
                points: vec![0, 1],
            })
            .collect();
        let s3 = Arc::new(SampleSpace::new(vec![[0.0; 3]; 2], &[(0, 1)], vec![], cover, None).unwrap());
        let mut c = Cocycle::new();
        let minus = MatFunc::constant(2, &Mat::from_element(1, 1, linalg::c(-1.0)));
        c.insert(0, 1, minus.clone());
        c.insert(1, 2, minus);
        c.insert(0, 2, MatFunc::identity(2, 1).scale(linalg::c(-1.0)));
        assert!(matches!(Bundle::from_cocycle(s3, 1, &c), Err(Error::Cocycle(_))));
    }

    #[test]
    fn tensor_powers() {
        let e = clutched_circle_rank2(6, true).unwrap();
        let e0 = e.tensor_power(0).unwrap();
        assert_eq!((e0.rank(), e0.ambient_dim()), (1, 1));
        for r in 1..=3 {
            assert_eq!(e.tensor_power(r).unwrap().rank(), 2usize.pow(r as u32));
        }
        let p3 = e.proj_power(3);
        let p12 = e.proj_power(1).kron(&e.proj_power(2)).unwrap();
        assert!(p3.max_diff(&p12) < 1e-12);
    }

    #[test]
    fn exterior_top_of_trivial_is_antisymmetric_line() {
        let e = Bundle::trivial(interval(3, None), 3).unwrap();
        let l = e.exterior_top().unwrap();
        assert_eq!(l.rank(), 1);
        let r = linalg::antisymmetric_unit(3);
        assert!(linalg::diff_abs(l.proj().at(1), &(&r * r.adjoint())) < 1e-12);
    }

    #[test]
    fn bott_sum_shape() {
        let (line, sum) = bott_sum(2).unwrap();
        assert_eq!((line.rank(), sum.rank(), sum.ambient_dim()), (1, 2, 4));
        assert!(sum.charts().is_some());
        assert_eq!(sum.exterior_top().unwrap().rank(), 1);
    }

    #[test]
    fn bott_line_winds_once() {
        let line = bott_line(4).unwrap();
        let field: Vec<Mat> = (0..line.points()).map(|x| line.frame(x).clone()).collect();
        let w = winding_number(line.space(), &field).unwrap();
        assert!((w.abs() - 1.0).abs() < 1e-9, "winding {w}");
        let dual: Vec<Mat> = field.iter().map(|f| f.conjugate()).collect();
        assert!((winding_number(line.space(), &dual).unwrap() + w).abs() < 1e-9);
    }

    #[test]
    fn projector_is_idempotent_with_expected_rank() {
        let e = clutched_circle_rank2(6, false).unwrap();
        let proj = e.arrow_projector(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = MatFunc::from_fn(6, 16, 4, |_| linalg::random_matrix(&mut rng, 16, 4));
        let once = proj(&t);
        assert!(proj(&once).max_diff(&once) < 1e-10);
        // fiber dimension of the fixed space is d^{r+s}
        let x = 1;
        let (pr, ps) = (e.proj_power_at(x, 1), e.proj_power_at(x, 2));
        let op = linalg::kron(&pr.transpose(), &ps);
        let (vals, _) = linalg::eigh(&op);
        assert_eq!(vals.iter().filter(|&&v| v > 0.5).count(), 8);
    }

    #[test]
    fn direct_sum_needs_same_space() {
        let a = Bundle::trivial(interval(3, None), 1).unwrap();
        let b = Bundle::trivial(Arc::new(make_circle_space(5).unwrap()), 1).unwrap();
        assert!(a.direct_sum(&b).is_err());
    }

    proptest! {
        #[test]
        fn random_circle_cocycles_have_constant_rank(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let space = Arc::new(make_circle_space(8).unwrap());
            let u0 = linalg::random_unitary(&mut rng, 2);
            let u1 = linalg::random_unitary(&mut rng, 2);
            let mut c = Cocycle::new();
            c.insert(0, 1, MatFunc::from_fn(8, 2, 2, |x| if x == 0 { u0.clone() } else { u1.clone() }));
            let e = Bundle::from_cocycle(space, 2, &c).unwrap();
            for x in 0..8 {
                prop_assert!((e.proj().at(x).trace().re - 2.0).abs() < 1e-9);
            }
        }
    }
}
