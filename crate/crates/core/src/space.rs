//! Finite sample models of compact base spaces, and the scalar and matrix
//! function algebras over them.
//!
//! Continuity is represented only through the sampling graph: `limit_neighbors`
//! feeds the closure rule of the groups module and `faces` feed holonomy sums.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, C64};

#[derive(Clone, Debug)]
pub struct CoverSet {
    pub name: String,
    pub points: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SampleSpace {
    coords: Vec<[f64; 3]>,
    adjacency: Vec<Vec<usize>>,
    faces: Vec<Vec<usize>>,
    cover: Vec<CoverSet>,
    limit_neighbors: Vec<Vec<usize>>,
}

impl SampleSpace {
    /// Builds and validates a space. `edges` are undirected; `limit_neighbors`
    /// defaults to the adjacency neighbors when `None`.
    pub fn new(
        coords: Vec<[f64; 3]>,
        edges: &[(usize, usize)],
        faces: Vec<Vec<usize>>,
        cover: Vec<CoverSet>,
        limit_neighbors: Option<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::Space("no points".into()));
        }
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::Space(format!("bad edge ({a},{b})")));
            }
            adj[a].insert(b);
            adj[b].insert(a);
        }
        let adjacency: Vec<Vec<usize>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
        let limit_neighbors = limit_neighbors.unwrap_or_else(|| adjacency.clone());
        let space = Self {
            coords,
            adjacency,
            faces,
            cover,
            limit_neighbors,
        };
        space.validate()?;
        Ok(space)
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.limit_neighbors.len() != n {
            return Err(Error::Space("limit_neighbors must list every point".into()));
        }
        for (x, lim) in self.limit_neighbors.iter().enumerate() {
            for y in lim {
                if !self.adjacency[x].contains(y) {
                    return Err(Error::Space(format!(
                        "limit neighbor {y} of {x} is not adjacent"
                    )));
                }
            }
        }
        for (k, face) in self.faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(Error::Space(format!("face {k} has fewer than 3 vertices")));
            }
            for i in 0..face.len() {
                let (a, b) = (face[i], face[(i + 1) % face.len()]);
                if a >= n || !self.adjacency[a].contains(&b) {
                    return Err(Error::Space(format!("face {k} is not a closed edge cycle")));
                }
            }
        }
        if self.cover.is_empty() {
            return Err(Error::Space("empty cover".into()));
        }
        for set in &self.cover {
            if let Some(&bad) = set.points.iter().find(|&&p| p >= n) {
                return Err(Error::Space(format!("cover set {} has bad point {bad}", set.name)));
            }
        }
        for x in 0..n {
            if !self.cover.iter().any(|s| s.points.contains(&x)) {
                return Err(Error::Uncovered(x));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.adjacency[x]
    }

    pub fn limit_neighbors(&self, x: usize) -> &[usize] {
        &self.limit_neighbors[x]
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    pub fn cover(&self) -> &[CoverSet] {
        &self.cover
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nb) in self.adjacency.iter().enumerate() {
            for &b in nb {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.len() as i64 - self.edges().len() as i64 + self.faces.len() as i64
    }

    /// True when the sampling graph is a single cycle.
    pub fn is_circle(&self) -> bool {
        self.len() >= 3
            && self.adjacency.iter().all(|nb| nb.len() == 2)
            && self.spanning_tree().1.len() == self.len() - 1
    }

    /// BFS spanning tree from point 0: (visit order, tree edges as (parent, child)).
    pub fn spanning_tree(&self) -> (Vec<usize>, Vec<(usize, usize)>) {
        let mut seen = vec![false; self.len()];
        let mut order = Vec::new();
        let mut edges = Vec::new();
        let mut queue = VecDeque::new();
        seen[0] = true;
        queue.push_back(0);
        while let Some(x) = queue.pop_front() {
            order.push(x);
            for &y in &self.adjacency[x] {
                if !seen[y] {
                    seen[y] = true;
                    edges.push((x, y));
                    queue.push_back(y);
                }
            }
        }
        (order, edges)
    }

    pub fn in_cover(&self, i: usize, x: usize) -> bool {
        self.cover[i].points.contains(&x)
    }

    /// Cover indices containing `x`.
    pub fn charts_at(&self, x: usize) -> Vec<usize> {
        (0..self.cover.len()).filter(|&i| self.in_cover(i, x)).collect()
    }
}

/// Path graph on `n` points; with `split`, two closed cover sets overlapping at `split`.
pub fn make_interval_space(n: usize, split: Option<usize>) -> Result<SampleSpace> {
    if n < 2 {
        return Err(Error::Space("interval needs at least 2 points".into()));
    }
    let coords = (0..n).map(|i| [i as f64 / (n - 1) as f64, 0.0, 0.0]).collect();
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let cover = match split {
        None => vec![CoverSet {
            name: "all".into(),
            points: (0..n).collect(),
        }],
        Some(s) if s < n => vec![
            CoverSet {
                name: "left".into(),
                points: (0..=s).collect(),
            },
            CoverSet {
                name: "right".into(),
                points: (s..n).collect(),
            },
        ],
        Some(s) => return Err(Error::Space(format!("split {s} out of range for {n} points"))),
    };
    SampleSpace::new(coords, &edges, Vec::new(), cover, None)
}

/// Cycle graph on `n` points covered by two closed arcs overlapping at 0 and n/2.
pub fn make_circle_space(n: usize) -> Result<SampleSpace> {
    if n < 4 {
        return Err(Error::Space("circle needs at least 4 points".into()));
    }
    let coords = (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [t.cos(), t.sin(), 0.0]
        })
        .collect();
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let half = n / 2;
    let mut lower: Vec<usize> = (half..n).collect();
    lower.push(0);
    let cover = vec![
        CoverSet {
            name: "upper".into(),
            points: (0..=half).collect(),
        },
        CoverSet {
            name: "lower".into(),
            points: lower,
        },
    ];
    SampleSpace::new(coords, &edges, Vec::new(), cover, None)
}

/// Grid torus with `n` samples around the first circle and `m` around the
/// second. The cover is two closed cylinders `{i ≤ n/2}` and `{i ≥ n/2} ∪ {i = 0}`
/// whose overlap is two disjoint circles.
pub fn make_torus_space(n: usize, m: usize) -> Result<SampleSpace> {
    if n < 4 || m < 3 {
        return Err(Error::Space("torus needs n ≥ 4 and m ≥ 3".into()));
    }
    let idx = |i: usize, j: usize| (i % n) * m + (j % m);
    let mut coords = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let b = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            coords.push([(2.0 + b.cos()) * a.cos(), (2.0 + b.cos()) * a.sin(), b.sin()]);
        }
    }
    let mut edges = Vec::new();
    let mut faces = Vec::new();
    for i in 0..n {
        for j in 0..m {
            edges.push((idx(i, j), idx(i + 1, j)));
            edges.push((idx(i, j), idx(i, j + 1)));
            faces.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let half = n / 2;
    let first = (0..n * m).filter(|&x| x / m <= half).collect();
    let second = (0..n * m).filter(|&x| x / m >= half || x / m == 0).collect();
    let cover = vec![
        CoverSet {
            name: "first".into(),
            points: first,
        },
        CoverSet {
            name: "second".into(),
            points: second,
        },
    ];
    SampleSpace::new(coords, &edges, faces, cover, None)
}

/// Half-width of the overlapping equatorial band of the sphere's two charts.
pub const SPHERE_BAND: f64 = 0.3;

/// Cube-sphere: each cube face split into `subdiv²` quads, vertices projected to
/// the unit sphere. Faces are oriented counterclockwise seen from outside.
pub fn make_sphere_space(subdiv: usize) -> Result<SampleSpace> {
    if subdiv < 1 {
        return Err(Error::Space("subdiv must be at least 1".into()));
    }
    let s = subdiv as i64;
    let mut index: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    let mut coords = Vec::new();
    for i in 0..=s {
        for j in 0..=s {
            for k in 0..=s {
                let on_surface = [i, j, k].iter().any(|&v| v == 0 || v == s);
                if on_surface {
                    index.insert([i, j, k], coords.len());
                    let p = [i, j, k].map(|v| 2.0 * v as f64 / s as f64 - 1.0);
                    let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                    coords.push([p[0] / norm, p[1] / norm, p[2] / norm]);
                }
            }
        }
    }
    let mut faces = Vec::new();
    let mut edges = BTreeSet::new();
    for axis in 0..3 {
        let (b, cax) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, s] {
            for u in 0..s {
                for v in 0..s {
                    let corner = |du: i64, dv: i64| {
                        let mut g = [0i64; 3];
                        g[axis] = side;
                        g[b] = u + du;
                        g[cax] = v + dv;
                        index[&g]
                    };
                    let mut quad = vec![corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                    if side == 0 {
                        quad.reverse();
                    }
                    for e in 0..4 {
                        let (a, bb) = (quad[e], quad[(e + 1) % 4]);
                        edges.insert((a.min(bb), a.max(bb)));
                    }
                    faces.push(quad);
                }
            }
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    let north = (0..coords.len()).filter(|&x| coords[x][2] >= -SPHERE_BAND).collect();
    let south = (0..coords.len()).filter(|&x| coords[x][2] <= SPHERE_BAND).collect();
    let cover = vec![
        CoverSet {
            name: "north".into(),
            points: north,
        },
        CoverSet {
            name: "south".into(),
            points: south,
        },
    ];
    SampleSpace::new(coords, &edges, faces, cover, None)
}

/// Subordinate partition of unity: indicator of each cover set divided by the
/// number of sets containing the point.
pub fn partition_of_unity(space: &SampleSpace) -> Result<Vec<Func>> {
    let n = space.len();
    let mut counts = vec![0usize; n];
    for set in space.cover() {
        for &x in &set.points {
            counts[x] += 1;
        }
    }
    if let Some(x) = counts.iter().position(|&k| k == 0) {
        return Err(Error::Uncovered(x));
    }
    Ok((0..space.cover().len())
        .map(|i| {
            Func::from_fn(n, |x| {
                if space.in_cover(i, x) {
                    linalg::c(1.0 / counts[x] as f64)
                } else {
                    linalg::c(0.0)
                }
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Func {
    pub values: Vec<C64>,
}

impl Func {
    pub fn from_fn(n: usize, f: impl Fn(usize) -> C64) -> Self {
        Self {
            values: (0..n).map(f).collect(),
        }
    }

    pub fn constant(n: usize, v: C64) -> Self {
        Self { values: vec![v; n] }
    }

    pub fn indicator(n: usize, x: usize) -> Self {
        Self::from_fn(n, |y| linalg::c(if y == x { 1.0 } else { 0.0 }))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Matrix-valued function on sample points with a constant shape.
#[derive(Clone, Debug)]
pub struct MatFunc {
    rows: usize,
    cols: usize,
    values: Vec<Mat>,
}

impl MatFunc {
    pub fn new(rows: usize, cols: usize, values: Vec<Mat>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape("MatFunc needs positive shape".into()));
        }
        if let Some(bad) = values.iter().position(|m| m.shape() != (rows, cols)) {
            return Err(Error::Shape(format!(
                "value at point {bad} is {:?}, expected {rows}x{cols}",
                values[bad].shape()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_fn(n: usize, rows: usize, cols: usize, f: impl FnMut(usize) -> Mat) -> Self {
        let values: Vec<Mat> = (0..n).map(f).collect();
        debug_assert!(values.iter().all(|m| m.shape() == (rows, cols)));
        Self { rows, cols, values }
    }

    pub fn constant(n: usize, m: &Mat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            values: vec![m.clone(); n],
        }
    }

    pub fn identity(n: usize, k: usize) -> Self {
        Self::constant(n, &linalg::eye(k))
    }

    pub fn zeros(n: usize, rows: usize, cols: usize) -> Self {
        Self::constant(n, &Mat::zeros(rows, cols))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, x: usize) -> &Mat {
        &self.values[x]
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    pub fn mul(&self, other: &MatFunc) -> Result<MatFunc> {
        if self.cols != other.rows || self.len() != other.len() {
            return Err(Error::Shape(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn adjoint(&self) -> MatFunc {
        Self {
            rows: self.cols,
            cols: self.rows,
            values: self.values.iter().map(|m| m.adjoint()).collect(),
        }
    }

    pub fn add(&self, other: &MatFunc) -> Result<MatFunc> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &MatFunc) -> Result<MatFunc> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    /// Pointwise multiplication by a scalar function.
    pub fn mix(&self, f: &Func) -> Result<MatFunc> {
        if f.len() != self.len() {
            return Err(Error::Shape("function length differs from MatFunc".into()));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().zip(&f.values).map(|(m, &z)| m * z).collect(),
        })
    }

    pub fn scale(&self, z: C64) -> MatFunc {
        self.map(|m| m * z)
    }

    pub fn kron(&self, other: &MatFunc) -> Result<MatFunc> {
        if self.len() != other.len() {
            return Err(Error::Shape("kron of functions on different spaces".into()));
        }
        Ok(Self {
            rows: self.rows * other.rows,
            cols: self.cols * other.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| linalg::kron(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(&Mat) -> Mat) -> MatFunc {
        let values: Vec<Mat> = self.values.iter().map(f).collect();
        let (rows, cols) = values.first().map(|m| m.shape()).unwrap_or((self.rows, self.cols));
        Self { rows, cols, values }
    }

    /// Maximum over points of the fiber operator norm.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    /// Maximum entrywise deviation between two functions.
    pub fn max_diff(&self, other: &MatFunc) -> f64 {
        if self.shape() != other.shape() || self.len() != other.len() {
            return f64::INFINITY;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| linalg::diff_abs(a, b))
            .fold(0.0, f64::max)
    }

    fn check_same(&self, other: &MatFunc) -> Result<()> {
        if self.shape() != other.shape() || self.len() != other.len() {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &MatFunc, f: impl Fn(&Mat, &Mat) -> Mat) -> MatFunc {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_matrix, random_unitary};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smallest_interval() {
        let s = make_interval_space(3, None).unwrap();
        assert_eq!(s.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(s.cover().len(), 1);
        assert_eq!(s.limit_neighbors(1), &[0, 2]);
    }

    #[test]
    fn split_interval_overlap() {
        let s = make_interval_space(5, Some(2)).unwrap();
        assert_eq!(s.cover()[0].points, vec![0, 1, 2]);
        assert_eq!(s.cover()[1].points, vec![2, 3, 4]);
        assert!(make_interval_space(5, Some(5)).is_err());
        assert!(make_interval_space(1, None).is_err());
    }

    #[test]
    fn ex_ord2_interval_model() {
        let s = make_interval_space(64, Some(31)).unwrap();
        assert_eq!(s.len(), 64);
        assert_eq!(s.charts_at(31), vec![0, 1]);
        assert_eq!(s.charts_at(30), vec![0]);
        assert_eq!(s.euler_characteristic(), 1);
    }

    #[test]
    fn sphere_counts() {
        let s1 = make_sphere_space(1).unwrap();
        assert_eq!((s1.len(), s1.faces().len()), (8, 6));
        let s2 = make_sphere_space(2).unwrap();
        assert_eq!((s2.len(), s2.faces().len()), (26, 24));
        for k in 1..=5 {
            let s = make_sphere_space(k).unwrap();
            assert_eq!(s.len(), 6 * k * k + 2);
            assert_eq!(s.euler_characteristic(), 2);
        }
    }

    #[test]
    fn torus_is_euler_zero_with_circle_overlap() {
        let t = make_torus_space(8, 5).unwrap();
        assert_eq!(t.euler_characteristic(), 0);
        let both = (0..t.len()).filter(|&x| t.charts_at(x).len() == 2).count();
        assert_eq!(both, 10);
    }

    #[test]
    fn circle_detection() {
        assert!(make_circle_space(6).unwrap().is_circle());
        assert!(!make_interval_space(6, None).unwrap().is_circle());
        assert!(!make_sphere_space(1).unwrap().is_circle());
    }

    #[test]
    fn partition_single_set_and_tie() {
        let s = make_interval_space(4, None).unwrap();
        let lam = partition_of_unity(&s).unwrap();
        assert_eq!(lam.len(), 1);
        assert!(lam[0].values.iter().all(|z| (z - linalg::c(1.0)).norm() < 1e-15));
        let s = make_interval_space(5, Some(2)).unwrap();
        let lam = partition_of_unity(&s).unwrap();
        assert!((lam[0].values[2].re - 0.5).abs() < 1e-15);
        assert!((lam[1].values[2].re - 0.5).abs() < 1e-15);
        assert_eq!(lam[1].values[0].re, 0.0);
    }

    #[test]
    fn partition_sums_to_one_on_sphere() {
        let s = make_sphere_space(2).unwrap();
        let lam = partition_of_unity(&s).unwrap();
        for x in 0..s.len() {
            let total: f64 = lam.iter().map(|f| f.values[x].re).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uncovered_point_rejected() {
        let cover = vec![CoverSet {
            name: "a".into(),
            points: vec![0],
        }];
        let err = SampleSpace::new(vec![[0.0; 3]; 2], &[(0, 1)], vec![], cover, None);
        assert!(matches!(err, Err(Error::Uncovered(1))));
    }

    #[test]
    fn mat_ops_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = MatFunc::from_fn(4, 3, 2, |_| random_matrix(&mut ChaCha8Rng::seed_from_u64(9), 3, 2));
        let id = MatFunc::identity(4, 3);
        assert!(id.mul(&t).unwrap().max_diff(&t) < 1e-15);
        assert!((MatFunc::identity(4, 5).sup_norm() - 1.0).abs() < 1e-12);
        let u = MatFunc::from_fn(4, 3, 3, |_| random_unitary(&mut rng, 3));
        let ut = u.mul(&t).unwrap();
        assert!((ut.sup_norm() - t.sup_norm()).abs() < 1e-10);
        assert!(t.mul(&t).is_err());
    }

    proptest! {
        #[test]
        fn multiply_is_associative(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rand_fn = |r, c| {
                let vals: Vec<Mat> = (0..3).map(|_| random_matrix(&mut rng, r, c)).collect();
                MatFunc::new(r, c, vals).unwrap()
            };
            let a = rand_fn(2, 3);
            let b = rand_fn(3, 4);
            let cc = rand_fn(4, 2);
            let lhs = a.mul(&b).unwrap().mul(&cc).unwrap();
            let rhs = a.mul(&b.mul(&cc).unwrap()).unwrap();
            prop_assert!(lhs.max_diff(&rhs) < 1e-12 * (1.0 + lhs.sup_norm()));
        }

        #[test]
        fn sup_norm_is_c_star(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<Mat> = (0..3).map(|_| random_matrix(&mut rng, 3, 2)).collect();
            let t = MatFunc::new(3, 2, vals).unwrap();
            let n = t.sup_norm();
            let tt = t.adjoint().mul(&t).unwrap();
            prop_assert!((tt.sup_norm() - n * n).abs() < 1e-9 * (1.0 + n * n));
            let vals2: Vec<Mat> = (0..3).map(|_| random_matrix(&mut rng, 2, 3)).collect();
            let s = MatFunc::new(2, 3, vals2).unwrap();
            prop_assert!(t.mul(&s).unwrap().sup_norm() <= n * s.sup_norm() + 1e-9);
        }
    }
}
