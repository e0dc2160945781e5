//! Permutation arrows, the totally antisymmetric sections and the support of
//! the top exterior power.
//!
//! Permutations act homomorphically: `θ(p)` moves tensor slot `i` to slot
//! `p(i)`, so `θ(p∘q) = θ(p)·θ(q)`.
//!
//! The antisymmetric vector is unit-normalized and the local sections carry
//! weight `sqrt(λ_i)`, so that `Σ ⟨R_i, R_i⟩ = 1` holds exactly.

use std::sync::Arc;

use crate::bundle::{Bundle, Section};
use crate::cpalg::{AlgElem, Arrow};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, TOL};
use crate::report::CheckRecord;
use crate::space::{Func, MatFunc};

/// `θ(p)` as an arrow of `(E^r, E^r)`, `r = p.len()`.
pub fn theta_perm(bundle: &Arc<Bundle>, p: &[usize]) -> AlgElem {
    let r = p.len();
    let perm = linalg::perm_operator(bundle.ambient_dim(), p);
    let body = MatFunc::from_fn(bundle.points(), perm.nrows(), perm.ncols(), |x| {
        &perm * bundle.proj_power_at(x, r)
    });
    AlgElem::from_arrow(Arrow::raw(bundle.clone(), r, r, body))
}

/// Frame-coordinate `θ(p)` on `(C^d)^{⊗r}`.
pub fn theta_perm_fiber(d: usize, p: &[usize]) -> Mat {
    linalg::perm_operator(d, p)
}

/// The block permutation exchanging the first `r` factors with the last `s`.
pub fn block_swap_perm(r: usize, s: usize) -> Vec<usize> {
    (0..r).map(|i| i + s).chain(0..s).collect()
}

pub fn theta_rs(bundle: &Arc<Bundle>, r: usize, s: usize) -> AlgElem {
    theta_perm(bundle, &block_swap_perm(r, s))
}

/// `S(p)`: `p` acting on letters `1..r`, fixing letter `0`.
pub fn shift_perm(p: &[usize]) -> Vec<usize> {
    std::iter::once(0).chain(p.iter().map(|&i| i + 1)).collect()
}

/// The flip `θ ∈ (E², E²)`, computed both from the permutation operator and
/// from `Σ ψ_m ψ_l ψ_m* ψ_l*`; fails when the two disagree.
pub fn theta_flip(bundle: &Arc<Bundle>) -> Result<(AlgElem, f64)> {
    let direct = theta_perm(bundle, &[1, 0]);
    let gens: Vec<AlgElem> = bundle.generators().iter().map(AlgElem::section).collect();
    let mut sum: Option<AlgElem> = None;
    for l in &gens {
        for m in &gens {
            let term = m.mul(l)?.mul(&m.adjoint())?.mul(&l.adjoint())?;
            sum = Some(match sum {
                None => term,
                Some(s) => s.add(&term)?,
            });
        }
    }
    let from_sections = sum.ok_or_else(|| Error::Precondition("bundle has no generators".into()))?;
    let dev = direct.max_diff(&from_sections);
    if dev > TOL {
        return Err(Error::Disagreement(format!(
            "flip formulas differ by {dev:.2e}"
        )));
    }
    Ok((direct, dev))
}

/// Unit antisymmetric vector of `(C^d)^{⊗d}`.
pub fn antisym_unit(d: usize) -> Mat {
    linalg::antisymmetric_unit(d)
}

/// The local antisymmetric sections `R_i = sqrt(λ_i) F_i^{⊗d} R`, as degree-`d`
/// elements of `(ι, E^d)`.
pub fn antisym_local(bundle: &Arc<Bundle>) -> Result<Vec<AlgElem>> {
    let charts = bundle
        .charts()
        .ok_or_else(|| Error::NoCharts("antisymmetric local sections need chart data".into()))?;
    let d = bundle.rank();
    let unit = antisym_unit(d);
    let dim = bundle.ambient_dim().pow(d as u32);
    Ok((0..charts.len())
        .map(|i| {
            let body = MatFunc::from_fn(bundle.points(), dim, 1, |x| match charts.local_frame(i, x) {
                Some(f) => linalg::kron_pow(f, d) * &unit * linalg::c(charts.weight(i, x).sqrt()),
                None => Mat::zeros(dim, 1),
            });
            AlgElem::from_arrow(Arrow::raw(bundle.clone(), 0, d, body))
        })
        .collect())
}

/// The same sections as sections of the bundle `E^d`.
pub fn antisym_local_sections(bundle: &Arc<Bundle>) -> Result<(Arc<Bundle>, Vec<Section>)> {
    let power = bundle.tensor_power(bundle.rank())?;
    let sections = antisym_local(bundle)?
        .iter()
        .map(|r| Section::new(power.clone(), r.body().body().clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((power, sections))
}

/// `⟨R_i, R_j⟩` as a function.
pub fn pairing(a: &AlgElem, b: &AlgElem) -> Result<Func> {
    let prod = a.adjoint().mul(b)?;
    Ok(Func::from_fn(prod.bundle().points(), |x| prod.at(x)[(0, 0)]))
}

/// Checks `⟨R_i,R_j⟩ = sqrt(λ_iλ_j) det(u_ij)`,
/// `sqrt(λ_i) R_j = sqrt(λ_j) det(u_ij) R_i` and `Σ ⟨R_i,R_i⟩ = 1`.
pub fn check_antisym_relations(bundle: &Arc<Bundle>, tol: f64) -> Result<Vec<CheckRecord>> {
    let charts = bundle
        .charts()
        .ok_or_else(|| Error::NoCharts("antisymmetric relations need chart data".into()))?;
    let rs = antisym_local(bundle)?;
    let n = bundle.points();
    let mut pair_dev: f64 = 0.0;
    let mut rel_dev: f64 = 0.0;
    let mut total_dev: f64 = 0.0;
    let mut sums = vec![0.0; n];
    for i in 0..rs.len() {
        for j in 0..rs.len() {
            let ip = pairing(&rs[i], &rs[j])?;
            for x in 0..n {
                let wij = charts.weight(i, x) * charts.weight(j, x);
                if i == j {
                    sums[x] += ip.values[x].re;
                }
                if wij < 1e-12 {
                    pair_dev = pair_dev.max(ip.values[x].norm());
                    continue;
                }
                let det = charts.transition(i, j, x).map(|u| u.determinant()).unwrap_or_default();
                pair_dev = pair_dev.max((ip.values[x] - det * wij.sqrt()).norm());
                let lhs = rs[j].at(x) * linalg::c(charts.weight(i, x).sqrt());
                let rhs = rs[i].at(x) * (det * charts.weight(j, x).sqrt());
                rel_dev = rel_dev.max(linalg::diff_abs(&lhs, &rhs));
            }
        }
    }
    for s in sums {
        total_dev = total_dev.max((s - 1.0).abs());
    }
    let anchor = "antisymmetric local sections";
    Ok(vec![
        CheckRecord::residual("pairing of local sections", anchor, pair_dev, tol),
        CheckRecord::residual("local sections differ by determinants", anchor, rel_dev, tol),
        CheckRecord::residual("local sections have total norm one", anchor, total_dev, tol),
    ])
}

/// `P` computed as `Σ R_i R_i*` and as `(1/d!) Σ sign(p) θ(p)`; fails on
/// disagreement. Without chart data the first formula uses the fiber frame.
pub fn support_projection(bundle: &Arc<Bundle>) -> Result<(AlgElem, f64)> {
    let d = bundle.rank();
    let n = bundle.ambient_dim();
    let anti = linalg::antisymmetrizer(n, d);
    let body = MatFunc::from_fn(bundle.points(), anti.nrows(), anti.ncols(), |x| {
        &anti * bundle.proj_power_at(x, d)
    });
    let from_perms = AlgElem::from_arrow(Arrow::raw(bundle.clone(), d, d, body));
    let from_sections = match bundle.charts() {
        Some(_) => {
            let rs = antisym_local(bundle)?;
            let mut sum: Option<AlgElem> = None;
            for r in &rs {
                let term = r.mul(&r.adjoint())?;
                sum = Some(match sum {
                    None => term,
                    Some(s) => s.add(&term)?,
                });
            }
            sum.unwrap()
        }
        None => {
            let unit = antisym_unit(d);
            let body = MatFunc::from_fn(bundle.points(), anti.nrows(), anti.ncols(), |x| {
                let v = bundle.frame_power(x, d) * &unit;
                &v * v.adjoint()
            });
            AlgElem::from_arrow(Arrow::raw(bundle.clone(), d, d, body))
        }
    };
    let dev = from_perms.max_diff(&from_sections);
    if dev > TOL {
        return Err(Error::Disagreement(format!(
            "support projection formulas differ by {dev:.2e}"
        )));
    }
    Ok((from_perms, dev))
}

/// The special conjugate constant `(−1)^{d−1}/d`.
pub fn scp_constant(d: usize) -> f64 {
    let sign = if d % 2 == 1 { 1.0 } else { -1.0 };
    sign / d as f64
}

/// Result of comparing `R*σ(R')` with `λ R*R'`.
#[derive(Clone, Debug)]
pub struct ScpCheck {
    pub max_deviation: f64,
    /// `R*σ(R')` divided by `R*R'` where the latter is not small.
    pub observed_value: Option<f64>,
}

pub fn check_scp_pair(r: &AlgElem, r2: &AlgElem) -> Result<ScpCheck> {
    let d = r.bundle().rank();
    if r.degree() != d as i64 || r2.degree() != d as i64 || r.level() != 0 || r2.level() != 0 {
        return Err(Error::Precondition("expected elements of (ι, E^d)".into()));
    }
    let lhs = r.adjoint().mul(&r2.sigma())?;
    let inner = r.adjoint().mul(r2)?;
    let rhs = inner.scale(linalg::c(scp_constant(d)));
    let dev = lhs.max_diff(&rhs);
    // read off the constant from a fiber where R*R' is large
    let mut observed = None;
    let mut best = 0.0;
    for x in 0..inner.bundle().points() {
        let ip = inner.at(x)[(0, 0)];
        if ip.norm() > best && ip.norm() > 1e-6 {
            best = ip.norm();
            let p = r.bundle().proj().at(x);
            // lhs(x) = value · ip · p
            let tr = (lhs.at(x) * p.adjoint()).trace();
            observed = Some((tr / (ip * linalg::c(d as f64))).re);
        }
    }
    Ok(ScpCheck {
        max_deviation: dev,
        observed_value: observed,
    })
}
