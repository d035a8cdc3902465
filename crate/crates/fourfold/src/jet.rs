//! Metric and scalar fields with pointwise derivative data (jets).
//!
//! A field is a label plus a provider closure that produces a truncated
//! Taylor expansion at a requested point and order. Three provenances:
//!
//! * `Analytic`: built from catalog closed forms over series arithmetic.
//! * `Lifted`: a user closure written against series arithmetic; exact
//!   derivatives, same mechanics as `Analytic`, different origin.
//! * `FiniteDifference`: only pointwise values are available; derivatives
//!   come from order-6 central stencils, tensor products for mixed terms,
//!   with an h vs h/2 consistency gate on every call.
//!
//! Metric jets are validated on construction: finite entries, symmetry,
//! and positive definiteness at the base point.

use std::collections::HashMap;
use std::sync::Arc;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::chart::ChartPoint;
use crate::error::GeomError;
use crate::taylor::Taylor;
use crate::tol;

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Analytic,
    Lifted,
    FiniteDifference { h: f64 },
}

/// Truncated expansion of every metric component at one point.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub point: ChartPoint,
    pub dim: usize,
    pub order: usize,
    comp: Vec<Taylor>,
}

impl MetricJet {
    pub fn new(point: ChartPoint, dim: usize, order: usize, comp: Vec<Taylor>) -> Result<Self, GeomError> {
        assert_eq!(comp.len(), dim * dim);
        let jet = MetricJet { point, dim, order, comp };
        jet.validate()?;
        Ok(jet)
    }

    fn validate(&self) -> Result<(), GeomError> {
        for t in &self.comp {
            if !t.is_finite() {
                return Err(GeomError::NonFiniteFieldValue { at: self.point });
            }
        }
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let a = self.value(i, j);
                let b = self.value(j, i);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(GeomError::RankMismatch);
                }
            }
        }
        let min = self.min_eigenvalue();
        if !(min > tol::JET_PD_FLOOR) {
            return Err(GeomError::PdViolation { min_eig: min });
        }
        Ok(())
    }

    pub fn component(&self, i: usize, j: usize) -> &Taylor {
        &self.comp[i * self.dim + j]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.comp[i * self.dim + j].value()
    }

    /// ∂^e g_ij at the base point.
    pub fn partial(&self, i: usize, j: usize, e: &[u8; 4]) -> f64 {
        self.comp[i * self.dim + j].partial(e)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.value(i, j))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Truncated expansion of a scalar at one point.
#[derive(Clone, Debug)]
pub struct ScalarJet {
    pub point: ChartPoint,
    pub dim: usize,
    pub order: usize,
    pub taylor: Taylor,
}

impl ScalarJet {
    pub fn value(&self) -> f64 {
        self.taylor.value()
    }

    pub fn grad(&self, a: usize) -> f64 {
        let mut e = [0u8; 4];
        e[a] = 1;
        self.taylor.partial(&e)
    }

    pub fn hess(&self, a: usize, b: usize) -> f64 {
        let mut e = [0u8; 4];
        e[a] += 1;
        e[b] += 1;
        self.taylor.partial(&e)
    }

    pub fn partial(&self, e: &[u8; 4]) -> f64 {
        self.taylor.partial(e)
    }
}

type MetricProvider = dyn Fn(ChartPoint, usize) -> Result<Vec<Taylor>, GeomError> + Send + Sync;
type ScalarProvider = dyn Fn(ChartPoint, usize) -> Result<Taylor, GeomError> + Send + Sync;

/// A metric given as a field over a chart.
#[derive(Clone)]
pub struct MetricField {
    pub label: String,
    pub dim: usize,
    pub max_order: usize,
    pub provenance: Provenance,
    provider: Arc<MetricProvider>,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("max_order", &self.max_order)
            .field("provenance", &self.provenance)
            .finish()
    }
}

/// Coordinate seeds for an exact provider: x^a as degree-1 expansions.
pub fn seeds(p: ChartPoint, dim: usize, order: usize) -> [Taylor; 4] {
    std::array::from_fn(|a| {
        if a < dim {
            Taylor::variable(dim, order, a, p[a])
        } else {
            Taylor::constant(dim, order, 0.0)
        }
    })
}

impl MetricField {
    fn exact(
        label: &str,
        dim: usize,
        provenance: Provenance,
        f: impl Fn(&[Taylor; 4]) -> Vec<Taylor> + Send + Sync + 'static,
    ) -> Self {
        let provider = move |p: ChartPoint, order: usize| {
            let x = seeds(p, dim, order);
            let comp = f(&x);
            assert_eq!(comp.len(), dim * dim, "provider must return dim² components");
            Ok(comp)
        };
        MetricField {
            label: label.to_string(),
            dim,
            max_order: crate::taylor::MAX_ORDER,
            provenance,
            provider: Arc::new(provider),
        }
    }

    /// Catalog closed form evaluated in series arithmetic.
    pub fn analytic(
        label: &str,
        dim: usize,
        f: impl Fn(&[Taylor; 4]) -> Vec<Taylor> + Send + Sync + 'static,
    ) -> Self {
        Self::exact(label, dim, Provenance::Analytic, f)
    }

    /// User-supplied closure lifted through series arithmetic.
    pub fn lifted(
        label: &str,
        dim: usize,
        f: impl Fn(&[Taylor; 4]) -> Vec<Taylor> + Send + Sync + 'static,
    ) -> Self {
        Self::exact(label, dim, Provenance::Lifted, f)
    }

    /// Pointwise component values only; derivatives by central differences
    /// with step `h`, cross-checked against step `h/2` at `fd_tol`.
    pub fn finite_difference(
        label: &str,
        dim: usize,
        f: impl Fn(ChartPoint) -> Vec<f64> + Send + Sync + 'static,
        h: f64,
        fd_tol: f64,
    ) -> Self {
        assert!(h > 0.0);
        let ncomp = dim * dim;
        let provider = move |p: ChartPoint, order: usize| {
            let coarse = fd_components(&f, ncomp, dim, p, order, h)?;
            let fine = fd_components(&f, ncomp, dim, p, order, 0.5 * h)?;
            let rel = jet_mismatch(&coarse, &fine, dim, order);
            if rel > fd_tol {
                return Err(GeomError::JetInconsistent { rel_err: rel, tol: fd_tol });
            }
            Ok(fine)
        };
        MetricField {
            label: label.to_string(),
            dim,
            max_order: 4,
            provenance: Provenance::FiniteDifference { h },
            provider: Arc::new(provider),
        }
    }

    /// Field defined directly by a jet provider. Used for metrics derived
    /// from other fields (deformations, conformal rescalings).
    pub fn from_provider(
        label: &str,
        dim: usize,
        max_order: usize,
        provenance: Provenance,
        provider: impl Fn(ChartPoint, usize) -> Result<Vec<Taylor>, GeomError> + Send + Sync + 'static,
    ) -> Self {
        MetricField {
            label: label.to_string(),
            dim,
            max_order,
            provenance,
            provider: Arc::new(provider),
        }
    }

    pub fn jet(&self, p: ChartPoint, order: usize) -> Result<MetricJet, GeomError> {
        if order > self.max_order {
            return Err(GeomError::InsufficientJetOrder { need: order, have: self.max_order });
        }
        let comp = (self.provider)(p, order)?;
        MetricJet::new(p, self.dim, order, comp)
    }
}

/// A scalar function given as a field over a chart.
#[derive(Clone)]
pub struct ScalarField {
    pub label: String,
    pub dim: usize,
    pub max_order: usize,
    pub provenance: Provenance,
    provider: Arc<ScalarProvider>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("max_order", &self.max_order)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ScalarField {
    fn exact(
        label: &str,
        dim: usize,
        provenance: Provenance,
        f: impl Fn(&[Taylor; 4]) -> Taylor + Send + Sync + 'static,
    ) -> Self {
        let provider = move |p: ChartPoint, order: usize| Ok(f(&seeds(p, dim, order)));
        ScalarField {
            label: label.to_string(),
            dim,
            max_order: crate::taylor::MAX_ORDER,
            provenance,
            provider: Arc::new(provider),
        }
    }

    pub fn analytic(
        label: &str,
        dim: usize,
        f: impl Fn(&[Taylor; 4]) -> Taylor + Send + Sync + 'static,
    ) -> Self {
        Self::exact(label, dim, Provenance::Analytic, f)
    }

    pub fn lifted(
        label: &str,
        dim: usize,
        f: impl Fn(&[Taylor; 4]) -> Taylor + Send + Sync + 'static,
    ) -> Self {
        Self::exact(label, dim, Provenance::Lifted, f)
    }

    pub fn finite_difference(
        label: &str,
        dim: usize,
        f: impl Fn(ChartPoint) -> f64 + Send + Sync + 'static,
        h: f64,
        fd_tol: f64,
    ) -> Self {
        assert!(h > 0.0);
        let g = move |p: ChartPoint| vec![f(p)];
        let provider = move |p: ChartPoint, order: usize| {
            let coarse = fd_components(&g, 1, dim, p, order, h)?;
            let fine = fd_components(&g, 1, dim, p, order, 0.5 * h)?;
            let rel = jet_mismatch(&coarse, &fine, dim, order);
            if rel > fd_tol {
                return Err(GeomError::JetInconsistent { rel_err: rel, tol: fd_tol });
            }
            Ok(fine.into_iter().next().unwrap())
        };
        ScalarField {
            label: label.to_string(),
            dim,
            max_order: 4,
            provenance: Provenance::FiniteDifference { h },
            provider: Arc::new(provider),
        }
    }

    /// Field defined directly by a jet provider (derived scalars).
    pub fn from_provider(
        label: &str,
        dim: usize,
        max_order: usize,
        provenance: Provenance,
        provider: impl Fn(ChartPoint, usize) -> Result<Taylor, GeomError> + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            label: label.to_string(),
            dim,
            max_order,
            provenance,
            provider: Arc::new(provider),
        }
    }

    pub fn jet(&self, p: ChartPoint, order: usize) -> Result<ScalarJet, GeomError> {
        if order > self.max_order {
            return Err(GeomError::InsufficientJetOrder { need: order, have: self.max_order });
        }
        let taylor = (self.provider)(p, order)?;
        if !taylor.is_finite() {
            return Err(GeomError::NonFiniteFieldValue { at: p });
        }
        Ok(ScalarJet { point: p, dim: self.dim, order, taylor })
    }

    pub fn eval(&self, p: ChartPoint) -> Result<f64, GeomError> {
        Ok(self.jet(p, 0)?.value())
    }
}

/// Build a field from a plain metric-component function, inferring jets by
/// finite differences at sensible defaults.
pub fn jet_of_metric(field: &MetricField, p: ChartPoint, order: usize) -> Result<MetricJet, GeomError> {
    field.jet(p, order)
}

// -------- finite-difference machinery --------

/// Central stencil for the d-th derivative, accuracy ≥ 6: offset/coefficient
/// pairs with Σ c_j j^p = p!·δ_{p,d} for p ≤ 2m.
fn stencil(d: usize) -> &'static [(isize, f64)] {
    static TABLE: OnceLock<[Vec<(isize, f64)>; 5]> = OnceLock::new();
    &TABLE.get_or_init(|| {
        let mut out: [Vec<(isize, f64)>; 5] = Default::default();
        out[0] = vec![(0, 1.0)];
        for d in 1..=4 {
            let m: usize = if d <= 2 { 3 } else { 4 };
            let n = 2 * m + 1;
            let a = DMatrix::from_fn(n, n, |p, j| (j as f64 - m as f64).powi(p as i32));
            let mut rhs = DVector::zeros(n);
            rhs[d] = (1..=d).map(|k| k as f64).product::<f64>();
            let c = a.lu().solve(&rhs).expect("derivative stencil is nonsingular");
            out[d] = (0..n).map(|j| (j as isize - m as isize, c[j])).collect();
        }
        out
    })[d]
}

/// All derivative estimates ∂^e f for |e| ≤ order, as Taylor expansions.
/// Mixed partials use tensor products of the per-axis stencils; sample
/// values are cached across multi-indices.
fn fd_components(
    f: &(impl Fn(ChartPoint) -> Vec<f64> + ?Sized),
    ncomp: usize,
    dim: usize,
    p: ChartPoint,
    order: usize,
    h: f64,
) -> Result<Vec<Taylor>, GeomError> {
    assert!(order <= 4, "finite differences support jet order ≤ 4");
    let mut cache: HashMap<[i8; 4], Vec<f64>> = HashMap::new();
    let mut sample = |off: [i8; 4]| -> Result<Vec<f64>, GeomError> {
        if let Some(v) = cache.get(&off) {
            return Ok(v.clone());
        }
        let mut q = p;
        for a in 0..dim {
            q[a] += h * off[a] as f64;
        }
        let v = f(q);
        assert_eq!(v.len(), ncomp);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(GeomError::NonFiniteFieldValue { at: q });
        }
        cache.insert(off, v.clone());
        Ok(v)
    };

    // estimates[e] per component, then assemble Taylors from partials
    let mut partials: HashMap<[u8; 4], Vec<f64>> = HashMap::new();
    for e in exponents(dim, order) {
        let total: usize = e.iter().map(|&x| x as usize).sum();
        let axes: Vec<usize> = (0..dim).filter(|&a| e[a] > 0).collect();
        let stencils: Vec<&[(isize, f64)]> = axes.iter().map(|&a| stencil(e[a] as usize)).collect();
        let mut acc = vec![0.0; ncomp];
        let mut idx = vec![0usize; axes.len()];
        loop {
            let mut off = [0i8; 4];
            let mut coeff = 1.0;
            for (k, &a) in axes.iter().enumerate() {
                let (o, c) = stencils[k][idx[k]];
                off[a] = o as i8;
                coeff *= c;
            }
            let v = sample(off)?;
            for c in 0..ncomp {
                acc[c] += coeff * v[c];
            }
            // odometer
            let mut k = 0;
            loop {
                if k == axes.len() {
                    break;
                }
                idx[k] += 1;
                if idx[k] < stencils[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == axes.len() {
                break;
            }
        }
        let scale = h.powi(total as i32);
        for c in acc.iter_mut() {
            *c /= scale;
        }
        partials.insert(e, acc);
    }

    let mut out = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        out.push(Taylor::from_partials(dim, order, |e| partials[e][c]));
    }
    Ok(out)
}

/// Largest relative mismatch between two jets of the same shape.
fn jet_mismatch(a: &[Taylor], b: &[Taylor], dim: usize, order: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for (ta, tb) in a.iter().zip(b) {
        for e in exponents(dim, order) {
            let va = ta.partial(&e);
            let vb = tb.partial(&e);
            let rel = (va - vb).abs() / (1.0 + vb.abs());
            worst = worst.max(rel);
        }
    }
    worst
}

/// Multi-indices with |e| ≤ order on the first `dim` axes, graded order.
pub fn exponents(dim: usize, order: usize) -> Vec<[u8; 4]> {
    let mut out = Vec::new();
    for total in 0..=order {
        let mut e = [0u8; 4];
        fill(dim, total as u8, 0, &mut e, &mut out);
    }
    out
}

fn fill(dim: usize, remaining: u8, axis: usize, e: &mut [u8; 4], out: &mut Vec<[u8; 4]>) {
    if axis == dim - 1 {
        e[axis] = remaining;
        out.push(*e);
        e[axis] = 0;
        return;
    }
    for v in (0..=remaining).rev() {
        e[axis] = v;
        fill(dim, remaining - v, axis + 1, e, out);
        e[axis] = 0;
    }
}
