//! Conformal changes of metric, the scalar-Bach curvature
//! F^B = S + t|B|^{1/2}, the modified conformal Laplacian
//! 𝓛ᵗ = −6Δ + F^B (dimension 4), and the covariance identities these
//! objects satisfy.
//!
//! Two factor conventions are supported because both appear in practice:
//! exponential g̃ = e^{2u} g and power g̃ = u² g. Every law is stated for
//! whichever convention its callers use; the conversions are exact at the
//! jet level, and a test pins their coherence.

use crate::chart::ChartPoint;
use crate::curvature::{
    bach_ricci_form, curvature_bundle, i2, i3, tensor_norm2, CurvatureBundle,
};
use crate::error::GeomError;
use crate::jet::{MetricField, ScalarField, ScalarJet};
use crate::taylor::Taylor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convention {
    /// g̃ = e^{2u} g; u unrestricted.
    Exponential,
    /// g̃ = u² g; u must be positive wherever jets are taken.
    Power,
}

#[derive(Clone, Debug)]
pub struct ConformalFactor {
    pub u: ScalarField,
    pub convention: Convention,
}

impl ConformalFactor {
    pub fn exponential(u: ScalarField) -> Self {
        ConformalFactor { u, convention: Convention::Exponential }
    }

    pub fn power(u: ScalarField) -> Self {
        ConformalFactor { u, convention: Convention::Power }
    }

    /// The conformal scale c with g̃ = c·g, as an expansion at p.
    pub fn scale_jet(&self, p: ChartPoint, order: usize) -> Result<Taylor, GeomError> {
        let jet = self.u.jet(p, order)?;
        match self.convention {
            Convention::Exponential => Ok(jet.taylor.scale(2.0).exp()),
            Convention::Power => {
                if !(jet.value() > 0.0) {
                    return Err(GeomError::FactorNotPositive { min: jet.value() });
                }
                Ok(jet.taylor.mul(&jet.taylor))
            }
        }
    }

    /// Value of the factor's u at p.
    pub fn u_value(&self, p: ChartPoint) -> Result<f64, GeomError> {
        self.u.eval(p)
    }
}

/// g ↦ ψ·g for a positive scalar field ψ (the raw scaling primitive both
/// conventions reduce to).
pub fn scale_metric(g: &MetricField, psi: &ScalarField) -> MetricField {
    let base = g.clone();
    let factor = psi.clone();
    let d = g.dim;
    let max_order = g.max_order.min(psi.max_order);
    let label = format!("{}·{}", factor.label, g.label);
    MetricField::from_provider(&label, d, max_order, g.provenance.clone(), move |p, m| {
        let gj = base.jet(p, m)?;
        let pj = factor.jet(p, m)?;
        if !(pj.value() > 0.0) {
            return Err(GeomError::FactorNotPositive { min: pj.value() });
        }
        let mut comp = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                comp.push(pj.taylor.mul(gj.component(i, j)));
            }
        }
        Ok(comp)
    })
}

/// g̃ = e^{2u}g or u²g with exact jet propagation.
pub fn conformal_metric(g: &MetricField, c: &ConformalFactor) -> MetricField {
    let base = g.clone();
    let factor = c.clone();
    let d = g.dim;
    let max_order = g.max_order.min(c.u.max_order);
    let tag = match c.convention {
        Convention::Exponential => "exp",
        Convention::Power => "pow",
    };
    let label = format!("{}~{}({})", g.label, tag, c.u.label);
    MetricField::from_provider(&label, d, max_order, g.provenance.clone(), move |p, m| {
        let gj = base.jet(p, m)?;
        let scale = factor.scale_jet(p, m)?;
        let mut comp = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                comp.push(scale.mul(gj.component(i, j)));
            }
        }
        Ok(comp)
    })
}

/// Pointwise product of two scalar fields.
pub fn product_field(a: &ScalarField, b: &ScalarField) -> ScalarField {
    let fa = a.clone();
    let fb = b.clone();
    let label = format!("{}·{}", a.label, b.label);
    let max_order = a.max_order.min(b.max_order);
    ScalarField::from_provider(&label, a.dim, max_order, a.provenance.clone(), move |p, m| {
        Ok(fa.jet(p, m)?.taylor.mul(&fb.jet(p, m)?.taylor))
    })
}

/// Covariant Laplacian Δφ = g^{ij}(φ_ij − Γ^k_ij φ_k) at the bundle's point.
pub fn laplacian_value(bundle: &CurvatureBundle, phi: &ScalarJet) -> f64 {
    let d = bundle.dim;
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut h = phi.hess(i, j);
            for k in 0..d {
                h -= bundle.gamma[i3(d, k, i, j)].value() * phi.grad(k);
            }
            acc += bundle.ginv[i2(d, i, j)].value() * h;
        }
    }
    acc
}

/// Both sides of every closed-form conformal law for g' = ψg in dimension 4,
/// evaluated at one point.
#[derive(Clone, Debug)]
pub struct ConformalLaws {
    pub point: ChartPoint,
    pub scalar_formula: f64,
    pub scalar_direct: f64,
    pub ricci_formula: Vec<f64>,
    pub ricci_direct: Vec<f64>,
    pub bach_formula: Vec<f64>,
    pub bach_direct: Vec<f64>,
    pub vol_ratio_formula: f64,
    pub vol_ratio_direct: f64,
    pub hess_formula: Vec<f64>,
    pub hess_direct: Vec<f64>,
    /// Largest relative mismatch across all five laws.
    pub max_residual: f64,
}

/// Evaluate the conformal transformation laws for g' = ψg (dimension 4):
/// S' = ψ⁻¹(S − 3Δψ/ψ + (3/2)|∇ψ|²/ψ²),
/// R'_ij = R_ij − ψ_ij/ψ + (3/2)ψ_iψ_j/ψ² − ½(Δψ/ψ)g_ij,
/// B' = B/ψ, dV' = ψ²dV, and the Hessian law
/// ∇'_ijψ = ψ_ij − (1/ψ)(ψ_iψ_j − ½|∇ψ|²g_ij),
/// each against direct curvature of the scaled metric.
pub fn conformal_curvature_laws(
    g: &MetricField,
    psi: &ScalarField,
    p: ChartPoint,
) -> Result<ConformalLaws, GeomError> {
    if g.dim != 4 {
        return Err(GeomError::NotDimensionFour(g.dim));
    }
    let d = 4;
    let psi_jet = psi.jet(p, 2)?;
    let pv = psi_jet.value();
    if !(pv > 0.0) {
        return Err(GeomError::FactorNotPositive { min: pv });
    }
    let base = curvature_bundle(&g.jet(p, 4)?)?;
    let ginv: Vec<f64> = base.ginv.iter().map(|t| t.value()).collect();
    let gval: Vec<f64> = base.g.iter().map(|t| t.value()).collect();
    let dpsi: Vec<f64> = (0..d).map(|a| psi_jet.grad(a)).collect();
    let dpsi_up: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| ginv[i2(d, i, j)] * dpsi[j]).sum())
        .collect();
    let grad2: f64 = (0..d).map(|i| dpsi_up[i] * dpsi[i]).sum();
    let mut hess = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut v = psi_jet.hess(i, j);
            for c in 0..d {
                v -= base.gamma[i3(d, c, i, j)].value() * dpsi[c];
            }
            hess[i2(d, i, j)] = v;
        }
    }
    let lap: f64 = (0..d)
        .flat_map(|a| (0..d).map(move |c| (a, c)))
        .map(|(a, c)| ginv[i2(d, a, c)] * hess[i2(d, a, c)])
        .sum();

    let s = base.scalar.value();
    let scalar_formula = (s - 3.0 * lap / pv + 1.5 * grad2 / (pv * pv)) / pv;
    let mut ricci_formula = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            ricci_formula[i2(d, i, j)] = base.ricci[i2(d, i, j)].value()
                - hess[i2(d, i, j)] / pv
                + 1.5 * dpsi[i] * dpsi[j] / (pv * pv)
                - 0.5 * (lap / pv) * gval[i2(d, i, j)];
        }
    }
    let bach_base = bach_ricci_form(&base)?;
    let bach_formula: Vec<f64> = (0..16).map(|k| bach_base.value(k / 4, k % 4) / pv).collect();
    let vol_ratio_formula = pv * pv;
    let mut hess_formula = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            hess_formula[i2(d, i, j)] = hess[i2(d, i, j)]
                - (dpsi[i] * dpsi[j] - 0.5 * grad2 * gval[i2(d, i, j)]) / pv;
        }
    }

    // direct side: curvature of ψ·g
    let scaled = scale_metric(g, psi);
    let prime = curvature_bundle(&scaled.jet(p, 4)?)?;
    let scalar_direct = prime.scalar.value();
    let ricci_direct: Vec<f64> = prime.ricci.iter().map(|t| t.value()).collect();
    let bach_prime = bach_ricci_form(&prime)?;
    let bach_direct: Vec<f64> = (0..16).map(|k| bach_prime.value(k / 4, k % 4)).collect();
    let vol_ratio_direct = prime.sqrt_det.value() / base.sqrt_det.value();
    let mut hess_direct = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut v = psi_jet.hess(i, j);
            for c in 0..d {
                v -= prime.gamma[i3(d, c, i, j)].value() * dpsi[c];
            }
            hess_direct[i2(d, i, j)] = v;
        }
    }

    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
    let mut worst = rel(scalar_formula, scalar_direct).max(rel(vol_ratio_formula, vol_ratio_direct));
    for k in 0..16 {
        worst = worst
            .max(rel(ricci_formula[k], ricci_direct[k]))
            .max(rel(bach_formula[k], bach_direct[k]))
            .max(rel(hess_formula[k], hess_direct[k]));
    }
    Ok(ConformalLaws {
        point: p,
        scalar_formula,
        scalar_direct,
        ricci_formula,
        ricci_direct,
        bach_formula,
        bach_direct,
        vol_ratio_formula,
        vol_ratio_direct,
        hess_formula,
        hess_direct,
        max_residual: worst,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixedKind {
    ScalarWeyl,
    ScalarBach,
}

/// A curvature scalar mixing S with a tensor-norm term.
#[derive(Clone, Debug)]
pub struct MixedCurvatureScalar {
    pub value: f64,
    pub t: f64,
    pub kind: MixedKind,
    pub point: ChartPoint,
}

/// F^B = S + t·|B|^{1/2} at a point. Continuous but not smooth across
/// {B = 0}; the raw value is returned without smoothing.
pub fn scalar_bach(g: &MetricField, p: ChartPoint, t: f64) -> Result<MixedCurvatureScalar, GeomError> {
    let bundle = curvature_bundle(&g.jet(p, 4)?)?;
    let bach = bach_ricci_form(&bundle)?;
    Ok(MixedCurvatureScalar {
        value: bundle.scalar.value() + t * bach.sqrt_norm(),
        t,
        kind: MixedKind::ScalarBach,
        point: p,
    })
}

/// F = S + t·|W|_g (scalar-Weyl variant, dimension 4).
pub fn scalar_weyl(g: &MetricField, p: ChartPoint, t: f64) -> Result<MixedCurvatureScalar, GeomError> {
    let bundle = curvature_bundle(&g.jet(p, 2)?)?;
    let w = crate::curvature::weyl(&bundle)?;
    let vals: Vec<f64> = w.iter().map(|x| x.value()).collect();
    let ginv: Vec<f64> = bundle.ginv.iter().map(|x| x.value()).collect();
    let n2 = tensor_norm2(&vals, 4, 4, &ginv);
    Ok(MixedCurvatureScalar {
        value: bundle.scalar.value() + t * n2.max(0.0).sqrt(),
        t,
        kind: MixedKind::ScalarWeyl,
        point: p,
    })
}

/// 𝓛ᵗ_g φ = −6Δ_g φ + F^B_g·φ at a point.
pub fn modified_laplacian_apply(
    g: &MetricField,
    t: f64,
    phi: &ScalarField,
    p: ChartPoint,
) -> Result<f64, GeomError> {
    let bundle = curvature_bundle(&g.jet(p, 4)?)?;
    let bach = bach_ricci_form(&bundle)?;
    let fb = bundle.scalar.value() + t * bach.sqrt_norm();
    let phi_jet = phi.jet(p, 2)?;
    Ok(-6.0 * laplacian_value(&bundle, &phi_jet) + fb * phi_jet.value())
}

/// Covariance residual of the modified Laplacian under g̃ = u²g:
/// max of |𝓛ᵗ_{g̃}φ − u⁻³𝓛ᵗ_g(φu)| and |F^B_{g̃} − u⁻³𝓛ᵗ_g u| at p.
pub fn covariance_residual(
    g: &MetricField,
    c: &ConformalFactor,
    t: f64,
    phi: &ScalarField,
    p: ChartPoint,
) -> Result<f64, GeomError> {
    assert_eq!(c.convention, Convention::Power, "covariance law is stated for the power convention");
    let uv = c.u_value(p)?;
    if !(uv > 0.0) {
        return Err(GeomError::FactorNotPositive { min: uv });
    }
    let scaled = conformal_metric(g, c);
    let lhs1 = modified_laplacian_apply(&scaled, t, phi, p)?;
    let phi_u = product_field(phi, &c.u);
    let rhs1 = modified_laplacian_apply(g, t, &phi_u, p)? / (uv * uv * uv);
    let lhs2 = scalar_bach(&scaled, p, t)?.value;
    let rhs2 = modified_laplacian_apply(g, t, &c.u, p)? / (uv * uv * uv);
    Ok((lhs1 - rhs1).abs().max((lhs2 - rhs2).abs()))
}

/// Covariance residual of the Bach tensor itself: componentwise
/// |B_{g̃} − c⁻¹B_g| (c the conformal scale) and the norm law
/// |c⁴|B̃|²_{g̃} − |B|²_g|; the larger of the two is returned.
pub fn bach_covariance_residual(
    g: &MetricField,
    c: &ConformalFactor,
    p: ChartPoint,
) -> Result<f64, GeomError> {
    let base = curvature_bundle(&g.jet(p, 4)?)?;
    let bach = bach_ricci_form(&base)?;
    let scaled = conformal_metric(g, c);
    let prime = curvature_bundle(&scaled.jet(p, 4)?)?;
    let bach_prime = bach_ricci_form(&prime)?;
    let scale = c.scale_jet(p, 0)?.value();
    let mut comp_res = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            comp_res = comp_res.max((bach_prime.value(i, j) - bach.value(i, j) / scale).abs());
        }
    }
    let norm_res = (scale.powi(4) * bach_prime.norm2 - bach.norm2).abs();
    Ok(comp_res.max(norm_res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn zero_exponent_is_identity() {
        let g = catalog::product_spheres(1.0, 2.0);
        let u = catalog::scalar_by_name("constant", &[0.0]).unwrap();
        let gt = conformal_metric(&g, &ConformalFactor::exponential(u));
        let p = [0.2, 0.1, -0.4, 0.8];
        let a = g.jet(p, 3).unwrap();
        let b = gt.jet(p, 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for e in crate::jet::exponents(4, 3) {
                    assert!((a.partial(i, j, &e) - b.partial(i, j, &e)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn conventions_cohere() {
        // exponential factor u and power factor e^u give the same metric
        let g = catalog::conformally_flat(0.1);
        let u = catalog::scalar_by_name("cos-axis", &[0.3, 1.0]).unwrap();
        let exp_form = conformal_metric(&g, &ConformalFactor::exponential(u.clone()));
        let eu = ScalarField::from_provider("e^u", 4, u.max_order, u.provenance.clone(), {
            let u = u.clone();
            move |p, m| Ok(u.jet(p, m)?.taylor.exp())
        });
        let pow_form = conformal_metric(&g, &ConformalFactor::power(eu));
        let p = [1.2, 0.4, 2.0, -0.7];
        let a = exp_form.jet(p, 4).unwrap();
        let b = pow_form.jet(p, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for e in crate::jet::exponents(4, 4) {
                    let (x, y) = (a.partial(i, j, &e), b.partial(i, j, &e));
                    assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "∂{e:?} g[{i}{j}]");
                }
            }
        }
    }

    #[test]
    fn constant_factor_laws() {
        let g = catalog::product_spheres(1.0, 2.0);
        let psi = catalog::scalar_by_name("constant", &[4.0]).unwrap();
        let p = [0.2, -1.0 / 3.0, 0.5, 2.0 / 7.0];
        let laws = conformal_curvature_laws(&g, &psi, p).unwrap();
        assert!((laws.scalar_direct - 2.5 / 4.0).abs() < 1e-10);
        assert!((laws.vol_ratio_direct - 16.0).abs() < 1e-10);
        assert!(laws.max_residual < 1e-10, "residual {}", laws.max_residual);
    }

    #[test]
    fn full_laws_on_curved_base() {
        let g = catalog::conformally_flat(0.1);
        let psi = ScalarField::analytic("1+0.2sin", 4, |x| {
            let mut t = x[0].sin().scale(0.2);
            t.add_assign_const(1.0);
            t
        });
        for p in [[0.7, 0.1, -0.4, 1.9], [2.5, 1.0, 0.3, 0.0]] {
            let laws = conformal_curvature_laws(&g, &psi, p).unwrap();
            assert!(laws.max_residual < 1e-8, "residual {} at {p:?}", laws.max_residual);
        }
    }

    #[test]
    fn scalar_bach_frozen_values() {
        // unit S²×S² is Bach-flat: F^B = S = 4 for any t. The |B|^{1/2}
        // term turns an O(1e−13) roundoff floor in B into O(1e−7), which
        // bounds the achievable accuracy here.
        let unit = catalog::product_spheres(1.0, 1.0);
        let p = [0.3, 0.3, -0.2, 0.9];
        let f = scalar_bach(&unit, p, 5.0).unwrap();
        assert!((f.value - 4.0).abs() < 1e-5, "unit product: {}", f.value);
        // S²(1)×S²(2): S = 5/2, |B| = 5/16, so F^B = 5/2 + √(5/16) at t = 1
        let mixed = catalog::product_spheres(1.0, 2.0);
        let p = [0.2, -1.0 / 3.0, 0.5, 2.0 / 7.0];
        let f = scalar_bach(&mixed, p, 1.0).unwrap();
        let want = 2.5 + (5.0f64 / 16.0).sqrt();
        assert!((f.value - want).abs() < 1e-10, "got {} want {want}", f.value);
    }

    #[test]
    fn modified_laplacian_flat_wave() {
        let g = catalog::euclidean(4);
        let phi = ScalarField::analytic("sin-x1", 4, |x| x[0].sin());
        let p = [0.6, 0.0, 0.0, 0.0];
        let v = modified_laplacian_apply(&g, 3.0, &phi, p).unwrap();
        assert!((v - 6.0 * 0.6f64.sin()).abs() < 1e-12);
        // φ ≡ 1 on a curved metric returns F^B itself
        let m = catalog::product_spheres(1.0, 2.0);
        let one = catalog::scalar_by_name("constant", &[1.0]).unwrap();
        let p2 = [0.2, -1.0 / 3.0, 0.5, 2.0 / 7.0];
        let v2 = modified_laplacian_apply(&m, 1.0, &one, p2).unwrap();
        let want = 2.5 + (5.0f64 / 16.0).sqrt();
        assert!((v2 - want).abs() < 1e-10);
    }

    #[test]
    fn laplacian_covariance() {
        let g = catalog::conformally_flat(0.1);
        let u = ScalarField::analytic("1+0.3sin-x2", 4, |x| {
            let mut t = x[1].sin().scale(0.3);
            t.add_assign_const(1.0);
            t
        });
        let phi = catalog::scalar_by_name("trig-mix", &[0.5]).unwrap();
        let c = ConformalFactor::power(u);
        let p = [0.8, 1.3, -0.2, 0.5];
        let res = covariance_residual(&g, &c, 2.0, &phi, p).unwrap();
        let phi_u = product_field(&phi, &c.u);
        let scale = modified_laplacian_apply(&g, 2.0, &phi_u, p).unwrap().abs();
        assert!(res <= 1e-6 * (1.0 + scale), "residual {res}");
    }

    #[test]
    fn bach_covariance() {
        let g = catalog::product_spheres(1.0, 2.0);
        let u = catalog::scalar_by_name("cos-axis", &[0.1, 1.0]).unwrap();
        let c = ConformalFactor::exponential(u);
        let p = [0.4, -0.2, 0.3, 0.6];
        let res = bach_covariance_residual(&g, &c, p).unwrap();
        assert!(res < 1e-6, "residual {res}");
    }
}
