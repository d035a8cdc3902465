//! Deformations ḡ = g + dF ⊗ dF of a metric by the differential of a scalar
//! function, with the deformed curvature in closed form and the induced
//! change of the Bach tensor.
//!
//! Writing w² = 1 + |∇F|²_g, F_ij for the covariant Hessian, u_i = F^a F_ai,
//! Y = F^a F^b F_ab and X = u^a u_a, the closed forms are
//!
//! * ḡ^{ij} = g^{ij} − F^i F^j / w², dV̄ = w · dV
//! * Γ̄^α_βγ = Γ^α_βγ + F^α F_βγ / w²
//! * R̄_ijkl = R_ijkl + (F_ik F_jl − F_il F_jk)/w²
//! * R̄_ij = R_ij − F^aF^b R_aibj/w² + (ΔF·F_ij − F_i^a F_aj)/w²
//!            − (Y·F_ij − u_i u_j)/w⁴
//! * S̄ = S − 2 R_ab F^aF^b/w² + ((ΔF)² − |F_ij|²)/w² − 2(ΔF·Y − X)/w⁴
//!
//! The Bach change E(F) = B̄ − B is evaluated as a difference of two full
//! Bach computations rather than by expanding the correction strata; the
//! closed forms above are cross-checked against direct curvature of the
//! deformed field, so the difference route inherits their trust.

use rayon::prelude::*;

use crate::chart::{ChartGrid, ChartPoint, Topology};
use crate::curvature::{
    self, bach_ricci_form, curvature_bundle, i2, i3, i4, tensor_norm2,
};
use crate::error::GeomError;
use crate::jet::{MetricField, MetricJet, ScalarField, ScalarJet};
use crate::taylor::Taylor;

/// A deformation: scalar profile f, non-negative scale k; the effective
/// deforming function is k·f.
#[derive(Clone, Debug)]
pub struct DeformationSpec {
    pub f: ScalarField,
    pub k: f64,
    pub label: String,
}

impl DeformationSpec {
    pub fn new(f: ScalarField, k: f64, label: &str) -> Result<Self, GeomError> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(GeomError::HypothesisFailed(format!(
                "deformation scale must be a finite non-negative number, got {k}"
            )));
        }
        Ok(DeformationSpec { f, k, label: label.to_string() })
    }

    /// Jet of the effective deforming function k·f.
    pub fn effective_jet(&self, p: ChartPoint, order: usize) -> Result<ScalarJet, GeomError> {
        let mut jet = self.f.jet(p, order)?;
        jet.taylor = jet.taylor.scale(self.k);
        Ok(jet)
    }
}

/// ḡ = g + d(kf) ⊗ d(kf) as a field; jets propagate exactly through series
/// arithmetic (an order-m metric jet consumes an order-(m+1) jet of f).
pub fn deform_metric(g: &MetricField, spec: &DeformationSpec) -> MetricField {
    let base = g.clone();
    let f = spec.f.clone();
    let k = spec.k;
    let d = g.dim;
    let max_order = g.max_order.min(f.max_order.saturating_sub(1));
    let label = format!("{}+[d{}]²", g.label, spec.label);
    MetricField::from_provider(&label, d, max_order, g.provenance.clone(), move |p, m| {
        let gj = base.jet(p, m)?;
        let fj = f.jet(p, m + 1)?;
        let df: Vec<Taylor> = (0..d).map(|a| fj.taylor.derive(a).scale(k)).collect();
        let mut comp = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                comp.push(gj.component(i, j).add(&df[i].mul(&df[j])));
            }
        }
        Ok(comp)
    })
}

/// Closed-form inverse and volume ratio of the deformed metric, from jets of
/// g and of the (effective) deforming function at the same point. The
/// returned inverse is verified against the deformed components to 1e−12.
pub fn deformed_inverse_and_volume(
    jet_g: &MetricJet,
    jet_f: &ScalarJet,
) -> Result<(Vec<f64>, f64), GeomError> {
    let d = jet_g.dim;
    let ginv: Vec<f64> = curvature::invert_sym(
        &(0..d * d).map(|k| jet_g.component(k / d, k % d).clone()).collect::<Vec<_>>(),
        d,
    )
    .iter()
    .map(|t| t.value())
    .collect();
    let df: Vec<f64> = (0..d).map(|a| jet_f.grad(a)).collect();
    let dfu: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| ginv[i2(d, i, j)] * df[j]).sum())
        .collect();
    let grad2: f64 = (0..d).map(|i| dfu[i] * df[i]).sum();
    let w2 = 1.0 + grad2;
    let mut inv_bar = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            inv_bar[i2(d, i, j)] = ginv[i2(d, i, j)] - dfu[i] * dfu[j] / w2;
        }
    }
    // ḡ_ij = g_ij + f_i f_j; check ḡ⁻¹ḡ = Id
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for a in 0..d {
                s += inv_bar[i2(d, i, a)] * (jet_g.value(a, j) + df[a] * df[j]);
            }
            let want = if i == j { 1.0 } else { 0.0 };
            if (s - want).abs() > 1e-12 * (1.0 + w2) {
                return Err(GeomError::RankMismatch);
            }
        }
    }
    Ok((inv_bar, w2.sqrt()))
}

/// Deformed curvature at a point: base values plus the correction strata,
/// each exposed separately.
#[derive(Clone, Debug)]
pub struct DeformedCurvature {
    pub point: ChartPoint,
    /// R̄_ijkl values, layout `i4`.
    pub riemann_closed: Vec<f64>,
    /// R̄_ij values.
    pub ricci_closed: Vec<f64>,
    /// S̄ value.
    pub scalar_closed: f64,
    /// Riemann correction (F_ik F_jl − F_il F_jk)/w².
    pub riemann_correction: Vec<f64>,
    /// Ricci correction.
    pub ricci_correction: Vec<f64>,
    /// Scalar correction.
    pub scalar_correction: f64,
    /// Christoffel correction G^α_βγ = F^α F_βγ/w², layout `i3` as [α,β,γ].
    pub christoffel_correction: Vec<f64>,
    /// ḡ^{ij} values.
    pub inv_bar: Vec<f64>,
    /// dV̄/dV = w ≥ 1.
    pub vol_ratio: f64,
    /// w² = 1 + |∇F|².
    pub w2: f64,
}

/// Evaluate every closed-form deformed-curvature expression at a point.
pub fn deformed_curvature_closed(
    g: &MetricField,
    spec: &DeformationSpec,
    p: ChartPoint,
) -> Result<DeformedCurvature, GeomError> {
    let jet_g = g.jet(p, 2)?;
    let jet_f = spec.effective_jet(p, 2)?;
    let b = curvature_bundle(&jet_g)?;
    let d = b.dim;
    let ginv: Vec<f64> = b.ginv.iter().map(|t| t.value()).collect();
    let gamma: Vec<f64> = b.gamma.iter().map(|t| t.value()).collect();
    let df: Vec<f64> = (0..d).map(|a| jet_f.grad(a)).collect();
    // covariant Hessian F_ij = ∂i∂j F − Γ^c_ij ∂c F
    let mut hess = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut v = jet_f.hess(i, j);
            for c in 0..d {
                v -= gamma[i3(d, c, i, j)] * df[c];
            }
            hess[i2(d, i, j)] = v;
        }
    }
    let dfu: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| ginv[i2(d, i, j)] * df[j]).sum())
        .collect();
    let w2 = 1.0 + (0..d).map(|i| dfu[i] * df[i]).sum::<f64>();
    let lap: f64 = (0..d)
        .flat_map(|a| (0..d).map(move |c| (a, c)))
        .map(|(a, c)| ginv[i2(d, a, c)] * hess[i2(d, a, c)])
        .sum();
    // u_i = F^a F_ai, Y = F^a u_a, X = |u|²
    let u: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|a| dfu[a] * hess[i2(d, a, i)]).sum())
        .collect();
    let y: f64 = (0..d).map(|a| dfu[a] * u[a]).sum();
    let x: f64 = (0..d)
        .flat_map(|a| (0..d).map(move |c| (a, c)))
        .map(|(a, c)| ginv[i2(d, a, c)] * u[a] * u[c])
        .sum();

    let r4: Vec<f64> = b.riemann.iter().map(|t| t.value()).collect();
    let ric: Vec<f64> = b.ricci.iter().map(|t| t.value()).collect();
    let s = b.scalar.value();

    let mut er = vec![0.0; d * d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    er[i4(d, i, j, k, l)] = (hess[i2(d, i, k)] * hess[i2(d, j, l)]
                        - hess[i2(d, i, l)] * hess[i2(d, j, k)])
                        / w2;
                }
            }
        }
    }
    let mut fcorr = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut cross = 0.0;
            for a in 0..d {
                for c in 0..d {
                    cross += dfu[a] * dfu[c] * r4[i4(d, a, i, c, j)];
                }
            }
            let mut hh = 0.0;
            for a in 0..d {
                for c in 0..d {
                    hh += hess[i2(d, i, a)] * ginv[i2(d, a, c)] * hess[i2(d, c, j)];
                }
            }
            fcorr[i2(d, i, j)] = -cross / w2 + (lap * hess[i2(d, i, j)] - hh) / w2
                - (y * hess[i2(d, i, j)] - u[i] * u[j]) / (w2 * w2);
        }
    }
    let hess2: f64 = {
        let mut v = 0.0;
        for i in 0..d {
            for j in 0..d {
                for a in 0..d {
                    for c in 0..d {
                        v += ginv[i2(d, i, a)] * ginv[i2(d, j, c)] * hess[i2(d, i, j)] * hess[i2(d, a, c)];
                    }
                }
            }
        }
        v
    };
    let ric_ff: f64 = (0..d)
        .flat_map(|a| (0..d).map(move |c| (a, c)))
        .map(|(a, c)| ric[i2(d, a, c)] * dfu[a] * dfu[c])
        .sum();
    let hcorr = -2.0 * ric_ff / w2 + (lap * lap - hess2) / w2 - 2.0 * (lap * y - x) / (w2 * w2);

    let mut gcorr = vec![0.0; d * d * d];
    for al in 0..d {
        for be in 0..d {
            for ga in 0..d {
                gcorr[i3(d, al, be, ga)] = dfu[al] * hess[i2(d, be, ga)] / w2;
            }
        }
    }
    let mut inv_bar = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            inv_bar[i2(d, i, j)] = ginv[i2(d, i, j)] - dfu[i] * dfu[j] / w2;
        }
    }

    let riemann_closed: Vec<f64> = r4.iter().zip(&er).map(|(a, b)| a + b).collect();
    let ricci_closed: Vec<f64> = ric.iter().zip(&fcorr).map(|(a, b)| a + b).collect();
    Ok(DeformedCurvature {
        point: p,
        riemann_closed,
        ricci_closed,
        scalar_closed: s + hcorr,
        riemann_correction: er,
        ricci_correction: fcorr,
        scalar_correction: hcorr,
        christoffel_correction: gcorr,
        inv_bar,
        vol_ratio: w2.sqrt(),
        w2,
    })
}

/// E(F)_ij = B̄_ij − B_ij at a point, as a difference of two full Bach
/// evaluations (16 values, layout `i2`).
pub fn bach_error(g: &MetricField, spec: &DeformationSpec, p: ChartPoint) -> Result<Vec<f64>, GeomError> {
    let base = curvature_bundle(&g.jet(p, 4)?)?;
    let b0 = bach_ricci_form(&base)?;
    let deformed = deform_metric(g, spec);
    let bar = curvature_bundle(&deformed.jet(p, 4)?)?;
    let b1 = bach_ricci_form(&bar)?;
    Ok((0..16).map(|k| b1.value(k / 4, k % 4) - b0.value(k / 4, k % 4)).collect())
}

/// Residual of the scaling identity E_{ψg}(kψ) = ψ⁻¹ E_g(2k√ψ) at a point
/// (max componentwise mismatch, relative).
pub fn conformal_error_scaling_check(
    g: &MetricField,
    psi: &ScalarField,
    k: f64,
    p: ChartPoint,
) -> Result<f64, GeomError> {
    let psi_val = psi.eval(p)?;
    if !(psi_val > 0.0) {
        return Err(GeomError::FactorNotPositive { min: psi_val });
    }
    let scaled = crate::conformal::scale_metric(g, psi);
    let lhs_spec = DeformationSpec::new(psi.clone(), k, "k·psi")?;
    let lhs = bach_error(&scaled, &lhs_spec, p)?;
    let sqrt_psi = sqrt_field(psi);
    let rhs_spec = DeformationSpec::new(sqrt_psi, 2.0 * k, "2k·sqrt(psi)")?;
    let rhs_raw = bach_error(g, &rhs_spec, p)?;
    let rhs: Vec<f64> = rhs_raw.iter().map(|v| v / psi_val).collect();
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for (a, b) in lhs.iter().zip(&rhs) {
        worst = worst.max((a - b).abs());
    }
    Ok(worst / (1.0 + scale))
}

/// √ψ as a derived field (ψ must stay positive wherever it is evaluated).
pub fn sqrt_field(psi: &ScalarField) -> ScalarField {
    let base = psi.clone();
    let label = format!("sqrt({})", psi.label);
    ScalarField::from_provider(
        &label,
        psi.dim,
        psi.max_order,
        psi.provenance.clone(),
        move |p, m| {
            let jet = base.jet(p, m)?;
            if !(jet.value() > 0.0) {
                return Err(GeomError::FactorNotPositive { min: jet.value() });
            }
            Ok(jet.taylor.sqrt())
        },
    )
}

/// Both sides of the closed-manifold identity
/// ∫ S̄ dV_g = ∫ S dV_g − ∫ R_ij F^i F^j / w² dV_g  on a periodic grid.
pub fn scalar_integral_identity(
    g: &MetricField,
    spec: &DeformationSpec,
    grid: &ChartGrid,
) -> Result<(f64, f64), GeomError> {
    if grid.topology != Topology::PeriodicBox {
        return Err(GeomError::NonPeriodicGrid);
    }
    let d = g.dim;
    let per_node: Vec<(f64, f64)> = grid
        .nodes
        .par_iter()
        .map(|&p| -> Result<(f64, f64), GeomError> {
            let dc = deformed_curvature_closed(g, spec, p)?;
            let jet_g = g.jet(p, 2)?;
            let bundle = curvature_bundle(&jet_g)?;
            let sqrt_det = bundle.sqrt_det.value();
            let ginv: Vec<f64> = bundle.ginv.iter().map(|t| t.value()).collect();
            let jet_f = spec.effective_jet(p, 1)?;
            let df: Vec<f64> = (0..d).map(|a| jet_f.grad(a)).collect();
            let dfu: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| ginv[i2(d, i, j)] * df[j]).sum())
                .collect();
            let mut ric_ff = 0.0;
            for a in 0..d {
                for c in 0..d {
                    ric_ff += bundle.ricci[i2(d, a, c)].value() * dfu[a] * dfu[c];
                }
            }
            let lhs_density = dc.scalar_closed * sqrt_det;
            let rhs_density = (bundle.scalar.value() - ric_ff / dc.w2) * sqrt_det;
            Ok((lhs_density, rhs_density))
        })
        .collect::<Result<_, _>>()?;
    let lhs = grid.quad_sum(|i| per_node[i].0);
    let rhs = grid.quad_sum(|i| per_node[i].1);
    Ok((lhs, rhs))
}

/// |T|_ḡ ≤ |T|_g for covariant tensors: convenience used by tests comparing
/// norms under the deformed and base inverse metrics.
pub fn norm_pair(vals: &[f64], rank: usize, dim: usize, ginv: &[f64], inv_bar: &[f64]) -> (f64, f64) {
    (
        tensor_norm2(vals, rank, dim, ginv),
        tensor_norm2(vals, rank, dim, inv_bar),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::chart::{make_chart, ChartSpec};
    use crate::curvature::christoffel;

    fn sin_sum(amp: f64) -> ScalarField {
        catalog::scalar_by_name("sin-sum", &[amp]).unwrap()
    }

    #[test]
    fn constant_profile_leaves_metric_unchanged() {
        let g = catalog::conformally_flat(0.1);
        let f = catalog::scalar_by_name("constant", &[3.0]).unwrap();
        let spec = DeformationSpec::new(f, 2.0, "const").unwrap();
        let bar = deform_metric(&g, &spec);
        let p = [0.4, 1.0, -0.3, 0.2];
        let a = g.jet(p, 3).unwrap();
        let b = bar.jet(p, 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for e in crate::jet::exponents(4, 3) {
                    assert_eq!(a.partial(i, j, &e), b.partial(i, j, &e));
                }
            }
        }
        let dc = deformed_curvature_closed(&g, &spec, p).unwrap();
        assert_eq!(dc.scalar_correction, 0.0);
        assert!(dc.riemann_correction.iter().all(|&v| v == 0.0));
        assert_eq!(dc.vol_ratio, 1.0);
    }

    #[test]
    fn linear_profile_on_flat_space() {
        let g = catalog::euclidean(4);
        let a = 0.75;
        let f = ScalarField::analytic("linear", 4, move |x| x[0].scale(a));
        let spec = DeformationSpec::new(f, 1.0, "linear").unwrap();
        let bar = deform_metric(&g, &spec);
        let p = [0.3, -2.0, 0.1, 0.9];
        let jet = bar.jet(p, 2).unwrap();
        assert!((jet.value(0, 0) - (1.0 + a * a)).abs() < 1e-15);
        assert!((jet.value(1, 1) - 1.0).abs() < 1e-15);
        let (inv, w) = deformed_inverse_and_volume(
            &g.jet(p, 2).unwrap(),
            &spec.effective_jet(p, 2).unwrap(),
        )
        .unwrap();
        assert!((inv[0] - 1.0 / (1.0 + a * a)).abs() < 1e-15);
        assert!((w - (1.0 + a * a).sqrt()).abs() < 1e-15);
        // constant df ⇒ deformed metric constant ⇒ flat
        let bundle = curvature_bundle(&bar.jet(p, 4).unwrap()).unwrap();
        assert!(bundle.riemann.iter().all(|t| t.value().abs() < 1e-14));
        let dc = deformed_curvature_closed(&g, &spec, p).unwrap();
        assert_eq!(dc.scalar_closed, 0.0);
    }

    #[test]
    fn closed_forms_match_direct_curvature_on_curved_base() {
        let g = catalog::conformally_flat(0.1);
        let f = catalog::scalar_by_name("trig-mix", &[0.2]).unwrap();
        let spec = DeformationSpec::new(f, 1.3, "trig").unwrap();
        let bar = deform_metric(&g, &spec);
        for p in [[0.3, 0.7, -0.2, 1.1], [2.0, -1.0, 0.4, 0.0]] {
            let direct = curvature_bundle(&bar.jet(p, 2).unwrap()).unwrap();
            let closed = deformed_curvature_closed(&g, &spec, p).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
            assert!(
                rel(closed.scalar_closed, direct.scalar.value()) < 1e-9,
                "scalar: closed {} direct {}",
                closed.scalar_closed,
                direct.scalar.value()
            );
            for k in 0..16 {
                assert!(rel(closed.ricci_closed[k], direct.ricci[k].value()) < 1e-9);
                assert!(rel(closed.inv_bar[k], direct.ginv[k].value()) < 1e-9);
            }
            for k in 0..256 {
                assert!(rel(closed.riemann_closed[k], direct.riemann[k].value()) < 1e-9);
            }
            let gam_bar = christoffel(&bar.jet(p, 1).unwrap()).unwrap();
            let gam_base = christoffel(&g.jet(p, 1).unwrap()).unwrap();
            for k in 0..64 {
                let want = gam_base[k].value() + closed.christoffel_correction[k];
                assert!(rel(gam_bar[k].value(), want) < 1e-9, "christoffel {k}");
            }
            // volume ratio: √det ḡ = w √det g
            let sd_bar = curvature::volume_density(&bar.jet(p, 0).unwrap());
            let sd = curvature::volume_density(&g.jet(p, 0).unwrap());
            assert!(rel(sd_bar, closed.vol_ratio * sd) < 1e-12);
        }
    }

    #[test]
    fn rank_one_hessian_gives_flat_deformation() {
        // f = 0.3 sin(x¹+x²) has Hess f proportional to a rank-one matrix,
        // so every correction quadratic in the Hessian cancels and the
        // deformed flat metric stays flat.
        let g = catalog::euclidean(4);
        let spec = DeformationSpec::new(sin_sum(0.3), 1.0, "sin-sum").unwrap();
        let p = [std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0];
        let dc = deformed_curvature_closed(&g, &spec, p).unwrap();
        assert!(dc.scalar_closed.abs() < 1e-14);
        assert!(dc.riemann_closed.iter().all(|&v| v.abs() < 1e-14));
        let e = bach_error(&g, &spec, p).unwrap();
        let max = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-10, "Bach change on a flat deformation: {max}");
    }

    #[test]
    fn deformed_norms_never_exceed_base_norms() {
        let g = catalog::conformally_flat(0.1);
        let spec = DeformationSpec::new(sin_sum(0.4), 1.0, "sin-sum").unwrap();
        let p = [0.9, 0.2, 0.0, 1.4];
        let dc = deformed_curvature_closed(&g, &spec, p).unwrap();
        let bundle = curvature_bundle(&g.jet(p, 2).unwrap()).unwrap();
        let ginv: Vec<f64> = bundle.ginv.iter().map(|t| t.value()).collect();
        // deterministic pseudo-random symmetric tensors
        let mut state = 0x243f6a8885a308d3u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let mut t = vec![0.0; 16];
            for i in 0..4 {
                for j in i..4 {
                    let v = next();
                    t[i2(4, i, j)] = v;
                    t[i2(4, j, i)] = v;
                }
            }
            let (base, bar) = norm_pair(&t, 2, 4, &ginv, &dc.inv_bar);
            assert!(bar <= base * (1.0 + 1e-12), "bar {bar} > base {base}");
        }
    }

    #[test]
    fn integral_identity_on_conformally_flat_base() {
        let g = catalog::conformally_flat(0.1);
        let f = catalog::scalar_by_name("cos-axis", &[0.3, 1.0]).unwrap();
        let spec = DeformationSpec::new(f, 1.0, "cos").unwrap();
        // every integrand here depends on x¹ alone, so spend the nodes there
        let grid = make_chart(&ChartSpec {
            topology: Topology::PeriodicBox,
            extents: vec![2.0 * std::f64::consts::PI; 4],
            resolution: vec![32, 4, 4, 4],
        })
        .unwrap();
        let (lhs, rhs) = scalar_integral_identity(&g, &spec, &grid).unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-8 * (1.0 + lhs.abs()),
            "lhs {lhs} rhs {rhs}"
        );
    }

    #[test]
    fn non_periodic_grid_rejected_for_integral_identity() {
        let g = catalog::euclidean(4);
        let spec = DeformationSpec::new(sin_sum(0.3), 1.0, "s").unwrap();
        let ball = make_chart(&ChartSpec {
            topology: Topology::PolarBall,
            extents: vec![1.0],
            resolution: vec![4, 4, 4, 4],
        })
        .unwrap();
        assert!(matches!(
            scalar_integral_identity(&g, &spec, &ball),
            Err(GeomError::NonPeriodicGrid)
        ));
    }

    #[test]
    fn negative_scale_rejected() {
        assert!(DeformationSpec::new(sin_sum(0.1), -1.0, "bad").is_err());
    }
}
