//! Curvature from metric jets: Christoffel symbols, Riemann, Ricci, scalar,
//! Weyl, and the Bach tensor computed by two independent routes.
//!
//! Conventions (locked by tests):
//! * Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
//! * R^m_ijk = ∂_i Γ^m_jk − ∂_j Γ^m_ik + Γ^m_ia Γ^a_jk − Γ^m_ja Γ^a_ik
//! * Ric_jk = Σ_m R^m_mjk, so the unit round 2-sphere has scalar 2 and the
//!   unit round 4-sphere scalar 12.
//! * Fully lowered tensor: R_ijkl = g_km R^m_ijl, antisymmetric in (i,j)
//!   and (k,l), pair-swap symmetric, with g^{ik} R_ijkl = +Ric_jl.
//! * Covariant derivatives prepend the new index: (∇T)_{a,I}.
//!
//! Everything is computed in truncated series arithmetic; an order-n metric
//! jet yields order n−2 curvature and order n−4 Bach. With n = 5 the Bach
//! tensor carries exact first partials, enough to evaluate its divergence
//! without any grid stencil.

use crate::chart::ChartPoint;
use crate::error::GeomError;
use crate::jet::MetricJet;
use crate::taylor::Taylor;

#[inline]
pub fn i2(d: usize, i: usize, j: usize) -> usize {
    i * d + j
}

#[inline]
pub fn i3(d: usize, k: usize, i: usize, j: usize) -> usize {
    (k * d + i) * d + j
}

#[inline]
pub fn i4(d: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * d + j) * d + k) * d + l
}

fn comps(jet: &MetricJet) -> Vec<Taylor> {
    let d = jet.dim;
    (0..d * d).map(|k| jet.component(k / d, k % d).clone()).collect()
}

/// Inverse of a symmetric positive-definite matrix of expansions by
/// Gauss-Jordan elimination. Pivot values are the leading minors' ratios,
/// positive by definiteness, so no row exchanges are needed.
pub fn invert_sym(m: &[Taylor], dim: usize) -> Vec<Taylor> {
    let tdim = m[0].dim();
    let order = m[0].order();
    let mut a = m.to_vec();
    let mut inv: Vec<Taylor> = (0..dim * dim)
        .map(|k| Taylor::constant(tdim, order, if k / dim == k % dim { 1.0 } else { 0.0 }))
        .collect();
    for col in 0..dim {
        let piv = a[i2(dim, col, col)].recip();
        for j in 0..dim {
            a[i2(dim, col, j)] = a[i2(dim, col, j)].mul(&piv);
            inv[i2(dim, col, j)] = inv[i2(dim, col, j)].mul(&piv);
        }
        for r in 0..dim {
            if r == col {
                continue;
            }
            let f = a[i2(dim, r, col)].clone();
            for j in 0..dim {
                let t = f.mul(&a[i2(dim, col, j)]);
                a[i2(dim, r, j)] = a[i2(dim, r, j)].sub(&t);
                let t = f.mul(&inv[i2(dim, col, j)]);
                inv[i2(dim, r, j)] = inv[i2(dim, r, j)].sub(&t);
            }
        }
    }
    inv
}

/// Determinant by forward elimination (product of pivots).
pub fn det_sym(m: &[Taylor], dim: usize) -> Taylor {
    let tdim = m[0].dim();
    let order = m[0].order();
    let mut a = m.to_vec();
    let mut det = Taylor::constant(tdim, order, 1.0);
    for col in 0..dim {
        det = det.mul(&a[i2(dim, col, col)]);
        let piv = a[i2(dim, col, col)].recip();
        for r in (col + 1)..dim {
            let f = a[i2(dim, r, col)].mul(&piv);
            for j in col..dim {
                let t = f.mul(&a[i2(dim, col, j)]);
                a[i2(dim, r, j)] = a[i2(dim, r, j)].sub(&t);
            }
        }
    }
    det
}

fn gamma_of(g: &[Taylor], ginv: &[Taylor], dim: usize) -> Vec<Taylor> {
    let n = g[0].order();
    assert!(n >= 1, "need at least first derivatives of the metric");
    let tdim = g[0].dim();
    // dg[a][i][j] = ∂_a g_ij at order n−1
    let mut dg = Vec::with_capacity(dim * dim * dim);
    for a in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                dg.push(g[i2(dim, i, j)].derive(a));
            }
        }
    }
    let gi: Vec<Taylor> = ginv.iter().map(|t| t.truncate(n - 1)).collect();
    let mut gam = vec![Taylor::constant(tdim, n - 1, 0.0); dim * dim * dim];
    for k in 0..dim {
        for i in 0..dim {
            for j in i..dim {
                let mut s = Taylor::constant(tdim, n - 1, 0.0);
                for l in 0..dim {
                    let term = dg[i3(dim, i, j, l)]
                        .add(&dg[i3(dim, j, i, l)])
                        .sub(&dg[i3(dim, l, i, j)]);
                    s = s.add(&gi[i2(dim, k, l)].mul(&term));
                }
                let s = s.scale(0.5);
                gam[i3(dim, k, i, j)] = s.clone();
                gam[i3(dim, k, j, i)] = s;
            }
        }
    }
    gam
}

/// Christoffel symbols Γ^k_ij of a metric jet, one order below the jet.
/// Layout: gamma[(k·d + i)·d + j].
pub fn christoffel(jet: &MetricJet) -> Result<Vec<Taylor>, GeomError> {
    if jet.order < 1 {
        return Err(GeomError::InsufficientJetOrder { need: 1, have: jet.order });
    }
    let g = comps(jet);
    let ginv = invert_sym(&g, jet.dim);
    Ok(gamma_of(&g, &ginv, jet.dim))
}

/// Metric with its curvature through the scalar, all as expansions.
#[derive(Clone, Debug)]
pub struct CurvatureBundle {
    pub point: ChartPoint,
    pub dim: usize,
    /// Order of the source metric jet; curvature entries sit at order−2.
    pub order: usize,
    pub g: Vec<Taylor>,
    pub ginv: Vec<Taylor>,
    pub sqrt_det: Taylor,
    /// Γ^k_ij at [k,i,j], order−1.
    pub gamma: Vec<Taylor>,
    /// R^m_ijk at [m,i,j,k], order−2.
    pub riemann_up: Vec<Taylor>,
    /// Fully lowered R_ijkl at [i,j,k,l], order−2.
    pub riemann: Vec<Taylor>,
    /// Ric_ij, order−2.
    pub ricci: Vec<Taylor>,
    /// Scalar curvature, order−2.
    pub scalar: Taylor,
}

pub fn curvature_bundle(jet: &MetricJet) -> Result<CurvatureBundle, GeomError> {
    let n = jet.order;
    if n < 2 {
        return Err(GeomError::InsufficientJetOrder { need: 2, have: n });
    }
    let d = jet.dim;
    let g = comps(jet);
    let ginv = invert_sym(&g, d);
    let sqrt_det = det_sym(&g, d).sqrt();
    let gamma = gamma_of(&g, &ginv, d);
    let q = n - 2;
    let gam_q: Vec<Taylor> = gamma.iter().map(|t| t.truncate(q)).collect();
    // dgam[i][m][j][k] = ∂_i Γ^m_jk
    let mut dgam = Vec::with_capacity(d * d * d * d);
    for i in 0..d {
        for m in 0..d {
            for j in 0..d {
                for k in 0..d {
                    dgam.push(gamma[i3(d, m, j, k)].derive(i));
                }
            }
        }
    }
    let tdim = g[0].dim();
    let mut riemann_up = vec![Taylor::constant(tdim, q, 0.0); d * d * d * d];
    for m in 0..d {
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let mut s = dgam[i4(d, i, m, j, k)].sub(&dgam[i4(d, j, m, i, k)]);
                    for a in 0..d {
                        let t1 = gam_q[i3(d, m, i, a)].mul(&gam_q[i3(d, a, j, k)]);
                        let t2 = gam_q[i3(d, m, j, a)].mul(&gam_q[i3(d, a, i, k)]);
                        s = s.add(&t1).sub(&t2);
                    }
                    riemann_up[i4(d, m, i, j, k)] = s;
                }
            }
        }
    }
    let g_q: Vec<Taylor> = g.iter().map(|t| t.truncate(q)).collect();
    let ginv_q: Vec<Taylor> = ginv.iter().map(|t| t.truncate(q)).collect();
    let mut riemann = vec![Taylor::constant(tdim, q, 0.0); d * d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut s = Taylor::constant(tdim, q, 0.0);
                    for m in 0..d {
                        s = s.add(&g_q[i2(d, k, m)].mul(&riemann_up[i4(d, m, i, j, l)]));
                    }
                    riemann[i4(d, i, j, k, l)] = s;
                }
            }
        }
    }
    let mut ricci = vec![Taylor::constant(tdim, q, 0.0); d * d];
    for j in 0..d {
        for k in 0..d {
            let mut s = Taylor::constant(tdim, q, 0.0);
            for m in 0..d {
                s = s.add(&riemann_up[i4(d, m, m, j, k)]);
            }
            ricci[i2(d, j, k)] = s;
        }
    }
    let mut scalar = Taylor::constant(tdim, q, 0.0);
    for j in 0..d {
        for k in 0..d {
            scalar = scalar.add(&ginv_q[i2(d, j, k)].mul(&ricci[i2(d, j, k)]));
        }
    }
    Ok(CurvatureBundle {
        point: jet.point,
        dim: d,
        order: n,
        g,
        ginv,
        sqrt_det,
        gamma,
        riemann_up,
        riemann,
        ricci,
        scalar,
    })
}

/// Covariant derivative of a fully covariant tensor (flat layout, row-major
/// indices). The new index comes first: out[a,I] = ∂_a T_I − Σ_s Γ^c_{a,I_s} T_{I_s→c}.
/// Output order is one below the input; gamma may be any order ≥ that.
pub fn cov_deriv(t: &[Taylor], rank: usize, dim: usize, gamma: &[Taylor]) -> Vec<Taylor> {
    let m = t[0].order();
    assert!(m >= 1, "tensor has no derivatives left");
    let gm: Vec<Taylor> = gamma.iter().map(|x| x.truncate(m - 1)).collect();
    let tt: Vec<Taylor> = t.iter().map(|x| x.truncate(m - 1)).collect();
    let mut out = Vec::with_capacity(t.len() * dim);
    for a in 0..dim {
        for flat in 0..t.len() {
            let mut e = t[flat].derive(a);
            let mut digits = [0usize; 8];
            let mut rem = flat;
            for s in (0..rank).rev() {
                digits[s] = rem % dim;
                rem /= dim;
            }
            for (s, &ds) in digits.iter().enumerate().take(rank) {
                let stride = dim.pow((rank - 1 - s) as u32);
                let base = flat - ds * stride;
                for c in 0..dim {
                    let corr = gm[i3(dim, c, a, ds)].mul(&tt[base + c * stride]);
                    e = e.sub(&corr);
                }
            }
            out.push(e);
        }
    }
    out
}

/// |T|² of a fully covariant tensor from componentwise values, raising every
/// index with the given inverse-metric values.
pub fn tensor_norm2(vals: &[f64], rank: usize, dim: usize, ginv: &[f64]) -> f64 {
    let mut up = vals.to_vec();
    for s in 0..rank {
        let stride = dim.pow((rank - 1 - s) as u32);
        let mut next = vec![0.0; up.len()];
        for (flat, slot) in next.iter_mut().enumerate() {
            let ds = (flat / stride) % dim;
            let base = flat - ds * stride;
            let mut acc = 0.0;
            for c in 0..dim {
                acc += ginv[i2(dim, ds, c)] * up[base + c * stride];
            }
            *slot = acc;
        }
        up = next;
    }
    vals.iter().zip(&up).map(|(a, b)| a * b).sum()
}

/// Weyl tensor (fully lowered, order−2). Requires dim ≥ 3; the Bach forms
/// below require dim 4.
pub fn weyl(b: &CurvatureBundle) -> Result<Vec<Taylor>, GeomError> {
    let d = b.dim;
    if d < 3 {
        return Err(GeomError::NotDimensionFour(d));
    }
    let q = b.order - 2;
    let tdim = b.g[0].dim();
    let g: Vec<Taylor> = b.g.iter().map(|t| t.truncate(q)).collect();
    let df = d as f64;
    let c_ric = 1.0 / (df - 2.0);
    let c_s = 1.0 / (2.0 * (df - 1.0) * (df - 2.0));
    let kn = |a: &[Taylor], bm: &[Taylor], i: usize, j: usize, k: usize, l: usize| {
        a[i2(d, i, k)]
            .mul(&bm[i2(d, j, l)])
            .add(&a[i2(d, j, l)].mul(&bm[i2(d, i, k)]))
            .sub(&a[i2(d, i, l)].mul(&bm[i2(d, j, k)]))
            .sub(&a[i2(d, j, k)].mul(&bm[i2(d, i, l)]))
    };
    let mut w = vec![Taylor::constant(tdim, q, 0.0); d * d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let rkg = kn(&b.ricci, &g, i, j, k, l);
                    let gkg = kn(&g, &g, i, j, k, l);
                    w[i4(d, i, j, k, l)] = b.riemann[i4(d, i, j, k, l)]
                        .sub(&rkg.scale(c_ric))
                        .add(&b.scalar.mul(&gkg).scale(c_s));
                }
            }
        }
    }
    Ok(w)
}

/// Bach tensor values with enough expansion left over for divergence checks.
#[derive(Clone, Debug)]
pub struct BachValue {
    pub point: ChartPoint,
    /// B_ij as expansions of order (metric jet order − 4); 16 entries.
    pub bach: Vec<Taylor>,
    /// |B|²_g at the point.
    pub norm2: f64,
}

impl BachValue {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.bach[i2(4, i, j)].value()
    }

    pub fn norm(&self) -> f64 {
        self.norm2.max(0.0).sqrt()
    }

    /// |B|^{1/2} = (|B|²)^{1/4}, the density entering the mixed curvature
    /// functional.
    pub fn sqrt_norm(&self) -> f64 {
        self.norm2.max(0.0).powf(0.25)
    }
}

fn require_bach_input(b: &CurvatureBundle) -> Result<(), GeomError> {
    if b.dim != 4 {
        return Err(GeomError::NotDimensionFour(b.dim));
    }
    if b.order < 4 {
        return Err(GeomError::InsufficientJetOrder { need: 4, have: b.order });
    }
    Ok(())
}

fn ginv_values(b: &CurvatureBundle) -> Vec<f64> {
    b.ginv.iter().map(|t| t.value()).collect()
}

/// Bach tensor via the Ricci-based contracted formula:
/// B_ij = ½[ΔRic_ij − ⅓∇²_ij S + 2 Ric^{kl} R_ikjl − ⅔ S Ric_ij
///          − ⅙ ΔS g_ij − ½(|Ric|² − S²/3) g_ij].
pub fn bach_ricci_form(b: &CurvatureBundle) -> Result<BachValue, GeomError> {
    require_bach_input(b)?;
    let d = 4;
    let q = b.order - 2;
    let oo = q - 2;
    let tdim = b.g[0].dim();
    let dric = cov_deriv(&b.ricci, 2, d, &b.gamma);
    let ddric = cov_deriv(&dric, 3, d, &b.gamma);
    let gi: Vec<Taylor> = b.ginv.iter().map(|t| t.truncate(oo)).collect();
    let g0: Vec<Taylor> = b.g.iter().map(|t| t.truncate(oo)).collect();
    let ric0: Vec<Taylor> = b.ricci.iter().map(|t| t.truncate(oo)).collect();
    let r40: Vec<Taylor> = b.riemann.iter().map(|t| t.truncate(oo)).collect();
    let s0 = b.scalar.truncate(oo);

    let mut lap_ric = vec![Taylor::constant(tdim, oo, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = Taylor::constant(tdim, oo, 0.0);
            for a in 0..d {
                for c in 0..d {
                    // ddric[c,a,i,j] = ∇_c ∇_a Ric_ij
                    let idx = ((c * d + a) * d + i) * d + j;
                    s = s.add(&gi[i2(d, a, c)].mul(&ddric[idx]));
                }
            }
            lap_ric[i2(d, i, j)] = s;
        }
    }

    let ds: Vec<Taylor> = (0..d).map(|a| b.scalar.derive(a)).collect();
    let hess_s = cov_deriv(&ds, 1, d, &b.gamma);
    let mut lap_s = Taylor::constant(tdim, oo, 0.0);
    for a in 0..d {
        for c in 0..d {
            lap_s = lap_s.add(&gi[i2(d, a, c)].mul(&hess_s[i2(d, a, c)]));
        }
    }

    let mut ric_up = vec![Taylor::constant(tdim, oo, 0.0); d * d];
    for k in 0..d {
        for l in 0..d {
            let mut s = Taylor::constant(tdim, oo, 0.0);
            for a in 0..d {
                for bb in 0..d {
                    s = s.add(&gi[i2(d, k, a)].mul(&gi[i2(d, l, bb)]).mul(&ric0[i2(d, a, bb)]));
                }
            }
            ric_up[i2(d, k, l)] = s;
        }
    }
    let mut ric2 = Taylor::constant(tdim, oo, 0.0);
    for i in 0..d {
        for j in 0..d {
            ric2 = ric2.add(&ric0[i2(d, i, j)].mul(&ric_up[i2(d, i, j)]));
        }
    }
    let s2_third = s0.mul(&s0).scale(1.0 / 3.0);
    let pot = ric2.sub(&s2_third);

    let mut bach = vec![Taylor::constant(tdim, oo, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut cross = Taylor::constant(tdim, oo, 0.0);
            for k in 0..d {
                for l in 0..d {
                    cross = cross.add(&ric_up[i2(d, k, l)].mul(&r40[i4(d, i, k, j, l)]));
                }
            }
            let e = lap_ric[i2(d, i, j)]
                .sub(&hess_s[i2(d, i, j)].scale(1.0 / 3.0))
                .add(&cross.scale(2.0))
                .sub(&s0.mul(&ric0[i2(d, i, j)]).scale(2.0 / 3.0))
                .sub(&lap_s.mul(&g0[i2(d, i, j)]).scale(1.0 / 6.0))
                .sub(&pot.mul(&g0[i2(d, i, j)]).scale(0.5));
            bach[i2(d, i, j)] = e.scale(0.5);
        }
    }
    let vals: Vec<f64> = bach.iter().map(|t| t.value()).collect();
    let norm2 = tensor_norm2(&vals, 2, d, &ginv_values(b));
    Ok(BachValue { point: b.point, bach, norm2 })
}

/// Bach tensor via the Weyl route: B_ij = ∇^k∇^l W_ikjl + ½ Ric^{kl} W_ikjl.
/// Independent of `bach_ricci_form` past the shared curvature bundle.
pub fn bach_weyl_form(b: &CurvatureBundle) -> Result<BachValue, GeomError> {
    require_bach_input(b)?;
    let d = 4;
    let q = b.order - 2;
    let oo = q - 2;
    let tdim = b.g[0].dim();
    let w = weyl(b)?;
    let dw = cov_deriv(&w, 4, d, &b.gamma);
    let ddw = cov_deriv(&dw, 5, d, &b.gamma);
    let gi: Vec<Taylor> = b.ginv.iter().map(|t| t.truncate(oo)).collect();
    let ric0: Vec<Taylor> = b.ricci.iter().map(|t| t.truncate(oo)).collect();
    let w0: Vec<Taylor> = w.iter().map(|t| t.truncate(oo)).collect();

    let mut ric_up = vec![Taylor::constant(tdim, oo, 0.0); d * d];
    for k in 0..d {
        for l in 0..d {
            let mut s = Taylor::constant(tdim, oo, 0.0);
            for a in 0..d {
                for bb in 0..d {
                    s = s.add(&gi[i2(d, k, a)].mul(&gi[i2(d, l, bb)]).mul(&ric0[i2(d, a, bb)]));
                }
            }
            ric_up[i2(d, k, l)] = s;
        }
    }

    let mut bach = vec![Taylor::constant(tdim, oo, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = Taylor::constant(tdim, oo, 0.0);
            for k in 0..d {
                for l in 0..d {
                    for p in 0..d {
                        for m in 0..d {
                            // ddw[p,m,i,k,j,l] = ∇_p ∇_m W_ikjl
                            let idx = ((((p * d + m) * d + i) * d + k) * d + j) * d + l;
                            acc = acc.add(&gi[i2(d, k, p)].mul(&gi[i2(d, l, m)]).mul(&ddw[idx]));
                        }
                    }
                    acc = acc.add(&ric_up[i2(d, k, l)].mul(&w0[i4(d, i, k, j, l)]).scale(0.5));
                }
            }
            bach[i2(d, i, j)] = acc;
        }
    }
    let vals: Vec<f64> = bach.iter().map(|t| t.value()).collect();
    let norm2 = tensor_norm2(&vals, 2, d, &ginv_values(b));
    Ok(BachValue { point: b.point, bach, norm2 })
}

/// Pointwise divergence (div T)_j = g^{ai} (∇T)_{a,i,j} of a covariant
/// 2-tensor of expansions (order ≥ 1).
pub fn divergence2(t: &[Taylor], dim: usize, gamma: &[Taylor], ginv_vals: &[f64]) -> Vec<f64> {
    let dt = cov_deriv(t, 2, dim, gamma);
    (0..dim)
        .map(|j| {
            let mut s = 0.0;
            for a in 0..dim {
                for i in 0..dim {
                    s += ginv_vals[i2(dim, a, i)] * dt[(a * dim + i) * dim + j].value();
                }
            }
            s
        })
        .collect()
}

/// √det g at the jet's base point.
pub fn volume_density(jet: &MetricJet) -> f64 {
    jet.matrix().determinant().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn flat_metric_has_no_curvature() {
        let m = catalog::euclidean(4);
        let jet = m.jet([0.3, 1.0, -2.0, 0.7], 4).unwrap();
        let b = curvature_bundle(&jet).unwrap();
        assert_eq!(b.scalar.value(), 0.0);
        assert!(b.riemann.iter().all(|t| t.value() == 0.0));
        let bach = bach_ricci_form(&b).unwrap();
        assert_eq!(bach.norm2, 0.0);
    }

    #[test]
    fn round_sphere_scalar_conventions() {
        let s2 = catalog::sphere2(1.0);
        let jet = s2.jet([0.2, -0.4, 0.0, 0.0], 2).unwrap();
        let b = curvature_bundle(&jet).unwrap();
        assert!((b.scalar.value() - 2.0).abs() < 1e-12, "S² scalar {}", b.scalar.value());

        let s4 = catalog::sphere(1.0);
        let jet = s4.jet([0.1, 0.2, -0.3, 0.4], 2).unwrap();
        let b = curvature_bundle(&jet).unwrap();
        assert!((b.scalar.value() - 12.0).abs() < 1e-11, "S⁴ scalar {}", b.scalar.value());
    }

    #[test]
    fn sphere_is_einstein_and_bach_flat() {
        let m = catalog::sphere(1.3);
        let jet = m.jet([0.5, -0.1, 0.7, 0.2], 4).unwrap();
        let b = curvature_bundle(&jet).unwrap();
        // Ric = (S/4) g on an Einstein 4-manifold
        let s = b.scalar.value();
        for i in 0..4 {
            for j in 0..4 {
                let want = s / 4.0 * b.g[i2(4, i, j)].value();
                assert!((b.ricci[i2(4, i, j)].value() - want).abs() < 1e-10);
            }
        }
        let w = weyl(&b).unwrap();
        assert!(w.iter().all(|t| t.value().abs() < 1e-10), "sphere is conformally flat");
        let bach = bach_ricci_form(&b).unwrap();
        assert!(bach.norm() < 1e-10, "|B| = {}", bach.norm());
    }

    #[test]
    fn product_spheres_frozen_point() {
        // S²(1) × S²(2) at a fixed rational point: S = 5/2 and the Bach
        // tensor is +5/32·g on the first block, −5/32·g on the second,
        // |B|² = 25/256.
        let m = catalog::product_spheres(1.0, 2.0);
        let p = [0.2, -1.0 / 3.0, 0.5, 2.0 / 7.0];
        let jet = m.jet(p, 4).unwrap();
        let b = curvature_bundle(&jet).unwrap();
        assert!((b.scalar.value() - 2.5).abs() < 1e-12);
        let bach = bach_ricci_form(&b).unwrap();
        for i in 0..4 {
            let want = if i < 2 { 5.0 / 32.0 } else { -5.0 / 32.0 };
            let ratio = bach.value(i, i) / b.g[i2(4, i, i)].value();
            assert!((ratio - want).abs() < 1e-10, "block ratio {i}: {ratio}");
        }
        assert!((bach.norm2 - 25.0 / 256.0).abs() < 1e-10);
    }

    #[test]
    fn weyl_is_trace_free() {
        let m = catalog::bach_positive_torus(0.05);
        let jet = m.jet([0.7, 1.9, 2.3, 0.4], 2).unwrap();
        let b = curvature_bundle(&jet).unwrap();
        let w = weyl(&b).unwrap();
        let gi: Vec<f64> = b.ginv.iter().map(|t| t.value()).collect();
        for j in 0..4 {
            for l in 0..4 {
                let mut tr = 0.0;
                for i in 0..4 {
                    for k in 0..4 {
                        tr += gi[i2(4, i, k)] * w[i4(4, i, j, k, l)].value();
                    }
                }
                assert!(tr.abs() < 1e-12, "trace at ({j},{l}) = {tr}");
            }
        }
    }

    #[test]
    fn two_bach_routes_agree_on_generic_metric() {
        let m = catalog::bach_positive_torus(0.05);
        let jet = m.jet([0.7, 1.9, 2.3, 0.4], 4).unwrap();
        let b = curvature_bundle(&jet).unwrap();
        let br = bach_ricci_form(&b).unwrap();
        let bw = bach_weyl_form(&b).unwrap();
        let scale = br.norm().max(1e-30);
        for i in 0..4 {
            for j in 0..4 {
                let diff = (br.value(i, j) - bw.value(i, j)).abs();
                assert!(diff < 1e-9 * scale.max(1.0), "B[{i}{j}] differs by {diff}");
            }
        }
    }

    #[test]
    fn bach_is_trace_free_and_divergence_free() {
        let m = catalog::bach_positive_torus(0.05);
        let jet = m.jet([1.1, 0.3, 5.0, 2.2], 5).unwrap();
        let b = curvature_bundle(&jet).unwrap();
        let bach = bach_ricci_form(&b).unwrap();
        let gi: Vec<f64> = b.ginv.iter().map(|t| t.value()).collect();
        let mut tr = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                tr += gi[i2(4, i, j)] * bach.value(i, j);
            }
        }
        assert!(tr.abs() < 1e-11, "trace {tr}");
        let div = divergence2(&bach.bach, 4, &b.gamma, &gi);
        for (j, v) in div.iter().enumerate() {
            assert!(v.abs() < crate::tol::DIV_TOL, "div B component {j} = {v}");
        }
    }

    #[test]
    fn tensor_norm_matches_hand_contraction() {
        // diagonal metric diag(2,1,1,1): |T|² with T = e⁰⊗e⁰ is g^{00}² = 1/4
        let mut ginv = vec![0.0; 16];
        ginv[0] = 0.5;
        ginv[5] = 1.0;
        ginv[10] = 1.0;
        ginv[15] = 1.0;
        let mut t = vec![0.0; 16];
        t[0] = 1.0;
        let n2 = tensor_norm2(&t, 2, 4, &ginv);
        assert!((n2 - 0.25).abs() < 1e-15);
    }
}
