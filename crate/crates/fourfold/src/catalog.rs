//! Built-in metrics and scalar fields, addressable by name.
//!
//! Every entry is given in closed form over series arithmetic, so jets are
//! exact to machine precision at any supported order. Conventions for the
//! curvature sign checks: the stereographic round 2-sphere of radius r has
//! scalar curvature 2/r², the round 4-sphere 12/r².

use crate::error::GeomError;
use crate::jet::{MetricField, ScalarField};
use crate::taylor::Taylor;

fn diag(dim: usize, entries: Vec<Taylor>) -> Vec<Taylor> {
    let order = entries[0].order();
    let zero = Taylor::constant(dim, order, 0.0);
    let mut g = vec![zero; dim * dim];
    for (i, e) in entries.into_iter().enumerate() {
        g[i * dim + i] = e;
    }
    g
}

/// Flat metric δ_ij on a box or torus chart.
pub fn euclidean(dim: usize) -> MetricField {
    MetricField::analytic("euclidean", dim, move |x| {
        let order = x[0].order();
        diag(dim, (0..dim).map(|_| Taylor::constant(dim, order, 1.0)).collect())
    })
}

/// Round 4-sphere of radius r in stereographic coordinates:
/// g = 4r²/(1+|x|²)² δ. Scalar curvature 12/r², Einstein, Bach-flat.
pub fn sphere(r: f64) -> MetricField {
    MetricField::analytic("sphere", 4, move |x| {
        let order = x[0].order();
        let mut s = Taylor::constant(4, order, 1.0);
        for xa in x.iter() {
            s = s.add(&xa.mul(xa));
        }
        let c = s.mul(&s).recip().scale(4.0 * r * r);
        diag(4, vec![c.clone(), c.clone(), c.clone(), c])
    })
}

/// Round 2-sphere of radius r, stereographic. Scalar curvature 2/r².
pub fn sphere2(r: f64) -> MetricField {
    MetricField::analytic("sphere2", 2, move |x| {
        let order = x[0].order();
        let mut s = Taylor::constant(2, order, 1.0);
        for xa in x.iter().take(2) {
            s = s.add(&xa.mul(xa));
        }
        let c = s.mul(&s).recip().scale(4.0 * r * r);
        diag(2, vec![c.clone(), c])
    })
}

/// S²(r₁) × S²(r₂), each factor stereographic on its own coordinate pair.
/// Einstein iff r₁ = r₂; Bach tensor ±((κ₁²−κ₂²)/6)·g on the two blocks
/// with κ_i = 1/r_i².
pub fn product_spheres(r1: f64, r2: f64) -> MetricField {
    MetricField::analytic("product-spheres", 4, move |x| {
        let order = x[0].order();
        let block = |a: &Taylor, b: &Taylor, r: f64| {
            let mut s = Taylor::constant(4, order, 1.0);
            s = s.add(&a.mul(a)).add(&b.mul(b));
            s.mul(&s).recip().scale(4.0 * r * r)
        };
        let c1 = block(&x[0], &x[1], r1);
        let c2 = block(&x[2], &x[3], r2);
        diag(4, vec![c1.clone(), c1, c2.clone(), c2])
    })
}

/// Conformally flat torus metric e^{2u}δ with u = amp·sin x¹.
pub fn conformally_flat(amp: f64) -> MetricField {
    MetricField::analytic("conformally-flat", 4, move |x| {
        let c = x[0].sin().scale(2.0 * amp).exp();
        diag(4, vec![c.clone(), c.clone(), c.clone(), c])
    })
}

/// Perturbed flat torus metric δ + ε·h with a generic trigonometric h,
/// 2π-periodic in every coordinate. For small ε it is positive definite
/// (row sums of |h| stay below 1/ε) and its Bach tensor is nowhere zero on
/// the verification grids, which makes it the standing example of a metric
/// with |B| bounded away from zero.
pub fn bach_positive_torus(eps: f64) -> MetricField {
    assert!(eps.abs() < 0.3, "perturbation too large for positivity");
    MetricField::analytic("bach-positive-torus", 4, move |x| {
        let order = x[0].order();
        let one = Taylor::constant(4, order, 1.0);
        let zero = Taylor::constant(4, order, 0.0);
        let mut g = vec![zero; 16];
        let e = eps;
        let set = |g: &mut Vec<Taylor>, i: usize, j: usize, v: Taylor| {
            g[i * 4 + j] = v.clone();
            g[j * 4 + i] = v;
        };
        set(&mut g, 0, 0, one.add(&x[0].sin().mul(&x[1].cos()).scale(e)));
        set(&mut g, 1, 1, one.add(&x[1].sin().mul(&x[2].cos()).scale(e)));
        set(&mut g, 2, 2, one.add(&x[2].sin().mul(&x[3].cos()).scale(e)));
        set(&mut g, 3, 3, one.add(&x[3].sin().mul(&x[0].cos()).scale(e)));
        set(&mut g, 0, 1, x[0].add(&x[3].scale(2.0)).sin().scale(0.7 * e));
        set(&mut g, 0, 2, x[1].add(&x[2]).cos().scale(0.5 * e));
        set(&mut g, 0, 3, x[2].sub(&x[3]).sin().scale(0.4 * e));
        set(&mut g, 1, 2, x[0].sub(&x[3]).cos().scale(0.6 * e));
        set(&mut g, 1, 3, x[1].add(&x[3]).sin().scale(0.5 * e));
        set(&mut g, 2, 3, x[0].add(&x[1]).cos().scale(0.7 * e));
        g
    })
}

/// Volume-preserving shear of the flat torus:
/// g = dx₀² + e^{2A}dx₁² + e^{−2A}dx₂² + dx₃² with A = amp·sin x₀.
/// Its scalar curvature is S = −2A′(x₀)² ≤ 0 pointwise, so the total
/// curvature integral is strictly negative; the only catalog entry with
/// that property, used to drive the negative branch of the construction.
pub fn shear_torus(amp: f64) -> MetricField {
    MetricField::analytic("shear-torus", 4, move |x| {
        let order = x[0].order();
        let one = Taylor::constant(4, order, 1.0);
        let a2 = x[0].sin().scale(2.0 * amp);
        diag(4, vec![one.clone(), a2.exp(), a2.neg().exp(), one])
    })
}

/// Names accepted by `metric_by_name`, with their default parameters.
pub const METRIC_NAMES: &[&str] = &[
    "euclidean",
    "sphere",
    "sphere2",
    "product-spheres",
    "conformally-flat",
    "bach-positive-torus",
    "shear-torus",
];

/// Look up a catalog metric. Missing parameters fall back to defaults:
/// sphere radius 1, product radii (1, 2), conformal amplitude 0.1,
/// torus perturbation 0.05.
pub fn metric_by_name(name: &str, params: &[f64]) -> Result<MetricField, GeomError> {
    let p = |i: usize, d: f64| params.get(i).copied().unwrap_or(d);
    match name {
        "euclidean" => Ok(euclidean(p(0, 4.0) as usize)),
        "sphere" => Ok(sphere(p(0, 1.0))),
        "sphere2" => Ok(sphere2(p(0, 1.0))),
        "product-spheres" => Ok(product_spheres(p(0, 1.0), p(1, 2.0))),
        "conformally-flat" => Ok(conformally_flat(p(0, 0.1))),
        "bach-positive-torus" => Ok(bach_positive_torus(p(0, 0.05))),
        "shear-torus" => Ok(shear_torus(p(0, 0.25))),
        _ => Err(GeomError::InvalidChartSpec(format!("unknown catalog metric '{name}'"))),
    }
}

/// Names accepted by `scalar_by_name`.
pub const SCALAR_NAMES: &[&str] = &["constant", "sin-sum", "cos-axis", "trig-mix"];

/// Look up a catalog scalar field (deformation profiles, conformal factors).
/// * `constant c`
/// * `sin-sum a` → a·sin(x¹+x²)
/// * `cos-axis a m` → a·cos(m·x¹)
/// * `trig-mix a` → a·(sin x¹ cos 2x² + sin(x³+x⁴))
pub fn scalar_by_name(name: &str, params: &[f64]) -> Result<ScalarField, GeomError> {
    let p = |i: usize, d: f64| params.get(i).copied().unwrap_or(d);
    match name {
        "constant" => {
            let c = p(0, 1.0);
            Ok(ScalarField::analytic("constant", 4, move |x| {
                Taylor::constant(4, x[0].order(), c)
            }))
        }
        "sin-sum" => {
            let a = p(0, 0.3);
            Ok(ScalarField::analytic("sin-sum", 4, move |x| {
                x[0].add(&x[1]).sin().scale(a)
            }))
        }
        "cos-axis" => {
            let a = p(0, 0.3);
            let m = p(1, 1.0);
            Ok(ScalarField::analytic("cos-axis", 4, move |x| {
                x[0].scale(m).cos().scale(a)
            }))
        }
        "trig-mix" => {
            let a = p(0, 0.2);
            Ok(ScalarField::analytic("trig-mix", 4, move |x| {
                let t1 = x[0].sin().mul(&x[1].scale(2.0).cos());
                let t2 = x[2].add(&x[3]).sin();
                t1.add(&t2).scale(a)
            }))
        }
        _ => Err(GeomError::InvalidChartSpec(format!("unknown catalog scalar '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_metrics_are_positive_definite() {
        let pts = [
            [0.0, 0.0, 0.0, 0.0],
            [0.4, -1.2, 0.3, 2.0],
            [3.0, 1.0, -2.0, 0.5],
        ];
        for name in METRIC_NAMES {
            let m = metric_by_name(name, &[]).unwrap();
            for p in pts {
                let jet = m.jet(p, 2).unwrap();
                assert!(jet.min_eigenvalue() > 0.0, "{name} at {p:?}");
            }
        }
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(metric_by_name("schwarzschild", &[]).is_err());
        assert!(scalar_by_name("bessel", &[]).is_err());
    }

    #[test]
    fn scalar_catalog_values() {
        let f = scalar_by_name("sin-sum", &[0.3]).unwrap();
        let v = f.eval([0.5, 0.25, 0.0, 0.0]).unwrap();
        assert!((v - 0.3 * 0.75f64.sin()).abs() < 1e-15);
        let c = scalar_by_name("constant", &[2.5]).unwrap();
        assert!((c.eval([1.0, 2.0, 3.0, 4.0]).unwrap() - 2.5).abs() < 1e-15);
    }
}
