//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Taylor`] value stores the coefficients of a polynomial expansion
//! f(x₀ + h) = Σ_{|α| ≤ order} c_α h^α around a base point, in up to four
//! variables. Arithmetic on these values propagates derivatives exactly
//! (forward-mode differentiation to arbitrary order), which is what the
//! curvature stack consumes: no stencils, no truncation error beyond the
//! stated order.
//!
//! Coefficients relate to partial derivatives by ∂^α f = α! · c_α.

use std::sync::OnceLock;

pub const MAX_DIM: usize = 4;
pub const MAX_ORDER: usize = 6;

/// Precomputed index tables for one (dim, order) pair.
struct Tables {
    /// Multi-indices in graded lexicographic order.
    exps: Vec<[u8; 4]>,
    /// Packed-exponent key → position (keys are Σ αᵢ·8^i).
    pos: Vec<u32>,
    /// (ia, ib, target) triples with |α|+|β| ≤ order.
    mul: Vec<(u32, u32, u32)>,
    /// Per axis: (source, target, factor) for the derivative map.
    der: [Vec<(u32, u32, f64)>; 4],
}

const NO_POS: u32 = u32::MAX;

fn pack(e: &[u8; 4]) -> usize {
    e[0] as usize + 8 * (e[1] as usize + 8 * (e[2] as usize + 8 * e[3] as usize))
}

fn build_tables(dim: usize, order: usize) -> Tables {
    let mut exps: Vec<[u8; 4]> = Vec::new();
    // graded lexicographic: by total degree, then lexicographic in exponents
    for total in 0..=order {
        let mut e = [0u8; 4];
        enumerate(dim, total, 0, &mut e, &mut exps);
    }
    let mut pos = vec![NO_POS; 8usize.pow(4)];
    for (i, e) in exps.iter().enumerate() {
        pos[pack(e)] = i as u32;
    }
    let mut mul = Vec::new();
    for (ia, a) in exps.iter().enumerate() {
        for (ib, b) in exps.iter().enumerate() {
            let tot: usize = (0..dim).map(|i| (a[i] + b[i]) as usize).sum();
            if tot <= order {
                let mut s = [0u8; 4];
                for i in 0..dim {
                    s[i] = a[i] + b[i];
                }
                mul.push((ia as u32, ib as u32, pos[pack(&s)]));
            }
        }
    }
    let mut der: [Vec<(u32, u32, f64)>; 4] = Default::default();
    for axis in 0..dim {
        for (ia, a) in exps.iter().enumerate() {
            if a[axis] >= 1 {
                let mut s = *a;
                s[axis] -= 1;
                der[axis].push((ia as u32, pos[pack(&s)], a[axis] as f64));
            }
        }
    }
    Tables { exps, pos, mul, der }
}

fn enumerate(dim: usize, remaining: usize, axis: usize, e: &mut [u8; 4], out: &mut Vec<[u8; 4]>) {
    if axis == dim - 1 {
        e[axis] = remaining as u8;
        out.push(*e);
        e[axis] = 0;
        return;
    }
    for v in (0..=remaining).rev() {
        e[axis] = v as u8;
        enumerate(dim, remaining - v, axis + 1, e, out);
    }
    e[axis] = 0;
}

fn tables(dim: usize, order: usize) -> &'static Tables {
    static CELLS: [[OnceLock<Tables>; MAX_ORDER + 1]; MAX_DIM] =
        [const { [const { OnceLock::new() }; MAX_ORDER + 1] }; MAX_DIM];
    assert!((1..=MAX_DIM).contains(&dim) && order <= MAX_ORDER);
    CELLS[dim - 1][order].get_or_init(|| build_tables(dim, order))
}

/// Truncated Taylor expansion in `dim` variables through total degree `order`.
#[derive(Clone, Debug)]
pub struct Taylor {
    dim: u8,
    order: u8,
    c: Vec<f64>,
}

impl Taylor {
    pub fn constant(dim: usize, order: usize, v: f64) -> Self {
        let t = tables(dim, order);
        let mut c = vec![0.0; t.exps.len()];
        c[0] = v;
        Taylor { dim: dim as u8, order: order as u8, c }
    }

    /// The seed `value + h_axis`: expansion of the coordinate function.
    pub fn variable(dim: usize, order: usize, axis: usize, value: f64) -> Self {
        assert!(axis < dim);
        let mut out = Self::constant(dim, order, value);
        if order >= 1 {
            let mut e = [0u8; 4];
            e[axis] = 1;
            let p = tables(dim, order).pos[pack(&e)];
            out.c[p as usize] = 1.0;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    fn t(&self) -> &'static Tables {
        tables(self.dim(), self.order())
    }

    /// Raw coefficient c_α.
    pub fn coeff(&self, e: &[u8; 4]) -> f64 {
        let p = self.t().pos[pack(e)];
        assert!(p != NO_POS, "exponent outside truncation order");
        self.c[p as usize]
    }

    /// Partial derivative ∂^α f at the base point (= α! · c_α).
    pub fn partial(&self, e: &[u8; 4]) -> f64 {
        let mut fact = 1.0;
        for i in 0..self.dim() {
            for k in 2..=e[i] as u64 {
                fact *= k as f64;
            }
        }
        self.coeff(e) * fact
    }

    /// Build from prescribed partial derivatives (c_α = ∂^α/α!).
    pub fn from_partials(dim: usize, order: usize, partial: impl Fn(&[u8; 4]) -> f64) -> Self {
        let t = tables(dim, order);
        let mut c = vec![0.0; t.exps.len()];
        for (i, e) in t.exps.iter().enumerate() {
            let mut fact = 1.0;
            for a in 0..dim {
                for k in 2..=e[a] as u64 {
                    fact *= k as f64;
                }
            }
            c[i] = partial(e) / fact;
        }
        Taylor { dim: dim as u8, order: order as u8, c }
    }

    fn check_compat(&self, rhs: &Taylor) {
        assert!(
            self.dim == rhs.dim && self.order == rhs.order,
            "Taylor operands disagree: dim {}/{} order {}/{}",
            self.dim,
            rhs.dim,
            self.order,
            rhs.order
        );
    }

    pub fn add(&self, rhs: &Taylor) -> Taylor {
        self.check_compat(rhs);
        let mut out = self.clone();
        for (a, b) in out.c.iter_mut().zip(&rhs.c) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, rhs: &Taylor) -> Taylor {
        self.check_compat(rhs);
        let mut out = self.clone();
        for (a, b) in out.c.iter_mut().zip(&rhs.c) {
            *a -= b;
        }
        out
    }

    pub fn neg(&self) -> Taylor {
        let mut out = self.clone();
        for a in out.c.iter_mut() {
            *a = -*a;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Taylor {
        let mut out = self.clone();
        for a in out.c.iter_mut() {
            *a *= s;
        }
        out
    }

    /// In-place addition of a constant to the value term.
    pub fn add_assign_const(&mut self, v: f64) {
        self.c[0] += v;
    }

    pub fn add_scaled(&mut self, rhs: &Taylor, s: f64) {
        self.check_compat(rhs);
        for (a, b) in self.c.iter_mut().zip(&rhs.c) {
            *a += s * b;
        }
    }

    pub fn mul(&self, rhs: &Taylor) -> Taylor {
        self.check_compat(rhs);
        let t = self.t();
        let mut c = vec![0.0; self.c.len()];
        for &(ia, ib, it) in &t.mul {
            c[it as usize] += self.c[ia as usize] * rhs.c[ib as usize];
        }
        Taylor { dim: self.dim, order: self.order, c }
    }

    /// ∂_axis as a new expansion of one lower order.
    pub fn derive(&self, axis: usize) -> Taylor {
        assert!(self.order >= 1, "cannot differentiate an order-0 expansion");
        assert!(axis < self.dim());
        let lower = tables(self.dim(), self.order() - 1);
        let mut c = vec![0.0; lower.exps.len()];
        for &(src, tgt_same_order, factor) in &self.t().der[axis] {
            // positions agree between orders because graded-lex prefixes nest
            let _ = tgt_same_order;
            let mut e = self.t().exps[src as usize];
            e[axis] -= 1;
            let p = lower.pos[pack(&e)];
            c[p as usize] = self.c[src as usize] * factor;
        }
        Taylor { dim: self.dim, order: self.order - 1, c }
    }

    /// Drop terms above `new_order` (graded ordering makes this a prefix).
    pub fn truncate(&self, new_order: usize) -> Taylor {
        assert!(new_order <= self.order());
        let n = tables(self.dim(), new_order).exps.len();
        Taylor {
            dim: self.dim,
            order: new_order as u8,
            c: self.c[..n].to_vec(),
        }
    }

    /// Compose an analytic function: caller supplies f^{(k)} at the base value.
    /// Computes Σ_k f^{(k)}(c)/k! · w^k with w = self − c (nilpotent).
    fn analytic(&self, derivs: impl Fn(usize) -> f64) -> Taylor {
        let n = self.order();
        let mut w = self.clone();
        w.c[0] = 0.0;
        let mut fact = 1.0;
        let mut s = Vec::with_capacity(n + 1);
        for k in 0..=n {
            if k > 0 {
                fact *= k as f64;
            }
            s.push(derivs(k) / fact);
        }
        let mut out = Self::constant(self.dim(), n, s[n]);
        for k in (0..n).rev() {
            out = out.mul(&w);
            out.c[0] += s[k];
        }
        out
    }

    /// Public composition hook: `derivs(k)` must return f^{(k)} evaluated at
    /// `self.value()`. Used for piecewise profiles whose derivative sequence
    /// is known in closed form at the base point.
    pub fn compose(&self, derivs: impl Fn(usize) -> f64) -> Taylor {
        self.analytic(derivs)
    }

    pub fn recip(&self) -> Taylor {
        let c = self.value();
        assert!(c != 0.0, "reciprocal of expansion with zero value");
        self.analytic(|k| {
            // d^k/dx^k x^{-1} = (−1)^k k! x^{-(k+1)}
            let mut fact = 1.0;
            for j in 2..=k as u64 {
                fact *= j as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * fact / c.powi(k as i32 + 1)
        })
    }

    pub fn div(&self, rhs: &Taylor) -> Taylor {
        self.mul(&rhs.recip())
    }

    pub fn sqrt(&self) -> Taylor {
        let c = self.value();
        assert!(c > 0.0, "sqrt of expansion with non-positive value");
        self.analytic(|k| {
            let mut d = 1.0;
            let mut p = 0.5;
            for _ in 0..k {
                d *= p;
                p -= 1.0;
            }
            d * c.powf(0.5 - k as f64)
        })
    }

    pub fn powf(&self, e: f64) -> Taylor {
        let c = self.value();
        assert!(c > 0.0, "powf of expansion with non-positive value");
        self.analytic(|k| {
            let mut d = 1.0;
            let mut p = e;
            for _ in 0..k {
                d *= p;
                p -= 1.0;
            }
            d * c.powf(e - k as f64)
        })
    }

    pub fn powi(&self, e: u32) -> Taylor {
        let mut out = Taylor::constant(self.dim(), self.order(), 1.0);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    pub fn exp(&self) -> Taylor {
        let ec = self.value().exp();
        self.analytic(|_| ec)
    }

    pub fn ln(&self) -> Taylor {
        let c = self.value();
        assert!(c > 0.0, "ln of expansion with non-positive value");
        self.analytic(|k| {
            if k == 0 {
                c.ln()
            } else {
                let mut fact = 1.0;
                for j in 2..k as u64 {
                    fact *= j as f64;
                }
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * fact / c.powi(k as i32)
            }
        })
    }

    pub fn sin(&self) -> Taylor {
        let c = self.value();
        self.analytic(|k| match k % 4 {
            0 => c.sin(),
            1 => c.cos(),
            2 => -c.sin(),
            _ => -c.cos(),
        })
    }

    pub fn cos(&self) -> Taylor {
        let c = self.value();
        self.analytic(|k| match k % 4 {
            0 => c.cos(),
            1 => -c.sin(),
            2 => -c.cos(),
            _ => c.sin(),
        })
    }

    /// Evaluate a polynomial with f64 coefficients (ascending powers) on self.
    pub fn poly(&self, coeffs: &[f64]) -> Taylor {
        let mut out = Taylor::constant(self.dim(), self.order(), 0.0);
        for &ck in coeffs.iter().rev() {
            out = out.mul(self);
            out.c[0] += ck;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn product_rule_partials() {
        // f = sin(x1) * exp(x2), partials known in closed form
        let x1 = Taylor::variable(4, 4, 0, 0.3);
        let x2 = Taylor::variable(4, 4, 1, -0.2);
        let f = x1.sin().mul(&x2.exp());
        let expect = |a: u32, b: u32| {
            let s = match a % 4 {
                0 => (0.3f64).sin(),
                1 => (0.3f64).cos(),
                2 => -(0.3f64).sin(),
                _ => -(0.3f64).cos(),
            };
            let _ = b;
            s * (-0.2f64).exp()
        };
        for (a, b) in [(0u8, 0u8), (1, 0), (0, 1), (2, 1), (1, 2), (3, 1), (2, 2)] {
            let got = f.partial(&[a, b, 0, 0]);
            assert!(
                close(got, expect(a as u32, b as u32), 1e-13),
                "partial {a},{b}: {got}"
            );
        }
    }

    #[test]
    fn reciprocal_and_sqrt_roundtrip() {
        let x = Taylor::variable(4, 5, 2, 0.7);
        let f = x.sin().add(&Taylor::constant(4, 5, 2.0));
        let r = f.mul(&f.recip());
        for (i, v) in r.c.iter().enumerate() {
            let want = if i == 0 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-13);
        }
        let s = f.sqrt();
        let back = s.mul(&s);
        for (a, b) in back.c.iter().zip(&f.c) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn derive_matches_coefficient_shift() {
        let x1 = Taylor::variable(3, 4, 0, 0.4);
        let x3 = Taylor::variable(3, 4, 2, 1.1);
        let f = x1.mul(&x1).mul(&x3.cos());
        let d = f.derive(0);
        // ∂_1 f = 2 x1 cos(x3)
        assert!(close(d.value(), 2.0 * 0.4 * (1.1f64).cos(), 1e-14));
        assert!(close(
            d.partial(&[1, 0, 0, 0]),
            2.0 * (1.1f64).cos(),
            1e-14
        ));
        assert!(close(
            d.partial(&[0, 0, 1, 0]),
            -2.0 * 0.4 * (1.1f64).sin(),
            1e-14
        ));
    }

    #[test]
    fn powf_consistent_with_mul() {
        let x = Taylor::variable(2, 6, 1, 0.25);
        let f = x.exp().add(&Taylor::constant(2, 6, 0.5));
        let p2 = f.powf(2.0);
        let m2 = f.mul(&f);
        for (a, b) in p2.c.iter().zip(&m2.c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn truncate_is_prefix() {
        let x = Taylor::variable(4, 6, 3, 0.9);
        let f = x.sin().mul(&x.cos());
        let t = f.truncate(3);
        assert_eq!(t.order(), 3);
        for (i, v) in t.c.iter().enumerate() {
            assert_eq!(*v, f.c[i]);
        }
    }

    #[test]
    fn ln_exp_inverse() {
        let x = Taylor::variable(1, 6, 0, 0.2);
        let f = x.cos().add(&Taylor::constant(1, 6, 1.5));
        let g = f.ln().exp();
        for (a, b) in g.c.iter().zip(&f.c) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
