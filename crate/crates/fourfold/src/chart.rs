//! Coordinate charts and quadrature.
//!
//! Two chart shapes cover everything in scope: a periodic box (flat torus
//! coordinates, uniform weights, exact for smooth periodic integrands) and
//! a punctured polar ball in Cartesian chart coordinates (Gauss–Legendre in
//! the radius, exactly uniform angular sampling of S³).
//!
//! A grid separates the abstract measure weight from the coordinate
//! Jacobian (ρ³ on the ball, 1 on boxes); integration multiplies
//! value · √det g · jacobian · weight per node and reduces with compensated
//! summation in fixed node order, so results do not depend on thread count.

use crate::error::GeomError;

pub type ChartPoint = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    PeriodicBox,
    PolarBall,
}

#[derive(Clone, Debug)]
pub struct ChartSpec {
    pub topology: Topology,
    /// Box side lengths (one per axis), or `[radius]` for a ball.
    pub extents: Vec<f64>,
    pub resolution: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ChartGrid {
    pub dim: usize,
    pub topology: Topology,
    pub extents: Vec<f64>,
    pub resolution: Vec<usize>,
    pub center: ChartPoint,
    pub nodes: Vec<ChartPoint>,
    /// Abstract measure weight per node (dρ dS on the ball, dx on boxes).
    pub weights: Vec<f64>,
    /// Coordinate Jacobian per node (ρ³ on the ball, 1 on boxes).
    pub jacobian: Vec<f64>,
    /// Radial distance from the center per node (balls only; 0 on boxes).
    pub rho: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Deterministic; converges to machine precision.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    xs.reverse();
    ws.reverse();
    (xs, ws)
}

/// (P_n(x), P_n'(x)) via the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Compensated (Neumaier) summation in the iterator's order.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn make_chart(spec: &ChartSpec) -> Result<ChartGrid, GeomError> {
    match spec.topology {
        Topology::PeriodicBox => make_box(spec),
        Topology::PolarBall => make_ball(spec, [0.0; 4]),
    }
}

/// Polar ball with an explicit center (used when placing deformation balls).
pub fn make_ball_at(spec: &ChartSpec, center: ChartPoint) -> Result<ChartGrid, GeomError> {
    assert_eq!(spec.topology, Topology::PolarBall);
    make_ball(spec, center)
}

/// Polar ball whose radial quadrature is split into panels at the given
/// break fractions of the radius, with a Gauss-Legendre rule of order
/// `per_panel` on each panel. Radially piecewise integrands (profile knees,
/// narrow crossover shells) integrate to quadrature accuracy only when the
/// breaks isolate their non-smooth or rapidly varying shells; a single
/// global rule stalls there no matter its order. The angular rule is
/// Gauss–Legendre in s = sin²η and trapezoid in the two periodic angles,
/// so smooth non-radial integrands converge spectrally as well.
pub fn make_ball_paneled(
    center: ChartPoint,
    radius: f64,
    breaks: &[f64],
    per_panel: usize,
    angular: [usize; 3],
) -> Result<ChartGrid, GeomError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GeomError::InvalidChartSpec(format!(
            "non-positive radius {radius}"
        )));
    }
    if per_panel < 4 {
        return Err(GeomError::InvalidChartSpec(format!(
            "panel order {per_panel} < 4"
        )));
    }
    for &n in &angular {
        if n < 4 {
            return Err(GeomError::InvalidChartSpec(format!(
                "angular resolution {n} < 4"
            )));
        }
    }
    let mut edges = vec![0.0];
    for &b in breaks {
        if !(b > 0.0 && b < 1.0) {
            return Err(GeomError::InvalidChartSpec(format!(
                "panel break {b} outside (0, 1)"
            )));
        }
        edges.push(b);
    }
    edges.push(1.0);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let (gx, gw) = gauss_legendre(per_panel);
    let (sx, sw) = gauss_legendre(angular[0]);
    let two_pi = 2.0 * std::f64::consts::PI;
    let (n_s, n_x1, n_x2) = (angular[0], angular[1], angular[2]);
    // dΩ₃ = ½ ds dξ₁ dξ₂ on s ∈ [0,1], ξ ∈ [0,2π): Gauss–Legendre in s
    // (spectral for smooth angular content), trapezoid in the periodic ξ.
    let xi_w = (two_pi / n_x1 as f64) * (two_pi / n_x2 as f64);
    let n_rho = (edges.len() - 1) * per_panel;
    let count = n_rho * n_s * n_x1 * n_x2;
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    let mut jac = Vec::with_capacity(count);
    let mut rho_v = Vec::with_capacity(count);
    for panel in edges.windows(2) {
        let (lo, hi) = (radius * panel[0], radius * panel[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for q in 0..per_panel {
            let rho = mid + half * gx[q];
            let wr = half * gw[q];
            for is in 0..n_s {
                let s = 0.5 * (1.0 + sx[is]);
                let ang_w = 0.5 * (0.5 * sw[is]) * xi_w;
                let sin_eta = s.sqrt();
                let cos_eta = (1.0 - s).sqrt();
                for i1 in 0..n_x1 {
                    let x1 = two_pi * (i1 as f64 + 0.5) / n_x1 as f64;
                    for i2 in 0..n_x2 {
                        let x2 = two_pi * (i2 as f64 + 0.5) / n_x2 as f64;
                        let w = [
                            x1.cos() * sin_eta,
                            x1.sin() * sin_eta,
                            x2.cos() * cos_eta,
                            x2.sin() * cos_eta,
                        ];
                        let mut p = center;
                        for a in 0..4 {
                            p[a] += rho * w[a];
                        }
                        nodes.push(p);
                        weights.push(wr * ang_w);
                        jac.push(rho * rho * rho);
                        rho_v.push(rho);
                    }
                }
            }
        }
    }
    Ok(ChartGrid {
        dim: 4,
        topology: Topology::PolarBall,
        extents: vec![radius],
        resolution: vec![n_rho, n_s, n_x1, n_x2],
        center,
        nodes,
        weights,
        jacobian: jac,
        rho: rho_v,
    })
}

fn validate(spec: &ChartSpec, naxes: usize) -> Result<(), GeomError> {
    if spec.resolution.len() != naxes {
        return Err(GeomError::InvalidChartSpec(format!(
            "expected {naxes} resolution entries, got {}",
            spec.resolution.len()
        )));
    }
    for &n in &spec.resolution {
        if n < 4 {
            return Err(GeomError::InvalidChartSpec(format!(
                "resolution {n} < 4"
            )));
        }
    }
    for &e in &spec.extents {
        if !(e > 0.0) || !e.is_finite() {
            return Err(GeomError::InvalidChartSpec(format!("non-positive extent {e}")));
        }
    }
    Ok(())
}

fn make_box(spec: &ChartSpec) -> Result<ChartGrid, GeomError> {
    let dim = spec.extents.len();
    if !(1..=4).contains(&dim) {
        return Err(GeomError::InvalidChartSpec(format!("box dimension {dim}")));
    }
    validate(spec, dim)?;
    let res = &spec.resolution;
    let count: usize = res.iter().product();
    let mut nodes = Vec::with_capacity(count);
    let hw: f64 = (0..dim).map(|i| spec.extents[i] / res[i] as f64).product();
    let mut idx = vec![0usize; dim];
    loop {
        let mut p = [0.0; 4];
        for a in 0..dim {
            p[a] = spec.extents[a] * idx[a] as f64 / res[a] as f64;
        }
        nodes.push(p);
        // odometer increment, last axis fastest
        let mut a = dim;
        loop {
            if a == 0 {
                break;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < res[a] {
                break;
            }
            idx[a] = 0;
            if a == 0 {
                a = usize::MAX;
                break;
            }
        }
        if a == usize::MAX {
            break;
        }
    }
    Ok(ChartGrid {
        dim,
        topology: Topology::PeriodicBox,
        extents: spec.extents.clone(),
        resolution: res.clone(),
        center: [0.0; 4],
        weights: vec![hw; nodes.len()],
        jacobian: vec![1.0; nodes.len()],
        rho: vec![0.0; nodes.len()],
        nodes,
    })
}

/// Ball nodes in Cartesian chart coordinates x = center + ρ·ω(s, ξ₁, ξ₂),
/// with ω = (cos ξ₁ sin η, sin ξ₁ sin η, cos ξ₂ cos η, sin ξ₂ cos η) and
/// s = sin²η. The S³ area element is ½ ds dξ₁ dξ₂, so a midpoint grid in
/// (s, ξ₁, ξ₂) gives exactly uniform angular weights summing to 2π².
fn make_ball(spec: &ChartSpec, center: ChartPoint) -> Result<ChartGrid, GeomError> {
    if spec.extents.len() != 1 {
        return Err(GeomError::InvalidChartSpec(
            "ball takes a single extent (the radius)".into(),
        ));
    }
    validate(spec, 4)?;
    let r = spec.extents[0];
    let (n_rho, n_s, n_x1, n_x2) = (
        spec.resolution[0],
        spec.resolution[1],
        spec.resolution[2],
        spec.resolution[3],
    );
    let (gx, gw) = gauss_legendre(n_rho);
    let two_pi = 2.0 * std::f64::consts::PI;
    let ang_w = 0.5 * (1.0 / n_s as f64) * (two_pi / n_x1 as f64) * (two_pi / n_x2 as f64);
    let count = n_rho * n_s * n_x1 * n_x2;
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    let mut jac = Vec::with_capacity(count);
    let mut rho_v = Vec::with_capacity(count);
    for q in 0..n_rho {
        let rho = 0.5 * r * (gx[q] + 1.0);
        let wr = 0.5 * r * gw[q];
        for is in 0..n_s {
            let s = (is as f64 + 0.5) / n_s as f64;
            let sin_eta = s.sqrt();
            let cos_eta = (1.0 - s).sqrt();
            for i1 in 0..n_x1 {
                let x1 = two_pi * (i1 as f64 + 0.5) / n_x1 as f64;
                for i2 in 0..n_x2 {
                    let x2 = two_pi * (i2 as f64 + 0.5) / n_x2 as f64;
                    let w = [
                        x1.cos() * sin_eta,
                        x1.sin() * sin_eta,
                        x2.cos() * cos_eta,
                        x2.sin() * cos_eta,
                    ];
                    let mut p = center;
                    for a in 0..4 {
                        p[a] += rho * w[a];
                    }
                    nodes.push(p);
                    weights.push(wr * ang_w);
                    jac.push(rho * rho * rho);
                    rho_v.push(rho);
                }
            }
        }
    }
    Ok(ChartGrid {
        dim: 4,
        topology: Topology::PolarBall,
        extents: spec.extents.clone(),
        resolution: spec.resolution.clone(),
        center,
        nodes,
        weights,
        jacobian: jac,
        rho: rho_v,
    })
}

impl ChartGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ value(i) · jacobian(i) · weight(i), compensated, fixed node order.
    pub fn quad_sum(&self, value: impl Fn(usize) -> f64) -> f64 {
        neumaier_sum((0..self.len()).map(|i| value(i) * self.jacobian[i] * self.weights[i]))
    }

    /// Wrap a point into the fundamental domain (periodic boxes only).
    pub fn wrap(&self, p: ChartPoint) -> ChartPoint {
        match self.topology {
            Topology::PeriodicBox => {
                let mut q = p;
                for a in 0..self.dim {
                    let l = self.extents[a];
                    q[a] = q[a].rem_euclid(l);
                }
                q
            }
            Topology::PolarBall => p,
        }
    }

    /// Whether a point lies strictly inside the chart domain.
    pub fn contains(&self, p: ChartPoint) -> bool {
        match self.topology {
            Topology::PeriodicBox => true,
            Topology::PolarBall => {
                let mut d2 = 0.0;
                for a in 0..4 {
                    let d = p[a] - self.center[a];
                    d2 += d * d;
                }
                d2 < self.extents[0] * self.extents[0]
            }
        }
    }

    /// Grid spacing per axis (boxes).
    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.resolution[axis] as f64
    }

    /// Convert a box node's flat index to its per-axis indices.
    pub fn box_index(&self, flat: usize) -> [usize; 4] {
        let mut out = [0usize; 4];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            out[a] = rem % self.resolution[a];
            rem /= self.resolution[a];
        }
        out
    }

    /// Flat index from per-axis indices, wrapping periodically.
    pub fn box_flat(&self, idx: [isize; 4]) -> usize {
        let mut flat = 0usize;
        for a in 0..self.dim {
            let n = self.resolution[a] as isize;
            let i = idx[a].rem_euclid(n) as usize;
            flat = flat * self.resolution[a] + i;
        }
        flat
    }
}
