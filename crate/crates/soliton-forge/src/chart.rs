//! Coordinate charts and the finite-difference curvature oracle. Everything
//! here treats the metric as a black-box evaluator, so results are
//! independent of the algebraic frame computations in [`crate::frame`] and
//! can certify them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};
use crate::frame::{CurvatureReport, Tensor4};
use crate::numerics;

pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type EndoFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Smooth metric in a single coordinate chart. Positive definiteness is
/// checked at every evaluation, so stencil walks cannot silently leave the
/// chart domain.
#[derive(Clone)]
pub struct ChartMetric {
    pub dim: usize,
    metric_at: MetricFn,
    pub scalar_field_at: Option<ScalarFn>,
}

impl ChartMetric {
    pub fn new(dim: usize, metric_at: MetricFn) -> Self {
        Self {
            dim,
            metric_at,
            scalar_field_at: None,
        }
    }

    pub fn with_scalar_field(mut self, f: ScalarFn) -> Self {
        self.scalar_field_at = Some(f);
        self
    }

    /// Metric matrix at `x`; errors when the evaluator leaves the cone of
    /// symmetric positive-definite matrices.
    pub fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let g = (self.metric_at)(x);
        if g.nrows() != self.dim || g.ncols() != self.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                got: g.nrows(),
            });
        }
        let sym = (&g - g.transpose()).abs().max();
        if sym > 1e-10 {
            return Err(GeomError::DegenerateChart(x.to_vec()));
        }
        if nalgebra::Cholesky::new(g.clone()).is_none() {
            return Err(GeomError::DegenerateChart(x.to_vec()));
        }
        Ok(g)
    }

    pub fn metric_inverse(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.metric(x)?
            .try_inverse()
            .ok_or_else(|| GeomError::DegenerateChart(x.to_vec()))
    }

    pub fn inner(&self, x: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok((u.transpose() * self.metric(x)? * v)[(0, 0)])
    }
}

fn shifted(x: &[f64], dir: usize, delta: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[dir] += delta;
    y
}

/// Fourth-order partial derivative of a matrix-valued evaluator.
fn d_matrix(
    eval: &dyn Fn(&[f64]) -> Result<DMatrix<f64>>,
    x: &[f64],
    dir: usize,
    h: f64,
) -> Result<DMatrix<f64>> {
    let p2 = eval(&shifted(x, dir, 2.0 * h))?;
    let p1 = eval(&shifted(x, dir, h))?;
    let m1 = eval(&shifted(x, dir, -h))?;
    let m2 = eval(&shifted(x, dir, -2.0 * h))?;
    Ok((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h))
}

/// Christoffel symbols Gamma^k_{ij} at `x` by fourth-order differencing of
/// the metric.
pub fn christoffel(chart: &ChartMetric, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let d = chart.dim;
    let g_inv = chart.metric_inverse(x)?;
    let eval = |y: &[f64]| chart.metric(y);
    let mut dg = Vec::with_capacity(d);
    for dir in 0..d {
        dg.push(d_matrix(&eval, x, dir, h)?);
    }
    let mut gamma = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += 0.5 * g_inv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gamma[(k * d + i) * d + j] = s;
            }
        }
    }
    Ok(gamma)
}

/// Curvature at a chart point by nested fourth-order stencils:
/// R^l_{ijk} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik} +
/// Gamma^l_{im} Gamma^m_{jk} - Gamma^l_{jm} Gamma^m_{ik},
/// lowered with g at the point. This is the oracle the frame and tube
/// computations are certified against.
#[allow(clippy::needless_range_loop)]
pub fn fd_curvature_oracle(chart: &ChartMetric, x: &[f64], h: f64) -> Result<CurvatureReport> {
    let d = chart.dim;
    let g = chart.metric(x)?;
    let gamma0 = christoffel(chart, x, h)?;
    let gam = |v: &Vec<f64>, k: usize, i: usize, j: usize| v[(k * d + i) * d + j];

    // d_dir Gamma at x, fourth order; each sample re-derives the metric.
    let mut dgamma: Vec<Vec<f64>> = Vec::with_capacity(d);
    for dir in 0..d {
        let p2 = christoffel(chart, &shifted(x, dir, 2.0 * h), h)?;
        let p1 = christoffel(chart, &shifted(x, dir, h), h)?;
        let m1 = christoffel(chart, &shifted(x, dir, -h), h)?;
        let m2 = christoffel(chart, &shifted(x, dir, -2.0 * h), h)?;
        let mut out = vec![0.0; d * d * d];
        for n in 0..d * d * d {
            out[n] = (-p2[n] + 8.0 * p1[n] - 8.0 * m1[n] + m2[n]) / (12.0 * h);
        }
        dgamma.push(out);
    }

    let mut riemann = Tensor4::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let mut upper = vec![0.0; d];
                for l in 0..d {
                    let mut s = gam(&dgamma[i], l, j, k) - gam(&dgamma[j], l, i, k);
                    for m in 0..d {
                        s += gam(&gamma0, l, i, m) * gam(&gamma0, m, j, k)
                            - gam(&gamma0, l, j, m) * gam(&gamma0, m, i, k);
                    }
                    upper[l] = s;
                }
                for l in 0..d {
                    let mut lowered = 0.0;
                    for m in 0..d {
                        lowered += g[(l, m)] * upper[m];
                    }
                    riemann.set(i, j, k, l, lowered);
                }
            }
        }
    }
    CurvatureReport::from_riemann(riemann, &g)
}

/// Coordinate partials of a scalar field, fourth order.
pub fn grad_coords(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DVector<f64> {
    let d = x.len();
    DVector::from_fn(d, |i, _| {
        numerics::deriv1(|s| f(&shifted(x, i, s - x[i])), x[i], h)
    })
}

/// Second coordinate partials d_i d_j f, fourth order (nested for i != j).
pub fn hess_coords(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        out[(i, i)] = numerics::deriv2(|s| f(&shifted(x, i, s - x[i])), x[i], h);
        for j in 0..i {
            let v = numerics::deriv1(
                |a| {
                    let xa = shifted(x, i, a - x[i]);
                    numerics::deriv1(|b| f(&shifted(&xa, j, b - xa[j])), xa[j], h)
                },
                x[i],
                h,
            );
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Covariant Hessian of a scalar field: Hess_ij = d_i d_j f - Gamma^k_{ij} d_k f.
pub fn hessian(
    chart: &ChartMetric,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    let d = chart.dim;
    let grad = grad_coords(f, x, h);
    let hc = hess_coords(f, x, h);
    let gamma = christoffel(chart, x, h)?;
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut s = hc[(i, j)];
            for k in 0..d {
                s -= gamma[(k * d + i) * d + j] * grad[k];
            }
            out[(i, j)] = s;
        }
    }
    Ok(out)
}

/// Laplace-Beltrami of a scalar field.
pub fn laplacian(chart: &ChartMetric, f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<f64> {
    let g_inv = chart.metric_inverse(x)?;
    let hess = hessian(chart, f, x, h)?;
    Ok((g_inv * hess).trace())
}

/// Metric gradient (index raised): grad f = g^{ij} d_j f.
pub fn gradient_vec(
    chart: &ChartMetric,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Result<DVector<f64>> {
    Ok(chart.metric_inverse(x)? * grad_coords(f, x, h))
}

/// Lie derivative of the metric along a vector field W (components as a
/// coordinate evaluator): (L_W g)_ij = W^k d_k g_ij + g_kj d_i W^k + g_ik d_j W^k.
pub fn lie_derivative_metric(
    chart: &ChartMetric,
    w: &dyn Fn(&[f64]) -> Result<DVector<f64>>,
    x: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    let d = chart.dim;
    let g = chart.metric(x)?;
    let w0 = w(x)?;
    let eval_g = |y: &[f64]| chart.metric(y);
    let mut out = DMatrix::zeros(d, d);
    // d_i W as a matrix: dw[(k, i)] = d_i W^k.
    let mut dw = DMatrix::zeros(d, d);
    for i in 0..d {
        let p2 = w(&shifted(x, i, 2.0 * h))?;
        let p1 = w(&shifted(x, i, h))?;
        let m1 = w(&shifted(x, i, -h))?;
        let m2 = w(&shifted(x, i, -2.0 * h))?;
        let col = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
        dw.set_column(i, &col);
    }
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += g[(k, j)] * dw[(k, i)] + g[(i, k)] * dw[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    // W^k d_k g_ij term.
    for k in 0..d {
        if w0[k] == 0.0 {
            continue;
        }
        let dgk = d_matrix(&eval_g, x, k, h)?;
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] += w0[k] * dgk[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Scalar curvature as a field, backed by the oracle. The inner oracle step
/// is chosen independently of the outer differentiation step callers use.
pub fn scalar_curvature_field(chart: &ChartMetric, h_inner: f64) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x: &[f64]| {
        fd_curvature_oracle(chart, x, h_inner)
            .map(|r| r.scalar)
            .unwrap_or(f64::NAN)
    }
}

/// Flat chart in any dimension.
pub fn euclidean_chart(dim: usize) -> ChartMetric {
    ChartMetric::new(dim, Arc::new(move |_: &[f64]| DMatrix::identity(dim, dim)))
}

/// Stereographic chart of the round sphere of the given radius:
/// g = 4 r^4 / (r^2 + |x|^2)^2 * delta.
pub fn sphere_stereographic_chart(dim: usize, radius: f64) -> ChartMetric {
    ChartMetric::new(
        dim,
        Arc::new(move |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let conf = 4.0 * radius.powi(4) / (radius * radius + r2).powi(2);
            DMatrix::identity(dim, dim) * conf
        }),
    )
}
