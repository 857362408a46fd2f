//! Shared numerical kit: fourth-order difference stencils, Richardson
//! extrapolation, adaptive Simpson quadrature, an embedded Runge-Kutta
//! integrator with cubic dense output, and cubic interpolants.

use crate::error::{GeomError, Result};

/// Default step for fourth-order difference stencils.
pub const FD_STEP: f64 = 1e-3;
/// Relative error target for adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-12;
/// Local error target for the adaptive ODE integrator.
pub const ODE_TOL: f64 = 1e-10;

/// Worker count for grid-parallel evaluations: SOLITON_FORGE_THREADS when
/// set to a positive integer, otherwise the machine's parallelism capped at 8.
pub fn thread_count() -> usize {
    std::env::var("SOLITON_FORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
                .min(8)
        })
}

/// Fourth-order central first derivative.
pub fn deriv1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Fourth-order central second derivative.
pub fn deriv2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

/// One Richardson sweep on the fourth-order stencil; error drops to O(h^6).
pub fn deriv1_richardson(f: impl Fn(f64) -> f64 + Copy, x: f64, h: f64) -> f64 {
    let coarse = deriv1(f, x, h);
    let fine = deriv1(f, x, h / 2.0);
    (16.0 * fine - coarse) / 15.0
}

pub fn deriv2_richardson(f: impl Fn(f64) -> f64 + Copy, x: f64, h: f64) -> f64 {
    let coarse = deriv2(f, x, h);
    let fine = deriv2(f, x, h / 2.0);
    (16.0 * fine - coarse) / 15.0
}

/// Polynomial extrapolation of f(h) to h = 0 through the given sample steps
/// (Neville's scheme). Used for endpoint limits of warped profiles.
pub fn extrapolate_to_zero(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len();
    let mut p: Vec<f64> = samples.iter().map(|&(_, v)| v).collect();
    for level in 1..n {
        for i in 0..n - level {
            let (hi, _) = samples[i];
            let (hj, _) = samples[i + level];
            p[i] = (hj * p[i] - hi * p[i + 1]) / (hj - hi);
        }
    }
    p[0]
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (left, flm) = simpson(f, a, fa, m, fm);
    let (right, frm) = simpson(f, m, fm, b, fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(GeomError::SolverFailure(format!(
            "quadrature failed to converge on [{a}, {b}]"
        )));
    }
    Ok(
        simpson_rec(f, a, fa, m, fm, left, flm, tol / 2.0, depth - 1)?
            + simpson_rec(f, m, fm, b, fb, right, frm, tol / 2.0, depth - 1)?,
    )
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], by
/// Newton iteration on the Legendre three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z -= p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        xs[i] = -z;
        xs[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

/// Fixed 20-point Gauss-Legendre quadrature over [a, b]. Unlike the
/// adaptive rules, the result is an analytic function of the endpoints, so
/// accumulated integrals built from it can be differentiated numerically
/// without subdivision noise.
pub fn gauss_quad20(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    let (xs, ws) = RULE.get_or_init(|| gauss_legendre(20));
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in xs.iter().zip(ws.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, fm) = simpson(&f, a, fa, b, fb);
    simpson_rec(&f, a, fa, b, fb, whole, fm, tol.max(1e-15), 48)
}

/// Quadrature of g on [a, b] where g has an integrable 1/sqrt singularity at
/// `a` (g behaves like c/sqrt(x - a)). Substituting x = a + v^2 regularizes;
/// the clamp keeps the endpoint sample off the singular point itself.
pub fn simpson_sqrt_left(g: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let w = (b - a).max(0.0).sqrt();
    let eps = w * 1e-9;
    adaptive_simpson(
        |v| {
            let vv = v.max(eps);
            2.0 * vv * g(a + vv * vv)
        },
        0.0,
        w,
        tol,
    )
}

/// Mirror of [`simpson_sqrt_left`] for a singularity at the right endpoint.
pub fn simpson_sqrt_right(g: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let w = (b - a).max(0.0).sqrt();
    let eps = w * 1e-9;
    adaptive_simpson(
        |v| {
            let vv = v.max(eps);
            2.0 * vv * g(b - vv * vv)
        },
        0.0,
        w,
        tol,
    )
}

/// One accepted integrator step: endpoint states and slopes, enough for
/// cubic Hermite reconstruction anywhere inside.
#[derive(Debug, Clone, Copy)]
pub struct DenseSegment {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub dy0: f64,
    pub dy1: f64,
}

impl DenseSegment {
    pub fn eval(&self, x: f64) -> f64 {
        let h = self.x1 - self.x0;
        let t = (x - self.x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y0
            + (t3 - 2.0 * t2 + t) * h * self.dy0
            + (-2.0 * t3 + 3.0 * t2) * self.y1
            + (t3 - t2) * h * self.dy1
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        let h = self.x1 - self.x0;
        let t = (x - self.x0) / h;
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * self.y0
            + (3.0 * t2 - 4.0 * t + 1.0) * h * self.dy0
            + (-6.0 * t2 + 6.0 * t) * self.y1
            + (3.0 * t2 - 2.0 * t) * h * self.dy1)
            / h
    }
}

/// Piecewise-cubic dense output of an ODE solve, ordered by x.
#[derive(Debug, Clone, Default)]
pub struct DenseOutput {
    pub segments: Vec<DenseSegment>,
}

impl DenseOutput {
    pub fn x_end(&self) -> f64 {
        self.segments.last().map(|s| s.x1).unwrap_or(f64::NAN)
    }

    fn locate(&self, x: f64) -> &DenseSegment {
        let mut lo = 0usize;
        let mut hi = self.segments.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.segments[mid].x1 < x {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        &self.segments[lo]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.locate(x).eval(x)
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        self.locate(x).eval_deriv(x)
    }
}

/// Outcome of an adaptive solve: dense trajectory plus, when the stop event
/// fired, the bracketing interval of the first root of the event function.
pub struct OdeSolution {
    pub dense: DenseOutput,
    pub event_bracket: Option<(f64, f64)>,
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive embedded Runge-Kutta solve of a scalar ODE y' = f(x, y) from x0
/// to x1 (x1 > x0). When `stop_when_nonpositive` is set, integration halts at
/// the first y <= 0 crossing; the crossing is bisected on the dense output to
/// a bracket narrower than `bracket_width`. The dense output interpolates each
/// accepted step with a cubic, so its mid-step error is O(h^4) regardless of
/// `tol`; `max_step` bounds that error (pass f64::INFINITY to leave it free).
#[allow(clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]
pub fn solve_ode(
    f: impl Fn(f64, f64) -> f64,
    x0: f64,
    y0: f64,
    x1: f64,
    tol: f64,
    max_step: f64,
    stop_when_nonpositive: bool,
    bracket_width: f64,
) -> Result<OdeSolution> {
    let span = x1 - x0;
    if span <= 0.0 {
        return Err(GeomError::InvalidProblem(
            "integration interval has nonpositive length".into(),
        ));
    }
    if !(max_step > 0.0) {
        return Err(GeomError::InvalidProblem(
            "maximum step size must be positive".into(),
        ));
    }
    let mut x = x0;
    let mut y = y0;
    let mut dy = f(x, y);
    let mut h = (span / 100.0).clamp(1e-8, 1e-2).min(max_step);
    let mut dense = DenseOutput::default();
    let mut event_bracket = None;
    let max_steps = 2_000_000usize;

    for _ in 0..max_steps {
        if x >= x1 {
            break;
        }
        h = h.min(x1 - x);
        let mut k = [0.0f64; 7];
        k[0] = dy;
        for stage in 0..6 {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(stage + 1) {
                acc += DP_A[stage][j] * kj;
            }
            k[stage + 1] = f(x + DP_C[stage] * h, y + h * acc);
        }
        // 5th-order solution shares the last row of A; k[6] is FSAL.
        let y_new = y + h
            * (DP_A[5][0] * k[0]
                + DP_A[5][2] * k[2]
                + DP_A[5][3] * k[3]
                + DP_A[5][4] * k[4]
                + DP_A[5][5] * k[5]);
        let mut err = 0.0;
        for (ki, ei) in k.iter().zip(DP_E.iter()) {
            err += ei * ki;
        }
        let scale = tol * (1.0 + y.abs().max(y_new.abs()));
        let err_norm = (h * err).abs() / scale;

        if err_norm <= 1.0 || h <= 1e-13 {
            let seg = DenseSegment {
                x0: x,
                x1: x + h,
                y0: y,
                y1: y_new,
                dy0: k[0],
                dy1: k[6],
            };
            dense.segments.push(seg);
            x += h;
            y = y_new;
            dy = k[6];
            if stop_when_nonpositive && y_new <= 0.0 {
                // Bisect the dense cubic for the first nonpositive point.
                let (mut lo, mut hi) = (seg.x0, seg.x1);
                while hi - lo > bracket_width {
                    let mid = 0.5 * (lo + hi);
                    if seg.eval(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                event_bracket = Some((lo, hi));
                break;
            }
        }
        let factor = if err_norm > 0.0 {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h * factor).min(max_step);
        if h < 1e-14 {
            return Err(GeomError::SolverFailure(format!(
                "step size underflow at x = {x}"
            )));
        }
    }
    if dense.segments.is_empty() {
        return Err(GeomError::SolverFailure(
            "integrator made no progress".into(),
        ));
    }
    Ok(OdeSolution {
        dense,
        event_bracket,
    })
}

/// Clamped cubic spline: natural data interpolation with prescribed
/// end-derivatives. Second derivatives are continuous.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>, // second derivatives at knots
}

impl CubicSpline {
    pub fn clamped(x: Vec<f64>, y: Vec<f64>, dy_start: f64, dy_end: f64) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(GeomError::InvalidProblem(
                "spline needs at least 3 matched knots".into(),
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeomError::InvalidProblem(
                "spline knots must be strictly increasing".into(),
            ));
        }
        // Tridiagonal system for knot second derivatives (Thomas algorithm).
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let h0 = x[1] - x[0];
        b[0] = 2.0 * h0;
        c[0] = h0;
        d[0] = 6.0 * ((y[1] - y[0]) / h0 - dy_start);
        for i in 1..n - 1 {
            let hm = x[i] - x[i - 1];
            let hp = x[i + 1] - x[i];
            a[i] = hm;
            b[i] = 2.0 * (hm + hp);
            c[i] = hp;
            d[i] = 6.0 * ((y[i + 1] - y[i]) / hp - (y[i] - y[i - 1]) / hm);
        }
        let hn = x[n - 1] - x[n - 2];
        a[n - 1] = hn;
        b[n - 1] = 2.0 * hn;
        d[n - 1] = 6.0 * (dy_end - (y[n - 1] - y[n - 2]) / hn);

        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = d[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
        }
        Ok(Self { x, y, m })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        let mut lo = 0usize;
        let mut hi = n - 2;
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.x[mid] <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let u = self.x[i + 1] - t;
        let v = t - self.x[i];
        self.m[i] * u * u * u / (6.0 * h)
            + self.m[i + 1] * v * v * v / (6.0 * h)
            + (self.y[i] / h - self.m[i] * h / 6.0) * u
            + (self.y[i + 1] / h - self.m[i + 1] * h / 6.0) * v
    }

    pub fn eval_deriv(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let u = self.x[i + 1] - t;
        let v = t - self.x[i];
        -self.m[i] * u * u / (2.0 * h) + self.m[i + 1] * v * v / (2.0 * h)
            - (self.y[i] / h - self.m[i] * h / 6.0)
            + (self.y[i + 1] / h - self.m[i + 1] * h / 6.0)
    }

    pub fn eval_deriv2(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        (self.m[i] * (self.x[i + 1] - t) + self.m[i + 1] * (t - self.x[i])) / h
    }

    /// Exact running integral of the spline at each knot, starting from 0:
    /// per segment, int = h(y_i + y_{i+1})/2 - h^3(m_i + m_{i+1})/24.
    pub fn cumulative_integral(&self) -> Vec<f64> {
        let n = self.x.len();
        let mut out = Vec::with_capacity(n);
        out.push(0.0);
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let h = self.x[i + 1] - self.x[i];
            acc += 0.5 * h * (self.y[i] + self.y[i + 1])
                - h * h * h * (self.m[i] + self.m[i + 1]) / 24.0;
            out.push(acc);
        }
        out
    }
}

/// Monotone piecewise cubic (Fritsch-Carlson). Overshoot-free, which keeps
/// fitted profile functions b(f) nonnegative between samples.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn fit(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(GeomError::InvalidProblem(
                "monotone cubic needs at least 2 matched knots".into(),
            ));
        }
        let mut delta = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let h = x[i + 1] - x[i];
            if h <= 0.0 {
                return Err(GeomError::InvalidProblem(
                    "monotone cubic knots must be strictly increasing".into(),
                ));
            }
            delta[i] = (y[i + 1] - y[i]) / h;
        }
        let mut d = vec![0.0; n];
        d[0] = delta[0];
        d[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            d[i] = if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * (x[i + 1] - x[i]) + (x[i] - x[i - 1]);
                let w2 = (x[i + 1] - x[i]) + 2.0 * (x[i] - x[i - 1]);
                (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i])
            } else {
                0.0
            };
        }
        // Fritsch-Carlson limiter.
        for i in 0..n - 1 {
            if delta[i] == 0.0 {
                d[i] = 0.0;
                d[i + 1] = 0.0;
            } else {
                let a = d[i] / delta[i];
                let b = d[i + 1] / delta[i];
                let s = (a * a + b * b).sqrt();
                if s > 3.0 {
                    d[i] = 3.0 * a / s * delta[i];
                    d[i + 1] = 3.0 * b / s * delta[i];
                }
            }
        }
        Ok(Self { x, y, d })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let mut i = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(k) => k,
            Err(k) => k.saturating_sub(1),
        };
        i = i.min(n - 2);
        let seg = DenseSegment {
            x0: self.x[i],
            x1: self.x[i + 1],
            y0: self.y[i],
            y1: self.y[i + 1],
            dy0: self.d[i],
            dy1: self.d[i + 1],
        };
        seg.eval(t.clamp(self.x[0], self.x[n - 1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stencils_are_fourth_order() {
        let f = |x: f64| x.sin();
        let d1 = deriv1(f, 0.7, 1e-2);
        assert!((d1 - 0.7f64.cos()).abs() < 1e-9);
        let d2 = deriv2(f, 0.7, 1e-2);
        assert!((d2 + 0.7f64.sin()).abs() < 1e-8);
        let d1r = deriv1_richardson(f, 0.7, 1e-2);
        assert!((d1r - 0.7f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(|x| x.exp(), 0.0, 1.0, 1e-13).unwrap();
        assert_relative_eq!(v, 1f64.exp() - 1.0, epsilon = 1e-12);
        // sqrt singularity at the left endpoint: integral of 1/sqrt(x) on [0,1].
        let s = simpson_sqrt_left(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-13).unwrap();
        assert_relative_eq!(s, 2.0, epsilon = 1e-11);
    }

    #[test]
    fn gauss_legendre_rule_is_exact_on_polynomials() {
        let (xs, ws) = gauss_legendre(20);
        assert_eq!(xs.len(), 20);
        // Weights sum to the interval length.
        assert_relative_eq!(ws.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        // A 20-point rule integrates degree <= 39 exactly.
        for k in [2usize, 10, 24, 38] {
            let exact = 2.0 / (k as f64 + 1.0);
            let got: f64 = xs
                .iter()
                .zip(ws.iter())
                .map(|(x, w)| w * x.powi(k as i32))
                .sum();
            assert_relative_eq!(got, exact, epsilon = 1e-13);
        }
        let v = gauss_quad20(|x| x.exp(), -0.3, 1.7);
        assert_relative_eq!(v, 1.7f64.exp() - (-0.3f64).exp(), epsilon = 1e-13);
        // Reversed endpoints flip the sign.
        let r = gauss_quad20(|x| x.exp(), 1.7, -0.3);
        assert_relative_eq!(r, -v, epsilon = 1e-13);
    }

    #[test]
    fn ode_exponential_and_event() {
        // y' = y, y(0) = 1. The 5e-3 step cap keeps the cubic dense output
        // below 1e-11 mid-step interpolation error.
        let sol = solve_ode(|_, y| y, 0.0, 1.0, 1.0, 1e-11, 5e-3, false, 1e-9).unwrap();
        assert_relative_eq!(sol.dense.eval(1.0), 1f64.exp(), epsilon = 1e-9);
        assert_relative_eq!(sol.dense.eval(0.37), 0.37f64.exp(), epsilon = 1e-9);
        // y' = -1, y(0) = 1 crosses zero at x = 1.
        let sol = solve_ode(|_, _| -1.0, 0.0, 1.0, 3.0, 1e-11, f64::INFINITY, true, 1e-9).unwrap();
        let (lo, hi) = sol.event_bracket.unwrap();
        assert!(hi - lo < 1e-8);
        assert!((0.5 * (lo + hi) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn clamped_spline_reproduces_cubic() {
        let xs: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let f = |x: f64| 1.0 + x + 0.5 * x * x - 0.25 * x * x * x;
        let df = |x: f64| 1.0 + x - 0.75 * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let sp = CubicSpline::clamped(xs, ys, df(0.0), df(2.0)).unwrap();
        for &t in &[0.05, 0.33, 1.0, 1.77, 1.95] {
            assert_relative_eq!(sp.eval(t), f(t), epsilon = 1e-12);
            assert_relative_eq!(sp.eval_deriv(t), df(t), epsilon = 1e-10);
        }
        // Integral of f over [0, 2] is 13/3.
        let cum = sp.cumulative_integral();
        assert_relative_eq!(cum[cum.len() - 1], 13.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn monotone_cubic_stays_monotone() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let y = vec![0.0, 0.1, 0.11, 2.0, 2.01];
        let m = MonotoneCubic::fit(x, y).unwrap();
        let mut prev = m.eval(0.0);
        for i in 1..=400 {
            let v = m.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn neville_limit() {
        // f(h) =3 - 2h + h^2 sampled away from zero extrapolates to 3.
        let samples: Vec<(f64, f64)> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&h| (h, 3.0 - 2.0 * h + h * h))
            .collect();
        assert_relative_eq!(extrapolate_to_zero(&samples), 3.0, epsilon = 1e-12);
    }
}
