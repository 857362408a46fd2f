//! Cohomogeneity-one machinery: warped product metrics over a contact base,
//! the reduced first-order equation for the profile alpha(s), the coordinate
//! change from the potential-level parameter s to arclength t, shape-operator
//! evolution, tube Ricci assembly, soliton residuals, and endpoint
//! smoothness classification.
//!
//! A tube metric is dt^2 + H(t)^2 eta x eta + F(t)^2 g_perp over a fixed
//! contact base; with alpha = H^2, F^2 = 2s + A, dt = ds / sqrt(alpha) and
//! f = Bs + C, the whole gradient soliton system reduces to
//! d alpha/ds = k - lambda(2s+A) - 2n alpha/(2s+A) + B alpha.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chart::{ChartMetric, EndoFn};
use crate::contact::{
    classify, deformed_ricci, phi_sectional, AlmostContactStructure, DeformationParams,
    StructureTag, CLASSIFY_TOL,
};
use crate::error::{GeomError, Result};
use crate::frame::milnor_frame;
use crate::models::standard_phi_3d;
use crate::numerics::{
    adaptive_simpson, deriv1, deriv2, extrapolate_to_zero, gauss_quad20, simpson_sqrt_left,
    solve_ode, thread_count, CubicSpline, DenseOutput, DenseSegment, ODE_TOL,
};

/// Profile evaluator derivatives must match finite differences of the values
/// to this accuracy.
pub const PROFILE_CONSISTENCY_TOL: f64 = 1e-6;
/// Required sup-norm agreement between the integrating-factor and the
/// adaptive Runge-Kutta solutions of the alpha equation.
pub const ROUTE_AGREEMENT_TOL: f64 = 1e-8;
/// Required consistency between stored alpha and quadrature of alpha'.
pub const QUADRATURE_CONSISTENCY_TOL: f64 = 1e-8;
/// Within this distance of the singular line 2s + A = 0 the explicit stepper
/// is replaced by the integrating-factor closed form.
pub const SINGULAR_LAUNCH_WIDTH: f64 = 1e-3;
/// Gate for endpoint smoothness: collapse slopes must match the round limit
/// this closely to classify as smooth.
pub const BOUNDARY_SLOPE_TOL: f64 = 1e-3;

/// A scalar profile of the tube parameter with two derivatives.
pub trait Profile: Send + Sync {
    fn value(&self, t: f64) -> f64;
    fn d1(&self, t: f64) -> f64;
    fn d2(&self, t: f64) -> f64;
}

/// Profile given by closed-form evaluators.
pub struct ClosedFormProfile {
    v: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    dv: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ddv: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ClosedFormProfile {
    pub fn new(
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ddv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            v: Arc::new(v),
            dv: Arc::new(dv),
            ddv: Arc::new(ddv),
        }
    }
}

impl Profile for ClosedFormProfile {
    fn value(&self, t: f64) -> f64 {
        (self.v)(t)
    }
    fn d1(&self, t: f64) -> f64 {
        (self.dv)(t)
    }
    fn d2(&self, t: f64) -> f64 {
        (self.ddv)(t)
    }
}

/// Profile backed by a clamped cubic spline through sampled values; end
/// slopes are taken from the one-sided quadratic through the first and last
/// three samples.
pub struct SplineProfile {
    spline: CubicSpline,
}

impl SplineProfile {
    pub fn from_samples(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() < 3 || t.len() != y.len() {
            return Err(GeomError::InvalidProblem(
                "spline profile needs at least 3 matched samples".into(),
            ));
        }
        let n = t.len();
        let d_start = one_sided_slope(t[0], t[1], t[2], y[0], y[1], y[2]);
        let d_end = one_sided_slope(t[n - 1], t[n - 2], t[n - 3], y[n - 1], y[n - 2], y[n - 3]);
        Ok(Self {
            spline: CubicSpline::clamped(t, y, d_start, d_end)?,
        })
    }
}

/// Derivative at x0 of the quadratic through (x0,y0), (x1,y1), (x2,y2).
fn one_sided_slope(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64) -> f64 {
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let dd = (d12 - d01) / (x2 - x0);
    d01 + dd * (x0 - x1)
}

impl Profile for SplineProfile {
    fn value(&self, t: f64) -> f64 {
        self.spline.eval(t)
    }
    fn d1(&self, t: f64) -> f64 {
        self.spline.eval_deriv(t)
    }
    fn d2(&self, t: f64) -> f64 {
        self.spline.eval_deriv2(t)
    }
}

/// Warped product metric dt^2 + H^2 eta x eta + F^2 g_perp on an interval
/// times a contact base.
pub struct WarpedProductMetric {
    pub t_min: f64,
    pub t_max: f64,
    pub h: Arc<dyn Profile>,
    pub f_warp: Arc<dyn Profile>,
    pub potential: Arc<dyn Profile>,
    pub base: AlmostContactStructure,
}

impl WarpedProductMetric {
    /// Validates positivity of H and F and self-consistency of the supplied
    /// derivatives against finite differences of the values, on interior
    /// sample points inset from the (possibly collapsing) endpoints.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(
        t_min: f64,
        t_max: f64,
        h: Arc<dyn Profile>,
        f_warp: Arc<dyn Profile>,
        potential: Arc<dyn Profile>,
        base: AlmostContactStructure,
    ) -> Result<Self> {
        if !(t_max > t_min) {
            return Err(GeomError::InvalidProblem(
                "tube interval has nonpositive length".into(),
            ));
        }
        base.ensure_valid()?;
        let w = Self {
            t_min,
            t_max,
            h,
            f_warp,
            potential,
            base,
        };
        let span = t_max - t_min;
        let step = (1e-3 * span).min(1e-3);
        for j in 0..7 {
            let t = t_min + span * (0.1 + 0.8 * j as f64 / 6.0);
            for (name, p) in [("H", &w.h), ("F", &w.f_warp), ("f", &w.potential)] {
                let v = p.value(t);
                if name != "f" && !(v > 0.0) {
                    return Err(GeomError::DegenerateTube(format!(
                        "{name}({t}) = {v} is not positive on the interior"
                    )));
                }
                let fd1 = deriv1(|x| p.value(x), t, step);
                let fd2 = deriv2(|x| p.value(x), t, step);
                let scale = 1.0 + v.abs();
                if (p.d1(t) - fd1).abs() > PROFILE_CONSISTENCY_TOL * scale
                    || (p.d2(t) - fd2).abs() > PROFILE_CONSISTENCY_TOL * 10.0 * scale
                {
                    return Err(GeomError::InvalidProblem(format!(
                        "profile {name} derivatives disagree with finite differences at t = {t}"
                    )));
                }
            }
        }
        Ok(w)
    }

    /// Slice structure at t as an (H, F)-rescaling of the base.
    pub fn deformation_at(&self, t: f64) -> Result<DeformationParams> {
        DeformationParams::new(1.0, self.h.value(t), self.f_warp.value(t))
    }
}

/// Parameters of the reduced first-order equation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolitonProblem {
    pub lambda: f64,
    /// Transverse Einstein constant of the base: Rc_N = k g_N.
    pub k: f64,
    /// Complex dimension of the transverse base.
    pub n: u32,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl SolitonProblem {
    pub fn w(&self, s: f64) -> f64 {
        2.0 * s + self.a
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.s_max > self.s_min) {
            return Err(GeomError::InvalidProblem(
                "s interval has nonpositive length".into(),
            ));
        }
        if self.n == 0 {
            return Err(GeomError::InvalidProblem(
                "transverse complex dimension must be at least 1".into(),
            ));
        }
        if self.w(self.s_min) < 0.0 {
            return Err(GeomError::InvalidProblem(format!(
                "2s + A must stay positive on the interior; 2 s_min + A = {}",
                self.w(self.s_min)
            )));
        }
        Ok(())
    }
}

/// On-disk problem document: the equation parameters plus the initial value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDocument {
    #[serde(flatten)]
    pub problem: SolitonProblem,
    pub alpha_init: f64,
}

/// Solved alpha profile on an increasing s-grid.
#[derive(Debug, Clone)]
pub struct AlphaProfile {
    pub grid: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_prime: Vec<f64>,
    /// Sup-difference between the integrating-factor and Runge-Kutta routes.
    pub route_gap: f64,
    /// Bracket around the first interior zero of alpha, when one was hit.
    pub zero_bracket: Option<(f64, f64)>,
    /// Set when the data sits on the degenerate line alpha == 0 (k = lambda = 0).
    pub degenerate_constant: bool,
}

impl AlphaProfile {
    /// Largest defect between stored alpha and the running spline quadrature
    /// of the stored alpha'.
    pub fn quadrature_gap(&self) -> Result<f64> {
        let spline = CubicSpline::clamped(
            self.grid.clone(),
            self.alpha_prime.clone(),
            one_sided_slope(
                self.grid[0],
                self.grid[1],
                self.grid[2],
                self.alpha_prime[0],
                self.alpha_prime[1],
                self.alpha_prime[2],
            ),
            {
                let n = self.grid.len();
                one_sided_slope(
                    self.grid[n - 1],
                    self.grid[n - 2],
                    self.grid[n - 3],
                    self.alpha_prime[n - 1],
                    self.alpha_prime[n - 2],
                    self.alpha_prime[n - 3],
                )
            },
        )?;
        let cum = spline.cumulative_integral();
        let mut gap = 0.0f64;
        for (i, c) in cum.iter().enumerate() {
            gap = gap.max((self.alpha[i] - (self.alpha[0] + c)).abs());
        }
        Ok(gap)
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if n < 4 || self.alpha.len() != n || self.alpha_prime.len() != n {
            return Err(GeomError::EmptyProfile(
                "profile holds fewer than 4 matched samples".into(),
            ));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeomError::InvalidProblem(
                "profile grid must be strictly increasing".into(),
            ));
        }
        if self.degenerate_constant {
            return Ok(());
        }
        for i in 1..n - 1 {
            if !(self.alpha[i] > 0.0) {
                return Err(GeomError::DegenerateTube(format!(
                    "alpha({}) = {} is not positive on the interior",
                    self.grid[i], self.alpha[i]
                )));
            }
        }
        let gap = self.quadrature_gap()?;
        if gap > QUADRATURE_CONSISTENCY_TOL {
            return Err(GeomError::InvalidProblem(format!(
                "alpha and alpha' are quadrature-inconsistent (defect {gap:.3e})"
            )));
        }
        Ok(())
    }
}

/// Right-hand side of d alpha/ds = k - lambda(2s+A) - 2n alpha/(2s+A) + B alpha.
pub fn alpha_ode_rhs(s: f64, alpha: f64, p: &SolitonProblem) -> Result<f64> {
    let w = p.w(s);
    if w <= 0.0 {
        return Err(GeomError::InvalidProblem(format!(
            "2s + A must be positive, got {w} at s = {s}"
        )));
    }
    Ok(p.k - p.lambda * w - 2.0 * f64::from(p.n) * alpha / w + p.b * alpha)
}

/// Total s-derivative of the right-hand side along solutions; feeds the
/// second derivatives of the tube profiles.
fn alpha_ode_rhs_ds(s: f64, alpha: f64, alpha_s: f64, p: &SolitonProblem) -> f64 {
    let w = p.w(s);
    let n = f64::from(p.n);
    -2.0 * p.lambda + 4.0 * n * alpha / (w * w) + (p.b - 2.0 * n / w) * alpha_s
}

/// alpha'(s) with the singular-orbit limit: at 2s + A = 0 a bounded solution
/// has alpha = 0 and slope k/(n+1).
fn alpha_slope(s: f64, alpha: f64, p: &SolitonProblem) -> f64 {
    let w = p.w(s);
    if w < 1e-12 {
        p.k / (f64::from(p.n) + 1.0)
    } else {
        p.k - p.lambda * w - 2.0 * f64::from(p.n) * alpha / w + p.b * alpha
    }
}

/// Integrating factor (2s+A)^n exp(-Bs) of the linear equation.
fn integrating_factor(s: f64, p: &SolitonProblem) -> f64 {
    p.w(s).powi(p.n as i32) * (-p.b * s).exp()
}

/// Closed-form route: alpha on the given grid by cumulative quadrature of
/// mu(s) (k - lambda w(s)) and division by mu.
fn closed_form_alpha(p: &SolitonProblem, alpha_init: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let q = |s: f64| integrating_factor(s, p) * (p.k - p.lambda * p.w(s));
    let mut acc = integrating_factor(grid[0], p) * alpha_init;
    let mut out = Vec::with_capacity(grid.len());
    out.push(alpha_init);
    for i in 1..grid.len() {
        acc += adaptive_simpson(q, grid[i - 1], grid[i], 1e-13)?;
        out.push(acc / integrating_factor(grid[i], p));
    }
    Ok(out)
}

/// Solves the alpha equation by two independent routes on a uniform grid:
/// the integrating-factor closed form with numerical quadrature, and an
/// adaptive embedded Runge-Kutta integration. Their sup-difference is
/// recorded. Integration stops at the first alpha <= 0 crossing, reported
/// as a bracket narrower than 1e-8. Within [`SINGULAR_LAUNCH_WIDTH`] of the
/// singular line 2s + A = 0 only the closed form is used.
pub fn solve_alpha(p: &SolitonProblem, alpha_init: f64) -> Result<AlphaProfile> {
    solve_alpha_grid(p, alpha_init, 801)
}

pub fn solve_alpha_grid(
    p: &SolitonProblem,
    alpha_init: f64,
    grid_points: usize,
) -> Result<AlphaProfile> {
    p.validate()?;
    if grid_points < 16 {
        return Err(GeomError::InvalidProblem(
            "profile grid needs at least 16 points".into(),
        ));
    }
    if alpha_init < 0.0 {
        return Err(GeomError::EmptyProfile(format!(
            "initial alpha = {alpha_init} is negative"
        )));
    }
    let w0 = p.w(p.s_min);
    let singular_start = w0 < SINGULAR_LAUNCH_WIDTH;
    if w0 < 1e-12 && alpha_init != 0.0 {
        return Err(GeomError::InvalidProblem(
            "a singular-orbit start (2 s_min + A = 0) forces alpha(s_min) = 0".into(),
        ));
    }

    // Degenerate line: alpha == 0 solves the equation iff k = lambda = 0.
    if alpha_init == 0.0 && p.k == 0.0 && p.lambda == 0.0 {
        let grid: Vec<f64> = uniform_grid(p.s_min, p.s_max, grid_points);
        let zeros = vec![0.0; grid_points];
        return Ok(AlphaProfile {
            grid,
            alpha: zeros.clone(),
            alpha_prime: zeros,
            route_gap: 0.0,
            zero_bracket: None,
            degenerate_constant: true,
        });
    }
    if alpha_init == 0.0 && !singular_start && alpha_ode_rhs(p.s_min, 0.0, p)? <= 0.0 {
        return Err(GeomError::EmptyProfile(
            "alpha starts at 0 and the equation drives it nonpositive".into(),
        ));
    }
    if singular_start && p.k <= 0.0 {
        return Err(GeomError::EmptyProfile(
            "a singular-orbit start needs k > 0 to launch alpha above 0".into(),
        ));
    }

    let full_grid = uniform_grid(p.s_min, p.s_max, grid_points);
    let closed = closed_form_alpha(p, alpha_init, &full_grid)?;

    // Runge-Kutta route starts at the first grid point clear of the
    // singular line, seeded from the closed form.
    let start_idx = full_grid
        .iter()
        .position(|&s| p.w(s) >= SINGULAR_LAUNCH_WIDTH)
        .unwrap_or(full_grid.len() - 1);
    let s_start = full_grid[start_idx];
    let y_start = closed[start_idx];
    if y_start <= 0.0 && start_idx > 0 {
        return Err(GeomError::EmptyProfile(format!(
            "alpha is already nonpositive ({y_start}) at the launch point s = {s_start}"
        )));
    }
    let h_grid = (p.s_max - p.s_min) / (grid_points as f64 - 1.0);
    let rhs = |s: f64, y: f64| {
        let w = p.w(s);
        p.k - p.lambda * w - 2.0 * f64::from(p.n) * y / w + p.b * y
    };
    let sol = solve_ode(
        rhs,
        s_start,
        y_start,
        p.s_max,
        ODE_TOL,
        h_grid.min(5e-3),
        true,
        1e-9,
    )?;
    let reached = sol.dense.x_end();
    let zero_bracket = sol.event_bracket;

    // Assemble: closed-form values in the launch zone, then both routes.
    let mut grid = Vec::with_capacity(grid_points);
    let mut alpha = Vec::with_capacity(grid_points);
    let mut route_gap = 0.0f64;
    for (i, &s) in full_grid.iter().enumerate() {
        if let Some((lo, _)) = zero_bracket {
            if s > lo {
                break;
            }
        }
        let v = if i < start_idx {
            closed[i]
        } else {
            let rk = sol.dense.eval(s.min(reached));
            route_gap = route_gap.max((rk - closed[i]).abs());
            rk
        };
        grid.push(s);
        alpha.push(v);
    }
    if let Some((lo, hi)) = zero_bracket {
        let s_end = 0.5 * (lo + hi);
        if grid.last().map(|&g| s_end > g + 1e-12).unwrap_or(false) {
            grid.push(s_end);
            alpha.push(sol.dense.eval(s_end).max(0.0));
        }
    }
    if grid.len() < 4 {
        return Err(GeomError::EmptyProfile(
            "alpha reached 0 before any integration progress".into(),
        ));
    }
    let alpha_prime = grid
        .iter()
        .zip(alpha.iter())
        .map(|(&s, &a)| alpha_slope(s, a, p))
        .collect();
    let profile = AlphaProfile {
        grid,
        alpha,
        alpha_prime,
        route_gap,
        zero_bracket,
        degenerate_constant: false,
    };
    profile.validate()?;
    Ok(profile)
}

fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n as f64 - 1.0))
        .collect()
}

/// Contact base realizing a transverse Einstein constant k at unit contact
/// scale: the diagonal-bracket family (2, k/2, k/2).
pub fn calabi_base(k: f64) -> Result<AlmostContactStructure> {
    let frame = milnor_frame(2.0, 0.5 * k, 0.5 * k);
    let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    Ok(
        AlmostContactStructure::from_reeb(frame, zeta, standard_phi_3d())?
            .with_measured_contact_scale(1e-12),
    )
}

/// Shared state of the three tube profiles: the s(t) reparametrization and
/// the alpha interpolant, with derivatives taken from the equation itself.
struct TubeData {
    p: SolitonProblem,
    s_of_t: DenseOutput,
    alpha_of_s: DenseOutput,
    s_min: f64,
    s_max: f64,
}

impl TubeData {
    /// (s, w, alpha, alpha_s, alpha_ss) at tube parameter t.
    fn state(&self, t: f64) -> (f64, f64, f64, f64, f64) {
        let s = self.s_of_t.eval(t).clamp(self.s_min, self.s_max);
        let w = self.p.w(s);
        let alpha = self.alpha_of_s.eval(s).max(0.0);
        let alpha_s = alpha_slope(s, alpha, &self.p);
        let alpha_ss = alpha_ode_rhs_ds(s, alpha, alpha_s, &self.p);
        (s, w, alpha, alpha_s, alpha_ss)
    }
}

enum TubeQuantity {
    H,
    F,
    Potential,
}

struct AlphaTubeProfile {
    data: Arc<TubeData>,
    which: TubeQuantity,
}

impl Profile for AlphaTubeProfile {
    fn value(&self, t: f64) -> f64 {
        let (s, w, alpha, _, _) = self.data.state(t);
        match self.which {
            TubeQuantity::H => alpha.sqrt(),
            TubeQuantity::F => w.sqrt(),
            TubeQuantity::Potential => self.data.p.b * s + self.data.p.c,
        }
    }

    fn d1(&self, t: f64) -> f64 {
        let (_, w, alpha, alpha_s, _) = self.data.state(t);
        match self.which {
            // H' = alpha_s / 2 along dt = ds / sqrt(alpha).
            TubeQuantity::H => 0.5 * alpha_s,
            // F' = sqrt(alpha) / sqrt(w); at a singular orbit the ratio
            // alpha/w tends to k/(2(n+1)).
            TubeQuantity::F => {
                let ratio = if w > 1e-12 {
                    alpha / w
                } else {
                    self.data.p.k / (2.0 * (f64::from(self.data.p.n) + 1.0))
                };
                ratio.max(0.0).sqrt()
            }
            TubeQuantity::Potential => self.data.p.b * alpha.sqrt(),
        }
    }

    fn d2(&self, t: f64) -> f64 {
        let (_, w, alpha, alpha_s, alpha_ss) = self.data.state(t);
        match self.which {
            TubeQuantity::H => 0.5 * alpha.sqrt() * alpha_ss,
            TubeQuantity::F => {
                if w > 1e-12 {
                    (0.5 * alpha_s - alpha / w) / w.sqrt()
                } else {
                    0.0
                }
            }
            TubeQuantity::Potential => 0.5 * self.data.p.b * alpha_s,
        }
    }
}

/// Builds the warped product realization of a solved profile: t(s) by
/// quadrature of 1/sqrt(alpha) (sqrt-aware at a singular start), H = sqrt
/// alpha, F = sqrt(2s+A), f = Bs + C, over the contact base with transverse
/// Einstein constant k. Only complex dimension n = 1 bases are realized as
/// frames.
pub fn calabi_to_tube(ap: &AlphaProfile, p: &SolitonProblem) -> Result<WarpedProductMetric> {
    ap.validate()?;
    if ap.degenerate_constant {
        return Err(GeomError::DegenerateTube(
            "the zero profile does not define a metric".into(),
        ));
    }
    if p.n != 1 {
        return Err(GeomError::UnsupportedInput(
            "only complex-dimension-1 transverse bases are realized as frame models".into(),
        ));
    }
    let n = ap.grid.len();

    // alpha(s) interpolant with equation-exact slopes.
    let mut alpha_segments = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        alpha_segments.push(DenseSegment {
            x0: ap.grid[i],
            x1: ap.grid[i + 1],
            y0: ap.alpha[i],
            y1: ap.alpha[i + 1],
            dy0: ap.alpha_prime[i],
            dy1: ap.alpha_prime[i + 1],
        });
    }
    let alpha_of_s = DenseOutput {
        segments: alpha_segments,
    };

    // t nodes by quadrature of 1 / sqrt(alpha).
    let mut t_nodes = Vec::with_capacity(n);
    t_nodes.push(0.0);
    for i in 0..n - 1 {
        let (a, b) = (ap.grid[i], ap.grid[i + 1]);
        let integrand = |s: f64| 1.0 / alpha_of_s.eval(s).max(1e-300).sqrt();
        let piece = if ap.alpha[i] <= 0.0 {
            simpson_sqrt_left(integrand, a, b, 1e-12)?
        } else if ap.alpha[i + 1] <= 0.0 {
            crate::numerics::simpson_sqrt_right(integrand, a, b, 1e-12)?
        } else {
            adaptive_simpson(integrand, a, b, 1e-12)?
        };
        if !piece.is_finite() || piece <= 0.0 {
            return Err(GeomError::DegenerateTube(format!(
                "arclength quadrature failed on [{a}, {b}]"
            )));
        }
        t_nodes.push(t_nodes[i] + piece);
    }

    // s(t) interpolant with ds/dt = sqrt(alpha).
    let mut s_segments = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        s_segments.push(DenseSegment {
            x0: t_nodes[i],
            x1: t_nodes[i + 1],
            y0: ap.grid[i],
            y1: ap.grid[i + 1],
            dy0: ap.alpha[i].max(0.0).sqrt(),
            dy1: ap.alpha[i + 1].max(0.0).sqrt(),
        });
    }
    let data = Arc::new(TubeData {
        p: *p,
        s_of_t: DenseOutput {
            segments: s_segments,
        },
        alpha_of_s,
        s_min: ap.grid[0],
        s_max: ap.grid[n - 1],
    });

    let t_max = t_nodes[n - 1];
    let w = WarpedProductMetric::new(
        0.0,
        t_max,
        Arc::new(AlphaTubeProfile {
            data: data.clone(),
            which: TubeQuantity::H,
        }),
        Arc::new(AlphaTubeProfile {
            data: data.clone(),
            which: TubeQuantity::F,
        }),
        Arc::new(AlphaTubeProfile {
            data,
            which: TubeQuantity::Potential,
        }),
        calabi_base(p.k)?,
    )?;

    // Structural constraints of the ansatz, checked on the output evaluators.
    let mut worst = 0.0f64;
    for j in 0..64 {
        let t = t_max * (j as f64 + 0.5) / 64.0;
        let constraint = w.f_warp.value(t) * w.f_warp.d1(t) - w.h.value(t);
        let potential_slope = w.potential.d1(t) - p.b * w.h.value(t);
        worst = worst.max(constraint.abs()).max(potential_slope.abs());
    }
    if worst > 1e-8 {
        return Err(GeomError::SolverFailure(format!(
            "tube construction violates F F' = H or df/dt = B H (defect {worst:.3e})"
        )));
    }
    Ok(w)
}

/// Shape operator data of the slice family at parameter t.
#[derive(Debug, Clone)]
pub struct ShapeProfileAt {
    pub l_zeta: f64,
    pub l_horiz: f64,
    pub l_zeta_prime: f64,
    pub l_horiz_prime: f64,
    pub tr_l: f64,
    pub tr_l2: f64,
    pub tr_l_prime: f64,
    /// Slice operator in the deformed orthonormal frame (Reeb first).
    pub operator: DMatrix<f64>,
}

/// L = (H'/H) on the fiber and (F'/F) on the horizontal directions, with
/// tr L = H'/H + 2m F'/F for m horizontal complex directions.
pub fn shape_profile(w: &WarpedProductMetric, t: f64) -> Result<ShapeProfileAt> {
    let (h, f) = (w.h.value(t), w.f_warp.value(t));
    if !(h > 0.0 && f > 0.0) {
        return Err(GeomError::DegenerateTube(format!(
            "slice at t = {t} has H = {h}, F = {f}"
        )));
    }
    let d = w.base.dim();
    let m = (d - 1) as f64 / 2.0;
    let l_zeta = w.h.d1(t) / h;
    let l_horiz = w.f_warp.d1(t) / f;
    let l_zeta_prime = w.h.d2(t) / h - l_zeta * l_zeta;
    let l_horiz_prime = w.f_warp.d2(t) / f - l_horiz * l_horiz;
    let mut operator = DMatrix::identity(d, d) * l_horiz;
    operator[(0, 0)] = l_zeta;
    Ok(ShapeProfileAt {
        l_zeta,
        l_horiz,
        l_zeta_prime,
        l_horiz_prime,
        tr_l: l_zeta + 2.0 * m * l_horiz,
        tr_l2: l_zeta * l_zeta + 2.0 * m * l_horiz * l_horiz,
        tr_l_prime: l_zeta_prime + 2.0 * m * l_horiz_prime,
        operator,
    })
}

/// Ricci components of the tube metric at parameter t, in the orthonormal
/// frame (N, zeta*, horizontal...).
#[derive(Debug, Clone)]
pub struct TubeRicciAt {
    pub normal: f64,
    /// Mixed Rc(X, N) slots; identically zero for slice-constant tr L and
    /// divergence-free L, which the diagonal profile guarantees.
    pub mixed: DVector<f64>,
    pub tangential: DMatrix<f64>,
    pub full: DMatrix<f64>,
    /// Residual diagnostics inherited from the slice curvature closed forms.
    pub slice_residuals: BTreeMap<String, f64>,
}

/// Rc(N,N) = -tr L' - tr L^2; Rc(X,Y) = Rc_slice(X,Y) - tr L g(LX,Y)
/// - g(L'X,Y); Rc(X,N) = 0 for these homogeneous slices.
pub fn tube_ricci(w: &WarpedProductMetric, t: f64) -> Result<TubeRicciAt> {
    let shape = shape_profile(w, t)?;
    let slice = deformed_ricci(&w.base, &w.deformation_at(t)?)?;
    let d = w.base.dim();
    let normal = -shape.tr_l_prime - shape.tr_l2;
    let mut tangential = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let l_i = if i == 0 { shape.l_zeta } else { shape.l_horiz };
            let lp_i = if i == 0 {
                shape.l_zeta_prime
            } else {
                shape.l_horiz_prime
            };
            let mut v = slice.closed_form_ricci[(i, j)];
            if i == j {
                v -= shape.tr_l * l_i + lp_i;
            }
            tangential[(i, j)] = v;
        }
    }
    let mut full = DMatrix::zeros(d + 1, d + 1);
    full[(0, 0)] = normal;
    for i in 0..d {
        for j in 0..d {
            full[(i + 1, j + 1)] = tangential[(i, j)];
        }
    }
    Ok(TubeRicciAt {
        normal,
        mixed: DVector::zeros(d),
        tangential,
        full,
        slice_residuals: slice.residual_norms,
    })
}

/// Pointwise residuals of the gradient soliton system on a tube.
#[derive(Debug, Clone, Copy)]
pub struct ResidualRow {
    pub t: f64,
    /// Normal equation: lambda - (-tr L' - tr L^2 + f'').
    pub r1: f64,
    /// Tangential equation on the Reeb slot.
    pub r2_zeta: f64,
    /// Tangential equation on the horizontal block (worst entry).
    pub r2_horiz: f64,
    /// Constraint F F' - H.
    pub r3: f64,
    /// Constraint f' - B H (the closing convention).
    pub r4: f64,
    /// The alternative reading H - f' B, reported for comparison.
    pub r4_alt: f64,
}

/// Grid residual record with per-component sup-norms.
#[derive(Debug, Clone)]
pub struct SolitonResidual {
    pub rows: Vec<ResidualRow>,
    pub sup: BTreeMap<String, f64>,
}

impl SolitonResidual {
    /// Largest of the residuals that the reduced system must close:
    /// R1, R2 (both slots), R3, R4.
    pub fn worst_primary(&self) -> f64 {
        ["r1", "r2_zeta", "r2_horiz", "r3", "r4"]
            .iter()
            .map(|k| self.sup[*k])
            .fold(0.0, f64::max)
    }
}

fn residual_row(w: &WarpedProductMetric, p: &SolitonProblem, t: f64) -> Result<ResidualRow> {
    let shape = shape_profile(w, t)?;
    let slice = deformed_ricci(&w.base, &w.deformation_at(t)?)?;
    let d = w.base.dim();
    let h = w.h.value(t);
    let fp = w.potential.d1(t);
    let fpp = w.potential.d2(t);

    let r1 = (p.lambda - (-shape.tr_l_prime - shape.tr_l2 + fpp)).abs();

    let rc_zeta = slice.closed_form_ricci[(0, 0)];
    let r2_zeta = (p.lambda
        - (rc_zeta - shape.tr_l * shape.l_zeta - shape.l_zeta_prime + fp * shape.l_zeta))
        .abs();

    let mut r2_horiz = 0.0f64;
    for i in 1..d {
        for j in 1..d {
            let target = if i == j { p.lambda } else { 0.0 };
            let mut v = slice.closed_form_ricci[(i, j)];
            if i == j {
                v += -shape.tr_l * shape.l_horiz - shape.l_horiz_prime + fp * shape.l_horiz;
            }
            r2_horiz = r2_horiz.max((target - v).abs());
        }
    }

    let r3 = (w.f_warp.value(t) * w.f_warp.d1(t) - h).abs();
    let r4 = (fp - p.b * h).abs();
    let r4_alt = (h - fp * p.b).abs();
    Ok(ResidualRow {
        t,
        r1,
        r2_zeta,
        r2_horiz,
        r3,
        r4,
        r4_alt,
    })
}

/// Evaluates the reduced-system residuals on `samples` interior grid points,
/// in parallel over chunks (worker count per [`thread_count`]).
pub fn soliton_residual(
    w: &WarpedProductMetric,
    p: &SolitonProblem,
    samples: usize,
) -> Result<SolitonResidual> {
    if samples == 0 {
        return Err(GeomError::InvalidProblem(
            "residual grid needs at least one sample".into(),
        ));
    }
    let span = w.t_max - w.t_min;
    let ts: Vec<f64> = (0..samples)
        .map(|j| w.t_min + span * (j as f64 + 1.0) / (samples as f64 + 1.0))
        .collect();

    let workers = thread_count().min(ts.len()).max(1);
    let rows: Vec<ResidualRow> = if workers == 1 {
        ts.iter()
            .map(|&t| residual_row(w, p, t))
            .collect::<Result<_>>()?
    } else {
        let chunk = ts.len().div_ceil(workers);
        let results: Vec<Result<Vec<ResidualRow>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = ts
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || part.iter().map(|&t| residual_row(w, p, t)).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut rows = Vec::with_capacity(ts.len());
        for r in results {
            rows.extend(r?);
        }
        rows
    };

    let mut sup = BTreeMap::new();
    for (name, get) in [
        (
            "r1",
            &(|r: &ResidualRow| r.r1) as &dyn Fn(&ResidualRow) -> f64,
        ),
        ("r2_zeta", &|r| r.r2_zeta),
        ("r2_horiz", &|r| r.r2_horiz),
        ("r3", &|r| r.r3),
        ("r4", &|r| r.r4),
        ("r4_alt", &|r| r.r4_alt),
    ] {
        sup.insert(name.to_string(), rows.iter().map(get).fold(0.0, f64::max));
    }
    Ok(SolitonResidual { rows, sup })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Lower,
    Upper,
}

/// Endpoint classification of a tube metric.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryClass {
    /// Both warping factors collapse with unit round limit: the metric
    /// closes smoothly at a point over the standard contact sphere.
    SmoothPoint,
    /// The fiber circle collapses at unit slope over a surviving base.
    SmoothCircleCollapse,
    /// Nothing collapses; an ordinary boundary slice.
    RegularBoundary,
    NotSmooth(String),
}

/// Extrapolated endpoint data behind a [`BoundaryClass`].
#[derive(Debug, Clone)]
pub struct BoundaryReport {
    pub class: BoundaryClass,
    pub h_limit: f64,
    pub f_limit: f64,
    /// Inward slope of H at the endpoint.
    pub h_prime_limit: f64,
    /// Inward slope of F at the endpoint.
    pub f_prime_limit: f64,
    /// Change in the extrapolated limits when the finest sample is dropped.
    pub extrapolation_residual: f64,
}

/// Richardson-extrapolates H, F and their inward slopes at an endpoint and
/// classifies the collapse per the smooth-closing conditions: a point needs
/// H, F -> 0 with unit slopes over the standard contact sphere; a circle
/// collapse needs H -> 0 at unit slope with F bounded away from 0.
pub fn boundary_check(w: &WarpedProductMetric, end: Endpoint) -> Result<BoundaryReport> {
    let span = w.t_max - w.t_min;
    let (t_e, sigma) = match end {
        Endpoint::Lower => (w.t_min, 1.0),
        Endpoint::Upper => (w.t_max, -1.0),
    };
    let h0 = 0.05 * span;
    let steps: Vec<f64> = (0..6).map(|k| h0 / f64::powi(2.0, k)).collect();

    let limit_of = |eval: &dyn Fn(f64) -> f64| -> (f64, f64) {
        let samples: Vec<(f64, f64)> = steps.iter().map(|&h| (h, eval(t_e + sigma * h))).collect();
        let full = extrapolate_to_zero(&samples);
        let coarse = extrapolate_to_zero(&samples[..samples.len() - 1]);
        (full, (full - coarse).abs())
    };

    let (h_limit, eh) = limit_of(&|t| w.h.value(t));
    let (f_limit, ef) = limit_of(&|t| w.f_warp.value(t));
    let (h_prime_limit, ehp) = limit_of(&|t| sigma * w.h.d1(t));
    let (f_prime_limit, efp) = limit_of(&|t| sigma * w.f_warp.d1(t));
    let extrapolation_residual = eh.max(ef).max(ehp).max(efp);

    let scale = 1.0 + h_limit.abs().max(f_limit.abs());
    let class = if extrapolation_residual > 1e-5 * scale {
        BoundaryClass::NotSmooth(format!(
            "endpoint limits did not converge (extrapolation residual {extrapolation_residual:.3e})"
        ))
    } else {
        let zero = 1e-5 * scale;
        let h_zero = h_limit.abs() < zero;
        let f_zero = f_limit.abs() < zero;
        if h_zero && f_zero {
            classify_point_collapse(w, h_prime_limit, f_prime_limit)
        } else if h_zero {
            if (h_prime_limit - 1.0).abs() <= BOUNDARY_SLOPE_TOL {
                BoundaryClass::SmoothCircleCollapse
            } else {
                BoundaryClass::NotSmooth(format!(
                    "fiber collapses at slope {h_prime_limit}, not the unit circle limit"
                ))
            }
        } else if f_zero {
            BoundaryClass::NotSmooth(
                "transverse directions collapse while the fiber survives".into(),
            )
        } else {
            BoundaryClass::RegularBoundary
        }
    };

    Ok(BoundaryReport {
        class,
        h_limit,
        f_limit,
        h_prime_limit,
        f_prime_limit,
        extrapolation_residual,
    })
}

fn classify_point_collapse(w: &WarpedProductMetric, hp: f64, fp: f64) -> BoundaryClass {
    if (hp - 1.0).abs() > BOUNDARY_SLOPE_TOL || (fp - 1.0).abs() > BOUNDARY_SLOPE_TOL {
        return BoundaryClass::NotSmooth(format!(
            "point collapse with slopes (H', F') = ({hp}, {fp}) instead of the round unit limit"
        ));
    }
    // Smooth point closure additionally needs the base to be the standard
    // contact sphere: unit contact scale, transversely round.
    let scale_ok = w
        .base
        .contact_scale
        .map(|a| (a - 1.0).abs() < 1e-8)
        .unwrap_or(false);
    let class_ok = classify(&w.base, CLASSIFY_TOL)
        .map(|c| c.tag == StructureTag::DeformedSasakian && (c.b - 1.0).abs() < 1e-6)
        .unwrap_or(false);
    let x = DVector::from_fn(w.base.dim(), |r, _| f64::from(u8::from(r == 1)));
    let phi_ok = phi_sectional(&w.base, &x)
        .map(|k| (k - 1.0).abs() < 1e-8)
        .unwrap_or(false);
    if scale_ok && class_ok && phi_ok {
        BoundaryClass::SmoothPoint
    } else {
        BoundaryClass::NotSmooth("collapse base is not the standard contact sphere".into())
    }
}

/// 4D coordinate chart (t, psi, theta, phi) of a tube over the standard
/// contact 3-sphere, theta in (0, pi); the potential rides along as the
/// chart scalar field.
pub fn tube_chart_hopf(w: &WarpedProductMetric) -> Result<ChartMetric> {
    ensure_hopf_base(w)?;
    let h = w.h.clone();
    let f = w.f_warp.clone();
    let chart = ChartMetric::new(
        4,
        Arc::new(move |x: &[f64]| {
            let (hv, fv) = (h.value(x[0]), f.value(x[0]));
            let (h2, f2) = (hv * hv / 4.0, fv * fv / 4.0);
            let ct = x[2].cos();
            let mut g = DMatrix::zeros(4, 4);
            g[(0, 0)] = 1.0;
            g[(1, 1)] = h2;
            g[(1, 3)] = h2 * ct;
            g[(3, 1)] = h2 * ct;
            g[(2, 2)] = f2;
            g[(3, 3)] = h2 * ct * ct + f2 * (1.0 - ct * ct);
            g
        }),
    );
    let pot = w.potential.clone();
    Ok(chart.with_scalar_field(Arc::new(move |x: &[f64]| pot.value(x[0]))))
}

/// Coordinate components of the orthonormal tube frame (N, zeta*, X1, X2)
/// at a chart point of [`tube_chart_hopf`].
pub fn tube_chart_frame(w: &WarpedProductMetric, x: &[f64]) -> Result<Vec<DVector<f64>>> {
    ensure_hopf_base(w)?;
    let (hv, fv) = (w.h.value(x[0]), w.f_warp.value(x[0]));
    let st = x[2].sin();
    if st.abs() < 1e-12 {
        return Err(GeomError::DegenerateChart(x.to_vec()));
    }
    Ok(vec![
        DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 2.0 / hv, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 0.0, 2.0 / fv, 0.0]),
        DVector::from_vec(vec![
            0.0,
            -2.0 * x[2].cos() / (fv * st),
            0.0,
            2.0 / (fv * st),
        ]),
    ])
}

fn ensure_hopf_base(w: &WarpedProductMetric) -> Result<()> {
    if w.base.dim() != 3 {
        return Err(GeomError::UnsupportedInput(
            "chart assembly needs a 3-dimensional base".into(),
        ));
    }
    let scale_ok = w
        .base
        .contact_scale
        .map(|a| (a - 1.0).abs() < 1e-8)
        .unwrap_or(false);
    let x = DVector::from_vec(vec![0.0, 1.0, 0.0]);
    let round = phi_sectional(&w.base, &x).map(|k| (k - 1.0).abs() < 1e-8)?;
    if !(scale_ok && round) {
        return Err(GeomError::UnsupportedInput(
            "chart assembly needs the unit-contact-scale round sphere base".into(),
        ));
    }
    Ok(())
}

/// 4D coordinate chart (s, psi, theta, phi) of a solved tube, with the
/// potential parameter s itself as the transverse coordinate (g_ss = 1 /
/// alpha). Every metric entry is assembled from the closed-form quadrature
/// route for alpha, evaluated with fixed Gauss-Legendre panels, so the
/// chart is a smooth function of the coordinates with no interpolation
/// kinks; nested curvature differentiation stays clean. The potential
/// f = Bs + C rides along as the chart scalar field, and the block complex
/// structure (N -> zeta*, zeta* -> -N, X1 -> X2) is returned alongside.
pub fn tube_chart_calabi(p: &SolitonProblem, alpha_init: f64) -> Result<(ChartMetric, EndoFn)> {
    p.validate()?;
    if p.n != 1 {
        return Err(GeomError::UnsupportedInput(
            "only complex-dimension-1 transverse bases are realized as charts".into(),
        ));
    }
    if (p.k - 4.0).abs() > 1e-12 {
        return Err(GeomError::UnsupportedInput(
            "chart assembly needs the unit round sphere base (transverse Einstein constant 4)"
                .into(),
        ));
    }
    if alpha_init < 0.0 {
        return Err(GeomError::InvalidProblem(format!(
            "initial alpha = {alpha_init} is negative"
        )));
    }

    // Accumulated integral of mu (k - lambda w) at fixed panel nodes; each
    // evaluation finishes the last partial panel with the same fixed rule.
    let segs = 64usize;
    let delta = (p.s_max - p.s_min) / segs as f64;
    let pb = *p;
    let q = move |s: f64| integrating_factor(s, &pb) * (pb.k - pb.lambda * pb.w(s));
    let mut nodes = vec![0.0; segs + 1];
    for j in 0..segs {
        let a = p.s_min + delta * j as f64;
        nodes[j + 1] = nodes[j] + gauss_quad20(q, a, a + delta);
    }
    let boundary_term = integrating_factor(p.s_min, p) * alpha_init;
    let s_min = p.s_min;
    let alpha_at = Arc::new(move |s: f64| -> f64 {
        let j = (((s - s_min) / delta).floor() as isize).clamp(0, segs as isize - 1) as usize;
        let partial = gauss_quad20(q, s_min + delta * j as f64, s);
        (boundary_term + nodes[j] + partial) / integrating_factor(s, &pb)
    });

    let pa = *p;
    let alpha_g = alpha_at.clone();
    let chart = ChartMetric::new(
        4,
        Arc::new(move |x: &[f64]| {
            let a = alpha_g(x[0]);
            let w = pa.w(x[0]);
            if !(a > 0.0 && w > 0.0) {
                return DMatrix::zeros(4, 4);
            }
            let (h2, f2) = (a / 4.0, w / 4.0);
            let ct = x[2].cos();
            let mut g = DMatrix::zeros(4, 4);
            g[(0, 0)] = 1.0 / a;
            g[(1, 1)] = h2;
            g[(1, 3)] = h2 * ct;
            g[(3, 1)] = h2 * ct;
            g[(2, 2)] = f2;
            g[(3, 3)] = h2 * ct * ct + f2 * (1.0 - ct * ct);
            g
        }),
    );
    let (b, c) = (p.b, p.c);
    let chart = chart.with_scalar_field(Arc::new(move |x: &[f64]| b * x[0] + c));

    let pj = *p;
    let complex_structure: EndoFn = Arc::new(move |x: &[f64]| {
        let a = alpha_at(x[0]);
        let w = pj.w(x[0]);
        let (hv, fv) = (a.max(1e-300).sqrt(), w.max(1e-300).sqrt());
        let (st, ct) = x[2].sin_cos();
        let st = if st.abs() < 1e-12 { 1e-12 } else { st };
        // Coordinate components of the orthonormal frame (N, zeta*, X1, X2).
        let frame = DMatrix::from_columns(&[
            DVector::from_vec(vec![hv, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0 / hv, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 2.0 / fv, 0.0]),
            DVector::from_vec(vec![0.0, -2.0 * ct / (fv * st), 0.0, 2.0 / (fv * st)]),
        ]);
        let mut j0 = DMatrix::zeros(4, 4);
        j0[(1, 0)] = 1.0;
        j0[(0, 1)] = -1.0;
        j0[(3, 2)] = 1.0;
        j0[(2, 3)] = -1.0;
        let inv = frame
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::identity(4, 4));
        &frame * j0 * inv
    });
    Ok((chart, complex_structure))
}

/// Flat space in tube form: H = F = t over the standard contact sphere,
/// with the concentric potential f = lambda t^2 / 2.
pub fn gaussian_tube(lambda: f64, t_max: f64) -> Result<WarpedProductMetric> {
    WarpedProductMetric::new(
        0.0,
        t_max,
        Arc::new(ClosedFormProfile::new(|t| t, |_| 1.0, |_| 0.0)),
        Arc::new(ClosedFormProfile::new(|t| t, |_| 1.0, |_| 0.0)),
        Arc::new(ClosedFormProfile::new(
            move |t| 0.5 * lambda * t * t,
            move |t| lambda * t,
            move |_| lambda,
        )),
        calabi_base(4.0)?,
    )
}

/// The round 4-sphere of the given radius in tube form: H = F = r sin(t/r)
/// over the standard contact sphere, t in (0, pi r).
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn round_sphere_tube(radius: f64) -> Result<WarpedProductMetric> {
    if !(radius > 0.0) {
        return Err(GeomError::InvalidProblem(format!(
            "sphere radius must be positive, got {radius}"
        )));
    }
    let r = radius;
    let mk = move || {
        ClosedFormProfile::new(
            move |t| r * (t / r).sin(),
            move |t| (t / r).cos(),
            move |t| -(t / r).sin() / r,
        )
    };
    WarpedProductMetric::new(
        0.0,
        std::f64::consts::PI * r,
        Arc::new(mk()),
        Arc::new(mk()),
        Arc::new(ClosedFormProfile::new(|_| 0.0, |_| 0.0, |_| 0.0)),
        calabi_base(4.0)?,
    )
}
