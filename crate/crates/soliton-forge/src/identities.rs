//! Cross-cutting verification of gradient soliton identities and of the
//! rectifiable / transnormal / isoparametric trichotomy, on any metric plus
//! potential pair the other modules produce.
//!
//! Everything here is measured with finite-difference oracles; closed forms
//! from the construction modules are never consulted. A pair (g, f, lambda)
//! passes only if the curvature computed from g alone actually satisfies the
//! claimed relations with f.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use crate::chart::{
    fd_curvature_oracle, grad_coords, gradient_vec, hessian, laplacian, lie_derivative_metric,
    scalar_curvature_field, ChartMetric, EndoFn,
};
use crate::error::{GeomError, Result};
use crate::models::SolitonModel;
use crate::numerics::{adaptive_simpson, thread_count, MonotoneCubic};
use crate::tube::{tube_chart_calabi, SolitonProblem};

/// Required agreement of the three rectifiability conditions.
pub const RECTIFIABILITY_TOL: f64 = 1e-5;
/// Normalized cross product threshold for parallel tests.
pub const PARALLEL_TOL: f64 = 1e-6;
/// Scatter bound under which the level-function fits count as transnormal.
pub const TRANSNORMAL_SCATTER_TOL: f64 = 1e-5;
/// Gradient magnitudes below this are treated as critical points.
pub const GRADIENT_FLOOR: f64 = 1e-10;
/// Step length for numerically traced level sets.
pub const LEVEL_TRACE_STEP: f64 = 1e-3;
/// Required tightness of the two Hessian eigenvalue clusters on tubes.
pub const HESS_CLUSTER_TOL: f64 = 1e-7;

/// Inner oracle step behind scalar curvature evaluations. The oracle
/// differentiates the metric twice, so its roundoff grows as 1/step^2 and
/// a larger step than the raw metric would need wins overall.
const ORACLE_STEP: f64 = 4e-3;
/// Outer step for gradients of the scalar curvature field.
const SCALAR_GRAD_STEP: f64 = 0.02;
/// Outer step for the Laplacian of the scalar curvature field; paired with
/// its half for a Richardson pass that cancels the leading stencil error.
/// Small enough to control stencil truncation where curvature peaks while
/// staying above the noise carried by the differentiated curvature field.
const SCALAR_LAP_STEP: f64 = 0.04;
/// Step for derivatives of the (analytic) potential field.
const POTENTIAL_STEP: f64 = 1e-3;
/// Outer step for the Lie derivative along J grad f. Differentiating the
/// finite-differenced field once more divides its noise by the step, so
/// this stays well above [`POTENTIAL_STEP`].
const KILLING_STEP: f64 = 1e-2;

/// Where a sample came from; tube-backed samples carry their reduced
/// problem so slice structure is known.
#[derive(Debug, Clone, Copy)]
pub enum SampleSource {
    Chart,
    Tube(SolitonProblem),
}

/// A metric-plus-potential pair under test: a chart whose scalar field is
/// the potential, the soliton constant, and interior sample points.
pub struct SolitonSample {
    pub chart: ChartMetric,
    pub lambda: f64,
    pub sample_points: Vec<Vec<f64>>,
    /// Connected-component label per sample point.
    pub components: Vec<usize>,
    pub complex_structure: Option<EndoFn>,
    pub source: SampleSource,
}

impl SolitonSample {
    /// Wraps a chart that carries its potential as the scalar field.
    pub fn from_chart(
        chart: ChartMetric,
        lambda: f64,
        sample_points: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if chart.scalar_field_at.is_none() {
            return Err(GeomError::UnsupportedInput(
                "the chart carries no potential as its scalar field".into(),
            ));
        }
        if sample_points.is_empty() {
            return Err(GeomError::InvalidProblem(
                "identity checks need at least one sample point".into(),
            ));
        }
        for p in &sample_points {
            if p.len() != chart.dim {
                return Err(GeomError::DimensionMismatch {
                    expected: chart.dim,
                    got: p.len(),
                });
            }
            chart.metric(p)?;
        }
        let n = sample_points.len();
        Ok(Self {
            chart,
            lambda,
            sample_points,
            components: vec![0; n],
            complex_structure: None,
            source: SampleSource::Chart,
        })
    }

    /// Wraps one of the closed-form models.
    pub fn from_model(model: &SolitonModel) -> Result<Self> {
        let mut s = Self::from_chart(
            model.chart.clone(),
            model.lambda,
            model.sample_points.clone(),
        )?;
        s.complex_structure = model.complex_structure.clone();
        Ok(s)
    }

    /// Builds the sample for a solved tube problem: the smooth s-coordinate
    /// chart, its block complex structure, and an interior grid of points
    /// spread over `slices` level sets with `per_slice` points each. The
    /// inset keeps every outer finite-difference stencil inside the chart.
    pub fn from_tube_problem(
        p: &SolitonProblem,
        alpha_init: f64,
        slices: usize,
        per_slice: usize,
    ) -> Result<Self> {
        if slices < 2 || per_slice < 1 {
            return Err(GeomError::InvalidProblem(
                "tube sampling needs at least 2 slices and 1 point per slice".into(),
            ));
        }
        let (chart, j) = tube_chart_calabi(p, alpha_init)?;
        let span = p.s_max - p.s_min;
        let inset = 0.3f64.max(0.15 * span);
        if 2.0 * inset >= span {
            return Err(GeomError::InvalidProblem(
                "the s interval is too short to sample with stencil margins".into(),
            ));
        }
        let mut pts = Vec::with_capacity(slices * per_slice);
        for i in 0..slices {
            let s = p.s_min + inset + (span - 2.0 * inset) * i as f64 / (slices as f64 - 1.0);
            for q in 0..per_slice {
                let u = q as f64 / per_slice as f64;
                let psi = -0.9 + 2.1 * u;
                let theta = 1.0 + 0.9 * ((0.37 + u) % 1.0);
                let phi = 0.4 + 1.7 * ((0.71 + 2.0 * u) % 1.0);
                pts.push(vec![s, psi, theta, phi]);
            }
        }
        let n = pts.len();
        Ok(Self {
            chart,
            lambda: p.lambda,
            sample_points: pts,
            components: vec![0; n],
            complex_structure: Some(j),
            source: SampleSource::Tube(*p),
        })
    }

    pub fn with_complex_structure(mut self, j: EndoFn) -> Self {
        self.complex_structure = Some(j);
        self
    }

    /// Attaches connected-component labels, one per sample point.
    pub fn with_components(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.sample_points.len() {
            return Err(GeomError::DimensionMismatch {
                expected: self.sample_points.len(),
                got: labels.len(),
            });
        }
        self.components = labels;
        Ok(self)
    }

    fn potential(&self) -> &(dyn Fn(&[f64]) -> f64 + Send + Sync) {
        // Presence checked at construction.
        self.chart.scalar_field_at.as_deref().unwrap()
    }
}

/// Residuals of the four scalar soliton identities, sup over sample points.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// S + Delta f - n lambda.
    pub trace_residual: f64,
    /// |Rc(grad f) - grad S / 2|.
    pub bianchi_residual: f64,
    /// Standard deviation of S + |grad f|^2 - 2 lambda f, worst component.
    pub conservation_residual: f64,
    /// Delta S + 2|Rc|^2 - <grad f, grad S> - 2 lambda S.
    pub laplacian_residual: f64,
    /// Mean of the conserved quantity per connected component.
    pub conservation_constants: BTreeMap<usize, f64>,
    /// Measured |Rc + Hess f - lambda g| sup, the precondition the
    /// identities are consequences of.
    pub soliton_residual_sup: f64,
    pub points_used: usize,
}

impl IdentityReport {
    pub fn worst(&self) -> f64 {
        self.trace_residual
            .max(self.bianchi_residual)
            .max(self.conservation_residual)
            .max(self.laplacian_residual)
    }
}

struct PointIdentity {
    trace: f64,
    bianchi: f64,
    conserved: f64,
    laplace: f64,
    soliton: f64,
}

fn identity_at(s: &SolitonSample, x: &[f64]) -> Result<PointIdentity> {
    let chart = &s.chart;
    let d = chart.dim as f64;
    let f = s.potential();
    let g = chart.metric(x)?;
    let g_inv = chart.metric_inverse(x)?;

    let rep = fd_curvature_oracle(chart, x, ORACLE_STEP)?;
    let ricci = (&rep.ricci + rep.ricci.transpose()) * 0.5;
    let scal = rep.scalar;

    let grad_f = gradient_vec(chart, f, x, POTENTIAL_STEP)?;
    let hess_f = hessian(chart, f, x, POTENTIAL_STEP)?;
    let lap_f = (&g_inv * &hess_f).trace();
    let grad_f_sq = (grad_f.transpose() * &g * &grad_f)[(0, 0)];

    // Scalar curvature field derivatives, Richardson over paired steps.
    let s_field = scalar_curvature_field(chart, ORACLE_STEP);
    let ds_big = grad_coords(&s_field, x, 2.0 * SCALAR_GRAD_STEP);
    let ds_small = grad_coords(&s_field, x, SCALAR_GRAD_STEP);
    let ds = (ds_small * 16.0 - ds_big) / 15.0;
    let lap_s_big = laplacian(chart, &s_field, x, SCALAR_LAP_STEP)?;
    let lap_s_small = laplacian(chart, &s_field, x, 0.5 * SCALAR_LAP_STEP)?;
    let lap_s = (16.0 * lap_s_small - lap_s_big) / 15.0;

    let trace = (scal + lap_f - d * s.lambda).abs();

    // Rc(grad f) with the index raised, against grad S / 2 raised.
    let rc_grad = &g_inv * (&ricci * &grad_f);
    let grad_s = &g_inv * &ds;
    let diff = &rc_grad - &grad_s * 0.5;
    let bianchi = (diff.transpose() * &g * &diff)[(0, 0)].max(0.0).sqrt();

    let f_val = f(x);
    let conserved = scal + grad_f_sq - 2.0 * s.lambda * f_val;

    let rc_sq = (&g_inv * &ricci * &g_inv * &ricci).trace();
    let grad_fs = (grad_f.transpose() * &ds)[(0, 0)];
    let laplace = (lap_s + 2.0 * rc_sq - grad_fs - 2.0 * s.lambda * scal).abs();

    let soliton = (&ricci + &hess_f - &g * s.lambda).abs().max();

    Ok(PointIdentity {
        trace,
        bianchi,
        conserved,
        laplace,
        soliton,
    })
}

/// Evaluates over sample points in parallel, preserving order.
fn map_points<T: Send>(
    s: &SolitonSample,
    op: impl Fn(&[f64]) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let pts = &s.sample_points;
    let workers = thread_count().min(pts.len()).max(1);
    if workers == 1 {
        return pts.iter().map(|p| op(p)).collect();
    }
    let chunk = pts.len().div_ceil(workers);
    let results: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let op = &op;
        let handles: Vec<_> = pts
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|p| op(p)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut out = Vec::with_capacity(pts.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Verifies the four scalar consequences of the soliton equation: the
/// trace identity S + Delta f = n lambda, the contracted Bianchi identity
/// Rc(grad f) = grad S / 2, constancy of S + |grad f|^2 - 2 lambda f per
/// connected component (reported as a standard deviation), and the scalar
/// curvature equation Delta S + 2|Rc|^2 = <grad f, grad S> + 2 lambda S.
pub fn soliton_identities(s: &SolitonSample) -> Result<IdentityReport> {
    let rows = map_points(s, |x| identity_at(s, x))?;

    let mut per_component: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (row, &label) in rows.iter().zip(s.components.iter()) {
        per_component.entry(label).or_default().push(row.conserved);
    }
    let mut conservation_residual = 0.0f64;
    let mut conservation_constants = BTreeMap::new();
    for (label, vals) in &per_component {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        conservation_constants.insert(*label, mean);
        conservation_residual = conservation_residual.max(var.sqrt());
    }

    Ok(IdentityReport {
        trace_residual: rows.iter().map(|r| r.trace).fold(0.0, f64::max),
        bianchi_residual: rows.iter().map(|r| r.bianchi).fold(0.0, f64::max),
        conservation_residual,
        laplacian_residual: rows.iter().map(|r| r.laplace).fold(0.0, f64::max),
        conservation_constants,
        soliton_residual_sup: rows.iter().map(|r| r.soliton).fold(0.0, f64::max),
        points_used: rows.len(),
    })
}

/// Sup-norm of the Lie derivative of the metric along J grad f over the
/// sample points. The potential of a Kaehler gradient soliton must make
/// this vanish.
pub fn killing_residual(s: &SolitonSample) -> Result<f64> {
    let j = s.complex_structure.as_ref().ok_or_else(|| {
        GeomError::UnsupportedInput("no compatible complex structure attached to the sample".into())
    })?;
    let chart = &s.chart;
    let f = s.potential();
    let field = |y: &[f64]| -> Result<DVector<f64>> {
        let grad = gradient_vec(chart, f, y, POTENTIAL_STEP)?;
        Ok(j(y) * grad)
    };
    let sups = map_points(s, |x| {
        Ok(lie_derivative_metric(chart, &field, x, KILLING_STEP)?
            .abs()
            .max())
    })?;
    Ok(sups.into_iter().fold(0.0, f64::max))
}

/// The three equivalent rectifiability conditions, each with its residual:
/// constancy of |grad f| on level sets, grad f an eigenvector of the Ricci
/// endomorphism, and grad f parallel to grad S.
#[derive(Debug, Clone, Serialize)]
pub struct RectifiabilityReport {
    /// Worst variation of |grad f| along a traced level set, normalized.
    pub level_set_variation: f64,
    /// Worst normalized |Rc(grad f) - mu grad f| with mu the Rayleigh
    /// quotient.
    pub eigenvector_residual: f64,
    /// Worst normalized wedge norm of grad f and grad S.
    pub parallel_residual: f64,
    /// Pass flags in the same order.
    pub passes: [bool; 3],
    /// Points skipped for |grad f| below the gradient floor; counted as
    /// passes.
    pub skipped_points: usize,
    /// True when the three conditions agree (all pass or all fail).
    pub consistent: bool,
}

/// Newton-projects x back onto the level set f = c along the coordinate
/// gradient.
fn project_to_level(f: &dyn Fn(&[f64]) -> f64, x: &mut [f64], c: f64) {
    for _ in 0..3 {
        let val = f(x);
        let df = grad_coords(f, x, POTENTIAL_STEP);
        let n2 = df.dot(&df);
        if n2 < GRADIENT_FLOOR * GRADIENT_FLOOR {
            return;
        }
        let step = (val - c) / n2;
        for (xi, di) in x.iter_mut().zip(df.iter()) {
            *xi -= step * di;
        }
        if (f(x) - c).abs() < 1e-13 {
            return;
        }
    }
}

/// Traces the level set through x0 by projected steps and returns the
/// observed |grad f| values.
fn trace_level_set(
    chart: &ChartMetric,
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    let d = chart.dim;
    let c = f(x0);
    let mut x = x0.to_vec();
    let mut history = Vec::with_capacity(steps + 1);
    let norm_at = |y: &[f64]| -> Result<f64> {
        let df = grad_coords(f, y, POTENTIAL_STEP);
        let g_inv = chart.metric_inverse(y)?;
        Ok((df.transpose() * g_inv * &df)[(0, 0)].max(0.0).sqrt())
    };
    history.push(norm_at(&x)?);
    for step in 0..steps {
        let df = grad_coords(f, &x, POTENTIAL_STEP);
        let n2 = df.dot(&df);
        if n2 < GRADIENT_FLOOR * GRADIENT_FLOOR {
            break;
        }
        // Cycle through coordinate directions projected onto ker df.
        let dir = step % d;
        let mut v = DVector::zeros(d);
        v[dir] = 1.0;
        let v = &v - &df * (df[dir] / n2);
        let vn = v.norm();
        if vn < 1e-8 {
            continue;
        }
        for i in 0..d {
            x[i] += LEVEL_TRACE_STEP * v[i] / vn;
        }
        project_to_level(f, &mut x, c);
        history.push(norm_at(&x)?);
    }
    Ok(history)
}

/// Checks the three-way equivalence at the sample points. Points with
/// |grad f| below [`GRADIENT_FLOOR`] are skipped and counted as passes
/// (the zero vector is parallel to everything).
pub fn rectifiability_report(s: &SolitonSample) -> Result<RectifiabilityReport> {
    let chart = &s.chart;
    let f = s.potential();
    let s_field = scalar_curvature_field(chart, ORACLE_STEP);

    struct PointResult {
        skipped: bool,
        eigen: f64,
        parallel: f64,
    }

    // Level tracing is the expensive part; cap the number of traced points.
    let trace_budget = 8usize;
    let rows = map_points(s, |x| {
        let g = chart.metric(x)?;
        let g_inv = chart.metric_inverse(x)?;
        let df = grad_coords(f, x, POTENTIAL_STEP);
        let grad_f = &g_inv * &df;
        let nf2 = (df.transpose() * &grad_f)[(0, 0)].max(0.0);
        if nf2.sqrt() < GRADIENT_FLOOR {
            return Ok(PointResult {
                skipped: true,
                eigen: 0.0,
                parallel: 0.0,
            });
        }

        // (ii) eigenvector condition via the Rayleigh quotient.
        let rep = fd_curvature_oracle(chart, x, ORACLE_STEP)?;
        let ricci = (&rep.ricci + rep.ricci.transpose()) * 0.5;
        let rc_grad = &g_inv * (&ricci * &grad_f);
        let mu = (grad_f.transpose() * &g * &rc_grad)[(0, 0)] / nf2;
        let dev = &rc_grad - &grad_f * mu;
        let dev_norm = (dev.transpose() * &g * &dev)[(0, 0)].max(0.0).sqrt();
        let rc_scale = ricci.abs().max().max(1e-30);
        let eigen = dev_norm / (rc_scale * nf2.sqrt());

        // (iii) grad f parallel to grad S by the normalized wedge norm.
        let ds_big = grad_coords(&s_field, x, 2.0 * SCALAR_GRAD_STEP);
        let ds_small = grad_coords(&s_field, x, SCALAR_GRAD_STEP);
        let ds = (ds_small * 16.0 - ds_big) / 15.0;
        let grad_s = &g_inv * &ds;
        let ns2 = (ds.transpose() * &grad_s)[(0, 0)].max(0.0);
        let parallel = if ns2.sqrt() < 1e-8 * (1.0 + rep.scalar.abs()) {
            // A vanishing grad S is parallel to anything.
            0.0
        } else {
            let cross = (grad_f.transpose() * &g * &grad_s)[(0, 0)];
            let wedge2 = (nf2 * ns2 - cross * cross).max(0.0);
            wedge2.sqrt() / (nf2 * ns2).sqrt()
        };

        Ok(PointResult {
            skipped: false,
            eigen,
            parallel,
        })
    })?;

    // (i) level set variation, traced from a few representative points.
    let mut variation = 0.0f64;
    let mut traced = 0usize;
    for (x, row) in s.sample_points.iter().zip(rows.iter()) {
        if row.skipped || traced >= trace_budget {
            continue;
        }
        let norms = trace_level_set(chart, f, x, 150)?;
        if norms.len() > 1 {
            let max = norms.iter().copied().fold(f64::MIN, f64::max);
            let min = norms.iter().copied().fold(f64::MAX, f64::min);
            variation = variation.max((max - min) / (1.0 + max.abs()));
            traced += 1;
        }
    }

    let skipped = rows.iter().filter(|r| r.skipped).count();
    let eigen = rows
        .iter()
        .filter(|r| !r.skipped)
        .map(|r| r.eigen)
        .fold(0.0, f64::max);
    let parallel = rows
        .iter()
        .filter(|r| !r.skipped)
        .map(|r| r.parallel)
        .fold(0.0, f64::max);

    let passes = [
        variation < RECTIFIABILITY_TOL,
        eigen < RECTIFIABILITY_TOL,
        parallel < PARALLEL_TOL,
    ];
    let consistent = passes.iter().all(|&b| b) || passes.iter().all(|&b| !b);
    Ok(RectifiabilityReport {
        level_set_variation: variation,
        eigenvector_residual: eigen,
        parallel_residual: parallel,
        passes,
        skipped_points: skipped,
        consistent,
    })
}

/// A same-level pair of points whose gradient norms disagree, certifying
/// that |grad f|^2 is not a function of f.
#[derive(Debug, Clone, Serialize)]
pub struct MultiValuedWitness {
    pub f_value: f64,
    pub b_low: f64,
    pub b_high: f64,
}

/// Fits of |grad f|^2 and Delta f as functions of f.
#[derive(Debug, Clone, Serialize)]
pub struct TransnormalFit {
    /// Worst deviation of raw |grad f|^2 samples from the fitted b(f).
    pub b_scatter: f64,
    /// Worst deviation of raw Delta f samples from the fitted a(f).
    pub a_scatter: f64,
    pub transnormal: bool,
    pub isoparametric: bool,
    /// Gap between the f-segment length integral df / sqrt(b) and a traced
    /// gradient curve between the same two levels.
    pub arclength_gap: f64,
    pub multi_valued: Option<MultiValuedWitness>,
    /// (b_scatter, a_scatter) per connected component.
    pub per_component: BTreeMap<usize, (f64, f64)>,
    /// Fitted knots (f, b, a).
    pub table: Vec<(f64, f64, f64)>,
    /// Sample points excluded as critical (|grad f| below the floor).
    pub skipped_points: usize,
}

struct LevelSample {
    f: f64,
    b: f64,
    a: f64,
    component: usize,
}

fn collapse_levels(mut samples: Vec<(f64, f64, f64)>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    samples.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut fs = Vec::new();
    let mut bs = Vec::new();
    let mut aas = Vec::new();
    let span = (samples.last().unwrap().0 - samples[0].0).abs().max(1e-12);
    let merge_width = 1e-7 * span;
    let mut i = 0;
    while i < samples.len() {
        let mut j = i + 1;
        while j < samples.len() && samples[j].0 - samples[i].0 <= merge_width {
            j += 1;
        }
        let m = (j - i) as f64;
        fs.push(samples[i..j].iter().map(|p| p.0).sum::<f64>() / m);
        bs.push(samples[i..j].iter().map(|p| p.1).sum::<f64>() / m);
        aas.push(samples[i..j].iter().map(|p| p.2).sum::<f64>() / m);
        i = j;
    }
    (fs, bs, aas)
}

/// Fitted b and a interpolants, their worst scatters, and the collapsed
/// (f, b, a) level table.
type LevelFit = (MonotoneCubic, MonotoneCubic, f64, f64, Vec<(f64, f64, f64)>);

fn fit_scatter(samples: &[(f64, f64, f64)]) -> Result<LevelFit> {
    let (fs, bs, aas) = collapse_levels(samples.to_vec());
    if fs.len() < 2 {
        return Err(GeomError::InvalidProblem(
            "transnormal fit needs at least 2 distinct level values".into(),
        ));
    }
    let b_fit = MonotoneCubic::fit(fs.clone(), bs.clone())?;
    let a_fit = MonotoneCubic::fit(fs.clone(), aas.clone())?;
    let mut b_scatter = 0.0f64;
    let mut a_scatter = 0.0f64;
    for (f, b, a) in samples {
        b_scatter = b_scatter.max((b_fit.eval(*f) - b).abs());
        a_scatter = a_scatter.max((a_fit.eval(*f) - a).abs());
    }
    let table = fs
        .iter()
        .zip(bs.iter())
        .zip(aas.iter())
        .map(|((f, b), a)| (*f, *b, *a))
        .collect();
    Ok((b_fit, a_fit, b_scatter, a_scatter, table))
}

/// Fits |grad f|^2 = b(f) and Delta f = a(f) over the sample points and
/// flags the pair transnormal / isoparametric when the raw scatter about
/// the fits stays below [`TRANSNORMAL_SCATTER_TOL`]. Critical values act as
/// breakpoints: samples with |grad f| below the floor are excluded and
/// counted. A same-level pair with incompatible b values short-circuits to
/// a not-transnormal verdict with the witness attached.
pub fn transnormal_fit(s: &SolitonSample) -> Result<TransnormalFit> {
    let chart = &s.chart;
    let f = s.potential();

    let rows = map_points(s, |x| {
        let g_inv = chart.metric_inverse(x)?;
        let df = grad_coords(f, x, POTENTIAL_STEP);
        let b = (df.transpose() * &g_inv * &df)[(0, 0)].max(0.0);
        let lap_big = laplacian(chart, f, x, 2.0 * SCALAR_GRAD_STEP)?;
        let lap_small = laplacian(chart, f, x, SCALAR_GRAD_STEP)?;
        let a = (16.0 * lap_small - lap_big) / 15.0;
        Ok((f(x), b, a))
    })?;

    let mut kept: Vec<LevelSample> = Vec::new();
    let mut skipped = 0usize;
    for (row, &label) in rows.iter().zip(s.components.iter()) {
        if row.1.sqrt() < GRADIENT_FLOOR {
            skipped += 1;
        } else {
            kept.push(LevelSample {
                f: row.0,
                b: row.1,
                a: row.2,
                component: label,
            });
        }
    }
    if kept.len() < 4 {
        return Err(GeomError::InvalidProblem(
            "too few non-critical sample points for a transnormal fit".into(),
        ));
    }

    // Multi-valued detection across the whole sample: same f, different b.
    let mut sorted: Vec<&LevelSample> = kept.iter().collect();
    sorted.sort_by(|p, q| p.f.total_cmp(&q.f));
    let f_span = (sorted.last().unwrap().f - sorted[0].f).abs().max(1e-12);
    let b_scale = 1.0 + sorted.iter().map(|p| p.b.abs()).fold(0.0, f64::max);
    let mut multi_valued = None;
    for w in sorted.windows(2) {
        if (w[1].f - w[0].f).abs() < 1e-6 * f_span
            && (w[1].b - w[0].b).abs() > 100.0 * TRANSNORMAL_SCATTER_TOL * b_scale
        {
            multi_valued = Some(MultiValuedWitness {
                f_value: w[0].f,
                b_low: w[0].b.min(w[1].b),
                b_high: w[0].b.max(w[1].b),
            });
            break;
        }
    }

    let all: Vec<(f64, f64, f64)> = kept.iter().map(|p| (p.f, p.b, p.a)).collect();
    let mut per_component = BTreeMap::new();
    let mut labels: Vec<usize> = kept.iter().map(|p| p.component).collect();
    labels.sort_unstable();
    labels.dedup();
    for label in &labels {
        let part: Vec<(f64, f64, f64)> = kept
            .iter()
            .filter(|p| p.component == *label)
            .map(|p| (p.f, p.b, p.a))
            .collect();
        if part.len() >= 4 {
            if let Ok((_, _, bs, asc, _)) = fit_scatter(&part) {
                per_component.insert(*label, (bs, asc));
            }
        }
    }

    if let Some(witness) = multi_valued {
        return Ok(TransnormalFit {
            b_scatter: f64::INFINITY,
            a_scatter: f64::INFINITY,
            transnormal: false,
            isoparametric: false,
            arclength_gap: f64::NAN,
            multi_valued: Some(witness),
            per_component,
            table: Vec::new(),
            skipped_points: skipped,
        });
    }

    let (b_fit, _a_fit, b_scatter, a_scatter, table) = fit_scatter(&all)?;
    let transnormal = b_scatter < TRANSNORMAL_SCATTER_TOL;
    let isoparametric = transnormal && a_scatter < TRANSNORMAL_SCATTER_TOL;

    // f-segment length: integral of df / sqrt(b) between two interior
    // levels against a traced unit-speed gradient curve.
    let lo_idx = table.len() / 4;
    let hi_idx = (3 * table.len()) / 4;
    let arclength_gap = if hi_idx > lo_idx && transnormal {
        let f1 = table[lo_idx].0;
        let f2 = table[hi_idx].0;
        let d_fit = adaptive_simpson(|v| 1.0 / b_fit.eval(v).max(1e-12).sqrt(), f1, f2, 1e-10)?;
        // Start from the kept sample nearest to level f1.
        let start = kept
            .iter()
            .map(|p| p.f)
            .zip(s.sample_points.iter().zip(s.components.iter()))
            .min_by(|a, b| (a.0 - f1).abs().total_cmp(&(b.0 - f1).abs()));
        let x0 = start.map(|(_, (x, _))| x.clone()).unwrap();
        let d_traced = trace_gradient_curve(chart, f, &x0, f1, f2)?;
        (d_fit - d_traced).abs()
    } else {
        f64::NAN
    };

    Ok(TransnormalFit {
        b_scatter,
        a_scatter,
        transnormal,
        isoparametric,
        arclength_gap,
        multi_valued: None,
        per_component,
        table,
        skipped_points: skipped,
    })
}

/// Arclength of the unit-speed gradient curve from level f1 to level f2,
/// by fourth-order integration of dx/dtau = grad f / |grad f|.
fn trace_gradient_curve(
    chart: &ChartMetric,
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    f1: f64,
    f2: f64,
) -> Result<f64> {
    let mut x = x0.to_vec();
    // Move exactly onto level f1 first.
    project_to_level(f, &mut x, f1);
    let dir_field = |y: &[f64]| -> Result<DVector<f64>> {
        let g = chart.metric(y)?;
        let g_inv = chart.metric_inverse(y)?;
        let df = grad_coords(f, y, POTENTIAL_STEP);
        let grad = &g_inv * &df;
        let n = (grad.transpose() * &g * &grad)[(0, 0)].max(0.0).sqrt();
        if n < GRADIENT_FLOOR {
            return Err(GeomError::InvalidProblem(
                "gradient curve hit a critical point between the chosen levels".into(),
            ));
        }
        Ok(grad / n)
    };
    let h = LEVEL_TRACE_STEP;
    let mut tau = 0.0;
    for _ in 0..2_000_000 {
        let prev_f = f(&x);
        if prev_f >= f2 {
            break;
        }
        // Classical fourth-order step.
        let k1 = dir_field(&x)?;
        let k2 = dir_field(&add_scaled(&x, &k1, 0.5 * h))?;
        let k3 = dir_field(&add_scaled(&x, &k2, 0.5 * h))?;
        let k4 = dir_field(&add_scaled(&x, &k3, h))?;
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let new_f = f(&x);
        if new_f >= f2 {
            // Linear interpolation of the crossing inside the last step.
            let frac = ((f2 - prev_f) / (new_f - prev_f)).clamp(0.0, 1.0);
            tau += h * frac;
            return Ok(tau);
        }
        tau += h;
    }
    Ok(tau)
}

fn add_scaled(x: &[f64], v: &DVector<f64>, c: f64) -> Vec<f64> {
    x.iter().zip(v.iter()).map(|(a, b)| a + c * b).collect()
}

/// Eigenvalue clustering of the covariant Hessian of f on one level set.
#[derive(Debug, Clone, Serialize)]
pub struct HessSlice {
    pub f_value: f64,
    /// Means of the two eigenvalue pairs, ascending.
    pub pair_means: [f64; 2],
    /// Worst in-cluster standard deviation across the slice.
    pub cluster_dev: f64,
}

/// Hessian spectrum over the slices of a tube-backed sample.
#[derive(Debug, Clone, Serialize)]
pub struct HessSpectrumReport {
    pub slices: Vec<HessSlice>,
    pub worst_cluster_dev: f64,
    /// True when every slice splits into two tight eigenvalue pairs.
    pub pairs_confirmed: bool,
}

/// Verifies that Hess f on a tube sample has exactly two eigenvalues, each
/// of multiplicity two, constant along every sampled level set.
pub fn hess_eigenvalue_clusters(s: &SolitonSample) -> Result<HessSpectrumReport> {
    if !matches!(s.source, SampleSource::Tube(_)) || s.chart.dim != 4 {
        return Err(GeomError::UnsupportedInput(
            "the two-pair Hessian spectrum check applies to 4-dimensional tube samples".into(),
        ));
    }
    let chart = &s.chart;
    let f = s.potential();

    let evs = map_points(s, |x| {
        // Richardson pair keeps the eigenvalues well under the cluster
        // tolerance.
        let h_big = hessian(chart, f, x, 2.0 * SCALAR_GRAD_STEP)?;
        let h_small = hessian(chart, f, x, SCALAR_GRAD_STEP)?;
        let hess = (h_small * 16.0 - h_big) / 15.0;
        let g = chart.metric(x)?;
        let l = g
            .cholesky()
            .ok_or_else(|| GeomError::DegenerateChart(x.to_vec()))?
            .l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| GeomError::DegenerateChart(x.to_vec()))?;
        let sym = (&hess + hess.transpose()) * 0.5;
        let white = &l_inv * sym * l_inv.transpose();
        let mut ev: Vec<f64> = white
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        Ok((f(x), ev))
    })?;

    // Group by level value.
    let mut by_level: BTreeMap<i64, Vec<&(f64, Vec<f64>)>> = BTreeMap::new();
    let f_span = evs.iter().map(|(v, _)| *v).fold(f64::MIN, f64::max)
        - evs.iter().map(|(v, _)| *v).fold(f64::MAX, f64::min);
    let width = (1e-9 * f_span.abs()).max(1e-12);
    for row in &evs {
        by_level
            .entry((row.0 / width).round() as i64)
            .or_default()
            .push(row);
    }

    let mut slices = Vec::new();
    let mut worst = 0.0f64;
    let mut confirmed = true;
    for rows in by_level.values() {
        let low: Vec<f64> = rows.iter().flat_map(|r| r.1[..2].iter().copied()).collect();
        let high: Vec<f64> = rows.iter().flat_map(|r| r.1[2..].iter().copied()).collect();
        let stat = |vals: &[f64]| -> (f64, f64) {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            (mean, var.sqrt())
        };
        let (m_low, d_low) = stat(&low);
        let (m_high, d_high) = stat(&high);
        let dev = d_low.max(d_high);
        worst = worst.max(dev);
        if dev >= HESS_CLUSTER_TOL {
            confirmed = false;
        }
        slices.push(HessSlice {
            f_value: rows[0].0,
            pair_means: [m_low, m_high],
            cluster_dev: dev,
        });
    }

    Ok(HessSpectrumReport {
        slices,
        worst_cluster_dev: worst,
        pairs_confirmed: confirmed,
    })
}
