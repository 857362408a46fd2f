//! Closed-form reference geometries: the three homogeneous Sasakian models
//! (round 3-sphere, universal cover of SL(2,R), Heisenberg group), flat
//! Gaussian solitons, the cigar soliton, the round hypersurface sphere in
//! flat complex 2-space, and matching coordinate charts that let the
//! finite-difference oracle certify every frame computation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::chart::{euclidean_chart, fd_curvature_oracle, hessian, ChartMetric, EndoFn};
use crate::contact::AlmostContactStructure;
use crate::error::{GeomError, Result};
use crate::frame::milnor_frame;

/// Reference geometry identifiers, addressable by CLI name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelId {
    Sphere3,
    SL2RCover,
    Nil3,
    GaussianSoliton { dim: usize, lambda: f64 },
    Cigar,
    RoundSphereHypersurface { radius: f64 },
}

impl ModelId {
    /// Resolves a CLI model name; parameterized models get their default
    /// parameters (Gaussian: dim 4, lambda 1; hypersurface: radius 1).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sphere3" => Ok(Self::Sphere3),
            "sl2r" => Ok(Self::SL2RCover),
            "nil3" => Ok(Self::Nil3),
            "gaussian" => Ok(Self::GaussianSoliton {
                dim: 4,
                lambda: 1.0,
            }),
            "cigar" => Ok(Self::Cigar),
            "hopf-hypersurface" => Ok(Self::RoundSphereHypersurface { radius: 1.0 }),
            other => Err(GeomError::UnsupportedInput(format!(
                "unknown model '{other}' (expected sphere3|sl2r|nil3|gaussian|cigar|hopf-hypersurface)"
            ))),
        }
    }

    pub fn cli_name(&self) -> &'static str {
        match self {
            Self::Sphere3 => "sphere3",
            Self::SL2RCover => "sl2r",
            Self::Nil3 => "nil3",
            Self::GaussianSoliton { .. } => "gaussian",
            Self::Cigar => "cigar",
            Self::RoundSphereHypersurface { .. } => "hopf-hypersurface",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::GaussianSoliton { dim, .. } if dim < 2 || !dim.is_multiple_of(2) => {
                Err(GeomError::InvalidProblem(format!(
                    "Gaussian soliton dimension must be even and >= 2, got {dim}"
                )))
            }
            Self::RoundSphereHypersurface { radius } if !(radius > 0.0 && radius.is_finite()) => {
                Err(GeomError::InvalidProblem(format!(
                    "hypersurface radius must be positive, got {radius}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// The standard transverse rotation on a 3D frame with the Reeb direction
/// first: e_2 -> e_3 -> -e_2.
pub fn standard_phi_3d() -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(3, 3);
    phi[(2, 1)] = 1.0;
    phi[(1, 2)] = -1.0;
    phi
}

/// The three simply connected homogeneous Sasakian models, normalized so
/// that d eta(X,Y) = g(X, Phi Y) holds exactly (contact scale 1). In the
/// diagonal bracket family [e_2,e_3] = c1 e_1, [e_3,e_1] = c2 e_2,
/// [e_1,e_2] = c3 e_3 the contact condition pins c1 = 2 and the Killing Reeb
/// flow pins c2 = c3 = c; the transverse curvature is then 2c, giving c = 2
/// for the round sphere, -1/2 over the hyperbolic plane, and 0 over the
/// flat plane. Their Phi-plane curvatures come out 1, -4, -3.
pub fn tanno_model(id: ModelId) -> Result<AlmostContactStructure> {
    let c = match id {
        ModelId::Sphere3 => 2.0,
        ModelId::SL2RCover => -0.5,
        ModelId::Nil3 => 0.0,
        other => {
            return Err(GeomError::UnsupportedInput(format!(
                "'{}' is not a homogeneous contact model",
                other.cli_name()
            )))
        }
    };
    let frame = milnor_frame(2.0, c, c);
    let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    Ok(
        AlmostContactStructure::from_reeb(frame, zeta, standard_phi_3d())?
            .with_measured_contact_scale(1e-12),
    )
}

/// A metric-plus-potential pair with everything the verification suites
/// need: the chart carries the potential as its scalar field, and
/// `complex_structure` (when present) evaluates a parallel J at a point.
#[derive(Clone)]
pub struct SolitonModel {
    pub name: &'static str,
    pub chart: ChartMetric,
    pub lambda: f64,
    pub complex_structure: Option<EndoFn>,
    pub sample_points: Vec<Vec<f64>>,
}

/// Block-diagonal rotation by 90 degrees on consecutive coordinate pairs:
/// the standard complex structure of flat even-dimensional space.
pub fn standard_complex_structure(dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(dim, dim);
    for p in 0..dim / 2 {
        j[(2 * p + 1, 2 * p)] = 1.0;
        j[(2 * p, 2 * p + 1)] = -1.0;
    }
    j
}

/// Flat space with f(x) = lambda |x|^2 / 2: Rc = 0 and Hess f = lambda g
/// exactly, so the defining residual vanishes identically.
pub fn gaussian_soliton(dim: usize, lambda: f64) -> Result<SolitonModel> {
    let id = ModelId::GaussianSoliton { dim, lambda };
    id.validate()?;
    let chart = euclidean_chart(dim).with_scalar_field(Arc::new(move |x: &[f64]| {
        0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>()
    }));
    let j = standard_complex_structure(dim);
    let mut rng = StdRng::seed_from_u64(7);
    let mut sample_points = Vec::with_capacity(20);
    for _ in 0..20 {
        sample_points.push((0..dim).map(|_| rng.gen_range(-1.2..1.2)).collect());
    }
    Ok(SolitonModel {
        name: "gaussian",
        chart,
        lambda,
        complex_structure: Some(Arc::new(move |_: &[f64]| j.clone())),
        sample_points,
    })
}

/// The rotationally symmetric steady soliton on the plane:
/// g = (dx^2 + dy^2) / (1 + x^2 + y^2), f = -ln(1 + x^2 + y^2), lambda = 0.
/// The formula is treated as untrusted input; it ships with the
/// finite-difference residual certificate rather than by assertion.
pub fn cigar_soliton() -> SolitonModel {
    let chart = ChartMetric::new(
        2,
        Arc::new(|x: &[f64]| {
            let conf = 1.0 / (1.0 + x[0] * x[0] + x[1] * x[1]);
            DMatrix::identity(2, 2) * conf
        }),
    )
    .with_scalar_field(Arc::new(|x: &[f64]| {
        -((1.0 + x[0] * x[0] + x[1] * x[1]).ln())
    }));
    let j = standard_complex_structure(2);
    let mut sample_points = Vec::with_capacity(25);
    for i in 0..5 {
        for k in 0..5 {
            sample_points.push(vec![-1.0 + 0.5 * i as f64, -1.0 + 0.5 * k as f64]);
        }
    }
    SolitonModel {
        name: "cigar",
        chart,
        lambda: 0.0,
        complex_structure: Some(Arc::new(move |_: &[f64]| j.clone())),
        sample_points,
    }
}

/// Sup-norm of the defining residual Rc + Hess f - lambda g over the model's
/// sample points, with every ingredient finite-differenced from the chart.
pub fn residual_certificate(model: &SolitonModel, h: f64) -> Result<f64> {
    let f = model
        .chart
        .scalar_field_at
        .clone()
        .ok_or_else(|| GeomError::UnsupportedInput("model carries no potential".into()))?;
    let feval = move |x: &[f64]| f(x);
    let mut worst = 0.0f64;
    for p in &model.sample_points {
        let rep = fd_curvature_oracle(&model.chart, p, h)?;
        let hess = hessian(&model.chart, &feval, p, h)?;
        let g = model.chart.metric(p)?;
        let defect = rep.ricci + hess - g * model.lambda;
        worst = worst.max(defect.abs().max());
    }
    Ok(worst)
}

/// Structure induced on the radius-r sphere in flat C^2 by the standard
/// construction V = grad|.|, zeta = -J V, Phi = J - eta x V. The
/// quaternionic frame (-ip/r, jp/r, kp/r) realizes it with diagonal bracket
/// constants 2/r and the standard transverse rotation, and the shape
/// operator of the position-vector normal is exactly (1/r) Id.
pub fn round_sphere_hypersurface(radius: f64) -> Result<(AlmostContactStructure, DMatrix<f64>)> {
    ModelId::RoundSphereHypersurface { radius }.validate()?;
    let c = 2.0 / radius;
    let frame = milnor_frame(c, c, c);
    let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let acs = AlmostContactStructure::from_reeb(frame, zeta, standard_phi_3d())?
        .with_measured_contact_scale(1e-12);
    let shape = DMatrix::identity(3, 3) / radius;
    Ok((acs, shape))
}

/// Unit 3-sphere in fibration coordinates (psi, theta, phi), valid for
/// theta in (0, pi): g = eta x eta + (d theta^2 + sin^2 theta d phi^2) / 4
/// with eta = (d psi + cos theta d phi) / 2.
pub fn hopf_chart() -> ChartMetric {
    ChartMetric::new(
        3,
        Arc::new(|x: &[f64]| {
            let ct = x[1].cos();
            let mut g = DMatrix::zeros(3, 3);
            g[(0, 0)] = 0.25;
            g[(1, 1)] = 0.25;
            g[(2, 2)] = 0.25;
            g[(0, 2)] = 0.25 * ct;
            g[(2, 0)] = 0.25 * ct;
            g
        }),
    )
}

/// Heisenberg group chart (x, y, z) with g = (dz - x dy)^2 + (dx^2 + dy^2)/2;
/// the orthonormal frame (dz-dual, sqrt2 d/dx, sqrt2 (d/dy + x d/dz)) has the
/// single bracket [e_2, e_3] = 2 e_1.
pub fn nil_chart() -> ChartMetric {
    ChartMetric::new(
        3,
        Arc::new(|x: &[f64]| {
            let a = x[0];
            let mut g = DMatrix::zeros(3, 3);
            g[(0, 0)] = 0.5;
            g[(1, 1)] = 0.5 + a * a;
            g[(2, 2)] = 1.0;
            g[(1, 2)] = -a;
            g[(2, 1)] = -a;
            g
        }),
    )
}

/// Line bundle over the hyperbolic plane in coordinates (theta, x, y) with
/// y > 0: g = eta x eta + (dx^2 + dy^2)/y^2, eta = d theta - 2 dx / y. The
/// Reeb frame matches the SL(2,R)-cover model invariants.
pub fn sl2r_chart() -> ChartMetric {
    ChartMetric::new(
        3,
        Arc::new(|x: &[f64]| {
            let y = x[2];
            let mut g = DMatrix::zeros(3, 3);
            g[(0, 0)] = 1.0;
            g[(0, 1)] = -2.0 / y;
            g[(1, 0)] = -2.0 / y;
            g[(1, 1)] = 5.0 / (y * y);
            g[(2, 2)] = 1.0 / (y * y);
            g
        }),
    )
}
