//! Almost contact metric structures (zeta, eta, Phi, g) on homogeneous
//! frames: validation of the defining identities, ±(H,F) metric
//! deformations, Reeb-field diagnostics, the O'Neill mixing tensor of the
//! Reeb foliation, a least-squares structure classifier, Phi-sectional
//! curvature, closed-form curvature of deformed metrics, and a shape-operator
//! classifier for structures induced on hypersurfaces.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};
use crate::frame::{
    covariant_derivative_endomorphism, curvature_frame, gram_schmidt, levi_civita_frame,
    CurvatureReport, StructureFrame,
};

/// Residual bound for the defining identities on an exact frame.
pub const ACS_TOL: f64 = 1e-12;
/// Default tolerance for the least-squares structure classifier.
pub const CLASSIFY_TOL: f64 = 1e-8;
/// Bound under which the Reeb flow counts as metric-preserving.
pub const KILLING_TOL: f64 = 1e-10;

/// Rescaling of an almost contact metric structure: zeta* = zeta/H,
/// eta* = H eta, Phi* = sign Phi, g* = F^2 g + (H^2 - F^2) eta x eta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationParams {
    pub sign: f64,
    pub h: f64,
    pub f: f64,
}

impl DeformationParams {
    pub fn new(sign: f64, h: f64, f: f64) -> Result<Self> {
        if sign != 1.0 && sign != -1.0 {
            return Err(GeomError::InvalidProblem(format!(
                "deformation sign must be +1 or -1, got {sign}"
            )));
        }
        if !(h > 0.0 && h.is_finite() && f > 0.0 && f.is_finite()) {
            return Err(GeomError::InvalidProblem(format!(
                "deformation scales must be positive and finite, got H = {h}, F = {f}"
            )));
        }
        Ok(Self { sign, h, f })
    }

    pub fn identity() -> Self {
        Self {
            sign: 1.0,
            h: 1.0,
            f: 1.0,
        }
    }
}

/// Named residuals of the defining identities, all of which vanish on an
/// exact almost contact metric structure.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub residuals: BTreeMap<String, f64>,
    pub max_residual: f64,
}

impl ValidationReport {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }

    /// The largest residual with its name.
    pub fn worst(&self) -> (&str, f64) {
        self.residuals
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k.as_str(), *v))
            .expect("report always carries residuals")
    }
}

/// Almost contact metric structure on a homogeneous frame. Components of
/// `zeta` (vector), `eta` (covector), and `phi` (endomorphism) refer to the
/// frame's stored basis. `contact_scale` records the constant a with
/// d eta(X,Y) = a g(X, Phi Y) when that relation holds.
#[derive(Debug, Clone)]
pub struct AlmostContactStructure {
    pub frame: StructureFrame,
    pub zeta: DVector<f64>,
    pub eta: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub contact_scale: Option<f64>,
}

impl AlmostContactStructure {
    pub fn new(
        frame: StructureFrame,
        zeta: DVector<f64>,
        eta: DVector<f64>,
        phi: DMatrix<f64>,
        contact_scale: Option<f64>,
    ) -> Result<Self> {
        let d = frame.dim;
        if d.is_multiple_of(2) {
            return Err(GeomError::EvenDimension(d));
        }
        if zeta.len() != d || eta.len() != d {
            return Err(GeomError::DimensionMismatch {
                expected: d,
                got: zeta.len().max(eta.len()),
            });
        }
        if phi.nrows() != d || phi.ncols() != d {
            return Err(GeomError::DimensionMismatch {
                expected: d,
                got: phi.nrows(),
            });
        }
        Ok(Self {
            frame,
            zeta,
            eta,
            phi,
            contact_scale,
        })
    }

    /// Builds the structure with eta forced to the metric dual of zeta.
    pub fn from_reeb(frame: StructureFrame, zeta: DVector<f64>, phi: DMatrix<f64>) -> Result<Self> {
        let eta = &frame.metric * &zeta;
        Self::new(frame, zeta, eta, phi, None)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.frame.dim
    }

    /// eta(X) for a vector of frame components.
    #[inline]
    pub fn eta_of(&self, x: &DVector<f64>) -> f64 {
        self.eta.dot(x)
    }

    /// d eta(e_i, e_j) under the convention
    /// 2 d eta(X,Y) = X eta(Y) - Y eta(X) - eta([X,Y]), which for
    /// frame-constant eta reduces to -eta([e_i,e_j]) / 2.
    pub fn d_eta(&self, i: usize, j: usize) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for k in 0..d {
            s += self.eta[k] * self.frame.c(k, i, j);
        }
        -0.5 * s
    }

    /// Evaluates every defining identity and returns the named residuals:
    /// eta(zeta) = 1, |zeta| = 1, eta = g(., zeta), Phi^2 = -Id + zeta x eta,
    /// g(Phi X, Phi Y) = g(X,Y) - eta(X) eta(Y), Phi(zeta) = 0, eta o Phi = 0.
    pub fn validate(&self) -> ValidationReport {
        let d = self.dim();
        let g = &self.frame.metric;
        let mut residuals = BTreeMap::new();

        let eta_of_zeta = (self.eta.dot(&self.zeta) - 1.0).abs();
        residuals.insert("eta_of_zeta".into(), eta_of_zeta);

        let zeta_norm = self.frame.inner(&self.zeta, &self.zeta).max(0.0).sqrt();
        residuals.insert("zeta_unit".into(), (zeta_norm - 1.0).abs());

        let dual = g * &self.zeta;
        residuals.insert(
            "eta_matches_metric_dual".into(),
            (&self.eta - &dual).abs().max(),
        );

        let phi2 = &self.phi * &self.phi;
        let mut phi_sq: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let target = -f64::from(u8::from(i == j)) + self.zeta[i] * self.eta[j];
                phi_sq = phi_sq.max((phi2[(i, j)] - target).abs());
            }
        }
        residuals.insert("phi_squared".into(), phi_sq);

        let compat = self.phi.transpose() * g * &self.phi;
        let mut compat_res: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let target = g[(i, j)] - self.eta[i] * self.eta[j];
                compat_res = compat_res.max((compat[(i, j)] - target).abs());
            }
        }
        residuals.insert("phi_metric_compat".into(), compat_res);

        residuals.insert("phi_of_zeta".into(), (&self.phi * &self.zeta).abs().max());
        residuals.insert(
            "eta_circ_phi".into(),
            (self.eta.transpose() * &self.phi).abs().max(),
        );

        let max_residual = residuals.values().fold(0.0f64, |m, v| m.max(*v));
        ValidationReport {
            residuals,
            max_residual,
        }
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if !report.is_valid(1e-8) {
            let (name, value) = report.worst();
            return Err(GeomError::InvalidFrame(format!(
                "almost contact identities violated: {name} residual {value:.3e}"
            )));
        }
        Ok(())
    }

    /// Least-squares fit of the constant a in d eta(X,Y) = a g(X, Phi Y) over
    /// all frame pairs, returned with the sup-norm misfit.
    pub fn measure_contact_scale(&self) -> (f64, f64) {
        let d = self.dim();
        let g = &self.frame.metric;
        let gphi = g * &self.phi;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            for j in 0..d {
                num += self.d_eta(i, j) * gphi[(i, j)];
                den += gphi[(i, j)] * gphi[(i, j)];
            }
        }
        let a = if den > 0.0 { num / den } else { 0.0 };
        let mut misfit: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                misfit = misfit.max((self.d_eta(i, j) - a * gphi[(i, j)]).abs());
            }
        }
        (a, misfit)
    }

    /// Stores the measured contact scale when the fit closes below `tol`,
    /// clears it otherwise.
    pub fn with_measured_contact_scale(mut self, tol: f64) -> Self {
        let (a, misfit) = self.measure_contact_scale();
        self.contact_scale = if misfit <= tol { Some(a) } else { None };
        self
    }

    /// Rewrites the structure in an orthonormal basis whose first vector is
    /// zeta. Exact (returns a clone) when zeta already is the first basis
    /// vector.
    pub fn reeb_first(&self) -> Result<Self> {
        let d = self.dim();
        if self.zeta[0] == 1.0 && self.zeta.iter().skip(1).all(|&v| v == 0.0) {
            return Ok(self.clone());
        }
        let mut drop_idx = 0;
        let mut best = 0.0;
        for i in 0..d {
            if self.zeta[i].abs() > best {
                best = self.zeta[i].abs();
                drop_idx = i;
            }
        }
        if best == 0.0 {
            return Err(GeomError::InvalidFrame("Reeb vector is zero".into()));
        }
        let mut cols = vec![self.zeta.clone()];
        for i in 0..d {
            if i != drop_idx {
                cols.push(DVector::from_fn(d, |r, _| f64::from(u8::from(r == i))));
            }
        }
        let seed = DMatrix::from_columns(&cols);
        let t = gram_schmidt(&self.frame.metric, &seed)?;
        // Columns of t are g-orthonormal, so the inverse is t^T g.
        let t_inv = t.transpose() * &self.frame.metric;
        let frame = self.frame.rebased(&t);
        let zeta = &t_inv * &self.zeta;
        let eta = t.transpose() * &self.eta;
        let phi = &t_inv * &self.phi * &t;
        Ok(Self {
            frame,
            zeta,
            eta,
            phi,
            contact_scale: self.contact_scale,
        })
    }

    /// ±(H,F)-deformation, returned in the orthonormal frame of the deformed
    /// metric (zeta*/1 first, then horizontal vectors scaled by 1/F). The
    /// contact scale transforms as a* = sign a H / F^2.
    #[allow(clippy::needless_range_loop)]
    pub fn hf_deform(&self, p: &DeformationParams) -> Result<Self> {
        self.ensure_valid()?;
        let s = self.reeb_first()?;
        let d = s.dim();
        let scale = |idx: usize| if idx == 0 { p.h } else { p.f };
        let mut c = vec![vec![vec![0.0; d]; d]; d];
        for k in 0..d {
            for a in 0..d {
                for b in 0..d {
                    c[k][a][b] = s.frame.c(k, a, b) * scale(k) / (scale(a) * scale(b));
                }
            }
        }
        let frame = StructureFrame::new(d, &c, DMatrix::identity(d, d))?;
        let zeta = DVector::from_fn(d, |r, _| f64::from(u8::from(r == 0)));
        let eta = zeta.clone();
        let phi = DMatrix::from_fn(d, d, |i, j| p.sign * s.phi[(i, j)] * scale(j) / scale(i));
        let contact_scale = s.contact_scale.map(|a| p.sign * a * p.h / (p.f * p.f));
        Ok(Self {
            frame,
            zeta,
            eta,
            phi,
            contact_scale,
        })
    }
}

/// Sup-norm of the Lie derivative of the metric along zeta over all frame
/// pairs: zero exactly when the Reeb flow is isometric.
pub fn killing_residual_zeta(acs: &AlmostContactStructure) -> f64 {
    lie_metric_residual(acs, false)
}

/// Same Lie derivative restricted to horizontal arguments (both slots
/// projected off zeta): the defining bound for a bundle-like metric.
pub fn bundle_like_residual(acs: &AlmostContactStructure) -> f64 {
    lie_metric_residual(acs, true)
}

fn lie_metric_residual(acs: &AlmostContactStructure, horizontal_only: bool) -> f64 {
    let d = acs.dim();
    let g = &acs.frame.metric;
    // Horizontal projector in frame components: X - eta(X) zeta.
    let project = |x: &DVector<f64>| -> DVector<f64> {
        if horizontal_only {
            x - acs.eta.dot(x) * &acs.zeta
        } else {
            x.clone()
        }
    };
    let mut worst: f64 = 0.0;
    for i in 0..d {
        let ei = DVector::from_fn(d, |r, _| f64::from(u8::from(r == i)));
        let xi = project(&ei);
        for j in 0..d {
            let ej = DVector::from_fn(d, |r, _| f64::from(u8::from(r == j)));
            let xj = project(&ej);
            let bi = acs.frame.bracket(&acs.zeta, &xi);
            let bj = acs.frame.bracket(&acs.zeta, &xj);
            let lie = -(bi.transpose() * g * &xj)[(0, 0)] - (xi.transpose() * g * &bj)[(0, 0)];
            worst = worst.max(lie.abs());
        }
    }
    worst
}

/// The four equivalent statements that Reeb integral curves are geodesics,
/// evaluated independently.
#[derive(Debug, Clone)]
pub struct ReebDiagnostics {
    /// nabla_zeta zeta = 0.
    pub geodesic: bool,
    /// L_zeta eta = 0.
    pub eta_invariant: bool,
    /// (nabla_zeta Phi)(zeta) = 0.
    pub phi_transport: bool,
    /// d eta(zeta, .) = 0.
    pub reeb_contraction: bool,
    pub residuals: BTreeMap<String, f64>,
    pub all_hold: bool,
}

/// Evaluates the four geodesic-Reeb statements at `tol`. They are equivalent
/// for exact structures, so the booleans must agree; a split verdict means
/// the tolerance sits inside the numerical noise band and is reported as an
/// error rather than resolved silently.
pub fn geodesic_reeb_checks(acs: &AlmostContactStructure, tol: f64) -> Result<ReebDiagnostics> {
    acs.ensure_valid()?;
    let d = acs.dim();
    let conn = levi_civita_frame(&acs.frame)?;

    let accel = conn.derive(&acs.zeta, &acs.zeta);
    let r_geodesic = accel.abs().max();

    let mut r_eta: f64 = 0.0;
    let mut r_deta: f64 = 0.0;
    for i in 0..d {
        let ei = DVector::from_fn(d, |r, _| f64::from(u8::from(r == i)));
        let br = acs.frame.bracket(&acs.zeta, &ei);
        // (L_zeta eta)(e_i) = -eta([zeta, e_i]) for frame-constant eta.
        r_eta = r_eta.max(acs.eta.dot(&br).abs());
        // d eta(zeta, e_i) = -eta([zeta, e_i]) / 2.
        r_deta = r_deta.max(0.5 * acs.eta.dot(&br).abs());
    }

    let grads = covariant_derivative_endomorphism(&acs.frame, &acs.phi)?;
    let mut dphi_zeta = DMatrix::zeros(d, d);
    for (i, gi) in grads.iter().enumerate() {
        dphi_zeta += acs.zeta[i] * gi;
    }
    let r_phi = (dphi_zeta * &acs.zeta).abs().max();

    let mut residuals = BTreeMap::new();
    residuals.insert("reeb_acceleration".into(), r_geodesic);
    residuals.insert("eta_lie_derivative".into(), r_eta);
    residuals.insert("phi_transport_on_reeb".into(), r_phi);
    residuals.insert("d_eta_reeb_slot".into(), r_deta);

    let flags = [r_geodesic <= tol, r_eta <= tol, r_phi <= tol, r_deta <= tol];
    if flags.iter().any(|&f| f != flags[0]) {
        let detail: Vec<String> = residuals
            .iter()
            .map(|(k, v)| format!("{k} = {v:.3e}"))
            .collect();
        return Err(GeomError::InconsistentTolerance(format!(
            "the four geodesic-Reeb statements disagree at tolerance {tol:.1e} ({})",
            detail.join(", ")
        )));
    }
    Ok(ReebDiagnostics {
        geodesic: flags[0],
        eta_invariant: flags[1],
        phi_transport: flags[2],
        reeb_contraction: flags[3],
        residuals,
        all_hold: flags[0],
    })
}

/// The Reeb slot of the O'Neill mixing tensor, X -> A_X zeta, on the
/// horizontal sub-bundle, with consistency residuals against the exterior
/// derivative of eta.
#[derive(Debug, Clone)]
pub struct ATensorReport {
    /// Structure rewritten with zeta as the first basis vector; the matrix
    /// below uses this basis.
    pub structure: AlmostContactStructure,
    /// Column i holds A_{e_i} zeta (zero in the zeta column).
    pub on_reeb: DMatrix<f64>,
    pub residual_norms: BTreeMap<String, f64>,
}

/// Computes A_X zeta = horizontal part of nabla_X zeta for horizontal X.
/// Requires the metric to be bundle-like for the Reeb foliation (horizontal
/// inner products invariant along zeta), which makes A the only mixing term.
/// Verifies g(A_X zeta, Y) = d eta(X,Y) and the antisymmetry
/// g(A_X zeta, Y) = -g(zeta, A_X Y) on the frame.
pub fn a_tensor_on_reeb(acs: &AlmostContactStructure) -> Result<ATensorReport> {
    acs.ensure_valid()?;
    let s = acs.reeb_first()?;
    let blr = bundle_like_residual(&s);
    if blr > KILLING_TOL {
        return Err(GeomError::NotBundleLike { residual: blr });
    }
    let d = s.dim();
    let g = &s.frame.metric;
    let conn = levi_civita_frame(&s.frame)?;

    let mut on_reeb = DMatrix::zeros(d, d);
    for i in 1..d {
        let ei = DVector::from_fn(d, |r, _| f64::from(u8::from(r == i)));
        let nz = conn.derive(&ei, &s.zeta);
        let horiz = &nz - s.eta.dot(&nz) * &s.zeta;
        for r in 0..d {
            on_reeb[(r, i)] = horiz[r];
        }
    }

    let mut vs_deta: f64 = 0.0;
    let mut antisym: f64 = 0.0;
    for i in 1..d {
        let ai = on_reeb.column(i).into_owned();
        for j in 1..d {
            let ej = DVector::from_fn(d, |r, _| f64::from(u8::from(r == j)));
            let slot = (ai.transpose() * g * &ej)[(0, 0)];
            vs_deta = vs_deta.max((slot - s.d_eta(i, j)).abs());
            // A_{e_i} e_j = vertical part of [e_i, e_j] / 2 for horizontal
            // arguments, so g(zeta, A_{e_i} e_j) = eta([e_i,e_j]) / 2.
            let ei = DVector::from_fn(d, |r, _| f64::from(u8::from(r == i)));
            let vert = 0.5 * s.eta.dot(&s.frame.bracket(&ei, &ej));
            antisym = antisym.max((slot + vert).abs());
        }
    }
    let mut residual_norms = BTreeMap::new();
    residual_norms.insert("bundle_like".into(), blr);
    residual_norms.insert("reeb_slot_vs_d_eta".into(), vs_deta);
    residual_norms.insert("mixed_antisymmetry".into(), antisym);
    if vs_deta > 1e-10 {
        return Err(GeomError::SolverFailure(format!(
            "mixing tensor does not reproduce d eta (residual {vs_deta:.3e})"
        )));
    }
    Ok(ATensorReport {
        structure: s,
        on_reeb,
        residual_norms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureTag {
    DeformedSasakian,
    ProductKahler,
    Neither,
}

/// Outcome of the covariant-derivative classifier: the best constant b in
/// (nabla_X Phi)(Y) = b (g(X,Y) zeta - eta(Y) X) with its sup-norm misfit.
#[derive(Debug, Clone)]
pub struct StructureClass {
    pub tag: StructureTag,
    pub b: f64,
    pub residual: f64,
}

/// Least-squares fit of b over all frame pairs. Tag rules: misfit below
/// `tol` with |b| > tol is a deformed Sasakian structure; misfit below `tol`
/// with |b| <= tol has parallel Phi and closed eta (local product of a line
/// or circle with a Kahler factor); anything else is Neither.
pub fn classify(acs: &AlmostContactStructure, tol: f64) -> Result<StructureClass> {
    acs.ensure_valid()?;
    let d = acs.dim();
    let g = &acs.frame.metric;
    let grads = covariant_derivative_endomorphism(&acs.frame, &acs.phi)?;

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..d {
        for j in 0..d {
            let ei = DVector::from_fn(d, |r, _| f64::from(u8::from(r == i)));
            let dij = grads[i].column(j).into_owned();
            let eij = g[(i, j)] * &acs.zeta - acs.eta[j] * &ei;
            num += (dij.transpose() * g * &eij)[(0, 0)];
            den += (eij.transpose() * g * &eij)[(0, 0)];
        }
    }
    let b = if den > 0.0 { num / den } else { 0.0 };

    let mut residual: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let ei = DVector::from_fn(d, |r, _| f64::from(u8::from(r == i)));
            let dij = grads[i].column(j).into_owned();
            let eij = g[(i, j)] * &acs.zeta - acs.eta[j] * &ei;
            residual = residual.max((dij - b * eij).abs().max());
        }
    }

    let (tag, b) = if residual < tol {
        if b.abs() > tol {
            (StructureTag::DeformedSasakian, b)
        } else {
            (StructureTag::ProductKahler, 0.0)
        }
    } else {
        (StructureTag::Neither, b)
    };
    Ok(StructureClass { tag, b, residual })
}

/// Sectional curvature of the plane spanned by a horizontal X and Phi X.
pub fn phi_sectional(acs: &AlmostContactStructure, x: &DVector<f64>) -> Result<f64> {
    acs.ensure_valid()?;
    let eta_x = acs.eta_of(x);
    if eta_x.abs() > 1e-10 {
        return Err(GeomError::UnsupportedInput(format!(
            "Phi-plane curvature needs a horizontal direction (eta(X) = {eta_x:.3e})"
        )));
    }
    let y = &acs.phi * x;
    let report = curvature_frame(&acs.frame)?;
    report.sectional(&acs.frame.metric, x, &y)
}

/// Closed-form curvature of a ±(H,F)-deformation of a structure whose Reeb
/// flow is isometric, together with the exact frame curvature of the
/// deformed metric and their disagreement.
#[derive(Debug, Clone)]
pub struct DeformedRicciReport {
    /// The deformed structure (orthonormal deformed frame, zeta* first).
    pub deformed: AlmostContactStructure,
    /// Closed-form Ricci tensor in that frame.
    pub closed_form_ricci: DMatrix<f64>,
    /// Closed-form Rc*(zeta*, zeta*) = (dim - 1) (a H / F^2)^2.
    pub reeb_reeb: f64,
    /// Closed-form K*(X, zeta*) = (a H / F^2)^2 for unit horizontal X.
    pub reeb_sectional: f64,
    /// Exact curvature of the deformed frame.
    pub exact: CurvatureReport,
    pub residual_norms: BTreeMap<String, f64>,
}

/// Assembles the deformed-curvature closed forms
///   Rc*(zeta*, zeta*) = (dim-1) a~^2,
///   Rc*(X,Y) = Rc_perp(X,Y)/F^2 - 2 a~^2 g*(X,Y),
///   K*(X, zeta*) = a~^2,
///   K*(X, Phi* X) = K_perp(plane)/F^2 - 3 a~^2,
/// with a~ = a H / F^2 the deformed contact scale, Rc_perp = Rc + 2 a^2 g
/// the transverse Ricci tensor of the Reeb foliation, and K_perp(plane) =
/// K(X, Phi X) + 3 a^2 its sectional curvature, then cross-checks each
/// against the exact frame curvature of the deformed metric.
pub fn deformed_ricci(
    acs: &AlmostContactStructure,
    p: &DeformationParams,
) -> Result<DeformedRicciReport> {
    acs.ensure_valid()?;
    let s = acs.reeb_first()?;
    let kill = killing_residual_zeta(&s);
    if kill > KILLING_TOL {
        return Err(GeomError::NotKContact { residual: kill });
    }
    let a = s.contact_scale.ok_or_else(|| {
        GeomError::UnsupportedInput(
            "deformation curvature formulas need the contact scale a with d eta = a g(., Phi .)"
                .into(),
        )
    })?;
    let (a_fit, a_misfit) = s.measure_contact_scale();

    let d = s.dim();
    let base = curvature_frame(&s.frame)?;
    let deformed = s.hf_deform(p)?;
    let exact = curvature_frame(&deformed.frame)?;

    let atil2 = (a * p.h / (p.f * p.f)).powi(2);
    let f2 = p.f * p.f;

    let mut closed = DMatrix::zeros(d, d);
    closed[(0, 0)] = (d as f64 - 1.0) * atil2;
    for i in 1..d {
        for j in 1..d {
            let transverse = base.ricci[(i, j)] + 2.0 * a * a * f64::from(u8::from(i == j));
            closed[(i, j)] = transverse / f2 - 2.0 * atil2 * f64::from(u8::from(i == j));
        }
    }

    let ricci_gap = (&closed - &exact.ricci).abs().max();

    // K*(X, zeta*) on every horizontal basis vector and one mixed direction.
    let zeta_vec = deformed.zeta.clone();
    let mut reeb_gap: f64 = 0.0;
    let mut probes: Vec<DVector<f64>> = (1..d)
        .map(|i| DVector::from_fn(d, |r, _| f64::from(u8::from(r == i))))
        .collect();
    if d >= 3 {
        let mut mixed = DVector::zeros(d);
        mixed[1] = 0.6;
        mixed[2] = 0.8;
        probes.push(mixed);
    }
    for x in &probes {
        let k = exact.sectional(&deformed.frame.metric, x, &zeta_vec)?;
        reeb_gap = reeb_gap.max((k - atil2).abs());
    }

    // Phi-plane sectional curvature: closed reading uses the plane-normalized
    // transverse curvature; the vector-scaled alternative reading is recorded
    // for documentation and is expected to disagree unless F = 1.
    let mut phi_plane_gap: f64 = 0.0;
    let mut alt_reading_gap: f64 = 0.0;
    for i in 1..d {
        let x = DVector::from_fn(d, |r, _| f64::from(u8::from(r == i)));
        let y = &deformed.phi * &x;
        if y.abs().max() == 0.0 {
            continue;
        }
        // Undeformed plane (e_i, Phi e_i) in the base frame.
        let x0 = x.clone();
        let y0 = &s.phi * &x0;
        let k_base = base.sectional(&s.frame.metric, &x0, &y0)?;
        let k_perp = k_base + 3.0 * a * a;
        let closed_k = k_perp / f2 - 3.0 * atil2;
        let alt_k = k_perp * f2 - 3.0 * atil2;
        let k_exact = exact.sectional(&deformed.frame.metric, &x, &y)?;
        phi_plane_gap = phi_plane_gap.max((closed_k - k_exact).abs());
        alt_reading_gap = alt_reading_gap.max((alt_k - k_exact).abs());
    }

    let mut residual_norms = BTreeMap::new();
    residual_norms.insert("killing".into(), kill);
    residual_norms.insert("contact_scale_fit".into(), (a_fit - a).abs().max(a_misfit));
    residual_norms.insert("ricci_closed_vs_exact".into(), ricci_gap);
    residual_norms.insert("reeb_sectional_vs_exact".into(), reeb_gap);
    residual_norms.insert("phi_plane_closed_vs_exact".into(), phi_plane_gap);
    residual_norms.insert("phi_plane_vector_scaled_reading".into(), alt_reading_gap);

    Ok(DeformedRicciReport {
        deformed,
        closed_form_ricci: closed,
        reeb_reeb: (d as f64 - 1.0) * atil2,
        reeb_sectional: atil2,
        exact,
        residual_norms,
    })
}

/// Outcome of fitting a shape operator to L = alpha Id + beta zeta x eta.
#[derive(Debug, Clone)]
pub struct ShapeClassification {
    pub tag: StructureTag,
    pub alpha: f64,
    pub beta: f64,
    pub residual: f64,
}

/// Least-squares fit of (alpha, beta) in L = alpha Id + beta zeta x eta for
/// a shape operator L given in the frame of `acs`. L must be self-adjoint
/// with respect to the frame metric. alpha != 0 classifies the induced
/// structure as deformed Sasakian, alpha = 0 as a product; a misfit above
/// `tol` yields Neither.
pub fn shape_classify(
    l: &DMatrix<f64>,
    acs: &AlmostContactStructure,
    tol: f64,
) -> Result<ShapeClassification> {
    acs.ensure_valid()?;
    let d = acs.dim();
    if l.nrows() != d || l.ncols() != d {
        return Err(GeomError::DimensionMismatch {
            expected: d,
            got: l.nrows(),
        });
    }
    let g = &acs.frame.metric;
    // Self-adjointness w.r.t. g: g L = (g L)^T.
    let gl = g * l;
    let sym_res = (&gl - gl.transpose()).abs().max();
    if sym_res > 1e-10 {
        return Err(GeomError::NotSelfAdjoint { residual: sym_res });
    }

    // Normal equations for the Frobenius projection onto span{Id, zeta x eta}.
    let p2 = &acs.zeta * acs.eta.transpose();
    let g11 = d as f64;
    let g12 = p2.trace();
    let g22 = p2.iter().map(|v| v * v).sum::<f64>();
    let b1 = l.trace();
    let b2 = l.iter().zip(p2.iter()).map(|(x, y)| x * y).sum::<f64>();
    let det = g11 * g22 - g12 * g12;
    if det.abs() < 1e-14 {
        return Err(GeomError::InvalidFrame(
            "identity and zeta x eta are linearly dependent in this frame".into(),
        ));
    }
    let alpha = (b1 * g22 - b2 * g12) / det;
    let beta = (g11 * b2 - g12 * b1) / det;

    let fit = DMatrix::identity(d, d) * alpha + &p2 * beta;
    let residual = (l - fit).abs().max();

    let tag = if residual < tol {
        if alpha.abs() > tol {
            StructureTag::DeformedSasakian
        } else {
            StructureTag::ProductKahler
        }
    } else {
        StructureTag::Neither
    };
    Ok(ShapeClassification {
        tag,
        alpha,
        beta,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{abelian_frame, milnor_frame};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Unit round 3-sphere: Milnor constants (2,2,2), zeta = e_1,
    /// Phi: e_2 -> e_3 -> -e_2.
    fn sphere_structure() -> AlmostContactStructure {
        let frame = milnor_frame(2.0, 2.0, 2.0);
        let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let mut phi = DMatrix::zeros(3, 3);
        phi[(2, 1)] = 1.0;
        phi[(1, 2)] = -1.0;
        AlmostContactStructure::from_reeb(frame, zeta, phi)
            .unwrap()
            .with_measured_contact_scale(1e-12)
    }

    /// Flat abelian frame with the same (zeta, Phi) pattern: parallel Phi,
    /// closed eta.
    fn product_structure() -> AlmostContactStructure {
        let frame = abelian_frame(3);
        let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let mut phi = DMatrix::zeros(3, 3);
        phi[(2, 1)] = 1.0;
        phi[(1, 2)] = -1.0;
        AlmostContactStructure::from_reeb(frame, zeta, phi).unwrap()
    }

    /// Structure whose Reeb curves are not geodesics: [e_1, e_2] = e_1 with
    /// zeta = e_1 pushes the flow off itself.
    fn non_geodesic_structure() -> AlmostContactStructure {
        let mut c = vec![vec![vec![0.0; 3]; 3]; 3];
        c[0][0][1] = 1.0;
        c[0][1][0] = -1.0;
        let frame = StructureFrame::new(3, &c, DMatrix::identity(3, 3)).unwrap();
        let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let mut phi = DMatrix::zeros(3, 3);
        phi[(2, 1)] = 1.0;
        phi[(1, 2)] = -1.0;
        AlmostContactStructure::from_reeb(frame, zeta, phi).unwrap()
    }

    #[test]
    fn sphere_structure_validates() {
        let s = sphere_structure();
        let report = s.validate();
        assert!(report.is_valid(ACS_TOL), "worst: {:?}", report.worst());
        assert_relative_eq!(s.contact_scale.unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn scaled_reeb_flagged() {
        let frame = milnor_frame(2.0, 2.0, 2.0);
        let zeta = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        let eta = zeta.clone();
        let mut phi = DMatrix::zeros(3, 3);
        phi[(2, 1)] = 1.0;
        phi[(1, 2)] = -1.0;
        let s = AlmostContactStructure::new(frame, zeta, eta, phi, None).unwrap();
        let report = s.validate();
        assert!(!report.is_valid(ACS_TOL));
        assert!(report.residuals["eta_of_zeta"] > 1.0);
        assert!(report.residuals["zeta_unit"] > 0.5);
    }

    #[test]
    fn even_dimension_rejected() {
        let frame = abelian_frame(4);
        let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let eta = zeta.clone();
        let phi = DMatrix::zeros(4, 4);
        let err = AlmostContactStructure::new(frame, zeta, eta, phi, None).unwrap_err();
        assert!(matches!(err, GeomError::EvenDimension(4)));
    }

    #[test]
    fn identity_deformation_is_identity() {
        let s = sphere_structure();
        let t = s.hf_deform(&DeformationParams::identity()).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(t.frame.c(k, i, j), s.frame.c(k, i, j));
                }
            }
        }
        assert_eq!(t.phi, s.phi);
        assert_eq!(t.zeta, s.zeta);
        assert_eq!(t.contact_scale, s.contact_scale);
    }

    #[test]
    fn deformation_functor_law() {
        let s = sphere_structure();
        let c1 = 0.7;
        let c2 = 1.9;
        let step1 = s
            .hf_deform(&DeformationParams::new(1.0, 1.0, c1).unwrap())
            .unwrap();
        let step2 = step1
            .hf_deform(&DeformationParams::new(1.0, 1.0, c2).unwrap())
            .unwrap();
        let direct = s
            .hf_deform(&DeformationParams::new(1.0, 1.0, c1 * c2).unwrap())
            .unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_relative_eq!(
                        step2.frame.c(k, i, j),
                        direct.frame.c(k, i, j),
                        epsilon = 1e-12
                    );
                }
            }
        }
        assert!((step2.phi - direct.phi).abs().max() < 1e-12);
        assert_relative_eq!(
            step2.contact_scale.unwrap(),
            direct.contact_scale.unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn deformation_preserves_validity_and_killing() {
        let s = sphere_structure();
        assert!(killing_residual_zeta(&s) < 1e-14);
        let p = DeformationParams::new(-1.0, 0.6, 2.3).unwrap();
        let t = s.hf_deform(&p).unwrap();
        let report = t.validate();
        assert!(report.is_valid(ACS_TOL), "worst: {:?}", report.worst());
        assert!(killing_residual_zeta(&t) < 1e-14);
        // a* = sign a H / F^2, cross-checked against a fresh fit.
        let (a_fit, misfit) = t.measure_contact_scale();
        assert!(misfit < 1e-14);
        assert_relative_eq!(a_fit, -0.6 / (2.3 * 2.3), epsilon = 1e-12);
        assert_relative_eq!(t.contact_scale.unwrap(), a_fit, epsilon = 1e-12);
    }

    #[test]
    fn contact_preserving_deformation() {
        // H = F^2 keeps |a*| = 1.
        let s = sphere_structure();
        let f = 1.4;
        let t = s
            .hf_deform(&DeformationParams::new(1.0, f * f, f).unwrap())
            .unwrap();
        assert_relative_eq!(t.contact_scale.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn geodesic_checks_hold_on_sphere() {
        let s = sphere_structure();
        let diag = geodesic_reeb_checks(&s, KILLING_TOL).unwrap();
        assert!(diag.all_hold);
        assert!(diag.residuals.values().all(|&v| v < 1e-14));
    }

    #[test]
    fn geodesic_checks_fail_coherently() {
        let s = non_geodesic_structure();
        let diag = geodesic_reeb_checks(&s, KILLING_TOL).unwrap();
        assert!(!diag.all_hold);
        assert!(!diag.geodesic && !diag.eta_invariant);
        assert_relative_eq!(diag.residuals["reeb_acceleration"], 1.0, epsilon = 1e-14);
        assert_relative_eq!(diag.residuals["d_eta_reeb_slot"], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn geodesic_checks_mixed_tolerance_is_an_error() {
        // Residuals are (1, 1, 1, 1/2); a tolerance between them splits the
        // verdict and must surface as an inconsistency.
        let s = non_geodesic_structure();
        let err = geodesic_reeb_checks(&s, 0.7).unwrap_err();
        assert!(matches!(err, GeomError::InconsistentTolerance(_)));
    }

    #[test]
    fn a_tensor_on_sphere_is_minus_phi() {
        let s = sphere_structure();
        let rep = a_tensor_on_reeb(&s).unwrap();
        for i in 1..3 {
            let x = DVector::from_fn(3, |r, _| f64::from(u8::from(r == i)));
            let expected = -(&rep.structure.phi * &x);
            let got = rep.on_reeb.column(i).into_owned();
            assert!((got - expected).abs().max() < 1e-14);
        }
        assert!(rep.residual_norms["reeb_slot_vs_d_eta"] < 1e-14);
        assert!(rep.residual_norms["mixed_antisymmetry"] < 1e-14);
    }

    #[test]
    fn a_tensor_vanishes_on_product() {
        let rep = a_tensor_on_reeb(&product_structure()).unwrap();
        assert!(rep.on_reeb.abs().max() == 0.0);
    }

    #[test]
    fn a_tensor_scales_under_deformation() {
        // (1,c)-deformation of the unit sphere: A_X zeta* = -(1/c^2) Phi* X
        // in the deformed orthonormal frame.
        let c = 1.7;
        let s = sphere_structure()
            .hf_deform(&DeformationParams::new(1.0, 1.0, c).unwrap())
            .unwrap();
        let rep = a_tensor_on_reeb(&s).unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let expected = -(1.0 / (c * c)) * (&rep.structure.phi * &x);
        let got = rep.on_reeb.column(1).into_owned();
        assert!((got - expected).abs().max() < 1e-12);
    }

    #[test]
    fn classify_models() {
        let s = sphere_structure();
        let class = classify(&s, CLASSIFY_TOL).unwrap();
        assert_eq!(class.tag, StructureTag::DeformedSasakian);
        assert_relative_eq!(class.b, 1.0, epsilon = 1e-10);
        assert!(class.residual < 1e-14);

        let p = classify(&product_structure(), CLASSIFY_TOL).unwrap();
        assert_eq!(p.tag, StructureTag::ProductKahler);
        assert_eq!(p.b, 0.0);

        // Distinct horizontal structure constants break the ansatz.
        let frame = milnor_frame(2.0, 1.0, 3.0);
        let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let mut phi = DMatrix::zeros(3, 3);
        phi[(2, 1)] = 1.0;
        phi[(1, 2)] = -1.0;
        let odd = AlmostContactStructure::from_reeb(frame, zeta, phi).unwrap();
        let n = classify(&odd, CLASSIFY_TOL).unwrap();
        assert_eq!(n.tag, StructureTag::Neither);
        assert!(n.residual > 0.1);
    }

    #[test]
    fn classify_covariance_under_deformation() {
        let s = sphere_structure();
        let c = 0.5;
        let minus = s
            .hf_deform(&DeformationParams::new(-1.0, 1.0, c).unwrap())
            .unwrap();
        let class = classify(&minus, CLASSIFY_TOL).unwrap();
        assert_eq!(class.tag, StructureTag::DeformedSasakian);
        assert_relative_eq!(class.b, -4.0, epsilon = 1e-10);
    }

    #[test]
    fn classify_is_basis_independent() {
        // Same sphere with zeta moved to the last slot: the rebase path must
        // reproduce b = 1.
        let frame = milnor_frame(2.0, 2.0, 2.0);
        // Cyclic relabel e1 -> e3: zeta = e_3, Phi: e_1 -> e_2 -> -e_1.
        let zeta = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let mut phi = DMatrix::zeros(3, 3);
        phi[(1, 0)] = 1.0;
        phi[(0, 1)] = -1.0;
        let s = AlmostContactStructure::from_reeb(frame, zeta, phi).unwrap();
        assert!(s.validate().is_valid(ACS_TOL));
        let r = s.reeb_first().unwrap();
        assert!(r.validate().is_valid(1e-12));
        let class = classify(&r, CLASSIFY_TOL).unwrap();
        assert_eq!(class.tag, StructureTag::DeformedSasakian);
        assert_relative_eq!(class.b, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn phi_sectional_on_sphere() {
        let s = sphere_structure();
        let probes = [
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.6, 0.8]),
        ];
        for x in &probes {
            assert_relative_eq!(phi_sectional(&s, x).unwrap(), 1.0, epsilon = 1e-12);
        }
        let err = phi_sectional(&s, &DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, GeomError::UnsupportedInput(_)));
    }

    #[test]
    fn deformed_ricci_identity_matches_base() {
        let s = sphere_structure();
        let rep = deformed_ricci(&s, &DeformationParams::identity()).unwrap();
        assert_relative_eq!(rep.reeb_reeb, 2.0, epsilon = 1e-14);
        assert!(rep.residual_norms["ricci_closed_vs_exact"] < 1e-12);
        let base = curvature_frame(&s.frame).unwrap();
        assert!((rep.exact.ricci - base.ricci).abs().max() < 1e-14);
    }

    #[test]
    fn deformed_ricci_closed_forms_match_exact() {
        let s = sphere_structure();
        let p = DeformationParams::new(1.0, 0.7, 1.3).unwrap();
        let rep = deformed_ricci(&s, &p).unwrap();
        assert!(rep.residual_norms["ricci_closed_vs_exact"] < 1e-12);
        assert!(rep.residual_norms["reeb_sectional_vs_exact"] < 1e-12);
        assert!(rep.residual_norms["phi_plane_closed_vs_exact"] < 1e-12);
        // The rejected vector-scaled reading must visibly disagree when F != 1.
        assert!(rep.residual_norms["phi_plane_vector_scaled_reading"] > 1e-2);
    }

    #[test]
    fn deformed_ricci_requires_killing_reeb() {
        let frame = milnor_frame(2.0, 1.0, 3.0);
        let zeta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let mut phi = DMatrix::zeros(3, 3);
        phi[(2, 1)] = 1.0;
        phi[(1, 2)] = -1.0;
        let s = AlmostContactStructure::from_reeb(frame, zeta, phi).unwrap();
        let err = deformed_ricci(&s, &DeformationParams::identity()).unwrap_err();
        assert!(matches!(err, GeomError::NotKContact { .. }));
    }

    #[test]
    fn shape_classify_cases() {
        let s = sphere_structure();
        let id = DMatrix::identity(3, 3);
        let c = shape_classify(&id, &s, CLASSIFY_TOL).unwrap();
        assert_eq!(c.tag, StructureTag::DeformedSasakian);
        assert_relative_eq!(c.alpha, 1.0, epsilon = 1e-12);
        assert!(c.beta.abs() < 1e-12);

        let p2 = &s.zeta * s.eta.transpose();
        let c = shape_classify(&p2, &s, CLASSIFY_TOL).unwrap();
        assert_eq!(c.tag, StructureTag::ProductKahler);
        assert_relative_eq!(c.beta, 1.0, epsilon = 1e-12);

        let mut distinct = DMatrix::zeros(3, 3);
        distinct[(0, 0)] = 1.0;
        distinct[(1, 1)] = 2.0;
        distinct[(2, 2)] = 3.0;
        let c = shape_classify(&distinct, &s, CLASSIFY_TOL).unwrap();
        assert_eq!(c.tag, StructureTag::Neither);

        let mut skew = DMatrix::identity(3, 3);
        skew[(0, 1)] = 0.3;
        let err = shape_classify(&skew, &s, CLASSIFY_TOL).unwrap_err();
        assert!(matches!(err, GeomError::NotSelfAdjoint { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn deformed_closed_forms_hold_on_random_scales(
            h in 0.2f64..5.0,
            f in 0.2f64..5.0,
            sign in prop::sample::select(vec![1.0f64, -1.0]),
        ) {
            let s = sphere_structure();
            let p = DeformationParams::new(sign, h, f).unwrap();
            let rep = deformed_ricci(&s, &p).unwrap();
            prop_assert!(rep.residual_norms["ricci_closed_vs_exact"] < 1e-10);
            prop_assert!(rep.residual_norms["reeb_sectional_vs_exact"] < 1e-10);
            prop_assert!(rep.residual_norms["phi_plane_closed_vs_exact"] < 1e-10);
        }
    }
}
