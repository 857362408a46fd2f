//! Curvature of homogeneous frames. A [`StructureFrame`] is a vector-space
//! basis with constant Lie brackets [e_i, e_j] = c^k_{ij} e_k and a constant
//! inner product. The Koszul formula then gives the Levi-Civita connection
//! algebraically and all curvature follows without differentiation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};

/// Residual bound a frame must satisfy on construction (antisymmetry,
/// Jacobi) and that the connection must satisfy after the Koszul solve
/// (torsion, metric compatibility).
pub const FRAME_TOL: f64 = 1e-12;
/// First-Bianchi bound for frame curvature reports.
pub const BIANCHI_TOL: f64 = 1e-10;

/// Homogeneous frame: constant structure constants c[k][i][j] for
/// [e_i, e_j] = sum_k c[k][i][j] e_k, and a constant metric. The constructor
/// re-expresses everything in an orthonormal basis when the supplied metric
/// is not the identity, so downstream code may assume g = I.
#[derive(Debug, Clone)]
pub struct StructureFrame {
    pub dim: usize,
    structure_constants: Vec<f64>,
    pub metric: DMatrix<f64>,
    /// Columns are the stored basis written in the caller's original basis.
    pub basis_from_input: DMatrix<f64>,
}

impl StructureFrame {
    /// Builds and validates a frame. `c` is indexed as c[k][i][j].
    pub fn new(dim: usize, c: &[Vec<Vec<f64>>], metric: DMatrix<f64>) -> Result<Self> {
        if c.len() != dim
            || c.iter()
                .any(|m| m.len() != dim || m.iter().any(|r| r.len() != dim))
        {
            return Err(GeomError::InvalidFrame(format!(
                "structure constants must be {dim}x{dim}x{dim}"
            )));
        }
        if metric.nrows() != dim || metric.ncols() != dim {
            return Err(GeomError::DimensionMismatch {
                expected: dim,
                got: metric.nrows(),
            });
        }
        let mut flat = vec![0.0; dim * dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    flat[(k * dim + i) * dim + j] = c[k][i][j];
                }
            }
        }
        let mut frame = Self {
            dim,
            structure_constants: flat,
            metric,
            basis_from_input: DMatrix::identity(dim, dim),
        };
        frame.validate_brackets()?;
        frame.validate_metric()?;
        if (&frame.metric - DMatrix::<f64>::identity(dim, dim))
            .abs()
            .max()
            > FRAME_TOL
        {
            frame = frame.orthonormalized()?;
        }
        Ok(frame)
    }

    /// Bracket coefficient c^k_{ij}.
    #[inline]
    pub fn c(&self, k: usize, i: usize, j: usize) -> f64 {
        self.structure_constants[(k * self.dim + i) * self.dim + j]
    }

    /// [X, Y] for vectors given by frame components.
    pub fn bracket(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        let mut out = DVector::zeros(d);
        for k in 0..d {
            let mut acc = 0.0;
            for i in 0..d {
                if x[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    acc += x[i] * y[j] * self.c(k, i, j);
                }
            }
            out[k] = acc;
        }
        out
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.metric * y)[(0, 0)]
    }

    fn validate_brackets(&self) -> Result<()> {
        let d = self.dim;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let anti = self.c(k, i, j) + self.c(k, j, i);
                    if anti.abs() > FRAME_TOL {
                        return Err(GeomError::InvalidFrame(format!(
                            "antisymmetry violated at c[{k}][{i}][{j}] (residual {anti:.3e})"
                        )));
                    }
                }
            }
        }
        // Jacobi: [[e_i,e_j],e_k] + cyclic = 0, expanded on structure constants.
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut s = 0.0;
                        for m in 0..d {
                            s += self.c(m, i, j) * self.c(l, m, k)
                                + self.c(m, j, k) * self.c(l, m, i)
                                + self.c(m, k, i) * self.c(l, m, j);
                        }
                        if s.abs() > FRAME_TOL {
                            return Err(GeomError::InvalidFrame(format!(
                                "Jacobi identity violated at ({i},{j},{k};{l}) (residual {s:.3e})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_metric(&self) -> Result<()> {
        let sym = (&self.metric - self.metric.transpose()).abs().max();
        if sym > FRAME_TOL {
            return Err(GeomError::InvalidFrame(format!(
                "metric not symmetric (residual {sym:.3e})"
            )));
        }
        let eig = self.metric.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min <= 0.0 {
            return Err(GeomError::InvalidFrame(format!(
                "metric not positive definite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(())
    }

    /// Gram-Schmidt against the stored metric; rewrites brackets in the new
    /// basis and records the change of basis.
    fn orthonormalized(&self) -> Result<Self> {
        let t = gram_schmidt(&self.metric, &DMatrix::identity(self.dim, self.dim))?;
        Ok(self.rebased(&t))
    }

    /// Re-expresses the frame in the basis whose columns (in the current
    /// basis) are given by `t`; the metric transforms congruently.
    pub fn rebased(&self, t: &DMatrix<f64>) -> Self {
        let d = self.dim;
        let t_inv = t
            .clone()
            .try_inverse()
            .expect("basis change must be invertible");
        let mut flat = vec![0.0; d * d * d];
        for a in 0..d {
            for b in 0..d {
                let fa = t.column(a).into_owned();
                let fb = t.column(b).into_owned();
                let br = self.bracket(&fa, &fb);
                let br_new = &t_inv * br;
                for k in 0..d {
                    flat[(k * d + a) * d + b] = br_new[k];
                }
            }
        }
        let metric = t.transpose() * &self.metric * t;
        // Snap tiny Gram-Schmidt noise so orthonormal frames are exact.
        let metric = metric.map(|v| {
            if (v - 1.0).abs() < 1e-14 {
                1.0
            } else if v.abs() < 1e-14 {
                0.0
            } else {
                v
            }
        });
        Self {
            dim: d,
            structure_constants: flat,
            metric,
            basis_from_input: &self.basis_from_input * t,
        }
    }
}

/// Metric Gram-Schmidt: orthonormalizes the columns of `seed` against `g`,
/// returning the matrix of new basis vectors (columns, in the old basis).
pub fn gram_schmidt(g: &DMatrix<f64>, seed: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = g.nrows();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v = seed.column(j).into_owned();
        for u in &cols {
            let proj = (u.transpose() * g * &v)[(0, 0)];
            v -= proj * u;
        }
        let norm2 = (v.transpose() * g * &v)[(0, 0)];
        if norm2 <= 1e-24 {
            return Err(GeomError::InvalidFrame(
                "seed basis degenerates under Gram-Schmidt".into(),
            ));
        }
        cols.push(v / norm2.sqrt());
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Levi-Civita connection of a frame: nabla_{e_i} e_j = Gamma^k_{ij} e_k.
#[derive(Debug, Clone)]
pub struct FrameConnection {
    pub dim: usize,
    gamma: Vec<f64>,
    /// Sup-norms of the defining identities: torsion matches the brackets,
    /// and the constant metric is parallel.
    pub residual_norms: BTreeMap<String, f64>,
}

impl FrameConnection {
    #[inline]
    pub fn gamma(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[(k * self.dim + i) * self.dim + j]
    }

    /// nabla_X Y on frame components.
    pub fn derive(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        let mut out = DVector::zeros(d);
        for k in 0..d {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += x[i] * y[j] * self.gamma(k, i, j);
                }
            }
            out[k] = acc;
        }
        out
    }
}

/// Koszul formula on a homogeneous frame. All metric derivative terms vanish,
/// leaving 2 g(nabla_i e_j, e_l) = g([e_i,e_j], e_l) - g([e_i,e_l], e_j)
/// - g([e_j,e_l], e_i).
pub fn levi_civita_frame(frame: &StructureFrame) -> Result<FrameConnection> {
    let d = frame.dim;
    let g = &frame.metric;
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| GeomError::InvalidFrame("metric is singular".into()))?;

    let low = |k: usize, i: usize, j: usize| -> f64 {
        // g([e_i, e_j], e_k)
        (0..d).map(|m| frame.c(m, i, j) * g[(m, k)]).sum()
    };

    let mut gamma = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let mut rhs = 0.0;
                for l in 0..d {
                    let koszul = low(l, i, j) - low(j, i, l) - low(i, j, l);
                    rhs += 0.5 * g_inv[(k, l)] * koszul;
                }
                gamma[(k * d + i) * d + j] = rhs;
            }
        }
    }

    let conn = FrameConnection {
        dim: d,
        gamma,
        residual_norms: BTreeMap::new(),
    };

    let mut torsion: f64 = 0.0;
    let mut compat: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                torsion = torsion
                    .max((conn.gamma(k, i, j) - conn.gamma(k, j, i) - frame.c(k, i, j)).abs());
            }
            // e_k g(e_i, e_j) = 0 for constant metric.
            for k in 0..d {
                let mut s = 0.0;
                for m in 0..d {
                    s += conn.gamma(m, k, i) * g[(m, j)] + conn.gamma(m, k, j) * g[(m, i)];
                }
                compat = compat.max(s.abs());
            }
        }
    }
    if torsion > FRAME_TOL || compat > FRAME_TOL {
        return Err(GeomError::SolverFailure(format!(
            "Koszul solve out of tolerance (torsion {torsion:.3e}, compatibility {compat:.3e})"
        )));
    }
    let mut conn = conn;
    conn.residual_norms.insert("torsion".into(), torsion);
    conn.residual_norms.insert("metric_compat".into(), compat);
    Ok(conn)
}

/// Fully lowered (0,4) curvature tensor with dense storage.
#[derive(Debug, Clone)]
pub struct Tensor4 {
    pub dim: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim * dim],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[((i * self.dim + j) * self.dim + k) * self.dim + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        self.data[((i * self.dim + j) * self.dim + k) * self.dim + l] = v;
    }
}

/// Curvature data of a frame or chart point: R_{ijkl} = g(R(e_i,e_j)e_k, e_l)
/// with R(X,Y) = nabla_X nabla_Y - nabla_Y nabla_X - nabla_{[X,Y]}.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub dim: usize,
    pub riemann: Tensor4,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    pub residual_norms: BTreeMap<String, f64>,
}

impl CurvatureReport {
    /// Assembles Ricci and scalar as traces of `riemann` and attaches the
    /// symmetry residuals. `g` is the metric the tensor was lowered with.
    pub fn from_riemann(riemann: Tensor4, g: &DMatrix<f64>) -> Result<Self> {
        let d = riemann.dim;
        let g_inv = g
            .clone()
            .try_inverse()
            .ok_or_else(|| GeomError::InvalidFrame("metric is singular".into()))?;

        // Rc_{jk} = g^{il} R_{ijkl}.
        let mut ricci = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                let mut s = 0.0;
                for i in 0..d {
                    for l in 0..d {
                        s += g_inv[(i, l)] * riemann.get(i, j, k, l);
                    }
                }
                ricci[(j, k)] = s;
            }
        }
        let mut scalar = 0.0;
        for j in 0..d {
            for k in 0..d {
                scalar += g_inv[(j, k)] * ricci[(j, k)];
            }
        }

        let mut anti_ij: f64 = 0.0;
        let mut anti_kl: f64 = 0.0;
        let mut pair: f64 = 0.0;
        let mut bianchi: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let r = riemann.get(i, j, k, l);
                        anti_ij = anti_ij.max((r + riemann.get(j, i, k, l)).abs());
                        anti_kl = anti_kl.max((r + riemann.get(i, j, l, k)).abs());
                        pair = pair.max((r - riemann.get(k, l, i, j)).abs());
                        let b = r + riemann.get(j, k, i, l) + riemann.get(k, i, j, l);
                        bianchi = bianchi.max(b.abs());
                    }
                }
            }
        }
        let ricci_sym = (&ricci - ricci.transpose()).abs().max();

        let mut residual_norms = BTreeMap::new();
        residual_norms.insert("riemann_antisym_ij".into(), anti_ij);
        residual_norms.insert("riemann_antisym_kl".into(), anti_kl);
        residual_norms.insert("riemann_pair_symmetry".into(), pair);
        residual_norms.insert("bianchi_first".into(), bianchi);
        residual_norms.insert("ricci_symmetry".into(), ricci_sym);

        Ok(Self {
            dim: d,
            riemann,
            ricci,
            scalar,
            residual_norms,
        })
    }

    /// Sectional curvature of span{x, y}; `g` must be the lowering metric.
    pub fn sectional(&self, g: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let d = self.dim;
        let mut rxyyx = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        rxyyx += x[i] * y[j] * y[k] * x[l] * self.riemann.get(i, j, k, l);
                    }
                }
            }
        }
        let xx = (x.transpose() * g * x)[(0, 0)];
        let yy = (y.transpose() * g * y)[(0, 0)];
        let xy = (x.transpose() * g * y)[(0, 0)];
        let area2 = xx * yy - xy * xy;
        if area2 <= 1e-20 {
            return Err(GeomError::DegeneratePlane(area2.max(0.0).sqrt()));
        }
        Ok(rxyyx / area2)
    }

    /// Ricci applied to a vector, index raised with `g`.
    pub fn ricci_endomorphism(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        g.clone().try_inverse().expect("validated metric") * &self.ricci
    }
}

/// Curvature of a homogeneous frame from its Koszul connection. With
/// constant Gamma, R(e_i,e_j)e_k = (Gamma^m_{jk} Gamma^l_{im}
/// - Gamma^m_{ik} Gamma^l_{jm} - c^m_{ij} Gamma^l_{mk}) e_l.
#[allow(clippy::needless_range_loop)]
pub fn curvature_frame(frame: &StructureFrame) -> Result<CurvatureReport> {
    let conn = levi_civita_frame(frame)?;
    let d = frame.dim;
    let g = &frame.metric;
    let mut riemann = Tensor4::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let mut upper = vec![0.0; d];
                for l in 0..d {
                    let mut s = 0.0;
                    for m in 0..d {
                        s += conn.gamma(m, j, k) * conn.gamma(l, i, m)
                            - conn.gamma(m, i, k) * conn.gamma(l, j, m)
                            - frame.c(m, i, j) * conn.gamma(l, m, k);
                    }
                    upper[l] = s;
                }
                for l in 0..d {
                    let mut lowered = 0.0;
                    for m in 0..d {
                        lowered += upper[m] * g[(m, l)];
                    }
                    riemann.set(i, j, k, l, lowered);
                }
            }
        }
    }
    let mut report = CurvatureReport::from_riemann(riemann, g)?;
    for (k, v) in &conn.residual_norms {
        report.residual_norms.insert(k.clone(), *v);
    }
    let bianchi = report.residual_norms["bianchi_first"];
    if bianchi > BIANCHI_TOL {
        return Err(GeomError::SolverFailure(format!(
            "first Bianchi residual {bianchi:.3e} exceeds {BIANCHI_TOL:.0e}"
        )));
    }
    Ok(report)
}

/// Covariant derivative of a frame-constant endomorphism:
/// (nabla_{e_i} T)(e_j) = (Gamma^k_{im} T^m_j - T^k_m Gamma^m_{ij}) e_k.
/// Returned as one matrix per direction i.
pub fn covariant_derivative_endomorphism(
    frame: &StructureFrame,
    t: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let d = frame.dim;
    if t.nrows() != d || t.ncols() != d {
        return Err(GeomError::DimensionMismatch {
            expected: d,
            got: t.nrows(),
        });
    }
    let conn = levi_civita_frame(frame)?;
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut di = DMatrix::zeros(d, d);
        for k in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for m in 0..d {
                    s += conn.gamma(k, i, m) * t[(m, j)] - t[(k, m)] * conn.gamma(m, i, j);
                }
                di[(k, j)] = s;
            }
        }
        out.push(di);
    }
    Ok(out)
}

/// Frame with all brackets zero (abelian), identity metric.
pub fn abelian_frame(dim: usize) -> StructureFrame {
    let c = vec![vec![vec![0.0; dim]; dim]; dim];
    StructureFrame::new(dim, &c, DMatrix::identity(dim, dim)).expect("abelian frame is valid")
}

/// Convenience constructor for 3D unimodular frames in diagonal (Milnor)
/// form: [e_2,e_3] = c1 e_1, [e_3,e_1] = c2 e_2, [e_1,e_2] = c3 e_3, with
/// identity metric. The Jacobi identity holds for every (c1, c2, c3).
pub fn milnor_frame(c1: f64, c2: f64, c3: f64) -> StructureFrame {
    let mut c = vec![vec![vec![0.0; 3]; 3]; 3];
    c[0][1][2] = c1;
    c[0][2][1] = -c1;
    c[1][2][0] = c2;
    c[1][0][2] = -c2;
    c[2][0][1] = c3;
    c[2][1][0] = -c3;
    StructureFrame::new(3, &c, DMatrix::identity(3, 3)).expect("Milnor frame is valid")
}
