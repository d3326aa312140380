//! Per-frame pose and shape fitting.
//!
//! Each frame alternates two linear least-squares steps: an affine camera
//! from 2D–3D correspondences against the current shape estimate (gold
//! standard algorithm with isotropic normalization), then ridge-regularized
//! PCA shape coefficients under that camera. The fitted coefficients give
//! head-pose-free ("frontalized") landmarks in model space.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::LANDMARK_COUNT;
use crate::par::{self, Execution};
use crate::shape_model::{Landmarks3D, ShapeCoefficients, ShapeModel};

/// Minimum correspondences for an affine camera (8 unknowns, 2 rows each).
pub const MIN_CORRESPONDENCES: usize = 4;

const RANK_TOL: f64 = 1e-10;

/// One frame of 2D tracker output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub frame_index: u64,
    pub timestamp: f64,
    /// Pixel coordinates; entries for invalid slots are ignored.
    pub points2d: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Vec<f64>>,
    pub valid: Vec<bool>,
}

impl LandmarkFrame {
    /// A frame with all 68 landmarks present.
    pub fn complete(frame_index: u64, timestamp: f64, points2d: Vec<[f64; 2]>) -> Self {
        assert_eq!(points2d.len(), LANDMARK_COUNT);
        Self {
            frame_index,
            timestamp,
            points2d,
            confidence: None,
            valid: vec![true; LANDMARK_COUNT],
        }
    }

    /// A frame with no landmarks present yet.
    pub fn empty(frame_index: u64, timestamp: f64) -> Self {
        Self {
            frame_index,
            timestamp,
            points2d: vec![[0.0; 2]; LANDMARK_COUNT],
            confidence: None,
            valid: vec![false; LANDMARK_COUNT],
        }
    }

    pub fn valid_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(|(i, _)| i)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// 3×4 affine camera with third row (0, 0, 0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 3]", into = "[[f64; 4]; 3]")]
pub struct AffineCamera {
    matrix: Matrix3x4<f64>,
}

impl AffineCamera {
    /// Builds a camera from its two projection rows.
    pub fn from_rows(r0: [f64; 4], r1: [f64; 4]) -> Result<Self> {
        let matrix = Matrix3x4::new(
            r0[0], r0[1], r0[2], r0[3], r1[0], r1[1], r1[2], r1[3], 0.0, 0.0, 0.0, 1.0,
        );
        Self::from_matrix(matrix)
    }

    pub fn from_matrix(matrix: Matrix3x4<f64>) -> Result<Self> {
        if matrix.row(2).iter().ne([0.0, 0.0, 0.0, 1.0].iter()) {
            return Err(Error::Structure(
                "affine camera third row must be (0, 0, 0, 1)".into(),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structure("non-finite camera entry".into()));
        }
        let top = matrix.fixed_view::<2, 3>(0, 0).into_owned();
        let sv = top.singular_values();
        if sv[1] <= RANK_TOL * sv[0].max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate(
                "camera projection block has rank < 2".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.matrix
    }

    pub fn project_point(&self, p: [f64; 3]) -> [f64; 2] {
        let m = &self.matrix;
        [
            m[(0, 0)] * p[0] + m[(0, 1)] * p[1] + m[(0, 2)] * p[2] + m[(0, 3)],
            m[(1, 0)] * p[0] + m[(1, 1)] * p[1] + m[(1, 2)] * p[2] + m[(1, 3)],
        ]
    }
}

impl TryFrom<[[f64; 4]; 3]> for AffineCamera {
    type Error = Error;

    fn try_from(rows: [[f64; 4]; 3]) -> Result<Self> {
        let m = Matrix3x4::from_fn(|r, c| rows[r][c]);
        Self::from_matrix(m)
    }
}

impl From<AffineCamera> for [[f64; 4]; 3] {
    fn from(cam: AffineCamera) -> Self {
        let m = cam.matrix;
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    }
}

/// Projects landmarks through the top two camera rows.
pub fn project(camera: &AffineCamera, points3d: &Landmarks3D) -> Vec<[f64; 2]> {
    points3d.points.iter().map(|p| camera.project_point(*p)).collect()
}

fn centroid_and_scale<const D: usize>(pts: &[[f64; D]]) -> ([f64; D], f64) {
    let n = pts.len() as f64;
    let mut c = [0.0; D];
    for p in pts {
        for d in 0..D {
            c[d] += p[d] / n;
        }
    }
    let mean_dist = pts
        .iter()
        .map(|p| (0..D).map(|d| (p[d] - c[d]).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n;
    (c, mean_dist)
}

/// Least-squares affine camera from 2D–3D correspondences.
///
/// Image points are scaled to mean distance √2 from their centroid and
/// object points to √3; the two projection rows are then independent linear
/// problems sharing one design matrix. Coplanar object points leave one
/// direction of the camera unobservable; the minimum-norm solution is
/// returned, which reproduces every projection on that plane. Collinear or
/// coincident points are rejected. `weights`, when given, scale each
/// correspondence's squared residual.
pub fn estimate_affine_camera(
    points2d: &[[f64; 2]],
    points3d: &[[f64; 3]],
    weights: Option<&[f64]>,
) -> Result<AffineCamera> {
    if points2d.len() != points3d.len() {
        return Err(Error::Dimension {
            what: "correspondences",
            expected: points3d.len(),
            found: points2d.len(),
        });
    }
    let n = points2d.len();
    if n < MIN_CORRESPONDENCES {
        return Err(Error::InsufficientData {
            needed: MIN_CORRESPONDENCES,
            found: n,
        });
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension {
                what: "weights",
                expected: n,
                found: w.len(),
            });
        }
        if w.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("weights", "must be finite and nonnegative"));
        }
    }

    let (c2, d2) = centroid_and_scale(points2d);
    let (c3, d3) = centroid_and_scale(points3d);
    if !(d2 > 0.0 && d3 > 0.0) || !d2.is_finite() || !d3.is_finite() {
        return Err(Error::Degenerate("coincident points".into()));
    }
    let s2 = std::f64::consts::SQRT_2 / d2;
    let s3 = 3f64.sqrt() / d3;

    let mut a = DMatrix::zeros(n, 4);
    let mut b = DMatrix::zeros(n, 2);
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i].sqrt());
        for d in 0..3 {
            a[(i, d)] = w * s3 * (points3d[i][d] - c3[d]);
        }
        a[(i, 3)] = w;
        for d in 0..2 {
            b[(i, d)] = w * s2 * (points2d[i][d] - c2[d]);
        }
    }

    let svd = SVD::new(a, true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let tol = RANK_TOL * smax;
    let rank = sv.iter().filter(|s| **s > tol).count();
    if rank < 3 {
        return Err(Error::Degenerate(format!(
            "object points are collinear or coincident (design rank {rank})"
        )));
    }
    let sol = svd
        .solve(&b, tol)
        .map_err(|e| Error::Degenerate(e.to_string()))?;

    let mut p_norm = Matrix3x4::zeros();
    for c in 0..4 {
        p_norm[(0, c)] = sol[(c, 0)];
        p_norm[(1, c)] = sol[(c, 1)];
    }
    p_norm[(2, 3)] = 1.0;

    let t_inv = Matrix3::new(
        1.0 / s2,
        0.0,
        c2[0],
        0.0,
        1.0 / s2,
        c2[1],
        0.0,
        0.0,
        1.0,
    );
    let u = Matrix4::new(
        s3,
        0.0,
        0.0,
        -s3 * c3[0],
        0.0,
        s3,
        0.0,
        -s3 * c3[1],
        0.0,
        0.0,
        s3,
        -s3 * c3[2],
        0.0,
        0.0,
        0.0,
        1.0,
    );
    let mut p = t_inv * p_norm * u;
    // Exact affine form after denormalization round-off.
    p[(2, 0)] = 0.0;
    p[(2, 1)] = 0.0;
    p[(2, 2)] = 0.0;
    p[(2, 3)] = 1.0;
    AffineCamera::from_matrix(p)
}

fn valid_weights(frame: &LandmarkFrame, ids: &[usize], use_confidence: bool) -> Option<Vec<f64>> {
    if !use_confidence {
        return None;
    }
    frame
        .confidence
        .as_ref()
        .map(|c| ids.iter().map(|&i| c[i].clamp(0.0, 1.0)).collect())
}

fn shape_system(
    camera: &AffineCamera,
    model: &ShapeModel,
    frame: &LandmarkFrame,
    ids: &[usize],
    weights: Option<&[f64]>,
) -> (DMatrix<f64>, DVector<f64>) {
    let k = model.num_components();
    let m = camera.matrix();
    let mut a = DMatrix::zeros(2 * ids.len(), k);
    let mut b = DVector::zeros(2 * ids.len());
    for (r, &id) in ids.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[r].sqrt());
        let mean_proj = camera.project_point(model.mean_landmark(id));
        for c in 0..2 {
            b[2 * r + c] = w * (frame.points2d[id][c] - mean_proj[c]);
        }
        for j in 0..k {
            let basis = model.landmark_basis(id, j);
            for c in 0..2 {
                a[(2 * r + c, j)] =
                    w * (m[(c, 0)] * basis[0] + m[(c, 1)] * basis[1] + m[(c, 2)] * basis[2]);
            }
        }
    }
    (a, b)
}

fn solve_ridge(a: DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let k = a.ncols();
    if ridge > 0.0 {
        let mut normal = a.tr_mul(&a);
        for i in 0..k {
            normal[(i, i)] += ridge;
        }
        let rhs = a.tr_mul(b);
        let chol = normal
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("normal equations not positive definite".into()))?;
        return Ok(chol.solve(&rhs));
    }
    if a.nrows() < k {
        return Err(Error::RankDeficient(format!(
            "{} equations for {k} coefficients",
            a.nrows()
        )));
    }
    let svd = SVD::new(a, true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if sv.min() <= RANK_TOL * smax || smax == 0.0 {
        return Err(Error::RankDeficient(format!(
            "condition {:.3e} exceeds tolerance",
            smax / sv.min()
        )));
    }
    svd.solve(b, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))
}

fn check_frame(frame: &LandmarkFrame) -> Result<()> {
    if frame.points2d.len() != LANDMARK_COUNT || frame.valid.len() != LANDMARK_COUNT {
        return Err(Error::Dimension {
            what: "landmark frame",
            expected: LANDMARK_COUNT,
            found: frame.points2d.len().min(frame.valid.len()),
        });
    }
    Ok(())
}

fn shape_coefficients(
    camera: &AffineCamera,
    model: &ShapeModel,
    frame: &LandmarkFrame,
    ids: &[usize],
    ridge: f64,
    weights: Option<&[f64]>,
) -> Result<ShapeCoefficients> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::param("ridge", "must be finite and nonnegative"));
    }
    let (a, b) = shape_system(camera, model, frame, ids, weights);
    let alpha = solve_ridge(a, &b, ridge)?;
    Ok(ShapeCoefficients {
        alpha: alpha.iter().copied().collect(),
    })
}

/// Shape coefficients minimizing `‖A·alpha − b‖² + ridge·‖alpha‖²` under a
/// fixed camera, over the frame's valid landmarks.
pub fn fit_shape_coefficients(
    camera: &AffineCamera,
    model: &ShapeModel,
    frame: &LandmarkFrame,
    ridge: f64,
) -> Result<ShapeCoefficients> {
    check_frame(frame)?;
    let ids: Vec<usize> = frame.valid_ids().collect();
    shape_coefficients(camera, model, frame, &ids, ridge, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    pub ridge: f64,
    /// Weight residual rows by tracker confidence when present.
    pub confidence_weighting: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            ridge: 1.0,
            confidence_weighting: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::param("ridge", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Result of fitting one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFit {
    pub frame_index: u64,
    pub timestamp: f64,
    pub camera: AffineCamera,
    pub coefficients: ShapeCoefficients,
    pub frontalized: Landmarks3D,
    /// RMS 2D reprojection error over valid landmarks, pixels.
    pub residual: f64,
}

fn rms_residual(
    camera: &AffineCamera,
    shape: &Landmarks3D,
    frame: &LandmarkFrame,
    ids: &[usize],
) -> f64 {
    let sum: f64 = ids
        .iter()
        .map(|&i| {
            let p = camera.project_point(shape.points[i]);
            (p[0] - frame.points2d[i][0]).powi(2) + (p[1] - frame.points2d[i][1]).powi(2)
        })
        .sum();
    (sum / ids.len() as f64).sqrt()
}

/// Fits a frame and returns the RMS residual after every accepted alternation
/// round. Alternation ends early if a round would raise the residual.
pub fn fit_frame_traced(
    model: &ShapeModel,
    frame: &LandmarkFrame,
    config: &FitConfig,
) -> Result<(FrameFit, Vec<f64>)> {
    config.validate()?;
    check_frame(frame)?;
    let ids: Vec<usize> = frame.valid_ids().collect();
    if ids.len() < MIN_CORRESPONDENCES {
        return Err(Error::InsufficientData {
            needed: MIN_CORRESPONDENCES,
            found: ids.len(),
        });
    }
    if ids
        .iter()
        .any(|&i| frame.points2d[i].iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Structure("non-finite valid landmark".into()));
    }
    let weights = valid_weights(frame, &ids, config.confidence_weighting);
    let observed: Vec<[f64; 2]> = ids.iter().map(|&i| frame.points2d[i]).collect();

    let mut coeffs = ShapeCoefficients::zeros(model.num_components());
    let mut shape = model.synthesize_shape(&coeffs)?;
    let mut history = Vec::with_capacity(config.iterations);
    let mut camera = None;
    for _ in 0..config.iterations {
        let object: Vec<[f64; 3]> = ids.iter().map(|&i| shape.points[i]).collect();
        let cam = estimate_affine_camera(&observed, &object, weights.as_deref())?;
        let next = shape_coefficients(&cam, model, frame, &ids, config.ridge, weights.as_deref())?;
        let next_shape = model.synthesize_shape(&next)?;
        let residual = rms_residual(&cam, &next_shape, frame, &ids);
        // With a ridge the rounds descend the penalized cost, which can
        // trade a sliver of residual for a smaller alpha. Stop there.
        if history.last().is_some_and(|&prev| residual > prev) {
            break;
        }
        coeffs = next;
        shape = next_shape;
        history.push(residual);
        camera = Some(cam);
    }
    let fit = FrameFit {
        frame_index: frame.frame_index,
        timestamp: frame.timestamp,
        camera: camera.expect("at least one iteration"),
        coefficients: coeffs,
        frontalized: shape.with_frame(frame.frame_index),
        residual: *history.last().expect("at least one iteration"),
    };
    Ok((fit, history))
}

/// Alternates camera estimation and shape fitting starting from the mean shape.
pub fn fit_frame(model: &ShapeModel, frame: &LandmarkFrame, config: &FitConfig) -> Result<FrameFit> {
    fit_frame_traced(model, frame, config).map(|(fit, _)| fit)
}

/// Per-frame fitting outcome within a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FrameOutcome {
    Fitted(FrameFit),
    Unfittable {
        frame_index: u64,
        timestamp: f64,
        reason: String,
    },
}

impl FrameOutcome {
    pub fn frame_index(&self) -> u64 {
        match self {
            FrameOutcome::Fitted(f) => f.frame_index,
            FrameOutcome::Unfittable { frame_index, .. } => *frame_index,
        }
    }

    pub fn timestamp(&self) -> f64 {
        match self {
            FrameOutcome::Fitted(f) => f.timestamp,
            FrameOutcome::Unfittable { timestamp, .. } => *timestamp,
        }
    }

    pub fn fit(&self) -> Option<&FrameFit> {
        match self {
            FrameOutcome::Fitted(f) => Some(f),
            FrameOutcome::Unfittable { .. } => None,
        }
    }
}

/// Fits every frame of a session. Frames that cannot be fitted are kept as
/// [`FrameOutcome::Unfittable`]; output is in frame order.
pub fn fit_session(
    model: &ShapeModel,
    frames: &[LandmarkFrame],
    config: &FitConfig,
    exec: Execution,
) -> Result<Vec<FrameOutcome>> {
    config.validate()?;
    let mut outcomes = par::map_collect(frames, exec, |frame| {
        match fit_frame(model, frame, config) {
            Ok(fit) => FrameOutcome::Fitted(fit),
            Err(e) => FrameOutcome::Unfittable {
                frame_index: frame.frame_index,
                timestamp: frame.timestamp,
                reason: e.to_string(),
            },
        }
    });
    outcomes.sort_by_key(FrameOutcome::frame_index);
    Ok(outcomes)
}
