//! PCA face shape model and landmark synthesis.
//!
//! A face shape is `mean + Σ_k alpha_k · sigma_k · V[:, k]` over all mesh
//! vertices; landmark sets are the 68 annotated vertices of that shape.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{self, LANDMARK_COUNT};

/// Immutable PCA shape model.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeModel {
    num_vertices: usize,
    mean: DVector<f64>,
    /// 3N × K, column k is principal component k.
    components: DMatrix<f64>,
    sigmas: DVector<f64>,
    landmark_annotation: Vec<usize>,
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeModelFile {
    pub num_vertices: usize,
    pub num_components: usize,
    pub mean: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Row-major 3N × K.
    pub components: Vec<f64>,
    pub landmark_annotation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeCoefficients {
    pub alpha: Vec<f64>,
}

impl ShapeCoefficients {
    pub fn zeros(k: usize) -> Self {
        Self { alpha: vec![0.0; k] }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for ShapeCoefficients {
    fn from(alpha: Vec<f64>) -> Self {
        Self { alpha }
    }
}

/// 68 landmark positions in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmarks3D {
    pub points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<u64>,
}

impl Landmarks3D {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::Dimension {
                what: "landmark set",
                expected: LANDMARK_COUNT,
                found: points.len(),
            });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Structure("non-finite landmark coordinate".into()));
        }
        Ok(Self {
            points,
            frame_index: None,
        })
    }

    pub fn with_frame(mut self, frame_index: u64) -> Self {
        self.frame_index = Some(frame_index);
        self
    }
}

impl ShapeModel {
    /// Builds a model, checking every structural invariant.
    pub fn new(
        mean: DVector<f64>,
        components: DMatrix<f64>,
        sigmas: DVector<f64>,
        landmark_annotation: Vec<usize>,
    ) -> Result<Self> {
        if !mean.len().is_multiple_of(3) {
            return Err(Error::Structure(format!(
                "mean length {} is not a multiple of 3",
                mean.len()
            )));
        }
        let n = mean.len() / 3;
        if n < LANDMARK_COUNT {
            return Err(Error::Structure(format!(
                "model has {n} vertices, need at least {LANDMARK_COUNT}"
            )));
        }
        if components.nrows() != 3 * n {
            return Err(Error::Dimension {
                what: "component rows",
                expected: 3 * n,
                found: components.nrows(),
            });
        }
        let k = components.ncols();
        if sigmas.len() != k {
            return Err(Error::Dimension {
                what: "sigmas",
                expected: k,
                found: sigmas.len(),
            });
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Structure(format!(
                "sigmas must be strictly positive, found {s}"
            )));
        }
        if mean.iter().chain(components.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Structure("non-finite mean or component entry".into()));
        }
        if landmark_annotation.len() != LANDMARK_COUNT {
            return Err(Error::Dimension {
                what: "landmark_annotation",
                expected: LANDMARK_COUNT,
                found: landmark_annotation.len(),
            });
        }
        let mut seen = vec![false; n];
        for &v in &landmark_annotation {
            if v >= n {
                return Err(Error::Structure(format!(
                    "landmark_annotation vertex {v} out of range (N = {n})"
                )));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::Structure(format!(
                    "landmark_annotation vertex {v} is repeated"
                )));
            }
        }
        Ok(Self {
            num_vertices: n,
            mean,
            components,
            sigmas,
            landmark_annotation,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn sigmas(&self) -> &DVector<f64> {
        &self.sigmas
    }

    pub fn landmark_annotation(&self) -> &[usize] {
        &self.landmark_annotation
    }

    /// Mean position of landmark `id`.
    pub fn mean_landmark(&self, id: usize) -> [f64; 3] {
        let r = 3 * self.landmark_annotation[id];
        [self.mean[r], self.mean[r + 1], self.mean[r + 2]]
    }

    /// Displacement of landmark `id` per unit coefficient of component `k`,
    /// i.e. `sigma_k · V[vertex, k]`.
    pub fn landmark_basis(&self, id: usize, k: usize) -> [f64; 3] {
        let r = 3 * self.landmark_annotation[id];
        let s = self.sigmas[k];
        [
            s * self.components[(r, k)],
            s * self.components[(r + 1, k)],
            s * self.components[(r + 2, k)],
        ]
    }

    fn check_coeffs(&self, coeffs: &ShapeCoefficients) -> Result<()> {
        if coeffs.len() != self.num_components() {
            return Err(Error::Dimension {
                what: "shape coefficients",
                expected: self.num_components(),
                found: coeffs.len(),
            });
        }
        if coeffs.alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::param("alpha", "coefficients must be finite"));
        }
        Ok(())
    }

    /// Full 3N shape vector for `coeffs`.
    pub fn synthesize_vertices(&self, coeffs: &ShapeCoefficients) -> Result<DVector<f64>> {
        self.check_coeffs(coeffs)?;
        let weights = DVector::from_iterator(
            coeffs.len(),
            coeffs.alpha.iter().zip(self.sigmas.iter()).map(|(a, s)| a * s),
        );
        Ok(&self.mean + &self.components * weights)
    }

    /// The 68 annotated landmarks of the shape given by `coeffs`.
    pub fn synthesize_shape(&self, coeffs: &ShapeCoefficients) -> Result<Landmarks3D> {
        self.check_coeffs(coeffs)?;
        let points = (0..LANDMARK_COUNT)
            .map(|id| {
                let mut p = self.mean_landmark(id);
                let r = 3 * self.landmark_annotation[id];
                for (k, (a, s)) in coeffs.alpha.iter().zip(self.sigmas.iter()).enumerate() {
                    let w = a * s;
                    for (c, pc) in p.iter_mut().enumerate() {
                        *pc += w * self.components[(r + c, k)];
                    }
                }
                p
            })
            .collect();
        Ok(Landmarks3D {
            points,
            frame_index: None,
        })
    }

    pub fn to_file(&self) -> ShapeModelFile {
        let k = self.num_components();
        let mut components = Vec::with_capacity(3 * self.num_vertices * k);
        for r in 0..3 * self.num_vertices {
            components.extend(self.components.row(r).iter());
        }
        ShapeModelFile {
            num_vertices: self.num_vertices,
            num_components: k,
            mean: self.mean.iter().copied().collect(),
            sigmas: self.sigmas.iter().copied().collect(),
            components,
            landmark_annotation: self.landmark_annotation.clone(),
        }
    }

    pub fn from_file(file: ShapeModelFile) -> Result<Self> {
        let n = file.num_vertices;
        let k = file.num_components;
        if file.mean.len() != 3 * n {
            return Err(Error::Dimension {
                what: "mean",
                expected: 3 * n,
                found: file.mean.len(),
            });
        }
        if file.sigmas.len() != k {
            return Err(Error::Dimension {
                what: "sigmas",
                expected: k,
                found: file.sigmas.len(),
            });
        }
        if file.components.len() != 3 * n * k {
            return Err(Error::Dimension {
                what: "components",
                expected: 3 * n * k,
                found: file.components.len(),
            });
        }
        Self::new(
            DVector::from_vec(file.mean),
            DMatrix::from_row_slice(3 * n, k, &file.components),
            DVector::from_vec(file.sigmas),
            file.landmark_annotation,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ShapeModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            field: json_error_field(&e),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// The model shipped with the tools: `fixture(100, 10, 1)`.
    pub fn builtin() -> Self {
        Self::fixture(100, 10, 1).expect("valid fixture parameters")
    }

    /// Deterministic synthetic model for tests, demos and benchmarks.
    ///
    /// Landmark vertices sit on the schematic face; component 0 is a jaw-drop
    /// mode. Every component, restricted to the landmark vertices, is
    /// orthogonal to all affine deformations of the mean landmarks, so shape
    /// and affine pose are separately identifiable from 68 correspondences.
    /// Components are orthonormal over the full 3N vector.
    pub fn fixture(num_vertices: usize, num_components: usize, seed: u64) -> Result<Self> {
        if num_vertices < LANDMARK_COUNT {
            return Err(Error::param("num_vertices", "must be at least 68"));
        }
        if num_components == 0 || num_components > 3 * LANDMARK_COUNT - 12 {
            return Err(Error::param(
                "num_components",
                "must be between 1 and the landmark shape budget (192)",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = num_vertices;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let annotation: Vec<usize> = order[..LANDMARK_COUNT].to_vec();

        let mut mean = DVector::zeros(3 * n);
        let face = layout::schematic_face();
        let mut is_landmark = vec![false; n];
        for (id, &v) in annotation.iter().enumerate() {
            is_landmark[v] = true;
            for c in 0..3 {
                mean[3 * v + c] = face[id][c];
            }
        }
        for v in (0..n).filter(|v| !is_landmark[*v]) {
            // Remaining vertices on a face-sized ellipsoid cap.
            let theta: f64 = rng.random_range(-1.2..1.2);
            let phi: f64 = rng.random_range(-1.2..1.2);
            mean[3 * v] = 0.9 * theta.sin() * phi.cos();
            mean[3 * v + 1] = 1.0 * phi.sin();
            mean[3 * v + 2] = 0.6 * theta.cos() * phi.cos() - 0.2;
        }

        // Orthonormal basis of affine deformations of the landmarks.
        let mut affine: Vec<DVector<f64>> = Vec::with_capacity(12);
        for c in 0..3 {
            for f in 0..4 {
                let mut b = DVector::zeros(3 * n);
                for (id, &v) in annotation.iter().enumerate() {
                    b[3 * v + c] = if f < 3 { face[id][f] } else { 1.0 };
                }
                affine.push(b);
            }
        }
        gram_schmidt(&mut affine);

        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(num_components);
        let mut jaw = DVector::zeros(3 * n);
        for (id, &v) in annotation.iter().enumerate() {
            let weight = match id {
                0..=16 => 1.0 - (id as f64 - 8.0).abs() / 9.0,
                48..=67 if face[id][1] < -0.4 => 0.5,
                _ => 0.0,
            };
            jaw[3 * v + 1] = -weight;
            jaw[3 * v + 2] = -0.3 * weight;
        }
        basis.push(jaw);
        while basis.len() < num_components {
            basis.push(DVector::from_fn(3 * n, |_, _| StandardNormal.sample(&mut rng)));
        }
        for b in basis.iter_mut() {
            for a in &affine {
                let d = a.dot(b);
                b.axpy(-d, a, 1.0);
            }
        }
        gram_schmidt(&mut basis);
        let components = DMatrix::from_columns(&basis);
        let sigmas = DVector::from_fn(num_components, |k, _| 0.2 / (k as f64 + 1.0));
        Self::new(mean, components, sigmas, annotation)
    }
}

fn gram_schmidt(vs: &mut [DVector<f64>]) {
    for i in 0..vs.len() {
        // Two passes for numerical orthogonality.
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = vs.split_at_mut(i);
                let d = head[j].dot(&tail[0]);
                tail[0].axpy(-d, &head[j], 1.0);
            }
        }
        let norm = vs[i].norm();
        assert!(norm > 1e-10, "fixture basis vector {i} is degenerate");
        vs[i] /= norm;
    }
}

fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    // serde messages quote the offending field as `name`.
    msg.split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| format!("line {}, column {}", e.line(), e.column()))
}

pub fn load_shape_model(path: impl AsRef<Path>) -> Result<ShapeModel> {
    let text = std::fs::read_to_string(path)?;
    ShapeModel::from_json(&text)
}
