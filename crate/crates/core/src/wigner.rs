//! Analytic Wigner functions of Gaussian and single-photon added/subtracted
//! Gaussian states.
//!
//! Every state in this class has the form `W(β) = ½(βᵀMβ + c) W₀(β)` where
//! `W₀` is the Gaussian Wigner function of covariance `V`. The Gaussian case is
//! `M = 0, c = 2`. Marginals along homodyne axes keep the same shape with a
//! reduced covariance, which is what the samplers consume.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::CovarianceMatrix;
use crate::linalg::{self, symplectic_form};

/// Floor on the trace denominator of the A-matrix.
pub const DIVISION_FLOOR: f64 = 1e-9;
const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhotonOp {
    Add,
    Subtract,
}

/// The degaussifying operation applied to the Gaussian state, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NonGaussianOp {
    None,
    Add { mode: Vec<f64> },
    Subtract { mode: Vec<f64> },
}

impl NonGaussianOp {
    pub fn add(mode: Vec<f64>) -> Result<Self> {
        check_unit(&mode)?;
        Ok(Self::Add { mode })
    }

    pub fn subtract(mode: Vec<f64>) -> Result<Self> {
        check_unit(&mode)?;
        Ok(Self::Subtract { mode })
    }

    /// Normalizes `g` and wraps it with the requested operation.
    pub fn normalized(op: PhotonOp, mut g: Vec<f64>) -> Result<Self> {
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidInput("mode vector must be nonzero".into()));
        }
        g.iter_mut().for_each(|x| *x /= norm);
        match op {
            PhotonOp::Add => Self::add(g),
            PhotonOp::Subtract => Self::subtract(g),
        }
    }

    pub fn photon_op(&self) -> Option<(PhotonOp, &[f64])> {
        match self {
            Self::None => None,
            Self::Add { mode } => Some((PhotonOp::Add, mode)),
            Self::Subtract { mode } => Some((PhotonOp::Subtract, mode)),
        }
    }
}

fn check_unit(g: &[f64]) -> Result<()> {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("mode vector has norm {norm}, expected 1")));
    }
    Ok(())
}

/// `A± = 2 (V ± 1) P (V ± 1) / tr[(V ± 1) P]` with `P = P_g + P_Jg`.
pub fn build_a_matrix(cov: &CovarianceMatrix, g: &[f64], op: PhotonOp) -> Result<DMatrix<f64>> {
    let n = cov.matrix().nrows();
    if g.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: g.len() });
    }
    check_unit(g)?;
    let g = DVector::from_column_slice(g);
    let jg = symplectic_form(n / 2) * &g;
    let projector = &g * g.transpose() + &jg * jg.transpose();
    let sign = match op {
        PhotonOp::Add => 1.0,
        PhotonOp::Subtract => -1.0,
    };
    let shifted = cov.matrix() + DMatrix::<f64>::identity(n, n) * sign;
    let denominator = (&shifted * &projector).trace();
    if denominator <= DIVISION_FLOOR {
        return Err(Error::DegenerateSubtraction {
            denominator,
            floor: DIVISION_FLOOR,
        });
    }
    Ok(linalg::symmetrize(&(&shifted * projector * &shifted * (2.0 / denominator))))
}

/// `W(β) = ½(βᵀMβ + c) W₀(β)`.
#[derive(Debug, Clone)]
pub struct WignerForm {
    cov: CovarianceMatrix,
    quadratic: DMatrix<f64>,
    constant: f64,
    op: NonGaussianOp,
    precision: DMatrix<f64>,
    peak: f64,
}

impl WignerForm {
    pub fn gaussian(cov: CovarianceMatrix) -> Self {
        let n = cov.matrix().nrows();
        Self::from_parts_unchecked(cov, DMatrix::zeros(n, n), 2.0, NonGaussianOp::None)
    }

    pub fn build(cov: CovarianceMatrix, op: NonGaussianOp) -> Result<Self> {
        let Some((photon, g)) = op.photon_op() else {
            return Ok(Self::gaussian(cov));
        };
        let a = build_a_matrix(&cov, g, photon)?;
        let inv = invert_covariance(&cov);
        let quadratic = linalg::symmetrize(&(&inv * &a * &inv));
        let constant = 2.0 - (&inv * &a).trace();
        let form = Self::from_parts_unchecked(cov, quadratic, constant, op);
        form.check_normalization()?;
        Ok(form)
    }

    /// Rebuilds a form from stored parts, checking dimensions and normalization.
    pub fn from_parts(cov: CovarianceMatrix, quadratic: DMatrix<f64>, constant: f64, op: NonGaussianOp) -> Result<Self> {
        let n = cov.matrix().nrows();
        if quadratic.nrows() != n || quadratic.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: quadratic.nrows() });
        }
        let form = Self::from_parts_unchecked(cov, linalg::symmetrize(&quadratic), constant, op);
        form.check_normalization()?;
        Ok(form)
    }

    /// Uniform loss applied after the photon operation. With `t² = 1−λ` and
    /// `V' = t²V + λI`, the prefactor becomes the conditional expectation of the
    /// old one given the attenuated point: `M' = t² V'⁻¹VMVV'⁻¹`,
    /// `c' = c + tr(M(V − t²VV'⁻¹V))`.
    pub fn apply_loss(&self, loss: f64) -> Result<Self> {
        let lossy = self.cov.apply_loss(loss)?;
        let t2 = 1.0 - loss;
        let v = self.cov.matrix();
        let inv = invert_covariance(&lossy);
        let gain = v * &inv;
        let quadratic = linalg::symmetrize(&(gain.transpose() * &self.quadratic * &gain * t2));
        let residual = v - &gain * v * t2;
        let constant = self.constant + (&self.quadratic * residual).trace();
        let form = Self::from_parts_unchecked(lossy, quadratic, constant, self.op.clone());
        form.check_normalization()?;
        Ok(form)
    }

    /// Reduced state of the listed modes (0-based, increasing), the others
    /// traced out.
    pub fn reduced(&self, modes: &[usize]) -> Result<Self> {
        let m = self.mode_count();
        if modes.is_empty() || modes.windows(2).any(|w| w[0] >= w[1]) || modes.iter().any(|&i| i >= m) {
            return Err(Error::InvalidInput(format!("modes {modes:?} must be increasing and below {m}")));
        }
        let kept: Vec<usize> = modes.iter().copied().chain(modes.iter().map(|i| m + i)).collect();
        let rest: Vec<usize> = (0..2 * m).filter(|i| !kept.contains(i)).collect();
        let v = self.cov.matrix();
        let q = &self.quadratic;
        let vkk = select(v, &kept, &kept);
        if rest.is_empty() {
            return Ok(self.clone());
        }
        let k = select(v, &rest, &kept) * invert_covariance(&CovarianceMatrix::new(vkk.clone())?);
        let s = select(v, &rest, &rest) - &k * select(v, &kept, &rest);
        let qrk = select(q, &rest, &kept);
        let qrr = select(q, &rest, &rest);
        let quadratic = select(q, &kept, &kept) + qrk.transpose() * &k + k.transpose() * &qrk + k.transpose() * &qrr * &k;
        let constant = self.constant + (&qrr * s).trace();
        Self::from_parts(CovarianceMatrix::new(vkk)?, quadratic, constant, self.op.clone())
    }

    fn from_parts_unchecked(cov: CovarianceMatrix, quadratic: DMatrix<f64>, constant: f64, op: NonGaussianOp) -> Self {
        let precision = invert_covariance(&cov);
        let m = cov.mode_count() as i32;
        let peak = (2.0 * PI).powi(-m) / cov.determinant().sqrt();
        Self {
            cov,
            quadratic,
            constant,
            op,
            precision,
            peak,
        }
    }

    fn check_normalization(&self) -> Result<()> {
        let n = self.normalization();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotPhysical(format!("Wigner prefactor normalization {n} differs from 1")));
        }
        Ok(())
    }

    /// Gaussian expectation of the prefactor, `½(tr(VM) + c)`; equals 1.
    pub fn normalization(&self) -> f64 {
        0.5 * ((self.cov.matrix() * &self.quadratic).trace() + self.constant)
    }

    pub fn covariance(&self) -> &CovarianceMatrix {
        &self.cov
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.quadratic
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn op(&self) -> &NonGaussianOp {
        &self.op
    }

    pub fn mode_count(&self) -> usize {
        self.cov.mode_count()
    }

    /// `W₀(0) = (2π)^{-m} (det V)^{-1/2}`.
    pub fn gaussian_peak(&self) -> f64 {
        self.peak
    }

    pub fn prefactor(&self, beta: &DVector<f64>) -> f64 {
        0.5 * (linalg::quadratic_form(&self.quadratic, beta) + self.constant)
    }

    pub fn gaussian_at(&self, beta: &DVector<f64>) -> f64 {
        self.peak * (-0.5 * linalg::quadratic_form(&self.precision, beta)).exp()
    }

    pub fn wigner_at(&self, beta: &[f64]) -> Result<f64> {
        let n = self.cov.matrix().nrows();
        if beta.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: beta.len() });
        }
        let b = DVector::from_column_slice(beta);
        Ok(self.prefactor(&b) * self.gaussian_at(&b))
    }

    /// Value at the origin, the minimum for mean-field-free states of this class.
    pub fn wigner_min(&self) -> f64 {
        0.5 * self.constant * self.peak
    }

    /// `(2π)^m W_min`, the scale-free negativity.
    pub fn scaled_min(&self) -> f64 {
        0.5 * self.constant / self.cov.determinant().sqrt()
    }

    /// Multi-start descent from `starts` points drawn from `W₀`, looking for a
    /// value below the origin's. Values are compared after scaling by `(2π)^m`.
    pub fn verify_origin_minimum<R: Rng + ?Sized>(&self, starts: usize, rng: &mut R) -> OriginCheck {
        let chol = self.cov.matrix().clone().cholesky().expect("covariance is positive definite");
        let n = self.cov.matrix().nrows();
        let scale = 1.0 / self.peak;
        let value = |b: &DVector<f64>| self.prefactor(b) * self.gaussian_at(b) * scale;
        let origin = value(&DVector::zeros(n));
        let mut lowest = origin;
        let mut argmin = DVector::zeros(n);
        for _ in 0..starts {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut beta = chol.l() * z;
            let mut f = value(&beta);
            let mut step = 0.5;
            for _ in 0..400 {
                let pb = &self.precision * &beta;
                let grad = (&self.quadratic * &beta - pb * self.prefactor(&beta))
                    * (self.gaussian_at(&beta) * scale);
                let gnorm = grad.norm();
                if gnorm < 1e-13 {
                    break;
                }
                let mut accepted = false;
                while step > 1e-12 {
                    let trial = &beta - &grad * step;
                    let ft = value(&trial);
                    if ft < f {
                        beta = trial;
                        f = ft;
                        step *= 1.5;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            if f < lowest {
                lowest = f;
                argmin = beta;
            }
        }
        OriginCheck {
            origin,
            lowest,
            argmin: argmin.iter().copied().collect(),
        }
    }

    /// Marginal density of the homodyne outcomes along `axes`, one axis per
    /// distinct mode; the remaining phase-space variables are integrated out.
    pub fn marginal(&self, axes: &[QuadratureAxis]) -> Result<MarginalForm> {
        let m = self.mode_count();
        if axes.is_empty() || axes.len() > m {
            return Err(Error::InvalidInput(format!("need between 1 and {m} axes, got {}", axes.len())));
        }
        let mut seen = vec![false; m];
        for a in axes {
            if a.mode >= m {
                return Err(Error::InvalidInput(format!("axis mode {} out of range for {m} modes", a.mode)));
            }
            if std::mem::replace(&mut seen[a.mode], true) {
                return Err(Error::InvalidInput(format!("mode {} appears twice in the measurement axes", a.mode)));
            }
        }

        // Rotate each measured mode so its x-coordinate is x cosθ + p sinθ.
        let n = 2 * m;
        let mut rot = DMatrix::<f64>::identity(n, n);
        for a in axes {
            let (s, c) = a.phase.sin_cos();
            rot[(a.mode, a.mode)] = c;
            rot[(a.mode, m + a.mode)] = s;
            rot[(m + a.mode, a.mode)] = -s;
            rot[(m + a.mode, m + a.mode)] = c;
        }
        let v = &rot * self.cov.matrix() * rot.transpose();
        let q = &rot * &self.quadratic * rot.transpose();

        let kept: Vec<usize> = axes.iter().map(|a| a.mode).collect();
        let rest: Vec<usize> = (0..n).filter(|i| !kept.contains(i)).collect();
        let vxx = select(&v, &kept, &kept);
        let vux = select(&v, &rest, &kept);
        let vuu = select(&v, &rest, &rest);
        let qxx = select(&q, &kept, &kept);
        let qux = select(&q, &rest, &kept);
        let quu = select(&q, &rest, &rest);

        let vxx_inv = vxx
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPhysical("marginal covariance is not positive definite".into()))?
            .inverse();
        // E[u | x] = K x and Cov[u | x] = S.
        let k = &vux * &vxx_inv;
        let s = &vuu - &k * vux.transpose();
        let quadratic = &qxx + qux.transpose() * &k + k.transpose() * &qux + k.transpose() * &quu * &k;
        let constant = self.constant + (&quu * s).trace();
        MarginalForm::new(axes.to_vec(), vxx, linalg::symmetrize(&quadratic), constant)
    }

    pub fn to_record(&self) -> WignerRecord {
        WignerRecord {
            mode_count: self.mode_count(),
            covariance: linalg::row_major(self.cov.matrix()),
            quadratic: linalg::row_major(&self.quadratic),
            constant: self.constant,
            op: self.op.clone(),
        }
    }

    pub fn from_record(record: &WignerRecord) -> Result<Self> {
        let n = 2 * record.mode_count;
        if record.covariance.len() != n * n || record.quadratic.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: record.covariance.len(),
            });
        }
        let cov = CovarianceMatrix::new(linalg::from_row_major(n, n, &record.covariance))?;
        let quadratic = linalg::from_row_major(n, n, &record.quadratic);
        Self::from_parts(cov, quadratic, record.constant, record.op.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(s)?)
    }
}

fn invert_covariance(cov: &CovarianceMatrix) -> DMatrix<f64> {
    let inv = cov.matrix().clone().cholesky().expect("covariance is positive definite").inverse();
    linalg::symmetrize(&inv)
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Serialized form of a [`WignerForm`], matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerRecord {
    pub mode_count: usize,
    pub covariance: Vec<f64>,
    pub quadratic: Vec<f64>,
    pub constant: f64,
    pub op: NonGaussianOp,
}

#[derive(Debug, Clone)]
pub struct OriginCheck {
    pub origin: f64,
    pub lowest: f64,
    pub argmin: Vec<f64>,
}

impl OriginCheck {
    pub fn origin_is_minimal(&self, tol: f64) -> bool {
        self.lowest >= self.origin - tol
    }
}

/// A homodyne axis: the quadrature `x cosθ + p sinθ` of one mode (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureAxis {
    pub mode: usize,
    pub phase: f64,
}

/// `p(x) = ½(xᵀM̃x + c̃) G_Σ(x)` over the measured axes.
#[derive(Debug, Clone)]
pub struct MarginalForm {
    axes: Vec<QuadratureAxis>,
    sigma: DMatrix<f64>,
    quadratic: DMatrix<f64>,
    constant: f64,
    cholesky: DMatrix<f64>,
    precision: DMatrix<f64>,
    peak: f64,
}

impl MarginalForm {
    pub fn new(axes: Vec<QuadratureAxis>, sigma: DMatrix<f64>, quadratic: DMatrix<f64>, constant: f64) -> Result<Self> {
        let d = sigma.nrows();
        if axes.len() != d || quadratic.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: quadratic.nrows() });
        }
        let sigma = linalg::symmetrize(&sigma);
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPhysical("marginal covariance is not positive definite".into()))?;
        let precision = linalg::symmetrize(&chol.inverse());
        let cholesky = chol.l();
        let det_sqrt: f64 = cholesky.diagonal().iter().product();
        let peak = (2.0 * PI).powf(-(d as f64) / 2.0) / det_sqrt;
        let form = Self {
            axes,
            sigma,
            quadratic,
            constant,
            cholesky,
            precision,
            peak,
        };
        let norm = form.normalization();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotPhysical(format!("marginal normalization {norm} differs from 1")));
        }
        Ok(form)
    }

    pub fn dimension(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn axes(&self) -> &[QuadratureAxis] {
        &self.axes
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.quadratic
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Lower Cholesky factor `L` with `Σ = L Lᵀ`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    pub fn normalization(&self) -> f64 {
        0.5 * ((&self.sigma * &self.quadratic).trace() + self.constant)
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: x.len(),
            });
        }
        let v = DVector::from_column_slice(x);
        Ok(self.density_vec(&v))
    }

    pub(crate) fn density_vec(&self, x: &DVector<f64>) -> f64 {
        let pre = 0.5 * (linalg::quadratic_form(&self.quadratic, x) + self.constant);
        pre * self.peak * (-0.5 * linalg::quadratic_form(&self.precision, x)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{sample_state_spec, StatePrior, SymplecticOrthogonal};
    use crate::rng::stream;

    fn cov(entries: &[f64]) -> CovarianceMatrix {
        let n = linalg::square_side(entries.len()).unwrap();
        CovarianceMatrix::new(DMatrix::from_row_slice(n, n, entries)).unwrap()
    }

    fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    }

    fn random_form(seed: u64, modes: usize) -> WignerForm {
        let mut rng = stream(seed, 0, 0);
        loop {
            let v = sample_state_spec(modes, &StatePrior::default(), &mut rng)
                .unwrap()
                .assemble_covariance()
                .unwrap();
            let g = random_unit(2 * modes, &mut rng);
            let op = match rng.random_range(0..3) {
                0 => NonGaussianOp::None,
                1 => NonGaussianOp::add(g).unwrap(),
                _ => NonGaussianOp::subtract(g).unwrap(),
            };
            if let Ok(f) = WignerForm::build(v, op) {
                return f;
            }
        }
    }

    fn photon_added_vacuum() -> WignerForm {
        WignerForm::build(CovarianceMatrix::vacuum(1), NonGaussianOp::add(vec![1.0, 0.0]).unwrap()).unwrap()
    }

    #[test]
    fn a_matrix_for_added_vacuum() {
        let a = build_a_matrix(&CovarianceMatrix::vacuum(1), &[1.0, 0.0], PhotonOp::Add).unwrap();
        assert!(linalg::max_abs_diff(&a, &(DMatrix::identity(2, 2) * 2.0)) < 1e-15);
    }

    #[test]
    fn subtraction_from_vacuum_is_degenerate() {
        let mut rng = stream(2, 0, 0);
        for _ in 0..10 {
            let g = random_unit(4, &mut rng);
            assert!(matches!(
                build_a_matrix(&CovarianceMatrix::vacuum(2), &g, PhotonOp::Subtract),
                Err(Error::DegenerateSubtraction { .. })
            ));
        }
    }

    #[test]
    fn a_matrix_for_subtraction_from_squeezed_state() {
        // V - 1 = diag(1, -1/2), P = 1, trace denominator 1/2.
        let a = build_a_matrix(&cov(&[2.0, 0.0, 0.0, 0.5]), &[1.0, 0.0], PhotonOp::Subtract).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        assert!(linalg::max_abs_diff(&a, &want) < 1e-14);
    }

    #[test]
    fn a_matrix_rejects_non_unit_mode() {
        assert!(build_a_matrix(&CovarianceMatrix::vacuum(1), &[2.0, 0.0], PhotonOp::Add).is_err());
        assert!(NonGaussianOp::add(vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn gaussian_form_is_identity_prefactor() {
        let f = WignerForm::build(cov(&[2.0, 0.3, 0.3, 1.0]), NonGaussianOp::None).unwrap();
        assert_eq!(f.constant(), 2.0);
        assert!(f.quadratic().iter().all(|x| *x == 0.0));
        let peak = 1.0 / (2.0 * PI) / f.covariance().determinant().sqrt();
        assert!((f.wigner_at(&[0.0, 0.0]).unwrap() - peak).abs() < 1e-15);
        assert!(f.wigner_min() > 0.0);
    }

    #[test]
    fn photon_added_vacuum_form() {
        let f = photon_added_vacuum();
        assert!(linalg::max_abs_diff(f.quadratic(), &(DMatrix::identity(2, 2) * 2.0)) < 1e-14);
        assert!((f.constant() + 2.0).abs() < 1e-14);
        assert!((f.wigner_at(&[0.0, 0.0]).unwrap() + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((f.wigner_min() + 1.0 / (2.0 * PI)).abs() < 1e-15);
        for t in [0.0f64, 0.7, 2.0] {
            assert!(f.wigner_at(&[t.cos(), t.sin()]).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn half_loss_kills_single_photon_negativity() {
        // Loss on the covariance before the operation leaves vacuum unchanged.
        let lossy = CovarianceMatrix::vacuum(1).apply_loss(0.5).unwrap();
        let before = WignerForm::build(lossy, NonGaussianOp::add(vec![1.0, 0.0]).unwrap()).unwrap();
        assert!((before.wigner_min() + 1.0 / (2.0 * PI)).abs() < 1e-15);
        let after = photon_added_vacuum().apply_loss(0.5).unwrap();
        assert!(after.constant().abs() < 1e-14);
        assert!(after.wigner_min().abs() < 1e-15);
    }

    #[test]
    fn loss_after_addition_mixes_fock_zero_and_one() {
        // (1−λ)|1⟩⟨1| + λ|0⟩⟨0| has prefactor (1−λ)|β|² + 2λ − 1.
        for lambda in [0.0, 0.1, 0.3, 0.8] {
            let f = photon_added_vacuum().apply_loss(lambda).unwrap();
            assert!(linalg::max_abs_diff(f.quadratic(), &(DMatrix::identity(2, 2) * (2.0 * (1.0 - lambda)))) < 1e-14);
            assert!((f.constant() - 2.0 * (2.0 * lambda - 1.0)).abs() < 1e-14);
        }
        assert!(photon_added_vacuum().apply_loss(1.5).is_err());
    }

    #[test]
    fn loss_on_form_matches_convolution() {
        // Oracle: W'(β') = E_ν[W((β' − √λ ν)/√(1−λ))]/(1−λ)^m, ν ~ vacuum, by grid quadrature.
        let cov = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.8])).unwrap();
        let f = WignerForm::build(cov, NonGaussianOp::subtract(vec![0.6, 0.8]).unwrap()).unwrap();
        let lambda = 0.3;
        let lossy = f.apply_loss(lambda).unwrap();
        let (t, s) = ((1.0f64 - lambda).sqrt(), lambda.sqrt());
        let h = 0.02;
        for probe in [[0.0, 0.0], [0.5, -0.4], [1.2, 0.9]] {
            let mut acc = 0.0;
            for i in -400..=400 {
                for j in -400..=400 {
                    let (a, b) = (i as f64 * h, j as f64 * h);
                    let w = (-(a * a + b * b) / 2.0).exp() / (2.0 * PI);
                    let x = (probe[0] - s * a) / t;
                    let y = (probe[1] - s * b) / t;
                    acc += w * f.wigner_at(&[x, y]).unwrap();
                }
            }
            let want = acc * h * h / (t * t);
            assert!((lossy.wigner_at(&probe).unwrap() - want).abs() < 1e-8, "{probe:?}");
        }
    }

    #[test]
    fn normalization_identity_on_random_forms() {
        for seed in 0..100 {
            let f = random_form(seed, 1 + (seed as usize % 4));
            assert!((f.normalization() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_under_inversion() {
        let mut rng = stream(8, 0, 0);
        for seed in 0..20 {
            let f = random_form(seed, 3);
            let b: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let nb: Vec<f64> = b.iter().map(|x| -x).collect();
            assert_eq!(f.wigner_at(&b).unwrap(), f.wigner_at(&nb).unwrap());
        }
    }

    #[test]
    fn basis_change_preserves_minimum() {
        let mut rng = stream(9, 0, 0);
        for seed in 0..20 {
            let f = random_form(seed + 200, 3);
            let o = SymplecticOrthogonal::sample_haar(3, &mut rng);
            let om = o.matrix();
            let v2 = CovarianceMatrix::new(linalg::symmetrize(&(om * f.covariance().matrix() * om.transpose()))).unwrap();
            let op2 = match f.op() {
                NonGaussianOp::None => NonGaussianOp::None,
                NonGaussianOp::Add { mode } => {
                    NonGaussianOp::normalized(PhotonOp::Add, (om * DVector::from_column_slice(mode)).iter().copied().collect()).unwrap()
                }
                NonGaussianOp::Subtract { mode } => NonGaussianOp::normalized(
                    PhotonOp::Subtract,
                    (om * DVector::from_column_slice(mode)).iter().copied().collect(),
                )
                .unwrap(),
            };
            let f2 = WignerForm::build(v2, op2).unwrap();
            assert!((f.scaled_min() - f2.scaled_min()).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_forms_are_positive() {
        let mut rng = stream(10, 0, 0);
        for _ in 0..50 {
            let v = sample_state_spec(4, &StatePrior::default(), &mut rng).unwrap().assemble_covariance().unwrap();
            assert!(WignerForm::gaussian(v).wigner_min() > 0.0);
        }
    }

    #[test]
    fn origin_is_the_minimum_for_negative_states() {
        let mut rng = stream(14, 0, 0);
        let mut checked = 0;
        for seed in 0..60 {
            let f = random_form(seed + 500, 2 + seed as usize % 2);
            if f.wigner_min() >= 0.0 {
                continue;
            }
            let check = f.verify_origin_minimum(32, &mut rng);
            assert!(check.origin_is_minimal(1e-9), "seed {seed}: {check:?}");
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn vacuum_marginal_is_standard_normal() {
        let f = WignerForm::gaussian(CovarianceMatrix::vacuum(1));
        let p = f.marginal(&[QuadratureAxis { mode: 0, phase: 0.0 }]).unwrap();
        assert!((p.density(&[0.0]).unwrap() - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn single_photon_marginal_is_phase_independent() {
        let f = photon_added_vacuum();
        for theta in [0.0, 0.4, 1.3, 2.9] {
            let p = f.marginal(&[QuadratureAxis { mode: 0, phase: theta }]).unwrap();
            for x in [-2.5f64, -1.0, 0.0, 0.3, 1.7] {
                let want = x * x * (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
                assert!((p.density(&[x]).unwrap() - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn epr_subtracted_marginals_normalized() {
        let s = 10f64.powf(0.3);
        let mut spec = crate::gaussian::GaussianStateSpec::vacuum(2);
        spec.squeezing_db = vec![3.0, 3.0];
        let u = DMatrix::from_row_slice(
            2,
            2,
            &[
                num_complex::Complex64::new(1.0, 0.0),
                num_complex::Complex64::new(0.0, 1.0),
                num_complex::Complex64::new(-1.0, 0.0),
                num_complex::Complex64::new(0.0, 1.0),
            ],
        ) * num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        spec.o2 = Some(SymplecticOrthogonal::from_unitary(&u).unwrap());
        let v = spec.assemble_covariance().unwrap();
        assert!((v.matrix()[(0, 0)] - (s + 1.0 / s) / 2.0).abs() < 1e-12);
        let f = WignerForm::build(v, NonGaussianOp::subtract(vec![1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        for axes in [
            vec![QuadratureAxis { mode: 1, phase: 0.3 }],
            vec![QuadratureAxis { mode: 0, phase: 1.1 }],
            vec![QuadratureAxis { mode: 0, phase: 0.2 }, QuadratureAxis { mode: 1, phase: 2.0 }],
        ] {
            assert!((f.marginal(&axes).unwrap().normalization() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn marginal_rejects_duplicate_modes() {
        let f = random_form(3, 2);
        let axes = [QuadratureAxis { mode: 1, phase: 0.0 }, QuadratureAxis { mode: 1, phase: 1.0 }];
        assert!(f.marginal(&axes).is_err());
        assert!(f.marginal(&[QuadratureAxis { mode: 2, phase: 0.0 }]).is_err());
    }

    #[test]
    fn marginals_are_nonnegative_on_probe_grid() {
        let mut rng = stream(15, 0, 0);
        for seed in 0..30 {
            let f = random_form(seed + 900, 1 + seed as usize % 3);
            let axis = [QuadratureAxis { mode: 0, phase: rng.random::<f64>() * PI }];
            let p = f.marginal(&axis).unwrap();
            for i in 0..10_000 {
                let x = -8.0 + 16.0 * i as f64 / 9_999.0;
                assert!(p.density(&[x]).unwrap() >= -1e-12);
            }
        }
    }

    /// Trapezoid over the integrated-out variables of a one-mode form.
    fn marginal_by_quadrature(f: &WignerForm, theta: f64, x: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let (n, half) = (4001, 12.0);
        let h = 2.0 * half / (n - 1) as f64;
        let mut sum = 0.0;
        for i in 0..n {
            let y = -half + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            // (x, y) in the rotated frame back to (q, p).
            let beta = [c * x - s * y, s * x + c * y];
            sum += w * f.wigner_at(&beta).unwrap();
        }
        sum * h
    }

    #[test]
    fn marginal_matches_grid_quadrature() {
        for seed in 0..8 {
            let f = random_form(seed + 40, 1);
            for theta in [0.0, 0.9, 2.2] {
                let p = f.marginal(&[QuadratureAxis { mode: 0, phase: theta }]).unwrap();
                for x in [-1.5, 0.0, 0.8, 2.4] {
                    let want = marginal_by_quadrature(&f, theta, x);
                    assert!((p.density(&[x]).unwrap() - want).abs() < 1e-6, "seed {seed} θ {theta} x {x}");
                }
            }
        }
    }

    #[test]
    fn reduced_state_of_photon_on_first_mode() {
        let f = WignerForm::build(CovarianceMatrix::vacuum(2), NonGaussianOp::add(vec![1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        let r0 = f.reduced(&[0]).unwrap();
        assert!((r0.wigner_min() + 1.0 / (2.0 * PI)).abs() < 1e-12);
        let r1 = f.reduced(&[1]).unwrap();
        assert!((r1.wigner_min() - 1.0 / (2.0 * PI)).abs() < 1e-12);
        assert!(f.reduced(&[1, 0]).is_err());
    }

    #[test]
    fn reduced_marginals_match_joint_marginals() {
        let f = random_form(41, 3);
        for mode in 0..3 {
            let r = f.reduced(&[mode]).unwrap();
            for theta in [0.0, 0.7, 2.1] {
                let joint = f.marginal(&[QuadratureAxis { mode, phase: theta }]).unwrap();
                let local = r.marginal(&[QuadratureAxis { mode: 0, phase: theta }]).unwrap();
                for x in [-2.0, -0.3, 0.0, 1.1] {
                    let (a, b) = (joint.density(&[x]).unwrap(), local.density(&[x]).unwrap());
                    assert!((a - b).abs() < 1e-12, "{a} {b}");
                }
            }
        }
        let pair = f.reduced(&[0, 2]).unwrap();
        let axes = [QuadratureAxis { mode: 0, phase: 0.4 }, QuadratureAxis { mode: 2, phase: 1.3 }];
        let local = [QuadratureAxis { mode: 0, phase: 0.4 }, QuadratureAxis { mode: 1, phase: 1.3 }];
        let a = f.marginal(&axes).unwrap().density(&[0.2, -0.5]).unwrap();
        let b = pair.marginal(&local).unwrap().density(&[0.2, -0.5]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let f = random_form(77, 2);
        let back = WignerForm::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back.to_record(), f.to_record());
    }
}
