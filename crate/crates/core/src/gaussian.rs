//! Random physical multimode Gaussian states.
//!
//! Covariance matrices are assembled from the Williamson and Bloch-Messiah
//! factors `V = O2 K O1 Δ O1ᵀ K O2ᵀ`, followed by an optional uniform loss
//! channel. Quadratures use xxpp ordering and the vacuum has `V = 1`.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, symplectic_form};

/// Entrywise tolerance for algebraic identities of constructed matrices.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Tolerance for spectra of composed products.
pub const SPECTRAL_TOL: f64 = 1e-8;

/// A passive linear-optics basis change: orthogonal and symplectic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SymplecticOrthogonal {
    matrix: DMatrix<f64>,
}

impl SymplecticOrthogonal {
    pub fn identity(modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    /// Realification `[[X, Y], [-Y, X]]` of the unitary `U = X + iY`.
    pub fn from_unitary(u: &DMatrix<Complex64>) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::InvalidInput("unitary must be square".into()));
        }
        let m = u.nrows();
        let mut o = DMatrix::zeros(2 * m, 2 * m);
        for r in 0..m {
            for c in 0..m {
                let z = u[(r, c)];
                o[(r, c)] = z.re;
                o[(r, m + c)] = z.im;
                o[(m + r, c)] = -z.im;
                o[(m + r, m + c)] = z.re;
            }
        }
        Self::from_matrix(o)
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || !n.is_multiple_of(2) || n == 0 {
            return Err(Error::InvalidInput(format!(
                "basis change must be a nonempty even square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let id = DMatrix::identity(n, n);
        let orth = linalg::max_abs_diff(&(matrix.transpose() * &matrix), &id);
        if orth > IDENTITY_TOL {
            return Err(Error::InvalidInput(format!("basis change is not orthogonal (deviation {orth:e})")));
        }
        let j = symplectic_form(n / 2);
        let sympl = linalg::max_abs_diff(&(&matrix * &j * matrix.transpose()), &j);
        if sympl > IDENTITY_TOL {
            return Err(Error::InvalidInput(format!("basis change is not symplectic (deviation {sympl:e})")));
        }
        Ok(Self { matrix })
    }

    /// Haar-random basis change built from a Haar-random `m × m` unitary.
    pub fn sample_haar<R: Rng + ?Sized>(modes: usize, rng: &mut R) -> Self {
        let u = sample_haar_unitary(modes, rng);
        Self::from_unitary(&u).expect("Haar unitary realifies to a symplectic orthogonal matrix")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mode_count(&self) -> usize {
        self.matrix.nrows() / 2
    }
}

impl TryFrom<Vec<f64>> for SymplecticOrthogonal {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        let side = linalg::square_side(data.len())
            .ok_or_else(|| Error::InvalidInput(format!("{} entries do not form a square matrix", data.len())))?;
        Self::from_matrix(linalg::from_row_major(side, side, &data))
    }
}

impl From<SymplecticOrthogonal> for Vec<f64> {
    fn from(o: SymplecticOrthogonal) -> Self {
        linalg::row_major(&o.matrix)
    }
}

/// Haar-distributed unitary via QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal divided out.
pub fn sample_haar_unitary<R: Rng + ?Sized>(modes: usize, rng: &mut R) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(modes, modes, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..modes {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for row in 0..modes {
            q[(row, c)] *= phase;
        }
    }
    q
}

/// Real symmetric, positive definite covariance satisfying `V + iJ ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || !n.is_multiple_of(2) || n == 0 {
            return Err(Error::NotPhysical(format!(
                "covariance must be a nonempty even square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPhysical("covariance has non-finite entries".into()));
        }
        let asym = linalg::max_asymmetry(&matrix);
        if asym > IDENTITY_TOL {
            return Err(Error::NotPhysical(format!("covariance is not symmetric (deviation {asym:e})")));
        }
        let matrix = linalg::symmetrize(&matrix);
        let uncertainty = linalg::min_eig_with_form(&matrix, &symplectic_form(n / 2));
        if uncertainty < -SPECTRAL_TOL {
            return Err(Error::NotPhysical(format!(
                "V + iJ has eigenvalue {uncertainty:e} below zero"
            )));
        }
        if linalg::min_symmetric_eig(&matrix) <= 0.0 {
            return Err(Error::NotPhysical("covariance is not positive definite".into()));
        }
        Ok(Self { matrix })
    }

    pub fn vacuum(modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mode_count(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// Uniform loss `V ↦ (1-λ)V + λ1`.
    pub fn apply_loss(&self, loss: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&loss) {
            return Err(Error::InvalidInput(format!("loss {loss} outside [0, 1]")));
        }
        let n = self.matrix.nrows();
        let keep = 1.0 - loss;
        let matrix = DMatrix::from_fn(n, n, |r, c| {
            let id = if r == c { loss } else { 0.0 };
            keep * self.matrix[(r, c)] + id
        });
        Ok(Self { matrix })
    }

    /// Row-major CSV, one matrix row per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for r in 0..self.matrix.nrows() {
            let row: Vec<String> = (0..self.matrix.ncols()).map(|c| self.matrix[(r, c)].to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// The random parameters that define one Gaussian state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStateSpec {
    pub mode_count: usize,
    pub eta: Vec<f64>,
    pub squeezing_db: Vec<f64>,
    pub o1: SymplecticOrthogonal,
    pub o2: Option<SymplecticOrthogonal>,
    pub loss: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GaussianStateSpec {
    pub fn vacuum(modes: usize) -> Self {
        Self {
            mode_count: modes,
            eta: vec![1.0; modes],
            squeezing_db: vec![0.0; modes],
            o1: SymplecticOrthogonal::identity(modes),
            o2: None,
            loss: 0.0,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mode_count;
        if m == 0 {
            return Err(Error::InvalidInput("mode count must be positive".into()));
        }
        if self.eta.len() != m || self.squeezing_db.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: self.eta.len().min(self.squeezing_db.len()),
            });
        }
        if let Some(bad) = self.eta.iter().find(|e| !(**e >= 1.0) || !e.is_finite()) {
            return Err(Error::InvalidInput(format!("thermal eigenvalue {bad} is below 1")));
        }
        if let Some(bad) = self.squeezing_db.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(format!("squeezing {bad} dB is negative")));
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(Error::InvalidInput(format!("loss {} outside [0, 1]", self.loss)));
        }
        for o in std::iter::once(&self.o1).chain(self.o2.as_ref()) {
            if o.mode_count() != m {
                return Err(Error::DimensionMismatch {
                    expected: 2 * m,
                    actual: o.matrix().nrows(),
                });
            }
        }
        Ok(())
    }

    /// `V = O2 K O1 Δ O1ᵀ K O2ᵀ`, then the loss channel.
    pub fn assemble_covariance(&self) -> Result<CovarianceMatrix> {
        self.validate()?;
        let m = self.mode_count;
        let mut k = DMatrix::zeros(2 * m, 2 * m);
        let mut delta = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            let s = 10f64.powf(self.squeezing_db[i] / 10.0).sqrt();
            k[(i, i)] = s;
            k[(m + i, m + i)] = 1.0 / s;
            delta[(i, i)] = self.eta[i];
            delta[(m + i, m + i)] = self.eta[i];
        }
        let o1 = self.o1.matrix();
        let inner = o1 * delta * o1.transpose();
        let mut v = &k * inner * &k;
        if let Some(o2) = &self.o2 {
            v = o2.matrix() * v * o2.matrix().transpose();
        }
        let v = CovarianceMatrix::new(linalg::symmetrize(&v))?;
        v.apply_loss(self.loss)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Ranges the random state generator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatePrior {
    /// Maximal squeezing in dB; values are uniform on `[0, s_max_db]`.
    pub s_max_db: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Probability of applying the second basis change.
    pub p_basis2: f64,
    pub loss_min: f64,
    pub loss_max: f64,
    /// Probability of a photon addition or subtraction (split evenly).
    pub p_degauss: f64,
}

impl Default for StatePrior {
    fn default() -> Self {
        Self {
            s_max_db: 8.0,
            eta_min: 1.0,
            eta_max: 1.1,
            p_basis2: 0.5,
            loss_min: 0.0,
            loss_max: 0.6,
            p_degauss: 2.0 / 3.0,
        }
    }
}

impl StatePrior {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.s_max_db >= 0.0) || !self.s_max_db.is_finite() {
            return Err(Error::InvalidConfig(format!("s_max_db {} must be >= 0", self.s_max_db)));
        }
        if !(self.eta_min >= 1.0) || !(self.eta_max >= self.eta_min) || !self.eta_max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "thermal range [{}, {}] must satisfy 1 <= eta_min <= eta_max",
                self.eta_min, self.eta_max
            )));
        }
        if !prob(self.loss_min) || !prob(self.loss_max) || self.loss_min > self.loss_max {
            return Err(Error::InvalidConfig(format!(
                "loss range [{}, {}] must lie in [0, 1]",
                self.loss_min, self.loss_max
            )));
        }
        if !prob(self.p_basis2) || !prob(self.p_degauss) {
            return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

/// Draws thermal eigenvalues, squeezing, basis changes and loss from the prior.
pub fn sample_state_spec<R: Rng + ?Sized>(modes: usize, prior: &StatePrior, rng: &mut R) -> Result<GaussianStateSpec> {
    if modes == 0 {
        return Err(Error::InvalidConfig("mode count must be positive".into()));
    }
    prior.validate()?;
    let eta = (0..modes).map(|_| uniform(rng, prior.eta_min, prior.eta_max)).collect();
    let squeezing_db = (0..modes).map(|_| uniform(rng, 0.0, prior.s_max_db)).collect();
    let o1 = SymplecticOrthogonal::sample_haar(modes, rng);
    let o2 = (rng.random::<f64>() < prior.p_basis2).then(|| SymplecticOrthogonal::sample_haar(modes, rng));
    let loss = uniform(rng, prior.loss_min, prior.loss_max);
    Ok(GaussianStateSpec {
        mode_count: modes,
        eta,
        squeezing_db,
        o1,
        o2,
        loss,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn check_basis_change(o: &SymplecticOrthogonal) {
        let n = o.matrix().nrows();
        let id = DMatrix::identity(n, n);
        let j = symplectic_form(n / 2);
        assert!(linalg::max_abs_diff(&(o.matrix().transpose() * o.matrix()), &id) < IDENTITY_TOL);
        assert!(linalg::max_abs_diff(&(o.matrix() * &j * o.matrix().transpose()), &j) < IDENTITY_TOL);
    }

    #[test]
    fn identity_unitary_gives_identity() {
        let o = SymplecticOrthogonal::from_unitary(&DMatrix::identity(1, 1)).unwrap();
        assert_eq!(o.matrix(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn haar_draws_are_symplectic_orthogonal() {
        let mut rng = stream(11, 0, 0);
        for m in 1..=6 {
            for _ in 0..20 {
                check_basis_change(&SymplecticOrthogonal::sample_haar(m, &mut rng));
            }
        }
    }

    #[test]
    fn haar_columns_orthonormal_over_many_draws() {
        let mut rng = stream(12, 0, 0);
        for _ in 0..1000 {
            let o = SymplecticOrthogonal::sample_haar(2, &mut rng);
            let g = o.matrix().transpose() * o.matrix();
            for r in 0..4 {
                for c in 0..4 {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!((g[(r, c)] - want).abs() < 1e-12);
                }
            }
            assert!((o.matrix().column(0).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_first_column_has_no_preferred_direction() {
        let mut rng = stream(13, 0, 0);
        let mut mean = DVector::<f64>::zeros(6);
        let draws = 10_000;
        for _ in 0..draws {
            mean += SymplecticOrthogonal::sample_haar(3, &mut rng).matrix().column(0);
        }
        mean /= draws as f64;
        assert!(mean.norm() < 0.05, "mean norm {}", mean.norm());
    }

    #[test]
    fn non_orthogonal_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!(SymplecticOrthogonal::from_matrix(m).is_err());
    }

    #[test]
    fn neutral_spec_is_vacuum() {
        let prior = StatePrior {
            s_max_db: 0.0,
            eta_min: 1.0,
            eta_max: 1.0,
            p_basis2: 0.0,
            loss_min: 0.0,
            loss_max: 0.0,
            p_degauss: 0.0,
        };
        let mut rng = stream(1, 0, 0);
        let mut spec = sample_state_spec(2, &prior, &mut rng).unwrap();
        spec.o1 = SymplecticOrthogonal::identity(2);
        assert!(spec.o2.is_none());
        let v = spec.assemble_covariance().unwrap();
        assert!(linalg::max_abs_diff(v.matrix(), &DMatrix::identity(4, 4)) < 1e-15);
    }

    #[test]
    fn vacuum_spec_assembles_identity() {
        let v = GaussianStateSpec::vacuum(3).assemble_covariance().unwrap();
        assert_eq!(v.matrix(), &DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn single_mode_eight_db_squeezing() {
        let mut spec = GaussianStateSpec::vacuum(1);
        spec.squeezing_db = vec![8.0];
        let v = spec.assemble_covariance().unwrap();
        let s = 10f64.powf(0.8);
        assert!((v.matrix()[(0, 0)] - s).abs() < 1e-12);
        assert!((v.matrix()[(1, 1)] - 1.0 / s).abs() < 1e-12);
        assert_eq!(v.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn loss_identity_full_and_worked_example() {
        let v = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        assert_eq!(v.apply_loss(0.0).unwrap(), v);
        assert_eq!(v.apply_loss(1.0).unwrap().matrix(), &DMatrix::<f64>::identity(2, 2));
        let lossy = v.apply_loss(0.12).unwrap();
        assert!((lossy.matrix()[(0, 0)] - 1.88).abs() < 1e-14);
        assert!((lossy.matrix()[(1, 1)] - 0.56).abs() < 1e-14);
        assert!(v.apply_loss(1.5).is_err());
        assert!(v.apply_loss(-0.1).is_err());
    }

    #[test]
    fn unphysical_covariance_rejected() {
        let squeezed_below_heisenberg = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        assert!(matches!(
            CovarianceMatrix::new(squeezed_below_heisenberg),
            Err(Error::NotPhysical(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(CovarianceMatrix::new(asym).is_err());
    }

    #[test]
    fn sampled_specs_satisfy_invariants_over_many_draws() {
        let prior = StatePrior {
            loss_max: 0.0,
            ..StatePrior::default()
        };
        let mut rng = stream(21, 0, 0);
        for _ in 0..10_000 {
            let spec = sample_state_spec(3, &prior, &mut rng).unwrap();
            spec.validate().unwrap();
            assert!(spec.eta.iter().all(|e| (1.0..=1.1).contains(e)));
            assert!(spec.squeezing_db.iter().all(|s| (0.0..=8.0).contains(s)));
        }
    }

    #[test]
    fn sampled_covariances_are_physical_with_det_at_least_one() {
        let mut rng = stream(22, 0, 0);
        for _ in 0..500 {
            let spec = sample_state_spec(3, &StatePrior::default(), &mut rng).unwrap();
            let v = spec.assemble_covariance().unwrap();
            assert!(linalg::max_asymmetry(v.matrix()) < IDENTITY_TOL);
            assert!(linalg::min_eig_with_form(v.matrix(), &symplectic_form(3)) >= -SPECTRAL_TOL);
            assert!(v.determinant() >= 1.0 - SPECTRAL_TOL);
        }
    }

    #[test]
    fn same_seed_same_spec_and_covariance() {
        let a = sample_state_spec(4, &StatePrior::default(), &mut stream(5, 1, 9)).unwrap();
        let b = sample_state_spec(4, &StatePrior::default(), &mut stream(5, 1, 9)).unwrap();
        assert_eq!(a, b);
        let va = a.assemble_covariance().unwrap();
        let vb = b.assemble_covariance().unwrap();
        assert!(va.matrix().iter().zip(vb.matrix().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn spec_json_round_trip() {
        let mut spec = sample_state_spec(2, &StatePrior::default(), &mut stream(3, 0, 0)).unwrap();
        spec.seed = Some(3);
        let json = spec.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["o1"].as_array().unwrap().len(), 16);
        assert_eq!(GaussianStateSpec::from_json(&json).unwrap(), spec);
    }

    #[test]
    fn covariance_csv_is_row_major() {
        let v = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.25, 0.25, 1.0])).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "2,0.25\n0.25,1\n");
    }

    #[test]
    fn invalid_priors_rejected() {
        let bad = [
            StatePrior { eta_min: 0.5, ..StatePrior::default() },
            StatePrior { eta_max: 0.9, ..StatePrior::default() },
            StatePrior { loss_max: 1.5, ..StatePrior::default() },
            StatePrior { s_max_db: -1.0, ..StatePrior::default() },
            StatePrior { p_basis2: 2.0, ..StatePrior::default() },
        ];
        for prior in bad {
            assert!(prior.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn loss_is_affine(loss in 0.0f64..=1.0, seed in 0u64..1000) {
            let spec = sample_state_spec(2, &StatePrior { loss_max: 0.0, ..StatePrior::default() }, &mut stream(seed, 0, 0)).unwrap();
            let v = spec.assemble_covariance().unwrap();
            let lossy = v.apply_loss(loss).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    let id = if r == c { loss } else { 0.0 };
                    prop_assert_eq!(lossy.matrix()[(r, c)], (1.0 - loss) * v.matrix()[(r, c)] + id);
                }
            }
            prop_assert!(CovarianceMatrix::new(lossy.matrix().clone()).is_ok());
        }
    }
}
