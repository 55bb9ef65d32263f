//! Maximum-likelihood homodyne tomography on a truncated Fock space and the
//! parity formula for the Wigner function at the origin.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, complex_mul};
use crate::quadrature::QuadratureBatch;

pub const PROBABILITY_FLOOR: f64 = 1e-300;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Slack allowed when checking that the likelihood does not decrease.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Harmonic-oscillator wavefunctions `ψ₀..ψ_N` at `x`, vacuum variance 1.
pub fn fock_wavefunctions(cutoff: usize, x: f64) -> Vec<f64> {
    let mut psi = Vec::with_capacity(cutoff + 1);
    psi.push((2.0 * PI).powf(-0.25) * (-x * x / 4.0).exp());
    if cutoff >= 1 {
        psi.push(x * psi[0]);
    }
    for n in 1..cutoff {
        let next = (x * psi[n] - (n as f64).sqrt() * psi[n - 1]) / ((n + 1) as f64).sqrt();
        psi.push(next);
    }
    psi
}

/// `⟨n|x_θ⟩ = e^{inθ} ψ_n(x)` for `n = 0..=cutoff`.
pub fn quadrature_amplitudes(cutoff: usize, x: f64, theta: f64) -> Vec<Complex64> {
    fock_wavefunctions(cutoff, x)
        .into_iter()
        .enumerate()
        .map(|(n, psi)| Complex64::from_polar(psi, n as f64 * theta))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxLikSettings {
    pub cutoff_photons: usize,
    pub iterations: usize,
    pub max_dimension: usize,
    /// Verifies Hermiticity, trace and positivity after every iteration.
    pub check_invariants: bool,
}

impl Default for MaxLikSettings {
    fn default() -> Self {
        Self {
            cutoff_photons: 5,
            iterations: 15,
            max_dimension: 4096,
            check_invariants: false,
        }
    }
}

impl MaxLikSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("MaxLik needs at least one iteration".into()));
        }
        if self.max_dimension == 0 {
            return Err(Error::InvalidConfig("max_dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn dimension(&self, modes: usize) -> Result<usize> {
        let level = self.cutoff_photons + 1;
        let mut d: usize = 1;
        for _ in 0..modes {
            d = d.checked_mul(level).filter(|d| *d <= self.max_dimension).ok_or(Error::DimensionOverflow {
                dimension: level.saturating_pow(modes as u32),
                limit: self.max_dimension,
            })?;
        }
        Ok(d)
    }
}

/// Density matrix over `(N+1)^m` Fock states, mode 1 most significant in the index.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    mode_count: usize,
    cutoff: usize,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl FockDensityMatrix {
    pub fn new(mode_count: usize, cutoff: usize, re: DMatrix<f64>, im: DMatrix<f64>) -> Result<Self> {
        let d = (cutoff + 1).pow(mode_count as u32);
        for m in [&re, &im] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: m.nrows() });
            }
        }
        let rho = Self {
            mode_count,
            cutoff,
            re,
            im,
        };
        rho.check_invariants()?;
        Ok(rho)
    }

    pub fn maximally_mixed(mode_count: usize, cutoff: usize) -> Self {
        let d = (cutoff + 1).pow(mode_count as u32);
        Self {
            mode_count,
            cutoff,
            re: DMatrix::identity(d, d) / d as f64,
            im: DMatrix::zeros(d, d),
        }
    }

    /// A pure Fock state `|n₁,…,n_m⟩`.
    pub fn fock(cutoff: usize, occupation: &[usize]) -> Result<Self> {
        let mut rho = Self::maximally_mixed(occupation.len(), cutoff);
        rho.re.fill(0.0);
        let i = rho.index_of(occupation)?;
        rho.re[(i, i)] = 1.0;
        Ok(rho)
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dimension(&self) -> usize {
        self.re.nrows()
    }

    pub fn real(&self) -> &DMatrix<f64> {
        &self.re
    }

    pub fn imag(&self) -> &DMatrix<f64> {
        &self.im
    }

    pub fn index_of(&self, occupation: &[usize]) -> Result<usize> {
        if occupation.len() != self.mode_count {
            return Err(Error::DimensionMismatch {
                expected: self.mode_count,
                actual: occupation.len(),
            });
        }
        let mut i = 0;
        for &n in occupation {
            if n > self.cutoff {
                return Err(Error::InvalidInput(format!("occupation {n} above cutoff {}", self.cutoff)));
            }
            i = i * (self.cutoff + 1) + n;
        }
        Ok(i)
    }

    pub fn occupation(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.mode_count];
        for slot in occ.iter_mut().rev() {
            *slot = index % (self.cutoff + 1);
            index /= self.cutoff + 1;
        }
        occ
    }

    pub fn population(&self, occupation: &[usize]) -> Result<f64> {
        let i = self.index_of(occupation)?;
        Ok(self.re[(i, i)])
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        Complex64::new(self.re[(row, col)], self.im[(row, col)])
    }

    pub fn trace(&self) -> f64 {
        self.re.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let a = linalg::max_abs_diff(&self.re, &self.re.transpose());
        let b = linalg::max_abs_diff(&self.im, &(-self.im.transpose()));
        a.max(b)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dimension();
        let h = DMatrix::from_fn(d, d, |r, c| self.element(r, c));
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::NotPhysical(format!("density matrix is not Hermitian (error {herm:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotPhysical(format!("density matrix trace {tr}")));
        }
        let eig = self.min_eigenvalue();
        if eig < -POSITIVITY_TOL {
            return Err(Error::NotPhysical(format!("density matrix has eigenvalue {eig:e}")));
        }
        Ok(())
    }

    /// `W(0) = (2π)^{-m} Σₙ (−1)^{n₁+…+n_m} ⟨n|ρ|n⟩`.
    pub fn wmin_parity(&self) -> f64 {
        let sum: f64 = (0..self.dimension())
            .map(|i| {
                let parity: usize = self.occupation(i).iter().sum();
                if parity.is_multiple_of(2) {
                    self.re[(i, i)]
                } else {
                    -self.re[(i, i)]
                }
            })
            .sum();
        sum / (2.0 * PI).powi(self.mode_count as i32)
    }

    fn normalize_hermitian(&mut self) {
        self.re = linalg::symmetrize(&self.re);
        self.im = (&self.im - self.im.transpose()) * 0.5;
        let tr = self.re.trace();
        self.re /= tr;
        self.im /= tr;
    }
}

pub fn wmin_parity(rho: &FockDensityMatrix) -> f64 {
    rho.wmin_parity()
}

/// Measurements sharing one tuple of local-oscillator phases.
struct PhaseGroup {
    cos: DVector<f64>,
    sin: DVector<f64>,
    /// Real wavefunction products, one row per joint outcome.
    basis: DMatrix<f64>,
}

impl PhaseGroup {
    fn new(phases: &[f64], outcomes: &[Vec<f64>], cutoff: usize) -> Self {
        let m = phases.len();
        let level = cutoff + 1;
        let d = level.pow(m as u32);
        let mut total_phase = vec![0.0; d];
        for (i, tp) in total_phase.iter_mut().enumerate() {
            let mut rest = i;
            for mode in (0..m).rev() {
                *tp += (rest % level) as f64 * phases[mode];
                rest /= level;
            }
        }
        let mut basis = DMatrix::zeros(outcomes.len(), d);
        for (j, values) in outcomes.iter().enumerate() {
            let psis: Vec<Vec<f64>> = values.iter().map(|x| fock_wavefunctions(cutoff, *x)).collect();
            for i in 0..d {
                let mut rest = i;
                let mut prod = 1.0;
                for mode in (0..m).rev() {
                    prod *= psis[mode][rest % level];
                    rest /= level;
                }
                basis[(j, i)] = prod;
            }
        }
        Self {
            cos: DVector::from_iterator(d, total_phase.iter().map(|t| t.cos())),
            sin: DVector::from_iterator(d, total_phase.iter().map(|t| t.sin())),
            basis,
        }
    }

    /// `Re(D†ρD)` with `D = diag(e^{iΣnθ})`.
    fn rotated_real(&self, rho: &FockDensityMatrix) -> DMatrix<f64> {
        let (c, s) = (&self.cos, &self.sin);
        DMatrix::from_fn(rho.dimension(), rho.dimension(), |n, k| {
            let cd = c[n] * c[k] + s[n] * s[k];
            let sd = c[n] * s[k] - s[n] * c[k];
            rho.re[(n, k)] * cd - rho.im[(n, k)] * sd
        })
    }

    fn probabilities(&self, rho: &FockDensityMatrix) -> Vec<f64> {
        let y = &self.basis * self.rotated_real(rho);
        (0..self.basis.nrows()).map(|j| y.row(j).dot(&self.basis.row(j))).collect()
    }

    /// Adds `D (Φᵀ diag(w) Φ) D†` to `(re, im)`.
    fn accumulate(&self, weights: &[f64], re: &mut DMatrix<f64>, im: &mut DMatrix<f64>) {
        let mut scaled = self.basis.clone();
        for (j, w) in weights.iter().enumerate() {
            scaled.row_mut(j).scale_mut(*w);
        }
        let r = self.basis.transpose() * scaled;
        let (c, s) = (&self.cos, &self.sin);
        for n in 0..r.nrows() {
            for k in 0..r.ncols() {
                re[(n, k)] += r[(n, k)] * (c[n] * c[k] + s[n] * s[k]);
                im[(n, k)] += r[(n, k)] * (s[n] * c[k] - c[n] * s[k]);
            }
        }
    }
}

/// Per-mode phases and values of one joint measurement.
type JointOutcome = (Vec<f64>, Vec<f64>);
type PhaseValue = (f64, f64);
/// Shared phase setting and the value vectors recorded under it.
type JointOutcomes = (Vec<f64>, Vec<Vec<f64>>);

/// Joint outcomes keyed by (phase slot, repetition), in slot order.
fn joint_outcomes(batch: &QuadratureBatch, modes: usize) -> Result<Vec<JointOutcome>> {
    let mut records: BTreeMap<(u8, u32), Vec<Option<PhaseValue>>> = BTreeMap::new();
    for e in &batch.entries {
        let mode = e.mode as usize;
        if mode == 0 || mode > modes {
            return Err(Error::InvalidInput(format!("mode {mode} outside 1..={modes}")));
        }
        if !e.value.is_finite() || !e.phase.is_finite() {
            return Err(Error::InvalidInput("quadrature data must be finite".into()));
        }
        let slot = records.entry((e.phase_index, e.repetition)).or_insert_with(|| vec![None; modes]);
        if slot[mode - 1].replace((e.phase, e.value)).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate outcome for mode {mode}, phase slot {}, repetition {}",
                e.phase_index, e.repetition
            )));
        }
    }
    records
        .into_iter()
        .map(|((slot, rep), outcome)| {
            let outcome: Option<Vec<(f64, f64)>> = outcome.into_iter().collect();
            let outcome = outcome.ok_or_else(|| {
                Error::InvalidInput(format!("joint record (phase slot {slot}, repetition {rep}) is missing modes"))
            })?;
            Ok(outcome.into_iter().unzip())
        })
        .collect()
}

fn phase_groups(batch: &QuadratureBatch, modes: usize, cutoff: usize) -> Result<(Vec<PhaseGroup>, usize)> {
    let outcomes = joint_outcomes(batch, modes)?;
    if outcomes.is_empty() {
        return Err(Error::InvalidInput("no quadrature data to reconstruct from".into()));
    }
    let count = outcomes.len();
    let mut grouped: BTreeMap<Vec<u64>, JointOutcomes> = BTreeMap::new();
    for (phases, values) in outcomes {
        let key = phases.iter().map(|p| p.to_bits()).collect();
        grouped.entry(key).or_insert_with(|| (phases, Vec::new())).1.push(values);
    }
    Ok((grouped.values().map(|(p, v)| PhaseGroup::new(p, v, cutoff)).collect(), count))
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rho: FockDensityMatrix,
    /// Log-likelihood of the initial state followed by one value per iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    /// Iterations that fell back to a diluted update.
    pub diluted_steps: usize,
}

impl Reconstruction {
    pub fn wmin(&self) -> f64 {
        self.rho.wmin_parity()
    }

    /// True when no recorded step lowered the likelihood by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.log_likelihood.windows(2).all(|w| w[1] >= w[0] - slack)
    }

    pub fn to_record(&self) -> ReconstructionRecord {
        ReconstructionRecord {
            mode_count: self.rho.mode_count,
            cutoff_photons: self.rho.cutoff,
            iterations: self.iterations,
            real: linalg::row_major(&self.rho.re),
            imag: linalg::row_major(&self.rho.im),
            log_likelihood: self.log_likelihood.clone(),
            wmin_parity: self.wmin(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_record())?;
        crate::features::write_atomically(path, |w| Ok(std::io::Write::write_all(w, json.as_bytes())?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub mode_count: usize,
    pub cutoff_photons: usize,
    pub iterations: usize,
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    pub wmin_parity: f64,
}

impl ReconstructionRecord {
    pub fn density_matrix(&self) -> Result<FockDensityMatrix> {
        let d = (self.cutoff_photons + 1).pow(self.mode_count as u32);
        if self.real.len() != d * d || self.imag.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: self.real.len(),
            });
        }
        FockDensityMatrix::new(
            self.mode_count,
            self.cutoff_photons,
            linalg::from_row_major(d, d, &self.real),
            linalg::from_row_major(d, d, &self.imag),
        )
    }
}

fn log_likelihood(groups: &[PhaseGroup], rho: &FockDensityMatrix) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut ll = 0.0;
    let mut all = Vec::with_capacity(groups.len());
    let mut index = 0;
    for g in groups {
        let p = g.probabilities(rho);
        for v in &p {
            if !(*v >= PROBABILITY_FLOOR) {
                return Err(Error::ZeroProbability { index, value: *v });
            }
            ll += v.ln();
            index += 1;
        }
        all.push(p);
    }
    Ok((ll, all))
}

fn sandwich(a_re: &DMatrix<f64>, a_im: &DMatrix<f64>, rho: &FockDensityMatrix) -> FockDensityMatrix {
    let (t_re, t_im) = complex_mul(a_re, a_im, &rho.re, &rho.im);
    let (re, im) = complex_mul(&t_re, &t_im, a_re, a_im);
    let mut out = FockDensityMatrix {
        mode_count: rho.mode_count,
        cutoff: rho.cutoff,
        re,
        im,
    };
    out.normalize_hermitian();
    out
}

const MAX_DILUTION_HALVINGS: usize = 30;

/// Iterates `ρ ← N[RρR]` from the maximally mixed state, `R = Σⱼ Πⱼ/pⱼ`.
/// A step that would lower the likelihood is replaced by the diluted update
/// `(I + εR/N) ρ (I + εR/N)` with `ε` halved until the likelihood does not drop.
pub fn maxlik_reconstruct(batch: &QuadratureBatch, modes: usize, settings: &MaxLikSettings) -> Result<Reconstruction> {
    settings.validate()?;
    let d = settings.dimension(modes)?;
    let (groups, count) = phase_groups(batch, modes, settings.cutoff_photons)?;
    let mut rho = FockDensityMatrix::maximally_mixed(modes, settings.cutoff_photons);
    let (mut ll, mut probs) = log_likelihood(&groups, &rho)?;
    let mut history = vec![ll];
    let mut diluted = 0;
    for _ in 0..settings.iterations {
        let mut r_re = DMatrix::zeros(d, d);
        let mut r_im = DMatrix::zeros(d, d);
        for (g, p) in groups.iter().zip(&probs) {
            let w: Vec<f64> = p.iter().map(|v| 1.0 / v).collect();
            g.accumulate(&w, &mut r_re, &mut r_im);
        }
        let mut next = sandwich(&r_re, &r_im, &rho);
        let mut eval = log_likelihood(&groups, &next);
        let improved = matches!(&eval, Ok((v, _)) if *v >= ll);
        if !improved {
            diluted += 1;
            let scale = 1.0 / count as f64;
            let mut eps = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_DILUTION_HALVINGS {
                let a_re = DMatrix::identity(d, d) + &r_re * (eps * scale);
                let a_im = &r_im * (eps * scale);
                let candidate = sandwich(&a_re, &a_im, &rho);
                let e = log_likelihood(&groups, &candidate);
                if matches!(&e, Ok((v, _)) if *v >= ll) {
                    next = candidate;
                    eval = e;
                    accepted = true;
                    break;
                }
                eps /= 2.0;
            }
            if !accepted {
                next = rho.clone();
                eval = Ok((ll, probs.clone()));
            }
        }
        let (new_ll, new_probs) = eval?;
        rho = next;
        ll = new_ll;
        probs = new_probs;
        history.push(ll);
        if settings.check_invariants {
            rho.check_invariants()?;
        }
    }
    Ok(Reconstruction {
        rho,
        log_likelihood: history,
        iterations: settings.iterations,
        diluted_steps: diluted,
    })
}

/// One entry of a batch restricted to a single mode, renumbered as mode 1.
pub fn single_mode_batch(batch: &QuadratureBatch, mode: usize) -> QuadratureBatch {
    QuadratureBatch {
        state_id: format!("{}#mode{mode}", batch.state_id),
        mode_count: 1,
        entries: batch
            .entries
            .iter()
            .filter(|e| e.mode as usize == mode)
            .map(|e| crate::quadrature::QuadratureEntry { mode: 1, ..*e })
            .collect(),
    }
}

/// Independent single-mode reconstructions; the state is taken as their product.
#[derive(Debug, Clone)]
pub struct ProductReconstruction {
    pub modes: Vec<Reconstruction>,
}

impl ProductReconstruction {
    pub fn wmin(&self) -> f64 {
        self.modes.iter().map(|r| r.wmin()).product()
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.modes.iter().all(|r| r.is_monotone(slack))
    }
}

pub fn maxlik_reconstruct_product(batch: &QuadratureBatch, modes: usize, settings: &MaxLikSettings) -> Result<ProductReconstruction> {
    let modes = (1..=modes)
        .map(|m| maxlik_reconstruct(&single_mode_batch(batch, m), 1, settings))
        .collect::<Result<_>>()?;
    Ok(ProductReconstruction { modes })
}

/// Negative iff the reconstructed `W(0)` lies below `cutoff`.
pub fn maxlik_classify(batch: &QuadratureBatch, modes: usize, settings: &MaxLikSettings, cutoff: f64) -> Result<bool> {
    Ok(maxlik_reconstruct(batch, modes, settings)?.wmin() < cutoff)
}
