//! Schmidt spectra, purities, pair probabilities, joint temporal amplitudes,
//! JSA fidelities and the purity of heralded-photon mixtures.

use faer::{Mat, MatRef};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussdyn::LOW_GAIN_ADVISORY;
use crate::linalg::{self, CMat, C64, ZERO};
use crate::lingrid::KGrid;

/// One β^h_ij(k, k′) block in continuum normalisation: rows follow output
/// mode i (signal side), columns mode j (idler side), on the same k grid.
#[derive(Clone, Debug)]
pub struct JointSpectralAmplitude {
    pub grid: KGrid,
    pub row_label: String,
    pub col_label: String,
    pub values: CMat,
    /// Non-fatal notes, e.g. leaving the low-gain regime.
    pub advisories: Vec<String>,
}

impl JointSpectralAmplitude {
    pub fn new(grid: KGrid, row_label: &str, col_label: &str, values: CMat) -> Result<Self> {
        if values.nrows() != grid.n_points || values.ncols() != grid.n_points {
            return Err(Error::GridMismatch(format!(
                "JSA is {}x{}, grid has {} points",
                values.nrows(),
                values.ncols(),
                grid.n_points
            )));
        }
        if values.as_ref().col_iter().any(|c| c.iter().any(|x| !x.re.is_finite() || !x.im.is_finite())) {
            return Err(Error::InvalidModel(format!("non-finite JSA entry in ({row_label}, {col_label})")));
        }
        Ok(JointSpectralAmplitude {
            grid,
            row_label: row_label.to_string(),
            col_label: col_label.to_string(),
            values,
            advisories: Vec::new(),
        })
    }

    /// From a dimensionless discrete block (as read off the kernel).
    pub fn from_discrete(grid: KGrid, row_label: &str, col_label: &str, block: MatRef<'_, C64>) -> Self {
        let dk = grid.dk();
        let norm = linalg::frobenius(block);
        let mut advisories = Vec::new();
        if norm > LOW_GAIN_ADVISORY {
            advisories.push(format!(
                "‖β^h‖ = {norm:.3} exceeds {LOW_GAIN_ADVISORY}: first-order pair reading degrades"
            ));
        }
        JointSpectralAmplitude {
            grid,
            row_label: row_label.to_string(),
            col_label: col_label.to_string(),
            values: Mat::from_fn(block.nrows(), block.ncols(), |i, j| block[(i, j)] / dk),
            advisories,
        }
    }

    /// The dimensionless block β·dk.
    pub fn discrete(&self) -> CMat {
        let dk = self.grid.dk();
        Mat::from_fn(self.values.nrows(), self.values.ncols(), |i, j| self.values[(i, j)] * dk)
    }

    /// ∫∫|β|² dk dk′.
    pub fn pair_probability(&self) -> f64 {
        (linalg::frobenius(self.values.as_ref()) * self.grid.dk()).powi(2)
    }

    /// Labels of the exchange partner β_ji(k′, k).
    pub fn partner_labels(&self) -> (&str, &str) {
        (&self.col_label, &self.row_label)
    }

    /// β_ji(k′, k) as implied by exchange symmetry.
    pub fn exchanged(&self) -> Self {
        JointSpectralAmplitude {
            grid: self.grid,
            row_label: self.col_label.clone(),
            col_label: self.row_label.clone(),
            values: self.values.transpose().to_owned(),
            advisories: self.advisories.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.as_ref().col_iter().all(|c| c.iter().all(|x| *x == ZERO))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SchmidtSpectrum {
    /// Singular values of the continuum JSA, descending.
    pub singular_values: Vec<f64>,
    /// Σλ⁴ / (Σλ²)².
    pub purity: f64,
    /// (Σλ²)·dk².
    pub pair_probability: f64,
}

/// Normalised Schmidt purity Σλ⁴/(Σλ²)² of a set of singular values.
pub fn purity_from_singular_values(s: &[f64]) -> Option<f64> {
    let p2: f64 = s.iter().map(|x| x * x).sum();
    if !(p2 > 0.0) {
        return None;
    }
    let p4: f64 = s.iter().map(|x| x.powi(4)).sum();
    Some(p4 / (p2 * p2))
}

pub fn schmidt(jsa: &JointSpectralAmplitude) -> Result<SchmidtSpectrum> {
    let s = linalg::singular_values(jsa.values.as_ref())?;
    let purity = purity_from_singular_values(&s)
        .ok_or_else(|| Error::ZeroNorm(format!("JSA ({}, {}), purity undefined", jsa.row_label, jsa.col_label)))?;
    let dk = jsa.grid.dk();
    let pair_probability = s.iter().map(|x| x * x).sum::<f64>() * dk * dk;
    Ok(SchmidtSpectrum {
        singular_values: s,
        purity,
        pair_probability,
    })
}

/// Joint temporal amplitude on a centred, zero-padded time grid.
#[derive(Clone, Debug)]
pub struct JointTemporalAmplitude {
    /// Signal (row) time axis in seconds.
    pub t_signal: Vec<f64>,
    /// Idler (column) time axis in seconds.
    pub t_idler: Vec<f64>,
    pub values: CMat,
    pub pad_factor: usize,
    pub dk: f64,
}

/// Zero padding applied to the k span before transforming.
pub const JTA_PAD_FACTOR: usize = 3;

fn centred_axis(n: usize, step: f64) -> Vec<f64> {
    let c = (n / 2) as f64;
    (0..n).map(|m| (m as f64 - c) * step).collect()
}

/// Centred DFT along rows then columns: X[m] = Σ_p x[p] e^{∓2πi(p−c)(m−c)/N}
/// with c = ⌊N/2⌋.
fn centred_fft2(data: &mut CMat, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    for by_rows in [true, false] {
        let (len, count) = if by_rows {
            (data.ncols(), data.nrows())
        } else {
            (data.nrows(), data.ncols())
        };
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let c = len / 2;
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for line in 0..count {
            let at = |p: usize| if by_rows { (line, p) } else { (p, line) };
            for (q, slot) in buf.iter_mut().enumerate() {
                let v = data[at((q + c) % len)];
                *slot = Complex::new(v.re, v.im);
            }
            fft.process(&mut buf);
            for m in 0..len {
                let v = buf[(m + len - c) % len];
                data[at(m)] = linalg::c(v.re, v.im);
            }
        }
    }
}

fn padded(jsa: &JointSpectralAmplitude) -> CMat {
    let n = jsa.grid.n_points;
    let np = JTA_PAD_FACTOR * n;
    let off = (np - n) / 2;
    let mut out = linalg::zeros(np, np);
    out.as_mut().submatrix_mut(off, off, n, n).copy_from(&jsa.values);
    out
}

/// JTA(t_s, t_i) = (1/2π) Σ β(k, k′) e^{−i(v_s k t_s + v_i k′ t_i)} dk dk′ on
/// the JSA zero-padded to three times its k span.
pub fn jta(jsa: &JointSpectralAmplitude, v_signal: f64, v_idler: f64) -> JointTemporalAmplitude {
    let mut data = padded(jsa);
    let np = data.nrows();
    let dk = jsa.grid.dk();
    centred_fft2(&mut data, false);
    let scale = dk * dk / (2.0 * std::f64::consts::PI);
    let values = Mat::from_fn(np, np, |i, j| data[(i, j)] * scale);
    let step = |v: f64| 2.0 * std::f64::consts::PI / (np as f64 * dk * v);
    JointTemporalAmplitude {
        t_signal: centred_axis(np, step(v_signal)),
        t_idler: centred_axis(np, step(v_idler)),
        values,
        pad_factor: JTA_PAD_FACTOR,
        dk,
    }
}

/// Recovers the zero-padded JSA from its JTA.
pub fn jta_inverse(t: &JointTemporalAmplitude) -> CMat {
    let mut data = t.values.clone();
    let np = data.nrows();
    centred_fft2(&mut data, true);
    let scale = 2.0 * std::f64::consts::PI / (t.dk * t.dk * (np * np) as f64);
    Mat::from_fn(np, np, |i, j| data[(i, j)] * scale)
}

/// Zero-padded JSA values as used by [`jta`].
pub fn padded_jsa(jsa: &JointSpectralAmplitude) -> CMat {
    padded(jsa)
}

fn same_grid(a: &JointSpectralAmplitude, b: &JointSpectralAmplitude) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("JSAs live on different grids".into()));
    }
    Ok(())
}

/// Probability fidelity |⟨a, b⟩|² / (‖a‖² ‖b‖²).
pub fn jsa_fidelity(a: &JointSpectralAmplitude, b: &JointSpectralAmplitude) -> Result<f64> {
    same_grid(a, b)?;
    fidelity_values(a.values.as_ref(), b.values.as_ref())
}

/// Amplitude fidelity |⟨a, b⟩| / (‖a‖ ‖b‖), the square root of [`jsa_fidelity`].
pub fn jsa_amplitude_fidelity(a: &JointSpectralAmplitude, b: &JointSpectralAmplitude) -> Result<f64> {
    Ok(jsa_fidelity(a, b)?.sqrt())
}

pub fn fidelity_values(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Result<f64> {
    let na = linalg::frobenius(a).powi(2);
    let nb = linalg::frobenius(b).powi(2);
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::ZeroNorm("fidelity argument".into()));
    }
    Ok((linalg::inner(a, b).norm_sqr() / (na * nb)).min(1.0))
}

/// Unit-trace heralded signal state β β† / tr(β β†).
pub fn heralded_state(jsa: &JointSpectralAmplitude) -> Result<CMat> {
    let b = jsa.values.as_ref();
    let rho = b * b.adjoint();
    let tr: f64 = (0..rho.nrows()).map(|i| rho[(i, i)].re).sum();
    if !(tr > 0.0) {
        return Err(Error::ZeroNorm(format!("mixture member ({}, {})", jsa.row_label, jsa.col_label)));
    }
    Ok(&rho * faer::Scale(linalg::c(1.0 / tr, 0.0)))
}

/// Running weighted mixture of heralded single-photon states
/// ρ_m = β_m β_m† / tr(β_m β_m†), traced over the idler.
#[derive(Clone, Debug)]
pub struct HeraldedMixture {
    rho: Option<CMat>,
    grid: Option<KGrid>,
    total_weight: f64,
}

impl Default for HeraldedMixture {
    fn default() -> Self {
        Self::new()
    }
}

impl HeraldedMixture {
    pub fn new() -> Self {
        HeraldedMixture {
            rho: None,
            grid: None,
            total_weight: 0.0,
        }
    }

    pub fn add(&mut self, jsa: &JointSpectralAmplitude, weight: f64) -> Result<()> {
        self.add_state(jsa.grid, heralded_state(jsa)?, weight)
    }

    /// Adds an already normalised heralded state (see [`heralded_state`]).
    pub fn add_state(&mut self, grid: KGrid, rho: CMat, weight: f64) -> Result<()> {
        if let Some(g) = self.grid {
            if g != grid {
                return Err(Error::GridMismatch("mixture members on different grids".into()));
            }
        }
        let scaled = if weight == 1.0 { rho } else { &rho * faer::Scale(linalg::c(weight, 0.0)) };
        self.rho = Some(match self.rho.take() {
            Some(acc) => acc + scaled,
            None => scaled,
        });
        self.grid = Some(grid);
        self.total_weight += weight;
        Ok(())
    }

    pub fn len_weight(&self) -> f64 {
        self.total_weight
    }

    /// tr(ρ²) of the normalised mixture.
    pub fn purity(&self) -> Result<f64> {
        let rho = self.rho.as_ref().ok_or_else(|| Error::ZeroNorm("empty mixture".into()))?;
        Ok((linalg::frobenius(rho.as_ref()) / self.total_weight).powi(2))
    }
}

/// Purity of the weighted mixture of heralded photons (equal weights when
/// `weights` is `None`).
pub fn ensemble_purity(jsas: &[JointSpectralAmplitude], weights: Option<&[f64]>) -> Result<f64> {
    if let Some(w) = weights {
        if w.len() != jsas.len() {
            return Err(Error::GridMismatch(format!("{} weights for {} members", w.len(), jsas.len())));
        }
    }
    let mut mix = HeraldedMixture::new();
    for (m, jsa) in jsas.iter().enumerate() {
        mix.add(jsa, weights.map_or(1.0, |w| w[m]))?;
    }
    mix.purity()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> KGrid {
        KGrid::symmetric(21, 10.0).unwrap()
    }

    fn outer(f: impl Fn(f64) -> C64, g: impl Fn(f64) -> C64) -> JointSpectralAmplitude {
        let ks = grid().values();
        let v = Mat::from_fn(21, 21, |i, j| f(ks[i]) * g(ks[j]));
        JointSpectralAmplitude::new(grid(), "s", "i", v).unwrap()
    }

    #[test]
    fn rank_one_is_pure() {
        let j = outer(|k| linalg::c((-k * k / 8.0).exp(), 0.1 * k), |k| linalg::c(1.0 / (1.0 + k * k), 0.0));
        assert!((schmidt(&j).unwrap().purity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_jsa_purity_is_undefined() {
        let j = JointSpectralAmplitude::new(grid(), "s", "i", linalg::zeros(21, 21)).unwrap();
        assert!(matches!(schmidt(&j), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn pair_probability_matches_schmidt() {
        let j = outer(|k| linalg::c(k.cos(), 0.0), |k| linalg::c(0.0, (-k.abs()).exp()));
        let s = schmidt(&j).unwrap();
        assert!((s.pair_probability - j.pair_probability()).abs() < 1e-12 * s.pair_probability);
    }

    #[test]
    fn fidelity_is_phase_and_scale_invariant() {
        let a = outer(|k| linalg::c(k, 1.0), |k| linalg::c(1.0, -k));
        let mut b = a.clone();
        b.values = &a.values * faer::Scale(linalg::c(-2.0, 3.5));
        assert!((jsa_fidelity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_member_ensemble_matches_heralded_purity() {
        let ks = grid().values();
        let v = Mat::from_fn(21, 21, |i, j| linalg::c((-(ks[i] + ks[j]).powi(2) / 20.0).exp(), 0.0));
        let j = JointSpectralAmplitude::new(grid(), "s", "i", v).unwrap();
        let p = ensemble_purity(std::slice::from_ref(&j), None).unwrap();
        assert!((p - schmidt(&j).unwrap().purity).abs() < 1e-12);
    }
}
