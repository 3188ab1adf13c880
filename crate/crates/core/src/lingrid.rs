//! Wavenumber grids, spectral fields and the linear (pump) solvers.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64, I, ZERO};
use crate::model::{tuned_violations, DerivedLinear};
use crate::par::{map_indexed, Execution};

/// Uniform grid of detuning wavenumbers k (m⁻¹).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub n_points: usize,
    pub k_min: f64,
    pub k_max: f64,
}

impl KGrid {
    pub fn new(n_points: usize, k_min: f64, k_max: f64) -> Result<Self> {
        if n_points < 2 || !(k_max > k_min) || !k_min.is_finite() || !k_max.is_finite() {
            return Err(Error::GridMismatch(format!(
                "need at least two points on a finite increasing range, got {n_points} on ({k_min}, {k_max})"
            )));
        }
        Ok(KGrid { n_points, k_min, k_max })
    }

    pub fn symmetric(n_points: usize, half_span: f64) -> Result<Self> {
        Self::new(n_points, -half_span, half_span)
    }

    /// 201 points on (−2515.01, 2515.01) m⁻¹.
    pub fn ring_default() -> Self {
        KGrid {
            n_points: 201,
            k_min: -2515.01,
            k_max: 2515.01,
        }
    }

    pub fn dk(&self) -> f64 {
        (self.k_max - self.k_min) / (self.n_points - 1) as f64
    }

    /// Interpolates between the end points so that the centre of an odd,
    /// symmetric grid is exactly zero.
    pub fn value(&self, i: usize) -> f64 {
        let t = i as f64 / (self.n_points - 1) as f64;
        self.k_min * (1.0 - t) + self.k_max * t
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.value(i)).collect()
    }

    /// Linear interpolation of samples on this grid, zero outside it.
    /// The flag reports whether `k` fell outside.
    pub fn interpolate(&self, samples: &[C64], k: f64) -> (C64, bool) {
        let pos = (k - self.k_min) / self.dk();
        let last = (self.n_points - 1) as f64;
        let tol = 1e-9;
        if !(pos >= -tol && pos <= last + tol) {
            return (ZERO, true);
        }
        let pos = pos.clamp(0.0, last);
        let i = (pos.floor() as usize).min(self.n_points - 2);
        let w = pos - i as f64;
        (samples[i] * (1.0 - w) + samples[i + 1] * w, false)
    }
}

/// Complex amplitudes indexed (mode, k).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: KGrid,
    pub labels: Vec<String>,
    pub amplitudes: CMat,
}

impl SpectralField {
    pub fn new(grid: KGrid, labels: Vec<String>, amplitudes: CMat) -> Result<Self> {
        if amplitudes.nrows() != labels.len() || amplitudes.ncols() != grid.n_points {
            return Err(Error::GridMismatch(format!(
                "amplitudes are {}x{}, expected {}x{}",
                amplitudes.nrows(),
                amplitudes.ncols(),
                labels.len(),
                grid.n_points
            )));
        }
        Ok(SpectralField {
            grid,
            labels,
            amplitudes,
        })
    }

    pub fn zeros(grid: KGrid, labels: Vec<String>) -> Self {
        let amplitudes = linalg::zeros(labels.len(), grid.n_points);
        SpectralField {
            grid,
            labels,
            amplitudes,
        }
    }

    /// Constant amplitude in one mode across the whole grid, zero elsewhere.
    pub fn top_hat(grid: KGrid, labels: Vec<String>, mode: usize, amplitude: C64) -> Self {
        let mut f = Self::zeros(grid, labels);
        for i in 0..grid.n_points {
            f.amplitudes[(mode, i)] = amplitude;
        }
        f
    }

    pub fn mode_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    pub fn row(&self, mode: usize) -> Vec<C64> {
        (0..self.grid.n_points).map(|i| self.amplitudes[(mode, i)]).collect()
    }

    pub fn power(&self, mode: usize) -> Vec<f64> {
        (0..self.grid.n_points).map(|i| self.amplitudes[(mode, i)].norm_sqr()).collect()
    }

    /// Σ_modes Σ_k |amplitude|².
    pub fn total_power(&self) -> f64 {
        linalg::frobenius(self.amplitudes.as_ref()).powi(2)
    }
}

/// Linear response of a cavity system to a given input.
#[derive(Clone, Debug)]
pub struct PumpSolution {
    pub input: SpectralField,
    pub intracavity: SpectralField,
    pub transmitted: SpectralField,
}

fn channel_labels(d: &DerivedLinear) -> Vec<String> {
    d.model.channels.iter().map(|ch| ch.label.clone()).collect()
}

fn cavity_labels(d: &DerivedLinear) -> Vec<String> {
    d.model.cavities.iter().map(|cav| cav.label.clone()).collect()
}

pub fn solve_linear_tuned(derived: &DerivedLinear, input: &SpectralField) -> Result<PumpSolution> {
    solve_linear_tuned_with(derived, input, Execution::default())
}

/// Per grid point: a(k) = −i(−ik𝒱 + Γ̄)⁻¹γ̄ s⁻(k) and s⁺(k) = T(s⁻ − iV⁻¹γ̄† a).
pub fn solve_linear_tuned_with(
    derived: &DerivedLinear,
    input: &SpectralField,
    exec: Execution,
) -> Result<PumpSolution> {
    let violations = tuned_violations(&derived.model);
    if let Some(v) = violations.first() {
        return Err(Error::InvalidModel(format!("tuned solver requires matched modes: {v}")));
    }
    let (n_cav, n_ch) = (derived.n_cavities(), derived.n_channels());
    if input.labels.len() != n_ch {
        return Err(Error::GridMismatch(format!(
            "input has {} modes, model has {n_ch} channels",
            input.labels.len()
        )));
    }
    let grid = input.grid;
    let columns = map_indexed(grid.n_points, exec, |i| -> Result<(CMat, CMat)> {
        let k = grid.value(i);
        let s = Mat::from_fn(n_ch, 1, |j, _| input.amplitudes[(j, i)]);
        let r = derived.resolvent(k)?;
        let a = (&r * &derived.gamma_bar * &s) * faer::Scale(-I);
        let back = derived.gamma_bar.adjoint() * &a;
        let inner = Mat::from_fn(n_ch, 1, |j, _| s[(j, 0)] - I * back[(j, 0)] / derived.channel_velocity(j));
        Ok((a, &derived.t * inner))
    });
    let mut intracavity = linalg::zeros(n_cav, grid.n_points);
    let mut transmitted = linalg::zeros(n_ch, grid.n_points);
    for (i, col) in columns.into_iter().enumerate() {
        let (a, t) = col?;
        for n in 0..n_cav {
            intracavity[(n, i)] = a[(n, 0)];
        }
        for j in 0..n_ch {
            transmitted[(j, i)] = t[(j, 0)];
        }
    }
    Ok(PumpSolution {
        input: input.clone(),
        intracavity: SpectralField::new(grid, cavity_labels(derived), intracavity)?,
        transmitted: SpectralField::new(grid, channel_labels(derived), transmitted)?,
    })
}

/// Linear response sampled at absolute frequencies ξ.
///
/// Channel j is read at k_j = (ξ − Ω_j)/v_j and cavity n at
/// k_n = (ξ − ω_n)/𝒱_n; the amplitudes are the usual k-space ones.
#[derive(Clone, Debug)]
pub struct AbsoluteSolution {
    pub frequencies: Vec<f64>,
    /// N × n_ξ.
    pub intracavity: CMat,
    /// J × n_ξ, the input as resampled at each channel's wavenumber.
    pub input: CMat,
    /// J × n_ξ.
    pub transmitted: CMat,
    /// True where some channel's wavenumber fell outside the input grid
    /// (that channel's input was taken as zero).
    pub out_of_support: Vec<bool>,
}

impl AbsoluteSolution {
    pub fn any_out_of_support(&self) -> bool {
        self.out_of_support.iter().any(|&b| b)
    }
}

/// Solves the linear problem frequency by frequency, which needs no matching
/// of tunings or velocities:
/// a = −i(−i(ξ−ω) + 𝒱Γ̄𝒱⁻¹)⁻¹ 𝒱γ̄V⁻¹ s⁻ and s⁺ = T(s⁻ − iγ̄†𝒱⁻¹ a).
pub fn solve_linear_absolute_frequency(
    derived: &DerivedLinear,
    input: &SpectralField,
    frequency_samples: &[f64],
) -> Result<AbsoluteSolution> {
    let model = &derived.model;
    let (n_cav, n_ch) = (derived.n_cavities(), derived.n_channels());
    if input.labels.len() != n_ch {
        return Err(Error::GridMismatch(format!(
            "input has {} modes, model has {n_ch} channels",
            input.labels.len()
        )));
    }
    let rows: Vec<Vec<C64>> = (0..n_ch).map(|j| input.row(j)).collect();
    let cav_v = model.cavity_velocities();
    let ch_v = model.channel_velocities();
    let nf = frequency_samples.len();
    let mut out = AbsoluteSolution {
        frequencies: frequency_samples.to_vec(),
        intracavity: linalg::zeros(n_cav, nf),
        input: linalg::zeros(n_ch, nf),
        transmitted: linalg::zeros(n_ch, nf),
        out_of_support: vec![false; nf],
    };
    // 𝒱γ̄V⁻¹ and γ̄†𝒱⁻¹ are frequency independent.
    let drive = Mat::from_fn(n_cav, n_ch, |n, j| derived.gamma_bar[(n, j)] * (cav_v[n] / ch_v[j]));
    let read = Mat::from_fn(n_ch, n_cav, |j, n| derived.gamma_bar[(n, j)].conj() / cav_v[n]);
    for (f, &xi) in frequency_samples.iter().enumerate() {
        let mut s = linalg::zeros(n_ch, 1);
        for j in 0..n_ch {
            let kj = (xi - model.channels[j].carrier_frequency) / ch_v[j];
            let (val, outside) = input.grid.interpolate(&rows[j], kj);
            s[(j, 0)] = val;
            out.out_of_support[f] |= outside;
        }
        let x = Mat::from_fn(n_cav, n_cav, |p, q| {
            let diag = if p == q {
                c(0.0, -(xi - model.cavities[p].resonance_frequency))
            } else {
                ZERO
            };
            diag + derived.big_gamma_bar[(p, q)] * (cav_v[p] / cav_v[q])
        });
        let a = linalg::solve(x.as_ref(), (&drive * &s).as_ref(), &format!("cavity response at ξ = {xi}"))? * faer::Scale(-I);
        let back = &read * &a;
        let inner = Mat::from_fn(n_ch, 1, |j, _| s[(j, 0)] - I * back[(j, 0)]);
        let t = &derived.t * inner;
        for n in 0..n_cav {
            out.intracavity[(n, f)] = a[(n, 0)];
        }
        for j in 0..n_ch {
            out.input[(j, f)] = s[(j, 0)];
            out.transmitted[(j, f)] = t[(j, 0)];
        }
    }
    Ok(out)
}

/// Which intracavity pump fields enter a convolution and how its argument
/// is scaled: the table is evaluated at (v_s k + v_i k′ + Δ)/v_p′.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpPair {
    pub label: String,
    pub pump: usize,
    pub pump_prime: usize,
    pub v_signal: f64,
    pub v_idler: f64,
    pub v_pump_prime: f64,
}

/// 𝒞(k, k′) = (⟨a_p⟩ ∗ ⟨a_p′⟩)((v_s k + v_i k′ + Δ)/v_p′) on a k × k′ grid.
#[derive(Clone, Debug)]
pub struct ConvolutionTable {
    pub pair: PumpPair,
    pub grid: KGrid,
    pub detuning: f64,
    pub values: CMat,
}

/// Discrete convolution Σ_q f(q) g(x − q) dk on x = 2k_min + m·dk, m < 2n − 1.
pub fn auto_convolve(f: &[C64], g: &[C64], dk: f64) -> Vec<C64> {
    let n = f.len();
    let mut out = vec![ZERO; 2 * n - 1];
    for (a, &fa) in f.iter().enumerate() {
        if fa == ZERO {
            continue;
        }
        for (b, &gb) in g.iter().enumerate() {
            out[a + b] += fa * gb;
        }
    }
    for x in &mut out {
        *x *= dk;
    }
    out
}

pub fn pump_convolutions(intracavity: &SpectralField, pairs: &[PumpPair], detuning: f64) -> Result<Vec<ConvolutionTable>> {
    let grid = intracavity.grid;
    let n = grid.n_points;
    let dk = grid.dk();
    // The convolution lives on a grid of 2n − 1 points starting at 2k_min.
    let wide = KGrid::new(2 * n - 1, 2.0 * grid.k_min, 2.0 * grid.k_max)?;
    let ks = grid.values();
    pairs
        .iter()
        .map(|pair| {
            if pair.pump >= intracavity.labels.len() || pair.pump_prime >= intracavity.labels.len() {
                return Err(Error::UnknownMode(pair.label.clone()));
            }
            let conv = auto_convolve(&intracavity.row(pair.pump), &intracavity.row(pair.pump_prime), dk);
            let values = Mat::from_fn(n, n, |a, b| {
                let x = (pair.v_signal * ks[a] + pair.v_idler * ks[b] + detuning) / pair.v_pump_prime;
                wide.interpolate(&conv, x).0
            });
            Ok(ConvolutionTable {
                pair: pair.clone(),
                grid,
                detuning,
                values,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineshapeStats {
    /// Full width at the midpoint between the dip and the plateau, m⁻¹.
    pub linewidth: f64,
    /// argmin of |t(k)|², m⁻¹.
    pub center: f64,
    pub min_transmission: f64,
}

/// Dip statistics of |t(k)|² in one channel. The off-resonant plateau is the
/// mean of the outermost 5% of grid points on each side.
pub fn extract_lineshape_stats(transmitted: &SpectralField, channel: usize) -> Result<LineshapeStats> {
    if channel >= transmitted.labels.len() {
        return Err(Error::UnknownMode(format!("channel #{channel}")));
    }
    lineshape_from_power(&transmitted.grid.values(), &transmitted.power(channel))
}

pub fn lineshape_from_power(ks: &[f64], power: &[f64]) -> Result<LineshapeStats> {
    let n = power.len();
    let edge = ((0.05 * n as f64).round() as usize).max(1);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let plateau = 0.5 * (mean(&power[..edge]) + mean(&power[n - edge..]));
    let (i0, &min) = power
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoDip)?;
    let half = 0.5 * (min + plateau);
    if !(min < half) {
        return Err(Error::NoDip);
    }
    let cross = |i: usize, j: usize| ks[i] + (half - power[i]) * (ks[j] - ks[i]) / (power[j] - power[i]);
    let mut l = i0;
    while l > 0 && power[l] < half {
        l -= 1;
    }
    let mut r = i0;
    while r < n - 1 && power[r] < half {
        r += 1;
    }
    if power[l] < half || power[r] < half {
        return Err(Error::NoDip);
    }
    Ok(LineshapeStats {
        linewidth: cross(r - 1, r) - cross(l, l + 1),
        center: ks[i0],
        min_transmission: min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_linear, CavitySpec, ChannelKind, ChannelSpec, CoupledCavityModel, Direction};

    fn cavity(gamma: f64, v: f64) -> CoupledCavityModel {
        let ch = |label: &str, kind| ChannelSpec {
            label: label.into(),
            carrier_frequency: 1.2e15,
            group_velocity: v,
            direction: Direction::Forward,
            kind,
        };
        CoupledCavityModel {
            channels: vec![ch("bus", ChannelKind::Bus), ch("loss", ChannelKind::PhantomLoss)],
            cavities: vec![CavitySpec {
                label: "a".into(),
                resonance_frequency: 1.2e15,
                group_velocity: v,
            }],
            gamma: Mat::from_fn(1, 2, |_, _| c(gamma, 0.0)),
            g: linalg::zeros(1, 1),
            c: linalg::zeros(2, 2),
        }
    }

    #[test]
    fn grid_is_symmetric_with_exact_zero() {
        let g = KGrid::ring_default();
        assert_eq!(g.value(100), 0.0);
        assert!((g.value(0) + g.value(200)).abs() < 1e-12);
        assert!((g.dk() - 25.1501).abs() < 1e-12);
    }

    #[test]
    fn critical_coupling_zero_on_resonance() {
        let d = derive_linear(&cavity(8.72769e8, 7.1532e7)).unwrap();
        let grid = KGrid::ring_default();
        let input = SpectralField::top_hat(grid, vec!["bus".into(), "loss".into()], 0, c(1.0, 0.0));
        let sol = solve_linear_tuned(&d, &input).unwrap();
        assert!(sol.transmitted.amplitudes[(0, 100)].norm() < 1e-12);
    }

    #[test]
    fn convolution_of_discrete_deltas() {
        let n = 11;
        let dk = 0.5;
        let w = 3.0;
        let mut f = vec![ZERO; n];
        f[5] = c(w / dk, 0.0);
        let conv = auto_convolve(&f, &f, dk);
        // Argument 0 sits at index 2·5 of the 2n − 1 grid.
        assert!((conv[10] - c(w * w / dk, 0.0)).norm() < 1e-12);
        assert_eq!(conv.iter().filter(|x| x.norm() > 0.0).count(), 1);
    }

    #[test]
    fn lineshape_of_inverted_lorentzian() {
        let k0 = 40.0;
        let ks: Vec<f64> = (0..2001).map(|i| -2000.0 + 2.0 * i as f64).collect();
        let p: Vec<f64> = ks.iter().map(|k| k * k / (k * k + k0 * k0)).collect();
        let st = lineshape_from_power(&ks, &p).unwrap();
        assert!((st.linewidth - 2.0 * k0).abs() < 2.0);
        assert_eq!(st.center, 0.0);
    }

    #[test]
    fn flat_transmission_has_no_dip() {
        let ks: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(matches!(lineshape_from_power(&ks, &[1.0; 50]), Err(Error::NoDip)));
    }
}
