//! Micro-ring back-scattering scenario: pump, signal and idler resonances,
//! each with forward/backward modes, bus and phantom-loss channels.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussdyn::{build_gamma_sq, GammaBlocks, NonlinearCoupling, SqWiring};
use crate::linalg::{self, c, C64, ZERO};
use crate::lingrid::{pump_convolutions, solve_linear_tuned_with, KGrid, PumpPair, PumpSolution, SpectralField};
use crate::model::{derive_linear, CavitySpec, ChannelKind, ChannelSpec, CoupledCavityModel, DerivedLinear, Direction};
use crate::par::Execution;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// n_eff(λ) = a₀ + a₁(λ − λ₀) + a₂(λ − λ₀)², λ in µm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveguideDispersion {
    pub coefficients: [f64; 3],
    pub reference_wavelength_um: f64,
}

impl Default for WaveguideDispersion {
    fn default() -> Self {
        WaveguideDispersion {
            coefficients: [2.44, -1.13, -0.04],
            reference_wavelength_um: 1.55,
        }
    }
}

impl WaveguideDispersion {
    pub fn effective_index(&self, wavelength_um: f64) -> f64 {
        let x = wavelength_um - self.reference_wavelength_um;
        let [a0, a1, a2] = self.coefficients;
        a0 + a1 * x + a2 * x * x
    }

    /// n_g = n_eff − λ dn_eff/dλ.
    pub fn group_index(&self, wavelength_um: f64) -> f64 {
        let x = wavelength_um - self.reference_wavelength_um;
        let [_, a1, a2] = self.coefficients;
        self.effective_index(wavelength_um) - wavelength_um * (a1 + 2.0 * a2 * x)
    }

    pub fn group_velocity(&self, wavelength_um: f64) -> f64 {
        SPEED_OF_LIGHT / self.group_index(wavelength_um)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingGeometry {
    /// Circumference in metres.
    pub circumference: f64,
    /// Amplitude self-coupling per round trip.
    pub self_coupling: f64,
}

impl Default for RingGeometry {
    fn default() -> Self {
        RingGeometry {
            circumference: 202.5625e-6,
            self_coupling: 0.984923,
        }
    }
}

impl RingGeometry {
    /// γ = √(2(1 − σ) v² / L).
    pub fn coupling_rate(&self, group_velocity: f64) -> Result<f64> {
        if !(self.self_coupling > 0.0 && self.self_coupling < 1.0) {
            return Err(Error::InvalidModel(format!(
                "self-coupling must lie in (0, 1), got {}",
                self.self_coupling
            )));
        }
        if !(self.circumference > 0.0) {
            return Err(Error::InvalidModel(format!("circumference must be positive, got {}", self.circumference)));
        }
        Ok((2.0 * (1.0 - self.self_coupling) * group_velocity * group_velocity / self.circumference).sqrt())
    }
}

/// Defects of one resonance: back-scattering g (rad/s), parasitic
/// back-couplings δ_fb, δ_bf (fractions of γ) and bus reflection c.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RingDefectParams {
    pub g: C64,
    pub delta_fb: C64,
    pub delta_bf: C64,
    pub c: C64,
}

impl RingDefectParams {
    pub fn is_zero(&self) -> bool {
        [self.g, self.delta_fb, self.delta_bf, self.c].iter().all(|x| *x == ZERO)
    }

    pub fn splitting(g: C64) -> Self {
        RingDefectParams {
            g,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDefects {
    pub pump: RingDefectParams,
    pub signal: RingDefectParams,
    pub idler: RingDefectParams,
}

/// Carrier of one resonance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resonance {
    pub wavelength_um: f64,
    pub angular_frequency: f64,
    pub group_velocity: f64,
}

impl Resonance {
    pub fn at_wavelength(dispersion: &WaveguideDispersion, wavelength_um: f64) -> Self {
        Resonance {
            wavelength_um,
            angular_frequency: 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (wavelength_um * 1e-6),
            group_velocity: dispersion.group_velocity(wavelength_um),
        }
    }

    /// ITU grid channel at (190.0 + 0.1·channel) THz.
    pub fn itu_channel(dispersion: &WaveguideDispersion, channel: u32) -> Self {
        let f = (190.0 + 0.1 * channel as f64) * 1e12;
        let mut r = Self::at_wavelength(dispersion, SPEED_OF_LIGHT / f * 1e6);
        r.angular_frequency = 2.0 * std::f64::consts::PI * f;
        r
    }
}

/// Two cavity modes ({p}f, {p}b) and four channels ({p}1f, {p}1b bus;
/// {p}2f, {p}2b phantom loss):
///
/// γ = γ_r [[1, δ_fb, 1, 0], [δ_bf, 1, 0, 1]], g = [[0, g_r], [g_r*, 0]],
/// C = v_r [[0, c, 0, 0], [c*, 0, 0, 0], 0, 0].
pub fn build_resonance_model(
    geometry: &RingGeometry,
    resonance: &Resonance,
    defects: &RingDefectParams,
    prefix: &str,
) -> Result<CoupledCavityModel> {
    let v = resonance.group_velocity;
    let rate = geometry.coupling_rate(v)?;
    let omega = resonance.angular_frequency;
    let channel = |suffix: &str, direction, kind| ChannelSpec {
        label: format!("{prefix}{suffix}"),
        carrier_frequency: omega,
        group_velocity: v,
        direction,
        kind,
    };
    let cavity = |suffix: &str| CavitySpec {
        label: format!("{prefix}{suffix}"),
        resonance_frequency: omega,
        group_velocity: v,
    };
    let one = linalg::ONE;
    let rows = [[one, defects.delta_fb, one, ZERO], [defects.delta_bf, one, ZERO, one]];
    let gamma = Mat::from_fn(2, 4, |n, j| rows[n][j] * rate);
    let g = Mat::from_fn(2, 2, |n, m| match (n, m) {
        (0, 1) => defects.g,
        (1, 0) => defects.g.conj(),
        _ => ZERO,
    });
    let cm = Mat::from_fn(4, 4, |a, b| match (a, b) {
        (0, 1) => defects.c * v,
        (1, 0) => defects.c.conj() * v,
        _ => ZERO,
    });
    Ok(CoupledCavityModel {
        channels: vec![
            channel("1f", Direction::Forward, ChannelKind::Bus),
            channel("1b", Direction::Backward, ChannelKind::Bus),
            channel("2f", Direction::Forward, ChannelKind::PhantomLoss),
            channel("2b", Direction::Backward, ChannelKind::PhantomLoss),
        ],
        cavities: vec![cavity("f"), cavity("b")],
        gamma,
        g,
        c: cm,
    })
}

/// Fixed device and simulation settings shared by every defect sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingScenario {
    pub dispersion: WaveguideDispersion,
    pub geometry: RingGeometry,
    pub pump_wavelength_um: f64,
    pub signal_itu_channel: u32,
    pub idler_itu_channel: u32,
    pub grid: KGrid,
    pub coupling: NonlinearCoupling,
    /// Δ in the convolution argument (v_s k + v_i k′ + Δ)/v_p.
    pub detuning: f64,
}

impl Default for RingScenario {
    fn default() -> Self {
        RingScenario {
            dispersion: WaveguideDispersion::default(),
            geometry: RingGeometry::default(),
            pump_wavelength_um: 1.54612,
            signal_itu_channel: 43,
            idler_itu_channel: 35,
            grid: KGrid::ring_default(),
            coupling: NonlinearCoupling::with_strength(0.0),
            detuning: 0.0,
        }
    }
}

impl RingScenario {
    pub fn pump(&self) -> Resonance {
        Resonance::at_wavelength(&self.dispersion, self.pump_wavelength_um)
    }

    pub fn signal(&self) -> Resonance {
        Resonance::itu_channel(&self.dispersion, self.signal_itu_channel)
    }

    pub fn idler(&self) -> Resonance {
        Resonance::itu_channel(&self.dispersion, self.idler_itu_channel)
    }

    pub fn with_strength(&self, strength: f64) -> Self {
        RingScenario {
            coupling: NonlinearCoupling::with_strength(strength),
            ..self.clone()
        }
    }
}

/// Everything needed to drive the signal system from a given defect draw.
#[derive(Clone, Debug)]
pub struct FwmScenario {
    pub grid: KGrid,
    pub coupling: NonlinearCoupling,
    pub detuning: f64,
    pub pump_model: CoupledCavityModel,
    pub signal_model: CoupledCavityModel,
    pub pump: DerivedLinear,
    pub signal: DerivedLinear,
    /// Convolution tables: forward (s,i), forward (i,s), backward (s,i), backward (i,s).
    pub pairs: Vec<PumpPair>,
    /// Forward pump pair drives (sf, if), backward drives (sb, ib).
    pub wiring: Vec<SqWiring>,
}

pub fn build_fwm_scenario(scenario: &RingScenario, defects: &ScenarioDefects) -> Result<FwmScenario> {
    let (p, s, i) = (scenario.pump(), scenario.signal(), scenario.idler());
    let pump_model = build_resonance_model(&scenario.geometry, &p, &defects.pump, "p")?;
    let signal_ring = build_resonance_model(&scenario.geometry, &s, &defects.signal, "s")?;
    let idler_ring = build_resonance_model(&scenario.geometry, &i, &defects.idler, "i")?;
    let signal_model = signal_ring.combine(&idler_ring);
    let pair = |label: &str, cav: usize, vs: f64, vi: f64| PumpPair {
        label: label.to_string(),
        pump: cav,
        pump_prime: cav,
        v_signal: vs,
        v_idler: vi,
        v_pump_prime: p.group_velocity,
    };
    let (vs, vi) = (s.group_velocity, i.group_velocity);
    let pairs = vec![
        pair("pf-pf:s,i", 0, vs, vi),
        pair("pf-pf:i,s", 0, vi, vs),
        pair("pb-pb:s,i", 1, vs, vi),
        pair("pb-pb:i,s", 1, vi, vs),
    ];
    let wiring = vec![
        SqWiring {
            signal_cavity: 0,
            idler_cavity: 2,
            signal_idler_table: 0,
            idler_signal_table: 1,
            v_signal: vs,
            v_idler: vi,
        },
        SqWiring {
            signal_cavity: 1,
            idler_cavity: 3,
            signal_idler_table: 2,
            idler_signal_table: 3,
            v_signal: vs,
            v_idler: vi,
        },
    ];
    Ok(FwmScenario {
        grid: scenario.grid,
        coupling: scenario.coupling,
        detuning: scenario.detuning,
        pump: derive_linear(&pump_model)?,
        signal: derive_linear(&signal_model)?,
        pump_model,
        signal_model,
        pairs,
        wiring,
    })
}

impl FwmScenario {
    /// Pump response to a top-hat in the forward bus channel.
    pub fn solve_pump(&self, exec: Execution) -> Result<PumpSolution> {
        let labels = self.pump_model.channels.iter().map(|c| c.label.clone()).collect();
        let input = SpectralField::top_hat(self.grid, labels, 0, self.coupling.pump_amplitude);
        solve_linear_tuned_with(&self.pump, &input, exec)
    }

    pub fn gamma_blocks(&self, pump: &PumpSolution) -> Result<GammaBlocks> {
        let tables = pump_convolutions(&pump.intracavity, &self.pairs, self.detuning)?;
        let mut blocks = build_gamma_sq(&tables, &self.coupling, &self.wiring, self.signal.n_cavities())?;
        // Drop blocks that vanish identically (e.g. no backward pump field)
        // so they do not couple otherwise independent sectors.
        blocks
            .squeezing
            .retain(|b| b.values.as_ref().col_iter().any(|col| col.iter().any(|x| *x != ZERO)));
        Ok(blocks)
    }

    /// Linear decay rate γ²/v of the unperturbed pump resonance, a natural
    /// scale for the squeezing couplings.
    pub fn pump_decay_rate(&self) -> f64 {
        let v = self.pump.channel_velocity(0);
        self.pump.model.gamma[(0, 0)].norm_sqr() / v
    }
}

/// Convenience for tests and callers wanting a bare complex number.
pub fn polar(magnitude: f64, phase: f64) -> C64 {
    c(magnitude * phase.cos(), magnitude * phase.sin())
}
