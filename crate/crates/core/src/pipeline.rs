//! Solving one device end to end: pump, squeezing blocks, signal kernel
//! (full or first order), JSAs, lineshapes, and the λ calibration.

use serde::{Deserialize, Serialize};

use crate::analysis::{schmidt, JointSpectralAmplitude};
use crate::error::{Error, Result};
use crate::gaussdyn::{jsa_block, polar_decompose_with, solve_full_kernel_with, GammaBlocks, PolarParts, SymplecticKernel};
use crate::lingrid::{extract_lineshape_stats, solve_linear_tuned_with, LineshapeStats, PumpSolution, SpectralField};
use crate::linalg::ONE;
use crate::model::derive_linear;
use crate::par::Execution;
use crate::perturb::{build_perturb_filter_with, filter_jsa, PerturbFilter};
use crate::ringscene::{build_fwm_scenario, build_resonance_model, FwmScenario, RingDefectParams, RingScenario, ScenarioDefects};
use crate::settom::{simulate_set, PerturbativeBeta, SETDataset};

/// Pair probability of the defect-free forward-forward JSA that λ is
/// calibrated to.
pub const BASELINE_PAIR_PROBABILITY: f64 = 0.01265;

/// Bus output labels of the signal system.
pub const SIGNAL_FORWARD: &str = "s1f";
pub const SIGNAL_BACKWARD: &str = "s1b";
pub const IDLER_FORWARD: &str = "i1f";
pub const IDLER_BACKWARD: &str = "i1b";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Doubled-space inverse plus polar decomposition.
    Full,
    /// First-order filtered driving terms.
    Perturbative,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Engine::Full),
            "perturbative" | "fast" => Ok(Engine::Perturbative),
            other => Err(Error::Config(format!("unknown engine `{other}` (full | perturbative)"))),
        }
    }
}

pub enum SignalSolution {
    Full { kernel: SymplecticKernel, polar: PolarParts },
    Perturbative { filter: PerturbFilter },
}

pub struct DeviceSolution {
    pub scenario: FwmScenario,
    pub pump: PumpSolution,
    pub blocks: GammaBlocks,
    pub signal: SignalSolution,
}

pub fn solve_device(scenario: &RingScenario, defects: &ScenarioDefects, engine: Engine, exec: Execution) -> Result<DeviceSolution> {
    let fwm = build_fwm_scenario(scenario, defects)?;
    let pump = fwm.solve_pump(exec)?;
    let blocks = fwm.gamma_blocks(&pump)?;
    let signal = solve_signal(&fwm, &blocks, engine, exec)?;
    Ok(DeviceSolution {
        scenario: fwm,
        pump,
        blocks,
        signal,
    })
}

pub fn solve_signal(fwm: &FwmScenario, blocks: &GammaBlocks, engine: Engine, exec: Execution) -> Result<SignalSolution> {
    Ok(match engine {
        Engine::Full => {
            let kernel = solve_full_kernel_with(&fwm.signal, blocks, exec)?;
            let polar = polar_decompose_with(&kernel, exec)?;
            SignalSolution::Full { kernel, polar }
        }
        Engine::Perturbative => SignalSolution::Perturbative {
            filter: build_perturb_filter_with(&fwm.signal, blocks.grid, exec)?,
        },
    })
}

impl DeviceSolution {
    pub fn jsa(&self, mode_i: &str, mode_j: &str) -> Result<JointSpectralAmplitude> {
        signal_jsa(&self.signal, &self.blocks, mode_i, mode_j)
    }

    pub fn set_dataset(&self, label_1: &str, label_2: &str) -> Result<SETDataset> {
        match &self.signal {
            SignalSolution::Full { kernel, .. } => simulate_set(kernel, label_1, label_2),
            SignalSolution::Perturbative { filter } => simulate_set(
                &PerturbativeBeta {
                    filter,
                    blocks: &self.blocks,
                },
                label_1,
                label_2,
            ),
        }
    }
}

pub fn signal_jsa(signal: &SignalSolution, blocks: &GammaBlocks, mode_i: &str, mode_j: &str) -> Result<JointSpectralAmplitude> {
    match signal {
        SignalSolution::Full { polar, .. } => jsa_block(polar, mode_i, mode_j),
        SignalSolution::Perturbative { filter } => filter_jsa(filter, blocks, mode_i, mode_j),
    }
}

/// Bus transmission of one resonance driven by a unit top-hat in its forward
/// bus channel.
pub fn resonance_transmission(scenario: &RingScenario, which: Which, defects: &RingDefectParams, exec: Execution) -> Result<SpectralField> {
    let res = match which {
        Which::Pump => scenario.pump(),
        Which::Signal => scenario.signal(),
        Which::Idler => scenario.idler(),
    };
    let model = build_resonance_model(&scenario.geometry, &res, defects, which.prefix())?;
    let derived = derive_linear(&model)?;
    let labels = model.channels.iter().map(|c| c.label.clone()).collect();
    let input = SpectralField::top_hat(scenario.grid, labels, 0, ONE);
    Ok(solve_linear_tuned_with(&derived, &input, exec)?.transmitted)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Pump,
    Signal,
    Idler,
}

impl Which {
    pub const ALL: [Which; 3] = [Which::Pump, Which::Signal, Which::Idler];

    pub fn prefix(self) -> &'static str {
        match self {
            Which::Pump => "p",
            Which::Signal => "s",
            Which::Idler => "i",
        }
    }

    pub fn defects(self, d: &ScenarioDefects) -> &RingDefectParams {
        match self {
            Which::Pump => &d.pump,
            Which::Signal => &d.signal,
            Which::Idler => &d.idler,
        }
    }
}

/// Forward-bus dip statistics of all three resonances; `None` where no dip
/// could be located.
pub fn resonance_lineshapes(scenario: &RingScenario, defects: &ScenarioDefects, exec: Execution) -> Result<[Option<LineshapeStats>; 3]> {
    let mut out = [None; 3];
    for (slot, which) in out.iter_mut().zip(Which::ALL) {
        let t = resonance_transmission(scenario, which, which.defects(defects), exec)?;
        *slot = extract_lineshape_stats(&t, 0).ok();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// λ·|pump|² giving the target pair probability.
    pub strength: f64,
    pub target: f64,
    pub pair_probability: f64,
    pub engine: Engine,
    pub evaluations: usize,
}

/// Finds λ·|pump|² such that the defect-free forward-forward pair probability
/// equals `target` to within `tolerance`.
///
/// The first-order pair probability is exactly quadratic in the strength, so
/// its root seeds a bracketed false-position (Illinois) search on the chosen
/// engine.
pub fn calibrate(scenario: &RingScenario, target: f64, engine: Engine, tolerance: f64, exec: Execution) -> Result<Calibration> {
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::Calibration(format!("target pair probability {target} is not a probability")));
    }
    if target == 0.0 {
        return Ok(Calibration {
            strength: 0.0,
            target,
            pair_probability: 0.0,
            engine,
            evaluations: 0,
        });
    }
    let unit = scenario.with_strength(1.0);
    let fwm = build_fwm_scenario(&unit, &ScenarioDefects::default())?;
    let pump = fwm.solve_pump(exec)?;
    let unit_blocks = fwm.gamma_blocks(&pump)?;
    let mut evaluations = 0;
    let mut pair_probability = |strength: f64, engine: Engine| -> Result<f64> {
        evaluations += 1;
        let blocks = unit_blocks.scaled(strength);
        let signal = solve_signal(&fwm, &blocks, engine, exec)?;
        let jsa = signal_jsa(&signal, &blocks, SIGNAL_FORWARD, IDLER_FORWARD)?;
        Ok(schmidt(&jsa)?.pair_probability)
    };
    let first_order = pair_probability(1.0, Engine::Perturbative)?;
    if !(first_order > 0.0) {
        return Err(Error::Calibration("baseline scenario generates no pairs".into()));
    }
    let seed = (target / first_order).sqrt();
    if engine == Engine::Perturbative {
        let achieved = pair_probability(seed, engine)?;
        return Ok(Calibration {
            strength: seed,
            target,
            pair_probability: achieved,
            engine,
            evaluations,
        });
    }
    let f = |x: f64, pp: &mut dyn FnMut(f64, Engine) -> Result<f64>| -> Result<f64> { Ok(pp(x, engine)? - target) };
    let (mut a, mut b) = (0.9 * seed, 1.1 * seed);
    let mut fa = f(a, &mut pair_probability)?;
    let mut fb = f(b, &mut pair_probability)?;
    if fa.signum() == fb.signum() {
        return Err(Error::Calibration(format!(
            "bracket [{a:.6e}, {b:.6e}] does not enclose the target (residuals {fa:.3e}, {fb:.3e})"
        )));
    }
    let mut side = 0;
    for _ in 0..60 {
        let x = (a * fb - b * fa) / (fb - fa);
        let fx = f(x, &mut pair_probability)?;
        if fx.abs() <= tolerance {
            return Ok(Calibration {
                strength: x,
                target,
                pair_probability: fx + target,
                engine,
                evaluations,
            });
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::Calibration("false-position search did not converge".into()))
}

/// First-order against full solution of one device, sharing pump and
/// squeezing blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbComparison {
    pub fidelity: f64,
    pub full_purity: f64,
    pub perturbative_purity: f64,
    pub full_pair_probability: f64,
    pub perturbative_pair_probability: f64,
    /// ‖Γ̄⁽ˢq⁾‖_F·dk over the pump decay rate.
    pub squeezing_norm: f64,
    pub bogoliubov_residual: f64,
}

pub fn perturb_compare(scenario: &RingScenario, defects: &ScenarioDefects, exec: Execution) -> Result<PerturbComparison> {
    let fwm = build_fwm_scenario(scenario, defects)?;
    let pump = fwm.solve_pump(exec)?;
    let blocks = fwm.gamma_blocks(&pump)?;
    let full = solve_signal(&fwm, &blocks, Engine::Full, exec)?;
    let pert = solve_signal(&fwm, &blocks, Engine::Perturbative, exec)?;
    let jf = signal_jsa(&full, &blocks, SIGNAL_FORWARD, IDLER_FORWARD)?;
    let jp = signal_jsa(&pert, &blocks, SIGNAL_FORWARD, IDLER_FORWARD)?;
    let (sf, sp) = (schmidt(&jf)?, schmidt(&jp)?);
    let bogoliubov_residual = match &full {
        SignalSolution::Full { kernel, .. } => kernel.bogoliubov_residual,
        SignalSolution::Perturbative { .. } => f64::NAN,
    };
    Ok(PerturbComparison {
        fidelity: crate::analysis::jsa_fidelity(&jf, &jp)?,
        full_purity: sf.purity,
        perturbative_purity: sp.purity,
        full_pair_probability: sf.pair_probability,
        perturbative_pair_probability: sp.pair_probability,
        squeezing_norm: blocks.relative_norm(fwm.pump_decay_rate()),
        bogoliubov_residual,
    })
}

/// Purity and pair probability of one output pair; `None` when the block is
/// identically zero (no pairs in that pathway).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub purity: Option<f64>,
    pub pair_probability: f64,
}

pub fn pair_metrics(jsa: &JointSpectralAmplitude) -> Result<PairMetrics> {
    // Blocks below this pair probability are numerical dust from a pathway
    // that the device does not drive.
    const EMPTY: f64 = 1e-24;
    let pp = jsa.pair_probability();
    if pp <= EMPTY {
        return Ok(PairMetrics {
            purity: None,
            pair_probability: pp,
        });
    }
    let s = schmidt(jsa)?;
    Ok(PairMetrics {
        purity: Some(s.purity),
        pair_probability: s.pair_probability,
    })
}

/// f-f, f-b and b-b metrics of one device.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub forward_forward: PairMetrics,
    pub forward_backward: PairMetrics,
    pub backward_backward: PairMetrics,
}

impl DeviceSolution {
    pub fn metrics(&self) -> Result<DeviceMetrics> {
        Ok(DeviceMetrics {
            forward_forward: pair_metrics(&self.jsa(SIGNAL_FORWARD, IDLER_FORWARD)?)?,
            forward_backward: pair_metrics(&self.jsa(SIGNAL_FORWARD, IDLER_BACKWARD)?)?,
            backward_backward: pair_metrics(&self.jsa(SIGNAL_BACKWARD, IDLER_BACKWARD)?)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_target_needs_no_nonlinearity() {
        let cal = calibrate(&RingScenario::default(), 0.0, Engine::Full, 1e-8, Execution::Sequential).unwrap();
        assert_eq!(cal.strength, 0.0);
        assert_eq!(cal.evaluations, 0);
    }

    #[test]
    fn negative_target_is_refused() {
        let r = calibrate(&RingScenario::default(), -1.0, Engine::Full, 1e-8, Execution::Sequential);
        assert!(matches!(r, Err(Error::Calibration(_))));
    }

    #[test]
    fn engine_names_parse() {
        assert_eq!("full".parse::<Engine>().unwrap(), Engine::Full);
        assert_eq!("perturbative".parse::<Engine>().unwrap(), Engine::Perturbative);
        assert!("exact".parse::<Engine>().is_err());
    }
}
