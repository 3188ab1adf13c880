//! Run configuration files: device, defects, calibration and batch settings.
//!
//! Defects are written as magnitude and phase. A manifest written by a
//! previous run is accepted wherever a config is, so runs can be repeated
//! from their own output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::lingrid::KGrid;
use crate::montecarlo::EnsembleConfig;
use crate::pipeline::{Engine, BASELINE_PAIR_PROBABILITY};
use crate::ringscene::{polar, RingDefectParams, RingGeometry, RingScenario, ScenarioDefects, WaveguideDispersion};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolarValue {
    pub magnitude: f64,
    pub phase: f64,
}

impl PolarValue {
    pub fn value(&self) -> C64 {
        polar(self.magnitude, self.phase)
    }

    pub fn from_value(z: C64) -> Self {
        PolarValue {
            magnitude: z.norm(),
            phase: if z.norm() == 0.0 { 0.0 } else { z.arg() },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResonanceDefects {
    pub g: PolarValue,
    pub delta_fb: PolarValue,
    pub delta_bf: PolarValue,
    pub c: PolarValue,
}

impl ResonanceDefects {
    pub fn params(&self) -> RingDefectParams {
        RingDefectParams {
            g: self.g.value(),
            delta_fb: self.delta_fb.value(),
            delta_bf: self.delta_bf.value(),
            c: self.c.value(),
        }
    }

    pub fn from_params(p: &RingDefectParams) -> Self {
        ResonanceDefects {
            g: PolarValue::from_value(p.g),
            delta_fb: PolarValue::from_value(p.delta_fb),
            delta_bf: PolarValue::from_value(p.delta_bf),
            c: PolarValue::from_value(p.c),
        }
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut PolarValue> {
        Some(match name {
            "g" => &mut self.g,
            "delta_fb" => &mut self.delta_fb,
            "delta_bf" => &mut self.delta_bf,
            "c" => &mut self.c,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefectsConfig {
    pub pump: ResonanceDefects,
    pub signal: ResonanceDefects,
    pub idler: ResonanceDefects,
}

impl DefectsConfig {
    pub fn scenario_defects(&self) -> ScenarioDefects {
        ScenarioDefects {
            pump: self.pump.params(),
            signal: self.signal.params(),
            idler: self.idler.params(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub points: usize,
    /// Half-width of the symmetric k window (1/m).
    pub span: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = KGrid::ring_default();
        GridConfig {
            points: g.n_points,
            span: g.k_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Defect-free f-f pair probability to match.
    pub target: f64,
    /// Absolute tolerance on the pair probability.
    pub tolerance: f64,
    /// Engine used for the search.
    pub engine: Engine,
    /// λ·|pump|² to use without searching.
    pub strength: Option<f64>,
    /// Calibration record written by an earlier `calibrate` run.
    pub file: Option<String>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            target: BASELINE_PAIR_PROBABILITY,
            tolerance: 1e-8,
            engine: Engine::Full,
            strength: None,
            file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// `<resonance>.<defect>` (e.g. `pump.g`) or `strength`.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Indices into `values` whose JSA and JTA grids are exported.
    pub export_points: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            parameter: "pump.g".into(),
            values: [0.2, 1.6, 4.4, 9.8].iter().map(|x| x * 1e10).collect(),
            export_points: vec![0, 1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbCompareConfig {
    /// Ensemble sample indices to compare; when empty the ensemble is run
    /// and its best and worst members are used.
    pub samples: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dispersion: WaveguideDispersion,
    pub geometry: RingGeometry,
    pub pump_wavelength_um: f64,
    pub signal_itu_channel: u32,
    pub idler_itu_channel: u32,
    pub detuning: f64,
    pub grid: GridConfig,
    pub engine: Engine,
    pub defects: DefectsConfig,
    pub calibration: CalibrationConfig,
    pub sweep: SweepConfig,
    pub ensemble: EnsembleConfig,
    pub perturb_compare: PerturbCompareConfig,
    /// Worker threads for batch commands; 0 lets the pool decide.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = RingScenario::default();
        RunConfig {
            dispersion: s.dispersion,
            geometry: s.geometry,
            pump_wavelength_um: s.pump_wavelength_um,
            signal_itu_channel: s.signal_itu_channel,
            idler_itu_channel: s.idler_itu_channel,
            detuning: s.detuning,
            grid: GridConfig::default(),
            engine: Engine::Full,
            defects: DefectsConfig::default(),
            calibration: CalibrationConfig::default(),
            sweep: SweepConfig::default(),
            ensemble: EnsembleConfig::default(),
            perturb_compare: PerturbCompareConfig::default(),
            jobs: 0,
        }
    }
}

impl RunConfig {
    /// Reads a config, or the `config` section of a manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let body = match value.get("config") {
            Some(inner) if value.get("command").is_some() => inner.clone(),
            _ => value,
        };
        let cfg: RunConfig = serde_json::from_value(body).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.points < 3 || !(self.grid.span > 0.0) {
            return Err(Error::Config(format!(
                "grid needs ≥ 3 points and a positive span (got {} points, span {})",
                self.grid.points, self.grid.span
            )));
        }
        if !(self.calibration.target >= 0.0) || !(self.calibration.tolerance > 0.0) {
            return Err(Error::Config("calibration target must be ≥ 0 and tolerance > 0".into()));
        }
        self.ensemble.validate()?;
        parse_parameter(&self.sweep.parameter)?;
        Ok(())
    }

    pub fn kgrid(&self) -> Result<KGrid> {
        KGrid::symmetric(self.grid.points, self.grid.span)
    }

    /// The device at the given λ·|pump|².
    pub fn scenario(&self, strength: f64) -> Result<RingScenario> {
        Ok(RingScenario {
            dispersion: self.dispersion,
            geometry: self.geometry,
            pump_wavelength_um: self.pump_wavelength_um,
            signal_itu_channel: self.signal_itu_channel,
            idler_itu_channel: self.idler_itu_channel,
            grid: self.kgrid()?,
            detuning: self.detuning,
            ..RingScenario::default()
        }
        .with_strength(strength))
    }
}

/// A sweepable quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    Strength,
    /// (resonance, defect) by name.
    Defect(&'static str, &'static str),
}

pub fn parse_parameter(path: &str) -> Result<SweepParameter> {
    if path == "strength" {
        return Ok(SweepParameter::Strength);
    }
    let unknown = || Error::Config(format!("unknown sweep parameter `{path}`"));
    let (res, field) = path.split_once('.').ok_or_else(unknown)?;
    let res = ["pump", "signal", "idler"].into_iter().find(|r| *r == res).ok_or_else(unknown)?;
    let field = ["g", "delta_fb", "delta_bf", "c"].into_iter().find(|f| *f == field).ok_or_else(unknown)?;
    Ok(SweepParameter::Defect(res, field))
}

/// Sets the magnitude of a defect parameter, keeping its configured phase.
pub fn apply_defect(defects: &DefectsConfig, resonance: &str, field: &str, magnitude: f64) -> Result<DefectsConfig> {
    let mut out = *defects;
    let r = match resonance {
        "pump" => &mut out.pump,
        "signal" => &mut out.signal,
        "idler" => &mut out.idler,
        _ => return Err(Error::Config(format!("unknown resonance `{resonance}`"))),
    };
    r.field_mut(field)
        .ok_or_else(|| Error::Config(format!("unknown defect `{field}`")))?
        .magnitude = magnitude;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn manifest_section_is_accepted() {
        let cfg = RunConfig {
            jobs: 3,
            ..Default::default()
        };
        let manifest = serde_json::json!({ "command": "scenario", "config": cfg });
        assert_eq!(RunConfig::from_json(&manifest.to_string()).unwrap(), cfg);
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        assert!(parse_parameter("pump.q").is_err());
        assert!(parse_parameter("ring.g").is_err());
        assert_eq!(parse_parameter("idler.g").unwrap(), SweepParameter::Defect("idler", "g"));
    }

    #[test]
    fn polar_round_trip() {
        let p = PolarValue {
            magnitude: 2.0,
            phase: 0.7,
        };
        let q = PolarValue::from_value(p.value());
        assert!((q.magnitude - 2.0).abs() < 1e-15 && (q.phase - 0.7).abs() < 1e-15);
    }

    #[test]
    fn apply_keeps_phase() {
        let mut d = DefectsConfig::default();
        d.pump.g.phase = 1.0;
        let e = apply_defect(&d, "pump", "g", 5.0).unwrap();
        assert_eq!(e.pump.g.magnitude, 5.0);
        assert_eq!(e.pump.g.phase, 1.0);
    }

    #[test]
    fn bad_grid_is_a_config_error() {
        assert!(matches!(
            RunConfig::from_json(r#"{"grid": {"points": 1, "span": 10}}"#),
            Err(Error::Config(_))
        ));
    }
}
