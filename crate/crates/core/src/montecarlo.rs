//! Ensembles of defect-sampled devices.
//!
//! Every sample draws from its own ChaCha stream (seed, stream = sample
//! index), so results do not depend on how samples are spread over workers.
//! Heralded states are summed in sample order for the same reason.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{heralded_state, schmidt, HeraldedMixture};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::lingrid::LineshapeStats;
use crate::par::{map_indexed, Execution};
use crate::pipeline::{resonance_lineshapes, solve_device, Engine, IDLER_FORWARD, SIGNAL_FORWARD};
use crate::ringscene::{polar, RingDefectParams, RingScenario, ScenarioDefects};
use crate::settom::{compare_reconstruction, reconstruct, SetComparison, SetGauge};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_samples: usize,
    /// Upper bound of |g| (rad/s).
    pub g_max: f64,
    /// Upper bounds of |δ_fb| and |δ_bf| (fractions of γ).
    pub delta_fb_max: f64,
    pub delta_bf_max: f64,
    /// Upper bound of |c|.
    pub c_max: f64,
    pub seed: u64,
    /// Draw each resonance separately; otherwise all three share one draw.
    pub independent_resonances: bool,
    pub engine: Engine,
    /// Also simulate and invert SET data for every sample.
    pub with_set: bool,
    pub set_gauge: SetGauge,
    pub histogram_bins: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_samples: 1000,
            g_max: 1e10,
            delta_fb_max: 0.2,
            delta_bf_max: 0.2,
            c_max: 0.2,
            seed: 2024,
            independent_resonances: true,
            engine: Engine::Full,
            with_set: false,
            set_gauge: SetGauge::Aligned,
            histogram_bins: 30,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.g_max, self.delta_fb_max, self.delta_bf_max, self.c_max];
        if ranges.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config("defect ranges must be finite and nonnegative".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha20Rng, max: f64) -> C64 {
    let m = max * rng.random::<f64>();
    let phase = std::f64::consts::TAU * rng.random::<f64>();
    polar(m, phase)
}

fn draw_resonance(rng: &mut ChaCha20Rng, cfg: &EnsembleConfig) -> RingDefectParams {
    RingDefectParams {
        g: draw(rng, cfg.g_max),
        delta_fb: draw(rng, cfg.delta_fb_max),
        delta_bf: draw(rng, cfg.delta_bf_max),
        c: draw(rng, cfg.c_max),
    }
}

/// Defects of sample `index`: magnitudes uniform on [0, max), phases uniform
/// on [0, 2π), drawn pump, signal, idler in turn.
pub fn sample_defects(cfg: &EnsembleConfig, index: usize) -> ScenarioDefects {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let pump = draw_resonance(&mut rng, cfg);
    if !cfg.independent_resonances {
        return ScenarioDefects {
            pump,
            signal: pump,
            idler: pump,
        };
    }
    let signal = draw_resonance(&mut rng, cfg);
    let idler = draw_resonance(&mut rng, cfg);
    ScenarioDefects { pump, signal, idler }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub defects: ScenarioDefects,
    /// Pump, signal, idler forward-bus dips.
    pub lineshapes: [Option<LineshapeStats>; 3],
    /// f-f heralded purity and pair probability.
    pub purity: f64,
    pub pair_probability: f64,
    pub set: Option<SetComparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins spanning the data; the top edge is inclusive.
    pub fn from_values(values: &[f64], bins: usize) -> Option<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) || bins == 0 {
            return None;
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0; bins];
        for &v in values {
            let b = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
            counts[b.min(bins - 1)] += 1;
        }
        Some(Histogram { lo, hi, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub index: usize,
    pub purity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub mean_fidelity: f64,
    pub mean_purity_gap: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_purity: f64,
    pub std_purity: f64,
    pub mean_pair_probability: f64,
    pub ensemble_purity: f64,
    pub best: Extreme,
    pub worst: Extreme,
    /// Mean over every resonance with a located dip.
    pub mean_linewidth: f64,
    pub linewidths_missing: usize,
    pub set: Option<SetSummary>,
    pub linewidth_histogram: Option<Histogram>,
    pub center_histogram: Option<Histogram>,
    pub purity_histogram: Option<Histogram>,
    pub pair_probability_histogram: Option<Histogram>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub config: EnsembleConfig,
    /// λ·|pump|² used for every sample.
    pub strength: f64,
    pub samples: Vec<SampleRecord>,
    pub failures: Vec<SampleFailure>,
    pub summary: EnsembleSummary,
}

struct SampleOutput {
    record: SampleRecord,
    state: CMat,
}

fn run_sample(cfg: &EnsembleConfig, scenario: &RingScenario, index: usize) -> Result<SampleOutput> {
    let defects = sample_defects(cfg, index);
    let inner = Execution::Sequential;
    let lineshapes = resonance_lineshapes(scenario, &defects, inner)?;
    let device = solve_device(scenario, &defects, cfg.engine, inner)?;
    let jsa = device.jsa(SIGNAL_FORWARD, IDLER_FORWARD)?;
    let s = schmidt(&jsa)?;
    let set = if cfg.with_set {
        let data = device.set_dataset(SIGNAL_FORWARD, IDLER_FORWARD)?;
        let recon = reconstruct(&data, cfg.set_gauge)?;
        Some(compare_reconstruction(&recon.jsa, &jsa)?)
    } else {
        None
    };
    Ok(SampleOutput {
        state: heralded_state(&jsa)?,
        record: SampleRecord {
            index,
            defects,
            lineshapes,
            purity: s.purity,
            pair_probability: s.pair_probability,
            set,
        },
    })
}

/// Samples solved concurrently before their heralded states are folded into
/// the mixture; bounds memory to a chunk of 201² states.
const CHUNK: usize = 64;

pub fn run_ensemble(cfg: &EnsembleConfig, scenario: &RingScenario, exec: Execution) -> Result<EnsembleReport> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut failures = Vec::new();
    let mut mixture = HeraldedMixture::new();
    let mut start = 0;
    while start < cfg.n_samples {
        let len = CHUNK.min(cfg.n_samples - start);
        let chunk = map_indexed(len, exec, |a| run_sample(cfg, scenario, start + a));
        for (a, out) in chunk.into_iter().enumerate() {
            match out {
                Ok(o) => {
                    mixture.add_state(scenario.grid, o.state, 1.0)?;
                    samples.push(o.record);
                }
                Err(e) => failures.push(SampleFailure {
                    index: start + a,
                    error: e.to_string(),
                }),
            }
        }
        start += len;
    }
    let ensemble_purity = if samples.is_empty() { f64::NAN } else { mixture.purity()? };
    let summary = summarize(&samples, failures.len(), ensemble_purity, cfg.histogram_bins);
    Ok(EnsembleReport {
        config: cfg.clone(),
        strength: scenario.coupling.strength(),
        samples,
        failures,
        summary,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Aggregates of per-sample rows. The ensemble purity needs the JSAs
/// themselves and is passed in.
pub fn summarize(samples: &[SampleRecord], n_failed: usize, ensemble_purity: f64, bins: usize) -> EnsembleSummary {
    let purities: Vec<f64> = samples.iter().map(|s| s.purity).collect();
    let pps: Vec<f64> = samples.iter().map(|s| s.pair_probability).collect();
    let mean_purity = mean(&purities);
    let std_purity = if purities.len() > 1 {
        (purities.iter().map(|p| (p - mean_purity).powi(2)).sum::<f64>() / (purities.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let pick = |better: fn(f64, f64) -> bool| {
        samples.iter().fold(None::<Extreme>, |acc, s| match acc {
            Some(e) if !better(s.purity, e.purity) => Some(e),
            _ => Some(Extreme {
                index: s.index,
                purity: s.purity,
            }),
        })
    };
    let none = Extreme {
        index: usize::MAX,
        purity: f64::NAN,
    };
    let stats: Vec<&LineshapeStats> = samples.iter().flat_map(|s| s.lineshapes.iter().flatten()).collect();
    let widths: Vec<f64> = stats.iter().map(|l| l.linewidth).collect();
    let centers: Vec<f64> = stats.iter().map(|l| l.center).collect();
    let set_rows: Vec<&SetComparison> = samples.iter().filter_map(|s| s.set.as_ref()).collect();
    let set = (!set_rows.is_empty()).then(|| SetSummary {
        mean_fidelity: mean(&set_rows.iter().map(|c| c.fidelity).collect::<Vec<_>>()),
        mean_purity_gap: mean(&set_rows.iter().map(|c| c.purity_gap).collect::<Vec<_>>()),
        n: set_rows.len(),
    });
    EnsembleSummary {
        n_ok: samples.len(),
        n_failed,
        mean_purity,
        std_purity,
        mean_pair_probability: mean(&pps),
        ensemble_purity,
        best: pick(|a, b| a > b).unwrap_or(none.clone()),
        worst: pick(|a, b| a < b).unwrap_or(none),
        mean_linewidth: mean(&widths),
        linewidths_missing: 3 * samples.len() - widths.len(),
        set,
        linewidth_histogram: Histogram::from_values(&widths, bins),
        center_histogram: Histogram::from_values(&centers, bins),
        purity_histogram: Histogram::from_values(&purities, bins),
        pair_probability_histogram: Histogram::from_values(&pps, bins),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_reproducible_and_in_range() {
        let cfg = EnsembleConfig::default();
        let a = sample_defects(&cfg, 17);
        assert_eq!(a, sample_defects(&cfg, 17));
        assert_ne!(a, sample_defects(&cfg, 18));
        for r in [a.pump, a.signal, a.idler] {
            assert!(r.g.norm() < cfg.g_max);
            assert!(r.delta_fb.norm() < 0.2 && r.delta_bf.norm() < 0.2 && r.c.norm() < 0.2);
        }
    }

    #[test]
    fn shared_draw_when_not_independent() {
        let cfg = EnsembleConfig {
            independent_resonances: false,
            ..Default::default()
        };
        let d = sample_defects(&cfg, 3);
        assert_eq!(d.pump, d.signal);
        assert_eq!(d.pump, d.idler);
    }

    #[test]
    fn zero_ranges_give_zero_defects() {
        let cfg = EnsembleConfig {
            g_max: 0.0,
            delta_fb_max: 0.0,
            delta_bf_max: 0.0,
            c_max: 0.0,
            ..Default::default()
        };
        let d = sample_defects(&cfg, 5);
        assert!(d.pump.is_zero() && d.signal.is_zero() && d.idler.is_zero());
    }

    #[test]
    fn histogram_counts_every_value() {
        let h = Histogram::from_values(&[0.0, 0.5, 1.0, 1.0, 0.25], 4).unwrap();
        assert_eq!(h.total(), 5);
        assert_eq!(h.counts[3], 2);
        assert!(Histogram::from_values(&[], 4).is_none());
    }

    #[test]
    fn negative_range_is_a_config_error() {
        let cfg = EnsembleConfig {
            c_max: -0.1,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
