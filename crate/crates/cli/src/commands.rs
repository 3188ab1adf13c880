use std::collections::BTreeMap;
use std::path::Path;

use ringfwm::analysis::{jta, JointSpectralAmplitude};
use ringfwm::config::{apply_defect, parse_parameter, DefectsConfig, ResonanceDefects, RunConfig, SweepParameter};
use ringfwm::export::{self, write_jsa, write_json, write_table, Cell, FIELD_COLUMNS, JSA_COLUMNS, JTA_COLUMNS};
use ringfwm::montecarlo::{run_ensemble, sample_defects, EnsembleConfig, EnsembleReport, Histogram};
use ringfwm::par::Execution;
use ringfwm::pipeline::{
    calibrate, perturb_compare, resonance_lineshapes, resonance_transmission, solve_device, Calibration, DeviceMetrics,
    DeviceSolution, Engine, PairMetrics, Which, IDLER_BACKWARD, IDLER_FORWARD, SIGNAL_BACKWARD, SIGNAL_FORWARD,
};
use ringfwm::ringscene::{RingScenario, ScenarioDefects};
use ringfwm::settom::{compare_reconstruction, reconstruct};
use ringfwm::{Error, Result};
use serde::Serialize;

use crate::Command;

/// Output pathways: file tag and (signal, idler) labels.
const PAIRS: [(&str, &str, &str); 3] = [
    ("ff", SIGNAL_FORWARD, IDLER_FORWARD),
    ("fb", SIGNAL_FORWARD, IDLER_BACKWARD),
    ("bb", SIGNAL_BACKWARD, IDLER_BACKWARD),
];

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    seed: u64,
    strength: f64,
    calibration: Option<&'a Calibration>,
    /// Column order of every CSV written, by file name.
    columns: BTreeMap<String, Vec<String>>,
}

/// Collects written files and their column orders for the manifest.
#[derive(Default)]
struct Outputs {
    columns: BTreeMap<String, Vec<String>>,
}

impl Outputs {
    fn note(&mut self, name: &str, cols: &[&str]) {
        self.columns.insert(name.to_string(), cols.iter().map(|c| c.to_string()).collect());
    }

    fn table(&mut self, dir: &Path, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
        write_table(&dir.join(name), header, rows)?;
        self.note(name, header);
        Ok(())
    }

    fn jsa(&mut self, dir: &Path, name: &str, jsa: &JointSpectralAmplitude) -> Result<()> {
        write_jsa(&dir.join(name), jsa)?;
        self.note(name, &JSA_COLUMNS);
        Ok(())
    }

    fn jta(&mut self, dir: &Path, name: &str, jsa: &JointSpectralAmplitude, scenario: &RingScenario) -> Result<()> {
        let t = jta(jsa, scenario.signal().group_velocity, scenario.idler().group_velocity);
        export::write_jta(&dir.join(name), &t)?;
        self.note(name, &JTA_COLUMNS);
        Ok(())
    }
}

struct Strength {
    value: f64,
    calibration: Option<Calibration>,
}

fn resolve_strength(cfg: &RunConfig, exec: Execution) -> Result<Strength> {
    if let Some(value) = cfg.calibration.strength {
        return Ok(Strength {
            value,
            calibration: None,
        });
    }
    if let Some(file) = &cfg.calibration.file {
        let text = std::fs::read_to_string(file)
            .map_err(|e| Error::Config(format!("cannot read calibration file {file}: {e}")))?;
        let cal: Calibration = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{file}: {e}")))?;
        return Ok(Strength {
            value: cal.strength,
            calibration: Some(cal),
        });
    }
    let cal = run_calibration(cfg, exec)?;
    Ok(Strength {
        value: cal.strength,
        calibration: Some(cal),
    })
}

fn run_calibration(cfg: &RunConfig, exec: Execution) -> Result<Calibration> {
    let c = &cfg.calibration;
    calibrate(&cfg.scenario(0.0)?, c.target, c.engine, c.tolerance, exec)
}

pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let exec = Execution::with_workers(cfg.jobs);
    let mut outputs = Outputs::default();
    let strength = match command {
        Command::Calibrate => {
            let cal = run_calibration(cfg, exec)?;
            write_json(&out.join("calibration.json"), &cal)?;
            Strength {
                value: cal.strength,
                calibration: Some(cal),
            }
        }
        _ => resolve_strength(cfg, exec)?,
    };
    let scenario = cfg.scenario(strength.value)?;
    match command {
        Command::Calibrate => cmd_calibrate(strength.calibration.as_ref(), out, &mut outputs)?,
        Command::Scenario => cmd_scenario(cfg, &scenario, exec, out, &mut outputs)?,
        Command::Sweep => cmd_sweep(cfg, exec, strength.value, out, &mut outputs)?,
        Command::Ensemble => cmd_ensemble(&cfg.ensemble, &scenario, exec, out, &mut outputs).map(|_| ())?,
        Command::SetStudy => cmd_set_study(cfg, &scenario, exec, out, &mut outputs)?,
        Command::PerturbCompare => cmd_perturb_compare(cfg, &scenario, exec, out, &mut outputs)?,
    }
    let manifest = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seed: cfg.ensemble.seed,
        strength: strength.value,
        calibration: strength.calibration.as_ref(),
        columns: outputs.columns,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

fn cmd_calibrate(cal: Option<&Calibration>, out: &Path, outputs: &mut Outputs) -> Result<()> {
    let cal = cal.ok_or_else(|| Error::Calibration("no calibration record".into()))?;
    let row = vec![
        Cell::from(cal.strength),
        cal.target.into(),
        cal.pair_probability.into(),
        cal.evaluations.into(),
        engine_name(cal.engine).into(),
    ];
    outputs.table(
        out,
        "metrics.csv",
        &["strength", "target", "pair_probability", "evaluations", "engine"],
        &[row],
    )
}

fn engine_name(e: Engine) -> &'static str {
    match e {
        Engine::Full => "full",
        Engine::Perturbative => "perturbative",
    }
}

const METRIC_COLUMNS: [&str; 6] = [
    "ff_purity",
    "ff_pair_probability",
    "fb_purity",
    "fb_pair_probability",
    "bb_purity",
    "bb_pair_probability",
];

fn metric_cells(m: &DeviceMetrics) -> Vec<Cell> {
    let pm = |p: &PairMetrics| [Cell::from(p.purity), Cell::from(p.pair_probability)];
    [pm(&m.forward_forward), pm(&m.forward_backward), pm(&m.backward_backward)]
        .into_iter()
        .flatten()
        .collect()
}

fn export_pairs(device: &DeviceSolution, scenario: &RingScenario, prefix: &str, out: &Path, outputs: &mut Outputs) -> Result<()> {
    for (tag, s, i) in PAIRS {
        let jsa = device.jsa(s, i)?;
        if jsa.is_zero() {
            continue;
        }
        outputs.jsa(out, &format!("{prefix}jsa_{tag}.csv"), &jsa)?;
        outputs.jta(out, &format!("{prefix}jta_{tag}.csv"), &jsa, scenario)?;
    }
    Ok(())
}

fn cmd_scenario(cfg: &RunConfig, scenario: &RingScenario, exec: Execution, out: &Path, outputs: &mut Outputs) -> Result<()> {
    let defects = cfg.defects.scenario_defects();
    let device = solve_device(scenario, &defects, cfg.engine, exec)?;
    let mut header = vec!["engine"];
    header.extend(METRIC_COLUMNS);
    let mut row = vec![Cell::from(engine_name(cfg.engine))];
    row.extend(metric_cells(&device.metrics()?));
    outputs.table(out, "metrics.csv", &header, &[row])?;

    let stats = resonance_lineshapes(scenario, &defects, exec)?;
    let rows: Vec<Vec<Cell>> = Which::ALL
        .iter()
        .zip(stats)
        .map(|(w, s)| {
            vec![
                Cell::from(w.prefix()),
                s.map(|s| s.linewidth).into(),
                s.map(|s| s.center).into(),
                s.map(|s| s.min_transmission).into(),
            ]
        })
        .collect();
    outputs.table(out, "lineshapes.csv", &["resonance", "linewidth", "center", "min_transmission"], &rows)?;
    for which in Which::ALL {
        let t = resonance_transmission(scenario, which, which.defects(&defects), exec)?;
        let name = format!("transmission_{}.csv", which.prefix());
        export::write_field(&out.join(&name), &t)?;
        outputs.note(&name, &FIELD_COLUMNS);
    }
    export_pairs(&device, scenario, "", out, outputs)
}

fn cmd_sweep(cfg: &RunConfig, exec: Execution, strength: f64, out: &Path, outputs: &mut Outputs) -> Result<()> {
    let sweep = &cfg.sweep;
    let param = parse_parameter(&sweep.parameter)?;
    let point = |value: f64| -> Result<(RingScenario, ScenarioDefects)> {
        Ok(match param {
            SweepParameter::Strength => (cfg.scenario(value)?, cfg.defects.scenario_defects()),
            SweepParameter::Defect(res, field) => (
                cfg.scenario(strength)?,
                apply_defect(&cfg.defects, res, field, value)?.scenario_defects(),
            ),
        })
    };
    let mut header = vec!["value"];
    header.extend(METRIC_COLUMNS);
    let mut rows = Vec::new();
    for (n, &value) in sweep.values.iter().enumerate() {
        let (scenario, defects) = point(value)?;
        let device = solve_device(&scenario, &defects, cfg.engine, exec)?;
        let mut row = vec![Cell::from(value)];
        row.extend(metric_cells(&device.metrics()?));
        rows.push(row);
        if sweep.export_points.contains(&n) {
            let prefix = format!("sweep_{}_{}_", sweep.parameter, export::fmt(value));
            export_pairs(&device, &scenario, &prefix, out, outputs)?;
        }
    }
    outputs.table(out, "metrics.csv", &header, &rows)
}

fn defect_columns() -> Vec<String> {
    let mut cols = Vec::new();
    for r in ["pump", "signal", "idler"] {
        for f in ["g", "delta_fb", "delta_bf", "c"] {
            cols.push(format!("{r}_{f}_magnitude"));
            cols.push(format!("{r}_{f}_phase"));
        }
    }
    cols
}

fn defect_cells(d: &ScenarioDefects) -> Vec<Cell> {
    let cfg = DefectsConfig {
        pump: ResonanceDefects::from_params(&d.pump),
        signal: ResonanceDefects::from_params(&d.signal),
        idler: ResonanceDefects::from_params(&d.idler),
    };
    [cfg.pump, cfg.signal, cfg.idler]
        .iter()
        .flat_map(|r| [r.g, r.delta_fb, r.delta_bf, r.c])
        .flat_map(|p| [Cell::from(p.magnitude), Cell::from(p.phase)])
        .collect()
}

fn cmd_ensemble(
    ens: &EnsembleConfig,
    scenario: &RingScenario,
    exec: Execution,
    out: &Path,
    outputs: &mut Outputs,
) -> Result<EnsembleReport> {
    let report = run_ensemble(ens, scenario, exec)?;
    let mut header: Vec<String> = ["index", "purity", "pair_probability"].map(String::from).to_vec();
    for r in ["pump", "signal", "idler"] {
        header.push(format!("{r}_linewidth"));
        header.push(format!("{r}_center"));
    }
    header.extend(defect_columns());
    let rows: Vec<Vec<Cell>> = report
        .samples
        .iter()
        .map(|s| {
            let mut row = vec![Cell::from(s.index), s.purity.into(), s.pair_probability.into()];
            for l in s.lineshapes {
                row.push(l.map(|l| l.linewidth).into());
                row.push(l.map(|l| l.center).into());
            }
            row.extend(defect_cells(&s.defects));
            row
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    outputs.table(out, "samples.csv", &header_ref, &rows)?;
    let failures: Vec<Vec<Cell>> = report
        .failures
        .iter()
        .map(|f| vec![Cell::from(f.index), f.error.as_str().into()])
        .collect();
    outputs.table(out, "failures.csv", &["index", "error"], &failures)?;

    let s = &report.summary;
    let hist: [(&str, &Option<Histogram>); 4] = [
        ("linewidth", &s.linewidth_histogram),
        ("center", &s.center_histogram),
        ("purity", &s.purity_histogram),
        ("pair_probability", &s.pair_probability_histogram),
    ];
    let mut hrows = Vec::new();
    for (name, h) in hist {
        if let Some(h) = h {
            let width = (h.hi - h.lo) / h.counts.len() as f64;
            for (b, &count) in h.counts.iter().enumerate() {
                let lo = h.lo + b as f64 * width;
                hrows.push(vec![Cell::from(name), b.into(), lo.into(), (lo + width).into(), count.into()]);
            }
        }
    }
    outputs.table(out, "histograms.csv", &["quantity", "bin", "lo", "hi", "count"], &hrows)?;
    let summary_row = vec![
        Cell::from(s.n_ok),
        s.n_failed.into(),
        s.mean_purity.into(),
        s.std_purity.into(),
        s.mean_pair_probability.into(),
        s.ensemble_purity.into(),
        s.best.index.into(),
        s.best.purity.into(),
        s.worst.index.into(),
        s.worst.purity.into(),
        s.mean_linewidth.into(),
    ];
    outputs.table(
        out,
        "metrics.csv",
        &[
            "n_ok",
            "n_failed",
            "mean_purity",
            "std_purity",
            "mean_pair_probability",
            "ensemble_purity",
            "best_index",
            "best_purity",
            "worst_index",
            "worst_purity",
            "mean_linewidth",
        ],
        &[summary_row],
    )?;
    write_json(&out.join("summary.json"), &report.summary)?;
    Ok(report)
}

fn cmd_set_study(cfg: &RunConfig, scenario: &RingScenario, exec: Execution, out: &Path, outputs: &mut Outputs) -> Result<()> {
    // The defect-free device, where the standard inversion should be exact.
    let baseline = solve_device(scenario, &ScenarioDefects::default(), Engine::Full, exec)?;
    let truth = baseline.jsa(SIGNAL_FORWARD, IDLER_FORWARD)?;
    let recon = reconstruct(&baseline.set_dataset(SIGNAL_FORWARD, IDLER_FORWARD)?, cfg.ensemble.set_gauge)?;
    let exact = compare_reconstruction(&recon.jsa, &truth)?;

    let ens = EnsembleConfig {
        with_set: true,
        ..cfg.ensemble.clone()
    };
    let report = cmd_ensemble(&ens, scenario, exec, out, outputs)?;
    let rows: Vec<Vec<Cell>> = report
        .samples
        .iter()
        .filter_map(|s| s.set.map(|c| (s.index, c)))
        .map(|(i, c)| {
            vec![
                Cell::from(i),
                c.fidelity.into(),
                c.amplitude_fidelity.into(),
                c.true_purity.into(),
                c.inferred_purity.into(),
                c.purity_gap.into(),
            ]
        })
        .collect();
    outputs.table(
        out,
        "set.csv",
        &["index", "fidelity", "amplitude_fidelity", "true_purity", "inferred_purity", "purity_gap"],
        &rows,
    )?;
    #[derive(Serialize)]
    struct SetReport<'a> {
        gauge: ringfwm::settom::SetGauge,
        exact_case: ringfwm::settom::SetComparison,
        exact_case_rank_deficient: bool,
        ensemble: &'a Option<ringfwm::montecarlo::SetSummary>,
    }
    write_json(
        &out.join("set_summary.json"),
        &SetReport {
            gauge: cfg.ensemble.set_gauge,
            exact_case: exact,
            exact_case_rank_deficient: recon.rank_deficient,
            ensemble: &report.summary.set,
        },
    )
}

fn cmd_perturb_compare(cfg: &RunConfig, scenario: &RingScenario, exec: Execution, out: &Path, outputs: &mut Outputs) -> Result<()> {
    let ens = &cfg.ensemble;
    let mut picks: Vec<(String, Option<usize>)> = vec![("baseline".into(), None)];
    if cfg.perturb_compare.samples.is_empty() {
        // Ranking only needs the cheap engine.
        let rank = EnsembleConfig {
            engine: Engine::Perturbative,
            with_set: false,
            ..ens.clone()
        };
        let report = run_ensemble(&rank, scenario, exec)?;
        picks.push(("best".into(), Some(report.summary.best.index)));
        picks.push(("worst".into(), Some(report.summary.worst.index)));
    } else {
        picks.extend(cfg.perturb_compare.samples.iter().map(|&i| (format!("sample-{i}"), Some(i))));
    }
    let mut rows = Vec::new();
    for (label, index) in picks {
        let defects = index.map_or_else(ScenarioDefects::default, |i| sample_defects(ens, i));
        let c = perturb_compare(scenario, &defects, exec)?;
        rows.push(vec![
            Cell::from(label.as_str()),
            index.map_or(Cell::Empty, Cell::from),
            c.fidelity.into(),
            c.full_purity.into(),
            c.perturbative_purity.into(),
            c.full_pair_probability.into(),
            c.perturbative_pair_probability.into(),
            c.squeezing_norm.into(),
            c.bogoliubov_residual.into(),
        ]);
    }
    outputs.table(
        out,
        "metrics.csv",
        &[
            "label",
            "index",
            "fidelity",
            "full_purity",
            "perturbative_purity",
            "full_pair_probability",
            "perturbative_pair_probability",
            "squeezing_norm",
            "bogoliubov_residual",
        ],
        &rows,
    )
}
