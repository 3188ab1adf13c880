//! Stimulated-emission tomography: the seeded-response blocks that an
//! experiment measures on the bus ports, the standard reconstruction of the
//! spontaneous JSA from them, and the resulting inference error.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::analysis::{jsa_fidelity, schmidt, JointSpectralAmplitude};
use crate::error::{Error, Result};
use crate::gaussdyn::{GammaBlocks, SymplecticKernel};
use crate::linalg::{self, CMat, C64, ZERO};
use crate::lingrid::KGrid;
use crate::perturb::PerturbFilter;

/// Anything that can report a discrete β block (annihilation output `row`
/// from creation input `col`).
pub trait BetaSource {
    fn grid(&self) -> KGrid;
    fn beta_block(&self, row: &str, col: &str) -> Result<CMat>;
}

impl BetaSource for SymplecticKernel {
    fn grid(&self) -> KGrid {
        self.grid
    }

    fn beta_block(&self, row: &str, col: &str) -> Result<CMat> {
        Ok(self.beta(self.channel_index(row)?, self.channel_index(col)?))
    }
}

/// First-order β from the filtered driving terms.
pub struct PerturbativeBeta<'a> {
    pub filter: &'a PerturbFilter,
    pub blocks: &'a GammaBlocks,
}

impl BetaSource for PerturbativeBeta<'_> {
    fn grid(&self) -> KGrid {
        self.filter.grid
    }

    fn beta_block(&self, row: &str, col: &str) -> Result<CMat> {
        self.filter
            .beta(self.blocks, self.filter.channel_index(row)?, self.filter.channel_index(col)?)
    }
}

/// Seeded responses on two accessible ports: β₁₂ (output on 1 from a seed
/// on 2) and β₂₁, both discrete.
#[derive(Clone, Debug)]
pub struct SETDataset {
    pub grid: KGrid,
    pub label_1: String,
    pub label_2: String,
    pub beta_12: CMat,
    pub beta_21: CMat,
}

/// Reads off what sweeping a CW seed over every grid point on each port and
/// recording the conjugate (stimulated) spectrum on the other would measure.
pub fn simulate_set(source: &dyn BetaSource, label_1: &str, label_2: &str) -> Result<SETDataset> {
    Ok(SETDataset {
        grid: source.grid(),
        label_1: label_1.to_string(),
        label_2: label_2.to_string(),
        beta_12: source.beta_block(label_1, label_2)?,
        beta_21: source.beta_block(label_2, label_1)?,
    })
}

#[derive(Clone, Debug)]
pub struct SetReconstruction {
    pub jsa: JointSpectralAmplitude,
    /// Number of singular triplets used.
    pub rank: usize,
    /// The two blocks disagree on their numerical rank.
    pub rank_deficient: bool,
}

/// Relative singular-value threshold defining numerical rank.
const RANK_TOL: f64 = 1e-12;
/// Relative gap below which singular values count as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;

/// Entries within this relative margin of a column's largest magnitude
/// count as tied; the first of them sets the phase.
const PHASE_TIE_TOL: f64 = 1e-6;

/// Rotates every column so that its largest-magnitude entry is real and
/// positive, applying the same rotation to the partner columns of `v` so the
/// product u·v† is unchanged. Near-ties (common for the mirror-image peaks
/// of a symmetric JSA) go to the lowest index so the choice does not hinge
/// on rounding.
fn fix_column_phases(u: &mut CMat, mut v: Option<&mut CMat>) {
    for j in 0..u.ncols() {
        let top = (0..u.nrows()).map(|i| u[(i, j)].norm()).fold(0.0, f64::max);
        if top == 0.0 {
            continue;
        }
        let Some(pick) = (0..u.nrows()).find(|&i| u[(i, j)].norm() >= (1.0 - PHASE_TIE_TOL) * top) else {
            continue;
        };
        let p = u[(pick, j)];
        let rot = p.conj() / p.norm();
        for i in 0..u.nrows() {
            u[(i, j)] *= rot;
        }
        if let Some(v) = v.as_deref_mut() {
            for i in 0..v.nrows() {
                v[(i, j)] *= rot;
            }
        }
    }
}

/// Relative phases of the Schmidt terms.
///
/// Each SVD fixes its own column phases, so U₁DU₂ᵀ alone leaves every term
/// with an arbitrary phase. When each port's seeded response differs from
/// the spontaneous one by a per-frequency phase (the case without
/// back-scatter), conj(u₂ₘ)·conj(v₂ₘ) = w(k)|u₂ₘ|²e^{iφₘ} for all m, and
/// likewise on port 1, so φₘ − φ₀ follows from overlaps in which w cancels.
/// Terms are anchored to all earlier ones, so one with little overlap with
/// the first is still placed.
fn term_phases(rank: usize, u1: &CMat, v1: &CMat, u2: &CMat, v2: &CMat) -> Vec<C64> {
    let n = u1.nrows();
    let weight = |u: &CMat, v: &CMat, i: usize, m: usize| (u[(i, m)] * v[(i, m)]).conj();
    let mut phases: Vec<C64> = Vec::with_capacity(rank);
    for m in 0..rank {
        if m == 0 {
            phases.push(C64::new(1.0, 0.0));
            continue;
        }
        let mut z = ZERO;
        for (l, ph) in phases.iter().enumerate() {
            for i in 0..n {
                z += weight(u2, v2, i, m) * weight(u2, v2, i, l).conj() * ph;
                z += weight(u1, v1, i, m) * weight(u1, v1, i, l).conj() * ph;
            }
        }
        phases.push(if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) });
    }
    phases
}

/// Within each cluster of degenerate D values, reorders the columns of `u2`
/// (and `v1`) to maximise |diag(U₂† β₂₁ V₁ D⁻¹)|, greedily.
fn pair_degenerate(d: &[f64], u2: &mut CMat, v1: &mut CMat, beta_21: &CMat) {
    let r = d.len();
    let mut start = 0;
    while start < r {
        let mut end = start + 1;
        while end < r && (d[start] - d[end]) <= DEGENERACY_TOL * d[start] {
            end += 1;
        }
        if end - start > 1 {
            let size = end - start;
            let score = |u2: &CMat, v1: &CMat, a: usize, b: usize| -> f64 {
                let mut acc = ZERO;
                for i in 0..beta_21.nrows() {
                    let mut row = ZERO;
                    for j in 0..beta_21.ncols() {
                        row += beta_21[(i, j)] * v1[(j, start + b)];
                    }
                    acc += u2[(i, start + a)].conj() * row;
                }
                acc.norm() / d[start + b]
            };
            let mut used = vec![false; size];
            let mut order = vec![0; size];
            for (b, slot) in order.iter_mut().enumerate() {
                let mut best = (usize::MAX, -1.0);
                for (a, &taken) in used.iter().enumerate() {
                    if !taken {
                        let s = score(u2, v1, a, b);
                        if s > best.1 {
                            best = (a, s);
                        }
                    }
                }
                used[best.0] = true;
                *slot = best.0;
            }
            let u_old = u2.clone();
            let v_old = v1.clone();
            for (b, &a) in order.iter().enumerate() {
                for i in 0..u2.nrows() {
                    u2[(i, start + b)] = u_old[(i, start + a)];
                }
                for i in 0..v1.nrows() {
                    v1[(i, start + b)] = v_old[(i, start + a)];
                }
            }
        }
        start = end;
    }
}

fn numerical_rank(s: &[f64]) -> usize {
    let top = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > RANK_TOL * top).count()
}

/// How the phases of the Schmidt terms in U₁DU₂ᵀ are fixed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetGauge {
    /// Column convention, then terms aligned through the measured V's.
    #[default]
    Aligned,
    /// Column convention only: each term keeps whatever phase it lands on.
    Canonical,
}

impl std::str::FromStr for SetGauge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(SetGauge::Aligned),
            "canonical" => Ok(SetGauge::Canonical),
            other => Err(Error::Config(format!("unknown SET gauge `{other}`"))),
        }
    }
}

/// The standard prescription with the default gauge.
pub fn reconstruct_standard(data: &SETDataset) -> Result<SetReconstruction> {
    reconstruct(data, SetGauge::Aligned)
}

/// The standard prescription: β₁₂ = U₁DV₂†, β₂₁ = U₂DV₁†, so the spontaneous
/// JSA is inferred as β^h₁₂ = U₁ D U₂ᵀ, with D taken from β₁₂ and the
/// singular vectors paired in descending order.
pub fn reconstruct(data: &SETDataset, gauge: SetGauge) -> Result<SetReconstruction> {
    let s12 = linalg::svd(data.beta_12.as_ref())?;
    let s21 = linalg::svd(data.beta_21.as_ref())?;
    let (r1, r2) = (numerical_rank(&s12.s), numerical_rank(&s21.s));
    if r1 == 0 || r2 == 0 {
        return Err(Error::ZeroNorm("SET block".into()));
    }
    let rank = r1.min(r2);
    let (mut u1, mut v2) = (s12.u, s12.v);
    let (mut u2, mut v1) = (s21.u, s21.v);
    fix_column_phases(&mut u1, Some(&mut v2));
    fix_column_phases(&mut u2, Some(&mut v1));
    pair_degenerate(&s12.s[..rank], &mut u2, &mut v1, &data.beta_21);
    let phases = match gauge {
        SetGauge::Aligned => term_phases(rank, &u1, &v1, &u2, &v2),
        SetGauge::Canonical => vec![C64::new(1.0, 0.0); rank],
    };
    let n = u1.nrows();
    let scaled = Mat::from_fn(n, rank, |i, m| u1[(i, m)] * s12.s[m] * phases[m]);
    let u2t = Mat::from_fn(rank, u2.nrows(), |m, j| u2[(j, m)]);
    let est = scaled * u2t;
    Ok(SetReconstruction {
        jsa: JointSpectralAmplitude::from_discrete(data.grid, &data.label_1, &data.label_2, est.as_ref()),
        rank,
        rank_deficient: r1 != r2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetComparison {
    /// Probability fidelity between inferred and true JSA.
    pub fidelity: f64,
    pub amplitude_fidelity: f64,
    pub true_purity: f64,
    pub inferred_purity: f64,
    /// inferred − true.
    pub purity_gap: f64,
}

pub fn compare_reconstruction(inferred: &JointSpectralAmplitude, truth: &JointSpectralAmplitude) -> Result<SetComparison> {
    let fidelity = jsa_fidelity(inferred, truth)?;
    let true_purity = schmidt(truth)?.purity;
    let inferred_purity = schmidt(inferred)?.purity;
    Ok(SetComparison {
        fidelity,
        amplitude_fidelity: fidelity.sqrt(),
        true_purity,
        inferred_purity,
        purity_gap: inferred_purity - true_purity,
    })
}

/// Applies a global phase to a dataset as a seed-phase change would.
pub fn with_seed_phase(data: &SETDataset, phase: f64) -> SETDataset {
    let rot = C64::new(phase.cos(), phase.sin());
    let mut out = data.clone();
    out.beta_12 = &data.beta_12 * faer::Scale(rot);
    out.beta_21 = &data.beta_21 * faer::Scale(rot);
    out
}
