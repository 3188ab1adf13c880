//! First-order (single Neumann term) solution of the signal dynamics: the
//! nonlinear driving terms resonantly filtered to the output ports.
//!
//! Everything is diagonal in k, so only per-grid-point linear resolvents are
//! needed, never the doubled-space inverse.

use crate::analysis::JointSpectralAmplitude;
use crate::error::{Error, Result};
use crate::gaussdyn::GammaBlocks;
use crate::linalg::{self, CMat, C64, I, ZERO};
use crate::lingrid::KGrid;
use crate::model::DerivedLinear;
use crate::par::{map_indexed, Execution};

/// L(k) = T V⁻¹ γ̄† (−ik𝒱 + Γ̄)⁻¹ at every grid point (J × N each), with the
/// pieces needed for the non-symmetrised first-order β.
#[derive(Clone, Debug)]
pub struct PerturbFilter {
    pub grid: KGrid,
    pub channel_labels: Vec<String>,
    pub channel_velocities: Vec<f64>,
    /// L(k) per grid point.
    pub filters: Vec<CMat>,
    /// (−ik𝒱 + Γ̄)⁻¹(−iγ̄) per grid point, N × J: cavity response to input.
    drives: Vec<CMat>,
    /// Linear input-output matrix per grid point, J × J.
    transmission: Vec<CMat>,
}

pub fn build_perturb_filter(derived: &DerivedLinear, grid: KGrid) -> Result<PerturbFilter> {
    build_perturb_filter_with(derived, grid, Execution::default())
}

pub fn build_perturb_filter_with(derived: &DerivedLinear, grid: KGrid, exec: Execution) -> Result<PerturbFilter> {
    if let Some(v) = crate::model::tuned_violations(&derived.model).first() {
        return Err(Error::InvalidModel(format!("perturbative solver requires a tuned model: {v}")));
    }
    let per_k = map_indexed(grid.n_points, exec, |a| -> Result<(CMat, CMat, CMat)> {
        let k = grid.value(a);
        let r = derived.resolvent(k)?;
        let filter = derived.output_filter(k)?;
        let drive = (&r * &derived.gamma_bar) * faer::Scale(-I);
        let trans = derived.scattering_matrix(k)?;
        Ok((filter, drive, trans))
    });
    let mut filters = Vec::with_capacity(grid.n_points);
    let mut drives = Vec::with_capacity(grid.n_points);
    let mut transmission = Vec::with_capacity(grid.n_points);
    for item in per_k {
        let (f, d, t) = item?;
        filters.push(f);
        drives.push(d);
        transmission.push(t);
    }
    Ok(PerturbFilter {
        grid,
        channel_labels: derived.model.channels.iter().map(|c| c.label.clone()).collect(),
        channel_velocities: derived.model.channel_velocities(),
        filters,
        drives,
        transmission,
    })
}

impl PerturbFilter {
    pub fn channel_index(&self, label: &str) -> Result<usize> {
        self.channel_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    fn check(&self, blocks: &GammaBlocks) -> Result<()> {
        if blocks.grid != self.grid {
            return Err(Error::GridMismatch("squeezing blocks on a different grid".into()));
        }
        if blocks.n_cavities != self.filters.first().map_or(0, |f| f.ncols()) {
            return Err(Error::GridMismatch("squeezing blocks cover a different cavity count".into()));
        }
        Ok(())
    }

    /// Discrete β^h_ij = Σ_nm L_in(k) Γ̄⁽ˢq⁾_nm(k, k′) dk L_jm(k′) · v_j.
    pub fn beta_h(&self, blocks: &GammaBlocks, i: usize, j: usize) -> Result<CMat> {
        self.check(blocks)?;
        let n = self.grid.n_points;
        let scale = self.grid.dk() * self.channel_velocities[j];
        let mut out = linalg::zeros(n, n);
        for b in &blocks.squeezing {
            let li: Vec<C64> = self.filters.iter().map(|f| f[(i, b.row)]).collect();
            let lj: Vec<C64> = self.filters.iter().map(|f| f[(j, b.col)] * scale).collect();
            accumulate_outer(&mut out, &li, &b.values, &lj);
        }
        Ok(out)
    }

    /// Discrete first-order β_il (annihilation output i from creation input
    /// l), before any polar symmetrisation:
    /// −Σ_nm [−i L(k)]_in Γ̄⁽ˢq⁾_nm(k, k′) dk [(−ik′𝒱 + Γ̄)⁻¹(−iγ̄)]*_ml.
    pub fn beta(&self, blocks: &GammaBlocks, i: usize, l: usize) -> Result<CMat> {
        self.check(blocks)?;
        let n = self.grid.n_points;
        let dk = self.grid.dk();
        let mut out = linalg::zeros(n, n);
        for b in &blocks.squeezing {
            let li: Vec<C64> = self.filters.iter().map(|f| f[(i, b.row)] * I * dk).collect();
            let rl: Vec<C64> = self.drives.iter().map(|d| d[(b.col, l)].conj()).collect();
            accumulate_outer(&mut out, &li, &b.values, &rl);
        }
        Ok(out)
    }

    /// Linear transmission U_ij(k) along the grid.
    pub fn transmission(&self, i: usize, j: usize) -> Vec<C64> {
        self.transmission.iter().map(|t| t[(i, j)]).collect()
    }
}

/// out[a, b] += left[a] · q[a, b] · right[b].
fn accumulate_outer(out: &mut CMat, left: &[C64], q: &CMat, right: &[C64]) {
    for (b, &rb) in right.iter().enumerate() {
        if rb == ZERO {
            continue;
        }
        for (a, &la) in left.iter().enumerate() {
            out[(a, b)] += la * q[(a, b)] * rb;
        }
    }
}

/// First-order JSA β^h_ij between two output channels.
pub fn perturbative_jsa(derived: &DerivedLinear, blocks: &GammaBlocks, mode_i: &str, mode_j: &str) -> Result<JointSpectralAmplitude> {
    let filter = build_perturb_filter(derived, blocks.grid)?;
    filter_jsa(&filter, blocks, mode_i, mode_j)
}

pub fn filter_jsa(filter: &PerturbFilter, blocks: &GammaBlocks, mode_i: &str, mode_j: &str) -> Result<JointSpectralAmplitude> {
    let i = filter.channel_index(mode_i)?;
    let j = filter.channel_index(mode_j)?;
    let block = filter.beta_h(blocks, i, j)?;
    Ok(JointSpectralAmplitude::from_discrete(filter.grid, mode_i, mode_j, block.as_ref()))
}

/// |∫dk′ L(k, k′)| = |L_jn(k)| per grid point: the resonant filter from
/// cavity `cavity` to output channel `channel`.
pub fn filter_marginals(filter: &PerturbFilter, channel: usize, cavity: usize) -> Vec<f64> {
    filter.filters.iter().map(|f| f[(channel, cavity)].norm()).collect()
}
