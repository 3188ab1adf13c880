//! Doubled-space (annihilation ⊕ creation) equations of motion for the signal
//! system, the discretised symplectic kernel M(k, k′) and its polar factors.
//!
//! Discretisation: every equation is multiplied through by dk, so the free
//! evolution sits on the diagonal as (−ik𝒱 + Γ̄) and the squeezing couplings
//! carry a factor dk. The resulting kernel is dimensionless and maps discrete
//! input amplitudes to discrete output amplitudes; its continuum kernel is
//! M / dk off the diagonal.
//!
//! The kernel is block sparse: annihilation and creation parts of different
//! channels only mix through couplings that actually appear. Connected
//! components ("sectors") of that coupling graph are solved independently,
//! and a sector whose annihilation/creation mirror is also present is only
//! solved once, since the mirror is its complex conjugate.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::analysis::JointSpectralAmplitude;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, I, ONE, ZERO};
use crate::lingrid::{ConvolutionTable, KGrid};
use crate::model::DerivedLinear;
use crate::par::{map_indexed, Execution};

/// Bogoliubov residual above which a kernel is refused.
pub const BOGOLIUBOV_REFUSE: f64 = 1e-6;

/// Above this ‖β^h‖_F the first-order (sinh ≈ linear) reading degrades.
pub const LOW_GAIN_ADVISORY: f64 = 0.3;

/// Effective four-wave-mixing strength and the pump's top-hat height.
/// At first order only λ·|pump|² matters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearCoupling {
    pub lambda: f64,
    pub pump_amplitude: C64,
}

impl NonlinearCoupling {
    /// Unit pump amplitude, so `strength` is λ itself.
    pub fn with_strength(strength: f64) -> Self {
        NonlinearCoupling {
            lambda: strength,
            pump_amplitude: ONE,
        }
    }

    pub fn strength(&self) -> f64 {
        self.lambda * self.pump_amplitude.norm_sqr()
    }
}

/// Which convolution tables feed which pair of signal-system cavities.
///
/// The (signal, idler) block uses the table whose argument is v_s k + v_i k′
/// and the (idler, signal) block the one with v_i k + v_s k′.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqWiring {
    pub signal_cavity: usize,
    pub idler_cavity: usize,
    pub signal_idler_table: usize,
    pub idler_signal_table: usize,
    pub v_signal: f64,
    pub v_idler: f64,
}

/// One nonzero Γ̄⁽ˢq⁾_{nm}(k, k′) block over the grid.
#[derive(Clone, Debug)]
pub struct SqBlock {
    pub row: usize,
    pub col: usize,
    pub values: CMat,
}

/// Nonlinear driving terms of the signal system.
#[derive(Clone, Debug)]
pub struct GammaBlocks {
    pub grid: KGrid,
    pub n_cavities: usize,
    /// Nonzero squeezing blocks; all others vanish.
    pub squeezing: Vec<SqBlock>,
    /// Phase-modulation blocks. Always empty: the signal dynamics here carry
    /// no phase modulation.
    pub phase_modulation: Vec<SqBlock>,
}

impl GammaBlocks {
    pub fn zero(grid: KGrid, n_cavities: usize) -> Self {
        GammaBlocks {
            grid,
            n_cavities,
            squeezing: Vec::new(),
            phase_modulation: Vec::new(),
        }
    }

    pub fn block(&self, row: usize, col: usize) -> Option<&CMat> {
        self.squeezing.iter().find(|b| b.row == row && b.col == col).map(|b| &b.values)
    }

    /// Dense Γ̄⁽ˢq⁾_{nm}(k, k′), zero where no block is stored.
    pub fn dense_block(&self, row: usize, col: usize) -> CMat {
        self.block(row, col)
            .cloned()
            .unwrap_or_else(|| linalg::zeros(self.grid.n_points, self.grid.n_points))
    }

    /// ‖Γ̄⁽ˢq⁾‖_F of the discrete (dk-weighted) coupling divided by a cavity
    /// decay rate, a dimensionless measure of squeezing strength.
    pub fn relative_norm(&self, rate: f64) -> f64 {
        let dk = self.grid.dk();
        self.squeezing
            .iter()
            .map(|b| linalg::frobenius(b.values.as_ref()).powi(2))
            .sum::<f64>()
            .sqrt()
            * dk
            / rate
    }

    pub fn scaled(&self, factor: f64) -> Self {
        GammaBlocks {
            grid: self.grid,
            n_cavities: self.n_cavities,
            squeezing: self
                .squeezing
                .iter()
                .map(|b| SqBlock {
                    row: b.row,
                    col: b.col,
                    values: &b.values * faer::Scale(linalg::c(factor, 0.0)),
                })
                .collect(),
            phase_modulation: Vec::new(),
        }
    }
}

/// Γ̄⁽ˢq⁾_{si} = iλ v_s/(2π) 𝒞_si and Γ̄⁽ˢq⁾_{is} = iλ v_i/(2π) 𝒞_is for every
/// wired (signal, idler) pair; all other blocks vanish.
pub fn build_gamma_sq(
    tables: &[ConvolutionTable],
    coupling: &NonlinearCoupling,
    wiring: &[SqWiring],
    n_cavities: usize,
) -> Result<GammaBlocks> {
    let grid = tables
        .first()
        .map(|t| t.grid)
        .ok_or_else(|| Error::GridMismatch("no convolution tables supplied".into()))?;
    let table = |idx: usize| {
        tables
            .get(idx)
            .ok_or_else(|| Error::GridMismatch(format!("missing convolution table #{idx}")))
    };
    let mut squeezing = Vec::new();
    for w in wiring {
        if w.signal_cavity >= n_cavities || w.idler_cavity >= n_cavities {
            return Err(Error::UnknownMode(format!("cavity #{} / #{}", w.signal_cavity, w.idler_cavity)));
        }
        for (row, col, idx, v) in [
            (w.signal_cavity, w.idler_cavity, w.signal_idler_table, w.v_signal),
            (w.idler_cavity, w.signal_cavity, w.idler_signal_table, w.v_idler),
        ] {
            let t = table(idx)?;
            if t.grid != grid {
                return Err(Error::GridMismatch(format!("table `{}` is on another grid", t.pair.label)));
            }
            let pref = I * (coupling.lambda * v / (2.0 * std::f64::consts::PI));
            let values = &t.values * faer::Scale(pref);
            squeezing.push(SqBlock { row, col, values });
        }
    }
    Ok(GammaBlocks {
        grid,
        n_cavities,
        squeezing,
        phase_modulation: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    Annihilation,
    Creation,
}

impl Part {
    fn flip(self) -> Self {
        match self {
            Part::Annihilation => Part::Creation,
            Part::Creation => Part::Annihilation,
        }
    }
}

/// A channel or cavity index together with its doubled-space part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Node {
    pub part: Part,
    pub index: usize,
}

#[derive(Clone, Copy, Debug)]
struct Locator {
    sector: usize,
    conjugate: bool,
    slot: usize,
}

/// One independently solved block of the kernel.
#[derive(Clone, Debug)]
pub struct KernelSector {
    pub channels: Vec<Node>,
    pub cavities: Vec<Node>,
    /// Square over (channel node, k), channel-node major.
    pub m: CMat,
}

/// Discretised M(k, k′) over (part ⊗ channel ⊗ k), stored by sector.
#[derive(Clone, Debug)]
pub struct SymplecticKernel {
    pub grid: KGrid,
    pub channel_labels: Vec<String>,
    pub sectors: Vec<KernelSector>,
    lookup: Vec<Option<Locator>>,
    /// max over sectors of ‖M J M† − J‖_F / √dim.
    pub bogoliubov_residual: f64,
}

fn node_id(node: Node, count: usize) -> usize {
    match node.part {
        Part::Annihilation => node.index,
        Part::Creation => count + node.index,
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Channel and cavity node sets of each independent sector, with a flag for
/// sectors that are the conjugate mirror of an earlier one.
struct SectorPlan {
    sectors: Vec<(Vec<Node>, Vec<Node>)>,
    mirrors: Vec<Option<usize>>,
}

fn plan_sectors(d: &DerivedLinear, blocks: &GammaBlocks) -> SectorPlan {
    let (nj, nn) = (d.n_channels(), d.n_cavities());
    // Ids: channels ann, channels cre, cavities ann, cavities cre.
    let ch = |p: Part, j: usize| node_id(Node { part: p, index: j }, nj);
    let cav = |p: Part, n: usize| 2 * nj + node_id(Node { part: p, index: n }, nn);
    let mut uf = UnionFind::new(2 * nj + 2 * nn);
    for p in [Part::Annihilation, Part::Creation] {
        for a in 0..nj {
            for b in 0..nj {
                if d.t[(a, b)] != ZERO {
                    uf.union(ch(p, a), ch(p, b));
                }
            }
        }
        for n in 0..nn {
            for m in 0..nn {
                if d.big_gamma_bar[(n, m)] != ZERO {
                    uf.union(cav(p, n), cav(p, m));
                }
            }
            for j in 0..nj {
                if d.gamma_bar[(n, j)] != ZERO {
                    uf.union(cav(p, n), ch(p, j));
                }
            }
        }
    }
    for b in &blocks.squeezing {
        if b.values.as_ref().col_iter().any(|col| col.iter().any(|x| *x != ZERO)) {
            uf.union(cav(Part::Annihilation, b.row), cav(Part::Creation, b.col));
            uf.union(cav(Part::Creation, b.row), cav(Part::Annihilation, b.col));
        }
    }
    let total = 2 * nj + 2 * nn;
    let mut roots: Vec<usize> = Vec::new();
    let mut members: Vec<(Vec<Node>, Vec<Node>)> = Vec::new();
    for id in 0..total {
        let r = uf.find(id);
        let slot = match roots.iter().position(|&x| x == r) {
            Some(s) => s,
            None => {
                roots.push(r);
                members.push((Vec::new(), Vec::new()));
                roots.len() - 1
            }
        };
        let (part, index, is_channel) = if id < nj {
            (Part::Annihilation, id, true)
        } else if id < 2 * nj {
            (Part::Creation, id - nj, true)
        } else if id < 2 * nj + nn {
            (Part::Annihilation, id - 2 * nj, false)
        } else {
            (Part::Creation, id - 2 * nj - nn, false)
        };
        let node = Node { part, index };
        if is_channel {
            members[slot].0.push(node);
        } else {
            members[slot].1.push(node);
        }
    }
    let mirror_of = |s: &(Vec<Node>, Vec<Node>)| {
        let mut chs: Vec<Node> = s.0.iter().map(|n| Node { part: n.part.flip(), index: n.index }).collect();
        let mut cvs: Vec<Node> = s.1.iter().map(|n| Node { part: n.part.flip(), index: n.index }).collect();
        chs.sort();
        cvs.sort();
        (chs, cvs)
    };
    let mut sectors = Vec::new();
    let mut mirrors = Vec::new();
    for mut s in members {
        s.0.sort();
        s.1.sort();
        if s.0.is_empty() {
            continue;
        }
        let m = mirror_of(&s);
        let earlier = sectors.iter().position(|x: &(Vec<Node>, Vec<Node>)| *x == m);
        mirrors.push(if m == s { None } else { earlier });
        sectors.push(s);
    }
    SectorPlan { sectors, mirrors }
}

/// Adds coef · src into dst (same shape).
fn axpy(mut dst: faer::MatMut<'_, C64>, coef: C64, src: MatRef<'_, C64>) {
    for j in 0..dst.ncols() {
        for i in 0..dst.nrows() {
            dst[(i, j)] += coef * src[(i, j)];
        }
    }
}

fn sector_kernel(d: &DerivedLinear, blocks: &GammaBlocks, channels: &[Node], cavities: &[Node]) -> Result<CMat> {
    let grid = blocks.grid;
    let n = grid.n_points;
    let dk = grid.dk();
    let ks = grid.values();
    let (nc, nv) = (channels.len(), cavities.len());
    let t_entry = |r: Node, c: Node| -> C64 {
        if r.part != c.part {
            return ZERO;
        }
        match r.part {
            Part::Annihilation => d.t[(r.index, c.index)],
            Part::Creation => d.t[(r.index, c.index)].conj(),
        }
    };
    // Tt: per-k mixing of channels by T (T* on creation parts).
    let mut tcoef = vec![ZERO; nc * nc];
    for (q, &r) in channels.iter().enumerate() {
        for (p, &c) in channels.iter().enumerate() {
            tcoef[q * nc + p] = t_entry(r, c);
        }
    }
    if nv == 0 {
        let mut m = linalg::zeros(nc * n, nc * n);
        for q in 0..nc {
            for p in 0..nc {
                for a in 0..n {
                    m[(q * n + a, p * n + a)] = tcoef[q * nc + p];
                }
            }
        }
        return Ok(m);
    }
    // Source: cavity node driven by channel node of the same part.
    let src = |cv: Node, chn: Node| -> C64 {
        if cv.part != chn.part {
            return ZERO;
        }
        let g = d.gamma_bar[(cv.index, chn.index)];
        match cv.part {
            Part::Annihilation => -I * g,
            Part::Creation => I * g.conj(),
        }
    };
    // Readout: channel node from cavity node of the same part.
    let out = |chn: Node, cv: Node| -> C64 {
        if cv.part != chn.part {
            return ZERO;
        }
        let g = d.gamma_bar[(cv.index, chn.index)];
        let v = d.channel_velocity(chn.index);
        match cv.part {
            Part::Annihilation => -I * g.conj() / v,
            Part::Creation => I * g / v,
        }
    };
    let mut g = linalg::zeros(nv * n, nv * n);
    for (p, &r) in cavities.iter().enumerate() {
        for (q, &c) in cavities.iter().enumerate() {
            if r.part == c.part {
                let base = d.big_gamma_bar[(r.index, c.index)];
                let base = if r.part == Part::Annihilation { base } else { base.conj() };
                for a in 0..n {
                    let mut v = base;
                    if p == q {
                        let w = d.cavity_velocity(r.index) * ks[a];
                        v += if r.part == Part::Annihilation {
                            linalg::c(0.0, -w)
                        } else {
                            linalg::c(0.0, w)
                        };
                    }
                    g[(p * n + a, q * n + a)] = v;
                }
            } else {
                let Some(q_blk) = blocks.block(r.index, c.index) else { continue };
                let conj = r.part == Part::Creation;
                for b in 0..n {
                    for a in 0..n {
                        let x = q_blk[(a, b)] * dk;
                        g[(p * n + a, q * n + b)] = if conj { x.conj() } else { x };
                    }
                }
            }
        }
    }
    let ginv = linalg::inverse(g.as_ref(), "doubled-space cavity system")?;
    // X = G⁻¹ · Bsrc, column block per channel node.
    let mut x = linalg::zeros(nv * n, nc * n);
    for (q, &chn) in channels.iter().enumerate() {
        for (p, &cv) in cavities.iter().enumerate() {
            let coef = src(cv, chn);
            if coef != ZERO {
                axpy(
                    x.as_mut().submatrix_mut(0, q * n, nv * n, n),
                    coef,
                    ginv.as_ref().submatrix(0, p * n, nv * n, n),
                );
            }
        }
    }
    // Y = 𝟙 + Out · X, row block per channel node.
    let mut y = linalg::identity(nc * n);
    for (q, &chn) in channels.iter().enumerate() {
        for (p, &cv) in cavities.iter().enumerate() {
            let coef = out(chn, cv);
            if coef != ZERO {
                axpy(
                    y.as_mut().submatrix_mut(q * n, 0, n, nc * n),
                    coef,
                    x.as_ref().submatrix(p * n, 0, n, nc * n),
                );
            }
        }
    }
    let mut m = linalg::zeros(nc * n, nc * n);
    for q in 0..nc {
        for p in 0..nc {
            let coef = tcoef[q * nc + p];
            if coef != ZERO {
                axpy(
                    m.as_mut().submatrix_mut(q * n, 0, n, nc * n),
                    coef,
                    y.as_ref().submatrix(p * n, 0, n, nc * n),
                );
            }
        }
    }
    Ok(m)
}

/// ‖M J M† − J‖_F / √dim with J = +1 on annihilation and −1 on creation rows.
pub fn bogoliubov_residual(m: MatRef<'_, C64>, signs: &[f64]) -> f64 {
    let dim = m.nrows();
    let mj = Mat::from_fn(dim, dim, |i, j| m[(i, j)] * signs[j]);
    let prod = mj * m.adjoint();
    let mut acc = 0.0;
    for j in 0..dim {
        for i in 0..dim {
            let target = if i == j { signs[i] } else { 0.0 };
            acc += (prod[(i, j)] - linalg::c(target, 0.0)).norm_sqr();
        }
    }
    (acc / dim as f64).sqrt()
}

fn sector_signs(channels: &[Node], n: usize) -> Vec<f64> {
    channels
        .iter()
        .flat_map(|c| {
            let s = if c.part == Part::Annihilation { 1.0 } else { -1.0 };
            std::iter::repeat_n(s, n)
        })
        .collect()
}

pub fn solve_full_kernel(derived: &DerivedLinear, blocks: &GammaBlocks) -> Result<SymplecticKernel> {
    solve_full_kernel_with(derived, blocks, Execution::default())
}

/// Solves the doubled-space linear system and assembles the input-output
/// kernel. Refuses to return a kernel whose Bogoliubov residual exceeds
/// [`BOGOLIUBOV_REFUSE`].
pub fn solve_full_kernel_with(derived: &DerivedLinear, blocks: &GammaBlocks, exec: Execution) -> Result<SymplecticKernel> {
    if blocks.n_cavities != derived.n_cavities() {
        return Err(Error::GridMismatch(format!(
            "squeezing blocks cover {} cavities, model has {}",
            blocks.n_cavities,
            derived.n_cavities()
        )));
    }
    let violations = crate::model::tuned_violations(&derived.model);
    if let Some(v) = violations.first() {
        return Err(Error::InvalidModel(format!("kernel solver requires a tuned model: {v}")));
    }
    let grid = blocks.grid;
    let n = grid.n_points;
    let nj = derived.n_channels();
    let plan = plan_sectors(derived, blocks);
    let todo: Vec<usize> = (0..plan.sectors.len()).filter(|&s| plan.mirrors[s].is_none()).collect();
    let solved = map_indexed(todo.len(), exec, |t| {
        let (chs, cvs) = &plan.sectors[todo[t]];
        sector_kernel(derived, blocks, chs, cvs)
    });
    let mut sectors = Vec::new();
    let mut index_of = vec![usize::MAX; plan.sectors.len()];
    let mut residual = 0.0_f64;
    for (t, m) in todo.iter().zip(solved) {
        let m = m?;
        let (chs, cvs) = plan.sectors[*t].clone();
        residual = residual.max(bogoliubov_residual(m.as_ref(), &sector_signs(&chs, n)));
        index_of[*t] = sectors.len();
        sectors.push(KernelSector {
            channels: chs,
            cavities: cvs,
            m,
        });
    }
    if residual > BOGOLIUBOV_REFUSE {
        return Err(Error::Bogoliubov {
            residual,
            limit: BOGOLIUBOV_REFUSE,
        });
    }
    let mut lookup = vec![None; 2 * nj];
    for (s, (chs, _)) in plan.sectors.iter().enumerate() {
        let (stored, conjugate) = match plan.mirrors[s] {
            None => (index_of[s], false),
            Some(orig) => (index_of[orig], true),
        };
        for node in chs {
            let target = if conjugate {
                Node { part: node.part.flip(), index: node.index }
            } else {
                *node
            };
            let slot = sectors[stored]
                .channels
                .iter()
                .position(|x| *x == target)
                .expect("mirror sector holds the flipped node");
            lookup[node_id(*node, nj)] = Some(Locator {
                sector: stored,
                conjugate,
                slot,
            });
        }
    }
    Ok(SymplecticKernel {
        grid,
        channel_labels: derived.model.channels.iter().map(|c| c.label.clone()).collect(),
        sectors,
        lookup,
        bogoliubov_residual: residual,
    })
}

fn locate(lookup: &[Option<Locator>], nj: usize, node: Node) -> Option<Locator> {
    lookup.get(node_id(node, nj)).copied().flatten()
}

fn read_block(mats: &[&CMat], lookup: &[Option<Locator>], nj: usize, n: usize, row: Node, col: Node) -> CMat {
    match (locate(lookup, nj, row), locate(lookup, nj, col)) {
        (Some(r), Some(c)) if r.sector == c.sector && r.conjugate == c.conjugate => {
            let sub = mats[r.sector].as_ref().submatrix(r.slot * n, c.slot * n, n, n);
            if r.conjugate {
                linalg::conj(sub)
            } else {
                sub.to_owned()
            }
        }
        _ => linalg::zeros(n, n),
    }
}

fn label_index(labels: &[String], label: &str) -> Result<usize> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnknownMode(label.to_string()))
}

impl SymplecticKernel {
    pub fn n_channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn channel_index(&self, label: &str) -> Result<usize> {
        label_index(&self.channel_labels, label)
    }

    /// Discrete n×n block between two channel nodes.
    pub fn block(&self, row: Node, col: Node) -> CMat {
        let mats: Vec<&CMat> = self.sectors.iter().map(|s| &s.m).collect();
        read_block(&mats, &self.lookup, self.n_channels(), self.grid.n_points, row, col)
    }

    /// α_ij: annihilation output i from annihilation input j.
    pub fn alpha(&self, i: usize, j: usize) -> CMat {
        self.block(Node { part: Part::Annihilation, index: i }, Node { part: Part::Annihilation, index: j })
    }

    /// β_ij: annihilation output i from creation input j.
    pub fn beta(&self, i: usize, j: usize) -> CMat {
        self.block(Node { part: Part::Annihilation, index: i }, Node { part: Part::Creation, index: j })
    }

    /// The full 2Jn × 2Jn matrix, ordered (part, channel, k). Intended for
    /// small grids and tests.
    pub fn to_dense(&self) -> CMat {
        dense(self.n_channels(), self.grid.n_points, |r, c| self.block(r, c))
    }

    /// Largest ‖αα† − ββ† − 𝟙‖ and ‖αβᵀ − (αβᵀ)ᵀ‖ (relative to √dim) over
    /// the dense kernel. Checks the block identities directly.
    pub fn block_identity_residuals(&self) -> (f64, f64) {
        let full = self.to_dense();
        let half = full.nrows() / 2;
        let alpha = full.as_ref().submatrix(0, 0, half, half);
        let beta = full.as_ref().submatrix(0, half, half, half);
        let norm = (half as f64).sqrt();
        let first = alpha * alpha.adjoint() - beta * beta.adjoint() - linalg::identity(half);
        let ab = alpha * beta.transpose();
        let second = &ab - ab.transpose();
        (
            linalg::frobenius(first.as_ref()) / norm,
            linalg::frobenius(second.as_ref()) / norm,
        )
    }
}

fn dense(nj: usize, n: usize, block: impl Fn(Node, Node) -> CMat) -> CMat {
    let mut out = linalg::zeros(2 * nj * n, 2 * nj * n);
    let node = |id: usize| {
        if id < nj {
            Node { part: Part::Annihilation, index: id }
        } else {
            Node { part: Part::Creation, index: id - nj }
        }
    };
    for r in 0..2 * nj {
        for c in 0..2 * nj {
            let b = block(node(r), node(c));
            out.as_mut().submatrix_mut(r * n, c * n, n, n).copy_from(&b);
        }
    }
    out
}

/// Hermitian and unitary polar factors, by sector.
#[derive(Clone, Debug)]
pub struct PolarParts {
    pub grid: KGrid,
    pub channel_labels: Vec<String>,
    pub hermitian: Vec<CMat>,
    pub unitary: Vec<CMat>,
    lookup: Vec<Option<Locator>>,
}

/// M = UΣW† ⇒ M_h = UΣU†, M_u = UW†.
pub fn polar_factor(m: MatRef<'_, C64>) -> Result<(CMat, CMat)> {
    let d = linalg::svd(m)?;
    let us = Mat::from_fn(d.u.nrows(), d.u.ncols(), |i, j| d.u[(i, j)] * d.s[j]);
    let h = &us * d.u.adjoint();
    // Symmetrise away the rounding so M_h is exactly Hermitian.
    let h = Mat::from_fn(h.nrows(), h.ncols(), |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let u = &d.u * d.v.adjoint();
    Ok((h, u))
}

pub fn polar_decompose(kernel: &SymplecticKernel) -> Result<PolarParts> {
    polar_decompose_with(kernel, Execution::default())
}

pub fn polar_decompose_with(kernel: &SymplecticKernel, exec: Execution) -> Result<PolarParts> {
    let factors = map_indexed(kernel.sectors.len(), exec, |s| polar_factor(kernel.sectors[s].m.as_ref()));
    let mut hermitian = Vec::with_capacity(factors.len());
    let mut unitary = Vec::with_capacity(factors.len());
    for f in factors {
        let (h, u) = f?;
        hermitian.push(h);
        unitary.push(u);
    }
    Ok(PolarParts {
        grid: kernel.grid,
        channel_labels: kernel.channel_labels.clone(),
        hermitian,
        unitary,
        lookup: kernel.lookup.clone(),
    })
}

impl PolarParts {
    pub fn channel_index(&self, label: &str) -> Result<usize> {
        label_index(&self.channel_labels, label)
    }

    fn read(&self, mats: &[CMat], row: Node, col: Node) -> CMat {
        let refs: Vec<&CMat> = mats.iter().collect();
        read_block(&refs, &self.lookup, self.channel_labels.len(), self.grid.n_points, row, col)
    }

    /// Discrete β^h_ij block.
    pub fn beta_h(&self, i: usize, j: usize) -> CMat {
        self.read(
            &self.hermitian,
            Node { part: Part::Annihilation, index: i },
            Node { part: Part::Creation, index: j },
        )
    }

    pub fn hermitian_dense(&self) -> CMat {
        dense(self.channel_labels.len(), self.grid.n_points, |r, c| self.read(&self.hermitian, r, c))
    }

    pub fn unitary_dense(&self) -> CMat {
        dense(self.channel_labels.len(), self.grid.n_points, |r, c| self.read(&self.unitary, r, c))
    }
}

/// β^h between two output channels as a continuum JSA (discrete block / dk).
/// Adds a low-gain advisory when ‖β^h‖_F exceeds [`LOW_GAIN_ADVISORY`].
pub fn jsa_block(parts: &PolarParts, mode_i: &str, mode_j: &str) -> Result<JointSpectralAmplitude> {
    let i = parts.channel_index(mode_i)?;
    let j = parts.channel_index(mode_j)?;
    Ok(JointSpectralAmplitude::from_discrete(
        parts.grid,
        mode_i,
        mode_j,
        parts.beta_h(i, j).as_ref(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_of_unitary_is_identity_hermitian_part() {
        let th = 0.3_f64;
        let u = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => linalg::c(th.cos(), 0.0),
            (0, 1) => linalg::c(0.0, th.sin()),
            (1, 0) => linalg::c(0.0, th.sin()),
            _ => linalg::c(th.cos(), 0.0),
        });
        let (h, w) = polar_factor(u.as_ref()).unwrap();
        assert!(linalg::rel_diff(h.as_ref(), linalg::identity(2).as_ref()) < 1e-14);
        assert!(linalg::rel_diff(w.as_ref(), u.as_ref()) < 1e-14);
    }

    #[test]
    fn polar_of_positive_hermitian_has_identity_unitary() {
        let h = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                linalg::c(3.0 + i as f64, 0.0)
            } else if i < j {
                linalg::c(0.2, 0.1)
            } else {
                linalg::c(0.2, -0.1)
            }
        });
        let (hh, u) = polar_factor(h.as_ref()).unwrap();
        assert!(linalg::rel_diff(u.as_ref(), linalg::identity(3).as_ref()) < 1e-13);
        assert!(linalg::rel_diff(hh.as_ref(), h.as_ref()) < 1e-13);
    }

    #[test]
    fn union_find_merges() {
        let mut uf = UnionFind::new(5);
        uf.union(3, 4);
        uf.union(1, 4);
        assert_eq!(uf.find(3), uf.find(1));
        assert_ne!(uf.find(0), uf.find(1));
    }
}
