//! Channels, cavities and their couplings, plus the constant operators derived
//! from them (T, γ̄, Γ̄).

use std::fmt;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64, I, ZERO};

/// Relative Frobenius tolerance for Hermiticity and unitarity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative tolerance when comparing velocities or frequencies for equality.
const MATCH_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Bus,
    PhantomLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub label: String,
    /// Ω_j in rad/s.
    pub carrier_frequency: f64,
    /// v_j in m/s.
    pub group_velocity: f64,
    pub direction: Direction,
    pub kind: ChannelKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    pub label: String,
    /// ω_n in rad/s.
    pub resonance_frequency: f64,
    /// Phenomenological group velocity 𝒱_n in m/s.
    pub group_velocity: f64,
}

/// Cavities (N) coupled to waveguide channels (J).
///
/// `gamma` is N×J, `g` is N×N and Hermitian, `c` is J×J and Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledCavityModel {
    pub channels: Vec<ChannelSpec>,
    pub cavities: Vec<CavitySpec>,
    pub gamma: CMat,
    pub g: CMat,
    pub c: CMat,
}

impl CoupledCavityModel {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_cavities(&self) -> usize {
        self.cavities.len()
    }

    pub fn channel_velocities(&self) -> Vec<f64> {
        self.channels.iter().map(|ch| ch.group_velocity).collect()
    }

    pub fn cavity_velocities(&self) -> Vec<f64> {
        self.cavities.iter().map(|cav| cav.group_velocity).collect()
    }

    pub fn channel_index(&self, label: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|ch| ch.label == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    pub fn cavity_index(&self, label: &str) -> Result<usize> {
        self.cavities
            .iter()
            .position(|cav| cav.label == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    /// Disjoint union: channels and cavities of `other` follow those of `self`,
    /// with no couplings between the two.
    pub fn combine(&self, other: &CoupledCavityModel) -> CoupledCavityModel {
        let mut channels = self.channels.clone();
        channels.extend(other.channels.iter().cloned());
        let mut cavities = self.cavities.clone();
        cavities.extend(other.cavities.iter().cloned());
        CoupledCavityModel {
            channels,
            cavities,
            gamma: block_diag(self.gamma.as_ref(), other.gamma.as_ref()),
            g: block_diag(self.g.as_ref(), other.g.as_ref()),
            c: block_diag(self.c.as_ref(), other.c.as_ref()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

fn block_diag(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let (ra, ca) = (a.nrows(), a.ncols());
    Mat::from_fn(ra + b.nrows(), ca + b.ncols(), |i, j| match (i < ra, j < ca) {
        (true, true) => a[(i, j)],
        (false, false) => b[(i - ra, j - ca)],
        _ => ZERO,
    })
}

/// On-disk form: matrices as row lists of `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    channels: Vec<ChannelSpec>,
    cavities: Vec<CavitySpec>,
    gamma: Vec<Vec<[f64; 2]>>,
    g: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "C")]
    c: Vec<Vec<[f64; 2]>>,
}

fn mat_to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn rows_to_mat(name: &str, rows: &[Vec<[f64; 2]>], nrows: usize, ncols: usize) -> Result<CMat> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("matrix `{name}` must be {nrows}x{ncols}")));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

impl From<&CoupledCavityModel> for ModelFile {
    fn from(m: &CoupledCavityModel) -> Self {
        ModelFile {
            channels: m.channels.clone(),
            cavities: m.cavities.clone(),
            gamma: mat_to_rows(&m.gamma),
            g: mat_to_rows(&m.g),
            c: mat_to_rows(&m.c),
        }
    }
}

impl TryFrom<ModelFile> for CoupledCavityModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let (n, j) = (f.cavities.len(), f.channels.len());
        Ok(CoupledCavityModel {
            gamma: rows_to_mat("gamma", &f.gamma, n, j)?,
            g: rows_to_mat("g", &f.g, n, n)?,
            c: rows_to_mat("C", &f.c, j, j)?,
            channels: f.channels,
            cavities: f.cavities,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Rule {
    Shape,
    PositiveVelocity,
    PositiveFrequency,
    GHermitian,
    CHermitian,
    /// C_jk ≠ 0 requires v_j = v_k.
    ChannelVelocityMatch,
    /// γ_nj ≠ 0 requires v_j = 𝒱_n (tuned solver only).
    CouplingVelocityMatch,
    /// g_nm ≠ 0 requires ω_n = ω_m (tuned solver only).
    CavityTuningMatch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.rule, self.message)
    }
}

fn differs(a: f64, b: f64) -> bool {
    (a - b).abs() > MATCH_TOL * a.abs().max(b.abs())
}

fn hermiticity(name: &str, m: &CMat, rule: Rule, out: &mut Vec<Violation>) {
    if linalg::hermitian_residual(m.as_ref()) <= HERMITIAN_TOL {
        return;
    }
    let mut worst = (0, 0, 0.0);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst.2 {
                worst = (i, j, d);
            }
        }
    }
    out.push(Violation {
        rule,
        message: format!(
            "{name}[{i}][{j}] = {a} but conj({name}[{j}][{i}]) = {b}",
            i = worst.0,
            j = worst.1,
            a = m[(worst.0, worst.1)],
            b = m[(worst.1, worst.0)].conj()
        ),
    });
}

/// Checks every structural invariant that holds regardless of solver.
/// Returns an empty list for a valid model.
pub fn validate_model(model: &CoupledCavityModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, j) = (model.n_cavities(), model.n_channels());
    let shapes = [
        ("gamma", &model.gamma, n, j),
        ("g", &model.g, n, n),
        ("C", &model.c, j, j),
    ];
    for (name, m, r, cols) in shapes {
        if m.nrows() != r || m.ncols() != cols {
            out.push(Violation {
                rule: Rule::Shape,
                message: format!("{name} is {}x{}, expected {r}x{cols}", m.nrows(), m.ncols()),
            });
        }
    }
    if !out.is_empty() {
        return out;
    }
    for ch in &model.channels {
        if !(ch.group_velocity > 0.0 && ch.group_velocity.is_finite()) {
            out.push(Violation {
                rule: Rule::PositiveVelocity,
                message: format!("channel `{}` has v = {}", ch.label, ch.group_velocity),
            });
        }
        if !(ch.carrier_frequency > 0.0 && ch.carrier_frequency.is_finite()) {
            out.push(Violation {
                rule: Rule::PositiveFrequency,
                message: format!("channel `{}` has Ω = {}", ch.label, ch.carrier_frequency),
            });
        }
    }
    for cav in &model.cavities {
        if !(cav.group_velocity > 0.0 && cav.group_velocity.is_finite()) {
            out.push(Violation {
                rule: Rule::PositiveVelocity,
                message: format!("cavity `{}` has 𝒱 = {}", cav.label, cav.group_velocity),
            });
        }
        if !(cav.resonance_frequency > 0.0 && cav.resonance_frequency.is_finite()) {
            out.push(Violation {
                rule: Rule::PositiveFrequency,
                message: format!("cavity `{}` has ω = {}", cav.label, cav.resonance_frequency),
            });
        }
    }
    hermiticity("g", &model.g, Rule::GHermitian, &mut out);
    hermiticity("C", &model.c, Rule::CHermitian, &mut out);
    for a in 0..j {
        for b in 0..j {
            let (va, vb) = (model.channels[a].group_velocity, model.channels[b].group_velocity);
            if model.c[(a, b)] != ZERO && differs(va, vb) {
                out.push(Violation {
                    rule: Rule::ChannelVelocityMatch,
                    message: format!("C[{a}][{b}] ≠ 0 couples channels with v = {va} and {vb}"),
                });
            }
        }
    }
    out
}

/// Extra conditions required by the tuned (single-k) linear solver.
pub fn tuned_violations(model: &CoupledCavityModel) -> Vec<Violation> {
    let mut out = Vec::new();
    for (n, cav) in model.cavities.iter().enumerate() {
        for (j, ch) in model.channels.iter().enumerate() {
            if model.gamma[(n, j)] != ZERO && differs(cav.group_velocity, ch.group_velocity) {
                out.push(Violation {
                    rule: Rule::CouplingVelocityMatch,
                    message: format!(
                        "gamma[{n}][{j}] ≠ 0 couples cavity 𝒱 = {} to channel v = {}",
                        cav.group_velocity, ch.group_velocity
                    ),
                });
            }
        }
        for (m, other) in model.cavities.iter().enumerate() {
            if model.g[(n, m)] != ZERO && differs(cav.resonance_frequency, other.resonance_frequency) {
                out.push(Violation {
                    rule: Rule::CavityTuningMatch,
                    message: format!(
                        "g[{n}][{m}] ≠ 0 couples ω = {} to ω = {}",
                        cav.resonance_frequency, other.resonance_frequency
                    ),
                });
            }
        }
    }
    out
}

/// Operators derived once from a model and shared by every solver.
#[derive(Clone, Debug)]
pub struct DerivedLinear {
    pub model: CoupledCavityModel,
    /// C̃ = 𝟙 + (i/2) V⁻¹ C.
    pub c_tilde: CMat,
    /// T = C̃⁻¹ C̃†, unitary.
    pub t: CMat,
    /// γ̄ = γ C̃⁻¹.
    pub gamma_bar: CMat,
    /// Γ̄ = ½ γ̄ V⁻¹ γ† + i g.
    pub big_gamma_bar: CMat,
}

pub fn derive_linear(model: &CoupledCavityModel) -> Result<DerivedLinear> {
    let violations = validate_model(model);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::InvalidModel(text.join("; ")));
    }
    let j = model.n_channels();
    let vinv: Vec<f64> = model.channels.iter().map(|ch| 1.0 / ch.group_velocity).collect();
    let c_tilde = Mat::from_fn(j, j, |a, b| {
        let base = if a == b { linalg::ONE } else { ZERO };
        base + I * 0.5 * vinv[a] * model.c[(a, b)]
    });
    let c_tilde_inv = linalg::inverse(c_tilde.as_ref(), "C̃ = 1 + (i/2)V⁻¹C")?;
    let t = &c_tilde_inv * c_tilde.adjoint();
    let gamma_bar = &model.gamma * &c_tilde_inv;
    let scaled = Mat::from_fn(model.n_cavities(), j, |n, b| gamma_bar[(n, b)] * vinv[b]);
    let big_gamma_bar = (&scaled * model.gamma.adjoint()) * faer::Scale(c(0.5, 0.0)) + &model.g * faer::Scale(I);
    Ok(DerivedLinear {
        model: model.clone(),
        c_tilde,
        t,
        gamma_bar,
        big_gamma_bar,
    })
}

impl DerivedLinear {
    pub fn n_channels(&self) -> usize {
        self.model.n_channels()
    }

    pub fn n_cavities(&self) -> usize {
        self.model.n_cavities()
    }

    pub fn channel_velocity(&self, j: usize) -> f64 {
        self.model.channels[j].group_velocity
    }

    pub fn cavity_velocity(&self, n: usize) -> f64 {
        self.model.cavities[n].group_velocity
    }

    /// (−ik𝒱 + Γ̄)⁻¹ at a single wavenumber.
    pub fn resolvent(&self, k: f64) -> Result<CMat> {
        let n = self.n_cavities();
        let a = Mat::from_fn(n, n, |p, q| {
            let diag = if p == q { c(0.0, -k * self.cavity_velocity(p)) } else { ZERO };
            diag + self.big_gamma_bar[(p, q)]
        });
        linalg::inverse(a.as_ref(), &format!("−ik𝒱 + Γ̄ at k = {k}"))
    }

    /// Linear input-output matrix T(𝟙 − V⁻¹γ̄†(−ik𝒱 + Γ̄)⁻¹γ̄) at one wavenumber.
    pub fn scattering_matrix(&self, k: f64) -> Result<CMat> {
        let r = self.resolvent(k)?;
        let j = self.n_channels();
        let inner = self.gamma_bar.adjoint() * &r * &self.gamma_bar;
        let bracket = Mat::from_fn(j, j, |a, b| {
            let id = if a == b { linalg::ONE } else { ZERO };
            id - inner[(a, b)] / self.channel_velocity(a)
        });
        Ok(&self.t * bracket)
    }

    /// T V⁻¹ γ̄† (−ik𝒱 + Γ̄)⁻¹: maps cavity amplitudes onto output channels.
    pub fn output_filter(&self, k: f64) -> Result<CMat> {
        let r = self.resolvent(k)?;
        let j = self.n_channels();
        let gb_dag = Mat::from_fn(j, self.n_cavities(), |a, n| {
            self.gamma_bar[(n, a)].conj() / self.channel_velocity(a)
        });
        Ok(&self.t * gb_dag * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Direction::*;

    pub(crate) fn two_channel_cavity(gamma: f64, v: f64) -> CoupledCavityModel {
        let ch = |label: &str, kind| ChannelSpec {
            label: label.into(),
            carrier_frequency: 1.2e15,
            group_velocity: v,
            direction: Forward,
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
    fn zero_channel_coupling_gives_identity_t() {
        let d = derive_linear(&two_channel_cavity(8.7e8, 7.15e7)).unwrap();
        assert!(linalg::rel_diff(d.t.as_ref(), linalg::identity(2).as_ref()) < 1e-15);
        assert!(linalg::rel_diff(d.gamma_bar.as_ref(), d.model.gamma.as_ref()) < 1e-15);
    }

    #[test]
    fn single_cavity_gamma_bar_is_gamma_squared_over_v() {
        let (gp, v) = (8.72769e8, 7.1532e7);
        let d = derive_linear(&two_channel_cavity(gp, v)).unwrap();
        let want = gp * gp / v;
        assert!((d.big_gamma_bar[(0, 0)] - c(want, 0.0)).norm() < 1e-12 * want);
    }

    #[test]
    fn non_hermitian_g_names_the_entry() {
        let mut m = two_channel_cavity(1e8, 7e7);
        m.cavities.push(m.cavities[0].clone());
        m.gamma = Mat::from_fn(2, 2, |_, _| c(1e8, 0.0));
        m.g = Mat::from_fn(2, 2, |i, j| if i == j { ZERO } else { c(1e9, 0.0) });
        m.g[(0, 1)] = c(1e9, 1e8);
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::GHermitian);
        assert!(v[0].message.contains("g["));
        assert!(derive_linear(&m).is_err());
    }

    #[test]
    fn mismatched_velocity_channel_coupling_is_flagged() {
        let mut m = two_channel_cavity(1e8, 7e7);
        m.channels[1].group_velocity = 6e7;
        m.c = Mat::from_fn(2, 2, |i, j| if i == j { ZERO } else { c(1e6, 0.0) });
        let v = validate_model(&m);
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|x| x.rule == Rule::ChannelVelocityMatch));
    }

    #[test]
    fn json_round_trip() {
        let mut m = two_channel_cavity(1e8, 7e7);
        m.gamma[(0, 1)] = c(3.0, -2.5);
        let back = CoupledCavityModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
