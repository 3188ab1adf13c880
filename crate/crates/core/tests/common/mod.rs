#![allow(dead_code)]

use faer::Mat;
use ringfwm::linalg::{c, CMat, C64};
use ringfwm::model::{CavitySpec, ChannelKind, ChannelSpec, CoupledCavityModel, Direction};

pub const V: f64 = 7.15e7;
pub const OMEGA: f64 = 1.218e15;

/// Pulls numbers in [-1, 1] off a fixed list, cycling.
pub struct Draws<'a> {
    xs: &'a [f64],
    at: usize,
}

impl<'a> Draws<'a> {
    pub fn new(xs: &'a [f64]) -> Self {
        Draws { xs, at: 0 }
    }

    pub fn next(&mut self) -> f64 {
        let x = self.xs[self.at % self.xs.len()];
        self.at += 1;
        x
    }

    pub fn complex(&mut self, scale: f64) -> C64 {
        c(scale * self.next(), scale * self.next())
    }

    pub fn hermitian(&mut self, n: usize, scale: f64) -> CMat {
        let mut m = Mat::from_fn(n, n, |_, _| C64::new(0.0, 0.0));
        for i in 0..n {
            m[(i, i)] = c(scale * self.next(), 0.0);
            for j in i + 1..n {
                let z = self.complex(scale);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }
}

/// J channels and N cavities sharing one velocity and carrier, with random
/// couplings of physically sensible size.
pub fn random_model(n_ch: usize, n_cav: usize, d: &mut Draws<'_>) -> CoupledCavityModel {
    let channels = (0..n_ch)
        .map(|j| ChannelSpec {
            label: format!("ch{j}"),
            carrier_frequency: OMEGA,
            group_velocity: V,
            direction: Direction::Forward,
            kind: if j % 2 == 0 { ChannelKind::Bus } else { ChannelKind::PhantomLoss },
        })
        .collect();
    let cavities = (0..n_cav)
        .map(|n| CavitySpec {
            label: format!("cav{n}"),
            resonance_frequency: OMEGA,
            group_velocity: V,
        })
        .collect();
    let gamma = Mat::from_fn(n_cav, n_ch, |_, _| d.complex(9e8));
    CoupledCavityModel {
        channels,
        cavities,
        gamma,
        g: d.hermitian(n_cav, 1e10),
        c: d.hermitian(n_ch, 0.5 * V),
    }
}
