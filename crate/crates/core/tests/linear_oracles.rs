mod common;

use common::{random_model, Draws, V};
use faer::Mat;
use proptest::prelude::*;
use ringfwm::linalg::{self, c, eigh, frobenius, identity, C64};
use ringfwm::lingrid::{solve_linear_absolute_frequency, solve_linear_tuned, KGrid, SpectralField};
use ringfwm::model::derive_linear;

fn unitarity_defect(m: &linalg::CMat) -> f64 {
    let n = m.nrows();
    frobenius((m * m.adjoint() - identity(n)).as_ref())
}

/// exp(−2i·atan(X)) for Hermitian X via its eigenbasis.
fn cayley_oracle(x: &linalg::CMat) -> linalg::CMat {
    let (vals, vecs) = eigh(x.as_ref()).unwrap();
    let n = x.nrows();
    let d = Mat::from_fn(n, n, |i, j| {
        if i == j {
            let t = -2.0 * vals[i].atan();
            c(t.cos(), t.sin())
        } else {
            C64::new(0.0, 0.0)
        }
    });
    &vecs * d * vecs.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn t_is_unitary_and_matches_the_matrix_function(
        n_ch in 1usize..6,
        xs in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let model = random_model(n_ch, 1, &mut Draws::new(&xs));
        let d = derive_linear(&model).unwrap();
        prop_assert!(unitarity_defect(&d.t) <= 1e-12);
        let x = &model.c * faer::Scale(c(0.5 / V, 0.0));
        prop_assert!(frobenius((&d.t - cayley_oracle(&x)).as_ref()) <= 1e-10);
    }

    #[test]
    fn scattering_map_conserves_flux(
        n_ch in 2usize..6,
        n_cav in 1usize..4,
        k in -3000.0f64..3000.0,
        xs in prop::collection::vec(-1.0f64..1.0, 96),
    ) {
        let model = random_model(n_ch, n_cav, &mut Draws::new(&xs));
        let d = derive_linear(&model).unwrap();
        let s = d.scattering_matrix(k).unwrap();
        prop_assert!(unitarity_defect(&s) <= 1e-10, "defect {}", unitarity_defect(&s));
    }

    #[test]
    fn absolute_frequency_solver_reduces_to_tuned(
        n_ch in 2usize..5,
        n_cav in 1usize..3,
        xs in prop::collection::vec(-1.0f64..1.0, 96),
    ) {
        let mut draws = Draws::new(&xs);
        let model = random_model(n_ch, n_cav, &mut draws);
        let d = derive_linear(&model).unwrap();
        let grid = KGrid::symmetric(41, 2000.0).unwrap();
        let labels: Vec<String> = model.channels.iter().map(|c| c.label.clone()).collect();
        let amps = Mat::from_fn(n_ch, grid.n_points, |_, _| draws.complex(1.0));
        let input = SpectralField::new(grid, labels, amps).unwrap();
        let tuned = solve_linear_tuned(&d, &input).unwrap();
        let xi: Vec<f64> = grid.values().iter().map(|k| common::OMEGA + V * k).collect();
        let abs = solve_linear_absolute_frequency(&d, &input, &xi).unwrap();
        let scale = frobenius(tuned.transmitted.amplitudes.as_ref());
        let dt = frobenius((&abs.transmitted - &tuned.transmitted.amplitudes).as_ref()) / scale;
        let da = frobenius((&abs.intracavity - &tuned.intracavity.amplitudes).as_ref())
            / frobenius(tuned.intracavity.amplitudes.as_ref());
        prop_assert!(dt <= 1e-10 && da <= 1e-10, "transmitted {dt:e}, intracavity {da:e}");
    }
}

#[test]
fn zero_c_gives_identity_t() {
    let xs = [0.3, -0.2, 0.7, 0.1];
    let mut model = random_model(3, 2, &mut Draws::new(&xs));
    model.c = linalg::zeros(3, 3);
    let d = derive_linear(&model).unwrap();
    assert!(frobenius((&d.t - identity(3)).as_ref()) == 0.0);
}
