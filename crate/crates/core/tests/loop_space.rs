use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tentacle::dynamics::{enumerate_closed_characteristics, ClosedCharacteristic};
use tentacle::floer::{
    discrete_action, discrete_gradient, euclidean_hessian, hessian_apply, integrate_flow, kernel_count, newton_refine,
    read_snapshots, write_snapshot, FlowOptions, LoopState, Tangent, NEWTON_TOL,
};
use tentacle::Hamiltonian;

fn h_ex() -> Hamiltonian {
    Hamiltonian::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0])), 0.5).unwrap()
}

fn first_orbit(h: &Hamiltonian) -> ClosedCharacteristic {
    enumerate_closed_characteristics(h, 1).unwrap().remove(0)
}

fn state_strategy(n: usize) -> impl Strategy<Value = (LoopState, Tangent)> {
    (-4.0f64..4.0, prop::collection::vec(-1.5f64..1.5, 4 * n), -1.0f64..1.0, prop::collection::vec(-1.0f64..1.0, 4 * n))
        .prop_map(move |(eta, v, deta, w)| {
            (LoopState::new(eta, DMatrix::from_vec(4, n, v)).unwrap(), Tangent { dv: DMatrix::from_vec(4, n, w), deta })
        })
}

fn shifted(u: &LoopState, w: &Tangent, t: f64) -> LoopState {
    LoopState::new(u.eta() + t * w.deta, u.samples() + &w.dv * t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_is_derivative_of_action((u, w) in state_strategy(16)) {
        let h = h_ex();
        let t = 1e-5;
        let fd = (discrete_action(&shifted(&u, &w, t), &h).unwrap() - discrete_action(&shifted(&u, &w, -t), &h).unwrap()) / (2.0 * t);
        let an = discrete_gradient(&u, &h).unwrap().g_dot(&w);
        prop_assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()));
    }

    #[test]
    fn hessian_is_derivative_of_gradient((u, w) in state_strategy(16)) {
        let h = h_ex();
        let t = 1e-5;
        let gp = discrete_gradient(&shifted(&u, &w, t), &h).unwrap().to_flat();
        let gm = discrete_gradient(&shifted(&u, &w, -t), &h).unwrap().to_flat();
        let fd = (gp - gm) / (2.0 * t);
        let an = hessian_apply(&u, &h, &w).unwrap().to_flat();
        prop_assert!((&fd - &an).amax() <= 1e-5 * (1.0 + an.amax()));
        let he = euclidean_hessian(&u, &h).unwrap();
        prop_assert!((&he - he.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn snapshots_round_trip((u, _) in state_strategy(16)) {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &u).unwrap();
        prop_assert_eq!(read_snapshots(&mut buf.as_slice()).unwrap(), vec![u]);
    }
}

#[test]
fn mesh_convergence_at_sampled_circle() {
    let h = h_ex();
    let o = first_orbit(&h);
    let err = |n: usize| {
        let u = LoopState::from_orbit(&o, &h, n).unwrap();
        let g = discrete_gradient(&u, &h).unwrap();
        ((discrete_action(&u, &h).unwrap() - PI).abs(), g.max_dv())
    };
    let (a1, g1) = err(128);
    let (a2, g2) = err(256);
    assert!((3.5..=4.5).contains(&(a1 / a2)), "action ratio {}", a1 / a2);
    assert!((3.5..=4.5).contains(&(g1 / g2)), "gradient ratio {}", g1 / g2);
    assert!(a2 < 1e-3 && g2 < 1e-2);
}

#[test]
fn kernel_is_stable_under_refinement() {
    let h = h_ex();
    let o = first_orbit(&h);
    for n in [64, 128] {
        let u = LoopState::discrete_circle(&o, &h, n).unwrap();
        assert_eq!(kernel_count(&u, &h, 10.0 / (n * n) as f64).unwrap(), 1, "N = {n}");
    }
    let c = LoopState::constant(&DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]), 0.0, 64).unwrap();
    assert!(kernel_count(&c, &h, 10.0 / 4096.0).unwrap() >= 3);
}

#[test]
fn newton_from_noisy_circle() {
    let h = h_ex();
    let o = first_orbit(&h);
    let n = 256;
    let base = LoopState::from_orbit(&o, &h, n).unwrap();
    let mut v = base.samples().clone();
    for j in 0..n {
        let t = 2.0 * PI * j as f64 / n as f64;
        v[(0, j)] += 1e-3 * t.sin();
        v[(1, j)] += 1e-3 * (1.0 + t.cos());
        v[(3, j)] += 1e-3 * (2.0 * t).cos();
    }
    let r = newton_refine(&LoopState::new(2.0 * PI + 1e-3, v).unwrap(), &h).unwrap();
    assert!(r.residual < NEWTON_TOL);
    let critical = discrete_action(&LoopState::discrete_circle(&o, &h, n).unwrap(), &h).unwrap();
    let refined = discrete_action(&r.state, &h).unwrap();
    assert!((refined - critical).abs() < 1e-9);
    // The discrete critical value sits O(N^-2) below pi.
    assert!((refined - PI).abs() < 1e-4);
}

#[test]
fn ten_perturbed_flows() {
    let h = h_ex();
    let o = first_orbit(&h);
    let n = 16;
    let base = LoopState::discrete_circle(&o, &h, n).unwrap();
    for run in 0..10 {
        let amp = 1e-2 * (1.0 + 0.1 * run as f64);
        let phase = run as f64 * 0.6;
        let mut v = base.samples().clone();
        for j in 0..n {
            let t = 2.0 * PI * j as f64 / n as f64 + phase;
            v[(1, j)] += amp * (1.0 + 0.3 * t.cos());
            v[(3, j)] += amp * (0.5 + 0.2 * t.sin());
        }
        let u = LoopState::new(base.eta(), v).unwrap();
        let d = integrate_flow(&u, &h, &FlowOptions { s_max: 0.5, ..Default::default() }).unwrap();
        let scale = 1.0f64.max(d.action_series[0].abs());
        assert!(!d.escaped);
        assert!(d.worst_decrease() <= 1e-9 * scale);
        assert!(d.delta_action() > 0.0);
        assert!((d.energy - d.delta_action()).abs() <= 1e-4 * (1.0 + d.delta_action().abs()));
    }
}
