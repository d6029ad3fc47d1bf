use widecl_core::compare::{compare, loss_gaps};
use widecl_core::data::make_rotated_tasks;
use widecl_core::dmft::{simulate, DmftConfig, XiMode};
use widecl_core::finite_net::{train_sequential, NetworkState, TrainOptions};
use widecl_core::{Activation, ParamConfig, Parameterization, ReadoutInit};

// A wide NTP network with zero readout stays at its initial kernel Phi, the
// same dynamics as the frozen-field simulator with zero readout field. This
// needs O(1) input Grams: with small ones, fitting takes so much integrated
// residual that the readout grows to O(1) and the kernel moves.
#[test]
fn wide_ntp_network_tracks_lazy_simulator() {
    let targets: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let seq = make_rotated_tasks(2, 10, 40, 0.5, &targets, 3).unwrap();
    let steps = 200;
    let dmft = simulate(
        &seq,
        &DmftConfig {
            gamma0: 0.0,
            samples: 20_000,
            steps_per_task: steps,
            activation: Activation::Relu,
            xi_mode: XiMode::Zero,
            seed: 5,
            ..DmftConfig::default()
        },
    )
    .unwrap();
    let cfg = ParamConfig {
        parameterization: Parameterization::Ntp,
        width: 8192,
        activation: Activation::Relu,
        readout_init: ReadoutInit::Zero,
        ..ParamConfig::default()
    };
    let mut state = NetworkState::init(&cfg, seq.dim(), 6).unwrap();
    let finite = train_sequential(&mut state, &cfg, &seq, steps, &TrainOptions::default()).unwrap();
    let gap = loss_gaps(&finite.loss_table(), &dmft.loss_table()).unwrap().max_relative_gap;
    assert!(gap < 0.10, "gap {gap}");
    assert_eq!(compare(&dmft, &dmft).unwrap().max_relative_gap, 0.0);
}
