use super::*;
use crate::error::Error;
use crate::matrix::Matrix;
use crate::model::{ActivationKind, ActivationSpec, DataModel, LayerRole, LossSpec, Sample, ScheduleForm, Schedules};
use crate::reduce::Reduction;
use crate::rng::RngState;

const TANH_1: f64 = 0.7615941559557649;

/// L = 2, d = 1, n₁ = 2, w₁ = [1, −1], w₂ = [3; 1].
fn two_neuron() -> (NetworkArch, Weights<f64>) {
    let arch = NetworkArch::standard(1, vec![2, 1]).unwrap();
    let w = Weights::from_layers(
        &arch,
        vec![Matrix::from_vec(2, 1, vec![1.0, -1.0]).unwrap(), Matrix::from_vec(2, 1, vec![3.0, 1.0]).unwrap()],
    )
    .unwrap();
    (arch, w)
}

fn wavy(arch: &NetworkArch, phase: f64) -> Weights<f64> {
    Weights::from_fn(arch, |i, r, c| ((i * 17 + r * 5 + c * 11) as f64 + phase).sin() * 1.3)
}

#[test]
fn zero_weights_give_zero_everything() {
    let arch = NetworkArch::standard(3, vec![4, 3, 1]).unwrap();
    let (yhat, pre) = forward_finite(&arch, &Weights::zeros(&arch), &[0.3, -2.0, 1.0]).unwrap();
    assert_eq!(yhat, 0.0);
    assert!(pre.iter().flatten().all(|&h| h == 0.0));
}

#[test]
fn two_neuron_forward() {
    let (arch, w) = two_neuron();
    let (yhat, pre) = forward_finite(&arch, &w, &[1.0]).unwrap();
    assert_eq!(pre[0], vec![1.0, -1.0]);
    assert!((yhat - TANH_1).abs() < 1e-15);
    assert!((pre[1][0] - TANH_1).abs() < 1e-15);
}

#[test]
fn identity_network_of_ones_averages_to_input() {
    let acts = vec![
        ActivationSpec::new(ActivationKind::Identity, LayerRole::Hidden),
        ActivationSpec::new(ActivationKind::Identity, LayerRole::Hidden),
        ActivationSpec::identity_output(),
    ];
    for widths in [vec![1, 1, 1], vec![3, 7, 1], vec![40, 33, 1]] {
        let arch = NetworkArch::new(1, widths, acts.clone()).unwrap();
        let w = Weights::from_fn(&arch, |_, _, _| 1.0);
        let (yhat, _) = forward_finite(&arch, &w, &[2.5]).unwrap();
        assert_eq!(yhat, 2.5);
    }
}

#[test]
fn shape_mismatch_is_structural() {
    let (arch, w) = two_neuron();
    assert!(matches!(forward_finite(&arch, &w, &[1.0, 2.0]), Err(Error::Shape(_))));
    let other = NetworkArch::standard(1, vec![3, 1]).unwrap();
    assert!(matches!(forward_finite(&other, &w, &[1.0]), Err(Error::Shape(_))));
}

#[test]
fn zero_seed_gives_zero_deltas() {
    let arch = NetworkArch::standard(2, vec![4, 3, 1]).unwrap();
    let w = wavy(&arch, 0.0);
    let x = vec![0.4, -0.7];
    let (yhat, _) = forward_finite(&arch, &w, &x).unwrap();
    let pass = backward_finite(&arch, &w, &Sample::new(x, yhat), &LossSpec::huber(1.0)).unwrap();
    assert!(pass.delta_h.iter().flatten().all(|&v| v == 0.0));
    assert!(pass.delta_w.layers().iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
}

/// `huber(1)` in its linear branch has `∂₂ ≡ 1`.
fn unit_slope_sample(yhat: f64) -> Sample<f64> {
    Sample::new(vec![1.0], yhat - 10.0)
}

#[test]
fn two_neuron_backward_with_unit_slope() {
    let (arch, w) = two_neuron();
    let pass = backward_finite(&arch, &w, &unit_slope_sample(TANH_1), &LossSpec::huber(1.0)).unwrap();
    assert_eq!(pass.delta_h[1], vec![1.0]);
    let d2 = pass.delta_w.layer(2);
    assert!((d2[(0, 0)] - TANH_1).abs() < 1e-15);
    assert!((d2[(1, 0)] + TANH_1).abs() < 1e-15);
}

#[test]
fn two_neuron_sgd_step() {
    let (arch, w) = two_neuron();
    let next = sgd_step(&arch, &w, &unit_slope_sample(TANH_1), &LossSpec::huber(1.0), &Schedules::constant(2, 1.0), 0.1, 0)
        .unwrap();
    assert!((next.layer(2)[(0, 0)] - 2.923840584404424).abs() < 1e-15);
}

#[test]
fn frozen_schedules_or_flat_loss_leave_weights_unchanged() {
    let arch = NetworkArch::standard(2, vec![4, 3, 1]).unwrap();
    let w = wavy(&arch, 1.0);
    let z = Sample::new(vec![0.2, 0.9], 3.0);
    let next = sgd_step(&arch, &w, &z, &LossSpec::huber(1.0), &Schedules::constant(3, 0.0), 0.7, 4).unwrap();
    assert_eq!(next, w);
    let (yhat, _) = forward_finite(&arch, &w, &z.x).unwrap();
    let flat = Sample::new(z.x.clone(), yhat);
    let next = sgd_step(&arch, &w, &flat, &LossSpec::huber(1.0), &Schedules::constant(3, 1.0), 0.7, 4).unwrap();
    assert_eq!(next, w);
}

#[test]
fn schedule_is_read_at_physical_time() {
    let (arch, w) = two_neuron();
    // ξ(t) = 1 for t < 0.5, then 0: step k = 5 at ε = 0.1 sits at t = 0.5.
    let form = ScheduleForm::PiecewiseLinear { knots: vec![(0.0, 1.0), (0.49, 1.0), (0.5, 0.0)] };
    let sched = Schedules::new(vec![form.clone(), form]).unwrap();
    let z = unit_slope_sample(TANH_1);
    let moved = sgd_step(&arch, &w, &z, &LossSpec::huber(1.0), &sched, 0.1, 4).unwrap();
    assert_ne!(moved, w);
    let frozen = sgd_step(&arch, &w, &z, &LossSpec::huber(1.0), &sched, 0.1, 5).unwrap();
    assert_eq!(frozen, w);
}

#[test]
fn overflow_reports_step_index() {
    let (arch, w) = two_neuron();
    let z = Sample::new(vec![1.0], -1e300);
    let err = sgd_step(&arch, &w, &z, &LossSpec::half_squared(), &Schedules::constant(2, 1.0), 1e10, 7).unwrap_err();
    assert!(matches!(err, Error::OverflowAtStep { step: 7 }), "{err:?}");
    assert!(sgd_step(&arch, &w, &z, &LossSpec::half_squared(), &Schedules::constant(2, 1.0), -0.1, 0).is_err());
}

fn teacher() -> DataModel<f64> {
    DataModel::synthetic(
        crate::model::Teacher::TanhLinear { weights: vec![3.0, -2.0] },
        crate::model::InputLaw::UniformCube { half_width: 1.0 },
        0.0,
        2,
    )
    .unwrap()
}

fn opts(eps: f64, steps: u64, log_every: u64) -> TrainOptions {
    TrainOptions { eps, steps, log_every, batch: BatchMode::Single, reduction: Reduction::Tree }
}

#[test]
fn zero_steps_return_init() {
    let arch = NetworkArch::standard(2, vec![4, 3, 1]).unwrap();
    let w = wavy(&arch, 2.0);
    let traj = train_finite(&arch, &w, &teacher(), &LossSpec::huber(1.0), &Schedules::constant(3, 1.0), &opts(0.1, 0, 1), RngState::new(1))
        .unwrap();
    assert_eq!(traj.snapshots.len(), 1);
    assert_eq!(traj.last().weights, w);
}

#[test]
fn training_is_deterministic_given_seed() {
    let arch = NetworkArch::standard(2, vec![5, 4, 1]).unwrap();
    let w = wavy(&arch, 3.0);
    let run = |seed| {
        train_finite(&arch, &w, &teacher(), &LossSpec::huber(1.0), &Schedules::constant(3, 1.0), &opts(0.05, 200, 50), RngState::new(seed))
            .unwrap()
    };
    let (a, b) = (run(9), run(9));
    assert_eq!(a, b);
    assert_eq!(a.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(), vec![0, 50, 100, 150, 200]);
    assert_ne!(a.last().weights, run(10).last().weights);
}

#[test]
fn single_sample_loss_is_non_increasing() {
    let arch = NetworkArch::standard(2, vec![5, 4, 1]).unwrap();
    let w = wavy(&arch, 0.5);
    let z = Sample::new(vec![0.6, -0.2], 0.8);
    let data = DataModel::finite(vec![z.clone()], 1.0).unwrap();
    let loss = LossSpec::huber(1.0);
    let traj = train_finite(&arch, &w, &data, &loss, &Schedules::constant(3, 1.0), &opts(1e-3, 100, 10), RngState::new(1)).unwrap();
    let values: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| loss.eval(z.y, forward_finite(&arch, &s.weights, &z.x).unwrap().0).unwrap().0)
        .collect();
    assert!(values.windows(2).all(|p| p[1] <= p[0]), "{values:?}");
    assert!(values.last() < values.first());
}

#[test]
fn full_batch_needs_a_finite_dataset() {
    let arch = NetworkArch::standard(2, vec![3, 1]).unwrap();
    let w = wavy(&arch, 0.0);
    let mut o = opts(0.1, 3, 1);
    o.batch = BatchMode::Full;
    let err = train_finite(&arch, &w, &teacher(), &LossSpec::huber(1.0), &Schedules::constant(2, 1.0), &o, RngState::new(1)).unwrap_err();
    assert!(matches!(err.error, Error::Config(_)));
    assert_eq!(err.partial.snapshots.len(), 1);
}

#[test]
fn interrupted_run_keeps_partial_log() {
    let arch = NetworkArch::standard(2, vec![3, 1]).unwrap();
    let w = wavy(&arch, 0.0);
    let data = DataModel::finite(vec![Sample::new(vec![1.0, 1.0], 1e250)], 2.0).unwrap();
    let err = train_finite(&arch, &w, &data, &LossSpec::half_squared(), &Schedules::constant(2, 1.0), &opts(1e60, 10, 1), RngState::new(1))
        .unwrap_err();
    assert!(err.error.is_overflow());
    assert!(!err.partial.snapshots.is_empty());
}

#[test]
fn permutation_equivariance() {
    let arch = NetworkArch::standard(2, vec![4, 3, 1]).unwrap();
    let w = wavy(&arch, 0.3);
    let perms = vec![vec![2, 0, 3, 1], vec![1, 2, 0], vec![0]];
    let pw = w.permute_neurons(&perms);
    let z = Sample::new(vec![0.3, -0.8], 0.1);
    let loss = LossSpec::huber(1.0);
    let a = backward_finite(&arch, &w, &z, &loss).unwrap();
    let b = backward_finite(&arch, &pw, &z, &loss).unwrap();
    assert!((a.yhat - b.yhat).abs() < 1e-15);
    assert!(a.delta_w.permute_neurons(&perms).max_abs_diff(&b.delta_w) < 1e-15);
}

#[test]
fn width_replication_invariance() {
    let arch = NetworkArch::standard(2, vec![3, 2, 1]).unwrap();
    let w = wavy(&arch, 0.9);
    // Duplicate every neuron of layer 1.
    let wide = arch.with_widths(vec![6, 2, 1]).unwrap();
    let w2 = Weights::from_fn(&wide, |i, r, c| match i {
        1 => w.layer(1)[(r % 3, c)],
        2 => w.layer(2)[(r % 3, c)],
        _ => w.layer(3)[(r, c)],
    });
    for x in [[0.1, 0.2], [-1.0, 0.7], [0.0, 0.0]] {
        let (a, _) = forward_finite(&arch, &w, &x).unwrap();
        let (b, _) = forward_finite(&wide, &w2, &x).unwrap();
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn single_precision_runs() {
    let arch = NetworkArch::standard(2, vec![4, 3, 1]).unwrap();
    let w: Weights<f32> = wavy(&arch, 0.1).cast();
    let z = Sample::new(vec![0.5f32, -0.25], 0.3);
    let next = sgd_step(&arch, &w, &z, &LossSpec::huber(1.0), &Schedules::constant(3, 1.0), 0.1f32, 0).unwrap();
    let reference = sgd_step(&arch, &wavy(&arch, 0.1), &Sample::new(vec![0.5, -0.25], 0.3), &LossSpec::huber(1.0), &Schedules::constant(3, 1.0), 0.1, 0)
        .unwrap();
    assert!(next.cast::<f64>().max_abs_diff(&reference) < 1e-5);
}
