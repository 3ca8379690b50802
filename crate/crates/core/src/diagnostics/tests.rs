use super::*;
use crate::embedding::{build_embedding, EmbeddingParams, InitScheme};
use crate::matrix::Matrix;
use crate::mf::{integrate_mf, IntegrateOptions, Scheme};
use crate::model::{ActivationKind, ActivationSpec, DataModel, LayerRole, Schedules};
use crate::net::{train_finite, BatchMode, TrainOptions};
use crate::rng::RngState;

fn linear_arch(d: usize, widths: Vec<usize>) -> NetworkArch {
    let depth = widths.len();
    let mut acts = vec![ActivationSpec::new(ActivationKind::Identity, LayerRole::Hidden); depth - 1];
    acts.push(ActivationSpec::identity_output());
    NetworkArch::new(d, widths, acts).unwrap()
}

fn ones(arch: &NetworkArch) -> Weights<f64> {
    Weights::from_fn(arch, |_, _, _| 1.0)
}

#[test]
fn huber_loss_on_single_sample() {
    let arch = linear_arch(1, vec![1, 1]);
    let w = ones(&arch);
    let panel = vec![Sample::new(vec![3.0], 0.0)];
    let v = population_loss(&NetView::finite(&arch, &w), &panel, &LossSpec::huber(1.0)).unwrap();
    assert_eq!(v, 2.5);
}

#[test]
fn teacher_matching_state_has_zero_loss_and_duplication_is_invisible() {
    let arch = linear_arch(1, vec![3, 2, 1]);
    let w = ones(&arch);
    let panel: Vec<Sample<f64>> = (0..5).map(|k| Sample::new(vec![k as f64 * 0.25], k as f64 * 0.25)).collect();
    let view = NetView::finite(&arch, &w);
    assert_eq!(population_loss(&view, &panel, &LossSpec::huber(1.0)).unwrap(), 0.0);
    let shifted: Vec<Sample<f64>> = panel.iter().map(|z| Sample::new(z.x.clone(), z.y + 0.5 + z.x[0])).collect();
    let doubled: Vec<Sample<f64>> = shifted.iter().chain(&shifted).cloned().collect();
    let a = population_loss(&view, &shifted, &LossSpec::huber(1.0)).unwrap();
    let b = population_loss(&view, &doubled, &LossSpec::huber(1.0)).unwrap();
    assert!((a - b).abs() <= 1e-15 * a, "{a} vs {b}");
    assert!(population_loss::<f64>(&view, &[], &LossSpec::huber(1.0)).is_err());
}

#[test]
fn weighted_l1_matches_hand_evaluation() {
    let arch = NetworkArch::standard(1, vec![3, 1]).unwrap();
    let w = Weights::from_layers(
        &arch,
        vec![Matrix::from_vec(3, 1, vec![0.5, -1.0, 2.0]).unwrap(), Matrix::from_vec(3, 1, vec![1.0, 2.0, -3.0]).unwrap()],
    )
    .unwrap();
    let wbar = Weights::from_layers(
        &arch,
        vec![Matrix::from_vec(3, 1, vec![0.0, -1.5, 2.5]).unwrap(), Matrix::from_vec(3, 1, vec![2.0, -1.0, 0.5]).unwrap()],
    )
    .unwrap();
    let got = weighted_l1(&NetView::finite(&arch, &w), &NetView::finite(&arch, &wbar)).unwrap();
    // mean(|w₁ − w̄₁|·|w̄₂|) = (0.5·2 + 0.5·1 + 0.5·0.5)/3
    let layer1: f64 = (0.5 * 2.0 + 0.5 * 1.0 + 0.5 * 0.5) / 3.0;
    let layer2: f64 = (1.0 + 3.0 + 3.5) / 3.0;
    assert!((got[0] - layer1).abs() < 1e-15);
    assert!((got[1] - layer2).abs() < 1e-15);
    let zero = weighted_l1(&NetView::finite(&arch, &w), &NetView::finite(&arch, &w)).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn weighted_l1_three_layers_uses_chain_weights() {
    let arch = NetworkArch::standard(2, vec![2, 2, 1]).unwrap();
    let w = Weights::from_fn(&arch, |i, r, c| (i * 7 + r * 3 + c) as f64 * 0.1);
    let wbar = Weights::from_fn(&arch, |i, r, c| ((i + r) as f64 - c as f64) * 0.3 - 0.2);
    let got = weighted_l1(&NetView::finite(&arch, &w), &NetView::finite(&arch, &wbar)).unwrap();
    let (w3, w2) = (wbar.layer(3), wbar.layer(2));
    let b2: Vec<f64> = (0..2).map(|r| w3[(r, 0)].abs()).collect();
    let b1: Vec<f64> = (0..2).map(|r| (0..2).map(|c| w2[(r, c)].abs() * b2[c]).sum::<f64>() / 2.0).collect();
    let mut l2 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            l2 += (w.layer(2)[(r, c)] - w2[(r, c)]).abs() * b2[c];
        }
    }
    let l1: f64 = (0..2)
        .map(|j| {
            let d: f64 = (0..2).map(|k| (w.layer(1)[(j, k)] - wbar.layer(1)[(j, k)]).powi(2)).sum();
            d.sqrt() * b1[j]
        })
        .sum::<f64>()
        / 2.0;
    assert!((got[0] - l1).abs() < 1e-14);
    assert!((got[1] - l2 / 4.0).abs() < 1e-14);
}

fn small_problem(arch: &NetworkArch, w: &Weights<f64>, xi: f64, matched: bool) -> MfProblem<f64> {
    let view = NetView::finite(arch, w);
    let panel: Vec<Sample<f64>> = (0..12)
        .map(|k| {
            let x = vec![(k as f64 * 0.37).sin(), (k as f64 * 0.91).cos()];
            let y = if matched { kernel::forward(&view, &x).yhat } else { (3.0 * x[0] - 2.0 * x[1]).tanh() };
            Sample::new(x, y)
        })
        .collect();
    MfProblem::new(panel, LossSpec::huber(1.0), Schedules::constant(arch.depth(), xi)).unwrap()
}

fn coupled(widths: Vec<usize>, seed: u64) -> (NetworkArch, crate::embedding::CoupledPair<f64>) {
    let arch = NetworkArch::standard(2, widths.clone()).unwrap();
    let emb = build_embedding(&arch, &EmbeddingParams::new(InitScheme::Bidiverse, seed)).unwrap();
    let codes = emb.sample_codes(&widths, RngState::new(seed + 1)).unwrap();
    (arch, emb.instantiate_coupled(&codes).unwrap())
}

#[test]
fn zero_drift_run_has_zero_esssup_and_final_reference_is_zero() {
    let (arch, pair) = coupled(vec![5, 4, 1], 3);
    let problem = small_problem(&arch, &pair.finite, 1.0, true);
    let opts = IntegrateOptions { h: 0.05, horizon: 0.5, scheme: Scheme::Rk4, checkpoint_every: 2 };
    let traj = integrate_mf(&pair.particles, &problem, &opts).unwrap();
    let recs = convergence_metrics(&traj, traj.last(), &problem).unwrap();
    assert!(recs.iter().all(|r| r.esssup_dwl == 0.0));

    let problem = small_problem(&arch, &pair.finite, 1.0, false);
    let traj = integrate_mf(&pair.particles, &problem, &opts).unwrap();
    let recs = convergence_metrics(&traj, traj.last(), &problem).unwrap();
    assert!(recs.last().unwrap().weighted_l1.iter().all(|&v| v == 0.0));
    assert!(recs[0].weighted_l1.iter().any(|&v| v > 0.0));
    assert!(recs.iter().all(|r| r.pop_loss >= 0.0 && r.esssup_dwl.is_finite()));
}

#[test]
fn coupling_full_batch_vs_euler_is_exact() {
    let (arch, pair) = coupled(vec![6, 5, 1], 7);
    let problem = small_problem(&arch, &pair.finite, 1.0, false);
    let data = DataModel::finite(problem.panel.clone(), 2.0).unwrap();
    let h = 0.05;
    let topts = TrainOptions { eps: h, steps: 20, log_every: 1, batch: BatchMode::Full, reduction: Reduction::Tree };
    let finite = train_finite(&arch, &pair.finite, &data, &problem.loss, &problem.schedules, &topts, RngState::new(0))
        .unwrap();
    let mopts = IntegrateOptions { h, horizon: 1.0, scheme: Scheme::Euler, checkpoint_every: 1 };
    let mf = integrate_mf(&pair.particles, &problem, &mopts).unwrap();
    let series = coupling_distance(&arch, &finite, &mf).unwrap();
    assert_eq!(series.distances[0], 0.0);
    assert_eq!(series.times.len(), 21);
    assert!(series.max() <= 1e-10, "{}", series.max());
}

#[test]
fn misaligned_grids_are_range_errors() {
    let (arch, pair) = coupled(vec![4, 3, 1], 2);
    let problem = small_problem(&arch, &pair.finite, 1.0, false);
    let data = DataModel::finite(problem.panel.clone(), 2.0).unwrap();
    let topts = TrainOptions { eps: 0.03, steps: 4, log_every: 1, batch: BatchMode::Full, reduction: Reduction::Tree };
    let finite = train_finite(&arch, &pair.finite, &data, &problem.loss, &problem.schedules, &topts, RngState::new(0))
        .unwrap();
    let mopts = IntegrateOptions { h: 0.05, horizon: 0.2, scheme: Scheme::Euler, checkpoint_every: 1 };
    let mf = integrate_mf(&pair.particles, &problem, &mopts).unwrap();
    assert!(matches!(coupling_distance(&arch, &finite, &mf), Err(Error::Range(_))));
}

#[test]
fn grad_check_linear_network_is_exact() {
    let arch = linear_arch(2, vec![3, 2, 1]);
    let w = Weights::from_fn(&arch, |i, r, c| 0.3 * i as f64 - 0.2 * r as f64 + 0.1 * c as f64);
    let z = Sample::new(vec![0.7, -0.4], 0.2);
    let rep = grad_check(&arch, &w, &z, &LossSpec::half_squared(), 1e-5).unwrap();
    assert!(rep.max_rel_error <= 1e-9, "{rep:?}");
}

#[test]
fn grad_check_tanh_network() {
    let arch = NetworkArch::standard(3, vec![4, 5, 3, 1]).unwrap();
    let w = Weights::from_fn(&arch, |i, r, c| ((i * 31 + r * 7 + c * 13) as f64).sin() * 1.5);
    let z = Sample::new(vec![0.5, -0.3, 0.8], -0.9);
    let rep = grad_check(&arch, &w, &z, &LossSpec::huber(1.0), 1e-5).unwrap();
    assert!(rep.max_rel_error <= 1e-5, "{rep:?}");
    assert_eq!(rep.checked, 4 * 3 + 4 * 5 + 5 * 3 + 3);
}

#[test]
fn grad_check_zero_gradient_sample() {
    let arch = NetworkArch::standard(2, vec![3, 1]).unwrap();
    let w = Weights::from_fn(&arch, |i, r, c| 0.4 * i as f64 - 0.3 * r as f64 + 0.2 * c as f64);
    let x = vec![0.2, 0.9];
    let (yhat, _) = forward_finite(&arch, &w, &x).unwrap();
    let rep = grad_check(&arch, &w, &Sample::new(x, yhat), &LossSpec::huber(1.0), 1e-5).unwrap();
    assert_eq!(rep.analytic, 0.0);
    assert!(rep.numeric.abs() < 1e-10);
}

#[test]
fn roundtrip_without_dynamics_is_exact() {
    let (arch, pair) = coupled(vec![4, 4, 1], 5);
    let problem = small_problem(&arch, &pair.finite, 0.0, false);
    let opts = IntegrateOptions { h: 0.1, horizon: 0.5, scheme: Scheme::Rk4, checkpoint_every: 1 };
    let traj = integrate_mf(&pair.particles, &problem, &opts).unwrap();
    for layer in [1, 2] {
        let probes: Vec<AuxPairState<f64>> =
            (0..3).map(|k| AuxPairState::from_particle(traj.first(), layer, k).unwrap()).collect();
        let errs = diversity_roundtrip(&traj, &problem, &probes, None).unwrap();
        assert!(errs.iter().all(|&e| e == 0.0));
    }
}

#[test]
fn preactivation_gap_vanishes_on_identical_states() {
    let (arch, pair) = coupled(vec![4, 4, 1], 5);
    let problem = small_problem(&arch, &pair.finite, 1.0, false);
    let v = NetView::finite(&arch, &pair.finite);
    assert_eq!(output_preactivation_gap(&v, &v, &problem.panel).unwrap(), 0.0);
    let moved = pair.finite.map(|x| x * 1.1);
    let g = output_preactivation_gap(&v, &NetView::finite(&arch, &moved), &problem.panel).unwrap();
    assert!(g > 0.0);
}
