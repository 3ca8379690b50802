use mflab_core::diagnostics::{coupling_distance, grad_check};
use mflab_core::mf::{integrate_mf, IntegrateOptions, MfProblem, ParticleSystem, Scheme};
use mflab_core::model::{DataModel, LossSpec, Sample, Schedules};
use mflab_core::net::{backward_finite, sgd_step, train_finite, BatchMode, NetworkArch, TrainOptions, Weights};
use mflab_core::reduce::Reduction;
use mflab_core::rng::RngState;
use proptest::prelude::*;

fn net() -> impl Strategy<Value = (NetworkArch, Weights<f64>, Sample<f64>)> {
    (1usize..4, prop::collection::vec(1usize..6, 1..3)).prop_flat_map(|(d, hidden)| {
        let mut widths = hidden.clone();
        widths.push(1);
        let arch = NetworkArch::standard(d, widths).unwrap();
        let count: usize = Weights::<f64>::zeros(&arch).layers().iter().map(|m| m.as_slice().len()).sum();
        (
            Just(arch),
            prop::collection::vec(-1.5f64..1.5, count),
            prop::collection::vec(-1.0f64..1.0, d),
            -2.0f64..2.0,
        )
            .prop_map(|(arch, flat, x, y)| {
                let mut it = flat.into_iter();
                let w = Weights::from_fn(&arch, |_, _, _| it.next().unwrap());
                (arch, w, Sample::new(x, y))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaled_backward_pass_is_the_gradient((arch, w, z) in net()) {
        let report = grad_check(&arch, &w, &z, &LossSpec::huber(1.0), 1e-6).unwrap();
        prop_assert!(report.max_rel_error <= 1e-5, "{report:?}");
    }

    #[test]
    fn sgd_commutes_with_neuron_permutations((arch, w, z) in net(), seed in any::<u64>()) {
        let mut gen = seed;
        let perms: Vec<Vec<usize>> = arch.widths().iter().map(|&n| {
            let mut p: Vec<usize> = (0..n).collect();
            for j in (1..n).rev() {
                gen = mflab_core::rng::mix64(gen);
                p.swap(j, (gen % (j as u64 + 1)) as usize);
            }
            p
        }).collect();
        let loss = LossSpec::huber(1.0);
        let sched = Schedules::constant(arch.depth(), 1.0);
        let a = sgd_step(&arch, &w, &z, &loss, &sched, 0.1, 0).unwrap().permute_neurons(&perms);
        let b = sgd_step(&arch, &w.permute_neurons(&perms), &z, &loss, &sched, 0.1, 0).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-13);
    }

    #[test]
    fn replicating_neurons_preserves_the_output((arch, w, z) in net(), copies in 2usize..4) {
        let widths: Vec<usize> = arch.widths().iter().enumerate()
            .map(|(i, &n)| if i + 1 < arch.depth() { n * copies } else { n }).collect();
        let wide = arch.with_widths(widths).unwrap();
        let depth = arch.depth();
        let src = |i: usize, k: usize| if i < depth { k % arch.width(i) } else { k };
        let w2 = Weights::from_fn(&wide, |i, r, c| {
            if i == 1 { w.layer(1)[(src(1, r), c)] } else { w.layer(i)[(src(i - 1, r), src(i, c))] }
        });
        let a = backward_finite(&arch, &w, &z, &LossSpec::huber(1.0)).unwrap();
        let b = backward_finite(&wide, &w2, &z, &LossSpec::huber(1.0)).unwrap();
        prop_assert!((a.yhat - b.yhat).abs() <= 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn full_batch_training_is_the_euler_flow((arch, w, _) in net(), ys in prop::collection::vec(-1.0f64..1.0, 5)) {
        let d = arch.input_dim();
        let panel: Vec<Sample<f64>> = ys.iter().enumerate()
            .map(|(k, &y)| Sample::new((0..d).map(|j| ((k * 3 + j) as f64).sin() * 0.9).collect(), y))
            .collect();
        let loss = LossSpec::huber(1.0);
        let sched = Schedules::constant(arch.depth(), 1.0);
        let opts = TrainOptions { eps: 0.05, steps: 20, log_every: 5, batch: BatchMode::Full, reduction: Reduction::Tree };
        let data = DataModel::finite(panel.clone(), d as f64).unwrap();
        let fin = train_finite(&arch, &w, &data, &loss, &sched, &opts, RngState::new(0)).unwrap();
        let problem = MfProblem::new(panel, loss, sched).unwrap();
        let ps = ParticleSystem::new(arch.clone(), w, 0.0).unwrap();
        let mf = integrate_mf(&ps, &problem, &IntegrateOptions { h: 0.05, horizon: 1.0, scheme: Scheme::Euler, checkpoint_every: 5 }).unwrap();
        let series = coupling_distance(&arch, &fin, &mf).unwrap();
        prop_assert_eq!(series.max(), 0.0);
    }
}
