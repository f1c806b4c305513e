//! Regression-aware Wasserstein GAN over joint `[x, y]` rows.
//!
//! The generator maps Gaussian noise to rows in `[0, 1]^{d+1}`. The critic
//! and a regressor share a one-layer trunk over `x`; the regressor's squared
//! error on real and generated rows enters both the critic-side objective
//! and the generator objective, pulling generated labels toward the
//! regression surface. Turning sharing and both regression terms off leaves
//! a plain WGAN-GP.

mod checkpoint;
mod config;
mod loss;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::GanConfig;
pub use loss::{
    critic_regressor_loss, generator_loss, objective_gradients, objective_value, regressor_loss,
    CriticBatch, CriticTerms, GeneratorBatch, GeneratorTerms, Objective,
};
pub use model::{BoundModel, RganModel, HIDDEN, REGRESSOR_HIDDEN};
pub use train::{
    generate, generate_like, pretrain_regressor, train, train_from, TraceRecord, TrainTrace,
    TRACE_HEADER,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_make, NormalizationSpec, Provenance, TabularDataset};
    use crate::numeric::{Matrix, Parameters, SeededRng};

    fn toy_data(n: usize, seed: u64) -> TabularDataset {
        let ds = synth_make("sinusoid-2d", n, 0.0, seed).unwrap();
        NormalizationSpec::fit(&ds).unwrap().apply(&ds).unwrap()
    }

    fn quick(iterations: usize) -> GanConfig {
        GanConfig { iterations, pretrain_epochs: 5, batch: 8, seed: 3, ..Default::default() }
    }

    #[test]
    fn zero_iterations_returns_the_pretrained_model() {
        let data = toy_data(20, 1);
        let cfg = quick(0);
        let (model, trace) = train(&data, &cfg).unwrap();
        let mut expected = RganModel::new(2, &cfg);
        pretrain_regressor(&mut expected, &data, &cfg).unwrap();
        assert_eq!(model, expected);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn wgan_gp_mode_skips_pretraining() {
        let data = toy_data(20, 1);
        let cfg = quick(0).wgan_gp();
        let (model, trace) = train(&data, &cfg).unwrap();
        assert_eq!(model, RganModel::new(2, &cfg));
        assert!(trace.pretrain_initial_mse.is_none() && trace.pretrain_mse.is_empty());
    }

    #[test]
    fn zero_pretrain_epochs_change_nothing() {
        let data = toy_data(20, 1);
        let cfg = GanConfig { pretrain_epochs: 0, ..quick(0) };
        let mut model = RganModel::new(2, &cfg);
        let before = model.clone();
        let (_, epochs) = pretrain_regressor(&mut model, &data, &cfg).unwrap();
        assert!(epochs.is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn pretraining_lowers_the_regression_error() {
        let data = toy_data(50, 2);
        let cfg = GanConfig { pretrain_epochs: 200, ..Default::default() };
        let mut model = RganModel::new(2, &cfg);
        let (initial, epochs) = pretrain_regressor(&mut model, &data, &cfg).unwrap();
        assert!(*epochs.last().unwrap() < initial);
    }

    #[test]
    fn pretraining_fits_constant_labels() {
        let data = toy_data(40, 3);
        let data = TabularDataset::unnamed(data.features().clone(), vec![0.5; 40], Provenance::Real).unwrap();
        let cfg = GanConfig::default();
        let mut model = RganModel::new(2, &cfg);
        let (_, epochs) = pretrain_regressor(&mut model, &data, &cfg).unwrap();
        assert!(*epochs.last().unwrap() < 1e-3, "MSE {}", epochs.last().unwrap());
    }

    #[test]
    fn same_seed_same_trace() {
        let data = toy_data(20, 4);
        let (m1, t1) = train(&data, &quick(15)).unwrap();
        let (m2, t2) = train(&data, &quick(15)).unwrap();
        assert_eq!(m1, m2);
        let strip = |t: &TrainTrace| t.records.iter().map(|r| (r.critic_loss, r.generator_loss, r.regression_loss, r.wasserstein)).collect::<Vec<_>>();
        assert_eq!(strip(&t1), strip(&t2));
        assert_eq!(t1.records.len(), 15);
        assert!(t1.records.windows(2).all(|w| w[1].iteration == w[0].iteration + 1));
    }

    #[test]
    fn generated_rows_stay_in_the_unit_cube() {
        let data = toy_data(20, 5);
        let (model, _) = train(&data, &quick(10)).unwrap();
        let batch = generate(&model, 500, 9).unwrap();
        assert_eq!(batch.len(), 500);
        assert_eq!(batch.dim(), 2);
        assert_eq!(batch.provenance(), Provenance::Generated);
        assert!(batch.joint().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn generation_is_seeded_and_prefix_stable() {
        let model = RganModel::new(3, &GanConfig::default());
        assert_eq!(generate(&model, 0, 1).unwrap().len(), 0);
        let a = generate(&model, 100, 7).unwrap();
        let b = generate(&model, 1000, 7).unwrap();
        assert_eq!(a.joint().as_slice(), &b.joint().as_slice()[..400]);
        assert_eq!(a.joint(), generate(&model, 100, 7).unwrap().joint());
    }

    #[test]
    fn critic_step_leaves_the_generator_alone_and_vice_versa() {
        let data = toy_data(20, 6);
        let cfg = quick(1);
        let mut model = RganModel::new(2, &cfg);
        pretrain_regressor(&mut model, &data, &cfg).unwrap();
        let mut rng = SeededRng::new(2);
        let real = data.joint().select_rows(&[0, 1, 2, 3]);
        let noise = crate::numeric::gaussian_noise(4, 8, &mut rng);
        let fake = model.generate_joint(&noise).unwrap();
        let batch = CriticBatch { real: real.clone(), fake, mu: vec![0.3, 0.6, 0.1, 0.9] };
        let (_, grads) = objective_gradients(&model, Objective::Critic(&batch), &cfg).unwrap();
        assert!(grads[0].iter().all(|g| g.as_slice().iter().all(|&v| v == 0.0)));
        assert!(grads[1..].iter().any(|n| n.iter().any(|g| g.as_slice().iter().any(|&v| v != 0.0))));

        let gb = GeneratorBatch { noise, real };
        let (_, grads) = objective_gradients(&model, Objective::Generator(&gb), &cfg).unwrap();
        assert!(grads[0].iter().any(|g| g.as_slice().iter().any(|&v| v != 0.0)));

        // A full training round with the generator optimizer only touching generator weights.
        let before = model.clone();
        let (after, _) = train_from(before.clone(), &data, &GanConfig { pretrain_epochs: 0, n_critic: 1, ..cfg.clone() }).unwrap();
        assert_ne!(after.generator.checksum(), before.generator.checksum());
        assert_ne!(after.critic_head.checksum(), before.critic_head.checksum());
    }

    #[test]
    fn regression_only_step_moves_the_shared_trunk() {
        let data = toy_data(20, 7);
        let cfg = quick(1);
        let model = RganModel::new(2, &cfg);
        let real = data.joint().select_rows(&[0, 1, 2, 3, 4]);
        let fake = data.joint().select_rows(&[5, 6, 7, 8, 9]);
        let (_, grads) = objective_gradients(&model, Objective::Regressor { real: &real, fake: &fake }, &cfg).unwrap();
        let trunk = &grads[1];
        assert!(trunk.iter().any(|g| g.as_slice().iter().any(|&v| v != 0.0)));
        let mut stepped = model.clone();
        let mut opt = crate::numeric::AdamState::new(Default::default(), &stepped.critic_trunk.tensors());
        opt.step(&mut stepped.critic_trunk.tensors_mut(), trunk).unwrap();
        assert_ne!(stepped.critic_trunk.checksum(), model.critic_trunk.checksum());

        let split = RganModel::new(2, &GanConfig { share_trunk: false, ..cfg });
        let (_, grads) = objective_gradients(&split, Objective::Regressor { real: &real, fake: &fake }, &GanConfig::default()).unwrap();
        assert!(grads[1].iter().all(|g| g.as_slice().iter().all(|&v| v == 0.0)));
        assert!(grads[2].iter().any(|g| g.as_slice().iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn unshared_regressor_is_frozen_after_pretraining() {
        let data = toy_data(20, 8);
        let cfg = GanConfig { share_trunk: false, ..quick(0) };
        let (pretrained, _) = train(&data, &cfg).unwrap();
        let (trained, _) = train(&data, &GanConfig { iterations: 5, ..cfg }).unwrap();
        assert_eq!(pretrained.regressor_trunk, trained.regressor_trunk);
        assert_eq!(pretrained.regressor_head, trained.regressor_head);
        assert_ne!(pretrained.critic_trunk, trained.critic_trunk);
    }

    #[test]
    fn trace_csv_has_no_clock_column() {
        let data = toy_data(12, 9);
        let (_, trace) = train(&data, &quick(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        trace.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACE_HEADER.join(","));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn divergence_carries_the_trace_prefix() {
        let data = toy_data(12, 10);
        let cfg = GanConfig { learning_rate: 1e300, ..quick(50) };
        match train(&data, &cfg) {
            Err(crate::Error::Divergence { trace, .. }) => {
                let t = trace.expect("trace attached");
                assert!(t.records.len() < 50);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    fn naive_leaky(v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            0.01 * v
        }
    }

    fn naive_leaky_slope(v: f64) -> f64 {
        if v > 0.0 {
            1.0
        } else {
            0.01
        }
    }

    /// Critic score and its gradient with respect to `[x, y]` for one row,
    /// written out by hand for the trunk → 33 → 32 → 1 critic.
    fn hand_critic(model: &RganModel, row: &[f64]) -> (f64, Vec<f64>) {
        let d = row.len() - 1;
        let t = &model.critic_trunk.layers()[0];
        let h1 = &model.critic_head.layers()[0];
        let h2 = &model.critic_head.layers()[1];
        let pre_t: Vec<f64> = (0..t.out_dim())
            .map(|j| t.bias.get(0, j) + (0..d).map(|i| row[i] * t.weight.get(i, j)).sum::<f64>())
            .collect();
        let mut c: Vec<f64> = pre_t.iter().map(|&v| naive_leaky(v)).collect();
        c.push(row[d]);
        let pre_h: Vec<f64> = (0..h1.out_dim())
            .map(|j| h1.bias.get(0, j) + (0..c.len()).map(|i| c[i] * h1.weight.get(i, j)).sum::<f64>())
            .collect();
        let out = h2.bias.get(0, 0) + (0..pre_h.len()).map(|j| naive_leaky(pre_h[j]) * h2.weight.get(j, 0)).sum::<f64>();
        let d_pre_h: Vec<f64> = (0..pre_h.len()).map(|j| h2.weight.get(j, 0) * naive_leaky_slope(pre_h[j])).collect();
        let d_c: Vec<f64> = (0..c.len()).map(|i| (0..pre_h.len()).map(|j| d_pre_h[j] * h1.weight.get(i, j)).sum()).collect();
        let mut grad: Vec<f64> = (0..d)
            .map(|i| (0..pre_t.len()).map(|j| d_c[j] * naive_leaky_slope(pre_t[j]) * t.weight.get(i, j)).sum())
            .collect();
        grad.push(d_c[pre_t.len()]);
        (out, grad)
    }

    #[test]
    fn wgan_gp_mode_matches_a_hand_coded_critic_loss() {
        let cfg = GanConfig { seed: 11, ..GanConfig::default() }.wgan_gp();
        let model = RganModel::new(3, &cfg);
        let mut rng = SeededRng::new(12);
        for _ in 0..5 {
            let n = 6;
            let real = Matrix::from_vec(n, 4, (0..4 * n).map(|_| rng.uniform()).collect()).unwrap();
            let fake = Matrix::from_vec(n, 4, (0..4 * n).map(|_| rng.uniform()).collect()).unwrap();
            let mu: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let batch = CriticBatch { real: real.clone(), fake: fake.clone(), mu: mu.clone() };
            let ours = objective_value(&model, Objective::Critic(&batch), &cfg).unwrap();
            let mut expected = 0.0;
            for r in 0..n {
                let (dr, _) = hand_critic(&model, real.row(r));
                let (df, _) = hand_critic(&model, fake.row(r));
                let interp: Vec<f64> = real.row(r).iter().zip(fake.row(r)).map(|(a, b)| mu[r] * a + (1.0 - mu[r]) * b).collect();
                let (_, g) = hand_critic(&model, &interp);
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                expected += (-dr + df + cfg.gp_weight * (norm - 1.0).powi(2)) / n as f64;
            }
            assert!((ours - expected).abs() < 1e-10, "{ours} vs {expected}");
        }
    }

    fn max_relative_fd_error(model: &RganModel, objective: Objective, cfg: &GanConfig) -> f64 {
        let (_, grads) = objective_gradients(model, objective, cfg).unwrap();
        let mut probe = model.clone();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (n, net_grads) in grads.iter().enumerate() {
            for (t, grad) in net_grads.iter().enumerate() {
                for k in (0..grad.len()).step_by(7) {
                    let orig = probe.nets()[n].tensors()[t].as_slice()[k];
                    let mut eval = |v: f64| {
                        probe.nets_mut()[n].tensors_mut()[t].as_mut_slice()[k] = v;
                        objective_value(&probe, objective, cfg).unwrap()
                    };
                    let fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                    probe.nets_mut()[n].tensors_mut()[t].as_mut_slice()[k] = orig;
                    let an = grad.as_slice()[k];
                    let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
                    worst = worst.max(err);
                }
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = GanConfig { seed: 5, ..Default::default() };
        let model = RganModel::new(2, &cfg);
        let mut rng = SeededRng::new(21);
        let real = Matrix::from_vec(4, 3, (0..12).map(|_| rng.uniform()).collect()).unwrap();
        let noise = crate::numeric::gaussian_noise(4, 8, &mut rng);
        let fake = model.generate_joint(&noise).unwrap();
        let batch = CriticBatch { real: real.clone(), fake: fake.clone(), mu: vec![0.2, 0.4, 0.6, 0.8] };
        let gb = GeneratorBatch { noise, real: real.clone() };
        assert!(max_relative_fd_error(&model, Objective::Critic(&batch), &cfg) < 1e-4);
        assert!(max_relative_fd_error(&model, Objective::Generator(&gb), &cfg) < 1e-4);
        assert!(max_relative_fd_error(&model, Objective::Regressor { real: &real, fake: &fake }, &cfg) < 1e-4);
    }
}
