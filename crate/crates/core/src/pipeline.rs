//! Glue between the dataset, the feature extractor and the translator.

use std::path::Path;

use crate::error::Result;
use crate::lang::{Signal, Vocab};
use crate::model::{ModelConfig, Pgae};
use crate::numerics::{grad_check, GradCheckReport, Parameterized, RngStream};
use crate::synth::dataset::{read_features, to_episodes, Dataset};
use crate::synth::pattern::ActionType;
use crate::synth::Viewpoint;
use crate::task::{build_task_io, task_loss, task_loss_grad, word_weights, Episode, TaskIO};
use crate::vision::FeatureBank;

/// Episodes for `indices`, with features from an in-memory bank.
pub fn episodes_from_bank(ds: &Dataset, indices: &[usize], bank: &FeatureBank) -> Result<Vec<Episode>> {
    let samples: Vec<_> = indices.iter().map(|&i| &ds.samples[i]).collect();
    to_episodes(&samples, |s, v| Ok(bank.get(s, v)))
}

/// Episodes for `indices`, with features read from a dataset directory.
pub fn episodes_from_disk(root: &Path, ds: &Dataset, indices: &[usize]) -> Result<Vec<Episode>> {
    let samples: Vec<_> = indices.iter().map(|&i| &ds.samples[i]).collect();
    to_episodes(&samples, |s, v| read_features(root, &s.id(), v))
}

/// Word weights from the training descriptions (each followed by EOS).
pub fn training_word_weights(vocab: &Vocab, episodes: &[Episode]) -> Result<Vec<f64>> {
    let targets = episodes
        .iter()
        .map(|e| vocab.target(&e.description))
        .collect::<Result<Vec<_>>>()?;
    Ok(word_weights(&targets, vocab.len()))
}

/// The first sample of each of the 12 motor actions.
pub fn micro_set(ds: &Dataset) -> Vec<usize> {
    let mut picked = vec![None; ActionType::COUNT];
    for (i, s) in ds.samples.iter().enumerate() {
        let a = s.pattern.action().index();
        if picked[a].is_none() {
            picked[a] = Some(i);
        }
    }
    picked.into_iter().flatten().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalCheck {
    pub signal: Signal,
    pub report: GradCheckReport,
}

/// Central-difference check of the full composite loss for every signal on
/// a reduced model fed a 6-step subsample of a real trajectory.
pub fn gradcheck_signals(ds: &Dataset, hidden: usize, probes: usize, seed: u64) -> Result<Vec<SignalCheck>> {
    const STEPS: usize = 6;
    const PARAM_SCALE: f64 = 1.0;
    let config = ModelConfig {
        hidden,
        ..ModelConfig::default()
    };
    let mut rng = RngStream::new(seed);
    let sample = &ds.samples[rng.below(ds.samples.len())];
    // Evenly spaced rows span the whole motion; the first few rows alone sit
    // so close to the home pose that their gradients drown in round-off.
    let m = sample.len();
    let mut vis = || -> Vec<Vec<f64>> {
        (0..STEPS)
            .map(|_| (0..config.vis_dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect()
    };
    let ep = Episode {
        id: sample.id(),
        description: sample.text(),
        joints: (0..STEPS).map(|k| sample.joints[k * (m - 1) / (STEPS - 1)].clone()).collect(),
        vis_self: vis(),
        vis_opposite: Some(vis()),
    };
    let vocab = Vocab::default();
    let weights = training_word_weights(&vocab, std::slice::from_ref(&ep))?;
    let mut out = Vec::new();
    for signal in Signal::ALL {
        // Every tensor, peepholes and biases included, gets nonzero values so
        // that no path is trivially idle.
        let mut model = Pgae::<f64>::zeros(config);
        for t in model.params_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-PARAM_SCALE, PARAM_SCALE));
        }
        let view = if signal.index() % 2 == 0 { Viewpoint::Own } else { Viewpoint::Opposite };
        let io: TaskIO<f64> = build_task_io(&vocab, &ep, signal, view)?;
        let mut grads = Pgae::zeros(config);
        task_loss_grad(&model, &io, &weights, 1.0, 1.0, &mut grads)?;
        let report = grad_check(
            &mut model,
            &grads,
            |m: &Pgae<f64>| task_loss(m, &io, &weights, 1.0, 1.0).map(|p| p.total),
            probes,
            1e-5,
            &mut rng,
        )?;
        out.push(SignalCheck { signal, report });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::dataset::{build_dataset, DatasetConfig};

    #[test]
    fn micro_set_has_one_sample_per_action() {
        let ds = build_dataset(DatasetConfig::default()).unwrap();
        let m = micro_set(&ds);
        assert_eq!(m.len(), 12);
        let mut actions: Vec<usize> = m.iter().map(|&i| ds.samples[i].pattern.action().index()).collect();
        actions.sort();
        assert_eq!(actions, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn composite_gradients_match_for_every_signal() {
        let ds = build_dataset(DatasetConfig::default()).unwrap();
        let checks = gradcheck_signals(&ds, 8, 120, 0).unwrap();
        assert_eq!(checks.len(), 5);
        for c in checks {
            assert!(c.report.max_rel_error < 1e-4, "{}: {:?}", c.signal, c.report.worst);
        }
    }
}
