//! Temporary tuning harness (ignored): sweeps schedule settings for the
//! overfit experiments at the default model size.

use cliptts::clip::{train_clip_step, ClipLossKind, SpeechClipModel, TrainerState};
use cliptts::config::{AudioConfig, ModelConfig, TrainConfig};
use cliptts::data::{gen_toy_corpus, make_batches, ToyCorpusSpec};
use cliptts::tensor::LrSchedule;

#[test]
#[ignore]
fn tune_clip_overfit() {
    let audio = AudioConfig::default();
    let corpus = gen_toy_corpus(&ToyCorpusSpec::default(), &audio, 16).unwrap();
    let batch = make_batches(&corpus.utterances, 16, 3, 0).unwrap().remove(0);
    let cfg = ModelConfig::default();
    let tc = TrainConfig::default();

    for (warmup, scale) in [(200u64, 1.0f64), (100, 1.0), (200, 2.0)] {
        let t0 = std::time::Instant::now();
        let model = SpeechClipModel::<f32>::new(
            &cfg,
            corpus.inventory.size(),
            ClipLossKind::SimMse,
            tc.infonce_temperature,
            42,
        )
        .unwrap();
        let mut st = TrainerState::new(
            LrSchedule::new(cfg.d_model, warmup, scale).unwrap(),
            tc.adam,
            1.0,
            7,
        );
        for step in 0..200u32 {
            let m = train_clip_step(&model, &batch, &mut st).unwrap();
            if (step + 1) % 25 == 0 {
                println!(
                    "w={warmup} s={scale} step {:3}: loss {:.4} diag {:.3} offdiag {:.3} durloss {:.4} lr {:.2e}",
                    step + 1,
                    m.loss,
                    m.diag_mean,
                    m.offdiag_mean,
                    m.duration_loss,
                    m.lr
                );
            }
        }
        println!("w={warmup} s={scale}: {:.1}s for 200 steps", t0.elapsed().as_secs_f64());
    }
}
