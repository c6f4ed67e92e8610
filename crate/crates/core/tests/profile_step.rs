use cliptts::clip::{train_clip_step, ClipLossKind, SpeechClipModel, TrainerState};
use cliptts::config::{AudioConfig, ModelConfig, TrainConfig};
use cliptts::data::{gen_toy_corpus, make_batches, ToyCorpusSpec};
use cliptts::tensor::LrSchedule;
use std::time::Instant;

#[test]
#[ignore]
fn profile_one_step() {
    let audio = AudioConfig::default();
    let corpus = gen_toy_corpus(&ToyCorpusSpec::default(), &audio, 16).unwrap();
    let batch = make_batches(&corpus.utterances, 16, 3, 0).unwrap().remove(0);
    let total_frames: usize = (0..batch.len()).map(|i| batch.mel_len(i)).sum();
    println!("batch: {} items, {} total mel frames", batch.len(), total_frames);
    let cfg = ModelConfig::default();
    let tc = TrainConfig::default();
    let t0 = Instant::now();
    let model = SpeechClipModel::<f32>::new(
        &cfg,
        corpus.inventory.size(),
        ClipLossKind::SimMse,
        0.07,
        42,
    )
    .unwrap();
    println!("model build: {:.2}s", t0.elapsed().as_secs_f64());
    let mut st = TrainerState::new(LrSchedule::new(256, 200, 1.0).unwrap(), tc.adam, 1.0, 7);
    for i in 0..3 {
        let t = Instant::now();
        let m = train_clip_step(&model, &batch, &mut st).unwrap();
        println!("step {i}: {:.2}s loss {:.4}", t.elapsed().as_secs_f64(), m.loss);
    }
}
