use cliptts::blocks::ForwardCtx;
use cliptts::clip::{ClipLossKind, SpeechClipModel};
use cliptts::config::{AudioConfig, ModelConfig};
use cliptts::data::{gen_toy_corpus, make_batches, ToyCorpusSpec};
use cliptts::tensor::{adam_step, AdamConfig, LossKind, Tape};
use cliptts::text::PhonemeSequence;
use std::time::Instant;

#[test]
#[ignore]
fn profile_phases() {
    let audio = AudioConfig::default();
    let corpus = gen_toy_corpus(&ToyCorpusSpec::default(), &audio, 16).unwrap();
    let batch = make_batches(&corpus.utterances, 16, 3, 0).unwrap().remove(0);
    let cfg = ModelConfig::default();
    let model = SpeechClipModel::<f32>::new(&cfg, corpus.inventory.size(), ClipLossKind::SimMse, 0.07, 42).unwrap();
    let params = model.parameters();
    let total_params: usize = params.iter().map(|p| p.numel()).sum();
    println!("params: {} tensors, {} values", params.len(), total_params);
    let ctx = ForwardCtx::inference();

    // Forward only.
    let t = Instant::now();
    let tape = Tape::inference();
    for i in 0..batch.len() {
        let seq = PhonemeSequence::new(batch.item_phoneme_ids(i).to_vec(), "x")
            .unwrap()
            .with_durations(batch.durations[i].clone())
            .unwrap();
        let _ = model.text_encoder.encode(&tape, &seq, true, &ctx).unwrap();
        let mel = batch.item_mel_tensor::<f32>(i);
        let _ = model.mel_encoder.encode(&tape, &mel, &ctx).unwrap();
    }
    println!("forward (inference): {:.3}s", t.elapsed().as_secs_f64());

    // Forward recorded + backward.
    for p in &params {
        p.zero_grad();
    }
    let t = Instant::now();
    let tape = Tape::new();
    let mut losses = Vec::new();
    for i in 0..batch.len() {
        let seq = PhonemeSequence::new(batch.item_phoneme_ids(i).to_vec(), "x")
            .unwrap()
            .with_durations(batch.durations[i].clone())
            .unwrap();
        let te = model.text_encoder.encode(&tape, &seq, true, &ctx).unwrap();
        let mel = batch.item_mel_tensor::<f32>(i);
        let (_, pm) = model.mel_encoder.encode(&tape, &mel, &ctx).unwrap();
        losses.push(tape.loss(&te.pooled, &pm, LossKind::Mse).unwrap());
    }
    let refs: Vec<_> = losses.iter().collect();
    let loss = tape.mean_all(&tape.stack_rows(&refs).unwrap());
    let fwd = t.elapsed().as_secs_f64();
    let t = Instant::now();
    tape.backward(&loss).unwrap();
    let bwd = t.elapsed().as_secs_f64();
    println!("forward (recorded): {fwd:.3}s, backward: {bwd:.3}s");

    let t = Instant::now();
    adam_step(&params, 1e-4, &AdamConfig::default()).unwrap();
    println!("adam: {:.3}s", t.elapsed().as_secs_f64());
}
