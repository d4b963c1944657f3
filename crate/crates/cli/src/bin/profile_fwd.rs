// scratch profiling harness; not part of the deliverable
use std::time::Instant;

use steerviz::decoder::TrainMode;
use steerviz::model::{ModelConfig, SteeringModel};
use steerviz::preprocess::ProcessedFrame;
use steerviz::tensor::{Tape, Tensor};

fn main() {
    let cfg = ModelConfig::desk_scale();
    let model = SteeringModel::init(cfg.clone(), 1).unwrap();
    let frames: Vec<ProcessedFrame> = (0..20)
        .map(|i| ProcessedFrame {
            pixels: (0..40 * 80 * 3)
                .map(|k| ((k * 2654435761 + i * 97) % 1000) as f32 / 1000.0)
                .collect(),
            h: 40,
            w: 80,
            index: i,
            timestamp: i as f64 * 0.05,
            u_target: 0.01,
            v_smooth: 23.0,
        })
        .collect();

    // forward only
    let t0 = Instant::now();
    let reps = 10;
    for _ in 0..reps {
        let fwd = model.window_forward(&frames, &mut TrainMode::Inference).unwrap();
        std::hint::black_box(fwd.tape.value(fwd.u_hats[19]).item());
    }
    let fwd_ms = t0.elapsed().as_secs_f64() * 1000.0 / reps as f64;
    println!("window forward: {fwd_ms:.1} ms ({:.2} ms/frame)", fwd_ms / 20.0);

    // forward + backward
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut fwd = model.window_forward(&frames, &mut TrainMode::Inference).unwrap();
        let targets = fwd.tape.leaf(Tensor::new(vec![20], vec![0.01; 20]).unwrap());
        let loss = steerviz::training::loss_on_tape(
            &mut fwd.tape,
            targets,
            &fwd.u_hats,
            &fwd.alphas,
            &steerviz::training::LossConfig::default(),
        )
        .unwrap();
        let grads = fwd.tape.backward(loss, &Tensor::scalar(1.0)).unwrap();
        std::hint::black_box(grads.get(fwd.param_ids["dec.lstm.wx"]));
    }
    let both_ms = t0.elapsed().as_secs_f64() * 1000.0 / reps as f64;
    println!(
        "forward+backward: {both_ms:.1} ms (backward {:.1} ms)",
        both_ms - fwd_ms
    );

    // encoder alone
    let mut tape = Tape::single();
    let ids = model.params.leaves(&mut tape);
    let input = tape.leaf(frames[0].to_tensor());
    let t0 = Instant::now();
    for _ in 0..200 {
        let mut t = Tape::single();
        let ids2 = model.params.leaves(&mut t);
        let inp = t.leaf(frames[0].to_tensor());
        let cube = steerviz::encoder::encode_on_tape(&mut t, inp, &ids2, &cfg.encoder).unwrap();
        std::hint::black_box(t.value(cube).data()[0]);
    }
    println!("encode (incl leaves): {:.3} ms", t0.elapsed().as_secs_f64() * 5.0);
    let _ = (ids, input);
}
