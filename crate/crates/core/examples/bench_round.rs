//! Times forward+backward of the joint model at the default configuration.

use std::time::Instant;

use coopseg::arch::{build_model, ArchConfig, Session};
use coopseg::engine::{BnMode, Graph, Reduction, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> coopseg::Result<()> {
    let cfg = ArchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = build_model::<f32, _>(&cfg, &mut rng)?;
    println!("parameters: {}", model.param_count());
    let hw = cfg.input_hw;
    for &(batch, seg) in &[(32usize, false), (4, true)] {
        let x = Tensor::from_fn([batch, 3, hw, hw], |_| rng.random_range(-1.0f32..1.0));
        for rep in 0..3 {
            let t0 = Instant::now();
            let mut g = Graph::new();
            let mut s = Session::new(&mut g, &model, BnMode::Train);
            let input = s.g.input(x.clone());
            let taps = s.trunk(input)?;
            let loss = if seg {
                let logits = s.decoder(&taps)?;
                let labels = vec![0usize; batch * hw * hw];
                s.g.softmax_cross_entropy(logits, &labels, Reduction::PerPixelMean)?
            } else {
                let logits = s.classifier(&taps)?;
                let labels = vec![0usize; batch];
                s.g.softmax_cross_entropy(logits, &labels, Reduction::PerSampleMean)?
            };
            drop(s);
            let t1 = Instant::now();
            g.backward(loss)?;
            let t2 = Instant::now();
            println!(
                "batch {batch} {} rep {rep}: forward {:.3}s backward {:.3}s nodes {}",
                if seg { "seg" } else { "clf" },
                (t1 - t0).as_secs_f64(),
                (t2 - t1).as_secs_f64(),
                g.len()
            );
        }
    }
    Ok(())
}
