//! Paired-seed comparison of training with and without the abstraction
//! codebook and its Dirichlet mixup, scored on held-out drawings spanning
//! the whole abstraction continuum.
//!
//! cargo run --release --example ablation -- [seeds] [epochs]

use sketchclip::train::OverlapBenchmark;

fn main() -> sketchclip::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(5, |a| a.parse().expect("seeds"));
    let mut bench = OverlapBenchmark::default();
    if let Some(e) = args.next() {
        bench.config.epochs = e.parse().expect("epochs");
    }
    let mut deltas = Vec::new();
    for seed in 0..seeds {
        let run = bench.paired(seed)?;
        println!(
            "seed {seed}: with {:6.2}%  without {:6.2}%  delta {:+.2}",
            run.with_mixup,
            run.without,
            run.delta()
        );
        deltas.push(run.delta());
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    println!("mean delta {mean:+.2} points over {seeds} seeds");
    Ok(())
}
