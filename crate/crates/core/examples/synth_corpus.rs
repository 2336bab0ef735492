//! Emit a synthetic demo corpus as JSON lines on stdout.
//!
//! Usage: `cargo run -p apres-core --example synth_corpus -- [N] [SEED] > corpus.jsonl`

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let papers = apres_core::synth::synth_corpus(n, seed);
    print!("{}", apres_core::corpus::serialize_corpus(&papers));
}
