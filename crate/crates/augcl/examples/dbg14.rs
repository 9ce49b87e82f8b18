use augcl::mining::{kmeans2, KMeansConfig};
use augcl::numerics::Tensor;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let inst = 14u64;
    let mut rng = ChaCha8Rng::seed_from_u64(inst);
    let m = rng.gen_range(2..=8usize);
    let d = rng.gen_range(1..=3usize);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    println!("m={m} d={d}");
    for (i, r) in rows.iter().enumerate() {
        println!("  p{i}: {r:?}");
    }
    let mut best = f64::INFINITY;
    let mut best_mask = 0u32;
    for mask in 1..((1u32 << m) - 1) {
        let mut sse = 0.0;
        for side in 0..2 {
            let members: Vec<&Vec<f64>> = (0..m)
                .filter(|&p| ((mask >> p) & 1) as usize == side)
                .map(|p| &rows[p])
                .collect();
            if members.is_empty() { continue; }
            let mut centroid = vec![0.0; d];
            for r in &members {
                for (c, v) in centroid.iter_mut().zip(r.iter()) { *c += v; }
            }
            for c in &mut centroid { *c /= members.len() as f64; }
            for r in &members {
                sse += r.iter().zip(&centroid).map(|(v, c)| (v - c).powi(2)).sum::<f64>();
            }
        }
        if sse < best { best = sse; best_mask = mask; }
    }
    println!("optimum sse={best:.6} mask={best_mask:08b}");
    let points = Tensor::from_rows(&rows);
    let cfg = KMeansConfig { restarts: 3, max_iterations: 50, tolerance: 1e-9, seed: inst };
    let r = kmeans2(&points, &cfg).unwrap();
    println!("kmeans sse={:.6} assign={:?}", r.sse, r.assignments);
}
