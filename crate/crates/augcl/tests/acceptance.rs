//! The acceptance gate. Each test covers one numbered criterion, pins its
//! tolerances as constants, and ends with a single PASS (or SKIP) line;
//! assertion messages carry the matching FAIL line.
//!
//! Criteria 9 and 10 prefer the MUTAG benchmark when a TU-format copy exists
//! under the configured data root (see `AUGCL_DATA_DIR`); without it they
//! fall back to synthetic datasets routed through the same code paths and
//! say so in their output.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use augcl::data::{gen_synthetic, load_tu_dataset, write_tu_dataset, Graph, SyntheticSpec};
use augcl::encoder::{EmbeddingBatch, EncoderConfig, EncoderParams, ReadoutMode};
use augcl::loss::{adaptive_margin, augcl_loss, augcl_loss_node, info_nce, triplet_surrogate, ContrastiveConfig};
use augcl::mining::{
    gambler_infer, kmeans2, train_gambler, weights_from_uncertainty, AffinityTriple,
    GamblerConfig, KMeansConfig, UncertaintyMatrix, WeightMatrix, WeightPolicy,
};
use augcl::numerics::gradcheck::{finite_difference, max_mismatch};
use augcl::numerics::Tensor;
use augcl::pipeline::{pretrain, run_experiment, DatasetConfig, DatasetSource, ExperimentConfig};

// ---------------------------------------------------------------- criterion 1
const GRAD_SEEDS: u64 = 100;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_ABS_FLOOR: f64 = 1e-7;
const GRAD_STEP: f64 = 1e-5;
/// Reject check points with a projected-row norm below this: the loss is not
/// smooth inside the normalization guard band, so central differences say
/// nothing about the gradient there.
const GRAD_NORM_GUARD: f64 = 1e-3;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

// ---------------------------------------------------------------- criterion 2
const REDUCTION_BATCHES: usize = 1000;
const REDUCTION_TOL: f64 = 1e-12;
const REDUCTION_BUDGET: Duration = Duration::from_secs(30);

// ---------------------------------------------------------------- criterion 3
const MONOTONE_BATCHES: usize = 100;
const MONOTONE_STEP: f64 = 1e-4;

// ---------------------------------------------------------------- criterion 4
const MARGIN_TRIPLES: usize = 10_000;

// ---------------------------------------------------------------- criterion 5
const KMEANS_INSTANCES: usize = 100;
const KMEANS_SSE_SLACK: f64 = 1.05;
const KMEANS_MIN_EXACT: usize = 95;
const KMEANS_EXACT_TOL: f64 = 1e-9;
const KMEANS_BUDGET: Duration = Duration::from_secs(10);

// ---------------------------------------------------------------- criterion 6
const BAND_SEEDS: u64 = 5;
const BAND_BUDGET: Duration = Duration::from_secs(10);

// ---------------------------------------------------------------- criterion 7
const SUPPRESSION_SEEDS: u64 = 5;
const SUPPRESSION_BUDGET: Duration = Duration::from_secs(120);

// ---------------------------------------------------------------- criterion 8
const DIRECTION_PERTURBATIONS: usize = 200;
const DIRECTION_MIN_PEARSON: f64 = 0.5;

// ---------------------------------------------------------------- criterion 9
const E2E_BASELINE_FLOOR: f64 = 0.84;
const E2E_MIN_IMPROVEMENT: f64 = 0.005;
const E2E_SEEDS: u64 = 5;
const E2E_BUDGET: Duration = Duration::from_secs(30 * 60);
const E2E_SYNTH_BASELINE_FLOOR: f64 = 0.85;

fn pass(criterion: usize, slug: &str, detail: impl AsRef<str>) {
    println!("PASS criterion {criterion:02} {slug}: {}", detail.as_ref());
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(lo..hi)).collect())
        .collect()
}

fn embedding_batch(rows: &[Vec<f64>]) -> EmbeddingBatch {
    let n = rows.len() / 2;
    EmbeddingBatch {
        z_tilde: Tensor::from_rows(&rows[..n]),
        z_hat: Tensor::from_rows(&rows[n..]),
    }
}

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    random_rows(rng, n, d, -1.0, 1.0)
        .into_iter()
        .map(|r| normalize(&r))
        .collect()
}

fn normalize(row: &[f64]) -> Vec<f64> {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    row.iter().map(|v| v / norm).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (
        a.iter().sum::<f64>() / n,
        b.iter().sum::<f64>() / n,
    );
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>();
    let (va, vb) = (
        a.iter().map(|x| (x - ma).powi(2)).sum::<f64>(),
        b.iter().map(|y| (y - mb).powi(2)).sum::<f64>(),
    );
    cov / (va.sqrt() * vb.sqrt())
}

fn random_graph(rng: &mut ChaCha8Rng, nodes: usize, feature_dim: usize) -> Graph {
    let mut edges = Vec::new();
    for a in 0..nodes {
        for b in (a + 1)..nodes {
            if rng.gen_bool(0.5) {
                edges.push((a, b));
            }
        }
    }
    // keep the graph connected enough that no node is isolated
    for v in 1..nodes {
        let u = rng.gen_range(0..v);
        edges.push((u, v));
    }
    edges.sort_unstable();
    edges.dedup();
    let features = Tensor::from_rows(&random_rows(rng, nodes, feature_dim, -1.0, 1.0));
    Graph::new(nodes, edges, features, Some(0)).unwrap()
}

fn uncertainty_from(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> UncertaintyMatrix {
    let rows = random_rows(rng, n, n - 1, lo, hi);
    UncertaintyMatrix::from_scores(&rows).unwrap()
}

#[test]
fn criterion_01_gradient_correctness() {
    use augcl::data::GraphBatch;
    use augcl::encoder::encode_views;

    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut resampled = 0usize;
    for seed in 0..GRAD_SEEDS {
        let feature_dim = 3;
        // Finite differences are only meaningful where the loss is smooth, so
        // reject draws that land a projected embedding inside the
        // normalization guard band (a fully dead relu layer projects a graph
        // to exactly zero) and redraw from a shifted stream.
        let mut attempt = seed;
        let (v1, v2, params, weights, cfg) = loop {
            let mut rng = ChaCha8Rng::seed_from_u64(attempt);
            let graphs1: Vec<Graph> = (0..3)
                .map(|_| {
                    let nodes = rng.gen_range(4..7);
                    random_graph(&mut rng, nodes, feature_dim)
                })
                .collect();
            let graphs2: Vec<Graph> = (0..3)
                .map(|_| {
                    let nodes = rng.gen_range(4..7);
                    random_graph(&mut rng, nodes, feature_dim)
                })
                .collect();
            let v1 = GraphBatch::from_graphs(&graphs1).unwrap();
            let v2 = GraphBatch::from_graphs(&graphs2).unwrap();

            // rotate through encoder variants so every forward path is covered
            let config = EncoderConfig {
                feature_dim,
                layers: 2,
                hidden: 5,
                projection: 4,
                readout: if seed % 2 == 0 {
                    ReadoutMode::Sum
                } else {
                    ReadoutMode::Mean
                },
                concat_layers: seed % 3 == 0,
            };
            let params = EncoderParams::init(config, attempt);
            let weights = if seed % 2 == 0 {
                WeightMatrix::uniform(3)
            } else {
                weights_from_uncertainty(
                    &uncertainty_from(&mut rng, 3, 0.2, 0.9),
                    WeightPolicy::Fixed(1.3),
                )
                .unwrap()
            };
            let cfg = ContrastiveConfig {
                temperature: 0.4,
                symmetric: seed % 5 == 0,
            };

            let enc = encode_views(&params, &v1, &v2).unwrap();
            let min_norm = [enc.projected1, enc.projected2]
                .into_iter()
                .flat_map(|node| {
                    let t = enc.graph.value(node);
                    (0..t.shape()[0])
                        .map(|r| t.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
                        .collect::<Vec<f64>>()
                })
                .fold(f64::INFINITY, f64::min);
            if min_norm > GRAD_NORM_GUARD {
                break (v1, v2, params, weights, cfg);
            }
            resampled += 1;
            attempt += GRAD_SEEDS;
        };

        let loss_of = |tensors: &BTreeMap<String, Tensor>| {
            let mut p = params.clone();
            *p.tensors_mut() = tensors.clone();
            let mut enc = encode_views(&p, &v1, &v2).unwrap();
            let loss =
                augcl_loss_node(&mut enc.graph, enc.projected1, enc.projected2, &weights, &cfg)
                    .unwrap();
            enc.graph.value(loss).item()
        };

        let mut enc = encode_views(&params, &v1, &v2).unwrap();
        let loss =
            augcl_loss_node(&mut enc.graph, enc.projected1, enc.projected2, &weights, &cfg)
                .unwrap();
        let analytic = enc.graph.backward_grad(loss).unwrap();
        let mut f = |t: &BTreeMap<String, Tensor>| loss_of(t);
        let numeric = finite_difference(&mut f, params.tensors(), GRAD_STEP);
        let mismatch = max_mismatch(&analytic, &numeric, GRAD_ABS_FLOOR);
        assert!(
            mismatch <= GRAD_REL_TOL,
            "FAIL criterion 01 gradient-correctness: seed {seed} relative error {mismatch:.3e} > {GRAD_REL_TOL:.0e}"
        );
        worst = worst.max(mismatch);
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed < GRAD_BUDGET,
        "FAIL criterion 01 gradient-correctness: {elapsed:?} exceeded {GRAD_BUDGET:?}"
    );
    pass(
        1,
        "gradient-correctness",
        format!(
            "{GRAD_SEEDS} encoder+loss compositions ({resampled} redrawn off the norm guard), worst relative error {worst:.3e} (tol {GRAD_REL_TOL:.0e}), {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_02_weighted_loss_reduction() {
    let start = Instant::now();
    let temperatures = [0.1, 0.2, 0.5, 1.0];
    let mut worst = 0.0f64;
    for i in 0..REDUCTION_BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let n = rng.gen_range(2..=32);
        let d = rng.gen_range(2..=8);
        let batch = embedding_batch(&random_rows(&mut rng, 2 * n, d, -2.0, 2.0));
        let cfg = ContrastiveConfig {
            temperature: temperatures[i % temperatures.len()],
            symmetric: i % 2 == 1,
        };
        let plain = info_nce(&batch, &cfg).unwrap();
        let weighted = augcl_loss(&batch, &WeightMatrix::uniform(n), &cfg).unwrap();
        let diff = (plain - weighted).abs();
        assert!(
            diff <= REDUCTION_TOL,
            "FAIL criterion 02 weighted-loss-reduction: batch {i} (n={n}) differs by {diff:.3e}"
        );
        worst = worst.max(diff);
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed < REDUCTION_BUDGET,
        "FAIL criterion 02 weighted-loss-reduction: {elapsed:?} exceeded {REDUCTION_BUDGET:?}"
    );
    pass(
        2,
        "weighted-loss-reduction",
        format!(
            "{REDUCTION_BATCHES} batches (n in [2, 32]), worst |difference| {worst:.3e} (tol {REDUCTION_TOL:.0e}), {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_03_weight_monotonicity() {
    let mut pairs = 0usize;
    for b in 0..MONOTONE_BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(b as u64);
        let n = rng.gen_range(2..=6);
        let batch = embedding_batch(&random_rows(&mut rng, 2 * n, 4, -1.5, 1.5));
        let cfg = ContrastiveConfig::default();
        let base = random_rows(&mut rng, n, n - 1, 0.3, 0.8);
        for i in 0..n {
            for k in 0..n - 1 {
                let mut up = base.clone();
                up[i][k] += MONOTONE_STEP;
                let mut down = base.clone();
                down[i][k] -= MONOTONE_STEP;
                // alpha 1 makes the weight equal the perturbed score
                let loss_at = |rows: &[Vec<f64>]| {
                    let u = UncertaintyMatrix::from_scores(rows).unwrap();
                    let w = weights_from_uncertainty(&u, WeightPolicy::Fixed(1.0)).unwrap();
                    augcl_loss(&batch, &w, &cfg).unwrap()
                };
                let slope = loss_at(&up) - loss_at(&down);
                assert!(
                    slope > 0.0,
                    "FAIL criterion 03 weight-monotonicity: batch {b} pair ({i}, {k}) slope {slope:.3e}"
                );
                pairs += 1;
            }
        }
    }
    pass(
        3,
        "weight-monotonicity",
        format!("loss increased in every weight over {MONOTONE_BATCHES} batches ({pairs} pairs)"),
    );
}

#[test]
fn criterion_04_margin_sign_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..MARGIN_TRIPLES {
        let u = 10f64.powf(rng.gen_range(-6.0..0.0));
        let alpha = 10f64.powf(rng.gen_range(-2.0..2.0));
        let cfg = ContrastiveConfig::new(rng.gen_range(0.01..2.0)).unwrap();
        let m = adaptive_margin(u, alpha, &cfg);
        assert_eq!(
            m >= 0.0,
            alpha * u >= 1.0,
            "FAIL criterion 04 margin-sign-law: triple {t} (u={u:.3e}, alpha={alpha:.3e}) margin {m:.3e}"
        );
    }
    // binary-exact products: alpha * u == 1.0 must give margin == 0.0 exactly
    for k in 0..=19u32 {
        let u = 2f64.powi(-(k as i32));
        let alpha = 2f64.powi(k as i32);
        let m = adaptive_margin(u, alpha, &ContrastiveConfig::default());
        assert_eq!(
            m, 0.0,
            "FAIL criterion 04 margin-sign-law: alpha*u == 1 gave margin {m:.3e} at k={k}"
        );
    }
    pass(
        4,
        "margin-sign-law",
        format!("{MARGIN_TRIPLES} random (u, alpha, temperature) triples plus 20 exact boundary products"),
    );
}

#[test]
fn criterion_05_kmeans_oracle() {
    let start = Instant::now();
    let mut exact = 0usize;
    for inst in 0..KMEANS_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(inst as u64);
        let m = rng.gen_range(2..=8);
        let d = rng.gen_range(1..=3);
        let rows = random_rows(&mut rng, m, d, -1.0, 1.0);
        let points = Tensor::from_rows(&rows);

        // brute-force optimum over every proper bipartition
        let mut best = f64::INFINITY;
        for mask in 1..((1u32 << m) - 1) {
            let mut sse = 0.0;
            for side in 0..2 {
                let members: Vec<&Vec<f64>> = (0..m)
                    .filter(|&p| ((mask >> p) & 1) as usize == side)
                    .map(|p| &rows[p])
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let mut centroid = vec![0.0; d];
                for r in &members {
                    for (c, v) in centroid.iter_mut().zip(r.iter()) {
                        *c += v;
                    }
                }
                for c in &mut centroid {
                    *c /= members.len() as f64;
                }
                for r in &members {
                    sse += r
                        .iter()
                        .zip(&centroid)
                        .map(|(v, c)| (v - c).powi(2))
                        .sum::<f64>();
                }
            }
            best = best.min(sse);
        }

        let cfg = KMeansConfig {
            restarts: 3,
            max_iterations: 50,
            tolerance: 1e-9,
            seed: inst as u64,
        };
        let result = kmeans2(&points, &cfg).unwrap();
        assert!(
            result.sse <= best * KMEANS_SSE_SLACK + KMEANS_EXACT_TOL,
            "FAIL criterion 05 kmeans-oracle: instance {inst} sse {:.6e} vs optimum {best:.6e}",
            result.sse
        );
        if result.sse <= best + KMEANS_EXACT_TOL {
            exact += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        exact >= KMEANS_MIN_EXACT,
        "FAIL criterion 05 kmeans-oracle: only {exact}/{KMEANS_INSTANCES} instances hit the optimum"
    );
    assert!(
        elapsed < KMEANS_BUDGET,
        "FAIL criterion 05 kmeans-oracle: {elapsed:?} exceeded {KMEANS_BUDGET:?}"
    );
    pass(
        5,
        "kmeans-oracle",
        format!(
            "{exact}/{KMEANS_INSTANCES} instances exactly optimal, all within {KMEANS_SSE_SLACK}x, {elapsed:?}"
        ),
    );
}

/// Unit-circle two-cluster layout with a contested midline band.
///
/// Returns (points, cluster assignment, band flag). Band points sit at the
/// arc midpoint and alternate cluster assignment, so identical features
/// carry conflicting affinity labels.
fn banded_clusters(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>, Vec<bool>) {
    let mut points = Vec::new();
    let mut cluster = Vec::new();
    let mut band = Vec::new();
    let push = |theta: f64, c: usize, b: bool, points: &mut Vec<Vec<f64>>,
                cluster: &mut Vec<usize>, band: &mut Vec<bool>| {
        points.push(vec![theta.cos(), theta.sin()]);
        cluster.push(c);
        band.push(b);
    };
    for i in 0..12 {
        let jitter = rng.gen_range(-0.05..0.05);
        let a = (150.0 + 30.0 * (i as f64) / 11.0).to_radians() + jitter;
        push(a, 0, false, &mut points, &mut cluster, &mut band);
        let b = (30.0 * (i as f64) / 11.0).to_radians() + jitter;
        push(b, 1, false, &mut points, &mut cluster, &mut band);
    }
    for i in 0..8 {
        let theta = (85.0 + 10.0 * (i as f64) / 7.0).to_radians() + rng.gen_range(-0.02..0.02);
        push(theta, i % 2, true, &mut points, &mut cluster, &mut band);
    }
    (points, cluster, band)
}

#[test]
fn criterion_06_boundary_uncertainty() {
    let start = Instant::now();
    let cfg = GamblerConfig {
        reward: 1.8,
        epochs: 300,
        layers: 3,
        hidden: 16,
        learning_rate: 0.3,
        minibatch: 1024,
    };
    let mut margins = Vec::new();
    for seed in 0..BAND_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (points, cluster, band) = banded_clusters(&mut rng);

        // anchors come from the cluster cores; every other point is a candidate
        let anchors: Vec<usize> = vec![0, 2, 4, 1, 3, 5];
        let triples: Vec<AffinityTriple> = anchors
            .iter()
            .map(|&a| {
                let others: Vec<usize> = (0..points.len()).filter(|&p| p != a).collect();
                AffinityTriple {
                    anchor: points[a].clone(),
                    candidates: Tensor::from_rows(
                        &others.iter().map(|&p| points[p].clone()).collect::<Vec<_>>(),
                    ),
                    labels: others
                        .iter()
                        .map(|&p| usize::from(cluster[p] == cluster[a]))
                        .collect(),
                }
            })
            .collect();

        let params = train_gambler(&triples, &cfg, seed).unwrap();
        let (mut band_sum, mut band_n, mut core_sum, mut core_n) = (0.0, 0, 0.0, 0);
        for &a in &anchors {
            for p in 0..points.len() {
                if p == a {
                    continue;
                }
                let (_, _, u) = gambler_infer(&params, &points[a], &points[p]).unwrap();
                if band[p] {
                    band_sum += u;
                    band_n += 1;
                } else {
                    core_sum += u;
                    core_n += 1;
                }
            }
        }
        let (band_mean, core_mean) = (band_sum / band_n as f64, core_sum / core_n as f64);
        assert!(
            band_mean > core_mean,
            "FAIL criterion 06 boundary-uncertainty: seed {seed} band {band_mean:.4} <= core {core_mean:.4}"
        );
        margins.push(band_mean - core_mean);
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed < BAND_BUDGET,
        "FAIL criterion 06 boundary-uncertainty: {elapsed:?} exceeded {BAND_BUDGET:?}"
    );
    let least = margins.iter().copied().fold(f64::INFINITY, f64::min);
    pass(
        6,
        "boundary-uncertainty",
        format!(
            "band mean u above core mean u for {BAND_SEEDS} seeds (smallest gap {least:.4}), {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_07_false_negative_suppression() {
    let start = Instant::now();
    let mut gaps = Vec::new();
    for seed in 0..SUPPRESSION_SEEDS {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.synthetic = SyntheticSpec {
            classes: 2,
            graphs_per_class: 24,
            nodes: 16,
            intra_p: 0.5,
            inter_p: 0.06,
        };
        cfg.train.epochs = 13;
        cfg.train.switch_epoch = 12;
        cfg.train.batch_size = 16;
        cfg.train.seed = seed;
        cfg.encoder.layers = 2;
        cfg.encoder.hidden = 32;
        cfg.encoder.projection = 16;
        cfg.gambler.epochs = 60;
        cfg.gambler.hidden = 32;

        let data = gen_synthetic(&cfg.dataset.synthetic, seed).unwrap();
        let labels = data.labels().unwrap();
        let outcome = pretrain(&cfg, &data).unwrap();

        let (mut same_sum, mut same_n, mut cross_sum, mut cross_n) = (0.0, 0usize, 0.0, 0usize);
        for (b, weights) in outcome.cache.weights.iter().enumerate() {
            let batch = &outcome.cache.batches[b];
            for i in 0..batch.len() {
                for k in 0..batch.len() - 1 {
                    let j = weights.candidate(i, k);
                    let w = weights.value(i, k);
                    if labels[batch[i]] == labels[batch[j]] {
                        same_sum += w;
                        same_n += 1;
                    } else {
                        cross_sum += w;
                        cross_n += 1;
                    }
                }
            }
        }
        let (same_mean, cross_mean) = (same_sum / same_n as f64, cross_sum / cross_n as f64);
        assert!(
            same_mean < cross_mean,
            "FAIL criterion 07 false-negative-suppression: seed {seed} same-class {same_mean:.4} >= cross-class {cross_mean:.4}"
        );
        gaps.push(cross_mean - same_mean);
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed < SUPPRESSION_BUDGET,
        "FAIL criterion 07 false-negative-suppression: {elapsed:?} exceeded {SUPPRESSION_BUDGET:?}"
    );
    let least = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    pass(
        7,
        "false-negative-suppression",
        format!(
            "same-class mean weight below cross-class for {SUPPRESSION_SEEDS} seeds (smallest gap {least:.4}), {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_08_triplet_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 8;
    let d = 6;
    let base1 = unit_rows(&mut rng, n, d);
    let base2 = unit_rows(&mut rng, n, d);
    let weights = weights_from_uncertainty(
        &uncertainty_from(&mut rng, n, 0.2, 0.9),
        WeightPolicy::ReciprocalMean,
    )
    .unwrap();
    let cfg = ContrastiveConfig::default();

    let mut losses = Vec::with_capacity(DIRECTION_PERTURBATIONS);
    let mut surrogates = Vec::with_capacity(DIRECTION_PERTURBATIONS);
    for _ in 0..DIRECTION_PERTURBATIONS {
        let perturb = |rows: &[Vec<f64>], rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| {
                    normalize(
                        &r.iter()
                            .map(|v| v + rng.gen_range(-0.15..0.15))
                            .collect::<Vec<f64>>(),
                    )
                })
                .collect()
        };
        let batch = EmbeddingBatch {
            z_tilde: Tensor::from_rows(&perturb(&base1, &mut rng)),
            z_hat: Tensor::from_rows(&perturb(&base2, &mut rng)),
        };
        losses.push(augcl_loss(&batch, &weights, &cfg).unwrap());
        surrogates.push(triplet_surrogate(&batch, &weights, &cfg).unwrap().triplet_value);
    }
    let r = pearson(&losses, &surrogates);
    assert!(
        r > DIRECTION_MIN_PEARSON,
        "FAIL criterion 08 triplet-direction: Pearson {r:.4} <= {DIRECTION_MIN_PEARSON}"
    );
    pass(
        8,
        "triplet-direction",
        format!("Pearson {r:.4} over {DIRECTION_PERTURBATIONS} normalized perturbations (floor {DIRECTION_MIN_PEARSON})"),
    );
}

/// MUTAG as configured through the standard data-root resolution, if present.
fn mutag_config() -> Option<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.source = DatasetSource::Tu;
    cfg.dataset.name = "MUTAG".into();
    load_tu_dataset(&cfg.dataset.data_root(), "MUTAG").ok()?;
    cfg.train.batch_size = 32; // fewer than 500 graphs
    cfg.encoder.hidden = 32;
    cfg.encoder.projection = 32;
    cfg.probe.folds = 10;
    cfg.probe.repeats = 1;
    Some(cfg)
}

fn paired_accuracies(base: &ExperimentConfig, seeds: u64) -> (f64, f64) {
    let tmp = tempfile::tempdir().unwrap();
    let (mut baseline_sum, mut mined_sum) = (0.0, 0.0);
    for seed in 0..seeds {
        for baseline in [true, false] {
            let mut cfg = base.clone();
            cfg.train.seed = seed;
            cfg.train.baseline = baseline;
            let dir = tmp
                .path()
                .join(format!("{}-{seed}", if baseline { "base" } else { "mined" }));
            let report = run_experiment(&cfg, &dir).unwrap();
            if baseline {
                baseline_sum += report.accuracy_mean;
            } else {
                mined_sum += report.accuracy_mean;
            }
        }
    }
    (baseline_sum / seeds as f64, mined_sum / seeds as f64)
}

#[test]
fn criterion_09_end_to_end_accuracy() {
    let start = Instant::now();
    if let Some(cfg) = mutag_config() {
        let (baseline, mined) = paired_accuracies(&cfg, E2E_SEEDS);
        let elapsed = start.elapsed();
        assert!(
            baseline >= E2E_BASELINE_FLOOR,
            "FAIL criterion 09 end-to-end: MUTAG baseline accuracy {baseline:.4} < {E2E_BASELINE_FLOOR}"
        );
        assert!(
            mined - baseline >= E2E_MIN_IMPROVEMENT,
            "FAIL criterion 09 end-to-end: MUTAG improvement {:.4} < {E2E_MIN_IMPROVEMENT}",
            mined - baseline
        );
        assert!(
            elapsed < E2E_BUDGET,
            "FAIL criterion 09 end-to-end: {elapsed:?} exceeded {E2E_BUDGET:?}"
        );
        pass(
            9,
            "end-to-end",
            format!(
                "MUTAG baseline {baseline:.4}, weighted {mined:.4} (+{:.4}) over {E2E_SEEDS} seeds, {elapsed:?}",
                mined - baseline
            ),
        );
        return;
    }

    // MUTAG is not in the data root: exercise the identical pipeline on a
    // planted-partition stand-in and report that the benchmark was skipped.
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.synthetic = SyntheticSpec {
        classes: 2,
        graphs_per_class: 24,
        nodes: 20,
        intra_p: 0.45,
        inter_p: 0.08,
    };
    cfg.train.epochs = 6;
    cfg.train.switch_epoch = 4;
    cfg.train.batch_size = 16;
    cfg.encoder.hidden = 16;
    cfg.encoder.projection = 16;
    cfg.gambler.epochs = 20;
    cfg.probe.folds = 10;
    cfg.probe.repeats = 1;
    let (baseline, mined) = paired_accuracies(&cfg, 3);
    assert!(
        baseline >= E2E_SYNTH_BASELINE_FLOOR,
        "FAIL criterion 09 end-to-end: synthetic baseline accuracy {baseline:.4} < {E2E_SYNTH_BASELINE_FLOOR}"
    );
    println!(
        "SKIP criterion 09 end-to-end: MUTAG not found under {} (set AUGCL_DATA_DIR); \
         synthetic stand-in ran the full pipeline: baseline {baseline:.4}, weighted {mined:.4}",
        DatasetConfig::default().data_root().display()
    );
}

#[test]
fn criterion_10_run_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, dataset) = match mutag_config() {
        Some(mut cfg) => {
            cfg.train.epochs = 4;
            cfg.train.switch_epoch = 2;
            cfg.train.seed = 40;
            (cfg, "MUTAG".to_string())
        }
        None => {
            // no benchmark copy: generate a dataset, write it in TU layout,
            // and run both passes through the same file-loading path
            let spec = SyntheticSpec {
                classes: 2,
                graphs_per_class: 12,
                nodes: 12,
                intra_p: 0.5,
                inter_p: 0.1,
            };
            let data = gen_synthetic(&spec, 40).unwrap();
            write_tu_dataset(tmp.path(), "SYNTHTU", &data).unwrap();
            let mut cfg = ExperimentConfig::default();
            cfg.dataset.source = DatasetSource::Tu;
            cfg.dataset.dir = tmp.path().to_str().unwrap().to_string();
            cfg.dataset.name = "SYNTHTU".into();
            cfg.train.epochs = 4;
            cfg.train.switch_epoch = 2;
            cfg.train.batch_size = 8;
            cfg.train.seed = 40;
            cfg.encoder.layers = 2;
            cfg.encoder.hidden = 8;
            cfg.encoder.projection = 8;
            cfg.gambler.epochs = 5;
            cfg.probe.folds = 4;
            cfg.probe.repeats = 2;
            (cfg, "synthetic TU-format stand-in".to_string())
        }
    };
    let a = run_experiment(&cfg, &tmp.path().join("a")).unwrap();
    let b = run_experiment(&cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(
        a.deterministic_json().unwrap(),
        b.deterministic_json().unwrap(),
        "FAIL criterion 10 determinism: reports differ between identical runs"
    );
    // spot-check the bit-exactness claim on the raw metric vectors too
    assert_eq!(a.loss_curve, b.loss_curve);
    assert_eq!(a.fold_accuracies, b.fold_accuracies);
    pass(
        10,
        "determinism",
        format!("two {dataset} runs produced byte-identical reports"),
    );
}

#[test]
fn criterion_11_one_pass_cost() {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.synthetic = SyntheticSpec {
        classes: 2,
        graphs_per_class: 13, // 26 graphs: one incomplete batch is dropped
        nodes: 12,
        intra_p: 0.5,
        inter_p: 0.1,
    };
    cfg.train.epochs = 4;
    cfg.train.switch_epoch = 2;
    cfg.train.batch_size = 8;
    cfg.encoder.layers = 2;
    cfg.encoder.hidden = 8;
    cfg.encoder.projection = 8;
    cfg.gambler.epochs = 3;
    cfg.gambler.hidden = 16;

    let data = gen_synthetic(&cfg.dataset.synthetic, 0).unwrap();
    let outcome = pretrain(&cfg, &data).unwrap();
    let full_batches = data.len() / cfg.train.batch_size;
    let expected = full_batches * cfg.train.batch_size;
    assert_eq!(
        outcome.counters.gambler_trainings, 1,
        "FAIL criterion 11 one-pass-cost: estimator trained {} times",
        outcome.counters.gambler_trainings
    );
    assert_eq!(
        outcome.counters.partition_calls, expected,
        "FAIL criterion 11 one-pass-cost: {} partition calls, expected {expected}",
        outcome.counters.partition_calls
    );
    pass(
        11,
        "one-pass-cost",
        format!(
            "estimator trained once; partitioning ran {expected} times for {} graphs in batches of {}",
            data.len(),
            cfg.train.batch_size
        ),
    );
}
