//! Acceptance gate for the whole workspace.
//!
//! Each test checks one release criterion end to end, against independent
//! oracles implemented in this file (support enumeration for the encoder,
//! finite differences for the gradient, naive recomputation for pooling and
//! grids, a from-scratch parser for the sparse text format). Every criterion
//! prints exactly one PASS/FAIL line; criteria with a runtime budget fail
//! when the wall clock exceeds it. A global mutex serializes the bodies so
//! the timings are not distorted by sibling tests.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use deepsc::config::{DescriptorSection, LayerSection, RunConfig, SvmSection};
use deepsc::core::classifier::{evaluate, train_svm};
use deepsc::core::descriptor::GrayImage;
use deepsc::core::embedding::{
    contrastive_loss, generate_pairs, loss_gradient, train_embedding, DrlimConfig, EmbeddingMap,
    LabeledPair, PairLabel,
};
use deepsc::core::executor::Executor;
use deepsc::core::grid::{block_indices, build_grid, coarsen_grid};
use deepsc::core::pipeline::{
    extract_features, features_from_codes, forward_codes, train_model, DeepSCModel,
    DescriptorParams, EmbedSpec, LayerParams, LayerSpec, TrainConfig,
};
use deepsc::core::pooling::{local_spatial_pool, max_pool};
use deepsc::core::sparse::{encode, lasso_objective, Dictionary, SparseCode, SparseCodeGrid};
use deepsc::exec::RayonExec;
use deepsc::formats::{parse_sparse_text, write_sparse_text};
use deepsc::runner::{cmd_features, cmd_train};
use deepsc::synth::synth_dataset;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static GATE: Mutex<()> = Mutex::new(());

/// Runs one criterion under the gate, prints its single PASS/FAIL line, and
/// re-raises any failure so the test still shows up red.
fn criterion(name: &str, budget: Option<Duration>, body: impl FnOnce()) {
    let guard = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    drop(guard);
    let over_budget = budget.is_some_and(|b| elapsed > b);
    if outcome.is_ok() && !over_budget {
        println!("criterion {name}: PASS ({elapsed:.2?})");
    } else {
        println!("criterion {name}: FAIL ({elapsed:.2?})");
    }
    if let Err(cause) = outcome {
        panic::resume_unwind(cause);
    }
    if over_budget {
        panic!(
            "{name}: runtime {elapsed:?} exceeded the {:?} budget",
            budget.expect("checked above")
        );
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn random_unit_dictionary(dim: usize, size: usize, rng: &mut ChaCha8Rng) -> Dictionary {
    let mut atoms = vec![0.0; size * dim];
    for atom in atoms.chunks_exact_mut(dim) {
        for v in atom.iter_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let n = dot(atom, atom).sqrt();
        for v in atom.iter_mut() {
            *v /= n;
        }
    }
    Dictionary::new(dim, atoms).expect("unit atoms")
}

// --- criterion 1: the coordinate-descent encoder is exact ------------------

/// Gaussian elimination with partial pivoting. `None` for singular systems.
#[allow(clippy::needless_range_loop)] // elimination over two rows of one matrix
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite")
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut y = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * y[k];
        }
        y[row] = s / a[row][row];
    }
    Some(y)
}

/// Global LASSO minimum by enumerating supports and sign patterns. For a
/// support with signs s the stationary point solves
/// `V_SᵀV_S y = V_Sᵀx − (α/2)s` and is a candidate when the solved signs
/// match s; some global minimizer always has an independent active set, so
/// supports of size ≤ D cover the optimum and singular systems can be
/// skipped.
fn oracle_objective(x: &[f64], dict: &Dictionary, alpha: f64) -> f64 {
    let d = dict.dim();
    let k = dict.size();
    assert!(k <= 16, "oracle enumerates 2^K supports");
    let mut best: f64 = dot(x, x);
    for support_bits in 1u32..1 << k {
        let support: Vec<usize> = (0..k).filter(|i| support_bits >> i & 1 == 1).collect();
        let m = support.len();
        if m > d {
            continue;
        }
        let gram: Vec<Vec<f64>> = support
            .iter()
            .map(|&i| support.iter().map(|&j| dot(dict.atom(i), dict.atom(j))).collect())
            .collect();
        let corr: Vec<f64> = support.iter().map(|&i| dot(dict.atom(i), x)).collect();
        for sign_bits in 0..1u32 << m {
            let signs: Vec<f64> = (0..m)
                .map(|i| if sign_bits >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            let rhs: Vec<f64> = (0..m).map(|i| corr[i] - alpha / 2.0 * signs[i]).collect();
            let Some(y) = solve(gram.clone(), rhs) else {
                continue;
            };
            if y.iter().zip(&signs).any(|(v, s)| v * s <= 0.0) {
                continue;
            }
            let mut r = x.to_vec();
            for (coeff, &atom_index) in y.iter().zip(&support) {
                for (ri, vi) in r.iter_mut().zip(dict.atom(atom_index)) {
                    *ri -= coeff * vi;
                }
            }
            let objective = dot(&r, &r) + alpha * y.iter().map(|v| v.abs()).sum::<f64>();
            best = best.min(objective);
        }
    }
    best
}

/// Worst first-order optimality violation of `‖x − Vy‖² + α‖y‖₁`, computed
/// from scratch: with g_k = 2·v_kᵀ(x − Vy), active coordinates need
/// g_k = α·sign(y_k) and inactive ones |g_k| ≤ α.
fn kkt_violation(x: &[f64], dict: &Dictionary, code: &SparseCode) -> Vec<f64> {
    let mut r = x.to_vec();
    for &(k, v) in code.entries() {
        for (ri, vi) in r.iter_mut().zip(dict.atom(k)) {
            *ri -= v * vi;
        }
    }
    (0..dict.size()).map(|k| 2.0 * dot(dict.atom(k), &r)).collect()
}

#[test]
fn criterion_01_sparse_encoder_exactness() {
    criterion("01 sparse encoder exactness", Some(Duration::from_secs(30)), || {
        // Small instances against the enumeration oracle.
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dict = random_unit_dictionary(5, 8, &mut rng);
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let alpha = 0.05 + 0.95 * rng.gen_range(0.0..1.0);
            let code = encode(&x, &dict, alpha).expect("encode");
            let solved = lasso_objective(&x, &dict, &code, alpha).expect("objective");
            let oracle = oracle_objective(&x, &dict, alpha);
            assert!(
                (solved - oracle).abs() <= 1e-8,
                "instance {seed}: solver {solved} vs oracle {oracle}"
            );
        }
        // Realistic sizes against first-order optimality.
        for seed in 1000..2000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dict = random_unit_dictionary(64, 256, &mut rng);
            let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let alpha = 0.05 + 0.95 * rng.gen_range(0.0..1.0);
            let code = encode(&x, &dict, alpha).expect("encode");
            let grad = kkt_violation(&x, &dict, &code);
            let mut worst = 0.0f64;
            for (k, g) in grad.iter().enumerate() {
                let y = code.get(k);
                let violation = if y > 0.0 {
                    (g - alpha).abs()
                } else if y < 0.0 {
                    (g + alpha).abs()
                } else {
                    (g.abs() - alpha).max(0.0)
                };
                worst = worst.max(violation);
            }
            assert!(worst <= 1e-6, "instance {seed}: optimality violation {worst:e}");
        }
    });
}

// --- criterion 2: max-pooling algebra and the local pooling pass -----------

#[test]
fn criterion_02_pooling_algebra() {
    criterion("02 pooling algebra", Some(Duration::from_secs(5)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..200 {
            let dim = rng.gen_range(1..=24);
            let count = rng.gen_range(1..=12);
            let set: Vec<Vec<f64>> = (0..count)
                .map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect();
            let pooled = max_pool(&set).expect("pool");

            // Component-max equality against a naive double loop.
            for i in 0..dim {
                let naive = set.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(pooled[i], naive, "component {i}");
            }

            // Permutation invariance.
            let mut shuffled = set.clone();
            shuffled.shuffle(&mut rng);
            assert_eq!(max_pool(&shuffled).expect("pool"), pooled);

            // Idempotence: pooling a singleton is the identity, and adding
            // the pooled vector back into the set changes nothing.
            assert_eq!(max_pool(std::slice::from_ref(&pooled)).expect("pool"), pooled);
            let mut extended = set.clone();
            extended.push(pooled.clone());
            assert_eq!(max_pool(&extended).expect("pool"), pooled);
        }

        // Local pooling on a 13x13 grid against per-block recomputation.
        let fine = build_grid(64, 64, 16, 4).expect("grid");
        assert_eq!((fine.nx(), fine.ny()), (13, 13));
        let dict_size = 32;
        let codes: Vec<SparseCode> = (0..fine.point_count())
            .map(|_| {
                let mut entries = Vec::new();
                for k in 0..dict_size {
                    if rng.gen_range(0.0..1.0) < 0.2 {
                        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        entries.push((k, sign * rng.gen_range(0.1..2.0)));
                    }
                }
                SparseCode::new(dict_size, entries).expect("code")
            })
            .collect();
        let grid = SparseCodeGrid::new(fine.clone(), dict_size, codes).expect("code grid");
        let pooled = local_spatial_pool(&grid).expect("local pool");
        let coarse = coarsen_grid(&fine).expect("coarsen");
        assert_eq!(pooled.grid(), &coarse);
        for ci in 0..coarse.point_count() {
            let block = block_indices(&fine, &coarse, ci).expect("block");
            let mut expected = vec![f64::NEG_INFINITY; dict_size];
            for &fi in &block {
                for (slot, v) in expected.iter_mut().zip(grid.code(fi).to_dense()) {
                    *slot = slot.max(v);
                }
            }
            assert_eq!(pooled.code(ci).to_dense(), expected, "coarse point {ci}");
        }
    });
}

// --- criterion 3: grid coarsening formulas ----------------------------------

#[test]
fn criterion_03_grid_coarsening_formulas() {
    criterion("03 grid coarsening formulas", Some(Duration::from_secs(5)), || {
        let (patch, spacing) = (16u32, 4u32);
        for nx in 4usize..=64 {
            for ny in 4usize..=64 {
                let width = patch + spacing * (nx as u32 - 1);
                let height = patch + spacing * (ny as u32 - 1);
                let fine = build_grid(width, height, patch, spacing).expect("grid");
                assert_eq!((fine.nx(), fine.ny()), (nx, ny));
                let coarse = coarsen_grid(&fine).expect("coarsen");

                // Independent count: slide a 4-point window by 2 and count
                // the positions that fit.
                let slide = |n: usize| {
                    let mut count = 0;
                    let mut start = 0;
                    while start + 4 <= n {
                        count += 1;
                        start += 2;
                    }
                    count
                };
                assert_eq!(coarse.nx(), slide(nx), "nx {nx}");
                assert_eq!(coarse.ny(), slide(ny), "ny {ny}");
                assert_eq!(coarse.nx(), (nx - 4) / 2 + 1);
                assert_eq!(coarse.ny(), (ny - 4) / 2 + 1);

                // Spacing exactly doubles; the window span fixes the
                // receptive field at rf + 3s.
                assert_eq!(coarse.spacing_hp(), 2 * fine.spacing_hp());
                assert_eq!(coarse.spacing(), 2.0 * fine.spacing());
                assert_eq!(
                    coarse.receptive_field_hp(),
                    fine.receptive_field_hp() + 3 * fine.spacing_hp()
                );
            }
        }
    });
}

// --- criterion 4: contrastive gradient vs finite differences ----------------

struct Draw {
    map: EmbeddingMap,
    yi: Vec<f64>,
    yj: Vec<f64>,
    beta: f64,
}

/// Random map with columns well inside the unit ball (so perturbed maps stay
/// valid) plus a pair of sparse-ish vectors.
fn random_draw(rng: &mut ChaCha8Rng) -> Draw {
    let in_dim = rng.gen_range(3..9);
    let out_dim = rng.gen_range(2..6);
    let mut cols = vec![0.0; in_dim * out_dim];
    for col in cols.chunks_exact_mut(out_dim) {
        for v in col.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let n = dot(col, col).sqrt();
        let target = rng.gen_range(0.1..0.9);
        for v in col.iter_mut() {
            *v *= target / n.max(1e-9);
        }
    }
    let sparse_vec = |rng: &mut ChaCha8Rng| {
        (0..in_dim)
            .map(|_| if rng.gen_range(0.0..1.0) < 0.3 { 0.0 } else { rng.gen_range(-2.0..2.0) })
            .collect::<Vec<f64>>()
    };
    Draw {
        map: EmbeddingMap::new(out_dim, in_dim, cols).expect("map"),
        yi: sparse_vec(rng),
        yj: sparse_vec(rng),
        beta: rng.gen_range(0.5..2.0),
    }
}

fn embedded_distance(draw: &Draw) -> f64 {
    let delta: Vec<f64> = draw.yi.iter().zip(&draw.yj).map(|(a, b)| a - b).collect();
    let mut d_sq = 0.0;
    for row in 0..draw.map.out_dim() {
        let mut u = 0.0;
        for (k, &dk) in delta.iter().enumerate() {
            u += draw.map.entry(row, k) * dk;
        }
        d_sq += u * u;
    }
    d_sq.sqrt()
}

fn numeric_gradient(draw: &Draw, label: PairLabel) -> Vec<f64> {
    let out_dim = draw.map.out_dim();
    let in_dim = draw.map.in_dim();
    let base: Vec<f64> = (0..in_dim).flat_map(|k| draw.map.col(k).to_vec()).collect();
    let mut grad = vec![0.0; base.len()];
    for e in 0..base.len() {
        let h = 1e-6 * base[e].abs().max(1.0);
        let probe = |offset: f64| {
            let mut cols = base.clone();
            cols[e] += offset;
            let map = EmbeddingMap::new(out_dim, in_dim, cols).expect("map");
            contrastive_loss(&map, label, &draw.yi, &draw.yj, draw.beta).expect("loss")
        };
        grad[e] = (probe(h) - probe(-h)) / (2.0 * h);
    }
    grad
}

#[test]
fn criterion_04_contrastive_gradient() {
    criterion("04 contrastive gradient", Some(Duration::from_secs(10)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked_similar = 0;
        let mut checked_active = 0; // dissimilar inside the margin
        let mut checked_flat = 0; // dissimilar at or beyond the margin
        let mut draws = 0;
        while checked_similar < 40 || checked_active < 40 || checked_flat < 20 {
            draws += 1;
            assert!(draws < 4000, "regime coverage not reached");
            let draw = random_draw(&mut rng);
            let d = embedded_distance(&draw);
            if (d - draw.beta).abs() < 1e-4 {
                continue; // hinge kink: not differentiable
            }
            let label = if draws % 2 == 0 { PairLabel::Similar } else { PairLabel::Dissimilar };
            match label {
                PairLabel::Similar => checked_similar += 1,
                PairLabel::Dissimilar if d < draw.beta => checked_active += 1,
                PairLabel::Dissimilar => checked_flat += 1,
            }
            let analytic =
                loss_gradient(&draw.map, label, &draw.yi, &draw.yj, draw.beta).expect("gradient");
            let numeric = numeric_gradient(&draw, label);
            let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
            let rel = dot(&diff, &diff).sqrt() / dot(&analytic, &analytic).sqrt().max(1.0);
            assert!(rel < 1e-5, "draw {draws} ({label:?}, d={d}): relative error {rel:e}");
        }
        assert!(checked_similar + checked_active + checked_flat >= 100);
    });
}

// --- criterion 5: contrastive training separates two clusters ---------------

#[test]
fn criterion_05_contrastive_training() {
    criterion("05 contrastive training", Some(Duration::from_secs(60)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let in_dim = 20;
        let per_cluster = 30;
        let direction: Vec<f64> = {
            let raw: Vec<f64> =
                (0..in_dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let n = dot(&raw, &raw).sqrt();
            raw.iter().map(|v| 3.0 * v / n).collect()
        };
        let mut codes = Vec::with_capacity(2 * per_cluster);
        for cluster in 0..2 {
            let sign = if cluster == 0 { 1.0 } else { -1.0 };
            for _ in 0..per_cluster {
                codes.push(
                    direction
                        .iter()
                        .map(|c| sign * c + 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect::<Vec<f64>>(),
                );
            }
        }
        let mut pairs = Vec::new();
        for _ in 0..60 {
            let cluster = rng.gen_range(0..2usize);
            let base = cluster * per_cluster;
            let i = base + rng.gen_range(0..per_cluster);
            let mut j = base + rng.gen_range(0..per_cluster);
            while j == i {
                j = base + rng.gen_range(0..per_cluster);
            }
            pairs.push(LabeledPair { i, j, label: PairLabel::Similar, distance: 8.0 });
        }
        for _ in 0..60 {
            pairs.push(LabeledPair {
                i: rng.gen_range(0..per_cluster),
                j: per_cluster + rng.gen_range(0..per_cluster),
                label: PairLabel::Dissimilar,
                distance: 24.0,
            });
        }

        let config = |epochs: usize| DrlimConfig {
            sigma: 16.0,
            beta: 1.0,
            step_size: 0.05,
            epochs,
            seed: 11,
            pairs_per_image: usize::MAX,
        };
        let trained = train_embedding(&codes, &pairs, 5, &config(40)).expect("training");
        assert!(!trained.single_label);
        assert_eq!(trained.epoch_loss.len(), 41);
        assert!(
            trained.epoch_loss[40] < trained.epoch_loss[0],
            "loss did not improve: {} -> {}",
            trained.epoch_loss[0],
            trained.epoch_loss[40]
        );

        let embed = |idx: usize| trained.map.apply_dense(&codes[idx]).expect("embed");
        let distance = |i: usize, j: usize| {
            let (a, b) = (embed(i), embed(j));
            dot(
                &a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<f64>>(),
                &a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<f64>>(),
            )
            .sqrt()
        };
        let mean = |label: PairLabel| {
            let selected: Vec<f64> = pairs
                .iter()
                .filter(|p| p.label == label)
                .map(|p| distance(p.i, p.j))
                .collect();
            selected.iter().sum::<f64>() / selected.len() as f64
        };
        assert!(
            mean(PairLabel::Similar) < mean(PairLabel::Dissimilar),
            "clusters not separated"
        );

        // Epoch-by-epoch replay: a k-epoch run is a prefix of the full run,
        // so the final map of each run witnesses the norm bound after every
        // epoch of the 40-epoch schedule.
        for epochs in 1..=40 {
            let map = train_embedding(&codes, &pairs, 5, &config(epochs)).expect("training").map;
            for k in 0..in_dim {
                let norm = dot(map.col(k), map.col(k)).sqrt();
                assert!(norm <= 1.0 + 1e-12, "epoch {epochs}, column {k}: norm {norm}");
            }
        }
    });
}

// --- criterion 6: pair labeling table ---------------------------------------

#[test]
fn criterion_06_pair_label_table() {
    criterion("06 pair label table", None, || {
        // Coarsened grid: spacing 8, receptive field 28, 5x5 points.
        let fine = build_grid(64, 64, 16, 4).expect("grid");
        let coarse = coarsen_grid(&fine).expect("coarsen");
        assert_eq!((coarse.nx(), coarse.ny()), (5, 5));
        assert_eq!(coarse.spacing(), 8.0);
        assert_eq!(coarse.receptive_field(), 28.0);

        let sigma = 16.0;
        let pairs = generate_pairs(&coarse, sigma, usize::MAX, 0).expect("pairs");

        // Expected table keyed by absolute lattice offset: with 8px spacing
        // and sigma 16, a pair is similar iff da^2 + db^2 < 4, an exact
        // integer comparison (the d = sigma tie at offset (0,2) lands on the
        // dissimilar side). Overlap keeps |offset| <= 3 of the 5x5 lattice.
        let mut table: BTreeMap<(i64, i64), PairLabel> = BTreeMap::new();
        for da in 0..=3i64 {
            for db in 0..=3i64 {
                if (da, db) == (0, 0) {
                    continue;
                }
                let label = if da * da + db * db < 4 {
                    PairLabel::Similar
                } else {
                    PairLabel::Dissimilar
                };
                table.insert((da, db), label);
            }
        }
        assert_eq!(table[&(1, 0)], PairLabel::Similar); // d = 8
        assert_eq!(table[&(1, 1)], PairLabel::Similar); // d = 8*sqrt(2)
        assert_eq!(table[&(2, 0)], PairLabel::Dissimilar); // d = 16, the tie

        // Every candidate pair appears exactly once with the table's label
        // and the true center distance.
        let mut seen = BTreeMap::new();
        for p in &pairs {
            let (ax, ay) = coarse.lattice(p.i);
            let (bx, by) = coarse.lattice(p.j);
            let (da, db) = ((ax as i64 - bx as i64).abs(), (ay as i64 - by as i64).abs());
            assert!(da <= 3 && db <= 3, "pair beyond receptive-field overlap");
            assert_eq!(p.label, table[&(da, db)], "offset ({da},{db})");
            let expected_d = 8.0 * ((da * da + db * db) as f64).sqrt();
            assert!((p.distance - expected_d).abs() < 1e-9);
            let key = (p.i.min(p.j), p.i.max(p.j));
            assert!(seen.insert(key, p.label).is_none(), "duplicate pair {key:?}");
        }
        let expected_count: usize = {
            let mut count = 0;
            for i in 0..25usize {
                for j in i + 1..25 {
                    let (ax, ay) = (i % 5, i / 5);
                    let (bx, by) = (j % 5, j / 5);
                    let da = (ax as i64 - bx as i64).abs();
                    let db = (ay as i64 - by as i64).abs();
                    if da <= 3 && db <= 3 {
                        count += 1;
                    }
                }
            }
            count
        };
        assert_eq!(pairs.len(), expected_count);
        assert!(pairs.iter().any(|p| p.label == PairLabel::Similar));
        assert!(pairs.iter().any(|p| p.label == PairLabel::Dissimilar));
    });
}

// --- criterion 7: desk-scale end-to-end accuracy -----------------------------

#[test]
fn criterion_07_end_to_end_accuracy() {
    criterion("07 end-to-end accuracy", Some(Duration::from_secs(300)), || {
        let per_class = 100;
        let train_per_class = 30;
        let data = synth_dataset(2, per_class, 64, 1234);
        let mut train_images = Vec::new();
        let mut train_labels = Vec::new();
        let mut test_images = Vec::new();
        let mut test_labels = Vec::new();
        for (index, (image, label)) in data.into_iter().enumerate() {
            if index % per_class < train_per_class {
                train_images.push(image);
                train_labels.push(label);
            } else {
                test_images.push(image);
                test_labels.push(label);
            }
        }

        let config = TrainConfig {
            descriptor: DescriptorParams::default(),
            layers: vec![
                LayerSpec { dict_size: 64, alpha: 0.15, epochs: 3, embed: None },
                LayerSpec {
                    dict_size: 64,
                    alpha: 0.15,
                    epochs: 3,
                    embed: Some(EmbedSpec {
                        out_dim: 64,
                        sigma: 16.0,
                        beta: 1.0,
                        step_size: 0.05,
                        pairs_per_image: 200,
                    }),
                },
            ],
            dict_sample_cap: 200_000,
            seed: 1234,
            cache_codes: true,
        };
        let exec = RayonExec;
        let outcome = train_model(&train_images, &config, &exec).expect("training");
        let model = &outcome.model;
        let cached = outcome.cached_codes.as_ref().expect("codes cached");

        let test_codes = exec.map(&test_images, |img| {
            forward_codes(model, img, 2).expect("forward pass")
        });
        let accuracy_at = |depth: usize| {
            let train_features: Vec<Vec<f64>> = cached
                .iter()
                .map(|codes| features_from_codes(model, &codes[..depth]).expect("features"))
                .collect();
            let test_features: Vec<Vec<f64>> = test_codes
                .iter()
                .map(|codes| features_from_codes(model, &codes[..depth]).expect("features"))
                .collect();
            let trained =
                train_svm(&train_features, &train_labels, 1.0, 30, 99).expect("svm training");
            evaluate(&trained.svm, &test_features, &test_labels).expect("evaluation").average
        };
        let shallow = accuracy_at(1);
        let deep = accuracy_at(2);
        println!("  depth 1 accuracy {shallow:.4}, depth 2 accuracy {deep:.4}");
        assert!(deep >= 0.90, "two-layer accuracy {deep:.4} below 0.90");
        assert!(
            deep >= shallow - 0.02,
            "stacking regressed accuracy: depth 1 {shallow:.4}, depth 2 {deep:.4}"
        );
    });
}

// --- criterion 8: feature dimensionality -------------------------------------

#[test]
fn criterion_08_feature_dimensionality() {
    criterion("08 feature dimensionality", None, || {
        let unit_axis_dictionary = |dim: usize, size: usize| {
            let mut atoms = vec![0.0; size * dim];
            for (k, atom) in atoms.chunks_exact_mut(dim).enumerate() {
                atom[k % dim] = 1.0;
            }
            Dictionary::new(dim, atoms).expect("axis atoms")
        };
        let image = {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let pixels = (0..64 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
            GrayImage::new(64, 64, pixels).expect("image")
        };

        // One layer at K = 1024: 21 pyramid regions give 21504 components.
        let single = DeepSCModel::from_parts(
            DescriptorParams::default(),
            0,
            vec![LayerParams::new(
                LayerSpec { dict_size: 1024, alpha: 0.3, epochs: 1, embed: None },
                unit_axis_dictionary(128, 1024),
                None,
            )
            .expect("layer")],
        )
        .expect("model");
        assert_eq!(single.feature_dim(1), 21 * 1024);
        assert_eq!(extract_features(&single, &image, 1).expect("features").len(), 21504);

        // Two layers, K = (64, 32): 21 * 96 total, 21 * 64 when truncated.
        let embed_cols: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..16 * 64).map(|_| rng.gen_range(-0.1..0.1)).collect()
        };
        let stacked = DeepSCModel::from_parts(
            DescriptorParams::default(),
            0,
            vec![
                LayerParams::new(
                    LayerSpec { dict_size: 64, alpha: 0.3, epochs: 1, embed: None },
                    unit_axis_dictionary(128, 64),
                    None,
                )
                .expect("layer"),
                LayerParams::new(
                    LayerSpec {
                        dict_size: 32,
                        alpha: 0.3,
                        epochs: 1,
                        embed: Some(EmbedSpec {
                            out_dim: 16,
                            sigma: 16.0,
                            beta: 1.0,
                            step_size: 0.05,
                            pairs_per_image: 100,
                        }),
                    },
                    unit_axis_dictionary(16, 32),
                    Some(EmbeddingMap::new(16, 64, embed_cols).expect("map")),
                )
                .expect("layer"),
            ],
        )
        .expect("model");
        assert_eq!(stacked.feature_dim(2), 21 * 96);
        assert_eq!(stacked.feature_dim(1), 21 * 64);
        assert_eq!(extract_features(&stacked, &image, 2).expect("features").len(), 21 * 96);
        assert_eq!(extract_features(&stacked, &image, 1).expect("features").len(), 21 * 64);
    });
}

// --- criterion 9: training and feature extraction are deterministic ----------

#[test]
fn criterion_09_determinism() {
    criterion("09 determinism", None, || {
        let root = tempfile::tempdir().expect("tempdir");
        let dataset = root.path().join("data");
        deepsc::synth::write_synth_dataset(&dataset, 2, 8, 64, 5).expect("dataset");

        let run = |out_dir: &std::path::Path| {
            let config = RunConfig {
                dataset: dataset.clone(),
                out_dir: out_dir.to_owned(),
                seed: 42,
                train_per_class: 4,
                test_per_class: Some(4),
                repeats: 1,
                dict_sample_cap: 200_000,
                descriptor: DescriptorSection { patch: 16, spacing: 4 },
                svm: SvmSection { c: 1.0, epochs: 10 },
                layers: vec![
                    LayerSection {
                        k: 8,
                        alpha: 0.3,
                        epochs: 2,
                        embed_dim: None,
                        sigma: None,
                        beta: None,
                        step: None,
                        pairs_per_image: None,
                    },
                    LayerSection {
                        k: 8,
                        alpha: 0.3,
                        epochs: 2,
                        embed_dim: Some(8),
                        sigma: Some(16.0),
                        beta: Some(1.0),
                        step: Some(0.05),
                        pairs_per_image: Some(100),
                    },
                ],
            };
            let summary = cmd_train(&config, None).expect("train");
            let features_path = out_dir.join("features.txt");
            cmd_features(&summary.model_path, &dataset, &features_path, None, None)
                .expect("features");
            let read = |p: &std::path::Path| std::fs::read(p).expect("artifact");
            (read(&summary.model_path), read(&summary.log_path), read(&features_path))
        };

        let first = run(&root.path().join("run-a"));
        let second = run(&root.path().join("run-b"));
        assert_eq!(first.0, second.0, "model archives differ");
        assert_eq!(first.1, second.1, "training logs differ");
        assert_eq!(first.2, second.2, "feature files differ");
    });
}

// --- criterion 10: sparse text export round-trips -----------------------------

/// From-scratch reader for the 1-based `label idx:val` grammar: one sample
/// per line, strictly increasing indices, zeros omitted, `#` comments.
fn reference_parse(text: &str, dim: usize) -> Vec<(usize, Vec<f64>)> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split(' ');
        let label: usize = tokens.next().expect("label").parse().expect("label int");
        let mut dense = vec![0.0; dim];
        let mut last_index = 0usize;
        for token in tokens {
            let (idx_text, val_text) = token.split_once(':').expect("idx:val token");
            let idx: usize = idx_text.parse().expect("index int");
            assert!(idx >= 1 && idx <= dim, "index {idx} out of 1..={dim}");
            assert!(idx > last_index, "indices not strictly increasing");
            last_index = idx;
            let val: f64 = val_text.parse().expect("float value");
            assert!(val.is_finite() && val != 0.0, "stored value must be finite and nonzero");
            // Shortest round-trip printing: the token re-displays verbatim.
            assert_eq!(format!("{val}"), val_text, "value {val_text} not shortest-form");
            dense[idx - 1] = val;
        }
        out.push((label, dense));
    }
    out
}

#[test]
fn criterion_10_sparse_text_round_trip() {
    criterion("10 sparse text round trip", None, || {
        // Real pipeline output plus crafted edge cases (empty vector,
        // negatives, values without short decimal forms).
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dict = random_unit_dictionary(128, 8, &mut rng);
        let model = DeepSCModel::from_parts(
            DescriptorParams::default(),
            0,
            vec![LayerParams::new(
                LayerSpec { dict_size: 8, alpha: 0.2, epochs: 1, embed: None },
                dict,
                None,
            )
            .expect("layer")],
        )
        .expect("model");
        let data = synth_dataset(2, 2, 64, 77);
        let mut features: Vec<Vec<f64>> = data
            .iter()
            .map(|(image, _)| extract_features(&model, image, 1).expect("features"))
            .collect();
        let mut labels: Vec<usize> = data.iter().map(|(_, label)| *label).collect();
        let dim = features[0].len();

        let mut crafted = vec![0.0; dim];
        crafted[0] = 0.1 + 0.2; // no short decimal form
        crafted[7] = -1.5;
        crafted[dim - 1] = 1e-17;
        features.push(crafted);
        features.push(vec![0.0; dim]);
        labels.extend([5, 6]);

        let text = write_sparse_text(&features, &labels, Some(dim));

        let (samples, header_dim) = parse_sparse_text(&text).expect("parse");
        assert_eq!(header_dim, Some(dim));
        assert_eq!(samples.len(), features.len());
        for (sample, (feature, label)) in samples.iter().zip(features.iter().zip(&labels)) {
            assert_eq!(sample.label, *label);
            let dense = sample.to_dense(dim);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
            assert_eq!(bits(&dense), bits(feature), "round trip not bitwise");
        }

        let reference = reference_parse(&text, dim);
        assert_eq!(reference.len(), features.len());
        for ((label, dense), (feature, expected)) in
            reference.iter().zip(features.iter().zip(&labels))
        {
            assert_eq!(label, expected);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
            assert_eq!(bits(dense), bits(feature), "reference parser disagrees");
        }
    });
}
