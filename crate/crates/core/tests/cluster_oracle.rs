//! Clustering oracles. The implementation agglomerates with
//! Lance-Williams updates; the oracle here re-evaluates the merging
//! cost definition (increase in within-cluster sum of squares) directly
//! from point sets at every step, sharing no code with the production
//! path.

use exposure_core::cluster::{
    adjusted_rand_index, cut, merge_cost, suggest_k, ward_linkage, FeatureMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(seed: u64, n: usize, d: usize) -> (FeatureMatrix, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    let zones = (0..n).map(|i| format!("z{i}")).collect();
    (FeatureMatrix::new(zones, d, data).unwrap(), rows)
}

/// Within-cluster sum of squared deviations from the centroid.
fn sse(points: &[&[f64]]) -> f64 {
    let d = points[0].len();
    let mut centroid = vec![0.0; d];
    for p in points {
        for (c, v) in centroid.iter_mut().zip(*p) {
            *c += v;
        }
    }
    for c in centroid.iter_mut() {
        *c /= points.len() as f64;
    }
    points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&centroid)
                .map(|(v, c)| (v - c) * (v - c))
                .sum::<f64>()
        })
        .sum()
}

/// Merging cost by definition: SSE(A u B) - SSE(A) - SSE(B).
fn cost_by_definition(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let mut merged: Vec<&[f64]> = a.to_vec();
    merged.extend_from_slice(b);
    sse(&merged) - sse(a) - sse(b)
}

/// Naive agglomeration: keep explicit point sets per cluster, rescan
/// every active pair with the definitional cost, merge the minimum with
/// the same (cost, left, right) ordering.
fn oracle_linkage(rows: &[Vec<f64>]) -> Vec<(usize, usize, f64, usize)> {
    let n = rows.len();
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut merges = Vec::new();
    for step in 0..n - 1 {
        let active: Vec<usize> = members
            .iter()
            .enumerate()
            .filter_map(|(id, m)| m.is_some().then_some(id))
            .collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, &a) in active.iter().enumerate() {
            for &b in &active[i + 1..] {
                let pa: Vec<&[f64]> = members[a].as_ref().unwrap().iter().map(|&r| rows[r].as_slice()).collect();
                let pb: Vec<&[f64]> = members[b].as_ref().unwrap().iter().map(|&r| rows[r].as_slice()).collect();
                let c = cost_by_definition(&pa, &pb);
                if best.map_or(true, |(_, _, bc)| c < bc) {
                    best = Some((a, b, c));
                }
            }
        }
        let (a, b, c) = best.unwrap();
        let mut merged = members[a].take().unwrap();
        merged.extend(members[b].take().unwrap());
        let size = merged.len();
        members.push(Some(merged));
        debug_assert_eq!(members.len() - 1, n + step);
        merges.push((a, b, c, size));
    }
    merges
}

#[test]
fn ward_matches_brute_force_rescan_oracle_100_seeds() {
    let started = std::time::Instant::now();
    for seed in 0..100u64 {
        let (matrix, rows) = random_matrix(seed, 12, 6);
        let dend = ward_linkage(&matrix).unwrap();
        let want = oracle_linkage(&rows);
        assert_eq!(dend.merges.len(), want.len());
        for (step, (merge, want)) in dend.merges.iter().zip(&want).enumerate() {
            assert_eq!(
                (merge.left, merge.right, merge.size),
                (want.0, want.1, want.3),
                "seed {seed} step {step}: merge pair diverged"
            );
            let tol = 1e-9 * want.2.abs().max(1e-12);
            assert!(
                (merge.cost - want.2).abs() <= tol,
                "seed {seed} step {step}: cost {} vs oracle {}",
                merge.cost,
                want.2
            );
        }
    }
    let elapsed = started.elapsed();
    eprintln!("clustering oracle over 100 seeds: {elapsed:?}");
}

#[test]
fn merge_cost_dual_formula_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let d = rng.random_range(1..6);
        let na = rng.random_range(1..8);
        let nb = rng.random_range(1..8);
        let gen = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect()
        };
        let a = gen(&mut rng, na);
        let b = gen(&mut rng, nb);
        let ar: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
        let br: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
        let closed = merge_cost(&ar, &br).unwrap();
        let definitional = cost_by_definition(&ar, &br);
        let tol = 1e-10 * definitional.abs().max(1e-9);
        assert!(
            (closed - definitional).abs() <= tol,
            "{closed} vs {definitional}"
        );
    }
}

#[test]
fn total_merge_cost_telescopes_to_global_sse_100_seeds() {
    for seed in 200..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(5..40);
        let d = rng.random_range(1..7);
        let (matrix, rows) = random_matrix(seed * 7 + 1, n, d);
        let dend = ward_linkage(&matrix).unwrap();
        let total: f64 = dend.merges.iter().map(|s| s.cost).sum();
        let all: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let want = sse(&all);
        assert!(
            (total - want).abs() <= 1e-9 * want.max(1e-12),
            "seed {seed}: telescoped {total} vs SSE {want}"
        );
    }
}

#[test]
fn permutation_equivariance() {
    let (matrix, rows) = random_matrix(4242, 15, 6);
    let dend = ward_linkage(&matrix).unwrap();
    let labels = cut(&dend, 4).unwrap().labels;

    // reverse the row order
    let permuted: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
    let data: Vec<f64> = permuted.iter().flatten().copied().collect();
    let m2 = FeatureMatrix::new(
        (0..15).map(|i| format!("p{i}")).collect(),
        6,
        data,
    )
    .unwrap();
    let labels2 = cut(&ward_linkage(&m2).unwrap(), 4).unwrap().labels;

    // same partition up to label names: compare co-membership
    let n = rows.len();
    for i in 0..n {
        for j in 0..n {
            let same = labels[i] == labels[j];
            let same2 = labels2[n - 1 - i] == labels2[n - 1 - j];
            assert_eq!(same, same2, "rows {i},{j}");
        }
    }
    assert!((adjusted_rand_index(&labels, &labels.clone()) - 1.0).abs() < 1e-12);
}

#[test]
fn suggest_k_recovers_three_planted_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let centers = [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]];
    let mut rows = Vec::new();
    for c in &centers {
        for _ in 0..6 {
            rows.push(vec![
                c[0] + rng.random::<f64>() * 0.4 - 0.2,
                c[1] + rng.random::<f64>() * 0.4 - 0.2,
            ]);
        }
    }
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    let m = FeatureMatrix::new((0..18).map(|i| format!("b{i}")).collect(), 2, data).unwrap();
    let dend = ward_linkage(&m).unwrap();
    assert_eq!(suggest_k(&dend, 2, 10), 3);
    // and the cut at 3 recovers the plant exactly
    let labels = cut(&dend, 3).unwrap().labels;
    let truth: Vec<usize> = (0..18).map(|i| i / 6).collect();
    assert!((adjusted_rand_index(&labels, &truth) - 1.0).abs() < 1e-12);
}
