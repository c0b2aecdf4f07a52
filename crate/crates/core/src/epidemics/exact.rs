use rustc_hash::FxHashMap;

use crate::env::{Environment, Mode};
use crate::error::{check_positive, Error, Result};

pub const MAX_EXACT_VERTICES: usize = 6;

/// Exact law of the final size N on a finite graph, by recursion over the
/// (susceptible, infective) configurations of the embedded jump chain.
/// Entry `k` of the result is P(N = k); entry 0 is always zero.
///
/// Every transition lowers `2|S| + |I|`, so the recursion terminates.
pub fn exact_final_size_distribution(env: &Environment, lambda: f64) -> Result<Vec<f64>> {
    check_positive("infection rate lambda", lambda)?;
    let Mode::Finite(graph) = env.mode() else {
        return Err(Error::Validation(
            "exact enumeration needs a finite graph".into(),
        ));
    };
    let labels = graph.vertices();
    let n = labels.len();
    if n > MAX_EXACT_VERTICES {
        return Err(Error::Resource(format!(
            "exact enumeration limited to {MAX_EXACT_VERTICES} vertices, graph has {n}"
        )));
    }
    let mut adj = vec![0u8; n];
    for (i, &a) in labels.iter().enumerate() {
        for (j, &b) in labels.iter().enumerate() {
            if i != j
                && env
                    .edge_open(
                        &crate::env::Vertex::from_coords(&[a]),
                        &crate::env::Vertex::from_coords(&[b]),
                    )
                    .unwrap_or(false)
            {
                adj[i] |= 1 << j;
            }
        }
    }
    let origin = labels.iter().position(|&v| v == 0).expect("origin present");
    let all: u8 = if n == 8 { u8::MAX } else { (1u8 << n) - 1 };
    let mut memo = FxHashMap::default();
    let start_s = all & !(1 << origin);
    let start_i = 1u8 << origin;
    Ok(final_sizes(start_s, start_i, n, &adj, lambda, &mut memo))
}

fn final_sizes(
    s: u8,
    i: u8,
    n: usize,
    adj: &[u8],
    lambda: f64,
    memo: &mut FxHashMap<(u8, u8), Vec<f64>>,
) -> Vec<f64> {
    if i == 0 {
        let mut out = vec![0.0; n + 1];
        out[n - s.count_ones() as usize] = 1.0;
        return out;
    }
    if let Some(v) = memo.get(&(s, i)) {
        return v.clone();
    }
    // Removal of each infective at rate 1; infection of each susceptible at
    // rate lambda times its number of infective neighbours.
    let mut moves: Vec<(f64, u8, u8)> = Vec::new();
    for x in 0..n {
        if i & (1 << x) != 0 {
            moves.push((1.0, s, i & !(1 << x)));
        }
        if s & (1 << x) != 0 {
            let k = (adj[x] & i).count_ones();
            if k > 0 {
                moves.push((lambda * f64::from(k), s & !(1 << x), i | (1 << x)));
            }
        }
    }
    let total: f64 = moves.iter().map(|m| m.0).sum();
    let mut out = vec![0.0; n + 1];
    for (rate, s2, i2) in moves {
        let sub = final_sizes(s2, i2, n, adj, lambda, memo);
        for (o, q) in out.iter_mut().zip(sub) {
            *o += rate / total * q;
        }
    }
    memo.insert((s, i), out.clone());
    out
}

/// Total-variation distance between two distributions on the same index set
/// (missing tail entries count as zero).
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    0.5 * (0..len)
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}
