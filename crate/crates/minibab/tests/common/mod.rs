//! Shared instance generators and independent oracles for the integration
//! suites.

// Each integration test target compiles its own copy and uses a subset.
#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use minibab::{
    Activation, Hyperbox, Layer, LinearConstraint, Network, OracleVerdict, Verdict,
    VerificationQuery,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_network(
    rng: &mut ChaCha8Rng,
    inputs: usize,
    relu_widths: &[usize],
    outputs: usize,
) -> Arc<Network> {
    let mut layers = Vec::new();
    let mut prev = inputs;
    for &w in relu_widths {
        layers.push(Layer {
            weights: (0..w)
                .map(|_| (0..prev).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            bias: (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            activation: Activation::Relu,
        });
        prev = w;
    }
    layers.push(Layer {
        weights: (0..outputs)
            .map(|_| (0..prev).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
        bias: (0..outputs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        activation: Activation::Linear,
    });
    Arc::new(Network::new(layers).unwrap())
}

/// A random 2- or 3-layer network with 2-4 inputs and at most 12 ReLUs,
/// weights uniform in [-1, 1].
pub fn random_small_network(rng: &mut ChaCha8Rng) -> Arc<Network> {
    let inputs = rng.gen_range(2..=4);
    let outputs = rng.gen_range(2..=3);
    let widths: Vec<usize> = if rng.gen_bool(0.5) {
        vec![rng.gen_range(2..=6)]
    } else {
        vec![rng.gen_range(2..=5), rng.gen_range(2..=5)]
    };
    random_network(rng, inputs, &widths, outputs)
}

pub fn random_box(rng: &mut ChaCha8Rng, dim: usize) -> Hyperbox {
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for _ in 0..dim {
        let c = rng.gen_range(-1.0..1.0);
        let half = rng.gen_range(0.2..1.0);
        lo.push(c - half);
        hi.push(c + half);
    }
    Hyperbox::new(lo, hi).unwrap()
}

/// A random box query whose constraints are anchored near the output at the
/// box center, giving a healthy mix of SAT and UNSAT instances.
pub fn random_query(rng: &mut ChaCha8Rng, net: &Arc<Network>, id: u64) -> VerificationQuery {
    let input = random_box(rng, net.input_dim());
    let center = input.center();
    let y = net.evaluate(&center).unwrap();
    let n_cons = rng.gen_range(1..=2);
    let output = (0..n_cons)
        .map(|_| {
            let coeffs: Vec<f64> = (0..net.output_dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let at_center: f64 = coeffs.iter().zip(&y).map(|(c, v)| c * v).sum();
            let rhs = at_center + rng.gen_range(-0.5..0.5);
            if rng.gen_bool(0.5) {
                LinearConstraint::le(coeffs, rhs).unwrap()
            } else {
                LinearConstraint::ge(coeffs, rhs).unwrap()
            }
        })
        .collect();
    VerificationQuery::new(net.clone(), input, output, id).unwrap()
}

/// A query whose constraint demands a value well above the center output, so
/// the box center is never an instant witness and the search has to split.
pub fn search_heavy_query(rng: &mut ChaCha8Rng, net: &Arc<Network>, id: u64) -> VerificationQuery {
    let input = random_box(rng, net.input_dim());
    let center = input.center();
    let y = net.evaluate(&center).unwrap();
    let coeffs: Vec<f64> = (0..net.output_dim())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let at_center: f64 = coeffs.iter().zip(&y).map(|(c, v)| c * v).sum();
    // Upper bound of the constraint value over the box, by one interval pass.
    let mut pi = minibab::PhaseAssignment::new(net);
    let (bounds, _) = minibab::propagation::forward_intervals(net, &input, &mut pi);
    let upper: f64 = coeffs
        .iter()
        .zip(bounds.output())
        .map(|(c, iv)| if *c >= 0.0 { c * iv.hi } else { c * iv.lo })
        .sum();
    let t = rng.gen_range(0.4..0.95);
    let rhs = at_center + t * (upper - at_center);
    VerificationQuery::new(
        net.clone(),
        input,
        vec![LinearConstraint::ge(coeffs, rhs).unwrap()],
        id,
    )
    .unwrap()
}

/// Shrinks each dimension of the query's box by a random factor in
/// [0.3, 0.9] around a random interior anchor, keeping the output
/// constraints; the result refines the input query.
pub fn shrink_query(rng: &mut ChaCha8Rng, q: &VerificationQuery, id: u64) -> VerificationQuery {
    let mut lo = Vec::with_capacity(q.input().dim());
    let mut hi = Vec::with_capacity(q.input().dim());
    for d in 0..q.input().dim() {
        let (l, u) = (q.input().lower()[d], q.input().upper()[d]);
        let half = 0.5 * (u - l) * rng.gen_range(0.3..0.9);
        let c = rng.gen_range((l + half)..=(u - half));
        lo.push(c - half);
        hi.push(c + half);
    }
    VerificationQuery::new(
        q.network().clone(),
        Hyperbox::new(lo, hi).unwrap(),
        q.output().to_vec(),
        id,
    )
    .unwrap()
}

pub fn verdicts_agree(v: &Verdict, o: &OracleVerdict) -> bool {
    matches!(
        (v, o),
        (Verdict::Sat(_), OracleVerdict::Sat(_)) | (Verdict::Unsat, OracleVerdict::Unsat)
    )
}

/// Vertex-enumeration feasibility oracle: a nonempty closed bounded polytope
/// has a vertex at the intersection of `n` active boundaries, so testing
/// every such intersection decides feasibility.
pub fn vertex_oracle(boxes: &Hyperbox, constraints: &[LinearConstraint]) -> bool {
    let n = boxes.dim();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        planes.push((a.clone(), boxes.lower()[i]));
        planes.push((a, boxes.upper()[i]));
    }
    for c in constraints {
        planes.push((c.coeffs.clone(), c.rhs));
    }
    let feasible =
        |x: &[f64]| boxes.contains(x, 1e-7) && constraints.iter().all(|c| c.satisfied_at(x, 1e-7));
    let mut combo = vec![0usize; n];
    fn rec(
        planes: &[(Vec<f64>, f64)],
        combo: &mut [usize],
        depth: usize,
        start: usize,
        n: usize,
        check: &dyn Fn(&[f64]) -> bool,
    ) -> bool {
        if depth == n {
            let mut a = vec![vec![0.0; n + 1]; n];
            for (r, &pi) in combo.iter().enumerate() {
                a[r][..n].copy_from_slice(&planes[pi].0[..n]);
                a[r][n] = planes[pi].1;
            }
            if let Some(x) = solve_square(&mut a) {
                if check(&x) {
                    return true;
                }
            }
            return false;
        }
        for i in start..planes.len() {
            combo[depth] = i;
            if rec(planes, combo, depth + 1, i + 1, n, check) {
                return true;
            }
        }
        false
    }
    rec(&planes, &mut combo, 0, 0, n, &feasible)
}

fn solve_square(a: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let (best, mag) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if mag < 1e-10 {
            return None;
        }
        a.swap(col, best);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}
