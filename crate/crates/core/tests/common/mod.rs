//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use lqgsdp::model::{assemble_interconnected, Weights};
use lqgsdp::{LqgProblem, Partition, SymMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// `LLᵀ + floor·I` with `L` uniform in [−1, 1].
pub fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> SymMatrix {
    let l = uniform(rng, n, n);
    SymMatrix::new(&l * l.transpose() + DMatrix::identity(n, n) * floor).unwrap()
}

/// Random valid instance with `A, B` entries in [−1, 1] and SPD weights.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize, horizon: usize) -> LqgProblem {
    let a = uniform(rng, n, n);
    let b = uniform(rng, n, m);
    LqgProblem::new(a, b, spd(rng, n, 0.5), spd(rng, m, 0.5), spd(rng, n, 0.5), spd(rng, n, 0.5), spd(rng, n, 0.5), horizon)
        .unwrap()
}

/// Instance with random sizes `n ≤ 3`, `m ≤ 2`, `N ≤ 5`.
pub fn random_small(rng: &mut ChaCha8Rng) -> LqgProblem {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=2);
    let horizon = rng.gen_range(1..=5);
    random_problem(rng, n, m, horizon)
}

/// `A = B = Q = R = Qf = W = Wf = 1`.
pub fn scalar(horizon: usize) -> LqgProblem {
    let one = || SymMatrix::identity(1);
    LqgProblem::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0), one(), one(), one(), one(), one(), horizon)
        .unwrap()
}

fn block_diag_spd(rng: &mut ChaCha8Rng, sizes: &[usize]) -> SymMatrix {
    let blocks: Vec<DMatrix<f64>> = sizes.iter().map(|&s| spd(rng, s, 0.5).into_matrix()).collect();
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    SymMatrix::new(lqgsdp::matrix::block_diag(&refs)).unwrap()
}

/// Two subsystems without coupling (`A₁₂ = A₂₁ = 0`) and with block-diagonal
/// weights and noise, so the problem separates exactly.
pub fn decoupled_problem(rng: &mut ChaCha8Rng) -> (LqgProblem, Partition) {
    let n_sizes = vec![rng.gen_range(1..=2), rng.gen_range(1..=2)];
    let m_sizes = vec![1, 1];
    let horizon = rng.gen_range(2..=4);
    let a = vec![
        vec![uniform(rng, n_sizes[0], n_sizes[0]), DMatrix::zeros(n_sizes[0], n_sizes[1])],
        vec![DMatrix::zeros(n_sizes[1], n_sizes[0]), uniform(rng, n_sizes[1], n_sizes[1])],
    ];
    let b = vec![uniform(rng, n_sizes[0], 1), uniform(rng, n_sizes[1], 1)];
    let weights = Weights {
        q: block_diag_spd(rng, &n_sizes),
        r: block_diag_spd(rng, &m_sizes),
        qf: block_diag_spd(rng, &n_sizes),
        w: block_diag_spd(rng, &n_sizes),
        wf: block_diag_spd(rng, &n_sizes),
        horizon,
    };
    let part = Partition::new(n_sizes, m_sizes).unwrap();
    let p = assemble_interconnected(&a, &b, weights, &part).unwrap();
    (p, part)
}

/// Exact cost of a scalar schedule.
pub fn scalar_cost(p: &LqgProblem, gains: &[f64]) -> f64 {
    let (a, b) = (p.a[(0, 0)], p.b[(0, 0)]);
    let (q, r, qf, w) = (p.q[(0, 0)], p.r[(0, 0)], p.qf[(0, 0)], p.w[(0, 0)]);
    let mut var = p.wf[(0, 0)];
    let mut total = 0.0;
    for f in gains {
        total += (q + r * f * f) * var;
        var = (a + b * f).powi(2) * var + w;
    }
    total + qf * var
}

/// Grid search over `[−3, 3]^N` with step `1e-3`, then once more with step
/// `1e-5` around the best cell.
pub fn grid_minimum(p: &LqgProblem) -> f64 {
    let coarse: Vec<f64> = (0..=6000).map(|i| -3.0 + i as f64 * 1e-3).collect();
    let search = |axis: &dyn Fn(usize) -> Vec<f64>| -> (f64, Vec<f64>) {
        let mut best = (f64::INFINITY, vec![]);
        match p.horizon {
            1 => {
                for &f in &axis(0) {
                    let c = scalar_cost(p, &[f]);
                    if c < best.0 {
                        best = (c, vec![f]);
                    }
                }
            }
            2 => {
                let (a0, a1) = (axis(0), axis(1));
                for &f0 in &a0 {
                    for &f1 in &a1 {
                        let c = scalar_cost(p, &[f0, f1]);
                        if c < best.0 {
                            best = (c, vec![f0, f1]);
                        }
                    }
                }
            }
            _ => unreachable!("grid oracle covers N <= 2"),
        }
        best
    };
    let (_, center) = search(&|_| coarse.clone());
    let (best, _) = search(&|k| (0..=200).map(|i| center[k] - 1e-3 + i as f64 * 1e-5).collect());
    best
}
