use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::local::LocalTrustMatrix;
use super::{NodeId, TrustError};

pub const CONVERGENCE_TOLERANCE: f64 = 1e-9;
pub const MAX_SWEEPS: usize = 200;
/// Plain sweeps before switching to repeated squaring.
pub const LINEAR_SWEEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustVector {
    pub values: BTreeMap<NodeId, f64>,
    pub iteration_count: usize,
    pub converged: bool,
}

impl TrustVector {
    pub fn uniform(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let nodes: Vec<NodeId> = nodes.into_iter().collect();
        let v = 1.0 / nodes.len().max(1) as f64;
        TrustVector {
            values: nodes.into_iter().map(|id| (id, v)).collect(),
            iteration_count: 0,
            converged: true,
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = (NodeId, f64)>) -> Self {
        TrustVector {
            values: values.into_iter().collect(),
            iteration_count: 0,
            converged: true,
        }
    }

    pub fn get(&self, id: NodeId) -> Option<f64> {
        self.values.get(&id).copied()
    }

    pub fn sum(&self) -> f64 {
        self.values.values().sum()
    }
}

pub enum InitialTrust<'a> {
    Uniform,
    From(&'a TrustVector),
}

/// `p * p`, scaled so the largest entry is one.
fn square_scaled(p: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for k in 0..n {
            let a = p[r * n + k];
            if a != 0.0 {
                for c in 0..n {
                    out[r * n + c] += a * p[k * n + c];
                }
            }
        }
    }
    let max = out.iter().fold(0.0f64, |m, &x| m.max(x));
    if max > 0.0 {
        out.iter_mut().for_each(|x| *x /= max);
    }
    out
}

fn l1_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Global trust as the fixed point of `T_i = sum_j C_ji T_j`.
///
/// Each sweep computes `T <- normalize(T + C^T T)`. The added identity term
/// leaves the fixed points unchanged but damps the period-two oscillation a
/// bipartite trust graph would otherwise cause. Stops when the L1 change
/// drops below [`CONVERGENCE_TOLERANCE`] or after [`MAX_SWEEPS`].
///
/// Sweeps past [`LINEAR_SWEEPS`] square the update matrix each time, so a
/// slowly mixing network still lands on the fixed point within the budget.
pub fn global_trust(matrix: &LocalTrustMatrix, initial: InitialTrust<'_>) -> Result<TrustVector, TrustError> {
    let nodes = matrix.nodes();
    let n = nodes.len();
    if n == 0 {
        return Err(TrustError::EmptyMatrix);
    }
    if n == 1 {
        return Ok(TrustVector {
            values: BTreeMap::from([(nodes[0], 1.0)]),
            iteration_count: 0,
            converged: true,
        });
    }
    let index: BTreeMap<NodeId, usize> = nodes.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let edges: Vec<(usize, usize, f64)> = matrix
        .entries()
        .filter(|(_, e)| e.value != 0.0)
        .filter_map(|(&(i, j), e)| Some((*index.get(&i)?, *index.get(&j)?, e.value)))
        .collect();

    let mut t: Vec<f64> = match initial {
        InitialTrust::Uniform => vec![1.0 / n as f64; n],
        InitialTrust::From(prev) => nodes.iter().map(|id| prev.get(*id).unwrap_or(0.0).max(0.0)).collect(),
    };
    if t.iter().sum::<f64>() <= 0.0 {
        t = vec![1.0 / n as f64; n];
    }
    l1_normalize(&mut t);

    let mut sweeps = 0;
    let mut converged = false;
    // Dense `I + C^T`, row-major, built only once the linear phase runs out.
    let mut power: Option<Vec<f64>> = None;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut next = if sweeps <= LINEAR_SWEEPS {
            let mut next = t.clone();
            for &(i, j, c) in &edges {
                next[j] += c * t[i];
            }
            next
        } else {
            let p = power.get_or_insert_with(|| {
                let mut p = vec![0.0; n * n];
                (0..n).for_each(|k| p[k * n + k] = 1.0);
                for &(i, j, c) in &edges {
                    p[j * n + i] += c;
                }
                p
            });
            let next = (0..n).map(|r| (0..n).map(|k| p[r * n + k] * t[k]).sum()).collect();
            *p = square_scaled(p, n);
            next
        };
        l1_normalize(&mut next);
        let delta: f64 = next.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum();
        t = next;
        if delta < CONVERGENCE_TOLERANCE {
            converged = true;
            break;
        }
    }

    Ok(TrustVector {
        values: nodes.iter().copied().zip(t).collect(),
        iteration_count: sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u32) -> Vec<NodeId> {
        (1..=n).map(NodeId).collect()
    }

    #[test]
    fn swap_matrix_fixed_in_one_sweep() {
        let nodes = ids(2);
        let m = LocalTrustMatrix::from_dense(&nodes, &[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let t = global_trust(&m, InitialTrust::Uniform).unwrap();
        assert!(t.converged);
        assert_eq!(t.iteration_count, 1);
        assert_eq!(t.get(NodeId(1)), Some(0.5));
        assert_eq!(t.get(NodeId(2)), Some(0.5));
    }

    #[test]
    fn uniform_matrix_is_fixed_point() {
        for n in 1..=9u32 {
            let nodes = ids(n);
            let rows = vec![vec![1.0 / n as f64; n as usize]; n as usize];
            let m = LocalTrustMatrix::from_dense(&nodes, &rows);
            let t = global_trust(&m, InitialTrust::Uniform).unwrap();
            for v in t.values.values() {
                assert!((v - 1.0 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn three_node_chain() {
        // Frozen from a Cesaro-averaged dense power iteration (1000 sweeps).
        let nodes = ids(3);
        let rows = vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]];
        let t = global_trust(&LocalTrustMatrix::from_dense(&nodes, &rows), InitialTrust::Uniform).unwrap();
        assert!(t.converged);
        let expected = [0.25, 0.5, 0.25];
        for (k, id) in nodes.iter().enumerate() {
            assert!((t.get(*id).unwrap() - expected[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn singleton_and_empty() {
        let m = LocalTrustMatrix::new([NodeId(4)]);
        assert_eq!(global_trust(&m, InitialTrust::Uniform).unwrap().get(NodeId(4)), Some(1.0));
        let empty = LocalTrustMatrix::new([]);
        assert_eq!(global_trust(&empty, InitialTrust::Uniform), Err(TrustError::EmptyMatrix));
    }

    #[test]
    fn warm_start_from_previous() {
        let nodes = ids(3);
        let rows = vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]];
        let m = LocalTrustMatrix::from_dense(&nodes, &rows);
        let first = global_trust(&m, InitialTrust::Uniform).unwrap();
        let second = global_trust(&m, InitialTrust::From(&first)).unwrap();
        assert!(second.iteration_count <= 2);
        assert!((second.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slow_leak_into_closed_pair() {
        // 1 and 5 only trust each other; everyone else slowly drains into
        // them, so all the mass ends up split between the pair.
        let nodes = ids(6);
        let u = 1.0 / 6.0;
        let rows = vec![
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            vec![u, u, u, u, u, u],
            vec![0.0, 0.5, 0.0, 0.75, 0.0, 0.25],
            vec![0.0, 0.6, 0.4, 0.0, 0.0, 0.1],
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.4, 0.2, 0.0, 0.4, 0.0, 0.0],
        ];
        let t = global_trust(&LocalTrustMatrix::from_dense(&nodes, &rows), InitialTrust::Uniform).unwrap();
        assert!(t.converged);
        assert!(t.iteration_count > LINEAR_SWEEPS);
        for (k, id) in nodes.iter().enumerate() {
            let want = if k == 0 || k == 4 { 0.5 } else { 0.0 };
            assert!((t.get(*id).unwrap() - want).abs() < 1e-8, "{k}: {:?}", t.get(*id));
        }
    }
}
