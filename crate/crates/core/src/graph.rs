//! Temporal adjacency tensors, acyclicity machinery and summary aggregation.
//!
//! Slice `tau` of a temporal adjacency holds the edges `X^i_{t-tau} -> X^j_t`
//! at entry `(tau, i, j)`. Only slice `0` can contain cycles.

use std::collections::BTreeSet;

use ndarray::{Array2, Array3, Axis};

use crate::error::{Result, RhinoError};
use crate::scalar::Scalar;

/// Binary temporal adjacency `G_{0:K}` over `D` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalGraph {
    adjacency: Array3<u8>,
    finalized: bool,
}

impl TemporalGraph {
    pub fn empty(num_nodes: usize, max_lag: usize) -> Self {
        TemporalGraph {
            adjacency: Array3::zeros((max_lag + 1, num_nodes, num_nodes)),
            finalized: false,
        }
    }

    /// Wraps a `(K+1, D, D)` tensor after checking it is binary with no
    /// instantaneous self-loops.
    pub fn from_adjacency(adjacency: Array3<u8>) -> Result<Self> {
        let (_, d, d2) = adjacency.dim();
        if d != d2 {
            return Err(RhinoError::invalid("adjacency slices must be square"));
        }
        if let Some(v) = adjacency.iter().find(|&&v| v > 1) {
            return Err(RhinoError::invalid(format!("adjacency entry {v} is not binary")));
        }
        if (0..d).any(|i| adjacency[[0, i, i]] != 0) {
            return Err(RhinoError::invalid("instantaneous self-loop"));
        }
        Ok(TemporalGraph {
            adjacency,
            finalized: false,
        })
    }

    /// Marks the graph as a reported result; fails if slice 0 has a cycle.
    pub fn finalize(mut self) -> Result<Self> {
        topological_order(&self.instantaneous())?;
        self.finalized = true;
        Ok(self)
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.dim().1
    }

    pub fn max_lag(&self) -> usize {
        self.adjacency.dim().0 - 1
    }

    pub fn adjacency(&self) -> &Array3<u8> {
        &self.adjacency
    }

    pub fn has_edge(&self, lag: usize, src: usize, dst: usize) -> bool {
        self.adjacency[[lag, src, dst]] == 1
    }

    pub fn set_edge(&mut self, lag: usize, src: usize, dst: usize, present: bool) -> Result<()> {
        if lag == 0 && src == dst && present {
            return Err(RhinoError::invalid("instantaneous self-loop"));
        }
        if lag > self.max_lag() || src >= self.num_nodes() || dst >= self.num_nodes() {
            return Err(RhinoError::invalid(format!(
                "edge ({lag}, {src}, {dst}) out of range"
            )));
        }
        self.adjacency[[lag, src, dst]] = present as u8;
        self.finalized = false;
        Ok(())
    }

    /// The lag-0 slice.
    pub fn instantaneous(&self) -> Array2<u8> {
        self.adjacency.index_axis(Axis(0), 0).to_owned()
    }

    /// All present edges as `(lag, src, dst)`.
    pub fn edges(&self) -> Vec<(usize, usize, usize)> {
        self.adjacency
            .indexed_iter()
            .filter(|(_, &v)| v == 1)
            .map(|(idx, _)| idx)
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_real<T: Scalar>(&self) -> Array3<T> {
        self.adjacency.mapv(|v| if v == 1 { T::one() } else { T::zero() })
    }

    /// Same graph with every incoming edge of `node` (any lag) removed.
    pub fn mutilated(&self, node: usize) -> Self {
        let mut adjacency = self.adjacency.clone();
        adjacency.index_axis_mut(Axis(2), node).fill(0);
        TemporalGraph {
            adjacency,
            finalized: self.finalized,
        }
    }
}

/// Time-aggregated graph; binary or scored with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryGraph<T> {
    pub adjacency: Array2<T>,
}

impl<T: Scalar> SummaryGraph<T> {
    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }
}

/// `exp(A)` by scaling and squaring with a 30-term Taylor core.
pub fn expm<T: Scalar>(a: &Array2<T>) -> Result<Array2<T>> {
    let (n, m) = a.dim();
    if n != m {
        return Err(RhinoError::invalid("matrix exponential of a non-square matrix"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(RhinoError::invalid("matrix exponential of non-finite entries"));
    }
    let norm = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<T>())
        .fold(T::zero(), T::max);
    let mut squarings = 0u32;
    let mut scale = T::one();
    while norm * scale > T::lit(0.5) {
        scale = scale * T::lit(0.5);
        squarings += 1;
    }
    let scaled = a.mapv(|x| x * scale);
    let mut result = Array2::<T>::eye(n);
    let mut term = Array2::<T>::eye(n);
    for k in 1..=30 {
        term = term.dot(&scaled).mapv(|x| x / T::from_usize(k).unwrap());
        result += &term;
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    Ok(result)
}

/// Smooth acyclicity measure `h(W) = tr(exp(W ⊙ W)) - D`.
///
/// Zero exactly on acyclic binary matrices, positive whenever a directed
/// cycle carries weight.
pub fn dag_penalty<T: Scalar>(inst: &Array2<T>) -> Result<T> {
    if inst.nrows() != inst.ncols() {
        return Err(RhinoError::invalid("DAG penalty needs a square matrix"));
    }
    let sq = inst.mapv(|x| x * x);
    let e = expm(&sq)?;
    let d = T::from_usize(inst.nrows()).unwrap();
    Ok((e.diag().sum() - d).max(T::zero()))
}

fn nonzero<A: Copy + PartialEq + Default>(x: A) -> bool {
    x != A::default()
}

/// Exact acyclicity check; any nonzero entry counts as an edge.
pub fn is_dag<A: Copy + PartialEq + Default>(inst: &Array2<A>) -> bool {
    topological_order(inst).is_ok()
}

/// Kahn elimination, always taking the smallest available node index.
pub fn topological_order<A: Copy + PartialEq + Default>(inst: &Array2<A>) -> Result<Vec<usize>> {
    let n = inst.nrows();
    if inst.ncols() != n {
        return Err(RhinoError::invalid("adjacency must be square"));
    }
    let mut indegree: Vec<usize> = (0..n)
        .map(|j| (0..n).filter(|&i| nonzero(inst[[i, j]])).count())
        .collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&j| indegree[j] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for j in 0..n {
            if nonzero(inst[[i, j]]) {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.insert(j);
                }
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err(RhinoError::Cycle {
            nodes: find_cycle(inst).unwrap_or_default(),
        })
    }
}

/// One directed cycle as a node sequence, if any exists.
pub fn find_cycle<A: Copy + PartialEq + Default>(inst: &Array2<A>) -> Option<Vec<usize>> {
    let n = inst.nrows();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut stack: Vec<usize> = Vec::new();
    fn visit<A: Copy + PartialEq + Default>(
        u: usize,
        inst: &Array2<A>,
        state: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[u] = 1;
        stack.push(u);
        for v in 0..inst.nrows() {
            if !nonzero(inst[[u, v]]) {
                continue;
            }
            if state[v] == 1 {
                let start = stack.iter().position(|&w| w == v).unwrap();
                return Some(stack[start..].to_vec());
            }
            if state[v] == 0 {
                if let Some(c) = visit(v, inst, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state[u] = 2;
        None
    }
    for u in 0..n {
        if state[u] == 0 {
            if let Some(c) = visit(u, inst, &mut state, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

/// Deletes, one at a time, the lowest-scored edge on some remaining cycle
/// until `inst` is acyclic. Returns the removed `(src, dst)` pairs.
pub fn remove_cycles_greedy<T: Scalar>(inst: &mut Array2<u8>, scores: &Array2<T>) -> Vec<(usize, usize)> {
    let mut removed = Vec::new();
    while let Some(cycle) = find_cycle(inst) {
        let weakest = (0..cycle.len())
            .map(|k| (cycle[k], cycle[(k + 1) % cycle.len()]))
            .min_by(|a, b| scores[[a.0, a.1]].partial_cmp(&scores[[b.0, b.1]]).unwrap())
            .expect("cycle has at least one edge");
        inst[[weakest.0, weakest.1]] = 0;
        removed.push(weakest);
    }
    removed
}

/// Edge `i -> j` iff it appears at any lag.
pub fn aggregate_summary_binary(g: &TemporalGraph, ignore_self: bool) -> SummaryGraph<f64> {
    let d = g.num_nodes();
    let summed = g.adjacency().map_axis(Axis(0), |lane| lane.iter().map(|&v| v as u32).sum::<u32>());
    let mut adjacency = summed.mapv(|s| if s > 0 { 1.0 } else { 0.0 });
    if ignore_self {
        for i in 0..d {
            adjacency[[i, i]] = 0.0;
        }
    }
    SummaryGraph { adjacency }
}

/// Score of `i -> j` is the maximum over lags.
pub fn aggregate_summary_prob<T: Scalar>(p: &Array3<T>, ignore_self: bool) -> Result<SummaryGraph<T>> {
    if p.iter().any(|&x| !(x >= T::zero() && x <= T::one())) {
        return Err(RhinoError::invalid("edge probabilities must lie in [0, 1]"));
    }
    let mut adjacency = p.map_axis(Axis(0), |lane| lane.fold(T::zero(), |m, &x| m.max(x)));
    if ignore_self {
        for i in 0..adjacency.nrows() {
            adjacency[[i, i]] = T::zero();
        }
    }
    Ok(SummaryGraph { adjacency })
}
