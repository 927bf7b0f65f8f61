//! Factor graphs (variable/clause incidence) and instance batching.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::cnf::{CnfFormula, Literal};
use crate::tensor::Matrix;

/// A sparse 0/1 matrix kept in both row-major (CSR) and column-major (CSC)
/// order so products with it and with its transpose are both row scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinary {
    rows: usize,
    cols: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    col_ptr: Vec<u32>,
    row_idx: Vec<u32>,
}

impl SparseBinary {
    /// Builds from (row, col) pairs. Repeated pairs collapse to a single 1.
    pub fn from_entries(rows: usize, cols: usize, entries: &[(usize, usize)]) -> Self {
        let mut sorted: Vec<(u32, u32)> = entries.iter().map(|&(r, c)| (r as u32, c as u32)).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let mut row_ptr = vec![0u32; rows + 1];
        for &(r, c) in &sorted {
            assert!((r as usize) < rows && (c as usize) < cols, "sparse entry out of bounds");
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<u32> = sorted.iter().map(|&(_, c)| c).collect();

        let mut by_col = sorted.clone();
        by_col.sort_unstable_by_key(|&(r, c)| (c, r));
        let mut col_ptr = vec![0u32; cols + 1];
        for &(_, c) in &by_col {
            col_ptr[c as usize + 1] += 1;
        }
        for j in 0..cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let row_idx = by_col.iter().map(|&(r, _)| r).collect();
        SparseBinary {
            rows,
            cols,
            row_ptr,
            col_idx,
            col_ptr,
            row_idx,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices of the ones in row `r`, ascending.
    pub fn row_entries(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize]
    }

    /// Row indices of the ones in column `c`, ascending.
    pub fn col_entries(&self, c: usize) -> &[u32] {
        &self.row_idx[self.col_ptr[c] as usize..self.col_ptr[c + 1] as usize]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row_entries(r).binary_search(&(c as u32)).is_ok()
    }

    pub fn transpose(&self) -> SparseBinary {
        SparseBinary {
            rows: self.cols,
            cols: self.rows,
            row_ptr: self.col_ptr.clone(),
            col_idx: self.row_idx.clone(),
            col_ptr: self.row_ptr.clone(),
            row_idx: self.col_idx.clone(),
        }
    }

    /// Stacks `self` above `other` (same column count).
    pub fn stack_rows(&self, other: &SparseBinary) -> SparseBinary {
        assert_eq!(self.cols, other.cols);
        let mut entries = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.rows {
            entries.extend(self.row_entries(r).iter().map(|&c| (r, c as usize)));
        }
        for r in 0..other.rows {
            entries.extend(other.row_entries(r).iter().map(|&c| (self.rows + r, c as usize)));
        }
        SparseBinary::from_entries(self.rows + other.rows, self.cols, &entries)
    }

    /// `A · x` for `x` with `cols` rows; sums in ascending column order.
    pub fn matmul(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.cols, "sparse matmul shape mismatch");
        let d = x.cols();
        let mut out = Matrix::zeros(self.rows, d);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for &c in self.row_entries(r) {
                for (o, &v) in dst.iter_mut().zip(x.row(c as usize)) {
                    *o += v;
                }
            }
        }
        out
    }

    /// `Aᵀ · x` for `x` with `rows` rows; sums in ascending row order.
    pub fn matmul_transposed(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.rows, "sparse matmul shape mismatch");
        let d = x.cols();
        let mut out = Matrix::zeros(self.cols, d);
        for c in 0..self.cols {
            let dst = out.row_mut(c);
            for &r in self.col_entries(c) {
                for (o, &v) in dst.iter_mut().zip(x.row(r as usize)) {
                    *o += v;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for &c in self.row_entries(r) {
                m.set(r, c as usize, 1.0);
            }
        }
        m
    }
}

/// One literal occurrence inside a clause: 0-based variable plus polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occurrence {
    pub var: u32,
    pub negated: bool,
}

/// Bipartite variable/clause incidence of a formula (or a disjoint union of
/// formulas). `a_pos[i, c] = 1` iff variable `i` appears positively in clause
/// `c`; `a_neg` likewise for negated occurrences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorGraph {
    n: usize,
    m: usize,
    a_pos: SparseBinary,
    a_neg: SparseBinary,
    clause_ptr: Vec<u32>,
    occurrences: Vec<Occurrence>,
}

impl FactorGraph {
    pub fn new(formula: &CnfFormula) -> Self {
        let clauses: Vec<&[Literal]> = formula.clauses().iter().map(Vec::as_slice).collect();
        Self::from_clauses(formula.num_vars(), &clauses)
    }

    fn from_clauses(n: usize, clauses: &[&[Literal]]) -> Self {
        let m = clauses.len();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut clause_ptr = Vec::with_capacity(m + 1);
        let mut occurrences = Vec::new();
        clause_ptr.push(0);
        for (c, clause) in clauses.iter().enumerate() {
            for lit in clause.iter() {
                if lit.is_negated() {
                    neg.push((lit.var(), c));
                } else {
                    pos.push((lit.var(), c));
                }
                occurrences.push(Occurrence {
                    var: lit.var() as u32,
                    negated: lit.is_negated(),
                });
            }
            clause_ptr.push(occurrences.len() as u32);
        }
        FactorGraph {
            n,
            m,
            a_pos: SparseBinary::from_entries(n, m, &pos),
            a_neg: SparseBinary::from_entries(n, m, &neg),
            clause_ptr,
            occurrences,
        }
    }

    /// Disjoint union; variables and clauses of part `k` follow those of part `k - 1`.
    pub fn disjoint_union(parts: &[&FactorGraph]) -> FactorGraph {
        let n: usize = parts.iter().map(|g| g.n).sum();
        let m: usize = parts.iter().map(|g| g.m).sum();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut clause_ptr = Vec::with_capacity(m + 1);
        let mut occurrences = Vec::new();
        clause_ptr.push(0);
        let (mut voff, mut coff) = (0usize, 0usize);
        for g in parts {
            for c in 0..g.m {
                for occ in g.clause(c) {
                    let v = occ.var as usize + voff;
                    if occ.negated {
                        neg.push((v, c + coff));
                    } else {
                        pos.push((v, c + coff));
                    }
                    occurrences.push(Occurrence {
                        var: v as u32,
                        negated: occ.negated,
                    });
                }
                clause_ptr.push(occurrences.len() as u32);
            }
            voff += g.n;
            coff += g.m;
        }
        FactorGraph {
            n,
            m,
            a_pos: SparseBinary::from_entries(n, m, &pos),
            a_neg: SparseBinary::from_entries(n, m, &neg),
            clause_ptr,
            occurrences,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_clauses(&self) -> usize {
        self.m
    }

    pub fn a_pos(&self) -> &SparseBinary {
        &self.a_pos
    }

    pub fn a_neg(&self) -> &SparseBinary {
        &self.a_neg
    }

    /// Literal occurrences of clause `c` in formula order.
    pub fn clause(&self, c: usize) -> &[Occurrence] {
        &self.occurrences[self.clause_ptr[c] as usize..self.clause_ptr[c + 1] as usize]
    }

    pub fn num_literals(&self) -> usize {
        self.occurrences.len()
    }

    /// Positive literals stacked over negative literals (2n × m).
    pub fn literal_incidence(&self) -> SparseBinary {
        self.a_pos.stack_rows(&self.a_neg)
    }

    pub fn clause_satisfied(&self, c: usize, bits: &[bool]) -> bool {
        self.clause(c).iter().any(|o| bits[o.var as usize] != o.negated)
    }

    /// Recovers the formula (literal order within clauses preserved).
    pub fn to_formula(&self) -> CnfFormula {
        let clauses = (0..self.m)
            .map(|c| self.clause(c).iter().map(|o| Literal::from_var(o.var as usize, o.negated)).collect())
            .collect();
        CnfFormula::new(self.n.max(1), clauses).expect("factor graph holds a valid formula")
    }
}

/// Factor-graph construction is a pure function of the formula.
pub fn build_factor_graph(formula: &CnfFormula) -> FactorGraph {
    FactorGraph::new(formula)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BatchError {
    #[error("instance {instance} has {nodes} nodes, exceeding the node budget {budget}")]
    OversizedInstance { instance: usize, nodes: usize, budget: usize },
    #[error("node budget must be positive")]
    ZeroBudget,
}

/// Several instances packed into one factor graph.
#[derive(Debug, Clone)]
pub struct Batch {
    graph: FactorGraph,
    var_offsets: Vec<usize>,
    clause_offsets: Vec<usize>,
    instance_ids: Vec<usize>,
    var_segments: Vec<u32>,
    clause_segments: Vec<u32>,
}

impl Batch {
    /// Packs the given graphs in order; `ids` name the original instances.
    pub fn from_graphs(parts: &[&FactorGraph], ids: Vec<usize>) -> Batch {
        assert_eq!(parts.len(), ids.len());
        let graph = FactorGraph::disjoint_union(parts);
        let mut var_offsets = vec![0];
        let mut clause_offsets = vec![0];
        let mut var_segments = Vec::with_capacity(graph.num_vars());
        let mut clause_segments = Vec::with_capacity(graph.num_clauses());
        for (k, g) in parts.iter().enumerate() {
            var_offsets.push(var_offsets[k] + g.num_vars());
            clause_offsets.push(clause_offsets[k] + g.num_clauses());
            var_segments.extend(core::iter::repeat_n(k as u32, g.num_vars()));
            clause_segments.extend(core::iter::repeat_n(k as u32, g.num_clauses()));
        }
        Batch {
            graph,
            var_offsets,
            clause_offsets,
            instance_ids: ids,
            var_segments,
            clause_segments,
        }
    }

    pub fn single(graph: &FactorGraph) -> Batch {
        Batch::from_graphs(&[graph], vec![0])
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn num_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn instance_ids(&self) -> &[usize] {
        &self.instance_ids
    }

    pub fn var_offsets(&self) -> &[usize] {
        &self.var_offsets
    }

    pub fn clause_offsets(&self) -> &[usize] {
        &self.clause_offsets
    }

    pub fn var_range(&self, k: usize) -> core::ops::Range<usize> {
        self.var_offsets[k]..self.var_offsets[k + 1]
    }

    pub fn clause_range(&self, k: usize) -> core::ops::Range<usize> {
        self.clause_offsets[k]..self.clause_offsets[k + 1]
    }

    /// Instance index of every variable row.
    pub fn var_segments(&self) -> &[u32] {
        &self.var_segments
    }

    /// Instance index of every clause row.
    pub fn clause_segments(&self) -> &[u32] {
        &self.clause_segments
    }

    pub fn node_count(&self) -> usize {
        self.graph.num_vars() + self.graph.num_clauses()
    }

    /// Whether instance `k` is satisfied by the batch-wide bit vector.
    pub fn instance_satisfied(&self, k: usize, bits: &[bool]) -> bool {
        self.clause_range(k).all(|c| self.graph.clause_satisfied(c, bits))
    }

    /// Instance `k` as its own factor graph.
    pub fn instance_graph(&self, k: usize) -> FactorGraph {
        let vr = self.var_range(k);
        let clauses: Vec<Vec<Literal>> = self
            .clause_range(k)
            .map(|c| {
                self.graph
                    .clause(c)
                    .iter()
                    .map(|o| Literal::from_var(o.var as usize - vr.start, o.negated))
                    .collect()
            })
            .collect();
        let refs: Vec<&[Literal]> = clauses.iter().map(Vec::as_slice).collect();
        FactorGraph::from_clauses(vr.len(), &refs)
    }
}

/// Greedy first-fit packing in input order: each formula goes to the first
/// batch with room for it, or opens a new batch.
pub fn batch_formulas(formulas: &[CnfFormula], node_budget: usize) -> Result<Vec<Batch>, BatchError> {
    let graphs: Vec<FactorGraph> = formulas.iter().map(FactorGraph::new).collect();
    let refs: Vec<&FactorGraph> = graphs.iter().collect();
    batch_graphs(&refs, node_budget)
}

/// [`batch_formulas`] over prebuilt factor graphs; instance ids are input positions.
pub fn batch_graphs(graphs: &[&FactorGraph], node_budget: usize) -> Result<Vec<Batch>, BatchError> {
    let plan = plan_batches(graphs.iter().map(|g| g.num_vars() + g.num_clauses()), node_budget)?;
    Ok(plan
        .into_iter()
        .map(|ids| {
            let parts: Vec<&FactorGraph> = ids.iter().map(|&i| graphs[i]).collect();
            Batch::from_graphs(&parts, ids)
        })
        .collect())
}

/// First-fit assignment of items (by node count) to bins of `node_budget`.
pub fn plan_batches(sizes: impl IntoIterator<Item = usize>, node_budget: usize) -> Result<Vec<Vec<usize>>, BatchError> {
    if node_budget == 0 {
        return Err(BatchError::ZeroBudget);
    }
    let mut bins: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, size) in sizes.into_iter().enumerate() {
        if size > node_budget {
            return Err(BatchError::OversizedInstance {
                instance: i,
                nodes: size,
                budget: node_budget,
            });
        }
        match bins.iter_mut().find(|(used, _)| used + size <= node_budget) {
            Some((used, ids)) => {
                *used += size;
                ids.push(i);
            }
            None => bins.push((size, vec![i])),
        }
    }
    Ok(bins.into_iter().map(|(_, ids)| ids).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(n: usize, clauses: &[&[i32]]) -> CnfFormula {
        CnfFormula::from_ints(n, clauses).unwrap()
    }

    #[test]
    fn factor_graph_examples() {
        let g = FactorGraph::new(&f(2, &[&[1, -2], &[2]]));
        assert!(g.a_pos().get(0, 0));
        assert!(g.a_pos().get(1, 1));
        assert_eq!(g.a_pos().nnz(), 2);
        assert!(g.a_neg().get(1, 0));
        assert_eq!(g.a_neg().nnz(), 1);

        let g = FactorGraph::new(&f(3, &[&[1, 2]]));
        assert!(g.a_pos().row_entries(2).is_empty());
        assert!(g.a_neg().row_entries(2).is_empty());

        let g = FactorGraph::new(&f(1, &[&[1, -1]]));
        assert!(g.a_pos().get(0, 0) && g.a_neg().get(0, 0));
    }

    #[test]
    fn batching_examples() {
        // n + m = 6 and 7
        let a = f(3, &[&[1], &[2], &[3]]);
        let b = f(4, &[&[1], &[2], &[3]]);
        let batches = batch_formulas(&[a.clone(), b.clone()], 20).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].var_range(0), 0..3);
        assert_eq!(batches[0].var_range(1), 3..7);
        let batches = batch_formulas(&[a.clone(), b], 10).unwrap();
        assert_eq!(batches.len(), 2);

        let big = f(10, &(0..20).map(|_| &[1i32][..]).collect::<Vec<_>>());
        assert_eq!(big.node_count(), 30);
        assert_eq!(
            batch_formulas(&[a, big], 20).unwrap_err(),
            BatchError::OversizedInstance {
                instance: 1,
                nodes: 30,
                budget: 20
            }
        );
    }

    #[test]
    fn first_fit_uses_earlier_bins() {
        let plan = plan_batches([6, 7, 3], 10).unwrap();
        assert_eq!(plan, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn batch_recovers_instances() {
        let a = f(2, &[&[1, -2], &[2]]);
        let b = f(3, &[&[-1, 3], &[2, -3], &[1]]);
        let batch = batch_formulas(&[a.clone(), b.clone()], 100).unwrap().remove(0);
        assert_eq!(batch.instance_graph(0).to_formula(), a);
        assert_eq!(batch.instance_graph(1).to_formula(), b);
        assert_eq!(batch.var_segments(), &[0, 0, 1, 1, 1]);
        assert_eq!(batch.clause_segments(), &[0, 0, 1, 1, 1]);
    }

    #[test]
    fn sparse_products_match_dense() {
        let entries = [(0, 1), (2, 0), (2, 3), (1, 1)];
        let s = SparseBinary::from_entries(3, 4, &entries);
        let x = Matrix::from_vec(4, 2, (0..8).map(|i| i as f32 * 0.5 - 1.0).collect());
        assert_eq!(s.matmul(&x), crate::tensor::matmul(&s.to_dense(), &x));
        let y = Matrix::from_vec(3, 2, (0..6).map(|i| i as f32 + 0.25).collect());
        assert_eq!(s.matmul_transposed(&y), crate::tensor::matmul(&s.to_dense().transpose(), &y));
    }
}
