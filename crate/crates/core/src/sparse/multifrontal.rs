//! Multifrontal LU for structurally symmetric matrices that come from a
//! stencil on a rectangular cell grid.
//!
//! Every unknown is tagged with the cell it lives in, and all couplings must
//! stay within the 3×3 block of neighbouring cells. The elimination order is a
//! geometric nested dissection: a rectangle of cells is split by one line of
//! cells, the halves are eliminated first and the separator last. Each tree
//! node is factorised as a dense frontal matrix with partial pivoting
//! restricted to its own (fully summed) rows.

use alloc::vec;
use alloc::vec::Vec;

use super::CsrMatrix;

const LEAF_CELLS: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("ordering covers {ordering} unknowns but the matrix has {matrix}")]
    SizeMismatch { ordering: usize, matrix: usize },
    #[error("unknown {var} couples to {other}, which is not in a neighbouring cell")]
    NonLocalCoupling { var: usize, other: usize },
    #[error("zero pivot while eliminating unknown {var}")]
    Singular { var: usize },
}

/// Cell coordinates of each unknown on an `ncx × ncy` grid.
#[derive(Debug, Clone)]
pub struct GridOrdering {
    pub ncx: usize,
    pub ncy: usize,
    pub cell_of: Vec<(u32, u32)>,
}

struct TreeNode {
    children: Vec<usize>,
}

struct Front {
    own: Vec<usize>,
    boundary: Vec<usize>,
    perm: Vec<usize>,
    /// p × f rows: strict lower part holds L11, the rest U11 and U12.
    upper: Vec<f64>,
    /// b × p block L21.
    lower: Vec<f64>,
}

/// Factorisation `P·A = L·U` held as a tree of dense fronts.
pub struct SparseLu {
    n: usize,
    fronts: Vec<Front>,
    fill: usize,
}

impl core::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SparseLu")
            .field("n", &self.n)
            .field("fronts", &self.fronts.len())
            .field("fill", &self.fill)
            .finish()
    }
}

fn dissect(
    rect: (usize, usize, usize, usize),
    ncy: usize,
    nodes: &mut Vec<TreeNode>,
    cell_node: &mut [u32],
) -> usize {
    let (i0, i1, j0, j1) = rect;
    let w = i1 - i0;
    let h = j1 - j0;
    let mut children = Vec::new();
    let sep: (usize, usize, usize, usize);
    if w * h <= LEAF_CELLS || (w <= 2 && h <= 2) {
        sep = rect;
    } else if w >= h {
        let m = i0 + w / 2;
        children.push(dissect((i0, m, j0, j1), ncy, nodes, cell_node));
        if m + 1 < i1 {
            children.push(dissect((m + 1, i1, j0, j1), ncy, nodes, cell_node));
        }
        sep = (m, m + 1, j0, j1);
    } else {
        let m = j0 + h / 2;
        children.push(dissect((i0, i1, j0, m), ncy, nodes, cell_node));
        if m + 1 < j1 {
            children.push(dissect((i0, i1, m + 1, j1), ncy, nodes, cell_node));
        }
        sep = (i0, i1, m, m + 1);
    }
    let id = nodes.len();
    nodes.push(TreeNode { children });
    for i in sep.0..sep.1 {
        for j in sep.2..sep.3 {
            cell_node[i * ncy + j] = id as u32;
        }
    }
    id
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix, ordering: &GridOrdering) -> Result<SparseLu, FactorError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(FactorError::NotSquare(a.nrows(), a.ncols()));
        }
        if ordering.cell_of.len() != n {
            return Err(FactorError::SizeMismatch {
                ordering: ordering.cell_of.len(),
                matrix: n,
            });
        }
        let at = a.transpose();
        let (ncx, ncy) = (ordering.ncx, ordering.ncy);

        let mut nodes = Vec::new();
        let mut cell_node = vec![u32::MAX; ncx * ncy];
        if ncx > 0 && ncy > 0 {
            dissect((0, ncx, 0, ncy), ncy, &mut nodes, &mut cell_node);
        }
        let var_node: Vec<usize> = ordering
            .cell_of
            .iter()
            .map(|&(i, j)| cell_node[i as usize * ncy + j as usize] as usize)
            .collect();

        for v in 0..n {
            let (ci, cj) = ordering.cell_of[v];
            for (&u, _) in a.row(v).0.iter().zip(a.row(v).1) {
                let (ui, uj) = ordering.cell_of[u];
                if (ci as i64 - ui as i64).abs() > 1 || (cj as i64 - uj as i64).abs() > 1 {
                    return Err(FactorError::NonLocalCoupling { var: v, other: u });
                }
            }
        }

        let mut own_of: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for (v, &k) in var_node.iter().enumerate() {
            own_of[k].push(v);
        }

        let mut fronts: Vec<Front> = Vec::with_capacity(nodes.len());
        // contribution blocks awaiting their parent: (boundary vars, b×b values)
        let mut stack: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        let mut pos = vec![usize::MAX; n];
        let mut mark = vec![usize::MAX; n];
        let mut fill = 0usize;

        for k in 0..nodes.len() {
            let own = core::mem::take(&mut own_of[k]);
            let p = own.len();
            let nchild = nodes[k].children.len();
            let contribs: Vec<(Vec<usize>, Vec<f64>)> = stack.split_off(stack.len() - nchild);

            for &v in &own {
                mark[v] = k;
            }
            let mut boundary = Vec::new();
            for &v in &own {
                for m in [a.row(v).0, at.row(v).0] {
                    for &u in m {
                        if var_node[u] > k && mark[u] != k {
                            mark[u] = k;
                            boundary.push(u);
                        }
                    }
                }
            }
            for (cb, _) in &contribs {
                for &u in cb {
                    if mark[u] != k {
                        mark[u] = k;
                        boundary.push(u);
                    }
                }
            }
            boundary.sort_unstable();
            let b = boundary.len();
            let f = p + b;
            for (q, &v) in own.iter().chain(boundary.iter()).enumerate() {
                pos[v] = q;
            }

            let mut front = vec![0.0; f * f];
            for (r_loc, &v) in own.iter().enumerate() {
                let (cols, vals) = a.row(v);
                for (&c, &val) in cols.iter().zip(vals) {
                    if var_node[c] >= k {
                        front[r_loc * f + pos[c]] += val;
                    }
                }
                // entries A[u][v] with u eliminated later
                let (rows, tvals) = at.row(v);
                for (&u, &val) in rows.iter().zip(tvals) {
                    if var_node[u] > k {
                        front[pos[u] * f + r_loc] += val;
                    }
                }
            }
            for (cb, vals) in &contribs {
                let bc = cb.len();
                let map: Vec<usize> = cb.iter().map(|&u| pos[u]).collect();
                for (x, &rx) in map.iter().enumerate() {
                    let src = &vals[x * bc..(x + 1) * bc];
                    let dst = &mut front[rx * f..(rx + 1) * f];
                    for (y, &cy) in map.iter().enumerate() {
                        dst[cy] += src[y];
                    }
                }
            }
            drop(contribs);

            let perm = partial_lu(&mut front, f, p).map_err(|local| FactorError::Singular { var: own[local] })?;

            let upper = front[..p * f].to_vec();
            let mut lower = vec![0.0; b * p];
            let mut contribution = vec![0.0; b * b];
            for q in 0..b {
                let row = &front[(p + q) * f..(p + q + 1) * f];
                lower[q * p..(q + 1) * p].copy_from_slice(&row[..p]);
                contribution[q * b..(q + 1) * b].copy_from_slice(&row[p..]);
            }
            fill += upper.len() + lower.len();
            for &v in own.iter().chain(boundary.iter()) {
                pos[v] = usize::MAX;
            }
            if b > 0 {
                stack.push((boundary.clone(), contribution));
            }
            // A node whose boundary is empty still has to leave nothing on the
            // stack for its parent; record the fact with an empty block.
            else {
                stack.push((Vec::new(), Vec::new()));
            }
            fronts.push(Front {
                own,
                boundary,
                perm,
                upper,
                lower,
            });
        }

        Ok(SparseLu { n, fronts, fill })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn fill(&self) -> usize {
        self.fill
    }

    /// Overwrites `x` (holding b) with the solution of `A·x = b`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let mut z: Vec<f64> = Vec::new();
        for fr in &self.fronts {
            let p = fr.own.len();
            let f = p + fr.boundary.len();
            z.clear();
            z.extend(fr.perm.iter().map(|&r| x[fr.own[r]]));
            for k in 0..p {
                let row = &fr.upper[k * f..k * f + k];
                let s: f64 = row.iter().zip(&z[..k]).map(|(l, y)| l * y).sum();
                z[k] -= s;
            }
            for (q, &u) in fr.boundary.iter().enumerate() {
                let row = &fr.lower[q * p..(q + 1) * p];
                let s: f64 = row.iter().zip(&z).map(|(l, y)| l * y).sum();
                x[u] -= s;
            }
            for (k, &v) in fr.own.iter().enumerate() {
                x[v] = z[k];
            }
        }
        for fr in self.fronts.iter().rev() {
            let p = fr.own.len();
            let f = p + fr.boundary.len();
            for k in (0..p).rev() {
                let row = &fr.upper[k * f..(k + 1) * f];
                let mut s = x[fr.own[k]];
                for j in k + 1..p {
                    s -= row[j] * x[fr.own[j]];
                }
                for (q, &u) in fr.boundary.iter().enumerate() {
                    s -= row[p + q] * x[u];
                }
                x[fr.own[k]] = s / row[k];
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve followed by `steps` rounds of iterative refinement against `a`,
    /// which must be the matrix that was factorised. Pivoting is confined to
    /// each front, so a round or two recovers the digits lost to growth.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        let mut r = vec![0.0; self.n];
        for _ in 0..steps {
            a.matvec(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            self.solve_in_place(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        x
    }
}

/// Eliminates the first `p` columns of the row-major `f × f` matrix in place,
/// pivoting only among the first `p` rows. Returns the row permutation, or
/// the local index of a column with no usable pivot.
fn partial_lu(a: &mut [f64], f: usize, p: usize) -> Result<Vec<usize>, usize> {
    let mut perm: Vec<usize> = (0..p).collect();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = scale * f64::EPSILON * 1e-3;
    for k in 0..p {
        let mut piv = k;
        let mut best = a[k * f + k].abs();
        for r in k + 1..p {
            let v = a[r * f + k].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > tiny) {
            return Err(k);
        }
        if piv != k {
            for c in 0..f {
                a.swap(k * f + c, piv * f + c);
            }
            perm.swap(k, piv);
        }
        let (head, tail) = a.split_at_mut((k + 1) * f);
        let pivot_row = &head[k * f..(k + 1) * f];
        let inv = 1.0 / pivot_row[k];
        for row in tail.chunks_exact_mut(f) {
            let l = row[k] * inv;
            if l == 0.0 {
                continue;
            }
            row[k] = l;
            for (x, &u) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                *x -= l * u;
            }
        }
    }
    Ok(perm)
}
