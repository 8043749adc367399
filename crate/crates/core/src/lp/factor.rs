//! Sparse LU factorisation of a simplex basis with product-form updates.
//!
//! Column `pos` of the basis is factorised as `B = L U` up to row and column
//! permutations. Each later basis change appends an eta vector; `ftran` and
//! `btran` apply the factors and then the etas. Callers refactorise once the
//! eta file grows.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Pivots smaller than this relative to their column are treated as zero.
const SINGULAR_TOL: f64 = 1e-11;
/// Threshold partial pivoting: any candidate within this factor of the
/// largest entry may be chosen, preferring sparse rows.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Entries below this are dropped from factors and etas.
const DROP_TOL: f64 = 1e-14;

struct Eta {
    pos: usize,
    pivot: f64,
    /// `(position, alpha)` for positions other than `pos`.
    entries: Vec<(usize, f64)>,
}

pub(crate) struct Factor {
    m: usize,
    /// Row pivoted at step `k`.
    prow: Vec<usize>,
    /// Basis position eliminated at step `k`.
    ppos: Vec<usize>,
    /// Below-diagonal multipliers of step `k`, by original row.
    lcols: Vec<Vec<(usize, f64)>>,
    /// Above-diagonal entries of step `k`, by earlier step.
    ucols: Vec<Vec<(usize, f64)>>,
    udiag: Vec<f64>,
    etas: Vec<Eta>,
    eta_nnz: usize,
}

/// The basis is numerically singular; the payload is a basis position that
/// could not be pivoted.
#[derive(Debug)]
pub(crate) struct Singular(pub usize);

impl Factor {
    /// Factorises the `m × m` matrix whose column `pos` is `column(pos)`.
    pub(crate) fn new<'c>(
        m: usize,
        column: impl Fn(usize) -> &'c [(usize, f64)],
    ) -> Result<Self, Singular> {
        // sparse columns first keeps fill low
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| column(p).len());
        let mut row_count = vec![0usize; m];
        for p in 0..m {
            for &(i, _) in column(p) {
                row_count[i] += 1;
            }
        }

        let mut step_of_row = vec![usize::MAX; m];
        let mut prow = Vec::with_capacity(m);
        let mut ppos = Vec::with_capacity(m);
        let mut lcols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut ucols = Vec::with_capacity(m);
        let mut udiag = Vec::with_capacity(m);

        let mut w = vec![0.0; m];
        let mut touched_flag = vec![false; m];
        let mut touched: Vec<usize> = Vec::new();
        let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

        for (k, &pos) in order.iter().enumerate() {
            let mut col_max: f64 = 0.0;
            for &(i, a) in column(pos) {
                w[i] += a;
                col_max = col_max.max(a.abs());
                if !touched_flag[i] {
                    touched_flag[i] = true;
                    touched.push(i);
                    if step_of_row[i] != usize::MAX {
                        heap.push(Reverse(step_of_row[i]));
                    }
                }
            }
            // forward elimination in step order
            let mut last = usize::MAX;
            while let Some(Reverse(t)) = heap.pop() {
                if t == last {
                    continue;
                }
                last = t;
                let v = w[prow[t]];
                if v == 0.0 {
                    continue;
                }
                for &(i, l) in &lcols[t] {
                    w[i] -= l * v;
                    if !touched_flag[i] {
                        touched_flag[i] = true;
                        touched.push(i);
                        if step_of_row[i] != usize::MAX {
                            heap.push(Reverse(step_of_row[i]));
                        }
                    }
                }
            }

            let mut amax: f64 = 0.0;
            for &i in &touched {
                if step_of_row[i] == usize::MAX {
                    amax = amax.max(w[i].abs());
                }
            }
            if amax <= SINGULAR_TOL * col_max.max(1.0) {
                return Err(Singular(pos));
            }
            let mut pick = usize::MAX;
            for &i in &touched {
                if step_of_row[i] == usize::MAX && w[i].abs() >= PIVOT_THRESHOLD * amax {
                    let better = pick == usize::MAX
                        || row_count[i] < row_count[pick]
                        || (row_count[i] == row_count[pick] && i < pick);
                    if better {
                        pick = i;
                    }
                }
            }
            let piv = w[pick];
            let mut lcol = Vec::new();
            let mut ucol = Vec::new();
            touched.sort_unstable();
            for &i in &touched {
                let v = w[i];
                if i != pick && v.abs() > DROP_TOL {
                    if step_of_row[i] == usize::MAX {
                        lcol.push((i, v / piv));
                    } else {
                        ucol.push((step_of_row[i], v));
                    }
                }
                w[i] = 0.0;
                touched_flag[i] = false;
            }
            touched.clear();
            step_of_row[pick] = k;
            prow.push(pick);
            ppos.push(pos);
            lcols.push(lcol);
            ucols.push(ucol);
            udiag.push(piv);
        }
        Ok(Factor {
            m,
            prow,
            ppos,
            lcols,
            ucols,
            udiag,
            etas: Vec::new(),
            eta_nnz: 0,
        })
    }

    pub(crate) fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub(crate) fn eta_nnz(&self) -> usize {
        self.eta_nnz
    }

    /// Solves `B x = a`; `a` is indexed by row, the result by basis position.
    pub(crate) fn ftran(&self, a: &[f64], x: &mut [f64]) {
        let m = self.m;
        let mut w = a.to_vec();
        for k in 0..m {
            let v = w[self.prow[k]];
            if v != 0.0 {
                for &(i, l) in &self.lcols[k] {
                    w[i] -= l * v;
                }
            }
        }
        let mut z: Vec<f64> = self.prow.iter().map(|&r| w[r]).collect();
        for k in (0..m).rev() {
            if z[k] == 0.0 {
                continue;
            }
            let xk = z[k] / self.udiag[k];
            z[k] = xk;
            for &(t, u) in &self.ucols[k] {
                z[t] -= u * xk;
            }
        }
        for k in 0..m {
            x[self.ppos[k]] = z[k];
        }
        for eta in &self.etas {
            let xr = x[eta.pos];
            if xr == 0.0 {
                continue;
            }
            let xr = xr / eta.pivot;
            x[eta.pos] = xr;
            for &(i, a) in &eta.entries {
                x[i] -= a * xr;
            }
        }
    }

    /// Solves `yᵀ B = cᵀ`; `c` is indexed by basis position, `y` by row.
    pub(crate) fn btran(&self, c: &[f64], y: &mut [f64]) {
        let m = self.m;
        let mut c = c.to_vec();
        for eta in self.etas.iter().rev() {
            let s: f64 = eta.entries.iter().map(|&(i, a)| a * c[i]).sum();
            c[eta.pos] = (c[eta.pos] - s) / eta.pivot;
        }
        let mut z = vec![0.0; m];
        for k in 0..m {
            let s: f64 = self.ucols[k].iter().map(|&(t, u)| u * z[t]).sum();
            z[k] = (c[self.ppos[k]] - s) / self.udiag[k];
        }
        y.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..m {
            y[self.prow[k]] = z[k];
        }
        for k in (0..m).rev() {
            let s: f64 = self.lcols[k].iter().map(|&(i, l)| l * y[i]).sum();
            if s != 0.0 {
                y[self.prow[k]] -= s;
            }
        }
    }

    /// Records that the column at position `pos` was replaced by one whose
    /// `ftran` image is `alpha`.
    pub(crate) fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.eta_nnz += entries.len() + 1;
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}
