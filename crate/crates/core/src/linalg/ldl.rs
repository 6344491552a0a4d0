//! Simplicial up-looking LDLᵀ over a fixed upper-triangular CSC pattern.
//!
//! The symbolic phase computes the elimination tree and the column counts of
//! `L`; the numeric phase writes into storage sized by the symbolic phase and
//! never allocates.

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct LdlFactor {
    pub n: usize,
    etree: Vec<usize>,
    lnz: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    // numeric workspace
    y_vals: Vec<f64>,
    y_idx: Vec<usize>,
    y_marked: Vec<bool>,
    elim_buf: Vec<usize>,
    next_in_col: Vec<usize>,
}

/// Numeric breakdown at pivot `column` with value `pivot`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotBreakdown {
    pub column: usize,
    pub pivot: f64,
}

impl LdlFactor {
    /// Symbolic analysis of the upper-triangular pattern `(ap, ai)`.
    ///
    /// Every column must store its diagonal entry.
    pub fn symbolic(n: usize, ap: &[usize], ai: &[usize]) -> Self {
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                assert!(row <= j, "pattern is not upper triangular");
                let mut i = row;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        LdlFactor {
            n,
            etree,
            lnz,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            y_vals: vec![0.0; n],
            y_idx: vec![0; n],
            y_marked: vec![false; n],
            elim_buf: vec![0; n],
            next_in_col: vec![0; n],
        }
    }

    /// Nonzeros in the strictly lower part of `L`.
    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Column counts of `L` from the symbolic phase.
    pub fn column_counts(&self) -> &[usize] {
        &self.lnz
    }

    /// Numeric factorization of the matrix with values `ax` on the symbolic
    /// pattern. A pivot `d` with `!(d > min_pivot)` is a breakdown.
    pub fn factor(&mut self, ap: &[usize], ai: &[usize], ax: &[f64], min_pivot: f64) -> Result<(), PivotBreakdown> {
        let n = self.n;
        if n == 0 {
            return Ok(());
        }
        self.next_in_col.copy_from_slice(&self.lp[..n]);
        self.y_marked.fill(false);
        self.y_vals.fill(0.0);

        for k in 0..n {
            let mut nnz_y = 0usize;
            self.d[k] = 0.0;
            for p in ap[k]..ap[k + 1] {
                let bidx = ai[p];
                if bidx == k {
                    self.d[k] = ax[p];
                    continue;
                }
                self.y_vals[bidx] = ax[p];
                if !self.y_marked[bidx] {
                    // walk up the elimination tree to collect the reach of bidx
                    self.y_marked[bidx] = true;
                    self.elim_buf[0] = bidx;
                    let mut nnz_e = 1usize;
                    let mut next = self.etree[bidx];
                    while next != NONE && next < k {
                        if self.y_marked[next] {
                            break;
                        }
                        self.y_marked[next] = true;
                        self.elim_buf[nnz_e] = next;
                        nnz_e += 1;
                        next = self.etree[next];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        self.y_idx[nnz_y] = self.elim_buf[nnz_e];
                        nnz_y += 1;
                    }
                }
            }

            for i in (0..nnz_y).rev() {
                let cidx = self.y_idx[i];
                let tmp = self.next_in_col[cidx];
                let yc = self.y_vals[cidx];
                for j in self.lp[cidx]..tmp {
                    self.y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                let l = yc * self.dinv[cidx];
                self.lx[tmp] = l;
                self.d[k] -= yc * l;
                self.next_in_col[cidx] += 1;
                self.y_vals[cidx] = 0.0;
                self.y_marked[cidx] = false;
            }

            let dk = self.d[k];
            if !(dk > min_pivot) {
                return Err(PivotBreakdown { column: k, pivot: dk });
            }
            self.dinv[k] = 1.0 / dk;
        }
        Ok(())
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper CSC of a dense symmetric matrix (all upper entries stored).
    fn dense_upper(a: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let n = a.len();
        let (mut ap, mut ai, mut ax) = (vec![0], vec![], vec![]);
        for j in 0..n {
            for i in 0..=j {
                if a[i][j] != 0.0 || i == j {
                    ai.push(i);
                    ax.push(a[i][j]);
                }
            }
            ap.push(ai.len());
        }
        (ap, ai, ax)
    }

    #[test]
    fn two_by_two_by_hand() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 2.0]];
        let (ap, ai, ax) = dense_upper(&a);
        let mut f = LdlFactor::symbolic(2, &ap, &ai);
        f.factor(&ap, &ai, &ax, 1e-14).unwrap();
        let mut x = vec![1.0, 0.0];
        f.solve_in_place(&mut x);
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] + 1.0).abs() < 1e-15, "{x:?}");
    }

    #[test]
    fn tridiagonal_solve() {
        let n = 5;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 4.0;
            if i + 1 < n {
                a[i][i + 1] = -1.0;
                a[i + 1][i] = -1.0;
            }
        }
        let (ap, ai, ax) = dense_upper(&a);
        let mut f = LdlFactor::symbolic(n, &ap, &ai);
        assert_eq!(f.nnz_l(), n - 1);
        f.factor(&ap, &ai, &ax, 1e-14).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i][j] * xs[j]).sum()).collect();
        f.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let (ap, ai, ax) = dense_upper(&a);
        let mut f = LdlFactor::symbolic(2, &ap, &ai);
        let err = f.factor(&ap, &ai, &ax, 1e-14).unwrap_err();
        assert_eq!(err.column, 1);
    }
}
