//! Small dense linear solves.

/// Pivots smaller than this fraction of the matrix scale count as zero.
pub const PIVOT_TOL: f64 = 1e-12;

/// Ridge added on a singular normal system, as a fraction of the mean diagonal.
pub const RIDGE_FACTOR: f64 = 1e-8;

/// Elimination hit a pivot below `PIVOT_TOL * scale` in the given column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular {
    pub column: usize,
}

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting.
/// The scale used for the pivot test is the largest absolute entry of `a`.
pub fn gauss_jordan(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, Singular> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|r| r.len() == n));
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, aug[r][col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > PIVOT_TOL * scale) || !pivot_abs.is_finite() {
            return Err(Singular { column: col });
        }
        aug.swap(col, pivot_row);
        let pivot = aug[col][col];
        for v in aug[col][col..].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = aug[col].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r == col {
                continue;
            }
            let factor = row[col];
            if factor != 0.0 {
                for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= factor * p;
                }
            }
        }
    }
    Ok(aug.into_iter().map(|r| r[n]).collect())
}

/// Result of a symmetric positive semidefinite solve that may have needed
/// diagonal regularisation.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub x: Vec<f64>,
    pub ridged: bool,
}

/// Solves a normal-equation system; on a vanishing pivot adds
/// `RIDGE_FACTOR * trace / n` to the diagonal and solves again.
pub fn solve_normal_equations(a: &[Vec<f64>], b: &[f64]) -> Result<RidgeSolution, Singular> {
    match gauss_jordan(a, b) {
        Ok(x) => Ok(RidgeSolution { x, ridged: false }),
        Err(_) => {
            let n = b.len();
            let trace: f64 = (0..n).map(|k| a[k][k]).sum();
            let ridge = RIDGE_FACTOR * trace / n as f64;
            let mut reg = a.to_vec();
            for (k, row) in reg.iter_mut().enumerate() {
                row[k] += ridge;
            }
            gauss_jordan(&reg, b).map(|x| RidgeSolution { x, ridged: true })
        }
    }
}

/// Solves `R phi = r` where `R` is the symmetric Toeplitz matrix with first
/// row `(1, rho_1, .., rho_{k-1})` and `r = (rho_1, .., rho_k)`.
pub fn solve_yule_walker(rho: &[f64], k: usize) -> Result<Vec<f64>, Singular> {
    let a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j { 1.0 } else { rho[i.abs_diff(j) - 1] })
                .collect()
        })
        .collect();
    gauss_jordan(&a, &rho[..k])
}

/// Durbin-Levinson recursion for the partial autocorrelations
/// `phi_11 .. phi_kk` from autocorrelations `rho_1 .. rho_kmax`.
pub fn levinson_durbin(rho: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rho.len());
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=rho.len() {
        let num = rho[k - 1] - (1..k).map(|j| phi[j - 1] * rho[k - j - 1]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * rho[j - 1]).sum::<f64>();
        let kk = num / den;
        let mut next: Vec<f64> = (1..k).map(|j| phi[j - 1] - kk * phi[k - j - 1]).collect();
        next.push(kk);
        phi = next;
        out.push(kk);
    }
    out
}
