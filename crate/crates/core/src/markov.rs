//! Finite-state Markov chain utilities.
//!
//! Dense chains (`StochasticMatrix`) cover the 2-state spread chain, the
//! 4-state transition chain and small embeddings. The vector-state
//! embeddings of order-`p` squared-return chains grow as `3^p` but have at
//! most a handful of nonzeros per row, so they live in [`SparseStochastic`].

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::states::{SpreadState, TransitionState};

const ROW_SUM_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
/// Chains up to this size get an exact linear solve for their stationary law.
pub const DENSE_SOLVE_LIMIT: usize = 300;

/// Probability distribution over the states of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("empty probability vector".into()));
        }
        if entries.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(
                "probability vector has negative or non-finite entries".into(),
            ));
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "probability vector sums to {total}, not 1"
            )));
        }
        Ok(ProbabilityVector(entries))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dense row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(DMatrix<f64>);

impl StochasticMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("matrix must be square and nonempty".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_matrix(m)
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidParameter("matrix must be square and nonempty".into()));
        }
        for (i, row) in m.row_iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has entries outside [0, 1]"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "row {i} sums to {total}, not 1"
                )));
            }
        }
        Ok(StochasticMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `P^tau` by repeated squaring.
    pub fn power(&self, tau: u32) -> StochasticMatrix {
        matrix_power(self, tau)
    }

    pub fn stationary_distribution(&self) -> Result<ProbabilityVector> {
        stationary_distribution(self)
    }

    pub fn spectrum(&self) -> Result<Vec<Complex<f64>>> {
        spectrum(self)
    }
}

pub fn matrix_power(p: &StochasticMatrix, tau: u32) -> StochasticMatrix {
    let n = p.dim();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = p.0.clone();
    let mut e = tau;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    StochasticMatrix(result)
}

fn reachable_from(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Solves `(P' - I) v = 0` with the last equation replaced by `sum(v) = 1`.
fn solve_stationary(pt_minus_i: DMatrix<f64>, n: usize) -> Result<Vec<f64>> {
    let mut a = pt_minus_i;
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.lu();
    let v = lu
        .solve(&b)
        .ok_or(Error::Reducible { residual: f64::NAN })?;
    Ok(v.iter().copied().collect())
}

fn clean_probabilities(mut v: Vec<f64>) -> Result<Vec<f64>> {
    for x in v.iter_mut() {
        if !x.is_finite() {
            return Err(Error::Reducible { residual: f64::NAN });
        }
        if *x < 0.0 {
            if *x < -1e-9 {
                return Err(Error::Reducible { residual: -*x });
            }
            *x = 0.0;
        }
    }
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
    Ok(v)
}

pub fn stationary_distribution(p: &StochasticMatrix) -> Result<ProbabilityVector> {
    let n = p.dim();
    let pt = p.0.transpose();
    let a = &pt - DMatrix::<f64>::identity(n, n);
    let v = clean_probabilities(solve_stationary(a, n)?)?;

    let residual = (&pt * DVector::from_column_slice(&v) - DVector::from_column_slice(&v)).amax();
    if residual >= RESIDUAL_TOL {
        return Err(Error::Reducible { residual });
    }

    // every state carrying mass must reach every other one
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| p.0[(i, j)] > 0.0).collect())
        .collect();
    let support: Vec<usize> = (0..n).filter(|&i| v[i] > 0.0).collect();
    if let Some(&first) = support.first() {
        let seen = reachable_from(&adj, first);
        if support.iter().any(|&i| !seen[i]) {
            return Err(Error::Reducible { residual });
        }
    }
    ProbabilityVector::new(v)
}

/// Eigenvalues sorted by decreasing modulus.
pub fn spectrum(p: &StochasticMatrix) -> Result<Vec<Complex<f64>>> {
    let eig = p.0.clone().complex_eigenvalues();
    let mut values: Vec<Complex<f64>> = eig.iter().copied().collect();
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("eigenvalue computation produced non-finite values".into()));
    }
    values.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    if (values[0].norm() - 1.0).abs() > RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "leading eigenvalue modulus {} differs from 1",
            values[0].norm()
        )));
    }
    Ok(values)
}

/// Parameters of the spread Markov chain `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadChainParams {
    p11: f64,
    p21: f64,
    bernoulli: bool,
}

impl SpreadChainParams {
    /// Markov(1) spread with `P(1|1) = p11`, `P(1|2) = p21`.
    ///
    /// Probabilities on the closed unit interval are accepted as long as the
    /// chain keeps a unique stationary law (`1 - p11 + p21 > 0`).
    pub fn new(p11: f64, p21: f64) -> Result<Self> {
        for (name, v) in [("p11", p11), ("p21", p21)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} is not a probability")));
            }
        }
        if 1.0 - p11 + p21 <= 0.0 {
            return Err(Error::InvalidParameter(
                "p11 = 1 with p21 = 0 has no unique stationary law".into(),
            ));
        }
        Ok(SpreadChainParams { p11, p21, bernoulli: false })
    }

    /// i.i.d. spread with `P(s = 1) = p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() || p == 0.0 {
            return Err(Error::InvalidParameter(format!("bernoulli p = {p} must lie in (0, 1]")));
        }
        Ok(SpreadChainParams { p11: p, p21: p, bernoulli: true })
    }

    pub fn p11(&self) -> f64 {
        self.p11
    }

    pub fn p21(&self) -> f64 {
        self.p21
    }

    pub fn bernoulli_p(&self) -> Option<f64> {
        self.bernoulli.then_some(self.p11)
    }

    /// Probability of moving to a one-tick spread from `from`.
    pub fn prob_to_one(&self, from: SpreadState) -> f64 {
        match from {
            SpreadState::One => self.p11,
            SpreadState::Two => self.p21,
        }
    }

    pub fn spread_matrix(&self) -> StochasticMatrix {
        StochasticMatrix(DMatrix::from_row_slice(
            2,
            2,
            &[self.p11, 1.0 - self.p11, self.p21, 1.0 - self.p21],
        ))
    }

    /// Closed-form stationary law `pi` of the spread chain.
    pub fn spread_stationary(&self) -> [f64; 2] {
        let (p11, p22) = (self.p11, 1.0 - self.p21);
        let d = 2.0 - p11 - p22;
        [(1.0 - p22) / d, (1.0 - p11) / d]
    }

    /// Closed-form stationary law `lambda` of the transition chain.
    pub fn transition_stationary(&self) -> [f64; 4] {
        let (p11, p21) = (self.p11, self.p21);
        let d = 1.0 - p11 + p21;
        [
            p21 * p11 / d,
            p21 * (1.0 - p11) / d,
            p21 * (1.0 - p11) / d,
            (1.0 - p21) * (1.0 - p11) / d,
        ]
    }

    /// `P(x(t+1) = to | x(t) = from)`.
    pub fn transition_prob(&self, from: TransitionState, to: TransitionState) -> f64 {
        if from.to_spread() != to.from_spread() {
            return 0.0;
        }
        let up = self.prob_to_one(from.to_spread());
        match to.to_spread() {
            SpreadState::One => up,
            SpreadState::Two => 1.0 - up,
        }
    }
}

/// The 4-state transition chain `M` and its closed-form stationary law.
pub fn build_transition_chain(params: &SpreadChainParams) -> (StochasticMatrix, ProbabilityVector) {
    let m = DMatrix::from_fn(4, 4, |i, j| {
        params.transition_prob(TransitionState::ALL[i], TransitionState::ALL[j])
    });
    let lambda = params.transition_stationary().to_vec();
    (StochasticMatrix(m), ProbabilityVector(lambda))
}

/// Row-stochastic matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseStochastic {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseStochastic {
    /// Builds from per-row `(column, probability)` lists; duplicate columns
    /// are summed and zero entries dropped.
    pub fn from_rows<I>(n: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<(usize, f64)>>,
    {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        let mut count = 0;
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            let mut total = 0.0;
            let start = cols.len();
            for (j, v) in row {
                if j >= n || !v.is_finite() || !(0.0..=1.0 + ROW_SUM_TOL).contains(&v) {
                    return Err(Error::InvalidParameter(format!("bad entry ({i}, {j}) = {v}")));
                }
                total += v;
                if v == 0.0 {
                    continue;
                }
                if cols.len() > start && *cols.last().unwrap() == j as u32 {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j as u32);
                    vals.push(v);
                }
            }
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParameter(format!("row {i} sums to {total}, not 1")));
            }
            offsets.push(cols.len());
            count += 1;
        }
        if count != n {
            return Err(Error::InvalidParameter(format!("expected {n} rows, got {count}")));
        }
        Ok(SparseStochastic { offsets, cols, vals })
    }

    pub fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        self.cols[a..b].iter().map(|&c| c as usize).zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// Row vector times matrix: `v' P`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, p) in self.row(i) {
                out[j] += vi * p;
            }
        }
        out
    }

    /// Matrix times column vector: `P f`.
    pub fn right_mul(&self, f: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.row(i).map(|(j, p)| p * f[j]).sum()).collect()
    }

    /// Weighted sum `sum_k w_k P_k` of chains with the same dimension.
    pub fn mixture(parts: &[(f64, &SparseStochastic)]) -> Result<Self> {
        let n = parts.first().map_or(0, |p| p.1.dim());
        if parts.iter().any(|p| p.1.dim() != n) {
            return Err(Error::InvalidParameter("mixture of chains with different sizes".into()));
        }
        let rows = (0..n).map(|i| {
            parts
                .iter()
                .flat_map(|(w, m)| m.row(i).map(move |(j, v)| (j, w * v)))
                .collect::<Vec<_>>()
        });
        Self::from_rows(n, rows)
    }

    pub fn to_dense(&self) -> Result<StochasticMatrix> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        StochasticMatrix::from_matrix(m)
    }

    pub fn residual(&self, v: &[f64]) -> f64 {
        self.left_mul(v)
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Stationary law: exact linear solve for small chains, power iteration
    /// above [`DENSE_SOLVE_LIMIT`] states.
    pub fn stationary_distribution(&self) -> Result<ProbabilityVector> {
        if self.dim() <= DENSE_SOLVE_LIMIT {
            return self.to_dense()?.stationary_distribution();
        }
        let n = self.dim();
        let mut v = vec![1.0 / n as f64; n];
        let mut residual = f64::INFINITY;
        for _ in 0..200_000 {
            let next = self.left_mul(&v);
            residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if residual < 1e-16 {
                break;
            }
        }
        let v = clean_probabilities(v)?;
        let residual = residual.max(self.residual(&v));
        if residual >= 1e-13 {
            return Err(Error::Numerical(format!(
                "power iteration did not converge (residual {residual:e})"
            )));
        }
        ProbabilityVector::new(v)
    }
}
