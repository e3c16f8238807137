//! Zero-mean Gaussian cash flows under revelation schedules.
//!
//! A schedule `m` says that at time `t` the coordinates `X_1, …, X_{m(t)}`
//! are known; `m(t) = t` is the natural filtration. With
//! `b_s = Var(Σ_{u>t} X_u | X_1, …, X_{m(s)})` and `a_s = b_{s−1} − b_s`,
//!
//! ```text
//! V_t = E[Σ_{u>t} X_u | G_t] + W_0(ε) Σ_{s>t} √a_s
//! ```
//!
//! The conditional variances come from one Cholesky factor `Σ = L Lᵀ`: with
//! `c = Lᵀ 1_{u>t}`, `b_s = Σ_{j > m(s)} c_j²`, so each `a_s` is a sum of
//! squares over the coordinates revealed at step `s`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CocmError, Result};
use crate::life::{multinomial_cov_oracle, Cohort, MakehamLaw};
use crate::valuation::{w_normal_any, ValuationSpec};

const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Relative pivot size below which a Cholesky column is treated as zero.
const PIVOT_TOLERANCE: f64 = 1e-12;
/// Cholesky pivots below `−NEGATIVE_TOLERANCE · scale` mean the matrix is
/// indefinite.
const NEGATIVE_TOLERANCE: f64 = 1e-10;

/// Nondecreasing `m: {0..T} → {0..T}` with `m(0) = 0`, `m(t) ≥ t` and
/// `m(T) = T`. Serialised as the array `[m(0), …, m(T)]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Schedule(Vec<usize>);

impl Schedule {
    pub fn new(m: Vec<usize>) -> Result<Self> {
        let horizon = m.len().checked_sub(1).filter(|&t| t >= 1).ok_or_else(|| {
            CocmError::domain("a schedule needs entries m(0), …, m(T) with T ≥ 1")
        })?;
        if m[0] != 0 || m[horizon] != horizon {
            return Err(CocmError::domain(
                "schedule must have m(0) = 0 and m(T) = T",
            ));
        }
        for t in 0..=horizon {
            if m[t] < t || m[t] > horizon {
                return Err(CocmError::domain(format!(
                    "m({t}) = {} outside [{t}, {horizon}]",
                    m[t]
                )));
            }
            if t > 0 && m[t] < m[t - 1] {
                return Err(CocmError::domain("schedule must be nondecreasing"));
            }
        }
        Ok(Schedule(m))
    }

    /// The natural filtration `m(t) = t`.
    pub fn identity(horizon: usize) -> Self {
        Schedule((0..=horizon).collect())
    }

    /// Everything known at time 1: `m(t) = T` for `t ≥ 1`.
    pub fn reveal_all(horizon: usize) -> Self {
        let mut m = vec![horizon; horizon + 1];
        m[0] = 0;
        Schedule(m)
    }

    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    pub fn at(&self, t: usize) -> usize {
        self.0[t]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(t, &m)| m == t)
    }

    /// Whether `other` reveals earlier: `other(t) ≥ self(t)` and every
    /// `other(t)` is some `self(s)` with `s ≥ t`.
    pub fn is_refined_by(&self, other: &Schedule) -> bool {
        self.horizon() == other.horizon()
            && (0..=self.horizon()).all(|t| {
                other.0[t] >= self.0[t] && (t..=self.horizon()).any(|s| self.0[s] == other.0[t])
            })
    }
}

impl TryFrom<Vec<usize>> for Schedule {
    type Error = CocmError;

    fn try_from(m: Vec<usize>) -> Result<Self> {
        Schedule::new(m)
    }
}

impl From<Schedule> for Vec<usize> {
    fn from(s: Schedule) -> Self {
        s.0
    }
}

/// Lower Cholesky factor of a positive semidefinite matrix. Columns whose
/// pivot is negligible are set to zero, so `L Lᵀ = A` also for singular `A`.
pub fn semidefinite_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -NEGATIVE_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(CocmError::Matrix(format!(
                "covariance is not positive semidefinite (pivot {d:e} at {j})"
            )));
        }
        if d <= PIVOT_TOLERANCE * scale {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn check_covariance(cov: &DMatrix<f64>) -> Result<()> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(CocmError::Matrix(format!(
            "covariance must be square and nonempty, got {}×{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(CocmError::Matrix(
            "covariance has non-finite entries".into(),
        ));
    }
    let scale = cov.amax().max(1.0);
    for i in 0..cov.nrows() {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(CocmError::Matrix(format!(
                    "covariance not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Conditional standard-deviation increments `√a_s`, `s = 1..`, of `w·X`
/// when `reveal[s]` leading coordinates are known at step `s`.
fn sd_increments(l: &DMatrix<f64>, w: &DVector<f64>, reveal: &[usize]) -> Vec<f64> {
    let c = l.transpose() * w;
    reveal
        .windows(2)
        .map(|r| (r[0]..r[1]).map(|j| c[j] * c[j]).sum::<f64>().sqrt())
        .collect()
}

/// Value of a Gaussian flow at time `t`, relative to the conditional mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianValue {
    /// `W_0(ε) Σ_{s>t} √a_s`; at `t = 0` this is `V_0`.
    pub constant: f64,
    /// `E[Σ_{u>t} X_u | G_t] = Σ_j mean_coefficients[j] X_{j+1}`.
    pub mean_coefficients: Vec<f64>,
    /// `√a_s` for `s = t + 1, …, T`.
    pub sd_increments: Vec<f64>,
}

/// A zero-mean Gaussian cash flow with covariance `Σ` and a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    cov: DMatrix<f64>,
    schedule: Schedule,
    chol: DMatrix<f64>,
}

impl GaussianModel {
    /// Accepts any symmetric positive semidefinite `Σ`; singular matrices
    /// arise for cohorts with different horizons. The recursion route needs
    /// `Σ` positive definite.
    pub fn new(cov: DMatrix<f64>, schedule: Schedule) -> Result<Self> {
        check_covariance(&cov)?;
        if schedule.horizon() != cov.nrows() {
            return Err(CocmError::domain(format!(
                "schedule horizon {} does not match a {}×{} covariance",
                schedule.horizon(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = semidefinite_cholesky(&cov)?;
        Ok(GaussianModel {
            cov,
            schedule,
            chol,
        })
    }

    /// Natural filtration.
    pub fn natural(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        Self::new(cov, Schedule::identity(n))
    }

    pub fn horizon(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn with_schedule(&self, schedule: Schedule) -> Result<Self> {
        if schedule.horizon() != self.horizon() {
            return Err(CocmError::domain("schedule horizon mismatch"));
        }
        Ok(GaussianModel {
            cov: self.cov.clone(),
            schedule,
            chol: self.chol.clone(),
        })
    }

    /// `Var(X_1 + … + X_T)`.
    pub fn total_variance(&self) -> f64 {
        self.cov.sum()
    }

    /// `V_t` relative to the conditional mean, from one Cholesky factor.
    pub fn value_by_formula(&self, spec: &ValuationSpec, t: usize) -> Result<GaussianValue> {
        let n = self.horizon();
        if t > n {
            return Err(CocmError::domain(format!("time {t} beyond horizon {n}")));
        }
        let w0 = w_normal_any(spec)?;
        let w = DVector::from_fn(n, |i, _| if i >= t { 1.0 } else { 0.0 });
        let reveal = &self.schedule.as_slice()[t..];
        let sd = sd_increments(&self.chol, &w, reveal);
        let known = self.schedule.at(t);
        let mean_coefficients = if known == 0 {
            Vec::new()
        } else {
            // E[w·X | X_{1:k}] = c_{1:k}·z_{1:k} with z_{1:k} = L_{11}⁻¹ X_{1:k}
            let c = self.chol.transpose() * &w;
            let l11 = self.chol.view((0, 0), (known, known)).into_owned();
            if (0..known).any(|i| l11[(i, i)] == 0.0) {
                return Err(CocmError::Matrix(
                    "conditional mean needs the revealed block to be positive definite".into(),
                ));
            }
            let ck = c.rows(0, known).into_owned();
            l11.transpose()
                .solve_upper_triangular(&ck)
                .ok_or_else(|| CocmError::Matrix("singular revealed block".into()))?
                .iter()
                .copied()
                .collect()
        };
        Ok(GaussianValue {
            constant: w0 * sd.iter().sum::<f64>(),
            mean_coefficients,
            sd_increments: sd,
        })
    }

    /// `V_0`.
    pub fn value0(&self, spec: &ValuationSpec) -> Result<f64> {
        Ok(self.value_by_formula(spec, 0)?.constant)
    }

    /// The backward recursion `V_t = v⁽ᵗ⁾·X_{1:t} + k_t` for the natural
    /// filtration, built from conditional regressions of `X_{t+1}` on
    /// `X_{1:t}`. Returns `(k_0..k_T, v⁽⁰⁾..v⁽ᵀ⁾)`.
    pub fn value_by_recursion(&self, spec: &ValuationSpec) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if !self.schedule.is_identity() {
            return Err(CocmError::unsupported(
                "the recursion covers the natural filtration only",
            ));
        }
        let w0 = w_normal_any(spec)?;
        let n = self.horizon();
        let mut k = vec![0.0; n + 1];
        let mut v: Vec<Vec<f64>> = (0..=n).map(|t| vec![0.0; t]).collect();
        for t in (0..n).rev() {
            let gain = 1.0 + v[t + 1][t];
            let (reg, cond_var) = if t == 0 {
                (Vec::new(), self.cov[(0, 0)])
            } else {
                let block = self.cov.view((0, 0), (t, t)).into_owned();
                let chol = nalgebra::Cholesky::new(block).ok_or_else(|| {
                    CocmError::Matrix("covariance is not positive definite".into())
                })?;
                let cross = self.cov.view((0, t), (t, 1)).into_owned();
                let beta = chol.solve(&cross);
                let explained = (cross.transpose() * &beta)[(0, 0)];
                (beta.iter().copied().collect(), self.cov[(t, t)] - explained)
            };
            if cond_var < -NEGATIVE_TOLERANCE * self.cov[(t, t)].abs() {
                return Err(CocmError::Internal(format!(
                    "negative conditional variance {cond_var:e} at step {t}"
                )));
            }
            k[t] = k[t + 1] + gain.abs() * cond_var.max(0.0).sqrt() * w0;
            v[t] = (0..t).map(|j| v[t + 1][j] + gain * reg[j]).collect();
        }
        Ok((k, v))
    }

    /// `(W_0 √Var(ΣX), W_0 √T √Var(ΣX))`.
    pub fn bounds(&self, spec: &ValuationSpec) -> Result<(f64, f64)> {
        let w0 = w_normal_any(spec)?;
        let sd = self.total_variance().max(0.0).sqrt();
        Ok((w0 * sd, w0 * (self.horizon() as f64).sqrt() * sd))
    }

    /// `V_0` under the model's schedule and under `earlier`, which must
    /// reveal information no later. The second value never exceeds the first.
    pub fn compare_schedules(
        &self,
        spec: &ValuationSpec,
        earlier: &Schedule,
    ) -> Result<(f64, f64)> {
        if !self.schedule.is_refined_by(earlier) {
            return Err(CocmError::domain(
                "schedules are not comparable: the second must reveal at times of the first, no later",
            ));
        }
        let v1 = self.value0(spec)?;
        let v2 = self.with_schedule(earlier.clone())?.value0(spec)?;
        if v2 > v1 + 1e-12 * v1.abs().max(1.0) {
            return Err(CocmError::Internal(format!(
                "earlier information increased the value: {v2} > {v1}"
            )));
        }
        Ok((v1, v2))
    }
}

/// Two flows `X`, `X̃` under their common natural filtration.
///
/// Coordinates are stored interleaved, `(X_1, X̃_1, X_2, X̃_2, …)`, so the
/// time-`t` information is the first `2t` coordinates. The covariance may be
/// singular (for example `X̃ = ±X`).
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussianModel {
    horizon: usize,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl JointGaussianModel {
    /// From the stacked covariance of `(X_1..X_T, X̃_1..X̃_T)`.
    pub fn from_stacked(stacked: DMatrix<f64>) -> Result<Self> {
        check_covariance(&stacked)?;
        if !stacked.nrows().is_multiple_of(2) {
            return Err(CocmError::Matrix("joint covariance must be 2T×2T".into()));
        }
        let horizon = stacked.nrows() / 2;
        let pos = |i: usize| {
            if i < horizon {
                2 * i
            } else {
                2 * (i - horizon) + 1
            }
        };
        let mut cov = DMatrix::zeros(2 * horizon, 2 * horizon);
        for i in 0..2 * horizon {
            for j in 0..2 * horizon {
                cov[(pos(i), pos(j))] = stacked[(i, j)];
            }
        }
        let chol = semidefinite_cholesky(&cov)?;
        Ok(JointGaussianModel { horizon, cov, chol })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Interleaved covariance.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `(V_0(X + X̃), V_0(X), V_0(X̃))`.
    pub fn value_sum_joint(&self, spec: &ValuationSpec) -> Result<(f64, f64, f64)> {
        let w0 = w_normal_any(spec)?;
        let n = 2 * self.horizon;
        let reveal: Vec<usize> = (0..=self.horizon).map(|t| 2 * t).collect();
        let value = |f: &dyn Fn(usize) -> f64| {
            let w = DVector::from_fn(n, |i, _| f(i));
            w0 * sd_increments(&self.chol, &w, &reveal).iter().sum::<f64>()
        };
        Ok((
            value(&|_| 1.0),
            value(&|i| if i % 2 == 0 { 1.0 } else { 0.0 }),
            value(&|i| if i % 2 == 1 { 1.0 } else { 0.0 }),
        ))
    }
}

/// Gaussian approximation of a heterogeneous portfolio: zero-mean model with
/// the covariance of the total yearly death counts, plus their means.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortApproximation {
    pub model: GaussianModel,
    pub mean: Vec<f64>,
}

impl CohortApproximation {
    pub fn best_estimate(&self) -> f64 {
        self.mean.iter().sum()
    }
}

/// Sum of independent cohorts' death-count covariances over the longest
/// horizon, natural filtration.
pub fn covariance_from_cohorts(cohorts: &[(Cohort, MakehamLaw)]) -> Result<CohortApproximation> {
    let horizon = cohorts
        .iter()
        .map(|(c, _)| c.horizon)
        .max()
        .ok_or_else(|| CocmError::domain("no cohorts given"))?;
    let mut cov = DMatrix::zeros(horizon, horizon);
    let mut mean = vec![0.0; horizon];
    for (cohort, law) in cohorts {
        if cohort.n == 0 {
            continue;
        }
        let block = multinomial_cov_oracle(cohort, law);
        let t = cohort.horizon;
        let mut view = cov.view_mut((0, 0), (t, t));
        view += &block;
        let probs = crate::life::deferred_probs(law, cohort);
        for (i, m) in mean.iter_mut().take(t).enumerate() {
            *m += cohort.n as f64 * probs.q_def[i][0];
        }
    }
    Ok(CohortApproximation {
        model: GaussianModel::natural(cov)?,
        mean,
    })
}

/// Write a covariance as CSV: a `T=<n>` header line, then the rows.
pub fn write_covariance_csv<W: Write>(out: W, cov: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record([format!("T={}", cov.nrows())])?;
    for i in 0..cov.nrows() {
        w.write_record(cov.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a covariance written by [`write_covariance_csv`].
pub fn read_covariance_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| CocmError::invalid("empty covariance file"))??;
    let n: usize = header
        .get(0)
        .and_then(|h| h.strip_prefix("T="))
        .and_then(|v| v.trim().parse().ok())
        .filter(|_| header.len() == 1)
        .ok_or_else(|| CocmError::invalid("covariance CSV must start with a \"T=<n>\" line"))?;
    let mut cov = DMatrix::zeros(n, n);
    let mut rows = 0;
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        if i >= n || rec.len() != n {
            return Err(CocmError::invalid(format!(
                "covariance row {} has {} entries, expected {n} rows of {n}",
                i + 1,
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            cov[(i, j)] = field
                .parse()
                .map_err(|_| CocmError::invalid(format!("bad number \"{field}\" at ({i}, {j})")))?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(CocmError::invalid(format!(
            "expected {n} covariance rows, found {rows}"
        )));
    }
    Ok(cov)
}
