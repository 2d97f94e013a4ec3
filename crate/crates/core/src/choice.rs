//! Choice rules: best response, sampling best response, logit and sampling
//! logit, plus the logit-weighted average / centering operators.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, check_eta, invalid, Error, Result};
use crate::game::PopulationGame;
use crate::linalg::Matrix;
use crate::math::exp;
use crate::sampling::OutcomeTable;

/// Default payoff slack for best-response membership. Empirical states `z/k`
/// land exactly on indifference lines often enough that exact comparison
/// would split ties by rounding noise.
pub const DEFAULT_BR_TOLERANCE: f64 = 1e-9;

/// Actions whose payoff is within `tolerance` of the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseSet {
    actions: Vec<usize>,
    tolerance: f64,
}

impl BestResponseSet {
    pub fn from_payoffs(payoffs: &[f64], tolerance: f64) -> Result<Self> {
        if !(tolerance >= 0.0) {
            return Err(invalid("tolerance", "must be nonnegative"));
        }
        if payoffs.is_empty() || payoffs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("payoffs"));
        }
        let max = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let actions = payoffs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p >= max - tolerance)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { actions, tolerance })
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn contains(&self, i: usize) -> bool {
        self.actions.contains(&i)
    }

    pub fn is_singleton(&self) -> bool {
        self.actions.len() == 1
    }
}

pub fn best_response_set<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    tol: f64,
) -> Result<BestResponseSet> {
    check_dim(game.num_actions(), x.len())?;
    BestResponseSet::from_payoffs(&game.payoff(x), tol)
}

/// Selection from the best-response correspondence at ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Mix uniformly over all best responses.
    #[default]
    Uniform,
    /// Play the lowest-indexed best response.
    LowestIndex,
    /// Play the tied best response with the largest current population share
    /// (lowest index among equal shares).
    Incumbent,
}

impl TieRule {
    /// Writes the selected mixed best response into `out`. `x` is the current
    /// population state, consulted only by [`TieRule::Incumbent`].
    pub fn select(&self, set: &BestResponseSet, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let acts = set.actions();
        match self {
            TieRule::Uniform => {
                let w = 1.0 / acts.len() as f64;
                for &a in acts {
                    out[a] = w;
                }
            }
            TieRule::LowestIndex => out[acts[0]] = 1.0,
            TieRule::Incumbent => {
                let mut best = acts[0];
                for &a in &acts[1..] {
                    if x[a] > x[best] {
                        best = a;
                    }
                }
                out[best] = 1.0;
            }
        }
    }
}

/// Probability vector produced by a choice rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceRuleResult {
    probabilities: Vec<f64>,
}

impl ChoiceRuleResult {
    pub fn new(probabilities: Vec<f64>) -> Self {
        Self { probabilities }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probabilities
    }
}

impl core::ops::Index<usize> for ChoiceRuleResult {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.probabilities[i]
    }
}

/// Softmax of `payoffs / eta`, shifted by the maximum payoff so that no
/// exponent is positive.
pub fn logit_from_payoffs(payoffs: &[f64], eta: f64, out: &mut [f64]) {
    let max = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, p) in out.iter_mut().zip(payoffs) {
        *o = exp((p - max) / eta);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// `η`-logit choice `P^η(x)`.
pub fn logit_choice<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    eta: f64,
) -> Result<ChoiceRuleResult> {
    check_eta(eta)?;
    check_dim(game.num_actions(), x.len())?;
    let payoffs = game.payoff(x);
    if payoffs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("payoffs"));
    }
    let mut p = vec![0.0; payoffs.len()];
    logit_from_payoffs(&payoffs, eta, &mut p);
    Ok(ChoiceRuleResult::new(p))
}

/// Jacobian of `P^η` at `x`: row `i` is `(1/η) P_i (F_i' - Σ_l P_l F_l')`.
pub(crate) fn logit_jacobian<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    eta: f64,
) -> (Vec<f64>, Matrix) {
    let n = game.num_actions();
    let mut p = vec![0.0; n];
    logit_from_payoffs(&game.payoff(x), eta, &mut p);
    let grad = game.gradient(x);
    let mean = weighted_row_mean(&grad, &p);
    let mut jac = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            jac[(i, j)] = p[i] * (grad[(i, j)] - mean[j]) / eta;
        }
    }
    (p, jac)
}

pub(crate) fn weighted_row_mean(m: &Matrix, p: &[f64]) -> Vec<f64> {
    let mut mean = vec![0.0; m.cols()];
    for (l, pl) in p.iter().enumerate() {
        for (j, v) in mean.iter_mut().enumerate() {
            *v += pl * m[(l, j)];
        }
    }
    mean
}

/// Logit-weighted average `ȳ = Σ p_i y_i` of scalars and the centered values
/// `ŷ_i = y_i - ȳ`, which satisfy `Σ p_i ŷ_i = 0`.
pub fn logit_center(values: &[f64], p: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim(values.len(), p.len())?;
    let mean: f64 = values.iter().zip(p).map(|(y, w)| y * w).sum();
    Ok((mean, values.iter().map(|y| y - mean).collect()))
}

/// Vector-valued version of [`logit_center`]: each `values[i]` is a vector
/// (for matrices, pass the row-major entries).
pub fn logit_center_vectors<V: AsRef<[f64]>>(
    values: &[V],
    p: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_dim(values.len(), p.len())?;
    let len = values.first().map_or(0, |v| v.as_ref().len());
    let mut mean = vec![0.0; len];
    for (v, w) in values.iter().zip(p) {
        let v = v.as_ref();
        check_dim(len, v.len())?;
        for (m, a) in mean.iter_mut().zip(v) {
            *m += w * a;
        }
    }
    let centered = values
        .iter()
        .map(|v| v.as_ref().iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    Ok((mean, centered))
}

/// A map `X → X` whose fixed points are equilibria and whose displacement
/// `map(x) - x` drives the associated dynamic.
pub trait ChoiceMap {
    fn num_actions(&self) -> usize;

    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.num_actions()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    /// Partial derivatives `∂map_i / ∂x_j`, coordinates treated as
    /// independent. Central differences unless overridden.
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.num_actions();
        let mut jac = Matrix::zeros(n, n);
        let mut xp = x.to_vec();
        let mut up = vec![0.0; n];
        let mut down = vec![0.0; n];
        let h = 1e-6;
        for j in 0..n {
            xp[j] = x[j] + h;
            self.apply_into(&xp, &mut up)?;
            xp[j] = x[j] - h;
            self.apply_into(&xp, &mut down)?;
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

impl<M: ChoiceMap + ?Sized> ChoiceMap for &M {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).apply_into(x, out)
    }
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        (**self).jacobian(x)
    }
}

impl<M: ChoiceMap + ?Sized> ChoiceMap for alloc::boxed::Box<M> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).apply_into(x, out)
    }
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        (**self).jacobian(x)
    }
}

/// The mixed best response `x ↦ BR(x)` under a tie rule.
pub struct BestResponseMap<G> {
    game: G,
    tolerance: f64,
    ties: TieRule,
}

impl<G: PopulationGame> BestResponseMap<G> {
    pub fn new(game: G, tolerance: f64, ties: TieRule) -> Result<Self> {
        if !(tolerance >= 0.0) {
            return Err(invalid("tolerance", "must be nonnegative"));
        }
        Ok(Self {
            game,
            tolerance,
            ties,
        })
    }
}

impl<G: PopulationGame> ChoiceMap for BestResponseMap<G> {
    fn num_actions(&self) -> usize {
        self.game.num_actions()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let set = BestResponseSet::from_payoffs(&self.game.payoff(x), self.tolerance)?;
        self.ties.select(&set, x, out);
        Ok(())
    }
}

/// The logit map `x ↦ P^η(x)`.
pub struct LogitMap<G> {
    game: G,
    eta: f64,
}

impl<G: PopulationGame> LogitMap<G> {
    pub fn new(game: G, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self { game, eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

impl<G: PopulationGame> ChoiceMap for LogitMap<G> {
    fn num_actions(&self) -> usize {
        self.game.num_actions()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let f = self.game.payoff(x);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("payoffs"));
        }
        logit_from_payoffs(&f, self.eta, out);
        Ok(())
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        Ok(logit_jacobian(&self.game, x, self.eta).1)
    }
}

/// Expectation of a per-outcome response vector under multinomial sampling:
/// `x ↦ Σ_z M^k(z | x) α(z)` with `α` fixed in advance.
#[derive(Debug, Clone)]
struct SampleAverage {
    table: OutcomeTable,
    responses: Vec<f64>,
}

impl SampleAverage {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.table.num_actions();
        check_dim(n, x.len())?;
        let masses = self.table.masses(x);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (idx, m) in masses.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            for (o, r) in out.iter_mut().zip(&self.responses[idx * n..(idx + 1) * n]) {
                *o += m * r;
            }
        }
        Ok(())
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.table.num_actions();
        check_dim(n, x.len())?;
        let partials = self.table.mass_partials(x);
        let mut jac = Matrix::zeros(n, n);
        for idx in 0..self.table.len() {
            let r = &self.responses[idx * n..(idx + 1) * n];
            let d = &partials[idx * n..(idx + 1) * n];
            for i in 0..n {
                for j in 0..n {
                    jac[(i, j)] += d[j] * r[i];
                }
            }
        }
        Ok(jac)
    }
}

/// The `(k, η)`-sampling logit rule `L^{k,η}(x) = Σ_z M^k(z | x) P^η(z/k)`.
///
/// The logit responses at every empirical state are computed once at
/// construction; evaluation only recomputes the masses.
#[derive(Debug, Clone)]
pub struct SamplingLogit {
    avg: SampleAverage,
    k: usize,
    eta: f64,
}

impl SamplingLogit {
    pub fn new<G: PopulationGame + ?Sized>(game: &G, k: usize, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        let n = game.num_actions();
        let table = OutcomeTable::new(n, k)?;
        let mut responses = vec![0.0; table.len() * n];
        for idx in 0..table.len() {
            let w = table.empirical_state(idx);
            let f = game.payoff(&w);
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("payoffs at an empirical state"));
            }
            logit_from_payoffs(&f, eta, &mut responses[idx * n..(idx + 1) * n]);
        }
        Ok(Self {
            avg: SampleAverage { table, responses },
            k,
            eta,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// For `k = 1`, the column-stochastic matrix `Π_ij = P^η_i(e_j)` with
    /// `L^{1,η}(x) = Π x`.
    pub fn logit_at_vertices<G: PopulationGame + ?Sized>(game: &G, eta: f64) -> Result<Matrix> {
        check_eta(eta)?;
        let n = game.num_actions();
        let mut pi = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut p = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            logit_from_payoffs(&game.payoff(&e), eta, &mut p);
            for i in 0..n {
                pi[(i, j)] = p[i];
            }
        }
        Ok(pi)
    }
}

impl ChoiceMap for SamplingLogit {
    fn num_actions(&self) -> usize {
        self.avg.table.num_actions()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.avg.apply_into(x, out)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.avg.jacobian(x)
    }
}

/// The `k`-sampling best response `BR^k(x) = Σ_z M^k(z | x) α(z)` with `α(z)`
/// selected from `BR(z/k)` by a [`TieRule`].
#[derive(Debug, Clone)]
pub struct SamplingBestResponse {
    table: OutcomeTable,
    sets: Vec<BestResponseSet>,
    ties: TieRule,
    // responses are state-independent unless ties are broken by incumbency
    fixed: Option<SampleAverage>,
}

impl SamplingBestResponse {
    pub fn new<G: PopulationGame + ?Sized>(
        game: &G,
        k: usize,
        tolerance: f64,
        ties: TieRule,
    ) -> Result<Self> {
        let n = game.num_actions();
        let table = OutcomeTable::new(n, k)?;
        let sets = (0..table.len())
            .map(|idx| {
                BestResponseSet::from_payoffs(&game.payoff(&table.empirical_state(idx)), tolerance)
            })
            .collect::<Result<Vec<_>>>()?;
        let fixed = (ties != TieRule::Incumbent).then(|| {
            let mut responses = vec![0.0; table.len() * n];
            for (idx, set) in sets.iter().enumerate() {
                ties.select(set, &[], &mut responses[idx * n..(idx + 1) * n]);
            }
            SampleAverage {
                table: table.clone(),
                responses,
            }
        });
        Ok(Self {
            table,
            sets,
            ties,
            fixed,
        })
    }
}

impl ChoiceMap for SamplingBestResponse {
    fn num_actions(&self) -> usize {
        self.table.num_actions()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(avg) = &self.fixed {
            return avg.apply_into(x, out);
        }
        let n = self.table.num_actions();
        check_dim(n, x.len())?;
        let masses = self.table.masses(x);
        let mut alpha = vec![0.0; n];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (set, m) in self.sets.iter().zip(&masses) {
            if *m == 0.0 {
                continue;
            }
            self.ties.select(set, x, &mut alpha);
            for (o, a) in out.iter_mut().zip(&alpha) {
                *o += m * a;
            }
        }
        Ok(())
    }
}

/// `BR^k(x)` for a single state.
pub fn sampling_best_response<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    k: usize,
    ties: TieRule,
) -> Result<ChoiceRuleResult> {
    let map = SamplingBestResponse::new(game, k, DEFAULT_BR_TOLERANCE, ties)?;
    map.apply(x).map(ChoiceRuleResult::new)
}

/// `L^{k,η}(x)` for a single state.
pub fn sampling_logit<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    k: usize,
    eta: f64,
) -> Result<ChoiceRuleResult> {
    let map = SamplingLogit::new(game, k, eta)?;
    map.apply(x).map(ChoiceRuleResult::new)
}
