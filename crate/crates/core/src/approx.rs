//! Second-order (delta method) approximation of the sampling logit rule.
//!
//! Expanding `P^η` around `x` inside the multinomial expectation gives
//! `L^{k,η}_i(x) ≈ (1 + v̂_i + q̂_i) P^η_i(x)`, where the variance premium `v`
//! comes from the curvature of `P^η` in the direction of sampling noise and
//! the curvature premium `q` from the curvature of the payoffs. Both scale
//! as `1/k`.
//!
//! Two different scalings show up in the formulas and are kept apart by name:
//! [`inverse_noise`] is `1/η` and [`premium_scale`] is `1/(2kη²)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::choice::{
    logit_center, logit_from_payoffs, logit_jacobian, ChoiceMap, ChoiceRuleResult, SamplingLogit,
};
use crate::error::{check_dim, check_eta, invalid, Error, Result};
use crate::game::{LinearGame, PopulationGame, SeparableGame};
use crate::linalg::Matrix;
use crate::math::ln;
use crate::sampling::covariance;
use crate::state::{lattice, max_abs_diff};

pub const DEFAULT_SYMMETRY_MARGIN: f64 = 0.05;

pub fn inverse_noise(eta: f64) -> f64 {
    1.0 / eta
}

/// `1 / (2kη²)`.
pub fn premium_scale(k: usize, eta: f64) -> f64 {
    1.0 / (2.0 * k as f64 * eta * eta)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(invalid("k", "sample size must be at least 1"))
    } else {
        Ok(())
    }
}

fn check_point<G: PopulationGame + ?Sized>(game: &G, x: &[f64], eta: f64) -> Result<()> {
    check_eta(eta)?;
    check_dim(game.num_actions(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    Ok(())
}

/// Gradient of `P^η`: row `i` is `P_i'(x) = (1/η) P_i (F_i' - Σ_l P_l F_l')`.
pub fn logit_gradient<G: PopulationGame + ?Sized>(game: &G, x: &[f64], eta: f64) -> Result<Matrix> {
    check_point(game, x, eta)?;
    Ok(logit_jacobian(game, x, eta).1)
}

/// Centered payoff gradients `R_i = F_i' - Σ_l P_l F_l'` (rows) and `P`.
fn centered_gradients<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    eta: f64,
) -> (Vec<f64>, Matrix) {
    let n = game.num_actions();
    let mut p = vec![0.0; n];
    logit_from_payoffs(&game.payoff(x), eta, &mut p);
    let grad = game.gradient(x);
    let mean = crate::choice::weighted_row_mean(&grad, &p);
    let mut r = grad;
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] -= mean[j];
        }
    }
    (p, r)
}

/// Hessian of `P_i^η`:
/// `(1/η²) P_i (R_i R_iᵀ - Σ_l P_l R_l R_lᵀ) + (1/η) P_i (F_i'' - Σ_l P_l F_l'')`.
pub fn logit_hessian<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    eta: f64,
    action: usize,
) -> Result<Matrix> {
    check_point(game, x, eta)?;
    let n = game.num_actions();
    if action >= n {
        return Err(invalid("action", "index out of range"));
    }
    let (p, r) = centered_gradients(game, x, eta);
    let mut out = Matrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mean: f64 = (0..n).map(|l| p[l] * r[(l, a)] * r[(l, b)]).sum();
            out[(a, b)] = p[action] * (r[(action, a)] * r[(action, b)] - mean) / (eta * eta);
        }
    }
    let hessians: Vec<Matrix> = (0..n).map(|l| game.hessian(l, x)).collect();
    for a in 0..n {
        for b in 0..n {
            let mean: f64 = (0..n).map(|l| p[l] * hessians[l][(a, b)]).sum();
            out[(a, b)] += p[action] * (hessians[action][(a, b)] - mean) / eta;
        }
    }
    Ok(out)
}

/// Premiums of the second-order approximation at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiumReport {
    pub eta: f64,
    pub k: usize,
    /// `P^η(x)`.
    pub choice: Vec<f64>,
    /// `v_i = (1/(2kη²)) R_iᵀ Σ(x) R_i ≥ 0`.
    pub variance: Vec<f64>,
    /// `q_i = (1/(2kη)) ⟨F_i'', Σ(x)⟩`.
    pub curvature: Vec<f64>,
    pub variance_centered: Vec<f64>,
    pub curvature_centered: Vec<f64>,
    /// `1 + v̂_i + q̂_i`.
    pub multipliers: Vec<f64>,
    /// `G_i = η log(1 + v̂_i + q̂_i)`; NaN where the multiplier is not positive.
    pub distortion: Vec<f64>,
    pub valid: bool,
}

impl PremiumReport {
    fn build(
        eta: f64,
        k: usize,
        choice: Vec<f64>,
        variance: Vec<f64>,
        curvature: Vec<f64>,
        variance_centered: Vec<f64>,
        curvature_centered: Vec<f64>,
    ) -> Self {
        let multipliers: Vec<f64> = variance_centered
            .iter()
            .zip(&curvature_centered)
            .map(|(v, q)| 1.0 + v + q)
            .collect();
        let distortion = multipliers
            .iter()
            .map(|m| if *m > 0.0 { eta * ln(*m) } else { f64::NAN })
            .collect();
        let valid = multipliers.iter().all(|m| *m > 0.0);
        Self {
            eta,
            k,
            choice,
            variance,
            curvature,
            variance_centered,
            curvature_centered,
            multipliers,
            distortion,
            valid,
        }
    }

    /// First action whose multiplier is not positive.
    pub fn check_valid(&self) -> Result<()> {
        match self.multipliers.iter().position(|m| !(*m > 0.0)) {
            Some(action) => Err(Error::ApproximationInvalid {
                action,
                multiplier: self.multipliers[action],
            }),
            None => Ok(()),
        }
    }

    /// `(1 + v̂_i + q̂_i) P_i` without the validity check.
    pub fn corrected_unchecked(&self) -> Vec<f64> {
        self.multipliers
            .iter()
            .zip(&self.choice)
            .map(|(m, p)| m * p)
            .collect()
    }

    /// `σ̂_i = 2kη² v̂_i`.
    pub fn sigma_centered(&self) -> Vec<f64> {
        let s = 1.0 / premium_scale(self.k, self.eta);
        self.variance_centered.iter().map(|v| s * v).collect()
    }
}

/// Variance and curvature premiums of `L^{k,η}` at `x`.
pub fn premiums<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    k: usize,
    eta: f64,
) -> Result<PremiumReport> {
    check_point(game, x, eta)?;
    check_k(k)?;
    let n = game.num_actions();
    let (p, r) = centered_gradients(game, x, eta);
    let sigma = covariance(x);
    let vscale = premium_scale(k, eta);
    let qscale = 1.0 / (2.0 * k as f64 * eta);
    let variance: Vec<f64> = (0..n)
        .map(|i| (vscale * sigma.quadratic_form(r.row(i))).max(0.0))
        .collect();
    let curvature: Vec<f64> = (0..n)
        .map(|i| qscale * game.hessian(i, x).frobenius(&sigma))
        .collect();
    let (_, vc) = logit_center(&variance, &p)?;
    let (_, qc) = logit_center(&curvature, &p)?;
    Ok(PremiumReport::build(eta, k, p, variance, curvature, vc, qc))
}

/// `T̃L(x) = (1 + v̂ + q̂) ⊙ P^η(x)`. Refuses when some multiplier is not
/// positive: the approximation does not define a choice rule there.
pub fn corrected_rule<G: PopulationGame + ?Sized>(
    game: &G,
    x: &[f64],
    k: usize,
    eta: f64,
) -> Result<ChoiceRuleResult> {
    let rep = premiums(game, x, k, eta)?;
    rep.check_valid()?;
    Ok(ChoiceRuleResult::new(rep.corrected_unchecked()))
}

/// [`corrected_rule`] as a [`ChoiceMap`].
#[derive(Debug, Clone)]
pub struct CorrectedRule<G> {
    game: G,
    k: usize,
    eta: f64,
}

impl<G: PopulationGame> CorrectedRule<G> {
    pub fn new(game: G, k: usize, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        check_k(k)?;
        Ok(Self { game, k, eta })
    }

    pub fn game(&self) -> &G {
        &self.game
    }
}

impl<G: PopulationGame> ChoiceMap for CorrectedRule<G> {
    fn num_actions(&self) -> usize {
        self.game.num_actions()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let rep = premiums(&self.game, x, self.k, self.eta)?;
        rep.check_valid()?;
        out.copy_from_slice(&rep.corrected_unchecked());
        Ok(())
    }
}

/// The virtual game `T̃F = F + G` whose `η`-logit rule is `T̃L`.
#[derive(Debug, Clone)]
pub struct VirtualGame<G> {
    game: G,
    k: usize,
    eta: f64,
}

impl<G: PopulationGame> VirtualGame<G> {
    pub fn new(game: G, k: usize, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        check_k(k)?;
        Ok(Self { game, k, eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `F(x) + G(x)`, or an error where the approximation is invalid.
    pub fn try_payoff(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rep = premiums(&self.game, x, self.k, self.eta)?;
        rep.check_valid()?;
        let mut f = self.game.payoff(x);
        f.iter_mut().zip(&rep.distortion).for_each(|(a, g)| *a += g);
        Ok(f)
    }
}

impl<G: PopulationGame> PopulationGame for VirtualGame<G> {
    fn num_actions(&self) -> usize {
        self.game.num_actions()
    }

    /// Writes NaN where [`VirtualGame::try_payoff`] fails.
    fn payoff_into(&self, x: &[f64], out: &mut [f64]) {
        match self.try_payoff(x) {
            Ok(f) => out.copy_from_slice(&f),
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    }
}

/// `σ_A(x) = β² x_1 x_2` for a two-action linear game.
pub fn sigma_two_action(game: &LinearGame, x1: f64) -> Result<f64> {
    let beta = game.two_action_beta()?;
    Ok(beta * beta * x1 * (1.0 - x1))
}

/// Predicted interior SLE of a two-action linear game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorShift {
    pub nash: f64,
    pub beta: f64,
    /// `x̃`.
    pub predicted: f64,
    /// `-(η/β) log((1 - x*)/x*)`.
    pub logit_shift: f64,
    /// `-(η/β) log(1 + v*)`.
    pub sampling_shift: f64,
    /// `v* = σ_A(x*) / (2kη²)`.
    pub v_star: f64,
    /// Whether `x̃ < x*` is predicted.
    pub predicts_below: bool,
}

/// Closed-form location of the interior SLE near `x*`.
///
/// The formula is stated for `x* < 1/2`; for `x* > 1/2` the action labels are
/// swapped, computed, and swapped back. Refuses when `|x* - 1/2| < margin`.
pub fn interior_shift_two_action(
    game: &LinearGame,
    k: usize,
    eta: f64,
    margin: f64,
) -> Result<InteriorShift> {
    check_eta(eta)?;
    check_k(k)?;
    let beta = game.two_action_beta()?;
    if beta == 0.0 {
        return Err(Error::DegenerateGame("β = 0"));
    }
    let nash = game.two_action_indifference()?;
    if !(nash > 0.0 && nash < 1.0) {
        return Err(Error::DegenerateGame("no interior Nash equilibrium"));
    }
    if (nash - 0.5).abs() < margin {
        return Err(Error::SymmetricMargin { nash, margin });
    }
    let mirrored = nash > 0.5;
    let xs = if mirrored { 1.0 - nash } else { nash };
    let v_star = premium_scale(k, eta) * beta * beta * xs * (1.0 - xs);
    let logit = -(eta / beta) * ln((1.0 - xs) / xs);
    let sampling = -(eta / beta) * ln(1.0 + v_star);
    let (logit_shift, sampling_shift) = if mirrored {
        (-logit, -sampling)
    } else {
        (logit, sampling)
    };
    let predicted = nash + logit_shift + sampling_shift;
    Ok(InteriorShift {
        nash,
        beta,
        predicted,
        logit_shift,
        sampling_shift,
        v_star,
        predicts_below: predicted < nash,
    })
}

/// Premiums of a separable two-action game from the scalar formulas
/// `v̂_1 = θ P_2 (1 - 2P_1) (F_1' + F_2')² x_1 x_2` and
/// `q̂_1 = (1/(2kη)) P_2 (F_1'' - F_2'') x_1 x_2`, with `θ = 1/(2kη²)`.
pub fn separable_premiums(
    game: &SeparableGame,
    x: &[f64],
    k: usize,
    eta: f64,
) -> Result<PremiumReport> {
    check_point(game, x, eta)?;
    check_k(k)?;
    if game.num_actions() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: game.num_actions(),
        });
    }
    let mut p = vec![0.0; 2];
    logit_from_payoffs(&game.payoff(x), eta, &mut p);
    let (x1, x2) = (x[0], x[1]);
    let d1 = [game.first_derivative(0, x1), game.first_derivative(1, x2)];
    let d2 = [game.second_derivative(0, x1), game.second_derivative(1, x2)];
    let theta = premium_scale(k, eta);
    let qs = 1.0 / (2.0 * k as f64 * eta);
    let sigma = (d1[0] + d1[1]) * (d1[0] + d1[1]) * x1 * x2;
    let variance = vec![theta * p[1] * p[1] * sigma, theta * p[0] * p[0] * sigma];
    let curvature = vec![qs * d2[0] * x1 * x2, qs * d2[1] * x1 * x2];
    let vc = vec![
        theta * p[1] * (1.0 - 2.0 * p[0]) * sigma,
        theta * p[0] * (1.0 - 2.0 * p[1]) * sigma,
    ];
    let qc = vec![
        qs * p[1] * (d2[0] - d2[1]) * x1 * x2,
        qs * p[0] * (d2[1] - d2[0]) * x1 * x2,
    ];
    Ok(PremiumReport::build(eta, k, p, variance, curvature, vc, qc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRegime {
    /// `η ≤ 1`: the `η^{-4}` term of the bound dominates.
    Small,
    /// `η > 1`.
    Large,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorScalingReport {
    pub eta: f64,
    pub epsilon: f64,
    pub ks: Vec<usize>,
    /// `sup_{x ∈ X_ε} ‖L^{k,η}(x) - T̃L(x)‖∞` for each `k`.
    pub sup_errors: Vec<f64>,
    /// Least-squares slope of `log sup_error` against `log k` over the upper
    /// half of the ladder.
    pub slope: f64,
    pub regime: NoiseRegime,
    /// Grid points (summed over the ladder) where some multiplier was not
    /// positive. The error there is still measured on the unclamped formula.
    pub invalid_points: usize,
    pub grid_points: usize,
}

impl ErrorScalingReport {
    pub fn is_weakly_decreasing(&self) -> bool {
        self.sup_errors.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Interior grid `X_ε`: lattice points of resolution `m` with every share at
/// least `ε`.
pub fn interior_grid(n: usize, m: usize, epsilon: f64) -> Vec<Vec<f64>> {
    lattice(n, m, false)
        .into_iter()
        .filter(|s| s.min_entry() >= epsilon - 1e-12)
        .map(|s| s.into_vec())
        .collect()
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Measures how fast `T̃L` approaches `L^{k,η}` as `k` grows.
pub fn error_scaling_audit<G: PopulationGame + ?Sized>(
    game: &G,
    eta: f64,
    ladder: &[usize],
    epsilon: f64,
    resolution: usize,
) -> Result<ErrorScalingReport> {
    check_eta(eta)?;
    if ladder.len() < 3 {
        return Err(invalid("k_ladder", "need at least three sample sizes"));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) || ladder[0] == 0 {
        return Err(invalid(
            "k_ladder",
            "must be positive and strictly increasing",
        ));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let n = game.num_actions();
    let grid = interior_grid(n, resolution, epsilon);
    if grid.is_empty() {
        return Err(invalid("epsilon", "no grid point at this resolution"));
    }
    let mut sup_errors = Vec::with_capacity(ladder.len());
    let mut invalid_points = 0;
    for &k in ladder {
        let map = SamplingLogit::new(game, k, eta)?;
        let mut sup = 0.0f64;
        for x in &grid {
            let rep = premiums(game, x, k, eta)?;
            if !rep.valid {
                invalid_points += 1;
            }
            let exact = map.apply(x)?;
            sup = sup.max(max_abs_diff(&exact, &rep.corrected_unchecked()));
        }
        sup_errors.push(sup);
    }
    let start = ladder.len() / 2;
    let lx: Vec<f64> = ladder[start..].iter().map(|&k| ln(k as f64)).collect();
    let ly: Vec<f64> = sup_errors[start..].iter().map(|&e| ln(e)).collect();
    Ok(ErrorScalingReport {
        eta,
        epsilon,
        ks: ladder.to_vec(),
        slope: fit_slope(&lx, &ly),
        sup_errors,
        regime: if eta <= 1.0 {
            NoiseRegime::Small
        } else {
            NoiseRegime::Large
        },
        invalid_points,
        grid_points: grid.len(),
    })
}
