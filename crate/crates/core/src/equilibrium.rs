//! Equilibria of the choice rules.
//!
//! The generic solver alternates damped fixed-point iteration with Newton
//! polishing on the simplex. Newton works in `n - 1` reduced coordinates that
//! leave out the largest share, so tiny shares (down to `1e-300` in the
//! small-noise limit) are updated from their own residuals and keep their
//! relative accuracy.
//!
//! Exact constructions cover the cases where uniqueness is known: the Perron
//! vector of the vertex-logit matrix for `k = 1`, and the quadratic root for
//! two actions with `k = 2`.

use alloc::vec;
use alloc::vec::Vec;

use crate::choice::{ChoiceMap, LogitMap, SamplingLogit};
use crate::error::{check_eta, invalid, Error, Result};
use crate::game::{LinearGame, PopulationGame};
use crate::linalg::{power_iteration, solve, stationary_distribution, Matrix};
use crate::math::sqrt;
use crate::state::{argmax, lattice, max_abs_diff, PopulationState};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Which rule an equilibrium is a fixed point of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleTag {
    SamplingLogit {
        k: usize,
        eta: f64,
    },
    Logit {
        eta: f64,
    },
    SamplingBestResponse {
        k: usize,
    },
    Nash,
    /// Fixed point of the delta-method corrected rule.
    CorrectedLogit {
        k: usize,
        eta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    Iteration,
    Eigenvector,
    Quadratic,
    Continuation,
    ClosedForm,
}

impl SolverTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverTag::Iteration => "iteration",
            SolverTag::Eigenvector => "eigenvector",
            SolverTag::Quadratic => "quadratic",
            SolverTag::Continuation => "continuation",
            SolverTag::ClosedForm => "closed-form",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub state: PopulationState,
    /// `‖rule(x) - x‖∞`.
    pub residual: f64,
    pub rule: RuleTag,
    pub solver: SolverTag,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Step `α` in `x ← (1 - α) x + α rule(x)`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Interleave Newton polishing with the damped iteration.
    pub newton: bool,
    /// Start with Newton from `x0` before iterating; needed to land on
    /// equilibria that repel the iteration.
    pub newton_first: bool,
    /// Use `α = 1` while the local spectral radius estimate is below 0.9.
    pub adaptive_damping: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: DEFAULT_TOLERANCE,
            max_iter: 20_000,
            newton: true,
            newton_first: false,
            adaptive_damping: true,
        }
    }
}

impl FixedPointOptions {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", "must lie in (0, 1]"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        Ok(())
    }
}

/// Result of the generic fixed-point search.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOutcome {
    pub state: PopulationState,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn displacement<M: ChoiceMap + ?Sized>(map: &M, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let lx = map.apply(x)?;
    let res = max_abs_diff(&lx, x);
    if !res.is_finite() {
        return Err(Error::NonFinite("choice map"));
    }
    Ok((lx, res))
}

/// Jacobian of `x ↦ map(x) - x` in the coordinates `x_i, i ≠ drop`, with
/// `x_drop = 1 - Σ_{i≠drop} x_i`. Rows are the residual components `i ≠ drop`.
fn reduced_jacobian(full: &Matrix, drop: usize, subtract_identity: bool) -> Matrix {
    let n = full.rows();
    let idx: Vec<usize> = (0..n).filter(|&i| i != drop).collect();
    let mut jr = Matrix::zeros(n - 1, n - 1);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            jr[(r, c)] = full[(i, j)] - full[(i, drop)];
            if subtract_identity && r == c {
                jr[(r, c)] -= 1.0;
            }
        }
    }
    jr
}

/// Takes the step `Δ` on the reduced coordinates. `None` if some share would
/// become nonpositive.
fn step_state(x: &[f64], drop: usize, delta: &[f64], t: f64) -> Option<Vec<f64>> {
    let mut y = x.to_vec();
    let mut r = 0;
    let mut moved = 0.0;
    for (i, v) in y.iter_mut().enumerate() {
        if i == drop {
            continue;
        }
        *v += t * delta[r];
        moved += t * delta[r];
        r += 1;
    }
    y[drop] -= moved;
    if y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let total: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= total);
    Some(y)
}

/// Spectral radius estimate of the map's tangent Jacobian, `‖J^16‖^{1/16}`.
fn spectral_radius_estimate<M: ChoiceMap + ?Sized>(map: &M, x: &[f64]) -> Result<f64> {
    let drop = argmax(x);
    let mut j = reduced_jacobian(&map.jacobian(x)?, drop, false);
    for _ in 0..4 {
        j = j.mul(&j);
        let s = j.max_abs();
        if !(s.is_finite()) {
            return Ok(f64::INFINITY);
        }
    }
    Ok(libm::pow(j.norm_inf(), 1.0 / 16.0))
}

/// Newton's method on `map(x) - x = 0` with residual backtracking. Keeps
/// stepping after reaching `tol` as long as the residual keeps dropping by a
/// factor of two, so well-conditioned roots are polished to rounding level.
pub fn newton_polish<M: ChoiceMap + ?Sized>(
    map: &M,
    x0: &[f64],
    tol: f64,
    max_steps: usize,
) -> Result<FixedPointOutcome> {
    let mut x = x0.to_vec();
    let (_, mut res) = displacement(map, &x)?;
    let mut steps = 0;
    while steps < max_steps && res > 0.0 {
        steps += 1;
        let drop = argmax(&x);
        let lx = map.apply(&x)?;
        let g: Vec<f64> = (0..x.len())
            .filter(|&i| i != drop)
            .map(|i| -(lx[i] - x[i]))
            .collect();
        let jr = reduced_jacobian(&map.jacobian(&x)?, drop, true);
        let Some(delta) = solve(&jr, &g) else { break };
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            if let Some(y) = step_state(&x, drop, &delta, t) {
                let (_, ry) = displacement(map, &y)?;
                if ry < res {
                    accepted = Some((y, ry));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((y, ry)) = accepted else { break };
        let stalled = ry > 0.5 * res;
        x = y;
        res = ry;
        if res <= tol && stalled {
            break;
        }
    }
    Ok(FixedPointOutcome {
        state: PopulationState::project(x)?,
        residual: res,
        iterations: steps,
        converged: res <= tol,
    })
}

/// Fixed point of an arbitrary choice map by damped iteration with periodic
/// Newton polishing. On failure the best iterate is returned with
/// `converged = false`.
pub fn solve_fixed_point<M: ChoiceMap + ?Sized>(
    map: &M,
    x0: &PopulationState,
    opts: &FixedPointOptions,
) -> Result<FixedPointOutcome> {
    opts.validate()?;
    crate::error::check_dim(map.num_actions(), x0.num_actions())?;
    const NEWTON_EVERY: usize = 25;
    const DAMPING_CHECK_EVERY: usize = 200;

    let mut x = x0.as_slice().to_vec();
    let (_, r0) = displacement(map, &x)?;
    let mut best = (x.clone(), r0);

    if opts.newton_first {
        let out = newton_polish(map, &x, opts.tol, 100)?;
        if out.converged {
            return Ok(out);
        }
        if out.residual < best.1 {
            x = out.state.into_vec();
            best = (x.clone(), out.residual);
        }
    }

    let mut alpha = opts.damping;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if opts.adaptive_damping && iterations % DAMPING_CHECK_EVERY == 0 {
            alpha = match spectral_radius_estimate(map, &x) {
                Ok(rho) if rho < 0.9 => 1.0,
                _ => opts.damping,
            };
        }
        let (lx, res) = displacement(map, &x)?;
        if res < best.1 {
            best = (x.clone(), res);
        }
        if res <= opts.tol && !opts.newton {
            break;
        }
        if opts.newton && (iterations % NEWTON_EVERY == 0 || res <= opts.tol) {
            let out = newton_polish(map, &x, opts.tol, 50)?;
            if out.residual < best.1 {
                best = (out.state.as_slice().to_vec(), out.residual);
            }
            if out.converged {
                break;
            }
        }
        for (xi, li) in x.iter_mut().zip(&lx) {
            *xi = (1.0 - alpha) * *xi + alpha * li;
        }
        let total: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= total);
        iterations += 1;
    }
    let (state, residual) = best;
    Ok(FixedPointOutcome {
        state: PopulationState::project(state)?,
        residual,
        iterations,
        converged: residual <= opts.tol,
    })
}

/// SLE of `L^{k,η}` from a starting state.
pub fn solve_sle_fixed_point<G: PopulationGame + ?Sized>(
    game: &G,
    k: usize,
    eta: f64,
    x0: &PopulationState,
    opts: &FixedPointOptions,
) -> Result<EquilibriumResult> {
    let map = SamplingLogit::new(game, k, eta)?;
    let out = solve_fixed_point(&map, x0, opts)?;
    Ok(EquilibriumResult {
        state: out.state,
        residual: out.residual,
        rule: RuleTag::SamplingLogit { k, eta },
        solver: SolverTag::Iteration,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// The unique `(1, η)`-SLE: the stationary vector of `Π_ij = P^η_i(e_j)`,
/// since `L^{1,η}(x) = Π x`.
///
/// The vector is computed by state reduction, which stays accurate when the
/// spectral gap of `Π` is tiny (small `η`), then refined by power iteration.
pub fn solve_sle_k1<G: PopulationGame + ?Sized>(game: &G, eta: f64) -> Result<EquilibriumResult> {
    let pi = SamplingLogit::logit_at_vertices(game, eta)?;
    let x = stationary_distribution(&pi)?;
    let (x, iterations) = power_iteration(&pi, &x, 1e-14, 1000);
    let residual = max_abs_diff(&pi.mul_vec(&x), &x);
    Ok(EquilibriumResult {
        state: PopulationState::project(x)?,
        residual,
        rule: RuleTag::SamplingLogit { k: 1, eta },
        solver: SolverTag::Eigenvector,
        converged: residual <= DEFAULT_TOLERANCE,
        iterations,
    })
}

/// Roots of `a u² + b u + c` inside `[0, 1]`, computed without cancellation.
fn unit_interval_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let mut roots: Vec<f64> = Vec::new();
    if a.abs() < 1e-14 {
        if b != 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = (b * b - 4.0 * a * c).max(0.0);
        let q = -0.5 * (b + libm::copysign(sqrt(disc), b));
        if q != 0.0 {
            roots.push(q / a);
            roots.push(c / q);
        } else {
            roots.push(0.0);
        }
    }
    // roots a rounding step outside the interval belong to it
    roots
        .into_iter()
        .filter(|r| (-1e-12..=1.0 + 1e-12).contains(r))
        .map(|r| r.clamp(0.0, 1.0))
        .collect()
}

/// The unique `(2, η)`-SLE of a two-action game.
///
/// With `q_z = P_1^η` at the empirical state with `z` action-1 draws,
/// `L_1(y) - y = (q_2 - 2q_1 + q_0) y² + (2(q_1 - q_0) - 1) y + q_0`, which has
/// exactly one root in `(0, 1)`. The mirrored quadratic in `x_2` is solved too
/// and the smaller share is taken from its own quadratic so it keeps full
/// relative accuracy.
pub fn solve_sle_k2_two_action<G: PopulationGame + ?Sized>(
    game: &G,
    eta: f64,
) -> Result<EquilibriumResult> {
    check_eta(eta)?;
    if game.num_actions() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: game.num_actions(),
        });
    }
    let mut p = [0.0; 2];
    let mut logit_at = |w: [f64; 2]| {
        crate::choice::logit_from_payoffs(&game.payoff(&w), eta, &mut p);
        p
    };
    let at_e2 = logit_at([0.0, 1.0]);
    let at_mid = logit_at([0.5, 0.5]);
    let at_e1 = logit_at([1.0, 0.0]);
    // action 1 share y: q_z = P_1 at z action-1 draws
    let (q0, q1, q2) = (at_e2[0], at_mid[0], at_e1[0]);
    let y = pick_root(q2 - 2.0 * q1 + q0, 2.0 * (q1 - q0) - 1.0, q0)?;
    // action 2 share u: r_z = P_2 at z action-2 draws
    let (r0, r1, r2) = (at_e1[1], at_mid[1], at_e2[1]);
    let u = pick_root(r2 - 2.0 * r1 + r0, 2.0 * (r1 - r0) - 1.0, r0)?;
    let state = if y <= u { [y, 1.0 - y] } else { [1.0 - u, u] };
    let map = SamplingLogit::new(game, 2, eta)?;
    let (_, residual) = displacement(&map, &state)?;
    Ok(EquilibriumResult {
        state: PopulationState::project(state.to_vec())?,
        residual,
        rule: RuleTag::SamplingLogit { k: 2, eta },
        solver: SolverTag::Quadratic,
        converged: residual <= DEFAULT_TOLERANCE,
        iterations: 0,
    })
}

fn pick_root(a: f64, b: f64, c: f64) -> Result<f64> {
    let f = |y: f64| (a * y + b) * y + c;
    let roots = unit_interval_roots(a, b, c);
    roots
        .iter()
        .copied()
        .find(|r| *r > 0.0 && *r < 1.0)
        .or_else(|| roots.first().copied())
        .filter(|r| f(*r).abs() < 1e-9)
        .ok_or(Error::DegenerateGame(
            "no root of the k = 2 quadratic in (0, 1)",
        ))
}

/// Nash equilibria of a two-action linear game as `x_1` values, ascending.
pub fn nash_two_action_linear(game: &LinearGame) -> Result<Vec<f64>> {
    let (a, b, c, d) = game.two_action_entries()?;
    let beta = (a - c) - (b - d);
    if beta == 0.0 {
        return Err(Error::DegenerateGame("β = 0"));
    }
    let mut out = Vec::new();
    // e_2 is an equilibrium iff action 2 is a best response there
    if d >= b {
        out.push(0.0);
    }
    let star = (d - b) / beta;
    if star > 0.0 && star < 1.0 {
        out.push(star);
    }
    if a >= c {
        out.push(1.0);
    }
    Ok(out)
}

/// Deterministic multistart seeds: the barycenter, each vertex pulled inward
/// as `0.9 e_i + 0.1·uniform`, then interior lattice points of increasing
/// resolution until at least `min_count` distinct seeds exist.
pub fn multistart_seeds(n: usize, min_count: usize) -> Vec<PopulationState> {
    let center = PopulationState::barycenter(n);
    let mut seeds = vec![center.clone()];
    for i in 0..n {
        seeds.push(PopulationState::vertex(n, i).mix(&center, 0.1));
    }
    let mut m = n + 1;
    while seeds.len() < min_count {
        for p in lattice(n, m, true) {
            if seeds.iter().all(|s| s.distance_inf(&p) > 1e-12) {
                seeds.push(p);
            }
        }
        m += 1;
    }
    seeds
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub representative: PopulationState,
    pub members: Vec<usize>,
}

/// Groups states within `radius` (max norm) of a cluster's first member.
/// States are visited in lexicographic order so the result does not depend on
/// the input order.
pub fn cluster_states(states: &[PopulationState], radius: f64) -> Vec<Cluster> {
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.sort_by(|&a, &b| {
        states[a]
            .as_slice()
            .iter()
            .zip(states[b].as_slice())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut clusters: Vec<Cluster> = Vec::new();
    for i in order {
        match clusters
            .iter_mut()
            .find(|c| c.representative.distance_inf(&states[i]) < radius)
        {
            Some(c) => c.members.push(i),
            None => clusters.push(Cluster {
                representative: states[i].clone(),
                members: vec![i],
            }),
        }
    }
    for c in &mut clusters {
        c.members.sort_unstable();
    }
    clusters
}

/// Largest pairwise max-norm distance.
pub fn diameter(states: &[PopulationState]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            d = d.max(a.distance_inf(b));
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistartReport {
    pub seeds: Vec<PopulationState>,
    pub results: Vec<EquilibriumResult>,
    /// Clusters of the converged results (indices into `results`).
    pub clusters: Vec<Cluster>,
    /// Largest pairwise distance among converged results.
    pub diameter: f64,
}

impl MultistartReport {
    pub fn converged(&self) -> impl Iterator<Item = &EquilibriumResult> {
        self.results.iter().filter(|r| r.converged)
    }
}

/// Solves for SLE from every seed and clusters the results.
pub fn multistart_sle<G: PopulationGame + ?Sized>(
    game: &G,
    k: usize,
    eta: f64,
    seeds: &[PopulationState],
    opts: &FixedPointOptions,
    cluster_radius: f64,
) -> Result<MultistartReport> {
    let map = SamplingLogit::new(game, k, eta)?;
    let mut results = Vec::with_capacity(seeds.len());
    for s in seeds {
        let out = solve_fixed_point(&map, s, opts)?;
        results.push(EquilibriumResult {
            state: out.state,
            residual: out.residual,
            rule: RuleTag::SamplingLogit { k, eta },
            solver: SolverTag::Iteration,
            converged: out.converged,
            iterations: out.iterations,
        });
    }
    let conv: Vec<PopulationState> = results
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.state.clone())
        .collect();
    let conv_idx: Vec<usize> = (0..results.len())
        .filter(|&i| results[i].converged)
        .collect();
    let clusters = cluster_states(&conv, cluster_radius)
        .into_iter()
        .map(|c| Cluster {
            representative: c.representative,
            members: c.members.iter().map(|&m| conv_idx[m]).collect(),
        })
        .collect();
    Ok(MultistartReport {
        seeds: seeds.to_vec(),
        diameter: diameter(&conv),
        results,
        clusters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub tol: f64,
    /// Largest accepted change of state between consecutive accepted points.
    pub max_jump: f64,
    /// Smallest `Δη` before a branch is truncated.
    pub min_step: f64,
    /// Branches closer than this at a grid point are merged.
    pub merge_distance: f64,
    /// A seed solution farther than this from all branches starts a new one.
    pub new_branch_distance: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOLERANCE,
            max_jump: 0.05,
            min_step: 1e-4,
            merge_distance: 1e-8,
            new_branch_distance: 1e-6,
        }
    }
}

/// A branch of logit equilibria traced along a decreasing `η` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCurve {
    pub branch: usize,
    pub etas: Vec<f64>,
    pub states: Vec<PopulationState>,
    pub residuals: Vec<f64>,
    /// The corrector failed before the end of the grid.
    pub truncated: bool,
    /// Set when the branch ran into an earlier branch and was dropped.
    pub merged_into: Option<usize>,
}

impl EquilibriumCurve {
    pub fn last_state(&self) -> &PopulationState {
        self.states
            .last()
            .expect("curves are created with one point")
    }

    pub fn last_eta(&self) -> f64 {
        *self.etas.last().expect("curves are created with one point")
    }
}

/// Newton with deflation: roots already in `known` repel the iteration, so a
/// seed that would fall into a known root can reach a different one.
fn deflated_newton<M: ChoiceMap + ?Sized>(
    map: &M,
    seed: &[f64],
    known: &[&PopulationState],
    tol: f64,
) -> Result<Option<FixedPointOutcome>> {
    // deflation operator m(x) = Π_j (1 / ‖x - x_j‖² + 1)
    let deflation = |x: &[f64]| -> (f64, Vec<f64>) {
        let n = x.len();
        let mut m = 1.0;
        let mut grad_ln = vec![0.0; n];
        for r in known {
            let d2: f64 = x
                .iter()
                .zip(r.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let mj = 1.0 / d2 + 1.0;
            m *= mj;
            for i in 0..n {
                // ∂ ln m_j / ∂x_i
                grad_ln[i] += -2.0 * (x[i] - r[i]) / (d2 * d2) / mj;
            }
        }
        (m, grad_ln)
    };
    let mut x = seed.to_vec();
    for _ in 0..200 {
        let drop = argmax(&x);
        let lx = map.apply(&x)?;
        let g_full: Vec<f64> = lx.iter().zip(&x).map(|(l, v)| l - v).collect();
        if g_full.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= tol {
            break;
        }
        let (m, grad_ln) = deflation(&x);
        let jg = reduced_jacobian(&map.jacobian(&x)?, drop, true);
        let idx: Vec<usize> = (0..x.len()).filter(|&i| i != drop).collect();
        // D = m·G,  ∂D = m·(∂G + G ∂ln m)
        let mut jd = Matrix::zeros(idx.len(), idx.len());
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                let dln = grad_ln[j] - grad_ln[drop];
                jd[(r, c)] = m * (jg[(r, c)] + g_full[i] * dln);
            }
        }
        let rhs: Vec<f64> = idx.iter().map(|&i| -m * g_full[i]).collect();
        let Some(delta) = solve(&jd, &rhs) else {
            return Ok(None);
        };
        let d_norm = |y: &[f64]| -> Result<f64> {
            let ly = map.apply(y)?;
            let (my, _) = deflation(y);
            Ok(my * max_abs_diff(&ly, y))
        };
        let current = m * g_full.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut t = 1.0;
        let mut next = None;
        while t > 1e-10 {
            if let Some(y) = step_state(&x, drop, &delta, t) {
                if d_norm(&y)? < current {
                    next = Some(y);
                    break;
                }
            }
            t *= 0.5;
        }
        match next {
            Some(y) => x = y,
            None => return Ok(None),
        }
    }
    let out = newton_polish(map, &x, tol, 50)?;
    Ok(out.converged.then_some(out))
}

/// Traces branches of logit equilibria `x = P^η(x)` over a strictly
/// decreasing `η` grid.
///
/// Each branch is continued from its last point (secant predictor, Newton
/// corrector, `Δη` halved on failure down to `min_step`). At every grid value
/// the seeds are also solved, by plain iteration and by deflated Newton
/// against the branches already present; any solution away from existing
/// branches starts a new branch. Branches that meet are merged into the
/// earlier one.
pub fn solve_logit_continuation<G: PopulationGame + ?Sized>(
    game: &G,
    eta_grid: &[f64],
    seeds: &[PopulationState],
    opts: &ContinuationOptions,
) -> Result<Vec<EquilibriumCurve>> {
    if eta_grid.is_empty() {
        return Err(invalid("eta_grid", "empty grid"));
    }
    for w in eta_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(invalid("eta_grid", "must be strictly decreasing"));
        }
    }
    for &eta in eta_grid {
        check_eta(eta)?;
    }
    for s in seeds {
        crate::error::check_dim(game.num_actions(), s.num_actions())?;
    }
    let mut curves: Vec<EquilibriumCurve> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    let iter_opts = FixedPointOptions {
        tol: opts.tol,
        max_iter: 5_000,
        ..FixedPointOptions::default()
    };

    for &eta in eta_grid {
        let map = LogitMap::new(game, eta)?;
        let mut still_active = Vec::new();
        for &b in &active {
            let c = &curves[b];
            let predictor = secant_predictor(c, eta);
            match advance_branch(game, c.last_state(), &predictor, c.last_eta(), eta, opts, 0)? {
                Some(out) => {
                    let c = &mut curves[b];
                    c.etas.push(eta);
                    c.states.push(out.state);
                    c.residuals.push(out.residual);
                    still_active.push(b);
                }
                None => curves[b].truncated = true,
            }
        }
        active = still_active;

        // merge coincident branches into the earliest one
        let mut keep: Vec<usize> = Vec::new();
        for &b in &active {
            let dup = keep.iter().copied().find(|&a| {
                curves[a].last_state().distance_inf(curves[b].last_state()) < opts.merge_distance
            });
            match dup {
                Some(a) => curves[b].merged_into = Some(curves[a].branch),
                None => keep.push(b),
            }
        }
        active = keep;

        for seed in seeds {
            let mut found = Vec::new();
            let it = solve_fixed_point(&map, seed, &iter_opts)?;
            if it.converged {
                found.push(it);
            }
            let known: Vec<PopulationState> = active
                .iter()
                .map(|&b| curves[b].last_state().clone())
                .chain(found.iter().map(|f| f.state.clone()))
                .collect();
            let known_refs: Vec<&PopulationState> = known.iter().collect();
            if let Some(out) = deflated_newton(&map, seed.as_slice(), &known_refs, opts.tol)? {
                found.push(out);
            }
            for out in found {
                let is_new = active.iter().all(|&b| {
                    curves[b].last_state().distance_inf(&out.state) > opts.new_branch_distance
                });
                if is_new && out.state.is_interior() {
                    let branch = curves.len();
                    curves.push(EquilibriumCurve {
                        branch,
                        etas: vec![eta],
                        states: vec![out.state],
                        residuals: vec![out.residual],
                        truncated: false,
                        merged_into: None,
                    });
                    active.push(branch);
                }
            }
        }
    }
    Ok(curves)
}

fn secant_predictor(c: &EquilibriumCurve, eta: f64) -> PopulationState {
    let n = c.states.len();
    if n < 2 {
        return c.last_state().clone();
    }
    let (e0, e1) = (c.etas[n - 2], c.etas[n - 1]);
    let (x0, x1) = (&c.states[n - 2], &c.states[n - 1]);
    let t = (eta - e1) / (e1 - e0);
    let pred: Vec<f64> = x1
        .as_slice()
        .iter()
        .zip(x0.as_slice())
        .map(|(a, b)| a + t * (a - b))
        .collect();
    if pred.iter().all(|v| *v > 0.0) {
        PopulationState::project(pred).unwrap_or_else(|_| x1.clone())
    } else {
        x1.clone()
    }
}

fn advance_branch<G: PopulationGame + ?Sized>(
    game: &G,
    from_state: &PopulationState,
    predictor: &PopulationState,
    from_eta: f64,
    to_eta: f64,
    opts: &ContinuationOptions,
    depth: usize,
) -> Result<Option<FixedPointOutcome>> {
    let map = LogitMap::new(game, to_eta)?;
    for start in [predictor, from_state] {
        let out = newton_polish(&map, start.as_slice(), opts.tol, 100)?;
        if out.converged && out.state.distance_inf(from_state) <= opts.max_jump {
            return Ok(Some(out));
        }
    }
    let half = 0.5 * (from_eta - to_eta);
    if half < opts.min_step || depth > 30 {
        return Ok(None);
    }
    let mid = from_eta - half;
    let Some(m) = advance_branch(game, from_state, from_state, from_eta, mid, opts, depth + 1)?
    else {
        return Ok(None);
    };
    advance_branch(game, &m.state, &m.state, mid, to_eta, opts, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{coordination_2x2, young_game};
    use crate::math::exp;

    fn closed_form_k1(s: f64, t: f64, eta: f64) -> f64 {
        (1.0 + exp(-s / eta)) / (1.0 + exp(-(s - t) / eta) + 2.0 * exp(-s / eta))
    }

    #[test]
    fn k1_coordination_closed_form() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let expected = closed_form_k1(2.0, 1.0, 0.25);
        assert!((expected - 0.981_696_420_568_317_6).abs() < 1e-15);
        let eig = solve_sle_k1(&g, 0.25).unwrap();
        assert!((eig.state[0] - expected).abs() < 1e-12);
        let it = solve_sle_fixed_point(
            &g,
            1,
            0.25,
            &PopulationState::barycenter(2),
            &FixedPointOptions::default(),
        )
        .unwrap();
        assert!(it.converged);
        assert!((it.state[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn huge_noise_gives_uniform() {
        let g = young_game();
        let r = solve_sle_fixed_point(
            &g,
            3,
            1e6,
            &PopulationState::vertex(3, 0).mix(&PopulationState::barycenter(3), 0.1),
            &FixedPointOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        for v in r.state.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-4);
        }
    }

    #[test]
    fn symmetric_game_k1_is_uniform() {
        let g =
            LinearGame::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let r = solve_sle_k1(&g, 0.4).unwrap();
        for v in r.state.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn young_k1_eigenvector_agrees_with_iteration() {
        let g = young_game();
        let eig = solve_sle_k1(&g, 0.3).unwrap();
        assert!(eig.residual < 1e-12);
        assert!(eig.state.is_interior());
        let it = solve_sle_fixed_point(
            &g,
            1,
            0.3,
            &PopulationState::barycenter(3),
            &FixedPointOptions::default(),
        )
        .unwrap();
        assert!(it.state.distance_inf(&eig.state) < 1e-10);
    }

    #[test]
    fn k2_quadratic_examples() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let small = solve_sle_k2_two_action(&g, 0.05).unwrap();
        assert!(small.state[0] > 0.99);
        // the quadratic f(y) at the root, evaluated independently
        let q = |w: f64| 1.0 / (1.0 + exp(-(3.0 * w - 1.0) / 0.05));
        let y = small.state[0];
        let f = q(1.0) * y * y + 2.0 * q(0.5) * y * (1.0 - y) + q(0.0) * (1.0 - y) * (1.0 - y) - y;
        assert!(f.abs() < 1e-14);

        let sym = LinearGame::from_rows(&[[1.5, 0.0], [0.0, 1.5]]).unwrap();
        let r = solve_sle_k2_two_action(&sym, 0.3).unwrap();
        assert!((r.state[0] - 0.5).abs() < 1e-15);

        let q = solve_sle_k2_two_action(&g, 0.25).unwrap();
        let it = solve_sle_fixed_point(
            &g,
            2,
            0.25,
            &PopulationState::barycenter(2),
            &FixedPointOptions::default(),
        )
        .unwrap();
        assert!((q.state[0] - it.state[0]).abs() < 1e-12);
        assert!(solve_sle_k2_two_action(&young_game(), 0.3).is_err());
    }

    #[test]
    fn young_k2_multistart_single_cluster_near_e3() {
        let g = young_game();
        let seeds = lattice(3, 10, true);
        assert_eq!(seeds.len(), 36);
        let rep = multistart_sle(&g, 2, 0.3, &seeds, &FixedPointOptions::default(), 1e-8).unwrap();
        assert!(rep.results.iter().all(|r| r.converged));
        assert!(rep.diameter < 1e-8, "diameter {}", rep.diameter);
        assert_eq!(rep.clusters.len(), 1);
        assert_eq!(rep.clusters[0].representative.nearest_vertex(), 2);
    }

    #[test]
    fn nash_examples() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let ne = nash_two_action_linear(&g).unwrap();
        assert_eq!(ne.len(), 3);
        assert_eq!(ne[0], 0.0);
        assert!((ne[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ne[2], 1.0);
        let anti = nash_two_action_linear(&g.negated()).unwrap();
        assert_eq!(anti.len(), 1);
        assert!((anti[0] - 1.0 / 3.0).abs() < 1e-15);
        // action 1 strictly dominant
        let dom = LinearGame::from_rows(&[[3.0, 2.0], [1.0, 1.5]]).unwrap();
        assert_eq!(nash_two_action_linear(&dom).unwrap(), vec![1.0]);
        let flat = LinearGame::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(nash_two_action_linear(&flat).is_err());
    }

    #[test]
    fn continuation_large_noise_single_branch() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let seeds = vec![
            PopulationState::two_action(0.9).unwrap(),
            PopulationState::two_action(0.1).unwrap(),
            PopulationState::barycenter(2),
        ];
        let curves = solve_logit_continuation(
            &g,
            &[3.0, 2.5, 2.0],
            &seeds,
            &ContinuationOptions::default(),
        )
        .unwrap();
        let live: Vec<_> = curves.iter().filter(|c| c.merged_into.is_none()).collect();
        assert_eq!(live.len(), 1);
        assert!((live[0].last_state()[0] - 0.5).abs() < 0.2);
    }

    #[test]
    fn continuation_small_noise_three_branches() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let seeds = vec![
            PopulationState::two_action(0.9).unwrap(),
            PopulationState::two_action(0.1).unwrap(),
            PopulationState::barycenter(2),
        ];
        let grid: Vec<f64> = (0..40)
            .map(|i| 1.0 * libm::pow(0.05, i as f64 / 39.0))
            .collect();
        let curves =
            solve_logit_continuation(&g, &grid, &seeds, &ContinuationOptions::default()).unwrap();
        let mut ends: Vec<f64> = curves
            .iter()
            .filter(|c| c.merged_into.is_none() && (c.last_eta() - 0.05).abs() < 1e-12)
            .map(|c| c.last_state()[0])
            .collect();
        ends.sort_by(f64::total_cmp);
        assert_eq!(ends.len(), 3, "{ends:?}");
        assert!(ends[0] < 0.01);
        assert!((ends[1] - 1.0 / 3.0).abs() < 0.02);
        assert!(ends[2] > 0.99);
        for c in &curves {
            assert!(c.residuals.iter().all(|r| *r <= 1e-10));
            for w in c.states.windows(2) {
                assert!(w[0].distance_inf(&w[1]) <= 0.05 + 1e-12);
            }
        }
    }

    #[test]
    fn continuation_rejects_bad_grid() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let opts = ContinuationOptions::default();
        assert!(solve_logit_continuation(&g, &[0.5, 0.5], &[], &opts).is_err());
        assert!(solve_logit_continuation(&g, &[0.5, 1.0], &[], &opts).is_err());
        assert!(solve_logit_continuation(&g, &[0.5, -0.1], &[], &opts).is_err());
        assert!(solve_logit_continuation(&g, &[], &[], &opts).is_err());
    }

    #[test]
    fn clusters_are_order_independent() {
        let a = PopulationState::two_action(0.2).unwrap();
        let b = PopulationState::two_action(0.2 + 1e-10).unwrap();
        let c = PopulationState::two_action(0.7).unwrap();
        let one = cluster_states(&[a.clone(), b.clone(), c.clone()], 1e-8);
        let two = cluster_states(&[c, b, a], 1e-8);
        assert_eq!(one.len(), 2);
        assert_eq!(two.len(), 2);
        assert_eq!(one[0].members.len(), 2);
    }

    #[test]
    fn seeds_are_deterministic_and_interior() {
        let s = multistart_seeds(2, 20);
        assert!(s.len() >= 20);
        assert!(s.iter().all(|p| p.is_interior()));
        assert_eq!(s, multistart_seeds(2, 20));
    }
}
