//! Mean dynamics `ẋ = rule(x) - x` for the choice rules.
//!
//! Smooth rules are integrated with fixed-step RK4. The best response
//! dynamics are differential inclusions; they are integrated by forward Euler
//! along the selection given by the uniform tie rule, which follows generic
//! trajectories but not sliding motion along indifference sets.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::approx::CorrectedRule;
use crate::choice::{
    BestResponseMap, ChoiceMap, LogitMap, SamplingBestResponse, SamplingLogit, TieRule,
    DEFAULT_BR_TOLERANCE,
};
use crate::equilibrium::{cluster_states, Cluster};
use crate::error::{check_dim, invalid, Result};
use crate::game::PopulationGame;
use crate::math::sqrt;
use crate::state::{lattice, max_abs_diff, PopulationState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamic {
    BestResponse,
    SamplingBestResponse {
        k: usize,
    },
    Logit {
        eta: f64,
    },
    SamplingLogit {
        k: usize,
        eta: f64,
    },
    /// `ẋ = T̃L(x) - x` for the delta-method corrected rule.
    CorrectedLogit {
        k: usize,
        eta: f64,
    },
}

impl Dynamic {
    pub fn name(&self) -> &'static str {
        match self {
            Dynamic::BestResponse => "BRD",
            Dynamic::SamplingBestResponse { .. } => "SBRD",
            Dynamic::Logit { .. } => "LD",
            Dynamic::SamplingLogit { .. } => "SLD",
            Dynamic::CorrectedLogit { .. } => "TLD",
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(
            self,
            Dynamic::BestResponse | Dynamic::SamplingBestResponse { .. }
        )
    }

    pub fn default_dt(&self) -> f64 {
        if self.is_smooth() {
            0.01
        } else {
            0.005
        }
    }

    /// The choice rule driving this dynamic.
    pub fn choice_map<'a, G: PopulationGame + ?Sized>(
        &self,
        game: &'a G,
    ) -> Result<Box<dyn ChoiceMap + 'a>> {
        Ok(match *self {
            Dynamic::BestResponse => Box::new(BestResponseMap::new(
                game,
                DEFAULT_BR_TOLERANCE,
                TieRule::Uniform,
            )?),
            Dynamic::SamplingBestResponse { k } => Box::new(SamplingBestResponse::new(
                game,
                k,
                DEFAULT_BR_TOLERANCE,
                TieRule::Uniform,
            )?),
            Dynamic::Logit { eta } => Box::new(LogitMap::new(game, eta)?),
            Dynamic::SamplingLogit { k, eta } => Box::new(SamplingLogit::new(game, k, eta)?),
            Dynamic::CorrectedLogit { k, eta } => Box::new(CorrectedRule::new(game, k, eta)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub dt: f64,
    pub t_max: f64,
    /// Stop once `‖rule(x) - x‖∞` is at most this.
    pub conv_tol: f64,
    /// Record every `stride`-th step (the first and last states are always kept).
    pub stride: usize,
}

impl IntegrationOptions {
    pub fn for_dynamic(d: &Dynamic) -> Self {
        Self {
            dt: d.default_dt(),
            t_max: 200.0,
            conv_tol: 1e-9,
            stride: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_max >= 0.0) {
            return Err(invalid("t_max", "must be nonnegative"));
        }
        if !(self.conv_tol > 0.0) {
            return Err(invalid("conv_tol", "must be positive"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxTime,
    /// The rule could not be evaluated or produced a non-finite value.
    StepFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxTime => "max-time",
            Termination::StepFailure => "step-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PopulationState>,
    pub termination: Termination,
    /// `‖rule(x) - x‖∞` at the last state (NaN after a step failure).
    pub final_speed: f64,
    /// Smallest entry of any step before renormalization.
    pub min_raw_entry: f64,
}

impl Trajectory {
    pub fn last(&self) -> &PopulationState {
        self.states
            .last()
            .expect("trajectories hold the initial state")
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

fn velocity(map: &dyn ChoiceMap, x: &[f64]) -> Option<Vec<f64>> {
    let lx = map.apply(x).ok()?;
    let v: Vec<f64> = lx.iter().zip(x).map(|(l, y)| l - y).collect();
    v.iter().all(|a| a.is_finite()).then_some(v)
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(y, w)| y + a * w).collect()
}

/// Integrates `ẋ = rule(x) - x` from `x0`.
pub fn integrate<G: PopulationGame + ?Sized>(
    dynamic: Dynamic,
    game: &G,
    x0: &PopulationState,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    check_dim(game.num_actions(), x0.num_actions())?;
    let map = dynamic.choice_map(game)?;
    integrate_map(map.as_ref(), dynamic.is_smooth(), x0, opts)
}

/// [`integrate`] for an arbitrary map; `rk4` selects RK4 over Euler.
pub fn integrate_map(
    map: &dyn ChoiceMap,
    rk4: bool,
    x0: &PopulationState,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let dt = opts.dt;
    let mut x = x0.as_slice().to_vec();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut min_raw = x0.min_entry();
    let mut steps = 0usize;
    let (termination, final_speed) = loop {
        let Some(v) = velocity(map, &x) else {
            break (Termination::StepFailure, f64::NAN);
        };
        let speed = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if speed <= opts.conv_tol {
            break (Termination::Converged, speed);
        }
        if t >= opts.t_max - 1e-12 * opts.t_max.max(1.0) {
            break (Termination::MaxTime, speed);
        }
        let next = if rk4 {
            let k2 = velocity(map, &axpy(&x, 0.5 * dt, &v));
            let k3 = k2
                .as_ref()
                .and_then(|k2| velocity(map, &axpy(&x, 0.5 * dt, k2)));
            let k4 = k3.as_ref().and_then(|k3| velocity(map, &axpy(&x, dt, k3)));
            match (k2, k3, k4) {
                (Some(k2), Some(k3), Some(k4)) => (0..x.len())
                    .map(|i| x[i] + dt / 6.0 * (v[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect::<Vec<f64>>(),
                _ => break (Termination::StepFailure, f64::NAN),
            }
        } else {
            axpy(&x, dt, &v)
        };
        if next.iter().any(|a| !a.is_finite()) {
            break (Termination::StepFailure, f64::NAN);
        }
        min_raw = next.iter().copied().fold(min_raw, f64::min);
        let Ok(state) = PopulationState::project(next) else {
            break (Termination::StepFailure, f64::NAN);
        };
        x = state.as_slice().to_vec();
        t += dt;
        steps += 1;
        if steps.is_multiple_of(opts.stride) {
            times.push(t);
            states.push(state);
        }
    };
    if *times.last().unwrap() != t {
        times.push(t);
        states.push(PopulationState::project(x)?);
    }
    Ok(Trajectory {
        times,
        states,
        termination,
        final_speed,
        min_raw_entry: min_raw,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldGrid {
    pub resolution: usize,
    pub points: Vec<PopulationState>,
    /// `rule(x) - x` at each point.
    pub velocities: Vec<Vec<f64>>,
    /// Euclidean norm of each velocity.
    pub speeds: Vec<f64>,
}

/// `rule(x) - x` on the barycentric lattice of resolution `m`.
pub fn vector_field<G: PopulationGame + ?Sized>(
    dynamic: Dynamic,
    game: &G,
    m: usize,
) -> Result<VectorFieldGrid> {
    if m < 2 {
        return Err(invalid("resolution", "must be at least 2"));
    }
    let map = dynamic.choice_map(game)?;
    let points = lattice(game.num_actions(), m, false);
    let mut velocities = Vec::with_capacity(points.len());
    let mut speeds = Vec::with_capacity(points.len());
    for p in &points {
        let lx = map.apply(p.as_slice())?;
        let v: Vec<f64> = lx.iter().zip(p.as_slice()).map(|(l, y)| l - y).collect();
        speeds.push(sqrt(v.iter().map(|a| a * a).sum()));
        velocities.push(v);
    }
    Ok(VectorFieldGrid {
        resolution: m,
        points,
        velocities,
        speeds,
    })
}

pub const DEFAULT_ATTRACTOR_RADIUS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BasinReport {
    pub starts: Vec<PopulationState>,
    /// Attractor index of each start, `None` if it did not converge.
    pub assignment: Vec<Option<usize>>,
    pub attractors: Vec<PopulationState>,
    /// Share of converged starts in each attractor's basin.
    pub fractions: Vec<f64>,
    /// Largest distance between a terminal state and its attractor.
    pub max_spread: f64,
    pub non_converged: Vec<usize>,
}

/// Groups terminal states into attractors. `terminals[i]` is `None` for a
/// start that did not converge.
pub fn classify_terminals(
    starts: Vec<PopulationState>,
    terminals: &[Option<PopulationState>],
    radius: f64,
) -> BasinReport {
    let converged: Vec<usize> = (0..terminals.len())
        .filter(|&i| terminals[i].is_some())
        .collect();
    let states: Vec<PopulationState> = converged
        .iter()
        .map(|&i| terminals[i].clone().unwrap())
        .collect();
    let clusters: Vec<Cluster> = cluster_states(&states, radius);
    let mut assignment = vec![None; terminals.len()];
    let mut counts = vec![0usize; clusters.len()];
    let mut max_spread = 0.0f64;
    for (c, cl) in clusters.iter().enumerate() {
        for &m in &cl.members {
            assignment[converged[m]] = Some(c);
            counts[c] += 1;
            max_spread = max_spread.max(cl.representative.distance_inf(&states[m]));
        }
    }
    let total = converged.len().max(1) as f64;
    BasinReport {
        starts,
        assignment,
        attractors: clusters.into_iter().map(|c| c.representative).collect(),
        fractions: counts.iter().map(|&c| c as f64 / total).collect(),
        max_spread,
        non_converged: (0..terminals.len())
            .filter(|&i| terminals[i].is_none())
            .collect(),
    }
}

/// Integrates from every start and clusters the limits.
pub fn basin_report<G: PopulationGame + ?Sized>(
    dynamic: Dynamic,
    game: &G,
    starts: &[PopulationState],
    opts: &IntegrationOptions,
    radius: f64,
) -> Result<BasinReport> {
    let map = dynamic.choice_map(game)?;
    let light = IntegrationOptions {
        stride: usize::MAX,
        ..*opts
    };
    let mut terminals = Vec::with_capacity(starts.len());
    for s in starts {
        let tr = integrate_map(map.as_ref(), dynamic.is_smooth(), s, &light)?;
        terminals.push(tr.converged().then(|| tr.last().clone()));
    }
    Ok(classify_terminals(starts.to_vec(), &terminals, radius))
}

/// Largest `|Σ_i v_i|` over a vector field.
pub fn max_tangency_defect(field: &VectorFieldGrid) -> f64 {
    field
        .velocities
        .iter()
        .map(|v| v.iter().sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// Distance between the ends of two trajectories.
pub fn terminal_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    max_abs_diff(a.last().as_slice(), b.last().as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{
        solve_fixed_point, solve_sle_fixed_point, solve_sle_k1, FixedPointOptions,
    };
    use crate::game::{coordination_2x2, young_game};
    use crate::linalg::Matrix;

    fn expm(a: &Matrix) -> Matrix {
        // scaling and squaring with a long Taylor series
        let s = 10;
        let b = a.scale(1.0 / (1u32 << s) as f64);
        let n = a.rows();
        let mut term = Matrix::identity(n);
        let mut sum = Matrix::identity(n);
        for j in 1..30 {
            term = term.mul(&b).scale(1.0 / j as f64);
            for i in 0..n {
                for c in 0..n {
                    sum.row_mut(i)[c] += term[(i, c)];
                }
            }
        }
        for _ in 0..s {
            sum = sum.mul(&sum);
        }
        sum
    }

    #[test]
    fn k1_sld_matches_matrix_exponential() {
        let g = young_game();
        let eta = 0.5;
        let pi = SamplingLogit::logit_at_vertices(&g, eta).unwrap();
        let mut a = pi.clone();
        for i in 0..3 {
            a.row_mut(i)[i] -= 1.0;
        }
        let x0 = PopulationState::vertex(3, 0).mix(&PopulationState::barycenter(3), 0.1);
        let opts = IntegrationOptions {
            t_max: 5.0,
            ..IntegrationOptions::for_dynamic(&Dynamic::SamplingLogit { k: 1, eta })
        };
        let tr = integrate(Dynamic::SamplingLogit { k: 1, eta }, &g, &x0, &opts).unwrap();
        let t = *tr.times.last().unwrap();
        let exact = expm(&a.scale(t)).mul_vec(x0.as_slice());
        assert!(max_abs_diff(tr.last().as_slice(), &exact) < 1e-9);

        // at η = 0.5 the relaxation rate is about 0.02; η = 1 converges within t_max
        let eta = 1.0;
        let long = IntegrationOptions::for_dynamic(&Dynamic::SamplingLogit { k: 1, eta });
        let perron = solve_sle_k1(&g, eta).unwrap();
        for i in 0..3 {
            let start = PopulationState::vertex(3, i).mix(&PopulationState::barycenter(3), 0.1);
            let tr = integrate(Dynamic::SamplingLogit { k: 1, eta }, &g, &start, &long).unwrap();
            assert!(tr.converged());
            assert!(tr.last().distance_inf(&perron.state) < 1e-8);
        }
    }

    #[test]
    fn ld_starting_at_equilibrium_stays() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let fp = solve_fixed_point(
            &LogitMap::new(&g, 0.25).unwrap(),
            &PopulationState::two_action(0.9).unwrap(),
            &FixedPointOptions::default(),
        )
        .unwrap();
        let opts = IntegrationOptions::for_dynamic(&Dynamic::Logit { eta: 0.25 });
        let tr = integrate(Dynamic::Logit { eta: 0.25 }, &g, &fp.state, &opts).unwrap();
        assert!(tr.converged());
        assert_eq!(tr.states.len(), 1);
        assert!(tr.final_speed <= 1e-9);
    }

    #[test]
    fn young_sld_reaches_equilibrium() {
        let g = young_game();
        let d = Dynamic::SamplingLogit { k: 2, eta: 0.3 };
        let tr = integrate(
            d,
            &g,
            &PopulationState::barycenter(3),
            &IntegrationOptions::for_dynamic(&d),
        )
        .unwrap();
        assert!(tr.converged());
        let eq = solve_sle_fixed_point(
            &g,
            2,
            0.3,
            &PopulationState::barycenter(3),
            &FixedPointOptions::default(),
        )
        .unwrap();
        assert!(tr.last().distance_inf(&eq.state) < 1e-6);
        assert!(tr.min_raw_entry >= -1e-12);
    }

    #[test]
    fn halving_dt_keeps_terminal_state() {
        let g = young_game();
        let d = Dynamic::SamplingLogit { k: 2, eta: 0.3 };
        let x0 = PopulationState::new(vec![0.6, 0.3, 0.1]).unwrap();
        let a = integrate(d, &g, &x0, &IntegrationOptions::for_dynamic(&d)).unwrap();
        let b = integrate(
            d,
            &g,
            &x0,
            &IntegrationOptions {
                dt: 0.005,
                ..IntegrationOptions::for_dynamic(&d)
            },
        )
        .unwrap();
        assert!(a.converged() && b.converged());
        assert!(terminal_gap(&a, &b) < 1e-6);
    }

    #[test]
    fn vector_field_tangent_and_brackets_equilibria() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let f = vector_field(Dynamic::Logit { eta: 0.25 }, &g, 50).unwrap();
        assert_eq!(f.points.len(), 51);
        assert!(max_tangency_defect(&f) < 1e-10);
        // points run from x1 = 1 down to 0; every flip of the x1 velocity
        // brackets one equilibrium found on a fine grid
        let signs: Vec<bool> = f.velocities.iter().map(|v| v[0] > 0.0).collect();
        let flips: Vec<usize> = (0..signs.len() - 1)
            .filter(|&i| signs[i] != signs[i + 1])
            .collect();
        let map = LogitMap::new(&g, 0.25).unwrap();
        let disp = |y: f64| map.apply(&[y, 1.0 - y]).unwrap()[0] - y;
        let mut roots = Vec::new();
        let fine = 20_000;
        for j in 0..fine {
            let (mut lo, mut hi) = (j as f64 / fine as f64, (j + 1) as f64 / fine as f64);
            if disp(lo) * disp(hi) < 0.0 {
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if disp(lo) * disp(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
        assert_eq!(roots.len(), 3);
        assert_eq!(flips.len(), roots.len());
        for r in roots {
            assert!(flips
                .iter()
                .any(|&i| f.points[i][0] >= r && r >= f.points[i + 1][0]));
        }
        assert!(vector_field(Dynamic::Logit { eta: 0.25 }, &g, 1).is_err());
    }

    #[test]
    fn young_brd_has_three_corner_attractors() {
        let g = young_game();
        let d = Dynamic::BestResponse;
        // the basin of e1 needs x1 above about 0.86
        let starts = lattice(3, 15, true);
        let rep = basin_report(
            d,
            &g,
            &starts,
            &IntegrationOptions::for_dynamic(&d),
            DEFAULT_ATTRACTOR_RADIUS,
        )
        .unwrap();
        assert!(
            rep.non_converged.is_empty(),
            "{:?} {:?}",
            rep.non_converged,
            rep.attractors
        );
        let mut corners: Vec<usize> = rep.attractors.iter().map(|a| a.nearest_vertex()).collect();
        corners.sort_unstable();
        assert_eq!(corners, vec![0, 1, 2]);
        assert!(rep
            .attractors
            .iter()
            .all(|a| a.as_slice().iter().any(|v| *v > 1.0 - 1e-6)));
    }

    #[test]
    fn young_sbrd_single_attractor_near_e3() {
        let g = young_game();
        let d = Dynamic::SamplingBestResponse { k: 2 };
        let starts = lattice(3, 15, true);
        let rep = basin_report(
            d,
            &g,
            &starts,
            &IntegrationOptions::for_dynamic(&d),
            DEFAULT_ATTRACTOR_RADIUS,
        )
        .unwrap();
        assert_eq!(rep.attractors.len(), 1, "{:?}", rep.attractors);
        assert_eq!(rep.attractors[0].nearest_vertex(), 2);
        assert_eq!(rep.fractions, vec![1.0]);
    }

    #[test]
    fn step_failure_is_reported() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        let d = Dynamic::CorrectedLogit { k: 1, eta: 0.02 };
        let x0 = PopulationState::two_action(0.34).unwrap();
        let tr = integrate(d, &g, &x0, &IntegrationOptions::for_dynamic(&d)).unwrap();
        assert_eq!(tr.termination, Termination::StepFailure);
    }
}
