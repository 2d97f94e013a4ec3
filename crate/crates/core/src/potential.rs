//! Potentials of two-action games along the edge `y(t) = (t, 1 - t)`.
//!
//! `f` integrates the payoff gap `F_1 - F_2`, `g` integrates the gap of the
//! sampling distortion `G_1 - G_2`, and `h = -η Σ x_i log x_i`. Stationary
//! points of `f + h` are logit equilibria and those of `f + g + h` are fixed
//! points of the corrected rule. All potentials are anchored at `x_1 = 0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::approx::premiums;
use crate::error::{check_eta, invalid, Error, Result};
use crate::game::{LinearGame, PopulationGame};
use crate::math::{ln, xlogx};

pub const DEFAULT_NODES: usize = 2001;
pub const MIN_NODES: usize = 100;

fn check_two_actions<G: PopulationGame + ?Sized>(game: &G) -> Result<()> {
    if game.num_actions() == 2 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: 2,
            found: game.num_actions(),
        })
    }
}

/// `F_1 - F_2` at `(t, 1 - t)`.
pub fn payoff_gap<G: PopulationGame + ?Sized>(game: &G, t: f64) -> f64 {
    let f = game.payoff(&[t, 1.0 - t]);
    f[0] - f[1]
}

/// `G_1 - G_2` at `(t, 1 - t)`.
pub fn distortion_gap<G: PopulationGame + ?Sized>(
    game: &G,
    k: usize,
    eta: f64,
    t: f64,
) -> Result<f64> {
    let rep = premiums(game, &[t, 1.0 - t], k, eta)?;
    if let Err(Error::ApproximationInvalid { action, multiplier }) = rep.check_valid() {
        return Err(Error::InvalidOnPath {
            t,
            action,
            multiplier,
        });
    }
    Ok(rep.distortion[0] - rep.distortion[1])
}

/// `h` at `(t, 1 - t)`.
pub fn entropy(eta: f64, t: f64) -> f64 {
    -eta * (xlogx(t) + xlogx(1.0 - t))
}

/// `-η log(x_1 / x_2)`, the slope of `h` along the edge.
fn entropy_slope(eta: f64, t: f64) -> f64 {
    if t <= 0.0 {
        f64::INFINITY
    } else if t >= 1.0 {
        f64::NEG_INFINITY
    } else {
        -eta * (ln(t) - ln(1.0 - t))
    }
}

/// Cumulative integral of nodal values on a uniform grid: composite Simpson
/// on even nodes, a three-point panel formula on odd ones.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    let mut j = 2;
    while j < n {
        out[j] = out[j - 2] + h / 3.0 * (values[j - 2] + 4.0 * values[j - 1] + values[j]);
        j += 2;
    }
    let mut j = 1;
    while j < n {
        out[j] = if j + 1 < n {
            out[j - 1] + h / 12.0 * (5.0 * values[j - 1] + 8.0 * values[j] - values[j + 1])
        } else {
            out[j - 1] + h / 12.0 * (-values[j - 2] + 8.0 * values[j - 1] + 5.0 * values[j])
        };
        j += 2;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialProfile {
    pub k: usize,
    pub eta: f64,
    pub x1: Vec<f64>,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub f_eta: Vec<f64>,
    pub f_k_eta: Vec<f64>,
    /// `F_1 - F_2` at the nodes.
    pub payoff_gap: Vec<f64>,
    /// `G_1 - G_2` at the nodes.
    pub distortion_gap: Vec<f64>,
    /// Interior stationary points of `f`, `f^η` and `f^{k,η}`.
    pub stationary_f: Vec<f64>,
    pub stationary_f_eta: Vec<f64>,
    pub stationary_f_k_eta: Vec<f64>,
}

impl PotentialProfile {
    /// Stationary points of `f^{k,η}`.
    pub fn stationary_points(&self) -> &[f64] {
        &self.stationary_f_k_eta
    }
}

/// Evaluates all potentials on `nodes` uniform points of `[0, 1]`.
pub fn potential_profile<G: PopulationGame + ?Sized>(
    game: &G,
    k: usize,
    eta: f64,
    nodes: usize,
) -> Result<PotentialProfile> {
    check_two_actions(game)?;
    check_eta(eta)?;
    if k == 0 {
        return Err(invalid("k", "sample size must be at least 1"));
    }
    if nodes < MIN_NODES {
        return Err(invalid("nodes", "grid needs at least 100 nodes"));
    }
    let step = 1.0 / (nodes - 1) as f64;
    let x1: Vec<f64> = (0..nodes).map(|j| j as f64 * step).collect();
    let pg: Vec<f64> = x1.iter().map(|&t| payoff_gap(game, t)).collect();
    let dg = x1
        .iter()
        .map(|&t| distortion_gap(game, k, eta, t))
        .collect::<Result<Vec<f64>>>()?;
    let f = cumulative_simpson(&pg, step);
    let g = cumulative_simpson(&dg, step);
    let h: Vec<f64> = x1.iter().map(|&t| entropy(eta, t)).collect();
    let f_eta: Vec<f64> = f.iter().zip(&h).map(|(a, b)| a + b).collect();
    let f_k_eta: Vec<f64> = f_eta.iter().zip(&g).map(|(a, b)| a + b).collect();

    let stationary_f = sign_change_roots(&x1, &|t| Ok(payoff_gap(game, t)), false)?;
    let stationary_f_eta = sign_change_roots(
        &x1,
        &|t| Ok(payoff_gap(game, t) + entropy_slope(eta, t)),
        true,
    )?;
    let stationary_f_k_eta = sign_change_roots(&x1, &|t| perturbed_slope(game, k, eta, t), true)?;
    Ok(PotentialProfile {
        k,
        eta,
        x1,
        f,
        h,
        g,
        f_eta,
        f_k_eta,
        payoff_gap: pg,
        distortion_gap: dg,
        stationary_f,
        stationary_f_eta,
        stationary_f_k_eta,
    })
}

/// Slope of `f^{k,η}` along the edge: `F̃_1 - F̃_2 - η log(x_1/x_2)`.
pub fn perturbed_slope<G: PopulationGame + ?Sized>(
    game: &G,
    k: usize,
    eta: f64,
    t: f64,
) -> Result<f64> {
    if t <= 0.0 || t >= 1.0 {
        return Ok(entropy_slope(eta, t));
    }
    Ok(payoff_gap(game, t) + distortion_gap(game, k, eta, t)? + entropy_slope(eta, t))
}

/// Roots of `slope` by sign changes between grid nodes, refined by bisection
/// to rounding level. With `barrier`, the end nodes carry the signs of the
/// entropy barrier.
fn sign_change_roots(
    grid: &[f64],
    slope: &dyn Fn(f64) -> Result<f64>,
    barrier: bool,
) -> Result<Vec<f64>> {
    let n = grid.len();
    let vals = grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            if barrier && j == 0 {
                Ok(1.0)
            } else if barrier && j == n - 1 {
                Ok(-1.0)
            } else {
                slope(t)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut roots = Vec::new();
    for j in 0..n - 1 {
        let (a, b) = (vals[j], vals[j + 1]);
        if a == 0.0 {
            if j > 0 || !barrier {
                roots.push(grid[j]);
            }
            continue;
        }
        if a * b < 0.0 {
            let (mut lo, mut hi) = (grid[j], grid[j + 1]);
            let mut slo = a;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let sm = slope(mid)?;
                if sm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (sm > 0.0) == (slo > 0.0) {
                    lo = mid;
                    slo = sm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    if !barrier && vals[n - 1] == 0.0 {
        roots.push(grid[n - 1]);
    }
    roots.retain(|&r| r > 0.0 && r < 1.0);
    Ok(roots)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GShape {
    /// Increasing then decreasing, maximized at the interior Nash point.
    QuasiconcaveMax {
        at: f64,
    },
    Zero,
    /// Decreasing then increasing, minimized at the interior Nash point.
    QuasiconvexMin {
        at: f64,
    },
}

impl GShape {
    pub fn as_str(&self) -> &'static str {
        match self {
            GShape::QuasiconcaveMax { .. } => "quasiconcave-max",
            GShape::Zero => "zero",
            GShape::QuasiconvexMin { .. } => "quasiconvex-min",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeReport {
    pub shape: GShape,
    /// Grid point where `g` attains its extremum.
    pub extremum: f64,
    pub nash: Option<f64>,
    /// `|G_1 - G_2|` at `x_1 = 0` and `x_1 = 1`.
    pub boundary_slopes: [f64; 2],
}

/// Certifies the shape of `g` on the profile grid for a two-action linear
/// game: the sign of `G_1 - G_2` on either side of `x*`, the location of the
/// extremum within one grid cell of `x*`, and vanishing boundary slopes.
pub fn classify_g_shape(
    game: &LinearGame,
    k: usize,
    eta: f64,
    nodes: usize,
) -> Result<ShapeReport> {
    let profile = potential_profile(game, k, eta, nodes)?;
    let beta = game.two_action_beta()?;
    let n = profile.x1.len();
    let cell = profile.x1[1] - profile.x1[0];
    let boundary_slopes = [
        profile.distortion_gap[0].abs(),
        profile.distortion_gap[n - 1].abs(),
    ];
    if beta == 0.0 {
        let witnesses: Vec<f64> = (0..n)
            .filter(|&j| profile.g[j].abs() > 1e-12)
            .map(|j| profile.x1[j])
            .collect();
        if !witnesses.is_empty() {
            return Err(Error::InconclusiveShape { witnesses });
        }
        return Ok(ShapeReport {
            shape: GShape::Zero,
            extremum: 0.0,
            nash: None,
            boundary_slopes,
        });
    }
    let nash = game.two_action_indifference()?;
    if !(nash > 0.0 && nash < 1.0) {
        return Err(Error::DegenerateGame("no interior Nash equilibrium"));
    }
    let up = beta > 0.0;
    let mut witnesses = Vec::new();
    for j in 1..n - 1 {
        let t = profile.x1[j];
        if (t - nash).abs() <= cell {
            continue;
        }
        let d = profile.distortion_gap[j];
        // β > 0: g rises before x* and falls after; β < 0 the reverse
        let expect_positive = (t < nash) == up;
        if d == 0.0 || (d > 0.0) != expect_positive {
            witnesses.push(t);
        }
    }
    let pick = |better: &dyn Fn(f64, f64) -> bool| {
        let mut best = 0;
        for j in 1..n {
            if better(profile.g[j], profile.g[best]) {
                best = j;
            }
        }
        profile.x1[best]
    };
    let extremum = if up {
        pick(&|a, b| a > b)
    } else {
        pick(&|a, b| a < b)
    };
    if (extremum - nash).abs() > cell {
        witnesses.push(extremum);
    }
    if boundary_slopes.iter().any(|s| *s > 1e-8) {
        witnesses.push(if boundary_slopes[0] > 1e-8 { 0.0 } else { 1.0 });
    }
    if !witnesses.is_empty() {
        return Err(Error::InconclusiveShape { witnesses });
    }
    let shape = if up {
        GShape::QuasiconcaveMax { at: nash }
    } else {
        GShape::QuasiconvexMin { at: nash }
    };
    Ok(ShapeReport {
        shape,
        extremum,
        nash: Some(nash),
        boundary_slopes,
    })
}

/// `f^{k,η}(b) - f^{k,η}(a)` for two states on the edge, given by `x_1`.
pub fn perturbed_potential_increment<G: PopulationGame + ?Sized>(
    game: &G,
    k: usize,
    eta: f64,
    a: f64,
    b: f64,
) -> Result<f64> {
    check_two_actions(game)?;
    // 8-panel Simpson of F̃_1 - F̃_2 over [a, b]
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for j in 0..=panels {
        let t = a + j as f64 * h;
        let w = if j == 0 || j == panels {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * (payoff_gap(game, t) + distortion_gap(game, k, eta, t)?);
    }
    Ok(acc * h / 3.0 + entropy(eta, b) - entropy(eta, a))
}

/// Increments of `f^{k,η}` between consecutive states of a two-action path.
pub fn lyapunov_increments<G: PopulationGame + ?Sized>(
    game: &G,
    k: usize,
    eta: f64,
    path: &[crate::state::PopulationState],
) -> Result<Vec<f64>> {
    path.windows(2)
        .map(|w| perturbed_potential_increment(game, k, eta, w[0][0], w[1][0]))
        .collect()
}
