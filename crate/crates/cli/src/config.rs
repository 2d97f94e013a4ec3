//! TOML experiment configuration.

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use slogit_core::game::{bilingual_game, congestion_game, coordination_2x2, young_game};
use slogit_core::sampling::SampleCaps;
use slogit_core::{LinearGame, Matrix, Polynomial, PopulationGame, SeparableGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Job {
    ChoiceCurves,
    SleVsEta,
    PhasePortrait,
    PremiumProfiles,
    ErrorAudit,
    InteriorShift,
    PotentialProfiles,
}

impl Job {
    pub const ALL: [Job; 7] = [
        Job::ChoiceCurves,
        Job::SleVsEta,
        Job::PhasePortrait,
        Job::PremiumProfiles,
        Job::ErrorAudit,
        Job::InteriorShift,
        Job::PotentialProfiles,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Job::ChoiceCurves => "choice-curves",
            Job::SleVsEta => "sle-vs-eta",
            Job::PhasePortrait => "phase-portrait",
            Job::PremiumProfiles => "premium-profiles",
            Job::ErrorAudit => "error-audit",
            Job::InteriorShift => "interior-shift",
            Job::PotentialProfiles => "potential-profiles",
        }
    }

    pub fn parse(s: &str) -> Result<Job> {
        match Job::ALL.iter().find(|j| j.name() == s) {
            Some(j) => Ok(*j),
            None => {
                let names: Vec<_> = Job::ALL.iter().map(Job::name).collect();
                bail!("unknown job `{s}`; expected one of {}", names.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub game: GameSpec,
    pub solver: SolverConfig,
    pub choice_curves: ChoiceCurves,
    pub sle_vs_eta: SleVsEta,
    pub phase_portrait: PhasePortrait,
    pub premium_profiles: PremiumProfiles,
    pub error_audit: ErrorAudit,
    pub interior_shift: InteriorShiftConfig,
    pub potential_profiles: PotentialProfiles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSpec {
    /// coordination, young, bilingual, congestion, matrix or separable.
    pub kind: String,
    pub s: f64,
    pub t: f64,
    pub g: f64,
    pub c: f64,
    /// Payoff matrix rows for `matrix`.
    pub rows: Vec<Vec<f64>>,
    /// Polynomial coefficients (constant term first) per action for `separable`.
    pub polynomials: Vec<Vec<f64>>,
    /// Use `-A` instead of `A` (linear games only).
    pub negate: bool,
}

impl Default for GameSpec {
    fn default() -> Self {
        Self {
            kind: "coordination".into(),
            s: 2.0,
            t: 1.0,
            g: 0.5,
            c: 0.05,
            rows: Vec::new(),
            polynomials: Vec::new(),
            negate: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Minimum number of deterministic multistart seeds.
    pub seeds: usize,
    /// Extra uniformly drawn seeds, from the run seed.
    pub random_seeds: usize,
    pub cluster_radius: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
            seeds: 20,
            random_seeds: 0,
            cluster_radius: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChoiceCurves {
    pub ks: Vec<usize>,
    pub etas: Vec<f64>,
    pub resolution: usize,
    pub best_response: bool,
}

impl Default for ChoiceCurves {
    fn default() -> Self {
        Self {
            ks: vec![1, 2, 5, 20],
            etas: vec![0.25],
            resolution: 200,
            best_response: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SleVsEta {
    pub ks: Vec<usize>,
    /// Explicit grid; when empty a geometric grid from `eta_max` down to
    /// `eta_min` with `eta_points` points is used.
    pub etas: Vec<f64>,
    pub eta_max: f64,
    pub eta_min: f64,
    pub eta_points: usize,
    /// Also trace logit equilibria by continuation.
    pub logit: bool,
}

impl Default for SleVsEta {
    fn default() -> Self {
        Self {
            ks: vec![1, 2, 3, 5, 20],
            etas: Vec::new(),
            eta_max: 1.0,
            eta_min: 0.02,
            eta_points: 50,
            logit: true,
        }
    }
}

impl SleVsEta {
    pub fn grid(&self) -> Vec<f64> {
        if !self.etas.is_empty() {
            return self.etas.clone();
        }
        let n = self.eta_points;
        if n == 1 {
            return vec![self.eta_max];
        }
        let r = (self.eta_min / self.eta_max).ln();
        (0..n)
            .map(|i| match i {
                0 => self.eta_max,
                _ if i == n - 1 => self.eta_min,
                _ => self.eta_max * (r * i as f64 / (n - 1) as f64).exp(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasePortrait {
    /// Any of BRD, SBRD, LD, SLD, TLD.
    pub dynamics: Vec<String>,
    pub k: usize,
    pub eta: f64,
    /// Lattice resolution of the vector field.
    pub resolution: usize,
    /// Interior lattice resolution of trajectory and basin starts.
    pub start_resolution: usize,
    pub t_max: f64,
    pub conv_tol: f64,
    /// Keep every `stride`-th integration step in the trajectory table.
    pub stride: usize,
    pub attractor_radius: f64,
}

impl Default for PhasePortrait {
    fn default() -> Self {
        Self {
            dynamics: ["BRD", "SBRD", "LD", "SLD"].map(String::from).to_vec(),
            k: 2,
            eta: 0.3,
            resolution: 40,
            start_resolution: 15,
            t_max: 200.0,
            conv_tol: 1e-9,
            stride: 50,
            attractor_radius: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PremiumProfiles {
    pub ks: Vec<usize>,
    pub etas: Vec<f64>,
    /// Lattice resolution; for two actions the number of grid intervals.
    pub resolution: usize,
}

impl Default for PremiumProfiles {
    fn default() -> Self {
        Self {
            ks: vec![10],
            etas: vec![0.5, 0.25, 0.1, 0.05],
            resolution: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorAudit {
    pub etas: Vec<f64>,
    pub ks: Vec<usize>,
    pub epsilon: f64,
    pub resolution: usize,
}

impl Default for ErrorAudit {
    fn default() -> Self {
        Self {
            etas: vec![0.5, 0.15],
            ks: vec![16, 32, 64, 128, 256],
            epsilon: 0.1,
            resolution: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteriorShiftConfig {
    pub ks: Vec<usize>,
    pub etas: Vec<f64>,
    pub margin: f64,
}

impl Default for InteriorShiftConfig {
    fn default() -> Self {
        Self {
            ks: vec![100, 200, 400],
            etas: vec![0.1, 0.05],
            margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialProfiles {
    pub ks: Vec<usize>,
    pub etas: Vec<f64>,
    pub nodes: usize,
}

impl Default for PotentialProfiles {
    fn default() -> Self {
        Self {
            ks: vec![40],
            etas: vec![0.2],
            nodes: 2001,
        }
    }
}

/// A cataloged or user-specified game.
#[derive(Debug, Clone)]
pub enum Game {
    Linear(LinearGame),
    Separable(SeparableGame),
}

impl Game {
    pub fn as_linear(&self) -> Option<&LinearGame> {
        match self {
            Game::Linear(g) => Some(g),
            Game::Separable(_) => None,
        }
    }
}

impl PopulationGame for Game {
    fn num_actions(&self) -> usize {
        match self {
            Game::Linear(g) => g.num_actions(),
            Game::Separable(g) => g.num_actions(),
        }
    }

    fn payoff_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Game::Linear(g) => g.payoff_into(x, out),
            Game::Separable(g) => g.payoff_into(x, out),
        }
    }

    fn gradient(&self, x: &[f64]) -> Matrix {
        match self {
            Game::Linear(g) => g.gradient(x),
            Game::Separable(g) => g.gradient(x),
        }
    }

    fn hessian(&self, action: usize, x: &[f64]) -> Matrix {
        match self {
            Game::Linear(g) => g.hessian(action, x),
            Game::Separable(g) => g.hessian(action, x),
        }
    }
}

impl GameSpec {
    pub fn build(&self) -> Result<Game> {
        let game = match self.kind.as_str() {
            "coordination" => Game::Linear(coordination_2x2(self.s, self.t)?),
            "young" => Game::Linear(young_game()),
            "bilingual" => Game::Linear(bilingual_game(self.g, self.c)?),
            "matrix" => Game::Linear(LinearGame::from_rows(&self.rows)?),
            "congestion" => Game::Separable(congestion_game()),
            "separable" => Game::Separable(SeparableGame::new(
                self.polynomials.iter().cloned().map(Polynomial::new).collect(),
            )?),
            other => bail!(
                "unknown game kind `{other}`; expected coordination, young, bilingual, matrix, congestion or separable"
            ),
        };
        match (game, self.negate) {
            (Game::Linear(g), true) => Ok(Game::Linear(g.negated())),
            (Game::Separable(_), true) => bail!("game.negate applies to linear games only"),
            (g, false) => Ok(g),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).context("invalid configuration")
    }

    /// Checks every parameter the job will use before any computation.
    pub fn validate(&self, job: Job) -> Result<Game> {
        let game = self.game.build()?;
        let n = game.num_actions();
        let s = &self.solver;
        ensure!(
            s.tol > 0.0 && s.tol.is_finite(),
            "solver.tol must be positive"
        );
        ensure!(s.max_iter > 0, "solver.max_iter must be positive");
        ensure!(
            s.cluster_radius > 0.0,
            "solver.cluster_radius must be positive"
        );
        let two_action = |what: &str| -> Result<()> {
            ensure!(n == 2, "{what} needs a two-action game, got {n} actions");
            Ok(())
        };
        match job {
            Job::ChoiceCurves => {
                let c = &self.choice_curves;
                two_action("choice-curves")?;
                check_ks(&c.ks, n, "choice_curves.ks")?;
                check_etas(&c.etas, "choice_curves.etas")?;
                ensure!(
                    c.resolution >= 2,
                    "choice_curves.resolution must be at least 2"
                );
            }
            Job::SleVsEta => {
                let c = &self.sle_vs_eta;
                check_ks(&c.ks, n, "sle_vs_eta.ks")?;
                if c.etas.is_empty() {
                    ensure!(c.eta_points >= 1, "sle_vs_eta.eta_points must be positive");
                    ensure!(
                        c.eta_max.is_finite() && c.eta_min > 0.0 && c.eta_min < c.eta_max,
                        "sle_vs_eta needs 0 < eta_min < eta_max"
                    );
                }
                let grid = c.grid();
                check_etas(&grid, "sle_vs_eta.etas")?;
                ensure!(
                    grid.windows(2).all(|w| w[1] < w[0]),
                    "sle_vs_eta.etas must be strictly decreasing"
                );
            }
            Job::PhasePortrait => {
                let c = &self.phase_portrait;
                ensure!(!c.dynamics.is_empty(), "phase_portrait.dynamics is empty");
                for d in &c.dynamics {
                    ensure!(
                        ["BRD", "SBRD", "LD", "SLD", "TLD"].contains(&d.as_str()),
                        "unknown dynamic `{d}`; expected BRD, SBRD, LD, SLD or TLD"
                    );
                }
                check_ks(&[c.k], n, "phase_portrait.k")?;
                check_etas(&[c.eta], "phase_portrait.eta")?;
                ensure!(
                    c.resolution >= 2,
                    "phase_portrait.resolution must be at least 2"
                );
                ensure!(
                    c.start_resolution > n,
                    "phase_portrait.start_resolution must exceed the action count"
                );
                ensure!(
                    c.t_max > 0.0 && c.t_max.is_finite(),
                    "phase_portrait.t_max must be positive"
                );
                ensure!(c.conv_tol > 0.0, "phase_portrait.conv_tol must be positive");
                ensure!(c.stride >= 1, "phase_portrait.stride must be positive");
                ensure!(
                    c.attractor_radius > 0.0,
                    "phase_portrait.attractor_radius must be positive"
                );
            }
            Job::PremiumProfiles => {
                let c = &self.premium_profiles;
                check_ks(&c.ks, n, "premium_profiles.ks")?;
                check_etas(&c.etas, "premium_profiles.etas")?;
                ensure!(
                    c.resolution > n,
                    "premium_profiles.resolution must exceed the action count"
                );
            }
            Job::ErrorAudit => {
                let c = &self.error_audit;
                check_ks(&c.ks, n, "error_audit.ks")?;
                check_etas(&c.etas, "error_audit.etas")?;
                ensure!(
                    c.ks.len() >= 3,
                    "error_audit.ks needs at least three sample sizes"
                );
                ensure!(
                    c.ks.windows(2).all(|w| w[1] > w[0]),
                    "error_audit.ks must be strictly increasing"
                );
                ensure!(
                    c.epsilon > 0.0 && c.epsilon * n as f64 <= 1.0,
                    "error_audit.epsilon must lie in (0, 1/n]"
                );
                ensure!(c.resolution >= n, "error_audit.resolution too small");
            }
            Job::InteriorShift => {
                let c = &self.interior_shift;
                two_action("interior-shift")?;
                ensure!(
                    game.as_linear().is_some(),
                    "interior-shift needs a linear game"
                );
                check_ks(&c.ks, n, "interior_shift.ks")?;
                check_etas(&c.etas, "interior_shift.etas")?;
                ensure!(
                    (0.0..0.5).contains(&c.margin),
                    "interior_shift.margin must lie in [0, 1/2)"
                );
            }
            Job::PotentialProfiles => {
                let c = &self.potential_profiles;
                two_action("potential-profiles")?;
                check_ks(&c.ks, n, "potential_profiles.ks")?;
                check_etas(&c.etas, "potential_profiles.etas")?;
                ensure!(
                    c.nodes >= 100,
                    "potential_profiles.nodes must be at least 100"
                );
            }
        }
        Ok(game)
    }
}

fn check_ks(ks: &[usize], n: usize, what: &str) -> Result<()> {
    ensure!(!ks.is_empty(), "{what} is empty");
    let caps = SampleCaps::default();
    for &k in ks {
        caps.check(n, k)
            .with_context(|| format!("{what}: k = {k}"))?;
    }
    Ok(())
}

fn check_etas(etas: &[f64], what: &str) -> Result<()> {
    ensure!(!etas.is_empty(), "{what} is empty");
    for &eta in etas {
        ensure!(
            eta > 0.0 && eta.is_finite(),
            "{what}: eta must be positive and finite, got {eta}"
        );
    }
    Ok(())
}
