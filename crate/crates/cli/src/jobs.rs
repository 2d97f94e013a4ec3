//! One function per job; each returns the tables it emits.

use anyhow::{anyhow, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use slogit_core::approx::{
    error_scaling_audit, interior_shift_two_action, premiums, CorrectedRule,
};
use slogit_core::choice::{
    logit_choice, sampling_best_response, sampling_logit, SamplingLogit, TieRule,
};
use slogit_core::dynamics::{
    classify_terminals, integrate, max_tangency_defect, vector_field, Dynamic, IntegrationOptions,
};
use slogit_core::equilibrium::{
    multistart_seeds, multistart_sle, solve_fixed_point, solve_logit_continuation, solve_sle_k1,
    solve_sle_k2_two_action, ContinuationOptions, FixedPointOptions,
};
use slogit_core::potential::{classify_g_shape, potential_profile, GShape};
use slogit_core::state::lattice;
use slogit_core::{PopulationGame, PopulationState};

use crate::config::{Config, Game, Job};
use crate::table::{num, nums, Table};

pub fn run(job: Job, cfg: &Config, game: &Game, seed: u64) -> Result<Vec<Table>> {
    let mut tables = match job {
        Job::ChoiceCurves => choice_curves(cfg, game)?,
        Job::SleVsEta => sle_vs_eta(cfg, game, seed)?,
        Job::PhasePortrait => phase_portrait(cfg, game)?,
        Job::PremiumProfiles => premium_profiles(cfg, game)?,
        Job::ErrorAudit => error_audit(cfg, game)?,
        Job::InteriorShift => interior_shift(cfg, game)?,
        Job::PotentialProfiles => potential_profiles(cfg, game)?,
    };
    let label = game_label(cfg);
    for t in &mut tables {
        t.meta.insert(0, ("game".into(), label.clone()));
    }
    Ok(tables)
}

fn game_label(cfg: &Config) -> String {
    let g = &cfg.game;
    let base = match g.kind.as_str() {
        "coordination" => format!("coordination(s={}, t={})", g.s, g.t),
        "bilingual" => format!("bilingual(g={}, c={})", g.g, g.c),
        "matrix" => format!("matrix{:?}", g.rows),
        "separable" => format!("separable{:?}", g.polynomials),
        other => other.to_string(),
    };
    if g.negate {
        format!("negated {base}")
    } else {
        base
    }
}

fn fp_options(cfg: &Config) -> FixedPointOptions {
    FixedPointOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        ..FixedPointOptions::default()
    }
}

fn two_action_grid(resolution: usize) -> Vec<f64> {
    (0..=resolution)
        .map(|j| j as f64 / resolution as f64)
        .collect()
}

fn choice_curves(cfg: &Config, game: &Game) -> Result<Vec<Table>> {
    let c = &cfg.choice_curves;
    let xs = two_action_grid(c.resolution);
    let mut specs: Vec<(&str, Option<usize>, Option<f64>)> = Vec::new();
    for &eta in &c.etas {
        specs.push(("logit", None, Some(eta)));
        for &k in &c.ks {
            specs.push(("sampling_logit", Some(k), Some(eta)));
        }
    }
    if c.best_response {
        for &k in &c.ks {
            specs.push(("sampling_best_response", Some(k), None));
        }
    }
    let blocks: Vec<Vec<Vec<String>>> = specs
        .par_iter()
        .map(|&(rule, k, eta)| {
            xs.iter()
                .map(|&x1| {
                    let x = [x1, 1.0 - x1];
                    let p = match (rule, k, eta) {
                        ("logit", _, Some(eta)) => logit_choice(game, &x, eta)?,
                        ("sampling_logit", Some(k), Some(eta)) => sampling_logit(game, &x, k, eta)?,
                        (_, Some(k), _) => sampling_best_response(game, &x, k, TieRule::Uniform)?,
                        _ => unreachable!("rule specs are built above"),
                    };
                    Ok(vec![
                        rule.to_string(),
                        k.map(|k| k.to_string()).unwrap_or_default(),
                        eta.map(num).unwrap_or_default(),
                        num(x1),
                        num(p[0]),
                    ])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("choice_curves", &["rule", "k", "eta", "x1", "p1"]);
    t.meta("p1", "probability of action 1 at the state (x1, 1 - x1)");
    t.meta("best_response_ties", "uniform over the best response set");
    t.rows = blocks.into_iter().flatten().collect();
    Ok(vec![t])
}

fn seeds(cfg: &Config, n: usize, seed: u64) -> Vec<PopulationState> {
    let mut out = multistart_seeds(n, cfg.solver.seeds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.solver.random_seeds {
        // uniform on the simplex via normalized exponentials
        let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let s: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| (v / s).max(1e-6)).collect();
        out.push(PopulationState::project(w).expect("positive weights"));
    }
    out
}

fn sle_vs_eta(cfg: &Config, game: &Game, seed: u64) -> Result<Vec<Table>> {
    let c = &cfg.sle_vs_eta;
    let n = game.num_actions();
    let grid = c.grid();
    let starts = seeds(cfg, n, seed);
    let opts = fp_options(cfg);
    let tuples: Vec<(usize, f64)> =
        c.ks.iter()
            .flat_map(|&k| grid.iter().map(move |&e| (k, e)))
            .collect();
    let blocks: Vec<Vec<Vec<String>>> = tuples
        .par_iter()
        .map(|&(k, eta)| -> Result<Vec<Vec<String>>> {
            let row = |branch: usize,
                       solver: &str,
                       converged: bool,
                       residual: f64,
                       x: &PopulationState,
                       found: usize| {
                let mut r = vec![
                    k.to_string(),
                    num(eta),
                    branch.to_string(),
                    solver.to_string(),
                    converged.to_string(),
                    num(residual),
                    found.to_string(),
                ];
                r.extend(nums(x.as_slice()));
                r
            };
            if k == 1 || (k == 2 && n == 2) {
                let r = if k == 1 {
                    solve_sle_k1(game, eta)?
                } else {
                    solve_sle_k2_two_action(game, eta)?
                };
                return Ok(vec![row(
                    0,
                    r.solver.as_str(),
                    r.converged,
                    r.residual,
                    &r.state,
                    1,
                )]);
            }
            let rep = multistart_sle(game, k, eta, &starts, &opts, cfg.solver.cluster_radius)?;
            let found = rep.converged().count();
            Ok(rep
                .clusters
                .iter()
                .enumerate()
                .map(|(b, cl)| {
                    let best = cl
                        .members
                        .iter()
                        .map(|&m| &rep.results[m])
                        .min_by(|a, b| a.residual.total_cmp(&b.residual))
                        .expect("clusters are nonempty");
                    row(b, "multistart", true, best.residual, &best.state, found)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut cols: Vec<String> = [
        "k",
        "eta",
        "branch",
        "solver",
        "converged",
        "residual",
        "seeds_converged",
    ]
    .map(String::from)
    .to_vec();
    cols.extend(Table::indexed("x", n));
    let mut t = Table::with_columns("sle_vs_eta", cols);
    t.meta(
        "branch",
        "index of the equilibrium cluster at this eta, in lexicographic order",
    );
    t.meta("seeds", starts.len());
    t.rows = blocks.into_iter().flatten().collect();
    let mut tables = vec![t];
    if c.logit {
        let curves = solve_logit_continuation(
            game,
            &grid,
            &starts,
            &ContinuationOptions {
                tol: cfg.solver.tol.max(1e-12),
                ..ContinuationOptions::default()
            },
        )?;
        let mut cols: Vec<String> = ["branch", "eta", "residual", "truncated", "merged_into"]
            .map(String::from)
            .to_vec();
        cols.extend(Table::indexed("x", n));
        let mut t = Table::with_columns("logit_branches", cols);
        t.meta("rule", "logit (k = infinity)");
        for cv in &curves {
            for ((eta, s), res) in cv.etas.iter().zip(&cv.states).zip(&cv.residuals) {
                let mut r = vec![
                    cv.branch.to_string(),
                    num(*eta),
                    num(*res),
                    cv.truncated.to_string(),
                    cv.merged_into.map(|m| m.to_string()).unwrap_or_default(),
                ];
                r.extend(nums(s.as_slice()));
                t.push(r);
            }
        }
        tables.push(t);
    }
    Ok(tables)
}

fn dynamic_from_name(name: &str, k: usize, eta: f64) -> Result<Dynamic> {
    Ok(match name {
        "BRD" => Dynamic::BestResponse,
        "SBRD" => Dynamic::SamplingBestResponse { k },
        "LD" => Dynamic::Logit { eta },
        "SLD" => Dynamic::SamplingLogit { k, eta },
        "TLD" => Dynamic::CorrectedLogit { k, eta },
        other => return Err(anyhow!("unknown dynamic `{other}`")),
    })
}

fn phase_portrait(cfg: &Config, game: &Game) -> Result<Vec<Table>> {
    let c = &cfg.phase_portrait;
    let n = game.num_actions();
    let starts = lattice(n, c.start_resolution, true);
    let mut tables = Vec::new();
    for name in &c.dynamics {
        let d = dynamic_from_name(name, c.k, c.eta)?;
        let params = match d {
            Dynamic::BestResponse => String::new(),
            Dynamic::SamplingBestResponse { k } => format!("k={k}"),
            Dynamic::Logit { eta } => format!("eta={eta}"),
            Dynamic::SamplingLogit { k, eta } | Dynamic::CorrectedLogit { k, eta } => {
                format!("k={k}, eta={eta}")
            }
        };
        let integrator = if d.is_smooth() { "rk4" } else { "euler" };

        let field = vector_field(d, game, c.resolution)?;
        let mut cols = Table::indexed("x", n);
        cols.extend(Table::indexed("v", n));
        cols.push("speed".into());
        let mut t = Table::with_columns(format!("field_{name}"), cols);
        t.meta("dynamic", name)
            .meta("parameters", &params)
            .meta("resolution", c.resolution);
        t.meta("max_tangency_defect", num(max_tangency_defect(&field)));
        for ((p, v), s) in field
            .points
            .iter()
            .zip(&field.velocities)
            .zip(&field.speeds)
        {
            let mut r: Vec<String> = nums(p.as_slice()).collect();
            r.extend(nums(v));
            r.push(num(*s));
            t.push(r);
        }
        tables.push(t);

        let opts = IntegrationOptions {
            dt: d.default_dt(),
            t_max: c.t_max,
            conv_tol: c.conv_tol,
            stride: c.stride,
        };
        let trajectories = starts
            .par_iter()
            .map(|s| integrate(d, game, s, &opts))
            .collect::<Result<Vec<_>, _>>()?;

        let mut cols: Vec<String> = vec!["start".into(), "t".into()];
        cols.extend(Table::indexed("x", n));
        let mut t = Table::with_columns(format!("trajectories_{name}"), cols);
        t.meta("dynamic", name)
            .meta("parameters", &params)
            .meta("integrator", integrator);
        t.meta("dt", num(opts.dt)).meta("stride", c.stride);
        for (i, tr) in trajectories.iter().enumerate() {
            for (time, s) in tr.times.iter().zip(&tr.states) {
                let mut r = vec![i.to_string(), num(*time)];
                r.extend(nums(s.as_slice()));
                t.push(r);
            }
        }
        tables.push(t);

        let terminals: Vec<Option<PopulationState>> = trajectories
            .iter()
            .map(|tr| tr.converged().then(|| tr.last().clone()))
            .collect();
        let rep = classify_terminals(starts.clone(), &terminals, c.attractor_radius);
        let mut cols: Vec<String> = vec!["start".into()];
        cols.extend(Table::indexed("x0_", n));
        cols.extend(["attractor", "termination", "t_end"].map(String::from));
        cols.extend(Table::indexed("x", n));
        let mut t = Table::with_columns(format!("basins_{name}"), cols);
        t.meta("dynamic", name).meta("parameters", &params);
        t.meta("attractor_radius", num(c.attractor_radius))
            .meta("max_spread", num(rep.max_spread));
        for (i, tr) in trajectories.iter().enumerate() {
            let mut r = vec![i.to_string()];
            r.extend(nums(starts[i].as_slice()));
            r.push(rep.assignment[i].map(|a| a.to_string()).unwrap_or_default());
            r.push(tr.termination.as_str().to_string());
            r.push(num(*tr
                .times
                .last()
                .expect("trajectories keep their endpoint")));
            r.extend(nums(tr.last().as_slice()));
            t.push(r);
        }
        tables.push(t);

        let mut cols: Vec<String> = vec![
            "attractor".into(),
            "basin_fraction".into(),
            "nearest_vertex".into(),
        ];
        cols.extend(Table::indexed("x", n));
        let mut t = Table::with_columns(format!("attractors_{name}"), cols);
        t.meta("dynamic", name).meta("parameters", &params);
        t.meta("non_converged", rep.non_converged.len());
        for (a, (s, f)) in rep.attractors.iter().zip(&rep.fractions).enumerate() {
            let mut r = vec![a.to_string(), num(*f), (s.nearest_vertex() + 1).to_string()];
            r.extend(nums(s.as_slice()));
            t.push(r);
        }
        tables.push(t);
    }
    Ok(tables)
}

fn premium_profiles(cfg: &Config, game: &Game) -> Result<Vec<Table>> {
    let c = &cfg.premium_profiles;
    let n = game.num_actions();
    let points: Vec<Vec<f64>> = if n == 2 {
        (1..c.resolution)
            .map(|j| {
                let x1 = j as f64 / c.resolution as f64;
                vec![x1, 1.0 - x1]
            })
            .collect()
    } else {
        lattice(n, c.resolution, true)
            .into_iter()
            .map(PopulationState::into_vec)
            .collect()
    };
    let tuples: Vec<(usize, f64)> =
        c.ks.iter()
            .flat_map(|&k| c.etas.iter().map(move |&e| (k, e)))
            .collect();
    let blocks: Vec<Vec<Vec<String>>> = tuples
        .par_iter()
        .map(|&(k, eta)| {
            points
                .iter()
                .map(|x| {
                    let rep = premiums(game, x, k, eta)?;
                    let mut r = vec![k.to_string(), num(eta)];
                    r.extend(nums(x));
                    r.extend(nums(&rep.choice));
                    r.extend(nums(&rep.variance));
                    r.extend(nums(&rep.curvature));
                    r.extend(nums(&rep.variance_centered));
                    r.extend(nums(&rep.curvature_centered));
                    r.extend(nums(&rep.sigma_centered()));
                    r.extend(nums(&rep.multipliers));
                    r.push(rep.valid.to_string());
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut cols: Vec<String> = vec!["k".into(), "eta".into()];
    for p in ["x", "p", "v", "q", "vhat", "qhat", "sigmahat", "multiplier"] {
        cols.extend(Table::indexed(p, n));
    }
    cols.push("valid".into());
    let mut t = Table::with_columns("premium_profiles", cols);
    t.meta("v", "variance premium (1/(2 k eta^2)) R' Sigma R");
    t.meta("q", "curvature premium (1/(2 k eta)) <F'', Sigma>");
    t.meta("sigmahat", "centered variance premium times 2 k eta^2");
    t.meta("multiplier", "1 + vhat + qhat; valid when all are positive");
    t.rows = blocks.into_iter().flatten().collect();
    Ok(vec![t])
}

fn error_audit(cfg: &Config, game: &Game) -> Result<Vec<Table>> {
    let c = &cfg.error_audit;
    let reports = c
        .etas
        .par_iter()
        .map(|&eta| error_scaling_audit(game, eta, &c.ks, c.epsilon, c.resolution))
        .collect::<Result<Vec<_>, _>>()?;
    let mut errors = Table::new("error_audit", &["eta", "k", "sup_error"]);
    errors
        .meta("epsilon", num(c.epsilon))
        .meta("resolution", c.resolution);
    errors.meta("sup_error", "max over the interior grid of the sup-norm gap between sampling logit and its corrected approximation");
    let mut fit = Table::new(
        "error_fit",
        &[
            "eta",
            "slope",
            "regime",
            "weakly_decreasing",
            "invalid_points",
            "grid_points",
        ],
    );
    fit.meta(
        "slope",
        "least-squares log-log slope over the upper half of the k ladder",
    );
    for r in &reports {
        for (k, e) in r.ks.iter().zip(&r.sup_errors) {
            errors.push(vec![num(r.eta), k.to_string(), num(*e)]);
        }
        fit.push(vec![
            num(r.eta),
            num(r.slope),
            format!("{:?}", r.regime).to_lowercase(),
            r.is_weakly_decreasing().to_string(),
            r.invalid_points.to_string(),
            r.grid_points.to_string(),
        ]);
    }
    Ok(vec![errors, fit])
}

fn interior_shift(cfg: &Config, game: &Game) -> Result<Vec<Table>> {
    let c = &cfg.interior_shift;
    let lin = game.as_linear().expect("validated as linear");
    let tuples: Vec<(usize, f64)> =
        c.ks.iter()
            .flat_map(|&k| c.etas.iter().map(move |&e| (k, e)))
            .collect();
    let opts = FixedPointOptions {
        newton_first: true,
        ..fp_options(cfg)
    };
    let rows = tuples
        .par_iter()
        .map(|&(k, eta)| -> Result<Vec<String>> {
            let s = interior_shift_two_action(lin, k, eta, c.margin)?;
            let start = PopulationState::two_action(s.predicted.clamp(1e-9, 1.0 - 1e-9))?;
            let corrected = solve_fixed_point(&CorrectedRule::new(lin, k, eta)?, &start, &opts)?;
            let sle = solve_fixed_point(&SamplingLogit::new(lin, k, eta)?, &start, &opts)?;
            let fp = corrected.state[0];
            Ok(vec![
                k.to_string(),
                num(eta),
                num(s.nash),
                num(s.beta),
                num(s.v_star),
                num(s.logit_shift),
                num(s.sampling_shift),
                num(s.predicted),
                num(fp),
                corrected.converged.to_string(),
                num((fp - s.predicted).abs()),
                num(sle.state[0]),
                sle.converged.to_string(),
                s.predicts_below.to_string(),
                (fp < s.nash).to_string(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        "interior_shift",
        &[
            "k",
            "eta",
            "nash",
            "beta",
            "v_star",
            "logit_shift",
            "sampling_shift",
            "predicted",
            "corrected_fixed_point",
            "corrected_converged",
            "gap",
            "sle",
            "sle_converged",
            "predicts_below",
            "fixed_point_below",
        ],
    );
    t.meta("margin", num(c.margin));
    t.meta(
        "predicted",
        "closed-form interior equilibrium share of action 1",
    );
    t.rows = rows;
    Ok(vec![t])
}

fn potential_profiles(cfg: &Config, game: &Game) -> Result<Vec<Table>> {
    let c = &cfg.potential_profiles;
    let tuples: Vec<(usize, f64)> =
        c.ks.iter()
            .flat_map(|&k| c.etas.iter().map(move |&e| (k, e)))
            .collect();
    let profiles = tuples
        .par_iter()
        .map(|&(k, eta)| potential_profile(game, k, eta, c.nodes))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(
        "potential_profiles",
        &["k", "eta", "x1", "f", "h", "g", "f_eta", "f_k_eta"],
    );
    t.meta("nodes", c.nodes);
    let mut sp = Table::new("stationary_points", &["k", "eta", "function", "x1"]);
    for p in &profiles {
        for i in 0..p.x1.len() {
            t.push(vec![
                p.k.to_string(),
                num(p.eta),
                num(p.x1[i]),
                num(p.f[i]),
                num(p.h[i]),
                num(p.g[i]),
                num(p.f_eta[i]),
                num(p.f_k_eta[i]),
            ]);
        }
        for (name, pts) in [
            ("f", &p.stationary_f),
            ("f_eta", &p.stationary_f_eta),
            ("f_k_eta", &p.stationary_f_k_eta),
        ] {
            for x in pts {
                sp.push(vec![p.k.to_string(), num(p.eta), name.into(), num(*x)]);
            }
        }
    }
    let mut tables = vec![t, sp];
    if let Some(lin) = game.as_linear() {
        let mut shapes = Table::new("g_shape", &["k", "eta", "shape", "at", "grid_extremum"]);
        for &(k, eta) in &tuples {
            let r = classify_g_shape(lin, k, eta, c.nodes)?;
            let at = match r.shape {
                GShape::QuasiconcaveMax { at } | GShape::QuasiconvexMin { at } => num(at),
                GShape::Zero => String::new(),
            };
            shapes.push(vec![
                k.to_string(),
                num(eta),
                r.shape.as_str().into(),
                at,
                num(r.extremum),
            ]);
        }
        tables.push(shapes);
    }
    Ok(tables)
}
