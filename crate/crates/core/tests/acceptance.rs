//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slogit_core::approx::{
    error_scaling_audit, interior_shift_two_action, logit_gradient, logit_hessian, premiums,
    sigma_two_action, CorrectedRule, DEFAULT_SYMMETRY_MARGIN,
};
use slogit_core::choice::logit_choice;
use slogit_core::dynamics::{
    basin_report, integrate, Dynamic, IntegrationOptions, DEFAULT_ATTRACTOR_RADIUS,
};
use slogit_core::equilibrium::{
    cluster_states, multistart_seeds, multistart_sle, solve_fixed_point, solve_sle_fixed_point,
    solve_sle_k1, solve_sle_k2_two_action, FixedPointOptions,
};
use slogit_core::game::{bilingual_game, congestion_game, coordination_2x2, young_game};
use slogit_core::potential::{
    classify_g_shape, lyapunov_increments, potential_profile, GShape, DEFAULT_NODES,
};
use slogit_core::sampling::OutcomeTable;
use slogit_core::state::lattice;
use slogit_core::{LinearGame, Matrix, PopulationGame, PopulationState};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<T: std::fmt::Debug>(r: T) -> String {
    format!("{r:?}")
}

fn closed_form_k1(s: f64, t: f64, eta: f64) -> f64 {
    let a = (-s / eta).exp();
    (1.0 + a) / (1.0 + (-(s - t) / eta).exp() + 2.0 * a)
}

fn criterion_1() -> Check {
    let g = coordination_2x2(2.0, 1.0).map_err(e)?;
    let mut worst = 0.0f64;
    for eta in [0.5, 0.25, 0.1] {
        let cf = closed_form_k1(2.0, 1.0, eta);
        let eig = solve_sle_k1(&g, eta).map_err(e)?;
        let it = solve_sle_fixed_point(
            &g,
            1,
            eta,
            &PopulationState::barycenter(2),
            &FixedPointOptions::default(),
        )
        .map_err(e)?;
        ensure(
            it.converged,
            format!("generic solver did not converge at eta={eta}"),
        )?;
        let d = (eig.state[0] - cf)
            .abs()
            .max((it.state[0] - cf).abs())
            .max((eig.state[0] - it.state[0]).abs());
        ensure(d <= 1e-10, format!("eta={eta}: disagreement {d:e}"))?;
        worst = worst.max(d);
    }
    Ok(format!("max disagreement {worst:.1e}"))
}

/// Roots of `a y² + b y + c` in `[0, 1]`, allowing rounding of 1e-12 at the ends.
fn quadratic_roots_in_unit_interval(a: f64, b: f64, c: f64) -> usize {
    let inside = |y: f64| (-1e-12..=1.0 + 1e-12).contains(&y);
    if a.abs() < 1e-300 {
        return usize::from(inside(-c / b));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return 0;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let roots = [q / a, c / q];
    if disc == 0.0 {
        return usize::from(inside(roots[0]));
    }
    roots.iter().filter(|y| inside(**y)).count()
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let t = rng.random_range(0.2..2.0);
        let s = t + rng.random_range(0.1..2.0);
        let eta = rng.random_range(0.05..1.0);
        let g = coordination_2x2(s, t).map_err(e)?;
        let q = solve_sle_k2_two_action(&g, eta).map_err(e)?;
        let it = solve_sle_fixed_point(
            &g,
            2,
            eta,
            &PopulationState::barycenter(2),
            &FixedPointOptions::default(),
        )
        .map_err(e)?;
        let d = (q.state[0] - it.state[0]).abs();
        ensure(
            d <= 1e-12,
            format!("(s,t,eta)=({s},{t},{eta}): disagreement {d:e}"),
        )?;
        worst = worst.max(d);
        let p = |w: f64| logit_choice(&g, &[w, 1.0 - w], eta).unwrap();
        let (q0, q1, q2) = (p(0.0)[0], p(0.5)[0], p(1.0)[0]);
        // f(0) = P1(e2) > 0 and f(1) = -P2(e1) < 0, so the count is odd
        ensure(q0 > 0.0 && p(1.0)[1] > 0.0, "end signs")?;
        let count = quadratic_roots_in_unit_interval(q2 - 2.0 * q1 + q0, 2.0 * (q1 - q0) - 1.0, q0);
        ensure(
            count == 1,
            format!("(s,t,eta)=({s},{t},{eta}): {count} roots in (0,1)"),
        )?;
    }
    Ok(format!(
        "20 tuples, max disagreement {worst:.1e}, one root each"
    ))
}

fn criterion_3() -> Check {
    let opts = FixedPointOptions::default();
    let young = young_game();
    let seeds = multistart_seeds(3, 20);
    let rep = multistart_sle(&young, 1, 0.3, &seeds, &opts, 1e-8).map_err(e)?;
    ensure(
        rep.results.iter().all(|r| r.converged),
        "Young k=1: some seed did not converge",
    )?;
    ensure(
        rep.diameter < 1e-8,
        format!("Young k=1 diameter {:e}", rep.diameter),
    )?;
    let mut worst = rep.diameter;
    let coord = coordination_2x2(2.0, 1.0).map_err(e)?;
    let seeds2 = multistart_seeds(2, 20);
    for eta in [0.25, 0.1] {
        let rep = multistart_sle(&coord, 2, eta, &seeds2, &opts, 1e-8).map_err(e)?;
        ensure(
            rep.results.iter().all(|r| r.converged),
            format!("coordination k=2 eta={eta}: non-converged seed"),
        )?;
        ensure(
            rep.clusters.len() == 1 && rep.diameter < 1e-8,
            format!("coordination k=2 eta={eta}: diameter {:e}", rep.diameter),
        )?;
        worst = worst.max(rep.diameter);
    }
    Ok(format!(
        "seeds: Young {}, coordination {}; max diameter {worst:.1e}",
        seeds.len(),
        seeds2.len()
    ))
}

fn criterion_4() -> Check {
    let g = coordination_2x2(2.0, 1.0).map_err(e)?;
    let ladder = [0.5, 0.25, 0.1, 0.05, 0.02];
    let mut last = [0.0; 2];
    for k in [1usize, 2] {
        let xs: Vec<f64> = ladder
            .iter()
            .map(|&eta| {
                let r = if k == 1 {
                    solve_sle_k1(&g, eta)
                } else {
                    solve_sle_k2_two_action(&g, eta)
                };
                r.map(|r| r.state[0])
            })
            .collect::<Result<_, _>>()
            .map_err(e)?;
        ensure(
            xs.windows(2).all(|w| w[1] >= w[0]),
            format!("k={k}: not monotone {xs:?}"),
        )?;
        ensure(xs[4] > 0.999, format!("k={k}: x1={} at eta=0.02", xs[4]))?;
        last[k - 1] = xs[4];
    }
    Ok(format!(
        "x1 at eta=0.02: k=1 {:.6}, k=2 {:.6}",
        last[0], last[1]
    ))
}

fn single_attractor(game: &LinearGame, label: &str) -> Result<(f64, usize), String> {
    let d = Dynamic::SamplingLogit { k: 2, eta: 0.3 };
    let starts = lattice(3, 15, true);
    let rep = basin_report(
        d,
        game,
        &starts,
        &IntegrationOptions::for_dynamic(&d),
        DEFAULT_ATTRACTOR_RADIUS,
    )
    .map_err(e)?;
    ensure(
        rep.non_converged.is_empty(),
        format!(
            "{label}: {} starts did not converge",
            rep.non_converged.len()
        ),
    )?;
    ensure(
        rep.attractors.len() == 1,
        format!("{label}: {} attractors", rep.attractors.len()),
    )?;
    ensure(
        rep.max_spread * 2.0 < 1e-4,
        format!("{label}: spread {:e}", rep.max_spread),
    )?;
    ensure(
        rep.attractors[0].nearest_vertex() == 2,
        format!("{label}: attractor {:?}", rep.attractors[0]),
    )?;
    Ok((rep.max_spread, starts.len()))
}

fn criterion_5() -> Check {
    let (a, n) = single_attractor(&young_game(), "Young")?;
    let (b, _) = single_attractor(&bilingual_game(0.5, 0.05).map_err(e)?, "bilingual")?;
    Ok(format!(
        "{n} starts each, single attractor nearest e3, spreads {a:.1e} / {b:.1e}"
    ))
}

fn criterion_6() -> Check {
    let (k, eta) = (16usize, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let table = OutcomeTable::new(2, k).map_err(e)?;
    let games: Vec<(&str, Box<dyn PopulationGame>)> = vec![
        (
            "coordination",
            Box::new(coordination_2x2(2.0, 1.0).map_err(e)?),
        ),
        ("congestion", Box::new(congestion_game())),
    ];
    let mut worst = 0.0f64;
    for (name, g) in &games {
        for _ in 0..50 {
            let x1 = rng.random_range(0.01..0.99);
            let x = [x1, 1.0 - x1];
            let rep = premiums(g.as_ref(), &x, k, eta).map_err(e)?;
            let p = logit_choice(g.as_ref(), &x, eta).map_err(e)?;
            let grad = g.gradient(&x);
            let masses = table.masses(&x);
            for i in 0..2 {
                let r: Vec<f64> = (0..2)
                    .map(|j| grad[(i, j)] - (0..2).map(|l| p[l] * grad[(l, j)]).sum::<f64>())
                    .collect();
                let hess = g.hessian(i, &x);
                let (mut m1, mut m2, mut quad) = (0.0, 0.0, 0.0);
                for (idx, m) in masses.iter().enumerate() {
                    let w = table.empirical_state(idx);
                    let dw = [w[0] - x[0], w[1] - x[1]];
                    let lin = r[0] * dw[0] + r[1] * dw[1];
                    m1 += m * lin;
                    m2 += m * lin * lin;
                    quad += m * hess.quadratic_form(&dw);
                }
                let var = m2 - m1 * m1;
                let dv = (rep.variance[i] - var / (2.0 * eta * eta)).abs();
                let dq = (rep.curvature[i] - quad / (2.0 * eta)).abs();
                ensure(
                    dv <= 1e-10 && dq <= 1e-10,
                    format!("{name} x1={x1}: |dv|={dv:e} |dq|={dq:e}"),
                )?;
                worst = worst.max(dv).max(dq);
            }
        }
    }
    Ok(format!("100 states, max deviation {worst:.1e}"))
}

fn criterion_7() -> Check {
    let g = coordination_2x2(2.0, 1.0).map_err(e)?;
    let ladder = [16, 32, 64, 128, 256];
    let a = error_scaling_audit(&g, 0.5, &ladder, 0.1, 60).map_err(e)?;
    ensure(
        a.is_weakly_decreasing(),
        format!("sup errors not decreasing: {:?}", a.sup_errors),
    )?;
    ensure(a.slope <= -1.7, format!("slope {:.3}", a.slope))?;
    let b = error_scaling_audit(&g, 0.15, &ladder, 0.1, 60).map_err(e)?;
    for (i, k) in ladder.iter().enumerate() {
        ensure(
            b.sup_errors[i] > a.sup_errors[i],
            format!(
                "k={k}: eta=0.15 error {:e} <= eta=0.5 error {:e}",
                b.sup_errors[i], a.sup_errors[i]
            ),
        )?;
    }
    Ok(format!(
        "slope {:.3}, sup errors {:.2e} .. {:.2e}",
        a.slope, a.sup_errors[0], a.sup_errors[4]
    ))
}

fn criterion_8() -> Check {
    let g = coordination_2x2(2.0, 1.0).map_err(e)?;
    let (k, eta) = (10usize, 0.25);
    let mut checked = 0;
    for j in 1..=1000 {
        let x1 = j as f64 / 1001.0;
        let x = [x1, 1.0 - x1];
        let rep = premiums(&g, &x, k, eta).map_err(e)?;
        let p = &rep.choice;
        let sa = sigma_two_action(&g, x1).map_err(e)?;
        let s = 2.0 * k as f64 * eta * eta;
        ensure(
            (rep.variance[0] * s - p[1] * p[1] * sa).abs() <= 1e-12 * (1.0 + sa),
            format!("x1={x1}: sigma_1 != P2^2 sigma_A"),
        )?;
        if (p[0] - 0.5).abs() > 1e-10 {
            let want = (0.5 - p[0]).signum();
            ensure(
                rep.variance_centered[0].signum() == want,
                format!("x1={x1}: sign mismatch"),
            )?;
            checked += 1;
        }
    }
    let nash = premiums(&g, &[1.0 / 3.0, 2.0 / 3.0], k, eta).map_err(e)?;
    ensure(
        nash.variance_centered.iter().all(|v| v.abs() <= 1e-12),
        "v-hat nonzero at x1 = 1/3",
    )?;
    // away from x1 = 1/3 the best response is unique and sigma-hat tends to
    // 0 on it and to sigma_A off it
    let mut final_gap = 0.0f64;
    for x1 in [0.1, 0.2, 0.5, 0.8] {
        let sa = sigma_two_action(&g, x1).map_err(e)?;
        let br = if x1 > 1.0 / 3.0 { 0 } else { 1 };
        let mut prev = [f64::INFINITY; 2];
        for eta in [0.2, 0.1, 0.05, 0.02] {
            let rep = premiums(&g, &[x1, 1.0 - x1], k, eta).map_err(e)?;
            let sig = rep.sigma_centered();
            for i in 0..2 {
                let limit = if i == br { 0.0 } else { sa };
                let gap = (sig[i] - limit).abs();
                ensure(
                    gap <= prev[i] + 1e-15,
                    format!("x1={x1} eta={eta}: gap grew"),
                )?;
                prev[i] = gap;
            }
        }
        ensure(
            prev.iter().all(|g| *g < 5e-2),
            format!("x1={x1}: gaps {prev:?} at eta=0.02"),
        )?;
        final_gap = final_gap.max(prev[0]).max(prev[1]);
    }
    Ok(format!(
        "{checked} signs checked, limit gap at eta=0.02 {final_gap:.1e}"
    ))
}

fn criterion_9() -> Check {
    let g = coordination_2x2(2.0, 1.0).map_err(e)?;
    let (k, eta) = (400usize, 0.05);
    let opts = FixedPointOptions {
        newton_first: true,
        ..FixedPointOptions::default()
    };
    let mut gaps = Vec::new();
    for (game, below) in [(g.clone(), true), (g.negated(), false)] {
        let s = interior_shift_two_action(&game, k, eta, DEFAULT_SYMMETRY_MARGIN).map_err(e)?;
        ensure(
            s.predicts_below == below && (s.predicted < s.nash) == below,
            "analytic sign prediction",
        )?;
        let map = CorrectedRule::new(&game, k, eta).map_err(e)?;
        let fp = solve_fixed_point(
            &map,
            &PopulationState::two_action(s.predicted).map_err(e)?,
            &opts,
        )
        .map_err(e)?;
        ensure(fp.converged, "corrected fixed point did not converge")?;
        ensure(
            (fp.state[0] < s.nash) == below,
            "numeric fixed point on the wrong side of x*",
        )?;
        let gap = (fp.state[0] - s.predicted).abs();
        if below {
            ensure(
                gap < 5e-3,
                format!("beta={}: |x~ - fixed point| = {gap:e}", s.beta),
            )?;
        }
        gaps.push(gap);
    }
    Ok(format!(
        "gap {:.1e}; signs hold for both games (beta<0 gap {:.1e})",
        gaps[0], gaps[1]
    ))
}

fn corrected_fixed_points(game: &LinearGame, k: usize, eta: f64) -> Result<Vec<f64>, String> {
    let map = CorrectedRule::new(game, k, eta).map_err(e)?;
    let opts = FixedPointOptions {
        newton_first: true,
        ..FixedPointOptions::default()
    };
    let mut found = Vec::new();
    for j in 1..100 {
        let s = PopulationState::two_action(j as f64 / 100.0).map_err(e)?;
        let fp = solve_fixed_point(&map, &s, &opts).map_err(e)?;
        if fp.converged {
            found.push(fp.state);
        }
    }
    Ok(cluster_states(&found, 1e-9)
        .into_iter()
        .map(|c| c.representative[0])
        .collect())
}

fn criterion_10() -> Check {
    let (k, eta) = (40usize, 0.2);
    let g = coordination_2x2(2.0, 1.0).map_err(e)?;
    let mut summary = Vec::new();
    for (game, concave) in [(g.clone(), true), (g.negated(), false)] {
        let prof = potential_profile(&game, k, eta, DEFAULT_NODES).map_err(e)?;
        let sp = prof.stationary_points().to_vec();
        let fps = corrected_fixed_points(&game, k, eta)?;
        let near = |a: &[f64], b: f64| a.iter().any(|v| (v - b).abs() <= 1e-8);
        ensure(
            sp.iter().all(|s| near(&fps, *s)),
            format!("stationary {sp:?} vs fixed {fps:?}"),
        )?;
        ensure(
            fps.iter().all(|f| near(&sp, *f)),
            format!("fixed {fps:?} vs stationary {sp:?}"),
        )?;
        let shape = classify_g_shape(&game, k, eta, DEFAULT_NODES).map_err(e)?;
        match (concave, shape.shape) {
            (true, GShape::QuasiconcaveMax { at }) | (false, GShape::QuasiconvexMin { at }) => {
                ensure((at - 1.0 / 3.0).abs() < 1e-12, "extremum location")?;
                ensure(
                    (shape.extremum - 1.0 / 3.0).abs() <= 1.0 / (DEFAULT_NODES - 1) as f64,
                    "grid extremum",
                )?;
            }
            (_, other) => return Err(format!("unexpected shape {other:?}")),
        }
        let d = Dynamic::CorrectedLogit { k, eta };
        let mut min_inc = f64::INFINITY;
        for x1 in [0.05, 0.3, 0.36, 0.6, 0.95] {
            let tr = integrate(
                d,
                &game,
                &PopulationState::two_action(x1).map_err(e)?,
                &IntegrationOptions::for_dynamic(&d),
            )
            .map_err(e)?;
            let inc = lyapunov_increments(&game, k, eta, &tr.states).map_err(e)?;
            min_inc = inc.iter().copied().fold(min_inc, f64::min);
        }
        ensure(min_inc >= -1e-9, format!("Lyapunov increment {min_inc:e}"))?;
        summary.push(format!("{} points, {}", sp.len(), shape.shape.as_str()));
    }
    Ok(summary.join("; "))
}

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    a.max_abs_diff(b) / b.max_abs().max(1.0)
}

fn criterion_11() -> Check {
    let games: Vec<(&str, Box<dyn PopulationGame>)> = vec![
        (
            "coordination",
            Box::new(coordination_2x2(2.0, 1.0).map_err(e)?),
        ),
        ("young", Box::new(young_game())),
        ("bilingual", Box::new(bilingual_game(0.5, 0.05).map_err(e)?)),
        ("congestion", Box::new(congestion_game())),
    ];
    let eta = 0.4;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut wg, mut wh) = (0.0f64, 0.0f64);
    for (name, g) in &games {
        let n = g.num_actions();
        for _ in 0..100 {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let x: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let p = |y: &[f64]| logit_choice(g.as_ref(), y, eta).unwrap().into_vec();
            let grad = logit_gradient(g.as_ref(), &x, eta).map_err(e)?;
            let mut fd = Matrix::zeros(n, n);
            let h = 1e-5;
            for j in 0..n {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[j] += h;
                dn[j] -= h;
                let (pu, pd) = (p(&up), p(&dn));
                for i in 0..n {
                    fd.row_mut(i)[j] = (pu[i] - pd[i]) / (2.0 * h);
                }
            }
            let eg = rel_err(&grad, &fd);
            ensure(eg <= 1e-6, format!("{name}: gradient error {eg:e}"))?;
            wg = wg.max(eg);
            let h = 1e-4;
            for i in 0..n {
                let hess = logit_hessian(g.as_ref(), &x, eta, i).map_err(e)?;
                let mut fd = Matrix::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        let at = |da: f64, db: f64| {
                            let mut y = x.clone();
                            y[a] += da;
                            y[b] += db;
                            p(&y)[i]
                        };
                        fd.row_mut(a)[b] =
                            (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
                    }
                }
                let eh = rel_err(&hess, &fd);
                ensure(eh <= 1e-4, format!("{name}: Hessian error {eh:e}"))?;
                wh = wh.max(eh);
            }
        }
    }
    Ok(format!(
        "400 points, max relative error gradient {wg:.1e}, Hessian {wh:.1e}"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check, Duration); 11] = [
        ("1 k=1 closed form", criterion_1, Duration::from_secs(1)),
        ("2 k=2 quadratic root", criterion_2, Duration::from_secs(1)),
        (
            "3 uniqueness certificates",
            criterion_3,
            Duration::from_secs(10),
        ),
        (
            "4 risk-dominant selection",
            criterion_4,
            Duration::from_secs(5),
        ),
        (
            "5 Young and bilingual selection",
            criterion_5,
            Duration::from_secs(15 * 60),
        ),
        ("6 moment identities", criterion_6, Duration::from_secs(30)),
        ("7 error scaling", criterion_7, Duration::from_secs(120)),
        (
            "8 variance premium signs",
            criterion_8,
            Duration::from_secs(5),
        ),
        ("9 interior shift", criterion_9, Duration::from_secs(5)),
        (
            "10 perturbed potential",
            criterion_10,
            Duration::from_secs(60),
        ),
        (
            "11 derivative oracles",
            criterion_11,
            Duration::from_secs(30),
        ),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > budget => {
                Err(format!("{msg}; took {took:.2?} over budget {budget:?}"))
            }
            other => other,
        };
        match outcome {
            Ok(msg) => println!("[PASS] {name}: {msg} ({took:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {name}: {msg} ({took:.2?})");
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
