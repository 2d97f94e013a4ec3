//! Population games and the catalog of example games.
//!
//! Payoffs, gradients and Hessians take raw coordinate slices rather than
//! [`PopulationState`](crate::PopulationState) because every game here is
//! defined by a formula on all of `R^n`; finite-difference checks and the
//! delta-method expansion evaluate it slightly off the simplex. Derivatives are
//! the plain derivatives of that formula, with no projection onto the tangent
//! space of the simplex.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;

/// Step for the default central-difference gradient.
const FD_GRADIENT_STEP: f64 = 1e-6;
/// Step for the default second-difference Hessian.
const FD_HESSIAN_STEP: f64 = 1e-4;

/// A single-population game with `n` actions and payoff function `F: R^n → R^n`.
pub trait PopulationGame {
    fn num_actions(&self) -> usize;

    /// Writes `F(x)` into `out`.
    fn payoff_into(&self, x: &[f64], out: &mut [f64]);

    fn payoff(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions()];
        self.payoff_into(x, &mut out);
        out
    }

    /// Jacobian of `F`: row `i` is the gradient `F_i'(x)`.
    ///
    /// The default uses central differences; analytic games override it.
    fn gradient(&self, x: &[f64]) -> Matrix {
        let n = self.num_actions();
        let mut jac = Matrix::zeros(n, n);
        let mut xp = x.to_vec();
        let mut up = vec![0.0; n];
        let mut down = vec![0.0; n];
        for j in 0..n {
            let h = FD_GRADIENT_STEP;
            xp[j] = x[j] + h;
            self.payoff_into(&xp, &mut up);
            xp[j] = x[j] - h;
            self.payoff_into(&xp, &mut down);
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// Hessian `F_i''(x)` of payoff component `action`.
    ///
    /// The default uses second central differences; analytic games override it.
    fn hessian(&self, action: usize, x: &[f64]) -> Matrix {
        let n = self.num_actions();
        let h = FD_HESSIAN_STEP;
        let mut out = Matrix::zeros(n, n);
        let mut buf = vec![0.0; n];
        let mut xp = x.to_vec();
        let mut eval = |xp: &[f64]| {
            self.payoff_into(xp, &mut buf);
            buf[action]
        };
        let f0 = eval(x);
        for a in 0..n {
            for b in a..n {
                let v = if a == b {
                    xp[a] = x[a] + h;
                    let fp = eval(&xp);
                    xp[a] = x[a] - h;
                    let fm = eval(&xp);
                    xp[a] = x[a];
                    (fp - 2.0 * f0 + fm) / (h * h)
                } else {
                    let mut corner = |sa: f64, sb: f64| {
                        xp[a] = x[a] + sa * h;
                        xp[b] = x[b] + sb * h;
                        let v = eval(&xp);
                        xp[a] = x[a];
                        xp[b] = x[b];
                        v
                    };
                    (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                        / (4.0 * h * h)
                };
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        out
    }
}

impl<G: PopulationGame + ?Sized> PopulationGame for &G {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn payoff_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).payoff_into(x, out)
    }
    fn gradient(&self, x: &[f64]) -> Matrix {
        (**self).gradient(x)
    }
    fn hessian(&self, action: usize, x: &[f64]) -> Matrix {
        (**self).hessian(action, x)
    }
}

impl<G: PopulationGame + ?Sized> PopulationGame for Box<G> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn payoff_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).payoff_into(x, out)
    }
    fn gradient(&self, x: &[f64]) -> Matrix {
        (**self).gradient(x)
    }
    fn hessian(&self, action: usize, x: &[f64]) -> Matrix {
        (**self).hessian(action, x)
    }
}

/// `F(x) = A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGame {
    matrix: Matrix,
}

impl LinearGame {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows(),
                found: matrix.cols(),
            });
        }
        if matrix.rows() < 2 {
            return Err(invalid("matrix", "a game needs at least two actions"));
        }
        if matrix.as_slice().iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("payoff matrix"));
        }
        Ok(Self { matrix })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// The game with payoff matrix `-A`.
    pub fn negated(&self) -> Self {
        Self {
            matrix: self.matrix.scale(-1.0),
        }
    }

    /// For a two-action game `[[a, b], [c, d]]`, `β = (a - c) - (b - d)`.
    pub fn two_action_beta(&self) -> Result<f64> {
        let (a, b, c, d) = self.two_action_entries()?;
        Ok((a - c) - (b - d))
    }

    /// For a two-action game, the indifference share `x* = (d - b) / β`
    /// (not necessarily inside `(0, 1)`).
    pub fn two_action_indifference(&self) -> Result<f64> {
        let (_, b, _, d) = self.two_action_entries()?;
        let beta = self.two_action_beta()?;
        if beta == 0.0 {
            return Err(Error::DegenerateGame(
                "β = 0: no isolated indifference point",
            ));
        }
        Ok((d - b) / beta)
    }

    pub(crate) fn two_action_entries(&self) -> Result<(f64, f64, f64, f64)> {
        if self.matrix.rows() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: self.matrix.rows(),
            });
        }
        let m = &self.matrix;
        Ok((m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
    }
}

impl PopulationGame for LinearGame {
    fn num_actions(&self) -> usize {
        self.matrix.rows()
    }

    fn payoff_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.matrix.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn gradient(&self, _x: &[f64]) -> Matrix {
        self.matrix.clone()
    }

    fn hessian(&self, _action: usize, _x: &[f64]) -> Matrix {
        let n = self.num_actions();
        Matrix::zeros(n, n)
    }
}

/// Univariate polynomial `c_0 + c_1 t + c_2 t² + …`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(p, c)| p as f64 * c)
                .collect(),
        )
    }
}

/// Separable game: payoff `i` depends only on the own share, `F_i(x) = f_i(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableGame {
    components: Vec<Polynomial>,
    first: Vec<Polynomial>,
    second: Vec<Polynomial>,
}

impl SeparableGame {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        if components.len() < 2 {
            return Err(invalid("components", "a game needs at least two actions"));
        }
        if components
            .iter()
            .any(|p| p.coefficients().iter().any(|c| !c.is_finite()))
        {
            return Err(Error::NonFinite("separable payoff coefficients"));
        }
        let first: Vec<_> = components.iter().map(Polynomial::derivative).collect();
        let second = first.iter().map(Polynomial::derivative).collect();
        Ok(Self {
            components,
            first,
            second,
        })
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    /// `f_i'(t)`.
    pub fn first_derivative(&self, i: usize, t: f64) -> f64 {
        self.first[i].eval(t)
    }

    /// `f_i''(t)`.
    pub fn second_derivative(&self, i: usize, t: f64) -> f64 {
        self.second[i].eval(t)
    }
}

impl PopulationGame for SeparableGame {
    fn num_actions(&self) -> usize {
        self.components.len()
    }

    fn payoff_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.components[i].eval(x[i]);
        }
    }

    fn gradient(&self, x: &[f64]) -> Matrix {
        let n = self.num_actions();
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = self.first_derivative(i, x[i]);
        }
        g
    }

    fn hessian(&self, action: usize, x: &[f64]) -> Matrix {
        let n = self.num_actions();
        let mut h = Matrix::zeros(n, n);
        h[(action, action)] = self.second_derivative(action, x[action]);
        h
    }
}

/// Two-action coordination game `[[s, 0], [0, t]]` with `s > t > 0`.
pub fn coordination_2x2(s: f64, t: f64) -> Result<LinearGame> {
    if !(t > 0.0 && s > t && s.is_finite()) {
        return Err(invalid(
            "s, t",
            format!("need s > t > 0, got s = {s}, t = {t}"),
        ));
    }
    LinearGame::from_rows(&[[s, 0.0], [0.0, t]])
}

/// Young's three-action game with three strict equilibria.
pub fn young_game() -> LinearGame {
    LinearGame::from_rows(&[[6.0, 0.0, 0.0], [5.0, 7.0, 5.0], [0.0, 5.0, 8.0]])
        .expect("constant matrix is square")
}

/// Bilingual game: technologies 1 and 2 plus a costly compatible interface.
/// Requires `0 < g < 1` and `0 < c < g / (1 + g)`.
pub fn bilingual_game(g: f64, c: f64) -> Result<LinearGame> {
    if !(g > 0.0 && g < 1.0) {
        return Err(invalid("g", format!("need 0 < g < 1, got {g}")));
    }
    let bound = g / (1.0 + g);
    if !(c > 0.0 && c < bound) {
        return Err(invalid("c", format!("need 0 < c < {bound}, got {c}")));
    }
    LinearGame::from_rows(&[
        [1.0 + g, 0.0, 1.0 + g],
        [1.0, 1.0, 1.0],
        [1.0 + g - c, 1.0 - c, 1.0 + g - c],
    ])
}

/// Congestion game `F(x) = (-x_1, -2 x_2²)`.
pub fn congestion_game() -> SeparableGame {
    SeparableGame::new(vec![
        Polynomial::new(vec![0.0, -1.0]),
        Polynomial::new(vec![0.0, 0.0, -2.0]),
    ])
    .expect("two finite components")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::lattice;

    fn interior_points(n: usize) -> Vec<Vec<f64>> {
        lattice(n, 7, true)
            .into_iter()
            .map(|s| s.into_vec())
            .collect()
    }

    fn fd_gradient(game: &dyn PopulationGame, x: &[f64]) -> Matrix {
        let n = game.num_actions();
        let h = 1e-5;
        let mut m = Matrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (game.payoff(&xp), game.payoff(&xm));
            for i in 0..n {
                m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        m
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.max_abs_diff(b) / b.max_abs().max(1.0)
    }

    #[test]
    fn coordination_catalog() {
        let g = coordination_2x2(2.0, 1.0).unwrap();
        assert_eq!(g.matrix().row(0), &[2.0, 0.0]);
        assert_eq!(g.matrix().row(1), &[0.0, 1.0]);
        assert!((g.two_action_indifference().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(coordination_2x2(1.0, 1.0).is_err());
        assert!(coordination_2x2(2.0, 0.0).is_err());
    }

    #[test]
    fn coordination_interior_nash_by_bisection() {
        let g = coordination_2x2(3.0, 2.0).unwrap();
        let diff = |x1: f64| {
            let f = g.payoff(&[x1, 1.0 - x1]);
            f[0] - f[1]
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if diff(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 0.4).abs() < 1e-12);
        assert!((g.two_action_indifference().unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn young_payoffs_and_strict_equilibria() {
        let g = young_game();
        assert_eq!(g.payoff(&[1.0, 0.0, 0.0]), vec![6.0, 5.0, 0.0]);
        assert_eq!(g.payoff(&[0.0, 0.0, 1.0]), vec![0.0, 5.0, 8.0]);
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            let f = g.payoff(&e);
            for j in 0..3 {
                if j != i {
                    assert!(f[i] > f[j]);
                }
            }
        }
    }

    #[test]
    fn bilingual_parameters() {
        let g = bilingual_game(0.5, 0.05).unwrap();
        for x in interior_points(3) {
            assert!((g.payoff(&x)[1] - 1.0).abs() < 1e-15);
        }
        assert!(bilingual_game(0.5, 0.4).is_err());
        assert!(bilingual_game(1.0, 0.1).is_err());
        assert!(bilingual_game(0.5, 0.0).is_err());
    }

    #[test]
    fn congestion_values() {
        let g = congestion_game();
        assert_eq!(g.payoff(&[0.5, 0.5]), vec![-0.5, -0.5]);
        let h = g.hessian(1, &[0.3, 0.7]);
        assert_eq!(h[(1, 1)], -4.0);
        assert_eq!(h[(0, 0)], 0.0);
        assert_eq!(g.hessian(0, &[0.3, 0.7]).max_abs(), 0.0);
        let x = [0.3, 0.7];
        assert!(rel_err(&g.gradient(&x), &fd_gradient(&g, &x)) < 1e-6);
    }

    #[test]
    fn catalog_derivatives_match_finite_differences() {
        let games: Vec<Box<dyn PopulationGame>> = vec![
            Box::new(coordination_2x2(2.0, 1.0).unwrap()),
            Box::new(young_game()),
            Box::new(bilingual_game(0.5, 0.05).unwrap()),
            Box::new(congestion_game()),
        ];
        for g in &games {
            let n = g.num_actions();
            for x in interior_points(n) {
                assert!(rel_err(&g.gradient(&x), &fd_gradient(g.as_ref(), &x)) < 1e-6);
                for i in 0..n {
                    let h = g.hessian(i, &x);
                    assert!(h.asymmetry() < 1e-10);
                    // generic second-difference Hessian from the trait default
                    let fd = PopulationGame::hessian(&FdOnly(g.as_ref()), i, &x);
                    assert!(rel_err(&h, &fd) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn linear_hessian_is_zero_and_separable_is_diagonal() {
        let y = young_game();
        assert_eq!(y.hessian(2, &[0.2, 0.3, 0.5]).max_abs(), 0.0);
        let s = SeparableGame::new(vec![
            Polynomial::new(vec![0.0, 0.0, 1.0]),
            Polynomial::new(vec![1.0, 0.0, 0.0, 1.0]),
            Polynomial::new(vec![0.0, 2.0]),
        ])
        .unwrap();
        let x = [0.2, 0.3, 0.5];
        for i in 0..3 {
            let h = s.hessian(i, &x);
            let nonzero = h.as_slice().iter().filter(|v| **v != 0.0).count();
            assert!(nonzero <= 1);
            for a in 0..3 {
                for b in 0..3 {
                    if (a, b) != (i, i) {
                        assert_eq!(h[(a, b)], 0.0);
                    }
                }
            }
        }
        assert!((s.hessian(1, &x)[(1, 1)] - 6.0 * 0.3).abs() < 1e-15);
    }

    /// Wraps a game so only the payoff is visible and the trait's
    /// finite-difference derivative defaults are used.
    struct FdOnly<'a>(&'a dyn PopulationGame);

    impl PopulationGame for FdOnly<'_> {
        fn num_actions(&self) -> usize {
            self.0.num_actions()
        }
        fn payoff_into(&self, x: &[f64], out: &mut [f64]) {
            self.0.payoff_into(x, out)
        }
    }
}
