//! Sample outcomes `z ∈ Z^k`, multinomial masses `M^k(z | x)` and the
//! covariance `Σ(x) = diag(x) - x xᵀ` of a single draw.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::math::{exp, ln, ln_factorial};

/// Hard ceiling on the number of outcomes any enumeration may produce.
pub const MAX_OUTCOMES: usize = 50_000;

/// Per-action-count caps on the sample size `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleCaps {
    pub two_actions: usize,
    pub three_actions: usize,
    pub many_actions: usize,
}

impl Default for SampleCaps {
    fn default() -> Self {
        Self {
            two_actions: 512,
            three_actions: 64,
            many_actions: 24,
        }
    }
}

impl SampleCaps {
    pub fn cap_for(&self, n: usize) -> usize {
        match n {
            0..=2 => self.two_actions,
            3 => self.three_actions,
            _ => self.many_actions,
        }
    }

    /// Checks `1 ≤ k ≤ cap(n)` and that `|Z^k|` stays below [`MAX_OUTCOMES`].
    pub fn check(&self, n: usize, k: usize) -> Result<()> {
        if n < 2 {
            return Err(invalid("n", "need at least two actions"));
        }
        if k == 0 {
            return Err(invalid("k", "sample size must be at least 1"));
        }
        let cap = self.cap_for(n);
        if k > cap || outcome_count(n, k) > MAX_OUTCOMES as f64 {
            return Err(Error::SampleSizeCap { actions: n, k, cap });
        }
        Ok(())
    }
}

/// `|Z^k| = binomial(k + n - 1, n - 1)`, as a float so it cannot overflow.
pub fn outcome_count(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for j in 1..n {
        c = c * (k + j) as f64 / j as f64;
    }
    libm::round(c)
}

/// A sample outcome: how many of the `k` draws played each action.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleOutcome {
    counts: Vec<u32>,
}

impl SampleOutcome {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(invalid("counts", "need at least two actions"));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(invalid("counts", "sample size must be at least 1"));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn size(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Empirical population state `w = z / k`.
    pub fn empirical_state(&self) -> Vec<f64> {
        let k = self.size() as f64;
        self.counts.iter().map(|&c| c as f64 / k).collect()
    }
}

/// Calls `f` on every composition of `k` into `n` nonnegative parts, in
/// reverse-lexicographic order.
pub(crate) fn for_each_composition(n: usize, k: u32, z: &mut [u32], f: &mut dyn FnMut(&[u32])) {
    fn rec(pos: usize, remaining: u32, z: &mut [u32], f: &mut dyn FnMut(&[u32])) {
        if pos + 1 == z.len() {
            z[pos] = remaining;
            f(z);
            return;
        }
        for c in (0..=remaining).rev() {
            z[pos] = c;
            rec(pos + 1, remaining - c, z, f);
        }
    }
    debug_assert_eq!(z.len(), n);
    rec(0, k, z, f);
}

/// All outcomes of a size-`k` sample over `n` actions, in reverse-lexicographic
/// order, using the default caps.
pub fn enumerate_outcomes(n: usize, k: usize) -> Result<Vec<SampleOutcome>> {
    enumerate_outcomes_with_caps(n, k, &SampleCaps::default())
}

pub fn enumerate_outcomes_with_caps(
    n: usize,
    k: usize,
    caps: &SampleCaps,
) -> Result<Vec<SampleOutcome>> {
    caps.check(n, k)?;
    let mut out = Vec::with_capacity(outcome_count(n, k) as usize);
    let mut z = vec![0u32; n];
    for_each_composition(n, k as u32, &mut z, &mut |z| {
        out.push(SampleOutcome { counts: z.to_vec() })
    });
    Ok(out)
}

fn ln_multinomial_coefficient(counts: &[u32]) -> f64 {
    let k: u32 = counts.iter().sum();
    ln_factorial(k) - counts.iter().map(|&c| ln_factorial(c)).sum::<f64>()
}

/// `ln Π x_i^{z_i}` with `0⁰ = 1`; `None` when some `x_i = 0 < z_i`.
/// Negative coordinates are treated as zero.
fn ln_power_product(counts: &[u32], ln_x: &[f64]) -> Option<f64> {
    let mut acc = 0.0;
    for (&c, &lx) in counts.iter().zip(ln_x) {
        if c == 0 {
            continue;
        }
        if lx == f64::NEG_INFINITY {
            return None;
        }
        acc += c as f64 * lx;
    }
    Some(acc)
}

fn ln_coords(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| if v > 0.0 { ln(v) } else { f64::NEG_INFINITY })
        .collect()
}

/// `M^k(z | x)`, the multinomial probability of outcome `z` at state `x`.
pub fn multinomial_mass(z: &SampleOutcome, x: &[f64]) -> Result<f64> {
    crate::error::check_dim(z.counts.len(), x.len())?;
    let lx = ln_coords(x);
    Ok(match ln_power_product(&z.counts, &lx) {
        Some(lp) => exp(ln_multinomial_coefficient(&z.counts) + lp),
        None => 0.0,
    })
}

/// `Σ(x) = diag(x) - x xᵀ`, the covariance of one categorical draw.
/// The empirical state of `k` draws has covariance `Σ(x) / k`.
pub fn covariance(x: &[f64]) -> Matrix {
    let n = x.len();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = if i == j {
                x[i] - x[i] * x[i]
            } else {
                -x[i] * x[j]
            };
        }
    }
    s
}

/// Outcomes of `Z^k` with cached log-coefficients, for repeated evaluation of
/// the masses at many states.
#[derive(Debug, Clone)]
pub struct OutcomeTable {
    n: usize,
    k: usize,
    counts: Vec<u32>,
    ln_coefficients: Vec<f64>,
}

impl OutcomeTable {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        Self::with_caps(n, k, &SampleCaps::default())
    }

    pub fn with_caps(n: usize, k: usize, caps: &SampleCaps) -> Result<Self> {
        caps.check(n, k)?;
        let mut counts = Vec::new();
        let mut ln_coefficients = Vec::new();
        let mut z = vec![0u32; n];
        for_each_composition(n, k as u32, &mut z, &mut |z| {
            counts.extend_from_slice(z);
            ln_coefficients.push(ln_multinomial_coefficient(z));
        });
        Ok(Self {
            n,
            k,
            counts,
            ln_coefficients,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.n
    }

    pub fn sample_size(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ln_coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_coefficients.is_empty()
    }

    /// Counts of outcome `idx`.
    pub fn counts(&self, idx: usize) -> &[u32] {
        &self.counts[idx * self.n..(idx + 1) * self.n]
    }

    pub fn empirical_state(&self, idx: usize) -> Vec<f64> {
        let k = self.k as f64;
        self.counts(idx).iter().map(|&c| c as f64 / k).collect()
    }

    /// Masses of every outcome at `x`, in table order.
    pub fn masses(&self, x: &[f64]) -> Vec<f64> {
        let lx = ln_coords(x);
        (0..self.len())
            .map(|idx| match ln_power_product(self.counts(idx), &lx) {
                Some(lp) => exp(self.ln_coefficients[idx] + lp),
                None => 0.0,
            })
            .collect()
    }

    /// Partial derivatives `∂M^k(z | x) / ∂x_c` of every outcome's mass,
    /// treating the coordinates as independent (the polynomial extension of
    /// the mass off the simplex). Returned row-major: `[idx * n + c]`.
    pub fn mass_partials(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let lx = ln_coords(x);
        let mut out = vec![0.0; self.len() * n];
        for idx in 0..self.len() {
            let z = self.counts(idx);
            for c in 0..n {
                if z[c] == 0 {
                    continue;
                }
                // coefficient · z_c · x_c^{z_c - 1} · Π_{i≠c} x_i^{z_i}
                let mut acc = self.ln_coefficients[idx] + ln(z[c] as f64);
                let mut zero = false;
                for i in 0..n {
                    let e = if i == c { z[i] - 1 } else { z[i] };
                    if e == 0 {
                        continue;
                    }
                    if lx[i] == f64::NEG_INFINITY {
                        zero = true;
                        break;
                    }
                    acc += e as f64 * lx[i];
                }
                if !zero {
                    out[idx * n + c] = exp(acc);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: u64, r: u64) -> u64 {
        (1..=r).fold(1u64, |acc, i| acc * (n - r + i) / i)
    }

    #[test]
    fn small_enumerations() {
        let e = enumerate_outcomes(2, 1).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].counts(), &[1, 0]);
        assert_eq!(e[1].counts(), &[0, 1]);
        let e = enumerate_outcomes(2, 2).unwrap();
        let c: Vec<_> = e.iter().map(|z| z.counts().to_vec()).collect();
        assert_eq!(c, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn enumeration_counts_match_binomial() {
        for n in 2..=5 {
            for k in 1..=10 {
                let e = enumerate_outcomes(n, k).unwrap();
                assert_eq!(e.len() as u64, binomial((k + n - 1) as u64, (n - 1) as u64));
                let mut uniq = e.clone();
                uniq.sort_by(|a, b| a.counts().cmp(b.counts()));
                uniq.dedup();
                assert_eq!(uniq.len(), e.len());
                assert!(e.iter().all(|z| z.size() as usize == k));
            }
        }
        assert_eq!(enumerate_outcomes(3, 5).unwrap().len(), 21);
    }

    #[test]
    fn caps_are_enforced() {
        assert!(enumerate_outcomes(2, 512).is_ok());
        assert!(matches!(
            enumerate_outcomes(2, 513),
            Err(Error::SampleSizeCap { cap: 512, .. })
        ));
        assert!(enumerate_outcomes(3, 65).is_err());
        assert!(enumerate_outcomes(4, 25).is_err());
        assert!(enumerate_outcomes(2, 0).is_err());
        // 24 draws over 6 actions would exceed the outcome ceiling
        assert!(enumerate_outcomes(6, 24).is_err());
    }

    #[test]
    fn mass_examples() {
        let z = SampleOutcome::new(vec![1, 0]).unwrap();
        assert!((multinomial_mass(&z, &[0.3, 0.7]).unwrap() - 0.3).abs() < 1e-15);
        let z = SampleOutcome::new(vec![1, 1]).unwrap();
        assert!((multinomial_mass(&z, &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        let z = SampleOutcome::new(vec![2, 1, 2]).unwrap();
        let m = multinomial_mass(&z, &[0.2, 0.3, 0.5]).unwrap();
        assert!((m - 0.09).abs() < 1e-15);
    }

    #[test]
    fn boundary_masses() {
        let z = SampleOutcome::new(vec![2, 0]).unwrap();
        assert_eq!(multinomial_mass(&z, &[1.0, 0.0]).unwrap(), 1.0);
        let z = SampleOutcome::new(vec![1, 1]).unwrap();
        assert_eq!(multinomial_mass(&z, &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn mass_matches_monte_carlo_frequency() {
        use rand::{Rng, SeedableRng};
        let x = [0.2, 0.3, 0.5];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let draws = 10_000_000u32;
        let mut hits = 0u32;
        for _ in 0..draws {
            let mut c = [0u32; 3];
            for _ in 0..5 {
                let u: f64 = rng.random();
                let a = if u < x[0] {
                    0
                } else if u < x[0] + x[1] {
                    1
                } else {
                    2
                };
                c[a] += 1;
            }
            if c == [2, 1, 2] {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.09).abs() < 3e-4, "frequency {freq}");
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(covariance(&[1.0, 0.0]).max_abs(), 0.0);
        let s = covariance(&[0.5, 0.5]);
        assert_eq!(s.as_slice(), &[0.25, -0.25, -0.25, 0.25]);
    }

    #[test]
    fn enumerated_covariance_equals_sigma_over_k() {
        let x = [0.2, 0.3, 0.5];
        let k = 4;
        let table = OutcomeTable::new(3, k).unwrap();
        let m = table.masses(&x);
        let sigma = covariance(&x);
        for a in 0..3 {
            for b in 0..3 {
                let c: f64 = (0..table.len())
                    .map(|i| {
                        let w = table.empirical_state(i);
                        m[i] * (w[a] - x[a]) * (w[b] - x[b])
                    })
                    .sum();
                assert!((c - sigma[(a, b)] / k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_partials_match_finite_differences() {
        let table = OutcomeTable::new(3, 6).unwrap();
        let x = [0.2, 0.3, 0.5];
        let d = table.mass_partials(&x);
        let h = 1e-6;
        for c in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let (mp, mm) = (table.masses(&xp), table.masses(&xm));
            for idx in 0..table.len() {
                let fd = (mp[idx] - mm[idx]) / (2.0 * h);
                assert!((fd - d[idx * 3 + c]).abs() < 1e-7);
            }
        }
    }

    fn simplex_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-3).then(|| v.iter().map(|a| a / s).collect())
        })
    }

    proptest! {
        #[test]
        fn moments_of_empirical_state(x in simplex_point(3), k in 1usize..40) {
            let table = OutcomeTable::new(3, k).unwrap();
            let m = table.masses(&x);
            let total: f64 = m.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let sigma = covariance(&x);
            for a in 0..3 {
                let mean: f64 = (0..table.len()).map(|i| m[i] * table.empirical_state(i)[a]).sum();
                prop_assert!((mean - x[a]).abs() < 1e-12);
                for b in 0..3 {
                    let c: f64 = (0..table.len()).map(|i| {
                        let w = table.empirical_state(i);
                        m[i] * (w[a] - x[a]) * (w[b] - x[b])
                    }).sum();
                    prop_assert!((c - sigma[(a, b)] / k as f64).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn covariance_rows_sum_to_zero_and_psd(x in simplex_point(4), v in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let s = covariance(&x);
            prop_assert!(s.asymmetry() == 0.0);
            for i in 0..4 {
                prop_assert!(s.row(i).iter().sum::<f64>().abs() < 1e-12);
            }
            prop_assert!(s.quadratic_form(&v) >= -1e-12);
        }

        #[test]
        fn two_action_masses_normalize_up_to_cap(x1 in 0.0f64..=1.0, k in 1usize..=512) {
            let table = OutcomeTable::new(2, k).unwrap();
            let total: f64 = table.masses(&[x1, 1.0 - x1]).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
