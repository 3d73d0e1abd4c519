//! Truncated power-series arithmetic for generating-function iteration.
//!
//! [`UniSeries`] carries coefficients in one variable (population size);
//! [`BiSeries`] carries a dense matrix of coefficients in two (population
//! size and accumulated progeny). Probability mass lost beyond a truncation
//! is never renormalized; it is reported as leakage next to every marginal.

use crate::error::{QprocError, Result};
use crate::offspring::OffspringLaw;

/// Hard cap on truncation orders.
pub const MAX_TRUNC: usize = 4096;

fn check_trunc(requested: usize) -> Result<()> {
    if requested > MAX_TRUNC {
        return Err(QprocError::TruncationOverflow { requested, cap: MAX_TRUNC });
    }
    Ok(())
}

/// Truncated series in one variable; `coeffs[j]` multiplies `s^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniSeries {
    coeffs: Vec<f64>,
}

impl UniSeries {
    /// Series from raw coefficients; the truncation order is the last index.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        check_trunc(coeffs.len().saturating_sub(1))?;
        if coeffs.is_empty() {
            return Err(QprocError::TruncationOverflow { requested: 0, cap: MAX_TRUNC });
        }
        Ok(Self { coeffs })
    }

    /// The identity series `s` at the given truncation order.
    pub fn identity(trunc: usize) -> Result<Self> {
        check_trunc(trunc)?;
        let mut coeffs = vec![0.0; trunc + 1];
        if trunc >= 1 {
            coeffs[1] = 1.0;
        }
        Ok(Self { coeffs })
    }

    /// The constant series at the given truncation order.
    pub fn constant(value: f64, trunc: usize) -> Result<Self> {
        check_trunc(trunc)?;
        let mut coeffs = vec![0.0; trunc + 1];
        coeffs[0] = value;
        Ok(Self { coeffs })
    }

    pub fn trunc(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Total retained mass.
    pub fn mass(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    /// Mass lost to truncation when the series represents a probability
    /// distribution; clamped at zero against rounding.
    pub fn leakage(&self) -> f64 {
        (1.0 - self.mass()).max(0.0)
    }

    /// Horner evaluation at a point.
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// Truncated product; both operands must share a truncation order.
    pub fn mul(&self, other: &UniSeries) -> UniSeries {
        assert_eq!(self.trunc(), other.trunc(), "mismatched truncation orders");
        let n = self.trunc();
        let mut out = vec![0.0; n + 1];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for (b, &cb) in other.coeffs.iter().take(n + 1 - a).enumerate() {
                out[a + b] += ca * cb;
            }
        }
        UniSeries { coeffs: out }
    }

    /// Truncated composition `self(inner(s))` by Horner over the outer
    /// coefficients.
    pub fn compose(&self, inner: &UniSeries) -> UniSeries {
        let trunc = inner.trunc();
        let mut acc = UniSeries { coeffs: vec![0.0; trunc + 1] };
        for &c in self.coeffs.iter().rev() {
            acc = acc.mul(inner);
            acc.coeffs[0] += c;
        }
        acc
    }

    /// CSV rows `j,coeff` for the nonzero coefficients.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,coeff\n");
        for (j, &c) in self.coeffs.iter().enumerate() {
            if c != 0.0 {
                out.push_str(&format!("{j},{c:?}\n"));
            }
        }
        out
    }
}

/// Coefficients of `f(inner(s))` for an offspring law `f`, truncated at the
/// inner series' order.
pub fn compose_poly(outer: &OffspringLaw, inner: &UniSeries) -> Result<UniSeries> {
    check_trunc(inner.trunc())?;
    let outer_series = UniSeries { coeffs: outer.probs().to_vec() };
    Ok(outer_series.compose(inner))
}

/// `n`-fold iterate of the offspring generating function as a truncated
/// series; the zeroth iterate is the identity.
pub fn iterate_pgf(law: &OffspringLaw, n: u32, trunc: usize) -> Result<UniSeries> {
    let mut series = UniSeries::identity(trunc)?;
    for _ in 0..n {
        series = compose_poly(law, &series)?;
    }
    Ok(series)
}

/// Truncated `i`-th power by repeated multiplication.
pub fn power_series(base: &UniSeries, i: u64) -> Result<UniSeries> {
    if i == 0 {
        return UniSeries::constant(1.0, base.trunc());
    }
    let mut out = base.clone();
    for _ in 1..i {
        out = out.mul(base);
    }
    Ok(out)
}

/// Dense truncated series in two variables; the entry at `(j, l)` multiplies
/// `s^j x^l`. Actual degree bounds are tracked so products only touch the
/// occupied block.
#[derive(Debug, Clone, PartialEq)]
pub struct BiSeries {
    coeffs: Vec<f64>,
    trunc_s: usize,
    trunc_x: usize,
    deg_s: usize,
    deg_x: usize,
}

impl BiSeries {
    /// The series `s` (population seed) at the given truncation orders.
    pub fn identity_s(trunc_s: usize, trunc_x: usize) -> Result<Self> {
        check_trunc(trunc_s)?;
        check_trunc(trunc_x)?;
        let mut out = Self::zero(trunc_s, trunc_x);
        if trunc_s >= 1 {
            out.coeffs[out.idx(1, 0)] = 1.0;
            out.deg_s = 1;
        }
        Ok(out)
    }

    fn zero(trunc_s: usize, trunc_x: usize) -> Self {
        BiSeries {
            coeffs: vec![0.0; (trunc_s + 1) * (trunc_x + 1)],
            trunc_s,
            trunc_x,
            deg_s: 0,
            deg_x: 0,
        }
    }

    #[inline]
    fn idx(&self, j: usize, l: usize) -> usize {
        j * (self.trunc_x + 1) + l
    }

    pub fn trunc(&self) -> (usize, usize) {
        (self.trunc_s, self.trunc_x)
    }

    pub fn coeff(&self, j: usize, l: usize) -> f64 {
        if j > self.trunc_s || l > self.trunc_x {
            0.0
        } else {
            self.coeffs[j * (self.trunc_x + 1) + l]
        }
    }

    pub fn mass(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn leakage(&self) -> f64 {
        (1.0 - self.mass()).max(0.0)
    }

    /// Evaluation at a point by summing the occupied block.
    pub fn eval(&self, s: f64, x: f64) -> f64 {
        let mut total = 0.0;
        for j in (0..=self.deg_s).rev() {
            let row = &self.coeffs[self.idx(j, 0)..=self.idx(j, self.deg_x)];
            let row_val = row.iter().rev().fold(0.0, |acc, &c| acc * x + c);
            total = total * s + row_val;
        }
        total
    }

    fn mul(&self, other: &BiSeries) -> BiSeries {
        assert_eq!((self.trunc_s, self.trunc_x), (other.trunc_s, other.trunc_x));
        let mut out = BiSeries::zero(self.trunc_s, self.trunc_x);
        out.deg_s = (self.deg_s + other.deg_s).min(self.trunc_s);
        out.deg_x = (self.deg_x + other.deg_x).min(self.trunc_x);
        let stride = self.trunc_x + 1;
        for ja in 0..=self.deg_s.min(out.deg_s) {
            for jb in 0..=other.deg_s.min(out.deg_s - ja) {
                let jo = (ja + jb) * stride;
                for la in 0..=self.deg_x.min(out.deg_x) {
                    let ca = self.coeffs[ja * stride + la];
                    if ca == 0.0 {
                        continue;
                    }
                    let lb_max = other.deg_x.min(out.deg_x - la);
                    let dst = &mut out.coeffs[jo + la..=jo + la + lb_max];
                    let src = &other.coeffs[jb * stride..=jb * stride + lb_max];
                    for (d, &cb) in dst.iter_mut().zip(src) {
                        *d += ca * cb;
                    }
                }
            }
        }
        out
    }

    fn scale(&mut self, c: f64) {
        for v in &mut self.coeffs {
            *v *= c;
        }
    }

    /// Multiplication by `x`: shifts the progeny index up by one, dropping
    /// the top row into leakage.
    fn shift_x(&self) -> BiSeries {
        let mut out = BiSeries::zero(self.trunc_s, self.trunc_x);
        out.deg_s = self.deg_s;
        out.deg_x = (self.deg_x + 1).min(self.trunc_x);
        let stride = self.trunc_x + 1;
        for j in 0..=self.deg_s {
            for l in 0..self.trunc_x.min(self.deg_x + 1) {
                out.coeffs[j * stride + l + 1] = self.coeffs[j * stride + l];
            }
        }
        out
    }

    /// CSV rows `j,l,coeff` for the nonzero coefficients, in `(j, l)` order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,l,coeff\n");
        for j in 0..=self.deg_s {
            for l in 0..=self.deg_x {
                let c = self.coeff(j, l);
                if c != 0.0 {
                    out.push_str(&format!("{j},{l},{c:?}\n"));
                }
            }
        }
        out
    }
}

/// One step of the bivariate recursion: `x * f_q(H)`, truncated at `H`'s
/// orders.
pub fn h_recursion_step(law_q: &OffspringLaw, h: &BiSeries) -> BiSeries {
    let (ts, tx) = h.trunc();
    // Horner over the conjugate law's coefficients.
    let mut acc = BiSeries::zero(ts, tx);
    for &c in law_q.probs().iter().rev() {
        acc = acc.mul(h);
        acc.coeffs[0] += c;
        acc.deg_s = acc.deg_s.max(0);
    }
    acc.shift_x()
}

/// Joint distribution of population size and accumulated progeny after `n`
/// steps, started from a single individual: the coefficient of `s^j x^l` is
/// the probability of population `j` with accumulated progeny `l`.
pub fn joint_gf(law: &OffspringLaw, n: u32, trunc_s: usize, trunc_x: usize) -> Result<BiSeries> {
    let params = law.derive_params()?;
    let law_q = law.conjugate()?;
    let beta_pow = params.beta.powf(n as f64);
    if beta_pow < f64::MIN_POSITIVE {
        return Err(QprocError::ConvergenceFailure(format!(
            "horizon {n} underflows the contraction scale"
        )));
    }
    let mut h = BiSeries::identity_s(trunc_s, trunc_x)?;
    for _ in 0..n {
        h = h_recursion_step(&law_q, &h);
    }
    // Reading the joint law off the bivariate iterate: the population index
    // weights each row, rescaled by the contraction power.
    let stride = trunc_x + 1;
    for j in 0..=h.deg_s {
        let w = j as f64 / beta_pow;
        for l in 0..=h.deg_x {
            h.coeffs[j * stride + l] *= w;
        }
    }
    Ok(h)
}

/// Progeny marginal: `probs[l]` is the probability of accumulated progeny
/// `l`, summed over population sizes.
pub fn marginal_progeny(joint: &BiSeries) -> Vec<f64> {
    let (_, tx) = joint.trunc();
    let mut out = vec![0.0; tx + 1];
    for j in 0..=joint.deg_s {
        for (l, slot) in out.iter_mut().enumerate().take(joint.deg_x + 1) {
            *slot += joint.coeff(j, l);
        }
    }
    out
}

/// Population marginal: `probs[j]` summed over progeny values.
pub fn marginal_population(joint: &BiSeries) -> Vec<f64> {
    let (ts, _) = joint.trunc();
    let mut out = vec![0.0; ts + 1];
    for (j, slot) in out.iter_mut().enumerate().take(joint.deg_s + 1) {
        for l in 0..=joint.deg_x {
            *slot += joint.coeff(j, l);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::progeny;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn super_law() -> OffspringLaw {
        OffspringLaw::new(&[0.25, 0.0, 0.75]).unwrap()
    }

    #[test]
    fn compose_with_identity_recovers_law() {
        let law = super_law();
        let inner = UniSeries::identity(8).unwrap();
        let composed = compose_poly(&law, &inner).unwrap();
        assert_relative_eq!(composed.coeff(0), 0.25);
        assert_relative_eq!(composed.coeff(1), 0.0);
        assert_relative_eq!(composed.coeff(2), 0.75);
    }

    #[test]
    fn compose_with_fixed_point_is_constant() {
        let law = super_law();
        let q = law.extinction_probability().unwrap();
        let inner = UniSeries::constant(q, 8).unwrap();
        let composed = compose_poly(&law, &inner).unwrap();
        assert_relative_eq!(composed.coeff(0), q, epsilon = 1e-13);
        for j in 1..=8 {
            assert_relative_eq!(composed.coeff(j), 0.0);
        }
    }

    #[test]
    fn double_iterate_vanishing_probability() {
        let law = OffspringLaw::new(&[0.6, 0.0, 0.4]).unwrap();
        let f2 = iterate_pgf(&law, 2, 16).unwrap();
        // f(f(0)) = f(0.6) = 0.744
        assert_relative_eq!(f2.coeff(0), 0.744, epsilon = 1e-14);
    }

    #[test]
    fn iterate_edge_cases() {
        let law = super_law();
        let f0 = iterate_pgf(&law, 0, 8).unwrap();
        assert_eq!(f0, UniSeries::identity(8).unwrap());
        let f1 = iterate_pgf(&law, 1, 8).unwrap();
        assert_relative_eq!(f1.coeff(0), 0.25);
        assert_relative_eq!(f1.coeff(2), 0.75);
    }

    #[test]
    fn vanishing_probability_monotone_to_q() {
        let law = OffspringLaw::new(&[0.6, 0.0, 0.4]).unwrap();
        let mut prev = 0.0;
        for n in 1..=40 {
            let c0 = iterate_pgf(&law, n, 4).unwrap().coeff(0);
            assert!(c0 >= prev);
            prev = c0;
        }
        assert_relative_eq!(prev, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn power_series_examples() {
        let law = super_law();
        let f1 = iterate_pgf(&law, 1, 8).unwrap();
        assert_eq!(power_series(&f1, 1).unwrap(), f1);
        let sq = power_series(&f1, 2).unwrap();
        assert_relative_eq!(sq.coeff(0), 0.0625);
        assert!(sq.mass() <= 1.0 + 1e-9);
    }

    #[test]
    fn truncation_cap_enforced() {
        assert!(matches!(
            UniSeries::identity(MAX_TRUNC + 1),
            Err(QprocError::TruncationOverflow { .. })
        ));
    }

    #[test]
    fn h_step_first_generation() {
        let law_q = OffspringLaw::new(&[0.75, 0.0, 0.25]).unwrap();
        let h0 = BiSeries::identity_s(8, 8).unwrap();
        let h1 = h_recursion_step(&law_q, &h0);
        assert_relative_eq!(h1.coeff(0, 1), 0.75);
        assert_relative_eq!(h1.coeff(2, 1), 0.25);
        assert_relative_eq!(h1.mass(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn h_iterates_stay_proper() {
        let law_q = OffspringLaw::new(&[0.75, 0.0, 0.25]).unwrap();
        let mut h = BiSeries::identity_s(160, 160).unwrap();
        for _ in 0..50 {
            h = h_recursion_step(&law_q, &h);
        }
        assert!(h.leakage() < 1e-6);
        assert!(h.mass() <= 1.0 + 1e-9);
        assert_relative_eq!(h.eval(1.0, 1.0), h.mass(), epsilon = 1e-12);
    }

    #[test]
    fn joint_first_step_is_single_atom() {
        let law = super_law();
        let j1 = joint_gf(&law, 1, 16, 16).unwrap();
        assert_relative_eq!(j1.coeff(2, 1), 1.0, epsilon = 1e-13);
        assert_relative_eq!(j1.mass(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn joint_second_step_atoms() {
        let law = super_law();
        let j2 = joint_gf(&law, 2, 16, 16).unwrap();
        assert_relative_eq!(j2.coeff(2, 3), 0.75, epsilon = 1e-13);
        assert_relative_eq!(j2.coeff(4, 3), 0.25, epsilon = 1e-13);
    }

    #[test]
    fn joint_mean_matches_closed_form() {
        let law = super_law();
        let params = law.derive_params().unwrap();
        for n in [1u32, 3, 6, 10] {
            let joint = joint_gf(&law, n, 256, 256).unwrap();
            let marg = marginal_progeny(&joint);
            let mean: f64 = marg.iter().enumerate().map(|(l, &p)| l as f64 * p).sum();
            let expected = progeny::expected_total_progeny(&params, n);
            assert_relative_eq!(mean, expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn marginal_progeny_first_step() {
        let law = super_law();
        let j1 = joint_gf(&law, 1, 16, 16).unwrap();
        let marg = marginal_progeny(&j1);
        assert_relative_eq!(marg[1], 1.0, epsilon = 1e-13);
        assert!(marg.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn mass_leakage_monotone_in_truncation() {
        let law = super_law();
        let mut prev_leak = f64::INFINITY;
        for t in [32usize, 64, 128] {
            let joint = joint_gf(&law, 8, t, t).unwrap();
            let leak = joint.leakage();
            assert!(leak >= 0.0);
            assert!(leak <= prev_leak + 1e-12);
            prev_leak = leak;
        }
    }

    #[test]
    fn iteration_semigroup_property() {
        let law = super_law();
        for (a, b) in [(1u32, 2u32), (2, 3), (3, 2)] {
            let whole = iterate_pgf(&law, a + b, 128).unwrap();
            let fa = iterate_pgf(&law, a, 128).unwrap();
            let fb = iterate_pgf(&law, b, 128).unwrap();
            let composed = fa.compose(&fb);
            for j in 0..=128 {
                assert_relative_eq!(whole.coeff(j), composed.coeff(j), epsilon = 1e-10);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn iterated_series_keep_probability_mass(n in 0u32..12, seedp in 0.05f64..0.45) {
            let law = OffspringLaw::new(&[seedp, 0.1, 1.0 - seedp - 0.1]).unwrap();
            let f = iterate_pgf(&law, n, 64).unwrap();
            prop_assert!(f.coeffs().iter().all(|&c| c >= -1e-12));
            prop_assert!(f.mass() <= 1.0 + 1e-9);
        }

        #[test]
        fn power_mass_bounded(i in 1u64..6, seedp in 0.05f64..0.45) {
            let law = OffspringLaw::new(&[seedp, 0.1, 1.0 - seedp - 0.1]).unwrap();
            let f = iterate_pgf(&law, 2, 64).unwrap();
            let p = power_series(&f, i).unwrap();
            prop_assert!(p.mass() <= 1.0 + 1e-9);
            prop_assert!(p.coeffs().iter().all(|&c| c >= -1e-12));
        }
    }
}
