//! Closed-form FO steady state for a symmetric two-lane intersection with
//! `Δs = 0`. `lambda` is always the total rate; each lane carries `λ/2`.
//!
//! `g` is half the density of the larger lane delay, supported on
//! `[0, Δd]`: a smooth part `C e^{λt/2}` plus point masses at both ends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported `λΔd`; beyond it `e^{λΔd}` terms lose all precision.
pub const MAX_LOAD: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSolution {
    pub lambda: f64,
    pub delta_d: f64,
    pub c: f64,
    pub mass_at_zero: f64,
    pub mass_at_delta_d: f64,
}

fn check(lambda: f64, delta_d: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite (got {lambda})"
        )));
    }
    if !(delta_d.is_finite() && delta_d > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta_d must be positive and finite (got {delta_d})"
        )));
    }
    let load = lambda * delta_d;
    if load > MAX_LOAD {
        return Err(Error::OutOfRange(load));
    }
    Ok(load)
}

pub fn solve_steady_state(lambda: f64, delta_d: f64) -> Result<SteadyStateSolution> {
    let a = check(lambda, delta_d)?;
    let denom = 8.0 * (2.0 * (a / 2.0).cosh() - 1.0);
    let c = lambda * (1.0 + (-a).exp()) / denom;
    let mass_at_zero = 2.0 * c / lambda;
    let mass_at_delta_d = 0.5 - 2.0 * (a / 2.0).exp() * c / lambda;
    Ok(SteadyStateSolution {
        lambda,
        delta_d,
        c,
        mass_at_zero,
        mass_at_delta_d,
    })
}

impl SteadyStateSolution {
    pub fn load(&self) -> f64 {
        self.lambda * self.delta_d
    }

    /// Smooth part of `g` at `t ∈ (0, Δd)`.
    pub fn finite_density(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.delta_d {
            return 0.0;
        }
        self.c * (self.lambda * t / 2.0).exp()
    }

    /// `∫₀^{Δd}` of the smooth part.
    pub fn finite_mass(&self) -> f64 {
        2.0 * self.c / self.lambda * (self.load() / 2.0).exp_m1()
    }

    /// `2(ĝ(0) + ĝ(Δd) + ∫g̃)`, which equals 1.
    pub fn normalization(&self) -> f64 {
        2.0 * (self.mass_at_zero + self.mass_at_delta_d + self.finite_mass())
    }

    /// `∫₀^∞ e^{−λτ} g(τ) dτ` including both point masses.
    pub fn laplace_weight(&self) -> f64 {
        let a = self.load();
        self.mass_at_zero
            + (-a).exp() * self.mass_at_delta_d
            + 2.0 * self.c * -(-a / 2.0).exp_m1() / self.lambda
    }

    /// Accepts `t` in `[0, Δd]`, absorbing rounding overshoot of grid points
    /// such as `Δd * n / n`.
    fn check_t(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.delta_d.max(1.0);
        if !(t >= -slack && t <= self.delta_d + slack) {
            return Err(Error::InvalidParameter(format!(
                "t = {t} outside [0, {}]",
                self.delta_d
            )));
        }
        Ok(t.clamp(0.0, self.delta_d))
    }

    /// Steady-state CDF of the per-event delay on `[0, Δd]`.
    pub fn delay_cdf(&self, t: f64) -> Result<f64> {
        let t = self.check_t(t)?;
        let l = self.lambda;
        let dd = self.delta_d;
        let bracket = (l * t / 2.0).exp() - (l * (dd - t) / 2.0).exp() + (l * dd / 2.0 - l * t).exp();
        Ok(4.0 * self.c / l * bracket - (-l * t).exp_m1() / 2.0)
    }

    /// Density of the continuous part of the delay on `(0, Δd)`; the atom at
    /// zero carries `2ĝ(0)`.
    pub fn delay_density(&self, t: f64) -> Result<f64> {
        let t = self.check_t(t)?;
        let l = self.lambda;
        let dd = self.delta_d;
        let bracket = (l * t / 2.0).exp() + (l * (dd - t) / 2.0).exp()
            - 2.0 * (l * dd / 2.0 - l * t).exp();
        Ok(2.0 * self.c * bracket + l / 2.0 * (-l * t).exp())
    }

    pub fn expected_delay(&self) -> f64 {
        let a = self.load();
        self.delta_d / 2.0 + (-a).exp_m1() / (2.0 * self.lambda * (2.0 * (a / 2.0).cosh() - 1.0))
    }
}

pub fn delay_cdf(solution: &SteadyStateSolution, t: f64) -> Result<f64> {
    solution.delay_cdf(t)
}

pub fn expected_delay(lambda: f64, delta_d: f64) -> Result<f64> {
    Ok(solve_steady_state(lambda, delta_d)?.expected_delay())
}

/// Light-traffic limit of the expected delay, `λΔd²/4`.
pub fn low_flow_approx(lambda: f64, delta_d: f64) -> f64 {
    lambda * delta_d * delta_d / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointMassRow {
    pub load: f64,
    pub zero_delay: f64,
    pub full_delay: f64,
}

/// `(λΔd, 2ĝ(0), 2ĝ(Δd))` for each load; both only depend on the product.
/// A load of exactly 0 gives the no-conflict limit `(1, 0)`.
pub fn point_mass_curves(loads: &[f64]) -> Result<Vec<PointMassRow>> {
    loads
        .iter()
        .map(|&load| {
            if load == 0.0 {
                return Ok(PointMassRow {
                    load,
                    zero_delay: 1.0,
                    full_delay: 0.0,
                });
            }
            let s = solve_steady_state(1.0, load)?;
            Ok(PointMassRow {
                load,
                zero_delay: 2.0 * s.mass_at_zero,
                full_delay: 2.0 * s.mass_at_delta_d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + h * i as f64);
        }
        s * h / 3.0
    }

    /// Density of the next event's delay from the stationary `g`, written as
    /// an integral over the exponential gap with the atoms of `g` split out.
    fn density_by_quadrature(s: &SteadyStateSolution, t: f64) -> f64 {
        let l = s.lambda;
        let dd = s.delta_d;
        let px = |x: f64| l * (-l * x).exp();
        let g = |y: f64| s.c * (l * y / 2.0).exp();
        let n = 4000;
        let t1 = simpson(|x| g(t + x) * px(x), 0.0, dd - t, n) + s.mass_at_delta_d * px(dd - t);
        let t2 = simpson(|x| g(t + x - dd) * px(x), dd - t, 2.0 * dd - t, n)
            + s.mass_at_zero * px(dd - t)
            + s.mass_at_delta_d * px(2.0 * dd - t);
        let t3 = simpson(|x| g(x - t + dd) * px(x), 0.0, t, n) + s.mass_at_delta_d * px(t);
        t1 + t2 + t3
    }

    #[test]
    fn point_masses_match_tabulated_values() {
        let rows = point_mass_curves(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let expected = [
            (0.544863, 0.101674),
            (0.272111, 0.260325),
            (0.141679, 0.365041),
            (0.078039, 0.423364),
            (0.044686, 0.455613),
        ];
        for (row, (z, f)) in rows.iter().zip(expected) {
            assert_abs_diff_eq!(row.zero_delay, z, epsilon = 1e-5);
            assert_abs_diff_eq!(row.full_delay, f, epsilon = 1e-5);
        }
    }

    #[test]
    fn depends_on_load_only() {
        let a = solve_steady_state(1.0, 2.0).unwrap();
        let b = solve_steady_state(0.5, 4.0).unwrap();
        assert_abs_diff_eq!(a.mass_at_zero, b.mass_at_zero, epsilon = 1e-14);
        assert_abs_diff_eq!(a.mass_at_delta_d, b.mass_at_delta_d, epsilon = 1e-14);
    }

    #[test]
    fn curves_are_monotone() {
        let loads: Vec<f64> = (1..=100).map(|i| 0.1 * i as f64).collect();
        let rows = point_mass_curves(&loads).unwrap();
        let zero = point_mass_curves(&[0.0]).unwrap()[0];
        assert_eq!((zero.zero_delay, zero.full_delay), (1.0, 0.0));
        for w in rows.windows(2) {
            assert!(w[1].zero_delay < w[0].zero_delay);
            assert!(w[1].full_delay > w[0].full_delay);
        }
    }

    #[test]
    fn light_load_limit() {
        let s = solve_steady_state(1.0, 1e-6).unwrap();
        assert_abs_diff_eq!(2.0 * s.mass_at_zero, 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(2.0 * s.mass_at_delta_d, 0.0, epsilon = 1e-5);
    }

    #[test]
    fn cdf_values() {
        let s = solve_steady_state(1.0, 2.0).unwrap();
        assert_abs_diff_eq!(s.delay_cdf(0.0).unwrap(), 0.272111, epsilon = 1e-6);
        assert_abs_diff_eq!(s.delay_cdf(1.0).unwrap(), 0.588171, epsilon = 1e-6);
        assert_abs_diff_eq!(s.delay_cdf(2.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(s.delay_cdf(2.1).is_err());
        assert!(s.delay_cdf(-0.1).is_err());
    }

    #[test]
    fn expected_delay_values() {
        for (l, e) in [(1.0, 0.505604), (0.2, 0.116330), (4.0, 0.743484), (0.1, 0.057437)] {
            assert_abs_diff_eq!(expected_delay(l, 1.5).unwrap(), e, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(low_flow_approx(0.1, 1.5), 0.05625, epsilon = 1e-15);
        let rel = (low_flow_approx(0.1, 1.5) - 0.057437) / 0.057437;
        assert!(rel.abs() < 0.025);
    }

    #[test]
    fn proof_chain_identities() {
        for &(l, dd) in &[(1.0, 1.0), (0.3, 2.0), (2.0, 4.0), (5.0, 1.0)] {
            let s = solve_steady_state(l, dd).unwrap();
            let i = s.laplace_weight();
            assert_abs_diff_eq!(s.mass_at_zero, ((-l * dd).exp() + 1.0) / 2.0 * i, epsilon = 1e-12);
            assert_abs_diff_eq!(s.mass_at_delta_d, 0.25 - i / 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.normalization(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn density_matches_convolution() {
        for &(l, dd) in &[(1.0, 2.0), (0.4, 1.5), (2.0, 3.0)] {
            let s = solve_steady_state(l, dd).unwrap();
            for k in 1..20 {
                let t = dd * k as f64 / 20.0;
                let direct = s.delay_density(t).unwrap();
                let conv = density_by_quadrature(&s, t);
                assert_abs_diff_eq!(direct, conv, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(solve_steady_state(0.0, 1.0).is_err());
        assert!(solve_steady_state(1.0, -1.0).is_err());
        assert!(matches!(solve_steady_state(10.0, 6.0), Err(Error::OutOfRange(_))));
        assert!(solve_steady_state(10.0, 5.0).is_ok());
    }
}
