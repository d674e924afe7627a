//! Cosine transform of `e^{-|y|^β}`.
//!
//! `φ_β(u) = ∫_ℝ cos(uy) e^{-|y|^β} dy` and its complement
//! `ψ_β(u) = φ_β(0) − φ_β(u) = ∫_ℝ (1 − cos uy) e^{-|y|^β} dy ≥ 0`.
//! Away from closed forms, both are evaluated on the ray `y = r e^{iθ}` with
//! `0 < θ`, `βθ < π/2`, where the integrand decays exponentially in `r`, using
//! double-exponential (exp-sinh) quadrature. Small `u` uses the Taylor series of
//! `1 − cos`, whose partial sums bracket the true value.

use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

/// Beyond this argument `|φ| ≤ 2/u` is treated as zero.
pub const U_BIG: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Closed {
    Laplace,
    Gauss,
    None,
}

#[derive(Debug, Clone)]
pub struct StableKernel {
    pub beta: f64,
    /// `φ(0) = 2Γ(1 + 1/β)`.
    pub c: f64,
    /// `∫ y² e^{-|y|^β} dy`.
    pub m2: f64,
    /// `∫ y⁴ e^{-|y|^β} dy`.
    pub m4: f64,
    theta: f64,
    closed: Closed,
    table: Option<Arc<Table>>,
}

impl StableKernel {
    pub fn new(beta: f64) -> Self {
        let closed = if beta == 2.0 {
            Closed::Gauss
        } else if beta == 1.0 {
            Closed::Laplace
        } else {
            Closed::None
        };
        let mut k = Self::general(beta);
        k.closed = closed;
        if closed == Closed::None {
            k.table = Some(Table::cached(&k));
        }
        k
    }

    /// Same kernel with closed forms disabled.
    pub fn general(beta: f64) -> Self {
        let theta = (PI / (4.0 * beta)).min(FRAC_PI_2);
        Self {
            beta,
            c: 2.0 * ln_gamma(1.0 + 1.0 / beta).exp(),
            m2: moment(beta, 1),
            m4: moment(beta, 2),
            theta,
            closed: Closed::None,
            table: None,
        }
    }

    /// `(φ(u), ψ(u))` for `u ≥ 0`.
    pub fn phi_psi(&self, u: f64) -> (f64, f64) {
        let u = u.abs();
        if u == 0.0 {
            return (self.c, 0.0);
        }
        match self.closed {
            Closed::Gauss => {
                let q = -0.25 * u * u;
                let s = PI.sqrt();
                return (s * q.exp(), -s * q.exp_m1());
            }
            Closed::Laplace => {
                let d = 1.0 + u * u;
                return (2.0 / d, 2.0 * u * u / d);
            }
            Closed::None => {}
        }
        if u >= U_BIG {
            return (0.0, self.c);
        }
        if let Some(t) = &self.table {
            if let Some(r) = t.eval(u, self.c) {
                return r;
            }
        }
        self.phi_psi_direct(u)
    }

    /// Quadrature or series evaluation, bypassing the table.
    pub fn phi_psi_direct(&self, u: f64) -> (f64, f64) {
        if let Some(psi) = self.psi_taylor(u) {
            return (self.c - psi, psi);
        }
        if u < 1.0 {
            let psi = self.psi_contour(u);
            (self.c - psi, psi)
        } else {
            let phi = self.phi_contour(u);
            (phi, self.c - phi)
        }
    }

    /// Series `Σ_k (−1)^{k+1} M_{2k} u^{2k} / (2k)!`, accepted only once a term
    /// drops below `1e-17` of the sum (the next term bounds the error).
    fn psi_taylor(&self, u: f64) -> Option<f64> {
        let lu = u.ln();
        let mut sum = 0.0f64;
        let mut prev = f64::INFINITY;
        for k in 1..=40usize {
            let lt = (2.0 / self.beta).ln() + ln_gamma((2 * k + 1) as f64 / self.beta)
                + 2.0 * k as f64 * lu
                - ln_gamma((2 * k + 1) as f64);
            let t = lt.exp();
            if t > prev {
                return None;
            }
            if k > 1 && t <= 1e-17 * sum.abs() {
                return Some(sum);
            }
            sum += if k % 2 == 1 { t } else { -t };
            prev = t;
        }
        None
    }

    fn ray(&self) -> (f64, f64, f64, f64) {
        let (st, ct) = if self.theta == FRAC_PI_2 {
            (1.0, 0.0)
        } else {
            self.theta.sin_cos()
        };
        let (sb, cb) = (self.beta * self.theta).sin_cos();
        (st, ct, sb, cb)
    }

    fn phi_contour(&self, u: f64) -> f64 {
        let (st, ct, sb, cb) = self.ray();
        let beta = self.beta;
        let theta = self.theta;
        let f = |r: f64| {
            let rb = r.powf(beta);
            let mag = (-u * r * st - rb * cb).exp();
            2.0 * mag * (theta + u * r * ct - rb * sb).cos()
        };
        let scale = (1.0 / (u * st)).min(cb.powf(-1.0 / beta));
        exp_sinh(&f, scale, 1e-14 * self.c)
    }

    fn psi_contour(&self, u: f64) -> f64 {
        let (st, ct, sb, cb) = self.ray();
        let beta = self.beta;
        let (sth, cth) = if self.theta == FRAC_PI_2 {
            (1.0, 0.0)
        } else {
            self.theta.sin_cos()
        };
        let f = |r: f64| {
            // E = 1 − exp(i u r e^{iθ}) = −expm1(a + ib)
            let a = -u * r * st;
            let b = u * r * ct;
            let sh = (0.5 * b).sin();
            let ea = a.exp();
            let e_re = -(a.exp_m1() * b.cos() - 2.0 * sh * sh);
            let e_im = -(ea * b.sin());
            // W = exp(−r^β e^{iβθ})
            let rb = r.powf(beta);
            let wm = (-rb * cb).exp();
            let (ws, wc) = (rb * sb).sin_cos();
            let w_re = wm * wc;
            let w_im = -wm * ws;
            let p_re = e_re * w_re - e_im * w_im;
            let p_im = e_re * w_im + e_im * w_re;
            2.0 * (cth * p_re - sth * p_im)
        };
        let scale = cb.powf(-1.0 / beta);
        let approx = 0.5 * self.m2 * u * u;
        exp_sinh(&f, scale, 1e-13 * approx.min(self.c))
    }
}

/// Piecewise Chebyshev interpolant in `x = ln u` of `ψ(u)/u²` (for `u < 1`) and
/// `φ(u)` (for `u ≥ 1`), on `[TABLE_LO, U_BIG]`. Each piece is checked against
/// direct evaluation at interior points and split until it agrees.
#[derive(Debug)]
pub struct Table {
    x0: f64,
    /// Pieces per octave of `u`, each `(a, b, coefficients)`.
    octaves: Vec<Vec<(f64, f64, Vec<f64>)>>,
}

const TABLE_LO: f64 = 1e-6;
const CHEB_DEG: usize = 18;

fn cheb_coeffs(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Vec<f64> {
    let n = CHEB_DEG + 1;
    let vals: Vec<f64> = (0..n)
        .map(|k| {
            let z = (PI * (k as f64 + 0.5) / n as f64).cos();
            f(0.5 * (a + b) + 0.5 * (b - a) * z)
        })
        .collect();
    (0..n)
        .map(|j| {
            let s: f64 = (0..n)
                .map(|k| vals[k] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                .sum();
            2.0 * s / n as f64
        })
        .collect()
}

fn clenshaw(c: &[f64], a: f64, b: f64, x: f64) -> f64 {
    let z = (2.0 * x - a - b) / (b - a);
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let t = 2.0 * z * b1 - b2 + ck;
        b2 = b1;
        b1 = t;
    }
    z * b1 - b2 + 0.5 * c[0]
}

impl Table {
    fn cached(k: &StableKernel) -> Arc<Table> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Table>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = k.beta.to_bits();
        if let Some(t) = cache.lock().unwrap().get(&key) {
            return t.clone();
        }
        let t = Arc::new(Table::build(k));
        cache.lock().unwrap().entry(key).or_insert(t).clone()
    }

    fn build(k: &StableKernel) -> Table {
        let x0 = TABLE_LO.ln();
        let n_oct = ((U_BIG.ln() - x0) / LN_2).ceil() as usize;
        let target = |x: f64| -> f64 {
            let u = x.exp();
            let (phi, psi) = k.phi_psi_direct(u);
            if u < 1.0 {
                psi / (u * u)
            } else {
                phi
            }
        };
        // ψ/u² ≈ m2/2 below 1, φ ≤ c above, so one absolute scale serves both
        let tol = 2e-13 * k.c.max(k.m2);
        let octaves = (0..n_oct)
            .into_par_iter()
            .map(|i| {
                let a = x0 + i as f64 * LN_2;
                let mut pending = vec![(a, a + LN_2, 0usize)];
                let mut done = Vec::new();
                while let Some((a, b, depth)) = pending.pop() {
                    // u = 1 is a switch of representation
                    if a < 0.0 && b > 0.0 {
                        pending.push((a, 0.0, depth));
                        pending.push((0.0, b, depth));
                        continue;
                    }
                    let c = cheb_coeffs(&target, a, b);
                    let ok = depth >= 8
                        || [0.13, 0.37, 0.61, 0.89].iter().all(|f| {
                            let x = a + f * (b - a);
                            (clenshaw(&c, a, b, x) - target(x)).abs() <= tol
                        });
                    if ok {
                        done.push((a, b, c));
                    } else {
                        let m = 0.5 * (a + b);
                        pending.push((a, m, depth + 1));
                        pending.push((m, b, depth + 1));
                    }
                }
                done.sort_by(|p, q| p.0.total_cmp(&q.0));
                done
            })
            .collect();
        Table { x0, octaves }
    }

    fn eval(&self, u: f64, c: f64) -> Option<(f64, f64)> {
        if u < TABLE_LO {
            return None;
        }
        let x = u.ln();
        let i = ((x - self.x0) / LN_2) as usize;
        let oct = self.octaves.get(i)?;
        let piece = oct.iter().find(|p| x <= p.1).or(oct.last())?;
        let h = clenshaw(&piece.2, piece.0, piece.1, x);
        Some(if piece.1 <= 0.0 {
            let psi = h * u * u;
            (c - psi, psi)
        } else {
            (h, c - h)
        })
    }
}

/// `∫_ℝ y^{2k} e^{-|y|^β} dy = 2Γ((2k+1)/β)/β`.
pub fn moment(beta: f64, k: usize) -> f64 {
    2.0 * (ln_gamma((2 * k + 1) as f64 / beta).exp()) / beta
}

/// `∫_0^∞ f(x) dx` with `x = scale · exp(π/2 · sinh t)`, halving the step until two
/// levels agree to `abs_tol`.
pub fn exp_sinh<F: Fn(f64) -> f64>(f: &F, scale: f64, abs_tol: f64) -> f64 {
    let node = |t: f64| -> f64 {
        let e = FRAC_PI_2 * t.sinh();
        let x = scale * e.exp();
        if !x.is_finite() || x == 0.0 {
            return 0.0;
        }
        let w = FRAC_PI_2 * t.cosh() * x;
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    const T_MAX: f64 = 6.0;
    // one sided sweep from t0 in steps of `step`, stopping once terms are negligible
    let sweep = |t0: f64, step: f64| -> f64 {
        let mut sum = 0.0;
        let mut small = 0;
        let mut t = t0;
        while t.abs() <= T_MAX {
            let v = node(t);
            sum += v;
            if v.abs() < 1e-19 * sum.abs().max(f64::MIN_POSITIVE) {
                small += 1;
                if small >= 3 && t.abs() > 3.0 {
                    break;
                }
            } else {
                small = 0;
            }
            t += step;
        }
        sum
    };
    let mut h = 0.5;
    let mut total = node(0.0) + sweep(h, h) + sweep(-h, -h);
    let mut estimate = total * h;
    for level in 0..8 {
        h *= 0.5;
        let odd = sweep(h, 2.0 * h) + sweep(-h, -2.0 * h);
        total += odd;
        let next = total * h;
        let diff = (next - estimate).abs();
        estimate = next;
        if level >= 1 && diff <= abs_tol {
            break;
        }
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gk;

    /// Independent oracle: `∫_ℝ (1 − cos uy) e^{-|y|^β} dy` on the real line,
    /// split into half periods.
    fn psi_real_line(beta: f64, u: f64) -> f64 {
        let ymax = 45f64.powf(1.0 / beta);
        let half = PI / u;
        let n = ((ymax / half).ceil() as usize).max(8);
        let mut breaks: Vec<f64> = (0..=n).map(|i| i as f64 * ymax / n as f64).collect();
        let first = breaks[1];
        for e in 1..=14 {
            breaks.insert(1, first * 10f64.powi(-e));
        }
        let r = gk::integrate(
            &|y: f64| 2.0 * (1.0 - (u * y).cos()) * (-y.powf(beta)).exp(),
            &breaks,
            1e-15,
            1e-13,
            200_000,
        );
        r.value
    }

    #[test]
    fn general_route_matches_gauss_closed_form() {
        let g = StableKernel::general(2.0);
        let c = StableKernel::new(2.0);
        for &u in &[1e-6, 1e-3, 0.1, 0.7, 1.0, 2.5, 6.0, 12.0, 40.0, 300.0] {
            let (p1, s1) = g.phi_psi(u);
            let (p2, s2) = c.phi_psi(u);
            assert!((p1 - p2).abs() < 1e-12, "phi u={u}: {p1} vs {p2}");
            assert!((s1 - s2).abs() <= 1e-11 * s2.max(1e-300) + 1e-14, "psi u={u}: {s1} vs {s2}");
        }
    }

    #[test]
    fn general_route_matches_laplace_closed_form() {
        let g = StableKernel::general(1.0);
        let c = StableKernel::new(1.0);
        for &u in &[1e-7, 1e-4, 0.05, 0.5, 0.99, 1.0, 3.0, 50.0, 1e4, 1e7] {
            let (p1, s1) = g.phi_psi(u);
            let (p2, s2) = c.phi_psi(u);
            assert!((p1 - p2).abs() < 1e-12, "phi u={u}: {p1} vs {p2}");
            assert!((s1 - s2).abs() <= 1e-10 * s2 + 1e-14, "psi u={u}: {s1} vs {s2}");
        }
    }

    #[test]
    fn matches_real_line_oracle() {
        for &beta in &[0.3, 0.7, 1.5, 2.7, 3.5] {
            let k = StableKernel::new(beta);
            for &u in &[0.02, 0.3, 1.0, 4.0, 15.0] {
                let expect = psi_real_line(beta, u);
                let (_, psi) = k.phi_psi(u);
                assert!(
                    (psi - expect).abs() < 1e-9 * k.c,
                    "beta={beta} u={u}: {psi} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn table_matches_direct_evaluation() {
        for &beta in &[0.25, 0.9, 1.7, 3.3, 5.0] {
            let k = StableKernel::new(beta);
            let mut u = 1.1e-6;
            while u < U_BIG {
                let (p1, s1) = k.phi_psi(u);
                let (p2, s2) = k.phi_psi_direct(u);
                assert!((p1 - p2).abs() <= 1e-12 * k.c, "beta={beta} u={u}");
                assert!(
                    (s1 - s2).abs() <= 1e-12 * s2.max(k.m2 * u * u).min(k.c) + 1e-15 * k.c,
                    "beta={beta} u={u}: {s1} vs {s2}"
                );
                u *= 1.37;
            }
        }
    }

    #[test]
    fn moments() {
        // β = 2: ∫ y² e^{-y²} = √π/2, ∫ y⁴ e^{-y²} = 3√π/4
        let k = StableKernel::new(2.0);
        assert!((k.m2 - PI.sqrt() / 2.0).abs() < 1e-14);
        assert!((k.m4 - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert!((k.c - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn phi_bounded_by_two_over_u() {
        for &beta in &[0.4, 1.3, 2.5] {
            let k = StableKernel::new(beta);
            for &u in &[2.0, 10.0, 1e3, 1e6] {
                let (phi, _) = k.phi_psi(u);
                assert!(phi.abs() <= 2.0 / u + 1e-13, "beta={beta} u={u} phi={phi}");
            }
        }
    }
}
