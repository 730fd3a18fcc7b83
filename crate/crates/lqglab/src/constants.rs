//! LQG exponents and the closed-form kernels shared by every other module.
//!
//! Conventions: the heat kernel is `p_t(z) = exp(-|z|^2/(2t)) / (2*pi*t)`,
//! the Fourier transform is `F(f)(zeta) = integral exp(-2*pi*i*x.zeta) f(x) dx`,
//! so `F(p_t)(zeta) = exp(-2*pi^2*t*|zeta|^2)`.

use crate::error::{Error, Result};
use crate::field::Point;
use serde::{Deserialize, Serialize};

/// Exponent bundle for a fixed `gamma` in (0,2).
///
/// `d_gamma` is the LQG dimension, known in closed form only at
/// `gamma = sqrt(8/3)` (where it equals 4); for any other `gamma` the caller
/// must supply it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqgConstants {
    gamma: f64,
    d_gamma: f64,
    q: f64,
    xi: f64,
}

impl LqgConstants {
    /// `Q = 2/gamma + gamma/2`, `xi = gamma/d_gamma`.
    pub fn new(gamma: f64, d_gamma: f64) -> Result<Self> {
        if !(0.0..2.0).contains(&gamma) || gamma == 0.0 {
            return Err(Error::domain(format!(
                "gamma must lie in (0,2), got {gamma}"
            )));
        }
        if d_gamma <= 2.0 {
            return Err(Error::domain(format!(
                "d_gamma must exceed 2, got {d_gamma}"
            )));
        }
        Ok(LqgConstants {
            gamma,
            d_gamma,
            q: 2.0 / gamma + gamma / 2.0,
            xi: gamma / d_gamma,
        })
    }

    /// The one parameter value with a proven dimension: `d_{sqrt(8/3)} = 4`,
    /// hence `xi = 1/sqrt(6)`.
    pub fn sqrt_8_3() -> Self {
        LqgConstants::new((8.0f64 / 3.0).sqrt(), 4.0).expect("valid by construction")
    }

    /// Convenience constructor that only knows the dimension at
    /// `gamma = sqrt(8/3)` and refuses to guess elsewhere.
    pub fn with_known_dimension(gamma: f64) -> Result<Self> {
        let sqrt83 = (8.0f64 / 3.0).sqrt();
        if (gamma - sqrt83).abs() < 1e-12 {
            Ok(Self::sqrt_8_3())
        } else {
            Err(Error::config(format!(
                "d_gamma is not known in closed form for gamma = {gamma}; supply it explicitly"
            )))
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn d_gamma(&self) -> f64 {
        self.d_gamma
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// Whole-plane GFF covariance
/// `G(z,w) = log( max{|z|,1} * max{|w|,1} / |z-w| )`.
pub fn gff_covariance(z: Point, w: Point) -> Result<f64> {
    let dist = z.dist(w);
    if dist == 0.0 {
        return Err(Error::domain(
            "gff_covariance diverges at coincident points",
        ));
    }
    Ok((z.norm().max(1.0) * w.norm().max(1.0) / dist).ln())
}

/// `log max{|z|,1}`.
pub fn log_plus(z: Point) -> f64 {
    z.norm().max(1.0).ln()
}

/// Heat kernel `p_t(z)`.
pub fn heat_kernel(t: f64, z: Point) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::domain(format!("heat_kernel needs t > 0, got {t}")));
    }
    Ok((-z.norm_sq() / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t))
}

/// Slab covariance kernel `K_{alpha,beta}(x) = pi * integral_{alpha^2}^{beta^2} p_t(x) dt`.
///
/// Evaluated in closed form via the exponential integral:
/// `K = (E1(|x|^2/(2 beta^2)) - E1(|x|^2/(2 alpha^2))) / 2`,
/// with `K(0) = log(beta/alpha)` for `alpha > 0`.
pub fn slab_kernel(alpha: f64, beta: f64, x: Point) -> Result<f64> {
    if alpha < 0.0 || beta < alpha {
        return Err(Error::domain(format!(
            "slab_kernel needs 0 <= alpha <= beta, got ({alpha}, {beta})"
        )));
    }
    if !beta.is_finite() {
        return Err(Error::domain(
            "slab_kernel diverges for beta = infinity; the tail field exists only modulo constants",
        ));
    }
    if alpha == beta {
        return Ok(0.0);
    }
    let r2 = x.norm_sq();
    if r2 == 0.0 {
        if alpha == 0.0 {
            return Err(Error::domain(
                "slab_kernel(0, beta, 0) diverges (log singularity)",
            ));
        }
        return Ok((beta / alpha).ln());
    }
    let lo = exp_int_e1(r2 / (2.0 * beta * beta));
    let hi = if alpha == 0.0 {
        0.0
    } else {
        exp_int_e1(r2 / (2.0 * alpha * alpha))
    };
    Ok(0.5 * (lo - hi))
}

/// Spectral density of `h_{0,beta}`:
/// `(1 - exp(-2 pi^2 beta^2 |zeta|^2)) / (2 pi |zeta|^2)`, with the finite
/// limit `pi beta^2` at `zeta = 0`.
pub fn spectral_density_low(beta: f64, zeta: Point) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::domain(format!(
            "spectral_density_low needs beta > 0, got {beta}"
        )));
    }
    let s2 = zeta.norm_sq();
    let u = 2.0 * std::f64::consts::PI * std::f64::consts::PI * beta * beta * s2;
    if u < 1e-8 {
        // 1 - exp(-u) ~ u - u^2/2; density -> pi beta^2 (1 - u/2)
        return Ok(std::f64::consts::PI * beta * beta * (1.0 - 0.5 * u));
    }
    Ok((1.0 - (-u).exp()) / (2.0 * std::f64::consts::PI * s2))
}

/// Spectral density of `h_{beta,infinity}` away from the zero mode:
/// `exp(-2 pi^2 beta^2 |zeta|^2) / (2 pi |zeta|^2)`.
pub fn spectral_density_high(beta: f64, zeta: Point) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::domain(format!(
            "spectral_density_high needs beta > 0, got {beta}"
        )));
    }
    let s2 = zeta.norm_sq();
    if s2 == 0.0 {
        return Err(Error::domain(
            "spectral_density_high diverges at zeta = 0; treat the field modulo additive constant",
        ));
    }
    let u = 2.0 * std::f64::consts::PI * std::f64::consts::PI * beta * beta * s2;
    Ok((-u).exp() / (2.0 * std::f64::consts::PI * s2))
}

/// Smooth truncation of the log kernel around `center`.
///
/// Radial profile in `rho = |z - center|`:
/// zero for `rho <= theta_bar` or `rho >= 1/theta_bar`, equal to
/// `g(rho) = log(max{rho,1}/rho)` on `2 theta_bar <= rho <= 1/(2 theta_bar)`,
/// and a C^2 ramp in log-radius in between. Everywhere bounded above by the
/// recentered kernel `g(rho)`, which is nonnegative.
pub fn truncated_green(theta_bar: f64, z: Point, center: Point) -> Result<f64> {
    if !(0.0..0.5).contains(&theta_bar) || theta_bar == 0.0 {
        return Err(Error::domain(format!(
            "truncated_green needs theta_bar in (0, 1/2), got {theta_bar}"
        )));
    }
    let rho = z.dist(center);
    if rho <= theta_bar || rho >= 1.0 {
        // g itself vanishes for rho >= 1, and so does the cutoff profile.
        return Ok(0.0);
    }
    let g = -rho.ln(); // = log(max{rho,1}/rho) for rho < 1
    if rho >= 2.0 * theta_bar {
        return Ok(g);
    }
    // C^2 ramp in log-radius from 0 at theta_bar to g at 2*theta_bar.
    let u = (rho / theta_bar).ln() / std::f64::consts::LN_2;
    Ok(smootherstep(u) * g)
}

/// Quintic smoothstep `6u^5 - 15u^4 + 10u^3`, clamped; C^2 at both ends.
pub fn smootherstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (u * (u * 6.0 - 15.0) + 10.0)
    }
}

/// Exponential integral `E1(x) = integral_x^inf exp(-t)/t dt` for `x > 0`.
///
/// Power series for `x <= 1`, modified Lentz continued fraction otherwise;
/// relative accuracy around 1e-14 over the range used here.
pub fn exp_int_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 requires x > 0");
    const EULER: f64 = 0.577_215_664_901_532_9;
    if x <= 1.0 {
        // E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k * k!)
        let mut sum = 0.0f64;
        let mut term = 1.0f64;
        for k in 1..=40 {
            term *= -x / k as f64;
            let contrib = -term / k as f64;
            sum += contrib;
            if contrib.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        -EULER - x.ln() + sum
    } else {
        // Continued fraction E1(x) = exp(-x) * 1/(x+1- 1/(x+3- 4/(x+5- ...)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=200u32 {
            let a = -(i as f64) * (i as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        h * (-x).exp()
    }
}
