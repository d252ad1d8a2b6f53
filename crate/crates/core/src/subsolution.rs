//! The analytic comparison family.
//!
//! The profile is pieced from an exponential and a rational branch,
//!
//! ```text
//! φ(ξ) = (2λ/(d e^d))(e^{dξ} - 1)   for ξ < 1,
//! φ(ξ) = 1 - a_λ/(ξ - b_λ)          for ξ ≥ 1,
//! ```
//!
//! glued C¹ at ξ = 1 by the choice of the root d: both branches take the
//! value λ and the slope 2λ there.  The full comparison function is
//!
//! ```text
//! w̲(s,t) = A(t)·φ(s/B(t))   on [0, K√B(t)],
//! w̲(s,t) = D(t)·s + E(t)    on (K√B(t), Rⁿ],
//! ```
//!
//! with the time coefficients A, D, E, N driven by the collapse function
//! `B(t) = (B₀^{1/(2n)} - κt/(2n))^{2n}`.  All jets here are closed-form;
//! time derivatives come from A', B', D' rather than differencing, because
//! the sign certificates need exact signs.

use crate::params::{CertifiedParams, ProblemParams};
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum SubsolutionError {
    NegativeCoordinate { xi: f64 },
    OutOfDomain { what: &'static str, value: f64, max: f64 },
    CoefficientBound { bound: &'static str, value: f64, cap: f64 },
}

impl fmt::Display for SubsolutionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsolutionError::NegativeCoordinate { xi } => {
                write!(f, "profile coordinate must be nonnegative, got {xi}")
            }
            SubsolutionError::OutOfDomain { what, value, max } => {
                write!(f, "{what} = {value} outside [0, {max})")
            }
            SubsolutionError::CoefficientBound { bound, value, cap } => {
                write!(f, "coefficient precondition violated: {bound} (value {value}, cap {cap})")
            }
        }
    }
}

impl std::error::Error for SubsolutionError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileBranch {
    InnerExp,
    OuterRational,
}

/// Which one-sided second derivative to report at the profile kink ξ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    /// ξ < 1 → inner, ξ ≥ 1 → outer.
    Auto,
}

/// Value and first two derivatives of φ at a point.
#[derive(Debug, Clone, Copy)]
pub struct ProfileJet {
    pub value: f64,
    pub first: f64,
    /// Undefined exactly at ξ = 1; the side flag selects a one-sided value.
    pub second: f64,
    pub branch: ProfileBranch,
}

/// Evaluates the pieced profile.  At ξ = 1 the rational branch is evaluated
/// through `ξ - b_λ = (1-λ)/(2λ)` to avoid the cancellation that would
/// otherwise corrupt the gluing identities near λ = 1.
pub fn profile(lambda: f64, d: f64, xi: f64, side: Side) -> Result<ProfileJet, SubsolutionError> {
    if xi < 0.0 || !xi.is_finite() {
        return Err(SubsolutionError::NegativeCoordinate { xi });
    }
    let a = (1.0 - lambda) * (1.0 - lambda) / (2.0 * lambda);
    let b = (3.0 * lambda - 1.0) / (2.0 * lambda);
    let inner = |xi: f64| -> ProfileJet {
        let e = (d * (xi - 1.0)).exp();
        ProfileJet {
            value: 2.0 * lambda / (d * d.exp()) * ((d * xi).exp() - 1.0),
            first: 2.0 * lambda * e,
            second: 2.0 * d * lambda * e,
            branch: ProfileBranch::InnerExp,
        }
    };
    let outer = |den: f64| -> ProfileJet {
        ProfileJet {
            value: 1.0 - a / den,
            first: a / (den * den),
            second: -2.0 * a / (den * den * den),
            branch: ProfileBranch::OuterRational,
        }
    };
    let take_inner = match side {
        Side::Left => xi <= 1.0,
        Side::Right => xi < 1.0,
        Side::Auto => xi < 1.0,
    };
    if take_inner {
        Ok(inner(xi))
    } else if xi == 1.0 {
        // ξ - b_λ = (1-λ)/(2λ) exactly
        let den = (1.0 - lambda) / (2.0 * lambda);
        if den > 0.0 {
            Ok(outer(den))
        } else {
            // λ = 1: the rational branch degenerates to the constant 1;
            // value and slope are the analytic limits, curvature diverges
            Ok(ProfileJet {
                value: lambda,
                first: 2.0 * lambda,
                second: f64::NEG_INFINITY,
                branch: ProfileBranch::OuterRational,
            })
        }
    } else {
        Ok(outer(xi - b))
    }
}

/// Time coefficients of the comparison function at one instant.
///
/// Field names follow the construction: `a`, `d`, `e` are the amplitudes
/// A(t), D(t), E(t), `n` the shared denominator N(t).
#[derive(Debug, Clone, Copy)]
pub struct TimeCoefficients {
    pub a: f64,
    pub d: f64,
    pub e: f64,
    pub n: f64,
    pub a_prime: f64,
    pub d_prime: f64,
}

/// Evaluates A, D, E, N and the time derivatives A', D' at a collapse state
/// `(B, B')`.  `E` is formed as `m/ωₙ - Rⁿ·D` so the linear-piece boundary
/// identity holds to rounding.
pub fn time_coefficients(
    params: &CertifiedParams,
    problem: &ProblemParams,
    b_t: f64,
    b_prime_t: f64,
) -> Result<TimeCoefficients, SubsolutionError> {
    let rn = problem.s_max;
    let (a_l, b_l, k) = (params.a_lambda, params.b_lambda, params.k);
    if !(b_t > 0.0 && b_t < 1.0) {
        return Err(SubsolutionError::CoefficientBound { bound: "B in (0,1)", value: b_t, cap: 1.0 });
    }
    let sqrt_b = b_t.sqrt();
    if !(k * sqrt_b < rn) {
        return Err(SubsolutionError::CoefficientBound {
            bound: "K*sqrt(B) < R^n",
            value: k * sqrt_b,
            cap: rn,
        });
    }
    let cap = k * k / (4.0 * (a_l + b_l) * (a_l + b_l));
    if !(b_t <= cap) {
        return Err(SubsolutionError::CoefficientBound {
            bound: "B <= K^2/(4(a+b)^2)",
            value: b_t,
            cap,
        });
    }
    let m_om = problem.w_boundary();
    let n_t = k * k + a_l * rn - (a_l + b_l) * (2.0 * k * sqrt_b - b_l * b_t);
    let kb = k - b_l * sqrt_b;
    let a_t = m_om * kb * kb / n_t;
    let d_t = m_om * a_l / n_t;
    let e_t = m_om - rn * d_t;
    let ratio = k / sqrt_b - b_l;
    let a_prime = m_om * ratio * (a_l * k * k - a_l * b_l * rn) * b_prime_t / (n_t * n_t);
    let d_prime = m_om * a_l * (a_l + b_l) * ratio * b_prime_t / (n_t * n_t);
    Ok(TimeCoefficients { a: a_t, d: d_t, e: e_t, n: n_t, a_prime, d_prime })
}

/// Collapse state `(B(t), B'(t))` from the closed form
/// `B(t) = (B₀^{1/(2n)} - κt/(2n))^{2n}`, which solves
/// `B' = -κ B^{1-1/(2n)}`, `B(0) = B₀`.
pub fn collapse(b0: f64, kappa: f64, n: u32, t: f64) -> Result<(f64, f64), SubsolutionError> {
    let two_n = 2 * n as i32;
    let t_max = horizon(b0, kappa, n);
    if !(t >= 0.0 && t < t_max) {
        return Err(SubsolutionError::OutOfDomain { what: "t", value: t, max: t_max });
    }
    let base = b0.powf(1.0 / two_n as f64) - kappa / two_n as f64 * t;
    let b = base.powi(two_n);
    let b_prime = -kappa * base.powi(two_n - 1);
    Ok((b, b_prime))
}

/// Collapse horizon `T = (2n/κ)·B₀^{1/(2n)}`.
pub fn horizon(b0: f64, kappa: f64, n: u32) -> f64 {
    let two_n = 2.0 * n as f64;
    two_n / kappa * b0.powf(1.0 / two_n)
}

/// Region of the domain split, as seen by the certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    VeryInner,
    Intermediate,
    Outer,
    /// Within `1e-12·Rⁿ` of `s = B(t)` or `s = K√B(t)`; excluded from sign
    /// certification because the curvature jumps there.
    Kink,
}

/// Full jet of the comparison function at a point `(s, t)`.
#[derive(Debug, Clone, Copy)]
pub struct SubsolutionJet {
    pub value: f64,
    pub ds: f64,
    /// One-sided at the two kinks.
    pub dss: f64,
    pub dt: f64,
    pub region: Region,
}

/// Per-instant evaluator: the collapse state and time coefficients are
/// computed once, then jets are closed-form in `s`.  This is the hot path of
/// the certification scans.
#[derive(Debug, Clone, Copy)]
pub struct SubsolutionSlice {
    pub t: f64,
    pub b: f64,
    pub b_prime: f64,
    pub coeffs: TimeCoefficients,
    lambda: f64,
    d_root: f64,
    k: f64,
    rn: f64,
    kink_tol: f64,
}

impl SubsolutionSlice {
    pub fn new(
        params: &CertifiedParams,
        problem: &ProblemParams,
        t: f64,
    ) -> Result<Self, SubsolutionError> {
        let (b, b_prime) = collapse(params.b0, params.kappa, problem.n, t)?;
        let coeffs = time_coefficients(params, problem, b, b_prime)?;
        Ok(SubsolutionSlice {
            t,
            b,
            b_prime,
            coeffs,
            lambda: params.lambda,
            d_root: params.d,
            k: params.k,
            rn: problem.s_max,
            kink_tol: 1e-12 * problem.s_max,
        })
    }

    /// Location of the inner kink `s = B(t)`.
    pub fn inner_kink(&self) -> f64 {
        self.b
    }

    /// Location of the split `s = K√B(t)`.
    pub fn split(&self) -> f64 {
        self.k * self.b.sqrt()
    }

    /// Jet of the collapsing piece `A(t)·φ(s/B(t))`, valid on `[0, K√B(t)]`.
    /// The profile side only matters at `s = B(t)` where the curvature jumps.
    pub fn inner_piece_jet(&self, s: f64, side: Side) -> SubsolutionJet {
        let xi = s / self.b;
        let pj = profile(self.lambda, self.d_root, xi, side).expect("xi >= 0 inside the domain");
        let c = &self.coeffs;
        let ds = c.a * pj.first / self.b;
        let region = if s < self.b { Region::VeryInner } else { Region::Intermediate };
        SubsolutionJet {
            value: c.a * pj.value,
            ds,
            dss: c.a * pj.second / (self.b * self.b),
            // ∂ₜ[Aφ(s/B)] = A'φ - (Aφ'/B)·ξ·B'
            dt: c.a_prime * pj.value - ds * xi * self.b_prime,
            region,
        }
    }

    /// Jet of the linear piece `D(t)·s + E(t)`, valid on `[K√B(t), Rⁿ]`.
    pub fn outer_piece_jet(&self, s: f64) -> SubsolutionJet {
        let c = &self.coeffs;
        SubsolutionJet {
            value: c.d * s + c.e,
            ds: c.d,
            dss: 0.0,
            // E' = -Rⁿ D', so ∂ₜ(Ds+E) = -D'(Rⁿ - s)
            dt: -c.d_prime * (self.rn - s),
            region: Region::Outer,
        }
    }

    pub fn jet(&self, s: f64) -> Result<SubsolutionJet, SubsolutionError> {
        if !(s >= 0.0 && s <= self.rn) {
            return Err(SubsolutionError::OutOfDomain { what: "s", value: s, max: self.rn });
        }
        let split = self.split();
        let near_kink = (s - self.b).abs() <= self.kink_tol || (s - split).abs() <= self.kink_tol;
        let mut jet = if s <= split {
            let side = if s < self.b { Side::Left } else { Side::Right };
            self.inner_piece_jet(s, side)
        } else {
            self.outer_piece_jet(s)
        };
        if near_kink {
            jet.region = Region::Kink;
        }
        Ok(jet)
    }
}

/// Jet of the comparison function at a single point.
pub fn eval_subsolution(
    params: &CertifiedParams,
    problem: &ProblemParams,
    s: f64,
    t: f64,
) -> Result<SubsolutionJet, SubsolutionError> {
    SubsolutionSlice::new(params, problem, t)?.jet(s)
}

/// Mass floor `M_m(r) = ωₙ·w̲(rⁿ, 0)`: the smallest cumulative mass inside
/// radius `r` a starting density must carry.
pub fn mass_floor(
    params: &CertifiedParams,
    problem: &ProblemParams,
    r: f64,
) -> Result<f64, SubsolutionError> {
    if !(r >= 0.0 && r <= problem.r) {
        return Err(SubsolutionError::OutOfDomain { what: "r", value: r, max: problem.r });
    }
    let s = r.powi(problem.n as i32);
    let jet = eval_subsolution(params, problem, s.min(problem.s_max), 0.0)?;
    Ok(problem.omega_n * jet.value)
}

/// Generated starting density realizing the mass floor with equality:
/// `u₀(r) = n·∂ₛw̲(rⁿ, 0)`.
pub fn initial_data(
    params: &CertifiedParams,
    problem: &ProblemParams,
    r: f64,
) -> Result<f64, SubsolutionError> {
    if !(r >= 0.0 && r <= problem.r) {
        return Err(SubsolutionError::OutOfDomain { what: "r", value: r, max: problem.r });
    }
    let s = r.powi(problem.n as i32);
    let jet = eval_subsolution(params, problem, s.min(problem.s_max), 0.0)?;
    Ok(problem.dim() * jet.ds)
}

/// Optionally smoothed starting density: averages `u₀` over
/// `[r-radius, r+radius] ∩ [0, R]` with a 9-point Simpson rule.  The raw
/// generated data is only C⁰ at the two kinks; smoothing is off by default
/// and only matters when a C¹ density is wanted for external use.
pub fn initial_data_mollified(
    params: &CertifiedParams,
    problem: &ProblemParams,
    r: f64,
    radius: f64,
) -> Result<f64, SubsolutionError> {
    if radius <= 0.0 {
        return initial_data(params, problem, r);
    }
    let lo = (r - radius).max(0.0);
    let hi = (r + radius).min(problem.r);
    let npts = 9;
    let h = (hi - lo) / (npts - 1) as f64;
    let mut acc = 0.0;
    for i in 0..npts {
        let w = if i == 0 || i == npts - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * initial_data(params, problem, lo + h * i as f64)?;
    }
    Ok(acc * h / 3.0 / (hi - lo))
}
