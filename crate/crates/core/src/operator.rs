//! The scalar parabolic operator and grid sign certificates.
//!
//! On the mass-accumulation variable the model reduces to `𝒫w = 0` with
//!
//! ```text
//! 𝒫w̃ = w̃ₜ - n^{p+1} s^{2-2/n} w̃ₛ^p w̃ₛₛ / √(w̃ₛ² + n² s^{2-2/n} w̃ₛₛ²)
//!          - n^q χ (w̃ - (μ/n)s) w̃ₛ^q / √(1 + s^{2/n-2}(w̃ - (μ/n)s)²)
//! ```
//!
//! A comparison profile is certified by scanning `𝒫w̲` over a tensor grid in
//! `(s, t)`, region by region, and checking the sign against a documented
//! tolerance: floating point cannot certify `≤ 0` exactly, so `≤ tol` with
//! `tol = tol_factor · (m/ωₙ)/T` stands in for it.  Points within a margin
//! of the two kinks are excluded; the curvature jumps there and the
//! inequalities are only claimed off that null set.

use crate::params::{check_well_defined, CertifiedParams, ProblemParams};
use crate::subsolution::{profile, Region, Side, SubsolutionError, SubsolutionJet, SubsolutionSlice};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorError {
    /// `𝒫` needs `w̃ₛ > 0` and `s ∈ (0, Rⁿ]`.
    Domain { what: &'static str, value: f64 },
    EmptyGrid { ns: usize, nt: usize },
    IllDefinedParams(String),
    Subsolution(SubsolutionError),
    OutsideInnerRegion { s: f64, limit: f64 },
}

impl fmt::Display for OperatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorError::Domain { what, value } => {
                write!(f, "operator domain violation: {what} = {value}")
            }
            OperatorError::EmptyGrid { ns, nt } => {
                write!(f, "certification grid must be nonempty (ns = {ns}, nt = {nt})")
            }
            OperatorError::IllDefinedParams(msg) => {
                write!(f, "parameters do not define a comparison profile: {msg}")
            }
            OperatorError::Subsolution(e) => write!(f, "{e}"),
            OperatorError::OutsideInnerRegion { s, limit } => {
                write!(f, "s = {s} outside the inner region (0, {limit})")
            }
        }
    }
}

impl std::error::Error for OperatorError {}

impl From<SubsolutionError> for OperatorError {
    fn from(e: SubsolutionError) -> Self {
        OperatorError::Subsolution(e)
    }
}

/// Evaluates `𝒫` on an arbitrary jet at `s`.
///
/// Both square roots are formed with `hypot`, which keeps the expression
/// finite when `s^{2/n-2}` is enormous near `s = 0` in dimensions `n ≥ 2`.
pub fn eval_p(problem: &ProblemParams, s: f64, jet: &SubsolutionJet) -> Result<f64, OperatorError> {
    if !(s > 0.0 && s <= problem.s_max) {
        return Err(OperatorError::Domain { what: "s", value: s });
    }
    if !(jet.ds > 0.0) {
        return Err(OperatorError::Domain { what: "ds", value: jet.ds });
    }
    let n = problem.dim();
    let sp_a = s.powf(2.0 - 2.0 / n); // s^{2-2/n}
    let sp_b = s.powf(1.0 - 1.0 / n); // its square root
    let diff_den = jet.ds.hypot(n * sp_b * jet.dss);
    let diffusion = n.powf(problem.p + 1.0) * sp_a * jet.ds.powf(problem.p) * jet.dss / diff_den;
    let g = jet.value - problem.mu / n * s;
    let chem_den = 1.0_f64.hypot(g / sp_b);
    let chemo = n.powf(problem.q) * problem.chi * g * jet.ds.powf(problem.q) / chem_den;
    Ok(jet.dt - diffusion - chemo)
}

/// Per-region scan summary.
#[derive(Debug, Clone, Copy, Serialize, Default)]
pub struct RegionExtremum {
    pub max_value: f64,
    pub arg_s: f64,
    pub arg_t: f64,
    pub points: u64,
}

impl RegionExtremum {
    fn absorb(&mut self, value: f64, s: f64, t: f64) {
        if self.points == 0 || value > self.max_value {
            self.max_value = value;
            self.arg_s = s;
            self.arg_t = t;
        }
        self.points += 1;
    }

    fn merge(&mut self, other: &RegionExtremum) {
        if other.points == 0 {
            return;
        }
        if self.points == 0 || other.max_value > self.max_value {
            self.max_value = other.max_value;
            self.arg_s = other.arg_s;
            self.arg_t = other.arg_t;
        }
        self.points += other.points;
    }
}

/// One point where the scan found `𝒫w̲` above tolerance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Violation {
    pub s: f64,
    pub t: f64,
    pub value: f64,
}

/// Result of a certification scan.  `passed` holds iff the violation list is
/// empty; the list is capped at 1000 entries with the total count kept.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub passed: bool,
    pub tolerance: f64,
    pub ns: usize,
    pub nt: usize,
    pub kink_margin_cells: f64,
    pub very_inner: RegionExtremum,
    pub intermediate: RegionExtremum,
    pub outer: RegionExtremum,
    pub violations: Vec<Violation>,
    pub violation_count: u64,
}

/// Grid layout and tolerance for [`certify_subsolution`].
#[derive(Debug, Clone, Copy)]
pub struct CertifyGrid {
    pub ns: usize,
    pub nt: usize,
    /// How many local cells around each kink to exclude.
    pub kink_margin_cells: f64,
    /// `tolerance = tol_factor · (m/ωₙ)/T`.
    pub tol_factor: f64,
}

impl Default for CertifyGrid {
    fn default() -> Self {
        CertifyGrid { ns: 2000, nt: 2000, kink_margin_cells: 3.0, tol_factor: 1e-10 }
    }
}

struct SliceScan {
    very_inner: RegionExtremum,
    intermediate: RegionExtremum,
    outer: RegionExtremum,
    violations: Vec<Violation>,
    violation_count: u64,
}

/// Scans `𝒫w̲` over a tensor grid: s geometric (ratio ~the grid's own, dense
/// near 0 where the inner region shrinks), t uniform on `[0, 0.999T]`.
/// Slices parallelize over t; the merge is a deterministic in-order fold.
pub fn certify_subsolution(
    problem: &ProblemParams,
    params: &CertifiedParams,
    grid: &CertifyGrid,
) -> Result<CertificateReport, OperatorError> {
    if grid.ns == 0 || grid.nt == 0 {
        return Err(OperatorError::EmptyGrid { ns: grid.ns, nt: grid.nt });
    }
    check_well_defined(params, problem).map_err(|e| OperatorError::IllDefinedParams(e.to_string()))?;

    let t_end = 0.999 * params.horizon;
    // resolve the inner region at the final instant
    let b_end = {
        let base = params.b0.powf(1.0 / (2.0 * problem.dim()))
            - params.kappa / (2.0 * problem.dim()) * t_end;
        base.powi(2 * problem.n as i32)
    };
    let s_min = (1e-3 * b_end).max(1e-280);
    let s_max = problem.s_max * (1.0 - 1e-9);
    let ln_ratio = (s_max / s_min).ln() / (grid.ns - 1).max(1) as f64;
    let s_nodes: Vec<f64> = (0..grid.ns)
        .map(|i| s_min * (ln_ratio * i as f64).exp())
        .collect();
    // local spacing factor: geometric grid has Δs ≈ s·(e^{ln_ratio} - 1)
    let cell = ln_ratio.exp_m1();
    let tolerance = grid.tol_factor * problem.w_boundary() / params.horizon;

    let scans: Vec<Result<SliceScan, OperatorError>> = (0..grid.nt)
        .into_par_iter()
        .map(|j| {
            let t = if grid.nt == 1 {
                0.0
            } else {
                t_end * j as f64 / (grid.nt - 1) as f64
            };
            let slice = SubsolutionSlice::new(params, problem, t)?;
            let kinks = [slice.inner_kink(), slice.split()];
            let mut out = SliceScan {
                very_inner: RegionExtremum::default(),
                intermediate: RegionExtremum::default(),
                outer: RegionExtremum::default(),
                violations: Vec::new(),
                violation_count: 0,
            };
            for &s in &s_nodes {
                let margin = grid.kink_margin_cells * cell;
                if kinks.iter().any(|&k| (s - k).abs() <= margin * k.max(s)) {
                    continue;
                }
                let jet = slice.jet(s)?;
                let bucket = match jet.region {
                    Region::VeryInner => &mut out.very_inner,
                    Region::Intermediate => &mut out.intermediate,
                    Region::Outer => &mut out.outer,
                    Region::Kink => continue,
                };
                let value = eval_p(problem, s, &jet)?;
                bucket.absorb(value, s, t);
                if value > tolerance {
                    out.violation_count += 1;
                    if out.violations.len() < 1000 {
                        out.violations.push(Violation { s, t, value });
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let mut report = CertificateReport {
        passed: true,
        tolerance,
        ns: grid.ns,
        nt: grid.nt,
        kink_margin_cells: grid.kink_margin_cells,
        very_inner: RegionExtremum::default(),
        intermediate: RegionExtremum::default(),
        outer: RegionExtremum::default(),
        violations: Vec::new(),
        violation_count: 0,
    };
    for scan in scans {
        let scan = scan?;
        report.very_inner.merge(&scan.very_inner);
        report.intermediate.merge(&scan.intermediate);
        report.outer.merge(&scan.outer);
        report.violation_count += scan.violation_count;
        for v in scan.violations {
            if report.violations.len() < 1000 {
                report.violations.push(v);
            }
        }
    }
    report.passed = report.violation_count == 0;
    Ok(report)
}

/// The two inner-region terms of the decomposition
/// `𝒫w_in = A'φ + (Aφ'/B)(-ξB' + J₁ + J₂)`.
#[derive(Debug, Clone, Copy)]
pub struct RegionTerms {
    pub j1: f64,
    pub j2: f64,
    pub xi: f64,
}

/// Evaluates J₁, J₂ at an inner-region point `s ∈ (0, K√B(t)) \ {B(t)}`.
///
/// ```text
/// J₁ = -n^{p+1} ξ^{2-2/n} φ'' / √(B^{4/n-2} φ'² + n² B^{2/n-2} ξ^{2-2/n} φ''²) · (Aφ'/B)^{p-1}
/// J₂ = -n^q χ (Aφ - (μ/n)Bξ) / √(1 + B^{2/n-2} ξ^{2/n-2} (Aφ - (μ/n)Bξ)²) · (Aφ'/B)^{q-1}
/// ```
///
/// (The first square root carries φ'²; substituting the inner jet into `𝒫`
/// confirms the power, and the reconstruction identity below is the test.)
pub fn region_terms(
    problem: &ProblemParams,
    params: &CertifiedParams,
    s: f64,
    t: f64,
) -> Result<RegionTerms, OperatorError> {
    let slice = SubsolutionSlice::new(params, problem, t)?;
    let split = slice.split();
    let b = slice.inner_kink();
    let tol = 1e-12 * problem.s_max;
    if !(s > 0.0 && s < split) || (s - b).abs() <= tol {
        return Err(OperatorError::OutsideInnerRegion { s, limit: split });
    }
    let n = problem.dim();
    let xi = s / b;
    let side = if s < b { Side::Left } else { Side::Right };
    let pj = profile(params.lambda, params.d, xi, side)?;
    let w_slope = slice.coeffs.a * pj.first / b;
    let xi_pow = xi.powf(2.0 - 2.0 / n);
    let den1 = (b.powf(2.0 / n - 1.0) * pj.first)
        .hypot(n * b.powf(1.0 / n - 1.0) * xi.powf(1.0 - 1.0 / n) * pj.second);
    let j1 = -n.powf(problem.p + 1.0) * xi_pow * pj.second / den1
        * w_slope.powf(problem.p - 1.0);
    let z = slice.coeffs.a * pj.value - problem.mu / n * b * xi;
    let den2 = 1.0_f64.hypot(b.powf(1.0 / n - 1.0) * xi.powf(1.0 / n - 1.0) * z);
    let j2 = -n.powf(problem.q) * problem.chi * z / den2 * w_slope.powf(problem.q - 1.0);
    Ok(RegionTerms { j1, j2, xi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{select_parameters, N1Feasibility, Selection};
    use crate::subsolution::eval_subsolution;

    fn demo(n: u32) -> (ProblemParams, CertifiedParams) {
        let problem = if n == 1 {
            ProblemParams::new(1, 1.0, 2.0, 1.0, 1.0, 4.0 / 3.0_f64.sqrt()).unwrap()
        } else {
            ProblemParams::new(2, 1.0, 1.0, 1.0, 2.0, 2.0 * std::f64::consts::PI).unwrap()
        };
        match select_parameters(&problem, N1Feasibility::Corrected).unwrap() {
            Selection::Feasible { params, .. } => (problem, params),
            Selection::Infeasible { report } => panic!("infeasible: {report:?}"),
        }
    }

    fn jet(value: f64, ds: f64, dss: f64, dt: f64) -> SubsolutionJet {
        SubsolutionJet { value, ds, dss, dt, region: Region::Outer }
    }

    #[test]
    fn steady_profile_annihilated() {
        for n in [1u32, 2, 3] {
            let problem = ProblemParams::new(n, 1.3, 2.0, 1.5, 2.0, 3.0).unwrap();
            for &s in &[1e-6, 0.1, 0.9 * problem.s_max] {
                let w = problem.mu / problem.dim() * s;
                let v = eval_p(&problem, s, &jet(w, problem.mu / problem.dim(), 0.0, 0.0)).unwrap();
                assert!(v.abs() < 1e-14, "n = {n}, s = {s}: {v}");
            }
        }
    }

    #[test]
    fn hand_evaluated_parabola() {
        // n = 1, p = 1, χ = 0 surrogate: kill the drift term with μ-matched g
        // then 𝒫 = -(ds·dss)/√(ds²+dss²) = -4/√8 = -√2 at s = 1, w = s²
        let problem = ProblemParams::new(1, 2.0, 1e-300, 1.0, 1.0, 1.0).unwrap();
        let j = jet(1.0, 2.0, 2.0, 0.0);
        let v = eval_p(&problem, 1.0, &j).unwrap();
        let expected = -(2.0_f64).sqrt();
        // χ is tiny rather than zero; the drift contribution is ~1e-300
        assert!((v - expected).abs() < 1e-12, "{v}");
    }

    #[test]
    fn affine_in_dt() {
        let problem = ProblemParams::new(2, 1.0, 1.0, 1.0, 2.0, 1.0).unwrap();
        let j0 = jet(0.3, 1.0, -2.0, 0.0);
        let j1 = jet(0.3, 1.0, -2.0, 7.25);
        let v0 = eval_p(&problem, 0.5, &j0).unwrap();
        let v1 = eval_p(&problem, 0.5, &j1).unwrap();
        assert!((v1 - v0 - 7.25).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        let problem = ProblemParams::new(1, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(eval_p(&problem, 0.0, &jet(0.0, 1.0, 0.0, 0.0)).is_err());
        assert!(eval_p(&problem, 0.5, &jet(0.0, 0.0, 0.0, 0.0)).is_err());
        assert!(eval_p(&problem, 0.5, &jet(0.0, -1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn tiny_s_stays_finite_for_n2() {
        let problem = ProblemParams::new(2, 1.0, 1.0, 1.0, 2.0, 1.0).unwrap();
        let v = eval_p(&problem, 1e-250, &jet(0.2, 1.0, 0.5, 0.0)).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn reconstruction_identity_inner() {
        // 𝒫w_in == A'φ + (Aφ'/B)(-ξB' + J₁ + J₂) at sampled inner points
        let mut state: u64 = 42;
        let mut next = move || {
            state = state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            (z ^ (z >> 31)) as f64 / u64::MAX as f64
        };
        for n in [1u32, 2] {
            let (problem, params) = demo(n);
            let mut checked = 0;
            while checked < 1000 {
                let t = 0.995 * params.horizon * next();
                let slice = SubsolutionSlice::new(&params, &problem, t).unwrap();
                let split = slice.split();
                let s = split * (0.02 + 0.96 * next());
                if (s - slice.inner_kink()).abs() < 2e-12 * problem.s_max {
                    continue;
                }
                let terms = region_terms(&problem, &params, s, t).unwrap();
                let jet = slice.jet(s).unwrap();
                let lhs = eval_p(&problem, s, &jet).unwrap();
                let pj = profile(
                    params.lambda,
                    params.d,
                    terms.xi,
                    if s < slice.inner_kink() { Side::Left } else { Side::Right },
                )
                .unwrap();
                let w_slope = slice.coeffs.a * pj.first / slice.b;
                let rhs = slice.coeffs.a_prime * pj.value
                    + w_slope * (-terms.xi * slice.b_prime + terms.j1 + terms.j2);
                let scale = lhs.abs().max(1.0);
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * scale,
                    "n={n} s={s} t={t}: lhs {lhs} rhs {rhs}"
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn very_inner_term_signs() {
        for n in [1u32, 2] {
            let (problem, params) = demo(n);
            for i in 1..20 {
                let t = 0.9 * params.horizon * i as f64 / 20.0;
                let slice = SubsolutionSlice::new(&params, &problem, t).unwrap();
                let s = 0.5 * slice.inner_kink();
                let terms = region_terms(&problem, &params, s, t).unwrap();
                assert!(terms.j1 < 0.0, "J1 must be negative on the convex branch");
                assert!(terms.j2 < 0.0, "J2 must be negative under the positivity bound");
            }
        }
    }

    #[test]
    fn intermediate_j1_bound_n2() {
        let (problem, params) = demo(2);
        let n = problem.dim();
        for i in 0..25 {
            let t = 0.99 * params.horizon * i as f64 / 25.0;
            let slice = SubsolutionSlice::new(&params, &problem, t).unwrap();
            for frac in [0.05, 0.3, 0.7, 0.97] {
                let s = slice.inner_kink() * (1.0 + 1e-6)
                    + frac * (slice.split() * (1.0 - 1e-9) - slice.inner_kink() * (1.0 + 1e-6));
                let terms = region_terms(&problem, &params, s, t).unwrap();
                let pj = profile(params.lambda, params.d, terms.xi, Side::Right).unwrap();
                let w_slope = slice.coeffs.a * pj.first / slice.b;
                let bound = n.powf(problem.p)
                    * slice.b.powf(1.0 - 1.0 / n)
                    * terms.xi.powf(1.0 - 1.0 / n)
                    * w_slope.powf(problem.p - 1.0);
                assert!(terms.j1 <= bound * (1.0 + 1e-12), "{} vs {}", terms.j1, bound);
            }
        }
    }

    #[test]
    fn gradient_floor_on_intermediate() {
        for n in [1u32, 2] {
            let (problem, params) = demo(n);
            for i in 0..25 {
                let t = 0.999 * params.horizon * i as f64 / 25.0;
                let slice = SubsolutionSlice::new(&params, &problem, t).unwrap();
                for frac in [0.01, 0.5, 0.99] {
                    let s = slice.inner_kink()
                        + frac * (slice.split() - slice.inner_kink());
                    let jet = slice.jet(s).unwrap();
                    assert!(
                        jet.ds >= params.sigma * (1.0 - 1e-12),
                        "slope {} below floor {}",
                        jet.ds,
                        params.sigma
                    );
                }
            }
        }
    }

    #[test]
    fn very_inner_positivity() {
        // A φ(ξ) - (μ/n) B ξ > 0 for ξ ∈ (0,1) whenever B₀ clears its bound
        for n in [1u32, 2] {
            let (problem, params) = demo(n);
            for i in 0..20 {
                let t = 0.999 * params.horizon * i as f64 / 20.0;
                let slice = SubsolutionSlice::new(&params, &problem, t).unwrap();
                for j in 1..20 {
                    let xi = j as f64 / 20.0;
                    let s = xi * slice.inner_kink();
                    let jet = slice.jet(s).unwrap();
                    let gap = jet.value - problem.mu / problem.dim() * s;
                    assert!(gap > 0.0, "n={n} t={t} xi={xi}: {gap}");
                }
            }
        }
    }

    #[test]
    fn certificate_passes_and_controls_fail() {
        for n in [1u32, 2] {
            let (problem, params) = demo(n);
            let grid = CertifyGrid { ns: 220, nt: 160, ..CertifyGrid::default() };
            let report = certify_subsolution(&problem, &params, &grid).unwrap();
            assert!(
                report.passed,
                "n={n} max inner {:?} intermediate {:?} outer {:?}",
                report.very_inner, report.intermediate, report.outer
            );
            // rate pushed past every bound must produce violations
            let mut bad = params;
            bad.kappa *= 10.0;
            bad.horizon = 2.0 * problem.dim() / bad.kappa
                * bad.b0.powf(1.0 / (2.0 * problem.dim()));
            let report = certify_subsolution(&problem, &bad, &grid).unwrap();
            assert!(!report.passed, "n={n}: tenfold rate must violate");
            assert!(report.violation_count >= 1);
        }
    }

    #[test]
    fn certificate_rejects_empty_grid_and_broken_params() {
        let (problem, params) = demo(1);
        let mut grid = CertifyGrid::default();
        grid.ns = 0;
        assert!(matches!(
            certify_subsolution(&problem, &params, &grid),
            Err(OperatorError::EmptyGrid { .. })
        ));
        let mut broken = params;
        broken.b0 = 2.0; // outside (0,1): profile undefined
        assert!(matches!(
            certify_subsolution(&problem, &broken, &CertifyGrid::default()),
            Err(OperatorError::IllDefinedParams(_))
        ));
    }

    #[test]
    fn certificate_stable_under_refinement() {
        let (problem, params) = demo(2);
        let coarse = certify_subsolution(
            &problem,
            &params,
            &CertifyGrid { ns: 150, nt: 120, ..CertifyGrid::default() },
        )
        .unwrap();
        let fine = certify_subsolution(
            &problem,
            &params,
            &CertifyGrid { ns: 300, nt: 240, ..CertifyGrid::default() },
        )
        .unwrap();
        // refinement may move each regional max but not past the tolerance
        for (c, f) in [
            (&coarse.very_inner, &fine.very_inner),
            (&coarse.intermediate, &fine.intermediate),
            (&coarse.outer, &fine.outer),
        ] {
            assert!(c.max_value <= coarse.tolerance);
            assert!(f.max_value <= fine.tolerance);
        }
    }

    #[test]
    fn eval_p_matches_subsolution_eval() {
        let (problem, params) = demo(2);
        let t = 0.2 * params.horizon;
        let slice = SubsolutionSlice::new(&params, &problem, t).unwrap();
        let s = 0.7 * slice.inner_kink();
        let from_slice = slice.jet(s).unwrap();
        let from_scalar = eval_subsolution(&params, &problem, s, t).unwrap();
        assert_eq!(from_slice.value.to_bits(), from_scalar.value.to_bits());
        assert_eq!(from_slice.dt.to_bits(), from_scalar.dt.to_bits());
    }
}
