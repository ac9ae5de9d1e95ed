//! Tanh-series nonlinearities σ = C + Σ c_s tanh(α(· − s)), their poles,
//! self-avoiding shift sets and the ε-approximation of a target activation.

use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::eval::Builtin;

/// Beyond this |α(x − s)| a term's tanh is ±1 to double precision.
const SATURATION: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SigmaError {
    #[error("invalid series: {0}")]
    BadSeries(String),
    #[error("invalid self-avoiding spec: {0}")]
    BadSpec(String),
    #[error("shift sequence is not strictly increasing at k = {0}")]
    NotMonotone(i64),
    #[error("pairs {0} and {1} coincide")]
    DuplicatePair(usize, usize),
    #[error("pair {0} has an even multiplier")]
    EvenMultiplier(usize),
    #[error("no point hit by exactly one copy in the search window")]
    NotFound,
    #[error("gaps must be finite and nonzero")]
    BadGaps,
    #[error("invalid target: {0}")]
    BadTarget(String),
    #[error("approximation infeasible: {0}")]
    Infeasible(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Error)]
#[error("point lies within {distance:e} of the pole {pole}")]
pub struct PoleProximity {
    pub pole: Complex64,
    pub distance: f64,
}

/// A finite tanh superposition. Shifts are strictly increasing and every
/// coefficient is nonzero; `tail_bound` records the ℓ¹ mass of the terms
/// dropped by truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct TanhSeries {
    c: f64,
    alpha: f64,
    shifts: Vec<f64>,
    coeffs: Vec<f64>,
    tail_bound: f64,
    // prefix[i] = coeffs[..i].sum()
    prefix: Vec<f64>,
}

impl TanhSeries {
    pub fn new(c: f64, alpha: f64, terms: Vec<(f64, f64)>, tail_bound: f64) -> Result<Self, SigmaError> {
        if !c.is_finite() {
            return Err(SigmaError::BadSeries("offset C must be finite".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(SigmaError::BadSeries("alpha must be positive and finite".into()));
        }
        if !(tail_bound >= 0.0 && tail_bound.is_finite()) {
            return Err(SigmaError::BadSeries("tail bound must be finite and non-negative".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, &(s, w)) in terms.iter().enumerate() {
            if !s.is_finite() || !w.is_finite() {
                return Err(SigmaError::BadSeries(format!("term {i} is not finite")));
            }
            if w == 0.0 {
                return Err(SigmaError::BadSeries(format!("term {i} has coefficient 0")));
            }
            if s <= prev {
                return Err(SigmaError::BadSeries(format!("shift of term {i} does not increase")));
            }
            prev = s;
        }
        let (shifts, coeffs): (Vec<f64>, Vec<f64>) = terms.into_iter().unzip();
        let mut prefix = Vec::with_capacity(coeffs.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for w in &coeffs {
            acc += w;
            prefix.push(acc);
        }
        Ok(TanhSeries { c, alpha, shifts, coeffs, tail_bound, prefix })
    }

    pub fn offset(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.shifts.iter().copied().zip(self.coeffs.iter().copied())
    }

    pub fn coeff_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// Length π/α of the imaginary period.
    pub fn imaginary_period(&self) -> f64 {
        PI / self.alpha
    }

    /// Index range of the terms that are not saturated at real part `x`.
    fn active(&self, x: f64) -> (usize, usize) {
        let r = SATURATION / self.alpha;
        let lo = self.shifts.partition_point(|&s| s < x - r);
        let hi = self.shifts.partition_point(|&s| s <= x + r);
        (lo, hi.max(lo))
    }

    /// Saturated terms left of `lo` contribute +c, right of `hi` contribute −c.
    fn saturated(&self, lo: usize, hi: usize) -> f64 {
        let total = self.prefix[self.prefix.len() - 1];
        self.prefix[lo] - (total - self.prefix[hi])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.active(x);
        let mut acc = self.c + self.saturated(lo, hi);
        for i in lo..hi {
            acc += self.coeffs[i] * (self.alpha * (x - self.shifts[i])).tanh();
        }
        acc
    }

    /// Holomorphic extension; fails within `pole_tol` of a pole.
    pub fn eval_complex(&self, z: Complex64, pole_tol: f64) -> Result<Complex64, PoleProximity> {
        let (lo, hi) = self.active(z.re);
        let period = self.imaginary_period();
        for i in lo..hi {
            let s = self.shifts[i];
            let n = (z.im / period - 0.5).round();
            let pole = Complex64::new(s, (n + 0.5) * period);
            let distance = (z - pole).norm();
            if distance <= pole_tol {
                return Err(PoleProximity { pole, distance });
            }
        }
        let mut acc = Complex64::new(self.c + self.saturated(lo, hi), 0.0);
        for i in lo..hi {
            let w = (z - self.shifts[i]) * self.alpha;
            acc += complex_tanh(w) * self.coeffs[i];
        }
        Ok(acc)
    }

    /// Nearest pole to `z` among all terms, with its distance.
    pub fn nearest_pole(&self, z: Complex64) -> Option<(Complex64, f64)> {
        let period = self.imaginary_period();
        let n = (z.im / period - 0.5).round();
        let im = (n + 0.5) * period;
        let i = self.shifts.partition_point(|&s| s < z.re);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < self.shifts.len())
            .map(|j| {
                let p = Complex64::new(self.shifts[j], im);
                (p, (z - p).norm())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// All poles s + (n + ½)π/α i inside the closed rectangle.
    pub fn poles(&self, window: &Window) -> Vec<Complex64> {
        let period = self.imaginary_period();
        let n_lo = (window.im_lo / period - 0.5).ceil() as i64;
        let n_hi = (window.im_hi / period - 0.5).floor() as i64;
        let mut out = Vec::new();
        for &s in &self.shifts {
            if s < window.re_lo || s > window.re_hi {
                continue;
            }
            for n in n_lo..=n_hi {
                out.push(Complex64::new(s, (n as f64 + 0.5) * period));
            }
        }
        out
    }
}

/// tanh on ℂ without overflow for large real parts.
pub fn complex_tanh(w: Complex64) -> Complex64 {
    if w.re.abs() > SATURATION {
        return Complex64::new(w.re.signum(), 0.0);
    }
    let (x2, y2) = (2.0 * w.re, 2.0 * w.im);
    let d = x2.cosh() + y2.cos();
    Complex64::new(x2.sinh() / d, y2.sin() / d)
}

/// Closed rectangle [re_lo, re_hi] × [im_lo, im_hi].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
}

/// Bijection ℤ → ℕ used in s_k = β(k + π^{−b(k)}).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BijectionRule {
    /// b(k) = 2k + 1 for k ≥ 0, b(k) = −2k for k < 0.
    #[default]
    OddNonNegative,
    /// b(k) = 2k for k ≥ 1, b(k) = 1 − 2k for k ≤ 0.
    EvenPositive,
}

impl BijectionRule {
    pub fn apply(&self, k: i64) -> u64 {
        match self {
            BijectionRule::OddNonNegative if k >= 0 => 2 * k as u64 + 1,
            BijectionRule::OddNonNegative => (-2 * k) as u64,
            BijectionRule::EvenPositive if k >= 1 => 2 * k as u64,
            BijectionRule::EvenPositive => (1 - 2 * k) as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfAvoidingSpec {
    pub beta: f64,
    pub k_min: i64,
    pub k_max: i64,
    pub rule: BijectionRule,
}

impl SelfAvoidingSpec {
    pub fn new(beta: f64, k_min: i64, k_max: i64) -> Self {
        SelfAvoidingSpec { beta, k_min, k_max, rule: BijectionRule::default() }
    }

    pub fn shift(&self, k: i64) -> f64 {
        let b = self.rule.apply(k);
        let decay = if b > 1000 { 0.0 } else { PI.powi(-(b as i32)) };
        self.beta * (k as f64 + decay)
    }
}

/// The shifts s_k, k_min ≤ k ≤ k_max, in increasing order.
pub fn generate_self_avoiding(spec: &SelfAvoidingSpec) -> Result<Vec<f64>, SigmaError> {
    if !(spec.beta > 0.0 && spec.beta < 1.0) {
        return Err(SigmaError::BadSpec(format!("beta = {} is outside (0, 1)", spec.beta)));
    }
    if spec.k_min > spec.k_max {
        return Err(SigmaError::BadSpec("empty index range".into()));
    }
    let mut out = Vec::with_capacity((spec.k_max - spec.k_min + 1) as usize);
    for k in spec.k_min..=spec.k_max {
        let s = spec.shift(k);
        if out.last().is_some_and(|&p| s <= p) {
            return Err(SigmaError::NotMonotone(k));
        }
        out.push(s);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfAvoidingHit {
    /// Index of the pair whose copy contains `t`.
    pub index: usize,
    pub t: f64,
}

/// Sorted copy (S − θ)/ω.
fn copy_of(shifts: &[f64], omega: f64, theta: f64) -> Vec<f64> {
    let mut c: Vec<f64> = shifts.iter().map(|s| (s - theta) / omega).collect();
    c.sort_by(f64::total_cmp);
    c
}

pub(crate) fn distance_to_sorted(sorted: &[f64], t: f64) -> f64 {
    let i = sorted.partition_point(|&p| p < t);
    let mut d = f64::INFINITY;
    if i < sorted.len() {
        d = d.min((sorted[i] - t).abs());
    }
    if i > 0 {
        d = d.min((sorted[i - 1] - t).abs());
    }
    d
}

/// A point of exactly one copy (S − θ_j)/ω_j inside `window`, farther than
/// `tol` from every other copy. Pairs are scanned in order, points in
/// increasing order; the first hit wins.
pub fn self_avoiding_witness(
    pairs: &[(i64, f64)],
    shifts: &[f64],
    window: (f64, f64),
    tol: f64,
) -> Result<SelfAvoidingHit, SigmaError> {
    for (i, &(w, th)) in pairs.iter().enumerate() {
        if w % 2 == 0 {
            return Err(SigmaError::EvenMultiplier(i));
        }
        for (j, &(w2, th2)) in pairs.iter().enumerate().skip(i + 1) {
            if w == w2 && th.to_bits() == th2.to_bits() {
                return Err(SigmaError::DuplicatePair(i, j));
            }
        }
    }
    let copies: Vec<Vec<f64>> = pairs.iter().map(|&(w, th)| copy_of(shifts, w as f64, th)).collect();
    for (j, copy) in copies.iter().enumerate() {
        for &t in copy.iter().filter(|&&t| t >= window.0 && t <= window.1) {
            let isolated = copies
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .all(|(_, other)| distance_to_sorted(other, t) > tol);
            if isolated {
                return Ok(SelfAvoidingHit { index: j, t });
            }
        }
    }
    Err(SigmaError::NotFound)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RelationVerdict {
    NoRelationUpTo(u32),
    /// Integer coefficients with the first nonzero entry positive.
    Relation(Vec<i64>),
}

/// Searches integer vectors m, max |m_i| ≤ height, for Σ m_i g_i = 0 up to
/// 1e−12 relative to Σ |m_i g_i|. Heights are tried in increasing order.
pub fn refute_rational_relation(gaps: &[f64], height: u32) -> Result<RelationVerdict, SigmaError> {
    if gaps.is_empty() || gaps.iter().any(|g| !g.is_finite() || *g == 0.0) {
        return Err(SigmaError::BadGaps);
    }
    let n = gaps.len();
    if n == 1 {
        return Ok(RelationVerdict::NoRelationUpTo(height));
    }
    let last = gaps[n - 1];
    for h in 1..=height as i64 {
        let mut m = vec![-h; n - 1];
        loop {
            let partial: f64 = m.iter().zip(gaps).map(|(&mi, g)| mi as f64 * g).sum();
            let need = (-partial / last).round();
            if need.abs() <= h as f64 {
                let mut full = m.clone();
                full.push(need as i64);
                let top = full.iter().map(|x| x.abs()).max().unwrap_or(0);
                if top == h {
                    let sum: f64 = full.iter().zip(gaps).map(|(&mi, g)| mi as f64 * g).sum();
                    let scale: f64 = full.iter().zip(gaps).map(|(&mi, g)| (mi as f64 * g).abs()).sum();
                    if sum.abs() <= 1e-12 * scale {
                        if full.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
                            full.iter_mut().for_each(|x| *x = -*x);
                        }
                        return Ok(RelationVerdict::Relation(full));
                    }
                }
            }
            // Odometer over [−h, h]^(n−1).
            let mut i = 0;
            loop {
                if i == m.len() {
                    break;
                }
                if m[i] < h {
                    m[i] += 1;
                    break;
                }
                m[i] = -h;
                i += 1;
            }
            if i == m.len() {
                break;
            }
        }
    }
    Ok(RelationVerdict::NoRelationUpTo(height))
}

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Piece {
    pub value: RealFn,
    pub derivative: RealFn,
}

/// A continuous, piecewise C¹ target ρ with integrable derivative.
///
/// Piece `i` covers `[breakpoints[i-1], breakpoints[i])`; the derivative at a
/// breakpoint is the right-hand one.
#[derive(Clone)]
pub struct TargetFunctionSpec {
    pub name: String,
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<Piece>,
    pub limit_neg_inf: f64,
    pub derivative_sup: Option<f64>,
    pub derivative_bv: Option<f64>,
}

impl std::fmt::Debug for TargetFunctionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetFunctionSpec")
            .field("name", &self.name)
            .field("breakpoints", &self.breakpoints)
            .field("limit_neg_inf", &self.limit_neg_inf)
            .field("derivative_sup", &self.derivative_sup)
            .field("derivative_bv", &self.derivative_bv)
            .finish()
    }
}

impl TargetFunctionSpec {
    pub fn new(
        name: impl Into<String>,
        breakpoints: Vec<f64>,
        pieces: Vec<Piece>,
        limit_neg_inf: f64,
    ) -> Result<Self, SigmaError> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(SigmaError::BadTarget("need one more piece than breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(SigmaError::BadTarget("breakpoints must be finite and strictly increasing".into()));
        }
        if !limit_neg_inf.is_finite() {
            return Err(SigmaError::BadTarget("limit at −∞ must be finite".into()));
        }
        let spec = TargetFunctionSpec {
            name: name.into(),
            breakpoints,
            pieces,
            limit_neg_inf,
            derivative_sup: None,
            derivative_bv: None,
        };
        spec.check_continuity(1e-9)?;
        Ok(spec)
    }

    pub fn from_builtin(b: Builtin) -> Self {
        let piece = Piece {
            value: Arc::new(move |x| b.apply(x)),
            derivative: Arc::new(move |x| b.derivative(x)),
        };
        let breakpoints = b.breakpoints();
        TargetFunctionSpec {
            name: b.to_string(),
            pieces: vec![piece; breakpoints.len() + 1],
            breakpoints,
            limit_neg_inf: b.limit_neg_inf(),
            derivative_sup: Some(b.derivative_sup()),
            derivative_bv: Some(b.derivative_bv()),
        }
    }

    fn piece(&self, x: f64) -> &Piece {
        &self.pieces[self.breakpoints.partition_point(|&b| b <= x)]
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.piece(x).value)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.piece(x).derivative)(x)
    }

    /// Checks that adjacent pieces agree at every breakpoint.
    pub fn check_continuity(&self, tol: f64) -> Result<(), SigmaError> {
        for (i, &b) in self.breakpoints.iter().enumerate() {
            let left = (self.pieces[i].value)(b);
            let right = (self.pieces[i + 1].value)(b);
            if (left - right).abs() > tol {
                return Err(SigmaError::BadTarget(format!(
                    "jump of {} at breakpoint {b}",
                    (left - right).abs()
                )));
            }
        }
        Ok(())
    }

    /// Grid estimates of (sup |ρ'|, total variation of ρ') on `window`,
    /// assuming ρ' decays to 0 at ±∞.
    pub fn estimate_norms(&self, window: (f64, f64), step: f64) -> (f64, f64) {
        let n = ((window.1 - window.0) / step).ceil().max(1.0) as usize;
        let mut sup: f64 = 0.0;
        let mut bv = self.derivative(window.0).abs();
        let mut prev = self.derivative(window.0);
        let mut next_bp = self.breakpoints.partition_point(|&b| b <= window.0);
        for i in 1..=n {
            let x = window.0 + (window.1 - window.0) * i as f64 / n as f64;
            // Count the jump at any breakpoint crossed by this step.
            while next_bp < self.breakpoints.len() && self.breakpoints[next_bp] <= x {
                let b = self.breakpoints[next_bp];
                let left = (self.pieces[next_bp].derivative)(b);
                let right = (self.pieces[next_bp + 1].derivative)(b);
                bv += (left - prev).abs() + (right - left).abs();
                sup = sup.max(left.abs()).max(right.abs());
                prev = right;
                next_bp += 1;
            }
            let d = self.derivative(x);
            bv += (d - prev).abs();
            sup = sup.max(d.abs());
            prev = d;
        }
        bv += prev.abs();
        (sup, bv)
    }

    /// ∫ |ρ'| over (−∞, b] (`left`) or [b, ∞).
    fn tail_mass(&self, b: f64, left: bool) -> f64 {
        // x = b ∓ u/(1−u) maps [0, 1) onto the half-line; midpoint rule.
        let n = 4000;
        let mut acc = 0.0;
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let off = u / (1.0 - u);
            let x = if left { b - off } else { b + off };
            acc += self.derivative(x).abs() / ((1.0 - u) * (1.0 - u));
        }
        acc / n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxReport {
    pub alpha: f64,
    pub beta: f64,
    pub mesh: f64,
    pub terms: usize,
    pub k_min: i64,
    pub k_max: i64,
    /// ‖ρ'‖_∞ · ln2/α.
    pub budget_smoothing: f64,
    /// mesh · (‖ρ'‖_∞ + ‖ρ'‖_BV).
    pub budget_riemann: f64,
    /// mesh · Σ|d|.
    pub budget_perturbation: f64,
    pub measured_sup_error: f64,
    pub grid_points: usize,
    pub tail_bound: f64,
    pub attempts: usize,
}

fn norms_of(target: &TargetFunctionSpec, window: (f64, f64)) -> (f64, f64) {
    match (target.derivative_sup, target.derivative_bv) {
        (Some(s), Some(b)) => (s, b),
        _ => {
            let wide = (window.0 - 50.0, window.1 + 50.0);
            let (s, b) = target.estimate_norms(wide, 1e-3);
            (target.derivative_sup.unwrap_or(s), target.derivative_bv.unwrap_or(b))
        }
    }
}

/// Smallest power of two α with ‖ρ'‖_∞ ln2/α < ε/3.
pub fn choose_alpha(derivative_sup: f64, epsilon: f64) -> f64 {
    let mut alpha = 1.0;
    while derivative_sup * LN_2 / alpha >= epsilon / 3.0 {
        alpha *= 2.0;
    }
    alpha
}

/// Riemann-sum series on S_β truncated to `window` ± 10/α (plus the
/// breakpoint hull). Returns the series, the spec used and the perturbation
/// mass mesh·Σ|d|.
pub fn build_series(
    target: &TargetFunctionSpec,
    alpha: f64,
    beta: f64,
    window: (f64, f64),
    epsilon: f64,
) -> Result<(TanhSeries, SelfAvoidingSpec, f64, f64), SigmaError> {
    let mut lo = window.0 - 10.0 / alpha;
    let mut hi = window.1 + 10.0 / alpha;
    if let (Some(&a), Some(&b)) = (target.breakpoints.first(), target.breakpoints.last()) {
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let k_min = (lo / beta).floor() as i64 - 1;
    let k_max = (hi / beta).ceil() as i64 + 1;
    let spec = SelfAvoidingSpec::new(beta, k_min - 1, k_max);
    let s = generate_self_avoiding(&spec)?;
    let mesh = s.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);

    let slopes: Vec<f64> = s[1..].iter().map(|&x| target.derivative(x)).collect();
    let flat = slopes.iter().filter(|&&d| d == 0.0).count();
    let d_mag = if flat > 0 { epsilon / (6.0 * mesh * flat as f64) } else { 0.0 };
    let mut sign = 1.0;
    let mut d_mass = 0.0;
    let mut terms = Vec::with_capacity(slopes.len());
    for (i, &slope) in slopes.iter().enumerate() {
        let gap = s[i + 1] - s[i];
        let d = if slope == 0.0 {
            sign = -sign;
            -sign * d_mag
        } else {
            0.0
        };
        d_mass += d.abs();
        let c = 0.5 * gap * (slope + d);
        if c == 0.0 {
            return Err(SigmaError::Infeasible(format!("coefficient at s = {} underflows", s[i + 1])));
        }
        terms.push((s[i + 1], c));
    }
    // Terms left of the kept range sit at tanh = +1 on the window and sum to
    // ρ(s_{k_min−1}) − ρ(−∞); right ones sit at −1 and cancel against C.
    let kept: f64 = terms.iter().map(|t| t.1).sum();
    let c0 = target.value(s[0]) + kept;
    let tail = 0.5 * (target.tail_mass(s[0], true) + target.tail_mass(s[s.len() - 1], false));
    let series = TanhSeries::new(c0, alpha, terms, tail)?;
    Ok((series, SelfAvoidingSpec::new(beta, k_min, k_max), mesh, mesh * d_mass))
}

/// Measured sup |σ − ρ| on a grid of the window (plus breakpoints inside it).
pub fn sup_error(series: &TanhSeries, target: &TargetFunctionSpec, window: (f64, f64), step: f64) -> (f64, usize) {
    let n = ((window.1 - window.0) / step).ceil().max(1.0) as usize;
    let mut xs: Vec<f64> = (0..=n).map(|i| window.0 + (window.1 - window.0) * i as f64 / n as f64).collect();
    xs.extend(target.breakpoints.iter().filter(|&&b| b >= window.0 && b <= window.1));
    let err = xs
        .par_iter()
        .map(|&x| (series.eval(x) - target.value(x)).abs())
        .reduce(|| 0.0, f64::max);
    (err, xs.len())
}

/// Three-budget construction of a tanh series with ‖σ − ρ‖ < ε on `window`.
pub fn approximate(
    target: &TargetFunctionSpec,
    epsilon: f64,
    window: (f64, f64),
) -> Result<(TanhSeries, ApproxReport), SigmaError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SigmaError::Infeasible(format!("epsilon = {epsilon} must be positive")));
    }
    if !(window.0 < window.1) || !window.0.is_finite() || !window.1.is_finite() {
        return Err(SigmaError::Infeasible("window must be a finite nonempty interval".into()));
    }
    let (sup, bv) = norms_of(target, window);
    if !sup.is_finite() || !bv.is_finite() {
        return Err(SigmaError::Infeasible("derivative norms are not finite".into()));
    }
    let alpha = choose_alpha(sup, epsilon);
    if alpha > 1e9 {
        return Err(SigmaError::Infeasible("smoothing scale out of range".into()));
    }
    let rate = sup + bv;
    // Every gap is at most β(1 + 1/π).
    let mut beta = 0.5;
    while beta * (1.0 + 1.0 / PI) * rate >= epsilon / 3.0 {
        beta *= 0.5;
    }
    const ATTEMPTS: usize = 5;
    let mut last_err = f64::NAN;
    for attempt in 1..=ATTEMPTS {
        let (series, spec, mesh, d_budget) = build_series(target, alpha, beta, window, epsilon)?;
        if mesh * rate >= epsilon / 3.0 {
            beta *= 0.5;
            continue;
        }
        let step = mesh.min(1.0 / alpha) / 4.0;
        let (err, points) = sup_error(&series, target, window, step);
        last_err = err;
        if err < epsilon {
            let report = ApproxReport {
                alpha,
                beta,
                mesh,
                terms: series.len(),
                k_min: spec.k_min,
                k_max: spec.k_max,
                budget_smoothing: sup * LN_2 / alpha,
                budget_riemann: mesh * rate,
                budget_perturbation: d_budget,
                measured_sup_error: err,
                grid_points: points,
                tail_bound: series.tail_bound(),
                attempts: attempt,
            };
            return Ok((series, report));
        }
        beta *= 0.5;
    }
    Err(SigmaError::Infeasible(format!(
        "measured error {last_err} still ≥ {epsilon} after {ATTEMPTS} refinements"
    )))
}

/// A series over a self-avoiding shift set whose coefficients follow the
/// Riemann rule for `shape`: c_k = ½ (s_k − s_{k−1}) ρ'(s_k), C = ρ(−∞) + Σ c.
pub fn self_avoiding_series(spec: &SelfAvoidingSpec, alpha: f64, shape: Builtin) -> Result<TanhSeries, SigmaError> {
    let prior = SelfAvoidingSpec { k_min: spec.k_min - 1, ..*spec };
    let s = generate_self_avoiding(&prior)?;
    let terms: Vec<(f64, f64)> = s
        .windows(2)
        .map(|w| (w[1], 0.5 * (w[1] - w[0]) * shape.derivative(w[1])))
        .collect();
    let c0 = shape.limit_neg_inf() + terms.iter().map(|t| t.1).sum::<f64>();
    TanhSeries::new(c0, alpha, terms, 0.0)
}

/// The α = π series used by the experiments: 21 logistic-weighted terms on
/// S_β with β = ½, k = −10..=10.
pub fn reference_series() -> TanhSeries {
    self_avoiding_series(&SelfAvoidingSpec::new(0.5, -10, 10), PI, Builtin::Logistic)
        .expect("reference spec is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> TanhSeries {
        TanhSeries::new(0.0, PI, vec![(0.0, 1.0)], 0.0).unwrap()
    }

    fn window() -> Window {
        Window { re_lo: -1.0, re_hi: 1.0, im_lo: 0.0, im_hi: 1.0 }
    }

    #[test]
    fn single_term_values() {
        let s = unit();
        assert_eq!(s.eval(0.0), 0.0);
        assert!((s.eval(20.0) - 1.0).abs() <= 1e-12);
        let err = s.eval_complex(Complex64::new(0.0, 0.5), 1e-9).unwrap_err();
        assert!((err.pole - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn saturated_eval_matches_naive_sum() {
        let s = reference_series();
        for i in 0..200 {
            let x = -30.0 + 0.3 * i as f64;
            let naive: f64 = s.offset() + s.terms().map(|(sh, c)| c * (s.alpha() * (x - sh)).tanh()).sum::<f64>();
            assert!((s.eval(x) - naive).abs() < 1e-14);
        }
    }

    #[test]
    fn series_rejects_bad_terms() {
        assert!(TanhSeries::new(0.0, PI, vec![(0.0, 0.0)], 0.0).is_err());
        assert!(TanhSeries::new(0.0, PI, vec![(1.0, 1.0), (0.0, 1.0)], 0.0).is_err());
        assert!(TanhSeries::new(0.0, 0.0, vec![(0.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn poles_in_window() {
        assert_eq!(unit().poles(&window()), vec![Complex64::new(0.0, 0.5)]);
        let shifted = TanhSeries::new(0.0, PI, vec![(1.0, 1.0)], 0.0).unwrap();
        assert_eq!(shifted.poles(&window()), vec![Complex64::new(1.0, 0.5)]);
        let fast = TanhSeries::new(0.0, 2.0 * PI, vec![(0.0, 1.0)], 0.0).unwrap();
        assert_eq!(fast.poles(&window()), vec![Complex64::new(0.0, 0.25), Complex64::new(0.0, 0.75)]);
    }

    #[test]
    fn imaginary_periods() {
        let p = |a: f64| TanhSeries::new(0.0, a, vec![(0.0, 1.0)], 0.0).unwrap().imaginary_period();
        assert_eq!(p(PI), 1.0);
        assert_eq!(p(2.0 * PI), 0.5);
        assert_eq!(p(1.0), PI);
    }

    #[test]
    fn pole_blow_up_smoke() {
        let s = reference_series();
        for pole in s.poles(&Window { re_lo: -2.0, re_hi: 2.0, im_lo: 0.0, im_hi: 1.0 }) {
            let near = s.eval_complex(pole + 1e-3, 1e-9).unwrap().norm();
            let far = s.eval_complex(pole + 1e-1, 1e-9).unwrap().norm();
            assert!(near > 10.0 * far, "pole {pole}: {near} vs {far}");
        }
    }

    #[test]
    fn self_avoiding_values() {
        let spec = SelfAvoidingSpec::new(0.5, 0, 1);
        let s = generate_self_avoiding(&spec).unwrap();
        // Default rule: b(0) = 1, b(1) = 3.
        assert!((s[0] - 0.5 / PI).abs() < 1e-15);
        assert!((s[1] - 0.5 * (1.0 + PI.powi(-3))).abs() < 1e-15);
        let alt = SelfAvoidingSpec { rule: BijectionRule::EvenPositive, ..spec };
        let s = generate_self_avoiding(&alt).unwrap();
        assert!((s[0] - 0.15915494309189535).abs() < 1e-12);
        assert!((s[1] - 0.5 * (1.0 + PI.powi(-2))).abs() < 1e-15);
        assert!((s[1] - 0.55066).abs() < 1e-5);
    }

    #[test]
    fn bijection_rules_are_injective_on_a_range() {
        for rule in [BijectionRule::OddNonNegative, BijectionRule::EvenPositive] {
            let mut seen: Vec<u64> = (-50..=50).map(|k| rule.apply(k)).collect();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), 101);
        }
    }

    #[test]
    fn singleton_and_distinct_gaps() {
        assert_eq!(generate_self_avoiding(&SelfAvoidingSpec::new(0.3, 4, 4)).unwrap().len(), 1);
        let s = generate_self_avoiding(&SelfAvoidingSpec::new(0.7, -1, 1)).unwrap();
        let gaps = [s[1] - s[0], s[2] - s[1], s[2] - s[0]];
        assert!(gaps[0] != gaps[1] && gaps[1] != gaps[2] && gaps[0] != gaps[2]);
        assert!(generate_self_avoiding(&SelfAvoidingSpec::new(1.0, 0, 1)).is_err());
    }

    #[test]
    fn witness_for_single_pair() {
        let s = [1.0 / (2.0 * PI)];
        let hit = self_avoiding_witness(&[(1, 0.0)], &s, (-5.0, 5.0), 1e-9).unwrap();
        assert_eq!(hit, SelfAvoidingHit { index: 0, t: s[0] });
    }

    #[test]
    fn witness_for_two_translates() {
        let s = generate_self_avoiding(&SelfAvoidingSpec::new(0.5, -20, 20)).unwrap();
        let pairs = [(1, 0.0), (1, 0.1)];
        let hit = self_avoiding_witness(&pairs, &s, (-5.0, 5.0), 1e-6).unwrap();
        // Brute-force recheck over both copies.
        let copies: Vec<Vec<f64>> = pairs.iter().map(|&(w, th)| s.iter().map(|x| (x - th) / w as f64).collect()).collect();
        let hits: Vec<usize> = (0..2)
            .filter(|&i| copies[i].iter().any(|&p| (p - hit.t).abs() <= 1e-12))
            .collect();
        assert_eq!(hits, vec![hit.index]);
        let other = 1 - hit.index;
        assert!(copies[other].iter().all(|&p| (p - hit.t).abs() > 1e-6));
    }

    #[test]
    fn witness_preconditions() {
        let s = [0.1];
        assert_eq!(
            self_avoiding_witness(&[(1, 0.0), (1, 0.0)], &s, (-5.0, 5.0), 1e-9),
            Err(SigmaError::DuplicatePair(0, 1))
        );
        assert_eq!(self_avoiding_witness(&[(2, 0.0)], &s, (-5.0, 5.0), 1e-9), Err(SigmaError::EvenMultiplier(0)));
        assert_eq!(self_avoiding_witness(&[(1, 0.0)], &s, (1.0, 5.0), 1e-9), Err(SigmaError::NotFound));
    }

    fn brute_relation(gaps: &[f64], h: i64) -> bool {
        // Exhaustive oracle over the full cube, no height ordering.
        let n = gaps.len();
        let total = (2 * h + 1).pow(n as u32);
        (0..total).any(|mut code| {
            let m: Vec<i64> = (0..n)
                .map(|_| {
                    let d = code % (2 * h + 1) - h;
                    code /= 2 * h + 1;
                    d
                })
                .collect();
            if m.iter().all(|&x| x == 0) {
                return false;
            }
            let sum: f64 = m.iter().zip(gaps).map(|(&a, g)| a as f64 * g).sum();
            let scale: f64 = m.iter().zip(gaps).map(|(&a, g)| (a as f64 * g).abs()).sum();
            sum.abs() <= 1e-12 * scale
        })
    }

    #[test]
    fn rational_relations() {
        assert_eq!(refute_rational_relation(&[1.0, 2.0], 10).unwrap(), RelationVerdict::Relation(vec![2, -1]));
        let sqrt2 = 2f64.sqrt();
        assert_eq!(refute_rational_relation(&[1.0, sqrt2], 50).unwrap(), RelationVerdict::NoRelationUpTo(50));
        assert!(!brute_relation(&[1.0, sqrt2], 50));
        let s = generate_self_avoiding(&SelfAvoidingSpec::new(0.5, -1, 2)).unwrap();
        let gaps: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(refute_rational_relation(&gaps, 20).unwrap(), RelationVerdict::NoRelationUpTo(20));
        assert!(!brute_relation(&gaps, 20));
        assert!(refute_rational_relation(&[1.0, 0.0], 3).is_err());
    }

    #[test]
    fn builtin_norms_match_estimates() {
        for b in Builtin::all_default() {
            let t = TargetFunctionSpec::from_builtin(b);
            let (sup, bv) = t.estimate_norms((-60.0, 60.0), 1e-3);
            assert!((sup - b.derivative_sup()).abs() < 1e-3 * b.derivative_sup().max(1.0), "{b}: sup {sup}");
            assert!((bv - b.derivative_bv()).abs() < 1e-2 * b.derivative_bv(), "{b}: bv {bv}");
        }
    }

    #[test]
    fn discontinuous_target_is_rejected() {
        let step = Piece { value: Arc::new(|_| 0.0), derivative: Arc::new(|_| 0.0) };
        let one = Piece { value: Arc::new(|_| 1.0), derivative: Arc::new(|_| 0.0) };
        assert!(TargetFunctionSpec::new("step", vec![0.0], vec![step, one], 0.0).is_err());
    }

    #[test]
    fn zero_epsilon_is_infeasible() {
        let t = TargetFunctionSpec::from_builtin(Builtin::ClippedRelu);
        assert!(matches!(approximate(&t, 0.0, (-20.0, 20.0)), Err(SigmaError::Infeasible(_))));
    }

    #[test]
    fn approximates_clipped_relu() {
        let t = TargetFunctionSpec::from_builtin(Builtin::ClippedRelu);
        let (series, report) = approximate(&t, 0.1, (-20.0, 20.0)).unwrap();
        assert!(report.measured_sup_error < 0.1);
        assert!(report.budget_smoothing < 0.1 / 3.0 && report.budget_riemann < 0.1 / 3.0);
        assert!(report.budget_perturbation < 0.1 / 3.0);
        assert!(series.coeffs().iter().all(|&c| c != 0.0));
        assert!(series.shifts().windows(2).all(|w| w[0] < w[1]));
        // Independent dense oracle at off-grid points.
        let worst = (0..40_001)
            .map(|i| -20.0 + i as f64 * 1e-3 + 3.7e-4)
            .map(|x| (series.eval(x) - t.value(x)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.1, "dense sup {worst}");
    }

    #[test]
    fn approximates_logistic() {
        let t = TargetFunctionSpec::from_builtin(Builtin::Logistic);
        let (series, report) = approximate(&t, 0.2, (-20.0, 20.0)).unwrap();
        assert!(report.measured_sup_error < 0.2);
        let worst = (0..4001)
            .map(|i| -20.0 + i as f64 * 1e-2 + 3.3e-3)
            .map(|x| (series.eval(x) - t.value(x)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.2);
    }

    #[test]
    fn finer_mesh_does_not_hurt() {
        for b in [Builtin::ClippedRelu, Builtin::Logistic, Builtin::Tanh] {
            let t = TargetFunctionSpec::from_builtin(b);
            let w = (-10.0, 10.0);
            let alpha = 8.0;
            let mut prev = f64::INFINITY;
            for beta in [0.25, 0.125, 0.0625] {
                let (s, ..) = build_series(&t, alpha, beta, w, 0.1).unwrap();
                let (err, _) = sup_error(&s, &t, w, 1e-3);
                assert!(err <= prev + 1e-6, "{b}: beta {beta} gave {err} after {prev}");
                prev = err;
            }
        }
    }

    #[test]
    fn reference_series_is_i_periodic() {
        let s = reference_series();
        assert!(s.len() >= 21);
        for k in 0..100 {
            let z = Complex64::new(-4.0 + 0.08 * k as f64, -0.4 + 0.008 * k as f64);
            let a = s.eval_complex(z, 1e-9).unwrap();
            let b = s.eval_complex(z + Complex64::new(0.0, 1.0), 1e-9).unwrap();
            assert!((a - b).norm() <= 1e-9);
        }
    }
}
