//! Bell-diagonal two-qubit states, the conditional entropy S(X|E) of the key
//! bit given the adversary, and its minimization over error-rate constraint
//! sets.
//!
//! States are diagonal in the Bell basis (Phi+, Phi-, Psi+, Psi-) with
//! weights lambda. The basis error rates are linear in the weights:
//! e_Z = l3 + l4, e_X = l2 + l4, e_Y = l2 + l3. For a purification held by
//! the adversary, S(X|E) after the key (Z) measurement has the closed form
//! 1 + h(e_Z) - H(lambda); [`conditional_entropy_xe`] instead assembles the
//! post-measurement classical-quantum state explicitly and diagonalizes it,
//! so the two routes check each other.
//!
//! [`min_sxe`] and the worst-case key term share one search kernel: BB84
//! cases reduce to closed forms or one-dimensional concave problems, the
//! six-state cases run a coarse grid plus coordinate descent over the error
//! rates. Results are memoized on rounded inputs so repeated optimizer calls
//! are cheap and bit-stable across thread schedules.

use crate::{real, ConstraintMode, Error, ProtocolKind, Real, Result};
use dashmap::DashMap;
use nalgebra::{Complex, DMatrix, RealField, SymmetricEigen};
use std::sync::OnceLock;

/// Weights may undershoot zero by at most this much before rejection.
pub const LAMBDA_TOL: f64 = 1e-12;
/// Allowed deviation of a weight/trace sum from one.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Allowed asymmetry |a_ij - conj(a_ji)| of a Hermitian operator.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Eigenvalues of a density operator may undershoot zero by this much.
pub const EIGENVALUE_CLAMP: f64 = 1e-10;

/// Validation tolerances are stated for f64; at lower precision they widen
/// to 100 ulps so states one rounding away from exact stay admissible.
fn vtol<T: Real>(base: f64) -> T {
    num_traits::Float::max(real(base), T::epsilon() * real(100.0))
}

/// A two-qubit state diagonal in the Bell basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BellDiagonalState<T> {
    lambda: [T; 4],
}

impl<T: Real> BellDiagonalState<T> {
    /// Validates weights: each >= -[`LAMBDA_TOL`] (tiny negatives clamp to
    /// zero), sum within [`NORMALIZATION_TOL`] of one.
    pub fn new(lambda: [T; 4]) -> Result<Self> {
        let mut l = lambda;
        let mut sum = T::zero();
        for v in &mut l {
            if !v.is_finite() || *v < -vtol::<T>(LAMBDA_TOL) {
                return Err(Error::InvalidState(format!(
                    "Bell weights must be >= -{LAMBDA_TOL}, got {lambda:?}"
                )));
            }
            *v = v.max(T::zero());
            sum = sum + *v;
        }
        if (sum - T::one()).abs() > vtol(NORMALIZATION_TOL) {
            return Err(Error::InvalidState(format!(
                "Bell weights must sum to 1 within {NORMALIZATION_TOL}, got sum {sum}"
            )));
        }
        Ok(Self { lambda: l })
    }

    /// Builds the state with error rates (e_Z, e_X, e_Y); fails when the
    /// implied weights are not a distribution.
    pub fn from_error_rates(e_z: T, e_x: T, e_y: T) -> Result<Self> {
        let half = real::<T>(0.5);
        Self::new([
            T::one() - half * (e_z + e_x + e_y),
            half * (e_x + e_y - e_z),
            half * (e_z + e_y - e_x),
            half * (e_z + e_x - e_y),
        ])
    }

    pub fn lambda(&self) -> [T; 4] {
        self.lambda
    }

    /// Error rate of the key (Z) basis: l3 + l4.
    pub fn e_z(&self) -> T {
        self.lambda[2] + self.lambda[3]
    }

    /// Error rate of the X basis: l2 + l4.
    pub fn e_x(&self) -> T {
        self.lambda[1] + self.lambda[3]
    }

    /// Error rate of the Y basis: l2 + l3.
    pub fn e_y(&self) -> T {
        self.lambda[1] + self.lambda[2]
    }
}

/// A Hermitian operator on at most eight dimensions, entry-validated.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator<T: Real + RealField> {
    matrix: DMatrix<Complex<T>>,
}

impl<T: Real + RealField> HermitianOperator<T> {
    /// Requires a square matrix of dimension 1..=8 that is Hermitian within
    /// [`HERMITICITY_TOL`] entrywise.
    pub fn new(matrix: DMatrix<Complex<T>>) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r == 0 || r > 8 {
            return Err(Error::InvalidState(format!(
                "operator must be square with dimension 1..=8, got {r}x{c}"
            )));
        }
        let tol: T = vtol(HERMITICITY_TOL);
        for i in 0..r {
            for j in i..r {
                let d = matrix[(i, j)] - matrix[(j, i)].conj();
                if num_traits::Float::abs(d.re) > tol || num_traits::Float::abs(d.im) > tol {
                    return Err(Error::InvalidState(format!(
                        "operator is not Hermitian at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    /// Real part of the trace (diagonal is real for a Hermitian operator).
    pub fn trace(&self) -> T {
        let mut t = T::zero();
        for i in 0..self.dim() {
            t = t + self.matrix[(i, i)].re;
        }
        t
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }
}

/// Binary entropy h(p) = -p log2 p - (1-p) log2(1-p), with h(0) = h(1) = 0.
pub fn binary_entropy<T: Real>(p: T) -> Result<T> {
    if !p.is_finite() || p < T::zero() || p > T::one() {
        return Err(Error::Domain(format!("p must lie in [0, 1], got {p}")));
    }
    if p == T::zero() || p == T::one() {
        return Ok(T::zero());
    }
    let q = T::one() - p;
    Ok(-(p * p.log2() + q * q.log2()))
}

/// Von Neumann entropy -tr(rho log2 rho) of a density operator.
///
/// Rejects operators whose trace is off one by more than
/// [`NORMALIZATION_TOL`] or with an eigenvalue below -[`EIGENVALUE_CLAMP`];
/// eigenvalues in [-EIGENVALUE_CLAMP, 0) clamp to zero.
pub fn von_neumann_entropy<T: Real + RealField>(op: &HermitianOperator<T>) -> Result<T> {
    let t = op.trace();
    if num_traits::Float::abs(t - T::one()) > vtol(NORMALIZATION_TOL) {
        return Err(Error::InvalidState(format!(
            "density operator must have unit trace, got {t}"
        )));
    }
    let mut s = T::zero();
    for e in op.eigenvalues() {
        if e < -vtol::<T>(EIGENVALUE_CLAMP) {
            return Err(Error::InvalidState(format!(
                "density operator has negative eigenvalue {e}"
            )));
        }
        if e > T::zero() {
            s = s - e * num_traits::Float::log2(e);
        }
    }
    Ok(num_traits::Float::max(s, T::zero()))
}

/// S(X|E) for a purification of a Bell-diagonal state after the key-basis
/// measurement, by explicit assembly of the 8x8 classical-quantum state and
/// its 4x4 environment marginal, diagonalizing both.
///
/// Always lies in [0, 1]; 1 at the identity channel (l = (1,0,0,0)), 0 at
/// the fully mixing one (l = (1/4,...)).
pub fn conditional_entropy_xe<T: Real + RealField>(state: &BellDiagonalState<T>) -> Result<T> {
    let l = state.lambda();
    let half = real::<T>(0.5);
    let r = [
        num_traits::Float::sqrt(l[0] * half),
        num_traits::Float::sqrt(l[1] * half),
        num_traits::Float::sqrt(l[2] * half),
        num_traits::Float::sqrt(l[3] * half),
    ];
    // Environment vectors attached to Alice outcome a, Bob outcome b, in
    // the Schmidt basis of the purification. Components are real.
    let vectors: [(usize, [T; 4]); 4] = [
        (0, [r[0], r[1], T::zero(), T::zero()]),
        (0, [T::zero(), T::zero(), r[2], r[3]]),
        (1, [T::zero(), T::zero(), r[2], -r[3]]),
        (1, [r[0], -r[1], T::zero(), T::zero()]),
    ];
    let mut rho_xe = DMatrix::<Complex<T>>::zeros(8, 8);
    let mut rho_e = DMatrix::<Complex<T>>::zeros(4, 4);
    for (a, v) in &vectors {
        for i in 0..4 {
            for j in 0..4 {
                let w = Complex::new(v[i] * v[j], T::zero());
                rho_xe[(4 * a + i, 4 * a + j)] += w;
                rho_e[(i, j)] += w;
            }
        }
    }
    let s_xe = von_neumann_entropy(&HermitianOperator::new(rho_xe)?)?;
    let s_e = von_neumann_entropy(&HermitianOperator::new(rho_e)?)?;
    Ok(num_traits::Float::min(
        num_traits::Float::max(s_xe - s_e, T::zero()),
        T::one(),
    ))
}

/// Closed form for the same quantity: 1 + h(e_Z) - H(lambda). Cheap enough
/// for inner search loops; [`conditional_entropy_xe`] rebuilds it from
/// explicit density operators when an independent route is wanted.
pub fn sxe_closed_form<T: Real>(state: &BellDiagonalState<T>) -> T {
    let l = state.lambda();
    let mut hl = T::zero();
    for v in l {
        if v > T::zero() {
            hl = hl - v * v.log2();
        }
    }
    let s = T::one() + binary_entropy(state.e_z()).expect("e_z of a valid state is in [0,1]") - hl;
    s.max(T::zero()).min(T::one())
}

/// The set of Bell-diagonal states whose monitored error rates are
/// compatible with an observed value: each monitored rate (or their average)
/// within `center ± half_width`, intersected with [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorConstraintSet<T> {
    kind: ProtocolKind,
    mode: ConstraintMode,
    center: T,
    half_width: T,
}

impl<T: Real> ErrorConstraintSet<T> {
    /// Requires center in [0, 1/2] and half_width >= 0.
    pub fn new(kind: ProtocolKind, mode: ConstraintMode, center: T, half_width: T) -> Result<Self> {
        if !center.is_finite() || center < T::zero() || center > real(0.5) {
            return Err(Error::Domain(format!(
                "constraint center must lie in [0, 1/2], got {center}"
            )));
        }
        if !half_width.is_finite() || half_width < T::zero() {
            return Err(Error::Domain(format!(
                "constraint half-width must be >= 0, got {half_width}"
            )));
        }
        Ok(Self {
            kind,
            mode,
            center,
            half_width,
        })
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    pub fn center(&self) -> T {
        self.center
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    /// Lower edge of the admitted error-rate interval.
    pub fn lo(&self) -> T {
        (self.center - self.half_width).max(T::zero())
    }

    /// Upper edge of the admitted error-rate interval.
    pub fn hi(&self) -> T {
        (self.center + self.half_width).min(T::one())
    }

    /// Monitored error rates of the state, in fixed order (Z, X[, Y]).
    fn monitored(&self, state: &BellDiagonalState<T>) -> Vec<T> {
        match self.kind {
            ProtocolKind::Bb84 => vec![state.e_z(), state.e_x()],
            ProtocolKind::SixState => vec![state.e_z(), state.e_x(), state.e_y()],
        }
    }

    /// Membership test with a small numerical slack.
    pub fn contains(&self, state: &BellDiagonalState<T>) -> bool {
        let slack: T = real(1e-9);
        let (lo, hi) = (self.lo() - slack, self.hi() + slack);
        let rates = self.monitored(state);
        match self.mode {
            ConstraintMode::PerBasis => rates.iter().all(|e| *e >= lo && *e <= hi),
            ConstraintMode::Averaged => {
                let mean =
                    rates.iter().fold(T::zero(), |a, b| a + *b) / real(rates.len() as f64);
                mean >= lo && mean <= hi
            }
        }
    }
}

/// Result of a constrained minimization: the attained value and a state
/// attaining it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstrainedMinimum<T> {
    pub value: T,
    pub minimizer: BellDiagonalState<T>,
}

/// Minimum of S(X|E) over the constraint set. The minimizer is returned for
/// diagnostics; re-evaluating the entropy there reproduces `value`.
pub fn min_sxe<T: Real>(constraints: &ErrorConstraintSet<T>) -> Result<ConstrainedMinimum<T>> {
    min_key_term(constraints, T::zero())
}

/// Minimum of S(X|E) - ec_weight * h(e_Z) over the constraint set: the
/// worst-case single-copy key contribution when error correction spends
/// `ec_weight * h(e_Z)` bits per signal. `ec_weight = 0` recovers plain
/// S(X|E) minimization.
pub(crate) fn min_key_term<T: Real>(
    constraints: &ErrorConstraintSet<T>,
    ec_weight: T,
) -> Result<ConstrainedMinimum<T>> {
    if !(ec_weight >= T::zero()) || !ec_weight.is_finite() {
        return Err(Error::Domain(format!(
            "ec_weight must be >= 0, got {ec_weight}"
        )));
    }
    // Canonicalize to the rounded f64 cache key, then search in f64; the
    // result is cast back. Rounding at 1e-9 is far below every tolerance
    // downstream and makes the memo hit rate high under optimizer sweeps.
    let key = CacheKey::quantize(
        constraints.kind(),
        constraints.mode(),
        constraints.center().to_f64().expect("finite center"),
        constraints.half_width().to_f64().expect("finite width"),
        ec_weight.to_f64().expect("finite weight"),
    );
    let (value, lambda) = match cache().get(&key) {
        Some(hit) => *hit,
        None => {
            let solved = solve::min_key_term_f64(
                constraints.kind(),
                constraints.mode(),
                key.center(),
                key.half_width(),
                key.ec_weight(),
            )?;
            cache().insert(key, solved);
            solved
        }
    };
    Ok(ConstrainedMinimum {
        value: real(value),
        minimizer: BellDiagonalState::new([
            real(lambda[0]),
            real(lambda[1]),
            real(lambda[2]),
            real(lambda[3]),
        ])?,
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    kind: u8,
    mode: u8,
    center_q: i64,
    width_q: i64,
    weight_q: i64,
}

const QUANTUM: f64 = 1e-9;

impl CacheKey {
    fn quantize(kind: ProtocolKind, mode: ConstraintMode, c: f64, w: f64, f: f64) -> Self {
        let q = |x: f64| (x / QUANTUM).round() as i64;
        Self {
            kind: kind as u8,
            mode: mode as u8,
            center_q: q(c),
            width_q: q(w),
            weight_q: q(f),
        }
    }

    fn center(&self) -> f64 {
        self.center_q as f64 * QUANTUM
    }

    fn half_width(&self) -> f64 {
        self.width_q as f64 * QUANTUM
    }

    fn ec_weight(&self) -> f64 {
        self.weight_q as f64 * QUANTUM
    }
}

fn cache() -> &'static DashMap<CacheKey, (f64, [f64; 4])> {
    static CACHE: OnceLock<DashMap<CacheKey, (f64, [f64; 4])>> = OnceLock::new();
    CACHE.get_or_init(DashMap::new)
}

/// f64 search kernels. The objective J(e_Z, e_X, e_Y) = S(X|E) - f h(e_Z)
/// is evaluated through the closed form; the independent grid oracle and the
/// dual eigendecomposition route cross-check it from the outside.
mod solve {
    use super::{ConstraintMode, Error, ProtocolKind, Result};

    const DESCENT_TOL: f64 = 1e-12;
    const MAX_PASSES: usize = 60;
    const SCAN_NODES: usize = 33;
    const GOLDEN_ITERS: usize = 90;
    /// Coarse-grid resolution; descent refines from the best cells.
    const GRID_STEP: f64 = 5e-3;
    const MAX_AXIS_NODES: usize = 21;

    pub(super) fn h(p: f64) -> f64 {
        if p <= 0.0 || p >= 1.0 {
            return 0.0;
        }
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }

    fn shannon4(l: &[f64; 4]) -> f64 {
        let mut s = 0.0;
        for &v in l {
            if v > 0.0 {
                s -= v * v.log2();
            }
        }
        s
    }

    fn sxe(l: &[f64; 4]) -> f64 {
        (1.0 + h(l[2] + l[3]) - shannon4(l)).clamp(0.0, 1.0)
    }

    /// Weights from error rates; `None` when outside the state space.
    fn lambda_from_errors(ez: f64, ex: f64, ey: f64) -> Option<[f64; 4]> {
        let l = [
            1.0 - 0.5 * (ez + ex + ey),
            0.5 * (ex + ey - ez),
            0.5 * (ez + ey - ex),
            0.5 * (ez + ex - ey),
        ];
        let mut out = [0.0; 4];
        for (o, &v) in out.iter_mut().zip(&l) {
            if v < -super::LAMBDA_TOL {
                return None;
            }
            *o = v.max(0.0);
        }
        Some(out)
    }

    /// Product-channel weights for independent Z and X error rates; always a
    /// valid state, with e_Y = ez + ex - 2 ez ex implied.
    fn product_lambda(ez: f64, ex: f64) -> [f64; 4] {
        [
            (1.0 - ez) * (1.0 - ex),
            (1.0 - ez) * ex,
            ez * (1.0 - ex),
            ez * ex,
        ]
    }

    fn key_term(ez: f64, ex: f64, ey: f64, f: f64) -> Option<f64> {
        let l = lambda_from_errors(ez, ex, ey)?;
        Some(sxe(&l) - f * h(ez))
    }

    /// Golden-section minimum of g over [a, b]; exact enough that the outer
    /// tolerances never see the bracketing error.
    fn golden_min(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        if !(b > a) {
            return (a, g(a));
        }
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut gc = g(c);
        let mut gd = g(d);
        for _ in 0..GOLDEN_ITERS {
            if gc <= gd {
                b = d;
                d = c;
                gd = gc;
                c = b - INV_PHI * (b - a);
                gc = g(c);
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + INV_PHI * (b - a);
                gd = g(d);
            }
        }
        let x = 0.5 * (a + b);
        (x, g(x))
    }

    /// Scan + local golden refinement: global on multimodal 1D sections.
    fn scan_min(g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        if !(b > a) {
            return (a, g(a));
        }
        let mut best = (a, g(a));
        let step = (b - a) / (SCAN_NODES - 1) as f64;
        for i in 1..SCAN_NODES {
            let x = a + step * i as f64;
            let v = g(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        let lo = (best.0 - step).max(a);
        let hi = (best.0 + step).min(b);
        let refined = golden_min(g, lo, hi);
        if refined.1 < best.1 {
            refined
        } else {
            best
        }
    }

    fn axis_nodes(lo: f64, hi: f64) -> Vec<f64> {
        if hi <= lo {
            return vec![lo];
        }
        let k = (((hi - lo) / GRID_STEP).ceil() as usize + 1).clamp(2, MAX_AXIS_NODES);
        (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect()
    }

    pub(super) fn min_key_term_f64(
        kind: ProtocolKind,
        mode: ConstraintMode,
        center: f64,
        half_width: f64,
        f: f64,
    ) -> Result<(f64, [f64; 4])> {
        let lo = (center - half_width).max(0.0);
        let hi = (center + half_width).min(1.0);
        match (kind, mode) {
            (ProtocolKind::Bb84, ConstraintMode::PerBasis) => Ok(bb84_per_basis(lo, hi, f)),
            (ProtocolKind::Bb84, ConstraintMode::Averaged) => Ok(bb84_averaged(lo, hi, f)),
            (ProtocolKind::SixState, ConstraintMode::PerBasis) => six_per_basis(lo, hi, f),
            (ProtocolKind::SixState, ConstraintMode::Averaged) => Ok(six_averaged(lo, hi, f)),
        }
    }

    /// Both monitored rates range over [lo, hi] independently and the
    /// Y-correlation is unconstrained, so the objective separates:
    /// min = 1 - (1 + f) h(e*) at the h-maximizing rate e* = min(hi, 1/2)
    /// (lo <= 1/2 always), attained by the product channel with
    /// e_Z = e_X = e*.
    fn bb84_per_basis(lo: f64, hi: f64, f: f64) -> (f64, [f64; 4]) {
        let e = hi.min(0.5).max(lo);
        (1.0 - (1.0 + f) * h(e), product_lambda(e, e))
    }

    /// Only the mean (e_Z + e_X)/2 is pinned to [lo, hi]. Maximizing
    /// phi = f h(e_Z) + h(e_X) over that strip is a jointly concave problem,
    /// solved by nested golden sections over s = e_Z + e_X and the split.
    fn bb84_averaged(lo: f64, hi: f64, f: f64) -> (f64, [f64; 4]) {
        let s_min = (2.0 * lo).clamp(0.0, 2.0);
        let s_max = (2.0 * hi).clamp(0.0, 2.0);
        let inner = |s: f64| -> (f64, f64) {
            let a = (s - 1.0).max(0.0);
            let b = s.min(1.0);
            let g = |ez: f64| -(f * h(ez) + h(s - ez));
            golden_min(&g, a, b)
        };
        let (s, _) = golden_min(&|s| inner(s).1, s_min, s_max);
        let (ez, neg_phi) = inner(s);
        let ex = (s - ez).clamp(0.0, 1.0);
        (1.0 + neg_phi, product_lambda(ez, ex))
    }

    /// Feasible interval of one error rate given the other two: state-space
    /// positivity gives |p - q| <= e <= min(p + q, 2 - p - q), intersected
    /// with the monitoring box.
    fn coordinate_interval(lo: f64, hi: f64, p: f64, q: f64) -> Option<(f64, f64)> {
        let a = lo.max((p - q).abs());
        let b = hi.min(p + q).min(2.0 - p - q);
        if a <= b + 1e-15 {
            Some((a, b.max(a)))
        } else {
            None
        }
    }

    /// Cyclic coordinate descent over (e_Z, e_X, e_Y) from one seed.
    fn descend3(seed: [f64; 3], lo: f64, hi: f64, f: f64) -> Option<([f64; 3], f64)> {
        let mut e = seed;
        let mut best = key_term(e[0], e[1], e[2], f)?;
        for _ in 0..MAX_PASSES {
            let before = best;
            for k in 0..3 {
                let (p, q) = (e[(k + 1) % 3], e[(k + 2) % 3]);
                let Some((a, b)) = coordinate_interval(lo, hi, p, q) else {
                    continue;
                };
                let g = |x: f64| {
                    let mut t = e;
                    t[k] = x;
                    key_term(t[0], t[1], t[2], f).unwrap_or(f64::INFINITY)
                };
                let (x, v) = scan_min(&g, a, b);
                if v < best {
                    best = v;
                    e[k] = x;
                }
            }
            if before - best < DESCENT_TOL {
                break;
            }
        }
        Some((e, best))
    }

    /// All three rates monitored in [lo, hi]: coarse grid over the box, then
    /// coordinate descent from the best cells plus the box corners/center.
    fn six_per_basis(lo: f64, hi: f64, f: f64) -> Result<(f64, [f64; 4])> {
        if f == 0.0 && lo <= 0.5 && 0.5 <= hi {
            // the fully mixing state is admissible and S(X|E) >= 0 is tight
            return Ok((0.0, [0.25; 4]));
        }
        let nodes = axis_nodes(lo, hi);
        let mut top: Vec<([f64; 3], f64)> = Vec::new(); // few best grid cells
        for &ez in &nodes {
            for &ex in &nodes {
                for &ey in &nodes {
                    if let Some(v) = key_term(ez, ex, ey, f) {
                        let pos = top.partition_point(|t| t.1 < v);
                        if pos < 3 {
                            top.insert(pos, ([ez, ex, ey], v));
                            top.truncate(3);
                        }
                    }
                }
            }
        }
        let c = 0.5 * (lo + hi);
        let mut seeds: Vec<[f64; 3]> = top.iter().map(|t| t.0).collect();
        seeds.push([c, c, c]);
        for &ez in &[lo, hi] {
            for &ex in &[lo, hi] {
                for &ey in &[lo, hi] {
                    seeds.push([ez, ex, ey]);
                }
            }
        }
        let mut best: Option<([f64; 3], f64)> = None;
        for seed in seeds {
            if let Some((e, v)) = descend3(seed, lo, hi, f) {
                if best.map_or(true, |(_, bv)| v < bv) {
                    best = Some((e, v));
                }
            }
        }
        let (e, v) = best.ok_or_else(|| {
            Error::Infeasible(format!(
                "no Bell-diagonal state has all monitored rates in [{lo}, {hi}]"
            ))
        })?;
        let l = lambda_from_errors(e[0], e[1], e[2]).expect("descent stays feasible");
        Ok((v, l))
    }

    /// Mean of the three rates pinned: (e_Z+e_X+e_Y)/3 = (2/3)(1 - l1), so
    /// l1 ranges over an interval. For fixed l1 = v and key-basis error
    /// s = l3 + l4, the entropy term is extremal at the symmetric split
    /// l3 = l4 = s/2 (h(e_Z) depends on s only, H(lambda) is maximal
    /// there), leaving a 2D problem in (v, s).
    fn six_averaged(lo: f64, hi: f64, f: f64) -> (f64, [f64; 4]) {
        if f == 0.0 && lo <= 0.5 && 0.5 <= hi {
            return (0.0, [0.25; 4]);
        }
        let v_lo = (1.0 - 1.5 * hi).max(0.0);
        let v_hi = (1.0 - 1.5 * lo).min(1.0);
        let obj = |v: f64, s: f64| -> f64 {
            let l2 = 1.0 - v - s;
            if l2 < -super::LAMBDA_TOL {
                return f64::INFINITY;
            }
            let l = [v, l2.max(0.0), 0.5 * s, 0.5 * s];
            sxe(&l) - f * h(s)
        };
        // coarse 2D grid
        let mut best = (v_hi, 0.0, obj(v_hi, 0.0));
        for vn in axis_nodes(v_lo, v_hi) {
            let s_hi = (1.0 - vn).max(0.0);
            let k = ((s_hi / GRID_STEP).ceil() as usize + 1).clamp(2, 61);
            for i in 0..k {
                let s = s_hi * i as f64 / (k - 1) as f64;
                let val = obj(vn, s);
                if val < best.2 {
                    best = (vn, s, val);
                }
            }
        }
        // 2D coordinate descent
        let (mut v, mut s, mut val) = best;
        for _ in 0..MAX_PASSES {
            let before = val;
            let (x, gv) = scan_min(&|t| obj(t, s), v_lo, v_hi.min(1.0 - s).max(v_lo));
            if gv < val {
                val = gv;
                v = x;
            }
            let (y, gs) = scan_min(&|t| obj(v, t), 0.0, (1.0 - v).max(0.0));
            if gs < val {
                val = gs;
                s = y;
            }
            if before - val < DESCENT_TOL {
                break;
            }
        }
        let l2 = (1.0 - v - s).max(0.0);
        (val, [v, l2, 0.5 * s, 0.5 * s])
    }
}
