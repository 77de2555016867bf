//! Independent recomputation routes backing the self-test machinery.
//!
//! Everything here deliberately avoids the production code paths: the
//! statistical bounds are re-evaluated in double-double arithmetic with a
//! hand-rolled logarithm, S(X|E) is re-derived through the joint-state
//! purity and an ensemble decomposition instead of the 8x8 assembly, and
//! the constrained minimum is re-found by brute-force grid scan with no
//! descent. Agreement between routes is what the shipped `selftest`
//! command and the acceptance suite certify. f64 only.

use crate::entropy::{BellDiagonalState, ErrorConstraintSet};
use crate::{ConstraintMode, Error, ProtocolKind, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Double-double (~31 significant digits) helpers on `twofloat`'s
/// add/mul/sqrt, which carry proven error bounds. Two gaps in the crate are
/// filled here: its transcendentals are only ~1e-14 accurate (logarithm
/// rebuilt from scratch below), and its dd-by-dd division computes the
/// reciprocal residual without a fused multiply-add and so collapses to
/// plain f64 accuracy ([`div`] replaces it; never use `/` on two
/// `TwoFloat`s).
pub mod dd {
    pub use twofloat::TwoFloat;

    /// ln 2 as a canonical double-double pair.
    pub fn ln2() -> TwoFloat {
        TwoFloat::try_from((6.931_471_805_599_453e-1, 2.319_046_813_846_299_6e-17))
            .expect("canonical non-overlapping pair")
    }

    /// Long division with dd-exact partial products; ~1e-31 relative error,
    /// unlike the operator form.
    pub fn div(x: TwoFloat, y: TwoFloat) -> TwoFloat {
        let q0 = x.hi() / y.hi();
        let r0 = x - y * q0;
        let q1 = r0.hi() / y.hi();
        let r1 = r0 - y * q1;
        let q2 = r1.hi() / y.hi();
        TwoFloat::new_add(q0, q1) + q2
    }

    /// Terms of the atanh series; |t| <= 0.1716 makes 26 enough for 1e-32.
    const ATANH_TERMS: usize = 26;

    /// Natural logarithm of a positive, normal-range value: exponent
    /// reduction to [1/sqrt(2), sqrt(2)], then ln m = 2 atanh((m-1)/(m+1)).
    pub fn ln(x: TwoFloat) -> TwoFloat {
        let hi = x.hi();
        assert!(
            hi > 0.0 && hi.is_finite() && hi >= f64::MIN_POSITIVE,
            "ln domain: {hi}"
        );
        let bits = hi.to_bits();
        let mut e = ((bits >> 52) & 0x7ff) as i32 - 1023;
        let mut m = x * 2f64.powi(-e); // exact scaling into [1, 2)
        if m.hi() > core::f64::consts::SQRT_2 {
            m = m * 0.5;
            e += 1;
        }
        let one = TwoFloat::from(1.0);
        let t = div(m - one, m + one);
        let t2 = t * t;
        let mut sum = TwoFloat::from(0.0);
        for k in (0..ATANH_TERMS).rev() {
            sum = sum * t2 + one / ((2 * k + 1) as f64);
        }
        TwoFloat::from(2.0) * t * sum + TwoFloat::from(f64::from(e)) * ln2()
    }

    pub fn log2(x: TwoFloat) -> TwoFloat {
        div(ln(x), ln2())
    }

    /// The leading double of a dd value is its correctly rounded f64.
    pub fn collapse(x: TwoFloat) -> f64 {
        x.hi()
    }
}

use dd::TwoFloat;

/// sqrt((n+m)(m+1) ln(1/eps) / (8 m^2 n)) in double-double arithmetic.
pub fn xi_pe_hp(eps: f64, n: f64, m: f64) -> f64 {
    let (eps, n, m) = (TwoFloat::from(eps), TwoFloat::from(n), TwoFloat::from(m));
    let num = (n + m) * (m + 1.0) * (-dd::ln(eps));
    let den = TwoFloat::from(8.0) * m * m * n;
    dd::collapse(dd::div(num, den).sqrt())
}

/// sqrt((8 ln2 chi + 8 ln(1/eps)) / n) in double-double arithmetic.
pub fn xi_att_hp(eps: f64, chi: u32, n: f64) -> f64 {
    let num = TwoFloat::from(8.0)
        * (dd::ln2() * f64::from(chi) + (-dd::ln(TwoFloat::from(eps))));
    dd::collapse((num / n).sqrt())
}

fn h_dd(p: f64) -> TwoFloat {
    if p <= 0.0 || p >= 1.0 {
        return TwoFloat::from(0.0);
    }
    let p = TwoFloat::from(p);
    let q = TwoFloat::from(1.0) - p;
    -(p * dd::log2(p) + q * dd::log2(q))
}

/// n f h(q) + log2(2/eps_ec) in double-double arithmetic.
pub fn leak_ec_hp(n: f64, qber: f64, efficiency: f64, eps_ec: f64) -> f64 {
    let leak = TwoFloat::from(n) * efficiency * h_dd(qber)
        + (TwoFloat::from(1.0) - dd::log2(TwoFloat::from(eps_ec)));
    dd::collapse(leak)
}

/// 5 sqrt(log2(2/eps)/n) in double-double arithmetic.
pub fn aep_correction_hp(n: f64, eps_smooth: f64) -> f64 {
    let log_term = TwoFloat::from(1.0) - dd::log2(TwoFloat::from(eps_smooth));
    dd::collapse(TwoFloat::from(5.0) * (log_term / n).sqrt())
}

fn entropy_of_spectrum(evs: &[f64]) -> f64 {
    let mut s = 0.0;
    for &e in evs {
        if e > 0.0 {
            s -= e * e.log2();
        }
    }
    s.max(0.0)
}

/// S(X|E) recomputed without the 8x8 assembly: the adversary marginal's
/// entropy equals the joint two-qubit state's (purification), and the
/// post-measurement entropy comes from the outcome ensemble,
/// S(XE) = H(p) + sum_a p_a S(sigma_a), with three 4x4 real-symmetric
/// eigendecompositions in total.
pub fn sxe_second_path(state: &BellDiagonalState<f64>) -> f64 {
    let l = state.lambda();
    // joint state in the computational basis |00>,|01>,|10>,|11>
    let mut rho_ab = DMatrix::<f64>::zeros(4, 4);
    rho_ab[(0, 0)] = 0.5 * (l[0] + l[1]);
    rho_ab[(3, 3)] = 0.5 * (l[0] + l[1]);
    rho_ab[(0, 3)] = 0.5 * (l[0] - l[1]);
    rho_ab[(3, 0)] = 0.5 * (l[0] - l[1]);
    rho_ab[(1, 1)] = 0.5 * (l[2] + l[3]);
    rho_ab[(2, 2)] = 0.5 * (l[2] + l[3]);
    rho_ab[(1, 2)] = 0.5 * (l[2] - l[3]);
    rho_ab[(2, 1)] = 0.5 * (l[2] - l[3]);
    let s_e = entropy_of_spectrum(SymmetricEigen::new(rho_ab).eigenvalues.as_slice());

    let r: Vec<f64> = l.iter().map(|v| (0.5 * v).sqrt()).collect();
    // adversary vectors for (Alice outcome, Bob outcome)
    let vecs: [(usize, [f64; 4]); 4] = [
        (0, [r[0], r[1], 0.0, 0.0]),
        (0, [0.0, 0.0, r[2], r[3]]),
        (1, [0.0, 0.0, r[2], -r[3]]),
        (1, [r[0], -r[1], 0.0, 0.0]),
    ];
    let mut p = [0.0f64; 2];
    let mut sigma = [DMatrix::<f64>::zeros(4, 4), DMatrix::<f64>::zeros(4, 4)];
    for (a, v) in &vecs {
        for i in 0..4 {
            for j in 0..4 {
                sigma[*a][(i, j)] += v[i] * v[j];
            }
        }
        p[*a] += v.iter().map(|x| x * x).sum::<f64>();
    }
    let mut s_xe = entropy_of_spectrum(&p);
    for a in 0..2 {
        if p[a] > 0.0 {
            let cond = sigma[a].clone() / p[a];
            s_xe += p[a] * entropy_of_spectrum(SymmetricEigen::new(cond).eigenvalues.as_slice());
        }
    }
    (s_xe - s_e).clamp(0.0, 1.0)
}

/// Spacing of the brute-force minimizer's grid.
pub const GRID_RESOLUTION: f64 = 1e-3;

fn grid(lo: f64, hi: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let k = ((hi - lo) / GRID_RESOLUTION).ceil() as usize;
    (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect()
}

fn h64(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Local S(X|E) evaluation for the grid scan.
fn sxe4(l: [f64; 4]) -> f64 {
    let mut hl = 0.0;
    for v in l {
        if v > 0.0 {
            hl -= v * v.log2();
        }
    }
    (1.0 + h64(l[2] + l[3]) - hl).clamp(0.0, 1.0)
}

fn lambda4(ez: f64, ex: f64, ey: f64) -> Option<[f64; 4]> {
    let l = [
        1.0 - 0.5 * (ez + ex + ey),
        0.5 * (ex + ey - ez),
        0.5 * (ez + ey - ex),
        0.5 * (ez + ex - ey),
    ];
    let mut out = [0.0; 4];
    for (o, &v) in out.iter_mut().zip(&l) {
        if v < -1e-12 {
            return None;
        }
        *o = v.max(0.0);
    }
    Some(out)
}

/// Brute-force minimum of S(X|E) over the constraint set at
/// [`GRID_RESOLUTION`], with no refinement: an independent check that the
/// production search does not get stuck in a bad basin. The search
/// direction of the error is one-sided — a grid can only overshoot the true
/// minimum — so production values must lie in
/// [grid - resolution_slack, grid + tiny].
pub fn min_sxe_grid(c: &ErrorConstraintSet<f64>) -> Result<f64> {
    let (lo, hi) = (c.lo(), c.hi());
    let mut best = f64::INFINITY;
    match (c.kind(), c.mode()) {
        (ProtocolKind::Bb84, ConstraintMode::PerBasis) => {
            for &ez in &grid(lo, hi) {
                for &ex in &grid(lo, hi) {
                    for &t in &grid((ez + ex - 1.0).max(0.0), ez.min(ex)) {
                        if let Some(l) = lambda4(ez, ex, ez + ex - 2.0 * t) {
                            best = best.min(sxe4(l));
                        }
                    }
                }
            }
        }
        (ProtocolKind::Bb84, ConstraintMode::Averaged) => {
            let ez_all = grid((2.0 * lo - 1.0).max(0.0), (2.0 * hi).min(1.0));
            for &ez in &ez_all {
                let ex_lo = (2.0 * lo - ez).max(0.0);
                let ex_hi = (2.0 * hi - ez).min(1.0);
                if ex_lo > ex_hi {
                    continue;
                }
                for &ex in &grid(ex_lo, ex_hi) {
                    for &t in &grid((ez + ex - 1.0).max(0.0), ez.min(ex)) {
                        if let Some(l) = lambda4(ez, ex, ez + ex - 2.0 * t) {
                            best = best.min(sxe4(l));
                        }
                    }
                }
            }
        }
        (ProtocolKind::SixState, ConstraintMode::PerBasis) => {
            let nodes = grid(lo, hi);
            for &ez in &nodes {
                for &ex in &nodes {
                    for &ey in &nodes {
                        if let Some(l) = lambda4(ez, ex, ey) {
                            best = best.min(sxe4(l));
                        }
                    }
                }
            }
        }
        (ProtocolKind::SixState, ConstraintMode::Averaged) => {
            for &v in &grid((1.0 - 1.5 * hi).max(0.0), (1.0 - 1.5 * lo).min(1.0)) {
                for &s in &grid(0.0, (1.0 - v).max(0.0)) {
                    let l2 = 1.0 - v - s;
                    if l2 < -1e-12 {
                        continue;
                    }
                    best = best.min(sxe4([v, l2.max(0.0), 0.5 * s, 0.5 * s]));
                }
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Infeasible(format!(
            "no admissible grid point in [{lo}, {hi}]"
        )))
    }
}

/// Tiny deterministic generator for spot checks; fixed algorithm so the
/// sampled inputs never move between runs or platforms.
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * 2f64.powi(-53)
    }

    /// Uniform in [0, bound]; the modulo bias is irrelevant at spot-check
    /// sample counts.
    pub fn below_inclusive(&mut self, bound: u64) -> u64 {
        self.next_u64() % (bound + 1)
    }
}

/// A random full-support Bell-diagonal state (normalized exponentials).
pub fn random_bell_state(rng: &mut SplitMix64) -> BellDiagonalState<f64> {
    loop {
        let mut l = [0.0f64; 4];
        let mut sum = 0.0;
        for v in &mut l {
            *v = -(1.0 - rng.next_f64()).ln();
            sum += *v;
        }
        if sum <= 0.0 {
            continue;
        }
        for v in &mut l {
            *v /= sum;
        }
        if let Ok(state) = BellDiagonalState::new(l) {
            return state;
        }
    }
}

/// Draws random compositions with n in [501, 1e6] and returns the first
/// one violating the multinomial floor inequality, if any.
pub fn multinomial_floor_spot_check(samples: usize, seed: u64) -> Option<[u64; 4]> {
    let mut rng = SplitMix64::new(seed);
    for _ in 0..samples {
        let n = 501 + rng.below_inclusive(1_000_000 - 501);
        let a = rng.below_inclusive(n);
        let b = rng.below_inclusive(n - a);
        let c = rng.below_inclusive(n - a - b);
        let counts = [a, b, c, n - a - b - c];
        let holds = crate::bounds::multinomial_floor_holds(counts).expect("n >= 501");
        if !holds {
            return Some(counts);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds;
    use crate::entropy::{conditional_entropy_xe, min_sxe};
    use crate::{ConstraintMode::*, ProtocolKind::*};

    #[test]
    fn dd_division_is_dd_accurate() {
        // 1/7 has a known nonzero low word; the operator form loses it
        let q = dd::div(TwoFloat::from(1.0), TwoFloat::from(7.0));
        assert_eq!(q.hi(), 0.14285714285714285);
        assert!((q.lo() - 7.930164461608261e-18).abs() < 1e-32);
        // residual x - y q stays at the square of working precision
        let mut rng = SplitMix64::new(9);
        for _ in 0..1_000 {
            let x = TwoFloat::from(rng.next_f64() + 0.5) * (rng.next_f64() + 0.5);
            let y = TwoFloat::from(rng.next_f64() + 0.5) * (rng.next_f64() + 0.5);
            let q = dd::div(x, y);
            let res = dd::collapse(x - y * q).abs();
            assert!(res < 1e-30 * dd::collapse(x).abs(), "residual {res}");
        }
    }

    #[test]
    fn dd_ln_matches_std_to_f64_precision() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..10_000 {
            let x = 10f64.powf(rng.next_f64() * 60.0 - 30.0);
            let ours = dd::collapse(dd::ln(TwoFloat::from(x)));
            let std = x.ln();
            assert!(
                (ours - std).abs() <= 2.0 * f64::EPSILON * std.abs().max(1.0),
                "ln({x}): {ours} vs {std}"
            );
        }
        assert_eq!(dd::collapse(dd::ln(TwoFloat::from(1.0))), 0.0);
    }

    #[test]
    fn dd_ln_is_dd_accurate_not_just_f64_accurate() {
        // ln(2^100) = 100 ln 2 exercises the exponent path exactly
        let x = TwoFloat::from(2f64.powi(100));
        let diff = dd::ln(x) - TwoFloat::from(100.0) * dd::ln2();
        assert!(dd::collapse(diff).abs() < 1e-28);
        // functional equation ln(x^2) = 2 ln x to far below f64 eps
        let mut rng = SplitMix64::new(2);
        for _ in 0..1_000 {
            let x = TwoFloat::from(0.5 + 3.0 * rng.next_f64());
            let a = dd::ln(x * x);
            let b = TwoFloat::from(2.0) * dd::ln(x);
            let err = dd::collapse(a - b).abs();
            assert!(err < 1e-28, "ln(x^2) off by {err}");
        }
        // and log2 of powers of two is exact
        for e in [-120, -1, 0, 1, 7, 300] {
            let v = dd::collapse(dd::log2(TwoFloat::from(2f64.powi(e))));
            assert_eq!(v, f64::from(e));
        }
    }

    #[test]
    fn hp_bounds_match_production_tightly() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..200 {
            let eps = 10f64.powf(-(1.0 + 39.0 * rng.next_f64()));
            let n = 10f64.powf(1.0 + 14.0 * rng.next_f64());
            let m = 10f64.powf(1.0 + 14.0 * rng.next_f64());
            let q = 0.5 * rng.next_f64();
            let pairs = [
                (bounds::xi_pe(eps, n, m).unwrap(), xi_pe_hp(eps, n, m)),
                (bounds::xi_att(eps, 2, n).unwrap(), xi_att_hp(eps, 2, n)),
                (
                    bounds::leak_ec(n, q, 1.1, eps).unwrap(),
                    leak_ec_hp(n, q, 1.1, eps),
                ),
                (
                    bounds::aep_correction(n, eps).unwrap(),
                    aep_correction_hp(n, eps),
                ),
            ];
            for (prod, hp) in pairs {
                assert!(
                    (prod - hp).abs() <= 1e-12 * hp.abs().max(1e-300),
                    "production {prod} vs dd {hp} (eps={eps}, n={n}, m={m}, q={q})"
                );
            }
        }
        // deep-tail eps exercised by post-selection-shrunk budgets
        let eps = 1e-250;
        let a = bounds::xi_pe(eps, 1e6, 1e5).unwrap();
        let b = xi_pe_hp(eps, 1e6, 1e5);
        assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn second_path_reference_points() {
        let s = BellDiagonalState::new([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((sxe_second_path(&s) - 1.0).abs() < 1e-12);
        let s = BellDiagonalState::new([0.25; 4]).unwrap();
        assert!(sxe_second_path(&s).abs() < 1e-12);
        // an equal Phi+/Phi- mixture is classical in the key basis
        let s = BellDiagonalState::new([0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(sxe_second_path(&s).abs() < 1e-12);
        let s = BellDiagonalState::new([0.5, 0.25, 0.125, 0.125]).unwrap();
        assert!((sxe_second_path(&s) - 0.061278124459132864).abs() < 1e-11);
    }

    #[test]
    fn second_path_matches_primary_assembly() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..300 {
            let s = random_bell_state(&mut rng);
            let primary = conditional_entropy_xe(&s).unwrap();
            let second = sxe_second_path(&s);
            assert!(
                (primary - second).abs() < 1e-10,
                "at {:?}: {primary} vs {second}",
                s.lambda()
            );
        }
    }

    #[test]
    fn grid_minimum_brackets_production_minimum() {
        let cases = [
            (Bb84, 0.0, 0.0),
            (Bb84, 0.1, 0.0),
            (Bb84, 0.05, 0.02),
            (SixState, 0.01, 0.0),
            (SixState, 0.1, 0.03),
        ];
        for (kind, c, w) in cases {
            let set = ErrorConstraintSet::new(kind, PerBasis, c, w).unwrap();
            let grid = min_sxe_grid(&set).unwrap();
            let prod = min_sxe(&set).unwrap().value;
            assert!(
                prod >= grid - 5e-3 && prod <= grid + 1e-6,
                "{kind:?} c={c} w={w}: production {prod} vs grid {grid}"
            );
        }
        // exact-rate reference values fall out of the degenerate grids
        let set = ErrorConstraintSet::new(Bb84, PerBasis, 0.1, 0.0).unwrap();
        assert!((min_sxe_grid(&set).unwrap() - 0.53100440641071878).abs() < 1e-12);
        let set = ErrorConstraintSet::new(SixState, PerBasis, 0.01, 0.0).unwrap();
        assert!((min_sxe_grid(&set).unwrap() - 0.94465798828571710).abs() < 1e-12);
    }

    #[test]
    fn grid_minimum_handles_averaged_mode() {
        for kind in [Bb84, SixState] {
            let set = ErrorConstraintSet::new(kind, Averaged, 0.05, 0.01).unwrap();
            let grid = min_sxe_grid(&set).unwrap();
            let prod = min_sxe(&set).unwrap().value;
            assert!(
                prod >= grid - 5e-3 && prod <= grid + 1e-6,
                "{kind:?} averaged: production {prod} vs grid {grid}"
            );
        }
    }

    #[test]
    fn equal_split_dominates_pointwise() {
        // the averaged six-state scan fixes the last two weights equal;
        // justified because rebalancing them at fixed sum only raises the
        // spectrum entropy and leaves the key-error term unchanged
        let mut rng = SplitMix64::new(5);
        for _ in 0..10_000 {
            let l = random_bell_state(&mut rng).lambda();
            let s = l[2] + l[3];
            let split = sxe4([l[0], l[1], 0.5 * s, 0.5 * s]);
            assert!(split <= sxe4(l) + 1e-12, "split worse at {l:?}");
        }
    }

    #[test]
    fn splitmix_reference_vector() {
        // standard first outputs from seed 0
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        // determinism across instances
        let mut a = SplitMix64::new(12345);
        let mut b = SplitMix64::new(12345);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn floor_spot_check_passes() {
        assert_eq!(multinomial_floor_spot_check(2_000, 0xf1002), None);
    }
}
