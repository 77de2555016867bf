//! Joint optimization of the estimation-sample count m and the split of a
//! total security budget, maximizing the finite-key rate at fixed N and
//! observed error rate.
//!
//! The search is a log-spaced grid over m and over budget-share tuples,
//! followed by coordinate descent in (ln m, ln shares). Share tuples are
//! canonicalized so the largest share is 1 (the budget map is
//! scale-invariant), grid candidates are screened with a cheap rate upper
//! bound before the entropy search runs, and the parallel reduction uses a
//! total order (rate desc, then m, then budget components) so results are
//! byte-stable across thread schedules.

use crate::{
    rates::{compute_rate, rate_upper_bound, AttackModel, ProtocolSpec, RatePoint, SecurityBudget},
    real, Error, Real, Result,
};
use rayon::prelude::*;

pub const DEFAULT_M_GRID_DENSITY: usize = 24;
pub const DEFAULT_EPS_GRID_DENSITY: usize = 8;
pub const DEFAULT_REFINE_ITERATIONS: usize = 40;

/// Smallest budget share explored relative to the largest, as 10^-3.
const SHARE_DECADES: f64 = 3.0;
/// Refinement stops when both log-space steps shrink below this.
const MIN_LOG_STEP: f64 = 1e-6;
/// ... or when a full improving pass gains less rate than this.
const GAIN_TOL: f64 = 1e-12;

/// One optimization problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizationSpec<T> {
    model: AttackModel,
    protocol: ProtocolSpec<T>,
    n_total: T,
    qber: T,
    eps_total: T,
    m_grid_density: usize,
    eps_grid_density: usize,
    refine_iterations: usize,
    fixed_m: Option<T>,
    fixed_budget: Option<SecurityBudget<T>>,
}

impl<T: Real> OptimizationSpec<T> {
    pub fn new(
        model: AttackModel,
        protocol: ProtocolSpec<T>,
        n_total: T,
        qber: T,
        eps_total: T,
    ) -> Result<Self> {
        if !n_total.is_finite() || !(n_total > T::zero()) {
            return Err(Error::Domain(format!("N must be positive, got {n_total}")));
        }
        if !qber.is_finite() || qber < T::zero() || qber > real(0.5) {
            return Err(Error::Domain(format!(
                "qber must lie in [0, 1/2], got {qber}"
            )));
        }
        if !eps_total.is_finite() || !(eps_total > T::zero()) || eps_total >= T::one() {
            return Err(Error::Domain(format!(
                "eps_total must lie in (0, 1), got {eps_total}"
            )));
        }
        Ok(Self {
            model,
            protocol,
            n_total,
            qber,
            eps_total,
            m_grid_density: DEFAULT_M_GRID_DENSITY,
            eps_grid_density: DEFAULT_EPS_GRID_DENSITY,
            refine_iterations: DEFAULT_REFINE_ITERATIONS,
            fixed_m: None,
            fixed_budget: None,
        })
    }

    /// Grid densities: at least 2 points over m, at least 8 share values
    /// per budget component.
    pub fn with_grid_densities(mut self, m_density: usize, eps_density: usize) -> Result<Self> {
        if m_density < 2 {
            return Err(Error::Domain(format!(
                "m grid density must be >= 2, got {m_density}"
            )));
        }
        if eps_density < 8 {
            return Err(Error::Domain(format!(
                "eps grid density must be >= 8, got {eps_density}"
            )));
        }
        self.m_grid_density = m_density;
        self.eps_grid_density = eps_density;
        Ok(self)
    }

    pub fn with_refine_iterations(mut self, iterations: usize) -> Self {
        self.refine_iterations = iterations;
        self
    }

    /// Pin m; only the budget split is optimized.
    pub fn with_fixed_m(mut self, m: T) -> Self {
        self.fixed_m = Some(m);
        self
    }

    /// Pin the budget split; only m is optimized. The budget's total under
    /// the model's composition rule must match eps_total.
    pub fn with_fixed_budget(mut self, budget: SecurityBudget<T>) -> Self {
        self.fixed_budget = Some(budget);
        self
    }

    pub fn model(&self) -> AttackModel {
        self.model
    }

    pub fn protocol(&self) -> &ProtocolSpec<T> {
        &self.protocol
    }

    pub fn n_total(&self) -> T {
        self.n_total
    }

    pub fn qber(&self) -> T {
        self.qber
    }

    pub fn eps_total(&self) -> T {
        self.eps_total
    }
}

/// Scalar summary of a candidate; the full point is recomputed for the
/// winner only.
#[derive(Clone, Copy, Debug)]
struct Candidate<T> {
    rate: T,
    /// Rate is only the screening upper bound (true rate is <= 0).
    screened: bool,
    m: T,
    budget: SecurityBudget<T>,
}

/// Strict total order: higher rate, then smaller m, then lexicographically
/// smaller budget.
fn better<T: Real>(a: &Candidate<T>, b: &Candidate<T>) -> bool {
    if a.rate != b.rate {
        return a.rate > b.rate;
    }
    if a.m != b.m {
        return a.m < b.m;
    }
    let ka = [a.budget.eps_pe, a.budget.eps_ec, a.budget.eps_pa, a.budget.eps_bar];
    let kb = [b.budget.eps_pe, b.budget.eps_ec, b.budget.eps_pa, b.budget.eps_bar];
    ka < kb
}

fn pick<T: Real>(a: Option<Candidate<T>>, b: Option<Candidate<T>>) -> Option<Candidate<T>> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if better(&y, &x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Budget-share slots that are free under the model; `eps_pe` is folded
/// into `eps_bar` for the coherent analysis.
fn free_slots(model: AttackModel) -> &'static [usize] {
    match model {
        AttackModel::Collective | AttackModel::PostSelection => &[0, 1, 2, 3],
        AttackModel::Coherent => &[1, 2, 3],
    }
}

/// Shares (pe, ec, pa, bar) -> budget with the model's total equal to
/// eps_total. Scale-invariant in the shares.
fn budget_from_shares<T: Real>(
    model: AttackModel,
    eps_total: T,
    shares: [T; 4],
) -> SecurityBudget<T> {
    match model {
        AttackModel::Collective | AttackModel::PostSelection => {
            let w = shares[0] + shares[1] + shares[2] + shares[3];
            SecurityBudget::new(
                eps_total * shares[0] / w,
                eps_total * shares[1] / w,
                eps_total * shares[2] / w,
                eps_total * shares[3] / w,
            )
        }
        AttackModel::Coherent => {
            let two = real::<T>(2.0);
            let w = shares[1] + shares[2] + two * shares[3];
            SecurityBudget::new(
                T::zero(),
                eps_total * shares[1] / w,
                eps_total * shares[2] / w,
                eps_total * shares[3] / w,
            )
        }
    }
}

/// Log-spaced integers from 1 to m_max inclusive, deduplicated.
fn m_grid<T: Real>(m_max: T, density: usize) -> Vec<T> {
    let k = density.max(2);
    let ln_max = m_max.ln();
    let mut out: Vec<T> = Vec::with_capacity(k);
    for i in 0..k {
        let x = (ln_max * real(i as f64) / real((k - 1) as f64)).exp().round();
        let x = x.max(T::one()).min(m_max);
        if out.last() != Some(&x) {
            out.push(x);
        }
    }
    out
}

/// Canonical share tuples: every free slot takes one of `density`
/// log-spaced values in [10^-3, 1], and at least one slot is exactly 1.
fn share_grid<T: Real>(model: AttackModel, density: usize) -> Vec<[T; 4]> {
    let slots = free_slots(model);
    let k = slots.len();
    let values: Vec<T> = (0..density)
        .map(|j| {
            real::<T>(10.0).powf(real(-SHARE_DECADES * (1.0 - j as f64 / (density - 1) as f64)))
        })
        .collect();
    let mut out = Vec::new();
    let total = density.pow(k as u32);
    for mut code in 0..total {
        let mut digits = vec![0usize; k];
        let mut has_top = false;
        for d in digits.iter_mut() {
            *d = code % density;
            has_top |= *d == density - 1;
            code /= density;
        }
        if !has_top {
            continue;
        }
        let mut shares = [T::zero(); 4];
        for (slot, d) in slots.iter().zip(&digits) {
            shares[*slot] = values[*d];
        }
        out.push(shares);
    }
    out
}

/// Screened candidate evaluation: full entropy search only when the cheap
/// upper bound is positive. Candidates whose inputs are inadmissible (e.g.
/// too few samples per basis) are skipped.
fn evaluate<T: Real>(spec: &OptimizationSpec<T>, m: T, budget: &SecurityBudget<T>) -> Option<Candidate<T>> {
    let upper = rate_upper_bound(
        spec.model,
        &spec.protocol,
        spec.n_total,
        m,
        spec.qber,
        budget,
    )
    .ok()?;
    if !upper.is_finite() {
        return None;
    }
    if upper <= T::zero() {
        return Some(Candidate {
            rate: upper,
            screened: true,
            m,
            budget: *budget,
        });
    }
    let point = compute_rate(
        spec.model,
        &spec.protocol,
        spec.n_total,
        m,
        spec.qber,
        budget,
    )
    .ok()?;
    point.rate.is_finite().then_some(Candidate {
        rate: point.rate,
        screened: false,
        m,
        budget: *budget,
    })
}

/// Maximizes the rate over m and the budget split.
///
/// Grid search (parallel, deterministically reduced) then coordinate
/// descent in log space, halving steps on non-improving passes; the
/// refined result is never worse than the best grid point. When no
/// operating point is positive the returned point is the deterministic
/// best (non-operable) candidate, so `reported()` is 0 and the raw rate
/// and flags say why.
pub fn optimize_rate<T: Real>(spec: &OptimizationSpec<T>) -> Result<RatePoint<T>> {
    let ns = spec.protocol.sifting_ratio() * spec.n_total;
    let m_max = (ns - T::one()).floor();
    if !(m_max >= T::one()) {
        return Err(Error::Domain(format!(
            "sifted block N_s = {ns} leaves no room for estimation samples"
        )));
    }

    let ms: Vec<T> = match spec.fixed_m {
        Some(m) => {
            if !m.is_finite() || m < T::one() || m > ns - T::one() {
                return Err(Error::Domain(format!(
                    "fixed m must lie in [1, N_s - 1] = [1, {}], got {m}",
                    ns - T::one()
                )));
            }
            vec![m]
        }
        None => m_grid(m_max, spec.m_grid_density),
    };

    let budgets: Vec<SecurityBudget<T>> = match spec.fixed_budget {
        Some(b) => {
            b.validate(spec.model)?;
            let total = b.total(spec.model);
            if ((total - spec.eps_total) / spec.eps_total).abs() > real(1e-9) {
                return Err(Error::Domain(format!(
                    "fixed budget totals {total} under the {} composition rule, \
                     but eps_total is {}",
                    spec.model, spec.eps_total
                )));
            }
            vec![b]
        }
        None => share_grid(spec.model, spec.eps_grid_density)
            .into_iter()
            .map(|s| budget_from_shares(spec.model, spec.eps_total, s))
            .collect(),
    };

    let grid_best = (0..ms.len() * budgets.len())
        .into_par_iter()
        .map(|i| evaluate(spec, ms[i / budgets.len()], &budgets[i % budgets.len()]))
        .reduce(|| None, pick);

    let Some(mut best) = grid_best else {
        return Err(Error::Domain(
            "no admissible operating point on the search grid".into(),
        ));
    };

    if !best.screened && best.rate > T::zero() && spec.refine_iterations > 0 {
        best = refine(spec, best, m_max);
    }

    // Recompute the winner as a full point (screened winners carry only an
    // upper bound; all candidates were non-operable in that case).
    compute_rate(
        spec.model,
        &spec.protocol,
        spec.n_total,
        best.m,
        spec.qber,
        &best.budget,
    )
}

/// Coordinate descent over (ln m, ln shares) from the best grid point.
fn refine<T: Real>(spec: &OptimizationSpec<T>, start: Candidate<T>, m_max: T) -> Candidate<T> {
    let mut best = start;
    let mut shares = [
        best.budget.eps_pe,
        best.budget.eps_ec,
        best.budget.eps_pa,
        best.budget.eps_bar,
    ];
    let slots = free_slots(spec.model);
    let norm = slots.iter().fold(T::zero(), |a, &s| a.max(shares[s]));
    for s in &mut shares {
        *s = *s / norm;
    }

    let mut step_m = if spec.fixed_m.is_some() {
        0.0
    } else {
        (m_max.ln().to_f64().unwrap_or(1.0) / (spec.m_grid_density.max(2) - 1) as f64).max(1e-3)
    };
    let mut step_e = if spec.fixed_budget.is_some() {
        0.0
    } else {
        SHARE_DECADES * core::f64::consts::LN_10 / (spec.eps_grid_density - 1) as f64
    };

    for _ in 0..spec.refine_iterations {
        let mut gain = T::zero();
        // coordinate 0 is ln m, coordinates 1.. are the free shares
        let n_coords = 1 + slots.len();
        for coord in 0..n_coords {
            let step = if coord == 0 { step_m } else { step_e };
            if step == 0.0 {
                continue;
            }
            for dir in [1.0, -1.0] {
                let factor: T = real((dir * step).exp());
                let (m, budget) = if coord == 0 {
                    let m = (best.m * factor).max(T::one()).min(m_max);
                    (m, best.budget)
                } else {
                    let mut s = shares;
                    s[slots[coord - 1]] = s[slots[coord - 1]] * factor;
                    (best.m, budget_from_shares(spec.model, spec.eps_total, s))
                };
                let Some(cand) = evaluate(spec, m, &budget) else {
                    continue;
                };
                if !cand.screened && cand.rate > best.rate {
                    gain = gain + (cand.rate - best.rate);
                    if coord == 0 {
                        best = cand;
                    } else {
                        shares[slots[coord - 1]] = shares[slots[coord - 1]] * factor;
                        best = cand;
                    }
                    break;
                }
            }
        }
        if gain == T::zero() {
            step_m *= 0.5;
            step_e *= 0.5;
            if step_m < MIN_LOG_STEP && step_e < MIN_LOG_STEP {
                break;
            }
        } else if gain < real(GAIN_TOL) {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{LeakageModel, SampleAllocation};

    type Spec = OptimizationSpec<f64>;

    fn bb84_coll(n: f64, q: f64) -> Spec {
        Spec::new(
            AttackModel::Collective,
            ProtocolSpec::bb84(),
            n,
            q,
            1e-9,
        )
        .unwrap()
    }

    #[test]
    fn tiny_blocks_yield_zero_rate() {
        let point = optimize_rate(&bb84_coll(1e3, 0.1)).unwrap();
        assert!(point.rate <= 0.0);
        assert_eq!(point.reported(), 0.0);
    }

    #[test]
    fn optimum_is_operable_and_well_formed() {
        let spec = bb84_coll(1e6, 0.01);
        let point = optimize_rate(&spec).unwrap();
        assert!(point.rate > 0.0);
        assert!(point.m >= 1.0 && point.m <= 1e6 - 1.0);
        let total = point.budget.total(AttackModel::Collective);
        assert!(((total - 1e-9) / 1e-9).abs() < 1e-15);
        assert!(point.bounds.is_valid());
    }

    #[test]
    fn coherent_budget_pins_eps_pe_to_zero() {
        let spec = Spec::new(
            AttackModel::Coherent,
            ProtocolSpec::bb84(),
            1e7,
            0.02,
            1e-9,
        )
        .unwrap();
        let point = optimize_rate(&spec).unwrap();
        assert_eq!(point.budget.eps_pe, 0.0);
        let total = point.budget.total(AttackModel::Coherent);
        assert!(((total - 1e-9) / 1e-9).abs() < 1e-15);
        assert!(point.rate > 0.0);
    }

    #[test]
    fn optimization_is_deterministic() {
        let spec = bb84_coll(3e6, 0.03);
        let a = optimize_rate(&spec).unwrap();
        let b = optimize_rate(&spec).unwrap();
        assert_eq!(a.rate, b.rate);
        assert_eq!(a.m, b.m);
        assert_eq!(a.budget, b.budget);
    }

    #[test]
    fn refinement_never_hurts() {
        for q in [0.01, 0.05] {
            let base = bb84_coll(1e6, q);
            let coarse = optimize_rate(&base.with_refine_iterations(0)).unwrap();
            let refined = optimize_rate(&base).unwrap();
            assert!(
                refined.rate >= coarse.rate,
                "refined {} < grid {} at q={q}",
                refined.rate,
                coarse.rate
            );
        }
    }

    #[test]
    fn denser_grids_move_the_optimum_little() {
        let base = bb84_coll(1e6, 0.01);
        let a = optimize_rate(&base).unwrap();
        let b = optimize_rate(&base.with_grid_densities(48, 16).unwrap()).unwrap();
        assert!(
            (a.rate - b.rate).abs() < 1e-3,
            "default {} vs dense {}",
            a.rate,
            b.rate
        );
    }

    #[test]
    fn fixed_parameters_are_honored() {
        let base = bb84_coll(1e6, 0.02);
        let m_pin = optimize_rate(&base.with_fixed_m(12345.0)).unwrap();
        assert_eq!(m_pin.m, 12345.0);
        let budget = SecurityBudget::new(4e-10, 2e-10, 2e-10, 2e-10);
        let b_pin = optimize_rate(&base.with_fixed_budget(budget)).unwrap();
        assert_eq!(b_pin.budget, budget);
        let both = optimize_rate(&base.with_fixed_m(12345.0).with_fixed_budget(budget)).unwrap();
        assert_eq!(both.m, 12345.0);
        assert_eq!(both.budget, budget);
        // inconsistent pinned budget is rejected
        let bad = SecurityBudget::new(1e-10, 1e-10, 1e-10, 1e-10);
        assert!(optimize_rate(&base.with_fixed_budget(bad)).is_err());
        assert!(optimize_rate(&base.with_fixed_m(0.5)).is_err());
    }

    #[test]
    fn more_budget_never_hurts() {
        let tight = optimize_rate(&bb84_coll(1e6, 0.02)).unwrap();
        let loose = optimize_rate(&Spec::new(
            AttackModel::Collective,
            ProtocolSpec::bb84(),
            1e6,
            0.02,
            1e-6,
        )
        .unwrap())
        .unwrap();
        assert!(loose.rate >= tight.rate);
    }

    #[test]
    fn postselection_survives_huge_blocks() {
        let spec = Spec::new(
            AttackModel::PostSelection,
            ProtocolSpec::bb84(),
            1e16,
            0.01,
            1e-9,
        )
        .unwrap();
        let point = optimize_rate(&spec).unwrap();
        assert!(point.rate.is_finite());
        assert!(point.rate > 0.0);
        // the reported budget is the user-facing (pre-shrink) one
        let total = point.budget.total(AttackModel::PostSelection);
        assert!(((total - 1e-9) / 1e-9).abs() < 1e-15);
    }

    #[test]
    fn comparison_conventions_optimize_cleanly() {
        let p = ProtocolSpec::bb84().with_comparison_conventions();
        assert_eq!(p.sample_allocation(), SampleAllocation::PerBasis);
        assert_eq!(p.leakage_model(), LeakageModel::WorstCaseInSet);
        let spec = Spec::new(AttackModel::Coherent, p, 1e6, 0.01, 1e-9).unwrap();
        let point = optimize_rate(&spec).unwrap();
        assert!(point.rate > 0.0);
        assert!(point.m >= 2.0); // at least one sample per monitored basis
    }

    #[test]
    fn density_validation() {
        let base = bb84_coll(1e6, 0.01);
        assert!(base.with_grid_densities(1, 8).is_err());
        assert!(base.with_grid_densities(8, 7).is_err());
        assert!(Spec::new(
            AttackModel::Collective,
            ProtocolSpec::bb84(),
            1e6,
            0.01,
            1.0
        )
        .is_err());
    }
}
