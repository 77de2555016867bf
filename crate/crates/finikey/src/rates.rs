//! Finite-key secret-key rates for the three analyses: collective attacks,
//! coherent attacks via a min-entropy reduction, and coherent attacks via
//! post-selection on top of the collective rate.
//!
//! A rate evaluation fixes the protocol conventions, the initial signal
//! count N, the estimation-sample count m, the observed error rate, and a
//! security budget. The sifted block N_s = sifting_ratio * N splits into m
//! estimation samples and n = N_s - m key signals. All rates are per
//! *initial* signal, so protocol overhead (sifting, estimation) is priced
//! in; raw values may be negative, [`RatePoint::reported`] floors at zero.

use crate::{
    bounds::{aep_correction, leak_ec, xi_att, xi_pe, FluctuationBounds},
    entropy::{binary_entropy, min_key_term, min_sxe, ErrorConstraintSet},
    real, ConstraintMode, Error, ProtocolKind, Real, Result,
};

/// Which adversary the key rate is secured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackModel {
    /// Adversary interacts with each signal identically and independently.
    Collective,
    /// Unrestricted adversary, handled by widening the estimation region
    /// and smoothing parameter.
    Coherent,
    /// Unrestricted adversary, handled by shrinking a collective budget by
    /// (N+1)^15 and paying 30 log2(N+1)/N.
    PostSelection,
}

impl AttackModel {
    pub const ALL: [AttackModel; 3] = [
        AttackModel::Collective,
        AttackModel::Coherent,
        AttackModel::PostSelection,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            AttackModel::Collective => "collective",
            AttackModel::Coherent => "coherent",
            AttackModel::PostSelection => "postselection",
        }
    }
}

impl core::fmt::Display for AttackModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.token())
    }
}

/// How the estimation samples and failure probability are split across the
/// monitored bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SampleAllocation {
    /// One pooled estimate: all m samples bound one deviation at the full
    /// failure probability.
    #[default]
    Pooled,
    /// m is split evenly over the monitored bases and the failure
    /// probability union-bounded over them, as when each basis is estimated
    /// from its own sifted subset.
    PerBasis,
}

/// Which error rate prices the error-correction leakage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LeakageModel {
    /// Leakage at the observed rate: n * f * h(qber).
    #[default]
    ObservedRate,
    /// Leakage at the key-basis rate of the entropy-minimizing state, taken
    /// inside the minimization (the adversary also picks the channel the
    /// reconciliation must handle).
    WorstCaseInSet,
}

/// Protocol conventions for a rate evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolSpec<T> {
    kind: ProtocolKind,
    sifting_ratio: T,
    ec_efficiency: T,
    constraint_mode: ConstraintMode,
    sample_allocation: SampleAllocation,
    leakage_model: LeakageModel,
}

impl<T: Real> ProtocolSpec<T> {
    fn defaults(kind: ProtocolKind) -> Self {
        Self {
            kind,
            sifting_ratio: T::one(),
            ec_efficiency: real(1.1),
            constraint_mode: ConstraintMode::PerBasis,
            sample_allocation: SampleAllocation::Pooled,
            leakage_model: LeakageModel::ObservedRate,
        }
    }

    /// Two monitored bases, asymptotically efficient sifting (ratio 1),
    /// pooled estimation, leakage at the observed rate, f = 1.1.
    pub fn bb84() -> Self {
        Self::defaults(ProtocolKind::Bb84)
    }

    /// Three monitored bases, otherwise the same defaults as [`Self::bb84`].
    pub fn six_state() -> Self {
        Self::defaults(ProtocolKind::SixState)
    }

    /// Fraction of signals surviving sifting, in (0, 1].
    pub fn with_sifting_ratio(mut self, ratio: T) -> Result<Self> {
        if !ratio.is_finite() || !(ratio > T::zero()) || ratio > T::one() {
            return Err(Error::Domain(format!(
                "sifting ratio must lie in (0, 1], got {ratio}"
            )));
        }
        self.sifting_ratio = ratio;
        Ok(self)
    }

    /// Uniformly random basis choice on both sides: ratio 1/2.
    pub fn with_symmetric_sifting(self) -> Self {
        self.with_sifting_ratio(real(0.5))
            .expect("1/2 is a valid sifting ratio")
    }

    /// Reconciliation inefficiency f >= 1 multiplying h(qber).
    pub fn with_ec_efficiency(mut self, f: T) -> Result<Self> {
        if !f.is_finite() || f < T::one() {
            return Err(Error::Domain(format!(
                "ec efficiency must be >= 1, got {f}"
            )));
        }
        self.ec_efficiency = f;
        Ok(self)
    }

    pub fn with_sample_allocation(mut self, alloc: SampleAllocation) -> Self {
        self.sample_allocation = alloc;
        self
    }

    pub fn with_leakage_model(mut self, model: LeakageModel) -> Self {
        self.leakage_model = model;
        self
    }

    pub fn with_constraint_mode(mut self, mode: ConstraintMode) -> Self {
        self.constraint_mode = mode;
        self
    }

    /// The conventions used for model-comparison figures: symmetric
    /// sifting, per-basis sample allocation, worst-case leakage. These price
    /// the protocol overheads conservatively and uniformly across the three
    /// analyses so their gaps are meaningful.
    pub fn with_comparison_conventions(self) -> Self {
        self.with_symmetric_sifting()
            .with_sample_allocation(SampleAllocation::PerBasis)
            .with_leakage_model(LeakageModel::WorstCaseInSet)
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn sifting_ratio(&self) -> T {
        self.sifting_ratio
    }

    pub fn ec_efficiency(&self) -> T {
        self.ec_efficiency
    }

    pub fn constraint_mode(&self) -> ConstraintMode {
        self.constraint_mode
    }

    pub fn sample_allocation(&self) -> SampleAllocation {
        self.sample_allocation
    }

    pub fn leakage_model(&self) -> LeakageModel {
        self.leakage_model
    }
}

/// Failure-probability budget of one rate evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecurityBudget<T> {
    /// Parameter estimation. Unused (must be 0) under the coherent model,
    /// whose estimation failure is folded into `eps_bar`.
    pub eps_pe: T,
    /// Error-correction verification.
    pub eps_ec: T,
    /// Privacy amplification.
    pub eps_pa: T,
    /// Smoothing / attack-statistics parameter.
    pub eps_bar: T,
}

impl<T: Real> SecurityBudget<T> {
    pub fn new(eps_pe: T, eps_ec: T, eps_pa: T, eps_bar: T) -> Self {
        Self {
            eps_pe,
            eps_ec,
            eps_pa,
            eps_bar,
        }
    }

    /// Equal split of a total budget under the model's composition rule.
    pub fn equal_split(model: AttackModel, eps_total: T) -> Self {
        let four: T = real(4.0);
        match model {
            AttackModel::Collective | AttackModel::PostSelection => {
                let e = eps_total / four;
                Self::new(e, e, e, e)
            }
            // pe share folded into eps_bar, which enters the total twice
            AttackModel::Coherent => {
                let e = eps_total / four;
                Self::new(T::zero(), e, e, e)
            }
        }
    }

    /// Total failure probability under the model's composition rule:
    /// pe + ec + pa + bar for collective/post-selection,
    /// pe + ec + pa + 2 bar for coherent.
    pub fn total(&self, model: AttackModel) -> T {
        let base = self.eps_pe + self.eps_ec + self.eps_pa + self.eps_bar;
        match model {
            AttackModel::Collective | AttackModel::PostSelection => base,
            AttackModel::Coherent => base + self.eps_bar,
        }
    }

    /// Every component scaled by `factor` (used by post-selection).
    pub fn scaled(&self, factor: T) -> Self {
        Self::new(
            self.eps_pe * factor,
            self.eps_ec * factor,
            self.eps_pa * factor,
            self.eps_bar * factor,
        )
    }

    pub fn validate(&self, model: AttackModel) -> Result<()> {
        let in_unit = |name: &str, v: T, allow_zero: bool| -> Result<()> {
            let lo_ok = if allow_zero { v >= T::zero() } else { v > T::zero() };
            if !v.is_finite() || !lo_ok || v >= T::one() {
                return Err(Error::Domain(format!(
                    "{name} must lie in {}, got {v}",
                    if allow_zero { "[0, 1)" } else { "(0, 1)" }
                )));
            }
            Ok(())
        };
        let pe_optional = model == AttackModel::Coherent;
        in_unit("eps_pe", self.eps_pe, pe_optional)?;
        in_unit("eps_ec", self.eps_ec, false)?;
        in_unit("eps_pa", self.eps_pa, false)?;
        in_unit("eps_bar", self.eps_bar, false)?;
        if self.total(model) >= T::one() {
            return Err(Error::Domain("total failure probability must be < 1".into()));
        }
        Ok(())
    }
}

/// One evaluated operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePoint<T> {
    pub protocol: ProtocolSpec<T>,
    pub attack_model: AttackModel,
    /// Initial signal count N.
    pub n_total: T,
    /// Estimation samples m.
    pub m: T,
    pub qber: T,
    /// For post-selection this is the budget *before* the (N+1)^15 shrink.
    pub budget: SecurityBudget<T>,
    /// Secret bits per initial signal; negative when the point is not
    /// operable.
    pub rate: T,
    pub bounds: FluctuationBounds<T>,
    /// Bell weights of the entropy-minimizing compatible state.
    pub minimizer_lambda: [T; 4],
    /// Set when no compatible state exists for the estimation region.
    pub infeasible: bool,
}

impl<T: Real> RatePoint<T> {
    /// The operational rate: raw rate floored at zero.
    pub fn reported(&self) -> T {
        self.rate.max(T::zero())
    }

    /// Sifted block length N_s.
    pub fn n_sifted(&self) -> T {
        self.protocol.sifting_ratio * self.n_total
    }

    /// Key signals n = N_s - m.
    pub fn n_key(&self) -> T {
        self.n_sifted() - self.m
    }
}

/// Scalar inputs shared by the per-model assemblies.
struct Blocks<T> {
    n_total: T,
    m: T,
    n: T,
    /// Monitored bases, as a scalar, for sample allocation.
    nb: T,
}

fn split_blocks<T: Real>(p: &ProtocolSpec<T>, n_total: T, m: T, qber: T) -> Result<Blocks<T>> {
    if !n_total.is_finite() || !(n_total > T::zero()) {
        return Err(Error::Domain(format!("N must be positive, got {n_total}")));
    }
    if !qber.is_finite() || qber < T::zero() || qber > real(0.5) {
        return Err(Error::Domain(format!(
            "qber must lie in [0, 1/2], got {qber}"
        )));
    }
    let n_sift = p.sifting_ratio * n_total;
    if !(m >= T::one()) || !m.is_finite() {
        return Err(Error::Domain(format!("m must be >= 1, got {m}")));
    }
    let n = n_sift - m;
    if !(n >= T::one()) {
        return Err(Error::Domain(format!(
            "m must leave at least one key signal: N_s = {n_sift}, m = {m}"
        )));
    }
    let nb = match p.sample_allocation {
        SampleAllocation::Pooled => T::one(),
        SampleAllocation::PerBasis => real(f64::from(p.kind.monitored_bases())),
    };
    if p.sample_allocation == SampleAllocation::PerBasis && !(m / nb >= T::one()) {
        return Err(Error::Domain(format!(
            "per-basis estimation needs m >= {nb} samples, got {m}"
        )));
    }
    Ok(Blocks { n_total, m, n, nb })
}

/// Estimation deviation actually used by the collective analysis.
fn xi_estimation<T: Real>(b: &Blocks<T>, eps_pe: T) -> Result<T> {
    xi_pe(eps_pe / b.nb, b.n, b.m / b.nb)
}

/// Estimation deviation actually used by the coherent analysis.
fn xi_coherent<T: Real>(b: &Blocks<T>, eps_bar: T) -> Result<(T, T, T)> {
    let two = real::<T>(2.0);
    let att = xi_att(eps_bar, 2, b.n)?;
    let pe_part = xi_pe(eps_bar / (two * b.nb), b.n, b.m / b.nb)?;
    Ok((att / two + pe_part, att, pe_part))
}

/// Key contribution per signal net of reconciliation, minimized over the
/// compatible states, together with the minimizer and the rate pricing the
/// leakage.
fn key_term_net<T: Real>(
    p: &ProtocolSpec<T>,
    qber: T,
    xi: T,
) -> Result<(T, [T; 4], T, bool)> {
    let constraints = ErrorConstraintSet::new(p.kind, p.constraint_mode, qber, xi)?;
    let f = p.ec_efficiency;
    let solved = match p.leakage_model {
        LeakageModel::ObservedRate => min_sxe(&constraints).map(|m| {
            let net = m.value - f * binary_entropy(qber).expect("qber validated");
            (net, m.minimizer.lambda(), qber)
        }),
        LeakageModel::WorstCaseInSet => min_key_term(&constraints, f).map(|m| {
            let ez = m.minimizer.e_z();
            (m.value, m.minimizer.lambda(), ez)
        }),
    };
    match solved {
        Ok((net, lambda, leak_rate)) => Ok((net, lambda, leak_rate, false)),
        Err(Error::Infeasible(_)) => Ok((T::zero(), [T::zero(); 4], qber, true)),
        Err(e) => Err(e),
    }
}

/// The (N+1)^15 budget shrink and 30 log2(N+1)/N rate penalty that buy
/// coherent security from a collective statement.
fn post_shrink<T: Real>(n_total: T, budget: &SecurityBudget<T>) -> Result<(SecurityBudget<T>, T)> {
    if !n_total.is_finite() || !(n_total > T::zero()) {
        return Err(Error::Domain(format!("N must be positive, got {n_total}")));
    }
    let shrink = (n_total + T::one()).powi(15);
    if !shrink.is_finite() {
        return Err(Error::Domain(format!(
            "post-selection shrink (N+1)^15 overflows at N = {n_total}"
        )));
    }
    let shrunk = budget.scaled(T::one() / shrink);
    if !(shrunk.eps_pe > T::zero())
        || !(shrunk.eps_ec > T::zero())
        || !(shrunk.eps_pa > T::zero())
        || !(shrunk.eps_bar > T::zero())
    {
        return Err(Error::Domain(
            "post-selection budget underflows after the (N+1)^15 shrink".into(),
        ));
    }
    let penalty = real::<T>(30.0) * (n_total + T::one()).log2() / n_total;
    Ok((shrunk, penalty))
}

/// Cheap upper bound on the rate, using S(X|E) <= 1 and the smallest
/// reconciliation cost the leakage model can incur. Never below the true
/// rate; lets optimizers skip the entropy search when even this is
/// negative.
pub(crate) fn rate_upper_bound<T: Real>(
    model: AttackModel,
    p: &ProtocolSpec<T>,
    n_total: T,
    m: T,
    qber: T,
    budget: &SecurityBudget<T>,
) -> Result<T> {
    budget.validate(model)?;
    if model == AttackModel::PostSelection {
        let (shrunk, penalty) = post_shrink(n_total, budget)?;
        let core = rate_upper_bound(AttackModel::Collective, p, n_total, m, qber, &shrunk)?;
        return Ok(core - penalty);
    }
    let b = split_blocks(p, n_total, m, qber)?;
    let (xi, aep) = match model {
        AttackModel::Collective | AttackModel::PostSelection => (
            xi_estimation(&b, budget.eps_pe)?,
            aep_correction(b.n, budget.eps_bar)?,
        ),
        AttackModel::Coherent => {
            let two = real::<T>(2.0);
            (
                xi_coherent(&b, budget.eps_bar)?.0,
                aep_correction(b.n, budget.eps_bar / (two * b.n * b.n))?,
            )
        }
    };
    let h_min = match p.leakage_model {
        LeakageModel::ObservedRate => binary_entropy(qber)?,
        LeakageModel::WorstCaseInSet => {
            let lo = (qber - xi).max(T::zero());
            let hi = (qber + xi).min(T::one());
            binary_entropy(lo)?.min(binary_entropy(hi)?)
        }
    };
    let key_upper = T::one() - p.ec_efficiency * h_min;
    Ok(finish_rate(model, &b, budget, key_upper, aep))
}

/// (n/N)(key_net - log2(2/eps_ec)/n - aep) + 2/N log2(2 eps_pa), plus the
/// coherent model's -1/N dimension penalty.
fn finish_rate<T: Real>(
    model: AttackModel,
    b: &Blocks<T>,
    budget: &SecurityBudget<T>,
    key_net: T,
    aep: T,
) -> T {
    let confirm = T::one() - budget.eps_ec.log2(); // log2(2/eps_ec)
    let pa_gain = (T::one() + budget.eps_pa.log2()) * real::<T>(2.0) / b.n_total;
    let mut rate = (b.n / b.n_total) * (key_net - confirm / b.n - aep) + pa_gain;
    if model == AttackModel::Coherent {
        rate = rate - T::one() / b.n_total;
    }
    rate
}

/// Secret-key rate against collective attacks.
pub fn rate_collective<T: Real>(
    p: &ProtocolSpec<T>,
    n_total: T,
    m: T,
    qber: T,
    budget: &SecurityBudget<T>,
) -> Result<RatePoint<T>> {
    budget.validate(AttackModel::Collective)?;
    let b = split_blocks(p, n_total, m, qber)?;
    let xi = xi_estimation(&b, budget.eps_pe)?;
    let (key_net, lambda, leak_rate, infeasible) = key_term_net(p, qber, xi)?;
    let aep = aep_correction(b.n, budget.eps_bar)?;
    let rate = if infeasible {
        T::zero()
    } else {
        finish_rate(AttackModel::Collective, &b, budget, key_net, aep)
    };
    let (coh, att, _) = xi_coherent(&b, budget.eps_bar)?;
    Ok(RatePoint {
        protocol: *p,
        attack_model: AttackModel::Collective,
        n_total,
        m,
        qber,
        budget: *budget,
        rate,
        bounds: FluctuationBounds {
            xi_pe: xi,
            xi_att: att,
            xi_coh: coh,
            leak_bits: leak_ec(b.n, leak_rate, p.ec_efficiency, budget.eps_ec)?,
            aep_bits_per_signal: aep,
        },
        minimizer_lambda: lambda,
        infeasible,
    })
}

/// Secret-key rate against coherent attacks by the min-entropy route: the
/// estimation region widens to xi_att/2 + xi_pe(eps_bar/2), the smoothing
/// parameter tightens to eps_bar/(2 n^2), and one bit of rate pays for the
/// dimension of the symmetric subspace.
pub fn rate_coherent<T: Real>(
    p: &ProtocolSpec<T>,
    n_total: T,
    m: T,
    qber: T,
    budget: &SecurityBudget<T>,
) -> Result<RatePoint<T>> {
    budget.validate(AttackModel::Coherent)?;
    let b = split_blocks(p, n_total, m, qber)?;
    let two = real::<T>(2.0);
    let (xi, att, pe_part) = xi_coherent(&b, budget.eps_bar)?;
    let (key_net, lambda, leak_rate, infeasible) = key_term_net(p, qber, xi)?;
    let aep = aep_correction(b.n, budget.eps_bar / (two * b.n * b.n))?;
    let rate = if infeasible {
        T::zero()
    } else {
        finish_rate(AttackModel::Coherent, &b, budget, key_net, aep)
    };
    Ok(RatePoint {
        protocol: *p,
        attack_model: AttackModel::Coherent,
        n_total,
        m,
        qber,
        budget: *budget,
        rate,
        bounds: FluctuationBounds {
            xi_pe: pe_part,
            xi_att: att,
            xi_coh: xi,
            leak_bits: leak_ec(b.n, leak_rate, p.ec_efficiency, budget.eps_ec)?,
            aep_bits_per_signal: aep,
        },
        minimizer_lambda: lambda,
        infeasible,
    })
}

/// Secret-key rate against coherent attacks by post-selection: the
/// collective rate at a budget shrunk by (N+1)^15, minus 30 log2(N+1)/N.
pub fn rate_postselection<T: Real>(
    p: &ProtocolSpec<T>,
    n_total: T,
    m: T,
    qber: T,
    budget: &SecurityBudget<T>,
) -> Result<RatePoint<T>> {
    budget.validate(AttackModel::PostSelection)?;
    let (shrunk, penalty) = post_shrink(n_total, budget)?;
    let inner = rate_collective(p, n_total, m, qber, &shrunk)?;
    Ok(RatePoint {
        attack_model: AttackModel::PostSelection,
        budget: *budget,
        rate: if inner.infeasible {
            T::zero()
        } else {
            inner.rate - penalty
        },
        ..inner
    })
}

/// Dispatch on the attack model.
pub fn compute_rate<T: Real>(
    model: AttackModel,
    p: &ProtocolSpec<T>,
    n_total: T,
    m: T,
    qber: T,
    budget: &SecurityBudget<T>,
) -> Result<RatePoint<T>> {
    match model {
        AttackModel::Collective => rate_collective(p, n_total, m, qber, budget),
        AttackModel::Coherent => rate_coherent(p, n_total, m, qber, budget),
        AttackModel::PostSelection => rate_postselection(p, n_total, m, qber, budget),
    }
}
