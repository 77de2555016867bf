//! Closed-form statistical and entropic corrections for finite-key analysis.
//!
//! Parameter-estimation deviation ([`xi_pe`]), attack-statistics deviation
//! ([`xi_att`]), their combination for the coherent analysis ([`xi_coh`]),
//! error-correction leakage ([`leak_ec`]), the finite-size smooth-entropy
//! correction ([`aep_correction`]), and the multinomial floor inequality
//! ([`multinomial_floor_holds`]). Probabilities are passed in linear scale;
//! evaluation goes through `ln(1/eps)` so security parameters as small as
//! 1e-250 (post-selection-shrunk budgets) lose no accuracy.

use crate::{entropy::binary_entropy, real, Error, Real, Result};

/// Audit record of every bound entering one rate evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluctuationBounds<T> {
    /// Half-width of the estimation region actually used by the model.
    pub xi_pe: T,
    /// Attack-statistics deviation at the key block length.
    pub xi_att: T,
    /// Combined deviation of the coherent analysis. Always equals
    /// `xi_att(eps_bar, 2, n)/2 + xi_pe(eps_bar/2, n, m)`, composed under the
    /// same sample-allocation convention as the `xi_pe` field.
    pub xi_coh: T,
    /// Error-correction leakage in bits.
    pub leak_bits: T,
    /// Smooth-entropy correction in bits per key signal.
    pub aep_bits_per_signal: T,
}

impl<T: Real> FluctuationBounds<T> {
    /// All fields finite and non-negative.
    pub fn is_valid(&self) -> bool {
        [
            self.xi_pe,
            self.xi_att,
            self.xi_coh,
            self.leak_bits,
            self.aep_bits_per_signal,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= T::zero())
    }
}

fn check_eps<T: Real>(name: &str, eps: T, max: f64) -> Result<()> {
    if !eps.is_finite() || !(eps > T::zero()) || eps > real(max) {
        return Err(Error::Domain(format!(
            "{name} must lie in (0, {max}], got {eps}"
        )));
    }
    Ok(())
}

fn check_count<T: Real>(name: &str, v: T) -> Result<()> {
    if !v.is_finite() || !(v >= T::one()) {
        return Err(Error::Domain(format!("{name} must be >= 1, got {v}")));
    }
    Ok(())
}

/// Deviation between the error rate observed on `m` estimation samples and
/// the rate on the remaining `n` signals, valid except with probability
/// `eps`: sqrt((n+m)(m+1) ln(1/eps) / (8 m^2 n)).
///
/// Counts may be fractional (log-spaced sweeps); the bound interpolates
/// monotonically.
pub fn xi_pe<T: Real>(eps: T, n: T, m: T) -> Result<T> {
    check_eps("eps", eps, 1.0)?;
    check_count("n", n)?;
    check_count("m", m)?;
    let l = -eps.ln(); // ln(1/eps) >= 0
    let num = (n + m) * (m + T::one()) * l;
    let den = real::<T>(8.0) * m * m * n;
    Ok((num / den).sqrt())
}

/// Deviation of the observed outcome frequencies of a `chi`-outcome POVM
/// applied to `n` signals, valid except with probability `eps`:
/// sqrt((8 ln(2) chi + 8 ln(1/eps)) / n). For chi = 2 this is
/// sqrt((16 ln 2 + 8 ln(1/eps)) / n).
pub fn xi_att<T: Real>(eps: T, chi: u32, n: T) -> Result<T> {
    check_eps("eps", eps, 1.0)?;
    if chi < 2 {
        return Err(Error::Domain(format!("chi must be >= 2, got {chi}")));
    }
    check_count("n", n)?;
    let ln2 = real::<T>(core::f64::consts::LN_2);
    let eight = real::<T>(8.0);
    let num = eight * ln2 * real::<T>(f64::from(chi)) + eight * (-eps.ln());
    Ok((num / n).sqrt())
}

/// Combined deviation for the coherent analysis:
/// `xi_att(eps_bar, 2, n)/2 + xi_pe(eps_bar/2, n, m)`, exactly as composed.
pub fn xi_coh<T: Real>(eps_bar: T, n: T, m: T) -> Result<T> {
    let two = real::<T>(2.0);
    Ok(xi_att(eps_bar, 2, n)? / two + xi_pe(eps_bar / two, n, m)?)
}

/// Bits leaked during error correction of an `n`-bit sifted key at quantum
/// bit error rate `qber`: n * efficiency * h(qber) + log2(2/eps_ec).
pub fn leak_ec<T: Real>(n: T, qber: T, efficiency: T, eps_ec: T) -> Result<T> {
    check_count("n", n)?;
    if !qber.is_finite() || qber < T::zero() || qber > real(0.5) {
        return Err(Error::Domain(format!(
            "qber must lie in [0, 1/2], got {qber}"
        )));
    }
    if !efficiency.is_finite() || efficiency < T::one() {
        return Err(Error::Domain(format!(
            "efficiency must be >= 1, got {efficiency}"
        )));
    }
    check_eps("eps_ec", eps_ec, 1.0)?;
    if eps_ec == T::one() {
        return Err(Error::Domain("eps_ec must be < 1".into()));
    }
    // log2(2/eps) = 1 - log2(eps)
    Ok(n * efficiency * binary_entropy(qber)? + (T::one() - eps_ec.log2()))
}

/// Finite-size correction to the asymptotic equipartition property, in bits
/// per signal: 5 * sqrt(log2(2/eps_smooth) / n).
///
/// The boundary `eps_smooth = 2` (correction 0) is accepted for testing.
pub fn aep_correction<T: Real>(n: T, eps_smooth: T) -> Result<T> {
    check_count("n", n)?;
    check_eps("eps_smooth", eps_smooth, 2.0)?;
    let log_term = T::one() - eps_smooth.log2();
    // eps_smooth in (1, 2] makes log_term a tiny negative by rounding only.
    Ok(real::<T>(5.0) * (log_term.max(T::zero()) / n).sqrt())
}

/// ln(k!) via lgamma; exact enough (< 1e-14 relative) over the tested range.
fn ln_factorial(k: u64) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

/// Checks the multinomial floor inequality for a composition of n = Σ counts:
/// multinomial(n; counts) * Π (counts_i/n)^{counts_i} > 1/n², evaluated in
/// log space as ln(multinomial) + Σ counts_i ln(counts_i/n) > -2 ln n.
pub fn multinomial_floor_holds(counts: [u64; 4]) -> Result<bool> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Domain("counts must sum to n >= 1".into()));
    }
    let nf = n as f64;
    let mut lhs = ln_factorial(n);
    for &k in &counts {
        lhs -= ln_factorial(k);
        if k > 0 {
            lhs += k as f64 * (k as f64 / nf).ln();
        }
    }
    Ok(lhs > -2.0 * nf.ln())
}
