//! `finikey selftest`: recompute core quantities through the oracle's
//! independent routes and verify the agreement bands. Everything is seeded,
//! so a failure is reproducible with the same flags.

use finikey::entropy::{conditional_entropy_xe, min_sxe, ErrorConstraintSet};
use finikey::oracle::{
    aep_correction_hp, dd, leak_ec_hp, min_sxe_grid, multinomial_floor_spot_check,
    random_bell_state, sxe_second_path, xi_att_hp, xi_pe_hp, SplitMix64,
};
use finikey::{bounds, ConstraintMode, ProtocolKind};

/// Constraint sets the grid-band check runs over: protocol, mode, center,
/// half-width. Centers/widths are exact multiples of the oracle grid's
/// resolution; half-widths stay <= 0.05 to keep the scan exhaustive.
const GRID_POINTS: [(ProtocolKind, ConstraintMode, f64, f64); 20] = [
    (ProtocolKind::Bb84, ConstraintMode::PerBasis, 0.0, 0.0),
    (ProtocolKind::Bb84, ConstraintMode::PerBasis, 0.01, 0.0),
    (ProtocolKind::Bb84, ConstraintMode::PerBasis, 0.05, 0.0),
    (ProtocolKind::Bb84, ConstraintMode::PerBasis, 0.1, 0.0),
    (ProtocolKind::Bb84, ConstraintMode::PerBasis, 0.03, 0.02),
    (ProtocolKind::Bb84, ConstraintMode::PerBasis, 0.11, 0.05),
    (ProtocolKind::Bb84, ConstraintMode::PerBasis, 0.25, 0.05),
    (ProtocolKind::Bb84, ConstraintMode::Averaged, 0.02, 0.02),
    (ProtocolKind::Bb84, ConstraintMode::Averaged, 0.05, 0.01),
    (ProtocolKind::Bb84, ConstraintMode::Averaged, 0.1, 0.03),
    (ProtocolKind::SixState, ConstraintMode::PerBasis, 0.0, 0.0),
    (ProtocolKind::SixState, ConstraintMode::PerBasis, 0.01, 0.0),
    (ProtocolKind::SixState, ConstraintMode::PerBasis, 0.05, 0.0),
    (ProtocolKind::SixState, ConstraintMode::PerBasis, 0.1, 0.0),
    (ProtocolKind::SixState, ConstraintMode::PerBasis, 0.02, 0.015),
    (ProtocolKind::SixState, ConstraintMode::PerBasis, 0.12, 0.04),
    (ProtocolKind::SixState, ConstraintMode::PerBasis, 0.3, 0.05),
    (ProtocolKind::SixState, ConstraintMode::Averaged, 0.05, 0.01),
    (ProtocolKind::SixState, ConstraintMode::Averaged, 0.1, 0.025),
    (ProtocolKind::SixState, ConstraintMode::Averaged, 0.15, 0.05),
];

pub fn run(samples: usize, seed: u64) -> i32 {
    let checks: [(&str, Box<dyn Fn() -> Result<String, String>>); 6] = [
        ("rng-reference", Box::new(rng_reference)),
        ("dd-log", Box::new(dd_log)),
        (
            "bounds-recompute",
            Box::new(move || bounds_recompute(seed)),
        ),
        (
            "entropy-dual-path",
            Box::new(move || entropy_dual_path(seed)),
        ),
        ("minimizer-grid-band", Box::new(minimizer_grid_band)),
        (
            "multinomial-floor",
            Box::new(move || multinomial_floor(samples, seed)),
        ),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("selftest {name}: ok — {detail}"),
            Err(detail) => {
                failures += 1;
                println!("selftest {name}: FAIL — {detail}");
            }
        }
    }
    if failures == 0 {
        println!("selftest: all checks passed");
        0
    } else {
        eprintln!("selftest: {failures} check(s) failed");
        crate::EXIT_DOMAIN
    }
}

fn rng_reference() -> Result<String, String> {
    let mut rng = SplitMix64::new(0);
    let got = rng.next_u64();
    if got == 0xE220_A839_7B1D_CDAF {
        Ok("seed-0 stream matches the published vector".into())
    } else {
        Err(format!("seed-0 first output {got:#x}"))
    }
}

fn dd_log() -> Result<String, String> {
    let diff = dd::collapse(
        dd::ln(dd::TwoFloat::from(2f64.powi(100))) - dd::TwoFloat::from(100.0) * dd::ln2(),
    )
    .abs();
    if diff > 1e-28 {
        return Err(format!("ln(2^100) off by {diff:.2e}"));
    }
    let mut rng = SplitMix64::new(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = dd::TwoFloat::from(0.5 + 3.0 * rng.next_f64());
        let err = dd::collapse(dd::ln(x * x) - dd::TwoFloat::from(2.0) * dd::ln(x)).abs();
        worst = worst.max(err);
    }
    if worst <= 1e-28 {
        Ok(format!("log self-consistency at {worst:.1e} (needs <= 1e-28)"))
    } else {
        Err(format!("ln(x^2) vs 2 ln x deviates by {worst:.1e}"))
    }
}

fn bounds_recompute(seed: u64) -> Result<String, String> {
    let mut rng = SplitMix64::new(seed ^ 0xb0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let eps = 10f64.powf(-(1.0 + 39.0 * rng.next_f64()));
        let n = 10f64.powf(1.0 + 14.0 * rng.next_f64());
        let m = 10f64.powf(1.0 + 14.0 * rng.next_f64());
        let q = 0.5 * rng.next_f64();
        let chi = 2 + (rng.next_u64() % 2) as u32;
        let pairs = [
            (bounds::xi_pe(eps, n, m), xi_pe_hp(eps, n, m)),
            (bounds::xi_att(eps, chi, n), xi_att_hp(eps, chi, n)),
            (bounds::leak_ec(n, q, 1.1, eps), leak_ec_hp(n, q, 1.1, eps)),
            (bounds::aep_correction(n, eps), aep_correction_hp(n, eps)),
        ];
        for (prod, hp) in pairs {
            let prod = prod.map_err(|e| e.to_string())?;
            worst = worst.max((prod - hp).abs() / hp.abs().max(f64::MIN_POSITIVE));
        }
    }
    if worst <= 1e-12 {
        Ok(format!(
            "double precision vs double-double at {worst:.1e} relative (needs <= 1e-12)"
        ))
    } else {
        Err(format!("bound recomputation deviates by {worst:.1e} relative"))
    }
}

fn entropy_dual_path(seed: u64) -> Result<String, String> {
    let mut rng = SplitMix64::new(seed ^ 0xe0);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let state = random_bell_state(&mut rng);
        let primary = conditional_entropy_xe(&state).map_err(|e| e.to_string())?;
        worst = worst.max((primary - sxe_second_path(&state)).abs());
    }
    if worst <= 1e-9 {
        Ok(format!(
            "8x8 assembly vs purification route at {worst:.1e} (needs <= 1e-9)"
        ))
    } else {
        Err(format!("entropy routes deviate by {worst:.1e}"))
    }
}

fn minimizer_grid_band() -> Result<String, String> {
    let mut spread = (0.0f64, f64::INFINITY);
    for (kind, mode, c, w) in GRID_POINTS {
        let set = ErrorConstraintSet::new(kind, mode, c, w).map_err(|e| e.to_string())?;
        let grid = min_sxe_grid(&set).map_err(|e| e.to_string())?;
        let prod = min_sxe(&set).map_err(|e| e.to_string())?.value;
        if prod < grid - 5e-3 || prod > grid + 1e-6 {
            return Err(format!(
                "{kind:?}/{mode:?} center {c} width {w}: search {prod} vs grid {grid}"
            ));
        }
        spread = (spread.0.max(prod - grid), spread.1.min(prod - grid));
    }
    Ok(format!(
        "20 sets: search minus grid within [{:.1e}, {:.1e}] (needs [-5e-3, 1e-6])",
        spread.1, spread.0
    ))
}

fn multinomial_floor(samples: usize, seed: u64) -> Result<String, String> {
    match multinomial_floor_spot_check(samples, seed) {
        None => Ok(format!("no violation in {samples} random compositions")),
        Some(counts) => Err(format!("violated at counts {counts:?}")),
    }
}
