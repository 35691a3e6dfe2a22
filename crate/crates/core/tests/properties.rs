//! Randomized invariant checks over the public surface: configuration
//! round-trips, mass bookkeeping, constitutive monotonicity, and test
//! statistics that must not depend on argument order.

use proptest::prelude::*;

use tangledig_core::config::{self, RunConfig};
use tangledig_core::geom::Vec2;
use tangledig_core::media::{
    mean_tensile_force, sample_tensile_force, ConstitutiveParams, Pellet,
};
use tangledig_core::rng::SeedFanout;
use tangledig_core::stats::welch;
use tangledig_core::world::DepositMap;

proptest! {
    /// Dump-then-load lands on identical effective settings for any seed
    /// and a perturbed knob or two, and the dump itself is a fixed point.
    #[test]
    fn config_dump_round_trips(master_seed: u64, bond in 0.1f64..5.0, trials in 1u32..50) {
        let mut cfg = RunConfig {
            master_seed,
            ..RunConfig::default()
        };
        cfg.experiment.media.bond_scale = bond;
        cfg.experiment.harness.n_trials = trials;
        let text = config::dump(&cfg);
        let back = config::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(config::dump(&back), text);
    }

    /// Piles merge and grow, but the map never creates or loses mass.
    #[test]
    fn deposit_map_conserves_mass(
        deposits in prop::collection::vec(
            (0.0f64..1.8, 0.0f64..1.2, 1e-4f64..0.1, 1e-5f64..1e-3),
            1..40,
        )
    ) {
        let mut map = DepositMap::new(0.1, 35f64.to_radians());
        let mut total = 0.0;
        for (x, y, mass, volume) in deposits {
            let pellet = Pellet::new(mass, volume, 1.0, 0.0).unwrap();
            map.add_deposit(Vec2::new(x, y), &pellet);
            total += mass;
            prop_assert!((map.total_mass() - total).abs() <= 1e-9 * total.max(1.0));
        }
        for pile in &map.piles {
            prop_assert!(pile.mass_kg > 0.0 && pile.height_m > 0.0);
        }
    }

    /// More squeeze history can only strengthen the bulk, and pulling
    /// farther never slackens it.
    #[test]
    fn mean_force_is_monotone(
        strain in 1e-3f64..0.5,
        c_lo in 0.0f64..0.5,
        c_hi in 0.0f64..0.5,
        strain_hi in 1e-3f64..0.5,
    ) {
        let params = ConstitutiveParams::default_calibrated();
        let (c_lo, c_hi) = if c_lo <= c_hi { (c_lo, c_hi) } else { (c_hi, c_lo) };
        let f_lo = mean_tensile_force(strain, c_lo, &params).unwrap();
        let f_hi = mean_tensile_force(strain, c_hi, &params).unwrap();
        prop_assert!(f_lo <= f_hi, "{f_lo} > {f_hi} as compression rose {c_lo} -> {c_hi}");
        let (e_lo, e_hi) = if strain <= strain_hi { (strain, strain_hi) } else { (strain_hi, strain) };
        let g_lo = mean_tensile_force(e_lo, c_lo, &params).unwrap();
        let g_hi = mean_tensile_force(e_hi, c_lo, &params).unwrap();
        prop_assert!(g_lo <= g_hi, "{g_lo} > {g_hi} as strain rose {e_lo} -> {e_hi}");
    }

    /// Stick-slip modulation may dent the trace but never drives the pull
    /// force negative.
    #[test]
    fn sampled_force_stays_non_negative(
        strain in 1e-3f64..0.5,
        compression in 0.0f64..0.5,
        seed: u64,
    ) {
        let params = ConstitutiveParams::default_calibrated();
        let mut rng = SeedFanout::new(seed).stream("property/pull");
        let force = sample_tensile_force(strain, compression, &params, &mut rng).unwrap();
        prop_assert!(force >= 0.0, "force {force}");
    }

    /// Swapping the samples flips the t sign and leaves p alone.
    #[test]
    fn welch_is_antisymmetric(
        xs in prop::collection::vec(-100.0f64..100.0, 2..12),
        ys in prop::collection::vec(-100.0f64..100.0, 2..12),
    ) {
        let spread = |v: &[f64]| v.iter().any(|a| (a - v[0]).abs() > 1e-9);
        prop_assume!(spread(&xs) || spread(&ys));
        let ab = welch(&xs, &ys).unwrap();
        let ba = welch(&ys, &xs).unwrap();
        prop_assert!((ab.t_statistic + ba.t_statistic).abs() <= 1e-9 * ab.t_statistic.abs().max(1.0));
        prop_assert!((ab.p_value - ba.p_value).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}
