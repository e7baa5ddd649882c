//! Quantile scans for the three models, forward and inverse, with the
//! Fubini transfer check.

use phcharts::models::{ModelKind, ModelMap};
use phcharts::qni::{qni_scan, qni_symmetry_check, Direction, LeafSources, QniConfig};
use phcharts::splitting::{compute_frame, MAX_POWER};

fn main() -> phcharts::Result<()> {
    let config = QniConfig { v: 1.0, nu: 0.1, k_min: 2, k_max: 7, samples: 16, jitter: None };
    for kind in [ModelKind::A, ModelKind::B, ModelKind::C] {
        let map = ModelMap::with_defaults(kind);
        let frame = compute_frame(&map, [0.0; 3], MAX_POWER)?;
        let sources = LeafSources::new(&map, &frame, 8, 0.5)?;
        let forward = qni_scan(&sources, Direction::Forward, &config)?;
        let inverse = qni_scan(&sources, Direction::Inverse, &config)?;
        let check = qni_symmetry_check(&forward, &inverse, config.nu);
        println!("model {kind:?}: {:?} / {:?}, alpha {:?}", forward.verdict, inverse.verdict, forward.alpha_hat);
        for s in &forward.scales {
            println!(
                "  k = ({}, {})  quantile {:.3e}  normalized {:.3e}  pairs {:.3}  outer {:.3}",
                s.k1, s.k2, s.quantile, s.normalized, s.pair_fraction, s.outer_fraction
            );
        }
        println!("  symmetry holds: {}", check.holds);
    }
    Ok(())
}
