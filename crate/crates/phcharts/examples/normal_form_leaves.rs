//! Normal-form parametrizations of strong leaves and their conjugacy residuals.

use phcharts::models::{ModelKind, ModelMap};
use phcharts::nform::{conjugacy_residual, invariant_brush, stationary_leaf, transported_leaf, Bundle};
use phcharts::splitting::{compute_frame, MAX_POWER};

fn main() -> phcharts::Result<()> {
    for kind in [ModelKind::A, ModelKind::B, ModelKind::C] {
        let map = ModelMap::with_defaults(kind);
        let frame = compute_frame(&map, [0.0; 3], MAX_POWER)?;
        for bundle in [Bundle::Unstable, Bundle::Stable] {
            let leaf = stationary_leaf(&map, &frame, bundle, 8)?;
            let r = conjugacy_residual(&map, &leaf, &leaf, 0.5);
            println!("{kind:?} {bundle:?}: multiplier {:.6}, residual {r:.2e}", leaf.lambda);
        }
        let unstable = stationary_leaf(&map, &frame, Bundle::Unstable, 8)?;
        let y = unstable.eval(0.2);
        let (leaf, image) = transported_leaf(&map, &frame, y, Bundle::Stable, 8)?;
        let r = conjugacy_residual(&map, &leaf, &image, 0.2);
        println!("  stable leaf through {y:?}: seed depth {}, residual {r:.2e}", leaf.seed.depth);
        let stable = stationary_leaf(&map, &frame, Bundle::Stable, 8)?;
        let brush = invariant_brush(&map, &frame, &unstable, &stable, 8)?;
        println!("  brush invariance defect {:.2e}", brush.invariance_defect(&map));
    }
    Ok(())
}
