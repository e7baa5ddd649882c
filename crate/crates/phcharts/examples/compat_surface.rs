//! Stable and unstable charts, their transition, and the joint surface.

use phcharts::compat::{
    build_joint_surface, build_stable_chart, compat_jets, tangency_order, whitney_cross_extend, CrossData,
};
use phcharts::models::{ModelKind, ModelMap};
use phcharts::nform::{transported_leaf, Bundle};
use phcharts::qni::{LeafSources, SampledCurve};
use phcharts::splitting::{compute_frame, MAX_POWER};
use phcharts::templates::{classify_template, extract_template, improve_from_verdict, s_grid, symmetric_grid};

fn main() -> phcharts::Result<()> {
    for kind in [ModelKind::B, ModelKind::C] {
        let map = ModelMap::with_defaults(kind);
        let frame = compute_frame(&map, [0.0; 3], MAX_POWER)?;
        let mut unstable = phcharts::charts::build_unstable_chart(&map, &frame, 8, 0.5)?;
        let t0 = extract_template(&map, &unstable, &frame, 0, &symmetric_grid(41, 0.5), &s_grid(9, 0.05))?;
        if let Ok(better) = improve_from_verdict(&unstable, &classify_template(&t0, 3, None)?) {
            unstable = better;
        }
        let stable = build_stable_chart(&map, [0.0; 3], 8, 0.5, 1)?;
        let jets = compat_jets(&stable.iota, &unstable.iota, 8)?;
        println!("{kind:?}: unstable chart level {}, index set {:?}", unstable.level, jets.index_set);
        println!("  compatibility order {}, minimal index {:?}", jets.compatibility_order, jets.minimal_index(1.0));

        let data = CrossData::from_h2(&jets.h[1], 4, 0.4)?;
        match whitney_cross_extend(&data, 1e-7) {
            Err(e) => println!("  extension refused: {e}"),
            Ok(ext) => {
                let surface = build_joint_surface(&unstable, ext, 0.4)?;
                let p = surface.eval(0.1, 0.2);
                println!("  surface point {p:?}, x2 + x1 x3 / 6 = {:.1e}", p[1] + p[0] * p[2] / 6.0);
                let src = LeafSources::new(&map, &frame, 8, 0.5)?;
                let (leaf, _) = transported_leaf(&map, &frame, src.unstable_point(0.1), Bundle::Stable, 8)?;
                let curve = SampledCurve::new(leaf.curve, -0.5, 0.5)?;
                let report = tangency_order(&surface, &curve, 0.1, 8)?;
                println!("  stable leaf tangency {:?}", report.tangency);
            }
        }
    }
    Ok(())
}
