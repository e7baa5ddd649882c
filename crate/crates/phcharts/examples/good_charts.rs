//! 0-good unstable charts and the cocycle normal form of the transverse action.

use phcharts::charts::{
    build_adapted_chart, build_unstable_chart, constant_diagonal, level_degree, polynomialize_offdiagonal,
};
use phcharts::models::{ModelKind, ModelMap};
use phcharts::splitting::{compute_frame, MAX_POWER};

fn main() -> phcharts::Result<()> {
    let map = ModelMap::with_defaults(ModelKind::C);
    let frame = compute_frame(&map, [0.0; 3], MAX_POWER)?;

    // the three reductions, step by step, on the leaf-adapted chart
    let adapted = build_adapted_chart(&map, &frame, 8, 0.5)?;
    let tri = &adapted.cocycle;
    let diag = constant_diagonal(tri)?;
    let poly = polynomialize_offdiagonal(&diag, frame.lams()[0].abs().ln())?;
    println!("triangularized: lower-left {:.2e}", tri.lower_sup());
    println!("constant diagonal: variation {:.2e}", diag.diagonal_variation());
    println!("polynomial off-diagonal: degree {:?}, tail {:.2e}", poly.degree, poly.tail(3));
    println!("degree bound at level 0: {}", level_degree(frame.lams(), 1));

    for kind in [ModelKind::A, ModelKind::B, ModelKind::C] {
        let map = ModelMap::with_defaults(kind);
        let frame = compute_frame(&map, [0.0; 3], MAX_POWER)?;
        let chart = build_unstable_chart(&map, &frame, 8, 0.5)?;
        println!(
            "{kind:?}: lams {:?}, level {}, off-diagonal {:?}",
            chart.lams,
            chart.level,
            &chart.levels[0].off_diagonal[..4]
        );
        let p = [0.01, 0.002, -0.005];
        println!("  chart point iota{p:?} = {:?}", chart.eval(p));
    }
    Ok(())
}
