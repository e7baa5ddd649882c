//! Invariant splitting at the fixed point and along an orbit segment.

use phcharts::models::{ModelKind, ModelMap};
use phcharts::splitting::{compute_frame, lyapunov_exponents, OrbitSegment, MAX_POWER};

fn main() -> phcharts::Result<()> {
    for kind in [ModelKind::A, ModelKind::B, ModelKind::C] {
        let map = ModelMap::with_defaults(kind);
        let frame = compute_frame(&map, [0.0; 3], MAX_POWER)?;
        let [e1, e2, e3] = frame.vectors();
        println!("{kind:?}: multipliers {:?}", frame.lams());
        println!("  e1 {:?}\n  e2 {:?}\n  e3 {:?}", e1.as_slice(), e2.as_slice(), e3.as_slice());
        let segment = OrbitSegment::build(&map, [0.0; 3], 8, MAX_POWER)?;
        let exps = lyapunov_exponents(&segment);
        println!("  exponents {:?}, band {:?}", exps.chi, exps.band);
    }

    // a point off the axes, where only the forward QR flag is available
    let map = ModelMap::with_defaults(ModelKind::B);
    let segment = OrbitSegment::from_qr(&map, [0.1, 0.05, 0.1], 30);
    println!("B off the axes: exponents {:?}", lyapunov_exponents(&segment).chi);
    Ok(())
}
