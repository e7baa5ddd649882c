//! Scenario files and the three model maps.

use phcharts::models::{parse_scenario, DynMap, ModelKind, ModelMap};

fn main() -> phcharts::Result<()> {
    let scenario = parse_scenario(
        r#"
model = "C"
order = 8
radius = 0.5

[params]
l1 = 2.0
l2 = 1.2
l3 = 0.3
eps = 0.1

[grids]
k_max = 6
"#,
    )?;
    println!("scenario hash {}", scenario.hash_hex());
    println!("grids {:?}", scenario.grids);

    let x = [0.3, -0.1, 0.2];
    for kind in [ModelKind::A, ModelKind::B, ModelKind::C] {
        let map = ModelMap::with_defaults(kind);
        let y = map.forward(x);
        let back = map.inverse(y);
        let err = (0..3).map(|i| (back[i] - x[i]).abs()).fold(0.0, f64::max);
        println!("{kind:?}: f(x) = {y:?}, |f^-1(f(x)) - x| = {err:.1e}");
    }

    let bad = parse_scenario("model = \"B\"\n[params]\nl1 = 2.0\nl2 = 2.5\nl3 = 0.3\neps = 0.1\n");
    println!("rejected: {}", bad.unwrap_err());
    Ok(())
}
