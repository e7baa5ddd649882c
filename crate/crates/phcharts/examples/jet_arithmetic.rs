//! Truncated Taylor arithmetic: products, composition, reversion and map inversion.

use phcharts::jets::{compose_maps, invert_map, revert_series, Jet};

fn main() -> phcharts::Result<()> {
    let order = 8;
    let t = Jet::univariate(order, &[0.0, 1.0]);
    let s = t.sin();
    println!("sin t      = {:?}", s.coeffs());
    let e = t.exp();
    println!("exp t      = {:?}", e.coeffs());

    // asin as the reversion of sin
    let asin = revert_series(&s)?;
    let back = s.compose(std::slice::from_ref(&asin))?;
    println!("sin(asin t) - t = {:.1e}", back.max_abs_diff(&t));

    // a planar shear map and its inverse
    let x = Jet::variable(2, order, 0, 0.0);
    let y = Jet::variable(2, order, 1, 0.0);
    let map = vec![&x + &(&y * &y).scale(0.5), &y + &(&x * &y).scale(0.1)];
    let inverse = invert_map(&map, &[0.0, 0.0])?;
    let id = compose_maps(&map, &inverse)?;
    let err = id[0].max_abs_diff(&x).max(id[1].max_abs_diff(&y));
    println!("map(inverse) - identity = {err:.1e}");
    println!("value of the map at (0.1, -0.2): {:.12}", map[0].eval(&[0.1, -0.2]));
    Ok(())
}
