//! Spread sets, polynomial and rational distances, and rational bound constants.

use phcharts::approx::{
    poly_distance, rational_bounds_constants, rational_distance, spread_check, uniform_grid, RationalFn, SpreadSet,
};

fn main() -> phcharts::Result<()> {
    let set = SpreadSet { points: vec![-0.9, -0.5, -0.1, 0.3, 0.35, 0.8], k: 2, sigma: 0.05, eta: 0.4 };
    let verdict = spread_check(&set);
    println!("spread: {} via {:?}", verdict.spread, verdict.witness);

    let xs = uniform_grid(257);
    let vs: Vec<f64> = xs.iter().map(|&x| (3.0 * x).sin() + 0.2 * x * x).collect();
    for d in 1..=6 {
        println!("degree {d}: polynomial distance {:.3e}", poly_distance(&xs, &vs, d)?.distance);
    }
    let ws: Vec<f64> = xs.iter().map(|&x| 1.0 / (1.0 + 4.0 * x * x)).collect();
    for d in 1..=3 {
        let fit = rational_distance(&xs, &ws, d, 1e-3)?;
        println!("degree {d}: rational distance {:.3e}", fit.distance);
    }

    let r = RationalFn::new(vec![0.5, -1.0, 0.3], vec![1.0, 0.2, 0.1], 1e-3)?;
    let grid = SpreadSet { points: uniform_grid(33), k: 4, sigma: 0.01, eta: 0.2 };
    let bounds = rational_bounds_constants(&grid, &r)?;
    println!(
        "bounds: derivative {:.3}, value {:.3e}, I {:?}, J {:?}",
        bounds.derivative_bound, bounds.value_lower, bounds.i_intervals, bounds.j_intervals
    );
    Ok(())
}
