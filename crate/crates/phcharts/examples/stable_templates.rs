//! Stable templates, the polynomial dichotomy and chart improvement.

use phcharts::charts::{build_adapted_chart, build_unstable_chart};
use phcharts::models::{ModelKind, ModelMap};
use phcharts::splitting::{compute_frame, MAX_POWER};
use phcharts::templates::{
    classify_template, degree_bound, extract_template, improve_from_verdict, s_grid, symmetric_grid,
    template_law_residual, TemplateSampler,
};

fn main() -> phcharts::Result<()> {
    let ts = symmetric_grid(41, 0.5);
    let ss = s_grid(9, 0.05);
    let chi = [2f64.ln(), 1.2f64.ln(), 0.3f64.ln()];
    let d = degree_bound(chi, 0, 0.01)?;
    println!("degree bound: ratio {:.4}, d = {}", d.ratio, d.degree);

    let map = ModelMap::with_defaults(ModelKind::B);
    let frame = compute_frame(&map, [0.0; 3], MAX_POWER)?;
    let chart = build_unstable_chart(&map, &frame, 8, 0.5)?;
    let t0 = extract_template(&map, &chart, &frame, 0, &ts, &ss)?;
    let sampler = TemplateSampler::new(&map, &chart, &frame, 0);
    println!("B: law residual {:.2e}", template_law_residual(&map, &chart, &sampler, &ts)?);
    let verdict = classify_template(&t0, d.degree, None)?;
    println!("B: {:?}, fit {:?}", verdict.verdict, verdict.fit);
    let improved = improve_from_verdict(&chart, &verdict)?;
    let t1 = extract_template(&map, &improved, &frame, 1, &ts, &ss)?;
    println!("B: level-1 template sup {:.2e}", t1.sup());

    let map = ModelMap::with_defaults(ModelKind::C);
    let frame = compute_frame(&map, [0.0; 3], MAX_POWER)?;
    let chart = build_adapted_chart(&map, &frame, 8, 0.5)?;
    let t0 = extract_template(&map, &chart, &frame, 0, &ts, &ss)?;
    let sampler = TemplateSampler::new(&map, &chart, &frame, 0);
    let sample = |t: f64| sampler.value(t);
    let verdict = classify_template(&t0, d.degree, Some(&sample))?;
    println!("C: {:?} with distance {:.3e}", verdict.verdict, verdict.fit_residual);
    if let Some(probe) = &verdict.probe {
        let dd = &probe.second_order;
        println!("C: second differences, mean square increment per halving {:.3e}", dd.increment);
        for (h, m) in dd.scales.iter().zip(&dd.mean_square) {
            println!("   h = {h:.2e}  mean square {m:.4e}");
        }
    }
    Ok(())
}
