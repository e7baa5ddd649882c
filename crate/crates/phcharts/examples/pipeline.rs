//! The staged pipeline with on-disk caches, followed by the report.

use phcharts::cli::{report, run_pipeline, RunOptions, Stage};
use phcharts::models::{ModelKind, Scenario};

fn main() -> phcharts::Result<()> {
    let out = std::env::temp_dir().join("phcharts-pipeline-example");
    let scenario = Scenario::defaults_for(ModelKind::B);
    let opts = RunOptions { out: out.clone(), seed: None, workers: 1 };
    let manifest = run_pipeline(&scenario, &Stage::ALL, &opts)?;
    for r in &manifest.stages {
        println!("{:<10} {:>7.3} s  {}", r.stage.name(), r.seconds, r.outputs.join(", "));
    }
    print!("{}", report(&out)?.text);
    Ok(())
}
