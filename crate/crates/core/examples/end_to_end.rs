//! The whole command-line workflow in a temporary directory:
//! gen-data, prefinetune, grid plan/run/report.

use clap::Parser;
use prefinetune::cli::{run, Cli};

fn main() -> prefinetune::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let root = dir.path().display().to_string();
    let grid = "--speakers=eng-02,man-03 --emotions=Happy,Neutral --ks=2,8 --trials=1";
    let steps = [
        "gen-data".to_string(),
        "prefinetune".to_string(),
        format!("grid plan {grid}"),
        format!("grid run {grid}"),
        "grid report".to_string(),
    ];
    let mut stdout = std::io::stdout();
    for step in steps {
        println!("$ prefinetune {step}");
        let mut argv = vec!["prefinetune".to_string(), "--output-dir".into(), root.clone()];
        argv.extend(step.split_whitespace().map(String::from));
        run(&Cli::parse_from(argv), &mut stdout)?;
    }
    let md = std::fs::read_to_string(dir.path().join("reports/curves.md")).expect("curves report");
    println!("\n{md}");
    Ok(())
}
