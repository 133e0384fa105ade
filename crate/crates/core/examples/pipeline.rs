//! Runs the command-line workflow end to end with the scripted teacher:
//! synergy extraction, distillation, evaluation, verification and replay.
//!
//! `cargo run --example pipeline -- [out_dir]`

use myoexo::runner::run_cli;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/example".into());
    let config = std::path::Path::new(&out).with_extension("toml");
    if let Some(parent) = config.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&config, "[synergy.nmf]\nrestarts = 3\nmax_iters = 500\n\n[distill]\nteacher = \"scripted\"\n")?;
    let steps: [&[&str]; 5] = [
        &["synergy"],
        &["distill"],
        &["eval"],
        &["verify"],
        &["replay", "--source", "student", "--slope", "-5", "--speed", "1.1", "--duration", "5"],
    ];
    for args in steps {
        let mut all = vec!["myoexo", "--config", config.to_str().unwrap(), "--out", &out, "--seed", "1"];
        all.extend_from_slice(args);
        let code = run_cli(all);
        println!("myoexo {}: exit {code}", args.join(" "));
        if code != 0 {
            std::process::exit(code);
        }
    }
    Ok(())
}
