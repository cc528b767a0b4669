use clap::{Parser, Subcommand};
use mshlab::barrier::write_barrier_report;
use mshlab::harness::{
    check_hypotheses, run_scenario_full, scenario_barriers, scenario_domain, scenario_envelope, scenario_weight,
    write_field, write_fields, write_report, ScenarioConfig,
};
use mshlab::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mshlab", version, about = "Weighted m-subharmonic envelopes on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (flat key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Intervals per axis, overriding the file.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Solver tolerance, overriding the file.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the regularity and kernel condition checks on the weight.
    CheckWeight,
    /// Build the subsolution and search its constant.
    BuildSub,
    /// Build the supersolution and check the superweight conditions.
    BuildSuper,
    /// Solve the envelope for every shift in the list.
    Solve,
    /// Full pipeline with all verifications.
    Verify,
    /// Summarize an existing report.json.
    Report,
}

fn load(cli: &Cli) -> Result<ScenarioConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ScenarioConfig::load(path)?;
    cfg.apply_overrides(cli.grid, cli.tol, cli.out.clone())?;
    Ok(cfg)
}

fn out_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn write_json(value: &impl serde::Serialize, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    if let Command::Report = cli.command {
        let dir = cli.out.clone().ok_or_else(|| Error::Config("--out is required".into()))?;
        return summarize(&dir.join("report.json"));
    }
    let cfg = load(cli)?;
    let dir = out_dir(&cfg);
    let d = scenario_domain(&cfg)?;
    match cli.command {
        Command::CheckWeight => {
            let reports = check_hypotheses(&cfg, &d)?;
            let mut csv = String::from("check,passed,nodes_checked,nodes_failed,nodes_excluded,worst_margin,worst_h\n");
            for r in &reports {
                println!("{}: {} (worst margin {:e})", r.check, verdict(r.passed), r.worst_margin);
                csv.push_str(&format!(
                    "{},{},{},{},{},{:e},{:e}\n",
                    r.check, r.passed, r.nodes_checked, r.nodes_failed, r.nodes_excluded, r.worst_margin, r.worst_h
                ));
            }
            write_json(&reports, &dir, "hypotheses.json")?;
            std::fs::write(dir.join("hypotheses.csv"), csv)?;
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::BuildSub | Command::BuildSuper => {
            let w = scenario_weight(&cfg, &d, cfg.floor_cells)?;
            let theta = cfg.theta.field(&d)?;
            let b = scenario_barriers(&cfg, &w, &theta)?;
            std::fs::create_dir_all(&dir)?;
            if let Command::BuildSub = cli.command {
                write_barrier_report(&b.subsolution, &dir, "subsolution")?;
                write_field(&b.subsolution.field, &dir, "sub")?;
                println!("subsolution: C = {} (worst margin {:e})", b.subsolution.c_found, b.subsolution.worst_margin);
                Ok(true)
            } else {
                write_barrier_report(&b.supersolution, &dir, "supersolution")?;
                write_field(&b.supersolution.field, &dir, "super")?;
                write_json(&b.superweight, &dir, "superweight.json")?;
                println!("supersolution: C = {}", b.supersolution.c_found);
                println!("superweight: {}", verdict(b.superweight.passed));
                Ok(b.superweight.passed)
            }
        }
        Command::Solve => {
            let w = scenario_weight(&cfg, &d, cfg.floor_cells)?;
            let theta = cfg.theta.field(&d)?;
            let (u, _, rep) = scenario_envelope(&cfg, &w, &theta)?;
            write_field(&u, &dir, "u")?;
            write_json(&rep, &dir, "stabilization.json")?;
            for (c, g) in rep.c_values.iter().zip(&rep.diagnostics) {
                println!("C = {c}: {} + {} sweeps, residual {:e}", g.accel_sweeps, g.monotone_sweeps, g.residual);
            }
            println!("stabilized: {}", verdict(rep.stabilized));
            Ok(rep.stabilized)
        }
        Command::Verify => {
            let (report, fields) = run_scenario_full(&cfg)?;
            write_report(&report, &dir)?;
            write_fields(&fields, &dir)?;
            for (k, ok) in report.verdicts() {
                println!("{k}: {}", verdict(ok));
            }
            Ok(report.passed)
        }
        Command::Report => unreachable!(),
    }
}

fn summarize(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    println!("scenario {}", v["name"].as_str().unwrap_or("?"));
    let flag = |x: &serde_json::Value| x.as_bool();
    let mut items: Vec<(&str, Option<bool>)> = vec![
        ("hypotheses", v["hypotheses"].as_array().map(|a| a.iter().all(|h| h["passed"] == true))),
        ("superweight", flag(&v["barriers"]["superweight"]["passed"])),
        ("stabilization", flag(&v["stabilization"]["stabilized"])),
        ("polar_mass", flag(&v["polar_mass"]["passed"])),
        ("lower_bound", flag(&v["lower_bound"]["passed"])),
    ];
    if v["boundedness"]["skipped"].is_null() {
        items.push(("boundedness", flag(&v["boundedness"]["passed"])));
    }
    if !v["ratio"].is_null() {
        items.push(("ratio", flag(&v["ratio"]["passed"])));
    }
    if v["singularity"]["applicable"] == true {
        items.push(("singularity", flag(&v["singularity"]["passed"])));
    }
    items.push(("sandwich", flag(&v["sandwich"]["passed"])));
    for (k, ok) in &items {
        println!("{k}: {}", ok.map_or("MISSING", verdict));
    }
    v["passed"].as_bool().ok_or_else(|| Error::Config(format!("{} has no verdict", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
