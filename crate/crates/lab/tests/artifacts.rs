//! Output-file contracts of the lab experiments and the CLI.

use std::fs;
use std::path::Path;
use std::process::Command;

use made_core::bonuses::BonusKind;
use made_core::learners::LearnerKind;
use made_lab::config::parse_config_str;
use made_lab::experiments::{chain_pg, lock, run_experiment};

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn num(field: &str) -> f64 {
    field.parse().unwrap_or_else(|_| panic!("not a number: {field:?}"))
}

const VI_LOCK: &str = "experiment = \"lock\"\nseeds = [0, 1, 2]\nheatmap_period = 100\nbonus_trace_pairs = [[0, 0], [1, 1]]\n\
[lock]\nlearners = [\"vi\"]\nbonuses = [\"made\"]\n[lock.episodes]\nvi = 2000\nppo = 1\nq_learning = 1\n";

#[test]
fn lock_heatmaps_count_every_step() {
    let cfg = parse_config_str(VI_LOCK).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = lock::run(&cfg, dir.path()).unwrap();
    assert_eq!(report.runs.len(), 3);
    let cell = lock::LockCell {
        learner: LearnerKind::Vi,
        bonus: BonusKind::Made,
        scale: 1.0,
    };
    let name = cell.name();
    assert_eq!(name, "vi_made_scale1");
    for seed in 0..3u64 {
        let (_, steps) = read_csv(&dir.path().join(format!("runs/{name}/seed_{seed}.csv")));
        assert_eq!(steps.len() as u64, report.runs[seed as usize].total_steps);
        let heat_dir = dir.path().join(format!("heatmaps/{name}"));
        let mut snaps: Vec<_> = fs::read_dir(&heat_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(&format!("seed_{seed}_")))
            .collect();
        snaps.sort();
        assert_eq!(snaps.len(), 21, "episodes 0, 100, ..., 2000");
        for path in &snaps {
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            let episode: usize = stem.rsplit('_').next().unwrap().parse().unwrap();
            let (header, rows) = read_csv(path);
            assert_eq!(header, ["row", "1", "2", "3", "4", "5"]);
            let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
            assert_eq!(
                labels,
                ["start", "lock0_good", "lock0_dead", "lock1_good", "lock1_dead", "terminal"]
            );
            let total: f64 = rows.iter().flat_map(|r| r[1..].iter()).map(|f| num(f)).sum();
            let expected = steps.iter().filter(|r| num(&r[0]) < episode as f64).count();
            assert_eq!(total, expected as f64, "{}", path.display());
            if episode == 0 {
                assert_eq!(total, 0.0);
            }
            if episode == 2000 {
                for row in rows.iter().filter(|r| r[0].ends_with("_good")) {
                    assert!(row[1..].iter().all(|f| num(f) > 0.0), "unvisited good state in {row:?}");
                }
            }
        }
    }
}

#[test]
fn lock_curves_aggregate_the_per_run_evaluations() {
    let cfg = parse_config_str(VI_LOCK).unwrap();
    let dir = tempfile::tempdir().unwrap();
    lock::run(&cfg, dir.path()).unwrap();
    let name = "vi_made_scale1";
    let runs: Vec<Vec<(f64, f64)>> = (0..3)
        .map(|seed| {
            let (header, rows) = read_csv(&dir.path().join(format!("runs/{name}/seed_{seed}_eval.csv")));
            assert_eq!(header, ["episode", "cum_steps", "value"]);
            rows.iter().map(|r| (num(&r[1]), num(&r[2]))).collect()
        })
        .collect();
    let (header, curve) = read_csv(&dir.path().join(format!("curves/{name}.csv")));
    assert_eq!(header, ["env_steps", "median_return", "q25", "q75"]);
    let mut grid: Vec<f64> = runs.iter().flat_map(|r| r.iter().map(|p| p.0)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    assert_eq!(curve.len(), grid.len());
    for (row, &x) in curve.iter().zip(&grid) {
        assert_eq!(num(&row[0]), x);
        let mut latest: Vec<f64> = runs
            .iter()
            .map(|r| r.iter().take_while(|p| p.0 <= x).last().unwrap_or(&r[0]).1)
            .collect();
        latest.sort_by(f64::total_cmp);
        // Three seeds: the median is the middle value, quartiles halfway out.
        assert_eq!(num(&row[1]), latest[1]);
        assert_eq!(num(&row[2]), latest[0] + 0.5 * (latest[1] - latest[0]));
        assert_eq!(num(&row[3]), latest[1] + 0.5 * (latest[2] - latest[1]));
    }
}

#[test]
fn lock_bonus_traces_and_summaries_are_written() {
    let cfg = parse_config_str(VI_LOCK).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path()).unwrap();
    let d = dir.path();
    assert!(d.join("resolved_config.json").exists());
    assert!(!d.join("errors.csv").exists());
    let (header, rows) = read_csv(&d.join("summary.csv"));
    assert_eq!(header[..4], ["learner", "bonus", "scale", "seed"]);
    assert_eq!(rows.len(), 3);
    let (_, cells) = read_csv(&d.join("cells.csv"));
    assert_eq!(cells.len(), 1);
    for seed in 0..3 {
        for (s, a) in [(0, 0), (1, 1)] {
            let (header, trace) = read_csv(&d.join(format!("bonus_traces/vi_made_scale1/seed_{seed}_s{s}_a{a}.csv")));
            assert_eq!(header, ["env_steps", "bonus"]);
            assert!(trace.len() > 1);
            assert!(trace.windows(2).all(|w| num(&w[0][0]) <= num(&w[1][0])));
        }
    }
}

#[test]
fn chain_pg_writes_sweep_and_optimum() {
    let cfg = parse_config_str("experiment = \"chain_pg\"\nseeds = [0]\n[chain_pg]\niters = 50\nstep_sizes = [1.0]\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = chain_pg::run(&cfg, dir.path()).unwrap();
    assert!((report.j_star - 3.1179547450315646).abs() < 1e-9);
    assert_eq!(report.points.len(), 4);
    let j: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("pg/j_star.json")).unwrap()).unwrap();
    assert!((j["j_star"].as_f64().unwrap() - report.j_star).abs() < 1e-15);
    for o in ["vanilla", "entropy", "rel_entropy", "made"] {
        let (header, rows) = read_csv(&dir.path().join(format!("pg/{o}.csv")));
        assert_eq!(header, ["iter", "objective", "J", "grad_inf_norm"]);
        assert_eq!(rows.len(), 51);
        assert!(rows[0][3].is_empty());
    }
}

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_made-lab"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("meta.toml");
    fs::write(&good, "experiment = \"meta\"\nseeds = [0]\n").unwrap();
    let out = dir.path().join("out");

    let status = lab()
        .args(["meta", "--check-only", "--seeds", "0..2", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let resolved = fs::read_to_string(out.join("resolved_config.json")).unwrap();
    let cfg = made_lab::config::parse_resolved_json(&resolved).unwrap();
    assert_eq!(cfg.seeds, vec![0, 1, 2]);
    assert_eq!(cfg.meta().params.as_ref().unwrap().iters, 425);

    let status = lab().args(["lock", "--config"]).arg(&good).output().unwrap().status;
    assert_eq!(status.code(), Some(2), "experiment/config mismatch");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "experiment = \"lock\"\nseeds = [0]\n[lock]\nbonuss = [\"made\"]\n").unwrap();
    let output = lab().args(["lock", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("lock.bonuss"));
}
