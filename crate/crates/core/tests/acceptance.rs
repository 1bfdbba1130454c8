//! End-to-end acceptance report: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,3` restricts the run to the listed criteria. The
//! process fails when a criterion outside `KNOWN_UNMET` fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpmix::config::{parse_config, ScenarioSpec};
use qpmix::convlab::{run_lab, FeatureKind, LabConfig};
use qpmix::obs::GlobalState;
use qpmix::qpmix::Mixer;
use qpmix::runner::{default_workers, run_scenario, ScenarioReport};

/// Criteria the faithful model does not reach; see README.
const KNOWN_UNMET: &[u32] = &[6, 7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn spec(body: &str, out: &Path) -> ScenarioSpec {
    parse_config(&format!("out_dir = {:?}\n{body}\n", out.display().to_string())).unwrap()
}

fn lab_runs(two_time_scale: bool) -> Vec<(LabConfig, qpmix::Result<qpmix::convlab::LabOutcome>)> {
    let mut out = Vec::new();
    for kind in [FeatureKind::Tabular, FeatureKind::Aggregated] {
        for seed in 0..10 {
            let cfg =
                if two_time_scale { LabConfig::two_time_scale(seed, kind) } else { LabConfig::frozen(seed, kind) };
            let res = run_lab(&cfg);
            out.push((cfg, res));
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let runs = lab_runs(false);
    let mut worst_err: f64 = 0.0;
    let mut worst_dis: f64 = 0.0;
    let mut failed = 0;
    for (_, r) in &runs {
        match r {
            Ok(o) => {
                worst_err = worst_err.max(o.error);
                worst_dis = worst_dis.max(o.disagreement);
            }
            Err(_) => failed += 1,
        }
    }
    Outcome {
        pass: failed == 0 && worst_err < 1e-2 && worst_dis < 1e-3,
        detail: format!(
            "{} MDPs, max |mean critic - fixed point| {worst_err:.2e} (< 1e-2), max disagreement {worst_dis:.2e} (< 1e-3), {failed} errors",
            runs.len()
        ),
    }
}

fn criterion_2() -> Outcome {
    let runs = lab_runs(true);
    let mut worst: f64 = 0.0;
    let mut failed = 0;
    for (_, r) in &runs {
        match r {
            Ok(o) => worst = worst.max(o.actor_grad_norm),
            Err(_) => failed += 1,
        }
    }
    Outcome {
        pass: failed == 0 && worst < 1e-2,
        detail: format!("{} MDPs, max expected actor update norm {worst:.2e} (< 1e-2), {failed} errors", runs.len()),
    }
}

fn criterion_3() -> Outcome {
    let reports = common::gradient_checks(100, 7);
    let worst = reports.iter().map(|r| r.max_rel).fold(0.0, f64::max);
    let parts: Vec<String> = reports.iter().map(|r| format!("{} {:.1e}/{}", r.name, r.max_rel, r.coords)).collect();
    Outcome { pass: worst < 1e-4, detail: format!("max rel err {worst:.2e} (< 1e-4); {}", parts.join(", ")) }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let random = [2, 4, 5, 8]
        .iter()
        .map(|&n| {
            let m = Mixer::new(n, GlobalState::width(n), 16, &mut rng).unwrap();
            common::min_mixer_partial(&m, 100, &mut rng)
        })
        .fold(f64::INFINITY, f64::min);
    let trained = common::min_mixer_partial(&common::trained_mixer(50_000, 5), 100, &mut rng);
    Outcome {
        pass: random >= -1e-9 && trained >= -1e-9,
        detail: format!("min dQtot/dq random {random:.3e}, trained {trained:.3e} (>= -1e-9)"),
    }
}

fn phase_line(r: &ScenarioReport, phase: &str) -> String {
    r.successes()
        .map(|s| match s.phase(phase) {
            Some(p) => format!("s{} {:.3}/{:.4}", s.seed, p.throughput, p.jfi.unwrap_or(0.0)),
            None => format!("s{} -", s.seed),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_5(root: &Path, workers: usize) -> Outcome {
    let r = match run_scenario(&spec("scenario = \"saturated\"\nn_stations = 4", &root.join("c5")), workers) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: format!("run failed: {e}") },
    };
    let good = r
        .successes()
        .filter(|s| s.phase("tail").is_some_and(|p| p.throughput >= 0.90 && p.jfi.is_some_and(|j| j >= 0.98)))
        .count();
    let detail = format!(
        "{good}/3 seeds reach throughput >= 0.90 and JFI >= 0.98 over the last training window [{}]; evaluation run [{}]",
        phase_line(&r, "tail"),
        phase_line(&r, "eval")
    );
    Outcome { pass: good >= 2, detail }
}

fn criterion_6(root: &Path, workers: usize) -> Outcome {
    let body = "scenario = \"coexistence\"\nn_stations = 4\nsweep_learners = [0]\nslots = 1000000\ntail = 1000000";
    let r = match run_scenario(&spec(body, &root.join("c6")), workers) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: format!("run failed: {e}") },
    };
    let ps: Vec<_> = r.successes().filter_map(|s| s.phase("tail")).collect();
    let n = ps.len().max(1) as f64;
    let thr = ps.iter().map(|p| p.throughput).sum::<f64>() / n;
    let coll = ps.iter().map(|p| p.collision_rate.unwrap_or(f64::NAN)).sum::<f64>() / n;
    Outcome {
        pass: ps.len() == 3 && (thr - 0.677).abs() <= 0.05 && (coll - 0.134).abs() <= 0.03,
        detail: format!("throughput {thr:.3} (0.677 +- 0.05), collision rate {coll:.3} (0.134 +- 0.03)"),
    }
}

fn mean_final20(r: &ScenarioReport) -> f64 {
    let v: Vec<f64> = r.successes().filter_map(|s| s.reward_final20).collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn criterion_7(root: &Path, workers: usize) -> Outcome {
    let run = |scenario: &str, dir: &str| {
        let body = format!("scenario = \"{scenario}\"\nn_stations = 5\n[eval]\nslots = 0");
        run_scenario(&spec(&body, &root.join(dir)), workers)
    };
    let (r, q) = match run("independent-learning", "c7il").and_then(|r| Ok((r, run("saturated", "c7q")?))) {
        Ok(p) => p,
        Err(e) => return Outcome { pass: false, detail: format!("run failed: {e}") },
    };
    let (il, qp) = (mean_final20(&r), mean_final20(&q));
    let per: Vec<String> = r
        .successes()
        .zip(q.successes())
        .map(|(a, b)| format!("s{} {:+.3} vs {:+.3}", a.seed, a.reward_final20.unwrap_or(f64::NAN), b.reward_final20.unwrap_or(f64::NAN)))
        .collect();
    Outcome {
        pass: r.failures() == 0 && q.failures() == 0 && qp > 0.0 && il <= 0.1 * qp,
        detail: format!("final-20% reward independent {il:+.3} vs mixed {qp:+.3} (need <= {:+.3}) [{}]", 0.1 * qp, per.join(", ")),
    }
}

fn criterion_8() -> Outcome {
    let all = common::metric_examples();
    let failed: Vec<&str> = all.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    Outcome { pass: failed.is_empty(), detail: format!("{} examples, failing: {failed:?}", all.len()) }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_9(root: &Path) -> Outcome {
    let body = "scenario = \"mixed-roster\"\nn_stations = 4\nseeds = [0, 1]\nslots = 20000\ntail = 5000\n[eval]\nslots = 5000";
    let (a, b) = (root.join("c9a"), root.join("c9b"));
    if let Err(e) = run_scenario(&spec(body, &a), 1).and_then(|_| run_scenario(&spec(body, &b), 2)) {
        return Outcome { pass: false, detail: format!("run failed: {e}") };
    }
    let (ta, tb) = (tree(&a), tree(&b));
    let differing: Vec<&String> = ta.keys().filter(|k| tb.get(*k) != ta.get(*k)).collect();
    Outcome {
        pass: !ta.is_empty() && differing.is_empty() && ta.len() == tb.len(),
        detail: format!("{} CSV files compared across reruns with 1 and 2 workers, differing: {differing:?}", ta.len()),
    }
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |c: u32| only.as_ref().is_none_or(|o| o.contains(&c));
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let workers = default_workers();

    let mut results: Vec<(u32, Outcome, f64)> = Vec::new();
    let mut timed = |c: u32, f: &mut dyn FnMut() -> Outcome| {
        if wanted(c) {
            let t = Instant::now();
            let o = f();
            let secs = t.elapsed().as_secs_f64();
            println!("criterion {c}: {} ({secs:.0} s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((c, o, secs));
        }
    };
    timed(1, &mut criterion_1);
    timed(2, &mut criterion_2);
    timed(3, &mut criterion_3);
    timed(4, &mut criterion_4);
    timed(5, &mut || criterion_5(root, workers));
    timed(6, &mut || criterion_6(root, workers));
    timed(7, &mut || criterion_7(root, workers));
    timed(8, &mut criterion_8);
    timed(9, &mut || criterion_9(root));

    println!("acceptance summary:");
    for (c, o, _) in &results {
        let note = if !o.pass && KNOWN_UNMET.contains(c) { " (known unmet)" } else { "" };
        println!("  {c}: {}{note}", if o.pass { "PASS" } else { "FAIL" });
    }
    let unexpected: Vec<u32> = results.iter().filter(|(c, o, _)| !o.pass && !KNOWN_UNMET.contains(c)).map(|(c, ..)| *c).collect();
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
