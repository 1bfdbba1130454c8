//! Batch execution of scenario files: training, checkpoint evaluation and
//! lab runs, each seed on its own worker, results written as CSV.
//!
//! Output files never contain wall-clock data, so reruns with the same
//! config are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::config::{Scenario, ScenarioSpec};
use crate::convlab::{run_lab, LabConfig, LabOutcome, TRACE_HEADER};
use crate::error::{Error, Result};
use crate::metrics::{collision_rate, delay_stats, jfi, per_station_throughput, RunStats};
use crate::nn::Checkpoint;
use crate::qpmix::{run_evaluation, run_training, Roster, RunOutcome, UpdateLog, WindowRow};

pub const METRICS_HEADER: &str =
    "scenario,label,seed,phase,station,role,throughput,successes,sent,collided,drops,collision_rate,mean_delay_s,jitter_s2,jfi";
pub const SUMMARY_HEADER: &str =
    "scenario,label,seed,phase,status,throughput,jfi,collision_rate,mean_delay_s,jitter_s2,reward_final20";
pub const AGGREGATE_HEADER: &str = "scenario,label,phase,seeds_ok,seeds_failed,throughput_mean,throughput_sd,jfi_mean,jfi_sd,collision_rate_mean,collision_rate_sd,mean_delay_s,jitter_s2,reward_final20";
pub const UPDATES_HEADER: &str = "update,loss_q,loss_v,loss_actor,grad_norm,epsilon,mean_reward";
pub const CDF_HEADER: &str = "phase,delay_s,cdf";
pub const LAB_SUMMARY_HEADER: &str =
    "mode,features,seed,iterations,n_states,status,fixed_point_error,disagreement,actor_grad_norm";

pub const RESOLVED_CONFIG: &str = "resolved.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Metrics of one measurement phase of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    /// `tail` (end of the main run) or `eval` (greedy run from the checkpoint).
    pub phase: &'static str,
    pub stats: RunStats,
    pub throughput: f64,
    pub jfi: Option<f64>,
    pub collision_rate: Option<f64>,
    pub mean_delay_s: Option<f64>,
    pub jitter_s2: Option<f64>,
    pub cdf: Vec<(f64, f64)>,
}

impl PhaseReport {
    pub fn from_stats(phase: &'static str, stats: RunStats) -> Self {
        let per = per_station_throughput(&stats);
        let delays = delay_stats(&stats).ok();
        Self {
            phase,
            throughput: per.iter().sum(),
            jfi: jfi(&per).ok(),
            collision_rate: collision_rate(&stats).ok(),
            mean_delay_s: delays.as_ref().map(|d| d.mean_s),
            jitter_s2: delays.as_ref().map(|d| d.jitter_s2),
            cdf: delays.map(|d| d.cdf).unwrap_or_default(),
            stats,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub label: String,
    pub seed: u64,
    pub roles: Vec<String>,
    pub phases: Vec<PhaseReport>,
    pub windows: Vec<WindowRow>,
    pub updates: Vec<UpdateLog>,
    /// Mean windowed reward over the last fifth of training.
    pub reward_final20: Option<f64>,
    pub checkpoint: Option<Checkpoint>,
}

impl SeedReport {
    pub fn phase(&self, name: &str) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.phase == name)
    }
}

/// One seed's result, or the error that aborted it.
pub type SeedResult = std::result::Result<SeedReport, String>;

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub seeds: Vec<(String, u64, SeedResult)>,
}

impl ScenarioReport {
    pub fn failures(&self) -> usize {
        self.seeds.iter().filter(|(_, _, r)| r.is_err()).count()
    }

    pub fn successes(&self) -> impl Iterator<Item = &SeedReport> {
        self.seeds.iter().filter_map(|(_, _, r)| r.as_ref().ok())
    }
}

/// Worker count from `QPMIX_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("QPMIX_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool<T: Send, R: Send>(jobs: Vec<T>, workers: usize, f: impl Fn(T) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(pool.install(|| jobs.into_par_iter().map(f).collect()))
}

fn role_names(roster: &Roster) -> Vec<String> {
    let mut r: Vec<String> = roster.kinds().iter().map(|k| k.name().to_string()).collect();
    r.extend(roster.edca.iter().map(|ac| ac.name().to_string()));
    r
}

fn final_fifth(windows: &[WindowRow], slots: u64) -> Option<f64> {
    let from = slots - slots / 5;
    let tail: Vec<f64> = windows.iter().filter(|w| w.end_slot > from).map(|w| w.avg_reward).collect();
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Trains one roster on one seed, then evaluates the checkpoint greedily.
pub fn run_seed(spec: &ScenarioSpec, label: &str, roster: &Roster, seed: u64) -> Result<SeedReport> {
    let cfg = spec.run_config(roster.clone(), seed);
    let out: RunOutcome = run_training(&cfg)?;
    let mut phases = vec![PhaseReport::from_stats("tail", out.tail)];
    if let (Some(ck), true) = (&out.checkpoint, spec.eval.slots > 0) {
        let ev = run_evaluation(&spec.eval_config(roster.clone(), seed), ck)?;
        phases.push(PhaseReport::from_stats("eval", ev.tail));
    }
    if out.skipped_updates > 0 {
        warn!("{label} seed {seed}: {} updates skipped on non-finite gradients", out.skipped_updates);
    }
    Ok(SeedReport {
        label: label.to_string(),
        seed,
        roles: role_names(roster),
        phases,
        reward_final20: final_fifth(&out.windows, cfg.slots),
        windows: out.windows,
        updates: out.updates,
        checkpoint: out.checkpoint,
    })
}

/// Greedy evaluation of a stored checkpoint.
pub fn eval_seed(spec: &ScenarioSpec, label: &str, roster: &Roster, seed: u64, ck: &Checkpoint) -> Result<SeedReport> {
    let out = run_evaluation(&spec.eval_config(roster.clone(), seed), ck)?;
    Ok(SeedReport {
        label: label.to_string(),
        seed,
        roles: role_names(roster),
        phases: vec![PhaseReport::from_stats("eval", out.tail)],
        reward_final20: None,
        windows: out.windows,
        updates: Vec::new(),
        checkpoint: None,
    })
}

fn jobs(spec: &ScenarioSpec) -> Result<Vec<(String, Roster, u64)>> {
    Ok(spec
        .rosters()?
        .into_iter()
        .flat_map(|(label, roster)| spec.seeds.iter().map(move |&s| (label.clone(), roster.clone(), s)))
        .collect())
}

/// Runs every roster × seed of a learning scenario and writes all outputs.
pub fn run_scenario(spec: &ScenarioSpec, workers: usize) -> Result<ScenarioReport> {
    if spec.scenario == Scenario::Convlab {
        return Err(Error::RangeViolation { key: "scenario".into(), reason: "use the lab runner for convlab".into() });
    }
    let root = PathBuf::from(&spec.out_dir);
    fs::create_dir_all(&root)?;
    fs::write(root.join(RESOLVED_CONFIG), spec.to_toml()?)?;
    let results = pool(jobs(spec)?, workers, |(label, roster, seed)| {
        let dir = root.join(&label).join(format!("seed{seed}"));
        let res = run_seed(spec, &label, &roster, seed).map_err(|e| e.to_string());
        let written = write_seed(&dir, spec, &res);
        let res = match (res, written) {
            (Ok(r), Ok(())) => Ok(r),
            (Ok(_), Err(e)) => Err(format!("writing outputs: {e}")),
            (Err(e), _) => Err(e),
        };
        match &res {
            Ok(_) => info!("{label} seed {seed} done"),
            Err(e) => warn!("{label} seed {seed} failed: {e}"),
        }
        (label, seed, res)
    })?;
    let report = ScenarioReport { spec: spec.clone(), seeds: results };
    write_summary(&root, &report)?;
    write_plot_script(&root, &report)?;
    Ok(report)
}

/// Evaluates one checkpoint on every roster × seed; outputs go under `<out_dir>/eval`.
pub fn run_checkpoint_eval(spec: &ScenarioSpec, ck: &Checkpoint, workers: usize) -> Result<ScenarioReport> {
    let root = PathBuf::from(&spec.out_dir).join("eval");
    fs::create_dir_all(&root)?;
    fs::write(root.join(RESOLVED_CONFIG), spec.to_toml()?)?;
    let results = pool(jobs(spec)?, workers, |(label, roster, seed)| {
        let dir = root.join(&label).join(format!("seed{seed}"));
        let res = eval_seed(spec, &label, &roster, seed, ck).map_err(|e| e.to_string());
        let res = match write_seed(&dir, spec, &res) {
            Ok(()) => res,
            Err(e) => Err(format!("writing outputs: {e}")),
        };
        (label, seed, res)
    })?;
    let report = ScenarioReport { spec: spec.clone(), seeds: results };
    write_summary(&root, &report)?;
    Ok(report)
}

/// Runs every lab configuration; outputs go under `<out_dir>/convlab`.
pub fn run_convlab(spec: &ScenarioSpec, workers: usize) -> Result<Vec<(LabConfig, std::result::Result<LabOutcome, String>)>> {
    let root = PathBuf::from(&spec.out_dir).join("convlab");
    fs::create_dir_all(&root)?;
    fs::write(root.join(RESOLVED_CONFIG), spec.to_toml()?)?;
    let results = pool(spec.lab_configs(), workers, |cfg| {
        let res = run_lab(&cfg).map_err(|e| e.to_string());
        let name = lab_name(&cfg);
        let res = match &res {
            Ok(out) => {
                let mut text = String::from(TRACE_HEADER);
                text.push('\n');
                for row in &out.trace {
                    text.push_str(&row.to_csv());
                    text.push('\n');
                }
                match fs::write(root.join(format!("{name}.csv")), text) {
                    Ok(()) => res,
                    Err(e) => Err(format!("writing trace: {e}")),
                }
            }
            Err(e) => {
                warn!("{name} failed: {e}");
                res
            }
        };
        (cfg, res)
    })?;
    let mut text = String::from(LAB_SUMMARY_HEADER);
    text.push('\n');
    for (cfg, res) in &results {
        let mode = lab_mode(cfg);
        match res {
            Ok(o) => writeln!(
                text,
                "{mode},{},{},{},{},ok,{:.6e},{:.6e},{:.6e}",
                cfg.features.name(),
                cfg.seed,
                cfg.iterations,
                o.mdp.n_states,
                o.error,
                o.disagreement,
                o.actor_grad_norm
            ),
            Err(e) => writeln!(text, "{mode},{},{},{},,{},,,", cfg.features.name(), cfg.seed, cfg.iterations, csv_text(e)),
        }
        .expect("writing to a String");
    }
    fs::write(root.join("summary.csv"), text)?;
    Ok(results)
}

pub fn lab_name(cfg: &LabConfig) -> String {
    format!("{}-{}-seed{}", lab_mode(cfg), cfg.features.name(), cfg.seed)
}

fn lab_mode(cfg: &LabConfig) -> &'static str {
    if cfg.train_actor {
        "two-time-scale"
    } else {
        "frozen"
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn opt_e(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6e}"))
}

/// Error text made safe for a single CSV field.
fn csv_text(s: &str) -> String {
    format!("\"error: {}\"", s.replace('"', "'").replace('\n', " "))
}

/// Writes the per-seed directory; a failed seed gets only `error.txt`.
fn write_seed(dir: &Path, spec: &ScenarioSpec, res: &SeedResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let r = match res {
        Ok(r) => r,
        Err(e) => {
            fs::write(dir.join("error.txt"), format!("{e}\n"))?;
            return Ok(());
        }
    };
    let scen = spec.scenario.name();
    let mut m = String::from(METRICS_HEADER);
    m.push('\n');
    for p in &r.phases {
        let per = per_station_throughput(&p.stats);
        for (i, st) in p.stats.stations.iter().enumerate() {
            let coll = (st.sent > 0).then(|| st.collided as f64 / st.sent as f64);
            let (mean, jit) = station_delay(&st.delays, p.stats.slot_us);
            writeln!(
                m,
                "{scen},{},{},{},{i},{},{:.6},{},{},{},{},{},{},{},",
                r.label,
                r.seed,
                p.phase,
                r.roles.get(i).map_or("?", String::as_str),
                per[i],
                st.successes,
                st.sent,
                st.collided,
                st.drops,
                opt(coll),
                opt_e(mean),
                opt_e(jit)
            )
            .expect("writing to a String");
        }
        let sum = |f: fn(&crate::metrics::StationStats) -> u64| p.stats.stations.iter().map(f).sum::<u64>();
        writeln!(
            m,
            "{scen},{},{},{},all,all,{:.6},{},{},{},{},{},{},{},{}",
            r.label,
            r.seed,
            p.phase,
            p.throughput,
            sum(|s| s.successes),
            sum(|s| s.sent),
            sum(|s| s.collided),
            sum(|s| s.drops),
            opt(p.collision_rate),
            opt_e(p.mean_delay_s),
            opt_e(p.jitter_s2),
            opt(p.jfi)
        )
        .expect("writing to a String");
    }
    fs::write(dir.join("metrics.csv"), m)?;

    let n = r.roles.len();
    let n_learn = r.windows.first().map_or(0, |w| w.attempt_rate.len());
    let mut c = String::from("end_slot,seconds,throughput,avg_reward");
    for i in 0..n {
        write!(c, ",throughput_{i}").expect("writing to a String");
    }
    for i in 0..n_learn {
        write!(c, ",attempt_rate_{i}").expect("writing to a String");
    }
    c.push('\n');
    let slot_s = spec.sim.slot_us * 1e-6;
    for w in &r.windows {
        write!(c, "{},{:.6},{:.6},{:.6}", w.end_slot, w.end_slot as f64 * slot_s, w.throughput, w.avg_reward)
            .expect("writing to a String");
        for x in w.per_station.iter().chain(&w.attempt_rate) {
            write!(c, ",{x:.6}").expect("writing to a String");
        }
        c.push('\n');
    }
    fs::write(dir.join("curve.csv"), c)?;

    let mut u = String::from(UPDATES_HEADER);
    u.push('\n');
    for l in &r.updates {
        writeln!(
            u,
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6},{:.6}",
            l.update, l.loss_q, l.loss_v, l.loss_actor, l.grad_norm, l.epsilon, l.mean_reward
        )
        .expect("writing to a String");
    }
    fs::write(dir.join("updates.csv"), u)?;

    let mut d = String::from(CDF_HEADER);
    d.push('\n');
    for p in &r.phases {
        for (x, f) in &p.cdf {
            writeln!(d, "{},{x:.6e},{f:.6}", p.phase).expect("writing to a String");
        }
    }
    fs::write(dir.join("delay_cdf.csv"), d)?;

    if let Some(ck) = &r.checkpoint {
        ck.save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(())
}

fn station_delay(delays: &[u64], slot_us: f64) -> (Option<f64>, Option<f64>) {
    if delays.is_empty() {
        return (None, None);
    }
    let n = delays.len() as f64;
    let mean = delays.iter().map(|&d| d as f64).sum::<f64>() / n;
    let var = delays.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / n;
    let s = slot_us * 1e-6;
    (Some(mean * s), Some(var * s * s))
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (Some(m), Some(v.sqrt()))
}

fn write_summary(root: &Path, report: &ScenarioReport) -> Result<()> {
    let scen = report.spec.scenario.name();
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for (label, seed, res) in &report.seeds {
        match res {
            Ok(r) => {
                for p in &r.phases {
                    writeln!(
                        s,
                        "{scen},{label},{seed},{},ok,{:.6},{},{},{},{},{}",
                        p.phase,
                        p.throughput,
                        opt(p.jfi),
                        opt(p.collision_rate),
                        opt_e(p.mean_delay_s),
                        opt_e(p.jitter_s2),
                        opt(r.reward_final20)
                    )
                    .expect("writing to a String");
                }
            }
            Err(e) => writeln!(s, "{scen},{label},{seed},,{},,,,,,", csv_text(e)).expect("writing to a String"),
        }
    }
    fs::write(root.join("summary.csv"), s)?;

    let mut a = String::from(AGGREGATE_HEADER);
    a.push('\n');
    let mut labels: Vec<&str> = Vec::new();
    for (l, _, _) in &report.seeds {
        if !labels.contains(&l.as_str()) {
            labels.push(l);
        }
    }
    for label in labels {
        let of_label: Vec<&SeedResult> = report.seeds.iter().filter(|(l, _, _)| l == label).map(|(_, _, r)| r).collect();
        let failed = of_label.iter().filter(|r| r.is_err()).count();
        let ok: Vec<&SeedReport> = of_label.iter().filter_map(|r| r.as_ref().ok()).collect();
        for phase in ["tail", "eval"] {
            let ps: Vec<(&SeedReport, &PhaseReport)> = ok.iter().filter_map(|r| r.phase(phase).map(|p| (*r, p))).collect();
            if ps.is_empty() && phase == "eval" {
                continue;
            }
            let col = |f: &dyn Fn(&SeedReport, &PhaseReport) -> Option<f64>| -> Vec<f64> {
                ps.iter().filter_map(|(r, p)| f(r, p)).collect()
            };
            let (tm, tsd) = mean_sd(&col(&|_, p| Some(p.throughput)));
            let (jm, jsd) = mean_sd(&col(&|_, p| p.jfi));
            let (cm, csd) = mean_sd(&col(&|_, p| p.collision_rate));
            let (dm, _) = mean_sd(&col(&|_, p| p.mean_delay_s));
            let (vm, _) = mean_sd(&col(&|_, p| p.jitter_s2));
            let (rm, _) = mean_sd(&col(&|r, _| r.reward_final20));
            writeln!(
                a,
                "{scen},{label},{phase},{},{failed},{},{},{},{},{},{},{},{},{}",
                ps.len(),
                opt(tm),
                opt(tsd),
                opt(jm),
                opt(jsd),
                opt(cm),
                opt(csd),
                opt_e(dm),
                opt_e(vm),
                opt(rm)
            )
            .expect("writing to a String");
        }
    }
    fs::write(root.join("aggregate.csv"), a)?;
    Ok(())
}

/// Gnuplot script drawing every seed's throughput and reward curves.
fn write_plot_script(root: &Path, report: &ScenarioReport) -> Result<()> {
    let mut g = String::from("set datafile separator ','\nset key outside\nset xlabel 'time (s)'\n");
    let curves: Vec<String> =
        report.successes().map(|r| format!("{}/seed{}/curve.csv", r.label, r.seed)).collect();
    if curves.is_empty() {
        return Ok(());
    }
    for (col, name) in [(3, "throughput"), (4, "avg_reward")] {
        let plots: Vec<String> = curves.iter().map(|f| format!("'{f}' using 2:{col} with lines title '{f}'")).collect();
        writeln!(g, "set ylabel '{name}'\nset terminal pngcairo size 1000,500\nset output '{name}.png'\nplot {}", plots.join(", \\\n     "))
            .expect("writing to a String");
    }
    fs::write(root.join("plot.gp"), g)?;
    Ok(())
}
