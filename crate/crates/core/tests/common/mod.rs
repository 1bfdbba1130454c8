//! Checks shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpmix::agents::AgentConfig;
use qpmix::env::{Action, ChannelOutcome, SimConfig, TrafficModel};
use qpmix::metrics::{collision_rate, delay_stats, jfi, throughput, RunStats, StationStats};
use qpmix::nn::{GradSet, Mlp};
use qpmix::obs::{build_global_state, build_observation, compute_reward, update_counters, DelayCounters, GlobalState};
use qpmix::obs::{DEFAULT_HISTORY, RECORD_WIDTH};
use qpmix::qpmix::{
    actor_loss, independent_q_loss, qtot_loss, run_training, v_loss, value_head, Batch, Mixer, Roster, RunConfig,
    TrainConfig, Trainer,
};

/// Largest relative error of one loss over the checked coordinates.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: &'static str,
    pub max_rel: f64,
    pub coords: usize,
    /// Coordinates redrawn because a ReLU/abs kink lay inside the stencil.
    pub kinks: usize,
}

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Central difference with a consistency test: the stencils at `h` and `h/2`
/// agree unless a kink lies within `h` of the point.
fn central(f: &mut dyn FnMut(f64) -> f64) -> Option<f64> {
    let d1 = (f(H) - f(-H)) / (2.0 * H);
    let d2 = (f(H / 2.0) - f(-H / 2.0)) / H;
    let scale = d1.abs().max(d2.abs()).max(FLOOR);
    ((d1 - d2).abs() / scale < 1e-6).then_some(d2)
}

fn pick_coords(g: &GradSet, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let g = g.as_slice();
    let nonzero: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
    let mut out: Vec<usize> = (0..k).map(|_| rng.random_range(0..g.len())).collect();
    if !nonzero.is_empty() {
        out.extend((0..k).map(|_| nonzero[rng.random_range(0..nonzero.len())]));
    }
    out
}

/// Compares `g` against finite differences of `loss` in the parameters of `net`.
fn check_net(
    report: &mut GradReport,
    net: &Mlp,
    g: &GradSet,
    k: usize,
    rng: &mut ChaCha8Rng,
    loss: &dyn Fn(&Mlp) -> f64,
) {
    for mut idx in pick_coords(g, k, rng) {
        for attempt in 0.. {
            let mut probe = net.clone();
            let base = net.params().as_slice()[idx];
            let mut f = |d: f64| {
                probe.params_mut().as_mut_slice()[idx] = base + d;
                loss(&probe)
            };
            if let Some(fd) = central(&mut f) {
                report.max_rel = report.max_rel.max(rel_err(g.as_slice()[idx], fd));
                report.coords += 1;
                break;
            }
            report.kinks += 1;
            assert!(attempt < 50, "{}: no kink-free coordinate found", report.name);
            idx = rng.random_range(0..g.len());
        }
    }
}

pub const OBS_WIDTH: usize = RECORD_WIDTH * DEFAULT_HISTORY;

fn agent_net(rng: &mut ChaCha8Rng) -> Mlp {
    let hidden = AgentConfig::default().hidden;
    let mut w = vec![OBS_WIDTH];
    w.extend(&hidden);
    w.push(2);
    Mlp::relu_net(&w, rng).unwrap()
}

fn random_batch(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Batch {
    let sw = GlobalState::width(n);
    let obs_block = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..size * OBS_WIDTH).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() }).collect()
    };
    Batch {
        size,
        n_agents: n,
        obs_width: OBS_WIDTH,
        obs: (0..n).map(|_| obs_block(rng)).collect(),
        next_obs: (0..n).map(|_| obs_block(rng)).collect(),
        actions: (0..n).map(|_| (0..size).map(|_| rng.random_range(0..2)).collect()).collect(),
        feasible: (0..n).map(|_| (0..size).map(|_| rng.random::<f64>() < 0.8).collect()).collect(),
        next_feasible: (0..n).map(|_| (0..size).map(|_| rng.random::<f64>() < 0.8).collect()).collect(),
        probs: (0..n).map(|_| (0..size).map(|_| rng.random_range(0.05..0.95)).collect()).collect(),
        state: (0..size * sw).map(|_| rng.random::<f64>()).collect(),
        next_state: (0..size * sw).map(|_| rng.random::<f64>()).collect(),
        reward: (0..size).map(|_| rng.random_range(-1i32..=1) as f64).collect(),
    }
}

/// Finite-difference checks of every loss at `points` random points, cycling
/// through the station counts the scenarios use.
pub fn gradient_checks(points: usize, seed: u64) -> Vec<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["q_tot", "v", "actor", "independent_q", "mixer_input"];
    let mut reports: Vec<GradReport> =
        names.iter().map(|&name| GradReport { name, max_rel: 0.0, coords: 0, kinks: 0 }).collect();
    let cfg = TrainConfig::default();
    let per_net = 2;
    for p in 0..points {
        let n = [2, 4, 5, 8][p % 4];
        let sw = GlobalState::width(n);
        let batch = random_batch(n, 8, &mut rng);
        let nets: Vec<Mlp> = (0..n).map(|_| agent_net(&mut rng)).collect();
        let mixer = Mixer::new(n, sw, cfg.mixer_hidden, &mut rng).unwrap();

        // Joint TD loss through the mixer.
        let refs: Vec<&Mlp> = nets.iter().collect();
        let y: Vec<f64> = {
            let mut q = vec![0.0; batch.size * n];
            for (i, net) in nets.iter().enumerate() {
                let out = net.predict(&batch.obs[i], batch.size).unwrap();
                for k in 0..batch.size {
                    q[k * n + i] = out[2 * k + batch.actions[i][k]];
                }
            }
            let qt = mixer.predict(&q, &batch.state, batch.size).unwrap();
            qt.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect()
        };
        let (_, qg, mg) = qtot_loss(&refs, &mixer, &batch, &y).unwrap();
        for i in 0..n {
            let loss = |probe: &Mlp| {
                let mut r = refs.clone();
                r[i] = probe;
                qtot_loss(&r, &mixer, &batch, &y).unwrap().0
            };
            check_net(&mut reports[0], &nets[i], &qg[i], 1, &mut rng, &loss);
        }
        for j in 0..4 {
            let loss = |probe: &Mlp| {
                let mut m = mixer.clone();
                m.nets_mut()[j].restore(probe.params()).unwrap();
                qtot_loss(&refs, &m, &batch, &y).unwrap().0
            };
            check_net(&mut reports[0], mixer.nets()[j], &mg.0[j], per_net, &mut rng, &loss);
        }

        // State-value TD loss.
        let value = value_head(sw, cfg.mixer_hidden, &mut rng).unwrap();
        let value_target = value_head(sw, cfg.mixer_hidden, &mut rng).unwrap();
        let (_, vg) = v_loss(&value, &value_target, &batch, cfg.gamma).unwrap();
        check_net(&mut reports[1], &value, &vg, per_net, &mut rng, &|probe| {
            v_loss(probe, &value_target, &batch, cfg.gamma).unwrap().0
        });

        // Clipped surrogate; old probabilities spread the ratio across the clip band.
        let actor = &nets[0];
        let logits = actor.predict(&batch.obs[0], batch.size).unwrap();
        let old: Vec<f64> = (0..batch.size)
            .map(|k| {
                let (a, b) = (logits[2 * k], logits[2 * k + 1]);
                let m = a.max(b);
                let pi = [(a - m).exp(), (b - m).exp()];
                let p = pi[batch.actions[0][k]] / (pi[0] + pi[1]);
                (p / rng.random_range(0.6..1.4)).min(0.999)
            })
            .collect();
        let adv: Vec<f64> = (0..batch.size).map(|_| rng.random_range(-2.0..2.0)).collect();
        let clip = AgentConfig::default().clip;
        let (_, ag) =
            actor_loss(actor, &batch.obs[0], &batch.actions[0], &old, &adv, &batch.feasible[0], clip).unwrap();
        check_net(&mut reports[2], actor, &ag, per_net, &mut rng, &|probe| {
            actor_loss(probe, &batch.obs[0], &batch.actions[0], &old, &adv, &batch.feasible[0], clip).unwrap().0
        });

        // Per-agent TD loss of independent learners.
        let target = agent_net(&mut rng);
        let i = p % n;
        let (_, ig) = independent_q_loss(&nets[i], &target, &batch, i, cfg.gamma).unwrap();
        check_net(&mut reports[3], &nets[i], &ig, per_net, &mut rng, &|probe| {
            independent_q_loss(probe, &target, &batch, i, cfg.gamma).unwrap().0
        });

        // ∂Q_tot/∂q from the mixer backward pass.
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = &batch.state[..sw];
        let (_, cache) = mixer.forward(&q, s, 1).unwrap();
        let mut scratch = mixer.zero_grads();
        let dq = mixer.backward(&cache, &[1.0], &mut scratch).unwrap();
        for (i, &g) in dq.iter().enumerate() {
            let mut f = |d: f64| {
                let mut q2 = q.clone();
                q2[i] += d;
                mixer.predict(&q2, s, 1).unwrap()[0]
            };
            if let Some(fd) = central(&mut f) {
                reports[4].max_rel = reports[4].max_rel.max(rel_err(g, fd));
                reports[4].coords += 1;
            } else {
                reports[4].kinks += 1;
            }
        }
    }
    reports
}

/// Smallest `∂Q_tot/∂q_i` over `probes` random `(state, q)` pairs.
pub fn min_mixer_partial(mixer: &Mixer, probes: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut min = f64::INFINITY;
    for _ in 0..probes {
        let s: Vec<f64> = (0..mixer.state_width).map(|_| rng.random_range(-1.0..2.0)).collect();
        let q: Vec<f64> = (0..mixer.n_agents).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (_, cache) = mixer.forward(&q, &s, 1).unwrap();
        let mut scratch = mixer.zero_grads();
        let dq = mixer.backward(&cache, &[1.0], &mut scratch).unwrap();
        min = dq.iter().copied().fold(min, f64::min);
    }
    min
}

/// Mixer after a short saturated training run of 2 DQN + 2 PPO stations.
pub fn trained_mixer(slots: u64, seed: u64) -> Mixer {
    let roster = Roster { dqn: 2, ppo: 2, edca: vec![] };
    let cfg = RunConfig {
        sim: SimConfig::standard(4, TrafficModel::Saturated, seed),
        roster: roster.clone(),
        train: TrainConfig::default(),
        slots,
        window: 500,
        tail: slots,
        learn: true,
        trace: false,
    };
    let out = run_training(&cfg).unwrap();
    let mut t = Trainer::new(TrainConfig::default(), &roster.kinds(), GlobalState::width(4), seed).unwrap();
    t.load_checkpoint(out.checkpoint.as_ref().expect("learners checkpoint")).unwrap();
    t.mixer
}

fn stats(stations: Vec<StationStats>, slots: u64) -> RunStats {
    RunStats { stations, total_slots: slots, packet_slots: 120, slot_us: 9.0 }
}

fn station(successes: u64, sent: u64, collided: u64, delays: Vec<u64>) -> StationStats {
    StationStats { successes, sent, collided, drops: 0, delays }
}

/// Every worked example of the metric and observation definitions, by name.
pub fn metric_examples() -> Vec<(&'static str, bool)> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let c = DelayCounters::new(5, 3);
    let obs = |own, other| {
        let o = build_observation(DelayCounters::new(own, other), false, Action::Wait, 1);
        (o.d_own, o.d_other)
    };
    let gs = |v: &[u64]| build_global_state(v, &vec![Action::Wait; v.len()]).d;
    let d2 = delay_stats(&stats(vec![station(1, 1, 0, vec![100]), station(1, 1, 0, vec![300])], 1000)).unwrap();
    let d1 = delay_stats(&stats(vec![station(2, 2, 0, vec![120, 120])], 1000)).unwrap();
    let slot = 9e-6;
    vec![
        ("throughput idle channel", throughput(&stats(vec![station(0, 0, 0, vec![])], 1000)) == 0.0),
        ("throughput back-to-back", throughput(&stats(vec![station(10, 10, 0, vec![])], 1200)) == 1.0),
        ("throughput one in 240", throughput(&stats(vec![station(1, 1, 0, vec![])], 240)) == 0.5),
        ("delay identical samples", close(d1.mean_s, 1.08e-3) && d1.jitter_s2 == 0.0),
        ("delay two-point variance", close(d2.mean_s / slot, 200.0) && (d2.jitter_s2 / (slot * slot) - 1e4).abs() < 1e-6),
        ("collision none", collision_rate(&stats(vec![station(4, 4, 0, vec![])], 10)).unwrap() == 0.0),
        ("collision all", collision_rate(&stats(vec![station(0, 4, 4, vec![])], 10)).unwrap() == 1.0),
        ("collision 2 of 8", collision_rate(&stats(vec![station(6, 8, 2, vec![])], 10)).unwrap() == 0.25),
        ("jfi equal", jfi(&[1.0; 4]).unwrap() == 1.0),
        ("jfi one station", jfi(&[1.0, 0.0, 0.0, 0.0]).unwrap() == 0.25),
        ("jfi [2,1]", close(jfi(&[2.0, 1.0]).unwrap(), 0.9)),
        ("counter own success", update_counters(c, &ChannelOutcome::Success(2), 2) == DelayCounters::new(0, 4)),
        ("counter other success", update_counters(c, &ChannelOutcome::Success(1), 2) == DelayCounters::new(6, 0)),
        ("counter idle", update_counters(c, &ChannelOutcome::Idle, 2) == DelayCounters::new(6, 4)),
        ("observation (3,1)", obs(3, 1) == (0.75, 0.25)),
        ("observation (0,0)", obs(0, 0) == (0.5, 0.5)),
        ("observation (0,7)", obs(0, 7) == (0.0, 1.0)),
        ("reward largest-delay success", compute_reward(&[0.7, 0.3], &ChannelOutcome::Success(0)) == 1.0),
        ("reward idle", compute_reward(&[0.7, 0.3], &ChannelOutcome::Idle) == 0.0),
        ("reward other success", compute_reward(&[0.7, 0.3], &ChannelOutcome::Success(1)) == -1.0),
        ("global state [2,2]", gs(&[2, 2]) == vec![0.5, 0.5]),
        ("global state [0,4]", gs(&[0, 4]) == vec![0.0, 1.0]),
        ("global state [1,2,3]", gs(&[1, 2, 3]).iter().zip([1.0 / 6.0, 1.0 / 3.0, 0.5]).all(|(a, b)| close(*a, b))),
    ]
}
