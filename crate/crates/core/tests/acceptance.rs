//! Acceptance suite. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Set `LASERPLAN_SKIP_TRAINING=1` to skip the training-based checks (P8, P9).

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use laserplan::env::{hash_hex, ActionCodec, EnvConfig, LayoutEnv, ObsMode, Observation};
use laserplan::grid::{CellCoord, CellState, GridSpec, LayoutGrid};
use laserplan::laser::{resimulate, Layout, WallShape, WallSpec};
use laserplan::multi::{MultiEnv, AGENT_ACTIONS};
use laserplan::nn::{NetSpec, ObsBatch, PolicyNet};
use laserplan::ppo::{self, evaluate, log_softmax, ppo_loss, ppo_loss_and_grad, Actor, Checkpoint, EvalMode, Minibatch, PpoConfig, Trainer};
use laserplan::scenario::{builtin_scenario, mini3, Scenario};

/// Env steps for the mini3 training run.
const P8_STEPS: usize = 300_000;
const P8_BUDGET: Duration = Duration::from_secs(30 * 60);

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn judge(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail: detail.into(),
    }
}

fn skip(detail: impl Into<String>) -> Outcome {
    Outcome {
        verdict: Verdict::Skip,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- oracles

const DIRS: [[(i32, i32); 2]; 6] = [
    [(-1, 0), (1, 0)],
    [(0, -1), (0, 1)],
    [(0, 1), (1, 0)],
    [(0, 1), (-1, 0)],
    [(0, -1), (1, 0)],
    [(0, -1), (-1, 0)],
];

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Free-cell components by union-find over right/up neighbor pairs.
fn oracle_regions(grid: &LayoutGrid) -> BTreeSet<Vec<(i32, i32)>> {
    let (w, h) = (grid.width() as i32, grid.height() as i32);
    let free = |x: i32, y: i32| grid.get(CellCoord::new(x, y)) == Some(CellState::Free);
    let id = |x: i32, y: i32| (y * w + x) as usize;
    let mut parent: Vec<usize> = (0..(w * h) as usize).collect();
    for y in 0..h {
        for x in 0..w {
            if !free(x, y) {
                continue;
            }
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h && free(nx, ny) {
                    let (a, b) = (find(&mut parent, id(x, y)), find(&mut parent, id(nx, ny)));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<(i32, i32)>> = Default::default();
    for y in 0..h {
        for x in 0..w {
            if free(x, y) {
                let r = find(&mut parent, id(x, y));
                groups.entry(r).or_default().push((x, y));
            }
        }
    }
    groups.into_values().map(|mut v| {
        v.sort();
        v
    }).collect()
}

fn library_regions(grid: &LayoutGrid) -> BTreeSet<Vec<(i32, i32)>> {
    grid.free_regions()
        .iter()
        .map(|r| {
            let mut v: Vec<(i32, i32)> = r.cells().iter().map(|c| (c.x, c.y)).collect();
            v.sort();
            v
        })
        .collect()
}

fn bits(obs: &Observation) -> (Vec<u32>, Vec<u32>) {
    (
        obs.features().iter().map(|x| x.to_bits()).collect(),
        obs.context.iter().map(|x| x.to_bits()).collect(),
    )
}

// ---------------------------------------------------------------- criteria

fn p1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut placed, mut bad, mut layouts) = (0usize, 0usize, 0usize);
    while placed < 10_000 {
        let (w, h) = (rng.gen_range(5..=14), rng.gen_range(5..=14));
        let mask: Vec<CellCoord> = (0..w as i32)
            .flat_map(|x| (0..h as i32).map(move |y| CellCoord::new(x, y)))
            .filter(|_| rng.gen_bool(0.08))
            .collect();
        let Ok(mut layout) = Layout::new(GridSpec::new(w, h).with_mask(mask)) else {
            continue;
        };
        layouts += 1;
        for _ in 0..rng.gen_range(1..=8) {
            for _ in 0..400 {
                let spec = WallSpec::new(
                    layout.next_wall_id().0,
                    WallShape::new(rng.gen_range(0..6)).unwrap(),
                    CellCoord::new(rng.gen_range(0..w as i32), rng.gen_range(0..h as i32)),
                    rng.gen_range(0..=9),
                );
                if layout.place_wall(spec).is_ok() {
                    placed += 1;
                    let g = layout.grid();
                    let counts = g.counts();
                    let conserved = counts.total() == w * h
                        && counts.free == g.cells().iter().filter(|s| **s == CellState::Free).count();
                    let regions = library_regions(g);
                    let covered: usize = regions.iter().map(Vec::len).sum();
                    if !conserved || covered != counts.free || regions != oracle_regions(g) {
                        bad += 1;
                    }
                    break;
                }
            }
        }
    }
    judge(
        bad == 0,
        format!("{} of {placed} random placements over {layouts} random grids conserve cells and partition free space", placed - bad),
    )
}

fn p2() -> Outcome {
    let t = Instant::now();
    let (mut checked, mut valid, mut bad) = (0, 0, 0);
    let spec = GridSpec::new(6, 6);
    let empty = Layout::new(spec.clone()).unwrap();
    for y in 0..6 {
        for x in 0..6 {
            for shape in 0..6u8 {
                checked += 1;
                let anchor = (x, y);
                let dirs = DIRS[shape as usize];
                let inside = |(cx, cy): (i32, i32)| (0..6).contains(&cx) && (0..6).contains(&cy);
                let base: Vec<(i32, i32)> = std::iter::once(anchor)
                    .chain(dirs.iter().map(|d| (x + d.0, y + d.1)))
                    .collect();
                let oracle_valid = base.iter().all(|&c| inside(c));
                let wall = WallSpec::new(1, WallShape::new(shape).unwrap(), CellCoord::new(x, y), 0);
                let result = empty.with_wall(wall);
                if result.is_ok() != oracle_valid {
                    bad += 1;
                    continue;
                }
                let Ok((layout, _)) = result else { continue };
                valid += 1;
                let mut soft = BTreeSet::new();
                for d in dirs {
                    let mut c = (x + 2 * d.0, y + 2 * d.1);
                    while inside(c) {
                        soft.insert(c);
                        c = (c.0 + d.0, c.1 + d.1);
                    }
                }
                let g = layout.grid();
                let cells_match = (0..6).all(|cy| {
                    (0..6).all(|cx| {
                        let state = g.get(CellCoord::new(cx, cy)).unwrap();
                        let expect_hard = base.contains(&(cx, cy));
                        let expect_soft = soft.contains(&(cx, cy));
                        matches!(
                            (state, expect_hard, expect_soft),
                            (CellState::WallHard(_), true, false)
                                | (CellState::WallSoft(_), false, true)
                                | (CellState::Free, false, false)
                        )
                    })
                });
                if !cells_match || library_regions(g) != oracle_regions(g) {
                    bad += 1;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    judge(
        bad == 0 && secs < 10.0,
        format!("{} of {checked} placements on empty 6x6 ({valid} valid) match the brute-force oracle; {secs:.2}s (limit 10s)", checked - bad),
    )
}

fn p3() -> Outcome {
    let scenario = mini3();
    let n = scenario.n_rooms;
    let mut env = LayoutEnv::new(scenario, EnvConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut completed, mut truncated, mut bad) = (0, 0, 0);
    let count = env.action_count() as i64;
    let mut seed = 0;
    while completed < 1_000 {
        env.reset(seed);
        seed += 1;
        let mut terminal = 0.0;
        loop {
            let r = env.step(rng.gen_range(0..count)).unwrap();
            if r.terminated {
                terminal = r.reward;
            }
            if r.terminated || r.truncated {
                break;
            }
        }
        if env.is_truncated() {
            truncated += 1;
            continue;
        }
        completed += 1;
        let len = env.steps_taken();
        let expected = terminal - (len as f64 - (n as f64 - 1.0));
        if env.episode_return() != expected || len < n - 1 {
            bad += 1;
        }
    }
    judge(
        bad == 0,
        format!(
            "{} of {completed} completed random episodes satisfy return = terminal - (length - (n-1)) exactly and length >= n-1 ({truncated} truncated skipped)",
            completed - bad
        ),
    )
}

fn p4() -> Outcome {
    let mut env = LayoutEnv::new(mini3(), EnvConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let count = env.action_count() as i64;
    let (mut rejected, mut bad, mut seed) = (0, 0, 0);
    let (mut obs, _) = env.reset(seed);
    while rejected < 10_000 {
        if env.is_done() {
            seed += 1;
            obs = env.reset(seed).0;
        }
        let before = (env.layout_hash(), bits(&obs), env.layout().clone());
        let r = env.step(rng.gen_range(0..count)).unwrap();
        if !r.info.accepted {
            rejected += 1;
            if before.0 != env.layout_hash() || before.1 != bits(&r.obs) || &before.2 != env.layout() {
                bad += 1;
            }
        }
        obs = r.obs;
    }
    judge(
        bad == 0,
        format!("{} of {rejected} rejected steps left hash, layout and observation bit-identical", rejected - bad),
    )
}

/// Random actions on scenario3, thinned so accepted placements are common.
fn p5_actions() -> Vec<i64> {
    let mut env = LayoutEnv::new(p5_scenario(), EnvConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    env.reset(7);
    let mut actions = Vec::new();
    for _ in 0..200_000 {
        if env.is_done() || actions.len() >= 200 {
            break;
        }
        let a = rng.gen_range(0..env.action_count() as i64);
        let mut probe = env.clone();
        if probe.step(a).unwrap().info.accepted || rng.gen_bool(0.02) {
            env.step(a).unwrap();
            actions.push(a);
        }
    }
    actions
}

fn p5_scenario() -> Scenario {
    builtin_scenario("scenario3").unwrap()
}

fn replay_hash(actions: &[i64]) -> (u64, usize) {
    let mut env = LayoutEnv::new(p5_scenario(), EnvConfig::default()).unwrap();
    env.reset(7);
    let mut accepted = 0;
    for &a in actions {
        accepted += env.step(a).unwrap().info.accepted as usize;
    }
    (env.layout_hash(), accepted)
}

fn served_hash(actions: &[i64]) -> Result<String, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_laserplan"))
        .args(["serve", "--stdio", "--scenario", "scenario3"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    {
        let mut stdin = child.stdin.take().unwrap();
        writeln!(stdin, r#"{{"id":0,"cmd":"reset","seed":7}}"#).map_err(|e| e.to_string())?;
        for (i, a) in actions.iter().enumerate() {
            writeln!(stdin, r#"{{"id":{},"cmd":"step","action":{a}}}"#, i + 1).map_err(|e| e.to_string())?;
        }
        writeln!(stdin, r#"{{"id":999999,"cmd":"close"}}"#).map_err(|e| e.to_string())?;
    }
    let mut last = None;
    for line in BufReader::new(child.stdout.take().unwrap()).lines() {
        let v: serde_json::Value = serde_json::from_str(&line.map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if let Some(h) = v["info"]["hash"].as_str() {
            last = Some(h.to_string());
        }
    }
    child.wait().map_err(|e| e.to_string())?;
    last.ok_or_else(|| "no hash in responses".into())
}

fn p5() -> Outcome {
    let actions = p5_actions();
    let (a, accepted) = replay_hash(&actions);
    let (b, _) = replay_hash(&actions);
    let procs: Vec<Result<String, String>> = (0..2).map(|_| served_hash(&actions)).collect();
    let expected = hash_hex(a);
    let ok = accepted > 0 && a == b && procs.iter().all(|p| p.as_deref() == Ok(expected.as_str()));
    judge(
        ok,
        format!(
            "scenario3, seed 7, {} actions ({accepted} accepted): in-process runs {} / {}, fresh processes {:?}",
            actions.len(),
            hash_hex(a),
            hash_hex(b),
            procs
        ),
    )
}

fn p6() -> Outcome {
    let codec = ActionCodec::new(20, 20);
    let n = codec.action_count();
    let mut seen = BTreeSet::new();
    let mut bad = 0;
    for id in 0..n as i64 {
        match codec.decode(id) {
            Ok(a) => {
                if codec.encode(&a) != Some(id as u32) || !seen.insert((a.anchor.x, a.anchor.y, a.shape.id(), a.infiltration)) {
                    bad += 1;
                }
            }
            Err(_) => bad += 1,
        }
    }
    let edges_rejected = codec.decode(-1).is_err() && codec.decode(n as i64).is_err();
    judge(
        n == 24_000 && bad == 0 && seen.len() == n && edges_rejected,
        format!("{} of {n} ids round-trip to distinct actions on 20x20; -1 and {n} rejected: {edges_rejected}", n - bad),
    )
}

fn p7() -> Outcome {
    let spec = NetSpec {
        obs: ObsMode::Features,
        features: 6,
        image: None,
        context: true,
        context_areas: 4,
        context_adjacency: 2,
        actions: 5,
        hidden: 7,
        context_hidden: 3,
        fusion: 6,
        conv_channels: [16, 32],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut net = PolicyNet::<f64>::init(spec, &mut rng);
    // Lift the actor head so the softmax is far from uniform.
    let actor = net.actor_index();
    for p in net.layers_mut()[actor].iter_mut() {
        *p *= 100.0;
    }
    let b = 8;
    let obs = ObsBatch {
        layout: Array2::from_shape_fn((b, 6), |_| rng.gen_range(-1.0..1.0)),
        context: Array2::from_shape_fn((b, 6), |_| rng.gen_range(0.0..1.0)),
    };
    let actions: Vec<usize> = (0..b).map(|_| rng.gen_range(0..5)).collect();
    let fwd = net.forward(&obs).unwrap();
    // Old log-probs shifted so ratios land inside and outside the clip band.
    let shifts = [0.0, 0.1, -0.15, 0.5, -0.6, 0.2, -0.05, 0.45];
    let old_logp: Vec<f64> = (0..b)
        .map(|i| log_softmax(fwd.logits.row(i))[actions[i]] + shifts[i])
        .collect();
    let advantages: Vec<f64> = (0..b).map(|i| if i % 2 == 0 { 1.3 } else { -0.8 } * (1.0 + i as f64 / 10.0)).collect();
    let returns: Vec<f64> = (0..b).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mb = Minibatch {
        obs: &obs,
        actions: &actions,
        old_logp: &old_logp,
        advantages: &advantages,
        returns: &returns,
    };
    let cfg = PpoConfig::default();
    let (_, grads) = ppo_loss_and_grad(&net, &mb, &cfg).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut params = 0;
    for li in 0..net.layers().len() {
        let analytic: Vec<f64> = grads[li].iter().copied().collect();
        for (k, &a) in analytic.iter().enumerate() {
            let orig = *net.layers_mut()[li].iter_mut().nth(k).unwrap();
            *net.layers_mut()[li].iter_mut().nth(k).unwrap() = orig + h;
            let plus = ppo_loss(&net, &mb, &cfg).unwrap().total;
            *net.layers_mut()[li].iter_mut().nth(k).unwrap() = orig - h;
            let minus = ppo_loss(&net, &mb, &cfg).unwrap().total;
            *net.layers_mut()[li].iter_mut().nth(k).unwrap() = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            params += 1;
        }
    }
    judge(
        worst <= 1e-4,
        format!("PPO loss gradient over {params} parameters, 8-step batch: max relative error {worst:.2e} (limit 1e-4)"),
    )
}

fn training_skipped() -> bool {
    std::env::var("LASERPLAN_SKIP_TRAINING").is_ok_and(|v| !v.is_empty() && v != "0")
}

fn p8() -> (Outcome, Option<Checkpoint>) {
    if training_skipped() {
        return (skip("LASERPLAN_SKIP_TRAINING is set"), None);
    }
    let cfg = PpoConfig { seed: 1, ..PpoConfig::default() };
    let mut trainer = match Trainer::new(mini3(), cfg) {
        Ok(t) => t,
        Err(e) => return (judge(false, format!("trainer setup failed: {e}")), None),
    };
    // Stop at the step limit, or before an iteration would overrun the time limit.
    let t = Instant::now();
    let mut rows = Vec::new();
    let mut slowest = Duration::ZERO;
    while trainer.env_steps() < P8_STEPS && t.elapsed() + slowest <= P8_BUDGET {
        let started = Instant::now();
        match trainer.iterate() {
            Ok(row) => {
                eprintln!("  [P8] {:7.1}s {}", t.elapsed().as_secs_f64(), row.csv_line());
                rows.push(row);
            }
            Err(e) => return (judge(false, format!("training aborted: {e}")), None),
        }
        slowest = slowest.max(started.elapsed());
    }
    let elapsed = t.elapsed();
    let tail = &rows[rows.len().saturating_sub(10)..];
    let mean = |f: fn(&ppo::MetricsRow) -> f64| tail.iter().map(f).sum::<f64>() / tail.len() as f64;
    let (reward, len) = (mean(|r| r.episode_reward_mean), mean(|r| r.episode_len_mean));
    let ok = reward >= 190.0 && len <= 4.0 && elapsed <= P8_BUDGET && trainer.env_steps() <= P8_STEPS;
    (
        judge(
            ok,
            format!(
                "mini3 seed 1, {} env steps in {:.1} min (limits 300000, 30 min): last-10-iteration reward_mean {reward:.2} (>= 190), len_mean {len:.2} (<= 4)",
                trainer.env_steps(),
                elapsed.as_secs_f64() / 60.0
            ),
        ),
        Some(trainer.checkpoint()),
    )
}

fn p9(ck: Option<&Checkpoint>) -> Outcome {
    let Some(ck) = ck else {
        return skip("no trained policy (P8 skipped or failed to save)");
    };
    let scenario = mini3();
    let config = ck.header.ppo.env;
    let trained = evaluate(Actor::Policy(&ck.net, EvalMode::Sample), &scenario, config, 100, 9_000).unwrap();
    let random = evaluate(Actor::Uniform, &scenario, config, 100, 9_000).unwrap();
    let gap = trained.summary.reward_mean - random.summary.reward_mean;
    judge(
        gap >= 50.0,
        format!(
            "100 episodes each: trained reward_mean {:.2} vs uniform {:.2}, gap {gap:.2} (>= 50)",
            trained.summary.reward_mean, random.summary.reward_mean
        ),
    )
}

fn p10() -> Outcome {
    skip("long-running reproduction, no gate: scripts/reproduce_scenario1.sh")
}

fn p11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let (mut bad_det, mut bad_own, mut owned_checks, mut steps) = (0, 0, 0, 0);
    for seq in 0..1_000u64 {
        let mut a = MultiEnv::new(mini3(), EnvConfig::default()).unwrap();
        let mut b = MultiEnv::new(mini3(), EnvConfig::default()).unwrap();
        a.reset(seq).unwrap();
        b.reset(seq).unwrap();
        for _ in 0..rng.gen_range(5..=25) {
            if a.is_done() {
                break;
            }
            let (agent, action) = (a.turn(), rng.gen_range(0..AGENT_ACTIONS as i64));
            let ra = a.step(agent, action).unwrap();
            let rb = b.step(agent, action).unwrap();
            steps += 1;
            let grid = a.scenario().grid.clone();
            let fresh = resimulate(&grid, a.specs()).map(|l| l.layout_hash());
            if a.layout_hash() != b.layout_hash() || ra.rewards != rb.rewards || fresh != Ok(a.layout_hash()) {
                bad_det += 1;
            }
            // Ownership, recomputed from oracle regions.
            let layout = a.layout();
            let g = layout.grid();
            let regions: Vec<Vec<(i32, i32)>> = oracle_regions(g).into_iter().collect();
            let region_of = |c: (i32, i32)| regions.iter().position(|r| r.binary_search(&c).is_ok());
            let mut taken: Vec<usize> = Vec::new();
            for (k, wall) in layout.walls().iter().enumerate() {
                let mut touching: Vec<usize> = wall
                    .cells()
                    .flat_map(|c| [(c.x + 1, c.y), (c.x - 1, c.y), (c.x, c.y + 1), (c.x, c.y - 1)])
                    .filter_map(region_of)
                    .filter(|r| !taken.contains(r))
                    .collect();
                touching.sort_unstable();
                touching.dedup();
                let first = |r: usize| regions[r].iter().map(|&(x, y)| (y, x)).min();
                let expected = touching.iter().copied().min_by_key(|&r| (regions[r].len(), first(r)));
                let got = a.ownership().owned_region(k + 1).map(|r| {
                    let mut v: Vec<(i32, i32)> = r.cells().iter().map(|c| (c.x, c.y)).collect();
                    v.sort();
                    v
                });
                owned_checks += 1;
                let smaller = got.as_ref().map_or(true, |o| touching.iter().all(|&r| o.len() <= regions[r].len()));
                if got != expected.map(|r| regions[r].clone()) || !smaller {
                    bad_own += 1;
                }
                if let Some(r) = expected {
                    taken.push(r);
                }
            }
        }
    }
    judge(
        bad_det == 0 && bad_own == 0,
        format!(
            "1000 random sequences, {steps} steps: {bad_det} determinism/resimulation mismatches, {bad_own} of {owned_checks} ownership checks violated"
        ),
    )
}

// ---------------------------------------------------------------- driver

fn run(id: &str, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        judge(false, format!("panicked: {msg}"))
    });
    let tag = match outcome.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    println!("{id:<4} {tag}  {title}: {} [{:.1}s]", outcome.detail, t.elapsed().as_secs_f64());
    std::io::stdout().flush().ok();
    !matches!(outcome.verdict, Verdict::Fail)
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this target.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    println!("acceptance suite");
    let mut ok = true;
    ok &= run("P1", "conservation and partition", p1);
    ok &= run("P2", "oracle equivalence", p2);
    ok &= run("P3", "reward identity", p3);
    ok &= run("P4", "revert exactness", p4);
    ok &= run("P5", "determinism", p5);
    ok &= run("P6", "codec bijection", p6);
    ok &= run("P7", "PPO gradient check", p7);
    let mut trained = None;
    ok &= run("P8", "scaled training", || {
        let (outcome, ck) = p8();
        trained = ck;
        outcome
    });
    ok &= run("P9", "baseline separation", || p9(trained.as_ref()));
    ok &= run("P10", "scenario 1 reproduction", p10);
    ok &= run("P11", "multi-agent mechanics", p11);
    println!("acceptance: {}", if ok { "all criteria passed" } else { "FAILED" });
    if !ok {
        std::process::exit(1);
    }
}
