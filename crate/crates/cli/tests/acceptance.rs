//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use sma_grid::{
    check_feasibility, compare, deficiency_at, load_scenario, run, run_fixed_step, BatteryBank, EventKind, LoadSpec,
    Phase, Scenario, StepTrace, ThermalParams, Timeline,
};

const ORACLE_DT: f64 = 1e-3;
const RANDOM_SCENARIOS: usize = 1000;

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(rel: &str) -> Result<Scenario, String> {
    load_scenario(&scenarios_dir().join(rel), None).map_err(|e| e.to_string())
}

fn corpus() -> Result<Vec<(String, Scenario)>, String> {
    let mut names: Vec<String> = std::fs::read_dir(scenarios_dir().join("corpus"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml"))
        .collect();
    names.sort();
    let mut out = Vec::new();
    for n in names {
        let sc = load(&format!("corpus/{n}"))?;
        out.push((n, sc));
    }
    out.push(("microgrid_day.toml".into(), load("microgrid_day.toml")?));
    Ok(out)
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn balance_error(tl: &Timeline) -> f64 {
    tl.records
        .iter()
        .map(|r| ((-r.battery_power).max(0.0) + r.deficiency - (r.demand - r.eg).max(0.0)).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let sc = load("microgrid_day.toml")?;
    ensure(sc.loads.len() == 7, || {
        format!("expected 7 loads, got {}", sc.loads.len())
    })?;
    ensure(sc.horizon == (0.0, 24.0), || format!("horizon {:?}", sc.horizon))?;
    let start = Instant::now();
    let tl = run(&sc).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let err = balance_error(&tl);
    ensure(err <= 1e-9, || format!("balance error {err:e} kW"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("run took {elapsed:?}"))?;
    Ok(format!(
        "{} records in {elapsed:.1?}, max balance error {err:e} kW",
        tl.records.len()
    ))
}

fn criterion_2() -> Outcome {
    let corpus = corpus()?;
    ensure(corpus.len() >= 10, || format!("corpus has {} scenarios", corpus.len()))?;
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (name, sc) in &corpus {
        let exact = run(sc).map_err(|e| format!("{name}: {e}"))?;
        let fixed = run_fixed_step(sc, ORACLE_DT).map_err(|e| format!("{name}: {e}"))?;
        let c = compare(&exact, &fixed, ORACLE_DT);
        ensure(c.within_tolerance(), || format!("{name}: {c:?}"))?;
        worst = worst.max(c.max_completion_deviation);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("corpus took {elapsed:?}"))?;
    Ok(format!(
        "{} scenarios in {elapsed:.1?}, worst completion deviation {worst:.2e} h",
        corpus.len()
    ))
}

fn criterion_3() -> Outcome {
    let d = deficiency_at(400.0, 250.0, 90.0);
    ensure(d == 60.0, || format!("deficiency_at(400, 250, 90) = {d}"))?;
    let cfg = scenarios_dir().join("corpus/engineered_deficiency.toml");
    let out = Command::new(env!("CARGO_BIN_EXE_sma-grid"))
        .args(["check", "--config"])
        .arg(&cfg)
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.code() == Some(1), || {
        format!("check exited {:?}", out.status.code())
    })?;
    ensure(text.starts_with("INFEASIBLE"), || text.to_string())?;
    let peaks: Vec<f64> = text
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            while let Some(tok) = it.next() {
                if tok == "peak_kw" {
                    return it.next()?.parse().ok();
                }
            }
            None
        })
        .collect();
    ensure(peaks.contains(&60.0), || format!("peaks {peaks:?}"))?;
    Ok(format!("deficiency_at = {d} kW, check reports peaks {peaks:?}"))
}

fn criterion_4() -> Outcome {
    let sc = load("corpus/soc_floor.toml")?;
    let tl = run(&sc).map_err(|e| e.to_string())?;
    let rec = tl
        .records
        .iter()
        .find(|r| r.kinds.contains(&EventKind::SocFloor))
        .ok_or("no soc_floor moment")?;
    let expected = sc.horizon.0 + 0.6;
    ensure((rec.t - expected).abs() <= 1e-6, || {
        format!("floor at {} h, expected {expected}", rec.t)
    })?;
    ensure(rec.headroom == 0.0, || {
        format!("headroom {} at the floor", rec.headroom)
    })?;
    let listed = sma_grid::timeline::significant_moments(&tl).contains(&(rec.t, EventKind::SocFloor));
    ensure(listed, || "floor missing from significant moments".into())?;
    Ok(format!("floor at t = {} h, headroom {}", rec.t, rec.headroom))
}

fn random_scenario(rng: &mut StdRng) -> Scenario {
    let n = rng.random_range(1..=7usize);
    let mut priorities: Vec<u32> = (1..=(n as u32 * 6)).collect();
    priorities.shuffle(rng);
    let mut priorities = priorities.into_iter();
    let mut loads = Vec::with_capacity(n);
    let mut need_temperature = false;
    for i in 0..n {
        let id = i as u32 + 1;
        let phases: Vec<(f64, f64, bool)> = (0..rng.random_range(1..=4))
            .map(|_| {
                (
                    rng.random_range(5.0..250.0),
                    rng.random_range(0.05..1.2),
                    rng.random_bool(0.5),
                )
            })
            .collect();
        let total: f64 = phases.iter().map(|p| p.1).sum();
        let deadline = total * rng.random_range(1.0..2.5);
        let period = deadline * rng.random_range(1.0..1.6);
        let spec = match rng.random_range(0..4) {
            0 => {
                let (p, c, f) = phases[0];
                let d = c * rng.random_range(1.0..3.0);
                LoadSpec::simple(
                    id,
                    p,
                    c,
                    d,
                    d * rng.random_range(1.0..2.0),
                    f,
                    priorities.next().unwrap(),
                )
            }
            1 => LoadSpec::phased(id, &phases, deadline, period, priorities.next().unwrap()),
            2 => {
                let ph = phases
                    .iter()
                    .map(|&(power, duration, preemptive)| Phase {
                        power,
                        duration,
                        preemptive,
                        priority: priorities.next().unwrap(),
                    })
                    .collect();
                LoadSpec::composite(id, ph, deadline, period)
            }
            _ => {
                need_temperature = true;
                let t = rng.random_range(1.0..4.0);
                LoadSpec::thermostatic(
                    id,
                    rng.random_range(20.0..150.0),
                    t,
                    t,
                    rng.random_bool(0.5),
                    priorities.next().unwrap(),
                    ThermalParams {
                        g_out: 0.3,
                        c_h: 1.0,
                        n_ac: 1.0,
                        p_ac: 120.0,
                        x_stable: 70.0,
                    },
                )
            }
        };
        loads.push(spec.with_first_release(rng.random_range(0.0..4.0)));
    }
    let mut t = 0.0;
    let mut points = Vec::new();
    while t < 24.0 {
        points.push((t, rng.random_range(0.0..700.0)));
        t += rng.random_range(0.25..5.0);
    }
    let max_power = if rng.random_bool(0.2) {
        0.0
    } else {
        rng.random_range(10.0..150.0)
    };
    let battery = BatteryBank::new(rng.random_range(20.0..300.0), max_power, rng.random_range(0.2..=1.0)).unwrap();
    let temperature = need_temperature.then(|| {
        let pts = (0..24).map(|h| (h as f64, rng.random_range(20.0..100.0))).collect();
        StepTrace::new(pts).unwrap()
    });
    Scenario::new(
        loads,
        battery,
        StepTrace::new(points).unwrap(),
        temperature,
        (0.0, 24.0),
    )
}

fn random_corpus() -> Vec<Scenario> {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    (0..RANDOM_SCENARIOS).map(|_| random_scenario(&mut rng)).collect()
}

fn certificate_violations(sc: &Scenario, tl: &Timeline) -> Vec<String> {
    let eps = 1e-9;
    let mut bad = Vec::new();
    for r in &tl.records {
        if !r.non_defer.iter().all(|id| r.op_set.contains(id)) {
            bad.push(format!(
                "t {}: op_set {:?} misses non-deferrable {:?}",
                r.t, r.op_set, r.non_defer
            ));
        }
        match &r.admission {
            Some(adm) => {
                if let Err(e) = adm.replay(|i| r.loads[i].power, |i| r.loads[i].priority) {
                    bad.push(format!("t {}: {e}", r.t));
                }
            }
            None => bad.push(format!("t {}: no admission record", r.t)),
        }
        // deadline pressure alone forces a load into the non-deferrable set
        for (snap, spec) in r.loads.iter().zip(&sc.loads) {
            let pressed = snap.instance.is_some() && snap.r > eps && snap.o + snap.r >= spec.deadline - eps;
            if pressed && !r.non_defer.contains(&snap.id) {
                bad.push(format!(
                    "t {}: load {} under deadline pressure but deferrable",
                    r.t, snap.id
                ));
            }
        }
    }
    bad
}

fn criterion_5(random: &[(Scenario, Timeline)]) -> Outcome {
    let mut records = 0usize;
    let mut counterexamples = Vec::new();
    for (k, (sc, tl)) in random.iter().enumerate() {
        records += tl.records.len();
        for v in certificate_violations(sc, tl) {
            counterexamples.push(format!("scenario {k}: {v}"));
        }
    }
    ensure(counterexamples.is_empty(), || {
        format!(
            "{} counterexamples, first: {}",
            counterexamples.len(),
            counterexamples[0]
        )
    })?;
    Ok(format!(
        "{} scenarios, {records} records, 0 counterexamples",
        random.len()
    ))
}

fn verdict_disagreement(tl: &Timeline) -> Option<String> {
    let report = check_feasibility(tl);
    let engine_deficient = !tl.summary.deficiency_intervals.is_empty();
    if report.feasible == engine_deficient {
        return Some(format!(
            "engine deficiency {engine_deficient}, checker feasible {}",
            report.feasible
        ));
    }
    if tl.summary.feasible != (report.feasible && tl.summary.deadline_misses.is_empty()) {
        return Some("summary verdict differs from checker plus misses".into());
    }
    if tl.summary.feasible && !tl.summary.deadline_misses.is_empty() {
        return Some("feasible run with deadline misses".into());
    }
    if report.deficiency_intervals != tl.summary.deficiency_intervals {
        return Some("deficiency intervals differ".into());
    }
    None
}

fn criterion_6(corpus: &[(String, Timeline)], random: &[(Scenario, Timeline)]) -> Outcome {
    let mut disagreements = Vec::new();
    let mut feasible = 0;
    for (name, tl) in corpus {
        feasible += usize::from(tl.summary.feasible);
        if let Some(d) = verdict_disagreement(tl) {
            disagreements.push(format!("{name}: {d}"));
        }
    }
    let mut random_feasible = 0;
    for (k, (_, tl)) in random.iter().enumerate() {
        random_feasible += usize::from(tl.summary.feasible);
        if let Some(d) = verdict_disagreement(tl) {
            disagreements.push(format!("random {k}: {d}"));
        }
    }
    ensure(disagreements.is_empty(), || {
        format!("{} disagreements, first: {}", disagreements.len(), disagreements[0])
    })?;
    Ok(format!(
        "corpus {feasible}/{} feasible, random {random_feasible}/{} feasible, 0 disagreements",
        corpus.len(),
        random.len()
    ))
}

fn criterion_7(corpus: &[(String, Timeline)]) -> Outcome {
    let mut completions = 0usize;
    let mut worst_work = 0.0f64;
    let mut worst_slack = 0.0f64;
    for (name, tl) in corpus {
        for c in &tl.completions {
            completions += 1;
            worst_work = worst_work.max((c.executed - c.operation_time).abs());
        }
        for w in tl.records.windows(2) {
            for id in &w[0].op_set {
                let (a, b) = match (w[0].load(*id), w[1].load(*id)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(format!("{name}: load {id} missing from snapshot")),
                };
                if a.instance == b.instance {
                    worst_slack = worst_slack.max(((a.s - a.r) - (b.s - b.r)).abs());
                }
            }
        }
    }
    ensure(worst_work <= 1e-6, || format!("work error {worst_work:e} h"))?;
    ensure(worst_slack <= 1e-9, || format!("s - r drift {worst_slack:e} h"))?;
    Ok(format!(
        "{completions} completions, max work error {worst_work:.1e} h, max s - r drift {worst_slack:.1e} h"
    ))
}

fn main() {
    let corpus_runs: Result<Vec<(String, Timeline)>, String> = corpus().and_then(|c| {
        c.into_iter()
            .map(|(n, sc)| run(&sc).map(|tl| (n.clone(), tl)).map_err(|e| format!("{n}: {e}")))
            .collect()
    });
    let random_runs: Result<Vec<(Scenario, Timeline)>, String> = random_corpus()
        .into_iter()
        .enumerate()
        .map(|(k, sc)| run(&sc).map(|tl| (sc, tl)).map_err(|e| format!("random {k}: {e}")))
        .collect();

    let results: Vec<(&str, Outcome)> = vec![
        ("1 full-day scenario balance", criterion_1()),
        ("2 oracle equivalence", criterion_2()),
        ("3 deficiency arithmetic", criterion_3()),
        ("4 SOC floor timing", criterion_4()),
        (
            "5 admission certificate",
            random_runs.as_ref().map_err(Clone::clone).and_then(|r| criterion_5(r)),
        ),
        (
            "6 feasibility cross-check",
            corpus_runs.as_ref().map_err(Clone::clone).and_then(|c| {
                random_runs
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|r| criterion_6(c, r))
            }),
        ),
        (
            "7 work conservation",
            corpus_runs.as_ref().map_err(Clone::clone).and_then(|c| criterion_7(c)),
        ),
    ];

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
