//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any fails. Pass criterion numbers as arguments to run a subset.

use std::time::{Duration, Instant};

use perseus::continuous::{perseus_solve_continuous, sample_bound, ActionCache, ActionModelGenerator, ActionSource, SamplingScheme};
use perseus::domains::random::{random_belief, random_dense_model, random_model, random_value_function};
use perseus::domains::tiny::{build_tiny, FIXTURES};
use perseus::eval::{evaluate_policy, EvalConfig, GeneratedDynamics, RandomParams};
use perseus::exact::{exact_value_iteration, monahan_backup, PruneMode};
use perseus::format::{parse_pomdp, read_policy, serialize_pomdp, write_policy};
use perseus::perseus::{backup_stage, collect_beliefs, solve_on, Combine, Convergence};
use perseus::qmdp::{qmdp_value_function, solve_mdp};
use perseus::seed::{derive, DOMAIN_STREAM, SOLVER_STREAM};
use perseus::{backup, initial_value_function, Belief, BeliefSet, Pomdp, SolverConfig, ValueFunction};
use perseus_cli::domain::{Domain, DomainName};
use perseus_cli::{cmd_solve, Algo, SolveArgs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// `max_a [ρ(b,a) + γ Σ_o p(o|b,a) V(b^{a,o})]`, straight from the tables.
fn lookahead(m: &Pomdp, vf: &ValueFunction, b: &Belief) -> f64 {
    let (ns, no) = (m.num_states(), m.num_observations());
    let p = b.probs();
    let mut best = f64::NEG_INFINITY;
    for a in 0..m.num_actions() {
        let mut q: f64 = (0..ns).map(|s| p[s] * m.reward(s, a)).sum();
        for o in 0..no {
            let mut next = vec![0.0; ns];
            for (s2, slot) in next.iter_mut().enumerate() {
                let reach: f64 = (0..ns).map(|s| p[s] * m.p_transition(s, a, s2)).sum();
                *slot = m.p_observation(a, s2, o) * reach;
            }
            let po: f64 = next.iter().sum();
            if po <= 0.0 {
                continue;
            }
            let v = vf
                .vectors
                .iter()
                .map(|v| v.coefficients.iter().zip(&next).map(|(c, x)| c * x / po).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            q += m.discount() * po * v;
        }
        best = best.max(q);
    }
    best
}

fn dot(c: &[f64], b: &Belief) -> f64 {
    c.iter().zip(b.probs()).map(|(x, y)| x * y).sum()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (ns, na, no) = (rng.random_range(1..=8), rng.random_range(1..=4), rng.random_range(1..=4));
        let m = random_model(&mut rng, ns, na, no);
        let k = rng.random_range(1..=6);
        let vf = random_value_function(&mut rng, ns, k, na);
        for _ in 0..50 {
            let b = random_belief(&mut rng, ns);
            let alpha = backup(&m, &vf, &b).unwrap();
            worst = worst.max((dot(&alpha.coefficients, &b) - lookahead(&m, &vf, &b)).abs());
        }
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-9 && t < Duration::from_secs(10),
        format!("max |b·backup(b) − lookahead| = {worst:.3e}, {:.2} s", t.as_secs_f64()),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let (ns, na, no) = (rng.random_range(1..=8), rng.random_range(1..=4), rng.random_range(1..=4));
        let m = random_model(&mut rng, ns, na, no);
        let config = SolverConfig {
            belief_count: 200,
            ..SolverConfig::default()
        };
        let mut beliefs = collect_beliefs(&m, &config, &mut rng);
        let mut vf = initial_value_function(&m);
        for _ in 0..30 {
            let (next, _) = backup_stage(&m, &vf, &mut beliefs, &mut rng).unwrap();
            for b in beliefs.beliefs() {
                let drop = vf.evaluate(b).unwrap() - next.evaluate(b).unwrap();
                worst = worst.max(drop);
            }
            vf = next;
        }
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-9 && t < Duration::from_secs(60),
        format!("max V_n(b) − V_n+1(b) = {worst:.3e}, {:.2} s", t.as_secs_f64()),
    )
}

fn tiny_models() -> Vec<(String, Pomdp)> {
    let mut out: Vec<(String, Pomdp)> = FIXTURES.iter().map(|f| (f.to_string(), build_tiny(f).unwrap())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for k in 0..6 {
        let (ns, na, no) = (rng.random_range(2..=3), rng.random_range(2..=3), rng.random_range(1..=2));
        out.push((format!("random-{k}"), random_dense_model(&mut rng, ns, na, no).build().unwrap()));
    }
    out
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut above: f64 = f64::NEG_INFINITY;
    let mut gap_ratio = f64::NEG_INFINITY;
    let mut worst_model = String::new();
    for (k, (name, m)) in tiny_models().into_iter().enumerate() {
        let star = exact_value_iteration(&m, 1e-8, 100_000).unwrap().value_function;
        let ns = m.num_states();
        let config = SolverConfig {
            belief_count: 1000 - ns,
            max_stages: 100_000,
            rng_seed: k as u64,
            convergence: Convergence {
                value_diff: Some(1e-9),
                policy_stable_stages: Some(5),
                combine: Combine::All,
            },
            ..SolverConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut beliefs = collect_beliefs(&m, &config, &mut rng).beliefs().to_vec();
        beliefs.extend((0..ns).map(|s| Belief::corner(ns, s)));
        let sol = solve_on(&m, &config, BeliefSet::new(beliefs), &mut rng).unwrap();
        for b in sol.beliefs.beliefs() {
            let v = sol.value_function.evaluate(b).unwrap();
            let vs = star.evaluate(b).unwrap();
            above = above.max(v - vs);
            let ratio = (vs - v) / (0.01 * (1.0 + vs.abs()));
            if ratio > gap_ratio {
                gap_ratio = ratio;
                worst_model = name.clone();
            }
        }
    }
    let t = start.elapsed();
    verdict(
        above <= 1e-6 && gap_ratio <= 1.0 && t < Duration::from_secs(120),
        format!(
            "max V_perseus − V* = {above:.3e}, max gap / 0.01(1+|V*|) = {gap_ratio:.3} ({worst_model}), {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for (_, m) in tiny_models() {
        let ns = m.num_states();
        let vf = random_value_function(&mut rng, ns, 6, m.num_actions());
        let exact = monahan_backup(&m, &vf, PruneMode::ExactLp).unwrap();
        for _ in 0..500 {
            let b = random_belief(&mut rng, ns);
            let alpha = backup(&m, &vf, &b).unwrap();
            worst = worst.max((exact.evaluate(&b).unwrap() - dot(&alpha.coefficients, &b)).abs());
        }
    }
    verdict(worst <= 1e-9, format!("max |H V(b) − b·backup(b)| = {worst:.3e}"))
}

const TAG_BELIEFS: usize = 10_000;
const TAG_STAGES: usize = 300;

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let domain = Domain::build(DomainName::Tag, 0).unwrap();
    let m = domain.discrete().unwrap();
    let termination = domain.termination();
    let config = SolverConfig {
        belief_count: TAG_BELIEFS,
        max_stages: TAG_STAGES,
        rng_seed: derive(1, SOLVER_STREAM),
        convergence: Convergence {
            value_diff: None,
            policy_stable_stages: None,
            combine: Combine::Any,
        },
        ..SolverConfig::default()
    };
    let sol = perseus::solve(&m, &config).unwrap();
    let eval = EvalConfig {
        rng_seed: 1,
        ..EvalConfig::default()
    };
    let ours = evaluate_policy(&m, &sol.value_function, &eval, &termination).unwrap();
    let q = qmdp_value_function(&solve_mdp(&m, 1e-9).unwrap());
    let base = evaluate_policy(&m, &q, &eval, &termination).unwrap();
    let n = sol.value_function.len();
    let pass = ours.mean >= -8.0 && (-19.0..=-14.0).contains(&base.mean) && ours.mean - base.mean >= 6.0 && n <= 1000;
    verdict(
        pass,
        format!(
            "perseus {:.3} ± {:.3}, qmdp {:.3} ± {:.3}, |V| = {n} after {} stages, {:.0} s",
            ours.mean,
            ours.std_error(),
            base.mean,
            base.std_error(),
            sol.stats.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

const NAV_BELIEFS: usize = 10_000;
const NAV_STAGES: usize = 200;
const NAV_BUDGET: Duration = Duration::from_secs(3600);

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let domain = Domain::build(DomainName::Cnav, derive(1, DOMAIN_STREAM)).unwrap();
    let Domain::Nav(nav) = &domain else { unreachable!() };
    let termination = domain.termination();
    let config = SolverConfig {
        belief_count: NAV_BELIEFS,
        max_stages: NAV_STAGES,
        wallclock_limit: Some(NAV_BUDGET),
        rng_seed: derive(1, SOLVER_STREAM),
        convergence: Convergence {
            value_diff: None,
            policy_stable_stages: None,
            combine: Combine::Any,
        },
        ..SolverConfig::default()
    };
    let source = ActionSource::Sampled(SamplingScheme::new(1, 0, true));
    let sol = perseus_solve_continuous(nav, &source, &config, &ActionCache::default()).unwrap();
    let eval = EvalConfig {
        rng_seed: 1,
        ..EvalConfig::default()
    };
    let dynamics = GeneratedDynamics::new(nav);
    let ours = evaluate_policy(&dynamics, &sol.solution.value_function, &eval, &termination).unwrap();
    let random = RandomParams {
        bounds: nav.bounds().clone(),
    };
    let base = evaluate_policy(&dynamics, &random, &eval, &termination).unwrap();
    let n = sol.solution.value_function.len();
    let stages = sol.provenance.len();
    let tail = (stages / 10).max(1);
    let not_improved = sol.provenance[stages - tail..]
        .iter()
        .map(|p| p.frequencies()[3])
        .fold(0.0, f64::max);
    let pass = stages == NAV_STAGES && ours.mean - base.mean >= 2.0 && n <= NAV_BELIEFS / 100 && not_improved <= 0.05;
    verdict(
        pass,
        format!(
            "{stages}/{NAV_STAGES} stages, perseus {:.3} ± {:.3}, random {:.3} ± {:.3}, |V| = {n}, max not-improved over last {tail} stages = {not_improved:.4}, {:.0} s",
            ours.mean,
            ours.std_error(),
            base.mean,
            base.std_error(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let (eps, delta) = (0.1f64, 0.05f64);
    let mut oracle = 1;
    while (1.0 - eps).powi(oracle) > delta {
        oracle += 1;
    }
    let n = sample_bound(eps, delta).unwrap();
    let actions = 1000;
    let top = (eps * actions as f64) as usize;
    let trials = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    // Action i has value i, so the top fraction is the last `top` indices.
    let hits = (0..trials)
        .filter(|_| (0..n).map(|_| rng.random_range(0..actions)).max().unwrap() >= actions - top)
        .count();
    let rate = hits as f64 / trials as f64;
    let floor = (1.0 - delta) - 3.0 * ((1.0 - delta) * delta / trials as f64).sqrt();
    let t = start.elapsed();
    verdict(
        n == 29 && n == oracle as usize && rate >= floor && t < Duration::from_secs(10),
        format!("sample_bound = {n} (oracle {oracle}), hit rate {rate:.4} ≥ {floor:.4}, {:.2} s", t.as_secs_f64()),
    )
}

fn max_model_diff(a: &Pomdp, b: &Pomdp) -> f64 {
    if (a.num_states(), a.num_actions(), a.num_observations()) != (b.num_states(), b.num_actions(), b.num_observations()) {
        return f64::INFINITY;
    }
    let mut worst = (a.discount() - b.discount()).abs();
    for (x, y) in a.initial_belief().probs().iter().zip(b.initial_belief().probs()) {
        worst = worst.max((x - y).abs());
    }
    for act in 0..a.num_actions() {
        let (ma, mb) = (a.action(act), b.action(act));
        for s in 0..a.num_states() {
            worst = worst.max((a.reward(s, act) - b.reward(s, act)).abs());
            for (s2, p) in ma.transition.row(s) {
                worst = worst.max((p - mb.transition.get(s, s2)).abs());
            }
            for (s2, p) in mb.transition.row(s) {
                worst = worst.max((p - ma.transition.get(s, s2)).abs());
            }
            for o in 0..a.num_observations() {
                worst = worst.max((a.p_observation(act, s, o) - b.p_observation(act, s, o)).abs());
            }
        }
    }
    worst
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut models: Vec<Pomdp> = (0..100)
        .map(|_| {
            let (ns, na, no) = (rng.random_range(1..=8), rng.random_range(1..=4), rng.random_range(1..=4));
            random_model(&mut rng, ns, na, no)
        })
        .collect();
    models.push(Domain::build(DomainName::Tag, 0).unwrap().discrete().unwrap());
    models.push(Domain::build(DomainName::Cnav, 0).unwrap().discrete().unwrap());
    let worst = models
        .iter()
        .map(|m| max_model_diff(m, &parse_pomdp(&serialize_pomdp(m)).unwrap()))
        .fold(0.0, f64::max);
    let mut policies_exact = true;
    for _ in 0..100 {
        let ns = rng.random_range(1..=8);
        let k = rng.random_range(1..=6);
        let vf = random_value_function(&mut rng, ns, k, 4);
        let back: ValueFunction = read_policy(&write_policy(&vf).unwrap()).unwrap();
        policies_exact &= back == vf;
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-12 && policies_exact && t < Duration::from_secs(5),
        format!(
            "max model diff {worst:.3e} over {} models, policies exact: {policies_exact}, {:.2} s",
            models.len(),
            t.as_secs_f64()
        ),
    )
}

fn criterion_9() -> Verdict {
    let dir = tempfile::TempDir::new().unwrap();
    let run = |sub: &str| {
        let args = SolveArgs {
            model: None,
            domain: Some("tag".into()),
            beliefs: 1000,
            seed: 7,
            max_stages: 1000,
            eps: None,
            stable_stages: 5,
            algo: Algo::Perseus,
            scheme: "1,0,1".into(),
            max_seconds: None,
            out: dir.path().join(sub),
        };
        let code = cmd_solve(&args);
        (code, std::fs::read(dir.path().join(sub).join("stats.csv")).unwrap_or_default())
    };
    let (c1, a) = run("a");
    let (c2, b) = run("b");
    verdict(
        c1 == 0 && c2 == 0 && !a.is_empty() && a == b,
        format!("exit codes {c1}/{c2}, {} and {} bytes, identical: {}", a.len(), b.len(), a == b),
    )
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Verdict); 9] = [
        (1, "backup equals one-step lookahead", criterion_1),
        (2, "backup stages never lower a belief's value", criterion_2),
        (3, "agreement with exact value iteration", criterion_3),
        (4, "exact backup matches point-based backup", criterion_4),
        (5, "Tag returns", criterion_5),
        (6, "continuous navigation trends", criterion_6),
        (7, "sample bound", criterion_7),
        (8, "model and policy file round trips", criterion_8),
        (9, "solve is deterministic", criterion_9),
    ];
    let mut failed = 0;
    for (k, name, run) in criteria {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let v = run();
        println!("criterion {k} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
