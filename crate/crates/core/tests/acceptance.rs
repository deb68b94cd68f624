//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria listed in `KNOWN` are expected to fail (see the README); any
//! other failure makes the run exit nonzero.

use std::time::{Duration, Instant};

use otclean::ci_project::project_to_ci;
use otclean::cost::{build_cost_matrix, CostMatrix, CostSpec};
use otclean::dist::{cmi, kl_divergence, CiConstraint, Distribution, Schema};
use otclean::fastotclean::{fast_otclean, CleanerConfig, CleanerResult, Init};
use otclean::io::Dataset;
use otclean::ot::{exact_ot_lp, sinkhorn, transport_cost, SolverParams, TransportPlan};
use otclean::qclp::{build_qclp, solve_qclp_alternating};
use otclean::repair::{apply_cleaner_indices, cleaner_from_plan};
use otclean::unsaturated::{build_coupling_greedy, lift_product, repair_unsaturated, Lift, SplitSchema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose failure is understood: the D2 fixture's optimal repair
/// costs 1/6, not 1/4.
const KNOWN: &[usize] = &[1, 4];

type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn xyz() -> Schema {
    Schema::binary(&["X", "Y", "Z"])
}

fn cells(s: &Schema, m: &[(usize, f64)]) -> Distribution {
    let mut mass = vec![0.0; s.size()];
    for &(i, v) in m {
        mass[i] = v;
    }
    Distribution::new(s.clone(), mass).unwrap()
}

fn d2_rows() -> Vec<usize> {
    vec![0b100, 0b101, 0b110, 0b110]
}

fn d2() -> Distribution {
    Distribution::from_indices(&d2_rows(), xyz()).unwrap()
}

fn y_indep_z() -> CiConstraint {
    CiConstraint::new(["Y"], ["Z"], Vec::<&str>::new()).unwrap()
}

/// Appendix fixture over (X, Y, W) with X ⫫ Y.
fn appendix() -> (Distribution, CiConstraint, SplitSchema) {
    let s = Schema::binary(&["X", "Y", "W"]);
    let p = cells(&s, &[(0b000, 0.1), (0b110, 0.1), (0b001, 0.4), (0b111, 0.4)]);
    let sigma = CiConstraint::new(["X"], ["Y"], Vec::<&str>::new()).unwrap();
    let split = SplitSchema::new(&s, &sigma).unwrap();
    (p, sigma, split)
}

fn appendix_plan_u(split: &SplitSchema) -> TransportPlan {
    TransportPlan::from_cells(
        split.u.clone(),
        split.u.clone(),
        [(0, 0, 0.25), (0, 1, 0.25), (3, 3, 0.25), (3, 2, 0.25)],
    )
    .unwrap()
}

fn random_dist(s: &Schema, rng: &mut ChaCha8Rng, lo: f64) -> Distribution {
    let w = (0..s.size()).map(|_| rng.random_range(lo..1.0)).collect();
    Distribution::from_weights(s.clone(), w).unwrap()
}

fn hamming(s: &Schema) -> CostMatrix {
    build_cost_matrix(s, &CostSpec::hamming()).unwrap()
}

fn worst_increase(r: &CleanerResult) -> f64 {
    r.trace
        .windows(2)
        .map(|w| w[1].objective - w[0].objective)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn d2_repair() -> Outcome {
    let p = d2();
    let s = xyz();
    let t = Instant::now();
    let r = fast_otclean(&p, &hamming(&s), &y_indep_z(), &CleanerConfig::default()).unwrap();
    let elapsed = t.elapsed();
    let cost = transport_cost(&r.plan, &hamming(&s)).unwrap();
    let (q110, q111) = (r.target.mass()[0b110], r.target.mass()[0b111]);
    let ci = cmi(&r.target, &y_indep_z()).unwrap();
    let pass = (cost - 0.25).abs() <= 0.02
        && (q110 - 0.25).abs() <= 0.01
        && (q111 - 0.25).abs() <= 0.01
        && ci <= 1e-10
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("cost {cost:.4}, Q(110) {q110:.4}, Q(111) {q111:.4}, cmi {ci:.1e}, {elapsed:.2?}"),
    )
}

fn appendix_greedy() -> Outcome {
    let (p, _, split) = appendix();
    let t = Instant::now();
    let pi = build_coupling_greedy(&p, &appendix_plan_u(&split), &split).unwrap();
    let elapsed = t.elapsed();
    let want = [
        (0b000, 0b000, 0.1),
        (0b110, 0b110, 0.1),
        (0b001, 0b001, 0.15),
        (0b001, 0b011, 0.25),
        (0b111, 0b111, 0.15),
        (0b111, 0b101, 0.25),
    ];
    let mut expect = vec![0.0; 64];
    for (i, j, m) in want {
        expect[i * 8 + j] = m;
    }
    let plan_err = pi.mass().iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let q = pi.target().unwrap();
    let q_want = [
        (0b000, 0.1),
        (0b001, 0.15),
        (0b011, 0.25),
        (0b110, 0.1),
        (0b111, 0.15),
        (0b101, 0.25),
    ];
    let q_star = cells(&split.full, &q_want);
    let q_err = q.max_abs_diff(&q_star).unwrap();
    let pass = plan_err <= 1e-12 && q_err <= 1e-12 && elapsed < Duration::from_millis(100);
    outcome(pass, format!("plan err {plan_err:.1e}, q err {q_err:.1e}, {elapsed:.2?}"))
}

/// Largest violation of the three coupling properties and of the cost
/// identity for one lifted plan.
fn lift_violation(p: &Distribution, plan_u: &TransportPlan, pi: &TransportPlan, split: &SplitSchema) -> f64 {
    let n = split.full.size();
    let du = split.u.size();
    let mut worst: f64 = 0.0;
    for (a, b) in pi.src_marginal().iter().zip(p.mass()) {
        worst = worst.max((a - b).abs());
    }
    let mut on_u = vec![0.0; du * du];
    for i in 0..n {
        for j in 0..n {
            let m = pi.get(i, j);
            if split.w_of(i) != split.w_of(j) {
                worst = worst.max(m);
            }
            on_u[split.u_of(i) * du + split.u_of(j)] += m;
        }
    }
    for (a, b) in on_u.iter().zip(plan_u.mass()) {
        worst = worst.max((a - b).abs());
    }
    let full = transport_cost(pi, &hamming(&split.full)).unwrap();
    let marginal = transport_cost(plan_u, &hamming(&split.u)).unwrap();
    worst.max((full - marginal).abs())
}

fn lift_properties() -> Outcome {
    let (p, _, split) = appendix();
    let mut cases = vec![(p, appendix_plan_u(&split))];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let p = random_dist(&split.full, &mut rng, 0.0);
        let pu = p.marginalize(&["X", "Y"]).unwrap();
        // Row-scale a random matrix so its source marginal is P_U.
        let mut m: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        for r in 0..4 {
            let total: f64 = m[r * 4..r * 4 + 4].iter().sum();
            for x in &mut m[r * 4..r * 4 + 4] {
                *x *= pu.mass()[r] / total;
            }
        }
        let plan_u = TransportPlan::from_raw(split.u.clone(), split.u.clone(), m).unwrap();
        cases.push((p, plan_u));
    }
    let mut worst: f64 = 0.0;
    for (p, plan_u) in &cases {
        for pi in [
            lift_product(p, plan_u, &split).unwrap(),
            build_coupling_greedy(p, plan_u, &split).unwrap(),
        ] {
            worst = worst.max(lift_violation(p, plan_u, &pi, &split));
        }
    }
    outcome(worst <= 1e-9, format!("{} cases, worst violation {worst:.1e}", cases.len()))
}

fn qclp_agreement() -> Outcome {
    let s = xyz();
    let p = d2();
    let sigma = y_indep_z();
    let prog = build_qclp(&p, &hamming(&s), &sigma).unwrap();
    let init = project_to_ci(&p, &sigma).unwrap();
    let r = solve_qclp_alternating(&prog, &init, 50, 1e-9).unwrap();
    let cost = r.final_cost();
    let residual = r.residuals.last().copied().unwrap_or(f64::INFINITY);
    let fixture_ok = ((cost - 0.25) / 0.25).abs() <= 0.05 && residual <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let (da, db) = (1 + k % 2, 2 + k % 3);
        let s = Schema::new(vec![
            otclean::dist::Attribute::new("A", (0..da).map(|i| i.to_string()).collect()),
            otclean::dist::Attribute::new("B", (0..db).map(|i| i.to_string()).collect()),
        ])
        .unwrap();
        let n = s.size();
        let entries = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        let c = CostMatrix::from_entries(s.clone(), entries).unwrap();
        let p = random_dist(&s, &mut rng, 0.0);
        let q = random_dist(&s, &mut rng, 0.0);
        let sigma = CiConstraint::new(["A"], ["B"], Vec::<&str>::new()).unwrap();
        let prog = build_qclp(&p, &c, &sigma).unwrap();
        let lp = prog.transport_lp(q.mass()).solve().unwrap().objective;
        let (oracle, _) = exact_ot_lp(&p, &q, &c).unwrap();
        worst = worst.max((lp - oracle).abs());
    }
    outcome(
        fixture_ok && worst <= 1e-9,
        format!("D2 cost {cost:.4}, residual {residual:.1e}; LP vs exact worst {worst:.1e}"),
    )
}

fn sinkhorn_correctness() -> Outcome {
    let s = Schema::binary(&["A", "B"]);
    let c = hamming(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut converged, mut feas, mut rel): (usize, f64, f64) = (0, 0.0, 0.0);
    for _ in 0..100 {
        let p = random_dist(&s, &mut rng, 0.01);
        let q = random_dist(&s, &mut rng, 0.01);
        let out = sinkhorn(&p, &q, &c, SolverParams::default(), None).unwrap();
        if !out.converged {
            continue;
        }
        converged += 1;
        for (a, b) in out.plan.src_marginal().iter().zip(p.mass()) {
            feas = feas.max((a - b).abs());
        }
        for (a, b) in out.plan.dst_marginal().iter().zip(q.mass()) {
            feas = feas.max((a - b).abs());
        }
        let ent = transport_cost(&out.plan, &c).unwrap();
        let (lp, _) = exact_ot_lp(&p, &q, &c).unwrap();
        rel = rel.max((ent - lp) / lp.max(1e-12));
    }
    outcome(
        converged > 0 && feas <= 1e-6 && rel <= 0.02,
        format!("{converged}/100 converged, marginal err {feas:.1e}, cost excess {:.3}%", rel * 100.0),
    )
}

fn monotone_descent() -> Outcome {
    let s = xyz();
    let c = hamming(&s);
    let cfg = CleanerConfig::default();
    let mut worst = fast_otclean(&d2(), &c, &y_indep_z(), &cfg).map(|r| worst_increase(&r)).unwrap();
    let (p, sigma, split) = appendix();
    let r = fast_otclean(&p, &hamming(&split.full), &sigma, &cfg).unwrap();
    worst = worst.max(worst_increase(&r));
    let sat = CiConstraint::new(["X"], ["Y"], ["Z"]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let p = random_dist(&s, &mut rng, 0.01);
        worst = worst.max(worst_increase(&fast_otclean(&p, &c, &sat, &cfg).unwrap()));
    }
    outcome(worst <= 1e-9, format!("2 fixtures + 50 random, largest step {worst:.1e}"))
}

fn optimization_claims() -> Outcome {
    let s = xyz();
    let c = hamming(&s);
    let mut cfg = CleanerConfig {
        outer_max: 20,
        ..CleanerConfig::default()
    };
    let warm = fast_otclean(&d2(), &c, &y_indep_z(), &cfg).unwrap().sinkhorn_iterations();
    cfg.warm_start = false;
    let cold = fast_otclean(&d2(), &c, &y_indep_z(), &cfg).unwrap().sinkhorn_iterations();
    let warm_ok = 2 * warm <= cold;

    let (p, sigma, split) = appendix();
    let fixtures = [(d2(), y_indep_z(), c.clone()), (p, sigma, hamming(&split.full))];
    let mut init_ok = true;
    let mut counts = Vec::new();
    for (p, sigma, c) in &fixtures {
        let nmf = fast_otclean(p, c, sigma, &CleanerConfig::default()).unwrap().outer_iterations();
        let random: Vec<usize> = (0..5)
            .map(|seed| {
                let cfg = CleanerConfig {
                    init: Init::Random { seed },
                    ..CleanerConfig::default()
                };
                fast_otclean(p, c, sigma, &cfg).unwrap().outer_iterations()
            })
            .collect();
        init_ok &= random.iter().all(|&r| nmf <= r);
        counts.push(format!("nmf {nmf} vs random {random:?}"));
    }
    outcome(
        warm_ok && init_ok,
        format!("inner iterations warm {warm} cold {cold}; {}", counts.join("; ")),
    )
}

fn unsaturated_equivalence() -> Outcome {
    let s = xyz();
    let (p, sigma, split) = appendix();
    let cfg = CleanerConfig::default();
    let mut details = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, p, sigma, split) in [
        ("D2", d2(), y_indep_z(), SplitSchema::new(&s, &y_indep_z()).unwrap()),
        ("appendix", p, sigma, split),
    ] {
        let c = hamming(&split.full);
        let direct = transport_cost(&fast_otclean(&p, &c, &sigma, &cfg).unwrap().plan, &c).unwrap();
        let r = repair_unsaturated(&p, &sigma, &hamming(&split.u), &cfg, Lift::Product).unwrap();
        let reduced = transport_cost(&r.plan, &c).unwrap();
        let rel = (reduced - direct).abs() / direct;
        worst = worst.max(rel);
        details.push(format!("{name} {reduced:.4} vs {direct:.4}"));
    }
    outcome(worst <= 0.02, format!("{}, worst {:.2}%", details.join(", "), worst * 100.0))
}

fn kl_counterexample() -> Outcome {
    let (p, _, split) = appendix();
    let s = split.full.clone();
    let pi1 = TransportPlan::from_cells(
        s.clone(),
        s.clone(),
        [
            (0b000, 0b000, 0.1),
            (0b110, 0b110, 0.1),
            (0b001, 0b001, 0.15),
            (0b001, 0b101, 0.25),
            (0b111, 0b111, 0.15),
            (0b111, 0b011, 0.25),
        ],
    )
    .unwrap();
    let pi2 = TransportPlan::from_cells(
        s.clone(),
        s.clone(),
        [
            (0b000, 0b100, 0.1),
            (0b001, 0b101, 0.15),
            (0b110, 0b010, 0.1),
            (0b111, 0b011, 0.15),
            (0b001, 0b001, 0.25),
            (0b111, 0b111, 0.25),
        ],
    )
    .unwrap();
    let on_u = |pi: &TransportPlan| {
        let mut m = vec![0.0; 16];
        for (i, j, v) in pi.nonzero() {
            m[split.u_of(i) * 4 + split.u_of(j)] += v;
        }
        m
    };
    let same = on_u(&pi1).iter().zip(on_u(&pi2)).all(|(a, b)| (a - b).abs() <= 1e-12);
    let c = hamming(&s);
    let (c1, c2) = (transport_cost(&pi1, &c).unwrap(), transport_cost(&pi2, &c).unwrap());
    let kl1 = kl_divergence(&p, &pi1.target().unwrap()).unwrap();
    let kl2 = kl_divergence(&p, &pi2.target().unwrap()).unwrap();
    let pass = same && (c1 - c2).abs() <= 1e-12 && (kl1 - kl2).abs() > 0.01;
    outcome(
        pass,
        format!("same marginal repair {same}, costs {c1:.3}/{c2:.3}, KL {kl1:.4} vs {kl2}"),
    )
}

fn sampling_consistency() -> Outcome {
    let s = xyz();
    let fig2 = TransportPlan::from_cells(
        s.clone(),
        s.clone(),
        [
            (0b100, 0b100, 0.25),
            (0b101, 0b101, 0.25),
            (0b110, 0b110, 0.25),
            (0b110, 0b111, 0.25),
        ],
    )
    .unwrap();
    let cleaner = cleaner_from_plan(&fig2).unwrap();
    let n = 5000;
    let data: Vec<usize> = (0..n).flat_map(|_| d2_rows()).collect();
    let out = apply_cleaner_indices(&data, &cleaner, 42).unwrap();
    let count = |t: usize| out.iter().filter(|&&i| i == t).count() as f64;
    let band = 3.0 * (2.0 * n as f64 * 0.25).sqrt();
    let (c110, c111) = (count(0b110), count(0b111));
    let in_band = (c110 - n as f64).abs() <= band && (c111 - n as f64).abs() <= band;
    let ci = cmi(&Distribution::from_indices(&out, s.clone()).unwrap(), &y_indep_z()).unwrap();
    let csv = |idx: &[usize]| {
        let mut buf = Vec::new();
        Dataset::from_indices(&s, idx).write_to(&mut buf).unwrap();
        buf
    };
    let again = apply_cleaner_indices(&data, &cleaner, 42).unwrap();
    let identical = csv(&out) == csv(&again);
    outcome(
        in_band && ci <= 0.005 && identical,
        format!("counts {c110}/{c111} (band ±{band:.0}), cmi {ci:.1e}, identical {identical}"),
    )
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("D2 repair reproduces the worked example", d2_repair),
        ("greedy coupling reproduces the appendix", appendix_greedy),
        ("lifted couplings keep their properties", lift_properties),
        ("alternating QCLP agrees with the LP oracle", qclp_agreement),
        ("Sinkhorn plans are feasible and near optimal", sinkhorn_correctness),
        ("objective trace is non-increasing", monotone_descent),
        ("warm start and NMF init pay off", optimization_claims),
        ("unsaturated reduction matches the direct solve", unsaturated_equivalence),
        ("equal-cost lifts differ in KL", kl_counterexample),
        ("sampling follows the cleaner", sampling_consistency),
    ];
    let mut unexpected = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        let o = run();
        let tag = match (o.pass, KNOWN.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(id);
                "FAIL"
            }
        };
        println!("{tag} {id:>2} {name}: {}", o.detail);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
