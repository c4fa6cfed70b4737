//! Acceptance suite. Each test prints one PASS/FAIL line, then asserts.

use rand::Rng;
use signalcraft::auction::bvs_public_revenue_mc;
use signalcraft::bvs_pool::{
    check_lemma6, construct_pooling, harmonic, pooled_pair_revenue, pooled_pair_revenue_mc, stats_ak_quadrature,
    tail_balanced, wk_rk,
};
use signalcraft::cli::dispatch;
use signalcraft::model::{
    make_example1, make_example3, make_theorem2_instance, random_kvs, random_lattice, FeaturePrior, FeatureVector,
    PriorAtom,
};
use signalcraft::oracle::{
    best_partition_welfare, binomial_cond_expectation, brute_force_public_optimal, theorem2_fullinfo_revenue,
};
use signalcraft::private::{run_private_scheme, theorem5_bound, uninformed_best_response, BidInterval, PrivateMode};
use signalcraft::public_exact::solve_optimal_public;
use signalcraft::public_mc::{evaluate_mc_scheme, McConfig};
use signalcraft::rng::derive;
use signalcraft::{BvsInstance, PublicScheme, ValueDistribution};

fn verdict(name: &str, pass: bool, detail: String) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

#[test]
fn private_beats_every_public_scheme() {
    let inst = make_example3(0.1).unwrap();
    let (_, public) = solve_optimal_public(&inst).unwrap();
    let private = run_private_scheme(&inst, 0.1, 0.01, 0, 10_000, PrivateMode::Auto).unwrap().plan.aggregate;
    verdict(
        "public/private separation",
        public <= 0.3 + 1e-6 && private >= 0.9 - 1e-6,
        format!("optimal public {public:.6} <= 0.3, private worst-equilibrium {private:.6} >= 0.9"),
    );
}

#[test]
fn sampled_scheme_near_optimal() {
    let eps = 0.2;
    let mut ok = 0;
    let mut rng = derive(2024, 0);
    let mut worst_gap = f64::NEG_INFINITY;
    for t in 0..20u64 {
        let inst = random_kvs(3, 50, &mut rng);
        let (_, opt) = brute_force_public_optimal(&inst).unwrap();
        let config = McConfig::new(3, eps, 100 + t).unwrap();
        let e = evaluate_mc_scheme(&inst, &config, 1000).unwrap();
        worst_gap = worst_gap.max(opt - e.revenue.mean);
        if e.revenue.mean >= opt - eps - 3.0 * e.revenue.std_error {
            ok += 1;
        }
    }
    verdict(
        "sampled public scheme within epsilon of optimum",
        ok >= 19,
        format!("{ok}/20 instances, largest shortfall {worst_gap:.4}"),
    );
}

#[test]
fn pooled_pair_value() {
    let high = ValueDistribution::Uniform(0.0, 1.0);
    let low = ValueDistribution::Point(0.0);
    let exact = pooled_pair_revenue(&high, &low, 4).unwrap();
    let mc = pooled_pair_revenue_mc(&high, &low, 4, 1_000_000, 9).unwrap();
    let pass = exact.std_error == 0.0 && (exact.mean - 1.0 / 6.0).abs() < 1e-15 && mc.agrees_with(1.0 / 6.0, 3.0);
    verdict(
        "pooled pair revenue",
        pass,
        format!("closed form {:.15}, Monte-Carlo {:.5} ± {:.5}", exact.mean, mc.mean, mc.std_error),
    );
}

#[test]
fn pooling_exists_iff_balanced() {
    let mut rng = derive(77, 0);
    let (mut agree, mut balance_ok, mut balanced_count) = (0, 0, 0);
    for t in 0..1000 {
        let len = rng.random_range(2..=10);
        let mut m: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        if t % 2 == 0 {
            // Push one mass near the sum of the rest to probe both sides.
            let rest: f64 = m[1..].iter().sum();
            m[0] = rest * rng.random_range(0.8..1.2);
        }
        let total: f64 = m.iter().sum();
        m.iter_mut().for_each(|x| *x /= total);
        let balanced = tail_balanced(&m);
        balanced_count += balanced as usize;
        let built = construct_pooling(&m);
        if built.is_ok() == balanced {
            agree += 1;
        }
        match built {
            Ok(p) if p.validate(1e-9).is_empty() => balance_ok += 1,
            Err(_) => balance_ok += 1,
            _ => {}
        }
    }
    verdict(
        "pooling exists iff tail-balanced",
        agree == 1000 && balance_ok == 1000,
        format!("{agree}/1000 agree, {balance_ok}/1000 in detailed balance, {balanced_count} balanced"),
    );
}

#[test]
fn pooling_branch_bounds() {
    let high = ValueDistribution::Uniform(0.0, 1.0);
    let mut lines = Vec::new();
    let mut pass = true;
    for low in [ValueDistribution::Point(0.0), ValueDistribution::Exponential(4.0)] {
        for (w, bound) in [(0, 1.0 / 3.0), (1, 1.0 / 8.0), (2, 1.0 / 6.0), (5, 1.0 / 6.0), (22, 1.0 / 6.0)] {
            let r = check_lemma6(&high, &low, 22, w, 100_000, 5).unwrap();
            let ok = match r.ratio {
                Some(q) => q.mean >= bound - 3.0 * q.std_error,
                None => true,
            };
            pass &= ok && r.bound == bound;
            lines.push(match r.ratio {
                Some(q) => format!("{low}/{w}: {:.4}", q.mean),
                None => format!("{low}/{w}: zero welfare"),
            });
        }
    }
    verdict("tail-pooling revenue per branch", pass, lines.join(", "));
}

#[test]
fn lattice_private_bound() {
    let sup = vec![vec![0.0, 0.5, 1.0]; 3];
    let mut ok = 0;
    let mut worst = f64::INFINITY;
    for t in 0..20 {
        let inst = random_lattice(&sup, &mut derive(600 + t, 0));
        let r = run_private_scheme(&inst, 0.05, 0.01, t, 10_000, PrivateMode::Auto).unwrap();
        let b = theorem5_bound(&inst, 0.05).unwrap().bound;
        worst = worst.min(r.plan.aggregate - b);
        if r.plan.aggregate >= b - 1e-6 {
            ok += 1;
        }
    }
    verdict("private lattice revenue bound", ok == 20, format!("{ok}/20, smallest margin {worst:.5}"));
}

#[test]
fn full_information_sum_matches_simulation() {
    let inst = make_theorem2_instance(16, 0.3).unwrap();
    let exact = theorem2_fullinfo_revenue(16, 0.3).unwrap().exact;
    let mc = bvs_public_revenue_mc(&inst, &PublicScheme::FullInformation, 100_000, 3).unwrap();
    verdict(
        "full-information revenue sum vs simulation",
        mc.agrees_with(exact, 3.0),
        format!("exact {exact:.5}, simulated {:.5} ± {:.5}", mc.mean, mc.std_error),
    );
}

#[test]
fn full_information_sum_above_closed_bound() {
    let mut pass = true;
    let mut lines = Vec::new();
    for n in [16, 100, 400] {
        for eps in [0.1, 0.3] {
            let r = theorem2_fullinfo_revenue(n, eps).unwrap();
            pass &= r.exact >= r.lower_bound;
            lines.push(format!("n={n} eps={eps}: {:.4} >= {:.4}", r.exact, r.lower_bound));
        }
    }
    verdict("full-information sum above closed bound", pass, lines.join(", "));
}

#[test]
fn binomial_conditional_mean_below_twice_mean() {
    let v = binomial_cond_expectation(10_000, 0.1, 2000).unwrap();
    verdict("binomial conditional mean below 2mp", v < 2000.0, format!("E[X | X >= 2000] = {v:.4}, 2mp = 2000"));
}

#[test]
fn partition_welfare_monotone() {
    let eps: f64 = 0.3;
    let atoms = FeatureVector::enumerate(4)
        .into_iter()
        .map(|s| {
            let w = s.weight() as i32;
            PriorAtom { mass: eps.powi(w) * (1.0 - eps).powi(4 - w), state: s }
        })
        .collect();
    let inst = BvsInstance {
        n: 4,
        prior: FeaturePrior::explicit(atoms),
        high: ValueDistribution::Bernoulli(1.0, 0.5),
        low: ValueDistribution::Point(0.0),
    };
    let w: Vec<f64> = [1, 2, 3, 16].iter().map(|&k| best_partition_welfare(&inst, k).unwrap().1).collect();
    // Full information: the winner has value 1 iff some targeted bidder draws 1.
    let full = 1.0 - (1.0 - eps * 0.5).powi(4);
    let pass = w[0] <= w[1] + 1e-12 && w[1] <= w[2] + 1e-12 && (w[3] - full).abs() < 1e-12;
    verdict(
        "partition welfare monotone in signal count",
        pass,
        format!("N=1..3: {:.5} {:.5} {:.5}, N=16 {:.6} vs full {full:.6}", w[0], w[1], w[2], w[3]),
    );
}

#[test]
fn order_statistic_analytics() {
    let u = ValueDistribution::Uniform(0.0, 1.0);
    let mut err: f64 = 0.0;
    for k in 2..=10 {
        let s = stats_ak_quadrature(&u, k).unwrap();
        let kf = k as f64;
        err = err.max((s.welfare - kf / (kf + 1.0)).abs()).max((s.revenue - (kf - 1.0) / (kf + 1.0)).abs());
    }
    let mut violations = 0;
    let mut at_one: f64 = 0.0;
    for k in 1..=50 {
        let (_, r1) = wk_rk(1.0, k).unwrap();
        at_one = at_one.max((r1 - (harmonic(k) - 1.0)).abs());
        let mut prev = f64::INFINITY;
        for i in 1..=1000 {
            let (w, r) = wk_rk(i as f64 / 1000.0, k).unwrap();
            let ratio = r / w;
            if ratio > prev + 1e-12 {
                violations += 1;
            }
            prev = ratio;
        }
    }
    verdict(
        "order-statistic analytics",
        err < 1e-5 && at_one < 1e-12 && violations == 0,
        format!("quadrature error {err:.2e}, R_k(1) error {at_one:.1e}, monotonicity violations {violations}"),
    );
}

#[test]
fn winners_curse_best_response() {
    let inst = make_example1();
    let posterior: Vec<(f64, Vec<f64>)> = inst.states.iter().map(|s| (s.mass, s.values.clone())).collect();
    let bids: Vec<Vec<f64>> = inst.states.iter().map(|s| s.values.clone()).collect();
    let br = uninformed_best_response(&posterior, 0, &bids).unwrap();
    let want = vec![BidInterval { lo: 0.0, hi: 2.0, utility: 0.0 }];
    verdict("uninformed best response", br.best == want, format!("{:?}", br.best));
}

#[test]
fn seeded_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");
    let commands: Vec<Vec<String>> = vec![
        format!("eval-public-mc --instance {data}/random3.json --samples 200 --trials 2000 --seed 4"),
        format!("private-scheme --instance {data}/lattice3.json --epsilon 0.05 --trials 5000 --seed 4"),
        format!("bvs-pool --instance {data}/example2.json --trials 5000 --seed 4"),
        "bvs-check-lemma6 --high uniform:0,1 --low exponential:4 --n 6 --weights 1,2 --trials 5000 --seed 4".into(),
        format!("compare --instance {data}/example2.json --schemes full,none,pooling --trials 5000 --seed 4"),
    ]
    .into_iter()
    .map(|c| c.split_whitespace().map(String::from).collect())
    .collect();
    let mut same = 0;
    for (i, args) in commands.iter().enumerate() {
        let run = |tag: &str| {
            let path = dir.path().join(format!("{i}{tag}.csv"));
            let mut argv = vec!["signalcraft".to_string()];
            argv.extend(args.iter().cloned());
            argv.push(if args[0] == "compare" { "--out" } else { "--report" }.into());
            argv.push(path.display().to_string());
            assert_eq!(dispatch(argv), 0, "{args:?}");
            std::fs::read(path).unwrap()
        };
        if run("a") == run("b") {
            same += 1;
        }
    }
    verdict("seeded replay", same == commands.len(), format!("{same}/{} commands byte-identical", commands.len()));
}
