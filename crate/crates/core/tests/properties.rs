use mmab_sax::env::{self, Distribution, InstanceConfig};
use mmab_sax::harness::{self, Policy, RunConfig};
use mmab_sax::protocol::{codec, BlockLayout, ConnectivityGraph};
use mmab_sax::schedule::{self, PullCounters};
use mmab_sax::stats;
use proptest::prelude::*;

fn distinct_means(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::sample::subsequence((1..100).collect::<Vec<u32>>(), k)
        .prop_shuffle()
        .prop_map(|v| v.into_iter().map(|x| x as f64 / 100.0).collect())
}

fn instance(max_k: usize, max_m: usize, max_c: usize) -> impl Strategy<Value = InstanceConfig> {
    (1..=max_k)
        .prop_flat_map(move |k| {
            (
                distinct_means(k),
                proptest::collection::vec(1..=max_c, k),
                1..=k.min(max_m),
            )
        })
        .prop_map(|(means, caps, m)| InstanceConfig::uniform(&means, &caps, Distribution::PointMass, m, 10, 0.01))
}

fn enumerate_best(inst: &InstanceConfig) -> f64 {
    let k = inst.k();
    let mut best = f64::NEG_INFINITY;
    for code in 0..k.pow(inst.players as u32) {
        let profile: Vec<usize> = (0..inst.players).map(|p| code / k.pow(p as u32) % k).collect();
        best = best.max(env::profile_value(inst, &profile));
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn greedy_matches_enumeration(inst in instance(5, 4, 3)) {
        let opt = env::optimal_allocation(&inst).unwrap();
        prop_assert!((opt.value - enumerate_best(&inst)).abs() < 1e-12);
    }

    #[test]
    fn allocation_is_feasible(inst in instance(8, 8, 4)) {
        let opt = env::optimal_allocation(&inst).unwrap();
        prop_assert_eq!(opt.counts.iter().sum::<usize>(), inst.players);
        for (a, &c) in opt.counts.iter().enumerate() {
            prop_assert!(c <= inst.arms[a].capacity);
        }
        let v: f64 = opt.counts.iter().zip(&inst.arms).map(|(&c, a)| c as f64 * a.mean).sum();
        prop_assert!((v - opt.value).abs() < 1e-12);
    }

    #[test]
    fn regret_is_nonnegative(inst in instance(6, 5, 3), seed in any::<u64>()) {
        let opt = env::optimal_allocation(&inst).unwrap();
        let k = inst.k();
        let profile: Vec<usize> = (0..inst.players).map(|p| (seed >> (4 * p)) as usize % k).collect();
        prop_assert!(env::step_regret(&inst, &opt, &profile) >= 0.0);
        prop_assert!(env::profile_value(&inst, &profile) <= opt.value + 1e-12);
    }

    #[test]
    fn feedback_is_order_free(inst in instance(5, 4, 2), t in 0u64..1_000_000, seed in any::<u64>()) {
        let mut inst = inst;
        inst.arms.iter_mut().for_each(|a| a.dist = Distribution::Bernoulli);
        inst.seed = seed;
        let profile: Vec<usize> = (0..inst.players).map(|p| p % inst.k()).collect();
        let a = env::sample_feedback(&inst, &profile, t).unwrap();
        let b = env::sample_feedback(&inst, &profile, t).unwrap();
        prop_assert_eq!(a.clone(), b);
        for (p, r) in a.iter().enumerate() {
            prop_assert!(*r == 0.0 || *r == 1.0);
            if env::occupancy(&profile, inst.k())[profile[p]] > inst.arms[profile[p]].capacity {
                prop_assert_eq!(*r, 0.0);
            }
        }
    }

    #[test]
    fn every_player_meets_every_full_group(m in 1usize..=12, session in 0u64..50) {
        let players: Vec<usize> = (0..m).collect();
        let order = schedule::rotated(&players, session);
        for psi in 1..=m {
            let mut seen = vec![false; m];
            for pass in 1..=2u8 {
                let plan = schedule::grouped_rr_plan(psi, pass, &order).unwrap();
                for (g, members) in plan.groups.iter().enumerate() {
                    prop_assert!(members.len() <= psi);
                    if plan.is_full(g) {
                        members.iter().for_each(|&p| seen[p] = true);
                    }
                }
            }
            prop_assert!(seen.iter().all(|&s| s), "m={} psi={}", m, psi);
        }
    }

    #[test]
    fn session_counts_grow_by_one(m in 1usize..=8, extra in 0usize..4, sessions in 1u64..6) {
        let k = m + extra;
        let players: Vec<usize> = (0..m).collect();
        let mut counters = PullCounters::new(m, k);
        for s in 0..sessions {
            counters.record_session(&players, s);
        }
        for arm in 0..k {
            for psi in 1..=m {
                prop_assert!(counters.min_count(arm, psi) >= sessions);
            }
        }
    }

    #[test]
    fn grouped_sessions_respect_group_size(m in 1usize..=8, extra in 0usize..4, session in 0u64..20) {
        let k = m + extra;
        let players: Vec<usize> = (0..m).collect();
        let arms: Vec<usize> = (0..k).collect();
        let pulls: Vec<_> = players.iter().map(|&p| schedule::session_pulls(&players, &arms, session, p)).collect();
        prop_assert_eq!(pulls[0].len(), schedule::session_len(m, k));
        for step in 0..pulls[0].len() {
            let mut occ = vec![0; k];
            for p in &pulls {
                occ[p[step].arm] += 1;
            }
            for p in &pulls {
                prop_assert_eq!(occ[p[step].arm], p[step].group_size);
            }
        }
    }

    #[test]
    fn session_pulls_follow_the_group_plan(m in 1usize..=10, extra in 0usize..3, session in 0u64..30) {
        let k = m + extra;
        let players: Vec<usize> = (0..m).collect();
        let arms: Vec<usize> = (0..k).collect();
        let order = schedule::rotated(&players, session);
        let mut counters = PullCounters::new(m, k);
        counters.record_session(&players, session);
        for &me in &players {
            let pulls = schedule::session_pulls(&players, &arms, session, me);
            let mut i = 0;
            for psi in 1..=m {
                for pass in 1..=2u8 {
                    let plan = schedule::grouped_rr_plan(psi, pass, &order).unwrap();
                    let g = plan.group_of(me).unwrap();
                    for round in 0..k {
                        let sp = pulls[i];
                        prop_assert_eq!(sp.arm, (g + round) % k);
                        prop_assert_eq!(sp.group_size, plan.groups[g].len());
                        prop_assert_eq!(sp.with_lead, plan.groups[g].contains(&0));
                        i += 1;
                    }
                }
                let full_passes = (1..=2u8)
                    .filter(|&pass| {
                        let plan = schedule::grouped_rr_plan(psi, pass, &order).unwrap();
                        plan.is_full(plan.group_of(me).unwrap())
                    })
                    .count() as u64;
                prop_assert_eq!(counters.count(me, 0, psi), full_passes);
            }
        }
    }

    #[test]
    fn zero_test_is_minimal(mu in 0.001f64..0.999, dp in 0.0001f64..0.999) {
        let n = stats::zero_test_samples(mu, dp).unwrap();
        let q = 1.0 - mu;
        prop_assert!(q.powi(n as i32) <= dp);
        if n > 0 {
            prop_assert!(q.powi(n as i32 - 1) > dp);
        }
    }

    #[test]
    fn one_power_of_nine_in_trigger_window(mu in 0.0001f64..=1.0) {
        let lo = 32.0 / (mu * mu);
        let hi = 288.0 / (mu * mu);
        let hits = (0..60).filter(|&a| { let p = 9f64.powi(a); lo <= p && p < hi }).count();
        prop_assert_eq!(hits, 1);
    }

    #[test]
    fn floor_exponent_brackets(x in 1.0f64..1e12, base in 1.5f64..20.0) {
        let a = stats::floor_exponent(x, base).unwrap();
        prop_assert!(base.powi(a) <= x);
        prop_assert!(base.powi(a + 1) > x);
    }

    #[test]
    fn omega_is_smallest(gamma in 1u32..20, b in 0.0005f64..0.04, delta in 0.001f64..0.4, k in 2usize..8, m in 1usize..6) {
        prop_assume!(gamma as f64 * b < 1.0);
        let w = stats::omega(gamma, b, delta, k, m).unwrap();
        let target = delta / (4.0 * (k * k * m) as f64);
        let q = 1.0 - gamma as f64 * b;
        prop_assert!(q.powf(w as f64) <= target * (1.0 + 1e-9));
        prop_assert!(q.powf(w as f64 - 1.0) > target * (1.0 - 1e-9));
    }

    #[test]
    fn arm_frames_round_trip(k in 1usize..=16, mask in any::<u16>()) {
        let set: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let f = codec::encode_arms(&set, k);
        prop_assert_eq!(f.bits.len(), k);
        prop_assert_eq!(codec::decode_arms(&f.bits), set);
    }

    #[test]
    fn value_frames_round_trip(v in 0usize..1 << 12) {
        let w = codec::outcome_width(v);
        prop_assert_eq!(codec::decode_value(&codec::encode_value(v, w, codec::FrameKind::Outcome).bits), v);
    }

    #[test]
    fn gamma_digit_recovers_nearby(gamma in 1u32..10_000, off in -4i64..=4) {
        let own = (gamma as i64 + off).max(1) as u32;
        prop_assert_eq!(codec::reconstruct_gamma((gamma % 10) as u8, own), gamma);
    }

    #[test]
    fn blocks_overload_only_the_comm_arm(m in 2usize..=8, extra in 0usize..4, cap_seed in any::<usize>(), comm in any::<usize>()) {
        let k = m + extra;
        let cap = 1 + cap_seed % (m - 1);
        let comm = comm % k;
        let layout = BlockLayout::new(m, k, comm, cap, 3);
        for bit in [false, true] {
            for s in 0..layout.len() {
                let profile: Vec<usize> = (0..m).map(|p| layout.pull(p, s, bit)).collect();
                let occ = env::occupancy(&profile, k);
                prop_assert_eq!(occ[comm], cap + bit as usize);
                for (a, &o) in occ.iter().enumerate() {
                    if a != comm {
                        prop_assert!(o <= 1);
                    }
                }
            }
        }
        for p in 1..m {
            let win = layout.listen_window(p).unwrap();
            for s in win {
                prop_assert_eq!(layout.pull(p, s, false), comm);
            }
        }
    }

    #[test]
    fn simple_round_robin_ledger(inst in instance(6, 6, 3), rounds in 1u64..50) {
        let mut inst = inst;
        inst.horizon = rounds * inst.k() as u64;
        let per_round = harness::simple_rr_round_regret(&inst).unwrap();
        let mut cfg = RunConfig::new(inst);
        cfg.policy = Policy::SimpleRoundRobin;
        let got = harness::run_episode(&cfg).unwrap().ledger.cumulative;
        let want = rounds as f64 * per_round;
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn graph_splits_separated_groups(gap in 0.2f64..0.5, r in 0.025f64..0.08) {
        let mu = [0.9, 0.88, 0.9 - gap, 0.85 - gap];
        let radius = [r; 4];
        let g = ConnectivityGraph::build(&[0, 1, 2, 3], &mu, &radius);
        let (top, bottom) = g.partition(&mu).unwrap();
        prop_assert_eq!(top, vec![0, 1]);
        prop_assert_eq!(bottom, vec![2, 3]);
    }
}

#[test]
fn checkpoint_fixture() {
    let params = stats::ConfidenceParams::new(0.01, 3, 5, env::FeedbackMode::HardSax);
    let text = include_str!("fixtures/checkpoints_m3_k5.csv");
    let mut want = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let n: u64 = f[0].parse().unwrap();
        let ratio: f64 = f[1].parse().unwrap();
        let level: i32 = f[2].parse().unwrap();
        assert!((params.ratio(n) - ratio).abs() < 1e-6);
        want.push((n, level));
    }
    let got: Vec<(u64, i32)> = (1..=100_000u64)
        .filter(|&n| params.is_checkpoint(n - 1, n))
        .map(|n| (n, params.level(n).unwrap()))
        .collect();
    assert_eq!(got, want);
}
