use proptest::prelude::*;

use cfmm_router::generate::{self, DEFAULT_FEE};
use cfmm_router::markets::{
    solve_swap_generic, BoundedProductMarket, BoundedSegment, GeomMeanMarket, GeomMeanPool,
};
use cfmm_router::oracle;
use cfmm_router::solver::{self, SolverConfig};
use cfmm_router::{Market, MarketSnapshot, Objective, TokenMap};

fn pair() -> TokenMap {
    TokenMap::pair(0, 1).unwrap()
}

fn gmean_market() -> impl Strategy<Value = Market> {
    (
        10.0..1e4f64,
        10.0..1e4f64,
        prop_oneof![Just(0.5), Just(0.8), 0.05..0.95f64],
        prop_oneof![Just(1.0), Just(0.997), 0.9..1.0f64],
    )
        .prop_map(|(a, b, w, fee)| {
            Market::GeomMean(
                GeomMeanMarket::new(GeomMeanPool::new([a, b], w, fee).unwrap(), pair()).unwrap(),
            )
        })
}

fn bounded_market() -> impl Strategy<Value = Market> {
    (
        0.0..1e3f64,
        0.0..1e3f64,
        0.0..1e3f64,
        0.0..1e3f64,
        prop_oneof![Just(1.0), Just(0.997)],
    )
        .prop_filter("virtual reserves", |(r0, r1, a, b, _)| {
            r0 + a > 1e-3 && r1 + b > 1e-3
        })
        .prop_map(|(r0, r1, a, b, fee)| {
            let seg = BoundedSegment::new([r0, r1], a, b, fee).unwrap();
            Market::BoundedProduct(BoundedProductMarket::new(seg, pair()).unwrap())
        })
}

fn any_market() -> impl Strategy<Value = Market> {
    prop_oneof![gmean_market(), bounded_market()]
}

fn prices() -> impl Strategy<Value = [f64; 2]> {
    (-4.0..4.0f64, 0.1..10.0f64).prop_map(|(l, p1)| [p1 * l.exp(), p1])
}

fn value(p: &[f64], t: &cfmm_router::Trade) -> f64 {
    t.value(p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn scatter_then_gather_is_identity(n in 2usize..20, a in 0usize..20, b in 0usize..20, x in -1e3..1e3f64, y in -1e3..1e3f64) {
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b);
        let map = TokenMap::pair(a, b).unwrap();
        let g = map.scatter(&[x, y], n).unwrap();
        prop_assert_eq!(g.iter().filter(|v| **v != 0.0).count(), (x != 0.0) as usize + (y != 0.0) as usize);
        prop_assert_eq!(map.gather(&g).unwrap(), vec![x, y]);
    }

    #[test]
    fn arbitrage_is_a_valid_trade(m in any_market(), p in prices()) {
        let r = m.find_arb(&p).unwrap();
        let t = &r.trade;
        prop_assert!(r.objective_value >= 0.0);
        prop_assert!(t.tendered.iter().chain(&t.received).all(|v| *v >= 0.0));
        prop_assert_eq!(t.tendered[0] * t.tendered[1], 0.0);
        prop_assert_eq!(t.received[0] * t.received[1], 0.0);
        let v = value(&p, t);
        prop_assert!((v - r.objective_value).abs() <= 1e-9 * (p[0] * t.tendered[0] + p[1] * t.tendered[1]).max(1e-300));
        prop_assert!(oracle::trade_is_feasible(&m, t, 1e-8));
    }

    #[test]
    fn zero_trade_exactly_inside_the_spread(m in any_market(), p in prices()) {
        let r = m.find_arb(&p).unwrap();
        prop_assert_eq!(r.trade.is_zero(), m.no_trade(&p).unwrap());
        prop_assert_eq!(r.trade.is_zero(), r.objective_value == 0.0);
    }

    #[test]
    fn arbitrage_is_homogeneous_in_prices(m in any_market(), p in prices(), s in 0.01..100.0f64) {
        let a = m.find_arb(&p).unwrap();
        let b = m.find_arb(&[s * p[0], s * p[1]]).unwrap();
        let tol = 1e-9 * a.objective_value.max(1e-12);
        prop_assert!((b.objective_value - s * a.objective_value).abs() <= s * tol + 1e-12 * s * (p[0] + p[1]));
    }

    #[test]
    fn arbitrage_value_is_convex_in_prices(m in any_market(), p in prices(), q in prices()) {
        let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
        let f = |x: &[f64]| m.find_arb(x).unwrap().objective_value;
        let (fp, fq, fm) = (f(&p), f(&q), f(&mid));
        prop_assert!(fm <= (fp + fq) / 2.0 + 1e-9 * (1.0 + fp + fq));
    }

    #[test]
    fn closed_form_matches_generic_solver(a in 10.0..1e4f64, b in 10.0..1e4f64, w in 0.05..0.95f64, fee in 0.9..1.0f64, p in prices()) {
        let pool = GeomMeanPool::new([a, b], w, fee).unwrap();
        let cf = pool.find_arb(&p).unwrap();
        let gen = solve_swap_generic(&pool, &p).unwrap();
        let d = (cf.objective_value - gen.objective_value).abs();
        prop_assert!(d <= 1e-8 * cf.objective_value.max(gen.objective_value).max(1e-12), "{} vs {}", cf.objective_value, gen.objective_value);
    }

    #[test]
    fn aggregate_matches_segment_sum(s in 1usize..60, seed in 0u64..1000, l in -0.5..0.5f64) {
        let agg = generate::ladder(s, seed, DEFAULT_FEE, 1.02).unwrap();
        let p = [l.exp(), 1.0];
        let a = agg.find_arb(&p).unwrap();
        let b = agg.find_arb_naive(&p).unwrap();
        prop_assert!((a.objective_value - b.objective_value).abs() <= 1e-9 * b.objective_value.max(1e-12));
    }
}

fn instance() -> impl Strategy<Value = (MarketSnapshot, Objective)> {
    (2usize..40, 0u64..10_000, any::<bool>()).prop_map(|(m, seed, liquidate)| {
        let snap = generate::random_instance(m, seed, DEFAULT_FEE).unwrap();
        let obj = if liquidate {
            let n = snap.n_assets();
            Objective::liquidate(
                (0..n)
                    .map(|j| if j == 0 { 0.0 } else { 5.0 * j as f64 })
                    .collect(),
                0,
            )
        } else {
            Objective::arbitrage(snap.prices.clone().unwrap())
        };
        (snap, obj)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solution_satisfies_weak_duality_and_feasibility((snap, obj) in instance()) {
        let sol = solver::solve(&snap, &obj, &SolverConfig::default()).unwrap();
        prop_assert!(sol.converged);
        let scale = solver::initial_point(&obj, &snap).iter().fold(1.0f64, |m, x| m.max(*x));
        let psi = snap.net_trade(&sol.trades).unwrap();
        prop_assert_eq!(&psi.psi, &sol.psi.psi);
        let floor = obj.psi_floor();
        // Weak duality holds for feasible baskets. Raising psi to its floor
        // costs at most nu^T (floor - psi)^+ in the dual bound.
        let shortfall: f64 = sol.nu.iter().zip(&psi.psi).zip(&floor)
            .map(|((n, p), f)| n * (f - p).max(0.0))
            .sum();
        prop_assert!(
            sol.utility <= sol.dual_value + shortfall + 1e-9 * sol.dual_value.abs().max(1.0),
            "{} > {} + {}", sol.utility, sol.dual_value, shortfall
        );
        for (p, f) in psi.psi.iter().zip(&floor) {
            prop_assert!(*p >= f - 1e-6 * scale);
        }
        for (m, t) in snap.markets.iter().zip(&sol.trades) {
            prop_assert!(oracle::trade_is_feasible(m, t, 1e-8));
        }
    }

    #[test]
    fn dual_values_never_increase((snap, obj) in instance()) {
        let sol = solver::solve(&snap, &obj, &SolverConfig::default()).unwrap();
        for w in sol.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn solve_is_deterministic((snap, obj) in instance()) {
        let a = solver::solve(&snap, &obj, &SolverConfig::default()).unwrap();
        let serial = SolverConfig { parallel: false, ..SolverConfig::default() };
        let b = solver::solve(&snap, &obj, &serial).unwrap();
        prop_assert_eq!(a.nu, b.nu);
        prop_assert_eq!(a.psi.psi, b.psi.psi);
        prop_assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn snapshot_round_trips_through_json(m in 1usize..30, seed in 0u64..10_000) {
        let snap = generate::random_instance(m, seed, DEFAULT_FEE).unwrap();
        let back = MarketSnapshot::from_json(&snap.to_json().unwrap()).unwrap();
        prop_assert_eq!(snap.to_json().unwrap(), back.to_json().unwrap());
    }
}
