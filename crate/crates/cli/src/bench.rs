//! Benchmark CSV output.
//!
//! Solve table columns: `m,n,median_solve_ms,iterations,dual_value,utility,oracle_gap`.
//! `oracle_gap` is `(utility - oracle utility) / max(1, |utility|)` and is
//! empty unless `--oracle` is given and `m <= 10`.
//!
//! Aggregate table columns: `s,aggregate_ns,naive_ns,speedup`, the median
//! time of one `find_arb` call on an `s`-segment ladder against the
//! per-segment loop. It goes to `<stem>_aggregate.csv` next to the solve
//! table, or after a blank line on stdout.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::anyhow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfmm_router::generate::{self, DEFAULT_FEE};
use cfmm_router::markets::AggregateMarket;
use cfmm_router::{oracle, solver, Objective};

use crate::{base_config, emit, Failure};

const ORACLE_MAX_MARKETS: usize = 10;
const LADDER_SIZES: [usize; 4] = [10, 100, 1000, 10_000];

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn solve_table(
    m_list: &[usize],
    seed: u64,
    reps: usize,
    with_oracle: bool,
) -> Result<String, Failure> {
    let config = base_config()?;
    let mut csv = String::from("m,n,median_solve_ms,iterations,dual_value,utility,oracle_gap\n");
    for &m in m_list {
        let snap = generate::random_instance(m, seed, DEFAULT_FEE)
            .map_err(|e| anyhow!("cannot generate instance: {e}"))?;
        let obj = Objective::arbitrage(snap.prices.clone().unwrap_or_default());
        let mut times = Vec::with_capacity(reps);
        let mut last = None;
        for _ in 0..reps {
            let sol = solver::solve(&snap, &obj, &config).map_err(|e| Failure::Input(e.into()))?;
            times.push(sol.wall_time.as_secs_f64() * 1e3);
            last = Some(sol);
        }
        let sol = last.expect("at least one repetition");
        let gap = if with_oracle && m <= ORACLE_MAX_MARKETS {
            let o = oracle::primal_projected_gradient(&snap, &obj, 100_000, 1.0);
            format!(
                "{:e}",
                (sol.utility - o.utility) / sol.utility.abs().max(1.0)
            )
        } else {
            String::new()
        };
        writeln!(
            csv,
            "{m},{},{:.4},{},{},{},{gap}",
            snap.n_assets(),
            median(times),
            sol.iterations,
            sol.dual_value,
            sol.utility
        )
        .expect("write to string");
        eprintln!(
            "m = {m}: {} iterations, converged {}",
            sol.iterations, sol.converged
        );
    }
    Ok(csv)
}

fn time_per_call(agg: &AggregateMarket, prices: &[[f64; 2]], naive: bool) -> f64 {
    let samples = (0..5)
        .map(|_| {
            let start = Instant::now();
            let mut acc = 0.0;
            for p in prices {
                let r = if naive {
                    agg.find_arb_naive(p)
                } else {
                    agg.find_arb(p)
                };
                acc += r.map(|r| r.objective_value).unwrap_or(0.0);
            }
            std::hint::black_box(acc);
            start.elapsed().as_secs_f64() * 1e9 / prices.len() as f64
        })
        .collect();
    median(samples)
}

fn aggregate_table(seed: u64) -> Result<String, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("s,aggregate_ns,naive_ns,speedup\n");
    for s in LADDER_SIZES {
        let agg = generate::ladder(s, seed, DEFAULT_FEE, 1.01)
            .map_err(|e| anyhow!("cannot build ladder: {e}"))?;
        let width = 0.6 * s as f64 * 1.01f64.ln();
        let prices: Vec<[f64; 2]> = (0..200)
            .map(|_| [rng.gen_range(-width..width).exp(), 1.0])
            .collect();
        let fast = time_per_call(&agg, &prices, false);
        let slow = time_per_call(&agg, &prices, true);
        writeln!(csv, "{s},{fast:.1},{slow:.1},{:.1}", slow / fast).expect("write to string");
    }
    Ok(csv)
}

pub fn run(
    m_list: &[usize],
    seed: u64,
    reps: usize,
    with_oracle: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    if m_list.contains(&0) {
        return Err(anyhow!("market counts must be at least 1").into());
    }
    let solves = solve_table(m_list, seed, reps, with_oracle)?;
    let aggregate = aggregate_table(seed)?;
    match out {
        Some(path) => {
            emit(Some(path), &solves)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
            let sibling = path.with_file_name(format!("{stem}_aggregate.csv"));
            emit(Some(&sibling), &aggregate)
        }
        None => emit(None, &format!("{solves}\n{aggregate}")),
    }
}
