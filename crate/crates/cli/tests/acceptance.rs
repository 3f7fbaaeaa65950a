//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simcascade::coupling::{load_blocks_json, parse_touchstone, save_blocks_json, write_touchstone, TouchstoneData};
use simcascade::model::assemble_gamma;
use simcascade::network::{self, Nilpotency};
use simcascade::optimizer::{beta_star, gradient, loss, optimize, BetaMode, OptimizerConfig, TrainingSet};
use simcascade::{cascade, linalg, synthetic, CMat, Complex64, ControlVector, GlobalScattering, ScatteringBlocks};
use simcascade::{SimError, SimTopology};
use simcascade_cli::bench::{self, flops_at, BenchConfig};
use simcascade_cli::config::{default_bandwidth_grid, Scenario};
use simcascade_cli::report::run_optimization;
use simcascade_cli::sweep::{run_sweep, Axis};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn random_instance(rng: &mut ChaCha8Rng) -> (ScatteringBlocks, ControlVector) {
    let q = rng.random_range(1..=5);
    let k = rng.random_range(1..=16);
    let ports = rng.random_range(1..=8);
    let topo = SimTopology::new(q, k, ports, ports).unwrap();
    let reflections = rng.random_bool(0.5);
    let blocks = synthetic::random_blocks(&topo, reflections, rng);
    let gain = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let ctrl = synthetic::random_control(&topo, gain, rng);
    (blocks, ctrl)
}

fn fifty_instances() -> Vec<(ScatteringBlocks, ControlVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50).map(|_| random_instance(&mut rng)).collect()
}

fn global_parts(b: &ScatteringBlocks, c: &ControlVector) -> (GlobalScattering, CMat) {
    (GlobalScattering::assemble(b).unwrap(), assemble_gamma(c, &b.topology).unwrap())
}

fn channel_equivalence() -> Verdict {
    let clock = Instant::now();
    let mut worst = 0.0f64;
    for (b, c) in fifty_instances() {
        let (g, gamma) = global_parts(&b, &c);
        let global = network::e2e_global(&g, &gamma).unwrap();
        let structured = cascade::e2e_structured(&b, &c).unwrap() + &b.s_rt;
        worst = worst.max(linalg::rel_fro_err(&structured, &global));
    }
    let secs = clock.elapsed().as_secs_f64();
    verdict(worst <= 1e-10 && secs < 10.0, format!("50 instances, max rel err {worst:.2e} (tol 1e-10), {secs:.2} s (limit 10 s)"))
}

fn nilpotency() -> Verdict {
    let mut worst = 0.0f64;
    let mut index_ok = true;
    for (b, c) in fifty_instances() {
        let q = b.topology.layers;
        let (g, gamma) = global_parts(&b, &c);
        worst = worst.max(network::loop_power_max_abs(&g.s_ss, &gamma, q + 1));
        index_ok &= matches!(network::nilpotency_check(&g.s_ss, &gamma, &b.topology), Ok(Nilpotency::Index(m)) if m <= q + 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let topo = SimTopology::new(3, 4, 2, 2).unwrap();
    let dense = synthetic::densify(synthetic::random_blocks(&topo, false, &mut rng), 0.01, &mut rng);
    let ctrl = synthetic::random_control(&topo, 1.0, &mut rng);
    let (g, gamma) = global_parts(&dense, &ctrl);
    let dense_power = network::loop_power_max_abs(&g.s_ss, &gamma, topo.layers + 1);
    let flagged = matches!(network::nilpotency_check(&g.s_ss, &gamma, &topo), Ok(Nilpotency::NotNilpotent))
        && dense_power > 1e-12
        && cascade::e2e_structured(&dense, &ctrl).is_err();
    verdict(
        worst <= 1e-12 && index_ok && flagged,
        format!(
            "max |(S_SS Γ)^(Q+1)| {worst:.2e} (tol 1e-12), indices <= Q+1: {index_ok}; densified instance flagged: {flagged} (power {dense_power:.2e})"
        ),
    )
}

fn gradient_case(seed: u64) -> (ScatteringBlocks, ControlVector, TrainingSet, Complex64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = SimTopology::new(
        rng.random_range(1..=4),
        rng.random_range(1..=8),
        rng.random_range(1..=4),
        rng.random_range(1..=4),
    )
    .unwrap();
    let i = rng.random_range(1..=4);
    let blocks = synthetic::random_blocks(&topo, false, &mut rng);
    let ctrl = synthetic::random_control(&topo, 1.0, &mut rng);
    let training = TrainingSet::new(
        synthetic::complex_gaussian(topo.tx_ports, i, 1.0, &mut rng),
        synthetic::complex_gaussian(topo.rx_ports, i, 1.0, &mut rng),
    )
    .unwrap();
    let beta = Complex64::new(rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0));
    (blocks, ctrl, training, beta)
}

fn gradient_accuracy() -> Verdict {
    const H: f64 = 1e-6;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let (b, c, t, beta) = gradient_case(seed);
        let analytic = gradient(&b, &c, &t, beta).unwrap();
        for (p, a) in analytic.iter().enumerate() {
            let mut plus = c.clone();
            plus.phases[p] += H;
            let mut minus = c.clone();
            minus.phases[p] -= H;
            let fd = (loss(&b, &plus, &t, beta).unwrap() - loss(&b, &minus, &t, beta).unwrap()) / (2.0 * H);
            worst = worst.max((a - fd).abs() / fd.abs());
        }
    }
    verdict(worst <= 1e-6, format!("20 instances at a fixed β, max componentwise rel err {worst:.2e} (tol 1e-6)"))
}

fn beta_optimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_gain = f64::NEG_INFINITY;
    let mut worst_scaled = 0.0f64;
    for _ in 0..20 {
        let (m, i) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let xhat = synthetic::complex_gaussian(m, i, 1.0, &mut rng);
        let target = synthetic::complex_gaussian(m, i, 1.0, &mut rng);
        let beta = beta_star(&xhat, &target).unwrap();
        let energy = |b: Complex64| linalg::fro_sq(&(&xhat * b - &target));
        let base = energy(beta);
        for d in [Complex64::new(1e-4, 0.0), Complex64::new(-1e-4, 0.0), Complex64::new(0.0, 1e-4), Complex64::new(0.0, -1e-4)] {
            worst_gain = worst_gain.max(base - energy(beta + d));
        }
        let c = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let proportional = &xhat * c;
        let b = beta_star(&xhat, &proportional).unwrap();
        worst_scaled = worst_scaled.max(linalg::fro_sq(&(&xhat * b - &proportional)));
    }
    verdict(
        worst_gain < 0.0 && worst_scaled <= 1e-20,
        format!("20 pairs: every ±1e-4 probe raises the loss (max change {worst_gain:.2e}); proportional outputs leave {worst_scaled:.2e} (tol 1e-20)"),
    )
}

fn armijo_descent() -> Verdict {
    let mut monotone = true;
    for seed in 0..10 {
        let (b, c, t, _) = gradient_case(500 + seed);
        let cfg = OptimizerConfig { max_iterations: 200, ..Default::default() };
        let run = optimize(&b, &t, &cfg, &c).unwrap();
        monotone &= run.loss_trace.windows(2).all(|w| w[1] <= w[0]);
    }
    let topo = SimTopology::new(1, 1, 1, 1).unwrap();
    let one = CMat::identity(1, 1);
    let blocks = ScatteringBlocks::new(topo, vec![], one.clone(), one.clone()).unwrap();
    let training = TrainingSet::new(one.clone(), one).unwrap();
    let cfg = OptimizerConfig {
        beta: BetaMode::Fixed(Complex64::new(1.0, 0.0)),
        max_iterations: 100,
        ..Default::default()
    };
    let run = optimize(&blocks, &training, &cfg, &ControlVector::new(vec![2.0], 1.0).unwrap()).unwrap();
    let scalar_ok = run.final_loss() < 1e-10 && run.iterations_used <= 100;
    verdict(
        monotone && scalar_ok,
        format!(
            "10 traces non-increasing: {monotone}; scalar case loss {:.2e} after {} iterations (tol 1e-10 within 100)",
            run.final_loss(),
            run.iterations_used
        ),
    )
}

fn complexity_scaling() -> Verdict {
    let cfg = BenchConfig { max_q: 16, max_k: 64, reps: 1, ports: 4, max_oracle_ports: 128 };
    let rows = bench::run_bench(&cfg).unwrap();
    let ratio = |q1, k1, q2, k2, path| {
        flops_at(&rows, q2, k2, path).unwrap() as f64 / flops_at(&rows, q1, k1, path).unwrap() as f64
    };
    let k_ratio = ratio(4, 32, 4, 64, bench::Path::Structured);
    let small_k = ratio(4, 8, 4, 16, bench::Path::Structured);
    let q_ratio = ratio(8, 32, 16, 32, bench::Path::Structured);
    let oracle = ratio(4, 8, 4, 16, bench::Path::Oracle);
    verdict(
        (3.5..=4.5).contains(&k_ratio) && (1.8..=2.2).contains(&q_ratio) && (7.0..=9.0).contains(&oracle),
        format!(
            "structured K 32->64 x{k_ratio:.2} (3.5..4.5), Q 8->16 x{q_ratio:.2} (1.8..2.2), oracle N 64->128 x{oracle:.2} (7..9); K 8->16 x{small_k:.2} for reference"
        ),
    )
}

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn mmwave() -> Scenario {
    Scenario::load(&configs_dir().join("mmwave_k64.toml")).unwrap()
}

fn diagonalization() -> Verdict {
    let scenario = mmwave();
    let out = run_optimization(&scenario).unwrap();
    let r = &out.report;
    let best = r.best_diagonality_db;
    let soft = if best >= 35.0 { "reached" } else { "not reached" };
    verdict(
        best >= 25.0,
        format!(
            "Q={} K={} seed {}: best {best:.2} dB, final {:.2} dB after {} iterations ({:?}); hard 25 dB, soft 35 dB {soft}",
            r.topology.layers, r.topology.cells, r.seed, r.final_diagonality_db, r.iterations, r.termination
        ),
    )
}

fn rate_trends() -> Verdict {
    let scenario = mmwave();
    let gain = run_sweep(&scenario, Axis::Gain, &[0.0, 3.0, 6.0], None).unwrap();
    let bw = run_sweep(&scenario, Axis::Bandwidth, &default_bandwidth_grid(), None).unwrap();
    let se = |rows: &[simcascade_cli::sweep::SweepRow]| rows.iter().map(|r| r.sum_se).collect::<Option<Vec<f64>>>();
    let (g, b) = (se(&gain), se(&bw));
    let rising = g.as_ref().is_some_and(|v| v.windows(2).all(|w| w[1] >= w[0]));
    let falling = b.as_ref().is_some_and(|v| v.windows(2).all(|w| w[1] <= w[0]));
    let fmt = |v: &Option<Vec<f64>>| match v {
        Some(v) => v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/"),
        None => "failed point".into(),
    };
    verdict(
        rising && falling,
        format!("sum SE over gain 0/3/6 dB {} (non-decreasing: {rising}); over 8 bandwidths {} (non-increasing: {falling})", fmt(&g), fmt(&b)),
    )
}

fn malformed_touchstone(valid: &str) -> Vec<String> {
    let option = valid.lines().find(|l| l.starts_with('#')).unwrap();
    let data = valid.lines().filter(|l| !l.is_empty() && !l.starts_with(['!', '#'])).last().unwrap();
    let tokens: Vec<&str> = data.split_whitespace().collect();
    let with_token = |i: usize, t: &str| {
        let mut v = tokens.clone();
        v[i] = t;
        format!("{option}\n{}\n", v.join(" "))
    };
    vec![
        format!("{option}\n{}\n", tokens[..tokens.len() - 1].join(" ")),
        with_token(1, "abc"),
        format!("{option}\n{option}\n{data}\n"),
        format!("{}\n{data}\n", option.replace(" RI ", " MA ")),
        format!("{}\n{data}\n", option.replace(" S ", " Y ")),
        format!("{option}\n[Version] 2.0\n{data}\n"),
        format!("{data}\n{option}\n"),
        format!("{valid}\n2e10 0 0 0 0 0 0 0 0\n"),
        with_token(2, "nan"),
        format!("{option}\n"),
    ]
}

fn file_round_trips() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut identical = true;
    for n in [1, 2, 3, 5, 8] {
        let data = TouchstoneData {
            matrix: synthetic::complex_gaussian(n, n, 1.0, &mut rng),
            frequency_hz: 28e9,
            reference_impedance: 50.0,
        };
        identical &= parse_touchstone(&write_touchstone(&data).unwrap()).unwrap() == data;
    }
    for q in 1..=3 {
        let topo = SimTopology::new(q, 4, 2, 3).unwrap();
        let blocks = synthetic::random_blocks(&topo, true, &mut rng);
        identical &= load_blocks_json(&save_blocks_json(&blocks, Some(0.0107)).unwrap()).unwrap() == blocks;
    }

    let sample = TouchstoneData {
        matrix: synthetic::complex_gaussian(2, 2, 1.0, &mut rng),
        frequency_hz: 1e10,
        reference_impedance: 50.0,
    };
    let cases = malformed_touchstone(&write_touchstone(&sample).unwrap());
    let structured = cases
        .iter()
        .filter(|text| {
            matches!(panic::catch_unwind(AssertUnwindSafe(|| parse_touchstone(text))), Ok(Err(SimError::Parse { .. })))
        })
        .count();
    verdict(
        identical && structured == cases.len(),
        format!("Touchstone and JSON round trips bit-identical: {identical}; {structured}/{} malformed files rejected with a located parse error", cases.len()),
    )
}

fn main() {
    panic::set_hook(Box::new(|_| {}));
    // name, check, runtime limit in seconds
    let criteria: [(&str, fn() -> Verdict, f64); 9] = [
        ("channel equivalence", channel_equivalence, 10.0),
        ("nilpotency", nilpotency, 5.0),
        ("gradient accuracy", gradient_accuracy, 30.0),
        ("beta optimality", beta_optimality, 10.0),
        ("armijo descent", armijo_descent, 30.0),
        ("complexity scaling", complexity_scaling, 60.0),
        ("diagonalization", diagonalization, 300.0),
        ("rate trends", rate_trends, 600.0),
        ("file round trips", file_round_trips, 10.0),
    ];
    let mut failed = 0;
    for (n, (name, check, limit)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let v = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = clock.elapsed().as_secs_f64();
        let pass = v.pass && secs < *limit;
        failed += usize::from(!pass);
        println!(
            "criterion {} {name:<20} {}  {} [{secs:.1} s of {limit} s]",
            n + 1,
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
