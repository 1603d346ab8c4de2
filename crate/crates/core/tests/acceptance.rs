//! Acceptance suite. Each test prints one `PASS`/`FAIL` line (written straight
//! to stderr so it shows up without `--nocapture`) and then asserts.

use std::io::Write;
use std::path::PathBuf;

use green_mimo::channel::sample_channel;
use green_mimo::cli;
use green_mimo::config::SystemConfig;
use green_mimo::harness::{self, Metric, SweepSpec, SweepVariable};
use green_mimo::mmse::{self, SpectralSummary};
use green_mimo::modopt::{self, ModulationAllocation};
use green_mimo::oracle;
use green_mimo::queueing;
use green_mimo::simo;
use green_mimo::switching::{self, CrossoverOutcome};
use rand::Rng;

fn report(id: u32, passed: bool, detail: &str) {
    let line = format!(
        "[{}] criterion {id:>2}: {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn info(id: u32, detail: &str) {
    let _ = std::io::stderr().write_all(format!("[INFO] criterion {id:>2}: {detail}\n").as_bytes());
}

fn config(name: &str) -> SystemConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect();
    cli::load_config(&path).expect("bundled config parses")
}

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    green_mimo::channel::rng_from_seed(seed)
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn means(table: &harness::CurveTable, col: &str) -> Vec<f64> {
    table
        .means(col)
        .unwrap_or_else(|| panic!("missing column {col}"))
        .into_iter()
        .map(|m| m.unwrap_or(f64::NAN))
        .collect()
}

#[test]
fn criterion_01_haar_cross_moment() {
    let est = oracle::cross_moment(4, 1_000_000, 1).unwrap();
    let target = -1.0 / 60.0;
    let z = est.z_score(target);
    let passed = z.abs() <= 4.0;
    report(
        1,
        passed,
        &format!(
            "E[q_ij q_i'j' conj(q_i'j) conj(q_ij')] at n=4: {:.6e} +/- {:.1e}, target {:.6e}, z = {:.2} (limit 4)",
            est.mean, est.std_error, target, z
        ),
    );
    let literal = oracle::row_pair_moment(4, 100_000, 2).unwrap();
    info(
        1,
        &format!(
            "row-pair pattern E[q_ij q_ij' conj(q_i'j) conj(q_i'j')] = {:.2e} +/- {:.1e} (vanishes by phase invariance)",
            literal.mean, literal.std_error
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_02_desired_power_moment() {
    let lambda = [0.5, 1.0, 2.0, 4.0];
    let alpha = 0.5;
    let t: Vec<f64> = lambda.iter().map(|l| l / (l + alpha)).collect();
    let est = oracle::desired_power_moment(&t, 1_000_000, 3).unwrap();
    let target = oracle::desired_power_exact(&t);
    let z = est.z_score(target);
    let passed = z.abs() <= 4.0;
    report(
        2,
        passed,
        &format!(
            "E[(sum t_l |q_kl|^2)^2] at n=4: {:.6e} +/- {:.1e}, (f1+f2)/(n(n+1)) = {:.6e}, z = {:.2} (limit 4)",
            est.mean, est.std_error, target, z
        ),
    );
    assert!(passed);
}

/// A random feasible MIMO instance with K <= 4 and N_t = 2.
fn random_instance(r: &mut impl Rng, seed: u64) -> (SystemConfig, SpectralSummary, ModulationAllocation, Vec<f64>) {
    let users = r.random_range(1..=4usize);
    let cfg = SystemConfig {
        users,
        tx_antennas: 2,
        rx_antennas: r.random_range(8..=64),
        csi_error: r.random_range(0.0..0.4),
        noise_power: r.random_range(0.1..2.0),
        bits_per_use: 8,
        min_bits: 1,
        ..Default::default()
    };
    let real = sample_channel(&cfg, seed);
    let spec = SpectralSummary::new(&real.eigenvalues, cfg.regularizer(), cfg.csi_error).unwrap();
    let mut bits = Vec::new();
    for _ in 0..cfg.users {
        let b = r.random_range(1..=7u32);
        bits.extend([b, 8 - b]);
    }
    let alloc = ModulationAllocation::from_integers(&bits, cfg.users, 2, 8, 1).unwrap();
    let classes = [1e-2, 1e-3, 1e-4];
    let ser = (0..cfg.users).map(|_| classes[r.random_range(0..3)]).collect();
    (cfg, spec, alloc, ser)
}

#[test]
fn criterion_03_power_fixed_point() {
    let start = std::time::Instant::now();
    let mut r = rng(30);
    let (mut worst, mut tested, mut skipped) = (0.0f64, 0usize, 0usize);
    let mut seed = 0u64;
    while tested < 1000 {
        seed += 1;
        let (cfg, spec, alloc, ser) = random_instance(&mut r, 3000 + seed);
        match mmse::total_mimo_power(&alloc, &spec, &cfg, &ser) {
            Ok(p) => {
                let sum: f64 = p.powers.iter().sum();
                worst = worst.max((sum - p.total).abs() / p.total);
                tested += 1;
            }
            Err(e) if e.is_infeasibility() => skipped += 1,
            Err(e) => panic!("{e}"),
        }
    }
    let passed = worst <= 1e-9;
    report(
        3,
        passed,
        &format!(
            "sum p_ij = P on {tested} instances: worst relative error {worst:.2e} (limit 1e-9), {skipped} infeasible draws skipped, {:.1?}",
            start.elapsed()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_04_sinr_round_trip() {
    let mut r = rng(40);
    let (mut worst, mut tested) = (0.0f64, 0usize);
    while tested < 1000 {
        let n = r.random_range(2..=40usize);
        let lambda: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
        let spec = SpectralSummary::new(&lambda, r.random_range(0.01..2.0), r.random_range(0.0..0.5)).unwrap();
        let eta = r.random_range(0.01..20.0);
        let noise = r.random_range(0.1..2.0);
        let total = r.random_range(1.0..1e4);
        let Ok(p) = mmse::stream_power(eta, total, &spec, noise) else {
            continue;
        };
        if p > total {
            continue;
        }
        let back = mmse::sinr_per_stream(p, total, &spec, noise).unwrap();
        worst = worst.max((back - eta).abs() / eta);
        tested += 1;
    }
    let passed = worst <= 1e-9;
    report(
        4,
        passed,
        &format!("SINR(stream_power(eta)) = eta on {tested} instances: worst relative error {worst:.2e} (limit 1e-9)"),
    );
    assert!(passed);
}

#[test]
fn criterion_05_dinkelbach_vs_exhaustive() {
    let mut r = rng(50);
    let (mut worst, mut tested, mut delta_violations, mut seed) = (0.0f64, 0usize, 0usize, 0u64);
    while tested < 100 {
        seed += 1;
        let cfg = SystemConfig {
            users: 2,
            tx_antennas: 2,
            rx_antennas: r.random_range(8..=32),
            csi_error: r.random_range(0.0..0.3),
            bits_per_use: 8,
            min_bits: 1,
            heavy_fraction: [0.0, 0.5, 1.0][r.random_range(0..3)],
            ..Default::default()
        };
        let ser = cfg.per_user_ser();
        let real = sample_channel(&cfg, 5000 + seed);
        let spec = SpectralSummary::new(&real.eigenvalues, cfg.regularizer(), cfg.csi_error).unwrap();
        let opt = match modopt::optimize_allocation(&spec, &cfg, &ser, 1e-8, 100) {
            Ok(o) => o,
            Err(e) if e.is_infeasibility() => continue,
            Err(e) => panic!("{e}"),
        };
        let (_, best) = oracle::brute_force_allocation(&spec, &cfg, &ser).unwrap();
        worst = worst.max((opt.power.total - best) / best);
        if opt.trace.deltas.windows(2).any(|w| w[1] > w[0]) {
            delta_violations += 1;
        }
        tested += 1;
    }
    let passed = worst <= 5e-3 && delta_violations == 0;
    report(
        5,
        passed,
        &format!(
            "{tested} instances: worst excess over exhaustive search {:.3}% (limit 0.5%), {delta_violations} runs with increasing delta",
            100.0 * worst
        ),
    );
    assert!(passed);
}

fn tau_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
}

#[test]
fn criterion_06_optimized_power_and_heavy_users() {
    let start = std::time::Instant::now();
    let base = config("feasible.conf");
    let mut spec = SweepSpec::new(SweepVariable::Tau, tau_grid(), 1000, 6);
    spec.metrics = vec![Metric::TotalTransmitPower, Metric::EqualRateTransmitPower];
    let low = harness::run_sweep(&spec, &base.with_heavy_fraction(0.0)).unwrap();
    let high = harness::run_sweep(&spec, &base.with_heavy_fraction(1.0)).unwrap();
    let (opt0, eq0) = (means(&low, "transmit_power_opt"), means(&low, "transmit_power_equal"));
    let (opt1, eq1) = (means(&high, "transmit_power_opt"), means(&high, "transmit_power_equal"));
    let complete = [&opt0, &eq0, &opt1, &eq1].iter().all(|v| v.iter().all(|x| x.is_finite()));
    let opt_le_equal = opt0.iter().zip(&eq0).chain(opt1.iter().zip(&eq1)).all(|(o, e)| o <= e);
    let heavy_above = opt1.iter().zip(&opt0).all(|(h, l)| h > l);
    let passed = complete && opt_le_equal && heavy_above;
    report(
        6,
        passed,
        &format!(
            "tau grid {:?}, 1000 realizations: optimized <= equal-rate at every point: {opt_le_equal}; rho=1 above rho=0 at every point: {heavy_above}; rho=0 {:?} W, rho=1 {:?} W, {:.1?}",
            tau_grid(),
            opt0.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(),
            opt1.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(),
            start.elapsed()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_07_efficiency_falls_with_csi_error() {
    let cfg = config("feasible.conf").with_heavy_fraction(0.0);
    let mut spec = SweepSpec::new(SweepVariable::Tau, tau_grid(), 1000, 7);
    spec.metrics = vec![Metric::EnergyEfficiencyMimo, Metric::EnergyEfficiencySimo];
    let t = harness::run_sweep(&spec, &cfg).unwrap();
    let (m, s) = (means(&t, "ee_mimo"), means(&t, "ee_simo"));
    let complete = m.iter().chain(&s).all(|x| x.is_finite());
    let passed = complete && non_increasing(&m) && non_increasing(&s);
    report(
        7,
        passed,
        &format!(
            "rho=0, 1000 realizations: EE non-increasing in tau for MIMO {:?} and SIMO {:?} bit/J",
            m.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>(),
            s.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_08_crossover() {
    let base = config("switching.conf");
    let trials = 1000;
    let seed = 8;
    let set = harness::realization_set(&base, trials, seed);
    let p0 = switching::tune_circuit_power(&base, &set).unwrap();
    let Some(p0) = p0 else {
        report(8, false, "no circuit power puts SIMO ahead at rho=0 and MIMO ahead at rho=1");
        panic!("tuning failed");
    };
    let cfg = base.with_circuit_power(p0);
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let mut spec = SweepSpec::new(SweepVariable::Rho, grid, trials, seed);
    spec.metrics = vec![Metric::EnergyEfficiencyMimo, Metric::EnergyEfficiencySimo];
    let t = harness::run_sweep(&spec, &cfg).unwrap();
    let (m, s) = (means(&t, "ee_mimo"), means(&t, "ee_simo"));
    let ee_ok = m.iter().chain(&s).all(|x| x.is_finite()) && non_increasing(&m) && non_increasing(&s);

    let cross = switching::crossover_rho(&cfg, &set).unwrap();
    let k = cfg.users as f64;
    let circuit_m = k * cfg.tx_antennas as f64 * p0;
    let circuit_s = k * p0;
    let totals: Vec<(f64, f64, f64)> = cross
        .curve
        .iter()
        .map(|p| (p.rho, p.mimo_transmit.unwrap() + circuit_m, p.simo_transmit.unwrap() + circuit_s))
        .collect();
    let (first, last) = (totals[0], *totals.last().unwrap());
    let simo_wins_low = first.2 < first.1;
    let mimo_wins_high = last.1 < last.2;
    let (cross_ok, cross_text) = match cross.outcome {
        CrossoverOutcome::Crossing { rho, .. } => {
            // Piecewise-linear mean totals evaluated at rho*, recomputed from the curve.
            let seg = totals.windows(2).find(|w| w[0].0 <= rho && rho <= w[1].0).unwrap();
            let f = (rho - seg[0].0) / (seg[1].0 - seg[0].0);
            let m = seg[0].1 + f * (seg[1].1 - seg[0].1);
            let s = seg[0].2 + f * (seg[1].2 - seg[0].2);
            let gap = (m - s).abs() / (0.5 * (m + s));
            let nearest = totals
                .iter()
                .min_by(|a, b| (a.0 - rho).abs().total_cmp(&(b.0 - rho).abs()))
                .unwrap();
            info(
                8,
                &format!(
                    "nearest grid point rho = {:.2}: P_m = {:.4} W, P_s = {:.4} W",
                    nearest.0, nearest.1, nearest.2
                ),
            );
            (
                rho > 0.0 && rho < 1.0 && gap <= 0.01,
                format!("rho* = {rho:.4}, |P_m - P_s| = {:.2e} of total {:.4} W (limit 1e-2)", gap, 0.5 * (m + s)),
            )
        }
        CrossoverOutcome::NoCrossover { cheaper } => (false, format!("no crossover, {} cheaper", cheaper.name())),
    };
    let passed = ee_ok && simo_wins_low && mimo_wins_high && cross_ok;
    report(
        8,
        passed,
        &format!(
            "tuned P_0 = {p0:.4} W; EE non-increasing in rho: {ee_ok}; SIMO cheaper at rho=0: {simo_wins_low}; MIMO cheaper at rho=1: {mimo_wins_high}; {cross_text}"
        ),
    );

    // The heavier SER classes make payload throughput grow with rho faster than power.
    let classic = config("feasible.conf").with_circuit_power(p0);
    let mut spec = SweepSpec::new(SweepVariable::Rho, vec![0.0, 1.0], 200, seed);
    spec.metrics = vec![Metric::EnergyEfficiencyMimo];
    let c = harness::run_sweep(&spec, &classic).unwrap();
    let e = means(&c, "ee_mimo");
    info(
        8,
        &format!(
            "with SER classes 1e-4/1e-2 MIMO EE goes from {:.1} (rho=0) to {:.1} (rho=1) bit/J",
            e[0], e[1]
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_09_receiver_ordering() {
    let cfg = SystemConfig {
        rx_antennas: 32,
        ..Default::default()
    };
    let t = harness::fig2_experiment(&cfg, &harness::FIG2_POWERS, 200, 9).unwrap();
    let (w, mmse) = (means(&t, "sinr_simplified"), means(&t, "sinr_mmse"));
    let ordered = w.iter().zip(&mmse).all(|(a, b)| a.is_finite() && b >= a);
    report(
        9,
        ordered,
        &format!(
            "N_r=32, 200 realizations, P = {:?}: MMSE {:?} >= simplified {:?}",
            harness::FIG2_POWERS,
            mmse.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            w.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ),
    );
    let gaps: Vec<f64> = w.iter().zip(&mmse).map(|(a, b)| (b - a) / b).collect();
    info(
        9,
        &format!(
            "relative gap per power point {:?}",
            gaps.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>()
        ),
    );
    assert!(ordered);
}

#[test]
fn criterion_10_queue_simulation() {
    let (b, rs, l) = (12u32, 1e5, 1080u32);
    let p_s = queueing::packet_success(1e-2, l, b, 2);
    let t_p = l as f64 / (b as f64 * rs);
    let r = 0.5 * p_s / t_p;
    let stats = queueing::delay_stats(p_s, b, rs, l, 32, r).unwrap();
    let analytic = queueing::closed_form_delay(p_s, b, rs, l, r);
    let sim = queueing::simulate_mg1(p_s, t_p, r, 1_000_000, 10).unwrap();
    let rel = (sim.mean_delay - analytic).abs() / analytic;
    let chi = queueing::chi_square_geometric(&sim.attempts, p_s, 0.01).unwrap();
    let passed = (stats.intensity - 0.5).abs() < 1e-12 && rel <= 0.02 && chi.passed;
    report(
        10,
        passed,
        &format!(
            "load {:.3}: closed-form delay {:.6e} s vs simulated {:.6e} s over 1e6 packets ({:.2}% , limit 2%); chi-square {:.1} <= {:.1} on {} dof at 1%",
            stats.intensity,
            analytic,
            sim.mean_delay,
            100.0 * rel,
            chi.statistic,
            chi.critical,
            chi.dof
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_11_frobenius_exceeds_selected_gain() {
    let cfg = SystemConfig::default();
    let (mut checked, mut violations) = (0usize, 0usize);
    for seed in 0..1000 {
        let real = sample_channel(&cfg, 11_000 + seed);
        let sel = simo::select_antennas(&real, &cfg).unwrap();
        for i in 0..cfg.users {
            checked += 1;
            if !(real.user_block(&real.estimated, i).norm_squared() > sel.gain[i]) {
                violations += 1;
            }
        }
    }
    let passed = violations == 0;
    report(
        11,
        passed,
        &format!("||H_i||_F^2 > g_SIMO for N_t=2 on {checked} user blocks: {violations} violations"),
    );
    assert!(passed);
}

#[test]
fn criterion_12_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("feasible.conf");
    let mut identical = true;
    let run_twice = |name: &str, make: &dyn Fn() -> harness::CurveTable| -> bool {
        let a = dir.path().join(format!("{name}_a.csv"));
        let b = dir.path().join(format!("{name}_b.csv"));
        cli::emit_csv(&make(), &a).unwrap();
        cli::emit_csv(&make(), &b).unwrap();
        std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap()
            && std::fs::read(cli::sidecar_path(&a)).unwrap() == std::fs::read(cli::sidecar_path(&b)).unwrap()
    };
    let tau = SweepSpec::new(SweepVariable::Tau, tau_grid(), 50, 12);
    identical &= run_twice("tau", &|| harness::run_sweep(&tau, &cfg).unwrap());
    let mut rho = SweepSpec::new(SweepVariable::Rho, vec![0.0, 0.5, 1.0], 50, 12);
    rho.metrics = Metric::ALL.to_vec();
    identical &= run_twice("rho", &|| harness::run_sweep(&rho, &cfg).unwrap());
    identical &= run_twice("fig2", &|| {
        harness::fig2_experiment(&cfg.with_csi_error(0.1), &[1.0, 100.0], 200, 12).unwrap()
    });
    identical &= run_twice("crossover", &|| harness::crossover_experiment(&cfg, 50, 12).unwrap().0);

    // Same check through the binary, which also stamps a timestamp into the sidecar only.
    let bin = env!("CARGO_BIN_EXE_green-mimo");
    let conf: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", "feasible.conf"].iter().collect();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("bin_{k}.csv"));
        let status = std::process::Command::new(bin)
            .args(["sweep-rho", "--trials", "20", "--seed", "99", "--config"])
            .arg(&conf)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success());
        outputs.push(std::fs::read(&out).unwrap());
    }
    identical &= outputs[0] == outputs[1];
    report(
        12,
        identical,
        "repeated sweeps over tau and rho, the receiver comparison, the crossover table and a CLI sweep produce byte-identical CSV",
    );
    assert!(identical);
}
