//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::Command;
use std::time::Instant;

use sloppy_cli::check::{default_cases, dense_vs_freefermion, fd_consistency};
use sloppy_cli::config::RunConfig;
use sloppy_cli::records::SweepTable;
use sloppy_cli::runner::{run_orbits, run_sweep};
use sloppy_core::equilibrium::StateSpec;
use sloppy_core::fim::{analyze, high_temperature_fim, kl_divergence, outcome_probabilities, KernelOptions};
use sloppy_core::freefermion::{chain_fim, ChainObservable, ChainSpec, DerivativeMode};
use sloppy_core::models::{hubbard_2d, random_tfim, tfim_1d, tfim_2d, Boundary, ModelBundle};
use sloppy_core::operators::decompose_observable;
use sloppy_core::rng::GaussianStream;
use sloppy_core::symmetry::{check_eigenvector_structure, term_orbits};

type Outcome = Result<String, String>;

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn sweep(json: &str) -> Result<SweepTable, String> {
    let cfg = RunConfig::from_json(json).map_err(|e| e.to_string())?;
    run_sweep(&cfg, workers()).map_err(|e| e.to_string())
}

fn chain_sweep(boundary: &str, observable: &str, state: &str) -> Result<SweepTable, String> {
    sweep(&format!(
        r#"{{"model": {{"name": "tfim_1d", "n": 10, "B0": 0.5, "J0": 1, "boundary": "{boundary}"}},
            "observable": {observable}, "state": {state}, "sweep": {{"parameter": "B0"}}}}"#
    ))
}

/// Every grid point must succeed and satisfy `ok(rank)`.
fn ranks(t: &SweepTable, what: &str, ok: impl Fn(usize) -> bool) -> Result<String, String> {
    for r in &t.records {
        match (r.rank, &r.error) {
            (_, Some(e)) => return Err(format!("{what}: B0={} failed: {e}", r.grid)),
            (Some(k), None) if ok(k) => {}
            (k, None) => return Err(format!("{what}: B0={} has rank {k:?}", r.grid)),
        }
    }
    Ok(format!("{what} ok at {} points", t.records.len()))
}

struct Fig1 {
    beta10: Option<SweepTable>,
}

fn criterion_1(fig1: &mut Fig1) -> Outcome {
    let sz = r#"{"name": "S_z"}"#;
    let cz = r#"{"name": "C_z", "i": 2, "j": 6}"#;
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let mut note = |r: Result<String, String>| match r {
        Ok(s) => notes.push(s),
        Err(s) => failures.push(s),
    };
    note(chain_sweep("periodic", sz, "1").and_then(|t| ranks(&t, "per S_z beta=1 rank 2", |k| k == 2)));
    match chain_sweep("periodic", sz, "10") {
        Ok(t) => {
            note(ranks(&t, "per S_z beta=10 rank 2", |k| k == 2));
            fig1.beta10 = Some(t);
        }
        Err(e) => note(Err(e)),
    }
    note(chain_sweep("periodic", cz, "\"ground\"").and_then(|t| ranks(&t, "per C_z(2,6) ground rank 1", |k| k == 1)));
    note(chain_sweep("periodic", cz, "1").and_then(|t| ranks(&t, "per C_z(2,6) beta=1 rank 1", |k| k == 1)));
    note(chain_sweep("open", sz, "10").and_then(|t| ranks(&t, "open S_z beta=10 rank <= 10", |k| k <= 10)));
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_2() -> Outcome {
    let cases = [
        (r#"{"name": "tfim_2d", "rows": 3, "cols": 3, "B0": 0.5, "J0": 1}"#, r#"{"name": "S_z"}"#, 5),
        (
            r#"{"name": "hubbard_2d", "rows": 2, "cols": 3, "t0": 1, "U0": 4, "n_up": 3, "n_down": 3, "boundary": "periodic"}"#,
            r#"{"name": "D"}"#,
            3,
        ),
        (r#"{"name": "heisenberg_j1j2", "rows": 3, "cols": 3, "J0": 1, "K0": 0.5}"#, r#"{"name": "M_s"}"#, 4),
        (r#"{"name": "tfim_1d", "n": 10, "B0": 0.5, "J0": 1, "boundary": "periodic"}"#, r#"{"name": "S_z"}"#, 2),
    ];
    let mut seen = Vec::new();
    let mut ok = true;
    for (model, obs, want) in cases {
        let cfg = RunConfig::from_json(&format!(r#"{{"model": {model}, "observable": {obs}, "state": 1}}"#))
            .map_err(|e| e.to_string())?;
        let r = run_orbits(&cfg).map_err(|e| e.to_string())?;
        ok &= r.orbit_bound == want;
        seen.push(format!("{} {}/{want}", r.model, r.orbit_bound));
    }
    let text = seen.join(", ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_3() -> Outcome {
    let cases = default_cases(17).map_err(|e| e.to_string())?;
    let s = fd_consistency(&cases, &KernelOptions::default());
    let text = format!("{}/{} model-state pairs within 1e-6 rel + 1e-10 abs", s.passed, s.total());
    if s.ok() {
        Ok(text)
    } else {
        Err(format!("{text}: {}", s.failures.join("; ")))
    }
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn criterion_4() -> Outcome {
    let state = StateSpec::Thermal { beta: 1.0 };
    let eps = [1e-2, 5e-3, 2.5e-3];
    let mut stream = GaussianStream::new(4);
    let mut worst = f64::INFINITY;
    for b0 in [0.3, 0.5, 1.0] {
        let b = tfim_1d(6, b0, 1.0, Boundary::Periodic).map_err(|e| e.to_string())?;
        let dec = decompose_observable(&b.observables[0].operator).map_err(|e| e.to_string())?;
        let pa = analyze(&b.hamiltonian, &dec, state, &KernelOptions::default()).map_err(|e| e.to_string())?;
        let f = pa.fim.fim();
        let nominal = b.hamiltonian.nominal().to_vec();
        let k = nominal.len();
        for _ in 0..20 {
            let u = stream.normals(k);
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let u: Vec<f64> = u.iter().map(|x| x / norm).collect();
            let quad: f64 = (0..k).map(|i| (0..k).map(|j| u[i] * f[(i, j)] * u[j]).sum::<f64>()).sum();
            let mut ys = Vec::new();
            for &e in &eps {
                let lambda: Vec<f64> = nominal.iter().zip(&u).map(|(l, x)| l + e * x).collect();
                let q = outcome_probabilities(&b.hamiltonian, &lambda, &dec, state).map_err(|e| e.to_string())?;
                let d = kl_divergence(&pa.distribution, &q).map_err(|e| e.to_string())?;
                ys.push((d - 0.5 * e * e * quad).abs().ln());
            }
            let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
            worst = worst.min(fit_slope(&xs, &ys));
        }
    }
    let text = format!("minimum log-log slope {worst:.3} over 60 directions");
    if worst >= 2.7 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_5() -> Outcome {
    let b = tfim_1d(6, 0.5, 1.0, Boundary::Periodic).map_err(|e| e.to_string())?;
    let dec = decompose_observable(&b.observables[0].operator).map_err(|e| e.to_string())?;
    let lead = high_temperature_fim(&b.hamiltonian, &dec).map_err(|e| e.to_string())?;
    let lead_norm = lead.norm_l2();
    let mut errs = Vec::new();
    for beta in [1e-1, 1e-2, 1e-3] {
        let pa = analyze(&b.hamiltonian, &dec, StateSpec::Thermal { beta }, &KernelOptions::default())
            .map_err(|e| e.to_string())?;
        let diff = pa.fim.fim() * (1.0 / (beta * beta)) - &lead;
        errs.push(diff.norm_l2() / lead_norm);
    }
    let text = format!("relative error {:.3e}, {:.3e}, {:.3e} at beta 1e-1, 1e-2, 1e-3", errs[0], errs[1], errs[2]);
    if errs[2] < 1e-3 && errs[0] > errs[1] && errs[1] > errs[2] {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_6() -> Outcome {
    let s = dense_vs_freefermion(&[(8, 0.3, 1.0), (8, 0.7, 1.0)]);
    let text = format!("{}/{} cases: distributions within 1e-8, zeta_1 within 1e-4", s.passed, s.total());
    if s.ok() {
        Ok(text)
    } else {
        Err(format!("{text}: {}", s.failures.join("; ")))
    }
}

fn orbit_spread(bundle: &ModelBundle, state: StateSpec) -> sloppy_core::Result<(usize, f64)> {
    let obs = &bundle.observables[0];
    let group = bundle.stabilizer_of(obs)?;
    let orbits = term_orbits(&bundle.hamiltonian, &group)?;
    let dec = decompose_observable(&obs.operator)?;
    let pa = analyze(&bundle.hamiltonian, &dec, state, &KernelOptions::default())?;
    let dominant = pa.fim.dominant_count();
    let spread = check_eigenvector_structure(&pa.fim, &orbits)
        .iter()
        .take(dominant)
        .map(|v| v.max_spread)
        .fold(0.0, f64::max);
    Ok((dominant, spread))
}

fn criterion_7() -> Outcome {
    let state = StateSpec::Thermal { beta: 10.0 };
    let bundles = [
        tfim_1d(10, 0.5, 1.0, Boundary::Periodic),
        tfim_2d(3, 3, 0.5, 1.0),
        hubbard_2d(2, 3, 1.0, 4.0, 3, 3, Boundary::Periodic),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for b in bundles {
        let b = b.map_err(|e| e.to_string())?;
        let (dominant, spread) = orbit_spread(&b, state).map_err(|e| e.to_string())?;
        ok &= spread < 1e-6;
        parts.push(format!("{} {dominant} vectors spread {spread:.1e}", b.name));
    }
    let text = parts.join(", ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_8(fig1: &Fig1) -> Outcome {
    let t = fig1.beta10.as_ref().ok_or("beta=10 sweep unavailable")?;
    let (b, ratio) = t
        .records
        .iter()
        .filter(|r| r.error.is_none() && r.zeta[0] > 0.0)
        .map(|r| (r.grid, r.zeta[1] / r.zeta[0]))
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let text = format!("zeta_2/zeta_1 peaks at B0={b:.4} (ratio {ratio:.3e})");
    if (0.4..=0.6).contains(&b) {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_9() -> Outcome {
    let thermal = StateSpec::Thermal { beta: 1.0 };
    let leading = |n: usize, boundary: Boundary| -> Result<(f64, f64), String> {
        let c = ChainSpec::uniform(n, 0.45, 1.0, boundary, thermal).map_err(|e| e.to_string())?;
        let f = chain_fim(&c, ChainObservable::Magnetization, DerivativeMode::FiniteDifference).map_err(|e| e.to_string())?;
        Ok((f.fim.eigenvalues()[0], f.fim.eigenvalues()[1]))
    };
    let b = tfim_1d(10, 0.45, 1.0, Boundary::Open).map_err(|e| e.to_string())?;
    let dec = decompose_observable(&b.observables[0].operator).map_err(|e| e.to_string())?;
    let d = analyze(&b.hamiltonian, &dec, thermal, &KernelOptions::default()).map_err(|e| e.to_string())?;
    let threshold = d.fim.eigenvalues()[0] / d.fim.eigenvalues()[1] / 10.0;
    let mut ok = true;
    let mut parts = vec![format!("threshold {threshold:.3e}")];
    for n in [10, 20, 30, 40] {
        let (z1, z2) = leading(n, Boundary::Open)?;
        ok &= z1 / z2 > threshold;
        parts.push(format!("n={n} {:.3e}", z1 / z2));
    }
    let (open, _) = leading(60, Boundary::Open)?;
    let (per, _) = leading(60, Boundary::Periodic)?;
    let gap = (open - per).abs() / per;
    ok &= gap <= 0.05;
    parts.push(format!("n=60 zeta_1 open {open:.5} periodic {per:.5}"));
    let text = parts.join(", ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_10() -> Outcome {
    let dir = std::env::temp_dir().join(format!("sloppy-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let cfg = dir.join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"name": "random_tfim", "n": 6, "B0": 0.5, "J0": 1, "sigma": 0.2, "seed": 3},
            "observable": {"name": "S_z"}, "state": 2,
            "sweep": {"parameter": "B0", "grid": {"start": 0.1, "stop": 1.2, "points": 16}}}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for format in ["csv", "json"] {
        for w in ["1", "8"] {
            let out = Command::new(env!("CARGO_BIN_EXE_sloppy"))
                .args(["sweep", "--config"])
                .arg(&cfg)
                .args(["--workers", w, "--format", format])
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("sweep exited with {}", out.status));
            }
            outputs.push(out.stdout);
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    let same_bytes = outputs[0] == outputs[1] && outputs[2] == outputs[3];
    let a = random_tfim(8, 0.5, 1.0, 0.3, 99).map_err(|e| e.to_string())?;
    let b = random_tfim(8, 0.5, 1.0, 0.3, 99).map_err(|e| e.to_string())?;
    let bits = |m: &ModelBundle| m.hamiltonian.nominal().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let same_seed = bits(&a) == bits(&b);
    let text = format!(
        "1 vs 8 workers {} (csv {} bytes, json {} bytes); equal seeds {}",
        if same_bytes { "identical" } else { "differ" },
        outputs[0].len(),
        outputs[2].len(),
        if same_seed { "identical" } else { "differ" }
    );
    if same_bytes && same_seed {
        Ok(text)
    } else {
        Err(text)
    }
}

fn report(id: usize, name: &str, run: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let r = run();
    let secs = t.elapsed().as_secs_f64();
    let (tag, text, ok) = match r {
        Ok(s) => ("PASS", s, true),
        Err(s) => ("FAIL", s, false),
    };
    println!("[{tag}] {id:>2} {name}: {text} ({secs:.1} s)");
    ok
}

fn main() {
    let mut fig1 = Fig1 { beta10: None };
    let results = [
        report(1, "rank reproduction", || criterion_1(&mut fig1)),
        report(2, "orbit counts", criterion_2),
        report(3, "derivative oracle", criterion_3),
        report(4, "KL second-order law", criterion_4),
        report(5, "high-temperature law", criterion_5),
        report(6, "free-fermion equivalence", criterion_6),
        report(7, "eigenvector orbit structure", criterion_7),
        report(8, "critical-point signature", || criterion_8(&fig1)),
        report(9, "large-n sloppiness", criterion_9),
        report(10, "determinism", criterion_10),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
