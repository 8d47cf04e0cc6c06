use std::collections::BTreeMap;

use anyhow::{bail, Result};
use kpz::feynman_kac::{estimate_w, PathLaw};
use kpz::io::{bytes_digest, FieldHeader, FORMAT_VERSION};
use kpz::lattice::Torus;
use kpz::lattice_spde::{bump_initial, Equation, SimConfig, Simulation};
use kpz::multiscale::{fit_line, pw1_constant, pw1_divergent, pw2_check, KernelScale, Pw1Variant, ScalePartition};
use kpz::noise::{LatticeNoise, NoiseKind};
use kpz::renorm::{
    lattice_velocity, renorm_constants, v0_fixed_point, RenormTables, CONVOLUTION_ORDER, OMEGA4_POINTS, OMEGA_POINTS,
};
use kpz::scaling::{
    connected_two_point, ew_covariance_analytic, ew_covariance_scheme, fit_effective_constants, mean_drift,
    scaling_collapse, BasePair, CollapseReport, CovarianceModel, Probe, ProbePair,
};
use kpz_cluster::{
    bkar2_sum, bkar_sum, enumerate_forests, gaussian_ds_identity_check, log_derivative_coeffs, GaussianFamily, Kind,
    MayerSystem, ObjectSet, Poly, Polymer,
};
use rand::Rng;
use serde_json::json;
use toml::Table;

use crate::config::{sim_config, SchemaError, Section, REQUIRED};
use crate::run::{cell, Run};

fn config_json(table: &Table) -> serde_json::Value {
    serde_json::to_value(table).expect("TOML tables are JSON-representable")
}

// ---------------------------------------------------------------- simulate

pub fn simulate(run: &mut Run) -> Result<()> {
    run.no_replicas("simulate")?;
    let cfg = sim_config(&run.table)?;
    let steps = cfg.steps();
    let sec = Section::new(&run.table, "simulate");
    let every = sec.usize("every", (steps / 20).max(1))?;
    let initial = sec.string("initial", "flat")?;
    let amplitude = sec.f64("amplitude", 1.0)?;
    let width = sec.f64("width", 3.0)?;
    sec.finish()?;
    if every == 0 {
        bail!(SchemaError::Invalid { key: "simulate.every".into(), msg: "must be positive".into() });
    }
    let torus = Torus::new(cfg.d, cfg.l)?;
    let h0 = match initial.as_str() {
        "flat" => vec![0.0; torus.len()],
        "bump" => bump_initial(&torus, amplitude, width),
        other => bail!(SchemaError::Invalid {
            key: "simulate.initial".into(),
            msg: format!("{other:?} is not one of flat, bump")
        }),
    };
    let mut sim = Simulation::new(&cfg, &h0, &run.key("simulate"))?;
    let mut data = Vec::new();
    let mut rows = Vec::new();
    let mut snapshot = |sim: &Simulation, data: &mut Vec<f64>| {
        let h = sim.height();
        let n = h.len() as f64;
        let mean = h.iter().sum::<f64>() / n;
        let var = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        rows.push(vec![cell(sim.step()), cell(sim.time()), cell(mean), cell(var)]);
        data.extend_from_slice(&h);
    };
    snapshot(&sim, &mut data);
    while sim.step() < steps {
        let n = every.min(steps - sim.step());
        sim.run(n)?;
        snapshot(&sim, &mut data);
    }
    let mut shape = vec![rows.len()];
    shape.extend(std::iter::repeat_n(cfg.l, cfg.d));
    let header = FieldHeader {
        version: FORMAT_VERSION,
        content: "height".into(),
        shape,
        dt: every as f64 * cfg.dt,
        dx: cfg.dx,
        seed: run.seed,
        meta: json!({ "equation": cfg.equation, "lambda": cfg.lambda, "every": every, "steps": steps }),
    };
    run.write_array("trajectory.bin", &header, &data)?;
    let header: Vec<String> = ["step", "t", "mean_h", "var_h"].map(String::from).to_vec();
    run.write_csv("snapshots.csv", &header, &rows)?;
    run.write_json(
        "simulate.json",
        &json!({ "config": cfg, "steps": steps, "snapshots": rows.len(), "every": every }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- polymer

pub fn polymer(run: &mut Run) -> Result<()> {
    run.no_replicas("polymer")?;
    let cfg = sim_config(&run.table)?;
    let sec = Section::new(&run.table, "polymer");
    let mut horizons = sec.f64_list("horizons", &[cfg.t_end])?;
    let sites = sec.usize_list("sites", &[0])?;
    let paths = sec.usize("paths", 10_000)?;
    let law = match sec.string("law", "walk")?.as_str() {
        "walk" => PathLaw::LatticeWalk,
        "brownian" => PathLaw::Brownian,
        other => bail!(SchemaError::Invalid {
            key: "polymer.law".into(),
            msg: format!("{other:?} is not one of walk, brownian")
        }),
    };
    sec.finish()?;
    horizons.sort_by(f64::total_cmp);
    let torus = Torus::new(cfg.d, cfg.l)?;
    if let Some(&a) = sites.iter().find(|&&a| a >= torus.len()) {
        bail!(SchemaError::Invalid { key: "polymer.sites".into(), msg: format!("site {a} is outside the lattice") });
    }
    let nt = horizons.iter().map(|t| (t / cfg.dt).round() as usize).max().unwrap_or(0);
    let key = run.key("polymer-noise");
    let noise = LatticeNoise::new(&torus, cfg.noise, cfg.dt, cfg.dx, &key)?.field(nt, cfg.dx);
    // the solver on the same noise, for comparison in the summary
    let mut she_cfg = cfg.clone();
    she_cfg.equation = Equation::She;
    let mut she = (cfg.lambda != 0.0).then(|| Simulation::new(&she_cfg, &vec![0.0; torus.len()], &key)).transpose()?;
    let mut rows = Vec::new();
    let mut compare = Vec::new();
    for &t in &horizons {
        let steps = (t / cfg.dt).round() as usize;
        if let Some(sim) = she.as_mut() {
            sim.run(steps - sim.step())?;
        }
        for &a in &sites {
            let e = estimate_w(t, a, &noise, &cfg, None, paths, law, &run.key("polymer-paths"))?;
            rows.push(vec![cell(t), cell(a), cell(e.value), cell(e.stderr), cell(e.n_paths)]);
            if let Some(sim) = she.as_ref() {
                compare.push(json!({ "T": t, "a": a, "paths": e.value, "stderr": e.stderr, "solver": sim.state()[a] }));
            }
        }
    }
    let header: Vec<String> = ["T", "a", "value", "stderr", "n_paths"].map(String::from).to_vec();
    run.write_csv("polymer.csv", &header, &rows)?;
    run.write_json(
        "polymer.json",
        &json!({ "law": format!("{law:?}"), "paths": paths, "solver_comparison": compare }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- renorm

pub fn renorm(run: &mut Run) -> Result<()> {
    run.no_replicas("renorm")?;
    let cfg = sim_config(&run.table)?;
    let tables = RenormTables::new(cfg.d);
    let constants = renorm_constants(&cfg, &tables)?;
    let fixed = v0_fixed_point(&cfg, &tables, 1e-14)?;
    let lattice = lattice_velocity(&cfg)?;
    let record = json!({
        "constants": constants,
        "fixed_point": fixed,
        "lattice_velocity": lattice,
        "provenance": {
            "config_hash": bytes_digest(config_json(&run.table).to_string().as_bytes()),
            "order": constants.order,
            "quadrature": {
                "omega_points": OMEGA_POINTS,
                "omega4_points": OMEGA4_POINTS,
                "convolution_order": CONVOLUTION_ORDER,
            },
        },
    });
    run.write_json("renorm.json", &record)?;
    Ok(())
}

// ---------------------------------------------------------------- powercount

struct Row {
    check: String,
    j: String,
    kappa: String,
    measured: f64,
    bound: f64,
}

impl Row {
    fn pass(&self) -> bool {
        self.measured <= self.bound
    }
}

/// Rows for a family that must be uniform in `j` within a factor 2.
fn uniform_rows(check: &str, kappa: &str, values: &[(u32, f64)]) -> Vec<Row> {
    let lo = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    values
        .iter()
        .map(|&(j, v)| Row { check: check.into(), j: cell(j), kappa: kappa.into(), measured: v, bound: 2.0 * lo })
        .collect()
}

fn kappa_label(kt: usize, kx: &[usize]) -> String {
    format!("t{kt}_x{}", kx.iter().map(|k| k.to_string()).collect::<String>())
}

fn powercount_rows(nu: f64, d: usize, jmax: u32, pw2_jmax: u32, pw2_dims: &[usize]) -> Result<Vec<Row>> {
    let p = ScalePartition::build(jmax)?;
    let kernels: Vec<KernelScale> = (1..=jmax).map(|j| KernelScale::new(&p, j, nu, d)).collect();
    let mut rows = Vec::new();
    let zero = vec![0; d];
    let mut e1 = zero.clone();
    e1[0] = 1;
    let mass: Vec<(u32, f64)> = kernels.iter().zip(1..).map(|(k, j)| (j, k.report(0, &zero).mass_constant)).collect();
    rows.extend(uniform_rows("mass_constant", &kappa_label(0, &zero), &mass));
    for (kt, kx) in [(0, &zero), (0, &e1), (1, &zero)] {
        let sup: Vec<(u32, f64)> = kernels.iter().zip(1..).map(|(k, j)| (j, k.report(kt, kx).sup_constant)).collect();
        rows.extend(uniform_rows("sup_constant", &kappa_label(kt, kx), &sup));
    }
    if d == 3 {
        for (name, variant) in [("pw1_grad3", Pw1Variant::Grad3), ("pw1_timegrad", Pw1Variant::TimeGrad)] {
            let v: Vec<(u32, f64)> = (1..=jmax).map(|j| (j, pw1_constant(&p, j, nu, d, variant))).collect();
            rows.extend(uniform_rows(name, "", &v));
        }
        let ts: Vec<f64> = (0..10).map(|i| 2f64.powf(5.0 + 0.75 * i as f64)).collect();
        let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = pw1_divergent(&p, nu, d, 0, &ts).iter().map(|v| v.1.ln()).collect();
        let (slope, _, _) = fit_line(&lx, &ly);
        rows.push(Row {
            check: "pw1_divergent_exponent_deviation".into(),
            j: String::new(),
            kappa: "0".into(),
            measured: (slope - 1.0).abs(),
            bound: 0.1,
        });
        let y: Vec<f64> = pw1_divergent(&p, nu, d, 2, &ts).iter().map(|v| v.1).collect();
        let (_, _, r2) = fit_line(&lx, &y);
        rows.push(Row {
            check: "pw1_divergent_loglinear_1_minus_r2".into(),
            j: String::new(),
            kappa: "2".into(),
            measured: 1.0 - r2,
            bound: 0.01,
        });
    }
    for &dd in pw2_dims {
        for j2 in 1..=pw2_jmax {
            for j1 in 1..=j2 {
                let (_, margin) = pw2_check(dd, j1, j2)?;
                rows.push(Row {
                    check: "pw2_negative_margin".into(),
                    j: cell(j2),
                    kappa: format!("d{dd}_j1_{j1}"),
                    measured: -margin,
                    bound: 0.0,
                });
            }
        }
    }
    Ok(rows)
}

fn powercount_params(run: &Run) -> Result<(f64, usize, u32, u32, Vec<usize>)> {
    // the model keys are optional here; if any is given, all must be
    let (nu, d) = if REQUIRED.iter().any(|k| run.table.contains_key(*k)) {
        let cfg = sim_config(&run.table)?;
        (cfg.nu0, cfg.d)
    } else {
        crate::config::check_keys(&run.table)?;
        (1.0, 3)
    };
    let sec = Section::new(&run.table, "powercount");
    let jmax = sec.usize("jmax", 8)? as u32;
    let pw2_jmax = sec.usize("pw2_jmax", 12)? as u32;
    let dims = sec.usize_list("pw2_dims", &[3, 4, 5])?;
    sec.finish()?;
    Ok((nu, d, jmax, pw2_jmax, dims))
}

fn write_powercount(run: &mut Run, name: &str, rows: &[Row]) -> Result<()> {
    let header: Vec<String> = ["check", "j", "kappa", "measured", "bound", "pass"].map(String::from).to_vec();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.check.clone(), r.j.clone(), r.kappa.clone(), cell(r.measured), cell(r.bound), cell(r.pass())])
        .collect();
    run.write_csv(name, &header, &cells)
}

pub fn powercount(run: &mut Run) -> Result<()> {
    run.no_replicas("powercount")?;
    let (nu, d, jmax, pw2_jmax, dims) = powercount_params(run)?;
    let rows = powercount_rows(nu, d, jmax, pw2_jmax, &dims)?;
    write_powercount(run, "powercount.csv", &rows)?;
    let mut summary: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &rows {
        let e = summary.entry(format!("{} {}", r.check, r.kappa).trim().to_string()).or_default();
        e.0 += 1;
        e.1 += usize::from(r.pass());
    }
    for r in rows.iter().filter(|r| !r.pass()) {
        run.check(&format!("{} j={} {}", r.check, r.j, r.kappa), false);
    }
    let families: Vec<_> = summary.iter().map(|(k, (n, p))| json!({ "family": k, "rows": n, "passed": p })).collect();
    run.write_json("powercount.json", &json!({ "nu": nu, "d": d, "jmax": jmax, "families": families }))?;
    Ok(())
}

// ---------------------------------------------------------------- cluster-selftest

fn random_poly(rng: &mut impl Rng, nvars: usize, max_deg: u32, nterms: usize) -> Poly {
    let mut p = Poly::zero(nvars);
    for _ in 0..nterms {
        let mut e = vec![0u32; nvars];
        let mut budget = rng.random_range(0..=max_deg);
        while budget > 0 && nvars > 0 {
            e[rng.random_range(0..nvars)] += 1;
            budget -= 1;
        }
        p.add_term(e, rng.random_range(-2.0..2.0));
    }
    p
}

fn object_sets(max_n: usize) -> Vec<ObjectSet> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        let full: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        for mask in 0u32..1 << full.len() {
            let links: Vec<(usize, usize)> =
                full.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, &l)| l).collect();
            out.push(ObjectSet::new(n, &links).expect("valid links"));
        }
    }
    out
}

/// Coefficients of `log(Σ a_k x^k)` for `a_0 = 1`.
fn log_series(a: &[f64]) -> Vec<f64> {
    let mut l = vec![0.0; a.len()];
    for k in 1..a.len() {
        let mut s = a[k] * k as f64;
        for j in 1..k {
            s -= j as f64 * l[j] * a[k - j];
        }
        l[k] = s / k as f64;
    }
    l
}

struct SelfCheck {
    name: &'static str,
    cases: usize,
    max_error: f64,
    tol: f64,
}

pub fn cluster_selftest(run: &mut Run) -> Result<()> {
    run.no_replicas("cluster-selftest")?;
    crate::config::check_keys(&run.table)?;
    let mut rng = run.key("cluster-selftest").rng();
    let sets = object_sets(4);
    let mut checks = Vec::new();

    let (mut worst, mut cases) = (0.0f64, 0);
    for o in &sets {
        let m = o.links().len();
        for _ in 0..20 {
            let f = random_poly(&mut rng, m, 3, 6);
            worst = worst.max((bkar_sum(&f, o)? - f.eval(&vec![1.0; m])).abs());
            cases += 1;
        }
    }
    checks.push(SelfCheck { name: "bkar_value_at_one", cases, max_error: worst, tol: 1e-9 });

    let (mut worst, mut cases) = (0.0f64, 0);
    for o in &sets {
        let (n, m) = (o.n(), o.links().len());
        for mask in 0u32..(1 << n) - 1 {
            let kinds: Vec<Kind> = (0..n).map(|i| if mask & (1 << i) != 0 { Kind::Two } else { Kind::One }).collect();
            let labelled = o.clone().with_kinds(kinds)?;
            let f = random_poly(&mut rng, m, 3, 6);
            let got = bkar2_sum(&f, &labelled)?;
            worst = worst.max((got - f.eval(&vec![1.0; m])).abs());
            if mask == 0 && got.to_bits() != bkar_sum(&f, o)?.to_bits() {
                worst = f64::INFINITY;
            }
            cases += 1;
        }
    }
    checks.push(SelfCheck { name: "bkar2_value_at_one", cases, max_error: worst, tol: 1e-9 });

    // partition expansion of d^n log f against the power series of log f
    let a: Vec<f64> = (0..8).map(|k| 1.0 / (k as f64 + 1.0)).collect();
    let l = log_series(&a);
    let fact = |n: usize| (1..=n).map(|x| x as f64).product::<f64>();
    let mut worst = 0.0f64;
    for (n, ln) in l.iter().enumerate().take(7).skip(1) {
        let sum: f64 = log_derivative_coeffs(n)?
            .iter()
            .map(|(p, c)| *c as f64 * p.blocks.iter().map(|b| fact(b.len()) * a[b.len()]).product::<f64>())
            .sum();
        let exact = fact(n) * ln;
        worst = worst.max((sum - exact).abs() / exact.abs().max(1.0));
    }
    checks.push(SelfCheck { name: "log_derivative_partition_sum", cases: 6, max_error: worst, tol: 1e-9 });

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(1..=4usize);
        let m: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut c0 = vec![0.0; n * n];
        let mut c1 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                c0[i * n + j] = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum::<f64>() + f64::from(u8::from(i == j));
            }
            for j in i + 1..n {
                let v = rng.random_range(-0.3..0.3);
                c1[i * n + j] = v;
                c1[j * n + i] = v;
            }
        }
        let fam = GaussianFamily::new(n, c0, c1)?;
        let f = random_poly(&mut rng, n, 4, 8);
        worst = worst.max(gaussian_ds_identity_check(&fam, &f).max_coeff_diff);
    }
    checks.push(SelfCheck { name: "gaussian_ds_identity", cases: 20, max_error: worst, tol: 1e-10 });

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let np = rng.random_range(2..=4);
        let mut used = std::collections::BTreeSet::new();
        let polymers: Vec<Polymer> = (0..np)
            .map(|_| {
                let boxes: Vec<u64> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(0..10)).collect();
                let ext: Vec<u64> = boxes.iter().copied().filter(|b| rng.random_bool(0.3) && used.insert(*b)).collect();
                Polymer::new(boxes, ext)
            })
            .collect();
        let sys = MayerSystem::new(polymers)?;
        worst = worst.max((sys.reconstruct(None)? - sys.direct_indicator()).abs());
    }
    checks.push(SelfCheck { name: "mayer_reconstruction", cases: 50, max_error: worst, tol: 1e-9 });

    for c in &checks {
        run.check(c.name, c.max_error <= c.tol);
    }
    let report: Vec<_> = checks
        .iter()
        .map(|c| json!({ "name": c.name, "cases": c.cases, "max_error": c.max_error, "tol": c.tol, "pass": c.max_error <= c.tol }))
        .collect();
    run.write_json("selftest.json", &json!({ "checks": report }))?;
    let forests: Vec<_> = [ObjectSet::complete(3), ObjectSet::complete(4)]
        .iter()
        .map(|o| Ok(json!({ "objects": o, "forests": enumerate_forests(o)? })))
        .collect::<Result<_>>()?;
    let coeffs: Vec<_> =
        (1..=4).map(|n| Ok(json!({ "n": n, "terms": log_derivative_coeffs(n)? }))).collect::<Result<_>>()?;
    run.write_json("forests.json", &json!({ "forests": forests, "log_derivative_coefficients": coeffs }))?;
    Ok(())
}

// ---------------------------------------------------------------- scaling

fn parse_bases(sec: &Section, d: usize) -> Result<Vec<BasePair>> {
    let default: Vec<Vec<f64>> = [(2.0, 1.0, 0.0), (2.0, 1.0, 1.0), (2.0, 1.0, 2.0), (2.0, 1.5, 1.0), (2.0, 1.5, 2.0)]
        .iter()
        .map(|&(t1, t2, x)| {
            let mut v = vec![t1, t2, x];
            v.resize(2 + d, 0.0);
            v
        })
        .collect();
    let flat = sec.f64_list("bases_flat", &default.concat())?;
    if flat.len() % (2 + d) != 0 {
        bail!(SchemaError::Invalid {
            key: "scaling.bases_flat".into(),
            msg: format!("length {} is not a multiple of 2 + d = {}", flat.len(), 2 + d),
        });
    }
    Ok(flat
        .chunks(2 + d)
        .map(|c| BasePair { t1: c[0], t2: c[1], x: c[2..].iter().map(|&v| v as i64).collect() })
        .collect())
}

fn collapse_rows(cfg: &SimConfig, r: &CollapseReport) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["epsilon".to_string(), "t1".into()];
    header.extend((1..=cfg.d).map(|i| format!("x1_{i}")));
    header.push("t2".into());
    header.extend((1..=cfg.d).map(|i| format!("x2_{i}")));
    header.extend(["estimate", "stderr", "replicas"].map(String::from));
    let mut rows = Vec::new();
    for est in &r.raw {
        for (k, pp) in est.pairs.iter().enumerate() {
            let mut row = vec![cell(est.epsilon), cell(pp.p.step as f64 * cfg.dt)];
            row.extend(pp.p.x.iter().map(cell));
            row.push(cell(pp.q.step as f64 * cfg.dt));
            row.extend(pp.q.x.iter().map(cell));
            row.extend([cell(est.mean[k]), cell(est.stderr[k]), cell(est.replicas)]);
            rows.push(row);
        }
    }
    (header, rows)
}

fn predicted_constants(cfg: &SimConfig) -> Option<serde_json::Value> {
    if cfg.noise != NoiseKind::Mollified || cfg.lambda == 0.0 || cfg.d < 3 {
        return None;
    }
    let t = RenormTables::new(cfg.d);
    let c = renorm_constants(cfg, &t).ok()?;
    Some(json!({ "nu": cfg.nu0 + c.delta_nu.value, "D": cfg.d0 * c.d_eff_ratio.value }))
}

fn run_collapse(
    run: &mut Run,
    cfg: &SimConfig,
    section: &'static str,
    default_reps: usize,
) -> Result<serde_json::Value> {
    let replicas = run.replicas(section, default_reps)?;
    let sec = Section::new(&run.table, section);
    sec.usize("replicas", replicas)?;
    let eps = sec.f64_list("epsilons", &[1.0, 0.5, 0.25])?;
    let bases = parse_bases(&sec, cfg.d)?;
    let model = match sec.string("model", "scheme")?.as_str() {
        "scheme" => CovarianceModel::Scheme,
        "continuum" => CovarianceModel::Continuum,
        other => bail!(SchemaError::Invalid {
            key: format!("{section}.model"),
            msg: format!("{other:?} is not one of scheme, continuum")
        }),
    };
    sec.finish()?;
    let r = scaling_collapse(cfg, &eps, &bases, replicas, &run.key("collapse"))?;
    let (header, rows) = collapse_rows(cfg, &r);
    let name = if section == "scaling" { "scaling.csv" } else { "collapse.csv" };
    run.write_csv(name, &header, &rows)?;
    let fit = match r.raw.last().map(|e| fit_effective_constants(e, cfg, model)) {
        Some(Ok(f)) => json!(f),
        Some(Err(e)) => json!({ "error": e.to_string() }),
        None => serde_json::Value::Null,
    };
    Ok(json!({
        "epsilons": r.epsilons,
        "rescaled": r.rescaled,
        "discrepancy": r.discrepancy,
        "shrinking": r.shrinking,
        "link_exponent": r.link_exponent,
        "link_exponent_spread": r.link_exponent_spread,
        "fit_model": model,
        "fit_smallest_epsilon": fit,
        "predicted": predicted_constants(cfg),
    }))
}

pub fn scaling(run: &mut Run) -> Result<()> {
    let cfg = sim_config(&run.table)?;
    let summary = run_collapse(run, &cfg, "scaling", 400)?;
    run.write_json("scaling.json", &summary)?;
    Ok(())
}

// ---------------------------------------------------------------- report-data

fn covariance_rows(run: &mut Run, cfg: &SimConfig, replicas: usize) -> Result<()> {
    let mut ew = cfg.clone();
    ew.lambda = 0.0;
    ew.equation = Equation::Ew;
    let n = ew.steps();
    let mut xs: Vec<Vec<i64>> = Vec::new();
    for k in 0..3 {
        let mut x = vec![0; cfg.d];
        x[0] = k;
        xs.push(x);
    }
    let mut diag = vec![1; cfg.d];
    diag.truncate(cfg.d.min(3));
    diag.resize(cfg.d, 0);
    xs.push(diag);
    let mut pairs = Vec::new();
    for n2 in [n, n / 2] {
        for x in &xs {
            pairs.push(ProbePair { p: Probe::new(n, vec![0; cfg.d]), q: Probe::new(n2, x.clone()) });
        }
    }
    let est = connected_two_point(&ew, None, &pairs, 1.0, replicas, &run.key("covariance"))?;
    let mut header = vec!["t1".to_string(), "t2".into()];
    header.extend((1..=cfg.d).map(|i| format!("x_{i}")));
    header.extend(["estimate", "stderr", "lattice", "continuum", "replicas"].map(String::from));
    let mut rows = Vec::new();
    for (k, pp) in pairs.iter().enumerate() {
        let (t1, t2) = (pp.p.step as f64 * ew.dt, pp.q.step as f64 * ew.dt);
        let mut row = vec![cell(t1), cell(t2)];
        row.extend(pp.q.x.iter().map(cell));
        row.extend([
            cell(est.mean[k]),
            cell(est.stderr[k]),
            cell(ew_covariance_scheme(&ew, pp.p.step, pp.q.step, &pp.q.x)?),
            cell(ew_covariance_analytic(ew.nu0, ew.d0, t1, t2, &pp.q.x, ew.l)),
            cell(est.replicas),
        ]);
        rows.push(row);
    }
    run.write_csv("covariance.csv", &header, &rows)
}

fn drift_rows(run: &mut Run, cfg: &SimConfig, replicas: usize) -> Result<()> {
    let mut she = cfg.clone();
    she.equation = Equation::She;
    let n = she.steps();
    let steps: Vec<usize> = [n / 4, n / 2, n].into_iter().filter(|&s| s > 0).collect();
    let mut rows = Vec::new();
    for (label, v0) in [("bare", 0.0), ("lattice", lattice_velocity(&she)?)] {
        let mut c = she.clone();
        c.v0 = v0;
        for r in mean_drift(&c, None, &steps, replicas, &run.key("drift"))? {
            rows.push(vec![label.to_string(), cell(v0), cell(r.t), cell(r.mean), cell(r.stderr), cell(replicas)]);
        }
    }
    let header: Vec<String> = ["counterterm", "v0", "t", "mean_h", "stderr", "replicas"].map(String::from).to_vec();
    run.write_csv("drift.csv", &header, &rows)
}

pub fn report_data(run: &mut Run) -> Result<()> {
    let cfg = sim_config(&run.table)?;
    let cov_reps = run.replicas("report", 200)?;
    let sec = Section::new(&run.table, "report");
    sec.usize("replicas", cov_reps)?;
    let drift_reps = sec.usize("drift_replicas", 16)?;
    sec.finish()?;
    covariance_rows(run, &cfg, cov_reps)?;
    if cfg.lambda > 0.0 {
        drift_rows(run, &cfg, drift_reps)?;
    }
    let (nu, d, jmax, pw2_jmax, dims) = powercount_params(run)?;
    let rows = powercount_rows(nu, d, jmax, pw2_jmax, &dims)?;
    write_powercount(run, "powercount.csv", &rows)?;
    let collapse = run_collapse(run, &cfg, "scaling", 400)?;
    run.write_json("report.json", &json!({ "config": cfg, "collapse": collapse }))?;
    Ok(())
}
