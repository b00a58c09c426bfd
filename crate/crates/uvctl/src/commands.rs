//! The five subcommands.

use serde_json::json;
use std::f64::consts::PI;
use std::path::Path;
use uvctl_core::dynamics::{integrate, FnSignal, Plant, VehicleState};
use uvctl_core::hydro::HydroMatrices;
use uvctl_core::linalg::V12;
use uvctl_core::return_ctrl::*;
use uvctl_core::steering::{self, SteeringProblem};

use crate::model::{build, build_with};
use crate::output::*;
use crate::scenario::{Hull, Scenario, Source};
use crate::CliError;

fn chart(h: &[f64; 3], q: &[f64; 3], l: &[f64; 3], r: &[f64; 3]) -> V12 {
    let mut x = V12::zeros();
    for k in 0..3 {
        x[k] = h[k];
        x[3 + k] = q[k];
        x[6 + k] = l[k];
        x[9 + k] = r[k];
    }
    x
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn save_scenario(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let path = out.join("scenario.toml");
    std::fs::write(&path, sc.to_toml()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn matrices(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let hm = build(sc)?;
    let d = &hm.diagnostics;
    let doc = json!({
        "ports": hm.port_names,
        "parities": hm.parities,
        "lambda_scale": hm.lambda_scale,
        "diagnostics": { "dual_residual": d.dual_residual, "asymmetry": d.asymmetry, "port_mean": d.port_mean },
        "blocks": blocks_json(&hm.blocks()),
    });
    write_json(&out.join("matrices.json"), &doc)?;
    save_scenario(sc, out)?;
    println!("{} ports, m0 = {}, M = diag({}, {}, {})", hm.ports(), num(hm.m0), num(hm.m[(0, 0)]), num(hm.m[(1, 1)]), num(hm.m[(2, 2)]));
    println!("wrote {}", out.join("matrices.json").display());
    Ok(())
}

fn control_signal(sc: &Scenario, ports: usize) -> Result<FnSignal, CliError> {
    for (k, s) in sc.run.control.iter().enumerate() {
        if s.channel > ports {
            return Err(CliError::Config(format!("run.control[{k}].channel: {} exceeds the {ports} ports", s.channel)));
        }
    }
    let channels = (1..=ports)
        .map(|c| {
            let terms: Vec<(f64, f64, f64)> =
                sc.run.control.iter().filter(|s| s.channel == c).map(|s| (s.amplitude, s.frequency, s.phase)).collect();
            Box::new(move |t: f64| {
                terms.iter().fold((0.0, 0.0), |(w, dw), (a, f, p)| (w + a * (f * t + p).sin(), dw + a * f * (f * t + p).cos()))
            }) as Box<dyn Fn(f64) -> (f64, f64)>
        })
        .collect();
    Ok(FnSignal::new(channels))
}

pub fn simulate(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let hm = build(sc)?;
    let plant = Plant::new(&hm)?;
    let r = &sc.run;
    let s0 = VehicleState::from_chart(&chart(&r.h0, &r.q0, &r.l0, &r.r0)).map_err(|e| CliError::Config(format!("run.q0: {e}")))?;
    let sig = control_signal(sc, hm.ports())?;
    let tr = integrate(&plant, &s0, &sig, r.horizon, r.dt, r.sample_dt())?;
    let path = out.join("trajectory.csv");
    write_trajectory(&path, &tr, hm.ports())?;
    save_scenario(sc, out)?;
    let last = tr.last().expect("trajectory has samples");
    println!("integrated to t = {} in {} samples", num(*tr.times.last().unwrap()), tr.times.len());
    println!("final h = ({}, {}, {})", num(last.h.x), num(last.h.y), num(last.h.z));
    println!("wrote {}", path.display());
    Ok(())
}

fn print_report(r: &RankReport) {
    let mut line = format!("{}: {} (rank {}/{}, {}x{})", r.condition, verdict(r.verdict), r.rank, r.target, r.dims.0, r.dims.1);
    if r.marginal {
        line.push_str(" marginal");
    }
    println!("{line}");
}

fn return_method_reports(sc: &Scenario, hm: &HydroMatrices, reports: &mut Vec<RankReport>, closed: &mut Vec<ClosedFormCheck>) -> Result<(), CliError> {
    let tc = toy_coefficients(hm)?;
    let lp = reference_loop(&tc, sc.run.horizon, sc.steer.lambda)?;
    let ls = linearize(hm, &lp)?;
    let seq = m_sequence(&ls, TAYLOR_ORDER)?;
    reports.push(cond1_check(&ls, &seq)?);
    if let Ok((a, b)) = corollary1_check(&ls) {
        reports.extend([a, b]);
    }
    if let Ok(c2) = corollary2_check(&ls) {
        reports.extend([c2.nominal.0, c2.nominal.1, c2.recomputed.0, c2.recomputed.1]);
    }
    if tc.special {
        closed.extend(closed_form_checks(&ls, &seq)?);
    }
    Ok(())
}

pub fn rank_check(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let hm = build(sc)?;
    let m = hm.ports();
    let target = m.min(6);
    let mut reports = vec![uvctl_core::return_ctrl::rank_check(&format!("rank(C)={target}"), &[hm.c.clone()], target)?];
    let p4 = rest_rank_check(&hm.c, &hm.jscript)?;
    reports.push(p4.kalman);
    let mut notes = Vec::new();
    let mut closed = Vec::new();
    match return_method_reports(sc, &hm, &mut reports, &mut closed) {
        Ok(()) => {}
        Err(CliError::Config(e)) => notes.push(format!("return-method checks skipped: {e}")),
        Err(e) => return Err(e),
    }
    if m == 3 {
        match www_check(&hm) {
            Ok(w) => reports.extend([w.www1, w.www2_nominal, w.www2_recomputed, w.kalman]),
            Err(e) => notes.push(format!("reduced three-port checks skipped: {e}")),
        }
    }
    for r in &reports {
        print_report(r);
    }
    for c in &closed {
        let kind = if c.nominal { "nominal" } else { "recomputed" };
        println!("{} ({kind}): {} (relative error {:.3e})", c.name, verdict(c.relative_error <= 1e-8), c.relative_error);
    }
    for n in &notes {
        println!("{n}");
    }
    let doc = json!({
        "reports": reports.iter().map(rank_json).collect::<Vec<_>>(),
        "closed_forms": closed.iter().map(|c| json!({ "name": c.name, "nominal": c.nominal, "relative_error": c.relative_error })).collect::<Vec<_>>(),
        "notes": notes,
    });
    write_json(&out.join("rank_report.json"), &doc)?;
    save_scenario(sc, out)
}

pub fn steer(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let hm = build(sc)?;
    let st = &sc.steer;
    let mut problem = SteeringProblem::new(
        chart(&st.start_h, &st.start_q, &st.start_l, &st.start_r),
        chart(&st.target_h, &st.target_q, &st.target_l, &st.target_r),
        sc.run.horizon,
    );
    problem.lambda = st.lambda;
    problem.eta = st.eta;
    problem.steps = st.steps;
    problem.basis_size = st.basis;
    let res = steering::steer(&hm, &problem, sc.run.sample_dt())?;

    write_trajectory(&out.join("trajectory.csv"), &res.trajectory, hm.ports())?;
    let path = out.join("convergence.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = vec![vec!["iteration".to_string(), "terminal_error".to_string()]];
    rows.extend(res.log.iter().map(|(k, e)| vec![k.to_string(), num(*e)]));
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let doc = json!({
        "newton_steps": res.newton_steps,
        "terminal_error": res.terminal_error,
        "lambda": res.lambda,
        "cond1": rank_json(&res.cond1),
        "max_control": res.control_bound.0,
        "max_control_rate": res.control_bound.1,
        "coefficients": matrix_json(&res.control.f.coeffs),
    });
    write_json(&out.join("steer.json"), &doc)?;
    save_scenario(sc, out)?;
    for (k, e) in &res.log {
        println!("iteration {k}: terminal error {e:.3e}");
    }
    println!("converged in {} Newton steps, terminal error {:.3e}, loop amplitude {}", res.newton_steps, res.terminal_error, res.lambda);
    Ok(())
}

pub fn bem_verify(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let axes = match &sc.hull {
        Hull::Ellipsoid { axes } => *axes,
        Hull::Revolution { .. } => return Err(CliError::Config("hull.kind: bem-verify needs an ellipsoid hull".into())),
    };
    let exact = build_with(sc, Some(Source::Analytic))?;
    let bem = build_with(sc, Some(Source::Bem))?;
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    if axes[0] == axes[1] && axes[1] == axes[2] {
        let a = axes[0];
        rows.push(("M11 closed form".into(), 2.0 * PI / 3.0 * a * a * a, bem.m[(0, 0)]));
    }
    let scale = exact.m.amax().max(exact.j.amax());
    for (name, x, y) in [("M", &exact.m, &bem.m), ("J", &exact.j, &bem.j), ("N", &exact.n, &bem.n)] {
        for i in 0..3 {
            for j in 0..3 {
                if x[(i, j)].abs() > 1e-8 * scale {
                    rows.push((format!("{name}{}{}", i + 1, j + 1), x[(i, j)], y[(i, j)]));
                }
            }
        }
    }
    let path = out.join("bem_verify.csv");
    let err = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record(["quantity", "analytic", "bem", "relative_error"]).map_err(err)?;
    println!("{:<16} {:>24} {:>24} {:>10}", "quantity", "analytic", "bem", "rel.err");
    for (name, a, b) in &rows {
        let rel = (b - a).abs() / a.abs().max(f64::MIN_POSITIVE);
        w.write_record([name.clone(), num(*a), num(*b), num(rel)]).map_err(err)?;
        println!("{name:<16} {:>24} {:>24} {:>9.3}%", num(*a), num(*b), 100.0 * rel);
    }
    w.flush().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    save_scenario(sc, out)?;
    Ok(())
}
