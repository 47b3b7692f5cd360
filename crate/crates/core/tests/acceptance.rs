//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use hybrid_fsi::output::SeriesRow;
use hybrid_fsi::problem::Mode;
use hybrid_fsi::run::{run, RunOptions, RunReport};
use hybrid_fsi::scenario::{builtin_scenario, ScenarioConfig};
use hybrid_fsi::verify::{self, Suite, SLIVER_FRACTIONS};

struct Verdict {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(name: &'static str, passed: bool, detail: String) -> Verdict {
    Verdict {
        name,
        passed,
        detail,
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn run_scenario(cfg: &ScenarioConfig) -> hybrid_fsi::Result<RunReport> {
    let dir = tempfile::tempdir()?;
    run(cfg, dir.path(), &RunOptions::default())
}

fn geometry() -> Verdict {
    let name = "geometry kernel: 1000 random cutters on 20x20";
    let (sweep, took) = timed(|| verify::area_sweep(1000, 20, 7));
    match sweep {
        Ok(s) => verdict(
            name,
            s.failures == 0 && s.max_area_error < 1e-10 && took.as_secs_f64() < 60.0,
            format!(
                "failures {}, max area error {:e}, {:.1} s",
                s.failures,
                s.max_area_error,
                took.as_secs_f64()
            ),
        ),
        Err(e) => verdict(name, false, e.to_string()),
    }
}

fn manufactured() -> Verdict {
    let name = "single-mesh fluid: manufactured solution on 4 levels";
    let (study, took) = timed(|| verify::mms_study(&[8, 16, 32, 64]));
    match study {
        Ok((u, p)) => verdict(
            name,
            u.min_rate() >= 1.8 && p.min_rate() >= 0.9 && took.as_secs_f64() < 300.0,
            format!(
                "velocity rates {:.3?}, pressure rates {:.3?}, {:.1} s",
                u.rates(),
                p.rates(),
                took.as_secs_f64()
            ),
        ),
        Err(e) => verdict(name, false, e.to_string()),
    }
}

fn conditioning() -> Verdict {
    let name = "cut background: ghost-penalty conditioning sweep";
    let spread = |v: &[f64]| {
        v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (res, took) = timed(|| {
        Ok::<_, hybrid_fsi::FsiError>((
            verify::gp_conditioning(true, &SLIVER_FRACTIONS)?,
            verify::gp_conditioning(false, &SLIVER_FRACTIONS)?,
        ))
    });
    match res {
        Ok((on, off)) => {
            let (a, b) = (spread(&on), spread(&off));
            verdict(
                name,
                a < 1e3 && b > 1e3 && took.as_secs_f64() < 180.0,
                format!(
                    "slivers down to {:e}: spread {a:.3e} with ghost penalty, {b:.3e} without, {:.1} s",
                    SLIVER_FRACTIONS[SLIVER_FRACTIONS.len() - 1],
                    took.as_secs_f64()
                ),
            )
        }
        Err(e) => verdict(name, false, e.to_string()),
    }
}

fn couette() -> Verdict {
    let name = "fluid-fluid coupling: Couette channel with embedded patch";
    match verify::couette_with_patch() {
        Ok(c) => verdict(
            name,
            c.samples == 100 && c.max_difference < 1e-8 && c.jump < 1e-8,
            format!(
                "{} samples, max difference {:e}, interface jump {:e}",
                c.samples, c.max_difference, c.jump
            ),
        ),
        Err(e) => verdict(name, false, e.to_string()),
    }
}

fn weak_noslip() -> Verdict {
    let name = "fluid-solid coupling: weak no-slip convergence";
    match verify::weak_noslip_study(&[1, 2, 4]) {
        Ok(s) => verdict(
            name,
            s.min_rate() >= 1.4,
            format!(
                "jumps {}, rates {:.3?}",
                s.errors
                    .iter()
                    .map(|e| format!("{e:.3e}"))
                    .collect::<Vec<_>>()
                    .join(" "),
                s.rates()
            ),
        ),
        Err(e) => verdict(name, false, e.to_string()),
    }
}

fn oscillator() -> Verdict {
    let name = "solid time integration: Generalized-alpha oscillator";
    match verify::oscillator_check() {
        Ok(o) => {
            let g = o.galpha;
            let exact = g.alpha_f == 0.5 && g.alpha_m == 0.5 && g.beta == 0.25;
            verdict(
                name,
                o.drift < 1e-3 && exact,
                format!(
                    "energy drift {:e}; alpha_f {}, alpha_m {}, beta {}",
                    o.drift, g.alpha_f, g.alpha_m, g.beta
                ),
            )
        }
        Err(e) => verdict(name, false, e.to_string()),
    }
}

fn jacobian() -> Verdict {
    let name = "coupled Jacobian: finite differences on a hybrid fixture";
    match verify::jacobian_check(Mode::Hybrid) {
        Ok((n, err)) => verdict(
            name,
            n <= 300 && err < 1e-4,
            format!("{n} unknowns, relative mismatch {err:e}"),
        ),
        Err(e) => verdict(name, false, e.to_string()),
    }
}

/// Prescribed wall speed of the cylinder at time `t`.
fn cylinder_speed(cfg: &ScenarioConfig, t: f64) -> f64 {
    cfg.solid_bc
        .iter()
        .map(|bc| bc.law.derivative(t).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn cylinder(report: hybrid_fsi::Result<RunReport>, cfg: &ScenarioConfig) -> Verdict {
    let name = "end to end: moving_cylinder:desk";
    let r = match report {
        Ok(r) => r,
        Err(e) => return verdict(name, false, e.to_string()),
    };
    let max_cycles = r.series.iter().map(|s| s.cycles).max().unwrap_or(0);
    let completed = r.manifest.status == "completed";
    let Some((_, cut)) = r.line_cuts.iter().find(|(_, c)| (c.t - 0.5).abs() < 1e-9) else {
        return verdict(name, false, "no line cut at t = 0.5".into());
    };
    let speed = cylinder_speed(cfg, cut.t);
    let jump = cut.max_interface_jump();
    let crossings = cut.crossings.iter().filter(|c| c.jump.is_some()).count();
    verdict(
        name,
        completed && max_cycles <= 3 && crossings > 0 && jump < 0.02 * speed,
        format!(
            "{} after {} steps, max cycles {max_cycles}; at t = 0.5 max jump {jump:.3e} over {crossings} crossings ({:.2}% of wall speed {speed:.4})",
            r.manifest.status,
            r.manifest.steps,
            100.0 * jump / speed
        ),
    )
}

fn cross_validation(
    hybrid: hybrid_fsi::Result<RunReport>,
    fixed: hybrid_fsi::Result<RunReport>,
    fixed_n: usize,
) -> Verdict {
    let name = "cross-validation: compressing_ball:desk hybrid vs fixed grid";
    let (h, f) = match (hybrid, fixed) {
        (Ok(h), Ok(f)) => (h.series, f.series),
        (Err(e), _) | (_, Err(e)) => return verdict(name, false, e.to_string()),
    };
    let window = |rows: &[SeriesRow]| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.t <= 1.0 + 1e-9)
            .map(|r| (r.t, r.d[1]))
            .collect()
    };
    let (a, b) = (window(&h), window(&f));
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| (x.0 - y.0).abs() > 1e-9) {
        return verdict(name, false, "series have different time levels".into());
    }
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.1.abs()));
    let diff = a
        .iter()
        .zip(&b)
        .fold(0.0f64, |m, (x, y)| m.max((x.1 - y.1).abs()));
    let rel = diff / scale;
    verdict(
        name,
        scale > 0.0 && rel < 0.05 && a.last().is_some_and(|x| x.0 >= 1.0 - 1e-9),
        format!(
            "{} levels to t = {:.2}, max |d2| {scale:.4}, relative Linf difference {:.2}% (fixed grid {fixed_n}x{fixed_n})",
            a.len(),
            a.last().map_or(0.0, |x| x.0),
            100.0 * rel
        ),
    )
}

fn determinism() -> Verdict {
    let name = "determinism: reruns are bitwise identical";
    let mut mismatched = Vec::new();
    for suite in Suite::ALL {
        match (verify::run_suite(suite), verify::run_suite(suite)) {
            (Ok(a), Ok(b)) => {
                let same = a.checks.len() == b.checks.len()
                    && a.checks
                        .iter()
                        .zip(&b.checks)
                        .all(|(x, y)| x.name == y.name && x.value.to_bits() == y.value.to_bits());
                if !same {
                    mismatched.push(suite.to_string());
                }
            }
            (Err(e), _) | (_, Err(e)) => return verdict(name, false, format!("{suite}: {e}")),
        }
    }
    let mut cfg = builtin_scenario("compressing_ball:desk").expect("built-in scenario");
    cfg.time.t_end = 0.2;
    match (run_scenario(&cfg), run_scenario(&cfg)) {
        (Ok(a), Ok(b)) => {
            if a.state != b.state || a.series != b.series {
                mismatched.push("compressing_ball:desk run".into());
            }
        }
        (Err(e), _) | (_, Err(e)) => return verdict(name, false, e.to_string()),
    }
    verdict(
        name,
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "all five suites and a 20-step scenario run".into()
        } else {
            format!("differences in {}", mismatched.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let fixed_n = 35;
    let cyl_cfg = builtin_scenario("moving_cylinder:desk").expect("built-in scenario");
    let ball = builtin_scenario("compressing_ball:desk").expect("built-in scenario");
    let ball_fixed = ball
        .clone()
        .into_fixed_grid(fixed_n, fixed_n)
        .expect("fixed-grid variant");

    // the three scenario runs dominate the runtime; overlap them with the rest
    let verdicts = std::thread::scope(|s| {
        let cyl = s.spawn(|| run_scenario(&cyl_cfg));
        let hyb = s.spawn(|| run_scenario(&ball));
        let fix = s.spawn(|| run_scenario(&ball_fixed));
        let mut v = vec![
            geometry(),
            manufactured(),
            conditioning(),
            couette(),
            weak_noslip(),
            oscillator(),
            jacobian(),
        ];
        v.push(cylinder(
            cyl.join().expect("cylinder run panicked"),
            &cyl_cfg,
        ));
        v.push(cross_validation(
            hyb.join().expect("hybrid run panicked"),
            fix.join().expect("fixed-grid run panicked"),
            fixed_n,
        ));
        v.push(determinism());
        v
    });

    let mut ok = true;
    for v in &verdicts {
        println!(
            "{} {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
        ok &= v.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
