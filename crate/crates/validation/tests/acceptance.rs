//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits with status 1 if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use common::nearest_point_distance;
use curvlab::curvature::{curvature_report, report_for_jet, Curv, CurvatureOptions, KernelForm};
use curvlab::discriminant::{codim, default_eps_grid, dist_to_discriminant, tail_experiment, DiscCase, MinOptions, SymBilinear, TailOptions};
use curvlab::estimator::{
    decay_curve, expected_density_above, falling_factorial, filter_audit, theorem_exponent, volume_identity, wishart_check,
    EstimatorOptions,
};
use curvlab::geometry::{empirical_density, fd_curvature, fd_curvature_graph, slice_points};
use curvlab::jetlaw::{cov_bf, kostlan_jet_covariance, sym_pairs};
use curvlab::kostlan::{physical_jet, sample_system};
use curvlab::linalg::{hermitian_eigen, CMat};
use curvlab::rng::{complex_normal, stream, unit_sphere};
use curvlab::stats::{loglog_slope, mean_ci};
use curvlab::{Convention, Dims, MetricContext, C64};
use rand::Rng;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn covariance_convergence() -> Outcome {
    let degrees: Vec<u32> = (0..7).map(|k| 10 << k).collect();
    let mut dists = Vec::new();
    let mut worst_t = 0.0f64;
    for &d in &degrees {
        let dims = Dims::new(2, 1, d).unwrap();
        let exact = kostlan_jet_covariance(dims, d).unwrap();
        dists.push(exact.max_entry_distance(&cov_bf(dims)));
        let pairs = sym_pairs(2);
        let t = exact.t_block();
        for (a, &(i, j)) in pairs.iter().enumerate() {
            for (b, &(k, l)) in pairs.iter().enumerate() {
                let goe = f64::from(u8::from(i == k && j == l) + u8::from(i == l && j == k));
                let want = PI * PI * (1.0 - 1.0 / d as f64) * goe;
                worst_t = worst_t.max((t[(a, b)] - C64::from(want)).norm());
            }
        }
    }
    let xs: Vec<f64> = degrees.iter().map(|&d| d as f64).collect();
    let (slope, _) = loglog_slope(&xs, &dists).unwrap();
    check(
        (slope + 1.0).abs() <= 0.15 && worst_t <= 1e-10,
        format!("slope {slope:.4} (target -1 ± 0.15), T-block error {worst_t:.2e}"),
    )
}

fn wishart_volume() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, r) in [(2, 1), (3, 1), (3, 2), (4, 2)] {
        let est = wishart_check(n, r, 1_000_000, 11, Convention::VarTwo).unwrap();
        let want = falling_factorial(n, r);
        let sigma = est.half_width_95 / 1.96;
        let err = (est.value - want).abs();
        ok &= err <= 3.0 * sigma && err <= 0.02 * want;
        parts.push(format!("({n},{r}) {:.4} vs {want}", est.value));
    }
    for (n, r, d) in [(2, 1, 7), (3, 2, 5), (5, 3, 11), (4, 3, 3)] {
        let fact: f64 = (1..=(n - r)).map(|k| k as f64).product();
        let want = (d as f64).powi(r as i32) / fact;
        let got = volume_identity(Dims::new(n, r, d).unwrap());
        ok &= got == want;
    }
    check(ok, format!("{}; volume identity exact", parts.join(", ")))
}

fn curvature_oracle() -> Outcome {
    let ctx = MetricContext::fubini_study();
    let opts = CurvatureOptions::default();
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 0..120u64 {
        let d = 2 + (k % 9) as u32;
        let sys = sample_system(Dims::new(2, 1, d).unwrap(), Convention::VarTwo, 3000 + k).unwrap();
        let points = slice_points(&sys, k).unwrap();
        let p = &points[k as usize % points.len()];
        let fd = fd_curvature(&sys, p, 1e-3).map_err(|e| format!("curve {k}: {e}"))?;
        let jet = physical_jet(&sys, p.x.as_slice(), &ctx).unwrap();
        let value = report_for_jet(&jet, d, &ctx, &opts).unwrap().sup_hc;
        worst = worst.max((fd - value).abs() / value.abs());
        count += 1;
    }
    let flat = fd_curvature_graph(|z| z * 2.0, 1e-3).unwrap();
    check(
        worst <= 1e-4 && (flat + 8.0).abs() <= 1e-8,
        format!("{count} curves, worst relative error {worst:.2e}; flat w = z^2 gives {flat:.10}"),
    )
}

fn discriminant_distances() -> Outcome {
    let mut rng = stream(404, 0);
    let mut worst_lin = 0.0f64;
    for _ in 0..50 {
        let (p, r) = [(3, 2), (2, 3), (4, 1)][rng.random_range(0..3)];
        let t = SymBilinear::sample_goe(p, r, 1.0, &mut rng);
        let mut gram = CMat::zeros(p, p);
        for m in t.mats() {
            gram += m.adjoint() * m;
        }
        let (eig, _) = hermitian_eigen(&gram);
        let oracle = eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0).sqrt() / p as f64;
        let ours = dist_to_discriminant(&t, DiscCase::Linearized, &MinOptions::default()).unwrap();
        worst_lin = worst_lin.max((ours - oracle).abs());
    }
    let mut worst_bil = 0.0f64;
    for k in 0..50u64 {
        let t = SymBilinear::sample_goe(2, 3, 1.0, &mut rng);
        let ours = dist_to_discriminant(&t, DiscCase::Bilinear, &MinOptions { seed: k, ..Default::default() }).unwrap();
        worst_bil = worst_bil.max((ours - nearest_point_distance(&t)).abs());
    }
    check(
        worst_lin <= 1e-10 && worst_bil <= 1e-6,
        format!("linearized worst {worst_lin:.2e}, bilinear worst {worst_bil:.2e} over 50 instances"),
    )
}

fn tail_exponents() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (which, n, r) in [
        (DiscCase::Bilinear, 5, 3),
        (DiscCase::Linearized, 3, 1),
        (DiscCase::Bilinear, 6, 4),
        (DiscCase::Quadratic, 5, 3),
    ] {
        let rep = tail_experiment(which, n, r, 1_000_000, &default_eps_grid(), 7, &TailOptions::default()).unwrap();
        let k = codim(which, n, r).unwrap();
        let tol = if k == 1 { 0.3 } else { 0.6 };
        ok &= (rep.slope - 2.0 * k as f64).abs() <= tol;
        parts.push(format!("{which:?}({n},{r}) {:.3} vs {}", rep.slope, 2 * k));
    }
    check(ok, parts.join(", "))
}

fn decay_rates() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (curv, n, r) in [(Curv::Hbc, 2, 1), (Curv::Hc, 2, 1), (Curv::Ricci, 3, 2), (Curv::Scal, 3, 1)] {
        let rep = decay_curve(curv, n, r, 1.0, &[10, 20, 40, 80, 160], 100_000, 7, &EstimatorOptions::default()).unwrap();
        let bound = -theorem_exponent(curv, n, r) + 0.3;
        match rep.slope {
            Some(s) => {
                let pass = s <= bound;
                ok &= pass;
                let mark = if pass { "ok" } else { "fails" };
                parts.push(format!("{curv}({n},{r}) {s:.3} {mark} (need <= {bound}, {} points)", rep.fit_points));
            }
            None => {
                ok = false;
                parts.push(format!("{curv}({n},{r}) no fit"));
            }
        }
    }
    check(ok, parts.join(", "))
}

fn cross_module() -> Outcome {
    let dims = Dims::new(2, 1, 20).unwrap();
    let est = expected_density_above(Curv::Hbc, dims, 1.0, 100_000, 1, &EstimatorOptions::default()).unwrap();
    let ctx = MetricContext::fubini_study();
    let fractions: Vec<f64> = (0..100u64)
        .map(|i| {
            let sys = sample_system(dims, Convention::VarTwo, 1000 + i).unwrap();
            empirical_density(&sys, 1000 + i, Curv::Hbc, 1.0, 1000, i, &ctx).unwrap().estimate.value
        })
        .collect();
    let (below, half) = mean_ci(&fractions);
    let diff = (1.0 - est.value - below).abs();
    let combined = est.half_width_95.hypot(half);
    check(
        diff <= combined,
        format!(
            "estimator below-fraction {:.5} ± {:.5}, geometry {below:.5} ± {half:.5}",
            1.0 - est.value,
            est.half_width_95
        ),
    )
}

fn invariances() -> Outcome {
    let ctx = MetricContext::fubini_study();
    let opts = CurvatureOptions::default();
    let mut worst_scale = 0.0f64;
    let mut worst_basis = 0.0f64;
    let mut worst_m1 = 0.0f64;
    for k in 0..40u64 {
        let (n, r, d) = [(2, 1, 5), (3, 1, 4), (4, 2, 3), (3, 2, 6)][k as usize % 4];
        let sys = sample_system(Dims::new(n, r, d).unwrap(), Convention::VarTwo, 700 + k).unwrap();
        let x = unit_sphere(&mut stream(k, 3), n + 1);
        let base = physical_jet(&sys, x.as_slice(), &ctx).unwrap();
        let big = physical_jet(&sys.scaled(C64::from(10.0)), x.as_slice(), &ctx).unwrap();
        let ra = curvature_report(&base.s, &base.t, &ctx, 1.0, &opts).unwrap();
        let rb = curvature_report(&big.s, &big.t, &ctx, 1.0, &opts).unwrap();
        for c in Curv::ALL {
            worst_scale = worst_scale.max((ra.get(c) - rb.get(c)).abs());
        }
        let form = KernelForm::new(&base.s, &base.t, &ctx, 1.0).unwrap();
        let m = form.m();
        let mut rng = stream(k, 4);
        let u = CMat::from_fn(m, m, |_, _| complex_normal(&mut rng)).qr().q();
        let rotated = KernelForm {
            basis: &form.basis * &u,
            w: form.w.iter().map(|wk| u.transpose() * wk * &u).collect(),
            alpha: form.alpha,
            c: form.c,
        };
        worst_basis = worst_basis.max((form.scal() - rotated.scal()).abs());
        if m == 1 {
            for c in Curv::ALL {
                worst_m1 = worst_m1.max((ra.get(c) - ra.scal).abs());
            }
        }
    }
    let dims = Dims::new(2, 1, 20).unwrap();
    let ests: Vec<_> = Curv::ALL
        .iter()
        .map(|&c| expected_density_above(c, dims, 1.0, 20_000, 5, &EstimatorOptions::default()).unwrap())
        .collect();
    let mut estimates_agree = true;
    for a in &ests {
        for b in &ests {
            estimates_agree &= (a.value - b.value).abs() <= a.half_width_95.hypot(b.half_width_95);
        }
    }
    check(
        worst_scale <= 1e-10 && worst_basis <= 1e-8 && worst_m1 <= 1e-10 && estimates_agree,
        format!(
            "scale {worst_scale:.2e}, rotated scal {worst_basis:.2e}, m = 1 spread {worst_m1:.2e}, m = 1 estimates {:?}",
            ests.iter().map(|e| format!("{:.4}", e.value)).collect::<Vec<_>>()
        ),
    )
}

fn filter_soundness() -> Outcome {
    let opts = EstimatorOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (curv, n, r, d, a) in [(Curv::Hbc, 2, 1, 20, 1.0), (Curv::Hbc, 5, 3, 160, 1.0), (Curv::Hc, 3, 2, 40, 1.0)] {
        let audit = filter_audit(curv, Dims::new(n, r, d).unwrap(), a, 10_000, 9, &opts).unwrap();
        ok &= audit.contradictions == 0;
        parts.push(format!(
            "{curv}({n},{r},{d}) certified {} contradictions {}",
            audit.certified, audit.contradictions
        ));
    }
    check(ok, parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("covariance convergence", covariance_convergence),
        ("Wishart and volume identities", wishart_volume),
        ("curvature oracle equivalence", curvature_oracle),
        ("discriminant distances", discriminant_distances),
        ("tail exponents", tail_exponents),
        ("decay rates", decay_rates),
        ("cross-module consistency", cross_module),
        ("scale and basis invariance", invariances),
        ("filter soundness", filter_soundness),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{secs:.1}s]", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
