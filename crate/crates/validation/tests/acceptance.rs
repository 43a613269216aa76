//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p curvemvg-validation --test acceptance`.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curvemvg::cameras::{fundamental, homography, matrix_cosine, random_camera, Camera};
use curvemvg::curves::{dual_image_curve, implicit_image_curve, preset_curve, sample_parameters, sample_tangents, Preset, RationalCurve3D};
use curvemvg::dynamics::{
    classify_motion, lift_observations, noise_tolerance, propagated_noise, recover_line_motion, recover_static_point, simulate_dynamic,
    Trajectory, TrajectoryKind,
};
use curvemvg::kruppa::{
    classical_kruppa_residual, constraint_norm, perturb_fundamental, quadric_degeneracy, solution_dimension, tangency_points,
    KruppaInstance, TangencyData,
};
use curvemvg::linalg::{cosine_up_to_scale, projective_distance};
use curvemvg::reconstruct::{
    chow_reconstruct, chow_unknowns, chow_view_cap, consistency_report, dual_reconstruct, dual_view_cap, epipolar_sweep, median,
    meeting_lines, min_views_chow, min_views_dual, random_lines, tangent_planes, Classifier,
};
use curvemvg::scene::{run, Command, RunOptions, SceneConfig};
use curvemvg::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn cams(seed: u64, n: usize) -> Vec<Camera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_camera(&mut rng, 3.0, 5.0)).collect()
}

fn instance(curve: &RationalCurve3D, c1: &Camera, c2: &Camera) -> curvemvg::Result<KruppaInstance> {
    KruppaInstance::new(dual_image_curve(curve, c1)?.phi, dual_image_curve(curve, c2)?.phi, fundamental(c1, c2)?)
}

fn epipolar_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut rank, mut epi, mut fh, mut he, mut oracle) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let c1 = random_camera(&mut rng, 3.0, 5.0);
        let c2 = random_camera(&mut rng, 3.0, 5.0);
        let eg = fundamental(&c1, &c2).unwrap();
        let sv = eg.f.svd(false, false).singular_values;
        rank = rank.max(sv.min() / sv.max());
        epi = epi.max(eg.epipole_residual());
        let pinv = c1.matrix().pseudo_inverse(1e-14).unwrap();
        let direct: Matrix3<f64> = eg.e2.cross_matrix() * c2.matrix() * pinv;
        oracle = oracle.max(1.0 - matrix_cosine(&direct, &eg.f));
        let plane = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let h = homography(&c1, &c2, &plane).unwrap();
        fh = fh.max((h.transpose() * eg.f + eg.f.transpose() * h).norm() / (h.norm() * eg.f.norm()));
        he = he.max(1.0 - cosine_up_to_scale((h * eg.e1).as_slice(), eg.e2.as_slice()));
    }
    Outcome::new(
        rank <= 1e-10 && epi <= 1e-10 && fh <= 1e-9 && he <= 1e-9 && oracle <= 1e-9,
        format!("100 pairs: sigma3/sigma1 {rank:.1e}, |Fe1|,|e2'F| {epi:.1e}, H'F+F'H {fh:.1e}, H e1 ~ e2 {he:.1e}, [e2]x M2 M1+ ~ F {oracle:.1e}"),
    )
}

fn generalized_kruppa() -> Outcome {
    let mut worst_truth = 0.0f64;
    let mut weakest_perturbed = f64::INFINITY;
    let mut worst_classical = 0.0f64;
    let mut errors = Vec::new();
    for preset in [Preset::Conic, Preset::TwistedCubic, Preset::RationalQuintic] {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let curve = preset_curve(preset, seed);
            let c1 = random_camera(&mut rng, 3.0, 5.0);
            let c2 = random_camera(&mut rng, 3.0, 5.0);
            let inst = match instance(&curve, &c1, &c2) {
                Ok(i) => i,
                Err(e) => {
                    errors.push(format!("{}/{seed}: {e}", preset.name()));
                    continue;
                }
            };
            worst_truth = worst_truth.max(constraint_norm(&inst, seed).unwrap_or(f64::INFINITY));
            for _ in 0..5 {
                let moved = perturb_fundamental(&inst.eg, 1e-3, &mut rng);
                weakest_perturbed = weakest_perturbed.min(constraint_norm(&inst.with_geometry(moved), seed).unwrap_or(0.0));
            }
            if preset == Preset::Conic {
                let k1 = implicit_image_curve(&curve, &c1).and_then(|f| f.conic_matrix()).unwrap();
                let k2 = implicit_image_curve(&curve, &c2).and_then(|f| f.conic_matrix()).unwrap();
                worst_classical = worst_classical.max(classical_kruppa_residual(&inst.eg, &k1, &k2).unwrap());
            }
        }
    }
    Outcome::new(
        errors.is_empty() && worst_truth <= 1e-9 && weakest_perturbed > 1e-5 && worst_classical <= 1e-9,
        format!(
            "conic/twisted cubic/quintic x 5 scenes: truth norm {worst_truth:.1e}, perturbed min {weakest_perturbed:.1e}, classical identity {worst_classical:.1e}{}",
            if errors.is_empty() { String::new() } else { format!(", errors {errors:?}") }
        ),
    )
}

fn dimension_theorem() -> Outcome {
    use Preset::*;
    let cases: [(&[Preset], usize, usize); 5] = [
        (&[Conic], 2, 5),
        (&[TwistedCubic], 4, 3),
        (&[Conic, TwistedCubic], 6, 1),
        (&[TwistedCubic, TwistedCubic], 8, 0),
        (&[Conic, RationalQuintic], 10, 0),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (presets, sum_m, expected) in cases {
        let mut dims = Vec::new();
        let mut min_gap = f64::INFINITY;
        for seed in 21..25u64 {
            let c = cams(seed, 2);
            let insts: Vec<_> = presets
                .iter()
                .enumerate()
                .map(|(i, &p)| instance(&preset_curve(p, seed * 10 + i as u64), &c[0], &c[1]).unwrap())
                .collect();
            assert_eq!(insts.iter().map(|i| i.class()).sum::<usize>(), sum_m);
            let est = solution_dimension(&insts, &insts[0].eg).unwrap();
            ok &= est.dimension == expected && !est.indeterminate && est.gap_ratio >= 10.0;
            dims.push(est.dimension);
            min_gap = min_gap.min(est.gap_ratio);
        }
        parts.push(format!("sum m={sum_m}: dims {dims:?} (want {expected}), gap >= {min_gap:.1e}"));
    }

    let (mut flagged, mut wrong) = (0, 0);
    for seed in 100..200u64 {
        let c = cams(seed, 2);
        let insts: Vec<_> = [Conic, TwistedCubic]
            .iter()
            .enumerate()
            .map(|(i, &p)| instance(&preset_curve(p, seed * 10 + i as u64), &c[0], &c[1]).unwrap())
            .collect();
        let est = solution_dimension(&insts, &insts[0].eg).unwrap();
        if est.indeterminate {
            flagged += 1;
        } else if est.dimension != 1 {
            wrong += 1;
        }
    }
    parts.push(format!("survey of 100 conic+cubic draws: {flagged} flagged indeterminate, {wrong} wrong"));

    // six tangency points always lie on a quadric through the baseline; a seventh generic one does not
    let mut degeneracy = None;
    for seed in 0..50u64 {
        let c = cams(500 + seed, 2);
        let mut pooled: Option<TangencyData> = None;
        for (i, preset) in [RationalQuartic, TwistedCubic, Conic].into_iter().enumerate() {
            let Ok(td) = tangency_points(&preset_curve(preset, seed * 10 + i as u64), &c[0], &c[1]) else {
                continue;
            };
            match &mut pooled {
                Some(p) => p.space_points.extend(td.space_points),
                None => pooled = Some(td),
            }
        }
        let Some(all) = pooled.filter(|p| p.space_points.len() >= 7) else {
            continue;
        };
        let take = |n: usize| TangencyData {
            space_points: all.space_points[..n].to_vec(),
            expected: n,
            ..all.clone()
        };
        degeneracy = Some((seed, quadric_degeneracy(&take(6)), quadric_degeneracy(&take(7))));
        break;
    }
    match degeneracy {
        Some((seed, six, seven)) => {
            ok &= six && !seven;
            parts.push(format!("quadric test m=6 {six}, m=7 {seven} (scene {seed})"));
        }
        None => {
            ok = false;
            parts.push("no scene with seven real tangency points".into());
        }
    }
    Outcome::new(ok, parts.join("; "))
}

fn two_components() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for preset in [Preset::Conic, Preset::TwistedCubic] {
        // scenes whose epipolar pencil has no plane with all candidates real carry no counts
        let n = 2000;
        let mut scene = None;
        for seed in 0..20u64 {
            let curve = preset_curve(preset, seed);
            let c = cams(seed, 3);
            let f: Vec<_> = c.iter().map(|cam| implicit_image_curve(&curve, cam).unwrap()).collect();
            let s = epipolar_sweep(&f[0], &f[1], &c[0], &c[1], n, Classifier::GroundTruth(&curve)).unwrap();
            if s.planes.len() >= 50 {
                scene = Some((seed, c, f, s));
                break;
            }
        }
        let Some((seed, c, f, truth)) = scene else {
            ok = false;
            parts.push(format!("{}: no scene with 50 real planes", preset.name()));
            continue;
        };
        let blind = epipolar_sweep(&f[0], &f[1], &c[0], &c[1], n, Classifier::ThirdView(&c[2], &f[2])).unwrap();
        let d = truth.degree;
        let counts = truth.counts_match() && truth.planes.iter().all(|p| p.candidates.len() == d * d);
        let labelled = blind.planes.iter().all(|p| p.true_count() == d);
        let agree = blind.planes.len() == truth.planes.len()
            && blind.planes.iter().zip(&truth.planes).all(|(a, b)| {
                a.candidates.iter().zip(&b.candidates).all(|(x, y)| x.true_component == y.true_component)
            });
        ok &= truth.planes.len() >= 50 && counts && labelled && agree;
        parts.push(format!(
            "d={d} (scene {seed}): {} planes ({} complex, {} tangent skipped), {}+{} per plane {}, third view {}",
            truth.planes.len(),
            truth.skipped_complex,
            truth.skipped_tangent,
            d,
            d * (d - 1),
            if counts { "ok" } else { "MISMATCH" },
            if labelled && agree { "agrees" } else { "DISAGREES" }
        ));
    }
    Outcome::new(ok, parts.join("; "))
}

fn tangent_views(curve: &RationalCurve3D, cams: &[Camera], n: usize) -> Vec<(Camera, Vec<nalgebra::Vector3<f64>>)> {
    cams.iter()
        .enumerate()
        .map(|(i, c)| (*c, sample_tangents(curve, c, n, 0.11 * i as f64).into_iter().map(|(_, l)| l).collect()))
        .collect()
}

fn point_views(curve: &RationalCurve3D, cams: &[Camera], n: usize) -> Vec<(Camera, Vec<nalgebra::Vector3<f64>>)> {
    cams.iter()
        .enumerate()
        .map(|(i, c)| (*c, sample_parameters(n, 0.11 * i as f64).iter().map(|&t| c.project(&curve.point(t))).collect()))
        .collect()
}

fn rank_failure(r: curvemvg::Result<impl Sized>) -> Option<(usize, usize)> {
    match r {
        Err(Error::InsufficientRank { have, need, .. }) => Some((have, need)),
        _ => None,
    }
}

fn dual_reconstruction() -> Outcome {
    let curve = preset_curve(Preset::TwistedCubic, 7);
    let c = cams(7, 6);
    let views = tangent_views(&curve, &c, 40);
    let k = min_views_dual(4).unwrap();
    let per_view: Vec<usize> = views
        .iter()
        .map(|v| match dual_reconstruct(std::slice::from_ref(v), 4) {
            Err(Error::InsufficientRank { have, .. }) => have,
            _ => 0,
        })
        .collect();
    let cap_ok = dual_view_cap(4) == 14 && per_view.iter().all(|&r| r == 14);
    let held = tangent_planes(&curve, 50, 9);
    let residual = |n: usize| {
        dual_reconstruct(&views[..n], 4).map(|s| held.iter().map(|p| s.residual_at(p)).fold(0.0, f64::max))
    };
    let at_bound = residual(k);
    let at_bound_ok = matches!(at_bound, Ok(r) if r <= 1e-7);
    let two = rank_failure(dual_reconstruct(&views[..2], 4));
    let first_success = (2..=views.len()).find(|&n| matches!(residual(n), Ok(r) if r <= 1e-7));
    let success_residual = first_success.map(|n| residual(n).unwrap());
    let bound_text = match &at_bound {
        Ok(r) => format!("succeeds, residual {r:.1e}"),
        Err(e) => format!("FAILS ({e})"),
    };
    Outcome::new(
        cap_ok && at_bound_ok && two.is_some(),
        format!(
            "per-view rank {per_view:?} (want 14); {k} views {bound_text}; 2 views rank deficit {:?}; measured sufficient count {first_success:?} views, residual {:.1e}",
            two,
            success_residual.unwrap_or(f64::NAN)
        ),
    )
}

fn chow_reconstruction() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (preset, d, unknowns, cap) in [(Preset::Conic, 2usize, 20usize, 5usize), (Preset::TwistedCubic, 3, 50, 9)] {
        let curve = preset_curve(preset, 4);
        let c = cams(40 + d as u64, 9);
        let views = point_views(&curve, &c, 30);
        let k = min_views_chow(d).unwrap();
        let per_view: Vec<usize> = views
            .iter()
            .map(|v| match chow_reconstruct(std::slice::from_ref(v), d) {
                Err(Error::InsufficientRank { have, .. }) => have,
                _ => 0,
            })
            .collect();
        let counts_ok = chow_unknowns(d) == unknowns && chow_view_cap(d) == cap && per_view.iter().all(|&r| r == cap);
        let meet_lines = meeting_lines(&curve, 50, 11);
        let far_lines = random_lines(100, 12);
        let quality = |n: usize| {
            chow_reconstruct(&views[..n], d).map(|g| {
                let meet = meet_lines.iter().map(|l| g.residual_at(l)).fold(0.0, f64::max);
                let far: Vec<f64> = far_lines.iter().map(|l| g.residual_at(l)).collect();
                (meet, median(&far))
            })
        };
        let good = |q: &curvemvg::Result<(f64, f64)>| matches!(q, Ok((m, s)) if *m <= 1e-8 && *s >= 1e-3);
        let at_bound = quality(k);
        let below = rank_failure(chow_reconstruct(&views[..k - 1], d));
        let first_success = (k..=views.len()).find(|&n| good(&quality(n)));
        let measured = first_success.map(|n| quality(n).unwrap());
        ok &= counts_ok && good(&at_bound) && below.is_some();
        let bound_text = match &at_bound {
            Ok((m, s)) => format!("succeeds (meet {m:.1e}, separation {s:.1e})"),
            Err(e) => format!("FAILS ({e})"),
        };
        parts.push(format!(
            "d={d}: unknowns {}, per-view rank {per_view:?}; {k} views {bound_text}; {} views rank deficit {below:?}; measured sufficient count {first_success:?} views (meet {:.1e}, separation {:.1e})",
            chow_unknowns(d),
            k - 1,
            measured.map_or(f64::NAN, |q| q.0),
            measured.map_or(f64::NAN, |q| q.1),
        ));
    }
    let table_ok = (2..=4).all(|d| [2, 4, 6].iter().all(|&m| consistency_report(d, m).map(|r| r.consistent).unwrap_or(false)));
    ok &= table_ok;
    parts.push(format!("consistency table d 2..4 x m {{2,4,6}}: {}", if table_ok { "consistent" } else { "INCONSISTENT" }));
    Outcome::new(ok, parts.join("; "))
}

#[derive(Default)]
struct Tally {
    correct: usize,
    static_err: f64,
    line_pairing: f64,
    chow_residual: f64,
    recovery_failures: usize,
}

fn dynamics() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for sigma in [0.0, 1e-3] {
        let mut rates = Vec::new();
        let mut t0 = Tally::default();
        for (ki, kind) in TrajectoryKind::ALL.into_iter().enumerate() {
            let mut correct = 0;
            for t in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + t + 7919 * ki as u64);
                let traj = Trajectory::random(kind, &mut rng);
                let cameras: Vec<_> = (0..12).map(|_| random_camera(&mut rng, 3.0, 5.0)).collect();
                let scene = simulate_dynamic(traj, cameras, 12, 0, sigma, &mut rng);
                let rays = lift_observations(&scene.cameras, &scene.detections).unwrap();
                let tol = noise_tolerance(propagated_noise(&scene.cameras, &scene.detections, sigma));
                let class = classify_motion(&rays, 3, tol).unwrap();
                if class.kind() != Some(kind.expected()) {
                    continue;
                }
                correct += 1;
                if sigma > 0.0 {
                    continue;
                }
                match &scene.trajectory {
                    Trajectory::Static(x) => match recover_static_point(&rays, tol) {
                        Ok(p) => t0.static_err = t0.static_err.max(projective_distance(p.as_slice(), x.as_slice())),
                        Err(_) => t0.recovery_failures += 1,
                    },
                    Trajectory::Line(..) => match recover_line_motion(&rays, tol) {
                        Ok(l) => {
                            let worst = rays.iter().map(|o| o.ray.normalized_pairing(&l)).fold(0.0, f64::max);
                            t0.line_pairing = t0.line_pairing.max(worst);
                        }
                        Err(_) => t0.recovery_failures += 1,
                    },
                    Trajectory::Curve(_) => t0.chow_residual = t0.chow_residual.max(class.class.as_ref().unwrap().residual),
                }
            }
            rates.push(format!("{} {correct}%", kind.expected().name()));
            ok &= if sigma == 0.0 { correct == 100 } else { correct >= 95 };
            t0.correct += correct;
        }
        if sigma == 0.0 {
            ok &= t0.static_err <= 1e-6 && t0.line_pairing <= 1e-7 && t0.chow_residual <= 1e-7 && t0.recovery_failures == 0;
            parts.push(format!(
                "noise 0: {}; static error {:.1e}, line pairing {:.1e}, held-out Chow {:.1e}",
                rates.join(", "),
                t0.static_err,
                t0.line_pairing,
                t0.chow_residual
            ));
        } else {
            parts.push(format!("noise 1e-3: {}", rates.join(", ")));
        }
    }
    Outcome::new(ok, parts.join("; "))
}

fn determinism() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut ok = true;
    let mut runs = 0;
    let mut mismatches = Vec::new();
    for name in ["conic_pair.json", "twisted_cubic.json", "kruppa_mixed.json", "motion.json"] {
        let cfg = SceneConfig::from_path(&dir.join(name)).unwrap();
        for command in Command::ALL {
            let opts = RunOptions::default();
            let (Ok(a), Ok(b)) = (run(command, &cfg, &opts), run(command, &cfg, &opts)) else {
                continue;
            };
            runs += 1;
            if a.digest() != b.digest() {
                ok = false;
                mismatches.push(format!("{name}/{}", command.name()));
            }
        }
    }
    let cfg = SceneConfig::from_path(&dir.join("motion.json")).unwrap();
    let serial = run(Command::ClassifyMotion, &cfg, &RunOptions::default()).unwrap();
    let parallel = run(
        Command::ClassifyMotion,
        &cfg,
        &RunOptions {
            parallel: true,
            ..RunOptions::default()
        },
    )
    .unwrap();
    ok &= serial.digest() == parallel.digest() && runs >= 20;
    Outcome::new(
        ok,
        format!("{runs} command/config pairs re-run, {} digest mismatches {mismatches:?}; parallel = serial: {}", mismatches.len(), serial.digest() == parallel.digest()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("epipolar algebra", epipolar_algebra),
        ("generalized Kruppa constraints", generalized_kruppa),
        ("dimension of the solution set", dimension_theorem),
        ("two-component reconstruction", two_components),
        ("dual-space reconstruction", dual_reconstruction),
        ("Chow reconstruction", chow_reconstruction),
        ("motion classification", dynamics),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {} {:<32} {} [{:.1}s] {}",
            i + 1,
            name,
            if out.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
