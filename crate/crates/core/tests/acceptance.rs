//! Acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero when any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use dfl_core::calibration::{
    bin_training_tuples, fit_mixture_weight, fit_spatial_params, robust_unaffected_estimate, train_spatial_model,
    weight_candidates, TrainedModel, TrainingSource,
};
use dfl_core::config::{CalibrationParams, GridConfig, MixtureConstants, MotionParams, NodeConfig, SiteConfig};
use dfl_core::evaluation::{
    detection_rates, error_series, median_error, run_experiment, run_method, Calibrations, Estimate, Method, Runner,
};
use dfl_core::geometry::{neighbors, Bounds, NeighborMode, Point, Segment, WallSet};
use dfl_core::io::estimates::EstimateSeries;
use dfl_core::io::report;
use dfl_core::io::scenario::Scenario;
use dfl_core::io::trace::TraceFile;
use dfl_core::localizers::imaging::ImagingModel;
use dfl_core::localizers::lda::{lda_classify, lda_train, Shrinkage};
use dfl_core::localizers::rti::EmptyRoomMeans;
use dfl_core::localizers::transition::{build_transition_model, DenseTransition, TransitionKernel};
use dfl_core::localizers::{hmml_step, ForwardState};
use dfl_core::rss_model::{
    affected_probability, build_conditional_pmf, likelihood_map, Alphabet, AffectedTable, DeltaTable, LikelihoodMap,
    LinkModel, LinkStateParams, RssFrame, RssValue, SpatialParams,
};
use dfl_core::simulator::{
    generate_trajectory, random_link_params, synthesize_trace, EnvironmentEvent, GenerativeLinkParams, LinkShift,
    RandomWaypoints, Trajectory, TrajectorySpec, Waypoint,
};
use dfl_core::site::Site;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- AC1

fn ac1_forward_oracle() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=5usize);
        let steps = rng.random_range(1..=6usize);
        let stochastic = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let matrix: Vec<Vec<f64>> = (0..n).map(|_| stochastic(&mut rng)).collect();
        let pi = stochastic(&mut rng);
        let emissions: Vec<Vec<f64>> =
            (0..steps).map(|_| (0..n).map(|_| rng.random_range(1e-3..1.0)).collect()).collect();
        let t = DenseTransition::new(matrix.clone(), pi.clone()).map_err(|e| e.to_string())?;
        let mut st = ForwardState::new(n);
        for step in 0..steps {
            let map = LikelihoodMap::from_probabilities(&emissions[step]).map_err(|e| e.to_string())?;
            hmml_step(&mut st, &map, &t).map_err(|e| e.to_string())?;
            // every state path of length step + 1
            let mut brute = vec![0.0; n];
            let paths = n.pow(step as u32 + 1);
            for code in 0..paths {
                let mut c = code;
                let mut states = Vec::with_capacity(step + 1);
                for _ in 0..=step {
                    states.push(c % n);
                    c /= n;
                }
                let mut p = pi[states[0]] * emissions[0][states[0]];
                for i in 1..=step {
                    p *= matrix[states[i - 1]][states[i]] * emissions[i][states[i]];
                }
                brute[states[step]] += p;
            }
            for (a, b) in st.unscaled().iter().zip(&brute) {
                worst = worst.max(((a - b) / b).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, format!("max relative error {worst:.3e} > 1e-9"))?;
    ensure(secs < 10.0, format!("took {secs:.1} s (limit 10 s)"))?;
    Ok(format!("1000 random HMMs, max relative error {worst:.2e}, {secs:.2} s"))
}

// ---------------------------------------------------------------- AC2

/// Discretized Gaussian: normalize over the alphabet, then floor.
fn oracle_pmf(mu: f64, var: f64, alphabet: &Alphabet, eps: f64) -> Vec<f64> {
    let dens: Vec<f64> = alphabet.values().map(|v| (-(v as f64 - mu).powi(2) / (2.0 * var)).exp()).collect();
    let gamma: f64 = dens.iter().sum();
    dens.iter().map(|d| (d / gamma).max(eps)).collect()
}

fn oracle_prob(pmf: &[f64], r: RssValue, alphabet: &Alphabet, eps: f64) -> f64 {
    match r {
        RssValue::Dbm(v) => pmf[alphabet.index(v).unwrap()],
        RssValue::Missing => eps,
    }
}

fn ac2_likelihood_oracle() -> Check {
    let consts = MixtureConstants::default();
    let alphabet = Alphabet::new(-110, -10).unwrap();
    let eps = consts.epsilon;
    let deltas = [[0.0, 0.7], [0.35, 0.05], [1.6, 2.2]];
    let table = DeltaTable::from_rows(deltas.iter().map(|r| r.to_vec()).collect(), 2).unwrap();
    let mut worst = 0.0f64;
    let mut cases = 0;
    let means = [-72.0, -55.5];
    let vars = [0.5625, 2.0, 6.5];
    let spatial = [(0.3, 0.2), (0.9, 1.0)];
    let readings = [RssValue::Dbm(-75), RssValue::Dbm(-58), RssValue::Dbm(-52), RssValue::Missing];
    for &mu0 in &means {
        for &var0 in &vars {
            for &(b0, l0) in &spatial {
                for &(b1, l1) in &spatial {
                    for &r0 in &readings {
                        for &r1 in &readings {
                            let (mu1, var1) = (mu0 + 4.0, var0 * 1.5);
                            let links = [(mu0, var0, b0, l0), (mu1, var1, b1, l1)];
                            let models: Vec<LinkModel> = links
                                .iter()
                                .map(|(m, v, b, l)| {
                                    LinkModel::new(
                                        LinkStateParams::from_unaffected(*m, *v, &consts).unwrap(),
                                        SpatialParams::new(*b, *l).unwrap(),
                                        alphabet,
                                        eps,
                                    )
                                    .unwrap()
                                })
                                .collect();
                            let sp: Vec<SpatialParams> = models.iter().map(|m| *m.spatial()).collect();
                            let affected = AffectedTable::new(&table, &sp, &consts).unwrap();
                            let frame = RssFrame { timestamp: 0.0, values: vec![r0, r1] };
                            let map = likelihood_map(&frame, &models, &affected).map_err(|e| e.to_string())?;

                            let mut raw = Vec::new();
                            for k in 0..4 {
                                let mut p = 1.0;
                                for (l, (m, v, b, lam)) in links.iter().enumerate() {
                                    let pa = deltas.get(k).map_or(1e-3, |d| b * (-d[l] / lam).exp());
                                    let pu = oracle_pmf(*m, *v, &alphabet, eps);
                                    let paf = oracle_pmf(m - 3.0, v * 2.5, &alphabet, eps);
                                    let r = frame.values[l];
                                    p *= pa * oracle_prob(&paf, r, &alphabet, eps)
                                        + (1.0 - pa) * oracle_prob(&pu, r, &alphabet, eps);
                                }
                                raw.push(p);
                            }
                            let max = raw.iter().copied().fold(0.0, f64::max);
                            for (got, want) in map.probs().iter().zip(raw.iter().map(|p| p / max)) {
                                worst = worst.max((got - want).abs());
                            }
                            ensure(map.probs().iter().copied().fold(0.0, f64::max) == 1.0, "map max is not 1")?;
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:.3e} > 1e-12"))?;
    Ok(format!("{cases} parameter/reading combinations, max deviation {worst:.2e}"))
}

// ---------------------------------------------------------------- AC3

fn ac3_spatial_recovery() -> Check {
    let start = Instant::now();
    let consts = MixtureConstants::default();
    let params = CalibrationParams::default();
    let alphabet = Alphabet::new(-110, -10).unwrap();
    let candidates = weight_candidates(params.weight_candidates, params.weight_min);
    let per_bin = 500;
    let bins = 40;
    let mut summary = Vec::new();
    let mut ok = true;
    for &beta0 in &[0.5, 0.7, 0.9] {
        for &lambda0 in &[0.3, 1.0, 3.0] {
            let mut hits = 0;
            for trial in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(trial * 1000 + (beta0 * 10.0) as u64 * 10 + lambda0 as u64);
                let mu_u = rng.random_range(-75.0..-50.0);
                let var_u = rng.random_range(0.8..3.0);
                let state = LinkStateParams::from_unaffected(mu_u, var_u, &consts).unwrap();
                let mut tuples = Vec::with_capacity(per_bin * bins);
                for m in 0..bins {
                    for _ in 0..per_bin {
                        let delta = (m as f64 + rng.random::<f64>()) * params.bin_width_m;
                        let affected = rng.random::<f64>() < beta0 * (-delta / lambda0).exp();
                        let (mu, var) = if affected { (state.mu_a, state.var_a) } else { (state.mu_u, state.var_u) };
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        tuples.push((RssValue::Dbm(alphabet.quantize(mu + var.sqrt() * z)), delta));
                    }
                }
                let binned = bin_training_tuples(&tuples, alphabet, params.bin_width_m, params.min_bin_count)
                    .map_err(|e| e.to_string())?;
                let pu = build_conditional_pmf(state.mu_u, state.var_u, alphabet, consts.epsilon).unwrap();
                let pa = build_conditional_pmf(state.mu_a, state.var_a, alphabet, consts.epsilon).unwrap();
                let curve: Vec<(f64, f64)> = binned
                    .centers
                    .iter()
                    .zip(&binned.histograms)
                    .map(|(d, h)| (*d, fit_mixture_weight(h, &pa, &pu, &candidates)))
                    .collect();
                let fit = fit_spatial_params(&curve, &params).map_err(|e| e.to_string())?;
                if (fit.beta - beta0).abs() <= 0.1 && (fit.lambda - lambda0).abs() <= 0.25 * lambda0 {
                    hits += 1;
                }
            }
            ok &= hits >= 90;
            summary.push(format!("({beta0},{lambda0}):{hits}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(ok, format!("recovery rates below 90/100: {}", summary.join(" ")))?;
    ensure(secs < 60.0, format!("took {secs:.1} s (limit 60 s)"))?;
    Ok(format!("hits per (beta, lambda): {} in {secs:.1} s", summary.join(" ")))
}

// ---------------------------------------------------------------- desk-scale scenario

const CHANNELS: [u8; 4] = [11, 15, 20, 26];

/// 10 m x 8 m area, 20 nodes evenly spaced on the perimeter, 0.6 m grid.
fn desk_site() -> Site {
    let (w, h) = (10.0, 8.0);
    let perimeter = 2.0 * (w + h);
    let nodes = (0..20)
        .map(|i| {
            let s = 0.9 + perimeter / 20.0 * i as f64;
            let (x, y) = if s < w {
                (s, 0.0)
            } else if s < w + h {
                (w, s - w)
            } else if s < 2.0 * w + h {
                (w - (s - w - h), h)
            } else {
                (0.0, h - (s - 2.0 * w - h))
            };
            NodeConfig { id: i, x, y }
        })
        .collect();
    let mut cfg = SiteConfig::new(
        nodes,
        GridConfig { bounds: Bounds { min_x: 0.0, min_y: 0.0, max_x: w, max_y: h }, spacing_m: 0.6 },
    );
    cfg.name = "desk".into();
    cfg.channels = CHANNELS.to_vec();
    cfg.entrances = vec![[0.0, 4.2]];
    Site::new(cfg).expect("desk site")
}

fn truncate(mut t: Trajectory, seconds: f64) -> Trajectory {
    let n = (seconds / t.period_s).round() as usize + 1;
    t.timestamps.truncate(n);
    t.positions.truncate(n);
    t
}

fn walk(site: &Site, seed: u64, seconds: f64, prologue_s: f64, region: Option<Bounds>) -> Trajectory {
    let spec = TrajectorySpec {
        prologue_s,
        random: Some(RandomWaypoints { count: 400, dwell_s: 0.0, seed, region }),
        ..TrajectorySpec::default()
    };
    truncate(generate_trajectory(&spec, site).expect("walk"), seconds)
}

struct Desk {
    site: Site,
    params: Vec<GenerativeLinkParams>,
    model: TrainedModel,
    imaging: Arc<ImagingModel>,
    train_secs: f64,
}

fn build_desk() -> Desk {
    let start = Instant::now();
    let site = desk_site();
    let params = random_link_params(&site, 11).unwrap();
    let training = synthesize_trace(&site, &params, &walk(&site, 1, 600.0, 0.0, None), &[], 0.01, 101).unwrap();
    let model = train_spatial_model(&training.frames, &site, &TrainingSource::Krti).expect("training");
    let imaging =
        Arc::new(ImagingModel::new(site.grid(), site.links(), site.deltas(), &site.config().imaging).unwrap());
    Desk { site, params, model, imaging, train_secs: start.elapsed().as_secs_f64() }
}

fn mpl_calibrations(desk: &Desk) -> Calibrations {
    Calibrations { model: Some(desk.model.clone()), ..Calibrations::default() }
}

fn estimates(desk: &Desk, method: Method, calib: &Calibrations, frames: &[RssFrame]) -> Result<Vec<Estimate>, String> {
    run_method(method, &desk.site, calib, desk.imaging.clone(), NeighborMode::Walls, frames).map_err(|e| e.to_string())
}

fn window_median(est: &[Estimate], truth: &[Option<Point>], times: &[f64], from: f64, to: f64) -> Option<f64> {
    let idx: Vec<usize> = (0..times.len()).filter(|i| times[*i] >= from && times[*i] < to).collect();
    let e: Vec<Estimate> = idx.iter().map(|i| est[*i]).collect();
    let t: Vec<Option<Point>> = idx.iter().map(|i| truth[*i]).collect();
    median_error(&error_series(&e, &t).ok()?)
}

// ---------------------------------------------------------------- AC4

fn ac4_closed_loop(desk: &Desk) -> Check {
    let start = Instant::now();
    let trace = synthesize_trace(&desk.site, &desk.params, &walk(&desk.site, 2, 600.0, 0.0, None), &[], 0.01, 202)
        .map_err(|e| e.to_string())?;
    let calib = mpl_calibrations(desk);
    let truth = &trace.trajectory.positions;
    let mut out = Vec::new();
    let mut ok = true;
    for m in [Method::Mll, Method::Hmml] {
        let est = estimates(desk, m, &calib, &trace.frames)?;
        let med = median_error(&error_series(&est, truth).map_err(|e| e.to_string())?).unwrap_or(f64::INFINITY);
        ok &= med <= 1.2;
        out.push(format!("{m} e_med={med:.3} m"));
    }
    let secs = start.elapsed().as_secs_f64() + desk.train_secs;
    let fallbacks = desk.model.links.iter().filter(|l| l.fallback).count();
    ensure(ok, format!("{} (limit 1.2 m)", out.join(", ")))?;
    ensure(secs < 120.0, format!("took {secs:.1} s including training (limit 120 s)"))?;
    Ok(format!(
        "{}; {} frames, {fallbacks}/{} links on fallback spatial params, {secs:.1} s including training",
        out.join(", "),
        trace.frames.len(),
        desk.model.links.len()
    ))
}

// ---------------------------------------------------------------- AC5

fn ac5_stationary(desk: &Desk) -> Check {
    let spec = TrajectorySpec {
        prologue_s: 20.0,
        waypoints: [(0.6, 4.2, 0.0), (3.0, 2.4, 120.0), (7.2, 6.0, 120.0), (8.4, 1.8, 120.0), (2.4, 6.0, 120.0)]
            .iter()
            .map(|(x, y, d)| Waypoint { x: *x, y: *y, dwell_s: *d })
            .collect(),
        ..TrajectorySpec::default()
    };
    let traj = generate_trajectory(&spec, &desk.site).map_err(|e| e.to_string())?;
    let trace = synthesize_trace(&desk.site, &desk.params, &traj, &[], 0.01, 303).map_err(|e| e.to_string())?;
    let calib = mpl_calibrations(desk);
    let truth = &trace.trajectory.positions;
    let md = |m: Method| -> Result<f64, String> {
        let est = estimates(desk, m, &calib, &trace.frames)?;
        Ok(detection_rates(&est, truth).map_err(|e| e.to_string())?.missed_pct.unwrap_or(0.0))
    };
    let (krti, mll, hmml) = (md(Method::Krti)?, md(Method::Mll)?, md(Method::Hmml)?);
    let detail = format!("MD krti={krti:.2}% mll={mll:.2}% hmml={hmml:.2}%");
    ensure(mll < 1.0 && hmml < 1.0, format!("{detail}: MPL MD must be < 1%"))?;
    ensure(krti > 0.0 && krti >= 10.0 * mll.max(hmml), format!("{detail}: KRTI MD must be >= 10x MPL MD"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- AC6 and AC7

const SHIFT_AT: f64 = 330.0;
const PROLOGUE: f64 = 30.0;

struct ShiftRun {
    frames: Vec<RssFrame>,
    truth: Vec<Option<Point>>,
    times: Vec<f64>,
    shifted: Vec<usize>,
    empty: EmptyRoomMeans,
}

/// The person walks the upper part of the area while links between the
/// bottom-edge nodes shift by +6 dB.
fn shift_run(desk: &Desk) -> Result<ShiftRun, String> {
    let region = Bounds { min_x: 0.0, min_y: 3.0, max_x: 10.0, max_y: 8.0 };
    let traj = walk(&desk.site, 4, SHIFT_AT + 600.0, PROLOGUE, Some(region));
    let bottom: Vec<u32> = desk.site.config().nodes.iter().filter(|n| n.y == 0.0).map(|n| n.id).collect();
    let shifted: Vec<usize> = desk
        .site
        .links()
        .iter()
        .enumerate()
        .filter(|(_, l)| bottom.contains(&l.id.tx) && bottom.contains(&l.id.rx))
        .map(|(i, _)| i)
        .collect();
    let event = EnvironmentEvent {
        time_s: SHIFT_AT,
        shifts: shifted.iter().map(|i| LinkShift { link: desk.site.links()[*i].id, shift_db: 6.0 }).collect(),
    };
    let trace =
        synthesize_trace(&desk.site, &desk.params, &traj, &[event], 0.01, 404).map_err(|e| e.to_string())?;
    let empty = EmptyRoomMeans::from_frames(
        trace.frames.iter().filter(|f| f.timestamp < PROLOGUE),
        desk.site.num_links(),
    )
    .map_err(|e| e.to_string())?;
    Ok(ShiftRun {
        times: trace.trajectory.timestamps.clone(),
        truth: trace.trajectory.positions.clone(),
        frames: trace.frames,
        shifted,
        empty,
    })
}

fn ac6_recalibration(desk: &Desk, run: &ShiftRun) -> Check {
    let calib = mpl_calibrations(desk);
    let mut runner = Runner::new(Method::Mll, &desk.site, &calib, desk.imaging.clone(), NeighborMode::Walls)
        .map_err(|e| e.to_string())?;
    let deadline = SHIFT_AT + 300.0;
    let mut est = Vec::with_capacity(run.frames.len());
    let mut worst: Option<f64> = None;
    for f in &run.frames {
        est.push(runner.process(&desk.site, f).map_err(|e| e.to_string())?);
        if worst.is_none() && f.timestamp >= deadline {
            let mpl = runner.as_mpl().expect("mpl runner");
            worst = Some(
                run.shifted
                    .iter()
                    .map(|l| (mpl.state(*l).mu_u - (desk.params[*l].mu_u + 6.0)).abs())
                    .fold(0.0, f64::max),
            );
        }
    }
    let worst = worst.ok_or("trace ended before the convergence deadline")?;
    let pre = window_median(&est, &run.truth, &run.times, PROLOGUE, SHIFT_AT).ok_or("no pre-shift errors")?;
    let post = window_median(&est, &run.truth, &run.times, deadline, f64::INFINITY).ok_or("no post-shift errors")?;
    let detail = format!(
        "{} shifted links, worst |mu_u - truth| after 5 min = {worst:.2} dB; MLL e_med pre={pre:.3} m post={post:.3} m",
        run.shifted.len()
    );
    ensure(worst <= 1.0, format!("{detail}: not converged within 1 dB"))?;
    ensure((post - pre).abs() <= 0.25 * pre, format!("{detail}: post-shift e_med not within 25%"))?;
    Ok(detail)
}

fn ac7_baseline_degradation(desk: &Desk, run: &ShiftRun) -> Check {
    let calib = Calibrations { model: Some(desk.model.clone()), empty_room: Some(run.empty.clone()), fingerprints: None };
    let deadline = SHIFT_AT + 300.0;
    let mut medians = Vec::new();
    for m in [Method::Rti, Method::Hmml] {
        let est = estimates(desk, m, &calib, &run.frames)?;
        let pre = window_median(&est, &run.truth, &run.times, PROLOGUE, SHIFT_AT).ok_or("no pre-shift errors")?;
        let post = window_median(&est, &run.truth, &run.times, deadline, f64::INFINITY).ok_or("no post errors")?;
        medians.push((m, pre, post));
    }
    let detail = medians
        .iter()
        .map(|(m, a, b)| format!("{m} e_med pre={a:.3} m post={b:.3} m"))
        .collect::<Vec<_>>()
        .join(", ");
    let (_, rti_pre, rti_post) = medians[0];
    let (_, h_pre, h_post) = medians[1];
    ensure(rti_post >= 1.5 * rti_pre, format!("{detail}: RTI did not degrade by 50%"))?;
    ensure(h_post < 1.5 * h_pre, format!("{detail}: HMML degraded by 50% or more"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- AC8

fn ac8_distributions() -> Check {
    let consts = MixtureConstants::default();
    let alphabet = Alphabet::new(-110, -10).unwrap();
    let eps = consts.epsilon;
    let mut runner = TestRunner::new(PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() });
    runner
        .run(&(-130.0f64..10.0, 0.5625f64..400.0), |(mu, var)| {
            let pmf = build_conditional_pmf(mu, var, alphabet, eps).unwrap();
            prop_assert!(pmf.masses().iter().all(|m| *m >= eps));
            prop_assert_eq!(pmf.prob(RssValue::Missing), eps);
            let sum: f64 = pmf.masses().iter().sum();
            prop_assert!(sum >= 1.0 - 1e-12 && sum <= 1.0 + alphabet.len() as f64 * eps + 1e-12, "sum {}", sum);
            Ok(())
        })
        .map_err(|e| format!("pmf invariant: {e}"))?;

    let mut runner = TestRunner::new(PropConfig { cases: 60, failure_persistence: None, ..PropConfig::default() });
    runner
        .run(
            &(2.0f64..6.0, 2.0f64..6.0, 0.3f64..1.0, 0.0f64..1.0, 0.0f64..1.0, any::<bool>()),
            |(w, h, spacing, wx, ey, no_walls)| {
                let bounds = Bounds { min_x: 0.0, min_y: 0.0, max_x: w, max_y: h };
                let walls = WallSet::new(vec![Segment {
                    a: Point::new(wx * w, 0.0),
                    b: Point::new(wx * w, 0.6 * h),
                }])
                .unwrap();
                let grid = dfl_core::geometry::build_grid(bounds, spacing.min(w).min(h), &walls, &[Point::new(0.0, ey * h)])
                    .unwrap();
                let mode = if no_walls { NeighborMode::NoWalls } else { NeighborMode::Walls };
                let motion = MotionParams::default();
                let adj = neighbors(&grid, &walls, motion.max_step_m, mode);
                let t = build_transition_model(&adj, &motion).unwrap();
                for row in t.to_dense() {
                    let s: f64 = row.iter().sum();
                    prop_assert!((s - 1.0).abs() <= 1e-9, "row sum {}", s);
                }
                let pi: f64 = t.initial().iter().sum();
                prop_assert!((pi - 1.0).abs() <= 1e-12);
                prop_assert!(t.initial().iter().all(|p| *p > 0.0));
                Ok(())
            },
        )
        .map_err(|e| format!("transition invariant: {e}"))?;

    let mut runner = TestRunner::new(PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() });
    runner
        .run(&(0.001f64..0.999, 0.01f64..50.0, 0.0f64..20.0, 1e-6f64..10.0), |(beta, lambda, d, gap)| {
            let s = SpatialParams::new(beta, lambda).unwrap();
            let near = affected_probability(&s, d, false, &consts);
            let far = affected_probability(&s, d + gap, false, &consts);
            prop_assert!(near > far || (near == 0.0 && far == 0.0), "{} !> {}", near, far);
            Ok(())
        })
        .map_err(|e| format!("affected probability monotonicity: {e}"))?;
    Ok("1000 pmfs, 60 transition models, 1000 monotonicity cases".into())
}

// ---------------------------------------------------------------- AC9

fn ac9_robust_estimation() -> Check {
    let normal = Normal::new(-60.0, 2.0).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let (_, var) = robust_unaffected_estimate(&samples, 0.75).map_err(|e| e.to_string())?;
        worst = worst.max((var - 4.0).abs() / 4.0);
    }
    ensure(worst <= 0.05, format!("worst relative variance error {:.2}%", worst * 100.0))?;
    Ok(format!("50 seeds x 1e5 samples, worst relative error {:.2}%", worst * 100.0))
}

// ---------------------------------------------------------------- AC10

fn gauss_jordan_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|x, y| a[*x][c].abs().total_cmp(&a[*y][c].abs())).unwrap();
        a.swap(c, p);
        let d = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                let pivot = a[c].clone();
                a[r].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn random_classes(rng: &mut ChaCha8Rng, k: usize, l: usize, per: usize, spread: f64) -> Vec<Vec<Vec<RssValue>>> {
    (0..k)
        .map(|c| {
            let center: Vec<f64> = (0..l).map(|i| -70.0 + spread * ((c * 7 + i * 3) % 5) as f64).collect();
            (0..per)
                .map(|_| {
                    center
                        .iter()
                        .map(|m| {
                            let z: f64 = rng.sample(rand_distr::StandardNormal);
                            RssValue::Dbm((m + 2.0 * z).round() as i32)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn ac10_lda() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let classes = random_classes(&mut rng, 3, 5, 12, 3.0);
    let m0 = lda_train(&classes, Shrinkage::Fixed(0.0)).map_err(|e| e.to_string())?;
    ensure(m0.covariance() == m0.pooled(), "nu = 0 does not reproduce the pooled covariance")?;
    let m1 = lda_train(&classes, Shrinkage::Fixed(1.0)).map_err(|e| e.to_string())?;
    let ridge = DMatrix::<f64>::identity(5, 5) * m1.ridge_scale();
    ensure(m1.covariance() == &ridge, "nu = 1 is not the pure ridge")?;

    // dense oracle on the 3-class, 5-link toy
    let nu = 0.3;
    let m = lda_train(&classes, Shrinkage::Fixed(nu)).map_err(|e| e.to_string())?;
    let as_f = |f: &Vec<RssValue>| f.iter().map(|v| v.dbm().unwrap() as f64).collect::<Vec<f64>>();
    let l = 5;
    let means: Vec<Vec<f64>> = classes
        .iter()
        .map(|c| {
            let mut s = vec![0.0; l];
            for f in c {
                for (a, b) in s.iter_mut().zip(as_f(f)) {
                    *a += b;
                }
            }
            s.iter().map(|v| v / c.len() as f64).collect()
        })
        .collect();
    let total: usize = classes.iter().map(Vec::len).sum();
    let mut pooled = vec![vec![0.0; l]; l];
    for (c, mu) in classes.iter().zip(&means) {
        for f in c {
            let x = as_f(f);
            for i in 0..l {
                for j in 0..l {
                    pooled[i][j] += (x[i] - mu[i]) * (x[j] - mu[j]);
                }
            }
        }
    }
    let dof = (total - (classes.len() - 1)) as f64;
    let rho: f64 = (0..l).map(|i| pooled[i][i] / dof).sum::<f64>() / l as f64;
    let shrunk: Vec<Vec<f64>> = (0..l)
        .map(|i| (0..l).map(|j| (1.0 - nu) * pooled[i][j] / dof + if i == j { nu * rho } else { 0.0 }).collect())
        .collect();
    let inv = gauss_jordan_inverse(&shrunk);
    let mut worst = 0.0f64;
    for probe in classes.iter().flatten().take(20) {
        let r = as_f(probe);
        let got = m.scores(probe).map_err(|e| e.to_string())?;
        for (k, mu) in means.iter().enumerate() {
            let w: Vec<f64> = (0..l).map(|i| (0..l).map(|j| inv[i][j] * mu[j]).sum()).collect();
            let want: f64 = (0..l).map(|i| r[i] * w[i]).sum::<f64>() - 0.5 * (0..l).map(|i| mu[i] * w[i]).sum::<f64>();
            worst = worst.max((got[k] - want).abs() / want.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-9, format!("score deviation {worst:.3e} > 1e-9"))?;

    // held-out accuracy on two separated classes
    let center = |c: usize| DVector::from_vec(if c == 0 { vec![-60.0, -65.0, -70.0, -58.0] } else { vec![-64.0, -61.0, -66.0, -62.0] });
    let draw = |rng: &mut ChaCha8Rng, c: usize| -> Vec<RssValue> {
        center(c)
            .iter()
            .map(|m| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                RssValue::Dbm((m + 2.0 * z).round() as i32)
            })
            .collect()
    };
    let train: Vec<Vec<Vec<RssValue>>> = (0..2).map(|c| (0..50).map(|_| draw(&mut rng, c)).collect()).collect();
    let model = lda_train(&train, Shrinkage::Fixed(0.2)).map_err(|e| e.to_string())?;
    let mut correct = 0;
    let trials = 1000;
    for i in 0..trials {
        let c = i % 2;
        if lda_classify(&draw(&mut rng, c), &model).map_err(|e| e.to_string())? == c {
            correct += 1;
        }
    }
    let acc = correct as f64 / trials as f64;
    ensure(acc >= 0.95, format!("held-out accuracy {:.1}%", acc * 100.0))?;
    Ok(format!("limits exact, score deviation {worst:.2e}, held-out accuracy {:.1}%", acc * 100.0))
}

// ---------------------------------------------------------------- AC11

const SMALL_SCENARIO: &str = r#"
seed = 5
loss_prob = 0.05
empty_room_prologue = true

[site]
name = "small"
channels = [11, 26]
nodes = [
  { id = 0, x = 0.0, y = 0.0 }, { id = 1, x = 1.5, y = 0.0 }, { id = 2, x = 3.0, y = 0.0 },
  { id = 3, x = 3.0, y = 3.0 }, { id = 4, x = 1.5, y = 3.0 }, { id = 5, x = 0.0, y = 3.0 },
]
entrances = [[0.0, 1.5]]
grid = { bounds = { min_x = 0.0, min_y = 0.0, max_x = 3.0, max_y = 3.0 }, spacing_m = 0.5 }

[trajectory]
prologue_s = 5.0
epilogue_s = 3.0
waypoints = [{ x = 0.5, y = 1.5, dwell_s = 4.0 }, { x = 2.5, y = 2.5 }, { x = 2.5, y = 0.5, dwell_s = 2.0 }, { x = 0.5, y = 1.5 }]
"#;

fn ac11_determinism() -> Check {
    let sc = Scenario::from_toml_str(SMALL_SCENARIO).map_err(|e| e.to_string())?;
    let site = sc.site().map_err(|e| e.to_string())?;
    let produce = || -> Result<(String, String, String), String> {
        let trace = sc.simulate(&site).map_err(|e| e.to_string())?;
        let file = sc.to_trace_file(&site, &trace);
        let model = train_spatial_model(&trace.frames, &site, &TrainingSource::Fixed(SpatialParams::new(0.6, 0.3).unwrap()))
            .map_err(|e| e.to_string())?;
        let empty = EmptyRoomMeans::from_frames(file.empty_room_frames(), site.num_links()).map_err(|e| e.to_string())?;
        let calib = Calibrations { model: Some(model), empty_room: Some(empty), fingerprints: None };
        let imaging = Arc::new(
            ImagingModel::new(site.grid(), site.links(), site.deltas(), &site.config().imaging).map_err(|e| e.to_string())?,
        );
        let est = run_method(Method::Hmml, &site, &calib, imaging, NeighborMode::Walls, &trace.frames)
            .map_err(|e| e.to_string())?;
        let series = EstimateSeries { method: "hmml".into(), timestamps: trace.trajectory.timestamps.clone(), estimates: est };
        let truth = trace.trajectory.positions.clone();
        let rep = run_experiment(&site, &calib, &trace.frames, &truth, &Method::ALL, NeighborMode::Walls)
            .map_err(|e| e.to_string())?;
        Ok((file.to_text(), series.to_text(), report::to_text(&rep, false) + &report::to_csv(&rep)))
    };
    let a = produce()?;
    let b = produce()?;
    ensure(a.0 == b.0, "trace bytes differ between identical runs")?;
    ensure(a.1 == b.1, "estimate bytes differ between identical runs")?;
    ensure(a.2 == b.2, "report bytes differ between identical runs")?;
    let parsed = TraceFile::parse(&a.0).map_err(|e| e.to_string())?;
    ensure(parsed.to_text() == a.0, "trace write/read/write is not byte-identical")?;
    let trace = sc.simulate(&site).map_err(|e| e.to_string())?;
    ensure(parsed == sc.to_trace_file(&site, &trace), "trace read does not reproduce the in-memory trace")?;
    let missing = parsed.frames.iter().flat_map(|f| &f.values).filter(|v| v.is_missing()).count();
    let outs = parsed.truth.as_ref().map_or(0, |t| t.iter().filter(|p| p.is_none()).count());
    ensure(missing > 0 && outs > 0, "round-trip sample lacks NA or OUT records")?;
    ensure(EstimateSeries::parse(&a.1).map_err(|e| e.to_string())?.to_text() == a.1, "estimate round-trip differs")?;
    Ok(format!("trace, estimates and report identical; round-trip exact with {missing} NA and {outs} OUT records"))
}

// ---------------------------------------------------------------- harness

fn report(id: u32, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("[PASS] AC{id:<2} {name}: {detail} ({secs:.1} s)");
            true
        }
        Err(detail) => {
            println!("[FAIL] AC{id:<2} {name}: {detail} ({secs:.1} s)");
            false
        }
    }
}

fn main() {
    let mut all = true;
    all &= report(1, "forward-algorithm oracle", ac1_forward_oracle);
    all &= report(2, "likelihood oracle", ac2_likelihood_oracle);
    all &= report(3, "spatial-parameter recovery", ac3_spatial_recovery);
    let desk = build_desk();
    all &= report(4, "closed-loop localization", || ac4_closed_loop(&desk));
    all &= report(5, "stationary person", || ac5_stationary(&desk));
    match shift_run(&desk) {
        Ok(run) => {
            all &= report(6, "continuous recalibration", || ac6_recalibration(&desk, &run));
            all &= report(7, "baseline degradation", || ac7_baseline_degradation(&desk, &run));
        }
        Err(e) => {
            all &= report(6, "continuous recalibration", || Err(e.clone()));
            all &= report(7, "baseline degradation", || Err(e));
        }
    }
    all &= report(8, "distribution and normalization suite", ac8_distributions);
    all &= report(9, "robust estimation", ac9_robust_estimation);
    all &= report(10, "LDA suite", ac10_lda);
    all &= report(11, "determinism and round-trips", ac11_determinism);
    if !all {
        std::process::exit(1);
    }
}
